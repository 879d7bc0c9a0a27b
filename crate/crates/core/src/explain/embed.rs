use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::pca::{sparse_pca, SparsePca};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::SubjectDataset;
use crate::transformer::Transformer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Mean over time: one `E` vector per subject.
    Mean,
    /// Every token's state, flattened to `T·E` per subject.
    Tokens,
    /// Mean-pooled state minus the state with species `d` set to its
    /// training mean; isolates what that input channel contributes.
    Species(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub layer: String,
    pub pooling: Pooling,
    /// Dataset index of each row.
    pub sample_ids: Vec<usize>,
    /// Vectors per row: `E`, or `T·E` for token pooling.
    pub vectors: Array2<f64>,
    pub projection: Option<SparsePca>,
}

impl EmbeddingSet {
    /// Fit a two-component sparse PCA on the vectors.
    pub fn project(&mut self, penalty: f64) -> Result<&SparsePca> {
        self.projection = Some(sparse_pca(self.vectors.view(), 2, penalty)?);
        Ok(self.projection.as_ref().expect("just set"))
    }

    /// CSV `sample,pc1,pc2[,label]` of the projected scores.
    pub fn scores_csv(&self, labels: Option<&[u8]>) -> Option<String> {
        let p = self.projection.as_ref()?;
        let mut out = String::from(if labels.is_some() { "sample,pc1,pc2,label\n" } else { "sample,pc1,pc2\n" });
        for (r, &id) in self.sample_ids.iter().enumerate() {
            out.push_str(&format!("{id},{},{}", p.scores[[r, 0]], p.scores[[r, 1]]));
            if let Some(l) = labels {
                out.push_str(&format!(",{}", l[id]));
            }
            out.push('\n');
        }
        Some(out)
    }
}

/// Name of the last block's output, the default embedding layer.
pub fn default_layer(n_layer: usize) -> String {
    if n_layer == 0 {
        "embed".into()
    } else {
        format!("block.{}", n_layer - 1)
    }
}

/// Hidden states of `layer` for the subjects `rows`.
pub fn extract_embeddings<S: Scalar>(
    model: &Transformer<S>,
    dataset: &SubjectDataset,
    rows: &[usize],
    layer: &str,
    pooling: Pooling,
) -> Result<EmbeddingSet> {
    let n = dataset.n_subjects();
    if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
        return Err(Error::OutOfRange { index: bad, len: n });
    }
    let states = model.hidden_states(dataset.x.view(), rows, layer)?;
    let (b, t, e) = states.dim();
    let vectors = match pooling {
        Pooling::Mean => states.mean_axis(Axis(1)).expect("t >= 1"),
        Pooling::Tokens => states.into_shape_with_order((b, t * e)).expect("contiguous"),
        Pooling::Species(d) => {
            if d >= dataset.n_species() {
                return Err(Error::OutOfRange { index: d, len: dataset.n_species() });
            }
            let mut masked = dataset.x.select(Axis(0), rows);
            masked.index_axis_mut(Axis(2), d).fill(model.scaler.mean[d]);
            let local: Vec<usize> = (0..rows.len()).collect();
            let without = model.hidden_states(masked.view(), &local, layer)?;
            (states - without).mean_axis(Axis(1)).expect("t >= 1")
        }
    };
    Ok(EmbeddingSet { layer: layer.to_string(), pooling, sample_ids: rows.to_vec(), vectors, projection: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    /// Position along the segment: 0 at `a`, 1 at `b`.
    pub alpha: f64,
    pub interpolant: Vec<f64>,
    /// `(row, distance)` of the nearest vectors, closest first.
    pub neighbors: Vec<(usize, f64)>,
}

/// Equally spaced points on the segment between rows `a` and `b` (endpoints
/// included when `n_points >= 2`), each with its `k` nearest rows.
pub fn interpolation_probe(vectors: ArrayView2<'_, f64>, a: usize, b: usize, n_points: usize, k: usize) -> Result<Vec<ProbePoint>> {
    let n = vectors.nrows();
    for i in [a, b] {
        if i >= n {
            return Err(Error::OutOfRange { index: i, len: n });
        }
    }
    if n_points == 0 || k == 0 {
        return Err(Error::InvalidArgument("n_points and k must be positive".into()));
    }
    let (va, vb) = (vectors.row(a), vectors.row(b));
    Ok((0..n_points)
        .map(|p| {
            let alpha = if n_points == 1 { 0.5 } else { p as f64 / (n_points - 1) as f64 };
            let interpolant: Vec<f64> = va.iter().zip(vb).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect();
            let mut dist: Vec<(usize, f64)> = vectors
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, r)| (i, r.iter().zip(&interpolant).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()))
                .collect();
            dist.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
            dist.truncate(k);
            ProbePoint { alpha, interpolant, neighbors: dist }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SimConfig};
    use crate::transformer::{Mode, TransformerConfig};

    fn setup() -> (Transformer<f64>, SubjectDataset) {
        let ds = simulate(&SimConfig {
            n_subjects: 12,
            n_timepoints: 6,
            n_species: 8,
            n_communities: 3,
            tukey_window: 3,
            n_clusters: 3,
            n_disease_clusters: 1,
            ..Default::default()
        })
        .unwrap();
        let cfg = TransformerConfig { n_embd: 8, n_positions: 6, n_layer: 2, n_head: 2, mlp_width: 8, ..Default::default() };
        (Transformer::new(cfg, Mode::Plain).unwrap(), ds)
    }

    #[test]
    fn shapes_by_pooling() {
        let (m, ds) = setup();
        let rows = [0, 3, 5];
        assert_eq!(extract_embeddings(&m, &ds, &rows, "block.1", Pooling::Mean).unwrap().vectors.dim(), (3, 8));
        assert_eq!(extract_embeddings(&m, &ds, &rows, "block.1", Pooling::Tokens).unwrap().vectors.dim(), (3, 48));
        assert_eq!(extract_embeddings(&m, &ds, &rows, "block.0", Pooling::Species(2)).unwrap().vectors.dim(), (3, 8));
        assert!(matches!(extract_embeddings(&m, &ds, &rows, "block.2", Pooling::Mean), Err(Error::UnknownLayer(_))));
        assert!(extract_embeddings(&m, &ds, &[12], "embed", Pooling::Mean).is_err());
        assert_eq!(default_layer(2), "block.1");
    }

    #[test]
    fn identical_subjects_share_embeddings() {
        let (m, mut ds) = setup();
        let first = ds.x.index_axis(Axis(0), 0).to_owned();
        ds.x.index_axis_mut(Axis(0), 1).assign(&first);
        let e = extract_embeddings(&m, &ds, &[0, 1], "block.1", Pooling::Mean).unwrap();
        assert_eq!(e.vectors.row(0), e.vectors.row(1));
    }

    #[test]
    fn identical_rows_do_not_project() {
        let (m, mut ds) = setup();
        let first = ds.x.index_axis(Axis(0), 0).to_owned();
        for i in 1..4 {
            ds.x.index_axis_mut(Axis(0), i).assign(&first);
        }
        let mut e = extract_embeddings(&m, &ds, &[0, 1, 2, 3], "block.1", Pooling::Mean).unwrap();
        assert!(matches!(e.project(0.0), Err(Error::DegenerateCovariance)));
    }

    #[test]
    fn projection_and_scores_csv() {
        let (m, ds) = setup();
        let rows: Vec<usize> = (0..12).collect();
        let mut e = extract_embeddings(&m, &ds, &rows, "block.1", Pooling::Mean).unwrap();
        assert!(e.scores_csv(None).is_none());
        e.project(0.1).unwrap();
        let csv = e.scores_csv(Some(&ds.y)).unwrap();
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.starts_with("sample,pc1,pc2,label\n0,"));
    }

    #[test]
    fn probe_endpoints_and_midpoints() {
        let v = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 10.0, 10.0]).unwrap();
        let p = interpolation_probe(v.view(), 0, 2, 5, 1).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p[0].neighbors, vec![(0, 0.0)]);
        assert_eq!(p[4].neighbors, vec![(2, 0.0)]);
        assert_eq!(p[2].neighbors, vec![(1, 0.0)]);
        let same = interpolation_probe(v.view(), 3, 3, 3, 2).unwrap();
        assert!(same.iter().all(|q| q.neighbors[0] == (3, 0.0)));
        assert!(matches!(interpolation_probe(v.view(), 0, 4, 3, 1), Err(Error::OutOfRange { index: 4, len: 4 })));
    }
}
