use ndarray::{ArrayView2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{cell_importance, integrated_gradients, model_input, Baseline};
use crate::glassbox::accuracy;
use crate::rng;
use crate::sim::{shuffle, SubjectDataset};
use crate::transformer::{train, Mode, Transformer, TransformerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub method: String,
    pub q: f64,
    pub n_cells: usize,
    pub n_masked: usize,
    /// Accuracy of the model trained on unmasked data.
    pub reference_accuracy: f64,
    pub guided_accuracy: f64,
    pub random_accuracy: f64,
    pub guided_drop: f64,
    pub random_drop: f64,
    /// `guided_drop - random_drop`; positive when the attributions found cells
    /// the retrained model misses more than random ones.
    pub gap: f64,
    pub seed: u64,
}

/// The `round(q · T · D)` most important cells. Ties are broken by a seeded
/// random order, so a constant importance map yields a random mask.
pub fn top_q_mask(importance: ArrayView2<'_, f64>, q: f64, seed: u64) -> Vec<(usize, usize)> {
    let (t, d) = importance.dim();
    let k = (q * (t * d) as f64).round() as usize;
    let mut tie_rank: Vec<usize> = (0..t * d).collect();
    shuffle(&mut rng::stream(seed, "ablation-ties"), &mut tie_rank);
    let mut cells: Vec<(usize, usize)> = (0..t).flat_map(|i| (0..d).map(move |j| (i, j))).collect();
    cells.sort_by(|a, b| {
        importance[[b.0, b.1]].total_cmp(&importance[[a.0, a.1]]).then(tie_rank[a.0 * d + a.1].cmp(&tie_rank[b.0 * d + b.1]))
    });
    cells.truncate(k);
    cells.sort();
    cells
}

/// `n` distinct cells drawn uniformly from a `t × d` grid.
pub fn random_mask(t: usize, d: usize, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut r = rng::stream(seed, "ablation-random-mask");
    let mut cells: Vec<(usize, usize)> = sample(&mut r, t * d, n.min(t * d)).into_iter().map(|c| (c / d, c % d)).collect();
    cells.sort();
    cells
}

/// Copy of `dataset` with the masked cells of every subject set to the
/// species' training mean (zero in standardized units).
pub fn apply_mask(dataset: &SubjectDataset, cells: &[(usize, usize)]) -> SubjectDataset {
    let train = dataset.train_indices();
    let fill: Vec<f64> = (0..dataset.n_species())
        .map(|d| {
            let col = dataset.x.select(Axis(0), &train);
            col.index_axis(Axis(2), d).mean().unwrap_or(0.0)
        })
        .collect();
    let mut out = dataset.clone();
    for mut subject in out.x.axis_iter_mut(Axis(0)) {
        for &(t, d) in cells {
            subject[[t, d]] = fill[d];
        }
    }
    out
}

/// Mask the top-`q` cells of `importance` and an equally sized random set,
/// retrain on each masked copy, and compare the accuracy drops.
pub fn ablation_benchmark(
    dataset: &SubjectDataset,
    importance: ArrayView2<'_, f64>,
    method: &str,
    q: f64,
    reference_accuracy: f64,
    seed: u64,
    mut retrain: impl FnMut(&SubjectDataset) -> Result<f64>,
) -> Result<AblationRecord> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("masking fraction q = {q} must be in (0, 1)")));
    }
    let (t, d) = importance.dim();
    if (t, d) != (dataset.n_timepoints(), dataset.n_species()) {
        return Err(Error::shape("ablation_benchmark", format!("importance is {t}x{d}, data is {}x{}", dataset.n_timepoints(), dataset.n_species())));
    }
    let guided = top_q_mask(importance, q, seed);
    let random = random_mask(t, d, guided.len(), seed);
    debug_assert_eq!(guided.len(), random.len());
    let guided_accuracy = retrain(&apply_mask(dataset, &guided))?;
    let random_accuracy = retrain(&apply_mask(dataset, &random))?;
    let guided_drop = reference_accuracy - guided_accuracy;
    let random_drop = reference_accuracy - random_accuracy;
    Ok(AblationRecord {
        method: method.to_string(),
        q,
        n_cells: t * d,
        n_masked: guided.len(),
        reference_accuracy,
        guided_accuracy,
        random_accuracy,
        guided_drop,
        random_drop,
        gap: guided_drop - random_drop,
        seed,
    })
}

/// Integrated-gradients ablation for a trained transformer: attributions of
/// the class-1 logit on every validation subject, then retraining with
/// `config` on the masked copies.
pub fn transformer_ablation(
    model: &Transformer<f32>,
    dataset: &SubjectDataset,
    mode: Mode,
    config: &TransformerConfig,
    q: f64,
    n_steps: usize,
) -> Result<AblationRecord> {
    let val = dataset.val_indices();
    let baseline = Baseline::Zero.resolve(model, dataset)?;
    let mut attributions = Vec::with_capacity(val.len());
    for &i in &val {
        let x = model_input(model, dataset, i)?;
        attributions.push(integrated_gradients(model, i, &x, 1, &baseline, "zero", n_steps)?);
    }
    let importance = cell_importance(&attributions)?;
    let val_accuracy = |m: &Transformer<f32>, ds: &SubjectDataset| -> Result<f64> {
        let p = m.predict_proba_rows(ds.x.view(), &val)?;
        let pred: Vec<u8> = p.iter().map(|&v| (v > 0.5) as u8).collect();
        let y: Vec<u8> = val.iter().map(|&i| ds.y[i]).collect();
        Ok(accuracy(&pred, &y))
    };
    let reference = val_accuracy(model, dataset)?;
    ablation_benchmark(dataset, importance.view(), "integrated_gradients", q, reference, config.seed, |masked| {
        let retrained = train::<f32>(mode, masked, config)?;
        val_accuracy(&retrained.model, masked)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SimConfig};
    use ndarray::Array2;

    fn ds() -> SubjectDataset {
        simulate(&SimConfig { n_subjects: 40, n_timepoints: 10, n_species: 6, n_communities: 4, tukey_window: 3, n_clusters: 4, n_disease_clusters: 2, ..Default::default() }).unwrap()
    }

    #[test]
    fn top_cells_are_the_largest() {
        let imp = Array2::from_shape_fn((4, 5), |(t, d)| (t * 5 + d) as f64);
        let m = top_q_mask(imp.view(), 0.1, 0);
        assert_eq!(m, vec![(3, 3), (3, 4)]);
        assert!(top_q_mask(imp.view(), 0.01, 0).is_empty());
        // a constant map is a seeded random draw
        let flat = Array2::<f64>::ones((10, 10));
        let a = top_q_mask(flat.view(), 0.2, 1);
        assert_eq!(a.len(), 20);
        assert_eq!(a, top_q_mask(flat.view(), 0.2, 1));
        assert_ne!(a, top_q_mask(flat.view(), 0.2, 2));
        assert_ne!(a, (0..2).flat_map(|t| (0..10).map(move |d| (t, d))).collect::<Vec<_>>());
    }

    #[test]
    fn random_mask_has_requested_size() {
        let m = random_mask(10, 6, 7, 1);
        assert_eq!(m.len(), 7);
        let mut u = m.clone();
        u.dedup();
        assert_eq!(u.len(), 7);
        assert_eq!(m, random_mask(10, 6, 7, 1));
    }

    #[test]
    fn masking_sets_training_means() {
        let d = ds();
        let masked = apply_mask(&d, &[(2, 3)]);
        let v = masked.x[[0, 2, 3]];
        assert!(masked.x.index_axis(Axis(1), 2).index_axis(Axis(1), 3).iter().all(|x| *x == v));
        assert_eq!(masked.x[[0, 1, 3]], d.x[[0, 1, 3]]);
    }

    #[test]
    fn controls_use_equal_cell_counts() {
        let d = ds();
        let imp = Array2::from_shape_fn((10, 6), |(t, _)| t as f64);
        let mut sizes = Vec::new();
        let rec = ablation_benchmark(&d, imp.view(), "test", 0.2, 0.8, 0, |m| {
            let changed = m.x.iter().zip(d.x.iter()).filter(|(a, b)| a != b).count();
            sizes.push(changed);
            Ok(0.5)
        })
        .unwrap();
        assert_eq!(sizes, vec![12 * 40; 2]);
        assert_eq!(rec.n_masked, 12);
        assert_eq!(rec.gap, 0.0);
        assert!((rec.guided_drop - 0.3).abs() < 1e-12);
        assert!(ablation_benchmark(&d, imp.view(), "test", 1.0, 0.8, 0, |_| Ok(0.0)).is_err());
        assert!(ablation_benchmark(&d, Array2::zeros((3, 3)).view(), "test", 0.1, 0.8, 0, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn tiny_q_changes_nothing() {
        let d = ds();
        let imp = Array2::from_shape_fn((10, 6), |(t, d)| (t + d) as f64);
        let rec = ablation_benchmark(&d, imp.view(), "test", 1e-4, 0.7, 0, |m| Ok(if m.x == d.x { 0.7 } else { 0.0 })).unwrap();
        assert_eq!(rec.n_masked, 0);
        assert_eq!((rec.guided_drop, rec.random_drop), (0.0, 0.0));
    }
}
