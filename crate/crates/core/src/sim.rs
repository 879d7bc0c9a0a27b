//! Synthetic longitudinal multi-species trajectories with known structure.
//!
//! Each of `K` latent communities owns a `T × D` trajectory matrix whose
//! columns are either low-level noise or a monotone increase, a monotone
//! decrease, or a sum of localized blooms. Subjects observe a Dirichlet
//! mixture of the communities; labels come from clustering the mixture
//! weights and assigning half of the clusters to the disease class.

use ndarray::{Array2, Array3, Axis};
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Fraction of subjects assigned to the training split.
pub const TRAIN_FRACTION: f64 = 0.75;

const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub n_timepoints: usize,
    pub n_species: usize,
    pub n_communities: usize,
    /// Dirichlet concentration of the increment weights of monotone trajectories.
    pub lambda_u: f64,
    /// Taper fraction `r` of the Tukey window.
    pub tukey_bandwidth: f64,
    /// Tukey window length `L` (odd).
    pub tukey_window: usize,
    /// Poisson mean of the number of blooms in a bloom column.
    pub lambda_bloom: f64,
    /// Dirichlet concentration of the subject mixture weights.
    pub lambda_theta: f64,
    pub n_clusters: usize,
    pub n_disease_clusters: usize,
    /// A concept is active when its mixture weight exceeds this threshold.
    pub concept_threshold: f64,
    /// Upper bound of the uniform noise columns.
    pub noise_high: f64,
    /// Probabilities of (noise, increase, decrease, bloom) columns.
    pub kind_probs: [f64; 4],
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_subjects: 500,
            n_timepoints: 50,
            n_species: 144,
            n_communities: 25,
            lambda_u: 0.3,
            tukey_bandwidth: 0.9,
            tukey_window: 9,
            lambda_bloom: 2.0,
            lambda_theta: 0.5,
            n_clusters: 24,
            n_disease_clusters: 12,
            concept_threshold: 0.1,
            noise_high: 0.01,
            kind_probs: [0.7, 0.1, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_subjects == 0
            || self.n_timepoints == 0
            || self.n_species == 0
            || self.n_communities == 0
            || self.n_clusters == 0
        {
            return fail("all counts must be positive");
        }
        if self.n_timepoints < 3 {
            return fail("n_timepoints must be at least 3");
        }
        if self.tukey_window % 2 == 0 {
            return fail("tukey_window must be odd");
        }
        if self.n_timepoints < 2 * self.tukey_window {
            // bloom centres are drawn from [L, T - L]
            return fail("n_timepoints must be at least twice the tukey_window");
        }
        if !(0.0..=1.0).contains(&self.tukey_bandwidth) {
            return fail("tukey_bandwidth must lie in [0, 1]");
        }
        if self.n_disease_clusters > self.n_clusters {
            return fail("n_disease_clusters must not exceed n_clusters");
        }
        if !(self.lambda_u > 0.0 && self.lambda_bloom > 0.0 && self.lambda_theta > 0.0) {
            return fail("lambda_u, lambda_bloom and lambda_theta must be positive");
        }
        if !(self.concept_threshold > 0.0 && self.concept_threshold < 1.0) {
            return fail("concept_threshold must lie in (0, 1)");
        }
        if !(self.noise_high >= 0.0) {
            return fail("noise_high must be nonnegative");
        }
        if self.kind_probs.iter().any(|p| !(*p >= 0.0))
            || (self.kind_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return fail("kind_probs must be nonnegative and sum to 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Noise,
    Increase,
    Decrease,
    Bloom,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::Noise, Kind::Increase, Kind::Decrease, Kind::Bloom];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Noise => "noise",
            Kind::Increase => "increase",
            Kind::Decrease => "decrease",
            Kind::Bloom => "bloom",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BloomCenter {
    pub community: usize,
    pub species: usize,
    /// Zero-based time index of the window centre.
    pub time: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDictionary {
    /// `K × T × D` community trajectories.
    pub entries: Array3<f64>,
    /// `K × D` column kinds.
    pub kinds: Array2<Kind>,
    pub bloom_centers: Vec<BloomCenter>,
}

impl TrajectoryDictionary {
    pub fn n_communities(&self) -> usize {
        self.entries.len_of(Axis(0))
    }

    pub fn kind_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for k in &self.kinds {
            counts[k.index()] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Generative state that a real study would not observe.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `N × K` mixture weights.
    pub theta: Array2<f64>,
    pub cluster_id: Vec<usize>,
    /// Whether each cluster was assigned to the disease class.
    pub disease_clusters: Vec<bool>,
    pub dictionary: TrajectoryDictionary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDataset {
    pub config: SimConfig,
    /// `N × T × D` observed abundances.
    pub x: Array3<f64>,
    /// 0 = healthy, 1 = disease.
    pub y: Vec<u8>,
    /// `N × K` binary concept annotations.
    pub concepts: Array2<u8>,
    pub split: Vec<Split>,
    pub truth: Option<GroundTruth>,
}

impl SubjectDataset {
    pub fn n_subjects(&self) -> usize {
        self.x.len_of(Axis(0))
    }

    pub fn n_timepoints(&self) -> usize {
        self.x.len_of(Axis(1))
    }

    pub fn n_species(&self) -> usize {
        self.x.len_of(Axis(2))
    }

    pub fn indices_of(&self, which: Split) -> Vec<usize> {
        (0..self.n_subjects()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices_of(Split::Train)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        self.indices_of(Split::Val)
    }

    pub fn disease_fraction(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.y.len().max(1) as f64
    }

    /// Subjects `rows` in the given order; ground truth is carried along.
    pub fn subset(&self, rows: &[usize]) -> SubjectDataset {
        let truth = self.truth.as_ref().map(|t| GroundTruth {
            theta: t.theta.select(Axis(0), rows),
            cluster_id: rows.iter().map(|&i| t.cluster_id[i]).collect(),
            disease_clusters: t.disease_clusters.clone(),
            dictionary: t.dictionary.clone(),
        });
        let mut config = self.config.clone();
        config.n_subjects = rows.len();
        SubjectDataset {
            config,
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            concepts: self.concepts.select(Axis(0), rows),
            split: rows.iter().map(|&i| self.split[i]).collect(),
            truth,
        }
    }
}

/// Monotone nondecreasing trajectory from increment weights: cumulative sum
/// rescaled to sum to `len`.
pub fn increase_from_weights(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let cum: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    renormalize(cum)
}

fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    let scale = v.len() as f64 / total;
    for x in &mut v {
        *x *= scale;
    }
    v
}

fn dirichlet<R: rand::Rng + ?Sized>(rng: &mut R, alpha: f64, len: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let g: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 && total.is_finite() {
            return g.into_iter().map(|x| x / total).collect();
        }
    }
}

pub fn sample_increase<R: rand::Rng + ?Sized>(rng: &mut R, len: usize, lambda_u: f64) -> Vec<f64> {
    increase_from_weights(&dirichlet(rng, lambda_u, len))
}

/// Time reversal of [`sample_increase`] on the same stream.
pub fn sample_decrease<R: rand::Rng + ?Sized>(rng: &mut R, len: usize, lambda_u: f64) -> Vec<f64> {
    let mut v = sample_increase(rng, len, lambda_u);
    v.reverse();
    v
}

/// Tapered-cosine window of length `len` with taper fraction `r`.
/// `r = 0` is rectangular, `r = 1` is a Hann window.
pub fn tukey_window(len: usize, r: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let x = n as f64 / m;
            if r <= 0.0 {
                1.0
            } else if x < r / 2.0 {
                0.5 * (1.0 + (std::f64::consts::PI * (2.0 * x / r - 1.0)).cos())
            } else if x <= 1.0 - r / 2.0 {
                1.0
            } else {
                0.5 * (1.0 + (std::f64::consts::PI * (2.0 * x / r - 2.0 / r + 1.0)).cos())
            }
        })
        .collect()
}

/// Sum of Tukey windows centred at `centers`, rescaled to sum to `len`.
/// `window` must be odd so each kernel keeps a unit centre weight.
pub fn bloom_from_centers(len: usize, centers: &[usize], window: usize, r: f64) -> Vec<f64> {
    let kernel = tukey_window(window, r);
    let half = (window / 2) as isize;
    let mut v = vec![0.0; len];
    for &c in centers {
        for (n, w) in kernel.iter().enumerate() {
            let t = c as isize + n as isize - half;
            if (0..len as isize).contains(&t) {
                v[t as usize] += w;
            }
        }
    }
    renormalize(v)
}

/// Bloom trajectory and its window centres. Draws with zero blooms are
/// repeated, so at least one bloom is always present.
pub fn sample_bloom<R: rand::Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    lambda_bloom: f64,
    r: f64,
    window: usize,
) -> (Vec<f64>, Vec<usize>) {
    let poisson = Poisson::new(lambda_bloom).expect("positive rate");
    let n_bloom = loop {
        let n = poisson.sample(rng) as usize;
        if n > 0 {
            break n;
        }
    };
    let centers: Vec<usize> = (0..n_bloom).map(|_| rng.random_range(window..=len - window)).collect();
    (bloom_from_centers(len, &centers, window, r), centers)
}

pub fn sample_dictionary<R: rand::Rng + ?Sized>(rng: &mut R, config: &SimConfig) -> TrajectoryDictionary {
    let (k_n, t_n, d_n) = (config.n_communities, config.n_timepoints, config.n_species);
    let mut entries = Array3::<f64>::zeros((k_n, t_n, d_n));
    let mut kinds = Array2::from_elem((k_n, d_n), Kind::Noise);
    let mut bloom_centers = Vec::new();
    let cum: Vec<f64> = config
        .kind_probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();

    for k in 0..k_n {
        for d in 0..d_n {
            let u: f64 = rng.random();
            let kind = Kind::ALL
                .into_iter()
                .zip(&cum)
                .find(|(_, c)| u < **c)
                .map(|(k, _)| k)
                // u can reach the last cumulative value only through rounding
                .unwrap_or_else(|| {
                    *Kind::ALL
                        .iter()
                        .rev()
                        .zip(config.kind_probs.iter().rev())
                        .find(|(_, p)| **p > 0.0)
                        .map(|(k, _)| k)
                        .unwrap_or(&Kind::Noise)
                });
            kinds[[k, d]] = kind;
            let column: Vec<f64> = match kind {
                Kind::Noise => (0..t_n).map(|_| rng.random::<f64>() * config.noise_high).collect(),
                Kind::Increase => sample_increase(rng, t_n, config.lambda_u),
                Kind::Decrease => sample_decrease(rng, t_n, config.lambda_u),
                Kind::Bloom => {
                    let (v, centers) = sample_bloom(
                        rng,
                        t_n,
                        config.lambda_bloom,
                        config.tukey_bandwidth,
                        config.tukey_window,
                    );
                    bloom_centers.extend(centers.into_iter().map(|time| BloomCenter {
                        community: k,
                        species: d,
                        time,
                    }));
                    v
                }
            };
            for (t, v) in column.into_iter().enumerate() {
                entries[[k, t, d]] = v;
            }
        }
    }
    TrajectoryDictionary { entries, kinds, bloom_centers }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding. Returns one cluster id per row.
/// An emptied cluster is reseeded with the point farthest from its centre.
pub fn kmeans<R: rand::Rng + ?Sized>(rng: &mut R, points: &Array2<f64>, k: usize, max_iter: usize) -> Vec<usize> {
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    let k = k.min(n).max(1);

    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.push(rows[pick].clone());
        for (i, p) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let dim = points.ncols();
    let mut assign: Vec<usize> = rows.iter().map(|p| nearest(p, &centers).0).collect();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in rows.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let (far, dist) = rows
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centers[assign[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                if dist > 0.0 {
                    centers[c] = rows[far].clone();
                    counts[assign[far]] -= 1;
                    assign[far] = c;
                    counts[c] = 1;
                }
            }
        }
        let next: Vec<usize> = rows.iter().map(|p| nearest(p, &centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

/// Draw subjects from an existing dictionary. Streams are derived from
/// `config.seed` under the purposes `theta`, `kmeans`, `labels`, `split`.
pub fn sample_subjects(dictionary: &TrajectoryDictionary, config: &SimConfig) -> SubjectDataset {
    let n = config.n_subjects;
    let k_n = dictionary.n_communities();
    let (_, t_n, d_n) = dictionary.entries.dim();

    let mut theta_rng = rng::stream(config.seed, "theta");
    let mut theta = Array2::<f64>::zeros((n, k_n));
    for i in 0..n {
        for (k, w) in dirichlet(&mut theta_rng, config.lambda_theta, k_n).into_iter().enumerate() {
            theta[[i, k]] = w;
        }
    }

    let flat = dictionary
        .entries
        .view()
        .into_shape_with_order((k_n, t_n * d_n))
        .expect("contiguous dictionary");
    let x = theta
        .dot(&flat)
        .into_shape_with_order((n, t_n, d_n))
        .expect("mixture shape");

    let cluster_id = kmeans(&mut rng::stream(config.seed, "kmeans"), &theta, config.n_clusters, KMEANS_MAX_ITER);

    let mut label_rng = rng::stream(config.seed, "labels");
    let mut order: Vec<usize> = (0..config.n_clusters).collect();
    shuffle(&mut label_rng, &mut order);
    let mut disease_clusters = vec![false; config.n_clusters];
    for &c in &order[..config.n_disease_clusters] {
        disease_clusters[c] = true;
    }
    let y: Vec<u8> = cluster_id.iter().map(|&c| disease_clusters[c] as u8).collect();

    let concepts = theta.mapv(|w| (w > config.concept_threshold) as u8);

    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(&mut rng::stream(config.seed, "split"), &mut perm);
    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let mut split = vec![Split::Val; n];
    for &i in &perm[..n_train] {
        split[i] = Split::Train;
    }

    SubjectDataset {
        config: config.clone(),
        x,
        y,
        concepts,
        split,
        truth: Some(GroundTruth { theta, cluster_id, disease_clusters, dictionary: dictionary.clone() }),
    }
}

/// Fisher-Yates shuffle.
pub fn shuffle<T, R: rand::Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Generate a complete dataset from `config`.
pub fn simulate(config: &SimConfig) -> Result<SubjectDataset> {
    config.validate()?;
    let dictionary = sample_dictionary(&mut rng::stream(config.seed, "dictionary"), config);
    Ok(sample_subjects(&dictionary, config))
}
