//! Randomized invariants over the public API.

use glassbench::explain::{integrated_gradients, LinearLogit};
use glassbench::featurize::{trend_feature, Standardization};
use glassbench::glassbox::stratified_folds;
use glassbench::metrics::spearman;
use glassbench::rng::stream;
use glassbench::sim::{bloom_from_centers, increase_from_weights, sample_increase, tukey_window};
use glassbench::tensor::Graph;
use ndarray::Array2;
use proptest::prelude::*;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

/// `sum(sigmoid(layer_norm(x W)) * c)` on a small graph, returning the value
/// and the gradient with respect to `x`.
fn composite(x: &[f64], w: &[f64], c: &[f64], rows: usize, cols: usize) -> (f64, Vec<f64>) {
    let mut g = Graph::<f64>::new();
    let xv = g.variable(&[rows, cols], x.to_vec()).unwrap();
    let wv = g.constant(&[cols, cols], w.to_vec()).unwrap();
    let gamma = g.constant(&[cols], vec![1.3; cols]).unwrap();
    let beta = g.constant(&[cols], vec![-0.2; cols]).unwrap();
    let cv = g.constant(&[rows, cols], c.to_vec()).unwrap();
    let h = g.matmul(xv, wv).unwrap();
    let h = g.layer_norm(h, gamma, beta, 1e-5).unwrap();
    let h = g.sigmoid(h);
    let h = g.mul(h, cv).unwrap();
    let loss = g.sum(h);
    g.backward(loss).unwrap();
    (g.value(loss)[0], g.grad(xv).unwrap().to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..5, cols in 1usize..7, seed in any::<u64>()) {
        let data: Vec<f64> = {
            use rand::Rng;
            let mut r = stream(seed, "softmax");
            (0..rows * cols).map(|_| r.random_range(-40.0..40.0)).collect()
        };
        let mut g = Graph::<f64>::new();
        let a = g.constant(&[rows, cols], data).unwrap();
        let s = g.softmax(a).unwrap();
        for row in g.value(s).chunks(cols) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_gradient_matches_central_differences(
        x in values(12), w in values(16), c in values(12)
    ) {
        let (rows, cols) = (3, 4);
        let (_, grad) = composite(&x, &w, &c, rows, cols);
        let h = 1e-6;
        for k in 0..x.len() {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (composite(&up, &w, &c, rows, cols).0 - composite(&dn, &w, &c, rows, cols).0) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() <= 1e-5 * (1.0 + fd.abs()), "entry {}: {} vs {}", k, grad[k], fd);
        }
    }

    #[test]
    fn increasing_trajectories_are_monotone_and_sum_to_length(len in 2usize..30, alpha in 0.05f64..5.0, seed in any::<u64>()) {
        let v = sample_increase(&mut stream(seed, "increase"), len, alpha);
        prop_assert_eq!(v.len(), len);
        prop_assert!(v.windows(2).all(|p| p[1] >= p[0]));
        prop_assert!((v.iter().sum::<f64>() - len as f64).abs() < 1e-9 * len as f64);
    }

    #[test]
    fn increase_is_invariant_to_weight_scale(w in prop::collection::vec(0.01f64..1.0, 2..20), scale in 0.1f64..100.0) {
        let a = increase_from_weights(&w);
        let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
        let b = increase_from_weights(&scaled);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-9 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn tukey_window_is_bounded_and_symmetric(len in 1usize..40, r in 0.0f64..1.0) {
        let w = tukey_window(len, r);
        prop_assert!(w.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        for i in 0..len {
            prop_assert!((w[i] - w[len - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn blooms_are_nonnegative_and_sum_to_length(len in 10usize..40, centre in 0usize..10, half in 0usize..5, r in 0.0f64..=1.0) {
        let v = bloom_from_centers(len, &[centre], 2 * half + 1, r);
        prop_assert!(v.iter().all(|&x| x >= 0.0));
        prop_assert!((v.iter().sum::<f64>() - len as f64).abs() < 1e-9 * len as f64);
    }

    #[test]
    fn linear_ig_equals_weight_times_displacement(
        w in values(12), x in values(12), x0 in values(12), steps in 1usize..50
    ) {
        let m = LinearLogit { shape: (3, 4), w: w.clone(), bias: 0.7 };
        let a = integrated_gradients(&m, 0, &x, 1, &x0, "custom", steps).unwrap();
        for (k, v) in a.values.iter().enumerate() {
            prop_assert!((v - w[k] * (x[k] - x0[k])).abs() < 1e-12);
        }
        prop_assert!(a.completeness_gap.unwrap() < 1e-10);
        // class 0 attributions are the negation
        let b = integrated_gradients(&m, 0, &x, 0, &x0, "custom", steps).unwrap();
        prop_assert!(a.values.iter().zip(b.values.iter()).all(|(p, q)| (p + q).abs() < 1e-12));
    }

    #[test]
    fn standardization_round_trips(data in values(24), scale in 0.1f64..50.0) {
        let x = Array2::from_shape_vec((6, 4), data.iter().map(|v| v * scale).collect()).unwrap();
        let rows: Vec<usize> = (0..6).collect();
        let s = Standardization::fit(x.view(), &rows);
        let z = s.apply(x.view()).unwrap();
        for (j, col) in z.columns().into_iter().enumerate() {
            if s.zero_variance[j] {
                continue;
            }
            let m = col.sum() / 6.0;
            let v = col.mapv(|c| (c - m).powi(2)).sum() / 6.0;
            prop_assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        }
        let back = s.invert(z.view());
        prop_assert!(back.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-9 * (1.0 + b.abs())));
    }

    #[test]
    fn trend_is_the_slope_of_a_line(slope in -5.0f64..5.0, icept in -5.0f64..5.0, len in 3usize..30) {
        let x: Vec<f64> = (0..len).map(|t| icept + slope * t as f64).collect();
        prop_assert!((trend_feature(&x) - slope).abs() < 1e-9);
    }

    #[test]
    fn spearman_is_one_under_monotone_maps(a in prop::collection::vec(-100.0f64..100.0, 3..30)) {
        let distinct = a.iter().enumerate().all(|(i, x)| a[..i].iter().all(|y| y != x));
        prop_assume!(distinct);
        let b: Vec<f64> = a.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        prop_assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|v| -v.exp().min(1e30)).collect();
        let r = spearman(&a, &c).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
    }

    #[test]
    fn stratified_folds_balance_classes(n1 in 5usize..40, n0 in 5usize..40, k in 2usize..5, seed in any::<u64>()) {
        let y: Vec<u8> = (0..n0 + n1).map(|i| (i < n1) as u8).collect();
        let x = Array2::from_shape_fn((y.len(), 1), |(i, _)| i as f64);
        let folds = stratified_folds(x.view(), &y, k, seed).unwrap();
        for f in 0..k {
            let ones = y.iter().zip(&folds).filter(|(c, g)| **c == 1 && **g == f).count();
            let zeros = y.iter().zip(&folds).filter(|(c, g)| **c == 0 && **g == f).count();
            prop_assert!(ones.abs_diff(n1 / k) <= 1 && zeros.abs_diff(n0 / k) <= 1);
        }
    }
}
