use super::*;
use crate::rng;
use approx::assert_abs_diff_eq;
use rand::Rng as _;

type Build = dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>;

fn random_tensor(r: &mut rng::Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, r)
}

fn loss_of(inputs: &[Tensor<f64>], weights: &[f64], f: &Build) -> (Graph<f64>, Vec<Var>, Var) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let out = f(&mut g, &vars).unwrap();
    let n = g.value(out).len();
    let w = g.constant(g.shape(out).to_vec().as_slice(), weights[..n].to_vec()).unwrap();
    let prod = g.mul(out, w).unwrap();
    let loss = g.sum(prod);
    (g, vars, loss)
}

/// Central finite differences against the tape, on a random linear
/// functional of the op's output so every output element contributes.
fn grad_check(inputs: Vec<Tensor<f64>>, seed: u64, f: &Build) {
    let mut r = rng::stream(seed, "gradcheck-weights");
    let weights: Vec<f64> = (0..4096).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let inputs: Vec<Tensor<f64>> = inputs.into_iter().map(Tensor::requires_grad).collect();
    let (mut g, vars, loss) = loss_of(&inputs, &weights, f);
    g.backward(loss).unwrap();
    let analytic = g.grads_of(&vars);
    let h = 1e-6;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let mut plus = inputs.clone();
            plus[i].data[j] += h;
            let mut minus = inputs.clone();
            minus[i].data[j] -= h;
            let (gp, _, lp) = loss_of(&plus, &weights, f);
            let (gm, _, lm) = loss_of(&minus, &weights, f);
            let numeric = (gp.value(lp)[0] - gm.value(lm)[0]) / (2.0 * h);
            let a = analytic[i][j];
            let diff = (a - numeric).abs();
            assert!(
                diff <= 1e-3 * a.abs().max(numeric.abs()) || diff < 1e-7,
                "seed {seed} input {i} element {j}: analytic {a} numeric {numeric}"
            );
        }
    }
}

fn each_seed(shapes: &[&[usize]], f: &Build) {
    for seed in 0..100 {
        let mut r = rng::stream(seed, "gradcheck-inputs");
        let inputs = shapes.iter().map(|s| random_tensor(&mut r, s)).collect();
        grad_check(inputs, seed, f);
    }
}

#[test]
fn grad_matmul_shared_and_batched() {
    each_seed(&[&[2, 3, 4], &[4, 5]], &|g, v| g.matmul(v[0], v[1]));
    each_seed(&[&[2, 3, 4], &[2, 4, 2]], &|g, v| g.matmul(v[0], v[1]));
}

#[test]
fn grad_elementwise() {
    each_seed(&[&[3, 4], &[3, 4]], &|g, v| g.add(v[0], v[1]));
    each_seed(&[&[3, 4], &[3, 4]], &|g, v| g.sub(v[0], v[1]));
    each_seed(&[&[3, 4], &[3, 4]], &|g, v| g.mul(v[0], v[1]));
    each_seed(&[&[2, 3, 4], &[4]], &|g, v| g.add_bias(v[0], v[1]));
    each_seed(&[&[5]], &|g, v| Ok(g.scale(v[0], -1.7)));
    each_seed(&[&[3, 4]], &|g, v| Ok(g.relu(v[0])));
    each_seed(&[&[3, 4]], &|g, v| Ok(g.sigmoid(v[0])));
}

#[test]
fn grad_softmax_and_layer_norm() {
    each_seed(&[&[2, 3, 5]], &|g, v| g.softmax(v[0]));
    each_seed(&[&[3, 6], &[6], &[6]], &|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5));
}

#[test]
fn grad_reductions() {
    for axis in 0..3 {
        each_seed(&[&[2, 3, 4]], &move |g, v| g.mean_pool(v[0], axis));
    }
    each_seed(&[&[2, 3]], &|g, v| Ok(g.sum(v[0])));
    each_seed(&[&[2, 3]], &|g, v| Ok(g.mean(v[0])));
}

#[test]
fn grad_layout_ops() {
    each_seed(&[&[2, 3, 2], &[2, 3, 4]], &|g, v| g.concat(&[v[0], v[1]], 2));
    each_seed(&[&[2, 3], &[1, 3]], &|g, v| g.concat(&[v[0], v[1]], 0));
    each_seed(&[&[2, 5, 3]], &|g, v| g.slice(v[0], 1, 1, 3));
    each_seed(&[&[2, 3, 4]], &|g, v| g.transpose(v[0]));
    each_seed(&[&[2, 3, 4]], &|g, v| g.reshape(v[0], &[6, 4]));
    each_seed(&[&[2, 3, 4], &[5, 4]], &|g, v| g.embedding_add(v[0], v[1]));
    let mask = [false, true, false, false, true, true];
    each_seed(&[&[2, 2, 3]], &move |g, v| g.masked_fill(v[0], &mask, -3.0));
}

#[test]
fn grad_bce_with_logits() {
    let targets = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    each_seed(&[&[2, 3]], &move |g, v| g.bce_with_logits(v[0], &targets));
}

fn mlp(g: &mut Graph<f64>, v: &[Var]) -> Result<Var> {
    let h1 = g.matmul(v[0], v[1])?;
    let h1 = g.add_bias(h1, v[2])?;
    let h1 = g.relu(h1);
    let h2 = g.matmul(h1, v[3])?;
    let h2 = g.add_bias(h2, v[4])?;
    let h2 = g.sigmoid(h2);
    let out = g.matmul(h2, v[5])?;
    g.add_bias(out, v[6])
}

#[test]
fn grad_three_layer_mlp_all_parameters_and_input() {
    each_seed(&[&[4, 5], &[5, 6], &[6], &[6, 3], &[3], &[3, 1], &[1]], &mlp);
    // and through a logistic loss
    each_seed(&[&[4, 5], &[5, 6], &[6], &[6, 3], &[3], &[3, 1], &[1]], &|g, v| {
        let out = mlp(g, v)?;
        g.bce_with_logits(out, &[1.0, 0.0, 0.0, 1.0])
    });
}

#[test]
fn softmax_uniform_and_stable() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(&[1, 3], vec![0.0; 3]).unwrap();
    let s = g.softmax(x).unwrap();
    for v in g.value(s) {
        assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-7);
    }
    let x = g.constant(&[2, 3], vec![1e4, -1e4, 0.0, -1e4, -1e4, -1e4]).unwrap();
    let s = g.softmax(x).unwrap();
    assert!(g.value(s).iter().all(|v| v.is_finite()));
    assert_eq!(&g.value(s)[..3], &[1.0, 0.0, 0.0]);
}

#[test]
fn softmax_rows_sum_to_one() {
    for seed in 0..20 {
        let mut r = rng::stream(seed, "softmax");
        let t: Tensor<f32> = Tensor::randn(&[4, 7, 9], 5.0, &mut r);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let s = g.softmax(x).unwrap();
        for row in g.value(s).chunks(9) {
            assert_abs_diff_eq!(row.iter().sum::<f32>(), 1.0, epsilon = 1e-5);
        }
    }
}

#[test]
fn matmul_identity() {
    let mut g = Graph::<f64>::new();
    let eye = g.constant(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let a_data: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect();
    let a = g.constant(&[3, 2], a_data.clone()).unwrap();
    let p = g.matmul(eye, a).unwrap();
    assert_eq!(g.value(p), a_data.as_slice());
    assert_eq!(g.shape(p), &[3, 2]);
}

#[test]
fn layer_norm_of_constant_row_is_zero() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(&[2, 4], vec![3.0; 8]).unwrap();
    let gamma = g.constant(&[4], vec![1.0; 4]).unwrap();
    let beta = g.constant(&[4], vec![0.0; 4]).unwrap();
    let y = g.layer_norm(x, gamma, beta, 1e-5).unwrap();
    assert!(g.value(y).iter().all(|v| *v == 0.0));
}

#[test]
fn layer_norm_standardizes_rows() {
    let mut r = rng::stream(3, "ln");
    let t: Tensor<f64> = Tensor::randn(&[5, 16], 3.0, &mut r);
    let mut g = Graph::new();
    let x = g.leaf(&t);
    let gamma = g.constant(&[16], vec![1.0; 16]).unwrap();
    let beta = g.constant(&[16], vec![0.0; 16]).unwrap();
    let y = g.layer_norm(x, gamma, beta, 0.0).unwrap();
    for row in g.value(y).chunks(16) {
        let mu = row.iter().sum::<f64>() / 16.0;
        let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 16.0;
        assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-9);
    }
}

#[test]
fn simple_gradients() {
    let mut g = Graph::<f32>::new();
    let x = g.variable(&[2], vec![1.0, 2.0]).unwrap();
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);

    let mut g = Graph::<f32>::new();
    let x = g.variable(&[2], vec![1.0, 2.0]).unwrap();
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
}

#[test]
fn backward_twice_is_an_error() {
    let mut g = Graph::<f32>::new();
    let x = g.variable(&[2], vec![1.0, 2.0]).unwrap();
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert!(matches!(g.backward(s), Err(Error::TapeConsumed)));
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::<f32>::new();
    let x = g.variable(&[2], vec![1.0, 2.0]).unwrap();
    assert!(g.backward(x).is_err());
}

#[test]
fn shape_errors_name_the_op() {
    let mut g = Graph::<f32>::new();
    let a = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let b = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let msg = g.matmul(a, b).unwrap_err().to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
    let c = g.constant(&[3, 2], vec![0.0; 6]).unwrap();
    assert!(g.add(a, c).unwrap_err().to_string().contains("add"));
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.variable(&[2], vec![1.0, 2.0]).unwrap();
    let c = g.constant(&[2], vec![3.0, 4.0]).unwrap();
    let p = g.mul(x, c).unwrap();
    let s = g.sum(p);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[3.0, 4.0]);
    assert!(g.grad(c).is_none());
}

fn store() -> ParamStore<f32> {
    let mut p = ParamStore::new();
    p.insert("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
    p
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let mut p = store();
    let before = p.clone();
    let mut adam = Adam::new(AdamConfig::default(), &p);
    adam.step(&mut p, &[vec![0.0; 3]]).unwrap();
    assert_eq!(p, before);
    assert!(adam.m[0].iter().all(|m| *m == 0.0));
}

#[test]
fn adam_first_step_matches_hand_computation() {
    let mut p = store();
    let cfg = AdamConfig { lr: 0.1, ..Default::default() };
    let mut adam = Adam::new(cfg, &p);
    let g = [0.5f32, -2.0, 1e-3];
    adam.step(&mut p, &[g.to_vec()]).unwrap();
    // bias-corrected moments equal g and g^2 after one step
    let w0 = [1.0f64, -2.0, 0.5];
    for i in 0..3 {
        let gi = g[i] as f64;
        let expected = w0[i] - 0.1 * gi / (gi.abs() + 1e-8);
        assert_abs_diff_eq!(p.get("w").unwrap().data[i] as f64, expected, epsilon = 1e-6);
    }
    // moments decay on a following zero-gradient step
    let m1 = adam.m[0].clone();
    adam.step(&mut p, &[vec![0.0; 3]]).unwrap();
    for (a, b) in adam.m[0].iter().zip(&m1) {
        assert_abs_diff_eq!(*a, 0.9 * b, epsilon = 1e-15);
    }
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut p = store();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for k in 0..10 {
            let g: Vec<f32> = (0..3).map(|i| ((i + k) as f32).sin()).collect();
            adam.step(&mut p, &[g]).unwrap();
        }
        (p, adam)
    };
    assert_eq!(run(), run());
}

#[test]
fn param_store_binding_order() {
    let mut p = ParamStore::<f32>::new();
    p.insert("a", Tensor::zeros(&[2]));
    p.insert("b", Tensor::zeros(&[3, 1]));
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    assert_eq!(g.shape(vars[1]), &[3, 1]);
    assert_eq!(p.n_values(), 5);
    assert_eq!(p.index_of("b"), Some(1));
}
