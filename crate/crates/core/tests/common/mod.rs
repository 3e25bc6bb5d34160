//! Independent reference implementations used as test oracles. Nothing
//! here goes through the tape: plain nested loops over `Vec<f64>`.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triformer_core::tensor::ParamStore;
use triformer_core::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub type Mat = Vec<Vec<f64>>;

pub fn random_mat(r: usize, c: usize, rng: &mut impl Rng) -> Mat {
    (0..r)
        .map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn to_tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

pub fn stack(ms: &[Mat]) -> Tensor {
    let (r, c) = (ms[0].len(), ms[0][0].len());
    let data: Vec<f64> = ms.iter().flat_map(|m| m.iter().flatten().copied()).collect();
    Tensor::new(&[ms.len(), r, c], data).unwrap()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (p, q, r) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), q);
    let mut c = vec![vec![0.0; r]; p];
    for i in 0..p {
        for j in 0..r {
            let mut s = 0.0;
            for k in 0..q {
                s += a[i][k] * b[k][j];
            }
            c[i][j] = s;
        }
    }
    c
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Quadratic self-attention over the rows of `x`, written out longhand.
pub fn canonical_attention(x: &Mat, wq: &Mat, wk: &Mat, wv: &Mat) -> Mat {
    let d = wq.len() as f64;
    let q = matmul(x, wq);
    let k = matmul(x, wk);
    let v = matmul(x, wv);
    let h = x.len();
    let mut out = vec![vec![0.0; v[0].len()]; h];
    for i in 0..h {
        let scores: Vec<f64> = (0..h)
            .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / d.sqrt())
            .collect();
        let w = softmax(&scores);
        for j in 0..h {
            for c in 0..out[i].len() {
                out[i][c] += w[j] * v[j][c];
            }
        }
    }
    out
}

/// One pseudo-timestamp row attending over one variable's patch.
pub fn patch_attention_row(query: &[f64], patch: &Mat, wk: &Mat, wv: &Mat) -> Vec<f64> {
    let d = query.len() as f64;
    let k = matmul(patch, wk);
    let v = matmul(patch, wv);
    let scores: Vec<f64> = k
        .iter()
        .map(|row| row.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() / d.sqrt())
        .collect();
    let w = softmax(&scores);
    let mut out = vec![0.0; v[0].len()];
    for (j, wj) in w.iter().enumerate() {
        for c in 0..out.len() {
            out[c] += wj * v[j][c];
        }
    }
    out
}

/// `tanh(Θ1·prev + b1) ⊙ σ(Θ2·prev + b2) + next` for one row.
pub fn gate_row(prev: &[f64], next: &[f64], t1: &Mat, t2: &Mat, b1: &[f64], b2: &[f64]) -> Vec<f64> {
    let d = prev.len();
    (0..d)
        .map(|i| {
            let mut a = b1[i];
            let mut b = b2[i];
            for j in 0..d {
                a += t1[i][j] * prev[j];
                b += t2[i][j] * prev[j];
            }
            a.tanh() * sigmoid(b) + next[i]
        })
        .collect()
}

/// Result of comparing one coordinate's analytic and numeric gradient.
#[derive(Debug)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn grad_close(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_floor || diff / analytic.abs().max(numeric.abs()) < rel_tol
}

/// Central finite differences for every coordinate of every parameter in
/// `store`, compared against the analytic gradients already accumulated
/// there. `loss` evaluates the objective at the store's current values.
pub fn finite_difference_check(
    store: &mut ParamStore,
    mut loss: impl FnMut(&ParamStore) -> f64,
    step: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> (usize, Vec<GradMismatch>) {
    let mut checked = 0;
    let mut bad = Vec::new();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).numel();
        for i in 0..n {
            let original = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = original + step;
            let plus = loss(store);
            store.get_mut(id).value.data_mut()[i] = original - step;
            let minus = loss(store);
            store.get_mut(id).value.data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = store.grad(id).data()[i];
            checked += 1;
            if !grad_close(analytic, numeric, rel_tol, abs_floor) {
                bad.push(GradMismatch {
                    param: store.get(id).name.clone(),
                    index: i,
                    analytic,
                    numeric,
                });
            }
        }
    }
    (checked, bad)
}

pub fn named(store: &ParamStore, name: &str) -> Tensor {
    let id = store.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
    store.value(id).clone()
}

pub fn mat(t: &Tensor) -> Mat {
    let [r, c] = t.shape()[..] else { panic!("not a matrix: {:?}", t.shape()) };
    (0..r).map(|i| t.data()[i * c..(i + 1) * c].to_vec()).collect()
}

/// Slice `i` of a rank-3 tensor.
pub fn plane(t: &Tensor, i: usize) -> Mat {
    let [_, r, c] = t.shape()[..] else { panic!("not rank 3: {:?}", t.shape()) };
    let base = i * r * c;
    (0..r)
        .map(|j| t.data()[base + j * c..base + (j + 1) * c].to_vec())
        .collect()
}

fn affine_row(x: &[f64], w: &Mat, b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|c| b[c] + x.iter().zip(w).map(|(xi, wr)| xi * wr[c]).sum::<f64>())
        .collect()
}

/// Per-variable key/value matrices of layer `l`, built longhand.
pub fn reference_projections(
    store: &ParamStore,
    cfg: &triformer_core::TriformerConfig,
    l: usize,
    var: usize,
) -> (Mat, Mat) {
    use triformer_core::vsm::GeneratorActivation;
    use triformer_core::VsmMode;
    let p = format!("layer{l}");
    match cfg.vsm {
        VsmMode::Off => (mat(&named(store, &format!("{p}.wk"))), mat(&named(store, &format!("{p}.wv")))),
        VsmMode::Naive => (
            plane(&named(store, &format!("{p}.naive.k")), var),
            plane(&named(store, &format!("{p}.naive.v")), var),
        ),
        VsmMode::Light => {
            let memory = mat(&named(store, "vsm.memory"))[var].clone();
            let a = cfg.a;
            let role = |r: &str| {
                let w = mat(&named(store, &format!("{p}.vsm.{r}.gen.weight")));
                let b = named(store, &format!("{p}.vsm.{r}.gen.bias"));
                let flat = affine_row(&memory, &w, b.data());
                let middle: Mat = (0..a)
                    .map(|i| {
                        (0..a)
                            .map(|j| match cfg.generator_activation {
                                GeneratorActivation::Identity => flat[i * a + j],
                                GeneratorActivation::Tanh => flat[i * a + j].tanh(),
                            })
                            .collect()
                    })
                    .collect();
                let left = mat(&named(store, &format!("{p}.vsm.{r}.left")));
                let right = mat(&named(store, &format!("{p}.vsm.{r}.right")));
                matmul(&matmul(&left, &middle), &right)
            };
            (role("k"), role("v"))
        }
    }
}

/// Scalar-loop forward pass of the whole model for one window
/// `x[var][t]`, reading every parameter by name. Returns `[N][F]`.
pub fn reference_forward(store: &ParamStore, cfg: &triformer_core::TriformerConfig, x: &Mat) -> Mat {
    let d = cfg.d;
    let ew = named(store, "embed.weight");
    let eb = named(store, "embed.bias");
    let mut out = Vec::new();
    for (var, series) in x.iter().enumerate() {
        let mut input: Mat = series
            .iter()
            .enumerate()
            .map(|(t, &v)| {
                (0..d)
                    .map(|c| {
                        let freq = 10000f64.powf((c - c % 2) as f64 / d as f64);
                        let pos = if c % 2 == 0 { (t as f64 / freq).sin() } else { (t as f64 / freq).cos() };
                        v * ew.data()[c] + eb.data()[c] + pos
                    })
                    .collect()
            })
            .collect();
        let mut summaries: Vec<f64> = Vec::new();
        for (l, &s) in cfg.patch_sizes.iter().enumerate() {
            let pre = format!("layer{l}");
            let pseudo = plane(&named(store, &format!("{pre}.pseudo")), var);
            let (wk, wv) = reference_projections(store, cfg, l, var);
            let mut outputs: Mat = Vec::new();
            for (p, q0) in pseudo.iter().enumerate() {
                let mut q = q0.clone();
                if cfg.recurrent && p > 0 {
                    let t1 = mat(&named(store, &format!("{pre}.gate.theta1")));
                    let t2 = mat(&named(store, &format!("{pre}.gate.theta2")));
                    let b1 = named(store, &format!("{pre}.gate.b1"));
                    let b2 = named(store, &format!("{pre}.gate.b2"));
                    q = gate_row(&outputs[p - 1], &q, &t1, &t2, b1.data(), b2.data());
                }
                let patch: Mat = input[p * s..(p + 1) * s].to_vec();
                outputs.push(patch_attention_row(&q, &patch, &wk, &wv));
            }
            if store.find(&format!("{pre}.agg.weight")).is_some() {
                let mut flat: Vec<f64> = outputs.iter().flatten().copied().collect();
                if store.find(&format!("{pre}.agg.hidden.weight")).is_some() {
                    let hw = mat(&named(store, &format!("{pre}.agg.hidden.weight")));
                    let hb = named(store, &format!("{pre}.agg.hidden.bias"));
                    flat = affine_row(&flat, &hw, hb.data()).iter().map(|v| v.tanh()).collect();
                }
                let w = mat(&named(store, &format!("{pre}.agg.weight")));
                let b = named(store, &format!("{pre}.agg.bias"));
                summaries.extend(affine_row(&flat, &w, b.data()));
            }
            input = outputs;
        }
        let w1 = mat(&named(store, "predictor.hidden.weight"));
        let b1 = named(store, "predictor.hidden.bias");
        let w2 = mat(&named(store, "predictor.out.weight"));
        let b2 = named(store, "predictor.out.bias");
        let hidden: Vec<f64> = affine_row(&summaries, &w1, b1.data()).iter().map(|v| v.tanh()).collect();
        out.push(affine_row(&hidden, &w2, b2.data()));
    }
    out
}
