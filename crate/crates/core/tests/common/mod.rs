//! Independent oracles shared by the integration and acceptance tests. None of
//! these call into the code paths they check beyond plain loss evaluation.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use shiftleak::nn::{Activation, LayerSpec, Model, ParamVector};
use shiftleak::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn loss_at(model: &Model, params: &ParamVector, x: &Tensor, y: &[usize]) -> f64 {
    let m = model.with_params(params.clone()).unwrap();
    let (loss, _) = m.evaluate(x, y, usize::MAX).unwrap();
    loss
}

/// ReLU on/off pattern and pooling window winners, from captured activations.
pub fn activation_pattern(model: &Model, x: &Tensor) -> Vec<usize> {
    let acts = model.forward(x, true).unwrap().activations.unwrap();
    let mut pattern = Vec::new();
    for (i, spec) in model.layers().iter().enumerate() {
        match spec {
            LayerSpec::MaxPool2d { size } => {
                let input = if i == 0 { x } else { &acts[i - 1] };
                let s = input.shape();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let d = input.data();
                for b in 0..n {
                    for ch in 0..c {
                        for oy in 0..h / size {
                            for ox in 0..w / size {
                                let mut best = (0, f64::NEG_INFINITY);
                                for dy in 0..*size {
                                    for dx in 0..*size {
                                        let v = d[((b * c + ch) * h + oy * size + dy) * w + ox * size + dx];
                                        if v > best.1 {
                                            best = (dy * size + dx, v);
                                        }
                                    }
                                }
                                pattern.push(best.0);
                            }
                        }
                    }
                }
            }
            s if s.activation() == Activation::Relu => {
                pattern.extend(acts[i].data().iter().map(|&a| usize::from(a > 0.0)));
            }
            _ => {}
        }
    }
    pattern
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Relative error with a floor on the denominator so that components that are
/// zero up to rounding are compared on an absolute 1e-9 scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Central finite differences of the mean cross-entropy, compared with
/// `Model::loss_and_grad`. Coordinates whose perturbation flips a ReLU or a
/// pooling winner are skipped, since the loss is not differentiable there.
pub fn grad_check(model: &Model, x: &Tensor, y: &[usize], h: f64) -> GradCheck {
    let (_, analytic) = model.loss_and_grad(x, y).unwrap();
    let base_pattern = activation_pattern(model, x);
    let mut out = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for i in 0..model.num_params() {
        let mut plus = model.params().clone();
        plus.values_mut()[i] += h;
        let mut minus = model.params().clone();
        minus.values_mut()[i] -= h;
        let mp = model.with_params(plus.clone()).unwrap();
        let mm = model.with_params(minus.clone()).unwrap();
        if activation_pattern(&mp, x) != base_pattern || activation_pattern(&mm, x) != base_pattern {
            out.skipped_kinks += 1;
            continue;
        }
        let numeric = (loss_at(model, &plus, x, y) - loss_at(model, &minus, x, y)) / (2.0 * h);
        out.max_rel_err = out.max_rel_err.max(rel_err(analytic.values()[i], numeric));
        out.checked += 1;
    }
    out
}

/// Straight-line forward pass for dense-only nets: returns every layer's
/// post-activation output and the final logits.
pub fn dense_forward_oracle(model: &Model, x: &Tensor) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x.rows();
    let mut input = x.data().to_vec();
    let mut width = x.row_len();
    let mut outputs = Vec::new();
    let mut logits = Vec::new();
    let layers = model.layers();
    for (p, (i, spec)) in layers.iter().enumerate().filter(|(_, s)| s.has_params()).enumerate() {
        let LayerSpec::Dense { out_features, activation } = *spec else {
            panic!("dense-only oracle")
        };
        let params = model.params().layer(p);
        let mut z = vec![0.0; n * out_features];
        for s in 0..n {
            for o in 0..out_features {
                let mut acc = params[out_features * width + o];
                for k in 0..width {
                    acc += params[o * width + k] * input[s * width + k];
                }
                z[s * out_features + o] = acc;
            }
        }
        if i == layers.len() - 1 {
            logits = z.clone();
        }
        match activation {
            Activation::Relu => z.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0
                }
            }),
            Activation::Softmax => {
                for s in 0..n {
                    let row = &mut z[s * out_features..(s + 1) * out_features];
                    let m = row.iter().cloned().fold(f64::MIN, f64::max);
                    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
                    let sum: f64 = e.iter().sum();
                    for (r, ev) in row.iter_mut().zip(e) {
                        *r = ev / sum;
                    }
                }
            }
            Activation::None => {}
        }
        outputs.push(z.clone());
        input = z;
        width = out_features;
    }
    (outputs, logits)
}

/// Cosine similarity with explicit loops.
pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Frobenius distance, optionally after scaling each input to unit norm.
pub fn procrustes_oracle(a: &[f64], b: &[f64], normalized: bool) -> f64 {
    let (mut na, mut nb) = (1.0, 1.0);
    if normalized {
        na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] / na - b[i] / nb;
        s += d * d;
    }
    s.sqrt()
}

/// Central moment discrepancy of two `rows x cols` sample matrices with
/// explicit loops: the mean gap plus the gaps of central moments 2..=k.
pub fn cmd_oracle(a: &[f64], b: &[f64], rows_a: usize, rows_b: usize, cols: usize, k: usize) -> f64 {
    let moment = |x: &[f64], rows: usize, col: usize, order: usize| -> f64 {
        let mut mean = 0.0;
        for r in 0..rows {
            mean += x[r * cols + col];
        }
        mean /= rows as f64;
        if order == 1 {
            return mean;
        }
        let mut acc = 0.0;
        for r in 0..rows {
            acc += (x[r * cols + col] - mean).powi(order as i32);
        }
        acc / rows as f64
    };
    let mut total = 0.0;
    for order in 1..=k {
        let mut sq = 0.0;
        for c in 0..cols {
            let d = moment(a, rows_a, c, order) - moment(b, rows_b, c, order);
            sq += d * d;
        }
        total += sq.sqrt();
    }
    total
}

/// Closed-form least-squares line through `(x, y)` from the normal equations.
pub fn ols_oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (intercept, slope)
}
