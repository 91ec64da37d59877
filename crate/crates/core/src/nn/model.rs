use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::layer::{resolve, Activation, LayerSpec, Op, ResolvedLayer};
use super::params::{ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// A feed-forward network: architecture, flat parameters and the seed the
/// parameters were initialized from.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    params: ParamVector,
    rng_seed: u64,
    plan: Vec<ResolvedLayer>,
}

/// Output of [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Pre-softmax outputs of the final layer, `(batch, classes)`.
    pub logits: Tensor,
    /// Post-activation output of every layer, in layer order.
    pub activations: Option<Vec<Tensor>>,
}

struct Trace {
    /// `outputs[i]` is the post-activation output of layer `i`.
    outputs: Vec<Vec<f64>>,
    logits: Vec<f64>,
    /// Flat input index chosen by each pooling output, per pooling layer.
    pool_argmax: Vec<Option<Vec<usize>>>,
}

impl Model {
    /// Builds a model and initializes its parameters from `seed`: Kaiming-uniform
    /// weights for hidden layers, Xavier-uniform for the output layer, zero biases.
    pub fn new(input_shape: Vec<usize>, specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let (plan, layout) = resolve(&input_shape, &specs)?;
        let mut params = ParamVector::zeros(layout);
        let last = plan.len() - 1;
        let mut rng = rng::stream(seed, &[0x1417]);
        for (i, layer) in plan.iter().enumerate() {
            let (Some(p), Some((fan_in, fan_out))) = (layer.param, layer.fans()) else {
                continue;
            };
            let bound = if i == last {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let weight_len = params.layout().entries()[p].weight_len;
            for w in &mut params.layer_mut(p)[..weight_len] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(Self {
            input_shape,
            specs,
            params,
            rng_seed: seed,
            plan,
        })
    }

    /// Rebuilds a model around existing parameters.
    pub fn from_parts(input_shape: Vec<usize>, specs: Vec<LayerSpec>, params: ParamVector, rng_seed: u64) -> Result<Self> {
        let (plan, layout) = resolve(&input_shape, &specs)?;
        if params.layout() != &layout {
            return Err(Error::Layout("parameters do not match the architecture".into()));
        }
        Ok(Self {
            input_shape,
            specs,
            params,
            rng_seed,
            plan,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn layout(&self) -> &ParamLayout {
        self.params.layout()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_classes(&self) -> usize {
        self.plan.last().map_or(0, |l| l.out_len())
    }

    /// Output shape of every layer, per sample.
    pub fn layer_output_shapes(&self) -> Vec<Vec<usize>> {
        self.plan.iter().map(|l| l.out_shape.clone()).collect()
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        self.params.ensure_same_layout(&params)?;
        self.params = params;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// Same architecture, different parameters.
    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(params)?;
        Ok(m)
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        if batch.shape().len() != self.input_shape.len() + 1 || batch.shape()[1..] != self.input_shape[..] {
            let mut expected = vec![batch.shape().first().copied().unwrap_or(0)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::InputShape {
                expected,
                actual: batch.shape().to_vec(),
            });
        }
        Ok(batch.rows())
    }

    pub fn forward(&self, batch: &Tensor, capture_activations: bool) -> Result<ForwardOutput> {
        let n = self.check_batch(batch)?;
        let trace = self.trace(batch.data(), n);
        let classes = self.num_classes();
        let activations = capture_activations.then(|| {
            trace
                .outputs
                .iter()
                .zip(&self.plan)
                .map(|(out, layer)| {
                    let mut shape = vec![n];
                    shape.extend_from_slice(&layer.out_shape);
                    Tensor::new(shape, out.clone()).expect("layer output matches its shape")
                })
                .collect()
        });
        Ok(ForwardOutput {
            logits: Tensor::new(vec![n, classes], trace.logits).expect("logits match class count"),
            activations,
        })
    }

    fn trace(&self, input: &[f64], n: usize) -> Trace {
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.plan.len());
        let mut pool_argmax = Vec::with_capacity(self.plan.len());
        let mut logits = Vec::new();
        let last = self.plan.len() - 1;
        for (i, layer) in self.plan.iter().enumerate() {
            let x: &[f64] = if i == 0 { input } else { &outputs[i - 1] };
            let mut argmax = None;
            let mut z = match layer.op {
                Op::Dense { inputs, outputs: outs } => {
                    let p = self.params.layer(layer.param.expect("dense owns params"));
                    dense_forward(p, inputs, outs, x, n)
                }
                Op::Conv2d { .. } => {
                    let p = self.params.layer(layer.param.expect("conv owns params"));
                    conv_forward(&layer.op, p, x, n)
                }
                Op::MaxPool2d { .. } => {
                    let (out, idx) = pool_forward(&layer.op, x, n);
                    argmax = Some(idx);
                    out
                }
                Op::Flatten => x.to_vec(),
            };
            if i == last {
                logits = z.clone();
            }
            apply_activation(layer.activation, &mut z, layer.out_len());
            outputs.push(z);
            pool_argmax.push(argmax);
        }
        Trace {
            outputs,
            logits,
            pool_argmax,
        }
    }

    /// Mean cross-entropy of `softmax(logits)` against `labels`, and its gradient
    /// with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &Tensor, labels: &[usize]) -> Result<(f64, ParamVector)> {
        let n = self.check_batch(batch)?;
        self.check_labels(labels, n)?;
        let trace = self.trace(batch.data(), n);
        let classes = self.num_classes();

        let (loss, mut upstream) = softmax_cross_entropy(&trace.logits, labels, classes);
        let mut grads = ParamVector::zeros(self.params.layout().clone());

        for i in (0..self.plan.len()).rev() {
            let layer = &self.plan[i];
            // `upstream` holds dL/d(output of layer i); turn it into dL/d(pre-activation).
            if i != self.plan.len() - 1 && layer.activation == Activation::Relu {
                for (g, &a) in upstream.iter_mut().zip(&trace.outputs[i]) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let x: &[f64] = if i == 0 { batch.data() } else { &trace.outputs[i - 1] };
            let need_input_grad = i > 0;
            upstream = match layer.op {
                Op::Dense { inputs, outputs } => {
                    let p = layer.param.expect("dense owns params");
                    dense_backward(self.params.layer(p), grads.layer_mut(p), inputs, outputs, x, &upstream, n, need_input_grad)
                }
                Op::Conv2d { .. } => {
                    let p = layer.param.expect("conv owns params");
                    conv_backward(&layer.op, self.params.layer(p), grads.layer_mut(p), x, &upstream, n, need_input_grad)
                }
                Op::MaxPool2d { .. } => {
                    let idx = trace.pool_argmax[i].as_ref().expect("pool records argmax");
                    let mut dx = vec![0.0; layer.in_len() * n];
                    for (&j, &g) in idx.iter().zip(&upstream) {
                        dx[j] += g;
                    }
                    dx
                }
                Op::Flatten => upstream,
            };
        }
        Ok((loss, grads))
    }

    fn check_labels(&self, labels: &[usize], n: usize) -> Result<()> {
        if labels.len() != n {
            return Err(Error::Consistency(format!("{} labels for a batch of {n}", labels.len())));
        }
        let classes = self.num_classes();
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label {
                label,
                num_classes: classes,
            });
        }
        Ok(())
    }

    /// Mean cross-entropy loss and accuracy, evaluated in chunks of `chunk` rows.
    pub fn evaluate(&self, features: &Tensor, labels: &[usize], chunk: usize) -> Result<(f64, f64)> {
        let n = self.check_batch(features)?;
        self.check_labels(labels, n)?;
        let classes = self.num_classes();
        let width = features.row_len();
        let chunk = chunk.max(1);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for start in (0..n).step_by(chunk) {
            let end = (start + chunk).min(n);
            let rows = end - start;
            let trace = self.trace(&features.data()[start * width..end * width], rows);
            for r in 0..rows {
                let z = &trace.logits[r * classes..(r + 1) * classes];
                let y = labels[start + r];
                loss_sum += log_sum_exp(z) - z[y];
                if argmax(z) == y {
                    correct += 1;
                }
            }
        }
        Ok((loss_sum / n as f64, correct as f64 / n as f64))
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax in place.
pub fn softmax_rows(values: &mut [f64], width: usize) {
    for row in values.chunks_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn apply_activation(act: Activation, values: &mut [f64], width: usize) {
    match act {
        Activation::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Softmax => softmax_rows(values, width),
        Activation::None => {}
    }
}

/// Mean loss and dL/dlogits.
fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut grad = logits.to_vec();
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let z = &logits[r * classes..(r + 1) * classes];
        loss += log_sum_exp(z) - z[y];
    }
    softmax_rows(&mut grad, classes);
    for (r, &y) in labels.iter().enumerate() {
        grad[r * classes + y] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}

fn dense_forward(p: &[f64], inputs: usize, outputs: usize, x: &[f64], n: usize) -> Vec<f64> {
    let (w, b) = p.split_at(inputs * outputs);
    let mut z = vec![0.0; n * outputs];
    for s in 0..n {
        let xs = &x[s * inputs..(s + 1) * inputs];
        for o in 0..outputs {
            let row = &w[o * inputs..(o + 1) * inputs];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(xs) {
                acc += wi * xi;
            }
            z[s * outputs + o] = acc;
        }
    }
    z
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    p: &[f64],
    g: &mut [f64],
    inputs: usize,
    outputs: usize,
    x: &[f64],
    dz: &[f64],
    n: usize,
    need_input_grad: bool,
) -> Vec<f64> {
    let (w, _) = p.split_at(inputs * outputs);
    let (gw, gb) = g.split_at_mut(inputs * outputs);
    let mut dx = if need_input_grad { vec![0.0; n * inputs] } else { Vec::new() };
    for s in 0..n {
        let xs = &x[s * inputs..(s + 1) * inputs];
        for o in 0..outputs {
            let d = dz[s * outputs + o];
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            let grow = &mut gw[o * inputs..(o + 1) * inputs];
            for (gi, xi) in grow.iter_mut().zip(xs) {
                *gi += d * xi;
            }
            if need_input_grad {
                let row = &w[o * inputs..(o + 1) * inputs];
                let dxs = &mut dx[s * inputs..(s + 1) * inputs];
                for (dxi, wi) in dxs.iter_mut().zip(row) {
                    *dxi += d * wi;
                }
            }
        }
    }
    dx
}

fn conv_forward(op: &Op, p: &[f64], x: &[f64], n: usize) -> Vec<f64> {
    let Op::Conv2d {
        in_c,
        in_h,
        in_w,
        out_c,
        k,
        stride,
        out_h,
        out_w,
    } = *op
    else {
        unreachable!()
    };
    let (w, b) = p.split_at(out_c * in_c * k * k);
    let in_len = in_c * in_h * in_w;
    let plane = out_h * out_w;
    let mut z = vec![0.0; n * out_c * plane];
    for s in 0..n {
        let xs = &x[s * in_len..(s + 1) * in_len];
        for oc in 0..out_c {
            let zo = &mut z[(s * out_c + oc) * plane..(s * out_c + oc + 1) * plane];
            zo.iter_mut().for_each(|v| *v = b[oc]);
            for ic in 0..in_c {
                let xc = &xs[ic * in_h * in_w..(ic + 1) * in_h * in_w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = w[((oc * in_c + ic) * k + ky) * k + kx];
                        for oy in 0..out_h {
                            let xrow = &xc[(oy * stride + ky) * in_w + kx..];
                            let zrow = &mut zo[oy * out_w..(oy + 1) * out_w];
                            for (ox, zv) in zrow.iter_mut().enumerate() {
                                *zv += wv * xrow[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    z
}

fn conv_backward(op: &Op, p: &[f64], g: &mut [f64], x: &[f64], dz: &[f64], n: usize, need_input_grad: bool) -> Vec<f64> {
    let Op::Conv2d {
        in_c,
        in_h,
        in_w,
        out_c,
        k,
        stride,
        out_h,
        out_w,
    } = *op
    else {
        unreachable!()
    };
    let (w, _) = p.split_at(out_c * in_c * k * k);
    let (gw, gb) = g.split_at_mut(out_c * in_c * k * k);
    let in_len = in_c * in_h * in_w;
    let plane = out_h * out_w;
    let mut dx = if need_input_grad { vec![0.0; n * in_len] } else { Vec::new() };
    for s in 0..n {
        let xs = &x[s * in_len..(s + 1) * in_len];
        for oc in 0..out_c {
            let dzo = &dz[(s * out_c + oc) * plane..(s * out_c + oc + 1) * plane];
            gb[oc] += dzo.iter().sum::<f64>();
            for ic in 0..in_c {
                let base = ic * in_h * in_w;
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((oc * in_c + ic) * k + ky) * k + kx;
                        let wv = w[widx];
                        let mut acc = 0.0;
                        for oy in 0..out_h {
                            let row_start = base + (oy * stride + ky) * in_w + kx;
                            let drow = &dzo[oy * out_w..(oy + 1) * out_w];
                            for (ox, &d) in drow.iter().enumerate() {
                                acc += d * xs[row_start + ox * stride];
                            }
                            if need_input_grad {
                                let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                                for (ox, &d) in drow.iter().enumerate() {
                                    dxs[row_start + ox * stride] += d * wv;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    dx
}

fn pool_forward(op: &Op, x: &[f64], n: usize) -> (Vec<f64>, Vec<usize>) {
    let Op::MaxPool2d {
        c,
        in_h,
        in_w,
        size,
        out_h,
        out_w,
    } = *op
    else {
        unreachable!()
    };
    let in_len = c * in_h * in_w;
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    let mut idx = Vec::with_capacity(n * c * out_h * out_w);
    for s in 0..n {
        for ch in 0..c {
            let base = s * in_len + ch * in_h * in_w;
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut best = base + oy * size * in_w + ox * size;
                    for dy in 0..size {
                        for dx in 0..size {
                            let j = base + (oy * size + dy) * in_w + ox * size + dx;
                            if x[j] > x[best] {
                                best = j;
                            }
                        }
                    }
                    out.push(x[best]);
                    idx.push(best);
                }
            }
        }
    }
    (out, idx)
}

/// Draws a random parameter vector for `model`'s layout; used by tests and fixtures.
pub fn random_params<R: Rng>(layout: &ParamLayout, scale: f64, rng: &mut R) -> ParamVector {
    let dist = Uniform::new_inclusive(-scale, scale).expect("finite scale");
    let values = (0..layout.total_len()).map(|_| dist.sample(rng)).collect();
    ParamVector::new(values, layout.clone()).expect("layout is contiguous")
}
