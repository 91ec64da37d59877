use serde::{Deserialize, Serialize};

use super::params::{LayoutEntry, ParamLayout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softmax,
    #[default]
    None,
}

/// One entry of an architecture description.
///
/// Convolutions use valid padding. Max pooling uses non-overlapping windows
/// and drops trailing rows/columns that do not fill a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        out_features: usize,
        #[serde(default)]
        activation: Activation,
    },
    Conv2d {
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        #[serde(default)]
        activation: Activation,
    },
    MaxPool2d {
        size: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn dense(out_features: usize, activation: Activation) -> Self {
        LayerSpec::Dense {
            out_features,
            activation,
        }
    }

    pub fn conv2d(out_channels: usize, kernel_size: usize, stride: usize, activation: Activation) -> Self {
        LayerSpec::Conv2d {
            out_channels,
            kernel_size,
            stride,
            activation,
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => activation,
            LayerSpec::MaxPool2d { .. } | LayerSpec::Flatten => Activation::None,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Op {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        out_h: usize,
        out_w: usize,
    },
    MaxPool2d {
        c: usize,
        in_h: usize,
        in_w: usize,
        size: usize,
        out_h: usize,
        out_w: usize,
    },
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ResolvedLayer {
    pub op: Op,
    pub activation: Activation,
    pub out_shape: Vec<usize>,
    /// Index into the parameter layout, for layers that own parameters.
    pub param: Option<usize>,
}

impl ResolvedLayer {
    pub fn in_len(&self) -> usize {
        match self.op {
            Op::Dense { inputs, .. } => inputs,
            Op::Conv2d { in_c, in_h, in_w, .. } => in_c * in_h * in_w,
            Op::MaxPool2d { c, in_h, in_w, .. } => c * in_h * in_w,
            Op::Flatten => self.out_len(),
        }
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }

    /// (fan_in, fan_out) of the weight tensor.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match self.op {
            Op::Dense { inputs, outputs } => Some((inputs, outputs)),
            Op::Conv2d { in_c, out_c, k, .. } => Some((in_c * k * k, out_c * k * k)),
            _ => None,
        }
    }
}

/// Checks the architecture invariants and computes every layer's geometry
/// together with the parameter layout.
pub(crate) fn resolve(input_shape: &[usize], specs: &[LayerSpec]) -> Result<(Vec<ResolvedLayer>, ParamLayout)> {
    let arch = |msg: String| Error::Architecture(msg);
    if specs.is_empty() {
        return Err(arch("no layers".into()));
    }
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(arch(format!("invalid input shape {input_shape:?}")));
    }
    let last = specs.len() - 1;
    if !matches!(specs[last], LayerSpec::Dense { .. }) {
        return Err(arch("the final layer must be dense".into()));
    }

    let mut shape = input_shape.to_vec();
    let mut flattened = false;
    let mut layers = Vec::with_capacity(specs.len());
    let mut entries = Vec::new();
    let mut offset = 0;

    for (index, spec) in specs.iter().enumerate() {
        if spec.activation() == Activation::Softmax && index != last {
            return Err(arch(format!("softmax on layer {index}; only the final layer may use it")));
        }
        let (op, out_shape) = match *spec {
            LayerSpec::Dense { out_features, .. } => {
                if shape.len() != 1 {
                    return Err(arch(format!("dense layer {index} needs a flat input, got {shape:?}")));
                }
                if out_features == 0 {
                    return Err(arch(format!("dense layer {index} has zero outputs")));
                }
                (
                    Op::Dense {
                        inputs: shape[0],
                        outputs: out_features,
                    },
                    vec![out_features],
                )
            }
            LayerSpec::Conv2d {
                out_channels,
                kernel_size,
                stride,
                ..
            } => {
                if flattened || shape.len() != 3 {
                    return Err(arch(format!(
                        "conv layer {index} needs a (channels, height, width) input before flatten, got {shape:?}"
                    )));
                }
                let (in_c, in_h, in_w) = (shape[0], shape[1], shape[2]);
                if out_channels == 0 || kernel_size == 0 || stride == 0 || kernel_size > in_h || kernel_size > in_w {
                    return Err(arch(format!("conv layer {index} does not fit input {shape:?}")));
                }
                let out_h = (in_h - kernel_size) / stride + 1;
                let out_w = (in_w - kernel_size) / stride + 1;
                (
                    Op::Conv2d {
                        in_c,
                        in_h,
                        in_w,
                        out_c: out_channels,
                        k: kernel_size,
                        stride,
                        out_h,
                        out_w,
                    },
                    vec![out_channels, out_h, out_w],
                )
            }
            LayerSpec::MaxPool2d { size } => {
                if flattened || shape.len() != 3 {
                    return Err(arch(format!("max-pool layer {index} needs a spatial input, got {shape:?}")));
                }
                let (c, in_h, in_w) = (shape[0], shape[1], shape[2]);
                if size == 0 || size > in_h || size > in_w {
                    return Err(arch(format!("max-pool layer {index} does not fit input {shape:?}")));
                }
                let (out_h, out_w) = (in_h / size, in_w / size);
                (
                    Op::MaxPool2d {
                        c,
                        in_h,
                        in_w,
                        size,
                        out_h,
                        out_w,
                    },
                    vec![c, out_h, out_w],
                )
            }
            LayerSpec::Flatten => {
                flattened = true;
                (Op::Flatten, vec![shape.iter().product()])
            }
        };

        let mut resolved = ResolvedLayer {
            op,
            activation: spec.activation(),
            out_shape: out_shape.clone(),
            param: None,
        };
        if let Some((fan_in, _)) = resolved.fans() {
            let out_units = match resolved.op {
                Op::Dense { outputs, .. } => outputs,
                Op::Conv2d { out_c, .. } => out_c,
                _ => unreachable!(),
            };
            let weight_len = fan_in * out_units;
            let len = weight_len + out_units;
            resolved.param = Some(entries.len());
            entries.push(LayoutEntry {
                layer_index: index,
                offset,
                len,
                weight_len,
            });
            offset += len;
        }
        layers.push(resolved);
        shape = out_shape;
    }

    Ok((layers, ParamLayout::new(entries)))
}
