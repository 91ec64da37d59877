use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Model, ParamVector};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoKind {
    Weights,
    Representations,
    Gradients,
}

impl InfoKind {
    pub const ALL: [InfoKind; 3] = [InfoKind::Weights, InfoKind::Representations, InfoKind::Gradients];

    pub fn as_str(self) -> &'static str {
        match self {
            InfoKind::Weights => "weights",
            InfoKind::Representations => "representations",
            InfoKind::Gradients => "gradients",
        }
    }
}

impl fmt::Display for InfoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for InfoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InfoKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Consistency(format!("unknown info kind {s:?}")))
    }
}

/// One layer's slice of an info vector, viewed as `rows` samples of `cols`
/// coordinates stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoBlock {
    /// Index of the layer in the model's layer list.
    pub layer_index: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl InfoBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// What the attacker extracted from the shared model in one round.
///
/// Weights and gradients have one block per parameterized layer with one
/// scalar per row. Representations have one block per parameterized layer
/// holding `probe samples x neurons`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerInfoVector {
    pub kind: InfoKind,
    pub round: usize,
    values: Vec<f64>,
    blocks: Vec<InfoBlock>,
}

impl AttackerInfoVector {
    pub fn new(kind: InfoKind, round: usize, values: Vec<f64>, blocks: Vec<InfoBlock>) -> Result<Self> {
        let mut next = 0;
        for b in &blocks {
            if b.offset != next || b.is_empty() {
                return Err(Error::Layout("info blocks must be contiguous and non-empty".into()));
            }
            next += b.len();
        }
        if next != values.len() {
            return Err(Error::Layout(format!("blocks cover {next} values, vector has {}", values.len())));
        }
        if kind == InfoKind::Representations && blocks.windows(2).any(|w| w[0].rows != w[1].rows) {
            return Err(Error::Layout("representation blocks must share the probe count".into()));
        }
        Ok(Self {
            kind,
            round,
            values,
            blocks,
        })
    }

    /// Weights (or any parameter-shaped vector) with one scalar per row.
    pub fn from_params(kind: InfoKind, round: usize, params: &ParamVector) -> Self {
        let blocks = params
            .layout()
            .entries()
            .iter()
            .map(|e| InfoBlock {
                layer_index: e.layer_index,
                offset: e.offset,
                rows: e.len,
                cols: 1,
            })
            .collect();
        Self {
            kind,
            round,
            values: params.values().to_vec(),
            blocks,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn blocks(&self) -> &[InfoBlock] {
        &self.blocks
    }

    pub fn block_values(&self, i: usize) -> &[f64] {
        &self.values[self.blocks[i].range()]
    }

    pub fn ensure_comparable(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind {
            return Err(Error::Layout(format!("cannot compare {} with {}", self.kind, other.kind)));
        }
        if self.blocks != other.blocks {
            return Err(Error::Layout(format!("{} vectors have different layouts", self.kind)));
        }
        Ok(())
    }
}

/// Removes the caller's own contribution from a uniformly averaged global
/// model: `(n * global - own) / (n - 1)`, the mean of the other clients.
pub fn extract_target(global: &ParamVector, own_update: &ParamVector, n: usize) -> Result<ParamVector> {
    if n < 2 {
        return Err(Error::DegenerateFederation(n));
    }
    global.ensure_same_layout(own_update)?;
    let nf = n as f64;
    let others = (n - 1) as f64;
    let values = global
        .values()
        .iter()
        .zip(own_update.values())
        .map(|(g, o)| (nf * g - o) / others)
        .collect();
    global.with_values(values)
}

/// Post-activation outputs of every parameterized layer for every probe
/// sample, layer-major.
pub fn capture_representations(model: &Model, probe: &Tensor, round: usize) -> Result<AttackerInfoVector> {
    let acts = model
        .forward(probe, true)?
        .activations
        .expect("activations were requested");
    let rows = probe.rows();
    let mut values = Vec::new();
    let mut blocks = Vec::new();
    for entry in model.layout().entries() {
        let act = &acts[entry.layer_index];
        blocks.push(InfoBlock {
            layer_index: entry.layer_index,
            offset: values.len(),
            rows,
            cols: act.row_len(),
        });
        values.extend_from_slice(act.data());
    }
    AttackerInfoVector::new(InfoKind::Representations, round, values, blocks)
}

/// Pseudo-gradient between consecutive rounds: `previous - current`.
pub fn approximate_gradients(current: &AttackerInfoVector, previous: &AttackerInfoVector) -> Result<AttackerInfoVector> {
    if current.kind != InfoKind::Weights {
        return Err(Error::Layout(format!("gradients need weights, got {}", current.kind)));
    }
    current.ensure_comparable(previous)?;
    let values = previous.values.iter().zip(&current.values).map(|(p, c)| p - c).collect();
    Ok(AttackerInfoVector {
        kind: InfoKind::Gradients,
        round: current.round,
        values,
        blocks: current.blocks.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{arch, Activation, LayerSpec};

    fn model() -> Model {
        Model::new(vec![3], arch::tabular_net(4), 7).unwrap()
    }

    #[test]
    fn two_client_inversion_recovers_the_other_model() {
        let m = model();
        // dyadic values keep every operation exact
        let wa = m.params().with_values((0..m.num_params()).map(|i| (i % 17) as f64 / 64.0).collect()).unwrap();
        let wt = m.params().with_values((0..m.num_params()).map(|i| -((i % 5) as f64) / 32.0).collect()).unwrap();
        let global = crate::fl::fedavg_aggregate(&[wa.clone(), wt.clone()]).unwrap();
        assert_eq!(extract_target(&global, &wa, 2).unwrap(), wt);
    }

    #[test]
    fn identical_clients_return_the_global_model() {
        let g = model().params().clone();
        let out = extract_target(&g, &g, 4).unwrap();
        for (a, b) in out.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn single_client_cannot_remove_itself() {
        let g = model().params().clone();
        assert!(matches!(extract_target(&g, &g, 1), Err(Error::DegenerateFederation(1))));
    }

    #[test]
    fn representations_cover_every_parameterized_layer() {
        let m = Model::new(
            vec![1, 5, 5],
            vec![
                LayerSpec::conv2d(2, 3, 1, Activation::Relu),
                LayerSpec::Flatten,
                LayerSpec::dense(3, Activation::Softmax),
            ],
            1,
        )
        .unwrap();
        let probe = Tensor::new(vec![4, 1, 5, 5], (0..100).map(|i| i as f64 / 100.0).collect()).unwrap();
        let r = capture_representations(&m, &probe, 1).unwrap();
        assert_eq!(r.blocks().len(), 2);
        assert_eq!((r.blocks()[0].rows, r.blocks()[0].cols, r.blocks()[0].layer_index), (4, 18, 0));
        assert_eq!((r.blocks()[1].rows, r.blocks()[1].cols, r.blocks()[1].layer_index), (4, 3, 2));
        assert_eq!(r.values().len(), 4 * 18 + 4 * 3);
    }

    #[test]
    fn gradients_are_previous_minus_current() {
        let m = model();
        let a = AttackerInfoVector::from_params(InfoKind::Weights, 2, m.params());
        let doubled = m.params().with_values(m.params().values().iter().map(|v| 2.0 * v).collect()).unwrap();
        let b = AttackerInfoVector::from_params(InfoKind::Weights, 3, &doubled);
        let g = approximate_gradients(&b, &a).unwrap();
        assert_eq!(g.kind, InfoKind::Gradients);
        assert_eq!(g.round, 3);
        for (gv, w) in g.values().iter().zip(m.params().values()) {
            assert_eq!(*gv, w - 2.0 * w);
        }
        let zero = approximate_gradients(&a, &a).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(approximate_gradients(&g, &g).is_err());
    }
}
