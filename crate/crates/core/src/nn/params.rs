use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location of one parameterized layer inside a flat parameter vector.
///
/// The weights occupy `offset..offset + weight_len` and the biases follow
/// immediately, up to `offset + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    /// Index of the layer in the architecture's layer list.
    pub layer_index: usize,
    pub offset: usize,
    pub len: usize,
    pub weight_len: usize,
}

impl LayoutEntry {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    entries: Vec<LayoutEntry>,
}

impl ParamLayout {
    pub(crate) fn new(entries: Vec<LayoutEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn total_len(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len)
    }

    fn is_contiguous(&self) -> bool {
        let mut next = 0;
        for e in &self.entries {
            if e.offset != next || e.weight_len > e.len {
                return false;
            }
            next += e.len;
        }
        true
    }
}

/// All trainable parameters of a model, flattened in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: ParamLayout) -> Result<Self> {
        if !layout.is_contiguous() {
            return Err(Error::Layout("layout entries are not contiguous".into()));
        }
        if values.len() != layout.total_len() {
            return Err(Error::Layout(format!(
                "layout covers {} values, vector has {}",
                layout.total_len(),
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        Self {
            values: vec![0.0; layout.total_len()],
            layout,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Parameters of the `i`-th parameterized layer (weights then biases).
    pub fn layer(&self, i: usize) -> &[f64] {
        &self.values[self.layout.entries[i].range()]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.layout.entries[i].range();
        &mut self.values[r]
    }

    pub fn ensure_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Layout(format!(
                "{} entries / {} values vs {} entries / {} values",
                self.layout.entries.len(),
                self.len(),
                other.layout.entries.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.layout.clone())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
