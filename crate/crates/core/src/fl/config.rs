use serde::{Deserialize, Serialize};

use crate::data::ShiftSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub model: u64,
    pub data: u64,
    pub order: u64,
}

impl Seeds {
    /// Seeds for the `k`-th repeat of an experiment.
    pub fn offset(self, k: u64) -> Self {
        Self {
            model: self.model.wrapping_add(k),
            data: self.data.wrapping_add(k),
            order: self.order.wrapping_add(k),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            model: 1,
            data: 2,
            order: 3,
        }
    }
}

fn default_batch_size() -> usize {
    64
}

fn default_lr() -> f64 {
    1e-4
}

/// Protocol parameters of one federated (or centralized) run. Field names
/// follow the usual shorthand: `r` rounds, `s` shift round, `d` per-client
/// dataset size, `n` clients, `m` shifting clients, `l` local epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub r: usize,
    pub s: usize,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub shift: ShiftSpec,
    #[serde(default)]
    pub seeds: Seeds,
    /// Client id of the attacker.
    #[serde(default)]
    pub attacker: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Non-shifting clients also swap to a fresh same-distribution chunk at round `s`.
    #[serde(default)]
    pub benign_swaps: bool,
    /// Null run: no client shifts and, unless `benign_swaps` is set, nobody swaps.
    #[serde(default)]
    pub no_shift: bool,
}

impl ExperimentConfig {
    /// Clients that shift at round `s`: the first `m` ids other than the attacker.
    pub fn shifting_clients(&self) -> Vec<usize> {
        (0..self.n).filter(|&c| c != self.attacker).take(self.m).collect()
    }

    /// Every broken invariant, as human-readable messages naming the field.
    pub fn violations(&self, centralized: bool) -> Vec<String> {
        let mut v = Vec::new();
        if self.r < 2 {
            v.push(format!("r = {}: need at least two rounds", self.r));
        }
        if self.s > self.r {
            v.push(format!("s = {}: shift round after end (r = {})", self.s, self.r));
        }
        if self.s <= 1 {
            v.push(format!("s = {}: shift round must be at least 2", self.s));
        }
        if self.d == 0 {
            v.push("d = 0: clients need data".into());
        }
        if self.l == 0 {
            v.push("l = 0: need at least one local epoch".into());
        }
        if self.batch_size == 0 {
            v.push("batch_size = 0".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            v.push(format!("lr = {}: must be finite and non-negative", self.lr));
        }
        if !(self.shift.ratio > 0.0 && self.shift.ratio < 1.0) {
            v.push(format!("shift.ratio = {}: must lie strictly between 0 and 1", self.shift.ratio));
        }
        if centralized {
            if self.n != 1 {
                v.push(format!("n = {}: a centralized run has exactly one model", self.n));
            }
            return v;
        }
        if self.n < 2 {
            v.push(format!("n = {}: a federation needs at least two clients", self.n));
        }
        if self.m < 1 || self.m >= self.n {
            v.push(format!("m = {}: need 1 <= m < n (n = {})", self.m, self.n));
        }
        if self.attacker >= self.n {
            v.push(format!("attacker = {}: not a client id (n = {})", self.attacker, self.n));
        }
        v
    }
}
