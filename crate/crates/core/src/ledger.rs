//! Per-run accounting of oracle layers and classical queries.

use serde::{Deserialize, Serialize};

/// Price of one classical path query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathCost {
    /// A whole path is one query.
    #[default]
    One,
    /// One query per level, d+1 in total.
    PerLevel,
}

impl PathCost {
    pub fn charge(self, d: usize) -> u64 {
        match self {
            Self::One => 1,
            Self::PerLevel => d as u64 + 1,
        }
    }
}

/// Monotone counters owned by whoever drives the oracle.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthLedger {
    /// Oracle layers spent in the circuit currently running.
    #[serde(skip)]
    pub oracle_layers_current_circuit: u64,
    /// Oracle layers across every circuit of the run.
    #[serde(rename = "oracle_layers")]
    pub total_oracle_layers: u64,
    #[serde(rename = "circuits")]
    pub circuits_invoked: u64,
    pub classical_queries: u64,
    /// Branch-level answers served from `f_d^*` on `S_d`, quantum or classical.
    pub core_evaluations: u64,
    pub violations: Vec<String>,
}

impl DepthLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin_circuit(&mut self) {
        self.circuits_invoked += 1;
        self.oracle_layers_current_circuit = 0;
    }

    pub fn record_oracle_layer(&mut self, core_hits: u64) {
        self.oracle_layers_current_circuit += 1;
        self.total_oracle_layers += 1;
        self.core_evaluations += core_hits;
    }

    pub fn record_classical(&mut self, cost: u64, core_hits: u64) {
        self.classical_queries += cost;
        self.core_evaluations += core_hits;
    }

    pub fn record_violation(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }

    /// Adds another ledger's counters into this one.
    pub fn absorb(&mut self, other: &DepthLedger) {
        self.total_oracle_layers += other.total_oracle_layers;
        self.circuits_invoked += other.circuits_invoked;
        self.classical_queries += other.classical_queries;
        self.core_evaluations += other.core_evaluations;
        self.violations.extend(other.violations.iter().cloned());
    }
}
