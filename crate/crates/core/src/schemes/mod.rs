//! The five battery sharing schemes as diagonal QPs.
//!
//! * individual: each home bills its own meter and is penalised above `K/n`
//! * individual uneven: as individual, with per-home limits `K_u` summing to `K`
//! * joint: all batteries act as one, billed and penalised on the aggregate meter
//! * hybrid: each battery split into a retained fraction `W` (individual
//!   billing, no transformer penalty) and a shared fraction `1 - W` (joint)
//! * dynamic: hybrid with `W` a decision variable held constant over blocks
//!   of `block_hours`

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::qp::QpProblem;
use crate::timeseries::{BatterySpec, NeighborhoodData};

mod build;
mod decode;

pub use build::{
    add_aging_cost, aging_cost_per_kw_step, block_matrix, build_dynamic, build_hybrid,
    build_individual, build_individual_uneven, build_joint, build_scheme, partition_blocks,
};
pub use decode::{
    decode, evaluate_objective, HomeSchedule, ObjectiveTerms, Partitions, SchemeSolution,
    StorageTrajectory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SchemeKind {
    Individual,
    IndividualUneven,
    Joint,
    /// Retained fraction per home, fixed over the horizon.
    Hybrid { retained: Vec<f64> },
    /// Retained fraction decided per home and per block of `block_hours`.
    Dynamic { block_hours: f64 },
}

impl SchemeKind {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::Individual => "individual",
            SchemeKind::IndividualUneven => "individual_uneven",
            SchemeKind::Joint => "joint",
            SchemeKind::Hybrid { .. } => "hybrid",
            SchemeKind::Dynamic { .. } => "dynamic",
        }
    }

    pub fn is_partitioned(&self) -> bool {
        matches!(self, SchemeKind::Hybrid { .. } | SchemeKind::Dynamic { .. })
    }

    /// Hybrid with the same retained fraction for every home.
    pub fn hybrid_uniform(retained: f64, n_homes: usize) -> Self {
        SchemeKind::Hybrid {
            retained: vec![retained; n_homes],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharedCostForm {
    /// `C_t max(agg, 0) dt`, as in joint billing.
    Linear,
    /// `C_t max(agg, 0)^2 dt`.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    /// Transformer violation penalty weight.
    pub lambda: f64,
    /// Charge/discharge activity penalty.
    pub alpha: f64,
    pub aging_cost_enabled: bool,
    /// Battery replacement cost, $.
    pub c_batt: f64,
    /// Warranty cycle count.
    pub n_cyc: f64,
    pub hybrid_shared_cost_form: SharedCostForm,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            lambda: 100.0,
            alpha: 0.01,
            aging_cost_enabled: false,
            c_batt: 5550.0,
            n_cyc: 1400.0,
            hybrid_shared_cost_form: SharedCostForm::Linear,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            invalid!("lambda must be non-negative, got {}", self.lambda);
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            invalid!("alpha must be positive, got {}", self.alpha);
        }
        if !(self.n_cyc > 0.0) {
            invalid!("n_cyc must be positive, got {}", self.n_cyc);
        }
        if !(self.c_batt >= 0.0) {
            invalid!("c_batt must be non-negative, got {}", self.c_batt);
        }
        Ok(())
    }

    /// Short stable hash of the configuration, for output metadata.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Numeric inputs of one optimisation window, decoupled from where the
/// demand numbers come from (actuals or forecasts).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeInputs {
    pub delta_t: f64,
    /// Absolute index of the first window step; aligns partition blocks.
    pub start_step: usize,
    /// Load − solar + EV per home over the window, kW.
    pub net_demand: Vec<Vec<f64>>,
    pub home_prices: Vec<Vec<f64>>,
    pub shared_prices: Vec<f64>,
    pub k_rated: f64,
    pub battery: BatterySpec,
}

impl SchemeInputs {
    pub fn from_data(data: &NeighborhoodData, window: Range<usize>) -> Result<Self> {
        if window.is_empty() || window.end > data.num_steps() {
            invalid!(
                "window {:?} is empty or exceeds the {}-step horizon",
                window,
                data.num_steps()
            );
        }
        data.validate()?;
        let home_prices = data
            .home_prices()?
            .into_iter()
            .map(|p| p[window.clone()].to_vec())
            .collect();
        Ok(SchemeInputs {
            delta_t: data.grid.delta_t,
            start_step: window.start,
            net_demand: data
                .homes
                .iter()
                .map(|h| window.clone().map(|t| h.net_demand(t)).collect())
                .collect(),
            home_prices,
            shared_prices: data.shared_prices()?[window].to_vec(),
            k_rated: data.transformer.k_rated,
            battery: data.battery.clone(),
        })
    }

    pub fn num_homes(&self) -> usize {
        self.net_demand.len()
    }

    pub fn len(&self) -> usize {
        self.shared_prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared_prices.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            invalid!("optimisation window is empty");
        }
        if self.net_demand.is_empty() {
            invalid!("no homes in optimisation window");
        }
        if self.home_prices.len() != self.num_homes()
            || self.net_demand.iter().any(|s| s.len() != n)
            || self.home_prices.iter().any(|s| s.len() != n)
        {
            invalid!("window series lengths disagree");
        }
        if !(self.k_rated > 0.0) {
            invalid!("transformer limit must be positive");
        }
        if self
            .home_prices
            .iter()
            .flatten()
            .chain(&self.shared_prices)
            .any(|p| !(p.is_finite() && *p >= 0.0))
        {
            invalid!("prices must be finite and non-negative");
        }
        self.battery.validate()
    }

    pub fn aggregate_net_demand(&self, t: usize) -> f64 {
        self.net_demand.iter().map(|s| s[t]).sum()
    }
}

/// Starting energy for a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialEnergy {
    Whole(Vec<f64>),
    Split { retained: Vec<f64>, shared: Vec<f64> },
}

impl InitialEnergy {
    /// Default split of `e_init`: proportional to `W` for hybrid, half and
    /// half for dynamic, whole otherwise.
    pub fn default_for(kind: &SchemeKind, battery: &BatterySpec, n_homes: usize) -> Self {
        let e = battery.e_init;
        match kind {
            SchemeKind::Hybrid { retained } => InitialEnergy::Split {
                retained: retained.iter().map(|w| w * e).collect(),
                shared: retained.iter().map(|w| (1.0 - w) * e).collect(),
            },
            SchemeKind::Dynamic { .. } => InitialEnergy::Split {
                retained: vec![0.5 * e; n_homes],
                shared: vec![0.5 * e; n_homes],
            },
            _ => InitialEnergy::Whole(vec![e; n_homes]),
        }
    }
}

/// A built scheme QP together with what decoding needs.
#[derive(Debug, Clone)]
pub struct SchemeProblem {
    pub qp: QpProblem,
    pub kind: SchemeKind,
    pub cfg: SchemeConfig,
    pub inputs: SchemeInputs,
    pub init: InitialEnergy,
    /// Local block index per step (dynamic only).
    pub blocks: Option<Vec<usize>>,
}

/// Variable names used by the scheme builders.
pub mod names {
    pub const B_CHG: &str = "B_chg";
    pub const B_DISCHG: &str = "B_dischg";
    pub const SOC: &str = "E";
    pub const BR_CHG: &str = "BR_chg";
    pub const BR_DISCHG: &str = "BR_dischg";
    pub const BS_CHG: &str = "BS_chg";
    pub const BS_DISCHG: &str = "BS_dischg";
    pub const SOC_R: &str = "E_R";
    pub const SOC_S: &str = "E_S";
    pub const W_BLOCK: &str = "W_C";
    pub const K_ALLOC: &str = "K_u";
    pub const U_COST: &str = "u_cost";
    pub const U_COST_AGG: &str = "u_cost_agg";
    pub const U_COST_RET: &str = "u_cost_ret";
    pub const U_COST_SHARED: &str = "u_cost_shared";
    pub const S_VIOL: &str = "s_viol";
    pub const S_VIOL_AGG: &str = "s_viol_agg";

    /// Every charge or discharge power variable.
    pub const POWERS: [&str; 6] = [B_CHG, B_DISCHG, BR_CHG, BR_DISCHG, BS_CHG, BS_DISCHG];
}
