use serde::{Deserialize, Serialize};

use super::build::aging_cost_per_kw_step;
use super::names::*;
use super::{InitialEnergy, SchemeConfig, SchemeInputs, SchemeKind, SchemeProblem, SharedCostForm};
use crate::error::{invalid, Result};
use crate::qp::{QpSolution, VarKey};
use crate::timeseries::BatterySpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StorageTrajectory {
    pub chg: Vec<f64>,
    pub dis: Vec<f64>,
    /// Stored energy at step boundaries, `len + 1` values.
    pub soc: Vec<f64>,
}

impl StorageTrajectory {
    /// Largest deviation from the energy balance.
    pub fn soc_residual(&self, battery: &BatterySpec, delta_t: f64) -> f64 {
        (0..self.chg.len())
            .map(|t| {
                let expect = self.soc[t] + battery.energy_delta(self.chg[t], self.dis[t], delta_t);
                (self.soc[t + 1] - expect).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn push(&mut self, chg: f64, dis: f64, soc_next: f64) {
        self.chg.push(chg);
        self.dis.push(dis);
        self.soc.push(soc_next);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partitions {
    pub retained: StorageTrajectory,
    pub shared: StorageTrajectory,
    /// Retained fraction in force at each step.
    pub weights: Vec<f64>,
}

/// One home's physical battery schedule and resulting meter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeSchedule {
    pub b_chg: Vec<f64>,
    pub b_dischg: Vec<f64>,
    pub soc: Vec<f64>,
    /// Net demand plus battery exchange, kW.
    pub meter: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Partitions>,
}

impl HomeSchedule {
    /// Total activity `sum chg + dis`, per partition where partitioned.
    pub fn activity_kw_steps(&self) -> f64 {
        match &self.partitions {
            Some(p) => [&p.retained, &p.shared]
                .iter()
                .map(|s| s.chg.iter().chain(&s.dis).sum::<f64>())
                .sum(),
            None => self.b_chg.iter().chain(&self.b_dischg).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub energy_cost: f64,
    pub transformer_penalty: f64,
    pub simultaneity_penalty: f64,
    pub aging_cost: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.energy_cost + self.transformer_penalty + self.simultaneity_penalty + self.aging_cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSolution {
    pub scheme: SchemeKind,
    pub start_step: usize,
    pub delta_t: f64,
    pub homes: Vec<HomeSchedule>,
    /// Per-home limits of the uneven scheme.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_alloc: Option<Vec<f64>>,
    pub objective_terms: ObjectiveTerms,
    /// Objective reported by the solver (open-loop solves only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_objective: Option<f64>,
    pub config_hash: String,
}

impl SchemeSolution {
    pub fn len(&self) -> usize {
        self.homes.first().map_or(0, |h| h.meter.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Summed meter over homes at each step.
    pub fn aggregate_meter(&self) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.homes.iter().map(|h| h.meter[t]).sum())
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("solution serializes");
        v["metadata"] = serde_json::json!({
            "scheme": self.scheme.label(),
            "window": [self.start_step, self.start_step + self.len()],
            "config_hash": self.config_hash,
        });
        v
    }
}

fn values(p: &SchemeProblem, sol: &QpSolution, name: &'static str, home: usize, ts: std::ops::Range<usize>) -> Result<Vec<f64>> {
    ts.map(|t| sol.value(&p.qp, &VarKey::at(name, home, t))).collect()
}

fn trajectory(
    p: &SchemeProblem,
    sol: &QpSolution,
    names: [&'static str; 3],
    home: usize,
    e0: f64,
) -> Result<StorageTrajectory> {
    let n = p.inputs.len();
    let mut soc = vec![e0];
    soc.extend(values(p, sol, names[2], home, 1..n + 1)?);
    Ok(StorageTrajectory {
        chg: values(p, sol, names[0], home, 0..n)?,
        dis: values(p, sol, names[1], home, 0..n)?,
        soc,
    })
}

/// Extracts per-home schedules from a solved scheme QP and recomputes the
/// objective terms from them.
pub fn decode(p: &SchemeProblem, sol: &QpSolution) -> Result<SchemeSolution> {
    if sol.x.len() != p.qp.num_vars() {
        invalid!(
            "solution has {} values for {} variables",
            sol.x.len(),
            p.qp.num_vars()
        );
    }
    let inputs = &p.inputs;
    let n = inputs.len();
    let mut homes = Vec::with_capacity(inputs.num_homes());
    for i in 0..inputs.num_homes() {
        let (b_chg, b_dischg, soc, partitions) = match &p.init {
            InitialEnergy::Whole(e0) => {
                let s = trajectory(p, sol, [B_CHG, B_DISCHG, SOC], i, e0[i])?;
                (s.chg, s.dis, s.soc, None)
            }
            InitialEnergy::Split { retained, shared } => {
                let r = trajectory(p, sol, [BR_CHG, BR_DISCHG, SOC_R], i, retained[i])?;
                let s = trajectory(p, sol, [BS_CHG, BS_DISCHG, SOC_S], i, shared[i])?;
                let weights = match (&p.kind, &p.blocks) {
                    (SchemeKind::Hybrid { retained: w }, _) => vec![w[i]; n],
                    (_, Some(blocks)) => blocks
                        .iter()
                        .map(|&b| sol.value(&p.qp, &VarKey::at(W_BLOCK, i, b)))
                        .collect::<Result<_>>()?,
                    _ => invalid!("partitioned solution without weights"),
                };
                let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
                (
                    add(&r.chg, &s.chg),
                    add(&r.dis, &s.dis),
                    add(&r.soc, &s.soc),
                    Some(Partitions {
                        retained: r,
                        shared: s,
                        weights,
                    }),
                )
            }
        };
        let meter = (0..n)
            .map(|t| inputs.net_demand[i][t] + b_chg[t] - b_dischg[t])
            .collect();
        homes.push(HomeSchedule {
            b_chg,
            b_dischg,
            soc,
            meter,
            partitions,
        });
    }
    let k_alloc = if p.kind == SchemeKind::IndividualUneven {
        Some(
            (0..inputs.num_homes())
                .map(|i| sol.value(&p.qp, &VarKey::home(K_ALLOC, i)))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let limits = k_alloc.as_ref().map(|k| vec![k.clone(); n]);
    let objective_terms = evaluate_objective(&p.kind, inputs, &p.cfg, &homes, limits.as_deref())?;
    Ok(SchemeSolution {
        scheme: p.kind.clone(),
        start_step: inputs.start_step,
        delta_t: inputs.delta_t,
        homes,
        k_alloc,
        objective_terms,
        solver_objective: Some(sol.objective),
        config_hash: p.cfg.config_hash(),
    })
}

/// Objective of `kind` evaluated on explicit schedules. `uneven_limits`
/// gives the per-step, per-home limits of the uneven scheme.
pub fn evaluate_objective(
    kind: &SchemeKind,
    inputs: &SchemeInputs,
    cfg: &SchemeConfig,
    homes: &[HomeSchedule],
    uneven_limits: Option<&[Vec<f64>]>,
) -> Result<ObjectiveTerms> {
    let n = inputs.len();
    let dt = inputs.delta_t;
    if homes.len() != inputs.num_homes() || homes.iter().any(|h| h.meter.len() != n) {
        invalid!("schedules do not match the evaluation window");
    }
    let pos = |v: f64| v.max(0.0);
    let mut terms = ObjectiveTerms::default();
    match kind {
        SchemeKind::Individual | SchemeKind::IndividualUneven => {
            let share = inputs.k_rated / homes.len() as f64;
            for (i, h) in homes.iter().enumerate() {
                for t in 0..n {
                    terms.energy_cost += inputs.home_prices[i][t] * pos(h.meter[t]) * dt;
                    let limit = match (kind, uneven_limits) {
                        (SchemeKind::IndividualUneven, Some(l)) => l[t][i],
                        (SchemeKind::IndividualUneven, None) => {
                            invalid!("uneven objective needs per-home limits")
                        }
                        _ => share,
                    };
                    terms.transformer_penalty += cfg.lambda * pos(h.meter[t] - limit).powi(2);
                }
            }
        }
        SchemeKind::Joint => {
            for t in 0..n {
                let agg: f64 = homes.iter().map(|h| h.meter[t]).sum();
                terms.energy_cost += inputs.shared_prices[t] * pos(agg) * dt;
                terms.transformer_penalty += cfg.lambda * pos(agg - inputs.k_rated).powi(2);
            }
        }
        SchemeKind::Hybrid { .. } | SchemeKind::Dynamic { .. } => {
            let parts: Vec<&Partitions> = homes
                .iter()
                .map(|h| h.partitions.as_ref())
                .collect::<Option<_>>()
                .ok_or_else(|| crate::Error::Validation("partitioned objective needs partitions".into()))?;
            for t in 0..n {
                let mut agg = inputs.aggregate_net_demand(t);
                for (i, p) in parts.iter().enumerate() {
                    let ret = inputs.net_demand[i][t] + p.retained.chg[t] - p.retained.dis[t];
                    terms.energy_cost += inputs.home_prices[i][t] * pos(ret) * dt;
                    agg += p.shared.chg[t] - p.shared.dis[t];
                }
                terms.energy_cost += match cfg.hybrid_shared_cost_form {
                    SharedCostForm::Linear => inputs.shared_prices[t] * pos(agg) * dt,
                    SharedCostForm::Squared => inputs.shared_prices[t] * pos(agg).powi(2) * dt,
                };
                terms.transformer_penalty += cfg.lambda * pos(agg - inputs.k_rated).powi(2);
            }
        }
    }
    let activity: f64 = homes.iter().map(HomeSchedule::activity_kw_steps).sum();
    terms.simultaneity_penalty = cfg.alpha * activity;
    if cfg.aging_cost_enabled {
        terms.aging_cost = aging_cost_per_kw_step(cfg, &inputs.battery, dt) * activity;
    }
    Ok(terms)
}
