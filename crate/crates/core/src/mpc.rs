//! Receding-horizon execution of a scheme against actual data.
//!
//! Each step re-solves the scheme over `[t, t + H)` (clipped at the end of
//! the control range) on forecast demand, applies only the first-step
//! commands, and advances the stored energy through the battery dynamics.
//! Without a terminal energy constraint the plan empties the battery towards
//! the end of each window; only the first step of each plan is ever applied.

use std::io::Write;
use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forecast::{forecast, Forecaster};
use crate::qp::{solve, QpSolution, SolveOptions, SolveStatus};
use crate::schemes::{
    build_scheme, decode, evaluate_objective, partition_blocks, HomeSchedule, InitialEnergy,
    Partitions, SchemeConfig, SchemeInputs, SchemeKind, SchemeProblem, SchemeSolution,
    StorageTrajectory,
};
use crate::timeseries::NeighborhoodData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcOptions {
    pub horizon_steps: usize,
    pub forecaster: Forecaster,
    /// Steps to control; defaults to the whole data horizon. Data before the
    /// start serves as forecast history.
    pub control: Option<Range<usize>>,
    pub solve: SolveOptions,
}

impl Default for MpcOptions {
    fn default() -> Self {
        MpcOptions {
            horizon_steps: 48,
            forecaster: Forecaster::Naive,
            control: None,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub step: usize,
    pub solve_iters: u32,
    pub primal_res: f64,
    pub dual_res: f64,
    pub wall_ms: f64,
    /// Largest slack between a hinge auxiliary and its hinge value.
    pub hinge_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcRun {
    /// Realized schedules and objective terms on actual data.
    pub solution: SchemeSolution,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// First-step aggregate meter each plan expected.
    pub planned_aggregate: Vec<f64>,
    /// Uneven limits in force at each step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_alloc_per_step: Option<Vec<Vec<f64>>>,
}

impl MpcRun {
    pub fn write_diagnostics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["step", "solve_iters", "primal_res", "dual_res", "wall_ms"])?;
        for d in &self.diagnostics {
            wtr.serialize((d.step, d.solve_iters, d.primal_res, d.dual_res, d.wall_ms))?;
        }
        wtr.flush().map_err(|e| Error::io("<diagnostics csv>", e))?;
        Ok(())
    }
}

fn solve_checked(p: &SchemeProblem, opts: &SolveOptions, step: usize) -> Result<(QpSolution, f64)> {
    let started = Instant::now();
    let sol = solve(&p.qp, opts)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            step,
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
        });
    }
    Ok((sol, wall_ms))
}

/// One-shot optimisation over the whole data horizon.
pub fn run_perfect_foresight(
    data: &NeighborhoodData,
    kind: &SchemeKind,
    cfg: &SchemeConfig,
    opts: &SolveOptions,
) -> Result<MpcRun> {
    run_perfect_foresight_over(data, 0..data.num_steps(), kind, cfg, opts)
}

/// One-shot optimisation over `window`, starting from the battery's initial
/// energy.
pub fn run_perfect_foresight_over(
    data: &NeighborhoodData,
    window: Range<usize>,
    kind: &SchemeKind,
    cfg: &SchemeConfig,
    opts: &SolveOptions,
) -> Result<MpcRun> {
    let inputs = SchemeInputs::from_data(data, window.clone())?;
    let init = InitialEnergy::default_for(kind, &data.battery, data.num_homes());
    let p = build_scheme(&inputs, kind, cfg, &init, None)?;
    let (sol, wall_ms) = solve_checked(&p, opts, window.start)?;
    let solution = decode(&p, &sol)?;
    let k_alloc_per_step = solution.k_alloc.as_ref().map(|k| vec![k.clone(); inputs.len()]);
    Ok(MpcRun {
        planned_aggregate: solution.aggregate_meter(),
        diagnostics: vec![IterationDiagnostics {
            step: window.start,
            solve_iters: sol.iterations,
            primal_res: sol.primal_residual,
            dual_res: sol.dual_residual,
            wall_ms,
            hinge_gap: p.qp.max_epigraph_gap(&sol.x),
        }],
        k_alloc_per_step,
        solution,
    })
}

/// State carried between iterations.
enum Energy {
    Whole(Vec<f64>),
    Split { retained: Vec<f64>, shared: Vec<f64> },
}

impl Energy {
    fn as_initial(&self) -> InitialEnergy {
        match self {
            Energy::Whole(e) => InitialEnergy::Whole(e.clone()),
            Energy::Split { retained, shared } => InitialEnergy::Split {
                retained: retained.clone(),
                shared: shared.clone(),
            },
        }
    }
}

pub fn run_mpc(
    data: &NeighborhoodData,
    kind: &SchemeKind,
    cfg: &SchemeConfig,
    opts: &MpcOptions,
) -> Result<MpcRun> {
    data.validate()?;
    cfg.validate()?;
    opts.solve.validate()?;
    if opts.horizon_steps == 0 {
        invalid!("MPC horizon must be at least one step");
    }
    let control = opts.control.clone().unwrap_or(0..data.num_steps());
    if control.is_empty() || control.end > data.num_steps() {
        invalid!(
            "control range {:?} is empty or exceeds the {}-step data",
            control,
            data.num_steps()
        );
    }
    let steps_per_day = match (opts.forecaster, data.grid.steps_per_day()) {
        (_, Some(s)) => s,
        (Forecaster::Oracle, None) => 1,
        (Forecaster::Naive, None) => invalid!("naive forecasts need a step that divides one day"),
    };
    let battery = &data.battery;
    let dt = data.grid.delta_t;
    let n_homes = data.num_homes();
    let home_prices = data.home_prices()?;
    let shared_prices = data.shared_prices()?;
    let steps_per_block = match kind {
        SchemeKind::Dynamic { block_hours } => {
            partition_blocks(0, 1, dt, *block_hours)?;
            Some((block_hours / dt).round() as usize)
        }
        _ => None,
    };

    let init = InitialEnergy::default_for(kind, battery, n_homes);
    let mut energy = match &init {
        InitialEnergy::Whole(e) => Energy::Whole(e.clone()),
        InitialEnergy::Split { retained, shared } => Energy::Split {
            retained: retained.clone(),
            shared: shared.clone(),
        },
    };
    let mut schedules: Vec<HomeSchedule> = (0..n_homes)
        .map(|i| {
            let (soc0, partitions) = match &init {
                InitialEnergy::Whole(e) => (e[i], None),
                InitialEnergy::Split { retained, shared } => (
                    retained[i] + shared[i],
                    Some(Partitions {
                        retained: StorageTrajectory {
                            soc: vec![retained[i]],
                            ..Default::default()
                        },
                        shared: StorageTrajectory {
                            soc: vec![shared[i]],
                            ..Default::default()
                        },
                        weights: Vec::new(),
                    }),
                ),
            };
            HomeSchedule {
                b_chg: Vec::new(),
                b_dischg: Vec::new(),
                soc: vec![soc0],
                meter: Vec::new(),
                partitions,
            }
        })
        .collect();
    let mut diagnostics = Vec::with_capacity(control.len());
    let mut planned_aggregate = Vec::with_capacity(control.len());
    let mut k_steps: Vec<Vec<f64>> = Vec::new();
    let mut applied_w: Option<Vec<f64>> = None;

    for t in control.clone() {
        let window = t..(t + opts.horizon_steps).min(control.end);
        let net_demand = data
            .homes
            .iter()
            .map(|h| forecast(opts.forecaster, h, window.clone(), steps_per_day).map(|f| f.net_demand()))
            .collect::<Result<Vec<_>>>()?;
        let inputs = SchemeInputs {
            delta_t: dt,
            start_step: t,
            net_demand,
            home_prices: home_prices.iter().map(|p| p[window.clone()].to_vec()).collect(),
            shared_prices: shared_prices[window.clone()].to_vec(),
            k_rated: data.transformer.k_rated,
            battery: battery.clone(),
        };
        let pin = match (steps_per_block, &applied_w) {
            (Some(spb), Some(w)) if t % spb != 0 => Some(w.as_slice()),
            _ => None,
        };
        let p = build_scheme(&inputs, kind, cfg, &energy.as_initial(), pin)?;
        let pinned = pin.map(<[f64]>::to_vec);
        let (sol, wall_ms) = solve_checked(&p, &opts.solve, t)?;
        diagnostics.push(IterationDiagnostics {
            step: t,
            solve_iters: sol.iterations,
            primal_res: sol.primal_residual,
            dual_res: sol.dual_residual,
            wall_ms,
            hinge_gap: p.qp.max_epigraph_gap(&sol.x),
        });
        let plan = decode(&p, &sol)?;
        planned_aggregate.push(plan.homes.iter().map(|h| h.meter[0]).sum());
        if let Some(k) = &plan.k_alloc {
            k_steps.push(k.clone());
        }

        match &mut energy {
            Energy::Whole(e) => {
                for (i, h) in plan.homes.iter().enumerate() {
                    let (c, d) = (h.b_chg[0], h.b_dischg[0]);
                    e[i] += battery.energy_delta(c, d, dt);
                    let s = &mut schedules[i];
                    s.b_chg.push(c);
                    s.b_dischg.push(d);
                    s.soc.push(e[i]);
                    s.meter.push(data.homes[i].net_demand(t) + c - d);
                }
            }
            Energy::Split { retained, shared } => {
                let mut w_now = Vec::with_capacity(n_homes);
                for (i, h) in plan.homes.iter().enumerate() {
                    let parts = h.partitions.as_ref().expect("partitioned plan");
                    let (rc, rd) = (parts.retained.chg[0], parts.retained.dis[0]);
                    let (sc, sd) = (parts.shared.chg[0], parts.shared.dis[0]);
                    retained[i] += battery.energy_delta(rc, rd, dt);
                    shared[i] += battery.energy_delta(sc, sd, dt);
                    // A pinned weight is carried over exactly, not as solved.
                    let w = pinned.as_ref().map_or(parts.weights[0], |p| p[i]);
                    w_now.push(w);
                    let s = &mut schedules[i];
                    let out = s.partitions.as_mut().expect("partitioned schedule");
                    out.retained.push(rc, rd, retained[i]);
                    out.shared.push(sc, sd, shared[i]);
                    out.weights.push(w);
                    s.b_chg.push(rc + sc);
                    s.b_dischg.push(rd + sd);
                    s.soc.push(retained[i] + shared[i]);
                    s.meter.push(data.homes[i].net_demand(t) + rc + sc - rd - sd);
                }
                applied_w = Some(w_now);
            }
        }
    }

    let actual = SchemeInputs::from_data(data, control.clone())?;
    let k_alloc_per_step = (*kind == SchemeKind::IndividualUneven).then_some(k_steps);
    let objective_terms =
        evaluate_objective(kind, &actual, cfg, &schedules, k_alloc_per_step.as_deref())?;
    Ok(MpcRun {
        solution: SchemeSolution {
            scheme: kind.clone(),
            start_step: control.start,
            delta_t: dt,
            homes: schedules,
            k_alloc: None,
            objective_terms,
            solver_objective: None,
            config_hash: cfg.config_hash(),
        },
        diagnostics,
        planned_aggregate,
        k_alloc_per_step,
    })
}
