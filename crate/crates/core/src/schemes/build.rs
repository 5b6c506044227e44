use std::ops::Range;

use super::names::*;
use super::{
    InitialEnergy, SchemeConfig, SchemeInputs, SchemeKind, SchemeProblem, SharedCostForm,
};
use crate::error::{invalid, Result};
use crate::qp::{add_hinge_cost, add_squared_hinge_cost, LinExpr, QpProblem, VarKey};
use crate::timeseries::{BatterySpec, NeighborhoodData};

const E0_TOL: f64 = 1e-6;

/// Aging cost per kW of charge or discharge power held for one step.
pub fn aging_cost_per_kw_step(cfg: &SchemeConfig, battery: &BatterySpec, delta_t: f64) -> f64 {
    if battery.e_max <= 0.0 {
        return 0.0;
    }
    cfg.c_batt / cfg.n_cyc * delta_t / (2.0 * battery.e_max)
}

/// Adds the linear aging cost to every charge/discharge variable of `p`.
/// No-op when aging cost is disabled.
pub fn add_aging_cost(p: &mut QpProblem, cfg: &SchemeConfig, battery: &BatterySpec, delta_t: f64) {
    if !cfg.aging_cost_enabled {
        return;
    }
    let c = aging_cost_per_kw_step(cfg, battery, delta_t);
    let cols: Vec<usize> = (0..p.num_vars())
        .filter(|&j| POWERS.contains(&p.key(j).name))
        .collect();
    for j in cols {
        p.add_linear_cost(j, c);
    }
}

/// Block index of each window step, blocks aligned to absolute step
/// multiples of `block_hours / delta_t` and renumbered from 0.
pub fn partition_blocks(
    start_step: usize,
    len: usize,
    delta_t: f64,
    block_hours: f64,
) -> Result<Vec<usize>> {
    if !(block_hours > 0.0 && block_hours.is_finite()) {
        invalid!("block length must be positive, got {block_hours} h");
    }
    let ratio = block_hours / delta_t;
    let spb = ratio.round();
    if spb < 1.0 || (ratio - spb).abs() > 1e-9 {
        invalid!("block length {block_hours} h is not a whole number of {delta_t} h steps");
    }
    let spb = spb as usize;
    let first = start_step / spb;
    Ok((start_step..start_step + len).map(|s| s / spb - first).collect())
}

/// The `len × blocks` 0/1 matrix mapping blocks to steps.
pub fn block_matrix(blocks: &[usize]) -> Vec<Vec<f64>> {
    let n_blocks = blocks.iter().max().map_or(0, |b| b + 1);
    blocks
        .iter()
        .map(|&b| (0..n_blocks).map(|k| if k == b { 1.0 } else { 0.0 }).collect())
        .collect()
}

#[derive(Clone, Copy)]
enum Cap<'a> {
    /// Limits scaled by a constant fraction.
    Scale(f64),
    /// Limits scaled by `W` of the step's block.
    Retained(&'a [usize]),
    /// Limits scaled by `1 - W` of the step's block.
    Shared(&'a [usize]),
}

fn add_upper(p: &mut QpProblem, x: usize, limit: f64, cap: Cap, t: usize) {
    match cap {
        Cap::Scale(f) => p.add_bounds(x, 0.0, f * limit),
        Cap::Retained(w) => {
            p.add_ge(LinExpr::var(x), 0.0);
            p.add_le(LinExpr::var(x).term(w[t], -limit), 0.0);
        }
        Cap::Shared(w) => {
            p.add_ge(LinExpr::var(x), 0.0);
            p.add_le(LinExpr::var(x).term(w[t], limit), limit);
        }
    }
}

struct Storage {
    chg: Vec<usize>,
    dis: Vec<usize>,
}

fn add_storage(
    p: &mut QpProblem,
    names: [&'static str; 3],
    home: usize,
    inputs: &SchemeInputs,
    e0: f64,
    cap: Cap,
) -> Result<Storage> {
    let b = &inputs.battery;
    let dt = inputs.delta_t;
    let n = inputs.len();
    let mut st = Storage {
        chg: Vec::with_capacity(n),
        dis: Vec::with_capacity(n),
    };
    let mut prev: Option<usize> = None;
    for t in 0..n {
        let c = p.add_var(VarKey::at(names[0], home, t))?;
        let d = p.add_var(VarKey::at(names[1], home, t))?;
        let e = p.add_var(VarKey::at(names[2], home, t + 1))?;
        add_upper(p, c, b.p_chg_max, cap, t);
        add_upper(p, d, b.p_dischg_max, cap, t);
        add_upper(p, e, b.e_max, cap, t);
        // E_{t+1} - E_t + dt (dis / eta - eta chg) = 0
        let mut expr = LinExpr::var(e).term(d, dt / b.eta).term(c, -dt * b.eta);
        let rhs = match prev {
            Some(pe) => {
                expr.push(pe, -1.0);
                0.0
            }
            None => e0,
        };
        p.add_eq(expr, rhs);
        prev = Some(e);
        st.chg.push(c);
        st.dis.push(d);
    }
    Ok(st)
}

fn add_activity_cost(p: &mut QpProblem, st: &Storage, alpha: f64) {
    for &j in st.chg.iter().chain(&st.dis) {
        p.add_linear_cost(j, alpha);
    }
}

fn check_e0(label: &str, e0: &[f64], caps: &[f64], n_homes: usize) -> Result<()> {
    if e0.len() != n_homes {
        invalid!("{label}: {} initial energies for {n_homes} homes", e0.len());
    }
    for (i, (&e, &cap)) in e0.iter().zip(caps).enumerate() {
        if !(e >= -E0_TOL && e <= cap + E0_TOL) {
            invalid!("{label}: initial energy {e} of home {i} outside [0, {cap}]");
        }
    }
    Ok(())
}

fn meter_expr(inputs: &SchemeInputs, home: usize, t: usize, st: &Storage) -> LinExpr {
    LinExpr::constant(inputs.net_demand[home][t])
        .term(st.chg[t], 1.0)
        .term(st.dis[t], -1.0)
}

fn aggregate_expr(inputs: &SchemeInputs, t: usize, stores: &[Storage]) -> LinExpr {
    let mut e = LinExpr::constant(inputs.aggregate_net_demand(t));
    for st in stores {
        e.push(st.chg[t], 1.0);
        e.push(st.dis[t], -1.0);
    }
    e
}

fn individual_problem(
    inputs: &SchemeInputs,
    cfg: &SchemeConfig,
    e0: &[f64],
    uneven: bool,
) -> Result<QpProblem> {
    let n = inputs.num_homes();
    let b = &inputs.battery;
    check_e0("individual", e0, &vec![b.e_max; n], n)?;
    let mut p = QpProblem::new();
    let k_u: Option<Vec<usize>> = if uneven {
        let vars = (0..n)
            .map(|i| p.add_var(VarKey::home(K_ALLOC, i)))
            .collect::<Result<Vec<_>>>()?;
        let mut sum = LinExpr::default();
        for &v in &vars {
            p.add_ge(LinExpr::var(v), 0.0);
            sum.push(v, 1.0);
        }
        p.add_eq(sum, inputs.k_rated);
        Some(vars)
    } else {
        None
    };
    let share = inputs.k_rated / n as f64;
    for i in 0..n {
        let st = add_storage(&mut p, [B_CHG, B_DISCHG, SOC], i, inputs, e0[i], Cap::Scale(1.0))?;
        add_activity_cost(&mut p, &st, cfg.alpha);
        for t in 0..inputs.len() {
            let w = inputs.home_prices[i][t] * inputs.delta_t;
            if w > 0.0 {
                add_hinge_cost(&mut p, VarKey::at(U_COST, i, t), meter_expr(inputs, i, t, &st), w)?;
            }
            if cfg.lambda > 0.0 {
                let over = match &k_u {
                    Some(k) => meter_expr(inputs, i, t, &st).term(k[i], -1.0),
                    None => meter_expr(inputs, i, t, &st).plus(-share),
                };
                add_squared_hinge_cost(&mut p, VarKey::at(S_VIOL, i, t), over, cfg.lambda)?;
            }
        }
    }
    Ok(p)
}

fn joint_problem(inputs: &SchemeInputs, cfg: &SchemeConfig, e0: &[f64]) -> Result<QpProblem> {
    let n = inputs.num_homes();
    check_e0("joint", e0, &vec![inputs.battery.e_max; n], n)?;
    let mut p = QpProblem::new();
    let stores = (0..n)
        .map(|i| add_storage(&mut p, [B_CHG, B_DISCHG, SOC], i, inputs, e0[i], Cap::Scale(1.0)))
        .collect::<Result<Vec<_>>>()?;
    for st in &stores {
        add_activity_cost(&mut p, st, cfg.alpha);
    }
    add_aggregate_terms(&mut p, inputs, cfg, &stores, U_COST_AGG, SharedCostForm::Linear)?;
    Ok(p)
}

fn add_aggregate_terms(
    p: &mut QpProblem,
    inputs: &SchemeInputs,
    cfg: &SchemeConfig,
    stores: &[Storage],
    cost_name: &'static str,
    form: SharedCostForm,
) -> Result<()> {
    for t in 0..inputs.len() {
        let w = inputs.shared_prices[t] * inputs.delta_t;
        if w > 0.0 {
            let key = VarKey::step(cost_name, t);
            let agg = aggregate_expr(inputs, t, stores);
            match form {
                SharedCostForm::Linear => add_hinge_cost(p, key, agg, w)?,
                SharedCostForm::Squared => add_squared_hinge_cost(p, key, agg, w)?,
            };
        }
        if cfg.lambda > 0.0 {
            let over = aggregate_expr(inputs, t, stores).plus(-inputs.k_rated);
            add_squared_hinge_cost(p, VarKey::step(S_VIOL_AGG, t), over, cfg.lambda)?;
        }
    }
    Ok(())
}

enum Weights<'a> {
    Fixed(&'a [f64]),
    Blocks {
        blocks: &'a [usize],
        pin_first: Option<&'a [f64]>,
    },
}

fn partitioned_problem(
    inputs: &SchemeInputs,
    cfg: &SchemeConfig,
    e0r: &[f64],
    e0s: &[f64],
    weights: Weights,
) -> Result<QpProblem> {
    let n = inputs.num_homes();
    let e_max = inputs.battery.e_max;
    let mut p = QpProblem::new();
    let mut retained = Vec::with_capacity(n);
    let mut shared = Vec::with_capacity(n);
    match weights {
        Weights::Fixed(w) => {
            if w.len() != n {
                invalid!("hybrid: {} retained fractions for {n} homes", w.len());
            }
            if let Some(bad) = w.iter().find(|w| !(**w >= 0.0 && **w <= 1.0)) {
                invalid!("hybrid: retained fraction {bad} outside [0, 1]");
            }
            let caps_r: Vec<f64> = w.iter().map(|w| w * e_max).collect();
            let caps_s: Vec<f64> = w.iter().map(|w| (1.0 - w) * e_max).collect();
            check_e0("hybrid retained", e0r, &caps_r, n)?;
            check_e0("hybrid shared", e0s, &caps_s, n)?;
            for i in 0..n {
                let names_r = [BR_CHG, BR_DISCHG, SOC_R];
                let names_s = [BS_CHG, BS_DISCHG, SOC_S];
                retained.push(add_storage(&mut p, names_r, i, inputs, e0r[i], Cap::Scale(w[i]))?);
                shared.push(add_storage(&mut p, names_s, i, inputs, e0s[i], Cap::Scale(1.0 - w[i]))?);
            }
        }
        Weights::Blocks { blocks, pin_first } => {
            if blocks.len() != inputs.len() {
                invalid!("dynamic: block map has {} steps, window {}", blocks.len(), inputs.len());
            }
            check_e0("dynamic retained", e0r, &vec![e_max; n], n)?;
            check_e0("dynamic shared", e0s, &vec![e_max; n], n)?;
            let n_blocks = blocks.last().map_or(0, |b| b + 1);
            for i in 0..n {
                if e0r[i] + e0s[i] > e_max + E0_TOL {
                    invalid!(
                        "dynamic: initial energies of home {i} sum to {} > {e_max}",
                        e0r[i] + e0s[i]
                    );
                }
                let w_vars = (0..n_blocks)
                    .map(|k| p.add_var(VarKey::at(W_BLOCK, i, k)))
                    .collect::<Result<Vec<_>>>()?;
                for &wv in &w_vars {
                    p.add_bounds(wv, 0.0, 1.0);
                }
                match pin_first {
                    // A pinned split already held the starting energies.
                    Some(pin) => {
                        if pin.len() != n {
                            invalid!("dynamic: {} pinned fractions for {n} homes", pin.len());
                        }
                        p.add_eq(LinExpr::var(w_vars[0]), pin[i]);
                    }
                    None if e_max > 0.0 => {
                        // The first block's split must hold the starting energies.
                        p.add_ge(LinExpr::var(w_vars[0]), e0r[i] / e_max);
                        p.add_le(LinExpr::var(w_vars[0]), 1.0 - e0s[i] / e_max);
                    }
                    None => {}
                }
                let w_of_step: Vec<usize> = blocks.iter().map(|&b| w_vars[b]).collect();
                let names_r = [BR_CHG, BR_DISCHG, SOC_R];
                let names_s = [BS_CHG, BS_DISCHG, SOC_S];
                retained.push(add_storage(&mut p, names_r, i, inputs, e0r[i], Cap::Retained(&w_of_step))?);
                shared.push(add_storage(&mut p, names_s, i, inputs, e0s[i], Cap::Shared(&w_of_step))?);
            }
        }
    }
    for st in retained.iter().chain(&shared) {
        add_activity_cost(&mut p, st, cfg.alpha);
    }
    for (i, st) in retained.iter().enumerate() {
        for t in 0..inputs.len() {
            let w = inputs.home_prices[i][t] * inputs.delta_t;
            if w > 0.0 {
                add_hinge_cost(&mut p, VarKey::at(U_COST_RET, i, t), meter_expr(inputs, i, t, st), w)?;
            }
        }
    }
    add_aggregate_terms(&mut p, inputs, cfg, &shared, U_COST_SHARED, cfg.hybrid_shared_cost_form)?;
    Ok(p)
}

/// Builds `kind` over `inputs`. For dynamic windows that start mid-block,
/// `pin_first_block` fixes the retained fraction of the first block.
pub fn build_scheme(
    inputs: &SchemeInputs,
    kind: &SchemeKind,
    cfg: &SchemeConfig,
    init: &InitialEnergy,
    pin_first_block: Option<&[f64]>,
) -> Result<SchemeProblem> {
    inputs.validate()?;
    cfg.validate()?;
    let mut blocks = None;
    let mut qp = match (kind, init) {
        (SchemeKind::Individual, InitialEnergy::Whole(e0)) => individual_problem(inputs, cfg, e0, false)?,
        (SchemeKind::IndividualUneven, InitialEnergy::Whole(e0)) => {
            individual_problem(inputs, cfg, e0, true)?
        }
        (SchemeKind::Joint, InitialEnergy::Whole(e0)) => joint_problem(inputs, cfg, e0)?,
        (SchemeKind::Hybrid { retained: w }, InitialEnergy::Split { retained, shared }) => {
            partitioned_problem(inputs, cfg, retained, shared, Weights::Fixed(w))?
        }
        (SchemeKind::Dynamic { block_hours }, InitialEnergy::Split { retained, shared }) => {
            let b = partition_blocks(inputs.start_step, inputs.len(), inputs.delta_t, *block_hours)?;
            let qp = partitioned_problem(
                inputs,
                cfg,
                retained,
                shared,
                Weights::Blocks {
                    blocks: &b,
                    pin_first: pin_first_block,
                },
            )?;
            blocks = Some(b);
            qp
        }
        (k, _) => invalid!("initial energy layout does not match scheme {}", k.label()),
    };
    add_aging_cost(&mut qp, cfg, &inputs.battery, inputs.delta_t);
    Ok(SchemeProblem {
        qp,
        kind: kind.clone(),
        cfg: cfg.clone(),
        inputs: inputs.clone(),
        init: init.clone(),
        blocks,
    })
}

pub fn build_individual(
    data: &NeighborhoodData,
    cfg: &SchemeConfig,
    window: Range<usize>,
    e0: &[f64],
) -> Result<SchemeProblem> {
    let inputs = SchemeInputs::from_data(data, window)?;
    build_scheme(&inputs, &SchemeKind::Individual, cfg, &InitialEnergy::Whole(e0.to_vec()), None)
}

pub fn build_individual_uneven(
    data: &NeighborhoodData,
    cfg: &SchemeConfig,
    window: Range<usize>,
    e0: &[f64],
) -> Result<SchemeProblem> {
    let inputs = SchemeInputs::from_data(data, window)?;
    let kind = SchemeKind::IndividualUneven;
    build_scheme(&inputs, &kind, cfg, &InitialEnergy::Whole(e0.to_vec()), None)
}

pub fn build_joint(
    data: &NeighborhoodData,
    cfg: &SchemeConfig,
    window: Range<usize>,
    e0: &[f64],
) -> Result<SchemeProblem> {
    let inputs = SchemeInputs::from_data(data, window)?;
    build_scheme(&inputs, &SchemeKind::Joint, cfg, &InitialEnergy::Whole(e0.to_vec()), None)
}

pub fn build_hybrid(
    data: &NeighborhoodData,
    cfg: &SchemeConfig,
    window: Range<usize>,
    e0_retained: &[f64],
    e0_shared: &[f64],
    retained_fraction: &[f64],
) -> Result<SchemeProblem> {
    let inputs = SchemeInputs::from_data(data, window)?;
    let kind = SchemeKind::Hybrid {
        retained: retained_fraction.to_vec(),
    };
    let init = InitialEnergy::Split {
        retained: e0_retained.to_vec(),
        shared: e0_shared.to_vec(),
    };
    build_scheme(&inputs, &kind, cfg, &init, None)
}

pub fn build_dynamic(
    data: &NeighborhoodData,
    cfg: &SchemeConfig,
    window: Range<usize>,
    e0_retained: &[f64],
    e0_shared: &[f64],
    block_hours: f64,
) -> Result<SchemeProblem> {
    let inputs = SchemeInputs::from_data(data, window)?;
    let init = InitialEnergy::Split {
        retained: e0_retained.to_vec(),
        shared: e0_shared.to_vec(),
    };
    build_scheme(&inputs, &SchemeKind::Dynamic { block_hours }, cfg, &init, None)
}
