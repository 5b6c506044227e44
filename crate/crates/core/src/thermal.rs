//! Top-oil / hottest-spot thermal model and insulation aging of an
//! oil-immersed distribution transformer.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::timeseries::{TimeGrid, TransformerSpec};

/// Hottest-spot temperature at which the aging rate is exactly 1, °C.
pub const REFERENCE_HST_C: f64 = 110.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Top-oil rise over ambient, °C.
    pub dtheta_to: f64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalTrace {
    pub hst: Vec<f64>,
    pub dtheta_to: Vec<f64>,
    pub faa: Vec<f64>,
    /// Percent loss of life accumulated up to and including each step.
    pub cum_pct_lol: Vec<f64>,
    pub feqa: f64,
    pub pct_lol: f64,
}

/// Steady-state top-oil rise for a per-unit load.
pub fn ultimate_top_oil_rise(load_pu: f64, spec: &TransformerSpec) -> f64 {
    let r = spec.loss_ratio;
    spec.dtheta_to_rated * ((load_pu * load_pu * r + 1.0) / (r + 1.0)).powf(spec.exp_n)
}

/// Hottest-spot rise over top oil for a per-unit load.
pub fn hottest_spot_rise(load_pu: f64, spec: &TransformerSpec) -> f64 {
    spec.dtheta_h_rated * load_pu.powf(2.0 * spec.exp_m)
}

/// Load-dependent oil time constant, hours. Falls back to the rated value
/// where the closed form is singular (at equilibrium or non-positive ratios).
pub fn oil_time_constant(ultimate: f64, current: f64, spec: &TransformerSpec) -> f64 {
    let u = ultimate / spec.dtheta_to_rated;
    let o = current / spec.dtheta_to_rated;
    if (ultimate - current).abs() < 1e-9 || u <= 0.0 || o <= 0.0 {
        return spec.tau_to_rated;
    }
    let inv_n = 1.0 / spec.exp_n;
    let denom = u.powf(inv_n) - o.powf(inv_n);
    if denom.abs() < 1e-15 {
        return spec.tau_to_rated;
    }
    spec.tau_to_rated * (u - o) / denom
}

/// Advances the top-oil rise by one step of `dt_h` hours at `load_pu` and
/// returns the new state with the hottest-spot rise at that load.
pub fn thermal_step(
    state: ThermalState,
    load_pu: f64,
    spec: &TransformerSpec,
    dt_h: f64,
) -> Result<(ThermalState, f64)> {
    if !(load_pu >= 0.0) {
        invalid!("per-unit load must be non-negative, got {load_pu}");
    }
    if !(dt_h > 0.0) {
        invalid!("thermal step length must be positive, got {dt_h}");
    }
    let ultimate = ultimate_top_oil_rise(load_pu, spec);
    let tau = oil_time_constant(ultimate, state.dtheta_to, spec);
    let dtheta_to = (ultimate - state.dtheta_to) * (1.0 - (-dt_h / tau).exp()) + state.dtheta_to;
    Ok((
        ThermalState {
            dtheta_to,
            step: state.step + 1,
        },
        hottest_spot_rise(load_pu, spec),
    ))
}

/// Hottest-spot temperature, °C.
pub fn hst(state: &ThermalState, dtheta_h: f64, ambient_c: f64) -> f64 {
    ambient_c + state.dtheta_to + dtheta_h
}

/// Accelerated aging rate relative to operation at 110 °C.
pub fn aging_factor(hst_c: f64) -> f64 {
    (15000.0 / 383.0 - 15000.0 / (hst_c + 273.0)).exp()
}

/// Aging factors per step, equivalent aging factor and percent loss of life.
pub fn aging(hst_series: &[f64], dt_h: f64, spec: &TransformerSpec) -> Result<(Vec<f64>, f64, f64)> {
    if hst_series.is_empty() {
        invalid!("aging needs a non-empty temperature series");
    }
    let faa: Vec<f64> = hst_series.iter().map(|&h| aging_factor(h)).collect();
    let elapsed = dt_h * faa.len() as f64;
    let feqa = faa.iter().map(|f| dt_h * f).sum::<f64>() / elapsed;
    let pct_lol = 100.0 * feqa * elapsed / spec.lifetime_h;
    Ok((faa, feqa, pct_lol))
}

/// Runs the thermal chain over an aggregate transformer loading series (kW).
/// Reverse flow loads the transformer like forward flow. The top-oil rise
/// starts at the steady state of the first step's load.
pub fn simulate_transformer(
    aggregate_kw: &[f64],
    spec: &TransformerSpec,
    grid: &TimeGrid,
) -> Result<ThermalTrace> {
    if aggregate_kw.len() != grid.num_steps {
        invalid!(
            "loading series has {} steps, grid has {}",
            aggregate_kw.len(),
            grid.num_steps
        );
    }
    let dt = grid.delta_t;
    let load_pu: Vec<f64> = aggregate_kw.iter().map(|p| p.abs() / spec.k_rated).collect();
    let mut state = ThermalState {
        dtheta_to: ultimate_top_oil_rise(load_pu[0], spec),
        step: 0,
    };
    let mut hst_series = Vec::with_capacity(load_pu.len());
    let mut dtheta_to = Vec::with_capacity(load_pu.len());
    for &l in &load_pu {
        let (next, dtheta_h) = thermal_step(state, l, spec, dt)?;
        state = next;
        dtheta_to.push(state.dtheta_to);
        hst_series.push(hst(&state, dtheta_h, spec.ambient_c));
    }
    let (faa, feqa, pct_lol) = aging(&hst_series, dt, spec)?;
    let mut acc = 0.0;
    let cum_pct_lol = faa
        .iter()
        .map(|f| {
            acc += 100.0 * dt * f / spec.lifetime_h;
            acc
        })
        .collect();
    Ok(ThermalTrace {
        hst: hst_series,
        dtheta_to,
        faa,
        cum_pct_lol,
        feqa,
        pct_lol,
    })
}

impl ThermalTrace {
    /// `step,hst_c,dtheta_to_c,faa` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["step", "hst_c", "dtheta_to_c", "faa"])?;
        for t in 0..self.hst.len() {
            wtr.write_record([
                t.to_string(),
                self.hst[t].to_string(),
                self.dtheta_to[t].to_string(),
                self.faa[t].to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| crate::Error::io("<thermal csv>", e))?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({ "feqa": self.feqa, "pct_lol": self.pct_lol })
    }
}
