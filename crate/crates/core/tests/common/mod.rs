#![allow(dead_code)]

use std::collections::BTreeMap;

use vbess_core::app::RunConfig;
use vbess_core::mpc::MpcRun;
use vbess_core::schemes::SchemeSolution;
use vbess_core::study::TrialSpec;
use vbess_core::thermal::simulate_transformer;
use vbess_core::timeseries::{
    BatterySpec, HomeProfile, NeighborhoodData, TariffSchedule, TimeGrid, TransformerSpec,
    SLOTS_PER_DAY,
};

/// Tariff whose first weekday slots are `prices` (grid must start on a
/// Monday at midnight with half-hour steps and at most 48 steps).
pub fn tariff_from_steps(prices: &[f64]) -> TariffSchedule {
    assert!(prices.len() <= SLOTS_PER_DAY);
    let mut table = vec![prices.last().copied().unwrap_or(0.0); SLOTS_PER_DAY];
    table[..prices.len()].copy_from_slice(prices);
    TariffSchedule {
        name: "steps".into(),
        weekday_prices: table.clone(),
        weekend_prices: table,
    }
}

pub fn home(id: &str, load: Vec<f64>, solar: Vec<f64>, ev: Vec<f64>) -> HomeProfile {
    HomeProfile {
        home_id: id.into(),
        load_kw: load,
        solar_kw: solar,
        ev_kw: ev,
    }
}

pub fn load_only(id: &str, load: Vec<f64>) -> HomeProfile {
    let n = load.len();
    home(id, load, vec![0.0; n], vec![0.0; n])
}

/// Half-hourly neighborhood on one per-step price series.
pub fn toy(homes: Vec<HomeProfile>, prices: &[f64], k_rated: f64, battery: BatterySpec) -> NeighborhoodData {
    let grid = TimeGrid::half_hourly(homes[0].len());
    let transformer = TransformerSpec {
        k_rated,
        ..TransformerSpec::default()
    };
    NeighborhoodData::uniform_tariff(grid, homes, tariff_from_steps(prices), transformer, battery).unwrap()
}

/// Synthetic study configuration used by property-level tests.
pub fn study_config(seed: u64, num_steps: usize, history_days: usize) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        num_steps,
        history_days,
        ..RunConfig::default()
    };
    cfg.pool.size = 40;
    cfg
}

/// Neighborhood of trial `index` of `cfg` plus its evaluation range.
pub fn trial(cfg: &RunConfig, index: usize) -> (TrialSpec, NeighborhoodData) {
    let pool = cfg.home_pool().unwrap();
    let spec = cfg.trial(index, &pool).unwrap();
    let data = spec.neighborhood().unwrap();
    (spec, data)
}

pub fn same_tariffs(data: &NeighborhoodData) -> bool {
    let shared = &data.shared_tariff;
    data.tariff_of_home.values().all(|t| t == shared)
}

pub fn one_tariff_map(homes: &[HomeProfile], t: &TariffSchedule) -> BTreeMap<String, TariffSchedule> {
    homes.iter().map(|h| (h.home_id.clone(), t.clone())).collect()
}

/// Worst values of the schedule hygiene checks.
#[derive(Debug, Default, Clone, Copy)]
pub struct Hygiene {
    pub solves: usize,
    pub simultaneous_kw: f64,
    pub soc_excursion_kwh: f64,
    pub hinge_gap: f64,
    pub soc_residual_kwh: f64,
    pub lol_monotone: bool,
    pub traces: usize,
}

impl Hygiene {
    pub fn new() -> Self {
        Hygiene {
            lol_monotone: true,
            ..Default::default()
        }
    }

    pub fn absorb_solution(&mut self, sol: &SchemeSolution, battery: &BatterySpec, transformer: &TransformerSpec) {
        for h in &sol.homes {
            let stores: Vec<(&[f64], &[f64], &[f64], f64)> = match &h.partitions {
                Some(p) => vec![
                    (&p.retained.chg[..], &p.retained.dis[..], &p.retained.soc[..], battery.e_max),
                    (&p.shared.chg[..], &p.shared.dis[..], &p.shared.soc[..], battery.e_max),
                ],
                None => vec![(&h.b_chg[..], &h.b_dischg[..], &h.soc[..], battery.e_max)],
            };
            for (c, d, soc, cap) in stores {
                for t in 0..c.len() {
                    self.simultaneous_kw = self.simultaneous_kw.max(c[t].min(d[t]));
                    let expect = soc[t] + battery.energy_delta(c[t], d[t], sol.delta_t);
                    self.soc_residual_kwh = self.soc_residual_kwh.max((soc[t + 1] - expect).abs());
                }
                for &e in soc {
                    self.soc_excursion_kwh = self.soc_excursion_kwh.max(-e).max(e - cap);
                }
            }
            if let Some(p) = &h.partitions {
                for t in 0..p.weights.len() {
                    let w = p.weights[t];
                    let over_r = p.retained.soc[t + 1] - w * battery.e_max;
                    let over_s = p.shared.soc[t + 1] - (1.0 - w) * battery.e_max;
                    self.soc_excursion_kwh = self.soc_excursion_kwh.max(over_r).max(over_s);
                }
            }
        }
        let grid = TimeGrid::half_hourly(sol.len());
        let trace = simulate_transformer(&sol.aggregate_meter(), transformer, &grid).unwrap();
        self.traces += 1;
        self.lol_monotone &= trace.cum_pct_lol.windows(2).all(|w| w[1] >= w[0]);
    }

    pub fn absorb_run(&mut self, run: &MpcRun, battery: &BatterySpec, transformer: &TransformerSpec) {
        self.solves += run.diagnostics.len();
        for d in &run.diagnostics {
            self.hinge_gap = self.hinge_gap.max(d.hinge_gap);
        }
        self.absorb_solution(&run.solution, battery, transformer);
    }

    pub fn passes(&self) -> bool {
        self.simultaneous_kw <= 1e-4
            && self.soc_excursion_kwh <= 1e-6
            && self.hinge_gap <= 1e-5
            && self.lol_monotone
    }
}
