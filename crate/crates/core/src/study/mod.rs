//! Randomised neighborhood trials: sampling, billing, scheme comparison and
//! partition sweeps.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::forecast::Forecaster;
use crate::mpc::{run_mpc, run_perfect_foresight_over, MpcOptions, MpcRun};
use crate::qp::SolveOptions;
use crate::schemes::{SchemeConfig, SchemeKind};
use crate::thermal::{simulate_transformer, ThermalTrace};
use crate::timeseries::{BatterySpec, HomeProfile, NeighborhoodData, TariffSchedule, TimeGrid, TransformerSpec};

mod report;

pub use report::{quantile, summarize, write_report_csv, write_sweep_csv, ReportRow, SweepRow};

/// Seed of the named sub-stream `name` (index `index`) of `master`.
pub fn derive_seed(master: u64, name: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in master
        .to_le_bytes()
        .iter()
        .chain(name.as_bytes())
        .chain(&index.to_le_bytes())
    {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn substream(master: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, name, index))
}

/// Which series is summed when sizing a neighborhood against the
/// transformer rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingBasis {
    /// Household load only.
    #[default]
    Load,
    /// Load net of solar.
    NetLoad,
    /// Load plus EV charging.
    LoadWithEv,
}

impl SamplingBasis {
    fn value(self, h: &HomeProfile, t: usize) -> f64 {
        match self {
            SamplingBasis::Load => h.load_kw[t],
            SamplingBasis::NetLoad => h.load_kw[t] - h.solar_kw[t],
            SamplingBasis::LoadWithEv => h.load_kw[t] + h.ev_kw[t],
        }
    }
}

/// Shuffles `pool` and returns the shortest prefix whose summed series
/// (over `window`) peaks above `k_rated`.
pub fn sample_trial<R: rand::Rng>(
    pool: &[HomeProfile],
    window: Range<usize>,
    k_rated: f64,
    basis: SamplingBasis,
    rng: &mut R,
) -> Result<Vec<HomeProfile>> {
    if window.is_empty() || pool.iter().any(|h| h.len() < window.end) {
        invalid!("sampling window {:?} is empty or exceeds the pool profiles", window);
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(rng);
    let mut sum = vec![0.0; window.len()];
    for (k, &i) in order.iter().enumerate() {
        for (s, t) in sum.iter_mut().zip(window.clone()) {
            *s += basis.value(&pool[i], t);
        }
        if sum.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > k_rated {
            return Ok(order[..=k].iter().map(|&i| pool[i].clone()).collect());
        }
    }
    invalid!(
        "home pool of {} cannot exceed the {k_rated} kW transformer rating",
        pool.len()
    )
}

/// How a set of meters is billed.
#[derive(Debug, Clone, Copy)]
pub enum Billing<'a> {
    /// Each home on its own meter and price series.
    PerHome(&'a [Vec<f64>]),
    /// The summed meter on one price series.
    Aggregate(&'a [f64]),
}

/// Energy bill in $. Exports earn nothing.
pub fn bill(meters: &[Vec<f64>], billing: Billing<'_>, delta_t: f64) -> f64 {
    let n = meters.first().map_or(0, Vec::len);
    match billing {
        Billing::PerHome(prices) => meters
            .iter()
            .zip(prices)
            .map(|(m, c)| m.iter().zip(c).map(|(m, c)| c * m.max(0.0) * delta_t).sum::<f64>())
            .sum(),
        Billing::Aggregate(prices) => (0..n)
            .map(|t| {
                let agg: f64 = meters.iter().map(|m| m[t]).sum();
                prices[t] * agg.max(0.0) * delta_t
            })
            .sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Individual,
    IndividualUneven,
    Joint,
    Hybrid,
    Dynamic,
}

impl SchemeName {
    pub const ALL: [SchemeName; 5] = [
        SchemeName::Individual,
        SchemeName::IndividualUneven,
        SchemeName::Joint,
        SchemeName::Hybrid,
        SchemeName::Dynamic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SchemeName::Individual => "individual",
            SchemeName::IndividualUneven => "individual_uneven",
            SchemeName::Joint => "joint",
            SchemeName::Hybrid => "hybrid",
            SchemeName::Dynamic => "dynamic",
        }
    }

    /// Individual schemes bill each home; sharing schemes bill the aggregate.
    pub fn aggregate_billing(self) -> bool {
        matches!(self, SchemeName::Joint | SchemeName::Hybrid | SchemeName::Dynamic)
    }
}

impl std::str::FromStr for SchemeName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SchemeName::ALL
            .into_iter()
            .find(|n| n.label() == s || (s == "uneven" && *n == SchemeName::IndividualUneven))
            .ok_or_else(|| {
                format!("unknown scheme '{s}' (expected individual, individual_uneven, joint, hybrid or dynamic)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Controller {
    Foresight,
    Mpc { forecaster: Forecaster, horizon_steps: usize },
}

impl Controller {
    pub fn label(&self) -> String {
        match self {
            Controller::Foresight => "foresight".into(),
            Controller::Mpc { forecaster, .. } => match forecaster {
                Forecaster::Naive => "mpc_naive".into(),
                Forecaster::Oracle => "mpc_oracle".into(),
            },
        }
    }
}

/// Scheme and solver parameters shared by all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyParams {
    pub scheme: SchemeConfig,
    /// Retained fraction of every battery under the hybrid scheme.
    pub hybrid_retained: f64,
    pub dynamic_block_hours: f64,
    pub solve: SolveOptions,
    pub report_wall_time: bool,
}

impl Default for StudyParams {
    fn default() -> Self {
        StudyParams {
            scheme: SchemeConfig::default(),
            hybrid_retained: 0.5,
            dynamic_block_hours: 2.0,
            solve: SolveOptions::default(),
            report_wall_time: false,
        }
    }
}

impl StudyParams {
    pub fn kind(&self, name: SchemeName, n_homes: usize) -> SchemeKind {
        match name {
            SchemeName::Individual => SchemeKind::Individual,
            SchemeName::IndividualUneven => SchemeKind::IndividualUneven,
            SchemeName::Joint => SchemeKind::Joint,
            SchemeName::Hybrid => SchemeKind::hybrid_uniform(self.hybrid_retained, n_homes),
            SchemeName::Dynamic => SchemeKind::Dynamic {
                block_hours: self.dynamic_block_hours,
            },
        }
    }
}

/// One randomised neighborhood drawn from a pool of homes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub seed: u64,
    pub home_pool: Vec<HomeProfile>,
    /// Grid of the pool profiles.
    pub grid: TimeGrid,
    /// Tariff per home id; homes missing here use `default_tariff`.
    pub tariff_of_home: BTreeMap<String, TariffSchedule>,
    pub default_tariff: TariffSchedule,
    pub shared_tariff: TariffSchedule,
    pub transformer: TransformerSpec,
    pub battery: BatterySpec,
    /// Evaluated steps of the pool grid.
    pub month_window: Range<usize>,
    /// Steps before `month_window` available as forecast history.
    pub history_steps: usize,
    pub sampling_basis: SamplingBasis,
}

impl TrialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.month_window.is_empty() || self.month_window.end > self.grid.num_steps {
            invalid!(
                "trial window {:?} is empty or exceeds the {}-step pool",
                self.month_window,
                self.grid.num_steps
            );
        }
        if self.history_steps > self.month_window.start {
            invalid!(
                "{} history steps requested before window start {}",
                self.history_steps,
                self.month_window.start
            );
        }
        Ok(())
    }

    /// Draws the neighborhood and assembles its data over history plus
    /// window; the window occupies the last `month_window.len()` steps.
    pub fn neighborhood(&self) -> Result<NeighborhoodData> {
        self.validate()?;
        let mut rng = substream(self.seed, "sampling", 0);
        let homes = sample_trial(
            &self.home_pool,
            self.month_window.clone(),
            self.transformer.k_rated,
            self.sampling_basis,
            &mut rng,
        )?;
        let range = self.month_window.start - self.history_steps..self.month_window.end;
        let tariff_of_home = homes
            .iter()
            .map(|h| {
                let t = self.tariff_of_home.get(&h.home_id).unwrap_or(&self.default_tariff);
                (h.home_id.clone(), t.clone())
            })
            .collect();
        let data = NeighborhoodData {
            grid: self.grid.clone(),
            homes,
            tariff_of_home,
            shared_tariff: self.shared_tariff.clone(),
            transformer: self.transformer.clone(),
            battery: self.battery.clone(),
        }
        .slice(range)?;
        data.validate()?;
        Ok(data)
    }

    pub fn eval_range(&self) -> Range<usize> {
        self.history_steps..self.history_steps + self.month_window.len()
    }
}

/// Realized results of one scheme (or the no-battery baseline) on a trial.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub row: ReportRow,
    pub thermal: ThermalTrace,
    pub run: Option<MpcRun>,
}

/// Rows plus artifacts of one trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub data: NeighborhoodData,
    pub outcomes: Vec<SchemeOutcome>,
}

impl TrialOutcome {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.outcomes.iter().map(|o| o.row.clone()).collect()
    }
}

struct Metrics<'a> {
    trial_seed: u64,
    scheme: &'a str,
    controller: String,
    aggregate_billing: bool,
    wall_ms: Option<f64>,
}

fn realized_outcome(
    data: &NeighborhoodData,
    eval: Range<usize>,
    meters: &[Vec<f64>],
    throughput_kwh: f64,
    m: Metrics<'_>,
) -> Result<SchemeOutcome> {
    let grid = data.grid.slice(eval.clone())?;
    let dt = grid.delta_t;
    let cost_usd = if m.aggregate_billing {
        let prices = &data.shared_prices()?[eval];
        bill(meters, Billing::Aggregate(prices), dt)
    } else {
        let prices: Vec<Vec<f64>> = data
            .home_prices()?
            .into_iter()
            .map(|p| p[eval.clone()].to_vec())
            .collect();
        bill(meters, Billing::PerHome(&prices), dt)
    };
    let agg: Vec<f64> = (0..grid.num_steps)
        .map(|t| meters.iter().map(|m| m[t]).sum())
        .collect();
    let k = data.transformer.k_rated;
    let thermal = simulate_transformer(&agg, &data.transformer, &grid)?;
    let e_max = data.battery.e_max;
    Ok(SchemeOutcome {
        row: ReportRow {
            trial_seed: m.trial_seed,
            scheme: m.scheme.to_string(),
            controller: m.controller,
            cost_usd,
            pct_lol: thermal.pct_lol,
            violations: agg.iter().filter(|&&a| a > k).count(),
            violation_kwh: agg.iter().map(|a| (a - k).max(0.0) * dt).sum(),
            throughput_kwh,
            cycles: if e_max > 0.0 { throughput_kwh / (2.0 * e_max) } else { 0.0 },
            wall_ms: m.wall_ms,
        },
        thermal,
        run: None,
    })
}

/// Runs `kind` on a trial's data under `controller` over the evaluation range.
pub fn run_controller(
    data: &NeighborhoodData,
    eval: Range<usize>,
    kind: &SchemeKind,
    params: &StudyParams,
    controller: &Controller,
) -> Result<MpcRun> {
    match *controller {
        Controller::Foresight => run_perfect_foresight_over(data, eval, kind, &params.scheme, &params.solve),
        Controller::Mpc {
            forecaster,
            horizon_steps,
        } => run_mpc(
            data,
            kind,
            &params.scheme,
            &MpcOptions {
                horizon_steps,
                forecaster,
                control: Some(eval),
                solve: params.solve,
            },
        ),
    }
}

/// The no-battery baseline followed by each requested scheme.
pub fn compare_schemes(
    trial: &TrialSpec,
    schemes: &[SchemeName],
    params: &StudyParams,
    controller: &Controller,
) -> Result<TrialOutcome> {
    let data = trial.neighborhood()?;
    let eval = trial.eval_range();
    let mut outcomes = Vec::with_capacity(schemes.len() + 1);
    let raw: Vec<Vec<f64>> = data
        .homes
        .iter()
        .map(|h| eval.clone().map(|t| h.net_demand(t)).collect())
        .collect();
    outcomes.push(realized_outcome(
        &data,
        eval.clone(),
        &raw,
        0.0,
        Metrics {
            trial_seed: trial.seed,
            scheme: "no_bess",
            controller: "none".into(),
            aggregate_billing: false,
            wall_ms: params.report_wall_time.then_some(0.0),
        },
    )?);
    for &name in schemes {
        let kind = params.kind(name, data.num_homes());
        let started = std::time::Instant::now();
        let run = run_controller(&data, eval.clone(), &kind, params, controller)?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let meters: Vec<Vec<f64>> = run.solution.homes.iter().map(|h| h.meter.clone()).collect();
        let throughput: f64 = run
            .solution
            .homes
            .iter()
            .map(|h| h.b_chg.iter().chain(&h.b_dischg).sum::<f64>() * data.grid.delta_t)
            .sum();
        let mut out = realized_outcome(
            &data,
            eval.clone(),
            &meters,
            throughput,
            Metrics {
                trial_seed: trial.seed,
                scheme: name.label(),
                controller: controller.label(),
                aggregate_billing: name.aggregate_billing(),
                wall_ms: params.report_wall_time.then_some(wall_ms),
            },
        )?;
        out.run = Some(run);
        outcomes.push(out);
    }
    Ok(TrialOutcome { data, outcomes })
}

/// Hybrid foresight runs at each shared fraction (retained `W = 1 - f`),
/// billed on the aggregate meter.
pub fn sweep_partition(
    trial: &TrialSpec,
    fractions_shared: &[f64],
    params: &StudyParams,
) -> Result<Vec<SweepRow>> {
    Ok(sweep_partition_runs(trial, fractions_shared, params)?
        .into_iter()
        .map(|(row, _)| row)
        .collect())
}

/// [`sweep_partition`] keeping each run.
pub fn sweep_partition_runs(
    trial: &TrialSpec,
    fractions_shared: &[f64],
    params: &StudyParams,
) -> Result<Vec<(SweepRow, MpcRun)>> {
    if let Some(f) = fractions_shared.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        invalid!("shared fraction {f} outside [0, 1]");
    }
    let data = trial.neighborhood()?;
    let eval = trial.eval_range();
    let prices = data.shared_prices()?[eval.clone()].to_vec();
    fractions_shared
        .iter()
        .map(|&f| {
            let kind = SchemeKind::hybrid_uniform(1.0 - f, data.num_homes());
            let run = run_perfect_foresight_over(&data, eval.clone(), &kind, &params.scheme, &params.solve)?;
            let meters: Vec<Vec<f64>> = run.solution.homes.iter().map(|h| h.meter.clone()).collect();
            let row = SweepRow {
                fraction_shared: f,
                trial_seed: trial.seed,
                cost_usd: bill(&meters, Billing::Aggregate(&prices), data.grid.delta_t),
            };
            Ok((row, run))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_home(id: &str, peak: f64, at: usize, n: usize) -> HomeProfile {
        let mut load = vec![0.5; n];
        load[at] = peak;
        HomeProfile {
            home_id: id.into(),
            load_kw: load,
            solar_kw: vec![0.0; n],
            ev_kw: vec![0.0; n],
        }
    }

    #[test]
    fn bill_fixture() {
        let m = vec![vec![-1.0, 2.0, 3.0]];
        let c = vec![vec![0.3, 0.3, 0.5]];
        assert!((bill(&m, Billing::PerHome(&c), 0.5) - 1.05).abs() < 1e-12);
        assert!((bill(&m, Billing::Aggregate(&c[0]), 0.5) - 1.05).abs() < 1e-12);
    }

    #[test]
    fn no_net_metering() {
        let m = vec![vec![-1.0, -2.0]];
        assert_eq!(bill(&m, Billing::PerHome(&[vec![1.0, 1.0]]), 0.5), 0.0);
        let pair = vec![vec![5.0], vec![-5.0]];
        assert_eq!(bill(&pair, Billing::Aggregate(&[1.0]), 1.0), 0.0);
        assert_eq!(bill(&pair, Billing::PerHome(&[vec![1.0], vec![1.0]]), 1.0), 5.0);
    }

    #[test]
    fn six_simultaneous_five_kw_homes() {
        let pool: Vec<_> = (0..10).map(|i| flat_home(&format!("h{i}"), 5.0, 3, 8)).collect();
        let mut rng = substream(1, "sampling", 0);
        // 0.5 kW elsewhere never matters; 5 kW peaks coincide.
        let got = sample_trial(&pool, 0..8, 25.0, SamplingBasis::Load, &mut rng).unwrap();
        assert_eq!(got.len(), 6);
    }

    #[test]
    fn single_large_home() {
        let pool = vec![flat_home("big", 30.0, 0, 4), flat_home("small", 1.0, 0, 4)];
        for seed in 0..8 {
            let mut rng = substream(seed, "sampling", 0);
            let got = sample_trial(&pool, 0..4, 25.0, SamplingBasis::Load, &mut rng).unwrap();
            assert_eq!(got.last().unwrap().home_id, "big");
        }
    }

    #[test]
    fn insufficient_pool() {
        let pool = vec![flat_home("a", 2.0, 0, 4)];
        let mut rng = substream(0, "sampling", 0);
        assert!(sample_trial(&pool, 0..4, 25.0, SamplingBasis::Load, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let pool: Vec<_> = (0..20).map(|i| flat_home(&format!("h{i}"), 3.0 + i as f64 * 0.1, i % 4, 8)).collect();
        let draw = |s| {
            let mut rng = substream(s, "sampling", 0);
            sample_trial(&pool, 0..8, 25.0, SamplingBasis::Load, &mut rng)
                .unwrap()
                .into_iter()
                .map(|h| h.home_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }

    #[test]
    fn derived_seeds_differ_by_name_and_index() {
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
        assert_eq!(derive_seed(3, "x", 2), derive_seed(3, "x", 2));
    }

    #[test]
    fn scheme_names_parse() {
        assert_eq!("joint".parse::<SchemeName>().unwrap(), SchemeName::Joint);
        assert_eq!("uneven".parse::<SchemeName>().unwrap(), SchemeName::IndividualUneven);
        assert!("shared".parse::<SchemeName>().is_err());
    }
}
