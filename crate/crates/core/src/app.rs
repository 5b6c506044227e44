//! Run configuration and the `generate`, `run` and `sweep` commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forecast::Forecaster;
use crate::qp::SolveOptions;
use crate::schemes::SchemeConfig;
use crate::study::{
    derive_seed, substream, summarize, write_report_csv, write_sweep_csv, compare_schemes,
    sweep_partition, Controller, ReportRow, SamplingBasis, SchemeName, StudyParams, SweepRow,
    TrialOutcome, TrialSpec,
};
use crate::timeseries::{synthesize_neighborhood, Season, SynthesisConfig};
use crate::timeseries::{
    default_start, load_profiles, write_profiles, BatterySpec, HomeProfile, TariffSchedule,
    TimeGrid, TransformerSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerName {
    Foresight,
    Mpc,
}

impl std::str::FromStr for ControllerName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "foresight" => Ok(ControllerName::Foresight),
            "mpc" => Ok(ControllerName::Mpc),
            other => Err(format!("unknown controller '{other}' (expected foresight or mpc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauUnit {
    Hours,
    Seconds,
}

/// Where the pool of candidate homes comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    /// Profiles CSV; synthetic homes are generated when absent.
    pub profiles_path: Option<PathBuf>,
    pub size: usize,
    pub season: Season,
    /// Overrides the season's synthesis defaults.
    pub synthesis: Option<SynthesisConfig>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            profiles_path: None,
            size: 48,
            season: Season::Summer,
            synthesis: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TariffConfig {
    /// Plans drawn uniformly per home (builtin names or JSON paths).
    pub home: Vec<String>,
    /// Plan for aggregate billing.
    pub shared: String,
}

impl Default for TariffConfig {
    fn default() -> Self {
        TariffConfig {
            home: vec!["ev2a".into()],
            shared: "ev2a".into(),
        }
    }
}

fn resolve_tariff(name: &str) -> Result<TariffSchedule> {
    if let Some(t) = TariffSchedule::builtin(name) {
        return Ok(t);
    }
    let path = Path::new(name);
    if path.extension().is_some_and(|e| e == "json") {
        return TariffSchedule::from_json_file(path);
    }
    invalid!("tariff '{name}' is neither a builtin plan (ev2a, ev-b, tou-d) nor a .json file")
}

/// Complete, validated description of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub schemes: Vec<SchemeName>,
    pub controller: ControllerName,
    pub forecaster: Forecaster,
    pub horizon_steps: usize,
    pub delta_t: f64,
    /// Evaluated steps per trial.
    pub num_steps: usize,
    /// Days of data kept before the evaluated window as forecast history.
    pub history_days: usize,
    pub start: NaiveDateTime,
    pub scheme: SchemeConfig,
    pub battery: BatterySpec,
    pub transformer: TransformerSpec,
    pub tau_unit: TauUnit,
    /// Retained fraction `W` of each battery under the hybrid scheme.
    pub hybrid_retained: f64,
    pub dynamic_block_hours: f64,
    pub sweep_fractions: Vec<f64>,
    pub sampling_basis: SamplingBasis,
    pub pool: PoolConfig,
    pub tariffs: TariffConfig,
    pub solver: SolveOptions,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    pub report_wall_time: bool,
    pub write_trajectories: bool,
    pub write_thermal: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            trials: 50,
            schemes: SchemeName::ALL.to_vec(),
            controller: ControllerName::Foresight,
            forecaster: Forecaster::Naive,
            horizon_steps: 48,
            delta_t: 0.5,
            num_steps: 1344,
            history_days: 4,
            start: default_start(),
            scheme: SchemeConfig::default(),
            battery: BatterySpec::default(),
            transformer: TransformerSpec::default(),
            tau_unit: TauUnit::Hours,
            hybrid_retained: 0.5,
            dynamic_block_hours: 2.0,
            sweep_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sampling_basis: SamplingBasis::Load,
            pool: PoolConfig::default(),
            tariffs: TariffConfig::default(),
            solver: SolveOptions::default(),
            out_dir: PathBuf::from("out"),
            jobs: None,
            report_wall_time: false,
            write_trajectories: false,
            write_thermal: false,
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub schemes: Option<Vec<SchemeName>>,
    pub controller: Option<ControllerName>,
    pub forecaster: Option<Forecaster>,
    pub trials: Option<usize>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = &o.schemes {
            self.schemes = s.clone();
        }
        if let Some(c) = o.controller {
            self.controller = c;
        }
        if let Some(f) = o.forecaster {
            self.forecaster = f;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if o.jobs.is_some() {
            self.jobs = o.jobs;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            invalid!("trials must be at least 1");
        }
        if self.horizon_steps == 0 {
            invalid!("horizon_steps must be at least 1");
        }
        if self.num_steps == 0 {
            invalid!("num_steps must be at least 1");
        }
        if self.jobs == Some(0) {
            invalid!("jobs must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.hybrid_retained) {
            invalid!("hybrid_retained must lie in [0, 1], got {}", self.hybrid_retained);
        }
        if let Some(f) = self.sweep_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            invalid!("sweep fraction {f} outside [0, 1]");
        }
        if self.pool.size == 0 && self.pool.profiles_path.is_none() {
            invalid!("pool.size must be at least 1");
        }
        if self.tariffs.home.is_empty() {
            invalid!("tariffs.home must name at least one plan");
        }
        for name in self.tariffs.home.iter().chain([&self.tariffs.shared]) {
            resolve_tariff(name)?;
        }
        let grid = self.pool_grid()?;
        if self.controller == ControllerName::Mpc && self.forecaster == Forecaster::Naive {
            let spd = grid.steps_per_day().unwrap_or(0);
            if self.history_days == 0 || spd == 0 {
                invalid!("naive MPC needs history_days >= 1 and a step that divides one day");
            }
        }
        crate::schemes::partition_blocks(0, 1, self.delta_t, self.dynamic_block_hours)?;
        self.scheme.validate()?;
        self.battery.validate()?;
        self.transformer().validate()?;
        self.solver.validate()?;
        if let Some(s) = &self.pool.synthesis {
            s.validate()?;
        }
        Ok(())
    }

    /// Transformer parameters with the time constant in hours.
    pub fn transformer(&self) -> TransformerSpec {
        let mut t = self.transformer.clone();
        if self.tau_unit == TauUnit::Seconds {
            t.tau_to_rated /= 3600.0;
        }
        t
    }

    pub fn history_steps(&self) -> usize {
        let spd = (24.0 / self.delta_t).round() as usize;
        self.history_days * spd
    }

    /// Grid covering history plus the evaluated window.
    pub fn pool_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.delta_t, self.history_steps() + self.num_steps, self.start)
    }

    pub fn params(&self) -> StudyParams {
        StudyParams {
            scheme: self.scheme.clone(),
            hybrid_retained: self.hybrid_retained,
            dynamic_block_hours: self.dynamic_block_hours,
            solve: self.solver,
            report_wall_time: self.report_wall_time,
        }
    }

    pub fn controller(&self) -> Controller {
        match self.controller {
            ControllerName::Foresight => Controller::Foresight,
            ControllerName::Mpc => Controller::Mpc {
                forecaster: self.forecaster,
                horizon_steps: self.horizon_steps,
            },
        }
    }

    /// Pool of candidate homes over [`RunConfig::pool_grid`].
    pub fn home_pool(&self) -> Result<Vec<HomeProfile>> {
        let grid = self.pool_grid()?;
        match &self.pool.profiles_path {
            Some(path) => load_profiles(path, &grid),
            None => {
                let params = self
                    .pool
                    .synthesis
                    .clone()
                    .unwrap_or_else(|| SynthesisConfig::for_season(self.pool.season));
                synthesize_neighborhood(derive_seed(self.seed, "synthesis", 0), self.pool.size, &grid, &params)
            }
        }
    }

    /// The specification of trial `index`.
    pub fn trial(&self, index: usize, pool: &[HomeProfile]) -> Result<TrialSpec> {
        let seed = derive_seed(self.seed, "trial", index as u64);
        let plans = self
            .tariffs
            .home
            .iter()
            .map(|n| resolve_tariff(n))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = substream(seed, "tariffs", 0);
        let tariff_of_home: BTreeMap<String, TariffSchedule> = pool
            .iter()
            .map(|h| (h.home_id.clone(), plans.choose(&mut rng).expect("non-empty").clone()))
            .collect();
        let history = self.history_steps();
        Ok(TrialSpec {
            seed,
            home_pool: pool.to_vec(),
            grid: self.pool_grid()?,
            tariff_of_home,
            default_tariff: plans[0].clone(),
            shared_tariff: resolve_tariff(&self.tariffs.shared)?,
            transformer: self.transformer(),
            battery: self.battery.clone(),
            month_window: history..history + self.num_steps,
            history_steps: history,
            sampling_basis: self.sampling_basis,
        })
    }
}

/// Process exit code for an error: 2 for invalid input, 3 for solver
/// failure, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Ingestion(_) | Error::Json(_) => 2,
        Error::Solver { .. } => 3,
        _ => 1,
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn json_with_config(cfg: &RunConfig, key: &str, value: serde_json::Value) -> Result<Vec<u8>> {
    let mut obj = serde_json::Map::new();
    obj.insert("config".into(), serde_json::to_value(cfg)?);
    obj.insert(key.into(), value);
    let mut out = serde_json::to_vec_pretty(&serde_json::Value::Object(obj))?;
    out.push(b'\n');
    Ok(out)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Internal(format!("thread pool: {e}"))),
    }
}

/// Writes a synthetic profiles CSV of `n_homes` over `days` half-hourly days.
pub fn cmd_generate(seed: u64, n_homes: usize, days: usize, season: Season, out_path: &Path) -> Result<()> {
    if days == 0 {
        invalid!("days must be at least 1");
    }
    let grid = TimeGrid::half_hourly(days * 48);
    let homes = synthesize_neighborhood(seed, n_homes, &grid, &SynthesisConfig::for_season(season))?;
    let mut buf = Vec::new();
    write_profiles(&mut buf, &homes)?;
    write_atomic(out_path, &buf)
}

/// Paths of the files a run wrote.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    pub report_csv: PathBuf,
    pub summary_json: PathBuf,
    pub rows: Vec<ReportRow>,
}

/// Runs every trial of `cfg` and writes the report, summary and optional
/// per-trial artifacts into `cfg.out_dir`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutputs> {
    cfg.validate()?;
    let pool = cfg.home_pool()?;
    let params = cfg.params();
    let controller = cfg.controller();
    let trials = (0..cfg.trials)
        .map(|i| cfg.trial(i, &pool))
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<Result<TrialOutcome>> = with_pool(cfg.jobs, || {
        trials
            .par_iter()
            .map(|t| compare_schemes(t, &cfg.schemes, &params, &controller))
            .collect()
    })?;
    let mut rows = Vec::new();
    for (trial, outcome) in trials.iter().zip(outcomes) {
        let outcome = outcome?;
        rows.extend(outcome.rows());
        write_trial_artifacts(cfg, trial.seed, &outcome)?;
    }
    let mut csv = Vec::new();
    write_report_csv(&mut csv, &rows)?;
    let report_csv = cfg.out_dir.join("study_report.csv");
    write_atomic(&report_csv, &csv)?;
    let summary_json = cfg.out_dir.join("study_summary.json");
    write_atomic(&summary_json, &json_with_config(cfg, "summary", summarize(&rows))?)?;
    Ok(RunOutputs {
        report_csv,
        summary_json,
        rows,
    })
}

fn write_trial_artifacts(cfg: &RunConfig, seed: u64, outcome: &TrialOutcome) -> Result<()> {
    for o in &outcome.outcomes {
        let stem = format!("trial_{seed}_{}", o.row.scheme);
        if cfg.write_thermal {
            let mut buf = Vec::new();
            o.thermal.write_csv(&mut buf)?;
            write_atomic(&cfg.out_dir.join("thermal").join(format!("{stem}.csv")), &buf)?;
        }
        if let (true, Some(run)) = (cfg.write_trajectories, &o.run) {
            let mut value = run.solution.to_json();
            value["controller"] = o.row.controller.clone().into();
            value["home_ids"] = outcome
                .data
                .homes
                .iter()
                .map(|h| h.home_id.clone())
                .collect::<Vec<_>>()
                .into();
            let dir = cfg.out_dir.join("trajectories");
            write_atomic(&dir.join(format!("{stem}.json")), &json_with_config(cfg, "solution", value)?)?;
            let mut diag = Vec::new();
            run.write_diagnostics_csv(&mut diag)?;
            write_atomic(&dir.join(format!("{stem}_iteration_diagnostics.csv")), &diag)?;
        }
    }
    Ok(())
}

/// Hybrid partition sweep over `fractions_shared` (defaults to the
/// config's list); writes `partition_sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, fractions_shared: Option<&[f64]>) -> Result<(PathBuf, Vec<SweepRow>)> {
    cfg.validate()?;
    let fractions = fractions_shared.unwrap_or(&cfg.sweep_fractions);
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        invalid!("shared fraction {f} outside [0, 1]");
    }
    let pool = cfg.home_pool()?;
    let params = cfg.params();
    let trials = (0..cfg.trials)
        .map(|i| cfg.trial(i, &pool))
        .collect::<Result<Vec<_>>>()?;
    let per_trial: Vec<Result<Vec<SweepRow>>> = with_pool(cfg.jobs, || {
        trials
            .par_iter()
            .map(|t| sweep_partition(t, fractions, &params))
            .collect()
    })?;
    let mut rows = Vec::new();
    for r in per_trial {
        rows.extend(r?);
    }
    // Group by fraction, trials in order within each.
    rows.sort_by(|a, b| a.fraction_shared.total_cmp(&b.fraction_shared));
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &rows)?;
    let path = cfg.out_dir.join("partition_sweep.csv");
    write_atomic(&path, &csv)?;
    Ok((path, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_parameter_table() {
        let c = RunConfig::default();
        assert_eq!(c.scheme.lambda, 100.0);
        assert_eq!(c.scheme.alpha, 0.01);
        assert_eq!(c.delta_t, 0.5);
        assert_eq!(c.num_steps, 1344);
        assert_eq!(c.battery.e_max, 13.5);
        assert_eq!(c.battery.eta, 0.9487);
        assert_eq!(c.scheme.c_batt, 5550.0);
        assert_eq!(c.scheme.n_cyc, 1400.0);
        assert_eq!(c.dynamic_block_hours, 2.0);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json_str(r#"{"lambd": 3}"#).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(err.to_string().contains("lambd"), "{err}");
        let nested = RunConfig::from_json_str(r#"{"scheme": {"alfa": 1}}"#).unwrap_err();
        assert!(nested.to_string().contains("alfa"), "{nested}");
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = RunConfig::from_json_str(r#"{"trials": 3, "scheme": {"lambda": 5}}"#).unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.scheme.lambda, 5.0);
        assert_eq!(c.scheme.alpha, 0.01);
    }

    #[test]
    fn tau_in_seconds_is_converted() {
        let c = RunConfig {
            tau_unit: TauUnit::Seconds,
            ..RunConfig::default()
        };
        assert!((c.transformer().tau_to_rated - 8.738 / 3600.0).abs() < 1e-15);
        assert_eq!(RunConfig::default().transformer().tau_to_rated, 8.738);
    }

    #[test]
    fn invalid_values_are_validation_errors() {
        for text in [
            r#"{"trials": 0}"#,
            r#"{"hybrid_retained": 1.5}"#,
            r#"{"sweep_fractions": [-0.1]}"#,
            r#"{"scheme": {"alpha": 0}}"#,
            r#"{"dynamic_block_hours": 0.7}"#,
            r#"{"tariffs": {"shared": "nope"}}"#,
        ] {
            let err = RunConfig::from_json_str(text).unwrap_err();
            assert_eq!(exit_code(&err), 2, "{text}: {err}");
        }
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
