//! Domain data: time grid, home profiles, tariffs and device parameters.

use std::collections::BTreeMap;
use std::ops::Range;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

mod profiles;
mod synth;
mod tariff;

pub use profiles::{load_profiles, read_profiles, write_profiles};
pub use synth::{synthesize_neighborhood, Season, SynthesisConfig};
pub use tariff::{expand_tariff, TariffSchedule, SLOTS_PER_DAY};

const EPS: f64 = 1e-9;

/// Uniform time discretisation anchored at a calendar instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    /// Step length in hours.
    pub delta_t: f64,
    pub num_steps: usize,
    pub start: NaiveDateTime,
}

impl TimeGrid {
    pub fn new(delta_t: f64, num_steps: usize, start: NaiveDateTime) -> Result<Self> {
        let grid = TimeGrid {
            delta_t,
            num_steps,
            start,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Half-hour grid starting Monday 2018-07-02 00:00.
    pub fn half_hourly(num_steps: usize) -> Self {
        TimeGrid {
            delta_t: 0.5,
            num_steps,
            start: default_start(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            invalid!("delta_t must be positive, got {}", self.delta_t);
        }
        if self.num_steps == 0 {
            invalid!("time grid needs at least one step");
        }
        let per_hour = 1.0 / self.delta_t;
        let divides_hour = (per_hour - per_hour.round()).abs() < EPS;
        let whole_hours = (self.delta_t - self.delta_t.round()).abs() < EPS;
        if !(divides_hour || whole_hours) {
            invalid!(
                "delta_t = {} h must divide one hour or be a whole number of hours",
                self.delta_t
            );
        }
        Ok(())
    }

    /// Step length in whole seconds.
    pub fn step_seconds(&self) -> i64 {
        (self.delta_t * 3600.0).round() as i64
    }

    pub fn step_start(&self, step: usize) -> NaiveDateTime {
        self.start + Duration::seconds(self.step_seconds() * step as i64)
    }

    /// Number of steps in 24 h, if the step length tiles a day.
    pub fn steps_per_day(&self) -> Option<usize> {
        let secs = self.step_seconds();
        (secs > 0 && 86_400 % secs == 0).then(|| (86_400 / secs) as usize)
    }

    /// Number of whole steps in `hours`, if `hours` is a multiple of delta_t.
    pub fn steps_in(&self, hours: f64) -> Option<usize> {
        let n = hours / self.delta_t;
        (n >= 1.0 - EPS && (n - n.round()).abs() < 1e-6).then(|| n.round() as usize)
    }

    pub fn duration_hours(&self) -> f64 {
        self.delta_t * self.num_steps as f64
    }

    /// Sub-grid covering `range`, re-anchored at its first step.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.num_steps {
            invalid!(
                "window {:?} is empty or outside 0..{}",
                range,
                self.num_steps
            );
        }
        Ok(TimeGrid {
            delta_t: self.delta_t,
            num_steps: range.len(),
            start: self.step_start(range.start),
        })
    }
}

pub fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 7, 2)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

/// One home's load, rooftop solar and EV charging demand, all in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeProfile {
    pub home_id: String,
    /// Household demand excluding EV charging.
    pub load_kw: Vec<f64>,
    pub solar_kw: Vec<f64>,
    pub ev_kw: Vec<f64>,
}

impl HomeProfile {
    pub fn len(&self) -> usize {
        self.load_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load_kw.is_empty()
    }

    /// Meter reading with no battery: load − solar + EV.
    pub fn net_demand(&self, step: usize) -> f64 {
        self.load_kw[step] - self.solar_kw[step] + self.ev_kw[step]
    }

    pub fn net_demand_series(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.net_demand(t)).collect()
    }

    pub fn validate(&self, num_steps: usize) -> Result<()> {
        for (name, series) in [
            ("load_kw", &self.load_kw),
            ("solar_kw", &self.solar_kw),
            ("ev_kw", &self.ev_kw),
        ] {
            if series.len() != num_steps {
                invalid!(
                    "home {}: {} has {} steps, expected {}",
                    self.home_id,
                    name,
                    series.len(),
                    num_steps
                );
            }
            if let Some(t) = series.iter().position(|v| !v.is_finite() || *v < 0.0) {
                invalid!(
                    "home {}: {} at step {} is {} (must be finite and non-negative)",
                    self.home_id,
                    name,
                    t,
                    series[t]
                );
            }
        }
        Ok(())
    }

    pub fn slice(&self, range: Range<usize>) -> HomeProfile {
        HomeProfile {
            home_id: self.home_id.clone(),
            load_kw: self.load_kw[range.clone()].to_vec(),
            solar_kw: self.solar_kw[range.clone()].to_vec(),
            ev_kw: self.ev_kw[range].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    /// Usable capacity, kWh.
    pub e_max: f64,
    /// Charge power limit, kW.
    pub p_chg_max: f64,
    /// Discharge power limit, kW.
    pub p_dischg_max: f64,
    /// One-way efficiency.
    pub eta: f64,
    /// Initial stored energy, kWh.
    pub e_init: f64,
}

impl Default for BatterySpec {
    /// One Powerwall-2-class unit, starting half full.
    fn default() -> Self {
        BatterySpec {
            e_max: 13.5,
            p_chg_max: 5.0,
            p_dischg_max: 5.0,
            eta: 0.9487,
            e_init: 6.75,
        }
    }
}

impl BatterySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            invalid!("battery eta must be in (0, 1], got {}", self.eta);
        }
        if !(self.e_max.is_finite() && self.e_max >= 0.0) {
            invalid!("battery e_max must be non-negative, got {}", self.e_max);
        }
        if !(self.e_init >= 0.0 && self.e_init <= self.e_max) {
            invalid!(
                "battery e_init = {} outside [0, e_max = {}]",
                self.e_init,
                self.e_max
            );
        }
        if !(self.p_chg_max > 0.0 && self.p_dischg_max > 0.0) {
            invalid!("battery power limits must be positive");
        }
        Ok(())
    }

    /// Energy change over one step for the given powers.
    pub fn energy_delta(&self, chg: f64, dischg: f64, delta_t: f64) -> f64 {
        -delta_t * (dischg / self.eta - self.eta * chg)
    }
}

/// Oil-immersed distribution transformer thermal parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerSpec {
    /// Nameplate rating in kW (unity power factor).
    pub k_rated: f64,
    /// Rated top-oil rise over ambient, °C.
    pub dtheta_to_rated: f64,
    /// Top-oil time constant at rated load, hours.
    pub tau_to_rated: f64,
    /// Ratio of load loss at rated load to no-load loss.
    pub loss_ratio: f64,
    /// Rated hottest-spot rise over top oil, °C.
    pub dtheta_h_rated: f64,
    pub exp_n: f64,
    pub exp_m: f64,
    pub ambient_c: f64,
    /// Normal insulation life, hours.
    pub lifetime_h: f64,
}

impl Default for TransformerSpec {
    /// 25 kVA pole-top unit; n = m = 0.8 are ONAN defaults.
    fn default() -> Self {
        TransformerSpec {
            k_rated: 25.0,
            dtheta_to_rated: 65.0,
            tau_to_rated: 8.738,
            loss_ratio: 3.625,
            dtheta_h_rated: 15.0,
            exp_n: 0.8,
            exp_m: 0.8,
            ambient_c: 25.0,
            lifetime_h: 180_000.0,
        }
    }
}

impl TransformerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_rated > 0.0) {
            invalid!("transformer k_rated must be positive, got {}", self.k_rated);
        }
        if !(self.tau_to_rated > 0.0) {
            invalid!("transformer tau_to_rated must be positive");
        }
        if !(self.lifetime_h > 0.0) {
            invalid!("transformer lifetime_h must be positive");
        }
        if !(self.exp_n > 0.0 && self.exp_n <= 1.0) || !(self.exp_m > 0.0 && self.exp_m <= 1.0) {
            invalid!(
                "transformer exponents must lie in (0, 1], got n = {}, m = {}",
                self.exp_n,
                self.exp_m
            );
        }
        if !(self.loss_ratio >= 0.0 && self.dtheta_to_rated > 0.0 && self.dtheta_h_rated >= 0.0) {
            invalid!("transformer rated rises / loss ratio out of range");
        }
        Ok(())
    }
}

/// Everything one trial needs: homes behind one transformer, their tariffs
/// and the shared device parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodData {
    pub grid: TimeGrid,
    pub homes: Vec<HomeProfile>,
    pub tariff_of_home: BTreeMap<String, TariffSchedule>,
    /// Tariff for aggregate billing of shared schemes.
    pub shared_tariff: TariffSchedule,
    pub transformer: TransformerSpec,
    pub battery: BatterySpec,
}

impl NeighborhoodData {
    /// Every home on the same tariff.
    pub fn uniform_tariff(
        grid: TimeGrid,
        homes: Vec<HomeProfile>,
        tariff: TariffSchedule,
        transformer: TransformerSpec,
        battery: BatterySpec,
    ) -> Result<Self> {
        let tariff_of_home = homes
            .iter()
            .map(|h| (h.home_id.clone(), tariff.clone()))
            .collect();
        let data = NeighborhoodData {
            grid,
            homes,
            tariff_of_home,
            shared_tariff: tariff,
            transformer,
            battery,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.homes.is_empty() {
            invalid!("neighborhood has no homes");
        }
        for home in &self.homes {
            home.validate(self.grid.num_steps)?;
            let Some(tariff) = self.tariff_of_home.get(&home.home_id) else {
                invalid!("home {} has no tariff", home.home_id);
            };
            tariff.validate()?;
        }
        self.shared_tariff.validate()?;
        self.transformer.validate()?;
        self.battery.validate()
    }

    pub fn num_homes(&self) -> usize {
        self.homes.len()
    }

    pub fn num_steps(&self) -> usize {
        self.grid.num_steps
    }

    /// Price vectors per home, in `homes` order.
    pub fn home_prices(&self) -> Result<Vec<Vec<f64>>> {
        self.homes
            .iter()
            .map(|h| expand_tariff(&self.tariff_of_home[&h.home_id], &self.grid))
            .collect()
    }

    pub fn shared_prices(&self) -> Result<Vec<f64>> {
        expand_tariff(&self.shared_tariff, &self.grid)
    }

    /// Summed no-battery meter over all homes.
    pub fn aggregate_net_demand(&self) -> Vec<f64> {
        (0..self.num_steps())
            .map(|t| self.homes.iter().map(|h| h.net_demand(t)).sum())
            .collect()
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        let grid = self.grid.slice(range.clone())?;
        Ok(NeighborhoodData {
            grid,
            homes: self.homes.iter().map(|h| h.slice(range.clone())).collect(),
            tariff_of_home: self.tariff_of_home.clone(),
            shared_tariff: self.shared_tariff.clone(),
            transformer: self.transformer.clone(),
            battery: self.battery.clone(),
        })
    }
}
