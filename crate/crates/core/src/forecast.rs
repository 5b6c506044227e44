//! Load and solar forecasts for receding-horizon windows. EV demand is
//! treated as known in advance.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::timeseries::HomeProfile;

/// Days averaged by the naive forecaster.
pub const NAIVE_DAYS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastWindow {
    pub load_kw: Vec<f64>,
    pub solar_kw: Vec<f64>,
    pub ev_kw: Vec<f64>,
}

impl ForecastWindow {
    pub fn len(&self) -> usize {
        self.load_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load_kw.is_empty()
    }

    pub fn net_demand(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.load_kw[k] - self.solar_kw[k] + self.ev_kw[k])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Forecaster {
    /// Same-time-of-day mean over the previous days.
    Naive,
    /// The actual future values.
    Oracle,
}

impl std::str::FromStr for Forecaster {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "naive" => Ok(Forecaster::Naive),
            "oracle" => Ok(Forecaster::Oracle),
            other => Err(format!("unknown forecaster '{other}' (expected naive or oracle)")),
        }
    }
}

/// Forecast for `window` made at time `window.start`: load and solar at each
/// step are the mean of the same time of day over the previous one to four
/// days that have already been observed; EV demand is copied from the
/// profile.
pub fn naive_forecast(
    profile: &HomeProfile,
    window: Range<usize>,
    steps_per_day: usize,
) -> Result<ForecastWindow> {
    let now = window.start;
    if window.end > profile.len() {
        invalid!(
            "forecast window {:?} runs past the {}-step profile",
            window,
            profile.len()
        );
    }
    if now < steps_per_day {
        invalid!(
            "naive forecast at step {now} for {} has less than one day of history; \
             start control after at least a one-day warm-up ({steps_per_day} steps)",
            profile.home_id
        );
    }
    let mut out = ForecastWindow {
        load_kw: Vec::with_capacity(window.len()),
        solar_kw: Vec::with_capacity(window.len()),
        ev_kw: profile.ev_kw[window.clone()].to_vec(),
    };
    for s in window {
        let past: Vec<usize> = (1..=NAIVE_DAYS)
            .filter_map(|d| s.checked_sub(d * steps_per_day))
            .filter(|&p| p < now)
            .collect();
        if past.is_empty() {
            invalid!(
                "no observed history for step {s} of {} (window longer than one day?)",
                profile.home_id
            );
        }
        let n = past.len() as f64;
        out.load_kw.push(past.iter().map(|&p| profile.load_kw[p]).sum::<f64>() / n);
        out.solar_kw.push(past.iter().map(|&p| profile.solar_kw[p]).sum::<f64>() / n);
    }
    Ok(out)
}

/// Perfect-foresight forecast: the profile's own future values.
pub fn oracle_forecast(profile: &HomeProfile, window: Range<usize>) -> Result<ForecastWindow> {
    if window.end > profile.len() || window.start > window.end {
        invalid!(
            "forecast window {:?} outside the {}-step profile",
            window,
            profile.len()
        );
    }
    Ok(ForecastWindow {
        load_kw: profile.load_kw[window.clone()].to_vec(),
        solar_kw: profile.solar_kw[window.clone()].to_vec(),
        ev_kw: profile.ev_kw[window].to_vec(),
    })
}

pub fn forecast(
    forecaster: Forecaster,
    profile: &HomeProfile,
    window: Range<usize>,
    steps_per_day: usize,
) -> Result<ForecastWindow> {
    match forecaster {
        Forecaster::Naive => naive_forecast(profile, window, steps_per_day),
        Forecaster::Oracle => oracle_forecast(profile, window),
    }
}
