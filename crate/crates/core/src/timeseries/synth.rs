//! Synthetic household profiles for desk-scale studies.

use chrono::Timelike;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HomeProfile, TimeGrid};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Summer,
    Winter,
}

impl std::str::FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "summer" | "july" => Ok(Season::Summer),
            "winter" | "january" => Ok(Season::Winter),
            other => Err(format!("unknown season '{other}' (expected summer or winter)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    /// Multiplier on the clear-sky solar bump.
    pub solar_factor: f64,
    /// Scale of the afternoon air-conditioning bump, kW.
    pub cooling_kw: f64,
    /// Fraction of homes with an EV charger.
    pub ev_penetration: f64,
    /// Level-2 charging power, kW.
    pub ev_power_kw: f64,
    /// Probability that an EV home charges on a given evening.
    pub ev_session_prob: f64,
    /// Energy per charging session, kWh (uniform range).
    pub ev_energy_kwh: (f64, f64),
    /// Rooftop array peak output, kW (uniform range).
    pub pv_kw: (f64, f64),
    pub id_prefix: String,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self::for_season(Season::Summer)
    }
}

impl SynthesisConfig {
    pub fn for_season(season: Season) -> Self {
        let (solar_factor, cooling_kw) = match season {
            Season::Summer => (1.0, 1.2),
            Season::Winter => (0.45, 0.0),
        };
        SynthesisConfig {
            solar_factor,
            cooling_kw,
            ev_penetration: 1.0,
            ev_power_kw: 7.2,
            ev_session_prob: 0.75,
            ev_energy_kwh: (6.0, 20.0),
            pv_kw: (3.0, 7.0),
            id_prefix: "home".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.solar_factor >= 0.0 && self.cooling_kw >= 0.0) {
            invalid!("solar_factor and cooling_kw must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.ev_penetration) || !(0.0..=1.0).contains(&self.ev_session_prob) {
            invalid!("ev_penetration and ev_session_prob must lie in [0, 1]");
        }
        if !(self.ev_power_kw > 0.0) {
            invalid!("ev_power_kw must be positive");
        }
        for (name, (lo, hi)) in [("ev_energy_kwh", self.ev_energy_kwh), ("pv_kw", self.pv_kw)] {
            if !(lo >= 0.0 && lo <= hi) {
                invalid!("{name} range ({lo}, {hi}) is invalid");
            }
        }
        Ok(())
    }
}

/// Gaussian bump on the 24 h circle.
fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    let mut d = (hour - centre).abs();
    if d > 12.0 {
        d = 24.0 - d;
    }
    (-0.5 * (d / width).powi(2)).exp()
}

struct HomeShape {
    base: f64,
    morning_amp: f64,
    morning_at: f64,
    evening_amp: f64,
    evening_at: f64,
    cooling_amp: f64,
    pv_kw: f64,
}

/// Generates `n_homes` deterministic profiles: load with morning and evening
/// peaks (plus an afternoon cooling bump in summer), a midday solar bump
/// scaled by the seasonal factor, and contiguous fixed-power EV sessions
/// starting in the evening for exactly `round(ev_penetration * n_homes)`
/// homes.
pub fn synthesize_neighborhood(
    seed: u64,
    n_homes: usize,
    grid: &TimeGrid,
    params: &SynthesisConfig,
) -> Result<Vec<HomeProfile>> {
    if n_homes == 0 {
        invalid!("n_homes must be at least 1");
    }
    grid.validate()?;
    params.validate()?;
    let Some(steps_per_day) = grid.steps_per_day() else {
        invalid!("synthesis needs a step length that tiles one day");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_steps = grid.num_steps;
    let hours: Vec<f64> = (0..n_steps)
        .map(|t| {
            let at = grid.step_start(t);
            at.num_seconds_from_midnight() as f64 / 3600.0 + grid.delta_t / 2.0
        })
        .collect();
    let n_days = n_steps.div_ceil(steps_per_day);

    let n_ev = (params.ev_penetration * n_homes as f64).round() as usize;
    let mut ev_flags: Vec<bool> = (0..n_homes).map(|i| i < n_ev).collect();
    ev_flags.shuffle(&mut rng);

    let mut homes = Vec::with_capacity(n_homes);
    for (i, has_ev) in ev_flags.into_iter().enumerate() {
        let shape = HomeShape {
            base: rng.gen_range(0.25..0.6),
            morning_amp: rng.gen_range(0.4..1.2),
            morning_at: rng.gen_range(6.5..8.5),
            evening_amp: rng.gen_range(0.9..2.0),
            evening_at: rng.gen_range(18.0..20.5),
            cooling_amp: params.cooling_kw * rng.gen_range(0.5..1.5),
            pv_kw: rng.gen_range(params.pv_kw.0..=params.pv_kw.1),
        };
        let day_scale: Vec<f64> = (0..n_days).map(|_| rng.gen_range(0.85..1.15)).collect();
        let clearness: Vec<f64> = (0..n_days).map(|_| rng.gen_range(0.55..1.0)).collect();

        let mut load = Vec::with_capacity(n_steps);
        let mut solar = Vec::with_capacity(n_steps);
        for t in 0..n_steps {
            let h = hours[t];
            let day = t / steps_per_day;
            let shape_kw = shape.base
                + shape.morning_amp * bump(h, shape.morning_at, 1.0)
                + shape.evening_amp * bump(h, shape.evening_at, 1.6)
                + shape.cooling_amp * bump(h, 16.0, 2.5);
            let noise = rng.gen_range(0.9..1.1);
            load.push((shape_kw * day_scale[day] * noise).max(0.0));

            let sun = if (6.0..20.0).contains(&h) {
                (std::f64::consts::PI * (h - 6.0) / 14.0).sin().powf(1.5)
            } else {
                0.0
            };
            solar.push((params.solar_factor * shape.pv_kw * clearness[day] * sun).max(0.0));
        }

        let mut ev = vec![0.0; n_steps];
        if has_ev {
            let mut sessions = 0;
            for day in 0..n_days {
                let start_hour: f64 = rng.gen_range(17.0..23.0);
                let energy = rng.gen_range(params.ev_energy_kwh.0..=params.ev_energy_kwh.1);
                let active = rng.gen_bool(params.ev_session_prob);
                if active || (day + 1 == n_days && sessions == 0) {
                    sessions += 1;
                    let start = day * steps_per_day + (start_hour / grid.delta_t).floor() as usize;
                    let len = ((energy / params.ev_power_kw) / grid.delta_t).ceil().max(1.0) as usize;
                    // Fall back to the first evening if the chosen one runs off the grid.
                    let start = if start >= n_steps {
                        (17.0 / grid.delta_t) as usize % n_steps
                    } else {
                        start
                    };
                    for slot in ev.iter_mut().skip(start).take(len) {
                        *slot = params.ev_power_kw;
                    }
                }
            }
        }

        homes.push(HomeProfile {
            home_id: format!("{}{:03}", params.id_prefix, i),
            load_kw: load,
            solar_kw: solar,
            ev_kw: ev,
        });
    }
    Ok(homes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(days: usize) -> TimeGrid {
        TimeGrid::half_hourly(48 * days)
    }

    #[test]
    fn same_seed_same_output() {
        let p = SynthesisConfig::default();
        let a = synthesize_neighborhood(11, 6, &grid(3), &p).unwrap();
        let b = synthesize_neighborhood(11, 6, &grid(3), &p).unwrap();
        assert_eq!(a, b);
        let c = synthesize_neighborhood(12, 6, &grid(3), &p).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_seasonal_factor_zeroes_solar() {
        let p = SynthesisConfig {
            solar_factor: 0.0,
            ..SynthesisConfig::default()
        };
        let homes = synthesize_neighborhood(3, 4, &grid(2), &p).unwrap();
        assert!(homes.iter().all(|h| h.solar_kw.iter().all(|&s| s == 0.0)));
    }

    #[test]
    fn ev_penetration_sets_exact_count() {
        let p = SynthesisConfig {
            ev_penetration: 0.5,
            ..SynthesisConfig::default()
        };
        for seed in 0..5 {
            let homes = synthesize_neighborhood(seed, 10, &grid(7), &p).unwrap();
            let with_ev = homes.iter().filter(|h| h.ev_kw.iter().any(|&e| e > 0.0)).count();
            assert_eq!(with_ev, 5);
        }
    }

    #[test]
    fn series_are_nonnegative_with_expected_shape() {
        let homes = synthesize_neighborhood(5, 8, &grid(7), &SynthesisConfig::default()).unwrap();
        for h in &homes {
            h.validate(48 * 7).unwrap();
            // No sun at 02:00, sun at 13:00.
            assert_eq!(h.solar_kw[4], 0.0);
            assert!(h.solar_kw[26] > 0.0);
            // EV sessions are at the fixed Level-2 power.
            assert!(h.ev_kw.iter().all(|&e| e == 0.0 || e == 7.2));
        }
    }

    #[test]
    fn winter_has_less_solar() {
        let s = synthesize_neighborhood(9, 5, &grid(7), &SynthesisConfig::for_season(Season::Summer)).unwrap();
        let w = synthesize_neighborhood(9, 5, &grid(7), &SynthesisConfig::for_season(Season::Winter)).unwrap();
        let total = |hs: &[HomeProfile]| hs.iter().flat_map(|h| h.solar_kw.iter()).sum::<f64>();
        assert!(total(&w) < total(&s));
    }

    #[test]
    fn rejects_zero_homes() {
        assert!(synthesize_neighborhood(1, 0, &grid(1), &SynthesisConfig::default()).is_err());
    }
}
