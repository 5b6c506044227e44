use std::path::Path;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use super::TimeGrid;
use crate::error::{invalid, Error, Result};

/// Half-hour slots in a day.
pub const SLOTS_PER_DAY: usize = 48;
const SLOT_SECONDS: i64 = 1800;

/// Time-of-use tariff as two 48-slot day tables, $/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSchedule {
    pub name: String,
    pub weekday_prices: Vec<f64>,
    pub weekend_prices: Vec<f64>,
}

impl TariffSchedule {
    pub fn flat(name: &str, price: f64) -> Self {
        TariffSchedule {
            name: name.to_string(),
            weekday_prices: vec![price; SLOTS_PER_DAY],
            weekend_prices: vec![price; SLOTS_PER_DAY],
        }
    }

    /// Builds a schedule from `(start_hour, end_hour, price)` bands over a
    /// `base` price. Hours may be fractional half hours.
    pub fn from_bands(
        name: &str,
        base: f64,
        weekday: &[(f64, f64, f64)],
        weekend: &[(f64, f64, f64)],
    ) -> Self {
        let table = |bands: &[(f64, f64, f64)]| {
            let mut prices = vec![base; SLOTS_PER_DAY];
            for &(from, to, price) in bands {
                let (a, b) = ((from * 2.0).round() as usize, (to * 2.0).round() as usize);
                for p in &mut prices[a.min(SLOTS_PER_DAY)..b.min(SLOTS_PER_DAY)] {
                    *p = price;
                }
            }
            prices
        };
        TariffSchedule {
            name: name.to_string(),
            weekday_prices: table(weekday),
            weekend_prices: table(weekend),
        }
    }

    /// Illustrative EV2-A-shaped plan: same shape every day, peak 16–21.
    /// Prices are representative, not a published rate sheet.
    pub fn ev2a_illustrative() -> Self {
        let bands = [(15.0, 16.0, 0.51), (16.0, 21.0, 0.62), (21.0, 24.0, 0.51)];
        Self::from_bands("EV2-A", 0.31, &bands, &bands)
    }

    /// Illustrative EV-B-shaped plan: long weekday peak 14–21, cheap nights.
    pub fn ev_b_illustrative() -> Self {
        Self::from_bands(
            "EV-B",
            0.27,
            &[(7.0, 14.0, 0.40), (14.0, 21.0, 0.66), (21.0, 23.0, 0.40)],
            &[(15.0, 19.0, 0.66)],
        )
    }

    /// Illustrative TOU-D-shaped plan: short 17–20 peak, flat otherwise.
    pub fn tou_d_illustrative() -> Self {
        Self::from_bands("TOU-D", 0.42, &[(17.0, 20.0, 0.55)], &[(17.0, 20.0, 0.48)])
    }

    /// Looks up one of the bundled illustrative plans by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ev2a" => Some(Self::ev2a_illustrative()),
            "evb" => Some(Self::ev_b_illustrative()),
            "toud" => Some(Self::tou_d_illustrative()),
            _ => None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: TariffSchedule = serde_json::from_str(&text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (label, table) in [("weekday", &self.weekday_prices), ("weekend", &self.weekend_prices)] {
            if table.len() != SLOTS_PER_DAY {
                invalid!(
                    "tariff {}: {} table has {} entries, expected {}",
                    self.name,
                    label,
                    table.len(),
                    SLOTS_PER_DAY
                );
            }
            if table.iter().any(|p| !p.is_finite() || *p < 0.0) {
                invalid!("tariff {}: {} prices must be finite and >= 0", self.name, label);
            }
        }
        Ok(())
    }

    fn slot_price(&self, at: NaiveDateTime) -> f64 {
        let slot = (at.num_seconds_from_midnight() as i64 / SLOT_SECONDS) as usize;
        match at.weekday() {
            Weekday::Sat | Weekday::Sun => self.weekend_prices[slot],
            _ => self.weekday_prices[slot],
        }
    }
}

/// Price per step over `grid`. Steps shorter than half an hour must sit
/// inside one slot; longer steps must cover whole slots and get their
/// time-weighted mean price.
pub fn expand_tariff(tariff: &TariffSchedule, grid: &TimeGrid) -> Result<Vec<f64>> {
    tariff.validate()?;
    grid.validate()?;
    let step = grid.step_seconds();
    if ((grid.delta_t * 3600.0) - step as f64).abs() > 1e-6 {
        invalid!("delta_t = {} h is not a whole number of seconds", grid.delta_t);
    }
    let mut prices = Vec::with_capacity(grid.num_steps);
    for i in 0..grid.num_steps {
        let at = grid.step_start(i);
        let offset = at.num_seconds_from_midnight() as i64 % SLOT_SECONDS;
        if step <= SLOT_SECONDS {
            if offset + step > SLOT_SECONDS {
                invalid!(
                    "step {} ({}) straddles a half-hour tariff boundary",
                    i,
                    at
                );
            }
            prices.push(tariff.slot_price(at));
        } else {
            if offset != 0 || step % SLOT_SECONDS != 0 {
                invalid!(
                    "delta_t = {} h does not cover whole half-hour tariff slots",
                    grid.delta_t
                );
            }
            let n = step / SLOT_SECONDS;
            let sum: f64 = (0..n)
                .map(|k| tariff.slot_price(at + Duration::seconds(k * SLOT_SECONDS)))
                .sum();
            prices.push(sum / n as f64);
        }
    }
    Ok(prices)
}
