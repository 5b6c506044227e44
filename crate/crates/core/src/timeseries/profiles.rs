use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HomeProfile, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    step: usize,
    home_id: String,
    load_kw: f64,
    solar_kw: f64,
    ev_kw: f64,
}

/// Reads a `step,home_id,load_kw,solar_kw,ev_kw` CSV file. Homes come back
/// in order of first appearance.
pub fn load_profiles(path: &Path, grid: &TimeGrid) -> Result<Vec<HomeProfile>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles(file, grid.num_steps)
}

pub fn read_profiles<R: Read>(reader: R, num_steps: usize) -> Result<Vec<HomeProfile>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["step", "home_id", "load_kw", "solar_kw", "ev_kw"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Ingestion(format!(
            "expected header {}, found {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<String, Vec<Option<(f64, f64, f64)>>> = HashMap::new();
    for (line, row) in rdr.deserialize::<ProfileRow>().enumerate() {
        let row = row.map_err(|e| Error::Ingestion(format!("row {}: {e}", line + 2)))?;
        let series = slots.entry(row.home_id.clone()).or_insert_with(|| {
            order.push(row.home_id.clone());
            vec![None; num_steps]
        });
        if row.step >= num_steps {
            return Err(Error::Ingestion(format!(
                "{} has step {} beyond grid length {}",
                row.home_id, row.step, num_steps
            )));
        }
        for (name, v) in [("load_kw", row.load_kw), ("solar_kw", row.solar_kw), ("ev_kw", row.ev_kw)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "{} step {}: {} = {} must be finite and non-negative",
                    row.home_id, row.step, name, v
                )));
            }
        }
        let slot = &mut series[row.step];
        if slot.is_some() {
            return Err(Error::Ingestion(format!(
                "{} has duplicate step {}",
                row.home_id, row.step
            )));
        }
        *slot = Some((row.load_kw, row.solar_kw, row.ev_kw));
    }

    order
        .into_iter()
        .map(|home_id| {
            let series = slots.remove(&home_id).expect("home registered");
            let mut profile = HomeProfile {
                home_id,
                load_kw: Vec::with_capacity(num_steps),
                solar_kw: Vec::with_capacity(num_steps),
                ev_kw: Vec::with_capacity(num_steps),
            };
            for (step, slot) in series.into_iter().enumerate() {
                let Some((l, s, e)) = slot else {
                    return Err(Error::Ingestion(format!(
                        "{} missing step {}",
                        profile.home_id, step
                    )));
                };
                profile.load_kw.push(l);
                profile.solar_kw.push(s);
                profile.ev_kw.push(e);
            }
            Ok(profile)
        })
        .collect()
}

/// Writes profiles in the ingestion format, home-major.
pub fn write_profiles<W: Write>(writer: W, profiles: &[HomeProfile]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in profiles {
        for t in 0..p.len() {
            wtr.serialize(ProfileRow {
                step: t,
                home_id: p.home_id.clone(),
                load_kw: p.load_kw[t],
                solar_kw: p.solar_kw[t],
                ev_kw: p.ev_kw[t],
            })?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<profiles>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_HOMES: &str = "\
step,home_id,load_kw,solar_kw,ev_kw
0,h0,1.0,0.0,0.0
1,h0,1.5,0.5,0.0
2,h0,2.0,1.0,7.2
3,h0,1.0,0.0,0.0
0,h1,0.5,0.0,0.0
1,h1,0.5,0.0,0.0
3,h1,0.75,0.0,0.0
2,h1,0.6,0.2,0.0
";

    #[test]
    fn parses_two_homes() {
        let homes = read_profiles(TWO_HOMES.as_bytes(), 4).unwrap();
        assert_eq!(homes.len(), 2);
        assert_eq!(homes[0].home_id, "h0");
        assert_eq!(homes[1].load_kw, vec![0.5, 0.5, 0.6, 0.75]);
        assert_eq!(homes[0].ev_kw[2], 7.2);
    }

    #[test]
    fn missing_step_names_home_and_step() {
        let text = TWO_HOMES.replace("3,h1,0.75,0.0,0.0\n", "");
        let err = read_profiles(text.as_bytes(), 4).unwrap_err().to_string();
        assert!(err.contains("h1 missing step 3"), "{err}");
    }

    #[test]
    fn negative_solar_is_rejected() {
        let text = TWO_HOMES.replace("1,h0,1.5,0.5,0.0", "1,h0,1.5,-0.5,0.0");
        assert!(matches!(
            read_profiles(text.as_bytes(), 4),
            Err(Error::Validation(_))
        ));
        let text = TWO_HOMES.replace("0,h1,0.5,0.0,0.0", "0,h1,-0.5,0.0,0.0");
        assert!(read_profiles(text.as_bytes(), 4).is_err());
    }

    #[test]
    fn step_beyond_grid_and_duplicates_are_rejected() {
        assert!(read_profiles(TWO_HOMES.as_bytes(), 3).is_err());
        let text = format!("{TWO_HOMES}2,h1,0.6,0.2,0.0\n");
        assert!(read_profiles(text.as_bytes(), 4).is_err());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = TWO_HOMES.replace("ev_kw", "ev");
        assert!(read_profiles(text.as_bytes(), 4).is_err());
    }
}
