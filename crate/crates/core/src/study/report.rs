use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial_seed: u64,
    pub scheme: String,
    pub controller: String,
    pub cost_usd: f64,
    pub pct_lol: f64,
    pub violations: usize,
    pub violation_kwh: f64,
    pub throughput_kwh: f64,
    pub cycles: f64,
    /// Empty unless wall-time reporting is on.
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction_shared: f64,
    pub trial_seed: u64,
    pub cost_usd: f64,
}

pub fn write_report_csv<W: Write>(w: W, rows: &[ReportRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    if rows.is_empty() {
        wtr.write_record([
            "trial_seed",
            "scheme",
            "controller",
            "cost_usd",
            "pct_lol",
            "violations",
            "violation_kwh",
            "throughput_kwh",
            "cycles",
            "wall_ms",
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<report csv>", e))?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(["fraction_shared", "trial_seed", "cost_usd"])?;
    }
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::io("<sweep csv>", e))?;
    Ok(())
}

/// Linear-interpolation quantile of unsorted `values`; `None` when empty.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Quantiles of each metric per `scheme/controller` group.
pub fn summarize(rows: &[ReportRow]) -> serde_json::Value {
    let mut groups: BTreeMap<String, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(format!("{}/{}", r.scheme, r.controller))
            .or_default()
            .push(r);
    }
    let metrics: [(&str, fn(&ReportRow) -> f64); 6] = [
        ("cost_usd", |r| r.cost_usd),
        ("pct_lol", |r| r.pct_lol),
        ("violations", |r| r.violations as f64),
        ("violation_kwh", |r| r.violation_kwh),
        ("throughput_kwh", |r| r.throughput_kwh),
        ("cycles", |r| r.cycles),
    ];
    let mut out = serde_json::Map::new();
    for (key, rs) in groups {
        let mut g = serde_json::Map::new();
        g.insert("trials".into(), rs.len().into());
        for (name, f) in metrics {
            let v: Vec<f64> = rs.iter().map(|r| f(r)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            g.insert(
                name.into(),
                serde_json::json!({
                    "min": quantile(&v, 0.0),
                    "q25": quantile(&v, 0.25),
                    "median": quantile(&v, 0.5),
                    "q75": quantile(&v, 0.75),
                    "max": quantile(&v, 1.0),
                    "mean": mean,
                }),
            );
        }
        out.insert(key, serde_json::Value::Object(g));
    }
    serde_json::Value::Object(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, cost: f64) -> ReportRow {
        ReportRow {
            trial_seed: seed,
            scheme: "joint".into(),
            controller: "foresight".into(),
            cost_usd: cost,
            pct_lol: 0.1,
            violations: 2,
            violation_kwh: 1.5,
            throughput_kwh: 10.0,
            cycles: 0.37,
            wall_ms: None,
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(4.0));
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn csv_header_and_empty_wall_time() {
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[row(3, 12.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "trial_seed,scheme,controller,cost_usd,pct_lol,violations,violation_kwh,throughput_kwh,cycles,wall_ms"
        );
        assert_eq!(lines.next().unwrap(), "3,joint,foresight,12.5,0.1,2,1.5,10.0,0.37,");
    }

    #[test]
    fn summary_groups_rows() {
        let s = summarize(&[row(1, 1.0), row(2, 3.0)]);
        assert_eq!(s["joint/foresight"]["trials"], 2);
        assert_eq!(s["joint/foresight"]["cost_usd"]["median"], 2.0);
    }
}
