//! Grouped statistics over result rows.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harness::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub stderr: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len();
        if n == 0 {
            return Stats {
                count: 0,
                mean: f64::NAN,
                std: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stats {
            count: n,
            mean,
            std,
            stderr: std / (n as f64).sqrt(),
        }
    }
}

/// Scalar columns a summary needs from one result row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryInput {
    pub frontend: String,
    pub users: usize,
    pub hardware_limits: bool,
    pub pt_dbm: f64,
    pub sum_rate: f64,
    pub power_w: f64,
    pub ee_rate_per_watt: f64,
    pub ee_bits_per_joule: f64,
}

impl From<&ResultRow> for SummaryInput {
    fn from(r: &ResultRow) -> Self {
        SummaryInput {
            frontend: r.frontend.to_string(),
            users: r.users,
            hardware_limits: r.hardware_limits,
            pt_dbm: r.pt_dbm,
            sum_rate: r.sum_rate,
            power_w: r.power_w,
            ee_rate_per_watt: r.ee_rate_per_watt,
            ee_bits_per_joule: r.ee_bits_per_joule,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub frontend: String,
    pub users: usize,
    pub hardware_limits: bool,
    pub pt_dbm: f64,
    pub sum_rate: Stats,
    pub power_w: Stats,
    pub ee_rate_per_watt: Stats,
    pub ee_bits_per_joule: Stats,
}

/// Groups by front end, user count, limits flag and transmit power, in order of first appearance.
pub fn summarize(inputs: &[SummaryInput]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, usize, bool, u64)> = Vec::new();
    let mut groups: HashMap<(String, usize, bool, u64), Vec<&SummaryInput>> = HashMap::new();
    for r in inputs {
        let key = (r.frontend.clone(), r.users, r.hardware_limits, r.pt_dbm.to_bits());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: fn(&SummaryInput) -> f64| Stats::of(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                frontend: key.0.clone(),
                users: key.1,
                hardware_limits: key.2,
                pt_dbm: f64::from_bits(key.3),
                sum_rate: col(|r| r.sum_rate),
                power_w: col(|r| r.power_w),
                ee_rate_per_watt: col(|r| r.ee_rate_per_watt),
                ee_bits_per_joule: col(|r| r.ee_bits_per_joule),
            }
        })
        .collect()
}

pub fn summarize_rows(rows: &[ResultRow]) -> Vec<SummaryRow> {
    summarize(&rows.iter().map(SummaryInput::from).collect::<Vec<_>>())
}

/// Reads the summary columns out of a results CSV.
pub fn read_summary_inputs(data: &[u8]) -> Result<Vec<SummaryInput>> {
    let mut reader = csv::Reader::from_reader(data);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                record: 0,
                message: format!("missing column `{name}`"),
            })
    };
    let idx = [
        column("frontend")?,
        column("users")?,
        column("hardware_limits")?,
        column("pt_dbm")?,
        column("sum_rate")?,
        column("power_w")?,
        column("ee_rate_per_watt")?,
        column("ee_bits_per_joule")?,
    ];
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let record = i + 1;
        let field = |j: usize| rec.get(idx[j]).unwrap_or("");
        let bad = |j: usize, what: &str| Error::Parse {
            record,
            message: format!("column `{}`: invalid {what} `{}`", &headers[idx[j]], field(j)),
        };
        let num = |j: usize| field(j).parse::<f64>().map_err(|_| bad(j, "number"));
        out.push(SummaryInput {
            frontend: field(0).to_string(),
            users: field(1).parse().map_err(|_| bad(1, "count"))?,
            hardware_limits: field(2).parse().map_err(|_| bad(2, "boolean"))?,
            pt_dbm: num(3)?,
            sum_rate: num(4)?,
            power_w: num(5)?,
            ee_rate_per_watt: num(6)?,
            ee_bits_per_joule: num(7)?,
        });
    }
    Ok(out)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "frontend",
        "users",
        "hardware_limits",
        "pt_dbm",
        "count",
        "sum_rate_mean",
        "sum_rate_std",
        "sum_rate_stderr",
        "power_w_mean",
        "ee_rate_per_watt_mean",
        "ee_rate_per_watt_std",
        "ee_bits_per_joule_mean",
        "ee_bits_per_joule_std",
    ])?;
    for r in rows {
        w.write_record([
            r.frontend.clone(),
            r.users.to_string(),
            r.hardware_limits.to_string(),
            r.pt_dbm.to_string(),
            r.sum_rate.count.to_string(),
            r.sum_rate.mean.to_string(),
            r.sum_rate.std.to_string(),
            r.sum_rate.stderr.to_string(),
            r.power_w.mean.to_string(),
            r.ee_rate_per_watt.mean.to_string(),
            r.ee_rate_per_watt.std.to_string(),
            r.ee_bits_per_joule.mean.to_string(),
            r.ee_bits_per_joule.std.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Numerical(format!("csv buffer: {e}")))
}

pub fn pretty_table(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>5} {:>6} {:>7} {:>6} {:>12} {:>10} {:>9} {:>12}",
        "frontend", "users", "limits", "pt_dbm", "n", "rate", "stderr", "power_w", "ee_bits/J"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>5} {:>6} {:>7.1} {:>6} {:>12.4} {:>10.4} {:>9.3} {:>12.4e}",
            r.frontend,
            r.users,
            if r.hardware_limits { "on" } else { "off" },
            r.pt_dbm,
            r.sum_rate.count,
            r.sum_rate.mean,
            r.sum_rate.stderr,
            r.power_w.mean,
            r.ee_bits_per_joule.mean
        );
    }
    s
}

/// One-sided percentile-bootstrap lower confidence bound on the mean.
pub fn bootstrap_lower_bound(samples: &[f64], resamples: usize, confidence: f64, seed: u64) -> f64 {
    let n = samples.len();
    if n == 0 || resamples == 0 {
        return f64::NAN;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let idx = (((1.0 - confidence) * resamples as f64).floor() as usize).min(resamples - 1);
    means[idx]
}
