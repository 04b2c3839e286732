//! Report files written for an experiment:
//!
//! - `seed_<seed>.csv`: one row per logged step, columns [`TRACE_HEADER`].
//! - `summary.json`: aggregate keys `rho_star, diameter_star, K_T, total_runs,
//!   eliminations, final_regret, slope_fit` (medians over seeds, eliminations
//!   summed), plus a `seeds` array of per-seed summaries with the same keys.
//! - `regret_curve.csv`: `t,median_regret,q25_regret,q75_regret` over the
//!   steps logged by every seed, thinned to at most 1001 points.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::fit_regret_exponent;
use super::experiment::{default_window, ExperimentResult, SeedSummary, TraceEvent, TraceRow};
use super::{io_err, HarnessError};

pub const TRACE_HEADER: &str = "t,k,j,model_id,s,a,r,cum_reward,regret,rho_kj,lob,test_margin,event";
const CURVE_HEADER: &str = "t,median_regret,q25_regret,q75_regret";
const MAX_CURVE_POINTS: usize = 1001;

/// Trace rows rendered exactly as [`write_seed_csv`] writes them.
pub fn format_seed_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 96);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t, r.k, r.j, r.model_id, r.s, r.a, r.r, r.cum_reward, r.regret, r.rho_kj, r.lob, r.test_margin, r.event
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_seed_csv(rows: &[TraceRow], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, format_seed_csv(rows)).map_err(io_err(path))
}

pub fn read_seed_csv(path: &Path) -> Result<Vec<TraceRow>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let parse_err = |line: usize, reason: String| HarnessError::Parse {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(parse_err(1, "unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(parse_err(i + 2, format!("{} fields", f.len())));
        }
        macro_rules! num {
            ($idx:expr) => {
                f[$idx]
                    .parse()
                    .map_err(|e| parse_err(i + 2, format!("field {}: {e}", $idx)))?
            };
        }
        rows.push(TraceRow {
            t: num!(0),
            k: num!(1),
            j: num!(2),
            model_id: num!(3),
            s: num!(4),
            a: num!(5),
            r: num!(6),
            cum_reward: num!(7),
            regret: num!(8),
            rho_kj: num!(9),
            lob: num!(10),
            test_margin: num!(11),
            event: TraceEvent::parse(f[12]).ok_or_else(|| parse_err(i + 2, format!("event {}", f[12])))?,
        });
    }
    Ok(rows)
}

/// Type-7 quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: u64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Median and interquartile regret over the steps present in every trace.
pub fn regret_curve(traces: &[&[TraceRow]]) -> Vec<CurvePoint> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let mut common: BTreeSet<u64> = first.iter().map(|r| r.t).collect();
    for rows in &traces[1..] {
        let ts: BTreeSet<u64> = rows.iter().map(|r| r.t).collect();
        common.retain(|t| ts.contains(t));
    }
    let common: Vec<u64> = common.into_iter().collect();
    let step = common.len().div_ceil(MAX_CURVE_POINTS).max(1);
    let last = common.len().saturating_sub(1);
    let grid: Vec<u64> = common
        .iter()
        .enumerate()
        .filter(|&(i, _)| i % step == 0 || i == last)
        .map(|(_, &t)| t)
        .collect();
    let lookups: Vec<BTreeMap<u64, f64>> = traces
        .iter()
        .map(|rows| rows.iter().map(|r| (r.t, r.regret)).collect())
        .collect();
    grid.into_iter()
        .map(|t| {
            let mut v: Vec<f64> = lookups.iter().map(|m| m[&t]).collect();
            v.sort_by(f64::total_cmp);
            CurvePoint {
                t,
                median: quantile(&v, 0.5),
                q25: quantile(&v, 0.25),
                q75: quantile(&v, 0.75),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub rho_star: f64,
    pub diameter_star: Option<f64>,
    #[serde(rename = "K_T")]
    pub k_t: f64,
    pub total_runs: f64,
    pub eliminations: BTreeMap<usize, u64>,
    pub final_regret: f64,
    pub slope_fit: Option<f64>,
    pub seeds: Vec<SeedSummary>,
}

/// Medians over seeds; eliminations are summed.
pub fn aggregate(mut seeds: Vec<SeedSummary>) -> Result<AggregateSummary, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::EmptyTraces);
    }
    seeds.sort_by_key(|s| s.seed);
    let mut eliminations = BTreeMap::new();
    for s in &seeds {
        for (&m, &c) in &s.eliminations {
            *eliminations.entry(m).or_insert(0) += c;
        }
    }
    Ok(AggregateSummary {
        rho_star: seeds[0].rho_star,
        diameter_star: seeds[0].diameter_star,
        k_t: median(seeds.iter().map(|s| s.k_t as f64)).expect("nonempty"),
        total_runs: median(seeds.iter().map(|s| s.total_runs as f64)).expect("nonempty"),
        eliminations,
        final_regret: median(seeds.iter().map(|s| s.final_regret)).expect("nonempty"),
        slope_fit: median(seeds.iter().filter_map(|s| s.slope_fit)),
        seeds,
    })
}

fn write_curve(curve: &[CurvePoint], path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in curve {
        writeln!(out, "{},{},{},{}", p.t, p.median, p.q25, p.q75).expect("String write");
    }
    std::fs::write(path, out).map_err(io_err(path))
}

fn write_summary(summary: &AggregateSummary, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn seed_csv_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

/// Writes per-seed traces, `summary.json`, and `regret_curve.csv` into `dir`.
pub fn emit_report(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if result.traces.is_empty() {
        return Err(HarnessError::EmptyTraces);
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    for trace in &result.traces {
        let path = dir.join(seed_csv_name(trace.seed));
        write_seed_csv(&trace.rows, &path)?;
        files.push(path);
    }
    let summary = aggregate(result.traces.iter().map(|t| t.summary.clone()).collect())?;
    let path = dir.join("summary.json");
    write_summary(&summary, &path)?;
    files.push(path);
    let all: Vec<&[TraceRow]> = result.traces.iter().map(|t| t.rows.as_slice()).collect();
    let path = dir.join("regret_curve.csv");
    write_curve(&regret_curve(&all), &path)?;
    files.push(path);
    Ok(files)
}

/// Per-seed summary reconstructed from a trace; the diameter and the model
/// list are not recoverable from rows and are passed in.
pub fn summarize_rows(
    seed: u64,
    rows: &[TraceRow],
    diameter_star: Option<f64>,
    model_ids: &[usize],
) -> Result<SeedSummary, HarnessError> {
    let last = rows.last().ok_or(HarnessError::EmptyTraces)?;
    let mut eliminations: BTreeMap<usize, u64> = model_ids.iter().map(|&m| (m, 0)).collect();
    let (mut episodes, mut runs) = (0, 0);
    for r in rows {
        if r.event != TraceEvent::None {
            runs += 1;
        }
        if r.event.ends_episode() {
            episodes += 1;
        }
        if r.event.eliminates() {
            *eliminations.entry(r.model_id).or_insert(0) += 1;
        }
    }
    Ok(SeedSummary {
        seed,
        rho_star: (last.regret + last.cum_reward) / last.t as f64,
        diameter_star,
        k_t: episodes + 1,
        total_runs: runs + 1,
        eliminations,
        final_regret: last.regret,
        slope_fit: fit_regret_exponent(rows.iter().map(|r| (r.t, r.regret)), default_window(last.t))
            .ok()
            .map(|f| f.slope),
    })
}

/// Re-aggregates every `seed_<n>.csv` in `dir`, rewriting `summary.json` and
/// `regret_curve.csv`. The diameter and model list are carried over from an
/// existing `summary.json` when present.
pub fn report_from_dir(dir: &Path) -> Result<AggregateSummary, HarnessError> {
    let mut seeds = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(seed) = name
            .strip_prefix("seed_")
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<u64>().ok())
        {
            seeds.push((seed, path));
        }
    }
    if seeds.is_empty() {
        return Err(HarnessError::EmptyTraces);
    }
    seeds.sort();
    let summary_path = dir.join("summary.json");
    let previous: Option<AggregateSummary> = std::fs::read_to_string(&summary_path)
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    let diameter = previous.as_ref().and_then(|p| p.diameter_star);
    let model_ids: Vec<usize> = previous
        .as_ref()
        .map(|p| p.eliminations.keys().copied().collect())
        .unwrap_or_default();
    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    for (seed, path) in &seeds {
        let rows = read_seed_csv(path)?;
        summaries.push(summarize_rows(*seed, &rows, diameter, &model_ids)?);
        traces.push(rows);
    }
    let summary = aggregate(summaries)?;
    write_summary(&summary, &summary_path)?;
    let all: Vec<&[TraceRow]> = traces.iter().map(Vec::as_slice).collect();
    write_curve(&regret_curve(&all), &dir.join("regret_curve.csv"))?;
    Ok(summary)
}
