//! Per-run metrics, aggregation across runs, and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunOutput, Strategy};
use crate::error::{Error, Result};
use crate::observe::{nearest_rank, RequestOutcome};

pub const CSV_HEADER: &str =
    "strategy,succ_pct,succ_std,p50_ms,p50_std,p95_ms,p95_std,heavy_pct,medium_pct,light_pct,failed_pct,requests";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: Strategy,
    pub run: usize,
    pub seed: u64,
    pub requests: usize,
    pub successes: usize,
    pub success_rate_pct: f64,
    /// Nearest-rank percentiles over successful requests; `None` when there are none.
    pub p50_ms: Option<f64>,
    pub p95_ms: Option<f64>,
    /// Successful requests served by each tier (light, medium, heavy) as a share of all
    /// requests; together with `failed_pct` these sum to 100.
    pub tier_pct: [f64; 3],
    pub failed_pct: f64,
    /// Each tier's share of the successful requests only.
    pub success_share_pct: [f64; 3],
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl RunReport {
    pub fn from_outcomes(strategy: Strategy, run: usize, seed: u64, outcomes: &[RequestOutcome]) -> Self {
        let mut latencies: Vec<f64> = outcomes.iter().filter_map(|o| o.latency_ms).collect();
        latencies.sort_by(f64::total_cmp);
        let mut per_tier = [0usize; 3];
        for o in outcomes.iter().filter(|o| o.is_success()) {
            per_tier[o.tier.index()] += 1;
        }
        let requests = outcomes.len();
        let successes: usize = per_tier.iter().sum();
        Self {
            strategy,
            run,
            seed,
            requests,
            successes,
            success_rate_pct: pct(successes, requests),
            p50_ms: nearest_rank(&latencies, 50),
            p95_ms: nearest_rank(&latencies, 95),
            tier_pct: per_tier.map(|n| pct(n, requests)),
            failed_pct: pct(requests - successes, requests),
            success_share_pct: per_tier.map(|n| pct(n, successes)),
        }
    }

    pub fn from_run(run: &RunOutput) -> Self {
        Self::from_outcomes(run.strategy, run.run, run.seed, &run.outcomes)
    }
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    /// Set when only one run exists and the standard deviations are placeholders.
    pub single_run: bool,
    pub success_rate_pct: Stat,
    pub p50_ms: Stat,
    pub p95_ms: Stat,
    pub tier_pct: [f64; 3],
    pub failed_pct: f64,
    pub success_share_pct: [f64; 3],
    pub requests: f64,
    /// Per-run P50 values, kept for significance testing.
    pub p50_values: Vec<f64>,
}

/// AIF minus baseline; latency deltas are relative to the baseline, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delta {
    pub success_pp: f64,
    pub p50_pct: f64,
    pub p95_pct: f64,
    pub tier_pp: [f64; 3],
    pub failed_pp: f64,
    pub requests: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchT {
    pub t: f64,
    pub df: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub strategies: Vec<StrategySummary>,
    pub delta: Option<Delta>,
    /// Welch's unequal-variance t on per-run P50, AIF vs. baseline.
    pub welch_p50: Option<WelchT>,
    pub runs: Vec<RunReport>,
}

impl Aggregate {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategySummary> {
        self.strategies.iter().find(|x| x.strategy == s)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    Stat::of(&v).mean
}

fn summarize(strategy: Strategy, reports: &[&RunReport]) -> StrategySummary {
    let col = |f: &dyn Fn(&RunReport) -> Option<f64>| -> Vec<f64> { reports.iter().filter_map(|r| f(r)).collect() };
    let p50_values = col(&|r| r.p50_ms);
    StrategySummary {
        strategy,
        runs: reports.len(),
        single_run: reports.len() == 1,
        success_rate_pct: Stat::of(&col(&|r| Some(r.success_rate_pct))),
        p50_ms: Stat::of(&p50_values),
        p95_ms: Stat::of(&col(&|r| r.p95_ms)),
        tier_pct: [0, 1, 2].map(|i| mean(reports.iter().map(|r| r.tier_pct[i]))),
        failed_pct: mean(reports.iter().map(|r| r.failed_pct)),
        success_share_pct: [0, 1, 2].map(|i| mean(reports.iter().map(|r| r.success_share_pct[i]))),
        requests: mean(reports.iter().map(|r| r.requests as f64)),
        p50_values,
    }
}

/// Welch's t for the difference of means `a − b`, with Welch–Satterthwaite degrees of freedom.
/// `None` when either sample has fewer than two values or both variances vanish.
pub fn welch_t(a: &[f64], b: &[f64]) -> Option<WelchT> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (sa, sb) = (Stat::of(a), Stat::of(b));
    let va = sa.std.powi(2) / a.len() as f64;
    let vb = sb.std.powi(2) / b.len() as f64;
    if va + vb == 0.0 {
        return None;
    }
    let t = (sa.mean - sb.mean) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va.powi(2) / (a.len() - 1) as f64 + vb.powi(2) / (b.len() - 1) as f64);
    Some(WelchT { t, df })
}

/// Groups reports by strategy (in `Strategy` order) and computes the AIF − baseline deltas.
pub fn aggregate(reports: &[RunReport]) -> Aggregate {
    let mut groups: BTreeMap<Strategy, Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.strategy).or_default().push(r);
    }
    let strategies: Vec<StrategySummary> = groups.iter().map(|(&s, rs)| summarize(s, rs)).collect();
    let find = |s| strategies.iter().find(|x| x.strategy == s);
    let (delta, welch_p50) = match (find(Strategy::Aif), find(Strategy::Baseline)) {
        (Some(a), Some(b)) => {
            let rel = |x: f64, y: f64| 100.0 * (x - y) / y;
            let delta = Delta {
                success_pp: a.success_rate_pct.mean - b.success_rate_pct.mean,
                p50_pct: rel(a.p50_ms.mean, b.p50_ms.mean),
                p95_pct: rel(a.p95_ms.mean, b.p95_ms.mean),
                tier_pp: [0, 1, 2].map(|i| a.tier_pct[i] - b.tier_pct[i]),
                failed_pp: a.failed_pct - b.failed_pct,
                requests: a.requests - b.requests,
            };
            (Some(delta), welch_t(&a.p50_values, &b.p50_values))
        }
        _ => (None, None),
    };
    let mut runs = reports.to_vec();
    runs.sort_by_key(|r| (r.strategy, r.run));
    Aggregate {
        strategies,
        delta,
        welch_p50,
        runs,
    }
}

fn num(x: f64, decimals: usize) -> String {
    if x.is_finite() {
        format!("{x:.decimals$}")
    } else {
        "NA".to_string()
    }
}

/// The results table as CSV: one row per strategy, then the delta row when both are present.
pub fn render_csv(agg: &Aggregate) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in &agg.strategies {
        let [light, medium, heavy] = r.tier_pct;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.strategy,
            num(r.success_rate_pct.mean, 3),
            num(r.success_rate_pct.std, 3),
            num(r.p50_ms.mean, 3),
            num(r.p50_ms.std, 3),
            num(r.p95_ms.mean, 3),
            num(r.p95_ms.std, 3),
            num(heavy, 3),
            num(medium, 3),
            num(light, 3),
            num(r.failed_pct, 3),
            num(r.requests, 1),
        );
    }
    if let Some(d) = agg.delta {
        let [light, medium, heavy] = d.tier_pp;
        let _ = writeln!(
            s,
            "delta,{},,{}%,,{}%,,{},{},{},{},{}",
            num(d.success_pp, 3),
            num(d.p50_pct, 3),
            num(d.p95_pct, 3),
            num(heavy, 3),
            num(medium, 3),
            num(light, 3),
            num(d.failed_pp, 3),
            num(d.requests, 1),
        );
    }
    s
}

/// Human-readable summary: the table, per-run rows, tier shares among successes and the P50 test.
pub fn render_summary(agg: &Aggregate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<9} {:>5} {:>16} {:>20} {:>20}", "strategy", "runs", "success %", "P50 ms", "P95 ms");
    for r in &agg.strategies {
        let pm = |st: Stat, d| format!("{} ± {}", num(st.mean, d), num(st.std, d));
        let _ = writeln!(
            s,
            "{:<9} {:>5} {:>16} {:>20} {:>20}{}",
            r.strategy.as_str(),
            r.runs,
            pm(r.success_rate_pct, 2),
            pm(r.p50_ms, 1),
            pm(r.p95_ms, 1),
            if r.single_run { "  (n=1, std not estimable)" } else { "" }
        );
    }
    if let Some(d) = agg.delta {
        let _ = writeln!(
            s,
            "{:<9} {:>5} {:>16} {:>20} {:>20}",
            "delta",
            "",
            format!("{} pp", num(d.success_pp, 2)),
            format!("{}%", num(d.p50_pct, 1)),
            format!("{}%", num(d.p95_pct, 1))
        );
    }
    s.push('\n');
    s.push_str("tier share of successful requests (light / medium / heavy, %):\n");
    for r in &agg.strategies {
        let [l, m, h] = r.success_share_pct;
        let _ = writeln!(s, "  {:<9} {} / {} / {}", r.strategy.as_str(), num(l, 2), num(m, 2), num(h, 2));
    }
    s.push_str("tier share of all requests (light / medium / heavy / failed, %):\n");
    for r in &agg.strategies {
        let [l, m, h] = r.tier_pct;
        let _ = writeln!(
            s,
            "  {:<9} {} / {} / {} / {}",
            r.strategy.as_str(),
            num(l, 2),
            num(m, 2),
            num(h, 2),
            num(r.failed_pct, 2)
        );
    }
    s.push('\n');
    match agg.welch_p50 {
        Some(w) => {
            let _ = writeln!(
                s,
                "P50 difference, Welch's t-test (unequal variances, per-run P50): t = {}, df = {}",
                num(w.t, 3),
                num(w.df, 2)
            );
        }
        None => s.push_str("P50 difference, Welch's t-test: not computable (needs >= 2 runs per strategy with non-zero variance)\n"),
    }
    s.push_str("\nper run:\n");
    for r in &agg.runs {
        let _ = writeln!(
            s,
            "  {:<9} run {} seed {:<6} requests {:>7}  success {:>7}%  P50 {:>9}  P95 {:>9}",
            r.strategy.as_str(),
            r.run,
            r.seed,
            r.requests,
            num(r.success_rate_pct, 2),
            r.p50_ms.map_or("NA".into(), |v| num(v, 1)),
            r.p95_ms.map_or("NA".into(), |v| num(v, 1)),
        );
    }
    s
}

/// Writes via a temporary sibling and a rename, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[derive(Debug, Serialize, Deserialize)]
struct LoggedOutcome {
    strategy: Strategy,
    run: usize,
    seed: u64,
    #[serde(flatten)]
    outcome: RequestOutcome,
}

pub const CSV_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const OUTCOME_LOG_FILE: &str = "outcomes.jsonl";
pub const TRACE_DIR: &str = "traces";

/// Writes the CSV and summary for `agg` into `dir`; returns the written paths.
pub fn write_tables(agg: &Aggregate, dir: &Path) -> Result<Vec<PathBuf>> {
    if agg.strategies.is_empty() {
        return Err(Error::Config("nothing to report: no strategies".into()));
    }
    fs::create_dir_all(dir)?;
    let csv = dir.join(CSV_FILE);
    let summary = dir.join(SUMMARY_FILE);
    write_atomic(&summary, render_summary(agg).as_bytes())?;
    write_atomic(&csv, render_csv(agg).as_bytes())?;
    Ok(vec![csv, summary])
}

/// Writes the tables plus the raw outcome log and one decision trace per adaptive run.
pub fn emit_report(agg: &Aggregate, runs: &[RunOutput], dir: &Path) -> Result<Vec<PathBuf>> {
    if agg.strategies.is_empty() {
        return Err(Error::Config("nothing to report: no strategies".into()));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut log = Vec::new();
    for r in runs {
        for &outcome in &r.outcomes {
            serde_json::to_writer(&mut log, &LoggedOutcome {
                strategy: r.strategy,
                run: r.run,
                seed: r.seed,
                outcome,
            })?;
            log.push(b'\n');
        }
    }
    let log_path = dir.join(OUTCOME_LOG_FILE);
    write_atomic(&log_path, &log)?;
    written.push(log_path);

    for r in runs.iter().filter(|r| !r.trace.is_empty()) {
        let trace_dir = dir.join(TRACE_DIR);
        fs::create_dir_all(&trace_dir)?;
        let mut buf = Vec::new();
        for line in &r.trace {
            serde_json::to_writer(&mut buf, line)?;
            buf.push(b'\n');
        }
        let path = trace_dir.join(format!("{}-run{}-seed{}.jsonl", r.strategy, r.run, r.seed));
        write_atomic(&path, &buf)?;
        written.push(path);
    }

    written.extend(write_tables(agg, dir)?);
    Ok(written)
}

/// Recomputes per-run reports from a raw outcome log, ordered by strategy then run.
pub fn read_outcome_log(path: &Path) -> Result<Vec<RunReport>> {
    let file = fs::File::open(path)?;
    let mut runs: BTreeMap<(Strategy, usize, u64), Vec<RequestOutcome>> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LoggedOutcome = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        runs.entry((rec.strategy, rec.run, rec.seed)).or_default().push(rec.outcome);
    }
    Ok(runs
        .into_iter()
        .map(|((s, run, seed), outcomes)| RunReport::from_outcomes(s, run, seed, &outcomes))
        .collect())
}
