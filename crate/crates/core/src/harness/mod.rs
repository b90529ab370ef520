//! Experiment protocol: adaptive engine vs. fixed-weight baseline over repeated seeded runs.

pub mod report;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, TraceLine};
use crate::error::{Error, Result};
use crate::model::{PreferenceMode, Weights};
use crate::observe::{discretize, MetricWindow, RequestOutcome, UtilizationLevels};
use crate::sim::{generate_workload, EventKind, Scenario, SimConfig, Simulator};

pub use report::{aggregate, emit_report, read_outcome_log, welch_t, Aggregate, RunReport, StrategySummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Aif,
    Baseline,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Aif => "aif",
            Strategy::Baseline => "baseline",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aif" => Ok(Strategy::Aif),
            "baseline" => Ok(Strategy::Baseline),
            other => Err(Error::Config(format!("unknown strategy {other:?} (expected aif or baseline)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Relative paths resolve against the spec file's directory.
    pub scenario: PathBuf,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_runs")]
    pub runs_per_strategy: usize,
    /// Overrides the scenario's workload duration.
    #[serde(default)]
    pub run_duration_s: Option<f64>,
    /// Pause between live runs; ignored in simulation.
    #[serde(default)]
    pub cooldown_s: f64,
    /// Seed of run k is `seeds[k]`; the same seed is used for every strategy.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Run the simulations on separate threads.
    #[serde(default)]
    pub parallel: bool,
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Aif, Strategy::Baseline]
}
fn default_runs() -> usize {
    3
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

impl ExperimentSpec {
    pub fn new(scenario: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            strategies: default_strategies(),
            runs_per_strategy: default_runs(),
            run_duration_s: None,
            cooldown_s: 0.0,
            seeds: default_seeds(),
            parallel: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        let mut spec: Self = toml::from_str(&text).map_err(|e| Error::Scenario {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        if spec.scenario.is_relative() {
            if let Some(dir) = path.parent() {
                spec.scenario = dir.join(&spec.scenario);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        if self.runs_per_strategy == 0 {
            return Err(Error::Config("runs_per_strategy must be >= 1".into()));
        }
        if self.seeds.len() < self.runs_per_strategy {
            return Err(Error::Config(format!(
                "{} runs need {} seeds, got {}",
                self.runs_per_strategy,
                self.runs_per_strategy,
                self.seeds.len()
            )));
        }
        if let Some(d) = self.run_duration_s {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config("run_duration_s must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Engine state after one fast tick, kept for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub t: f64,
    pub weights: Weights,
    pub mode: PreferenceMode,
    /// Log-preference of the high-error bin in effect; none for the baseline.
    pub error_high_preference: Option<f64>,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub strategy: Strategy,
    pub run: usize,
    pub seed: u64,
    pub outcomes: Vec<RequestOutcome>,
    /// Decision trace; empty for the baseline.
    pub trace: Vec<TraceLine>,
    /// One sample per fast tick; for the baseline, the fixed weights.
    pub ticks: Vec<TickSample>,
    pub slow_ticks: Vec<f64>,
}

/// Simulates one run with a fresh engine.
pub fn simulate_run(scenario: &Scenario, strategy: Strategy, run: usize, seed: u64) -> Result<RunOutput> {
    let mut workload = scenario.workload.clone();
    workload.seed = workload.seed.wrapping_add(seed);
    let arrivals = generate_workload(&workload)?;

    let mut engine_cfg = scenario.engine.clone();
    engine_cfg.rng_seed = engine_cfg.rng_seed.wrapping_add(seed);
    let mut engine = match strategy {
        Strategy::Aif => Some(Engine::new(engine_cfg.clone())?),
        Strategy::Baseline => None,
    };
    let mut learner = engine.as_ref().map(Engine::learner);
    let initial = engine.as_ref().map_or(Weights::baseline(), Engine::current_weights);

    let sim_cfg = SimConfig {
        duration_s: workload.run_duration_s,
        timeout_ms: scenario.timeout_ms,
        fast_period_s: engine_cfg.fast_period_s,
        slow_period_s: engine_cfg.slow_period_s,
        util_poll_s: scenario.util_poll_s,
        seed,
    };
    let mut sim = Simulator::new(sim_cfg, scenario.tiers.clone(), &arrivals, initial)?;
    let mut window = MetricWindow::new(scenario.metric_window_s);
    let mut fresh_util: Option<UtilizationLevels> = None;

    let mut out = RunOutput {
        strategy,
        run,
        seed,
        outcomes: Vec::with_capacity(arrivals.len()),
        trace: Vec::new(),
        ticks: Vec::new(),
        slow_ticks: Vec::new(),
    };
    let mut resolved = Vec::new();
    while let Some(ev) = sim.step(&mut resolved) {
        for o in resolved.drain(..) {
            window.push(o);
            out.outcomes.push(o);
        }
        match ev.kind {
            EventKind::UtilPoll => {
                fresh_util = Some(sim.poll_utilization().discretize(&scenario.discretization));
            }
            EventKind::FastTick => {
                let stats = window.stats(ev.time, sim.in_flight());
                let (weights, mode, error_high_preference) = match engine.as_mut() {
                    Some(engine) => {
                        let obs = discretize(&stats, &scenario.discretization);
                        let tick = engine.fast_tick(ev.time, obs, fresh_util.take(), stats.error_rate)?;
                        sim.set_weights(tick.weights);
                        out.trace.push(tick.trace);
                        (tick.weights, tick.mode, Some(engine.preference().error_high()))
                    }
                    None => (sim.weights(), PreferenceMode::Normal, None),
                };
                out.ticks.push(TickSample {
                    t: ev.time,
                    weights,
                    mode,
                    error_high_preference,
                    error_rate: stats.error_rate,
                });
            }
            EventKind::SlowTick => {
                if let Some(l) = learner.as_mut() {
                    l.slow_tick();
                    out.slow_ticks.push(ev.time);
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Loads the scenario and runs every strategy × run. Output is ordered by strategy, then run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunOutput>> {
    spec.validate()?;
    let mut scenario = Scenario::load(&spec.scenario)?;
    if let Some(d) = spec.run_duration_s {
        scenario.workload.run_duration_s = d;
    }
    let mut strategies = spec.strategies.clone();
    strategies.sort();
    strategies.dedup();
    let jobs: Vec<(Strategy, usize, u64)> = strategies
        .iter()
        .flat_map(|&s| (0..spec.runs_per_strategy).map(move |k| (s, k)))
        .map(|(s, k)| (s, k, spec.seeds[k]))
        .collect();
    if spec.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(s, k, seed)| {
                    let scenario = &scenario;
                    scope.spawn(move || simulate_run(scenario, s, k, seed))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("simulation thread panicked"))
                .collect()
        })
    } else {
        jobs.iter()
            .map(|&(s, k, seed)| simulate_run(&scenario, s, k, seed))
            .collect()
    }
}
