//! Batch experiment runner: a single JSON config describes one
//! reproducible experiment; outputs are a long-format `results.csv`, a
//! `summary.json` with the headline statistics, and a `manifest.json`
//! echoing the full config. Replicas run in parallel with seeds derived
//! from the base seed and the replica index, so the worker count never
//! affects any number.

use crate::coupling::{cycle_success_lower_bound, CoalescingCoupling};
use crate::diagnostics::{
    self, locate_negativity_radius, lyapunov_drift_closed_form, lyapunov_drift_va,
    overshoot_sample, StationaryConfig,
};
use crate::engine::{simulate, InitSpec, SimConfig, SystemState};
use crate::meanfield::{pde_residual, AuxSolution, GumbelFixedPoint, ThetaPath, TravelingWave};
use crate::measure::{self, EmpiricalMeasure, LipschitzTestFn};
use crate::model::{check_assumptions, JumpSpec, Model, RateSpec};
use crate::rng::{replica_seed, Rng};
use crate::stats;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt;
use std::fs;
use std::io::Write as IoWrite;
use std::path::Path;

#[derive(Debug)]
pub enum ExperimentError {
    Config(String),
    AssumptionFailure(String),
    Io(std::io::Error),
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentError::Config(msg) => write!(f, "config error: {msg}"),
            ExperimentError::AssumptionFailure(msg) => write!(f, "assumption failure: {msg}"),
            ExperimentError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e)
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, ExperimentError> {
    Err(ExperimentError::Config(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    FluidLimit,
    Stationary,
    Speed,
    Chaos,
    Couple,
    VerifyFixedPoint,
    VerifyPde,
    DriftCheck,
    Overshoot,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::FluidLimit => "fluid_limit",
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::Speed => "speed",
            ExperimentKind::Chaos => "chaos",
            ExperimentKind::Couple => "couple",
            ExperimentKind::VerifyFixedPoint => "verify_fixed_point",
            ExperimentKind::VerifyPde => "verify_pde",
            ExperimentKind::DriftCheck => "drift_check",
            ExperimentKind::Overshoot => "overshoot",
        }
    }
}

/// One experiment, fully described. Unknown keys are rejected so a config
/// file always means what it says.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: Model,
    pub seed: u64,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_list: Option<Vec<usize>>,
    #[serde(rename = "T", default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub replicas: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default)]
    pub record_events: Option<bool>,
    /// Closeness threshold of the coalescing coupling.
    #[serde(default)]
    pub a: Option<f64>,
    /// Level of the truncated second-moment drift function.
    #[serde(rename = "A", default)]
    pub va_level: Option<f64>,
    #[serde(rename = "burn_in_T", default)]
    pub burn_in_t: Option<f64>,
    #[serde(rename = "thin_T", default)]
    pub thin_t: Option<f64>,
    #[serde(default)]
    pub num_samples: Option<usize>,
    /// Grid for the assumption checks (nonnegative reals).
    #[serde(default)]
    pub a_grid: Option<Vec<f64>>,
    /// Levels for the overshoot experiment.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    /// Finite-difference step for the PDE residual.
    #[serde(default)]
    pub h: Option<f64>,
    /// Event cap per replica (default one billion); exceeding it taints
    /// the run.
    #[serde(default)]
    pub event_budget: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.model
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn assumption_grid(&self) -> Vec<f64> {
        self.a_grid
            .clone()
            .unwrap_or_else(|| (0..=200).map(|k| k as f64 * 0.25).collect())
    }

    fn n(&self) -> Result<usize, ExperimentError> {
        match self.n {
            Some(n) if n >= 1 => Ok(n),
            Some(n) => cfg_err(format!("n must be at least 1, got {n}")),
            None => cfg_err("this experiment requires `n`"),
        }
    }

    fn horizon(&self) -> Result<f64, ExperimentError> {
        match self.horizon {
            Some(t) if t >= 0.0 => Ok(t),
            Some(t) => cfg_err(format!("T must be nonnegative, got {t}")),
            None => cfg_err("this experiment requires `T`"),
        }
    }

    fn replicas(&self) -> usize {
        self.replicas.unwrap_or(1).max(1)
    }

    fn exp_exp_params(&self) -> Result<(f64, f64), ExperimentError> {
        match (&self.model.rate, &self.model.jump) {
            (RateSpec::Exp { beta }, JumpSpec::Exponential { gamma }) => Ok((*beta, *gamma)),
            _ => cfg_err("this experiment requires the exponential-exponential model"),
        }
    }
}

/// One long-format output row; every row carries full provenance.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub metric: String,
    pub t: f64,
    pub n: usize,
    pub replica: u64,
    pub seed: u64,
    pub value: f64,
}

/// Everything a run produces, before being written to disk.
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Value,
    pub tainted: bool,
    /// Extra whole files: (filename, contents).
    pub extra_files: Vec<(String, String)>,
}

/// Chunked deterministic parallel map over replica indices.
pub fn parallel_map<T, F>(count: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let jobs = jobs.max(1).min(count.max(1));
    if jobs <= 1 {
        return (0..count).map(f).collect();
    }
    let mut out: Vec<Option<T>> = Vec::with_capacity(count);
    out.resize_with(count, || None);
    let chunk = count.div_ceil(jobs);
    std::thread::scope(|scope| {
        let f = &f;
        let mut handles = Vec::new();
        let mut rest: &mut [Option<T>] = &mut out;
        let mut start = 0usize;
        while start < count {
            let take = chunk.min(count - start);
            let (head, tail) = rest.split_at_mut(take);
            rest = tail;
            let begin = start;
            handles.push(scope.spawn(move || {
                for (offset, slot) in head.iter_mut().enumerate() {
                    *slot = Some(f(begin + offset));
                }
            }));
            start += take;
        }
        for h in handles {
            h.join().expect("worker panicked");
        }
    });
    out.into_iter().map(|v| v.expect("slot filled")).collect()
}

/// Execute the experiment described by `cfg` with `jobs` workers.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<ExperimentOutput, ExperimentError> {
    match cfg.experiment {
        ExperimentKind::Simulate => run_simulate(cfg),
        ExperimentKind::FluidLimit => run_fluid_limit(cfg, jobs),
        ExperimentKind::Stationary => run_stationary(cfg),
        ExperimentKind::Speed => run_speed(cfg, jobs),
        ExperimentKind::Chaos => run_chaos(cfg, jobs),
        ExperimentKind::Couple => run_couple(cfg, jobs),
        ExperimentKind::VerifyFixedPoint => run_verify_fixed_point(cfg),
        ExperimentKind::VerifyPde => run_verify_pde(cfg),
        ExperimentKind::DriftCheck => run_drift_check(cfg),
        ExperimentKind::Overshoot => run_overshoot(cfg, jobs),
    }
}

fn init_for(cfg: &ExperimentConfig) -> InitSpec {
    match (&cfg.model.rate, &cfg.model.jump) {
        (RateSpec::Exp { beta }, JumpSpec::Exponential { gamma }) if beta <= gamma => {
            InitSpec::GumbelFixedPoint {
                beta: *beta,
                gamma: *gamma,
            }
        }
        _ => InitSpec::PointMass(0.0),
    }
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let n = cfg.n()?;
    let horizon = cfg.horizon()?;
    let reps = cfg.replicas();
    let name = cfg.experiment.name();
    let mut rows = Vec::new();
    let mut extra_files = Vec::new();
    let mut tainted = false;
    for r in 0..reps {
        let seed = replica_seed(cfg.seed, r as u64);
        let mut sim_cfg = SimConfig::new(n, horizon, seed);
        sim_cfg.record_events = cfg.record_events.unwrap_or(false);
        sim_cfg.snapshot_times = cfg.snapshot_times.clone().unwrap_or_default();
        if let Some(budget) = cfg.event_budget {
            sim_cfg.event_budget = budget;
        }
        let run = simulate(&cfg.model, &init_for(cfg), &sim_cfg)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        tainted |= run.tainted();
        rows.push(ResultRow {
            experiment: name,
            metric: "final_mean".into(),
            t: run.state.t,
            n,
            replica: r as u64,
            seed,
            value: run.state.m,
        });
        rows.push(ResultRow {
            experiment: name,
            metric: "events".into(),
            t: run.state.t,
            n,
            replica: r as u64,
            seed,
            value: run.events_count as f64,
        });
        if let Some(events) = &run.events {
            let mut text = String::from("time,particle,jump_size,total_rate_before\n");
            for ev in events {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    ev.time, ev.particle, ev.jump_size, ev.total_rate_before
                ));
            }
            extra_files.push((format!("events_{r}.csv"), text));
        }
        if !run.snapshots.is_empty() {
            let mut header = format!("# n={n}; m=");
            for (k, s) in run.snapshots.iter().enumerate() {
                if k > 0 {
                    header.push(';');
                }
                header.push_str(&format!("{}:{}", s.time, s.m));
            }
            header.push('\n');
            let mut text = header;
            text.push_str("snapshot_time,particle,y\n");
            for s in &run.snapshots {
                for (i, &y) in s.y.iter().enumerate() {
                    text.push_str(&format!("{},{},{}\n", s.time, i, y));
                }
            }
            extra_files.push((format!("snapshots_{r}.csv"), text));
        }
    }
    let final_means: Vec<f64> = rows
        .iter()
        .filter(|r| r.metric == "final_mean")
        .map(|r| r.value)
        .collect();
    let summary = json!({
        "experiment": name,
        "replicas": reps,
        "mean_final_mean": if final_means.is_empty() { 0.0 } else { stats::mean(&final_means) },
        "tainted": tainted,
    });
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted,
        extra_files,
    })
}

fn run_fluid_limit(
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<ExperimentOutput, ExperimentError> {
    let (beta, gamma) = cfg.exp_exp_params()?;
    if beta > gamma {
        return Err(ExperimentError::AssumptionFailure(
            "fluid-limit comparison needs beta <= gamma".into(),
        ));
    }
    let t_eval = cfg.horizon()?;
    let reps = cfg.replicas();
    let n_list = cfg
        .n_list
        .clone()
        .or_else(|| cfg.n.map(|n| vec![n]))
        .ok_or_else(|| ExperimentError::Config("fluid_limit needs n or n_list".into()))?;
    let fp =
        GumbelFixedPoint::new(beta, gamma).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let wave = TravelingWave::new(fp);
    let name = cfg.experiment.name();
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for &n in &n_list {
        let vals = parallel_map(reps, jobs, |r| {
            let seed = replica_seed(cfg.seed ^ (n as u64), r as u64);
            let sim_cfg = SimConfig::new(n, t_eval, seed);
            let run = simulate(
                &cfg.model,
                &InitSpec::GumbelFixedPoint { beta, gamma },
                &sim_cfg,
            )
            .expect("simulation");
            let mu = EmpiricalMeasure::new(run.state.raw_positions()).unwrap();
            let shift = wave.mean_at(t_eval);
            let w1 = measure::wasserstein1_vs_law(
                &mu,
                |x| wave.fixed_point.cdf(x - shift),
                |x| wave.fixed_point.density(x - shift),
                |p| wave.fixed_point.quantile(p) + shift,
            );
            (seed, w1)
        });
        for (r, (seed, w1)) in vals.iter().enumerate() {
            rows.push(ResultRow {
                experiment: name,
                metric: "w1_fluid".into(),
                t: t_eval,
                n,
                replica: r as u64,
                seed: *seed,
                value: *w1,
            });
        }
        medians.push(stats::median(&vals.iter().map(|v| v.1).collect::<Vec<_>>()));
    }
    let ratios: Vec<f64> = medians.windows(2).map(|w| w[0] / w[1]).collect();
    let summary = json!({
        "experiment": name,
        "n_list": n_list,
        "median_w1": medians,
        "successive_ratios": ratios,
        "tainted": false,
    });
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted: false,
        extra_files: vec![],
    })
}

fn run_stationary(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let n = cfg.n()?;
    let st_cfg = StationaryConfig {
        burn_in_t: cfg.burn_in_t.unwrap_or(30.0),
        thin_t: cfg.thin_t.unwrap_or(1.0),
        num_samples: cfg.num_samples.unwrap_or(40),
        seed: cfg.seed,
    };
    let samples = diagnostics::stationary_sample(&cfg.model, n, &st_cfg).map_err(|e| match e {
        diagnostics::DiagnosticsError::AssumptionFailed => {
            ExperimentError::AssumptionFailure(e.to_string())
        }
        other => ExperimentError::Config(other.to_string()),
    })?;
    let name = cfg.experiment.name();
    let mut rows = vec![ResultRow {
        experiment: name,
        metric: "half_vs_half_w1".into(),
        t: st_cfg.burn_in_t,
        n,
        replica: 0,
        seed: cfg.seed,
        value: samples.diagnostic_w1,
    }];
    let mut w1_vs_fp = None;
    if let Ok((beta, gamma)) = cfg.exp_exp_params() {
        if beta <= gamma {
            let fp = GumbelFixedPoint::new(beta, gamma).unwrap();
            let pooled = samples.pooled();
            let w1 = measure::wasserstein1_vs_law(
                &pooled,
                |x| fp.cdf(x),
                |x| fp.density(x),
                |p| fp.quantile(p),
            );
            w1_vs_fp = Some(w1);
            rows.push(ResultRow {
                experiment: name,
                metric: "w1_vs_fixed_point".into(),
                t: st_cfg.burn_in_t,
                n,
                replica: 0,
                seed: cfg.seed,
                value: w1,
            });
        }
    }
    let summary = json!({
        "experiment": name,
        "n": n,
        "half_vs_half_w1": samples.diagnostic_w1,
        "w1_vs_fixed_point": w1_vs_fp,
        "num_samples": st_cfg.num_samples,
        "tainted": false,
    });
    // optionally persist the sampled configurations in the snapshot format
    let mut extra_files = Vec::new();
    if cfg.record_events.unwrap_or(false) {
        let mut header = format!("# n={n}; m=");
        for (k, st) in samples.states.iter().enumerate() {
            if k > 0 {
                header.push(';');
            }
            header.push_str(&format!("{}:{}", st.t, st.m));
        }
        header.push('\n');
        let mut text = header;
        text.push_str("snapshot_time,particle,y\n");
        for st in &samples.states {
            for (i, &y) in st.y.iter().enumerate() {
                text.push_str(&format!("{},{},{}\n", st.t, i, y));
            }
        }
        extra_files.push(("stationary_samples.csv".into(), text));
    }
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted: false,
        extra_files,
    })
}

fn run_speed(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput, ExperimentError> {
    let n = cfg.n()?;
    let horizon = cfg.horizon()?;
    let reps = cfg.replicas();
    let name = cfg.experiment.name();
    let vals = parallel_map(reps, jobs, |r| {
        let seed = replica_seed(cfg.seed, r as u64);
        let mut sim_cfg = SimConfig::new(n, horizon, seed);
        if let Some(budget) = cfg.event_budget {
            sim_cfg.event_budget = budget;
        }
        let run = simulate(&cfg.model, &init_for(cfg), &sim_cfg).expect("simulation");
        (seed, run.state.m / horizon, run.tainted())
    });
    let tainted = vals.iter().any(|v| v.2);
    let rows: Vec<ResultRow> = vals
        .iter()
        .enumerate()
        .map(|(r, v)| ResultRow {
            experiment: name,
            metric: "speed".into(),
            t: horizon,
            n,
            replica: r as u64,
            seed: v.0,
            value: v.1,
        })
        .collect();
    let speeds: Vec<f64> = vals.iter().map(|v| v.1).collect();
    let mut summary = json!({
        "experiment": name,
        "n": n,
        "T": horizon,
        "mean_speed": stats::mean(&speeds),
        "stderr_speed": stats::stderr(&speeds),
        "tainted": tainted,
    });
    if let Ok((beta, gamma)) = cfg.exp_exp_params() {
        if beta <= gamma {
            let fp = GumbelFixedPoint::new(beta, gamma).unwrap();
            let target = fp.wave_speed();
            summary["target_speed"] = json!(target);
            summary["relative_error"] = json!((stats::mean(&speeds) - target).abs() / target);
        }
    }
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted,
        extra_files: vec![],
    })
}

fn run_chaos(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput, ExperimentError> {
    let reps = cfg.replicas().max(100);
    let horizon = cfg.horizon.unwrap_or(25.0);
    let n_list = cfg
        .n_list
        .clone()
        .or_else(|| cfg.n.map(|n| vec![n]))
        .ok_or_else(|| ExperimentError::Config("chaos needs n or n_list".into()))?;
    let f = LipschitzTestFn::soft_clip(5.0).unwrap();
    let name = cfg.experiment.name();
    let mut rows = Vec::new();
    let mut covs = Vec::new();
    for &n in &n_list {
        if n < 2 {
            return cfg_err("chaos needs n >= 2");
        }
        let states: Vec<SystemState> = parallel_map(reps, jobs, |r| {
            let seed = replica_seed(cfg.seed ^ (n as u64).rotate_left(17), r as u64);
            let sim_cfg = SimConfig::new(n, horizon, seed);
            simulate(&cfg.model, &init_for(cfg), &sim_cfg)
                .expect("simulation")
                .state
        });
        let est = diagnostics::chaos_estimate(&states, &f)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        rows.push(ResultRow {
            experiment: name,
            metric: "pair_covariance".into(),
            t: horizon,
            n,
            replica: 0,
            seed: cfg.seed,
            value: est.covariance,
        });
        rows.push(ResultRow {
            experiment: name,
            metric: "pair_covariance_stderr".into(),
            t: horizon,
            n,
            replica: 0,
            seed: cfg.seed,
            value: est.stderr,
        });
        covs.push(est.covariance);
    }
    let summary = json!({
        "experiment": name,
        "n_list": n_list,
        "covariances": covs,
        "replicas": reps,
        "tainted": false,
    });
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted: false,
        extra_files: vec![],
    })
}

fn run_couple(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput, ExperimentError> {
    let (beta, gamma) = cfg.exp_exp_params()?;
    if beta > gamma {
        return Err(ExperimentError::AssumptionFailure(
            "coupling experiment needs beta <= gamma".into(),
        ));
    }
    let pairs = cfg.replicas();
    let a = cfg.a.unwrap_or(0.5);
    let max_cycles = 500u32;
    let fp =
        GumbelFixedPoint::new(beta, gamma).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let theta_bar = fp.w_integral();
    let name = cfg.experiment.name();
    let model = cfg.model.clone();
    let results = parallel_map(pairs, jobs, |r| {
        let seed = replica_seed(cfg.seed, r as u64);
        let mut rng = Rng::new(seed);
        let theta = ThetaPath::constant(theta_bar).unwrap();
        let z1 = fp.sample(&mut rng);
        let z2 = fp.sample(&mut rng);
        let mut c = CoalescingCoupling::new(z1, z2, a, &model, &theta).unwrap();
        let tau = c.run_to_coalescence(&mut rng, max_cycles);
        (seed, tau, c.state.cycle, c.state.coalesced)
    });
    let mut rows = Vec::new();
    let mut csv = String::from("pair_id,tau,cycles_used,coalesced_by_horizon\n");
    let mut coalesced = 0usize;
    let mut cycles_total = 0u64;
    for (r, (seed, tau, cycles, ok)) in results.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r,
            tau.map(|t| t.to_string()).unwrap_or_else(|| "nan".into()),
            cycles,
            ok
        ));
        rows.push(ResultRow {
            experiment: name,
            metric: "tau".into(),
            t: tau.unwrap_or(f64::NAN),
            n: 2,
            replica: r as u64,
            seed: *seed,
            value: tau.unwrap_or(f64::NAN),
        });
        rows.push(ResultRow {
            experiment: name,
            metric: "cycles_used".into(),
            t: tau.unwrap_or(f64::NAN),
            n: 2,
            replica: r as u64,
            seed: *seed,
            value: *cycles as f64,
        });
        if *ok {
            coalesced += 1;
        }
        cycles_total += (*cycles).max(1) as u64;
    }
    let per_cycle = coalesced as f64 / cycles_total as f64;
    let summary = json!({
        "experiment": name,
        "pairs": pairs,
        "a": a,
        "theta": theta_bar,
        "coalesced_fraction": coalesced as f64 / pairs as f64,
        "per_cycle_success": per_cycle,
        "per_cycle_lower_bound": cycle_success_lower_bound(beta, gamma, a),
        "tainted": false,
    });
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted: false,
        extra_files: vec![("coalescence.csv".into(), csv)],
    })
}

fn run_verify_fixed_point(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let (beta, gamma) = cfg.exp_exp_params()?;
    if beta > gamma {
        return Err(ExperimentError::AssumptionFailure(
            "the fixed point exists for beta <= gamma".into(),
        ));
    }
    let fp =
        GumbelFixedPoint::new(beta, gamma).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let mass = fp.integrate_against(|_| 1.0, 1e-11);
    let mean = fp.integrate_against(|x| x, 1e-11);
    let w_quad = fp.integrate_against(|x| cfg.model.rate.eval(x), 1e-11);
    let name = cfg.experiment.name();
    let mk = |metric: &str, value: f64| ResultRow {
        experiment: name,
        metric: metric.into(),
        t: 0.0,
        n: 0,
        replica: 0,
        seed: cfg.seed,
        value,
    };
    let rows = vec![
        mk("normalization_error", (mass - 1.0).abs()),
        mk("mean_error", mean.abs()),
        mk("w_integral", fp.w_integral()),
        mk("w_integral_quadrature", w_quad),
        mk("cdf_at_zero", fp.cdf(0.0)),
        mk("wave_speed", fp.wave_speed()),
    ];
    let summary = json!({
        "experiment": name,
        "beta": beta,
        "gamma": gamma,
        "normalization_error": (mass - 1.0).abs(),
        "mean_error": mean.abs(),
        "w_integral": fp.w_integral(),
        "w_integral_quadrature_gap": (fp.w_integral() - w_quad).abs(),
        "cdf_at_zero": fp.cdf(0.0),
        "tainted": false,
    });
    // density/CDF on a plotting grid
    let mut grid_csv = String::from("x,density,cdf\n");
    let lo = fp.location - 6.0 / beta;
    let hi = fp.location + 20.0 / gamma;
    let steps = 800;
    for k in 0..=steps {
        let x = lo + (hi - lo) * k as f64 / steps as f64;
        grid_csv.push_str(&format!("{},{},{}\n", x, fp.density(x), fp.cdf(x)));
    }
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted: false,
        extra_files: vec![("fixed_point_grid.csv".into(), grid_csv)],
    })
}

fn run_verify_pde(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let (beta, gamma) = cfg.exp_exp_params()?;
    if beta > gamma {
        return Err(ExperimentError::AssumptionFailure(
            "the PDE verification uses the fixed-point input, needs beta <= gamma".into(),
        ));
    }
    let h = cfg.h.unwrap_or(1e-4);
    let fp =
        GumbelFixedPoint::new(beta, gamma).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let name = cfg.experiment.name();
    let mut rows = Vec::new();
    let mut max_abs: f64 = 0.0;
    let mut ratios = Vec::new();
    for (label, theta_value) in [("zero", 0.0), ("fixed_point", fp.w_integral())] {
        let aux = AuxSolution::new(ThetaPath::constant(theta_value).unwrap(), beta, gamma)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        for (k, &(t, x)) in [
            (0.5, -1.0),
            (0.5, 0.0),
            (0.5, 1.0),
            (1.0, -0.5),
            (1.0, 0.5),
            (2.0, -1.5),
            (2.0, 0.0),
            (4.0, 1.0),
            (8.0, -1.0),
            (8.0, 2.0),
        ]
        .iter()
        .enumerate()
        {
            let r =
                pde_residual(&aux, t, x, h).map_err(|e| ExperimentError::Config(e.to_string()))?;
            max_abs = max_abs.max(r.value.abs());
            rows.push(ResultRow {
                experiment: name,
                metric: format!("residual_{label}"),
                t,
                n: k,
                replica: 0,
                seed: cfg.seed,
                value: r.value,
            });
        }
        // convergence order: halving a coarser step
        let coarse = pde_residual(&aux, 1.0, 0.25, 2e-3).unwrap().value.abs();
        let fine = pde_residual(&aux, 1.0, 0.25, 1e-3).unwrap().value.abs();
        ratios.push(coarse / fine);
    }
    let summary = json!({
        "experiment": name,
        "h": h,
        "max_abs_residual": max_abs,
        "halving_ratios": ratios,
        "tainted": false,
    });
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted: false,
        extra_files: vec![],
    })
}

fn run_drift_check(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let n = cfg.n.unwrap_or(8);
    let reps = cfg.replicas.unwrap_or(10).max(1);
    // the one-step window h = 1e-3 / rate means only ~1e-3 * mc_reps
    // replicas see a jump at all; below ~1e5 replicas the z-scores are
    // driven by a few dozen events and their spread is far from normal
    let mc_reps = cfg.num_samples.unwrap_or(100_000);
    let name = cfg.experiment.name();
    let mut rng = Rng::new(cfg.seed);
    let mut rows = Vec::new();
    let mut max_z: f64 = 0.0;
    for r in 0..reps {
        let mut y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        for v in &mut y {
            *v -= mean;
        }
        let state = SystemState {
            y,
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        let rep = diagnostics::lyapunov_drift(&state, &cfg.model, mc_reps, &mut rng)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let z = (rep.lv_monte_carlo - rep.lv_closed_form) / rep.lv_mc_stderr;
        max_z = max_z.max(z.abs());
        rows.push(ResultRow {
            experiment: name,
            metric: "drift_z_score".into(),
            t: 0.0,
            n,
            replica: r as u64,
            seed: cfg.seed,
            value: z,
        });
    }
    // V_A inequality scan
    let va_level = cfg.va_level.unwrap_or(2.0);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let mut y: Vec<f64> = (0..n).map(|_| rng.normal() * 2.0).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        for v in &mut y {
            *v -= mean;
        }
        let state = SystemState {
            y,
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        let rep = lyapunov_drift_va(&state, &cfg.model, va_level)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        if rep.generator_value > rep.bound_rhs + 1e-10 {
            violations += 1;
        }
    }
    let radius = locate_negativity_radius(&cfg.model, n, &mut Rng::new(cfg.seed ^ 0xabcd));
    // closed-form sign check outside twice the located radius
    let mut sign_failures = 0usize;
    for _ in 0..1000 {
        let mut y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        for v in &mut y {
            *v -= mean;
        }
        let mean_abs = y.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        let target = 2.0 * radius * (1.0 + rng.uniform());
        for v in &mut y {
            *v *= target / mean_abs;
        }
        let state = SystemState {
            y,
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        if lyapunov_drift_closed_form(&state, &cfg.model) >= 0.0 {
            sign_failures += 1;
        }
    }
    let summary = json!({
        "experiment": name,
        "n": n,
        "states": reps,
        "mc_replicas_per_state": mc_reps,
        "expected_one_step_events": mc_reps as f64 * 1e-3,
        "max_abs_z": max_z,
        "va_level": va_level,
        "va_violations": violations,
        "negativity_radius": radius,
        "sign_failures_outside_2radius": sign_failures,
        "tainted": false,
    });
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted: false,
        extra_files: vec![],
    })
}

fn run_overshoot(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput, ExperimentError> {
    let levels: Vec<f64> = cfg
        .levels
        .clone()
        .unwrap_or_else(|| (0..=50).map(|k| k as f64).collect());
    let draws = cfg.num_samples.unwrap_or(100_000);
    let name = cfg.experiment.name();
    let jump = cfg.model.jump.clone();
    let results = parallel_map(levels.len(), jobs, |idx| {
        let level = levels[idx];
        let mut rng = Rng::new(replica_seed(cfg.seed, idx as u64));
        let sample: Vec<f64> = (0..draws)
            .map(|_| overshoot_sample(&jump, level, &mut rng).overshoot)
            .collect();
        match &jump {
            JumpSpec::Exponential { gamma } => {
                let g = *gamma;
                crate::stats::ks_statistic(&sample, move |x: f64| {
                    if x <= 0.0 {
                        0.0
                    } else {
                        1.0 - (-g * x).exp()
                    }
                })
            }
            _ => {
                // no distributional target; report the sample mean instead
                stats::mean(&sample)
            }
        }
    });
    let mut rows = Vec::new();
    let mut max_ks: f64 = 0.0;
    let metric = match &cfg.model.jump {
        JumpSpec::Exponential { .. } => "ks_vs_exponential",
        _ => "mean_overshoot",
    };
    for (idx, v) in results.iter().enumerate() {
        max_ks = max_ks.max(*v);
        rows.push(ResultRow {
            experiment: name,
            metric: metric.into(),
            t: levels[idx],
            n: draws,
            replica: idx as u64,
            seed: cfg.seed,
            value: *v,
        });
    }
    let summary = json!({
        "experiment": name,
        "levels": levels.len(),
        "draws_per_level": draws,
        "metric": metric,
        "max_value": max_ks,
        "tainted": false,
    });
    Ok(ExperimentOutput {
        rows,
        summary,
        tainted: false,
        extra_files: vec![],
    })
}

/// Render the long-format CSV.
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("experiment,metric,t,n,replica,seed,value\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.experiment, r.metric, r.t, r.n, r.replica, r.seed, r.value
        ));
    }
    out
}

/// Write results.csv, summary.json, manifest.json, and any extra files.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    out: &ExperimentOutput,
    wall_seconds: f64,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("results.csv"))?;
    f.write_all(render_csv(&out.rows).as_bytes())?;
    let summary = serde_json::to_string_pretty(&out.summary)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    fs::write(dir.join("summary.json"), summary)?;
    let manifest = json!({
        "config": cfg,
        "library_version": env!("CARGO_PKG_VERSION"),
        "wall_seconds": wall_seconds,
        "tainted": out.tainted,
    });
    let manifest = serde_json::to_string_pretty(&manifest)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    fs::write(dir.join("manifest.json"), manifest)?;
    for (name, contents) in &out.extra_files {
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

/// Standing-assumption gate used by the CLI before running: returns the
/// failing message when the model is ill-posed.
pub fn assumption_gate(cfg: &ExperimentConfig) -> Result<(), String> {
    let report = check_assumptions(&cfg.model, &cfg.assumption_grid())
        .map_err(|e| format!("assumption check failed to run: {e}"))?;
    if !report.a21_holds {
        return Err(format!(
            "model fails assumption a21 (finite c_w and third moment): c_w = {}; \
             rerun with --allow-unchecked to force",
            report.c_w
        ));
    }
    Ok(())
}
