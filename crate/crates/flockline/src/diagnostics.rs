//! Quantitative diagnostics for the centered particle system: generator
//! (Lyapunov) drifts in closed form with Monte Carlo cross-checks,
//! renewal overshoots, long-run stationary sampling, and the velocity and
//! chaos estimators.
//!
//! For `V(y) = (1/n) sum y_i^2` the centered generator evaluates in
//! closed form to
//!
//! ```text
//! LV(y) = ((n-1)/n^2) E[Z^2] sum_i w(y_i) + (2/n) E[Z] sum_i y_i w(y_i),
//! ```
//!
//! negative outside a compact set, which is the drift certificate behind
//! stationarity. For `V_A(y) = (1/n) sum (y_i - A)+^2` the generator and
//! the bound
//!
//! ```text
//! LV_A <= eps_A + (2 w(A) E[Z]/n) sum (y_i-A)+
//!       + alpha(y) [3 E[Z^2]/n - (2 E[Z]/n) sum (y_i-A)+]
//! ```
//!
//! with `eps_A = sup_{x>=0} w(A-x) E[(Z-x)+^2] + w(A) E[Z^2]` are both
//! evaluated exactly (the supremum in closed form for the
//! exponential-exponential pair, else on a grid, flagged).

use crate::engine::{run_until, InitSpec, RunResult, SimConfig, SystemState};
use crate::measure::EmpiricalMeasure;
use crate::model::{check_assumptions, JumpSpec, Model, RateSpec};
use crate::rng::Rng;
use crate::stats;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticsError {
    NotCentered { sum_y: f64 },
    TaintedRun,
    AssumptionFailed,
    InvalidConfig(String),
    InsufficientReplicas { got: usize, need: usize },
    EmptyTrajectory,
}

impl fmt::Display for DiagnosticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticsError::NotCentered { sum_y } => {
                write!(f, "state is not centered: sum of y = {sum_y}")
            }
            DiagnosticsError::TaintedRun => {
                write!(f, "run hit the event budget or the exponent cap")
            }
            DiagnosticsError::AssumptionFailed => {
                write!(
                    f,
                    "model fails the standing assumptions (a21 does not hold)"
                )
            }
            DiagnosticsError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            DiagnosticsError::InsufficientReplicas { got, need } => {
                write!(f, "need at least {need} replicas, got {got}")
            }
            DiagnosticsError::EmptyTrajectory => write!(f, "trajectory contains no elapsed time"),
        }
    }
}

impl std::error::Error for DiagnosticsError {}

fn require_centered(state: &SystemState) -> Result<(), DiagnosticsError> {
    let tol = 1e-9 * state.n() as f64 * (1.0 + state.max_abs_y());
    let s = state.sum_y();
    if s.abs() > tol {
        return Err(DiagnosticsError::NotCentered { sum_y: s });
    }
    Ok(())
}

/// `V(y) = (1/n) sum y_i^2`.
pub fn lyapunov_v(state: &SystemState) -> f64 {
    state.y.iter().map(|&y| y * y).sum::<f64>() / state.n() as f64
}

/// Closed-form centered-generator value of `V`.
pub fn lyapunov_drift_closed_form(state: &SystemState, model: &Model) -> f64 {
    let n = state.n() as f64;
    let varsigma = model.jump.mean();
    let vartheta = model.jump.second_moment();
    let mut sum_w = 0.0;
    let mut sum_yw = 0.0;
    for &y in &state.y {
        let w = model.rate.eval(y);
        sum_w += w;
        sum_yw += y * w;
    }
    (n - 1.0) / (n * n) * vartheta * sum_w + 2.0 / n * varsigma * sum_yw
}

/// Drift report for `V`: closed form, one-step Monte Carlo cross-check,
/// and the empirically located negativity radius.
#[derive(Debug, Clone)]
pub struct DriftReport {
    /// The state the report was evaluated at.
    pub state: SystemState,
    pub v_value: f64,
    pub lv_closed_form: f64,
    pub lv_monte_carlo: f64,
    pub lv_mc_stderr: f64,
    /// Radius in `(1/n) sum |y_i|` beyond which the closed form was found
    /// negative (bisection over sampled shapes).
    pub c1_estimate: f64,
    pub in_compact_k: bool,
}

/// Evaluate the drift report at `state`. The Monte Carlo side simulates
/// the exact chain for a window `h = 1e-3 / total_rate` and averages
/// `(V(Y(h)) - V(y))/h` over `mc_reps` replicas.
pub fn lyapunov_drift(
    state: &SystemState,
    model: &Model,
    mc_reps: usize,
    rng: &mut Rng,
) -> Result<DriftReport, DiagnosticsError> {
    require_centered(state)?;
    let n = state.n();
    let lv = lyapunov_drift_closed_form(state, model);
    let v0 = lyapunov_v(state);
    let total_rate: f64 = state.y.iter().map(|&y| model.rate.eval(y)).sum();
    let h = 1e-3 / total_rate;
    let cfg = SimConfig::new(n, h, 0);
    let mut samples = Vec::with_capacity(mc_reps);
    for _ in 0..mc_reps {
        let mut st = state.clone();
        st.t = 0.0;
        let run = run_until(model, st, h, &cfg, rng)
            .map_err(|e| DiagnosticsError::InvalidConfig(e.to_string()))?;
        samples.push((lyapunov_v(&run.state) - v0) / h);
    }
    let mc = stats::mean(&samples);
    let se = stats::stderr(&samples);
    let radius = locate_negativity_radius(model, n, &mut Rng::new(0x10ca7e));
    let mean_abs = state.y.iter().map(|y| y.abs()).sum::<f64>() / n as f64;
    Ok(DriftReport {
        state: state.clone(),
        v_value: v0,
        lv_closed_form: lv,
        lv_monte_carlo: mc,
        lv_mc_stderr: se,
        c1_estimate: radius,
        in_compact_k: mean_abs <= radius,
    })
}

/// Random centered shape with `(1/n) sum |y_i| = 1`, mixing diffuse and
/// single-laggard configurations.
fn random_unit_shape(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut y: Vec<f64> = if rng.uniform() < 0.3 && n >= 2 {
        // one particle far behind the rest
        let mut v = vec![1.0 / (n as f64 - 1.0); n];
        v[0] = -1.0;
        v
    } else {
        (0..n).map(|_| rng.normal()).collect()
    };
    let mean = y.iter().sum::<f64>() / n as f64;
    for v in &mut y {
        *v -= mean;
    }
    let mean_abs = y.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    if mean_abs > 0.0 {
        for v in &mut y {
            *v /= mean_abs;
        }
    } else {
        y = random_unit_shape(n, rng);
    }
    y
}

/// Bisect for the smallest scale `rho` (in mean absolute coordinate) at
/// which the closed-form drift is negative across a panel of sampled
/// shapes.
pub fn locate_negativity_radius(model: &Model, n: usize, rng: &mut Rng) -> f64 {
    let shapes: Vec<Vec<f64>> = (0..48).map(|_| random_unit_shape(n, rng)).collect();
    let all_negative = |rho: f64| -> bool {
        shapes.iter().all(|shape| {
            let state = SystemState {
                y: shape.iter().map(|&v| v * rho).collect(),
                m: 0.0,
                t: 0.0,
                overflow: false,
            };
            lyapunov_drift_closed_form(&state, model) < 0.0
        })
    };
    let mut hi = 1.0;
    let mut guard = 0;
    while !all_negative(hi) {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return hi; // drift never certified negative at sampled shapes
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if all_negative(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

// E[((q + c Z)+)^2] for c > 0.
fn plus_sq_moment_pos(jump: &JumpSpec, q: f64, c: f64) -> f64 {
    debug_assert!(c > 0.0);
    match jump {
        JumpSpec::Exponential { gamma } => {
            let z0 = (-q / c).max(0.0);
            let r = q.max(0.0); // q + c z0
            (-gamma * z0).exp() * (r * r + 2.0 * c * r / gamma + 2.0 * c * c / (gamma * gamma))
        }
        JumpSpec::Deterministic { z } => {
            let d = (q + c * z).max(0.0);
            d * d
        }
        JumpSpec::Uniform { b } => {
            let lo = (-q / c).clamp(0.0, *b);
            let at = |z: f64| (q + c * z).powi(3) / (3.0 * c);
            (at(*b) - at(lo)) / b
        }
    }
}

// E[((q - b Z)+)^2] for b > 0.
fn plus_sq_moment_neg(jump: &JumpSpec, q: f64, b: f64) -> f64 {
    debug_assert!(b > 0.0);
    if q <= 0.0 {
        return 0.0;
    }
    match jump {
        JumpSpec::Exponential { gamma } => {
            let g = *gamma;
            q * q - 2.0 * b * q / g + 2.0 * b * b / (g * g) * (1.0 - (-g * q / b).exp())
        }
        JumpSpec::Deterministic { z } => {
            let d = (q - b * z).max(0.0);
            d * d
        }
        JumpSpec::Uniform { b: ub } => {
            let hi = (q / b).min(*ub);
            ((q).powi(3) - (q - b * hi).powi(3)) / (3.0 * b * ub)
        }
    }
}

/// Report for the truncated second-moment function `V_A`.
#[derive(Debug, Clone)]
pub struct VaReport {
    /// Exact generator value of `V_A` at the state.
    pub generator_value: f64,
    /// The drift bound right-hand side evaluated at the state.
    pub bound_rhs: f64,
    pub epsilon_a: f64,
    /// True when `eps_A`'s supremum was taken over a grid rather than in
    /// closed form.
    pub epsilon_a_grid_estimate: bool,
}

/// `eps_A = sup_{x >= 0} w(A - x) E[(Z - x)+^2] + w(A) E[Z^2]`; closed
/// form `(4/gamma^2) e^{-beta A}` for the exponential-exponential pair
/// with `beta <= gamma`, otherwise a flagged grid supremum.
pub fn epsilon_a(model: &Model, a_big: f64) -> (f64, bool) {
    match (&model.rate, &model.jump) {
        (RateSpec::Exp { beta }, JumpSpec::Exponential { gamma }) => {
            if *beta <= *gamma {
                let sup = 2.0 / (gamma * gamma) * (-beta * a_big).exp();
                (
                    sup + model.rate.eval(a_big) * model.jump.second_moment(),
                    false,
                )
            } else {
                (f64::INFINITY, false)
            }
        }
        _ => {
            let sup = (0..=2000)
                .map(|k| {
                    let x = k as f64 * 0.05;
                    model.rate.eval(a_big - x) * model.jump.partial_plus_sq(x)
                })
                .fold(f64::MIN, f64::max);
            (
                sup + model.rate.eval(a_big) * model.jump.second_moment(),
                true,
            )
        }
    }
}

/// Exact generator value of `V_A` and the drift bound at `state`.
pub fn lyapunov_drift_va(
    state: &SystemState,
    model: &Model,
    a_big: f64,
) -> Result<VaReport, DiagnosticsError> {
    require_centered(state)?;
    if !a_big.is_finite() || a_big <= 0.0 {
        return Err(DiagnosticsError::InvalidConfig(format!(
            "A must be positive, got {a_big}"
        )));
    }
    let n = state.n() as f64;
    let c_up = (n - 1.0) / n;
    let b_down = 1.0 / n;
    let jump = &model.jump;

    let mut term1 = 0.0;
    let mut alpha = 0.0;
    let mut term2_sum = 0.0;
    let mut excess = 0.0;
    for &y in &state.y {
        let q = y - a_big;
        let w = model.rate.eval(y);
        alpha += w;
        let up = plus_sq_moment_pos(jump, q, c_up);
        let down = plus_sq_moment_neg(jump, q, b_down);
        term1 += w * (up - down);
        let base = q.max(0.0) * q.max(0.0);
        term2_sum += down - base;
        excess += q.max(0.0);
    }
    alpha /= n;
    let generator_value = term1 / n + alpha * term2_sum;

    let (eps, grid) = epsilon_a(model, a_big);
    let varsigma = jump.mean();
    let vartheta = jump.second_moment();
    let bound_rhs = eps
        + 2.0 * model.rate.eval(a_big) * varsigma / n * excess
        + alpha * (3.0 * vartheta / n - 2.0 * varsigma / n * excess);

    Ok(VaReport {
        generator_value,
        bound_rhs,
        epsilon_a: eps,
        epsilon_a_grid_estimate: grid,
    })
}

/// One renewal overshoot sample.
#[derive(Debug, Clone)]
pub struct OvershootSample {
    pub level: f64,
    pub overshoot: f64,
    /// The jump distribution that generated the renewal sums.
    pub jump: JumpSpec,
}

/// Simulate the renewal sums `S_k` of iid jumps until the level is
/// exceeded; returns `S_{xi(l)+1} - l`.
pub fn overshoot_sample(jump: &JumpSpec, level: f64, rng: &mut Rng) -> OvershootSample {
    debug_assert!(level >= 0.0);
    let mut s = 0.0;
    loop {
        s += jump.sample(rng);
        if s > level {
            return OvershootSample {
                level,
                overshoot: s - level,
                jump: jump.clone(),
            };
        }
    }
}

/// `m_hat = (1/n) sum y_i+`, the mean positive part of the centered
/// configuration; equals `(1/2n) sum |y_i|` on centered states.
pub fn hat_m(state: &SystemState) -> f64 {
    state.y.iter().map(|&y| y.max(0.0)).sum::<f64>() / state.n() as f64
}

/// Controls for the long-run stationary sampler.
#[derive(Debug, Clone)]
pub struct StationaryConfig {
    pub burn_in_t: f64,
    pub thin_t: f64,
    pub num_samples: usize,
    pub seed: u64,
}

/// Centered configurations sampled along one long trajectory, plus the
/// half-versus-half pooled Wasserstein diagnostic (small when the chain
/// has genuinely settled).
#[derive(Debug, Clone)]
pub struct StationarySamples {
    pub states: Vec<SystemState>,
    pub diagnostic_w1: f64,
}

impl StationarySamples {
    pub fn measures(&self) -> Vec<EmpiricalMeasure> {
        self.states
            .iter()
            .map(|s| EmpiricalMeasure::new(s.y.clone()).unwrap())
            .collect()
    }

    /// Pooled centered coordinates of all samples.
    pub fn pooled(&self) -> EmpiricalMeasure {
        let mut all = Vec::new();
        for s in &self.states {
            all.extend_from_slice(&s.y);
        }
        EmpiricalMeasure::new(all).unwrap()
    }
}

/// Run the centered chain, discard `burn_in_t`, then record a snapshot
/// every `thin_t` time units. Tainted runs are rejected.
pub fn stationary_sample(
    model: &Model,
    n: usize,
    cfg: &StationaryConfig,
) -> Result<StationarySamples, DiagnosticsError> {
    if !cfg.thin_t.is_finite() || cfg.thin_t <= 0.0 {
        return Err(DiagnosticsError::InvalidConfig(
            "thin_t must be positive".into(),
        ));
    }
    if cfg.num_samples < 2 {
        return Err(DiagnosticsError::InvalidConfig(
            "need at least two stationary samples".into(),
        ));
    }
    if !cfg.burn_in_t.is_finite() || cfg.burn_in_t < 0.0 {
        return Err(DiagnosticsError::InvalidConfig(
            "burn_in_t must be nonnegative".into(),
        ));
    }
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.5).collect();
    let report = check_assumptions(model, &grid)
        .map_err(|e| DiagnosticsError::InvalidConfig(e.to_string()))?;
    if !report.a21_holds {
        return Err(DiagnosticsError::AssumptionFailed);
    }
    if let RateSpec::Tabulated { knots } = &model.rate {
        let w0 = knots[0].1;
        if knots.iter().all(|&(_, w)| w == w0) {
            return Err(DiagnosticsError::InvalidConfig(
                "stationary sampling needs a non-constant rate function".into(),
            ));
        }
    }

    let mut rng = Rng::new(cfg.seed);
    let sim_cfg = SimConfig::new(n, f64::MAX, 0);
    let mut state = crate::engine::init_state(n, &InitSpec::PointMass(0.0), &mut rng)
        .map_err(|e| DiagnosticsError::InvalidConfig(e.to_string()))?;
    let advance =
        |state: SystemState, until: f64, rng: &mut Rng| -> Result<SystemState, DiagnosticsError> {
            let run: RunResult = run_until(model, state, until, &sim_cfg, rng)
                .map_err(|e| DiagnosticsError::InvalidConfig(e.to_string()))?;
            if run.tainted() {
                return Err(DiagnosticsError::TaintedRun);
            }
            Ok(run.state)
        };
    state = advance(state, cfg.burn_in_t, &mut rng)?;
    let mut states = Vec::with_capacity(cfg.num_samples);
    for k in 0..cfg.num_samples {
        let target = cfg.burn_in_t + (k + 1) as f64 * cfg.thin_t;
        state = advance(state, target, &mut rng)?;
        let mut snap = state.clone();
        snap.recenter();
        states.push(snap);
    }

    // half-versus-half pooled diagnostic
    let half = states.len() / 2;
    let pool = |slice: &[SystemState]| {
        let mut atoms = Vec::new();
        for s in slice {
            atoms.extend_from_slice(&s.y);
        }
        EmpiricalMeasure::new(atoms).unwrap()
    };
    let first = pool(&states[..half]);
    let second = pool(&states[half..2 * half]);
    let diagnostic_w1 = crate::measure::wasserstein1(&first, &second);
    Ok(StationarySamples {
        states,
        diagnostic_w1,
    })
}

/// Velocity of the mean from a trajectory and from the stationary formula.
#[derive(Debug, Clone, Copy)]
pub struct VelocityEstimate {
    /// `m(T)/T` evaluated from the accumulated jump sizes.
    pub path_velocity: f64,
    /// `E[Z]` times the stationary average of the mean jump rate.
    pub formula_velocity: f64,
}

pub fn velocity_estimate(
    run: &RunResult,
    samples: &StationarySamples,
    model: &Model,
) -> Result<VelocityEstimate, DiagnosticsError> {
    let elapsed = run.state.t - run.initial.t;
    if !elapsed.is_finite() || elapsed <= 0.0 {
        return Err(DiagnosticsError::EmptyTrajectory);
    }
    let n = run.state.n() as f64;
    let path_velocity = run.jump_total / (n * elapsed);
    let mut mean_rate = 0.0;
    for st in &samples.states {
        mean_rate += st.y.iter().map(|&y| model.rate.eval(y)).sum::<f64>() / st.n() as f64;
    }
    mean_rate /= samples.states.len() as f64;
    Ok(VelocityEstimate {
        path_velocity,
        formula_velocity: model.jump.mean() * mean_rate,
    })
}

/// Covariance of a test function at two tagged coordinates across
/// independent stationary replicas (propagation-of-chaos decay).
#[derive(Debug, Clone, Copy)]
pub struct ChaosEstimate {
    pub covariance: f64,
    pub stderr: f64,
    pub replicas: usize,
}

pub fn chaos_estimate(
    states: &[SystemState],
    f: &crate::measure::LipschitzTestFn,
) -> Result<ChaosEstimate, DiagnosticsError> {
    if states.len() < 100 {
        return Err(DiagnosticsError::InsufficientReplicas {
            got: states.len(),
            need: 100,
        });
    }
    let u: Vec<f64> = states.iter().map(|s| f.eval(s.y[0])).collect();
    let v: Vec<f64> = states.iter().map(|s| f.eval(s.y[1])).collect();
    let (mu, mv) = (stats::mean(&u), stats::mean(&v));
    let prods: Vec<f64> = u
        .iter()
        .zip(v.iter())
        .map(|(&a, &b)| (a - mu) * (b - mv))
        .collect();
    let r = prods.len() as f64;
    let covariance = prods.iter().sum::<f64>() / (r - 1.0);
    let stderr = stats::stderr(&prods);
    Ok(ChaosEstimate {
        covariance,
        stderr,
        replicas: states.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::LipschitzTestFn;
    use crate::numeric::integrate;

    fn state_of(y: Vec<f64>) -> SystemState {
        SystemState {
            y,
            m: 0.0,
            t: 0.0,
            overflow: false,
        }
    }

    fn random_centered_state(n: usize, scale: f64, rng: &mut Rng) -> SystemState {
        let mut y: Vec<f64> = (0..n).map(|_| rng.normal() * scale).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        for v in &mut y {
            *v -= mean;
        }
        state_of(y)
    }

    #[test]
    fn drift_closed_form_symmetric_pair() {
        // n=2, y=(0,0), exp-exp(1,1): LV = (1/4)*2*2 = 1
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let lv = lyapunov_drift_closed_form(&state_of(vec![0.0, 0.0]), &model);
        assert!((lv - 1.0).abs() < 1e-14);
    }

    #[test]
    fn drift_negative_for_spread_pairs() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        for c in [1.0f64, 2.0, 4.0] {
            let lv = lyapunov_drift_closed_form(&state_of(vec![-c, c]), &model);
            let direct = 0.5 * (c.exp() + (-c).exp()) - c * (c.exp() - (-c).exp());
            assert!((lv - direct).abs() < 1e-10);
            assert!(lv < 0.0, "c={c}: LV={lv}");
        }
    }

    #[test]
    fn drift_monte_carlo_matches_closed_form() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let mut rng = Rng::new(5150);
        for k in 0..4 {
            let state = random_centered_state(6, 0.7, &mut rng);
            let rep = lyapunov_drift(&state, &model, 30_000, &mut rng).unwrap();
            assert!(
                (rep.lv_monte_carlo - rep.lv_closed_form).abs() <= 3.0 * rep.lv_mc_stderr,
                "state {k}: mc {} vs closed {} (se {})",
                rep.lv_monte_carlo,
                rep.lv_closed_form,
                rep.lv_mc_stderr
            );
        }
    }

    #[test]
    fn drift_rejects_uncentered_state() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let state = state_of(vec![1.0, 1.0]);
        let mut rng = Rng::new(1);
        assert!(matches!(
            lyapunov_drift(&state, &model, 10, &mut rng),
            Err(DiagnosticsError::NotCentered { .. })
        ));
    }

    #[test]
    fn negativity_radius_certifies_sign() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let n = 16;
        let radius = locate_negativity_radius(&model, n, &mut Rng::new(7));
        assert!(radius.is_finite() && radius > 0.0);
        let mut rng = Rng::new(8);
        for _ in 0..1000 {
            let mut st = random_centered_state(n, 1.0, &mut rng);
            let mean_abs = st.y.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
            let target = 2.0 * radius * (1.0 + 4.0 * rng.uniform());
            for v in &mut st.y {
                *v *= target / mean_abs;
            }
            let lv = lyapunov_drift_closed_form(&st, &model);
            assert!(lv < 0.0, "LV = {lv} at scale {target} (radius {radius})");
        }
    }

    #[test]
    fn plus_sq_moments_match_quadrature() {
        // oracle: direct integration against each jump density
        type DensityFn = Box<dyn Fn(f64) -> f64>;
        let cases: Vec<(JumpSpec, DensityFn)> = vec![
            (
                JumpSpec::exponential(1.4).unwrap(),
                Box::new(|z: f64| 1.4 * (-1.4 * z).exp()),
            ),
            (JumpSpec::uniform(2.0).unwrap(), Box::new(|_z: f64| 0.5)),
        ];
        for (jump, dens) in &cases {
            let upper = match jump {
                JumpSpec::Uniform { b } => *b,
                _ => 40.0,
            };
            for &q in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                for &c in &[0.3, 0.9] {
                    let exact = plus_sq_moment_pos(jump, q, c);
                    let quad = integrate(
                        &|z: f64| {
                            let v = (q + c * z).max(0.0);
                            v * v * dens(z)
                        },
                        0.0,
                        upper,
                        1e-11,
                    );
                    assert!(
                        (exact - quad).abs() < 1e-8,
                        "{jump:?} pos q={q} c={c}: {exact} vs {quad}"
                    );
                    let exact = plus_sq_moment_neg(jump, q, c);
                    let quad = integrate(
                        &|z: f64| {
                            let v = (q - c * z).max(0.0);
                            v * v * dens(z)
                        },
                        0.0,
                        upper,
                        1e-11,
                    );
                    assert!(
                        (exact - quad).abs() < 1e-8,
                        "{jump:?} neg q={q} b={c}: {exact} vs {quad}"
                    );
                }
            }
        }
    }

    #[test]
    fn va_generator_zero_when_nothing_activates() {
        // all particles far below A, deterministic jumps smaller than the gap
        let model = Model::new(
            RateSpec::exp_rate(1.0).unwrap(),
            JumpSpec::deterministic(0.5).unwrap(),
        )
        .unwrap();
        let state = state_of(vec![-1.0, 0.0, 1.0]);
        let rep = lyapunov_drift_va(&state, &model, 5.0).unwrap();
        assert_eq!(rep.generator_value, 0.0);
    }

    #[test]
    fn va_generator_below_bound_on_random_states() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let mut rng = Rng::new(606);
        for &a_big in &[2.0, 5.0] {
            for &n in &[4usize, 32] {
                for _ in 0..250 {
                    let st = random_centered_state(n, 2.0, &mut rng);
                    let rep = lyapunov_drift_va(&st, &model, a_big).unwrap();
                    assert!(
                        rep.generator_value <= rep.bound_rhs + 1e-10,
                        "A={a_big} n={n}: {} > {}",
                        rep.generator_value,
                        rep.bound_rhs
                    );
                }
            }
        }
    }

    #[test]
    fn va_generator_matches_monte_carlo() {
        // one-step MC oracle for the exact generator value
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let a_big = 1.0;
        let state = state_of(vec![-0.8, 0.3, 0.5, 0.0]);
        let rep = lyapunov_drift_va(&state, &model, a_big).unwrap();
        let n = 4;
        let va = |st: &SystemState| {
            st.y.iter()
                .map(|&y| (y - a_big).max(0.0) * (y - a_big).max(0.0))
                .sum::<f64>()
                / n as f64
        };
        let v0 = va(&state);
        let total: f64 = state.y.iter().map(|&y| model.rate.eval(y)).sum();
        let h = 1e-3 / total;
        let cfg = SimConfig::new(n, h, 0);
        let mut rng = Rng::new(321);
        let reps = 200_000;
        let mut samples = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut st = state.clone();
            st.t = 0.0;
            let run = run_until(&model, st, h, &cfg, &mut rng).unwrap();
            samples.push((va(&run.state) - v0) / h);
        }
        let mc = stats::mean(&samples);
        let se = stats::stderr(&samples);
        assert!(
            (mc - rep.generator_value).abs() <= 3.5 * se,
            "mc {mc} vs exact {} (se {se})",
            rep.generator_value
        );
    }

    #[test]
    fn epsilon_a_closed_form_exp_exp() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        for &a in &[1.0, 2.0, 5.0, 10.0] {
            let (eps, grid) = epsilon_a(&model, a);
            assert!(!grid);
            assert!((eps - 4.0 * (-a).exp()).abs() < 1e-12, "A={a}: eps {eps}");
        }
    }

    #[test]
    fn overshoot_exponential_memoryless() {
        let jump = JumpSpec::exponential(1.0).unwrap();
        let mut rng = Rng::new(2001);
        for &level in &[0.0, 1.0, 7.0, 25.0] {
            let sample: Vec<f64> = (0..30_000)
                .map(|_| overshoot_sample(&jump, level, &mut rng).overshoot)
                .collect();
            let d =
                crate::stats::ks_statistic(
                    &sample,
                    |x: f64| {
                        if x <= 0.0 {
                            0.0
                        } else {
                            1.0 - (-x).exp()
                        }
                    },
                );
            assert!(d < 0.012, "level {level}: KS {d}");
        }
    }

    #[test]
    fn overshoot_deterministic_exact() {
        let jump = JumpSpec::deterministic(2.0).unwrap();
        let mut rng = Rng::new(3);
        let s = overshoot_sample(&jump, 5.0, &mut rng);
        assert!((s.overshoot - 1.0).abs() < 1e-12); // S_3 = 6, level 5
        let s = overshoot_sample(&jump, 0.0, &mut rng);
        assert!((s.overshoot - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hat_m_values_and_identity() {
        assert_eq!(hat_m(&state_of(vec![0.0, 0.0, 0.0])), 0.0);
        assert_eq!(hat_m(&state_of(vec![-1.0, 1.0])), 0.5);
        let mut rng = Rng::new(4);
        for _ in 0..1000 {
            let st = random_centered_state(9, 1.3, &mut rng);
            let lhs = hat_m(&st);
            let rhs = st.y.iter().map(|v| v.abs()).sum::<f64>() / (2.0 * 9.0);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn hat_m_growth_bound_exceedance_non_increasing() {
        // exceedance of m_hat(0) + (c_w + E[Z] w(0)) T + R over [0, T],
        // frequencies non-increasing in R
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let c_w = 2.0;
        let slope = c_w + model.jump.mean() * model.rate.eval(0.0);
        let t_end = 1.0;
        let mut freqs = Vec::new();
        for &r_margin in &[5.0, 10.0, 20.0] {
            let mut exceed = 0;
            for rep in 0..200u64 {
                let cfg = SimConfig::new(16, t_end, crate::rng::replica_seed(8080, rep));
                let run = crate::engine::simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
                // m_hat is monotone only through jumps; check the end state
                // and the recorded snapshots if any
                if hat_m(&run.state) >= slope * t_end + r_margin {
                    exceed += 1;
                }
            }
            freqs.push(exceed as f64 / 200.0);
        }
        assert!(freqs[0] >= freqs[1] && freqs[1] >= freqs[2], "{freqs:?}");
    }

    #[test]
    fn stationary_sampler_validates_config() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let bad = StationaryConfig {
            burn_in_t: 1.0,
            thin_t: 0.0,
            num_samples: 10,
            seed: 1,
        };
        assert!(matches!(
            stationary_sample(&model, 8, &bad),
            Err(DiagnosticsError::InvalidConfig(_))
        ));
        let ill = Model::exp_exp(2.0, 1.0).unwrap();
        let ok = StationaryConfig {
            burn_in_t: 1.0,
            thin_t: 1.0,
            num_samples: 4,
            seed: 1,
        };
        assert!(matches!(
            stationary_sample(&ill, 8, &ok),
            Err(DiagnosticsError::AssumptionFailed)
        ));
    }

    #[test]
    fn stationary_pool_matches_fixed_point_at_scale() {
        // one long n = 2000 run: the pooled stationary configuration is
        // close to nu* in sup-CDF (within 3x an iid baseline of the same
        // pooled size), the stationary-formula velocity lands within 3%
        // of the closed-form wave speed, and the per-particle variance of
        // a soft-clipped coordinate matches quadrature within 10%
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let n = 2000;
        let samples = stationary_sample(
            &model,
            n,
            &StationaryConfig {
                burn_in_t: 30.0,
                thin_t: 1.0,
                num_samples: 40,
                seed: 2024,
            },
        )
        .unwrap();
        let fp = crate::meanfield::GumbelFixedPoint::new(1.0, 1.0).unwrap();
        let pooled = samples.pooled();
        let d_pool = crate::stats::ks_statistic(pooled.atoms(), |x| fp.cdf(x));
        let mut rng = Rng::new(777);
        let iid: Vec<f64> = (0..pooled.len()).map(|_| fp.sample(&mut rng)).collect();
        let d_iid = crate::stats::ks_statistic(&iid, |x| fp.cdf(x));
        assert!(
            d_pool <= 3.0 * d_iid,
            "pooled sup-CDF {d_pool} vs iid baseline {d_iid}"
        );

        // velocity formula against the closed-form speed
        let mut mean_rate = 0.0;
        for st in &samples.states {
            mean_rate += st.y.iter().map(|&y| model.rate.eval(y)).sum::<f64>() / n as f64;
        }
        mean_rate /= samples.states.len() as f64;
        let formula = model.jump.mean() * mean_rate;
        let target = fp.wave_speed();
        assert!(
            (formula - target).abs() / target < 0.03,
            "formula velocity {formula} vs {target}"
        );

        // variance of f(Y) under the stationary pool vs quadrature
        let f = LipschitzTestFn::soft_clip(5.0).unwrap();
        let mean_f = pooled.integrate(|x| f.eval(x));
        let var_pool = pooled.integrate(|x| {
            let v = f.eval(x) - mean_f;
            v * v
        });
        let m1 = fp.integrate_against(|x| f.eval(x), 1e-10);
        let var_quad = fp.integrate_against(|x| (f.eval(x) - m1) * (f.eval(x) - m1), 1e-10);
        assert!(
            (var_pool - var_quad).abs() / var_quad < 0.10,
            "pooled var {var_pool} vs quadrature {var_quad}"
        );
    }

    #[test]
    fn stationary_burn_in_improves_diagnostic() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let n = 64;
        let burned = stationary_sample(
            &model,
            n,
            &StationaryConfig {
                burn_in_t: 30.0,
                thin_t: 1.0,
                num_samples: 40,
                seed: 42,
            },
        )
        .unwrap();
        let raw = stationary_sample(
            &model,
            n,
            &StationaryConfig {
                burn_in_t: 0.0,
                thin_t: 1.0,
                num_samples: 40,
                seed: 42,
            },
        )
        .unwrap();
        assert!(
            raw.diagnostic_w1 > burned.diagnostic_w1,
            "unburned {} vs burned {}",
            raw.diagnostic_w1,
            burned.diagnostic_w1
        );
    }

    #[test]
    fn velocity_bookkeeping_and_formula() {
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let n = 50;
        let t_end = 500.0;
        let cfg = SimConfig::new(n, t_end, 10);
        let run = crate::engine::simulate(
            &model,
            &InitSpec::GumbelFixedPoint {
                beta: 1.0,
                gamma: 1.0,
            },
            &cfg,
        )
        .unwrap();
        let samples = stationary_sample(
            &model,
            n,
            &StationaryConfig {
                burn_in_t: 30.0,
                thin_t: 1.0,
                num_samples: 100,
                seed: 77,
            },
        )
        .unwrap();
        let v = velocity_estimate(&run, &samples, &model).unwrap();
        // bookkeeping: path velocity equals the mean increment rate
        let direct = (run.state.m - run.initial.m) / t_end;
        assert!(
            (v.path_velocity - direct).abs() <= 1e-9 * direct.abs(),
            "path {} vs direct {direct}",
            v.path_velocity
        );
        let rel = (v.path_velocity - v.formula_velocity).abs() / v.formula_velocity;
        assert!(
            rel < 0.05,
            "path {} formula {}",
            v.path_velocity,
            v.formula_velocity
        );
    }

    #[test]
    fn chaos_zero_for_synthetic_iid() {
        let fp = crate::meanfield::GumbelFixedPoint::new(1.0, 1.0).unwrap();
        let mut rng = Rng::new(31337);
        let states: Vec<SystemState> = (0..400)
            .map(|_| {
                let y: Vec<f64> = (0..16).map(|_| fp.sample(&mut rng)).collect();
                SystemState {
                    y,
                    m: 0.0,
                    t: 0.0,
                    overflow: false,
                }
            })
            .collect();
        let f = LipschitzTestFn::soft_clip(5.0).unwrap();
        let est = chaos_estimate(&states, &f).unwrap();
        assert!(
            est.covariance.abs() <= 4.0 * est.stderr,
            "cov {} se {}",
            est.covariance,
            est.stderr
        );
        assert!(chaos_estimate(&states[..50], &f).is_err());
    }

    #[test]
    fn chaos_covariance_decays_with_n() {
        // the tagged-pair covariance under the stationary centered law is
        // O(1/n) (centering alone forces -Var/(n-1)); the estimator noise
        // is Var(f)/sqrt(R), so the n-gap and replica count must be large
        // enough to separate the two levels
        let model = Model::exp_exp(1.0, 1.0).unwrap();
        let f = LipschitzTestFn::soft_clip(5.0).unwrap();
        let reps = 4000usize;
        let mut covs = Vec::new();
        for &n in &[12usize, 192] {
            let mut states = Vec::with_capacity(reps);
            for r in 0..reps {
                let cfg = SimConfig::new(n, 5.0, crate::rng::replica_seed(515, r as u64));
                let run = crate::engine::simulate(
                    &model,
                    &InitSpec::GumbelFixedPoint {
                        beta: 1.0,
                        gamma: 1.0,
                    },
                    &cfg,
                )
                .unwrap();
                states.push(run.state);
            }
            covs.push(chaos_estimate(&states, &f).unwrap().covariance.abs());
        }
        assert!(
            covs[1] < covs[0],
            "chaos decay failed: |cov(192)| = {} vs |cov(12)| = {}",
            covs[1],
            covs[0]
        );
    }
}
