//! Closed-form machinery for the exponential-rate / exponential-jump case:
//! the Gumbel-type fixed point of the centered mean-field equation, the
//! traveling-wave solution it generates, the auxiliary time-dependent CDF
//! driven by an injected rate input, and the tagged nonlinear particle.
//!
//! With `w(x) = e^{-beta x}` and `Exp(gamma)` jumps (`beta <= gamma`), the
//! fixed point is
//!
//! ```text
//! nu*(dx) = K exp(-gamma (x - s) - e^{-beta (x - s)}) dx,
//! K = gamma / Gamma(1 + gamma/beta),   s = digamma(gamma/beta) / beta,
//! ```
//!
//! whose location `s` is pinned by requiring mean zero. Its CDF reduces to
//! a regularized upper incomplete gamma, `Q(gamma/beta, e^{-beta (x-s)})`,
//! which also gives an exact quantile by monotone root finding. The wave
//! moves at speed `e^{-digamma(gamma/beta)} / beta`, which equals
//! `E[Z] * <w, nu*>`.

use crate::model::{Model, RateSpec, EXP_ARG_CAP};
use crate::numeric::{digamma, gamma_q, integrate, ln_gamma};
use crate::rng::Rng;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum MeanFieldError {
    /// Requires 0 < beta <= gamma.
    BetaGammaOrder {
        beta: f64,
        gamma: f64,
    },
    InvalidParameter(String),
    NegativeTheta(f64),
    HorizonTooSmall {
        t: f64,
        h: f64,
    },
}

impl fmt::Display for MeanFieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanFieldError::BetaGammaOrder { beta, gamma } => write!(
                f,
                "fixed point requires 0 < beta <= gamma, got beta={beta}, gamma={gamma}"
            ),
            MeanFieldError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            MeanFieldError::NegativeTheta(v) => {
                write!(f, "rate input theta must be nonnegative, got {v}")
            }
            MeanFieldError::HorizonTooSmall { t, h } => {
                write!(f, "need t > h > 0 for differencing, got t={t}, h={h}")
            }
        }
    }
}

impl std::error::Error for MeanFieldError {}

/// The stationary (centered) law of the exponential-exponential system.
#[derive(Debug, Clone)]
pub struct GumbelFixedPoint {
    pub beta: f64,
    pub gamma: f64,
    /// Location: `digamma(gamma/beta) / beta`; forces mean zero.
    pub location: f64,
    /// Normalizer `gamma / Gamma(1 + gamma/beta)`.
    pub normalizer: f64,
    /// Shape `gamma / beta` of the incomplete-gamma CDF form.
    shape: f64,
}

impl GumbelFixedPoint {
    pub fn new(beta: f64, gamma: f64) -> Result<Self, MeanFieldError> {
        if !(beta.is_finite() && gamma.is_finite() && beta > 0.0 && beta <= gamma) {
            return Err(MeanFieldError::BetaGammaOrder { beta, gamma });
        }
        let shape = gamma / beta;
        Ok(Self {
            beta,
            gamma,
            location: digamma(shape) / beta,
            normalizer: gamma / ln_gamma(1.0 + shape).exp(),
            shape,
        })
    }

    /// Density of `nu*`.
    pub fn density(&self, x: f64) -> f64 {
        let z = x - self.location;
        let inner_arg = -self.beta * z;
        if inner_arg > EXP_ARG_CAP {
            return 0.0; // double-exponential left tail below representable range
        }
        let expo = -self.gamma * z - inner_arg.exp();
        if expo < -EXP_ARG_CAP {
            return 0.0;
        }
        self.normalizer * expo.exp()
    }

    /// CDF of `nu*`: `Q(gamma/beta, e^{-beta (x - s)})`.
    pub fn cdf(&self, x: f64) -> f64 {
        let arg = -self.beta * (x - self.location);
        if arg > EXP_ARG_CAP {
            return 0.0;
        }
        gamma_q(self.shape, arg.exp())
    }

    /// Quantile: exact in closed form when `beta == gamma` (pure Gumbel),
    /// otherwise by bracketed Newton/bisection on the CDF to 1e-12.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
        if self.beta == self.gamma {
            return self.location - (-p.ln()).ln() / self.beta;
        }
        // Gumbel-style starting guess, then expand to a sign-changing bracket.
        let guess = self.location - (-p.ln()).ln() / self.beta;
        let mut lo = guess;
        let mut hi = guess;
        let mut width = 1.0 / self.beta;
        while self.cdf(lo) > p {
            lo -= width;
            width *= 2.0;
        }
        width = 1.0 / self.gamma;
        while self.cdf(hi) < p {
            hi += width;
            width *= 2.0;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf(x) - p;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.density(x);
            let newton = if d > 0.0 { x - f / d } else { f64::NAN };
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-13 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }

    /// Exact inverse-CDF sampler.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        self.quantile(rng.uniform_pos())
    }

    /// `<w, nu*> = (gamma/beta) e^{-digamma(gamma/beta)}`, the stationary
    /// per-particle jump rate.
    pub fn w_integral(&self) -> f64 {
        self.shape * (-digamma(self.shape)).exp()
    }

    /// Asymptotic speed of the mean: `E[Z] * <w, nu*>`.
    pub fn wave_speed(&self) -> f64 {
        (-digamma(self.shape)).exp() / self.beta
    }

    /// Quadrature of `f` against `nu*` (adaptive, absolute tolerance).
    pub fn integrate_against<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> f64 {
        let lo = self.location - 8.0 / self.beta;
        let hi = self.location + 60.0 / self.gamma;
        integrate(&|x| f(x) * self.density(x), lo, hi, tol)
    }
}

/// The traveling-wave solution launched from the fixed point: the shape
/// `nu*` translated at constant speed.
#[derive(Debug, Clone)]
pub struct TravelingWave {
    pub fixed_point: GumbelFixedPoint,
    pub speed: f64,
}

impl TravelingWave {
    pub fn new(fixed_point: GumbelFixedPoint) -> Self {
        let speed = fixed_point.wave_speed();
        Self { fixed_point, speed }
    }

    /// Mean position at time `t` (zero at `t = 0`).
    pub fn mean_at(&self, t: f64) -> f64 {
        self.speed * t
    }

    /// Wave offset: mean plus the fixed-point location.
    pub fn offset_at(&self, t: f64) -> f64 {
        self.speed * t + self.fixed_point.location
    }

    /// Density of the wave at time `t`.
    pub fn density(&self, t: f64, x: f64) -> f64 {
        self.fixed_point.density(x - self.mean_at(t))
    }

    /// CDF of the wave at time `t`.
    pub fn cdf(&self, t: f64, x: f64) -> f64 {
        self.fixed_point.cdf(x - self.mean_at(t))
    }
}

/// Evaluate the traveling-wave density at `(t, x)`.
pub fn traveling_wave_eval(tw: &TravelingWave, t: f64, x: f64) -> f64 {
    debug_assert!(t >= 0.0);
    tw.density(t, x)
}

/// Piecewise-constant nonnegative rate input `theta(s)`.
#[derive(Debug, Clone)]
pub struct ThetaPath {
    /// Segment starts; first entry is 0. Value `values[i]` applies on
    /// `[times[i], times[i+1])`, the last one indefinitely.
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ThetaPath {
    pub fn constant(theta: f64) -> Result<Self, MeanFieldError> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(MeanFieldError::NegativeTheta(theta));
        }
        Ok(Self {
            times: vec![0.0],
            values: vec![theta],
        })
    }

    /// Build from samples `(t_i, theta_i)`; `t_0` must be 0 and times
    /// strictly increasing.
    pub fn piecewise(samples: &[(f64, f64)]) -> Result<Self, MeanFieldError> {
        if samples.is_empty() || samples[0].0 != 0.0 {
            return Err(MeanFieldError::InvalidParameter(
                "theta path must start at time 0".into(),
            ));
        }
        let mut times = Vec::with_capacity(samples.len());
        let mut values = Vec::with_capacity(samples.len());
        for &(t, v) in samples {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MeanFieldError::NegativeTheta(v));
            }
            if let Some(&last) = times.last() {
                if t <= last {
                    return Err(MeanFieldError::InvalidParameter(
                        "theta sample times must be strictly increasing".into(),
                    ));
                }
            }
            times.push(t);
            values.push(v);
        }
        Ok(Self { times, values })
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&bt| bt <= t);
        self.values[idx.saturating_sub(1).min(self.values.len() - 1)]
    }

    /// Exact cumulative `Theta(t) = int_0^t theta(s) ds`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.times.len() {
            let seg_start = self.times[i];
            if t <= seg_start {
                break;
            }
            let seg_end = if i + 1 < self.times.len() {
                self.times[i + 1].min(t)
            } else {
                t
            };
            acc += self.values[i] * (seg_end - seg_start);
        }
        acc
    }

    /// True when `t` lies within `h` of a segment boundary (other than 0).
    pub fn near_breakpoint(&self, t: f64, h: f64) -> bool {
        self.times.iter().skip(1).any(|&bt| (t - bt).abs() <= h)
    }

    /// Segment start times (the first entry is 0).
    pub fn breakpoints(&self) -> &[f64] {
        &self.times
    }
}

/// The auxiliary solution driven by a fixed rate input: a translate family
/// `F*(t, x) = Psi(x + alpha(t))` of the location-zero fixed-point CDF,
/// where `alpha` solves `alpha'(t) = theta(t)/gamma - e^{beta alpha}/beta`
/// in closed form via exact per-segment integration.
#[derive(Debug, Clone)]
pub struct AuxSolution {
    pub beta: f64,
    pub gamma: f64,
    pub theta: ThetaPath,
    shape: f64,
    normalizer: f64,
    /// Per-breakpoint prefix of `int_0^t exp(beta/gamma Theta(s)) ds`.
    inner_prefix: Vec<f64>,
    /// Per-breakpoint prefix of `Theta`.
    theta_prefix: Vec<f64>,
}

impl AuxSolution {
    pub fn new(theta: ThetaPath, beta: f64, gamma: f64) -> Result<Self, MeanFieldError> {
        if !(beta.is_finite() && gamma.is_finite() && beta > 0.0 && gamma > 0.0) {
            return Err(MeanFieldError::InvalidParameter(format!(
                "need positive beta, gamma; got {beta}, {gamma}"
            )));
        }
        let shape = gamma / beta;
        let normalizer = gamma / ln_gamma(1.0 + shape).exp();
        let r = beta / gamma;
        let k = theta.times.len();
        let mut inner_prefix = vec![0.0; k];
        let mut theta_prefix = vec![0.0; k];
        for i in 1..k {
            let h = theta.times[i] - theta.times[i - 1];
            let th = theta.values[i - 1];
            theta_prefix[i] = theta_prefix[i - 1] + th * h;
            inner_prefix[i] =
                inner_prefix[i - 1] + segment_exp_integral(r, theta_prefix[i - 1], th, h);
        }
        Ok(Self {
            beta,
            gamma,
            theta,
            shape,
            normalizer,
            inner_prefix,
            theta_prefix,
        })
    }

    /// `Theta(t)` exactly.
    pub fn big_theta(&self, t: f64) -> f64 {
        self.theta.cumulative(t)
    }

    /// `int_0^t exp(beta/gamma Theta(s)) ds` exactly per segment.
    fn inner_integral(&self, t: f64) -> f64 {
        let r = self.beta / self.gamma;
        let idx = self.theta.times.partition_point(|&bt| bt <= t);
        let i = idx.saturating_sub(1);
        let h = t - self.theta.times[i];
        self.inner_prefix[i]
            + segment_exp_integral(r, self.theta_prefix[i], self.theta.values[i], h)
    }

    /// The translation `alpha(t)`.
    pub fn alpha(&self, t: f64) -> f64 {
        self.big_theta(t) / self.gamma - (self.inner_integral(t)).ln_1p() / self.beta
    }

    /// `zeta(x, t) = x + alpha(t)`.
    pub fn zeta(&self, x: f64, t: f64) -> f64 {
        x + self.alpha(t)
    }

    /// Location-zero fixed-point CDF `Psi(z)`.
    pub fn psi_cdf(&self, z: f64) -> f64 {
        let arg = -self.beta * z;
        if arg > EXP_ARG_CAP {
            return 0.0;
        }
        gamma_q(self.shape, arg.exp())
    }

    /// Location-zero fixed-point density.
    pub fn psi_pdf(&self, z: f64) -> f64 {
        let inner = -self.beta * z;
        if inner > EXP_ARG_CAP {
            return 0.0;
        }
        let expo = -self.gamma * z - inner.exp();
        if expo < -EXP_ARG_CAP {
            return 0.0;
        }
        self.normalizer * expo.exp()
    }

    /// The auxiliary CDF `F*(t, x)`.
    pub fn cdf(&self, t: f64, x: f64) -> f64 {
        self.psi_cdf(self.zeta(x, t))
    }
}

/// Exact `int_0^h exp(r (theta0 + th s)) ds` with `theta0` the cumulative
/// at the segment start.
fn segment_exp_integral(r: f64, theta0: f64, th: f64, h: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let front = (r * theta0).exp();
    if th == 0.0 {
        front * h
    } else {
        front * (r * th * h).exp_m1() / (r * th)
    }
}

/// Construct the auxiliary solution (convenience wrapper over
/// [`AuxSolution::new`]).
pub fn aux_solution(
    theta_path: ThetaPath,
    beta: f64,
    gamma: f64,
) -> Result<AuxSolution, MeanFieldError> {
    AuxSolution::new(theta_path, beta, gamma)
}

/// Finite-difference residual of the driven transport equation
///
/// ```text
/// dF/dt + e^{-gamma x} int_{-inf}^x e^{gamma y} w(y) F(t, dy)
///       - theta(t)/gamma * dF/dx  =  0
/// ```
///
/// at `(t, x)` with step `h`. Time differences fall back to one-sided
/// stencils (flagged) when `t` sits within `h` of a theta breakpoint. The
/// inner integral is evaluated by adaptive quadrature, so the returned
/// value is O(h^2) plus quadrature error when the solution is exact.
pub struct PdeResidual {
    pub value: f64,
    pub one_sided: bool,
}

pub fn pde_residual(
    aux: &AuxSolution,
    t: f64,
    x: f64,
    h: f64,
) -> Result<PdeResidual, MeanFieldError> {
    if !(h > 0.0 && t > h) {
        return Err(MeanFieldError::HorizonTooSmall { t, h });
    }
    let one_sided = aux.theta.near_breakpoint(t, h);
    let df_dt = if !one_sided {
        (aux.cdf(t + h, x) - aux.cdf(t - h, x)) / (2.0 * h)
    } else {
        // second-order forward stencil away from the breakpoint behind us
        (-3.0 * aux.cdf(t, x) + 4.0 * aux.cdf(t + h, x) - aux.cdf(t + 2.0 * h, x)) / (2.0 * h)
    };
    let df_dx = (aux.cdf(t, x + h) - aux.cdf(t, x - h)) / (2.0 * h);

    // e^{-gamma x} int_{-inf}^x e^{gamma y} w(y) F*(t, dy); the prefactor
    // is folded into the integrand for stability, and the lower limit is
    // cut where the double-exponential tail of the density underflows.
    let alpha = aux.alpha(t);
    let (beta, gamma) = (aux.beta, aux.gamma);
    let y_lo = (-alpha - 8.0 / beta).min(x);
    let inner = if x <= y_lo {
        0.0
    } else {
        integrate(
            &|y: f64| (-gamma * (x - y) - beta * y).exp() * aux.psi_pdf(y + alpha),
            y_lo,
            x,
            1e-10,
        )
    };

    let theta_t = aux.theta.value_at(t);
    Ok(PdeResidual {
        value: df_dt + inner - theta_t / gamma * df_dx,
        one_sided,
    })
}

/// One trajectory of the tagged nonlinear particle.
#[derive(Debug, Clone)]
pub struct TaggedTrajectory {
    /// Jump times, starting with 0.
    pub times: Vec<f64>,
    /// Position after each time in `times`.
    pub positions: Vec<f64>,
    pub overflow: bool,
}

impl TaggedTrajectory {
    /// Position at time `t` (piecewise constant, right-continuous).
    pub fn position_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        self.positions[idx.saturating_sub(1)]
    }

    pub fn jump_count(&self) -> usize {
        self.times.len() - 1
    }
}

/// Simulate the tagged particle with jump rate `w(Y(t) - m(t))` by
/// thinning. The mean is non-decreasing and `w` non-increasing, so on any
/// window `[t, tau]` the rate is bounded by `w(Y - m(tau))`; candidate
/// events at the bound rate accepted with probability `w(Y - m(s))/bound`
/// reproduce the law exactly. Windows are sized so the mean moves by at
/// most `1/2` rate-log units per window, keeping the acceptance rate
/// above `e^{-1/2}` regardless of the horizon.
pub fn tagged_particle<F: Fn(f64) -> f64>(
    m_path: F,
    y0: f64,
    model: &Model,
    t_end: f64,
    rng: &mut Rng,
) -> Result<TaggedTrajectory, MeanFieldError> {
    if t_end.is_nan() || t_end < 0.0 {
        return Err(MeanFieldError::InvalidParameter(format!(
            "horizon must be nonnegative, got {t_end}"
        )));
    }
    // Mean increase per window in log-rate units: L(x) bounds |dw/dx|
    // locally, but for window sizing only the exponential case matters;
    // a flat cap of 0.5 natural-log units works for every variant since
    // general rates just make the bound slightly conservative.
    let log_step = match &model.rate {
        crate::model::RateSpec::Exp { beta } => 0.5 / beta,
        crate::model::RateSpec::Tabulated { .. } => f64::INFINITY,
    };

    // smallest tau in (t, t_end] with m(tau) - m(t) ~ log_step, by
    // doubling plus bisection on the continuous non-decreasing mean
    let window_end = |t: f64| -> f64 {
        if log_step.is_infinite() {
            return t_end;
        }
        let m_t = m_path(t);
        if m_path(t_end) - m_t <= log_step {
            return t_end;
        }
        let mut lo = t;
        let mut hi = (t + 1.0).min(t_end);
        while m_path(hi) - m_t < log_step {
            lo = hi;
            hi = (t + 2.0 * (hi - t)).min(t_end);
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if m_path(mid) - m_t < log_step {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };

    let mut y = y0;
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut positions = vec![y0];
    let mut overflow = false;

    let mut tau = window_end(0.0);
    let (mut bound, of) = model.rate.eval_checked(y - m_path(tau));
    overflow |= of;
    while t < t_end {
        let dt = rng.exponential(bound);
        if t + dt > tau {
            // no event in this window; move to the next one
            t = tau;
            if t >= t_end {
                break;
            }
            tau = window_end(t);
            let (b, o) = model.rate.eval_checked(y - m_path(tau));
            bound = b;
            overflow |= o;
            continue;
        }
        t += dt;
        let (rate_now, of_now) = model.rate.eval_checked(y - m_path(t));
        overflow |= of_now;
        let accept_p = rate_now / bound;
        debug_assert!(
            accept_p <= 1.0 + 1e-12,
            "thinning bound violated: {accept_p}"
        );
        if rng.uniform() < accept_p {
            y += model.jump.sample(rng);
            times.push(t);
            positions.push(y);
            let (b, o) = model.rate.eval_checked(y - m_path(tau));
            bound = b;
            overflow |= o;
        }
    }
    Ok(TaggedTrajectory {
        times,
        positions,
        overflow,
    })
}

/// Empirical check of the integrability condition needed by the tagged
/// particle construction: the sample mean of `L(x - a)` over the provided
/// initial positions.
pub fn integrability_estimate(sample: &[f64], rate: &RateSpec, a: f64) -> f64 {
    sample
        .iter()
        .map(|&x| rate.lipschitz_bound(x - a))
        .sum::<f64>()
        / sample.len() as f64
}

/// Scan a grid of candidate `delta` values for a witness that
/// `E[e^{delta L(X - a)}]` is finite (estimated on the sample). Returns
/// the largest grid delta whose sample estimate stays below `cap`,
/// together with the estimate. A `None` cannot certify failure, only
/// that no grid point witnessed the bound.
pub fn cm1_witness(
    sample: &[f64],
    rate: &RateSpec,
    a: f64,
    delta_grid: &[f64],
    cap: f64,
) -> Option<(f64, f64)> {
    let mut best = None;
    for &delta in delta_grid {
        if delta <= 0.0 {
            continue;
        }
        let mut acc = 0.0;
        let mut finite = true;
        for &x in sample {
            let e = delta * rate.lipschitz_bound(x - a);
            if e > EXP_ARG_CAP {
                finite = false;
                break;
            }
            acc += e.exp();
        }
        if finite {
            let est = acc / sample.len() as f64;
            if est.is_finite() && est < cap {
                best = Some((delta, est));
            }
        }
    }
    best
}
