//! Coupled-pair processes: the overlap-maximizing joint jump for shifted
//! exponentials, the synchronous min-rate coupling of two n-particle
//! systems, and the alternating synchronous/optimal coalescing coupling
//! for the exponential-exponential tagged pair with an injected downward
//! drift.
//!
//! The coalescing construction alternates two phases. In the SYNC phase
//! the lower process piggybacks on every jump of the upper one (common
//! sizes, rate `w(upper)`) and additionally jumps alone at the rate
//! difference, while both drift down at speed `theta(t)/gamma`; the phase
//! ends when the gap closes to within `a`. The OPTIMAL phase couples the
//! next joint jump through the overlap of the two shifted exponential
//! jump laws, which lands both processes on the same point with
//! probability `e^{-gamma * gap}`; hitting that overlap coalesces the
//! pair for good. Every cycle succeeds with probability at least
//! `E[e^{-(beta+gamma)(a + |E - a|)}]`, `E ~ Exp(gamma)`, independent of
//! the cycle index.

use crate::engine::SystemState;
use crate::meanfield::ThetaPath;
use crate::model::{JumpSpec, Model, RateSpec, EXP_ARG_CAP};
use crate::rng::Rng;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingError {
    NeedsExpExp,
    InvalidThreshold(f64),
    MismatchedSystems,
}

impl fmt::Display for CouplingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingError::NeedsExpExp => write!(
                f,
                "coalescing coupling requires exponential rate and exponential jumps"
            ),
            CouplingError::InvalidThreshold(a) => {
                write!(f, "closeness threshold must be positive, got {a}")
            }
            CouplingError::MismatchedSystems => {
                write!(f, "paired systems must share n and the model")
            }
        }
    }
}

impl std::error::Error for CouplingError {}

/// Outcome of one optimal coupling of `u + Exp(gamma)` and `v + Exp(gamma)`.
#[derive(Debug, Clone, Copy)]
pub struct OptCouplingDraw {
    /// Coupled value with the law of `u + Exp(gamma)`.
    pub e1: f64,
    /// Coupled value with the law of `v + Exp(gamma)`.
    pub e2: f64,
    /// The two values landed together (probability `e^{-gamma |u - v|}`).
    pub met: bool,
}

/// Maximal (total-variation-optimal) coupling of two exponentials shifted
/// to `u` and `v`: with probability `e^{-gamma |u-v|}` both values are
/// drawn from the normalized overlap of the two densities (an exponential
/// beyond the larger shift); otherwise the lower value is drawn from the
/// density excess on `(u, v]` and the upper one independently beyond `v`.
/// Both marginals are exact.
pub fn optimal_exp_coupling(u: f64, v: f64, gamma: f64, rng: &mut Rng) -> OptCouplingDraw {
    debug_assert!(gamma > 0.0);
    let (lo, hi, swapped) = if u <= v { (u, v, false) } else { (v, u, true) };
    let gap = hi - lo;
    let p_meet = (-gamma * gap).exp();
    if rng.uniform() < p_meet {
        let common = hi + rng.exponential(gamma);
        return OptCouplingDraw {
            e1: common,
            e2: common,
            met: true,
        };
    }
    // lower leg: Exp(gamma) from lo conditioned to land in (lo, hi]
    let u_trunc = rng.uniform_pos();
    let lower = lo - (1.0 - u_trunc * (1.0 - p_meet)).ln() / gamma;
    // upper leg: plain Exp(gamma) from hi
    let upper = hi + rng.exponential(gamma);
    let (e1, e2) = if swapped {
        (upper, lower)
    } else {
        (lower, upper)
    };
    OptCouplingDraw { e1, e2, met: false }
}

/// One event of the synchronously coupled pair of n-particle systems:
/// per index, a common jump fires at the smaller of the two rates and
/// each system alone at its positive rate excess, so each marginal is the
/// standalone chain while common jumps cancel in the difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairEventKind {
    Sync,
    SoloFirst,
    SoloSecond,
}

#[derive(Debug, Clone, Copy)]
pub struct PairEvent {
    pub time: f64,
    pub particle: usize,
    pub kind: PairEventKind,
    pub jump_size: f64,
}

/// Total event rate of the coupled pair: `sum_i max(w_i, w~_i)`.
pub fn pair_total_rate(a: &SystemState, b: &SystemState, model: &Model) -> f64 {
    a.y.iter()
        .zip(b.y.iter())
        .map(|(&ya, &yb)| model.rate.eval(ya).max(model.rate.eval(yb)))
        .sum()
}

/// Advance the coupled pair by one event (in place). Systems must share n.
pub fn pair_sync_step(
    a: &mut SystemState,
    b: &mut SystemState,
    model: &Model,
    rng: &mut Rng,
) -> Result<PairEvent, CouplingError> {
    let n = a.n();
    if n != b.n() {
        return Err(CouplingError::MismatchedSystems);
    }
    // category rates: per index (sync, solo_a, solo_b)
    let mut rates = Vec::with_capacity(3 * n);
    let mut total = 0.0;
    for i in 0..n {
        let wa = model.rate.eval(a.y[i]);
        let wb = model.rate.eval(b.y[i]);
        let sync = wa.min(wb);
        let solo_a = (wa - wb).max(0.0);
        let solo_b = (wb - wa).max(0.0);
        rates.push(sync);
        rates.push(solo_a);
        rates.push(solo_b);
        total += wa.max(wb); // = sync + solo_a + solo_b
    }
    let dt = rng.exponential(total);
    let target = rng.uniform() * total;
    let mut cum = 0.0;
    let mut chosen = rates.len() - 1;
    for (k, &r) in rates.iter().enumerate() {
        cum += r;
        if target < cum {
            chosen = k;
            break;
        }
    }
    let i = chosen / 3;
    let kind = match chosen % 3 {
        0 => PairEventKind::Sync,
        1 => PairEventKind::SoloFirst,
        _ => PairEventKind::SoloSecond,
    };
    let z = model.jump.sample(rng);
    let t_new = a.t + dt;
    let apply = |st: &mut SystemState| {
        let d = z / n as f64;
        for y in st.y.iter_mut() {
            *y -= d;
        }
        st.y[i] += z;
        st.m += d;
    };
    match kind {
        PairEventKind::Sync => {
            apply(a);
            apply(b);
        }
        PairEventKind::SoloFirst => apply(a),
        PairEventKind::SoloSecond => apply(b),
    }
    a.t = t_new;
    b.t = t_new;
    Ok(PairEvent {
        time: t_new,
        particle: i,
        kind,
        jump_size: z,
    })
}

/// Phase of the coalescing coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Sync,
    OptimalAttempt,
}

/// Public state of the coalescing tagged pair.
#[derive(Debug, Clone)]
pub struct CoupledPairState {
    pub z1: f64,
    pub z2: f64,
    pub t: f64,
    pub phase: Phase,
    /// Completed attempt cycles.
    pub cycle: u32,
    pub coalesced: bool,
    /// Closeness threshold `a` that triggers an optimal attempt.
    pub a: f64,
    /// Recorded stopping times sigma_0, sigma_1, ... (phase changes).
    pub sigma_log: Vec<f64>,
}

/// What one coupled event did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoupledEventKind {
    /// Joint jump in the SYNC phase (common size).
    SyncJoint,
    /// Solo jump of the lower process in the SYNC phase.
    SyncSolo,
    /// The optimal attempt fired; `met` tells whether it coalesced.
    Attempt { met: bool },
    /// Solo jump of the lower process pre-empting the attempt.
    AttemptSolo,
    /// Post-coalescence common jump.
    Coalesced,
}

#[derive(Debug, Clone, Copy)]
pub struct CoupledEvent {
    pub time: f64,
    pub kind: CoupledEventKind,
}

/// The coalescing coupling driver for the exponential-exponential model
/// with an injected piecewise-constant rate input `theta`.
pub struct CoalescingCoupling<'a> {
    pub state: CoupledPairState,
    beta: f64,
    gamma: f64,
    theta: &'a ThetaPath,
    /// True when z1 currently plays the lower role of the phase.
    min_is_z1: bool,
    pub overflow: bool,
}

impl<'a> CoalescingCoupling<'a> {
    pub fn new(
        z1: f64,
        z2: f64,
        a: f64,
        model: &Model,
        theta: &'a ThetaPath,
    ) -> Result<Self, CouplingError> {
        let (beta, gamma) = match (&model.rate, &model.jump) {
            (RateSpec::Exp { beta }, JumpSpec::Exponential { gamma }) => (*beta, *gamma),
            _ => return Err(CouplingError::NeedsExpExp),
        };
        if !(a.is_finite() && a > 0.0) {
            return Err(CouplingError::InvalidThreshold(a));
        }
        let coalesced = z1 == z2;
        let mut state = CoupledPairState {
            z1,
            z2,
            t: 0.0,
            phase: Phase::Sync,
            cycle: 0,
            coalesced,
            a,
            sigma_log: vec![0.0],
        };
        let min_is_z1 = z1 <= z2;
        if !coalesced && (z1 - z2).abs() <= a {
            // already close: the first optimal attempt starts immediately
            state.phase = Phase::OptimalAttempt;
            state.sigma_log.push(0.0);
        }
        Ok(Self {
            state,
            beta,
            gamma,
            theta,
            min_is_z1,
            overflow: false,
        })
    }

    fn positions(&self) -> (f64, f64) {
        // (lower-role position, upper-role position)
        if self.min_is_z1 {
            (self.state.z1, self.state.z2)
        } else {
            (self.state.z2, self.state.z1)
        }
    }

    fn set_positions(&mut self, lower: f64, upper: f64) {
        if self.min_is_z1 {
            self.state.z1 = lower;
            self.state.z2 = upper;
        } else {
            self.state.z2 = lower;
            self.state.z1 = upper;
        }
    }

    /// Drift both processes down by `d`.
    fn apply_drift(&mut self, d: f64) {
        self.state.z1 -= d;
        self.state.z2 -= d;
    }

    /// Sample the next jump epoch after `t0` for a process whose rate is
    /// `e^{-beta p(t)}` while `p` drifts down at `theta(t)/gamma`: exact
    /// exponential time change per theta segment. Returns the event time
    /// and the accumulated drift; the exponent cap applies as in the
    /// engine.
    fn next_jump_time(&mut self, t0: f64, p0: f64, rng: &mut Rng) -> (f64, f64) {
        let mut xi = rng.exponential(1.0);
        let mut tc = t0;
        let mut pm = p0;
        let breakpoints = self.theta.breakpoints();
        let mut seg = breakpoints.partition_point(|&bt| bt <= tc);
        loop {
            let theta_c = self.theta.value_at(tc);
            let seg_end = breakpoints.get(seg).copied();
            let arg = -self.beta * pm;
            if arg > EXP_ARG_CAP {
                self.overflow = true;
            }
            let lam0 = arg.min(EXP_ARG_CAP).exp();
            let r = self.beta * theta_c / self.gamma;
            if r == 0.0 {
                let hazard_end = seg_end.map(|se| lam0 * (se - tc));
                match hazard_end {
                    Some(h) if xi > h => {
                        xi -= h;
                        tc = seg_end.unwrap();
                        seg += 1;
                        continue;
                    }
                    _ => {
                        let dt = xi / lam0;
                        return (tc + dt, p0 - pm);
                    }
                }
            } else {
                let hazard_end = seg_end.map(|se| lam0 * ((r * (se - tc)).exp_m1()) / r);
                match hazard_end {
                    Some(h) if xi > h => {
                        xi -= h;
                        let span = seg_end.unwrap() - tc;
                        pm -= theta_c / self.gamma * span;
                        tc = seg_end.unwrap();
                        seg += 1;
                        continue;
                    }
                    _ => {
                        let dt = (xi * r / lam0).ln_1p() / r;
                        pm -= theta_c / self.gamma * dt;
                        return (tc + dt, p0 - pm);
                    }
                }
            }
        }
    }

    /// Advance the pair by one jump event.
    pub fn step(&mut self, rng: &mut Rng) -> CoupledEvent {
        if self.state.coalesced {
            // single merged process: jump at rate w(z), common size
            let (t_star, drift) = self.next_jump_time(self.state.t, self.state.z1, rng);
            self.apply_drift(drift);
            let z = rng.exponential(self.gamma);
            self.state.z1 += z;
            self.state.z2 = self.state.z1;
            self.state.t = t_star;
            return CoupledEvent {
                time: t_star,
                kind: CoupledEventKind::Coalesced,
            };
        }
        match self.state.phase {
            Phase::Sync => self.step_sync(rng),
            Phase::OptimalAttempt => self.step_attempt(rng),
        }
    }

    fn step_sync(&mut self, rng: &mut Rng) -> CoupledEvent {
        let (lower, _) = self.positions();
        let (t_star, drift) = self.next_jump_time(self.state.t, lower, rng);
        self.apply_drift(drift);
        self.state.t = t_star;
        let (lower, upper) = self.positions();
        // joint with probability w(upper)/w(lower) = e^{-beta * gap}
        let p_joint = (-self.beta * (upper - lower)).exp();
        let z = rng.exponential(self.gamma);
        let kind = if rng.uniform() < p_joint {
            self.set_positions(lower + z, upper + z);
            CoupledEventKind::SyncJoint
        } else {
            self.set_positions(lower + z, upper);
            CoupledEventKind::SyncSolo
        };
        // phase transition once the lower role reaches upper - a
        let (lo_now, up_now) = self.positions();
        if lo_now >= up_now - self.state.a {
            self.enter_attempt();
        }
        CoupledEvent { time: t_star, kind }
    }

    fn enter_attempt(&mut self) {
        self.state.sigma_log.push(self.state.t);
        self.state.phase = Phase::OptimalAttempt;
        // re-read both positions: the lower process may have overshot
        self.min_is_z1 = self.state.z1 <= self.state.z2;
    }

    fn enter_sync(&mut self) {
        self.state.sigma_log.push(self.state.t);
        self.state.phase = Phase::Sync;
        self.state.cycle += 1;
        self.min_is_z1 = self.state.z1 <= self.state.z2;
        let gap = (self.state.z1 - self.state.z2).abs();
        if !self.state.coalesced && gap <= self.state.a {
            // still close: next attempt starts at the same instant
            self.enter_attempt();
        }
    }

    fn step_attempt(&mut self, rng: &mut Rng) -> CoupledEvent {
        let (lower, _) = self.positions();
        let (t_star, drift) = self.next_jump_time(self.state.t, lower, rng);
        self.apply_drift(drift);
        self.state.t = t_star;
        let (lower, upper) = self.positions();
        let p_joint = (-self.beta * (upper - lower)).exp();
        let kind;
        if rng.uniform() < p_joint {
            let draw = optimal_exp_coupling(lower, upper, self.gamma, rng);
            self.set_positions(draw.e1, draw.e2);
            if draw.met {
                self.state.coalesced = true;
                self.state.z2 = self.state.z1;
            }
            kind = CoupledEventKind::Attempt { met: draw.met };
        } else {
            let z = rng.exponential(self.gamma);
            self.set_positions(lower + z, upper);
            kind = CoupledEventKind::AttemptSolo;
        }
        self.enter_sync();
        CoupledEvent { time: t_star, kind }
    }

    /// Run until coalescence or until `max_cycles` attempts have failed.
    /// Returns the coalescence time when reached.
    pub fn run_to_coalescence(&mut self, rng: &mut Rng, max_cycles: u32) -> Option<f64> {
        while !self.state.coalesced && self.state.cycle < max_cycles {
            self.step(rng);
        }
        if self.state.coalesced {
            Some(self.state.t)
        } else {
            None
        }
    }
}

/// Standalone reference process for the coupling legs: jumps of size
/// `Exp(gamma)` at rate `e^{-beta z}`, deterministic downward drift at
/// speed `theta(t)/gamma`. Returns the position at `t_end`.
pub fn drift_jump_particle(
    z0: f64,
    model: &Model,
    theta: &ThetaPath,
    t_end: f64,
    rng: &mut Rng,
) -> Result<f64, CouplingError> {
    let (beta, gamma) = match (&model.rate, &model.jump) {
        (RateSpec::Exp { beta }, JumpSpec::Exponential { gamma }) => (*beta, *gamma),
        _ => return Err(CouplingError::NeedsExpExp),
    };
    let mut driver = CoalescingCoupling {
        state: CoupledPairState {
            z1: z0,
            z2: z0,
            t: 0.0,
            phase: Phase::Sync,
            cycle: 0,
            coalesced: true,
            a: 1.0,
            sigma_log: vec![0.0],
        },
        beta,
        gamma,
        theta,
        min_is_z1: true,
        overflow: false,
    };
    loop {
        let (t_star, drift) = driver.next_jump_time(driver.state.t, driver.state.z1, rng);
        if t_star > t_end {
            // drift continues to the horizon, but the jump is discarded
            let theta_int = theta.cumulative(t_end) - theta.cumulative(driver.state.t);
            return Ok(driver.state.z1 - theta_int / gamma);
        }
        driver.state.z1 -= drift;
        driver.state.z1 += rng.exponential(gamma);
        driver.state.t = t_star;
    }
}

/// Closed-form lower bound on the per-cycle coalescence probability,
/// `E[e^{-(beta+gamma)(a + |E - a|)}]` with `E ~ Exp(gamma)`.
pub fn cycle_success_lower_bound(beta: f64, gamma: f64, a: f64) -> f64 {
    let s = beta + gamma;
    // E[e^{-s |E - a|}] split at a
    let below = if (gamma - s).abs() < 1e-14 {
        // gamma == s only if beta == 0; handled generically below
        gamma * a * (-s * a).exp()
    } else {
        gamma / (gamma - s) * ((-s * a).exp() - (-gamma * a).exp())
    };
    let above = gamma / (gamma + s) * (-gamma * a).exp();
    (-s * a).exp() * (below + above)
}
