//! Exact event-driven simulation of the n-particle jump system.
//!
//! Between events nothing moves, so the competing-exponentials scheme is
//! exact: draw the holding time from the total rate, pick the jumping
//! particle proportionally to its rate, draw the jump size. Per event the
//! random stream is consumed in exactly that order (holding, selection,
//! jump), which makes the fast and naive selection kernels comparable
//! bit for bit under a shared seed.
//!
//! State is kept in centered coordinates: `y_i = x_i - m` plus the scalar
//! mean `m`. Internally the common `-Z/n` shift applied to every particle
//! at every event is deferred into a lazy offset so one event costs O(1)
//! state work; the offset is folded back and the configuration exactly
//! re-centered every `recenter_every` events.
//!
//! For exponential rates the per-particle weights factorize under the
//! mean shift: a jump of size `Z` multiplies every weight by the same
//! `e^{beta Z/n}`. That factor is tracked as one scalar while a Fenwick
//! tree holds per-particle leaf weights, giving O(log n) selection. Both
//! selection kernels share identical scalar bookkeeping (leaf values,
//! running sum, rescale factor); they differ only in how the selection
//! threshold is searched, so a shared seed yields identical event logs.

use crate::fenwick::FenwickTree;
use crate::model::{Model, RateSpec, EXP_ARG_CAP};
use crate::numeric::Kahan;
use crate::rng::Rng;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    InvalidConfig(String),
    UnknownSampler(String),
    FastPathNeedsExpRate,
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::InvalidConfig(msg) => write!(f, "invalid simulation config: {msg}"),
            EngineError::UnknownSampler(msg) => write!(f, "unknown initial sampler: {msg}"),
            EngineError::FastPathNeedsExpRate => {
                write!(f, "fenwick selection requires an exponential rate function")
            }
        }
    }
}

impl std::error::Error for EngineError {}

/// Full state of the centered n-particle system.
#[derive(Debug, Clone)]
pub struct SystemState {
    /// Centered positions, sum zero up to rounding.
    pub y: Vec<f64>,
    /// Mean of the raw positions.
    pub m: f64,
    /// Current time.
    pub t: f64,
    /// Sticky flag: a rate evaluation hit the exponent cap.
    pub overflow: bool,
}

impl SystemState {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Raw positions `x_i = y_i + m`.
    pub fn raw_positions(&self) -> Vec<f64> {
        self.y.iter().map(|&y| y + self.m).collect()
    }

    /// Exactly re-center: subtract the mean of `y` from every coordinate
    /// and absorb it into `m`.
    pub fn recenter(&mut self) {
        let mut acc = Kahan::new(0.0);
        for &y in &self.y {
            acc.add(y);
        }
        let mu = acc.value() / self.y.len() as f64;
        for y in &mut self.y {
            *y -= mu;
        }
        self.m += mu;
    }

    pub fn sum_y(&self) -> f64 {
        let mut acc = Kahan::new(0.0);
        for &y in &self.y {
            acc.add(y);
        }
        acc.value()
    }

    pub fn max_abs_y(&self) -> f64 {
        self.y.iter().fold(0.0f64, |m, &y| m.max(y.abs()))
    }
}

/// One jump event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub particle: u32,
    pub jump_size: f64,
    pub total_rate_before: f64,
}

/// Initial-condition specification.
#[derive(Debug, Clone)]
pub enum InitSpec {
    /// All particles at `c`.
    PointMass(f64),
    /// Explicit raw positions (length must equal n).
    Vector(Vec<f64>),
    /// n equally spaced points spanning `[lo, hi]`.
    UniformGrid { lo: f64, hi: f64 },
    /// iid draws from the exponential-exponential fixed point.
    GumbelFixedPoint { beta: f64, gamma: f64 },
}

/// Which selection kernel to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionKind {
    /// Fenwick for exponential rates, linear scan otherwise.
    Auto,
    Fenwick,
    Linear,
}

/// Simulation controls. `seed` is consumed by [`simulate`]; the lower
/// level [`run_until`] takes a caller-owned generator instead.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub horizon: f64,
    pub seed: u64,
    pub recenter_every: u64,
    pub truncation_r: Option<f64>,
    pub record_events: bool,
    pub snapshot_times: Vec<f64>,
    pub event_budget: u64,
    pub selection: SelectionKind,
}

impl SimConfig {
    pub fn new(n: usize, horizon: f64, seed: u64) -> Self {
        Self {
            n,
            horizon,
            seed,
            recenter_every: 1 << 16,
            truncation_r: None,
            record_events: false,
            snapshot_times: Vec::new(),
            event_budget: 1_000_000_000,
            selection: SelectionKind::Auto,
        }
    }

    pub fn with_events(mut self) -> Self {
        self.record_events = true;
        self
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.n == 0 {
            return Err(EngineError::InvalidConfig("n must be at least 1".into()));
        }
        if self.horizon.is_nan() || self.horizon < 0.0 {
            return Err(EngineError::InvalidConfig(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if self.recenter_every == 0 {
            return Err(EngineError::InvalidConfig(
                "recenter_every must be positive".into(),
            ));
        }
        let mut prev = 0.0;
        for &s in &self.snapshot_times {
            if !(s >= prev && s <= self.horizon) {
                return Err(EngineError::InvalidConfig(format!(
                    "snapshot times must be sorted within [0, horizon]; offending time {s}"
                )));
            }
            prev = s;
        }
        Ok(())
    }
}

/// A recorded state snapshot.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub m: f64,
    pub y: Vec<f64>,
}

/// Output of a simulation run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub initial: SystemState,
    pub state: SystemState,
    pub snapshots: Vec<Snapshot>,
    pub events: Option<Vec<EventRecord>>,
    pub events_count: u64,
    /// Compensated sum of all jump sizes.
    pub jump_total: f64,
    /// Event budget hit before the horizon: the result is partial.
    pub budget_exhausted: bool,
    /// Some rate evaluation saturated the exponent cap.
    pub overflow: bool,
}

impl RunResult {
    pub fn tainted(&self) -> bool {
        self.budget_exhausted || self.overflow
    }
}

/// Draw the initial configuration and center it; time starts at zero.
pub fn init_state(n: usize, init: &InitSpec, rng: &mut Rng) -> Result<SystemState, EngineError> {
    if n == 0 {
        return Err(EngineError::InvalidConfig("n must be at least 1".into()));
    }
    let raw: Vec<f64> = match init {
        InitSpec::PointMass(c) => {
            if !c.is_finite() {
                return Err(EngineError::UnknownSampler(format!("point mass at {c}")));
            }
            vec![*c; n]
        }
        InitSpec::Vector(v) => {
            if v.len() != n {
                return Err(EngineError::InvalidConfig(format!(
                    "deterministic vector has length {}, expected {n}",
                    v.len()
                )));
            }
            v.clone()
        }
        InitSpec::UniformGrid { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(EngineError::UnknownSampler(format!(
                    "uniform grid [{lo}, {hi}]"
                )));
            }
            if n == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        }
        InitSpec::GumbelFixedPoint { beta, gamma } => {
            let fp = crate::meanfield::GumbelFixedPoint::new(*beta, *gamma)
                .map_err(|e| EngineError::UnknownSampler(e.to_string()))?;
            (0..n).map(|_| fp.sample(rng)).collect()
        }
    };
    let mut acc = Kahan::new(0.0);
    for &x in &raw {
        acc.add(x);
    }
    let m = acc.value() / n as f64;
    let mut state = SystemState {
        y: raw.iter().map(|&x| x - m).collect(),
        m,
        t: 0.0,
        overflow: false,
    };
    state.recenter(); // kill first-pass rounding in the mean
    Ok(state)
}

// Weight bookkeeping shared by both selection kernels. `Factorized` is the
// exponential-rate representation w_i = base * rescale * leaf_i; `Direct`
// recomputes all weights after each event (general rates).
#[derive(Clone, Copy)]
enum BookMode {
    Factorized { beta: f64 },
    Direct,
}

enum SelectorImpl {
    Linear(Vec<f64>),
    Fenwick(FenwickTree),
}

impl SelectorImpl {
    fn select(&self, target: f64) -> usize {
        match self {
            SelectorImpl::Linear(leaves) => {
                let mut cum = 0.0;
                for (i, &v) in leaves.iter().enumerate() {
                    cum += v;
                    if target < cum {
                        return i;
                    }
                }
                let mut idx = leaves.len() - 1;
                while idx > 0 && leaves[idx] <= 0.0 {
                    idx -= 1;
                }
                idx
            }
            SelectorImpl::Fenwick(tree) => tree.select(target),
        }
    }

    fn leaf(&self, i: usize) -> f64 {
        match self {
            SelectorImpl::Linear(leaves) => leaves[i],
            SelectorImpl::Fenwick(tree) => tree.leaf(i),
        }
    }

    fn set_leaf(&mut self, i: usize, v: f64) {
        match self {
            SelectorImpl::Linear(leaves) => leaves[i] = v,
            SelectorImpl::Fenwick(tree) => tree.set(i, v),
        }
    }

    fn rebuild(&mut self, values: &[f64]) {
        match self {
            SelectorImpl::Linear(leaves) => {
                leaves.clear();
                leaves.extend_from_slice(values);
            }
            SelectorImpl::Fenwick(tree) => *tree = FenwickTree::new(values),
        }
    }
}

const RESCALE_LIMIT: f64 = 1e100;
const LEAF_FLOOR: f64 = 1e-280;
// Leaves only shrink between rebuilds (each jump multiplies the jumper's
// leaf by e^{-beta Z} while the global factor absorbs the mean shift), so
// the incrementally maintained sum decays geometrically while its stale
// absolute rounding error does not. Rebuilding once the sum has decayed
// by this factor keeps the relative error of the total rate near 1e-10.
const SUM_DECAY_LIMIT: f64 = 1e-6;

/// Live simulation of one replica: state plus rate bookkeeping.
pub struct Sim<'m> {
    model: &'m Model,
    n: usize,
    // positions: y_i = pos[i] - shift; shift accumulates the -Z/n drifts
    pos: Vec<f64>,
    shift: f64,
    mean: Kahan,
    t: f64,
    overflow: bool,
    mode: BookMode,
    selector: SelectorImpl,
    /// Sum of leaf weights, maintained by identical scalar ops in both kernels.
    sum: f64,
    /// Value of `sum` right after the last rebuild.
    sum_at_rebuild: f64,
    /// Weight scale fixed at the last rebuild (factorized mode).
    base: f64,
    /// Accumulated mean-shift factor since the last rebuild.
    rescale: f64,
    events_since_recenter: u64,
    recenter_every: u64,
    max_arg_at_rebuild: f64,
    mean_shift_since_rebuild: f64,
    truncation_r: Option<f64>,
    truncated: bool,
    x_max: f64,
    events_count: u64,
    jump_total: Kahan,
}

impl<'m> Sim<'m> {
    pub fn new(
        model: &'m Model,
        state: SystemState,
        selection: SelectionKind,
        truncation_r: Option<f64>,
        recenter_every: u64,
    ) -> Result<Self, EngineError> {
        model
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        let n = state.n();
        if n == 0 {
            return Err(EngineError::InvalidConfig("empty state".into()));
        }
        let use_fenwick = match (selection, &model.rate) {
            (SelectionKind::Fenwick, RateSpec::Exp { .. }) => true,
            (SelectionKind::Fenwick, _) => return Err(EngineError::FastPathNeedsExpRate),
            (SelectionKind::Auto, RateSpec::Exp { .. }) => true,
            _ => false,
        };
        let selector = if use_fenwick {
            SelectorImpl::Fenwick(FenwickTree::new(&vec![0.0; n]))
        } else {
            SelectorImpl::Linear(vec![0.0; n])
        };
        let mode = match &model.rate {
            RateSpec::Exp { beta } => BookMode::Factorized { beta: *beta },
            RateSpec::Tabulated { .. } => BookMode::Direct,
        };
        let x_max = state
            .y
            .iter()
            .fold(f64::NEG_INFINITY, |mx, &y| mx.max(y + state.m));
        let mut sim = Sim {
            model,
            n,
            pos: state.y.clone(),
            shift: 0.0,
            mean: Kahan::new(state.m),
            t: state.t,
            overflow: state.overflow,
            mode,
            selector,
            sum: 0.0,
            sum_at_rebuild: 0.0,
            base: 1.0,
            rescale: 1.0,
            events_since_recenter: 0,
            recenter_every: recenter_every.max(1),
            max_arg_at_rebuild: 0.0,
            mean_shift_since_rebuild: 0.0,
            truncation_r,
            truncated: false,
            x_max,
            events_count: 0,
            jump_total: Kahan::new(0.0),
        };
        sim.check_truncation();
        sim.rebuild();
        Ok(sim)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn events_count(&self) -> u64 {
        self.events_count
    }

    pub fn jump_total(&self) -> f64 {
        self.jump_total.value()
    }

    pub fn overflowed(&self) -> bool {
        self.overflow
    }

    pub fn mean(&self) -> f64 {
        self.mean.value()
    }

    #[inline]
    fn y(&self, i: usize) -> f64 {
        self.pos[i] - self.shift
    }

    /// Materialize the public state (fold the lazy shift back in).
    pub fn state(&self) -> SystemState {
        SystemState {
            y: (0..self.n).map(|i| self.y(i)).collect(),
            m: self.mean.value(),
            t: self.t,
            overflow: self.overflow,
        }
    }

    /// Total jump rate of the current configuration.
    pub fn total_rate(&self) -> f64 {
        if self.truncated {
            return self.n as f64;
        }
        match self.mode {
            BookMode::Factorized { .. } => self.base * self.rescale * self.sum,
            BookMode::Direct => self.sum,
        }
    }

    fn check_truncation(&mut self) {
        if let Some(r) = self.truncation_r {
            if !self.truncated && self.x_max > r {
                self.truncated = true;
            }
        }
    }

    /// Recompute all leaf weights from current positions. In factorized
    /// mode leaves are normalized by the largest weight so the running sum
    /// stays in range no matter how extreme the rates get; a capped
    /// exponent marks the run as overflowed.
    fn rebuild(&mut self) {
        if self.truncated {
            let ones = vec![1.0; self.n];
            self.selector.rebuild(&ones);
            self.sum = self.n as f64;
            self.sum_at_rebuild = self.sum;
            self.base = 1.0;
            self.rescale = 1.0;
            return;
        }
        match self.mode {
            BookMode::Factorized { beta } => {
                let mut max_arg = f64::NEG_INFINITY;
                for i in 0..self.n {
                    max_arg = max_arg.max(-beta * self.y(i));
                }
                if max_arg > EXP_ARG_CAP {
                    self.overflow = true;
                }
                let capped = max_arg.min(EXP_ARG_CAP);
                let values: Vec<f64> = (0..self.n)
                    .map(|i| ((-beta * self.y(i)).min(EXP_ARG_CAP) - capped).exp())
                    .collect();
                let mut sum = 0.0;
                for &v in &values {
                    sum += v;
                }
                self.selector.rebuild(&values);
                self.sum = sum;
                self.sum_at_rebuild = sum;
                self.base = capped.exp();
                self.rescale = 1.0;
                self.max_arg_at_rebuild = capped;
                self.mean_shift_since_rebuild = 0.0;
            }
            BookMode::Direct => {
                let values: Vec<f64> = (0..self.n)
                    .map(|i| self.model.rate.eval(self.y(i)))
                    .collect();
                let mut sum = 0.0;
                for &v in &values {
                    sum += v;
                }
                self.selector.rebuild(&values);
                self.sum = sum;
                self.sum_at_rebuild = sum;
                self.base = 1.0;
                self.rescale = 1.0;
            }
        }
    }

    fn recenter_and_rebuild(&mut self) {
        let mut state = self.state();
        state.recenter();
        self.pos = state.y;
        self.shift = 0.0;
        self.mean = Kahan::new(state.m);
        self.events_since_recenter = 0;
        self.rebuild();
    }

    /// Draw the next holding time. Strictly positive.
    pub fn draw_holding(&self, rng: &mut Rng, total: f64) -> f64 {
        rng.exponential(total)
    }

    /// Consume selection and jump randomness, apply the event at time
    /// `self.t + dt`, and return its record.
    pub fn commit_event(&mut self, rng: &mut Rng, dt: f64, total: f64) -> EventRecord {
        let u_select = rng.uniform();
        let target = u_select * self.sum;
        let i = self.selector.select(target);
        let z = self.model.jump.sample(rng);
        self.t += dt;
        self.apply_jump(i, z);
        self.events_count += 1;
        self.jump_total.add(z);
        EventRecord {
            time: self.t,
            particle: i as u32,
            jump_size: z,
            total_rate_before: total,
        }
    }

    /// Execute one event unconditionally: holding time, selection, jump.
    pub fn step(&mut self, rng: &mut Rng) -> EventRecord {
        let total = self.total_rate();
        let dt = self.draw_holding(rng, total);
        self.commit_event(rng, dt, total)
    }

    /// Freeze time at `t_end` (no randomness consumed).
    pub fn freeze_at(&mut self, t_end: f64) {
        debug_assert!(t_end >= self.t);
        self.t = t_end;
    }

    /// Apply a jump of size `z` to particle `i`: all centered coordinates
    /// shift by `-z/n` via the lazy offset, the jumper gains `z`, the mean
    /// gains `z/n`.
    fn apply_jump(&mut self, i: usize, z: f64) {
        let d = z / self.n as f64;
        self.shift += d;
        self.pos[i] += z;
        self.mean.add(d);
        let x_new = self.y(i) + self.mean.value();
        if x_new > self.x_max {
            self.x_max = x_new;
        }
        let was_truncated = self.truncated;
        self.check_truncation();

        if self.truncated {
            if !was_truncated {
                self.rebuild();
            }
            self.bump_recenter_counter();
            return;
        }

        match self.mode {
            BookMode::Factorized { beta } => {
                let g = (beta * d).exp();
                self.rescale *= g;
                self.mean_shift_since_rebuild += d;
                let old = self.selector.leaf(i);
                let new = old * (-beta * z).exp();
                self.sum += new - old;
                self.selector.set_leaf(i, new);

                let needs_rebuild = self.sum < SUM_DECAY_LIMIT * self.sum_at_rebuild
                    || self.rescale > RESCALE_LIMIT
                    || new < LEAF_FLOOR
                    || self.max_arg_at_rebuild + beta * self.mean_shift_since_rebuild > EXP_ARG_CAP;
                if needs_rebuild {
                    self.rebuild();
                }
            }
            BookMode::Direct => {
                // weights depend on every centered coordinate; refresh now
                // so the next holding-time draw sees the true total rate
                self.rebuild();
            }
        }
        self.bump_recenter_counter();
    }

    fn bump_recenter_counter(&mut self) {
        self.events_since_recenter += 1;
        if self.events_since_recenter >= self.recenter_every {
            self.recenter_and_rebuild();
        }
    }
}

/// Run the system from `state` up to time `t_end` under `cfg`, consuming
/// randomness from `rng` (the `cfg.seed` field is ignored here).
pub fn run_until(
    model: &Model,
    state: SystemState,
    t_end: f64,
    cfg: &SimConfig,
    rng: &mut Rng,
) -> Result<RunResult, EngineError> {
    cfg.validate()?;
    if state.n() != cfg.n {
        return Err(EngineError::InvalidConfig(format!(
            "state has n={}, config says n={}",
            state.n(),
            cfg.n
        )));
    }
    if t_end < state.t {
        return Err(EngineError::InvalidConfig(format!(
            "t_end {t_end} precedes current time {}",
            state.t
        )));
    }
    let initial = state.clone();
    let mut sim = Sim::new(
        model,
        state,
        cfg.selection,
        cfg.truncation_r,
        cfg.recenter_every,
    )?;
    let mut events = if cfg.record_events {
        Some(Vec::new())
    } else {
        None
    };
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut snap_idx = 0usize;
    let snap_times = &cfg.snapshot_times;
    let mut budget_exhausted = false;

    loop {
        if sim.events_count() >= cfg.event_budget {
            budget_exhausted = true;
            break;
        }
        let total = sim.total_rate();
        let dt = sim.draw_holding(rng, total);
        let t_next = sim.t() + dt;

        if t_next > t_end {
            // freeze: emit remaining snapshots from the frozen state
            while snap_idx < snap_times.len() && snap_times[snap_idx] <= t_end {
                let st = sim.state();
                snapshots.push(Snapshot {
                    time: snap_times[snap_idx],
                    m: st.m,
                    y: st.y,
                });
                snap_idx += 1;
            }
            sim.freeze_at(t_end);
            break;
        }

        // snapshots strictly before the event time see the pre-event state;
        // one landing exactly on the event time is emitted next iteration
        // with the post-event state (right-continuous paths)
        while snap_idx < snap_times.len() && snap_times[snap_idx] < t_next {
            let st = sim.state();
            snapshots.push(Snapshot {
                time: snap_times[snap_idx],
                m: st.m,
                y: st.y,
            });
            snap_idx += 1;
        }

        let ev = sim.commit_event(rng, dt, total);
        if let Some(log) = events.as_mut() {
            log.push(ev);
        }
    }

    Ok(RunResult {
        initial,
        state: sim.state(),
        snapshots,
        events,
        events_count: sim.events_count(),
        jump_total: sim.jump_total(),
        budget_exhausted,
        overflow: sim.overflowed(),
    })
}

/// Initialize from `init` and run to the horizon, deriving the generator
/// from `cfg.seed`. Randomness order: initial draw first, then events.
pub fn simulate(model: &Model, init: &InitSpec, cfg: &SimConfig) -> Result<RunResult, EngineError> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let state = init_state(cfg.n, init, &mut rng)?;
    run_until(model, state, cfg.horizon, cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpSpec;

    fn exp_exp(beta: f64, gamma: f64) -> Model {
        Model::exp_exp(beta, gamma).unwrap()
    }

    #[test]
    fn init_point_mass_and_vector() {
        let mut rng = Rng::new(1);
        let st = init_state(4, &InitSpec::PointMass(0.0), &mut rng).unwrap();
        assert_eq!(st.y, vec![0.0; 4]);
        assert_eq!(st.m, 0.0);
        assert_eq!(st.t, 0.0);

        let st = init_state(2, &InitSpec::Vector(vec![-1.0, 1.0]), &mut rng).unwrap();
        assert_eq!(st.y, vec![-1.0, 1.0]);
        assert_eq!(st.m, 0.0);
    }

    #[test]
    fn init_gumbel_sample_mean_in_clt_band() {
        // standard Gumbel has variance pi^2/6
        let mut rng = Rng::new(7);
        let n = 1000;
        let st = init_state(
            n,
            &InitSpec::GumbelFixedPoint {
                beta: 1.0,
                gamma: 1.0,
            },
            &mut rng,
        )
        .unwrap();
        let sigma = std::f64::consts::PI / 6.0f64.sqrt();
        let band = 4.0 * sigma / (n as f64).sqrt();
        assert!(st.m.abs() < band, "sample mean {} outside {band}", st.m);
        assert!(st.sum_y().abs() < 1e-9 * n as f64 * (1.0 + st.max_abs_y()));
    }

    #[test]
    fn init_errors() {
        let mut rng = Rng::new(1);
        assert!(init_state(0, &InitSpec::PointMass(0.0), &mut rng).is_err());
        assert!(init_state(3, &InitSpec::Vector(vec![0.0]), &mut rng).is_err());
        assert!(init_state(3, &InitSpec::PointMass(f64::NAN), &mut rng).is_err());
    }

    #[test]
    fn symmetric_state_total_rate() {
        let model = exp_exp(1.0, 1.0);
        let st = SystemState {
            y: vec![0.0, 0.0],
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        let sim = Sim::new(&model, st, SelectionKind::Auto, None, 1 << 16).unwrap();
        assert!((sim.total_rate() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn selection_probability_matches_rates() {
        // y = (-ln 2, c, c') with beta = 1: particle 0 gets weight 2
        let model = exp_exp(1.0, 1.0);
        let c_mid = 0.3;
        let c_top = -0.7;
        let st = SystemState {
            y: vec![-(2.0f64.ln()), c_mid, c_top],
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        let expect = 2.0 / (2.0 + (-c_mid).exp() + (-c_top).exp());
        let mut rng = Rng::new(99);
        let trials = 200_000;
        let mut hits = 0u64;
        let mut sim = Sim::new(&model, st, SelectionKind::Auto, None, 1 << 16).unwrap();
        for _ in 0..trials {
            let saved = sim.state();
            let ev = sim.step(&mut rng);
            if ev.particle == 0 {
                hits += 1;
            }
            // restore: probabilities must refer to the same state each trial
            sim = Sim::new(&model, saved, SelectionKind::Auto, None, 1 << 16).unwrap();
        }
        let freq = hits as f64 / trials as f64;
        assert!(
            (freq - expect).abs() < 0.005,
            "freq {freq} expected {expect}"
        );
    }

    #[test]
    fn jump_preserves_centering() {
        let model = exp_exp(1.0, 1.0);
        let st = SystemState {
            y: vec![0.1, -0.4, 0.3],
            m: 5.0,
            t: 0.0,
            overflow: false,
        };
        let mut rng = Rng::new(5);
        let mut sim = Sim::new(&model, st, SelectionKind::Auto, None, 1 << 16).unwrap();
        for _ in 0..1000 {
            sim.step(&mut rng);
        }
        let st = sim.state();
        assert!(
            st.sum_y().abs() <= 1e-9 * 3.0 * (1.0 + st.max_abs_y()),
            "sum_y = {}",
            st.sum_y()
        );
    }

    #[test]
    fn frequent_recentering_holds_invariant_and_law() {
        // force the recenter pass often; the centering invariant holds at
        // every recorded point and the trajectory law is unaffected (the
        // pass only removes rounding-level drift)
        let model = exp_exp(1.0, 1.0);
        let mk = || SystemState {
            y: vec![0.6, -0.2, -0.4, 0.0, 0.5, -0.5],
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        let mut rng = Rng::new(606);
        let mut sim = Sim::new(&model, mk(), SelectionKind::Auto, None, 64).unwrap();
        for k in 0..20_000 {
            sim.step(&mut rng);
            if k % 64 == 0 {
                let st = sim.state();
                assert!(
                    st.sum_y().abs() <= 1e-9 * 6.0 * (1.0 + st.max_abs_y()),
                    "event {k}: sum_y = {}",
                    st.sum_y()
                );
            }
        }
        // the mean across replicas is insensitive to the recenter cadence
        let mean_at = |every: u64, seed: u64| -> f64 {
            let mut rng = Rng::new(seed);
            let mut sim = Sim::new(&model, mk(), SelectionKind::Auto, None, every).unwrap();
            for _ in 0..500 {
                sim.step(&mut rng);
            }
            sim.state().m
        };
        let a: Vec<f64> = (0..300).map(|s| mean_at(32, 9_000 + s)).collect();
        let b: Vec<f64> = (0..300).map(|s| mean_at(1 << 16, 29_000 + s)).collect();
        let p = crate::stats::ks_two_sample_pvalue(crate::stats::ks_two_sample(&a, &b), 300, 300);
        assert!(p > 0.001, "recentering changed the law: p = {p}");
    }

    #[test]
    fn weight_ratio_selection_frequency() {
        // weights (1, 3): particle 1 chosen with frequency 3/4
        let model = exp_exp(1.0, 1.0);
        let y1 = 0.0;
        let y2 = -(3.0f64.ln()); // w = 3
        let st = SystemState {
            y: vec![y1, y2],
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        for kind in [SelectionKind::Fenwick, SelectionKind::Linear] {
            let mut rng = Rng::new(17);
            let mut hits = 0u64;
            let trials = 100_000;
            let mut sim = Sim::new(&model, st.clone(), kind, None, 1 << 16).unwrap();
            for _ in 0..trials {
                let saved = sim.state();
                if sim.step(&mut rng).particle == 1 {
                    hits += 1;
                }
                sim = Sim::new(&model, saved, kind, None, 1 << 16).unwrap();
            }
            let freq = hits as f64 / trials as f64;
            assert!((freq - 0.75).abs() < 0.01, "{kind:?}: freq {freq}");
        }
    }

    #[test]
    fn tabulated_rate_selection_frequencies() {
        // general rates go through the recompute-every-event path; the
        // selection law must still be w(y_i) / sum w
        let model = Model::new(
            RateSpec::tabulated(vec![(-1.0, 4.0), (0.0, 2.0), (1.0, 1.0)]).unwrap(),
            JumpSpec::deterministic(0.5).unwrap(),
        )
        .unwrap();
        let st = SystemState {
            y: vec![-1.0, 0.0, 1.0],
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        let weights = [4.0, 2.0, 1.0];
        let total: f64 = weights.iter().sum();
        let mut rng = Rng::new(23);
        let trials = 100_000;
        let mut hits = [0u64; 3];
        let mut sim = Sim::new(&model, st.clone(), SelectionKind::Auto, None, 1 << 16).unwrap();
        for _ in 0..trials {
            let saved = sim.state();
            hits[sim.step(&mut rng).particle as usize] += 1;
            sim = Sim::new(&model, saved, SelectionKind::Auto, None, 1 << 16).unwrap();
        }
        for i in 0..3 {
            let freq = hits[i] as f64 / trials as f64;
            let expect = weights[i] / total;
            assert!(
                (freq - expect).abs() < 0.01,
                "particle {i}: freq {freq} expected {expect}"
            );
        }
    }

    #[test]
    fn run_until_zero_horizon() {
        let model = exp_exp(1.0, 1.0);
        let cfg = SimConfig::new(3, 0.0, 11).with_events();
        let res = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        assert_eq!(res.events_count, 0);
        assert_eq!(res.events.unwrap().len(), 0);
        assert_eq!(res.state.t, 0.0);
    }

    #[test]
    fn event_times_strictly_increase_and_jumps_positive() {
        let model = exp_exp(1.0, 1.0);
        let cfg = SimConfig::new(10, 5.0, 3).with_events();
        let res = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        let events = res.events.unwrap();
        assert!(events.len() > 10);
        let mut prev = 0.0;
        for ev in &events {
            assert!(ev.time > prev, "times must strictly increase");
            assert!(ev.jump_size > 0.0);
            assert!(ev.total_rate_before > 0.0);
            prev = ev.time;
        }
    }

    #[test]
    fn single_particle_poisson_velocity() {
        // constant rate 1 via a flat tabulated function, deterministic
        // jumps of 1: m(T)/T -> 1 by the law of large numbers
        let model = Model::new(
            RateSpec::tabulated(vec![(0.0, 1.0)]).unwrap(),
            JumpSpec::deterministic(1.0).unwrap(),
        )
        .unwrap();
        let cfg = SimConfig::new(1, 1000.0, 12);
        let res = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        let v = res.state.m / 1000.0;
        assert!((v - 1.0).abs() < 0.1, "velocity {v}");
        // with n = 1 the centered coordinate never moves
        assert_eq!(res.state.y[0], 0.0);
    }

    #[test]
    fn bookkeeping_identity() {
        let model = exp_exp(1.0, 1.0);
        let cfg = SimConfig::new(50, 20.0, 77).with_events();
        let res = simulate(
            &model,
            &InitSpec::GumbelFixedPoint {
                beta: 1.0,
                gamma: 1.0,
            },
            &cfg,
        )
        .unwrap();
        let n = 50.0;
        let lhs = res.state.m - res.initial.m;
        let rhs = res.jump_total / n;
        assert!(
            (lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-12),
            "m drift {lhs} vs jump sum {rhs}"
        );
        // log agrees with the accumulated total
        let log_sum: f64 = res.events.unwrap().iter().map(|e| e.jump_size).sum();
        assert!((log_sum / n - rhs).abs() <= 1e-9 * rhs.abs());
    }

    #[test]
    fn monotone_raw_positions_across_snapshots() {
        let model = exp_exp(1.0, 1.0);
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let cfg = SimConfig::new(20, 10.0, 8).with_snapshots(times);
        let res = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        assert_eq!(res.snapshots.len(), 21);
        for w in res.snapshots.windows(2) {
            for i in 0..20 {
                let x0 = w[0].y[i] + w[0].m;
                let x1 = w[1].y[i] + w[1].m;
                // tiny slack for the float recombination of y + m
                assert!(x1 >= x0 - 1e-9, "particle {i} moved backwards");
            }
        }
    }

    #[test]
    fn deterministic_same_seed_same_log() {
        let model = exp_exp(1.0, 1.0);
        let cfg = SimConfig::new(30, 5.0, 123).with_events();
        let a = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        let b = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        let (ea, eb) = (a.events.unwrap(), b.events.unwrap());
        assert_eq!(ea.len(), eb.len());
        for (x, y) in ea.iter().zip(eb.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn fenwick_and_linear_logs_bit_identical() {
        let model = exp_exp(1.0, 1.0);
        for seed in [1u64, 2, 3] {
            let mut cfg = SimConfig::new(64, 3.0, seed).with_events();
            cfg.selection = SelectionKind::Fenwick;
            let fast = simulate(
                &model,
                &InitSpec::GumbelFixedPoint {
                    beta: 1.0,
                    gamma: 1.0,
                },
                &cfg,
            )
            .unwrap();
            cfg.selection = SelectionKind::Linear;
            let naive = simulate(
                &model,
                &InitSpec::GumbelFixedPoint {
                    beta: 1.0,
                    gamma: 1.0,
                },
                &cfg,
            )
            .unwrap();
            let (ef, en) = (fast.events.unwrap(), naive.events.unwrap());
            assert_eq!(ef.len(), en.len(), "seed {seed}");
            for (a, b) in ef.iter().zip(en.iter()) {
                assert_eq!(a.time.to_bits(), b.time.to_bits());
                assert_eq!(a.particle, b.particle);
                assert_eq!(a.jump_size.to_bits(), b.jump_size.to_bits());
                assert_eq!(a.total_rate_before.to_bits(), b.total_rate_before.to_bits());
            }
        }
    }

    #[test]
    fn fenwick_requires_exp_rate() {
        let model = Model::new(
            RateSpec::tabulated(vec![(0.0, 1.0)]).unwrap(),
            JumpSpec::exponential(1.0).unwrap(),
        )
        .unwrap();
        let st = SystemState {
            y: vec![0.0, 0.0],
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        assert!(matches!(
            Sim::new(&model, st, SelectionKind::Fenwick, None, 1 << 16),
            Err(EngineError::FastPathNeedsExpRate)
        ));
    }

    #[test]
    fn truncated_runs_consistent_while_below_threshold() {
        // same seed, two truncation levels: identical paths while the
        // lower-level run stays below half its threshold
        let model = exp_exp(1.0, 1.0);
        let r1 = 30.0;
        let r2 = 80.0;
        let mut cfg = SimConfig::new(10, 4.0, 21).with_events();
        cfg.truncation_r = Some(r1);
        let a = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        cfg.truncation_r = Some(r2);
        let b = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        let max_raw_a = a
            .state
            .raw_positions()
            .iter()
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        assert!(
            max_raw_a < r1 / 2.0,
            "test setup must stay below threshold, got {max_raw_a}"
        );
        let (ea, eb) = (a.events.unwrap(), b.events.unwrap());
        assert_eq!(ea.len(), eb.len());
        for (x, y) in ea.iter().zip(eb.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn truncation_switches_to_unit_rates() {
        let model = exp_exp(1.0, 1.0);
        let st = SystemState {
            y: vec![0.0, 0.0],
            m: 100.0, // already above the threshold
            t: 0.0,
            overflow: false,
        };
        let sim = Sim::new(&model, st, SelectionKind::Auto, Some(50.0), 1 << 16).unwrap();
        assert_eq!(sim.total_rate(), 2.0); // n unit rates
    }

    #[test]
    fn event_budget_flags_partial_result() {
        let model = exp_exp(1.0, 1.0);
        let mut cfg = SimConfig::new(5, 100.0, 9);
        cfg.event_budget = 50;
        let res = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        assert!(res.budget_exhausted);
        assert!(res.tainted());
        assert_eq!(res.events_count, 50);
        assert!(res.state.t < 100.0);
    }

    #[test]
    fn overflow_cap_taints_run() {
        // a particle 800 below the mean saturates e^{-beta y}
        let model = exp_exp(1.0, 1.0);
        let st = SystemState {
            y: vec![-800.0, 800.0],
            m: 0.0,
            t: 0.0,
            overflow: false,
        };
        let sim = Sim::new(&model, st, SelectionKind::Auto, None, 1 << 16).unwrap();
        assert!(sim.overflowed());
        assert!(sim.total_rate().is_finite());
    }

    #[test]
    fn exchangeability_of_symmetric_statistics() {
        // permuting the initial vector and re-running with fresh seeds
        // leaves the law of m(T) unchanged (two-sample KS)
        let model = exp_exp(1.0, 1.0);
        let init_a = vec![-0.5, 0.2, 0.9, -0.6, 0.0, 0.35, -0.35, 0.0];
        let mut init_b = init_a.clone();
        init_b.reverse();
        init_b.swap(1, 5);
        let run = |init: &[f64], seed: u64| -> f64 {
            let cfg = SimConfig::new(8, 3.0, seed);
            simulate(&model, &InitSpec::Vector(init.to_vec()), &cfg)
                .unwrap()
                .state
                .m
        };
        let a: Vec<f64> = (0..200).map(|i| run(&init_a, 1000 + i)).collect();
        let b: Vec<f64> = (0..200).map(|i| run(&init_b, 5000 + i)).collect();
        let d = crate::stats::ks_two_sample(&a, &b);
        let p = crate::stats::ks_two_sample_pvalue(d, a.len(), b.len());
        assert!(p > 0.001, "exchangeability KS p = {p}");
    }

    #[test]
    fn snapshot_capture_matches_frozen_state() {
        let model = exp_exp(1.0, 1.0);
        let cfg = SimConfig::new(4, 2.0, 31).with_snapshots(vec![0.0, 1.0, 2.0]);
        let res = simulate(&model, &InitSpec::PointMass(0.0), &cfg).unwrap();
        assert_eq!(res.snapshots.len(), 3);
        assert_eq!(res.snapshots[0].time, 0.0);
        assert_eq!(res.snapshots[0].m, res.initial.m);
        let last = &res.snapshots[2];
        assert_eq!(last.time, 2.0);
        assert_eq!(last.m, res.state.m);
    }
}
