//! Exact (direct-method) simulation of the two-queue chain, with streaming
//! observers for grid sampling, occupation measures and first passages.
//!
//! Each step draws one `Exp(total rate)` holding time and one categorical
//! channel. Paths are cadlag: the state recorded at an event time is the
//! post-jump state.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{propensities, ModelParams, ScaledState, State};
use crate::rng::{replicate, stream_rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    /// Abort once this many events have fired.
    pub event_cap: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { event_cap: 1_000_000_000 }
    }
}

/// Receives the path as it is generated.
pub trait PathObserver {
    fn start(&mut self, _state: State) {}

    /// `state` holds from `t` until the next event. Returning `Break` stops
    /// the run at `t`.
    fn jump(&mut self, t: f64, state: State) -> ControlFlow<()>;

    /// Called once when the horizon is reached (not after a `Break`).
    fn finish(&mut self, _t_end: f64, _state: State) {}
}

impl<A: PathObserver, B: PathObserver> PathObserver for (A, B) {
    fn start(&mut self, state: State) {
        self.0.start(state);
        self.1.start(state);
    }

    fn jump(&mut self, t: f64, state: State) -> ControlFlow<()> {
        let a = self.0.jump(t, state);
        let b = self.1.jump(t, state);
        if a.is_break() || b.is_break() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }

    fn finish(&mut self, t_end: f64, state: State) {
        self.0.finish(t_end, state);
        self.1.finish(t_end, state);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    pub final_state: State,
    /// Horizon, or the event time at which an observer stopped the run.
    pub final_time: f64,
    pub stopped: bool,
}

/// Drives one path on `[0, t_end]` into `observer`.
pub fn run_path<R, O>(
    p: &ModelParams,
    init: State,
    t_end: f64,
    opts: SimOptions,
    rng: &mut R,
    observer: &mut O,
) -> Result<RunSummary>
where
    R: Rng + ?Sized,
    O: PathObserver + ?Sized,
{
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end", format!("must be positive and finite, got {t_end}")));
    }
    let mut state = init;
    let mut t = 0.0;
    let mut events = 0u64;
    observer.start(state);
    loop {
        let rates = propensities(p, state);
        let total: f64 = rates.iter().sum();
        if !total.is_finite() {
            return Err(Error::NonFinite { context: "propensities", time: t });
        }
        if total <= 0.0 {
            break;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        if t + wait > t_end {
            break;
        }
        t += wait;
        let channel = pick_channel(&rates, total, rng.random::<f64>());
        state = state.apply(channel).expect("channels with a vanishing boundary rate cannot fire");
        events += 1;
        if events > opts.event_cap {
            return Err(Error::EventCapExceeded { cap: opts.event_cap, time: t });
        }
        if observer.jump(t, state).is_break() {
            return Ok(RunSummary { events, final_state: state, final_time: t, stopped: true });
        }
    }
    observer.finish(t_end, state);
    Ok(RunSummary { events, final_state: state, final_time: t_end, stopped: false })
}

#[inline]
fn pick_channel(rates: &[f64; 5], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &r) in rates.iter().enumerate() {
        if r > 0.0 {
            acc += r;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    // rounding put `target` past the accumulated sum
    last
}

/// A fully stored event path.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    n: u64,
    horizon: f64,
    times: Vec<f64>,
    states: Vec<State>,
    params_digest: u64,
}

impl Trajectory {
    /// Builds a trajectory from raw events; `times[0]` must be 0.
    pub fn from_events(n: u64, horizon: f64, times: Vec<f64>, states: Vec<State>, params_digest: u64) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() || times[0] != 0.0 {
            return Err(Error::invalid("trajectory", "times and states must align and start at t = 0"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times.last().is_some_and(|&t| t > horizon) {
            return Err(Error::invalid("trajectory", "event times must increase strictly within the horizon"));
        }
        Ok(Self { n, horizon, times, states, params_digest })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Event epochs, starting with 0.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Unscaled states aligned with [`times`](Self::times).
    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn scaled_states(&self) -> impl Iterator<Item = ScaledState> + '_ {
        self.states.iter().map(|s| s.scaled(self.n))
    }

    pub fn params_digest(&self) -> u64 {
        self.params_digest
    }

    pub fn event_count(&self) -> usize {
        self.times.len() - 1
    }

    fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&e| e <= t) - 1
    }
}

#[derive(Default)]
struct Recorder {
    times: Vec<f64>,
    states: Vec<State>,
}

impl PathObserver for Recorder {
    fn start(&mut self, state: State) {
        self.times.push(0.0);
        self.states.push(state);
    }

    fn jump(&mut self, t: f64, state: State) -> ControlFlow<()> {
        self.times.push(t);
        self.states.push(state);
        ControlFlow::Continue(())
    }
}

/// Samples the chain on `[0, t_end]` from `init`, storing every event.
pub fn simulate(p: &ModelParams, t_end: f64, init: State, seed: u64) -> Result<Trajectory> {
    simulate_with(p, t_end, init, seed, SimOptions::default())
}

pub fn simulate_with(p: &ModelParams, t_end: f64, init: State, seed: u64, opts: SimOptions) -> Result<Trajectory> {
    let mut rng = stream_rng(seed, 0);
    let mut rec = Recorder::default();
    run_path(p, init, t_end, opts, &mut rng, &mut rec)?;
    Ok(Trajectory {
        n: p.n(),
        horizon: t_end,
        times: rec.times,
        states: rec.states,
        params_digest: p.digest(seed ^ init.x1.rotate_left(32) ^ init.x2),
    })
}

fn check_grid(grid: &[f64], horizon: f64) -> Result<()> {
    for &g in grid {
        if !(0.0..=horizon).contains(&g) {
            return Err(Error::OutsideHorizon { time: g, horizon });
        }
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("grid", "must be nondecreasing"));
    }
    Ok(())
}

/// Right-continuous evaluation of a stored path on `grid`.
pub fn sample_path(tr: &Trajectory, grid: &[f64]) -> Result<Vec<ScaledState>> {
    check_grid(grid, tr.horizon)?;
    Ok(grid.iter().map(|&g| tr.states[tr.index_at(g)].scaled(tr.n)).collect())
}

/// Streaming grid sampler; records the state at each grid point.
#[derive(Clone, Debug)]
pub struct GridRecorder<'a> {
    grid: &'a [f64],
    current: State,
    samples: Vec<State>,
}

impl<'a> GridRecorder<'a> {
    /// `grid` must be nondecreasing and inside the horizon of the run.
    pub fn new(grid: &'a [f64]) -> Self {
        Self { grid, current: State::default(), samples: Vec::with_capacity(grid.len()) }
    }

    pub fn samples(&self) -> &[State] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<State> {
        self.samples
    }
}

impl PathObserver for GridRecorder<'_> {
    fn start(&mut self, state: State) {
        self.current = state;
    }

    fn jump(&mut self, t: f64, state: State) -> ControlFlow<()> {
        while self.samples.len() < self.grid.len() && self.grid[self.samples.len()] < t {
            self.samples.push(self.current);
        }
        self.current = state;
        ControlFlow::Continue(())
    }

    fn finish(&mut self, t_end: f64, state: State) {
        while self.samples.len() < self.grid.len() && self.grid[self.samples.len()] <= t_end {
            self.samples.push(state);
        }
    }
}

/// Runs one path and returns its grid samples and final state.
pub fn simulate_on_grid(
    p: &ModelParams,
    t_end: f64,
    init: State,
    grid: &[f64],
    rng: &mut (impl Rng + ?Sized),
    opts: SimOptions,
) -> Result<(Vec<State>, RunSummary)> {
    check_grid(grid, t_end)?;
    let mut rec = GridRecorder::new(grid);
    let summary = run_path(p, init, t_end, opts, rng, &mut rec)?;
    Ok((rec.into_samples(), summary))
}

/// Time spent by the fast queue at each level over `[from, to]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationMeasure {
    pub from: f64,
    pub to: f64,
    pub weights: BTreeMap<u64, f64>,
}

impl OccupationMeasure {
    pub fn duration(&self) -> f64 {
        self.to - self.from
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Fraction of the window spent at level `k`.
    pub fn fraction(&self, k: u64) -> f64 {
        self.weights.get(&k).copied().unwrap_or(0.0) / self.duration()
    }

    /// Time average of the fast queue length over the window.
    pub fn mean_level(&self) -> f64 {
        self.weights.iter().map(|(&k, &w)| k as f64 * w).sum::<f64>() / self.duration()
    }
}

/// Streaming occupation-measure accumulator for a time window.
#[derive(Clone, Debug)]
pub struct OccupationRecorder {
    from: f64,
    to: f64,
    last_t: f64,
    level: u64,
    weights: BTreeMap<u64, f64>,
}

impl OccupationRecorder {
    pub fn new(from: f64, to: f64) -> Self {
        Self { from, to, last_t: 0.0, level: 0, weights: BTreeMap::new() }
    }

    fn credit(&mut self, until: f64) {
        let lo = self.last_t.max(self.from);
        let hi = until.min(self.to);
        if hi > lo {
            *self.weights.entry(self.level).or_insert(0.0) += hi - lo;
        }
        self.last_t = until;
    }

    pub fn into_measure(self) -> OccupationMeasure {
        OccupationMeasure { from: self.from, to: self.to, weights: self.weights }
    }
}

impl PathObserver for OccupationRecorder {
    fn start(&mut self, state: State) {
        self.last_t = 0.0;
        self.level = state.x2;
    }

    fn jump(&mut self, t: f64, state: State) -> ControlFlow<()> {
        self.credit(t);
        self.level = state.x2;
        ControlFlow::Continue(())
    }

    fn finish(&mut self, t_end: f64, _state: State) {
        self.credit(t_end);
    }
}

/// Occupation measure of a stored path over `[0, horizon]`.
pub fn occupation_measure(tr: &Trajectory, horizon: f64) -> Result<OccupationMeasure> {
    occupation_window(tr, 0.0, horizon)
}

/// Occupation measure of a stored path over `[from, to]`.
pub fn occupation_window(tr: &Trajectory, from: f64, to: f64) -> Result<OccupationMeasure> {
    if to > tr.horizon || to.is_nan() {
        return Err(Error::OutsideHorizon { time: to, horizon: tr.horizon });
    }
    if !(from >= 0.0 && from < to) {
        return Err(Error::invalid("window", format!("need 0 <= from < to, got [{from}, {to}]")));
    }
    let mut weights = BTreeMap::new();
    for i in 0..tr.times.len() {
        let lo = tr.times[i].max(from);
        let hi = tr.times.get(i + 1).copied().unwrap_or(tr.horizon).min(to);
        if hi > lo {
            *weights.entry(tr.states[i].x2).or_insert(0.0) += hi - lo;
        }
    }
    Ok(OccupationMeasure { from, to, weights })
}

/// First passage of the fast queue to `level`, or censoring at `horizon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingSample {
    pub level: u64,
    /// Hitting time, or the horizon when censored.
    pub time: f64,
    pub censored: bool,
}

impl HittingSample {
    /// `exp(-beta tau)`, replaced by the upper bound `exp(-beta horizon)`
    /// when censored.
    pub fn discounted(&self, beta: f64) -> f64 {
        (-beta * self.time).exp()
    }
}

struct HitLevel(u64);

impl PathObserver for HitLevel {
    fn jump(&mut self, _t: f64, state: State) -> ControlFlow<()> {
        if state.x2 == self.0 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

fn hitting_from_rng(p: &ModelParams, level: u64, horizon: f64, rng: &mut (impl Rng + ?Sized)) -> Result<HittingSample> {
    if level == 0 {
        return Err(Error::invalid("k", "hitting level must be at least 1"));
    }
    let summary = run_path(p, State::default(), horizon, SimOptions::default(), rng, &mut HitLevel(level))?;
    Ok(HittingSample { level, time: summary.final_time, censored: !summary.stopped })
}

/// First time the fast queue reaches `level`, starting from `(0, 0)`.
pub fn hitting_time(p: &ModelParams, level: u64, horizon: f64, seed: u64) -> Result<HittingSample> {
    hitting_from_rng(p, level, horizon, &mut stream_rng(seed, 0))
}

/// `replications` independent hitting times on streams `0..replications`.
pub fn hitting_times(
    p: &ModelParams,
    level: u64,
    horizon: f64,
    replications: usize,
    seed: u64,
) -> Result<Vec<HittingSample>> {
    replicate(replications, |r| hitting_from_rng(p, level, horizon, &mut stream_rng(seed, r as u64)))
        .into_iter()
        .collect()
}

/// Sample mean and standard error of the (censoring-conservative)
/// discounted hitting times.
pub fn empirical_mgf(samples: &[HittingSample], beta: f64) -> (f64, f64) {
    let r = samples.len() as f64;
    let values: Vec<f64> = samples.iter().map(|s| s.discounted(beta)).collect();
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Upper bound on `E[exp(-beta tau_k)]` for the fast queue started empty.
///
/// With `alpha = beta / (n mu)` and `rho = lambda / mu` the bound is
/// `int u^(alpha-1) e^(-rho u) du / int (1+u)^k u^(alpha-1) e^(-rho u) du`.
/// Expanding `(1+u)^k` gives
/// `sum_j C(k,j) Gamma(alpha+j) rho^-(alpha+j)` for the denominator, so the
/// ratio is `1 / sum_j C(k,j) (alpha)_j rho^-j` with the rising factorial
/// `(alpha)_j = Gamma(alpha+j) / Gamma(alpha)`. The sum is taken in log
/// space.
pub fn mgf_bound(p: &ModelParams, beta: f64, k: u64) -> f64 {
    let alpha = beta / (p.n() as f64 * p.mu());
    mgf_bound_ratio(alpha, p.lambda() / p.mu(), k)
}

/// The `n -> inf` limit of [`mgf_bound`]: the `alpha -> 0` limit of each
/// term. Every `j >= 1` term carries a factor `alpha` and vanishes, so the
/// limit is 1 for every `k`.
pub fn mgf_bound_limit(p: &ModelParams, k: u64) -> f64 {
    mgf_bound_ratio(0.0, p.lambda() / p.mu(), k)
}

/// Bound as a function of `alpha = beta / (n mu)` and `rho = lambda / mu`.
pub fn mgf_bound_ratio(alpha: f64, rho: f64, k: u64) -> f64 {
    let ln_rho = rho.ln();
    let mut log_terms = Vec::with_capacity(k as usize + 1);
    let mut log_binom = 0.0;
    let mut log_rising = 0.0;
    log_terms.push(0.0);
    for j in 1..=k {
        let jf = j as f64;
        log_binom += ((k - j + 1) as f64).ln() - jf.ln();
        log_rising += (alpha + jf - 1.0).ln();
        log_terms.push(log_binom + log_rising - jf * ln_rho);
    }
    let lse = log_sum_exp(&log_terms);
    if lse.is_infinite() {
        return 0.0;
    }
    (-lse).exp()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
