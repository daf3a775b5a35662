//! The averaged (fluid) limit of the message queue.
//!
//! With the fast queue replaced by its frozen stationary law the scaled
//! message queue follows `y' = G(y)` where
//! `G(y) = r1(y) - r3(y) exp(-m(y)) - r4(y) m(y)`.

use crate::error::{Error, Result};
use crate::model::{m_of, m_prime, make_preset, ModelParams, Preset, PresetRates};

/// Averaged drift `G(y)`.
pub fn drift(p: &ModelParams, y: f64) -> f64 {
    let m = m_of(p, y);
    p.r1().eval(y) - p.r3().eval(y) * (-m).exp() - p.r4().eval(y) * m
}

/// `dG/dy`, using the rate derivatives (analytic or finite-difference).
pub fn drift_derivative(p: &ModelParams, y: f64) -> f64 {
    let m = m_of(p, y);
    let dm = m_prime(p, y);
    let e = (-m).exp();
    let (r3, r4) = (p.r3().eval(y), p.r4().eval(y));
    p.r1().deriv1(y) - (p.r3().deriv1(y) - r3 * dm) * e - p.r4().deriv1(y) * m - r4 * dm
}

/// RK4 solution of the fluid ODE on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidSolution {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest integrator step used between grid points.
    pub dt: f64,
}

impl FluidSolution {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("fluid solution has at least one point")
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("fluid solution has at least one point")
    }

    /// Linear interpolation; `t` is clamped to the grid.
    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.grid.partition_point(|&g| g <= t);
        if i == 0 {
            return self.values[0];
        }
        if i == self.grid.len() {
            return self.terminal();
        }
        let (t0, t1) = (self.grid[i - 1], self.grid[i]);
        let w = (t - t0) / (t1 - t0);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }
}

#[inline]
fn rk4_step(p: &ModelParams, y: f64, h: f64) -> f64 {
    let k1 = drift(p, y);
    let k2 = drift(p, y + 0.5 * h * k1);
    let k3 = drift(p, y + 0.5 * h * k2);
    let k4 = drift(p, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Fixed-step RK4 from `y0` on the uniform grid `0, dt, 2 dt, ..., horizon`
/// (the last step is shortened if `dt` does not divide `horizon`).
pub fn integrate(p: &ModelParams, y0: f64, horizon: f64, dt: f64) -> Result<FluidSolution> {
    if !(dt > 0.0 && horizon > 0.0 && dt <= horizon) {
        return Err(Error::invalid("dt", format!("need 0 < dt <= T, got dt = {dt}, T = {horizon}")));
    }
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    let mut grid: Vec<f64> = (0..steps).map(|i| i as f64 * dt).collect();
    grid.push(horizon);
    integrate_on(p, y0, &grid, dt)
}

/// RK4 onto an arbitrary increasing grid starting at 0, taking substeps no
/// longer than `max_dt` between consecutive grid points.
pub fn integrate_on(p: &ModelParams, y0: f64, grid: &[f64], max_dt: f64) -> Result<FluidSolution> {
    if !(y0 >= 0.0 && y0.is_finite()) {
        return Err(Error::invalid("y0", format!("must be finite and nonnegative, got {y0}")));
    }
    if grid.first() != Some(&0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid", "must start at 0 and increase strictly"));
    }
    if !(max_dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut y = y0;
    values.push(y);
    for w in grid.windows(2) {
        let span = w[1] - w[0];
        let sub = (span / max_dt - 1e-9).ceil().max(1.0) as usize;
        let h = span / sub as f64;
        for _ in 0..sub {
            y = rk4_step(p, y, h);
        }
        if !y.is_finite() {
            return Err(Error::NonFinite { context: "fluid ODE", time: w[1] });
        }
        if y < 0.0 {
            return Err(Error::NegativeFluid { value: y, time: w[1] });
        }
        values.push(y);
    }
    Ok(FluidSolution { grid: grid.to_vec(), values, dt: max_dt })
}

/// Root of `G` and a multiplicity report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyState {
    /// Smallest root of `G` on the scanned bracket.
    pub root: f64,
    /// Upper end of the bracket that was scanned.
    pub bracket_hi: f64,
    /// Further sign changes of `G` seen on the scan beyond the first.
    pub extra_sign_changes: usize,
}

const SCAN_CELLS: usize = 2000;
const MAX_DOUBLINGS: u32 = 60;

/// Smallest positive root of `G` by bracketed bisection. The bracket is
/// `[0, bracket_hi]`, doubled until `G` changes sign.
pub fn steady_state(p: &ModelParams, bracket_hi: f64) -> Result<SteadyState> {
    if drift(p, 0.0) <= 0.0 {
        return Err(Error::invalid("r1", "G(0) must be positive"));
    }
    if !(bracket_hi > 0.0 && bracket_hi.is_finite()) {
        return Err(Error::invalid("bracket_hi", "must be positive and finite"));
    }
    let mut hi = bracket_hi;
    let mut doublings = 0;
    while drift(p, hi) >= 0.0 {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::NoSteadyState { upper: hi });
        }
        hi *= 2.0;
        doublings += 1;
    }

    // a scan locates the first sign change and counts any others
    let cell = hi / SCAN_CELLS as f64;
    let mut first = None;
    let mut changes = 0;
    let mut prev = drift(p, 0.0);
    for i in 1..=SCAN_CELLS {
        let x = if i == SCAN_CELLS { hi } else { i as f64 * cell };
        let g = drift(p, x);
        if (prev > 0.0) != (g > 0.0) {
            changes += 1;
            if first.is_none() {
                first = Some(((i - 1) as f64 * cell, x));
            }
        }
        prev = g;
    }
    let (mut lo, mut up) = first.ok_or(Error::NoSteadyState { upper: hi })?;

    let mut g_lo = drift(p, lo);
    while up - lo >= 1e-12 {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        let g_mid = drift(p, mid);
        if g_mid == 0.0 {
            lo = mid;
            up = mid;
            break;
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            up = mid;
        }
    }
    let root = if drift(p, lo).abs() <= drift(p, up).abs() { lo } else { up };
    Ok(SteadyState { root, bracket_hi: hi, extra_sign_changes: changes - 1 })
}

/// Stationary expected service rate of the message queue,
/// `r4(y) m(y) + r3(y) exp(-m(y))`.
pub fn effective_rate(p: &ModelParams, y: f64) -> f64 {
    let m = m_of(p, y);
    p.r4().eval(y) * m + p.r3().eval(y) * (-m).exp()
}

/// Observed convergence ratio `|y(dt) - y(dt/2)| / |y(dt/2) - y(dt/4)|` at
/// the horizon. A fourth-order method gives a value near 16.
pub fn step_halving_ratio(p: &ModelParams, y0: f64, horizon: f64, dt: f64) -> Result<f64> {
    let coarse = integrate(p, y0, horizon, dt)?.terminal();
    let mid = integrate(p, y0, horizon, dt / 2.0)?.terminal();
    let fine = integrate(p, y0, horizon, dt / 4.0)?.terminal();
    Ok((coarse - mid).abs() / (mid - fine).abs())
}

/// One point of a steady-state sweep over the Bell-pair arrival rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub lambda_b: f64,
    pub y_s: f64,
    pub mu_eff: f64,
    /// `G(y_s)`.
    pub residual: f64,
}

/// `points` equally spaced values of `lambda_B` on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Steady state and effective rate of a preset for each `lambda_B`.
pub fn sweep_lambda_b(preset: Preset, rates: PresetRates, lambda_bs: &[f64]) -> Result<Vec<SweepPoint>> {
    lambda_bs
        .iter()
        .map(|&lambda_b| {
            let p = make_preset(preset, PresetRates { lambda_b, ..rates }, 1)?;
            let y_s = steady_state(&p, 1.0)?.root;
            Ok(SweepPoint { lambda_b, y_s, mu_eff: effective_rate(&p, y_s), residual: drift(&p, y_s) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_preset, Preset, PresetRates, RateFunction};

    fn preset(kind: Preset) -> ModelParams {
        make_preset(kind, PresetRates::FIGURE, 1000).unwrap()
    }

    #[test]
    fn drift_hand_values() {
        let p = preset(Preset::ConstantArrivals);
        assert_eq!(drift(&p, 0.0), 5.0);
        let expect = 5.0 - 2.0 * (-0.5f64).exp() - 2.0;
        assert!((drift(&p, 1.0) - expect).abs() < 1e-14);
        assert!((drift(&p, 1.0) - 1.78694).abs() < 1e-5);
    }

    #[test]
    fn drift_derivative_matches_differences() {
        for kind in [Preset::ConstantArrivals, Preset::RegulatedArrivals] {
            let p = preset(kind);
            for y in [0.3, 1.0, 1.83, 4.0] {
                let h = 1e-4;
                let fd = (drift(&p, y + h) - drift(&p, y - h)) / (2.0 * h);
                let fd2 = (drift(&p, y + h / 2.0) - drift(&p, y - h / 2.0)) / h;
                let rich = (4.0 * fd2 - fd) / 3.0;
                let an = drift_derivative(&p, y);
                assert!((an - rich).abs() <= 1e-6 * an.abs(), "{kind:?} y={y}: {an} vs {rich}");
            }
        }
    }

    #[test]
    fn flat_drift_keeps_initial_value() {
        // started at the root the drift vanishes
        let p = preset(Preset::ConstantArrivals);
        let ys = steady_state(&p, 1.0).unwrap().root;
        let fs = integrate(&p, ys, 2.0, 1e-2).unwrap();
        assert!(fs.values.iter().all(|v| (v - ys).abs() < 1e-9));
    }

    #[test]
    fn effective_rate_edges() {
        let p = preset(Preset::ConstantArrivals);
        assert_eq!(effective_rate(&p, 0.0), 0.0);
        let ys = steady_state(&p, 1.0).unwrap().root;
        assert!((effective_rate(&p, ys) - 5.0).abs() < 1e-9);
        let b = preset(Preset::RegulatedArrivals);
        let yb = steady_state(&b, 1.0).unwrap().root;
        assert!((effective_rate(&b, yb) - 5.0 / (1.0 + yb)).abs() < 1e-9);
        assert!(yb < ys);
    }

    #[test]
    fn vanishing_load_gives_vanishing_root() {
        let mut last = f64::INFINITY;
        for la in [1e-1, 1e-2, 1e-3, 1e-4] {
            let rates = PresetRates { lambda_a: la, ..PresetRates::FIGURE };
            let p = make_preset(Preset::ConstantArrivals, rates, 1).unwrap();
            let r = steady_state(&p, 1.0).unwrap().root;
            assert!(r > 0.0 && r < last);
            last = r;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn fourth_order_convergence() {
        let p = preset(Preset::ConstantArrivals);
        // past t ~ 5 the path sits at the root and the error is roundoff
        let ratio = step_halving_ratio(&p, 0.0, 2.0, 0.025).unwrap();
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn sweep_points() {
        assert_eq!(linspace(0.5, 6.0, 12)[1], 1.0);
        let pts = sweep_lambda_b(Preset::ConstantArrivals, PresetRates::FIGURE, &[3.0]).unwrap();
        let ys = steady_state(&preset(Preset::ConstantArrivals), 1.0).unwrap().root;
        assert_eq!(pts[0].y_s, ys);
        assert!(pts[0].residual.abs() < 1e-10);
    }

    #[test]
    fn reports_missing_root() {
        // r4 = 0 and r3 = 0: G = r1 > 0 everywhere
        let p = ModelParams::new(1, 1.0, 1.0, RateFunction::constant(1.0), RateFunction::zero(), RateFunction::zero())
            .unwrap();
        assert!(matches!(steady_state(&p, 1.0), Err(Error::NoSteadyState { .. })));
    }

    #[test]
    fn reports_additional_roots() {
        // with lambda tiny, G(y) ~ r1(y) - y = 0.3 + cos(3y) - 0.2y, which
        // crosses zero several times before 8
        let r1 = RateFunction::new("wavy", |y: f64| 0.8 * y + 0.3 + (3.0 * y).cos());
        let p = ModelParams::new(1, 1e-9, 1.0, r1, RateFunction::linear(1.0), RateFunction::zero()).unwrap();
        let s = steady_state(&p, 8.0).unwrap();
        assert!(drift(&p, s.root).abs() < 1e-10);
        assert!(s.root < 1.0);
        assert!(s.extra_sign_changes >= 4, "{s:?}");
    }
}
