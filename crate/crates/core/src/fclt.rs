//! Gaussian fluctuations around the fluid limit.
//!
//! `W_n = sqrt(n) (Y_A - y_A)` converges to the solution of
//! `dW = G'(y_A(t)) W dt + sqrt(g(t)) dB`, where the variance density `g` is
//! built from the solution `F` of the Poisson equation `B_{y1} F = -h_{y1}`
//! for the frozen fast-queue generator. The cumulative
//! `sigma_F(t) = int_0^t g(s) ds` is the quadratic variation of the
//! martingale part, so the stochastic integral uses the density `g`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fluid::{drift_derivative, FluidSolution};
use crate::model::{m_of, poisson_pmf, truncation_floor, ModelParams};
use crate::rng::{replicate, stream_rng};

/// Largest truncated Poisson tail mass tolerated in the variance sums.
pub const TAIL_MASS_LIMIT: f64 = 1e-10;

/// Centered rate fluctuation of the message queue with the slow variable
/// frozen at `y1`:
/// `h(y2) = r3 (1{y2 = 0} - exp(-m)) + r4 (y2 - m)`.
pub fn h_fn(p: &ModelParams, y1: f64, y2: u64) -> f64 {
    let m = m_of(p, y1);
    let ind = if y2 == 0 { 1.0 } else { 0.0 };
    p.r3().eval(y1) * (ind - (-m).exp()) + p.r4().eval(y1) * (y2 as f64 - m)
}

/// The fast-queue generator with the slow variable frozen: births at rate
/// `lambda`, deaths at rate `(r4(y1) + mu) y2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenGenerator {
    pub y1: f64,
    pub birth: f64,
    pub death_slope: f64,
}

impl FrozenGenerator {
    pub fn new(p: &ModelParams, y1: f64) -> Self {
        Self { y1, birth: p.lambda(), death_slope: p.r4().eval(y1) + p.mu() }
    }

    pub fn mean(&self) -> f64 {
        self.birth / self.death_slope
    }

    pub fn stationary(&self, k: u64) -> f64 {
        poisson_pmf(self.mean(), k)
    }

    /// `(B f)(k)` for `f` given on `0..=K`; needs `k < K`.
    pub fn apply(&self, f: &[f64], k: usize) -> f64 {
        let up = self.birth * (f[k + 1] - f[k]);
        if k == 0 {
            up
        } else {
            up + self.death_slope * k as f64 * (f[k - 1] - f[k])
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoissonMethod {
    /// The ansatz `F(y2) = u1 1{y2 = 0} + u2 y2`, with `(u1, u2)` fitted to
    /// the `y2 = 0` and `y2 = 1` equations.
    ClosedForm,
    /// Exact solution of the truncated birth-death equations.
    ExactRecursion,
}

/// A solution `F(y1, .)` of the frozen Poisson equation on `0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonSolution {
    pub y1: f64,
    pub truncation: usize,
    pub values: Vec<f64>,
    pub method: PoissonMethod,
    /// `(u1, u2)` for the closed form.
    pub coefficients: Option<(f64, f64)>,
}

impl PoissonSolution {
    /// The same solution shifted by a constant.
    pub fn shifted(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v + c).collect(), ..self.clone() }
    }
}

/// Coefficients `(u1, u2)` of the closed-form ansatz, from the linear pair
///
/// ```text
/// lambda (u2 - u1)                   = -r3 (1 - e^-m) + r4 m
/// lambda u2 + (r4 + mu)(u1 - u2)     =  r3 e^-m - r4 (1 - m)
/// ```
///
/// (the Poisson equation at `y2 = 0` and `y2 = 1`), solved by Cramer's rule.
pub fn closed_form_coefficients(p: &ModelParams, y1: f64) -> Result<(f64, f64)> {
    let m = m_of(p, y1);
    let e = (-m).exp();
    let (lambda, r3, r4) = (p.lambda(), p.r3().eval(y1), p.r4().eval(y1));
    let d = r4 + p.mu();
    // [-lambda, lambda; d, lambda - d] (u1, u2)^T = (b1, b2)^T
    let (a11, a12, a21, a22) = (-lambda, lambda, d, lambda - d);
    let b1 = -r3 * (1.0 - e) + r4 * m;
    let b2 = r3 * e - r4 * (1.0 - m);
    let det = a11 * a22 - a12 * a21;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Singular { det });
    }
    let u1 = (b1 * a22 - a12 * b2) / det;
    let u2 = (a11 * b2 - b1 * a21) / det;
    Ok((u1, u2))
}

/// Closed-form ansatz evaluated on `0..=K`. It satisfies the equations at
/// `y2 = 0, 1` and, when `r3(y1) exp(-m(y1)) != 0`, fails them for `y2 >= 2`.
pub fn poisson_closed(p: &ModelParams, y1: f64, truncation: usize) -> Result<PoissonSolution> {
    if truncation < 2 {
        return Err(Error::invalid("K", "closed form needs K >= 2"));
    }
    let (u1, u2) = closed_form_coefficients(p, y1)?;
    let values = (0..=truncation).map(|k| if k == 0 { u1 } else { u2 * k as f64 }).collect();
    Ok(PoissonSolution { y1, truncation, values, method: PoissonMethod::ClosedForm, coefficients: Some((u1, u2)) })
}

/// Exact solution on `0..=K`, normalised by `F(0) = 0`.
///
/// The equation at `k` ties the increments `d(k) = F(k+1) - F(k)` together:
/// `lambda d(k) - (r4 + mu) k d(k-1) + h(k) = 0`. Up to the mean it is run
/// forward from `d(0) = -h(0) / lambda`; above the mean it is run backward,
/// `d(k-1) = (m / k) (d(k) + h(k) / lambda)`, from far beyond `K`. Both
/// directions contract, and the backward start is forgotten geometrically,
/// so the result is the bounded solution of the untruncated equation.
pub fn poisson_exact(p: &ModelParams, y1: f64, truncation: usize) -> Result<PoissonSolution> {
    let gen = FrozenGenerator::new(p, y1);
    let m = gen.mean();
    let floor = truncation_floor(m);
    if truncation < floor {
        return Err(Error::TruncationTooSmall { k: truncation, floor, mean: m });
    }
    let h = |k: usize| h_fn(p, y1, k as u64);
    let switch = (m.floor() as usize).min(truncation - 1);

    let mut increments = vec![0.0; truncation];
    increments[0] = -h(0) / gen.birth;
    for k in 1..=switch {
        increments[k] = (k as f64 / m) * increments[k - 1] - h(k) / gen.birth;
    }

    // start where the accumulated contraction has erased the initial guess
    let mut start = truncation;
    let mut damping = 1.0;
    while damping > 1e-20 {
        start += 1;
        damping *= m / start as f64;
    }
    let mut d = p.r4().eval(y1) / gen.death_slope; // large-k limit
    for k in (switch + 2..=start).rev() {
        d = (m / k as f64) * (d + h(k) / gen.birth);
        if k - 1 < truncation {
            increments[k - 1] = d;
        }
    }

    let mut values = Vec::with_capacity(truncation + 1);
    let mut acc = 0.0;
    values.push(acc);
    for d in &increments {
        acc += d;
        values.push(acc);
    }
    Ok(PoissonSolution { y1, truncation, values, method: PoissonMethod::ExactRecursion, coefficients: None })
}

/// Solution by the requested method.
pub fn solve_poisson(p: &ModelParams, y1: f64, truncation: usize, method: PoissonMethod) -> Result<PoissonSolution> {
    match method {
        PoissonMethod::ClosedForm => poisson_closed(p, y1, truncation),
        PoissonMethod::ExactRecursion => poisson_exact(p, y1, truncation),
    }
}

/// `(B_{y1} F)(k) + h_{y1}(k)`; defined for `k < K`.
pub fn residual(p: &ModelParams, sol: &PoissonSolution, k: usize) -> Result<f64> {
    if k >= sol.truncation {
        return Err(Error::BoundaryResidual { k });
    }
    let gen = FrozenGenerator::new(p, sol.y1);
    Ok(gen.apply(&sol.values, k) + h_fn(p, sol.y1, k as u64))
}

/// Mass of the frozen stationary law above `truncation`.
pub fn tail_mass(m: f64, truncation: usize) -> f64 {
    let mut mass = 0.0;
    let mut k = truncation as u64 + 1;
    loop {
        let term = poisson_pmf(m, k);
        mass += term;
        if term < 1e-300 || (k as f64 > m && term < mass * 1e-17) {
            return mass;
        }
        k += 1;
    }
}

/// Variance density `g` at slow state `y1` for a Poisson solution `F`:
///
/// ```text
/// g = r1 + r3 e^-m
///   + sum_z (F(z-1) - F(z) + 1)^2 r4 z pi(z)
///   + lambda sum_z (F(z+1) - F(z))^2 pi(z)
///   + mu     sum_z (F(z-1) - F(z))^2 z pi(z)
/// ```
pub fn variance_density(p: &ModelParams, sol: &PoissonSolution) -> Result<f64> {
    let y1 = sol.y1;
    let gen = FrozenGenerator::new(p, y1);
    let m = gen.mean();
    let k_max = sol.truncation;
    let tail = tail_mass(m, k_max);
    if tail > TAIL_MASS_LIMIT {
        return Err(Error::TailMass { mass: tail, limit: TAIL_MASS_LIMIT, k: k_max });
    }
    let f = &sol.values;
    let (r1, r3, r4) = (p.r1().eval(y1), p.r3().eval(y1), p.r4().eval(y1));
    let mut g = r1 + r3 * (-m).exp();
    let (mut joint, mut births, mut decays) = (0.0, 0.0, 0.0);
    for z in 0..=k_max {
        let pz = gen.stationary(z as u64);
        if z < k_max {
            let up = f[z + 1] - f[z];
            births += up * up * pz;
        }
        if z > 0 {
            let down = f[z - 1] - f[z];
            let zf = z as f64;
            joint += (down + 1.0) * (down + 1.0) * zf * pz;
            decays += down * down * zf * pz;
        }
    }
    g += r4 * joint + gen.birth * births + p.mu() * decays;
    Ok(g)
}

/// The variance density written out for the closed-form ansatz, in terms of
/// `pi(0)`, `pi(1)`, `pi([1, inf)) = 1 - pi(0)` and `m`.
pub fn closed_form_density(p: &ModelParams, y1: f64) -> Result<f64> {
    let (u1, u2) = closed_form_coefficients(p, y1)?;
    let m = m_of(p, y1);
    let (pi0, pi1) = (poisson_pmf(m, 0), poisson_pmf(m, 1));
    let (r1, r3, r4) = (p.r1().eval(y1), p.r3().eval(y1), p.r4().eval(y1));
    let joint = (u1 - u2 + 1.0).powi(2) * pi1 + (1.0 - u2).powi(2) * (m - pi1);
    let births = (u2 - u1).powi(2) * pi0 + u2 * u2 * (1.0 - pi0);
    let decays = (u1 - u2).powi(2) * pi1 + u2 * u2 * (m - pi1);
    Ok(r1 + r3 * (-m).exp() + joint * r4 + p.lambda() * births + p.mu() * decays)
}

/// Variance density `g` and its running integral along a fluid solution.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaFProfile {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl SigmaFProfile {
    /// Builds the profile from densities by the trapezoid rule.
    pub fn from_density(grid: Vec<f64>, density: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 1..grid.len() {
            acc += 0.5 * (grid[i] - grid[i - 1]) * (density[i] + density[i - 1]);
            cumulative.push(acc);
        }
        Self { grid, density, cumulative }
    }
}

/// Truncation large enough for every `y1`: `m(y1) <= lambda / mu`.
pub fn default_truncation(p: &ModelParams) -> usize {
    truncation_floor(p.lambda() / p.mu())
}

/// Variance profile along `fs`, with `F` from `method` at each grid point.
pub fn sigma_f(p: &ModelParams, fs: &FluidSolution, truncation: usize, method: PoissonMethod) -> Result<SigmaFProfile> {
    let density = fs
        .values
        .iter()
        .map(|&y| variance_density(p, &solve_poisson(p, y, truncation, method)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(SigmaFProfile::from_density(fs.grid.clone(), density))
}

/// Largest pointwise relative difference between two variance profiles.
pub fn max_relative_gap(a: &SigmaFProfile, b: &SigmaFProfile) -> f64 {
    a.density
        .iter()
        .zip(&b.density)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn check_same_grid(fs: &FluidSolution, prof: &SigmaFProfile) -> Result<()> {
    if fs.grid.len() != prof.grid.len() || fs.grid.iter().zip(&prof.grid).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::GridMismatch("fluid solution and variance profile differ".into()));
    }
    Ok(())
}

/// `Var W(t_i)` at every grid point:
/// `int_0^t exp(2 int_s^t G'(y_A(u)) du) g(s) ds`, by the trapezoid rule on
/// the fluid grid.
pub fn var_w_profile(p: &ModelParams, fs: &FluidSolution, prof: &SigmaFProfile) -> Result<Vec<f64>> {
    check_same_grid(fs, prof)?;
    let slope: Vec<f64> = fs.values.iter().map(|&y| drift_derivative(p, y)).collect();
    let mut out = Vec::with_capacity(fs.len());
    let mut v = 0.0;
    out.push(v);
    for i in 1..fs.len() {
        let h = fs.grid[i] - fs.grid[i - 1];
        let growth = (h * (slope[i] + slope[i - 1])).exp(); // exp(2 int over the step)
        v = growth * v + 0.5 * h * (growth * prof.density[i - 1] + prof.density[i]);
        out.push(v);
    }
    Ok(out)
}

/// `Var W(t)`, linearly interpolated between grid points.
pub fn var_w(p: &ModelParams, fs: &FluidSolution, prof: &SigmaFProfile, t: f64) -> Result<f64> {
    let horizon = fs.horizon();
    if !(0.0..=horizon + 1e-12).contains(&t) {
        return Err(Error::OutsideHorizon { time: t, horizon });
    }
    let profile = var_w_profile(p, fs, prof)?;
    let as_fluid = FluidSolution { grid: fs.grid.clone(), values: profile, dt: fs.dt };
    Ok(as_fluid.value_at(t))
}

/// A sample of the limiting fluctuation process on the fluid grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FluctuationPath {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Realised quadratic variation of the noise term up to each grid point.
    pub quadratic_variation: Vec<f64>,
}

struct EulerPlan {
    substeps: usize,
    slope: Vec<f64>,
}

fn plan(p: &ModelParams, fs: &FluidSolution, prof: &SigmaFProfile, dt: f64) -> Result<EulerPlan> {
    check_same_grid(fs, prof)?;
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let spacing = fs.grid.get(1).map(|g| g - fs.grid[0]).unwrap_or(dt);
    let ratio = spacing / dt;
    let substeps = ratio.round();
    if substeps < 1.0 || (ratio - substeps).abs() > 1e-6 * ratio {
        return Err(Error::invalid("dt", format!("must divide the grid spacing {spacing}")));
    }
    let uniform = fs.grid.windows(2).all(|w| ((w[1] - w[0]) - spacing).abs() <= 1e-9 * spacing.max(1.0));
    if !uniform {
        return Err(Error::invalid("grid", "Euler-Maruyama needs a uniform fluid grid"));
    }
    let slope = fs.values.iter().map(|&y| drift_derivative(p, y)).collect();
    Ok(EulerPlan { substeps: substeps as usize, slope })
}

fn euler_path(
    plan: &EulerPlan,
    fs: &FluidSolution,
    prof: &SigmaFProfile,
    rng: &mut impl Rng,
) -> Result<FluctuationPath> {
    let mut w = 0.0;
    let mut qv = 0.0;
    let mut values = Vec::with_capacity(fs.len());
    let mut qvs = Vec::with_capacity(fs.len());
    values.push(w);
    qvs.push(qv);
    for i in 1..fs.len() {
        let h = (fs.grid[i] - fs.grid[i - 1]) / plan.substeps as f64;
        for j in 0..plan.substeps {
            // coefficients interpolated linearly inside the grid cell
            let frac = j as f64 / plan.substeps as f64;
            let a = plan.slope[i - 1] * (1.0 - frac) + plan.slope[i] * frac;
            let g = prof.density[i - 1] * (1.0 - frac) + prof.density[i] * frac;
            let z: f64 = rng.sample(StandardNormal);
            let noise = (g.max(0.0) * h).sqrt() * z;
            w += a * w * h + noise;
            qv += noise * noise;
        }
        if !w.is_finite() {
            return Err(Error::NonFinite { context: "fluctuation SDE", time: fs.grid[i] });
        }
        values.push(w);
        qvs.push(qv);
    }
    Ok(FluctuationPath { grid: fs.grid.clone(), values, quadratic_variation: qvs })
}

/// Euler-Maruyama path of the limiting fluctuation process with step `dt`
/// (which must divide the fluid grid spacing).
pub fn simulate_w(
    p: &ModelParams,
    fs: &FluidSolution,
    prof: &SigmaFProfile,
    dt: f64,
    seed: u64,
) -> Result<FluctuationPath> {
    let plan = plan(p, fs, prof, dt)?;
    euler_path(&plan, fs, prof, &mut stream_rng(seed, 0))
}

/// Terminal values `W(T)` of `replications` independent paths.
pub fn simulate_w_terminal(
    p: &ModelParams,
    fs: &FluidSolution,
    prof: &SigmaFProfile,
    dt: f64,
    replications: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let plan = plan(p, fs, prof, dt)?;
    replicate(replications, |r| {
        euler_path(&plan, fs, prof, &mut stream_rng(seed, r as u64)).map(|path| *path.values.last().unwrap())
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::integrate;
    use crate::model::{make_preset, pi_pmf, Preset, PresetRates, RateFunction};

    fn preset(kind: Preset) -> ModelParams {
        make_preset(kind, PresetRates::FIGURE, 1000).unwrap()
    }

    fn linear_only() -> ModelParams {
        ModelParams::new(1000, 3.0, 2.0, RateFunction::constant(5.0), RateFunction::zero(), RateFunction::linear(4.0))
            .unwrap()
    }

    fn inert() -> ModelParams {
        ModelParams::new(1000, 3.0, 2.0, RateFunction::constant(2.5), RateFunction::zero(), RateFunction::zero())
            .unwrap()
    }

    #[test]
    fn h_hand_value_and_centering() {
        let p = preset(Preset::ConstantArrivals);
        let expect = 2.0 * (1.0 - (-0.5f64).exp()) - 2.0;
        assert!((h_fn(&p, 1.0, 0) - expect).abs() < 1e-14);
        assert!((h_fn(&p, 1.0, 0) + 1.21306).abs() < 1e-5);
        for y1 in [0.0, 0.1, 1.0, 3.0] {
            let s: f64 = (0..80).map(|k| pi_pmf(&p, y1, k) * h_fn(&p, y1, k)).sum();
            assert!(s.abs() < 1e-10, "y1={y1}: {s}");
        }
        assert!((0..10).all(|k| h_fn(&inert(), 1.3, k) == 0.0));
    }

    #[test]
    fn closed_form_solves_its_two_equations() {
        let p = preset(Preset::ConstantArrivals);
        let (u1, u2) = closed_form_coefficients(&p, 1.0).unwrap();
        let m = 0.5f64;
        let e = (-m).exp();
        let (r3, r4, lambda, d) = (2.0, 4.0, 3.0, 6.0);
        assert!((lambda * (u2 - u1) - (-r3 * (1.0 - e) + r4 * m)).abs() < 1e-12);
        assert!((lambda * u2 + d * (u1 - u2) - (r3 * e - r4 * (1.0 - m))).abs() < 1e-12);
        let sol = poisson_closed(&p, 1.0, 30).unwrap();
        assert!(residual(&p, &sol, 0).unwrap().abs() < 1e-10);
        assert!(residual(&p, &sol, 1).unwrap().abs() < 1e-10);
        assert!(residual(&p, &sol, 2).unwrap().abs() > 1e-3);
    }

    #[test]
    fn linear_special_case() {
        let p = linear_only();
        let y1 = 0.7;
        let r4 = 4.0 * y1;
        let slope = r4 / (r4 + 2.0);
        let closed = poisson_closed(&p, y1, 40).unwrap();
        let (u1, u2) = closed.coefficients.unwrap();
        assert!(u1.abs() < 1e-14);
        assert!((u2 - slope).abs() < 1e-14);
        let exact = poisson_exact(&p, y1, 40).unwrap();
        for k in 0..40 {
            assert!(residual(&p, &closed, k).unwrap().abs() < 1e-10);
            assert!((closed.values[k] - closed.values[0] - exact.values[k]).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn exact_solver_first_increment_and_residuals() {
        let p = preset(Preset::ConstantArrivals);
        let sol = poisson_exact(&p, 1.0, 40).unwrap();
        assert_eq!(sol.values[0], 0.0);
        assert_eq!(sol.values[1] - sol.values[0], -h_fn(&p, 1.0, 0) / 3.0);
        for k in 0..40 {
            let r = residual(&p, &sol, k).unwrap();
            assert!(r.abs() <= 1e-10, "k={k}: {r}");
        }
        assert!(matches!(residual(&p, &sol, 40), Err(Error::BoundaryResidual { k: 40 })));
        assert!(matches!(poisson_exact(&p, 1.0, 5), Err(Error::TruncationTooSmall { .. })));
    }

    #[test]
    fn inert_model_has_zero_solution() {
        let p = inert();
        assert!(poisson_closed(&p, 1.0, 40).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(poisson_exact(&p, 1.0, 40).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gauge_invariance() {
        let p = preset(Preset::ConstantArrivals);
        for method in [PoissonMethod::ClosedForm, PoissonMethod::ExactRecursion] {
            let sol = solve_poisson(&p, 1.2, 40, method).unwrap();
            let a = variance_density(&p, &sol).unwrap();
            let b = variance_density(&p, &sol.shifted(7.3)).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs(), "{method:?}: {a} vs {b}");
        }
    }

    #[test]
    fn tail_guard() {
        let p = preset(Preset::ConstantArrivals);
        let mut sol = poisson_closed(&p, 0.0, 3).unwrap();
        sol.truncation = 3;
        assert!(matches!(variance_density(&p, &sol), Err(Error::TailMass { .. })));
    }

    #[test]
    fn inert_profile_is_linear() {
        let p = inert();
        let fs = integrate(&p, 0.0, 2.0, 1e-2).unwrap();
        let prof = sigma_f(&p, &fs, 40, PoissonMethod::ExactRecursion).unwrap();
        assert!(prof.density.iter().all(|&g| (g - 2.5).abs() < 1e-12));
        for (t, c) in prof.grid.iter().zip(&prof.cumulative) {
            assert!((c - 2.5 * t).abs() < 1e-10);
        }
    }

    #[test]
    fn var_w_of_flat_slope() {
        // G' = 0 for the inert model, so Var W(t) = c t
        let p = inert();
        let fs = integrate(&p, 0.0, 3.0, 1e-2).unwrap();
        let prof = sigma_f(&p, &fs, 40, PoissonMethod::ExactRecursion).unwrap();
        assert_eq!(var_w(&p, &fs, &prof, 0.0).unwrap(), 0.0);
        assert!((var_w(&p, &fs, &prof, 3.0).unwrap() - 7.5).abs() < 1e-9);
        assert!((var_w(&p, &fs, &prof, 1.234).unwrap() - 2.5 * 1.234).abs() < 1e-9);
    }

    #[test]
    fn zero_density_gives_zero_path() {
        let p = inert();
        let fs = integrate(&p, 0.0, 1.0, 1e-2).unwrap();
        let prof = SigmaFProfile::from_density(fs.grid.clone(), vec![0.0; fs.len()]);
        let path = simulate_w(&p, &fs, &prof, 1e-3, 3).unwrap();
        assert!(path.values.iter().all(|&w| w == 0.0));
        assert!(simulate_w(&p, &fs, &prof, 3e-3, 3).is_err());
    }

    #[test]
    fn brownian_reduction() {
        let p = inert();
        let fs = integrate(&p, 0.0, 2.0, 1e-2).unwrap();
        let prof = SigmaFProfile::from_density(fs.grid.clone(), vec![1.0; fs.len()]);
        let w = simulate_w_terminal(&p, &fs, &prof, 1e-2, 4000, 17).unwrap();
        let mean = w.iter().sum::<f64>() / 4000.0;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3999.0;
        let se = 2.0 * (2.0f64 / 3999.0).sqrt();
        assert!((var - 2.0).abs() < 3.0 * se, "{var}");
        assert!(mean.abs() < 3.0 * (2.0f64 / 4000.0).sqrt());
    }
}
