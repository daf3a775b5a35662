//! Monte Carlo ensembles and the tests that compare them with the limits.

use crate::error::{Error, Result};
use crate::fluid::{FluidSolution, SweepPoint};
use crate::gillespie::{empirical_mgf, simulate_on_grid, HittingSample, OccupationMeasure, SimOptions};
use crate::model::{pi_pmf, ModelParams, State};
use crate::rng::{replicate, stream_rng};

/// Guard added to the FLLN band.
pub const FLLN_GUARD: f64 = 1e-3;

/// Outcome of one statistical or numerical check. One-sided:
/// `passed == (statistic <= threshold)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub details: String,
}

impl TestReport {
    pub fn one_sided(name: impl Into<String>, statistic: f64, threshold: f64, details: impl Into<String>) -> Self {
        Self { name: name.into(), statistic, threshold, passed: statistic <= threshold, details: details.into() }
    }
}

/// Streaming mean and variance (Welford), mergeable across partial sums.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Self { count, mean, m2 }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }
}

impl FromIterator<f64> for RunningMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Self::default();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// Ensemble statistics of the scaled message queue `Y_A` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub replications: usize,
    /// `Y_A(t_end)` of each replication, in stream order.
    pub terminal_samples: Vec<f64>,
    /// Scale parameter of the model that generated the ensemble.
    pub n: u64,
}

/// `R` independent paths from `(0, 0)` on streams `0..R` of `seed`.
pub fn ensemble(p: &ModelParams, t_end: f64, grid: &[f64], replications: usize, seed: u64) -> Result<EnsembleSummary> {
    ensemble_from(p, State::default(), t_end, grid, replications, seed)
}

pub fn ensemble_from(
    p: &ModelParams,
    init: State,
    t_end: f64,
    grid: &[f64],
    replications: usize,
    seed: u64,
) -> Result<EnsembleSummary> {
    run_ensemble(p, init, t_end, grid, replications, seed, false).map(|(es, _)| es)
}

/// As [`ensemble_from`], also returning each replication's grid samples.
pub fn ensemble_with_paths(
    p: &ModelParams,
    init: State,
    t_end: f64,
    grid: &[f64],
    replications: usize,
    seed: u64,
) -> Result<(EnsembleSummary, Vec<Vec<State>>)> {
    run_ensemble(p, init, t_end, grid, replications, seed, true)
}

fn run_ensemble(
    p: &ModelParams,
    init: State,
    t_end: f64,
    grid: &[f64],
    replications: usize,
    seed: u64,
    keep_paths: bool,
) -> Result<(EnsembleSummary, Vec<Vec<State>>)> {
    if replications < 2 {
        return Err(Error::invalid("R", "an ensemble needs at least 2 replications"));
    }
    let n = p.n();
    let runs = replicate(replications, |r| {
        let mut rng = stream_rng(seed, r as u64);
        simulate_on_grid(p, t_end, init, grid, &mut rng, SimOptions::default())
    });
    let mut moments = vec![RunningMoments::default(); grid.len()];
    let mut terminal_samples = Vec::with_capacity(replications);
    let mut paths = Vec::new();
    for run in runs {
        let (samples, summary) = run?;
        for (m, s) in moments.iter_mut().zip(&samples) {
            m.push(s.scaled(n).y1);
        }
        terminal_samples.push(summary.final_state.scaled(n).y1);
        if keep_paths {
            paths.push(samples);
        }
    }
    let es = EnsembleSummary {
        grid: grid.to_vec(),
        mean: moments.iter().map(|m| m.mean).collect(),
        sd: moments.iter().map(RunningMoments::sd).collect(),
        replications,
        terminal_samples,
        n,
    };
    Ok((es, paths))
}

/// Largest deviation of the ensemble mean from the fluid path, in units of
/// the band `3 sd / sqrt(R) + 10 / sqrt(n) + 1e-3`.
pub fn flln_error(es: &EnsembleSummary, fs: &FluidSolution) -> Result<TestReport> {
    if es.grid.len() != fs.grid.len() || es.grid.iter().zip(&fs.grid).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::GridMismatch("ensemble and fluid grids differ".into()));
    }
    let root_r = (es.replications as f64).sqrt();
    let slack = 10.0 / (es.n as f64).sqrt() + FLLN_GUARD;
    let mut worst = (0.0, 0.0);
    for i in 0..es.grid.len() {
        let band = 3.0 * es.sd[i] / root_r + slack;
        let z = (es.mean[i] - fs.values[i]).abs() / band;
        if z > worst.0 {
            worst = (z, es.grid[i]);
        }
    }
    Ok(TestReport::one_sided(
        "flln_error",
        worst.0,
        1.0,
        format!("n={} R={} worst at t={}", es.n, es.replications, worst.1),
    ))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// One-sample Kolmogorov-Smirnov statistic against `N(0, variance)`.
pub fn ks_statistic(samples: &[f64], variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::invalid("variance", format!("must be positive, got {variance}")));
    }
    if samples.is_empty() {
        return Err(Error::invalid("samples", "empty sample"));
    }
    let sd = variance.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| x / sd).collect();
    z.sort_by(f64::total_cmp);
    let r = z.len() as f64;
    Ok(z.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / r).max((i + 1) as f64 / r - f)
        })
        .fold(0.0, f64::max))
}

/// Asymptotic Kolmogorov critical constant `c(alpha)` with
/// `P(sqrt(R) D > c) = alpha`, rounded to three decimals as in the usual
/// tables (`c(0.01) = 1.628`).
pub fn ks_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    Ok((c * 1000.0).round() / 1000.0)
}

/// KS test of the samples against `N(0, variance)` at level 0.01.
pub fn ks_gaussian(samples: &[f64], variance: f64) -> Result<TestReport> {
    ks_gaussian_at(samples, variance, 0.01)
}

pub fn ks_gaussian_at(samples: &[f64], variance: f64, alpha: f64) -> Result<TestReport> {
    let d = ks_statistic(samples, variance)?;
    let r = samples.len();
    Ok(TestReport::one_sided(
        "ks_gaussian",
        d,
        ks_critical(alpha)? / (r as f64).sqrt(),
        format!("R={r} variance={variance} alpha={alpha}"),
    ))
}

/// Total variation distance between the occupation fractions and the
/// frozen stationary law at `y1_ref`.
pub fn tv_distance(om: &OccupationMeasure, p: &ModelParams, y1_ref: f64) -> f64 {
    let top = om.weights.keys().next_back().copied().unwrap_or(0);
    // keep summing the reference law until its remaining mass is negligible
    let mut sum = 0.0;
    let mut covered = 0.0;
    let mut k = 0u64;
    while k <= top || 1.0 - covered > 1e-15 {
        let pk = pi_pmf(p, y1_ref, k);
        covered += pk;
        sum += (om.fraction(k) - pk).abs();
        k += 1;
        if k > top && pk == 0.0 {
            break;
        }
    }
    0.5 * sum
}

pub fn tv_occupation(om: &OccupationMeasure, p: &ModelParams, y1_ref: f64, threshold: f64) -> TestReport {
    TestReport::one_sided(
        "tv_occupation",
        tv_distance(om, p, y1_ref),
        threshold,
        format!("window [{}, {}] y1_ref={y1_ref}", om.from, om.to),
    )
}

/// `|ln(sample variance / reference)|` against `ln(bound)`, i.e. the ratio
/// must lie in `[1/bound, bound]`.
pub fn variance_ratio(samples: &[f64], reference: f64, bound: f64) -> TestReport {
    let m: RunningMoments = samples.iter().copied().collect();
    let ratio = m.variance() / reference;
    TestReport::one_sided(
        "variance_ratio",
        ratio.ln().abs(),
        bound.ln(),
        format!("ratio={ratio} sample_var={} reference={reference}", m.variance()),
    )
}

/// Sample variance versus a reference value in units of the sample
/// variance's standard error.
pub fn variance_z(samples: &[f64], reference: f64, sigmas: f64) -> TestReport {
    let m: RunningMoments = samples.iter().copied().collect();
    let r = samples.len() as f64;
    // SE of the sample variance: sqrt((mu4 - s^4 (r-3)/(r-1)) / r)
    let mu4 = samples.iter().map(|x| (x - m.mean).powi(4)).sum::<f64>() / r;
    let s2 = m.variance();
    let se = ((mu4 - s2 * s2 * (r - 3.0) / (r - 1.0)) / r).max(0.0).sqrt();
    TestReport::one_sided(
        "variance_z",
        (s2 - reference).abs() / se,
        sigmas,
        format!("sample_var={s2} reference={reference} se={se}"),
    )
}

/// `|mean| / SE` of the samples.
pub fn mean_z(samples: &[f64], sigmas: f64) -> TestReport {
    let m: RunningMoments = samples.iter().copied().collect();
    let se = m.sd() / (samples.len() as f64).sqrt();
    TestReport::one_sided("mean_z", m.mean.abs() / se, sigmas, format!("mean={} se={se}", m.mean))
}

/// Empirical `E exp(-beta tau_k)` against the bound plus `sigmas` SE.
pub fn mgf_report(samples: &[HittingSample], beta: f64, bound: f64, sigmas: f64) -> TestReport {
    let (mean, se) = empirical_mgf(samples, beta);
    let censored = samples.iter().filter(|s| s.censored).count();
    let level = samples.first().map_or(0, |s| s.level);
    TestReport::one_sided(
        format!("mgf_bound_k{level}"),
        mean,
        bound + sigmas * se,
        format!("bound={bound} se={se} censored={censored} R={}", samples.len()),
    )
}

/// Largest increase of `y_s` between consecutive sweep points; zero or
/// negative for a nonincreasing sweep.
pub fn sweep_monotone(points: &[SweepPoint], label: &str) -> TestReport {
    let rise = points.windows(2).map(|w| w[1].y_s - w[0].y_s).fold(f64::NEG_INFINITY, f64::max);
    TestReport::one_sided(format!("sweep_monotone_{label}"), rise, 0.0, format!("{} points", points.len()))
}

/// Largest `|G(y_s)|` over the sweep.
pub fn sweep_residual(points: &[SweepPoint], label: &str, tol: f64) -> TestReport {
    let worst = points.iter().map(|q| q.residual.abs()).fold(0.0, f64::max);
    TestReport::one_sided(format!("sweep_residual_{label}"), worst, tol, format!("{} points", points.len()))
}
