use eaq_core::export;
use eaq_core::fclt::{h_fn, poisson_exact, residual, sigma_f, solve_poisson, variance_density, PoissonMethod};
use eaq_core::fluid::{drift, integrate, steady_state};
use eaq_core::gillespie::{mgf_bound_ratio, sample_path, simulate};
use eaq_core::model::{m_of, pi_pmf, propensities, truncation_floor, JUMPS};
use eaq_core::stats::{ks_statistic, RunningMoments};
use eaq_core::{make_preset, ModelParams, Preset, PresetRates, State};
use proptest::prelude::*;

fn rates() -> impl Strategy<Value = PresetRates> {
    (0.2..8.0f64, 0.2..5.0f64, 0.2..6.0f64, 0.2..5.0f64, 0.1..4.0f64)
        .prop_map(|(lambda_a, mu_a, lambda_b, mu_b, speedup)| PresetRates { lambda_a, mu_a, lambda_b, mu_b, speedup })
}

fn model(n: u64) -> impl Strategy<Value = ModelParams> {
    (prop_oneof![Just(Preset::ConstantArrivals), Just(Preset::RegulatedArrivals)], rates())
        .prop_map(move |(kind, r)| make_preset(kind, r, n).unwrap())
}

/// Composite Simpson on `[a, b]` with `cells` (even) cells.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    let h = (b - a) / cells as f64;
    let inner: f64 = (1..cells).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + inner + f(b)) * h / 3.0
}

/// `int u^(alpha-1) e^(-rho u) du / int (1+u)^k u^(alpha-1) e^(-rho u) du`,
/// with `u = v^(1/alpha)` to remove the singularity at 0.
fn bound_by_quadrature(alpha: f64, rho: f64, k: u64) -> f64 {
    let mut cutoff = 50.0 / rho;
    for _ in 0..20 {
        cutoff = (50.0 + k as f64 * (1.0 + cutoff).ln()) / rho;
    }
    let top = cutoff.powf(alpha);
    let num = simpson(|v| (-rho * v.powf(1.0 / alpha)).exp(), 0.0, top, 200_000);
    let den = simpson(
        |v| {
            let u = v.powf(1.0 / alpha);
            (k as f64 * u.ln_1p() - rho * u).exp()
        },
        0.0,
        top,
        200_000,
    );
    num / den
}

#[test]
fn bound_matches_quadrature() {
    for (alpha, rho, k) in [(0.05, 1.5, 3), (0.2, 1.5, 8), (0.5, 0.7, 5), (1.0, 2.0, 4), (0.1, 3.0, 10)] {
        let series = mgf_bound_ratio(alpha, rho, k);
        let quad = bound_by_quadrature(alpha, rho, k);
        assert!((series - quad).abs() <= 1e-6 * quad, "alpha={alpha} rho={rho} k={k}: {series} vs {quad}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propensities_nonnegative_and_exclusive(p in model(50), x1 in 0u64..400, x2 in 0u64..30) {
        let a = propensities(&p, State { x1, x2 });
        prop_assert!(a.iter().all(|&r| r >= 0.0 && r.is_finite()));
        prop_assert!(!(a[2] > 0.0 && a[3] > 0.0));
    }

    #[test]
    fn propensities_scale_with_system_size(p in model(20), c in 1u64..6, x1 in 0u64..100, x2 in 0u64..10) {
        let big = p.with_n(20 * c).unwrap();
        let a = propensities(&p, State { x1, x2 });
        let b = propensities(&big, State { x1: c * x1, x2 });
        for i in 0..5 {
            prop_assert!((b[i] - c as f64 * a[i]).abs() <= 1e-9 * b[i].abs().max(1.0));
        }
    }

    #[test]
    fn frozen_law_normalised_and_centered(p in model(1), y1 in 0.0..10.0f64) {
        let m = m_of(&p, y1);
        let k = truncation_floor(m) as u64;
        let mass: f64 = (0..=k).map(|j| pi_pmf(&p, y1, j)).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        let mean: f64 = (0..=k).map(|j| j as f64 * pi_pmf(&p, y1, j)).sum();
        prop_assert!((mean - m).abs() < 1e-10);
        let centered: f64 = (0..=k).map(|j| pi_pmf(&p, y1, j) * h_fn(&p, y1, j)).sum();
        prop_assert!(centered.abs() < 1e-10);
    }

    #[test]
    fn mean_decreases_with_message_backlog(p in model(1), y in 0.0..10.0f64, dy in 1e-3..5.0f64) {
        prop_assert!(m_of(&p, y + dy) <= m_of(&p, y));
        prop_assert!(m_of(&p, 0.0) == p.lambda() / p.mu());
    }

    #[test]
    fn exact_poisson_residuals(p in model(1), y1 in 0.0..8.0f64, extra in 0usize..20) {
        let k = truncation_floor(m_of(&p, y1)) + extra;
        let sol = poisson_exact(&p, y1, k).unwrap();
        prop_assert_eq!(sol.values[0], 0.0);
        for j in 0..k {
            let r = residual(&p, &sol, j).unwrap();
            prop_assert!(r.abs() <= 1e-10, "k={} r={}", j, r);
        }
    }

    #[test]
    fn variance_density_gauge_invariant(p in model(1), y1 in 0.0..8.0f64, shift in -50.0..50.0f64) {
        let k = truncation_floor(p.lambda() / p.mu());
        for method in [PoissonMethod::ClosedForm, PoissonMethod::ExactRecursion] {
            let sol = solve_poisson(&p, y1, k, method).unwrap();
            let g = variance_density(&p, &sol).unwrap();
            prop_assert!(g > 0.0);
            let moved = variance_density(&p, &sol.shifted(shift)).unwrap();
            prop_assert!((g - moved).abs() <= 1e-11 * g);
        }
    }

    #[test]
    fn variance_profile_monotone(p in model(1), y0 in 0.0..4.0f64) {
        let fs = integrate(&p, y0, 3.0, 1e-2).unwrap();
        let k = truncation_floor(p.lambda() / p.mu());
        let prof = sigma_f(&p, &fs, k, PoissonMethod::ExactRecursion).unwrap();
        prop_assert_eq!(prof.cumulative[0], 0.0);
        prop_assert!(prof.density.iter().all(|&g| g >= 0.0));
        prop_assert!(prof.cumulative.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn fluid_stays_between_start_and_root(p in model(1), y0 in 0.0..6.0f64) {
        // G has a single sign change for the presets, so paths are monotone
        let ys = steady_state(&p, 1.0).unwrap().root;
        prop_assert!(drift(&p, ys).abs() < 1e-9);
        let fs = integrate(&p, y0, 5.0, 1e-2).unwrap();
        let (lo, hi) = (y0.min(ys) - 1e-9, y0.max(ys) + 1e-9);
        prop_assert!(fs.values.iter().all(|&y| y >= lo && y <= hi));
    }

    #[test]
    fn bound_in_unit_interval_and_decreasing(alpha in 1e-4..3.0f64, rho in 0.05..20.0f64, k in 1u64..40) {
        let b = mgf_bound_ratio(alpha, rho, k);
        prop_assert!(b > 0.0 && b < 1.0);
        prop_assert!(mgf_bound_ratio(alpha, rho, k + 1) < b);
        prop_assert_eq!(mgf_bound_ratio(alpha, rho, 0), 1.0);
    }

    #[test]
    fn paths_are_valid(p in model(5), seed in any::<u64>(), x1 in 0u64..20, x2 in 0u64..5) {
        let init = State { x1, x2 };
        let tr = simulate(&p, 2.0, init, seed).unwrap();
        prop_assert_eq!(tr.states()[0], init);
        prop_assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
        for w in tr.states().windows(2) {
            let d = (w[1].x1 as i64 - w[0].x1 as i64, w[1].x2 as i64 - w[0].x2 as i64);
            prop_assert!(JUMPS.contains(&d));
        }
        let grid = [0.0, 0.5, 1.0, 2.0];
        let sampled = sample_path(&tr, &grid).unwrap();
        prop_assert_eq!(sampled[0], init.scaled(5));
    }

    #[test]
    fn moments_merge_in_any_split(xs in prop::collection::vec(-1e3..1e3f64, 2..60), cut in 0usize..60) {
        let cut = cut.min(xs.len());
        let whole: RunningMoments = xs.iter().copied().collect();
        let a: RunningMoments = xs[..cut].iter().copied().collect();
        let b: RunningMoments = xs[cut..].iter().copied().collect();
        let m = a.merge(&b);
        prop_assert!((m.mean - whole.mean).abs() <= 1e-9 * (1.0 + whole.mean.abs()));
        prop_assert!((m.variance() - whole.variance()).abs() <= 1e-8 * (1.0 + whole.variance()));
    }

    #[test]
    fn ks_statistic_bounds(xs in prop::collection::vec(-5.0..5.0f64, 1..200), var in 0.1..10.0f64) {
        let d = ks_statistic(&xs, var).unwrap();
        prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-15 && d <= 1.0);
    }

    #[test]
    fn exported_reals_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(export::real(x).parse::<f64>().unwrap(), x);
    }
}
