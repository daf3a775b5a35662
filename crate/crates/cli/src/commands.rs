use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use eaq_core::export;
use eaq_core::fclt::{
    closed_form_density, default_truncation, max_relative_gap, poisson_closed, poisson_exact, residual, sigma_f,
    simulate_w, simulate_w_terminal, solve_poisson, var_w_profile, variance_density, PoissonMethod,
};
use eaq_core::fluid::{
    effective_rate, integrate, integrate_on, linspace, steady_state, step_halving_ratio, sweep_lambda_b,
};
use eaq_core::gillespie::{hitting_times, mgf_bound, run_path, OccupationRecorder, SimOptions};
use eaq_core::model::truncation_floor;
use eaq_core::rng::stream_rng;
use eaq_core::stats::{
    ensemble, ensemble_with_paths, flln_error, ks_gaussian_at, mgf_report, sweep_monotone, sweep_residual,
    tv_occupation, variance_ratio, variance_z, TestReport,
};
use eaq_core::{ModelParams, Preset, PresetRates, State};

use crate::config::RunConfig;

/// Size of the hitting-time check, fixed by the bound it tests.
pub const LEMMA_N: u64 = 100;
pub const LEMMA_REPLICATIONS: usize = 2000;
pub const LEMMA_LEVELS: [u64; 3] = [3, 5, 8];
const LEMMA_HORIZON: f64 = 50.0;
const SDE_PATHS: usize = 10_000;
const POISSON_POINTS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Simulate,
    Fluid,
    Fclt,
    Validate,
    Sweep,
}

/// Files written and, for `validate`, whether every check passed.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Out<'_> {
    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs one subcommand into `dir`, after copying the config text there.
pub fn run(cmd: Subcommand, cfg: &RunConfig, config_text: &str, dir: &Path) -> Result<Outcome> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = Out { dir, files: Vec::new() };
    out.write("config.toml", |w| w.write_all(config_text.as_bytes()))?;
    let passed = match cmd {
        Subcommand::Simulate => simulate(cfg, &mut out).map(|_| true)?,
        Subcommand::Fluid => fluid(cfg, &mut out).map(|_| true)?,
        Subcommand::Fclt => fclt(cfg, &mut out).map(|_| true)?,
        Subcommand::Validate => validate(cfg, &mut out)?,
        Subcommand::Sweep => sweep(cfg, &mut out).map(|_| true)?,
    };
    Ok(Outcome { files: out.files, passed })
}

fn grid(cfg: &RunConfig) -> Vec<f64> {
    linspace(0.0, cfg.sim.t_end, cfg.sim.grid_points)
}

fn truncation(cfg: &RunConfig, p: &ModelParams) -> usize {
    cfg.sim.k_truncation.unwrap_or_else(|| default_truncation(p))
}

fn simulate(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    let p = cfg.params()?;
    let grid = grid(cfg);
    let (es, paths) =
        ensemble_with_paths(&p, State::default(), cfg.sim.t_end, &grid, cfg.sim.replications, cfg.sim.seed)?;
    for (r, path) in paths.iter().enumerate() {
        let scaled: Vec<_> = path.iter().map(|s| s.scaled(p.n())).collect();
        out.write(&format!("trajectories/trajectory_{r:04}.csv"), |w| export::write_trajectory(w, &grid, &scaled))?;
    }
    out.write("ensemble.csv", |w| export::write_ensemble(w, &es))
}

fn fluid(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    let p = cfg.params()?;
    let fs = integrate_on(&p, 0.0, &grid(cfg), cfg.sim.dt_fluid)?;
    let ss = steady_state(&p, 1.0)?;
    println!("steady state y_s = {:.12}, mu_eff = {:.12}", ss.root, effective_rate(&p, ss.root));
    if ss.extra_sign_changes > 0 {
        println!("note: {} further sign changes of G below {}", ss.extra_sign_changes, ss.bracket_hi);
    }
    out.write("fluid.csv", |w| export::write_fluid(w, &fs))
}

fn fclt(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    let p = cfg.params()?;
    let k = truncation(cfg, &p);
    let fs = integrate(&p, 0.0, cfg.sim.t_end, cfg.sim.dt_fluid)?;
    let prof = sigma_f(&p, &fs, k, PoissonMethod::ExactRecursion)?;
    let closed = sigma_f(&p, &fs, k, PoissonMethod::ClosedForm)?;
    println!("largest relative gap, exact vs closed-form density: {:.3e}", max_relative_gap(&prof, &closed));
    let var = var_w_profile(&p, &fs, &prof)?;
    out.write("sigmaF.csv", |w| export::write_sigma(w, &prof))?;
    out.write("varW.csv", |w| export::write_var_w(w, &fs.grid, &var))?;
    let path = simulate_w(&p, &fs, &prof, cfg.dt_fclt(), cfg.sim.seed)?;
    out.write("W_path.csv", |w| export::write_fluctuation(w, &path))
}

fn sweep(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    let s = &cfg.sweep;
    let lambdas = linspace(s.lambda_b_min, s.lambda_b_max, s.points);
    let points = sweep_lambda_b(cfg.preset(), cfg.rates(), &lambdas)?;
    out.write("steady_state_vs_lambdaB.csv", |w| export::write_sweep(w, &points))
}

fn validate(cfg: &RunConfig, out: &mut Out) -> Result<bool> {
    let mut reports = Vec::new();
    let seed = cfg.sim.seed;
    let p = cfg.params()?;
    let n = p.n();
    let t_end = cfg.sim.t_end;
    let k = truncation(cfg, &p);

    // fluid limit, and the same ensemble's terminal law for the FCLT
    let grid = grid(cfg);
    let es = ensemble(&p, t_end, &grid, cfg.sim.replications, seed)?;
    let fs_grid = integrate_on(&p, 0.0, &grid, cfg.sim.dt_fluid)?;
    reports.push(flln_error(&es, &fs_grid)?);

    let fs = integrate(&p, 0.0, t_end, cfg.sim.dt_fluid)?;
    let prof = sigma_f(&p, &fs, k, PoissonMethod::ExactRecursion)?;
    let var = *var_w_profile(&p, &fs, &prof)?.last().expect("nonempty grid");
    let y_t = fs.terminal();
    let w: Vec<f64> = es.terminal_samples.iter().map(|y| (n as f64).sqrt() * (y - y_t)).collect();
    reports.push(ks_gaussian_at(&w, var, cfg.sim.alpha)?);
    reports.push(variance_ratio(&w, var, 1.25));

    // steady-state sweeps for both rate families
    let s = &cfg.sweep;
    let lambdas = linspace(s.lambda_b_min, s.lambda_b_max, s.points);
    for preset in [Preset::ConstantArrivals, Preset::RegulatedArrivals] {
        let points = sweep_lambda_b(preset, cfg.rates(), &lambdas)?;
        reports.push(sweep_monotone(&points, preset.name()));
        reports.push(sweep_residual(&points, preset.name(), 1e-10));
    }

    // occupation measure over the second half of one run
    let y_s = steady_state(&p, 1.0)?.root;
    let mut rec = OccupationRecorder::new(t_end / 2.0, t_end);
    run_path(&p, State::default(), t_end, SimOptions::default(), &mut stream_rng(seed.wrapping_add(1), 0), &mut rec)?;
    reports.push(tv_occupation(&rec.into_measure(), &p, y_s, 0.05));

    reports.extend(poisson_reports(cfg.rates())?);

    let small = cfg.params_at(LEMMA_N)?;
    for level in LEMMA_LEVELS {
        let samples = hitting_times(&small, level, LEMMA_HORIZON, LEMMA_REPLICATIONS, seed.wrapping_add(10 + level))?;
        reports.push(mgf_report(&samples, 1.0, mgf_bound(&small, 1.0, level), 3.0));
    }

    reports.extend(numerics_reports(cfg, &p, k, seed.wrapping_add(2))?);

    for r in &reports {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {:<36} {:>12.5e} <= {:<12.5e} {}", r.name, r.statistic, r.threshold, r.details);
    }
    out.write("report.csv", |w| export::write_reports(w, &reports))?;
    Ok(reports.iter().all(|r| r.passed))
}

fn poisson_reports(rates: PresetRates) -> Result<Vec<TestReport>> {
    let mut exact_worst = 0.0f64;
    let mut closed_worst = 0.0f64;
    let mut closed_high = f64::INFINITY;
    for preset in [Preset::ConstantArrivals, Preset::RegulatedArrivals] {
        let p = eaq_core::make_preset(preset, rates, 1)?;
        let k = default_truncation(&p);
        for y1 in POISSON_POINTS {
            let exact = poisson_exact(&p, y1, k)?;
            for j in 0..k {
                exact_worst = exact_worst.max(residual(&p, &exact, j)?.abs());
            }
            let closed = poisson_closed(&p, y1, k)?;
            closed_worst = closed_worst.max(residual(&p, &closed, 0)?.abs()).max(residual(&p, &closed, 1)?.abs());
            let mut high = 0.0f64;
            for j in 2..k {
                high = high.max(residual(&p, &closed, j)?.abs());
            }
            closed_high = closed_high.min(high);
        }
    }
    Ok(vec![
        TestReport::one_sided("poisson_exact_residual", exact_worst, 1e-10, ""),
        TestReport::one_sided("poisson_closed_residual_k01", closed_worst, 1e-10, ""),
        // informational: the ansatz misses the equations at k >= 2
        TestReport::one_sided(
            "poisson_closed_residual_k2_min",
            closed_high,
            f64::INFINITY,
            "smallest over y1 of the largest closed-form residual at k >= 2",
        ),
    ])
}

fn numerics_reports(cfg: &RunConfig, p: &ModelParams, k: usize, seed: u64) -> Result<Vec<TestReport>> {
    let mut reports = Vec::new();
    let ratio = step_halving_ratio(p, 0.0, cfg.sim.t_end.min(2.0), 0.025)?;
    reports.push(TestReport::one_sided("rk4_ratio_distance", (ratio - 16.0).abs(), 4.0, format!("ratio={ratio}")));

    let t_end = cfg.sim.t_end;
    let fs = integrate(p, 0.0, t_end, cfg.sim.dt_fluid)?;
    let prof = sigma_f(p, &fs, k, PoissonMethod::ExactRecursion)?;
    let var = *var_w_profile(p, &fs, &prof)?.last().expect("nonempty grid");
    let w = simulate_w_terminal(p, &fs, &prof, cfg.dt_fclt(), SDE_PATHS, seed)?;
    reports.push(variance_z(&w, var, 3.0));

    let floor = truncation_floor(p.lambda() / p.mu());
    let mut gauge = 0.0f64;
    let mut reduction = 0.0f64;
    let stride = (fs.len() / 100).max(1);
    for &y in fs.values.iter().step_by(stride) {
        for method in [PoissonMethod::ClosedForm, PoissonMethod::ExactRecursion] {
            let sol = solve_poisson(p, y, k.max(floor), method)?;
            let g = variance_density(p, &sol)?;
            gauge = gauge.max((g - variance_density(p, &sol.shifted(7.3))?).abs() / g);
        }
        let summed = variance_density(p, &poisson_closed(p, y, k.max(floor))?)?;
        reduction = reduction.max((summed - closed_form_density(p, y)?).abs() / summed);
    }
    reports.push(TestReport::one_sided("sigma_gauge_shift", gauge, 1e-12, ""));
    reports.push(TestReport::one_sided("sigma_closed_form_reduction", reduction, 1e-12, ""));
    Ok(reports)
}
