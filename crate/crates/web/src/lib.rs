//! Browser demo. Each export returns a flat `Float64Array` in row-major
//! order; the column layout is given on each function.
//!
//! The bindings are thin wrappers over the plain `*_rows` functions, which
//! are tested natively.

use eaq_core::fclt::{default_truncation, sigma_f, var_w_profile, PoissonMethod};
use eaq_core::fluid::{integrate, linspace, sweep_lambda_b, FluidSolution};
use eaq_core::gillespie::{simulate_on_grid, SimOptions};
use eaq_core::rng::stream_rng;
use eaq_core::{make_preset, ModelParams, Preset, PresetRates, State};
use wasm_bindgen::prelude::*;

/// Keeps a click in the page from running away.
const DEMO_EVENT_CAP: u64 = 5_000_000;

fn params(preset: &str, rates: PresetRates, n: u64) -> Result<ModelParams, String> {
    let preset: Preset = preset.parse().map_err(|e: eaq_core::Error| e.to_string())?;
    make_preset(preset, rates, n).map_err(|e| e.to_string())
}

fn rates(lambda_a: f64, mu_a: f64, lambda_b: f64, mu_b: f64, speedup: f64) -> PresetRates {
    PresetRates { lambda_a, mu_a, lambda_b, mu_b, speedup }
}

/// Columns `t, yA, yA - 2 sd, yA + 2 sd` with `sd = sqrt(var_W / n)`, on
/// `points` equally spaced times.
pub fn fluid_band_rows(
    preset: &str,
    rates: PresetRates,
    n: u64,
    t_end: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least 2 points".into());
    }
    let p = params(preset, rates, n)?;
    let dt = (t_end / 4000.0).min(1e-2);
    let fs = integrate(&p, 0.0, t_end, dt).map_err(|e| e.to_string())?;
    let prof = sigma_f(&p, &fs, default_truncation(&p), PoissonMethod::ExactRecursion).map_err(|e| e.to_string())?;
    let var = var_w_profile(&p, &fs, &prof).map_err(|e| e.to_string())?;
    let var = FluidSolution { grid: fs.grid.clone(), values: var, dt };
    let scale = (n as f64).sqrt();
    let mut out = Vec::with_capacity(4 * points);
    for t in linspace(0.0, t_end, points) {
        let y = fs.value_at(t);
        let half = 2.0 * var.value_at(t).max(0.0).sqrt() / scale;
        out.extend([t, y, y - half, y + half]);
    }
    Ok(out)
}

/// Columns `lambda_B, y_s, mu_eff`.
pub fn sweep_rows(preset: &str, rates: PresetRates, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, String> {
    let preset: Preset = preset.parse().map_err(|e: eaq_core::Error| e.to_string())?;
    let pts = sweep_lambda_b(preset, rates, &linspace(lo, hi, points)).map_err(|e| e.to_string())?;
    Ok(pts.iter().flat_map(|q| [q.lambda_b, q.y_s, q.mu_eff]).collect())
}

/// Columns `t, y1, y2` of one exact path from the empty system, sampled
/// on the fly so no event list is kept.
pub fn path_rows(
    preset: &str,
    rates: PresetRates,
    n: u64,
    t_end: f64,
    seed: u64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let p = params(preset, rates, n)?;
    let opts = SimOptions { event_cap: DEMO_EVENT_CAP };
    let grid = linspace(0.0, t_end, points);
    let (states, _) = simulate_on_grid(&p, t_end, State::default(), &grid, &mut stream_rng(seed, 0), opts)
        .map_err(|e| e.to_string())?;
    Ok(grid.iter().zip(&states).map(|(&t, s)| (t, s.scaled(p.n()))).flat_map(|(t, s)| [t, s.y1, s.y2 as f64]).collect())
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn fluid_band(
    preset: &str,
    lambda_a: f64,
    mu_a: f64,
    lambda_b: f64,
    mu_b: f64,
    speedup: f64,
    n: u32,
    t_end: f64,
    points: usize,
) -> Result<Vec<f64>, JsValue> {
    js(fluid_band_rows(preset, rates(lambda_a, mu_a, lambda_b, mu_b, speedup), n.into(), t_end, points))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn steady_state_sweep(
    preset: &str,
    lambda_a: f64,
    mu_a: f64,
    mu_b: f64,
    speedup: f64,
    lambda_b_min: f64,
    lambda_b_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsValue> {
    js(sweep_rows(preset, rates(lambda_a, mu_a, 1.0, mu_b, speedup), lambda_b_min, lambda_b_max, points))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn sample_trajectory(
    preset: &str,
    lambda_a: f64,
    mu_a: f64,
    lambda_b: f64,
    mu_b: f64,
    speedup: f64,
    n: u32,
    t_end: f64,
    seed: u32,
    points: usize,
) -> Result<Vec<f64>, JsValue> {
    js(path_rows(preset, rates(lambda_a, mu_a, lambda_b, mu_b, speedup), n.into(), t_end, seed.into(), points))
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "constant_arrivals";

    #[test]
    fn band_brackets_the_fluid_path() {
        let rows = fluid_band_rows(A, PresetRates::FIGURE, 10_000, 10.0, 51).unwrap();
        assert_eq!(rows.len(), 4 * 51);
        assert_eq!(&rows[..4], &[0.0, 0.0, 0.0, 0.0]);
        for r in rows.chunks(4).skip(1) {
            assert!(r[2] < r[1] && r[1] < r[3]);
        }
        let last = &rows[rows.len() - 4..];
        assert!((last[1] - 1.825_739_845).abs() < 1e-6);
        // half-width 2 sqrt(var_W / n), var_W(10) ~ 2.2
        assert!((last[3] - last[1] - 2.0 * (2.195f64 / 1e4).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn sweep_columns() {
        let rows = sweep_rows("regulated_arrivals", PresetRates::FIGURE, 0.5, 6.0, 12).unwrap();
        assert_eq!(rows.len(), 36);
        assert_eq!(rows[3], 1.0);
        let ys: Vec<f64> = rows.chunks(3).map(|r| r[1]).collect();
        assert!(ys.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn path_columns_and_errors() {
        let rows = path_rows(A, PresetRates::FIGURE, 200, 2.0, 9, 21).unwrap();
        assert_eq!(rows.len(), 63);
        assert_eq!(&rows[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(rows, path_rows(A, PresetRates::FIGURE, 200, 2.0, 9, 21).unwrap());
        assert!(path_rows("bursty", PresetRates::FIGURE, 200, 2.0, 9, 21).unwrap_err().contains("bursty"));
        let bad = PresetRates { mu_a: -1.0, ..PresetRates::FIGURE };
        assert!(path_rows(A, bad, 200, 2.0, 9, 21).unwrap_err().contains("mu_A"));
        assert!(path_rows(A, PresetRates::FIGURE, 1_000_000, 1e3, 9, 21).unwrap_err().contains("event cap"));
    }
}
