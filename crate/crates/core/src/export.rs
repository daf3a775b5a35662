//! CSV writers. Reals are written with 17 significant digits so that every
//! value reads back bit-for-bit.

use std::io::{self, Write};

use crate::fclt::{FluctuationPath, SigmaFProfile};
use crate::fluid::{FluidSolution, SweepPoint};
use crate::model::ScaledState;
use crate::stats::{EnsembleSummary, TestReport};

/// A real in the exported precision.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn columns<W: Write>(out: &mut W, header: &str, rows: impl Iterator<Item = Vec<String>>) -> io::Result<()> {
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `t,y1,y2` for grid samples of a path.
pub fn write_trajectory<W: Write>(out: &mut W, grid: &[f64], states: &[ScaledState]) -> io::Result<()> {
    let rows = grid.iter().zip(states).map(|(&t, s)| vec![real(t), real(s.y1), s.y2.to_string()]);
    columns(out, "t,y1,y2", rows)
}

/// `t,yA`.
pub fn write_fluid<W: Write>(out: &mut W, fs: &FluidSolution) -> io::Result<()> {
    let rows = fs.grid.iter().zip(&fs.values).map(|(&t, &y)| vec![real(t), real(y)]);
    columns(out, "t,yA", rows)
}

/// `t,g,sigmaF`.
pub fn write_sigma<W: Write>(out: &mut W, prof: &SigmaFProfile) -> io::Result<()> {
    let rows = (0..prof.grid.len()).map(|i| vec![real(prof.grid[i]), real(prof.density[i]), real(prof.cumulative[i])]);
    columns(out, "t,g,sigmaF", rows)
}

/// `t,varW`.
pub fn write_var_w<W: Write>(out: &mut W, grid: &[f64], var_w: &[f64]) -> io::Result<()> {
    let rows = grid.iter().zip(var_w).map(|(&t, &v)| vec![real(t), real(v)]);
    columns(out, "t,varW", rows)
}

/// `t,W`.
pub fn write_fluctuation<W: Write>(out: &mut W, path: &FluctuationPath) -> io::Result<()> {
    let rows = path.grid.iter().zip(&path.values).map(|(&t, &w)| vec![real(t), real(w)]);
    columns(out, "t,W", rows)
}

/// `name,statistic,threshold,passed`.
pub fn write_reports<W: Write>(out: &mut W, reports: &[TestReport]) -> io::Result<()> {
    let rows = reports.iter().map(|r| vec![r.name.clone(), real(r.statistic), real(r.threshold), r.passed.to_string()]);
    columns(out, "name,statistic,threshold,passed", rows)
}

/// `t,mean,sd`.
pub fn write_ensemble<W: Write>(out: &mut W, es: &EnsembleSummary) -> io::Result<()> {
    let rows = (0..es.grid.len()).map(|i| vec![real(es.grid[i]), real(es.mean[i]), real(es.sd[i])]);
    columns(out, "t,mean,sd", rows)
}

/// `lambda_B,y_s,mu_eff`.
pub fn write_sweep<W: Write>(out: &mut W, points: &[SweepPoint]) -> io::Result<()> {
    let rows = points.iter().map(|q| vec![real(q.lambda_b), real(q.y_s), real(q.mu_eff)]);
    columns(out, "lambda_B,y_s,mu_eff", rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e17, f64::MIN_POSITIVE] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn trajectory_layout() {
        let mut buf = Vec::new();
        let states = [ScaledState { y1: 0.0, y2: 0 }, ScaledState { y1: 0.5, y2: 3 }];
        write_trajectory(&mut buf, &[0.0, 1.0], &states).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,y1,y2");
        assert_eq!(lines[2], "1.0000000000000000e0,5.0000000000000000e-1,3");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn report_layout() {
        let mut buf = Vec::new();
        write_reports(&mut buf, &[TestReport::one_sided("x", 0.5, 1.0, "")]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "name,statistic,threshold,passed\nx,5.0000000000000000e-1,1.0000000000000000e0,true\n");
    }
}
