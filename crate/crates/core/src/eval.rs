//! Error metrics against the exact solution and error-versus-loss fits.
//!
//! Errors on block `i` use a uniform `grid_n x grid_n` grid over
//! `D x [t_{i-1}, t_i]`, endpoints included:
//!
//! * relative l2: `sqrt(sum (u - u_h)^2) / sqrt(sum u^2)`
//! * l-infinity: `max |u - u_h| / sqrt(sum u^2 / N)`, normalized by the
//!   root-mean-square of the exact field rather than its maximum.

use std::io::Write;

use thiserror::Error;

use crate::autodiff::{Channel, Order};
use crate::error::Error;
use crate::marching::MarchMode;
use crate::network::Field;
use crate::pde::ProblemSpec;
use crate::sampling::TimeBlocks;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub block: usize,
    pub l2_u: f64,
    pub linf_u: f64,
    /// Present for the two-field problems.
    pub v: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub mode: MarchMode,
    pub seed: u64,
    pub grid_n: usize,
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    /// `mode,block,l2_u,linf_u,l2_v,linf_v`; the `v` columns stay empty for
    /// scalar problems.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mode,block,l2_u,linf_u,l2_v,linf_v")?;
        for r in &self.rows {
            let (l2v, linfv) = match r.v {
                Some((a, b)) => (a.to_string(), b.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(w, "{},{},{},{},{},{}", self.mode, r.block, r.l2_u, r.linf_u, l2v, linfv)?;
        }
        Ok(())
    }
}

/// Uniform grid with endpoints: `n` points on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| if k == n - 1 { b } else { a + h * k as f64 }).collect()
}

/// `(relative l2, rms-normalized l-infinity)` of `approx` against `exact`.
pub fn relative_errors(exact: &[f64], approx: &[f64]) -> Result<(f64, f64), Error> {
    let mut sq = 0.0;
    let mut err = 0.0;
    let mut max = 0.0f64;
    for (u, h) in exact.iter().zip(approx) {
        let d = u - h;
        sq += u * u;
        err += d * d;
        max = max.max(d.abs());
    }
    if sq == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((err.sqrt() / sq.sqrt(), max / (sq / exact.len() as f64).sqrt()))
}

/// Errors of `field` on block `i`.
pub fn compute_errors(field: &dyn Field, spec: &ProblemSpec, blocks: &TimeBlocks, i: usize, grid_n: usize) -> Result<ErrorRow, Error> {
    assert!(grid_n >= 2);
    let (t0, t1) = blocks.bounds(i);
    let gx = linspace(spec.x_domain.0, spec.x_domain.1, grid_n);
    let gt = linspace(t0, t1, grid_n);
    let mut xs = Vec::with_capacity(grid_n * grid_n);
    let mut ts = Vec::with_capacity(grid_n * grid_n);
    for &t in &gt {
        for &x in &gx {
            xs.push(x);
            ts.push(t);
        }
    }
    let out = field.eval_batch(&xs, &ts, Order::Value);
    let (eu, ev): (Vec<f64>, Vec<f64>) = xs.iter().zip(&ts).map(|(&x, &t)| spec.exact_solution(x, t)).unzip();
    let (l2_u, linf_u) = relative_errors(&eu, out.channel(0, Channel::Val))?;
    let v = if spec.n_outputs() == 2 {
        Some(relative_errors(&ev, out.channel(1, Channel::Val))?)
    } else {
        None
    };
    Ok(ErrorRow { block: i, l2_u, linf_u, v })
}

/// `(training loss, l2 error)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalingSeries {
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    /// Natural-log intercept: `ln(l2) = intercept + slope ln(loss)`.
    pub intercept: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("need at least {needed} checkpoints, have {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("losses span {decades:.2} decades, need {needed}")]
    InsufficientSpan { decades: f64, needed: f64 },
}

pub const MIN_SCALING_POINTS: usize = 5;
pub const MIN_SCALING_DECADES: f64 = 2.0;

/// Least-squares slope of `ln(l2)` against `ln(loss)`. Points with a
/// non-positive loss or error are dropped.
pub fn scaling_fit(series: &ScalingSeries) -> Result<ScalingFit, ScalingError> {
    let pts: Vec<(f64, f64)> = series
        .points
        .iter()
        .filter(|(l, e)| *l > 0.0 && *e > 0.0 && l.is_finite() && e.is_finite())
        .map(|(l, e)| (l.ln(), e.ln()))
        .collect();
    if pts.len() < MIN_SCALING_POINTS {
        return Err(ScalingError::TooFewPoints { needed: MIN_SCALING_POINTS, got: pts.len() });
    }
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let decades = (hi - lo) / std::f64::consts::LN_10;
    if decades < MIN_SCALING_DECADES {
        return Err(ScalingError::InsufficientSpan { decades, needed: MIN_SCALING_DECADES });
    }
    let (slope, intercept) = least_squares_line(&pts);
    Ok(ScalingFit { slope, intercept, n_points: pts.len() })
}

/// Ordinary least-squares `(slope, intercept)` through `(x, y)` pairs.
pub fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
