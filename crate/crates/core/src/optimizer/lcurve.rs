//! L-curve sweeps over the regularization parameter and corner detection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{minimize, SolverOptions, UpdateProblem, UpdateResult};
use crate::error::{Error, Result};

/// Minimum curvature for an accepted corner.
pub const KAPPA_MIN: f64 = 0.1;

const SAMPLES_PER_SEGMENT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Sequential, each solve started from the previous solution.
    WarmStart,
    /// Independent solves from the problem's start point, run in parallel.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LCurvePoint {
    pub lambda: f64,
    pub data_fit: f64,
    pub penalty: f64,
    pub converged: bool,
    pub iterations: usize,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPoint {
    pub lambda: f64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corner {
    pub lambda: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CornerStatus {
    Found(Corner),
    NoCorner { max_curvature: f64 },
}

impl CornerStatus {
    pub fn corner(&self) -> Option<Corner> {
        match self {
            CornerStatus::Found(c) => Some(*c),
            CornerStatus::NoCorner { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LCurve {
    pub mode: SweepMode,
    pub points: Vec<LCurvePoint>,
    pub skipped: Vec<SkippedPoint>,
    pub corner: Option<Corner>,
}

/// `per_decade` logarithmically spaced values from `hi` down to `lo`, both included.
pub fn lambda_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && per_decade > 0) {
        return Err(Error::validation("lcurve", "need 0 < lo < hi and per_decade > 0"));
    }
    let (a, b) = (hi.log10(), lo.log10());
    let steps = ((a - b) * per_decade as f64).round() as usize;
    Ok((0..=steps)
        .map(|k| 10f64.powf(a - (a - b) * k as f64 / steps as f64))
        .collect())
}

fn point(lambda: f64, res: UpdateResult) -> LCurvePoint {
    LCurvePoint {
        lambda,
        data_fit: res.data_fit,
        penalty: res.penalty,
        converged: res.converged(),
        iterations: res.iterations,
        alpha: res.alpha_star,
    }
}

/// One [`minimize`] per grid value; a failing value is skipped and recorded.
pub fn lcurve_sweep(
    problem: &UpdateProblem<'_>,
    grid: &[f64],
    options: &SolverOptions,
    mode: SweepMode,
) -> Result<LCurve> {
    if grid.len() < 4 {
        return Err(Error::validation("lcurve", "grid needs at least 4 points"));
    }
    if grid.iter().any(|&l| !(l > 0.0)) || grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::validation("lcurve", "grid must be positive and strictly descending"));
    }
    problem.validate()?;
    let outcomes: Vec<(f64, Result<UpdateResult>)> = match mode {
        SweepMode::WarmStart => {
            let mut start = problem.alpha0.clone();
            grid.iter()
                .map(|&l| {
                    let mut p = problem.with_lambda(l);
                    p.alpha0 = start.clone();
                    let res = minimize(&p, options);
                    if let Ok(r) = &res {
                        start = r.alpha_star.clone();
                    }
                    (l, res)
                })
                .collect()
        }
        SweepMode::Independent => grid
            .par_iter()
            .map(|&l| (l, minimize(&problem.with_lambda(l), options)))
            .collect(),
    };
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (l, res) in outcomes {
        match res {
            Ok(r) => points.push(point(l, r)),
            Err(e) => skipped.push(SkippedPoint {
                lambda: l,
                error: e.to_string(),
            }),
        }
    }
    let mut curve = LCurve {
        mode,
        points,
        skipped,
        corner: None,
    };
    curve.corner = lcurve_corner(&curve).ok().and_then(|s| s.corner());
    Ok(curve)
}

/// Natural cubic spline second derivatives at the knots.
fn spline_moments(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // tridiagonal system for interior moments (Thomas algorithm)
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
    }
    for i in 1..k {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * h[i];
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (0..k).rev() {
        let upper = if i + 1 < k { h[i + 1] * m[i + 2] } else { 0.0 };
        m[i + 1] = (rhs[i] - upper) / diag[i];
    }
    m
}

/// First and second derivative of the spline on segment `i` at local offset `s`.
fn spline_derivs(t: &[f64], y: &[f64], m: &[f64], i: usize, s: f64) -> (f64, f64) {
    let h = t[i + 1] - t[i];
    let a = (t[i + 1] - (t[i] + s)) / h;
    let b = s / h;
    let d1 = (y[i + 1] - y[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m[i]
        + (3.0 * b * b - 1.0) / 6.0 * h * m[i + 1];
    let d2 = a * m[i] + b * m[i + 1];
    (d1, d2)
}

/// Corner with the default [`KAPPA_MIN`].
pub fn lcurve_corner(curve: &LCurve) -> Result<CornerStatus> {
    lcurve_corner_with(curve, KAPPA_MIN)
}

/// Maximum-curvature point of a parametric cubic spline through the curve in
/// `(log₁₀ ‖r‖, log₁₀ penalty)` with `‖r‖ = √(2·data_fit)`, parameterized by
/// chord length.
pub fn lcurve_corner_with(curve: &LCurve, kappa_min: f64) -> Result<CornerStatus> {
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    for p in &curve.points {
        if !(p.data_fit > 0.0 && p.penalty > 0.0 && p.lambda > 0.0) {
            continue;
        }
        let q = ((2.0 * p.data_fit).sqrt().log10(), p.penalty.log10(), p.lambda.log10());
        if pts.last().is_some_and(|l| (l.0 - q.0).hypot(l.1 - q.1) == 0.0) {
            continue;
        }
        pts.push(q);
    }
    if pts.len() < 4 {
        return Err(Error::validation(
            "lcurve",
            format!("corner detection needs at least 4 valid points, got {}", pts.len()),
        ));
    }
    let mut t = vec![0.0];
    for w in pts.windows(2) {
        t.push(t.last().unwrap() + (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (mx, my) = (spline_moments(&t, &xs), spline_moments(&t, &ys));

    let mut best = (0.0, 0, 0.0);
    for i in 0..pts.len() - 1 {
        let h = t[i + 1] - t[i];
        for k in 0..=SAMPLES_PER_SEGMENT {
            let s = h * k as f64 / SAMPLES_PER_SEGMENT as f64;
            let (x1, x2) = spline_derivs(&t, &xs, &mx, i, s);
            let (y1, y2) = spline_derivs(&t, &ys, &my, i, s);
            let speed = x1 * x1 + y1 * y1;
            if speed == 0.0 {
                continue;
            }
            let kappa = (x1 * y2 - y1 * x2).abs() / speed.powf(1.5);
            if kappa > best.0 {
                best = (kappa, i, s / h);
            }
        }
    }
    let (kappa, i, frac) = best;
    if kappa < kappa_min {
        return Ok(CornerStatus::NoCorner { max_curvature: kappa });
    }
    let log_lambda = pts[i].2 + frac * (pts[i + 1].2 - pts[i].2);
    Ok(CornerStatus::Found(Corner {
        lambda: 10f64.powf(log_lambda),
        curvature: kappa,
    }))
}
