//! Finite-difference self-checks of every analytic derivative.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ScenarioConfig;
use crate::error::Result;
use crate::interp::project_jacobian;
use crate::optimizer::Regularizer;
use crate::residuals::{objective_eval, residual_only};
use crate::tv::{huber_tv, pseudo_huber_tv, GridShape, PenaltyEval};

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Entries left out (Huber kink cells).
    pub skipped: usize,
}

impl CheckEntry {
    fn new(name: impl Into<String>, err: f64, threshold: f64, skipped: usize) -> Self {
        Self {
            name: name.into(),
            max_rel_error: err,
            threshold,
            passed: err <= threshold,
            skipped,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub checks: Vec<CheckEntry>,
    pub passed: bool,
}

/// `max|a − b| / max|b|`.
pub fn rel_error<'a>(fd: impl IntoIterator<Item = &'a f64>, exact: impl IntoIterator<Item = &'a f64> + Clone) -> f64 {
    floored_error(fd, exact, 1e-300)
}

/// Like [`rel_error`] but the denominator is at least `floor`.
pub fn floored_error<'a>(
    fd: impl IntoIterator<Item = &'a f64>,
    exact: impl IntoIterator<Item = &'a f64> + Clone,
    floor: f64,
) -> f64 {
    let scale = exact.clone().into_iter().fold(0.0f64, |m, v| m.max(v.abs())).max(floor);
    fd.into_iter()
        .zip(exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

/// Central differences of `f: ℝⁿ → ℝᵐ`, one column per coordinate.
pub fn fd_jacobian(
    x: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let mut cols = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        cols.push((fp - fm) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Parameters whose cells have `‖D‖` within `margin` of `mu`.
pub fn kink_parameters(a: &DMatrix<f64>, mu: f64, margin: f64) -> Vec<bool> {
    let (d1, d2) = a.shape();
    let shape = GridShape { d1, d2 };
    let mut near = vec![false; d1 * d2];
    for j in 0..d2 {
        for i in 0..d1 {
            if i + 1 == d1 && j + 1 == d2 {
                continue;
            }
            let dh = if i + 1 < d1 { a[(i + 1, j)] - a[(i, j)] } else { 0.0 };
            let dv = if j + 1 < d2 { a[(i, j + 1)] - a[(i, j)] } else { 0.0 };
            if (dh.hypot(dv) - mu).abs() < margin {
                let k = shape.index(i, j);
                near[k] = true;
                if i + 1 < d1 {
                    near[k + 1] = true;
                }
                if j + 1 < d2 {
                    near[k + d1] = true;
                }
            }
        }
    }
    near
}

/// FD check of a penalty's gradient (from values) and Hessian (from gradients).
///
/// Returns `(grad error, hess error, skipped)`; parameters in `skip` are ignored.
/// The Hessian error is relative to `max(1, max|H|)`.
pub fn penalty_fd_errors(
    a: &DMatrix<f64>,
    h: f64,
    skip: &[bool],
    eval: impl Fn(&DMatrix<f64>) -> Result<PenaltyEval>,
) -> Result<(f64, f64, usize)> {
    let base = eval(a)?;
    let dense = base.hess.to_dense();
    let n = a.len();
    let (mut g_fd, mut g_ex, mut h_fd, mut h_ex) = (vec![], vec![], vec![], vec![]);
    let mut ap = a.clone();
    for k in (0..n).filter(|&k| !skip[k]) {
        let orig = ap[k];
        ap[k] = orig + h;
        let plus = eval(&ap)?;
        ap[k] = orig - h;
        let minus = eval(&ap)?;
        ap[k] = orig;
        g_fd.push((plus.value - minus.value) / (2.0 * h));
        g_ex.push(base.grad[k]);
        for r in (0..n).filter(|&r| !skip[r]) {
            h_fd.push((plus.grad[r] - minus.grad[r]) / (2.0 * h));
            h_ex.push(dense[(r, k)]);
        }
    }
    let skipped = skip.iter().filter(|&&s| s).count();
    Ok((rel_error(&g_fd, &g_ex), floored_error(&h_fd, &h_ex, 1.0), skipped))
}

fn random_feasible(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &u)| {
            let (a, b) = (l.max(-0.1), u.min(0.5));
            if a < b { rng.random_range(a..b) } else { l }
        })
        .collect()
}

/// Runs all finite-difference validations for the scenario's model.
///
/// Residual Jacobians are checked with the full modal series, so the
/// comparison is free of truncation error.
pub fn check_derivatives(config: &ScenarioConfig) -> Result<DerivativeReport> {
    let prepared = config.prepare()?;
    let model = &prepared.model;
    let measured = &prepared.synthesized.measured;
    let mut obj = config.objective_config();
    obj.n_series = model.dof_count();
    let h = config.check.fd_step;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = model.bounds();
    let shape = model.grid();
    let mut checks = Vec::new();

    let mut jac_err = 0.0f64;
    for _ in 0..config.check.points {
        let alpha = random_feasible(&mut rng, &lo, &hi);
        let ev = objective_eval(model, &alpha, measured, &obj)?;
        let fd = fd_jacobian(&alpha, h, |x| Ok(residual_only(model, x, measured, &obj)?.0))?;
        jac_err = jac_err.max(rel_error(fd.iter(), ev.jac.iter()));
    }
    checks.push(CheckEntry::new("residual_jacobian", jac_err, 1e-5, 0));

    for &mu in &config.check.mu_values {
        let (mut eg, mut eh, mut skipped) = (0.0f64, 0.0f64, 0);
        let (mut pg, mut ph) = (0.0f64, 0.0f64);
        for _ in 0..config.check.points {
            let a = DMatrix::from_fn(shape.d1, shape.d2, |_, _| rng.random_range(0.0..1.0));
            let skip = kink_parameters(&a, mu, 10.0 * h);
            let (g, hs, s) = penalty_fd_errors(&a, h, &skip, |m| huber_tv(m, mu))?;
            eg = eg.max(g);
            eh = eh.max(hs);
            skipped += s;
            let none = vec![false; a.len()];
            let (g, hs, _) = penalty_fd_errors(&a, h, &none, |m| pseudo_huber_tv(m, mu))?;
            pg = pg.max(g);
            ph = ph.max(hs);
        }
        checks.push(CheckEntry::new(format!("huber_gradient(mu={mu})"), eg, 1e-6, skipped));
        checks.push(CheckEntry::new(format!("huber_hessian(mu={mu})"), eh, 1e-5, skipped));
        checks.push(CheckEntry::new(format!("pseudo_huber_gradient(mu={mu})"), pg, 1e-6, 0));
        checks.push(CheckEntry::new(format!("pseudo_huber_hessian(mu={mu})"), ph, 1e-5, 0));
    }

    if let Regularizer::Interpolation { coarse, basis } = config.regularizer.build(model)? {
        let xc: Vec<f64> = coarse.indices().iter().map(|_| rng.random_range(0.0..0.3)).collect();
        let alpha = (&basis.l * DVector::from_column_slice(&xc)).as_slice().to_vec();
        let ev = objective_eval(model, &alpha, measured, &obj)?;
        let jp = project_jacobian(&ev.jac, &basis)?;
        let fd = fd_jacobian(&xc, h, |x| {
            let a = &basis.l * DVector::from_column_slice(x);
            Ok(residual_only(model, a.as_slice(), measured, &obj)?.0)
        })?;
        checks.push(CheckEntry::new("projected_jacobian", rel_error(fd.iter(), jp.iter()), 1e-6, 0));
    }

    if config.noise.sigma_f == 0.0 && config.noise.sigma_s == 0.0 {
        let ev = objective_eval(model, &prepared.true_alpha, measured, &obj)?;
        checks.push(CheckEntry::new("gradient_at_truth", ev.grad.amax(), 1e-10, 0));
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(DerivativeReport { checks, passed })
}
