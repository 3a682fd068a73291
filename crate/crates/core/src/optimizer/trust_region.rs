//! Projected trust-region Newton method for box-constrained smooth problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value, gradient and model Hessian at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// A twice-differentiable objective over `ℝⁿ`.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Objective value only (used at trial points).
    fn value(&self, x: &[f64]) -> Result<f64>;

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub gtol: f64,
    pub xtol: f64,
    pub max_iterations: usize,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Minimum ratio of actual to predicted reduction for acceptance.
    pub eta: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-8,
            xtol: 1e-10,
            max_iterations: 200,
            initial_radius: 0.1,
            max_radius: 1e3,
            eta: 1e-4,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.gtol) {
            return Err(Error::validation("gtol", "must be positive"));
        }
        if !positive(self.xtol) {
            return Err(Error::validation("xtol", "must be positive"));
        }
        if !positive(self.initial_radius) || self.max_radius < self.initial_radius {
            return Err(Error::validation("initial_radius", "must be positive and at most max_radius"));
        }
        if !(0.0..0.25).contains(&self.eta) {
            return Err(Error::validation("eta", "must lie in [0, 0.25)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum Termination {
    /// Projected gradient below `gtol`.
    Gradient,
    /// Accepted step (or trust radius) below `xtol`.
    Step,
    MaxIterations,
    /// The objective could not be evaluated at an accepted point.
    EvaluationFailed(String),
}

impl Termination {
    pub fn converged(&self) -> bool {
        matches!(self, Termination::Gradient | Termination::Step)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at the start point and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub projected_gradient: f64,
    pub warnings: Vec<String>,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

/// `‖x − P(x − g)‖∞`.
pub fn projected_gradient_norm(x: &[f64], g: &DVector<f64>, lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g.iter())
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| (xi - (xi - gi).clamp(l, u)).abs())
        .fold(0.0, f64::max)
}

fn model_change(g: &DVector<f64>, h: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    g.dot(p) + 0.5 * p.dot(&(h * p))
}

/// Minimizer of `gᵀs + ½sᵀHs` over `‖s‖ ≤ Δ` via the eigen-decomposition of `H`.
fn trust_region_step(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let c = eig.eigenvectors.tr_mul(g);
    let e = &eig.eigenvalues;
    let e_min = e.min();
    let e_max = e.max().abs().max(1.0);
    let step_norm = |nu: f64| {
        c.iter()
            .zip(e.iter())
            .map(|(&ci, &ei)| (ci / (ei + nu)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let floor = 1e-14 * e_max;
    let nu = if e_min > floor && step_norm(0.0) <= radius {
        0.0
    } else {
        let mut lo = (-e_min).max(0.0) + floor;
        if step_norm(lo) <= radius {
            lo
        } else {
            let mut hi = g.norm() / radius - e_min.min(0.0) + floor;
            while step_norm(hi) > radius {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if step_norm(mid) > radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            hi
        }
    };
    let scaled = DVector::from_iterator(
        c.len(),
        c.iter().zip(e.iter()).map(|(&ci, &ei)| -ci / (ei + nu)),
    );
    let mut s = &eig.eigenvectors * scaled;
    if e_min < -floor {
        // hard case: move along the most negative curvature direction to the boundary
        let extra = radius * radius - s.norm_squared();
        if extra > 0.0 {
            let k = e.imin();
            let v = eig.eigenvectors.column(k);
            let tau = extra.sqrt() * if v.dot(g) > 0.0 { -1.0 } else { 1.0 };
            s += v * tau;
        }
    }
    s
}

fn submatrix(h: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])])
}

/// Minimizes `obj` over the box `[lower, upper]` starting from `x0`.
///
/// An infeasible `x0` is projected onto the box and a warning is recorded.
pub fn minimize_objective<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &SolverOptions,
) -> Result<SolveOutcome> {
    options.validate()?;
    let n = obj.dim();
    for (name, v) in [("x0", x0.len()), ("lower", lower.len()), ("upper", upper.len())] {
        if v != n {
            return Err(Error::dimension(name, n, v));
        }
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::validation("bounds", "lower bound exceeds upper bound"));
    }
    let mut warnings = Vec::new();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    if x.as_slice() != x0 {
        warnings.push("start point outside bounds; projected onto the box".to_string());
    }

    let mut ev = obj.evaluate(&x)?;
    let mut history = vec![ev.value];
    let mut radius = options.initial_radius;
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(&x, &ev.grad, lower, upper);

    let termination = loop {
        if pg < options.gtol {
            break Termination::Gradient;
        }
        if iterations >= options.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let g = &ev.grad;
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();

        let xv = DVector::from_column_slice(&x);
        let mut candidates: Vec<DVector<f64>> = Vec::new();

        // Newton step on the free subspace: projected, backtracked along the
        // projection path, and truncated at the first bound it meets
        if !free.is_empty() {
            let hf = submatrix(&ev.hess, &free);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
            let sf = trust_region_step(&hf, &gf, radius);
            let mut s = DVector::zeros(n);
            for (k, &i) in free.iter().enumerate() {
                s[i] = sf[k];
            }
            let mut t_bound = 1.0f64;
            for i in 0..n {
                if s[i] > 0.0 {
                    t_bound = t_bound.min((upper[i] - x[i]) / s[i]);
                } else if s[i] < 0.0 {
                    t_bound = t_bound.min((lower[i] - x[i]) / s[i]);
                }
            }
            for t in [1.0, 0.5, 0.25, 0.125] {
                let mut c: Vec<f64> = x.iter().zip(s.iter()).map(|(a, b)| a + t * b).collect();
                project(&mut c, lower, upper);
                candidates.push(DVector::from_vec(c) - &xv);
            }
            if t_bound > 0.0 && t_bound < 1.0 {
                let mut c: Vec<f64> = x.iter().zip(s.iter()).map(|(a, b)| a + t_bound * b).collect();
                project(&mut c, lower, upper);
                candidates.push(DVector::from_vec(c) - &xv);
            }
        }

        // projected Cauchy step
        let d = DVector::from_iterator(
            n,
            (0..n).map(|i| if free.contains(&i) { -g[i] } else { 0.0 }),
        );
        let dn = d.norm();
        if dn > 0.0 {
            let curv = d.dot(&(&ev.hess * &d));
            let t_max = radius / dn;
            let t = if curv > 0.0 { (dn * dn / curv).min(t_max) } else { t_max };
            let mut c: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            project(&mut c, lower, upper);
            candidates.push(DVector::from_vec(c) - &xv);
        }

        let (p, predicted) = candidates
            .into_iter()
            .map(|p| {
                let m = model_change(g, &ev.hess, &p);
                (p, -m)
            })
            .fold((DVector::zeros(n), 0.0), |best, c| if c.1 > best.1 { c } else { best });
        let mut trial: Vec<f64> = (&xv + &p).iter().copied().collect();
        project(&mut trial, lower, upper);
        let step = p.norm();

        if !(predicted > 0.0) || step == 0.0 {
            radius *= 0.25;
            if radius < options.xtol {
                break Termination::Step;
            }
            continue;
        }

        let rho = match obj.value(&trial) {
            Ok(ft) if ft.is_finite() => (ev.value - ft) / predicted,
            _ => f64::NEG_INFINITY,
        };
        if rho < 0.25 {
            radius = 0.25 * step.min(radius);
        } else if rho > 0.75 && step >= 0.99 * radius {
            radius = (2.0 * radius).min(options.max_radius);
        }
        if rho > options.eta {
            match obj.evaluate(&trial) {
                Ok(next) if next.value <= ev.value => {
                    x = trial;
                    ev = next;
                    history.push(ev.value);
                    pg = projected_gradient_norm(&x, &ev.grad, lower, upper);
                    if step < options.xtol {
                        break Termination::Step;
                    }
                }
                Ok(_) => radius = 0.25 * step,
                Err(e) => break Termination::EvaluationFailed(e.to_string()),
            }
        } else if radius < options.xtol {
            break Termination::Step;
        }
    };

    Ok(SolveOutcome {
        value: ev.value,
        x,
        history,
        iterations,
        termination,
        projected_gradient: pg,
        warnings,
    })
}
