//! Box-constrained minimization of `f(α) + λR(α)` and L-curve sweeps.

mod lcurve;
mod trust_region;

pub use lcurve::{
    lambda_grid, lcurve_corner, lcurve_corner_with, lcurve_sweep, Corner, CornerStatus, LCurve,
    LCurvePoint, SkippedPoint, SweepMode, KAPPA_MIN,
};
pub use trust_region::{
    minimize_objective, projected_gradient_norm, Evaluation, Objective, SolveOutcome,
    SolverOptions, Termination,
};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fe_model::ParameterizedModel;
use crate::interp::{self, CoarseGrid, InterpolationMatrix};
use crate::residuals::{objective_eval, residual_only, MeasuredModal, ObjectiveConfig};
use crate::tv::{self, grid_map, GridShape};

/// Regularization term `R(α)` (or the interpolation substitution).
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    None,
    L2Tv,
    Huber { mu: f64 },
    PseudoHuber { mu: f64 },
    /// Optimize coarse parameters `α^P`, with `α = Lα^P`.
    Interpolation {
        coarse: CoarseGrid,
        basis: InterpolationMatrix,
    },
}

impl Regularizer {
    /// Interpolation regularizer over the model's group centers from 1-based indices.
    pub fn interpolation(model: &ParameterizedModel, indices: &[usize]) -> Result<Self> {
        let centers = model.group_centers();
        let coarse = CoarseGrid::from_one_based(indices, centers)?;
        let basis = interp::interpolation_matrix(&coarse, centers)?;
        Ok(Regularizer::Interpolation { coarse, basis })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::None => "none",
            Regularizer::L2Tv => "l2tv",
            Regularizer::Huber { .. } => "huber",
            Regularizer::PseudoHuber { .. } => "pseudo_huber",
            Regularizer::Interpolation { .. } => "interpolation",
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Regularizer::Huber { mu } | Regularizer::PseudoHuber { mu } if !(*mu > 0.0) => {
                Err(Error::Domain(format!("threshold mu must be positive, got {mu}")))
            }
            Regularizer::Interpolation { basis, .. } if basis.fine_count() != n => {
                Err(Error::dimension("interpolation rows", n, basis.fine_count()))
            }
            _ => Ok(()),
        }
    }

    /// `R(α)`; zero for the unregularized and interpolation regimes.
    pub fn penalty(&self, alpha: &[f64], shape: GridShape) -> Result<f64> {
        Ok(match self {
            Regularizer::None | Regularizer::Interpolation { .. } => 0.0,
            Regularizer::L2Tv => tv::var2(&grid_map(alpha, shape)?),
            Regularizer::Huber { mu } => tv::huber_tv(&grid_map(alpha, shape)?, *mu)?.value,
            Regularizer::PseudoHuber { mu } => {
                tv::pseudo_huber_tv(&grid_map(alpha, shape)?, *mu)?.value
            }
        })
    }
}

/// One regularized updating problem.
#[derive(Debug, Clone)]
pub struct UpdateProblem<'a> {
    pub model: &'a ParameterizedModel,
    pub measured: &'a MeasuredModal,
    pub regularizer: Regularizer,
    pub lambda_reg: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha0: Vec<f64>,
    pub objective: ObjectiveConfig,
}

impl<'a> UpdateProblem<'a> {
    /// Bounds from the model, undamaged start and default objective settings.
    pub fn new(
        model: &'a ParameterizedModel,
        measured: &'a MeasuredModal,
        regularizer: Regularizer,
        lambda_reg: f64,
    ) -> Self {
        let (lower, upper) = model.bounds();
        Self {
            model,
            measured,
            regularizer,
            lambda_reg,
            lower,
            upper,
            alpha0: vec![0.0; model.parameter_count()],
            objective: ObjectiveConfig::default(),
        }
    }

    pub fn with_lambda(&self, lambda_reg: f64) -> Self {
        Self {
            lambda_reg,
            ..self.clone()
        }
    }

    pub fn shape(&self) -> GridShape {
        self.model.grid()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.parameter_count();
        for (name, len) in [
            ("lower", self.lower.len()),
            ("upper", self.upper.len()),
            ("alpha0", self.alpha0.len()),
        ] {
            if len != n {
                return Err(Error::dimension(name, n, len));
            }
        }
        if !(self.lambda_reg >= 0.0) || !self.lambda_reg.is_finite() {
            return Err(Error::Domain(format!(
                "regularization parameter must be non-negative, got {}",
                self.lambda_reg
            )));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::validation("bounds", "lower bound exceeds upper bound"));
        }
        self.regularizer.validate(n)
    }

    /// The objective over the optimizer's variables.
    pub fn objective(&self) -> RegularizedObjective<'_, 'a> {
        RegularizedObjective { problem: self }
    }

    /// Maps optimizer variables to the full parameter vector.
    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.regularizer {
            Regularizer::Interpolation { basis, .. } => {
                Ok(interp::expand_params(basis, x)?.as_slice().to_vec())
            }
            _ => Ok(x.to_vec()),
        }
    }

    fn restrict(&self, v: &[f64]) -> Vec<f64> {
        match &self.regularizer {
            Regularizer::Interpolation { coarse, .. } => {
                coarse.indices().iter().map(|&i| v[i]).collect()
            }
            _ => v.to_vec(),
        }
    }

    /// `½‖r(α)‖²`.
    pub fn data_fit(&self, alpha: &[f64]) -> Result<f64> {
        let (r, _, _) = residual_only(self.model, alpha, self.measured, &self.objective)?;
        Ok(0.5 * r.norm_squared())
    }
}

/// `F(x) = f(α(x)) + λR(α(x))` with the Gauss-Newton model Hessian.
pub struct RegularizedObjective<'p, 'a> {
    problem: &'p UpdateProblem<'a>,
}

impl Objective for RegularizedObjective<'_, '_> {
    fn dim(&self) -> usize {
        match &self.problem.regularizer {
            Regularizer::Interpolation { coarse, .. } => coarse.len(),
            _ => self.problem.model.parameter_count(),
        }
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let p = self.problem;
        let alpha = p.expand(x)?;
        let f = p.data_fit(&alpha)?;
        Ok(f + p.lambda_reg * p.regularizer.penalty(&alpha, p.shape())?)
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let p = self.problem;
        let alpha = p.expand(x)?;
        let ev = objective_eval(p.model, &alpha, p.measured, &p.objective)?;
        let shape = p.shape();
        let lam = p.lambda_reg;
        let gn = |r: &DVector<f64>, j: &DMatrix<f64>| Evaluation {
            value: 0.5 * r.norm_squared(),
            grad: j.tr_mul(r),
            hess: j.tr_mul(j),
        };
        Ok(match &p.regularizer {
            Regularizer::None => Evaluation {
                value: ev.f,
                grad: ev.grad,
                hess: ev.gn_hess,
            },
            Regularizer::L2Tv => {
                let (r, j) = tv::l2tv_expand(&ev.r, &ev.jac, &alpha, shape, lam)?;
                gn(&r, &j)
            }
            Regularizer::Huber { .. } | Regularizer::PseudoHuber { .. } => {
                let a = grid_map(&alpha, shape)?;
                let pen = match p.regularizer {
                    Regularizer::Huber { mu } => tv::huber_tv(&a, mu)?,
                    Regularizer::PseudoHuber { mu } => tv::pseudo_huber_tv(&a, mu)?,
                    _ => unreachable!(),
                };
                let mut hess = ev.gn_hess;
                pen.hess.add_to_dense(&mut hess, lam);
                Evaluation {
                    value: ev.f + lam * pen.value,
                    grad: ev.grad + pen.grad * lam,
                    hess,
                }
            }
            Regularizer::Interpolation { basis, .. } => {
                let j = interp::project_jacobian(&ev.jac, basis)?;
                gn(&ev.r, &j)
            }
        })
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, Serialize)]
pub struct UpdateResult {
    /// Full parameter vector (expanded from the coarse grid when interpolating).
    pub alpha_star: Vec<f64>,
    /// Optimizer variables `α^P` in the interpolation regime.
    pub coarse_alpha: Option<Vec<f64>>,
    pub objective_history: Vec<f64>,
    /// `½‖r(α*)‖²`.
    pub data_fit: f64,
    /// `R(α*)`.
    pub penalty: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub warnings: Vec<String>,
}

impl UpdateResult {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

/// Solves `min f(α) + λR(α)` subject to `l ≤ α ≤ u`.
pub fn minimize(problem: &UpdateProblem<'_>, options: &SolverOptions) -> Result<UpdateResult> {
    problem.validate()?;
    let x0 = problem.restrict(&problem.alpha0);
    let lower = problem.restrict(&problem.lower);
    let upper = problem.restrict(&problem.upper);
    let out = minimize_objective(&problem.objective(), &x0, &lower, &upper, options)?;
    let alpha_star = problem.expand(&out.x)?;
    let data_fit = problem.data_fit(&alpha_star)?;
    let penalty = problem.regularizer.penalty(&alpha_star, problem.shape())?;
    let coarse_alpha =
        matches!(problem.regularizer, Regularizer::Interpolation { .. }).then(|| out.x.clone());
    Ok(UpdateResult {
        alpha_star,
        coarse_alpha,
        objective_history: out.history,
        data_fit,
        penalty,
        termination: out.termination,
        iterations: out.iterations,
        projected_gradient: out.projected_gradient,
        warnings: out.warnings,
    })
}
