//! Scenario execution: configuration, synthetic data, updating runs, reports.

pub mod check;
pub mod config;
pub mod synth;

use std::fmt::Write as _;

use serde::Serialize;

pub use check::{check_derivatives, CheckEntry, DerivativeReport};
pub use config::{
    BoundsSpec, LambdaSpec, LcurveSpec, ModelSpec, NoiseSpec, RegularizerSpec, ScenarioConfig,
    WeightSpec,
};
pub use synth::{synth_measurements, MeasuredFile, ModeSelection, Synthesized};

use crate::error::Result;
use crate::fe_model::ParameterizedModel;
use crate::modal;
use crate::optimizer::{
    lambda_grid, lcurve_corner, lcurve_sweep, minimize, CornerStatus, LCurve, UpdateProblem,
    UpdateResult,
};
use crate::residuals::{residual_only, MeasuredModal};

/// Everything a scenario needs before optimization starts.
pub struct Prepared {
    pub model: ParameterizedModel,
    pub true_alpha: Vec<f64>,
    pub synthesized: Synthesized,
}

impl ScenarioConfig {
    pub fn mode_selection(&self) -> ModeSelection {
        match self.model {
            ModelSpec::Beam(_) => ModeSelection::Lowest,
            ModelSpec::Plate(_) => ModeSelection::Bending,
        }
    }

    /// Builds the model and synthesizes the measured data.
    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let model = self.build_model()?;
        let true_alpha = self.true_alpha(model.parameter_count())?;
        let mut synthesized = synth_measurements(
            &model,
            &true_alpha,
            self.noise,
            self.measured_modes,
            self.mode_selection(),
            &self.objective_config(),
            self.seed,
        )?;
        self.apply_weights(&mut synthesized.measured)?;
        Ok(Prepared {
            model,
            true_alpha,
            synthesized,
        })
    }

    fn apply_weights(&self, m: &mut MeasuredModal) -> Result<()> {
        let shape_w = self
            .weights
            .shape
            .unwrap_or(1.0 / (m.sensor_count().max(1) as f64).sqrt());
        *m = MeasuredModal::with_weights(
            m.eigenvalues.clone(),
            m.shapes.clone(),
            vec![self.weights.frequency; m.mode_count()],
            nalgebra::DMatrix::from_element(m.sensor_count(), m.mode_count(), shape_w),
        )?;
        Ok(())
    }

    /// The updating problem for this scenario at a given regularization parameter.
    pub fn problem<'a>(
        &self,
        prepared: &'a Prepared,
        lambda_reg: f64,
    ) -> Result<UpdateProblem<'a>> {
        let reg = self.regularizer.build(&prepared.model)?;
        let mut p = UpdateProblem::new(&prepared.model, &prepared.synthesized.measured, reg, lambda_reg);
        p.objective = self.objective_config();
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunStatus {
    Ok,
    Failed { stage: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSource {
    Fixed,
    LcurveCorner,
    LcurveFallback,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupRow {
    /// 1-based.
    pub group: usize,
    pub x: f64,
    pub y: f64,
    pub di_true: f64,
    pub di_recovered: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyRow {
    /// 1-based measured mode.
    pub mode: usize,
    pub measured_hz: f64,
    pub measured_std_hz: f64,
    pub initial_hz: Option<f64>,
    pub updated_hz: Option<f64>,
}

/// Result of [`run_scenario`]; the config is echoed so the run can be repeated.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub status: RunStatus,
    pub lambda: Option<f64>,
    pub lambda_source: Option<LambdaSource>,
    pub lcurve: Option<LCurve>,
    pub lcurve_corner: Option<CornerStatus>,
    pub groups: Vec<GroupRow>,
    pub frequencies: Vec<FrequencyRow>,
    pub result: Option<UpdateResult>,
}

impl RunReport {
    fn new(config: &ScenarioConfig) -> Self {
        Self {
            config: config.clone(),
            status: RunStatus::Ok,
            lambda: None,
            lambda_source: None,
            lcurve: None,
            lcurve_corner: None,
            groups: Vec::new(),
            frequencies: Vec::new(),
            result: None,
        }
    }

    fn fail(mut self, stage: &str, err: impl std::fmt::Display) -> Self {
        self.status = RunStatus::Failed {
            stage: stage.into(),
            message: err.to_string(),
        };
        self
    }

    pub fn succeeded(&self) -> bool {
        matches!(self.status, RunStatus::Ok)
    }

    /// Recovered damage index per group (empty if the run failed).
    pub fn recovered_di(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.di_recovered).collect()
    }

    /// Plot data: `group,x_center,y_center,di_true,di_recovered`.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("group,x_center,y_center,di_true,di_recovered\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{},{},{}", g.group, g.x, g.y, g.di_true, g.di_recovered);
        }
        out
    }

    /// L-curve data: `lambda,data_fit,penalty,converged`.
    pub fn lcurve_csv(&self) -> Option<String> {
        self.lcurve.as_ref().map(|c| {
            let mut out = String::from("lambda,data_fit,penalty,converged\n");
            for p in &c.points {
                let _ = writeln!(out, "{},{},{},{}", p.lambda, p.data_fit, p.penalty, p.converged);
            }
            out
        })
    }
}

fn paired_frequencies(
    problem: &UpdateProblem<'_>,
    alpha: &[f64],
) -> Result<Vec<Option<f64>>> {
    let (_, pairing, modes) = residual_only(problem.model, alpha, problem.measured, &problem.objective)?;
    Ok((0..problem.measured.mode_count())
        .map(|j| {
            pairing
                .analytical_for(j)
                .map(|a| modal::eigenvalue_to_hz(modes.eigenvalues[a]))
        })
        .collect())
}

/// Runs the L-curve sweep for a scenario and picks `λ`.
pub fn choose_lambda(
    config: &ScenarioConfig,
    problem: &UpdateProblem<'_>,
) -> Result<(f64, LambdaSource, LCurve, CornerStatus)> {
    let spec = config.lcurve;
    let grid = lambda_grid(spec.lo, spec.hi, spec.per_decade)?;
    let curve = lcurve_sweep(problem, &grid, &config.solver, spec.mode)?;
    let status = lcurve_corner(&curve)?;
    let (lambda, source) = match status {
        CornerStatus::Found(c) => (c.lambda, LambdaSource::LcurveCorner),
        CornerStatus::NoCorner { .. } => (spec.fallback_lambda, LambdaSource::LcurveFallback),
    };
    Ok((lambda, source, curve, status))
}

/// Builds the model, synthesizes measurements, optionally sweeps `λ`, updates.
///
/// Failures are reported in [`RunReport::status`] together with the stage.
pub fn run_scenario(config: &ScenarioConfig) -> RunReport {
    let mut report = RunReport::new(config);
    let prepared = match config.prepare() {
        Ok(p) => p,
        Err(e) => return report.fail("setup", e),
    };
    let base = match config.problem(&prepared, 0.0) {
        Ok(p) => p,
        Err(e) => return report.fail("regularizer", e),
    };
    let (lambda, source) = match config.lambda {
        LambdaSpec::Value(l) => (l, LambdaSource::Fixed),
        LambdaSpec::Sweep(_) => match choose_lambda(config, &base) {
            Ok((l, s, curve, status)) => {
                report.lcurve = Some(curve);
                report.lcurve_corner = Some(status);
                (l, s)
            }
            Err(e) => return report.fail("lcurve", e),
        },
    };
    report.lambda = Some(lambda);
    report.lambda_source = Some(source);
    let problem = base.with_lambda(lambda);
    let result = match minimize(&problem, &config.solver) {
        Ok(r) => r,
        Err(e) => return report.fail("minimize", e),
    };

    let centers = prepared.model.group_centers();
    report.groups = (0..prepared.model.parameter_count())
        .map(|i| GroupRow {
            group: i + 1,
            x: centers[i].0,
            y: centers[i].1,
            di_true: prepared.true_alpha[i],
            di_recovered: result.alpha_star[i],
        })
        .collect();
    let initial = paired_frequencies(&problem, &problem.alpha0).unwrap_or_default();
    let updated = paired_frequencies(&problem, &result.alpha_star).unwrap_or_default();
    let syn = &prepared.synthesized;
    report.frequencies = (0..syn.frequencies_hz.len())
        .map(|j| FrequencyRow {
            mode: j + 1,
            measured_hz: syn.frequencies_hz[j],
            measured_std_hz: syn.frequency_std_hz[j],
            initial_hz: initial.get(j).copied().flatten(),
            updated_hz: updated.get(j).copied().flatten(),
        })
        .collect();
    report.result = Some(result);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn undamaged_noise_free_run() {
        let cfg = ScenarioConfig {
            noise: NoiseSpec::none(),
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg);
        assert!(report.succeeded(), "{:?}", report.status);
        assert!(report.recovered_di().iter().all(|d| d.abs() < 1e-6));
        assert_eq!(report.frequencies.len(), 3);
        assert!(report.plot_csv().lines().count() == 14);
    }

    #[test]
    fn setup_failure_is_reported() {
        let cfg = ScenarioConfig {
            damage: BTreeMap::from([(20, 0.1)]),
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg);
        assert!(matches!(report.status, RunStatus::Failed { ref stage, .. } if stage == "setup"));
    }
}
