//! JSON scenario configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_model::{build_beam_model, build_plate_model, BeamSpec, ParameterizedModel, PlateSpec};
use crate::modal::{self, DEFAULT_PAIRING_THRESHOLD};
use crate::optimizer::{Regularizer, SolverOptions, SweepMode};
use crate::residuals::ObjectiveConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Beam(BeamSpec),
    Plate(PlateSpec),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Beam(BeamSpec::default())
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<ParameterizedModel> {
        match self {
            ModelSpec::Beam(s) => build_beam_model(s),
            ModelSpec::Plate(s) => build_plate_model(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Relative standard deviation of measured frequencies.
    pub sigma_f: f64,
    /// Shape noise standard deviation relative to each mode's max amplitude.
    pub sigma_s: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_f: 5e-4,
            sigma_s: 0.005,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            sigma_f: 0.0,
            sigma_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizerSpec {
    #[default]
    None,
    L2tv,
    Huber { mu: f64 },
    PseudoHuber { mu: f64 },
    /// 1-based coarse group indices.
    Interpolation { coarse: Vec<usize> },
}

impl RegularizerSpec {
    pub fn build(&self, model: &ParameterizedModel) -> Result<Regularizer> {
        Ok(match self {
            RegularizerSpec::None => Regularizer::None,
            RegularizerSpec::L2tv => Regularizer::L2Tv,
            RegularizerSpec::Huber { mu } => Regularizer::Huber { mu: *mu },
            RegularizerSpec::PseudoHuber { mu } => Regularizer::PseudoHuber { mu: *mu },
            RegularizerSpec::Interpolation { coarse } => Regularizer::interpolation(model, coarse)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcurveKeyword {
    Lcurve,
}

/// A fixed regularization parameter or `"lcurve"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Value(f64),
    Sweep(LcurveKeyword),
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Value(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LcurveSpec {
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
    pub mode: SweepMode,
    /// Used when the curve has no detectable corner.
    pub fallback_lambda: f64,
}

impl Default for LcurveSpec {
    fn default() -> Self {
        Self {
            lo: 1e-6,
            hi: 1e-1,
            per_decade: 8,
            mode: SweepMode::WarmStart,
            fallback_lambda: 1e-4,
        }
    }
}

/// Parameter bounds as Young's modulus ranges in GPa.
///
/// Edge groups are those in the first and last column of the group grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    pub interior_gpa: [f64; 2],
    pub edge_gpa: Option<[f64; 2]>,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            interior_gpa: [1.0, 40.0],
            edge_gpa: None,
        }
    }
}

/// `α = (E⁰ − E)/E⁰` applied to a modulus range; returns `(lower, upper)`.
pub fn gpa_range_to_alpha(e0_pa: f64, range_gpa: [f64; 2]) -> (f64, f64) {
    let e0 = e0_pa / 1e9;
    ((e0 - range_gpa[1]) / e0, (e0 - range_gpa[0]) / e0)
}

impl BoundsSpec {
    pub fn alpha_bounds(&self, model: &ParameterizedModel) -> Result<(Vec<f64>, Vec<f64>)> {
        let check = |r: [f64; 2], field| {
            if r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, "need 0 < low <= high"))
            }
        };
        check(self.interior_gpa, "bounds.interior_gpa")?;
        if let Some(e) = self.edge_gpa {
            check(e, "bounds.edge_gpa")?;
        }
        let grid = model.grid();
        let n = model.parameter_count();
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for (i, &e0) in model.reference_moduli().iter().enumerate() {
            let col = (i % grid.len()) / grid.d1;
            let edge = col == 0 || col + 1 == grid.d2;
            let range = match self.edge_gpa {
                Some(e) if edge => e,
                _ => self.interior_gpa,
            };
            let (l, u) = gpa_range_to_alpha(e0, range);
            lo.push(l);
            hi.push(u);
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSpec {
    pub frequency: f64,
    /// Per-entry shape weight; `1/√(sensor count)` when absent.
    pub shape: Option<f64>,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            frequency: 1.0,
            shape: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    pub points: usize,
    pub fd_step: f64,
    pub mu_values: Vec<f64>,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            points: 2,
            fd_step: 1e-5,
            mu_values: vec![0.01, 0.1, 1.0],
        }
    }
}

/// One reproducible damage-identification experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelSpec,
    /// True damage index per 1-based group; unlisted groups are undamaged.
    pub damage: BTreeMap<usize, f64>,
    pub noise: NoiseSpec,
    pub measured_modes: usize,
    pub n_series: usize,
    pub pairing_threshold: f64,
    pub rigid_threshold_hz: f64,
    pub regularizer: RegularizerSpec,
    pub lambda: LambdaSpec,
    pub lcurve: LcurveSpec,
    pub bounds: BoundsSpec,
    pub weights: WeightSpec,
    pub seed: u64,
    pub solver: SolverOptions,
    pub check: CheckSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            model: ModelSpec::default(),
            damage: BTreeMap::new(),
            noise: NoiseSpec::default(),
            measured_modes: 3,
            n_series: 30,
            pairing_threshold: DEFAULT_PAIRING_THRESHOLD,
            rigid_threshold_hz: 1.0,
            regularizer: RegularizerSpec::None,
            lambda: LambdaSpec::default(),
            lcurve: LcurveSpec::default(),
            bounds: BoundsSpec::default(),
            weights: WeightSpec::default(),
            seed: 0,
            solver: SolverOptions::default(),
            check: CheckSpec::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks everything that does not require building the model.
    pub fn validate(&self) -> Result<()> {
        for (&g, &di) in &self.damage {
            if g == 0 {
                return Err(Error::validation("damage", "group indices are 1-based"));
            }
            if !(0.0..1.0).contains(&di) {
                return Err(Error::validation("damage", format!("DI {di} of group {g} outside [0, 1)")));
            }
        }
        if !(self.noise.sigma_f >= 0.0) || !(self.noise.sigma_s >= 0.0) {
            return Err(Error::validation("noise", "standard deviations must be non-negative"));
        }
        if self.measured_modes == 0 {
            return Err(Error::validation("measured_modes", "must be positive"));
        }
        if self.n_series < self.measured_modes {
            return Err(Error::validation("n_series", "must be at least measured_modes"));
        }
        if !(self.pairing_threshold > 0.0 && self.pairing_threshold <= 1.0) {
            return Err(Error::validation("pairing_threshold", "must lie in (0, 1]"));
        }
        if !(self.rigid_threshold_hz >= 0.0) {
            return Err(Error::validation("rigid_threshold_hz", "must be non-negative"));
        }
        match self.regularizer {
            RegularizerSpec::Huber { mu } | RegularizerSpec::PseudoHuber { mu } if !(mu > 0.0) => {
                return Err(Error::validation("regularizer.mu", "must be positive"));
            }
            _ => {}
        }
        if let LambdaSpec::Value(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::validation("lambda", "must be a non-negative number or \"lcurve\""));
            }
        }
        if !(self.weights.frequency > 0.0) || self.weights.shape.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::validation("weights", "must be positive"));
        }
        if !(self.check.fd_step > 0.0) || self.check.mu_values.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::validation("check", "fd_step and mu_values must be positive"));
        }
        self.solver.validate()
    }

    pub fn objective_config(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            n_series: self.n_series,
            pairing_threshold: self.pairing_threshold,
            rigid_threshold: modal::hz_to_eigenvalue(self.rigid_threshold_hz),
        }
    }

    /// Builds the model and applies the configured bounds.
    pub fn build_model(&self) -> Result<ParameterizedModel> {
        let mut model = self.model.build()?;
        let (lo, hi) = self.bounds.alpha_bounds(&model)?;
        model.set_bounds(&lo, &hi)?;
        Ok(model)
    }

    /// True parameter vector (`α = DI`) for the given parameter count.
    pub fn true_alpha(&self, n: usize) -> Result<Vec<f64>> {
        let mut alpha = vec![0.0; n];
        for (&g, &di) in &self.damage {
            if g > n {
                return Err(Error::validation(
                    "damage",
                    format!("group {g} exceeds parameter count {n}"),
                ));
            }
            alpha[g - 1] = di;
        }
        Ok(alpha)
    }
}
