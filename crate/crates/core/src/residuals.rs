//! Weighted frequency and mode-shape residuals, their sensitivity matrix and
//! the least-squares objective `f(α) = ½‖r(α)‖²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_model::{assemble_stiffness, ParameterizedModel};
use crate::modal::{
    self, eigen_sensitivities_for, msf, pair_shapes, ModePairing, ModeSet, Sensitivities,
    DEFAULT_PAIRING_THRESHOLD, DEFAULT_RIGID_THRESHOLD,
};

/// Measured eigenvalues and mode shapes on the sensor DOFs, with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredModal {
    /// `λ_j^mea` in rad²/s².
    pub eigenvalues: Vec<f64>,
    /// Sensors × modes.
    pub shapes: DMatrix<f64>,
    pub freq_weights: Vec<f64>,
    /// Same shape as `shapes`; entry `(k, j)` weights sensor `k` of mode `j`.
    pub shape_weights: DMatrix<f64>,
}

impl MeasuredModal {
    /// Default weights: 1 per frequency and `1/√d_s` per shape entry.
    pub fn new(eigenvalues: Vec<f64>, shapes: DMatrix<f64>) -> Result<Self> {
        let ds = shapes.nrows().max(1);
        let mf = shapes.ncols();
        Self::with_weights(
            eigenvalues,
            shapes,
            vec![1.0; mf],
            DMatrix::from_element(ds, mf, 1.0 / (ds as f64).sqrt()),
        )
    }

    pub fn with_weights(
        eigenvalues: Vec<f64>,
        shapes: DMatrix<f64>,
        freq_weights: Vec<f64>,
        shape_weights: DMatrix<f64>,
    ) -> Result<Self> {
        let mf = eigenvalues.len();
        if shapes.ncols() != mf {
            return Err(Error::dimension("measured shape columns", mf, shapes.ncols()));
        }
        if freq_weights.len() != mf {
            return Err(Error::dimension("frequency weights", mf, freq_weights.len()));
        }
        if shape_weights.shape() != shapes.shape() {
            return Err(Error::dimension(
                "shape weights",
                shapes.len(),
                shape_weights.len(),
            ));
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::validation("eigenvalues", "measured eigenvalues must be positive"));
        }
        if freq_weights.iter().chain(shape_weights.iter()).any(|&w| !(w > 0.0)) {
            return Err(Error::validation("weights", "weights must be positive"));
        }
        Ok(Self {
            eigenvalues,
            shapes,
            freq_weights,
            shape_weights,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn sensor_count(&self) -> usize {
        self.shapes.nrows()
    }

    /// Scales every shape weight by `s` (frequency weights unchanged).
    pub fn scale_shape_weights(&mut self, s: f64) {
        self.shape_weights *= s;
    }
}

/// Settings for a single objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Modes retained for pairing and the eigenvector-derivative series.
    pub n_series: usize,
    pub pairing_threshold: f64,
    pub rigid_threshold: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            n_series: 30,
            pairing_threshold: DEFAULT_PAIRING_THRESHOLD,
            rigid_threshold: DEFAULT_RIGID_THRESHOLD,
        }
    }
}

/// `(λ^mea_j − λ_j)/λ^mea_j`, weighted, over paired modes in measured order.
pub fn freq_residual(
    measured: &MeasuredModal,
    analytical: &[f64],
    pairing: &ModePairing,
) -> Result<DVector<f64>> {
    let mut out = Vec::with_capacity(pairing.len());
    for p in &pairing.pairs {
        let lm = *measured
            .eigenvalues
            .get(p.measured)
            .ok_or_else(|| Error::dimension("measured mode", measured.mode_count(), p.measured + 1))?;
        let la = *analytical
            .get(p.analytical)
            .ok_or_else(|| Error::dimension("analytical mode", analytical.len(), p.analytical + 1))?;
        out.push(measured.freq_weights[p.measured] * (lm - la) / lm);
    }
    Ok(DVector::from_vec(out))
}

/// `w·(MSF(φ^mea_j, φ_j)·φ^mea_{j,k} − φ_{j,k})`, stacked mode-major.
///
/// `analytical` holds the analytical shapes restricted to the sensor DOFs.
pub fn shape_residual(
    measured: &MeasuredModal,
    analytical: &DMatrix<f64>,
    pairing: &ModePairing,
) -> Result<DVector<f64>> {
    let ds = measured.sensor_count();
    if analytical.nrows() != ds {
        return Err(Error::dimension("analytical shape rows", ds, analytical.nrows()));
    }
    let mut out = DVector::zeros(ds * pairing.len());
    for (row, p) in pairing.pairs.iter().enumerate() {
        let pm = measured.shapes.column(p.measured);
        let pa = analytical.column(p.analytical);
        let scale = msf(pm.as_slice(), pa.as_slice())?;
        for k in 0..ds {
            out[row * ds + k] = measured.shape_weights[(k, p.measured)] * (scale * pm[k] - pa[k]);
        }
    }
    Ok(out)
}

/// Sensitivity matrix with rows `[frequency rows; shape rows]`.
///
/// Rows are the exact derivatives of [`freq_residual`] and [`shape_residual`],
/// so frequency rows are `−w_j/λ^mea_j · ∂λ_j/∂αᵢ`.
pub fn residual_jacobian(
    measured: &MeasuredModal,
    sensor_dofs: &[usize],
    pairing: &ModePairing,
    sens: &Sensitivities,
) -> Result<DMatrix<f64>> {
    let ds = measured.sensor_count();
    if sensor_dofs.len() != ds {
        return Err(Error::dimension("sensor dofs", ds, sensor_dofs.len()));
    }
    let n = sens.dlambda.ncols();
    let np = pairing.len();
    let mut jac = DMatrix::zeros(np + np * ds, n);
    for (row, p) in pairing.pairs.iter().enumerate() {
        let t = sens
            .modes
            .iter()
            .position(|&m| m == p.analytical)
            .ok_or_else(|| Error::Domain(format!("no sensitivities for mode {}", p.analytical)))?;
        let lm = measured.eigenvalues[p.measured];
        let wf = measured.freq_weights[p.measured];
        for i in 0..n {
            jac[(row, i)] = -wf / lm * sens.dlambda[(t, i)];
        }
        let pm = measured.shapes.column(p.measured);
        let norm2 = pm.norm_squared();
        if norm2 == 0.0 {
            return Err(Error::Domain("measured mode shape is the zero vector".into()));
        }
        let dphi = &sens.dphi[t];
        for i in 0..n {
            let proj: f64 = sensor_dofs
                .iter()
                .enumerate()
                .map(|(k, &g)| pm[k] * dphi[(g, i)])
                .sum::<f64>()
                / norm2;
            for (k, &g) in sensor_dofs.iter().enumerate() {
                jac[(np + row * ds + k, i)] =
                    measured.shape_weights[(k, p.measured)] * (proj * pm[k] - dphi[(g, i)]);
            }
        }
    }
    Ok(jac)
}

/// Residual, Jacobian and least-squares objective at one parameter vector.
#[derive(Debug, Clone)]
pub struct ResidualEval {
    pub r: DVector<f64>,
    pub jac: DMatrix<f64>,
    /// `½‖r‖²`.
    pub f: f64,
    /// `Jᵀr`.
    pub grad: DVector<f64>,
    /// Gauss-Newton Hessian `JᵀJ`.
    pub gn_hess: DMatrix<f64>,
    pub pairing: ModePairing,
    /// Measured modes left without an analytical partner.
    pub unpaired: Vec<usize>,
    /// Analytical modes used for pairing.
    pub modes: ModeSet,
}

/// Residual vector `[r_f; r_s]` only (no derivatives), with its pairing.
pub fn residual_only(
    model: &ParameterizedModel,
    alpha: &[f64],
    measured: &MeasuredModal,
    config: &ObjectiveConfig,
) -> Result<(DVector<f64>, ModePairing, ModeSet)> {
    let k = assemble_stiffness(model, alpha)?;
    let modes = modal::solve_modes_capped(&k, model.mass(), config.n_series, config.rigid_threshold)?;
    let sensor_dofs = model.sensor_dofs();
    if sensor_dofs.len() != measured.sensor_count() {
        return Err(Error::dimension(
            "sensor count",
            sensor_dofs.len(),
            measured.sensor_count(),
        ));
    }
    let mut modes = modes;
    let mut restricted = modes.restricted(&sensor_dofs, modes.len());
    let pairing = pair_shapes(&measured.shapes, &restricted, config.pairing_threshold)?;
    // orient paired analytical shapes along their measured partners
    for p in &pairing.pairs {
        if measured.shapes.column(p.measured).dot(&restricted.column(p.analytical)) < 0.0 {
            modes.shapes.column_mut(p.analytical).neg_mut();
            restricted.column_mut(p.analytical).neg_mut();
        }
    }
    let rf = freq_residual(measured, &modes.eigenvalues, &pairing)?;
    let rs = shape_residual(measured, &restricted, &pairing)?;
    let mut r = DVector::zeros(rf.len() + rs.len());
    r.rows_mut(0, rf.len()).copy_from(&rf);
    r.rows_mut(rf.len(), rs.len()).copy_from(&rs);
    Ok((r, pairing, modes))
}

/// Assembles `K(α)`, solves, pairs, and evaluates `r`, `J_r`, `f`, `∇f`, `JᵀJ`.
pub fn objective_eval(
    model: &ParameterizedModel,
    alpha: &[f64],
    measured: &MeasuredModal,
    config: &ObjectiveConfig,
) -> Result<ResidualEval> {
    let (r, pairing, modes) = residual_only(model, alpha, measured, config)?;
    let targets: Vec<usize> = pairing.pairs.iter().map(|p| p.analytical).collect();
    let sens = eigen_sensitivities_for(model, &modes, modes.len(), &targets)?;
    let jac = residual_jacobian(measured, &model.sensor_dofs(), &pairing, &sens)?;
    let grad = jac.tr_mul(&r);
    let gn_hess = jac.tr_mul(&jac);
    let unpaired = (0..measured.mode_count())
        .filter(|&j| pairing.analytical_for(j).is_none())
        .collect();
    Ok(ResidualEval {
        f: 0.5 * r.norm_squared(),
        r,
        jac,
        grad,
        gn_hess,
        pairing,
        unpaired,
        modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::ModePair;

    fn one_pair() -> ModePairing {
        ModePairing {
            pairs: vec![ModePair {
                measured: 0,
                analytical: 0,
                mac: 1.0,
            }],
        }
    }

    fn measured_1(lambda: f64, shape: &[f64], w: f64) -> MeasuredModal {
        let ds = shape.len();
        MeasuredModal::with_weights(
            vec![lambda],
            DMatrix::from_column_slice(ds, 1, shape),
            vec![w],
            DMatrix::from_element(ds, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn frequency_residual_from_table_values() {
        let lm = modal::hz_to_eigenvalue(249.03);
        let la = modal::hz_to_eigenvalue(243.00);
        let m = measured_1(lm, &[1.0], 1.0);
        let r = freq_residual(&m, &[la], &one_pair()).unwrap();
        assert!((r[0] - (1.0 - (243.0f64 / 249.03).powi(2))).abs() < 1e-14);
        assert!((r[0] - 0.047_842).abs() < 1e-6);
        assert_eq!(freq_residual(&m, &[lm], &one_pair()).unwrap()[0], 0.0);
        let m2 = measured_1(lm, &[1.0], 2.0);
        let r2 = freq_residual(&m2, &[la], &one_pair()).unwrap();
        assert!((r2[0] - 2.0 * r[0]).abs() < 1e-15);
    }

    #[test]
    fn shape_residual_cases() {
        let phi = [0.3, -0.5, 0.8];
        let a = DMatrix::from_column_slice(3, 1, &phi);
        let m = measured_1(1.0, &phi, 1.0);
        assert!(shape_residual(&m, &a, &one_pair()).unwrap().amax() < 1e-16);
        let scaled: Vec<f64> = phi.iter().map(|v| -3.5 * v).collect();
        let m = measured_1(1.0, &scaled, 1.0);
        assert!(shape_residual(&m, &a, &one_pair()).unwrap().amax() < 1e-15);
        // orthogonal measured shape
        let m = measured_1(1.0, &[0.5, 0.3, 0.0], 1.0);
        let r = shape_residual(&m, &a, &one_pair()).unwrap();
        assert!((r - DVector::from_column_slice(&phi) * -1.0).amax() < 1e-15);
        let m = measured_1(1.0, &[0.0, 0.0, 0.0], 1.0);
        assert!(shape_residual(&m, &a, &one_pair()).is_err());
    }

    #[test]
    fn default_weights() {
        let m = MeasuredModal::new(vec![1.0, 2.0], DMatrix::from_element(4, 2, 1.0)).unwrap();
        assert_eq!(m.freq_weights, vec![1.0, 1.0]);
        assert!(m.shape_weights.iter().all(|&w| (w - 0.5).abs() < 1e-16));
        assert!(MeasuredModal::new(vec![-1.0], DMatrix::from_element(2, 1, 1.0)).is_err());
    }
}
