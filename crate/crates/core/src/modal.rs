//! Undamped generalized eigenproblem `Kφ = λMφ`, MAC pairing, modal scale
//! factors and Fox-Kapoor eigenpair sensitivities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_model::ParameterizedModel;

/// Eigenvalues below `(2π · 1 Hz)²` are treated as rigid-body modes.
pub const DEFAULT_RIGID_THRESHOLD: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Default MAC threshold for accepting a mode pair.
pub const DEFAULT_PAIRING_THRESHOLD: f64 = 0.7;

/// Relative eigenvalue separation below which modes count as repeated.
const DEGENERACY_TOL: f64 = 1e-8;

/// Retained elastic modes, ascending, mass-normalized.
#[derive(Debug, Clone)]
pub struct ModeSet {
    /// `λ_k = ω_k²` in rad²/s².
    pub eigenvalues: Vec<f64>,
    /// Column `k` is `φ_k`.
    pub shapes: DMatrix<f64>,
    /// Number of rigid-body modes that were skipped.
    pub rigid_count: usize,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `f_k = √λ_k / 2π`.
    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| eigenvalue_to_hz(l)).collect()
    }

    /// Mode shapes restricted to the given DOFs (rows) and the first `count` modes.
    pub fn restricted(&self, dofs: &[usize], count: usize) -> DMatrix<f64> {
        let count = count.min(self.len());
        DMatrix::from_fn(dofs.len(), count, |r, c| self.shapes[(dofs[r], c)])
    }
}

pub fn eigenvalue_to_hz(lambda: f64) -> f64 {
    lambda.max(0.0).sqrt() / (2.0 * std::f64::consts::PI)
}

pub fn hz_to_eigenvalue(f: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f;
    w * w
}

/// Solves `Kφ = λMφ` for the `n_modes` lowest modes above `rigid_threshold`.
///
/// Eigenvectors are mass-normalized and signed so that the first entry of
/// (numerically) largest magnitude is positive.
pub fn solve_modes(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    n_modes: usize,
    rigid_threshold: f64,
) -> Result<ModeSet> {
    solve_modes_inner(k, m, n_modes, rigid_threshold, false)
}

/// Like [`solve_modes`] but returns fewer modes instead of failing when fewer
/// than `n_modes` elastic modes exist.
pub fn solve_modes_capped(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    n_modes: usize,
    rigid_threshold: f64,
) -> Result<ModeSet> {
    solve_modes_inner(k, m, n_modes, rigid_threshold, true)
}

fn solve_modes_inner(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    n_modes: usize,
    rigid_threshold: f64,
    cap: bool,
) -> Result<ModeSet> {
    let d = k.nrows();
    if k.ncols() != d {
        return Err(Error::dimension("stiffness columns", d, k.ncols()));
    }
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::dimension("mass matrix", d, m.nrows()));
    }
    let chol = m.clone().cholesky().ok_or(Error::Factorization)?;
    let l = chol.l();
    // A = L⁻¹ K L⁻ᵀ
    let x = l.solve_lower_triangular(k).ok_or(Error::Factorization)?;
    let mut a = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::Factorization)?;
    let at = a.transpose();
    a += at;
    a *= 0.5;

    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let rigid_count = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] < rigid_threshold)
        .count();
    let available = d - rigid_count;
    let n_modes = if cap { n_modes.min(available) } else { n_modes };
    if n_modes > available {
        return Err(Error::ModeRange {
            requested: n_modes,
            available,
        });
    }
    let picked = &order[rigid_count..rigid_count + n_modes];
    let y = DMatrix::from_fn(d, n_modes, |r, c| eig.eigenvectors[(r, picked[c])]);
    let mut shapes = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(Error::Factorization)?;
    for mut col in shapes.column_iter_mut() {
        let amax = col.amax();
        if let Some(first) = col.iter().position(|v| v.abs() >= amax * (1.0 - 1e-9)) {
            if col[first] < 0.0 {
                col.neg_mut();
            }
        }
    }
    // Rayleigh quotient refinement
    let eigenvalues = shapes
        .column_iter()
        .map(|phi| (k * phi).dot(&phi) / (m * phi).dot(&phi))
        .collect();
    Ok(ModeSet {
        eigenvalues,
        shapes,
        rigid_count,
    })
}

fn nonzero(v: &[f64], what: &str) -> Result<f64> {
    let n2: f64 = v.iter().map(|x| x * x).sum();
    if n2 > 0.0 {
        Ok(n2)
    } else {
        Err(Error::Domain(format!("{what} mode shape is the zero vector")))
    }
}

/// Modal assurance criterion `|aᵀb|² / (‖a‖²‖b‖²)`.
pub fn mac(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dimension("mac", a.len(), b.len()));
    }
    let na = nonzero(a, "first")?;
    let nb = nonzero(b, "second")?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot * dot / (na * nb)).min(1.0))
}

/// Modal scale factor `⟨measured, analytical⟩ / ‖measured‖²`.
pub fn msf(measured: &[f64], analytical: &[f64]) -> Result<f64> {
    if measured.len() != analytical.len() {
        return Err(Error::dimension("msf", measured.len(), analytical.len()));
    }
    let nm = nonzero(measured, "measured")?;
    let dot: f64 = measured.iter().zip(analytical).map(|(x, y)| x * y).sum();
    Ok(dot / nm)
}

/// One measured/analytical correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    pub measured: usize,
    pub analytical: usize,
    pub mac: f64,
}

/// Injective assignment of measured to analytical modes, in measured order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModePairing {
    pub pairs: Vec<ModePair>,
}

impl ModePairing {
    pub fn analytical_for(&self, measured: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|p| p.measured == measured)
            .map(|p| p.analytical)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Greedy pairing by descending MAC between the columns of `measured` and
/// `analytical` (both on the same sensor DOFs).
pub fn pair_shapes(
    measured: &DMatrix<f64>,
    analytical: &DMatrix<f64>,
    threshold: f64,
) -> Result<ModePairing> {
    if measured.nrows() != analytical.nrows() {
        return Err(Error::dimension(
            "pairing sensors",
            measured.nrows(),
            analytical.nrows(),
        ));
    }
    let mut cand = Vec::new();
    for i in 0..measured.ncols() {
        let a = measured.column(i);
        for j in 0..analytical.ncols() {
            let b = analytical.column(j);
            if let Ok(v) = mac(a.as_slice(), b.as_slice()) {
                if v >= threshold {
                    cand.push(ModePair {
                        measured: i,
                        analytical: j,
                        mac: v,
                    });
                }
            }
        }
    }
    cand.sort_by(|x, y| {
        y.mac
            .total_cmp(&x.mac)
            .then(x.measured.cmp(&y.measured))
            .then(x.analytical.cmp(&y.analytical))
    });
    let mut used_m = vec![false; measured.ncols()];
    let mut used_a = vec![false; analytical.ncols()];
    let mut pairs = Vec::new();
    for c in cand {
        if !used_m[c.measured] && !used_a[c.analytical] {
            used_m[c.measured] = true;
            used_a[c.analytical] = true;
            pairs.push(c);
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairing { threshold });
    }
    pairs.sort_by_key(|p| p.measured);
    Ok(ModePairing { pairs })
}

/// Pairs measured shapes against the analytical modes restricted to `sensor_dofs`.
pub fn pair_modes(
    measured_shapes: &DMatrix<f64>,
    analytical: &ModeSet,
    sensor_dofs: &[usize],
    threshold: f64,
) -> Result<ModePairing> {
    let restricted = analytical.restricted(sensor_dofs, analytical.len());
    pair_shapes(measured_shapes, &restricted, threshold)
}

/// Eigenvalue and eigenvector derivatives with respect to the updating parameters.
#[derive(Debug, Clone)]
pub struct Sensitivities {
    /// Modes the derivatives were computed for (indices into the mode set).
    pub modes: Vec<usize>,
    /// Row `t`, column `i`: `∂λ_{modes[t]}/∂αᵢ`.
    pub dlambda: DMatrix<f64>,
    /// Entry `t` is `d × n`; column `i` is `∂φ_{modes[t]}/∂αᵢ`.
    pub dphi: Vec<DMatrix<f64>>,
}

/// Fox-Kapoor sensitivities for every mode among the first `n_series`.
pub fn eigen_sensitivities(
    model: &ParameterizedModel,
    modes: &ModeSet,
    n_series: usize,
) -> Result<Sensitivities> {
    let targets: Vec<usize> = (0..n_series.min(modes.len())).collect();
    eigen_sensitivities_for(model, modes, n_series, &targets)
}

/// Fox-Kapoor sensitivities for selected modes.
///
/// `∂λ_j/∂αᵢ = −φ_jᵀKᵢφ_j` is exact; `∂φ_j/∂αᵢ = Σ_{q≠j} (φ_qᵀKᵢφ_j)/(λ_q − λ_j)·φ_q`
/// is truncated to the first `n_series` retained modes.
pub fn eigen_sensitivities_for(
    model: &ParameterizedModel,
    modes: &ModeSet,
    n_series: usize,
    targets: &[usize],
) -> Result<Sensitivities> {
    let d = model.dof_count();
    if modes.shapes.nrows() != d {
        return Err(Error::dimension("mode shape length", d, modes.shapes.nrows()));
    }
    if n_series > modes.len() {
        return Err(Error::ModeRange {
            requested: n_series,
            available: modes.len(),
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= n_series) {
        return Err(Error::ModeRange {
            requested: t + 1,
            available: n_series,
        });
    }
    let lam = &modes.eigenvalues;
    for q in 1..n_series {
        let (a, b) = (lam[q - 1], lam[q]);
        if (b - a).abs() <= DEGENERACY_TOL * a.abs().max(b.abs()) {
            return Err(Error::DegenerateModes(q - 1, q));
        }
    }

    let n = model.parameter_count();
    let phi = &modes.shapes;
    let mut dlambda = DMatrix::zeros(targets.len(), n);
    let mut dphi = Vec::with_capacity(targets.len());
    let mut coef = vec![0.0; n_series];
    let mut local_phi = Vec::new();
    let mut kv = Vec::new();
    for (t, &j) in targets.iter().enumerate() {
        let mut dj = DMatrix::zeros(d, n);
        for (i, km) in model.substructures().enumerate() {
            let dofs = km.dofs();
            let block = km.block();
            local_phi.clear();
            local_phi.extend(dofs.iter().map(|&g| phi[(g, j)]));
            // Kᵢφ_j on the block DOFs
            kv.clear();
            kv.extend((0..dofs.len()).map(|a| {
                (0..dofs.len())
                    .map(|b| block[(a, b)] * local_phi[b])
                    .sum::<f64>()
            }));
            for (q, c) in coef.iter_mut().enumerate() {
                *c = dofs
                    .iter()
                    .zip(&kv)
                    .map(|(&g, &w)| phi[(g, q)] * w)
                    .sum::<f64>();
            }
            dlambda[(t, i)] = -coef[j];
            let mut col = dj.column_mut(i);
            for q in 0..n_series {
                if q == j || coef[q] == 0.0 {
                    continue;
                }
                let s = coef[q] / (lam[q] - lam[j]);
                col.axpy(s, &phi.column(q), 1.0);
            }
        }
        dphi.push(dj);
    }
    Ok(Sensitivities {
        modes: targets.to_vec(),
        dlambda,
        dphi,
    })
}

/// Dense helper: `φ` of mode `j` as a vector.
pub fn mode_vector(modes: &ModeSet, j: usize) -> DVector<f64> {
    modes.shapes.column(j).into_owned()
}
