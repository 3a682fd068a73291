//! Parameterized finite element models.
//!
//! A model carries the undamaged stiffness `K⁰`, the mass matrix `M` and one or
//! more families of substructure matrices `Kᵢ`. The updated stiffness is
//! `K(α) = K⁰ − Σ αᵢKᵢ`, where `αᵢ = (E⁰ᵢ − Eᵢ)/E⁰ᵢ` is the damage index of
//! group `i`.

mod beam;
mod plate;

pub use beam::{build_beam_model, BeamSpec};
pub use plate::{build_plate_model, PlateSpec};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tv::GridShape;

/// Relative tolerance for the symmetry checks on user-supplied matrices.
const SYMMETRY_TOL: f64 = 1e-10;

/// A constant expanded-order matrix stored as a dense block on a DOF subset.
///
/// Substructure matrices touch only the DOFs of their group's elements, so the
/// block form keeps sensitivities cheap on larger meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstructureMatrix {
    dim: usize,
    dofs: Vec<usize>,
    block: DMatrix<f64>,
}

impl SubstructureMatrix {
    pub fn new(dim: usize, dofs: Vec<usize>, block: DMatrix<f64>) -> Result<Self> {
        if block.nrows() != dofs.len() || block.ncols() != dofs.len() {
            return Err(Error::dimension(
                "substructure block",
                dofs.len(),
                block.nrows().max(block.ncols()),
            ));
        }
        if let Some(&bad) = dofs.iter().find(|&&d| d >= dim) {
            return Err(Error::validation(
                "dofs",
                format!("dof {bad} outside model of size {dim}"),
            ));
        }
        let mut seen = dofs.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != dofs.len() {
            return Err(Error::validation("dofs", "duplicate dof indices"));
        }
        Ok(Self { dim, dofs, block })
    }

    /// Wraps a full `d × d` matrix.
    pub fn from_dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dimension("substructure matrix", m.nrows(), m.ncols()));
        }
        let dim = m.nrows();
        Self::new(dim, (0..dim).collect(), m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        self.add_scaled_to(&mut out, 1.0);
        out
    }

    /// `target += scale · K`.
    pub fn add_scaled_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        for (a, &ra) in self.dofs.iter().enumerate() {
            for (b, &cb) in self.dofs.iter().enumerate() {
                target[(ra, cb)] += scale * self.block[(a, b)];
            }
        }
    }

    /// `K · v` as a full-length vector.
    pub fn mul_vec(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (a, &ra) in self.dofs.iter().enumerate() {
            let mut acc = 0.0;
            for (b, &cb) in self.dofs.iter().enumerate() {
                acc += self.block[(a, b)] * v[cb];
            }
            out[ra] = acc;
        }
        out
    }

    /// `uᵀ K v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (a, &ra) in self.dofs.iter().enumerate() {
            let mut row = 0.0;
            for (b, &cb) in self.dofs.iter().enumerate() {
                row += self.block[(a, b)] * v[cb];
            }
            acc += u[ra] * row;
        }
        acc
    }

    fn is_symmetric(&self) -> bool {
        is_symmetric(&self.block)
    }
}

/// One family of updating parameters (e.g. bending stiffness per group).
#[derive(Debug, Clone, PartialEq)]
pub struct SubstructureFamily {
    pub name: String,
    pub matrices: Vec<SubstructureMatrix>,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
}

impl SubstructureFamily {
    pub fn new(
        name: impl Into<String>,
        matrices: Vec<SubstructureMatrix>,
        lower_bounds: Vec<f64>,
        upper_bounds: Vec<f64>,
    ) -> Result<Self> {
        let n = matrices.len();
        if lower_bounds.len() != n {
            return Err(Error::dimension("family lower bounds", n, lower_bounds.len()));
        }
        if upper_bounds.len() != n {
            return Err(Error::dimension("family upper bounds", n, upper_bounds.len()));
        }
        if lower_bounds.iter().zip(&upper_bounds).any(|(l, u)| l > u) {
            return Err(Error::validation("bounds", "lower bound exceeds upper bound"));
        }
        Ok(Self {
            name: name.into(),
            matrices,
            lower_bounds,
            upper_bounds,
        })
    }

    /// A family with unbounded parameters.
    pub fn unbounded(name: impl Into<String>, matrices: Vec<SubstructureMatrix>) -> Result<Self> {
        let n = matrices.len();
        Self::new(
            name,
            matrices,
            vec![f64::NEG_INFINITY; n],
            vec![f64::INFINITY; n],
        )
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// Sensor location and the DOF it observes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub dof: usize,
    pub x: f64,
    pub y: f64,
}

/// `K⁰`, `M` and the substructure families of an updatable model.
#[derive(Debug, Clone)]
pub struct ParameterizedModel {
    k0: DMatrix<f64>,
    m: DMatrix<f64>,
    families: Vec<SubstructureFamily>,
    sensors: Vec<Sensor>,
    group_centers: Vec<(f64, f64)>,
    /// Reference modulus E⁰ per updating parameter (Pa).
    reference_moduli: Vec<f64>,
    grid: GridShape,
}

impl ParameterizedModel {
    /// Validates and assembles a model.
    ///
    /// `group_centers` and `reference_moduli` must have one entry per updating
    /// parameter; `grid` describes how parameters are laid out column-major.
    pub fn new(
        k0: DMatrix<f64>,
        m: DMatrix<f64>,
        families: Vec<SubstructureFamily>,
        sensors: Vec<Sensor>,
        group_centers: Vec<(f64, f64)>,
        reference_moduli: Vec<f64>,
        grid: GridShape,
    ) -> Result<Self> {
        let d = k0.nrows();
        if k0.ncols() != d {
            return Err(Error::dimension("k0 columns", d, k0.ncols()));
        }
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::dimension("mass matrix", d, m.nrows()));
        }
        if !is_symmetric(&k0) {
            return Err(Error::validation("k0", "matrix is not symmetric"));
        }
        if !is_symmetric(&m) {
            return Err(Error::validation("m", "matrix is not symmetric"));
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::Factorization);
        }
        let mut n = 0;
        for fam in &families {
            for km in &fam.matrices {
                if km.dim() != d {
                    return Err(Error::dimension("family matrix", d, km.dim()));
                }
                if !km.is_symmetric() {
                    return Err(Error::validation(
                        "families",
                        format!("matrix in family `{}` is not symmetric", fam.name),
                    ));
                }
            }
            n += fam.len();
        }
        if group_centers.len() != n {
            return Err(Error::dimension("group centers", n, group_centers.len()));
        }
        if reference_moduli.len() != n {
            return Err(Error::dimension("reference moduli", n, reference_moduli.len()));
        }
        if grid.len() != n {
            return Err(Error::dimension("parameter grid", n, grid.len()));
        }
        if let Some(s) = sensors.iter().find(|s| s.dof >= d) {
            return Err(Error::validation(
                "sensor_dofs",
                format!("dof {} outside model of size {d}", s.dof),
            ));
        }
        Ok(Self {
            k0,
            m,
            families,
            sensors,
            group_centers,
            reference_moduli,
            grid,
        })
    }

    pub fn k0(&self) -> &DMatrix<f64> {
        &self.k0
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn families(&self) -> &[SubstructureFamily] {
        &self.families
    }

    pub fn dof_count(&self) -> usize {
        self.k0.nrows()
    }

    /// Total number of updating parameters over all families.
    pub fn parameter_count(&self) -> usize {
        self.families.iter().map(SubstructureFamily::len).sum()
    }

    /// Substructure matrices in parameter order.
    pub fn substructures(&self) -> impl Iterator<Item = &SubstructureMatrix> {
        self.families.iter().flat_map(|f| f.matrices.iter())
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn sensor_dofs(&self) -> Vec<usize> {
        self.sensors.iter().map(|s| s.dof).collect()
    }

    pub fn group_centers(&self) -> &[(f64, f64)] {
        &self.group_centers
    }

    pub fn reference_moduli(&self) -> &[f64] {
        &self.reference_moduli
    }

    pub fn grid(&self) -> GridShape {
        self.grid
    }

    /// Lower and upper bounds concatenated over families.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self
            .families
            .iter()
            .flat_map(|f| f.lower_bounds.iter().copied())
            .collect();
        let hi = self
            .families
            .iter()
            .flat_map(|f| f.upper_bounds.iter().copied())
            .collect();
        (lo, hi)
    }

    /// Replaces the parameter bounds (concatenated over families).
    pub fn set_bounds(&mut self, lower: &[f64], upper: &[f64]) -> Result<()> {
        let n = self.parameter_count();
        if lower.len() != n {
            return Err(Error::dimension("lower bounds", n, lower.len()));
        }
        if upper.len() != n {
            return Err(Error::dimension("upper bounds", n, upper.len()));
        }
        if lower.iter().zip(upper).any(|(l, u)| l > u) {
            return Err(Error::validation("bounds", "lower bound exceeds upper bound"));
        }
        let mut offset = 0;
        for fam in &mut self.families {
            let k = fam.len();
            fam.lower_bounds = lower[offset..offset + k].to_vec();
            fam.upper_bounds = upper[offset..offset + k].to_vec();
            offset += k;
        }
        Ok(())
    }
}

/// `K(α) = K⁰ − Σ αᵢKᵢ` over all families.
pub fn assemble_stiffness(model: &ParameterizedModel, alpha: &[f64]) -> Result<DMatrix<f64>> {
    let n = model.parameter_count();
    if alpha.len() != n {
        return Err(Error::dimension("alpha", n, alpha.len()));
    }
    let mut k = model.k0.clone();
    for (a, km) in alpha.iter().zip(model.substructures()) {
        if *a != 0.0 {
            km.add_scaled_to(&mut k, -a);
        }
    }
    Ok(k)
}

/// Damage indices `(E⁰ − E)/E⁰`.
pub fn damage_indices(e0: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    if e0.len() != e.len() {
        return Err(Error::dimension("moduli", e0.len(), e.len()));
    }
    e0.iter()
        .zip(e)
        .map(|(&r, &v)| {
            if r > 0.0 {
                Ok((r - v) / r)
            } else {
                Err(Error::Domain(format!("reference modulus must be positive, got {r}")))
            }
        })
        .collect()
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    a.nrows() == a.ncols()
        && (0..a.nrows())
            .all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= SYMMETRY_TOL * scale))
}

/// Gauss-Legendre nodes and weights on [-1, 1] (4 points).
pub(crate) const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> ParameterizedModel {
        let k0 = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let k1 = SubstructureMatrix::from_dense(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 0.0, 0.0, 0.0],
        ))
        .unwrap();
        let k2 = SubstructureMatrix::new(2, vec![1], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let fam = SubstructureFamily::unbounded("toy", vec![k1, k2]).unwrap();
        ParameterizedModel::new(
            k0,
            DMatrix::identity(2, 2),
            vec![fam],
            vec![],
            vec![(0.0, 0.0), (1.0, 0.0)],
            vec![1.0, 1.0],
            GridShape::new(1, 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_alpha_gives_k0() {
        let m = toy_model();
        assert_eq!(assemble_stiffness(&m, &[0.0, 0.0]).unwrap(), *m.k0());
    }

    #[test]
    fn unit_alpha_subtracts_one_matrix() {
        let m = toy_model();
        let k = assemble_stiffness(&m, &[1.0, 0.0]).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0]));
    }

    #[test]
    fn alpha_length_mismatch() {
        let m = toy_model();
        assert!(matches!(
            assemble_stiffness(&m, &[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn damage_index_examples() {
        assert_eq!(damage_indices(&[2.0], &[2.0]).unwrap(), vec![0.0]);
        assert_eq!(damage_indices(&[2.0], &[0.0]).unwrap(), vec![1.0]);
        let di = damage_indices(&[36.6e9], &[35.9e9]).unwrap()[0];
        assert!((di - 0.019_125_683).abs() < 1e-8);
        assert!(matches!(
            damage_indices(&[0.0], &[1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rejects_indefinite_mass() {
        let k1 = SubstructureMatrix::from_dense(DMatrix::identity(2, 2)).unwrap();
        let r = ParameterizedModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            vec![SubstructureFamily::unbounded("f", vec![k1]).unwrap()],
            vec![],
            vec![(0.0, 0.0)],
            vec![1.0],
            GridShape::new(1, 1).unwrap(),
        );
        assert_eq!(r.unwrap_err(), Error::Factorization);
    }

    #[test]
    fn block_ops_match_dense() {
        let blk = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let s = SubstructureMatrix::new(4, vec![3, 1], blk).unwrap();
        let dense = s.to_dense();
        let u = [0.5, -1.0, 2.0, 0.25];
        let v = [1.0, 2.0, -3.0, 4.0];
        let dv = &dense * DVector::from_column_slice(&v);
        assert_eq!(s.mul_vec(&v), dv);
        let expect = DVector::from_column_slice(&u).dot(&dv);
        assert!((s.bilinear(&u, &v) - expect).abs() < 1e-14);
    }
}
