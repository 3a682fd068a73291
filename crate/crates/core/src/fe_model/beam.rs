//! Free-free Euler-Bernoulli beam, two DOFs per node (deflection, rotation).

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};

use super::{ParameterizedModel, Sensor, SubstructureFamily, SubstructureMatrix};
use crate::error::{Error, Result};
use crate::tv::GridShape;

/// Geometry and material of a "wide beam" model. Units: m, Pa, kg/m³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamSpec {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub elasticity: f64,
    pub density: f64,
    pub element_count: usize,
    /// Groups are contiguous stripes with the same number of elements.
    pub group_count: usize,
}

impl Default for BeamSpec {
    fn default() -> Self {
        Self {
            length: 1.05,
            width: 0.34,
            height: 0.07,
            elasticity: 36.6e9,
            density: 2500.0,
            element_count: 13,
            group_count: 13,
        }
    }
}

impl BeamSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("length", self.length),
            ("width", self.width),
            ("height", self.height),
            ("elasticity", self.elasticity),
            ("density", self.density),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(field, format!("must be positive, got {v}")));
            }
        }
        if self.element_count == 0 {
            return Err(Error::validation("element_count", "must be positive"));
        }
        if self.group_count == 0 || !self.element_count.is_multiple_of(self.group_count) {
            return Err(Error::validation(
                "group_count",
                format!(
                    "{} elements cannot be split into {} equal groups",
                    self.element_count, self.group_count
                ),
            ));
        }
        Ok(())
    }
}

fn element_stiffness(ei: f64, l: f64) -> Matrix4<f64> {
    let c = ei / (l * l * l);
    let l2 = l * l;
    Matrix4::new(
        12.0, 6.0 * l, -12.0, 6.0 * l,
        6.0 * l, 4.0 * l2, -6.0 * l, 2.0 * l2,
        -12.0, -6.0 * l, 12.0, -6.0 * l,
        6.0 * l, 2.0 * l2, -6.0 * l, 4.0 * l2,
    ) * c
}

fn element_mass(rho_a: f64, l: f64) -> Matrix4<f64> {
    let c = rho_a * l / 420.0;
    let l2 = l * l;
    Matrix4::new(
        156.0, 22.0 * l, 54.0, -13.0 * l,
        22.0 * l, 4.0 * l2, 13.0 * l, -3.0 * l2,
        54.0, 13.0 * l, 156.0, -22.0 * l,
        -13.0 * l, -3.0 * l2, -22.0 * l, 4.0 * l2,
    ) * c
}

/// Builds the beam with one bending family, one parameter per stripe.
pub fn build_beam_model(spec: &BeamSpec) -> Result<ParameterizedModel> {
    spec.validate()?;
    let ne = spec.element_count;
    let ng = spec.group_count;
    let per_group = ne / ng;
    let nodes = ne + 1;
    let d = 2 * nodes;
    let le = spec.length / ne as f64;
    let area = spec.width * spec.height;
    let inertia = spec.width * spec.height.powi(3) / 12.0;

    let ke = element_stiffness(spec.elasticity * inertia, le);
    let me = element_mass(spec.density * area, le);

    let mut mass = DMatrix::zeros(d, d);
    let mut k0 = DMatrix::zeros(d, d);
    let mut matrices = Vec::with_capacity(ng);
    let mut centers = Vec::with_capacity(ng);
    for g in 0..ng {
        let first_node = g * per_group;
        let dofs: Vec<usize> = (2 * first_node..2 * (first_node + per_group + 1)).collect();
        let mut block = DMatrix::zeros(dofs.len(), dofs.len());
        for local in 0..per_group {
            let off = 2 * local;
            for a in 0..4 {
                for b in 0..4 {
                    block[(off + a, off + b)] += ke[(a, b)];
                    mass[(2 * first_node + off + a, 2 * first_node + off + b)] += me[(a, b)];
                }
            }
        }
        let sub = SubstructureMatrix::new(d, dofs, block)?;
        sub.add_scaled_to(&mut k0, 1.0);
        matrices.push(sub);
        centers.push(((g as f64 + 0.5) * spec.length / ng as f64, 0.0));
    }
    let family = SubstructureFamily::unbounded("bending-E", matrices)?;
    let sensors = (0..nodes)
        .map(|i| Sensor {
            dof: 2 * i,
            x: i as f64 * le,
            y: 0.0,
        })
        .collect();
    ParameterizedModel::new(
        k0,
        mass,
        vec![family],
        sensors,
        centers,
        vec![spec.elasticity; ng],
        GridShape::new(1, ng)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_dofs() {
        let m = build_beam_model(&BeamSpec {
            element_count: 2,
            group_count: 2,
            ..BeamSpec::default()
        })
        .unwrap();
        assert_eq!(m.dof_count(), 6);
        assert_eq!(m.sensors().len(), 3);
        assert_eq!(m.parameter_count(), 2);
    }

    #[test]
    fn rejects_uneven_grouping() {
        let err = build_beam_model(&BeamSpec {
            element_count: 13,
            group_count: 5,
            ..BeamSpec::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::Validation { field: "group_count", .. }));
        let err = build_beam_model(&BeamSpec {
            density: -1.0,
            ..BeamSpec::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::Validation { field: "density", .. }));
    }

    #[test]
    fn group_centers_at_stripe_midpoints() {
        let m = build_beam_model(&BeamSpec::default()).unwrap();
        let c = m.group_centers();
        assert!((c[0].0 - 1.05 / 26.0).abs() < 1e-15);
        assert!((c[12].0 - 1.05 * 25.0 / 26.0).abs() < 1e-12);
    }
}
