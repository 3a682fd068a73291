//! Free-free Kirchhoff plate on a rectangular mesh of 4-node non-conforming
//! (12-DOF) elements. Nodal DOFs are `w`, `θx = ∂w/∂y`, `θy = −∂w/∂x`.

use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

use super::{ParameterizedModel, Sensor, SubstructureFamily, SubstructureMatrix, GAUSS4};
use crate::error::{Error, Result};
use crate::tv::GridShape;

type Mat12 = SMatrix<f64, 12, 12>;

/// Plate geometry, material, mesh and grouping. Units: m, Pa, kg/m³.
///
/// `length`/`elements_x`/`groups_x` run along the long side; groups form a
/// `groups_y × groups_x` grid whose parameters are ordered column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateSpec {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub elasticity: f64,
    pub poisson: f64,
    pub density: f64,
    pub elements_x: usize,
    pub elements_y: usize,
    pub groups_x: usize,
    pub groups_y: usize,
}

impl Default for PlateSpec {
    fn default() -> Self {
        Self {
            length: 1.05,
            width: 0.34,
            thickness: 0.07,
            elasticity: 36.6e9,
            poisson: 0.2,
            density: 2500.0,
            elements_x: 13,
            elements_y: 5,
            groups_x: 13,
            groups_y: 5,
        }
    }
}

impl PlateSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("length", self.length),
            ("width", self.width),
            ("thickness", self.thickness),
            ("elasticity", self.elasticity),
            ("density", self.density),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(field, format!("must be positive, got {v}")));
            }
        }
        if !(0.0..0.5).contains(&self.poisson) {
            return Err(Error::validation(
                "poisson",
                format!("must lie in [0, 0.5), got {}", self.poisson),
            ));
        }
        for (field, e, g) in [
            ("groups_x", self.elements_x, self.groups_x),
            ("groups_y", self.elements_y, self.groups_y),
        ] {
            if e == 0 || g == 0 || e % g != 0 {
                return Err(Error::validation(
                    field,
                    format!("{e} elements cannot be split into {g} equal groups"),
                ));
            }
        }
        Ok(())
    }
}

const TERMS: [(i32, i32); 12] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
    (3, 1),
    (1, 3),
];

/// d^k/dt^k of t^p.
fn dpow(t: f64, p: i32, k: i32) -> f64 {
    if k > p {
        return 0.0;
    }
    let coef: i32 = (0..k).map(|i| p - i).product();
    coef as f64 * t.powi(p - k)
}

/// Row of basis derivatives ∂^(kx+ky) / ∂ξ^kx ∂η^ky at (ξ, η).
fn basis(xi: f64, eta: f64, kx: i32, ky: i32) -> [f64; 12] {
    let mut out = [0.0; 12];
    for (o, &(px, py)) in out.iter_mut().zip(TERMS.iter()) {
        *o = dpow(xi, px, kx) * dpow(eta, py, ky);
    }
    out
}

/// Element stiffness and mass for an `a × b` element.
fn element_matrices(a: f64, b: f64, spec: &PlateSpec) -> (Mat12, Mat12) {
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    // nodal dof = C · coefficients
    let mut c = Mat12::zeros();
    for (n, &(xi, eta)) in corners.iter().enumerate() {
        let w = basis(xi, eta, 0, 0);
        let dy = basis(xi, eta, 0, 1);
        let dx = basis(xi, eta, 1, 0);
        for k in 0..12 {
            c[(3 * n, k)] = w[k];
            c[(3 * n + 1, k)] = 2.0 / b * dy[k];
            c[(3 * n + 2, k)] = -2.0 / a * dx[k];
        }
    }
    let cinv = c.try_inverse().expect("element interpolation matrix is regular");

    let t = spec.thickness;
    let nu = spec.poisson;
    let dflex = spec.elasticity * t.powi(3) / (12.0 * (1.0 - nu * nu));
    let dmat = nalgebra::Matrix3::new(1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, (1.0 - nu) / 2.0) * dflex;
    let jac = a * b / 4.0;

    let mut k = Mat12::zeros();
    let mut m = Mat12::zeros();
    for &(xi, wx) in &GAUSS4 {
        for &(eta, wy) in &GAUSS4 {
            let wt = wx * wy * jac;
            let bxx = basis(xi, eta, 2, 0);
            let byy = basis(xi, eta, 0, 2);
            let bxy = basis(xi, eta, 1, 1);
            let mut curv = SMatrix::<f64, 3, 12>::zeros();
            for j in 0..12 {
                curv[(0, j)] = -4.0 / (a * a) * bxx[j];
                curv[(1, j)] = -4.0 / (b * b) * byy[j];
                curv[(2, j)] = -8.0 / (a * b) * bxy[j];
            }
            let bm = curv * cinv;
            k += bm.transpose() * dmat * bm * wt;
            let nrow = SMatrix::<f64, 1, 12>::from_row_slice(&basis(xi, eta, 0, 0)) * cinv;
            m += nrow.transpose() * nrow * (spec.density * t * wt);
        }
    }
    (0.5 * (k + k.transpose()), 0.5 * (m + m.transpose()))
}

/// Builds the plate with one bending family, one parameter per group patch.
pub fn build_plate_model(spec: &PlateSpec) -> Result<ParameterizedModel> {
    spec.validate()?;
    let (nx, ny) = (spec.elements_x, spec.elements_y);
    let (gx, gy) = (spec.groups_x, spec.groups_y);
    let nodes_y = ny + 1;
    let node_count = (nx + 1) * nodes_y;
    let d = 3 * node_count;
    let a = spec.length / nx as f64;
    let b = spec.width / ny as f64;
    let (ke, me) = element_matrices(a, b, spec);

    let node_id = |ix: usize, iy: usize| ix * nodes_y + iy;
    let element_dofs = |ex: usize, ey: usize| -> [usize; 12] {
        let ns = [
            node_id(ex, ey),
            node_id(ex + 1, ey),
            node_id(ex + 1, ey + 1),
            node_id(ex, ey + 1),
        ];
        let mut out = [0; 12];
        for (n, &id) in ns.iter().enumerate() {
            for k in 0..3 {
                out[3 * n + k] = 3 * id + k;
            }
        }
        out
    };

    let mut mass = DMatrix::zeros(d, d);
    for ex in 0..nx {
        for ey in 0..ny {
            let dofs = element_dofs(ex, ey);
            for i in 0..12 {
                for j in 0..12 {
                    mass[(dofs[i], dofs[j])] += me[(i, j)];
                }
            }
        }
    }

    let (px, py) = (nx / gx, ny / gy);
    let mut k0 = DMatrix::zeros(d, d);
    let mut matrices = Vec::with_capacity(gx * gy);
    let mut centers = Vec::with_capacity(gx * gy);
    // column-major over the (groups_y × groups_x) grid
    for jx in 0..gx {
        for iy in 0..gy {
            let mut dofs: Vec<usize> = Vec::new();
            for ex in jx * px..(jx + 1) * px {
                for ey in iy * py..(iy + 1) * py {
                    dofs.extend_from_slice(&element_dofs(ex, ey));
                }
            }
            dofs.sort_unstable();
            dofs.dedup();
            let pos = |g: usize| dofs.binary_search(&g).expect("dof in group");
            let mut block = DMatrix::zeros(dofs.len(), dofs.len());
            for ex in jx * px..(jx + 1) * px {
                for ey in iy * py..(iy + 1) * py {
                    let ed = element_dofs(ex, ey);
                    for i in 0..12 {
                        for j in 0..12 {
                            block[(pos(ed[i]), pos(ed[j]))] += ke[(i, j)];
                        }
                    }
                }
            }
            let sub = SubstructureMatrix::new(d, dofs, block)?;
            sub.add_scaled_to(&mut k0, 1.0);
            matrices.push(sub);
            centers.push((
                (jx as f64 + 0.5) * spec.length / gx as f64,
                (iy as f64 + 0.5) * spec.width / gy as f64,
            ));
        }
    }

    let tol = 1e-9 * spec.length.max(spec.width);
    let mut sensors: Vec<Sensor> = Vec::with_capacity(centers.len());
    for &(cx, cy) in &centers {
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for ix in 0..=nx {
            for iy in 0..=ny {
                let (x, y) = (ix as f64 * a, iy as f64 * b);
                let dist = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                let id = node_id(ix, iy);
                let better = match best {
                    None => true,
                    Some((bd, bid, _, _)) => dist < bd - tol || (dist <= bd + tol && id < bid),
                };
                if better {
                    best = Some((dist, id, x, y));
                }
            }
        }
        let (_, id, x, y) = best.expect("mesh has nodes");
        if !sensors.iter().any(|s| s.dof == 3 * id) {
            sensors.push(Sensor { dof: 3 * id, x, y });
        }
    }

    let family = SubstructureFamily::unbounded("bending-E", matrices)?;
    ParameterizedModel::new(
        k0,
        mass,
        vec![family],
        sensors,
        centers,
        vec![spec.elasticity; gx * gy],
        GridShape::new(gy, gx)?,
    )
}
