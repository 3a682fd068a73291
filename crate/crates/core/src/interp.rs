//! Damage-function regularization: the parameters live on a coarse subset of
//! the groups and are interpolated to the full grid, `α = L·α^P`.
//!
//! One-dimensional layouts use piecewise-linear tent functions; 2D layouts use
//! linear triangle shape functions on a Delaunay triangulation of the coarse
//! points.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for point location and in-circle predicates.
const GEOM_TOL: f64 = 1e-10;

/// Coarse subset `P` of the parameter indices with the coordinates of each point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    /// 0-based, strictly increasing.
    indices: Vec<usize>,
    coords: Vec<(f64, f64)>,
}

impl CoarseGrid {
    /// Selects `indices` (0-based) out of the full list of group centers.
    pub fn new(indices: Vec<usize>, centers: &[(f64, f64)]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::validation("coarse_grid", "no coarse points"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(
                "coarse_grid",
                "indices must be strictly increasing",
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= centers.len()) {
            return Err(Error::validation(
                "coarse_grid",
                format!("index {} exceeds parameter count {}", bad + 1, centers.len()),
            ));
        }
        let coords: Vec<(f64, f64)> = indices.iter().map(|&i| centers[i]).collect();
        for (a, pa) in coords.iter().enumerate() {
            if coords[..a].iter().any(|pb| pa == pb) {
                return Err(Error::validation("coarse_grid", "coincident coarse points"));
            }
        }
        Ok(Self { indices, coords })
    }

    /// Same as [`CoarseGrid::new`] with 1-based indices.
    pub fn from_one_based(indices: &[usize], centers: &[(f64, f64)]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::validation("coarse_grid", "indices are 1-based"));
        }
        Self::new(indices.iter().map(|i| i - 1).collect(), centers)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `n × n₁` matrix of basis values, `L[p, k] = Ñ_{P_k}(x_p, y_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationMatrix {
    pub l: DMatrix<f64>,
}

impl InterpolationMatrix {
    pub fn fine_count(&self) -> usize {
        self.l.nrows()
    }

    pub fn coarse_count(&self) -> usize {
        self.l.ncols()
    }
}

/// Piecewise-linear tent basis on the x coordinates of the coarse points.
pub fn tent_basis(coarse: &CoarseGrid, fine: &[f64]) -> Result<InterpolationMatrix> {
    let mut order: Vec<usize> = (0..coarse.len()).collect();
    order.sort_by(|&a, &b| coarse.coords[a].0.total_cmp(&coarse.coords[b].0));
    let xs: Vec<f64> = order.iter().map(|&k| coarse.coords[k].0).collect();
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::validation("coarse_grid", "repeated x coordinate"));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let tol = GEOM_TOL * (hi - lo).abs().max(1.0);
    let mut l = DMatrix::zeros(fine.len(), coarse.len());
    for (p, &x) in fine.iter().enumerate() {
        if x < lo - tol || x > hi + tol {
            return Err(Error::Extrapolation { index: p, x, y: 0.0 });
        }
        if let Some(k) = xs.iter().position(|&c| (c - x).abs() <= tol) {
            l[(p, order[k])] = 1.0;
            continue;
        }
        let seg = xs.windows(2).position(|w| x >= w[0] && x <= w[1]).expect("inside span");
        let t = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
        l[(p, order[seg])] = 1.0 - t;
        l[(p, order[seg + 1])] = t;
    }
    for (k, &idx) in coarse.indices.iter().enumerate() {
        if idx < fine.len() {
            l.row_mut(idx).fill(0.0);
            l[(idx, k)] = 1.0;
        }
    }
    Ok(InterpolationMatrix { l })
}

/// Triangles over the coarse points (vertex indices into the coarse list,
/// counter-clockwise) with their signed areas.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub triangles: Vec<[usize; 3]>,
    pub areas: Vec<f64>,
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Positive when `d` lies strictly inside the circumcircle of CCW `(a, b, c)`.
fn in_circle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    let (adx, ady) = (a.0 - d.0, a.1 - d.1);
    let (bdx, bdy) = (b.0 - d.0, b.1 - d.1);
    let (cdx, cdy) = (c.0 - d.0, c.1 - d.1);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Delaunay triangulation by incremental Bowyer-Watson insertion.
pub fn triangulate(coarse: &CoarseGrid) -> Result<Triangulation> {
    let n = coarse.len();
    if n < 3 {
        return Err(Error::DegenerateGeometry);
    }
    // normalise to the unit box for well-scaled predicates
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &coarse.coords {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let scale = (xmax - xmin).max(ymax - ymin);
    let mut pts: Vec<(f64, f64)> = coarse
        .coords
        .iter()
        .map(|&(x, y)| ((x - xmin) / scale, (y - ymin) / scale))
        .collect();
    let collinear = (2..n).all(|k| {
        (1..k).all(|j| orient(pts[0], pts[j], pts[k]).abs() <= GEOM_TOL)
    });
    if collinear {
        return Err(Error::DegenerateGeometry);
    }

    let big = 1.0e3;
    pts.push((-big, -big));
    pts.push((big, -big));
    pts.push((0.5, big));
    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];

    for p in 0..n {
        let d = pts[p];
        let bad: Vec<bool> = tris
            .iter()
            .map(|t| in_circle(pts[t[0]], pts[t[1]], pts[t[2]], d) > GEOM_TOL)
            .collect();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (t, _) in tris.iter().zip(&bad).filter(|(_, &b)| b) {
            for e in 0..3 {
                edges.push((t[e], t[(e + 1) % 3]));
            }
        }
        let boundary: Vec<(usize, usize)> = edges
            .iter()
            .copied()
            .filter(|&(a, b)| !edges.contains(&(b, a)))
            .collect();
        let mut keep: Vec<[usize; 3]> = tris
            .iter()
            .zip(&bad)
            .filter(|(_, &b)| !b)
            .map(|(t, _)| *t)
            .collect();
        keep.extend(boundary.into_iter().map(|(a, b)| [a, b, p]));
        tris = keep;
    }

    let mut triangles: Vec<[usize; 3]> = tris.into_iter().filter(|t| t.iter().all(|&v| v < n)).collect();
    // canonical order: rotate so the smallest vertex leads, then sort
    for t in &mut triangles {
        let r = (0..3).min_by_key(|&i| t[i]).unwrap();
        t.rotate_left(r);
    }
    triangles.sort_unstable();
    let areas = triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| coarse.coords[v]);
            0.5 * orient(a, b, c)
        })
        .collect();
    Ok(Triangulation { triangles, areas })
}

/// Linear shape functions `N_i = (a_i + b_i x + c_i y)/(2S)` of a triangle.
pub fn triangle_shape_functions(
    vertices: [(f64, f64); 3],
    point: (f64, f64),
) -> [f64; 3] {
    let [(x1, y1), (x2, y2), (x3, y3)] = vertices;
    let two_s = (x2 * y3 - x3 * y2) - (x1 * y3 - x3 * y1) + (x1 * y2 - x2 * y1);
    let (x, y) = point;
    let n = |(xj, yj): (f64, f64), (xk, yk): (f64, f64)| {
        let a = xj * yk - xk * yj;
        let b = yj - yk;
        let c = xk - xj;
        (a + b * x + c * y) / two_s
    };
    [n((x2, y2), (x3, y3)), n((x3, y3), (x1, y1)), n((x1, y1), (x2, y2))]
}

/// `L[p, k]` = shape-function value of coarse vertex `k` at fine point `p`.
///
/// A fine point on a shared edge is assigned to the lowest-index triangle.
pub fn shape_matrix(
    coarse: &CoarseGrid,
    tri: &Triangulation,
    fine: &[(f64, f64)],
) -> Result<InterpolationMatrix> {
    let mut l = DMatrix::zeros(fine.len(), coarse.len());
    for (p, &pt) in fine.iter().enumerate() {
        if let Some(k) = coarse.indices.iter().position(|&i| i == p) {
            l[(p, k)] = 1.0;
            continue;
        }
        let hit = tri.triangles.iter().find_map(|t| {
            let verts = t.map(|v| coarse.coords[v]);
            let w = triangle_shape_functions(verts, pt);
            w.iter().all(|&v| v >= -GEOM_TOL).then_some((t, w))
        });
        let (t, w) = hit.ok_or(Error::Extrapolation {
            index: p,
            x: pt.0,
            y: pt.1,
        })?;
        for (&v, &wv) in t.iter().zip(&w) {
            l[(p, v)] = wv.clamp(0.0, 1.0);
        }
    }
    Ok(InterpolationMatrix { l })
}

/// Builds `L` for the given fine points: tent functions when every point shares
/// the same `y`, triangle shape functions otherwise.
pub fn interpolation_matrix(
    coarse: &CoarseGrid,
    fine: &[(f64, f64)],
) -> Result<InterpolationMatrix> {
    let y0 = fine.first().map_or(0.0, |p| p.1);
    if fine.iter().all(|p| p.1 == y0) {
        let xs: Vec<f64> = fine.iter().map(|p| p.0).collect();
        tent_basis(coarse, &xs)
    } else {
        let tri = triangulate(coarse)?;
        shape_matrix(coarse, &tri, fine)
    }
}

/// `α = L·α^P`.
pub fn expand_params(l: &InterpolationMatrix, alpha_coarse: &[f64]) -> Result<DVector<f64>> {
    if alpha_coarse.len() != l.coarse_count() {
        return Err(Error::dimension("coarse parameters", l.coarse_count(), alpha_coarse.len()));
    }
    Ok(&l.l * DVector::from_column_slice(alpha_coarse))
}

/// `J_r(α^P) = J_r(α)·L`.
pub fn project_jacobian(jr: &DMatrix<f64>, l: &InterpolationMatrix) -> Result<DMatrix<f64>> {
    if jr.ncols() != l.fine_count() {
        return Err(Error::dimension("jacobian columns", l.fine_count(), jr.ncols()));
    }
    Ok(jr * &l.l)
}
