//! Total-variation penalties on the parameter grid.
//!
//! Parameters are laid out column-major on a `d1 × d2` grid `A`, so
//! `α[(j−1)·d1 + i] = A[i, j]`. Forward differences run down a column
//! (`Dh`, towards row `i+1`) and along a row (`Dv`, towards column `j+1`);
//! the last row/column contributes a zero difference.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub d1: usize,
    pub d2: usize,
}

impl GridShape {
    pub fn new(d1: usize, d2: usize) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(Error::validation("grid", format!("empty grid {d1}×{d2}")));
        }
        Ok(Self { d1, d2 })
    }

    pub fn len(&self) -> usize {
        self.d1 * self.d2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column-major index of cell `(i, j)` (0-based).
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.d1 + i
    }
}

/// Reshapes `alpha` column-major into the `d1 × d2` grid.
pub fn grid_map(alpha: &[f64], shape: GridShape) -> Result<DMatrix<f64>> {
    if alpha.len() != shape.len() {
        return Err(Error::dimension("grid", shape.len(), alpha.len()));
    }
    Ok(DMatrix::from_column_slice(shape.d1, shape.d2, alpha))
}

/// Forward differences `(Dh, Dv)` of cell `(i, j)`.
#[inline]
fn cell_diffs(a: &DMatrix<f64>, i: usize, j: usize) -> (f64, f64) {
    let (d1, d2) = a.shape();
    let dh = if i + 1 < d1 { a[(i + 1, j)] - a[(i, j)] } else { 0.0 };
    let dv = if j + 1 < d2 { a[(i, j + 1)] - a[(i, j)] } else { 0.0 };
    (dh, dv)
}

fn cells(a: &DMatrix<f64>) -> impl Iterator<Item = (usize, usize)> {
    let (d1, d2) = a.shape();
    (0..d2).flat_map(move |j| (0..d1).map(move |i| (i, j)))
}

/// Isotropic total variation `Σ ‖D_ij A‖₂`.
pub fn var1(a: &DMatrix<f64>) -> f64 {
    cells(a)
        .map(|(i, j)| {
            let (dh, dv) = cell_diffs(a, i, j);
            dh.hypot(dv)
        })
        .sum()
}

/// Squared-difference total variation `Σ Dh² + Dv²`.
pub fn var2(a: &DMatrix<f64>) -> f64 {
    cells(a)
        .map(|(i, j)| {
            let (dh, dv) = cell_diffs(a, i, j);
            dh * dh + dv * dv
        })
        .sum()
}

/// The Huber function: quadratic below `mu`, linear above (ties are quadratic).
pub fn huber(x: f64, mu: f64) -> f64 {
    let ax = x.abs();
    if ax <= mu {
        ax * ax / (2.0 * mu)
    } else {
        ax - mu / 2.0
    }
}

/// The pseudo-Huber function `μ(√(1 + (x/μ)²) − 1)`.
pub fn pseudo_huber(x: f64, mu: f64) -> f64 {
    mu * ((1.0 + (x / mu).powi(2)).sqrt() - 1.0)
}

/// Symmetric matrix stored by its nonzero upper diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    diagonals: BTreeMap<usize, Vec<f64>>,
}

impl BandMatrix {
    /// Empty band with the given superdiagonal offsets (0 = main diagonal).
    pub fn new(n: usize, offsets: &[usize]) -> Self {
        let diagonals = offsets
            .iter()
            .filter(|&&o| o < n.max(1))
            .map(|&o| (o, vec![0.0; n - o]))
            .collect();
        Self { n, diagonals }
    }

    /// The band used by TV Hessians: offsets `{0, 1, d1 − 1, d1}`.
    pub fn tv_band(shape: GridShape) -> Self {
        Self::new(shape.len(), &[0, 1, shape.d1 - 1, shape.d1])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn offsets(&self) -> impl Iterator<Item = usize> + '_ {
        self.diagonals.keys().copied()
    }

    /// Adds `v` at `(i, j)` and, implicitly, `(j, i)`.
    ///
    /// Panics if the position lies outside the stored band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let diag = self
            .diagonals
            .get_mut(&(hi - lo))
            .unwrap_or_else(|| panic!("offset {} outside band", hi - lo));
        diag[lo] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.diagonals.get(&(hi - lo)).map_or(0.0, |d| d[lo])
    }

    pub fn scale(&mut self, s: f64) {
        for d in self.diagonals.values_mut() {
            d.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (&o, d) in &self.diagonals {
            for (k, &v) in d.iter().enumerate() {
                out[(k, k + o)] = v;
                out[(k + o, k)] = v;
            }
        }
        out
    }

    /// `target += s · self` for a dense square target.
    pub fn add_to_dense(&self, target: &mut DMatrix<f64>, s: f64) {
        for (&o, d) in &self.diagonals {
            for (k, &v) in d.iter().enumerate() {
                target[(k, k + o)] += s * v;
                if o != 0 {
                    target[(k + o, k)] += s * v;
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for (&o, d) in &self.diagonals {
            for (k, &v) in d.iter().enumerate() {
                y[k] += v * x[k + o];
                if o != 0 {
                    y[k + o] += v * x[k];
                }
            }
        }
        y
    }
}

/// Value, gradient and Hessian of a penalty at a parameter grid.
#[derive(Debug, Clone)]
pub struct PenaltyEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: BandMatrix,
}

/// Per-cell scalar profile `φ(‖D‖)` expressed through
/// `value`, `ψ = φ′(x)/x` and `χ = ψ′(x)/x` so that the cell Hessian with
/// respect to `D = (Dh, Dv)` is `ψ·I + χ·D·Dᵀ`.
trait CellProfile {
    fn eval(&self, dh: f64, dv: f64) -> (f64, f64, f64);
}

struct HuberProfile(f64);

impl CellProfile for HuberProfile {
    fn eval(&self, dh: f64, dv: f64) -> (f64, f64, f64) {
        let mu = self.0;
        let sq = dh * dh + dv * dv;
        let x = sq.sqrt();
        if x <= mu {
            (sq / (2.0 * mu), 1.0 / mu, 0.0)
        } else {
            (x - mu / 2.0, 1.0 / x, -1.0 / (x * x * x))
        }
    }
}

struct PseudoHuberProfile(f64);

impl CellProfile for PseudoHuberProfile {
    fn eval(&self, dh: f64, dv: f64) -> (f64, f64, f64) {
        let mu = self.0;
        let s = (1.0 + (dh * dh + dv * dv) / (mu * mu)).sqrt();
        let value = mu * (s - 1.0);
        (value, 1.0 / (mu * s), -1.0 / (mu * mu * mu * s * s * s))
    }
}

/// Assembles value, gradient and band Hessian cell by cell.
///
/// Each cell couples `A[i,j]` (index `k`), `A[i+1,j]` (`k+1`) and
/// `A[i,j+1]` (`k+d1`); `D = B·(a_k, a_{k+1}, a_{k+d1})` with
/// `B = [[−1, 1, 0], [−1, 0, 1]]`.
fn assemble<P: CellProfile>(a: &DMatrix<f64>, profile: &P) -> PenaltyEval {
    let (d1, d2) = a.shape();
    let shape = GridShape { d1, d2 };
    let n = shape.len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(n);
    let mut hess = BandMatrix::tv_band(shape);
    for (i, j) in cells(a) {
        let k = shape.index(i, j);
        let down = (i + 1 < d1).then_some(k + 1);
        let right = (j + 1 < d2).then_some(k + d1);
        let (dh, dv) = cell_diffs(a, i, j);
        let (v, psi, chi) = profile.eval(dh, dv);
        value += v;

        // (index, ∂Dh/∂a, ∂Dv/∂a) for the entries this cell touches
        let mut taps = [(k, 0.0, 0.0); 3];
        let mut m = 1;
        if let Some(kd) = down {
            taps[0].1 = -1.0;
            taps[m] = (kd, 1.0, 0.0);
            m += 1;
        }
        if let Some(kr) = right {
            taps[0].2 = -1.0;
            taps[m] = (kr, 0.0, 1.0);
            m += 1;
        }
        let taps = &taps[..m];

        // dφ/dD = ψ·D, Hessian w.r.t. D is ψI + χDDᵀ
        let (gh, gv) = (psi * dh, psi * dv);
        let hhh = psi + chi * dh * dh;
        let hvv = psi + chi * dv * dv;
        let hhv = chi * dh * dv;
        for (p, &(ip, hp, vp)) in taps.iter().enumerate() {
            grad[ip] += hp * gh + vp * gv;
            for &(iq, hq, vq) in &taps[p..] {
                let h = hp * hq * hhh + (hp * vq + vp * hq) * hhv + vp * vq * hvv;
                if h != 0.0 || ip == iq {
                    hess.add(ip.min(iq), ip.max(iq), h);
                }
            }
        }
    }
    PenaltyEval { value, grad, hess }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("threshold mu must be positive, got {mu}")))
    }
}

/// Huber total variation `Σ φᴴ_μ(‖D_ij A‖₂)` with gradient and Hessian.
pub fn huber_tv(a: &DMatrix<f64>, mu: f64) -> Result<PenaltyEval> {
    check_mu(mu)?;
    Ok(assemble(a, &HuberProfile(mu)))
}

/// Pseudo-Huber total variation `Σ φᴾᴴ_μ(‖D_ij A‖₂)` with gradient and Hessian.
pub fn pseudo_huber_tv(a: &DMatrix<f64>, mu: f64) -> Result<PenaltyEval> {
    check_mu(mu)?;
    Ok(assemble(a, &PseudoHuberProfile(mu)))
}

/// `Var₂` with its (constant) Hessian `2(J_vᵀJ_v + J_hᵀJ_h)`.
pub fn l2_tv(a: &DMatrix<f64>) -> PenaltyEval {
    struct Quadratic;
    impl CellProfile for Quadratic {
        fn eval(&self, dh: f64, dv: f64) -> (f64, f64, f64) {
            (dh * dh + dv * dv, 2.0, 0.0)
        }
    }
    assemble(a, &Quadratic)
}

/// Forward-difference matrix `D(n)`, `(n−1) × n`, rows `(…, −1, 1, …)`.
pub fn difference_matrix(n: usize) -> DMatrix<f64> {
    let rows = n.saturating_sub(1);
    let mut d = DMatrix::zeros(rows, n);
    for r in 0..rows {
        d[(r, r)] = -1.0;
        d[(r, r + 1)] = 1.0;
    }
    d
}

/// Difference operators acting on the column-major parameter vector.
#[derive(Debug, Clone)]
pub struct DiffOperators {
    /// `J_v α` stacks the row-direction differences `A[i,j+1] − A[i,j]`.
    pub jv: DMatrix<f64>,
    /// `J_h α` stacks the column-direction differences; `d2` copies of `D(d1)`.
    pub jh: DMatrix<f64>,
}

impl DiffOperators {
    pub fn new(shape: GridShape) -> Self {
        let (d1, d2) = (shape.d1, shape.d2);
        let n = shape.len();
        let jv_rows = if d2 > 1 { n - d1 } else { 0 };
        let mut jv = DMatrix::zeros(jv_rows, n);
        for r in 0..jv_rows {
            jv[(r, r)] = -1.0;
            jv[(r, r + d1)] = 1.0;
        }
        let block = difference_matrix(d1);
        let mut jh = DMatrix::zeros(block.nrows() * d2, n);
        for c in 0..d2 {
            jh.view_mut((c * block.nrows(), c * d1), block.shape())
                .copy_from(&block);
        }
        Self { jv, jh }
    }
}

/// Appends `√(2λ)·J_v α` and `√(2λ)·J_h α` to a residual and its Jacobian so
/// that `½‖r_exp‖² = ½‖r‖² + λ·Var₂(A)`.
pub fn l2tv_expand(
    r: &DVector<f64>,
    jr: &DMatrix<f64>,
    alpha: &[f64],
    shape: GridShape,
    lambda_reg: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !(lambda_reg >= 0.0) {
        return Err(Error::Domain(format!(
            "regularization parameter must be non-negative, got {lambda_reg}"
        )));
    }
    let n = shape.len();
    if alpha.len() != n {
        return Err(Error::dimension("alpha", n, alpha.len()));
    }
    if jr.ncols() != n {
        return Err(Error::dimension("jacobian columns", n, jr.ncols()));
    }
    if jr.nrows() != r.len() {
        return Err(Error::dimension("jacobian rows", r.len(), jr.nrows()));
    }
    let ops = DiffOperators::new(shape);
    let s = (2.0 * lambda_reg).sqrt();
    let a = DVector::from_column_slice(alpha);
    let m = r.len();
    let (mv, mh) = (ops.jv.nrows(), ops.jh.nrows());
    let mut r_exp = DVector::zeros(m + mv + mh);
    r_exp.rows_mut(0, m).copy_from(r);
    r_exp.rows_mut(m, mv).copy_from(&(&ops.jv * &a * s));
    r_exp.rows_mut(m + mv, mh).copy_from(&(&ops.jh * &a * s));
    let mut j_exp = DMatrix::zeros(m + mv + mh, n);
    j_exp.rows_mut(0, m).copy_from(jr);
    j_exp.rows_mut(m, mv).copy_from(&(&ops.jv * s));
    j_exp.rows_mut(m + mv, mh).copy_from(&(&ops.jh * s));
    Ok((r_exp, j_exp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn grid_map_column_major() {
        let a = grid_map(&[1.0, 2.0, 3.0, 4.0], GridShape::new(2, 2).unwrap()).unwrap();
        assert_eq!(a, g(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        let row = grid_map(&[1.0, 2.0, 3.0], GridShape::new(1, 3).unwrap()).unwrap();
        assert_eq!(row, g(1, 3, &[1.0, 2.0, 3.0]));
        assert!(matches!(
            grid_map(&[0.0; 5], GridShape::new(2, 2).unwrap()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn variation_examples() {
        let step = g(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(var1(&DMatrix::from_element(3, 4, 2.5)), 0.0);
        assert_eq!(var1(&step), 2.0);
        assert_eq!(var1(&g(1, 3, &[0.0, 1.0, 0.0])), 2.0);
        assert_eq!(var2(&DMatrix::from_element(3, 4, 2.5)), 0.0);
        assert_eq!(var2(&step), 2.0);
        assert!((var2(&(step.clone() * 3.0)) - 9.0 * var2(&step)).abs() < 1e-14);
    }

    #[test]
    fn huber_examples() {
        let step = g(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let e = huber_tv(&step, 0.1).unwrap();
        assert!((e.value - 1.9).abs() < 1e-14);
        assert!((huber(0.1, 0.1) - 0.05).abs() < 1e-17);
        assert!((0.1f64 - 0.1 / 2.0 - 0.05).abs() < 1e-17);
        assert!(huber_tv(&step, 0.0).is_err());
        assert!(huber_tv(&step, -1.0).is_err());
    }

    #[test]
    fn constant_grid_has_quadratic_band() {
        let a = DMatrix::from_element(3, 4, 0.7);
        let mu = 0.2;
        let e = huber_tv(&a, mu).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.grad.iter().all(|&x| x == 0.0));
        // the quadratic branch Hessian is (1/μ)·(J_vᵀJ_v + J_hᵀJ_h)
        let ops = DiffOperators::new(GridShape::new(3, 4).unwrap());
        let expect = (ops.jv.transpose() * &ops.jv + ops.jh.transpose() * &ops.jh) / mu;
        assert!((e.hess.to_dense() - expect).amax() < 1e-12);
    }

    #[test]
    fn pseudo_huber_examples() {
        let step = g(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let e = pseudo_huber_tv(&step, 0.1).unwrap();
        let expect = 2.0 * 0.1 * (101f64.sqrt() - 1.0);
        assert!((e.value - expect).abs() < 1e-12);
        assert!((e.value - 1.80998).abs() < 1e-5);
        assert_eq!(pseudo_huber_tv(&DMatrix::from_element(2, 3, 1.0), 0.3).unwrap().value, 0.0);
    }

    #[test]
    fn difference_matrix_shape() {
        assert_eq!(
            difference_matrix(3),
            g(2, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0])
        );
    }

    #[test]
    fn l2tv_zero_lambda_appends_zeros() {
        let shape = GridShape::new(2, 3).unwrap();
        let r = DVector::from_vec(vec![0.3, -0.2]);
        let jr = DMatrix::from_element(2, 6, 1.0);
        let alpha = [0.1, 0.5, -0.3, 0.2, 0.9, 0.0];
        let (re, je) = l2tv_expand(&r, &jr, &alpha, shape, 0.0).unwrap();
        assert_eq!(re.len(), 2 + 4 + 3);
        assert!(re.rows(2, 7).iter().all(|&x| x == 0.0));
        assert!(je.rows(2, 7).iter().all(|&x| x == 0.0));
        assert!(l2tv_expand(&r, &jr, &alpha, shape, -1.0).is_err());
    }

    #[test]
    fn one_dimensional_operators() {
        let ops = DiffOperators::new(GridShape::new(1, 4).unwrap());
        assert_eq!(ops.jv, difference_matrix(4));
        assert_eq!(ops.jh.nrows(), 0);
        let ops = DiffOperators::new(GridShape::new(4, 1).unwrap());
        assert_eq!(ops.jh, difference_matrix(4));
        assert_eq!(ops.jv.nrows(), 0);
    }

    #[test]
    fn band_roundtrip() {
        let mut b = BandMatrix::new(4, &[0, 1, 3]);
        b.add(0, 0, 1.0);
        b.add(2, 1, 2.0);
        b.add(0, 3, 5.0);
        let d = b.to_dense();
        assert_eq!(d[(1, 2)], 2.0);
        assert_eq!(d[(3, 0)], 5.0);
        assert_eq!(b.get(3, 0), 5.0);
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(b.mul_vec(&x), &d * DVector::from_column_slice(&x));
    }
}
