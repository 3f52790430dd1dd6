//! Symmetric matrices, PSD square roots and Gaussian quadratic forms.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{input, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric `q × q` matrix. Entries are stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Validates squareness, finiteness and symmetry (to 1e-12 relative to
    /// the largest entry), then averages the two triangles.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let q = m.nrows();
        if q == 0 || m.ncols() != q {
            return input(format!("expected a non-empty square matrix, got {}×{}", m.nrows(), m.ncols()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return input("matrix has non-finite entries");
        }
        let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        for j in 0..q {
            for k in (j + 1)..q {
                if (m[(j, k)] - m[(k, j)]).abs() > SYMMETRY_TOL * scale {
                    return input(format!("matrix is not symmetric at ({j}, {k})"));
                }
            }
        }
        let data = DMatrix::from_fn(q, q, |j, k| if j == k { m[(j, j)] } else { 0.5 * (m[(j, k)] + m[(k, j)]) });
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let q = rows.len();
        if rows.iter().any(|r| r.len() != q) {
            return input("rows of a square matrix must all have length q");
        }
        Self::new(DMatrix::from_fn(q, q, |j, k| rows[j][k]))
    }

    pub fn identity(q: usize) -> Self {
        Self { data: DMatrix::identity(q, q) }
    }

    pub fn zeros(q: usize) -> Self {
        Self { data: DMatrix::zeros(q, q) }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[(j, k)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: &self.data * c }
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.data.clone());
        let q = self.dim();
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(q, q, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self.data.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }
}

/// Lower-triangular `L` with `L·Lᵀ` equal to the PSD-repaired input.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    lower: DMatrix<f64>,
    clipped_mass: f64,
    eigenvalues: Vec<f64>,
}

impl PsdFactor {
    /// Wraps an explicit lower-triangular factor.
    pub fn from_lower(lower: DMatrix<f64>) -> Result<Self> {
        let q = lower.nrows();
        if q == 0 || lower.ncols() != q {
            return input("factor must be square and non-empty");
        }
        for j in 0..q {
            for k in (j + 1)..q {
                if lower[(j, k)] != 0.0 {
                    return input(format!("factor is not lower triangular at ({j}, {k})"));
                }
            }
        }
        let gram = &lower * lower.transpose();
        let (eigenvalues, _) = SymMatrix::new(gram)?.eigen();
        Ok(Self { lower, clipped_mass: 0.0, eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Total magnitude of the negative eigenvalues removed during repair.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    /// Repaired eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lower: &self.lower * c,
            clipped_mass: self.clipped_mass * c * c,
            eigenvalues: self.eigenvalues.iter().map(|v| v * c * c).collect(),
        }
    }
}

/// Square root of a symmetric matrix after clipping negative eigenvalues.
///
/// With `m = Q·Λ·Qᵀ`, the square root `B = Q·diag(√λ⁺)` is triangularised by
/// a QR decomposition of `Bᵀ`: if `Bᵀ = Q₁·R` then `B·Bᵀ = Rᵀ·R`, so `L = Rᵀ`
/// is lower triangular. Signs are normalised to a nonnegative diagonal.
pub fn psd_factor(m: &SymMatrix) -> Result<PsdFactor> {
    let q = m.dim();
    let (values, vectors) = m.eigen();
    if values.iter().any(|v| !v.is_finite()) {
        return input("eigendecomposition produced non-finite values");
    }
    let clipped_mass: f64 = values.iter().map(|&v| (-v).max(0.0)).sum();
    let repaired: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();

    let mut root = vectors;
    for (c, &lambda) in repaired.iter().enumerate() {
        let s = lambda.sqrt();
        root.column_mut(c).scale_mut(s);
    }
    let qr = root.transpose().qr();
    let mut upper = qr.r();
    for i in 0..q {
        if upper[(i, i)] < 0.0 {
            upper.row_mut(i).neg_mut();
        }
    }
    let mut lower = upper.transpose();
    // QR leaves exact zeros above the diagonal of R; enforce it for Rᵀ anyway.
    for j in 0..q {
        for k in (j + 1)..q {
            lower[(j, k)] = 0.0;
        }
    }
    Ok(PsdFactor { lower, clipped_mass, eigenvalues: repaired })
}

/// `‖L·w_r‖²` for every row `w_r` of `w`.
pub fn mvn_quadratic_draws(factor: &PsdFactor, w: &DMatrix<f64>) -> Result<Vec<f64>> {
    let q = factor.dim();
    if w.ncols() != q {
        return input(format!("draw matrix has {} columns, factor dimension is {q}", w.ncols()));
    }
    let rows = w.nrows();
    let l = &factor.lower;
    let mut out = vec![0.0; rows];
    let mut component = vec![0.0; rows];
    // Column-major: each column of `w` is contiguous, so the inner loops are
    // straight axpy passes over R values.
    for j in 0..q {
        component.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..=j {
            let coef = l[(j, k)];
            if coef == 0.0 {
                continue;
            }
            let col = w.column(k);
            let col = col.as_slice();
            for (acc, &x) in component.iter_mut().zip(col) {
                *acc += coef * x;
            }
        }
        for (o, &v) in out.iter_mut().zip(&component) {
            *o += v * v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn scalar_square_root() {
        let f = psd_factor(&SymMatrix::from_rows(&[&[4.0]]).unwrap()).unwrap();
        assert_abs_diff_eq!(f.lower()[(0, 0)], 2.0, epsilon = 1e-15);
        assert_eq!(f.clipped_mass(), 0.0);
    }

    #[test]
    fn identity_factor_is_identity() {
        let f = psd_factor(&SymMatrix::identity(2)).unwrap();
        assert!(max_abs_diff(f.lower(), &DMatrix::identity(2, 2)) < 1e-15);
        assert_eq!(f.clipped_mass(), 0.0);
    }

    #[test]
    fn rank_one_reconstructs_by_direct_multiplication() {
        let m = SymMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let f = psd_factor(&m).unwrap();
        let l = f.lower();
        assert_eq!(l[(0, 1)], 0.0);
        for j in 0..2 {
            for k in 0..2 {
                let prod: f64 = (0..2).map(|i| l[(j, i)] * l[(k, i)]).sum();
                assert!((prod - 1.0).abs() < 1e-8, "({j},{k}) = {prod}");
            }
        }
    }

    #[test]
    fn indefinite_input_is_clipped() {
        let m = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        let f = psd_factor(&m).unwrap();
        assert!((f.clipped_mass() - 1.0).abs() < 1e-12);
        // Remaining part is 3·vvᵀ with v = (1,1)/√2.
        let r = f.reconstruct();
        assert!(max_abs_diff(&r, &DMatrix::from_element(2, 2, 1.5)) < 1e-12);
    }

    #[test]
    fn symmetric_constructor_rejects_bad_matrices() {
        assert!(SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(SymMatrix::new(DMatrix::from_row_slice(1, 1, &[f64::NAN])).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(0, 0)).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn quadratic_draws_by_hand() {
        let id = PsdFactor::from_lower(DMatrix::identity(1, 1)).unwrap();
        let w = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert_eq!(mvn_quadratic_draws(&id, &w).unwrap(), vec![4.0]);

        let two = PsdFactor::from_lower(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let w = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert_eq!(mvn_quadratic_draws(&two, &w).unwrap(), vec![4.0, 4.0]);
    }

    #[test]
    fn quadratic_draws_reject_dimension_mismatch() {
        let id = PsdFactor::from_lower(DMatrix::identity(2, 2)).unwrap();
        assert!(mvn_quadratic_draws(&id, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn sampled_covariance_matches_target() {
        let sigma = SymMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let f = psd_factor(&sigma).unwrap();
        let mut rng = crate::rng::RngState::new(5);
        let w = crate::rng::standard_normal_matrix(&mut rng, 1_000_000, 2);
        let v = &w * f.lower().transpose();
        let n = v.nrows() as f64;
        for j in 0..2 {
            for k in 0..2 {
                let cov = v.column(j).dot(&v.column(k)) / n;
                assert!((cov - sigma.get(j, k)).abs() < 0.01, "({j},{k}) = {cov}");
            }
        }
    }
}
