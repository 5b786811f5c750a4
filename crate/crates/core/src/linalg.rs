//! Dense complex helpers shared by the Gaussian, Lyapunov and oracle paths.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Thin QR with a positive real diagonal of R.
pub struct ThinQr {
    pub q: CMat,
    pub r_diag: Vec<f64>,
}

pub fn thin_qr(a: CMat) -> ThinQr {
    let n = a.ncols();
    debug_assert!(a.nrows() >= n);
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    let mut r_diag = vec![0.0; n];
    for j in 0..n {
        let d = r[(j, j)];
        let norm = d.norm();
        if norm > 0.0 && norm.is_finite() {
            let phase = d / norm;
            for x in q.column_mut(j).iter_mut() {
                *x *= phase;
            }
        }
        r_diag[j] = norm;
    }
    ThinQr { q, r_diag }
}

/// Numerical rank from a positive R diagonal, relative to its largest entry.
pub fn rank_from_diag(diag: &[f64], rel_tol: f64) -> usize {
    let max = diag.iter().cloned().fold(0.0_f64, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return 0;
    }
    diag.iter().filter(|&&d| d > rel_tol * max).count()
}

/// `V f(Λ) V†` for a Hermitian matrix.
pub fn hermitian_map<F: Fn(f64) -> C64>(h: &CMat, f: F) -> CMat {
    if h.nrows() == 0 {
        return h.clone();
    }
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let fj = f(lambda);
        for x in scaled.column_mut(j).iter_mut() {
            *x *= fj;
        }
    }
    scaled * v.adjoint()
}

/// Eigenvalues of a Hermitian matrix sorted ascending with matching eigenvectors.
pub fn hermitian_eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let eig = h.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = CMat::from_fn(h.nrows(), n, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// max |A†A − I|.
pub fn isometry_residual(a: &CMat) -> f64 {
    let g = a.adjoint() * a;
    let n = g.nrows();
    max_abs(&(g - CMat::identity(n, n)))
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

/// Splits a complex matrix into its real part and the largest imaginary magnitude.
pub fn real_part(m: &CMat) -> (RMat, f64) {
    let im = m.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
    (m.map(|x| x.re), im)
}

/// Left multiplication by a matrix supported on a few rows and columns.
#[derive(Clone, Debug)]
pub struct LocalOp {
    pub rows: Vec<usize>,
    pub block: CMat,
}

impl LocalOp {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn apply_left(&self, m: &mut CMat) {
        let k = self.rows.len();
        let mut x = vec![ZERO; k];
        for c in 0..m.ncols() {
            for (r, &row) in self.rows.iter().enumerate() {
                x[r] = m[(row, c)];
            }
            for (r, &row) in self.rows.iter().enumerate() {
                let mut acc = ZERO;
                for (s, xs) in x.iter().enumerate() {
                    acc += self.block[(r, s)] * xs;
                }
                m[(row, c)] = acc;
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> CMat {
        let mut d = CMat::identity(n, n);
        for (r, &i) in self.rows.iter().enumerate() {
            for (s, &j) in self.rows.iter().enumerate() {
                d[(i, j)] = self.block[(r, s)];
            }
        }
        d
    }

    /// Restricts a dense matrix to its non-trivial support. Entries outside the
    /// support must match the identity.
    pub fn from_dense(d: &CMat, tol: f64) -> Self {
        let n = d.nrows();
        let mut rows = Vec::new();
        for i in 0..n {
            let touched = (0..n).any(|j| {
                let target = if i == j { ONE } else { ZERO };
                (d[(i, j)] - target).norm() > tol || (d[(j, i)] - target).norm() > tol
            });
            if touched {
                rows.push(i);
            }
        }
        let block = CMat::from_fn(rows.len(), rows.len(), |r, s| d[(rows[r], rows[s])]);
        LocalOp { rows, block }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_diag_positive_and_reconstructs() {
        let a = CMat::from_fn(6, 3, |i, j| C64::new((i * 3 + j) as f64 * 0.3 - 1.0, (i as f64 - j as f64).sin()));
        let qr = thin_qr(a.clone());
        assert!(isometry_residual(&qr.q) < 1e-12);
        let r = qr.q.adjoint() * &a;
        for j in 0..3 {
            assert!((r[(j, j)].re - qr.r_diag[j]).abs() < 1e-12);
            assert!(r[(j, j)].im.abs() < 1e-12);
            for i in j + 1..3 {
                assert!(r[(i, j)].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hermitian_exp_of_zero_is_identity() {
        let z = CMat::zeros(4, 4);
        let e = hermitian_map(&z, |x| C64::new(x.exp(), 0.0));
        assert!(max_abs(&(e - CMat::identity(4, 4))) < 1e-14);
    }

    #[test]
    fn local_op_roundtrip() {
        let mut d = CMat::identity(5, 5);
        d[(1, 3)] = C64::new(0.5, 0.1);
        d[(3, 1)] = C64::new(0.5, -0.1);
        d[(1, 1)] = C64::new(2.0, 0.0);
        let op = LocalOp::from_dense(&d, 0.0);
        assert_eq!(op.rows, vec![1, 3]);
        let mut m = CMat::from_fn(5, 2, |i, j| C64::new(i as f64, j as f64));
        let expect = &d * &m;
        op.apply_left(&mut m);
        assert!(max_abs(&(m - expect)) < 1e-14);
        assert!(max_abs(&(op.to_dense(5) - d)) < 1e-15);
    }
}
