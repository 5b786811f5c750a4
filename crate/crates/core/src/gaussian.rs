//! Fermionic Gaussian pure states in the complex-fermion and Majorana bases.
//!
//! Complex basis: φ = (c₁…c_L, c₁†…c_L†). Majorana basis: γ_{2j−1} = c_j + c_j†,
//! γ_{2j} = −i(c_j − c_j†), so γ = Ω φ with ΩΩ† = 2. Indices in code are 0-based.

use crate::error::{Error, Result};
use crate::linalg::{
    isometry_residual, max_abs, max_abs_real, rank_from_diag, real_part, thin_qr, to_complex, CMat, LocalOp, RMat, C64, I, ONE, ZERO,
};

const STATE_MAGIC: &[u8; 4] = b"MJGS";
const STATE_VERSION: u32 = 1;

/// Tolerances used for asserted (never repaired) properties.
pub mod tol {
    pub const ISOMETRY: f64 = 1e-10;
    pub const COVARIANCE_IMAG: f64 = 1e-8;
    pub const RANK: f64 = 1e-13;
}

#[derive(Clone, Debug)]
pub struct BasisMap {
    modes: usize,
    omega: CMat,
}

impl BasisMap {
    pub fn new(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidSize("mode count must be at least 1".into()));
        }
        let n = 2 * modes;
        let mut omega = CMat::zeros(n, n);
        for j in 0..modes {
            omega[(2 * j, j)] = ONE;
            omega[(2 * j, modes + j)] = ONE;
            omega[(2 * j + 1, j)] = -I;
            omega[(2 * j + 1, modes + j)] = I;
        }
        Ok(BasisMap { modes, omega })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn omega(&self) -> &CMat {
        &self.omega
    }

    /// Ω M Ω†.
    pub fn to_majorana(&self, m: &CMat) -> CMat {
        &self.omega * m * self.omega.adjoint()
    }

    /// Ω† M Ω.
    pub fn to_complex(&self, m: &CMat) -> CMat {
        self.omega.adjoint() * m * &self.omega
    }

    /// BdG matrix H̃ of the quadratic form (i/4) γᵀ A γ, i.e. φ† H̃ φ.
    pub fn bdg_from_majorana(&self, a: &RMat) -> CMat {
        self.to_complex(&to_complex(a)) * C64::new(0.0, 0.25)
    }

    /// Inverse of [`bdg_from_majorana`](Self::bdg_from_majorana): A = −i Ω H̃ Ω†.
    /// Returns the real part and the discarded imaginary magnitude.
    pub fn majorana_from_bdg(&self, h: &CMat) -> (RMat, f64) {
        real_part(&(self.to_majorana(h) * (-I)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPureState {
    modes: usize,
    isometry: CMat,
}

impl GaussianPureState {
    pub fn vacuum(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidSize("mode count must be at least 1".into()));
        }
        let mut u = CMat::zeros(2 * modes, modes);
        for j in 0..modes {
            u[(j, j)] = ONE;
        }
        Ok(GaussianPureState { modes, isometry: u })
    }

    pub fn from_isometry(u: CMat) -> Result<Self> {
        let modes = u.ncols();
        if modes == 0 || u.nrows() != 2 * modes {
            return Err(Error::Shape(format!("isometry must be 2L×L, got {}×{}", u.nrows(), u.ncols())));
        }
        let res = isometry_residual(&u);
        if res > tol::ISOMETRY {
            return Err(Error::Corrupted(format!("isometry residual {res:.3e}")));
        }
        let state = GaussianPureState { modes, isometry: u };
        let pairing = state.pairing_residual();
        if pairing > tol::ISOMETRY {
            return Err(Error::Corrupted(format!("annihilators do not anticommute: {pairing:.3e}")));
        }
        Ok(state)
    }

    /// max |{d_i, d_j}| for d = 𝕌†φ, i.e. max |U_topᵀ U_bot + U_botᵀ U_top|.
    pub fn pairing_residual(&self) -> f64 {
        let l = self.modes;
        let top = self.isometry.rows(0, l);
        let bot = self.isometry.rows(l, l);
        let m = top.transpose() * bot;
        max_abs(&(&m + m.transpose()))
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn isometry(&self) -> &CMat {
        &self.isometry
    }

    pub fn isometry_residual(&self) -> f64 {
        isometry_residual(&self.isometry)
    }

    pub fn correlation_matrix(&self) -> CorrelationMatrix {
        CorrelationMatrix { modes: self.modes, c: &self.isometry * self.isometry.adjoint() }
    }

    /// Single entry C_ab = (𝕌𝕌†)_ab.
    pub fn correlation_entry(&self, a: usize, b: usize) -> C64 {
        let u = &self.isometry;
        (0..self.modes).fold(ZERO, |acc, k| acc + u[(a, k)] * u[(b, k)].conj())
    }

    /// 𝕌 ← Q(M 𝕌). Used for unitaries and for dense Kraus matrices alike.
    pub fn apply_matrix(&mut self, m: &CMat) -> Result<()> {
        let qr = thin_qr(m * &self.isometry);
        let rank = rank_from_diag(&qr.r_diag, tol::RANK);
        if rank < self.modes {
            return Err(Error::RankDeficient { rank, modes: self.modes });
        }
        self.isometry = qr.q;
        Ok(())
    }

    pub fn apply_kraus(&mut self, k: &CMat) -> Result<()> {
        self.apply_matrix(k)
    }

    /// Applies a Kraus matrix supported on a few rows; same subspace as Q(K𝕌).
    ///
    /// With X the touched rows and X† = Q_x R_x, K𝕌 = 𝕌P⊥ + A Q_x† where
    /// P⊥ = I − Q_xQ_x† and A = 𝕌Q_x + S(K − I)R_x† is orthogonal to 𝕌P⊥.
    /// Hence 𝕌' = 𝕌 + (Q_A − 𝕌Q_x)Q_x† with Q_A an orthonormal basis of A.
    pub fn apply_local_kraus(&mut self, op: &LocalOp) -> Result<()> {
        let l = self.modes;
        let n = 2 * l;
        let k = op.dim();
        if k == 0 {
            return Ok(());
        }
        let u = self.isometry.as_mut_slice();
        // Columns of X†, i.e. conjugated touched rows, orthonormalized in place.
        let mut qx: Vec<Vec<C64>> = Vec::with_capacity(k);
        let mut rx = vec![vec![ZERO; k]; k];
        let scale = op.rows.iter().map(|&row| (0..l).map(|c| u[c * n + row].norm_sqr()).sum::<f64>()).fold(0.0, f64::max).sqrt();
        for (r, &row) in op.rows.iter().enumerate() {
            let mut v: Vec<C64> = (0..l).map(|c| u[c * n + row].conj()).collect();
            for _ in 0..2 {
                for (m, q) in qx.iter().enumerate() {
                    let d = dotc(q, &v);
                    rx[m][r] += d;
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= d * qi;
                    }
                }
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-14 * scale.max(1e-300) {
                rx[qx.len()][r] = C64::new(norm, 0.0);
                for vi in &mut v {
                    *vi /= norm;
                }
                qx.push(v);
            }
        }
        let rank = qx.len();
        if rank == 0 {
            return Ok(());
        }
        // B = 𝕌Q_x and A = B + S(K − I)R_x†.
        let mut b = vec![vec![ZERO; n]; rank];
        for (m, q) in qx.iter().enumerate() {
            let bm = &mut b[m];
            for (c, qc) in q.iter().enumerate() {
                let col = &u[c * n..(c + 1) * n];
                for (bi, ui) in bm.iter_mut().zip(col) {
                    *bi += ui * qc;
                }
            }
        }
        let mut a = b.clone();
        for m in 0..rank {
            for (r, &row) in op.rows.iter().enumerate() {
                let mut acc = ZERO;
                for (s, x) in rx[m].iter().enumerate() {
                    let kr = op.block[(r, s)] - if r == s { ONE } else { ZERO };
                    acc += kr * x.conj();
                }
                a[m][row] += acc;
            }
        }
        let a_scale = a.iter().map(|col| col.iter().map(|z| z.norm_sqr()).sum::<f64>()).fold(0.0, f64::max).sqrt();
        for m in 0..rank {
            for _ in 0..2 {
                for p in 0..m {
                    let (done, rest) = a.split_at_mut(m);
                    let d = dotc(&done[p], &rest[0]);
                    for (vi, qi) in rest[0].iter_mut().zip(&done[p]) {
                        *vi -= d * qi;
                    }
                }
            }
            let norm = a[m].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > tol::RANK * a_scale.max(1.0)) {
                return Err(Error::RankDeficient { rank: l - 1, modes: l });
            }
            for z in &mut a[m] {
                *z /= norm;
            }
        }
        // 𝕌 += (Q_A − B) Q_x†.
        for m in 0..rank {
            for (am, bm) in a[m].iter_mut().zip(&b[m]) {
                *am -= bm;
            }
        }
        for c in 0..l {
            let col = &mut u[c * n..(c + 1) * n];
            for m in 0..rank {
                let w = qx[m][c].conj();
                for (ui, di) in col.iter_mut().zip(&a[m]) {
                    *ui += di * w;
                }
            }
        }
        Ok(())
    }

    pub fn reorthonormalize(&mut self) -> Result<()> {
        let qr = thin_qr(self.isometry.clone());
        let rank = rank_from_diag(&qr.r_diag, tol::RANK);
        if rank < self.modes {
            return Err(Error::RankDeficient { rank, modes: self.modes });
        }
        self.isometry = qr.q;
        Ok(())
    }

    /// Flat little-endian layout: magic, version, L, then 𝕌 row-major as (re, im) f64 pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let l = self.modes;
        let mut out = Vec::with_capacity(12 + 2 * l * l * 16);
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&STATE_VERSION.to_le_bytes());
        out.extend_from_slice(&(l as u32).to_le_bytes());
        for i in 0..2 * l {
            for j in 0..l {
                let z = self.isometry[(i, j)];
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("state bytes: {m}"));
        if bytes.len() < 12 || &bytes[..4] != STATE_MAGIC {
            return Err(bad("missing header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != STATE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let l = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if l == 0 || bytes.len() != 12 + 2 * l * l * 16 {
            return Err(bad("length does not match L"));
        }
        let f = |k: usize| f64::from_le_bytes(bytes[12 + 8 * k..20 + 8 * k].try_into().unwrap());
        let u = CMat::from_fn(2 * l, l, |i, j| {
            let k = 2 * (i * l + j);
            C64::new(f(k), f(k + 1))
        });
        GaussianPureState::from_isometry(u)
    }
}

/// C = ⟨φ φ†⟩ with blocks G_ij = ⟨c_i c_j†⟩ (top left) and F_ij = ⟨c_i c_j⟩ (top right).
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    modes: usize,
    c: CMat,
}

/// Largest violations of the correlation-matrix invariants.
#[derive(Clone, Copy, Debug)]
pub struct CorrelationResiduals {
    pub hermitian: f64,
    pub projector: f64,
    pub trace: f64,
    pub f_antisymmetric: f64,
}

impl CorrelationMatrix {
    pub fn from_matrix(c: CMat) -> Result<Self> {
        if c.nrows() != c.ncols() || !c.nrows().is_multiple_of(2) || c.nrows() == 0 {
            return Err(Error::Shape("correlation matrix must be 2L×2L".into()));
        }
        Ok(CorrelationMatrix { modes: c.nrows() / 2, c })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &CMat {
        &self.c
    }

    pub fn g(&self, i: usize, j: usize) -> C64 {
        self.c[(i, j)]
    }

    pub fn f(&self, i: usize, j: usize) -> C64 {
        self.c[(i, self.modes + j)]
    }

    pub fn residuals(&self) -> CorrelationResiduals {
        let l = self.modes;
        let hermitian = max_abs(&(&self.c - self.c.adjoint()));
        let projector = max_abs(&(&self.c * &self.c - &self.c));
        let trace = (self.c.trace() - C64::new(l as f64, 0.0)).norm();
        let mut f_antisymmetric: f64 = 0.0;
        for i in 0..l {
            for j in 0..l {
                f_antisymmetric = f_antisymmetric.max((self.f(i, j) + self.f(j, i)).norm());
            }
        }
        CorrelationResiduals { hermitian, projector, trace, f_antisymmetric }
    }

    /// Γ = i(Ω C Ω† − I), asserted real.
    pub fn covariance(&self, map: &BasisMap) -> Result<CovarianceMatrix> {
        if map.modes() != self.modes {
            return Err(Error::Shape("basis map size differs from correlation matrix".into()));
        }
        let n = 2 * self.modes;
        let m = (map.to_majorana(&self.c) - CMat::identity(n, n)) * I;
        let (gamma, imag) = real_part(&m);
        if imag > tol::COVARIANCE_IMAG {
            return Err(Error::Corrupted(format!("covariance imaginary residue {imag:.3e}")));
        }
        Ok(CovarianceMatrix { gamma })
    }
}

/// Γ_ab = (i/2)⟨[γ_a, γ_b]⟩.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    gamma: RMat,
}

impl CovarianceMatrix {
    pub fn from_matrix(gamma: RMat) -> Result<Self> {
        if gamma.nrows() != gamma.ncols() || !gamma.nrows().is_multiple_of(2) || gamma.nrows() == 0 {
            return Err(Error::Shape("covariance must be 2L×2L".into()));
        }
        Ok(CovarianceMatrix { gamma })
    }

    pub fn matrix(&self) -> &RMat {
        &self.gamma
    }

    pub fn antisymmetry_residual(&self) -> f64 {
        max_abs_real(&(&self.gamma + self.gamma.transpose()))
    }

    pub fn purity_residual(&self) -> f64 {
        let n = self.gamma.nrows();
        max_abs_real(&(&self.gamma * self.gamma.transpose() - RMat::identity(n, n)))
    }

    /// C = Ω†(I − iΓ)Ω/4.
    pub fn correlation(&self, map: &BasisMap) -> CorrelationMatrix {
        let n = self.gamma.nrows();
        let inner = CMat::identity(n, n) - to_complex(&self.gamma) * I;
        CorrelationMatrix { modes: n / 2, c: map.to_complex(&inner) * C64::new(0.25, 0.0) }
    }
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::hermitian_map;
    use proptest::prelude::*;

    fn random_isometry(l: usize, seed: u64) -> CMat {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(2 * l, l, |_, _| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
        thin_qr(a).q
    }

    /// Vacuum evolved by a random quadratic unitary: a valid Gaussian state.
    pub(crate) fn random_state(l: usize, seed: u64) -> GaussianPureState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * l;
        let b = RMat::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let h = BasisMap::new(l).unwrap().bdg_from_majorana(&(&b - b.transpose()));
        let u = hermitian_map(&h, |x| C64::from_polar(1.0, -2.0 * x));
        let mut s = GaussianPureState::vacuum(l).unwrap();
        s.apply_matrix(&u).unwrap();
        s
    }

    #[test]
    fn omega_is_twice_unitary() {
        for l in 1..6 {
            let map = BasisMap::new(l).unwrap();
            let o = map.omega();
            let n = 2 * l;
            let two = CMat::identity(n, n) * C64::new(2.0, 0.0);
            assert!(max_abs(&(o * o.adjoint() - &two)) < 1e-12);
            assert!(max_abs(&(o.adjoint() * o - &two)) < 1e-12);
            for row in 0..n {
                for col in 0..n {
                    let j = row / 2;
                    if col != j && col != l + j {
                        assert_eq!(o[(row, col)], ZERO);
                    }
                }
            }
        }
    }

    #[test]
    fn vacuum_shapes() {
        assert!(GaussianPureState::vacuum(0).is_err());
        let v = GaussianPureState::vacuum(1).unwrap();
        assert_eq!(v.isometry()[(0, 0)], ONE);
        assert_eq!(v.isometry()[(1, 0)], ZERO);
        let c = GaussianPureState::vacuum(3).unwrap().correlation_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                assert_eq!(c.g(i, j), C64::new(delta, 0.0));
                assert_eq!(c.f(i, j), ZERO);
            }
        }
    }

    #[test]
    fn vacuum_covariance_sign() {
        // ⟨iγ₁γ₂⟩ = −1 on the vacuum.
        let map = BasisMap::new(1).unwrap();
        let gamma = GaussianPureState::vacuum(1).unwrap().correlation_matrix().covariance(&map).unwrap();
        assert_eq!(gamma.matrix()[(0, 1)], -1.0);
        assert_eq!(gamma.matrix()[(1, 0)], 1.0);
        let map2 = BasisMap::new(2).unwrap();
        let g2 = GaussianPureState::vacuum(2).unwrap().correlation_matrix().covariance(&map2).unwrap();
        assert_eq!(g2.matrix()[(0, 1)], -1.0);
        assert_eq!(g2.matrix()[(2, 3)], -1.0);
        assert_eq!(g2.matrix()[(0, 2)], 0.0);
    }

    #[test]
    fn vacuum_correlation_is_diag() {
        let c = GaussianPureState::vacuum(2).unwrap().correlation_matrix();
        let expect = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, ONE, ZERO, ZERO]));
        assert_eq!(c.matrix(), &expect);
    }

    #[test]
    fn local_kraus_matches_dense_qr() {
        let l = 4;
        let mut a = random_state(l, 11);
        let mut b = a.clone();
        let mut gen = CMat::zeros(2 * l, 2 * l);
        let rows = [1usize, 2, 5, 6];
        for (r, &i) in rows.iter().enumerate() {
            for (s, &j) in rows.iter().enumerate() {
                let v = 0.3 * ((r * 4 + s) as f64).cos() + 0.3 * ((s * 4 + r) as f64).cos();
                gen[(i, j)] = C64::new(v, 0.0);
            }
        }
        let k = hermitian_map(&gen, |x| C64::new((-2.0 * x).exp(), 0.0));
        a.apply_kraus(&k).unwrap();
        b.apply_local_kraus(&LocalOp::from_dense(&k, 0.0)).unwrap();
        assert!(b.isometry_residual() < 1e-13);
        let diff = max_abs(&(a.correlation_matrix().matrix() - b.correlation_matrix().matrix()));
        assert!(diff < 1e-13, "{diff}");
    }

    #[test]
    fn generic_isometry_is_not_a_state() {
        assert!(matches!(GaussianPureState::from_isometry(random_isometry(2, 3)), Err(Error::Corrupted(_))));
    }

    #[test]
    fn rank_deficient_kraus_rejected() {
        let mut s = GaussianPureState::vacuum(2).unwrap();
        let mut k = CMat::identity(4, 4);
        k[(0, 0)] = ZERO;
        assert!(matches!(s.apply_kraus(&k), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn bytes_roundtrip() {
        let s = random_state(3, 5);
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"MJGS");
        assert_eq!(GaussianPureState::from_bytes(&bytes).unwrap(), s);
        assert!(GaussianPureState::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn covariance_imaginary_residue_reported() {
        let map = BasisMap::new(1).unwrap();
        let mut c = GaussianPureState::vacuum(1).unwrap().correlation_matrix().matrix().clone();
        c[(0, 0)] = C64::new(1.0, 0.01);
        let bad = CorrelationMatrix::from_matrix(c).unwrap();
        assert!(matches!(bad.covariance(&map), Err(Error::Corrupted(_))));
    }

    proptest! {
        #[test]
        fn basis_roundtrip(l in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 2 * l;
            let a = CMat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let h = &a + a.adjoint();
            let map = BasisMap::new(l).unwrap();
            let back = map.to_complex(&map.to_majorana(&h)) * C64::new(0.25, 0.0);
            prop_assert!(max_abs(&(back - h)) < 1e-12);
        }

        #[test]
        fn random_states_are_pure(l in 1usize..6, seed in any::<u64>()) {
            let map = BasisMap::new(l).unwrap();
            let s = random_state(l, seed);
            let c = s.correlation_matrix();
            let r = c.residuals();
            prop_assert!(r.hermitian < 1e-12 && r.projector < 1e-9 && r.trace < 1e-9 && r.f_antisymmetric < 1e-10);
            let g = c.covariance(&map).unwrap();
            prop_assert!(g.antisymmetry_residual() < 1e-12);
            prop_assert!(g.purity_residual() < 1e-9);
            let back = g.correlation(&map).covariance(&map).unwrap();
            prop_assert!(max_abs_real(&(back.matrix() - g.matrix())) < 1e-12);
        }

        #[test]
        fn majorana_bdg_inverse(l in 1usize..4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 2 * l;
            let b = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &b - b.transpose();
            let map = BasisMap::new(l).unwrap();
            let h = map.bdg_from_majorana(&a);
            prop_assert!(max_abs(&(&h - h.adjoint())) < 1e-12);
            let (back, imag) = map.majorana_from_bdg(&h);
            prop_assert!(imag < 1e-12);
            prop_assert!(max_abs_real(&(back - a)) < 1e-12);
        }
    }
}
