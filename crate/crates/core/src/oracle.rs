//! Brute-force Fock-space reference implementation for small chains.
//!
//! Basis index bit j holds n_j; c_j|n⟩ = (−1)^{Σ_{k<j} n_k} |n − e_j⟩. Everything is dense.

use nalgebra::DVector;
use rand::Rng;

use crate::circuit::{BondKind, CircuitParams, OutcomeRecord};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigh, CMat, RMat, C64, I, ONE, ZERO};
use crate::rng::draw_outcome;

pub const MAX_MODES: usize = 10;

fn check_modes(l: usize) -> Result<()> {
    if l == 0 || l > MAX_MODES {
        return Err(Error::InvalidSize(format!("oracle supports 1 ≤ L ≤ {MAX_MODES}, got {l}")));
    }
    Ok(())
}

/// Annihilation operators c_1…c_L.
pub fn annihilators(l: usize) -> Result<Vec<CMat>> {
    check_modes(l)?;
    let dim = 1usize << l;
    Ok((0..l)
        .map(|j| {
            let mut c = CMat::zeros(dim, dim);
            for n in 0..dim {
                if n >> j & 1 == 1 {
                    let sign = if (n & ((1 << j) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    c[(n & !(1 << j), n)] = C64::new(sign, 0.0);
                }
            }
            c
        })
        .collect())
}

/// φ = (c₁…c_L, c₁†…c_L†).
pub fn nambu_ops(l: usize) -> Result<Vec<CMat>> {
    let c = annihilators(l)?;
    let mut out: Vec<CMat> = c.clone();
    out.extend(c.iter().map(|m| m.adjoint()));
    Ok(out)
}

/// γ_{2j−1} = c_j + c_j†, γ_{2j} = −i(c_j − c_j†).
pub fn build_majorana_ops(l: usize) -> Result<Vec<CMat>> {
    let c = annihilators(l)?;
    let mut out = Vec::with_capacity(2 * l);
    for cj in &c {
        let cd = cj.adjoint();
        out.push(cj + &cd);
        out.push((cj - &cd) * (-I));
    }
    Ok(out)
}

/// P̂ = Π iγ_{2j−1}γ_{2j}.
pub fn parity_operator(gammas: &[CMat]) -> CMat {
    let dim = gammas[0].nrows();
    let mut p = CMat::identity(dim, dim);
    for pair in gammas.chunks(2) {
        p *= &pair[0] * &pair[1] * I;
    }
    p
}

/// ℋ = iJ Σ_{ℓ<2L} γ_ℓγ_{ℓ+1} + iJ' γ_{2L}γ₁.
pub fn kitaev_hamiltonian(params: &CircuitParams, gammas: &[CMat]) -> CMat {
    let n = gammas.len();
    let dim = gammas[0].nrows();
    let mut h = CMat::zeros(dim, dim);
    for ell in 0..n - 1 {
        h += &gammas[ell] * &gammas[ell + 1] * (I * params.j);
    }
    h += &gammas[n - 1] * &gammas[0] * (I * params.boundary_coupling());
    h
}

/// Normalized many-body Kraus operator (cosh θ − s sinh θ · iγ_aγ_b)/√(2 cosh 2θ).
pub fn kraus_operator(gammas: &[CMat], a: usize, b: usize, mu: f64, s: i8) -> CMat {
    let theta = mu.atanh();
    let dim = gammas[0].nrows();
    let bilinear = &gammas[a] * &gammas[b] * I;
    let k = CMat::identity(dim, dim) * C64::new(theta.cosh(), 0.0) - bilinear * C64::new(s as f64 * theta.sinh(), 0.0);
    k / C64::new((2.0 * (2.0 * theta).cosh()).sqrt(), 0.0)
}

/// Coefficients M with X φ_a X⁻¹ = Σ_b M_ab φ_b, by Hilbert–Schmidt projection.
pub fn heisenberg_coefficients(x: &CMat, phi: &[CMat]) -> Result<CMat> {
    let inv = x.clone().try_inverse().ok_or_else(|| Error::Corrupted("operator not invertible".into()))?;
    let n = phi.len();
    let norm = (phi[0].adjoint() * &phi[0]).trace();
    let mut m = CMat::zeros(n, n);
    for a in 0..n {
        let conj = x * &phi[a] * &inv;
        for b in 0..n {
            m[(a, b)] = (phi[b].adjoint() * &conj).trace() / norm;
        }
    }
    Ok(m)
}

/// e^{−iℋ} by eigendecomposition.
pub fn unitary(h: &CMat) -> CMat {
    crate::linalg::hermitian_map(h, |x| C64::from_polar(1.0, -x))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    l: usize,
    amps: DVector<C64>,
}

impl FockState {
    pub fn vacuum(l: usize) -> Result<Self> {
        check_modes(l)?;
        let mut amps = DVector::from_element(1 << l, ZERO);
        amps[0] = ONE;
        Ok(FockState { l, amps })
    }

    pub fn modes(&self) -> usize {
        self.l
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn expectation(&self, op: &CMat) -> C64 {
        self.amps.dotc(&(op * &self.amps))
    }

    /// Γ_ab = ⟨iγ_aγ_b⟩ for a ≠ b.
    pub fn covariance(&self, gammas: &[CMat]) -> RMat {
        let n = gammas.len();
        let mut g = RMat::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    g[(a, b)] = (self.expectation(&(&gammas[a] * &gammas[b])) * I).re;
                }
            }
        }
        g
    }

    /// C_ab = ⟨φ_a φ_b†⟩.
    pub fn correlation(&self, phi: &[CMat]) -> CMat {
        let n = phi.len();
        CMat::from_fn(n, n, |a, b| self.expectation(&(&phi[a] * phi[b].adjoint())))
    }

    /// Relabels modes so that `order[k]` becomes mode k, with the fermionic reordering sign.
    pub fn reorder_modes(&self, order: &[usize]) -> Result<FockState> {
        let l = self.l;
        let mut seen = vec![false; l];
        if order.len() != l || order.iter().any(|&m| m >= l || std::mem::replace(&mut seen[m], true)) {
            return Err(Error::InvalidParameter("mode order must be a permutation".into()));
        }
        let mut pos = vec![0; l];
        for (k, &m) in order.iter().enumerate() {
            pos[m] = k;
        }
        let mut amps = DVector::from_element(1 << l, ZERO);
        for n in 0..1usize << l {
            let occupied: Vec<usize> = (0..l).filter(|&j| n >> j & 1 == 1).collect();
            let mut inversions = 0;
            for (x, &a) in occupied.iter().enumerate() {
                for &b in &occupied[x + 1..] {
                    if pos[a] > pos[b] {
                        inversions += 1;
                    }
                }
            }
            let target = occupied.iter().fold(0usize, |acc, &j| acc | 1 << pos[j]);
            let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
            amps[target] = self.amps[n] * sign;
        }
        Ok(FockState { l, amps })
    }

    /// Von Neumann entropy (bits) of the modes in `x` (0-based), via partial trace.
    pub fn entropy(&self, x: &[usize]) -> Result<f64> {
        let mut order: Vec<usize> = x.to_vec();
        order.extend((0..self.l).filter(|m| !x.contains(m)));
        let s = self.reorder_modes(&order)?;
        let k = x.len();
        let dk = 1usize << k;
        let rest = 1usize << (self.l - k);
        let mut rho = CMat::zeros(dk, dk);
        for r in 0..rest {
            for a in 0..dk {
                let va = s.amps[a + r * dk];
                if va == ZERO {
                    continue;
                }
                for b in 0..dk {
                    rho[(a, b)] += va * s.amps[b + r * dk].conj();
                }
            }
        }
        let (vals, _) = hermitian_eigh(&rho);
        Ok(vals.iter().filter(|&&p| p > 1e-300).map(|&p| -p * p.log2()).sum())
    }
}

/// Many-body operators of one parameter set, in the shared sweep order.
pub struct ExactCircuit {
    params: CircuitParams,
    gammas: Vec<CMat>,
    unitary: CMat,
    /// Per ℓ-ordered bond: [K̂(+1), K̂(−1)].
    kraus: Vec<[CMat; 2]>,
    sweep: Vec<usize>,
}

/// Final state plus the p(+1) of every measured bond, ℓ-ordered per step.
pub struct ExactTrajectory {
    pub state: FockState,
    pub record: OutcomeRecord,
    pub p_plus: Vec<Vec<f64>>,
}

impl ExactCircuit {
    pub fn new(params: CircuitParams) -> Result<Self> {
        params.validate()?;
        let gammas = build_majorana_ops(params.l)?;
        let unitary = unitary(&kitaev_hamiltonian(&params, &gammas));
        let kraus = params
            .bonds()
            .iter()
            .map(|bond| {
                let (a, b) = bond.majoranas(params.l);
                let mu = match bond.kind {
                    BondKind::Odd => params.mu_o,
                    BondKind::Even => params.mu_e,
                };
                [kraus_operator(&gammas, a, b, mu, 1), kraus_operator(&gammas, a, b, mu, -1)]
            })
            .collect();
        Ok(ExactCircuit { sweep: crate::circuit::sweep_order(&params), params, gammas, unitary, kraus })
    }

    pub fn params(&self) -> &CircuitParams {
        &self.params
    }

    pub fn gammas(&self) -> &[CMat] {
        &self.gammas
    }

    pub fn unitary(&self) -> &CMat {
        &self.unitary
    }

    pub fn kraus(&self, k: usize, s: i8) -> &CMat {
        &self.kraus[k][if s > 0 { 0 } else { 1 }]
    }

    /// One step; `choose(k, p_plus)` returns the outcome of bond position k.
    pub fn step_with(&self, state: &mut FockState, mut choose: impl FnMut(usize, f64) -> i8) -> Result<(Vec<i8>, Vec<f64>)> {
        let n = self.kraus.len();
        let mut outcomes = vec![0i8; n];
        let mut probs = vec![0.0; n];
        state.amps = &self.unitary * &state.amps;
        for &k in &self.sweep {
            let plus = self.kraus(k, 1) * &state.amps;
            let p = plus.norm_squared();
            let s = choose(k, p);
            let next = if s > 0 { plus } else { self.kraus(k, -1) * &state.amps };
            let norm = next.norm();
            if !(norm > 1e-12) {
                return Err(Error::Corrupted("norm collapse in exact evolution".into()));
            }
            state.amps = next / C64::new(norm, 0.0);
            outcomes[k] = s;
            probs[k] = p;
        }
        Ok((outcomes, probs))
    }

    pub fn evolve_sampled<R: Rng + ?Sized>(&self, rng: &mut R, steps: usize) -> Result<ExactTrajectory> {
        let mut state = FockState::vacuum(self.params.l)?;
        let mut record = OutcomeRecord::for_params(&self.params);
        let mut p_plus = Vec::with_capacity(steps);
        for _ in 0..steps {
            let (s, p) = self.step_with(&mut state, |_, p| draw_outcome(rng, p))?;
            record.push(&s)?;
            p_plus.push(p);
        }
        Ok(ExactTrajectory { state, record, p_plus })
    }

    pub fn evolve_replay(&self, record: &OutcomeRecord, steps: usize) -> Result<ExactTrajectory> {
        if !record.matches(&self.params) || record.steps() < steps {
            return Err(Error::Shape("record does not fit the circuit".into()));
        }
        let mut state = FockState::vacuum(self.params.l)?;
        let mut p_plus = Vec::with_capacity(steps);
        for t in 0..steps {
            let row = record.step(t);
            let (_, p) = self.step_with(&mut state, |k, _| row[k])?;
            p_plus.push(p);
        }
        Ok(ExactTrajectory { state, record: record.truncated(steps), p_plus })
    }

    /// 𝒦_T for the first `steps` rows of a record, rescaled to unit Frobenius norm.
    pub fn kraus_product(&self, record: &OutcomeRecord, steps: usize) -> Result<CMat> {
        if !record.matches(&self.params) || record.steps() < steps {
            return Err(Error::Shape("record does not fit the circuit".into()));
        }
        let dim = 1usize << self.params.l;
        let mut k = CMat::identity(dim, dim);
        for t in 0..steps {
            let row = record.step(t);
            k = &self.unitary * k;
            for &b in &self.sweep {
                k = self.kraus(b, row[b]) * k;
            }
            let norm = k.norm();
            k /= C64::new(norm, 0.0);
        }
        Ok(k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactParity {
    /// ⟨P̂⟩ of the ground state of ℋ_eff, ±1.
    pub parity: i8,
    /// Many-body gap of ℋ_eff = −ln(𝒦𝒦†)/(2T).
    pub gap: f64,
}

pub const PARITY_GAP_TOL: f64 = 1e-10;

/// Ground-state parity of ℋ_eff = −ln(𝒦_T𝒦_T†)/(2T).
pub fn effective_parity_exact(record: &OutcomeRecord, params: &CircuitParams, steps: usize) -> Result<ExactParity> {
    if params.l > 4 || steps == 0 {
        return Err(Error::InvalidSize("exact parity needs L ≤ 4 and T ≥ 1".into()));
    }
    let circuit = ExactCircuit::new(*params)?;
    let k = circuit.kraus_product(record, steps)?;
    let a = &k * k.adjoint();
    let (vals, vecs) = hermitian_eigh(&a);
    let n = vals.len();
    let top = vals[n - 1];
    let second = vals[n - 2];
    let gap = if second > 0.0 { (top / second).ln() / (2.0 * steps as f64) } else { f64::INFINITY };
    if !(gap >= PARITY_GAP_TOL) {
        return Err(Error::GapClosing);
    }
    let v = vecs.column(n - 1).into_owned();
    let p = parity_operator(&circuit.gammas);
    let value = v.dotc(&(p * &v)).re;
    if (value.abs() - 1.0).abs() > 1e-8 {
        return Err(Error::GapClosing);
    }
    Ok(ExactParity { parity: if value > 0.0 { 1 } else { -1 }, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn majoranas_satisfy_car() {
        for l in 1..=3 {
            let g = build_majorana_ops(l).unwrap();
            let dim = 1 << l;
            let id = CMat::identity(dim, dim);
            for a in 0..2 * l {
                assert!(max_abs(&(&g[a] - g[a].adjoint())) < 1e-12);
                for b in 0..2 * l {
                    let anti = &g[a] * &g[b] + &g[b] * &g[a];
                    let expect = if a == b { &id * C64::new(2.0, 0.0) } else { CMat::zeros(dim, dim) };
                    assert!(max_abs(&(anti - expect)) < 1e-12);
                }
            }
        }
        assert!(build_majorana_ops(11).is_err());
    }

    #[test]
    fn single_mode_majoranas_are_pauli() {
        let g = build_majorana_ops(1).unwrap();
        let x = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let y = CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
        assert_eq!(g[0], x);
        assert!(max_abs(&(&g[1] - y)) < 1e-15);
    }

    #[test]
    fn parity_is_diagonal_pm_one() {
        let g = build_majorana_ops(3).unwrap();
        let p = parity_operator(&g);
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert!(p[(i, j)].norm() < 1e-14);
                }
            }
            let expect: f64 = (0..3).map(|j| if i >> j & 1 == 1 { 1.0 } else { -1.0 }).product();
            assert!((p[(i, i)].re - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn reorder_identity_and_entropy_of_vacuum() {
        let s = FockState::vacuum(3).unwrap();
        assert_eq!(s.reorder_modes(&[0, 1, 2]).unwrap(), s);
        assert!(s.entropy(&[1]).unwrap().abs() < 1e-14);
        assert!(s.reorder_modes(&[0, 0, 1]).is_err());
    }
}
