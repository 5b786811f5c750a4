//! Fermion parities from Lyapunov-vector determinants and the invariant χ = P^PBC·P^APBC.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{Boundary, CircuitParams, OutcomeRecord, PrecomputedOperators};
use crate::error::{Error, Result};
use crate::linalg::RMat;
use crate::lyapunov::{
    assemble_vectors, effective_hamiltonian_direct, vectors_from_columns, Caps, ConvergenceMonitor, Frame, LyapunovRun, LyapunovVectors,
};
use crate::rng::{Stream, TrajectorySeed};

/// |det| outside this band marks a converged parity as unreliable.
pub const RELIABLE_DET: (f64, f64) = (0.5, 1.5);

/// det(Õ).
pub fn parity(vectors: &LyapunovVectors) -> f64 {
    vectors.determinant()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ChiMode {
    /// Stop once both runs pass the convergence test (or hit the cap).
    Converged(Caps),
    /// Evaluate at exactly this many steps.
    FixedT(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiResult {
    pub p_pbc: f64,
    pub p_apbc: f64,
    pub chi: f64,
    /// Hard sign of `chi`.
    pub sign: i8,
    pub t: usize,
    pub converged_pbc: bool,
    pub converged_apbc: bool,
    /// max over both runs of ||det| − 1|.
    pub det_residual: f64,
    pub orthogonality_residual: f64,
    pub unreliable: bool,
}

/// Flips the boundary outcome s_{2L} of one PBC step.
fn twisted_row(row: &[i8]) -> Vec<i8> {
    let mut out = row.to_vec();
    if let Some(last) = out.last_mut() {
        *last = -*last;
    }
    out
}

/// Sampled PBC run and its twisted APBC replay, advanced step by step together.
pub struct ChiPair {
    pbc: LyapunovRun,
    apbc: LyapunovRun,
}

impl ChiPair {
    pub fn new(params: CircuitParams, seed: TrajectorySeed) -> Result<Self> {
        if params.bc != Boundary::Periodic {
            return Err(Error::InvalidParameter("chi needs PBC parameters; the APBC partner is derived".into()));
        }
        let partner = params.with_boundary(Boundary::Antiperiodic);
        let ops_pbc = Arc::new(PrecomputedOperators::new(params)?);
        let ops_apbc = Arc::new(PrecomputedOperators::new(partner)?);
        let pbc = LyapunovRun::live(ops_pbc, seed, Stream::FramePbc)?;
        let frame = Frame::random(params.l, &mut seed.rng(Stream::FrameApbc));
        let apbc = LyapunovRun::replay(ops_apbc, OutcomeRecord::for_params(&partner), frame, false)?;
        Ok(ChiPair { pbc, apbc })
    }

    pub fn advance(&mut self) -> Result<()> {
        self.pbc.advance()?;
        let t = self.pbc.t() - 1;
        let row = twisted_row(self.pbc.record().step(t));
        self.apbc.extend_record(&row)?;
        self.apbc.advance()
    }

    pub fn t(&self) -> usize {
        self.pbc.t()
    }

    pub fn pbc(&self) -> &LyapunovRun {
        &self.pbc
    }

    pub fn apbc(&self) -> &LyapunovRun {
        &self.apbc
    }

    fn result(&self, converged_pbc: bool, converged_apbc: bool) -> Result<ChiResult> {
        let vp = assemble_vectors(self.pbc.frame(), self.pbc.ops().map())?;
        let va = assemble_vectors(self.apbc.frame(), self.apbc.ops().map())?;
        let p_pbc = parity(&vp);
        let p_apbc = parity(&va);
        let chi = p_pbc * p_apbc;
        let det_residual = (p_pbc.abs() - 1.0).abs().max((p_apbc.abs() - 1.0).abs());
        let outside = |d: f64| d.abs() < RELIABLE_DET.0 || d.abs() > RELIABLE_DET.1;
        Ok(ChiResult {
            p_pbc,
            p_apbc,
            chi,
            sign: if chi >= 0.0 { 1 } else { -1 },
            t: self.t(),
            converged_pbc,
            converged_apbc,
            det_residual,
            orthogonality_residual: vp.orthogonality_residual.max(va.orthogonality_residual),
            unreliable: (converged_pbc && outside(p_pbc)) || (converged_apbc && outside(p_apbc)),
        })
    }
}

/// χ for one trajectory, plus the sampled PBC record.
pub fn chi_with_record(params: CircuitParams, seed: TrajectorySeed, mode: ChiMode) -> Result<(ChiResult, OutcomeRecord)> {
    let mut pair = ChiPair::new(params, seed)?;
    let result = match mode {
        ChiMode::FixedT(t) => {
            if t == 0 {
                return Err(Error::InvalidParameter("chi needs T ≥ 1".into()));
            }
            for _ in 0..t {
                pair.advance()?;
            }
            pair.result(false, false)?
        }
        ChiMode::Converged(caps) => {
            caps.validate()?;
            let mut mp = ConvergenceMonitor::new(caps);
            let mut ma = ConvergenceMonitor::new(caps);
            let (mut cp, mut ca) = (false, false);
            while pair.t() < caps.max_steps {
                pair.advance()?;
                mp.observe(pair.pbc.frame())?;
                ma.observe(pair.apbc.frame())?;
                cp = mp.check(pair.t()).converged;
                ca = ma.check(pair.t()).converged;
                if cp && ca {
                    break;
                }
            }
            pair.result(cp, ca)?
        }
    };
    Ok((result, pair.pbc.record().clone()))
}

pub fn chi(params: CircuitParams, seed: TrajectorySeed, mode: ChiMode) -> Result<ChiResult> {
    chi_with_record(params, seed, mode).map(|(r, _)| r)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiEnsemble {
    /// Rows sorted by seed.
    pub rows: Vec<(TrajectorySeed, ChiResult)>,
    pub mean: f64,
    /// Omitted for a single member.
    pub stderr: Option<f64>,
}

pub fn summarize(mut rows: Vec<(TrajectorySeed, ChiResult)>) -> Result<ChiEnsemble> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    rows.sort_by_key(|(s, _)| (s.base, s.index));
    let n = rows.len() as f64;
    let mean = rows.iter().map(|(_, r)| r.chi).sum::<f64>() / n;
    let stderr = if rows.len() > 1 {
        let var = rows.iter().map(|(_, r)| (r.chi - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Some((var / n).sqrt())
    } else {
        None
    };
    Ok(ChiEnsemble { rows, mean, stderr })
}

/// Sample-averaged χ; members run in parallel on the current rayon pool.
pub fn chi_ensemble(params: CircuitParams, seeds: &[TrajectorySeed], mode: ChiMode) -> Result<ChiEnsemble> {
    let rows = seeds.par_iter().map(|&s| chi(params, s, mode).map(|r| (s, r))).collect::<Result<Vec<_>>>()?;
    summarize(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pfaffian {
    pub sign: i8,
    pub ln_abs: f64,
}

/// Pf(A) by 2×2 block elimination with full pivoting.
pub fn pfaffian(a: &RMat) -> Result<Pfaffian> {
    let n = a.nrows();
    if n == 0 || n % 2 == 1 || a.ncols() != n {
        return Err(Error::Shape(format!("Pfaffian needs an even square matrix, got {}×{}", a.nrows(), a.ncols())));
    }
    let scale = a.norm();
    if !scale.is_finite() {
        return Err(Error::NonFinite(0));
    }
    if (a + a.transpose()).amax() > 1e-9 * scale.max(1.0) {
        return Err(Error::InvalidParameter("matrix is not antisymmetric".into()));
    }
    if scale == 0.0 {
        return Err(Error::GapClosing);
    }
    let mut m = (a - a.transpose()) * 0.5;
    let mut sign: i8 = 1;
    let mut ln_abs = 0.0;
    let mut size = n;
    while size > 0 {
        let (mut p, mut q, mut best) = (0, 1, -1.0);
        for i in 0..size {
            for j in i + 1..size {
                if m[(i, j)].abs() > best {
                    best = m[(i, j)].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if best == 0.0 {
            return Err(Error::GapClosing);
        }
        if p != 0 {
            m.swap_rows(0, p);
            m.swap_columns(0, p);
            sign = -sign;
            if q == 0 {
                q = p;
            }
        }
        if q != 1 {
            m.swap_rows(1, q);
            m.swap_columns(1, q);
            sign = -sign;
        }
        let piv = m[(0, 1)];
        if piv < 0.0 {
            sign = -sign;
        }
        ln_abs += piv.abs().ln();
        let rest = size - 2;
        let mut s = RMat::zeros(rest, rest);
        for i in 0..rest {
            for j in 0..rest {
                let (xi, yi) = (m[(0, i + 2)], m[(1, i + 2)]);
                let (xj, yj) = (m[(0, j + 2)], m[(1, j + 2)]);
                s[(i, j)] = m[(i + 2, j + 2)] - (xi * yj - yi * xj) / piv;
            }
        }
        m = s;
        size = rest;
    }
    if ln_abs < (1e-12f64).ln() + (n / 2) as f64 * scale.ln() {
        return Err(Error::GapClosing);
    }
    let det = a.clone().determinant();
    let expect = 2.0 * ln_abs;
    if !(det > 0.0) || (det.ln() - expect).abs() > 1e-6 {
        return Err(Error::GapClosing);
    }
    Ok(Pfaffian { sign, ln_abs })
}

pub fn pfaffian_sign(a: &RMat) -> Result<i8> {
    pfaffian(a).map(|p| p.sign)
}

/// Q_T = sgn(Pf H_M^PBC · Pf H_M^APBC) from the dense effective Hamiltonians of a PBC record.
pub fn pfaffian_invariant(record: &OutcomeRecord, params: &CircuitParams, steps: usize) -> Result<i8> {
    if params.bc != Boundary::Periodic || record.boundary() != Boundary::Periodic {
        return Err(Error::InvalidParameter("Pfaffian invariant needs a PBC record".into()));
    }
    let ops_p = PrecomputedOperators::new(*params)?;
    let ops_a = PrecomputedOperators::new(params.with_boundary(Boundary::Antiperiodic))?;
    let hp = effective_hamiltonian_direct(record, &ops_p, steps)?;
    let ha = effective_hamiltonian_direct(&record.twist_record()?, &ops_a, steps)?;
    Ok(pfaffian_sign(&hp.h_majorana)? * pfaffian_sign(&ha.h_majorana)?)
}

/// det(Õ_T^PBC)·det(Õ_T^APBC) with Õ_T built from the eigenvectors of the dense H_eff,T.
pub fn chi_direct(record: &OutcomeRecord, params: &CircuitParams, steps: usize) -> Result<(f64, f64)> {
    if params.bc != Boundary::Periodic || record.boundary() != Boundary::Periodic {
        return Err(Error::InvalidParameter("direct chi needs a PBC record".into()));
    }
    let ops_p = PrecomputedOperators::new(*params)?;
    let ops_a = PrecomputedOperators::new(params.with_boundary(Boundary::Antiperiodic))?;
    let hp = effective_hamiltonian_direct(record, &ops_p, steps)?;
    let ha = effective_hamiltonian_direct(&record.twist_record()?, &ops_a, steps)?;
    Ok((vectors_from_columns(&hp.vectors).determinant(), vectors_from_columns(&ha.vectors).determinant()))
}
