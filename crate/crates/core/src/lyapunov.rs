//! QR Lyapunov analysis of the single-particle Kraus product.
//!
//! A frame W (2L×L) follows the trajectory; after each step W ← Q from the QR of
//! M̃_t W and the log-diagonal of R accumulates the stretch of every direction.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::circuit::{replay_step, step, CircuitParams, OutcomeRecord, PrecomputedOperators};
use crate::error::{Error, Result};
use crate::gaussian::{BasisMap, GaussianPureState};
use crate::linalg::{max_abs_real, rank_from_diag, thin_qr, CMat, RMat, C64, I, ONE};
use crate::rng::{Stream, TrajectorySeed};

/// Defaults: 10⁴ warm-up steps, a 1000-step window, tolerance √10·10⁻³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Caps {
    pub warmup: usize,
    pub window: usize,
    pub max_steps: usize,
    pub tolerance: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { warmup: 10_000, window: 1000, max_steps: 200_000, tolerance: 10f64.sqrt() * 1e-3 }
    }
}

impl Caps {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.max_steps < self.warmup + self.window || !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("caps need window ≥ 2, max_steps ≥ warmup + window and tolerance > 0: {self:?}")));
        }
        Ok(())
    }
}

/// Gap means at or below this count as exact degeneracies and are exempt from the test.
pub const DEGENERATE_GAP: f64 = 1e-10;

/// Offset applied to snapshot exponents. K̃ = e^{−2Θ̃} does not depend on the Kraus
/// normalization, so the offset is zero.
pub fn normalization_shift(_params: &CircuitParams) -> f64 {
    0.0
}

/// W₀ = Q of a complex Gaussian 2L×L matrix.
pub fn init_frame<R: Rng + ?Sized>(l: usize, rng: &mut R) -> CMat {
    loop {
        let a = CMat::from_fn(2 * l, l, |_, _| C64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)));
        let qr = thin_qr(a);
        if rank_from_diag(&qr.r_diag, 1e-10) == l {
            return qr.q;
        }
    }
}

/// Orthonormal frame plus accumulated log-stretches.
#[derive(Clone, Debug)]
pub struct Frame {
    w: CMat,
    acc: Vec<f64>,
    t: usize,
}

impl Frame {
    pub fn new(w: CMat) -> Self {
        let l = w.ncols();
        Frame { w, acc: vec![0.0; l], t: 0 }
    }

    pub fn random<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Self {
        Frame::new(init_frame(l, rng))
    }

    pub fn w(&self) -> &CMat {
        &self.w
    }

    pub fn acc(&self) -> &[f64] {
        &self.acc
    }

    pub fn t(&self) -> usize {
        self.t
    }

    fn absorb(&mut self, wp: CMat) -> Result<()> {
        if wp.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(self.t + 1));
        }
        let qr = thin_qr(wp);
        if qr.r_diag.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::NonFinite(self.t + 1));
        }
        for (a, d) in self.acc.iter_mut().zip(&qr.r_diag) {
            *a += d.ln();
        }
        self.w = qr.q;
        self.t += 1;
        Ok(())
    }

    /// W ← Q(M̃W) for a dense step matrix.
    pub fn propagate_step(&mut self, m: &CMat) -> Result<()> {
        let wp = m * &self.w;
        self.absorb(wp)
    }

    /// Same as [`propagate_step`](Self::propagate_step) with M̃ applied bond by bond.
    pub fn propagate_outcomes(&mut self, ops: &PrecomputedOperators, outcomes: &[i8]) -> Result<()> {
        if outcomes.len() != ops.bonds().len() {
            return Err(Error::Shape("outcome row does not match bond list".into()));
        }
        let mut wp = if ops.unitary_is_identity() { self.w.clone() } else { ops.unitary() * &self.w };
        for &k in ops.sweep() {
            ops.kraus(k, outcomes[k]).apply_left(&mut wp);
        }
        self.absorb(wp)
    }

    /// Column indices sorted by ascending accumulated stretch (stable).
    pub fn ascending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.acc.len()).collect();
        order.sort_by(|&a, &b| self.acc[a].total_cmp(&self.acc[b]));
        order
    }

    /// z̃ = acc / t.
    pub fn snapshot(&self) -> Result<EffectiveSpectrum> {
        if self.t == 0 {
            return Err(Error::InvalidParameter("snapshot needs at least one step".into()));
        }
        let t = self.t as f64;
        let z = self.ascending_order().iter().map(|&k| self.acc[k] / t).collect();
        Ok(EffectiveSpectrum { z, t: self.t })
    }

    /// Lowest-mode spinor |W_{j,k}|² + |W_{L+j,k}|² read straight from the frame.
    pub fn lowest_spinor(&self) -> Vec<f64> {
        let l = self.acc.len();
        let k = self.ascending_order()[0];
        (0..l).map(|j| self.w[(j, k)].norm_sqr() + self.w[(l + j, k)].norm_sqr()).collect()
    }
}

/// Non-negative exponents, ascending; the partner of z_j is −z_j.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveSpectrum {
    pub z: Vec<f64>,
    pub t: usize,
}

impl EffectiveSpectrum {
    pub fn descending(&self) -> Vec<f64> {
        self.z.iter().rev().cloned().collect()
    }

    pub fn z1(&self) -> f64 {
        self.z[0]
    }

    /// All 2L exponents as (z₁, −z₁, z₃, −z₃, …).
    pub fn full(&self) -> Vec<f64> {
        self.z.iter().flat_map(|&z| [z, -z]).collect()
    }

    pub fn shifted(mut self, shift: f64) -> Self {
        for z in &mut self.z {
            *z += shift;
        }
        self
    }
}

#[derive(Clone, Debug)]
pub struct LyapunovVectors {
    /// [[W^u, (W^d)*], [W^d, (W^u)*]] with W columns in ascending-exponent order.
    pub w_tilde: CMat,
    /// Ω W̃ Ω† / 2; columns 2m, 2m+1 belong to the m-th lowest exponent.
    pub o: RMat,
    pub realness_residual: f64,
    pub orthogonality_residual: f64,
}

pub const REALNESS_FLAG: f64 = 1e-6;

impl LyapunovVectors {
    pub fn realness_flagged(&self) -> bool {
        self.realness_residual > REALNESS_FLAG
    }

    pub fn determinant(&self) -> f64 {
        self.o.clone().determinant()
    }
}

/// Builds W̃ and Õ from a frame given with its columns in the desired order.
pub fn vectors_from_columns(w: &CMat) -> LyapunovVectors {
    let l = w.ncols();
    let n = 2 * l;
    let mut wt = CMat::zeros(n, n);
    for m in 0..l {
        for j in 0..l {
            let up = w[(j, m)];
            let down = w[(l + j, m)];
            wt[(j, m)] = up;
            wt[(l + j, m)] = down;
            wt[(j, l + m)] = down.conj();
            wt[(l + j, l + m)] = up.conj();
        }
    }
    // Ω acts on the pair (j, L+j) as ω = [[1, 1], [−i, i]].
    let omega = [[ONE, ONE], [-I, I]];
    let mut o = RMat::zeros(n, n);
    let mut imag: f64 = 0.0;
    for j in 0..l {
        for m in 0..l {
            let blk = [[wt[(j, m)], wt[(j, l + m)]], [wt[(l + j, m)], wt[(l + j, l + m)]]];
            for a in 0..2 {
                for b in 0..2 {
                    let mut v = C64::new(0.0, 0.0);
                    for p in 0..2 {
                        for q in 0..2 {
                            v += omega[a][p] * blk[p][q] * omega[b][q].conj();
                        }
                    }
                    v *= 0.5;
                    imag = imag.max(v.im.abs());
                    o[(2 * j + a, 2 * m + b)] = v.re;
                }
            }
        }
    }
    let orth = max_abs_real(&(o.transpose() * &o - RMat::identity(n, n)));
    LyapunovVectors { w_tilde: wt, o, realness_residual: imag, orthogonality_residual: orth }
}

pub fn assemble_vectors(frame: &Frame, map: &BasisMap) -> Result<LyapunovVectors> {
    let l = frame.w.ncols();
    if map.modes() != l {
        return Err(Error::Shape("basis map does not match frame".into()));
    }
    if frame.t == 0 {
        return Err(Error::InvalidParameter("vectors need at least one step".into()));
    }
    let order = frame.ascending_order();
    let w = CMat::from_fn(2 * l, l, |i, k| frame.w[(i, order[k])]);
    Ok(vectors_from_columns(&w))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpinorProfile {
    /// ψ_j² for j = 1…L.
    pub psi_sq: Vec<f64>,
    pub edge_weight: f64,
}

/// ψ_j² = Σ_{a∈{1,2}} Σ_{b∈{2j−1,2j}} Õ_{ba}² / 2 and edge weight ψ₁² + ψ_L².
pub fn spinor_edge_weight(vectors: &LyapunovVectors) -> SpinorProfile {
    let l = vectors.o.nrows() / 2;
    let o = &vectors.o;
    let psi_sq: Vec<f64> = (0..l)
        .map(|j| {
            let mut s = 0.0;
            for a in 0..2 {
                for b in [2 * j, 2 * j + 1] {
                    s += o[(b, a)] * o[(b, a)];
                }
            }
            s / 2.0
        })
        .collect();
    let edge_weight = psi_sq[0] + if l > 1 { psi_sq[l - 1] } else { 0.0 };
    SpinorProfile { psi_sq, edge_weight }
}

pub fn edge_weight_of(psi_sq: &[f64]) -> f64 {
    psi_sq[0] + if psi_sq.len() > 1 { psi_sq[psi_sq.len() - 1] } else { 0.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceVerdict {
    pub converged: bool,
    /// Gap indices (0-based j of dz_j) exempted as degenerate.
    pub exempt_gaps: Vec<usize>,
}

/// Relative spread test on the gaps between consecutive exponents over the window.
///
/// `history` holds ascending snapshot spectra, oldest first; `t` is the current step.
pub fn convergence_check(history: &[Vec<f64>], t: usize, caps: &Caps) -> ConvergenceVerdict {
    let not_yet = ConvergenceVerdict { converged: false, exempt_gaps: Vec::new() };
    if t < caps.warmup || history.len() < caps.window {
        return not_yet;
    }
    let window = &history[history.len() - caps.window..];
    let l = window[0].len();
    let n = window.len() as f64;
    let mut exempt = Vec::new();
    let mut converged = true;
    for j in 0..l.saturating_sub(1) {
        let mean = window.iter().map(|z| z[j + 1] - z[j]).sum::<f64>() / n;
        let var = window.iter().map(|z| (z[j + 1] - z[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if mean.abs() <= DEGENERATE_GAP {
            exempt.push(j);
            continue;
        }
        if !(var.sqrt() / mean.abs() < caps.tolerance) {
            converged = false;
        }
    }
    ConvergenceVerdict { converged, exempt_gaps: exempt }
}

/// Ring buffer of the last `window` snapshots and per-step observables.
#[derive(Clone, Debug)]
pub struct ConvergenceMonitor {
    caps: Caps,
    spectra: VecDeque<Vec<f64>>,
    edge: VecDeque<f64>,
}

impl ConvergenceMonitor {
    pub fn new(caps: Caps) -> Self {
        ConvergenceMonitor { caps, spectra: VecDeque::with_capacity(caps.window + 1), edge: VecDeque::new() }
    }

    /// Records step `t`; only steps past the warm-up are kept.
    pub fn observe(&mut self, frame: &Frame) -> Result<()> {
        if frame.t() <= self.caps.warmup {
            return Ok(());
        }
        if self.spectra.len() == self.caps.window {
            self.spectra.pop_front();
            self.edge.pop_front();
        }
        self.spectra.push_back(frame.snapshot()?.z);
        self.edge.push_back(edge_weight_of(&frame.lowest_spinor()));
        Ok(())
    }

    pub fn check(&mut self, t: usize) -> ConvergenceVerdict {
        convergence_check(self.spectra.make_contiguous(), t, &self.caps)
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    /// Window averages of the spectrum and the edge weight.
    pub fn averages(&self) -> Option<(Vec<f64>, f64)> {
        if self.spectra.is_empty() {
            return None;
        }
        let n = self.spectra.len() as f64;
        let l = self.spectra[0].len();
        let z = (0..l).map(|j| self.spectra.iter().map(|s| s[j]).sum::<f64>() / n).collect();
        let e = self.edge.iter().sum::<f64>() / n;
        Some((z, e))
    }
}

/// A frame driven by a sampled trajectory, a stored record, or both in turn.
pub struct LyapunovRun {
    ops: Arc<PrecomputedOperators>,
    frame: Frame,
    record: OutcomeRecord,
    state: Option<GaussianPureState>,
    rng: Option<ChaCha8Rng>,
}

impl LyapunovRun {
    /// Born-sampled trajectory from the vacuum with an independent random frame.
    pub fn live(ops: Arc<PrecomputedOperators>, seed: TrajectorySeed, frame_stream: Stream) -> Result<Self> {
        let l = ops.params().l;
        let frame = Frame::random(l, &mut seed.rng(frame_stream));
        Ok(LyapunovRun {
            record: OutcomeRecord::for_params(ops.params()),
            state: Some(GaussianPureState::vacuum(l)?),
            rng: Some(seed.rng(Stream::Born)),
            frame,
            ops,
        })
    }

    /// Replays `record` with no Born evaluation. `with_state` also tracks the physical state.
    pub fn replay(ops: Arc<PrecomputedOperators>, record: OutcomeRecord, frame: Frame, with_state: bool) -> Result<Self> {
        if !record.matches(ops.params()) {
            return Err(Error::Shape("record shape does not match circuit parameters".into()));
        }
        let state = if with_state { Some(GaussianPureState::vacuum(ops.params().l)?) } else { None };
        Ok(LyapunovRun { ops, frame, record, state, rng: None })
    }

    pub fn ops(&self) -> &PrecomputedOperators {
        &self.ops
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn record(&self) -> &OutcomeRecord {
        &self.record
    }

    pub fn state(&self) -> Option<&GaussianPureState> {
        self.state.as_ref()
    }

    pub fn t(&self) -> usize {
        self.frame.t()
    }

    /// Appends outcomes for a replay run to consume later.
    pub fn extend_record(&mut self, outcomes: &[i8]) -> Result<()> {
        self.record.push(outcomes)
    }

    /// Advances one step: replays the record while it lasts, then samples if possible.
    pub fn advance(&mut self) -> Result<()> {
        let t = self.frame.t();
        let row: Vec<i8> = if t < self.record.steps() {
            let row = self.record.step(t).to_vec();
            if let Some(state) = self.state.as_mut() {
                replay_step(state, &row, &self.ops)?;
            }
            row
        } else {
            match (self.state.as_mut(), self.rng.as_mut()) {
                (Some(state), Some(rng)) => {
                    let out = step(state, rng, &self.ops)?.outcomes;
                    self.record.push(&out)?;
                    out
                }
                _ => return Err(Error::Shape(format!("record exhausted at step {t}"))),
            }
        };
        self.frame.propagate_outcomes(&self.ops, &row)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata {
    pub params: CircuitParams,
    pub seed: TrajectorySeed,
    pub steps: usize,
    pub converged: bool,
    pub normalization_shift: f64,
    pub orthogonality_residual: f64,
    pub realness_residual: f64,
    pub realness_flagged: bool,
    pub spectrum: Vec<f64>,
    pub z1: f64,
    pub tau_relax: Option<f64>,
    pub lowest_pair_gap: Option<f64>,
    pub edge_weight: f64,
    pub exempt_gaps: Vec<usize>,
}

pub struct RunResult {
    /// Window-averaged spectrum (final snapshot if the warm-up was never passed).
    pub spectrum: EffectiveSpectrum,
    pub vectors: LyapunovVectors,
    pub edge_weight: f64,
    pub record: OutcomeRecord,
    pub converged: bool,
    pub metadata: RunMetadata,
}

/// Runs a sampled trajectory and its frame until convergence or `caps.max_steps`.
pub fn run_until_converged(params: CircuitParams, seed: TrajectorySeed, caps: Caps) -> Result<RunResult> {
    caps.validate()?;
    let ops = Arc::new(PrecomputedOperators::new(params)?);
    let mut run = LyapunovRun::live(ops.clone(), seed, Stream::FramePbc)?;
    let mut monitor = ConvergenceMonitor::new(caps);
    let mut verdict = ConvergenceVerdict { converged: false, exempt_gaps: Vec::new() };
    while run.t() < caps.max_steps {
        run.advance()?;
        monitor.observe(run.frame())?;
        verdict = monitor.check(run.t());
        if verdict.converged {
            break;
        }
    }
    let frame = run.frame();
    let vectors = assemble_vectors(frame, ops.map())?;
    let shift = normalization_shift(&params);
    let (z, edge_weight) = match monitor.averages() {
        Some(avg) => avg,
        None => (frame.snapshot()?.z, spinor_edge_weight(&vectors).edge_weight),
    };
    let spectrum = EffectiveSpectrum { z, t: run.t() }.shifted(shift);
    let z1 = spectrum.z1();
    let metadata = RunMetadata {
        params,
        seed,
        steps: run.t(),
        converged: verdict.converged,
        normalization_shift: shift,
        orthogonality_residual: vectors.orthogonality_residual,
        realness_residual: vectors.realness_residual,
        realness_flagged: vectors.realness_flagged(),
        spectrum: spectrum.z.clone(),
        z1,
        tau_relax: if z1 > 0.0 { Some(1.0 / z1) } else { None },
        lowest_pair_gap: spectrum.z.get(1).map(|z3| z3 - z1),
        edge_weight,
        exempt_gaps: verdict.exempt_gaps,
    };
    Ok(RunResult { spectrum, vectors, edge_weight, record: run.record().clone(), converged: verdict.converged, metadata })
}

pub const OVERFLOW_GUARD: f64 = 1e100;

/// K = U·diag(d)·V with U unitary and V well conditioned; d carries the grading.
struct UdvProduct {
    u: CMat,
    d: Vec<f64>,
    v: CMat,
}

impl UdvProduct {
    fn identity(n: usize) -> Self {
        UdvProduct { u: CMat::identity(n, n), d: vec![1.0; n], v: CMat::identity(n, n) }
    }

    /// K ← M·K, with columns pre-pivoted by norm before the QR.
    fn left_multiply(&mut self, m: &CMat) {
        let n = self.d.len();
        let mut a = m * &self.u;
        for (c, &d) in self.d.iter().enumerate() {
            a.column_mut(c).scale_mut(d);
        }
        let norms: Vec<f64> = (0..n).map(|c| a.column(c).norm()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
        let ap = CMat::from_fn(n, n, |i, k| a[(i, perm[k])]);
        let (q, r) = ap.qr().unpack();
        let d: Vec<f64> = (0..n).map(|i| r[(i, i)].norm()).collect();
        let vp = CMat::from_fn(n, n, |k, j| self.v[(perm[k], j)]);
        let mut v = r * vp;
        for (i, &di) in d.iter().enumerate() {
            v.row_mut(i).scale_mut(1.0 / di);
        }
        self.u = q;
        self.d = d;
        self.v = v;
    }

    /// Singular values and left singular vectors of K via one-sided Jacobi on (DV)†.
    fn svd_left(&self) -> (Vec<f64>, CMat) {
        let n = self.d.len();
        let mut x = self.v.adjoint();
        for (c, &d) in self.d.iter().enumerate() {
            x.column_mut(c).scale_mut(d);
        }
        let mut z = CMat::identity(n, n);
        for _sweep in 0..100 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha = x.column(p).norm_squared();
                    let beta = x.column(q).norm_squared();
                    let gamma = x.column(p).dotc(&x.column(q));
                    let g = gamma.norm();
                    if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                        continue;
                    }
                    rotated = true;
                    let phase = gamma / g;
                    let zeta = (beta - alpha) / (2.0 * g);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for mat in [&mut x, &mut z] {
                        for i in 0..n {
                            let xp = mat[(i, p)];
                            let xq = mat[(i, q)];
                            mat[(i, p)] = xp * c - xq * phase.conj() * s;
                            mat[(i, q)] = xp * phase * s + xq * c;
                        }
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let sigma: Vec<f64> = (0..n).map(|c| x.column(c).norm()).collect();
        (sigma, &self.u * z)
    }
}

/// Effective Hamiltonian from the dense product of the first T record rows.
pub struct DenseEffective {
    /// H̃_eff = ln(K̃K̃†)/(2T); eigenvalues ±z.
    pub h_bdg: CMat,
    /// H_M = −iΩH̃_effΩ†/2, real antisymmetric.
    pub h_majorana: RMat,
    /// Non-negative exponents, ascending.
    pub z: Vec<f64>,
    /// Eigenvectors of the +z half, columns matching `z`.
    pub vectors: CMat,
    /// max |z_(k) + z_(2L−1−k)| over the sorted full spectrum.
    pub pairing_residual: f64,
}

pub fn effective_hamiltonian_direct(record: &OutcomeRecord, ops: &PrecomputedOperators, steps: usize) -> Result<DenseEffective> {
    let l = ops.params().l;
    let n = 2 * l;
    if steps == 0 || record.steps() < steps || !record.matches(ops.params()) {
        return Err(Error::Shape("record too short or mismatched for the dense product".into()));
    }
    let mut k = UdvProduct::identity(n);
    for t in 0..steps {
        k.left_multiply(&ops.step_matrix(record.step(t))?);
        let top = k.d.iter().cloned().fold(0.0, f64::max);
        if !(top < OVERFLOW_GUARD) || k.d.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Overflow(t + 1));
        }
    }
    let (sigma, left) = k.svd_left();
    let t = steps as f64;
    let all: Vec<f64> = sigma.iter().map(|s| s.ln() / t).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| all[a].total_cmp(&all[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| all[i]).collect();
    let pairing_residual = (0..n).map(|i| (sorted[i] + sorted[n - 1 - i]).abs()).fold(0.0, f64::max);
    let z = sorted[l..].to_vec();
    let vectors = CMat::from_fn(n, l, |i, c| left[(i, order[l + c])]);
    let mut h_bdg = CMat::zeros(n, n);
    for (c, &zc) in all.iter().enumerate() {
        let col = left.column(c);
        h_bdg += col * col.adjoint() * C64::new(zc, 0.0);
    }
    let map = BasisMap::new(l)?;
    let (hm, _) = map.majorana_from_bdg(&h_bdg);
    Ok(DenseEffective { h_bdg, h_majorana: hm * 0.5, z, vectors, pairing_residual })
}
