//! Entanglement entropy, mutual information and topological entanglement entropy from C.

use std::ops::Range;

use serde::Serialize;

use crate::circuit::{step, CircuitParams, OutcomeRecord, PrecomputedOperators};
use crate::error::{Error, Result};
use crate::gaussian::{CorrelationMatrix, GaussianPureState};
use crate::linalg::{hermitian_eigh, CMat};
use crate::rng::{Stream, TrajectorySeed};

pub const ENTROPY_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    segments: Vec<Range<usize>>,
}

impl Partition {
    pub fn new(l: usize, segments: Vec<Range<usize>>) -> Result<Self> {
        let mut seen = vec![false; l];
        for seg in &segments {
            if seg.end > l || seg.is_empty() {
                return Err(Error::InvalidParameter(format!("segment {seg:?} outside 0..{l}")));
            }
            for i in seg.clone() {
                if seen[i] {
                    return Err(Error::InvalidParameter("segments overlap".into()));
                }
                seen[i] = true;
            }
        }
        Ok(Partition { segments })
    }

    /// Four equal consecutive segments A, B, C, D.
    pub fn quarters(l: usize) -> Result<Self> {
        if l == 0 || !l.is_multiple_of(4) {
            return Err(Error::InvalidSize(format!("quarter partition needs L ≡ 0 mod 4, got {l}")));
        }
        let q = l / 4;
        Partition::new(l, (0..4).map(|k| k * q..(k + 1) * q).collect())
    }

    pub fn segment(&self, k: usize) -> Vec<usize> {
        self.segments[k].clone().collect()
    }

    /// Union of the listed segments, in order.
    pub fn union(&self, ks: &[usize]) -> Vec<usize> {
        ks.iter().flat_map(|&k| self.segments[k].clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entropy {
    pub bits: f64,
    /// max |λ_k + λ_{2n−1−k} − 1| over the sorted spectrum.
    pub pairing_residual: f64,
}

fn binary_entropy(p: f64) -> f64 {
    let p = p.clamp(ENTROPY_CLAMP, 1.0 - ENTROPY_CLAMP);
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

pub fn subsystem_entropy_detailed(c: &CorrelationMatrix, x: &[usize]) -> Result<Entropy> {
    let l = c.modes();
    if x.is_empty() || x.iter().any(|&i| i >= l) {
        return Err(Error::InvalidParameter(format!("subsystem {x:?} outside 0..{l}")));
    }
    let idx: Vec<usize> = x.iter().cloned().chain(x.iter().map(|&i| l + i)).collect();
    let m = c.matrix();
    let sub = CMat::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
    let (vals, _) = hermitian_eigh(&sub);
    let n = vals.len();
    let mut bits = 0.0;
    let mut pairing_residual: f64 = 0.0;
    for k in 0..n / 2 {
        let mate = vals[n - 1 - k];
        pairing_residual = pairing_residual.max((vals[k] + mate - 1.0).abs());
        bits += binary_entropy(0.5 * (vals[k] + 1.0 - mate));
    }
    Ok(Entropy { bits, pairing_residual })
}

/// Von Neumann entropy of the modes in `x`, in bits.
pub fn subsystem_entropy(c: &CorrelationMatrix, x: &[usize]) -> Result<f64> {
    subsystem_entropy_detailed(c, x).map(|e| e.bits)
}

/// I₂(A:B) = S_A + S_B − S_AB.
pub fn mutual_information(c: &CorrelationMatrix, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.iter().any(|i| b.contains(i)) {
        return Err(Error::InvalidParameter("subsystems overlap".into()));
    }
    let ab: Vec<usize> = a.iter().chain(b).cloned().collect();
    Ok(subsystem_entropy(c, a)? + subsystem_entropy(c, b)? - subsystem_entropy(c, &ab)?)
}

/// S_AB + S_BC − S_B − S_ABC on the first three segments.
pub fn topological_entanglement_entropy(c: &CorrelationMatrix, p: &Partition) -> Result<f64> {
    if p.len() < 3 {
        return Err(Error::InvalidParameter("need segments A, B, C".into()));
    }
    let s = |ks: &[usize]| subsystem_entropy(c, &p.union(ks));
    Ok(s(&[0, 1])? + s(&[1, 2])? - s(&[1])? - s(&[0, 1, 2])?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntanglementSample {
    /// I₂ between opposite quarters A and C.
    pub mutual_information: f64,
    /// S^topo on adjacent quarters A, B, C.
    pub topological_entropy: f64,
    /// Half-chain entropy S_AB.
    pub half_chain_entropy: f64,
    pub steps: usize,
}

pub fn sample_quarters(c: &CorrelationMatrix) -> Result<EntanglementSample> {
    let p = Partition::quarters(c.modes())?;
    Ok(EntanglementSample {
        mutual_information: mutual_information(c, &p.segment(0), &p.segment(2))?,
        topological_entropy: topological_entanglement_entropy(c, &p)?,
        half_chain_entropy: subsystem_entropy(c, &p.union(&[0, 1]))?,
        steps: 1,
    })
}

/// Averages the quarter diagnostics over `window` steps after `warmup` steps of a sampled trajectory.
pub fn trajectory_entanglement(
    params: CircuitParams,
    seed: TrajectorySeed,
    warmup: usize,
    window: usize,
) -> Result<(EntanglementSample, OutcomeRecord)> {
    if window == 0 {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    Partition::quarters(params.l)?;
    let ops = PrecomputedOperators::new(params)?;
    let mut state = GaussianPureState::vacuum(params.l)?;
    let mut rng = seed.rng(Stream::Born);
    let mut record = OutcomeRecord::for_params(&params);
    for _ in 0..warmup {
        record.push(&step(&mut state, &mut rng, &ops)?.outcomes)?;
    }
    let mut acc = EntanglementSample { mutual_information: 0.0, topological_entropy: 0.0, half_chain_entropy: 0.0, steps: warmup + window };
    for _ in 0..window {
        record.push(&step(&mut state, &mut rng, &ops)?.outcomes)?;
        let s = sample_quarters(&state.correlation_matrix())?;
        acc.mutual_information += s.mutual_information;
        acc.topological_entropy += s.topological_entropy;
        acc.half_chain_entropy += s.half_chain_entropy;
    }
    let n = window as f64;
    acc.mutual_information /= n;
    acc.topological_entropy /= n;
    acc.half_chain_entropy /= n;
    Ok((acc, record))
}
