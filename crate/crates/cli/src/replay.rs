//! Deterministic recomputation from a stored outcome record.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use majolyap_core::circuit::{Boundary, CircuitParams, OutcomeRecord, PrecomputedOperators};
use majolyap_core::entanglement::{sample_quarters, subsystem_entropy, EntanglementSample};
use majolyap_core::lyapunov::{assemble_vectors, spinor_edge_weight, Frame, LyapunovRun};
use majolyap_core::rng::{Stream, TrajectorySeed};
use majolyap_core::topology::parity;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct ReplayRequest {
    pub j: f64,
    pub mu_o: f64,
    pub mu_e: Option<f64>,
    pub seed: TrajectorySeed,
    pub chi: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayChi {
    #[serde(rename = "P_pbc")]
    pub p_pbc: f64,
    #[serde(rename = "P_apbc")]
    pub p_apbc: f64,
    pub chi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub params: CircuitParams,
    pub seed: TrajectorySeed,
    #[serde(rename = "T")]
    pub t: usize,
    /// Finite-T exponents, ascending.
    pub spectrum: Vec<f64>,
    pub parity: f64,
    pub edge_weight: f64,
    pub half_chain_entropy: f64,
    pub quarters: Option<EntanglementSample>,
    pub chi: Option<ReplayChi>,
}

fn replay_frame(
    ops: Arc<PrecomputedOperators>,
    record: OutcomeRecord,
    seed: TrajectorySeed,
    stream: Stream,
    with_state: bool,
) -> CliResult<LyapunovRun> {
    let steps = record.steps();
    let frame = Frame::random(ops.params().l, &mut seed.rng(stream));
    let mut run = LyapunovRun::replay(ops, record, frame, with_state)?;
    for _ in 0..steps {
        run.advance()?;
    }
    Ok(run)
}

pub fn replay(record: &OutcomeRecord, req: &ReplayRequest) -> CliResult<ReplayReport> {
    let l = record.modes();
    let bc = record.boundary();
    let params = match req.mu_e {
        Some(mu_e) => CircuitParams::independent(l, req.j, bc, req.mu_o, mu_e)?,
        None => CircuitParams::new(l, req.j, bc, req.mu_o)?,
    };
    if record.steps() == 0 {
        return Err(CliError::Input("record has no steps".into()));
    }
    let stream = if bc == Boundary::Antiperiodic { Stream::FrameApbc } else { Stream::FramePbc };
    let ops = Arc::new(PrecomputedOperators::new(params)?);
    let run = replay_frame(ops.clone(), record.clone(), req.seed, stream, true)?;
    let vectors = assemble_vectors(run.frame(), ops.map())?;
    let c = run.state().expect("replay tracks the state").correlation_matrix();
    let half: Vec<usize> = (0..l / 2).collect();
    let half_chain_entropy = if half.is_empty() { 0.0 } else { subsystem_entropy(&c, &half)? };
    let quarters = if l.is_multiple_of(4) { Some(sample_quarters(&c)?) } else { None };

    let chi = if req.chi {
        if bc != Boundary::Periodic {
            return Err(CliError::Input("--chi needs a PBC record".into()));
        }
        let partner = params.with_boundary(Boundary::Antiperiodic);
        let ops_a = Arc::new(PrecomputedOperators::new(partner)?);
        let run_a = replay_frame(ops_a.clone(), record.twist_record()?, req.seed, Stream::FrameApbc, false)?;
        let p_pbc = parity(&vectors);
        let p_apbc = parity(&assemble_vectors(run_a.frame(), ops_a.map())?);
        Some(ReplayChi { p_pbc, p_apbc, chi: p_pbc * p_apbc })
    } else {
        None
    };

    Ok(ReplayReport {
        params,
        seed: req.seed,
        t: record.steps(),
        spectrum: run.frame().snapshot()?.z,
        parity: parity(&vectors),
        edge_weight: spinor_edge_weight(&vectors).edge_weight,
        half_chain_entropy,
        quarters,
        chi,
    })
}

pub fn read_record(path: &Path) -> CliResult<OutcomeRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    OutcomeRecord::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use majolyap_core::topology::{chi_with_record, ChiMode};

    #[test]
    fn reproduces_fixed_t_chi() {
        let params = CircuitParams::new(6, 0.5, Boundary::Periodic, 0.3).unwrap();
        let seed = TrajectorySeed::new(11, 4);
        let (r, record) = chi_with_record(params, seed, ChiMode::FixedT(25)).unwrap();
        let req = ReplayRequest { j: 0.5, mu_o: 0.3, mu_e: None, seed, chi: true };
        let rep = replay(&record, &req).unwrap();
        let c = rep.chi.unwrap();
        assert_eq!(c.p_pbc, r.p_pbc);
        assert_eq!(c.p_apbc, r.p_apbc);
        assert_eq!(rep.parity, r.p_pbc);
        assert!(rep.quarters.is_none());
    }
}
