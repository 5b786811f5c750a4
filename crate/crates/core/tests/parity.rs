use std::path::PathBuf;

use majolyap_core::circuit::*;
use majolyap_core::lyapunov::{effective_hamiltonian_direct, vectors_from_columns, Frame};
use majolyap_core::oracle::{effective_parity_exact, ExactCircuit};
use majolyap_core::rng::{Stream, TrajectorySeed};
use majolyap_core::topology::{chi_direct, pfaffian_invariant, pfaffian_sign};
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct ParityCase {
    l: usize,
    j: f64,
    mu_o: f64,
    steps: usize,
    record: String,
    parity_pbc: i8,
    parity_apbc: i8,
}

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/parity_cases.json")
}

fn sample_record(p: CircuitParams, seed: u64, steps: usize) -> OutcomeRecord {
    ExactCircuit::new(p).unwrap().evolve_sampled(&mut TrajectorySeed::new(seed, 0).rng(Stream::Born), steps).unwrap().record
}

/// Writes the golden file from the Fock-space oracle.
#[test]
#[ignore]
fn regenerate_parity_fixture() {
    let mut cases = Vec::new();
    for (l, j, mu, seed) in [(2, 0.0, 0.2, 1), (3, 0.5, 0.1, 2), (3, 0.5, 0.8, 3), (4, 0.0, 0.3, 4), (4, 0.5, 0.9, 5), (3, 0.0, 0.6, 6)] {
        let p = CircuitParams::new(l, j, Boundary::Periodic, mu).unwrap();
        let rec = sample_record(p, seed, 10);
        let pp = effective_parity_exact(&rec, &p, 10).unwrap();
        let pa = effective_parity_exact(&rec.twist_record().unwrap(), &p.with_boundary(Boundary::Antiperiodic), 10).unwrap();
        cases.push(ParityCase { l, j, mu_o: mu, steps: 10, record: rec.to_text(), parity_pbc: pp.parity, parity_apbc: pa.parity });
    }
    std::fs::write(fixture_path(), serde_json::to_string_pretty(&cases).unwrap()).unwrap();
}

#[test]
fn golden_parities_match_determinants_and_pfaffians() {
    let cases: Vec<ParityCase> = serde_json::from_str(&std::fs::read_to_string(fixture_path()).unwrap()).unwrap();
    assert!(!cases.is_empty());
    for c in cases {
        let p = CircuitParams::new(c.l, c.j, Boundary::Periodic, c.mu_o).unwrap();
        let rec = OutcomeRecord::parse(&c.record).unwrap();
        let (dp, da) = chi_direct(&rec, &p, c.steps).unwrap();
        let sign_l = if c.l % 2 == 0 { 1.0 } else { -1.0 };
        assert_eq!((sign_l * dp).signum() as i8, c.parity_pbc);
        assert_eq!((sign_l * da).signum() as i8, c.parity_apbc);
        assert!(((dp * da).abs() - 1.0).abs() < 1e-9);
        assert_eq!(pfaffian_invariant(&rec, &p, c.steps).unwrap(), c.parity_pbc * c.parity_apbc);
    }
}

#[test]
fn determinant_parity_tracks_exact_ground_state() {
    for l in 2..=4 {
        for (j, mu) in [(0.0, 0.2), (0.5, 0.4), (0.5, 0.7), (0.0, 0.9)] {
            for bc in [Boundary::Periodic, Boundary::Antiperiodic, Boundary::Open] {
                let p = CircuitParams::new(l, j, bc, mu).unwrap();
                let ops = PrecomputedOperators::new(p).unwrap();
                for seed in 0..4 {
                    let rec = sample_record(p, seed, 8);
                    let Ok(exact) = effective_parity_exact(&rec, &p, 8) else { continue };
                    let d = effective_hamiltonian_direct(&rec, &ops, 8).unwrap();
                    let det = vectors_from_columns(&d.vectors).determinant();
                    let sign_l = if l % 2 == 0 { 1.0 } else { -1.0 };
                    assert_eq!((sign_l * det).signum() as i8, exact.parity, "{p:?} seed {seed}");
                    assert_eq!(pfaffian_sign(&d.h_majorana).unwrap() as f64, det.signum());
                }
            }
        }
    }
}

#[test]
fn qr_snapshot_matches_dense_stretch_of_the_frame() {
    // ln R of the QR of K_T W₀ is what the frame accumulates, exactly.
    let p = CircuitParams::new(4, 0.5, Boundary::Periodic, 0.3).unwrap();
    let ops = PrecomputedOperators::new(p).unwrap();
    let rec = sample_record(p, 9, 30);
    let mut f = Frame::random(4, &mut TrajectorySeed::new(9, 0).rng(Stream::FramePbc));
    let w0 = f.w().clone();
    let mut k = majolyap_core::linalg::CMat::identity(8, 8);
    for t in 0..30 {
        f.propagate_outcomes(&ops, rec.step(t)).unwrap();
        k = ops.step_matrix(rec.step(t)).unwrap() * k;
    }
    let qr = majolyap_core::linalg::thin_qr(k * w0);
    for (a, d) in f.acc().iter().zip(&qr.r_diag) {
        assert!((a - d.ln()).abs() < 1e-8);
    }
}
