use majolyap_core::circuit::*;
use majolyap_core::entanglement::{subsystem_entropy, topological_entanglement_entropy, Partition};
use majolyap_core::gaussian::GaussianPureState;
use majolyap_core::linalg::{max_abs, max_abs_real, CMat, C64};
use majolyap_core::oracle::*;
use majolyap_core::rng::{Stream, TrajectorySeed};

fn quadratic_form(m: &CMat, phi: &[CMat]) -> CMat {
    let dim = phi[0].nrows();
    let mut out = CMat::zeros(dim, dim);
    for a in 0..phi.len() {
        for b in 0..phi.len() {
            if m[(a, b)] != C64::new(0.0, 0.0) {
                out += phi[a].adjoint() * &phi[b] * m[(a, b)];
            }
        }
    }
    out
}

/// Distance between two operators after removing the identity component.
fn traceless_distance(a: &CMat, b: &CMat) -> f64 {
    let d = a - b;
    let n = d.nrows();
    let shift = d.trace() / C64::new(n as f64, 0.0);
    max_abs(&(d - CMat::identity(n, n) * shift))
}

fn all_params() -> Vec<CircuitParams> {
    let mut out = Vec::new();
    for l in 2..=4 {
        for j in [0.0, 0.5] {
            for mu in [0.1, 0.5, 0.9] {
                for bc in [Boundary::Open, Boundary::Periodic, Boundary::Antiperiodic] {
                    out.push(CircuitParams::new(l, j, bc, mu).unwrap());
                }
            }
        }
    }
    out
}

#[test]
fn bdg_hamiltonian_reproduces_many_body_hamiltonian() {
    for bc in [Boundary::Open, Boundary::Periodic, Boundary::Antiperiodic] {
        let p = CircuitParams::new(3, 0.7, bc, 0.4).unwrap();
        let g = build_majorana_ops(3).unwrap();
        let phi = nambu_ops(3).unwrap();
        let h = kitaev_hamiltonian(&p, &g);
        assert!(traceless_distance(&quadratic_form(&build_hamiltonian(&p), &phi), &h) < 1e-12, "{bc}");
    }
}

#[test]
fn measurement_generator_reproduces_bilinear() {
    let p = CircuitParams::independent(3, 0.0, Boundary::Periodic, 0.3, 0.8).unwrap();
    let g = build_majorana_ops(3).unwrap();
    let phi = nambu_ops(3).unwrap();
    for bond in p.bonds() {
        for s in [1i8, -1] {
            let gen = build_measurement_generator(&bond, s, &p).unwrap();
            let (a, b) = bond.majoranas(3);
            let mu = if bond.kind == BondKind::Odd { p.mu_o } else { p.mu_e };
            let theta = mu.atanh();
            let expect = &g[a] * &g[b] * C64::new(0.0, -(s as f64) * theta);
            let got = quadratic_form(&gen.map(|x| C64::new(x, 0.0)), &phi);
            assert!(traceless_distance(&got, &expect) < 1e-12);
        }
    }
}

#[test]
fn single_particle_matrices_are_heisenberg_conjugations() {
    for p in all_params().into_iter().filter(|p| p.l == 3) {
        let ops = PrecomputedOperators::new(p).unwrap();
        let ex = ExactCircuit::new(p).unwrap();
        let phi = nambu_ops(3).unwrap();
        let u = heisenberg_coefficients(&ex.unitary().adjoint(), &phi).unwrap();
        assert!(max_abs(&(u - ops.unitary())) < 1e-12);
        for k in 0..p.bond_count() {
            for s in [1i8, -1] {
                let m = heisenberg_coefficients(ex.kraus(k, s), &phi).unwrap();
                assert!(max_abs(&(m - ops.dense_kraus(k, s))) < 1e-10);
            }
        }
    }
}

#[test]
fn many_body_kraus_complete_and_unitary() {
    for l in 1..=3 {
        for bc in [Boundary::Open, Boundary::Periodic, Boundary::Antiperiodic] {
            let p = CircuitParams::new(l, 0.5, bc, 0.35).unwrap();
            let ex = ExactCircuit::new(p).unwrap();
            let dim = 1 << l;
            let id = CMat::identity(dim, dim);
            for k in 0..p.bond_count() {
                let sum = ex.kraus(k, 1).adjoint() * ex.kraus(k, 1) + ex.kraus(k, -1).adjoint() * ex.kraus(k, -1);
                assert!(max_abs(&(sum - &id)) < 1e-12);
            }
            assert!(max_abs(&(ex.unitary().adjoint() * ex.unitary() - &id)) < 1e-12);
            let ops = PrecomputedOperators::new(p).unwrap();
            let n = 2 * l;
            assert!(max_abs(&(ops.unitary().adjoint() * ops.unitary() - CMat::identity(n, n))) < 1e-12);
        }
    }
}

#[test]
fn sampled_trajectories_agree_with_exact_evolution() {
    for p in all_params() {
        let ops = PrecomputedOperators::new(p).unwrap();
        let ex = ExactCircuit::new(p).unwrap();
        for seed in 0..3 {
            let ts = TrajectorySeed::new(seed, 11);
            let exact = ex.evolve_sampled(&mut ts.rng(Stream::Born), 30).unwrap();
            let mut st = GaussianPureState::vacuum(p.l).unwrap();
            let mut fock = FockState::vacuum(p.l).unwrap();
            let mut rng = ts.rng(Stream::Born);
            let mut rec = OutcomeRecord::for_params(&p);
            for t in 0..30 {
                let out = step(&mut st, &mut rng, &ops).unwrap();
                let row = out.outcomes.clone();
                let (_, probs) = ex.step_with(&mut fock, |k, _| row[k]).unwrap();
                for (a, b) in out.p_plus.iter().zip(&probs) {
                    assert!((a - b).abs() < 1e-10, "{p:?} t={t}");
                }
                let cov = st.correlation_matrix().covariance(ops.map()).unwrap();
                let diff = max_abs_real(&(cov.matrix() - fock.covariance(ex.gammas())));
                assert!(diff < 1e-9, "{p:?} t={t} diff={diff}");
                rec.push(&row).unwrap();
            }
            assert_eq!(rec, exact.record);
        }
    }
}

#[test]
fn odd_bonds_commute_within_a_sweep() {
    let p = CircuitParams::new(4, 0.0, Boundary::Periodic, 0.6).unwrap();
    let ops = PrecomputedOperators::new(p).unwrap();
    let row = [1i8, -1, -1, 1, 1, 1, -1, -1];
    let mut forward = CMat::identity(8, 8);
    let mut reversed = CMat::identity(8, 8);
    let odd: Vec<usize> = ops.sweep().iter().cloned().filter(|&k| ops.bonds()[k].kind == BondKind::Odd).collect();
    let even: Vec<usize> = ops.sweep().iter().cloned().filter(|&k| ops.bonds()[k].kind == BondKind::Even).collect();
    for &k in odd.iter().chain(&even) {
        forward = ops.dense_kraus(k, row[k]) * forward;
    }
    for &k in odd.iter().rev().chain(even.iter().rev()) {
        reversed = ops.dense_kraus(k, row[k]) * reversed;
    }
    assert!(max_abs(&(forward - reversed)) < 1e-12);
}

#[test]
fn twisted_replay_agrees_with_exact_apbc_circuit() {
    let p = CircuitParams::new(3, 0.5, Boundary::Periodic, 0.4).unwrap();
    let rec = ExactCircuit::new(p).unwrap().evolve_sampled(&mut TrajectorySeed::new(6, 0).rng(Stream::Born), 12).unwrap().record;
    let tw = rec.twist_record().unwrap();
    let pa = p.with_boundary(Boundary::Antiperiodic);
    let ops = PrecomputedOperators::new(pa).unwrap();
    let exact = ExactCircuit::new(pa).unwrap().evolve_replay(&tw, 12).unwrap();
    let mut st = GaussianPureState::vacuum(3).unwrap();
    for t in 0..12 {
        replay_step(&mut st, tw.step(t), &ops).unwrap();
    }
    let cov = st.correlation_matrix().covariance(ops.map()).unwrap();
    let g = build_majorana_ops(3).unwrap();
    assert!(max_abs_real(&(cov.matrix() - exact.state.covariance(&g))) < 1e-9);
}

#[test]
fn strong_even_measurement_entropy_matches_partial_trace() {
    let p = CircuitParams::independent(2, 0.0, Boundary::Periodic, 0.0, 0.99).unwrap();
    let ops = PrecomputedOperators::new(p).unwrap();
    let ex = ExactCircuit::new(p).unwrap();
    let mut st = GaussianPureState::vacuum(2).unwrap();
    let mut fock = FockState::vacuum(2).unwrap();
    let row = [1i8, 1, 1, -1];
    replay_step(&mut st, &row, &ops).unwrap();
    ex.step_with(&mut fock, |k, _| row[k]).unwrap();
    let s_gauss = subsystem_entropy(&st.correlation_matrix(), &[0]).unwrap();
    let s_exact = fock.entropy(&[0]).unwrap();
    assert!((s_gauss - s_exact).abs() < 1e-8);
    assert!(s_exact > 0.5);
}

#[test]
fn topological_entropy_matches_exact_four_term() {
    let p = CircuitParams::new(4, 0.5, Boundary::Open, 0.45).unwrap();
    let ops = PrecomputedOperators::new(p).unwrap();
    let ex = ExactCircuit::new(p).unwrap();
    let tr = ex.evolve_sampled(&mut TrajectorySeed::new(2, 2).rng(Stream::Born), 6).unwrap();
    let mut st = GaussianPureState::vacuum(4).unwrap();
    for t in 0..6 {
        replay_step(&mut st, tr.record.step(t), &ops).unwrap();
    }
    let part = Partition::quarters(4).unwrap();
    let gauss = topological_entanglement_entropy(&st.correlation_matrix(), &part).unwrap();
    let s = |x: &[usize]| tr.state.entropy(x).unwrap();
    let exact = s(&[0, 1]) + s(&[1, 2]) - s(&[1]) - s(&[0, 1, 2]);
    assert!((gauss - exact).abs() < 1e-8, "{gauss} {exact}");
    for x in [vec![0], vec![1, 2], vec![0, 3], vec![0, 1, 2]] {
        assert!((subsystem_entropy(&st.correlation_matrix(), &x).unwrap() - s(&x)).abs() < 1e-8);
    }
}
