//! Kitaev unitary, weak-measurement Kraus matrices and brickwork trajectories.
//!
//! One time step applies e^{−iℋ}, then the odd-bond sweep, then the even-bond sweep.
//! Bonds are labelled ℓ = 1…2L: odd bond j carries ℓ = 2j−1 and measures iγ_{2j−1}γ_{2j};
//! even bond j carries ℓ = 2j and measures iγ_{2j}γ_{2j+1}, with γ_{2L+1} ≡ γ₁.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{BasisMap, CorrelationMatrix, GaussianPureState};
use crate::linalg::{hermitian_map, real_part, CMat, LocalOp, RMat, C64};
use crate::rng::draw_outcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Boundary {
    #[serde(rename = "OBC")]
    Open,
    #[serde(rename = "PBC")]
    Periodic,
    #[serde(rename = "APBC")]
    Antiperiodic,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Open => "OBC",
            Boundary::Periodic => "PBC",
            Boundary::Antiperiodic => "APBC",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "OBC" => Ok(Boundary::Open),
            "PBC" => Ok(Boundary::Periodic),
            "APBC" => Ok(Boundary::Antiperiodic),
            other => Err(Error::Parse(format!("unknown boundary condition {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub l: usize,
    pub j: f64,
    pub bc: Boundary,
    pub mu_o: f64,
    pub mu_e: f64,
    pub couple_mu: bool,
}

impl CircuitParams {
    /// Parameters with μ_e = 1 − μ_o.
    pub fn new(l: usize, j: f64, bc: Boundary, mu_o: f64) -> Result<Self> {
        let p = CircuitParams { l, j, bc, mu_o, mu_e: 1.0 - mu_o, couple_mu: true };
        p.validate()?;
        Ok(p)
    }

    pub fn independent(l: usize, j: f64, bc: Boundary, mu_o: f64, mu_e: f64) -> Result<Self> {
        let p = CircuitParams { l, j, bc, mu_o, mu_e, couple_mu: false };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::InvalidSize("L must be at least 1".into()));
        }
        if !self.j.is_finite() {
            return Err(Error::InvalidParameter("J must be finite".into()));
        }
        for (name, mu) in [("mu_o", self.mu_o), ("mu_e", self.mu_e)] {
            if !(0.0..1.0).contains(&mu) {
                return Err(Error::InvalidParameter(format!("{name} = {mu} outside [0, 1)")));
            }
        }
        if self.couple_mu && (self.mu_e - (1.0 - self.mu_o)).abs() > 1e-15 {
            return Err(Error::InvalidParameter("couple_mu requires mu_e = 1 - mu_o".into()));
        }
        Ok(())
    }

    /// J' = 0, +J, −J for OBC, PBC, APBC.
    pub fn boundary_coupling(&self) -> f64 {
        match self.bc {
            Boundary::Open => 0.0,
            Boundary::Periodic => self.j,
            Boundary::Antiperiodic => -self.j,
        }
    }

    pub fn theta_o(&self) -> f64 {
        self.mu_o.atanh()
    }

    pub fn theta_e(&self) -> f64 {
        self.mu_e.atanh()
    }

    pub fn with_boundary(&self, bc: Boundary) -> Self {
        CircuitParams { bc, ..*self }
    }

    pub fn bonds(&self) -> Vec<Bond> {
        let mut out = Vec::with_capacity(2 * self.l);
        for site in 0..self.l {
            out.push(Bond { kind: BondKind::Odd, site });
            if !(self.bc == Boundary::Open && site + 1 == self.l) {
                out.push(Bond { kind: BondKind::Even, site });
            }
        }
        out
    }

    pub fn bond_count(&self) -> usize {
        if self.bc == Boundary::Open {
            2 * self.l - 1
        } else {
            2 * self.l
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BondKind {
    Odd,
    Even,
}

/// Bond on site `site` (0-based j).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bond {
    pub kind: BondKind,
    pub site: usize,
}

impl Bond {
    /// ℓ, 1-based.
    pub fn label(&self) -> usize {
        match self.kind {
            BondKind::Odd => 2 * self.site + 1,
            BondKind::Even => 2 * self.site + 2,
        }
    }

    /// 0-based Majorana indices (a, b) of the measured iγ_aγ_b.
    pub fn majoranas(&self, l: usize) -> (usize, usize) {
        match self.kind {
            BondKind::Odd => (2 * self.site, 2 * self.site + 1),
            BondKind::Even => (2 * self.site + 1, (2 * self.site + 2) % (2 * l)),
        }
    }

    pub fn is_boundary(&self, l: usize) -> bool {
        self.kind == BondKind::Even && self.site + 1 == l
    }
}

/// Positions (into the ℓ-ordered bond list) in application order: odd sweep then even sweep.
pub fn sweep_order(params: &CircuitParams) -> Vec<usize> {
    let bonds = params.bonds();
    let odd = bonds.iter().enumerate().filter(|(_, b)| b.kind == BondKind::Odd).map(|(k, _)| k);
    let even = bonds.iter().enumerate().filter(|(_, b)| b.kind == BondKind::Even).map(|(k, _)| k);
    odd.chain(even).collect()
}

fn add_bilinear(a: &mut RMat, p: usize, q: usize, coeff: f64) {
    a[(p, q)] += 2.0 * coeff;
    a[(q, p)] -= 2.0 * coeff;
}

/// Majorana matrix A of ℋ_Kitaev = (i/4) γᵀ A γ.
pub fn majorana_hamiltonian(params: &CircuitParams) -> RMat {
    let n = 2 * params.l;
    let mut a = RMat::zeros(n, n);
    for ell in 0..n - 1 {
        add_bilinear(&mut a, ell, ell + 1, params.j);
    }
    let jp = params.boundary_coupling();
    if jp != 0.0 {
        add_bilinear(&mut a, n - 1, 0, jp);
    }
    a
}

/// H̃ with ℋ_Kitaev = φ† H̃ φ.
pub fn build_hamiltonian(params: &CircuitParams) -> CMat {
    let map = BasisMap::new(params.l).expect("validated params");
    map.bdg_from_majorana(&majorana_hamiltonian(params))
}

fn check_bond(bond: &Bond, params: &CircuitParams) -> Result<()> {
    if bond.site >= params.l {
        return Err(Error::InvalidParameter(format!("bond site {} out of range", bond.site + 1)));
    }
    if params.bc == Boundary::Open && bond.is_boundary(params.l) {
        return Err(Error::InvalidParameter("even bond L is discarded under OBC".into()));
    }
    Ok(())
}

fn measurement_strength(bond: &Bond, params: &CircuitParams) -> f64 {
    match bond.kind {
        BondKind::Odd => params.mu_o,
        BondKind::Even => params.mu_e,
    }
}

/// Θ̃ with Θ̂ = −isθ γ_aγ_b = φ† Θ̃ φ.
pub fn build_measurement_generator(bond: &Bond, s: i8, params: &CircuitParams) -> Result<RMat> {
    check_bond(bond, params)?;
    let theta = measurement_strength(bond, params).atanh();
    let n = 2 * params.l;
    let (p, q) = bond.majoranas(params.l);
    let mut a = RMat::zeros(n, n);
    add_bilinear(&mut a, p, q, -(s as f64) * theta);
    let map = BasisMap::new(params.l)?;
    let (gen, imag) = real_part(&map.bdg_from_majorana(&a));
    debug_assert!(imag < 1e-14);
    Ok(gen)
}

fn local_exp(gen: &RMat, scale: f64) -> LocalOp {
    let n = gen.nrows();
    let rows: Vec<usize> = (0..n).filter(|&i| (0..n).any(|j| gen[(i, j)] != 0.0)).collect();
    let block = CMat::from_fn(rows.len(), rows.len(), |r, c| C64::new(gen[(rows[r], rows[c])], 0.0));
    LocalOp { rows, block: hermitian_map(&block, |x| C64::new((scale * x).exp(), 0.0)) }
}

/// All single-particle matrices of one parameter set, shared read-only.
#[derive(Clone, Debug)]
pub struct PrecomputedOperators {
    params: CircuitParams,
    map: BasisMap,
    bonds: Vec<Bond>,
    sweep: Vec<usize>,
    unitary: CMat,
    unitary_is_identity: bool,
    kraus: Vec<[LocalOp; 2]>,
}

impl PrecomputedOperators {
    pub fn new(params: CircuitParams) -> Result<Self> {
        params.validate()?;
        let map = BasisMap::new(params.l)?;
        let h = build_hamiltonian(&params);
        let unitary = hermitian_map(&h, |x| C64::from_polar(1.0, -2.0 * x));
        let unitary_is_identity = h.iter().all(|z| *z == C64::new(0.0, 0.0));
        let bonds = params.bonds();
        let mut kraus = Vec::with_capacity(bonds.len());
        for bond in &bonds {
            let plus = build_measurement_generator(bond, 1, &params)?;
            let minus = build_measurement_generator(bond, -1, &params)?;
            kraus.push([local_exp(&plus, -2.0), local_exp(&minus, -2.0)]);
        }
        Ok(PrecomputedOperators { sweep: sweep_order(&params), params, map, bonds, unitary, unitary_is_identity, kraus })
    }

    pub fn params(&self) -> &CircuitParams {
        &self.params
    }

    pub fn map(&self) -> &BasisMap {
        &self.map
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn sweep(&self) -> &[usize] {
        &self.sweep
    }

    pub fn unitary(&self) -> &CMat {
        &self.unitary
    }

    pub fn unitary_is_identity(&self) -> bool {
        self.unitary_is_identity
    }

    /// K̃ = e^{−2Θ̃} of bond position `k` for outcome `s`, restricted to its support.
    pub fn kraus(&self, k: usize, s: i8) -> &LocalOp {
        &self.kraus[k][if s > 0 { 0 } else { 1 }]
    }

    pub fn dense_kraus(&self, k: usize, s: i8) -> CMat {
        self.kraus(k, s).to_dense(2 * self.params.l)
    }

    fn check_outcomes(&self, outcomes: &[i8]) -> Result<()> {
        if outcomes.len() != self.bonds.len() {
            return Err(Error::Shape(format!("step has {} outcomes, bond list has {}", outcomes.len(), self.bonds.len())));
        }
        if outcomes.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Shape("outcomes must be ±1".into()));
        }
        Ok(())
    }

    /// M̃_t = (even sweep)(odd sweep) Ũ.
    pub fn step_matrix(&self, outcomes: &[i8]) -> Result<CMat> {
        self.check_outcomes(outcomes)?;
        let mut m = self.unitary.clone();
        for &k in &self.sweep {
            self.kraus(k, outcomes[k]).apply_left(&mut m);
        }
        Ok(m)
    }

    /// M̃_t⁻¹ = Ũ† (odd sweep)⁻¹ (even sweep)⁻¹, using K̃(−s) = K̃(s)⁻¹.
    pub fn inverse_step_matrix(&self, outcomes: &[i8]) -> Result<CMat> {
        self.check_outcomes(outcomes)?;
        let n = 2 * self.params.l;
        let mut m = CMat::identity(n, n);
        for &k in self.sweep.iter().rev() {
            self.kraus(k, -outcomes[k]).apply_left(&mut m);
        }
        Ok(self.unitary.adjoint() * m)
    }
}

/// ⟨iγ_aγ_b⟩ of a bond from the correlation entries it needs.
fn bond_expectation(bond: &Bond, l: usize, entry: impl Fn(usize, usize) -> C64) -> f64 {
    let j = bond.site;
    match bond.kind {
        BondKind::Odd => 1.0 - 2.0 * entry(j, j).re,
        BondKind::Even if l == 1 => 2.0 * entry(0, 0).re - 1.0,
        BondKind::Even => {
            let k = (j + 1) % l;
            2.0 * (entry(j, k) + entry(j, l + k)).re
        }
    }
}

fn born_from_expectation(expect: f64, mu: f64, s: i8) -> Result<f64> {
    let p = (1.0 + mu * mu - 2.0 * (s as f64) * mu * expect) / (2.0 * (1.0 + mu * mu));
    if !(-1e-10..=1.0 + 1e-10).contains(&p) || !p.is_finite() {
        return Err(Error::Corrupted(format!("Born probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Odd: ((s−μ)² + 4sμG_jj)/(2(1+μ²)); even: (1 + μ² − 4sμ Re[G_{j,j+1} + F_{j,j+1}])/(2(1+μ²)).
pub fn born_probability(c: &CorrelationMatrix, bond: &Bond, s: i8, params: &CircuitParams) -> Result<f64> {
    check_bond(bond, params)?;
    let m = c.matrix();
    let e = bond_expectation(bond, params.l, |a, b| m[(a, b)]);
    born_from_expectation(e, measurement_strength(bond, params), s)
}

/// Same as [`born_probability`] reading only the needed entries of 𝕌𝕌†.
pub fn born_probability_state(state: &GaussianPureState, bond: &Bond, s: i8, params: &CircuitParams) -> Result<f64> {
    let e = bond_expectation(bond, params.l, |a, b| state.correlation_entry(a, b));
    born_from_expectation(e, measurement_strength(bond, params), s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// Sampled s in ℓ order.
    pub outcomes: Vec<i8>,
    /// p(+1) used for each bond, in ℓ order.
    pub p_plus: Vec<f64>,
}

fn apply_unitary(state: &mut GaussianPureState, ops: &PrecomputedOperators) -> Result<()> {
    if ops.unitary_is_identity {
        state.reorthonormalize()
    } else {
        state.apply_matrix(&ops.unitary)
    }
}

/// One Born-sampled brickwork step.
pub fn step<R: Rng + ?Sized>(state: &mut GaussianPureState, rng: &mut R, ops: &PrecomputedOperators) -> Result<StepOutcome> {
    let n = ops.bonds.len();
    let mut outcomes = vec![0i8; n];
    let mut p_plus = vec![0.0; n];
    apply_unitary(state, ops)?;
    for &k in &ops.sweep {
        let p = born_probability_state(state, &ops.bonds[k], 1, &ops.params)?;
        let s = draw_outcome(rng, p);
        state.apply_local_kraus(ops.kraus(k, s))?;
        outcomes[k] = s;
        p_plus[k] = p;
    }
    Ok(StepOutcome { outcomes, p_plus })
}

/// One step with outcomes supplied by the caller; no Born evaluation.
pub fn replay_step(state: &mut GaussianPureState, outcomes: &[i8], ops: &PrecomputedOperators) -> Result<()> {
    ops.check_outcomes(outcomes)?;
    apply_unitary(state, ops)?;
    for &k in &ops.sweep {
        state.apply_local_kraus(ops.kraus(k, outcomes[k]))?;
    }
    Ok(())
}

/// Outcomes s_{ℓ,t}, one row of width `bond_count` per step, ℓ-ordered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeRecord {
    l: usize,
    bc: Boundary,
    width: usize,
    data: Vec<i8>,
}

const RECORD_MAGIC: &str = "majolyap-rec v1";

impl OutcomeRecord {
    pub fn new(l: usize, bc: Boundary) -> Self {
        let width = if bc == Boundary::Open { 2 * l - 1 } else { 2 * l };
        OutcomeRecord { l, bc, width, data: Vec::new() }
    }

    pub fn for_params(params: &CircuitParams) -> Self {
        OutcomeRecord::new(params.l, params.bc)
    }

    pub fn modes(&self) -> usize {
        self.l
    }

    pub fn boundary(&self) -> Boundary {
        self.bc
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.width.max(1)
    }

    pub fn step(&self, t: usize) -> &[i8] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn push(&mut self, outcomes: &[i8]) -> Result<()> {
        if outcomes.len() != self.width || outcomes.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Shape(format!("expected {} outcomes of ±1", self.width)));
        }
        self.data.extend_from_slice(outcomes);
        Ok(())
    }

    pub fn truncated(&self, steps: usize) -> Self {
        let mut r = self.clone();
        r.data.truncate(steps.min(self.steps()) * self.width);
        r
    }

    /// Whether the record can drive a circuit with these parameters.
    pub fn matches(&self, params: &CircuitParams) -> bool {
        self.l == params.l && self.width == params.bond_count()
    }

    /// Flips s_{2L,t} for every t and swaps PBC ↔ APBC.
    pub fn twist_record(&self) -> Result<Self> {
        let bc = match self.bc {
            Boundary::Periodic => Boundary::Antiperiodic,
            Boundary::Antiperiodic => Boundary::Periodic,
            Boundary::Open => return Err(Error::Shape("OBC record has no boundary bond to twist".into())),
        };
        let mut out = OutcomeRecord { bc, ..self.clone() };
        let w = self.width;
        for t in 0..self.steps() {
            out.data[t * w + w - 1] = -out.data[t * w + w - 1];
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{RECORD_MAGIC} L={} bc={} T={}\n", self.l, self.bc, self.steps());
        for t in 0..self.steps() {
            let line: Vec<&str> = self.step(t).iter().map(|&v| if v > 0 { "+1" } else { "-1" }).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty record".into()))?;
        let rest =
            header.strip_prefix(RECORD_MAGIC).ok_or_else(|| Error::Parse(format!("record header must start with {RECORD_MAGIC:?}")))?;
        let (mut l, mut bc, mut t) = (None, None, None);
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("L", v)) => l = v.parse::<usize>().ok(),
                Some(("bc", v)) => bc = Some(v.parse::<Boundary>()?),
                Some(("T", v)) => t = v.parse::<usize>().ok(),
                _ => return Err(Error::Parse(format!("unexpected header field {field:?}"))),
            }
        }
        let (l, bc, t) = match (l, bc, t) {
            (Some(l), Some(bc), Some(t)) if l > 0 => (l, bc, t),
            _ => return Err(Error::Parse("header needs L, bc and T".into())),
        };
        let mut rec = OutcomeRecord::new(l, bc);
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<i8>, _> = line
                .split_whitespace()
                .map(|v| match v {
                    "+1" | "1" => Ok(1),
                    "-1" => Ok(-1),
                    other => Err(Error::Parse(format!("line {}: bad outcome {other:?}", lineno + 2))),
                })
                .collect();
            rec.push(&row?).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        }
        if rec.steps() != t {
            return Err(Error::Parse(format!("header says T={t}, found {} steps", rec.steps())));
        }
        Ok(rec)
    }
}
