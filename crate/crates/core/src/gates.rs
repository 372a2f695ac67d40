//! Device gate library.
//!
//! Rotations follow the half-angle convention `e^{−iθσ/2}` everywhere. The
//! bus-mediated entangler is `U_ENT = e^{−i H_I τ}` with
//! `H_I = Σ_{j<k} λ (σ_j⁺σ_k⁻ + σ_j⁻σ_k⁺)`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ansatz::ParamKey;
use crate::qsim::{c, kron, matrix_exponential, CMatrix, Pauli, Unitary};
use crate::{Error, Result};

pub const ROTATION_X_NS: f64 = 30.0;
pub const ROTATION_Z_NS: f64 = 20.0;
pub const ENTANGLER_2Q_NS: f64 = 50.0;
pub const ENTANGLER_3Q_NS: f64 = 55.0;
pub const CONTROLLED_NS: f64 = 160.0;

/// `U_phase` lengths for the ancilla pairs Q0-Q1 … Q0-Q4.
pub const U_PHASE_PAIR_NS: [f64; 4] = [159.0, 141.0, 170.0, 162.0];

/// Coupling strengths λ/2π (MHz) of the two- and three-qubit entanglers.
pub const LAMBDA_2Q_MHZ: f64 = -2.48;
pub const LAMBDA_3Q_MHZ: f64 = -2.27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Z,
}

impl Axis {
    pub fn pauli(self) -> Pauli {
        match self {
            Axis::X => Pauli::X,
            Axis::Z => Pauli::Z,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Z => 'z',
        }
    }
}

/// `e^{−iθσ/2}` about `axis`.
pub fn rotation_matrix(axis: Axis, theta: f64) -> Unitary {
    let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let m = match axis {
        Axis::X => CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -si), c(0.0, -si), c(co, 0.0)]),
        Axis::Z => CMatrix::from_row_slice(2, 2, &[c(co, -si), c(0.0, 0.0), c(0.0, 0.0), c(co, si)]),
    };
    Unitary::from_matrix_unchecked(m)
}

/// `e^{−iθY/2}`; used only for tomography preparations.
pub fn rotation_y(theta: f64) -> Unitary {
    let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    Unitary::from_matrix_unchecked(CMatrix::from_row_slice(
        2,
        2,
        &[c(co, 0.0), c(-si, 0.0), c(si, 0.0), c(co, 0.0)],
    ))
}

pub fn hadamard() -> Unitary {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Unitary::from_matrix_unchecked(CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]))
}

pub fn pauli_x() -> Unitary {
    Unitary::from_matrix_unchecked(Pauli::X.matrix())
}

/// `X/2`, a π/2 rotation about x.
pub fn x_half() -> Unitary {
    rotation_matrix(Axis::X, FRAC_PI_2)
}

/// Coupling of a bus-mediated entangler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    /// λ/2π in MHz; negative on the device.
    pub lambda_over_2pi_mhz: f64,
    /// Interaction time in ns.
    pub tau_ns: f64,
    /// Dimensionless phase λτ actually used to build the unitary.
    pub lambda_tau: f64,
    /// Optional per-pair λτ overrides, indexed like `(0,1), (0,2), (1,2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_lambda_tau: Option<Vec<f64>>,
}

impl CouplingSpec {
    /// `τ = π / (4|λ|)`, giving `λτ = sign(λ)·π/4` exactly.
    pub fn quarter_period(lambda_over_2pi_mhz: f64) -> Result<Self> {
        if lambda_over_2pi_mhz == 0.0 || !lambda_over_2pi_mhz.is_finite() {
            return Err(Error::Argument("coupling strength must be finite and nonzero".into()));
        }
        let lambda_rad_per_ns = 2.0 * PI * lambda_over_2pi_mhz * 1e-3;
        Ok(Self {
            lambda_over_2pi_mhz,
            tau_ns: PI / (4.0 * lambda_rad_per_ns.abs()),
            lambda_tau: FRAC_PI_4.copysign(lambda_over_2pi_mhz),
            pair_lambda_tau: None,
        })
    }

    /// Raw `(λ, τ)` pair with `λτ = 2π·λ[MHz]·τ[ns]·1e-3`.
    pub fn raw(lambda_over_2pi_mhz: f64, tau_ns: f64) -> Self {
        Self {
            lambda_over_2pi_mhz,
            tau_ns,
            lambda_tau: 2.0 * PI * lambda_over_2pi_mhz * tau_ns * 1e-3,
            pair_lambda_tau: None,
        }
    }

    /// A coupling with the given λτ directly (λ and τ left at 0 and 1 ns).
    pub fn from_lambda_tau(lambda_tau: f64) -> Self {
        Self {
            lambda_over_2pi_mhz: lambda_tau / (2.0 * PI * 1e-3),
            tau_ns: 1.0,
            lambda_tau,
            pair_lambda_tau: None,
        }
    }

    pub fn two_qubit_default() -> Self {
        Self::quarter_period(LAMBDA_2Q_MHZ).expect("nonzero coupling")
    }

    pub fn three_qubit_default() -> Self {
        Self::quarter_period(LAMBDA_3Q_MHZ).expect("nonzero coupling")
    }
}

fn exchange_hamiltonian(k: usize, weights: &[f64]) -> CMatrix {
    let d = 1 << k;
    let mut h = CMatrix::zeros(d, d);
    let mut pair = 0;
    for a in 0..k {
        for b in a + 1..k {
            let w = weights[pair];
            pair += 1;
            let (ma, mb) = (1 << (k - 1 - a), 1 << (k - 1 - b));
            // σ_a⁺σ_b⁻ + h.c. swaps one excitation between a and b.
            for j in 0..d {
                if (j & ma == 0) != (j & mb == 0) {
                    h[(j ^ ma ^ mb, j)] += c(w, 0.0);
                }
            }
        }
    }
    h
}

thread_local! {
    static ENTANGLER_CACHE: RefCell<HashMap<(usize, Vec<u64>), Unitary>> = RefCell::new(HashMap::new());
}

/// `e^{−iH_I τ}` on 2 or 3 qubits (local ordering).
pub fn u_ent(n_targets: usize, spec: &CouplingSpec) -> Result<Unitary> {
    if !(2..=3).contains(&n_targets) {
        return Err(Error::UnsupportedSize(format!("U_ENT supports 2 or 3 qubits, got {n_targets}")));
    }
    let n_pairs = n_targets * (n_targets - 1) / 2;
    let weights = match &spec.pair_lambda_tau {
        Some(w) if w.len() != n_pairs => {
            return Err(Error::Shape(format!("expected {n_pairs} pair couplings, got {}", w.len())))
        }
        Some(w) => w.clone(),
        None => vec![spec.lambda_tau; n_pairs],
    };
    let key = (n_targets, weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>());
    if let Some(u) = ENTANGLER_CACHE.with(|cache| cache.borrow().get(&key).cloned()) {
        return Ok(u);
    }
    let u = matrix_exponential(&exchange_hamiltonian(n_targets, &weights), 1.0)?;
    ENTANGLER_CACHE.with(|cache| cache.borrow_mut().insert(key, u.clone()));
    Ok(u)
}

/// Native two-qubit phase gate, `diag(e^{−iπ/4}, e^{iπ/4}, e^{iπ/4}, e^{−iπ/4}) = e^{−iπ/4 Z⊗Z}`.
pub fn u_phase() -> Unitary {
    let (m, p) = (c(FRAC_PI_4.cos(), -FRAC_PI_4.sin()), c(FRAC_PI_4.cos(), FRAC_PI_4.sin()));
    let mut d = CMatrix::zeros(4, 4);
    d[(0, 0)] = m;
    d[(1, 1)] = p;
    d[(2, 2)] = p;
    d[(3, 3)] = m;
    Unitary::from_matrix_unchecked(d)
}

/// Canonical CNOT with the first local qubit as control.
pub fn cnot() -> Unitary {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(1, 1)] = c(1.0, 0.0);
    m[(2, 3)] = c(1.0, 0.0);
    m[(3, 2)] = c(1.0, 0.0);
    Unitary::from_matrix_unchecked(m)
}

/// Canonical CZ.
pub fn cz() -> Unitary {
    let mut m = CMatrix::identity(4, 4);
    m[(3, 3)] = c(-1.0, 0.0);
    Unitary::from_matrix_unchecked(m)
}

fn controlled_pair(control: usize, target: usize) -> Result<()> {
    if control == target {
        return Err(Error::Argument(format!("control and target are both qubit {control}")));
    }
    Ok(())
}

/// `CZ(c,t)` realized as `U_phase` followed by `Rz(−π/2)` on both qubits.
pub fn cz_composed(control: usize, target: usize) -> Result<Vec<GateOp>> {
    controlled_pair(control, target)?;
    Ok(vec![
        GateOp::u_phase(control, target),
        GateOp::rz(control, -FRAC_PI_2),
        GateOp::rz(target, -FRAC_PI_2),
    ])
}

/// `CNOT(c,t) = (I⊗H)·CZ·(I⊗H)` on top of the `U_phase` realization of CZ.
pub fn cnot_composed(control: usize, target: usize) -> Result<Vec<GateOp>> {
    controlled_pair(control, target)?;
    let mut ops = vec![GateOp::h(target)];
    ops.extend(cz_composed(control, target)?);
    ops.push(GateOp::h(target));
    Ok(ops)
}

/// Product of a gate sequence as a unitary on `qubits` (local order).
pub fn sequence_unitary(ops: &[GateOp], qubits: &[usize]) -> Result<Unitary> {
    let k = qubits.len();
    let d = 1 << k;
    let mut total = CMatrix::identity(d, d);
    for op in ops {
        let local: Vec<usize> = op
            .targets
            .iter()
            .map(|t| {
                qubits
                    .iter()
                    .position(|q| q == t)
                    .ok_or_else(|| Error::Layout(format!("gate touches qubit {t} outside {qubits:?}")))
            })
            .collect::<Result<_>>()?;
        let full = op.unitary()?.embed(k, &local)?;
        total = full * total;
    }
    Ok(Unitary::from_matrix_unchecked(total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateKind {
    Rx,
    Rz,
    H,
    XHalf,
    X,
    UEnt,
    UPhase,
    Cnot,
    Cz,
    /// Controlled generator of an x rotation (a CNOT) inserted by the
    /// Hadamard-test gradient.
    ControlledRxGen,
    /// Controlled generator of a z rotation (a CZ).
    ControlledRzGen,
    /// Idle of `duration_ns`; acts as identity but accrues decoherence.
    Delay,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Rz => "RZ",
            GateKind::H => "H",
            GateKind::XHalf => "X_HALF",
            GateKind::X => "X",
            GateKind::UEnt => "U_ENT",
            GateKind::UPhase => "U_PHASE",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::ControlledRxGen => "CONTROLLED_RX_GEN",
            GateKind::ControlledRzGen => "CONTROLLED_RZ_GEN",
            GateKind::Delay => "DELAY",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "RX" => GateKind::Rx,
            "RZ" => GateKind::Rz,
            "H" => GateKind::H,
            "X_HALF" => GateKind::XHalf,
            "X" => GateKind::X,
            "U_ENT" => GateKind::UEnt,
            "U_PHASE" => GateKind::UPhase,
            "CNOT" => GateKind::Cnot,
            "CZ" => GateKind::Cz,
            "CONTROLLED_RX_GEN" => GateKind::ControlledRxGen,
            "CONTROLLED_RZ_GEN" => GateKind::ControlledRzGen,
            "DELAY" => GateKind::Delay,
            other => return Err(Error::Parse(format!("unknown gate kind '{other}'"))),
        })
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Rz)
    }

    pub fn rotation_axis(self) -> Option<Axis> {
        match self {
            GateKind::Rx => Some(Axis::X),
            GateKind::Rz => Some(Axis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One gate instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    /// Rotation angle (RX/RZ only).
    pub theta: Option<f64>,
    /// Entangler coupling (U_ENT only).
    pub coupling: Option<CouplingSpec>,
    pub duration_ns: f64,
    /// Trainable parameter bound to this rotation, if any.
    pub param: Option<ParamKey>,
}

impl GateOp {
    fn simple(kind: GateKind, targets: Vec<usize>, duration_ns: f64) -> Self {
        Self { kind, targets, theta: None, coupling: None, duration_ns, param: None }
    }

    pub fn rotation(axis: Axis, qubit: usize, theta: f64) -> Self {
        let (kind, duration_ns) = match axis {
            Axis::X => (GateKind::Rx, ROTATION_X_NS),
            Axis::Z => (GateKind::Rz, ROTATION_Z_NS),
        };
        Self { theta: Some(theta), ..Self::simple(kind, vec![qubit], duration_ns) }
    }

    pub fn rx(qubit: usize, theta: f64) -> Self {
        Self::rotation(Axis::X, qubit, theta)
    }

    pub fn rz(qubit: usize, theta: f64) -> Self {
        Self::rotation(Axis::Z, qubit, theta)
    }

    pub fn with_param(mut self, key: ParamKey) -> Self {
        self.param = Some(key);
        self
    }

    pub fn h(qubit: usize) -> Self {
        Self::simple(GateKind::H, vec![qubit], ROTATION_X_NS)
    }

    pub fn x(qubit: usize) -> Self {
        Self::simple(GateKind::X, vec![qubit], ROTATION_X_NS)
    }

    pub fn x_half(qubit: usize) -> Self {
        Self::simple(GateKind::XHalf, vec![qubit], ROTATION_X_NS)
    }

    pub fn u_ent(qubits: &[usize], coupling: CouplingSpec) -> Self {
        let duration_ns = if qubits.len() >= 3 { ENTANGLER_3Q_NS } else { ENTANGLER_2Q_NS };
        Self { coupling: Some(coupling), ..Self::simple(GateKind::UEnt, qubits.to_vec(), duration_ns) }
    }

    pub fn u_phase(a: usize, b: usize) -> Self {
        Self::simple(GateKind::UPhase, vec![a, b], pair_duration(a, b))
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::simple(GateKind::Cnot, vec![control, target], pair_duration(control, target))
    }

    pub fn cz(control: usize, target: usize) -> Self {
        Self::simple(GateKind::Cz, vec![control, target], pair_duration(control, target))
    }

    /// Controlled-h for a rotation about `axis`.
    pub fn controlled_generator(axis: Axis, control: usize, target: usize) -> Self {
        let kind = match axis {
            Axis::X => GateKind::ControlledRxGen,
            Axis::Z => GateKind::ControlledRzGen,
        };
        Self::simple(kind, vec![control, target], pair_duration(control, target))
    }

    pub fn delay(qubit: usize, duration_ns: f64) -> Self {
        Self::simple(GateKind::Delay, vec![qubit], duration_ns)
    }

    pub fn with_duration(mut self, duration_ns: f64) -> Self {
        self.duration_ns = duration_ns;
        self
    }

    /// Checks the per-kind arity rules.
    pub fn validate(&self) -> Result<()> {
        let n = self.targets.len();
        let ok = match self.kind {
            GateKind::Rx | GateKind::Rz | GateKind::H | GateKind::XHalf | GateKind::X | GateKind::Delay => n == 1,
            GateKind::UEnt => n == 2 || n == 3,
            _ => n == 2,
        };
        if !ok {
            return Err(Error::Shape(format!("{} cannot act on {n} qubits", self.kind)));
        }
        for (i, q) in self.targets.iter().enumerate() {
            if self.targets[..i].contains(q) {
                return Err(Error::Argument(format!("{} has repeated qubit {q}", self.kind)));
            }
        }
        if self.kind.is_rotation() && !self.theta.is_some_and(f64::is_finite) {
            return Err(Error::Argument(format!("{} needs a finite angle", self.kind)));
        }
        if self.kind == GateKind::UEnt && self.coupling.is_none() {
            return Err(Error::Argument("U_ENT needs a coupling".into()));
        }
        if !(self.duration_ns > 0.0) {
            return Err(Error::Argument(format!("{} duration must be positive", self.kind)));
        }
        Ok(())
    }

    pub fn unitary(&self) -> Result<Unitary> {
        self.validate()?;
        Ok(match self.kind {
            GateKind::Rx => rotation_matrix(Axis::X, self.theta.unwrap_or(0.0)),
            GateKind::Rz => rotation_matrix(Axis::Z, self.theta.unwrap_or(0.0)),
            GateKind::H => hadamard(),
            GateKind::XHalf => x_half(),
            GateKind::X => pauli_x(),
            GateKind::Delay => Unitary::identity(1),
            GateKind::UEnt => u_ent(self.targets.len(), self.coupling.as_ref().expect("validated"))?,
            GateKind::UPhase => u_phase(),
            GateKind::Cnot | GateKind::ControlledRxGen => cnot(),
            GateKind::Cz | GateKind::ControlledRzGen => cz(),
        })
    }
}

fn pair_duration(a: usize, b: usize) -> f64 {
    match (a.min(b), a.max(b)) {
        (0, j @ 1..=4) => U_PHASE_PAIR_NS[j - 1],
        _ => CONTROLLED_NS,
    }
}

/// Total excitation number operator `Σ_j (I − σz_j)/2` on `k` qubits.
pub fn excitation_number(k: usize) -> CMatrix {
    let d = 1 << k;
    CMatrix::from_fn(d, d, |r, col| {
        if r == col {
            c((r as u32).count_ones() as f64, 0.0)
        } else {
            c(0.0, 0.0)
        }
    })
}

/// `A ⊗ B` convenience for tests and tomography.
pub fn tensor(a: &Unitary, b: &Unitary) -> Unitary {
    Unitary::from_matrix_unchecked(kron(a.matrix(), b.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{hermitian_eigen, max_abs_diff, max_abs_diff_up_to_phase, spectral_map, StateVector, C64};
    use std::f64::consts::FRAC_1_SQRT_2;

    /// Independent oracle: eigendecompose the dense exchange Hamiltonian
    /// built from explicit σ± Kronecker products.
    fn oracle_u_ent(k: usize, lambda_tau: f64) -> CMatrix {
        let sp = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let sm = sp.adjoint();
        let id = CMatrix::identity(2, 2);
        let op_on = |m: &CMatrix, q: usize| {
            (0..k).fold(CMatrix::identity(1, 1), |acc, i| kron(&acc, if i == q { m } else { &id }))
        };
        let d = 1 << k;
        let mut h = CMatrix::zeros(d, d);
        for a in 0..k {
            for b in a + 1..k {
                h += (op_on(&sp, a) * op_on(&sm, b) + op_on(&sm, a) * op_on(&sp, b)).map(|v| v * lambda_tau);
            }
        }
        let (vals, vecs) = hermitian_eigen(&h);
        spectral_map(&vals, &vecs, |v| C64::from_polar(1.0, -v))
    }

    #[test]
    fn rotation_examples() {
        let id = CMatrix::identity(2, 2);
        assert!(max_abs_diff(rotation_matrix(Axis::X, 0.0).matrix(), &id) < 1e-15);
        let expected = Pauli::X.matrix().map(|v| v * c(0.0, -1.0));
        assert!(max_abs_diff(rotation_matrix(Axis::X, PI).matrix(), &expected) < 1e-15);
        let rz = rotation_matrix(Axis::Z, FRAC_PI_2);
        assert!((rz.matrix()[(0, 0)] - C64::from_polar(1.0, -FRAC_PI_4)).norm() < 1e-15);
        assert!((rz.matrix()[(1, 1)] - C64::from_polar(1.0, FRAC_PI_4)).norm() < 1e-15);
    }

    #[test]
    fn quarter_period_constructor() {
        let s = CouplingSpec::quarter_period(LAMBDA_2Q_MHZ).unwrap();
        let expected_tau = PI / (4.0 * (2.0 * PI * 2.48e-3));
        assert!((s.tau_ns - expected_tau).abs() / expected_tau < 1e-9);
        assert_eq!(s.lambda_tau, -FRAC_PI_4);
        let raw = CouplingSpec::raw(s.lambda_over_2pi_mhz, s.tau_ns);
        assert!((raw.lambda_tau - s.lambda_tau).abs() < 1e-12);
        assert!((CouplingSpec::three_qubit_default().tau_ns - 55.07).abs() < 0.01);
    }

    #[test]
    fn u_ent_zero_coupling_is_identity() {
        let u = u_ent(2, &CouplingSpec::from_lambda_tau(0.0)).unwrap();
        assert!(max_abs_diff(u.matrix(), &CMatrix::identity(4, 4)) < 1e-15);
    }

    #[test]
    fn u_ent_two_qubit_quarter_period() {
        let u = u_ent(2, &CouplingSpec::from_lambda_tau(-FRAC_PI_4)).unwrap();
        assert!(max_abs_diff(u.matrix(), &oracle_u_ent(2, -FRAC_PI_4)) < 1e-12);
        let mut s = StateVector::basis(2, 0b01).unwrap();
        s.apply(&u, &[0, 1]).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!((s.amplitudes()[1] - c(h, 0.0)).norm() < 1e-12);
        assert!((s.amplitudes()[2] - c(0.0, h)).norm() < 1e-12);
        assert!((u.matrix()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((u.matrix()[(3, 3)] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn u_ent_three_qubit_matches_oracle() {
        let u = u_ent(3, &CouplingSpec::from_lambda_tau(-FRAC_PI_4)).unwrap();
        assert!(max_abs_diff(u.matrix(), &oracle_u_ent(3, -FRAC_PI_4)) < 1e-12);
        let mut s = StateVector::basis(3, 0b100).unwrap();
        s.apply(&u, &[0, 1, 2]).unwrap();
        for (j, a) in s.amplitudes().iter().enumerate() {
            if (j as u32).count_ones() != 1 {
                assert!(a.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn u_ent_rejects_large_sizes() {
        assert!(matches!(u_ent(4, &CouplingSpec::two_qubit_default()), Err(Error::UnsupportedSize(_))));
        assert!(matches!(u_ent(1, &CouplingSpec::two_qubit_default()), Err(Error::UnsupportedSize(_))));
    }

    #[test]
    fn heterogeneous_couplings() {
        let mut spec = CouplingSpec::three_qubit_default();
        spec.pair_lambda_tau = Some(vec![-0.3, -0.5, -0.7]);
        let u = u_ent(3, &spec).unwrap();
        assert!(u.unitarity_defect() < 1e-10);
        spec.pair_lambda_tau = Some(vec![0.1]);
        assert!(matches!(u_ent(3, &spec), Err(Error::Shape(_))));
    }

    #[test]
    fn u_phase_examples() {
        let u = u_phase();
        let mut s = StateVector::basis(2, 0).unwrap();
        s.apply(&u, &[0, 1]).unwrap();
        assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-15);
        assert!(u.unitarity_defect() < 1e-15);
        let composed = sequence_unitary(&cnot_composed(0, 1).unwrap(), &[0, 1]).unwrap();
        assert!(max_abs_diff_up_to_phase(composed.matrix(), cnot().matrix()) < 1e-9);
        let composed = sequence_unitary(&cz_composed(0, 1).unwrap(), &[0, 1]).unwrap();
        assert!(max_abs_diff_up_to_phase(composed.matrix(), cz().matrix()) < 1e-9);
    }

    #[test]
    fn composed_gates_on_reversed_pairs() {
        let composed = sequence_unitary(&cnot_composed(1, 0).unwrap(), &[0, 1]).unwrap();
        let swap_control = GateOp::cnot(1, 0);
        let canonical = sequence_unitary(&[swap_control], &[0, 1]).unwrap();
        assert!(max_abs_diff_up_to_phase(composed.matrix(), canonical.matrix()) < 1e-9);
    }

    #[test]
    fn controlled_gate_examples() {
        let mut s = StateVector::basis(2, 0b10).unwrap();
        s.apply(&cnot(), &[0, 1]).unwrap();
        assert_eq!(s.amplitudes()[3], c(1.0, 0.0));
        let mut s = StateVector::basis(2, 0b11).unwrap();
        s.apply(&cz(), &[0, 1]).unwrap();
        assert_eq!(s.amplitudes()[3], c(-1.0, 0.0));
        let ih = tensor(&Unitary::identity(1), &hadamard());
        let via_h = ih.matrix() * cnot().matrix() * ih.matrix();
        assert!(max_abs_diff(&via_h, cz().matrix()) < 1e-15);
        assert!(matches!(cnot_composed(2, 2), Err(Error::Argument(_))));
    }

    #[test]
    fn default_durations() {
        assert_eq!(GateOp::rx(0, 0.1).duration_ns, 30.0);
        assert_eq!(GateOp::rz(0, 0.1).duration_ns, 20.0);
        assert_eq!(GateOp::x_half(0).duration_ns, 30.0);
        assert_eq!(GateOp::u_ent(&[3, 4], CouplingSpec::two_qubit_default()).duration_ns, 50.0);
        assert_eq!(GateOp::u_ent(&[1, 2, 3], CouplingSpec::three_qubit_default()).duration_ns, 55.0);
        assert_eq!(GateOp::cnot(2, 3).duration_ns, 160.0);
        assert_eq!(GateOp::cz(0, 3).duration_ns, 170.0);
    }

    #[test]
    fn arity_is_validated() {
        let mut op = GateOp::rx(0, 0.2);
        op.targets.push(1);
        assert!(matches!(op.validate(), Err(Error::Shape(_))));
        assert!(matches!(GateOp::cnot(1, 1).validate(), Err(Error::Argument(_))));
        assert!(GateOp::rx(0, 1.0).with_duration(0.0).validate().is_err());
        let op = GateOp::u_ent(&[0, 1, 2, 3], CouplingSpec::two_qubit_default());
        assert!(op.unitary().is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [
            GateKind::Rx,
            GateKind::Rz,
            GateKind::H,
            GateKind::XHalf,
            GateKind::X,
            GateKind::UEnt,
            GateKind::UPhase,
            GateKind::Cnot,
            GateKind::Cz,
            GateKind::ControlledRxGen,
            GateKind::ControlledRzGen,
            GateKind::Delay,
        ] {
            assert_eq!(GateKind::from_name(kind.name()).unwrap(), kind);
        }
    }
}
