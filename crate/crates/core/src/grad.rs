//! Gradients of `⟨σz_1⟩` with respect to single rotation angles.
//!
//! Three engines share one contract:
//!
//! - Hadamard test: one extra ancilla (qubit 0) whose `⟨σz⟩` is minus the
//!   derivative.
//! - Parameter shift: `(E(θ+π/2) − E(θ−π/2)) / 2`.
//! - Finite differences: central differences, the verification oracle.
//!
//! Circuits handed to the gradient functions must leave qubit 0 untouched and
//! start with it in `|0⟩`; the observable is always `σz` on qubit 1.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{assemble_training_circuit, Owner, ParamKey, ParamVector, QganSetup, Source};
use crate::circuit::Circuit;
use crate::gates::GateOp;
use crate::noise::NoiseModel;
use crate::qsim::State;
use crate::rng::{self, Purpose};
use crate::{Error, Result};

pub const ANCILLA: usize = 0;
pub const OBSERVABLE_QUBIT: usize = 1;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    #[serde(rename = "hadamard", alias = "hadamard_test")]
    HadamardTest,
    #[serde(rename = "shift", alias = "param_shift")]
    ParamShift,
    #[serde(rename = "fd", alias = "finite_diff")]
    FiniteDiff,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::HadamardTest, Engine::ParamShift, Engine::FiniteDiff];

    pub fn short_name(self) -> &'static str {
        match self {
            Engine::HadamardTest => "hadamard",
            Engine::ParamShift => "shift",
            Engine::FiniteDiff => "fd",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard" | "hadamard_test" => Ok(Engine::HadamardTest),
            "shift" | "param_shift" => Ok(Engine::ParamShift),
            "fd" | "finite_diff" => Ok(Engine::FiniteDiff),
            _ => Err(Error::Parse(format!("unknown gradient engine '{s}' (hadamard, shift, fd)"))),
        }
    }
}

/// Evaluation settings shared by all engines.
#[derive(Debug, Clone, PartialEq)]
pub struct GradOptions {
    pub noise: Option<NoiseModel>,
    /// Idle inserted on the ancilla between the two controlled gates.
    pub ancilla_delay_ns: f64,
    pub fd_step: f64,
    /// 0 means exact expectations.
    pub shots: u64,
    pub seed: u64,
    /// Distinguishes sampling streams of successive calls.
    pub epoch: u64,
}

impl Default for GradOptions {
    fn default() -> Self {
        Self { noise: None, ancilla_delay_ns: 0.0, fd_step: DEFAULT_FD_STEP, shots: 0, seed: 0, epoch: 0 }
    }
}

impl GradOptions {
    pub fn with_noise(mut self, noise: Option<NoiseModel>) -> Self {
        self.noise = noise.filter(|m| m.enabled);
        self
    }

    fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref().filter(|m| m.enabled)
    }

    fn sampler(&self, index: u64) -> Option<rand_chacha::ChaCha8Rng> {
        (self.shots > 0).then(|| rng::stream(self.seed, Purpose::Sampling, self.epoch << 24 | index))
    }
}

/// `⟨σz_q⟩` after running `circuit` on `initial`, optionally sampled.
pub fn measure_z(
    circuit: &Circuit,
    initial: &State,
    qubit: usize,
    opts: &GradOptions,
    sampler: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Result<f64> {
    let mut state = initial.clone();
    circuit.run(&mut state, opts.noise())?;
    let exact = state.expectation_z(qubit)?;
    if !exact.is_finite() {
        return Err(Error::Numerical("non-finite expectation value".into()));
    }
    match sampler {
        None => Ok(exact),
        Some(rng) => sample_z(exact, qubit, opts, rng),
    }
}

fn sample_z(exact: f64, qubit: usize, opts: &GradOptions, rng: &mut rand_chacha::ChaCha8Rng) -> Result<f64> {
    let p1 = ((1.0 - exact) / 2.0).clamp(0.0, 1.0);
    let assignment = match opts.noise() {
        Some(m) => Some(m.qubit(qubit)?.assignment()),
        None => None,
    };
    let observed = match assignment {
        Some(a) => a.perturb((1.0 - p1, p1)).1,
        None => p1,
    };
    let binom = Binomial::new(opts.shots, observed.clamp(0.0, 1.0))
        .map_err(|e| Error::Numerical(format!("binomial sampling: {e}")))?;
    let k = binom.sample(rng) as f64 / opts.shots as f64;
    let (_, p1_hat) = match assignment {
        Some(a) => a.correct((1.0 - k, k))?,
        None => (1.0 - k, k),
    };
    Ok(1.0 - 2.0 * p1_hat)
}

fn check_ancilla(circuit: &Circuit, initial: &State) -> Result<()> {
    if circuit.n_qubits() < 2 {
        return Err(Error::Layout("the gradient circuits need an ancilla and an observable qubit".into()));
    }
    if circuit.touched_qubits().contains(&ANCILLA) {
        return Err(Error::Layout("qubit 0 is reserved for the gradient ancilla".into()));
    }
    if initial.probability_one(ANCILLA)? > 1e-12 {
        return Err(Error::Layout("the ancilla must start in |0⟩".into()));
    }
    Ok(())
}

fn rotation_site(circuit: &Circuit, key: &ParamKey) -> Result<usize> {
    let pos = circuit
        .position_of(key)
        .ok_or_else(|| Error::UnsupportedParameter(format!("{key} is not bound in this circuit")))?;
    if !circuit.ops()[pos].kind.is_rotation() {
        return Err(Error::UnsupportedParameter(format!("{key} is not bound to an RX/RZ rotation")));
    }
    Ok(pos)
}

/// The augmented circuit whose ancilla `⟨σz⟩` equals `−∂⟨σz_1⟩/∂θ`.
///
/// Layout: `H` on the ancilla, the original program with a controlled
/// generator (CNOT for x, CZ for z) right after the rotation, an optional
/// ancilla idle, a final CZ onto qubit 1, then `H` and `X/2` on the ancilla.
pub fn hadamard_test_circuit(circuit: &Circuit, key: &ParamKey, ancilla_delay_ns: f64) -> Result<Circuit> {
    let pos = rotation_site(circuit, key)?;
    let op = &circuit.ops()[pos];
    let axis = op.kind.rotation_axis().expect("rotation");
    let target = op.targets[0];
    let mut out = Circuit::new(circuit.n_qubits())?;
    out.push(GateOp::h(ANCILLA))?;
    for (i, op) in circuit.ops().iter().enumerate() {
        out.push(op.clone())?;
        if i == pos {
            out.push(GateOp::controlled_generator(axis, ANCILLA, target))?;
            if ancilla_delay_ns > 0.0 {
                out.push(GateOp::delay(ANCILLA, ancilla_delay_ns))?;
            }
        }
    }
    out.push(GateOp::cz(ANCILLA, OBSERVABLE_QUBIT))?;
    out.push(GateOp::h(ANCILLA))?;
    out.push(GateOp::x_half(ANCILLA))?;
    Ok(out)
}

pub fn hadamard_test_gradient(circuit: &Circuit, initial: &State, key: &ParamKey, opts: &GradOptions) -> Result<f64> {
    hadamard_test_indexed(circuit, initial, key, opts, 0)
}

fn hadamard_test_indexed(
    circuit: &Circuit,
    initial: &State,
    key: &ParamKey,
    opts: &GradOptions,
    index: u64,
) -> Result<f64> {
    check_ancilla(circuit, initial)?;
    let augmented = hadamard_test_circuit(circuit, key, opts.ancilla_delay_ns)?;
    let mut sampler = opts.sampler(index);
    Ok(-measure_z(&augmented, initial, ANCILLA, opts, sampler.as_mut())?)
}

pub fn parameter_shift_gradient(circuit: &Circuit, initial: &State, key: &ParamKey, opts: &GradOptions) -> Result<f64> {
    shifted_difference(circuit, initial, key, FRAC_PI_2, opts, 0).map(|d| d / 2.0)
}

/// Central difference of `⟨σz_1⟩` in one circuit parameter.
pub fn circuit_finite_difference(circuit: &Circuit, initial: &State, key: &ParamKey, opts: &GradOptions) -> Result<f64> {
    if !(opts.fd_step > 0.0) {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {}", opts.fd_step)));
    }
    shifted_difference(circuit, initial, key, opts.fd_step, opts, 0).map(|d| d / (2.0 * opts.fd_step))
}

fn shifted_difference(
    circuit: &Circuit,
    initial: &State,
    key: &ParamKey,
    delta: f64,
    opts: &GradOptions,
    index: u64,
) -> Result<f64> {
    check_ancilla(circuit, initial)?;
    rotation_site(circuit, key)?;
    let mut sampler = opts.sampler(index);
    let plus = measure_z(&circuit.shifted(key, delta)?, initial, OBSERVABLE_QUBIT, opts, sampler.as_mut())?;
    let minus = measure_z(&circuit.shifted(key, -delta)?, initial, OBSERVABLE_QUBIT, opts, sampler.as_mut())?;
    Ok(plus - minus)
}

/// `∂⟨σz_1⟩/∂θ_key` with the chosen engine.
pub fn circuit_gradient(
    engine: Engine,
    circuit: &Circuit,
    initial: &State,
    key: &ParamKey,
    opts: &GradOptions,
) -> Result<f64> {
    circuit_gradient_indexed(engine, circuit, initial, key, opts, 0)
}

fn circuit_gradient_indexed(
    engine: Engine,
    circuit: &Circuit,
    initial: &State,
    key: &ParamKey,
    opts: &GradOptions,
    index: u64,
) -> Result<f64> {
    match engine {
        Engine::HadamardTest => hadamard_test_indexed(circuit, initial, key, opts, index),
        Engine::ParamShift => shifted_difference(circuit, initial, key, FRAC_PI_2, opts, index).map(|d| d / 2.0),
        Engine::FiniteDiff => {
            if !(opts.fd_step > 0.0) {
                return Err(Error::Argument(format!("finite-difference step must be positive, got {}", opts.fd_step)));
            }
            shifted_difference(circuit, initial, key, opts.fd_step, opts, index).map(|d| d / (2.0 * opts.fd_step))
        }
    }
}

/// Central differences of an arbitrary scalar function.
pub fn finite_difference_gradient(
    f: impl Fn(&[f64]) -> Result<f64>,
    theta: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {step}")));
    }
    let mut x = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        x[k] = theta[k] + step;
        let plus = f(&x)?;
        x[k] = theta[k] - step;
        let minus = f(&x)?;
        x[k] = theta[k];
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Gradient of one side's objective, aligned with that side's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    pub values: Vec<f64>,
    pub engine: Engine,
}

impl GradVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Per-label score derivatives `∂⟨σz_1⟩/∂θ_k` for one source, all labels.
fn score_derivatives(
    setup: &QganSetup,
    source: Source,
    theta_g: &ParamVector,
    theta_d: &ParamVector,
    keys: &[ParamKey],
    engine: Engine,
    opts: &GradOptions,
    stream_base: u64,
) -> Result<Vec<Vec<f64>>> {
    let labels = setup.labels();
    let instances = labels
        .iter()
        .map(|&l| assemble_training_circuit(setup, source, l, theta_g, theta_d))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..labels.len()).flat_map(|n| (0..keys.len()).map(move |k| (n, k))).collect();
    let values = tasks
        .par_iter()
        .map(|&(n, k)| {
            let inst = &instances[n];
            let index = stream_base + (n * keys.len() + k) as u64;
            circuit_gradient_indexed(engine, &inst.circuit, &inst.initial, &keys[k], opts, index)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.chunks(keys.len()).map(|c| c.to_vec()).collect())
}

/// D side: `∇_{θD} V`. G side: `∇_{θG} V² = 2V ∇_{θG} V`.
pub fn loss_gradient(
    side: Owner,
    setup: &QganSetup,
    theta_d: &ParamVector,
    theta_g: &ParamVector,
    engine: Engine,
    opts: &GradOptions,
) -> Result<GradVector> {
    let n = setup.labels().len() as f64;
    let sum_over_labels = |rows: &[Vec<f64>], len: usize| -> Vec<f64> {
        let mut acc = vec![0.0; len];
        for row in rows {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        acc
    };
    match side {
        Owner::D => {
            let keys = theta_d.keys();
            let r = score_derivatives(setup, Source::R, theta_g, theta_d, keys, engine, opts, 0)?;
            let g = score_derivatives(setup, Source::G, theta_g, theta_d, keys, engine, opts, 1 << 20)?;
            let (sr, sg) = (sum_over_labels(&r, keys.len()), sum_over_labels(&g, keys.len()));
            // ∂S = ∂⟨σz_1⟩ / 2
            let values = sr.iter().zip(&sg).map(|(a, b)| (a - b) / (2.0 * n)).collect();
            Ok(GradVector { values, engine })
        }
        Owner::G => {
            let keys = theta_g.keys();
            let v = crate::train::loss_with(setup, theta_d, theta_g, opts)?.v;
            let g = score_derivatives(setup, Source::G, theta_g, theta_d, keys, engine, opts, 1 << 21)?;
            let sg = sum_over_labels(&g, keys.len());
            let values = sg.iter().map(|b| 2.0 * v * (-b / (2.0 * n))).collect();
            Ok(GradVector { values, engine })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{Experiment, REAL_MIXED_ANGLES};
    use crate::gates::Axis;
    use crate::qsim::ground_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_rx(theta: f64, axis_first: Option<Axis>) -> (Circuit, ParamKey) {
        let key = ParamKey::new(1, 1, Axis::X, Owner::D);
        let mut c = Circuit::new(2).unwrap();
        if let Some(a) = axis_first {
            c.push(GateOp::rotation(a, 1, 0.3)).unwrap();
        }
        c.push(GateOp::rx(1, theta).with_param(key)).unwrap();
        (c, key)
    }

    fn ground2() -> State {
        State::from(ground_state(2).unwrap())
    }

    #[test]
    fn rx_examples() {
        let o = GradOptions::default();
        for engine in Engine::ALL {
            let (c0, k) = single_rx(0.0, None);
            assert!(circuit_gradient(engine, &c0, &ground2(), &k, &o).unwrap().abs() < 1e-9);
            let (c1, k) = single_rx(FRAC_PI_2, None);
            assert!((circuit_gradient(engine, &c1, &ground2(), &k, &o).unwrap() + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn z_axis_sign_matches_shift() {
        // Rz sandwiched by Rx rotations so its derivative is nonzero.
        let key = ParamKey::new(1, 1, Axis::Z, Owner::D);
        let mut c = Circuit::new(2).unwrap();
        c.push(GateOp::rx(1, 0.9)).unwrap();
        c.push(GateOp::rz(1, 0.4).with_param(key)).unwrap();
        c.push(GateOp::rx(1, 1.1)).unwrap();
        let o = GradOptions::default();
        let h = hadamard_test_gradient(&c, &ground2(), &key, &o).unwrap();
        let s = parameter_shift_gradient(&c, &ground2(), &key, &o).unwrap();
        assert!(s.abs() > 0.1);
        assert!((h - s).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let (c, _) = single_rx(0.1, None);
        let missing = ParamKey::new(1, 2, Axis::X, Owner::D);
        let o = GradOptions::default();
        assert!(matches!(hadamard_test_gradient(&c, &ground2(), &missing, &o), Err(Error::UnsupportedParameter(_))));
        let mut bad = Circuit::new(2).unwrap();
        let key = ParamKey::new(1, 1, Axis::X, Owner::D);
        let mut op = GateOp::h(1);
        op.param = Some(key);
        bad.push(op).unwrap();
        assert!(matches!(parameter_shift_gradient(&bad, &ground2(), &key, &o), Err(Error::UnsupportedParameter(_))));
        let mut touches = Circuit::new(2).unwrap();
        touches.push(GateOp::rx(0, 0.2).with_param(key)).unwrap();
        assert!(matches!(hadamard_test_gradient(&touches, &ground2(), &key, &o), Err(Error::Layout(_))));
        let step0 = GradOptions { fd_step: 0.0, ..GradOptions::default() };
        assert!(matches!(
            circuit_gradient(Engine::FiniteDiff, &c, &ground2(), &key, &step0),
            Err(Error::Argument(_))
        ));
        assert!("bogus".parse::<Engine>().is_err());
    }

    #[test]
    fn finite_difference_examples() {
        let zero = finite_difference_gradient(|_| Ok(3.0), &[0.1, 0.2], 1e-5).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        let q = finite_difference_gradient(|t| Ok(t.iter().map(|v| v * v).sum()), &[1.0, 2.0], 1e-5).unwrap();
        assert!((q[0] - 2.0).abs() < 1e-8 && (q[1] - 4.0).abs() < 1e-8);
        assert!(finite_difference_gradient(|_| Ok(0.0), &[1.0], 0.0).is_err());
    }

    #[test]
    fn generator_gradient_vanishes_at_the_real_angles() {
        let setup = QganSetup::new(Experiment::MixedState);
        let tg = ParamVector::from_values(&setup.generator, &REAL_MIXED_ANGLES).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let td = ParamVector::uniform(&setup.discriminator, 0.0, 3.0, &mut rng);
        let g = loss_gradient(Owner::G, &setup, &td, &tg, Engine::HadamardTest, &GradOptions::default()).unwrap();
        assert!(g.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn sampled_gradient_is_reproducible_and_close() {
        let (c, k) = single_rx(0.7, None);
        let o = GradOptions { shots: 20_000, seed: 9, ..GradOptions::default() };
        let a = hadamard_test_gradient(&c, &ground2(), &k, &o).unwrap();
        let b = hadamard_test_gradient(&c, &ground2(), &k, &o).unwrap();
        assert_eq!(a, b);
        assert!((a + 0.7f64.sin()).abs() < 0.03);
    }
}
