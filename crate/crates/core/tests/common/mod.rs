//! Randomized invariant checks shared by the property and acceptance targets.
//! Each check draws its inputs from a seed so both targets can drive it.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use qgan_forge::ansatz::{
    assemble_training_circuit, Experiment, LabelValue, Owner, ParamVector, QganSetup, Source, REAL_MIXED_ANGLES,
};
use qgan_forge::circuit::Circuit;
use qgan_forge::experiments::{library_gate, random_gradient_circuit, LIBRARY_GATES};
use qgan_forge::gates::{excitation_number, u_ent, CouplingSpec, GateOp};
use qgan_forge::grad::{
    circuit_gradient, hadamard_test_circuit, loss_gradient, Engine, GradOptions, ANCILLA, OBSERVABLE_QUBIT,
};
use qgan_forge::noise::{apply_decoherence, readout_correct, readout_perturb, NoiseModel};
use qgan_forge::qsim::{
    ground_state, matrix_exponential, state_fidelity, CMatrix, DensityMatrix, PauliString, State, StateVector,
};
use qgan_forge::tomo::{ideal_chi, process_fidelity, qpt, qst, unitary_process};
use qgan_forge::train::{loss, recompute_v, run_adversarial, Stage, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = fn(u64) -> Result<(), TestCaseError>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> StateVector {
    let amps: Vec<C64> = (0..1 << n).map(|_| gaussian(rng)).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

/// Ginibre ensemble: `G G† / Tr(G G†)`, full rank with probability one.
pub fn random_density(rng: &mut ChaCha8Rng, n: usize) -> DensityMatrix {
    let d = 1 << n;
    let g = CMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).unwrap()
}

/// Haar-ish random unitary from the QR of a Ginibre matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> qgan_forge::qsim::Unitary {
    let d = 1 << n;
    let g = CMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let q = g.qr().q();
    qgan_forge::qsim::Unitary::new(q).unwrap()
}

/// Any library gate at random angles on a 5-qubit register.
pub fn random_op(rng: &mut ChaCha8Rng) -> GateOp {
    let q = rng.random_range(0..5);
    let p = (q + rng.random_range(1..5)) % 5;
    let theta = rng.random_range(-PI..PI);
    match rng.random_range(0..11) {
        0 => GateOp::rx(q, theta),
        1 => GateOp::rz(q, theta),
        2 => GateOp::h(q),
        3 => GateOp::x(q),
        4 => GateOp::x_half(q),
        5 => GateOp::u_ent(&[q, p], CouplingSpec::from_lambda_tau(theta)),
        6 => GateOp::u_ent(&[1, 2, 3], CouplingSpec::three_qubit_default()),
        7 => GateOp::u_phase(q, p),
        8 => GateOp::cnot(q, p),
        9 => GateOp::cz(q, p),
        _ => GateOp::delay(q, rng.random_range(0.0..500.0)),
    }
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitian_defect(m: &CMatrix) -> f64 {
    max_diff(m, &m.adjoint())
}

pub fn gates_preserve_norm_trace_and_hermiticity(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let mut psi = State::from(random_state(&mut rng, 5));
    let mut rho = State::from(random_density(&mut rng, 5));
    for _ in 0..6 {
        let op = random_op(&mut rng);
        let mut c = Circuit::new(5).unwrap();
        c.push(op).unwrap();
        c.run(&mut psi, None).unwrap();
        c.run(&mut rho, None).unwrap();
    }
    let State::Pure(psi) = psi else { panic!("pure input stays pure") };
    prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
    let m = rho.to_density().into_matrix();
    prop_assert!((m.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
    prop_assert!(hermitian_defect(&m) < 1e-10);
    Ok(())
}

pub fn pauli_expectations_are_bounded(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let rho = random_density(&mut rng, 3);
    for p in PauliString::all(3).unwrap() {
        let e = rho.expectation(&p).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&e));
    }
    Ok(())
}

pub fn partial_traces_have_unit_trace(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let rho = random_density(&mut rng, 4);
    let all = rho.partial_trace(&[0, 1, 2, 3]).unwrap();
    prop_assert!(max_diff(all.matrix(), rho.matrix()) < 1e-12);
    let mut keep: Vec<usize> = (0..4).filter(|_| rng.random_bool(0.5)).collect();
    if keep.is_empty() {
        keep.push(rng.random_range(0..4));
    }
    let part = rho.partial_trace(&keep).unwrap();
    prop_assert!((part.trace().re - 1.0).abs() < 1e-10);
    Ok(())
}

pub fn matrix_exponential_is_a_group(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let g = CMatrix::from_fn(4, 4, |_, _| gaussian(&mut rng));
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let (t1, t2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let u1 = matrix_exponential(&h, t1).unwrap();
    let u2 = matrix_exponential(&h, t2).unwrap();
    let u12 = matrix_exponential(&h, t1 + t2).unwrap();
    prop_assert!(u1.unitarity_defect() < 1e-10);
    prop_assert!(max_diff(&(u1.matrix() * u2.matrix()), u12.matrix()) < 1e-9);
    Ok(())
}

pub fn fidelity_is_symmetric(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let (a, b) = (random_density(&mut rng, 2), random_density(&mut rng, 2));
    let (fab, fba) = (state_fidelity(&a, &b).unwrap(), state_fidelity(&b, &a).unwrap());
    prop_assert!((fab - fba).abs() < 1e-9);
    let (p, q) = (random_state(&mut rng, 2), random_state(&mut rng, 2));
    let overlap = p.inner(&q).unwrap().norm_sqr();
    prop_assert!((state_fidelity(&p.to_density(), &q.to_density()).unwrap() - overlap).abs() < 1e-9);
    Ok(())
}

pub fn u_ent_conserves_excitations_and_inverts(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let k = rng.random_range(2..=3);
    let lt = rng.random_range(-PI..PI);
    let u = u_ent(k, &CouplingSpec::from_lambda_tau(lt)).unwrap();
    let n = excitation_number(k);
    prop_assert!(max_diff(&(u.matrix() * &n), &(&n * u.matrix())) < 1e-10);
    let back = u_ent(k, &CouplingSpec::from_lambda_tau(-lt)).unwrap();
    let id = CMatrix::identity(1 << k, 1 << k);
    prop_assert!(max_diff(&(u.matrix() * back.matrix()), &id) < 1e-10);
    prop_assert!(u.unitarity_defect() < 1e-10);
    Ok(())
}

pub fn library_gates_are_unitary(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let name = LIBRARY_GATES[rng.random_range(0..LIBRARY_GATES.len())];
    let gate = library_gate(name).unwrap();
    prop_assert!(gate.realized_unitary().unwrap().unitarity_defect() < 1e-10);
    prop_assert!(gate.ideal.unitarity_defect() < 1e-10);
    Ok(())
}

pub fn identical_sources_are_indistinguishable(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let setup = QganSetup::new(Experiment::MixedState);
    let tg = ParamVector::from_values(&setup.generator, &REAL_MIXED_ANGLES).unwrap();
    let td = ParamVector::uniform(&setup.discriminator, -PI, PI, &mut rng);
    let r = loss(&setup, &td, &tg).unwrap();
    prop_assert!((r.scores_r[0] - r.scores_g[0]).abs() < 1e-10);
    Ok(())
}

pub fn spectators_are_untouched(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    for experiment in [Experiment::MixedState, Experiment::Xor] {
        let setup = QganSetup::new(experiment);
        let td = ParamVector::uniform(&setup.discriminator, -PI, PI, &mut rng);
        let tg = ParamVector::uniform(&setup.generator, -PI, PI, &mut rng);
        let label = (experiment == Experiment::Xor).then(|| LabelValue::ALL[rng.random_range(0..4)]);
        let inst = assemble_training_circuit(&setup, Source::G, label, &tg, &td).unwrap();
        // Ancilla (qubit 0) is a spectator of every training circuit.
        let spectator = random_density(&mut rng, 1);
        let rest = DensityMatrix::ground(4).unwrap();
        let mut state = State::from(spectator.tensor(&rest).unwrap());
        inst.circuit.run(&mut state, None).unwrap();
        let after = state.to_density().partial_trace(&[ANCILLA]).unwrap();
        prop_assert!(max_diff(after.matrix(), spectator.matrix()) < 1e-12);
    }
    Ok(())
}

pub fn engines_agree_on_random_circuits(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let n = rng.random_range(2..=5);
    let p = rng.random_range(1..=20);
    let c = random_gradient_circuit(&mut rng, n, p).unwrap();
    let initial = State::from(ground_state(n).unwrap());
    let o = GradOptions::default();
    for key in c.param_keys() {
        let h = circuit_gradient(Engine::HadamardTest, &c, &initial, &key, &o).unwrap();
        let s = circuit_gradient(Engine::ParamShift, &c, &initial, &key, &o).unwrap();
        let f = circuit_gradient(Engine::FiniteDiff, &c, &initial, &key, &o).unwrap();
        prop_assert!((h - s).abs() < 1e-9, "{key}: hadamard {h} shift {s}");
        prop_assert!((s - f).abs() < 1e-5, "{key}: shift {s} fd {f}");
        prop_assert!((-1.0..=1.0).contains(&h));
    }
    Ok(())
}

pub fn ancilla_decouples(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let c = random_gradient_circuit(&mut rng, 4, 6).unwrap();
    let keys = c.param_keys();
    let key = keys[rng.random_range(0..keys.len())];
    let full = hadamard_test_circuit(&c, &key, rng.random_range(0.0..200.0)).unwrap();
    let mut stripped = Circuit::new(4).unwrap();
    for op in full.ops() {
        if !(op.targets.len() == 2 && op.targets.contains(&ANCILLA)) {
            stripped.push(op.clone()).unwrap();
        }
    }
    let z1 = |circuit: &Circuit| {
        let mut s = State::from(ground_state(4).unwrap());
        circuit.run(&mut s, None).unwrap();
        s.expectation_z(OBSERVABLE_QUBIT).unwrap()
    };
    prop_assert!((z1(&stripped) - z1(&c)).abs() < 1e-12);
    Ok(())
}

pub fn generator_gradient_follows_the_square(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let experiment = if rng.random_bool(0.5) { Experiment::Xor } else { Experiment::MixedState };
    let setup = QganSetup::new(experiment);
    let td = ParamVector::uniform(&setup.discriminator, 0.0, PI, &mut rng);
    let tg = ParamVector::uniform(&setup.generator, 0.0, PI, &mut rng);
    let g = loss_gradient(Owner::G, &setup, &td, &tg, Engine::ParamShift, &GradOptions::default()).unwrap();
    let h = 1e-5;
    for (i, &analytic) in g.values.iter().enumerate() {
        let v2 = |delta: f64| {
            let mut vals = tg.values().to_vec();
            vals[i] += delta;
            loss(&setup, &td, &tg.with_values(vals).unwrap()).unwrap().v.powi(2)
        };
        let fd = (v2(h) - v2(-h)) / (2.0 * h);
        prop_assert!((analytic - fd).abs() < 1e-7, "param {i}: {analytic} vs {fd}");
    }
    Ok(())
}

pub fn short_trajectories_are_consistent(seed: u64) -> Result<(), TestCaseError> {
    let experiment = if seed % 2 == 0 { Experiment::Xor } else { Experiment::MixedState };
    let mut config = TrainConfig::preset(experiment).with_seed(seed);
    config.max_total_steps = 4;
    let run = run_adversarial(&config, None).unwrap();
    let traj = &run.trajectory;
    prop_assert!(traj.check_consistency(1e-12).is_ok());
    for r in &traj.records {
        prop_assert!((-1.0..=1.0).contains(&r.v));
        prop_assert!((recompute_v(&config, r).unwrap() - r.v).abs() < 1e-12);
    }
    let mut a = Vec::new();
    traj.write_csv(&mut a).unwrap();
    let again = run_adversarial(&config, None).unwrap();
    let mut b = Vec::new();
    again.trajectory.write_csv(&mut b).unwrap();
    prop_assert_eq!(&a, &b);
    let parsed = qgan_forge::train::Trajectory::read_csv(a.as_slice()).unwrap();
    prop_assert!(parsed.check_consistency(1e-12).is_ok());
    Ok(())
}

pub fn discriminator_cannot_separate_identical_sources(seed: u64) -> Result<(), TestCaseError> {
    let config = TrainConfig::mixed_state().with_seed(seed);
    let setup = config.setup();
    let (td, _) = config.initial_params();
    let tg = ParamVector::from_values(&setup.generator, &REAL_MIXED_ANGLES).unwrap();
    let mut t = Trainer::with_params(config, None, td, tg).unwrap();
    t.train_stage(Stage::D, 1).unwrap();
    let traj = t.finish();
    prop_assert!(traj.records.iter().all(|r| r.v.abs() <= 1e-9));
    Ok(())
}

/// Independent accessor: `Tr(ρP)` by explicit matrix product.
fn trace_accessor(rho: &DensityMatrix) -> impl Fn(&PauliString) -> qgan_forge::Result<f64> + '_ {
    |p| Ok((rho.matrix() * p.matrix()).trace().re)
}

pub fn qst_round_trips(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=3);
    let rho = random_density(&mut rng, n);
    let back = qst(trace_accessor(&rho), n).unwrap();
    prop_assert!(max_diff(back.matrix(), rho.matrix()) < 1e-10);
    Ok(())
}

pub fn qpt_of_unitary_channels(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=2);
    let u = random_unitary(&mut rng, n);
    let chi = qpt(unitary_process(u.clone()), n).unwrap();
    let id = ideal_chi(&u).unwrap();
    prop_assert!((process_fidelity(&chi, &id).unwrap() - 1.0).abs() < 1e-9);
    prop_assert!(chi.hermitian_defect() < 1e-9);
    prop_assert!((chi.trace() - C64::new(1.0, 0.0)).norm() < 1e-9);
    let other = ideal_chi(&random_unitary(&mut rng, n)).unwrap();
    let (a, b) = (process_fidelity(&id, &other).unwrap(), process_fidelity(&other, &id).unwrap());
    prop_assert!((a - b).abs() < 1e-9);
    Ok(())
}

pub fn channels_preserve_trace_and_positivity(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let model = NoiseModel::table_s1().with_dd(rng.random_bool(0.5));
    let rho = random_density(&mut rng, 3);
    let q = rng.random_range(0..3);
    let out = apply_decoherence(&rho, q, rng.random_range(0.0..5000.0), model.qubit(q).unwrap()).unwrap();
    prop_assert!((out.trace().re - 1.0).abs() < 1e-10);
    prop_assert!(out.eigenvalues().iter().all(|&e| e >= -1e-9));
    let mut state = State::from(random_density(&mut rng, 5));
    let mut c = Circuit::new(5).unwrap();
    for _ in 0..4 {
        c.push(random_op(&mut rng)).unwrap();
    }
    c.run(&mut state, Some(&model)).unwrap();
    let m = state.to_density();
    prop_assert!((m.trace().re - 1.0).abs() < 1e-10);
    prop_assert!(m.eigenvalues().iter().all(|&e| e >= -1e-9));
    Ok(())
}

pub fn readout_correction_inverts_perturbation(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let matrices = NoiseModel::table_s1().assignment_matrices();
    let probs: Vec<(f64, f64)> = matrices
        .iter()
        .map(|_| {
            let p = rng.random_range(0.0..=1.0);
            (1.0 - p, p)
        })
        .collect();
    let back = readout_correct(&readout_perturb(&probs, &matrices), &matrices).unwrap();
    for (a, b) in probs.iter().zip(&back) {
        prop_assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }
    Ok(())
}

pub fn disabled_noise_is_bit_identical(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng(seed);
    let mut c = Circuit::new(5).unwrap();
    for _ in 0..8 {
        c.push(random_op(&mut rng)).unwrap();
    }
    let init = random_density(&mut rng, 5);
    let (mut a, mut b) = (State::from(init.clone()), State::from(init));
    c.run(&mut a, None).unwrap();
    c.run(&mut b, Some(&NoiseModel::disabled())).unwrap();
    prop_assert_eq!(a.to_density().into_matrix(), b.to_density().into_matrix());
    Ok(())
}

/// Every randomized invariant with a display name.
pub const CHECKS: &[(&str, Check)] = &[
    ("gates preserve norm, trace and hermiticity", gates_preserve_norm_trace_and_hermiticity),
    ("pauli expectations in [-1, 1]", pauli_expectations_are_bounded),
    ("partial traces have unit trace", partial_traces_have_unit_trace),
    ("matrix exponential is unitary and additive", matrix_exponential_is_a_group),
    ("state fidelity is symmetric", fidelity_is_symmetric),
    ("u_ent conserves excitations and inverts", u_ent_conserves_excitations_and_inverts),
    ("library gates are unitary", library_gates_are_unitary),
    ("identical sources give equal scores", identical_sources_are_indistinguishable),
    ("training circuits leave spectators alone", spectators_are_untouched),
    ("gradient engines agree", engines_agree_on_random_circuits),
    ("ancilla decouples", ancilla_decouples),
    ("generator gradient follows V^2", generator_gradient_follows_the_square),
    ("trajectories are consistent and replayable", short_trajectories_are_consistent),
    ("D cannot separate identical sources", discriminator_cannot_separate_identical_sources),
    ("qst round-trips", qst_round_trips),
    ("qpt of unitary channels", qpt_of_unitary_channels),
    ("channels preserve trace and positivity", channels_preserve_trace_and_positivity),
    ("readout correction inverts perturbation", readout_correction_inverts_perturbation),
    ("disabled noise is bit-identical", disabled_noise_is_bit_identical),
];

/// Runs `check` on 100 generated seeds.
pub fn run_cases(check: Check) -> Result<(), String> {
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(100));
    runner.run(&any::<u64>(), check).map_err(|e| e.to_string())
}
