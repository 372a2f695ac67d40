//! Canned studies shared by the CLI and the test suites: the single-qubit
//! gradient sweep, gate process tomography, random gradient circuits and the
//! XOR truth table.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{assemble_training_circuit, LabelValue, Owner, ParamKey, ParamVector, QganSetup, Source};
use crate::circuit::Circuit;
use crate::gates::{cnot, cnot_composed, cz, cz_composed, sequence_unitary, Axis, CouplingSpec, GateOp};
use crate::grad::{circuit_gradient, Engine, GradOptions};
use crate::noise::NoiseModel;
use crate::qsim::{ground_state, DensityMatrix, State, Unitary};
use crate::tomo::{ideal_chi, process_fidelity, qpt, ChiMatrix};
use crate::train::generator_output;
use crate::{Error, Result};

/// One row of a gradient comparison: a label, one value per engine, and an
/// optional analytic reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradRow {
    pub name: String,
    pub values: Vec<f64>,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradTable {
    pub engines: Vec<Engine>,
    pub rows: Vec<GradRow>,
}

impl GradTable {
    pub fn column(&self, engine: Engine) -> Option<Vec<f64>> {
        let i = self.engines.iter().position(|&e| e == engine)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }

    /// Largest `|a − b|` between two engine columns.
    pub fn max_disagreement(&self, a: Engine, b: Engine) -> Option<f64> {
        let (ca, cb) = (self.column(a)?, self.column(b)?);
        Some(ca.iter().zip(&cb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }

    /// Mean `|value − reference|` of one engine column.
    pub fn mean_abs_error(&self, engine: Engine) -> Option<f64> {
        let col = self.column(engine)?;
        let errs: Vec<f64> = col
            .iter()
            .zip(&self.rows)
            .filter_map(|(v, r)| r.reference.map(|x| (v - x).abs()))
            .collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# qgan-forge v{}\nparameter", crate::VERSION);
        for e in &self.engines {
            out.push(',');
            out.push_str(e.short_name());
        }
        out.push_str(",reference\n");
        for r in &self.rows {
            out.push_str(&r.name);
            for v in &r.values {
                out.push_str(&format!(",{v:?}"));
            }
            match r.reference {
                Some(x) => out.push_str(&format!(",{x:?}\n")),
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

/// `Rx(θ)` on qubit 1 of an (ancilla, system) pair.
pub fn rx_sweep_circuit(theta: f64) -> Result<(Circuit, ParamKey)> {
    let key = ParamKey::new(1, 1, Axis::X, Owner::D);
    let mut c = Circuit::new(2)?;
    c.push(GateOp::rx(1, theta).with_param(key))?;
    Ok((c, key))
}

/// Gradient of `⟨σz⟩ = cos θ` for `θ = 2πk/steps`, reference `−sin θ`.
pub fn rx_sweep(steps: usize, engines: &[Engine], opts: &GradOptions) -> Result<GradTable> {
    if steps == 0 {
        return Err(Error::Argument("sweep needs at least one point".into()));
    }
    let initial = State::from(ground_state(2)?);
    let rows = (0..steps)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / steps as f64;
            let (c, key) = rx_sweep_circuit(theta)?;
            let values = engines
                .iter()
                .map(|&e| circuit_gradient(e, &c, &initial, &key, opts))
                .collect::<Result<Vec<_>>>()?;
            Ok(GradRow { name: format!("{theta:.6}"), values, reference: Some(-theta.sin()) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradTable { engines: engines.to_vec(), rows })
}

/// Per-parameter `∂⟨σz_1⟩` of a G-sourced training circuit (both G and D
/// parameters appear in it).
pub fn ansatz_gradients(
    setup: &QganSetup,
    label: Option<LabelValue>,
    theta_g: &ParamVector,
    theta_d: &ParamVector,
    engines: &[Engine],
    opts: &GradOptions,
) -> Result<GradTable> {
    let inst = assemble_training_circuit(setup, Source::G, label, theta_g, theta_d)?;
    let rows = inst
        .circuit
        .param_keys()
        .iter()
        .map(|key| {
            let values = engines
                .iter()
                .map(|&e| circuit_gradient(e, &inst.circuit, &inst.initial, key, opts))
                .collect::<Result<Vec<_>>>()?;
            Ok(GradRow { name: key.code(), values, reference: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradTable { engines: engines.to_vec(), rows })
}

/// A random layered circuit on `n_qubits` (qubit 0 left free for the
/// ancilla) with `n_params` bound rotations interleaved with fixed gates.
pub fn random_gradient_circuit(rng: &mut impl Rng, n_qubits: usize, n_params: usize) -> Result<Circuit> {
    if n_qubits < 2 {
        return Err(Error::Argument("need the ancilla plus at least one system qubit".into()));
    }
    let system: Vec<usize> = (1..n_qubits).collect();
    let mut c = Circuit::new(n_qubits)?;
    let mut layer = 1;
    let mut bound = 0;
    while bound < n_params {
        let q = system[rng.random_range(0..system.len())];
        let axis = if rng.random_bool(0.5) { Axis::X } else { Axis::Z };
        let key = ParamKey::new(q, layer, axis, Owner::D);
        if c.position_of(&key).is_some() {
            layer += 1;
            continue;
        }
        c.push(GateOp::rotation(axis, q, rng.random_range(-PI..PI)).with_param(key))?;
        bound += 1;
        match rng.random_range(0..4) {
            0 if system.len() >= 2 => {
                let a = rng.random_range(0..system.len());
                let b = (a + 1 + rng.random_range(0..system.len() - 1)) % system.len();
                let lt = rng.random_range(-PI..PI);
                c.push(GateOp::u_ent(&[system[a], system[b]], CouplingSpec::from_lambda_tau(lt)))?;
            }
            1 if system.len() >= 3 => {
                c.push(GateOp::u_ent(&system[..3], CouplingSpec::three_qubit_default()))?;
            }
            2 => c.push(GateOp::h(q))?,
            _ if system.len() >= 2 => {
                let t = system[(system.iter().position(|&s| s == q).unwrap() + 1) % system.len()];
                c.push(GateOp::cnot(q, t))?;
            }
            _ => c.push(GateOp::x_half(q))?,
        }
    }
    Ok(c)
}

/// A library gate for tomography: its device-level gate sequence, the qubits
/// it occupies and the ideal target unitary.
#[derive(Debug, Clone)]
pub struct LibraryGate {
    pub name: &'static str,
    pub qubits: Vec<usize>,
    pub ops: Vec<GateOp>,
    pub ideal: Unitary,
}

pub const LIBRARY_GATES: [&str; 9] = ["rx90", "rz90", "h", "x", "u_phase", "cz", "cnot", "u_ent2", "u_ent3"];

pub fn library_gate(name: &str) -> Result<LibraryGate> {
    let single = |op: GateOp| -> Result<LibraryGate> {
        let ideal = op.unitary()?;
        Ok(LibraryGate { name: "", qubits: op.targets.clone(), ops: vec![op], ideal })
    };
    let mut gate = match name {
        "rx90" => single(GateOp::rx(1, FRAC_PI_2))?,
        "rz90" => single(GateOp::rz(1, FRAC_PI_2))?,
        "h" => single(GateOp::h(1))?,
        "x" => single(GateOp::x(1))?,
        "u_phase" => single(GateOp::u_phase(0, 1))?,
        "cz" => LibraryGate { name: "", qubits: vec![0, 1], ops: cz_composed(0, 1)?, ideal: cz() },
        "cnot" => LibraryGate { name: "", qubits: vec![0, 1], ops: cnot_composed(0, 1)?, ideal: cnot() },
        "u_ent2" => single(GateOp::u_ent(&[3, 4], CouplingSpec::two_qubit_default()))?,
        "u_ent3" => single(GateOp::u_ent(&[1, 2, 3], CouplingSpec::three_qubit_default()))?,
        other => {
            return Err(Error::Argument(format!(
                "unknown gate '{other}' (known: {})",
                LIBRARY_GATES.join(", ")
            )))
        }
    };
    gate.name = LIBRARY_GATES.iter().find(|&&g| g == name).expect("matched above");
    Ok(gate)
}

impl LibraryGate {
    /// Product of the device sequence; equals `ideal` up to a global phase.
    pub fn realized_unitary(&self) -> Result<Unitary> {
        sequence_unitary(&self.ops, &self.qubits)
    }

    /// Runs the sequence on a local register, with each qubit's own noise
    /// parameters when `noise` is enabled.
    pub fn apply(&self, rho: &DensityMatrix, noise: Option<&NoiseModel>) -> Result<DensityMatrix> {
        let local_noise = match noise.filter(|m| m.enabled) {
            Some(m) => Some(NoiseModel {
                qubits: self.qubits.iter().map(|&q| m.qubit(q).copied()).collect::<Result<_>>()?,
                ..m.clone()
            }),
            None => None,
        };
        let mut circuit = Circuit::new(self.qubits.len())?;
        for op in &self.ops {
            let mut local = op.clone();
            local.targets = op
                .targets
                .iter()
                .map(|t| self.qubits.iter().position(|q| q == t).expect("gate stays on its qubits"))
                .collect();
            circuit.push(local)?;
        }
        let mut state = State::from(rho.clone());
        circuit.run(&mut state, local_noise.as_ref())?;
        Ok(state.to_density())
    }
}

#[derive(Debug, Clone)]
pub struct GateQpt {
    pub gate: &'static str,
    pub chi_exp: ChiMatrix,
    pub chi_id: ChiMatrix,
    pub fidelity: f64,
}

/// QPT of a library gate against its ideal χ.
pub fn gate_qpt(name: &str, noise: Option<&NoiseModel>) -> Result<GateQpt> {
    let gate = library_gate(name)?;
    let chi_exp = qpt(|rho| gate.apply(rho, noise), gate.qubits.len())?;
    let chi_id = ideal_chi(&gate.ideal)?;
    let fidelity = process_fidelity(&chi_exp, &chi_id)?;
    Ok(GateQpt { gate: gate.name, chi_exp, chi_id, fidelity })
}

/// Hardware process fidelities for context, `(mean, spread)`.
pub fn published_gate_fidelity(name: &str) -> Option<(f64, f64)> {
    match name {
        "u_ent2" => Some((0.9716, 0.0110)),
        "u_ent3" => Some((0.9456, 0.0154)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub label: LabelValue,
    /// Population of `|1⟩` on the data qubit.
    pub p1: f64,
    pub output: bool,
    pub expected: bool,
}

/// Generator truth table: argmax of the data-qubit population per label.
pub fn truth_table(setup: &QganSetup, theta_g: &ParamVector) -> Result<Vec<TruthRow>> {
    LabelValue::ALL
        .iter()
        .map(|&label| {
            let rho = generator_output(setup, theta_g, Some(label), None)?;
            let p1 = rho.matrix()[(1, 1)].re;
            Ok(TruthRow { label, p1, output: p1 > 0.5, expected: label.xor() })
        })
        .collect()
}
