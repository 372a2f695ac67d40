//! Gate programs over a fixed qubit register, plus their line-oriented text
//! form used by `dump-circuit`.
//!
//! Text format, one gate per line:
//!
//! ```text
//! # qgan-forge circuit v1
//! qubits 5
//! RX 3 1.35 param=x:3:1:G
//! U_ENT 3,4 -0.7853981633974483
//! CNOT 0,3 - duration=170
//! ```
//!
//! The third column is the rotation angle for RX/RZ, λτ for U_ENT and `-`
//! otherwise. Trailing `key=value` fields are optional.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::ansatz::ParamKey;
use crate::gates::{CouplingSpec, GateKind, GateOp};
use crate::noise::NoiseModel;
use crate::qsim::State;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::qsim::MAX_QUBITS {
            return Err(Error::Size(n_qubits));
        }
        Ok(Self { n_qubits, ops: Vec::new() })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        op.validate()?;
        if let Some(&q) = op.targets.iter().find(|&&q| q >= self.n_qubits) {
            return Err(Error::Shape(format!("{} targets qubit {q} of a {}-qubit register", op.kind, self.n_qubits)));
        }
        self.ops.push(op);
        Ok(())
    }

    pub fn extend(&mut self, ops: impl IntoIterator<Item = GateOp>) -> Result<()> {
        ops.into_iter().try_for_each(|op| self.push(op))
    }

    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::Shape("appending circuits over different registers".into()));
        }
        self.ops.extend(other.ops.iter().cloned());
        Ok(())
    }

    pub fn touched_qubits(&self) -> BTreeSet<usize> {
        self.ops.iter().flat_map(|op| op.targets.iter().copied()).collect()
    }

    /// Index of the gate bound to `key`.
    pub fn position_of(&self, key: &ParamKey) -> Option<usize> {
        self.ops.iter().position(|op| op.param.as_ref() == Some(key))
    }

    pub fn param_keys(&self) -> Vec<ParamKey> {
        self.ops.iter().filter_map(|op| op.param).collect()
    }

    /// Copy with the angle of `key` shifted by `delta`.
    pub fn shifted(&self, key: &ParamKey, delta: f64) -> Result<Circuit> {
        let pos = self
            .position_of(key)
            .ok_or_else(|| Error::UnsupportedParameter(format!("{key} is not bound in this circuit")))?;
        let mut out = self.clone();
        let op = &mut out.ops[pos];
        let theta = op
            .theta
            .ok_or_else(|| Error::UnsupportedParameter(format!("{key} is bound to a non-rotation")))?;
        op.theta = Some(theta + delta);
        Ok(out)
    }

    /// Runs the program on `state`. With an enabled noise model the state is
    /// promoted to a density matrix and every gate is followed by its
    /// decoherence channel.
    pub fn run(&self, state: &mut State, noise: Option<&NoiseModel>) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return Err(Error::Shape(format!(
                "circuit over {} qubits run on a {}-qubit state",
                self.n_qubits,
                state.n_qubits()
            )));
        }
        match noise.filter(|m| m.enabled) {
            Some(model) => {
                let rho = state.make_mixed();
                for op in &self.ops {
                    model.noisy_apply(rho, op)?;
                }
            }
            None => {
                for op in &self.ops {
                    if op.kind == GateKind::Delay {
                        continue;
                    }
                    state.apply(&op.unitary()?, &op.targets)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# qgan-forge circuit v1\n");
        let _ = writeln!(out, "qubits {}", self.n_qubits);
        for op in &self.ops {
            let targets: Vec<String> = op.targets.iter().map(|t| t.to_string()).collect();
            let value = match (op.theta, &op.coupling) {
                (Some(t), _) => format!("{t:?}"),
                (None, Some(cp)) => format!("{:?}", cp.lambda_tau),
                _ => "-".to_string(),
            };
            let _ = write!(out, "{} {} {}", op.kind, targets.join(","), value);
            if let Some(key) = &op.param {
                let _ = write!(out, " param={}", key.code());
            }
            if op.duration_ns != default_duration(op) {
                let _ = write!(out, " duration={:?}", op.duration_ns);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Circuit> {
        let mut circuit: Option<Circuit> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse(format!("line {}: {msg}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "qubits" {
                let n = fields
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err("expected 'qubits N'".into()))?;
                circuit = Some(Circuit::new(n)?);
                continue;
            }
            let c = circuit.as_mut().ok_or_else(|| err("gate before 'qubits' header".into()))?;
            if fields.len() < 3 {
                return Err(err("expected KIND TARGETS VALUE".into()));
            }
            let kind = GateKind::from_name(fields[0]).map_err(|e| err(e.to_string()))?;
            let targets = fields[1]
                .split(',')
                .map(|t| t.parse::<usize>().map_err(|_| err(format!("bad target '{t}'"))))
                .collect::<Result<Vec<_>>>()?;
            let value = match fields[2] {
                "-" => None,
                v => Some(v.parse::<f64>().map_err(|_| err(format!("bad value '{v}'")))?),
            };
            let mut op = match kind {
                GateKind::Rx | GateKind::Rz => {
                    let theta = value.ok_or_else(|| err("rotation without angle".into()))?;
                    let mut op = GateOp::rx(targets[0], theta);
                    if kind == GateKind::Rz {
                        op = GateOp::rz(targets[0], theta);
                    }
                    op.targets = targets;
                    op
                }
                GateKind::UEnt => {
                    let lt = value.ok_or_else(|| err("U_ENT without λτ".into()))?;
                    GateOp::u_ent(&targets, CouplingSpec::from_lambda_tau(lt))
                }
                _ => {
                    let mut op = match kind {
                        GateKind::H => GateOp::h(0),
                        GateKind::X => GateOp::x(0),
                        GateKind::XHalf => GateOp::x_half(0),
                        GateKind::Delay => GateOp::delay(0, 1.0),
                        GateKind::UPhase => GateOp::u_phase(0, 1),
                        GateKind::Cnot => GateOp::cnot(0, 1),
                        GateKind::Cz => GateOp::cz(0, 1),
                        GateKind::ControlledRxGen => GateOp::controlled_generator(crate::gates::Axis::X, 0, 1),
                        _ => GateOp::controlled_generator(crate::gates::Axis::Z, 0, 1),
                    };
                    op.targets = targets;
                    op.duration_ns = default_duration(&op);
                    op
                }
            };
            for extra in &fields[3..] {
                let (k, v) = extra.split_once('=').ok_or_else(|| err(format!("bad field '{extra}'")))?;
                match k {
                    "param" => op.param = Some(ParamKey::from_code(v).map_err(|e| err(e.to_string()))?),
                    "duration" => {
                        op.duration_ns = v.parse().map_err(|_| err(format!("bad duration '{v}'")))?
                    }
                    other => return Err(err(format!("unknown field '{other}'"))),
                }
            }
            c.push(op).map_err(|e| err(e.to_string()))?;
        }
        circuit.ok_or_else(|| Error::Parse("missing 'qubits' header".into()))
    }
}

fn default_duration(op: &GateOp) -> f64 {
    let (a, b) = (op.targets.first().copied().unwrap_or(0), op.targets.get(1).copied().unwrap_or(0));
    match op.kind {
        GateKind::Rx => GateOp::rx(a, 0.0).duration_ns,
        GateKind::Rz => GateOp::rz(a, 0.0).duration_ns,
        GateKind::H | GateKind::X | GateKind::XHalf => GateOp::h(a).duration_ns,
        GateKind::UEnt => GateOp::u_ent(&op.targets, CouplingSpec::from_lambda_tau(0.0)).duration_ns,
        GateKind::UPhase | GateKind::Cnot | GateKind::Cz | GateKind::ControlledRxGen | GateKind::ControlledRzGen => {
            GateOp::cnot(a, b).duration_ns
        }
        GateKind::Delay => f64::NAN,
    }
}
