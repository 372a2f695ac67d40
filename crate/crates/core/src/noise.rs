//! Coherence-limited gate noise and readout-error correction.
//!
//! Every gate is followed, on each participating qubit, by amplitude damping
//! with `p = 1 − e^{−t/T1}` and pure dephasing at rate
//! `1/Tφ = 1/T2* − 1/(2T1)`. The dephasing channel is Markovian
//! (exponential); the Gaussian Ramsey envelope of the characterization data is
//! only matched at `t = T2*`.

use serde::{Deserialize, Serialize};

use crate::gates::GateKind;
use crate::gates::GateOp;
use crate::qsim::{c, CMatrix, DensityMatrix};
use crate::{Error, Result};

/// Coherence and readout characteristics of one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitNoise {
    pub t1_us: f64,
    pub t2star_us: f64,
    pub f0: f64,
    pub f1: f64,
}

impl QubitNoise {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1_us > 0.0) {
            return Err(Error::Argument(format!("T1 must be positive, got {}", self.t1_us)));
        }
        if !(self.t2star_us > 0.0 && self.t2star_us <= 2.0 * self.t1_us) {
            return Err(Error::Argument(format!("T2* must lie in (0, 2·T1], got {}", self.t2star_us)));
        }
        for (name, f) in [("F0", self.f0), ("F1", self.f1)] {
            if !(f > 0.5 && f <= 1.0) {
                return Err(Error::Argument(format!("{name} must lie in (0.5, 1], got {f}")));
            }
        }
        Ok(())
    }

    /// Pure-dephasing rate `1/T2* − 1/(2T1)` in 1/µs.
    pub fn dephasing_rate(&self) -> f64 {
        (1.0 / self.t2star_us - 0.5 / self.t1_us).max(0.0)
    }

    pub fn assignment(&self) -> AssignmentMatrix {
        AssignmentMatrix { f0: self.f0, f1: self.f1 }
    }
}

/// Per-qubit noise parameters plus global switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub qubits: Vec<QubitNoise>,
    pub enabled: bool,
    /// Suppress dephasing during explicit delays (ideal dynamical decoupling).
    #[serde(default)]
    pub dd_protected_idle: bool,
    /// Extra depolarizing probability per participating qubit per gate.
    #[serde(default)]
    pub depolarizing: f64,
}

const TABLE_T1_US: [f64; 5] = [28.8, 32.2, 38.2, 42.4, 38.8];
const TABLE_T2STAR_US: [f64; 5] = [2.4, 2.0, 1.8, 2.5, 1.7];
const TABLE_F0: [f64; 5] = [0.982, 0.990, 0.986, 0.988, 0.982];
const TABLE_F1: [f64; 5] = [0.938, 0.933, 0.941, 0.939, 0.944];

impl NoiseModel {
    /// Measured device characteristics for Q0–Q4.
    pub fn table_s1() -> Self {
        let qubits = (0..5)
            .map(|j| QubitNoise {
                t1_us: TABLE_T1_US[j],
                t2star_us: TABLE_T2STAR_US[j],
                f0: TABLE_F0[j],
                f1: TABLE_F1[j],
            })
            .collect();
        Self { qubits, enabled: true, dd_protected_idle: false, depolarizing: 0.0 }
    }

    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::table_s1() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "table-s1" => Ok(Self::table_s1()),
            "off" => Ok(Self::disabled()),
            other => Err(Error::Argument(format!("unknown noise preset '{other}'"))),
        }
    }

    pub fn with_dd(mut self, on: bool) -> Self {
        self.dd_protected_idle = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.qubits.iter().try_for_each(QubitNoise::validate)?;
        if !(0.0..=1.0).contains(&self.depolarizing) {
            return Err(Error::Argument("depolarizing probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn qubit(&self, q: usize) -> Result<&QubitNoise> {
        self.qubits
            .get(q)
            .ok_or_else(|| Error::Argument(format!("noise model has no entry for qubit {q}")))
    }

    pub fn assignment_matrices(&self) -> Vec<AssignmentMatrix> {
        self.qubits.iter().map(QubitNoise::assignment).collect()
    }

    /// Ideal gate followed by decoherence on each participating qubit. A
    /// disabled model reduces to the ideal unitary.
    pub fn noisy_apply(&self, rho: &mut DensityMatrix, gate: &GateOp) -> Result<()> {
        if gate.kind != GateKind::Delay {
            rho.apply(&gate.unitary()?, &gate.targets)?;
        }
        if !self.enabled {
            return Ok(());
        }
        let dephase = !(gate.kind == GateKind::Delay && self.dd_protected_idle);
        for &q in &gate.targets {
            let params = self.qubit(q)?;
            decohere(rho, q, gate.duration_ns, params, dephase)?;
            if self.depolarizing > 0.0 && gate.kind != GateKind::Delay {
                depolarize(rho, q, self.depolarizing)?;
            }
        }
        Ok(())
    }
}

fn amplitude_damping_kraus(p: f64) -> [CMatrix; 2] {
    let o = c(0.0, 0.0);
    [
        CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), o, o, c((1.0 - p).sqrt(), 0.0)]),
        CMatrix::from_row_slice(2, 2, &[o, c(p.sqrt(), 0.0), o, o]),
    ]
}

/// Kraus pair multiplying coherences by `lambda`.
fn dephasing_kraus(lambda: f64) -> [CMatrix; 2] {
    let o = c(0.0, 0.0);
    let a = ((1.0 + lambda) / 2.0).sqrt();
    let b = ((1.0 - lambda) / 2.0).sqrt();
    [
        CMatrix::from_row_slice(2, 2, &[c(a, 0.0), o, o, c(a, 0.0)]),
        CMatrix::from_row_slice(2, 2, &[c(b, 0.0), o, o, c(-b, 0.0)]),
    ]
}

fn depolarize(rho: &mut DensityMatrix, qubit: usize, p: f64) -> Result<()> {
    use crate::qsim::Pauli;
    let kraus = [
        Pauli::I.matrix().map(|v| v * (1.0 - p).sqrt()),
        Pauli::X.matrix().map(|v| v * (p / 3.0).sqrt()),
        Pauli::Y.matrix().map(|v| v * (p / 3.0).sqrt()),
        Pauli::Z.matrix().map(|v| v * (p / 3.0).sqrt()),
    ];
    rho.apply_kraus(&kraus, &[qubit])
}

fn decohere(rho: &mut DensityMatrix, qubit: usize, duration_ns: f64, q: &QubitNoise, dephase: bool) -> Result<()> {
    if !(duration_ns >= 0.0) {
        return Err(Error::Argument(format!("duration must be non-negative, got {duration_ns}")));
    }
    if duration_ns == 0.0 {
        return Ok(());
    }
    let t_us = duration_ns * 1e-3;
    let p = 1.0 - (-t_us / q.t1_us).exp();
    rho.apply_kraus(&amplitude_damping_kraus(p), &[qubit])?;
    if dephase {
        let lambda = (-t_us * q.dephasing_rate()).exp();
        rho.apply_kraus(&dephasing_kraus(lambda), &[qubit])?;
    }
    Ok(())
}

/// Amplitude damping then pure dephasing on `qubit` for `duration_ns`.
pub fn apply_decoherence(rho: &DensityMatrix, qubit: usize, duration_ns: f64, q: &QubitNoise) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    decohere(&mut out, qubit, duration_ns, q, true)?;
    Ok(out)
}

/// Coherence factor `|ρ01(t)| / |ρ01(0)|` of the exponential model.
pub fn exponential_coherence(q: &QubitNoise, t_us: f64) -> f64 {
    (-t_us / (2.0 * q.t1_us) - t_us * q.dephasing_rate()).exp()
}

/// Gaussian Ramsey envelope `exp[−t/2T1 − (t/T2*)²]` of the characterization fit.
pub fn gaussian_coherence(q: &QubitNoise, t_us: f64) -> f64 {
    (-t_us / (2.0 * q.t1_us) - (t_us / q.t2star_us).powi(2)).exp()
}

/// Column-stochastic readout confusion matrix `[[F0, 1−F1], [1−F0, F1]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    pub f0: f64,
    pub f1: f64,
}

impl AssignmentMatrix {
    pub const PERFECT: AssignmentMatrix = AssignmentMatrix { f0: 1.0, f1: 1.0 };

    pub fn entries(&self) -> [[f64; 2]; 2] {
        [[self.f0, 1.0 - self.f1], [1.0 - self.f0, self.f1]]
    }

    /// Measured probabilities from true ones.
    pub fn perturb(&self, p: (f64, f64)) -> (f64, f64) {
        let m = self.entries();
        (m[0][0] * p.0 + m[0][1] * p.1, m[1][0] * p.0 + m[1][1] * p.1)
    }

    pub fn correct(&self, measured: (f64, f64)) -> Result<(f64, f64)> {
        let det = self.f0 + self.f1 - 1.0;
        if det.abs() < 1e-12 {
            return Err(Error::CorrectionImpossible(format!(
                "assignment matrix is singular (F0 + F1 = {})",
                self.f0 + self.f1
            )));
        }
        let (m0, m1) = measured;
        let p0 = (self.f1 * m0 - (1.0 - self.f1) * m1) / det;
        let p1 = (-(1.0 - self.f0) * m0 + self.f0 * m1) / det;
        if (0.0..=1.0).contains(&p0) && (0.0..=1.0).contains(&p1) {
            return Ok((p0, p1));
        }
        let (p0, p1) = (p0.clamp(0.0, 1.0), p1.clamp(0.0, 1.0));
        let s = p0 + p1;
        Ok((p0 / s, p1 / s))
    }
}

/// Inverts the per-qubit assignment matrices on measured `(p0, p1)` pairs.
pub fn readout_correct(measured: &[(f64, f64)], matrices: &[AssignmentMatrix]) -> Result<Vec<(f64, f64)>> {
    if measured.len() != matrices.len() {
        return Err(Error::Shape(format!(
            "{} probability pairs but {} assignment matrices",
            measured.len(),
            matrices.len()
        )));
    }
    measured
        .iter()
        .zip(matrices)
        .map(|(&(p0, p1), a)| {
            if (p0 + p1 - 1.0).abs() > 1e-9 {
                return Err(Error::Argument(format!("probabilities ({p0}, {p1}) do not sum to 1")));
            }
            a.correct((p0, p1))
        })
        .collect()
}

/// Applies the per-qubit assignment matrices to true probabilities.
pub fn readout_perturb(true_probs: &[(f64, f64)], matrices: &[AssignmentMatrix]) -> Vec<(f64, f64)> {
    true_probs.iter().zip(matrices).map(|(&p, a)| a.perturb(p)).collect()
}
