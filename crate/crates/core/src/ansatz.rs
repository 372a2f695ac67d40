//! Generator and discriminator circuits on the five-qubit register, and the
//! two real sources (a fixed mixed state, the XOR truth table).
//!
//! Register roles:
//!
//! | qubit | role |
//! |-------|------|
//! | 0 | gradient ancilla |
//! | 1, 2 | label (1 also carries the discriminator's score) |
//! | 3, 4 | generator register, label copy for the generator; 3 is the data qubit |

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::gates::{Axis, CouplingSpec, GateOp};
use crate::qsim::{c, CMatrix, DensityMatrix, State, StateVector};
use crate::{Error, Result};

pub const REGISTER_QUBITS: usize = 5;

/// Qubit roles on the device register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    pub ancilla: usize,
    pub label: [usize; 2],
    pub generator_label: [usize; 2],
    pub data: usize,
}

impl RegisterLayout {
    pub const STANDARD: RegisterLayout = RegisterLayout { ancilla: 0, label: [1, 2], generator_label: [3, 4], data: 3 };

    /// Qubit read out as the discriminator score.
    pub fn score_qubit(&self) -> usize {
        self.label[0]
    }

    pub fn validate(&self) -> Result<()> {
        let mut roles = vec![self.ancilla];
        roles.extend(self.label);
        roles.extend(self.generator_label);
        roles.sort_unstable();
        if roles != (0..REGISTER_QUBITS).collect::<Vec<_>>() {
            return Err(Error::Layout(format!("roles must cover qubits 0–4 exactly once, got {roles:?}")));
        }
        if !self.generator_label.contains(&self.data) {
            return Err(Error::Layout("data qubit must belong to the generator register".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Owner {
    G,
    D,
}

impl Owner {
    pub fn symbol(self) -> char {
        match self {
            Owner::G => 'G',
            Owner::D => 'D',
        }
    }
}

/// Address `θ^{axis}_{qubit, layer, owner}` of one trainable angle. Layers
/// count from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub qubit: usize,
    pub layer: usize,
    pub axis: Axis,
    pub owner: Owner,
}

impl ParamKey {
    pub fn new(qubit: usize, layer: usize, axis: Axis, owner: Owner) -> Self {
        Self { qubit, layer, axis, owner }
    }

    /// Compact form `axis:qubit:layer:owner`, e.g. `x:3:1:G`.
    pub fn code(&self) -> String {
        format!("{}:{}:{}:{}", self.axis.symbol(), self.qubit, self.layer, self.owner.symbol())
    }

    pub fn from_code(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad parameter key '{s}' (expected axis:qubit:layer:owner)"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let axis = match parts[0] {
            "x" => Axis::X,
            "z" => Axis::Z,
            _ => return Err(bad()),
        };
        let qubit = parts[1].parse().map_err(|_| bad())?;
        let layer: usize = parts[2].parse().map_err(|_| bad())?;
        let owner = match parts[3] {
            "G" => Owner::G,
            "D" => Owner::D,
            _ => return Err(bad()),
        };
        if layer == 0 {
            return Err(bad());
        }
        Ok(Self { qubit, layer, axis, owner })
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for ParamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_code(s)
    }
}

/// Layered rotation + entangler ansatz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub owner: Owner,
    pub layers: usize,
    pub qubits: Vec<usize>,
    /// Rotation axes applied to every qubit in every layer, in order.
    pub axes: Vec<Axis>,
    pub coupling: CouplingSpec,
    pub entangler_qubits: Vec<usize>,
    /// Whether the label is X-encoded on `qubits` before the first layer.
    pub encode_label: bool,
}

impl AnsatzSpec {
    pub fn discriminator() -> Self {
        Self {
            owner: Owner::D,
            layers: 3,
            qubits: vec![1, 2, 3],
            axes: vec![Axis::X, Axis::Z],
            coupling: CouplingSpec::three_qubit_default(),
            entangler_qubits: vec![1, 2, 3],
            encode_label: false,
        }
    }

    pub fn xor_generator() -> Self {
        Self {
            owner: Owner::G,
            layers: 2,
            qubits: vec![3, 4],
            axes: vec![Axis::X, Axis::Z],
            coupling: CouplingSpec::two_qubit_default(),
            entangler_qubits: vec![3, 4],
            encode_label: true,
        }
    }

    pub fn mixed_generator() -> Self {
        Self {
            owner: Owner::G,
            layers: 1,
            qubits: vec![3, 4],
            axes: vec![Axis::X],
            coupling: CouplingSpec::two_qubit_default(),
            entangler_qubits: vec![3, 4],
            encode_label: false,
        }
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    pub fn with_coupling(mut self, coupling: CouplingSpec) -> Self {
        self.coupling = coupling;
        self
    }

    /// Keys in circuit order: layer, then qubit, then axis.
    pub fn param_keys(&self) -> Vec<ParamKey> {
        let mut keys = Vec::with_capacity(self.n_params());
        for layer in 1..=self.layers {
            for &q in &self.qubits {
                for &axis in &self.axes {
                    keys.push(ParamKey::new(q, layer, axis, self.owner));
                }
            }
        }
        keys
    }

    pub fn n_params(&self) -> usize {
        self.layers * self.qubits.len() * self.axes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.qubits.is_empty() || self.axes.is_empty() {
            return Err(Error::Argument("ansatz needs at least one layer, qubit and axis".into()));
        }
        if let Some(&q) = self.qubits.iter().chain(&self.entangler_qubits).find(|&&q| q >= REGISTER_QUBITS) {
            return Err(Error::Layout(format!("qubit {q} is outside the {REGISTER_QUBITS}-qubit register")));
        }
        if self.entangler_qubits.iter().any(|q| !self.qubits.contains(q)) {
            return Err(Error::Layout("entangler reaches outside the ansatz register".into()));
        }
        if !matches!(self.entangler_qubits.len(), 2 | 3) {
            return Err(Error::UnsupportedSize(format!("{}-qubit entangler", self.entangler_qubits.len())));
        }
        Ok(())
    }
}

/// Flat parameter vector with a key ↔ index bijection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<NamedParam>", into = "Vec<NamedParam>")]
pub struct ParamVector {
    keys: Vec<ParamKey>,
    values: Vec<f64>,
    index: HashMap<ParamKey, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub key: String,
    pub value: f64,
}

impl ParamVector {
    pub fn new(keys: Vec<ParamKey>, values: Vec<f64>) -> Result<Self> {
        if keys.len() != values.len() {
            return Err(Error::Shape(format!("{} keys but {} values", keys.len(), values.len())));
        }
        let index: HashMap<ParamKey, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        if index.len() != keys.len() {
            return Err(Error::Argument("duplicate parameter key".into()));
        }
        Ok(Self { keys, values, index })
    }

    pub fn zeros(spec: &AnsatzSpec) -> Self {
        let keys = spec.param_keys();
        let n = keys.len();
        Self::new(keys, vec![0.0; n]).expect("spec keys are unique")
    }

    pub fn from_values(spec: &AnsatzSpec, values: &[f64]) -> Result<Self> {
        Self::new(spec.param_keys(), values.to_vec())
    }

    /// Every value drawn uniformly from `[lo, hi)`.
    pub fn uniform(spec: &AnsatzSpec, lo: f64, hi: f64, rng: &mut impl rand::Rng) -> Self {
        let keys = spec.param_keys();
        let values = keys.iter().map(|_| rng.random_range(lo..hi)).collect();
        Self::new(keys, values).expect("spec keys are unique")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn keys(&self) -> &[ParamKey] {
        &self.keys
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index_of(&self, key: &ParamKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn get(&self, key: &ParamKey) -> Option<f64> {
        self.index_of(key).map(|i| self.values[i])
    }

    pub fn set(&mut self, key: &ParamKey, value: f64) -> Result<()> {
        let i = self
            .index_of(key)
            .ok_or_else(|| Error::UnsupportedParameter(format!("{key} is not in this vector")))?;
        self.values[i] = value;
        Ok(())
    }

    /// Same keys, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!("expected {} values, got {}", self.len(), values.len())));
        }
        Ok(Self { values, ..self.clone() })
    }

    fn check_against(&self, spec: &AnsatzSpec) -> Result<()> {
        if self.keys != spec.param_keys() {
            return Err(Error::Shape(format!(
                "parameter vector ({} entries) does not match the {:?} ansatz ({} entries)",
                self.len(),
                spec.owner,
                spec.n_params()
            )));
        }
        Ok(())
    }
}

impl From<ParamVector> for Vec<NamedParam> {
    fn from(p: ParamVector) -> Self {
        p.keys.iter().zip(&p.values).map(|(k, &v)| NamedParam { key: k.code(), value: v }).collect()
    }
}

impl TryFrom<Vec<NamedParam>> for ParamVector {
    type Error = Error;

    fn try_from(named: Vec<NamedParam>) -> Result<Self> {
        let keys = named.iter().map(|p| ParamKey::from_code(&p.key)).collect::<Result<Vec<_>>>()?;
        ParamVector::new(keys, named.iter().map(|p| p.value).collect())
    }
}

/// A two-bit classical input `xy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LabelValue(u8);

impl LabelValue {
    pub const ALL: [LabelValue; 4] = [LabelValue(0), LabelValue(1), LabelValue(2), LabelValue(3)];

    pub fn new(bits: u8) -> Result<Self> {
        if bits > 3 {
            return Err(Error::Argument(format!("label {bits} does not fit in two bits")));
        }
        Ok(Self(bits))
    }

    pub fn from_bits(x: bool, y: bool) -> Self {
        Self(u8::from(x) << 1 | u8::from(y))
    }

    pub fn bits(self) -> (bool, bool) {
        (self.0 & 2 != 0, self.0 & 1 != 0)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn xor(self) -> bool {
        let (x, y) = self.bits();
        x ^ y
    }
}

impl TryFrom<u8> for LabelValue {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelValue> for u8 {
    fn from(l: LabelValue) -> u8 {
        l.0
    }
}

impl fmt::Display for LabelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (x, y) = self.bits();
        write!(f, "{}{}", u8::from(x), u8::from(y))
    }
}

impl FromStr for LabelValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "00" => Ok(Self(0)),
            "01" => Ok(Self(1)),
            "10" => Ok(Self(2)),
            "11" => Ok(Self(3)),
            _ => Err(Error::Parse(format!("label must be two bits, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    MixedState,
    Xor,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::MixedState => "mixed_state",
            Experiment::Xor => "xor",
        }
    }

    /// Inputs fed per loss evaluation (`None` means no label).
    pub fn labels(self) -> Vec<Option<LabelValue>> {
        match self {
            Experiment::MixedState => vec![None],
            Experiment::Xor => LabelValue::ALL.iter().copied().map(Some).collect(),
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed_state" | "mixed-state" | "mixed" => Ok(Experiment::MixedState),
            "xor" => Ok(Experiment::Xor),
            _ => Err(Error::Parse(format!("unknown experiment '{s}'"))),
        }
    }
}

/// Generating angles of the mixed-state source on qubits 3 and 4.
pub const REAL_MIXED_ANGLES: [f64; 2] = [1.35, 0.68];

/// The published reduced state of the mixed-state source on qubit 3.
pub fn published_rho_r() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.7396, 0.0), c(0.0431, 0.3501), c(0.0431, -0.3501), c(0.2604, 0.0)])
}

fn check_owner(spec: &AnsatzSpec, owner: Owner) -> Result<()> {
    if spec.owner != owner {
        return Err(Error::Shape(format!("expected a {owner:?} ansatz, got {:?}", spec.owner)));
    }
    spec.validate()
}

fn push_layers(circuit: &mut Circuit, spec: &AnsatzSpec, theta: &ParamVector) -> Result<()> {
    let mut values = theta.values().iter();
    for key in theta.keys() {
        let value = *values.next().expect("keys and values align");
        circuit.push(GateOp::rotation(key.axis, key.qubit, value).with_param(*key))?;
        let last_of_layer = key.qubit == *spec.qubits.last().expect("validated")
            && key.axis == *spec.axes.last().expect("validated");
        if last_of_layer {
            circuit.push(GateOp::u_ent(&spec.entangler_qubits, spec.coupling.clone()))?;
        }
    }
    Ok(())
}

/// Label encoding (when the spec asks for it) followed by the layers.
pub fn build_generator(spec: &AnsatzSpec, theta_g: &ParamVector, label: Option<LabelValue>) -> Result<Circuit> {
    check_owner(spec, Owner::G)?;
    theta_g.check_against(spec)?;
    let mut circuit = Circuit::new(REGISTER_QUBITS)?;
    if spec.encode_label {
        let label = label.ok_or_else(|| Error::Argument("this generator needs a label".into()))?;
        if spec.qubits.len() < 2 {
            return Err(Error::Layout("label encoding needs two generator qubits".into()));
        }
        encode_label(&mut circuit, label, [spec.qubits[0], spec.qubits[1]])?;
    }
    push_layers(&mut circuit, spec, theta_g)?;
    Ok(circuit)
}

pub fn build_discriminator(spec: &AnsatzSpec, theta_d: &ParamVector) -> Result<Circuit> {
    check_owner(spec, Owner::D)?;
    theta_d.check_against(spec)?;
    let mut circuit = Circuit::new(REGISTER_QUBITS)?;
    push_layers(&mut circuit, spec, theta_d)?;
    Ok(circuit)
}

fn encode_label(circuit: &mut Circuit, label: LabelValue, qubits: [usize; 2]) -> Result<()> {
    let (x, y) = label.bits();
    if x {
        circuit.push(GateOp::x(qubits[0]))?;
    }
    if y {
        circuit.push(GateOp::x(qubits[1]))?;
    }
    Ok(())
}

/// Preparation circuit of the real source on the full register.
pub fn real_preparation(experiment: Experiment, label: Option<LabelValue>) -> Result<Circuit> {
    let layout = RegisterLayout::STANDARD;
    let mut circuit = Circuit::new(REGISTER_QUBITS)?;
    match experiment {
        Experiment::MixedState => {
            let spec = AnsatzSpec::mixed_generator();
            for (&q, &theta) in spec.qubits.iter().zip(&REAL_MIXED_ANGLES) {
                circuit.push(GateOp::rx(q, theta))?;
            }
            circuit.push(GateOp::u_ent(&spec.entangler_qubits, spec.coupling))?;
        }
        Experiment::Xor => {
            let label = label.ok_or_else(|| Error::Argument("the XOR source needs a label".into()))?;
            encode_label(&mut circuit, label, layout.label)?;
            if label.xor() {
                circuit.push(GateOp::x(layout.data))?;
            }
        }
    }
    Ok(circuit)
}

/// Real state on qubits (1, 2, 3): the label register and the data qubit.
pub fn real_source(experiment: Experiment, label: Option<LabelValue>) -> Result<DensityMatrix> {
    let mut state = State::from(crate::qsim::ground_state(REGISTER_QUBITS)?);
    real_preparation(experiment, label)?.run(&mut state, None)?;
    let layout = RegisterLayout::STANDARD;
    state.to_density().partial_trace(&[layout.label[0], layout.label[1], layout.data])
}

/// Real state restricted to the data qubit.
pub fn real_data_state(experiment: Experiment, label: Option<LabelValue>) -> Result<DensityMatrix> {
    real_source(experiment, label)?.partial_trace(&[2])
}

/// How the real sample enters the discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealMode {
    /// Start from the real state as an initial density matrix.
    #[default]
    Inject,
    /// Run the real source's preparation circuit every time.
    Resimulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    R,
    G,
}

/// Everything needed to assemble training circuits for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QganSetup {
    pub experiment: Experiment,
    pub layout: RegisterLayout,
    pub generator: AnsatzSpec,
    pub discriminator: AnsatzSpec,
    #[serde(default)]
    pub real_mode: RealMode,
}

impl QganSetup {
    pub fn new(experiment: Experiment) -> Self {
        let generator = match experiment {
            Experiment::MixedState => AnsatzSpec::mixed_generator(),
            Experiment::Xor => AnsatzSpec::xor_generator(),
        };
        Self {
            experiment,
            layout: RegisterLayout::STANDARD,
            generator,
            discriminator: AnsatzSpec::discriminator(),
            real_mode: RealMode::Inject,
        }
    }

    pub fn with_real_mode(mut self, mode: RealMode) -> Self {
        self.real_mode = mode;
        self
    }

    pub fn labels(&self) -> Vec<Option<LabelValue>> {
        self.experiment.labels()
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        let l = &self.layout;
        if self.generator.owner != Owner::G || self.discriminator.owner != Owner::D {
            return Err(Error::Layout("generator and discriminator owners are swapped".into()));
        }
        if self.generator.qubits.iter().any(|q| !l.generator_label.contains(q)) {
            return Err(Error::Layout("generator must stay on the generator register".into()));
        }
        let d = &self.discriminator.qubits;
        if d.contains(&l.ancilla) {
            return Err(Error::Layout("discriminator overlaps the ancilla".into()));
        }
        if !d.contains(&l.score_qubit()) || !d.contains(&l.data) {
            return Err(Error::Layout("discriminator must read the data qubit and write the score qubit".into()));
        }
        if self.experiment == Experiment::Xor && self.generator.qubits.first() != Some(&l.data) {
            return Err(Error::Layout("the XOR generator must output on the data qubit".into()));
        }
        Ok(())
    }
}

/// A circuit together with the state it starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub initial: State,
    pub circuit: Circuit,
}

impl TrainingInstance {
    pub fn final_state(&self) -> Result<State> {
        let mut s = self.initial.clone();
        self.circuit.run(&mut s, None)?;
        Ok(s)
    }
}

/// Label preparation, then G or the real sample, then D. The score is
/// `⟨σz⟩` on the layout's score qubit.
pub fn assemble_training_circuit(
    setup: &QganSetup,
    source: Source,
    label: Option<LabelValue>,
    theta_g: &ParamVector,
    theta_d: &ParamVector,
) -> Result<TrainingInstance> {
    setup.validate()?;
    if setup.experiment == Experiment::Xor && label.is_none() {
        return Err(Error::Argument("XOR samples need a label".into()));
    }
    let l = &setup.layout;
    let mut circuit = Circuit::new(REGISTER_QUBITS)?;
    let mut initial = State::from(crate::qsim::ground_state(REGISTER_QUBITS)?);
    match source {
        Source::G => {
            if let Some(label) = label {
                encode_label(&mut circuit, label, l.label)?;
            }
            circuit.append(&build_generator(&setup.generator, theta_g, label)?)?;
        }
        Source::R => match setup.real_mode {
            RealMode::Resimulate => circuit.append(&real_preparation(setup.experiment, label)?)?,
            RealMode::Inject => initial = injected_state(setup, label)?,
        },
    }
    circuit.append(&build_discriminator(&setup.discriminator, theta_d)?)?;
    Ok(TrainingInstance { initial, circuit })
}

fn injected_state(setup: &QganSetup, label: Option<LabelValue>) -> Result<State> {
    let l = &setup.layout;
    match setup.experiment {
        Experiment::Xor => {
            let label = label.expect("checked by caller");
            let (x, y) = label.bits();
            let mut index = 0usize;
            for (q, bit) in [(l.label[0], x), (l.label[1], y), (l.data, label.xor())] {
                if bit {
                    index |= 1 << (REGISTER_QUBITS - 1 - q);
                }
            }
            Ok(State::from(StateVector::basis(REGISTER_QUBITS, index)?))
        }
        Experiment::MixedState => {
            let rho = real_data_state(Experiment::MixedState, None)?;
            let zero = DensityMatrix::ground(1)?;
            let mut full: Option<DensityMatrix> = None;
            for q in 0..REGISTER_QUBITS {
                let factor = if q == l.data { &rho } else { &zero };
                full = Some(match full {
                    None => factor.clone(),
                    Some(acc) => acc.tensor(factor)?,
                });
            }
            Ok(State::from(full.expect("register is nonempty")))
        }
    }
}
