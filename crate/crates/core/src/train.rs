//! Alternating adversarial training.
//!
//! The discriminator ascends `V = mean(S_R − S_G)`; the generator descends
//! `V²`. Scores are `S = ⟨σz_1⟩/2 + 1/2`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{
    assemble_training_circuit, build_generator, real_data_state, Experiment, LabelValue, Owner, ParamVector,
    QganSetup, RealMode, Source,
};
use crate::grad::{loss_gradient, measure_z, Engine, GradOptions, OBSERVABLE_QUBIT};
use crate::noise::NoiseModel;
use crate::qsim::{ground_state, state_fidelity, trace_overlap, DensityMatrix, State};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Change of `V` over one D step below which the stage stops.
pub const D_PLATEAU: f64 = 1e-6;
/// Change of `F̄` over one round below which the fidelity counts as settled.
pub const FIDELITY_PLATEAU: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub experiment: Experiment,
    pub alpha_d: f64,
    pub alpha_g: f64,
    pub max_steps_d: usize,
    pub max_steps_g: usize,
    pub max_rounds: usize,
    /// Budget on parameter updates summed over both sides.
    pub max_total_steps: usize,
    pub grad_engine: Engine,
    pub seed: u64,
    pub stop_grad_norm: f64,
    pub stop_loss_abs: f64,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default)]
    pub shots: u64,
    /// Initial angles are drawn from `[init_low, init_high)`.
    #[serde(default)]
    pub init_low: f64,
    #[serde(default = "default_init_high")]
    pub init_high: f64,
    #[serde(default)]
    pub real_mode: RealMode,
    /// Score the generator through state tomography instead of direct
    /// density-matrix access.
    #[serde(default)]
    pub tomography_fidelity: bool,
}

fn default_fd_step() -> f64 {
    crate::grad::DEFAULT_FD_STEP
}

fn default_init_high() -> f64 {
    std::f64::consts::PI
}

impl TrainConfig {
    pub fn mixed_state() -> Self {
        Self {
            experiment: Experiment::MixedState,
            alpha_d: 0.8,
            alpha_g: 0.6,
            max_steps_d: 50,
            max_steps_g: 100,
            max_rounds: 50,
            max_total_steps: 600,
            grad_engine: Engine::HadamardTest,
            seed: 1,
            stop_grad_norm: 1e-3,
            stop_loss_abs: 0.02,
            fd_step: default_fd_step(),
            shots: 0,
            init_low: 0.0,
            init_high: default_init_high(),
            real_mode: RealMode::Inject,
            tomography_fidelity: false,
        }
    }

    pub fn xor() -> Self {
        Self {
            experiment: Experiment::Xor,
            alpha_d: 1.0,
            alpha_g: 1.5,
            max_steps_d: 50,
            max_steps_g: 50,
            max_total_steps: 400,
            ..Self::mixed_state()
        }
    }

    pub fn preset(experiment: Experiment) -> Self {
        match experiment {
            Experiment::MixedState => Self::mixed_state(),
            Experiment::Xor => Self::xor(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Error::Argument(format!("{name}: {msg}"));
        for (name, v) in [("alpha_d", self.alpha_d), ("alpha_g", self.alpha_g)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, format!("learning rate must be finite and positive, got {v}")));
            }
        }
        for (name, v) in [
            ("max_steps_d", self.max_steps_d),
            ("max_steps_g", self.max_steps_g),
            ("max_rounds", self.max_rounds),
            ("max_total_steps", self.max_total_steps),
        ] {
            if v == 0 {
                return Err(field(name, "must be at least 1".into()));
            }
        }
        for (name, v) in [("stop_grad_norm", self.stop_grad_norm), ("stop_loss_abs", self.stop_loss_abs), ("fd_step", self.fd_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.init_low < self.init_high) {
            return Err(field("init_low", "must be below init_high".into()));
        }
        Ok(())
    }

    pub fn setup(&self) -> QganSetup {
        QganSetup::new(self.experiment).with_real_mode(self.real_mode)
    }

    pub fn grad_options(&self, noise: Option<&NoiseModel>) -> GradOptions {
        GradOptions { fd_step: self.fd_step, shots: self.shots, seed: self.seed, ..GradOptions::default() }
            .with_noise(noise.cloned())
    }

    /// Seeded initial parameters `(θ_D, θ_G)`.
    pub fn initial_params(&self) -> (ParamVector, ParamVector) {
        let setup = self.setup();
        let mut rd = rng::stream(self.seed, Purpose::InitDiscriminator, 0);
        let mut rg = rng::stream(self.seed, Purpose::InitGenerator, 0);
        (
            ParamVector::uniform(&setup.discriminator, self.init_low, self.init_high, &mut rd),
            ParamVector::uniform(&setup.generator, self.init_low, self.init_high, &mut rg),
        )
    }
}

/// `⟨σz_1⟩/2 + 1/2` for one sample.
pub fn score(
    setup: &QganSetup,
    theta_d: &ParamVector,
    theta_g: &ParamVector,
    source: Source,
    label: Option<LabelValue>,
) -> Result<f64> {
    score_with(setup, theta_d, theta_g, source, label, &GradOptions::default(), 0)
}

fn score_with(
    setup: &QganSetup,
    theta_d: &ParamVector,
    theta_g: &ParamVector,
    source: Source,
    label: Option<LabelValue>,
    opts: &GradOptions,
    index: u64,
) -> Result<f64> {
    let inst = assemble_training_circuit(setup, source, label, theta_g, theta_d)?;
    let mut sampler =
        (opts.shots > 0).then(|| rng::stream(opts.seed, Purpose::Sampling, opts.epoch << 24 | 1 << 23 | index));
    let z = measure_z(&inst.circuit, &inst.initial, OBSERVABLE_QUBIT, opts, sampler.as_mut())?;
    Ok(z / 2.0 + 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub v: f64,
    pub scores_r: Vec<f64>,
    pub scores_g: Vec<f64>,
}

impl LossReport {
    pub fn mean_r(&self) -> f64 {
        mean(&self.scores_r)
    }

    pub fn mean_g(&self) -> f64 {
        mean(&self.scores_g)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn loss(setup: &QganSetup, theta_d: &ParamVector, theta_g: &ParamVector) -> Result<LossReport> {
    loss_with(setup, theta_d, theta_g, &GradOptions::default())
}

pub fn loss_with(setup: &QganSetup, theta_d: &ParamVector, theta_g: &ParamVector, opts: &GradOptions) -> Result<LossReport> {
    let labels = setup.labels();
    let mut scores_r = Vec::with_capacity(labels.len());
    let mut scores_g = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        scores_r.push(score_with(setup, theta_d, theta_g, Source::R, label, opts, 2 * i as u64)?);
        scores_g.push(score_with(setup, theta_d, theta_g, Source::G, label, opts, 2 * i as u64 + 1)?);
    }
    let v = mean(&scores_r) - mean(&scores_g);
    if !v.is_finite() {
        return Err(Error::Numerical("loss is not finite".into()));
    }
    Ok(LossReport { v, scores_r, scores_g })
}

/// Reduced generator output on the data qubit.
pub fn generator_output(
    setup: &QganSetup,
    theta_g: &ParamVector,
    label: Option<LabelValue>,
    noise: Option<&NoiseModel>,
) -> Result<DensityMatrix> {
    let circuit = build_generator(&setup.generator, theta_g, label)?;
    let mut state = State::from(ground_state(crate::ansatz::REGISTER_QUBITS)?);
    circuit.run(&mut state, noise)?;
    state.to_density().partial_trace(&[setup.layout.data])
}

/// Mean Uhlmann fidelity between generated and real data-qubit states.
pub fn mean_fidelity(setup: &QganSetup, theta_g: &ParamVector, noise: Option<&NoiseModel>, via_tomography: bool) -> Result<f64> {
    mean_metric(setup, theta_g, noise, via_tomography, state_fidelity)
}

/// Mean of the literal overlap `Tr(ρ_R ρ_G)`, logged next to the fidelity.
pub fn mean_overlap(setup: &QganSetup, theta_g: &ParamVector, noise: Option<&NoiseModel>) -> Result<f64> {
    mean_metric(setup, theta_g, noise, false, trace_overlap)
}

fn mean_metric(
    setup: &QganSetup,
    theta_g: &ParamVector,
    noise: Option<&NoiseModel>,
    via_tomography: bool,
    metric: fn(&DensityMatrix, &DensityMatrix) -> Result<f64>,
) -> Result<f64> {
    let labels = setup.labels();
    let mut total = 0.0;
    for &label in &labels {
        let mut generated = generator_output(setup, theta_g, label, noise)?;
        if via_tomography {
            let g = generated.clone();
            generated = crate::tomo::qst(|p| g.expectation(p), 1)?;
        }
        let real = real_data_state(setup.experiment, label)?;
        total += metric(&real, &generated)?;
    }
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    D,
    G,
}

impl Stage {
    fn side(self) -> Owner {
        match self {
            Stage::D => Owner::D,
            Stage::G => Owner::G,
        }
    }
}

/// One trajectory row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub round: usize,
    pub stage: Stage,
    pub step: usize,
    pub v: f64,
    pub scores_r: Vec<f64>,
    pub scores_g: Vec<f64>,
    pub f_mean: f64,
    pub theta_hash: String,
    /// Parameter snapshot; absent when parsed back from CSV.
    pub theta: Option<(Vec<f64>, Vec<f64>)>,
}

impl Record {
    pub fn mean_r(&self) -> f64 {
        mean(&self.scores_r)
    }

    pub fn mean_g(&self) -> f64 {
        mean(&self.scores_g)
    }
}

/// First 16 hex digits of SHA-256 over the little-endian angle bytes.
pub fn theta_hash(theta_d: &[f64], theta_g: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in theta_d.iter().chain(theta_g) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())[..16].to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradNorm,
    LossPlateau,
    LossSmall,
    StepLimit,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_theta_d: Option<ParamVector>,
    pub final_theta_g: Option<ParamVector>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// `F̄` of the last record of each `stage` stage, in round order.
    pub fn stage_end_fidelities(&self, stage: Stage) -> Vec<f64> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for r in self.records.iter().filter(|r| r.stage == stage) {
            match out.last_mut() {
                Some((round, f)) if *round == r.round => *f = r.f_mean,
                _ => out.push((r.round, r.f_mean)),
            }
        }
        out.into_iter().map(|(_, f)| f).collect()
    }

    /// Every record's `V` equals the difference of its mean scores.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let gap = (r.v - (r.mean_r() - r.mean_g())).abs();
            if !(gap <= tol) {
                return Err(Error::Numerical(format!("record {i}: V differs from its scores by {gap:e}")));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = out;
        writeln!(out, "# qgan-forge v{}", crate::VERSION)?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(CsvRow::from(r))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut records = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            records.push(row?.into_record()?);
        }
        Ok(Self { records, final_theta_d: None, final_theta_g: None })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    round: usize,
    stage: Stage,
    step: usize,
    #[serde(rename = "V")]
    v: f64,
    #[serde(rename = "S_D_R_mean")]
    s_r_mean: f64,
    #[serde(rename = "S_D_G_mean")]
    s_g_mean: f64,
    #[serde(rename = "F_mean")]
    f_mean: f64,
    theta_hash: String,
    #[serde(rename = "S_D_R")]
    s_r: String,
    #[serde(rename = "S_D_G")]
    s_g: String,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Vec<f64>> {
    s.split(';')
        .map(|x| x.parse::<f64>().map_err(|_| Error::Parse(format!("bad score '{x}'"))))
        .collect()
}

impl From<&Record> for CsvRow {
    fn from(r: &Record) -> Self {
        Self {
            round: r.round,
            stage: r.stage,
            step: r.step,
            v: r.v,
            s_r_mean: r.mean_r(),
            s_g_mean: r.mean_g(),
            f_mean: r.f_mean,
            theta_hash: r.theta_hash.clone(),
            s_r: join(&r.scores_r),
            s_g: join(&r.scores_g),
        }
    }
}

impl CsvRow {
    fn into_record(self) -> Result<Record> {
        Ok(Record {
            round: self.round,
            stage: self.stage,
            step: self.step,
            v: self.v,
            scores_r: split(&self.s_r)?,
            scores_g: split(&self.s_g)?,
            f_mean: self.f_mean,
            theta_hash: self.theta_hash,
            theta: None,
        })
    }
}

/// Mutable training state threaded through the stages.
pub struct Trainer {
    pub config: TrainConfig,
    pub setup: QganSetup,
    pub opts: GradOptions,
    pub noise: Option<NoiseModel>,
    pub theta_d: ParamVector,
    pub theta_g: ParamVector,
    pub trajectory: Trajectory,
    pub total_steps: usize,
    /// Whether any D stage has actually optimized the discriminator.
    pub discriminator_engaged: bool,
    epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub steps: usize,
    pub reason: StopReason,
    pub final_v: f64,
}

impl Trainer {
    pub fn new(config: TrainConfig, noise: Option<&NoiseModel>) -> Result<Self> {
        let (theta_d, theta_g) = config.initial_params();
        Self::with_params(config, noise, theta_d, theta_g)
    }

    pub fn with_params(
        config: TrainConfig,
        noise: Option<&NoiseModel>,
        theta_d: ParamVector,
        theta_g: ParamVector,
    ) -> Result<Self> {
        config.validate()?;
        let setup = config.setup();
        setup.validate()?;
        let noise = noise.filter(|m| m.enabled).cloned();
        if let Some(m) = &noise {
            m.validate()?;
        }
        let opts = config.grad_options(noise.as_ref());
        Ok(Self {
            config,
            setup,
            opts,
            noise,
            theta_d,
            theta_g,
            trajectory: Trajectory::default(),
            total_steps: 0,
            discriminator_engaged: false,
            epoch: 0,
        })
    }

    fn next_opts(&mut self) -> GradOptions {
        self.epoch += 1;
        GradOptions { epoch: self.epoch, ..self.opts.clone() }
    }

    pub fn loss(&mut self) -> Result<LossReport> {
        let opts = self.next_opts();
        loss_with(&self.setup, &self.theta_d, &self.theta_g, &opts)
    }

    pub fn fidelity(&self) -> Result<f64> {
        mean_fidelity(&self.setup, &self.theta_g, self.noise.as_ref(), self.config.tomography_fidelity)
    }

    fn record(&mut self, round: usize, stage: Stage, step: usize, report: &LossReport) -> Result<()> {
        let f_mean = self.fidelity()?;
        self.trajectory.records.push(Record {
            round,
            stage,
            step,
            v: report.v,
            scores_r: report.scores_r.clone(),
            scores_g: report.scores_g.clone(),
            f_mean,
            theta_hash: theta_hash(self.theta_d.values(), self.theta_g.values()),
            theta: Some((self.theta_d.values().to_vec(), self.theta_g.values().to_vec())),
        });
        Ok(())
    }

    /// Plain gradient ascent (D, on `V`) or descent (G, on `V²`) until a
    /// stop rule fires.
    pub fn train_stage(&mut self, stage: Stage, round: usize) -> Result<StageOutcome> {
        let side = stage.side();
        let (alpha, limit) = match stage {
            Stage::D => (self.config.alpha_d, self.config.max_steps_d),
            Stage::G => (-self.config.alpha_g, self.config.max_steps_g),
        };
        let mut report = self.loss()?;
        self.record(round, stage, 0, &report)?;
        let entry_v = report.v;
        let done = |reason: StopReason, steps: usize, v: f64| Ok(StageOutcome { steps, reason, final_v: v });
        for step in 1..=limit {
            if stage == Stage::G && report.v * report.v < self.config.stop_loss_abs.powi(2) {
                return done(StopReason::LossSmall, step - 1, report.v);
            }
            if self.total_steps >= self.config.max_total_steps {
                return done(StopReason::Budget, step - 1, report.v);
            }
            let opts = self.next_opts();
            let grad = loss_gradient(side, &self.setup, &self.theta_d, &self.theta_g, self.config.grad_engine, &opts)?;
            if grad.norm() < self.config.stop_grad_norm {
                if stage == Stage::D {
                    self.discriminator_engaged = true;
                }
                return done(StopReason::GradNorm, step - 1, report.v);
            }
            let theta = match stage {
                Stage::D => &mut self.theta_d,
                Stage::G => &mut self.theta_g,
            };
            let updated: Vec<f64> = theta.values().iter().zip(&grad.values).map(|(t, g)| t + alpha * g).collect();
            *theta = theta.with_values(updated)?;
            self.total_steps += 1;
            let previous = report.v;
            report = self.loss()?;
            self.record(round, stage, step, &report)?;
            if stage == Stage::D {
                if report.v - entry_v > D_PLATEAU {
                    self.discriminator_engaged = true;
                }
                if (report.v - previous).abs() < D_PLATEAU {
                    return done(StopReason::LossPlateau, step, report.v);
                }
            }
        }
        done(StopReason::StepLimit, limit, report.v)
    }

    /// Alternates D then G stages until convergence or budget exhaustion.
    pub fn run(&mut self) -> RunStatus {
        match self.run_inner() {
            Ok(status) => status,
            Err(e) => RunStatus::Aborted(e.to_string()),
        }
    }

    fn run_inner(&mut self) -> Result<RunStatus> {
        for round in 1..=self.config.max_rounds {
            let f_start = self.fidelity()?;
            self.train_stage(Stage::D, round)?;
            let g = self.train_stage(Stage::G, round)?;
            let f_end = self.trajectory.last().map(|r| r.f_mean).unwrap_or(f_start);
            let settled = (f_end - f_start).abs() < FIDELITY_PLATEAU;
            if g.final_v.abs() < self.config.stop_loss_abs && settled && self.discriminator_engaged {
                return Ok(RunStatus::Converged);
            }
            if self.total_steps >= self.config.max_total_steps {
                break;
            }
        }
        Ok(RunStatus::BudgetExhausted)
    }

    pub fn finish(mut self) -> Trajectory {
        self.trajectory.final_theta_d = Some(self.theta_d);
        self.trajectory.final_theta_g = Some(self.theta_g);
        self.trajectory
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub status: RunStatus,
    pub trajectory: Trajectory,
    pub total_steps: usize,
}

impl RunResult {
    pub fn final_fidelity(&self) -> Option<f64> {
        self.trajectory.last().map(|r| r.f_mean)
    }

    pub fn final_v(&self) -> Option<f64> {
        self.trajectory.last().map(|r| r.v)
    }
}

/// Full adversarial run from the config's seeded initial parameters.
pub fn run_adversarial(config: &TrainConfig, noise: Option<&NoiseModel>) -> Result<RunResult> {
    let mut trainer = Trainer::new(config.clone(), noise)?;
    let status = trainer.run();
    let total_steps = trainer.total_steps;
    Ok(RunResult { status, trajectory: trainer.finish(), total_steps })
}

/// Side-effect-free re-evaluation of `V` at a record's snapshot.
pub fn recompute_v(config: &TrainConfig, record: &Record) -> Result<f64> {
    let setup = config.setup();
    let (td, tg) = record
        .theta
        .as_ref()
        .ok_or_else(|| Error::Argument("record carries no parameter snapshot".into()))?;
    let theta_d = ParamVector::from_values(&setup.discriminator, td)?;
    let theta_g = ParamVector::from_values(&setup.generator, tg)?;
    Ok(loss(&setup, &theta_d, &theta_g)?.v)
}
