//! qgan-forge: run QGAN experiments, check gradients, tomograph gates.
//!
//! Exit codes: 0 success / converged, 1 error, 2 step budget exhausted
//! (`run`), 3 engine disagreement above tolerance (`grad-check`).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qgan_forge::ansatz::{assemble_training_circuit, Experiment, LabelValue, ParamKey, Source};
use qgan_forge::circuit::Circuit;
use qgan_forge::experiments::{
    ansatz_gradients, gate_qpt, published_gate_fidelity, rx_sweep, truth_table, GradTable, LIBRARY_GATES,
};
use qgan_forge::grad::{circuit_gradient, hadamard_test_circuit, Engine, GradOptions};
use qgan_forge::noise::NoiseModel;
use qgan_forge::qsim::{ground_state, State};
use qgan_forge::train::{mean_overlap, run_adversarial, RunStatus, TrainConfig};
use serde::Serialize;

use config::{load_config, noise_from_flag, Resolved, RunManifest};

/// Engine disagreement above which `grad-check` fails.
const GRAD_CHECK_TOL: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "qgan-forge", version, about = "Quantum GAN simulator and training harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a QGAN from a config file (or replay a manifest).
    Run(RunArgs),
    /// Compare gradient engines on a builtin or saved circuit.
    GradCheck(GradCheckArgs),
    /// Process tomography of a library gate.
    Qpt(QptArgs),
    /// Print a training circuit in the line-oriented text format.
    DumpCircuit(DumpArgs),
}

#[derive(Args)]
struct Common {
    /// off, table-s1, or a TOML file with a noise section.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shots per expectation value; 0 means exact.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "replay")]
    config: Option<PathBuf>,
    /// Re-run exactly what a previous manifest.json describes.
    #[arg(long, conflicts_with = "config")]
    replay: Option<PathBuf>,
    /// hadamard, shift or fd.
    #[arg(long)]
    engine: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GradCheckArgs {
    /// rx-sweep, xor, mixed, or a circuit file from dump-circuit.
    #[arg(long, default_value = "rx-sweep")]
    circuit: String,
    /// Comma-separated engine list (at least two).
    #[arg(long, default_value = "hadamard,shift,fd")]
    engines: String,
    /// Number of sweep points over [0, 2π).
    #[arg(long, default_value_t = 25)]
    steps: usize,
    /// Idle on the ancilla between the two controlled gates, in ns.
    #[arg(long, default_value_t = 0.0)]
    delay_ns: f64,
    /// Protect the ancilla idle from dephasing.
    #[arg(long)]
    dd: bool,
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct QptArgs {
    /// One of the library gates.
    #[arg(long)]
    gate: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DumpArgs {
    /// mixed_state or xor (ignored with --config).
    #[arg(long, default_value = "xor")]
    experiment: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// g or r.
    #[arg(long, default_value = "g")]
    source: String,
    /// Two-bit label for XOR circuits.
    #[arg(long, default_value = "00")]
    label: String,
    /// Emit the Hadamard-test circuit for this parameter (e.g. x:3:1:G).
    #[arg(long)]
    gradient: Option<String>,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::GradCheck(a) => cmd_grad_check(a),
        Command::Qpt(a) => cmd_qpt(a),
        Command::DumpCircuit(a) => cmd_dump(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("QGAN_FORGE_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow!("QGAN_FORGE_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            bail!("QGAN_FORGE_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn resolve_noise(flag: Option<&str>, default: NoiseModel) -> Result<NoiseModel> {
    match flag {
        Some(f) => noise_from_flag(f),
        None => Ok(default),
    }
}

#[derive(Serialize)]
struct FinalParams<'a> {
    experiment: Experiment,
    status: &'a RunStatus,
    total_steps: usize,
    final_v: Option<f64>,
    final_fidelity: Option<f64>,
    /// Mean `Tr(ρ_R ρ_G)`, for comparison with the fidelity.
    final_overlap: f64,
    theta_d: &'a qgan_forge::ansatz::ParamVector,
    theta_g: &'a qgan_forge::ansatz::ParamVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_table: Option<Vec<qgan_forge::experiments::TruthRow>>,
}

fn cmd_run(a: RunArgs) -> Result<u8> {
    let (manifest, out) = match &a.replay {
        Some(path) => {
            let mut m = RunManifest::load(path)?;
            let out = a.common.out.clone().unwrap_or_else(|| m.output_dir.clone());
            m.output_dir = out.clone();
            (m, out)
        }
        None => {
            let path = a.config.as_ref().expect("clap enforces --config");
            let Resolved { mut train, noise } = load_config(path)?;
            let noise = resolve_noise(a.common.noise.as_deref(), noise)?;
            if let Some(seed) = a.common.seed {
                train.seed = seed;
            }
            if let Some(shots) = a.common.shots {
                train.shots = shots;
            }
            if let Some(e) = &a.engine {
                train.grad_engine = e.parse()?;
            }
            let out = a.common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(train.experiment.name()));
            let m = RunManifest {
                subcommand: "run".into(),
                config_path: Some(path.clone()),
                seed: train.seed,
                train,
                noise,
                artifact_version: qgan_forge::VERSION.into(),
                output_dir: out.clone(),
            };
            (m, out)
        }
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("manifest.json"), &manifest)?;

    let mut train = manifest.train.clone();
    train.seed = manifest.seed;
    let noise = manifest.noise.enabled.then_some(&manifest.noise);
    let result = run_adversarial(&train, noise)?;
    let traj = &result.trajectory;
    let csv = fs::File::create(out.join("trajectory.csv"))?;
    traj.write_csv(std::io::BufWriter::new(csv))?;

    let theta_d = traj.final_theta_d.as_ref().expect("set by run");
    let theta_g = traj.final_theta_g.as_ref().expect("set by run");
    let table = match train.experiment {
        Experiment::Xor => Some(truth_table(&train.setup(), theta_g)?),
        Experiment::MixedState => None,
    };
    let overlap = mean_overlap(&train.setup(), theta_g, noise)?;
    write_json(
        &out.join("final_params.json"),
        &FinalParams {
            experiment: train.experiment,
            status: &result.status,
            total_steps: result.total_steps,
            final_v: result.final_v(),
            final_fidelity: result.final_fidelity(),
            final_overlap: overlap,
            theta_d,
            theta_g,
            truth_table: table.clone(),
        },
    )?;

    println!("experiment {}  seed {}  engine {}", train.experiment.name(), train.seed, train.grad_engine);
    println!(
        "steps {}  V {:.6}  F {:.6}  Tr(rho_R rho_G) {:.6}",
        result.total_steps,
        result.final_v().unwrap_or(f64::NAN),
        result.final_fidelity().unwrap_or(f64::NAN),
        overlap
    );
    if let Some(rows) = &table {
        println!("truth table (label -> P(1) -> output):");
        for r in rows {
            let mark = if r.output == r.expected { String::new() } else { format!("  (expected {})", u8::from(r.expected)) };
            println!("  {} -> {:.4} -> {}{mark}", r.label, r.p1, u8::from(r.output));
        }
    }
    println!("wrote {}", out.display());
    match &result.status {
        RunStatus::Converged => {
            println!("status converged");
            Ok(0)
        }
        RunStatus::BudgetExhausted => {
            println!("status budget exhausted");
            Ok(2)
        }
        RunStatus::Aborted(msg) => bail!("run aborted: {msg}"),
    }
}

fn parse_engines(list: &str) -> Result<Vec<Engine>> {
    let engines = list.split(',').map(|s| s.trim().parse::<Engine>()).collect::<Result<Vec<_>, _>>()?;
    if engines.len() < 2 {
        bail!("grad-check needs at least two engines, got {}", engines.len());
    }
    Ok(engines)
}

fn print_table(table: &GradTable) {
    let mut header = format!("{:<14}", "parameter");
    for e in &table.engines {
        header.push_str(&format!(" {:>14}", e.short_name()));
    }
    if table.rows.iter().any(|r| r.reference.is_some()) {
        header.push_str(&format!(" {:>14}", "-sin(theta)"));
    }
    println!("{header}");
    for r in &table.rows {
        let mut line = format!("{:<14}", r.name);
        for v in &r.values {
            line.push_str(&format!(" {v:>14.9}"));
        }
        if let Some(x) = r.reference {
            line.push_str(&format!(" {x:>14.9}"));
        }
        println!("{line}");
    }
}

fn cmd_grad_check(a: GradCheckArgs) -> Result<u8> {
    let engines = parse_engines(&a.engines)?;
    let noise = resolve_noise(a.common.noise.as_deref(), NoiseModel::disabled())?.with_dd(a.dd);
    let noisy = noise.enabled;
    let opts = GradOptions {
        ancilla_delay_ns: a.delay_ns,
        fd_step: a.fd_step,
        shots: a.common.shots.unwrap_or(0),
        seed: a.common.seed.unwrap_or(0),
        ..GradOptions::default()
    }
    .with_noise(Some(noise));
    let table = match a.circuit.as_str() {
        "rx-sweep" => rx_sweep(a.steps, &engines, &opts)?,
        "xor" | "mixed" => {
            let experiment = if a.circuit == "xor" { Experiment::Xor } else { Experiment::MixedState };
            let config = TrainConfig::preset(experiment).with_seed(a.common.seed.unwrap_or(1));
            let (td, tg) = config.initial_params();
            let label = (experiment == Experiment::Xor).then_some(LabelValue::ALL[3]);
            ansatz_gradients(&config.setup(), label, &tg, &td, &engines, &opts)?
        }
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading circuit {path}"))?;
            let circuit = Circuit::from_text(&text)?;
            let initial = State::from(ground_state(circuit.n_qubits())?);
            let rows = circuit
                .param_keys()
                .iter()
                .map(|k| {
                    let values = engines
                        .iter()
                        .map(|&e| circuit_gradient(e, &circuit, &initial, k, &opts))
                        .collect::<qgan_forge::Result<Vec<_>>>()?;
                    Ok(qgan_forge::experiments::GradRow { name: k.code(), values, reference: None })
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.is_empty() {
                bail!("{path} binds no parameters");
            }
            GradTable { engines: engines.clone(), rows }
        }
    };
    print_table(&table);
    for (i, &x) in engines.iter().enumerate() {
        for &y in &engines[i + 1..] {
            let d = table.max_disagreement(x, y).expect("both columns present");
            println!("max |{x} - {y}| = {d:.3e}");
        }
        if let Some(mae) = table.mean_abs_error(x) {
            println!("mean |{x} - (-sin theta)| = {mae:.6e}");
        }
    }
    if let Some(dir) = &a.common.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("grad_check.csv"), table.to_csv())?;
    }
    if noisy || opts.shots > 0 {
        return Ok(0);
    }
    let mut worst: f64 = 0.0;
    if engines.contains(&Engine::FiniteDiff) {
        for &e in engines.iter().filter(|&&e| e != Engine::FiniteDiff) {
            worst = worst.max(table.max_disagreement(e, Engine::FiniteDiff).expect("present"));
        }
    } else {
        worst = table.max_disagreement(engines[0], engines[1]).expect("present");
    }
    if worst > GRAD_CHECK_TOL {
        eprintln!("engines disagree by {worst:.3e} (tolerance {GRAD_CHECK_TOL:e})");
        return Ok(3);
    }
    Ok(0)
}

fn cmd_qpt(a: QptArgs) -> Result<u8> {
    if !LIBRARY_GATES.contains(&a.gate.as_str()) {
        bail!("unknown gate '{}' (known: {})", a.gate, LIBRARY_GATES.join(", "));
    }
    let noise = resolve_noise(a.common.noise.as_deref(), NoiseModel::disabled())?;
    let noise_ref = noise.enabled.then_some(&noise);
    let q = match a.common.shots.unwrap_or(0) {
        0 => gate_qpt(&a.gate, noise_ref)?,
        shots => {
            let gate = qgan_forge::experiments::library_gate(&a.gate)?;
            let chi_exp = qgan_forge::tomo::qpt_sampled(
                |rho| gate.apply(rho, noise_ref),
                gate.qubits.len(),
                shots,
                a.common.seed.unwrap_or(0),
            )?;
            let chi_id = qgan_forge::tomo::ideal_chi(&gate.ideal)?;
            let fidelity = qgan_forge::tomo::process_fidelity(&chi_exp, &chi_id)?;
            qgan_forge::experiments::GateQpt { gate: gate.name, chi_exp, chi_id, fidelity }
        }
    };
    let out = a.common.out.clone().unwrap_or_else(|| PathBuf::from("qpt").join(&a.gate));
    fs::create_dir_all(&out)?;
    write_json(&out.join("chi_exp.json"), &q.chi_exp.to_json())?;
    write_json(&out.join("chi_id.json"), &q.chi_id.to_json())?;
    println!("gate {}  noise {}", q.gate, if noise.enabled { "on" } else { "off" });
    println!("process fidelity tr(chi_exp chi_id) = {:.6}", q.fidelity);
    if let Some((mean, spread)) = published_gate_fidelity(&a.gate) {
        println!("hardware reference: {mean:.4} +/- {spread:.4}");
    }
    println!("wrote {}", out.display());
    Ok(0)
}

fn cmd_dump(a: DumpArgs) -> Result<u8> {
    let mut config = match &a.config {
        Some(p) => load_config(p)?.train,
        None => TrainConfig::preset(a.experiment.parse()?),
    };
    if let Some(seed) = a.common.seed {
        config.seed = seed;
    }
    let source = match a.source.to_ascii_lowercase().as_str() {
        "g" => Source::G,
        "r" => Source::R,
        other => bail!("--source must be g or r, got '{other}'"),
    };
    let label = match config.experiment {
        Experiment::Xor => Some(a.label.parse::<LabelValue>()?),
        Experiment::MixedState => None,
    };
    let setup = config.setup().with_real_mode(qgan_forge::ansatz::RealMode::Resimulate);
    let (td, tg) = config.initial_params();
    let inst = assemble_training_circuit(&setup, source, label, &tg, &td)?;
    let circuit = match &a.gradient {
        Some(code) => hadamard_test_circuit(&inst.circuit, &ParamKey::from_code(code)?, 0.0)?,
        None => inst.circuit,
    };
    let text = circuit.to_text();
    match &a.common.out {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}
