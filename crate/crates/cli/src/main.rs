//! `qmeta`: run state-learning experiments, agent training, tomography
//! baselines, and scaling fits from the command line.

mod manifest;

use clap::{Args, Parser, Subcommand};
use manifest::RunManifest;
use qmeta_core::agent::ActionGrid;
use qmeta_core::analysis::{fit_scaling, summarize};
use qmeta_core::es::{
    run_learning, Action, EsConfig, LearnEnv, LearnOutcome, OutcomeRecord, PolicySource,
    UpdateRule,
};
use qmeta_core::metatrain::{
    evaluate_agent, run_training, Checkpoint, EvalConfig, TrainingConfig,
};
use qmeta_core::qsim::{
    depolarize, haar_random_state, shen_castan_state, state_from_json, state_to_json,
    subsystem_entropy, HeaSpec, QuantumState,
};
use qmeta_core::qst::{build_settings, tomography_run, QstRecord, RrhorConfig, ShotMode};
use qmeta_core::seed::{derive_subseed, subseed_rng};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "qmeta",
    version,
    about = "Measurement-driven quantum state learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train the hyperparameter agent over episodes of learning runs.
    TrainAgent(TrainAgentArgs),
    /// Learn target states with a fixed action or a trained agent.
    Learn(LearnArgs),
    /// Sweep every fixed action of the four-decade grid.
    BaselineGrid(BaselineGridArgs),
    /// Maximum-likelihood tomography baseline runs.
    Qst(QstArgs),
    /// Fit the power law between measurement cost and infidelity.
    FitScaling(FitScalingArgs),
    /// Generate or inspect target state files.
    State(StateArgs),
    /// Evaluate a trained agent checkpoint across target counts.
    Evaluate(EvaluateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let result = match cli.command {
        Command::TrainAgent(args) => cmd_train_agent(args),
        Command::Learn(args) => cmd_learn(args),
        Command::BaselineGrid(args) => cmd_baseline_grid(args),
        Command::Qst(args) => cmd_qst(args),
        Command::FitScaling(args) => cmd_fit_scaling(args),
        Command::State(args) => cmd_state(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn init_thread_pool() -> CliResult<()> {
    if let Ok(raw) = std::env::var("QMETA_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| format!("QMETA_THREADS must be a positive integer, got {raw:?}"))?;
        if n == 0 {
            return Err("QMETA_THREADS must be a positive integer".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn defaults_for_qubits(n: usize) -> (usize, usize, u64) {
    // (layers, k, t_max) per settings-table row; five qubits and up reuse
    // the deepest row.
    match n {
        1 => (0, 5, 10_000),
        2 => (1, 10, 100_000),
        3 => (5, 30, 1_000_000),
        _ => (10, 100, 1_000_000),
    }
}

fn parse_action(text: &str) -> CliResult<Action> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("--action expects \"sigma,eta\", got {text:?}").into());
    }
    let sigma: f64 = parts[0].trim().parse()?;
    let eta: f64 = parts[1].trim().parse()?;
    if sigma <= 0.0 || eta < 0.0 {
        return Err("--action needs sigma > 0 and eta >= 0".into());
    }
    Ok(Action { sigma, eta, grid_index: 0 })
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("reading {}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let inner = value.get("checkpoint").cloned().unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

fn load_state_file(path: &Path) -> CliResult<QuantumState> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("reading {}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let inner = value.get("state").cloned().unwrap_or(value);
    Ok(state_from_json(&inner)?)
}

fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_lines(path: &Path, lines: &[String]) -> CliResult<()> {
    let mut file = fs::File::create(path)?;
    for line in lines {
        writeln!(file, "{line}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// learn

#[derive(Args)]
struct LearnArgs {
    /// Number of qubits of the target states.
    #[arg(long, default_value_t = 1)]
    qubits: usize,
    /// Entangling layers (defaults to the settings-table row for the
    /// qubit count).
    #[arg(long)]
    layers: Option<usize>,
    /// Success count that halts a run.
    #[arg(long = "c-target", default_value_t = 10_000)]
    c_target: u64,
    /// Independent learning instances.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Fixed hyperparameters as "sigma,eta".
    #[arg(long)]
    action: Option<String>,
    /// Trained agent checkpoint steering hyperparameters instead.
    #[arg(long)]
    agent: Option<PathBuf>,
    /// Argmax action selection for --agent runs.
    #[arg(long, default_value_t = false)]
    greedy: bool,
    /// Perturbation population size (defaults per qubit count).
    #[arg(long)]
    k: Option<usize>,
    /// Step limit per run (defaults per qubit count).
    #[arg(long = "t-max")]
    t_max: Option<u64>,
    /// Steps between hyperparameter refreshes.
    #[arg(long = "t-rep", default_value_t = 1)]
    t_rep: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learn this state file instead of fresh Haar-random targets.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Depolarization strength applied to pure targets.
    #[arg(long)]
    depolarize: Option<f64>,
    #[arg(long = "out-dir", default_value = "runs/learn")]
    out_dir: PathBuf,
}

enum RunPolicy {
    Fixed(Action),
    Agent { checkpoint: Checkpoint, grid: ActionGrid, greedy: bool },
}

fn cmd_learn(args: LearnArgs) -> CliResult<()> {
    if args.qubits < 1 {
        return Err("--qubits must be >= 1".into());
    }
    let (default_layers, default_k, default_t_max) = defaults_for_qubits(args.qubits);
    let layers = args.layers.unwrap_or(default_layers);
    let k = args.k.unwrap_or(default_k);
    let t_max = args.t_max.unwrap_or(default_t_max);
    let spec = HeaSpec::standard(args.qubits, layers)?;

    let policy = match (&args.action, &args.agent) {
        (Some(text), None) => RunPolicy::Fixed(parse_action(text)?),
        (None, Some(path)) => {
            let checkpoint = load_checkpoint(path)?;
            let grid = checkpoint.grid.build();
            RunPolicy::Agent { checkpoint, grid, greedy: args.greedy }
        }
        (Some(_), Some(_)) => return Err("--action and --agent are mutually exclusive".into()),
        (None, None) => return Err("one of --action or --agent is required".into()),
    };

    let loaded_state = match &args.state {
        Some(path) => {
            let state = load_state_file(path)?;
            if state.n_qubits() != args.qubits {
                return Err(format!(
                    "state file has {} qubits, --qubits says {}",
                    state.n_qubits(),
                    args.qubits
                )
                .into());
            }
            Some(state)
        }
        None => None,
    };
    if let (Some(mu), Some(QuantumState::Mixed(_))) = (args.depolarize, &loaded_state) {
        return Err(format!("cannot depolarize (mu = {mu}) an already mixed state file").into());
    }

    let es_cfg = EsConfig {
        k,
        c_target: args.c_target,
        t_max,
        t_rep: args.t_rep,
        update_rule: UpdateRule::CenteredStandardized,
    };
    es_cfg.validate()?;

    let outcomes: Vec<LearnOutcome> = (0..args.instances)
        .into_par_iter()
        .map(|i| -> qmeta_core::Result<LearnOutcome> {
            let mut rng = subseed_rng(args.seed, i as u64, "learn");
            let target = match &loaded_state {
                Some(state) => match (args.depolarize, state) {
                    (Some(mu), QuantumState::Pure(psi)) => {
                        QuantumState::Mixed(depolarize(psi, mu)?)
                    }
                    _ => state.clone(),
                },
                None => {
                    let psi = haar_random_state(args.qubits, &mut rng);
                    match args.depolarize {
                        Some(mu) => QuantumState::Mixed(depolarize(&psi, mu)?),
                        None => QuantumState::Pure(psi),
                    }
                }
            };
            let env = LearnEnv::new(&target, &spec);
            let source = match &policy {
                RunPolicy::Fixed(action) => PolicySource::Fixed(*action),
                RunPolicy::Agent { checkpoint, grid, greedy } => PolicySource::Agent {
                    actor: &checkpoint.actor,
                    grid,
                    greedy: *greedy,
                },
            };
            run_learning(&env, &source, &es_cfg, &mut rng)
        })
        .collect::<qmeta_core::Result<Vec<_>>>()?;

    let mut config = serde_json::json!({
        "qubits": args.qubits,
        "layers": layers,
        "k": k,
        "c_target": args.c_target,
        "t_max": t_max,
        "t_rep": args.t_rep,
        "instances": args.instances,
        "seed": args.seed,
        "depolarize": args.depolarize,
        "update_rule": "centered-standardized",
    });
    match &policy {
        RunPolicy::Fixed(a) => {
            config["action"] = serde_json::json!({"sigma": a.sigma, "eta": a.eta});
        }
        RunPolicy::Agent { checkpoint, greedy, .. } => {
            config["agent"] = serde_json::json!({
                "episode": checkpoint.episode,
                "grid": checkpoint.grid,
                "greedy": greedy,
                "digest": file_digest(args.agent.as_ref().unwrap())?,
            });
        }
    }
    if let Some(path) = &args.state {
        config["state_digest"] = serde_json::Value::String(file_digest(path)?);
    }

    fs::create_dir_all(&args.out_dir)?;
    let run_manifest = RunManifest::new(
        "learn",
        config,
        args.seed,
        vec!["outcomes.jsonl".to_string()],
    );
    let mut lines = vec![run_manifest.jsonl_header()];
    for (i, outcome) in outcomes.iter().enumerate() {
        let record = OutcomeRecord::from_outcome(outcome, i as u64, args.seed, &spec, args.c_target);
        lines.push(serde_json::to_string(&record)?);
    }
    write_lines(&args.out_dir.join("outcomes.jsonl"), &lines)?;
    run_manifest.write(&args.out_dir)?;

    let summary = summarize(&outcomes)?;
    println!(
        "instances={} halt_fraction={:.4} mean_c_total={:.6e} mean_infidelity={:.6e} mean_fidelity={:.6} mean_t_h={:.1}",
        summary.n,
        summary.halt_fraction,
        summary.mean_c_total,
        summary.mean_infidelity,
        1.0 - summary.mean_infidelity,
        summary.mean_t_h,
    );
    println!("manifest_id={}", run_manifest.manifest_id);
    Ok(())
}

// ---------------------------------------------------------------------------
// baseline-grid

#[derive(Args)]
struct BaselineGridArgs {
    #[arg(long, default_value_t = 1)]
    qubits: usize,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long = "c-target", default_value_t = 10_000)]
    c_target: u64,
    /// Instances per grid cell; every cell sees the same targets.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "t-max")]
    t_max: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "out-dir", default_value = "runs/baseline-grid")]
    out_dir: PathBuf,
}

fn cmd_baseline_grid(args: BaselineGridArgs) -> CliResult<()> {
    let (default_layers, default_k, default_t_max) = defaults_for_qubits(args.qubits);
    let layers = args.layers.unwrap_or(default_layers);
    let k = args.k.unwrap_or(default_k);
    let t_max = args.t_max.unwrap_or(default_t_max);
    let spec = HeaSpec::standard(args.qubits, layers)?;
    let grid = ActionGrid::table1_16();
    let es_cfg = EsConfig {
        k,
        c_target: args.c_target,
        t_max,
        t_rep: t_max,
        update_rule: UpdateRule::CenteredStandardized,
    };
    es_cfg.validate()?;

    let targets: Vec<QuantumState> = (0..args.instances)
        .map(|i| {
            let mut rng = subseed_rng(args.seed, i as u64, "target");
            QuantumState::Pure(haar_random_state(args.qubits, &mut rng))
        })
        .collect();

    struct Cell {
        action: Action,
        summary: qmeta_core::analysis::Summary,
        median_c_total: f64,
    }

    let cells: Vec<Cell> = (0..grid.len())
        .map(|cell_index| -> CliResult<Cell> {
            let action = grid.action(cell_index);
            let cell_seed = derive_subseed(args.seed, cell_index as u64, "cell");
            let outcomes: Vec<LearnOutcome> = targets
                .par_iter()
                .enumerate()
                .map(|(i, target)| {
                    let mut rng = subseed_rng(cell_seed, i as u64, "learn");
                    let env = LearnEnv::new(target, &spec);
                    run_learning(&env, &PolicySource::Fixed(action), &es_cfg, &mut rng)
                })
                .collect::<qmeta_core::Result<Vec<_>>>()?;
            let mut totals: Vec<f64> = outcomes.iter().map(|o| o.c_total as f64).collect();
            totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median_c_total = if totals.len() % 2 == 1 {
                totals[totals.len() / 2]
            } else {
                0.5 * (totals[totals.len() / 2 - 1] + totals[totals.len() / 2])
            };
            Ok(Cell { action, summary: summarize(&outcomes)?, median_c_total })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let config = serde_json::json!({
        "qubits": args.qubits,
        "layers": layers,
        "k": k,
        "c_target": args.c_target,
        "t_max": t_max,
        "instances": args.instances,
        "seed": args.seed,
        "grid": "table16",
    });
    fs::create_dir_all(&args.out_dir)?;
    let run_manifest =
        RunManifest::new("baseline-grid", config, args.seed, vec!["grid.csv".to_string()]);
    let mut lines = vec![
        run_manifest.csv_header(),
        "sigma,eta,n,halt_fraction,mean_c_total,median_c_total,mean_infidelity,mean_t_h"
            .to_string(),
    ];
    for cell in &cells {
        lines.push(format!(
            "{},{},{},{},{},{},{},{}",
            cell.action.sigma,
            cell.action.eta,
            cell.summary.n,
            cell.summary.halt_fraction,
            cell.summary.mean_c_total,
            cell.median_c_total,
            cell.summary.mean_infidelity,
            cell.summary.mean_t_h,
        ));
    }
    write_lines(&args.out_dir.join("grid.csv"), &lines)?;
    run_manifest.write(&args.out_dir)?;

    println!("cell results (rows sigma, columns eta):");
    println!(
        "{:>8} {:>22} {:>22} {:>22} {:>22}",
        "", "eta=1.0", "eta=0.1", "eta=0.01", "eta=0.001"
    );
    for si in 0..grid.sigmas.len() {
        let mut row = format!("{:>8}", format!("s={}", grid.sigmas[si]));
        for ei in 0..grid.etas.len() {
            let cell = &cells[si * grid.etas.len() + ei];
            row.push_str(&format!(
                " {:>22}",
                format!(
                    "halt={:.2} C={:.2e}",
                    cell.summary.halt_fraction, cell.summary.mean_c_total
                )
            ));
        }
        println!("{row}");
    }
    println!("manifest_id={}", run_manifest.manifest_id);
    Ok(())
}

// ---------------------------------------------------------------------------
// qst

#[derive(Args)]
struct QstArgs {
    #[arg(long, default_value_t = 1)]
    qubits: usize,
    /// Shots per measurement setting.
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    /// Exact Born probabilities instead of finite shots.
    #[arg(long, default_value_t = false)]
    exact: bool,
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long = "max-iters", default_value_t = 5_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long = "out-dir", default_value = "runs/qst")]
    out_dir: PathBuf,
}

fn cmd_qst(args: QstArgs) -> CliResult<()> {
    let settings = build_settings(args.qubits)?;
    let mode = if args.exact { ShotMode::Exact } else { ShotMode::Finite(args.shots) };
    let config = RrhorConfig { alpha: args.alpha, max_iters: args.max_iters, tol: args.tol };

    let records: Vec<QstRecord> = (0..args.instances)
        .into_par_iter()
        .map(|i| -> qmeta_core::Result<QstRecord> {
            let mut rng = subseed_rng(args.seed, i as u64, "qst");
            let psi = haar_random_state(args.qubits, &mut rng);
            let (record, _) =
                tomography_run(&psi, &settings, mode, &config, i as u64, &mut rng)?;
            Ok(record)
        })
        .collect::<qmeta_core::Result<Vec<_>>>()?;

    let config_json = serde_json::json!({
        "qubits": args.qubits,
        "shots": args.shots,
        "exact": args.exact,
        "instances": args.instances,
        "seed": args.seed,
        "alpha": args.alpha,
        "max_iters": args.max_iters,
        "tol": args.tol,
    });
    fs::create_dir_all(&args.out_dir)?;
    let run_manifest =
        RunManifest::new("qst", config_json, args.seed, vec!["qst.csv".to_string()]);
    let mut lines = vec![
        run_manifest.csv_header(),
        "instance,n_qubits,shots_per_setting,total_shots,infidelity,iterations,loglik"
            .to_string(),
    ];
    for r in &records {
        lines.push(format!(
            "{},{},{},{},{},{},{}",
            r.instance_id,
            r.n_qubits,
            r.shots_per_setting,
            r.total_shots,
            r.infidelity,
            r.iterations,
            r.log_likelihood,
        ));
    }
    write_lines(&args.out_dir.join("qst.csv"), &lines)?;
    run_manifest.write(&args.out_dir)?;

    let mean_inf = records.iter().map(|r| r.infidelity).sum::<f64>() / records.len() as f64;
    let mean_iters =
        records.iter().map(|r| r.iterations as f64).sum::<f64>() / records.len() as f64;
    println!(
        "instances={} mean_infidelity={:.6e} mean_iterations={:.1}",
        records.len(),
        mean_inf,
        mean_iters,
    );
    println!("manifest_id={}", run_manifest.manifest_id);
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-scaling

#[derive(Args)]
struct FitScalingArgs {
    /// Outcome JSONL or tomography CSV files; repeatable.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long, default_value = "fit.json")]
    out: PathBuf,
}

fn read_scaling_points(path: &Path) -> CliResult<BTreeMap<u64, Vec<(f64, f64)>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("reading {}: {e}", path.display()))?;
    let mut groups: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    let name = path.to_string_lossy();
    if name.ends_with(".jsonl") {
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line)?;
            if value.get("type").and_then(|t| t.as_str()) == Some("manifest") {
                continue;
            }
            let record: OutcomeRecord = serde_json::from_value(value)?;
            groups
                .entry(record.c_target)
                .or_default()
                .push((record.c_total as f64, record.infidelity));
        }
    } else {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines.next().ok_or("empty CSV")?;
        let columns: Vec<&str> = header.split(',').collect();
        let shots_col = columns
            .iter()
            .position(|c| *c == "total_shots")
            .ok_or("CSV lacks a total_shots column")?;
        let inf_col = columns
            .iter()
            .position(|c| *c == "infidelity")
            .ok_or("CSV lacks an infidelity column")?;
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            let shots: u64 = fields[shots_col].parse()?;
            let infidelity: f64 = fields[inf_col].parse()?;
            groups.entry(shots).or_default().push((shots as f64, infidelity));
        }
    }
    Ok(groups)
}

fn cmd_fit_scaling(args: FitScalingArgs) -> CliResult<()> {
    let mut groups: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    let mut digests = Vec::new();
    for path in &args.input {
        digests.push(file_digest(path)?);
        for (key, mut points) in read_scaling_points(path)? {
            groups.entry(key).or_default().append(&mut points);
        }
    }
    let points: Vec<(f64, f64)> = groups
        .values()
        .map(|group| {
            let n = group.len() as f64;
            let x = group.iter().map(|(c, _)| c).sum::<f64>() / n;
            let y = group.iter().map(|(_, f)| f).sum::<f64>() / n;
            (x, y)
        })
        .collect();
    let fit = fit_scaling(&points)?;

    let config = serde_json::json!({
        "inputs": digests,
        "groups": groups.keys().collect::<Vec<_>>(),
    });
    let run_manifest = RunManifest::new(
        "fit-scaling",
        config,
        0,
        vec![args.out.to_string_lossy().into_owned()],
    );
    #[derive(Serialize)]
    struct FitOutput<'a> {
        manifest_id: &'a str,
        alpha: f64,
        beta: f64,
        r_squared: f64,
        n_points: usize,
        points: Vec<(f64, f64)>,
    }
    let output = FitOutput {
        manifest_id: &run_manifest.manifest_id,
        alpha: fit.alpha,
        beta: fit.beta,
        r_squared: fit.r_squared,
        n_points: fit.n_points,
        points,
    };
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&args.out, serde_json::to_string_pretty(&output)? + "\n")?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            run_manifest.write(dir)?;
        } else {
            run_manifest.write(Path::new("."))?;
        }
    }
    println!(
        "alpha={:.6e} beta={:.4} r_squared={:.4} n_points={}",
        fit.alpha, fit.beta, fit.r_squared, fit.n_points
    );
    println!("manifest_id={}", run_manifest.manifest_id);
    Ok(())
}

// ---------------------------------------------------------------------------
// state

#[derive(Args)]
struct StateArgs {
    #[command(subcommand)]
    command: StateCommand,
}

#[derive(Subcommand)]
enum StateCommand {
    /// Write a target state file.
    Gen(StateGenArgs),
    /// Print diagnostics of a state file.
    Info { file: PathBuf },
}

#[derive(Args)]
struct StateGenArgs {
    #[command(subcommand)]
    kind: StateKind,
}

#[derive(Subcommand)]
enum StateKind {
    /// Haar-random pure state.
    Haar {
        #[arg(long, default_value_t = 1)]
        qubits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// The 32×32 exponential-kernel five-qubit state.
    ShenCastan {
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_state_file(
    state: &QuantumState,
    out: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
) -> CliResult<()> {
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let run_manifest = RunManifest::new(
        command,
        config,
        seed,
        vec![out.to_string_lossy().into_owned()],
    );
    let wrapper = serde_json::json!({
        "manifest_id": run_manifest.manifest_id,
        "state": state_to_json(state),
    });
    fs::write(out, serde_json::to_string(&wrapper)? + "\n")?;
    let manifest_path = out.with_extension("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&run_manifest)? + "\n",
    )?;
    println!("wrote {}", out.display());
    println!("manifest_id={}", run_manifest.manifest_id);
    Ok(())
}

fn cmd_state(args: StateArgs) -> CliResult<()> {
    match args.command {
        StateCommand::Gen(gen) => match gen.kind {
            StateKind::Haar { qubits, seed, out } => {
                let mut rng = subseed_rng(seed, 0, "state-gen");
                let psi = haar_random_state(qubits, &mut rng);
                let config = serde_json::json!({"kind": "haar", "qubits": qubits, "seed": seed});
                write_state_file(&QuantumState::Pure(psi), &out, "state-gen", config, seed)
            }
            StateKind::ShenCastan { out } => {
                let rho = shen_castan_state();
                let config = serde_json::json!({"kind": "shen-castan"});
                write_state_file(&QuantumState::Mixed(rho), &out, "state-gen", config, 0)
            }
        },
        StateCommand::Info { file } => {
            let state = load_state_file(&file)?;
            println!("n_qubits={}", state.n_qubits());
            match &state {
                QuantumState::Pure(psi) => {
                    let norm: f64 = psi.amplitudes().iter().map(|a| a.norm_sqr()).sum();
                    println!("kind=pure");
                    println!("norm={norm:.12}");
                }
                QuantumState::Mixed(rho) => {
                    println!("kind=mixed");
                    println!("purity={:.12}", rho.purity());
                    println!("min_eigenvalue={:.3e}", rho.min_eigenvalue());
                    for q in 0..rho.n_qubits() {
                        println!(
                            "subsystem_entropy_{q}={:.6}",
                            subsystem_entropy(rho, q)?
                        );
                    }
                }
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// train-agent

#[derive(Args)]
struct TrainAgentArgs {
    /// Settings-table preset: 1q, 2q, or 3q.
    #[arg(long, default_value = "1q")]
    preset: String,
    /// Full training configuration as TOML (overrides the preset).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long = "c-target")]
    c_target: Option<u64>,
    #[arg(long = "t-max")]
    t_max: Option<u64>,
    /// Resume from this checkpoint (empty replay buffer).
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long = "out-dir", default_value = "runs/train-agent")]
    out_dir: PathBuf,
}

fn resolve_training_config(args: &TrainAgentArgs) -> CliResult<TrainingConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            toml::from_str::<TrainingConfig>(&text)
                .map_err(|e| format!("config {}: {e}", path.display()))?
        }
        None => match args.preset.as_str() {
            "1q" => TrainingConfig::table1_1q(0),
            "2q" => TrainingConfig::table1_2q(0),
            "3q" => TrainingConfig::table1_3q(0),
            other => return Err(format!("unknown preset {other:?}; use 1q, 2q, or 3q").into()),
        },
    };
    if let Some(v) = args.episodes {
        config.episodes = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.instances {
        config.instances_per_episode = v;
    }
    if let Some(v) = args.updates {
        config.updates_per_episode = v;
    }
    if let Some(v) = args.batch {
        config.batch_size = v;
    }
    if let Some(v) = args.c_target {
        config.c_target = v;
    }
    if let Some(v) = args.t_max {
        config.t_max = v;
    }
    Ok(config)
}

#[derive(Serialize)]
struct TrainOutcomeLine {
    episode: u64,
    instance_id: u64,
    c_total: u64,
    t_h: u64,
    halted: bool,
    infidelity: f64,
}

fn cmd_train_agent(args: TrainAgentArgs) -> CliResult<()> {
    let config = resolve_training_config(&args)?;
    config.validate()?;
    let resume = match &args.resume {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };

    fs::create_dir_all(&args.out_dir)?;
    let config_json = serde_json::to_value(&config)?;
    let outputs = vec![
        "metrics.jsonl".to_string(),
        "outcomes.jsonl".to_string(),
        "checkpoint-best.json".to_string(),
        "checkpoint-final.json".to_string(),
        "config.toml".to_string(),
    ];
    let run_manifest = RunManifest::new("train-agent", config_json, config.seed, outputs);
    fs::write(args.out_dir.join("config.toml"), toml::to_string_pretty(&config)?)?;

    let mut metrics_lines = vec![run_manifest.jsonl_header()];
    let mut outcome_lines = vec![run_manifest.jsonl_header()];
    let start = std::time::Instant::now();
    let result = run_training(&config, resume, |m, outcomes| {
        metrics_lines.push(serde_json::to_string(m).expect("metrics serialize"));
        for (i, o) in outcomes.iter().enumerate() {
            let line = TrainOutcomeLine {
                episode: m.episode,
                instance_id: i as u64,
                c_total: o.c_total,
                t_h: o.t_h,
                halted: o.halted,
                infidelity: o.infidelity,
            };
            outcome_lines.push(serde_json::to_string(&line).expect("outcome serialize"));
        }
        if m.episode % 10 == 0 {
            println!(
                "episode={} t_rep={} mean_c_total={:.4e} mean_infidelity={:.3e} halted_fraction={:.2} elapsed_s={:.0}",
                m.episode,
                m.t_rep,
                m.mean_c_total,
                m.mean_infidelity,
                m.halted_fraction,
                start.elapsed().as_secs_f64(),
            );
        }
    })?;

    write_lines(&args.out_dir.join("metrics.jsonl"), &metrics_lines)?;
    write_lines(&args.out_dir.join("outcomes.jsonl"), &outcome_lines)?;
    let best = serde_json::json!({
        "manifest_id": run_manifest.manifest_id,
        "checkpoint": result.best_checkpoint,
    });
    fs::write(
        args.out_dir.join("checkpoint-best.json"),
        serde_json::to_string(&best)? + "\n",
    )?;
    let fin = serde_json::json!({
        "manifest_id": run_manifest.manifest_id,
        "checkpoint": result.final_checkpoint,
    });
    fs::write(
        args.out_dir.join("checkpoint-final.json"),
        serde_json::to_string(&fin)? + "\n",
    )?;
    run_manifest.write(&args.out_dir)?;

    println!(
        "episodes={} best_rolling_c_total={:.6e} best_episode={}",
        result.metrics.len(),
        result.best_rolling_c_total,
        result.best_episode,
    );
    println!("manifest_id={}", run_manifest.manifest_id);
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args)]
struct EvaluateArgs {
    /// Trained agent checkpoint to evaluate.
    #[arg(long)]
    agent: PathBuf,
    #[arg(long, default_value_t = 1)]
    qubits: usize,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "t-max")]
    t_max: Option<u64>,
    #[arg(long = "t-rep", default_value_t = 1)]
    t_rep: u64,
    /// Comma-separated target counts, e.g. "10,100,1000,10000".
    #[arg(long = "c-targets", default_value = "10,100,1000,10000")]
    c_targets: String,
    #[arg(long = "states", default_value_t = 100)]
    n_states: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = false)]
    greedy: bool,
    #[arg(long = "out-dir", default_value = "runs/evaluate")]
    out_dir: PathBuf,
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let checkpoint = load_checkpoint(&args.agent)?;
    let (default_layers, default_k, default_t_max) = defaults_for_qubits(args.qubits);
    let c_targets: Vec<u64> = args
        .c_targets
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("--c-targets: {e}"))?;
    let eval = EvalConfig {
        n_qubits: args.qubits,
        layers: args.layers.unwrap_or(default_layers),
        k: args.k.unwrap_or(default_k),
        t_max: args.t_max.unwrap_or(default_t_max),
        t_rep: args.t_rep,
        c_targets,
        n_states: args.n_states,
        seed: args.seed,
        greedy: args.greedy,
        update_rule: UpdateRule::CenteredStandardized,
    };
    let table = evaluate_agent(&checkpoint, &eval)?;

    let config = serde_json::json!({
        "eval": eval,
        "agent_digest": file_digest(&args.agent)?,
        "agent_episode": checkpoint.episode,
    });
    fs::create_dir_all(&args.out_dir)?;
    let run_manifest = RunManifest::new(
        "evaluate",
        config,
        args.seed,
        vec!["evaluation.csv".to_string(), "outcomes.jsonl".to_string()],
    );
    let mut csv_lines = vec![
        run_manifest.csv_header(),
        "c_target,mean_c_total,mean_infidelity,mean_t_h,halted_fraction,n".to_string(),
    ];
    let mut outcome_lines = vec![run_manifest.jsonl_header()];
    let spec = HeaSpec::standard(eval.n_qubits, eval.layers)?;
    for (row, outcomes) in &table {
        csv_lines.push(format!(
            "{},{},{},{},{},{}",
            row.c_target,
            row.mean_c_total,
            row.mean_infidelity,
            row.mean_t_h,
            row.halted_fraction,
            row.n,
        ));
        for (i, outcome) in outcomes.iter().enumerate() {
            let record =
                OutcomeRecord::from_outcome(outcome, i as u64, args.seed, &spec, row.c_target);
            outcome_lines.push(serde_json::to_string(&record)?);
        }
        println!(
            "c_target={} mean_c_total={:.6e} mean_infidelity={:.6e} mean_t_h={:.1} halted_fraction={:.3} n={}",
            row.c_target,
            row.mean_c_total,
            row.mean_infidelity,
            row.mean_t_h,
            row.halted_fraction,
            row.n,
        );
    }
    write_lines(&args.out_dir.join("evaluation.csv"), &csv_lines)?;
    write_lines(&args.out_dir.join("outcomes.jsonl"), &outcome_lines)?;
    run_manifest.write(&args.out_dir)?;
    println!("manifest_id={}", run_manifest.manifest_id);
    Ok(())
}
