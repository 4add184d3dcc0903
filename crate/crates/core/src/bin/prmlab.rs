//! Configuration-driven command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical
//! non-convergence/divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use prmlab::config::{EtaSpec, ExperimentConfig, LoadedGame};
use prmlab::dynamics::{
    estimate_linear_rate, estimate_lipschitz_with_floor, estimate_monotonicity_with_floor,
    interior_sampler, max_step_size, operator_lipschitz, operator_monotonicity, run_trajectory,
    BilinearToy, DynamicsSystem, JointState, RegularizedGameSystem, RunOptions,
    TrajectoryRecord, TOY_CENTER,
};
use prmlab::game::AdversarialGame;
use prmlab::io::{atomic_write, read_jsonl};
use prmlab::oracle::{Distances, Trace, VerdictLabel};
use prmlab::regularization::{equilibrium_fixed_point_damped, RegularizationConfig};
use prmlab::rl::{alternate_train, run_adversarial_curriculum, Env, GoldStep, TrainOptimizer};

#[derive(Parser)]
#[command(name = "prmlab", version, about = "Adversarial step-verification game laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the regularized game by best-response fixed point.
    Solve,
    /// Run an instrumented optimizer trajectory with convergence probes.
    Dynamics,
    /// Alternating PPO training on a static game.
    Train,
    /// Oracle-labeled adversarial curriculum on a step corpus.
    Curriculum,
    /// Batch-label (gold, candidate) pairs from a JSONL file.
    Oracle {
        /// Input JSONL with lines {"id": ..., "gold": ..., "candidate": ...}.
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the empirical monotonicity/Lipschitz probes and step bound.
    Diagnose,
}

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(RunError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(RunError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}

enum RunError {
    Input(String),
    Numeric(String),
}

impl From<prmlab::Error> for RunError {
    fn from(e: prmlab::Error) -> Self {
        match e {
            prmlab::Error::Divergence(m) => RunError::Numeric(m),
            other => RunError::Input(other.to_string()),
        }
    }
}

type RunResult = Result<ExitCode, RunError>;

struct Ctx {
    config: ExperimentConfig,
    out: Option<PathBuf>,
    quiet: bool,
}

impl Ctx {
    fn emit(&self, name: &str, contents: &str) -> Result<(), RunError> {
        if let Some(dir) = &self.out {
            atomic_write(&dir.join(name), contents)
                .map_err(|e| RunError::Input(e.to_string()))?;
        }
        Ok(())
    }

    fn echo_config(&self) -> Result<(), RunError> {
        self.emit("config.resolved.json", &(self.config.to_json_pretty() + "\n"))
    }

    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn load_ctx(cli_config: &Option<PathBuf>, out: &Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Result<Ctx, RunError> {
    let path = cli_config
        .as_ref()
        .ok_or_else(|| RunError::Input("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::from_file(path).map_err(RunError::from)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    // All run randomness derives from the global seed.
    config.ppo.seed = config.seed;
    let out = out.clone().or_else(|| config.output_dir.clone());
    Ok(Ctx {
        config,
        out,
        quiet,
    })
}

fn run(cli: Cli) -> RunResult {
    match &cli.command {
        Command::Solve => {
            let ctx = load_ctx(&cli.config, &cli.out, cli.seed, cli.quiet)?;
            cmd_solve(&ctx)
        }
        Command::Dynamics => {
            let ctx = load_ctx(&cli.config, &cli.out, cli.seed, cli.quiet)?;
            cmd_dynamics(&ctx)
        }
        Command::Train => {
            let ctx = load_ctx(&cli.config, &cli.out, cli.seed, cli.quiet)?;
            cmd_train(&ctx)
        }
        Command::Curriculum => {
            let ctx = load_ctx(&cli.config, &cli.out, cli.seed, cli.quiet)?;
            cmd_curriculum(&ctx)
        }
        Command::Oracle { input } => cmd_oracle(&cli, input),
        Command::Diagnose => {
            let ctx = load_ctx(&cli.config, &cli.out, cli.seed, cli.quiet)?;
            cmd_diagnose(&ctx)
        }
    }
}

fn game_block(ctx: &Ctx) -> Result<&prmlab::config::GameBlock, RunError> {
    ctx.config
        .game
        .as_ref()
        .ok_or_else(|| RunError::Input("this command needs a game block in the config".into()))
}

fn require_game(ctx: &Ctx) -> Result<AdversarialGame, RunError> {
    match game_block(ctx)?.load().map_err(RunError::from)? {
        LoadedGame::Game { game, warning } => {
            if let Some(w) = warning {
                ctx.note(&format!("warning: {w}"));
            }
            Ok(game)
        }
        LoadedGame::BilinearToy => Err(RunError::Input(
            "this command needs a labeled game, not the bilinear toy".into(),
        )),
    }
}

#[derive(Serialize)]
struct EquilibriumOut {
    generator: Vec<Vec<f64>>,
    detector: Vec<Vec<f64>>,
    exploitability: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    full_support: bool,
    min_log_probability: f64,
}

fn solve_equilibrium(
    ctx: &Ctx,
    game: &AdversarialGame,
    reg: &RegularizationConfig,
) -> Result<(prmlab::regularization::EquilibriumResult, EquilibriumOut), RunError> {
    let solver = &ctx.config.solver;
    let eq = equilibrium_fixed_point_damped(
        game,
        reg,
        solver.tol,
        solver.max_iter,
        ctx.config.regularization.damping,
    )
    .map_err(RunError::from)?;
    // Log-domain report: survives probabilities far below linear-float
    // resolution.
    let support = eq.full_support_report();
    let out = EquilibriumOut {
        generator: eq.joint.generator.rows.clone(),
        detector: eq.joint.detector.rows.clone(),
        exploitability: eq.exploitability,
        iterations: eq.iterations,
        residual: eq.residual,
        converged: eq.converged,
        full_support: support.full_support,
        min_log_probability: support.min_log_probability,
    };
    Ok((eq, out))
}

fn cmd_solve(ctx: &Ctx) -> RunResult {
    let game = require_game(ctx)?;
    let reg = ctx.config.regularization.build(&game).map_err(RunError::from)?;
    let (eq, out) = solve_equilibrium(ctx, &game, &reg)?;
    let json = serde_json::to_string_pretty(&out).expect("serializable") + "\n";
    ctx.echo_config()?;
    ctx.emit("equilibrium.json", &json)?;
    if ctx.out.is_none() {
        println!("{json}");
    } else {
        ctx.note(&format!(
            "solve: converged={} iterations={} exploitability={:.3e}",
            eq.converged, eq.iterations, eq.exploitability
        ));
    }
    if eq.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_NUMERIC))
    }
}

#[derive(Serialize)]
struct ConvergenceOut {
    mu_hat: f64,
    l_hat: f64,
    rho_hat: f64,
    fit_r2: f64,
    eta_bound: f64,
    converged: bool,
}

fn toy_probes(ctx: &Ctx) -> (f64, f64) {
    use rand::Rng;
    use rand::SeedableRng;
    let toy = BilinearToy::new();
    let n = ctx.config.optimizer.probe_samples;
    let mk_sampler = |salt: u64| {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ctx.config.seed ^ salt);
        move || {
            vec![
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ]
        }
    };
    let mu = operator_monotonicity(|z| toy.operator(z), mk_sampler(1), n);
    let l = operator_lipschitz(|z| toy.operator(z), mk_sampler(2), n);
    (mu, l)
}

fn cmd_dynamics(ctx: &Ctx) -> RunResult {
    let opt = &ctx.config.optimizer;
    let run_opts = RunOptions {
        record_iterates: opt.record_iterates,
        stop_tol: opt.stop_tol,
        diagnostics: true,
    };

    let (record, mu, l): (TrajectoryRecord, f64, f64) =
        match game_block(ctx)?.load().map_err(RunError::from)? {
            LoadedGame::BilinearToy => {
                let (mu, l) = toy_probes(ctx);
                let eta = resolve_eta(ctx, mu, l)?;
                let toy = BilinearToy::new();
                let z0 = [0.9, 0.1, 0.2];
                let rec = run_trajectory(
                    &toy,
                    opt.name,
                    eta,
                    opt.t,
                    &z0,
                    Some(&TOY_CENTER),
                    &run_opts,
                );
                (rec, mu, l)
            }
            LoadedGame::Game { game, warning } => {
                if let Some(w) = warning {
                    ctx.note(&format!("warning: {w}"));
                }
                let reg = ctx.config.regularization.build(&game).map_err(RunError::from)?;
                let (eq, _) = solve_equilibrium(ctx, &game, &reg)?;
                let mu = estimate_monotonicity_with_floor(
                    &game,
                    &reg,
                    opt.probe_samples,
                    ctx.config.seed ^ 1,
                    opt.p_floor,
                )
                .map_err(RunError::from)?;
                let l = estimate_lipschitz_with_floor(
                    &game,
                    &reg,
                    opt.probe_samples,
                    ctx.config.seed ^ 2,
                    opt.p_floor,
                )
                .map_err(RunError::from)?;
                let eta = resolve_eta(ctx, mu, l)?;
                let system = RegularizedGameSystem::new(&game, &reg).map_err(RunError::from)?;
                let z0 = system.layout().flatten(&prmlab::game::JointStrategy::new(
                    reg.generator_reference.clone(),
                    reg.detector_reference.clone(),
                ));
                let z_star = JointState::from_joint(&game, &eq.joint).map_err(RunError::from)?;
                let rec = run_trajectory(
                    &system,
                    opt.name,
                    eta,
                    opt.t,
                    &z0,
                    Some(&z_star.z),
                    &run_opts,
                );
                (rec, mu, l)
            }
        };

    let (rho, r2) = estimate_linear_rate(&record, opt.burn_in.min(record.t.len().saturating_sub(2)))
        .unwrap_or((f64::NAN, f64::NAN));
    let final_res = record.final_residual().unwrap_or(f64::NAN);
    let converged = !record.diverged() && final_res <= opt.residual_tol;
    let report = ConvergenceOut {
        mu_hat: mu,
        l_hat: l,
        rho_hat: rho,
        fit_r2: r2,
        eta_bound: if l > 0.0 { mu.max(0.0) / (l * l) } else { f64::NAN },
        converged,
    };
    ctx.echo_config()?;
    ctx.emit("trajectory.csv", &record.to_csv())?;
    ctx.emit(
        "convergence.json",
        &(serde_json::to_string_pretty(&report).expect("serializable") + "\n"),
    )?;
    if ctx.out.is_none() {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    }
    ctx.note(&format!(
        "dynamics: optimizer={} eta={} final_residual={final_res:.3e} rho={rho:.6} converged={converged}",
        record.optimizer.name(),
        record.eta
    ));
    if record.diverged() || !converged {
        Ok(ExitCode::from(EXIT_NUMERIC))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn resolve_eta(ctx: &Ctx, mu: f64, l: f64) -> Result<f64, RunError> {
    match &ctx.config.optimizer.eta {
        EtaSpec::Value(v) => Ok(*v),
        EtaSpec::Named(_) => {
            let bound = max_step_size(mu.max(0.0), l).map_err(RunError::from)?;
            Ok(bound.min(ctx.config.optimizer.eta_cap))
        }
    }
}

#[derive(Serialize)]
struct TrainRow {
    round: usize,
    ug_reg: f64,
    ur_reg: f64,
    exploitability: f64,
    acc: f64,
    deception_rate: f64,
}

fn cmd_train(ctx: &Ctx) -> RunResult {
    let game = require_game(ctx)?;
    let reg = ctx.config.regularization.build(&game).map_err(RunError::from)?;
    let mut env = Env::with_uniform_references(game);
    env.generator_reference = reg.generator_reference.clone();
    env.detector_reference = reg.detector_reference.clone();
    let mut ppo = ctx.config.ppo.clone();
    ppo.tau = ctx.config.regularization.tau;
    ppo.c_h = ctx.config.regularization.c_h;
    let joint0 = prmlab::game::JointStrategy::new(
        env.generator_reference.clone(),
        env.detector_reference.clone(),
    );
    let (final_joint, metrics) = alternate_train(
        &env,
        &joint0,
        &ppo,
        ctx.config.rounds,
        TrainOptimizer::Ogda,
    )
    .map_err(RunError::from)?;
    let mut lines = String::new();
    for m in &metrics {
        let row = TrainRow {
            round: m.round,
            ug_reg: m.ug_reg,
            ur_reg: m.ur_reg,
            exploitability: m.exploitability,
            acc: m.detector_accuracy,
            deception_rate: m.deception_rate,
        };
        lines.push_str(&serde_json::to_string(&row).expect("serializable"));
        lines.push('\n');
    }
    ctx.echo_config()?;
    ctx.emit("rounds.jsonl", &lines)?;
    ctx.emit(
        "final_strategy.json",
        &(serde_json::to_string_pretty(&final_joint).expect("serializable") + "\n"),
    )?;
    if ctx.out.is_none() {
        print!("{lines}");
    }
    ctx.note(&format!(
        "train: rounds={} final_exploitability={:.4e} final_acc={:.4}",
        metrics.len(),
        metrics.last().map(|m| m.exploitability).unwrap_or(f64::NAN),
        metrics.last().map(|m| m.detector_accuracy).unwrap_or(f64::NAN)
    ));
    Ok(ExitCode::SUCCESS)
}

fn cmd_curriculum(ctx: &Ctx) -> RunResult {
    let corpus_path = ctx
        .config
        .corpus
        .as_ref()
        .ok_or_else(|| RunError::Input("curriculum requires config.corpus".into()))?;
    let (corpus, skipped): (Vec<GoldStep>, usize) =
        read_jsonl(corpus_path, |l| serde_json::from_str(l)).map_err(RunError::from)?;
    if skipped > 0 {
        eprintln!("skipped {skipped} malformed corpus lines");
    }
    if corpus.is_empty() {
        return Err(RunError::Input("corpus has no valid lines".into()));
    }
    let oracle = ctx.config.oracle.build().map_err(RunError::from)?;
    let mut ppo = ctx.config.ppo.clone();
    ppo.tau = ctx.config.regularization.tau;
    ppo.c_h = ctx.config.regularization.c_h;
    let report = run_adversarial_curriculum(
        &corpus,
        &oracle,
        &ppo,
        ctx.config.rounds,
        TrainOptimizer::Ogda,
    )
    .map_err(RunError::from)?;
    let mut lines = String::new();
    for r in &report.rounds {
        lines.push_str(&serde_json::to_string(r).expect("serializable"));
        lines.push('\n');
    }
    ctx.echo_config()?;
    ctx.emit("curriculum.jsonl", &lines)?;
    if ctx.out.is_none() {
        print!("{lines}");
    }
    ctx.note(&format!(
        "curriculum: rounds={} excluded_steps={} rejected_candidates={} final_acc={:.4}",
        report.rounds.len(),
        report.excluded_steps,
        report.rejected_candidates,
        report.rounds.last().map(|r| r.acc_holdout).unwrap_or(f64::NAN)
    ));
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Deserialize)]
struct PairLine {
    id: String,
    gold: String,
    candidate: String,
}

#[derive(Serialize)]
struct VerdictLine {
    id: String,
    label: VerdictLabel,
    trace: Trace,
    distances: Distances,
}

fn cmd_oracle(cli: &Cli, input: &Path) -> RunResult {
    // Thresholds/mode/embedder come from the config when given; otherwise
    // defaults apply.
    let (oracle, config) = match &cli.config {
        Some(path) => {
            let config = ExperimentConfig::from_file(path).map_err(RunError::from)?;
            (config.oracle.build().map_err(RunError::from)?, Some(config))
        }
        None => (prmlab::oracle::Oracle::default(), None),
    };
    if let (Some(dir), Some(config)) = (&cli.out, &config) {
        atomic_write(
            &dir.join("config.resolved.json"),
            &(config.to_json_pretty() + "\n"),
        )
        .map_err(|e| RunError::Input(e.to_string()))?;
    }
    let (pairs, malformed): (Vec<PairLine>, usize) =
        read_jsonl(input, |l| serde_json::from_str(l)).map_err(RunError::from)?;
    let mut out = String::new();
    let mut errors = 0usize;
    for pair in &pairs {
        match oracle.label(&pair.gold, &pair.candidate) {
            Ok(verdict) => {
                let line = VerdictLine {
                    id: pair.id.clone(),
                    label: verdict.label,
                    trace: verdict.trace,
                    distances: verdict.distances,
                };
                out.push_str(&serde_json::to_string(&line).expect("serializable"));
                out.push('\n');
            }
            Err(_) => errors += 1,
        }
    }
    if malformed + errors > 0 {
        eprintln!("skipped {} malformed/unlabelable lines", malformed + errors);
    }
    let processed = pairs.len() - errors;
    match &cli.out {
        Some(dir) => {
            atomic_write(&dir.join("verdicts.jsonl"), &out)
                .map_err(|e| RunError::Input(e.to_string()))?;
        }
        None => print!("{out}"),
    }
    if processed > 0 {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_INPUT))
    }
}

#[derive(Serialize)]
struct DiagnoseOut {
    mu_hat: f64,
    l_hat: f64,
    eta_bound: f64,
    p_floor: f64,
    probe_samples: usize,
}

fn cmd_diagnose(ctx: &Ctx) -> RunResult {
    let opt = &ctx.config.optimizer;
    let (mu, l) = match game_block(ctx)?.load().map_err(RunError::from)? {
        LoadedGame::BilinearToy => toy_probes(ctx),
        LoadedGame::Game { game, .. } => {
            let reg = ctx.config.regularization.build(&game).map_err(RunError::from)?;
            let system = RegularizedGameSystem::new(&game, &reg).map_err(RunError::from)?;
            let mu = operator_monotonicity(
                |z| system.operator(z),
                interior_sampler(&game, ctx.config.seed ^ 1, opt.p_floor),
                opt.probe_samples,
            );
            let l = operator_lipschitz(
                |z| system.operator(z),
                interior_sampler(&game, ctx.config.seed ^ 2, opt.p_floor),
                opt.probe_samples,
            );
            (mu, l)
        }
    };
    let report = DiagnoseOut {
        mu_hat: mu,
        l_hat: l,
        eta_bound: if l > 0.0 { mu.max(0.0) / (l * l) } else { f64::NAN },
        p_floor: opt.p_floor,
        probe_samples: opt.probe_samples,
    };
    let json = serde_json::to_string_pretty(&report).expect("serializable");
    println!("{json}");
    ctx.echo_config()?;
    ctx.emit("diagnose.json", &(json + "\n"))?;
    Ok(ExitCode::SUCCESS)
}
