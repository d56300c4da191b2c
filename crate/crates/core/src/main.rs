use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use reorient::env::{EnvConfig, TrajectoryWriter};
use reorient::estimator::{
    evaluate_estimator, load_estimator, run_estimator_rounds, save_estimator, write_estimator_report, RoundsConfig,
};
use reorient::eval::{
    export_plot_data, run_eval, run_sweep, smoothness_over_episodes, write_csv, Controller, HeuristicController,
    LearnedController, RandomController, SweepAxis, SweepSpec,
};
use reorient::planner::{load_policy, train_planner, PlannerPolicy, TrainConfig};
use reorient::render::{
    bench_throughput, render_depth, sample_surface_points, write_bench_csv, BenchConfig, CameraModel, ObjectPose,
    Primitive,
};

#[derive(Parser)]
#[command(name = "reorient", version, about = "In-hand reorientation testbed")]
struct Cli {
    /// JSON config for the subcommand; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the planner with PPO.
    TrainPlanner(TrainPlannerArgs),
    /// Train the pose estimator in collect/train rounds.
    TrainEstimator(TrainEstimatorArgs),
    /// Evaluate a planner, optionally with the estimator in the loop.
    Eval(EvalArgs),
    /// Success rate over a grid of environment perturbations.
    Sweep(SweepArgs),
    /// Depth renderer throughput benchmark.
    BenchRender(BenchArgs),
    /// Aggregate curve or sweep CSVs into mean/std series.
    ExportPlots(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvPreset {
    Small,
    Large,
    NoiseFree,
}

impl EnvPreset {
    fn config(self) -> EnvConfig {
        match self {
            EnvPreset::Small => EnvConfig::small_noise(),
            EnvPreset::Large => EnvConfig::large_noise(),
            EnvPreset::NoiseFree => EnvConfig::noise_free(),
        }
    }
}

#[derive(Args)]
struct EnvArgs {
    /// Environment preset, used when no env config file is given.
    #[arg(long, value_enum, default_value = "small")]
    env: EnvPreset,
    /// Environment config file; overrides `--env`.
    #[arg(long)]
    env_config: Option<PathBuf>,
}

impl EnvArgs {
    fn resolve(&self) -> Result<EnvConfig> {
        match &self.env_config {
            Some(p) => Ok(EnvConfig::load(p)?),
            None => Ok(self.env.config()),
        }
    }
}

#[derive(Args)]
struct TrainPlannerArgs {
    #[arg(long)]
    iterations: Option<usize>,
    /// Force a zero residual.
    #[arg(long)]
    no_residual: bool,
    /// Zero the skill feedback block of the observation.
    #[arg(long)]
    no_z: bool,
    #[command(flatten)]
    env: EnvArgs,
}

#[derive(Args)]
struct PolicyArgs {
    /// Planner checkpoint. Without it the greedy heuristic is used.
    #[arg(long)]
    planner: Option<PathBuf>,
    /// Uniform random axes and residuals instead of a planner.
    #[arg(long, conflicts_with = "planner")]
    random: bool,
    /// Sample planner actions instead of taking the mode.
    #[arg(long)]
    stochastic: bool,
}

struct Loaded {
    policy: Option<PlannerPolicy>,
    random: bool,
    stochastic: bool,
}

impl PolicyArgs {
    fn load(&self) -> Result<Loaded> {
        let policy = match &self.planner {
            Some(p) => Some(load_policy(p).with_context(|| format!("loading planner {}", p.display()))?),
            None => None,
        };
        Ok(Loaded { policy, random: self.random, stochastic: self.stochastic })
    }
}

impl Loaded {
    fn controller(&self, env: &EnvConfig) -> Box<dyn Controller + '_> {
        if self.random {
            return Box::new(RandomController { residual_limit: env.residual_limit });
        }
        match &self.policy {
            Some(p) => Box::new(LearnedController { policy: p, deterministic: !self.stochastic, label: "planner".into() }),
            None => Box::new(HeuristicController { step_angle: env.omega_nom, threshold: env.success_threshold }),
        }
    }
}

#[derive(Args)]
struct TrainEstimatorArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    rounds: Option<usize>,
    /// Episodes collected per round.
    #[arg(long)]
    episodes: Option<usize>,
    /// Held-out episodes for the closing evaluation.
    #[arg(long, default_value_t = 100)]
    eval_episodes: usize,
    #[command(flatten)]
    env: EnvArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    /// Estimator checkpoint; selects stage 2.
    #[arg(long)]
    estimator: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    episodes: usize,
    /// Write per-step trajectories to `trajectories.jsonl` and smoothness
    /// metrics to `smoothness.csv`.
    #[arg(long)]
    record: bool,
    #[command(flatten)]
    env: EnvArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Planner checkpoints evaluated as separate variants.
    #[arg(long = "planner")]
    planners: Vec<PathBuf>,
    /// Also evaluate the greedy heuristic.
    #[arg(long)]
    heuristic: bool,
    /// rot-noise, pos-noise, noise, physics-range or shape.
    #[arg(long, default_value = "noise")]
    axis: String,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.10, 0.15, 0.25])]
    values: Vec<f64>,
    #[arg(long, default_value_t = 512)]
    episodes: usize,
    #[command(flatten)]
    env: EnvArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Thread counts to measure.
    #[arg(long, value_delimiter = ',')]
    thread_counts: Option<Vec<usize>>,
    /// Also dump one 16-bit PGM per primitive.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "iteration")]
    x: String,
    #[arg(long, default_value = "success_rate")]
    y: String,
    /// Column that splits rows into separate series.
    #[arg(long)]
    group: Option<String>,
    #[arg(long, default_value = "plot.csv")]
    name: String,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let s = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&s).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(T::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s + "\n").with_context(|| format!("writing {}", path.display()))
}

fn train_planner_cmd(cli: &Cli, a: &TrainPlannerArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(cli.config.as_deref())?;
    if cli.config.is_none() || a.env.env_config.is_some() {
        cfg.env = a.env.resolve()?;
    }
    cfg.seed = cli.seed;
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if a.no_residual {
        cfg.policy.use_residual = false;
    }
    if a.no_z {
        cfg.policy.obs.use_z = false;
    }
    write_json(&cli.out.join("train_config.json"), &cfg)?;
    let outcome = train_planner(&cfg, Some(&cli.out))?;
    let last = outcome.curve.last().map(|r| r.success_rate).unwrap_or(0.0);
    println!("trained {} iterations, final training success {:.3}", outcome.curve.len(), last);
    println!("wrote {}", cli.out.join("planner_best.json").display());
    Ok(())
}

fn train_estimator_cmd(cli: &Cli, a: &TrainEstimatorArgs) -> Result<()> {
    let mut cfg: RoundsConfig = load_config(cli.config.as_deref())?;
    cfg.seed = cli.seed;
    cfg.train.seed = cli.seed;
    if let Some(r) = a.rounds {
        cfg.rounds = r;
    }
    if let Some(e) = a.episodes {
        cfg.episodes = e;
    }
    let env = a.env.resolve()?;
    let loaded = a.policy.load()?;
    let ctrl = loaded.controller(&env);
    write_json(&cli.out.join("estimator_config.json"), &cfg)?;
    let outcome = run_estimator_rounds(ctrl.as_ref(), &env, &cfg, Some(&cli.out))?;
    save_estimator(&outcome.estimator, cli.seed, &cli.out.join("estimator.json"))?;
    if a.eval_episodes > 0 {
        // Held-out episodes use a seed stream disjoint from collection.
        let held_out = cli.seed ^ 0x5eed_0f_e7a1;
        let rows = evaluate_estimator(
            ctrl.as_ref(),
            &outcome.estimator,
            &env,
            a.eval_episodes,
            held_out,
            cfg.reset_rot,
            cfg.reset_pos,
        )?;
        write_estimator_report(&cli.out.join("estimator_eval.csv"), &rows)?;
        let mut rot: Vec<f64> = rows.iter().map(|r| r.final_rot_err).collect();
        let mut pos: Vec<f64> = rows.iter().map(|r| r.final_pos_err).collect();
        println!(
            "held-out median final error: rotation {:.4} rad, position {:.4} m",
            median(&mut rot),
            median(&mut pos)
        );
    }
    for (r, s) in outcome.stats.iter().enumerate() {
        println!("round {r}: {} episodes, {} steps, {} resets", s.episodes, s.steps, s.resets);
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let env = match &cli.config {
        Some(p) => EnvConfig::load(p)?,
        None => a.env.resolve()?,
    };
    let loaded = a.policy.load()?;
    let est = match &a.estimator {
        Some(p) => Some(load_estimator(p).with_context(|| format!("loading estimator {}", p.display()))?),
        None => None,
    };
    let ctrl = loaded.controller(&env);
    let (report, results) = run_eval(ctrl.as_ref(), est.as_ref(), &env, a.episodes, cli.seed, a.record)?;
    let mut doc = serde_json::to_value(&report)?;
    if a.record {
        let path = cli.out.join("trajectories.jsonl");
        let mut w = TrajectoryWriter::create(&path)?;
        for step in results.iter().filter_map(|r| r.trajectory.as_ref()).flatten() {
            w.write(step)?;
        }
        w.finish()?;
        let (smooth, used) = smoothness_over_episodes(&results, env.dt_ctrl())?;
        write_csv(&cli.out.join("smoothness.csv"), &[smooth])?;
        doc["smoothness"] = serde_json::to_value(smooth)?;
        doc["smoothness_episodes"] = used.into();
    }
    write_json(&cli.out.join("eval.json"), &doc)?;
    println!(
        "{} stage {}: success {:.3} [{:.3}, {:.3}] over {} episodes",
        report.label, report.stage, report.success_rate, report.ci_lo, report.ci_hi, report.episodes
    );
    Ok(())
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let base = match &cli.config {
        Some(p) => EnvConfig::load(p)?,
        None => a.env.resolve()?,
    };
    let spec = SweepSpec { axis: SweepAxis::parse(&a.axis)?, values: a.values.clone(), episodes: a.episodes, seed: cli.seed };
    let policies = a
        .planners
        .iter()
        .map(|p| load_policy(p).with_context(|| format!("loading planner {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let mut variants: Vec<Box<dyn Controller + '_>> = Vec::new();
    for (p, path) in policies.iter().zip(&a.planners) {
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "planner".into());
        variants.push(Box::new(LearnedController { policy: p, deterministic: true, label }));
    }
    if a.heuristic || variants.is_empty() {
        variants.push(Box::new(HeuristicController { step_angle: base.omega_nom, threshold: base.success_threshold }));
    }
    let refs: Vec<&dyn Controller> = variants.iter().map(|v| v.as_ref()).collect();
    let rows = run_sweep(&spec, &base, &refs)?;
    write_csv(&cli.out.join("sweep.csv"), &rows)?;
    for r in &rows {
        println!("{:>12} {}={:<6} success {:.3}", r.variant, r.axis, r.value, r.success);
    }
    Ok(())
}

fn bench_cmd(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let mut cfg: BenchConfig = load_config(cli.config.as_deref())?;
    cfg.seed = cli.seed;
    if let Some(b) = a.batch {
        cfg.batch = b;
    }
    if let Some(f) = a.frames {
        cfg.frames = f;
    }
    if let Some(t) = &a.thread_counts {
        cfg.threads = t.clone();
    }
    let cam = CameraModel::default();
    let report = bench_throughput(&cfg, &cam)?;
    write_bench_csv(&cli.out.join("bench.csv"), &report)?;
    for r in &report.rows {
        println!(
            "batch {} threads {}: {:.0} fps, {:.1}x naive, {:.2}x single-thread",
            r.batch, r.threads, r.fps, r.speedup, r.scaling
        );
    }
    println!("naive reference {:.1} fps, deterministic {}", report.naive_fps, report.deterministic);
    if a.pgm {
        for shape in reorient::env::Shape::ALL {
            let cloud = sample_surface_points(&Primitive::nominal(shape, 1.0), cfg.points, cfg.seed)?;
            let q = reorient::so3::UnitQuat::from_rotation_vector([0.4, -0.3, 0.2]);
            let frame = render_depth(&cloud, &ObjectPose::new(q, [0.0, 0.0, 0.4]), &cam);
            frame.write_pgm(&cli.out.join(format!("depth_{shape}.pgm")))?;
        }
    }
    Ok(())
}

fn export_cmd(cli: &Cli, a: &ExportArgs) -> Result<()> {
    let rows = export_plot_data(&a.inputs, &a.x, &a.y, a.group.as_deref())?;
    let path = cli.out.join(&a.name);
    write_csv(&path, &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global().context("configuring thread pool")?;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.cmd {
        Command::TrainPlanner(a) => train_planner_cmd(cli, a),
        Command::TrainEstimator(a) => train_estimator_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Sweep(a) => sweep_cmd(cli, a),
        Command::BenchRender(a) => bench_cmd(cli, a),
        Command::ExportPlots(a) => export_cmd(cli, a),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    use reorient::error::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::InvalidInput(_)) => "invalid_input",
        Some(E::Degenerate(_)) => "degenerate",
        Some(E::DimensionMismatch { .. }) => "dimension_mismatch",
        Some(E::NonFinite(_)) => "non_finite",
        Some(E::EpisodeFinished) => "episode_finished",
        Some(E::Diverged(_)) => "diverged",
        Some(E::Incompatible(_)) => "incompatible",
        Some(E::Malformed { .. }) => "malformed",
        Some(E::Io { .. }) => "io",
        Some(E::Json(_)) => "json",
        None if err.chain().any(|e| e.is::<std::io::Error>()) => "io",
        None if err.chain().any(|e| e.is::<serde_json::Error>()) => "json",
        None => "other",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": error_kind(&e), "message": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
