//! The `acord` command line: train, eval, sweep, paint, score and serve.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use acord_core::acord_trainer::{
    evaluate_policy, latest_checkpoint, train, EvalOptions, KSchedule, PolicySnapshot, TrainOptions, TrainReport,
};
use acord_core::checkpoint::Checkpoint;
use acord_core::config::ExperimentConfig;
use acord_core::envs::{stroke_widths, Environment, PainterEnv, Shape};
use acord_core::metrics::manifold_sweep;
use acord_core::session::{
    run_scripted, score_raster, Condition, ControlSchedule, Session, SessionRecord, SessionStore,
};
use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "acord", version, about = "Train and run behavior-oversight conditioned policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; resumes from the latest checkpoint in the output directory.
    Train(TrainArgs),
    /// Deterministic rollouts under a k schedule.
    Eval(EvalArgs),
    /// Achieved feature over a grid of k values.
    Sweep(SweepArgs),
    /// Headless painting session driven by a control schedule.
    Paint(PaintArgs),
    /// Re-score a stored session.
    Score(ScoreArgs),
    /// Start the live session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `acord.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON k schedule; defaults to a fresh random k at the resample interval.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `AxB`: A values of the swept k axis by B values of the others, evenly spaced in [0, 1].
    #[arg(long, default_value = "5x3")]
    pub grid: String,
    /// Which k axis to sweep.
    #[arg(long, default_value_t = 0)]
    pub axis: usize,
    /// Episodes per grid cell.
    #[arg(long, default_value_t = 3)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PaintArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Required for the acord condition.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub condition: Condition,
    #[arg(long)]
    pub shape: String,
    /// JSON control schedule; without one the initial control is held.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Session store directory; defaults to `paths.sessions_dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Session record (JSON) written by `paint` or `serve`.
    pub record: PathBuf,
    /// Supplies shapes, alignment grid and tolerance; defaults apply otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where the CSV goes; defaults to the record's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Policy for acord sessions; without it only styles and sa sessions start.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Session store directory; defaults to `paths.sessions_dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Paint(a) => cmd_paint(a),
        Command::Score(a) => cmd_score(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("invalid config {}", path.display()))
}

fn load_policy(cfg: &ExperimentConfig, env: &dyn Environment, path: &Path) -> anyhow::Result<PolicySnapshot> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    ckpt.expect_config(cfg.hash())
        .with_context(|| format!("checkpoint {} does not match the config", path.display()))?;
    let mut agent = cfg.build_agent(env)?;
    agent.load_checkpoint(&ckpt)?;
    Ok(agent.snapshot())
}

/// Prefixes every row of `csv` with a `config_hash` column.
fn tag_csv(csv: &str, hash: &str) -> String {
    let mut out = String::with_capacity(csv.len() + 20 * csv.lines().count());
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            out.push_str("config_hash,");
        } else {
            out.push_str(hash);
            out.push(',');
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Appends data rows to an existing CSV, or writes it whole.
fn append_csv(path: &Path, csv: &str) -> anyhow::Result<()> {
    if !path.exists() {
        return write_file(path, csv);
    }
    let mut f = OpenOptions::new().append(true).open(path)?;
    for line in csv.lines().skip(1) {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

fn linspace(n: usize) -> Vec<f64> {
    match n {
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

fn parse_grid(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("--grid must look like 5x3, got {s:?}"))?;
    let a: usize = a.trim().parse().with_context(|| format!("bad --grid {s:?}"))?;
    let b: usize = b.trim().parse().with_context(|| format!("bad --grid {s:?}"))?;
    if a == 0 || b == 0 {
        bail!("--grid dimensions must be >= 1");
    }
    Ok((a, b))
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.acord.seed = seed;
    }
    if let Some(dir) = a.out_dir {
        cfg.paths.out_dir = dir;
    }
    cfg.validate()?;
    let out = cfg.paths.out_dir.clone();
    let ckdir = out.join("checkpoints");
    fs::create_dir_all(&ckdir)?;
    let hash = cfg.hash();
    let hex = cfg.hash_hex();

    let mut env = cfg.build_env()?;
    let mut agent = cfg.build_agent(env.as_dyn())?;
    let mut start_step = 0;
    if let Some(p) = latest_checkpoint(&ckdir) {
        let ckpt = Checkpoint::load(&p)?;
        ckpt.expect_config(hash)
            .with_context(|| format!("refusing to resume from {}", p.display()))?;
        agent.load_checkpoint(&ckpt)?;
        start_step = ckpt.step;
        eprintln!("resuming from step {start_step}");
    }
    write_file(&out.join("config.toml"), &cfg.to_toml()?)?;

    let opts = TrainOptions {
        checkpoint_dir: Some(ckdir.clone()),
        config_hash: hash,
        start_step,
    };
    let report = train(env.as_dyn_mut(), &mut agent, &cfg.acord, &opts)?;
    let end = cfg.acord.total_steps.max(start_step);
    let last = agent.to_checkpoint(hash, end);
    last.save(&ckdir.join("final.ckpt"))?;
    last.save(&ckdir.join("latest.ckpt"))?;

    append_csv(&out.join("episodes.csv"), &tag_csv(&report.episodes_csv(), &hex))?;
    append_csv(&out.join("updates.csv"), &tag_csv(&report.updates_csv(), &hex))?;
    let summary = train_summary(&report, &hex, start_step, end);
    write_file(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn train_summary(r: &TrainReport, hex: &str, start: u64, end: u64) -> serde_json::Value {
    serde_json::json!({
        "config_hash": hex,
        "start_step": start,
        "end_step": end,
        "episodes": r.episodes.len(),
        "failure_rate_last_100": r.recent_failure_rate(100),
        "learner_updates": r.learner_updates,
        "disc_updates": r.disc_updates,
        "branch_counts": r.branch_counts,
    })
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let mut env = cfg.build_env()?;
    let policy = load_policy(&cfg, env.as_dyn(), &a.checkpoint)?;
    let schedule = match &a.schedule {
        Some(p) => serde_json::from_str::<KSchedule>(&fs::read_to_string(p)?)
            .with_context(|| format!("bad k schedule {}", p.display()))?,
        None => KSchedule::Random {
            interval: cfg.acord.n_for(env.as_dyn().episode_cap()),
        },
    };
    let opts = EvalOptions {
        episodes: a.episodes,
        seed: a.seed,
        burn_in: cfg.metrics.burn_in,
        bins: 5,
    };
    let s = evaluate_policy(env.as_dyn_mut(), &policy, &schedule, &opts)?;
    let hex = cfg.hash_hex();
    let out = a.out_dir.unwrap_or_else(|| cfg.paths.out_dir.clone());
    fs::create_dir_all(&out)?;

    let mut csv = String::from("episode,steps,env_return,failed,completed");
    for name in policy.map.names() {
        csv.push_str(&format!(",mean_{}", name.replace([' ', ','], "_")));
    }
    csv.push('\n');
    for (i, e) in s.episodes.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{},{}", e.steps, e.env_return, e.failed, e.completed));
        for f in &e.mean_features {
            csv.push_str(&format!(",{f}"));
        }
        csv.push('\n');
    }
    write_file(&out.join("eval_episodes.csv"), &tag_csv(&csv, &hex))?;

    let mut bins = String::from("j,lo,hi,count,mean,min,max\n");
    for b in &s.bins {
        bins.push_str(&format!("{},{},{},{},{},{},{}\n", b.j, b.lo, b.hi, b.count, b.mean, b.min, b.max));
    }
    write_file(&out.join("eval_bins.csv"), &tag_csv(&bins, &hex))?;
    println!(
        "{}",
        serde_json::json!({
            "config_hash": hex,
            "episodes": s.episodes.len(),
            "failure_rate": s.failure_rate,
            "completion_rate": s.completion_rate,
            "mean_return": s.mean_return,
        })
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let (nk, nc) = parse_grid(&a.grid)?;
    let mut env = cfg.build_env()?;
    let policy = load_policy(&cfg, env.as_dyn(), &a.checkpoint)?;
    let opts = EvalOptions {
        episodes: a.episodes,
        seed: a.seed,
        burn_in: cfg.metrics.burn_in,
        bins: 5,
    };
    let report = manifold_sweep(
        env.as_dyn_mut(),
        &policy,
        a.axis,
        &linspace(nk),
        &linspace(nc),
        a.episodes,
        &opts,
    )?;
    let hex = cfg.hash_hex();
    let out = a.out_dir.unwrap_or_else(|| cfg.paths.out_dir.clone());
    fs::create_dir_all(&out)?;
    write_file(&out.join("sweep.csv"), &tag_csv(&report.to_csv(), &hex))?;
    println!(
        "{}",
        serde_json::json!({
            "config_hash": hex,
            "feature": report.feature_name,
            "row_spearman": report.row_spearman(),
            "row_range": report.row_range(),
        })
    );
    Ok(())
}

fn find_shape(cfg: &ExperimentConfig, name: &str) -> anyhow::Result<Shape> {
    if let Ok(shapes) = cfg.shapes() {
        if let Some(s) = shapes.into_iter().find(|s| s.name == name) {
            return Ok(s);
        }
    }
    Shape::load(name).with_context(|| format!("unknown shape {name:?}"))
}

fn cmd_paint(a: PaintArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let shape = find_shape(&cfg, &a.shape)?;
    let schedule = match &a.schedule {
        Some(p) => ControlSchedule::from_json(&fs::read_to_string(p)?)
            .with_context(|| format!("bad control schedule {}", p.display()))?,
        None => ControlSchedule::default(),
    };
    schedule.check(a.condition)?;
    let env = PainterEnv::new(cfg.env.painter.clone(), vec![shape.clone()]);
    let policy = match (a.condition, &a.checkpoint) {
        (Condition::Acord, Some(p)) => Some(load_policy(&cfg, &env, p)?),
        (Condition::Acord, None) => bail!("the acord condition needs --checkpoint"),
        _ => None,
    };
    let id = format!("{}-{}-s{}", a.condition, shape.name, a.seed);
    let session = Session::start(id.clone(), a.condition, shape, a.seed, cfg.session_config(), policy)?;
    let (mut rec, raster) = run_scripted(session, &schedule, env.episode_cap() as u64)?;

    let store = SessionStore::new(a.out_dir.unwrap_or_else(|| cfg.paths.sessions_dir.clone()))?;
    let path = store.save(&mut rec, &raster)?;
    let csv = paint_csv(&rec);
    write_file(&store.dir().join(format!("{id}.csv")), &csv)?;
    print!("{csv}");
    eprintln!("record written to {}", path.display());
    Ok(())
}

fn paint_csv(rec: &SessionRecord) -> String {
    let widths = stroke_widths(&rec.poses());
    let n = widths.len().max(1) as f64;
    let mean = widths.iter().sum::<f64>() / n;
    let var = widths.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    let mut csv = String::from(
        "config_hash,session,condition,shape,seed,ticks,terminated,failed,completed,\
         coverage,consistency,shift_x,shift_y,shift_deg,width_mean,width_var\n",
    );
    let (cov, con, (dx, dy, dt)) = match rec.scores {
        Some(s) => (s.coverage, s.consistency, s.best_shift),
        None => (f64::NAN, f64::NAN, (f64::NAN, f64::NAN, f64::NAN)),
    };
    csv.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{cov},{con},{dx},{dy},{dt},{mean},{var}\n",
        rec.config_hash,
        rec.id,
        rec.condition,
        rec.shape,
        rec.seed,
        rec.ticks.len(),
        rec.terminated,
        rec.failed,
        rec.completed
    ));
    csv
}

fn cmd_score(a: ScoreArgs) -> anyhow::Result<()> {
    let cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    let text = fs::read_to_string(&a.record).with_context(|| format!("cannot read {}", a.record.display()))?;
    let rec = SessionRecord::from_json(&text)?;
    let dir = a.record.parent().unwrap_or(Path::new(".")).to_path_buf();
    let raster = SessionStore::new(&dir)?.load_raster(&rec)?;
    let shape = find_shape(&cfg, &rec.shape)?;
    let r = score_raster(&raster, &shape, &cfg.metrics.grid, cfg.metrics.tolerance)?;
    let (dx, dy, dt) = r.best_shift;
    let csv = format!(
        "config_hash,session,shape,coverage,consistency,shift_x,shift_y,shift_deg\n{},{},{},{},{},{dx},{dy},{dt}\n",
        rec.config_hash, rec.id, rec.shape, r.coverage, r.consistency
    );
    let out = a.out_dir.unwrap_or(dir);
    fs::create_dir_all(&out)?;
    write_file(&out.join(format!("{}.score.csv", rec.id)), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let shapes = cfg.shapes()?;
    let env = PainterEnv::new(cfg.env.painter.clone(), shapes.clone());
    let policy = a.checkpoint.as_deref().map(|p| load_policy(&cfg, &env, p)).transpose()?;
    let store = SessionStore::new(a.out_dir.unwrap_or_else(|| cfg.paths.sessions_dir.clone()))?;
    let state = Arc::new(acord_server::AppState::new(shapes, cfg.session_config(), policy, store));
    let addr = SocketAddr::from(([0, 0, 0, 0], a.port));
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("listening on {addr}");
    rt.block_on(acord_server::serve(addr, state))?;
    Ok(())
}
