use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use shadow_core::checkpoint::Checkpoint;
use shadow_core::config::RunConfig;
use shadow_core::kinematics::KinematicChain;
use shadow_core::motion::{gen_motion, load_motion_file, save_motion, GenParams, MotionKind, MotionTrajectory};
use shadow_core::nn::gradcheck;
use shadow_core::par::{init_global_threads, Exec};
use shadow_core::plot::{Chart, Series};
use shadow_core::rl::{self, CriticMode, Trainer};
use shadow_core::sim2d::EnvShared;
use shadow_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "shadow", version, about = "Keyframe motion shadowing: motions, training, evaluation and plots")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a reference motion file.
    GenMotion {
        #[arg(long)]
        kind: String,
        /// Bundled chain name or chain file.
        #[arg(long, default_value = "planar5")]
        chain: String,
        #[arg(long)]
        out: PathBuf,
        /// Seconds; defaults per kind.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 50.0)]
        fps: f64,
    },
    /// Train a policy; writes metrics.csv and checkpoints under the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "multi")]
        mode: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the configured iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate a checkpoint with deterministic mean actions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Motion file or generator kind; defaults to the checkpoint's motion.
        #[arg(long)]
        motion: Option<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump a mean-action rollout as JSON lines.
    Replay {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        motion: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render metrics (and optionally an evaluation trace) as SVG charts.
    Plot {
        #[arg(long, required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = gradcheck::SUITE_SEED)]
        seed: u64,
        /// Add an op with a deliberately wrong backward rule.
        #[arg(long, hide = true)]
        inject_broken_backward: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_CONFIG,
        e if e.is_config() => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("SHADOW_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = init_global_threads(n) {
                    eprintln!("error: cannot size worker pool: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            _ => {
                eprintln!("error: SHADOW_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let res = match cli.cmd {
        Cmd::GenMotion { kind, chain, out, duration, fps } => cmd_gen_motion(&kind, &chain, &out, GenParams { duration, fps }),
        Cmd::Train { config, mode, seed, out, iterations } => cmd_train(&config, &mode, seed, out, iterations),
        Cmd::Eval { checkpoint, motion, episodes, seed, out } => cmd_eval(&checkpoint, motion.as_deref(), episodes, seed, &out),
        Cmd::Replay { checkpoint, motion, seed, out } => cmd_replay(&checkpoint, motion.as_deref(), seed, &out),
        Cmd::Plot { metrics, trace, out } => cmd_plot(&metrics, trace.as_deref(), &out),
        Cmd::Gradcheck { seed, inject_broken_backward } => cmd_gradcheck(seed, inject_broken_backward),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

type CmdResult = Result<u8, Error>;

fn cmd_gen_motion(kind: &str, chain: &str, out: &Path, params: GenParams) -> CmdResult {
    let kind: MotionKind = kind.parse()?;
    let chain = KinematicChain::load(chain)?;
    let traj = gen_motion(kind, &chain, &params)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, save_motion(&traj))?;
    println!("wrote {} ({} frames, {:.2} s)", out.display(), traj.len(), traj.duration());
    Ok(0)
}

fn cmd_train(config: &Path, mode: &str, seed: Option<u64>, out: Option<PathBuf>, iterations: Option<usize>) -> CmdResult {
    let mode: CriticMode = mode.parse()?;
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o.to_string_lossy().into_owned();
    }
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    cfg.validate()?;
    let out = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(out.join("checkpoints"))?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    let shared = cfg.build_env()?;
    let mut trainer = Trainer::new(shared, &cfg.network, &cfg.ppo, mode, cfg.seed, Exec::Parallel)?;
    let mut metrics = BufWriter::new(File::create(out.join("metrics.csv"))?);
    rl::write_header(&mut metrics)?;
    let t0 = Instant::now();
    for _ in 0..cfg.iterations {
        let row = trainer.iterate()?;
        rl::write_row(&mut metrics, &row)?;
        metrics.flush()?;
        eprintln!(
            "iter {:>5}  success {:.3}  ep_len {:>6.1}  kl {:.4}  lr {:.2e}  [{:.0} s]",
            row.iter,
            row.success_rate,
            row.mean_ep_len,
            row.approx_kl,
            row.lr,
            t0.elapsed().as_secs_f64()
        );
        if cfg.checkpoint_every > 0 && row.iter % cfg.checkpoint_every == 0 {
            save_checkpoint(&trainer, &cfg, &out.join("checkpoints").join(format!("iter_{:06}.ckpt", row.iter)))?;
        }
    }
    save_checkpoint(&trainer, &cfg, &out.join("final.ckpt"))?;
    println!("wrote {}", out.display());
    Ok(0)
}

fn save_checkpoint(tr: &Trainer, cfg: &RunConfig, path: &Path) -> Result<(), Error> {
    Checkpoint::from_agent(&tr.agent, cfg, tr.iteration, &[&tr.action_rng, &tr.shuffle_rng]).save(path)
}

/// Motion from a file path or a generator kind.
fn motion_arg(arg: &str, chain: &KinematicChain) -> Result<MotionTrajectory, Error> {
    match arg.parse::<MotionKind>() {
        Ok(kind) => gen_motion(kind, chain, &GenParams::default()),
        Err(_) => load_motion_file(Path::new(arg)),
    }
}

fn load_for_eval(checkpoint: &Path, motion: Option<&str>) -> Result<(Checkpoint, Arc<EnvShared>), Error> {
    let ck = Checkpoint::load(checkpoint)?;
    let cfg = &ck.manifest.config;
    let chain = cfg.env.load_chain()?;
    let traj = match motion {
        Some(m) => motion_arg(m, &chain)?,
        None => cfg.motion.load(&chain)?,
    };
    let shared = cfg.build_env_with(chain, &traj)?;
    Ok((ck, shared))
}

fn cmd_eval(checkpoint: &Path, motion: Option<&str>, episodes: usize, seed: u64, out: &Path) -> CmdResult {
    if episodes == 0 {
        return Err(Error::Config("--episodes must be >= 1".into()));
    }
    let (ck, shared) = load_for_eval(checkpoint, motion)?;
    let agent = ck.restore_agent(&shared)?;
    let report = rl::evaluate(&agent.policy, shared, episodes, seed, Exec::Parallel)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    let mut w = BufWriter::new(File::create(out.join("traces.csv"))?);
    writeln!(w, "episode,step,time,max_joint_acc,keyframe_reached")?;
    for ep in &report.episodes {
        for p in &ep.trace {
            writeln!(w, "{},{},{},{},{}", ep.index, p.step, p.time, p.max_joint_acc, u8::from(p.keyframe_reached))?;
        }
    }
    w.flush()?;
    println!(
        "success_rate {:.4}  mean_episode_length {:.1}  keyframe_acc_ratio {}",
        report.success_rate,
        report.mean_episode_length,
        report.keyframe_acc_ratio.map_or("n/a".into(), |r| format!("{r:.4}"))
    );
    Ok(0)
}

fn cmd_replay(checkpoint: &Path, motion: Option<&str>, seed: u64, out: &Path) -> CmdResult {
    let (ck, shared) = load_for_eval(checkpoint, motion)?;
    let agent = ck.restore_agent(&shared)?;
    let frames = rl::replay(&agent.policy, shared, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(out)?);
    for f in &frames {
        serde_json::to_writer(&mut w, f)?;
        writeln!(w)?;
    }
    w.flush()?;
    println!("wrote {} ({} steps)", out.display(), frames.len());
    Ok(0)
}

fn read_trace(path: &Path) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>), Error> {
    let text = fs::read_to_string(path)?;
    let mut line = Vec::new();
    let mut marks = Vec::new();
    for (i, l) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::schema(format!("{} line {}", path.display(), i + 1), "expected episode,step,time,max_joint_acc,keyframe_reached");
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let ep: usize = f[0].parse().map_err(|_| bad())?;
        if ep != 0 {
            continue;
        }
        let step: f64 = f[1].parse().map_err(|_| bad())?;
        let acc: f64 = f[3].parse().map_err(|_| bad())?;
        line.push((step, acc));
        if f[4].trim() == "1" {
            marks.push((step, acc));
        }
    }
    Ok((line, marks))
}

fn cmd_plot(metrics: &[PathBuf], trace: Option<&Path>, out: &Path) -> CmdResult {
    let mut runs = Vec::new();
    for m in metrics {
        let text = fs::read_to_string(m)?;
        let rows = rl::parse_metrics(&text).map_err(|e| match e {
            Error::Schema { path, message } => Error::schema(format!("{} {path}", m.display()), message),
            e => e,
        })?;
        let name = m.parent().and_then(|p| p.file_name()).or(m.file_stem()).map_or("run".into(), |s| s.to_string_lossy().into_owned());
        runs.push((name, rows));
    }
    fs::create_dir_all(out)?;
    let chart = |title: &str, y: &str, f: fn(&rl::MetricsRow) -> f64| Chart {
        title: title.into(),
        x_label: "iteration".into(),
        y_label: y.into(),
        series: runs.iter().map(|(n, rows)| Series { name: n.clone(), points: rows.iter().map(|r| (r.iter as f64, f(r))).collect() }).collect(),
        markers: Vec::new(),
    };
    fs::write(out.join("success_rate.svg"), chart("Success rate", "success rate", |r| r.success_rate).to_svg())?;
    fs::write(out.join("max_joint_acc.svg"), chart("Mean max joint acceleration", "rad/s²", |r| r.max_joint_acc).to_svg())?;
    if let Some(t) = trace {
        let (points, markers) = read_trace(t)?;
        let c = Chart {
            title: "Max joint acceleration (episode 0)".into(),
            x_label: "step".into(),
            y_label: "rad/s²".into(),
            series: vec![Series { name: "max |joint acc|".into(), points }],
            markers,
        };
        fs::write(out.join("joint_acc_trace.svg"), c.to_svg())?;
    }
    println!("wrote charts to {}", out.display());
    Ok(0)
}

fn cmd_gradcheck(seed: u64, inject_broken: bool) -> CmdResult {
    let t0 = Instant::now();
    let mut results = gradcheck::run_suite(seed)?;
    if inject_broken {
        results.push(gradcheck::broken_backward_check(seed)?);
    }
    println!("{:<16} {:>7} {:>12} {:>8}  result", "check", "coords", "max_rel_err", "tol");
    for r in &results {
        println!("{:<16} {:>7} {:>12.3e} {:>8.0e}  {}", r.name, r.coords, r.max_rel_err, r.tol, if r.passed() { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} checks, {failed} failed, {:.1} s", results.len(), t0.elapsed().as_secs_f64());
    Ok(if failed == 0 { 0 } else { EXIT_RUNTIME })
}
