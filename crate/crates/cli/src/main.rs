use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use jamnet::baselines::{build_fc_dqn, build_res_dqn, AgentKind};
use jamnet::env::{Env, UtilityParams};
use jamnet::harness::{evaluate_agent, run_sweep, run_training, ExperimentConfig, SweepPoint};
use jamnet::neuralnet::checkpoint::Checkpoint;
use jamnet::topology::build_network;

/// Train and evaluate anti-jamming channel-access agents.
#[derive(Parser)]
#[command(name = "jamnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training experiment and write its metrics.
    Train(Common),
    /// Run independent experiments over a grid of points.
    Sweep(SweepArgs),
    /// Greedy evaluation of a saved checkpoint.
    Eval(EvalArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// resdqn, fcdqn, oracle, random or hold.
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    frame_size: Option<usize>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    pues: Option<usize>,
    #[arg(long)]
    jammers: Option<usize>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    tag: Option<String>,
    /// Cancel stronger intra-cell UEs before decoding.
    #[arg(long)]
    ordered_sic: bool,
    /// Skip the per-slot metrics rows.
    #[arg(long)]
    no_slot_rows: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Frame sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    frame_sizes: Vec<usize>,
    /// `pues:jammers` pairs, comma separated.
    #[arg(long, value_delimiter = ',')]
    rosters: Vec<String>,
    /// Agent labels, comma separated.
    #[arg(long, value_delimiter = ',')]
    agents: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint file; defaults to `<out>/<tag>.ckpt`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_toml_file(p)?,
            None => ExperimentConfig::default(),
        };
        let n = &mut cfg.network;
        set(&mut n.master_seed, self.seed);
        set(&mut n.frame_slots, self.frame_size);
        set(&mut n.num_cells, self.cells);
        set(&mut n.pue_count, self.pues);
        set(&mut n.jammer_count, self.jammers);
        set(&mut n.antennas, self.antennas);
        n.ordered_sic |= self.ordered_sic;
        if let Some(a) = &self.agent {
            cfg.agent = a.parse()?;
        }
        set(&mut cfg.episodes, self.episodes);
        set(&mut cfg.realizations, self.realizations);
        set(&mut cfg.tag, self.tag.clone());
        cfg.slot_rows &= !self.no_slot_rows;
        cfg.out_dir = Some(self.out.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn train(args: &Common) -> Result<()> {
    let cfg = args.experiment()?;
    ensure_dir(&args.out)?;
    let out = run_training(&cfg)?;
    let s = &out.summary;
    println!("tag {}", s.tag);
    println!("agent {}", s.agent.label());
    println!("episodes {}", s.episodes);
    println!("mean_reward {:.6}", s.mean_reward);
    println!("last_window_reward {:.6}", s.last_window_reward);
    println!("mean_sclar {:.6}", s.mean_sclar);
    println!("last_window_sclar {:.6}", s.last_window_sclar);
    println!("written {}", args.out.display());
    Ok(())
}

fn parse_roster(s: &str) -> Result<SweepPoint> {
    let Some((p, j)) = s.split_once(':') else { bail!("roster `{s}` is not of the form pues:jammers") };
    Ok(SweepPoint::Roster {
        pues: p.trim().parse().with_context(|| format!("roster `{s}`"))?,
        jammers: j.trim().parse().with_context(|| format!("roster `{s}`"))?,
    })
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let base = args.common.experiment()?;
    let mut points: Vec<SweepPoint> = args.frame_sizes.iter().map(|&s| SweepPoint::FrameSize(s)).collect();
    for r in &args.rosters {
        points.push(parse_roster(r)?);
    }
    for a in &args.agents {
        points.push(SweepPoint::Agent(a.parse()?));
    }
    if points.is_empty() {
        bail!("no sweep points given");
    }
    ensure_dir(&args.common.out)?;
    let report = run_sweep(&base, &points);
    let path = args.common.out.join(format!("{}.sweep.csv", base.tag));
    report.write_csv(&path)?;
    let mut failed = 0;
    for e in &report.entries {
        match &e.outcome {
            Ok(s) => println!("{} ok mean_reward {:.6} mean_sclar {:.6}", e.point.label(), s.mean_reward, s.mean_sclar),
            Err(msg) => {
                failed += 1;
                println!("{} failed: {msg}", e.point.label());
            }
        }
    }
    println!("written {}", path.display());
    if failed > 0 {
        bail!("{failed} of {} sweep points failed", report.entries.len());
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.common.experiment()?;
    if !cfg.agent.is_learning() {
        bail!("agent `{}` has no checkpoint to evaluate", cfg.agent.label());
    }
    let path = args.checkpoint.clone().unwrap_or_else(|| args.common.out.join(format!("{}.ckpt", cfg.tag)));
    let ckpt = Checkpoint::load(&path)?;
    let network = build_network(&cfg.effective_network())?;
    let rngs = network.rngs;
    let total = cfg.episodes * network.frame_slots();
    let dim = Env::new(network, UtilityParams::default())?.state_dim();
    let mut agent = match cfg.agent {
        AgentKind::Fcdqn => build_fc_dqn(dim, cfg.learner.clone(), total, &rngs)?,
        _ => build_res_dqn(dim, cfg.learner.clone(), total, &rngs)?,
    };
    agent.restore(&ckpt).with_context(|| format!("restoring {}", path.display()))?;
    let r = evaluate_agent(&cfg, &agent)?;
    let free: usize = r.free.iter().flatten().filter(|&&f| f).count();
    let hits: usize = r
        .free
        .iter()
        .flatten()
        .zip(r.actions.iter().flatten())
        .filter(|(&f, a)| f && a.is_dispatch())
        .count();
    println!("frames {}", r.actions.len());
    println!("mean_reward {:.6}", r.mean_reward());
    println!("mean_sclar {:.6}", r.mean_sclar());
    println!("free_slots_used {hits}/{free}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
