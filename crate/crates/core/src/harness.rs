//! Experiment orchestration: training runs, greedy rollouts, SCLAR metrics,
//! sweeps and metric files.
//!
//! One episode is one frame of `frame_slots` slots. The environment is never
//! reset between episodes, so the observation carried across a frame boundary
//! is the last slot of the previous frame.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{build_fc_dqn, build_res_dqn, oracle_action, AgentKind, RandomPolicy};
use crate::dqn::{AgentConfig, Experience, QAgent};
use crate::env::{Action, Env, UtilityParams};
use crate::error::{Error, Result};
use crate::topology::{build_network, NetworkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub agent: AgentKind,
    pub learner: AgentConfig,
    /// Training episodes; overrides `network.total_frames`.
    pub episodes: usize,
    /// Frames averaged by greedy evaluation.
    pub realizations: usize,
    /// Episodes in the running SCLAR average.
    pub sclar_window: usize,
    /// Emit one metrics row per slot in addition to the per-episode rows.
    pub slot_rows: bool,
    pub out_dir: Option<PathBuf>,
    pub tag: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            agent: AgentKind::Resdqn,
            learner: AgentConfig::default(),
            episodes: 3000,
            realizations: 100,
            sclar_window: 100,
            slot_rows: true,
            out_dir: None,
            tag: "run".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format { path: PathBuf::from("<inline>"), detail: e.to_string() })
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), detail: e.to_string() })
    }

    /// Network configuration with the horizon set to the episode count.
    pub fn effective_network(&self) -> NetworkConfig {
        NetworkConfig { total_frames: self.episodes, ..self.network.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes", "at least one episode is required"));
        }
        if self.realizations == 0 {
            return Err(Error::config("realizations", "must be positive"));
        }
        if self.sclar_window == 0 {
            return Err(Error::config("sclar_window", "must be positive"));
        }
        if self.tag.is_empty() || self.tag.contains(['/', '\\']) {
            return Err(Error::config("tag", "must be a non-empty file-name fragment"));
        }
        self.effective_network().validate()?;
        self.learner.validate()
    }
}

/// One metrics record. Slot rows carry `slot`, `action` and `ack`; episode
/// rows leave them empty and fill `epoch_loss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub slot: Option<usize>,
    /// Reward summed since the start of the episode.
    pub cumulative_reward: f64,
    /// `cumulative_reward` divided by the slots played so far in the episode.
    pub average_reward: f64,
    /// SCLAR of the slot, or the episode's mean slot SCLAR.
    pub sclar: f64,
    /// Trailing mean of `sclar` over the configured window.
    pub average_sclar: f64,
    /// Training loss of the slot, or of the episode's last gradient step.
    pub loss: Option<f64>,
    /// Mean loss over the episode's gradient steps.
    pub epoch_loss: Option<f64>,
    pub action: Option<u8>,
    pub ack: Option<String>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Csv,
    Jsonl,
}

impl MetricsFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MetricsFormat::Csv => "csv",
            MetricsFormat::Jsonl => "jsonl",
        }
    }
}

pub fn emit_metrics(rows: &[MetricsRow], path: &Path, format: MetricsFormat) -> Result<()> {
    let fmt_err = |e: &dyn std::fmt::Display| Error::Format { path: path.to_path_buf(), detail: e.to_string() };
    match format {
        MetricsFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| fmt_err(&e))?;
            for r in rows {
                w.serialize(r).map_err(|e| fmt_err(&e))?;
            }
            if rows.is_empty() {
                w.write_record([
                    "episode",
                    "slot",
                    "cumulative_reward",
                    "average_reward",
                    "sclar",
                    "average_sclar",
                    "loss",
                    "epoch_loss",
                    "action",
                    "ack",
                    "epsilon",
                ])
                .map_err(|e| fmt_err(&e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        MetricsFormat::Jsonl => {
            let mut out = String::new();
            for r in rows {
                out.push_str(&serde_json::to_string(r).map_err(|e| fmt_err(&e))?);
                out.push('\n');
            }
            fs::write(path, out).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_metrics(path: &Path, format: MetricsFormat) -> Result<Vec<MetricsRow>> {
    let fmt_err = |e: &dyn std::fmt::Display| Error::Format { path: path.to_path_buf(), detail: e.to_string() };
    match format {
        MetricsFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|e| fmt_err(&e))?;
            r.deserialize().map(|row| row.map_err(|e| fmt_err(&e))).collect()
        }
        MetricsFormat::Jsonl => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            text.lines()
                .map(|l| serde_json::from_str(l).map_err(|e| fmt_err(&e)))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SclarMetrics {
    pub instantaneous: Vec<f64>,
    pub running_average: Vec<f64>,
}

/// Instantaneous SCLAR (sum of realized per-UE CLAR) per slot and its
/// trailing mean over `window` slots.
pub fn compute_sclar_metrics(clar_per_slot: &[Vec<f64>], window: usize) -> SclarMetrics {
    let instantaneous: Vec<f64> = clar_per_slot.iter().map(|c| c.iter().sum()).collect();
    let running_average = running_mean(&instantaneous, window);
    SclarMetrics { instantaneous, running_average }
}

/// Trailing mean over at most `window` most recent values.
pub fn running_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        acc += x;
        if i >= window {
            acc -= xs[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tag: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub episodes: usize,
    pub frame_slots: usize,
    /// Episodes in each of the first/last windows below.
    pub window: usize,
    pub mean_reward: f64,
    pub first_window_reward: f64,
    pub last_window_reward: f64,
    pub mean_sclar: f64,
    pub first_window_sclar: f64,
    pub last_window_sclar: f64,
    /// Mean epoch loss over the first and last tenth of the episodes.
    pub first_tenth_loss: Option<f64>,
    pub last_tenth_loss: Option<f64>,
    pub iue_successes: usize,
}

pub struct RunOutput {
    pub slot_rows: Vec<MetricsRow>,
    pub episode_rows: Vec<MetricsRow>,
    pub summary: RunSummary,
    /// Trained learner, for learning agents.
    pub agent: Option<QAgent>,
}

enum Driver {
    Learner(Box<QAgent>),
    Oracle,
    Random(RandomPolicy),
    Hold,
}

fn driver_for(cfg: &ExperimentConfig, env: &Env) -> Result<Driver> {
    let rngs = env.network().rngs;
    let total = cfg.episodes * env.network().frame_slots();
    Ok(match cfg.agent {
        AgentKind::Resdqn => Driver::Learner(Box::new(build_res_dqn(env.state_dim(), cfg.learner.clone(), total, &rngs)?)),
        AgentKind::Fcdqn => Driver::Learner(Box::new(build_fc_dqn(env.state_dim(), cfg.learner.clone(), total, &rngs)?)),
        AgentKind::Oracle => Driver::Oracle,
        AgentKind::Random => Driver::Random(RandomPolicy::new(&rngs)),
        AgentKind::Hold => Driver::Hold,
    })
}

fn tenth_mean(losses: &[Option<f64>], last: bool) -> Option<f64> {
    let n = (losses.len() / 10).max(1);
    let part = if last { &losses[losses.len() - n..] } else { &losses[..n] };
    let vals: Vec<f64> = part.iter().flatten().copied().collect();
    (!vals.is_empty()).then(|| mean(&vals))
}

/// Train (or just run, for fixed policies) for `cfg.episodes` frames.
/// Metric files and a checkpoint are written when `cfg.out_dir` is set.
pub fn run_training(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let network = build_network(&cfg.effective_network())?;
    let s_slots = network.frame_slots();
    let seed = network.rngs.master_seed();
    let mut env = Env::new(network, UtilityParams::default())?;
    let mut driver = driver_for(cfg, &env)?;
    let mut state = env.reset();

    let mut slot_rows = Vec::new();
    let mut episode_rows = Vec::with_capacity(cfg.episodes);
    let mut episode_sclar = Vec::with_capacity(cfg.episodes);
    let mut episode_reward = Vec::with_capacity(cfg.episodes);
    let mut episode_loss = Vec::with_capacity(cfg.episodes);
    let mut recent_slot_sclar = Vec::with_capacity(cfg.episodes * s_slots);
    let mut successes = 0;

    for episode in 1..=cfg.episodes {
        let mut cum = 0.0;
        let mut sclars = Vec::with_capacity(s_slots);
        let mut losses = Vec::new();
        let mut last_loss = None;
        for slot in 1..=s_slots {
            let action = match &mut driver {
                Driver::Learner(q) => Action::from_index(q.select_action(&state)?)?,
                Driver::Oracle => oracle_action(env.peek()?),
                Driver::Random(r) => r.act(),
                Driver::Hold => Action::Hold,
            };
            let res = env.step(action)?;
            let loss = match &mut driver {
                Driver::Learner(q) => {
                    let e = Experience { s: state, a: action.index(), r: res.reward, s_next: res.next_state.clone() };
                    match q.observe(e) {
                        Ok(l) => l,
                        Err(Error::NonFinite(what)) => {
                            return Err(Error::Diverged { episode, slot, detail: what });
                        }
                        Err(e) => return Err(e),
                    }
                }
                _ => None,
            };
            state = res.next_state;
            if let Some(l) = loss {
                losses.push(l);
                last_loss = Some(l);
            }
            if res.ack == crate::mac::AckStatus::Success {
                successes += 1;
            }
            let sclar: f64 = res.diagnostics.clar.iter().sum();
            cum += res.reward;
            sclars.push(sclar);
            recent_slot_sclar.push(sclar);
            if cfg.slot_rows {
                let k = recent_slot_sclar.len();
                let w = (cfg.sclar_window * s_slots).min(k);
                slot_rows.push(MetricsRow {
                    episode,
                    slot: Some(slot),
                    cumulative_reward: cum,
                    average_reward: cum / slot as f64,
                    sclar,
                    average_sclar: mean(&recent_slot_sclar[k - w..]),
                    loss,
                    epoch_loss: None,
                    action: Some(action.index() as u8),
                    ack: Some(res.ack.label().to_string()),
                    epsilon: epsilon_of(&driver),
                });
            }
        }
        let ep_sclar = mean(&sclars);
        episode_sclar.push(ep_sclar);
        episode_reward.push(cum);
        let epoch_loss = (!losses.is_empty()).then(|| mean(&losses));
        episode_loss.push(epoch_loss);
        let w = cfg.sclar_window.min(episode_sclar.len());
        episode_rows.push(MetricsRow {
            episode,
            slot: None,
            cumulative_reward: cum,
            average_reward: cum / s_slots as f64,
            sclar: ep_sclar,
            average_sclar: mean(&episode_sclar[episode_sclar.len() - w..]),
            loss: last_loss,
            epoch_loss,
            action: None,
            ack: None,
            epsilon: epsilon_of(&driver),
        });
    }

    let window = cfg.sclar_window.min(cfg.episodes);
    let avg_reward: Vec<f64> = episode_reward.iter().map(|r| r / s_slots as f64).collect();
    let summary = RunSummary {
        tag: cfg.tag.clone(),
        agent: cfg.agent,
        seed,
        episodes: cfg.episodes,
        frame_slots: s_slots,
        window,
        mean_reward: mean(&avg_reward),
        first_window_reward: mean(&avg_reward[..window]),
        last_window_reward: mean(&avg_reward[avg_reward.len() - window..]),
        mean_sclar: mean(&episode_sclar),
        first_window_sclar: mean(&episode_sclar[..window]),
        last_window_sclar: mean(&episode_sclar[episode_sclar.len() - window..]),
        first_tenth_loss: tenth_mean(&episode_loss, false),
        last_tenth_loss: tenth_mean(&episode_loss, true),
        iue_successes: successes,
    };
    let agent = match driver {
        Driver::Learner(q) => Some(*q),
        _ => None,
    };
    let out = RunOutput { slot_rows, episode_rows, summary, agent };
    if let Some(dir) = &cfg.out_dir {
        write_run(dir, &cfg.tag, &out)?;
    }
    Ok(out)
}

fn epsilon_of(d: &Driver) -> f64 {
    match d {
        Driver::Learner(q) => q.epsilon(),
        _ => 0.0,
    }
}

/// Write `<tag>.{slots,episodes}.{csv,jsonl}`, `<tag>.summary.json` and,
/// for learners, `<tag>.ckpt` under `dir`.
pub fn write_run(dir: &Path, tag: &str, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for format in [MetricsFormat::Csv, MetricsFormat::Jsonl] {
        let ext = format.extension();
        if !out.slot_rows.is_empty() {
            emit_metrics(&out.slot_rows, &dir.join(format!("{tag}.slots.{ext}")), format)?;
        }
        emit_metrics(&out.episode_rows, &dir.join(format!("{tag}.episodes.{ext}")), format)?;
    }
    let path = dir.join(format!("{tag}.summary.json"));
    let text = serde_json::to_string_pretty(&out.summary)
        .map_err(|e| Error::Format { path: path.clone(), detail: e.to_string() })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    if let Some(agent) = &out.agent {
        agent.checkpoint().save(&dir.join(format!("{tag}.ckpt")))?;
    }
    Ok(())
}

/// Actions, rewards and SCLAR of a sequence of frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollout {
    /// `[frame][slot]`.
    pub actions: Vec<Vec<Action>>,
    /// Whether each slot was free of pUE transmissions and jamming.
    pub free: Vec<Vec<bool>>,
    pub rewards: Vec<Vec<f64>>,
    pub sclar: Vec<Vec<f64>>,
}

impl Rollout {
    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards.iter().flatten().copied().collect::<Vec<_>>())
    }

    pub fn mean_sclar(&self) -> f64 {
        mean(&self.sclar.iter().flatten().copied().collect::<Vec<_>>())
    }
}

/// Play `frames` frames from a freshly reset environment.
pub fn rollout(
    env: &mut Env,
    frames: usize,
    mut choose: impl FnMut(&mut Env, &[f64]) -> Result<Action>,
) -> Result<Rollout> {
    let mut state = env.reset();
    let s_slots = env.network().frame_slots();
    let mut out = Rollout::default();
    for _ in 0..frames {
        let mut actions = Vec::with_capacity(s_slots);
        let mut free = Vec::with_capacity(s_slots);
        let mut rewards = Vec::with_capacity(s_slots);
        let mut sclar = Vec::with_capacity(s_slots);
        for _ in 0..s_slots {
            free.push(env.peek()?.is_free());
            let a = choose(env, &state)?;
            let res = env.step(a)?;
            actions.push(a);
            rewards.push(res.reward);
            sclar.push(res.diagnostics.clar.iter().sum());
            state = res.next_state;
        }
        out.actions.push(actions);
        out.free.push(free);
        out.rewards.push(rewards);
        out.sclar.push(sclar);
    }
    Ok(out)
}

/// Greedy evaluation of a trained agent over `cfg.realizations` frames.
pub fn evaluate_agent(cfg: &ExperimentConfig, agent: &QAgent) -> Result<Rollout> {
    let network = build_network(&cfg.effective_network())?;
    let mut env = Env::new(network, UtilityParams::default())?;
    let policy = crate::dqn::extract_policy(agent);
    rollout(&mut env, cfg.realizations, |_, s| policy.act(s))
}

/// A single point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPoint {
    FrameSize(usize),
    Roster { pues: usize, jammers: usize },
    Agent(AgentKind),
}

impl SweepPoint {
    pub fn label(&self) -> String {
        match self {
            SweepPoint::FrameSize(s) => format!("frame{s}"),
            SweepPoint::Roster { pues, jammers } => format!("pue{pues}-jam{jammers}"),
            SweepPoint::Agent(a) => a.label().to_string(),
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig) {
        match *self {
            SweepPoint::FrameSize(s) => cfg.network.frame_slots = s,
            SweepPoint::Roster { pues, jammers } => {
                cfg.network.pue_count = pues;
                cfg.network.jammer_count = jammers;
            }
            SweepPoint::Agent(a) => cfg.agent = a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub point: SweepPoint,
    pub outcome: std::result::Result<RunSummary, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

#[derive(Debug, Serialize)]
struct SweepCsvRow<'a> {
    point: String,
    status: &'a str,
    error: Option<&'a str>,
    mean_reward: Option<f64>,
    last_window_reward: Option<f64>,
    mean_sclar: Option<f64>,
    last_window_sclar: Option<f64>,
}

impl SweepReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let fmt_err = |e: csv::Error| Error::Format { path: path.to_path_buf(), detail: e.to_string() };
        let mut w = csv::Writer::from_path(path).map_err(fmt_err)?;
        for e in &self.entries {
            let s = e.outcome.as_ref().ok();
            w.serialize(SweepCsvRow {
                point: e.point.label(),
                status: if s.is_some() { "ok" } else { "failed" },
                error: e.outcome.as_ref().err().map(String::as_str),
                mean_reward: s.map(|s| s.mean_reward),
                last_window_reward: s.map(|s| s.last_window_reward),
                mean_sclar: s.map(|s| s.mean_sclar),
                last_window_sclar: s.map(|s| s.last_window_sclar),
            })
            .map_err(fmt_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Independent runs, one per point, executed in parallel. A failing run is
/// recorded in its entry and does not stop the others.
pub fn run_sweep(base: &ExperimentConfig, points: &[SweepPoint]) -> SweepReport {
    let entries = points
        .par_iter()
        .map(|p| {
            let mut cfg = base.clone();
            p.apply(&mut cfg);
            cfg.tag = format!("{}-{}", base.tag, p.label());
            let outcome = run_training(&cfg).map(|o| o.summary).map_err(|e| e.to_string());
            SweepEntry { point: p.clone(), outcome }
        })
        .collect();
    SweepReport { entries }
}
