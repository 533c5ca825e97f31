//! Whole training runs: the episode loop, a closing evaluation and the
//! persisted report.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::TrainerConfig;
use crate::codec::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_policy, EvalSummary, Policy};
use crate::nfwpo::agent::{ActorRule, Agent};
use crate::nfwpo::trainer::{EpisodeMetrics, InvariantCounters, TrainEvent, Trainer};

pub const REPORT_SCHEMA: &str = "nfwpo.training-report.v1";
pub const METRICS_SCHEMA: &str = "nfwpo.metrics.v1";

pub const FINAL_CHECKPOINT: &str = "agent.nfwa";
pub const DIVERGED_CHECKPOINT: &str = "diverged.nfwa";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Evaluation GOPs per (profile, level, budget) cell after training.
    pub eval_gops_per_cell: usize,
    /// Where the final checkpoint, or a snapshot on divergence, is written.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            eval_gops_per_cell: 4,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub schema: String,
    pub method: String,
    pub rule: ActorRule,
    pub seed: u64,
    pub version: String,
    pub config: TrainerConfig,
    pub env: EnvConfig,
    pub invariants: InvariantCounters,
    pub evaluation: EvalSummary,
    pub metrics: Vec<EpisodeMetrics>,
}

impl TrainingReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let report: Self = serde_json::from_reader(std::io::BufReader::new(
            std::fs::File::open(path)?,
        ))?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::InvalidConfig(format!(
                "{}: unsupported report schema {:?}",
                path.display(),
                report.schema
            )));
        }
        Ok(report)
    }
}

pub struct TrainingRun {
    pub agent: Agent,
    pub report: TrainingReport,
}

/// Trains `rule` from scratch, then evaluates the greedy policy on the
/// deterministic evaluation GOPs of `env`.
pub fn train_with_rule(
    config: TrainerConfig,
    rule: ActorRule,
    env: EnvConfig,
    options: &RunOptions,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<TrainingRun> {
    let seed = config.seed;
    let mut trainer = Trainer::new(Agent::new(config, rule)?, env)?;
    let mut metrics = Vec::with_capacity(trainer.agent.config.episodes);
    while trainer.episodes_done() < trainer.agent.config.episodes {
        match trainer.step(observer) {
            Ok(m) => {
                log::debug!(
                    "{} episode {}: deviation {:.4}, greedy {:.4}",
                    rule,
                    m.episode,
                    m.rate_deviation,
                    m.greedy_rate_deviation
                );
                metrics.push(m);
            }
            Err(e) => {
                if let Some(dir) = &options.checkpoint_dir {
                    let path = dir.join(DIVERGED_CHECKPOINT);
                    match trainer.agent.save(&path) {
                        Ok(()) => log::error!("diagnostic snapshot written to {}", path.display()),
                        Err(se) => log::error!("could not write diagnostic snapshot: {se}"),
                    }
                }
                return Err(e);
            }
        }
    }
    let Trainer {
        agent,
        env,
        invariants,
        ..
    } = trainer;
    let structure = env.structure.build()?;
    let specs = env.evaluation_specs(crate::seed::derive(seed, "eval"), options.eval_gops_per_cell);
    let evaluation = evaluate_policy(Policy::Agent(&agent), &structure, &specs)?.summary;
    if let Some(dir) = &options.checkpoint_dir {
        agent.save(&dir.join(FINAL_CHECKPOINT))?;
    }
    let report = TrainingReport {
        schema: REPORT_SCHEMA.into(),
        method: rule.method().into(),
        rule,
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
        config: agent.config.clone(),
        env,
        invariants,
        evaluation,
        metrics,
    };
    Ok(TrainingRun { agent, report })
}

pub fn train_nfwpo(
    config: TrainerConfig,
    env: EnvConfig,
    options: &RunOptions,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<TrainingRun> {
    train_with_rule(config, ActorRule::Nfwpo, env, options, observer)
}

/// Column order is part of the format.
pub const METRICS_COLUMNS: [&str; 11] = [
    "episode",
    "noise_scale",
    "rate_deviation",
    "quality_gain",
    "greedy_rate_deviation",
    "greedy_quality_gain",
    "critic_loss_d",
    "critic_loss_r",
    "actor_loss",
    "fallback_fraction",
    "rate_critic_selected",
];

pub fn write_metrics_csv<W: Write>(w: &mut W, metrics: &[EpisodeMetrics]) -> std::io::Result<()> {
    writeln!(w, "# schema: {METRICS_SCHEMA}")?;
    writeln!(w, "{}", METRICS_COLUMNS.join(","))?;
    for m in metrics {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.episode,
            m.noise_scale,
            m.rate_deviation,
            m.quality_gain,
            m.greedy_rate_deviation,
            m.greedy_quality_gain,
            m.critic_loss_d,
            m.critic_loss_r,
            m.actor_loss,
            m.fallback_fraction,
            u8::from(m.rate_critic_selected)
        )?;
    }
    Ok(())
}
