//! A trained or in-training agent and its binary checkpoint bundle.
//!
//! ```text
//! magic        4 bytes  "NFWA"
//! version      u16      1
//! header_len   u64
//! header       JSON     rule, config, optimizer states
//! networks     actor, actor target, Q_D, Q_D target, Q_R, Q_R target,
//!              then mixed and mixed target when present; each in the
//!              single-network format
//! ```

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Actor, Critic, CriticPair, TrainerConfig};
use crate::codec::StateVector;
use crate::error::{Error, Result};
use crate::nfwpo::ops::{feasible_set, project, DeltaGrid};
use crate::nn::checkpoint::{read_network, write_network};
use crate::nn::{Mlp, Network, OptimState, ParamVector};

pub const AGENT_MAGIC: &[u8; 4] = b"NFWA";
pub const AGENT_VERSION: u16 = 1;

/// How the actor is updated from the critics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActorRule {
    /// Frank-Wolfe regression inside the rate-critic feasible set.
    Nfwpo,
    /// Regression toward the unconstrained distortion-critic grid argmax.
    UnconstrainedArgmax,
    /// Policy gradient through one critic fit to `r_D + λ r_R`.
    SingleCritic { lambda: f64 },
    /// Policy gradient through Q_R after a budget violation, Q_D otherwise.
    DualCritic { tolerance: f64 },
}

impl ActorRule {
    pub fn method(self) -> &'static str {
        match self {
            ActorRule::Nfwpo => "nfwpo",
            ActorRule::UnconstrainedArgmax => "nfwpo-unconstrained",
            ActorRule::SingleCritic { .. } => "single",
            ActorRule::DualCritic { .. } => "dual",
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            ActorRule::SingleCritic { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => Err(
                Error::InvalidConfig(format!("lambda: must be non-negative, got {lambda}")),
            ),
            ActorRule::DualCritic { tolerance } if !(tolerance >= 0.0 && tolerance.is_finite()) => {
                Err(Error::InvalidConfig(format!(
                    "tolerance: must be non-negative, got {tolerance}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Whether greedy actions are projected onto the rate-critic feasible set.
    pub fn projects_greedy_actions(self) -> bool {
        matches!(self, ActorRule::Nfwpo)
    }
}

impl fmt::Display for ActorRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.method())
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub rule: ActorRule,
    pub config: TrainerConfig,
    pub actor: Actor,
    pub critics: CriticPair,
    /// Mixed-reward critic of the single-critic rule.
    pub mixed: Option<Critic>,
}

impl Agent {
    /// Fresh networks drawn from the `init` stream of `config.seed`.
    pub fn new(config: TrainerConfig, rule: ActorRule) -> Result<Self> {
        config.validate()?;
        rule.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(config.seed, "init"));
        let actor = Actor::new(&config, &mut rng)?;
        let critics = CriticPair::new(&config, &mut rng)?;
        let mixed = match rule {
            ActorRule::SingleCritic { .. } => Some(Critic::for_config(&config, &mut rng)?),
            _ => None,
        };
        Ok(Self {
            rule,
            config,
            actor,
            critics,
            mixed,
        })
    }

    /// Noise-free delta QP. Feasible-set rules execute the projection of the
    /// actor output.
    pub fn greedy_action(&self, state: &StateVector) -> Result<f64> {
        let raw = self.actor.act(state)?;
        if !self.rule.projects_greedy_actions() {
            return Ok(raw);
        }
        let set = feasible_set(
            &self.critics.q_r,
            state,
            self.config.epsilon,
            state.base_qp,
            &DeltaGrid::from_config(&self.config),
        )?;
        Ok(project(state.base_qp + raw, &set, self.config.projection) - state.base_qp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = Header {
            rule: self.rule,
            config: self.config.clone(),
            actor_opt: self.actor.opt.clone(),
            q_d_opt: self.critics.q_d.opt.clone(),
            q_r_opt: self.critics.q_r.opt.clone(),
            mixed_opt: self.mixed.as_ref().map(|c| c.opt.clone()),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(AGENT_MAGIC)?;
        w.write_all(&AGENT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let spec = self.actor.net.spec();
        write_network(w, spec, &self.actor.net.params)?;
        write_network(w, spec, &self.actor.target)?;
        for c in [&self.critics.q_d, &self.critics.q_r]
            .into_iter()
            .chain(self.mixed.as_ref())
        {
            write_network(w, c.net.spec(), &c.net.params)?;
            write_network(w, c.net.spec(), &c.target)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
        if &magic != AGENT_MAGIC {
            return Err(Error::Checkpoint("not an agent checkpoint (bad magic)".into()));
        }
        let mut v = [0u8; 2];
        r.read_exact(&mut v)?;
        let version = u16::from_le_bytes(v);
        if version != AGENT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported agent checkpoint version {version}"
            )));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 26 {
            return Err(Error::Checkpoint(format!("implausible header length {len}")));
        }
        let mut json = vec![0u8; len as usize];
        r.read_exact(&mut json)
            .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
        let h: Header = serde_json::from_slice(&json)?;
        h.config.validate()?;
        h.rule.validate()?;

        let actor_pair = read_pair(r, "actor")?;
        let q_d = read_pair(r, "distortion critic")?;
        let q_r = read_pair(r, "rate critic")?;
        let mixed = match h.mixed_opt {
            Some(opt) => Some(critic_from(read_pair(r, "mixed critic")?, opt, "mixed critic")?),
            None => None,
        };
        let actor_net = actor_pair.0;
        check_opt(&h.actor_opt, &actor_net, "actor")?;
        let actor = Actor {
            net: actor_net,
            target: actor_pair.1,
            opt: h.actor_opt,
        };
        Ok(Self {
            rule: h.rule,
            critics: CriticPair {
                q_d: critic_from(q_d, h.q_d_opt, "distortion critic")?,
                q_r: critic_from(q_r, h.q_r_opt, "rate critic")?,
                gamma: h.config.gamma,
                n_step: h.config.n_step,
            },
            config: h.config,
            actor,
            mixed,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    rule: ActorRule,
    config: TrainerConfig,
    actor_opt: OptimState,
    q_d_opt: OptimState,
    q_r_opt: OptimState,
    mixed_opt: Option<OptimState>,
}

fn read_pair<R: Read>(r: &mut R, what: &str) -> Result<(Network, ParamVector)> {
    let (spec, params) =
        read_network(r).map_err(|e| Error::Checkpoint(format!("{what}: {e}")))?;
    let (tspec, target) =
        read_network(r).map_err(|e| Error::Checkpoint(format!("{what} target: {e}")))?;
    if tspec != spec {
        return Err(Error::Checkpoint(format!(
            "{what}: target architecture differs from the live network"
        )));
    }
    Ok((
        Network {
            mlp: Mlp::new(spec)?,
            params,
        },
        target,
    ))
}

fn check_opt(opt: &OptimState, net: &Network, what: &str) -> Result<()> {
    if opt.first_moment.len() != net.params.len() || opt.second_moment.len() != net.params.len() {
        return Err(Error::Checkpoint(format!(
            "{what}: optimizer state does not match {} parameters",
            net.params.len()
        )));
    }
    Ok(())
}

fn critic_from(pair: (Network, ParamVector), opt: OptimState, what: &str) -> Result<Critic> {
    check_opt(&opt, &pair.0, what)?;
    if pair.0.spec().input_width() != crate::agents::CRITIC_INPUT_DIM {
        return Err(Error::Checkpoint(format!(
            "{what}: expected {} inputs, found {}",
            crate::agents::CRITIC_INPUT_DIM,
            pair.0.spec().input_width()
        )));
    }
    Ok(Critic {
        net: pair.0,
        target: pair.1,
        opt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rule: ActorRule) -> Agent {
        let config = TrainerConfig {
            hidden_widths: vec![6, 5],
            seed: 17,
            ..TrainerConfig::default()
        };
        Agent::new(config, rule).unwrap()
    }

    fn bytes(a: &Agent) -> Vec<u8> {
        let mut v = Vec::new();
        a.write_to(&mut v).unwrap();
        v
    }

    #[test]
    fn checkpoint_round_trips_byte_identically() {
        for rule in [
            ActorRule::Nfwpo,
            ActorRule::SingleCritic { lambda: 0.1 },
            ActorRule::DualCritic { tolerance: 0.05 },
        ] {
            let mut a = small(rule);
            a.actor.target.values[0] += 0.25;
            a.critics.q_r.opt.step_count = 9;
            let b = bytes(&a);
            let back = Agent::read_from(&mut b.as_slice()).unwrap();
            assert_eq!(bytes(&back), b);
            assert_eq!(back.actor.target, a.actor.target);
            assert_eq!(back.critics.q_r.opt, a.critics.q_r.opt);
            assert_eq!(back.rule, rule);
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let b = bytes(&small(ActorRule::Nfwpo));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Agent::read_from(&mut bad.as_slice()).is_err());
        let cut = &b[..b.len() - 3];
        assert!(Agent::read_from(&mut &cut[..]).is_err());
    }

    #[test]
    fn same_seed_same_networks() {
        assert_eq!(bytes(&small(ActorRule::Nfwpo)), bytes(&small(ActorRule::Nfwpo)));
    }

    #[test]
    fn greedy_nfwpo_actions_stay_on_the_grid_range() {
        let a = small(ActorRule::Nfwpo);
        let s = StateVector::from_array([0.2, 0.3, 0.2, 0.3, 0.5, 8.0, 1.0, 0.4, 30.0]);
        let d = a.greedy_action(&s).unwrap();
        assert!((-5.0..=5.0).contains(&d));
    }
}
