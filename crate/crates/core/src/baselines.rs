//! Reference policies: the omniscient network-aware UE, the fully connected
//! DQN variant and two trivial controls.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::{AgentConfig, QAgent};
use crate::env::{Action, SlotDraw, AGENT_CELL};
use crate::error::Result;
use crate::neuralnet::Architecture;
use crate::topology::{EntityId, Purpose, RngSet, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Resdqn,
    Fcdqn,
    Oracle,
    Random,
    Hold,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] =
        [AgentKind::Resdqn, AgentKind::Fcdqn, AgentKind::Oracle, AgentKind::Random, AgentKind::Hold];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Resdqn => "resdqn",
            AgentKind::Fcdqn => "fcdqn",
            AgentKind::Oracle => "oracle",
            AgentKind::Random => "random",
            AgentKind::Hold => "hold",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, AgentKind::Resdqn | AgentKind::Fcdqn)
    }
}

impl std::str::FromStr for AgentKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| crate::Error::config("agent", format!("unknown agent `{s}`")))
    }
}

/// Dispatch iff no pUE transmits and no jammer is active in the agent cell.
pub fn oracle_action(draw: &SlotDraw) -> Action {
    if draw.is_free() {
        Action::Dispatch
    } else {
        Action::Hold
    }
}

/// Uniform coin flip per slot.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: Stream,
}

impl RandomPolicy {
    pub fn new(rngs: &RngSet) -> Self {
        Self { rng: rngs.stream(Purpose::Exploration, EntityId::iue(AGENT_CELL)) }
    }

    pub fn act(&mut self) -> Action {
        if self.rng.random_bool(0.5) {
            Action::Dispatch
        } else {
            Action::Hold
        }
    }
}

/// Q-agent on the residual architecture.
pub fn build_res_dqn(state_dim: usize, config: AgentConfig, total_slots: usize, rngs: &RngSet) -> Result<QAgent> {
    QAgent::new(Architecture::resnet(state_dim), config, total_slots, rngs)
}

/// Q-agent on the same trunk without residual blocks: 32, 128, 128, 2.
pub fn build_fc_dqn(state_dim: usize, config: AgentConfig, total_slots: usize, rngs: &RngSet) -> Result<QAgent> {
    QAgent::new(Architecture::fully_connected(state_dim), config, total_slots, rngs)
}

/// Q-agent with a single affine layer.
pub fn build_linear_dqn(state_dim: usize, config: AgentConfig, total_slots: usize, rngs: &RngSet) -> Result<QAgent> {
    QAgent::new(Architecture::linear(state_dim, Action::ALL.len()), config, total_slots, rngs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fc_variant_is_smaller() {
        let rngs = RngSet::new(3);
        let res = build_res_dqn(16, AgentConfig::default(), 100, &rngs).unwrap();
        let fc = build_fc_dqn(16, AgentConfig::default(), 100, &rngs).unwrap();
        let lin = build_linear_dqn(16, AgentConfig::default(), 100, &rngs).unwrap();
        assert_eq!(fc.prediction().layers().len(), 4);
        assert_eq!(lin.prediction().layers().len(), 1);
        assert!(fc.prediction().param_count() < res.prediction().param_count());
    }

    #[test]
    fn agent_labels_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(k.label().parse::<AgentKind>().unwrap(), k);
        }
        assert!("gru".parse::<AgentKind>().is_err());
    }
}
