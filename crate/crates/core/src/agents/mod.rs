//! Channel-selection policies.
//!
//! Each agent owns one [`AgentState`]. The engine calls [`AgentState::select`]
//! when the agent has a packet to send and [`AgentState::update`] once the
//! gNB feedback for that attempt is known. Agents never see each other's state.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod neural;
mod random;
mod thompson;
mod ucb;

pub use neural::{NaState, NeuralConfig};
pub use random::ra_select;
pub use thompson::{ts_select, ts_update, TsState};
pub use ucb::{argmax_lowest, ucb_indices, ucb_select, ucb_update, UcbAgent, UcbState, UcbTieBreak};

/// A channel, i.e. a bandit arm. Stored zero-based; [`ArmIndex::number`]
/// gives the one-based channel number used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArmIndex(usize);

impl ArmIndex {
    pub const fn from_zero_based(index: usize) -> Self {
        Self(index)
    }

    /// `k` in `1..=K`.
    pub fn from_number(k: usize) -> Self {
        assert!(k >= 1, "arm numbers start at 1");
        Self(k - 1)
    }

    pub const fn index(self) -> usize {
        self.0
    }

    pub const fn number(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for ArmIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "arm {}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reward {
    Failure,
    Success,
}

impl Reward {
    pub fn from_success(success: bool) -> Self {
        if success {
            Reward::Success
        } else {
            Reward::Failure
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Reward::Failure => 0.0,
            Reward::Success => 1.0,
        }
    }

    pub fn is_success(self) -> bool {
        self == Reward::Success
    }
}

/// Input of the neural agent: per-channel success flags from the last
/// feedback it received, plus whether the packet about to go out is a
/// retransmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextVector {
    pub channel_success: Vec<bool>,
    pub retransmission: bool,
}

impl ContextVector {
    /// Cold-start context: no feedback yet.
    pub fn empty(channels: usize) -> Self {
        Self {
            channel_success: vec![false; channels],
            retransmission: false,
        }
    }

    pub fn len(&self) -> usize {
        self.channel_success.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Indices of the entries equal to 1.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        let k = self.channel_success.len();
        self.channel_success
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .chain(self.retransmission.then_some(k))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.channel_success.iter().map(|&s| s as u8 as f64).collect();
        v.push(self.retransmission as u8 as f64);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Uniform random access, no learning.
    Ra,
    Ucb,
    Ts,
    /// Contextual policy-gradient network.
    Na,
    /// Reference ceiling: agent `n` always uses channel `n mod K`.
    Genie,
}

impl AgentKind {
    pub const LEARNERS: [AgentKind; 4] = [AgentKind::Ra, AgentKind::Ucb, AgentKind::Ts, AgentKind::Na];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Ra => "ra",
            AgentKind::Ucb => "ucb",
            AgentKind::Ts => "ts",
            AgentKind::Na => "na",
            AgentKind::Genie => "genie",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    /// UCB exploration constant.
    pub ucb_c: f64,
    pub ucb_tie_break: UcbTieBreak,
    pub neural: NeuralConfig,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            ucb_c: 2.0,
            ucb_tie_break: UcbTieBreak::PerAgentOrder,
            neural: NeuralConfig::default(),
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ucb_c.is_finite() && self.ucb_c >= 0.0) {
            return Err(Error::config("learning.ucb_c", "must be finite and >= 0"));
        }
        self.neural.validate()
    }
}

/// Per-agent policy memory.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentState {
    Ra { channels: usize },
    Ucb(UcbAgent),
    Ts(TsState),
    Na(Box<NaState>),
    Genie(ArmIndex),
}

impl AgentState {
    pub fn new<R: Rng + ?Sized>(
        kind: AgentKind,
        agent: usize,
        channels: usize,
        learning: &LearningConfig,
        rng: &mut R,
    ) -> Self {
        match kind {
            AgentKind::Ra => AgentState::Ra { channels },
            AgentKind::Ucb => AgentState::Ucb(UcbAgent::new(channels, learning.ucb_c, learning.ucb_tie_break, rng)),
            AgentKind::Ts => AgentState::Ts(TsState::new(channels)),
            AgentKind::Na => AgentState::Na(Box::new(NaState::new(channels, &learning.neural, rng))),
            AgentKind::Genie => AgentState::Genie(ArmIndex::from_zero_based(agent % channels)),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            AgentState::Ra { .. } => AgentKind::Ra,
            AgentState::Ucb(_) => AgentKind::Ucb,
            AgentState::Ts(_) => AgentKind::Ts,
            AgentState::Na(_) => AgentKind::Na,
            AgentState::Genie(_) => AgentKind::Genie,
        }
    }

    pub fn select<R: Rng + ?Sized>(&mut self, ctx: &ContextVector, rng: &mut R) -> Result<ArmIndex> {
        Ok(match self {
            AgentState::Ra { channels } => ra_select(*channels, rng),
            AgentState::Ucb(s) => s.select(),
            AgentState::Ts(s) => ts_select(s, rng),
            AgentState::Na(s) => s.select(ctx, rng)?,
            AgentState::Genie(arm) => *arm,
        })
    }

    pub fn update(&mut self, ctx: &ContextVector, arm: ArmIndex, reward: Reward) -> Result<()> {
        match self {
            AgentState::Ra { .. } | AgentState::Genie(_) => {}
            AgentState::Ucb(s) => s.update(arm, reward),
            AgentState::Ts(s) => ts_update(s, arm, reward),
            AgentState::Na(s) => s.update(ctx, arm, reward)?,
        }
        Ok(())
    }

    /// Whether the policy reads the broadcast feedback as context.
    pub fn uses_context(&self) -> bool {
        matches!(self, AgentState::Na(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_numbering() {
        let a = ArmIndex::from_number(3);
        assert_eq!(a.index(), 2);
        assert_eq!(a.number(), 3);
        assert_eq!(a.to_string(), "arm 3");
    }

    #[test]
    fn context_layout() {
        let ctx = ContextVector {
            channel_success: vec![true, false, true],
            retransmission: true,
        };
        assert_eq!(ctx.len(), 4);
        assert_eq!(ctx.to_dense(), vec![1.0, 0.0, 1.0, 1.0]);
        assert_eq!(ctx.active().collect::<Vec<_>>(), vec![0, 2, 3]);
        assert!(ContextVector::empty(5).to_dense().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn genie_spreads_agents() {
        let learning = LearningConfig::default();
        let mut rng = rand::rng();
        let ctx = ContextVector::empty(4);
        let arms: Vec<_> = (0..4)
            .map(|n| {
                AgentState::new(AgentKind::Genie, n, 4, &learning, &mut rng)
                    .select(&ctx, &mut rng)
                    .unwrap()
            })
            .collect();
        assert_eq!(arms, (0..4).map(ArmIndex::from_zero_based).collect::<Vec<_>>());
    }
}
