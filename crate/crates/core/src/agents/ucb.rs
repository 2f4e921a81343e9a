use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ArmIndex, Reward};

/// How an agent orders channels when UCB indices tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UcbTieBreak {
    /// Lowest index in a channel permutation drawn once per agent. Agents
    /// with identical histories then still spread over different channels.
    #[default]
    PerAgentOrder,
    /// Lowest physical channel index for every agent.
    LowestIndex,
}

/// Upper-confidence-bound statistics of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbState {
    /// Empirical mean reward per arm.
    pub q: Vec<f64>,
    /// Plays per arm.
    pub n: Vec<u64>,
    /// Total decisions, always equal to the sum of `n`.
    pub t: u64,
    /// Exploration constant.
    pub c: f64,
}

impl UcbState {
    pub fn new(channels: usize, c: f64) -> Self {
        Self {
            q: vec![0.0; channels],
            n: vec![0; channels],
            t: 0,
            c,
        }
    }

    pub fn channels(&self) -> usize {
        self.q.len()
    }
}

/// Index of the first maximum; NaN entries never win.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// `Q(k) + c * sqrt(ln t / n(k))`, with unplayed arms at `+inf`.
pub fn ucb_indices(state: &UcbState) -> Vec<f64> {
    let log_t = (state.t.max(1) as f64).ln();
    state
        .q
        .iter()
        .zip(&state.n)
        .map(|(&q, &n)| {
            if n == 0 {
                f64::INFINITY
            } else {
                q + state.c * (log_t / n as f64).sqrt()
            }
        })
        .collect()
}

pub fn ucb_select(state: &UcbState) -> ArmIndex {
    if let Some(unplayed) = state.n.iter().position(|&n| n == 0) {
        return ArmIndex::from_zero_based(unplayed);
    }
    let log_t = (state.t.max(1) as f64).ln();
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (k, (&q, &n)) in state.q.iter().zip(&state.n).enumerate() {
        let v = q + state.c * (log_t / n as f64).sqrt();
        if v > best_value {
            best = k;
            best_value = v;
        }
    }
    ArmIndex::from_zero_based(best)
}

pub fn ucb_update(state: &mut UcbState, arm: ArmIndex, reward: Reward) {
    let k = arm.index();
    state.n[k] += 1;
    state.t += 1;
    state.q[k] += (reward.value() - state.q[k]) / state.n[k] as f64;
}

/// UCB statistics kept over private arm labels, plus the label-to-channel map.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbAgent {
    pub stats: UcbState,
    channel_of_label: Vec<usize>,
    label_of_channel: Vec<usize>,
}

impl UcbAgent {
    pub fn new<R: Rng + ?Sized>(channels: usize, c: f64, tie_break: UcbTieBreak, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..channels).collect();
        if tie_break == UcbTieBreak::PerAgentOrder {
            order.shuffle(rng);
        }
        let mut inverse = vec![0; channels];
        for (label, &ch) in order.iter().enumerate() {
            inverse[ch] = label;
        }
        Self {
            stats: UcbState::new(channels, c),
            channel_of_label: order,
            label_of_channel: inverse,
        }
    }

    pub fn select(&self) -> ArmIndex {
        ArmIndex::from_zero_based(self.channel_of_label[ucb_select(&self.stats).index()])
    }

    pub fn update(&mut self, channel: ArmIndex, reward: Reward) {
        let label = self.label_of_channel[channel.index()];
        ucb_update(&mut self.stats, ArmIndex::from_zero_based(label), reward);
    }

    /// Plays per physical channel.
    pub fn plays(&self, channel: ArmIndex) -> u64 {
        self.stats.n[self.label_of_channel[channel.index()]]
    }
}
