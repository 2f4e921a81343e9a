//! Contextual policy-gradient agent.
//!
//! A one-hidden-layer network maps the context (last per-channel feedback
//! plus a retransmission flag) to a softmax distribution over channels. After
//! each attempt the agent takes a score-function gradient step on
//! `-(r - b) * ln p(arm | ctx)`, where `b` is the running mean reward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ArmIndex, ContextVector, Reward};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Attempts per gradient step; 1 means a step after every attempt.
    pub batch_size: usize,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-2,
            batch_size: 1,
        }
    }
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("learning.neural.hidden", "must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning.neural.learning_rate", "must be finite and > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("learning.neural.batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Network weights plus optimiser bookkeeping.
///
/// Parameters live in one flat vector, in this order:
/// input weights (input-major, `inputs x hidden`), hidden biases,
/// output weights (output-major, `channels x hidden`), output biases.
///
/// Initialisation draws every weight and bias uniformly in `±1/sqrt(fan_in)`,
/// which keeps fresh policies close to uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct NaState {
    channels: usize,
    hidden: usize,
    learning_rate: f64,
    batch_size: usize,
    params: Vec<f64>,
    grad_accum: Vec<f64>,
    pending: usize,
    baseline: f64,
    baseline_count: u64,
    /// Updates discarded because the gradient was not finite.
    pub rejected_steps: u64,
    scratch: Scratch,
}

#[derive(Debug, Clone, PartialEq)]
struct Scratch {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    dlogit: Vec<f64>,
    delta_hidden: Vec<f64>,
    /// Context whose forward pass `hidden` and `probs` still hold, if the
    /// weights have not moved since.
    forward_of: Option<ContextVector>,
}

impl NaState {
    pub fn new<R: Rng + ?Sized>(channels: usize, cfg: &NeuralConfig, rng: &mut R) -> Self {
        let inputs = channels + 1;
        let hidden = cfg.hidden;
        let n_params = inputs * hidden + hidden + channels * hidden + channels;
        let mut params = Vec::with_capacity(n_params);
        let in_bound = 1.0 / (inputs as f64).sqrt();
        let out_bound = 1.0 / (hidden as f64).sqrt();
        for _ in 0..inputs * hidden + hidden {
            params.push(rng.random_range(-in_bound..in_bound));
        }
        for _ in 0..channels * hidden + channels {
            params.push(rng.random_range(-out_bound..out_bound));
        }
        Self {
            channels,
            hidden,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            grad_accum: vec![0.0; n_params],
            params,
            pending: 0,
            baseline: 0.0,
            baseline_count: 0,
            rejected_steps: 0,
            scratch: Scratch {
                hidden: vec![0.0; hidden],
                probs: vec![0.0; channels],
                dlogit: vec![0.0; channels],
                delta_hidden: vec![0.0; hidden],
                forward_of: None,
            },
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
        self.scratch.forward_of = None;
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let inputs = self.channels + 1;
        let b1 = inputs * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.channels * self.hidden;
        (b1, w2, b2)
    }

    fn check_context(&self, ctx: &ContextVector) -> Result<()> {
        if ctx.len() != self.channels + 1 {
            return Err(Error::config(
                "context",
                format!("expected {} entries, got {}", self.channels + 1, ctx.len()),
            ));
        }
        Ok(())
    }

    fn forward_into(params: &[f64], channels: usize, hidden: usize, ctx: &ContextVector, h: &mut [f64], p: &mut [f64]) {
        let inputs = channels + 1;
        let b1 = inputs * hidden;
        let w2 = b1 + hidden;
        let b2 = w2 + channels * hidden;
        // The context is binary, so the first layer is a sum of weight rows.
        h.copy_from_slice(&params[b1..b1 + hidden]);
        for j in ctx.active() {
            let row = &params[j * hidden..(j + 1) * hidden];
            for (hi, w) in h.iter_mut().zip(row) {
                *hi += w;
            }
        }
        for hi in h.iter_mut() {
            *hi = hi.tanh();
        }
        let mut max_logit = f64::NEG_INFINITY;
        for (k, pk) in p.iter_mut().enumerate() {
            let row = &params[w2 + k * hidden..w2 + (k + 1) * hidden];
            let logit = params[b2 + k] + row.iter().zip(h.iter()).map(|(w, x)| w * x).sum::<f64>();
            *pk = logit;
            max_logit = max_logit.max(logit);
        }
        let mut total = 0.0;
        for pk in p.iter_mut() {
            *pk = (*pk - max_logit).exp();
            total += *pk;
        }
        for pk in p.iter_mut() {
            *pk /= total;
        }
    }

    /// Policy distribution for `ctx`.
    pub fn probabilities(&self, ctx: &ContextVector) -> Result<Vec<f64>> {
        self.check_context(ctx)?;
        let mut h = vec![0.0; self.hidden];
        let mut p = vec![0.0; self.channels];
        Self::forward_into(&self.params, self.channels, self.hidden, ctx, &mut h, &mut p);
        Ok(p)
    }

    pub fn select<R: Rng + ?Sized>(&mut self, ctx: &ContextVector, rng: &mut R) -> Result<ArmIndex> {
        self.check_context(ctx)?;
        self.forward_cached(ctx);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (k, &pk) in self.scratch.probs.iter().enumerate() {
            if pk > 0.0 {
                last_positive = k;
            }
            acc += pk;
            if u < acc {
                return Ok(ArmIndex::from_zero_based(k));
            }
        }
        Ok(ArmIndex::from_zero_based(last_positive))
    }

    fn forward_cached(&mut self, ctx: &ContextVector) {
        let s = &mut self.scratch;
        if s.forward_of.as_ref() != Some(ctx) {
            Self::forward_into(&self.params, self.channels, self.hidden, ctx, &mut s.hidden, &mut s.probs);
            match &mut s.forward_of {
                Some(c) => c.clone_from(ctx),
                None => s.forward_of = Some(ctx.clone()),
            }
        }
    }

    /// `-advantage * ln p(arm | ctx)`.
    pub fn loss(&self, ctx: &ContextVector, arm: ArmIndex, advantage: f64) -> Result<f64> {
        let p = self.probabilities(ctx)?;
        Ok(-advantage * p[arm.index()].ln())
    }

    /// Analytic gradient of [`NaState::loss`] with respect to the flat parameters.
    pub fn gradient(&self, ctx: &ContextVector, arm: ArmIndex, advantage: f64) -> Result<Vec<f64>> {
        self.check_context(ctx)?;
        let mut probe = self.clone();
        probe.scratch.forward_of = None;
        probe.forward_cached(ctx);
        probe.backward(arm, advantage);
        let mut grad = vec![0.0; self.params.len()];
        probe.scatter(&mut grad, ctx, 1.0);
        Ok(grad)
    }

    /// Logit and hidden-layer deltas for the cached forward pass.
    fn backward(&mut self, arm: ArmIndex, advantage: f64) {
        let (_, w2, _) = self.offsets();
        let hidden = self.hidden;
        let s = &mut self.scratch;
        s.delta_hidden.fill(0.0);
        for k in 0..self.channels {
            // d loss / d logit_k = A * (p_k - [k == arm])
            let target = if k == arm.index() { 1.0 } else { 0.0 };
            let dlogit = advantage * (s.probs[k] - target);
            s.dlogit[k] = dlogit;
            let row = &self.params[w2 + k * hidden..w2 + (k + 1) * hidden];
            for (d, w) in s.delta_hidden.iter_mut().zip(row) {
                *d += dlogit * w;
            }
        }
        for (d, h) in s.delta_hidden.iter_mut().zip(&s.hidden) {
            *d *= 1.0 - h * h;
        }
    }

    fn deltas_are_finite(&self) -> bool {
        let s = &self.scratch;
        s.dlogit.iter().chain(&s.delta_hidden).all(|g| g.is_finite())
    }

    /// Adds `scale` times the gradient into `target`. Input rows for inactive
    /// context entries have zero gradient and are skipped.
    fn scatter(&self, target: &mut [f64], ctx: &ContextVector, scale: f64) {
        let (b1, w2, b2) = self.offsets();
        let hidden = self.hidden;
        let s = &self.scratch;
        for k in 0..self.channels {
            let g = scale * s.dlogit[k];
            target[b2 + k] += g;
            let row = &mut target[w2 + k * hidden..w2 + (k + 1) * hidden];
            for (t, h) in row.iter_mut().zip(&s.hidden) {
                *t += g * h;
            }
        }
        for row in std::iter::once(b1).chain(ctx.active().map(|j| j * hidden)) {
            for (t, d) in target[row..row + hidden].iter_mut().zip(&s.delta_hidden) {
                *t += scale * d;
            }
        }
    }

    /// Folds one attempt's reward into the baseline and takes (or accumulates)
    /// a gradient step. A non-finite gradient leaves the weights untouched and
    /// bumps [`NaState::rejected_steps`].
    pub fn update(&mut self, ctx: &ContextVector, arm: ArmIndex, reward: Reward) -> Result<()> {
        self.check_context(ctx)?;
        let r = reward.value();
        let advantage = r - self.baseline;
        self.baseline_count += 1;
        self.baseline += advantage / self.baseline_count as f64;
        if advantage != 0.0 {
            self.forward_cached(ctx);
            self.backward(arm, advantage);
            if !self.deltas_are_finite() {
                self.rejected_steps += 1;
                return Ok(());
            }
            if self.batch_size == 1 {
                let mut params = std::mem::take(&mut self.params);
                self.scatter(&mut params, ctx, -self.learning_rate);
                self.params = params;
                self.scratch.forward_of = None;
            } else {
                let mut acc = std::mem::take(&mut self.grad_accum);
                self.scatter(&mut acc, ctx, 1.0);
                self.grad_accum = acc;
            }
        }
        self.pending += 1;
        if self.pending == self.batch_size {
            self.pending = 0;
            if self.batch_size > 1 {
                let step = self.learning_rate / self.batch_size as f64;
                for (w, g) in self.params.iter_mut().zip(self.grad_accum.iter_mut()) {
                    *w -= step * *g;
                    *g = 0.0;
                }
                self.scratch.forward_of = None;
            }
        }
        Ok(())
    }

    /// Offsets of the four parameter blocks, for inspection.
    pub fn layout(&self) -> [std::ops::Range<usize>; 4] {
        let (b1, w2, b2) = self.offsets();
        [0..b1, b1..w2, w2..b2, b2..self.params.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entropy(p: &[f64]) -> f64 {
        -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
    }

    fn random_context(k: usize, rng: &mut ChaCha8Rng) -> ContextVector {
        ContextVector {
            channel_success: (0..k).map(|_| rng.random_bool(0.3)).collect(),
            retransmission: rng.random_bool(0.5),
        }
    }

    #[test]
    fn fresh_network_is_near_uniform() {
        let k = 55;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..5 {
            let na = NaState::new(k, &NeuralConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
            for ctx in [ContextVector::empty(k), random_context(k, &mut rng)] {
                let h = entropy(&na.probabilities(&ctx).unwrap());
                let max = (k as f64).ln();
                assert!(h >= 0.95 * max && h <= max + 1e-12, "entropy {h} vs {max}");
            }
        }
    }

    #[test]
    fn probabilities_are_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in [1, 2, 4, 17, 55] {
            let mut na = NaState::new(k, &NeuralConfig::default(), &mut rng);
            let scaled: Vec<f64> = na.parameters().iter().map(|w| w * 25.0).collect();
            na.set_parameters(&scaled);
            for _ in 0..20 {
                let p = na.probabilities(&random_context(k, &mut rng)).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(p.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn wrong_context_length_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut na = NaState::new(4, &NeuralConfig::default(), &mut rng);
        let bad = ContextVector::empty(5);
        assert!(matches!(na.select(&bad, &mut rng), Err(Error::Config { .. })));
        assert!(na.update(&bad, ArmIndex::from_number(1), Reward::Success).is_err());
    }

    #[test]
    fn selection_is_reproducible() {
        let na = NaState::new(55, &NeuralConfig::default(), &mut ChaCha8Rng::seed_from_u64(4));
        let ctx = random_context(55, &mut ChaCha8Rng::seed_from_u64(5));
        let draw = |mut n: NaState| {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            (0..50).map(|_| n.select(&ctx, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(na.clone()), draw(na));
    }

    #[test]
    fn zero_advantage_leaves_weights() {
        let mut na = NaState::new(6, &NeuralConfig::default(), &mut ChaCha8Rng::seed_from_u64(7));
        let before = na.parameters().to_vec();
        // The baseline starts at 0, so a first reward of 0 has zero advantage.
        na.update(&ContextVector::empty(6), ArmIndex::from_number(2), Reward::Failure).unwrap();
        assert_eq!(na.parameters(), &before[..]);
        let g = na.gradient(&ContextVector::empty(6), ArmIndex::from_number(2), 0.0).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rewarded_arm_gains_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut na = NaState::new(10, &NeuralConfig::default(), &mut rng);
        let ctx = random_context(10, &mut rng);
        let arm = ArmIndex::from_number(4);
        // Seed the baseline low so successes carry positive advantage.
        for _ in 0..20 {
            na.update(&ctx, ArmIndex::from_number(1), Reward::Failure).unwrap();
        }
        let mut last = na.probabilities(&ctx).unwrap()[arm.index()];
        for _ in 0..100 {
            na.update(&ctx, arm, Reward::Success).unwrap();
            let p = na.probabilities(&ctx).unwrap()[arm.index()];
            assert!(p >= last - 1e-15, "{p} < {last}");
            last = p;
        }
        assert!(last > 0.2, "p = {last}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let k = 4;
        let cfg = NeuralConfig {
            hidden: 6,
            ..NeuralConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..5 {
            let mut na = NaState::new(k, &cfg, &mut rng);
            let scaled: Vec<f64> = na.parameters().iter().map(|w| w * 3.0).collect();
            na.set_parameters(&scaled);
            let ctx = random_context(k, &mut rng);
            let arm = ArmIndex::from_zero_based(trial % k);
            let advantage = 0.7 - 0.3 * trial as f64;
            let analytic = na.gradient(&ctx, arm, advantage).unwrap();
            let base = na.parameters().to_vec();
            let eps = 1e-6;
            let mut numeric = vec![0.0; base.len()];
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus[i] += eps;
                let mut minus = base.clone();
                minus[i] -= eps;
                let mut probe = na.clone();
                probe.set_parameters(&plus);
                let lp = probe.loss(&ctx, arm, advantage).unwrap();
                probe.set_parameters(&minus);
                let lm = probe.loss(&ctx, arm, advantage).unwrap();
                numeric[i] = (lp - lm) / (2.0 * eps);
            }
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(diff / norm <= 1e-4, "relative error {}", diff / norm);
        }
    }

    #[test]
    fn batched_updates_apply_on_batch_boundary() {
        let cfg = NeuralConfig {
            batch_size: 3,
            ..NeuralConfig::default()
        };
        let mut na = NaState::new(5, &cfg, &mut ChaCha8Rng::seed_from_u64(10));
        let ctx = ContextVector::empty(5);
        let before = na.parameters().to_vec();
        na.update(&ctx, ArmIndex::from_number(1), Reward::Success).unwrap();
        na.update(&ctx, ArmIndex::from_number(2), Reward::Failure).unwrap();
        assert_eq!(na.parameters(), &before[..]);
        na.update(&ctx, ArmIndex::from_number(3), Reward::Success).unwrap();
        assert_ne!(na.parameters(), &before[..]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut na = NaState::new(3, &NeuralConfig::default(), &mut ChaCha8Rng::seed_from_u64(11));
        let mut poisoned = na.parameters().to_vec();
        let last = poisoned.len() - 1;
        poisoned[last] = f64::NAN;
        na.set_parameters(&poisoned);
        na.update(&ContextVector::empty(3), ArmIndex::from_number(1), Reward::Success).unwrap();
        assert_eq!(na.rejected_steps, 1);
        assert!(na.parameters()[last].is_nan());
        assert_eq!(&na.parameters()[..last], &poisoned[..last]);
    }
}
