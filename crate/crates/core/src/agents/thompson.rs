use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{ArmIndex, Reward};

/// Beta posteriors over each channel's success probability.
///
/// `alpha[k] - 1` counts successes on arm `k`, `beta[k] - 1` counts failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsState {
    pub alpha: Vec<u64>,
    pub beta: Vec<u64>,
}

impl TsState {
    /// Uniform `Beta(1, 1)` priors.
    pub fn new(channels: usize) -> Self {
        Self {
            alpha: vec![1; channels],
            beta: vec![1; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.alpha.len()
    }

    pub fn posterior_mean(&self, arm: ArmIndex) -> f64 {
        let (a, b) = (self.alpha[arm.index()] as f64, self.beta[arm.index()] as f64);
        a / (a + b)
    }
}

/// One draw from `Beta(a, b)`. The `a == 1` / `b == 1` cases have closed-form
/// inverse CDFs, which covers most arms once the agents have settled.
pub(crate) fn sample_beta<R: Rng + ?Sized>(a: u64, b: u64, rng: &mut R) -> f64 {
    match (a, b) {
        (1, 1) => rng.random::<f64>(),
        (1, b) => 1.0 - rng.random::<f64>().powf(1.0 / b as f64),
        (a, 1) => rng.random::<f64>().powf(1.0 / a as f64),
        (a, b) => Beta::new(a as f64, b as f64)
            .expect("beta parameters are >= 1")
            .sample(rng),
    }
}

/// Plays the arm with the largest posterior draw.
///
/// The argmax is computed lazily but exactly: the arm with the highest
/// posterior mean is drawn first, and every other arm only needs a full draw
/// when it beats the running maximum. For `Beta(1, b)` and `Beta(a, 1)` arms
/// the exceedance probability has a closed form, so the common case costs one
/// uniform and an integer power. Exact ties (probability zero) go to the
/// lowest index.
pub fn ts_select<R: Rng + ?Sized>(state: &TsState, rng: &mut R) -> ArmIndex {
    let k = state.alpha.len();
    let mut start = 0;
    for i in 1..k {
        // a_i / (a_i + b_i) > a_s / (a_s + b_s), in integers.
        let lhs = state.alpha[i] as u128 * (state.alpha[start] + state.beta[start]) as u128;
        let rhs = state.alpha[start] as u128 * (state.alpha[i] + state.beta[i]) as u128;
        if lhs > rhs {
            start = i;
        }
    }
    let mut best = start;
    let mut max = sample_beta(state.alpha[start], state.beta[start], rng);
    for i in (0..k).filter(|&i| i != start) {
        let (a, b) = (state.alpha[i], state.beta[i]);
        let draw = match (a, b) {
            (1, 1) => Some(rng.random::<f64>()),
            (1, b) => {
                // P(X > m) = (1 - m)^b; given that, X = 1 - (1 - m) V^(1/b).
                let tail = int_pow(1.0 - max, b);
                let u: f64 = rng.random();
                (u < tail).then(|| 1.0 - (1.0 - max) * (u / tail).powf(1.0 / b as f64))
            }
            (a, 1) => {
                // P(X > m) = 1 - m^a; given that, X = (m^a + (1 - m^a) V)^(1/a).
                let below = int_pow(max, a);
                let tail = 1.0 - below;
                let u: f64 = rng.random();
                (u < tail).then(|| (below + tail * (u / tail)).powf(1.0 / a as f64))
            }
            (a, b) if a.min(b) <= TAIL_TERMS => {
                // Cantelli: P(X - mean >= t) <= var / (var + t^2) bounds the tail
                // cheaply; the exact tail is only needed when u falls under it.
                let (af, bf) = (a as f64, b as f64);
                let mean = af / (af + bf);
                let var = af * bf / ((af + bf) * (af + bf) * (af + bf + 1.0));
                let t = max - mean;
                let bound = if t > 0.0 { var / (var + t * t) } else { 1.0 };
                let u: f64 = rng.random();
                let tail = if u < bound { beta_tail_above(a, b, max) } else { 0.0 };
                (u < tail).then(|| loop {
                    let x = sample_beta(a, b, rng);
                    if x > max {
                        break x;
                    }
                })
            }
            (a, b) => Some(sample_beta(a, b, rng)),
        };
        if let Some(x) = draw {
            if x > max || (x == max && i < best) {
                max = x;
                best = i;
            }
        }
    }
    ArmIndex::from_zero_based(best)
}

/// Shapes above this use a plain draw instead of the tail sum.
const TAIL_TERMS: u64 = 64;

/// P(X > m) for X ~ Beta(a, b) with integer shapes and min(a, b) <= TAIL_TERMS,
/// via P(X > m) = P(Bin(a + b - 1, m) <= a - 1).
fn beta_tail_above(a: u64, b: u64, m: f64) -> f64 {
    if m <= 0.0 {
        return 1.0;
    }
    if m >= 1.0 {
        return 0.0;
    }
    let n = a + b - 1;
    if a <= b {
        binomial_cdf(n, m, a - 1)
    } else {
        (1.0 - binomial_cdf(n, 1.0 - m, b - 1)).max(0.0)
    }
}

/// P(Bin(n, p) <= k) for 0 < p < 1. Terms are accumulated relative to the
/// first one, with a log offset so neither end overflows.
fn binomial_cdf(n: u64, p: f64, k: u64) -> f64 {
    let ratio = p / (1.0 - p);
    let mut offset = n as f64 * (-p).ln_1p();
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 0..k {
        term *= (n - j) as f64 / (j + 1) as f64 * ratio;
        sum += term;
        if sum > 1e250 {
            offset += sum.ln();
            term /= sum;
            sum = 1.0;
        }
    }
    (offset + sum.ln()).exp().min(1.0)
}

fn int_pow(x: f64, n: u64) -> f64 {
    match i32::try_from(n) {
        Ok(n) => x.powi(n),
        Err(_) => x.powf(n as f64),
    }
}

pub fn ts_update(state: &mut TsState, arm: ArmIndex, reward: Reward) {
    match reward {
        Reward::Success => state.alpha[arm.index()] += 1,
        Reward::Failure => state.beta[arm.index()] += 1,
    }
}
