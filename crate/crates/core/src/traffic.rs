//! Per-agent packet generation on the OFDM symbol grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::SuClock;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficMode {
    #[default]
    Periodic,
    QuasiPeriodic,
}

impl TrafficMode {
    pub fn label(self) -> &'static str {
        match self {
            TrafficMode::Periodic => "periodic",
            TrafficMode::QuasiPeriodic => "quasi_periodic",
        }
    }
}

/// Where each agent's first packet falls inside the first period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Uniform in `[0, period)` symbols, independently per agent.
    #[default]
    Random,
    /// Every agent starts at symbol 0: all of them contend in the same SUs.
    Aligned,
}

/// What happens to an undelivered packet when the next one is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supersession {
    /// The stale packet is discarded in favour of the fresh one.
    #[default]
    DropOld,
    /// The fresh packet waits in a one-slot queue behind the pending one.
    Fifo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub mode: TrafficMode,
    pub period_ms: f64,
    /// Jitter support in OFDM symbols, drawn uniformly in quasi-periodic mode.
    pub offsets: Vec<i64>,
    pub phase: PhaseMode,
    pub supersession: Supersession,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            mode: TrafficMode::Periodic,
            period_ms: 1.5,
            offsets: vec![-2, -1, 0, 1, 2],
            phase: PhaseMode::Random,
            supersession: Supersession::DropOld,
        }
    }
}

impl TrafficConfig {
    pub fn period_symbols(&self, clock: &SuClock) -> Result<i64> {
        let tau = clock.ms_to_symbols(self.period_ms);
        if !self.period_ms.is_finite() || tau <= 0 {
            return Err(Error::config(
                "traffic.period_ms",
                format!("{} ms rounds to {tau} OFDM symbols; need >= 1", self.period_ms),
            ));
        }
        Ok(tau)
    }

    pub fn validate(&self, clock: &SuClock) -> Result<()> {
        self.period_symbols(clock)?;
        if self.mode == TrafficMode::QuasiPeriodic && self.offsets.is_empty() {
            return Err(Error::config("traffic.offsets", "quasi-periodic mode needs at least one offset"));
        }
        Ok(())
    }
}

/// A packet waiting for (re)transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub agent: usize,
    /// OFDM symbol index at which the application produced the packet.
    pub generated_at: u64,
    /// SU in which the next attempt happens.
    pub scheduled_su: u64,
    /// 1 for the first transmission, incremented on every retransmission.
    pub attempt: u32,
}

impl Packet {
    pub fn is_retransmission(&self) -> bool {
        self.attempt > 1
    }
}

/// First SU that starts strictly after symbol `generated_at`.
pub fn due_su(generated_at: u64, clock: &SuClock) -> u64 {
    clock.su_of_symbol(generated_at) + 1
}

/// `prev + tau + offset`, pulled up to `prev + 1` if the offset would not move time forward.
pub fn offset_generation_time(prev: u64, tau_symbols: i64, offset: i64) -> u64 {
    let next = prev as i64 + tau_symbols + offset;
    next.max(prev as i64 + 1) as u64
}

pub fn next_generation_time<R: Rng + ?Sized>(
    prev: u64,
    tau_symbols: i64,
    cfg: &TrafficConfig,
    rng: &mut R,
) -> Result<u64> {
    if tau_symbols <= 0 {
        return Err(Error::config("traffic.period_ms", format!("period of {tau_symbols} symbols")));
    }
    let offset = match cfg.mode {
        TrafficMode::Periodic => 0,
        TrafficMode::QuasiPeriodic => {
            if cfg.offsets.is_empty() {
                return Err(Error::config("traffic.offsets", "empty offset support"));
            }
            cfg.offsets[rng.random_range(0..cfg.offsets.len())]
        }
    };
    Ok(offset_generation_time(prev, tau_symbols, offset))
}

/// The packet generator owned by one agent.
#[derive(Debug, Clone)]
pub struct TrafficSource<R> {
    agent: usize,
    cfg: TrafficConfig,
    tau_symbols: i64,
    next_generation: u64,
    rng: R,
}

impl<R: Rng> TrafficSource<R> {
    pub fn new(agent: usize, cfg: &TrafficConfig, clock: &SuClock, mut rng: R) -> Result<Self> {
        let tau_symbols = cfg.period_symbols(clock)?;
        let first = match cfg.phase {
            PhaseMode::Aligned => 0,
            PhaseMode::Random => rng.random_range(0..tau_symbols as u64),
        };
        Ok(Self {
            agent,
            cfg: cfg.clone(),
            tau_symbols,
            next_generation: first,
            rng,
        })
    }

    pub fn tau_symbols(&self) -> i64 {
        self.tau_symbols
    }

    pub fn next_generation(&self) -> u64 {
        self.next_generation
    }

    /// Packets whose first attempt falls in `su`. Must be called with
    /// non-decreasing `su`; generations belonging to skipped SUs are discarded.
    pub fn packets_due(&mut self, su: u64, clock: &SuClock) -> Vec<Packet> {
        let mut due = Vec::new();
        loop {
            let scheduled = due_su(self.next_generation, clock);
            if scheduled > su {
                break;
            }
            if scheduled == su {
                due.push(Packet {
                    agent: self.agent,
                    generated_at: self.next_generation,
                    scheduled_su: su,
                    attempt: 1,
                });
            }
            // tau_symbols was validated at construction, so this cannot fail.
            self.next_generation =
                next_generation_time(self.next_generation, self.tau_symbols, &self.cfg, &mut self.rng)
                    .expect("validated period");
        }
        due
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clock() -> SuClock {
        SuClock::default()
    }

    #[test]
    fn periodic_step_is_forty_two_symbols() {
        let cfg = TrafficConfig::default();
        let tau = cfg.period_symbols(&clock()).unwrap();
        assert_eq!(tau, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(next_generation_time(0, tau, &cfg, &mut rng).unwrap(), 42);
    }

    #[test]
    fn quasi_periodic_offsets() {
        assert_eq!(offset_generation_time(0, 42, 2), 44);
        assert_eq!(offset_generation_time(0, 42, 0), 42);
        assert_eq!(offset_generation_time(10, 1, -2), 11);
    }

    #[test]
    fn quasi_periodic_draws_stay_in_support() {
        let cfg = TrafficConfig {
            mode: TrafficMode::QuasiPeriodic,
            ..TrafficConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [false; 5];
        for _ in 0..1000 {
            let next = next_generation_time(100, 42, &cfg, &mut rng).unwrap();
            let off = next as i64 - 142;
            assert!((-2..=2).contains(&off));
            seen[(off + 2) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn non_positive_period_is_rejected() {
        let cfg = TrafficConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(next_generation_time(0, 0, &cfg, &mut rng).is_err());
        let tiny = TrafficConfig {
            period_ms: 0.001,
            ..TrafficConfig::default()
        };
        assert!(tiny.validate(&clock()).is_err());
    }

    #[test]
    fn due_su_is_strictly_after_generation() {
        let c = clock();
        assert_eq!(due_su(3, &c), 1);
        assert_eq!(due_su(0, &c), 1);
        assert_eq!(due_su(7, &c), 2);
        assert_eq!(due_su(6, &c), 1);
    }

    #[test]
    fn packets_due_tracks_schedule() {
        let c = clock();
        let cfg = TrafficConfig {
            phase: PhaseMode::Aligned,
            ..TrafficConfig::default()
        };
        let mut src = TrafficSource::new(4, &cfg, &c, ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(src.packets_due(0, &c).is_empty());
        let p = src.packets_due(1, &c);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].agent, 4);
        assert_eq!(p[0].generated_at, 0);
        assert!(!p[0].is_retransmission());
        for su in 2..7 {
            assert!(src.packets_due(su, &c).is_empty(), "su {su}");
        }
        // Symbol 42 lies in SU 6, so the packet is due in SU 7.
        let p = src.packets_due(7, &c);
        assert_eq!(p[0].generated_at, 42);
    }

    #[test]
    fn mean_inter_generation_matches_period() {
        let c = clock();
        let cfg = TrafficConfig {
            mode: TrafficMode::QuasiPeriodic,
            ..TrafficConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = 0;
        let n = 100_000;
        for _ in 0..n {
            let next = next_generation_time(t, 42, &cfg, &mut rng).unwrap();
            assert!(next > t);
            t = next;
        }
        let mean = t as f64 / n as f64;
        assert!((mean - 42.0).abs() / 42.0 < 0.01, "mean {mean}");
        let _ = c;
    }

    #[test]
    fn aligned_sources_are_due_together() {
        let c = clock();
        let cfg = TrafficConfig {
            phase: PhaseMode::Aligned,
            ..TrafficConfig::default()
        };
        let mut a = TrafficSource::new(0, &cfg, &c, ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut b = TrafficSource::new(1, &cfg, &c, ChaCha8Rng::seed_from_u64(2)).unwrap();
        for su in 0..200 {
            assert_eq!(a.packets_due(su, &c).len(), b.packets_due(su, &c).len());
        }
    }
}
