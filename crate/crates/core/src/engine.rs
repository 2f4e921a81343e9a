//! Slot-synchronous world loop.
//!
//! Each call to [`World::step`] advances one scheduling unit (SU):
//!
//! 1. traffic sources release the packets due in this SU;
//! 2. every agent holding a packet picks a channel through its policy;
//! 3. [`resolve_su`] turns the intents into per-channel outcomes;
//! 4. rewards reach the transmitting agents (after the configured feedback
//!    delay) and failed packets are rescheduled for the following SU.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::agents::{AgentState, ArmIndex, ContextVector, Reward};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;
use crate::phy::{evaluate_link, Link, Obstacle, Position};
use crate::traffic::{Packet, Supersession, TrafficSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransmissionIntent {
    pub agent: usize,
    pub channel: ArmIndex,
    pub is_retransmission: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelOutcome {
    /// Nothing was decoded: no transmission, or a lone one in outage.
    Idle,
    /// Exactly one transmission, decoded.
    Success,
    /// Two or more transmissions; all are lost.
    Collision,
}

/// What the gNB broadcasts at the end of an SU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackMessage {
    pub su: u64,
    pub channels: Vec<ChannelOutcome>,
}

impl FeedbackMessage {
    pub fn is_success(&self, channel: ArmIndex) -> bool {
        self.channels[channel.index()] == ChannelOutcome::Success
    }

    pub fn success_flags(&self) -> Vec<bool> {
        self.channels.iter().map(|&c| c == ChannelOutcome::Success).collect()
    }
}

/// Per-SU tallies. `successes + collision_losses + outage_losses == attempts`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SuTally {
    pub attempts: u32,
    pub successes: u32,
    pub collision_losses: u32,
    pub outage_losses: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuResolution {
    pub feedback: FeedbackMessage,
    /// One entry per intent, in intent order.
    pub rewards: Vec<Reward>,
    pub tally: SuTally,
}

/// Reusable buffers for resolving one SU without allocating.
#[derive(Debug, Clone)]
struct Resolver {
    occupancy: Vec<u32>,
    outcomes: Vec<ChannelOutcome>,
}

impl Resolver {
    fn new(channels: usize) -> Self {
        Self {
            occupancy: vec![0; channels],
            outcomes: vec![ChannelOutcome::Idle; channels],
        }
    }

    /// Fills `outcomes` and returns the tally. `rewards[i]` receives the
    /// reward of `intents[i]`.
    fn resolve<F: Fn(usize) -> bool>(
        &mut self,
        intents: &[TransmissionIntent],
        in_outage: F,
        rewards: &mut Vec<Reward>,
    ) -> SuTally {
        self.occupancy.fill(0);
        self.outcomes.fill(ChannelOutcome::Idle);
        for intent in intents {
            self.occupancy[intent.channel.index()] += 1;
        }
        let mut tally = SuTally {
            attempts: intents.len() as u32,
            ..SuTally::default()
        };
        rewards.clear();
        for intent in intents {
            let k = intent.channel.index();
            let reward = if self.occupancy[k] >= 2 {
                self.outcomes[k] = ChannelOutcome::Collision;
                tally.collision_losses += 1;
                Reward::Failure
            } else if in_outage(intent.agent) {
                tally.outage_losses += 1;
                Reward::Failure
            } else {
                self.outcomes[k] = ChannelOutcome::Success;
                tally.successes += 1;
                Reward::Success
            };
            rewards.push(reward);
        }
        tally
    }
}

/// Resolves the intents of one SU against the collision and outage rules.
pub fn resolve_su<F: Fn(usize) -> bool>(
    su: u64,
    channels: usize,
    intents: &[TransmissionIntent],
    in_outage: F,
) -> Result<SuResolution> {
    let mut seen = HashSet::with_capacity(intents.len());
    for intent in intents {
        if !seen.insert(intent.agent) {
            return Err(Error::Contract(format!(
                "agent {} submitted more than one intent in SU {su}",
                intent.agent
            )));
        }
        if intent.channel.index() >= channels {
            return Err(Error::Contract(format!(
                "agent {} picked {} of only {channels}",
                intent.agent, intent.channel
            )));
        }
    }
    let mut resolver = Resolver::new(channels);
    let mut rewards = Vec::with_capacity(intents.len());
    let tally = resolver.resolve(intents, in_outage, &mut rewards);
    Ok(SuResolution {
        feedback: FeedbackMessage {
            su,
            channels: resolver.outcomes,
        },
        rewards,
        tally,
    })
}

/// Independent random substream `stream` of the master seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_GEOMETRY: u64 = 0;

fn agent_stream(agent: usize, purpose: u64) -> u64 {
    1 + 3 * agent as u64 + purpose
}

const PURPOSE_TRAFFIC: u64 = 0;
const PURPOSE_POLICY: u64 = 1;
const PURPOSE_INIT: u64 = 2;

/// A transmission whose feedback has not been delivered yet.
#[derive(Debug, Clone)]
struct InFlight {
    su: u64,
    arm: ArmIndex,
    packet: Packet,
    reward: Reward,
    context: Option<ContextVector>,
    /// Feedback flags of the SU, kept only for context-reading policies.
    feedback: Option<Vec<bool>>,
    superseded: bool,
}

#[derive(Debug, Clone)]
struct AgentRuntime {
    state: AgentState,
    traffic: TrafficSource<ChaCha8Rng>,
    policy_rng: ChaCha8Rng,
    link: Link,
    outage: bool,
    pending: Option<Packet>,
    queued: Option<Packet>,
    in_flight: Option<InFlight>,
    last_feedback: Vec<bool>,
}

/// Summary of one [`World::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepReport {
    pub su: u64,
    pub tally: SuTally,
    /// Packets discarded because a newer one superseded them.
    pub dropped: u32,
}

/// Complete simulation state of one run.
#[derive(Debug, Clone)]
pub struct World {
    cfg: ScenarioConfig,
    seed: u64,
    su: u64,
    agents: Vec<AgentRuntime>,
    obstacles: Vec<Obstacle>,
    resolver: Resolver,
    intents: Vec<TransmissionIntent>,
    rewards: Vec<Reward>,
    metrics: MetricsRecord,
}

impl World {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.channels;
        let geo = &cfg.geometry;
        let ((x_lo, x_hi), (y_lo, y_hi)) = geo.placement_bounds();
        let place = |rng: &mut ChaCha8Rng| {
            let x = if x_hi > x_lo { rng.random_range(x_lo..=x_hi) } else { x_lo };
            let y = if y_hi > y_lo { rng.random_range(y_lo..=y_hi) } else { y_lo };
            (x, y)
        };

        // Each UE sits on its own machine; machine n belongs to agent n.
        let mut init_rngs: Vec<ChaCha8Rng> =
            (0..cfg.agents).map(|n| substream(seed, agent_stream(n, PURPOSE_INIT))).collect();
        let mut ue_positions = Vec::with_capacity(cfg.agents);
        let mut obstacles = Vec::with_capacity(cfg.agents + geo.extra_machines);
        for rng in init_rngs.iter_mut() {
            let (x, y) = place(rng);
            ue_positions.push(Position::new(x, y, geo.ue_height_m));
            obstacles.push(geo.machine_at(x, y));
        }
        let mut geo_rng = substream(seed, STREAM_GEOMETRY);
        for _ in 0..geo.extra_machines {
            let (x, y) = place(&mut geo_rng);
            obstacles.push(geo.machine_at(x, y));
        }

        let gnb = geo.gnb();
        let mut agents = Vec::with_capacity(cfg.agents);
        for (n, mut init_rng) in init_rngs.into_iter().enumerate() {
            let ue = ue_positions[n];
            let blockers: Vec<Obstacle> = obstacles
                .iter()
                .enumerate()
                .filter_map(|(i, o)| (i != n).then_some(*o))
                .collect();
            let los = crate::phy::is_los(&ue, &gnb, &blockers);
            let shadowing_db = if cfg.radio.shadowing {
                let sigma = cfg.radio.inf_variant.shadowing_sigma_db(los);
                Normal::new(0.0, sigma).expect("finite sigma").sample(&mut init_rng)
            } else {
                0.0
            };
            let link = evaluate_link(ue, &gnb, &blockers, &cfg.radio, k, shadowing_db);
            let outage = link.snr_db < cfg.radio.sinr_threshold_db;
            let state = AgentState::new(cfg.agent_kind, n, k, &cfg.learning, &mut init_rng);
            let traffic = TrafficSource::new(
                n,
                &cfg.traffic,
                &cfg.clock,
                substream(seed, agent_stream(n, PURPOSE_TRAFFIC)),
            )?;
            let last_feedback = if state.uses_context() { vec![false; k] } else { Vec::new() };
            agents.push(AgentRuntime {
                state,
                traffic,
                policy_rng: substream(seed, agent_stream(n, PURPOSE_POLICY)),
                link,
                outage,
                pending: None,
                queued: None,
                in_flight: None,
                last_feedback,
            });
        }

        let mut metrics = MetricsRecord::new(cfg, seed);
        metrics.outage_agents = agents.iter().filter(|a| a.outage).count();
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            su: 0,
            agents,
            obstacles,
            resolver: Resolver::new(k),
            intents: Vec::with_capacity(cfg.agents),
            rewards: Vec::with_capacity(cfg.agents),
            metrics,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the next SU to be simulated.
    pub fn current_su(&self) -> u64 {
        self.su
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.agents.iter().map(|a| &a.link)
    }

    pub fn outage_flags(&self) -> Vec<bool> {
        self.agents.iter().map(|a| a.outage).collect()
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn agent_states(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().map(|a| &a.state)
    }

    pub fn metrics(&self) -> &MetricsRecord {
        &self.metrics
    }

    /// Intents submitted in the most recent step.
    pub fn last_intents(&self) -> &[TransmissionIntent] {
        &self.intents
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let t = self.su;
        let clock = &self.cfg.clock;
        let supersession = self.cfg.traffic.supersession;
        let mut dropped = 0u32;

        // (a) Traffic.
        for agent in self.agents.iter_mut() {
            for packet in agent.traffic.packets_due(t, clock) {
                dropped += admit(agent, packet, supersession);
            }
        }

        // (b) Decisions.
        self.intents.clear();
        for (n, agent) in self.agents.iter_mut().enumerate() {
            if agent.in_flight.is_some() {
                continue;
            }
            let Some(packet) = agent.pending else { continue };
            if packet.scheduled_su > t {
                continue;
            }
            let context = agent.state.uses_context().then(|| ContextVector {
                channel_success: agent.last_feedback.clone(),
                retransmission: packet.is_retransmission(),
            });
            let ctx_ref = context.as_ref().unwrap_or(&EMPTY_CONTEXT);
            let arm = agent.state.select(ctx_ref, &mut agent.policy_rng)?;
            agent.pending = None;
            agent.in_flight = Some(InFlight {
                su: t,
                arm,
                packet,
                reward: Reward::Failure,
                context,
                feedback: None,
                superseded: false,
            });
            self.intents.push(TransmissionIntent {
                agent: n,
                channel: arm,
                is_retransmission: packet.is_retransmission(),
            });
        }

        // (c) Collision and outage resolution.
        let agents = &self.agents;
        let tally = self
            .resolver
            .resolve(&self.intents, |n| agents[n].outage, &mut self.rewards);
        let needs_flags = self.intents.iter().any(|i| self.agents[i.agent].state.uses_context());
        let flags: Option<Vec<bool>> = needs_flags.then(|| {
            self.resolver
                .outcomes
                .iter()
                .map(|&c| c == ChannelOutcome::Success)
                .collect()
        });
        for (intent, &reward) in self.intents.iter().zip(&self.rewards) {
            let agent = &mut self.agents[intent.agent];
            let flight = agent.in_flight.as_mut().expect("intent without flight");
            flight.reward = reward;
            if agent.state.uses_context() {
                flight.feedback = flags.clone();
            }
        }

        // (d) + (e) Feedback delivery, policy updates, rescheduling.
        let delay = self.cfg.feedback_delay_sus;
        for (n, agent) in self.agents.iter_mut().enumerate() {
            let due = matches!(&agent.in_flight, Some(f) if f.su + delay == t);
            if !due {
                continue;
            }
            let flight = agent.in_flight.take().expect("checked above");
            let ctx = flight.context.as_ref().unwrap_or(&EMPTY_CONTEXT);
            agent.state.update(ctx, flight.arm, flight.reward)?;
            if let Some(feedback) = flight.feedback {
                agent.last_feedback = feedback;
            }
            self.metrics.record_agent(n, flight.reward);
            if flight.reward.is_success() {
                if agent.pending.is_none() {
                    if let Some(mut next) = agent.queued.take() {
                        next.scheduled_su = next.scheduled_su.max(t + 1);
                        agent.pending = Some(next);
                    }
                }
            } else if !flight.superseded && agent.pending.is_none() {
                let mut retry = flight.packet;
                retry.attempt += 1;
                retry.scheduled_su = t + 1;
                agent.pending = Some(retry);
            }
        }

        self.metrics.push_su(tally, dropped);
        self.su += 1;
        Ok(StepReport {
            su: t,
            tally,
            dropped,
        })
    }

    /// Runs until `su_count` SUs have been simulated in total.
    pub fn run_to(&mut self, su_count: u64) -> Result<()> {
        while self.su < su_count {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_output(self) -> RunOutput {
        RunOutput {
            metrics: self.metrics,
            agents: self.agents.into_iter().map(|a| a.state).collect(),
        }
    }
}

static EMPTY_CONTEXT: ContextVector = ContextVector {
    channel_success: Vec::new(),
    retransmission: false,
};

/// Accepts a freshly generated packet, applying the supersession rule.
/// Returns the number of packets dropped.
fn admit(agent: &mut AgentRuntime, packet: Packet, rule: Supersession) -> u32 {
    let busy = agent.pending.is_some() || agent.in_flight.is_some();
    match rule {
        Supersession::DropOld => {
            let mut dropped = 0;
            if agent.pending.take().is_some() {
                dropped += 1;
            }
            if let Some(flight) = agent.in_flight.as_mut() {
                if !flight.superseded {
                    flight.superseded = true;
                    dropped += 1;
                }
            }
            agent.pending = Some(packet);
            dropped
        }
        Supersession::Fifo => {
            if !busy {
                agent.pending = Some(packet);
                0
            } else {
                agent.queued.replace(packet).map_or(0, |_| 1)
            }
        }
    }
}

/// Result of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub agents: Vec<AgentState>,
}

/// Simulates `cfg.duration_s` worth of SUs with the given master seed.
pub fn run(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput> {
    let mut world = World::new(cfg, seed)?;
    world.run_to(cfg.su_count())?;
    Ok(world.into_output())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;
    use crate::traffic::{PhaseMode, TrafficMode};

    fn intent(agent: usize, ch: usize) -> TransmissionIntent {
        TransmissionIntent {
            agent,
            channel: ArmIndex::from_number(ch),
            is_retransmission: false,
        }
    }

    #[test]
    fn lone_transmitter_succeeds() {
        let r = resolve_su(0, 8, &[intent(1, 3)], |_| false).unwrap();
        assert_eq!(r.feedback.channels[2], ChannelOutcome::Success);
        assert_eq!(r.rewards, vec![Reward::Success]);
        assert_eq!(r.feedback.channels.iter().filter(|&&c| c == ChannelOutcome::Idle).count(), 7);
    }

    #[test]
    fn shared_channel_collides() {
        let r = resolve_su(0, 8, &[intent(1, 3), intent(2, 3)], |_| false).unwrap();
        assert_eq!(r.feedback.channels[2], ChannelOutcome::Collision);
        assert_eq!(r.rewards, vec![Reward::Failure, Reward::Failure]);
        assert_eq!(r.tally.collision_losses, 2);
    }

    #[test]
    fn orthogonal_channels_both_succeed() {
        let r = resolve_su(0, 8, &[intent(1, 3), intent(2, 5)], |_| false).unwrap();
        assert_eq!(r.rewards, vec![Reward::Success, Reward::Success]);
        assert_eq!(r.tally.successes, 2);
    }

    #[test]
    fn outage_is_a_silent_loss() {
        let r = resolve_su(0, 4, &[intent(1, 2), intent(2, 3)], |n| n == 2).unwrap();
        assert_eq!(r.feedback.channels[2], ChannelOutcome::Idle);
        assert_eq!(r.rewards, vec![Reward::Success, Reward::Failure]);
        assert_eq!(r.tally.outage_losses, 1);
    }

    #[test]
    fn duplicate_agent_is_a_contract_violation() {
        let err = resolve_su(0, 4, &[intent(1, 2), intent(1, 3)], |_| false).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    fn small(kind: AgentKind) -> ScenarioConfig {
        ScenarioConfig {
            agents: 4,
            channels: 8,
            agent_kind: kind,
            duration_s: 0.5,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn silent_su_records_nothing() {
        let mut cfg = small(AgentKind::Ts);
        cfg.traffic.phase = PhaseMode::Aligned;
        let mut world = World::new(&cfg, 1).unwrap();
        // Everything generated at symbol 0 is first due in SU 1.
        let report = world.step().unwrap();
        assert_eq!(report.tally, SuTally::default());
        assert!(world.last_intents().is_empty());
    }

    #[test]
    fn single_agent_never_fails() {
        for kind in [AgentKind::Ra, AgentKind::Ucb, AgentKind::Ts, AgentKind::Na] {
            let cfg = ScenarioConfig {
                agents: 1,
                ..small(kind)
            };
            let out = run(&cfg, 3).unwrap();
            assert!(out.metrics.total_attempts() > 0);
            assert_eq!(out.metrics.total_attempts(), out.metrics.total_successes(), "{kind}");
        }
    }

    #[test]
    fn one_channel_two_agents_always_collide() {
        let mut cfg = ScenarioConfig {
            agents: 2,
            channels: 1,
            ..small(AgentKind::Ts)
        };
        cfg.traffic.phase = PhaseMode::Aligned;
        cfg.traffic.period_ms = 0.25;
        let out = run(&cfg, 0).unwrap();
        assert!(out.metrics.total_attempts() > 0);
        assert_eq!(out.metrics.total_successes(), 0);
    }

    #[test]
    fn same_seed_same_record() {
        for kind in [AgentKind::Ra, AgentKind::Ucb, AgentKind::Ts, AgentKind::Na] {
            let mut cfg = small(kind);
            cfg.traffic.mode = TrafficMode::QuasiPeriodic;
            cfg.agents = 12;
            let a = run(&cfg, 77).unwrap();
            let b = run(&cfg, 77).unwrap();
            assert_eq!(a, b, "{kind}");
            let c = run(&cfg, 78).unwrap();
            assert_ne!(a.metrics.attempts, c.metrics.attempts);
        }
    }

    #[test]
    fn adding_an_agent_keeps_existing_streams() {
        let mut cfg = small(AgentKind::Ts);
        cfg.agents = 3;
        let a = World::new(&cfg, 5).unwrap();
        cfg.agents = 4;
        let b = World::new(&cfg, 5).unwrap();
        let pa: Vec<_> = a.links().map(|l| l.position).collect();
        let pb: Vec<_> = b.links().map(|l| l.position).collect();
        assert_eq!(pa[..], pb[..3]);
        let ta: Vec<_> = a.agents.iter().map(|x| x.traffic.next_generation()).collect();
        let tb: Vec<_> = b.agents.iter().map(|x| x.traffic.next_generation()).collect();
        assert_eq!(ta[..], tb[..3]);
    }

    #[test]
    fn failed_packets_retry_next_su() {
        let mut cfg = ScenarioConfig {
            agents: 2,
            channels: 1,
            ..small(AgentKind::Ra)
        };
        cfg.traffic.phase = PhaseMode::Aligned;
        let mut world = World::new(&cfg, 0).unwrap();
        world.step().unwrap();
        let first = world.step().unwrap();
        assert_eq!(first.tally.collision_losses, 2);
        let retry = world.step().unwrap();
        assert_eq!(retry.tally.attempts, 2);
        assert!(world.last_intents().iter().all(|i| i.is_retransmission));
    }

    #[test]
    fn delayed_feedback_postpones_retransmission() {
        let mut cfg = ScenarioConfig {
            agents: 2,
            channels: 1,
            feedback_delay_sus: 1,
            ..small(AgentKind::Ra)
        };
        cfg.traffic.phase = PhaseMode::Aligned;
        let mut world = World::new(&cfg, 0).unwrap();
        world.step().unwrap();
        assert_eq!(world.step().unwrap().tally.attempts, 2);
        // Feedback for SU 1 lands at the end of SU 2, so SU 2 stays silent.
        assert_eq!(world.step().unwrap().tally.attempts, 0);
        assert_eq!(world.step().unwrap().tally.attempts, 2);
    }

    #[test]
    fn fifo_keeps_the_newer_packet_waiting() {
        let mut cfg = ScenarioConfig {
            agents: 2,
            channels: 1,
            ..small(AgentKind::Ra)
        };
        cfg.traffic.phase = PhaseMode::Aligned;
        cfg.traffic.supersession = Supersession::Fifo;
        let mut world = World::new(&cfg, 0).unwrap();
        let mut drops = 0;
        for _ in 0..40 {
            drops += world.step().unwrap().dropped;
        }
        // Perpetual collisions: the queue slot keeps being overwritten.
        assert!(drops > 0);
        assert!(world.agents.iter().all(|a| a.queued.is_some()));
        assert!(world.agents.iter().all(|a| a.pending.unwrap().generated_at == 0));
    }

    #[test]
    fn conservation_holds_every_su() {
        let mut cfg = small(AgentKind::Ra);
        cfg.agents = 30;
        cfg.channels = 10;
        cfg.radio.ul_power_dbm = -40.0;
        cfg.radio.shadowing = true;
        let mut world = World::new(&cfg, 9).unwrap();
        for _ in 0..2000 {
            let r = world.step().unwrap();
            let t = r.tally;
            assert_eq!(t.successes + t.collision_losses + t.outage_losses, t.attempts);
        }
    }
}
