//! Successful-transmission rate (S_TX) bookkeeping, windowing, convergence
//! detection, cross-seed aggregation and the on-disk table formats.
//!
//! Window table (CSV, one row per window, header included):
//!
//! ```text
//! su_index,sim_time_s,attempts,successes,s_tx
//! ```
//!
//! `su_index` is the last SU covered by the window and `sim_time_s` the
//! simulated time at its end.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::agents::Reward;
use crate::config::{ScenarioConfig, WindowMode};
use crate::engine::SuTally;
use crate::error::{Error, Result};

pub const WINDOW_TABLE_HEADER: [&str; 5] = ["su_index", "sim_time_s", "attempts", "successes", "s_tx"];

/// Successes over attempts; an empty window counts as perfect.
pub fn s_tx(attempts: u64, successes: u64) -> f64 {
    if attempts == 0 {
        1.0
    } else {
        successes as f64 / attempts as f64
    }
}

/// Time series and counters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub config_hash: String,
    pub seed: u64,
    pub su_seconds: f64,
    pub window_sus: u64,
    /// Per-SU attempt counts.
    pub attempts: Vec<u32>,
    /// Per-SU success counts.
    pub successes: Vec<u32>,
    pub collision_losses: u64,
    pub outage_losses: u64,
    pub dropped_packets: u64,
    /// Cumulative reward per agent.
    pub agent_rewards: Vec<u64>,
    pub agent_attempts: Vec<u64>,
    /// Agents whose link is below the SNR threshold for the whole run.
    pub outage_agents: usize,
}

impl MetricsRecord {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Self {
        let sus = cfg.su_count() as usize;
        Self {
            config_hash: cfg.hash(),
            seed,
            su_seconds: cfg.clock.su_seconds(),
            window_sus: cfg.metrics.window_sus,
            attempts: Vec::with_capacity(sus),
            successes: Vec::with_capacity(sus),
            collision_losses: 0,
            outage_losses: 0,
            dropped_packets: 0,
            agent_rewards: vec![0; cfg.agents],
            agent_attempts: vec![0; cfg.agents],
            outage_agents: 0,
        }
    }

    pub(crate) fn push_su(&mut self, tally: SuTally, dropped: u32) {
        self.attempts.push(tally.attempts);
        self.successes.push(tally.successes);
        self.collision_losses += tally.collision_losses as u64;
        self.outage_losses += tally.outage_losses as u64;
        self.dropped_packets += dropped as u64;
    }

    pub(crate) fn record_agent(&mut self, agent: usize, reward: Reward) {
        self.agent_attempts[agent] += 1;
        if reward.is_success() {
            self.agent_rewards[agent] += 1;
        }
    }

    pub fn su_len(&self) -> usize {
        self.attempts.len()
    }

    pub fn total_attempts(&self) -> u64 {
        self.attempts.iter().map(|&a| a as u64).sum()
    }

    pub fn total_successes(&self) -> u64 {
        self.successes.iter().map(|&s| s as u64).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.su_len() as f64 * self.su_seconds
    }

    fn window_point(&self, prefix_a: &[u64], prefix_s: &[u64], start: usize, end: usize, full_len: u64) -> WindowPoint {
        let attempts = prefix_a[end] - prefix_a[start];
        let successes = prefix_s[end] - prefix_s[start];
        let last = end as u64 - 1;
        WindowPoint {
            su_index: last,
            sim_time_s: (last + 1) as f64 * self.su_seconds,
            attempts,
            successes,
            s_tx: s_tx(attempts, successes),
            partial: ((end - start) as u64) < full_len,
        }
    }

    fn prefixes(&self) -> (Vec<u64>, Vec<u64>) {
        let mut pa = Vec::with_capacity(self.su_len() + 1);
        let mut ps = Vec::with_capacity(self.su_len() + 1);
        pa.push(0);
        ps.push(0);
        for (&a, &s) in self.attempts.iter().zip(&self.successes) {
            pa.push(pa.last().unwrap() + a as u64);
            ps.push(ps.last().unwrap() + s as u64);
        }
        (pa, ps)
    }

    /// Windowed S_TX series. Tumbling windows flag a trailing short window;
    /// sliding windows (one every `stride` SUs) flag the short ones at the start.
    pub fn windows(&self, mode: WindowMode, window: u64, stride: u64) -> Vec<WindowPoint> {
        let (pa, ps) = self.prefixes();
        let len = self.su_len();
        let w = window.max(1) as usize;
        match mode {
            WindowMode::Tumbling => (0..len)
                .step_by(w)
                .map(|start| self.window_point(&pa, &ps, start, (start + w).min(len), window))
                .collect(),
            WindowMode::Sliding => {
                let stride = stride.max(1) as usize;
                (stride..=len)
                    .step_by(stride)
                    .map(|end| self.window_point(&pa, &ps, end.saturating_sub(w), end, window))
                    .collect()
            }
        }
    }

    /// Tumbling windows of the record's own window length.
    pub fn tumbling_windows(&self) -> Vec<WindowPoint> {
        self.windows(WindowMode::Tumbling, self.window_sus, self.window_sus)
    }

    /// S_TX over the `window_sus` SUs ending at simulated time `at_s`.
    pub fn s_tx_at(&self, at_s: f64) -> Result<f64> {
        let end = (at_s / self.su_seconds).round();
        if end.is_nan() || end < 1.0 || end as usize > self.su_len() {
            return Err(Error::Mismatch(format!(
                "evaluation time {at_s} s outside the simulated {} s",
                self.duration_s()
            )));
        }
        let end = end as usize;
        let start = end.saturating_sub(self.window_sus as usize);
        let attempts: u64 = self.attempts[start..end].iter().map(|&a| a as u64).sum();
        let successes: u64 = self.successes[start..end].iter().map(|&s| s as u64).sum();
        Ok(s_tx(attempts, successes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    pub su_index: u64,
    pub sim_time_s: f64,
    pub attempts: u64,
    pub successes: u64,
    pub s_tx: f64,
    /// Window shorter than the nominal length.
    #[serde(skip)]
    pub partial: bool,
}

/// End time of the first window that starts a run of `hold` consecutive
/// windows at or above `level`.
pub fn convergence_time(series: &[WindowPoint], level: f64, hold: usize) -> Option<f64> {
    let hold = hold.max(1);
    let mut run = 0;
    for (i, w) in series.iter().enumerate() {
        if w.s_tx >= level {
            run += 1;
            if run == hold {
                return Some(series[i + 1 - hold].sim_time_s);
            }
        } else {
            run = 0;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std, n }
}

/// Mean and sample standard deviation of windowed S_TX at `at_s` across seeds.
pub fn aggregate(runs: &[&MetricsRecord], at_s: f64) -> Result<MeanStd> {
    if runs.len() < 2 {
        return Err(Error::Mismatch(format!("aggregation needs at least 2 runs, got {}", runs.len())));
    }
    let hash = &runs[0].config_hash;
    if let Some(odd) = runs.iter().find(|r| &r.config_hash != hash) {
        return Err(Error::Mismatch(format!(
            "run with seed {} has config {} but seed {} has {}",
            odd.seed, odd.config_hash, runs[0].seed, hash
        )));
    }
    let values = runs.iter().map(|r| r.s_tx_at(at_s)).collect::<Result<Vec<_>>>()?;
    Ok(mean_std(&values))
}

pub fn write_window_table<W: Write>(out: W, windows: &[WindowPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WINDOW_TABLE_HEADER)?;
    for p in windows {
        w.write_record([
            p.su_index.to_string(),
            p.sim_time_s.to_string(),
            p.attempts.to_string(),
            p.successes.to_string(),
            p.s_tx.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a window table, checking the header and per-row consistency.
pub fn read_window_table<R: Read>(input: R) -> Result<Vec<WindowPoint>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(WINDOW_TABLE_HEADER) {
        return Err(Error::Parse(format!(
            "window table header must be `{}`, got `{}`",
            WINDOW_TABLE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 1));
        let su_index: u64 = field(0).parse().map_err(|_| bad("su_index"))?;
        let sim_time_s: f64 = field(1).parse().map_err(|_| bad("sim_time_s"))?;
        let attempts: u64 = field(2).parse().map_err(|_| bad("attempts"))?;
        let successes: u64 = field(3).parse().map_err(|_| bad("successes"))?;
        let s: f64 = field(4).parse().map_err(|_| bad("s_tx"))?;
        if !sim_time_s.is_finite() || sim_time_s < 0.0 {
            return Err(bad("sim_time_s"));
        }
        if successes > attempts {
            return Err(bad("successes (exceeds attempts)"));
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(bad("s_tx (outside [0, 1])"));
        }
        rows.push(WindowPoint {
            su_index,
            sim_time_s,
            attempts,
            successes,
            s_tx: s,
            partial: false,
        });
    }
    Ok(rows)
}

/// One-document summary of a run, written as JSON next to the window table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub seed: u64,
    pub su_count: u64,
    pub attempts: u64,
    pub successes: u64,
    pub s_tx: f64,
    pub collision_losses: u64,
    pub outage_losses: u64,
    pub dropped_packets: u64,
    pub outage_agents: usize,
    /// Mean cumulative reward per agent.
    pub mean_cumulative_reward: f64,
    pub final_window_s_tx: f64,
    pub convergence_time_s: Option<f64>,
}

impl RunSummary {
    pub fn new(cfg: &ScenarioConfig, record: &MetricsRecord) -> Self {
        let windows = record.tumbling_windows();
        let attempts = record.total_attempts();
        let successes = record.total_successes();
        let agents = record.agent_rewards.len().max(1);
        Self {
            config: cfg.clone(),
            config_hash: record.config_hash.clone(),
            seed: record.seed,
            su_count: record.su_len() as u64,
            attempts,
            successes,
            s_tx: s_tx(attempts, successes),
            collision_losses: record.collision_losses,
            outage_losses: record.outage_losses,
            dropped_packets: record.dropped_packets,
            outage_agents: record.outage_agents,
            mean_cumulative_reward: record.agent_rewards.iter().sum::<u64>() as f64 / agents as f64,
            final_window_s_tx: windows.last().map_or(1.0, |w| w.s_tx),
            convergence_time_s: convergence_time(
                &windows,
                cfg.metrics.convergence_level,
                cfg.metrics.convergence_hold,
            ),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(attempts: Vec<u32>, successes: Vec<u32>) -> MetricsRecord {
        MetricsRecord {
            config_hash: "h".into(),
            seed: 0,
            su_seconds: 0.25e-3,
            window_sus: 1000,
            attempts,
            successes,
            collision_losses: 0,
            outage_losses: 0,
            dropped_packets: 0,
            agent_rewards: vec![],
            agent_attempts: vec![],
            outage_agents: 0,
        }
    }

    fn series(values: &[f64]) -> Vec<WindowPoint> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| WindowPoint {
                su_index: (i as u64 + 1) * 1000 - 1,
                sim_time_s: (i + 1) as f64 * 0.25,
                attempts: 1000,
                successes: (v * 1000.0) as u64,
                s_tx: v,
                partial: false,
            })
            .collect()
    }

    #[test]
    fn ratio_basics() {
        assert_eq!(s_tx(600, 600), 1.0);
        assert_eq!(s_tx(600, 300), 0.5);
        assert_eq!(s_tx(0, 0), 1.0);
    }

    #[test]
    fn convergence_basics() {
        assert_eq!(convergence_time(&series(&[1.0; 10]), 0.999, 4), Some(0.25));
        assert_eq!(convergence_time(&series(&[0.5; 10]), 0.999, 4), None);
        let s = series(&[0.5, 1.0, 1.0, 0.9, 1.0, 1.0, 1.0, 1.0, 0.2]);
        assert_eq!(convergence_time(&s, 0.999, 4), Some(1.25));
        assert_eq!(convergence_time(&s, 0.999, 5), None);
        assert_eq!(convergence_time(&s, 0.999, 1), Some(0.5));
    }

    #[test]
    fn tumbling_windows_cover_the_run() {
        let r = record(vec![2; 2500], vec![1; 2500]);
        let w = r.tumbling_windows();
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].su_index, 999);
        assert!((w[0].sim_time_s - 0.25).abs() < 1e-12);
        assert!(!w[1].partial && w[2].partial);
        assert_eq!(w[2].attempts, 1000);
        assert!(w.iter().all(|p| p.s_tx == 0.5));
    }

    #[test]
    fn sliding_windows_flag_short_start() {
        let r = record(vec![1; 3000], vec![1; 3000]);
        let w = r.windows(WindowMode::Sliding, 1000, 500);
        assert_eq!(w.len(), 6);
        assert!(w[0].partial && !w[1].partial);
        assert_eq!(w[0].attempts, 500);
        assert_eq!(w[5].attempts, 1000);
    }

    #[test]
    fn evaluation_time_lookup() {
        let mut a = vec![10; 4000];
        let mut s = vec![10; 4000];
        a[3500] = 20;
        s[3500] = 0;
        let r = record(a, s);
        assert_eq!(r.s_tx_at(0.5).unwrap(), 1.0);
        assert!((r.s_tx_at(1.0).unwrap() - 9990.0 / 10010.0).abs() < 1e-12);
        assert!(r.s_tx_at(1.5).is_err());
    }

    #[test]
    fn aggregate_two_runs() {
        let mut a = record(vec![10; 1000], vec![8; 1000]);
        let mut b = record(vec![10; 1000], vec![10; 1000]);
        b.seed = 1;
        let m = aggregate(&[&a, &b], 0.25).unwrap();
        assert!((m.mean - 0.9).abs() < 1e-12);
        assert!((m.std - 0.141_421_356).abs() < 1e-6);
        let same = aggregate(&[&b, &b], 0.25).unwrap();
        assert_eq!(same.std, 0.0);
        a.config_hash = "other".into();
        assert!(matches!(aggregate(&[&a, &b], 0.25), Err(Error::Mismatch(_))));
        assert!(aggregate(&[&b], 0.25).is_err());
    }

    #[test]
    fn window_table_round_trip() {
        let r = record(vec![3; 2500], vec![2; 2500]);
        let w = r.tumbling_windows();
        let mut buf = Vec::new();
        write_window_table(&mut buf, &w).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("su_index,sim_time_s,attempts,successes,s_tx\n"));
        let back = read_window_table(&buf[..]).unwrap();
        assert_eq!(back.len(), w.len());
        for (x, y) in back.iter().zip(&w) {
            assert_eq!((x.su_index, x.attempts, x.successes), (y.su_index, y.attempts, y.successes));
            assert_eq!(x.sim_time_s, y.sim_time_s);
            assert_eq!(x.s_tx, y.s_tx);
        }
    }

    #[test]
    fn window_table_rejects_bad_input() {
        assert!(read_window_table(&b"a,b,c\n1,2,3\n"[..]).is_err());
        let hdr = "su_index,sim_time_s,attempts,successes,s_tx\n";
        assert!(read_window_table(format!("{hdr}1,0.1,2,3,0.5\n").as_bytes()).is_err());
        assert!(read_window_table(format!("{hdr}1,0.1,3,2,1.5\n").as_bytes()).is_err());
        assert!(read_window_table(format!("{hdr}x,0.1,3,2,0.5\n").as_bytes()).is_err());
        assert_eq!(read_window_table(hdr.as_bytes()).unwrap().len(), 0);
    }

    proptest! {
        #[test]
        fn merged_window_lies_between_parts(parts in prop::collection::vec((1u64..500, 0u64..500), 1..20)) {
            let parts: Vec<(u64, u64)> = parts.into_iter().map(|(a, s)| (a, s.min(a))).collect();
            let ratios: Vec<f64> = parts.iter().map(|&(a, s)| s_tx(a, s)).collect();
            let total = s_tx(parts.iter().map(|p| p.0).sum(), parts.iter().map(|p| p.1).sum());
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(total >= lo - 1e-12 && total <= hi + 1e-12);
        }

        #[test]
        fn aggregate_mean_ignores_order(values in prop::collection::vec(0.0f64..1.0, 2..12), rot in 0usize..12) {
            let mut shuffled = values.clone();
            let rot = rot % values.len();
            shuffled.rotate_left(rot);
            shuffled.reverse();
            prop_assert!((mean_std(&values).mean - mean_std(&shuffled).mean).abs() < 1e-12);
        }
    }
}
