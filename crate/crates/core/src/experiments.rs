//! Declarative sweeps over scenario parameters, their presets and output tables.
//!
//! A sweep expands into cells: one per (axis value, agent kind, traffic mode).
//! Each cell runs once per seed and reports mean ± std S_TX at the evaluation
//! times plus convergence statistics. Cells also yield a mean training curve.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::config::ScenarioConfig;
use crate::engine;
use crate::error::{Error, Result};
use crate::metrics::{convergence_time, mean_std, MeanStd};
use crate::traffic::TrafficMode;

pub const SUMMARY_TABLE_HEADER: [&str; 11] = [
    "axis",
    "axis_value",
    "agent",
    "traffic",
    "eval_time_s",
    "mean_s_tx",
    "std_s_tx",
    "seeds",
    "converged_runs",
    "mean_convergence_s",
    "median_convergence_s",
];

pub const CURVE_TABLE_HEADER: [&str; 5] = ["su_index", "sim_time_s", "mean_s_tx", "std_s_tx", "seeds"];

/// The swept parameter and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    AgentKind(Vec<AgentKind>),
    Agents(Vec<usize>),
    PeriodMs(Vec<f64>),
    UlPowerDbm(Vec<f64>),
    TrafficMode(Vec<TrafficMode>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::AgentKind(_) => "agent_kind",
            SweepAxis::Agents(_) => "agents",
            SweepAxis::PeriodMs(_) => "period_ms",
            SweepAxis::UlPowerDbm(_) => "ul_power_dbm",
            SweepAxis::TrafficMode(_) => "traffic_mode",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::AgentKind(v) => v.len(),
            SweepAxis::Agents(v) => v.len(),
            SweepAxis::PeriodMs(v) | SweepAxis::UlPowerDbm(v) => v.len(),
            SweepAxis::TrafficMode(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> String {
        match self {
            SweepAxis::AgentKind(v) => v[i].label().to_string(),
            SweepAxis::Agents(v) => v[i].to_string(),
            SweepAxis::PeriodMs(v) | SweepAxis::UlPowerDbm(v) => v[i].to_string(),
            SweepAxis::TrafficMode(v) => v[i].label().to_string(),
        }
    }

    fn apply(&self, i: usize, cfg: &mut ScenarioConfig) {
        match self {
            SweepAxis::AgentKind(v) => cfg.agent_kind = v[i],
            SweepAxis::Agents(v) => cfg.agents = v[i],
            SweepAxis::PeriodMs(v) => cfg.traffic.period_ms = v[i],
            SweepAxis::UlPowerDbm(v) => cfg.radio.ul_power_dbm = v[i],
            SweepAxis::TrafficMode(v) => cfg.traffic.mode = v[i],
        }
    }
}

/// How the plotting side should draw a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    TrainingCurve,
    GroupedBars,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub base: ScenarioConfig,
    pub axis: SweepAxis,
    /// Agent kinds crossed with the axis. Empty means the base kind only.
    #[serde(default)]
    pub agent_kinds: Vec<AgentKind>,
    /// Traffic modes crossed with the axis. Empty means the base mode only.
    #[serde(default)]
    pub traffic_modes: Vec<TrafficMode>,
    pub figure: FigureKind,
}

/// One (axis value, agent, traffic) combination with its full config.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub axis_value: String,
    pub agent: AgentKind,
    pub traffic: TrafficMode,
    pub config: ScenarioConfig,
}

impl Cell {
    /// File-name-safe identifier.
    pub fn id(&self, axis: &str) -> String {
        format!("{axis}-{}_{}_{}", self.axis_value, self.agent.label(), self.traffic.label())
    }
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Expands the sweep into cells, axis-major.
    pub fn cells(&self) -> Vec<Cell> {
        let kinds = if self.agent_kinds.is_empty() {
            vec![self.base.agent_kind]
        } else {
            self.agent_kinds.clone()
        };
        let modes = if self.traffic_modes.is_empty() {
            vec![self.base.traffic.mode]
        } else {
            self.traffic_modes.clone()
        };
        let mut cells = Vec::new();
        for i in 0..self.axis.len() {
            for &kind in &kinds {
                for &mode in &modes {
                    let mut config = self.base.clone();
                    config.agent_kind = kind;
                    config.traffic.mode = mode;
                    self.axis.apply(i, &mut config);
                    cells.push(Cell {
                        axis_value: self.axis.label(i),
                        agent: config.agent_kind,
                        traffic: config.traffic.mode,
                        config,
                    });
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::config("name", "must be non-empty and use only [A-Za-z0-9_-]"));
        }
        if matches!(self.axis, SweepAxis::AgentKind(_)) && !self.agent_kinds.is_empty() {
            return Err(Error::config("agent_kinds", "must be empty when the axis is agent_kind"));
        }
        if matches!(self.axis, SweepAxis::TrafficMode(_)) && !self.traffic_modes.is_empty() {
            return Err(Error::config("traffic_modes", "must be empty when the axis is traffic_mode"));
        }
        self.base.validate()?;
        if self.base.seeds.is_empty() {
            return Err(Error::config("base.seeds", "a sweep needs at least one seed"));
        }
        if let Some(t) = self.base.eval_times_s.iter().find(|&&t| t > self.base.duration_s) {
            return Err(Error::config("base.eval_times_s", format!("{t} s is past the run duration")));
        }
        for cell in self.cells() {
            cell.config.validate()?;
        }
        Ok(())
    }
}

/// What a cell keeps from each of its runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDigest {
    pub seed: u64,
    /// S_TX at each evaluation time of the config.
    pub s_tx_at: Vec<f64>,
    pub convergence_s: Option<f64>,
    /// Windowed S_TX series as (last SU, end time, S_TX).
    pub curve: Vec<(u64, f64, f64)>,
}

impl RunDigest {
    pub fn compute(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        let out = engine::run(cfg, seed)?;
        let m = &cfg.metrics;
        let windows = out.metrics.windows(m.window_mode, m.window_sus, m.sliding_stride_sus);
        let s_tx_at = cfg
            .eval_times_s
            .iter()
            .map(|&t| out.metrics.s_tx_at(t))
            .collect::<Result<_>>()?;
        Ok(Self {
            seed,
            s_tx_at,
            convergence_s: convergence_time(&windows, m.convergence_level, m.convergence_hold),
            curve: windows.iter().map(|w| (w.su_index, w.sim_time_s, w.s_tx)).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub runs: Vec<RunDigest>,
}

impl CellResult {
    pub fn s_tx_at(&self, eval_index: usize) -> MeanStd {
        mean_std(&self.runs.iter().map(|r| r.s_tx_at[eval_index]).collect::<Vec<_>>())
    }

    pub fn convergence_times(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.convergence_s).collect()
    }

    /// Median over the runs, counting a run that never converged as +inf.
    /// `None` when fewer than half of the runs converged.
    pub fn median_convergence_s(&self) -> Option<f64> {
        let mut times: Vec<f64> = self.runs.iter().map(|r| r.convergence_s.unwrap_or(f64::INFINITY)).collect();
        if times.is_empty() {
            return None;
        }
        times.sort_by(f64::total_cmp);
        let n = times.len();
        let median = if n % 2 == 1 {
            times[n / 2]
        } else {
            (times[n / 2 - 1] + times[n / 2]) / 2.0
        };
        median.is_finite().then_some(median)
    }

    /// Mean ± std training curve over the runs, window by window.
    pub fn mean_curve(&self) -> Vec<(u64, f64, MeanStd)> {
        let Some(first) = self.runs.first() else {
            return Vec::new();
        };
        (0..first.curve.len())
            .map(|w| {
                let (su, t, _) = first.curve[w];
                let values: Vec<f64> = self.runs.iter().map(|r| r.curve[w].2).collect();
                (su, t, mean_std(&values))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub cells: Vec<CellResult>,
}

fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::config("parallelism", e.to_string()))
}

/// Runs one scenario for each of its seeds, in seed-list order.
pub fn run_seeds(cfg: &ScenarioConfig, parallelism: usize) -> Result<Vec<engine::RunOutput>> {
    cfg.validate()?;
    thread_pool(parallelism)?.install(|| cfg.seeds.par_iter().map(|&seed| engine::run(cfg, seed)).collect())
}

/// Runs every cell for every seed on a pool of `parallelism` threads.
/// Results do not depend on the thread count.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize) -> Result<SweepResult> {
    spec.validate()?;
    let cells = spec.cells();
    let seeds = &spec.base.seeds;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = thread_pool(parallelism)?;
    let digests: Vec<Result<RunDigest>> =
        pool.install(|| jobs.par_iter().map(|&(c, seed)| RunDigest::compute(&cells[c].config, seed)).collect());

    let mut grouped: Vec<Vec<RunDigest>> = vec![Vec::with_capacity(seeds.len()); cells.len()];
    let mut failure = None;
    let mut failed_cells = vec![false; cells.len()];
    for (&(c, _), digest) in jobs.iter().zip(digests) {
        match digest {
            Ok(d) => grouped[c].push(d),
            Err(e) => {
                failed_cells[c] = true;
                failure.get_or_insert(e);
            }
        }
    }
    if let Some(source) = failure {
        let completed = cells
            .iter()
            .zip(&failed_cells)
            .filter(|(_, &failed)| !failed)
            .map(|(cell, _)| cell.id(spec.axis.name()))
            .collect();
        return Err(Error::SweepAborted {
            completed,
            total: cells.len(),
            source: Box::new(source),
        });
    }
    Ok(SweepResult {
        spec: spec.clone(),
        cells: cells
            .into_iter()
            .zip(grouped)
            .map(|(cell, runs)| CellResult { cell, runs })
            .collect(),
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepResult {
    /// One row per (cell, evaluation time), in cell order.
    pub fn write_summary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SUMMARY_TABLE_HEADER)?;
        let axis = self.spec.axis.name();
        for cr in &self.cells {
            let conv = cr.convergence_times();
            let conv_mean = (!conv.is_empty()).then(|| mean_std(&conv).mean);
            for (i, t) in cr.cell.config.eval_times_s.iter().enumerate() {
                let s = cr.s_tx_at(i);
                w.write_record([
                    axis.to_string(),
                    cr.cell.axis_value.clone(),
                    cr.cell.agent.label().to_string(),
                    cr.cell.traffic.label().to_string(),
                    t.to_string(),
                    s.mean.to_string(),
                    s.std.to_string(),
                    s.n.to_string(),
                    conv.len().to_string(),
                    opt_cell(conv_mean),
                    opt_cell(cr.median_convergence_s()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_curve<W: Write>(cell: &CellResult, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CURVE_TABLE_HEADER)?;
        for (su, t, s) in cell.mean_curve() {
            w.write_record([su.to_string(), t.to_string(), s.mean.to_string(), s.std.to_string(), s.n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `summary.csv`, `curves/<cell>.csv`, the figure description
    /// and the expanded spec under `dir`. Returns the paths written.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let curves = dir.join("curves");
        std::fs::create_dir_all(&curves)?;
        let mut written = Vec::new();

        let summary = dir.join("summary.csv");
        self.write_summary(std::fs::File::create(&summary)?)?;
        written.push(summary);

        let mut curve_files = Vec::new();
        for cr in &self.cells {
            let name = format!("{}.csv", cr.cell.id(self.spec.axis.name()));
            let path = curves.join(&name);
            Self::write_curve(cr, std::fs::File::create(&path)?)?;
            curve_files.push(format!("curves/{name}"));
            written.push(path);
        }

        let figure = dir.join("figure.toml");
        std::fs::write(&figure, self.figure_spec(curve_files).to_toml_string()?)?;
        written.push(figure);

        let spec = dir.join("spec.toml");
        std::fs::write(&spec, self.spec.to_toml_string()?)?;
        written.push(spec);
        Ok(written)
    }

    fn figure_spec(&self, curve_files: Vec<String>) -> FigurePreset {
        let spec = &self.spec;
        let (inputs, x_label) = match spec.figure {
            FigureKind::TrainingCurve => (curve_files, "Training time [s]".to_string()),
            FigureKind::GroupedBars => (vec!["summary.csv".to_string()], axis_label(&spec.axis).to_string()),
        };
        FigurePreset {
            name: spec.name.clone(),
            kind: spec.figure,
            inputs,
            group_by: spec.axis.name().to_string(),
            x_label,
            y_label: "S_TX".to_string(),
            output: format!("{}.png", spec.name),
        }
    }
}

fn axis_label(axis: &SweepAxis) -> &'static str {
    match axis {
        SweepAxis::AgentKind(_) => "Agent",
        SweepAxis::Agents(_) => "N",
        SweepAxis::PeriodMs(_) => "tau [ms]",
        SweepAxis::UlPowerDbm(_) => "P_TX,UL [dBm]",
        SweepAxis::TrafficMode(_) => "Traffic",
    }
}

/// Figure description consumed by the plotting tool. Paths are relative to
/// the sweep output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigurePreset {
    pub name: String,
    pub kind: FigureKind,
    pub inputs: Vec<String>,
    /// Summary column (or curve-file prefix) that separates groups.
    pub group_by: String,
    pub x_label: String,
    pub y_label: String,
    pub output: String,
}

impl FigurePreset {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Figure-reproduction sweeps, keyed by name.
pub fn presets() -> BTreeMap<&'static str, SweepSpec> {
    let both = vec![TrafficMode::Periodic, TrafficMode::QuasiPeriodic];
    let base = |agents: usize, duration_s: f64| ScenarioConfig {
        agents,
        duration_s,
        eval_times_s: vec![60.0],
        ..ScenarioConfig::default()
    };
    let spec = |name: &str, description: &str, base, axis, agent_kinds, traffic_modes, figure| SweepSpec {
        name: name.to_string(),
        description: description.to_string(),
        base,
        axis,
        agent_kinds,
        traffic_modes,
        figure,
    };
    let learners = AgentKind::LEARNERS.to_vec();
    let ts = vec![AgentKind::Ts];
    let periodic = vec![TrafficMode::Periodic];
    let mut out = BTreeMap::new();
    out.insert(
        "fig2",
        spec(
            "fig2",
            "S_TX vs training time per agent, N = 50, tau = 1.5 ms",
            base(50, 240.0),
            SweepAxis::AgentKind(learners.clone()),
            vec![],
            both.clone(),
            FigureKind::TrainingCurve,
        ),
    );
    out.insert(
        "fig3",
        spec(
            "fig3",
            "S_TX at 60 s vs N, tau = 1.5 ms",
            base(50, 240.0),
            SweepAxis::Agents(vec![25, 50, 75, 100]),
            learners.clone(),
            both.clone(),
            FigureKind::GroupedBars,
        ),
    );
    out.insert(
        "fig4",
        spec(
            "fig4",
            "S_TX at 60 s vs tau, N = 100",
            base(100, 240.0),
            SweepAxis::PeriodMs(vec![1.5, 2.5, 5.0]),
            learners.clone(),
            both.clone(),
            FigureKind::GroupedBars,
        ),
    );
    out.insert(
        "fig5",
        spec(
            "fig5",
            "S_TX at 60 s vs UL power, N = 100, tau = 1.5 ms",
            base(100, 240.0),
            SweepAxis::UlPowerDbm(vec![8.0, 10.0, 23.0]),
            learners,
            both,
            FigureKind::GroupedBars,
        ),
    );
    out.insert(
        "fig6",
        spec(
            "fig6",
            "TS training curves vs N, periodic, tau = 1.5 ms",
            base(50, 60.0),
            SweepAxis::Agents(vec![25, 50, 75, 100]),
            ts.clone(),
            periodic.clone(),
            FigureKind::TrainingCurve,
        ),
    );
    out.insert(
        "fig7",
        spec(
            "fig7",
            "TS training curves vs tau, periodic, N = 100",
            base(100, 60.0),
            SweepAxis::PeriodMs(vec![1.5, 2.5, 5.0]),
            ts,
            periodic,
            FigureKind::TrainingCurve,
        ),
    );
    out
}

pub fn preset(name: &str) -> Result<SweepSpec> {
    presets().remove(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// `name: description (cells x seeds runs)` per preset.
pub fn describe_presets() -> String {
    let mut s = String::new();
    for (name, spec) in presets() {
        let _ = writeln!(
            s,
            "{name}\t{}\t{} cells x {} seeds",
            spec.description,
            spec.cells().len(),
            spec.base.seeds.len()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_presets_validate() {
        let p = presets();
        assert_eq!(p.keys().copied().collect::<Vec<_>>(), ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7"]);
        for spec in p.values() {
            spec.validate().unwrap();
            assert_eq!(spec.base.seeds.len(), 10);
        }
    }

    #[test]
    fn preset_shapes() {
        let fig2 = preset("fig2").unwrap();
        assert_eq!(fig2.base.agents, 50);
        assert_eq!(fig2.base.traffic.period_ms, 1.5);
        assert_eq!(fig2.base.duration_s, 240.0);
        assert_eq!(preset("fig3").unwrap().cells().len(), 32);
        assert_eq!(preset("fig5").unwrap().cells().len(), 24);
        let fig6 = preset("fig6").unwrap();
        assert!(fig6.cells().iter().all(|c| c.agent == AgentKind::Ts && c.traffic == TrafficMode::Periodic));
        let fig7 = preset("fig7").unwrap();
        assert!(fig7.cells().iter().all(|c| c.config.agents == 100));
        assert!(matches!(preset("fig9"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn cells_apply_axis_last() {
        let spec = preset("fig3").unwrap();
        let cells = spec.cells();
        assert_eq!(cells[0].config.agents, 25);
        assert_eq!(cells[0].agent, AgentKind::Ra);
        assert_eq!(cells[1].traffic, TrafficMode::QuasiPeriodic);
        assert_eq!(cells[31].config.agents, 100);
        assert_eq!(cells[31].id("agents"), "agents-100_na_quasi_periodic");
    }

    #[test]
    fn spec_toml_round_trip() {
        for spec in presets().into_values() {
            let text = spec.to_toml_string().unwrap();
            assert_eq!(SweepSpec::from_toml_str(&text).unwrap(), spec);
        }
    }

    #[test]
    fn hand_written_spec_parses() {
        let spec = SweepSpec::from_toml_str(
            r#"
            name = "small"
            figure = "grouped_bars"
            agent_kinds = ["ra", "ts"]
            [axis]
            kind = "ul_power_dbm"
            values = [8, 23.0]
            [base]
            agents = 4
            duration_s = 1.0
            eval_times_s = [0.5]
            "#,
        )
        .unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.axis, SweepAxis::UlPowerDbm(vec![8.0, 23.0]));
        assert_eq!(spec.cells().len(), 4);
    }

    #[test]
    fn redundant_agent_dimension_is_rejected() {
        let mut spec = preset("fig2").unwrap();
        spec.agent_kinds = vec![AgentKind::Ts];
        assert!(matches!(spec.validate(), Err(Error::Config { field: "agent_kinds", .. })));
        let mut spec = preset("fig6").unwrap();
        spec.base.eval_times_s = vec![61.0];
        assert!(matches!(spec.validate(), Err(Error::Config { field: "base.eval_times_s", .. })));
    }

    #[test]
    fn median_counts_unconverged_runs_as_infinite() {
        let digest = |c| RunDigest {
            seed: 0,
            s_tx_at: vec![],
            convergence_s: c,
            curve: vec![],
        };
        let cell = preset("fig6").unwrap().cells().remove(0);
        let cr = CellResult {
            cell,
            runs: vec![digest(Some(3.0)), digest(None), digest(Some(1.0))],
        };
        assert_eq!(cr.median_convergence_s(), Some(3.0));
        let cr = CellResult {
            runs: vec![digest(None), digest(None), digest(Some(1.0))],
            ..cr
        };
        assert_eq!(cr.median_convergence_s(), None);
    }
}
