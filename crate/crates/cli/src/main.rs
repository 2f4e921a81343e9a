use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mab_uplink::config::WindowMode;
use mab_uplink::experiments::{self, SweepSpec};
use mab_uplink::metrics::{write_window_table, RunSummary};
use mab_uplink::{parse_seed_list, Error, ScenarioConfig};

#[derive(Parser)]
#[command(name = "mab-uplink", version, about = "Bandit-based uplink channel selection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file for each seed.
    Run {
        config: PathBuf,
        /// Seeds, e.g. `0..10` or `1,4,7`. Defaults to the file's list.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<SeedList>,
        #[arg(long, default_value_t = default_parallelism())]
        parallelism: usize,
        #[arg(long, short, default_value = "out/run")]
        out: PathBuf,
    },
    /// Run a named preset or a sweep spec file.
    Sweep {
        /// Preset name (see `list-presets`) or path to a sweep TOML file.
        spec: String,
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<SeedList>,
        #[arg(long, default_value_t = default_parallelism())]
        parallelism: usize,
        /// Output directory. Defaults to `out/<sweep name>`.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Override the simulated duration of every cell, in seconds.
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Print the built-in figure presets.
    ListPresets,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    parse_seed_list(s).map(SeedList).map_err(|e| e.to_string())
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::SweepAborted { completed, .. } = &e {
                for cell in completed {
                    eprintln!("  completed: {cell}");
                }
            }
            match e {
                Error::Config { .. } | Error::Parse(_) | Error::UnknownPreset(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(command: Command) -> mab_uplink::Result<()> {
    match command {
        Command::Run {
            config,
            seeds,
            parallelism,
            out,
        } => run(&config, seeds, parallelism, &out),
        Command::Sweep {
            spec,
            seeds,
            parallelism,
            out,
            duration_s,
        } => sweep(&spec, seeds, parallelism, out, duration_s),
        Command::ListPresets => {
            print!("{}", experiments::describe_presets());
            Ok(())
        }
    }
}

fn run(path: &Path, seeds: Option<SeedList>, parallelism: usize, out: &Path) -> mab_uplink::Result<()> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(SeedList(seeds)) = seeds {
        cfg.seeds = seeds;
    }
    if cfg.seeds.is_empty() {
        return Err(Error::Config {
            field: "seeds",
            reason: "no seeds to run".into(),
        });
    }
    std::fs::create_dir_all(out)?;
    let records = experiments::run_seeds(&cfg, parallelism)?;
    for out_run in &records {
        let record = &out_run.metrics;
        let m = &cfg.metrics;
        for (mode, suffix) in [(WindowMode::Tumbling, "tumbling"), (WindowMode::Sliding, "sliding")] {
            let path = out.join(format!("seed-{}.{suffix}.csv", record.seed));
            let windows = record.windows(mode, m.window_sus, m.sliding_stride_sus);
            write_window_table(std::fs::File::create(path)?, &windows)?;
        }
        let summary = RunSummary::new(&cfg, record);
        std::fs::write(out.join(format!("seed-{}.json", record.seed)), summary.to_json()?)?;
        let conv = summary
            .convergence_time_s
            .map_or_else(|| "not converged".to_string(), |t| format!("converged at {t} s"));
        println!("seed {}: S_TX {:.5}, final window {:.5}, {conv}", record.seed, summary.s_tx, summary.final_window_s_tx);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(
    spec: &str,
    seeds: Option<SeedList>,
    parallelism: usize,
    out: Option<PathBuf>,
    duration_s: Option<f64>,
) -> mab_uplink::Result<()> {
    let mut spec = if Path::new(spec).is_file() {
        SweepSpec::from_toml_str(&std::fs::read_to_string(spec)?)?
    } else {
        experiments::preset(spec)?
    };
    if let Some(SeedList(seeds)) = seeds {
        spec.base.seeds = seeds;
    }
    if let Some(d) = duration_s {
        spec.base.duration_s = d;
        spec.base.eval_times_s.retain(|&t| t <= d);
        if spec.base.eval_times_s.is_empty() {
            eprintln!("note: evaluation times past {d} s dropped; evaluating at {d} s");
            spec.base.eval_times_s.push(d);
        }
    }
    let result = mab_uplink::run_sweep(&spec, parallelism)?;
    let out = out.unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
    let written = result.write_dir(&out)?;
    println!(
        "{}: {} cells x {} seeds, {} files in {}",
        spec.name,
        result.cells.len(),
        spec.base.seeds.len(),
        written.len(),
        out.display()
    );
    Ok(())
}
