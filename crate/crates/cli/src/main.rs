use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use sidlab_core::report::{aggregate, emit_plot_data, RunCurve, RunManifest};
use sidlab_core::sf::heatmap;
use sidlab_core::sid::training::{evaluate, mean_return, success_rate};
use sidlab_core::sid::run_training;
use sidlab_core::{Cell, Checkpoint, Config, GridSpec, RunOutput};

#[derive(Parser)]
#[command(name = "sidlab", version, about = "Successor feature control and scheduled intrinsic drive on gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Forces the single-threaded reproducible mode.
        #[arg(long)]
        deterministic: bool,
        /// Output directory (default: runs/<env>-seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play greedy episodes from a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a successor-distance or SFC field as CSV plus a PGM image.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        kind: HeatmapKind,
        /// Reference cell `x,y` for the distance field (default: the start
        /// cell). The SFC field does not use it.
        #[arg(long, value_parser = parse_cell)]
        anchor: Option<Cell>,
        /// CSV path; the image goes next to it with a .pgm extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the same config under several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run directories into mean/std learning curves.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Bucket width in environment steps.
        #[arg(long)]
        bucket: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum HeatmapKind {
    Sd,
    Sfc,
}

fn parse_cell(s: &str) -> std::result::Result<Cell, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got `{s}`"))?;
    let coord = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad coordinate `{v}`: {e}"));
    Ok(Cell::new(coord(x)?, coord(y)?))
}

fn summary_line(out: &RunOutput) -> String {
    format!(
        "seed {}: {} episodes, {} env steps, final success {:.2}, final return {:.3}, last-50 training success {:.2}",
        out.seed,
        out.episodes.len(),
        out.env_steps,
        out.final_success_rate(),
        out.final_return(),
        out.trailing_success_rate(50)
    )
}

fn train(cfg: &Config, seed: u64, dir: &Path) -> Result<RunOutput> {
    info!("training {:?} on {} with seed {seed}", cfg.agent.kind, cfg.env.name);
    let mut cfg = cfg.clone();
    cfg.run.seed = seed;
    let out = run_training(&cfg)?;
    out.write_artifacts(dir)
        .with_context(|| format!("writing artifacts to {}", dir.display()))?;
    Ok(out)
}

fn cmd_run(config: &Path, seed: Option<u64>, deterministic: bool, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = Config::from_file(config).with_context(|| format!("loading {}", config.display()))?;
    if deterministic {
        cfg.run.deterministic = true;
    }
    let seed = seed.unwrap_or(cfg.run.seed);
    let dir = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{seed}", cfg.env.name.replace(':', "-"))));
    let result = train(&cfg, seed, &dir)?;
    println!("{}", summary_line(&result));
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_eval(checkpoint: &Path, env: &str, episodes: usize, epsilon: f64, seed: u64) -> Result<()> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let spec = if env == ck.config.env.name {
        ck.config.build_spec()?
    } else {
        GridSpec::builtin(env)?
    };
    let records = evaluate(&ck.learner.q, Arc::new(spec), episodes, epsilon, seed)?;
    println!(
        "{env}: {episodes} episodes, success rate {:.3}, mean return {:.3}",
        success_rate(&records),
        mean_return(&records)
    );
    Ok(())
}

fn cmd_heatmap(checkpoint: &Path, kind: HeatmapKind, anchor: Option<Cell>, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let spec = ck.config.build_spec()?;
    let field = match kind {
        HeatmapKind::Sd => {
            let anchor = anchor.unwrap_or(spec.starts()[0]);
            heatmap::sd_field(&ck.learner.sf, &spec, anchor)?
        }
        HeatmapKind::Sfc => heatmap::sfc_field(&ck.learner.sf, &spec),
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    field.write_csv(out)?;
    let pgm = out.with_extension("pgm");
    field.write_pgm(&pgm)?;
    println!("wrote {} and {}", out.display(), pgm.display());
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn cmd_sweep(config: &Path, seeds: &[u64], out: Option<PathBuf>) -> Result<()> {
    let cfg = Config::from_file(config).with_context(|| format!("loading {}", config.display()))?;
    let root = out.unwrap_or_else(|| PathBuf::from(format!("sweeps/{}", cfg.env.name.replace(':', "-"))));
    let mut table = String::from("seed,final_success,final_return,trailing50_success,episodes,env_steps\n");
    let mut successes = Vec::new();
    let mut outputs = Vec::new();
    for &seed in seeds {
        let name = format!("seed{seed}");
        let result = train(&cfg, seed, &root.join(&name))?;
        println!("{}", summary_line(&result));
        writeln!(
            table,
            "{seed},{},{},{},{},{}",
            result.final_success_rate(),
            result.final_return(),
            result.trailing_success_rate(50),
            result.episodes.len(),
            result.env_steps
        )?;
        successes.push(result.final_success_rate());
        outputs.push(name);
    }
    std::fs::write(root.join("summary.csv"), table)?;
    outputs.push("summary.csv".into());
    RunManifest::new(&cfg, seeds.to_vec(), &cfg.env.name, outputs).write(&root.join("manifest.json"))?;
    println!("median final success {:.2} over {} seeds", median(successes), seeds.len());
    Ok(())
}

/// A run directory holds `metrics.csv`; a sweep directory holds run
/// directories.
fn collect_runs(dirs: &[PathBuf]) -> Result<Vec<RunCurve>> {
    let mut runs = Vec::new();
    for dir in dirs {
        if dir.join("metrics.csv").is_file() {
            runs.push(RunCurve::load(dir)?);
            continue;
        }
        let mut children: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("metrics.csv").is_file())
            .collect();
        if children.is_empty() {
            bail!("{} has no metrics.csv and no run subdirectories", dir.display());
        }
        children.sort();
        for child in children {
            runs.push(RunCurve::load(&child)?);
        }
    }
    Ok(runs)
}

fn cmd_report(dirs: &[PathBuf], bucket: u64, out: &Path) -> Result<()> {
    let runs = collect_runs(dirs)?;
    let summary = aggregate(&runs, bucket)?;
    let (csv, svg) = emit_plot_data(&summary, out)?;
    println!(
        "{} runs, {} buckets: wrote {} and {}",
        runs.len(),
        summary.bucket_starts.len(),
        csv.display(),
        svg.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            deterministic,
            out,
        } => cmd_run(&config, seed, deterministic, out),
        Command::Eval {
            checkpoint,
            env,
            episodes,
            epsilon,
            seed,
        } => cmd_eval(&checkpoint, &env, episodes, epsilon, seed),
        Command::Heatmap {
            checkpoint,
            kind,
            anchor,
            out,
        } => cmd_heatmap(&checkpoint, kind, anchor, &out),
        Command::Sweep { config, seeds, out } => cmd_sweep(&config, &seeds, out),
        Command::Report { runs, bucket, out } => cmd_report(&runs, bucket, &out),
    }
}
