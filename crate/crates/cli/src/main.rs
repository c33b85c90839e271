use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use habinv::annealing::{CoolingSchedule, StopRule};
use habinv::experiment::{
    default_out_root, load_space, run_experiment, run_inversion, timestamped_dir, ExperimentConfig,
    RunSummary, PRESETS,
};
use habinv::{Grid, Interval, MeasurementSet};

/// Reconstruct habitat growth rates from partial density measurements.
#[derive(Parser)]
#[command(name = "habinv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an experiment end to end and invert its measurements.
    Run(RunArgs),
    /// Invert a saved measurement file without access to the truth.
    Invert(InvertArgs),
    /// Print the JSON configuration of a preset.
    Config {
        /// Preset name.
        preset: String,
    },
}

#[derive(Args)]
struct SearchArgs {
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run one independent chain per seed, each in its own subdirectory.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Option<Vec<u64>>,
    /// Output root (default: $HABINV_OUT or ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after this many consecutive iterations without change.
    #[arg(long)]
    quiescence: Option<usize>,
    /// Iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Initial temperature.
    #[arg(long)]
    theta0: Option<f64>,
    /// Cooling factor per iteration.
    #[arg(long)]
    alpha: Option<f64>,
}

impl SearchArgs {
    fn apply(&self, schedule: &mut CoolingSchedule, stop: &mut StopRule) {
        if let Some(v) = self.theta0 {
            schedule.theta0 = v;
        }
        if let Some(v) = self.alpha {
            schedule.alpha = v;
        }
        if let Some(v) = self.quiescence {
            stop.quiescence = v;
        }
        if let Some(v) = self.max_iters {
            stop.max_iters = v;
        }
    }

    fn out_root(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(default_out_root)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (JSON) or preset name.
    #[arg(long)]
    config: String,
    /// Override the grid: one node count per axis.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    /// Override the time step.
    #[arg(long)]
    dt: Option<f64>,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct InvertArgs {
    /// Measurement file.
    #[arg(long)]
    measurements: PathBuf,
    /// Configuration space: preset name or JSON file.
    #[arg(long)]
    space: String,
    /// Crowding coefficient for the steady-state forecast, if known.
    #[arg(long)]
    gamma: Option<f64>,
    /// Expected grid (one node count per axis); checked against the file.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    #[command(flatten)]
    search: SearchArgs,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Invert(args) => invert(args),
        Command::Config { preset } => {
            if !PRESETS.contains(&preset.as_str()) {
                bail!("unknown preset `{preset}` (known: {})", PRESETS.join(", "));
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&ExperimentConfig::preset(&preset)?)?
            );
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading `{}`", args.config))?;
    if let Some(nodes) = args.nodes {
        config.nodes = nodes;
    }
    if let Some(dt) = args.dt {
        config.dt = dt;
    }
    args.search.apply(&mut config.schedule, &mut config.stop);
    config.validate()?;
    let base_seed = args.search.seed.unwrap_or(config.seed);
    let label = format!("{}-seed{base_seed}", config.name);
    let root = args.search.out_root();
    match &args.search.seeds {
        None => {
            config.seed = base_seed;
            let dir = timestamped_dir(&root, &label)?;
            let summary = run_experiment(&config, &dir)
                .with_context(|| format!("run failed; partial artifacts in {}", dir.display()))?;
            report(&summary);
        }
        Some(seeds) => {
            let dir = timestamped_dir(&root, &format!("{}-seeds", config.name))?;
            for_each_seed(seeds, &dir, |seed, sub| {
                let mut c = config.clone();
                c.seed = seed;
                run_experiment(&c, sub)
            })?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn invert(args: InvertArgs) -> Result<()> {
    let ms = MeasurementSet::load(&args.measurements)
        .with_context(|| format!("reading measurements `{}`", args.measurements.display()))?;
    if let Some(nodes) = &args.nodes {
        let d = &ms.grid;
        let extent: Vec<Interval> = (0..d.dim)
            .map(|a| Interval::new(d.lo[a], d.hi[a]))
            .collect();
        let grid = Grid::new(&extent, nodes)?;
        ms.check_grid(&grid)?;
    }
    let space =
        load_space(&args.space).with_context(|| format!("loading space `{}`", args.space))?;
    let mut schedule = CoolingSchedule::default();
    let mut stop = StopRule::default();
    args.search.apply(&mut schedule, &mut stop);
    let root = args.search.out_root();
    match &args.search.seeds {
        None => {
            let seed = args.search.seed.unwrap_or(0);
            let dir = timestamped_dir(&root, &format!("invert-seed{seed}"))?;
            let summary = run_inversion(&ms, &space, schedule, stop, seed, args.gamma, &dir)?;
            report(&summary);
        }
        Some(seeds) => {
            let dir = timestamped_dir(&root, "invert-seeds")?;
            for_each_seed(seeds, &dir, |seed, sub| {
                run_inversion(&ms, &space, schedule, stop, seed, args.gamma, sub)
            })?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

/// Runs independent chains concurrently, one thread and subdirectory each.
fn for_each_seed(
    seeds: &[u64],
    dir: &Path,
    job: impl Fn(u64, &Path) -> habinv::Result<RunSummary> + Sync,
) -> Result<()> {
    let results: Vec<(u64, habinv::Result<RunSummary>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let job = &job;
                let sub = dir.join(format!("seed-{seed}"));
                scope.spawn(move || (seed, job(seed, &sub)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut failed = 0;
    for (seed, result) in results {
        match result {
            Ok(summary) => {
                eprintln!("seed {seed}:");
                report(&summary);
            }
            Err(e) => {
                eprintln!("seed {seed} failed: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} chains failed", seeds.len());
    }
    Ok(())
}

fn report(summary: &RunSummary) {
    let t = &summary.trace;
    eprintln!(
        "  iterations {} (last change {}), G = {:e}, {:?}",
        t.iterations(),
        t.last_change.map_or("none".to_string(), |n| n.to_string()),
        t.g_final,
        t.stop_reason
    );
    if let Some(e) = summary.mean_abs_error {
        eprintln!("  mean absolute error {e:e}");
    }
    eprintln!(
        "  lambda1 {:e} ({:?})",
        summary.forecast.lambda1, summary.forecast.verdict
    );
    println!("{}", summary.dir.display());
}
