use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pacnav::config::{ForestMatch, Preset, ScenarioConfig};
use pacnav::environment::{density, Forest};
use pacnav::output::{self, FOREST_FILE};
use pacnav::sim::{build_forest, run_batch_with, run_mission};

/// Decentralized swarm navigation simulator.
#[derive(Parser)]
#[command(name = "pacnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and write its log.
    Run(Scenario),
    /// Run several independently seeded missions.
    Batch {
        #[command(flatten)]
        scenario: Scenario,
        /// Number of runs; run r uses master seed + r.
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Generate a forest file, or inspect an existing one.
    Forest {
        #[command(flatten)]
        scenario: Scenario,
        /// Print statistics of this forest file instead of generating one.
        #[arg(long, value_name = "PATH")]
        inspect: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Scenario {
    /// Scenario file (TOML). Overrides --preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario: 1a, 1b, 2a, 2b or forest-real.
    #[arg(long, default_value = "1a")]
    preset: Preset,
    /// Tree count rule for the case presets: rho or n-trees.
    #[arg(long, default_value = "rho")]
    forest_match: ForestMatch,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Step budget.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "pacnav-out")]
    out_dir: PathBuf,
    /// Print nothing but errors.
    #[arg(long)]
    quiet: bool,
}

impl Scenario {
    fn resolve(&self) -> pacnav::Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::preset_with(self.preset, self.forest_match),
        };
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(m) = self.max_steps {
            c.max_steps = m;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(s: &Scenario) -> pacnav::Result<bool> {
    let config = s.resolve()?;
    let log = run_mission(&config)?;
    output::write_outputs(&log, &s.out_dir)?;
    if !s.quiet {
        let sm = &log.summary;
        match sm.completion_time {
            Some(t) => println!("completed in {t:.1} s ({} steps)", sm.steps),
            None => println!("incomplete after {} steps", sm.steps),
        }
        println!("min inter-agent distance {:.3} m", sm.min_pair_distance);
        println!("min agent-tree distance  {:.3} m", sm.min_tree_distance);
        println!("output written to {}", s.out_dir.display());
    }
    Ok(log.summary.completed)
}

fn batch(s: &Scenario, runs: usize) -> pacnav::Result<bool> {
    let config = s.resolve()?;
    let out = &s.out_dir;
    let summary = run_batch_with(&config, runs, None, |r, log| {
        output::write_outputs(log, &output::run_dir(out, r))
    })?;
    output::write_batch(&summary, &config, out)?;
    if !s.quiet {
        for r in &summary.runs {
            let status = match r.summary.completion_time {
                Some(t) => format!("completed {t:.1} s"),
                None => "incomplete".to_string(),
            };
            println!("run {:3} seed {:<20} {status}", r.run, r.master_seed);
        }
        let a = &summary.aggregate;
        println!("{}/{} runs completed", a.completed_runs, a.n_runs);
        if a.completion_time.count > 0 {
            println!(
                "completion time mean {:.1} s, min {:.1} s, max {:.1} s",
                a.completion_time.mean, a.completion_time.min, a.completion_time.max
            );
        }
        println!("output written to {}", out.display());
    }
    Ok(summary.all_completed())
}

fn describe(forest: &Forest, r_o: f64) {
    println!("seed      {}", forest.seed);
    println!("trees     {}", forest.len());
    println!(
        "area      {} x {} m at ({}, {})",
        forest.area.width, forest.area.height, forest.area.origin.x, forest.area.origin.y
    );
    println!("density   {:.4}", density(forest.len(), r_o, forest.area.size()));
    let mut spacing = f64::INFINITY;
    for (i, a) in forest.trees.iter().enumerate() {
        for b in &forest.trees[i + 1..] {
            spacing = spacing.min(a.center.distance(b.center));
        }
    }
    if spacing.is_finite() {
        println!("spacing   {spacing:.3} m minimum");
    }
}

fn forest(s: &Scenario, inspect: Option<&Path>) -> pacnav::Result<bool> {
    let config = s.resolve()?;
    let forest = match inspect {
        Some(path) => Forest::load(path)?,
        None => {
            let f = build_forest(&config)?;
            std::fs::create_dir_all(&s.out_dir).map_err(|e| pacnav::Error::Io {
                path: s.out_dir.clone(),
                source: e,
            })?;
            f.save(&s.out_dir.join(FOREST_FILE))?;
            f
        }
    };
    if !s.quiet {
        describe(&forest, config.control.r_o);
        if inspect.is_none() {
            println!("written to {}", s.out_dir.join(FOREST_FILE).display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // 2 is reserved for incomplete missions
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run(s) => run(s),
        Command::Batch { scenario, runs } => batch(scenario, *runs),
        Command::Forest { scenario, inspect } => forest(scenario, inspect.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
