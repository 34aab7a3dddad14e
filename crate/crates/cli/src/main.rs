use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pomapf_core::benchmark::{
    emit_results, generate_episode, read_table, run_batch, run_sweep, OutputFormat, Simulation,
    PRESETS,
};
use pomapf_core::grid::parse_scenario;
use pomapf_core::{
    run_ablation_suite, run_episode_on, AggregateReport, GridMap, InfoRegime, ScenarioConfig, Task,
};

#[derive(Parser)]
#[command(
    name = "pomapf",
    version,
    about = "Partially observable multi-agent pathfinding benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and report SR, EL and ICR.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Simulate this map-and-instance file instead of generated instances.
        #[arg(long, value_name = "FILE")]
        instance: Option<PathBuf>,
        /// Write the per-step decision trace of the first instance here.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Run one configuration for each agent count.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Agent counts, comma separated. Defaults to the preset's sweep.
        #[arg(long, value_delimiter = ',', value_name = "N,..")]
        agent_counts: Vec<usize>,
    },
    /// Information regime x loop detection grid for each agent count.
    Ablate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_delimiter = ',', value_name = "N,..")]
        agent_counts: Vec<usize>,
    },
    /// Redraw the plots from an existing results table.
    Plot {
        /// Table written by an earlier run.
        #[arg(long, value_name = "FILE", default_value = "results/results.csv")]
        input: PathBuf,
        #[arg(long, value_name = "DIR", default_value = "results")]
        out: PathBuf,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Named preset with a fixed seed list; see `pomapf presets`.
    #[arg(long)]
    preset: Option<String>,
    /// TOML file with ScenarioConfig keys; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Square map side, or WxH.
    #[arg(long, value_parser = parse_size, value_name = "N|WxH")]
    map_size: Option<(u32, u32)>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    max_steps: Option<u32>,
    #[arg(long)]
    instances: Option<usize>,
    /// First instance seed; instances use seed, seed+1, ...
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    regime: Option<Regime>,
    #[arg(long)]
    no_loop_detection: bool,
    #[arg(long)]
    switch_threshold: Option<usize>,
    /// Message latency in steps.
    #[arg(long)]
    latency: Option<u32>,
    #[arg(long)]
    drop_rate: Option<f64>,
    /// Exploration probability of the local policy.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    /// Files to write; repeat or comma-separate for both.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "table")]
    format: Vec<Format>,
}

#[derive(ValueEnum, Clone, Copy)]
enum Regime {
    Full,
    Shared,
    Local,
}

#[derive(ValueEnum, Clone, Copy)]
enum Format {
    Table,
    Plot,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let parse = |p: &str| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

impl ScenarioArgs {
    /// Preset, then config file, then individual flags.
    fn resolve(&self) -> Result<(ScenarioConfig, Vec<usize>)> {
        let (mut cfg, sweep) = match &self.preset {
            Some(name) => ScenarioConfig::preset(name)?,
            None => (ScenarioConfig::default(), vec![8, 16, 32, 64, 128]),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            cfg = cfg
                .overlay_toml_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
        }
        if let Some((w, h)) = self.map_size {
            cfg.width = w;
            cfg.height = h;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v; }
            )*};
        }
        set!(
            density,
            agents,
            instances,
            seed,
            switch_threshold,
            latency,
            drop_rate,
            epsilon
        );
        if self.max_steps.is_some() {
            cfg.max_steps = self.max_steps;
        }
        if self.seed.is_some() || self.instances.is_some() {
            cfg.seeds = None;
        }
        if let Some(r) = self.regime {
            cfg.regime = match r {
                Regime::Full => InfoRegime::Full,
                Regime::Shared => InfoRegime::Shared,
                Regime::Local => InfoRegime::Local,
            };
        }
        if self.no_loop_detection {
            cfg.loop_detection = false;
        }
        cfg.validate()?;
        Ok((cfg, sweep))
    }
}

impl OutputArgs {
    fn formats(&self) -> Vec<OutputFormat> {
        self.format
            .iter()
            .map(|f| match f {
                Format::Table => OutputFormat::Table,
                Format::Plot => OutputFormat::Plot,
            })
            .collect()
    }

    fn emit(&self, reports: &[AggregateReport]) -> Result<()> {
        for path in emit_results(reports, &self.out, &self.formats())? {
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn print_table(reports: &[AggregateReport]) {
    println!(
        "{:>9} {:>7} {:>6} {:>6} {:>8} {:>5} {:>6} {:>8} {:>6} {:>10}",
        "map", "density", "agents", "regime", "loop", "SR", "EL", "ICR", "coll", "infeasible"
    );
    for r in reports {
        println!(
            "{:>9} {:>7.2} {:>6} {:>6} {:>8} {:>5.2} {:>6.1} {:>8.3} {:>6.1} {:>10}",
            format!("{}x{}", r.width, r.height),
            r.density,
            r.agents,
            r.regime,
            if r.loop_detection { "on" } else { "off" },
            r.sr,
            r.el,
            r.icr,
            r.collisions,
            r.infeasible
        );
    }
}

fn write_trace(cfg: &ScenarioConfig, instance: Option<&Path>, path: &Path) -> Result<()> {
    let seed = cfg.instance_seeds()[0];
    let (map, tasks) = match instance {
        Some(file) => load_instance(file)?,
        None => generate_episode(cfg, seed)?,
    };
    let mut sim = Simulation::new(cfg, &map, &tasks, seed)?.with_trace();
    while !sim.is_done() {
        sim.step()?;
    }
    let mut out = std::io::BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for record in sim.trace() {
        writeln!(out, "{record}")?;
    }
    out.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn load_instance(path: &Path) -> Result<(GridMap, Vec<Task>)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading instance {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("parsing instance {}", path.display()))
}

fn run_instance(cfg: &ScenarioConfig, path: &Path) -> Result<AggregateReport> {
    let (map, tasks) = load_instance(path)?;
    let mut cfg = cfg.clone();
    cfg.width = map.width();
    cfg.height = map.height();
    cfg.agents = tasks.len();
    cfg.density = map.blocked_count() as f64 / map.len() as f64;
    let records = cfg
        .instance_seeds()
        .into_iter()
        .map(|seed| run_episode_on(&cfg, &map, &tasks, seed))
        .collect::<pomapf_core::Result<Vec<_>>>()?;
    Ok(AggregateReport::from_records(&cfg, &records))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            output,
            instance,
            trace,
        } => {
            let (cfg, _) = scenario.resolve()?;
            let report = match &instance {
                Some(path) => run_instance(&cfg, path)?,
                None => run_batch(&cfg),
            };
            print_table(std::slice::from_ref(&report));
            output.emit(&[report])?;
            if let Some(path) = trace {
                write_trace(&cfg, instance.as_deref(), &path)?;
            }
        }
        Command::Sweep {
            scenario,
            output,
            agent_counts,
        } => {
            let (cfg, preset_counts) = scenario.resolve()?;
            let counts = if agent_counts.is_empty() {
                preset_counts
            } else {
                agent_counts
            };
            let reports = run_sweep(&cfg, &counts);
            print_table(&reports);
            output.emit(&reports)?;
        }
        Command::Ablate {
            scenario,
            output,
            agent_counts,
        } => {
            let (cfg, preset_counts) = scenario.resolve()?;
            let counts = if agent_counts.is_empty() {
                preset_counts
            } else {
                agent_counts
            };
            let suite = run_ablation_suite(&cfg, &counts);
            print_table(&suite.reports);
            println!();
            println!(
                "{:>6} {:>16} {:>16} {:>7} {:>7} {:>7}",
                "agents", "a", "b", "dSR", "dEL", "dICR"
            );
            for c in &suite.comparisons {
                println!(
                    "{:>6} {:>16} {:>16} {:>+7.2} {:>+7.1} {:>+7.3}",
                    c.agents, c.a, c.b, c.sr_delta, c.el_delta, c.icr_delta
                );
            }
            output.emit(&suite.reports)?;
        }
        Command::Plot { input, out } => {
            let reports = read_table(&input)?;
            if reports.is_empty() {
                bail!("{} has no rows to plot", input.display());
            }
            for path in emit_results(&reports, &out, &[OutputFormat::Plot])? {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Presets => {
            for (name, about) in PRESETS {
                println!("{name:<18} {about}");
            }
        }
    }
    Ok(())
}
