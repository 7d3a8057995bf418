use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flowmatch::kvfile::KeyValues;
use flowmatch::message_flow::{FlowMode, FlowSchedule, Neighborhood, ParameterStore};
use flowmatch::pipeline::{parse_seeds, run_match, run_suite, PipelineConfig, SuiteConfig};
use flowmatch::tensor_io::{generate_synthetic_episode, EpisodeSpec};
use flowmatch::Error;

#[derive(Parser)]
#[command(name = "match", version, about = "Match a query feature grid against an annotated support grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn as_str(self) -> &'static str {
        match self {
            Switch::On => "on",
            Switch::Off => "off",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Match one episode and write probability map, prediction and metrics.
    Run(Box<RunArgs>),
    /// Run synthetic episodes for a range of seeds and aggregate metrics.
    Suite {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive range `a..b` or a comma-separated list.
        #[arg(long)]
        seeds: String,
    },
    /// Write a synthetic episode.
    Synth {
        #[arg(long)]
        seed: u64,
        /// `key = value` episode spec; defaults are used for missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a randomly initialised parameter store.
    InitParams {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value = "iterative")]
        schedule: String,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, default_value = "8")]
        neighborhood: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Zero the update MLP so message flow is the identity.
        #[arg(long)]
        zero_mlp: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    episode: Option<PathBuf>,
    /// Parameter store; random initialisation from --seed when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_name = "partial|full")]
    ot_mode: Option<String>,
    #[arg(long)]
    mfm: Option<Switch>,
    #[arg(long)]
    prior_mask: Option<Switch>,
    #[arg(long, value_name = "iterative|stacked")]
    schedule: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_name = "4|8")]
    neighborhood: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon_scale: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    anneal_steps: Option<usize>,
    #[arg(long)]
    class: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.set(k, v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("episode", path(&self.episode));
        put("params", path(&self.params));
        put("out", path(&self.out));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("ot_mode", self.ot_mode.clone());
        put("mfm", self.mfm.map(|s| s.as_str().to_string()));
        put("prior_mask", self.prior_mask.map(|s| s.as_str().to_string()));
        put("schedule", self.schedule.clone());
        put("steps", self.steps.map(|v| v.to_string()));
        put("neighborhood", self.neighborhood.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("epsilon_scale", self.epsilon_scale.map(|v| v.to_string()));
        put("max_iters", self.max_iters.map(|v| v.to_string()));
        put("tolerance", self.tolerance.map(|v| v.to_string()));
        put("anneal_steps", self.anneal_steps.map(|v| v.to_string()));
        put("class", self.class.clone());
        kv
    }

    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = PipelineConfig::default();
        if let Some(file) = &self.config {
            cfg = cfg.apply(&KeyValues::load(file)?).map_err(|e| e.in_file(file))?;
        }
        cfg = cfg.apply(&self.overrides())?;
        if cfg.episode.as_os_str().is_empty() || cfg.out.as_os_str().is_empty() {
            return Err(Error::Config("--episode and --out are required".into()));
        }
        Ok(cfg)
    }
}

/// 2 for configuration errors, 4 for solver non-convergence, 3 for data.
fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidThreshold(_) => 2,
        Error::Convergence { .. } => 4,
        _ => 3,
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let summary = run_match(&cfg)?;
            println!(
                "matched {} units, real block {:.6}, cost {:.6}, {} sweeps",
                summary.matched_mass, summary.real_block_mass, summary.achieved_cost, summary.iterations
            );
            if let Some(m) = summary.metrics {
                println!("fbiou {:.4}, miou {:.4}", m.fbiou, m.miou);
            }
        }
        Command::Suite { config, seeds } => {
            let cfg = SuiteConfig::load(&config)?;
            let seeds = parse_seeds(&seeds)?;
            let report = run_suite(&cfg, &seeds)?;
            print!("{}", report.to_text());
            if let Some(err) = report.first_error {
                return Err(Error::EmptyInput(format!("suite had failing runs; first: {err}")));
            }
        }
        Command::Synth { seed, spec, out } => {
            let spec = match spec {
                Some(path) => EpisodeSpec::from_kv(&KeyValues::load(&path)?).map_err(|e| e.in_file(&path))?,
                None => EpisodeSpec::default(),
            };
            generate_synthetic_episode(seed, &spec, &out)?;
        }
        Command::InitParams { out, channels, schedule, steps, neighborhood, seed, zero_mlp } => {
            let schedule = FlowSchedule {
                mode: schedule.parse::<FlowMode>()?,
                steps,
                neighborhood: neighborhood.parse::<Neighborhood>()?,
            };
            schedule.validate()?;
            let store = if zero_mlp {
                ParameterStore::zero_mlp(channels, schedule, seed)
            } else {
                ParameterStore::random(channels, schedule, seed)
            };
            store.save(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
