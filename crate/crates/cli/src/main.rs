use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdn_core::{FeatureKind, RunConfig};

mod commands;

/// Toolchain for plan-recognition-driven attention over short video batches.
///
/// Settings come from the built-in defaults, then `--config`, then flags
/// (a flag wins). Logging is controlled by `PDN_LOG=error|warn|info|debug`.
#[derive(Debug, Parser)]
#[command(name = "pdn", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// JSON run configuration; unknown keys are rejected
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the run
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Cap on worker threads
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Dataset directory
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub keys: ConfigKeys,
}

/// Flags mirroring run-configuration keys.
#[derive(Debug, Default, Args)]
pub struct ConfigKeys {
    /// Frame and map side
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Number of synthetic scenes
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Motion feature: hod, hog or hod+hog
    #[arg(long, global = true)]
    pub feature: Option<FeatureKind>,
    /// Size of the primitive library
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    /// Nearest primitives kept per observation
    #[arg(long, global = true)]
    pub distribution_size: Option<usize>,
    /// Recognized steps per plan
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Plan-affinity training epochs
    #[arg(long, global = true)]
    pub plan_epochs: Option<usize>,
    /// Weight of plan-driven attention
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Pixel-dynamics fitting epochs
    #[arg(long, global = true)]
    pub dynamics_epochs: Option<usize>,
    /// Event-classifier epochs
    #[arg(long, global = true)]
    pub er_epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene dataset
    Synth,
    /// Extract per-glimpse motion features of a dataset as JSON lines
    Features,
    /// Cluster motion features into a primitive library
    AmpFit {
        /// Features written by `features` (computed from --data if absent)
        #[arg(long, value_name = "FILE")]
        features: Option<PathBuf>,
    },
    /// Train plan affinities on observed primitive traces
    PlanTrain {
        /// Directory holding amp.json/amp.pdnt
        #[arg(long, value_name = "DIR")]
        amp: PathBuf,
        /// Features written by `features` (computed from --data if absent)
        #[arg(long, value_name = "FILE")]
        features: Option<PathBuf>,
    },
    /// Recognize plans for an index trace or for every glimpse of a sample
    PlanRecognize {
        /// Directory holding affinity.json and its tensors
        #[arg(long, value_name = "DIR")]
        affinity: PathBuf,
        /// Primitive library directory (needed with --sample)
        #[arg(long, value_name = "DIR")]
        amp: Option<PathBuf>,
        /// Comma-separated observed primitive indices
        #[arg(long, value_delimiter = ',', value_name = "I,J,..")]
        indices: Option<Vec<usize>>,
        /// Sample index in --data
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Compute the plan-driven attention map of one sample
    Prda {
        /// Trained model directory (from `train`)
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        /// Sample index in --data
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Train the full event recognizer
    Train,
    /// Evaluate a trained recognizer on the held-out split
    Eval {
        /// Trained model directory (from `train`)
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        /// Evaluate every sample instead of the held-out split
        #[arg(long)]
        all: bool,
    },
    /// Export the attention maps of one sample as PGM and PDNT
    ExportMap {
        /// Trained model directory (from `train`)
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        /// Sample index in --data
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
}

/// A problem with how the tool was invoked, as opposed to its inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl Global {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let k = &self.keys;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = k.$f { cfg.$f = v; })* };
        }
        set!(
            n,
            samples,
            feature,
            clusters,
            distribution_size,
            horizon,
            plan_epochs,
            lambda,
            dynamics_epochs,
            er_epochs
        );
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PDN_LOG", "warn")).init();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
