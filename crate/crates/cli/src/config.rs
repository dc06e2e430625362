//! Experiment configuration: an optional TOML file overlaid with flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use infoact::verification::SuiteConfig;
use serde::{Deserialize, Serialize};

use crate::exit::Failure;

/// Environment variable that overrides the base output directory.
pub const OUT_DIR_ENV: &str = "INFOACT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Debug, Parser)]
#[command(
    name = "infoact",
    version,
    about = "Action models, arithmetic coding and internal bit-level agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub knobs: Knobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit an n-gram action model on a corpus.
    Train,
    /// Encode and decode a batch of action strings.
    Roundtrip,
    /// Run the internal agent-environment loop and write a trace.
    Run,
    /// Run the verification suite.
    Verify,
    /// Run the two-task mixture demo.
    Multitask,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Roundtrip => "roundtrip",
            Command::Run => "run",
            Command::Verify => "verify",
            Command::Multitask => "multitask",
        }
    }
}

/// Flags. Every flag overrides the same key of the config file.
#[derive(Debug, Default, Args)]
pub struct Knobs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base output directory. Overrides the environment variable and the config.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub mdp: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Whitespace-separated symbols including `<T>`, for training without an MDP file.
    #[arg(long, global = true)]
    pub alphabet: Option<String>,
    #[arg(long, global = true)]
    pub max_action_length: Option<usize>,
    /// External actions per episode.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true)]
    pub order: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Restrict the action model to the MDP's legal actions.
    #[arg(long, global = true, overrides_with = "no_mask")]
    pub mask: bool,
    #[arg(long, global = true)]
    pub no_mask: bool,
    /// Internal policy: `uniform`, `hashed` or `biased:<p>`.
    #[arg(long, global = true)]
    pub policy: Option<String>,
    /// External state the roundtrip batch is coded in.
    #[arg(long, global = true)]
    pub state: Option<usize>,
    /// External actions per sampled roundtrip string, or per multitask task.
    #[arg(long, global = true)]
    pub actions: Option<usize>,
    /// Comma-separated verification checks; an empty list runs nothing.
    #[arg(long, global = true)]
    pub checks: Option<String>,
    /// Comma-separated checks to run with their mutation switched on.
    #[arg(long, global = true)]
    pub mutate: Option<String>,
    /// Random instances for the exact checks.
    #[arg(long, global = true)]
    pub instances: Option<usize>,
}

/// The resolved configuration of one invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model: Option<PathBuf>,
    pub mdp: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub alphabet: Option<Vec<String>>,
    pub max_action_length: Option<usize>,
    pub horizon: Option<usize>,
    pub samples: Option<usize>,
    pub episodes: Option<usize>,
    pub order: Option<usize>,
    pub alpha: Option<f64>,
    pub tolerance: Option<f64>,
    pub mask: Option<bool>,
    pub policy: Option<String>,
    pub state: Option<usize>,
    pub actions: Option<usize>,
    pub verify: Option<SuiteConfig>,
}

fn split_list(text: &str) -> Vec<String> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl ExperimentConfig {
    /// Reads the config file, if any, and applies the flags over it. The
    /// output directory falls back to the environment, then to `runs`.
    pub fn resolve(knobs: &Knobs, env_out_dir: Option<PathBuf>) -> Result<Self, Failure> {
        let mut config = match &knobs.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))
                    .map_err(Failure::config)?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))
                    .map_err(Failure::config)?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! overlay {
            ($($field:ident),*) => {$(
                if let Some(v) = &knobs.$field {
                    config.$field = Some(v.clone());
                }
            )*};
        }
        overlay!(
            seed,
            model,
            mdp,
            corpus,
            max_action_length,
            horizon,
            samples,
            episodes,
            order,
            alpha,
            tolerance,
            policy,
            state,
            actions
        );
        if let Some(a) = &knobs.alphabet {
            config.alphabet = Some(a.split_whitespace().map(String::from).collect());
        }
        if knobs.mask {
            config.mask = Some(true);
        }
        if knobs.no_mask {
            config.mask = Some(false);
        }
        config.out_dir = knobs
            .out_dir
            .clone()
            .or(env_out_dir)
            .or(config.out_dir)
            .or_else(|| Some(PathBuf::from(DEFAULT_OUT_DIR)));

        // Top-level knobs, from the file or from flags, apply to the suite too.
        let mut verify = config.verify.take().unwrap_or_default();
        if let Some(seed) = config.seed {
            verify.seed = seed;
        }
        if let Some(c) = &knobs.checks {
            verify.checks = split_list(c);
        }
        if let Some(m) = &knobs.mutate {
            verify.mutate = split_list(m);
        }
        if let Some(n) = config.samples {
            verify.samples = n;
        }
        if let Some(n) = config.episodes {
            verify.episodes = n;
        }
        if let Some(t) = config.tolerance {
            verify.tolerance = t;
        }
        if let Some(m) = config.horizon {
            verify.horizon = m;
        }
        if let Some(n) = knobs.instances {
            verify.instances = n;
        }
        config.verify = Some(verify);
        Ok(config)
    }

    /// Checks that every path the command reads exists and that stochastic
    /// commands have a seed.
    pub fn validate(&self, command: Command) -> Result<(), Failure> {
        let check = |label: &str, path: &Option<PathBuf>, required: bool| -> anyhow::Result<()> {
            match path {
                Some(p) if !p.is_file() => bail!("{label} file {} does not exist", p.display()),
                None if required => bail!("--{label} is required for `{}`", command.name()),
                _ => Ok(()),
            }
        };
        let stochastic = match command {
            Command::Train => false,
            Command::Roundtrip => self.corpus.is_none(),
            Command::Run | Command::Verify | Command::Multitask => true,
        };
        (|| {
            check("model", &self.model, command == Command::Roundtrip)?;
            check("mdp", &self.mdp, command == Command::Run)?;
            check("corpus", &self.corpus, command == Command::Train)?;
            if stochastic && self.seed.is_none() {
                bail!("`{}` is stochastic and needs --seed", command.name());
            }
            if let Some(a) = self.alpha {
                if !(a > 0.0 && a.is_finite()) {
                    bail!("alpha must be positive, got {a}");
                }
            }
            if command == Command::Train && self.alphabet.is_none() && self.mdp.is_none() {
                bail!("`train` needs --alphabet or --mdp to know the symbols");
            }
            Ok(())
        })()
        .map_err(Failure::config)
    }

    pub fn out_base(&self) -> &Path {
        self.out_dir.as_deref().unwrap_or(Path::new(DEFAULT_OUT_DIR))
    }
}
