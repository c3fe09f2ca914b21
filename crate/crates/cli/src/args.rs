//! Command-line flags. Every flag mirrors a [`RunConfig`] field and
//! overrides the value loaded from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dqpe::optimizer::StateSpec;

use crate::config::{Builtin, Command, EstimatorKind, Method, MoleculeSource, RunConfig, Study};
use crate::error::{config, Result};

#[derive(Debug, Parser)]
#[command(name = "dqpe", version, about = "Differentiable quantum phase estimation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Write the parent distribution (and sampled counts) as CSV.
    Distribution(RunArgs),
    /// Estimate the phase and energy.
    Estimate(RunArgs),
    /// Sampling and query cost report.
    Stats(RunArgs),
    /// Smooth, finite-difference and Hellmann–Feynman gradients.
    Grad(RunArgs),
    /// Geometry optimization trace.
    Optimize(RunArgs),
    /// Regenerate one of the named studies as CSV/JSON.
    Reproduce {
        #[arg(value_enum)]
        study: Study,
        #[command(flatten)]
        args: RunArgs,
    },
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, group = "source")]
    pub builtin: Option<Builtin>,
    #[arg(long, group = "source")]
    pub xyz: Option<PathBuf>,
    #[arg(long, group = "source")]
    pub fcidump: Option<PathBuf>,
    /// Comma-separated synthetic eigenphases in [0, 1).
    #[arg(long, group = "source", value_delimiter = ',')]
    pub phases: Option<Vec<f64>>,
    /// Populations for --phases (default: uniform).
    #[arg(long, value_delimiter = ',', requires = "phases")]
    pub weights: Option<Vec<f64>>,
    /// Input determinant as an occupation bitstring, qubit 0 first.
    #[arg(long)]
    pub determinant: Option<String>,
    #[arg(short, long)]
    pub t: Option<u32>,
    /// Shots per distribution; 0 is the exact distribution.
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub steepness: Option<f64>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub window_strings: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub map_padding: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Gradient-descent step, Å²/hartree.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub gradient_tol: Option<f64>,
    #[arg(long)]
    pub stencil_m: Option<usize>,
    #[arg(long)]
    pub stencil_step: Option<f64>,
    /// Target precision for `stats`, phase units.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub gates: Option<u64>,
    #[arg(long)]
    pub parameters: Option<u64>,
    #[arg(long)]
    pub overlap: Option<f64>,
}

impl RunArgs {
    /// Loads `--config` (or defaults) and applies every given flag.
    pub fn resolve(&self, command: Command, study: Option<Study>) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.config.is_some() && c.command != command {
            return config(format!("config file is for {:?}, not {command:?}", c.command));
        }
        c.command = command;
        if study.is_some() {
            c.study = study;
        }
        if let Some(b) = self.builtin {
            c.molecule = MoleculeSource::Builtin { name: b };
        }
        if let Some(p) = &self.xyz {
            c.molecule = MoleculeSource::Xyz { path: p.clone() };
        }
        if let Some(p) = &self.fcidump {
            c.molecule = MoleculeSource::Fcidump { path: p.clone() };
        }
        if let Some(phases) = &self.phases {
            let weights = self
                .weights
                .clone()
                .unwrap_or_else(|| vec![1.0 / phases.len() as f64; phases.len()]);
            c.molecule = MoleculeSource::Phases {
                phases: phases.clone(),
                weights,
            };
        }
        if let Some(bits) = &self.determinant {
            c.state = Some(StateSpec::determinant(bits));
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        set!(
            t => t,
            shots => shots,
            estimator => estimator,
            seed => seed,
            output => output,
            map_padding => map_padding,
            step => optimizer.step,
            max_iterations => optimizer.max_iterations,
            gradient_tol => optimizer.gradient_tol,
            stencil_m => stencil.m,
            stencil_step => stencil.step,
            epsilon => stats.epsilon,
            gates => stats.gates,
            parameters => stats.parameters,
            overlap => stats.overlap,
        );
        if self.method.is_some() {
            c.optimizer.method = self.method;
        }
        if self.temperature.is_some() {
            c.gce.temperature = self.temperature;
        }
        if self.steepness.is_some() {
            c.gce.steepness = self.steepness;
        }
        if self.half_width.is_some() {
            c.gce.half_width = self.half_width;
        }
        if self.window_strings.is_some() {
            c.gce.window_strings = self.window_strings;
        }
        c.validate()?;
        Ok(c)
    }
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig> {
        match self.command {
            Sub::Distribution(a) => a.resolve(Command::Distribution, None),
            Sub::Estimate(a) => a.resolve(Command::Estimate, None),
            Sub::Stats(a) => a.resolve(Command::Stats, None),
            Sub::Grad(a) => a.resolve(Command::Grad, None),
            Sub::Optimize(a) => a.resolve(Command::Optimize, None),
            Sub::Reproduce { study, args } => args.resolve(Command::Reproduce, Some(study)),
        }
    }
}
