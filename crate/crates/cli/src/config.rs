//! Run configuration: JSON on disk, overridable from the command line,
//! validated before anything executes.

use std::path::{Path, PathBuf};

use dqpe::estimator::{Estimator, GceConfig};
use dqpe::optimizer::{OptimizerOptions, StateSpec, DEFAULT_MAP_PADDING};
use dqpe::qpe::{ReadoutGrid, MAX_READOUT_QUBITS};
use serde::{Deserialize, Serialize};

use crate::error::{config, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Distribution,
    Estimate,
    Stats,
    Grad,
    Optimize,
    Reproduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Study {
    #[serde(rename = "fig4-accuracy")]
    #[value(name = "fig4-accuracy")]
    Fig4Accuracy,
    #[serde(rename = "fig5-cost")]
    #[value(name = "fig5-cost")]
    Fig5Cost,
    #[serde(rename = "fig8-fd")]
    #[value(name = "fig8-fd")]
    Fig8Fd,
    #[serde(rename = "fig9-h3-gs")]
    #[value(name = "fig9-h3-gs")]
    Fig9H3Gs,
    #[serde(rename = "fig10-h3-triplet")]
    #[value(name = "fig10-h3-triplet")]
    Fig10H3Triplet,
    #[serde(rename = "appB-noise")]
    #[value(name = "appB-noise")]
    AppBNoise,
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Fig4Accuracy => "fig4-accuracy",
            Study::Fig5Cost => "fig5-cost",
            Study::Fig8Fd => "fig8-fd",
            Study::Fig9H3Gs => "fig9-h3-gs",
            Study::Fig10H3Triplet => "fig10-h3-triplet",
            Study::AppBNoise => "appB-noise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Gce,
    Majority,
    Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    /// H₂ at 0.74 Å.
    H2,
    /// Distorted isosceles H₃⁺ (ground-state start).
    H3pGround,
    /// Linear asymmetric H₃⁺ (triplet start).
    H3pTriplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MoleculeSource {
    Builtin {
        name: Builtin,
    },
    Xyz {
        path: PathBuf,
    },
    Fcidump {
        path: PathBuf,
    },
    /// Synthetic eigenphases with populations, no Hamiltonian.
    Phases {
        phases: Vec<f64>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GradientDescent,
    Bfgs,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GceSettings {
    pub temperature: Option<f64>,
    pub steepness: Option<f64>,
    pub half_width: Option<f64>,
    /// Window as a bitstring count `|𝒢|`; overrides `half_width`.
    pub window_strings: Option<f64>,
}

impl GceSettings {
    pub fn resolve(&self, grid: ReadoutGrid) -> Result<GceConfig> {
        let d = GceConfig::default_for(grid);
        let half_width = match self.window_strings {
            Some(g) => g / grid.size() as f64,
            None => self.half_width.unwrap_or(d.half_width),
        };
        Ok(GceConfig::new(
            self.temperature.unwrap_or(d.temperature),
            self.steepness.unwrap_or(d.steepness),
            half_width,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Unset: gradient descent, except BFGS for the triplet study.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    /// Gradient-descent step, Å²/hartree.
    pub step: f64,
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub max_step: f64,
    pub project_rigid_body: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let o = OptimizerOptions::default();
        Self {
            method: None,
            step: 0.01,
            max_iterations: o.max_iterations,
            gradient_tol: o.gradient_tol,
            max_step: o.max_step,
            project_rigid_body: o.project_rigid_body,
        }
    }
}

impl OptimizerSettings {
    pub fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_iterations: self.max_iterations,
            gradient_tol: self.gradient_tol,
            project_rigid_body: self.project_rigid_body,
            max_step: self.max_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StencilSettings {
    /// Stencil half-width; the formula has degree 2m.
    pub m: usize,
    /// Å (molecules) or parameter units.
    pub step: f64,
}

impl Default for StencilSettings {
    fn default() -> Self {
        Self { m: 1, step: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSettings {
    /// Target precision, phase units.
    pub epsilon: f64,
    pub gates: u64,
    pub parameters: u64,
    pub overlap: f64,
    /// Offset of the true phase from the window center, phase units.
    pub mismatch: f64,
}

impl Default for StatsSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            gates: 1,
            parameters: 1,
            overlap: 1.0,
            mismatch: 0.0,
        }
    }
}

/// Parameters of the `reproduce` studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySettings {
    pub accuracy_t: Vec<u32>,
    pub accuracy_phases: usize,
    pub windows: Vec<f64>,
    pub cost_t: Vec<u32>,
    pub fd_steps: Vec<f64>,
    pub noise_t: Vec<u32>,
    pub noise_shots: Vec<u64>,
    pub noise_seeds: u64,
    /// Energy precision (hartree) defining the prescribed shot count.
    pub noise_epsilon: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            accuracy_t: (8..=14).collect(),
            accuracy_phases: 100,
            windows: vec![8.0, 16.0, 32.0],
            cost_t: (8..=16).collect(),
            fd_steps: vec![1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.1],
            noise_t: vec![11, 13],
            noise_shots: vec![1_000, 10_000, 100_000],
            noise_seeds: 3,
            noise_epsilon: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    pub molecule: MoleculeSource,
    /// Input state; defaults to the closed-shell determinant, or the
    /// triplet determinant for the triplet builtin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSpec>,
    pub t: u32,
    /// 0 selects the exact distribution.
    pub shots: u64,
    pub estimator: EstimatorKind,
    pub gce: GceSettings,
    pub seed: u64,
    pub output: PathBuf,
    /// Hartree added on each side of the initial spectrum.
    pub map_padding: f64,
    pub optimizer: OptimizerSettings,
    pub stencil: StencilSettings,
    pub stats: StatsSettings,
    pub studies: StudySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Estimate,
            study: None,
            molecule: MoleculeSource::Builtin {
                name: Builtin::H3pGround,
            },
            state: None,
            t: 13,
            shots: 0,
            estimator: EstimatorKind::Gce,
            gce: GceSettings::default(),
            seed: 0,
            output: PathBuf::from("dqpe-out"),
            map_padding: DEFAULT_MAP_PADDING,
            optimizer: OptimizerSettings::default(),
            stencil: StencilSettings::default(),
            stats: StatsSettings::default(),
            studies: StudySettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| CliError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn grid(&self) -> Result<ReadoutGrid> {
        Ok(ReadoutGrid::new(self.t)?)
    }

    pub fn estimator(&self) -> Result<Estimator> {
        Ok(match self.estimator {
            EstimatorKind::Gce => Estimator::Gce(self.gce.resolve(self.grid()?)?),
            EstimatorKind::Majority => Estimator::Majority,
            EstimatorKind::Expectation => Estimator::Expectation,
        })
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.t > MAX_READOUT_QUBITS {
            return config(format!("t must lie in 1..={MAX_READOUT_QUBITS}, got {}", self.t));
        }
        self.estimator()?;
        if !(self.map_padding >= 0.0) || !self.map_padding.is_finite() {
            return config(format!(
                "map_padding must be finite and non-negative, got {}",
                self.map_padding
            ));
        }
        let hamiltonian_free = matches!(self.molecule, MoleculeSource::Phases { .. });
        let geometry_free = hamiltonian_free || matches!(self.molecule, MoleculeSource::Fcidump { .. });
        match self.command {
            Command::Grad | Command::Optimize if geometry_free => {
                return config(format!("{:?} needs a geometry (builtin or xyz)", self.command));
            }
            Command::Optimize if self.estimator != EstimatorKind::Gce => {
                return config("optimization needs the differentiable gce estimator");
            }
            Command::Reproduce if self.study.is_none() => return config("reproduce needs a study name"),
            _ => {}
        }
        if hamiltonian_free && self.state.is_some() {
            return config("a state cannot be given with synthetic phases");
        }
        if let MoleculeSource::Phases { phases, weights } = &self.molecule {
            if phases.is_empty() || phases.len() != weights.len() {
                return config("phases and weights must be non-empty and of equal length");
            }
        }
        let o = &self.optimizer;
        if !(o.step > 0.0) || !(o.gradient_tol > 0.0) || o.max_iterations == 0 || !(o.max_step > 0.0) {
            return config("optimizer step, gradient_tol, max_iterations and max_step must be positive");
        }
        if self.stencil.m == 0 || !(self.stencil.step > 0.0) {
            return config("stencil needs m >= 1 and a positive step");
        }
        let s = &self.studies;
        if s.noise_seeds == 0 || s.accuracy_phases == 0 {
            return config("study sample counts must be positive");
        }
        if s.windows.iter().any(|w| !(*w > 0.0)) || s.fd_steps.iter().any(|h| !(*h > 0.0)) {
            return config("study windows and steps must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text, Path::new("x")).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = RunConfig::from_json(
            r#"{"command":"reproduce","study":"appB-noise","t":11,"gce":{"window_strings":16}}"#,
            Path::new("x"),
        )
        .unwrap();
        assert_eq!(c.study, Some(Study::AppBNoise));
        assert_eq!(c.t, 11);
        let Estimator::Gce(g) = c.estimator().unwrap() else {
            panic!()
        };
        assert_eq!(g.half_width, 16.0 / 2048.0);
        assert_eq!(c.shots, 0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_json(r#"{"bogus":1}"#, Path::new("x")).is_err());
        let bad = [
            RunConfig {
                t: 0,
                ..RunConfig::default()
            },
            RunConfig {
                t: 40,
                ..RunConfig::default()
            },
            RunConfig {
                command: Command::Reproduce,
                ..RunConfig::default()
            },
            RunConfig {
                command: Command::Optimize,
                estimator: EstimatorKind::Majority,
                ..RunConfig::default()
            },
            RunConfig {
                command: Command::Grad,
                molecule: MoleculeSource::Phases {
                    phases: vec![0.1],
                    weights: vec![1.0],
                },
                ..RunConfig::default()
            },
            RunConfig {
                gce: GceSettings {
                    steepness: Some(1e6),
                    ..GceSettings::default()
                },
                ..RunConfig::default()
            },
        ];
        for c in bad {
            let e = c.validate().unwrap_err();
            assert_eq!(e.exit_code(), crate::error::EXIT_CONFIG, "{e}");
        }
    }
}
