//! Executes a validated [`RunConfig`] and writes its artifact directory.

use std::path::{Path, PathBuf};

use dqpe::chem::{fcidump_read, jordan_wigner, reference_bits, Geometry};
use dqpe::estimator::{circular_distance, expectation_moment, gce_moment, Estimator, GceConfig};
use dqpe::gradients::{
    fd_stencil, gradient_bias_bound, hellmann_feynman_oracle, GradientMethod, GradientReport, Sampling,
};
use dqpe::optimizer::{
    bfgs, excited_state_target, gradient_descent, h3_ground_start, h3_triplet_start, run_phase_map, MolecularProblem,
    OptimizationTrace, PipelineObjective, StateSpec,
};
use dqpe::qpe::{mapped_phases, spectral_distribution, ParentDistribution, PhaseMap, ReadoutGrid};
use dqpe::sampling::{frequencies, sample, RNG_NAME};
use dqpe::spectral::{eigendecompose, overlaps, FnHamiltonian, HermitianOperator, ParametrizedHamiltonian};
use dqpe::statistics::{CostReport, MomentAnalysis};
use serde_json::{json, Value};

use crate::config::{Builtin, Command, Method, MoleculeSource, RunConfig};
use crate::error::{config, CliError, Result};
use crate::studies;

/// Collects the files a run writes, relative to its output directory.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        self.write(name, text)
    }

    /// Writes via a core CSV writer.
    pub fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> dqpe::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }

    pub fn trace(&mut self, prefix: &str, trace: &OptimizationTrace, template: &Geometry) -> Result<()> {
        self.csv(&format!("{prefix}.csv"), |b| trace.write_csv(b))?;
        self.json(
            &format!("{prefix}.json"),
            &serde_json::to_value(trace).expect("trace serializes"),
        )?;
        self.csv(&format!("{prefix}.xyz"), |b| trace.write_xyz(template, b))
    }
}

/// Runs `config`, writing `config.json`, `run.json` and the command's
/// outputs under `config.output`. Returns the summary printed on stdout.
pub fn run(config: &RunConfig) -> Result<Value> {
    config.validate()?;
    let mut out = Artifacts::create(&config.output)?;
    out.json("config.json", &config.to_json())?;
    let summary = match config.command {
        Command::Distribution => distribution(config, &mut out)?,
        Command::Estimate => estimate(config, &mut out)?,
        Command::Stats => stats(config, &mut out)?,
        Command::Grad => grad(config, &mut out)?,
        Command::Optimize => optimize(config, &mut out)?,
        Command::Reproduce => studies::reproduce(config, &mut out)?,
    };
    let mut files = out.files.clone();
    files.push("run.json".into());
    let manifest = json!({
        "dqpe_version": env!("CARGO_PKG_VERSION"),
        "command": config.command,
        "study": config.study.map(|s| s.name()),
        "seed": config.seed,
        "rng": RNG_NAME,
        "files": files,
    });
    out.json("run.json", &manifest)?;
    Ok(json!({
        "status": "ok",
        "command": config.command,
        "output": config.output,
        "summary": summary,
    }))
}

pub fn builtin_geometry(b: Builtin) -> Geometry {
    match b {
        Builtin::H2 => Geometry::new(&["H", "H"], &[[0.0; 3], [0.74, 0.0, 0.0]], 0, 1).expect("valid H2"),
        Builtin::H3pGround => h3_ground_start(),
        Builtin::H3pTriplet => h3_triplet_start(),
    }
}

pub fn load_geometry(source: &MoleculeSource) -> Result<Geometry> {
    match source {
        MoleculeSource::Builtin { name } => Ok(builtin_geometry(*name)),
        MoleculeSource::Xyz { path } => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(Geometry::from_xyz(&text)?)
        }
        _ => config("this source has no geometry"),
    }
}

/// The configured state, or the lowest determinant of the molecule's spin.
pub fn default_state(config: &RunConfig, n_qubits: usize, n_electrons: usize, multiplicity: u32) -> Result<StateSpec> {
    match &config.state {
        Some(s) => Ok(s.clone()),
        None => Ok(StateSpec::determinant(&reference_bits(
            n_qubits,
            n_electrons,
            multiplicity,
        )?)),
    }
}

pub fn molecular_problem(config: &RunConfig) -> Result<MolecularProblem> {
    let geometry = load_geometry(&config.molecule)?;
    let spec = default_state(
        config,
        2 * geometry.len(),
        geometry.n_electrons(),
        geometry.multiplicity(),
    )?;
    Ok(MolecularProblem::new(geometry, &spec, config.map_padding)?)
}

/// What the readout sees at the starting point.
struct Spectrum {
    phases: Vec<f64>,
    weights: Vec<f64>,
    /// `None` for synthetic phases: energies are then not defined.
    map: Option<PhaseMap>,
    offset: f64,
    dominant: usize,
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    fn dominant_phase(&self) -> f64 {
        self.phases[self.dominant]
    }

    fn energy(&self, phase: f64) -> Option<f64> {
        self.map.map(|m| m.energy_of_phase(phase) + self.offset)
    }

    fn exact_energy(&self) -> Option<f64> {
        self.map.map(|_| self.eigenvalues[self.dominant] + self.offset)
    }
}

fn from_operator(
    op: &HermitianOperator,
    state: &dqpe::spectral::StateVector,
    map: PhaseMap,
    offset: f64,
) -> Result<Spectrum> {
    let eig = eigendecompose(op)?;
    let weights = overlaps(state, &eig)?;
    let phases = mapped_phases(&eig, &weights, &map)?;
    let dominant = argmax(&weights);
    Ok(Spectrum {
        phases,
        weights,
        map: Some(map),
        offset,
        dominant,
        eigenvalues: eig.eigenvalues,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &w)| if w > b.1 { (i, w) } else { b })
        .0
}

fn spectrum(config: &RunConfig) -> Result<Spectrum> {
    match &config.molecule {
        MoleculeSource::Phases { phases, weights } => Ok(Spectrum {
            phases: phases.clone(),
            weights: weights.clone(),
            map: None,
            offset: 0.0,
            dominant: argmax(weights),
            eigenvalues: Vec::new(),
        }),
        MoleculeSource::Fcidump { path } => {
            let sq = fcidump_read(path)?;
            let qubit = jordan_wigner(&sq)?;
            let n = qubit.n_qubits;
            let spec = default_state(config, n, sq.n_electrons, (sq.ms2.unsigned_abs()) + 1)?;
            let op = qubit.operator.clone();
            let h = FnHamiltonian::new(op.dim(), 0, move |_| Ok(op.clone()));
            let target = excited_state_target(&spec, &h, &[], n)?;
            let map = run_phase_map(&target.eigenvalues, config.map_padding)?;
            let restricted = target.restriction.restrict_operator(&qubit.operator)?;
            from_operator(&restricted, &target.state, map, qubit.offset)
        }
        _ => {
            let p = molecular_problem(config)?;
            let op = p.hamiltonian.evaluate(&p.x0)?;
            from_operator(&op, &p.target.state, p.map, p.hamiltonian.offset(&p.x0))
        }
    }
}

fn sampling(config: &RunConfig) -> Option<Sampling> {
    (config.shots > 0).then_some(Sampling {
        shots: config.shots,
        seed: config.seed,
    })
}

/// Exact distribution, plus the sampled one when shots are requested.
fn readout(config: &RunConfig, s: &Spectrum, out: &mut Artifacts) -> Result<(ParentDistribution, ParentDistribution)> {
    let grid = config.grid()?;
    let exact = spectral_distribution(&s.phases, &s.weights, grid)?;
    out.write("distribution.csv", {
        let mut b = Vec::new();
        exact.write_csv(&mut b).map_err(dqpe::Error::from)?;
        b
    })?;
    if config.shots == 0 {
        return Ok((exact.clone(), exact));
    }
    let emp = sample(&exact, config.shots, config.seed)?;
    let mut b = Vec::new();
    emp.write_csv(&mut b).map_err(dqpe::Error::from)?;
    out.write("counts.csv", b)?;
    out.json("counts.json", &emp.sidecar())?;
    Ok((exact, frequencies(&emp)))
}

fn distribution(config: &RunConfig, out: &mut Artifacts) -> Result<Value> {
    let s = spectrum(config)?;
    let (exact, _) = readout(config, &s, out)?;
    let (peak, p) = exact
        .probabilities()
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (j, p)| if p > b.1 { (j, p) } else { b });
    Ok(json!({
        "t": config.t,
        "shots": config.shots,
        "peak_index": peak,
        "peak_probability": p,
        "dominant_phase": s.dominant_phase(),
    }))
}

fn estimate_record(estimator: &Estimator, dist: &ParentDistribution) -> Result<Value> {
    Ok(match estimator {
        Estimator::Gce(c) => gce_moment(dist, c)?.record("gce"),
        Estimator::Expectation => expectation_moment(dist)?.record("expectation"),
        Estimator::Majority => json!({"mu": estimator.phase(dist)?, "estimator_name": "majority"}),
    })
}

fn estimate(config: &RunConfig, out: &mut Artifacts) -> Result<Value> {
    let s = spectrum(config)?;
    let (_, observed) = readout(config, &s, out)?;
    let estimator = config.estimator()?;
    let mut record = estimate_record(&estimator, &observed)?;
    let mu = record["mu"].as_f64().expect("mu is numeric");
    let target = s.dominant_phase();
    let extra = json!({
        "t": config.t,
        "shots": config.shots,
        "seed": config.seed,
        "target_phase": target,
        "phase_error": circular_distance(mu, target),
        "energy": s.energy(mu),
        "exact_energy": s.exact_energy(),
        "energy_error": s.energy(mu).zip(s.exact_energy()).map(|(a, b)| a - b),
    });
    merge(&mut record, extra);
    out.json("estimate.json", &record)?;
    Ok(record)
}

fn merge(a: &mut Value, b: Value) {
    if let (Value::Object(a), Value::Object(b)) = (a, b) {
        a.extend(b);
    }
}

fn gce_config(config: &RunConfig, grid: ReadoutGrid) -> Result<GceConfig> {
    config.gce.resolve(grid)
}

fn stats(config: &RunConfig, out: &mut Artifacts) -> Result<Value> {
    let grid = config.grid()?;
    let h = gce_config(config, grid)?.half_width;
    let st = &config.stats;
    let analysis = MomentAnalysis::new(config.t, st.mismatch, h, st.overlap)?;
    let stencil = fd_stencil(config.stencil.m, config.stencil.step)?;
    let report = CostReport::compute(
        config.t,
        st.epsilon,
        st.gates,
        st.parameters,
        stencil.one_norm,
        analysis.magnitude,
    )?;
    let value = json!({
        "moment": analysis,
        "cost": report,
        "stencil": stencil,
    });
    out.json("stats.json", &value)?;
    Ok(json!({
        "magnitude": report.magnitude,
        "variance_mu": report.variance_mu,
        "n_samples_estimate": report.n_samples_estimate,
        "n_shots_gradient": report.n_shots_gradient,
        "breakdown": report.breakdown,
    }))
}

fn grad(config: &RunConfig, out: &mut Artifacts) -> Result<Value> {
    let p = molecular_problem(config)?;
    let grid = config.grid()?;
    let gce = gce_config(config, grid)?;
    let x = &p.x0;
    let smooth_pipe = p.pipeline(grid, Estimator::Gce(gce)).with_sampling(sampling(config));
    let smooth = smooth_pipe.gradient(x)?;
    let fd_pipe = p.pipeline(grid, config.estimator()?).with_sampling(sampling(config));
    let stencil = fd_stencil(config.stencil.m, config.stencil.step)?;
    let fd = fd_pipe.fd_gradient(x, &stencil)?;
    let hf = hellmann_feynman_oracle(&p.hamiltonian, x, p.target.dominant_index)?;
    let hf = GradientReport::new(
        GradientMethod::HellmannFeynman,
        hf,
        Some(p.target.eigenvalues[p.target.dominant_index] + p.hamiltonian.offset(x)),
    );
    let mut smooth_report = GradientReport::new(GradientMethod::Smooth, smooth.gradient, Some(smooth.energy));
    let mut fd_report = GradientReport::new(GradientMethod::Fd, fd, Some(fd_pipe.energy(x)?));
    smooth_report.validate_against(&fd_report.clone())?;
    smooth_report.validate_against(&hf)?;
    fd_report.validate_against(&hf)?;
    let bound = gradient_bias_bound(
        &p.hamiltonian,
        x,
        &p.target.state,
        &p.map,
        grid,
        &gce,
        p.target.dominant_index,
    )?;
    let value = json!({
        "parameters": "cartesian coordinates, angstrom",
        "units": "hartree/angstrom",
        "fd_estimator": config.estimator,
        "stencil": stencil,
        "smooth": smooth_report,
        "fd": fd_report,
        "hellmann_feynman": hf,
        "bias_bound": bound,
        "warnings": p.target.warnings,
    });
    out.json("grad.json", &value)?;
    Ok(json!({
        "smooth_norm": smooth_report.norm,
        "fd_norm": fd_report.norm,
        "hellmann_feynman_norm": hf.norm,
        "smooth_vs_hf": (smooth_report.validation[1].relative),
        "bias_bound": bound.bound,
    }))
}

/// Runs the configured optimizer on `p` with the GCE pipeline.
pub fn optimize_problem(config: &RunConfig, p: &MolecularProblem, method: Method) -> Result<OptimizationTrace> {
    let grid = config.grid()?;
    let estimator = config.estimator()?;
    let pipeline = p.pipeline(grid, estimator).with_sampling(sampling(config));
    let mut objective = PipelineObjective::new(pipeline);
    let options = config.optimizer.options();
    let mut trace = match method {
        Method::GradientDescent => gradient_descent(&mut objective, &p.x0, config.optimizer.step, &options)?,
        Method::Bfgs => bfgs(&mut objective, &p.x0, &options)?,
    };
    trace.metadata.estimator = Some(serde_json::to_value(estimator).expect("estimator serializes"));
    trace.metadata.t = Some(config.t);
    trace.metadata.shots = Some(config.shots);
    trace.metadata.seed = (config.shots > 0).then_some(config.seed);
    trace.warnings.splice(0..0, p.target.warnings.iter().cloned());
    Ok(trace)
}

fn optimize(config: &RunConfig, out: &mut Artifacts) -> Result<Value> {
    let p = molecular_problem(config)?;
    let method = config.optimizer.method.unwrap_or(Method::GradientDescent);
    let trace = optimize_problem(config, &p, method)?;
    out.trace("trace", &trace, p.geometry())?;
    let last = trace.last();
    Ok(json!({
        "method": trace.metadata.method,
        "iterations": last.iteration,
        "converged": trace.converged,
        "termination": trace.termination,
        "energy": last.energy,
        "gradient_norm": last.gradient_norm,
        "bond_lengths": last.bond_lengths,
        "warnings": trace.warnings.len(),
    }))
}
