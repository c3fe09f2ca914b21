//! The named `reproduce` studies. Each returns typed rows (used by the
//! acceptance suite) and writes them as CSV/JSON.

use std::fmt::Write as _;

use dqpe::estimator::{circular_distance, majority_rule, Estimator, GceConfig};
use dqpe::gradients::{fd_gradient, fd_stencil, gradient_bias_bound, hellmann_feynman_oracle, norm, BiasBound};
use dqpe::optimizer::{bfgs, MolecularProblem, OptimizationTrace, OptimizerOptions};
use dqpe::qpe::{spectral_distribution, ReadoutGrid};
use dqpe::spectral::ParametrizedHamiltonian;
use dqpe::statistics::{chebyshev_samples, fwhm, variance_mu_from_magnitude, CostReport, MomentAnalysis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Builtin, Method, MoleculeSource, RunConfig, Study};
use crate::error::Result;
use crate::run::{molecular_problem, optimize_problem, Artifacts};

pub fn reproduce(config: &RunConfig, out: &mut Artifacts) -> Result<Value> {
    match config.study.expect("validated") {
        Study::Fig4Accuracy => {
            let (samples, rows) = accuracy_study(config)?;
            let mut csv = String::from("t,window,phase,gce_error,mr_error\n");
            for s in &samples {
                writeln!(
                    csv,
                    "{},{},{:.17e},{:.6e},{:.6e}",
                    s.t, s.window, s.phase, s.gce_error, s.mr_error
                )
                .unwrap();
            }
            out.write("fig4-accuracy.csv", csv)?;
            let mut csv = String::from("t,window,median_gce_error,median_mr_error,max_mr_error,resolution\n");
            for r in &rows {
                writeln!(
                    csv,
                    "{},{},{:.6e},{:.6e},{:.6e},{:.6e}",
                    r.t, r.window, r.median_gce_error, r.median_mr_error, r.max_mr_error, r.resolution
                )
                .unwrap();
            }
            out.write("fig4-summary.csv", csv)?;
            Ok(json!({ "rows": rows }))
        }
        Study::Fig5Cost => {
            let rows = cost_study(config)?;
            let mut csv =
                String::from("t,window,fwhm,magnitude,variance_mu,n_samples_estimate,n_shots_gradient,total_queries\n");
            for r in &rows {
                writeln!(
                    csv,
                    "{},{:.6e},{:.6e},{:.12},{:.6e},{},{},{}",
                    r.t,
                    r.window,
                    r.fwhm,
                    r.report.magnitude,
                    r.report.variance_mu,
                    r.report.n_samples_estimate,
                    r.report.n_shots_gradient,
                    r.report.total_queries
                )
                .unwrap();
            }
            out.write("fig5-cost.csv", csv)?;
            Ok(json!({ "rows": rows.len() }))
        }
        Study::Fig8Fd => {
            let study = fd_study(config)?;
            let mut csv = String::from("step,mr_fd_norm,mr_fd_error,gce_fd_norm,gce_fd_error,smooth_error\n");
            for r in &study.rows {
                writeln!(
                    csv,
                    "{:e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                    r.step,
                    norm(&r.mr_fd),
                    r.mr_error,
                    norm(&r.gce_fd),
                    r.gce_error,
                    study.smooth_error
                )
                .unwrap();
            }
            out.write("fig8-fd.csv", csv)?;
            let value = serde_json::to_value(&study).expect("study serializes");
            out.json("fig8-fd.json", &value)?;
            Ok(json!({
                "oracle_norm": norm(&study.oracle),
                "smooth_norm": norm(&study.smooth),
                "smooth_error": study.smooth_error,
                "response": study.bound.response,
            }))
        }
        Study::Fig9H3Gs | Study::Fig10H3Triplet => {
            let o = optimization_study(config)?;
            out.trace("trace", &o.trace, o.problem.geometry())?;
            out.trace("oracle", &o.oracle, o.problem.geometry())?;
            let summary = serde_json::to_value(&o.comparison).expect("comparison serializes");
            out.json("summary.json", &summary)?;
            Ok(summary)
        }
        Study::AppBNoise => {
            let (runs, summary) = noise_study(config)?;
            let mut csv = String::from("t,shots,prescribed,seed,iterations,energy_error,bond_error,spread\n");
            for r in &runs {
                writeln!(
                    csv,
                    "{},{},{},{},{},{:.6e},{:.6e},{:.6e}",
                    r.t, r.shots, r.prescribed, r.seed, r.iterations, r.energy_error, r.bond_error, r.spread
                )
                .unwrap();
            }
            out.write("appB-noise.csv", csv)?;
            let mut csv = String::from("t,shots,prescribed,median_energy_error,median_bond_error,median_spread\n");
            for s in &summary {
                writeln!(
                    csv,
                    "{},{},{},{:.6e},{:.6e},{:.6e}",
                    s.t, s.shots, s.prescribed, s.median_energy_error, s.median_bond_error, s.median_spread
                )
                .unwrap();
            }
            out.write("appB-summary.csv", csv)?;
            Ok(json!({ "summary": summary }))
        }
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracySample {
    pub t: u32,
    pub window: f64,
    pub phase: f64,
    pub gce_error: f64,
    pub mr_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyRow {
    pub t: u32,
    /// Window as a bitstring count.
    pub window: f64,
    pub median_gce_error: f64,
    pub median_mr_error: f64,
    pub max_mr_error: f64,
    /// `1/2^{t+1}`.
    pub resolution: f64,
}

/// Phases drawn uniformly, skipping anything within 1e-6 bins of the grid.
pub fn off_grid_phases(t: u32, n: usize, seed: u64) -> Vec<f64> {
    let size = (1u64 << t) as f64;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let phi: f64 = rng.random();
        let frac = (phi * size).fract();
        if frac > 1e-6 && frac < 1.0 - 1e-6 {
            out.push(phi);
        }
    }
    out
}

/// Single-eigenstate errors of the GCE and majority rule per `(t, window)`.
pub fn accuracy_study(config: &RunConfig) -> Result<(Vec<AccuracySample>, Vec<AccuracyRow>)> {
    let s = &config.studies;
    let cells: Vec<(u32, f64)> = s
        .accuracy_t
        .iter()
        .flat_map(|&t| s.windows.iter().map(move |&w| (t, w)))
        .collect();
    let per_cell = cells
        .par_iter()
        .map(|&(t, window)| {
            let grid = ReadoutGrid::new(t)?;
            let mut gce = config.gce;
            gce.window_strings = Some(window);
            gce.half_width = None;
            let gce = Estimator::Gce(gce.resolve(grid)?);
            off_grid_phases(t, s.accuracy_phases, config.seed.wrapping_add(t as u64))
                .into_iter()
                .map(|phase| {
                    let dist = spectral_distribution(&[phase], &[1.0], grid)?;
                    Ok(AccuracySample {
                        t,
                        window,
                        phase,
                        gce_error: circular_distance(gce.phase(&dist)?, phase).abs(),
                        mr_error: circular_distance(majority_rule(&dist), phase).abs(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = per_cell
        .iter()
        .map(|samples| {
            let gce: Vec<f64> = samples.iter().map(|s| s.gce_error).collect();
            let mr: Vec<f64> = samples.iter().map(|s| s.mr_error).collect();
            AccuracyRow {
                t: samples[0].t,
                window: samples[0].window,
                median_gce_error: median(&gce),
                median_mr_error: median(&mr),
                max_mr_error: mr.iter().cloned().fold(0.0, f64::max),
                resolution: 0.5 / (1u64 << samples[0].t) as f64,
            }
        })
        .collect();
    Ok((per_cell.into_iter().flatten().collect(), rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub t: u32,
    /// Half-width in phase units.
    pub window: f64,
    pub fwhm: f64,
    pub report: CostReport,
}

/// Variance and query cost of the window moment versus `t`, for every
/// study window, with the configured precision and overlap.
pub fn cost_study(config: &RunConfig) -> Result<Vec<CostRow>> {
    let st = &config.stats;
    let stencil = fd_stencil(config.stencil.m, config.stencil.step)?;
    let mut rows = Vec::new();
    for &t in &config.studies.cost_t {
        for &w in &config.studies.windows {
            let h = (w / (1u64 << t) as f64).min(0.5);
            let m = MomentAnalysis::new(t, st.mismatch, h, st.overlap)?;
            rows.push(CostRow {
                t,
                window: h,
                fwhm: fwhm(t),
                report: CostReport::compute(t, st.epsilon, st.gates, st.parameters, stencil.one_norm, m.magnitude)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct FdRow {
    pub step: f64,
    pub mr_fd: Vec<f64>,
    pub gce_fd: Vec<f64>,
    /// `‖g − g_oracle‖/‖g_oracle‖`.
    pub mr_error: f64,
    pub gce_error: f64,
}

/// Gradients of the estimated electronic energy: the nuclear term is
/// classical, so it is left out of every column.
#[derive(Debug, Clone, Serialize)]
pub struct FdStudy {
    pub t: u32,
    pub stencil_m: usize,
    pub oracle: Vec<f64>,
    pub smooth: Vec<f64>,
    pub smooth_error: f64,
    pub bound: BiasBound,
    pub rows: Vec<FdRow>,
}

fn relative_error(g: &[f64], reference: &[f64]) -> f64 {
    let d: Vec<f64> = g.iter().zip(reference).map(|(a, b)| a - b).collect();
    norm(&d) / norm(reference)
}

pub fn fd_study(config: &RunConfig) -> Result<FdStudy> {
    let p = molecular_problem(config)?;
    let grid = config.grid()?;
    let gce = config.gce.resolve(grid)?;
    let x = &p.x0;
    let offset = p.hamiltonian.offset_gradient(x);
    let electronic = |g: Vec<f64>| -> Vec<f64> { g.iter().zip(&offset).map(|(a, b)| a - b).collect() };
    let oracle = electronic(hellmann_feynman_oracle(&p.hamiltonian, x, p.target.dominant_index)?);
    let smooth = electronic(p.pipeline(grid, Estimator::Gce(gce)).gradient(x)?.gradient);
    let bound = gradient_bias_bound(
        &p.hamiltonian,
        x,
        &p.target.state,
        &p.map,
        grid,
        &gce,
        p.target.dominant_index,
    )?;
    let fd_with = |estimator: Estimator, step: f64| -> Result<Vec<f64>> {
        let pipe = p.pipeline(grid, estimator);
        let stencil = fd_stencil(config.stencil.m, step)?;
        let energy = |y: &[f64]| Ok(p.map.energy_of_phase(pipe.phase(y)?));
        (0..x.len())
            .into_par_iter()
            .map(|j| Ok(fd_gradient(energy, &stencil, x, j)?))
            .collect()
    };
    let rows = config
        .studies
        .fd_steps
        .iter()
        .map(|&step| {
            let mr_fd = fd_with(Estimator::Majority, step)?;
            let gce_fd = fd_with(Estimator::Gce(gce), step)?;
            Ok(FdRow {
                step,
                mr_error: relative_error(&mr_fd, &oracle),
                gce_error: relative_error(&gce_fd, &oracle),
                mr_fd,
                gce_fd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FdStudy {
        t: config.t,
        stencil_m: config.stencil.m,
        smooth_error: relative_error(&smooth, &oracle),
        oracle,
        smooth,
        bound,
        rows,
    })
}

/// Final point of an optimization against the oracle optimum.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub method: String,
    pub iterations: usize,
    pub converged: bool,
    pub energy: f64,
    pub oracle_energy: f64,
    pub energy_error: f64,
    /// Sorted pairwise distances, Å.
    pub bonds: Vec<f64>,
    pub oracle_bonds: Vec<f64>,
    /// Largest difference between sorted distances, Å.
    pub bond_error: f64,
    /// Longest minus shortest distance, Å.
    pub spread: f64,
    /// Longest distance minus the sum of the other two: zero when linear.
    pub linearity: Option<f64>,
    pub non_monotone_steps: usize,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn compare(trace: &OptimizationTrace, oracle: &OptimizationTrace) -> Comparison {
    let last = trace.last();
    let bonds = sorted(&last.bond_lengths);
    let oracle_bonds = sorted(&oracle.last().bond_lengths);
    let bond_error = bonds
        .iter()
        .zip(&oracle_bonds)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Comparison {
        method: trace.metadata.method.clone(),
        iterations: last.iteration,
        converged: trace.converged,
        energy: last.energy,
        oracle_energy: oracle.last().energy,
        energy_error: last.energy - oracle.last().energy,
        spread: bonds.last().copied().unwrap_or(0.0) - bonds.first().copied().unwrap_or(0.0),
        linearity: (bonds.len() == 3).then(|| bonds[2] - bonds[0] - bonds[1]),
        bonds,
        oracle_bonds,
        bond_error,
        non_monotone_steps: trace.non_monotone_steps(),
    }
}

pub struct OptimizationOutcome {
    pub problem: MolecularProblem,
    pub trace: OptimizationTrace,
    pub oracle: OptimizationTrace,
    pub comparison: Comparison,
}

/// Oracle settings: exact surface, BFGS to 1e-6 hartree/Å.
pub fn oracle_options() -> OptimizerOptions {
    OptimizerOptions {
        gradient_tol: 1e-6,
        ..OptimizerOptions::default()
    }
}

/// The study's molecule and default method: the ground-state study runs
/// gradient descent on the distorted start, the triplet study BFGS on the
/// linear start.
pub fn study_setup(config: &RunConfig) -> (RunConfig, Method) {
    let (builtin, method) = match config.study {
        Some(Study::Fig10H3Triplet) => (Builtin::H3pTriplet, Method::Bfgs),
        _ => (Builtin::H3pGround, Method::GradientDescent),
    };
    let mut c = config.clone();
    c.molecule = MoleculeSource::Builtin { name: builtin };
    (c, config.optimizer.method.unwrap_or(method))
}

pub fn optimization_study(config: &RunConfig) -> Result<OptimizationOutcome> {
    let (config, method) = study_setup(config);
    let problem = molecular_problem(&config)?;
    let oracle = bfgs(&mut problem.oracle(), &problem.x0, &oracle_options())?;
    let trace = optimize_problem(&config, &problem, method)?;
    let comparison = compare(&trace, &oracle);
    Ok(OptimizationOutcome {
        problem,
        trace,
        oracle,
        comparison,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseRun {
    pub t: u32,
    pub shots: u64,
    /// Shot count from the Chebyshev bound at the study precision.
    pub prescribed: bool,
    pub seed: u64,
    pub iterations: usize,
    pub energy_error: f64,
    pub bond_error: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseSummary {
    pub t: u32,
    pub shots: u64,
    pub prescribed: bool,
    pub median_energy_error: f64,
    pub median_bond_error: f64,
    pub median_spread: f64,
}

/// Chebyshev shot count for energy precision `epsilon` (hartree) with the
/// problem's input overlap and the GCE window at `t`.
pub fn prescribed_shots(config: &RunConfig, p: &MolecularProblem, t: u32, epsilon: f64) -> Result<u64> {
    let grid = ReadoutGrid::new(t)?;
    let gce: GceConfig = config.gce.resolve(grid)?;
    let m = MomentAnalysis::new(t, 0.0, gce.half_width, p.target.dominant_overlap)?;
    Ok(chebyshev_samples(
        variance_mu_from_magnitude(m.magnitude)?,
        epsilon * p.map.scale(),
    )?)
}

/// Ground-state optimization with sampled distributions over
/// `t × shots × seeds`, plus the prescribed shot count at each `t`.
pub fn noise_study(config: &RunConfig) -> Result<(Vec<NoiseRun>, Vec<NoiseSummary>)> {
    let mut base = config.clone();
    base.study = Some(Study::Fig9H3Gs);
    let (base, method) = study_setup(&base);
    let p = molecular_problem(&base)?;
    let oracle = bfgs(&mut p.oracle(), &p.x0, &oracle_options())?;
    let s = &config.studies;
    let mut cells = Vec::new();
    for &t in &s.noise_t {
        let mut shots: Vec<(u64, bool)> = s.noise_shots.iter().map(|&n| (n, false)).collect();
        shots.push((prescribed_shots(&base, &p, t, s.noise_epsilon)?, true));
        for (n, prescribed) in shots {
            for k in 0..s.noise_seeds {
                cells.push((t, n, prescribed, config.seed.wrapping_add(k)));
            }
        }
    }
    let runs = cells
        .par_iter()
        .map(|&(t, shots, prescribed, seed)| {
            let mut c = base.clone();
            c.t = t;
            c.shots = shots;
            c.seed = seed;
            let trace = optimize_problem(&c, &p, method)?;
            let cmp = compare(&trace, &oracle);
            Ok(NoiseRun {
                t,
                shots,
                prescribed,
                seed,
                iterations: cmp.iterations,
                energy_error: cmp.energy_error,
                bond_error: cmp.bond_error,
                spread: cmp.spread,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    for group in runs.chunk_by(|a, b| (a.t, a.shots, a.prescribed) == (b.t, b.shots, b.prescribed)) {
        let col = |f: fn(&NoiseRun) -> f64| median(&group.iter().map(f).collect::<Vec<_>>());
        summary.push(NoiseSummary {
            t: group[0].t,
            shots: group[0].shots,
            prescribed: group[0].prescribed,
            median_energy_error: col(|r| r.energy_error.abs()),
            median_bond_error: col(|r| r.bond_error),
            median_spread: col(|r| r.spread),
        });
    }
    Ok((runs, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn off_grid_phases_are_reproducible_and_off_grid() {
        let a = off_grid_phases(8, 50, 7);
        assert_eq!(a, off_grid_phases(8, 50, 7));
        assert!(a.iter().all(|p| (p * 256.0).fract() > 1e-6));
    }

    #[test]
    fn small_accuracy_study() {
        let mut c = RunConfig::default();
        c.studies.accuracy_t = vec![6];
        c.studies.windows = vec![8.0];
        c.studies.accuracy_phases = 20;
        let (samples, rows) = accuracy_study(&c).unwrap();
        assert_eq!(samples.len(), 20);
        assert!(rows[0].max_mr_error <= rows[0].resolution + 1e-15);
    }
}
