//! Geometry optimization: gradient descent and BFGS over flattened
//! Cartesian coordinates (Å), driven by either the differentiable QPE
//! pipeline or the exact-diagonalization reference surface.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chem::fermion::{csf_state, determinant_state, sector_indices, state_sector};
use crate::chem::geometry::Geometry;
use crate::chem::molecular::MolecularSystem;
use crate::error::{invalid, Error, Result};
use crate::estimator::Estimator;
use crate::gradients::{hellmann_feynman_oracle, norm, Pipeline};
use crate::qpe::{PhaseMap, ReadoutGrid};
use crate::spectral::{eigendecompose, overlaps, ParametrizedHamiltonian, Restricted, Restriction, StateVector};

/// Dominant overlap below which a warning is raised.
pub const OVERLAP_WARN: f64 = 0.5;
/// Dominant overlap below which the state is rejected.
pub const OVERLAP_MIN: f64 = 0.1;

/// Padding (hartree) on each side of the initial spectrum when building a
/// run's fixed phase map.
pub const DEFAULT_MAP_PADDING: f64 = 0.5;

/// Input-state recipe in the occupation-number basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateSpec {
    Determinant {
        bits: String,
    },
    /// Normalized on construction.
    Csf {
        terms: Vec<(f64, String)>,
    },
    /// Real amplitudes over the full register.
    Amplitudes {
        values: Vec<f64>,
    },
}

impl StateSpec {
    pub fn determinant(bits: &str) -> Self {
        Self::Determinant { bits: bits.to_string() }
    }

    pub fn state(&self, n_qubits: usize) -> Result<StateVector> {
        match self {
            Self::Determinant { bits } => determinant_state(bits, n_qubits),
            Self::Csf { terms } => {
                let t: Vec<(f64, &str)> = terms.iter().map(|(w, b)| (*w, b.as_str())).collect();
                csf_state(&t, n_qubits)
            }
            Self::Amplitudes { values } => {
                if values.len() != 1 << n_qubits {
                    return Err(Error::DimensionMismatch {
                        expected: 1 << n_qubits,
                        found: values.len(),
                    });
                }
                StateVector::from_real(values)
            }
        }
    }
}

/// The QPE input state and its decomposition at the initial geometry.
#[derive(Debug, Clone)]
pub struct TargetState {
    /// Basis states the optimization works in: the `(N, 2S_z)` sector of the
    /// input, or the whole register when the input mixes sectors.
    pub restriction: Restriction,
    /// Input state inside `restriction`.
    pub state: StateVector,
    /// `|⟨u|ψ⟩|²` over the restricted eigenstates, ascending energy.
    pub overlaps: Vec<f64>,
    pub dominant_index: usize,
    pub dominant_overlap: f64,
    /// Restricted eigenvalues at the initial geometry (electronic part).
    pub eigenvalues: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Builds the input state and checks that one eigenstate dominates it.
/// The GCE later follows that dominant peak through its softmax; no
/// eigenvalue index is fixed.
pub fn excited_state_target<H: ParametrizedHamiltonian + ?Sized>(
    spec: &StateSpec,
    h: &H,
    x0: &[f64],
    n_qubits: usize,
) -> Result<TargetState> {
    let full = spec.state(n_qubits)?;
    let restriction = match state_sector(&full, n_qubits) {
        Ok((n, ms2)) => Restriction::new(full.dim(), sector_indices(n_qubits, n, ms2))?,
        Err(_) => Restriction::new(full.dim(), (0..full.dim()).collect())?,
    };
    let state = restriction.restrict_state(&full)?;
    let eig = eigendecompose(&restriction.restrict_operator(&h.evaluate(x0)?)?)?;
    let w = overlaps(&state, &eig)?;
    let (dominant_index, dominant_overlap) =
        w.iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    if dominant_overlap < OVERLAP_MIN {
        return Err(Error::PoorOverlap(dominant_overlap));
    }
    let mut warnings = Vec::new();
    if dominant_overlap < OVERLAP_WARN {
        warnings.push(format!(
            "input state's largest eigenstate overlap is {dominant_overlap:.3} (< {OVERLAP_WARN})"
        ));
    }
    Ok(TargetState {
        restriction,
        state,
        overlaps: w,
        dominant_index,
        dominant_overlap,
        eigenvalues: eig.eigenvalues,
        warnings,
    })
}

/// Fixed phase map covering the initial restricted spectrum plus
/// `padding` hartree on each side.
pub fn run_phase_map(eigenvalues: &[f64], padding: f64) -> Result<PhaseMap> {
    let (lo, hi) = eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    PhaseMap::covering(lo, hi, padding, PhaseMap::DEFAULT_MARGIN)
}

/// A molecule restricted to its input state's sector, with the run's fixed
/// phase map.
pub struct MolecularProblem {
    pub hamiltonian: Restricted<MolecularSystem>,
    pub target: TargetState,
    pub map: PhaseMap,
    pub x0: Vec<f64>,
}

impl MolecularProblem {
    pub fn new(geometry: Geometry, spec: &StateSpec, padding: f64) -> Result<Self> {
        let system = MolecularSystem::new(geometry)?;
        let x0 = system.reference().parameters();
        let target = excited_state_target(spec, &system, &x0, system.n_qubits())?;
        let map = run_phase_map(&target.eigenvalues, padding)?;
        let hamiltonian = Restricted::new(system, target.restriction.clone())?;
        Ok(Self {
            hamiltonian,
            target,
            map,
            x0,
        })
    }

    pub fn system(&self) -> &MolecularSystem {
        self.hamiltonian.inner()
    }

    pub fn geometry(&self) -> &Geometry {
        self.system().reference()
    }

    pub fn pipeline(&self, grid: ReadoutGrid, estimator: Estimator) -> Pipeline<'_, Restricted<MolecularSystem>> {
        Pipeline::new(&self.hamiltonian, self.target.state.clone(), self.map, grid, estimator)
    }

    /// Exact surface of the eigenstate the input state is dominated by.
    pub fn oracle(&self) -> ExactObjective<'_, Restricted<MolecularSystem>> {
        ExactObjective {
            hamiltonian: &self.hamiltonian,
            target: self.target.dominant_index,
        }
    }
}

/// Energy and gradient at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy: f64,
    pub gradient: Vec<f64>,
    /// Largest eigenstate population of the input state, when known.
    pub dominant_overlap: Option<f64>,
}

pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation>;
}

/// Closure objective, e.g. analytic test surfaces.
pub struct FnObjective<F>(pub F);

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Objective for FnObjective<F> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        let (energy, gradient) = (self.0)(x)?;
        Ok(Evaluation {
            energy,
            gradient,
            dominant_overlap: None,
        })
    }
}

/// The differentiable QPE pipeline. With sampling, evaluation `k` draws its
/// shots with seed `base_seed + k`.
pub struct PipelineObjective<'a, H: ParametrizedHamiltonian + ?Sized> {
    pub pipeline: Pipeline<'a, H>,
    base_seed: u64,
    evaluations: u64,
}

impl<'a, H: ParametrizedHamiltonian + ?Sized> PipelineObjective<'a, H> {
    pub fn new(pipeline: Pipeline<'a, H>) -> Self {
        let base_seed = pipeline.sampling.map(|s| s.seed).unwrap_or(0);
        Self {
            pipeline,
            base_seed,
            evaluations: 0,
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

impl<H: ParametrizedHamiltonian + ?Sized> Objective for PipelineObjective<'_, H> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        self.pipeline.set_seed(self.base_seed.wrapping_add(self.evaluations));
        self.evaluations += 1;
        let g = self.pipeline.gradient(x)?;
        Ok(Evaluation {
            energy: g.energy,
            gradient: g.gradient,
            dominant_overlap: Some(g.weights.iter().cloned().fold(0.0, f64::max)),
        })
    }
}

/// Exact eigenvalue `target` plus offset, with the Hellmann–Feynman
/// gradient: the reference surface.
pub struct ExactObjective<'a, H: ParametrizedHamiltonian + ?Sized> {
    pub hamiltonian: &'a H,
    pub target: usize,
}

impl<H: ParametrizedHamiltonian + ?Sized> Objective for ExactObjective<'_, H> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        let eig = eigendecompose(&self.hamiltonian.evaluate(x)?)?;
        if self.target >= eig.dim() {
            return invalid(format!("target {} out of range", self.target));
        }
        Ok(Evaluation {
            energy: eig.eigenvalues[self.target] + self.hamiltonian.offset(x),
            gradient: hellmann_feynman_oracle(self.hamiltonian, x, self.target)?,
            dominant_overlap: None,
        })
    }
}

/// Removes overall translation and rotation from `g`, treating `x` as
/// flattened 3-D positions.
pub fn project_rigid_body(x: &[f64], g: &[f64]) -> Vec<f64> {
    let n = x.len() / 3;
    if n == 0 || x.len() % 3 != 0 {
        return g.to_vec();
    }
    let mut center = [0.0; 3];
    for a in 0..n {
        for k in 0..3 {
            center[k] += x[3 * a + k] / n as f64;
        }
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    for k in 0..3 {
        let mut t = vec![0.0; x.len()];
        for a in 0..n {
            t[3 * a + k] = 1.0;
        }
        candidates.push(t);
    }
    for k in 0..3 {
        let mut r = vec![0.0; x.len()];
        for a in 0..n {
            let p = [x[3 * a] - center[0], x[3 * a + 1] - center[1], x[3 * a + 2] - center[2]];
            // e_k × p
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            r[3 * a + j] = p[i];
            r[3 * a + i] = -p[j];
        }
        candidates.push(r);
    }
    for mut v in candidates {
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|a| *a /= nv);
            basis.push(v);
        }
    }
    let mut out = g.to_vec();
    for b in &basis {
        let d: f64 = out.iter().zip(b).map(|(a, c)| a * c).sum();
        out.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    /// Hartree/Å.
    pub gradient_tol: f64,
    pub project_rigid_body: bool,
    /// Longest BFGS step, Å.
    pub max_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-4,
            project_rigid_body: true,
            max_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
    /// Flattened positions, Å.
    pub coordinates: Vec<f64>,
    /// Pairwise distances `r_ij`, `i < j`, Å.
    pub bond_lengths: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominant_overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub metadata: TraceMetadata,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub converged: bool,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

fn pair_distances(x: &[f64]) -> Vec<f64> {
    let n = x.len() / 3;
    if x.len() % 3 != 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..3).map(|k| (x[3 * i + k] - x[3 * j + k]).powi(2)).sum();
            out.push(d.sqrt());
        }
    }
    out
}

impl OptimizationTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace is never empty")
    }

    pub fn final_coordinates(&self) -> &[f64] {
        &self.last().coordinates
    }

    /// Iterations whose energy rose above the previous one.
    pub fn non_monotone_steps(&self) -> usize {
        self.records.windows(2).filter(|w| w[1].energy > w[0].energy).count()
    }

    /// `iteration,energy,gradient_norm,r_01,…`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.records[0].coordinates.len() / 3;
        let mut header = String::from("iteration,energy,gradient_norm");
        if self.records[0].coordinates.len() % 3 == 0 {
            for i in 0..n {
                for j in i + 1..n {
                    header.push_str(&format!(",r_{i}{j}"));
                }
            }
        }
        writeln!(w, "{header}")?;
        for r in &self.records {
            let bonds: String = r.bond_lengths.iter().map(|b| format!(",{b:.10}")).collect();
            writeln!(w, "{},{:.12},{:.6e}{bonds}", r.iteration, r.energy, r.gradient_norm)?;
        }
        Ok(())
    }

    /// One XYZ frame per iteration using `template`'s atoms.
    pub fn write_xyz<W: Write>(&self, template: &Geometry, mut w: W) -> Result<()> {
        for r in &self.records {
            let g = template.with_parameters(&r.coordinates)?;
            write!(
                w,
                "{}",
                g.to_xyz(&format!("iteration={} energy={:.12}", r.iteration, r.energy))
            )?;
        }
        Ok(())
    }
}

struct Recorder {
    records: Vec<IterationRecord>,
    warnings: Vec<String>,
    evaluations: usize,
    overlap_ok: bool,
}

impl Recorder {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            warnings: Vec::new(),
            evaluations: 0,
            overlap_ok: true,
        }
    }

    fn eval<O: Objective + ?Sized>(
        &mut self,
        obj: &mut O,
        x: &[f64],
        options: &OptimizerOptions,
    ) -> Result<Evaluation> {
        let mut ev = obj.evaluate(x)?;
        self.evaluations += 1;
        if options.project_rigid_body {
            ev.gradient = project_rigid_body(x, &ev.gradient);
        }
        Ok(ev)
    }

    fn push(&mut self, x: &[f64], ev: &Evaluation, note: Option<String>) {
        let iteration = self.records.len();
        if let Some(prev) = self.records.last() {
            if ev.energy > prev.energy {
                self.warnings.push(format!(
                    "iteration {iteration}: energy rose by {:.3e} hartree",
                    ev.energy - prev.energy
                ));
            }
        }
        if let Some(o) = ev.dominant_overlap {
            let ok = o >= OVERLAP_WARN;
            if !ok && self.overlap_ok {
                self.warnings
                    .push(format!("iteration {iteration}: dominant overlap fell to {o:.3}"));
            }
            self.overlap_ok = ok;
        }
        self.records.push(IterationRecord {
            iteration,
            energy: ev.energy,
            gradient_norm: norm(&ev.gradient),
            coordinates: x.to_vec(),
            bond_lengths: pair_distances(x),
            dominant_overlap: ev.dominant_overlap,
            note,
        });
    }

    fn finish(self, method: &str, termination: Termination) -> OptimizationTrace {
        OptimizationTrace {
            metadata: TraceMetadata {
                method: method.to_string(),
                ..TraceMetadata::default()
            },
            records: self.records,
            termination,
            converged: termination == Termination::GradientTolerance,
            evaluations: self.evaluations,
            warnings: self.warnings,
        }
    }
}

fn check_options(options: &OptimizerOptions) -> Result<()> {
    if options.max_iterations == 0 {
        return invalid("max_iterations must be at least 1");
    }
    if !(options.gradient_tol > 0.0) {
        return invalid("gradient tolerance must be positive");
    }
    if !(options.max_step > 0.0) {
        return invalid("max_step must be positive");
    }
    Ok(())
}

/// `x ← x − step·∇E` until `‖∇E‖ ≤ tol` or the iteration limit. `step` is in
/// Å²/hartree.
pub fn gradient_descent<O: Objective + ?Sized>(
    objective: &mut O,
    x0: &[f64],
    step: f64,
    options: &OptimizerOptions,
) -> Result<OptimizationTrace> {
    check_options(options)?;
    if !(step > 0.0) || !step.is_finite() {
        return invalid(format!("step must be positive, got {step}"));
    }
    let mut rec = Recorder::new();
    let mut x = x0.to_vec();
    loop {
        let ev = rec.eval(objective, &x, options)?;
        rec.push(&x, &ev, None);
        if norm(&ev.gradient) <= options.gradient_tol {
            return Ok(rec.finish("gradient-descent", Termination::GradientTolerance));
        }
        if rec.records.len() >= options.max_iterations {
            return Ok(rec.finish("gradient-descent", Termination::MaxIterations));
        }
        x.iter_mut().zip(&ev.gradient).for_each(|(a, g)| *a -= step * g);
    }
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 20;
/// Steepest-descent step (Å²/hartree) used when the line search fails.
const FALLBACK_STEP: f64 = 0.01;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizer of the cubic through `φ(0)`, `φ′(0)`, `φ(a)`, `φ(b)`.
fn cubic_step(phi0: f64, d0: f64, a: f64, fa: f64, b: f64, fb: f64) -> Option<f64> {
    let ra = fa - phi0 - d0 * a;
    let rb = fb - phi0 - d0 * b;
    let den = a * a * b * b * (a - b);
    let c3 = (b * b * ra - a * a * rb) / den;
    let c2 = (-b * b * b * ra + a * a * a * rb) / den;
    if c3 == 0.0 {
        return (c2 > 0.0).then(|| -d0 / (2.0 * c2));
    }
    let disc = c2 * c2 - 3.0 * c3 * d0;
    (disc >= 0.0).then(|| (-c2 + disc.sqrt()) / (3.0 * c3))
}

/// Quasi-Newton minimization with an inverse-Hessian BFGS update, a
/// backtracking line search using quadratic then cubic interpolation, and
/// a steepest-descent fallback when the search fails.
pub fn bfgs<O: Objective + ?Sized>(
    objective: &mut O,
    x0: &[f64],
    options: &OptimizerOptions,
) -> Result<OptimizationTrace> {
    check_options(options)?;
    let n = x0.len();
    let identity = |n: usize| {
        let mut m = vec![vec![0.0; n]; n];
        (0..n).for_each(|i| m[i][i] = 1.0);
        m
    };
    let mut hinv = identity(n);
    let mut first_update = true;
    let mut rec = Recorder::new();
    let mut x = x0.to_vec();
    let mut ev = rec.eval(objective, &x, options)?;
    rec.push(&x, &ev, None);
    loop {
        let g = ev.gradient.clone();
        if norm(&g) <= options.gradient_tol {
            return Ok(rec.finish("bfgs", Termination::GradientTolerance));
        }
        if rec.records.len() >= options.max_iterations {
            return Ok(rec.finish("bfgs", Termination::MaxIterations));
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&hinv[i], &g)).collect();
        if dot(&g, &p) >= 0.0 {
            hinv = identity(n);
            first_update = true;
            p = g.iter().map(|v| -v).collect();
        }
        let pn = norm(&p);
        if pn > options.max_step {
            p.iter_mut().for_each(|v| *v *= options.max_step / pn);
        }
        let d0 = dot(&g, &p);
        let mut alpha = 1.0;
        let mut prev: Option<(f64, f64)> = None;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let xt: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let et = match rec.eval(objective, &xt, options) {
                Ok(e) => e,
                // A trial point outside the phase map is rejected like an
                // Armijo failure; accepted iterates still error.
                Err(Error::Aliasing { energy, .. }) => {
                    rec.warnings.push(format!(
                        "iteration {}: trial step α = {alpha:.3e} aliased (E = {energy:.6}); backtracking",
                        rec.records.len()
                    ));
                    alpha *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if et.energy <= ev.energy + ARMIJO_C1 * alpha * d0 {
                accepted = Some((xt, et));
                break;
            }
            let next = match prev {
                None => -d0 * alpha * alpha / (2.0 * (et.energy - ev.energy - d0 * alpha)),
                Some((a0, f0)) => cubic_step(ev.energy, d0, alpha, et.energy, a0, f0).unwrap_or(0.5 * alpha),
            };
            prev = Some((alpha, et.energy));
            alpha = if next.is_finite() {
                next.clamp(0.1 * alpha, 0.5 * alpha)
            } else {
                0.5 * alpha
            };
        }
        let note;
        match accepted {
            Some((xt, et)) => {
                let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = et.gradient.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * norm(&s) * norm(&y) {
                    if first_update {
                        let scale = sy / dot(&y, &y);
                        hinv = identity(n);
                        hinv.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v *= scale));
                        first_update = false;
                    }
                    bfgs_update(&mut hinv, &s, &y, sy);
                    note = None;
                } else {
                    note = Some("curvature condition failed; Hessian update skipped".to_string());
                }
                x = xt;
                ev = et;
            }
            None => {
                let mut step: Vec<f64> = g.iter().map(|v| -FALLBACK_STEP * v).collect();
                let sn = norm(&step);
                if sn > options.max_step {
                    step.iter_mut().for_each(|v| *v *= options.max_step / sn);
                }
                x.iter_mut().zip(&step).for_each(|(a, b)| *a += b);
                ev = rec.eval(objective, &x, options)?;
                hinv = identity(n);
                first_update = true;
                note = Some("line search failed; steepest-descent step taken".to_string());
            }
        }
        if let Some(msg) = &note {
            rec.warnings.push(format!("iteration {}: {msg}", rec.records.len()));
        }
        rec.push(&x, &ev, note);
    }
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`, `ρ = 1/sᵀy`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn h3_from_bonds(coords: [[f64; 3]; 3]) -> Geometry {
    Geometry::new(&["H", "H", "H"], &coords, 1, 1).expect("valid H3+ geometry")
}

/// Isosceles H₃⁺: 0.99 Å equilateral guess with one bond stretched by
/// 0.05 Å.
pub fn h3_ground_start() -> Geometry {
    let (a, b): (f64, f64) = (1.04, 0.99);
    let y = (b * b - a * a / 4.0).sqrt();
    h3_from_bonds([[0.0; 3], [a, 0.0, 0.0], [a / 2.0, y, 0.0]])
}

/// Linear H₃⁺ with bonds 0.99 and 1.09 Å.
pub fn h3_triplet_start() -> Geometry {
    let g = h3_from_bonds([[0.0; 3], [0.99, 0.0, 0.0], [2.08, 0.0, 0.0]]);
    Geometry::new(&["H", "H", "H"], &g.coords_angstrom(), 1, 3).expect("valid H3+ geometry")
}

/// Triplet input determinant: both electrons β in the first two spatial
/// orbitals.
pub const H3_TRIPLET_BITS: &str = "010100";

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(center: Vec<f64>) -> FnObjective<impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> {
        FnObjective(move |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(&center).map(|(a, b)| a - b).collect();
            Ok((dot(&d, &d), d.iter().map(|v| 2.0 * v).collect()))
        })
    }

    fn plain() -> OptimizerOptions {
        OptimizerOptions {
            project_rigid_body: false,
            ..OptimizerOptions::default()
        }
    }

    #[test]
    fn gd_quadratic_linear_rate() {
        let c = vec![1.0, -2.0, 0.5];
        let t = gradient_descent(&mut quadratic(c.clone()), &[0.0, 0.0, 0.0], 0.1, &plain()).unwrap();
        assert!(t.converged);
        let x = t.final_coordinates();
        assert!(x.iter().zip(&c).all(|(a, b)| (a - b).abs() < 1e-4));
        // Error contracts by exactly 1 − 2·step per iteration.
        let e: Vec<f64> = t.records.iter().map(|r| r.gradient_norm).collect();
        assert!((e[5] / e[4] - 0.8).abs() < 1e-12);
        assert_eq!(t.non_monotone_steps(), 0);
    }

    #[test]
    fn gd_zero_gradient_start() {
        let t = gradient_descent(&mut quadratic(vec![1.0, 2.0]), &[1.0, 2.0], 0.01, &plain()).unwrap();
        assert_eq!(t.records.len(), 1);
        assert!(t.converged);
        assert_eq!(t.termination, Termination::GradientTolerance);
    }

    #[test]
    fn gd_hits_iteration_limit() {
        let opts = OptimizerOptions {
            max_iterations: 3,
            ..plain()
        };
        let t = gradient_descent(&mut quadratic(vec![1.0]), &[0.0], 1e-3, &opts).unwrap();
        assert_eq!(t.records.len(), 3);
        assert!(!t.converged);
        assert_eq!(t.termination, Termination::MaxIterations);
        assert!(gradient_descent(&mut quadratic(vec![1.0]), &[0.0], 0.0, &opts).is_err());
    }

    #[test]
    fn bfgs_quadratic_superlinear() {
        let a = [1.0, 4.0, 9.0, 0.5];
        let mut obj = FnObjective(move |x: &[f64]| {
            let e = (0..4).map(|i| a[i] * (x[i] - i as f64).powi(2)).sum();
            Ok((e, (0..4).map(|i| 2.0 * a[i] * (x[i] - i as f64)).collect()))
        });
        let opts = OptimizerOptions {
            gradient_tol: 1e-8,
            max_step: 100.0,
            ..plain()
        };
        let t = bfgs(&mut obj, &[0.3, -0.2, 0.1, 0.5], &opts).unwrap();
        assert!(t.converged);
        // Backtracking search, so no finite termination; the tail must
        // still contract superlinearly.
        assert!(t.records.len() < 25, "{}", t.records.len());
        let g: Vec<f64> = t.records.iter().map(|r| r.gradient_norm).collect();
        assert!(g.windows(2).rev().take(3).all(|w| w[1] < 0.1 * w[0]), "{g:?}");
        for (i, v) in t.final_coordinates().iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn bfgs_restart_does_not_move() {
        let c = vec![0.5, 0.5];
        let t = bfgs(&mut quadratic(c.clone()), &c, &plain()).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.final_coordinates(), &c[..]);
    }

    #[test]
    fn bfgs_backtracks_from_aliased_trial() {
        let mut obj = FnObjective(|x: &[f64]| {
            if x[0] > 1.0 {
                return Err(Error::Aliasing {
                    energy: x[0],
                    lo: 0.0,
                    hi: 1.0,
                });
            }
            Ok(((x[0] - 0.9).powi(2), vec![2.0 * (x[0] - 0.9)]))
        });
        let opts = OptimizerOptions {
            max_step: 10.0,
            ..plain()
        };
        let t = bfgs(&mut obj, &[0.0], &opts).unwrap();
        assert!(t.converged);
        assert!(t.warnings[0].contains("aliased"));
        assert!((t.final_coordinates()[0] - 0.9).abs() < 1e-4);
        // Accepted iterates still fail loudly.
        let mut bad = FnObjective(|_: &[f64]| -> Result<(f64, Vec<f64>)> {
            Err(Error::Aliasing {
                energy: 0.0,
                lo: 1.0,
                hi: 2.0,
            })
        });
        assert!(bfgs(&mut bad, &[0.0], &opts).is_err());
    }

    #[test]
    fn bfgs_rosenbrock() {
        let mut obj = FnObjective(|x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let e = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            Ok((e, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))
        });
        let opts = OptimizerOptions {
            gradient_tol: 1e-6,
            max_step: 1.0,
            ..plain()
        };
        let t = bfgs(&mut obj, &[-1.2, 1.0], &opts).unwrap();
        assert!(t.converged);
        assert!((t.final_coordinates()[0] - 1.0).abs() < 1e-5);
        assert_eq!(t.non_monotone_steps(), 0);
    }

    #[test]
    fn rigid_body_projection() {
        let x = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.3, 0.8, 0.1];
        // A pure translation and a pure rotation are removed entirely.
        let t = [0.2, -0.1, 0.4, 0.2, -0.1, 0.4, 0.2, -0.1, 0.4];
        assert!(norm(&project_rigid_body(&x, &t)) < 1e-12);
        let rot: Vec<f64> = (0..3).flat_map(|a| [-x[3 * a + 1], x[3 * a], 0.0]).collect();
        assert!(norm(&project_rigid_body(&x, &rot)) < 1e-12);
        // A bond stretch survives.
        let s = [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let p = project_rigid_body(&x, &s);
        assert!(norm(&p) > 0.5);
        // Linear molecule: one rotation is degenerate and skipped.
        let lin = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.1, 0.0, 0.0];
        let stretch = [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        assert!((norm(&project_rigid_body(&lin, &stretch)) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn trace_outputs() {
        let g = h3_ground_start();
        let x = g.parameters();
        let mut center = x.clone();
        center[3] -= 0.01;
        let t = gradient_descent(&mut quadratic(center), &x, 0.1, &plain()).unwrap();
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("iteration,energy,gradient_norm,r_01,r_02,r_12\n"));
        assert_eq!(csv.lines().count(), t.records.len() + 1);
        let mut xyz = Vec::new();
        t.write_xyz(&g, &mut xyz).unwrap();
        assert_eq!(String::from_utf8(xyz).unwrap().lines().count(), 5 * t.records.len());
        let j = serde_json::to_value(&t).unwrap();
        assert_eq!(j["termination"], "gradient-tolerance");
        assert_eq!(j["metadata"]["method"], "gradient-descent");
    }

    #[test]
    fn default_starts() {
        let g = h3_ground_start();
        let b: Vec<f64> = g.bond_lengths().iter().map(|b| b.2).collect();
        assert!((b[0] - 1.04).abs() < 1e-12 && (b[1] - 0.99).abs() < 1e-12 && (b[2] - 0.99).abs() < 1e-12);
        let t = h3_triplet_start();
        let b: Vec<f64> = t.bond_lengths().iter().map(|b| b.2).collect();
        assert!((b[0] - 0.99).abs() < 1e-12 && (b[2] - 1.09).abs() < 1e-12);
        assert_eq!(t.multiplicity(), 3);
    }

    #[test]
    fn targets_on_h3() {
        let g = h3_ground_start();
        let sys = MolecularSystem::new(g.clone()).unwrap();
        let x = g.parameters();
        let hf = excited_state_target(&StateSpec::determinant("110000"), &sys, &x, 6).unwrap();
        assert_eq!(hf.restriction.dim(), 9);
        assert_eq!(hf.dominant_index, 0);
        assert!(hf.dominant_overlap > 0.9);
        assert!(hf.warnings.is_empty());

        let trip = excited_state_target(&StateSpec::determinant(H3_TRIPLET_BITS), &sys, &x, 6).unwrap();
        assert_eq!(trip.restriction.dim(), 3);
        assert!(trip.dominant_overlap > 0.5);
        // The triplet sector shares no basis state with the singlet ground
        // sector, so its overlap with the singlet ground state is zero.
        assert!(trip
            .restriction
            .indices()
            .iter()
            .all(|i| !hf.restriction.indices().contains(i)));

        let csf = StateSpec::Csf {
            terms: vec![(1.0, "100100".into()), (-1.0, "011000".into())],
        };
        let s = excited_state_target(&csf, &sys, &x, 6).unwrap();
        assert!((s.state.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poor_state_guard() {
        let g = h3_ground_start();
        let sys = MolecularSystem::new(g.clone()).unwrap();
        let x = g.parameters();
        // Uniform superposition over every basis state spreads over many
        // eigenstates of many sectors.
        let spec = StateSpec::Amplitudes { values: vec![1.0; 64] };
        match excited_state_target(&spec, &sys, &x, 6) {
            Ok(t) => {
                assert!(t.dominant_overlap < OVERLAP_WARN);
                assert_eq!(t.warnings.len(), 1);
            }
            Err(e) => assert!(matches!(e, Error::PoorOverlap(_))),
        }
        let spec = StateSpec::Amplitudes { values: vec![1.0; 3] };
        assert!(excited_state_target(&spec, &sys, &x, 6).is_err());
    }

    #[test]
    fn exact_oracle_ground_optimum_is_equilateral() {
        let p = MolecularProblem::new(
            h3_ground_start(),
            &StateSpec::determinant("110000"),
            DEFAULT_MAP_PADDING,
        )
        .unwrap();
        let opts = OptimizerOptions {
            gradient_tol: 1e-6,
            ..OptimizerOptions::default()
        };
        let t = bfgs(&mut p.oracle(), &p.x0, &opts).unwrap();
        assert!(t.converged, "{:?}", t.last());
        let b = &t.last().bond_lengths;
        let spread = b.iter().cloned().fold(f64::MIN, f64::max) - b.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-5, "{b:?}");
        // Stationarity of the reference surface at its own optimum.
        let hf = hellmann_feynman_oracle(&p.hamiltonian, t.final_coordinates(), 0).unwrap();
        assert!(norm(&project_rigid_body(t.final_coordinates(), &hf)) < 1e-4);
    }

    #[test]
    fn pipeline_objective_reseeds_per_evaluation() {
        use crate::estimator::GceConfig;
        use crate::gradients::Sampling;
        let p = MolecularProblem::new(
            h3_ground_start(),
            &StateSpec::determinant("110000"),
            DEFAULT_MAP_PADDING,
        )
        .unwrap();
        let grid = ReadoutGrid::new(8).unwrap();
        let mk = || {
            PipelineObjective::new(
                p.pipeline(grid, Estimator::Gce(GceConfig::default_for(grid)))
                    .with_sampling(Some(Sampling { shots: 1000, seed: 7 })),
            )
        };
        let (mut a, mut b) = (mk(), mk());
        let a1 = a.evaluate(&p.x0).unwrap();
        let a2 = a.evaluate(&p.x0).unwrap();
        assert_eq!(a1, b.evaluate(&p.x0).unwrap());
        assert_ne!(a1.energy, a2.energy);
        assert_eq!(a.evaluations(), 2);
    }
}
