//! Derivatives of the estimated energy with respect to Hamiltonian
//! parameters: perturbative spectral derivatives, the analytic chain through
//! the GCE, finite-difference stencils and the Hellmann–Feynman reference.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{gce_moment_with_tangents, Estimator, GceConfig, TrigMoment};
use crate::qpe::{
    kernel_derivative, kernel_probability, mapped_phases, spectral_distribution, ParentDistribution, PhaseMap,
    ReadoutGrid,
};
use crate::sampling::{frequencies, sample};
use crate::spectral::{
    amplitudes, eigendecompose, EigenSystem, HermitianOperator, ParametrizedHamiltonian, StateVector, DEGENERACY_GAP,
};

/// Central-difference step for the `dH/dx` fallback, in parameter units.
pub const FALLBACK_STEP: f64 = 1e-5;

/// Populations at or below this are treated as absent when checking for
/// degenerate levels.
pub const POPULATION_FLOOR: f64 = 1e-10;

/// Second differences of `H` larger than this (relative to `max(1, ‖H‖)`)
/// mark a non-smooth family.
pub const SMOOTHNESS_TOL: f64 = 1e-6;

/// First-order response of the spectrum along one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDerivative {
    /// `dE_u/dx`, hartree per parameter unit.
    pub energy: Vec<f64>,
    /// `dφ_u/dx`, phase per parameter unit.
    pub phase: Vec<f64>,
    /// `d|c_u|²/dx`.
    pub weight: Vec<f64>,
}

/// `dH/dx_j` for every parameter, analytic when the family provides it and
/// otherwise by central differences.
pub fn derivative_operators<H: ParametrizedHamiltonian + ?Sized>(h: &H, x: &[f64]) -> Result<Vec<HermitianOperator>> {
    if let Some(d) = h.derivatives(x) {
        return d;
    }
    let h0 = h.evaluate(x)?;
    let scale = h0.max_abs().max(1.0);
    (0..x.len())
        .into_par_iter()
        .map(|j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += FALLBACK_STEP;
            xm[j] -= FALLBACK_STEP;
            let hp = h.evaluate(&xp)?;
            let hm = h.evaluate(&xm)?;
            let second = hp.add_scaled(1.0, &hm)?.add_scaled(-2.0, &h0)?.max_abs();
            if second > SMOOTHNESS_TOL * scale {
                return Err(Error::NonSmooth {
                    direction: j,
                    second_difference: second,
                });
            }
            Ok(hp.add_scaled(-1.0, &hm)?.scaled(0.5 / FALLBACK_STEP))
        })
        .collect()
}

/// Perturbative response of eigenvalues and populations to `dh`.
///
/// Pairs of levels closer than the degeneracy gap are an error when either
/// is populated and are skipped otherwise.
pub fn spectral_response(
    eig: &EigenSystem,
    coeffs: &[Complex64],
    dh: &HermitianOperator,
    map_scale: f64,
) -> Result<SpectralDerivative> {
    let n = eig.dim();
    let vectors: Vec<_> = (0..n).map(|u| eig.vector(u)).collect();
    let dh_v: Vec<_> = vectors.iter().map(|v| dh.matrix() * v).collect();
    let populated: Vec<bool> = coeffs.iter().map(|c| c.norm_sqr() > POPULATION_FLOOR).collect();
    let mut energy = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for u in 0..n {
        energy[u] = vectors[u].dotc(&dh_v[u]).re;
        let mut dc = Complex64::new(0.0, 0.0);
        for v in 0..n {
            if v == u {
                continue;
            }
            let gap = eig.eigenvalues[u] - eig.eigenvalues[v];
            if gap.abs() < DEGENERACY_GAP {
                if populated[u] || populated[v] {
                    return Err(Error::Degenerate {
                        index: u.min(v),
                        gap: gap.abs(),
                    });
                }
                continue;
            }
            // ⟨u|dH|v⟩ c_v / (E_u − E_v)
            dc += vectors[u].dotc(&dh_v[v]) * coeffs[v] / gap;
        }
        weight[u] = 2.0 * (coeffs[u].conj() * dc).re;
    }
    Ok(SpectralDerivative {
        phase: energy.iter().map(|e| e * map_scale).collect(),
        energy,
        weight,
    })
}

/// Spectral derivative of `psi`'s decomposition along parameter `direction`.
pub fn spectral_derivative<H: ParametrizedHamiltonian + ?Sized>(
    h: &H,
    x: &[f64],
    direction: usize,
    psi: &StateVector,
    map: &PhaseMap,
) -> Result<SpectralDerivative> {
    if direction >= x.len() {
        return invalid(format!("direction {direction} out of range for {} parameters", x.len()));
    }
    let eig = eigendecompose(&h.evaluate(x)?)?;
    let c = amplitudes(psi, &eig)?;
    let dh = derivative_operators(h, x)?;
    spectral_response(&eig, c.as_slice(), &dh[direction], map.scale())
}

/// `dE/dx` of eigenstate `target` (offset included): the classical
/// reference gradient.
pub fn hellmann_feynman_oracle<H: ParametrizedHamiltonian + ?Sized>(
    h: &H,
    x: &[f64],
    target: usize,
) -> Result<Vec<f64>> {
    let eig = eigendecompose(&h.evaluate(x)?)?;
    if target >= eig.dim() {
        return invalid(format!("target {target} out of range for dimension {}", eig.dim()));
    }
    let gap = eig.gap(target);
    if gap < DEGENERACY_GAP {
        return Err(Error::Degenerate { index: target, gap });
    }
    let v = eig.vector(target);
    let dh = derivative_operators(h, x)?;
    Ok(dh
        .iter()
        .zip(h.offset_gradient(x))
        .map(|(d, o)| d.sandwich(&v, &v).re + o)
        .collect())
}

/// `dμ̃/dφ` of the GCE for a single eigenstate at phase `phi`: how much of
/// a sliding peak's motion reaches the estimate. Zero with the peak on a
/// grid point (the whole distribution is stationary there); one on
/// average over a bin.
pub fn phase_response(phi: f64, grid: ReadoutGrid, config: &GceConfig) -> Result<f64> {
    let dist = spectral_distribution(&[phi], &[1.0], grid)?;
    let tangent: Vec<f64> = (0..grid.size()).map(|j| kernel_derivative(phi, j, grid)).collect();
    Ok(gce_moment_with_tangents(&dist, config, &[tangent])?.1[0])
}

/// Expected gap between the smooth gradient and Hellmann–Feynman at one
/// point. The smooth gradient is `ρ(δ)·g_el + g_offset` up to the admixed
/// populations, so `‖g − g_HF‖ ≤ (|ρ − 1| + 1 − w_target)·‖g_el‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasBound {
    pub phase: f64,
    /// Fractional grid offset `frac(2^t φ)`.
    pub grid_offset: f64,
    pub response: f64,
    pub electronic_norm: f64,
    /// `1 − |c_target|²`.
    pub admixture: f64,
    pub bound: f64,
}

pub fn gradient_bias_bound<H: ParametrizedHamiltonian + ?Sized>(
    h: &H,
    x: &[f64],
    psi: &StateVector,
    map: &PhaseMap,
    grid: ReadoutGrid,
    config: &GceConfig,
    target: usize,
) -> Result<BiasBound> {
    let eig = eigendecompose(&h.evaluate(x)?)?;
    let w = crate::spectral::overlaps(psi, &eig)?;
    if target >= w.len() {
        return invalid(format!("target {target} out of range for dimension {}", w.len()));
    }
    let phase = map.phase_of_energy(eig.eigenvalues[target])?;
    let response = phase_response(phase, grid, config)?;
    let offset = h.offset_gradient(x);
    let electronic: Vec<f64> = hellmann_feynman_oracle(h, x, target)?
        .iter()
        .zip(&offset)
        .map(|(g, o)| g - o)
        .collect();
    let electronic_norm = norm(&electronic);
    let admixture = (1.0 - w[target]).max(0.0);
    Ok(BiasBound {
        phase,
        grid_offset: (phase * grid.size() as f64).fract(),
        response,
        electronic_norm,
        admixture,
        bound: ((response - 1.0).abs() + admixture) * electronic_norm,
    })
}

/// Shot count and seed for a sampled readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub shots: u64,
    pub seed: u64,
}

/// Energy estimate plus its analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothGradient {
    pub energy: f64,
    pub phase: f64,
    pub gradient: Vec<f64>,
    pub moment: TrigMoment,
    /// Populations `|c_u|²` at `x`, ascending energy.
    pub weights: Vec<f64>,
}

/// The scalar map `x ↦ Ê(x)`: parametrized Hamiltonian, fixed input state,
/// phase map, readout grid, estimator and optional shot sampling.
pub struct Pipeline<'a, H: ParametrizedHamiltonian + ?Sized> {
    pub hamiltonian: &'a H,
    pub state: StateVector,
    pub map: PhaseMap,
    pub grid: ReadoutGrid,
    pub estimator: Estimator,
    pub sampling: Option<Sampling>,
}

impl<'a, H: ParametrizedHamiltonian + ?Sized> Pipeline<'a, H> {
    pub fn new(hamiltonian: &'a H, state: StateVector, map: PhaseMap, grid: ReadoutGrid, estimator: Estimator) -> Self {
        Self {
            hamiltonian,
            state,
            map,
            grid,
            estimator,
            sampling: None,
        }
    }

    pub fn with_sampling(mut self, sampling: Option<Sampling>) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.sampling {
            s.seed = seed;
        }
    }

    fn decompose(&self, x: &[f64]) -> Result<(EigenSystem, Vec<Complex64>, Vec<f64>, Vec<f64>)> {
        let eig = eigendecompose(&self.hamiltonian.evaluate(x)?)?;
        let c: Vec<Complex64> = amplitudes(&self.state, &eig)?.iter().copied().collect();
        let w: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
        let phases = mapped_phases(&eig, &w, &self.map)?;
        Ok((eig, c, w, phases))
    }

    /// Exact parent distribution at `x`.
    pub fn distribution(&self, x: &[f64]) -> Result<ParentDistribution> {
        let (_, _, w, phases) = self.decompose(x)?;
        spectral_distribution(&phases, &w, self.grid)
    }

    /// Distribution the estimator sees: exact, or the sampled frequencies.
    pub fn observed(&self, exact: &ParentDistribution) -> Result<ParentDistribution> {
        match self.sampling {
            None => Ok(exact.clone()),
            Some(s) => Ok(frequencies(&sample(exact, s.shots, s.seed)?)),
        }
    }

    pub fn phase(&self, x: &[f64]) -> Result<f64> {
        self.estimator.phase(&self.observed(&self.distribution(x)?)?)
    }

    /// Estimated total energy, offset included.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        Ok(self.map.energy_of_phase(self.phase(x)?) + self.hamiltonian.offset(x))
    }

    /// Energy and its gradient by the analytic chain
    /// `dH → (dφ_u, d|c_u|²) → dP → dμ̃ → dE`.
    ///
    /// With sampling, the estimator stages are evaluated on the sampled
    /// frequencies while `dP` is the exact distribution tangent.
    pub fn gradient(&self, x: &[f64]) -> Result<SmoothGradient> {
        let Estimator::Gce(config) = self.estimator else {
            return invalid(format!("{} estimator is not differentiable", self.estimator.name()));
        };
        let (eig, c, w, phases) = self.decompose(x)?;
        let exact = spectral_distribution(&phases, &w, self.grid)?;
        let observed = self.observed(&exact)?;
        let dh = derivative_operators(self.hamiltonian, x)?;
        let scale = self.map.scale();
        let responses = dh
            .par_iter()
            .map(|d| spectral_response(&eig, &c, d, scale))
            .collect::<Result<Vec<_>>>()?;
        let tangents: Vec<Vec<f64>> = responses
            .par_iter()
            .map(|r| distribution_tangent(&phases, &w, r, self.grid))
            .collect();
        let (moment, dmu) = gce_moment_with_tangents(&observed, &config, &tangents)?;
        let offset_grad = self.hamiltonian.offset_gradient(x);
        Ok(SmoothGradient {
            energy: self.map.energy_of_phase(moment.mean_direction) + self.hamiltonian.offset(x),
            phase: moment.mean_direction,
            gradient: dmu.iter().zip(offset_grad).map(|(d, o)| d / scale + o).collect(),
            moment,
            weights: w,
        })
    }

    /// Gradient by the stencil applied to [`Pipeline::energy`].
    pub fn fd_gradient(&self, x: &[f64], stencil: &FdStencil) -> Result<Vec<f64>> {
        (0..x.len())
            .into_par_iter()
            .map(|j| fd_gradient(|y| self.energy(y), stencil, x, j))
            .collect()
    }
}

/// `dP(j) = Σ_u [d|c_u|² K(φ_u, j) + |c_u|² ∂K/∂φ_u dφ_u]`.
pub fn distribution_tangent(
    phases: &[f64],
    weights: &[f64],
    response: &SpectralDerivative,
    grid: ReadoutGrid,
) -> Vec<f64> {
    let mut dp = vec![0.0; grid.size()];
    for (u, &phi) in phases.iter().enumerate() {
        let dw = response.weight[u];
        let wd = weights[u] * response.phase[u];
        if dw == 0.0 && wd == 0.0 {
            continue;
        }
        for (j, v) in dp.iter_mut().enumerate() {
            *v += dw * kernel_probability(phi, j, grid) + wd * kernel_derivative(phi, j, grid);
        }
    }
    dp
}

/// Energy gradient of the GCE pipeline at `x` for an exact distribution.
pub fn estimator_gradient<H: ParametrizedHamiltonian + ?Sized>(
    h: &H,
    x: &[f64],
    psi: &StateVector,
    map: &PhaseMap,
    grid: ReadoutGrid,
    config: &GceConfig,
) -> Result<Vec<f64>> {
    Ok(Pipeline::new(h, psi.clone(), *map, grid, Estimator::Gce(*config))
        .gradient(x)?
        .gradient)
}

/// Central stencil of degree `2m`: `f′(x) ≈ Σ_{l≠0} b_l f(x + lδx)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdStencil {
    pub m: usize,
    pub step: f64,
    /// `b_1 … b_m`; `b_{−l} = −b_l` and `b_0 = 0`.
    pub coefficients: Vec<f64>,
    /// `Σ_l |b_l|` over both sides.
    pub one_norm: f64,
}

/// Largest supported stencil half-width.
pub const MAX_STENCIL_HALF_WIDTH: usize = 16;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn fd_stencil(m: usize, step: f64) -> Result<FdStencil> {
    if m == 0 || m > MAX_STENCIL_HALF_WIDTH {
        return invalid(format!(
            "stencil half-width must lie in 1..={MAX_STENCIL_HALF_WIDTH}, got {m}"
        ));
    }
    if !(step > 0.0) || !step.is_finite() {
        return invalid(format!("stencil step must be positive, got {step}"));
    }
    let coefficients: Vec<f64> = (1..=m)
        .map(|l| {
            let sign = if l % 2 == 1 { 1.0 } else { -1.0 };
            sign / (step * l as f64) * binomial(m, l) / binomial(m + l, l)
        })
        .collect();
    // Moments Σ_l b_l (lδx)^p must vanish for even p and odd p ≠ 1 up to 2m.
    for p in 0..=2 * m {
        let (mut sum, mut mag) = (0.0, 0.0);
        for (i, b) in coefficients.iter().enumerate() {
            let l = (i + 1) as f64;
            let term = b * step * l.powi(p as i32);
            let mirrored = if p % 2 == 0 { -term } else { term };
            sum += term + mirrored;
            mag += 2.0 * term.abs();
        }
        let want = if p == 1 { 1.0 } else { 0.0 };
        if (sum - want).abs() > 1e-9 * mag.max(1.0) {
            return invalid(format!("stencil m={m} fails the degree-{p} exactness check"));
        }
    }
    let one_norm = 2.0 * coefficients.iter().map(|b| b.abs()).sum::<f64>();
    Ok(FdStencil {
        m,
        step,
        coefficients,
        one_norm,
    })
}

/// `Σ_l b_l [f(x + lδx e_j) − f(x − lδx e_j)]`. Identical values at mirrored
/// points cancel exactly.
pub fn fd_gradient(f: impl Fn(&[f64]) -> Result<f64>, stencil: &FdStencil, x: &[f64], direction: usize) -> Result<f64> {
    if direction >= x.len() {
        return invalid(format!("direction {direction} out of range for {} parameters", x.len()));
    }
    let mut total = 0.0;
    let mut y = x.to_vec();
    for (i, b) in stencil.coefficients.iter().enumerate() {
        let d = (i + 1) as f64 * stencil.step;
        y[direction] = x[direction] + d;
        let fp = f(&y)?;
        y[direction] = x[direction] - d;
        let fm = f(&y)?;
        total += b * (fp - fm);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    Smooth,
    Fd,
    HellmannFeynman,
}

/// Difference between a gradient and a reference gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub reference: GradientMethod,
    pub max_abs: f64,
    /// `‖g − g_ref‖ / ‖g_ref‖`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub method: GradientMethod,
    pub values: Vec<f64>,
    pub norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    pub validation: Vec<Residual>,
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl GradientReport {
    pub fn new(method: GradientMethod, values: Vec<f64>, energy: Option<f64>) -> Self {
        Self {
            method,
            norm: norm(&values),
            values,
            energy,
            validation: Vec::new(),
        }
    }

    pub fn validate_against(&mut self, reference: &GradientReport) -> Result<&Residual> {
        if reference.values.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                found: reference.values.len(),
            });
        }
        let diff: Vec<f64> = self.values.iter().zip(&reference.values).map(|(a, b)| a - b).collect();
        self.validation.push(Residual {
            reference: reference.method,
            max_abs: diff.iter().fold(0.0_f64, |m, d| m.max(d.abs())),
            relative: norm(&diff) / reference.norm,
        });
        Ok(self.validation.last().expect("just pushed"))
    }
}
