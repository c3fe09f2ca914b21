//! Exact QPE readout distributions: the spectral kernel formula and a
//! statevector circuit simulation, plus the energy/phase map.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{self, EigenSystem, HermitianOperator, StateVector};

/// Largest readout register.
pub const MAX_READOUT_QUBITS: u32 = 24;

/// Largest readout plus system register simulated as a statevector.
pub const MAX_CIRCUIT_QUBITS: u32 = 24;

/// Weights below this are treated as absent when checking aliasing.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// The `2^t` readout values `j / 2^t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadoutGrid {
    t: u32,
}

impl ReadoutGrid {
    pub fn new(t: u32) -> Result<Self> {
        if !(1..=MAX_READOUT_QUBITS).contains(&t) {
            return invalid(format!("readout qubits t = {t} outside 1..={MAX_READOUT_QUBITS}"));
        }
        Ok(Self { t })
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn size(&self) -> usize {
        1usize << self.t
    }

    pub fn phase(&self, j: usize) -> f64 {
        j as f64 / self.size() as f64
    }
}

/// Affine energy-to-phase map `φ = m + (1 − 2m)(E − E_min)/ΔE`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMap {
    pub e_min: f64,
    pub span: f64,
    pub margin: f64,
}

impl PhaseMap {
    pub const DEFAULT_MARGIN: f64 = 0.05;

    pub fn new(e_min: f64, span: f64, margin: f64) -> Result<Self> {
        if !(span > 0.0) || !span.is_finite() || !e_min.is_finite() {
            return invalid(format!("phase map needs a finite positive span, got {span}"));
        }
        if !(0.0..0.5).contains(&margin) {
            return invalid(format!("phase map margin {margin} outside [0, 0.5)"));
        }
        Ok(Self { e_min, span, margin })
    }

    /// Map covering `[lo, hi]` widened by `padding` hartree on each side.
    pub fn covering(lo: f64, hi: f64, padding: f64, margin: f64) -> Result<Self> {
        if hi < lo || padding < 0.0 {
            return invalid("phase map bounds must satisfy lo <= hi and padding >= 0");
        }
        let span = (hi - lo) + 2.0 * padding;
        Self::new(lo - padding, if span > 0.0 { span } else { 1.0 }, margin)
    }

    /// Phase per hartree.
    pub fn scale(&self) -> f64 {
        (1.0 - 2.0 * self.margin) / self.span
    }

    pub fn contains(&self, e: f64) -> bool {
        e >= self.e_min && e <= self.e_min + self.span
    }

    pub fn phase_of_energy(&self, e: f64) -> Result<f64> {
        if !self.contains(e) {
            return Err(Error::Aliasing {
                energy: e,
                lo: self.e_min,
                hi: self.e_min + self.span,
            });
        }
        Ok(self.phase_unchecked(e))
    }

    /// The affine map without the span check.
    pub fn phase_unchecked(&self, e: f64) -> f64 {
        self.margin + self.scale() * (e - self.e_min)
    }

    pub fn energy_of_phase(&self, phi: f64) -> f64 {
        self.e_min + (phi - self.margin) / self.scale()
    }
}

/// Probability over the readout bitstrings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentDistribution {
    probabilities: Vec<f64>,
    grid: ReadoutGrid,
}

impl ParentDistribution {
    pub fn new(probabilities: Vec<f64>, grid: ReadoutGrid) -> Result<Self> {
        if probabilities.len() != grid.size() {
            return Err(Error::DimensionMismatch {
                expected: grid.size(),
                found: probabilities.len(),
            });
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0)) {
            return invalid(format!("negative or NaN probability {p}"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return invalid(format!("probabilities sum to {total}"));
        }
        Ok(Self { probabilities, grid })
    }

    pub fn one_hot(j: usize, grid: ReadoutGrid) -> Result<Self> {
        if j >= grid.size() {
            return invalid(format!("index {j} outside grid of size {}", grid.size()));
        }
        let mut p = vec![0.0; grid.size()];
        p[j] = 1.0;
        Ok(Self { probabilities: p, grid })
    }

    pub fn uniform(grid: ReadoutGrid) -> Self {
        let n = grid.size();
        Self {
            probabilities: vec![1.0 / n as f64; n],
            grid,
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn grid(&self) -> ReadoutGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Cyclic shift by `m` grid points.
    pub fn rotated(&self, m: usize) -> Self {
        let n = self.len();
        let mut p = vec![0.0; n];
        for (j, &v) in self.probabilities.iter().enumerate() {
            p[(j + m) % n] = v;
        }
        Self {
            probabilities: p,
            grid: self.grid,
        }
    }

    /// CSV with columns `index,phase,probability`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,phase,probability")?;
        for (j, p) in self.probabilities.iter().enumerate() {
            writeln!(w, "{},{},{:e}", j, self.grid.phase(j), p)?;
        }
        Ok(())
    }
}

/// Offset `φ·2^t − j` in grid units, reduced to `(−2^{t−1}, 2^{t−1}]`.
pub fn grid_offset(phi: f64, j: usize, grid: ReadoutGrid) -> f64 {
    let n = grid.size() as f64;
    let mut s = (phi * n - j as f64) % n;
    if s <= -n / 2.0 {
        s += n;
    } else if s > n / 2.0 {
        s -= n;
    }
    s
}

// Below |π s| = SERIES_CUTOFF the Dirichlet ratio is evaluated by its Taylor
// series to avoid cancellation in the derivative.
const SERIES_CUTOFF: f64 = 1e-2;

fn dirichlet_series(u: f64, n: f64) -> (f64, f64) {
    let a = (n * n - 1.0) / 6.0;
    let b = (n * n - 1.0) * (3.0 * n * n - 7.0) / 360.0;
    let u2 = u * u;
    (1.0 - a * u2 + b * u2 * u2, -2.0 * a * u + 4.0 * b * u2 * u)
}

/// QPE kernel: probability of reading `j` for eigenphase `phi_u`.
pub fn kernel_probability(phi_u: f64, j: usize, grid: ReadoutGrid) -> f64 {
    let s = grid_offset(phi_u, j, grid);
    if s == 0.0 {
        return 1.0;
    }
    let r = s - s.round();
    if r == 0.0 {
        return 0.0;
    }
    let n = grid.size() as f64;
    if (PI * s).abs() < SERIES_CUTOFF {
        let (f, _) = dirichlet_series(PI * s / n, n);
        return f * f;
    }
    let num = (PI * r).sin();
    let den = n * (PI * s / n).sin();
    (num / den).powi(2)
}

/// Derivative of [`kernel_probability`] with respect to `phi_u`.
pub fn kernel_derivative(phi_u: f64, j: usize, grid: ReadoutGrid) -> f64 {
    let s = grid_offset(phi_u, j, grid);
    let n = grid.size() as f64;
    if (PI * s).abs() < SERIES_CUTOFF {
        let (f, df) = dirichlet_series(PI * s / n, n);
        return 2.0 * f * df * PI;
    }
    let r = s - s.round();
    let x = PI * s / n;
    let (sx, cx) = x.sin_cos();
    let s2r = (2.0 * PI * r).sin();
    let sr2 = (PI * r).sin().powi(2);
    let dk_ds = PI / (n * n) * (s2r / (sx * sx) - 2.0 / n * sr2 * cx / (sx * sx * sx));
    dk_ds * n
}

/// `P(j) = Σ_u w_u K(φ_u, j)`.
pub fn spectral_distribution(phases: &[f64], weights: &[f64], grid: ReadoutGrid) -> Result<ParentDistribution> {
    check_spectral_inputs(phases, weights)?;
    let n = grid.size();
    let mut p = vec![0.0; n];
    for (&phi, &w) in phases.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (j, pj) in p.iter_mut().enumerate() {
            *pj += w * kernel_probability(phi, j, grid);
        }
    }
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    ParentDistribution::new(p, grid)
}

pub(crate) fn check_spectral_inputs(phases: &[f64], weights: &[f64]) -> Result<()> {
    if phases.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: phases.len(),
            found: weights.len(),
        });
    }
    if let Some(p) = phases.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return invalid(format!("phase {p} outside [0, 1)"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return invalid(format!("negative weight {w}"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::WeightSum(total));
    }
    Ok(())
}

/// Eigenphases under `map`, failing when a populated level falls outside
/// the span. Unpopulated levels are mapped without the check and wrapped.
pub fn mapped_phases(eig: &EigenSystem, weights: &[f64], map: &PhaseMap) -> Result<Vec<f64>> {
    eig.eigenvalues
        .iter()
        .zip(weights)
        .map(|(&e, &w)| {
            if w > WEIGHT_FLOOR {
                map.phase_of_energy(e)
            } else {
                Ok(map.phase_unchecked(e).rem_euclid(1.0))
            }
        })
        .collect()
}

/// Spectral-path distribution for state `psi` evolving under `h`.
pub fn exact_distribution(
    h: &HermitianOperator,
    psi: &StateVector,
    map: &PhaseMap,
    grid: ReadoutGrid,
) -> Result<ParentDistribution> {
    let eig = spectral::eigendecompose(h)?;
    let w = spectral::overlaps(psi, &eig)?;
    let phases = mapped_phases(&eig, &w, map)?;
    spectral_distribution(&phases, &w, grid)
}

/// Statevector simulation of the QPE circuit: Hadamards, controlled
/// `U^{2^q}`, inverse QFT, readout marginal.
pub fn circuit_distribution(
    h: &HermitianOperator,
    psi: &StateVector,
    map: &PhaseMap,
    grid: ReadoutGrid,
) -> Result<ParentDistribution> {
    let d = h.dim();
    if !d.is_power_of_two() {
        return invalid(format!("system dimension {d} is not a power of two"));
    }
    let n_sys = d.trailing_zeros();
    let t = grid.t();
    if t + n_sys > MAX_CIRCUIT_QUBITS {
        return Err(Error::RegisterTooLarge {
            qubits: (t + n_sys) as usize,
            limit: MAX_CIRCUIT_QUBITS as usize,
        });
    }
    if psi.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: psi.dim(),
        });
    }
    psi.require_normalized(1e-10)?;
    let eig = spectral::eigendecompose(h)?;
    let w = spectral::overlaps(psi, &eig)?;
    let phases = mapped_phases(&eig, &w, map)?;

    let n = grid.size();
    let mut state = vec![Complex64::new(0.0, 0.0); n * d];
    state[..d].copy_from_slice(psi.amplitudes().as_slice());
    for q in 0..t {
        hadamard(&mut state, d, q);
    }
    for q in 0..t {
        let power = (1u64 << q) as f64;
        let mut scaled = eig.eigenvectors.clone();
        for (u, &phi) in phases.iter().enumerate() {
            let z = Complex64::from_polar(1.0, 2.0 * PI * (power * phi).rem_euclid(1.0));
            scaled.column_mut(u).apply(|a| *a *= z);
        }
        let u = scaled * eig.eigenvectors.adjoint();
        let mask = 1usize << q;
        let mut buf = vec![Complex64::new(0.0, 0.0); d];
        for k in (0..n).filter(|k| k & mask != 0) {
            let block = &mut state[k * d..(k + 1) * d];
            for (r, out) in buf.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, a) in block.iter().enumerate() {
                    acc += u[(r, c)] * a;
                }
                *out = acc;
            }
            block.copy_from_slice(&buf);
        }
    }
    inverse_qft(&mut state, d, t);
    let mut p: Vec<f64> = state
        .chunks(d)
        .map(|block| block.iter().map(|a| a.norm_sqr()).sum())
        .collect();
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    ParentDistribution::new(p, grid)
}

fn hadamard(state: &mut [Complex64], d: usize, q: u32) {
    let mask = 1usize << q;
    let n = state.len() / d;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for k in (0..n).filter(|k| k & mask == 0) {
        let k1 = k | mask;
        for i in 0..d {
            let a = state[k * d + i];
            let b = state[k1 * d + i];
            state[k * d + i] = (a + b) * s;
            state[k1 * d + i] = (a - b) * s;
        }
    }
}

fn controlled_phase(state: &mut [Complex64], d: usize, q: u32, r: u32, angle: f64) {
    let mask = (1usize << q) | (1usize << r);
    let n = state.len() / d;
    let z = Complex64::from_polar(1.0, angle);
    for k in (0..n).filter(|k| k & mask == mask) {
        for a in &mut state[k * d..(k + 1) * d] {
            *a *= z;
        }
    }
}

fn reverse_bits(state: &mut [Complex64], d: usize, t: u32) {
    let n = state.len() / d;
    for k in 0..n {
        let rk = k.reverse_bits() >> (usize::BITS - t);
        if rk > k {
            for i in 0..d {
                state.swap(k * d + i, rk * d + i);
            }
        }
    }
}

/// Adjoint of the textbook QFT gate sequence on the readout bits, mapping
/// `Σ_k e^{2πi k φ}|k⟩` to a peak at `j ≈ 2^t φ`.
fn inverse_qft(state: &mut [Complex64], d: usize, t: u32) {
    reverse_bits(state, d, t);
    for q in 0..t {
        for r in 0..q {
            let angle = -2.0 * PI / (1u64 << (q - r + 1)) as f64;
            controlled_phase(state, d, q, r, angle);
        }
        hadamard(state, d, q);
    }
}

#[cfg(test)]
pub(crate) fn qft_for_tests(state: &mut [Complex64], d: usize, t: u32, inverse: bool) {
    if inverse {
        inverse_qft(state, d, t);
    } else {
        for q in (0..t).rev() {
            hadamard(state, d, q);
            for r in (0..q).rev() {
                let angle = 2.0 * PI / (1u64 << (q - r + 1)) as f64;
                controlled_phase(state, d, q, r, angle);
            }
        }
        reverse_bits(state, d, t);
    }
}
