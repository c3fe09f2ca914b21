//! Closed-form GCE statistics and query-cost calculators.
//!
//! Moments here are expressed relative to the true eigenphase: the common
//! factor `e^{i2πφ}` is dropped, so `arg(θ̃)/2π` is directly the estimator
//! bias and `|θ̃|` the concentration.

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::TrigMoment;
use crate::qpe::MAX_READOUT_QUBITS;

/// Gauss–Legendre points per panel in [`theta_numeric`].
const PANEL_ORDER: usize = 12;

/// Relative agreement between successive panel refinements.
const QUADRATURE_TOL: f64 = 1e-12;

/// Ceil guard: `ceil(r·(1 − 1e-12))` keeps exact ratios such as
/// `1e-4/1e-6` from rounding up to the next integer.
const CEIL_GUARD: f64 = 1e-12;

fn grid_size(t: u32) -> Result<f64> {
    if t == 0 || t > MAX_READOUT_QUBITS {
        return invalid(format!("t must lie in 1..={MAX_READOUT_QUBITS}, got {t}"));
    }
    Ok((1u64 << t) as f64)
}

fn check_window(h: f64) -> Result<()> {
    if !(h > 0.0 && h <= 0.5) {
        return invalid(format!("half width must lie in (0, 0.5], got {h}"));
    }
    Ok(())
}

fn check_overlap(overlap: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&overlap) {
        return invalid(format!("overlap must lie in [0, 1], got {overlap}"));
    }
    Ok(())
}

/// `sin(2πx)` with exact zeros at integer and half-integer `x`.
fn sin_2pi(x: f64) -> f64 {
    let r = x - x.round();
    if r == 0.0 || r.abs() == 0.5 {
        0.0
    } else {
        (2.0 * PI * r).sin()
    }
}

fn expi_2pi(x: f64) -> Complex64 {
    let r = x - x.round();
    Complex64::from_polar(1.0, 2.0 * PI * r)
}

/// Fejér kernel `sin²(Nπy)/sin²(πy)`, equal to `N²` at `y = 0`.
fn fejer(y: f64, n: f64) -> f64 {
    let s = (PI * y).sin();
    if s == 0.0 {
        return n * n;
    }
    // N·y is exact for N a power of two.
    let ny = (n * y).rem_euclid(2.0);
    let num = (PI * ny).sin();
    (num / s).powi(2)
}

/// Number of `(n, n′)` pairs in `[0, N)²` with `n + n′ − N = m`.
fn pair_count(m: i64, n: i64) -> f64 {
    if m < 0 {
        (n + m + 1) as f64
    } else {
        (n - 1 - m) as f64
    }
}

fn closed_bracket(n: i64, dphi: f64, h: f64) -> Complex64 {
    // Linear term from n + n′ = N, then the grouped double sum.
    let mut sum = Complex64::new(0.0, 0.0);
    for m in -n..=(n - 2) {
        if m == 0 {
            continue;
        }
        let s = sin_2pi(m as f64 * h);
        if s == 0.0 {
            continue;
        }
        sum += expi_2pi(m as f64 * dphi) * (pair_count(m, n) * s / m as f64);
    }
    Complex64::new(2.0 * (n - 1) as f64 * h, 0.0) + sum / PI
}

/// Window moment of a single eigenstate in the continuum limit, from the
/// closed form of the window integral.
///
/// `dphi` is the true phase minus the window center, `h` the half width and
/// `overlap` the weight `|c_u|²`. Cost is `O(2^t)`.
pub fn theta_closed_form(t: u32, dphi: f64, h: f64, overlap: f64) -> Result<Complex64> {
    Ok(MomentAnalysis::new(t, dphi, h, overlap)?.theta_closed)
}

/// Same moment by adaptive composite Gauss–Legendre quadrature of the
/// window integral.
pub fn theta_numeric(t: u32, dphi: f64, h: f64, overlap: f64) -> Result<Complex64> {
    let n = grid_size(t)?;
    check_window(h)?;
    check_overlap(overlap)?;
    if !dphi.is_finite() {
        return invalid("mismatch must be finite");
    }
    let rule = GaussLegendre::new(PANEL_ORDER.try_into().expect("nonzero order"));
    let (a, b) = (dphi - h, dphi + h);
    let integrate = |panels: usize| -> Complex64 {
        let w = (b - a) / panels as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for p in 0..panels {
            let lo = a + p as f64 * w;
            let re = rule.integrate(lo, lo + w, |y| fejer(y, n) * (2.0 * PI * y).cos());
            let im = rule.integrate(lo, lo + w, |y| -fejer(y, n) * (2.0 * PI * y).sin());
            acc += Complex64::new(re, im);
        }
        acc
    };
    // Start at about four panels per kernel oscillation.
    let mut panels = ((b - a) * 4.0 * n).ceil().max(8.0) as usize;
    let mut prev = integrate(panels);
    for _ in 0..6 {
        panels *= 2;
        let next = integrate(panels);
        let diff = (next - prev).norm();
        if diff <= QUADRATURE_TOL * next.norm().max(1e-300) || next.norm() == 0.0 {
            return Ok(next * (overlap / n));
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "window integral at t={t}, dphi={dphi}, h={h} did not settle"
    )))
}

/// Small-`h`, small-`Δφ` expansion of the window moment:
/// `2h·|c_u|²·B` with `B` from [`bias_term`]. Only meaningful while
/// `h ≪ 1/2^t`; for wider windows it overshoots without bound.
pub fn theta_narrow_window_expansion(t: u32, dphi: f64, h: f64, overlap: f64) -> Result<Complex64> {
    let n = grid_size(t)?;
    check_window(h)?;
    check_overlap(overlap)?;
    let b = Complex64::new(n + (n - 1.0) / n, -2.0 * PI * dphi * n);
    Ok(b * (2.0 * h * overlap))
}

/// Modulus and angle of `B = |B|e^{−iα} = (1 − i2πΔφ)2^t + (2^t − 1)/2^t`.
pub fn bias_term(t: u32, dphi: f64) -> (f64, f64) {
    let n = (1u64 << t.min(63)) as f64;
    let re = n + (n - 1.0) / n;
    let im = -2.0 * PI * dphi * n;
    (re.hypot(im), (-im).atan2(re))
}

/// Analytic description of one window moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentAnalysis {
    pub theta_closed: Complex64,
    /// `|θ̃|` from the modulus of the bracket, exact in the full-window case.
    pub magnitude: f64,
    pub bias_magnitude: f64,
    pub bias_phase: f64,
    pub half_width: f64,
    pub mismatch: f64,
    pub overlap: f64,
}

impl MomentAnalysis {
    pub fn new(t: u32, dphi: f64, h: f64, overlap: f64) -> Result<Self> {
        let n = grid_size(t)?;
        check_window(h)?;
        check_overlap(overlap)?;
        if !dphi.is_finite() {
            return invalid("mismatch must be finite");
        }
        let bracket = closed_bracket(1i64 << t, dphi, h);
        let (bias_magnitude, bias_phase) = bias_term(t, dphi);
        Ok(Self {
            theta_closed: bracket * (overlap / n),
            magnitude: overlap * bracket.norm() / n,
            bias_magnitude,
            bias_phase,
            half_width: h,
            mismatch: dphi,
            overlap,
        })
    }
}

/// Circular variance `1 − |θ̃|`.
pub fn variance_theta(magnitude: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&magnitude) {
        return invalid(format!("magnitude must lie in [0, 1], got {magnitude}"));
    }
    Ok(1.0 - magnitude)
}

/// `(1 − |θ̃|)/(8π²|θ̃|²)`.
pub fn variance_mu_from_magnitude(magnitude: f64) -> Result<f64> {
    let v = variance_theta(magnitude)?;
    if magnitude == 0.0 {
        return Err(Error::UndefinedDirection(0.0));
    }
    Ok(v / (8.0 * PI * PI * magnitude * magnitude))
}

/// Error-propagated variance of `μ̃ = arg(θ̃)/2π`, closed form.
pub fn variance_mu(theta: &TrigMoment) -> Result<f64> {
    variance_mu_from_magnitude(theta.magnitude)
}

/// Same variance assembled term by term: `½(|∂μ/∂Re|² + |∂μ/∂Im|²)·Var(θ̃)`.
pub fn variance_mu_partials(theta: Complex64) -> Result<f64> {
    let r2 = theta.norm_sqr();
    if r2 == 0.0 {
        return Err(Error::UndefinedDirection(0.0));
    }
    let var = variance_theta(theta.norm())?;
    let d_re = -theta.im / (2.0 * PI * r2);
    let d_im = theta.re / (2.0 * PI * r2);
    Ok(0.5 * (d_re * d_re * var + d_im * d_im * var))
}

fn guarded_ceil(r: f64) -> Result<u64> {
    if !r.is_finite() || r > u64::MAX as f64 {
        return invalid(format!("count {r} is not representable"));
    }
    Ok(((r * (1.0 - CEIL_GUARD)).ceil() as u64).max(1))
}

/// Chebyshev sample count `ceil(Var(μ̃)/ε²)`, at least 1.
pub fn chebyshev_samples(variance_mu: f64, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0) {
        return invalid(format!("epsilon must be positive, got {epsilon}"));
    }
    if !(variance_mu >= 0.0) {
        return invalid(format!("variance must be non-negative, got {variance_mu}"));
    }
    guarded_ceil(variance_mu / (epsilon * epsilon))
}

/// Shots for one gradient component, `ceil(Var(μ̃)‖y‖₁²/ε²)`, at least 1.
pub fn gradient_shot_budget(variance_mu: f64, stencil_one_norm: f64, epsilon: f64) -> Result<u64> {
    if !(stencil_one_norm >= 0.0) {
        return invalid(format!("stencil norm must be non-negative, got {stencil_one_norm}"));
    }
    chebyshev_samples(variance_mu * stencil_one_norm * stencil_one_norm, epsilon)
}

/// Query count `G·t·M·N` with its factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCost {
    pub gates: u64,
    pub t: u64,
    pub parameters: u64,
    pub shots: u64,
    pub total: u64,
}

pub fn total_cost(gates: u64, t: u64, parameters: u64, shots: u64) -> Result<QueryCost> {
    if gates == 0 || t == 0 || parameters == 0 || shots == 0 {
        return invalid("cost factors must all be at least 1");
    }
    let total = gates
        .checked_mul(t)
        .and_then(|v| v.checked_mul(parameters))
        .and_then(|v| v.checked_mul(shots))
        .ok_or_else(|| Error::InvalidInput("query count overflows u64".into()))?;
    Ok(QueryCost {
        gates,
        t,
        parameters,
        shots,
        total,
    })
}

/// Full width at half maximum of the readout kernel, `1/2^t`.
pub fn fwhm(t: u32) -> f64 {
    1.0 / (1u64 << t.min(63)) as f64
}

/// Fraction of the single-eigenstate kernel mass inside a window of half
/// width `h` centered on the true phase (continuum limit).
pub fn window_coverage(t: u32, h: f64) -> Result<f64> {
    let n = grid_size(t)?;
    check_window(h)?;
    let ni = 1i64 << t;
    let mut s = 0.0;
    for k in 1..ni {
        s += (ni - k) as f64 * sin_2pi(k as f64 * h) / k as f64;
    }
    Ok(2.0 * h + 2.0 * s / (PI * n))
}

/// Smallest `h = j/2^t` whose window holds at least `fraction` of the peak.
pub fn window_for_coverage(t: u32, fraction: f64) -> Result<f64> {
    let n = grid_size(t)?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return invalid(format!("fraction must lie in (0, 1), got {fraction}"));
    }
    let top = (n / 2.0) as u64;
    let cover = |j: u64| window_coverage(t, j as f64 / n);
    if cover(top)? < fraction {
        return invalid(format!("fraction {fraction} is unreachable at t={t}"));
    }
    // Coverage grows with h, so bisect over j.
    let (mut lo, mut hi) = (0u64, top);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cover(mid)? >= fraction {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi as f64 / n)
}

/// Sampling and query costs for one estimate and its gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub t: u32,
    pub epsilon: f64,
    pub gates: u64,
    pub parameters: u64,
    pub stencil_one_norm: f64,
    pub magnitude: f64,
    pub variance_theta: f64,
    pub variance_mu: f64,
    pub n_samples_estimate: u64,
    pub n_shots_gradient: u64,
    pub total_queries: u64,
    pub breakdown: QueryCost,
}

impl CostReport {
    /// `epsilon` is in phase units; `magnitude` is `|θ̃|` of the window
    /// moment, e.g. from [`MomentAnalysis`].
    pub fn compute(
        t: u32,
        epsilon: f64,
        gates: u64,
        parameters: u64,
        stencil_one_norm: f64,
        magnitude: f64,
    ) -> Result<Self> {
        grid_size(t)?;
        let variance_theta = variance_theta(magnitude)?;
        let variance_mu = variance_mu_from_magnitude(magnitude)?;
        let n_samples_estimate = chebyshev_samples(variance_mu, epsilon)?;
        let n_shots_gradient = gradient_shot_budget(variance_mu, stencil_one_norm, epsilon)?;
        let breakdown = total_cost(gates, t as u64, parameters, n_shots_gradient)?;
        Ok(Self {
            t,
            epsilon,
            gates,
            parameters,
            stencil_one_norm,
            magnitude,
            variance_theta,
            variance_mu,
            n_samples_estimate,
            n_shots_gradient,
            total_queries: breakdown.total,
            breakdown,
        })
    }
}
