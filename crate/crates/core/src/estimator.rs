//! Phase estimators over readout distributions: majority rule, circular
//! moments and the smooth generalized circular estimator (GCE).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qpe::{ParentDistribution, ReadoutGrid};

/// Resultant magnitudes below this leave the direction undefined.
pub const MIN_MAGNITUDE: f64 = 1e-12;

/// Largest accepted boxcar steepness.
pub const MAX_STEEPNESS: f64 = 5000.0;

/// Smoothing hyperparameters of the GCE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GceConfig {
    pub temperature: f64,
    pub steepness: f64,
    pub half_width: f64,
}

impl GceConfig {
    pub fn new(temperature: f64, steepness: f64, half_width: f64) -> Result<Self> {
        let c = Self {
            temperature,
            steepness,
            half_width,
        };
        c.validate()?;
        Ok(c)
    }

    /// `T = 0.0035`, `k = 1000`, `h = 8/2^t`.
    pub fn default_for(grid: ReadoutGrid) -> Self {
        Self {
            temperature: 0.0035,
            steepness: 1000.0,
            half_width: (8.0 / grid.size() as f64).min(0.5),
        }
    }

    /// Window given as a number of bitstrings `|𝒢|`, `h = |𝒢|/2^t`.
    pub fn with_window_strings(self, strings: f64, grid: ReadoutGrid) -> Result<Self> {
        Self::new(self.temperature, self.steepness, strings / grid.size() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return invalid(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.steepness > 0.0) || self.steepness > MAX_STEEPNESS {
            return invalid(format!(
                "steepness must lie in (0, {MAX_STEEPNESS}], got {}",
                self.steepness
            ));
        }
        if !(self.half_width > 0.0 && self.half_width <= 0.5) {
            return invalid(format!("half width must lie in (0, 0.5], got {}", self.half_width));
        }
        Ok(())
    }
}

/// First trigonometric moment and its polar parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigMoment {
    pub value: Complex64,
    pub magnitude: f64,
    pub mean_direction: f64,
}

impl TrigMoment {
    pub fn from_value(value: Complex64) -> Result<Self> {
        let magnitude = value.norm();
        if !(magnitude >= MIN_MAGNITUDE) {
            return Err(Error::UndefinedDirection(magnitude));
        }
        Ok(Self {
            value,
            magnitude,
            mean_direction: circular_phase(value),
        })
    }

    /// `{theta_re, theta_im, magnitude, mu, estimator_name}`.
    pub fn record(&self, estimator_name: &str) -> serde_json::Value {
        serde_json::json!({
            "theta_re": self.value.re,
            "theta_im": self.value.im,
            "magnitude": self.magnitude,
            "mu": self.mean_direction,
            "estimator_name": estimator_name,
        })
    }
}

/// `arg(z)/2π` reduced to `[0, 1)`.
pub fn circular_phase(z: Complex64) -> f64 {
    let p = z.arg() / (2.0 * PI);
    let p = p.rem_euclid(1.0);
    if p >= 1.0 {
        0.0
    } else {
        p
    }
}

/// Signed circular difference reduced to `(−0.5, 0.5]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    if d > 0.5 {
        d - 1.0
    } else {
        d
    }
}

fn unit_roots(grid: ReadoutGrid) -> Vec<Complex64> {
    let n = grid.size();
    (0..n)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64))
        .collect()
}

fn resultant(weights: &[f64], roots: &[Complex64]) -> Complex64 {
    weights.iter().zip(roots).map(|(&w, z)| z * w).sum()
}

/// Grid phase of the most probable bitstring; ties go to the lowest index.
pub fn majority_rule(dist: &ParentDistribution) -> f64 {
    let p = dist.probabilities();
    let mut best = 0;
    for (j, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = j;
        }
    }
    dist.grid().phase(best)
}

/// `θ = Σ_j P(j) e^{i2πj/2^t}`.
pub fn cruz_moment(dist: &ParentDistribution) -> Result<TrigMoment> {
    TrigMoment::from_value(resultant(dist.probabilities(), &unit_roots(dist.grid())))
}

/// The same circular average read as an expectation over every peak.
pub fn expectation_moment(dist: &ParentDistribution) -> Result<TrigMoment> {
    cruz_moment(dist)
}

fn softmax_weights(p: &[f64], temperature: f64) -> Vec<f64> {
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s: Vec<f64> = p.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let z: f64 = s.iter().sum();
    for v in s.iter_mut() {
        *v /= z;
    }
    s
}

/// `P′(j) ∝ exp(P(j)/T)`, concentrating on the most probable bitstring as
/// `T → 0`.
pub fn tempered_softmax(dist: &ParentDistribution, temperature: f64) -> Result<ParentDistribution> {
    if !(temperature > 0.0) {
        return invalid(format!("temperature must be positive, got {temperature}"));
    }
    ParentDistribution::new(softmax_weights(dist.probabilities(), temperature), dist.grid())
}

/// Circular weighted mean of a softened distribution.
pub fn peak_location(softened: &ParentDistribution) -> Result<f64> {
    let z = resultant(softened.probabilities(), &unit_roots(softened.grid()));
    let m = z.norm();
    if !(m >= MIN_MAGNITUDE) {
        return Err(Error::UndefinedDirection(m));
    }
    Ok(circular_phase(z))
}

// ln cosh(x) without overflow.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn sech2(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Boxcar weight at signed circular distance `d` from the window center.
pub fn boxcar_at(d: f64, steepness: f64, half_width: f64) -> f64 {
    let k = steepness;
    let a = k * (d + half_width);
    let b = k * (d - half_width);
    if a > 0.0 && b < 0.0 {
        return 0.5 * (a.tanh() - b.tanh());
    }
    // Outside the window: ½[tanh a − tanh b] = ½ sinh(a − b)/(cosh a cosh b)
    // avoids the cancellation of two saturated tanh values.
    let two_kh = 2.0 * k * half_width;
    let ln_sinh = if two_kh > 20.0 {
        two_kh - std::f64::consts::LN_2
    } else {
        two_kh.sinh().ln()
    };
    0.5 * (ln_sinh - ln_cosh(a) - ln_cosh(b)).exp()
}

/// d/dd of [`boxcar_at`].
pub fn boxcar_slope(d: f64, steepness: f64, half_width: f64) -> f64 {
    let k = steepness;
    0.5 * k * (sech2(k * (d + half_width)) - sech2(k * (d - half_width)))
}

/// Boxcar window evaluated with circular distance to `center`.
pub fn boxcar(phase: f64, center: f64, config: &GceConfig) -> f64 {
    boxcar_at(circular_distance(phase, center), config.steepness, config.half_width)
}

/// Intermediate values of one GCE evaluation.
#[derive(Debug, Clone)]
struct GceState {
    roots: Vec<Complex64>,
    softened: Vec<f64>,
    zeta: Complex64,
    distances: Vec<f64>,
    window: Vec<f64>,
    theta: Complex64,
}

fn gce_state(dist: &ParentDistribution, config: &GceConfig) -> Result<GceState> {
    config.validate()?;
    let grid = dist.grid();
    let p = dist.probabilities();
    let roots = unit_roots(grid);
    let softened = softmax_weights(p, config.temperature);
    let zeta = resultant(&softened, &roots);
    if !(zeta.norm() >= MIN_MAGNITUDE) {
        return Err(Error::UndefinedDirection(zeta.norm()));
    }
    let center = circular_phase(zeta);
    let distances: Vec<f64> = (0..grid.size())
        .map(|j| circular_distance(grid.phase(j), center))
        .collect();
    let window: Vec<f64> = distances
        .iter()
        .map(|&d| boxcar_at(d, config.steepness, config.half_width))
        .collect();
    let theta: Complex64 = p
        .iter()
        .zip(&window)
        .zip(&roots)
        .map(|((&pj, &bj), z)| z * (pj * bj))
        .sum();
    Ok(GceState {
        roots,
        softened,
        zeta,
        distances,
        window,
        theta,
    })
}

/// Softmax, peak location, boxcar window, weighted circular sum.
pub fn gce_moment(dist: &ParentDistribution, config: &GceConfig) -> Result<TrigMoment> {
    TrigMoment::from_value(gce_state(dist, config)?.theta)
}

/// GCE moment plus `dμ̃` along each tangent `dP`, propagated analytically
/// through every stage.
pub fn gce_moment_with_tangents(
    dist: &ParentDistribution,
    config: &GceConfig,
    tangents: &[Vec<f64>],
) -> Result<(TrigMoment, Vec<f64>)> {
    let st = gce_state(dist, config)?;
    let moment = TrigMoment::from_value(st.theta)?;
    let p = dist.probabilities();
    let n = p.len();
    let slopes: Vec<f64> = st
        .distances
        .iter()
        .map(|&d| boxcar_slope(d, config.steepness, config.half_width))
        .collect();
    let mut out = Vec::with_capacity(tangents.len());
    for dp in tangents {
        if dp.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: dp.len(),
            });
        }
        // Softmax Jacobian: dS = S ⊙ (dP − ⟨S, dP⟩)/T.
        let mean: f64 = st.softened.iter().zip(dp).map(|(s, d)| s * d).sum();
        let dzeta: Complex64 = st
            .softened
            .iter()
            .zip(dp)
            .zip(&st.roots)
            .map(|((&s, &d), z)| z * (s * (d - mean) / config.temperature))
            .sum();
        let dcenter = (dzeta / st.zeta).im / (2.0 * PI);
        let dtheta: Complex64 = (0..n)
            .map(|j| st.roots[j] * (-slopes[j] * dcenter * p[j] + st.window[j] * dp[j]))
            .sum();
        out.push((dtheta / st.theta).im / (2.0 * PI));
    }
    Ok((moment, out))
}

/// Post-processing choice for turning a distribution into a phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    Gce(GceConfig),
    Majority,
    Expectation,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gce(_) => "gce",
            Self::Majority => "majority",
            Self::Expectation => "expectation",
        }
    }

    pub fn phase(&self, dist: &ParentDistribution) -> Result<f64> {
        match self {
            Self::Gce(c) => Ok(gce_moment(dist, c)?.mean_direction),
            Self::Majority => Ok(majority_rule(dist)),
            Self::Expectation => Ok(expectation_moment(dist)?.mean_direction),
        }
    }
}
