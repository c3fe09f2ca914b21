//! Finite-shot emulation of QPE readouts.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::qpe::{ParentDistribution, ReadoutGrid};

/// Name of the generator recorded next to every sampled artifact.
pub const RNG_NAME: &str = "ChaCha20 (rand_chacha 0.9)";

/// Bitstring counts from a finite number of shots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    counts: Vec<u64>,
    shots: u64,
    seed: u64,
    grid: ReadoutGrid,
}

impl EmpiricalDistribution {
    pub fn from_counts(counts: Vec<u64>, grid: ReadoutGrid, seed: u64) -> Result<Self> {
        if counts.len() != grid.size() {
            return invalid(format!("{} counts for a grid of size {}", counts.len(), grid.size()));
        }
        let shots: u64 = counts.iter().sum();
        if shots == 0 {
            return invalid("empirical distribution needs at least one shot");
        }
        Ok(Self {
            counts,
            shots,
            seed,
            grid,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> ReadoutGrid {
        self.grid
    }

    /// CSV with columns `index,count,frequency`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,count,frequency")?;
        for (j, &c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{:e}", j, c, c as f64 / self.shots as f64)?;
        }
        Ok(())
    }

    /// JSON sidecar recording how the counts were produced.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "shots": self.shots,
            "seed": self.seed,
            "rng": RNG_NAME,
            "t": self.grid.t(),
        })
    }
}

/// Multinomial draw of `shots` readouts by inverse CDF.
pub fn sample(dist: &ParentDistribution, shots: u64, seed: u64) -> Result<EmpiricalDistribution> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    sample_with(dist, shots, seed, &mut rng)
}

/// As [`sample`] but drawing from a caller-owned generator; `seed` is only
/// recorded.
pub fn sample_with<R: Rng>(
    dist: &ParentDistribution,
    shots: u64,
    seed: u64,
    rng: &mut R,
) -> Result<EmpiricalDistribution> {
    if shots == 0 {
        return invalid("shots must be at least 1");
    }
    let p = dist.probabilities();
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &v in p {
        acc += v;
        cdf.push(acc);
    }
    let total = acc;
    // Last index with positive probability absorbs rounding at the top.
    let last = p.iter().rposition(|&v| v > 0.0).unwrap_or(0);
    let mut counts = vec![0u64; p.len()];
    for _ in 0..shots {
        let u: f64 = rng.random::<f64>() * total;
        let j = cdf.partition_point(|&c| c <= u).min(last);
        counts[j] += 1;
    }
    EmpiricalDistribution::from_counts(counts, dist.grid(), seed)
}

/// `counts / shots`.
pub fn frequencies(emp: &EmpiricalDistribution) -> ParentDistribution {
    let n = emp.shots as f64;
    let p: Vec<f64> = emp.counts.iter().map(|&c| c as f64 / n).collect();
    ParentDistribution::new(p, emp.grid).expect("frequencies of a valid count vector")
}
