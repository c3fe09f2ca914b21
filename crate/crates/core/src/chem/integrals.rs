//! STO-3G integrals over s-type contracted Gaussians.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::geometry::{dist, Geometry};
use crate::error::{Error, Result};

const STO3G_COEFFS: [f64; 3] = [0.154_328_97, 0.535_328_14, 0.444_634_54];
const H_EXPONENTS: [f64; 3] = [3.425_250_91, 0.623_913_73, 0.168_855_40];
const HE_EXPONENTS: [f64; 3] = [6.362_421_39, 1.158_923_00, 0.313_649_79];

/// Boys function `F₀(t) = ½√(π/t) erf(√t)`.
pub fn boys_f0(t: f64) -> f64 {
    if t < 1e-8 {
        1.0 - t / 3.0 + t * t / 10.0
    } else {
        let s = t.sqrt();
        0.5 * (PI / t).sqrt() * libm::erf(s)
    }
}

/// A normalized contracted s function.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractedS {
    pub center: [f64; 3],
    pub exponents: Vec<f64>,
    /// Contraction coefficients with primitive and overall normalization
    /// folded in.
    pub coefficients: Vec<f64>,
}

impl ContractedS {
    pub fn new(center: [f64; 3], exponents: &[f64], coefficients: &[f64]) -> Self {
        let mut c: Vec<f64> = exponents
            .iter()
            .zip(coefficients)
            .map(|(&a, &d)| d * (2.0 * a / PI).powf(0.75))
            .collect();
        let mut b = Self {
            center,
            exponents: exponents.to_vec(),
            coefficients: c.clone(),
        };
        let norm = overlap(&b, &b).sqrt();
        for v in c.iter_mut() {
            *v /= norm;
        }
        b.coefficients = c;
        b
    }

    fn primitives(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.exponents.iter().copied().zip(self.coefficients.iter().copied())
    }
}

/// STO-3G basis for `geom`: one contracted s function per H or He atom.
pub fn sto3g_basis(geom: &Geometry) -> Result<Vec<ContractedS>> {
    geom.atomic_numbers()
        .iter()
        .zip(geom.coords_bohr())
        .zip(geom.symbols())
        .map(|((&z, &c), sym)| match z {
            1 => Ok(ContractedS::new(c, &H_EXPONENTS, &STO3G_COEFFS)),
            2 => Ok(ContractedS::new(c, &HE_EXPONENTS, &STO3G_COEFFS)),
            _ => Err(Error::UnsupportedElement(sym.clone())),
        })
        .collect()
}

fn gaussian_product(a: f64, ca: &[f64; 3], b: f64, cb: &[f64; 3]) -> (f64, [f64; 3], f64) {
    let p = a + b;
    let center = [0, 1, 2].map(|d| (a * ca[d] + b * cb[d]) / p);
    let k = (-a * b / p * dist(ca, cb).powi(2)).exp();
    (p, center, k)
}

pub fn overlap(f: &ContractedS, g: &ContractedS) -> f64 {
    let mut s = 0.0;
    for (a, ca) in f.primitives() {
        for (b, cb) in g.primitives() {
            let (p, _, k) = gaussian_product(a, &f.center, b, &g.center);
            s += ca * cb * (PI / p).powf(1.5) * k;
        }
    }
    s
}

pub fn kinetic(f: &ContractedS, g: &ContractedS) -> f64 {
    let r2 = dist(&f.center, &g.center).powi(2);
    let mut s = 0.0;
    for (a, ca) in f.primitives() {
        for (b, cb) in g.primitives() {
            let (p, _, k) = gaussian_product(a, &f.center, b, &g.center);
            let mu = a * b / p;
            s += ca * cb * mu * (3.0 - 2.0 * mu * r2) * (PI / p).powf(1.5) * k;
        }
    }
    s
}

/// Attraction to a point charge `z` at `c`.
pub fn nuclear_attraction(f: &ContractedS, g: &ContractedS, z: f64, c: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for (a, ca) in f.primitives() {
        for (b, cb) in g.primitives() {
            let (p, pc, k) = gaussian_product(a, &f.center, b, &g.center);
            s -= ca * cb * z * 2.0 * PI / p * k * boys_f0(p * dist(&pc, c).powi(2));
        }
    }
    s
}

/// Chemist-notation repulsion integral `(fg|hk)`.
pub fn repulsion(f: &ContractedS, g: &ContractedS, h: &ContractedS, k: &ContractedS) -> f64 {
    let mut s = 0.0;
    for (a, ca) in f.primitives() {
        for (b, cb) in g.primitives() {
            let (p, pc, kab) = gaussian_product(a, &f.center, b, &g.center);
            for (c, cc) in h.primitives() {
                for (d, cd) in k.primitives() {
                    let (q, qc, kcd) = gaussian_product(c, &h.center, d, &k.center);
                    let pre = 2.0 * PI.powf(2.5) / (p * q * (p + q).sqrt());
                    let t = p * q / (p + q) * dist(&pc, &qc).powi(2);
                    s += ca * cb * cc * cd * pre * kab * kcd * boys_f0(t);
                }
            }
        }
    }
    s
}

/// Dense chemist-notation two-electron tensor `(ij|kl)` with real-orbital
/// eightfold symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct Eri {
    n: usize,
    data: Vec<f64>,
}

impl Eri {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n.pow(4)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    /// Stores `v` at all eight symmetry-equivalent positions.
    pub fn set_symmetric(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        for (a, b, c, d) in Self::images(i, j, k, l) {
            let x = self.idx(a, b, c, d);
            self.data[x] = v;
        }
    }

    pub fn images(i: usize, j: usize, k: usize, l: usize) -> [(usize, usize, usize, usize); 8] {
        [
            (i, j, k, l),
            (j, i, k, l),
            (i, j, l, k),
            (j, i, l, k),
            (k, l, i, j),
            (l, k, i, j),
            (k, l, j, i),
            (l, k, j, i),
        ]
    }

    /// Largest deviation from eightfold symmetry.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.get(i, j, k, l);
                        for (a, b, c, d) in Self::images(i, j, k, l) {
                            worst = worst.max((self.get(a, b, c, d) - v).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Unique quartets `i ≥ j, k ≥ l, ij ≥ kl`.
    pub fn unique_indices(n: usize) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                for k in 0..=i {
                    let lmax = if k == i { j } else { k };
                    for l in 0..=lmax {
                        out.push((i, j, k, l));
                    }
                }
            }
        }
        out
    }
}

/// Atomic-orbital integrals in bohr/hartree.
#[derive(Debug, Clone, PartialEq)]
pub struct AoIntegrals {
    pub overlap: DMatrix<f64>,
    pub kinetic: DMatrix<f64>,
    pub nuclear: DMatrix<f64>,
    pub eri: Eri,
}

impl AoIntegrals {
    pub fn core_hamiltonian(&self) -> DMatrix<f64> {
        &self.kinetic + &self.nuclear
    }

    pub fn dim(&self) -> usize {
        self.overlap.nrows()
    }
}

/// Overlap, kinetic, nuclear-attraction and repulsion integrals in STO-3G.
pub fn sto3g_integrals(geom: &Geometry) -> Result<AoIntegrals> {
    let basis = sto3g_basis(geom)?;
    let n = basis.len();
    let mut s = DMatrix::zeros(n, n);
    let mut t = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (f, g) = (&basis[i], &basis[j]);
            let sij = if i == j { 1.0 } else { overlap(f, g) };
            let tij = kinetic(f, g);
            let vij: f64 = geom
                .atomic_numbers()
                .iter()
                .zip(geom.coords_bohr())
                .map(|(&z, c)| nuclear_attraction(f, g, z as f64, c))
                .sum();
            for (a, b) in [(i, j), (j, i)] {
                s[(a, b)] = sij;
                t[(a, b)] = tij;
                v[(a, b)] = vij;
            }
        }
    }
    let mut eri = Eri::zeros(n);
    for (i, j, k, l) in Eri::unique_indices(n) {
        let val = repulsion(&basis[i], &basis[j], &basis[k], &basis[l]);
        eri.set_symmetric(i, j, k, l, val);
    }
    Ok(AoIntegrals {
        overlap: s,
        kinetic: t,
        nuclear: v,
        eri,
    })
}

/// Overlap between the basis at `a` and the basis at `b` (same atoms).
pub fn cross_overlap(a: &Geometry, b: &Geometry) -> Result<DMatrix<f64>> {
    let (fa, fb) = (sto3g_basis(a)?, sto3g_basis(b)?);
    if fa.len() != fb.len() {
        return Err(Error::DimensionMismatch {
            expected: fa.len(),
            found: fb.len(),
        });
    }
    Ok(DMatrix::from_fn(fa.len(), fb.len(), |i, j| overlap(&fa[i], &fb[j])))
}
