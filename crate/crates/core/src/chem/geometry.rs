//! Nuclear geometries: XYZ input/output, unit conversion, nuclear repulsion.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Bohr radius in Å (CODATA 2018).
pub const BOHR_IN_ANGSTROM: f64 = 0.529_177_210_903;
pub const ANGSTROM_TO_BOHR: f64 = 1.0 / BOHR_IN_ANGSTROM;

/// Closest allowed approach of two nuclei, in bohr.
const MIN_SEPARATION: f64 = 1e-6;

const ELEMENTS: [&str; 10] = ["H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne"];

/// Atomic number of a first- or second-row element symbol.
pub fn atomic_number(symbol: &str) -> Option<u32> {
    ELEMENTS
        .iter()
        .position(|e| e.eq_ignore_ascii_case(symbol))
        .map(|i| i as u32 + 1)
}

/// Atoms, positions and electronic charge state.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    symbols: Vec<String>,
    numbers: Vec<u32>,
    /// Positions in bohr.
    coords: Vec<[f64; 3]>,
    charge: i32,
    multiplicity: u32,
}

impl Geometry {
    /// Positions given in Å.
    pub fn new(symbols: &[&str], coords_angstrom: &[[f64; 3]], charge: i32, multiplicity: u32) -> Result<Self> {
        let bohr: Vec<[f64; 3]> = coords_angstrom
            .iter()
            .map(|c| c.map(|v| v * ANGSTROM_TO_BOHR))
            .collect();
        Self::from_bohr(symbols, &bohr, charge, multiplicity)
    }

    pub fn from_bohr(symbols: &[&str], coords_bohr: &[[f64; 3]], charge: i32, multiplicity: u32) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Geometry("at least one atom is required".into()));
        }
        if symbols.len() != coords_bohr.len() {
            return Err(Error::Geometry(format!(
                "{} symbols for {} positions",
                symbols.len(),
                coords_bohr.len()
            )));
        }
        let mut numbers = Vec::with_capacity(symbols.len());
        for s in symbols {
            numbers.push(atomic_number(s).ok_or_else(|| Error::Geometry(format!("unknown element {s}")))?);
        }
        if coords_bohr.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("non-finite coordinate".into()));
        }
        for i in 0..coords_bohr.len() {
            for j in 0..i {
                let d = dist(&coords_bohr[i], &coords_bohr[j]);
                if d < MIN_SEPARATION {
                    return Err(Error::Geometry(format!("atoms {j} and {i} are {d:e} bohr apart")));
                }
            }
        }
        let g = Self {
            symbols: symbols.iter().map(|s| canonical(s)).collect(),
            numbers,
            coords: coords_bohr.to_vec(),
            charge,
            multiplicity,
        };
        let ne = g.nuclear_charge() as i64 - charge as i64;
        if ne < 0 {
            return Err(Error::Geometry(format!("charge {charge} leaves {ne} electrons")));
        }
        if multiplicity == 0 || (multiplicity as i64 - 1) > ne || (ne - (multiplicity as i64 - 1)) % 2 != 0 {
            return Err(Error::Geometry(format!(
                "multiplicity {multiplicity} is impossible with {ne} electrons"
            )));
        }
        Ok(g)
    }

    /// Parses an XYZ file: atom count, comment line, then `El x y z` in Å.
    /// `charge=` and `mult=` tokens on the comment line set the charge state.
    pub fn from_xyz(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let count: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::Geometry("first XYZ line must be the atom count".into()))?;
        let comment = lines.next().unwrap_or("");
        let mut charge = 0;
        let mut mult = None;
        for tok in comment.split_whitespace() {
            if let Some(v) = tok.strip_prefix("charge=") {
                charge = v.parse().map_err(|_| Error::Geometry(format!("bad charge {v}")))?;
            } else if let Some(v) = tok.strip_prefix("mult=") {
                mult = Some(
                    v.parse()
                        .map_err(|_| Error::Geometry(format!("bad multiplicity {v}")))?,
                );
            }
        }
        let mut symbols = Vec::with_capacity(count);
        let mut coords = Vec::with_capacity(count);
        for (k, line) in lines.filter(|l| !l.trim().is_empty()).take(count).enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 4 {
                return Err(Error::Geometry(format!("atom line {} is incomplete", k + 1)));
            }
            let mut c = [0.0; 3];
            for (d, v) in c.iter_mut().zip(&f[1..4]) {
                *d = v
                    .parse()
                    .map_err(|_| Error::Geometry(format!("bad coordinate {v} on atom line {}", k + 1)))?;
            }
            symbols.push(f[0].to_string());
            coords.push(c);
        }
        if symbols.len() != count {
            return Err(Error::Geometry(format!(
                "expected {count} atoms, found {}",
                symbols.len()
            )));
        }
        let refs: Vec<&str> = symbols.iter().map(String::as_str).collect();
        let ne = refs.iter().filter_map(|s| atomic_number(s)).sum::<u32>() as i64 - charge as i64;
        let mult = mult.unwrap_or(if ne.rem_euclid(2) == 0 { 1 } else { 2 });
        Self::new(&refs, &coords, charge, mult)
    }

    /// XYZ text in Å, with the charge state on the comment line.
    pub fn to_xyz(&self, comment: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.len());
        let _ = writeln!(s, "{comment} charge={} mult={}", self.charge, self.multiplicity);
        for (sym, c) in self.symbols.iter().zip(self.coords_angstrom()) {
            let _ = writeln!(s, "{sym:<2} {:>20.12} {:>20.12} {:>20.12}", c[0], c[1], c[2]);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn atomic_numbers(&self) -> &[u32] {
        &self.numbers
    }

    pub fn coords_bohr(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn coords_angstrom(&self) -> Vec<[f64; 3]> {
        self.coords.iter().map(|c| c.map(|v| v * BOHR_IN_ANGSTROM)).collect()
    }

    pub fn charge(&self) -> i32 {
        self.charge
    }

    pub fn multiplicity(&self) -> u32 {
        self.multiplicity
    }

    pub fn nuclear_charge(&self) -> u32 {
        self.numbers.iter().sum()
    }

    pub fn n_electrons(&self) -> usize {
        (self.nuclear_charge() as i64 - self.charge as i64) as usize
    }

    /// Flattened Å coordinates `[x0, y0, z0, x1, …]`.
    pub fn parameters(&self) -> Vec<f64> {
        self.coords_angstrom().into_iter().flatten().collect()
    }

    /// Same atoms and charge state at new flattened Å coordinates.
    pub fn with_parameters(&self, x: &[f64]) -> Result<Self> {
        if x.len() != 3 * self.len() {
            return Err(Error::DimensionMismatch {
                expected: 3 * self.len(),
                found: x.len(),
            });
        }
        let coords: Vec<[f64; 3]> = x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let refs: Vec<&str> = self.symbols.iter().map(String::as_str).collect();
        Self::new(&refs, &coords, self.charge, self.multiplicity)
    }

    /// Distance between atoms `i` and `j` in Å.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(&self.coords[i], &self.coords[j]) * BOHR_IN_ANGSTROM
    }

    /// All pairwise distances `(i, j, r)` with `i < j`, in Å.
    pub fn bond_lengths(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                out.push((i, j, self.distance(i, j)));
            }
        }
        out
    }

    /// `Σ Z_i Z_j / r_ij` in hartree.
    pub fn nuclear_repulsion(&self) -> f64 {
        let mut e = 0.0;
        for i in 0..self.len() {
            for j in 0..i {
                e += (self.numbers[i] * self.numbers[j]) as f64 / dist(&self.coords[i], &self.coords[j]);
            }
        }
        e
    }

    /// Gradient of [`Self::nuclear_repulsion`] in hartree/Å, flattened.
    pub fn nuclear_repulsion_gradient(&self) -> Vec<f64> {
        let mut g = vec![0.0; 3 * self.len()];
        for i in 0..self.len() {
            for j in 0..self.len() {
                if i == j {
                    continue;
                }
                let r = dist(&self.coords[i], &self.coords[j]);
                let zz = (self.numbers[i] * self.numbers[j]) as f64;
                for d in 0..3 {
                    let dx = self.coords[i][d] - self.coords[j][d];
                    g[3 * i + d] -= zz * dx / (r * r * r) * ANGSTROM_TO_BOHR;
                }
            }
        }
        g
    }
}

fn canonical(s: &str) -> String {
    let n = atomic_number(s).expect("validated symbol");
    ELEMENTS[n as usize - 1].to_string()
}

pub(crate) fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2(r: f64) -> Geometry {
        Geometry::from_bohr(&["H", "H"], &[[0.0; 3], [0.0, 0.0, r]], 0, 1).unwrap()
    }

    #[test]
    fn xyz_round_trip() {
        let text = "3\nH3+ charge=1 mult=1\nH 0.0 0.0 0.0\nH 0.99 0.0 0.0\nH 0.495 0.857365 0.0\n";
        let g = Geometry::from_xyz(text).unwrap();
        assert_eq!(g.charge(), 1);
        assert_eq!(g.n_electrons(), 2);
        let back = Geometry::from_xyz(&g.to_xyz("H3+")).unwrap();
        for (a, b) in g.parameters().iter().zip(back.parameters()) {
            assert!((a - b).abs() < 1e-11);
        }
        assert!((g.distance(0, 1) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn default_multiplicity_follows_parity() {
        let g = Geometry::from_xyz("1\n\nH 0 0 0\n").unwrap();
        assert_eq!(g.multiplicity(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Geometry::from_xyz("2\n\nH 0 0 0\n").is_err());
        assert!(Geometry::from_xyz("1\n\nXx 0 0 0\n").is_err());
        assert!(Geometry::new(&["H", "H"], &[[0.0; 3], [0.0; 3]], 0, 1).is_err());
        assert!(Geometry::new(&["H", "H"], &[[0.0; 3], [1.0, 0.0, 0.0]], 0, 2).is_err());
        assert!(Geometry::new(&["H"], &[[0.0; 3]], 2, 1).is_err());
        assert!(Geometry::new(&[], &[], 0, 1).is_err());
    }

    #[test]
    fn nuclear_repulsion_h2() {
        assert!((h2(1.4).nuclear_repulsion() - 1.0 / 1.4).abs() < 1e-15);
    }

    #[test]
    fn repulsion_gradient_matches_fd() {
        let g = Geometry::new(
            &["H", "He", "H"],
            &[[0.1, 0.0, 0.0], [1.0, 0.2, 0.0], [0.4, 1.1, -0.3]],
            1,
            2,
        )
        .unwrap();
        let x = g.parameters();
        let grad = g.nuclear_repulsion_gradient();
        let h = 1e-5;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (g.with_parameters(&xp).unwrap().nuclear_repulsion()
                - g.with_parameters(&xm).unwrap().nuclear_repulsion())
                / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7, "k={k}");
        }
    }
}
