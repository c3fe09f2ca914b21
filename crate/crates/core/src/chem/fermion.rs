//! Second-quantized Hamiltonians and their dense Jordan–Wigner matrices.
//!
//! Spin orbitals are interleaved, `p = 2i + σ` with `σ = 0` for α, and
//! qubit `p` is the `p`-th character of a bitstring read left to right, so
//! qubit 0 is the most significant bit of the basis index.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::integrals::{AoIntegrals, Eri};
use super::scf::ScfResult;
use crate::error::{invalid, Error, Result};
use crate::spectral::{CVector, HermitianOperator, StateVector};

/// Largest register assembled densely.
pub const MAX_SPIN_ORBITALS: usize = 10;

/// Two-electron integrals are stored in chemist notation `(pq|rs)`.
pub const ERI_CONVENTION: &str = "chemist";

/// Spatial-orbital integrals `h_pq`, `(pq|rs)` and a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondQuantizedHamiltonian {
    pub one_body: DMatrix<f64>,
    pub two_body: Eri,
    /// Nuclear repulsion and/or frozen-core energy, hartree.
    pub core_energy: f64,
    pub n_electrons: usize,
    pub ms2: i32,
}

impl SecondQuantizedHamiltonian {
    pub fn n_orbitals(&self) -> usize {
        self.one_body.nrows()
    }

    pub fn n_spin_orbitals(&self) -> usize {
        2 * self.n_orbitals()
    }
}

/// Dense electronic qubit Hamiltonian plus its constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitHamiltonian {
    pub operator: HermitianOperator,
    pub offset: f64,
    pub n_qubits: usize,
}

/// Transforms AO matrices to the MO basis with coefficients `c`.
pub fn transform_integrals(h: &DMatrix<f64>, eri: &Eri, c: &DMatrix<f64>) -> (DMatrix<f64>, Eri) {
    let n = c.ncols();
    let nao = c.nrows();
    let h_mo = c.transpose() * h * c;
    let h_mo = (&h_mo + h_mo.transpose()) * 0.5;
    // Four quarter transforms, O(N⁵) each.
    let m = n.max(nao);
    let idx = |a: usize, b: usize, cc: usize, d: usize| ((a * m + b) * m + cc) * m + d;
    let mut t1 = vec![0.0; m.pow(4)];
    for p in 0..n {
        for j in 0..nao {
            for k in 0..nao {
                for l in 0..nao {
                    let mut s = 0.0;
                    for i in 0..nao {
                        s += c[(i, p)] * eri.get(i, j, k, l);
                    }
                    t1[idx(p, j, k, l)] = s;
                }
            }
        }
    }
    let mut t2 = vec![0.0; m.pow(4)];
    for p in 0..n {
        for q in 0..n {
            for k in 0..nao {
                for l in 0..nao {
                    let mut s = 0.0;
                    for j in 0..nao {
                        s += c[(j, q)] * t1[idx(p, j, k, l)];
                    }
                    t2[idx(p, q, k, l)] = s;
                }
            }
        }
    }
    let mut t3 = vec![0.0; m.pow(4)];
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for l in 0..nao {
                    let mut s = 0.0;
                    for k in 0..nao {
                        s += c[(k, r)] * t2[idx(p, q, k, l)];
                    }
                    t3[idx(p, q, r, l)] = s;
                }
            }
        }
    }
    let mut out = Eri::zeros(n);
    for (p, q, r, s) in Eri::unique_indices(n) {
        let mut v = 0.0;
        for l in 0..nao {
            v += c[(l, s)] * t3[idx(p, q, r, l)];
        }
        out.set_symmetric(p, q, r, s, v);
    }
    (h_mo, out)
}

/// MO-basis Hamiltonian from a converged SCF; the constant is the nuclear
/// repulsion.
pub fn mo_transform(scf: &ScfResult, ints: &AoIntegrals) -> SecondQuantizedHamiltonian {
    mo_transform_with(&scf.coefficients, scf, ints)
}

/// As [`mo_transform`] with explicit (e.g. aligned) coefficients.
pub fn mo_transform_with(c: &DMatrix<f64>, scf: &ScfResult, ints: &AoIntegrals) -> SecondQuantizedHamiltonian {
    let (h, g) = transform_integrals(&ints.core_hamiltonian(), &ints.eri, c);
    SecondQuantizedHamiltonian {
        one_body: h,
        two_body: g,
        core_energy: scf.nuclear_repulsion,
        n_electrons: scf.n_electrons,
        ms2: 0,
    }
}

fn bit(p: usize, n: usize) -> usize {
    1 << (n - 1 - p)
}

/// `a_p |k⟩`: new index and sign, or `None` if `p` is empty.
fn annihilate(k: usize, p: usize, n: usize) -> Option<(usize, f64)> {
    if k & bit(p, n) == 0 {
        return None;
    }
    // Qubits before p are the higher bits of k.
    let above = (k >> (n - p)).count_ones();
    let sign = if above % 2 == 0 { 1.0 } else { -1.0 };
    Some((k ^ bit(p, n), sign))
}

fn create(k: usize, p: usize, n: usize) -> Option<(usize, f64)> {
    if k & bit(p, n) != 0 {
        return None;
    }
    let above = (k >> (n - p)).count_ones();
    let sign = if above % 2 == 0 { 1.0 } else { -1.0 };
    Some((k | bit(p, n), sign))
}

fn spin_one_body(h: &DMatrix<f64>, p: usize, q: usize) -> f64 {
    if p % 2 != q % 2 {
        0.0
    } else {
        h[(p / 2, q / 2)]
    }
}

/// Dense matrix of `Σ h_pq a†_p a_q + ½ Σ (pq|rs) a†_p a†_r a_s a_q` over
/// spin orbitals. The constant is returned separately as the offset.
pub fn jordan_wigner(sq: &SecondQuantizedHamiltonian) -> Result<QubitHamiltonian> {
    let n = sq.n_spin_orbitals();
    if n > MAX_SPIN_ORBITALS {
        return Err(Error::RegisterTooLarge {
            qubits: n,
            limit: MAX_SPIN_ORBITALS,
        });
    }
    let dim = 1usize << n;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..dim {
        for q in 0..n {
            let Some((k1, s1)) = annihilate(k, q, n) else { continue };
            for p in 0..n {
                let hpq = spin_one_body(&sq.one_body, p, q);
                if hpq != 0.0 {
                    if let Some((k2, s2)) = create(k1, p, n) {
                        m[(k2, k)] += hpq * s1 * s2;
                    }
                }
                // a†_p a†_r a_s a_q: q annihilated first, then s.
                for s in 0..n {
                    let Some((k3, s3)) = annihilate(k1, s, n) else { continue };
                    for r in 0..n {
                        if r % 2 != s % 2 || p % 2 != q % 2 {
                            continue;
                        }
                        let g = sq.two_body.get(p / 2, q / 2, r / 2, s / 2);
                        if g == 0.0 {
                            continue;
                        }
                        let Some((k4, s4)) = create(k3, r, n) else { continue };
                        let Some((k5, s5)) = create(k4, p, n) else { continue };
                        m[(k5, k)] += 0.5 * g * s1 * s3 * s4 * s5;
                    }
                }
            }
        }
    }
    Ok(QubitHamiltonian {
        operator: HermitianOperator::from_real(&m)?,
        offset: sq.core_energy,
        n_qubits: n,
    })
}

fn parse_bits(bits: &str) -> Result<Vec<bool>> {
    bits.trim_start_matches('|')
        .trim_end_matches('⟩')
        .trim_end_matches('>')
        .chars()
        .map(|ch| match ch {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => invalid(format!("bitstring {bits} contains {ch:?}")),
        })
        .collect()
}

/// Basis index of an occupation bitstring, qubit 0 leftmost and most
/// significant.
pub fn determinant_index(bits: &str, n_qubits: usize) -> Result<usize> {
    let b = parse_bits(bits)?;
    if b.len() != n_qubits {
        return invalid(format!("bitstring {bits} has {} qubits, expected {n_qubits}", b.len()));
    }
    Ok(b.iter().fold(0usize, |acc, &x| (acc << 1) | x as usize))
}

pub fn determinant_state(bits: &str, n_qubits: usize) -> Result<StateVector> {
    Ok(StateVector::basis(1 << n_qubits, determinant_index(bits, n_qubits)?))
}

/// Normalized combination `Σ w_k |D_k⟩`.
pub fn csf_state(terms: &[(f64, &str)], n_qubits: usize) -> Result<StateVector> {
    let mut v = CVector::zeros(1 << n_qubits);
    for &(w, bits) in terms {
        v[determinant_index(bits, n_qubits)?] += Complex64::new(w, 0.0);
    }
    StateVector::normalized(v)
}

/// Occupation-number basis states with `n_electrons` particles and
/// `2·S_z = ms2` (α on even spin orbitals).
pub fn sector_indices(n_qubits: usize, n_electrons: usize, ms2: i32) -> Vec<usize> {
    (0..1usize << n_qubits)
        .filter(|&k| {
            if k.count_ones() as usize != n_electrons {
                return false;
            }
            let (mut na, mut nb) = (0i32, 0i32);
            for p in 0..n_qubits {
                if k & bit(p, n_qubits) != 0 {
                    if p % 2 == 0 {
                        na += 1;
                    } else {
                        nb += 1;
                    }
                }
            }
            na - nb == ms2
        })
        .collect()
}

/// `(N, 2S_z)` of a basis index.
pub fn occupation_quantum_numbers(k: usize, n_qubits: usize) -> (usize, i32) {
    let mut ms2 = 0;
    for p in 0..n_qubits {
        if k & bit(p, n_qubits) != 0 {
            ms2 += if p % 2 == 0 { 1 } else { -1 };
        }
    }
    (k.count_ones() as usize, ms2)
}

/// Sector `(N, 2S_z)` holding all the weight of `psi`, if there is one.
pub fn state_sector(psi: &StateVector, n_qubits: usize) -> Result<(usize, i32)> {
    let mut found = None;
    for (k, a) in psi.amplitudes().iter().enumerate() {
        if a.norm_sqr() <= 1e-24 {
            continue;
        }
        let q = occupation_quantum_numbers(k, n_qubits);
        match found {
            None => found = Some(q),
            Some(f) if f != q => return invalid("input state mixes particle-number or spin sectors"),
            _ => {}
        }
    }
    found.ok_or_else(|| Error::InvalidInput("zero state".into()))
}

/// Serializable summary of the integral convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegralMetadata {
    pub convention: String,
    pub n_orbitals: usize,
    pub n_electrons: usize,
    pub core_energy: f64,
}

impl From<&SecondQuantizedHamiltonian> for IntegralMetadata {
    fn from(sq: &SecondQuantizedHamiltonian) -> Self {
        Self {
            convention: ERI_CONVENTION.into(),
            n_orbitals: sq.n_orbitals(),
            n_electrons: sq.n_electrons,
            core_energy: sq.core_energy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::geometry::Geometry;
    use crate::chem::integrals::sto3g_integrals;
    use crate::chem::scf::{rhf_scf, ScfOptions};
    use crate::spectral::eigendecompose;

    fn number_only(h11: f64) -> SecondQuantizedHamiltonian {
        SecondQuantizedHamiltonian {
            one_body: DMatrix::from_element(1, 1, h11),
            two_body: Eri::zeros(1),
            core_energy: 0.0,
            n_electrons: 1,
            ms2: 1,
        }
    }

    fn h2_sq(r: f64) -> (SecondQuantizedHamiltonian, ScfResult, AoIntegrals) {
        let g = Geometry::from_bohr(&["H", "H"], &[[0.0; 3], [0.0, 0.0, r]], 0, 1).unwrap();
        let ints = sto3g_integrals(&g).unwrap();
        let scf = rhf_scf(&g, &ints, &ScfOptions::default()).unwrap();
        (mo_transform(&scf, &ints), scf, ints)
    }

    #[test]
    fn number_operator() {
        // h = diag(1, 0) on one spatial orbital gives n_0α + n_0β.
        let q = jordan_wigner(&number_only(1.0)).unwrap();
        let d: Vec<f64> = (0..4).map(|k| q.operator.matrix()[(k, k)].re).collect();
        assert_eq!(d, vec![0.0, 1.0, 1.0, 2.0]);
        assert_eq!(q.operator.max_abs(), 2.0);
    }

    #[test]
    fn constant_only_is_offset() {
        let mut sq = number_only(0.0);
        sq.core_energy = 0.7;
        let q = jordan_wigner(&sq).unwrap();
        assert_eq!(q.operator.max_abs(), 0.0);
        assert_eq!(q.offset, 0.7);
    }

    #[test]
    fn identity_transform() {
        let (_, scf, ints) = h2_sq(1.4);
        let id = DMatrix::identity(2, 2);
        let (h, g) = transform_integrals(&ints.core_hamiltonian(), &ints.eri, &id);
        assert_eq!(h, ints.core_hamiltonian());
        assert_eq!(g, ints.eri);
        let _ = scf;
    }

    #[test]
    fn mo_fock_is_diagonal() {
        let (sq, scf, _) = h2_sq(1.4);
        let n = sq.n_orbitals();
        let nocc = scf.n_occupied();
        for p in 0..n {
            for q in 0..n {
                let mut f = sq.one_body[(p, q)];
                for i in 0..nocc {
                    f += 2.0 * sq.two_body.get(p, q, i, i) - sq.two_body.get(p, i, i, q);
                }
                let want = if p == q { scf.orbital_energies[p] } else { 0.0 };
                assert!((f - want).abs() < 1e-8, "F[{p},{q}] = {f}");
            }
        }
    }

    #[test]
    fn mo_eri_symmetry() {
        let (sq, _, _) = h2_sq(1.4);
        assert!(sq.two_body.max_asymmetry() < 1e-10);
        assert!((&sq.one_body - sq.one_body.transpose()).amax() < 1e-12);
    }

    #[test]
    fn hf_determinant_energy() {
        let (sq, scf, _) = h2_sq(1.4);
        let q = jordan_wigner(&sq).unwrap();
        let k = determinant_index("1100", 4).unwrap();
        let e = q.operator.matrix()[(k, k)].re + q.offset;
        assert!((e - scf.energy).abs() < 1e-10);
    }

    #[test]
    fn particle_number_blocks() {
        let (sq, _, _) = h2_sq(1.4);
        let q = jordan_wigner(&sq).unwrap();
        let m = q.operator.matrix();
        for a in 0..16 {
            for b in 0..16 {
                if occupation_quantum_numbers(a, 4) != occupation_quantum_numbers(b, 4) {
                    assert!(m[(a, b)].norm() < 1e-14);
                }
            }
        }
        assert!(m.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn h2_fci_energy() {
        let (sq, _, _) = h2_sq(1.4);
        let q = jordan_wigner(&sq).unwrap();
        let sec = crate::spectral::Restriction::new(16, sector_indices(4, 2, 0)).unwrap();
        let eig = eigendecompose(&sec.restrict_operator(&q.operator).unwrap()).unwrap();
        assert!((eig.eigenvalues[0] + q.offset - (-1.137_284)).abs() < 1e-5);
    }

    #[test]
    fn bitstring_convention() {
        assert_eq!(determinant_index("110000", 6).unwrap(), 48);
        assert_eq!(determinant_index("|110000⟩", 6).unwrap(), 48);
        assert_eq!(determinant_index("000001", 6).unwrap(), 1);
        assert!(determinant_index("1100", 6).is_err());
        assert!(determinant_index("11a0", 4).is_err());
        let s = determinant_state("110000", 6).unwrap();
        assert_eq!(s.amplitudes()[48], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn csf_normalization() {
        let s = csf_state(&[(1.0, "1001"), (1.0, "0110")], 4).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[9].re - h).abs() < 1e-15);
        assert!((s.amplitudes()[6].re - h).abs() < 1e-15);
        assert!(csf_state(&[(1.0, "1001"), (-1.0, "1001")], 4).is_err());
    }

    #[test]
    fn sectors() {
        assert_eq!(sector_indices(6, 2, 0).len(), 9);
        assert_eq!(sector_indices(6, 2, -2).len(), 3);
        assert_eq!(sector_indices(6, 2, 2).len(), 3);
        assert!(sector_indices(6, 2, 0).contains(&48));
        assert!(sector_indices(6, 2, -2).contains(&determinant_index("010100", 6).unwrap()));
        let s = determinant_state("010100", 6).unwrap();
        assert_eq!(state_sector(&s, 6).unwrap(), (2, -2));
        let mixed = csf_state(&[(1.0, "110000"), (1.0, "010100")], 6).unwrap();
        assert!(state_sector(&mixed, 6).is_err());
    }

    #[test]
    fn register_limit() {
        let sq = SecondQuantizedHamiltonian {
            one_body: DMatrix::zeros(6, 6),
            two_body: Eri::zeros(6),
            core_energy: 0.0,
            n_electrons: 2,
            ms2: 0,
        };
        assert!(matches!(jordan_wigner(&sq), Err(Error::RegisterTooLarge { .. })));
    }
}
