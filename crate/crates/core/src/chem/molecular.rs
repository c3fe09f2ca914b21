//! Geometry-parametrized molecular qubit Hamiltonians.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::fermion::{
    jordan_wigner, mo_transform, mo_transform_with, QubitHamiltonian, SecondQuantizedHamiltonian, MAX_SPIN_ORBITALS,
};
use super::geometry::Geometry;
use super::integrals::{cross_overlap, sto3g_basis, sto3g_integrals, AoIntegrals};
use super::scf::{rhf_scf, ScfOptions, ScfResult};
use crate::error::{invalid, Error, Result};
use crate::spectral::{HermitianOperator, ParametrizedHamiltonian};

/// Central-difference step for `dH/dR`, Å.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Max-norm of `H(x+δ) − 2H(x) + H(x−δ)` above which `H` is declared
/// non-smooth.
pub const SMOOTHNESS_TOL: f64 = 1e-6;

/// Everything computed at one geometry.
#[derive(Debug, Clone)]
pub struct ElectronicStructure {
    pub geometry: Geometry,
    pub integrals: AoIntegrals,
    pub scf: ScfResult,
    pub hamiltonian: SecondQuantizedHamiltonian,
    pub qubit: QubitHamiltonian,
}

/// STO-3G molecule whose parameters are the flattened Cartesian
/// coordinates in Å.
#[derive(Debug, Clone)]
pub struct MolecularSystem {
    reference: Geometry,
    scf_options: ScfOptions,
    fd_step: f64,
}

impl MolecularSystem {
    pub fn new(reference: Geometry) -> Result<Self> {
        let nbf = sto3g_basis(&reference)?.len();
        if 2 * nbf > MAX_SPIN_ORBITALS {
            return Err(Error::RegisterTooLarge {
                qubits: 2 * nbf,
                limit: MAX_SPIN_ORBITALS,
            });
        }
        if reference.n_electrons() % 2 != 0 {
            return invalid("restricted orbitals need an even electron count");
        }
        Ok(Self {
            reference,
            // Tight orbitals keep central differences of H clean.
            scf_options: ScfOptions {
                commutator_tol: 1e-12,
                ..ScfOptions::default()
            },
            fd_step: DEFAULT_FD_STEP,
        })
    }

    pub fn with_fd_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return invalid(format!("finite-difference step must be positive, got {step}"));
        }
        self.fd_step = step;
        Ok(self)
    }

    pub fn reference(&self) -> &Geometry {
        &self.reference
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.reference.len()
    }

    pub fn geometry_at(&self, x: &[f64]) -> Result<Geometry> {
        self.reference.with_parameters(x)
    }

    pub fn at(&self, x: &[f64]) -> Result<ElectronicStructure> {
        self.at_geometry(self.geometry_at(x)?)
    }

    pub fn at_geometry(&self, geometry: Geometry) -> Result<ElectronicStructure> {
        let integrals = sto3g_integrals(&geometry)?;
        let scf = rhf_scf(&geometry, &integrals, &self.scf_options)?;
        let hamiltonian = mo_transform(&scf, &integrals);
        let qubit = jordan_wigner(&hamiltonian)?;
        Ok(ElectronicStructure {
            geometry,
            integrals,
            scf,
            hamiltonian,
            qubit,
        })
    }

    /// Electronic qubit Hamiltonian at `displaced`, with orbitals aligned
    /// to those of `base`.
    fn aligned_operator(&self, base: &ElectronicStructure, displaced: &[f64]) -> Result<HermitianOperator> {
        let es = self.at(displaced)?;
        let s = cross_overlap(&base.geometry, &es.geometry)?;
        let c = align_orbitals(
            &base.scf.coefficients,
            base.hamiltonian.n_electrons / 2,
            &s,
            &es.scf.coefficients,
        );
        let sq = mo_transform_with(&c, &es.scf, &es.integrals);
        Ok(jordan_wigner(&sq)?.operator)
    }

    /// `dH/dx_j` for every coordinate by central differences of aligned
    /// Hamiltonians.
    pub fn hamiltonian_derivatives(&self, x: &[f64]) -> Result<Vec<HermitianOperator>> {
        let base = self.at(x)?;
        let h0 = base.qubit.operator.matrix().clone();
        let step = self.fd_step;
        (0..x.len())
            .into_par_iter()
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += step;
                xm[j] -= step;
                let hp = self.aligned_operator(&base, &xp)?;
                let hm = self.aligned_operator(&base, &xm)?;
                let second = (hp.matrix() + hm.matrix() - &h0 * num_complex::Complex64::new(2.0, 0.0))
                    .iter()
                    .fold(0.0_f64, |m, z| m.max(z.norm()));
                if second > SMOOTHNESS_TOL {
                    return Err(Error::NonSmooth {
                        direction: j,
                        second_difference: second,
                    });
                }
                HermitianOperator::new((hp.matrix() - hm.matrix()).unscale(2.0 * step))
            })
            .collect()
    }
}

/// Rotates the occupied and virtual columns of `c` separately so each
/// block lies as close as possible to the matching block of `c_ref`. Both
/// rotations leave the many-body spectrum unchanged, and the result varies
/// smoothly with geometry while the HOMO–LUMO gap stays open, degenerate
/// or not. `s_cross` is the AO overlap between the reference basis (rows)
/// and the displaced basis (columns).
pub fn align_orbitals(
    c_ref: &DMatrix<f64>,
    n_occupied: usize,
    s_cross: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = c.ncols();
    let o = c_ref.transpose() * s_cross * c;
    let mut out = c.clone();
    for (start, m) in [(0, n_occupied.min(n)), (n_occupied.min(n), n - n_occupied.min(n))] {
        if m == 0 {
            continue;
        }
        let block = o.view((start, start), (m, m)).into_owned();
        // Rotation U maximizing tr(block·U): U = V Wᵀ for block = W Σ Vᵀ.
        let svd = block.svd(true, true);
        let (w, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
        let u = vt.transpose() * w.transpose();
        let cols = out.columns(start, m) * &u;
        out.columns_mut(start, m).copy_from(&cols);
    }
    out
}

impl ParametrizedHamiltonian for MolecularSystem {
    fn dimension(&self) -> usize {
        1 << self.n_qubits()
    }

    fn num_parameters(&self) -> usize {
        3 * self.reference.len()
    }

    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator> {
        Ok(self.at(x)?.qubit.operator)
    }

    fn derivatives(&self, x: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        Some(self.hamiltonian_derivatives(x))
    }

    fn offset(&self, x: &[f64]) -> f64 {
        self.geometry_at(x).map(|g| g.nuclear_repulsion()).unwrap_or(f64::NAN)
    }

    fn offset_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.geometry_at(x)
            .map(|g| g.nuclear_repulsion_gradient())
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }
}

/// Closed-shell reference determinant: the first `n_electrons` spin
/// orbitals occupied, e.g. `110000`.
pub fn hartree_fock_bits(n_qubits: usize, n_electrons: usize) -> String {
    (0..n_qubits).map(|p| if p < n_electrons { '1' } else { '0' }).collect()
}

/// Lowest determinant with `2S_z = −(multiplicity − 1)`: doubly occupied
/// spatial orbitals, then singly occupied β orbitals, e.g. `010100` for
/// two electrons in a triplet.
pub fn reference_bits(n_qubits: usize, n_electrons: usize, multiplicity: u32) -> Result<String> {
    let unpaired = multiplicity.saturating_sub(1) as usize;
    if multiplicity == 0 || unpaired > n_electrons || (n_electrons - unpaired) % 2 != 0 {
        return invalid(format!(
            "multiplicity {multiplicity} is impossible with {n_electrons} electrons"
        ));
    }
    let pairs = (n_electrons - unpaired) / 2;
    if 2 * (pairs + unpaired) > n_qubits {
        return invalid(format!(
            "{n_electrons} electrons with multiplicity {multiplicity} do not fit {n_qubits} spin orbitals"
        ));
    }
    let mut bits = vec!['0'; n_qubits];
    for k in 0..pairs {
        bits[2 * k] = '1';
        bits[2 * k + 1] = '1';
    }
    for k in pairs..pairs + unpaired {
        bits[2 * k + 1] = '1';
    }
    Ok(bits.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::fermion::{determinant_state, sector_indices};
    use crate::spectral::{eigendecompose, overlaps, Restriction};

    fn h3p(a: f64, b: f64, c: f64) -> Geometry {
        // Triangle with sides AB = a, AC = b, BC = c.
        let x = (a * a + b * b - c * c) / (2.0 * a);
        let y = (b * b - x * x).sqrt();
        Geometry::new(&["H", "H", "H"], &[[0.0; 3], [a, 0.0, 0.0], [x, y, 0.0]], 1, 1).unwrap()
    }

    fn sector_spectrum(g: Geometry, ms2: i32) -> Vec<f64> {
        let sys = MolecularSystem::new(g).unwrap();
        let es = sys.at(&sys.reference().parameters()).unwrap();
        let sector = Restriction::new(64, sector_indices(6, 2, ms2)).unwrap();
        let eig = eigendecompose(&sector.restrict_operator(&es.qubit.operator).unwrap()).unwrap();
        eig.eigenvalues.iter().map(|e| e + es.qubit.offset).collect()
    }

    #[test]
    fn spectra_match_reference_fci() {
        // Frozen from an independent STO-3G FCI code.
        let cases: [(Geometry, i32, &[f64]); 4] = [
            (
                h3p(0.99, 0.99, 0.99),
                0,
                &[
                    -1.2744225175539676,
                    -0.7521818616036935,
                    -0.7521818616036917,
                    -0.5265856362237025,
                    -0.5265856362237007,
                    -0.09682991458816126,
                    0.1168124059179898,
                    0.11681240591799047,
                    0.23359292360147355,
                ],
            ),
            (
                h3p(1.04, 0.99, 0.97),
                0,
                &[
                    -1.2738040216729214,
                    -0.7836627760490105,
                    -0.7334745581106228,
                    -0.5599688442564288,
                    -0.5092940177012579,
                    -0.11110760037320722,
                    0.08628319148386132,
                    0.11262392620792827,
                    0.23198983475716517,
                ],
            ),
            (
                h3p(1.04, 0.99, 0.97),
                -2,
                &[-0.7836627760490091, -0.733474558110621, -0.111107600373207],
            ),
            (
                Geometry::new(&["H", "H", "H"], &[[0.0; 3], [0.9, 0.0, 0.0], [1.9, 0.0, 0.0]], 1, 1).unwrap(),
                -2,
                &[-1.018475583495253, -0.4515966259848383, -0.12455194182481732],
            ),
        ];
        for (g, ms2, want) in cases {
            let got = sector_spectrum(g, ms2);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() < 1e-9, "{got:?}");
            }
        }
    }

    #[test]
    fn hf_bits() {
        assert_eq!(hartree_fock_bits(6, 2), "110000");
        assert_eq!(reference_bits(6, 2, 1).unwrap(), "110000");
        assert_eq!(reference_bits(6, 2, 3).unwrap(), "010100");
        assert_eq!(reference_bits(8, 3, 2).unwrap(), "11010000");
        assert!(reference_bits(6, 2, 2).is_err());
        assert!(reference_bits(4, 4, 5).is_err());
    }

    #[test]
    fn hf_overlap_near_equilibrium() {
        let sys = MolecularSystem::new(h3p(0.99, 0.99, 0.99)).unwrap();
        let es = sys.at(&sys.reference().parameters()).unwrap();
        let sector = Restriction::new(64, sector_indices(6, 2, 0)).unwrap();
        let h = sector.restrict_operator(&es.qubit.operator).unwrap();
        let psi = sector.restrict_state(&determinant_state("110000", 6).unwrap()).unwrap();
        let w = overlaps(&psi, &eigendecompose(&h).unwrap()).unwrap();
        assert!(w[0] > 0.9, "{w:?}");
        assert!(es.scf.energy >= eigendecompose(&h).unwrap().eigenvalues[0] + es.qubit.offset);
    }

    #[test]
    fn equilateral_bonds_equivalent() {
        // Pairwise-bond energies: the electronic energy is invariant under
        // cyclic relabeling of the atoms.
        let g = h3p(0.99, 0.99, 0.99);
        let coords = g.coords_angstrom();
        let sys = MolecularSystem::new(g.clone()).unwrap();
        let mut energies = Vec::new();
        for r in 0..3 {
            let rot: Vec<f64> = (0..3).flat_map(|i| coords[(i + r) % 3]).collect();
            let es = sys.at(&rot).unwrap();
            let sector = Restriction::new(64, sector_indices(6, 2, 0)).unwrap();
            let e0 = eigendecompose(&sector.restrict_operator(&es.qubit.operator).unwrap())
                .unwrap()
                .eigenvalues[0];
            energies.push(e0 + es.qubit.offset);
        }
        assert!((energies[0] - energies[1]).abs() < 1e-10 && (energies[0] - energies[2]).abs() < 1e-10);
    }

    #[test]
    fn smooth_along_path() {
        let sys = MolecularSystem::new(h3p(1.04, 0.99, 0.97)).unwrap();
        let x0 = sys.reference().parameters();
        let mut prev = sys.evaluate(&x0).unwrap();
        for step in 1..=10 {
            let mut x = x0.clone();
            x[3] += step as f64 * 1e-5;
            let h = sys.evaluate(&x).unwrap();
            let diff = (h.matrix() - prev.matrix())
                .iter()
                .fold(0.0_f64, |m, z| m.max(z.norm()));
            assert!(diff < 10.0 * 1e-5, "step {step}: {diff}");
            prev = h;
        }
    }

    #[test]
    fn derivatives_match_spectrum_fd() {
        // Eigenvalues are orbital-invariant, so dE_u/dx from ⟨u|dH|u⟩ must
        // match differences of eigenvalues at displaced geometries.
        let sys = MolecularSystem::new(h3p(1.04, 0.99, 0.97)).unwrap();
        let sector = Restriction::new(64, sector_indices(6, 2, 0)).unwrap();
        let x = sys.reference().parameters();
        let dh = sys.hamiltonian_derivatives(&x).unwrap();
        let eig = eigendecompose(&sector.restrict_operator(&sys.evaluate(&x).unwrap()).unwrap()).unwrap();
        let e0 = |x: &[f64]| {
            eigendecompose(&sector.restrict_operator(&sys.evaluate(x).unwrap()).unwrap())
                .unwrap()
                .eigenvalues[0]
        };
        let v = eig.vector(0);
        for j in [0, 4, 8] {
            let hf = sector.restrict_operator(&dh[j]).unwrap().sandwich(&v, &v).re;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += 1e-4;
            xm[j] -= 1e-4;
            let fd = (e0(&xp) - e0(&xm)) / 2e-4;
            assert!((hf - fd).abs() < 1e-6, "j={j}: {hf} vs {fd}");
        }
    }

    #[test]
    fn degenerate_virtuals_are_aligned() {
        // Equilateral H₃⁺ has a degenerate virtual pair; without block
        // alignment the second difference would be O(1). Nearly equilateral
        // geometries split the pair by less than the displacement mixes it.
        for d in [0.0, 1e-7, 1e-5, 1e-3] {
            let sys = MolecularSystem::new(h3p(0.99 + d, 0.99, 0.99)).unwrap();
            let x = sys.reference().parameters();
            assert!(sys.hamiltonian_derivatives(&x).is_ok(), "{d}");
        }
    }

    #[test]
    fn offset_is_nuclear_repulsion() {
        let g = h3p(0.99, 0.99, 0.99);
        let sys = MolecularSystem::new(g.clone()).unwrap();
        let x = g.parameters();
        assert_eq!(sys.offset(&x), g.nuclear_repulsion());
        assert_eq!(sys.offset_gradient(&x), g.nuclear_repulsion_gradient());
        assert_eq!(sys.dimension(), 64);
        assert_eq!(sys.num_parameters(), 9);
    }

    #[test]
    fn rejects_unsupported() {
        let g = Geometry::new(&["Li", "H"], &[[0.0; 3], [1.6, 0.0, 0.0]], 0, 1).unwrap();
        assert!(matches!(MolecularSystem::new(g), Err(Error::UnsupportedElement(_))));
        let g = Geometry::new(&["H", "H", "H"], &[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 0, 2).unwrap();
        assert!(MolecularSystem::new(g).is_err());
    }
}
