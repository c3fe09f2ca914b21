//! Closed-shell restricted Hartree–Fock.

use nalgebra::DMatrix;

use super::geometry::Geometry;
use super::integrals::{AoIntegrals, Eri};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScfOptions {
    pub max_iterations: usize,
    /// Max-norm of the orthogonalized commutator `FDS − SDF`.
    pub commutator_tol: f64,
    pub energy_tol: f64,
}

impl Default for ScfOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            commutator_tol: 1e-10,
            energy_tol: 1e-12,
        }
    }
}

/// Converged restricted Hartree–Fock solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScfResult {
    /// AO × MO coefficients, columns ordered by orbital energy.
    pub coefficients: DMatrix<f64>,
    pub orbital_energies: Vec<f64>,
    /// Electronic plus nuclear repulsion, hartree.
    pub energy: f64,
    pub electronic_energy: f64,
    pub nuclear_repulsion: f64,
    pub n_electrons: usize,
    pub iterations: usize,
    pub commutator: f64,
    pub energy_change: f64,
    /// Total energies of accepted iterates, starting from the core guess.
    pub history: Vec<f64>,
}

impl ScfResult {
    pub fn n_occupied(&self) -> usize {
        self.n_electrons / 2
    }
}

/// Makes each column's largest-magnitude entry positive; near-ties go to
/// the first index.
pub fn fix_mo_signs(c: &mut DMatrix<f64>) {
    for mut col in c.column_iter_mut() {
        let amax = col.amax();
        if amax == 0.0 {
            continue;
        }
        let lead = col
            .iter()
            .position(|v| v.abs() >= amax * (1.0 - 1e-8))
            .expect("column has a maximal entry");
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
}

fn inverse_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if !(min > 1e-10) {
        return invalid(format!(
            "overlap matrix is not positive definite (min eigenvalue {min:e})"
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `G(D)_ij = Σ_kl D_kl [(ij|kl) − ½(ik|jl)]`.
fn two_electron(d: &DMatrix<f64>, eri: &Eri) -> DMatrix<f64> {
    let n = d.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let mut g = 0.0;
        for k in 0..n {
            for l in 0..n {
                g += d[(k, l)] * (eri.get(i, j, k, l) - 0.5 * eri.get(i, k, j, l));
            }
        }
        g
    })
}

/// Eigenvectors of `F` in the AO basis, sorted ascending, signs fixed.
fn solve_roothaan(f: &DMatrix<f64>, x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let fp = x.transpose() * f * x;
    let eig = fp.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = f.nrows();
    let cp = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    let mut c = x * cp;
    fix_mo_signs(&mut c);
    (c, order.iter().map(|&k| eig.eigenvalues[k]).collect())
}

fn density(c: &DMatrix<f64>, nocc: usize) -> DMatrix<f64> {
    let co = c.columns(0, nocc);
    (&co * co.transpose()) * 2.0
}

fn electronic_energy(d: &DMatrix<f64>, h: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    0.5 * d.component_mul(&(h + f)).sum()
}

/// Closed-shell RHF from the core-Hamiltonian guess.
///
/// A step that raises the energy is damped (mixed with the previous
/// density) until it does not, so accepted energies never increase.
pub fn rhf_scf(geom: &Geometry, ints: &AoIntegrals, options: &ScfOptions) -> Result<ScfResult> {
    let ne = geom.n_electrons();
    if ne % 2 != 0 {
        return invalid(format!("restricted HF needs an even electron count, got {ne}"));
    }
    let nocc = ne / 2;
    let n = ints.dim();
    if nocc > n {
        return invalid(format!("{ne} electrons do not fit in {n} spatial orbitals"));
    }
    let vnn = geom.nuclear_repulsion();
    let h = ints.core_hamiltonian();
    let x = inverse_sqrt(&ints.overlap)?;
    let s = &ints.overlap;

    let (c0, _) = solve_roothaan(&h, &x);
    let mut d = density(&c0, nocc);
    let mut f = &h + two_electron(&d, &ints.eri);
    let mut e = electronic_energy(&d, &h, &f);
    let mut history = vec![e + vnn];
    let mut de = f64::INFINITY;

    for it in 1..=options.max_iterations {
        let comm = (x.transpose() * (&f * &d * s - s * &d * &f) * &x).amax();
        if comm <= options.commutator_tol && de.abs() <= options.energy_tol {
            let (c, eps) = solve_roothaan(&f, &x);
            return Ok(ScfResult {
                coefficients: c,
                orbital_energies: eps,
                energy: e + vnn,
                electronic_energy: e,
                nuclear_repulsion: vnn,
                n_electrons: ne,
                iterations: it - 1,
                commutator: comm,
                energy_change: de,
                history,
            });
        }
        let (c, _) = solve_roothaan(&f, &x);
        let target = density(&c, nocc);
        let mut mix = 0.0;
        let (d_new, f_new, e_new) = loop {
            let dt = &target * (1.0 - mix) + &d * mix;
            let ft = &h + two_electron(&dt, &ints.eri);
            let et = electronic_energy(&dt, &h, &ft);
            if et <= e + 1e-14 * e.abs().max(1.0) || mix > 0.999 {
                break (dt, ft, et);
            }
            mix = 0.5 + 0.5 * mix;
        };
        if e_new > e + 1e-14 * e.abs().max(1.0) {
            // Damping exhausted without descent; stop here.
            return Err(Error::ScfNotConverged {
                iterations: it,
                commutator: comm,
                energy_change: e_new - e,
            });
        }
        de = e_new - e;
        d = d_new;
        f = f_new;
        e = e_new;
        history.push(e + vnn);
    }
    let comm = (x.transpose() * (&f * &d * s - s * &d * &f) * &x).amax();
    Err(Error::ScfNotConverged {
        iterations: options.max_iterations,
        commutator: comm,
        energy_change: de,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::integrals::sto3g_integrals;

    fn h2(r: f64) -> Geometry {
        Geometry::from_bohr(&["H", "H"], &[[0.0; 3], [0.0, 0.0, r]], 0, 1).unwrap()
    }

    fn h3p() -> Geometry {
        Geometry::new(
            &["H", "H", "H"],
            &[[0.0; 3], [0.99, 0.0, 0.0], [0.495, 0.99 * 0.75f64.sqrt(), 0.0]],
            1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn h2_energy() {
        let g = h2(1.4);
        let r = rhf_scf(&g, &sto3g_integrals(&g).unwrap(), &ScfOptions::default()).unwrap();
        assert!((r.energy - (-1.116_714)).abs() < 1e-5, "{}", r.energy);
        assert!((r.orbital_energies[0] - (-0.578)).abs() < 1e-3);
        assert!((r.orbital_energies[1] - 0.670).abs() < 1e-3);
    }

    #[test]
    fn mo_orthonormal_and_monotone() {
        for g in [h2(1.4), h3p()] {
            let ints = sto3g_integrals(&g).unwrap();
            let r = rhf_scf(&g, &ints, &ScfOptions::default()).unwrap();
            let ctsc = r.coefficients.transpose() * &ints.overlap * &r.coefficients;
            assert!((ctsc - DMatrix::identity(ints.dim(), ints.dim())).amax() < 1e-8);
            for w in r.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", r.history);
            }
        }
    }

    #[test]
    fn h3p_below_core_guess() {
        // Equilateral symmetry fixes the occupied orbital already at the
        // core guess, so distort.
        let g = Geometry::new(&["H", "H", "H"], &[[0.0; 3], [1.1, 0.0, 0.0], [0.4, 0.8, 0.0]], 1, 1).unwrap();
        let r = rhf_scf(&g, &sto3g_integrals(&g).unwrap(), &ScfOptions::default()).unwrap();
        assert!(r.energy < r.history[0], "{:?}", r.history);
        assert!(r.commutator <= 1e-10);
    }

    #[test]
    fn dissociated_h2_is_handled() {
        let g = h2(20.0);
        match rhf_scf(&g, &sto3g_integrals(&g).unwrap(), &ScfOptions::default()) {
            Ok(r) => assert!(r.energy.is_finite()),
            Err(e) => assert!(matches!(e, Error::ScfNotConverged { .. })),
        }
    }

    #[test]
    fn odd_electrons_rejected() {
        let g = Geometry::new(&["H", "H", "H"], &[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 0, 2).unwrap();
        assert!(rhf_scf(&g, &sto3g_integrals(&g).unwrap(), &ScfOptions::default()).is_err());
    }

    #[test]
    fn sign_convention() {
        let mut c = DMatrix::from_row_slice(2, 2, &[-0.5, 0.7, -0.5, -0.7]);
        fix_mo_signs(&mut c);
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[0.5, 0.7, 0.5, -0.7]));
    }
}
