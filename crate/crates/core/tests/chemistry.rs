//! Chemistry stack through the public API: FCIDUMP, Jordan–Wigner, sectors.

use approx::assert_relative_eq;
use dqpe::chem::{fcidump_read, fcidump_write, jordan_wigner, sector_indices, Geometry, MolecularSystem};
use dqpe::optimizer::h3_ground_start;
use dqpe::spectral::{eigendecompose, Restriction};

fn sector_ground(g: Geometry) -> (f64, f64) {
    let es = MolecularSystem::new(g.clone()).unwrap().at_geometry(g).unwrap();
    let n = es.qubit.n_qubits;
    let r = Restriction::new(1 << n, sector_indices(n, es.hamiltonian.n_electrons, 0)).unwrap();
    let e = eigendecompose(&r.restrict_operator(&es.qubit.operator).unwrap())
        .unwrap()
        .eigenvalues[0];
    (e + es.qubit.offset, es.scf.energy)
}

#[test]
fn fcidump_file_reproduces_the_spectrum() {
    let g = h3_ground_start();
    let es = MolecularSystem::new(g.clone()).unwrap().at_geometry(g).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h3p.fcidump");
    fcidump_write(&es.hamiltonian, std::fs::File::create(&path).unwrap()).unwrap();
    let back = fcidump_read(&path).unwrap();
    assert_eq!(back, es.hamiltonian);
    let a = eigendecompose(&jordan_wigner(&back).unwrap().operator).unwrap();
    let b = eigendecompose(&es.qubit.operator).unwrap();
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert_eq!(x, y);
    }
}

#[test]
fn correlation_lowers_the_energy() {
    for r in [0.6, 0.74, 1.0, 1.5] {
        let g = Geometry::new(&["H", "H"], &[[0.0; 3], [r, 0.0, 0.0]], 0, 1).unwrap();
        let (fci, hf) = sector_ground(g);
        assert!(fci < hf, "r={r}: {fci} vs {hf}");
    }
}

#[test]
fn h3p_equilateral_reference() {
    // Frozen from an independent STO-3G FCI code.
    let a = 0.99;
    let g = Geometry::new(
        &["H", "H", "H"],
        &[[0.0; 3], [a, 0.0, 0.0], [a / 2.0, a * 3f64.sqrt() / 2.0, 0.0]],
        1,
        1,
    )
    .unwrap();
    let (fci, _) = sector_ground(g);
    assert_relative_eq!(fci, -1.274_422_517_553_967_6, epsilon = 1e-9);
}
