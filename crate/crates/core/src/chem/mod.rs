//! Small-molecule electronic structure: STO-3G integrals for H and He,
//! restricted Hartree–Fock, MO transformation, Jordan–Wigner assembly and
//! FCIDUMP import/export.

pub mod fcidump;
pub mod fermion;
pub mod geometry;
pub mod integrals;
pub mod molecular;
pub mod scf;

pub use fcidump::{fcidump_parse, fcidump_read, fcidump_write};
pub use fermion::{
    csf_state, determinant_index, determinant_state, jordan_wigner, mo_transform, sector_indices, state_sector,
    QubitHamiltonian, SecondQuantizedHamiltonian,
};
pub use geometry::Geometry;
pub use integrals::{sto3g_integrals, AoIntegrals};
pub use molecular::{hartree_fock_bits, reference_bits, ElectronicStructure, MolecularSystem};
pub use scf::{rhf_scf, ScfOptions, ScfResult};
