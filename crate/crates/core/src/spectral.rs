//! Dense Hermitian linear algebra and the parametrized-Hamiltonian contract.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest matrix dimension accepted by [`eigendecompose`].
pub const MAX_EIGEN_DIM: usize = 1 << 10;

/// Eigenvalue gap below which two levels are treated as degenerate (hartree).
pub const DEGENERACY_GAP: f64 = 1e-9;

const HERMITIAN_TOL: f64 = 1e-12;

/// A statevector in a computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(amplitudes: CVector) -> Self {
        Self { amplitudes }
    }

    /// Scales `amplitudes` to unit norm; fails on a zero vector.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return invalid("cannot normalize a zero-norm state");
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
        })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::normalized(CVector::from_iterator(
            values.len(),
            values.iter().map(|&v| Complex64::new(v, 0.0)),
        ))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = Complex64::new(1.0, 0.0);
        Self { amplitudes: v }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub(crate) fn require_normalized(&self, tol: f64) -> Result<()> {
        if self.is_normalized(tol) {
            Ok(())
        } else {
            Err(Error::Unnormalized(self.norm_sqr()))
        }
    }
}

/// A Hermitian matrix, stored exactly symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Accepts `matrix` when it is Hermitian within 1e-12 relative to its
    /// largest entry.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let asym = max_asymmetry(&matrix);
        let scale = matrix.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
        if !(asym <= HERMITIAN_TOL * scale) {
            return Err(Error::NotHermitian { max_asymmetry: asym });
        }
        let sym = (&matrix + matrix.adjoint()).unscale(2.0);
        Ok(Self { matrix: sym })
    }

    pub fn from_real(matrix: &DMatrix<f64>) -> Result<Self> {
        Self::new(matrix.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        Self { matrix: m }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            matrix: self.matrix.scale(s),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self {
            matrix: &self.matrix + other.matrix.scale(s),
        })
    }

    /// `⟨a|H|b⟩` for columns of a matrix.
    pub fn sandwich(&self, a: &CVector, b: &CVector) -> Complex64 {
        a.dotc(&(&self.matrix * b))
    }
}

pub fn max_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Ascending eigenvalues with phase-fixed orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, u: usize) -> CVector {
        self.eigenvectors.column(u).into_owned()
    }

    /// Smallest distance from eigenvalue `u` to any other eigenvalue.
    pub fn gap(&self, u: usize) -> f64 {
        let e = self.eigenvalues[u];
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != u)
            .map(|(_, &f)| (f - e).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Index ranges of eigenvalues closer than `threshold` to a neighbour.
    pub fn degenerate_groups(&self, threshold: f64) -> Vec<std::ops::Range<usize>> {
        let mut groups = Vec::new();
        let mut start = 0;
        for u in 1..=self.dim() {
            if u == self.dim() || self.eigenvalues[u] - self.eigenvalues[u - 1] >= threshold {
                groups.push(start..u);
                start = u;
            }
        }
        groups
    }

    /// `V diag(f(λ)) V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for u in 0..n {
            let s = f(self.eigenvalues[u]);
            for i in 0..n {
                scaled[(i, u)] *= s;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }
}

/// Rotates `v` so its largest-magnitude component is real and positive.
/// Near-ties resolve to the lowest index.
pub fn fix_phase(v: &mut CVector) {
    let max = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap_or(0);
    let z = v[pivot];
    let phase = z.conj() / z.norm();
    for a in v.iter_mut() {
        *a *= phase;
    }
}

/// Hermitian eigendecomposition sorted by ascending eigenvalue.
pub fn eigendecompose(h: &HermitianOperator) -> Result<EigenSystem> {
    let n = h.dim();
    if n > MAX_EIGEN_DIM {
        return Err(Error::TooLarge {
            dim: n,
            limit: MAX_EIGEN_DIM,
        });
    }
    let asym = max_asymmetry(h.matrix());
    if asym > HERMITIAN_TOL * h.max_abs().max(1.0) {
        return Err(Error::NotHermitian { max_asymmetry: asym });
    }
    let eig = h.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut col);
        vectors.set_column(k, &col);
        values.push(eig.eigenvalues[src]);
    }
    Ok(EigenSystem {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Expansion coefficients `⟨u|ψ⟩`.
pub fn amplitudes(psi: &StateVector, eig: &EigenSystem) -> Result<CVector> {
    if psi.dim() != eig.dim() {
        return Err(Error::DimensionMismatch {
            expected: eig.dim(),
            found: psi.dim(),
        });
    }
    Ok(eig.eigenvectors.adjoint() * psi.amplitudes())
}

/// Weights `|⟨u|ψ⟩|²` per eigenstate.
pub fn overlaps(psi: &StateVector, eig: &EigenSystem) -> Result<Vec<f64>> {
    let c = amplitudes(psi, eig)?;
    psi.require_normalized(1e-10)?;
    Ok(c.iter().map(|z| z.norm_sqr()).collect())
}

/// A Hamiltonian depending smoothly on a real parameter vector.
pub trait ParametrizedHamiltonian: Sync {
    fn dimension(&self) -> usize;

    fn num_parameters(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator>;

    /// dH/dx_j for every parameter, when the implementation can supply it.
    /// `None` selects the central-difference fallback.
    fn derivatives(&self, _x: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        None
    }

    /// Constant energy added after estimation (nuclear repulsion, core).
    fn offset(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn offset_gradient(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.num_parameters()]
    }
}

type Evaluator = dyn Fn(&[f64]) -> Result<HermitianOperator> + Send + Sync;
type Differentiator = dyn Fn(&[f64]) -> Result<Vec<HermitianOperator>> + Send + Sync;
type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Closure-backed [`ParametrizedHamiltonian`].
pub struct FnHamiltonian {
    dim: usize,
    nparams: usize,
    eval: Box<Evaluator>,
    deriv: Option<Box<Differentiator>>,
    offset: Option<(Box<ScalarFn>, Box<VectorFn>)>,
}

impl FnHamiltonian {
    pub fn new(
        dim: usize,
        nparams: usize,
        eval: impl Fn(&[f64]) -> Result<HermitianOperator> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            nparams,
            eval: Box::new(eval),
            deriv: None,
            offset: None,
        }
    }

    pub fn with_derivatives(
        mut self,
        deriv: impl Fn(&[f64]) -> Result<Vec<HermitianOperator>> + Send + Sync + 'static,
    ) -> Self {
        self.deriv = Some(Box::new(deriv));
        self
    }

    /// Scalar offset and its gradient.
    pub fn with_offset(
        mut self,
        offset: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.offset = Some((Box::new(offset), Box::new(gradient)));
        self
    }
}

impl ParametrizedHamiltonian for FnHamiltonian {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn num_parameters(&self) -> usize {
        self.nparams
    }
    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator> {
        (self.eval)(x)
    }
    fn derivatives(&self, x: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        self.deriv.as_ref().map(|d| d(x))
    }
    fn offset(&self, x: &[f64]) -> f64 {
        self.offset.as_ref().map_or(0.0, |(f, _)| f(x))
    }
    fn offset_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.offset
            .as_ref()
            .map_or_else(|| vec![0.0; self.nparams], |(_, g)| g(x))
    }
}

/// Selection of basis states spanning an invariant subspace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restriction {
    full_dim: usize,
    indices: Vec<usize>,
}

impl Restriction {
    pub fn new(full_dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return invalid("empty restriction");
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= full_dim) {
            return invalid(format!("restriction index {i} out of range {full_dim}"));
        }
        Ok(Self { full_dim, indices })
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn restrict_operator(&self, h: &HermitianOperator) -> Result<HermitianOperator> {
        if h.dim() != self.full_dim {
            return Err(Error::DimensionMismatch {
                expected: self.full_dim,
                found: h.dim(),
            });
        }
        let n = self.dim();
        let m = CMatrix::from_fn(n, n, |a, b| h.matrix()[(self.indices[a], self.indices[b])]);
        Ok(HermitianOperator { matrix: m })
    }

    /// Projects `psi` onto the subspace; fails if weight leaks outside it.
    pub fn restrict_state(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.full_dim {
            return Err(Error::DimensionMismatch {
                expected: self.full_dim,
                found: psi.dim(),
            });
        }
        let v = CVector::from_iterator(self.dim(), self.indices.iter().map(|&i| psi.amplitudes()[i]));
        let inside = v.norm_squared();
        if (inside - psi.norm_sqr()).abs() > 1e-12 {
            return invalid(format!(
                "state has weight {:e} outside the restricted subspace",
                psi.norm_sqr() - inside
            ));
        }
        Ok(StateVector::new(v))
    }

    pub fn embed_state(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        let mut v = CVector::zeros(self.full_dim);
        for (a, &i) in self.indices.iter().enumerate() {
            v[i] = psi.amplitudes()[a];
        }
        Ok(StateVector::new(v))
    }
}

impl<T: ParametrizedHamiltonian + ?Sized> ParametrizedHamiltonian for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn num_parameters(&self) -> usize {
        (**self).num_parameters()
    }
    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator> {
        (**self).evaluate(x)
    }
    fn derivatives(&self, x: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        (**self).derivatives(x)
    }
    fn offset(&self, x: &[f64]) -> f64 {
        (**self).offset(x)
    }
    fn offset_gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).offset_gradient(x)
    }
}

/// A [`ParametrizedHamiltonian`] restricted to an invariant subspace. `H`
/// may be owned or a reference.
pub struct Restricted<H: ParametrizedHamiltonian> {
    inner: H,
    restriction: Restriction,
}

impl<H: ParametrizedHamiltonian> Restricted<H> {
    pub fn new(inner: H, restriction: Restriction) -> Result<Self> {
        if restriction.full_dim() != inner.dimension() {
            return Err(Error::DimensionMismatch {
                expected: inner.dimension(),
                found: restriction.full_dim(),
            });
        }
        Ok(Self { inner, restriction })
    }

    pub fn restriction(&self) -> &Restriction {
        &self.restriction
    }

    pub fn inner(&self) -> &H {
        &self.inner
    }
}

impl<H: ParametrizedHamiltonian> ParametrizedHamiltonian for Restricted<H> {
    fn dimension(&self) -> usize {
        self.restriction.dim()
    }
    fn num_parameters(&self) -> usize {
        self.inner.num_parameters()
    }
    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator> {
        self.restriction.restrict_operator(&self.inner.evaluate(x)?)
    }
    fn derivatives(&self, x: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        self.inner
            .derivatives(x)
            .map(|r| r.and_then(|ds| ds.iter().map(|d| self.restriction.restrict_operator(d)).collect()))
    }
    fn offset(&self, x: &[f64]) -> f64 {
        self.inner.offset(x)
    }
    fn offset_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.inner.offset_gradient(x)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_hermitian(n: usize, seed: u64) -> HermitianOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        HermitianOperator::new((&a + a.adjoint()).unscale(2.0)).unwrap()
    }

    pub fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StateVector::normalized(CVector::from_fn(n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }))
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn identity_spectrum() {
        let eig = eigendecompose(&HermitianOperator::identity(4)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0; 4]);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eig.eigenvectors[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn diagonal_spectrum_sorted() {
        let eig = eigendecompose(&HermitianOperator::diagonal(&[3.0, -2.0, 0.0])).unwrap();
        assert_eq!(eig.eigenvalues, vec![-2.0, 0.0, 3.0]);
    }

    #[test]
    fn random_reconstruction() {
        let h = random_hermitian(64, 7);
        let eig = eigendecompose(&h).unwrap();
        let back = eig.reconstruct_with(|l| Complex64::new(l, 0.0));
        let err = (back - h.matrix()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        assert!(err <= 1e-10 * h.max_abs(), "reconstruction error {err}");
        let gram = eig.eigenvectors.adjoint() * &eig.eigenvectors;
        let orth = (gram - CMatrix::identity(64, 64))
            .iter()
            .fold(0.0_f64, |m, z| m.max(z.norm()));
        assert!(orth < 1e-10);
        for u in 0..64 {
            let v = eig.vector(u);
            let r = (h.matrix() * &v - v.scale(eig.eigenvalues[u])).norm();
            assert!(r <= 1e-10 * h.max_abs());
        }
    }

    #[test]
    fn phase_fixed_pivot_is_real_positive() {
        let eig = eigendecompose(&random_hermitian(16, 3)).unwrap();
        for u in 0..16 {
            let v = eig.vector(u);
            let max = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            let pivot = v.iter().find(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap();
            assert!(pivot.im.abs() < 1e-14 && pivot.re > 0.0);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = Complex64::new(0.5, 0.0);
        match HermitianOperator::new(m) {
            Err(Error::NotHermitian { max_asymmetry }) => assert!((max_asymmetry - 0.5).abs() < 1e-15),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejects_oversized() {
        let h = HermitianOperator::identity(MAX_EIGEN_DIM + 1);
        assert!(matches!(eigendecompose(&h), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn overlaps_of_eigenstates() {
        let h = random_hermitian(8, 11);
        let eig = eigendecompose(&h).unwrap();
        let w = overlaps(&StateVector::new(eig.vector(0)), &eig).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!(w[1..].iter().all(|&x| x < 1e-12));

        let mix = StateVector::normalized(eig.vector(0) + eig.vector(1)).unwrap();
        let w = overlaps(&mix, &eig).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        assert!(w[2..].iter().all(|&x| x < 1e-12));
    }

    #[test]
    fn overlaps_complete() {
        let eig = eigendecompose(&random_hermitian(32, 5)).unwrap();
        let w = overlaps(&random_state(32, 9), &eig).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(w.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn overlaps_dimension_mismatch() {
        let eig = eigendecompose(&random_hermitian(4, 1)).unwrap();
        assert!(matches!(
            overlaps(&random_state(8, 1), &eig),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn deterministic() {
        let h = random_hermitian(20, 2);
        let a = eigendecompose(&h).unwrap();
        let b = eigendecompose(&h).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn degenerate_groups_split_on_gap() {
        let eig = EigenSystem {
            eigenvalues: vec![0.0, 1.0, 1.0 + 1e-12, 2.0],
            eigenvectors: CMatrix::identity(4, 4),
        };
        assert_eq!(eig.degenerate_groups(DEGENERACY_GAP), vec![0..1, 1..3, 3..4]);
    }

    #[test]
    fn restriction_round_trip() {
        let r = Restriction::new(4, vec![1, 2]).unwrap();
        let psi = StateVector::from_real(&[0.0, 0.6, 0.8, 0.0]).unwrap();
        let small = r.restrict_state(&psi).unwrap();
        assert_eq!(r.embed_state(&small).unwrap(), psi);
        let leaky = StateVector::from_real(&[0.6, 0.8, 0.0, 0.0]).unwrap();
        assert!(r.restrict_state(&leaky).is_err());
    }
}
