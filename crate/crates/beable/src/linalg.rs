//! Dense complex linear algebra over finite-dimensional Hilbert spaces:
//! states, Hermitian operators, tensor structure, exact propagation.
//!
//! Composite-index convention, used everywhere in this crate: a product space
//! `H_A (x) H_B` with dimensions `(d_a, d_b)` is indexed row-major, so the
//! basis pair `(i_a, i_b)` maps to the flat index `i_a * d_b + i_b`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest Hilbert-space dimension tensor products are allowed to produce.
pub const DIM_MAX: usize = 4096;

/// Tolerance on `sum |amplitude|^2 - 1` for state construction.
pub const NORM_TOL: f64 = 1e-10;
/// Element-wise tolerance for Hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Flat index of the basis pair `(i_a, i_b)` in a `d_a * d_b` product space.
#[inline]
pub fn composite_index(i_a: usize, i_b: usize, dim_b: usize) -> usize {
    i_a * dim_b + i_b
}

/// Inverse of [`composite_index`]: splits a flat index into `(i_a, i_b)`.
#[inline]
pub fn split_index(index: usize, dim_b: usize) -> (usize, usize) {
    (index / dim_b, index % dim_b)
}

/// A unit-norm pure state |Psi> on a finite-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Wraps an amplitude vector, requiring unit norm within [`NORM_TOL`].
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Shape("state vector must have dim >= 1".into()));
        }
        let norm_sq: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::Shape(format!(
                "state vector norm^2 = {norm_sq}, expected 1 within {NORM_TOL}"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes an arbitrary nonzero vector into a state.
    pub fn from_unnormalized(v: DVector<C64>) -> Result<Self> {
        let norm = v.norm();
        if norm < 1e-300 {
            return Err(Error::Shape("cannot normalize the zero vector".into()));
        }
        Ok(Self {
            amplitudes: v / C64::new(norm, 0.0),
        })
    }

    /// Computational basis state |k> in dimension `dim`.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dim {dim}");
        let mut v = DVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        Self { amplitudes: v }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, k: usize) -> C64 {
        self.amplitudes[k]
    }

    /// Squared-norm leakage from exact normalization, `|  ||psi||^2 - 1 |`.
    pub fn norm_defect(&self) -> f64 {
        let norm_sq: f64 = self.amplitudes.iter().map(|z| z.norm_sqr()).sum();
        (norm_sq - 1.0).abs()
    }

    /// Inner product <self|other>.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

/// A Hermitian operator (Hamiltonian or observable) as a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: DMatrix<C64>,
}

impl HermitianOperator {
    /// Wraps a square matrix, requiring element-wise Hermiticity within
    /// [`HERMITICITY_TOL`].
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.is_empty() {
            return Err(Error::Shape(format!(
                "operator must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let n = entries.nrows();
        for i in 0..n {
            for j in i..n {
                let d = entries[(i, j)] - entries[(j, i)].conj();
                if d.norm() > HERMITICITY_TOL {
                    return Err(Error::Shape(format!(
                        "matrix is not Hermitian: |H[{i},{j}] - conj(H[{j},{i}])| = {:.3e}",
                        d.norm()
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Builds the Hermitian part `(M + M^dagger)/2` of an arbitrary matrix.
    pub fn symmetrized(m: &DMatrix<C64>) -> Self {
        let h = (m + m.adjoint()).scale(0.5);
        Self { entries: h }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.entries * v
    }
}

/// A density matrix: Hermitian, positive semi-definite, unit trace.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

/// Eigenvalues below `-PSD_TOL` disqualify a candidate density matrix.
pub const PSD_TOL: f64 = 1e-9;

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (eigenvalues above
    /// `-1e-9`).
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let h = HermitianOperator::new(matrix)?;
        let tr: C64 = h.matrix().diagonal().iter().sum();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-10 {
            return Err(Error::Domain(format!(
                "density matrix trace = {tr}, expected 1"
            )));
        }
        let eig = Eigensystem::of(&h);
        if let Some(min) = eig
            .values
            .iter()
            .cloned()
            .min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            if min < -PSD_TOL {
                return Err(Error::Domain(format!(
                    "density matrix has negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self { matrix: h.entries })
    }

    /// Projector |psi><psi| onto a pure state.
    pub fn from_pure(psi: &StateVector) -> Self {
        let v = psi.amplitudes();
        Self {
            matrix: v * v.adjoint(),
        }
    }

    /// Maximally mixed state 1/dim.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim).scale(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }
}

/// Spectral decomposition `H = V diag(E) V^dagger` of a Hermitian operator.
///
/// This is the workhorse behind exact propagation: holding `(E, V)` lets the
/// caller evaluate `exp(-i H t / hbar)` at any `t` without time stepping.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    /// Real eigenvalues, ascending.
    pub values: DVector<f64>,
    /// Unitary matrix of eigenvectors (columns).
    pub vectors: DMatrix<C64>,
}

impl Eigensystem {
    pub fn of(h: &HermitianOperator) -> Self {
        let eig = nalgebra::SymmetricEigen::new(h.entries.clone());
        // Sort ascending for reproducible output.
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(k));
        }
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `exp(-i H t / hbar)` as a dense matrix.
    pub fn evolution_matrix(&self, t: f64, hbar: f64) -> DMatrix<C64> {
        let phases = DVector::from_iterator(
            self.dim(),
            self.values
                .iter()
                .map(|&e| (C64::new(0.0, -1.0) * e * t / hbar).exp()),
        );
        let mut scaled = self.vectors.clone();
        for (j, col) in scaled.column_iter_mut().enumerate() {
            let mut col = col;
            col *= phases[j];
        }
        scaled * self.vectors.adjoint()
    }

    /// Evolves `psi` by time `t` under this Hamiltonian.
    pub fn evolve(&self, psi: &StateVector, t: f64, hbar: f64) -> StateVector {
        let coeffs = self.vectors.adjoint() * psi.amplitudes();
        let phased = DVector::from_iterator(
            self.dim(),
            coeffs
                .iter()
                .zip(self.values.iter())
                .map(|(c, &e)| c * (C64::new(0.0, -1.0) * e * t / hbar).exp()),
        );
        StateVector {
            amplitudes: &self.vectors * phased,
        }
    }

    /// Fixed-step propagator for this Hamiltonian.
    pub fn propagator(&self, dt: f64, hbar: f64) -> Propagator {
        Propagator {
            dt,
            unitary: self.evolution_matrix(dt, hbar),
        }
    }
}

/// Unitary time-step `U = exp(-i H dt / hbar)`, exact for time-independent H.
#[derive(Debug, Clone)]
pub struct Propagator {
    dt: f64,
    unitary: DMatrix<C64>,
}

impl Propagator {
    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn unitary(&self) -> &DMatrix<C64> {
        &self.unitary
    }

    /// Max-norm defect of `U U^dagger - 1`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        let prod = &self.unitary * self.unitary.adjoint();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
                worst = worst.max((prod[(i, j)] - expect).norm());
            }
        }
        worst
    }

    pub fn step(&self, psi: &StateVector) -> StateVector {
        StateVector {
            amplitudes: &self.unitary * psi.amplitudes(),
        }
    }
}

/// Builds `exp(-i H dt / hbar)` by full Hermitian eigendecomposition.
pub fn propagator_build(h: &HermitianOperator, dt: f64, hbar: f64) -> Result<Propagator> {
    if dt <= 0.0 {
        return Err(Error::Config(format!(
            "propagator dt must be > 0, got {dt}"
        )));
    }
    if hbar <= 0.0 {
        return Err(Error::Config(format!("hbar must be > 0, got {hbar}")));
    }
    Ok(Eigensystem::of(h).propagator(dt, hbar))
}

fn check_product_dim(da: usize, db: usize) -> Result<usize> {
    let dim = da.saturating_mul(db);
    if dim > DIM_MAX {
        return Err(Error::Size(format!(
            "tensor product dimension {da}*{db} exceeds maximum {DIM_MAX}"
        )));
    }
    Ok(dim)
}

/// Kronecker product of two states, `(i_a, i_b) -> i_a * dim_b + i_b`.
pub fn tensor_product_states(a: &StateVector, b: &StateVector) -> Result<StateVector> {
    check_product_dim(a.dim(), b.dim())?;
    Ok(StateVector {
        amplitudes: a.amplitudes().kronecker(b.amplitudes()),
    })
}

/// Kronecker product of two Hermitian operators.
pub fn tensor_product_operators(
    a: &HermitianOperator,
    b: &HermitianOperator,
) -> Result<HermitianOperator> {
    check_product_dim(a.dim(), b.dim())?;
    Ok(HermitianOperator {
        entries: a.matrix().kronecker(b.matrix()),
    })
}

/// Which tensor factor [`partial_trace`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    /// Keep the left (A) factor, trace out the right.
    Left,
    /// Keep the right (E) factor, trace out the left.
    Right,
}

/// Partial trace of an operator on a `dim_a * dim_e` product space.
pub fn partial_trace(
    rho: &DMatrix<C64>,
    dim_a: usize,
    dim_e: usize,
    keep: Keep,
) -> Result<DMatrix<C64>> {
    if rho.nrows() != dim_a * dim_e || rho.ncols() != dim_a * dim_e {
        return Err(Error::Shape(format!(
            "partial trace: matrix is {}x{}, declared factors {dim_a}x{dim_e}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    match keep {
        Keep::Left => {
            let mut out = DMatrix::zeros(dim_a, dim_a);
            for i in 0..dim_a {
                for j in 0..dim_a {
                    let mut s = C64::new(0.0, 0.0);
                    for e in 0..dim_e {
                        s += rho[(composite_index(i, e, dim_e), composite_index(j, e, dim_e))];
                    }
                    out[(i, j)] = s;
                }
            }
            Ok(out)
        }
        Keep::Right => {
            let mut out = DMatrix::zeros(dim_e, dim_e);
            for i in 0..dim_e {
                for j in 0..dim_e {
                    let mut s = C64::new(0.0, 0.0);
                    for a in 0..dim_a {
                        s += rho[(composite_index(a, i, dim_e), composite_index(a, j, dim_e))];
                    }
                    out[(i, j)] = s;
                }
            }
            Ok(out)
        }
    }
}

/// Schmidt form of a bipartite pure state: coefficients sorted nonincreasing,
/// orthonormal vectors on each factor.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub coefficients: Vec<f64>,
    pub left_vectors: Vec<DVector<C64>>,
    pub right_vectors: Vec<DVector<C64>>,
}

impl SchmidtDecomposition {
    /// Rebuilds the bipartite state `sum_k s_k |l_k> (x) |r_k>`.
    pub fn reassemble(&self) -> DVector<C64> {
        let da = self.left_vectors[0].len();
        let de = self.right_vectors[0].len();
        let mut out = DVector::zeros(da * de);
        for ((s, l), r) in self
            .coefficients
            .iter()
            .zip(&self.left_vectors)
            .zip(&self.right_vectors)
        {
            out += l.kronecker(r).scale(*s);
        }
        out
    }
}

/// Singular-value decomposition of the `dim_a x dim_e` coefficient matrix of
/// `psi`; retains terms with squared coefficient above `eps_occ`.
pub fn schmidt_decompose(
    psi: &StateVector,
    dim_a: usize,
    dim_e: usize,
    eps_occ: f64,
) -> Result<SchmidtDecomposition> {
    if psi.dim() != dim_a * dim_e {
        return Err(Error::Shape(format!(
            "schmidt: state dim {} does not factor as {dim_a}*{dim_e}",
            psi.dim()
        )));
    }
    let coeff = DMatrix::from_fn(dim_a, dim_e, |i, e| {
        psi.amplitude(composite_index(i, e, dim_e))
    });
    let svd = coeff.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let mut coefficients = Vec::new();
    let mut left_vectors = Vec::new();
    let mut right_vectors = Vec::new();
    for &k in &order {
        let s = svd.singular_values[k];
        if s * s < eps_occ {
            continue;
        }
        coefficients.push(s);
        left_vectors.push(u.column(k).into_owned());
        // Rows of V^H are orthonormal and are the eigenvectors of the
        // reduced density matrix on the right factor.
        right_vectors.push(DVector::from_iterator(dim_e, vt.row(k).iter().copied()));
    }
    Ok(SchmidtDecomposition {
        coefficients,
        left_vectors,
        right_vectors,
    })
}

/// Expectation value <psi|O|psi> of a Hermitian operator.
///
/// The imaginary part is checked against tolerance and discarded; a violation
/// signals a non-Hermitian operator sneaking in.
pub fn expectation(o: &HermitianOperator, psi: &StateVector) -> Result<f64> {
    if o.dim() != psi.dim() {
        return Err(Error::Shape(format!(
            "expectation: operator dim {} vs state dim {}",
            o.dim(),
            psi.dim()
        )));
    }
    let val = psi.amplitudes().dotc(&(o.matrix() * psi.amplitudes()));
    if val.im.abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "expectation has imaginary part {:.3e}; operator not Hermitian enough",
            val.im
        )));
    }
    Ok(val.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::ProptestConfig;
    use proptest::{prop_assert, proptest};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    pub(crate) fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub(crate) fn random_state(dim: usize, rng: &mut impl Rng) -> StateVector {
        let v = DVector::from_fn(dim, |_, _| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        StateVector::from_unnormalized(v).unwrap()
    }

    pub(crate) fn random_hermitian(dim: usize, rng: &mut impl Rng) -> HermitianOperator {
        let m = DMatrix::from_fn(dim, dim, |_, _| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        HermitianOperator::symmetrized(&m)
    }

    fn sigma_x() -> HermitianOperator {
        HermitianOperator::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        ))
        .unwrap()
    }

    #[test]
    fn tensor_basis_bookkeeping() {
        // |0> (x) |1> lands at flat index 1 in dim 4.
        let a = StateVector::basis_state(2, 0);
        let b = StateVector::basis_state(2, 1);
        let t = tensor_product_states(&a, &b).unwrap();
        assert_eq!(t.dim(), 4);
        assert_eq!(t.amplitude(1), c(1.0, 0.0));
        for k in [0usize, 2, 3] {
            assert_eq!(t.amplitude(k), c(0.0, 0.0));
        }
    }

    #[test]
    fn tensor_identity_case() {
        let i2 = HermitianOperator::identity(2);
        let i4 = tensor_product_operators(&i2, &i2).unwrap();
        assert_eq!(i4.dim(), 4);
        assert!((i4.matrix() - DMatrix::<C64>::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn tensor_sigma_x_pair_fixes_bell_state() {
        // sigma_x (x) sigma_x applied to (|00> + |11>)/sqrt(2): eigenvalue +1.
        // Oracle: explicit 4x4 matrix-vector product.
        let sx = sigma_x();
        let sxx = tensor_product_operators(&sx, &sx).unwrap();
        let bell = StateVector::new(DVector::from_vec(vec![
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]))
        .unwrap();
        let mut applied = DVector::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                applied[i] += sxx.matrix()[(i, j)] * bell.amplitude(j);
            }
        }
        assert!((applied - bell.amplitudes()).norm() < 1e-14);
    }

    #[test]
    fn tensor_size_guard() {
        let a = HermitianOperator::identity(100);
        let b = HermitianOperator::identity(100);
        match tensor_product_operators(&a, &b) {
            Err(Error::Size(_)) => {}
            other => panic!("expected SizeError, got {other:?}"),
        }
    }

    #[test]
    fn propagator_of_zero_hamiltonian_is_identity() {
        let h = HermitianOperator::zero(3);
        let u = propagator_build(&h, 1.7, 1.0).unwrap();
        assert!((u.unitary() - DMatrix::<C64>::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn propagator_rabi_quarter_period() {
        // H = hbar*Omega*sigma_x at dt = pi/(2 Omega) maps |0> to -i|1>.
        // Oracle: 2x2 matrix exponential, exp(-i theta sigma_x) =
        // cos(theta) 1 - i sin(theta) sigma_x with theta = pi/2.
        let omega = 0.7;
        let hbar = 1.0;
        let h = HermitianOperator::new(sigma_x().matrix().scale(hbar * omega)).unwrap();
        let u = propagator_build(&h, std::f64::consts::FRAC_PI_2 / omega, hbar).unwrap();
        let psi = u.step(&StateVector::basis_state(2, 0));
        assert!((psi.amplitude(0)).norm() < 1e-12);
        assert!((psi.amplitude(1) - c(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn propagator_norm_preservation_and_composition() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let h = random_hermitian(5, &mut rng);
        let psi = random_state(5, &mut rng);
        let u = propagator_build(&h, 0.31, 1.0).unwrap();
        assert!(u.unitarity_defect() < 1e-9);
        let stepped = u.step(&psi);
        assert!(stepped.norm_defect() < 1e-10);
        // propagator(H, 2 dt) == propagator(H, dt)^2
        let u2 = propagator_build(&h, 0.62, 1.0).unwrap();
        let sq = u.unitary() * u.unitary();
        assert!((u2.unitary() - sq).norm() < 1e-9);
    }

    #[test]
    fn propagator_rejects_non_hermitian() {
        let m =
            DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
        assert!(matches!(HermitianOperator::new(m), Err(Error::Shape(_))));
    }

    #[test]
    fn partial_trace_product_state() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = random_state(2, &mut rng);
        let e = random_state(3, &mut rng);
        let rho_a = DensityMatrix::from_pure(&a);
        let rho_e = DensityMatrix::from_pure(&e);
        let joint = rho_a.matrix().kronecker(rho_e.matrix());
        let traced = partial_trace(&joint, 2, 3, Keep::Left).unwrap();
        assert!((traced - rho_a.matrix()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_bell_state_is_maximally_mixed() {
        let bell = StateVector::new(DVector::from_vec(vec![
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]))
        .unwrap();
        let rho = DensityMatrix::from_pure(&bell);
        for keep in [Keep::Left, Keep::Right] {
            let red = partial_trace(rho.matrix(), 2, 2, keep).unwrap();
            assert!((red - DMatrix::<C64>::identity(2, 2).scale(0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_matches_double_sum_oracle() {
        // Independent oracle: brute-force index contraction
        // (Tr_E rho)_{ij} = sum_e <i,e|rho|j,e>.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let psi = random_state(6, &mut rng);
        let rho = DensityMatrix::from_pure(&psi);
        let traced = partial_trace(rho.matrix(), 2, 3, Keep::Left).unwrap();
        let mut oracle = DMatrix::<C64>::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                for e in 0..3 {
                    oracle[(i, j)] += psi.amplitude(composite_index(i, e, 3))
                        * psi.amplitude(composite_index(j, e, 3)).conj();
                }
            }
        }
        assert!((traced.clone() - oracle).norm() < 1e-13);
        let tr: C64 = traced.diagonal().iter().sum();
        assert!((tr.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schmidt_bell_and_product() {
        let bell = StateVector::new(DVector::from_vec(vec![
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]))
        .unwrap();
        let sd = schmidt_decompose(&bell, 2, 2, 1e-12).unwrap();
        assert_eq!(sd.coefficients.len(), 2);
        for s in &sd.coefficients {
            assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }

        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let a = random_state(2, &mut rng);
        let e = random_state(4, &mut rng);
        let prod = tensor_product_states(&a, &e).unwrap();
        let sd = schmidt_decompose(&prod, 2, 4, 1e-12).unwrap();
        assert_eq!(sd.coefficients.len(), 1);
        assert!((sd.coefficients[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schmidt_weights_match_partial_trace_eigenvalues() {
        // Oracle: eigenvalues of the reduced density matrix on either factor.
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let psi = random_state(8, &mut rng);
        let sd = schmidt_decompose(&psi, 2, 4, 1e-12).unwrap();
        assert!((sd.reassemble() - psi.amplitudes()).norm() < 1e-10);
        let norm_sq: f64 = sd.coefficients.iter().map(|s| s * s).sum();
        assert!((norm_sq - 1.0).abs() < 1e-10);

        let rho = DensityMatrix::from_pure(&psi);
        for (dim_keep, keep) in [(2usize, Keep::Left), (4usize, Keep::Right)] {
            let red = partial_trace(rho.matrix(), 2, 4, keep).unwrap();
            let eig = Eigensystem::of(&HermitianOperator::new(red).unwrap());
            let mut evs: Vec<f64> = eig.values.iter().cloned().collect();
            evs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (k, s) in sd.coefficients.iter().enumerate() {
                assert!(
                    (s * s - evs[k]).abs() < 1e-10,
                    "factor dim {dim_keep}: weight {} vs eigenvalue {}",
                    s * s,
                    evs[k]
                );
            }
        }
        // Orthonormality on both factors.
        for vs in [&sd.left_vectors, &sd.right_vectors] {
            for i in 0..vs.len() {
                for j in 0..vs.len() {
                    let d = vs[i].dotc(&vs[j]);
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((d - c(expect, 0.0)).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn expectation_basics() {
        let psi = StateVector::basis_state(2, 0);
        assert!((expectation(&HermitianOperator::identity(2), &psi).unwrap() - 1.0).abs() < 1e-14);
        let sz = HermitianOperator::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        ))
        .unwrap();
        assert!((expectation(&sz, &psi).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn expectation_matches_quadratic_form_oracle() {
        // Oracle: direct double sum over conj(psi_i) H_ij psi_j.
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let h = random_hermitian(4, &mut rng);
        let psi = random_state(4, &mut rng);
        let mut oracle = c(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                oracle += psi.amplitude(i).conj() * h.matrix()[(i, j)] * psi.amplitude(j);
            }
        }
        let got = expectation(&h, &psi).unwrap();
        assert!((got - oracle.re).abs() < 1e-12);
        assert!(oracle.im.abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prop_propagator_unitarity(seed in 0u64..1000, dim in 2usize..7) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let h = random_hermitian(dim, &mut rng);
            let psi = random_state(dim, &mut rng);
            let u = propagator_build(&h, 0.4, 1.0).unwrap();
            let stepped = u.step(&psi);
            prop_assert!(stepped.norm_defect() < 1e-10);
        }

        #[test]
        fn prop_schmidt_reassembles(seed in 0u64..1000) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let psi = random_state(6, &mut rng);
            let sd = schmidt_decompose(&psi, 2, 3, 1e-12).unwrap();
            prop_assert!((sd.reassemble() - psi.amplitudes()).norm() < 1e-9);
        }
    }
}
