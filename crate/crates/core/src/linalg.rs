//! Dense complex linear algebra for small multi-qubit systems: validated
//! state/operator wrappers, tensor products, and a Hermitian eigensolver
//! with a deterministic ordering and phase convention.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Absolute tolerance for Hermiticity and unit-trace/unit-norm checks.
pub const VALIDATE_TOL: f64 = 1e-12;
/// Most-negative eigenvalue a density matrix may carry.
pub const PSD_FLOOR: f64 = -1e-10;
/// Asymmetry beyond this is rejected instead of silently symmetrized.
const ASYM_REJECT: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest entrywise deviation of `m` from its adjoint.
pub fn max_asymmetry(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Normalized pure state of one or more qubits (or any finite system).
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    vec: CVec,
}

impl PureState {
    /// Wraps an already-normalized vector; the norm must be 1 within 1e-12.
    pub fn new(vec: CVec) -> Result<Self> {
        let norm = vec.norm();
        if (norm - 1.0).abs() > VALIDATE_TOL {
            return Err(Error::argument(format!(
                "pure state norm {norm} differs from 1 beyond 1e-12"
            )));
        }
        Ok(PureState { vec })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(vec: CVec) -> Result<Self> {
        let norm = vec.norm();
        if norm == 0.0 {
            return Err(Error::argument("cannot normalize the zero vector"));
        }
        Ok(PureState { vec: vec / c(norm, 0.0) })
    }

    pub(crate) fn trusted(vec: CVec) -> Self {
        debug_assert!((vec.norm() - 1.0).abs() < 1e-9);
        PureState { vec }
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    pub fn vector(&self) -> &CVec {
        &self.vec
    }

    /// Number of qubits when the dimension is a power of two.
    pub fn qubits(&self) -> Result<usize> {
        qubit_count(self.dim())
    }

    /// |<self|other>|^2.
    pub fn overlap(&self, other: &PureState) -> f64 {
        self.vec.dotc(&other.vec).norm_sqr()
    }
}

/// Unit-trace positive-semidefinite Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace; positivity is checked in debug
    /// builds only (it costs a full eigendecomposition).
    pub fn new(mat: CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::argument("density matrix must be square"));
        }
        let asym = max_asymmetry(&mat);
        if asym > VALIDATE_TOL {
            return Err(Error::argument(format!(
                "density matrix asymmetry {asym:.3e} exceeds 1e-12"
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > VALIDATE_TOL || tr.im.abs() > VALIDATE_TOL {
            return Err(Error::argument(format!(
                "density matrix trace {tr} differs from 1 beyond 1e-12"
            )));
        }
        let dm = DensityMatrix { mat };
        debug_assert!(
            dm.min_eigenvalue() >= PSD_FLOOR,
            "density matrix has eigenvalue below {PSD_FLOOR}"
        );
        Ok(dm)
    }

    /// For internal construction where validity holds by construction.
    pub(crate) fn trusted(mat: CMat) -> Self {
        DensityMatrix { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    /// Smallest eigenvalue (full eigendecomposition; for validation paths).
    pub fn min_eigenvalue(&self) -> f64 {
        let (vals, _) = herm_eig(&self.mat).expect("validated matrix is Hermitian");
        vals[0]
    }
}

/// Hermitian observable (no trace or positivity constraint).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: CMat,
}

impl HermitianOperator {
    pub fn new(mat: CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::argument("operator must be square"));
        }
        let asym = max_asymmetry(&mat);
        if asym > VALIDATE_TOL {
            return Err(Error::argument(format!(
                "operator asymmetry {asym:.3e} exceeds 1e-12"
            )));
        }
        Ok(HermitianOperator { mat })
    }

    pub(crate) fn trusted(mat: CMat) -> Self {
        HermitianOperator { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }
}

/// Kronecker product of a nonempty list of factors, left factor slowest.
pub fn tensor(factors: &[CMat]) -> Result<CMat> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::argument("tensor product of an empty factor list"))?;
    let mut acc = first.clone();
    for f in rest {
        acc = acc.kronecker(f);
    }
    Ok(acc)
}

/// Kronecker product for state vectors.
pub fn tensor_vec(factors: &[CVec]) -> Result<CVec> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::argument("tensor product of an empty factor list"))?;
    let mut acc = first.clone();
    for f in rest {
        acc = acc.kronecker(f);
    }
    Ok(acc)
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order with orthonormal eigenvector
/// columns aligned to them. The input is symmetrized as (H + H†)/2 first;
/// asymmetry beyond 1e-8 is rejected. Each eigenvector is phase-fixed so
/// its first component of modulus > 1e-10 is real and positive, which makes
/// the output deterministic and reproducible across runs.
pub fn herm_eig(h: &CMat) -> Result<(DVector<f64>, CMat)> {
    if !h.is_square() {
        return Err(Error::argument("eigendecomposition needs a square matrix"));
    }
    let asym = max_asymmetry(h);
    if asym > ASYM_REJECT {
        return Err(Error::argument(format!(
            "matrix asymmetry {asym:.3e} exceeds 1e-8; refusing to symmetrize"
        )));
    }
    let n = h.nrows();
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let mut vals = DVector::<f64>::zeros(n);
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        if let Some(lead) = col.iter().find(|z| z.norm() > 1e-10) {
            let phase = lead.conj() / c(lead.norm(), 0.0);
            col *= phase;
        }
        vecs.set_column(dst, &col);
    }
    Ok((vals, vecs))
}

/// Projector |psi><psi| as a density matrix; normalizes the input.
pub fn dm_from_pure(vec: &CVec) -> Result<DensityMatrix> {
    let psi = PureState::normalized(vec.clone())?;
    Ok(dm_of_state(&psi))
}

pub fn dm_of_state(psi: &PureState) -> DensityMatrix {
    let v = psi.vector();
    let mat = v * v.adjoint();
    DensityMatrix::trusted(mat)
}

/// Trace distance (1/2)||rho - sigma||_1 of two density matrices.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::argument(format!(
            "dimension mismatch: {} vs {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let diff = rho.matrix() - sigma.matrix();
    let (vals, _) = herm_eig(&diff)?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// log2 of a power-of-two dimension.
pub fn qubit_count(dim: usize) -> Result<usize> {
    if dim >= 2 && dim.is_power_of_two() {
        Ok(dim.trailing_zeros() as usize)
    } else {
        Err(Error::argument(format!(
            "dimension {dim} is not a power of two"
        )))
    }
}

/// 2x2 identity.
pub fn eye2() -> CMat {
    CMat::identity(2, 2)
}

/// Computational basis vector |k> in the given dimension.
pub fn basis_vec(dim: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(dim);
    v[k] = c(1.0, 0.0);
    v
}
