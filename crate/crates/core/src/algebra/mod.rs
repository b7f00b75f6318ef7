//! Operator and superoperator arithmetic: tensor embedding of local
//! operators, column-stacking vectorization, and the norms used
//! throughout (operator norm, trace norm, cb-norm upper bound).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lattice::{Lattice, Region};
use crate::scalar::{ci, czero, Scalar, C};

pub mod expm;
pub mod superop;

pub use superop::{Picture, Superoperator};

#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("vector length {0} is not a perfect square")]
    NotPerfectSquare(usize),
    #[error("support mismatch: {0}")]
    SupportMismatch(String),
    #[error("operator dimension {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("H must be Hermitian (deviation {0})")]
    NonHermitian(f64),
    #[error("iterative norm estimate did not converge")]
    NormNonConvergent,
}

/// Pauli x.
pub fn sigma_x<T: Scalar>() -> DMatrix<C<T>> {
    DMatrix::from_row_slice(2, 2, &[czero(), cone(), cone(), czero()])
}

/// Pauli y.
pub fn sigma_y<T: Scalar>() -> DMatrix<C<T>> {
    DMatrix::from_row_slice(2, 2, &[czero(), -ci::<T>(), ci(), czero()])
}

/// Pauli z.
pub fn sigma_z<T: Scalar>() -> DMatrix<C<T>> {
    DMatrix::from_row_slice(2, 2, &[cone(), czero(), czero(), -cone::<T>()])
}

/// Lowering operator |0><1|.
pub fn sigma_minus<T: Scalar>() -> DMatrix<C<T>> {
    DMatrix::from_row_slice(2, 2, &[czero(), cone(), czero(), czero()])
}

fn cone<T: Scalar>() -> C<T> {
    crate::scalar::cone()
}

/// Identity on an n-dimensional space.
pub fn identity<T: Scalar>(n: usize) -> DMatrix<C<T>> {
    DMatrix::identity(n, n)
}

fn check_finite<T: Scalar>(m: &DMatrix<C<T>>) -> Result<(), AlgebraError> {
    if m.iter()
        .all(|c| num_traits::Float::is_finite(c.re) && num_traits::Float::is_finite(c.im))
    {
        Ok(())
    } else {
        Err(AlgebraError::NonFinite)
    }
}

fn check_square<T: Scalar>(m: &DMatrix<C<T>>) -> Result<usize, AlgebraError> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(AlgebraError::NotSquare(m.nrows(), m.ncols()))
    }
}

/// Largest singular value. Dense SVD up to dimension 64, power iteration
/// on A†A above that (relative accuracy 1e-10 in f64).
pub fn operator_norm<T: Scalar>(m: &DMatrix<C<T>>) -> Result<T, AlgebraError> {
    check_finite(m)?;
    let n = check_square(m)?;
    if n <= 64 {
        let sv = m.clone().singular_values();
        return Ok(sv.iter().cloned().fold(T::zero(), |a, b| {
            nalgebra::RealField::max(a, b)
        }));
    }
    // Power iteration on A†A with two independent starts.
    let tol = nalgebra::RealField::max(T::lit(1e-10), T::epsilon() * T::lit(100.0));
    let mut best = T::zero();
    for seed in [1u64, 2u64] {
        let sigma = power_singular(m, seed, tol)?;
        best = nalgebra::RealField::max(best, sigma);
    }
    Ok(best)
}

fn power_singular<T: Scalar>(
    m: &DMatrix<C<T>>,
    seed: u64,
    tol: T,
) -> Result<T, AlgebraError> {
    use rand::{Rng, SeedableRng};
    let n = m.nrows();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: DVector<C<T>> = DVector::from_fn(n, |_, _| {
        C::new(T::lit(rng.gen::<f64>() - 0.5), T::lit(rng.gen::<f64>() - 0.5))
    });
    let nv = v.norm();
    if nv == T::zero() {
        return Ok(T::zero());
    }
    v /= C::new(nv, T::zero());
    let mut sigma = T::zero();
    for _ in 0..20_000 {
        let w = m * &v;
        let mut u = m.adjoint() * &w;
        let new_sigma = nalgebra::ComplexField::sqrt(C::new(u.norm(), T::zero())).re;
        let un = u.norm();
        if un == T::zero() {
            return Ok(T::zero());
        }
        u /= C::new(un, T::zero());
        let delta = num_traits::Float::abs(new_sigma - sigma);
        sigma = new_sigma;
        v = u;
        if delta <= tol * nalgebra::RealField::max(sigma, T::one()) {
            return Ok(sigma);
        }
    }
    Err(AlgebraError::NormNonConvergent)
}

/// Sum of singular values.
pub fn trace_norm<T: Scalar>(m: &DMatrix<C<T>>) -> Result<T, AlgebraError> {
    check_finite(m)?;
    check_square(m)?;
    let sv = m.clone().singular_values();
    Ok(sv.iter().cloned().fold(T::zero(), |a, b| a + b))
}

/// Deviation from Hermiticity, ||A - A†|| in the Frobenius norm.
pub fn hermiticity_defect<T: Scalar>(m: &DMatrix<C<T>>) -> T {
    (m - m.adjoint()).norm()
}

/// Column-stacking vectorization. nalgebra matrices are column-major, so
/// this is a copy of the raw storage.
pub fn vectorize<T: Scalar>(m: &DMatrix<C<T>>) -> DVector<C<T>> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`]: fails unless the length is a perfect square.
pub fn devectorize<T: Scalar>(v: &[C<T>]) -> Result<DMatrix<C<T>>, AlgebraError> {
    let len = v.len();
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len {
        return Err(AlgebraError::NotPerfectSquare(len));
    }
    Ok(DMatrix::from_column_slice(n, n, v))
}

/// Hilbert-Schmidt inner product tr(A†B).
pub fn hs_inner<T: Scalar>(a: &DMatrix<C<T>>, b: &DMatrix<C<T>>) -> C<T> {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Lindblad data (H, {K_j}) for a single local term.
#[derive(Debug, Clone)]
pub struct LindbladData<T: Scalar> {
    pub hamiltonian: DMatrix<C<T>>,
    pub jumps: Vec<DMatrix<C<T>>>,
}

impl<T: Scalar> LindbladData<T> {
    pub fn new(
        hamiltonian: DMatrix<C<T>>,
        jumps: Vec<DMatrix<C<T>>>,
    ) -> Result<Self, AlgebraError> {
        let n = check_square(&hamiltonian)?;
        let defect = hermiticity_defect(&hamiltonian);
        let tol = nalgebra::RealField::max(T::lit(1e-12), T::epsilon() * T::lit(100.0));
        if defect > tol * nalgebra::RealField::max(hamiltonian.norm(), T::one()) {
            return Err(AlgebraError::NonHermitian(
                num_traits::ToPrimitive::to_f64(&defect).unwrap_or(f64::NAN),
            ));
        }
        for k in &jumps {
            let kn = check_square(k)?;
            if kn != n {
                return Err(AlgebraError::DimensionMismatch {
                    expected: n,
                    found: kn,
                });
            }
        }
        Ok(Self { hamiltonian, jumps })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// Zero data of a given dimension.
    pub fn zero(dim: usize) -> Self {
        Self {
            hamiltonian: DMatrix::zeros(dim, dim),
            jumps: Vec::new(),
        }
    }

    /// Scale the whole generator by a non-negative factor `a`:
    /// H -> a H, K_j -> sqrt(a) K_j.
    pub fn scaled(&self, a: T) -> Self {
        let ra = num_traits::Float::sqrt(a);
        Self {
            hamiltonian: self.hamiltonian.map(|c| c * C::new(a, T::zero())),
            jumps: self
                .jumps
                .iter()
                .map(|k| k.map(|c| c * C::new(ra, T::zero())))
                .collect(),
        }
    }
}

/// Analytic cb-norm upper bound 2||H|| + 2 Σ_j ||K_j||² for a generator in
/// Lindblad data form. This is the normalization proxy used project-wide;
/// the exact diamond norm (an SDP) is an extension point.
pub fn cb_norm_bound<T: Scalar>(data: &LindbladData<T>) -> Result<T, AlgebraError> {
    let two = T::lit(2.0);
    let mut total = two * operator_norm(&data.hamiltonian)?;
    for k in &data.jumps {
        let nk = operator_norm(k)?;
        total += two * nk * nk;
    }
    Ok(total)
}

/// An operator together with its lattice support. The matrix is either
/// local (dimension 2^|support|) or global (dimension 2^|lattice|).
#[derive(Debug, Clone)]
pub struct Operator<T: Scalar> {
    matrix: DMatrix<C<T>>,
    support: Region,
}

impl<T: Scalar> Operator<T> {
    pub fn new(matrix: DMatrix<C<T>>, support: Region) -> Result<Self, AlgebraError> {
        check_finite(&matrix)?;
        let n = check_square(&matrix)?;
        let local_dim = 1usize << support.len();
        let global_dim = 1usize << support.lattice().num_sites();
        if n != local_dim && n != global_dim {
            return Err(AlgebraError::DimensionMismatch {
                expected: local_dim,
                found: n,
            });
        }
        Ok(Self { matrix, support })
    }

    /// Global operator covering the whole lattice.
    pub fn global(matrix: DMatrix<C<T>>, lattice: Lattice) -> Result<Self, AlgebraError> {
        Self::new(matrix, Region::full(lattice))
    }

    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.matrix
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn is_global(&self) -> bool {
        self.matrix.nrows() == 1usize << self.support.lattice().num_sites()
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        hermiticity_defect(&self.matrix)
            <= tol * nalgebra::RealField::max(self.matrix.norm(), T::one())
    }

    pub fn norm(&self) -> Result<T, AlgebraError> {
        operator_norm(&self.matrix)
    }

    /// Tensor the operator with identity off its support, producing the
    /// global operator on the host lattice.
    pub fn embed(&self) -> Result<Operator<T>, AlgebraError> {
        if self.is_global() {
            return Ok(self.clone());
        }
        let lattice = *self.support.lattice();
        let n = lattice.num_sites();
        let matrix = embed_matrix(&self.matrix, &self.support, n)?;
        Ok(Operator {
            matrix,
            support: self.support.clone(),
        })
    }
}

/// Embed a local matrix (dim 2^m on the sites of `support`, sorted
/// row-major) into the 2^n global space, identity elsewhere. Site 0 is the
/// most significant qubit, matching `kron(A_site0, A_site1, ...)`.
pub fn embed_matrix<T: Scalar>(
    local: &DMatrix<C<T>>,
    support: &Region,
    n: usize,
) -> Result<DMatrix<C<T>>, AlgebraError> {
    let m = support.len();
    if local.nrows() != 1 << m {
        return Err(AlgebraError::DimensionMismatch {
            expected: 1 << m,
            found: local.nrows(),
        });
    }
    let lattice = support.lattice();
    // Global Hilbert bit position of the t-th support site.
    let positions: Vec<usize> = support
        .sites()
        .iter()
        .map(|s| n - 1 - site_order_index(lattice, s))
        .collect();
    let local_dim = 1usize << m;
    // scatter[l]: local Hilbert index bits placed at the global positions.
    let mut scatter = vec![0usize; local_dim];
    for (l, slot) in scatter.iter_mut().enumerate() {
        let mut g = 0usize;
        for (t, &p) in positions.iter().enumerate() {
            if (l >> (m - 1 - t)) & 1 == 1 {
                g |= 1 << p;
            }
        }
        *slot = g;
    }
    let free: Vec<usize> = (0..n)
        .filter(|p| !positions.contains(p))
        .collect();
    let dim = 1usize << n;
    let mut out = DMatrix::zeros(dim, dim);
    for outer in 0..1usize << free.len() {
        let mut off = 0usize;
        for (bit, &p) in free.iter().enumerate() {
            if (outer >> bit) & 1 == 1 {
                off |= 1 << p;
            }
        }
        for r in 0..local_dim {
            for c in 0..local_dim {
                let v = local[(r, c)];
                if v != czero() {
                    out[(scatter[r] | off, scatter[c] | off)] += v;
                }
            }
        }
    }
    Ok(out)
}

/// Row-major index of a site within its lattice.
pub(crate) fn site_order_index(lattice: &Lattice, site: &[usize]) -> usize {
    lattice.site_index(site)
}
