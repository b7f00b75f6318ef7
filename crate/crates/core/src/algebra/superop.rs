//! Superoperators acting on column-stacked operators.
//!
//! The global Heisenberg generator of a lattice model is kept as a sum of
//! locally supported terms applied matrix-free over the tensor factors;
//! small instances can be compressed to CSR or expanded to a dense matrix
//! for eigensolves and the dense-exponential oracle.

use nalgebra::DMatrix;

use crate::lattice::Region;
use crate::scalar::{ci, czero, Scalar, C};

use super::{AlgebraError, LindbladData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picture {
    Heisenberg,
    Schroedinger,
}

impl Picture {
    fn flipped(self) -> Self {
        match self {
            Picture::Heisenberg => Picture::Schroedinger,
            Picture::Schroedinger => Picture::Heisenberg,
        }
    }
}

/// Sparse matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct Csr<T: Scalar> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<C<T>>,
}

impl<T: Scalar> Csr<T> {
    pub fn from_triplets(dim: usize, mut triplets: Vec<(u32, u32, C<T>)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
        let mut cols: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C<T>> = Vec::with_capacity(triplets.len());
        let mut rows: Vec<u32> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    let last = vals.len() - 1;
                    vals[last] += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for &r in &rows {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[C<T>], y: &mut [C<T>]) {
        for r in 0..self.dim {
            let mut acc = czero::<T>();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[r] += acc;
        }
    }

    pub fn adjoint(&self) -> Csr<T> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((self.cols[k], r as u32, self.vals[k].conj()));
            }
        }
        Csr::from_triplets(self.dim, triplets)
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> T {
        let mut best = T::zero();
        for r in 0..self.dim {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k].norm();
            }
            best = nalgebra::RealField::max(best, s);
        }
        best
    }
}

/// A local superoperator embedded into the global operator space by its
/// support bit positions.
#[derive(Debug, Clone)]
pub struct EmbeddedTerm<T: Scalar> {
    /// sparse local superoperator entries (row, col, value), dim 4^m
    entries: Vec<(u32, u32, C<T>)>,
    /// local vec index -> scattered global bits
    scatter: Vec<usize>,
    /// offsets enumerating the identity factors
    outer_offsets: Vec<usize>,
    local_dim: usize,
    inf_norm: T,
}

impl<T: Scalar> EmbeddedTerm<T> {
    /// `local` is the 4^m x 4^m superoperator on the (sorted) support
    /// sites; `n` is the number of lattice sites.
    pub fn new(local: &DMatrix<C<T>>, support: &Region, n: usize) -> Result<Self, AlgebraError> {
        let lattice = support.lattice();
        let site_indices: Vec<usize> = support
            .sites()
            .iter()
            .map(|s| lattice.site_index(s))
            .collect();
        Self::with_sites(local, &site_indices, n)
    }

    /// Like [`new`](Self::new) but with the tensor-factor order given
    /// explicitly: factor `t` of the local space acts on lattice site
    /// `site_indices[t]` (site 0 of the lattice is the most significant
    /// qubit globally; factor 0 is the most significant qubit locally).
    pub fn with_sites(
        local: &DMatrix<C<T>>,
        site_indices: &[usize],
        n: usize,
    ) -> Result<Self, AlgebraError> {
        let m = site_indices.len();
        let local_dim = 1usize << (2 * m);
        if local.nrows() != local_dim || local.ncols() != local_dim {
            return Err(AlgebraError::DimensionMismatch {
                expected: local_dim,
                found: local.nrows(),
            });
        }
        // Global vec-index bit positions of each local vec-index bit.
        let mut positions = vec![0usize; 2 * m];
        for (t, &k) in site_indices.iter().enumerate() {
            positions[m - 1 - t] = n - 1 - k; // ket bit
            positions[2 * m - 1 - t] = 2 * n - 1 - k; // bra bit
        }
        let mut scatter = vec![0usize; local_dim];
        for (l, slot) in scatter.iter_mut().enumerate() {
            let mut g = 0usize;
            for (bit, &p) in positions.iter().enumerate() {
                if (l >> bit) & 1 == 1 {
                    g |= 1 << p;
                }
            }
            *slot = g;
        }
        let free: Vec<usize> = (0..2 * n).filter(|p| !positions.contains(p)).collect();
        let mut outer_offsets = Vec::with_capacity(1usize << free.len());
        for outer in 0..1usize << free.len() {
            let mut off = 0usize;
            for (bit, &p) in free.iter().enumerate() {
                if (outer >> bit) & 1 == 1 {
                    off |= 1 << p;
                }
            }
            outer_offsets.push(off);
        }
        // Sparsify, dropping round-off noise relative to the largest entry.
        let max_abs = local
            .iter()
            .map(|c| c.norm())
            .fold(T::zero(), |a, b| nalgebra::RealField::max(a, b));
        let drop_tol = max_abs * T::epsilon() * T::lit(64.0);
        let mut entries = Vec::new();
        for r in 0..local_dim {
            for c in 0..local_dim {
                let v = local[(r, c)];
                if v.norm() > drop_tol {
                    entries.push((r as u32, c as u32, v));
                }
            }
        }
        let mut inf_norm = T::zero();
        for r in 0..local_dim {
            let mut s = T::zero();
            for &(er, _, v) in &entries {
                if er as usize == r {
                    s += v.norm();
                }
            }
            inf_norm = nalgebra::RealField::max(inf_norm, s);
        }
        Ok(Self {
            entries,
            scatter,
            outer_offsets,
            local_dim,
            inf_norm,
        })
    }

    fn apply(&self, x: &[C<T>], y: &mut [C<T>]) {
        for &off in &self.outer_offsets {
            for &(r, c, v) in &self.entries {
                let gr = self.scatter[r as usize] | off;
                let gc = self.scatter[c as usize] | off;
                y[gr] += v * x[gc];
            }
        }
    }

    fn adjoint(&self) -> EmbeddedTerm<T> {
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| (c, r, v.conj()))
            .collect();
        EmbeddedTerm {
            entries,
            scatter: self.scatter.clone(),
            outer_offsets: self.outer_offsets.clone(),
            local_dim: self.local_dim,
            inf_norm: self.inf_norm,
        }
    }

    fn scaled(&self, a: T) -> EmbeddedTerm<T> {
        let f = C::new(a, T::zero());
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| (r, c, v * f))
            .collect();
        EmbeddedTerm {
            entries,
            scatter: self.scatter.clone(),
            outer_offsets: self.outer_offsets.clone(),
            local_dim: self.local_dim,
            inf_norm: self.inf_norm * num_traits::Float::abs(a),
        }
    }

    fn triplets(&self, out: &mut Vec<(u32, u32, C<T>)>) {
        for &off in &self.outer_offsets {
            for &(r, c, v) in &self.entries {
                out.push((
                    (self.scatter[r as usize] | off) as u32,
                    (self.scatter[c as usize] | off) as u32,
                    v,
                ));
            }
        }
    }

    fn nnz_global(&self) -> usize {
        self.entries.len() * self.outer_offsets.len()
    }
}

#[derive(Debug, Clone)]
enum Repr<T: Scalar> {
    Dense(DMatrix<C<T>>),
    Csr(Csr<T>),
    Terms(Vec<EmbeddedTerm<T>>),
}

/// A superoperator on the operators of an n-site lattice (matrix dimension
/// 4^n), tagged with the picture it generates.
#[derive(Debug, Clone)]
pub struct Superoperator<T: Scalar> {
    hilbert_dim: usize,
    picture: Picture,
    support: Region,
    repr: Repr<T>,
}

impl<T: Scalar> Superoperator<T> {
    pub fn from_dense(
        matrix: DMatrix<C<T>>,
        picture: Picture,
        support: Region,
    ) -> Result<Self, AlgebraError> {
        let dim = matrix.nrows();
        let hilbert_dim = (dim as f64).sqrt().round() as usize;
        if hilbert_dim * hilbert_dim != dim || matrix.ncols() != dim {
            return Err(AlgebraError::NotPerfectSquare(dim));
        }
        Ok(Self {
            hilbert_dim,
            picture,
            support,
            repr: Repr::Dense(matrix),
        })
    }

    pub fn from_terms(
        terms: Vec<EmbeddedTerm<T>>,
        n_sites: usize,
        picture: Picture,
        support: Region,
    ) -> Self {
        Self {
            hilbert_dim: 1 << n_sites,
            picture,
            support,
            repr: Repr::Terms(terms),
        }
    }

    pub fn from_csr(csr: Csr<T>, picture: Picture, support: Region) -> Self {
        let hilbert_dim = (csr.dim() as f64).sqrt().round() as usize;
        Self {
            hilbert_dim,
            picture,
            support,
            repr: Repr::Csr(csr),
        }
    }

    /// Dimension of the vectorized operator space (4^n).
    pub fn dim(&self) -> usize {
        self.hilbert_dim * self.hilbert_dim
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn matvec(&self, x: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(x.len(), self.dim(), "vector dimension mismatch");
        let mut y = vec![czero::<T>(); x.len()];
        match &self.repr {
            Repr::Dense(m) => {
                let xv = nalgebra::DVector::from_column_slice(x);
                let r = m * xv;
                y.copy_from_slice(r.as_slice());
            }
            Repr::Csr(csr) => csr.matvec(x, &mut y),
            Repr::Terms(terms) => {
                for t in terms {
                    t.apply(x, &mut y);
                }
            }
        }
        y
    }

    /// Apply to a matrix (devectorize ∘ matvec ∘ vectorize).
    pub fn apply_matrix(&self, a: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        let v = super::vectorize(a);
        let w = self.matvec(v.as_slice());
        super::devectorize(&w).expect("dimension preserved")
    }

    /// Conjugate-transpose; maps the Heisenberg generator to its
    /// Schrödinger dual and vice versa.
    pub fn adjoint(&self) -> Superoperator<T> {
        let repr = match &self.repr {
            Repr::Dense(m) => Repr::Dense(m.adjoint()),
            Repr::Csr(csr) => Repr::Csr(csr.adjoint()),
            Repr::Terms(terms) => Repr::Terms(terms.iter().map(|t| t.adjoint()).collect()),
        };
        Superoperator {
            hilbert_dim: self.hilbert_dim,
            picture: self.picture.flipped(),
            support: self.support.clone(),
            repr,
        }
    }

    /// Scale by a real factor.
    pub fn scaled(&self, a: T) -> Superoperator<T> {
        let repr = match &self.repr {
            Repr::Dense(m) => Repr::Dense(m.map(|c| c * C::new(a, T::zero()))),
            Repr::Csr(csr) => {
                let mut c2 = csr.clone();
                for v in &mut c2.vals {
                    *v *= C::new(a, T::zero());
                }
                Repr::Csr(c2)
            }
            Repr::Terms(terms) => Repr::Terms(terms.iter().map(|t| t.scaled(a)).collect()),
        };
        Superoperator {
            hilbert_dim: self.hilbert_dim,
            picture: self.picture,
            support: self.support.clone(),
            repr,
        }
    }

    /// Sum of this superoperator with additional embedded terms.
    pub fn with_terms(&self, extra: Vec<EmbeddedTerm<T>>) -> Superoperator<T> {
        match &self.repr {
            Repr::Terms(terms) => {
                let mut all = terms.clone();
                all.extend(extra);
                Superoperator {
                    hilbert_dim: self.hilbert_dim,
                    picture: self.picture,
                    support: self.support.clone(),
                    repr: Repr::Terms(all),
                }
            }
            _ => panic!("with_terms requires a term-sum representation"),
        }
    }

    /// Estimated nonzeros of the expanded sparse matrix.
    pub fn nnz_estimate(&self) -> usize {
        match &self.repr {
            Repr::Dense(m) => m.len(),
            Repr::Csr(csr) => csr.nnz(),
            Repr::Terms(terms) => terms.iter().map(|t| t.nnz_global()).sum(),
        }
    }

    /// Compress a term sum into CSR when the expanded matrix is small
    /// enough; speeds up repeated matvecs in the Krylov loop.
    pub fn compressed(&self, nnz_cap: usize) -> Superoperator<T> {
        match &self.repr {
            Repr::Terms(terms) if self.nnz_estimate() <= nnz_cap => {
                let mut triplets = Vec::with_capacity(self.nnz_estimate());
                for t in terms {
                    t.triplets(&mut triplets);
                }
                let csr = Csr::from_triplets(self.dim(), triplets);
                Superoperator {
                    hilbert_dim: self.hilbert_dim,
                    picture: self.picture,
                    support: self.support.clone(),
                    repr: Repr::Csr(csr),
                }
            }
            _ => self.clone(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C<T>> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            _ => {
                let dim = self.dim();
                let mut out = DMatrix::zeros(dim, dim);
                let mut e = vec![czero::<T>(); dim];
                for c in 0..dim {
                    e[c] = crate::scalar::cone();
                    let col = self.matvec(&e);
                    for (r, v) in col.iter().enumerate() {
                        out[(r, c)] = *v;
                    }
                    e[c] = czero();
                }
                out
            }
        }
    }

    /// Upper bound on the operator inf-norm, used for step-size heuristics.
    pub fn inf_norm_bound(&self) -> T {
        match &self.repr {
            Repr::Dense(m) => {
                let mut best = T::zero();
                for r in 0..m.nrows() {
                    let mut s = T::zero();
                    for c in 0..m.ncols() {
                        s += m[(r, c)].norm();
                    }
                    best = nalgebra::RealField::max(best, s);
                }
                best
            }
            Repr::Csr(csr) => csr.inf_norm(),
            Repr::Terms(terms) => terms.iter().map(|t| t.inf_norm).fold(T::zero(), |a, b| a + b),
        }
    }
}

/// Dense Heisenberg-picture generator of a Lindblad term:
/// A ↦ i[H,A] + Σ_j (K†AK − ½{K†K, A}), as a 4^m × 4^m matrix acting on
/// column-stacked A.
pub fn lindblad_heisenberg_dense<T: Scalar>(data: &LindbladData<T>) -> DMatrix<C<T>> {
    let d = data.dim();
    let id: DMatrix<C<T>> = DMatrix::identity(d, d);
    let h = &data.hamiltonian;
    // vec(i[H,A]) = i (I⊗H − Hᵀ⊗I) vec(A)
    let mut s = (id.kronecker(h) - h.transpose().kronecker(&id)).map(|c| c * ci::<T>());
    let mut m_total: DMatrix<C<T>> = DMatrix::zeros(d, d);
    for k in &data.jumps {
        // vec(K†AK) = (Kᵀ ⊗ K†) vec(A)
        s += k.transpose().kronecker(&k.adjoint());
        m_total += k.adjoint() * k;
    }
    let half = C::new(T::lit(0.5), T::zero());
    s -= (id.kronecker(&m_total) + m_total.transpose().kronecker(&id)).map(|c| c * half);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{identity, sigma_x, sigma_y, sigma_z, vectorize};
    use crate::lattice::Lattice;
    use approx::assert_relative_eq;

    fn depolarizing_data(gamma: f64) -> LindbladData<f64> {
        let r = (gamma / 2.0).sqrt();
        LindbladData::new(
            DMatrix::zeros(2, 2),
            vec![
                sigma_x::<f64>().map(|c| c * C::new(r, 0.0)),
                sigma_y::<f64>().map(|c| c * C::new(r, 0.0)),
                sigma_z::<f64>().map(|c| c * C::new(r, 0.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn depolarizing_generator_on_sigma_z() {
        let gamma = 0.8;
        let s = lindblad_heisenberg_dense(&depolarizing_data(gamma));
        let v = vectorize(&sigma_z::<f64>());
        let out = &s * v.clone();
        let expected = v.map(|c| c * C::new(-2.0 * gamma, 0.0));
        assert_relative_eq!((out - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn generator_annihilates_identity() {
        let s = lindblad_heisenberg_dense(&depolarizing_data(1.3));
        let out = &s * vectorize(&identity::<f64>(2));
        assert_relative_eq!(out.norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn hamiltonian_commutator_action() {
        let data = LindbladData::new(sigma_z::<f64>(), vec![]).unwrap();
        let s = lindblad_heisenberg_dense(&data);
        let out = &s * vectorize(&sigma_x::<f64>());
        // i[σz, σx] = -2 σy ... i(σzσx − σxσz) = i(2iσy) = −2σy
        let expected = vectorize(&sigma_y::<f64>()).map(|c| c * C::new(-2.0, 0.0));
        assert_relative_eq!((out - expected).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn embedded_term_matches_dense_kron() {
        // single-site term on site 1 of a 2-site chain: matvec must equal
        // the dense Kronecker expansion of the local superoperator.
        let lattice = Lattice::new(1, 2).unwrap();
        let supp = Region::site(lattice, vec![1]).unwrap();
        let local = lindblad_heisenberg_dense(&depolarizing_data(0.9));
        let term = EmbeddedTerm::new(&local, &supp, 2).unwrap();
        let sop = Superoperator::from_terms(
            vec![term],
            2,
            Picture::Heisenberg,
            Region::full(lattice),
        );
        let dense = sop.to_dense();

        // oracle: global superop from global Lindblad data
        let k_global: Vec<DMatrix<C<f64>>> = depolarizing_data(0.9)
            .jumps
            .iter()
            .map(|k| identity::<f64>(2).kronecker(k))
            .collect();
        let data_global = LindbladData::new(DMatrix::zeros(4, 4), k_global).unwrap();
        let dense_oracle = lindblad_heisenberg_dense(&data_global);
        assert_relative_eq!((dense - dense_oracle).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn csr_roundtrip_matches_terms() {
        let lattice = Lattice::new(1, 3).unwrap();
        let mut terms = Vec::new();
        for u in 0..3usize {
            let supp = Region::site(lattice, vec![u]).unwrap();
            let local = lindblad_heisenberg_dense(&depolarizing_data(0.5 + 0.1 * u as f64));
            terms.push(EmbeddedTerm::new(&local, &supp, 3).unwrap());
        }
        let sop = Superoperator::from_terms(terms, 3, Picture::Heisenberg, Region::full(lattice));
        let csr = sop.compressed(usize::MAX);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let x: Vec<C<f64>> = (0..sop.dim())
            .map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let y1 = sop.matvec(&x);
        let y2 = csr.matvec(&x);
        let diff: f64 = y1
            .iter()
            .zip(&y2)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-12, "csr/terms disagree by {diff}");
    }

    #[test]
    fn adjoint_is_conjugate_transpose() {
        let lattice = Lattice::new(1, 2).unwrap();
        let supp = Region::site(lattice, vec![0]).unwrap();
        let local = lindblad_heisenberg_dense(&depolarizing_data(0.7));
        let term = EmbeddedTerm::new(&local, &supp, 2).unwrap();
        let sop =
            Superoperator::from_terms(vec![term], 2, Picture::Heisenberg, Region::full(lattice));
        let lhs = sop.adjoint().to_dense();
        let rhs = sop.to_dense().adjoint();
        assert_relative_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(sop.adjoint().picture(), Picture::Schroedinger);
    }
}
