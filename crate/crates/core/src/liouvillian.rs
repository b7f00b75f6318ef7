//! Translationally invariant local Lindblad generators: template terms,
//! global assembly, restriction to smaller periodic lattices, and local
//! perturbations.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::algebra::superop::{lindblad_heisenberg_dense, EmbeddedTerm, Picture};
use crate::algebra::{
    cb_norm_bound, identity, vectorize, AlgebraError, LindbladData, Superoperator,
};
use crate::lattice::{Lattice, LatticeError, Region, Site};
use crate::scalar::{Scalar, C};

/// Default cap on the vectorized dimension of an assembled generator
/// (4^12); assembly above this refuses rather than thrashes.
pub const DEFAULT_DIMENSION_CAP: usize = 1 << 24;

#[derive(Debug, Error)]
pub enum LiouvillianError {
    #[error("assembled dimension {0} exceeds cap {1}")]
    DimensionCap(usize, usize),
    #[error("generator must annihilate the identity (residual {0})")]
    NonUnital(f64),
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("restricted lattice is degenerate (size {0} < 2)")]
    DegenerateRestriction(usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// A translation template: Lindblad data on an anchor site and a set of
/// relative offsets. Factor `t` of the data acts on `anchor + offsets[t]`.
///
/// Nearest-neighbor terms use forward offsets {0, e_1, ..., e_D} so the
/// lattice sum counts each bond once.
#[derive(Debug, Clone)]
pub struct LocalTerm<T: Scalar> {
    data: LindbladData<T>,
    offsets: Vec<Vec<isize>>,
}

impl<T: Scalar> LocalTerm<T> {
    pub fn new(data: LindbladData<T>, offsets: Vec<Vec<isize>>) -> Result<Self, LiouvillianError> {
        let expected = 1usize << offsets.len();
        if data.dim() != expected {
            return Err(AlgebraError::DimensionMismatch {
                expected,
                found: data.dim(),
            }
            .into());
        }
        let term = Self { data, offsets };
        term.check_unital()?;
        Ok(term)
    }

    /// Single-site template (1D offsets; works on any lattice dimension
    /// since a zero offset is dimension-agnostic only for D=1 — pass
    /// explicit offsets otherwise).
    pub fn on_site(data: LindbladData<T>, lattice_dim: usize) -> Result<Self, LiouvillianError> {
        assert_eq!(data.dim(), 2, "on_site expects 2x2 Lindblad data");
        Self::new(data, vec![vec![0; lattice_dim]])
    }

    pub fn data(&self) -> &LindbladData<T> {
        &self.data
    }

    pub fn offsets(&self) -> &[Vec<isize>] {
        &self.offsets
    }

    pub fn num_factors(&self) -> usize {
        self.offsets.len()
    }

    fn check_unital(&self) -> Result<(), LiouvillianError> {
        let s = self.heisenberg_dense();
        let d = self.data.dim();
        let residual = (&s * vectorize(&identity::<T>(d))).norm();
        let tol = nalgebra::RealField::max(T::lit(1e-12), T::epsilon() * T::lit(1000.0))
            * nalgebra::RealField::max(s.norm(), T::one());
        if residual > tol {
            return Err(LiouvillianError::NonUnital(
                num_traits::ToPrimitive::to_f64(&residual).unwrap_or(f64::NAN),
            ));
        }
        Ok(())
    }

    /// Dense Heisenberg-picture superoperator on the term's own support.
    pub fn heisenberg_dense(&self) -> DMatrix<C<T>> {
        lindblad_heisenberg_dense(&self.data)
    }

    /// The local generator as a [`Superoperator`] on a host lattice,
    /// anchored at a site.
    pub fn heisenberg_superop(
        &self,
        lattice: &Lattice,
        anchor: &[usize],
    ) -> Result<Superoperator<T>, LiouvillianError> {
        let sites = self.support_sites(lattice, anchor);
        let region = Region::new(*lattice, sites)?;
        Ok(Superoperator::from_dense(
            self.heisenberg_dense(),
            Picture::Heisenberg,
            region,
        )?)
    }

    /// Analytic cb-norm upper bound of the template.
    pub fn cb_bound(&self) -> Result<T, LiouvillianError> {
        Ok(cb_norm_bound(&self.data)?)
    }

    /// Rescaled copy with cb-norm bound at most 1.
    pub fn normalized(&self) -> Result<Self, LiouvillianError> {
        let b = self.cb_bound()?;
        if b <= T::one() {
            return Ok(self.clone());
        }
        Ok(Self {
            data: self.data.scaled(T::one() / b),
            offsets: self.offsets.clone(),
        })
    }

    /// Support sites (in tensor-factor order) of the term anchored at a site.
    pub fn support_sites(&self, lattice: &Lattice, anchor: &[usize]) -> Vec<Site> {
        self.offsets
            .iter()
            .map(|off| lattice.translate(anchor, off))
            .collect()
    }

    fn embedded_at(
        &self,
        lattice: &Lattice,
        anchor: &[usize],
        local_dense: &DMatrix<C<T>>,
    ) -> Result<EmbeddedTerm<T>, LiouvillianError> {
        let sites = self.support_sites(lattice, anchor);
        let mut indices = Vec::with_capacity(sites.len());
        for s in &sites {
            if !lattice.contains(s) {
                return Err(LiouvillianError::SupportViolation(format!(
                    "site {s:?} outside lattice"
                )));
            }
            indices.push(lattice.site_index(s));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(LiouvillianError::SupportViolation(
                "template support self-overlaps on this lattice".into(),
            ));
        }
        Ok(EmbeddedTerm::with_sites(
            local_dense,
            &indices,
            lattice.num_sites(),
        )?)
    }
}

/// A local perturbation term E_u, translated over the lattice.
#[derive(Debug, Clone)]
pub enum PerturbationTerm<T: Scalar> {
    /// E_u is itself of Lindblad form (guarantees a physical perturbed
    /// generator).
    Lindblad(LindbladData<T>),
    /// E_u is a difference of two Lindblad generators.
    Difference(LindbladData<T>, LindbladData<T>),
    /// Raw unital Heisenberg-picture superoperator delta; physicality of
    /// the perturbed generator is not checked.
    RawUnital(DMatrix<C<T>>),
}

impl<T: Scalar> PerturbationTerm<T> {
    /// Dense Heisenberg superoperator of the term.
    pub fn heisenberg_dense(&self) -> DMatrix<C<T>> {
        match self {
            PerturbationTerm::Lindblad(d) => lindblad_heisenberg_dense(d),
            PerturbationTerm::Difference(a, b) => {
                lindblad_heisenberg_dense(a) - lindblad_heisenberg_dense(b)
            }
            PerturbationTerm::RawUnital(m) => m.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PerturbationTerm::Lindblad(d) => d.dim(),
            PerturbationTerm::Difference(a, _) => a.dim(),
            PerturbationTerm::RawUnital(m) => (m.nrows() as f64).sqrt().round() as usize,
        }
    }

    /// Whether the physicality of the perturbed generator is guaranteed by
    /// construction.
    pub fn physicality_checked(&self) -> bool {
        !matches!(self, PerturbationTerm::RawUnital(_))
    }

    /// cb-norm upper bound. Differences whose jump lists pair off as scalar
    /// multiples are collapsed into a single Lindblad generator first.
    pub fn cb_bound(&self) -> Result<T, LiouvillianError> {
        match self {
            PerturbationTerm::Lindblad(d) => Ok(cb_norm_bound(d)?),
            PerturbationTerm::Difference(a, b) => {
                if let Some(collapsed) = collapse_difference(a, b) {
                    Ok(cb_norm_bound(&collapsed)?)
                } else {
                    Ok(cb_norm_bound(a)? + cb_norm_bound(b)?)
                }
            }
            PerturbationTerm::RawUnital(m) => {
                // ||T||_cb <= d ||T||; crude but only used as a strength
                // certificate for raw deltas.
                let d = T::lit(self.dim() as f64);
                Ok(d * crate::algebra::operator_norm(m)?)
            }
        }
    }
}

/// If every jump of `b` is a scalar multiple of the matching jump of `a`
/// (same order), the dissipator difference is again of Lindblad form with
/// rescaled rates; returns that collapsed generator.
fn collapse_difference<T: Scalar>(
    a: &LindbladData<T>,
    b: &LindbladData<T>,
) -> Option<LindbladData<T>> {
    if a.jumps.len() != b.jumps.len() {
        return None;
    }
    let mut jumps = Vec::new();
    for (ka, kb) in a.jumps.iter().zip(&b.jumps) {
        // kb = c * ka for a real scalar c?
        let na2 = ka.norm_squared();
        if na2 == T::zero() {
            if kb.norm() != T::zero() {
                return None;
            }
            continue;
        }
        let c = crate::algebra::hs_inner(ka, kb) / C::new(na2, T::zero());
        if num_traits::Float::abs(c.im) > T::lit(1e-12) {
            return None;
        }
        let residual = (kb - ka.map(|x| x * c)).norm();
        if residual > T::lit(1e-12) * nalgebra::RealField::max(kb.norm(), T::one()) {
            return None;
        }
        // dissipator difference rate: c^2 - 1 times the a-dissipator
        let rate = c.re * c.re - T::one();
        let scale = num_traits::Float::sqrt(num_traits::Float::abs(rate));
        jumps.push(ka.map(|x| x * C::new(scale, T::zero())));
    }
    let h = &b.hamiltonian - &a.hamiltonian;
    LindbladData::new(h, jumps).ok()
}

/// A per-site perturbation Σ_u E_u with nominal strength ε.
#[derive(Debug, Clone)]
pub struct Perturbation<T: Scalar> {
    term: PerturbationTerm<T>,
    offsets: Vec<Vec<isize>>,
    strength: T,
}

impl<T: Scalar> Perturbation<T> {
    pub fn new(
        term: PerturbationTerm<T>,
        offsets: Vec<Vec<isize>>,
        strength: T,
    ) -> Result<Self, LiouvillianError> {
        if strength < T::zero() {
            return Err(LiouvillianError::SupportViolation(
                "perturbation strength must be non-negative".into(),
            ));
        }
        let expected = 1usize << offsets.len();
        if term.dim() != expected {
            return Err(AlgebraError::DimensionMismatch {
                expected,
                found: term.dim(),
            }
            .into());
        }
        let p = Self {
            term,
            offsets,
            strength,
        };
        p.check_unital()?;
        Ok(p)
    }

    pub fn term(&self) -> &PerturbationTerm<T> {
        &self.term
    }

    pub fn strength(&self) -> T {
        self.strength
    }

    pub fn offsets(&self) -> &[Vec<isize>] {
        &self.offsets
    }

    pub fn cb_bound(&self) -> Result<T, LiouvillianError> {
        self.term.cb_bound()
    }

    fn check_unital(&self) -> Result<(), LiouvillianError> {
        let s = self.term.heisenberg_dense();
        let d = self.term.dim();
        let residual = (&s * vectorize(&identity::<T>(d))).norm();
        let tol = nalgebra::RealField::max(T::lit(1e-10), T::epsilon() * T::lit(1000.0))
            * nalgebra::RealField::max(s.norm(), T::one());
        if residual > tol {
            return Err(LiouvillianError::NonUnital(
                num_traits::ToPrimitive::to_f64(&residual).unwrap_or(f64::NAN),
            ));
        }
        Ok(())
    }
}

/// A translationally invariant local Liouvillian L = Σ_u L_u, possibly
/// carrying per-site perturbations.
#[derive(Debug, Clone)]
pub struct Liouvillian<T: Scalar> {
    lattice: Lattice,
    template: LocalTerm<T>,
    perturbations: Vec<Perturbation<T>>,
    dimension_cap: usize,
}

impl<T: Scalar> Liouvillian<T> {
    pub fn new(lattice: Lattice, template: LocalTerm<T>) -> Self {
        Self {
            lattice,
            template,
            perturbations: Vec::new(),
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn with_dimension_cap(mut self, cap: usize) -> Self {
        self.dimension_cap = cap;
        self
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn template(&self) -> &LocalTerm<T> {
        &self.template
    }

    pub fn perturbations(&self) -> &[Perturbation<T>] {
        &self.perturbations
    }

    pub fn is_perturbed(&self) -> bool {
        !self.perturbations.is_empty()
    }

    /// Vectorized dimension of the assembled generator (4^n).
    pub fn superop_dim(&self) -> usize {
        let n = self.lattice.num_sites();
        1usize << (2 * n)
    }

    /// Apply a perturbation, returning the perturbed Liouvillian.
    pub fn perturbed(&self, p: Perturbation<T>) -> Result<Liouvillian<T>, LiouvillianError> {
        // support must stay within the anchor's neighborhood
        for off in p.offsets() {
            if off.iter().any(|&o| o.unsigned_abs() > 1) {
                return Err(LiouvillianError::SupportViolation(
                    "perturbation offsets must stay within the anchor's neighborhood".into(),
                ));
            }
        }
        let mut out = self.clone();
        out.perturbations.push(p);
        Ok(out)
    }

    /// Assemble the global Heisenberg-picture generator as a sum of
    /// translated embedded terms.
    pub fn assemble(&self) -> Result<Superoperator<T>, LiouvillianError> {
        let n = self.lattice.num_sites();
        let dim = self.superop_dim();
        if dim > self.dimension_cap {
            return Err(LiouvillianError::DimensionCap(dim, self.dimension_cap));
        }
        let local = self.template.heisenberg_dense();
        let mut terms = Vec::with_capacity(n);
        for anchor in self.lattice.sites() {
            terms.push(self.template.embedded_at(&self.lattice, &anchor, &local)?);
        }
        for p in &self.perturbations {
            let pd = p.term.heisenberg_dense();
            if p.strength() == T::zero() {
                continue;
            }
            let scaled = pd.map(|c| c * C::new(p.strength(), T::zero()));
            for anchor in self.lattice.sites() {
                let sites: Vec<Site> = p
                    .offsets
                    .iter()
                    .map(|off| self.lattice.translate(&anchor, off))
                    .collect();
                let mut indices = Vec::with_capacity(sites.len());
                for s in &sites {
                    indices.push(self.lattice.site_index(s));
                }
                let mut sorted = indices.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != indices.len() {
                    return Err(LiouvillianError::SupportViolation(
                        "perturbation support self-overlaps on this lattice".into(),
                    ));
                }
                terms.push(EmbeddedTerm::with_sites(&scaled, &indices, n)?);
            }
        }
        let sop = Superoperator::from_terms(
            terms,
            n,
            Picture::Heisenberg,
            Region::full(self.lattice),
        );
        // Compress to CSR when the expanded matrix is modest.
        Ok(sop.compressed(30_000_000 / std::mem::size_of::<C<T>>()))
    }

    /// The sub-generator keeping only the translated template terms whose
    /// support lies entirely inside `region` (perturbations are dropped).
    /// When the region covers the lattice this equals the unperturbed
    /// [`assemble`](Self::assemble) result exactly.
    pub fn assemble_within(&self, region: &Region) -> Result<Superoperator<T>, LiouvillianError> {
        let n = self.lattice.num_sites();
        let dim = self.superop_dim();
        if dim > self.dimension_cap {
            return Err(LiouvillianError::DimensionCap(dim, self.dimension_cap));
        }
        let local = self.template.heisenberg_dense();
        let mut terms = Vec::new();
        for anchor in self.lattice.sites() {
            let support = self.template.support_sites(&self.lattice, &anchor);
            if support.iter().all(|s| region.contains(s)) {
                terms.push(self.template.embedded_at(&self.lattice, &anchor, &local)?);
            }
        }
        let sop = Superoperator::from_terms(
            terms,
            n,
            Picture::Heisenberg,
            region.clone(),
        );
        Ok(sop.compressed(30_000_000 / std::mem::size_of::<C<T>>()))
    }

    /// The same template instantiated on the smaller periodic lattice that
    /// matches X(s): one torus of linear size min(diam(X)+2s+1, L).
    pub fn restricted(&self, x: &Region, s: usize) -> Result<Liouvillian<T>, LiouvillianError> {
        let size = self.restricted_size(x, s)?;
        if size < 2 {
            return Err(LiouvillianError::DegenerateRestriction(size));
        }
        let lat = Lattice::new(self.lattice.dimension(), size)?;
        Ok(Liouvillian {
            lattice: lat,
            template: self.template.clone(),
            perturbations: self.perturbations.clone(),
            dimension_cap: self.dimension_cap,
        })
    }

    /// Linear size of the restriction: diam(X)+2s+1 capped at L.
    pub fn restricted_size(&self, x: &Region, s: usize) -> Result<usize, LiouvillianError> {
        let diam = x.diameter()?;
        Ok((diam + 2 * s + 1).min(self.lattice.size()))
    }
}

/// Map an observable support on the global lattice to the corresponding
/// support on a restricted lattice, anchoring the first site of `x` at the
/// origin of the small torus.
pub fn map_region_to(x: &Region, target: Lattice) -> Result<Region, LatticeError> {
    let base = &x.sites()[0];
    let l = x.lattice().size() as isize;
    let ls = target.size() as isize;
    let mut sites = Vec::with_capacity(x.len());
    for s in x.sites() {
        let mut coords = Vec::with_capacity(s.len());
        for (c, b) in s.iter().zip(base.iter()) {
            // centered signed difference on the big torus
            let mut d = (*c as isize - *b as isize) % l;
            if d > l / 2 {
                d -= l;
            }
            if d < -(l - 1) / 2 {
                d += l;
            }
            coords.push((((d % ls) + ls) % ls) as usize);
        }
        sites.push(coords);
    }
    Region::new(target, sites)
}

/// Hilbert-space permutation operator translating every site by `delta`
/// (used in translation-covariance tests).
pub fn translation_matrix<T: Scalar>(lattice: &Lattice, delta: &[isize]) -> DMatrix<C<T>> {
    let n = lattice.num_sites();
    let dim = 1usize << n;
    let mut p = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        // site k holds bit (n-1-k); translated index moves each bit from
        // site k to site k+delta
        let mut j = 0usize;
        for k in 0..n {
            let bit = (i >> (n - 1 - k)) & 1;
            if bit == 1 {
                let site = lattice.site_at(k);
                let moved = lattice.translate(&site, delta);
                let k2 = lattice.site_index(&moved);
                j |= 1 << (n - 1 - k2);
            }
        }
        p[(j, i)] = crate::scalar::cone();
    }
    p
}
