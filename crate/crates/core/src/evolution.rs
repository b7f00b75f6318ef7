//! Semigroup action e^{tL}(A) via Krylov exponential-action with adaptive
//! substepping, fixed-point computation, and the infinite-time limit.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::algebra::expm::expm;
use crate::algebra::superop::Picture;
use crate::algebra::{devectorize, identity, vectorize, AlgebraError, Superoperator};
use crate::scalar::{czero, Scalar, C};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("Krylov iteration did not converge (residual {0})")]
    NonConvergent(f64),
    #[error("operator dimension {found} does not match generator dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("negative evolution time {0}")]
    NegativeTime(f64),
    #[error("degenerate fixed point: kernel dimension {0} > 1")]
    DegenerateFixedPoint(usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Integrator settings for the Krylov exponential action.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorSettings<T: Scalar> {
    /// relative tolerance for the substep-doubling check
    pub rel_tol: T,
    /// Krylov subspace dimension
    pub krylov_dim: usize,
    /// refinement doublings before giving up
    pub max_doublings: u32,
}

impl<T: Scalar> Default for IntegratorSettings<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-9),
            krylov_dim: 30,
            max_doublings: 24,
        }
    }
}

/// Evolution engine bound to one generator; immutable after construction,
/// evolve calls are independent.
#[derive(Debug, Clone)]
pub struct EvolutionEngine<T: Scalar> {
    generator: Superoperator<T>,
    settings: IntegratorSettings<T>,
    norm_bound: T,
}

impl<T: Scalar> EvolutionEngine<T> {
    pub fn new(generator: Superoperator<T>) -> Self {
        Self::with_settings(generator, IntegratorSettings::default())
    }

    pub fn with_settings(generator: Superoperator<T>, settings: IntegratorSettings<T>) -> Self {
        let norm_bound = generator.inf_norm_bound();
        Self {
            generator,
            settings,
            norm_bound,
        }
    }

    pub fn generator(&self) -> &Superoperator<T> {
        &self.generator
    }

    pub fn settings(&self) -> &IntegratorSettings<T> {
        &self.settings
    }

    /// e^{tG} v with adaptive substepping: the substep count is doubled
    /// until two successive refinements agree to tolerance.
    pub fn evolve_vec(&self, v: &[C<T>], t: T) -> Result<Vec<C<T>>, EvolutionError> {
        if t < T::zero() {
            return Err(EvolutionError::NegativeTime(
                num_traits::ToPrimitive::to_f64(&t).unwrap_or(f64::NAN),
            ));
        }
        if v.len() != self.generator.dim() {
            return Err(EvolutionError::DimensionMismatch {
                expected: self.generator.dim(),
                found: v.len(),
            });
        }
        if t == T::zero() {
            return Ok(v.to_vec());
        }
        krylov_expv(
            &|x| self.generator.matvec(x),
            self.norm_bound,
            &self.settings,
            v,
            t,
        )
    }

    /// Evolve an operator matrix by time t.
    pub fn evolve_matrix(
        &self,
        a: &DMatrix<C<T>>,
        t: T,
    ) -> Result<DMatrix<C<T>>, EvolutionError> {
        let v = vectorize(a);
        let w = self.evolve_vec(v.as_slice(), t)?;
        Ok(devectorize(&w)?)
    }

    /// Evolve along a non-decreasing time grid, reusing the semigroup
    /// property so each point steps from the previous one.
    pub fn evolve_grid(
        &self,
        a: &DMatrix<C<T>>,
        times: &[T],
    ) -> Result<Vec<DMatrix<C<T>>>, EvolutionError> {
        let mut out = Vec::with_capacity(times.len());
        let mut cur = vectorize(a).as_slice().to_vec();
        let mut t_prev = T::zero();
        for &t in times {
            if t < t_prev {
                return Err(EvolutionError::NegativeTime(
                    num_traits::ToPrimitive::to_f64(&(t - t_prev)).unwrap_or(f64::NAN),
                ));
            }
            cur = self.evolve_vec(&cur, t - t_prev)?;
            t_prev = t;
            out.push(devectorize(&cur)?);
        }
        Ok(out)
    }
}

/// e^{tG} v for an arbitrary linear map given by its matvec closure and an
/// upper bound on its norm. Substeps are doubled until two refinements agree.
pub fn krylov_expv<T: Scalar>(
    matvec: &dyn Fn(&[C<T>]) -> Vec<C<T>>,
    norm_bound: T,
    settings: &IntegratorSettings<T>,
    v: &[C<T>],
    t: T,
) -> Result<Vec<C<T>>, EvolutionError> {
    if t == T::zero() {
        return Ok(v.to_vec());
    }
    // start near ||tG|| / 20 substeps so the doubling loop is short
    let ratio = num_traits::ToPrimitive::to_f64(&(t * norm_bound)).unwrap_or(1.0);
    let mut substeps = ((ratio / 20.0).ceil() as usize).max(1);
    let mut prev = run_substeps(matvec, norm_bound, settings, v, t, substeps)?;
    for _ in 0..settings.max_doublings {
        substeps *= 2;
        let next = run_substeps(matvec, norm_bound, settings, v, t, substeps)?;
        let diff = vec_diff_norm(&prev, &next);
        let scale = nalgebra::RealField::max(vec_norm(&next), T::one());
        if diff <= settings.rel_tol * scale {
            return Ok(next);
        }
        prev = next;
    }
    Err(EvolutionError::NonConvergent(
        num_traits::ToPrimitive::to_f64(&vec_diff_norm(&prev, v)).unwrap_or(f64::NAN),
    ))
}

fn run_substeps<T: Scalar>(
    matvec: &dyn Fn(&[C<T>]) -> Vec<C<T>>,
    norm_bound: T,
    settings: &IntegratorSettings<T>,
    v: &[C<T>],
    t: T,
    n: usize,
) -> Result<Vec<C<T>>, EvolutionError> {
    let tau = t / T::lit(n as f64);
    let mut cur = v.to_vec();
    for _ in 0..n {
        cur = krylov_step(matvec, norm_bound, settings, &cur, tau)?;
    }
    Ok(cur)
}

fn krylov_step<T: Scalar>(
    matvec: &dyn Fn(&[C<T>]) -> Vec<C<T>>,
    norm_bound: T,
    settings: &IntegratorSettings<T>,
    v: &[C<T>],
    tau: T,
) -> Result<Vec<C<T>>, EvolutionError> {
    let dim = v.len();
    let beta = vec_norm(v);
    if beta == T::zero() {
        return Ok(v.to_vec());
    }
    let m = settings.krylov_dim.min(dim);
    let mut basis: Vec<Vec<C<T>>> = Vec::with_capacity(m + 1);
    basis.push(v.iter().map(|c| c / C::new(beta, T::zero())).collect());
    let mut h = DMatrix::<C<T>>::zeros(m + 1, m);
    let breakdown =
        T::epsilon() * T::lit(100.0) * nalgebra::RealField::max(norm_bound, T::one());
    let mut m_eff = m;
    for j in 0..m {
        let mut w = matvec(&basis[j]);
        // modified Gram-Schmidt with one reorthogonalization pass
        for _pass in 0..2 {
            for (i, b) in basis.iter().enumerate().take(j + 1) {
                let coeff = dotc(b, &w);
                h[(i, j)] += coeff;
                axpy(&mut w, -coeff, b);
            }
        }
        let wn = vec_norm(&w);
        h[(j + 1, j)] = C::new(wn, T::zero());
        if wn <= breakdown {
            m_eff = j + 1;
            break;
        }
        basis.push(w.iter().map(|c| c / C::new(wn, T::zero())).collect());
    }
    let hm = h.view((0, 0), (m_eff, m_eff)).into_owned();
    let e = expm(&hm.map(|c| c * C::new(tau, T::zero())));
    let mut out = vec![czero::<T>(); dim];
    for (k, b) in basis.iter().enumerate().take(m_eff) {
        let coeff = e[(k, 0)] * C::new(beta, T::zero());
        axpy(&mut out, coeff, b);
    }
    Ok(out)
}

fn vec_norm<T: Scalar>(v: &[C<T>]) -> T {
    num_traits::Float::sqrt(v.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b))
}

fn vec_diff_norm<T: Scalar>(a: &[C<T>], b: &[C<T>]) -> T {
    num_traits::Float::sqrt(
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm_sqr())
            .fold(T::zero(), |acc, d| acc + d),
    )
}

fn dotc<T: Scalar>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy<T: Scalar>(y: &mut [C<T>], alpha: C<T>, x: &[C<T>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// How the fixed-point uniqueness claim was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certification {
    /// dense kernel count of the Schrödinger dual
    DenseKernel,
    /// long-time evolution of two independent probe states
    ProbeHeuristic,
}

/// The stationary state of a generator with a one-dimensional kernel.
#[derive(Debug, Clone)]
pub struct FixedPoint<T: Scalar> {
    pub rho: DMatrix<C<T>>,
    pub residual: T,
    pub kernel_dim: usize,
    pub certification: Certification,
}

/// Largest superoperator dimension handled by the dense kernel solver (4^5).
pub const DENSE_KERNEL_CAP: usize = 1024;

/// Compute the fixed point of a Heisenberg-picture generator by finding
/// the kernel of its Schrödinger dual.
pub fn fixed_point<T: Scalar>(
    generator: &Superoperator<T>,
) -> Result<FixedPoint<T>, EvolutionError> {
    assert_eq!(
        generator.picture(),
        Picture::Heisenberg,
        "fixed_point expects the Heisenberg generator"
    );
    let dual = generator.adjoint();
    if generator.dim() <= DENSE_KERNEL_CAP {
        fixed_point_dense(&dual)
    } else {
        fixed_point_iterative(&dual)
    }
}

fn fixed_point_dense<T: Scalar>(dual: &Superoperator<T>) -> Result<FixedPoint<T>, EvolutionError> {
    let m = dual.to_dense();
    let svd = m.clone().svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(T::zero(), |a, b| {
        nalgebra::RealField::max(a, b)
    });
    let tol = T::lit(1e-10) * nalgebra::RealField::max(smax, T::one());
    let kernel_dim = sv.iter().filter(|&&s| s < tol).count();
    if kernel_dim == 0 {
        return Err(EvolutionError::NonConvergent(f64::NAN));
    }
    if kernel_dim > 1 {
        return Err(EvolutionError::DegenerateFixedPoint(kernel_dim));
    }
    // right singular vector of the smallest singular value
    let vt = svd.v_t.as_ref().expect("V requested");
    let (min_idx, _) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let row = vt.row(min_idx);
    let vec: Vec<C<T>> = row.iter().map(|c| c.conj()).collect();
    let rho_raw = devectorize(&vec)?;
    let rho = normalize_state(&rho_raw);
    let residual = residual_of(dual, &rho);
    Ok(FixedPoint {
        rho,
        residual,
        kernel_dim: 1,
        certification: Certification::DenseKernel,
    })
}

fn fixed_point_iterative<T: Scalar>(
    dual: &Superoperator<T>,
) -> Result<FixedPoint<T>, EvolutionError> {
    let n = dual.hilbert_dim();
    let engine = EvolutionEngine::new(dual.clone());
    let max_t = T::lit(4096.0);
    let res_tol = T::lit(1e-10);

    let relax = |rho0: DMatrix<C<T>>| -> Result<(DMatrix<C<T>>, T), EvolutionError> {
        let mut rho = rho0;
        let mut t = T::one();
        loop {
            let res = residual_of(dual, &rho);
            if res <= res_tol {
                return Ok((rho, res));
            }
            if t > max_t {
                return Err(EvolutionError::NonConvergent(
                    num_traits::ToPrimitive::to_f64(&res).unwrap_or(f64::NAN),
                ));
            }
            rho = normalize_state(&engine.evolve_matrix(&rho, t)?);
            t = t * T::lit(2.0);
        }
    };

    let maximally_mixed =
        identity::<T>(n).map(|c| c * C::new(T::one() / T::lit(n as f64), T::zero()));
    let (rho, residual) = relax(maximally_mixed)?;

    // second, independent probe state: |0...0><0...0|
    let mut pure0 = DMatrix::zeros(n, n);
    pure0[(0, 0)] = crate::scalar::cone::<T>();
    let (rho2, _) = relax(pure0)?;
    let dist = crate::algebra::trace_norm(&(&rho - &rho2))?;
    if dist > T::lit(1e-7) {
        return Err(EvolutionError::DegenerateFixedPoint(2));
    }
    Ok(FixedPoint {
        rho,
        residual,
        kernel_dim: 1,
        certification: Certification::ProbeHeuristic,
    })
}

fn residual_of<T: Scalar>(dual: &Superoperator<T>, rho: &DMatrix<C<T>>) -> T {
    let v = vectorize(rho);
    let out = dual.matvec(v.as_slice());
    vec_norm(&out)
}

/// Hermitize and normalize to unit trace.
fn normalize_state<T: Scalar>(raw: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let herm = (raw + raw.adjoint()).map(|c| c * C::new(T::lit(0.5), T::zero()));
    let tr: C<T> = herm.diagonal().iter().cloned().sum();
    herm.map(|c| c / tr)
}

/// A(∞) = tr(A ρ∞) · 1.
pub fn infinite_time_limit<T: Scalar>(
    a: &DMatrix<C<T>>,
    fp: &FixedPoint<T>,
) -> DMatrix<C<T>> {
    let n = a.nrows();
    let expectation: C<T> = (a * &fp.rho).diagonal().iter().cloned().sum();
    identity::<T>(n).map(|c| c * expectation)
}

/// Steady-state expectation tr(A ρ∞).
pub fn steady_expectation<T: Scalar>(a: &DMatrix<C<T>>, fp: &FixedPoint<T>) -> C<T> {
    (a * &fp.rho).diagonal().iter().cloned().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{operator_norm, sigma_z, Operator};
    use crate::lattice::{Lattice, Region};
    use crate::liouvillian::Liouvillian;
    use crate::presets;

    fn depolarizing_engine(l: usize, gamma: f64) -> EvolutionEngine<f64> {
        let lattice = Lattice::new(1, l).unwrap();
        let liou = Liouvillian::new(lattice, presets::depolarizing_term::<f64>(gamma));
        EvolutionEngine::new(liou.assemble().unwrap())
    }

    fn sigma_z_at(l: usize, site: usize) -> DMatrix<C<f64>> {
        let lattice = Lattice::new(1, l).unwrap();
        let op = Operator::new(
            sigma_z::<f64>(),
            Region::site(lattice, vec![site]).unwrap(),
        )
        .unwrap();
        op.embed().unwrap().matrix().clone()
    }

    #[test]
    fn depolarizing_sigma_z_decays_analytically() {
        let gamma = 0.85;
        let engine = depolarizing_engine(3, gamma);
        let a = sigma_z_at(3, 0);
        for &t in &[0.2, 0.9, 2.3] {
            let at = engine.evolve_matrix(&a, t).unwrap();
            let expected = a.map(|c| c * C::new((-2.0 * gamma * t).exp(), 0.0));
            assert!((at - expected).norm() < 1e-8);
        }
    }

    #[test]
    fn identity_is_invariant() {
        let engine = depolarizing_engine(3, 1.0);
        let id = identity::<f64>(8);
        let out = engine.evolve_matrix(&id, 1.7).unwrap();
        assert!((out - id).norm() < 1e-8);
    }

    #[test]
    fn semigroup_property() {
        let lattice = Lattice::new(1, 3).unwrap();
        let liou = Liouvillian::new(lattice, presets::depolarizing_ising_term::<f64>(1.0, 0.6));
        let engine = EvolutionEngine::new(liou.assemble().unwrap());
        let a = sigma_z_at(3, 0);
        let one = engine
            .evolve_matrix(&engine.evolve_matrix(&a, 0.7).unwrap(), 0.5)
            .unwrap();
        let two = engine.evolve_matrix(&a, 1.2).unwrap();
        assert!((one - two).norm() < 1e-7);
    }

    #[test]
    fn krylov_matches_dense_exponential() {
        let lattice = Lattice::new(1, 3).unwrap();
        let liou = Liouvillian::new(lattice, presets::depolarizing_ising_term::<f64>(0.9, 0.4));
        let g = liou.assemble().unwrap();
        let engine = EvolutionEngine::new(g.clone());
        let a = sigma_z_at(3, 1);
        let t = 0.8;
        let krylov = engine.evolve_matrix(&a, t).unwrap();
        let dense = expm(&g.to_dense().map(|c| c * C::new(t, 0.0)));
        let oracle = devectorize((dense * vectorize(&a)).as_slice()).unwrap();
        assert!((krylov - oracle).norm() < 1e-9);
    }

    #[test]
    fn contractivity_in_operator_norm() {
        let lattice = Lattice::new(1, 3).unwrap();
        let liou = Liouvillian::new(lattice, presets::depolarizing_ising_term::<f64>(1.0, 0.5));
        let engine = EvolutionEngine::new(liou.assemble().unwrap());
        let a = sigma_z_at(3, 0);
        let norm0 = operator_norm(&a).unwrap();
        for &t in &[0.5, 2.0, 8.0] {
            let at = engine.evolve_matrix(&a, t).unwrap();
            assert!(operator_norm(&at).unwrap() <= norm0 * (1.0 + 1e-8));
        }
    }

    #[test]
    fn duality_of_pictures() {
        use rand::{Rng, SeedableRng};
        let lattice = Lattice::new(1, 2).unwrap();
        let liou = Liouvillian::new(lattice, presets::depolarizing_ising_term::<f64>(0.7, 0.3));
        let g = liou.assemble().unwrap();
        let heis = EvolutionEngine::new(g.clone());
        let schr = EvolutionEngine::new(g.adjoint());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let mut mk = || {
            let raw = DMatrix::<C<f64>>::from_fn(4, 4, |_, _| {
                C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            (&raw + raw.adjoint()) * C::new(0.5, 0.0)
        };
        let a = mk();
        let rho = mk();
        let t = 1.1;
        let lhs: C<f64> = (heis.evolve_matrix(&a, t).unwrap() * &rho)
            .diagonal()
            .iter()
            .cloned()
            .sum();
        let rhs: C<f64> = (&a * schr.evolve_matrix(&rho, t).unwrap())
            .diagonal()
            .iter()
            .cloned()
            .sum();
        assert!((lhs - rhs).norm() < 1e-8);
    }

    #[test]
    fn fixed_point_depolarizing_is_maximally_mixed() {
        let lattice = Lattice::new(1, 4).unwrap();
        let liou = Liouvillian::new(lattice, presets::depolarizing_term::<f64>(1.0));
        let fp = fixed_point(&liou.assemble().unwrap()).unwrap();
        let expected = identity::<f64>(16).map(|c| c * C::new(1.0 / 16.0, 0.0));
        assert!(crate::algebra::trace_norm(&(fp.rho.clone() - expected)).unwrap() < 1e-10);
        assert_eq!(fp.kernel_dim, 1);
        assert!(fp.residual < 1e-10);
    }

    #[test]
    fn dephasing_fixed_point_is_degenerate() {
        let lattice = Lattice::new(1, 2).unwrap();
        let liou = Liouvillian::new(lattice, presets::dephasing_term::<f64>(1.0));
        match fixed_point(&liou.assemble().unwrap()) {
            Err(EvolutionError::DegenerateFixedPoint(k)) => assert!(k > 1),
            other => panic!("expected degenerate fixed point, got {other:?}"),
        }
    }

    #[test]
    fn iterative_fixed_point_matches_dense() {
        // dim 4^6 forces the probe-based path; depolarizing fixed point is
        // still the maximally mixed state.
        let lattice = Lattice::new(1, 6).unwrap();
        let liou = Liouvillian::new(lattice, presets::depolarizing_term::<f64>(1.0));
        let fp = fixed_point(&liou.assemble().unwrap()).unwrap();
        assert_eq!(fp.certification, Certification::ProbeHeuristic);
        let expected = identity::<f64>(64).map(|c| c * C::new(1.0 / 64.0, 0.0));
        assert!(crate::algebra::trace_norm(&(fp.rho.clone() - expected)).unwrap() < 1e-8);
    }

    #[test]
    fn infinite_time_limit_examples() {
        let lattice = Lattice::new(1, 3).unwrap();
        let liou = Liouvillian::new(lattice, presets::depolarizing_term::<f64>(1.0));
        let fp = fixed_point(&liou.assemble().unwrap()).unwrap();
        let a = sigma_z_at(3, 0);
        let lim = infinite_time_limit(&a, &fp);
        assert!(lim.norm() < 1e-10);
        let id = identity::<f64>(8);
        assert!((infinite_time_limit(&id, &fp) - &id).norm() < 1e-10);
        // projector |0><0| on site 0: expectation 1/2
        let mut p = DMatrix::<C<f64>>::zeros(2, 2);
        p[(0, 0)] = C::new(1.0, 0.0);
        let proj = Operator::new(
            p,
            Region::site(Lattice::new(1, 3).unwrap(), vec![0]).unwrap(),
        )
        .unwrap()
        .embed()
        .unwrap();
        let lim = infinite_time_limit(proj.matrix(), &fp);
        assert!((lim - id.map(|c| c * C::new(0.5, 0.0))).norm() < 1e-10);
    }

    #[test]
    fn negative_time_rejected() {
        let engine = depolarizing_engine(2, 1.0);
        let id = identity::<f64>(4);
        assert!(matches!(
            engine.evolve_matrix(&id, -0.1),
            Err(EvolutionError::NegativeTime(_))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let engine = depolarizing_engine(2, 1.0);
        let a = identity::<f64>(2);
        assert!(matches!(
            engine.evolve_matrix(&a, 0.5),
            Err(EvolutionError::DimensionMismatch { .. })
        ));
    }
}
