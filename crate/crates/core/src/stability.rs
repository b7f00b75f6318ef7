//! The headline experiment: deviation of perturbed vs unperturbed
//! evolution across sizes, strengths and time, the constant C_X and its
//! size-flatness, the Duhamel decomposition residual, the assembled bound
//! audit, and the degenerate-fixed-point counterexample.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::expm::expm;
use crate::algebra::{operator_norm, trace_norm, AlgebraError, Operator};
use crate::diagnostics::{DecayEnvelope, DiagnosticsError, LrOutcome, ModelFamily, ObservablePlan};
use crate::evolution::{EvolutionEngine, EvolutionError};
use crate::lattice::{LatticeError, Region};
use crate::liouvillian::{Liouvillian, LiouvillianError, Perturbation};
use crate::scalar::C;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("sweep needs non-empty size, strength and time grids")]
    EmptyGrid,
    #[error("strength {0} not present in the report grid")]
    UnknownStrength(f64),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Liouvillian(#[from] LiouvillianError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Deviation grid dev(L, ε, t) = ‖A(t) − Ã(t)‖ and derived statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub sizes: Vec<usize>,
    pub strengths: Vec<f64>,
    pub times: Vec<f64>,
    /// dev[size index][strength index][time index]
    pub dev: Vec<Vec<Vec<f64>>>,
    /// sup over t of dev, per (size, strength)
    pub sup_dev: Vec<Vec<f64>>,
    pub observable_norm: f64,
    /// C_X(L) = max over ε>0 and t of dev / (ε ‖A‖)
    pub c_x_per_size: Vec<f64>,
    /// overall C_X = max over sizes
    pub c_x: f64,
    /// max relative spread of C_X(L) against the largest size
    pub flatness: f64,
    /// mean of sup_dev(ε)/(ε‖A‖) over the grid (the ε-slope)
    pub linearity_slope: f64,
    /// relative spread of the ε-slopes (max over sizes)
    pub linearity_spread: f64,
}

impl StabilityReport {
    /// The theorem's empirical verdict under the given tolerances for
    /// size-flatness of C_X and ε-linearity.
    pub fn theorem_consistent(&self, flatness_tol: f64, linearity_tol: f64) -> bool {
        self.flatness <= flatness_tol && self.linearity_spread <= linearity_tol
    }
}

/// Measure the full deviation grid. `perturbation` maps a strength ε to
/// the local perturbation template; both evolutions share one integrator
/// configuration and one time grid.
pub fn stability_sweep(
    plan: &ObservablePlan,
    family: &ModelFamily,
    perturbation: &(dyn Fn(f64) -> Result<Perturbation<f64>, LiouvillianError> + Sync),
    sizes: &[usize],
    strengths: &[f64],
    times: &[f64],
) -> Result<StabilityReport, StabilityError> {
    if sizes.is_empty() || strengths.is_empty() || times.is_empty() {
        return Err(StabilityError::EmptyGrid);
    }
    let cells: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|li| (0..strengths.len()).map(move |ei| (li, ei)))
        .collect();
    let rows: Vec<Result<((usize, usize), Vec<f64>), StabilityError>> = cells
        .par_iter()
        .map(|&(li, ei)| {
            let l = sizes[li];
            let eps = strengths[ei];
            let liou = family.at(l)?;
            let op = plan.place(*liou.lattice())?;
            let a = op.embed()?.matrix().clone();
            let base = EvolutionEngine::new(liou.assemble()?);
            let pert = liou.perturbed(perturbation(eps)?)?;
            let tilted = EvolutionEngine::new(pert.assemble()?);
            let xs = base.evolve_grid(&a, times)?;
            let ys = tilted.evolve_grid(&a, times)?;
            let mut row = Vec::with_capacity(times.len());
            for (x, y) in xs.iter().zip(&ys) {
                let d = x - y;
                let maxabs = d.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
                row.push(if maxabs == 0.0 {
                    0.0
                } else {
                    operator_norm(&d)?
                });
            }
            Ok(((li, ei), row))
        })
        .collect();
    let mut dev =
        vec![vec![vec![0.0f64; times.len()]; strengths.len()]; sizes.len()];
    for r in rows {
        let ((li, ei), row) = r?;
        dev[li][ei] = row;
    }
    // norm of the placed observable (same for all sizes by construction)
    let l0 = family.at(sizes[0])?;
    let op0 = plan.place(*l0.lattice())?;
    let a_norm = operator_norm(op0.embed()?.matrix())?;

    let sup_dev: Vec<Vec<f64>> = dev
        .iter()
        .map(|per_l| {
            per_l
                .iter()
                .map(|row| row.iter().cloned().fold(0.0f64, f64::max))
                .collect()
        })
        .collect();
    let mut c_x_per_size = Vec::with_capacity(sizes.len());
    for (li, _) in sizes.iter().enumerate() {
        let mut c = 0.0f64;
        for (ei, &eps) in strengths.iter().enumerate() {
            if eps > 0.0 {
                c = c.max(sup_dev[li][ei] / (eps * a_norm));
            }
        }
        c_x_per_size.push(c);
    }
    let c_x = c_x_per_size.iter().cloned().fold(0.0f64, f64::max);
    let c_last = *c_x_per_size.last().unwrap();
    let flatness = if c_last > 0.0 {
        c_x_per_size
            .iter()
            .map(|&c| (c - c_last).abs() / c_last)
            .fold(0.0f64, f64::max)
    } else {
        0.0
    };
    // ε-linearity: spread of sup_dev/ε per size
    let mut slopes_all = Vec::new();
    let mut spread = 0.0f64;
    for (li, _) in sizes.iter().enumerate() {
        let slopes: Vec<f64> = strengths
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0.0)
            .map(|(ei, &e)| sup_dev[li][ei] / (e * a_norm))
            .collect();
        if slopes.is_empty() {
            continue;
        }
        let hi = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            spread = spread.max((hi - lo) / hi);
        }
        slopes_all.extend(slopes);
    }
    let linearity_slope = if slopes_all.is_empty() {
        0.0
    } else {
        slopes_all.iter().sum::<f64>() / slopes_all.len() as f64
    };
    Ok(StabilityReport {
        sizes: sizes.to_vec(),
        strengths: strengths.to_vec(),
        times: times.to_vec(),
        dev,
        sup_dev,
        observable_norm: a_norm,
        c_x_per_size,
        c_x,
        flatness,
        linearity_slope,
        linearity_spread: spread,
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on
/// the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // P_n(x) and P_n'(x) via the recurrence
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Residual of the Duhamel identity
/// A(t) − Ã(t) = −∫₀ᵗ e^{(t−s)G̃} (G̃ − G) e^{sG} A ds,
/// evaluated densely with 64-node Gauss-Legendre quadrature. The
/// integrand uses the inner-time evolution A(s) (see module docs for the
/// sign and inner-time conventions).
pub fn duhamel_check(
    op: &Operator<f64>,
    base: &Liouvillian<f64>,
    perturbed: &Liouvillian<f64>,
    t: f64,
) -> Result<f64, StabilityError> {
    let g = base.assemble()?.to_dense();
    let gt = perturbed.assemble()?.to_dense();
    let p = &gt - &g;
    let a = crate::algebra::vectorize(op.embed()?.matrix());
    let at = expm(&g.map(|c| c * C::new(t, 0.0))) * &a;
    let att = expm(&gt.map(|c| c * C::new(t, 0.0))) * &a;
    let lhs = &at - &att;
    let (nodes, weights) = gauss_legendre(64);
    let mut integral = nalgebra::DVector::<C<f64>>::zeros(a.len());
    for (x, w) in nodes.iter().zip(&weights) {
        let s = 0.5 * t * (x + 1.0);
        let inner = expm(&g.map(|c| c * C::new(s, 0.0))) * &a;
        let kicked = &p * inner;
        let propagated = expm(&gt.map(|c| c * C::new(t - s, 0.0))) * kicked;
        integral += propagated * C::new(0.5 * t * w, 0.0);
    }
    let resid = lhs + integral;
    Ok(resid.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
}

/// One distance shell of the assembled stability bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShellContribution {
    pub distance: usize,
    pub sites: usize,
    /// per-site bound k e^{−μd/2} + ∫₀^{t₀(d)} Δ(s) ds
    pub per_site: f64,
    /// running total ε·Σ up to this shell
    pub partial_sum: f64,
}

/// Audit of the final bound ‖A(t) − Ã(t)‖ ≤ ε Σ_u (k e^{−μd/2} + ∫Δ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundAudit {
    pub strength: f64,
    pub shells: Vec<ShellContribution>,
    pub total_bound: f64,
    pub measured_sup: f64,
    pub passes: bool,
}

/// Assemble the per-site bound from the measured envelope and the
/// Lieb-Robinson fit and compare it against the measured deviations at
/// the given strength. For non-interacting models (InfiniteDecay) the
/// time split degenerates: t₀ = 0 and only sites touching the observable
/// support contribute, through the envelope integral.
pub fn bound_audit(
    report: &StabilityReport,
    lr: &LrOutcome,
    envelope: &DecayEnvelope,
    support: &Region,
    strength: f64,
) -> Result<BoundAudit, StabilityError> {
    let ei = report
        .strengths
        .iter()
        .position(|&e| (e - strength).abs() <= 1e-12 * strength.abs().max(1.0))
        .ok_or(StabilityError::UnknownStrength(strength))?;
    let measured_sup = report
        .sup_dev
        .iter()
        .map(|per_l| per_l[ei])
        .fold(0.0f64, f64::max);

    let lattice = support.lattice();
    // group lattice sites into torus-distance shells around the support
    let mut shell_sizes: std::collections::BTreeMap<usize, usize> =
        std::collections::BTreeMap::new();
    for site in lattice.sites() {
        let d = support.distance_to(&site)?;
        *shell_sizes.entry(d).or_insert(0) += 1;
    }

    let integral_to = |t0: f64| -> f64 {
        // trapezoid over the envelope grid, clipped at t0
        let mut acc = 0.0;
        for i in 1..envelope.times.len() {
            let (ta, tb) = (envelope.times[i - 1], envelope.times[i]);
            if ta >= t0 {
                break;
            }
            let tb_c = tb.min(t0);
            let fb = if tb_c < tb && tb > ta {
                let w = (tb_c - ta) / (tb - ta);
                envelope.delta[i - 1] * (1.0 - w) + envelope.delta[i] * w
            } else {
                envelope.delta[i]
            };
            acc += 0.5 * (envelope.delta[i - 1] + fb) * (tb_c - ta);
        }
        acc
    };
    let full_integral = integral_to(f64::INFINITY);

    let mut shells = Vec::new();
    let mut total = 0.0;
    for (&d, &count) in &shell_sizes {
        let per_site = match lr {
            LrOutcome::Finite(fit) => {
                let t0 = fit.mu * d as f64 / (2.0 * fit.v);
                fit.k * (-fit.mu * d as f64 / 2.0).exp() + integral_to(t0)
            }
            LrOutcome::InfiniteDecay => {
                if d == 0 {
                    full_integral
                } else {
                    0.0
                }
            }
        };
        total += strength * per_site * count as f64;
        shells.push(ShellContribution {
            distance: d,
            sites: count,
            per_site,
            partial_sum: total,
        });
    }
    Ok(BoundAudit {
        strength,
        shells,
        total_bound: total,
        measured_sup,
        passes: total >= measured_sup * (1.0 - 1e-9),
    })
}

/// The footnote counterexample: per-site fixed points with overlap
/// squared 1 − ε. Globally the product fixed points become orthogonal as
/// N grows while every single-site observable moves by at most 2ε.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub n: usize,
    pub eps: f64,
    /// per-site fidelity |<ψ|ψ'>|² = 1 − ε
    pub site_fidelity: f64,
    /// global fidelity (1 − ε)^N
    pub global_fidelity: f64,
    /// trace distance 2 sqrt(1 − (1−ε)^N) between the product fixed points
    pub global_trace_distance: f64,
    /// σ_z expectation shift per site, exactly 2ε
    pub local_deviation: f64,
}

pub fn counterexample_degenerate(eps: f64, n: usize) -> CounterexampleReport {
    assert!((0.0..=1.0).contains(&eps), "overlap defect must be in [0,1]");
    let site_fidelity = 1.0 - eps;
    let global_fidelity = site_fidelity.powi(n as i32);
    CounterexampleReport {
        n,
        eps,
        site_fidelity,
        global_fidelity,
        global_trace_distance: 2.0 * (1.0 - global_fidelity).sqrt(),
        local_deviation: 2.0 * eps,
    }
}

/// Build the two product states of the counterexample explicitly (small
/// N) and return (trace distance, max single-site σ_z deviation); used to
/// validate the closed forms in [`counterexample_degenerate`].
pub fn counterexample_explicit(eps: f64, n: usize) -> Result<(f64, f64), StabilityError> {
    let theta = eps.sqrt().asin();
    let psi0 = [C::new(1.0, 0.0), C::new(0.0, 0.0)];
    let psi1 = [C::new(theta.cos(), 0.0), C::new(theta.sin(), 0.0)];
    let build = |site: &[C<f64>]| -> DMatrix<C<f64>> {
        let mut v = vec![C::new(1.0, 0.0)];
        for _ in 0..n {
            let mut next = Vec::with_capacity(v.len() * 2);
            for amp in &v {
                next.push(amp * site[0]);
                next.push(amp * site[1]);
            }
            v = next;
        }
        let dim = v.len();
        DMatrix::from_fn(dim, dim, |i, j| v[i] * v[j].conj())
    };
    let rho0 = build(&psi0);
    let rho1 = build(&psi1);
    let dist = trace_norm(&(&rho0 - &rho1))?;
    // single-site σ_z deviation: identical on every site by symmetry
    let mut max_dev = 0.0f64;
    let d = rho0.nrows();
    for k in 0..n {
        let bit = n - 1 - k;
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        for i in 0..d {
            let sign = if i >> bit & 1 == 0 { 1.0 } else { -1.0 };
            e0 += sign * rho0[(i, i)].re;
            e1 += sign * rho1[(i, i)].re;
        }
        max_dev = max_dev.max((e0 - e1).abs());
    }
    Ok((dist, max_dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{decay_envelope, lr_probe, fit_lr};
    use crate::lattice::Lattice;
    use crate::presets;
    use approx::assert_relative_eq;

    fn grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn depolarizing_family() -> ModelFamily {
        ModelFamily::new(presets::depolarizing_term::<f64>(1.0), 1)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // ∫_{-1}^1 x^k dx
        for k in 0..16usize {
            let num: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert_relative_eq!(num, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn sweep_zero_strength_column_is_zero() {
        let report = stability_sweep(
            &ObservablePlan::SigmaZOrigin,
            &depolarizing_family(),
            &|e| Ok(presets::hamiltonian_x_perturbation(e)),
            &[3, 4],
            &[0.0, 0.05],
            &grid(0.0, 2.0, 6),
        )
        .unwrap();
        for per_l in &report.dev {
            for &v in &per_l[0] {
                assert_eq!(v, 0.0);
            }
            for &v in &per_l[1] {
                assert!(v <= 2.0 * report.observable_norm + 1e-9);
            }
        }
        assert!(report.c_x > 0.0);
    }

    #[test]
    fn sweep_is_size_flat_for_depolarizing() {
        let report = stability_sweep(
            &ObservablePlan::SigmaZOrigin,
            &depolarizing_family(),
            &|e| Ok(presets::hamiltonian_x_perturbation(e)),
            &[3, 4, 5],
            &[1e-2, 1e-1],
            &grid(0.0, 6.0, 25),
        )
        .unwrap();
        assert!(
            report.flatness < 0.2,
            "flatness {} c_x {:?}",
            report.flatness,
            report.c_x_per_size
        );
        assert!(
            report.linearity_spread < 0.05,
            "spread {}",
            report.linearity_spread
        );
        assert!(report.theorem_consistent(0.2, 0.05));
    }

    #[test]
    fn duhamel_residual_small_on_dense_model() {
        let lattice = Lattice::new(1, 3).unwrap();
        let base = Liouvillian::new(lattice, presets::depolarizing_term::<f64>(1.0));
        let pert = base
            .perturbed(presets::hamiltonian_x_perturbation(0.05))
            .unwrap();
        let op = ObservablePlan::SigmaZOrigin.place(lattice).unwrap();
        let r = duhamel_check(&op, &base, &pert, 1.0).unwrap();
        assert!(r <= 1e-6, "residual {r}");
        // zero perturbation and zero time are exact
        let same = base
            .perturbed(presets::hamiltonian_x_perturbation(0.0))
            .unwrap();
        assert!(duhamel_check(&op, &base, &same, 1.0).unwrap() < 1e-12);
        assert!(duhamel_check(&op, &base, &pert, 0.0).unwrap() < 1e-12);
    }

    #[test]
    fn counterexample_closed_forms_match_explicit_construction() {
        let eps = 0.1;
        for n in [1usize, 3, 5] {
            let report = counterexample_degenerate(eps, n);
            let (dist, local) = counterexample_explicit(eps, n).unwrap();
            assert_relative_eq!(report.global_trace_distance, dist, epsilon = 1e-9);
            assert_relative_eq!(report.local_deviation, local, epsilon = 1e-9);
        }
        // divergence vs locality
        let big = counterexample_degenerate(eps, 50);
        assert!(big.global_fidelity < 1e-2);
        assert!(big.global_trace_distance > 1.99);
        assert_relative_eq!(big.local_deviation, 0.2);
        let one = counterexample_degenerate(eps, 1);
        assert_relative_eq!(
            one.global_trace_distance,
            2.0 * eps.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn bound_audit_dominates_measurement_for_product_model() {
        let fam = depolarizing_family();
        let times = grid(0.0, 4.0, 15);
        let report = stability_sweep(
            &ObservablePlan::SigmaZOrigin,
            &fam,
            &|e| Ok(presets::hamiltonian_x_perturbation(e)),
            &[4, 5],
            &[1e-2],
            &times,
        )
        .unwrap();
        let liou = fam.at(7).unwrap();
        let op = ObservablePlan::SigmaZOrigin.place(*liou.lattice()).unwrap();
        let lr = fit_lr(&lr_probe(&op, &liou, &[1, 2], &grid(0.0, 2.0, 5)).unwrap()).unwrap();
        assert!(matches!(lr, LrOutcome::InfiniteDecay));
        let env = decay_envelope(&op, &liou, &grid(0.0, 8.0, 33), &[0.125]).unwrap();
        let audit = bound_audit(&report, &lr, &env, op.support(), 1e-2).unwrap();
        assert!(
            audit.passes,
            "bound {} vs measured {}",
            audit.total_bound, audit.measured_sup
        );
        // only the d = 0 shell contributes for a product model
        for shell in &audit.shells {
            if shell.distance > 0 {
                assert_eq!(shell.per_site, 0.0);
            }
        }
    }
}
