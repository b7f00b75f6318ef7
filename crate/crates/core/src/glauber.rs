//! Classical Glauber spin-flip dynamics for the Ising model on a torus:
//! exact master-equation evolution for small chains, kinetic Monte Carlo
//! for large ones, and the quantum (Lindblad) embedding of the same rates.
//!
//! Conventions: bit value 0 is spin +1; site k occupies bit n-1-k of the
//! state word, so state 0 is the all-up configuration.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::superop::Csr;
use crate::algebra::LindbladData;
use crate::evolution::{krylov_expv, EvolutionError, IntegratorSettings};
use crate::lattice::{Lattice, LatticeError};
use crate::liouvillian::{LiouvillianError, LocalTerm};
use crate::scalar::{Scalar, C};

/// State-space cap for the explicit classical generator (2^20 states).
pub const CLASSICAL_STATE_CAP: usize = 1 << 20;
/// State-space cap for exact master-equation curves (memory-bound by the
/// Krylov basis).
pub const EXACT_STATE_CAP: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum GlauberError {
    #[error("state space 2^{0} exceeds the classical cap")]
    StateCap(usize),
    #[error("inverse temperature must be non-negative and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("rate perturbation strength {0} drives a rate non-positive")]
    InvalidPerturbation(f64),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

/// Single-spin-flip rate rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateRule {
    /// heat bath: r = 1 / (1 + e^{beta dE})
    HeatBath,
    /// Metropolis: r = min(1, e^{-beta dE})
    Metropolis,
}

/// Local modification of the flip rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RatePerturbation {
    /// r -> r (1 + eps) everywhere: rescales time, keeps the fixed point
    /// and detailed balance.
    UniformScale { eps: f64 },
    /// r -> r (1 + eps) only for flips of up spins: biases the chain
    /// toward the all-up state and breaks detailed balance.
    FlipUpBias { eps: f64 },
}

impl RatePerturbation {
    fn factor(&self, spin_before: i32) -> f64 {
        match *self {
            RatePerturbation::UniformScale { eps } => 1.0 + eps,
            RatePerturbation::FlipUpBias { eps } => {
                if spin_before > 0 {
                    1.0 + eps
                } else {
                    1.0
                }
            }
        }
    }

    fn strength(&self) -> f64 {
        match *self {
            RatePerturbation::UniformScale { eps } | RatePerturbation::FlipUpBias { eps } => eps,
        }
    }

    /// Whether the perturbed chain still satisfies detailed balance with
    /// respect to some Gibbs measure.
    pub fn preserves_detailed_balance(&self) -> bool {
        matches!(self, RatePerturbation::UniformScale { .. })
    }
}

/// Initial spin configuration for simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinState {
    AllUp,
    AllDown,
}

/// Sampled relaxation curve with per-point standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KmcCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub chains: usize,
}

/// Glauber dynamics for the Ising Hamiltonian
/// E(sigma) = -J sum_<uv> sigma_u sigma_v - h sum_u sigma_u.
#[derive(Debug, Clone)]
pub struct GlauberModel {
    lattice: Lattice,
    j: f64,
    h: f64,
    beta: f64,
    rule: RateRule,
    perturbation: Option<RatePerturbation>,
}

impl GlauberModel {
    pub fn new(
        lattice: Lattice,
        j: f64,
        h: f64,
        beta: f64,
        rule: RateRule,
    ) -> Result<Self, GlauberError> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(GlauberError::InvalidTemperature(beta));
        }
        Ok(Self {
            lattice,
            j,
            h,
            beta,
            rule,
            perturbation: None,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Same rates on a different torus (used when comparing sizes).
    pub fn resized(&self, lattice: Lattice) -> Self {
        Self {
            lattice,
            ..self.clone()
        }
    }

    /// Apply a rate perturbation; all rates must stay positive.
    pub fn perturb_rates(&self, pert: RatePerturbation) -> Result<Self, GlauberError> {
        if pert.factor(1) <= 0.0 || pert.factor(-1) <= 0.0 {
            return Err(GlauberError::InvalidPerturbation(pert.strength()));
        }
        Ok(Self {
            perturbation: Some(pert),
            ..self.clone()
        })
    }

    pub fn perturbation(&self) -> Option<RatePerturbation> {
        self.perturbation
    }

    fn n(&self) -> usize {
        self.lattice.num_sites()
    }

    /// Spin of site `k` in configuration `state` (+1 or -1).
    pub fn spin(&self, state: usize, k: usize) -> i32 {
        if state >> (self.n() - 1 - k) & 1 == 0 {
            1
        } else {
            -1
        }
    }

    /// Neighbor field J * sum of neighbor spins + h at site `k`.
    fn local_field(&self, state: usize, k: usize) -> f64 {
        let site = self.lattice.site_at(k);
        let mut nbr = 0i32;
        for d in 0..self.lattice.dimension() {
            for step in [-1isize, 1] {
                let mut delta = vec![0isize; self.lattice.dimension()];
                delta[d] = step;
                let v = self.lattice.translate(&site, &delta);
                nbr += self.spin(state, self.lattice.site_index(&v));
            }
        }
        self.j * nbr as f64 + self.h
    }

    /// Energy change of flipping site `k`: dE = 2 sigma_k (J sum_nbr + h).
    pub fn flip_energy(&self, state: usize, k: usize) -> f64 {
        2.0 * self.spin(state, k) as f64 * self.local_field(state, k)
    }

    /// Flip rate of site `k` in configuration `state`.
    pub fn rate(&self, state: usize, k: usize) -> f64 {
        let de = self.flip_energy(state, k);
        let base = match self.rule {
            RateRule::HeatBath => 1.0 / (1.0 + (self.beta * de).exp()),
            RateRule::Metropolis => (-self.beta * de).exp().min(1.0),
        };
        match self.perturbation {
            Some(p) => base * p.factor(self.spin(state, k)),
            None => base,
        }
    }

    /// Total energy of a configuration.
    pub fn energy(&self, state: usize) -> f64 {
        let mut bond = 0.0;
        let mut field = 0.0;
        for k in 0..self.n() {
            let s = self.spin(state, k) as f64;
            field += s;
            let site = self.lattice.site_at(k);
            for d in 0..self.lattice.dimension() {
                let mut delta = vec![0isize; self.lattice.dimension()];
                delta[d] = 1;
                let v = self.lattice.translate(&site, &delta);
                bond += s * self.spin(state, self.lattice.site_index(&v)) as f64;
            }
        }
        -self.j * bond - self.h * field
    }

    /// Normalized Gibbs vector e^{-beta E} / Z over all configurations.
    pub fn gibbs(&self) -> Result<Vec<f64>, GlauberError> {
        let n = self.n();
        if n >= CLASSICAL_STATE_CAP.trailing_zeros() as usize + 1 {
            return Err(GlauberError::StateCap(n));
        }
        let dim = 1usize << n;
        let e0 = (0..dim).map(|s| self.energy(s)).fold(f64::INFINITY, f64::min);
        let mut p: Vec<f64> = (0..dim)
            .map(|s| (-self.beta * (self.energy(s) - e0)).exp())
            .collect();
        let z: f64 = p.iter().sum();
        for x in &mut p {
            *x /= z;
        }
        Ok(p)
    }

    /// Explicit master-equation generator Q as a sparse matrix:
    /// dp/dt = Q p, with Q[s', s] = r_k(s) for single flips and
    /// Q[s, s] = -sum_k r_k(s), so every column sums to zero.
    pub fn classical_generator(&self) -> Result<Csr<f64>, GlauberError> {
        let n = self.n();
        let dim = 1usize
            .checked_shl(n as u32)
            .filter(|&d| d <= CLASSICAL_STATE_CAP)
            .ok_or(GlauberError::StateCap(n))?;
        let mut triplets = Vec::with_capacity(dim * (n + 1));
        for s in 0..dim {
            let mut total = 0.0;
            for k in 0..n {
                let r = self.rate(s, k);
                total += r;
                let t = s ^ (1 << (n - 1 - k));
                triplets.push((t as u32, s as u32, C::new(r, 0.0)));
            }
            triplets.push((s as u32, s as u32, C::new(-total, 0.0)));
        }
        Ok(Csr::from_triplets(dim, triplets))
    }

    /// Largest violation of detailed balance against the Gibbs measure,
    /// max |pi(s) q(s->s') - pi(s') q(s'->s)| over single-flip pairs.
    pub fn detailed_balance_defect(&self) -> Result<f64, GlauberError> {
        let pi = self.gibbs()?;
        let n = self.n();
        let mut worst = 0.0f64;
        for s in 0..pi.len() {
            for k in 0..n {
                let t = s ^ (1 << (n - 1 - k));
                if t < s {
                    continue;
                }
                let d = (pi[s] * self.rate(s, k) - pi[t] * self.rate(t, k)).abs();
                worst = worst.max(d);
            }
        }
        Ok(worst)
    }

    /// Mean magnetization (1/n) sum_k sigma_k of a configuration.
    pub fn magnetization(&self, state: usize) -> f64 {
        let n = self.n();
        let down = (state & ((1usize << n) - 1)).count_ones() as f64;
        (n as f64 - 2.0 * down) / n as f64
    }

    /// Exact magnetization curve <m(t)> from a deterministic initial
    /// configuration, by Krylov evolution of the master equation.
    pub fn exact_magnetization(
        &self,
        initial: SpinState,
        times: &[f64],
    ) -> Result<Vec<f64>, GlauberError> {
        let n = self.n();
        let dim = 1usize
            .checked_shl(n as u32)
            .filter(|&d| d <= EXACT_STATE_CAP)
            .ok_or(GlauberError::StateCap(n))?;
        let q = self.classical_generator()?;
        let norm = q.inf_norm();
        let settings = IntegratorSettings::<f64>::default();
        let matvec = |x: &[C<f64>]| {
            let mut y = vec![C::new(0.0, 0.0); x.len()];
            q.matvec(x, &mut y);
            y
        };
        let start = match initial {
            SpinState::AllUp => 0usize,
            SpinState::AllDown => dim - 1,
        };
        let mut p = vec![C::new(0.0, 0.0); dim];
        p[start] = C::new(1.0, 0.0);
        let mut out = Vec::with_capacity(times.len());
        let mut t_prev = 0.0;
        for &t in times {
            let dt = t - t_prev;
            if dt < 0.0 {
                return Err(GlauberError::Evolution(EvolutionError::NegativeTime(dt)));
            }
            p = krylov_expv(&matvec, norm, &settings, &p, dt)?;
            t_prev = t;
            let m: f64 = p
                .iter()
                .enumerate()
                .map(|(s, c)| c.re * self.magnetization(s))
                .sum();
            out.push(m);
        }
        Ok(out)
    }

    /// Gibbs-average magnetization (the t -> infinity limit under
    /// detailed balance).
    pub fn equilibrium_magnetization(&self) -> Result<f64, GlauberError> {
        let pi = self.gibbs()?;
        Ok(pi
            .iter()
            .enumerate()
            .map(|(s, &w)| w * self.magnetization(s))
            .sum())
    }

    /// Kinetic Monte Carlo estimate of the magnetization curve: `chains`
    /// independent Gillespie trajectories, deterministically seeded from
    /// `seed` and the chain index.
    pub fn kmc_magnetization(
        &self,
        initial: SpinState,
        times: &[f64],
        chains: usize,
        seed: u64,
    ) -> KmcCurve {
        let curves: Vec<Vec<f64>> = (0..chains)
            .into_par_iter()
            .map(|c| self.kmc_chain(initial, times, chain_seed(seed, c as u64)))
            .collect();
        let mut mean = vec![0.0; times.len()];
        let mut stderr = vec![0.0; times.len()];
        for i in 0..times.len() {
            let vals: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            let m = vals.iter().sum::<f64>() / chains as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                / (chains.max(2) - 1) as f64;
            mean[i] = m;
            stderr[i] = (var / chains as f64).sqrt();
        }
        KmcCurve {
            times: times.to_vec(),
            mean,
            stderr,
            chains,
        }
    }

    /// One Gillespie trajectory, sampled at the given time grid.
    fn kmc_chain(&self, initial: SpinState, times: &[f64], seed: u64) -> Vec<f64> {
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full_mask = if n == usize::BITS as usize {
            usize::MAX
        } else {
            (1usize << n) - 1
        };
        let mut state = match initial {
            SpinState::AllUp => 0usize,
            SpinState::AllDown => full_mask,
        };
        let mut tree = SumTree::new(n);
        for k in 0..n {
            tree.set(k, self.rate(state, k));
        }
        let neighbor_cache: Vec<Vec<usize>> = (0..n)
            .map(|k| {
                let site = self.lattice.site_at(k);
                let mut nbrs = vec![k];
                for d in 0..self.lattice.dimension() {
                    for step in [-1isize, 1] {
                        let mut delta = vec![0isize; self.lattice.dimension()];
                        delta[d] = step;
                        nbrs.push(self.lattice.site_index(&self.lattice.translate(&site, &delta)));
                    }
                }
                nbrs.sort_unstable();
                nbrs.dedup();
                nbrs
            })
            .collect();
        let mut out = Vec::with_capacity(times.len());
        let mut t = 0.0f64;
        let mut grid = times.iter().copied().peekable();
        let mut pending = grid.next();
        loop {
            let total = tree.total();
            debug_assert!(total > 0.0, "Glauber rates must be positive");
            let dt = -(1.0 - rng.gen::<f64>()).ln() / total;
            let t_next = t + dt;
            while let Some(tg) = pending {
                if tg <= t_next {
                    out.push(self.magnetization(state));
                    pending = grid.next();
                } else {
                    break;
                }
            }
            if pending.is_none() {
                break;
            }
            let k = tree.sample(rng.gen::<f64>() * total);
            state ^= 1 << (n - 1 - k);
            for &v in &neighbor_cache[k] {
                tree.set(v, self.rate(state, v));
            }
            t = t_next;
        }
        out
    }

    /// Lindblad embedding of the classical chain on a 1D torus: one local
    /// term anchored at u with factors on {u-1, u, u+1}, jump operators
    /// sqrt(r) P_l (x) |1-b><b| (x) P_r over all neighbor configurations.
    /// Diagonal density matrices then evolve exactly like the classical
    /// probabilities.
    pub fn embedded_term<T: Scalar>(&self) -> Result<LocalTerm<T>, LiouvillianError> {
        assert_eq!(
            self.lattice.dimension(),
            1,
            "quantum embedding is implemented for 1D chains"
        );
        // rates on a 3-site window: use an auxiliary 3-site chain so
        // flip_energy sees exactly the two neighbors
        let window = GlauberModel {
            lattice: Lattice::new(1, 3).expect("3-site window"),
            ..self.clone()
        };
        let proj = |b: usize| {
            let mut p = DMatrix::<C<T>>::zeros(2, 2);
            p[(b, b)] = C::new(T::one(), T::zero());
            p
        };
        let flip = |b: usize| {
            let mut f = DMatrix::<C<T>>::zeros(2, 2);
            f[(1 - b, b)] = C::new(T::one(), T::zero());
            f
        };
        let mut jumps = Vec::with_capacity(8);
        for bl in 0..2usize {
            for b in 0..2usize {
                for br in 0..2usize {
                    // window state: site 0 = left neighbor, 1 = center, 2 = right
                    let state = (bl << 2) | (b << 1) | br;
                    let r = window.rate(state, 1);
                    let amp = C::new(T::lit(r.sqrt()), T::zero());
                    let k = proj(bl)
                        .kronecker(&flip(b))
                        .kronecker(&proj(br))
                        .map(|c| c * amp);
                    jumps.push(k);
                }
            }
        }
        let data = LindbladData::new(DMatrix::zeros(8, 8), jumps)?;
        LocalTerm::new(data, vec![vec![-1], vec![0], vec![1]])
    }
}

/// Mix the master seed with the chain index (splitmix64 step).
fn chain_seed(master: u64, chain: u64) -> u64 {
    let mut z = master ^ chain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Binary sum tree over per-site rates: O(log n) update and sampling.
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(n: usize) -> Self {
        let leaves = n.next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn set(&mut self, k: usize, value: f64) {
        let mut i = self.leaves + k;
        self.nodes[i] = value;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf index whose cumulative-rate interval contains `target`.
    fn sample(&self, mut target: f64) -> usize {
        let mut i = 1;
        while i < self.leaves {
            let left = self.nodes[2 * i];
            if target < left {
                i = 2 * i;
            } else {
                target -= left;
                i = 2 * i + 1;
            }
        }
        i - self.leaves
    }
}
