//! Built-in model templates used by the experiments and the CLI.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{sigma_minus, sigma_x, sigma_y, sigma_z, LindbladData};
use crate::glauber::{GlauberModel, RateRule};
use crate::lattice::Lattice;
use crate::liouvillian::{LiouvillianError, LocalTerm, Perturbation, PerturbationTerm};
use crate::scalar::{Scalar, C};

/// Single-site depolarizing noise: H = 0, jumps sqrt(gamma/2) {σx, σy, σz}.
/// Pauli observables decay as e^{-2 gamma t} under this convention.
pub fn depolarizing_term<T: Scalar>(gamma: f64) -> LocalTerm<T> {
    let r = C::new(T::lit((gamma / 2.0).sqrt()), T::zero());
    let data = LindbladData::new(
        DMatrix::zeros(2, 2),
        vec![
            sigma_x::<T>().map(|c| c * r),
            sigma_y::<T>().map(|c| c * r),
            sigma_z::<T>().map(|c| c * r),
        ],
    )
    .expect("depolarizing data is valid");
    LocalTerm::new(data, vec![vec![0]]).expect("depolarizing term is valid")
}

/// Pure dephasing: jumps {sqrt(gamma) σz}. All diagonal states are fixed;
/// the fixed point is degenerate by design.
pub fn dephasing_term<T: Scalar>(gamma: f64) -> LocalTerm<T> {
    let r = C::new(T::lit(gamma.sqrt()), T::zero());
    let data = LindbladData::new(DMatrix::zeros(2, 2), vec![sigma_z::<T>().map(|c| c * r)])
        .expect("dephasing data is valid");
    LocalTerm::new(data, vec![vec![0]]).expect("dephasing term is valid")
}

/// Amplitude damping toward a pure state cos(theta)|0> + sin(theta)|1>,
/// at unit rate. Used by the degenerate-fixed-point counterexample.
pub fn damping_toward_term<T: Scalar>(theta: f64) -> LocalTerm<T> {
    // jump K = |psi><psi_perp| damps onto |psi>
    let (c, s) = (theta.cos(), theta.sin());
    let psi = [T::lit(c), T::lit(s)];
    let perp = [-T::lit(s), T::lit(c)];
    let mut k = DMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            k[(i, j)] = C::new(psi[i] * perp[j], T::zero());
        }
    }
    let data = LindbladData::new(DMatrix::zeros(2, 2), vec![k]).expect("damping data is valid");
    LocalTerm::new(data, vec![vec![0]]).expect("damping term is valid")
}

/// Interacting preset: single-site depolarizing noise plus a
/// nearest-neighbor Ising Hamiltonian J σz⊗σz, anchored on the forward
/// bond {u, u+1}.
pub fn depolarizing_ising_term<T: Scalar>(gamma: f64, j: f64) -> LocalTerm<T> {
    let id2 = crate::algebra::identity::<T>(2);
    let h = sigma_z::<T>()
        .kronecker(&sigma_z::<T>())
        .map(|c| c * C::new(T::lit(j), T::zero()));
    let r = C::new(T::lit((gamma / 2.0).sqrt()), T::zero());
    let jumps = vec![
        sigma_x::<T>().kronecker(&id2).map(|c| c * r),
        sigma_y::<T>().kronecker(&id2).map(|c| c * r),
        sigma_z::<T>().kronecker(&id2).map(|c| c * r),
    ];
    let data = LindbladData::new(h, jumps).expect("depolarizing-ising data is valid");
    LocalTerm::new(data, vec![vec![0], vec![1]]).expect("depolarizing-ising term is valid")
}

/// Amplitude damping to |0> at rate gamma (single jump sqrt(gamma) σ⁻).
pub fn damping_term<T: Scalar>(gamma: f64) -> LocalTerm<T> {
    let r = C::new(T::lit(gamma.sqrt()), T::zero());
    let data = LindbladData::new(DMatrix::zeros(2, 2), vec![sigma_minus::<T>().map(|c| c * r)])
        .expect("damping data is valid");
    LocalTerm::new(data, vec![vec![0]]).expect("damping term is valid")
}

/// Hamiltonian perturbation E_u(A) = i ε [σx^(u), A].
pub fn hamiltonian_x_perturbation<T: Scalar>(eps: f64) -> Perturbation<T> {
    let data = LindbladData::new(sigma_x::<T>(), vec![]).expect("σx is Hermitian");
    Perturbation::new(PerturbationTerm::Lindblad(data), vec![vec![0]], T::lit(eps))
        .expect("Hamiltonian perturbation is unital")
}

/// Jump-rate perturbation gamma -> gamma (1 + delta) on the depolarizing
/// channel, expressed as a difference of Lindblad dissipators.
pub fn depolarizing_rate_perturbation<T: Scalar>(gamma: f64, delta: f64) -> Perturbation<T> {
    let mk = |g: f64| {
        let r = C::new(T::lit((g / 2.0).sqrt()), T::zero());
        LindbladData::new(
            DMatrix::zeros(2, 2),
            vec![
                sigma_x::<T>().map(|c| c * r),
                sigma_y::<T>().map(|c| c * r),
                sigma_z::<T>().map(|c| c * r),
            ],
        )
        .expect("depolarizing data is valid")
    };
    Perturbation::new(
        PerturbationTerm::Difference(mk(gamma * (1.0 + delta)), mk(gamma)),
        vec![vec![0]],
        T::one(),
    )
    .expect("rate perturbation is unital")
}

/// Named preset models understood by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Preset {
    Depolarizing { gamma: f64 },
    Dephasing { gamma: f64 },
    DepolarizingIsing { gamma: f64, j: f64 },
    GlauberIsing { beta: f64, j: f64, h: f64 },
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Preset> {
        match name {
            "depolarizing" => Some(Preset::Depolarizing { gamma: 1.0 }),
            "dephasing" => Some(Preset::Dephasing { gamma: 1.0 }),
            "depolarizing-ising" => Some(Preset::DepolarizingIsing { gamma: 1.0, j: 0.5 }),
            "glauber-ising" => Some(Preset::GlauberIsing {
                beta: 0.3,
                j: 1.0,
                h: 0.0,
            }),
            _ => None,
        }
    }

    pub fn names() -> &'static [&'static str] {
        &[
            "depolarizing",
            "dephasing",
            "depolarizing-ising",
            "glauber-ising",
        ]
    }

    /// Instantiate the template on a 1D chain of length `l`.
    pub fn term<T: Scalar>(&self) -> Result<LocalTerm<T>, LiouvillianError> {
        match *self {
            Preset::Depolarizing { gamma } => Ok(depolarizing_term(gamma)),
            Preset::Dephasing { gamma } => Ok(dephasing_term(gamma)),
            Preset::DepolarizingIsing { gamma, j } => Ok(depolarizing_ising_term(gamma, j)),
            Preset::GlauberIsing { beta, j, h } => {
                let model = GlauberModel::new(
                    Lattice::new(1, 3)?, // lattice only fixes D here; reassigned on build
                    j,
                    h,
                    beta,
                    RateRule::HeatBath,
                )
                .map_err(|e| LiouvillianError::SupportViolation(e.to_string()))?;
                model.embedded_term()
            }
        }
    }
}
