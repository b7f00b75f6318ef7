//! Persistence formats shared by the library and the CLI: a binary
//! operator format and the serde model-definition schema.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glauber::{GlauberError, GlauberModel, RatePerturbation, RateRule};
use crate::lattice::{Lattice, LatticeError};
use crate::liouvillian::{Liouvillian, LiouvillianError, Perturbation, PerturbationTerm};
use crate::presets::{self, Preset};
use crate::scalar::C;

/// Magic bytes opening the binary operator format.
pub const OPERATOR_MAGIC: &[u8; 8] = b"LLOPMAT1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not an operator file (bad magic)")]
    BadMagic,
    #[error("operator dimensions {0}x{1} are not storable")]
    BadDims(u64, u64),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Liouvillian(#[from] LiouvillianError),
    #[error(transparent)]
    Glauber(#[from] GlauberError),
    #[error("model config error: {0}")]
    Config(String),
}

/// Write a complex matrix: magic, nrows and ncols as little-endian u64,
/// then row-major (re, im) little-endian f64 pairs.
pub fn write_operator<W: Write>(w: &mut W, m: &DMatrix<C<f64>>) -> Result<(), IoError> {
    w.write_all(OPERATOR_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].re.to_le_bytes())?;
            w.write_all(&m[(i, j)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a matrix written by [`write_operator`].
pub fn read_operator<R: Read>(r: &mut R) -> Result<DMatrix<C<f64>>, IoError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != OPERATOR_MAGIC {
        return Err(IoError::BadMagic);
    }
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let nrows = u64::from_le_bytes(buf);
    r.read_exact(&mut buf)?;
    let ncols = u64::from_le_bytes(buf);
    let (nr, nc) = (nrows as usize, ncols as usize);
    if nrows > 1 << 20 || ncols > 1 << 20 {
        return Err(IoError::BadDims(nrows, ncols));
    }
    let mut m = DMatrix::<C<f64>>::zeros(nr, nc);
    for i in 0..nr {
        for j in 0..nc {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf);
            r.read_exact(&mut buf)?;
            let im = f64::from_le_bytes(buf);
            m[(i, j)] = C::new(re, im);
        }
    }
    Ok(m)
}

/// Lattice section of a model definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub dimension: usize,
    pub size: usize,
}

impl LatticeConfig {
    pub fn build(&self) -> Result<Lattice, LatticeError> {
        Lattice::new(self.dimension, self.size)
    }
}

/// Perturbation section of a model definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationConfig {
    /// coherent kick E(A) = i eps [sigma_x, A] on every site
    HamiltonianX { eps: f64 },
    /// depolarizing rate change gamma -> gamma (1 + delta)
    DepolarizingRate { gamma: f64, delta: f64 },
    /// raw bounded unital map of the given strength (no physicality check):
    /// E(A) = eps (sigma_x A sigma_x - A)
    RawFlip { eps: f64 },
}

impl PerturbationConfig {
    pub fn build(&self) -> Result<Perturbation<f64>, LiouvillianError> {
        match *self {
            PerturbationConfig::HamiltonianX { eps } => {
                Ok(presets::hamiltonian_x_perturbation(eps))
            }
            PerturbationConfig::DepolarizingRate { gamma, delta } => {
                Ok(presets::depolarizing_rate_perturbation(gamma, delta))
            }
            PerturbationConfig::RawFlip { eps } => {
                let sx = crate::algebra::sigma_x::<f64>();
                let id = crate::algebra::identity::<f64>(2);
                let map = sx.kronecker(&sx.conjugate()) - id.kronecker(&id);
                Perturbation::new(PerturbationTerm::RawUnital(map), vec![vec![0]], eps)
            }
        }
    }

    pub fn strength(&self) -> f64 {
        match *self {
            PerturbationConfig::HamiltonianX { eps } | PerturbationConfig::RawFlip { eps } => eps,
            PerturbationConfig::DepolarizingRate { delta, .. } => delta,
        }
    }
}

/// A complete model definition as read from a TOML file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lattice: LatticeConfig,
    pub model: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
}

impl ModelConfig {
    pub fn preset(name: &str, lattice: LatticeConfig) -> Option<ModelConfig> {
        Preset::from_name(name).map(|model| ModelConfig {
            lattice,
            model,
            perturbation: None,
        })
    }

    /// Instantiate the generator described by this config.
    pub fn build(&self) -> Result<Liouvillian<f64>, IoError> {
        let lattice = self.lattice.build()?;
        if lattice.dimension() != 1 {
            if let Preset::GlauberIsing { .. } = self.model {
                return Err(IoError::Config(
                    "glauber-ising quantum embedding requires a 1D lattice".into(),
                ));
            }
        }
        let term = self.model.term::<f64>()?;
        let mut liou = Liouvillian::new(lattice, term);
        if let Some(p) = self.perturbation {
            liou = liou.perturbed(p.build()?)?;
        }
        Ok(liou)
    }

    /// The classical Glauber model, if this config describes one.
    pub fn glauber(&self) -> Result<Option<GlauberModel>, IoError> {
        match self.model {
            Preset::GlauberIsing { beta, j, h } => {
                let m = GlauberModel::new(self.lattice.build()?, j, h, beta, RateRule::HeatBath)?;
                Ok(Some(m))
            }
            _ => Ok(None),
        }
    }
}

/// Glauber-specific rate perturbation config (classical experiments).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlauberPerturbationConfig {
    pub perturbation: RatePerturbation,
}
