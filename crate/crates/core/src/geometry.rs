//! Square-array geometries with interstitial impurities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{circular_dipole, DipolePolarization, Displacement, Handedness, GAMMA_L};

/// Above this `γ_I/γ_L` the Markovian elimination of the lattice gets shaky.
pub const IMPURITY_LINEWIDTH_WARN: f64 = 0.1;

/// Default impurity linewidth in units of γ_L.
pub const DEFAULT_GAMMA_I: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub handedness: Handedness,
}

impl LatticeConfig {
    pub fn new(spacing: f64, nx: usize, ny: usize, handedness: Handedness) -> Result<Self> {
        let c = Self { spacing, nx, ny, handedness };
        c.validate()?;
        Ok(c)
    }

    /// `n × n` right-handed array.
    pub fn square(spacing: f64, n: usize) -> Result<Self> {
        Self::new(spacing, n, n, Handedness::Right)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidLattice(format!("spacing must be positive, got {}", self.spacing)));
        }
        if self.nx < 2 && self.ny < 2 || self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidLattice(format!(
                "need at least two atoms, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn with_spacing(&self, spacing: f64) -> Result<Self> {
        Self::new(spacing, self.nx, self.ny, self.handedness)
    }

    pub fn n_atoms(&self) -> usize {
        self.nx * self.ny
    }

    pub fn site(&self, i: usize, j: usize) -> Displacement {
        Displacement::planar(i as f64 * self.spacing, j as f64 * self.spacing)
    }

    pub fn dipole(&self) -> DipolePolarization {
        circular_dipole(self.handedness)
    }

    /// Plaquette whose lower-left atom is `(nx/2 − 1, ny/2 − 1)`.
    pub fn central_plaquette(&self) -> (usize, usize) {
        ((self.nx / 2).saturating_sub(1), (self.ny / 2).saturating_sub(1))
    }

    pub fn n_plaquettes(&self) -> (usize, usize) {
        (self.nx.saturating_sub(1), self.ny.saturating_sub(1))
    }
}

/// Impurity polarization relative to the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Configuration {
    Identical,
    Orthogonal,
}

impl Configuration {
    pub fn handedness(self, lattice: Handedness) -> Handedness {
        match self {
            Configuration::Identical => lattice,
            Configuration::Orthogonal => lattice.opposite(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Configuration::Identical => "identical",
            Configuration::Orthogonal => "orthogonal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpuritySpec {
    /// Plaquette index, identified by its lower-left lattice atom.
    pub plaquette: (usize, usize),
    /// Offset from the lower-left atom; `None` means the plaquette center.
    pub offset: Option<[f64; 2]>,
    pub gamma: f64,
    pub configuration: Configuration,
}

impl ImpuritySpec {
    pub fn centered(plaquette: (usize, usize), gamma: f64, configuration: Configuration) -> Self {
        Self { plaquette, offset: None, gamma, configuration }
    }

    pub fn with_offset(mut self, dx: f64, dy: f64) -> Self {
        self.offset = Some([dx, dy]);
        self
    }

    pub fn offset_in(&self, spacing: f64) -> [f64; 2] {
        self.offset.unwrap_or([spacing / 2.0, spacing / 2.0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedImpurity {
    pub spec: ImpuritySpec,
    pub position: Displacement,
    pub handedness: Handedness,
}

impl PlacedImpurity {
    pub fn dipole(&self) -> DipolePolarization {
        circular_dipole(self.handedness)
    }
}

/// Lattice atoms in row-major order (`index = j·nx + i`) followed by impurities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    pub lattice: LatticeConfig,
    pub lattice_positions: Vec<Displacement>,
    pub impurities: Vec<PlacedImpurity>,
}

pub fn build_geometry(config: LatticeConfig, impurities: &[ImpuritySpec]) -> Result<SystemGeometry> {
    config.validate()?;
    let a = config.spacing;
    let mut lattice_positions = Vec::with_capacity(config.n_atoms());
    for j in 0..config.ny {
        for i in 0..config.nx {
            lattice_positions.push(config.site(i, j));
        }
    }

    let (px, py) = config.n_plaquettes();
    let mut placed: Vec<PlacedImpurity> = Vec::with_capacity(impurities.len());
    for spec in impurities {
        let (i, j) = spec.plaquette;
        if px == 0 || py == 0 {
            return Err(Error::InvalidImpurity("impurities need a two-dimensional lattice".into()));
        }
        if i >= px || j >= py {
            return Err(Error::PlaquetteOutOfBounds { i, j, nx: config.nx, ny: config.ny });
        }
        if !(spec.gamma.is_finite() && spec.gamma > 0.0) {
            return Err(Error::InvalidImpurity(format!("linewidth must be positive, got {}", spec.gamma)));
        }
        if spec.gamma / GAMMA_L > IMPURITY_LINEWIDTH_WARN {
            log::warn!(
                "impurity linewidth {} is not small compared to the lattice linewidth",
                spec.gamma
            );
        }
        let [dx, dy] = spec.offset_in(a);
        if !(dx > 0.0 && dx < a && dy > 0.0 && dy < a) {
            return Err(Error::InvalidImpurity(format!(
                "offset ({dx}, {dy}) is not strictly inside the plaquette of side {a}"
            )));
        }
        let position = config.site(i, j) + Displacement::planar(dx, dy);
        for (k, other) in placed.iter().enumerate() {
            if (other.position - position).norm() == 0.0 {
                return Err(Error::CoincidentImpurities(k, placed.len()));
            }
        }
        placed.push(PlacedImpurity {
            spec: *spec,
            position,
            handedness: spec.configuration.handedness(config.handedness),
        });
    }

    Ok(SystemGeometry { lattice: config, lattice_positions, impurities: placed })
}

impl SystemGeometry {
    pub fn n_lattice(&self) -> usize {
        self.lattice_positions.len()
    }

    pub fn n_impurities(&self) -> usize {
        self.impurities.len()
    }

    pub fn impurity(&self, index: usize) -> Result<&PlacedImpurity> {
        self.impurities
            .get(index)
            .ok_or(Error::ImpurityIndex { index, count: self.impurities.len() })
    }

    /// All positions, lattice first.
    pub fn positions(&self) -> Vec<Displacement> {
        self.lattice_positions
            .iter()
            .copied()
            .chain(self.impurities.iter().map(|p| p.position))
            .collect()
    }

    pub fn impurity_separation(&self, index_1: usize, index_2: usize) -> Result<f64> {
        let a = self.impurity(index_1)?;
        let b = self.impurity(index_2)?;
        Ok((a.position - b.position).norm())
    }
}

/// Centered impurity on the central plaquette.
pub fn central_impurity(config: &LatticeConfig, gamma: f64, configuration: Configuration) -> ImpuritySpec {
    ImpuritySpec::centered(config.central_plaquette(), gamma, configuration)
}

/// Two centered impurities `m` plaquettes apart on the central row, as close to
/// symmetric about the array center as the plaquette grid allows.
pub fn impurity_pair(
    config: &LatticeConfig,
    m: usize,
    gamma: f64,
    configuration: Configuration,
) -> Result<[ImpuritySpec; 2]> {
    let (px, _) = config.n_plaquettes();
    let (ci, cj) = config.central_plaquette();
    if m == 0 || m >= px {
        return Err(Error::InvalidInput(format!(
            "separation of {m} plaquettes does not fit a row of {px} plaquettes"
        )));
    }
    let first = ci.checked_sub(m / 2).ok_or_else(|| {
        Error::InvalidInput(format!("separation of {m} plaquettes does not fit"))
    })?;
    if first + m >= px {
        return Err(Error::InvalidInput(format!("separation of {m} plaquettes does not fit")));
    }
    Ok([
        ImpuritySpec::centered((first, cj), gamma, configuration),
        ImpuritySpec::centered((first + m, cj), gamma, configuration),
    ])
}

/// Largest plaquette separation that [`impurity_pair`] can place.
pub fn max_pair_separation(config: &LatticeConfig) -> usize {
    let (px, _) = config.n_plaquettes();
    let ci = config.central_plaquette().0;
    (1..px).take_while(|&m| ci >= m / 2 && ci - m / 2 + m < px).last().unwrap_or(0)
}
