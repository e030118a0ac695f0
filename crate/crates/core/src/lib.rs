//! Impurity emitters embedded in two-dimensional subwavelength atom arrays.
//!
//! The crate assembles the coupled-dipole description of a finite square
//! array with interstitial impurities and derives the quantities that govern
//! the impurities once the lattice is eliminated: self-energies, effective
//! linewidths and drives, array-mediated impurity-impurity exchange, and the
//! exact single-excitation dynamics used to cross-check them.
//!
//! Units: lengths in the lattice transition wavelength λ, rates in the
//! lattice linewidth γ_L, and `ω_L = 2π`.

pub mod band;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod green;
pub mod linalg;
pub mod markov;
pub mod toy;
pub mod two_impurity;

pub use band::{band_edge, band_structure, BandEdge, BandPoint, BandStructure, KGrid, KProjection, Window};
pub use coupling::{assemble_lattice_matrix, impurity_vector, CouplingMatrix, ImpurityCouplingVector};
pub use error::{Error, Result};
pub use geometry::{
    build_geometry, Configuration, ImpuritySpec, LatticeConfig, PlacedImpurity, SystemGeometry,
};
pub use green::{
    circular_dipole, green_tensor, pair_coupling, DipolePolarization, Displacement, GreenTensor,
    Handedness, PairCoupling, GAMMA_L, OMEGA_L,
};
pub use linalg::C64;
pub use markov::{DriveSpec, EffectiveParams, ImpurityTemplate};
pub use dynamics::{FullHamiltonian, TimeSeries, TransferMetrics};
pub use two_impurity::{DetuningRule, ScalingFit, TwoImpurityResult};
