//! Fixtures shared by the benchmarks.

use array_emitters_core::geometry::impurity_pair;
use array_emitters_core::{build_geometry, Configuration, ImpurityTemplate, LatticeConfig, SystemGeometry};

pub const SIZES: [usize; 3] = [10, 20, 30];

/// `n × n` array at spacing `a` with one impurity on the central plaquette.
pub fn single(a: f64, n: usize, configuration: Configuration) -> SystemGeometry {
    let c = LatticeConfig::square(a, n).expect("valid lattice");
    build_geometry(c, &[ImpurityTemplate::centered(0.01, configuration).spec_for(&c)]).expect("valid geometry")
}

/// Central pair `m` plaquettes apart.
pub fn pair(a: f64, n: usize, m: usize, configuration: Configuration) -> SystemGeometry {
    let c = LatticeConfig::square(a, n).expect("valid lattice");
    build_geometry(c, &impurity_pair(&c, m, 0.01, configuration).expect("pair fits")).expect("valid geometry")
}
