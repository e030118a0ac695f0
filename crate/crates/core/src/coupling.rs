//! Real-space assembly of lattice-lattice and impurity-lattice couplings.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::SystemGeometry;
use crate::green::{pair_coupling, GAMMA_L};
use crate::linalg::{DenseOperator, ModeDecomposition, Resolvent, C64};

/// Lattice coupling matrix `M`: `J − iΓ/2` off the diagonal, `−iγ_L/2` on it.
#[derive(Clone, Debug)]
pub struct CouplingMatrix {
    op: DenseOperator,
}

impl CouplingMatrix {
    pub fn from_matrix(matrix: Array2<C64>) -> Self {
        Self { op: DenseOperator::new(matrix) }
    }

    pub fn matrix(&self) -> &Array2<C64> {
        self.op.matrix()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Cached eigendecomposition.
    pub fn modes(&self) -> Result<&ModeDecomposition> {
        self.op.modes()
    }

    /// Factorization of `δ·I − M`.
    pub fn resolvent(&self, delta: f64) -> Result<Resolvent<'_>> {
        self.op.resolvent(delta)
    }

    pub fn operator(&self) -> &DenseOperator {
        &self.op
    }
}

pub fn assemble_lattice_matrix(geometry: &SystemGeometry) -> Result<CouplingMatrix> {
    let pos = &geometry.lattice_positions;
    let n = pos.len();
    let d = geometry.lattice.dipole();
    let rows: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|p| {
            (p + 1..n)
                .map(|q| pair_coupling(pos[p], pos[q], &d, &d, GAMMA_L, GAMMA_L).map(|c| c.0))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut m = Array2::zeros((n, n));
    for (p, row) in rows.into_iter().enumerate() {
        m[[p, p]] = C64::new(0.0, -0.5 * GAMMA_L);
        for (k, v) in row.into_iter().enumerate() {
            let q = p + 1 + k;
            m[[p, q]] = v;
            m[[q, p]] = v;
        }
    }
    Ok(CouplingMatrix::from_matrix(m))
}

/// Couplings between one impurity and every lattice atom.
///
/// `to_lattice[p]` is the amplitude the impurity feeds into atom `p`
/// (`d_Lᴴ G d_I`), `from_lattice[p]` the amplitude atom `p` feeds back
/// (`d_Iᴴ G d_L`). They coincide when impurity and lattice share a polarization.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpurityCouplingVector {
    pub to_lattice: Array1<C64>,
    pub from_lattice: Array1<C64>,
}

impl ImpurityCouplingVector {
    pub fn zeros(n: usize) -> Self {
        Self { to_lattice: Array1::zeros(n), from_lattice: Array1::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.to_lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_lattice.is_empty()
    }
}

pub fn impurity_vector(geometry: &SystemGeometry, impurity_index: usize) -> Result<ImpurityCouplingVector> {
    let imp = geometry.impurity(impurity_index)?;
    let d_l = geometry.lattice.dipole();
    let d_i = imp.dipole();
    let gamma = imp.spec.gamma;
    let mut to_lattice = Vec::with_capacity(geometry.n_lattice());
    let mut from_lattice = Vec::with_capacity(geometry.n_lattice());
    for &p in &geometry.lattice_positions {
        to_lattice.push(pair_coupling(p, imp.position, &d_l, &d_i, GAMMA_L, gamma)?.0);
        from_lattice.push(pair_coupling(imp.position, p, &d_i, &d_l, gamma, GAMMA_L)?.0);
    }
    Ok(ImpurityCouplingVector {
        to_lattice: Array1::from(to_lattice),
        from_lattice: Array1::from(from_lattice),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, central_impurity, Configuration, LatticeConfig};
    use crate::green::{circular_dipole, Displacement, Handedness};

    fn plaquette(a: f64, configuration: Configuration, gamma: f64) -> SystemGeometry {
        let c = LatticeConfig::square(a, 2).unwrap();
        build_geometry(c, &[central_impurity(&c, gamma, configuration)]).unwrap()
    }

    #[test]
    fn two_atom_line() {
        let c = LatticeConfig::new(0.3, 2, 1, Handedness::Right).unwrap();
        let g = build_geometry(c, &[]).unwrap();
        let m = assemble_lattice_matrix(&g).unwrap();
        let d = circular_dipole(Handedness::Right);
        let want = pair_coupling(Displacement::planar(0.3, 0.0), Displacement::ZERO, &d, &d, 1.0, 1.0).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.matrix()[[0, 1]], want.0);
        assert_eq!(m.matrix()[[1, 0]], want.0);
        assert_eq!(m.matrix()[[0, 0]], C64::new(0.0, -0.5));
    }

    #[test]
    fn symmetric_with_exact_diagonal() {
        let c = LatticeConfig::new(0.17, 5, 4, Handedness::Left).unwrap();
        let m = assemble_lattice_matrix(&build_geometry(c, &[]).unwrap()).unwrap();
        let a = m.matrix();
        for p in 0..a.nrows() {
            assert_eq!(a[[p, p]], C64::new(0.0, -0.5));
            for q in 0..a.ncols() {
                assert!((a[[p, q]] - a[[q, p]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_vector_is_uniform_on_plaquette() {
        let g = plaquette(0.2, Configuration::Identical, 0.01);
        let v = impurity_vector(&g, 0).unwrap();
        for k in 1..4 {
            assert!((v.to_lattice[k] - v.to_lattice[0]).norm() < 1e-14);
        }
        assert_eq!(v.to_lattice, v.from_lattice);
    }

    #[test]
    fn orthogonal_vector_is_checkerboard() {
        let g = plaquette(0.2, Configuration::Orthogonal, 0.01);
        let v = impurity_vector(&g, 0).unwrap();
        // row-major: (0,0) (1,0) (0,1) (1,1)
        let t = &v.to_lattice;
        assert!((t[0] + t[1]).norm() < 1e-14);
        assert!((t[0] - t[3]).norm() < 1e-14);
        assert!((t[1] - t[2]).norm() < 1e-14);
        assert!(t.sum().norm() < 1e-14);
        // the reverse direction flips sign on plaquette diagonals
        for k in 0..4 {
            assert!((v.from_lattice[k] + v.to_lattice[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn four_times_gamma_doubles_entries() {
        let a = impurity_vector(&plaquette(0.2, Configuration::Identical, 0.01), 0).unwrap();
        let b = impurity_vector(&plaquette(0.2, Configuration::Identical, 0.04), 0).unwrap();
        for (x, y) in a.to_lattice.iter().zip(b.to_lattice.iter()) {
            assert!((y - 2.0 * x).norm() < 1e-14 * y.norm());
        }
    }

    #[test]
    fn identical_vector_has_fourfold_symmetry() {
        let c = LatticeConfig::square(0.15, 6).unwrap();
        let g = build_geometry(c, &[central_impurity(&c, 0.01, Configuration::Identical)]).unwrap();
        let v = impurity_vector(&g, 0).unwrap();
        // rotation by 90° about the plaquette center (2.5a, 2.5a): (i, j) -> (5 − j, i)
        for j in 0..6 {
            for i in 0..6 {
                let p = j * 6 + i;
                let q = i * 6 + (5 - j);
                assert!((v.to_lattice[p] - v.to_lattice[q]).norm() < 1e-12 * v.to_lattice[p].norm().max(1e-300));
            }
        }
    }

    #[test]
    fn passive_spectrum() {
        let c = LatticeConfig::square(0.2, 6).unwrap();
        let m = assemble_lattice_matrix(&build_geometry(c, &[]).unwrap()).unwrap();
        for lam in m.modes().unwrap().eigenvalues.iter() {
            assert!(lam.im <= 1e-8);
        }
    }
}
