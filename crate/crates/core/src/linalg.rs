//! Thin wrappers over LAPACK (through `ndarray-linalg`) for the dense
//! complex problems that appear everywhere downstream.

use std::sync::OnceLock;

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eig, Factorize, Inverse, LUFactorized, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

fn lapack(e: ndarray_linalg::error::LinalgError) -> Error {
    Error::Linalg(e.to_string())
}

/// Right eigenvectors `V`, eigenvalues `Λ` and the inverse `V⁻¹` of a
/// diagonalizable matrix, `A = V Λ V⁻¹`.
#[derive(Clone, Debug)]
pub struct ModeDecomposition {
    pub eigenvalues: Array1<C64>,
    /// Columns are right eigenvectors scaled to `vᵀv = 1` where that is possible.
    pub vectors: Array2<C64>,
    /// Rows are the matching left eigenvectors.
    pub inverse: Array2<C64>,
}

impl ModeDecomposition {
    pub fn new(a: &Array2<C64>) -> Result<Self> {
        let (eigenvalues, mut vectors) = a.eig().map_err(lapack)?;
        for mut col in vectors.axis_iter_mut(Axis(1)) {
            let s: C64 = col.iter().map(|v| v * v).sum();
            // Quasi-null vectors of degenerate complex-symmetric pairs keep
            // LAPACK's unit Euclidean norm.
            if s.norm() > 1e-8 {
                let scale = s.sqrt().inv();
                col.mapv_inplace(|v| v * scale);
            }
        }
        let inverse = vectors.inv().map_err(lapack)?;
        Ok(Self { eigenvalues, vectors, inverse })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalue closest to the real point `delta`.
    pub fn nearest(&self, delta: f64) -> C64 {
        self.eigenvalues
            .iter()
            .copied()
            .min_by(|a, b| {
                (a - delta).norm().partial_cmp(&(b - delta).norm()).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(C64::new(f64::NAN, f64::NAN))
    }

    /// Frobenius-norm condition number of the eigenvector matrix.
    pub fn condition(&self) -> f64 {
        frobenius(&self.vectors) * frobenius(&self.inverse)
    }

    /// `hᵀ (δ − A)⁻¹ g` as a sum over modes.
    pub fn resolvent_sum(&self, h: &Array1<C64>, g: &Array1<C64>, delta: f64) -> C64 {
        let left = h.dot(&self.vectors);
        let right = self.inverse.dot(g);
        left.iter()
            .zip(right.iter())
            .zip(self.eigenvalues.iter())
            .map(|((l, r), lam)| l * r / (C64::new(delta, 0.0) - lam))
            .sum()
    }
}

pub fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Pole rule: a detuning within this distance of a mode that is itself
/// narrower than this is rejected.
pub const POLE_TOLERANCE: f64 = 1e-6;

// Solutions amplified beyond this trigger the exact eigenvalue check.
const AMPLIFICATION_ALARM: f64 = 1e4;

/// A dense square matrix with a lazily computed, cached eigendecomposition.
#[derive(Debug)]
pub struct DenseOperator {
    matrix: Array2<C64>,
    modes: OnceLock<ModeDecomposition>,
}

impl Clone for DenseOperator {
    fn clone(&self) -> Self {
        let modes = OnceLock::new();
        if let Some(m) = self.modes.get() {
            let _ = modes.set(m.clone());
        }
        Self { matrix: self.matrix.clone(), modes }
    }
}

impl DenseOperator {
    pub fn new(matrix: Array2<C64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operator must be square");
        Self { matrix, modes: OnceLock::new() }
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn modes(&self) -> Result<&ModeDecomposition> {
        if let Some(m) = self.modes.get() {
            return Ok(m);
        }
        let m = ModeDecomposition::new(&self.matrix)?;
        Ok(self.modes.get_or_init(|| m))
    }

    /// Factorizes `δ·I − A`.
    pub fn resolvent(&self, delta: f64) -> Result<Resolvent<'_>> {
        let n = self.dim();
        let mut shifted = self.matrix.mapv(|v| -v);
        for k in 0..n {
            shifted[[k, k]] += delta;
        }
        match shifted.factorize() {
            Ok(lu) => Ok(Resolvent { lu, delta, op: self }),
            Err(_) => Err(Error::Pole { delta, nearest: self.modes()?.nearest(delta) }),
        }
    }
}

/// LU factorization of `δ·I − A` for repeated solves at one detuning.
pub struct Resolvent<'a> {
    lu: LUFactorized<ndarray::OwnedRepr<C64>>,
    delta: f64,
    op: &'a DenseOperator,
}

impl Resolvent<'_> {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `(δ − A)⁻¹ b`; the eigenvalues are only consulted when the solution
    /// is suspiciously amplified.
    pub fn solve(&self, b: &Array1<C64>) -> Result<Array1<C64>> {
        let x = self.lu.solve(b).map_err(lapack)?;
        let bmax = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let xmax = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !xmax.is_finite() || xmax > AMPLIFICATION_ALARM * bmax {
            let nearest = self.op.modes()?.nearest(self.delta);
            let on_pole = (nearest.re - self.delta).abs() < POLE_TOLERANCE
                && nearest.im.abs() < POLE_TOLERANCE;
            if on_pole || !xmax.is_finite() {
                return Err(Error::Pole { delta: self.delta, nearest });
            }
        }
        Ok(x)
    }
}

/// Plain dense solve `A x = b`.
pub fn solve(a: &Array2<C64>, b: &Array1<C64>) -> Result<Array1<C64>> {
    a.solve(b).map_err(lapack)
}
