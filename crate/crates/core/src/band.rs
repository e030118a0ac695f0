//! Quasimomentum-space couplings from real-space lattice sums.
//!
//! Truncated lattice sums of the dipole-dipole coupling converge only
//! conditionally, so every sum here carries a window. The triangular
//! (Fejér) window is the Bloch-wave expectation value on a finite `n × n`
//! array and keeps `Γ(k) ≥ 0` exactly; the smooth bump window converges much
//! faster for `J(k)` and the impurity projections.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Configuration, LatticeConfig};
use crate::green::{circular_dipole, pair_coupling, Displacement, GAMMA_L, OMEGA_L};
use crate::linalg::C64;

/// Default patch half-width (in lattice spacings) of band-structure sums.
pub const DEFAULT_PATCH: usize = 40;
/// Default Brillouin-zone grid for locating the band edge.
pub const DEFAULT_BZ_GRID: usize = 101;
/// Default radius (in λ) of the lattice sums behind the dark detuning.
pub const DEFAULT_PROJECTION_RADIUS: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// `(1 − |m|/n)(1 − |l|/n)` over `|m|, |l| < n`.
    Fejer,
    /// `exp(1 − 1/(1 − ρ²))` with `ρ = |R|/(n a) < 1`.
    Smooth,
}

fn smooth_taper(rho: f64) -> f64 {
    if rho >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - rho * rho)).exp()
    }
}

/// Weighted couplings `w(R) κ(R)` over a patch of displacements.
#[derive(Clone, Debug)]
pub struct LatticeSum {
    terms: Vec<(f64, f64, C64)>,
}

impl LatticeSum {
    /// Lattice self-sum over displacements `(m a, l a) ≠ 0`.
    pub fn lattice(config: &LatticeConfig, extent: usize, window: Window) -> Result<Self> {
        Self::build(config, [0.0, 0.0], None, extent, window)
    }

    /// Sum of impurity-to-lattice couplings; lattice sites sit at
    /// `((m − ox) a, (l − oy) a)` relative to an impurity at fractional
    /// plaquette offset `(ox, oy)`.
    pub fn impurity(
        config: &LatticeConfig,
        offset: [f64; 2],
        configuration: Configuration,
        gamma_i: f64,
        extent: usize,
        window: Window,
    ) -> Result<Self> {
        Self::build(config, offset, Some((configuration, gamma_i)), extent, window)
    }

    fn build(
        config: &LatticeConfig,
        offset: [f64; 2],
        impurity: Option<(Configuration, f64)>,
        extent: usize,
        window: Window,
    ) -> Result<Self> {
        if extent == 0 {
            return Err(Error::InvalidInput("lattice sum extent must be positive".into()));
        }
        let a = config.spacing;
        let n = extent as f64;
        let d_l = config.dipole();
        let (d_i, gamma_i) = match impurity {
            Some((c, g)) => (circular_dipole(c.handedness(config.handedness)), g),
            None => (d_l, GAMMA_L),
        };
        let span = extent as i64;
        let rows: Vec<Vec<(f64, f64, C64)>> = (-span..=span)
            .into_par_iter()
            .map(|l| {
                let mut row = Vec::new();
                for m in -span..=span {
                    let (fx, fy) = (m as f64 - offset[0], l as f64 - offset[1]);
                    if fx == 0.0 && fy == 0.0 {
                        continue;
                    }
                    let w = match window {
                        Window::Fejer => (1.0 - fx.abs() / n).max(0.0) * (1.0 - fy.abs() / n).max(0.0),
                        Window::Smooth => smooth_taper(fx.hypot(fy) / n),
                    };
                    if w <= 0.0 {
                        continue;
                    }
                    let r = Displacement::planar(fx * a, fy * a);
                    let kappa = pair_coupling(r, Displacement::ZERO, &d_l, &d_i, GAMMA_L, gamma_i)
                        .expect("non-zero displacement")
                        .0;
                    row.push((r.x, r.y, kappa * w));
                }
                row
            })
            .collect();
        Ok(Self { terms: rows.into_iter().flatten().collect() })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Σ_R w(R) κ(R) e^{−ik·R}`.
    pub fn at(&self, kx: f64, ky: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(x, y, c) in &self.terms {
            let (s, co) = (kx * x + ky * y).sin_cos();
            acc += c * C64::new(co, -s);
        }
        acc
    }
}

/// Quasimomentum sample points inside the first Brillouin zone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub points: Vec<[f64; 2]>,
}

impl KGrid {
    /// `n × n` points covering `[−π/a, π/a]²` including both edges.
    pub fn uniform(config: &LatticeConfig, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("k grid needs at least 2 points per axis".into()));
        }
        let kmax = PI / config.spacing;
        let axis: Vec<f64> = (0..n).map(|i| -kmax + 2.0 * kmax * i as f64 / (n - 1) as f64).collect();
        let points = axis.iter().flat_map(|&ky| axis.iter().map(move |&kx| [kx, ky])).collect();
        Ok(Self { points })
    }

    pub fn from_points(config: &LatticeConfig, points: Vec<[f64; 2]>) -> Result<Self> {
        let kmax = PI / config.spacing * (1.0 + 1e-12);
        for &[kx, ky] in &points {
            if !(kx.abs() <= kmax && ky.abs() <= kmax) {
                return Err(Error::OutsideBrillouinZone { kx, ky });
            }
        }
        Ok(Self { points })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub kx: f64,
    pub ky: f64,
    pub j: f64,
    pub gamma: f64,
    pub in_light_cone: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEdge {
    pub value: f64,
    pub k: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub spacing: f64,
    pub patch: usize,
    pub points: Vec<BandPoint>,
    pub band_edge: BandEdge,
}

/// `J(k) − iΓ(k)/2` at every grid point: `J` from the smooth window, `Γ`
/// (including the single-atom `γ_L`) from the Fejér window.
pub fn band_structure(config: &LatticeConfig, grid: &KGrid, patch: usize) -> Result<BandStructure> {
    if grid.points.is_empty() {
        return Err(Error::InvalidInput("empty k grid".into()));
    }
    let grid = KGrid::from_points(config, grid.points.clone())?;
    let coherent = LatticeSum::lattice(config, patch, Window::Smooth)?;
    let dissipative = LatticeSum::lattice(config, patch, Window::Fejer)?;
    let points: Vec<BandPoint> = grid
        .points
        .par_iter()
        .map(|&[kx, ky]| BandPoint {
            kx,
            ky,
            j: coherent.at(kx, ky).re,
            gamma: GAMMA_L - 2.0 * dissipative.at(kx, ky).im,
            in_light_cone: kx * kx + ky * ky <= OMEGA_L * OMEGA_L,
        })
        .collect();
    let band_edge = argmax_edge(points.iter().map(|p| (p.j, [p.kx, p.ky])));
    Ok(BandStructure { spacing: config.spacing, patch, points, band_edge })
}

fn argmax_edge(it: impl Iterator<Item = (f64, [f64; 2])>) -> BandEdge {
    it.fold(BandEdge { value: f64::NEG_INFINITY, k: [0.0, 0.0] }, |best, (j, k)| {
        if j > best.value {
            BandEdge { value: j, k }
        } else {
            best
        }
    })
}

/// Band edge `ω_BE = max_k J(k)` on a `grid × grid` Brillouin-zone mesh.
pub fn band_edge_with(config: &LatticeConfig, grid: usize, patch: usize) -> Result<BandEdge> {
    let g = KGrid::uniform(config, grid)?;
    let coherent = LatticeSum::lattice(config, patch, Window::Smooth)?;
    let values: Vec<(f64, [f64; 2])> =
        g.points.par_iter().map(|&[kx, ky]| (coherent.at(kx, ky).re, [kx, ky])).collect();
    Ok(argmax_edge(values.into_iter()))
}

pub fn band_edge(config: &LatticeConfig) -> Result<BandEdge> {
    band_edge_with(config, DEFAULT_BZ_GRID, DEFAULT_PATCH)
}

/// Lattice mode `J(k), Γ(k)` together with the impurity projections
/// `J̃(k), Γ̃(k)` entering the dark-detuning condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KProjection {
    pub j: f64,
    pub gamma: f64,
    pub j_imp: f64,
    pub gamma_imp: f64,
}

/// Infinite-lattice projections at quasimomentum `k` from smooth-window sums
/// of radius `radius` (in λ).
pub fn k_projection(
    config: &LatticeConfig,
    offset: [f64; 2],
    configuration: Configuration,
    gamma_i: f64,
    k: [f64; 2],
    radius: f64,
) -> Result<KProjection> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("projection radius must be positive".into()));
    }
    KGrid::from_points(config, vec![k])?;
    let extent = ((radius / config.spacing).round() as usize).max(2);
    let frac = [offset[0] / config.spacing, offset[1] / config.spacing];
    let lat = LatticeSum::lattice(config, extent, Window::Smooth)?.at(k[0], k[1]) + C64::new(0.0, -0.5 * GAMMA_L);
    let imp = LatticeSum::impurity(config, frac, configuration, gamma_i, extent, Window::Smooth)?.at(k[0], k[1]);
    Ok(KProjection { j: lat.re, gamma: -2.0 * lat.im, j_imp: imp.re, gamma_imp: -2.0 * imp.im })
}
