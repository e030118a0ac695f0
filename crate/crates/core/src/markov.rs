//! Markovian elimination of the lattice for a single impurity.

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::{k_projection, KProjection, DEFAULT_PROJECTION_RADIUS};
use crate::coupling::{assemble_lattice_matrix, impurity_vector, CouplingMatrix, ImpurityCouplingVector};
use crate::error::{Error, Result};
use crate::geometry::{build_geometry, Configuration, ImpuritySpec, LatticeConfig};
use crate::green::GAMMA_L;
use crate::linalg::{ModeDecomposition, Resolvent, C64};

/// Tolerance below which a negative effective linewidth is treated as roundoff.
pub const LINEWIDTH_TOLERANCE: f64 = 1e-8;
/// Relative variation of Σ across the Markov interval that raises the flag.
pub const MARKOV_VARIATION: f64 = 0.2;
/// Drives above this fraction of γ_L leave the single-excitation regime.
pub const WEAK_DRIVE_WARN: f64 = 0.1;

/// `Σ = hᵀ (δ − M)⁻¹ g`.
pub fn self_energy(m: &CouplingMatrix, v: &ImpurityCouplingVector, delta: f64) -> Result<C64> {
    self_energy_with(&m.resolvent(delta)?, v)
}

pub fn self_energy_with(r: &Resolvent<'_>, v: &ImpurityCouplingVector) -> Result<C64> {
    Ok(v.from_lattice.dot(&r.solve(&v.to_lattice)?))
}

/// The same self-energy as an explicit sum over lattice eigenmodes.
pub fn self_energy_modes(modes: &ModeDecomposition, v: &ImpurityCouplingVector, delta: f64) -> C64 {
    modes.resolvent_sum(&v.from_lattice, &v.to_lattice, delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Incidence {
    /// Plane wave at normal incidence: the same phase on every lattice atom.
    Perpendicular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub omega_l: f64,
    pub omega_i: f64,
    pub incidence: Incidence,
}

impl DriveSpec {
    /// A plane wave drives each emitter in proportion to its dipole, `Ω ∝ √γ`.
    pub fn plane_wave(omega_l: f64, gamma_i: f64) -> Self {
        Self { omega_l, omega_i: omega_l * (gamma_i / GAMMA_L).sqrt(), incidence: Incidence::Perpendicular }
    }

    pub fn check_weak(&self) {
        if self.omega_l.abs() / GAMMA_L >= WEAK_DRIVE_WARN {
            log::warn!("lattice drive {} is not weak compared to γ_L", self.omega_l);
        }
    }

    pub fn lattice_vector(&self, n: usize) -> Array1<C64> {
        match self.incidence {
            Incidence::Perpendicular => Array1::from_elem(n, C64::new(self.omega_l, 0.0)),
        }
    }
}

/// `Ω_Eff = Ω_I + conj(hᵀ (δ − M)⁻¹ Ω)`.
pub fn effective_rabi(m: &CouplingMatrix, v: &ImpurityCouplingVector, delta: f64, drive: &DriveSpec) -> Result<C64> {
    effective_rabi_with(&m.resolvent(delta)?, v, drive)
}

pub fn effective_rabi_with(r: &Resolvent<'_>, v: &ImpurityCouplingVector, drive: &DriveSpec) -> Result<C64> {
    drive.check_weak();
    let omega = drive.lattice_vector(v.len());
    let mediated = v.from_lattice.dot(&r.solve(&omega)?);
    Ok(C64::new(drive.omega_i, 0.0) + mediated.conj())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub sigma: C64,
    pub gamma_eff: f64,
    pub omega_shift: f64,
    pub omega_eff: C64,
    pub q1: f64,
}

pub fn effective_params(sigma: C64, gamma_i: f64, omega_eff: C64) -> Result<EffectiveParams> {
    let gamma_eff = gamma_i - 2.0 * sigma.im;
    if !gamma_eff.is_finite() || gamma_eff < -LINEWIDTH_TOLERANCE * GAMMA_L {
        return Err(Error::Unphysical(gamma_eff));
    }
    Ok(EffectiveParams {
        sigma,
        gamma_eff,
        omega_shift: sigma.re,
        omega_eff,
        q1: omega_eff.norm() / gamma_eff,
    })
}

/// `δ^D = J − J̃ Γ / Γ̃`.
pub fn optimal_dark_detuning(p: &KProjection) -> Result<f64> {
    if !(p.gamma_imp.abs() > 1e-10) {
        return Err(Error::UndefinedDetuning);
    }
    Ok(p.j - p.j_imp * p.gamma / p.gamma_imp)
}

/// `δ^D` at `k = 0` from infinite-lattice projections.
pub fn dark_detuning(config: &LatticeConfig, offset: [f64; 2], configuration: Configuration, gamma_i: f64) -> Result<f64> {
    let p = k_projection(config, offset, configuration, gamma_i, [0.0, 0.0], DEFAULT_PROJECTION_RADIUS)?;
    optimal_dark_detuning(&p)
}

/// Projections onto the lattice mode the impurity couples to most strongly.
/// Assumes that mode is non-degenerate.
pub fn dominant_mode_projection(m: &CouplingMatrix, v: &ImpurityCouplingVector) -> Result<KProjection> {
    let modes = m.modes()?;
    let weight = |n: usize| {
        let col = modes.vectors.column(n);
        (v.from_lattice.dot(&col) * modes.inverse.row(n).dot(&v.to_lattice)).norm()
    };
    let best = (0..modes.len())
        .max_by(|&a, &b| weight(a).partial_cmp(&weight(b)).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or_else(|| Error::InvalidInput("empty lattice".into()))?;
    let col = modes.vectors.column(best);
    let phase_ref: C64 = col.sum();
    let sign = if phase_ref.re < 0.0 { -1.0 } else { 1.0 };
    let proj = col.dot(&v.to_lattice) * sign;
    let lam = modes.eigenvalues[best];
    Ok(KProjection { j: lam.re, gamma: -2.0 * lam.im, j_imp: proj.re, gamma_imp: -2.0 * proj.im })
}

/// Whether Σ stays put over `δ + Re Σ ± Γ_Eff`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck {
    pub flagged: bool,
    pub max_gamma_variation: f64,
    pub max_shift_variation: f64,
}

pub fn markov_check(m: &CouplingMatrix, v: &ImpurityCouplingVector, delta: f64, gamma_i: f64) -> Result<MarkovCheck> {
    let sigma = self_energy(m, v, delta)?;
    markov_check_from(m, v, delta, gamma_i, sigma)
}

fn markov_check_from(
    m: &CouplingMatrix,
    v: &ImpurityCouplingVector,
    delta: f64,
    gamma_i: f64,
    sigma: C64,
) -> Result<MarkovCheck> {
    let gamma0 = gamma_i - 2.0 * sigma.im;
    let shift_scale = sigma.re.abs().max(gamma0.abs());
    let centre = delta + sigma.re;
    let mut check = MarkovCheck { flagged: false, max_gamma_variation: 0.0, max_shift_variation: 0.0 };
    for x in [centre - gamma0, centre, centre + gamma0] {
        match self_energy(m, v, x) {
            Ok(s) => {
                let dg = ((gamma_i - 2.0 * s.im) - gamma0).abs() / gamma0.abs();
                let ds = (s.re - sigma.re).abs() / shift_scale;
                check.max_gamma_variation = check.max_gamma_variation.max(dg);
                check.max_shift_variation = check.max_shift_variation.max(ds);
            }
            Err(e) if e.is_pole() => {
                check.max_gamma_variation = f64::INFINITY;
                check.max_shift_variation = f64::INFINITY;
            }
            Err(e) => return Err(e),
        }
    }
    check.flagged = !(check.max_gamma_variation <= MARKOV_VARIATION && check.max_shift_variation <= MARKOV_VARIATION);
    Ok(check)
}

/// Impurity linewidth, polarization and in-plaquette position (as a fraction
/// of the spacing) for scans over the lattice spacing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpurityTemplate {
    pub gamma: f64,
    pub configuration: Configuration,
    pub offset_fraction: Option<[f64; 2]>,
}

impl ImpurityTemplate {
    pub fn centered(gamma: f64, configuration: Configuration) -> Self {
        Self { gamma, configuration, offset_fraction: None }
    }

    pub fn offset_fraction(&self) -> [f64; 2] {
        self.offset_fraction.unwrap_or([0.5, 0.5])
    }

    /// Impurity on the central plaquette of `config`.
    pub fn spec_for(&self, config: &LatticeConfig) -> ImpuritySpec {
        let [fx, fy] = self.offset_fraction();
        ImpuritySpec::centered(config.central_plaquette(), self.gamma, self.configuration)
            .with_offset(fx * config.spacing, fy * config.spacing)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    Pole,
    MarkovWarning,
    Failed,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Pole => "pole",
            CellStatus::MarkovWarning => "markov-warning",
            CellStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub a: f64,
    pub delta: f64,
    pub status: CellStatus,
    pub params: Option<EffectiveParams>,
    pub markov_flag: bool,
    pub message: Option<String>,
}

impl MapCell {
    fn failed(a: f64, delta: f64, e: &Error) -> Self {
        let status = if e.is_pole() { CellStatus::Pole } else { CellStatus::Failed };
        Self { a, delta, status, params: None, markov_flag: false, message: Some(e.to_string()) }
    }
}

fn map_cell(m: &CouplingMatrix, v: &ImpurityCouplingVector, a: f64, delta: f64, gamma_i: f64, drive: &DriveSpec) -> MapCell {
    let run = || -> Result<MapCell> {
        let r = m.resolvent(delta)?;
        let sigma = self_energy_with(&r, v)?;
        let omega = effective_rabi_with(&r, v, drive)?;
        let params = effective_params(sigma, gamma_i, omega)?;
        let check = markov_check_from(m, v, delta, gamma_i, sigma)?;
        let status = if check.flagged { CellStatus::MarkovWarning } else { CellStatus::Ok };
        Ok(MapCell { a, delta, status, params: Some(params), markov_flag: check.flagged, message: None })
    };
    run().unwrap_or_else(|e| MapCell::failed(a, delta, &e))
}

/// Effective parameters of one central impurity on every `(a, δ)` cell, in
/// `a`-major order. Failed cells are kept with their status.
pub fn impurity_map(
    lattice: &LatticeConfig,
    impurity: &ImpurityTemplate,
    delta_grid: &[f64],
    a_grid: &[f64],
    drive: &DriveSpec,
) -> Result<Vec<MapCell>> {
    if delta_grid.is_empty() || a_grid.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<Vec<MapCell>> = a_grid
        .par_iter()
        .map(|&a| {
            let setup = || -> Result<(CouplingMatrix, ImpurityCouplingVector)> {
                let config = lattice.with_spacing(a)?;
                let geometry = build_geometry(config, &[impurity.spec_for(&config)])?;
                Ok((assemble_lattice_matrix(&geometry)?, impurity_vector(&geometry, 0)?))
            };
            match setup() {
                Ok((m, v)) => delta_grid
                    .par_iter()
                    .map(|&d| map_cell(&m, &v, a, d, impurity.gamma, drive))
                    .collect(),
                Err(e) => delta_grid.iter().map(|&d| MapCell::failed(a, d, &e)).collect(),
            }
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::central_impurity;

    fn system(a: f64, n: usize, configuration: Configuration) -> (CouplingMatrix, ImpurityCouplingVector) {
        let c = LatticeConfig::square(a, n).unwrap();
        let g = build_geometry(c, &[central_impurity(&c, 0.01, configuration)]).unwrap();
        (assemble_lattice_matrix(&g).unwrap(), impurity_vector(&g, 0).unwrap())
    }

    #[test]
    fn decoupled_impurity() {
        let (m, v) = system(0.2, 3, Configuration::Identical);
        let zero = ImpurityCouplingVector::zeros(v.len());
        assert_eq!(self_energy(&m, &zero, 2.0).unwrap(), C64::new(0.0, 0.0));
        let p = effective_params(C64::new(0.0, 0.0), 0.01, C64::new(0.1, 0.0)).unwrap();
        assert_eq!(p.gamma_eff, 0.01);
        assert_eq!(p.omega_shift, 0.0);
        let drive = DriveSpec { omega_l: 0.0, omega_i: 0.003, incidence: Incidence::Perpendicular };
        assert_eq!(effective_rabi(&m, &v, 2.0, &drive).unwrap(), C64::new(0.003, 0.0));
    }

    #[test]
    fn dual_paths_agree() {
        for config in [Configuration::Identical, Configuration::Orthogonal] {
            let (m, v) = system(0.23, 4, config);
            let modes = m.modes().unwrap();
            for delta in [-3.0, 0.4, 2.5] {
                let a = self_energy(&m, &v, delta).unwrap();
                let b = self_energy_modes(modes, &v, delta);
                assert!((a - b).norm() < 1e-10 * a.norm(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn sigma_linear_in_gamma() {
        let c = LatticeConfig::square(0.2, 4).unwrap();
        let s = |g: f64| {
            let geo = build_geometry(c, &[central_impurity(&c, g, Configuration::Identical)]).unwrap();
            let m = assemble_lattice_matrix(&geo).unwrap();
            self_energy(&m, &impurity_vector(&geo, 0).unwrap(), 1.7).unwrap()
        };
        let (a, b) = (s(0.01), s(0.02));
        assert!((b - 2.0 * a).norm() < 1e-13 * b.norm());
    }

    #[test]
    fn negative_linewidth_is_unphysical() {
        assert!(matches!(
            effective_params(C64::new(0.0, 0.1), 0.01, C64::new(0.0, 0.0)),
            Err(Error::Unphysical(_))
        ));
    }

    #[test]
    fn undefined_dark_detuning() {
        let p = KProjection { j: 1.0, gamma: 2.0, j_imp: 0.3, gamma_imp: 0.0 };
        assert!(matches!(optimal_dark_detuning(&p), Err(Error::UndefinedDetuning)));
        let c = LatticeConfig::square(0.2, 2).unwrap();
        assert!(matches!(
            dark_detuning(&c, [0.1, 0.1], Configuration::Orthogonal, 0.01),
            Err(Error::UndefinedDetuning)
        ));
    }

    #[test]
    fn empty_map() {
        let c = LatticeConfig::square(0.2, 4).unwrap();
        let t = ImpurityTemplate::centered(0.01, Configuration::Identical);
        let d = DriveSpec::plane_wave(0.01, 0.01);
        assert!(impurity_map(&c, &t, &[], &[0.2], &d).unwrap().is_empty());
        assert!(impurity_map(&c, &t, &[1.0], &[], &d).unwrap().is_empty());
    }

    #[test]
    fn map_keeps_failed_cells() {
        let c = LatticeConfig::square(0.2, 4).unwrap();
        let t = ImpurityTemplate::centered(0.01, Configuration::Identical);
        let d = DriveSpec::plane_wave(0.01, 0.01);
        let cells = impurity_map(&c, &t, &[1.0, 2.0], &[0.2, -1.0], &d).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[2].status, CellStatus::Failed);
        assert!(cells[0].params.is_some());
    }
}
