//! Array-mediated exchange between two impurities and the scans built on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::band_edge;
use crate::coupling::{assemble_lattice_matrix, impurity_vector, CouplingMatrix, ImpurityCouplingVector};
use crate::error::{Error, Result};
use crate::geometry::{build_geometry, impurity_pair, max_pair_separation, Configuration, LatticeConfig, SystemGeometry};
use crate::green::pair_coupling;
use crate::linalg::{Resolvent, C64};
use crate::markov::{dark_detuning, self_energy_with, CellStatus, ImpurityTemplate};

/// Fit window: array Q⁽²⁾ must beat the free-space value by this factor.
pub const FLOOR_FACTOR: f64 = 3.0;
/// Band-edge multiple used for the orthogonal configuration by default.
pub const ORTHOGONAL_EDGE_FACTOR: f64 = 1.05;

/// Free-space coupling `φ` between two impurities with their own linewidths.
pub fn free_space_phi(geometry: &SystemGeometry, index_1: usize, index_2: usize) -> Result<C64> {
    let a = geometry.impurity(index_1)?;
    let b = geometry.impurity(index_2)?;
    if (a.position - b.position).norm() == 0.0 {
        return Err(Error::CoincidentImpurities(index_1, index_2));
    }
    Ok(pair_coupling(a.position, b.position, &a.dipole(), &b.dipole(), a.spec.gamma, b.spec.gamma)?.0)
}

/// `Φ_Eff = φ + h_sᵀ (δ − M)⁻¹ g_q`.
pub fn effective_interaction(
    m: &CouplingMatrix,
    v_s: &ImpurityCouplingVector,
    v_q: &ImpurityCouplingVector,
    delta: f64,
    phi: C64,
) -> Result<C64> {
    effective_interaction_with(&m.resolvent(delta)?, v_s, v_q, phi)
}

pub fn effective_interaction_with(
    r: &Resolvent<'_>,
    v_s: &ImpurityCouplingVector,
    v_q: &ImpurityCouplingVector,
    phi: C64,
) -> Result<C64> {
    Ok(phi + v_s.from_lattice.dot(&r.solve(&v_q.to_lattice)?))
}

/// `Q⁽²⁾ = Re Φ_Eff / Γ_Eff`.
pub fn q2(phi_eff: C64, gamma_eff: f64) -> Result<f64> {
    if !(gamma_eff > 0.0) {
        return Err(Error::NonPositiveLinewidth(gamma_eff));
    }
    Ok(phi_eff.re / gamma_eff)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoImpurityResult {
    pub phi_eff: C64,
    pub phi: C64,
    pub sigma: [C64; 2],
    pub gamma_eff: [f64; 2],
    /// `Re Φ_Eff` over the mean of the two effective linewidths.
    pub q2: f64,
    pub separation: f64,
    pub configuration: Configuration,
    pub delta: f64,
}

impl TwoImpurityResult {
    pub fn mean_gamma_eff(&self) -> f64 {
        0.5 * (self.gamma_eff[0] + self.gamma_eff[1])
    }
}

fn pair_result(
    r: &Resolvent<'_>,
    geometry: &SystemGeometry,
    v: [&ImpurityCouplingVector; 2],
) -> Result<TwoImpurityResult> {
    let phi = free_space_phi(geometry, 0, 1)?;
    let sigma = [self_energy_with(r, v[0])?, self_energy_with(r, v[1])?];
    let gamma_eff = [
        geometry.impurities[0].spec.gamma - 2.0 * sigma[0].im,
        geometry.impurities[1].spec.gamma - 2.0 * sigma[1].im,
    ];
    let phi_eff = effective_interaction_with(r, v[0], v[1], phi)?;
    Ok(TwoImpurityResult {
        phi_eff,
        phi,
        sigma,
        gamma_eff,
        q2: q2(phi_eff, 0.5 * (gamma_eff[0] + gamma_eff[1]))?,
        separation: geometry.impurity_separation(0, 1)?,
        configuration: geometry.impurities[0].spec.configuration,
        delta: r.delta(),
    })
}

/// Exchange between impurities 0 and 1 of `geometry` at detuning `delta`.
pub fn two_impurity(geometry: &SystemGeometry, delta: f64) -> Result<TwoImpurityResult> {
    if geometry.n_impurities() < 2 {
        return Err(Error::ImpurityIndex { index: 1, count: geometry.n_impurities() });
    }
    let m = assemble_lattice_matrix(geometry)?;
    let v0 = impurity_vector(geometry, 0)?;
    let v1 = impurity_vector(geometry, 1)?;
    pair_result(&m.resolvent(delta)?, geometry, [&v0, &v1])
}

/// How the lattice detuning of a scan is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum DetuningRule {
    Fixed { value: f64 },
    /// Dark detuning of the `k = 0` lattice mode.
    DarkK0,
    /// A multiple of the band edge.
    BandEdge { factor: f64 },
}

impl DetuningRule {
    pub fn default_for(configuration: Configuration) -> Self {
        match configuration {
            Configuration::Identical => DetuningRule::DarkK0,
            Configuration::Orthogonal => DetuningRule::BandEdge { factor: ORTHOGONAL_EDGE_FACTOR },
        }
    }

    pub fn resolve(&self, config: &LatticeConfig, impurity: &ImpurityTemplate) -> Result<f64> {
        match *self {
            DetuningRule::Fixed { value } => Ok(value),
            DetuningRule::DarkK0 => {
                let [fx, fy] = impurity.offset_fraction();
                dark_detuning(
                    config,
                    [fx * config.spacing, fy * config.spacing],
                    impurity.configuration,
                    impurity.gamma,
                )
            }
            DetuningRule::BandEdge { factor } => Ok(factor * band_edge(config)?.value),
        }
    }
}

/// Least-squares line through `(x, ln|y|)` or `(ln x, ln|y|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `ξ` of `|y| ∝ e^{−x/ξ}` for semi-log fits with negative slope.
    pub decay_length: Option<f64>,
}

fn linear_fit(u: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mw = w.iter().sum::<f64>() / n;
    let suu: f64 = u.iter().map(|x| (x - mu) * (x - mu)).sum();
    let suw: f64 = u.iter().zip(w).map(|(x, y)| (x - mu) * (y - mw)).sum();
    let sww: f64 = w.iter().map(|y| (y - mw) * (y - mw)).sum();
    let slope = suw / suu;
    let intercept = mw - slope * mu;
    let r2 = if sww == 0.0 { 1.0 } else { suw * suw / (suu * sww) };
    (slope, intercept, r2)
}

fn check_fit_input(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("fit abscissa and ordinate differ in length".into()));
    }
    if x.len() < 4 {
        return Err(Error::InsufficientPoints { needed: 4, got: x.len() });
    }
    if y.iter().any(|v| !(v.abs() > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("fit ordinates must be finite and non-zero".into()));
    }
    Ok(())
}

/// `ln|y| = slope · x + intercept`.
pub fn fit_semilog(x: &[f64], y: &[f64]) -> Result<ScalingFit> {
    check_fit_input(x, y)?;
    let w: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(x, &w);
    let decay_length = (slope < 0.0).then(|| -1.0 / slope);
    Ok(ScalingFit { x: x.to_vec(), y: y.to_vec(), slope, intercept, r_squared, decay_length })
}

/// `ln|y| = slope · ln x + intercept`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<ScalingFit> {
    check_fit_input(x, y)?;
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("log-log fit needs positive abscissae".into()));
    }
    let u: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let w: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&u, &w);
    Ok(ScalingFit { x: x.to_vec(), y: y.to_vec(), slope, intercept, r_squared, decay_length: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistancePoint {
    /// Separation in plaquettes, `d = m·a`.
    pub m: usize,
    pub result: TwoImpurityResult,
    /// `Re φ / γ_I` for the same pair without the array.
    pub q2_free: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceScan {
    pub spacing: f64,
    pub delta: f64,
    pub points: Vec<DistancePoint>,
    /// Leading run of separations with `|Q⁽²⁾| > 3 |Q⁽²⁾_free|`, in plaquettes.
    pub window: Vec<usize>,
    pub fit: Option<ScalingFit>,
    pub fit_error: Option<String>,
}

impl DistanceScan {
    /// Largest separation (in plaquettes) of the above-floor region, 0 if empty.
    pub fn window_end(&self) -> usize {
        self.window.last().copied().unwrap_or(0)
    }
}

/// `Q⁽²⁾` for pairs `m` plaquettes apart, reusing one factorization of `δ − M`.
pub fn distance_scan(
    config: &LatticeConfig,
    impurity: &ImpurityTemplate,
    delta: f64,
    m_list: &[usize],
) -> Result<DistanceScan> {
    let lattice_only = build_geometry(*config, &[])?;
    let matrix = assemble_lattice_matrix(&lattice_only)?;
    let resolvent = matrix.resolvent(delta)?;
    let mut points = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut pair = impurity_pair(config, m, impurity.gamma, impurity.configuration)?;
        if let Some([fx, fy]) = impurity.offset_fraction {
            for p in &mut pair {
                *p = p.with_offset(fx * config.spacing, fy * config.spacing);
            }
        }
        let geometry = build_geometry(*config, &pair)?;
        let v0 = impurity_vector(&geometry, 0)?;
        let v1 = impurity_vector(&geometry, 1)?;
        let result = pair_result(&resolvent, &geometry, [&v0, &v1])?;
        let q2_free = result.phi.re / impurity.gamma;
        points.push(DistancePoint { m, result, q2_free });
    }
    let mut sorted: Vec<&DistancePoint> = points.iter().collect();
    sorted.sort_by_key(|p| p.m);
    let window: Vec<usize> = sorted
        .iter()
        .take_while(|p| p.result.q2.abs() > FLOOR_FACTOR * p.q2_free.abs())
        .map(|p| p.m)
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = sorted
        .iter()
        .filter(|p| window.contains(&p.m))
        .map(|p| (p.result.separation, p.result.q2))
        .unzip();
    let (fit, fit_error) = match fit_semilog(&xs, &ys) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(DistanceScan { spacing: config.spacing, delta, points, window, fit, fit_error })
}

/// All separations `1..=m_max` that fit on the central row.
pub fn all_separations(config: &LatticeConfig) -> Vec<usize> {
    (1..=max_pair_separation(config)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingRow {
    pub a: f64,
    pub q2max_identical: f64,
    pub q2max_orthogonal: f64,
    pub q2_free: f64,
    pub delta_identical: f64,
    pub delta_orthogonal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingScan {
    pub rows: Vec<SpacingRow>,
    pub identical: Option<ScalingFit>,
    pub orthogonal: Option<ScalingFit>,
    pub free: Option<ScalingFit>,
}

/// `Q⁽²⁾(d = a)` for both configurations at their default detuning rules.
pub fn spacing_row(base: &LatticeConfig, gamma_i: f64, a: f64) -> Result<SpacingRow> {
    let config = base.with_spacing(a)?;
    let mut out = [(0.0, 0.0, 0.0); 2];
    for (slot, configuration) in [Configuration::Identical, Configuration::Orthogonal].into_iter().enumerate() {
        let template = ImpurityTemplate::centered(gamma_i, configuration);
        let delta = DetuningRule::default_for(configuration).resolve(&config, &template)?;
        let scan = distance_scan(&config, &template, delta, &[1])?;
        let p = &scan.points[0];
        out[slot] = (p.result.q2, p.q2_free, delta);
    }
    Ok(SpacingRow {
        a,
        q2max_identical: out[0].0,
        q2max_orthogonal: out[1].0,
        q2_free: out[0].1,
        delta_identical: out[0].2,
        delta_orthogonal: out[1].2,
    })
}

/// Log-log fits of the three series in `rows` against spacing.
pub fn spacing_fits(rows: &[SpacingRow]) -> [Result<ScalingFit>; 3] {
    let a: Vec<f64> = rows.iter().map(|r| r.a).collect();
    let series = |f: fn(&SpacingRow) -> f64| fit_loglog(&a, &rows.iter().map(f).collect::<Vec<_>>());
    [series(|r| r.q2max_identical), series(|r| r.q2max_orthogonal), series(|r| r.q2_free)]
}

/// [`spacing_row`] over `a_list` on `n × n` arrays, with the three log-log fits.
pub fn spacing_scan(base: &LatticeConfig, gamma_i: f64, a_list: &[f64]) -> Result<SpacingScan> {
    let rows: Vec<SpacingRow> = a_list.par_iter().map(|&a| spacing_row(base, gamma_i, a)).collect::<Result<_>>()?;
    let [identical, orthogonal, free] = spacing_fits(&rows);
    Ok(SpacingScan { identical: identical.ok(), orthogonal: orthogonal.ok(), free: free.ok(), rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachRow {
    pub a: f64,
    pub delta: f64,
    /// Largest separation in plaquettes with `|Q⁽²⁾| > threshold`, 0 if none.
    pub reach: usize,
    pub max_q2: f64,
}

pub fn reach_scan(
    base: &LatticeConfig,
    impurity: &ImpurityTemplate,
    rule: DetuningRule,
    a_list: &[f64],
    threshold: f64,
) -> Result<Vec<ReachRow>> {
    a_list.par_iter().map(|&a| reach_row(base, impurity, rule, a, threshold)).collect()
}

/// Reach at one spacing over every separation that fits the array.
pub fn reach_row(
    base: &LatticeConfig,
    impurity: &ImpurityTemplate,
    rule: DetuningRule,
    a: f64,
    threshold: f64,
) -> Result<ReachRow> {
    let config = base.with_spacing(a)?;
    let delta = rule.resolve(&config, impurity)?;
    let scan = distance_scan(&config, impurity, delta, &all_separations(&config))?;
    Ok(reach_of(&scan, threshold))
}

pub fn reach_of(scan: &DistanceScan, threshold: f64) -> ReachRow {
    let reach = scan.points.iter().filter(|p| p.result.q2.abs() > threshold).map(|p| p.m).max().unwrap_or(0);
    let max_q2 = scan.points.iter().map(|p| p.result.q2.abs()).fold(0.0, f64::max);
    ReachRow { a: scan.spacing, delta: scan.delta, reach, max_q2 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub a: f64,
    pub delta: f64,
    pub status: CellStatus,
    pub result: Option<TwoImpurityResult>,
    pub message: Option<String>,
}

/// `Q⁽²⁾` over `(a, δ)` for a pair `m` plaquettes apart, `a`-major order.
pub fn two_impurity_map(
    base: &LatticeConfig,
    impurity: &ImpurityTemplate,
    m: usize,
    a_grid: &[f64],
    delta_grid: &[f64],
) -> Result<Vec<HeatCell>> {
    let rows: Vec<Vec<HeatCell>> = a_grid
        .par_iter()
        .map(|&a| {
            let setup = || -> Result<(SystemGeometry, CouplingMatrix, [ImpurityCouplingVector; 2])> {
                let config = base.with_spacing(a)?;
                let mut pair = impurity_pair(&config, m, impurity.gamma, impurity.configuration)?;
                if let Some([fx, fy]) = impurity.offset_fraction {
                    for p in &mut pair {
                        *p = p.with_offset(fx * a, fy * a);
                    }
                }
                let geometry = build_geometry(config, &pair)?;
                let matrix = assemble_lattice_matrix(&geometry)?;
                let v = [impurity_vector(&geometry, 0)?, impurity_vector(&geometry, 1)?];
                Ok((geometry, matrix, v))
            };
            match setup() {
                Ok((geometry, matrix, v)) => delta_grid
                    .par_iter()
                    .map(|&delta| {
                        match matrix.resolvent(delta).and_then(|r| pair_result(&r, &geometry, [&v[0], &v[1]])) {
                            Ok(result) => HeatCell { a, delta, status: CellStatus::Ok, result: Some(result), message: None },
                            Err(e) => HeatCell {
                                a,
                                delta,
                                status: if e.is_pole() { CellStatus::Pole } else { CellStatus::Failed },
                                result: None,
                                message: Some(e.to_string()),
                            },
                        }
                    })
                    .collect(),
                Err(e) => delta_grid
                    .iter()
                    .map(|&delta| HeatCell { a, delta, status: CellStatus::Failed, result: None, message: Some(e.to_string()) })
                    .collect(),
            }
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImpuritySpec;
    use crate::green::{circular_dipole, Displacement, Handedness};

    fn pair_geometry(n: usize, a: f64, m: usize, configuration: Configuration) -> SystemGeometry {
        let c = LatticeConfig::square(a, n).unwrap();
        build_geometry(c, &impurity_pair(&c, m, 0.01, configuration).unwrap()).unwrap()
    }

    #[test]
    fn phi_matches_pair_coupling() {
        let g = pair_geometry(6, 0.1, 4, Configuration::Identical);
        let d = circular_dipole(Handedness::Right);
        let want = pair_coupling(Displacement::planar(0.4, 0.0), Displacement::ZERO, &d, &d, 0.01, 0.01).unwrap().0;
        let got = free_space_phi(&g, 0, 1).unwrap();
        assert!((got - want).norm() < 1e-15 * want.norm());
        assert_eq!(free_space_phi(&g, 1, 0).unwrap(), got);
    }

    #[test]
    fn decoupled_lattice_gives_phi() {
        let g = pair_geometry(4, 0.2, 1, Configuration::Identical);
        let m = assemble_lattice_matrix(&g).unwrap();
        let z = ImpurityCouplingVector::zeros(g.n_lattice());
        let phi = C64::new(0.3, -0.01);
        assert_eq!(effective_interaction(&m, &z, &z, 2.0, phi).unwrap(), phi);
    }

    #[test]
    fn swap_symmetry_and_equal_linewidths() {
        let c = LatticeConfig::square(0.2, 6).unwrap();
        let specs = [
            ImpuritySpec::centered((1, 2), 0.01, Configuration::Identical),
            ImpuritySpec::centered((3, 2), 0.01, Configuration::Identical),
        ];
        let g = build_geometry(c, &specs).unwrap();
        let m = assemble_lattice_matrix(&g).unwrap();
        let v0 = impurity_vector(&g, 0).unwrap();
        let v1 = impurity_vector(&g, 1).unwrap();
        let phi = free_space_phi(&g, 0, 1).unwrap();
        let a = effective_interaction(&m, &v0, &v1, 1.3, phi).unwrap();
        let b = effective_interaction(&m, &v1, &v0, 1.3, phi).unwrap();
        assert!((a - b).norm() < 1e-12 * a.norm());
        let r = two_impurity(&g, 1.3).unwrap();
        assert!((r.gamma_eff[0] - r.gamma_eff[1]).abs() < 1e-10);
    }

    #[test]
    fn q2_edge_cases() {
        assert_eq!(q2(C64::new(0.0, 0.0), 0.01).unwrap(), 0.0);
        assert!(matches!(q2(C64::new(1.0, 0.0), 0.0), Err(Error::NonPositiveLinewidth(_))));
        assert!((q2(C64::new(-2.0, 5.0), 0.5).unwrap() + 4.0).abs() < 1e-15);
    }

    #[test]
    fn fits() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * (-v / 0.7).exp()).collect();
        let f = fit_semilog(&x, &y).unwrap();
        assert!((f.decay_length.unwrap() - 0.7).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v: &f64| -2.0 * v.powi(-3)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope + 3.0).abs() < 1e-12);
        assert!(matches!(fit_loglog(&[0.1], &[1.0]), Err(Error::InsufficientPoints { .. })));
    }

    #[test]
    fn free_space_phi_scales_as_inverse_cube() {
        let d = circular_dipole(Handedness::Right);
        let o = Displacement::ZERO;
        let j = |r: f64| pair_coupling(Displacement::planar(r, 0.0), o, &d, &d, 0.01, 0.01).unwrap().j();
        let xs = [1e-3, 2e-3, 3e-3, 5e-3];
        let ys: Vec<f64> = xs.iter().map(|&r| j(r)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert!((f.slope + 3.0).abs() < 0.05, "{}", f.slope);
    }

    #[test]
    fn reach_threshold_above_max_is_zero() {
        let c = LatticeConfig::square(0.2, 8).unwrap();
        let t = ImpurityTemplate::centered(0.01, Configuration::Orthogonal);
        let scan = distance_scan(&c, &t, 1.5, &all_separations(&c)).unwrap();
        let r = reach_of(&scan, f64::INFINITY);
        assert_eq!(r.reach, 0);
        assert_eq!(scan.points.len(), 6);
    }
}
