//! Exact single-excitation evolution of lattice plus impurities, and the
//! transfer metrics read off it.
//!
//! Sites are ordered lattice first, impurities after. The frame rotates at the
//! impurity frequency, so lattice sites carry `−δ` on the diagonal.

use ndarray::{s, Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{assemble_lattice_matrix, impurity_vector};
use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::green::pair_coupling;
use crate::linalg::{DenseOperator, C64};
use crate::two_impurity::{two_impurity, TwoImpurityResult};

/// Eigenbasis condition number above which evolution switches to integration.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Relative tolerance of the adaptive integrator.
pub const ADAPTIVE_RTOL: f64 = 1e-10;
/// Samples per transfer half-period in the default time grid.
pub const SAMPLES_PER_HALF_PERIOD: usize = 32;
/// Hard cap on default time-grid length.
pub const MAX_SAMPLES: usize = 200_000;
/// Minimum default time-grid length.
pub const MIN_SAMPLES: usize = 2000;

#[derive(Clone, Debug)]
pub struct FullHamiltonian {
    op: DenseOperator,
    pub n_lattice: usize,
    pub n_impurities: usize,
}

impl FullHamiltonian {
    pub fn from_matrix(matrix: Array2<C64>, n_lattice: usize) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c || n_lattice > r {
            return Err(Error::InvalidInput(format!("{r}x{c} Hamiltonian with {n_lattice} lattice sites")));
        }
        Ok(Self { op: DenseOperator::new(matrix), n_lattice, n_impurities: r - n_lattice })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        self.op.matrix()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Row index of impurity `k`.
    pub fn impurity_site(&self, k: usize) -> usize {
        self.n_lattice + k
    }

    pub fn operator(&self) -> &DenseOperator {
        &self.op
    }
}

fn impurity_block(geometry: &SystemGeometry, h: &mut Array2<C64>, offset: usize) -> Result<()> {
    let imps = &geometry.impurities;
    for (s, a) in imps.iter().enumerate() {
        h[[offset + s, offset + s]] = C64::new(0.0, -0.5 * a.spec.gamma);
        for (q, b) in imps.iter().enumerate().skip(s + 1) {
            h[[offset + s, offset + q]] =
                pair_coupling(a.position, b.position, &a.dipole(), &b.dipole(), a.spec.gamma, b.spec.gamma)?.0;
            h[[offset + q, offset + s]] =
                pair_coupling(b.position, a.position, &b.dipole(), &a.dipole(), b.spec.gamma, a.spec.gamma)?.0;
        }
    }
    Ok(())
}

pub fn build_full_hamiltonian(geometry: &SystemGeometry, delta: f64) -> Result<FullHamiltonian> {
    let n = geometry.n_lattice();
    let k = geometry.n_impurities();
    let mut h = Array2::zeros((n + k, n + k));
    let m = assemble_lattice_matrix(geometry)?;
    h.slice_mut(s![..n, ..n]).assign(m.matrix());
    for p in 0..n {
        h[[p, p]] -= C64::new(delta, 0.0);
    }
    for s in 0..k {
        let v = impurity_vector(geometry, s)?;
        h.slice_mut(s![..n, n + s]).assign(&v.to_lattice);
        h.slice_mut(s![n + s, ..n]).assign(&v.from_lattice);
    }
    impurity_block(geometry, &mut h, n)?;
    FullHamiltonian::from_matrix(h, n)
}

/// Impurities coupled only through free space.
pub fn build_impurity_hamiltonian(geometry: &SystemGeometry) -> Result<FullHamiltonian> {
    let k = geometry.n_impurities();
    let mut h = Array2::zeros((k, k));
    impurity_block(geometry, &mut h, 0)?;
    FullHamiltonian::from_matrix(h, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    Spectral,
    Adaptive,
}

/// Amplitudes of selected sites on a time grid, plus the total population of
/// the whole system at each time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub sites: Vec<usize>,
    /// `amplitudes[[t, k]]` belongs to `sites[k]`.
    pub amplitudes: Array2<C64>,
    pub total_population: Vec<f64>,
    pub method: Propagation,
}

impl TimeSeries {
    pub fn column(&self, site: usize) -> Result<usize> {
        self.sites
            .iter()
            .position(|&s| s == site)
            .ok_or_else(|| Error::InvalidInput(format!("site {site} was not recorded")))
    }

    pub fn population(&self, site: usize) -> Result<Vec<f64>> {
        let c = self.column(site)?;
        Ok(self.amplitudes.column(c).iter().map(|z| z.norm_sqr()).collect())
    }
}

fn check_inputs(h: &FullHamiltonian, initial: &Array1<C64>, times: &[f64], sites: &[usize]) -> Result<()> {
    if initial.len() != h.dim() {
        return Err(Error::InvalidInput(format!("initial state has {} entries, system has {}", initial.len(), h.dim())));
    }
    let norm: f64 = initial.iter().map(|z| z.norm_sqr()).sum();
    if norm > 1.0 + 1e-12 {
        return Err(Error::InvalidInput(format!("initial population {norm} exceeds 1")));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("time grid must be finite, non-negative and sorted".into()));
    }
    if let Some(&s) = sites.iter().find(|&&s| s >= h.dim()) {
        return Err(Error::InvalidInput(format!("site {s} out of range")));
    }
    Ok(())
}

/// `c(t) = exp(−iHt) c(0)` recording every site.
pub fn evolve(h: &FullHamiltonian, initial: &Array1<C64>, times: &[f64]) -> Result<TimeSeries> {
    let sites: Vec<usize> = (0..h.dim()).collect();
    evolve_sites(h, initial, times, &sites)
}

/// Evolution recording only `sites`; picks the eigenbasis when it is well
/// conditioned and adaptive integration otherwise.
pub fn evolve_sites(h: &FullHamiltonian, initial: &Array1<C64>, times: &[f64], sites: &[usize]) -> Result<TimeSeries> {
    check_inputs(h, initial, times, sites)?;
    match h.operator().modes() {
        Ok(modes) if modes.condition() <= CONDITION_LIMIT => evolve_spectral(h, initial, times, sites),
        Ok(modes) => {
            log::warn!("eigenbasis condition {:.3e}; falling back to adaptive integration", modes.condition());
            evolve_adaptive(h, initial, times, sites)
        }
        Err(e) => {
            log::warn!("eigendecomposition failed ({e}); falling back to adaptive integration");
            evolve_adaptive(h, initial, times, sites)
        }
    }
}

const CHUNK: usize = 2048;

pub fn evolve_spectral(h: &FullHamiltonian, initial: &Array1<C64>, times: &[f64], sites: &[usize]) -> Result<TimeSeries> {
    check_inputs(h, initial, times, sites)?;
    let modes = h.operator().modes()?;
    let b = modes.inverse.dot(initial);
    let v = &modes.vectors;
    let lam = &modes.eigenvalues;
    let n = h.dim();
    let chunks: Vec<(Array2<C64>, Vec<f64>)> = times
        .par_chunks(CHUNK)
        .map(|ts| {
            let e = Array2::from_shape_fn((n, ts.len()), |(k, t)| b[k] * (C64::new(0.0, -ts[t]) * lam[k]).exp());
            let mut c = v.dot(&e);
            for (t, &time) in ts.iter().enumerate() {
                if time == 0.0 {
                    c.column_mut(t).assign(initial);
                }
            }
            let total = c.axis_iter(Axis(1)).map(|col| col.iter().map(|z| z.norm_sqr()).sum()).collect();
            let picked = Array2::from_shape_fn((ts.len(), sites.len()), |(t, k)| c[[sites[k], t]]);
            (picked, total)
        })
        .collect();
    let mut amplitudes = Array2::zeros((times.len(), sites.len()));
    let mut total_population = Vec::with_capacity(times.len());
    let mut row = 0;
    for (a, t) in chunks {
        amplitudes.slice_mut(s![row..row + a.nrows(), ..]).assign(&a);
        row += a.nrows();
        total_population.extend(t);
    }
    Ok(TimeSeries { times: times.to_vec(), sites: sites.to_vec(), amplitudes, total_population, method: Propagation::Spectral })
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince integration of `ċ = −iHc`, stepping exactly onto every grid time.
pub fn evolve_adaptive(h: &FullHamiltonian, initial: &Array1<C64>, times: &[f64], sites: &[usize]) -> Result<TimeSeries> {
    check_inputs(h, initial, times, sites)?;
    let gen = h.matrix().mapv(|z| z * C64::new(0.0, -1.0));
    let rhs = |c: &Array1<C64>| gen.dot(c);
    let atol = 1e-14;
    let mut c = initial.clone();
    let mut t = 0.0;
    let scale = h.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut step = 0.1 / scale;
    let mut amplitudes = Array2::zeros((times.len(), sites.len()));
    let mut total_population = Vec::with_capacity(times.len());
    let mut k1 = rhs(&c);
    for (row, &target) in times.iter().enumerate() {
        while t < target {
            let hstep = step.min(target - t);
            let mut k: Vec<Array1<C64>> = vec![k1.clone()];
            for stage in 1..7 {
                let mut y = c.clone();
                for (j, kj) in k.iter().enumerate() {
                    if A[stage][j] != 0.0 {
                        y.scaled_add(C64::new(hstep * A[stage][j], 0.0), kj);
                    }
                }
                k.push(rhs(&y));
            }
            let mut y5 = c.clone();
            let mut err = Array1::<C64>::zeros(c.len());
            for j in 0..6 {
                if A[6][j] != 0.0 {
                    y5.scaled_add(C64::new(hstep * A[6][j], 0.0), &k[j]);
                }
            }
            for j in 0..7 {
                if E[j] != 0.0 {
                    err.scaled_add(C64::new(hstep * E[j], 0.0), &k[j]);
                }
            }
            let ratio = err
                .iter()
                .zip(c.iter().zip(y5.iter()))
                .map(|(e, (a, b))| {
                    let sc = atol + ADAPTIVE_RTOL * a.norm().max(b.norm());
                    (e.norm() / sc).powi(2)
                })
                .sum::<f64>()
                / c.len() as f64;
            let ratio = ratio.sqrt();
            if ratio <= 1.0 {
                t += hstep;
                c = y5;
                k1 = k.pop().expect("seven stages");
                if t > target - 1e-15 * target.max(1.0) {
                    t = target;
                }
            }
            let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
            // a step clipped to hit the grid says nothing about the natural step size
            if ratio > 1.0 || hstep >= step {
                step = hstep * factor;
            }
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        for (k, &s) in sites.iter().enumerate() {
            amplitudes[[row, k]] = c[s];
        }
        total_population.push(c.iter().map(|z| z.norm_sqr()).sum());
    }
    Ok(TimeSeries { times: times.to_vec(), sites: sites.to_vec(), amplitudes, total_population, method: Propagation::Adaptive })
}

/// Whatever [`transfer_metrics`] could extract before giving up.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialMetrics {
    pub n_maxima: usize,
    pub peak_times: Vec<f64>,
    pub frequency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMetrics {
    /// `π / ⟨peak spacing⟩` of the receiving impurity's population.
    pub frequency: f64,
    /// Exponential decay rate of the total impurity population envelope.
    pub decay: f64,
    /// `frequency / decay`.
    pub q_empirical: f64,
    pub peak_times: Vec<f64>,
}

/// Maxima separated by dips below half the smaller neighbouring peak, with
/// quadratic interpolation through the bracketing samples.
pub fn find_peaks(times: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let mut accepted: Vec<(usize, f64, f64)> = Vec::new();
    let mut dip = f64::INFINITY;
    for i in 1..y.len().saturating_sub(1) {
        dip = dip.min(y[i]);
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let (t, v) = interpolate(times, y, i);
        match accepted.last_mut() {
            Some(last) if dip >= 0.5 * last.2.min(v) => {
                if v > last.2 {
                    *last = (i, t, v);
                    dip = y[i];
                }
            }
            _ => {
                accepted.push((i, t, v));
                dip = y[i];
            }
        }
    }
    accepted.into_iter().map(|(_, t, v)| (t, v)).collect()
}

fn interpolate(t: &[f64], y: &[f64], i: usize) -> (f64, f64) {
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let dt = 0.5 * (t[i + 1] - t[i - 1]);
    if denom.abs() < 1e-300 || (t[i + 1] - t[i] - (t[i] - t[i - 1])).abs() > 1e-9 * dt {
        return (t[i], y1);
    }
    let x = 0.5 * (y0 - y2) / denom;
    (t[i] + x * dt, y1 - 0.25 * (y0 - y2) * x)
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Transfer frequency, decay rate and empirical Q from the populations of the
/// sending (`source`) and receiving (`target`) impurity sites.
pub fn transfer_metrics(ts: &TimeSeries, source: usize, target: usize) -> Result<TransferMetrics> {
    let p_t = ts.population(target)?;
    let p_s = ts.population(source)?;
    let peaks = find_peaks(&ts.times, &p_t);
    let peak_times: Vec<f64> = peaks.iter().map(|p| p.0).collect();
    let frequency = (peaks.len() >= 2)
        .then(|| std::f64::consts::PI * (peaks.len() - 1) as f64 / (peak_times[peaks.len() - 1] - peak_times[0]));
    if peaks.len() < 3 {
        return Err(Error::MetricsUnavailable {
            reason: format!("{} population maxima on the receiving impurity, need 3", peaks.len()),
            partial: Box::new(PartialMetrics { n_maxima: peaks.len(), peak_times, frequency }),
        });
    }
    let frequency = frequency.expect("at least two peaks");
    // envelope: the largest total impurity population between consecutive receiver peaks
    let total: Vec<f64> = p_t.iter().zip(&p_s).map(|(a, b)| a + b).collect();
    let mut env_t = Vec::new();
    let mut env_y = Vec::new();
    let bounds: Vec<usize> = peak_times
        .iter()
        .map(|&pt| ts.times.partition_point(|&t| t < pt))
        .collect();
    for w in bounds.windows(2) {
        if let Some((i, &v)) = (w[0]..w[1]).map(|i| (i, &total[i])).max_by(|a, b| a.1.total_cmp(b.1)) {
            if v > 0.0 {
                env_t.push(ts.times[i]);
                env_y.push(v.ln());
            }
        }
    }
    if env_t.len() < 2 {
        return Err(Error::MetricsUnavailable {
            reason: "envelope has fewer than two points".into(),
            partial: Box::new(PartialMetrics { n_maxima: peaks.len(), peak_times, frequency: Some(frequency) }),
        });
    }
    let decay = -slope(&env_t, &env_y);
    Ok(TransferMetrics { frequency, decay, q_empirical: frequency / decay, peak_times })
}

/// Squared magnitude of the discrete Fourier transform of a site's population
/// (mean removed) at the given angular frequencies.
pub fn power_spectrum(ts: &TimeSeries, site: usize, omegas: &[f64]) -> Result<Vec<f64>> {
    let p = ts.population(site)?;
    let mean = p.iter().sum::<f64>() / p.len().max(1) as f64;
    Ok(omegas
        .par_iter()
        .map(|&w| {
            let z: C64 = ts.times.iter().zip(&p).map(|(&t, &y)| (y - mean) * C64::new(0.0, -w * t).exp()).sum();
            z.norm_sqr()
        })
        .collect())
}

/// Uniform grid resolving the predicted transfer oscillation: 32 samples per
/// half-period up to `10/Γ_Eff`, at least 2000 and at most 200 000 samples.
pub fn default_time_grid(gamma_eff: f64, phi_re: f64) -> Result<Vec<f64>> {
    if !(gamma_eff > 0.0) {
        return Err(Error::NonPositiveLinewidth(gamma_eff));
    }
    let t_max = 10.0 / gamma_eff;
    let n = if phi_re.abs() > 0.0 {
        let dt = std::f64::consts::PI / phi_re.abs() / SAMPLES_PER_HALF_PERIOD as f64;
        ((t_max / dt).ceil() as usize + 1).clamp(MIN_SAMPLES, MAX_SAMPLES)
    } else {
        MIN_SAMPLES
    };
    let dt = if phi_re.abs() > 0.0 {
        (std::f64::consts::PI / phi_re.abs() / SAMPLES_PER_HALF_PERIOD as f64).min(t_max / (n - 1) as f64)
    } else {
        t_max / (n - 1) as f64
    };
    Ok((0..n).map(|i| i as f64 * dt).collect())
}

#[derive(Debug)]
pub struct TransferRun {
    pub predicted: TwoImpurityResult,
    pub series: TimeSeries,
    pub metrics: Result<TransferMetrics>,
}

/// Excites impurity 0 of a two-impurity geometry and evolves the full system.
/// Without an explicit grid, uses [`default_time_grid`] and doubles its length
/// (up to the sample cap) while fewer than three maxima are found.
pub fn transfer_run(geometry: &SystemGeometry, delta: f64, times: Option<Vec<f64>>) -> Result<TransferRun> {
    let predicted = two_impurity(geometry, delta)?;
    let h = build_full_hamiltonian(geometry, delta)?;
    let (s, q) = (h.impurity_site(0), h.impurity_site(1));
    let mut initial = Array1::zeros(h.dim());
    initial[s] = C64::new(1.0, 0.0);
    let explicit = times.is_some();
    let mut grid = match times {
        Some(t) => t,
        None => default_time_grid(predicted.mean_gamma_eff(), predicted.phi_eff.re)?,
    };
    loop {
        let series = evolve_sites(&h, &initial, &grid, &[s, q])?;
        let metrics = transfer_metrics(&series, s, q);
        let short = matches!(&metrics, Err(Error::MetricsUnavailable { .. }));
        if explicit || !short || grid.len() >= MAX_SAMPLES {
            return Ok(TransferRun { predicted, series, metrics });
        }
        let dt = grid[1] - grid[0];
        let n = (2 * grid.len()).min(MAX_SAMPLES);
        grid = (0..n).map(|i| i as f64 * dt).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, impurity_pair, Configuration, ImpuritySpec, LatticeConfig};

    fn free_pair(separation_plaquettes: usize) -> SystemGeometry {
        let c = LatticeConfig::square(0.01, 10).unwrap();
        build_geometry(c, &impurity_pair(&c, separation_plaquettes, 0.01, Configuration::Identical).unwrap()).unwrap()
    }

    #[test]
    fn single_free_atom_decays_exponentially() {
        let c = LatticeConfig::square(0.2, 2).unwrap();
        let g = build_geometry(c, &[ImpuritySpec::centered((0, 0), 0.01, Configuration::Identical)]).unwrap();
        let h = build_impurity_hamiltonian(&g).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.matrix()[[0, 0]], C64::new(0.0, -0.005));
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 10.0).collect();
        let ts = evolve(&h, &Array1::from(vec![C64::new(1.0, 0.0)]), &times).unwrap();
        for (t, p) in times.iter().zip(ts.population(0).unwrap()) {
            assert!((p - (-0.01 * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn free_pair_beats_at_re_phi() {
        let g = free_pair(1);
        let h = build_impurity_hamiltonian(&g).unwrap();
        let phi = h.matrix()[[0, 1]];
        assert_eq!(h.matrix()[[1, 0]], phi);
        let grid = default_time_grid(0.01, phi.re).unwrap();
        let ts = evolve(&h, &Array1::from(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]), &grid).unwrap();
        let m = transfer_metrics(&ts, 0, 1).unwrap();
        assert!((m.frequency - phi.re.abs()).abs() < 1e-6 * phi.re.abs(), "{} vs {}", m.frequency, phi.re);
    }

    #[test]
    fn spectral_and_adaptive_agree() {
        let c = LatticeConfig::square(0.2, 4).unwrap();
        let specs = impurity_pair(&c, 1, 0.01, Configuration::Orthogonal).unwrap();
        let g = build_geometry(c, &specs).unwrap();
        let h = build_full_hamiltonian(&g, 1.2).unwrap();
        let mut c0 = Array1::zeros(h.dim());
        c0[h.impurity_site(0)] = C64::new(1.0, 0.0);
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let sites: Vec<usize> = (0..h.dim()).collect();
        let a = evolve_spectral(&h, &c0, &times, &sites).unwrap();
        let b = evolve_adaptive(&h, &c0, &times, &sites).unwrap();
        let worst = a
            .amplitudes
            .iter()
            .zip(b.amplitudes.iter())
            .map(|(x, y)| (x.norm_sqr() - y.norm_sqr()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-7, "{worst}");
        assert_eq!(b.method, Propagation::Adaptive);
    }

    #[test]
    fn initial_population_is_exact_and_bounded() {
        let h = build_impurity_hamiltonian(&free_pair(2)).unwrap();
        let c0 = Array1::from(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        assert!(evolve(&h, &(c0.clone() * C64::new(2.0, 0.0)), &[0.0]).is_err());
        let ts = evolve(&h, &c0, &[0.0, 1.0]).unwrap();
        assert_eq!(ts.amplitudes[[0, 0]], c0[0]);
        assert_eq!(ts.amplitudes[[0, 1]], c0[1]);
    }

    #[test]
    fn pure_decay_has_no_metrics() {
        let times: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let amplitudes = Array2::from_shape_fn((200, 2), |(t, k)| {
            C64::new(if k == 0 { (-0.005 * t as f64).exp() } else { 0.0 }, 0.0)
        });
        let ts = TimeSeries {
            total_population: amplitudes.column(0).iter().map(|z| z.norm_sqr()).collect(),
            times,
            sites: vec![0, 1],
            amplitudes,
            method: Propagation::Spectral,
        };
        match transfer_metrics(&ts, 0, 1) {
            Err(Error::MetricsUnavailable { partial, .. }) => assert_eq!(partial.n_maxima, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn peak_interpolation_is_sub_grid() {
        let t: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|x| (1.3 * x).sin().powi(2)).collect();
        let p = find_peaks(&t, &y);
        let want = std::f64::consts::FRAC_PI_2 / 1.3;
        assert!((p[0].0 - want).abs() < 1e-3, "{}", p[0].0);
    }
}
