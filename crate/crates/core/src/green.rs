//! Free-space dyadic Green's tensor and pairwise dipole-dipole couplings.
//!
//! Units: the lattice transition wavelength is 1, so `ω_L = 2π` (with c = 1)
//! and every rate is measured in units of the lattice linewidth `γ_L = 1`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice transition frequency in units where λ = c = 1.
pub const OMEGA_L: f64 = 2.0 * PI;
/// Lattice atom linewidth; all rates are expressed relative to it.
pub const GAMMA_L: f64 = 1.0;

#[cfg(test)]
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// A position or displacement in units of λ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Displacement {
    pub const ZERO: Displacement = Displacement { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// In-plane vector `(x, y, 0)`.
    pub const fn planar(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Displacement {
    type Output = Displacement;
    fn add(self, o: Displacement) -> Displacement {
        Displacement::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Displacement {
    type Output = Displacement;
    fn sub(self, o: Displacement) -> Displacement {
        Displacement::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Displacement {
    type Output = Displacement;
    fn neg(self) -> Displacement {
        Displacement::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Displacement {
    type Output = Displacement;
    fn mul(self, s: f64) -> Displacement {
        Displacement::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Circular polarization handedness in the array plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    Left,
}

impl Handedness {
    pub fn opposite(self) -> Self {
        match self {
            Handedness::Right => Handedness::Left,
            Handedness::Left => Handedness::Right,
        }
    }
}

/// Unit-norm complex transition dipole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipolePolarization([Complex64; 3]);

impl DipolePolarization {
    /// Normalizes `v` under the conjugate inner product.
    pub fn new(v: [Complex64; 3]) -> Result<Self> {
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput("dipole vector must be finite and non-zero".into()));
        }
        Ok(Self([v[0] / n, v[1] / n, v[2] / n]))
    }

    /// `(x̂ ± iŷ)/√2`, plus sign for right-handed.
    pub fn circular(handedness: Handedness) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let y = match handedness {
            Handedness::Right => Complex64::new(0.0, s),
            Handedness::Left => Complex64::new(0.0, -s),
        };
        Self([Complex64::new(s, 0.0), y, Complex64::new(0.0, 0.0)])
    }

    pub fn components(&self) -> &[Complex64; 3] {
        &self.0
    }

    /// Conjugate inner product `⟨self, other⟩ = Σ conj(self_i) other_i`.
    pub fn inner(&self, other: &DipolePolarization) -> Complex64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }
}

pub fn circular_dipole(handedness: Handedness) -> DipolePolarization {
    DipolePolarization::circular(handedness)
}

/// The 3×3 Green's tensor evaluated at `ω_L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenTensor(pub [[Complex64; 3]; 3]);

impl GreenTensor {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[i][j]
    }

    pub fn transpose(&self) -> GreenTensor {
        let mut t = self.0;
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[j][i];
            }
        }
        GreenTensor(t)
    }

    /// `d_leftᴴ · G · d_right`.
    pub fn project(&self, left: &DipolePolarization, right: &DipolePolarization) -> Complex64 {
        let (l, r) = (left.components(), right.components());
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..3 {
                row += self.0[i][j] * r[j];
            }
            acc += l[i].conj() * row;
        }
        acc
    }
}

// Radial factors of the tensor, e^{ix}(1 + i/x − 1/x²) and e^{ix}(1 + 3i/x − 3/x²).
// For small x the imaginary parts suffer cancellation between O(1/x) terms,
// so a short Taylor series is used there instead.
fn radial_factors(x: f64) -> (Complex64, Complex64) {
    let (s, c) = x.sin_cos();
    let x2 = x * x;
    let re_a = c - s / x - c / x2;
    let re_b = c - 3.0 * s / x - 3.0 * c / x2;
    let (im_a, im_b) = if x < 1e-2 {
        let x3 = x2 * x;
        let x5 = x3 * x2;
        (
            2.0 * x / 3.0 - 2.0 * x3 / 15.0 + x5 / 140.0,
            -x3 / 15.0 + x5 / 210.0,
        )
    } else {
        (s + c / x - s / x2, s + 3.0 * c / x - 3.0 * s / x2)
    };
    (Complex64::new(re_a, im_a), Complex64::new(re_b, im_b))
}

/// Free-space Green's tensor at `ω_L` for displacement `r` (contact term dropped).
pub fn green_tensor(r: Displacement) -> Result<GreenTensor> {
    if !r.is_finite() {
        return Err(Error::NonFinite);
    }
    let d = r.norm();
    if d == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    let (a, b) = radial_factors(OMEGA_L * d);
    let pref = 1.0 / (4.0 * PI * d);
    let rh = [r.x / d, r.y / d, r.z / d];
    let mut g = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { a } else { Complex64::new(0.0, 0.0) };
            g[i][j] = (delta - b * (rh[i] * rh[j])) * pref;
        }
    }
    Ok(GreenTensor(g))
}

/// Complex coupling `J − iΓ/2` between two emitters, in units of γ_L.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling(pub Complex64);

impl PairCoupling {
    /// Coherent exchange rate J.
    pub fn j(&self) -> f64 {
        self.0.re
    }

    /// Dissipative rate Γ.
    pub fn gamma(&self) -> f64 {
        -2.0 * self.0.im
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }
}

/// `J − iΓ/2 = −(3π√(γ_i γ_j)/ω_L) d_iᴴ G(r_i − r_j) d_j`.
pub fn pair_coupling(
    r_i: Displacement,
    r_j: Displacement,
    d_i: &DipolePolarization,
    d_j: &DipolePolarization,
    gamma_i: f64,
    gamma_j: f64,
) -> Result<PairCoupling> {
    if !(gamma_i >= 0.0 && gamma_j >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "linewidths must be non-negative, got {gamma_i} and {gamma_j}"
        )));
    }
    let g = green_tensor(r_i - r_j)?;
    let pref = -3.0 * PI * (gamma_i * gamma_j).sqrt() / OMEGA_L;
    Ok(PairCoupling(g.project(d_i, d_j) * pref))
}

/// Near-field coherent coupling of identical in-plane circular dipoles, `−3γ/(8(ω r)³)`.
pub fn near_field_j(r: f64) -> f64 {
    let x = OMEGA_L * r;
    -3.0 / (8.0 * x * x * x)
}
