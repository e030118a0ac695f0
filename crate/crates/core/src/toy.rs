//! Closed-form 2×2 plaquette with one impurity at its center.
//!
//! The four lattice atoms sit at `(±a/2, ±a/2)` around the impurity and are
//! numbered counterclockwise starting from `(−a/2, −a/2)`. Every expression
//! is written out term by term so it can serve as an oracle for the generic
//! pipeline; no algebra is shared with `markov`.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Configuration;
use crate::green::{circular_dipole, pair_coupling, Displacement, Handedness, GAMMA_L};
use crate::linalg::C64;

/// Counterclockwise toy index → row-major index of a `2 × 2` [`crate::SystemGeometry`].
pub const CCW_TO_ROW_MAJOR: [usize; 4] = [0, 1, 3, 2];

/// Dressed-state guard: `γ_I/2` must be this many times smaller than the
/// in-phase mode's complex detuning.
pub const DRESSED_GUARD: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyCouplings {
    pub a: f64,
    pub gamma_i: f64,
    pub configuration: Configuration,
    pub j1: f64,
    pub gamma1: f64,
    pub j2: f64,
    pub gamma2: f64,
    pub js: f64,
    pub gamma_s: f64,
}

pub fn toy_couplings(a: f64, gamma_i: f64, configuration: Configuration) -> Result<ToyCouplings> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidInput(format!("spacing must be positive, got {a}")));
    }
    let d_l = circular_dipole(Handedness::Right);
    let d_i = circular_dipole(configuration.handedness(Handedness::Right));
    let o = Displacement::ZERO;
    let r1 = Displacement::planar(a, 0.0);
    let r2 = Displacement::planar(a, a);
    let r3 = Displacement::planar(a / 2.0, a / 2.0);
    let k1 = pair_coupling(r1, o, &d_l, &d_l, GAMMA_L, GAMMA_L)?;
    let k2 = pair_coupling(r2, o, &d_l, &d_l, GAMMA_L, GAMMA_L)?;
    let ks = pair_coupling(r3, o, &d_i, &d_l, gamma_i, GAMMA_L)?;
    Ok(ToyCouplings {
        a,
        gamma_i,
        configuration,
        j1: k1.j(),
        gamma1: k1.gamma(),
        j2: k2.j(),
        gamma2: k2.gamma(),
        js: ks.j(),
        gamma_s: ks.gamma(),
    })
}

impl ToyCouplings {
    pub fn j_par(&self) -> f64 {
        2.0 * self.j1 + self.j2
    }

    pub fn gamma_par(&self) -> f64 {
        GAMMA_L + 2.0 * self.gamma1 + self.gamma2
    }

    pub fn j_perp(&self) -> f64 {
        -2.0 * self.j1 + self.j2
    }

    pub fn gamma_perp(&self) -> f64 {
        GAMMA_L - 2.0 * self.gamma1 + self.gamma2
    }

    pub fn j_tilde(&self) -> f64 {
        2.0 * self.js
    }

    pub fn gamma_tilde(&self) -> f64 {
        2.0 * self.gamma_s
    }

    /// `Γ_3 = Γ_s / √(γ_I/γ_L)`.
    pub fn gamma_3(&self) -> f64 {
        self.gamma_s / (self.gamma_i / GAMMA_L).sqrt()
    }

    /// Lattice mode eigenvalues (without detuning) for `v̂_∥, v̂_⊥, v̂_M1, v̂_M2`.
    pub fn eigenvalues(&self) -> [C64; 4] {
        let lam_m = C64::new(-self.j2, -0.5 * (GAMMA_L - self.gamma2));
        [
            C64::new(self.j_par(), -0.5 * self.gamma_par()),
            C64::new(self.j_perp(), -0.5 * self.gamma_perp()),
            lam_m,
            lam_m,
        ]
    }
}

/// `v̂_∥, v̂_⊥, v̂_M1, v̂_M2` in counterclockwise atom order.
pub fn toy_eigenvectors() -> [[f64; 4]; 4] {
    let s = FRAC_1_SQRT_2;
    [
        [0.5, 0.5, 0.5, 0.5],
        [0.5, -0.5, 0.5, -0.5],
        [s, 0.0, -s, 0.0],
        [0.0, s, 0.0, -s],
    ]
}

fn reject_pole(delta: f64, j: f64, gamma: f64) -> Result<()> {
    if (delta - j).abs() < 1e-6 && gamma.abs() < 1e-6 {
        return Err(Error::Pole { delta, nearest: C64::new(j, -0.5 * gamma) });
    }
    Ok(())
}

/// `Σ = (J̃_∥ − iΓ̃_∥/2)² / (δ − J_∥ + iΓ_∥/2)`.
pub fn toy_self_energy_identical(tc: &ToyCouplings, delta: f64) -> Result<C64> {
    reject_pole(delta, tc.j_par(), tc.gamma_par())?;
    let num = C64::new(tc.j_tilde(), -tc.gamma_tilde() / 2.0);
    let den = C64::new(delta - tc.j_par(), tc.gamma_par() / 2.0);
    Ok(num * num / den)
}

/// `Σ = −(J̃_⊥ − iΓ̃_⊥/2)² / (δ − J_⊥ + iΓ_⊥/2)`.
pub fn toy_self_energy_orthogonal(tc: &ToyCouplings, delta: f64) -> Result<C64> {
    reject_pole(delta, tc.j_perp(), tc.gamma_perp())?;
    let num = C64::new(tc.j_tilde(), -tc.gamma_tilde() / 2.0);
    let den = C64::new(delta - tc.j_perp(), tc.gamma_perp() / 2.0);
    Ok(-(num * num) / den)
}

/// Expanded imaginary part of the identical-configuration self-energy.
pub fn toy_im_self_energy_identical(tc: &ToyCouplings, delta: f64) -> f64 {
    let (jt, gt) = (tc.j_tilde(), tc.gamma_tilde());
    let (jp, gp) = (tc.j_par(), tc.gamma_par());
    -((jt * jt - gt * gt / 4.0) * gp / 2.0 + jt * gt * (delta - jp))
        / ((delta - jp) * (delta - jp) + gp * gp / 4.0)
}

/// `δ^D = J_∥ − J̃_∥ Γ_∥ / Γ̃_∥`.
pub fn toy_dark_detuning(tc: &ToyCouplings) -> Result<f64> {
    if tc.gamma_tilde() == 0.0 {
        return Err(Error::UndefinedDetuning);
    }
    Ok(tc.j_par() - tc.j_tilde() * tc.gamma_par() / tc.gamma_tilde())
}

/// `Γ^Op_Eff = γ_I − Γ̃_∥² / Γ_∥` at the dark detuning.
pub fn toy_optimized_linewidth(tc: &ToyCouplings) -> f64 {
    tc.gamma_i - tc.gamma_tilde() * tc.gamma_tilde() / tc.gamma_par()
}

/// `Re Σ = −J̃_∥ Γ̃_∥ / Γ_∥` at the dark detuning.
pub fn toy_optimized_shift(tc: &ToyCouplings) -> f64 {
    -tc.j_tilde() * tc.gamma_tilde() / tc.gamma_par()
}

/// In-phase drive amplitude `Ω_∥ = 4 × Ω_L/2`.
pub fn omega_par(omega_l: f64) -> f64 {
    4.0 * omega_l / 2.0
}

/// Out-of-phase drive amplitude `Ω_⊥ = 2 × Ω_L/2 − 2 × Ω_L/2` for normal incidence.
pub fn omega_perp(omega_l: f64) -> f64 {
    2.0 * omega_l / 2.0 - 2.0 * omega_l / 2.0
}

/// `Ω_Eff = (J̃_∥ + iΓ̃_∥/2) Ω_∥ / (δ − J_∥ − iΓ_∥/2) + Ω_I`.
pub fn toy_effective_rabi_identical(tc: &ToyCouplings, delta: f64, omega_l: f64, omega_i: f64) -> Result<C64> {
    reject_pole(delta, tc.j_par(), tc.gamma_par())?;
    let num = C64::new(tc.j_tilde(), tc.gamma_tilde() / 2.0) * omega_par(omega_l);
    let den = C64::new(delta - tc.j_par(), -tc.gamma_par() / 2.0);
    Ok(num / den + omega_i)
}

/// Orthogonal configuration: only the out-of-phase drive `Ω_⊥` reaches the impurity.
pub fn toy_effective_rabi_orthogonal(tc: &ToyCouplings, delta: f64, omega_l: f64, omega_i: f64) -> Result<C64> {
    reject_pole(delta, tc.j_perp(), tc.gamma_perp())?;
    let num = -C64::new(tc.j_tilde(), tc.gamma_tilde() / 2.0) * omega_perp(omega_l);
    let den = C64::new(delta - tc.j_perp(), -tc.gamma_perp() / 2.0);
    Ok(num / den + omega_i)
}

/// Small-spacing limits `(Γ^Op_Eff, Ω^Op_Eff)` at the dark detuning.
pub fn toy_small_a_limits(tc: &ToyCouplings, omega_i: f64) -> Result<(f64, f64)> {
    if tc.a >= 0.1 {
        return Err(Error::ApproximationInvalid(format!(
            "small-spacing limits need a < 0.1 λ, got {}",
            tc.a
        )));
    }
    let g3 = tc.gamma_3();
    let par = GAMMA_L + 2.0 * tc.gamma1 + tc.gamma2;
    let gamma = tc.gamma_i * (1.0 - 4.0 * g3 * g3 / (GAMMA_L * par));
    let omega = omega_i * (1.0 - 4.0 * g3 / par);
    Ok((gamma, omega))
}

/// Eigenpair of the impurity dressed by the in-phase lattice mode, with
/// amplitudes over (in-phase mode, impurity).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DressedState {
    pub eigenvalue: C64,
    pub vector: [C64; 2],
    pub alpha: f64,
}

/// Dark and radiant states of the identical configuration.
pub fn toy_dressed_states(tc: &ToyCouplings, delta: f64) -> Result<(DressedState, DressedState)> {
    let bare = C64::new(delta - tc.j_par(), tc.gamma_par() / 2.0);
    if DRESSED_GUARD * tc.gamma_i / 2.0 > bare.norm() {
        return Err(Error::ApproximationInvalid(format!(
            "γ_I/2 = {} is not small against |δ − J_∥ + iΓ_∥/2| = {}",
            tc.gamma_i / 2.0,
            bare.norm()
        )));
    }
    let sigma = toy_self_energy_identical(tc, delta)?;
    let delta_eff = -sigma.re;
    let gamma_eff = tc.gamma_i - 2.0 * sigma.im;
    let lam_d = C64::new(-delta_eff, -gamma_eff / 2.0);
    let lam_r = C64::new(
        -(delta - tc.j_par() + sigma.re),
        -(tc.gamma_par() + 2.0 * sigma.im) / 2.0,
    );
    let coupling = C64::new(tc.j_tilde(), -tc.gamma_tilde() / 2.0);
    let alpha = tc.gamma_tilde() / tc.gamma_par();
    Ok((
        DressedState { eigenvalue: lam_d, vector: [coupling, bare], alpha },
        DressedState { eigenvalue: lam_r, vector: [bare, -coupling], alpha },
    ))
}

/// Condition number (Frobenius) of the 2×2 change of basis to dressed states.
pub fn dressed_basis_condition(dark: &DressedState, radiant: &DressedState) -> f64 {
    let (a, b) = (dark.vector[0], radiant.vector[0]);
    let (c, d) = (dark.vector[1], radiant.vector[1]);
    let det = a * d - b * c;
    let fro = (a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr()).sqrt();
    fro * fro / det.norm()
}

/// Coherent coupling of the impurity to one of its four plaquette atoms over
/// that to a corner atom of a 4×4 array, impurity at the array center.
pub fn plaquette_dominance(a: f64, gamma_i: f64) -> Result<f64> {
    let d = circular_dipole(Handedness::Right);
    let o = Displacement::ZERO;
    let near = pair_coupling(Displacement::planar(a / 2.0, a / 2.0), o, &d, &d, gamma_i, GAMMA_L)?;
    let far = pair_coupling(Displacement::planar(1.5 * a, 1.5 * a), o, &d, &d, gamma_i, GAMMA_L)?;
    Ok(near.j().abs() / far.j().abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tc(a: f64) -> ToyCouplings {
        toy_couplings(a, 0.01, Configuration::Identical).unwrap()
    }

    #[test]
    fn trace_of_dissipation() {
        for a in [0.05, 0.2, 0.6] {
            let t = tc(a);
            let total = t.gamma_par() + t.gamma_perp() + 2.0 * (GAMMA_L - t.gamma2);
            assert!((total - 4.0 * GAMMA_L).abs() < 1e-12);
        }
    }

    #[test]
    fn near_field_limits() {
        let t = tc(1e-3);
        assert!((t.gamma1 - 1.0).abs() < 1e-4 && (t.gamma2 - 1.0).abs() < 1e-4);
        let ratio = tc(0.005).j1 / tc(0.01).j1;
        assert!((ratio / 8.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn dark_detuning_gives_optimized_values() {
        let t = tc(0.2);
        let d = toy_dark_detuning(&t).unwrap();
        let s = toy_self_energy_identical(&t, d).unwrap();
        assert!((t.gamma_i - 2.0 * s.im - toy_optimized_linewidth(&t)).abs() < 1e-12);
        assert!((s.re - toy_optimized_shift(&t)).abs() < 1e-12 * s.re.abs().max(1.0));
    }

    #[test]
    fn expanded_imaginary_part() {
        let t = tc(0.15);
        for delta in [-4.0, 0.3, 2.0, 11.0] {
            let s = toy_self_energy_identical(&t, delta).unwrap();
            assert!((s.im - toy_im_self_energy_identical(&t, delta)).abs() < 1e-14);
        }
    }

    #[test]
    fn far_detuning_decouples() {
        let t = tc(0.2);
        assert!(toy_self_energy_identical(&t, 1e9).unwrap().norm() < 1e-10);
    }

    #[test]
    fn small_spacing_limits() {
        let t = tc(0.01);
        let (g, o) = toy_small_a_limits(&t, 0.001).unwrap();
        assert!(g.abs() < 0.01 * t.gamma_i);
        assert!(o.abs() < 0.01 * 0.001);
        assert!(toy_small_a_limits(&tc(0.2), 0.001).is_err());
    }

    #[test]
    fn dressed_states_at_dark_point() {
        let t = tc(0.1);
        let d = toy_dark_detuning(&t).unwrap();
        let (dark, radiant) = toy_dressed_states(&t, d).unwrap();
        // v̂_D ∝ (−α, 1)
        let r = dark.vector[0] / dark.vector[1];
        assert!((r + dark.alpha).norm() < 1e-12);
        assert!(dressed_basis_condition(&dark, &radiant) < 1e6);
        let ge = toy_optimized_linewidth(&t);
        assert!((dark.eigenvalue.im + ge / 2.0).abs() < 1e-12);
        // net drive Ω_I − Ω_∥ α equals the effective Rabi frequency at δ^D
        let (ol, oi) = (0.01, 0.001);
        let om = toy_effective_rabi_identical(&t, d, ol, oi).unwrap();
        assert!((om - C64::new(oi - omega_par(ol) * dark.alpha, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn alpha_limit() {
        let t = tc(1e-3);
        let alpha = t.gamma_tilde() / t.gamma_par();
        assert!((alpha / (0.5 * 0.1) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn dressed_guard() {
        let t = toy_couplings(0.2, 0.01, Configuration::Identical).unwrap();
        let close = t.j_par() + 1e-4;
        let t_wide = ToyCouplings { gamma1: -0.5 * (1.0 + t.gamma2) + 1e-9, ..t };
        assert!(toy_dressed_states(&t_wide, close).is_err());
    }

    #[test]
    fn plaquette_dominance_approaches_27() {
        let ratios: Vec<f64> = [0.05, 0.02, 0.01, 0.001]
            .iter()
            .map(|&a| plaquette_dominance(a, 0.01).unwrap())
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] > w[0]));
        assert!((ratios[1] / 27.0 - 1.0).abs() < 0.2);
        assert!((ratios[3] / 27.0 - 1.0).abs() < 1e-3);
        // the corner atom at a = 0.05 sits at ω r ≈ 0.67, outside the 1/r³ regime
        assert!((ratios[0] - 18.717).abs() < 1e-3);
    }
}
