//! Velocity maps, their Jacobians, support parameters, and the Lorentz force.
//!
//! Units have c = 1. The relativistic velocity map v(p) = p/√(m²+|p|²) and
//! its inverse, the Jacobian matrix 𝔸 = ∇ₚv with inverse 𝔹 and determinant
//! density 𝒟 = 1/|det 𝔸|, are the exact kinematic substrate for the particle
//! pusher, the limiting densities, and the scattering labels. The classical
//! model replaces v(p) by p/m, under which 𝔸 and 𝒟 become constant.

use crate::error::{Error, Result};
use crate::linal::{self, Mat3};

/// Alias used in public signatures.
pub type Matrix3 = Mat3;

/// Kinematic model selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Relativistic,
    Classical,
}

/// Physical description of one particle species.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpeciesSpec {
    /// Rest mass m > 0.
    pub mass: f64,
    /// Signed charge e.
    pub charge: f64,
    pub model: Model,
    /// Radius of initial spatial support.
    pub support_x: f64,
    /// Radius of initial momentum support.
    pub support_p: f64,
}

/// Support-derived geometry: velocity bound ζ and cone parameter γ.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SupportParams {
    pub beta: f64,
    pub zeta: f64,
    pub gamma: f64,
}

impl SpeciesSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Config(format!("species mass must be > 0, got {}", self.mass)));
        }
        if !(self.support_x > 0.0 && self.support_p > 0.0) {
            return Err(Error::Config("species support radii must be > 0".into()));
        }
        if self.model == Model::Classical && self.support_p >= 1.0 {
            return Err(Error::Config(format!(
                "classical model requires support_p < 1 (c = 1), got {}",
                self.support_p
            )));
        }
        Ok(())
    }
}

/// Particle energy p₀ = √(m² + |p|²).
#[inline]
pub fn energy(p: [f64; 3], mass: f64) -> f64 {
    (mass * mass + linal::norm_sq(p)).sqrt()
}

/// v(p): relativistic p/√(m²+|p|²), classical p/m.
#[inline]
pub fn velocity(p: [f64; 3], s: &SpeciesSpec) -> [f64; 3] {
    match s.model {
        Model::Relativistic => linal::scale(1.0 / energy(p, s.mass), p),
        Model::Classical => linal::scale(1.0 / s.mass, p),
    }
}

/// v⁻¹(q): relativistic mq/√(1−|q|²) (requires |q| < 1), classical mq.
pub fn inverse_velocity(q: [f64; 3], s: &SpeciesSpec) -> Result<[f64; 3]> {
    match s.model {
        Model::Relativistic => {
            let qq = linal::norm_sq(q);
            // Hard reject just below the light sphere to avoid overflow.
            if qq >= (1.0 - 1e-12) * (1.0 - 1e-12) {
                return Err(Error::Domain(format!(
                    "inverse_velocity: |q| = {} too close to 1",
                    qq.sqrt()
                )));
            }
            Ok(linal::scale(s.mass / (1.0 - qq).sqrt(), q))
        }
        Model::Classical => Ok(linal::scale(s.mass, q)),
    }
}

/// 𝔸(p) = ∇ₚv = p₀⁻³[p₀²δ − ppᵀ]; classical m⁻¹·I.
#[allow(non_snake_case)]
pub fn jacobian_A(p: [f64; 3], s: &SpeciesSpec) -> Matrix3 {
    match s.model {
        Model::Relativistic => {
            let p0 = energy(p, s.mass);
            let i3 = p0.powi(-3);
            Mat3::IDENTITY
                .scale(p0 * p0 * i3)
                .sub(&Mat3::outer(p, p).scale(i3))
        }
        Model::Classical => Mat3::IDENTITY.scale(1.0 / s.mass),
    }
}

/// 𝔹(q) = 𝔸(v⁻¹(q))⁻¹ = m(1−|q|²)^{−3/2}[(1−|q|²)δ + qqᵀ]; classical m·I.
#[allow(non_snake_case)]
pub fn jacobian_B(q: [f64; 3], s: &SpeciesSpec) -> Result<Matrix3> {
    match s.model {
        Model::Relativistic => {
            let qq = linal::norm_sq(q);
            if qq >= 1.0 {
                return Err(Error::Domain(format!(
                    "jacobian_B: |q| = {} outside the unit ball",
                    qq.sqrt()
                )));
            }
            let w = 1.0 - qq;
            let pref = s.mass * w.powf(-1.5);
            Ok(Mat3::IDENTITY
                .scale(w)
                .add(&Mat3::outer(q, q))
                .scale(pref))
        }
        Model::Classical => Ok(Mat3::IDENTITY.scale(s.mass)),
    }
}

/// 𝒟(p) = 1/|det 𝔸(p)| = p₀⁵/m²; classical m³.
#[allow(non_snake_case)]
pub fn inv_det_D(p: [f64; 3], s: &SpeciesSpec) -> f64 {
    match s.model {
        Model::Relativistic => energy(p, s.mass).powi(5) / (s.mass * s.mass),
        Model::Classical => s.mass.powi(3),
    }
}

/// Lorentz force K = e(E + v(p)×B).
#[inline]
pub fn lorentz_force(e_field: [f64; 3], b_field: [f64; 3], p: [f64; 3], s: &SpeciesSpec) -> [f64; 3] {
    let v = velocity(p, s);
    linal::scale(s.charge, linal::add(e_field, linal::cross(v, b_field)))
}

/// ζ = β/√(1+β²), γ = max{1/2, 2β/√(1+4β²)}.
pub fn support_params(beta: f64) -> SupportParams {
    assert!(beta >= 0.0);
    SupportParams {
        beta,
        zeta: beta / (1.0 + beta * beta).sqrt(),
        gamma: (2.0 * beta / (1.0 + 4.0 * beta * beta).sqrt()).max(0.5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(mass: f64) -> SpeciesSpec {
        SpeciesSpec {
            mass,
            charge: 1.0,
            model: Model::Relativistic,
            support_x: 1.0,
            support_p: 1.0,
        }
    }

    fn cls(mass: f64) -> SpeciesSpec {
        SpeciesSpec {
            model: Model::Classical,
            support_p: 0.5,
            ..rel(mass)
        }
    }

    fn random_p(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 3] {
        core::array::from_fn(|_| rng.gen_range(-radius..radius))
    }

    #[test]
    fn velocity_known_values() {
        assert_eq!(velocity([0.0; 3], &rel(1.0)), [0.0; 3]);
        let v = velocity([0.75, 0.0, 0.0], &rel(1.0));
        assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_eq!(velocity([0.75, 0.0, 0.0], &cls(2.0)), [0.375, 0.0, 0.0]);
    }

    #[test]
    fn inverse_velocity_known_values() {
        assert_eq!(inverse_velocity([0.0; 3], &rel(1.0)).unwrap(), [0.0; 3]);
        let p = inverse_velocity([0.6, 0.0, 0.0], &rel(1.0)).unwrap();
        assert_abs_diff_eq!(p[0], 0.75, epsilon = 1e-15);
        assert!(inverse_velocity([0.99999, 0.0, 0.0], &rel(1.0)).is_ok());
        assert!(inverse_velocity([1.0, 0.0, 0.0], &rel(1.0)).is_err());
    }

    #[test]
    fn velocity_round_trip() {
        let s = rel(1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let dir = random_p(&mut rng, 1.0);
            let n = crate::linal::norm(dir).max(1e-9);
            let q = crate::linal::scale(rng.gen_range(0.0..0.99) / n, dir);
            let back = velocity(inverse_velocity(q, &s).unwrap(), &s);
            assert!(crate::linal::max_abs_diff(q, back) <= 1e-12);
        }
    }

    #[test]
    fn jacobian_a_known_values() {
        assert_eq!(jacobian_A([0.0; 3], &rel(1.0)).0, Mat3::IDENTITY.0);
        let det = jacobian_A([0.75, 0.0, 0.0], &rel(1.0)).det();
        assert_abs_diff_eq!(det.abs(), 1024.0 / 3125.0, epsilon = 1e-14);
        let a = jacobian_A([3.0, -2.0, 5.0], &cls(2.0));
        assert_eq!(a.0, Mat3::IDENTITY.scale(0.5).0);
    }

    #[test]
    fn jacobian_b_inverts_a() {
        let s = rel(1.0);
        let p = [0.75, 0.0, 0.0];
        let prod = jacobian_B(velocity(p, &s), &s).unwrap().matmul(&jacobian_A(p, &s));
        assert!(prod.sub(&Mat3::IDENTITY).max_abs() <= 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let dir = random_p(&mut rng, 1.0);
            let n = crate::linal::norm(dir).max(1e-9);
            let q = crate::linal::scale(rng.gen_range(0.0..0.9) / n, dir);
            let p = inverse_velocity(q, &s).unwrap();
            let prod = jacobian_B(q, &s).unwrap().matmul(&jacobian_A(p, &s));
            assert!(prod.sub(&Mat3::IDENTITY).max_abs() <= 1e-10);
        }
    }

    #[test]
    fn b_times_a_identity_general_mass() {
        let s = rel(0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = random_p(&mut rng, 10.0 / 3f64.sqrt());
            let prod = jacobian_B(velocity(p, &s), &s).unwrap().matmul(&jacobian_A(p, &s));
            assert!(prod.sub(&Mat3::IDENTITY).max_abs() <= 1e-10);
        }
    }

    #[test]
    fn inv_det_known_values() {
        assert_eq!(inv_det_D([0.0; 3], &rel(1.0)), 1.0);
        assert_abs_diff_eq!(
            inv_det_D([0.75, 0.0, 0.0], &rel(1.0)),
            3125.0 / 1024.0,
            epsilon = 1e-12
        );
        assert_eq!(inv_det_D([9.0, 1.0, -4.0], &cls(2.0)), 8.0);
    }

    #[test]
    fn det_times_inv_det_is_one() {
        let s = rel(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let p = random_p(&mut rng, 10.0 / 3f64.sqrt());
            let prod = jacobian_A(p, &s).det().abs() * inv_det_D(p, &s);
            assert!((prod - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn lorentz_force_cases() {
        let s = rel(1.0);
        assert_eq!(lorentz_force([0.0; 3], [0.0; 3], [0.3, 0.2, 0.1], &s), [0.0; 3]);
        let k = lorentz_force([0.0; 3], [0.0, 0.0, 1.0], [0.75, 0.0, 0.0], &s);
        assert_abs_diff_eq!(k[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k[1], -0.6, epsilon = 1e-15);
        let neutral = SpeciesSpec { charge: 0.0, ..s };
        assert_eq!(
            lorentz_force([5.0, 1.0, 2.0], [3.0, -1.0, 0.5], [0.75, 0.0, 0.0], &neutral),
            [0.0; 3]
        );
    }

    #[test]
    fn support_params_known_values() {
        let sp = support_params(0.0);
        assert_eq!((sp.zeta, sp.gamma), (0.0, 0.5));
        let sp = support_params(0.5);
        assert_abs_diff_eq!(sp.zeta, 0.4472135954999579, epsilon = 1e-15);
        assert_abs_diff_eq!(sp.gamma, 0.7071067811865475, epsilon = 1e-15);
        let sp = support_params(10.0);
        assert_abs_diff_eq!(sp.gamma, 20.0 / 401f64.sqrt(), epsilon = 1e-15);
        assert!(sp.gamma < 1.0);
    }

    #[test]
    fn support_params_monotone_and_ordered() {
        let mut prev = support_params(0.3);
        for k in 1..60 {
            let sp = support_params(0.3 + 0.25 * k as f64);
            assert!(sp.zeta > prev.zeta && sp.gamma > prev.gamma);
            assert!(sp.zeta < sp.gamma && sp.gamma < 1.0);
            prev = sp;
        }
    }

    #[test]
    fn species_validation() {
        assert!(rel(1.0).validate().is_ok());
        assert!(SpeciesSpec { mass: 0.0, ..rel(1.0) }.validate().is_err());
        assert!(SpeciesSpec { support_p: 1.0, ..cls(1.0) }.validate().is_err());
        assert!(cls(1.0).validate().is_ok());
    }
}
