//! Vector Snell law for κ < 0 and the Fresnel energy split at the interface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Direction, Vec3};
use crate::ovals::Regime;

/// Cosines may exceed 1 by this much from rounding.
const COS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumPair {
    pub kappa: f64,
    pub sigma: f64,
    /// Share of energy in the parallel polarisation.
    pub alpha: f64,
    pub regime: Regime,
}

impl MediumPair {
    pub fn new(kappa: f64, sigma: f64, alpha: f64) -> Result<Self> {
        let regime = Regime::from_kappa(kappa)?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(MediumPair {
            kappa,
            sigma,
            alpha,
            regime,
        })
    }

    pub fn beta(&self) -> f64 {
        1.0 - self.alpha
    }

    /// Lowest cosine x·m at which a refracted ray exists (ε = 0).
    pub fn cosine_floor(&self) -> f64 {
        match self.regime {
            Regime::Strong => 1.0 / self.kappa,
            Regime::Mild => self.kappa,
            Regime::Critical => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityMargin {
    pub epsilon: f64,
}

impl AdmissibilityMargin {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(AdmissibilityMargin { epsilon })
    }

    /// Lower end t_min of the admissible cosine window. Errors if the window is empty.
    pub fn t_min(&self, medium: &MediumPair) -> Result<f64> {
        let t = medium.cosine_floor() + self.epsilon;
        if medium.regime != Regime::Critical && t > 1.0 {
            return Err(Error::invalid(format!(
                "epsilon = {} leaves an empty cosine window",
                self.epsilon
            )));
        }
        Ok(t)
    }
}

/// Φ(t) = t + |κ|√(1 − κ⁻²(1 − t²)).
pub fn phi(t: f64, kappa: f64) -> Result<f64> {
    let radicand = 1.0 - (1.0 - t * t) / (kappa * kappa);
    if radicand < 0.0 {
        return Err(Error::TotalInternalReflection {
            cosine: t,
            radicand,
        });
    }
    Ok(t + kappa.abs() * radicand.sqrt())
}

/// Refracted direction m from x − κm = λν.
pub fn refract(x: &Vec3, nu: &Vec3, kappa: f64) -> Result<Direction> {
    let t = x.dot(nu);
    if !(t > 0.0) {
        return Err(Error::invalid(format!("incidence cosine x·ν = {t} must be positive")));
    }
    let lambda = phi(t, kappa)?;
    Ok(Direction::new_unchecked((x - nu * lambda) / kappa))
}

/// Parallel and perpendicular amplitude ratios p(t), q(t).
#[inline]
pub fn coefficients(t: f64, medium: &MediumPair) -> (f64, f64) {
    let (k, s) = (medium.kappa, medium.sigma);
    let p = (s + k - (1.0 + k * s) * t) / (s - k + (1.0 - k * s) * t);
    let q = (1.0 + k * s - (s + k) * t) / (1.0 - k * s + (s - k) * t);
    (p, q)
}

/// ψ(t) = α p² + β q² with no window check.
#[inline]
pub fn psi(t: f64, medium: &MediumPair) -> f64 {
    let (p, q) = coefficients(t, medium);
    medium.alpha * p * p + medium.beta() * q * q
}

fn check_cosine(c: f64, medium: &MediumPair) -> Result<()> {
    let lo = medium.cosine_floor();
    if !(c >= lo && c <= 1.0 + COS_SLACK) {
        return Err(Error::InadmissibleIncidence { cosine: c, lo });
    }
    Ok(())
}

/// Rounds r onto the values for which r + (1 − r) is exactly 1 in floating
/// point. Moves r by at most half an ulp of 1 and keeps the order of values.
#[inline]
fn snap(r: f64) -> f64 {
    1.0 - (1.0 - r)
}

/// Reflected energy fraction at cosine c = x·m. Zero for κ = −1.
pub fn reflectance(c: f64, medium: &MediumPair) -> Result<f64> {
    if medium.regime == Regime::Critical {
        return Ok(0.0);
    }
    check_cosine(c, medium)?;
    Ok(snap(psi(c.min(1.0), medium)))
}

pub fn transmittance(c: f64, medium: &MediumPair) -> Result<f64> {
    Ok(1.0 - reflectance(c, medium)?)
}

/// Uniform bound C_ε on the reflectance over [t_min, 1].
///
/// p and q are monotone on the window, so each squared coefficient peaks at
/// an endpoint; the bound takes that peak separately for each polarisation.
pub fn reflectance_bound(medium: &MediumPair, margin: &AdmissibilityMargin) -> Result<f64> {
    if medium.regime == Regime::Critical {
        return Ok(0.0);
    }
    let t0 = margin.t_min(medium)?;
    let (p0, q0) = coefficients(t0, medium);
    let (p1, q1) = coefficients(1.0, medium);
    let c = medium.alpha * (p0 * p0).max(p1 * p1) + medium.beta() * (q0 * q0).max(q1 * q1);
    Ok(snap(c))
}

pub fn admissible_pair(
    x: &Vec3,
    m: &Vec3,
    medium: &MediumPair,
    margin: &AdmissibilityMargin,
) -> bool {
    if medium.regime == Regime::Critical {
        return true;
    }
    let c = x.dot(m);
    match margin.t_min(medium) {
        Ok(t) => c >= t,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn med(k: f64, s: f64, a: f64) -> MediumPair {
        MediumPair::new(k, s, a).unwrap()
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(1.0, -2.0).unwrap(), 3.0);
        assert_eq!(phi(1.0, -0.5).unwrap(), 1.5);
        assert!(matches!(
            phi(0.5, -0.5),
            Err(Error::TotalInternalReflection { .. })
        ));
    }

    #[test]
    fn normal_incidence_goes_straight() {
        for k in [-2.0, -0.5, -1.0] {
            let x = Vec3::new(0.0, 0.6, 0.8);
            let m = refract(&x, &x, k).unwrap();
            assert!((*m - x).norm() < 1e-15);
        }
    }

    #[test]
    fn snell_scalar_law() {
        let x = Vec3::new(0.3, 0.1, 0.9).normalize();
        let nu = Vec3::new(-0.1, 0.2, 1.0).normalize();
        let m = refract(&x, &nu, -1.5).unwrap();
        assert!((m.norm() - 1.0).abs() < 1e-12);
        assert!((x.cross(&nu).norm() - 1.5 * m.cross(&nu).norm()).abs() < 1e-12);
        assert!(x.cross(&nu).dot(&m).abs() < 1e-12);
    }

    #[test]
    fn reflectance_examples() {
        for k in [-2.0, -0.5] {
            assert_eq!(reflectance(1.0, &med(k, 1.0, 0.3)).unwrap(), 0.0);
            for a in [0.0, 0.4, 1.0] {
                let r = reflectance(1.0, &med(k, 2.0, a)).unwrap();
                assert!((r - 1.0 / 9.0).abs() < 1e-15);
                let t = transmittance(1.0, &med(k, 2.0, a)).unwrap();
                assert!((t - 8.0 / 9.0).abs() < 1e-15);
            }
        }
        assert_eq!(reflectance(0.2, &med(-1.0, 1.7, 0.5)).unwrap(), 0.0);
        assert!(matches!(
            reflectance(-0.6, &med(-2.0, 1.0, 0.5)),
            Err(Error::InadmissibleIncidence { .. })
        ));
    }

    #[test]
    fn bound_examples() {
        let m = med(-2.0, 1.0, 0.5);
        let c = reflectance_bound(&m, &AdmissibilityMargin::new(0.5).unwrap()).unwrap();
        assert!((c - 1.0 / 9.0).abs() < 1e-15);
        let c = reflectance_bound(&m, &AdmissibilityMargin::new(1e-6).unwrap()).unwrap();
        assert!(c < 1.0 && c > 0.99);
        let crit = med(-1.0, 1.0, 0.5);
        assert_eq!(
            reflectance_bound(&crit, &AdmissibilityMargin::new(0.1).unwrap()).unwrap(),
            0.0
        );
        assert!(reflectance_bound(&m, &AdmissibilityMargin::new(2.0).unwrap()).is_err());
    }

    #[test]
    fn split_is_exact_in_floating_point() {
        let m = med(-1.7, 1.9, 0.3);
        for k in 0..=2000 {
            let c = -0.5 + 1.5 * k as f64 / 2000.0;
            let (r, t) = (reflectance(c, &m).unwrap(), transmittance(c, &m).unwrap());
            assert_eq!(r + t, 1.0, "{c}");
            assert!((r - psi(c, &m)).abs() <= 0.5 * f64::EPSILON);
        }
    }

    #[test]
    fn admissibility_threshold() {
        let x = Vec3::z();
        let eps = AdmissibilityMargin::new(0.1).unwrap();
        assert!(admissible_pair(&x, &x, &med(-2.0, 1.0, 0.5), &eps));
        let m = Vec3::new((1.0f64 - 0.45 * 0.45).sqrt(), 0.0, -0.45);
        assert!(!admissible_pair(&x, &m, &med(-2.0, 1.0, 0.5), &eps));
        let m = Vec3::new((1.0f64 - 0.35 * 0.35).sqrt(), 0.0, -0.35);
        assert!(admissible_pair(&x, &m, &med(-0.5, 1.0, 0.5), &eps));
    }

    #[test]
    fn unit_impedance_coefficients_coincide() {
        let m = med(-1.7, 1.0, 0.5);
        for t in [-0.5, 0.0, 0.3, 0.99] {
            let (p, q) = coefficients(t, &m);
            let e = (1.0 - 1.7) * (1.0 - t) / ((1.0 + 1.7) * (1.0 + t));
            assert!((p - e).abs() < 1e-15 && (q - e).abs() < 1e-15);
        }
    }
}
