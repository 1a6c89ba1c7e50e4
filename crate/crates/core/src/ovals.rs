//! Refracting ovals with focus at the origin: closed-form radii, support cuts,
//! normals and bounds for the three regimes of a negative relative index κ.
//!
//! Strong (κ < −1) and Mild (−1 < κ < 0) sheets solve |z| + κ|z − P| = b.
//! The Critical sheet (κ = −1) is the semi-hyperboloid |z| − |z − P| = b.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Direction, Vec3};

/// |κ + 1| below this counts as the Critical regime.
pub const CRITICAL_TOL: f64 = 1e-14;

/// Negative discriminants down to this (relative to κ²|P|²) are clipped to zero.
pub const DISCRIMINANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Strong,
    Mild,
    Critical,
}

impl Regime {
    pub fn from_kappa(kappa: f64) -> Result<Regime> {
        if !(kappa.is_finite() && kappa < 0.0) {
            return Err(Error::invalid(format!("kappa must be negative, got {kappa}")));
        }
        Ok(if (kappa + 1.0).abs() <= CRITICAL_TOL {
            Regime::Critical
        } else if kappa < -1.0 {
            Regime::Strong
        } else {
            Regime::Mild
        })
    }

    /// Strong sheets combine by max, the other two by min.
    pub fn uses_max(self) -> bool {
        matches!(self, Regime::Strong)
    }
}

/// Range of b for which a sheet exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BInterval {
    pub lo: f64,
    pub hi: f64,
    /// Closed in the Critical regime, open otherwise.
    pub closed: bool,
}

impl BInterval {
    pub fn contains(&self, b: f64) -> bool {
        if self.closed {
            b >= self.lo && b <= self.hi
        } else {
            b > self.lo && b < self.hi
        }
    }
}

pub fn admissible_b(p_norm: f64, kappa: f64) -> Result<BInterval> {
    let regime = Regime::from_kappa(kappa)?;
    if !(p_norm.is_finite() && p_norm > 0.0) {
        return Err(Error::invalid("target must not sit at the origin"));
    }
    Ok(match regime {
        Regime::Critical => BInterval {
            lo: -p_norm,
            hi: p_norm,
            closed: true,
        },
        _ => BInterval {
            lo: kappa * p_norm,
            hi: p_norm,
            closed: false,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvalParams {
    pub p: Vec3,
    pub b: f64,
    pub kappa: f64,
    pub regime: Regime,
    p_norm: f64,
}

impl OvalParams {
    pub fn new(p: Vec3, b: f64, kappa: f64) -> Result<Self> {
        let regime = Regime::from_kappa(kappa)?;
        let p_norm = p.norm();
        let range = admissible_b(p_norm, kappa)?;
        if !range.contains(b) {
            return Err(Error::invalid(format!(
                "b = {b} outside the admissible range ({}, {}) for |P| = {p_norm}",
                range.lo, range.hi
            )));
        }
        Ok(OvalParams {
            p,
            b,
            kappa,
            regime,
            p_norm,
        })
    }

    #[inline]
    pub fn p_norm(&self) -> f64 {
        self.p_norm
    }

    pub fn with_b(&self, b: f64) -> Result<Self> {
        OvalParams::new(self.p, b, self.kappa)
    }
}

/// Radius along a direction whose dot product with P is `s`.
///
/// This is the kernel shared by every hot loop; `polar_radius` wraps it.
#[inline]
pub fn radius_from_dot(regime: Regime, kappa: f64, p_norm: f64, b: f64, s: f64) -> Result<f64> {
    let pp = p_norm * p_norm;
    let k2 = kappa * kappa;
    match regime {
        Regime::Critical => {
            if s <= b {
                return Err(Error::Domain(format!("x·P = {s} must exceed b = {b}")));
            }
            let h = (pp - b * b) / (2.0 * (s - b));
            if h > 0.0 {
                Ok(h)
            } else {
                Err(Error::Domain("degenerate sheet, |b| = |P|".into()))
            }
        }
        Regime::Strong => {
            let d = k2 * ((b - s) * (b - s) - (k2 - 1.0) * (pp - s * s));
            let d = clip_discriminant(d, k2 * pp)?;
            let bb = k2 * s - b;
            let c = k2 * pp - b * b;
            let den = bb + d.sqrt();
            if !(den > 0.0) {
                return Err(Error::Domain(format!("no forward intersection at x·P = {s}")));
            }
            Ok(c / den)
        }
        Regime::Mild => {
            if s < b {
                return Err(Error::Domain(format!("x·P = {s} below b = {b}")));
            }
            let d = k2 * ((b - s) * (b - s) + (1.0 - k2) * (pp - s * s));
            let d = clip_discriminant(d, k2 * pp)?;
            let bb = b - k2 * s;
            let h = if bb >= 0.0 {
                (bb + d.sqrt()) / (1.0 - k2)
            } else {
                (b * b - k2 * pp) / (bb - d.sqrt())
            };
            if h > 0.0 {
                Ok(h)
            } else {
                Err(Error::Domain(format!("no positive radius at x·P = {s}")))
            }
        }
    }
}

#[inline]
fn clip_discriminant(d: f64, scale: f64) -> Result<f64> {
    if d >= 0.0 {
        Ok(d)
    } else if d >= -DISCRIMINANT_TOL * scale {
        Ok(0.0)
    } else {
        Err(Error::Domain(format!("negative discriminant {d:e}")))
    }
}

/// h(x, P, b).
pub fn polar_radius(oval: &OvalParams, x: &Vec3) -> Result<f64> {
    let s = x.dot(&oval.p);
    if oval.regime == Regime::Strong {
        let cut = support_cut(oval)?;
        // relative slack so that x = P/|P| at b → |P| stays inside
        if s < cut * oval.p_norm - 1e-14 * oval.p_norm {
            return Err(Error::Domain(format!(
                "x·P/|P| = {} below the support cut {cut}",
                s / oval.p_norm
            )));
        }
    }
    radius_from_dot(oval.regime, oval.kappa, oval.p_norm, oval.b, s)
}

/// I(P, b), the cosine bounding the Strong sheet's support region.
pub fn support_cut(oval: &OvalParams) -> Result<f64> {
    if oval.regime != Regime::Strong {
        return Err(Error::invalid("the support cut exists only for kappa < -1"));
    }
    Ok(support_cut_raw(oval.kappa, oval.p_norm, oval.b))
}

#[inline]
pub fn support_cut_raw(kappa: f64, p_norm: f64, b: f64) -> f64 {
    let k2 = kappa * kappa;
    let rad = ((k2 - 1.0) * (k2 * p_norm * p_norm - b * b)).max(0.0);
    (b + rad.sqrt()) / (k2 * p_norm)
}

/// The b at which I(P, b) equals `c`, for c in [1/κ, 1]. Increasing in c.
pub fn b_for_support_cut(kappa: f64, p_norm: f64, c: f64) -> f64 {
    let c = c.clamp(1.0 / kappa, 1.0);
    let k2 = kappa * kappa;
    p_norm * (c - ((k2 - 1.0) * (1.0 - c) * (1.0 + c)).max(0.0).sqrt())
}

/// Unnormalised normal z/|z| − κ(P − z)/|P − z| at z = h x.
pub fn normal_raw(oval: &OvalParams, x: &Vec3, h: f64) -> Result<Vec3> {
    let z = x * h;
    let d = oval.p - z;
    let dn = d.norm();
    if !(dn > 0.0) {
        return Err(Error::Domain("surface point coincides with the target".into()));
    }
    Ok(x - d * (oval.kappa / dn))
}

/// Unit normal, oriented so that x·ν > 0.
pub fn normal_at(oval: &OvalParams, x: &Vec3) -> Result<Direction> {
    let h = polar_radius(oval, x)?;
    let v = normal_raw(oval, x, h)?;
    Direction::normalize(v)
}

/// ∂h/∂b = 1/(x·ν) with ν the unnormalised normal.
pub fn dh_db(oval: &OvalParams, x: &Vec3) -> Result<f64> {
    let h = polar_radius(oval, x)?;
    Ok(1.0 / x.dot(&normal_raw(oval, x, h)?))
}

/// The b whose sheet passes through z: the oval equation solved for b.
#[inline]
pub fn b_through(kappa: f64, regime: Regime, z: &Vec3, p: &Vec3) -> f64 {
    let k = if regime == Regime::Critical { -1.0 } else { kappa };
    z.norm() + k * (z - p).norm()
}

/// Signed defect of the oval equation at z = h(x) x.
pub fn defect(oval: &OvalParams, x: &Vec3) -> Result<f64> {
    let h = polar_radius(oval, x)?;
    Ok(defect_at(oval, &(x * h)))
}

/// Defect at an arbitrary point; positive outside the sheet.
pub fn defect_at(oval: &OvalParams, z: &Vec3) -> f64 {
    b_through(oval.kappa, oval.regime, z, &oval.p) - oval.b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryBounds {
    pub h_min: f64,
    pub h_max: f64,
    pub dist_min: f64,
    pub dist_max: f64,
    /// Strong only: I(P, b).
    pub support_cut: Option<f64>,
    /// Strong only: the weaker upper bound √(2|P|)·√((κ|P| − b)/(1 + κ)) on h.
    pub h_max_weak: Option<f64>,
    /// Strong only: lower and upper bounds on I(P, b) − 1/κ.
    pub cut_sandwich: Option<(f64, f64)>,
}

pub fn bounds(oval: &OvalParams) -> Result<GeometryBounds> {
    let (k, p, b) = (oval.kappa, oval.p_norm, oval.b);
    match oval.regime {
        Regime::Critical => Err(Error::invalid(
            "the kappa = -1 sheet is unbounded; no closed-form bounds",
        )),
        Regime::Strong => {
            let k2 = k * k;
            let root = (b - k * p).sqrt();
            Ok(GeometryBounds {
                h_min: (k * p - b) / (k - 1.0),
                h_max: (k2 * p * p - b * b).sqrt() / (k2 - 1.0).sqrt(),
                dist_min: (b - p) / (k - 1.0),
                dist_max: (b - p) / k,
                support_cut: Some(support_cut_raw(k, p, b)),
                h_max_weak: Some((2.0 * p).sqrt() * ((k * p - b) / (1.0 + k)).sqrt()),
                cut_sandwich: Some((
                    root / (-k * p * (1.0 - k).sqrt()),
                    (1.0 + 2f64.sqrt()) * root / (-k * p.sqrt()) * (1.0 - k).sqrt(),
                )),
            })
        }
        Regime::Mild => Ok(GeometryBounds {
            h_min: (b - k * p) / (1.0 - k),
            h_max: (b - k * p) / (1.0 + k),
            dist_min: (p - b) / (1.0 - k),
            dist_max: (p * p - b * b).sqrt() / (1.0 - k * k).sqrt(),
            support_cut: None,
            h_max_weak: None,
            cut_sandwich: None,
        }),
    }
}
