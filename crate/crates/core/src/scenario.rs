//! Reproducible test problems that satisfy the standing assumptions.
//!
//! Targets sit above a 30° cap, spread sideways so every sheet can claim a
//! sector of the cap. Free parameters (τ, r₀, ε, b₁) are placed strictly
//! inside their admissible windows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fresnel::{self, AdmissibilityMargin, MediumPair};
use crate::geometry::{build_quadrature, make_cap, QuadratureRule, Vec3};
use crate::ovals::{self, Regime};
use crate::refractor::{EmissionDensity, TargetSpec, DEFAULT_TIE_TOL};
use crate::solver::{DiskPatch, ProblemConfig, RadonConfig, Tolerances};

pub const CAP_HALF_ANGLE: f64 = std::f64::consts::PI / 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub kappa: f64,
    pub m: usize,
    pub seed: u64,
    pub dimension: usize,
    pub quadrature_level: u32,
    /// Share of the guaranteed transmitted energy handed out as μ(D̄).
    pub fill: f64,
}

impl FixtureSpec {
    pub fn new(kappa: f64, m: usize, seed: u64) -> Self {
        FixtureSpec {
            kappa,
            m,
            seed,
            dimension: 3,
            quadrature_level: 4,
            fill: 0.9,
        }
    }
}

fn random_targets(spec: &FixtureSpec, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let mut pts: Vec<Vec3> = Vec::with_capacity(spec.m);
    while pts.len() < spec.m {
        let r = 0.35 * rng.random::<f64>().sqrt();
        let h = 1.0 + 0.3 * rng.random::<f64>();
        let p = if spec.dimension == 2 {
            let s = if rng.random::<bool>() { r } else { -r };
            Vec3::new(s, h, 0.0)
        } else {
            let a = std::f64::consts::TAU * rng.random::<f64>();
            Vec3::new(r * a.cos(), r * a.sin(), h)
        };
        if pts.iter().all(|q| (q - p).norm() > 0.05) {
            pts.push(p);
        }
    }
    let s = pts.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min);
    pts.iter().map(|p| p / s).collect()
}

/// Largest b in (lo, hi) with max over nodes of h(x, P, b) at most `cap`.
fn anchor_b(kappa: f64, p: &Vec3, rule: &QuadratureRule, lo: f64, hi: f64, cap: f64) -> f64 {
    let regime = Regime::from_kappa(kappa).expect("valid kappa");
    let pn = p.norm();
    let fits = |b: f64| {
        rule.nodes().iter().all(|x| {
            ovals::radius_from_dot(regime, kappa, pn, b, x.dot(p)).is_ok_and(|h| h <= cap)
        })
    };
    let (mut a, mut c) = (lo, hi);
    for _ in 0..100 {
        let mid = 0.5 * (a + c);
        if fits(mid) {
            a = mid;
        } else {
            c = mid;
        }
    }
    a
}

/// A feasible configuration with random targets and weights.
pub fn fixture(spec: &FixtureSpec) -> Result<ProblemConfig> {
    let points = {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        random_targets(spec, &mut rng)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    let shares: Vec<f64> = (0..spec.m).map(|_| 0.5 + rng.random::<f64>()).collect();
    build(spec, points, shares)
}

/// Two targets mirrored across the cap axis with equal weights.
pub fn symmetric_pair(kappa: f64, quadrature_level: u32) -> Result<ProblemConfig> {
    let spec = FixtureSpec {
        quadrature_level,
        ..FixtureSpec::new(kappa, 2, 0)
    };
    let p = Vec3::new(0.2, 0.0, 1.0);
    let q = Vec3::new(-0.2, 0.0, 1.0);
    let s = p.norm();
    build(&spec, vec![p / s, q / s], vec![1.0, 1.0])
}

/// Uniform density on a disk in the plane z = 1 around the axis, anchored at
/// the disk centre.
pub fn disk_patch(kappa: f64, radius: f64, levels: u32, quadrature_level: u32) -> Result<RadonConfig> {
    let spec = FixtureSpec {
        quadrature_level,
        ..FixtureSpec::new(kappa, 1, 0)
    };
    let center = Vec3::z();
    // parameters must hold for every atom the patch can produce
    let mut probe = vec![center];
    for k in 0..16 {
        let a = std::f64::consts::TAU * k as f64 / 16.0;
        probe.push(center + Vec3::new(a.cos(), a.sin(), 0.0) * radius);
    }
    let shares = vec![1.0; probe.len()];
    let base = build(&spec, probe, shares)?;
    let mass = base.targets.total();
    Ok(RadonConfig {
        patch: DiskPatch {
            center,
            e1: Vec3::x(),
            e2: Vec3::y(),
            radius,
            mass,
        },
        base,
        anchor: (0.0, 0.0),
        levels,
        samples: 16,
        test_cell: ((0.0, radius), (0.0, radius)),
    })
}

fn build(spec: &FixtureSpec, points: Vec<Vec3>, shares: Vec<f64>) -> Result<ProblemConfig> {
    let k = spec.kappa;
    let regime = Regime::from_kappa(k)?;
    let axis = if spec.dimension == 2 { Vec3::y() } else { Vec3::z() };
    let domain = make_cap(axis, CAP_HALF_ANGLE, spec.dimension)?;
    let medium = MediumPair::new(k, 1.0, 0.5)?;
    let rule = build_quadrature(&domain, spec.quadrature_level.min(4))?;
    let nodes = rule.nodes();
    let inf_cos = points
        .iter()
        .flat_map(|p| {
            let u = p.normalize();
            nodes.iter().map(move |x| x.dot(&u))
        })
        .fold(f64::INFINITY, f64::min)
        - 1e-3;
    let inf_p = points.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min);
    let p1 = points[0].norm();
    let (tau, r0, floor) = match regime {
        Regime::Strong => {
            let tau = 0.95 * (inf_cos - 1.0 / k).min(1.0 - 1.0 / k);
            let r0 = 0.95 * tau * tau * k * k
                / ((1.0 + 2f64.sqrt()).powi(2) * (1.0 - k).powi(2))
                * inf_p;
            (Some(tau), r0, 1.0 / k)
        }
        Regime::Mild => {
            let tau = 0.95 * (inf_cos + k).min(1.0 + k);
            (Some(tau), 0.95 * tau / (1.0 - k) * inf_p, k)
        }
        Regime::Critical => (None, 0.3 * inf_p, -1.0),
    };
    if tau.is_some_and(|t| t <= 0.0) {
        return Err(Error::Infeasible("targets too oblique for the cap".into()));
    }
    let epsilon = if regime == Regime::Critical {
        0.5
    } else {
        0.5 * (inf_cos - floor)
    };
    let margin = AdmissibilityMargin::new(epsilon)?;
    let b1 = match regime {
        Regime::Strong => {
            let cut = ovals::b_for_support_cut(k, p1, inf_cos);
            anchor_b(k, &points[0], &rule, k * p1 * (1.0 - 1e-12), cut.min(p1), 0.9 * r0)
        }
        Regime::Mild => k * p1 + 0.9 * r0 * (1.0 + k),
        Regime::Critical => anchor_b(k, &points[0], &rule, -p1 * (1.0 - 1e-12), p1, 0.8 * r0),
    };
    // guaranteed transmitted energy (1 − C_ε)∫f
    let c_eps = fresnel::reflectance_bound(&medium, &margin)?;
    let budget = spec.fill * (1.0 - c_eps) * domain.exact_measure();
    let total: f64 = shares.iter().sum();
    let weights = shares.iter().map(|s| s / total * budget).collect();
    Ok(ProblemConfig {
        domain,
        density: EmissionDensity::uniform(),
        medium,
        margin,
        targets: TargetSpec::new(points, weights)?,
        b1,
        tau,
        r0,
        tolerances: Tolerances::default(),
        quadrature_level: spec.quadrature_level,
        tie_tol: DEFAULT_TIE_TOL,
        resolve_boundaries: true,
    })
}
