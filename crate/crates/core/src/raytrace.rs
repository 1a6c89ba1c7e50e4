//! Forward ray tracing through a synthesized surface, used as an independent
//! check on the measure computation.
//!
//! Rays are refracted with the vector Snell law at the supporting oval; the
//! target a ray reaches is read off geometrically rather than from the
//! envelope's active index.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fresnel;
use crate::geometry::{Direction, QuadratureRule, Vec3};
use crate::ovals::{self, Regime};
use crate::par;
use crate::refractor::{self, EmissionDensity, RefractorState};

/// Focus errors above this fraction of |P| count as misses.
pub const MISS_TOL: f64 = 1e-6;
/// Focus errors at or below this fraction of min |P| count as focused.
pub const FOCUS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub x: Direction,
    pub z: Vec3,
    pub nu: Direction,
    pub m: Direction,
    pub active: usize,
    pub focus_error: f64,
    pub r: f64,
    pub t: f64,
    /// Several sheets meet at x; ν and m come from the lowest-index one.
    pub skipped: bool,
}

/// Distance from the half-line {z + s m : s ≥ 0} to p.
pub fn half_line_distance(z: &Vec3, m: &Vec3, p: &Vec3) -> f64 {
    let v = p - z;
    let s = v.dot(m);
    if s <= 0.0 {
        v.norm()
    } else {
        (v - m * s).norm()
    }
}

pub fn trace_one(state: &RefractorState, x: &Direction) -> Result<TraceResult> {
    let e = refractor::evaluate(state, x)?;
    let j = e.active[0];
    let z = x.vec() * e.rho;
    let oval = state.oval(j);
    let nu = ovals::normal_at(&oval, x)?;
    let m = fresnel::refract(x, &nu, state.medium.kappa)?;
    let r = match state.medium.regime {
        Regime::Critical => 0.0,
        _ => fresnel::reflectance(x.dot(&m), &state.medium)?,
    };
    let focus_error = half_line_distance(&z, &m, &state.targets.points[j]);
    Ok(TraceResult {
        x: *x,
        z,
        nu,
        m,
        active: j,
        focus_error,
        r,
        t: 1.0 - r,
        skipped: e.tie,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Σ w f t binned by the target nearest each refracted half-line.
    pub transported: Vec<f64>,
    pub reflected: f64,
    pub incident: f64,
    /// Quadrature measures G_j on the same rule.
    pub measures: Vec<f64>,
    /// max_j |transported_j − G_j| / Σ_j G_j
    pub discrepancy: f64,
    /// |Σ transported + reflected − incident| / incident
    pub ledger_error: f64,
    pub rays: usize,
    pub skipped_fraction: f64,
    /// Non-skipped rays whose nearest target differs from the active index.
    pub bin_mismatches: usize,
    /// Non-skipped rays with focus error above MISS_TOL·|P|.
    pub misses: usize,
    /// Share of non-skipped rays with focus error within FOCUS_TOL·min|P|.
    pub focused_fraction: f64,
    pub max_focus_error: f64,
}

#[derive(Clone)]
struct Tally {
    bins: Vec<f64>,
    reflected: f64,
    incident: f64,
    skipped: usize,
    mismatches: usize,
    misses: usize,
    focused: usize,
    max_focus: f64,
}

pub fn energy_audit(
    state: &RefractorState,
    rule: &QuadratureRule,
    f: &EmissionDensity,
) -> Result<AuditReport> {
    let m = state.m();
    let pts = &state.targets.points;
    let min_p = (0..m).map(|j| state.p_norm(j)).fold(f64::INFINITY, f64::min);
    let parts = par::map_chunks(rule.len(), |range| -> Result<Tally> {
        let mut a = Tally {
            bins: vec![0.0; m],
            reflected: 0.0,
            incident: 0.0,
            skipped: 0,
            mismatches: 0,
            misses: 0,
            focused: 0,
            max_focus: 0.0,
        };
        for i in range {
            let x = Direction::new_unchecked(rule.node(i));
            let tr = trace_one(state, &x)?;
            let wf = rule.weight(i) * f.value(&x);
            a.incident += wf;
            a.reflected += wf * tr.r;
            let bin = if tr.skipped {
                a.skipped += 1;
                tr.active
            } else {
                let mut best = (f64::INFINITY, 0);
                for (k, p) in pts.iter().enumerate() {
                    let d = half_line_distance(&tr.z, &tr.m, p);
                    if d < best.0 {
                        best = (d, k);
                    }
                }
                a.mismatches += (best.1 != tr.active) as usize;
                a.misses += (tr.focus_error > MISS_TOL * state.p_norm(tr.active)) as usize;
                a.focused += (tr.focus_error <= FOCUS_TOL * min_p) as usize;
                a.max_focus = a.max_focus.max(tr.focus_error);
                best.1
            };
            a.bins[bin] += wf * tr.t;
        }
        Ok(a)
    });
    let mut bins = vec![0.0; m];
    let (mut reflected, mut incident) = (0.0, 0.0);
    let (mut skipped, mut mismatches, mut misses, mut focused) = (0, 0, 0, 0);
    let mut max_focus = 0.0f64;
    for p in parts {
        let p = p?;
        for (b, v) in bins.iter_mut().zip(&p.bins) {
            *b += v;
        }
        reflected += p.reflected;
        incident += p.incident;
        skipped += p.skipped;
        mismatches += p.mismatches;
        misses += p.misses;
        focused += p.focused;
        max_focus = max_focus.max(p.max_focus);
    }
    let g = refractor::measures(state, rule, f)?.g;
    let total: f64 = g.iter().sum();
    let discrepancy = bins
        .iter()
        .zip(&g)
        .map(|(b, g)| (b - g).abs())
        .fold(0.0, f64::max)
        / total;
    let transported: f64 = bins.iter().sum();
    let rays = rule.len();
    let traced = rays - skipped;
    Ok(AuditReport {
        ledger_error: (transported + reflected - incident).abs() / incident,
        transported: bins,
        reflected,
        incident,
        measures: g,
        discrepancy,
        rays,
        skipped_fraction: skipped as f64 / rays as f64,
        bin_mismatches: mismatches,
        misses,
        focused_fraction: if traced > 0 { focused as f64 / traced as f64 } else { 1.0 },
        max_focus_error: max_focus,
    })
}
