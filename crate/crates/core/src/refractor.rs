//! The refractor as an envelope of ovals, its trace decomposition and the
//! energy each target receives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fresnel::{self, MediumPair};
use crate::geometry::{Direction, QuadratureRule, Vec3};
use crate::ovals::{self, OvalParams, Regime};
use crate::par;

/// Default relative tie tolerance η.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl TargetSpec {
    pub fn new(points: Vec<Vec3>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("at least one target is required"));
        }
        if points.len() != weights.len() {
            return Err(Error::invalid("targets and weights differ in length"));
        }
        if let Some(j) = points.iter().position(|p| !(p.norm() > 0.0)) {
            return Err(Error::invalid(format!("target {} sits at the origin", j + 1)));
        }
        if let Some(j) = weights.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid(format!("target {} has non-positive weight", j + 1)));
        }
        Ok(TargetSpec { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// μ(D̄) = Σ g_j.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionDensity {
    Uniform(f64),
    /// Values at sample directions, looked up by nearest sample.
    Tabulated(Vec<(Vec3, f64)>),
}

impl EmissionDensity {
    pub fn uniform() -> Self {
        EmissionDensity::Uniform(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EmissionDensity::Uniform(v) if v.is_finite() && *v > 0.0 => Ok(()),
            EmissionDensity::Uniform(v) => Err(Error::assumption(
                "A1",
                format!("density {v} must be positive"),
            )),
            EmissionDensity::Tabulated(t) if t.is_empty() => {
                Err(Error::invalid("density table is empty"))
            }
            EmissionDensity::Tabulated(t) => match t.iter().find(|(_, f)| !(*f > 0.0)) {
                Some((_, f)) => Err(Error::assumption(
                    "A1",
                    format!("density table holds non-positive value {f}"),
                )),
                None => Ok(()),
            },
        }
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        match self {
            EmissionDensity::Uniform(v) => *v,
            EmissionDensity::Tabulated(t) => {
                let mut best = (f64::INFINITY, 0.0);
                for (y, f) in t {
                    let d = (x - y).norm_squared();
                    if d < best.0 {
                        best = (d, *f);
                    }
                }
                best.1
            }
        }
    }

    /// inf f over the samples.
    pub fn floor(&self) -> f64 {
        match self {
            EmissionDensity::Uniform(v) => *v,
            EmissionDensity::Tabulated(t) => t.iter().map(|s| s.1).fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefractorState {
    pub medium: MediumPair,
    pub targets: TargetSpec,
    pub b: Vec<f64>,
    pub envelope: Envelope,
    pub tie_tol: f64,
    p_norms: Vec<f64>,
}

impl RefractorState {
    pub fn new(medium: MediumPair, targets: TargetSpec, b: Vec<f64>, tie_tol: f64) -> Result<Self> {
        if b.len() != targets.len() {
            return Err(Error::invalid("one b per target is required"));
        }
        if !(tie_tol >= 0.0 && tie_tol < 1e-3) {
            return Err(Error::invalid(format!("tie tolerance {tie_tol} out of range")));
        }
        let p_norms: Vec<f64> = targets.points.iter().map(|p| p.norm()).collect();
        for (j, (&bj, &pn)) in b.iter().zip(&p_norms).enumerate() {
            let range = ovals::admissible_b(pn, medium.kappa)?;
            if !range.contains(bj) {
                return Err(Error::invalid(format!(
                    "b_{} = {bj} outside ({}, {})",
                    j + 1,
                    range.lo,
                    range.hi
                )));
            }
        }
        let envelope = if medium.regime.uses_max() {
            Envelope::Max
        } else {
            Envelope::Min
        };
        Ok(RefractorState {
            medium,
            targets,
            b,
            envelope,
            tie_tol,
            p_norms,
        })
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn p_norm(&self, j: usize) -> f64 {
        self.p_norms[j]
    }

    pub fn oval(&self, j: usize) -> OvalParams {
        OvalParams::new(self.targets.points[j], self.b[j], self.medium.kappa)
            .expect("state holds admissible parameters")
    }

    /// Replace b_j, checking admissibility.
    pub fn set_b(&mut self, j: usize, b: f64) -> Result<()> {
        let range = ovals::admissible_b(self.p_norms[j], self.medium.kappa)?;
        if !range.contains(b) {
            return Err(Error::invalid(format!("b_{} = {b} not admissible", j + 1)));
        }
        self.b[j] = b;
        Ok(())
    }

    /// h_j(x) with the parameter b in place of b_j.
    #[inline]
    pub fn radius_with(&self, j: usize, b: f64, x: &Vec3) -> Result<f64> {
        let s = x.dot(&self.targets.points[j]);
        ovals::radius_from_dot(self.medium.regime, self.medium.kappa, self.p_norms[j], b, s)
    }

    #[inline]
    pub fn radius(&self, j: usize, x: &Vec3) -> Result<f64> {
        self.radius_with(j, self.b[j], x)
    }

    /// Transmitted fraction at x for sheet j with radius h, using the focused
    /// direction toward P_j.
    #[inline]
    pub fn transmission_given(&self, j: usize, x: &Vec3, h: f64) -> Result<f64> {
        if self.medium.regime == Regime::Critical {
            return Ok(1.0);
        }
        let d = self.targets.points[j] - x * h;
        let c = x.dot(&d) / d.norm();
        fresnel::transmittance(c, &self.medium)
    }
}

/// Envelope value, first active index and active count over radii `hs`.
#[inline]
pub fn envelope_of(hs: &[f64], envelope: Envelope, eta: f64) -> (f64, usize, usize) {
    let rho = match envelope {
        Envelope::Max => hs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Envelope::Min => hs.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let band = eta * rho;
    let mut first = usize::MAX;
    let mut count = 0;
    for (k, &h) in hs.iter().enumerate() {
        if (rho - h).abs() <= band {
            if first == usize::MAX {
                first = k;
            }
            count += 1;
        }
    }
    (rho, first, count)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rho: f64,
    pub active: Vec<usize>,
    pub tie: bool,
}

fn radii(state: &RefractorState, x: &Vec3, out: &mut [f64]) -> Result<()> {
    for (j, o) in out.iter_mut().enumerate() {
        *o = state.radius(j, x).map_err(|e| match e {
            Error::Domain(d) => Error::Domain(format!("sheet {}: {d}", j + 1)),
            other => other,
        })?;
    }
    Ok(())
}

pub fn evaluate(state: &RefractorState, x: &Vec3) -> Result<Evaluation> {
    let mut hs = vec![0.0; state.m()];
    radii(state, x, &mut hs)?;
    let (rho, _, _) = envelope_of(&hs, state.envelope, state.tie_tol);
    let band = state.tie_tol * rho;
    let active: Vec<usize> = (0..hs.len()).filter(|&k| (rho - hs[k]).abs() <= band).collect();
    let tie = active.len() > 1;
    Ok(Evaluation { rho, active, tie })
}

/// Lowest active index at x: the assignment used for measures.
pub fn assigned(state: &RefractorState, x: &Vec3) -> Result<usize> {
    let mut hs = vec![0.0; state.m()];
    radii(state, x, &mut hs)?;
    Ok(envelope_of(&hs, state.envelope, state.tie_tol).1)
}

pub fn trace_indicator(state: &RefractorState, j: usize, x: &Vec3) -> Result<bool> {
    Ok(assigned(state, x)? == j)
}

fn unique_active(state: &RefractorState, x: &Vec3) -> Result<(usize, f64)> {
    let e = evaluate(state, x)?;
    if e.tie {
        return Err(Error::Tie(e.active.len()));
    }
    Ok((e.active[0], e.rho))
}

pub fn surface_normal(state: &RefractorState, x: &Vec3) -> Result<Direction> {
    let (j, _) = unique_active(state, x)?;
    ovals::normal_at(&state.oval(j), x)
}

pub fn transmission_at(state: &RefractorState, x: &Vec3) -> Result<f64> {
    let (j, h) = unique_active(state, x)?;
    state.transmission_given(j, x, h)
}

/// Per-target energies G_j in one pass, plus the radius range over nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub g: Vec<f64>,
    pub rho_min: f64,
    pub rho_max: f64,
    pub ties: usize,
}

#[derive(Clone)]
struct Partial {
    g: Vec<f64>,
    rho_min: f64,
    rho_max: f64,
    ties: usize,
}

pub fn measures(
    state: &RefractorState,
    rule: &QuadratureRule,
    f: &EmissionDensity,
) -> Result<MeasureSummary> {
    let m = state.m();
    let parts = par::map_chunks(rule.len(), |r| -> Result<Partial> {
        let mut p = Partial {
            g: vec![0.0; m],
            rho_min: f64::INFINITY,
            rho_max: f64::NEG_INFINITY,
            ties: 0,
        };
        let mut hs = vec![0.0; m];
        for i in r {
            let x = rule.node(i);
            radii(state, &x, &mut hs)?;
            let (rho, j, n) = envelope_of(&hs, state.envelope, state.tie_tol);
            let t = state.transmission_given(j, &x, hs[j])?;
            p.g[j] += rule.weight(i) * f.value(&x) * t;
            p.rho_min = p.rho_min.min(rho);
            p.rho_max = p.rho_max.max(rho);
            p.ties += (n > 1) as usize;
        }
        Ok(p)
    });
    let mut out = MeasureSummary {
        g: vec![0.0; m],
        rho_min: f64::INFINITY,
        rho_max: f64::NEG_INFINITY,
        ties: 0,
    };
    for p in parts {
        let p = p?;
        for (a, b) in out.g.iter_mut().zip(&p.g) {
            *a += b;
        }
        out.rho_min = out.rho_min.min(p.rho_min);
        out.rho_max = out.rho_max.max(p.rho_max);
        out.ties += p.ties;
    }
    Ok(out)
}

/// G_j = Σ_i w_i f(x_i) t(x_i) [assigned(x_i) = j].
pub fn measure_of_target(
    state: &RefractorState,
    j: usize,
    rule: &QuadratureRule,
    f: &EmissionDensity,
) -> Result<f64> {
    if j >= state.m() {
        return Err(Error::invalid(format!("no target {}", j + 1)));
    }
    Ok(measures(state, rule, f)?.g[j])
}

pub fn total_transmitted(
    state: &RefractorState,
    rule: &QuadratureRule,
    f: &EmissionDensity,
) -> Result<f64> {
    Ok(measures(state, rule, f)?.g.iter().sum())
}

/// Share of the rectangle [a0, a1] × [b0, b1] on which d0 + ga·a + gb·b < 0.
/// A degenerate b range reduces this to a share of [a0, a1].
pub fn negative_share(d0: f64, ga: f64, gb: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    if b.1 <= b.0 {
        if ga == 0.0 {
            return (d0 < 0.0) as u8 as f64;
        }
        let root = -d0 / ga;
        let len = a.1 - a.0;
        let neg = if ga > 0.0 { root - a.0 } else { a.1 - root };
        return (neg / len).clamp(0.0, 1.0);
    }
    let lin = |p: (f64, f64)| d0 + ga * p.0 + gb * p.1;
    let rect = [(a.0, b.0), (a.1, b.0), (a.1, b.1), (a.0, b.1)];
    let mut poly: Vec<(f64, f64)> = Vec::with_capacity(5);
    for k in 0..4 {
        let (p, q) = (rect[k], rect[(k + 1) % 4]);
        let (lp, lq) = (lin(p), lin(q));
        if lp < 0.0 {
            poly.push(p);
        }
        if (lp < 0.0) != (lq < 0.0) {
            let s = lp / (lp - lq);
            poly.push((p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1)));
        }
    }
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|k| {
            let (p, q) = (poly[k], poly[(k + 1) % n]);
            p.0 * q.1 - q.0 * p.1
        })
        .sum();
    (0.5 * twice.abs() / ((a.1 - a.0) * (b.1 - b.0))).clamp(0.0, 1.0)
}

/// Margin of sheet j over the envelope of its rivals, positive where j is preferred.
#[inline]
pub fn margin(hj: f64, other: f64, envelope: Envelope) -> f64 {
    match envelope {
        Envelope::Max => hj - other,
        Envelope::Min => other - hj,
    }
}

/// A sheet's margin and ownership at the chart neighbours of one node.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stencil {
    len: usize,
    // (du, dphi, margin, owned)
    items: [(f64, f64, f64, bool); 4],
}

impl Stencil {
    pub fn push(&mut self, du: f64, dphi: f64, d: f64, owned: bool) {
        self.items[self.len] = (du, dphi, d, owned);
        self.len += 1;
    }

    fn items(&self) -> &[(f64, f64, f64, bool)] {
        &self.items[..self.len]
    }
}

/// Share of node i's cell credited to a sheet.
///
/// Whole cells go to their owner unless ownership changes across the
/// stencil. Then the cell is cut along the zero line of a linear fit of the
/// sheet's margin, with least-squares slopes along each chart direction.
pub fn cell_share(rule: &QuadratureRule, i: usize, d0: f64, owned: bool, nb: &Stencil) -> f64 {
    if nb.items().iter().all(|n| n.3 == owned) {
        return owned as u8 as f64;
    }
    let (mut su, mut suu, mut sp, mut spp) = (0.0, 0.0, 0.0, 0.0);
    for &(du, dp, d, _) in nb.items() {
        su += (d - d0) * du;
        suu += du * du;
        sp += (d - d0) * dp;
        spp += dp * dp;
    }
    let gu = if suu > 0.0 { su / suu } else { 0.0 };
    let gp = if spp > 0.0 { sp / spp } else { 0.0 };
    let (ea, eb) = rule.cell_extent(i);
    1.0 - negative_share(d0, gu, gp, ea, eb)
}

/// Envelope of the row without entry j, folded in index order.
#[inline]
fn envelope_without(hs: &[f64], j: usize, envelope: Envelope) -> f64 {
    let mut o = match envelope {
        Envelope::Max => f64::NEG_INFINITY,
        Envelope::Min => f64::INFINITY,
    };
    for (k, &h) in hs.iter().enumerate() {
        if k != j {
            o = match envelope {
                Envelope::Max => o.max(h),
                Envelope::Min => o.min(h),
            };
        }
    }
    o
}

/// Shares of every sheet owning part of a mixed stencil around node i.
/// `row(p)` gives the radii at node p and `owner(p)` its assigned sheet.
fn mixed_cell<R, O>(
    state: &RefractorState,
    rule: &QuadratureRule,
    i: usize,
    row: R,
    owner: O,
    mut credit: impl FnMut(usize, f64),
) where
    R: Fn(usize) -> Vec<f64>,
    O: Fn(usize) -> usize,
{
    let nb: Vec<_> = rule.chart_neighbors(i).collect();
    let h0 = row(i);
    let hn: Vec<Vec<f64>> = nb.iter().map(|c| row(c.index)).collect();
    let mut sheets = vec![owner(i)];
    for c in &nb {
        let k = owner(c.index);
        if !sheets.contains(&k) {
            sheets.push(k);
        }
    }
    let env = state.envelope;
    for &j in &sheets {
        let d0 = margin(h0[j], envelope_without(&h0, j, env), env);
        let mut st = Stencil::default();
        for (c, h) in nb.iter().zip(&hn) {
            let d = margin(h[j], envelope_without(h, j, env), env);
            st.push(c.du, c.dphi, d, owner(c.index) == j);
        }
        let share = cell_share(rule, i, d0, owner(i) == j, &st);
        if share > 0.0 {
            credit(j, share);
        }
    }
}

/// Target measures with trace boundaries resolved inside quadrature cells.
///
/// The node rule counts a whole cell for its assigned sheet, which leaves an
/// error of order N^(-3/4) from the cells a boundary cuts. Here each sheet
/// receives the share of a cut cell on which it beats its rivals, frozen f·t
/// at the node. The result is continuous in b and converges like N^(-1).
///
/// Nodes are generated on the fly, so fine levels need only the assignment array.
pub fn resolved_measures(
    state: &RefractorState,
    rule: &QuadratureRule,
    f: &EmissionDensity,
) -> Result<Vec<f64>> {
    let m = state.m();
    let n = rule.len();
    let parts = par::map_chunks(n, |r| -> Result<Vec<u32>> {
        let mut hs = vec![0.0; m];
        r.map(|i| {
            radii(state, &rule.node(i), &mut hs)?;
            Ok(envelope_of(&hs, state.envelope, state.tie_tol).1 as u32)
        })
        .collect()
    });
    let mut assign = Vec::with_capacity(n);
    for p in parts {
        assign.extend(p?);
    }
    let row = |p: usize| -> Vec<f64> {
        let x = rule.node(p);
        (0..m).map(|j| state.radius(j, &x).unwrap_or(f64::NAN)).collect()
    };
    let sums = par::map_chunks(n, |r| -> Result<Vec<f64>> {
        let mut g = vec![0.0; m];
        for i in r {
            let a = assign[i] as usize;
            let x = rule.node(i);
            let wf = rule.weight(i) * f.value(&x);
            if rule.chart_neighbors(i).all(|c| assign[c.index] as usize == a) {
                g[a] += wf * state.transmission_given(a, &x, state.radius(a, &x)?)?;
                continue;
            }
            let mut err = None;
            mixed_cell(state, rule, i, row, |p| assign[p] as usize, |j, share| {
                match state
                    .radius(j, &x)
                    .and_then(|h| state.transmission_given(j, &x, h))
                {
                    Ok(t) => g[j] += share * wf * t,
                    Err(e) => err = Some(e),
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
        Ok(g)
    });
    let mut g = vec![0.0; m];
    for p in sums {
        for (x, y) in g.iter_mut().zip(&p?) {
            *x += y;
        }
    }
    Ok(g)
}

/// max over adjacent node pairs of |ρ(x) − ρ(y)| / ‖x − y‖.
pub fn lipschitz_estimate(state: &RefractorState, rule: &QuadratureRule) -> Result<f64> {
    let chunks: Vec<Result<Vec<f64>>> = par::map_chunks(rule.len(), |r| {
        let mut hs = vec![0.0; state.m()];
        r.map(|i| {
            radii(state, &rule.node(i), &mut hs)?;
            Ok(envelope_of(&hs, state.envelope, state.tie_tol).0)
        })
        .collect()
    });
    let mut rho = Vec::with_capacity(rule.len());
    for c in chunks {
        rho.extend(c?);
    }
    let mut best = 0.0f64;
    for (i, j) in rule.neighbor_pairs() {
        let d = (rule.node(i) - rule.node(j)).norm();
        if d > 0.0 {
            best = best.max((rho[i] - rho[j]).abs() / d);
        }
    }
    Ok(best)
}

/// Cached radii of every sheet at every node, the working set of the solver.
///
/// Layout is node-major: `h[i * m + j]`.
pub struct NodeCache {
    pub nodes: Vec<Vec3>,
    /// w_i f(x_i)
    pub wf: Vec<f64>,
    pub h: Vec<f64>,
    pub rule: QuadratureRule,
    m: usize,
}

impl NodeCache {
    pub fn new(state: &RefractorState, rule: &QuadratureRule, f: &EmissionDensity) -> Result<Self> {
        let nodes = rule.nodes();
        let mut wf = vec![0.0; nodes.len()];
        par::fill(&mut wf, |i| rule.weight(i) * f.value(&nodes[i]));
        let m = state.m();
        let mut cache = NodeCache {
            h: vec![0.0; nodes.len() * m],
            nodes,
            wf,
            rule: rule.clone(),
            m,
        };
        for j in 0..m {
            cache.update(state, j)?;
        }
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.h[i * self.m..(i + 1) * self.m]
    }

    /// Recompute column j after b_j changed.
    pub fn update(&mut self, state: &RefractorState, j: usize) -> Result<()> {
        let m = self.m;
        let col: Vec<Result<Vec<f64>>> = par::map_chunks(self.nodes.len(), |r| {
            r.map(|i| state.radius(j, &self.nodes[i])).collect()
        });
        let mut i = 0;
        for c in col {
            for v in c.map_err(|e| match e {
                Error::Domain(d) => Error::Domain(format!("sheet {}: {d}", j + 1)),
                other => other,
            })? {
                self.h[i * m + j] = v;
                i += 1;
            }
        }
        Ok(())
    }

    /// Energies, envelope range and ties from the cache; same sums as `measures`.
    pub fn summary(&self, state: &RefractorState) -> Result<MeasureSummary> {
        let m = self.m;
        let parts = par::map_chunks(self.len(), |r| -> Result<Partial> {
            let mut p = Partial {
                g: vec![0.0; m],
                rho_min: f64::INFINITY,
                rho_max: f64::NEG_INFINITY,
                ties: 0,
            };
            for i in r {
                let hs = self.row(i);
                let (rho, j, n) = envelope_of(hs, state.envelope, state.tie_tol);
                let t = state.transmission_given(j, &self.nodes[i], hs[j])?;
                p.g[j] += self.wf[i] * t;
                p.rho_min = p.rho_min.min(rho);
                p.rho_max = p.rho_max.max(rho);
                p.ties += (n > 1) as usize;
            }
            Ok(p)
        });
        let mut out = MeasureSummary {
            g: vec![0.0; m],
            rho_min: f64::INFINITY,
            rho_max: f64::NEG_INFINITY,
            ties: 0,
        };
        for p in parts {
            let p = p?;
            for (a, b) in out.g.iter_mut().zip(&p.g) {
                *a += b;
            }
            out.rho_min = out.rho_min.min(p.rho_min);
            out.rho_max = out.rho_max.max(p.rho_max);
            out.ties += p.ties;
        }
        Ok(out)
    }

    /// Sheet owning each node under the tie rule.
    pub fn assignment(&self, state: &RefractorState) -> Vec<u32> {
        (0..self.len())
            .map(|i| envelope_of(self.row(i), state.envelope, state.tie_tol).1 as u32)
            .collect()
    }

    /// `resolved_measures` from the cached radii.
    pub fn resolved(&self, state: &RefractorState) -> Result<Vec<f64>> {
        let m = self.m;
        let assign = self.assignment(state);
        let rule = &self.rule;
        let sums = par::map_chunks(self.len(), |r| -> Result<Vec<f64>> {
            let mut g = vec![0.0; m];
            for i in r {
                let a = assign[i] as usize;
                let x = &self.nodes[i];
                let wf = self.wf[i];
                if rule.chart_neighbors(i).all(|c| assign[c.index] as usize == a) {
                    g[a] += wf * state.transmission_given(a, x, self.row(i)[a])?;
                    continue;
                }
                let hi = self.row(i);
                let mut err = None;
                mixed_cell(
                    state,
                    rule,
                    i,
                    |p| self.row(p).to_vec(),
                    |p| assign[p] as usize,
                    |j, share| match state.transmission_given(j, x, hi[j]) {
                        Ok(t) => g[j] += share * wf * t,
                        Err(e) => err = Some(e),
                    },
                );
                if let Some(e) = err {
                    return Err(e);
                }
            }
            Ok(g)
        });
        let mut g = vec![0.0; m];
        for p in sums {
            for (x, y) in g.iter_mut().zip(&p?) {
                *x += y;
            }
        }
        Ok(g)
    }

    /// Envelope of radii at every node.
    pub fn rho(&self, state: &RefractorState) -> Vec<f64> {
        (0..self.len())
            .map(|i| envelope_of(self.row(i), state.envelope, state.tie_tol).0)
            .collect()
    }

    /// Competition seen by sheet j: for each node, the envelope over k ≠ j and
    /// the envelope over k < j.
    pub fn rivals(&self, state: &RefractorState, j: usize) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let (init, pick): (f64, fn(f64, f64) -> f64) = match state.envelope {
            Envelope::Max => (f64::NEG_INFINITY, f64::max),
            Envelope::Min => (f64::INFINITY, f64::min),
        };
        let mut other = vec![init; self.len()];
        let mut lower = vec![init; self.len()];
        for i in 0..self.len() {
            let row = &self.h[i * m..(i + 1) * m];
            let mut lo = init;
            for &h in &row[..j] {
                lo = pick(lo, h);
            }
            let mut o = lo;
            for &h in &row[j + 1..] {
                o = pick(o, h);
            }
            lower[i] = lo;
            other[i] = o;
        }
        (other, lower)
    }
}

/// Whether sheet j, at radius `hj`, is the assigned sheet given its rivals.
/// Agrees exactly with `envelope_of` on the full row.
#[inline]
pub fn wins(hj: f64, other: f64, lower: f64, envelope: Envelope, eta: f64) -> bool {
    let rho = match envelope {
        Envelope::Max => hj.max(other),
        Envelope::Min => hj.min(other),
    };
    let band = eta * rho;
    (rho - hj).abs() <= band && !((rho - lower).abs() <= band)
}
