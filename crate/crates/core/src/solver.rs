//! Assumption checks, initialisation and the coordinate-wise solve for
//! discrete target measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fresnel::{self, AdmissibilityMargin, MediumPair};
use crate::geometry::{build_quadrature, QuadratureRule, SourceDomain, Vec3};
use crate::ovals::{self, Regime};
use crate::refractor::{
    self, wins, EmissionDensity, Envelope, MeasureSummary, NodeCache, RefractorState, TargetSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative to μ(D̄).
    pub measure_tol: f64,
    /// Absolute; `None` means 1e−10·|P_j| per target.
    pub b_tol: Option<f64>,
    pub max_outer: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            measure_tol: 1e-4,
            b_tol: None,
            max_outer: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub domain: SourceDomain,
    pub density: EmissionDensity,
    pub medium: MediumPair,
    pub margin: AdmissibilityMargin,
    pub targets: TargetSpec,
    pub b1: f64,
    /// Unused in the κ = −1 regime.
    pub tau: Option<f64>,
    pub r0: f64,
    pub tolerances: Tolerances,
    pub quadrature_level: u32,
    pub tie_tol: f64,
    /// Split quadrature cells cut by a trace boundary (see `resolved_measures`).
    /// Off: whole cells go to the sheet assigned at their node.
    #[serde(default = "resolve_default")]
    pub resolve_boundaries: bool,
}

fn resolve_default() -> bool {
    true
}

impl ProblemConfig {
    pub fn regime(&self) -> Regime {
        self.medium.regime
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        build_quadrature(&self.domain, self.quadrature_level)
    }

    pub fn b_tol(&self, j: usize) -> f64 {
        self.tolerances
            .b_tol
            .unwrap_or(1e-10 * self.targets.points[j].norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub assumption: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub regime: Regime,
    pub c_eps: f64,
    /// μ(D̄)
    pub mu: f64,
    pub integral_f: f64,
    /// (1 − C_ε)∫f / μ(D̄); at least 1 when the energy surplus holds.
    pub surplus_ratio: f64,
    /// min over nodes and targets of x·P/|P|.
    pub inf_cos: f64,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    /// The first failed check as an error.
    pub fn ensure(&self) -> Result<()> {
        match self.first_failure() {
            Some(c) => Err(Error::assumption(&c.assumption, c.detail.clone())),
            None => Ok(()),
        }
    }
}

fn push(checks: &mut Vec<Check>, name: &str, passed: bool, detail: String) {
    checks.push(Check {
        assumption: name.to_string(),
        passed,
        detail,
    });
}

/// Whether some half-line from a point of the cone C_{r₀} meets two targets.
///
/// Two targets P_i, P_j lie on a common half-line from y exactly when y sits
/// on the line through them outside the open segment. The part of that line
/// inside the ball |y| ≤ r₀ is sampled and tested for cap membership.
fn half_line_conflict(domain: &SourceDomain, r0: f64, a: &Vec3, b: &Vec3) -> bool {
    let d = b - a;
    let dd = d.norm_squared();
    if dd == 0.0 {
        return true;
    }
    // |a + s d|² = r0²
    let ad = a.dot(&d);
    let disc = ad * ad - dd * (a.norm_squared() - r0 * r0);
    if disc < 0.0 {
        return false;
    }
    let sq = disc.sqrt();
    let (s1, s2) = ((-ad - sq) / dd, (-ad + sq) / dd);
    let pieces = [(s1, s2.min(0.0)), (s1.max(1.0), s2)];
    const SAMPLES: usize = 257;
    for (lo, hi) in pieces {
        if lo > hi {
            continue;
        }
        for k in 0..SAMPLES {
            let s = lo + (hi - lo) * k as f64 / (SAMPLES - 1) as f64;
            let y = a + d * s;
            let n = y.norm();
            if n > 0.0 && n <= r0 && domain.contains(&(y / n)) {
                return true;
            }
        }
    }
    false
}

pub fn validate(config: &ProblemConfig) -> Result<ValidationReport> {
    let rule = config.rule()?;
    validate_on(config, &rule)
}

/// `validate` on a prebuilt rule.
pub fn validate_on(config: &ProblemConfig, rule: &QuadratureRule) -> Result<ValidationReport> {
    let regime = config.regime();
    let (k, eps) = (config.medium.kappa, config.margin.epsilon);
    let t = &config.targets;
    let m = t.len();
    if config.b1.is_nan() || config.r0.is_nan() {
        return Err(Error::invalid("b1 and r0 must be numbers"));
    }
    let mut checks = Vec::new();
    let mut warnings = Vec::new();
    let nodes = rule.nodes();

    let dirs: Vec<Vec3> = t.points.iter().map(|p| p.normalize()).collect();
    let min_cos: Vec<f64> = dirs
        .iter()
        .map(|u| nodes.iter().map(|x| x.dot(u)).fold(f64::INFINITY, f64::min))
        .collect();
    let inf_cos = min_cos.iter().copied().fold(f64::INFINITY, f64::min);
    let p_norms: Vec<f64> = t.points.iter().map(|p| p.norm()).collect();
    let inf_p = p_norms.iter().copied().fold(f64::INFINITY, f64::min);
    let sup_p = p_norms.iter().copied().fold(0.0, f64::max);

    let (a0, a1, a2, a3, a4, a5) = match regime {
        Regime::Mild => ("B0-1", "B1", "B2", "B3", "B4", "B5"),
        _ => ("A0-1", "A1", "A2", "A3", "A4", "A5"),
    };
    let a02 = if regime == Regime::Mild { "B0-2" } else { "A0-2" };

    // (A1)
    match config.density.validate() {
        Ok(()) => push(&mut checks, a1, true, format!("inf f = {}", config.density.floor())),
        Err(e) => push(&mut checks, a1, false, e.to_string()),
    }
    // (A2): targets and weights were checked on construction
    push(&mut checks, a2, m >= 1, format!("{m} targets with positive weights"));
    if m >= 2 {
        warnings.push(format!(
            "({a3}) no quantitative separation threshold between P_1 and the other targets; \
             min distance {:.6e}",
            (1..m)
                .map(|j| (t.points[j] - t.points[0]).norm())
                .fold(f64::INFINITY, f64::min)
        ));
    }

    // cosine window and C_ε
    let c_eps = match fresnel::reflectance_bound(&config.medium, &config.margin) {
        Ok(c) => c,
        Err(e) => {
            push(&mut checks, a4, false, e.to_string());
            f64::NAN
        }
    };
    if regime != Regime::Critical {
        let floor = config.medium.cosine_floor() + eps;
        push(
            &mut checks,
            a4,
            inf_cos >= floor,
            format!("inf x·P/|P| = {inf_cos:.12} against {floor:.12}"),
        );
    } else if config.medium.sigma != 1.0 {
        warnings.push(format!(
            "kappa = -1 with sigma = {}: reflectance is taken as zero regardless",
            config.medium.sigma
        ));
    }

    // (A5)
    let integral_f = rule.integrate(|x| config.density.value(x));
    let mu = t.total();
    let surplus_ratio = (1.0 - c_eps) * integral_f / mu;
    push(
        &mut checks,
        a5,
        c_eps < 1.0 && integral_f * (1.0 - c_eps) >= mu,
        format!("(1 - C_eps) int f = {:.12e}, mu = {mu:.12e}", (1.0 - c_eps) * integral_f),
    );

    // (A0-1) / (B0-1)
    match (regime, config.tau) {
        (Regime::Strong, Some(tau)) => {
            let ok_tau = tau > 0.0 && tau < 1.0 - 1.0 / k;
            push(
                &mut checks,
                a0,
                ok_tau && inf_cos >= tau + 1.0 / k,
                format!(
                    "tau = {tau} in (0, {}) and inf x·P/|P| = {inf_cos:.12} >= {:.12}",
                    1.0 - 1.0 / k,
                    tau + 1.0 / k
                ),
            );
            let bound = tau * tau * k * k
                / ((1.0 + 2f64.sqrt()).powi(2) * (1.0 - k).powi(2))
                * inf_p;
            push(
                &mut checks,
                a02,
                config.r0 > 0.0 && config.r0 < bound,
                format!("r0 = {} in (0, {bound:.12})", config.r0),
            );
        }
        (Regime::Mild, Some(tau)) => {
            let ok_tau = tau > 0.0 && tau < 1.0 + k;
            push(
                &mut checks,
                a0,
                ok_tau && inf_cos >= tau - k,
                format!(
                    "tau = {tau} in (0, {}) and inf x·P/|P| = {inf_cos:.12} >= {:.12}",
                    1.0 + k,
                    tau - k
                ),
            );
            let bound = tau / (1.0 - k) * inf_p;
            push(
                &mut checks,
                a02,
                config.r0 > 0.0 && config.r0 < bound,
                format!("r0 = {} in (0, {bound:.12})", config.r0),
            );
        }
        (Regime::Critical, tau) => {
            if tau.is_some() {
                warnings.push("tau has no role when kappa = -1 and is ignored".into());
            }
            push(
                &mut checks,
                "r0",
                config.r0 > 0.0 && config.r0 < inf_p,
                format!("r0 = {} in (0, {inf_p:.12})", config.r0),
            );
        }
        (_, None) => push(&mut checks, a0, false, "tau is required".into()),
    }
    // half-line condition of (A0-2)/(B0-2)
    let mut conflict = None;
    'outer: for i in 0..m {
        for j in i + 1..m {
            if half_line_conflict(&config.domain, config.r0, &t.points[i], &t.points[j]) {
                conflict = Some((i, j));
                break 'outer;
            }
        }
    }
    push(
        &mut checks,
        a02,
        conflict.is_none(),
        match conflict {
            Some((i, j)) => format!("a half-line from the cone meets P_{} and P_{}", i + 1, j + 1),
            None => "no half-line from the cone meets two targets".into(),
        },
    );

    // anchor parameter
    let b1 = config.b1;
    let p1 = p_norms[0];
    match regime {
        Regime::Strong => {
            let ok = b1 > k * p1 && b1 < p1;
            push(&mut checks, "b1", ok, format!("b1 = {b1} in ({}, {p1})", k * p1));
            let alpha = -k * ((k - 1.0) / (k + 1.0)).sqrt() * sup_p;
            if !(k * p1 + alpha <= b1 && b1 < p1) {
                warnings.push(format!(
                    "b1 = {b1} is outside the anchor window [{:.12}, {p1}) of the existence \
                     theorem{}; proceeding since the initial state is verified directly",
                    k * p1 + alpha,
                    if k * p1 + alpha >= p1 { ", which is empty here" } else { "" }
                ));
            }
            if ok {
                let cut = ovals::support_cut_raw(k, p1, b1);
                push(
                    &mut checks,
                    "support",
                    min_cos[0] >= cut,
                    format!("inf x·P_1/|P_1| = {:.12} against I(P_1, b1) = {cut:.12}", min_cos[0]),
                );
            }
        }
        Regime::Mild => {
            let hi = k * p1 + config.r0 * (1.0 + k);
            push(
                &mut checks,
                "b1",
                b1 > k * p1 && b1 <= hi,
                format!("b1 = {b1} in ({}, {hi:.12}]", k * p1),
            );
        }
        Regime::Critical => {
            push(&mut checks, "b1", b1.abs() < p1, format!("|b1| = {} < {p1}", b1.abs()));
            let smin = min_cos[0] * p1;
            push(
                &mut checks,
                "support",
                smin > b1,
                format!("inf x·P_1 = {smin:.12} > b1 = {b1}"),
            );
        }
    }
    // the anchor sheet alone must fit inside the cone C_{r₀}
    if checks.iter().all(|c| c.passed) {
        let state = anchor_only(config)?;
        let mut hmax = 0.0f64;
        for x in &nodes {
            match state.radius(0, x) {
                Ok(h) => hmax = hmax.max(h),
                Err(e) => {
                    hmax = f64::NAN;
                    warnings.push(format!("anchor sheet: {e}"));
                    break;
                }
            }
        }
        push(
            &mut checks,
            "r0",
            hmax <= config.r0,
            format!("max h(x, P_1, b1) = {hmax:.12} against r0 = {}", config.r0),
        );
    }

    Ok(ValidationReport {
        regime,
        c_eps,
        mu,
        integral_f,
        surplus_ratio,
        inf_cos,
        checks,
        warnings,
    })
}

fn anchor_only(config: &ProblemConfig) -> Result<RefractorState> {
    let t = &config.targets;
    let one = TargetSpec::new(vec![t.points[0]], vec![t.weights[0]])?;
    RefractorState::new(config.medium, one, vec![config.b1], config.tie_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

/// Parameter range for target j given a lower radius estimate.
///
/// κ < −1: [C(1−κ) + κ|P|, √(κ²(|P|² − C²) + C²)].
/// Otherwise: [C(1+κ) + κ|P|, κ|P| + (1−κ)r₀].
/// Both intersected with the admissible range.
pub fn bracket_b(config: &ProblemConfig, j: usize, c_est: f64) -> Result<Bracket> {
    if !(c_est > 0.0) {
        return Err(Error::invalid("radius estimate must be positive"));
    }
    let k = config.medium.kappa;
    let p = config.targets.points[j].norm();
    let adm = ovals::admissible_b(p, k)?;
    let (lo, hi) = match config.regime() {
        Regime::Strong => (
            c_est * (1.0 - k) + k * p,
            (k * k * (p * p - c_est * c_est) + c_est * c_est).max(0.0).sqrt(),
        ),
        _ => (c_est * (1.0 + k) + k * p, k * p + (1.0 - k) * config.r0),
    };
    let (lo, hi) = (lo.max(adm.lo), hi.min(adm.hi));
    if !(lo < hi) {
        return Err(Error::Infeasible(format!(
            "empty parameter bracket for target {}: [{lo}, {hi}]",
            j + 1
        )));
    }
    Ok(Bracket { lo, hi })
}

/// Range that provably holds every parameter whose sheet is active somewhere
/// when C ≤ ρ ≤ r₀.
///
/// κ < −1: |b| ≤ √(κ²(|P|² − C²) + C²) from h ≤ h_max, and b ≤ κ|P| + (1−κ)r₀
/// from h_min ≤ r₀. The lower end of `bracket_b` rests on a distance bound
/// multiplied by κ < 0 with the inequality kept, and solved configurations
/// do fall below it. Otherwise this is `bracket_b`.
pub fn parameter_range(config: &ProblemConfig, j: usize, c_est: f64) -> Result<Bracket> {
    if config.regime() != Regime::Strong {
        return bracket_b(config, j, c_est);
    }
    if !(c_est > 0.0) {
        return Err(Error::invalid("radius estimate must be positive"));
    }
    let k = config.medium.kappa;
    let p = config.targets.points[j].norm();
    let adm = ovals::admissible_b(p, k)?;
    let s = (k * k * (p * p - c_est * c_est) + c_est * c_est).max(0.0).sqrt();
    let lo = (-s).max(adm.lo);
    let hi = s.min(k * p + (1.0 - k) * config.r0).min(adm.hi);
    if !(lo < hi) {
        return Err(Error::Infeasible(format!(
            "empty parameter range for target {}: [{lo}, {hi}]",
            j + 1
        )));
    }
    Ok(Bracket { lo, hi })
}

/// Sheet parameters with only the anchor active.
///
/// κ < −1: b_j puts max h_j at or below min h_1, so sheet j sits under the
/// anchor everywhere. −1 < κ < 0: b_j = (τ − κ)|P_j|. κ = −1: b_j = 2r₀ − |P_j|
/// so that h_j ≥ r₀ ≥ h_1.
pub fn initial_b(config: &ProblemConfig, rule: &QuadratureRule) -> Result<Vec<f64>> {
    let k = config.medium.kappa;
    let t = &config.targets;
    let m = t.len();
    let mut b = vec![config.b1; m];
    if m == 1 {
        return Ok(b);
    }
    let anchor = anchor_only(config)?;
    let c1 = (0..rule.len())
        .map(|i| anchor.radius(0, &rule.node(i)))
        .try_fold(f64::INFINITY, |a, h| h.map(|h| a.min(h)))?;
    for j in 1..m {
        let p = t.points[j].norm();
        b[j] = match config.regime() {
            Regime::Strong => {
                let safe = -(k * k * p * p - (k * k - 1.0) * c1 * c1).max(0.0).sqrt();
                let lo = bracket_b(config, j, c1).map(|br| br.lo).unwrap_or(safe);
                // nudge inside the open admissible interval
                safe.min(lo).max(k * p * (1.0 - 1e-12))
            }
            Regime::Mild => {
                let tau = config.tau.ok_or_else(|| Error::invalid("tau is required"))?;
                (tau - k) * p
            }
            Regime::Critical => 2.0 * config.r0 - p,
        };
    }
    Ok(b)
}

pub fn init_state(config: &ProblemConfig) -> Result<RefractorState> {
    let rule = config.rule()?;
    let state = init_state_on(config, &rule)?;
    let g = refractor::measures(&state, &rule, &config.density)?;
    verify_inactive(&g)?;
    Ok(state)
}

fn init_state_on(config: &ProblemConfig, rule: &QuadratureRule) -> Result<RefractorState> {
    let b = initial_b(config, rule)?;
    RefractorState::new(config.medium, config.targets.clone(), b, config.tie_tol)
        .map_err(|e| Error::Infeasible(format!("initial parameters: {e}")))
}

fn verify_inactive(g: &MeasureSummary) -> Result<()> {
    if let Some(j) = (1..g.g.len()).find(|&j| g.g[j] != 0.0) {
        return Err(Error::Infeasible(format!(
            "sheet {} is active in the initial state (G = {:e})",
            j + 1,
            g.g[j]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateStep {
    pub target: usize,
    pub b: f64,
    pub g: f64,
    pub bisections: usize,
    /// Accepted b lies inside both `bracket_b` and the admissible range.
    pub in_bracket: bool,
    /// Accepted b lies inside `parameter_range`.
    pub in_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub sweep: usize,
    pub max_residual: f64,
    pub steps: Vec<CoordinateStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub b: Vec<f64>,
    /// Measures the solver drives to the targets.
    pub g: Vec<f64>,
    /// Whether `g` splits cut cells; `g_node` always counts whole cells.
    pub resolved: bool,
    pub g_node: Vec<f64>,
    pub residuals: Vec<f64>,
    pub anchor_surplus: f64,
    pub max_residual: f64,
    pub tolerance: f64,
    pub mu: f64,
    pub sweeps: usize,
    pub history: Vec<Sweep>,
    /// min ρ over nodes.
    pub c1: f64,
    pub rho_max: f64,
    pub r0: f64,
    pub ties: usize,
    pub nodes: usize,
    /// Fraction of sweeps whose residual did not grow.
    pub monotone_fraction: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Solver output: the report and the final state.
#[derive(Debug, Clone)]
pub struct Solution {
    pub report: SolveReport,
    pub state: RefractorState,
}

/// Energy delivered to target j over candidate nodes for a trial b.
struct Probe<'a> {
    state: &'a RefractorState,
    cache: &'a NodeCache,
    j: usize,
    other: Vec<f64>,
    lower: Vec<f64>,
    cand: Vec<u32>,
    resolved: bool,
    // per-node (h_j, margin, owned) valid when stamp matches the evaluation
    memo: Vec<(f64, f64, bool)>,
    stamp: Vec<u32>,
    listed: Vec<u32>,
    epoch: u32,
}

impl Probe<'_> {
    fn at(&mut self, b: f64, p: usize) -> Result<(f64, f64, bool)> {
        if self.stamp[p] == self.epoch {
            return Ok(self.memo[p]);
        }
        let s = self.state;
        let h = s.radius_with(self.j, b, &self.cache.nodes[p])?;
        let v = (
            h,
            refractor::margin(h, self.other[p], s.envelope),
            wins(h, self.other[p], self.lower[p], s.envelope, s.tie_tol),
        );
        self.memo[p] = v;
        self.stamp[p] = self.epoch;
        Ok(v)
    }

    /// Nodes won at b under the whole-cell rule.
    fn won_nodes(&self, b: f64) -> Result<Vec<u32>> {
        let s = self.state;
        let mut won = Vec::with_capacity(self.cand.len());
        for &i in &self.cand {
            let h = s.radius_with(self.j, b, &self.cache.nodes[i as usize])?;
            let i = i as usize;
            if wins(h, self.other[i], self.lower[i], s.envelope, s.tie_tol) {
                won.push(i as u32);
            }
        }
        Ok(won)
    }

    /// G_j(b) and the nodes won at b.
    fn eval(&mut self, b: f64) -> Result<(f64, Vec<u32>)> {
        let s = self.state;
        let mut g = 0.0;
        let mut won = Vec::with_capacity(self.cand.len());
        if !self.resolved {
            for &i in &self.cand {
                let i = i as usize;
                let x = &self.cache.nodes[i];
                let h = s.radius_with(self.j, b, x)?;
                if wins(h, self.other[i], self.lower[i], s.envelope, s.tie_tol) {
                    g += self.cache.wf[i] * s.transmission_given(self.j, x, h)?;
                    won.push(i as u32);
                }
            }
            return Ok((g, won));
        }
        self.epoch += 1;
        let rule = &self.cache.rule;
        // cells that can hold a share: candidates and their neighbours
        let mut cells = Vec::with_capacity(self.cand.len() * 2);
        let epoch = self.epoch;
        for &i in &self.cand {
            for k in std::iter::once(i as usize).chain(rule.chart_neighbors(i as usize).map(|c| c.index)) {
                if self.listed[k] != epoch {
                    self.listed[k] = epoch;
                    cells.push(k as u32);
                }
            }
        }
        cells.sort_unstable();
        for &i in &cells {
            let i = i as usize;
            let (h, d0, own) = self.at(b, i)?;
            let mut st = refractor::Stencil::default();
            for c in rule.chart_neighbors(i) {
                let (_, d, o) = self.at(b, c.index)?;
                st.push(c.du, c.dphi, d, o);
            }
            let share = refractor::cell_share(rule, i, d0, own, &st);
            if share > 0.0 {
                let x = &self.cache.nodes[i];
                g += share * self.cache.wf[i] * s.transmission_given(self.j, x, h)?;
            }
            if own {
                won.push(i as u32);
            }
        }
        Ok((g, won))
    }
}

struct Solver<'a> {
    config: &'a ProblemConfig,
    state: RefractorState,
    cache: NodeCache,
    tol: f64,
    /// min over nodes of x·P_j/|P_j|
    min_cos: Vec<f64>,
    /// size of each coordinate's last move, seeds the next search
    last_db: Vec<f64>,
}

impl Solver<'_> {
    fn rho_min(&self) -> f64 {
        let m = self.state.m();
        let env = self.state.envelope;
        (0..self.cache.len())
            .map(|i| {
                let row = &self.cache.h[i * m..(i + 1) * m];
                match env {
                    Envelope::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Envelope::Min => row.iter().copied().fold(f64::INFINITY, f64::min),
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Search interval for b_j: (lo, hi, range) with the W side first.
    fn interval(&self, j: usize, c_est: f64) -> Result<(f64, f64, Bracket)> {
        let k = self.config.medium.kappa;
        let p = self.state.p_norm(j);
        let cur = self.state.b[j];
        let br = parameter_range(self.config, j, c_est)?;
        match self.config.regime() {
            Regime::Strong => {
                // the cut itself is grazing incidence at the extreme node
                let cut = ovals::b_for_support_cut(k, p, self.min_cos[j]) - 1e-9 * p;
                let tau = self.config.tau.unwrap_or(1.0 - 1.0 / k);
                let w_hi = (tau + 1.0 / k) * p;
                let hi = br.hi.min(cut).min(w_hi).min(p * (1.0 - 1e-12));
                Ok((cur.max(br.lo).min(hi), hi, br))
            }
            _ => {
                let floor = if self.config.regime() == Regime::Critical {
                    -p * (1.0 - 1e-9)
                } else {
                    k * p * (1.0 - 1e-12)
                };
                let lo = br.lo.max(floor);
                Ok((lo.min(cur), cur.min(br.hi).max(lo), br))
            }
        }
    }

    fn step(&mut self, j: usize, c_est: f64) -> Result<CoordinateStep> {
        let g_target = self.config.targets.weights[j];
        let inner = 0.25 * self.tol;
        let b_tol = self.config.b_tol(j);
        let (lo, hi, br) = self.interval(j, c_est)?;
        let (other, lower) = self.cache.rivals(&self.state, j);
        // G_j grows with b under max, shrinks under min
        let increasing = self.state.envelope == Envelope::Max;
        let (start, limit) = if increasing { (lo, hi) } else { (hi, lo) };
        let cur = self.state.b[j];
        let n = self.cache.len();
        let mut probe = Probe {
            state: &self.state,
            cache: &self.cache,
            j,
            other,
            lower,
            cand: (0..n as u32).collect(),
            resolved: self.config.resolve_boundaries,
            memo: vec![(0.0, 0.0, false); n],
            stamp: vec![0; n],
            listed: vec![0; n],
            epoch: 0,
        };
        let all: Vec<u32> = (0..n as u32).collect();
        // G_j at b with candidates taken from a whole-cell pass over every node
        let fresh = |probe: &mut Probe, b: f64| -> Result<(f64, Vec<u32>)> {
            probe.cand = all.clone();
            if probe.resolved {
                probe.cand = probe.won_nodes(b)?;
            }
            probe.eval(b)
        };
        let (mut safe, mut g_safe) = (start, fresh(&mut probe, start)?.0);
        if g_safe > g_target + inner && start != cur {
            // the bracket end overshoots; stay at the current value
            safe = cur;
            g_safe = fresh(&mut probe, cur)?.0;
        }
        let mut bisections = 0;
        let (b, g) = if g_safe >= g_target - inner {
            (safe, g_safe)
        } else {
            // hunt outward from the current value, step growing fourfold
            let span = limit - safe;
            let mut step = if self.last_db[j] > 0.0 {
                self.last_db[j].copysign(span)
            } else {
                span / 256.0
            };
            let (over, g_over) = loop {
                let trial = if (safe + step - limit) * span.signum() >= 0.0 {
                    limit
                } else {
                    safe + step
                };
                let (g_t, won) = fresh(&mut probe, trial)?;
                if g_t >= g_target - inner {
                    probe.cand = won;
                    break (trial, g_t);
                }
                if trial == limit {
                    return Err(Error::BracketExhausted {
                        target: j + 1,
                        detail: format!(
                            "G_{} reaches only {g_t:.12e} of {g_target:.12e} at b = {limit}",
                            j + 1
                        ),
                    });
                }
                safe = trial;
                g_safe = g_t;
                step *= 4.0;
            };
            if g_over <= g_target + inner {
                (over, g_over)
            } else {
                // invariant: G(safe) < g − inner, G(over) > g + inner
                let (mut over, mut g_over) = (over, g_over);
                let mut b_acc = None;
                // Illinois regula falsi; the end that keeps its place gets its
                // residual halved, and a plain midpoint is used when the
                // interpolant lands too close to either end
                let (mut r_safe, mut r_over) = (g_safe - g_target, g_over - g_target);
                let mut side = 0i8;
                while (over - safe).abs() > b_tol {
                    let t = r_safe / (r_safe - r_over);
                    let t = if t.is_finite() && (0.02..=0.98).contains(&t) { t } else { 0.5 };
                    let mid = safe + t * (over - safe);
                    if mid == safe || mid == over {
                        break;
                    }
                    bisections += 1;
                    let (g_mid, won) = probe.eval(mid)?;
                    if (g_mid - g_target).abs() <= inner {
                        b_acc = Some((mid, g_mid));
                        break;
                    }
                    if g_mid < g_target {
                        safe = mid;
                        g_safe = g_mid;
                        r_safe = g_mid - g_target;
                        if side == -1 {
                            r_over *= 0.5;
                        }
                        side = -1;
                    } else {
                        // far end moves in: shrink the candidate set
                        probe.cand = won;
                        over = mid;
                        g_over = g_mid;
                        r_over = g_mid - g_target;
                        if side == 1 {
                            r_safe *= 0.5;
                        }
                        side = 1;
                    }
                }
                // the overshooting end is also in the feasible set if close enough
                b_acc.unwrap_or(
                    if g_over <= g_target + inner && g_over - g_target < g_target - g_safe {
                        (over, g_over)
                    } else {
                        (safe, g_safe)
                    },
                )
            }
        };
        self.last_db[j] = (b - cur).abs();
        let adm = ovals::admissible_b(self.state.p_norm(j), self.config.medium.kappa)?;
        let in_range = b >= br.lo && b <= br.hi && adm.contains(b);
        let in_bracket = bracket_b(self.config, j, c_est)
            .is_ok_and(|br| b >= br.lo && b <= br.hi && adm.contains(b));
        if b != cur {
            self.state.set_b(j, b)?;
            self.cache.update(&self.state, j)?;
        }
        Ok(CoordinateStep {
            target: j + 1,
            b,
            g,
            bisections,
            in_bracket,
            in_range,
        })
    }
}

pub fn solve_discrete(config: &ProblemConfig) -> Result<Solution> {
    let rule = config.rule()?;
    solve_on(config, &rule)
}

/// `solve_discrete` on a prebuilt rule.
pub fn solve_on(config: &ProblemConfig, rule: &QuadratureRule) -> Result<Solution> {
    let v = validate_on(config, rule)?;
    v.ensure()?;
    let state = init_state_on(config, rule)?;
    let cache = NodeCache::new(&state, rule, &config.density)?;
    let init = cache.summary(&state)?;
    verify_inactive(&init)?;

    let m = config.targets.len();
    let mu = config.targets.total();
    let tol = config.tolerances.measure_tol * mu;
    let nodes = cache.len();
    let min_cos = config
        .targets
        .points
        .iter()
        .map(|p| {
            let u = p.normalize();
            cache.nodes.iter().map(|x| x.dot(&u)).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut solver = Solver {
        config,
        state,
        cache,
        tol,
        min_cos,
        last_db: vec![0.0; m],
    };
    let residual_of = |g: &[f64]| {
        (1..m)
            .map(|j| (g[j] - config.targets.weights[j]).abs())
            .fold(0.0, f64::max)
    };
    let energies = |s: &Solver, node: &MeasureSummary| -> Result<Vec<f64>> {
        if config.resolve_boundaries {
            s.cache.resolved(&s.state)
        } else {
            Ok(node.g.clone())
        }
    };
    let mut g = energies(&solver, &init)?;
    let mut summary = init;
    let mut history = Vec::new();
    let mut status = SolveStatus::NotConverged;
    let mut residual = residual_of(&g);
    if m == 1 || residual <= tol {
        status = SolveStatus::Converged;
    }
    let mut sweep = 0;
    while status != SolveStatus::Converged && sweep < config.tolerances.max_outer {
        sweep += 1;
        let mut steps = Vec::with_capacity(m - 1);
        for j in 1..m {
            let c_est = solver.rho_min();
            steps.push(solver.step(j, c_est)?);
        }
        summary = solver.cache.summary(&solver.state)?;
        g = energies(&solver, &summary)?;
        residual = residual_of(&g);
        history.push(Sweep {
            sweep,
            max_residual: residual,
            steps,
        });
        if residual <= tol {
            status = SolveStatus::Converged;
        }
    }
    let monotone = if history.len() > 1 {
        history
            .windows(2)
            .filter(|w| w[1].max_residual <= w[0].max_residual)
            .count() as f64
            / (history.len() - 1) as f64
    } else {
        1.0
    };
    let g1 = config.targets.weights[0];
    let report = SolveReport {
        status,
        b: solver.state.b.clone(),
        residuals: (0..m).map(|j| g[j] - config.targets.weights[j]).collect(),
        anchor_surplus: g[0] - g1,
        g_node: summary.g.clone(),
        resolved: config.resolve_boundaries,
        g: g.clone(),
        max_residual: residual,
        tolerance: tol,
        mu,
        sweeps: sweep,
        history,
        c1: summary.rho_min,
        rho_max: summary.rho_max,
        r0: config.r0,
        ties: summary.ties,
        nodes,
        monotone_fraction: monotone,
    };
    if status == SolveStatus::Converged {
        if report.anchor_surplus < -tol {
            return Err(Error::Infeasible(format!(
                "anchor receives {:.12e}, below g_1 = {g1:.12e}",
                g[0]
            )));
        }
        if !(report.rho_max <= config.r0 && report.c1 > 0.0) {
            return Err(Error::Infeasible(format!(
                "radius range [{}, {}] leaves (0, r0 = {}]",
                report.c1, report.rho_max, config.r0
            )));
        }
    }
    Ok(Solution {
        report,
        state: solver.state,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub ok: bool,
    pub inequalities: Vec<Inequality>,
    pub tolerance: f64,
}

/// Weak-solution check for an atomic target measure.
pub fn verify_weak(
    state: &RefractorState,
    config: &ProblemConfig,
    rule: &QuadratureRule,
) -> Result<Certificate> {
    let node = refractor::measures(state, rule, &config.density)?.g;
    let g = if config.resolve_boundaries {
        refractor::resolved_measures(state, rule, &config.density)?
    } else {
        node.clone()
    };
    let tol = config.tolerances.measure_tol * config.targets.total();
    let w = &config.targets.weights;
    let mut ineq = Vec::new();
    for j in 0..w.len() {
        ineq.push(Inequality {
            name: format!("G_{} >= g_{}", j + 1, j + 1),
            lhs: g[j],
            rhs: w[j] - tol,
            holds: g[j] >= w[j] - tol,
        });
        if j > 0 {
            ineq.push(Inequality {
                name: format!("G_{} <= g_{}", j + 1, j + 1),
                lhs: g[j],
                rhs: w[j] + tol,
                holds: g[j] <= w[j] + tol,
            });
        }
    }
    // whole cells partition the transmitted energy exactly; split cells up to tol
    let total = refractor::total_transmitted(state, rule, &config.density)?;
    let sum: f64 = g.iter().sum();
    let slack = if config.resolve_boundaries { tol } else { 0.0 };
    ineq.push(Inequality {
        name: "sum G_j = transmitted".into(),
        lhs: sum,
        rhs: total,
        holds: (sum - total).abs() <= slack,
    });
    Ok(Certificate {
        ok: ineq.iter().all(|i| i.holds),
        inequalities: ineq,
        tolerance: tol,
    })
}

/// Planar disk patch {c + a e1 + b e2 : a² + b² ≤ R²} carrying a uniform
/// target density of total mass `mass`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskPatch {
    pub center: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub radius: f64,
    pub mass: f64,
}

impl DiskPatch {
    pub fn point(&self, a: f64, b: f64) -> Vec3 {
        self.center + self.e1 * a + self.e2 * b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadonConfig {
    /// Medium, source, anchor parameters and tolerances; its targets are replaced.
    pub base: ProblemConfig,
    pub patch: DiskPatch,
    /// Anchor P₀ in chart coordinates.
    pub anchor: (f64, f64),
    pub levels: u32,
    /// Fine samples per side of each finest-level box.
    pub samples: usize,
    /// Closed chart box [a0, a1] × [b0, b1] whose received energy is tracked.
    pub test_cell: ((f64, f64), (f64, f64)),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: u32,
    pub cells: usize,
    pub cell_diameter: f64,
    pub total_mass: f64,
    pub mass_error: f64,
    /// sup over nodes of |ρ_l − ρ_{l−1}|; absent at the first level.
    pub sup_diff: Option<f64>,
    pub test_cell_measure: f64,
    pub sweeps: usize,
    pub max_residual: f64,
    pub anchor_surplus: f64,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub levels: Vec<LevelReport>,
    pub sup_diffs_decreasing: bool,
    /// Test-cell measure never rises by more than the tolerance between levels.
    pub test_cell_non_increasing: bool,
    pub test_cell_tolerance: f64,
}

/// Atoms of the patch at level l: 2^(l−1) boxes per side of the bounding square.
/// Returns (points, masses) with the anchor first.
pub fn patch_atoms(cfg: &RadonConfig, level: u32) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let p = &cfg.patch;
    if level < 1 || level > cfg.levels {
        return Err(Error::invalid(format!("refinement level {level} out of range")));
    }
    let r = p.radius;
    let (ax, ay) = cfg.anchor;
    if ax * ax + ay * ay > r * r {
        return Err(Error::Infeasible("anchor lies outside the patch".into()));
    }
    let per = 1usize << (level - 1);
    let fine = (1usize << (cfg.levels - 1)) * cfg.samples;
    let sub = fine / per;
    let h = 2.0 * r / fine as f64;
    // (mass count, Σa, Σb) per box, in box order
    let mut acc = vec![(0usize, 0.0, 0.0); per * per];
    let mut inside = 0usize;
    for ix in 0..fine {
        let a = -r + (ix as f64 + 0.5) * h;
        for iy in 0..fine {
            let b = -r + (iy as f64 + 0.5) * h;
            if a * a + b * b <= r * r {
                let c = &mut acc[(ix / sub) * per + iy / sub];
                c.0 += 1;
                c.1 += a;
                c.2 += b;
                inside += 1;
            }
        }
    }
    let unit = p.mass / inside as f64;
    let cell = |v: f64| (((v + r) / (2.0 * r) * per as f64).floor() as usize).min(per - 1);
    let anchor_box = cell(ax) * per + cell(ay);
    if acc[anchor_box].0 == 0 {
        return Err(Error::Infeasible("anchor box carries no mass".into()));
    }
    let mut pts = vec![p.point(ax, ay)];
    let mut mass = vec![acc[anchor_box].0 as f64 * unit];
    for (k, &(n, sa, sb)) in acc.iter().enumerate() {
        // zero-mass boxes are dropped
        if k != anchor_box && n > 0 {
            pts.push(p.point(sa / n as f64, sb / n as f64));
            mass.push(n as f64 * unit);
        }
    }
    Ok((pts, mass))
}

/// Dyadic refinement of a continuous target density down to atomic problems.
pub fn refine_radon(cfg: &RadonConfig) -> Result<RefinementReport> {
    let rule = cfg.base.rule()?;
    let f = &cfg.base.density;
    let ((a0, a1), (b0, b1)) = cfg.test_cell;
    let p = &cfg.patch;
    let in_test = |x: &Vec3| {
        let d = x - p.center;
        let (a, b) = (d.dot(&p.e1), d.dot(&p.e2));
        a >= a0 && a <= a1 && b >= b0 && b <= b1
    };
    let mut levels = Vec::new();
    let mut prev_rho: Option<Vec<f64>> = None;
    for l in 1..=cfg.levels {
        let (pts, mass) = patch_atoms(cfg, l)?;
        let total: f64 = mass.iter().sum();
        let mut config = cfg.base.clone();
        config.targets = TargetSpec::new(pts.clone(), mass)?;
        let sol = solve_on(&config, &rule)?;
        if !sol.report.converged() {
            return Err(Error::NoConvergence {
                sweeps: sol.report.sweeps,
                residual: sol.report.max_residual,
            });
        }
        let cache = NodeCache::new(&sol.state, &rule, f)?;
        let rho = cache.rho(&sol.state);
        let sup_diff = prev_rho.as_ref().map(|q| {
            rho.iter()
                .zip(q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
        let test: f64 = (0..pts.len())
            .filter(|&j| in_test(&pts[j]))
            .map(|j| sol.report.g[j])
            .sum();
        let r = 2.0 * p.radius * 2f64.sqrt() / (1u64 << (l - 1)) as f64;
        levels.push(LevelReport {
            level: l,
            cells: pts.len(),
            cell_diameter: r,
            total_mass: total,
            mass_error: (total - p.mass).abs(),
            sup_diff,
            test_cell_measure: test,
            sweeps: sol.report.sweeps,
            max_residual: sol.report.max_residual,
            anchor_surplus: sol.report.anchor_surplus,
            b: sol.report.b,
        });
        prev_rho = Some(rho);
    }
    let diffs: Vec<f64> = levels.iter().filter_map(|l| l.sup_diff).collect();
    let tol = 1e-3 * p.mass;
    Ok(RefinementReport {
        sup_diffs_decreasing: diffs.windows(2).all(|w| w[1] < w[0]),
        test_cell_non_increasing: levels
            .windows(2)
            .all(|w| w[1].test_cell_measure <= w[0].test_cell_measure + tol),
        test_cell_tolerance: tol,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{fixture, symmetric_pair, FixtureSpec};

    fn with_targets(kappa: f64, points: Vec<Vec3>) -> ProblemConfig {
        let mut c = fixture(&FixtureSpec::new(kappa, 2, 1)).unwrap();
        let w = vec![0.1; points.len()];
        c.targets = TargetSpec::new(points, w).unwrap();
        c
    }

    #[test]
    fn bracket_examples() {
        let c = with_targets(-2.0, vec![Vec3::z(), Vec3::z()]);
        let br = bracket_b(&c, 1, 0.2).unwrap();
        assert!((br.lo + 1.4).abs() < 1e-15);
        assert_eq!(br.hi, 1.0);

        let mut c = with_targets(-0.5, vec![Vec3::z(), Vec3::z()]);
        c.r0 = 0.3;
        let br = bracket_b(&c, 1, 0.1).unwrap();
        assert!((br.lo + 0.45).abs() < 1e-15);
        assert!((br.hi + 0.05).abs() < 1e-15);
    }

    #[test]
    fn strong_lower_bracket_end_excludes_a_solution() {
        let mut c = symmetric_pair(-1.5, 5).unwrap();
        c.tolerances.measure_tol = 1e-3;
        let s = solve_discrete(&c).unwrap();
        let r = &s.report;
        assert!(r.converged());
        assert!(r.g[1] > 0.0);
        let lo = bracket_b(&c, 1, r.c1).unwrap().lo;
        let range = parameter_range(&c, 1, r.c1).unwrap();
        assert!(r.b[1] < lo, "{} vs {lo}", r.b[1]);
        assert!(range.lo <= r.b[1] && r.b[1] <= range.hi);
    }

    #[test]
    fn strong_range_example() {
        let mut c = with_targets(-2.0, vec![Vec3::z(), Vec3::z()]);
        c.r0 = 0.9;
        let br = parameter_range(&c, 1, 0.2).unwrap();
        assert!((br.lo + 3.88f64.sqrt()).abs() < 1e-15);
        assert!((br.hi - 0.7).abs() < 1e-15);
        c.r0 = 0.005;
        assert!(parameter_range(&c, 1, 0.2).is_err());
        c.r0 = 0.5;
        let br = parameter_range(&c, 1, 0.9).unwrap();
        assert!((br.lo + 0.19f64.mul_add(4.0, 0.81).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_radius_opens_the_lower_end() {
        let c = with_targets(-2.0, vec![Vec3::z(), Vec3::z()]);
        let br = bracket_b(&c, 1, 1e-300).unwrap();
        assert_eq!(br.lo, -2.0);
        assert!(bracket_b(&c, 1, 0.0).is_err());
    }

    #[test]
    fn surplus_is_required() {
        let mut c = fixture(&FixtureSpec::new(-1.5, 3, 2)).unwrap();
        let area = c.domain.exact_measure();
        let n = c.targets.len() as f64;
        c.targets.weights = vec![area / n; c.targets.len()];
        let v = validate(&c).unwrap();
        assert_eq!(v.first_failure().unwrap().assumption, "A5");
        let e = solve_discrete(&c).unwrap_err();
        assert!(matches!(e, Error::Assumption { ref assumption, .. } if assumption == "A5"));
    }

    #[test]
    fn critical_unit_impedance_reflects_nothing() {
        let c = fixture(&FixtureSpec::new(-1.0, 2, 5)).unwrap();
        let v = validate(&c).unwrap();
        assert_eq!(v.c_eps, 0.0);
        assert_eq!(v.surplus_ratio, v.integral_f / v.mu);
    }

    #[test]
    fn initial_state_has_only_the_anchor() {
        for k in [-1.5, -0.5, -1.0] {
            let c = symmetric_pair(k, 4).unwrap();
            let rule = c.rule().unwrap();
            let s = init_state(&c).unwrap();
            let g = refractor::measures(&s, &rule, &c.density).unwrap();
            assert_eq!(g.g[1], 0.0);
            assert_eq!(g.g[0], refractor::total_transmitted(&s, &rule, &c.density).unwrap());
            if k == -0.5 {
                for x in rule.nodes() {
                    assert!(s.radius(0, &x).unwrap() <= s.radius(1, &x).unwrap());
                }
            }
        }
    }

    #[test]
    fn single_target_is_solved_immediately() {
        let mut c = fixture(&FixtureSpec::new(-1.5, 1, 3)).unwrap();
        c.quadrature_level = 3;
        let s = solve_discrete(&c).unwrap();
        assert!(s.report.converged());
        assert_eq!(s.report.sweeps, 0);
        assert_eq!(s.report.b, vec![c.b1]);
        let rule = c.rule().unwrap();
        assert!(verify_weak(&s.state, &c, &rule).unwrap().ok);
    }

    #[test]
    fn symmetric_pair_converges_and_certifies() {
        for k in [-1.5, -0.5] {
            let mut c = symmetric_pair(k, 5).unwrap();
            c.tolerances.measure_tol = 1e-3;
            let rule = c.rule().unwrap();
            let s = solve_on(&c, &rule).unwrap();
            let r = &s.report;
            assert!(r.converged(), "{k}");
            assert_eq!(r.b[0], c.b1);
            let steps: Vec<_> = r.history.iter().flat_map(|w| &w.steps).collect();
            assert!(steps.iter().all(|st| st.in_range));
            if k > -1.0 {
                assert!(steps.iter().all(|st| st.in_bracket));
            }
            let cert = verify_weak(&s.state, &c, &rule).unwrap();
            assert!(cert.ok, "{k}: {cert:?}");

            // push sheet 2 towards less energy
            let mut st = s.state.clone();
            let db = if k < -1.0 { -1e-3 } else { 1e-3 };
            st.set_b(1, st.b[1] + db).unwrap();
            let cert = verify_weak(&st, &c, &rule).unwrap();
            assert!(!cert.ok);
            let bad: Vec<_> = cert.inequalities.iter().filter(|i| !i.holds).collect();
            assert_eq!(bad[0].name, "G_2 >= g_2");
        }
    }

    #[test]
    fn node_rule_agrees_with_resolved_rule() {
        let mut c = symmetric_pair(-1.5, 5).unwrap();
        c.tolerances.measure_tol = 1e-3;
        let a = solve_discrete(&c).unwrap().report;
        c.resolve_boundaries = false;
        let b = solve_discrete(&c).unwrap().report;
        assert!(!b.resolved);
        assert!((a.b[1] - b.b[1]).abs() < 1e-2);
    }
}
