//! JSON configuration files and their conversion to solver input.
//!
//! Target coordinates are rescaled on load so that the nearest target sits at
//! distance 1. Lengths (b1, r0, b_tol) follow the same scale; the factor is
//! echoed in every report.

use negrefract::fresnel::{AdmissibilityMargin, MediumPair};
use negrefract::geometry::make_cap;
use negrefract::solver::{ProblemConfig, Tolerances};
use negrefract::{EmissionDensity, TargetSpec, Vec3};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kappa: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "half")]
    pub alpha_parallel: f64,
    pub dimension: usize,
    pub source: SourceSpec,
    pub epsilon: f64,
    pub targets: Vec<TargetEntry>,
    pub b1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub r0: f64,
    pub quadrature_level: u32,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub seed: u64,
    /// Split quadrature cells cut by trace boundaries.
    #[serde(default = "yes")]
    pub resolve_boundaries: bool,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub axis: Vec<f64>,
    pub half_angle_deg: f64,
    #[serde(default)]
    pub density: DensitySpec,
}

/// `"uniform"` or `{"table": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensitySpec {
    Named(NamedDensity),
    Table(TableSpec),
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec::Named(NamedDensity::Uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedDensity {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    /// Rows [x, y, z, f] (or [x, y, f] in the plane).
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "ToleranceSpec::measure_default")]
    pub measure_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_tol: Option<f64>,
    #[serde(default = "ToleranceSpec::outer_default")]
    pub max_outer: usize,
}

impl ToleranceSpec {
    fn measure_default() -> f64 {
        Tolerances::default().measure_tol
    }

    fn outer_default() -> usize {
        Tolerances::default().max_outer
    }
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            measure_tol: Self::measure_default(),
            b_tol: None,
            max_outer: Self::outer_default(),
        }
    }
}

/// Solver input plus the rescaling applied to it.
#[derive(Debug, Clone)]
pub struct Loaded {
    /// Normalised copy of `file`, in the units the solver sees.
    pub normalized: ConfigFile,
    pub scale: f64,
    pub problem: ProblemConfig,
}

fn parse_error(msg: impl Into<String>) -> CliError {
    CliError::Parse(msg.into())
}

fn point(v: &[f64], dimension: usize, what: &str) -> Result<Vec3, CliError> {
    match (dimension, v.len()) {
        (2, 2) => Ok(Vec3::new(v[0], v[1], 0.0)),
        (_, 3) => Ok(Vec3::new(v[0], v[1], v[2])),
        _ => Err(parse_error(format!(
            "{what}: expected {} components, got {}",
            if dimension == 2 { "2 or 3" } else { "3" },
            v.len()
        ))),
    }
}

fn finite(v: f64, key: &str) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_error(format!("\"{key}\" must be a finite number")))
    }
}

pub fn parse(text: &str) -> Result<ConfigFile, CliError> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| parse_error(e.to_string()))?;
    Ok(file)
}

/// Checks schema-level constraints, rescales, and builds the solver input.
pub fn load(file: ConfigFile) -> Result<Loaded, CliError> {
    if !(finite(file.kappa, "kappa")? < 0.0) {
        return Err(parse_error("\"kappa\" must be negative"));
    }
    if file.dimension != 2 && file.dimension != 3 {
        return Err(parse_error("\"dimension\" must be 2 or 3"));
    }
    if file.targets.is_empty() {
        return Err(parse_error("\"targets\" must not be empty"));
    }
    let n = file.dimension;
    let pts = file
        .targets
        .iter()
        .enumerate()
        .map(|(j, t)| point(&t.p, n, &format!("targets[{j}].P")))
        .collect::<Result<Vec<_>, _>>()?;
    let dist = pts.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min);
    if !(dist > 0.0 && dist.is_finite()) {
        return Err(parse_error("targets must be finite and away from the origin"));
    }
    let scale = 1.0 / dist;

    let mut normalized = file.clone();
    for t in &mut normalized.targets {
        for c in &mut t.p {
            *c *= scale;
        }
    }
    normalized.b1 *= scale;
    normalized.r0 *= scale;
    if let Some(b) = &mut normalized.tolerances.b_tol {
        *b *= scale;
    }
    let problem = build(&normalized)?;
    Ok(Loaded {
        normalized,
        scale,
        problem,
    })
}

fn build(c: &ConfigFile) -> Result<ProblemConfig, CliError> {
    let n = c.dimension;
    let axis = point(&c.source.axis, n, "source.axis")?;
    let domain = make_cap(axis, finite(c.source.half_angle_deg, "half_angle_deg")?.to_radians(), n)?;
    let density = match &c.source.density {
        DensitySpec::Named(NamedDensity::Uniform) => EmissionDensity::uniform(),
        DensitySpec::Table(t) => {
            let width = if n == 2 { 3 } else { 4 };
            let rows = t
                .table
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    if r.len() != width && r.len() != 4 {
                        return Err(parse_error(format!(
                            "source.density.table[{k}]: expected {width} numbers"
                        )));
                    }
                    let (x, f) = r.split_at(r.len() - 1);
                    let x = point(x, n, &format!("source.density.table[{k}]"))?;
                    let norm = x.norm();
                    if !(norm > 0.0) {
                        return Err(parse_error(format!("source.density.table[{k}]: zero direction")));
                    }
                    Ok((x / norm, f[0]))
                })
                .collect::<Result<Vec<_>, _>>()?;
            EmissionDensity::Tabulated(rows)
        }
    };
    density.validate()?;
    let medium = MediumPair::new(c.kappa, c.sigma, c.alpha_parallel)?;
    let margin = AdmissibilityMargin::new(c.epsilon)?;
    let points = c
        .targets
        .iter()
        .enumerate()
        .map(|(j, t)| point(&t.p, n, &format!("targets[{j}].P")))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = c.targets.iter().map(|t| t.g).collect();
    let tol = &c.tolerances;
    if !(tol.measure_tol > 0.0) || tol.b_tol.is_some_and(|b| !(b > 0.0)) {
        return Err(parse_error("tolerances must be positive"));
    }
    Ok(ProblemConfig {
        domain,
        density,
        medium,
        margin,
        targets: TargetSpec::new(points, weights)?,
        b1: finite(c.b1, "b1")?,
        tau: c.tau,
        r0: finite(c.r0, "r0")?,
        tolerances: Tolerances {
            measure_tol: tol.measure_tol,
            b_tol: tol.b_tol,
            max_outer: tol.max_outer,
        },
        quadrature_level: c.quadrature_level,
        tie_tol: negrefract::refractor::DEFAULT_TIE_TOL,
        resolve_boundaries: c.resolve_boundaries,
    })
}

/// A configuration file for a solver input, with target coordinates as given.
pub fn from_problem(p: &ProblemConfig, seed: u64) -> ConfigFile {
    let n = p.domain.dimension;
    let cut = |v: &Vec3| {
        if n == 2 {
            vec![v.x, v.y]
        } else {
            vec![v.x, v.y, v.z]
        }
    };
    let density = match &p.density {
        EmissionDensity::Uniform(v) if *v == 1.0 => DensitySpec::default(),
        EmissionDensity::Uniform(v) => DensitySpec::Table(TableSpec {
            table: vec![{
                let mut r = cut(&p.domain.axis);
                r.push(*v);
                r
            }],
        }),
        EmissionDensity::Tabulated(t) => DensitySpec::Table(TableSpec {
            table: t
                .iter()
                .map(|(x, f)| {
                    let mut r = cut(x);
                    r.push(*f);
                    r
                })
                .collect(),
        }),
    };
    ConfigFile {
        kappa: p.medium.kappa,
        sigma: p.medium.sigma,
        alpha_parallel: p.medium.alpha,
        dimension: n,
        source: SourceSpec {
            axis: cut(&p.domain.axis),
            half_angle_deg: p.domain.half_angle.to_degrees(),
            density,
        },
        epsilon: p.margin.epsilon,
        targets: p
            .targets
            .points
            .iter()
            .zip(&p.targets.weights)
            .map(|(x, g)| TargetEntry { p: cut(x), g: *g })
            .collect(),
        b1: p.b1,
        tau: p.tau,
        r0: p.r0,
        quadrature_level: p.quadrature_level,
        tolerances: ToleranceSpec {
            measure_tol: p.tolerances.measure_tol,
            b_tol: p.tolerances.b_tol,
            max_outer: p.tolerances.max_outer,
        },
        seed,
        resolve_boundaries: p.resolve_boundaries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "kappa": -1.5, "dimension": 3,
        "source": {"axis": [0, 0, 1], "half_angle_deg": 30},
        "epsilon": 0.3,
        "targets": [{"P": [0, 0, 2], "g": 0.5}],
        "b1": -2.6, "tau": 0.5, "r0": 0.2, "quadrature_level": 3
    }"#;

    #[test]
    fn defaults_and_scaling() {
        let l = load(parse(MINIMAL).unwrap()).unwrap();
        assert_eq!(l.scale, 0.5);
        assert_eq!(l.problem.medium.sigma, 1.0);
        assert_eq!(l.problem.medium.alpha, 0.5);
        assert_eq!(l.problem.b1, -1.3);
        assert_eq!(l.problem.r0, 0.1);
        assert_eq!(l.problem.targets.points[0], Vec3::z());
        assert_eq!(l.normalized.targets[0].p, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t = MINIMAL.replace("\"epsilon\"", "\"epsilom\": 1, \"epsilon\"");
        let e = parse(&t).unwrap_err().to_string();
        assert!(e.contains("epsilom"), "{e}");
        let t = MINIMAL.replace("\"half_angle_deg\": 30", "\"half_angle_deg\": 30, \"x\": 1");
        assert!(parse(&t).is_err());
    }

    #[test]
    fn missing_kappa_names_the_key() {
        let t = MINIMAL.replace("\"kappa\": -1.5,", "");
        let e = parse(&t).unwrap_err().to_string();
        assert!(e.contains("kappa"), "{e}");
    }

    #[test]
    fn density_forms() {
        let t = MINIMAL.replace("\"half_angle_deg\": 30", "\"half_angle_deg\": 30, \"density\": \"uniform\"");
        assert_eq!(parse(&t).unwrap().source.density, DensitySpec::default());
        let t = MINIMAL.replace(
            "\"half_angle_deg\": 30",
            "\"half_angle_deg\": 30, \"density\": {\"table\": [[0, 0, 1, 2.0]]}",
        );
        let l = load(parse(&t).unwrap()).unwrap();
        assert_eq!(l.problem.density.value(&Vec3::z()), 2.0);
        let t = MINIMAL.replace("\"half_angle_deg\": 30", "\"half_angle_deg\": 30, \"density\": \"flat\"");
        assert!(parse(&t).is_err());
    }

    #[test]
    fn round_trip_through_problem() {
        let l = load(parse(MINIMAL).unwrap()).unwrap();
        let back = from_problem(&l.problem, 0);
        assert_eq!(back.targets, l.normalized.targets);
        assert_eq!(load(back).unwrap().problem, l.problem);
    }
}
