//! Command-line front end: validate, solve, trace and export refractor
//! problems described by JSON configuration files.
//!
//! Exit codes: 0 success, 2 parse or usage error, 3 failed validation,
//! 4 no convergence, 5 internal error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use negrefract::fresnel::{self, AdmissibilityMargin, MediumPair};
use negrefract::raytrace::{self, AuditReport};
use negrefract::refractor::RefractorState;
use negrefract::scenario::{self, FixtureSpec};
use negrefract::solver::{self, Certificate, SolveReport, ValidationReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod config;
pub mod export;
pub mod output;

use config::{ConfigFile, Loaded};
use output::{csv_row, to_json};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Lib(#[from] negrefract::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Convergence(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Lib(e) if matches!(e, negrefract::Error::InvalidInput(_)) => 2,
            CliError::Lib(e) if e.is_validation() => 3,
            CliError::Lib(e) if e.is_convergence() => 4,
            CliError::Lib(_) | CliError::Io(_) => 5,
        }
    }
}

#[derive(Parser)]
#[command(name = "negrefract", version, about = "Near-field refractor synthesis for negative-index media")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Check every standing assumption of a configuration.
    Validate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for the sheet parameters and write the full report.
    Solve {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the solved parameters for `trace` and `export`.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Leave out wall times so the report is reproducible byte for byte.
        #[arg(long)]
        no_wall_times: bool,
    },
    /// Trace one ray per quadrature node through a solved surface.
    Trace {
        config: PathBuf,
        state: PathBuf,
        /// Per-ray CSV.
        #[arg(long)]
        rays: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fresnel coefficients over the admissible cosine window as CSV.
    FresnelTable {
        #[arg(long, allow_hyphen_values = true)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the solved surface as an OBJ mesh or CSV point list.
    Export {
        config: PathBuf,
        state: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Obj)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a feasible example configuration.
    Example {
        #[arg(long, allow_hyphen_values = true, default_value_t = -1.5)]
        kappa: f64,
        #[arg(long, default_value_t = 2)]
        targets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        level: u32,
        /// Two mirrored targets with equal weights instead of random ones.
        #[arg(long)]
        symmetric: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Obj,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub negrefract: String,
}

impl Versions {
    fn current() -> Self {
        Versions {
            negrefract: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub validate_s: f64,
    pub solve_s: f64,
    pub audit_s: f64,
}

/// Everything `solve` produces. Wall times sit outside the reproducible part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub versions: Versions,
    /// The configuration after rescaling, in solver units.
    pub config: ConfigFile,
    /// Factor applied to input lengths.
    pub scale: f64,
    pub validation: ValidationReport,
    pub solve: SolveReport,
    pub certificate: Certificate,
    pub audit: AuditReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_times: Option<WallTimes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    /// Parameters in solver units.
    pub b: Vec<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub versions: Versions,
    pub scale: f64,
    pub audit: AuditReport,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    to_json(v).map_err(|e| CliError::Io(e.to_string()))
}

fn load(path: &Path) -> Result<Loaded, CliError> {
    let file = config::parse(&read(path)?).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        e => e,
    })?;
    config::load(file)
}

fn load_state(l: &Loaded, path: &Path) -> Result<RefractorState, CliError> {
    let s: StateFile = serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    if s.scale != l.scale {
        return Err(CliError::Usage(format!(
            "state was written for scale {} but the configuration has scale {}",
            s.scale, l.scale
        )));
    }
    let p = &l.problem;
    Ok(RefractorState::new(p.medium, p.targets.clone(), s.b, p.tie_tol)?)
}

fn warn(v: &ValidationReport) {
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config, out } => {
            let l = load(&config)?;
            let v = solver::validate(&l.problem)?;
            warn(&v);
            emit(out.as_deref(), &json(&v)?)?;
            match v.first_failure() {
                Some(c) => Err(CliError::Validation(format!("({}) {}", c.assumption, c.detail))),
                None => Ok(()),
            }
        }
        Command::Solve {
            config,
            out,
            state,
            no_wall_times,
        } => {
            let l = load(&config)?;
            let p = &l.problem;
            let t = Instant::now();
            let rule = p.rule()?;
            let v = solver::validate_on(p, &rule)?;
            warn(&v);
            if let Some(c) = v.first_failure() {
                return Err(CliError::Validation(format!("({}) {}", c.assumption, c.detail)));
            }
            let validate_s = secs(t);
            let t = Instant::now();
            let sol = solver::solve_on(p, &rule)?;
            let solve_s = secs(t);
            let t = Instant::now();
            let certificate = solver::verify_weak(&sol.state, p, &rule)?;
            let audit = raytrace::energy_audit(&sol.state, &rule, &p.density)?;
            let audit_s = secs(t);
            let converged = sol.report.converged();
            let report = ReportFile {
                versions: Versions::current(),
                config: l.normalized.clone(),
                scale: l.scale,
                validation: v,
                solve: sol.report,
                certificate,
                audit,
                wall_times: (!no_wall_times).then_some(WallTimes {
                    validate_s,
                    solve_s,
                    audit_s,
                }),
            };
            emit(out.as_deref(), &json(&report)?)?;
            if let Some(path) = state {
                let s = StateFile {
                    b: report.solve.b.clone(),
                    scale: l.scale,
                };
                emit(Some(&path), &json(&s)?)?;
            }
            if converged {
                Ok(())
            } else {
                Err(CliError::Convergence(format!(
                    "no convergence after {} sweeps (residual {:e})",
                    report.solve.sweeps, report.solve.max_residual
                )))
            }
        }
        Command::Trace {
            config,
            state,
            rays,
            out,
        } => {
            let l = load(&config)?;
            let s = load_state(&l, &state)?;
            let rule = l.problem.rule()?;
            if let Some(path) = rays {
                let mut csv = String::from("x0,x1,x2,z0,z1,z2,m0,m1,m2,target,focus_error,r,t,skipped\n");
                for i in 0..rule.len() {
                    let x = negrefract::Direction::new(rule.node(i))?;
                    let tr = raytrace::trace_one(&s, &x)?;
                    let (x, z, m) = (tr.x.vec(), tr.z, tr.m.vec());
                    let row = csv_row(&[x.x, x.y, x.z, z.x, z.y, z.z, m.x, m.y, m.z]);
                    let tail = csv_row(&[tr.focus_error, tr.r, tr.t]);
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        row.trim_end(),
                        tr.active + 1,
                        tail.trim_end(),
                        tr.skipped as u8
                    ));
                }
                emit(Some(&path), &csv)?;
            }
            let audit = raytrace::energy_audit(&s, &rule, &l.problem.density)?;
            let f = TraceFile {
                versions: Versions::current(),
                scale: l.scale,
                audit,
            };
            emit(out.as_deref(), &json(&f)?)
        }
        Command::FresnelTable {
            kappa,
            sigma,
            alpha,
            epsilon,
            samples,
            out,
        } => {
            if samples < 2 {
                return Err(CliError::Usage("at least two samples are needed".into()));
            }
            let med = MediumPair::new(kappa, sigma, alpha)?;
            let eps = AdmissibilityMargin::new(epsilon)?;
            let t0 = eps.t_min(&med)?;
            let mut csv = String::from("c,p,q,r,t\n");
            for k in 0..samples {
                let c = if k + 1 == samples {
                    1.0
                } else {
                    t0 + (1.0 - t0) * k as f64 / (samples - 1) as f64
                };
                let (p, q) = fresnel::coefficients(c, &med);
                let r = fresnel::reflectance(c, &med)?;
                csv.push_str(&csv_row(&[c, p, q, r, 1.0 - r]));
            }
            emit(out.as_deref(), &csv)
        }
        Command::Export {
            config,
            state,
            format,
            out,
        } => {
            let l = load(&config)?;
            let s = load_state(&l, &state)?;
            let rule = l.problem.rule()?;
            let text = match format {
                Format::Obj => export::obj(&s, &rule)?,
                Format::Csv => export::csv(&s, &rule)?,
            };
            emit(out.as_deref(), &text)
        }
        Command::Example {
            kappa,
            targets,
            seed,
            level,
            symmetric,
            out,
        } => {
            let p = if symmetric {
                scenario::symmetric_pair(kappa, level)?
            } else {
                if targets == 0 {
                    return Err(CliError::Usage("at least one target is needed".into()));
                }
                let spec = FixtureSpec {
                    quadrature_level: level,
                    ..FixtureSpec::new(kappa, targets, seed)
                };
                scenario::fixture(&spec)?
            };
            emit(out.as_deref(), &json(&config::from_problem(&p, seed))?)
        }
    }
}
