//! Synthesis of near-field refracting surfaces for media with a negative
//! relative refractive index, including Fresnel losses at the interface.
//!
//! The surface is an envelope of refracting ovals, one per target point. The
//! solver tunes the oval parameters until each target receives its prescribed
//! energy, and the ray tracer checks the result along an independent path.

pub mod error;
pub mod fresnel;
pub mod geometry;
pub mod ovals;
pub mod raytrace;
pub mod par;
pub mod refractor;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use fresnel::{AdmissibilityMargin, MediumPair};
pub use geometry::{Direction, QuadratureRule, SourceDomain, Vec3};
pub use ovals::{OvalParams, Regime};
pub use refractor::{EmissionDensity, Envelope, RefractorState, TargetSpec};
pub use solver::{ProblemConfig, SolveReport, Tolerances, ValidationReport};
