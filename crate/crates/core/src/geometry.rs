//! Source aperture on the unit sphere and its quadrature rules.
//!
//! Points in the plane (n = 2) are carried as `Vec3` with a zero third
//! component, so every formula downstream is written once.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::par;

pub type Vec3 = nalgebra::Vector3<f64>;

const UNIT_TOL: f64 = 1e-12;
const MEMBERSHIP_SLACK: f64 = 4.0 * f64::EPSILON;

/// A unit vector in R^n, n = 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction(Vec3);

impl Direction {
    /// Accepts `v` only if it already has unit length.
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("direction has norm {n}, expected 1")));
        }
        Ok(Direction(v))
    }

    pub fn normalize(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(Direction(v / n))
    }

    pub(crate) fn new_unchecked(v: Vec3) -> Self {
        Direction(v)
    }

    #[inline]
    pub fn vec(&self) -> &Vec3 {
        &self.0
    }
}

impl std::ops::Deref for Direction {
    type Target = Vec3;
    fn deref(&self) -> &Vec3 {
        &self.0
    }
}

/// A closed spherical cap {x : x·axis ≥ cos(half_angle)}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceDomain {
    pub axis: Direction,
    pub half_angle: f64,
    pub dimension: usize,
}

pub fn make_cap(axis: Vec3, half_angle: f64, dimension: usize) -> Result<SourceDomain> {
    if dimension != 2 && dimension != 3 {
        return Err(Error::invalid(format!("dimension must be 2 or 3, got {dimension}")));
    }
    if !(half_angle > 0.0 && half_angle < PI) {
        return Err(Error::invalid(format!(
            "half angle {half_angle} must lie strictly between 0 and pi"
        )));
    }
    if dimension == 2 && axis.z != 0.0 {
        return Err(Error::invalid("planar axis must have zero third component"));
    }
    let axis = Direction::new(axis)?;
    Ok(SourceDomain {
        axis,
        half_angle,
        dimension,
    })
}

impl SourceDomain {
    pub fn cos_half_angle(&self) -> f64 {
        self.half_angle.cos()
    }

    /// x·axis ≥ cos θ₀, with a few ulps of slack so that boundary points
    /// such as cos(π/2) ≈ 6e−17 test as inside.
    pub fn contains(&self, x: &Vec3) -> bool {
        x.dot(&self.axis) >= self.cos_half_angle() - MEMBERSHIP_SLACK
    }

    /// Closed-form measure of the cap: 2θ₀ on the circle, 2π(1 − cos θ₀) on the sphere.
    pub fn exact_measure(&self) -> f64 {
        match self.dimension {
            2 => 2.0 * self.half_angle,
            _ => 2.0 * PI * (1.0 - self.cos_half_angle()),
        }
    }

    /// Orthonormal frame (e1, e2, axis). For n = 2, e1 is the in-plane normal to axis.
    pub fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let a = *self.axis.vec();
        if self.dimension == 2 {
            return (Vec3::new(-a.y, a.x, 0.0), Vec3::z(), a);
        }
        let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = (helper - a * helper.dot(&a)).normalize();
        let e2 = a.cross(&e1);
        (e1, e2, a)
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Layout of the nodes; gives the neighbour structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridShape {
    /// Uniform arcs, ordered by angle.
    Arc { n: usize },
    /// Polar-major product grid: node index = ring * n_phi + azimuth.
    Rings { n_u: usize, n_phi: usize },
}

/// Quadrature over a cap. Nodes are generated from per-ring data, so very
/// fine levels can be streamed without materialising every node.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub level: u32,
    pub shape: GridShape,
    domain: SourceDomain,
    // per ring: (cos polar, sin polar, weight per node) or per arc: (cos, sin, weight)
    rings: Vec<(f64, f64, f64)>,
    azimuth: Vec<(f64, f64)>,
    // chart coordinate of each ring (u) or arc (angle) and its cell edges
    chart: Vec<(f64, f64, f64)>,
    frame: (Vec3, Vec3, Vec3),
}

/// A node's neighbour in the (u, φ) chart, or the (angle) chart for n = 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartNeighbor {
    pub index: usize,
    pub du: f64,
    pub dphi: f64,
}

/// Polar rings at a level for n = 3. Azimuth has four times as many points.
pub fn rings_at_level(level: u32) -> usize {
    3usize << level
}

/// Arcs at a level for n = 2.
pub fn arcs_at_level(level: u32) -> usize {
    1usize << (2 * level)
}

pub fn build_quadrature(domain: &SourceDomain, level: u32) -> Result<QuadratureRule> {
    if level < 1 {
        return Err(Error::invalid("quadrature level must be at least 1"));
    }
    if level > 12 {
        return Err(Error::invalid(format!("quadrature level {level} is too large")));
    }
    let frame = domain.frame();
    let th = domain.half_angle;
    if domain.dimension == 2 {
        let n = arcs_at_level(level);
        let dphi = 2.0 * th / n as f64;
        let angle = |i: usize| -th + (i as f64 + 0.5) * dphi;
        let rings = (0..n)
            .map(|i| (angle(i).cos(), angle(i).sin(), dphi))
            .collect();
        let chart = (0..n)
            .map(|i| (angle(i), angle(i) - 0.5 * dphi, angle(i) + 0.5 * dphi))
            .collect();
        return Ok(QuadratureRule {
            level,
            shape: GridShape::Arc { n },
            domain: *domain,
            rings,
            azimuth: Vec::new(),
            chart,
            frame,
        });
    }
    let n_u = rings_at_level(level);
    let n_phi = 4 * n_u;
    let a = th.cos();
    let (gx, gw) = gauss_legendre(n_u);
    let half = 0.5 * (1.0 - a);
    let wphi = 2.0 * PI / n_phi as f64;
    // descending in u, i.e. from the axis outward
    let rings: Vec<(f64, f64, f64)> = (0..n_u)
        .rev()
        .map(|k| {
            let u = half * gx[k] + 0.5 * (1.0 + a);
            let s = ((1.0 - u) * (1.0 + u)).sqrt();
            (u, s, gw[k] * half * wphi)
        })
        .collect();
    // cells in u stack the Gauss weights downward from u = 1
    let mut top = 1.0;
    let chart = (0..n_u)
        .rev()
        .map(|k| {
            let u = half * gx[k] + 0.5 * (1.0 + a);
            let lo = top - gw[k] * half;
            let c = (u, lo, top);
            top = lo;
            c
        })
        .collect();
    let azimuth = (0..n_phi)
        .map(|l| {
            let phi = (l as f64 + 0.5) * wphi;
            (phi.cos(), phi.sin())
        })
        .collect();
    Ok(QuadratureRule {
        level,
        shape: GridShape::Rings { n_u, n_phi },
        domain: *domain,
        rings,
        azimuth,
        chart,
        frame,
    })
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        match self.shape {
            GridShape::Arc { n } => n,
            GridShape::Rings { n_u, n_phi } => n_u * n_phi,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> &SourceDomain {
        &self.domain
    }

    #[inline]
    pub fn node(&self, i: usize) -> Vec3 {
        let (e1, e2, a) = &self.frame;
        match self.shape {
            GridShape::Arc { .. } => {
                let (c, s, _) = self.rings[i];
                a * c + e1 * s
            }
            GridShape::Rings { n_phi, .. } => {
                let (u, s, _) = self.rings[i / n_phi];
                let (cp, sp) = self.azimuth[i % n_phi];
                a * u + e1 * (s * cp) + e2 * (s * sp)
            }
        }
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match self.shape {
            GridShape::Arc { .. } => self.rings[i].2,
            GridShape::Rings { n_phi, .. } => self.rings[i / n_phi].2,
        }
    }

    pub fn nodes(&self) -> Vec<Vec3> {
        let mut v = vec![Vec3::zeros(); self.len()];
        par::fill(&mut v, |i| self.node(i));
        v
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Σ_i w_i f(x_i), reduced in fixed chunk order.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&Vec3) -> f64 + Sync,
    {
        par::sum_chunks(self.len(), |r| {
            r.map(|i| self.weight(i) * f(&self.node(i))).sum::<f64>()
        })
    }

    /// Cell of node i in chart coordinates relative to the node:
    /// (u or angle range, φ range). The φ range is empty for n = 2.
    pub fn cell_extent(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        match self.shape {
            GridShape::Arc { .. } => {
                let (c, lo, hi) = self.chart[i];
                ((lo - c, hi - c), (0.0, 0.0))
            }
            GridShape::Rings { n_phi, .. } => {
                let (c, lo, hi) = self.chart[i / n_phi];
                let h = PI / n_phi as f64;
                ((lo - c, hi - c), (-h, h))
            }
        }
    }

    /// Up to four chart neighbours of node i with their coordinate offsets.
    pub fn chart_neighbors(&self, i: usize) -> impl Iterator<Item = ChartNeighbor> {
        let mut out = [None; 4];
        match self.shape {
            GridShape::Arc { n } => {
                let c = self.chart[i].0;
                for (slot, j) in [(0, i.wrapping_sub(1)), (1, i + 1)] {
                    if j < n {
                        out[slot] = Some(ChartNeighbor {
                            index: j,
                            du: self.chart[j].0 - c,
                            dphi: 0.0,
                        });
                    }
                }
            }
            GridShape::Rings { n_u, n_phi } => {
                let (k, l) = (i / n_phi, i % n_phi);
                let c = self.chart[k].0;
                let dphi = 2.0 * PI / n_phi as f64;
                for (slot, kk) in [(0, k.wrapping_sub(1)), (1, k + 1)] {
                    if kk < n_u {
                        out[slot] = Some(ChartNeighbor {
                            index: kk * n_phi + l,
                            du: self.chart[kk].0 - c,
                            dphi: 0.0,
                        });
                    }
                }
                out[2] = Some(ChartNeighbor {
                    index: k * n_phi + (l + n_phi - 1) % n_phi,
                    du: 0.0,
                    dphi: -dphi,
                });
                out[3] = Some(ChartNeighbor {
                    index: k * n_phi + (l + 1) % n_phi,
                    du: 0.0,
                    dphi,
                });
            }
        }
        out.into_iter().flatten()
    }

    /// Index pairs of adjacent nodes: along rings (with wrap) and across rings.
    pub fn neighbor_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (arc, n_u, n_phi) = match self.shape {
            GridShape::Arc { n } => (true, n, 1),
            GridShape::Rings { n_u, n_phi } => (false, n_u, n_phi),
        };
        (0..self.len()).flat_map(move |i| {
            let mut out = [None, None];
            if arc {
                if i + 1 < n_u {
                    out[0] = Some((i, i + 1));
                }
            } else {
                let (k, l) = (i / n_phi, i % n_phi);
                out[0] = Some((i, k * n_phi + (l + 1) % n_phi));
                if k + 1 < n_u {
                    out[1] = Some((i, i + n_phi));
                }
            }
            out.into_iter().flatten()
        })
    }
}

/// Σ weights.
pub fn cap_measure(rule: &QuadratureRule) -> f64 {
    match rule.shape {
        GridShape::Arc { .. } => rule.rings.iter().map(|r| r.2).sum(),
        GridShape::Rings { n_phi, .. } => rule.rings.iter().map(|r| r.2 * n_phi as f64).sum(),
    }
}
