//! Surface export over the source grid.

use std::fmt::Write;

use negrefract::geometry::{GridShape, QuadratureRule};
use negrefract::refractor::{self, RefractorState};

use crate::output::{csv_row, num};
use crate::CliError;

/// Node directions, radii and surface points, one row per grid node.
pub fn csv(state: &RefractorState, rule: &QuadratureRule) -> Result<String, CliError> {
    let mut out = String::from("x0,x1,x2,rho,z0,z1,z2,target\n");
    for i in 0..rule.len() {
        let x = rule.node(i);
        let e = refractor::evaluate(state, &x)?;
        let z = x * e.rho;
        let row = csv_row(&[x.x, x.y, x.z, e.rho, z.x, z.y, z.z]);
        let _ = writeln!(out, "{},{}", row.trim_end(), e.active[0] + 1);
    }
    Ok(out)
}

/// ASCII OBJ triangle mesh: an apex vertex on the cap axis, then the grid
/// rings from the axis outward.
pub fn obj(state: &RefractorState, rule: &QuadratureRule) -> Result<String, CliError> {
    let GridShape::Rings { n_u, n_phi } = rule.shape else {
        return Err(CliError::Usage("OBJ export needs a three-dimensional source".into()));
    };
    let mut out = String::from("# negrefract surface\n");
    let axis = *rule.domain().axis;
    let apex = axis * refractor::evaluate(state, &axis)?.rho;
    let vertex = |out: &mut String, p: &negrefract::Vec3| {
        let _ = writeln!(out, "v {} {} {}", num(p.x), num(p.y), num(p.z));
    };
    vertex(&mut out, &apex);
    for i in 0..rule.len() {
        let x = rule.node(i);
        vertex(&mut out, &(x * refractor::evaluate(state, &x)?.rho));
    }
    // OBJ indices are 1-based; node i is vertex i + 2
    let v = |k: usize, l: usize| k * n_phi + (l % n_phi) + 2;
    for l in 0..n_phi {
        let _ = writeln!(out, "f 1 {} {}", v(0, l), v(0, l + 1));
    }
    for k in 0..n_u - 1 {
        for l in 0..n_phi {
            let (a, b, c, d) = (v(k, l), v(k, l + 1), v(k + 1, l + 1), v(k + 1, l));
            let _ = writeln!(out, "f {a} {d} {c}");
            let _ = writeln!(out, "f {a} {c} {b}");
        }
    }
    Ok(out)
}
