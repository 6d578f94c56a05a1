//! Structured-grid field output.
//!
//! Velocity fields are written per node as `x,y,u_x,u_y`; pressure fields per
//! element centroid as `x,y,p`. Values carry 17 significant digits so a
//! decimal round-trip reproduces the f64 bit pattern.

use super::MeshConfig;
use crate::linalg::DVec;
use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSpace {
    Velocity,
    Pressure,
}

/// Write one nodal velocity field (length 2 * nodes) or elementwise pressure
/// field (length 3 * elements) as CSV.
pub fn write_field(
    mesh: &MeshConfig,
    field: &DVec,
    space: FieldSpace,
    path: &Path,
) -> Result<()> {
    let expected = match space {
        FieldSpace::Velocity => 2 * mesh.n_nodes(),
        FieldSpace::Pressure => mesh.n_pressure_dof(),
    };
    if field.len() != expected {
        return Err(Error::ShapeMismatch {
            context: "write_field".into(),
            expected: format!("{expected}"),
            got: format!("{}", field.len()),
        });
    }
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    match space {
        FieldSpace::Velocity => {
            writeln!(out, "x,y,u_x,u_y").map_err(io_err)?;
            for node in 0..mesh.n_nodes() {
                let (x, y) = mesh.node_coords(node);
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt17(x),
                    fmt17(y),
                    fmt17(field[2 * node]),
                    fmt17(field[2 * node + 1])
                )
                .map_err(io_err)?;
            }
        }
        FieldSpace::Pressure => {
            writeln!(out, "x,y,p").map_err(io_err)?;
            let side = mesh.side();
            let h = mesh.h();
            for ey in 0..side {
                for ex in 0..side {
                    let elem = ey * side + ex;
                    let xc = (ex as f64 + 0.5) * h;
                    let yc = (ey as f64 + 0.5) * h;
                    // The linear modes vanish at the centroid.
                    writeln!(out, "{},{},{}", fmt17(xc), fmt17(yc), fmt17(field[3 * elem]))
                        .map_err(io_err)?;
                }
            }
        }
    }
    out.flush().map_err(io_err)
}

/// 17 significant digits: enough for an exact decimal round-trip of f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
