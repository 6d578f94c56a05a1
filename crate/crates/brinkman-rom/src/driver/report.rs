//! Moment-error tables: relative L2-norm errors of the estimated moments
//! against the reference, per field and per moment.

use super::MomentFields;
use crate::fem::{fmt17, AssembledOperators};
use crate::linalg::DVec;
use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Mean,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentField {
    Velocity,
    Pressure,
    Combined,
}

#[derive(Debug, Clone, Copy)]
pub struct ErrorRow {
    pub moment: MomentKind,
    pub field: MomentField,
    pub error: f64,
    /// set when the reference norm vanished and the error is absolute
    pub absolute: bool,
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub rows: Vec<ErrorRow>,
    pub hf_solves: usize,
    pub collocation_points: usize,
}

impl MomentReport {
    pub fn row(&self, moment: MomentKind, field: MomentField) -> Option<&ErrorRow> {
        self.rows
            .iter()
            .find(|r| r.moment == moment && r.field == field)
    }
}

/// Relative moment errors in the discrete L2 norms: the velocity mass matrix
/// on all nodal dofs for velocity components, the pressure mass for
/// pressure. Combined rows are computed from the concatenated fields.
pub fn report_errors(
    rb: &MomentFields,
    reference: &MomentFields,
    ops: &AssembledOperators,
) -> Result<MomentReport> {
    for (name, a, b) in [
        ("mean_u", rb.mean_u.len(), reference.mean_u.len()),
        ("mean_p", rb.mean_p.len(), reference.mean_p.len()),
        ("variance_u", rb.variance_u.len(), reference.variance_u.len()),
        ("variance_p", rb.variance_p.len(), reference.variance_p.len()),
    ] {
        if a != b {
            return Err(Error::ShapeMismatch {
                context: format!("moment report {name}"),
                expected: format!("{b}"),
                got: format!("{a}"),
            });
        }
    }
    if rb.mean_u.len() != ops.n_velocity_free || rb.mean_p.len() != ops.n_pressure {
        return Err(Error::ShapeMismatch {
            context: "moment report discretization".into(),
            expected: format!("{}/{}", ops.n_velocity_free, ops.n_pressure),
            got: format!("{}/{}", rb.mean_u.len(), rb.mean_p.len()),
        });
    }

    // velocity fields compared on the full nodal dofs; the mean lift cancels
    // in the difference but belongs in the reference normalization
    let norm_u = |free: &[f64], lift: f64| -> f64 {
        let full = ops.scatter_velocity(&DVec::from_vec(free.to_vec()), lift);
        ops.m_vel_l2_full.bilinear(&full, &full).max(0.0).sqrt()
    };
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    };
    let norm_p = |p: &[f64]| -> f64 {
        let v = DVec::from_vec(p.to_vec());
        ops.m_q.bilinear(&v, &v).max(0.0).sqrt()
    };

    let mut rows = Vec::with_capacity(6);
    for (moment, rb_u, rb_p, ref_u, ref_p, lift) in [
        (
            MomentKind::Mean,
            &rb.mean_u,
            &rb.mean_p,
            &reference.mean_u,
            &reference.mean_p,
            1.0,
        ),
        (
            MomentKind::Variance,
            &rb.variance_u,
            &rb.variance_p,
            &reference.variance_u,
            &reference.variance_p,
            0.0,
        ),
    ] {
        let du = norm_u(&diff(rb_u, ref_u), 0.0);
        let dp = norm_p(&diff(rb_p, ref_p));
        let nu = norm_u(ref_u, lift);
        let np = norm_p(ref_p);
        let make = |err: f64, norm: f64| -> (f64, bool) {
            if norm > 0.0 {
                (err / norm, false)
            } else {
                (err, true)
            }
        };
        let (e_u, abs_u) = make(du, nu);
        let (e_p, abs_p) = make(dp, np);
        let combined_err = (du * du + dp * dp).sqrt();
        let combined_norm = (nu * nu + np * np).sqrt();
        let (e_c, abs_c) = make(combined_err, combined_norm);
        rows.push(ErrorRow {
            moment,
            field: MomentField::Velocity,
            error: e_u,
            absolute: abs_u,
        });
        rows.push(ErrorRow {
            moment,
            field: MomentField::Pressure,
            error: e_p,
            absolute: abs_p,
        });
        rows.push(ErrorRow {
            moment,
            field: MomentField::Combined,
            error: e_c,
            absolute: abs_c,
        });
    }
    Ok(MomentReport {
        rows,
        hf_solves: rb.hf_solves,
        collocation_points: rb.collocation_points,
    })
}

fn moment_name(m: MomentKind) -> &'static str {
    match m {
        MomentKind::Mean => "mean",
        MomentKind::Variance => "variance",
    }
}

fn field_name(f: MomentField) -> &'static str {
    match f {
        MomentField::Velocity => "velocity",
        MomentField::Pressure => "pressure",
        MomentField::Combined => "combined",
    }
}

pub fn write_report_csv(path: &Path, report: &MomentReport) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    writeln!(out, "moment,field,error,absolute").map_err(io_err)?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{}",
            moment_name(r.moment),
            field_name(r.field),
            fmt17(r.error),
            r.absolute
        )
        .map_err(io_err)?;
    }
    writeln!(out, "# hf_solves,{}", report.hf_solves).map_err(io_err)?;
    writeln!(out, "# collocation_points,{}", report.collocation_points).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Plain-text rendering for the CLI.
pub fn format_report(report: &MomentReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "high-fidelity solves: {}   collocation points: {}\n",
        report.hf_solves, report.collocation_points
    ));
    if report.rows.is_empty() {
        s.push_str("(no reference moments; error table skipped)\n");
        return s;
    }
    s.push_str("moment    field     relative L2 error\n");
    for r in &report.rows {
        s.push_str(&format!(
            "{:<9} {:<9} {:.6e}{}\n",
            moment_name(r.moment),
            field_name(r.field),
            r.error,
            if r.absolute { "  (absolute; zero reference)" } else { "" }
        ));
    }
    s
}
