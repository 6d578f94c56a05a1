//! Versioned persistence of trained SCM data and the training trace.

use super::{ScmData, ScmTraceRow};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const SCM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ScmFile {
    format: String,
    version: u32,
    data: ScmData,
}

pub fn save_scm_data(path: &Path, data: &ScmData) -> Result<()> {
    let file = ScmFile {
        format: "scm-data".into(),
        version: SCM_FORMAT_VERSION,
        data: data.clone(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text).map_err(Error::io(path))
}

pub fn load_scm_data(path: &Path) -> Result<ScmData> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_scm_data(&text)
}

/// Parse and validate the SCM file format (also the fuzzed entry point).
pub fn parse_scm_data(text: &str) -> Result<ScmData> {
    let file: ScmFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != "scm-data" {
        return Err(Error::Parse(format!("unknown format {:?}", file.format)));
    }
    if file.version != SCM_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            what: "scm-data".into(),
            got: file.version,
            expected: SCM_FORMAT_VERSION,
        });
    }
    let data = file.data;
    data.parameter_box.validate()?;
    let n_a = data.box_lo.len();
    let dim = data.parameter_box.dimension();
    if data.box_hi.len() != n_a || n_a != dim + 1 {
        return Err(Error::Parse("box bounds inconsistent with dimension".into()));
    }
    if data.exact_points.len() != data.exact_values.len()
        || data.exact_points.len() != data.y_vertices.len()
        || data.pool_points.len() != data.pool_bounds.len()
    {
        return Err(Error::Parse("ragged exact/pool arrays".into()));
    }
    for p in data.exact_points.iter().chain(data.pool_points.iter()) {
        if p.len() != dim {
            return Err(Error::Parse("constraint point of wrong dimension".into()));
        }
        data.parameter_box.check_membership(p)?;
    }
    for (lo, hi) in data.box_lo.iter().zip(&data.box_hi) {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Parse("box bounds not ordered/finite".into()));
        }
    }
    for (y, v) in data.y_vertices.iter().zip(&data.exact_values) {
        if y.len() != n_a {
            return Err(Error::Parse("vertex of wrong dimension".into()));
        }
        if !v.is_finite() {
            return Err(Error::Parse("non-finite exact value".into()));
        }
        for (yk, (lo, hi)) in y.iter().zip(data.box_lo.iter().zip(&data.box_hi)) {
            let slack = 1e-9 * (hi - lo).max(hi.abs()).max(1e-300);
            if !(*yk >= lo - slack && *yk <= hi + slack) {
                return Err(Error::Parse("vertex outside the box".into()));
            }
        }
    }
    Ok(data)
}

/// Training trace CSV: one row per iteration with the worst indicator.
pub fn write_scm_trace(path: &Path, trace: &[ScmTraceRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    writeln!(out, "iteration,max_indicator").map_err(io_err)?;
    for row in trace {
        writeln!(
            out,
            "{},{}",
            row.iteration,
            crate::fem::fmt17(row.max_indicator)
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
