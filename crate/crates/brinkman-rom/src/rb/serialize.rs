//! Versioned persistence of the reduced basis and offline data, plus the
//! training-trace and effectivity CSV writers.

use super::{GreedyTraceRow, OfflineResidualData, RbModel, ReducedBasis};
use crate::fem::fmt17;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const RB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct RbFile {
    format: String,
    version: u32,
    basis: ReducedBasis,
    offline: OfflineResidualData,
}

pub fn save_rb_model(path: &Path, model: &RbModel) -> Result<()> {
    let file = RbFile {
        format: "rb-data".into(),
        version: RB_FORMAT_VERSION,
        basis: model.basis.clone(),
        offline: model.offline.clone(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text).map_err(Error::io(path))
}

pub fn load_rb_model(path: &Path) -> Result<RbModel> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_rb_model(&text)
}

/// Parse and validate the RB file format (also the fuzzed entry point).
/// The representer families are serialized as factor columns only; a loaded
/// model can run the whole online phase but not extend the basis.
pub fn parse_rb_model(text: &str) -> Result<RbModel> {
    let file: RbFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != "rb-data" {
        return Err(Error::Parse(format!("unknown format {:?}", file.format)));
    }
    if file.version != RB_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            what: "rb-data".into(),
            got: file.version,
            expected: RB_FORMAT_VERSION,
        });
    }
    let basis = file.basis;
    let offline = file.offline;
    let nv = basis.v.ncols();
    let np = basis.q.ncols();
    if nv != 2 * np {
        return Err(Error::Parse(format!(
            "velocity basis has {nv} columns, expected twice the {np} pressure columns"
        )));
    }
    if offline.b_red.nrows() != np || offline.b_red.ncols() != nv {
        return Err(Error::Parse("reduced divergence block of wrong shape".into()));
    }
    for block in &offline.a_red {
        if block.nrows() != nv || block.ncols() != nv {
            return Err(Error::Parse("reduced stiffness block of wrong shape".into()));
        }
    }
    for f in &offline.f_red {
        if f.len() != nv {
            return Err(Error::Parse("reduced force of wrong length".into()));
        }
    }
    if offline.g_red.len() != np {
        return Err(Error::Parse("reduced data vector of wrong length".into()));
    }
    if offline.r1_tags.len() != offline.r1_factor.columns.len()
        || offline.r2_tags.len() != offline.r2_factor.columns.len()
    {
        return Err(Error::Parse("representer tags and factor out of sync".into()));
    }
    let finite = basis.v.iter().chain(basis.q.iter()).all(|v| v.is_finite())
        && offline
            .r1_factor
            .columns
            .iter()
            .chain(offline.r1_factor.columns.iter())
            .flatten()
            .all(|v| v.is_finite());
    if !finite {
        return Err(Error::Parse("non-finite entries in rb data".into()));
    }
    for snap in &basis.snapshots {
        if snap.v_columns[0] >= nv || snap.v_columns[1] >= nv || snap.q_column >= np {
            return Err(Error::Parse("snapshot log references missing columns".into()));
        }
    }
    Ok(RbModel { basis, offline })
}

/// Training trace CSV with the ANOVA level of each greedy sweep.
pub fn write_rb_trace(path: &Path, rows: &[(usize, GreedyTraceRow)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    writeln!(
        out,
        "level,iteration,max_delta,max_rel_u,max_rel_p,max_rel_delta,snapshots"
    )
    .map_err(io_err)?;
    for (level, row) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            level,
            row.iteration,
            fmt17(row.max_delta),
            fmt17(row.max_rel_u),
            fmt17(row.max_rel_p),
            fmt17(row.max_rel_delta),
            row.snapshots
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// One effectivity sample: bound over true error per field.
#[derive(Debug, Clone, Copy)]
pub struct EffectivityRow {
    pub sample: usize,
    pub effectivity_u: f64,
    pub effectivity_p: f64,
    pub effectivity_combined: f64,
}

pub fn write_effectivity_csv(path: &Path, rows: &[EffectivityRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    writeln!(out, "sample,effectivity_u,effectivity_p,effectivity_combined").map_err(io_err)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.sample,
            fmt17(r.effectivity_u),
            fmt17(r.effectivity_p),
            fmt17(r.effectivity_combined)
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
