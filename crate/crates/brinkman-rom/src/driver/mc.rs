//! Quasi-Monte-Carlo reference moments with progress checkpointing.

use crate::fem::AssembledOperators;
use crate::halton::Halton;
use crate::linalg::DVec;
use crate::param::AffineDecomposition;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Mean and variance fields (1/n weights) from high-fidelity solves at
/// Halton points.
#[derive(Debug, Clone)]
pub struct McMoments {
    pub mean_u: DVec,
    pub mean_p: DVec,
    pub variance_u: DVec,
    pub variance_p: DVec,
    pub samples: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    /// identifies the run: dimension, dof counts, total samples
    dimension: usize,
    n_velocity: usize,
    n_pressure: usize,
    total_samples: usize,
    /// samples accumulated so far
    done: usize,
    /// shift fields (the first sample): sums accumulate deviations from
    /// these so the variance does not cancel against the field magnitude
    shift_u: Vec<f64>,
    shift_p: Vec<f64>,
    sum_u: Vec<f64>,
    sum_p: Vec<f64>,
    sum_sq_u: Vec<f64>,
    sum_sq_p: Vec<f64>,
}

/// Quasi-Monte-Carlo reference: deterministic Halton points mapped into the
/// parameter box, direct solves in parallel, accumulation in sample order.
/// A checkpoint file, when given, lets an interrupted run resume.
pub fn monte_carlo_reference(
    ops: &AssembledOperators,
    dec: &AffineDecomposition,
    samples: usize,
    checkpoint_path: Option<&Path>,
) -> Result<McMoments> {
    if samples == 0 {
        return Err(Error::InvalidConfig(
            "monte carlo needs at least one sample".into(),
        ));
    }
    let nv = ops.n_velocity_free;
    let np = ops.n_pressure;
    let dim = dec.dimension();
    let halton = Halton::new(dim);

    let solve_at_index = |i: usize| -> Result<(DVec, DVec)> {
        let point = halton.point(i as u64 + 1);
        let xi = dec.parameter_box.from_unit(&point);
        let sol = dec.solve_at(ops, &xi)?;
        Ok((sol.u, sol.p))
    };

    let mut done = 0usize;
    let mut shift_u = DVec::zeros(nv);
    let mut shift_p = DVec::zeros(np);
    let mut sum_u = DVec::zeros(nv);
    let mut sum_p = DVec::zeros(np);
    let mut sum_sq_u = DVec::zeros(nv);
    let mut sum_sq_p = DVec::zeros(np);

    // Resume from a matching checkpoint.
    let mut resumed = false;
    if let Some(path) = checkpoint_path {
        if path.exists() {
            if let Ok(cp) = read_checkpoint(path) {
                if cp.dimension == dim
                    && cp.n_velocity == nv
                    && cp.n_pressure == np
                    && cp.total_samples == samples
                    && cp.done <= samples
                    && cp.done >= 1
                {
                    done = cp.done;
                    shift_u = DVec::from_vec(cp.shift_u);
                    shift_p = DVec::from_vec(cp.shift_p);
                    sum_u = DVec::from_vec(cp.sum_u);
                    sum_p = DVec::from_vec(cp.sum_p);
                    sum_sq_u = DVec::from_vec(cp.sum_sq_u);
                    sum_sq_p = DVec::from_vec(cp.sum_sq_p);
                    resumed = true;
                }
            }
        }
    }
    if !resumed {
        // The first sample becomes the variance shift (and contributes zero
        // deviation).
        let (u0, p0) = solve_at_index(0)?;
        shift_u = u0;
        shift_p = p0;
        done = 1;
    }

    let chunk = (samples / 20).max(1);
    while done < samples {
        let batch_end = (done + chunk).min(samples);
        let sols: Vec<(DVec, DVec)> = (done..batch_end)
            .into_par_iter()
            .map(solve_at_index)
            .collect::<Result<Vec<_>>>()?;
        // deterministic accumulation in sample order
        for (u, p) in sols {
            for i in 0..nv {
                let d = u[i] - shift_u[i];
                sum_u[i] += d;
                sum_sq_u[i] += d * d;
            }
            for i in 0..np {
                let d = p[i] - shift_p[i];
                sum_p[i] += d;
                sum_sq_p[i] += d * d;
            }
        }
        done = batch_end;
        if let Some(path) = checkpoint_path {
            write_checkpoint(
                path,
                &Checkpoint {
                    format: "mc-checkpoint".into(),
                    version: 1,
                    dimension: dim,
                    n_velocity: nv,
                    n_pressure: np,
                    total_samples: samples,
                    done,
                    shift_u: shift_u.iter().copied().collect(),
                    shift_p: shift_p.iter().copied().collect(),
                    sum_u: sum_u.iter().copied().collect(),
                    sum_p: sum_p.iter().copied().collect(),
                    sum_sq_u: sum_sq_u.iter().copied().collect(),
                    sum_sq_p: sum_sq_p.iter().copied().collect(),
                },
            )?;
        }
    }

    let n = samples as f64;
    let mut mean_u = DVec::zeros(nv);
    let mut variance_u = DVec::zeros(nv);
    for i in 0..nv {
        let dev_mean = sum_u[i] / n;
        mean_u[i] = shift_u[i] + dev_mean;
        variance_u[i] = (sum_sq_u[i] / n - dev_mean * dev_mean).max(0.0);
    }
    let mut mean_p = DVec::zeros(np);
    let mut variance_p = DVec::zeros(np);
    for i in 0..np {
        let dev_mean = sum_p[i] / n;
        mean_p[i] = shift_p[i] + dev_mean;
        variance_p[i] = (sum_sq_p[i] / n - dev_mean * dev_mean).max(0.0);
    }
    Ok(McMoments {
        mean_u,
        mean_p,
        variance_u,
        variance_p,
        samples,
    })
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if cp.format != "mc-checkpoint" || cp.version != 1 {
        return Err(Error::FormatVersion {
            what: "mc-checkpoint".into(),
            got: cp.version,
            expected: 1,
        });
    }
    Ok(cp)
}

fn write_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string(cp).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text).map_err(Error::io(path))
}
