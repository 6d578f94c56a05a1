//! Successive constraint method: certified parametric lower bounds on the
//! coercivity constant, upper bounds on the continuity constant, and the
//! one-time inf-sup constant.
//!
//! Bounds come from small linear programs over a relaxation of the attainable
//! set of affine Rayleigh quotients: box bounds from one-time eigensolves per
//! affine term, sharpened by inequality rows at the nearest trained points.
//! The greedy trainer (exact eigensolve at the worst-indicator candidate,
//! then refresh all candidate bounds) runs until the worst relative gap drops
//! below the tolerance.

mod serialize;

pub use serialize::{load_scm_data, parse_scm_data, save_scm_data, write_scm_trace};

use crate::fem::AssembledOperators;
use crate::linalg::{
    eig_largest_generalized, eig_smallest_generalized, factorize, lp_maximize, lp_minimize,
    CsrMatrix, DVec, EigOptions, FactorKind, Factorization, LinearOperator, LinearProgram,
};
use crate::param::{AffineDecomposition, ParameterBox};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Training knobs. `m_e`/`m_p` are the numbers of nearest exact / bounded
/// constraint rows per query.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScmConfig {
    pub m_e: usize,
    pub m_p: usize,
    pub tol: f64,
    pub train_size: usize,
    pub seed: u64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        Self {
            m_e: 100,
            m_p: 100,
            tol: 0.1,
            train_size: 2000,
            seed: 0x5c37,
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "SCM tolerance must lie in (0,1], got {}",
                self.tol
            )));
        }
        if self.train_size == 0 {
            return Err(Error::InvalidConfig(
                "SCM needs a nonempty training set".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScmMode {
    Coercivity,
    Continuity,
}

/// Trained SCM state for one mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmData {
    pub mode: ScmMode,
    pub parameter_box: ParameterBox,
    /// per affine index: smallest generalized Rayleigh quotient
    pub box_lo: Vec<f64>,
    /// per affine index: largest generalized Rayleigh quotient
    pub box_hi: Vec<f64>,
    /// exact set: parameters, constants, and Rayleigh-quotient vertices
    pub exact_points: Vec<Vec<f64>>,
    pub exact_values: Vec<f64>,
    pub y_vertices: Vec<Vec<f64>>,
    /// remaining candidate pool and its stored bounds (lower bounds for
    /// coercivity, upper bounds for continuity)
    pub pool_points: Vec<Vec<f64>>,
    pub pool_bounds: Vec<f64>,
    pub config: ScmConfig,
}

/// One bound query: the certified bound, the opposite-side vertex bound, and
/// the relative-gap indicator.
#[derive(Debug, Clone, Copy)]
pub struct ScmBound {
    /// coercivity: the certified lower bound; continuity: the certified
    /// upper bound
    pub certified: f64,
    /// coercivity: vertex upper bound; continuity: vertex lower bound
    /// (uninformative while untrained)
    pub vertex: f64,
    /// relative gap in [0, 1]
    pub indicator: f64,
}

/// Parameter-independent inf-sup constant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub beta: f64,
}

struct SchurOperator<'a> {
    b: &'a CsrMatrix,
    mv_inverse: &'a Factorization,
}

impl LinearOperator for SchurOperator<'_> {
    fn dim(&self) -> usize {
        self.b.n_rows()
    }
    fn apply(&self, x: &DVec) -> DVec {
        self.b
            .mul_vec(&self.mv_inverse.solve(&self.b.mul_transpose_vec(x)))
    }
}

/// beta = sqrt(lambda_min(B M_V^-1 B', M_Q)): one eigensolve, parameter-free.
pub fn compute_beta(ops: &AssembledOperators, opts: EigOptions) -> Result<f64> {
    let mv_chol = factorize(&ops.m_v, FactorKind::SymmetricPositiveDefinite)?;
    let schur = SchurOperator {
        b: &ops.b_div,
        mv_inverse: &mv_chol,
    };
    let mq_inv = factorize(&ops.m_q, FactorKind::SymmetricPositiveDefinite)?;
    let lambda = match eig_smallest_generalized(&schur, &ops.m_q, Some(&mq_inv), opts) {
        Ok((lambda, _)) => lambda,
        Err(Error::EigNoConvergence { .. }) if ops.n_pressure <= 3000 => {
            // Dense fallback for small pressure spaces: materialize the Schur
            // complement column by column.
            let np = ops.n_pressure;
            let mut dense = crate::linalg::DMat::zeros(np, np);
            for j in 0..np {
                let mut e = DVec::zeros(np);
                e[j] = 1.0;
                dense.set_column(j, &schur.apply(&e));
            }
            let dense = (&dense + dense.transpose()) * 0.5;
            crate::linalg::eig::dense_generalized_smallest(&dense, &ops.m_q.to_dense())
        }
        Err(e) => return Err(e),
    };
    if lambda <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "inf-sup eigenvalue {lambda:.3e} is not positive; B is rank deficient"
        )));
    }
    Ok(lambda.sqrt())
}

/// Box bounds: per affine term the extreme generalized Rayleigh quotients
/// against M_V. Structurally singular Darcy blocks short-circuit to a zero
/// lower bound.
pub fn compute_box(
    ops: &AssembledOperators,
    dec: &AffineDecomposition,
    opts: EigOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mv_chol = factorize(&ops.m_v, FactorKind::SymmetricPositiveDefinite)?;
    let mut lo = Vec::with_capacity(dec.n_a);
    let mut hi = Vec::with_capacity(dec.n_a);
    let terms: Vec<&CsrMatrix> = std::iter::once(&ops.a_stokes)
        .chain(ops.darcy_blocks.iter())
        .collect();
    for term in terms {
        let has_empty_row = (0..term.n_rows()).any(|i| term.row(i).0.is_empty());
        let lo_k = if has_empty_row {
            0.0
        } else {
            eig_smallest_generalized(term, &ops.m_v, Some(&mv_chol), opts)?.0
        };
        // Largest eigenvalue via the negated pencil; valid for singular
        // blocks where the swapped-pencil route is not.
        let neg = term.scaled(-1.0);
        let hi_k = -eig_smallest_generalized(&neg, &ops.m_v, Some(&mv_chol), opts)?.0;
        lo.push(lo_k);
        hi.push(hi_k);
    }
    Ok((lo, hi))
}

/// Exact stability constant at one parameter via the generalized
/// eigenproblem, with the Rayleigh-quotient vertex of the eigenvector.
pub fn exact_constant(
    ops: &AssembledOperators,
    dec: &AffineDecomposition,
    xi: &[f64],
    mode: ScmMode,
    opts: EigOptions,
) -> Result<(f64, Vec<f64>)> {
    let (a_xi, _) = dec.assemble_at(ops, xi)?;
    let (value, x) = match mode {
        ScmMode::Coercivity => {
            let precond = factorize(&a_xi, FactorKind::SymmetricPositiveDefinite)?;
            eig_smallest_generalized(&a_xi, &ops.m_v, Some(&precond), opts)?
        }
        ScmMode::Continuity => {
            let mv_chol = factorize(&ops.m_v, FactorKind::SymmetricPositiveDefinite)?;
            eig_largest_generalized(&a_xi, &ops.m_v, Some(&mv_chol), opts)?
        }
    };
    let denom = ops.m_v.bilinear(&x, &x);
    let mut y_vertex = Vec::with_capacity(dec.n_a);
    y_vertex.push(ops.a_stokes.bilinear(&x, &x) / denom);
    for d in &ops.darcy_blocks {
        y_vertex.push(d.bilinear(&x, &x) / denom);
    }
    Ok((value, y_vertex))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `count` nearest points in the unit-normalized metric.
fn nearest_indices(points_unit: &[Vec<f64>], query_unit: &[f64], count: usize) -> Vec<usize> {
    if count == 0 || points_unit.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<(f64, usize)> = points_unit
        .iter()
        .enumerate()
        .map(|(i, p)| (squared_distance(p, query_unit), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    order.into_iter().take(count).map(|(_, i)| i).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// theta^A at a stored constraint point. The affine map is the constant 1
/// followed by the inverse permeabilities, so it is rebuilt from the
/// parameter alone.
fn theta_at(pb: &ParameterBox, xi: &[f64]) -> Result<Vec<f64>> {
    pb.check_membership(xi)?;
    let mut theta = Vec::with_capacity(xi.len() + 1);
    theta.push(1.0);
    theta.extend(xi.iter().map(|&x| 1.0 / x));
    Ok(theta)
}

impl ScmData {
    pub fn untrained(
        mode: ScmMode,
        parameter_box: ParameterBox,
        box_lo: Vec<f64>,
        box_hi: Vec<f64>,
        candidates: Vec<Vec<f64>>,
        config: ScmConfig,
    ) -> Self {
        let init = match mode {
            ScmMode::Coercivity => 0.0,
            ScmMode::Continuity => f64::INFINITY,
        };
        let pool_bounds = vec![init; candidates.len()];
        Self {
            mode,
            parameter_box,
            box_lo,
            box_hi,
            exact_points: Vec::new(),
            exact_values: Vec::new(),
            y_vertices: Vec::new(),
            pool_points: candidates,
            pool_bounds,
            config,
        }
    }

    pub fn n_affine(&self) -> usize {
        self.box_lo.len()
    }

    /// Bound query from a precomputed theta vector; `xi_unit` is the
    /// unit-normalized parameter for nearest-constraint selection.
    pub fn bound_from_theta(&self, theta: &[f64], xi_unit: &[f64]) -> Result<ScmBound> {
        let exact_units: Vec<Vec<f64>> = self
            .exact_points
            .iter()
            .map(|p| self.parameter_box.to_unit(p))
            .collect();
        let pool_units: Vec<Vec<f64>> = self
            .pool_points
            .iter()
            .map(|p| self.parameter_box.to_unit(p))
            .collect();
        self.bound_with_units(theta, xi_unit, &exact_units, &pool_units)
    }

    fn bound_with_units(
        &self,
        theta: &[f64],
        xi_unit: &[f64],
        exact_units: &[Vec<f64>],
        pool_units: &[Vec<f64>],
    ) -> Result<ScmBound> {
        if theta.len() != self.n_affine() {
            return Err(Error::ShapeMismatch {
                context: "scm theta".into(),
                expected: format!("{}", self.n_affine()),
                got: format!("{}", theta.len()),
            });
        }
        let sign = match self.mode {
            ScmMode::Coercivity => 1.0,
            ScmMode::Continuity => -1.0,
        };
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for &j in &nearest_indices(exact_units, xi_unit, self.config.m_e) {
            let theta_j = theta_at(&self.parameter_box, &self.exact_points[j])?;
            rows.push((
                theta_j.iter().map(|t| sign * t).collect(),
                sign * self.exact_values[j],
            ));
        }
        for &j in &nearest_indices(pool_units, xi_unit, self.config.m_p) {
            let b = self.pool_bounds[j];
            let informative = match self.mode {
                ScmMode::Coercivity => b > 0.0,
                ScmMode::Continuity => b.is_finite(),
            };
            if informative {
                let theta_j = theta_at(&self.parameter_box, &self.pool_points[j])?;
                rows.push((theta_j.iter().map(|t| sign * t).collect(), sign * b));
            }
        }
        let lp = LinearProgram {
            objective: theta.to_vec(),
            rows,
            lower: self.box_lo.clone(),
            upper: self.box_hi.clone(),
        };
        let (certified, _) = match self.mode {
            ScmMode::Coercivity => lp_minimize(&lp)?,
            ScmMode::Continuity => lp_maximize(&lp)?,
        };
        let vertex = match self.mode {
            ScmMode::Coercivity => self
                .y_vertices
                .iter()
                .map(|y| dot(theta, y))
                .fold(f64::INFINITY, f64::min),
            ScmMode::Continuity => self
                .y_vertices
                .iter()
                .map(|y| dot(theta, y))
                .fold(0.0, f64::max),
        };
        let indicator = match self.mode {
            ScmMode::Coercivity => {
                if vertex.is_finite() && vertex > 0.0 {
                    (1.0 - certified / vertex).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
            ScmMode::Continuity => {
                if certified > 0.0 && vertex > 0.0 {
                    (1.0 - vertex / certified).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
        };
        Ok(ScmBound {
            certified,
            vertex,
            indicator,
        })
    }
}

/// Bound at a parameter of the model problem.
pub fn scm_bound(dec: &AffineDecomposition, data: &ScmData, xi: &[f64]) -> Result<ScmBound> {
    let theta = dec.theta_a(xi)?;
    let xi_unit = data.parameter_box.to_unit(xi);
    data.bound_from_theta(&theta, &xi_unit)
}

/// One row of the training trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScmTraceRow {
    pub iteration: usize,
    pub max_indicator: f64,
}

/// Greedy SCM training: repeatedly solve the exact eigenproblem at the
/// worst-indicator candidate, refresh all candidate bounds, stop when the
/// worst relative gap is below tolerance or the pool is exhausted.
pub fn scm_train(
    ops: &AssembledOperators,
    dec: &AffineDecomposition,
    candidates: Vec<Vec<f64>>,
    config: ScmConfig,
    mode: ScmMode,
    opts: EigOptions,
) -> Result<(ScmData, Vec<ScmTraceRow>)> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("SCM training set is empty".into()));
    }
    let (box_lo, box_hi) = compute_box(ops, dec, opts)?;
    let mut data = ScmData::untrained(
        mode,
        dec.parameter_box.clone(),
        box_lo,
        box_hi,
        candidates,
        config,
    );
    let mut trace = Vec::new();
    let mut next = 0usize;
    let mut iteration = 0usize;
    loop {
        iteration += 1;
        // Promote the chosen candidate to the exact set.
        let xi = data.pool_points.remove(next);
        data.pool_bounds.remove(next);
        let (value, y_vertex) = exact_constant(ops, dec, &xi, mode, opts)?;
        data.exact_points.push(xi);
        data.exact_values.push(value);
        data.y_vertices.push(y_vertex);
        if data.pool_points.is_empty() {
            trace.push(ScmTraceRow {
                iteration,
                max_indicator: 0.0,
            });
            return Ok((data, trace));
        }
        // Refresh bounds and indicators over the pool against an immutable
        // snapshot of the constraint state.
        let exact_units: Vec<Vec<f64>> = data
            .exact_points
            .iter()
            .map(|p| data.parameter_box.to_unit(p))
            .collect();
        let pool_units: Vec<Vec<f64>> = data
            .pool_points
            .iter()
            .map(|p| data.parameter_box.to_unit(p))
            .collect();
        let results: Vec<(f64, f64)> = data
            .pool_points
            .par_iter()
            .zip(pool_units.par_iter())
            .map(|(xi, xi_unit)| {
                let theta = theta_at(&data.parameter_box, xi)?;
                let bound = data.bound_with_units(&theta, xi_unit, &exact_units, &pool_units)?;
                Ok((bound.certified, bound.indicator))
            })
            .collect::<Result<Vec<_>>>()?;
        // Stored bounds only ever tighten.
        for (stored, &(fresh, _)) in data.pool_bounds.iter_mut().zip(&results) {
            match mode {
                ScmMode::Coercivity => *stored = stored.max(fresh),
                ScmMode::Continuity => *stored = stored.min(fresh),
            }
        }
        let (argmax, max_indicator) =
            results
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |acc, (i, &(_, eta))| {
                    if eta > acc.1 {
                        (i, eta)
                    } else {
                        acc
                    }
                });
        trace.push(ScmTraceRow {
            iteration,
            max_indicator,
        });
        if max_indicator < data.config.tol {
            return Ok((data, trace));
        }
        next = argmax;
    }
}
