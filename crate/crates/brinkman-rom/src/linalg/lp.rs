//! Small dense linear programs: min c'y subject to G y >= h and l <= y <= u.
//!
//! Bounded-variable primal simplex with Bland's rule (two phases, explicit
//! basis inverse). The stability-bound LPs have few variables but can carry
//! hundreds of inequality rows of which only a handful are active at the
//! optimum, so large row sets go through an exact delayed row generation
//! loop: solve on the active subset, add the most violated rows, stop when
//! every row is satisfied. The subset optimum that is feasible for all rows
//! is the global optimum.

use super::{DMat, DVec};
use crate::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

/// min c'y  s.t.  G y >= h,  l <= y <= u.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    /// inequality rows (coefficients, right-hand side): row . y >= rhs
    pub rows: Vec<(Vec<f64>, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if n == 0 {
            return Err(Error::InvalidConfig("LP needs at least one variable".into()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::ShapeMismatch {
                context: "LP bounds".into(),
                expected: format!("{n}"),
                got: format!("{}/{}", self.lower.len(), self.upper.len()),
            });
        }
        for i in 0..n {
            if !(self.lower[i] <= self.upper[i]) {
                return Err(Error::InvalidConfig(format!(
                    "LP bound {i}: lower {} > upper {}",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        let all_finite = self
            .objective
            .iter()
            .chain(self.lower.iter())
            .chain(self.upper.iter())
            .chain(self.rows.iter().flat_map(|(r, h)| {
                r.iter().chain(std::iter::once(h))
            }))
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidConfig("LP data must be finite".into()));
        }
        for (r, _) in &self.rows {
            if r.len() != n {
                return Err(Error::ShapeMismatch {
                    context: "LP row".into(),
                    expected: format!("{n}"),
                    got: format!("{}", r.len()),
                });
            }
        }
        Ok(())
    }

    /// Largest violation of the inequality rows at `y` (0 when feasible).
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|(row, h)| {
                let dot: f64 = row.iter().zip(y).map(|(a, x)| a * x).sum();
                (h - dot).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Scale every inequality row to unit max-norm. The stability-bound rows mix
/// coefficients across six orders of magnitude; equilibration keeps the
/// absolute pivot and feasibility tolerances meaningful.
fn equilibrated(p: &LinearProgram) -> Result<LinearProgram> {
    let mut rows = Vec::with_capacity(p.rows.len());
    for (coeffs, h) in &p.rows {
        let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 {
            if *h > FEAS_TOL {
                return Err(Error::LpInfeasible { violation: *h });
            }
            continue; // vacuous row
        }
        rows.push((coeffs.iter().map(|c| c / scale).collect(), h / scale));
    }
    Ok(LinearProgram {
        objective: p.objective.clone(),
        rows,
        lower: p.lower.clone(),
        upper: p.upper.clone(),
    })
}

/// Minimize the LP; returns (optimal value, attaining point).
pub fn lp_minimize(p: &LinearProgram) -> Result<(f64, Vec<f64>)> {
    p.validate()?;
    let p = &equilibrated(p)?;
    if p.rows.len() <= 32 {
        return simplex_solve(p);
    }
    // Delayed row generation for large row sets.
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; p.rows.len()];
    loop {
        let sub = LinearProgram {
            objective: p.objective.clone(),
            rows: active.iter().map(|&i| p.rows[i].clone()).collect(),
            lower: p.lower.clone(),
            upper: p.upper.clone(),
        };
        let (value, y) = simplex_solve(&sub)?;
        // Scan all rows for violations; add a batch of the worst ones.
        let mut violated: Vec<(f64, usize)> = Vec::new();
        for (i, (row, h)) in p.rows.iter().enumerate() {
            if in_active[i] {
                continue;
            }
            let dot: f64 = row.iter().zip(&y).map(|(a, x)| a * x).sum();
            let scale = h.abs().max(1.0);
            if h - dot > FEAS_TOL * scale {
                violated.push((h - dot, i));
            }
        }
        if violated.is_empty() {
            return Ok((value, y));
        }
        violated.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for &(_, i) in violated.iter().take(8) {
            in_active[i] = true;
            active.push(i);
        }
    }
}

/// Maximize the LP; returns (optimal value, attaining point).
pub fn lp_maximize(p: &LinearProgram) -> Result<(f64, Vec<f64>)> {
    let negated = LinearProgram {
        objective: p.objective.iter().map(|c| -c).collect(),
        rows: p.rows.clone(),
        lower: p.lower.clone(),
        upper: p.upper.clone(),
    };
    let (value, y) = lp_minimize(&negated)?;
    Ok((-value, y))
}

// --- Bounded-variable primal simplex ----------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    /// columns of the equality system [G | -I | artificials], m x total
    cols: Vec<DVec>,
    rhs: DVec,
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<VarStatus>,
    basis: Vec<usize>,
    binv: DMat,
    m: usize,
}

impl Tableau {
    fn value_of(&self, j: usize, x_basic: &DVec) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            VarStatus::Basic => {
                let pos = self.basis.iter().position(|&b| b == j).unwrap();
                x_basic[pos]
            }
        }
    }

    fn basic_values(&self) -> DVec {
        // x_B = B^-1 (rhs - sum over nonbasic of A_j * bound_j)
        let mut r = self.rhs.clone();
        for (j, col) in self.cols.iter().enumerate() {
            match self.status[j] {
                VarStatus::AtLower => {
                    if self.lower[j] != 0.0 {
                        r -= col * self.lower[j];
                    }
                }
                VarStatus::AtUpper => {
                    if self.upper[j] != 0.0 {
                        r -= col * self.upper[j];
                    }
                }
                VarStatus::Basic => {}
            }
        }
        &self.binv * r
    }

    fn refactorize(&mut self) -> Result<()> {
        let mut b = DMat::zeros(self.m, self.m);
        for (k, &j) in self.basis.iter().enumerate() {
            b.set_column(k, &self.cols[j]);
        }
        match b.lu().try_inverse() {
            Some(inv) => {
                self.binv = inv;
                Ok(())
            }
            None => Err(Error::SingularMatrix {
                context: "simplex basis".into(),
                detail: "basis matrix not invertible".into(),
            }),
        }
    }

    /// Minimize `c` over the current system with Bland's anti-cycling rule.
    fn optimize(&mut self, c: &[f64]) -> Result<()> {
        let total = self.cols.len();
        let mut since_refactor = 0usize;
        loop {
            let x_b = self.basic_values();
            // Duals: lambda' = c_B' B^-1
            let mut c_b = DVec::zeros(self.m);
            for (k, &j) in self.basis.iter().enumerate() {
                c_b[k] = c[j];
            }
            let lambda = self.binv.transpose() * c_b;
            // Entering variable: Bland's rule, smallest eligible index.
            let mut entering = None;
            for j in 0..total {
                if self.status[j] == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let reduced = c[j] - lambda.dot(&self.cols[j]);
                match self.status[j] {
                    VarStatus::AtLower if reduced < -PIVOT_TOL => {
                        entering = Some((j, 1.0));
                        break;
                    }
                    VarStatus::AtUpper if reduced > PIVOT_TOL => {
                        entering = Some((j, -1.0));
                        break;
                    }
                    _ => {}
                }
            }
            let (j_in, sigma) = match entering {
                Some(e) => e,
                None => return Ok(()),
            };
            // Direction of basic variables when x_in moves by +sigma*t.
            let u = &self.binv * &self.cols[j_in];
            // Ratio test. Candidates: each blocking basic variable and the
            // entering variable's own bound span; Bland breaks ties by the
            // smallest variable index.
            let mut t_max = self.upper[j_in] - self.lower[j_in];
            let mut leave_index = j_in;
            let mut leaving: Option<usize> = None; // position in basis
            for (k, &bj) in self.basis.iter().enumerate() {
                let delta = -sigma * u[k];
                let room = if delta > PIVOT_TOL {
                    (self.upper[bj] - x_b[k]) / delta
                } else if delta < -PIVOT_TOL {
                    (self.lower[bj] - x_b[k]) / delta
                } else {
                    continue;
                };
                let room = room.max(0.0);
                if room < t_max - PIVOT_TOL || (room < t_max + PIVOT_TOL && bj < leave_index) {
                    t_max = room.min(t_max);
                    leave_index = bj;
                    leaving = Some(k);
                }
            }
            if !t_max.is_finite() {
                // Cannot happen with finite variable bounds on structurals
                // and rhs-bounded slacks, but guard anyway.
                return Err(Error::InvalidConfig("LP unbounded".into()));
            }
            match leaving {
                None => {
                    // Bound flip of the entering variable.
                    self.status[j_in] = if sigma > 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                }
                Some(k) => {
                    let j_out = self.basis[k];
                    let delta = -sigma * u[k];
                    self.status[j_out] = if delta > 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.basis[k] = j_in;
                    self.status[j_in] = VarStatus::Basic;
                    since_refactor += 1;
                    if since_refactor >= 40 {
                        self.refactorize()?;
                        since_refactor = 0;
                    } else {
                        // Rank-one update of B^-1 via the pivot column u.
                        let pivot = u[k];
                        if pivot.abs() <= PIVOT_TOL {
                            self.refactorize()?;
                        } else {
                            let mut binv = std::mem::replace(&mut self.binv, DMat::zeros(0, 0));
                            let pivot_row = binv.row(k).into_owned();
                            for r in 0..self.m {
                                if r == k {
                                    continue;
                                }
                                let factor = u[r] / pivot;
                                if factor != 0.0 {
                                    for cidx in 0..self.m {
                                        binv[(r, cidx)] -= factor * pivot_row[cidx];
                                    }
                                }
                            }
                            for cidx in 0..self.m {
                                binv[(k, cidx)] = pivot_row[cidx] / pivot;
                            }
                            self.binv = binv;
                        }
                    }
                }
            }
        }
    }
}

fn simplex_solve(p: &LinearProgram) -> Result<(f64, Vec<f64>)> {
    let n = p.n_vars();
    let m = p.rows.len();
    if m == 0 {
        // Box-only: componentwise bound selection.
        let y: Vec<f64> = (0..n)
            .map(|j| {
                if p.objective[j] >= 0.0 {
                    p.lower[j]
                } else {
                    p.upper[j]
                }
            })
            .collect();
        let value = y.iter().zip(&p.objective).map(|(a, b)| a * b).sum();
        return Ok((value, y));
    }

    // Equality system: G y - s + t = h with slack s >= 0 and artificial
    // t >= 0 only on rows whose slack would start negative.
    let mut cols: Vec<DVec> = Vec::with_capacity(n + 2 * m);
    for j in 0..n {
        cols.push(DVec::from_fn(m, |i, _| p.rows[i].0[j]));
    }
    for i in 0..m {
        let mut e = DVec::zeros(m);
        e[i] = -1.0;
        cols.push(e); // slack s_i
    }
    let mut lower = p.lower.clone();
    let mut upper = p.upper.clone();
    lower.extend(std::iter::repeat(0.0).take(m));
    upper.extend(std::iter::repeat(f64::INFINITY).take(m));

    let rhs = DVec::from_fn(m, |i, _| p.rows[i].1);
    // Structurals start nonbasic at their lower bounds; artificials are added
    // on rows whose slack would start negative.
    let mut status = vec![VarStatus::AtLower; n + m];
    let mut basis = Vec::with_capacity(m);
    let mut any_artificial = false;
    for i in 0..m {
        let g_dot: f64 = (0..n).map(|j| p.rows[i].0[j] * p.lower[j]).sum();
        let s0 = g_dot - p.rows[i].1;
        if s0 >= 0.0 {
            // slack basic at value s0
            basis.push(n + i);
        } else {
            // artificial column +1, basic at value -s0
            let mut e = DVec::zeros(m);
            e[i] = 1.0;
            cols.push(e);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            status.push(VarStatus::Basic);
            basis.push(cols.len() - 1);
            any_artificial = true;
        }
    }
    for &bj in &basis {
        status[bj] = VarStatus::Basic;
    }

    let mut t = Tableau {
        cols,
        rhs,
        lower,
        upper,
        status,
        basis,
        binv: DMat::zeros(m, m),
        m,
    };
    t.refactorize()?;

    if any_artificial {
        let mut artificial_cost = vec![0.0; t.cols.len()];
        for c in artificial_cost.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        t.optimize(&artificial_cost)?;
        let x_b = t.basic_values();
        let infeasibility: f64 = (0..t.cols.len())
            .filter(|&j| j >= n + m)
            .map(|j| t.value_of(j, &x_b))
            .sum();
        if infeasibility > FEAS_TOL {
            return Err(Error::LpInfeasible {
                violation: infeasibility,
            });
        }
        // Freeze artificials at zero for phase 2.
        for j in (n + m)..t.cols.len() {
            t.upper[j] = 0.0;
        }
    }

    let mut cost = vec![0.0; t.cols.len()];
    cost[..n].copy_from_slice(&p.objective);
    t.optimize(&cost)?;

    // Fresh basis inverse before extracting the solution: the rank-one pivot
    // updates drift on nearly-parallel constraint rows.
    t.refactorize()?;
    let x_b = t.basic_values();
    let y: Vec<f64> = (0..n).map(|j| t.value_of(j, &x_b)).collect();
    let value: f64 = y.iter().zip(&p.objective).map(|(a, b)| a * b).sum();
    debug_assert!(
        p.max_violation(&y)
            <= 1e-7
                * p.rows
                    .iter()
                    .map(|(_, h)| h.abs())
                    .fold(1.0, f64::max),
        "simplex returned an infeasible point (violation {:.3e}, rows {}, vars {})",
        p.max_violation(&y),
        p.rows.len(),
        n
    );
    Ok((value, y))
}
