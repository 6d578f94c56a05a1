//! Generalized symmetric eigensolves.
//!
//! LOBPCG-style preconditioned iteration with block size 1 for the smallest
//! eigenvalue of `A x = lambda M x` (M symmetric positive definite), with an
//! inverse-iteration fallback when the preconditioner applies an exact
//! inverse. The largest eigenvalue is obtained from the swapped pencil.

use super::factor::Factorization;
use super::sparse::CsrMatrix;
use super::{DMat, DVec};
use crate::rng::SplitMix64;
use crate::{Error, Result};

/// Anything that can apply a linear map to a vector. Factorizations apply the
/// inverse of their matrix.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVec) -> DVec;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }
    fn apply(&self, x: &DVec) -> DVec {
        self.mul_vec(x)
    }
}

impl LinearOperator for Factorization {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &DVec) -> DVec {
        self.solve(x)
    }
}

/// Options for the iterative eigensolvers. Defaults follow the tooling the
/// experiments were run with: at most 1000 iterations at tolerance 1e-10.
#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-10,
            seed: 0x5eed_e16e,
        }
    }
}

/// Smallest eigenpair of `a x = lambda m x`; the returned eigenvector is
/// m-normalized. `a` may be indefinite; `m` must be SPD.
pub fn eig_smallest_generalized(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    preconditioner: Option<&dyn LinearOperator>,
    opts: EigOptions,
) -> Result<(f64, DVec)> {
    let n = a.dim();
    if m.dim() != n {
        return Err(Error::ShapeMismatch {
            context: "eig_smallest_generalized".into(),
            expected: format!("{n}"),
            got: format!("{}", m.dim()),
        });
    }
    let mut rng = SplitMix64::new(opts.seed);
    let mut x = DVec::from_fn(n, |_, _| rng.symmetric());
    m_normalize(&mut x, m)?;
    let mut p: Option<DVec> = None;
    let mut last_residual = f64::INFINITY;

    for _ in 0..opts.max_iter {
        let ax = a.apply(&x);
        let mx = m.apply(&x);
        let lambda = x.dot(&ax) / x.dot(&mx);
        let r = &ax - &mx * lambda;
        last_residual = r.norm();
        if last_residual <= opts.tol * ax.norm().max(f64::MIN_POSITIVE) {
            return Ok((lambda, x));
        }
        let w = match preconditioner {
            Some(t) => t.apply(&r),
            None => r.clone(),
        };
        // Rayleigh-Ritz on span{x, w, p} with an m-orthonormal basis.
        let mut basis: Vec<DVec> = Vec::with_capacity(3);
        push_m_orthonormal(&mut basis, x.clone(), m)?;
        push_m_orthonormal(&mut basis, w, m)?;
        if let Some(pv) = &p {
            push_m_orthonormal(&mut basis, pv.clone(), m)?;
        }
        if basis.len() < 2 {
            // Search space collapsed; residual says we are not converged, so
            // restart the implicit conjugate direction.
            p = None;
            continue;
        }
        let k = basis.len();
        let mut projected = DMat::zeros(k, k);
        let a_basis: Vec<DVec> = basis.iter().map(|b| a.apply(b)).collect();
        for i in 0..k {
            for j in i..k {
                let v = basis[i].dot(&a_basis[j]);
                projected[(i, j)] = v;
                projected[(j, i)] = v;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(projected);
        let mut best = 0;
        for i in 1..k {
            if eig.eigenvalues[i] < eig.eigenvalues[best] {
                best = i;
            }
        }
        let c = eig.eigenvectors.column(best);
        let mut x_new = DVec::zeros(n);
        let mut p_new = DVec::zeros(n);
        for (i, b) in basis.iter().enumerate() {
            x_new += b * c[i];
            if i > 0 {
                p_new += b * c[i];
            }
        }
        m_normalize(&mut x_new, m)?;
        x = x_new;
        p = if p_new.norm() > 0.0 { Some(p_new) } else { None };
    }

    // Fallback: inverse iteration through the preconditioner (exact inverses
    // are supplied in every internal use).
    if let Some(t) = preconditioner {
        let mut x = DVec::from_fn(n, |_, _| rng.symmetric());
        m_normalize(&mut x, m)?;
        for _ in 0..opts.max_iter {
            let mut y = t.apply(&m.apply(&x));
            m_normalize(&mut y, m)?;
            x = y;
            let ax = a.apply(&x);
            let mx = m.apply(&x);
            let lambda = x.dot(&ax) / x.dot(&mx);
            let r = &ax - &mx * lambda;
            last_residual = r.norm();
            if last_residual <= opts.tol * ax.norm().max(f64::MIN_POSITIVE) {
                return Ok((lambda, x));
            }
        }
    }
    Err(Error::EigNoConvergence {
        iterations: opts.max_iter,
        residual: last_residual,
    })
}

/// Largest eigenpair of `a x = lambda m x` for SPD `a`, computed as the
/// reciprocal of the smallest eigenvalue of the swapped pencil
/// `m x = mu a x`.
pub fn eig_largest_generalized(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    preconditioner: Option<&dyn LinearOperator>,
    opts: EigOptions,
) -> Result<(f64, DVec)> {
    let (mu, x) = eig_smallest_generalized(m, a, preconditioner, opts)?;
    if mu <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "swapped pencil produced nonpositive eigenvalue {mu:.3e}; numerator not SPD"
        )));
    }
    Ok((1.0 / mu, x))
}

fn m_normalize(x: &mut DVec, m: &dyn LinearOperator) -> Result<()> {
    let nrm2 = x.dot(&m.apply(x));
    if nrm2 <= 0.0 || !nrm2.is_finite() {
        return Err(Error::NotPositiveDefinite(format!(
            "vector has nonpositive M-norm {nrm2:.3e}; mass matrix not SPD"
        )));
    }
    *x /= nrm2.sqrt();
    Ok(())
}

fn push_m_orthonormal(basis: &mut Vec<DVec>, mut v: DVec, m: &dyn LinearOperator) -> Result<()> {
    let initial2 = v.dot(&m.apply(&v));
    if initial2 < 0.0 || !initial2.is_finite() {
        return Err(Error::NotPositiveDefinite(format!(
            "probe has M-norm^2 = {initial2:.3e}; mass matrix not SPD"
        )));
    }
    let initial = initial2.sqrt();
    if initial == 0.0 {
        return Ok(());
    }
    for _ in 0..2 {
        for b in basis.iter() {
            let c = b.dot(&m.apply(&v));
            v -= b * c;
        }
    }
    let nrm2 = v.dot(&m.apply(&v));
    if nrm2 < 0.0 || !nrm2.is_finite() {
        return Err(Error::NotPositiveDefinite(format!(
            "projected probe has M-norm^2 = {nrm2:.3e}; mass matrix not SPD"
        )));
    }
    let nrm = nrm2.sqrt();
    if nrm > 1e-10 * initial {
        basis.push(v / nrm);
    }
    Ok(())
}

// --- Dense oracle ------------------------------------------------------------

/// All eigenvalues of the dense symmetric pencil `(a, m)`, ascending. Used as
/// the independent full-spectrum oracle for small problems.
pub fn dense_generalized_eigenvalues(a: &DMat, m: &DMat) -> Vec<f64> {
    let chol = nalgebra::Cholesky::new(m.clone()).expect("oracle mass matrix must be SPD");
    let l = chol.l();
    // C = L^-1 A L^-T
    let x = l
        .solve_lower_triangular(a)
        .expect("triangular solve in oracle");
    let c = l
        .solve_lower_triangular(&x.transpose())
        .expect("triangular solve in oracle");
    // Symmetrize against rounding before the dense eigensolve.
    let c = (&c + c.transpose()) * 0.5;
    let mut vals: Vec<f64> = nalgebra::SymmetricEigen::new(c)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Smallest eigenvalue of the dense symmetric pencil `(a, m)`.
pub fn dense_generalized_smallest(a: &DMat, m: &DMat) -> f64 {
    dense_generalized_eigenvalues(a, m)[0]
}

/// Largest eigenvalue of the dense symmetric pencil `(a, m)`.
pub fn dense_generalized_largest(a: &DMat, m: &DMat) -> f64 {
    *dense_generalized_eigenvalues(a, m).last().unwrap()
}
