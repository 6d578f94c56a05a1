//! High-fidelity saddle-point solves.

use super::AssembledOperators;
use crate::linalg::{factorize, CsrMatrix, DVec, FactorKind, TripletBuilder};
use crate::Result;

/// One high-fidelity solution on the free velocity dofs and pressure dofs.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub u: DVec,
    pub p: DVec,
    /// Parameter the system was assembled at (empty when solved from raw
    /// matrices).
    pub xi: Vec<f64>,
}

/// Assemble the saddle matrix [[A, B'], [B, 0]].
pub fn assemble_saddle(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let nv = a.n_rows();
    let np = b.n_rows();
    assert_eq!(a.n_cols(), nv);
    assert_eq!(b.n_cols(), nv);
    let n = nv + np;
    let mut builder = TripletBuilder::new(n, n);
    for i in 0..nv {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            builder.add(i, j, v);
        }
    }
    for i in 0..np {
        let (cols, vals) = b.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            builder.add(nv + i, j, v);
            builder.add(j, nv + i, v);
        }
    }
    builder.finish_symmetric()
}

/// Direct solve of the discrete saddle-point system at one assembled
/// parameter.
pub fn solve_high_fidelity(
    ops: &AssembledOperators,
    a_xi: &CsrMatrix,
    f_xi: &DVec,
) -> Result<FieldSolution> {
    let nv = ops.n_velocity_free;
    let np = ops.n_pressure;
    let saddle = assemble_saddle(a_xi, &ops.b_div);
    let factor = factorize(&saddle, FactorKind::SymmetricIndefinite)?;
    let mut rhs = DVec::zeros(nv + np);
    rhs.rows_mut(0, nv).copy_from(f_xi);
    rhs.rows_mut(nv, np).copy_from(&ops.g);
    let sol = factor.solve(&rhs);
    let u = sol.rows(0, nv).into_owned();
    let p = sol.rows(nv, np).into_owned();
    debug_assert!(
        mass_conservation_defect(ops, &u) <= 1e-8,
        "mass conservation violated; assembly broken"
    );
    Ok(FieldSolution {
        u,
        p,
        xi: Vec::new(),
    })
}

/// Max-norm defect of the discrete mass equation, relative to the data:
/// ||B u - g||_inf / max(1, ||g||_inf).
pub fn mass_conservation_defect(ops: &AssembledOperators, u: &DVec) -> f64 {
    let bu = ops.b_div.mul_vec(u);
    let mut defect = 0.0f64;
    let mut gmax = 1.0f64;
    for i in 0..bu.len() {
        defect = defect.max((bu[i] - ops.g[i]).abs());
        gmax = gmax.max(ops.g[i].abs());
    }
    defect / gmax
}
