//! Assembly of the parameter-independent operators.

use super::{BoundaryConditions, DofMap, MeshConfig, ModelKind};
use crate::linalg::{CsrMatrix, DVec, TripletBuilder};
use crate::quadrature::gauss_legendre_reference;
use crate::Result;
use rayon::prelude::*;

/// What multiplies a right-hand-side component in the affine decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FComponentTag {
    /// paired with the constant Stokes coefficient
    Stokes,
    /// paired with 1/xi of the given stochastic index
    Darcy { stochastic_index: usize },
}

/// All parameter-independent matrices and vectors of one model problem,
/// assembled on the free velocity dofs after Dirichlet elimination.
#[derive(Debug, Clone)]
pub struct AssembledOperators {
    pub mesh: MeshConfig,
    pub bc: BoundaryConditions,
    pub model_kind: ModelKind,
    pub viscosity: f64,
    pub dof_map: DofMap,
    /// Stokes stiffness: viscosity times the velocity gram matrix.
    pub a_stokes: CsrMatrix,
    /// Unit-coefficient Darcy mass blocks: one per subdomain (iso) or per
    /// (subdomain, axis) with the x block first (aniso).
    pub darcy_blocks: Vec<CsrMatrix>,
    /// Negative divergence: pressure dofs by free velocity dofs.
    pub b_div: CsrMatrix,
    /// Velocity gram matrix for the V inner product (grad : grad).
    pub m_v: CsrMatrix,
    /// Pressure L2 mass (diagonal for the centroid-centered linear basis).
    pub m_q: CsrMatrix,
    /// Velocity L2 mass on all nodal dofs (used for moment-error norms).
    pub m_vel_l2_full: CsrMatrix,
    /// Right-hand-side components of the lift functional, aligned with
    /// `f_component_tags`.
    pub f_components: Vec<DVec>,
    pub f_component_tags: Vec<FComponentTag>,
    /// Discretization of the mass-equation data: -B w on pressure dofs.
    pub g: DVec,
    /// Dirichlet lift on all nodal dofs (inflow interpolant, zero elsewhere).
    pub lift_full: DVec,
    pub n_velocity_free: usize,
    pub n_pressure: usize,
}

impl AssembledOperators {
    /// Scatter a free-dof velocity vector to all nodal dofs, optionally
    /// adding `lift_scale` times the Dirichlet lift.
    pub fn scatter_velocity(&self, free: &DVec, lift_scale: f64) -> DVec {
        assert_eq!(free.len(), self.n_velocity_free);
        let mut full = &self.lift_full * lift_scale;
        for i in 0..self.n_velocity_free {
            full[self.dof_map.full_index(i)] += free[i];
        }
        full
    }

    /// Number of affine matrix terms (Stokes plus Darcy blocks).
    pub fn n_affine_matrices(&self) -> usize {
        1 + self.darcy_blocks.len()
    }
}

/// Affine-term counts for a model kind: matrices and right-hand-side vectors.
pub fn count_affine_terms(model_kind: ModelKind, n_sub: usize) -> (usize, usize) {
    match model_kind {
        ModelKind::Iso => (n_sub * n_sub + 1, n_sub + 1),
        ModelKind::Aniso => (2 * n_sub * n_sub + 1, n_sub + 1),
    }
}

/// Reference-element tensors for the 9-node biquadratic square, integrated
/// with the 3x3 Gauss-Legendre rule (exact for these polynomials).
struct ReferenceElement {
    stiff: [[f64; 9]; 9],
    mass: [[f64; 9]; 9],
    /// b0[c][l]: constant pressure mode against d_c N_l
    b0: [[f64; 9]; 2],
    /// b1[d][c][l]: linear pressure mode (zeta or eta) against d_c N_l
    b1: [[[f64; 9]; 2]; 2],
}

pub(super) fn shape_1d(t: f64) -> [f64; 3] {
    [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)]
}

pub(super) fn shape_1d_deriv(t: f64) -> [f64; 3] {
    [t - 0.5, -2.0 * t, t + 0.5]
}

fn reference_element() -> ReferenceElement {
    let (qx, qw) = gauss_legendre_reference(3);
    let mut stiff = [[0.0; 9]; 9];
    let mut mass = [[0.0; 9]; 9];
    let mut b0 = [[0.0; 9]; 2];
    let mut b1 = [[[0.0; 9]; 2]; 2];
    for (iq, &zeta) in qx.iter().enumerate() {
        for (jq, &eta) in qx.iter().enumerate() {
            let w = qw[iq] * qw[jq];
            let lz = shape_1d(zeta);
            let le = shape_1d(eta);
            let dz = shape_1d_deriv(zeta);
            let de = shape_1d_deriv(eta);
            let mut n = [0.0; 9];
            let mut gz = [0.0; 9];
            let mut ge = [0.0; 9];
            for dy in 0..3 {
                for dx in 0..3 {
                    let l = dy * 3 + dx;
                    n[l] = lz[dx] * le[dy];
                    gz[l] = dz[dx] * le[dy];
                    ge[l] = lz[dx] * de[dy];
                }
            }
            for l in 0..9 {
                for m in l..9 {
                    stiff[l][m] += w * (gz[l] * gz[m] + ge[l] * ge[m]);
                    mass[l][m] += w * n[l] * n[m];
                }
                b0[0][l] += w * gz[l];
                b0[1][l] += w * ge[l];
                b1[0][0][l] += w * zeta * gz[l];
                b1[0][1][l] += w * zeta * ge[l];
                b1[1][0][l] += w * eta * gz[l];
                b1[1][1][l] += w * eta * ge[l];
            }
        }
    }
    for l in 0..9 {
        for m in 0..l {
            stiff[l][m] = stiff[m][l];
            mass[l][m] = mass[m][l];
        }
    }
    ReferenceElement {
        stiff,
        mass,
        b0,
        b1,
    }
}

struct ChunkAccumulator {
    m_v: TripletBuilder,
    darcy: Vec<TripletBuilder>,
    b_div: TripletBuilder,
    m_vel_full: TripletBuilder,
    stokes_f: DVec,
    darcy_f: Vec<DVec>,
    g: DVec,
}

/// Assemble every parameter-independent operator of the model problem.
pub fn build_operators(
    mesh: MeshConfig,
    bc: BoundaryConditions,
    model_kind: ModelKind,
    viscosity: f64,
) -> Result<AssembledOperators> {
    if viscosity <= 0.0 {
        return Err(crate::Error::InvalidConfig(format!(
            "viscosity must be positive, got {viscosity}"
        )));
    }
    MeshConfig::new(mesh.n_sub, mesh.n_elem)?;
    let side = mesh.side();
    let h = mesh.h();
    let dof_map = DofMap::new(&mesh);
    let nv_free = dof_map.n_free();
    let np = mesh.n_pressure_dof();
    let n_full = 2 * mesh.n_nodes();
    let n_blocks = match model_kind {
        ModelKind::Iso => mesh.n_sub * mesh.n_sub,
        ModelKind::Aniso => 2 * mesh.n_sub * mesh.n_sub,
    };
    let reference = reference_element();

    // Dirichlet lift: inflow interpolant on the left edge, zero elsewhere.
    let mut lift_full = DVec::zeros(n_full);
    let nps = mesh.nodes_per_side();
    for iy in 0..nps {
        let node = mesh.node_id(0, iy);
        let (_, y) = mesh.node_coords(node);
        lift_full[2 * node] = bc.inflow_profile(y);
    }

    // Per-band assembly with deterministic merge order.
    let chunks: Vec<ChunkAccumulator> = (0..side)
        .into_par_iter()
        .map(|ey| {
            let mut acc = ChunkAccumulator {
                m_v: TripletBuilder::new(nv_free, nv_free),
                darcy: (0..n_blocks)
                    .map(|_| TripletBuilder::new(nv_free, nv_free))
                    .collect(),
                b_div: TripletBuilder::new(np, nv_free),
                m_vel_full: TripletBuilder::new(n_full, n_full),
                stokes_f: DVec::zeros(nv_free),
                darcy_f: (0..mesh.n_sub).map(|_| DVec::zeros(nv_free)).collect(),
                g: DVec::zeros(np),
            };
            let mass_scale = 0.25 * h * h;
            for ex in 0..side {
                let elem = ey * side + ex;
                let subdomain = mesh.subdomain_of_element(ex, ey);
                // Inflow-adjacent subdomains are the leftmost column; their
                // rank is the subdomain row.
                let inflow_rank = if ex / mesh.n_elem == 0 {
                    Some(subdomain / mesh.n_sub)
                } else {
                    None
                };
                let mut nodes = [0usize; 9];
                for dy in 0..3 {
                    for dx in 0..3 {
                        nodes[dy * 3 + dx] = mesh.node_id(2 * ex + dx, 2 * ey + dy);
                    }
                }
                for comp in 0..2 {
                    let block = match model_kind {
                        ModelKind::Iso => subdomain,
                        ModelKind::Aniso => 2 * subdomain + comp,
                    };
                    for l in 0..9 {
                        let row_full = 2 * nodes[l] + comp;
                        let row_free = dof_map.free_index(row_full);
                        for m in 0..9 {
                            let col_full = 2 * nodes[m] + comp;
                            let col_free = dof_map.free_index(col_full);
                            let k_val = reference.stiff[l][m];
                            let m_val = mass_scale * reference.mass[l][m];
                            acc.m_vel_full.add(row_full, col_full, m_val);
                            match (row_free, col_free) {
                                (Some(r), Some(c)) => {
                                    acc.m_v.add(r, c, k_val);
                                    acc.darcy[block].add(r, c, m_val);
                                }
                                (Some(r), None) => {
                                    let w = lift_full[col_full];
                                    if w != 0.0 {
                                        acc.stokes_f[r] -= viscosity * k_val * w;
                                        if let Some(rank) = inflow_rank {
                                            acc.darcy_f[rank][r] -= m_val * w;
                                        }
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                }
                // Divergence rows: pressure dof 3*elem + k against velocity.
                for kp in 0..3 {
                    let p_row = 3 * elem + kp;
                    for comp in 0..2 {
                        for l in 0..9 {
                            let col_full = 2 * nodes[l] + comp;
                            let val = match kp {
                                0 => -0.5 * h * reference.b0[comp][l],
                                d => -0.25 * h * h * reference.b1[d - 1][comp][l],
                            };
                            if val == 0.0 {
                                continue;
                            }
                            match dof_map.free_index(col_full) {
                                Some(c) => acc.b_div.add(p_row, c, val),
                                None => {
                                    let w = lift_full[col_full];
                                    if w != 0.0 {
                                        acc.g[p_row] -= val * w;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut m_v = TripletBuilder::new(nv_free, nv_free);
    let mut darcy: Vec<TripletBuilder> = (0..n_blocks)
        .map(|_| TripletBuilder::new(nv_free, nv_free))
        .collect();
    let mut b_div = TripletBuilder::new(np, nv_free);
    let mut m_vel_full = TripletBuilder::new(n_full, n_full);
    let mut stokes_f = DVec::zeros(nv_free);
    let mut darcy_f: Vec<DVec> = (0..mesh.n_sub).map(|_| DVec::zeros(nv_free)).collect();
    let mut g = DVec::zeros(np);
    for acc in chunks {
        m_v.merge(acc.m_v);
        for (dst, src) in darcy.iter_mut().zip(acc.darcy) {
            dst.merge(src);
        }
        b_div.merge(acc.b_div);
        m_vel_full.merge(acc.m_vel_full);
        stokes_f += acc.stokes_f;
        for (dst, src) in darcy_f.iter_mut().zip(acc.darcy_f) {
            *dst += src;
        }
        g += acc.g;
    }

    let m_v = m_v.finish_symmetric();
    let a_stokes = m_v.scaled(viscosity);
    let darcy_blocks: Vec<CsrMatrix> = darcy.into_iter().map(|b| b.finish_symmetric()).collect();
    let b_div = b_div.finish();
    let m_vel_l2_full = m_vel_full.finish_symmetric();

    // Pressure mass: exactly diagonal in the centroid-centered basis.
    let mut mq_diag = Vec::with_capacity(np);
    let h2 = h * h;
    for _ in 0..mesh.n_elements() {
        mq_diag.push(h2);
        mq_diag.push(h2 * h2 / 12.0);
        mq_diag.push(h2 * h2 / 12.0);
    }
    let m_q = CsrMatrix::from_diagonal(&mq_diag);

    let mut f_components = vec![stokes_f];
    let mut f_component_tags = vec![FComponentTag::Stokes];
    for (rank, vec) in darcy_f.into_iter().enumerate() {
        let subdomain = rank * mesh.n_sub;
        let stochastic_index = match model_kind {
            ModelKind::Iso => subdomain,
            ModelKind::Aniso => 2 * subdomain,
        };
        f_components.push(vec);
        f_component_tags.push(FComponentTag::Darcy { stochastic_index });
    }

    Ok(AssembledOperators {
        mesh,
        bc,
        model_kind,
        viscosity,
        dof_map,
        a_stokes,
        darcy_blocks,
        b_div,
        m_v,
        m_q,
        m_vel_l2_full,
        f_components,
        f_component_tags,
        g,
        lift_full,
        n_velocity_free: nv_free,
        n_pressure: np,
    })
}
