//! Q2-P(-1) mixed finite elements on the unit square.
//!
//! The domain [0,1]^2 is split into `n_sub x n_sub` square subdomains, each
//! into `n_elem x n_elem` square elements. Velocity uses continuous
//! biquadratic elements (two components per node), pressure uses
//! discontinuous linears `{1, x - x_c, y - y_c}` per element. Dirichlet
//! velocity dofs (parabolic inflow on the left edge, no-slip walls on top and
//! bottom) are eliminated; the right edge is a do-nothing outflow.

mod assemble;
mod field_io;
mod solve;

pub use assemble::{build_operators, count_affine_terms, AssembledOperators, FComponentTag};
pub use field_io::{fmt17, write_field, FieldSpace};
pub use solve::{assemble_saddle, mass_conservation_defect, solve_high_fidelity, FieldSolution};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Mesh sizes: subdomains per side and elements per subdomain side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub n_sub: usize,
    pub n_elem: usize,
}

impl MeshConfig {
    pub fn new(n_sub: usize, n_elem: usize) -> Result<Self> {
        if n_sub < 1 || n_elem < 1 {
            return Err(Error::InvalidMesh(format!(
                "need at least one subdomain and one element per side, got {n_sub} x {n_elem}"
            )));
        }
        Ok(Self { n_sub, n_elem })
    }

    /// Elements per side of the full grid.
    pub fn side(&self) -> usize {
        self.n_sub * self.n_elem
    }

    pub fn n_elements(&self) -> usize {
        self.side() * self.side()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.side() as f64
    }

    /// Velocity nodes per side (biquadratic grid).
    pub fn nodes_per_side(&self) -> usize {
        2 * self.side() + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_side() * self.nodes_per_side()
    }

    pub fn n_pressure_dof(&self) -> usize {
        3 * self.n_elements()
    }

    pub fn node_id(&self, ix: usize, iy: usize) -> usize {
        iy * self.nodes_per_side() + ix
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let nps = self.nodes_per_side();
        let ix = node % nps;
        let iy = node / nps;
        let step = 0.5 * self.h();
        (ix as f64 * step, iy as f64 * step)
    }

    /// Dirichlet nodes: inflow (left edge) and walls (bottom, top).
    pub fn is_dirichlet_node(&self, node: usize) -> bool {
        let nps = self.nodes_per_side();
        let ix = node % nps;
        let iy = node / nps;
        ix == 0 || iy == 0 || iy == nps - 1
    }

    /// Subdomain of an element, in row-major order from the bottom-left.
    pub fn subdomain_of_element(&self, ex: usize, ey: usize) -> usize {
        (ey / self.n_elem) * self.n_sub + (ex / self.n_elem)
    }
}

/// Velocity boundary data: a parabolic inflow profile on the left edge with
/// configurable peak, zero velocity on the walls, do-nothing outflow on the
/// right edge.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub inflow_peak: f64,
}

impl Default for BoundaryConditions {
    fn default() -> Self {
        Self { inflow_peak: 1.0 }
    }
}

impl BoundaryConditions {
    /// Inflow x-velocity at height y: peak * 4 y (1 - y). Vanishes at the
    /// corners; the y-component is identically zero.
    pub fn inflow_profile(&self, y: f64) -> f64 {
        self.inflow_peak * 4.0 * y * (1.0 - y)
    }
}

/// Which Darcy blocks get assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// one scalar permeability per subdomain
    Iso,
    /// diag(k_x, k_y) per subdomain: one Darcy block per (subdomain, axis)
    Aniso,
}

/// Free-dof bookkeeping for the velocity space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DofMap {
    /// free index of (node, component), `usize::MAX` when constrained
    free_of_full: Vec<usize>,
    /// full dof (2*node + component) of each free index
    full_of_free: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &MeshConfig) -> Self {
        let n_nodes = mesh.n_nodes();
        let mut free_of_full = vec![usize::MAX; 2 * n_nodes];
        let mut full_of_free = Vec::new();
        for node in 0..n_nodes {
            if mesh.is_dirichlet_node(node) {
                continue;
            }
            for comp in 0..2 {
                free_of_full[2 * node + comp] = full_of_free.len();
                full_of_free.push(2 * node + comp);
            }
        }
        Self {
            free_of_full,
            full_of_free,
        }
    }

    pub fn n_free(&self) -> usize {
        self.full_of_free.len()
    }

    /// Free index of full dof `2*node + comp`, if unconstrained.
    pub fn free_index(&self, full_dof: usize) -> Option<usize> {
        match self.free_of_full[full_dof] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    pub fn full_index(&self, free_dof: usize) -> usize {
        self.full_of_free[free_dof]
    }
}
