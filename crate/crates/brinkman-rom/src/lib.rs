//! Certified reduced-basis / adaptive anchored-ANOVA solver for the stochastic
//! Stokes-Brinkman equations on 2D quadrilateral meshes.
//!
//! The pipeline: a Q2-P(-1) mixed finite element discretization with
//! subdomain-wise random permeability ([`fem`], [`param`]), successive
//! constraint method bounds on the parametric stability constants ([`scm`]),
//! greedy reduced-basis construction with rigorous residual-based a posteriori
//! error estimates ([`rb`]), and moment estimation by adaptive anchored-ANOVA
//! collocation ([`anova`]). The [`driver`] module wires these into runnable
//! experiments with a Monte Carlo reference and moment-error reports.

pub mod anova;
pub mod driver;
pub mod error;
pub mod fem;
pub mod halton;
pub mod linalg;
pub mod param;
pub mod quadrature;
pub mod rb;
pub mod rng;
pub mod scm;

pub use error::{Error, Result};
