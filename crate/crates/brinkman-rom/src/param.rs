//! Random permeability models, the parameter box, and the affine coefficient
//! maps.

use crate::fem::{AssembledOperators, FComponentTag, FieldSolution, ModelKind};
use crate::linalg::{CsrMatrix, DVec, TripletBuilder};
use crate::rng::SplitMix64;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One interval per stochastic index; permeabilities are positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub intervals: Vec<(f64, f64)>,
}

impl ParameterBox {
    pub fn dimension(&self) -> usize {
        self.intervals.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (m, &(a, b)) in self.intervals.iter().enumerate() {
            if !(a > 0.0 && a < b && b.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "interval {m} = [{a}, {b}] must satisfy 0 < a < b"
                )));
            }
        }
        Ok(())
    }

    /// Componentwise membership with a relative rounding slack.
    pub fn check_membership(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dimension() {
            return Err(Error::ShapeMismatch {
                context: "parameter".into(),
                expected: format!("{}", self.dimension()),
                got: format!("{}", xi.len()),
            });
        }
        for (m, (&x, &(a, b))) in xi.iter().zip(&self.intervals).enumerate() {
            let slack = 1e-12 * (b - a).max(a.abs());
            if !(x >= a - slack && x <= b + slack) {
                return Err(Error::OutOfBox {
                    index: m,
                    value: x,
                    lo: a,
                    hi: b,
                });
            }
        }
        Ok(())
    }

    /// The anchor: componentwise interval midpoint (the mean of the uniform
    /// law).
    pub fn anchor_point(&self) -> Vec<f64> {
        self.intervals.iter().map(|&(a, b)| 0.5 * (a + b)).collect()
    }

    /// Componentwise map of a unit-cube point into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dimension());
        u.iter()
            .zip(&self.intervals)
            .map(|(&t, &(a, b))| a + t * (b - a))
            .collect()
    }

    /// Componentwise normalization of a parameter to [0,1] (the metric used
    /// for nearest-constraint selection).
    pub fn to_unit(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.dimension());
        xi.iter()
            .zip(&self.intervals)
            .map(|(&x, &(a, b))| (x - a) / (b - a))
            .collect()
    }
}

/// Which of the three model problems generates the permeability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermeabilityKind {
    /// k I per subdomain
    Iso,
    /// diag(k_x, k_y) with k_x < k_y (vertical flow favored)
    Aniso1,
    /// diag(k_x, k_y) with k_x > k_y (horizontal flow favored)
    Aniso2,
}

impl PermeabilityKind {
    pub fn model_kind(self) -> ModelKind {
        match self {
            PermeabilityKind::Iso => ModelKind::Iso,
            _ => ModelKind::Aniso,
        }
    }
}

/// Exponent ranges of the interval centers.
const ISO_EXP: (f64, f64) = (-6.0, -3.0);
const SMALL_AXIS_EXP: (f64, f64) = (-6.0, -4.75);
const LARGE_AXIS_EXP: (f64, f64) = (-4.25, -3.0);

/// Generator of the per-subdomain permeability intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermeabilityModel {
    pub kind: PermeabilityKind,
    pub n_sub: usize,
    pub seed: u64,
}

impl PermeabilityModel {
    /// Stochastic dimension: one index per subdomain, two for anisotropic
    /// models (k_x, k_y consecutive, subdomains in row-major order from the
    /// bottom-left).
    pub fn dimension(&self) -> usize {
        let subs = self.n_sub * self.n_sub;
        match self.kind {
            PermeabilityKind::Iso => subs,
            _ => 2 * subs,
        }
    }

    /// Exponent range for stochastic index `m`.
    fn exponent_range(&self, m: usize) -> (f64, f64) {
        match self.kind {
            PermeabilityKind::Iso => ISO_EXP,
            PermeabilityKind::Aniso1 => {
                if m % 2 == 0 {
                    SMALL_AXIS_EXP
                } else {
                    LARGE_AXIS_EXP
                }
            }
            PermeabilityKind::Aniso2 => {
                if m % 2 == 0 {
                    LARGE_AXIS_EXP
                } else {
                    SMALL_AXIS_EXP
                }
            }
        }
    }

    /// Draw the per-index intervals: a Beta(0.5, 0.5) exponent (arcsine
    /// inverse CDF) mapped into the range, relative half width uniform in
    /// [0.05, 0.15].
    pub fn generate_intervals(&self) -> ParameterBox {
        let mut rng = SplitMix64::new(self.seed);
        let intervals = (0..self.dimension())
            .map(|m| {
                let u = rng.next_f64();
                let beta = beta_half_inverse_cdf(u);
                let (lo, hi) = self.exponent_range(m);
                let c = lo + beta * (hi - lo);
                let r = rng.uniform(0.05, 0.15);
                interval_from_exponent(c, r)
            })
            .collect();
        ParameterBox { intervals }
    }
}

/// Inverse CDF of Beta(0.5, 0.5): the arcsine law.
pub fn beta_half_inverse_cdf(u: f64) -> f64 {
    let s = (0.5 * std::f64::consts::PI * u).sin();
    s * s
}

/// [(1-r) 10^c, (1+r) 10^c]
pub fn interval_from_exponent(c: f64, r: f64) -> (f64, f64) {
    let center = 10f64.powf(c);
    ((1.0 - r) * center, (1.0 + r) * center)
}

/// Coefficient maps of the affine decomposition for one model problem,
/// together with precomputed structure for fast assembly at a parameter.
#[derive(Debug, Clone)]
pub struct AffineDecomposition {
    pub parameter_box: ParameterBox,
    pub model_kind: ModelKind,
    pub n_a: usize,
    pub n_f: usize,
    f_tags: Vec<FComponentTag>,
    /// union sparsity skeleton of A(xi)
    skeleton: CsrMatrix,
    /// positions of the Stokes entries in the skeleton
    stokes_map: Vec<usize>,
    /// positions of each Darcy block's entries in the skeleton
    darcy_maps: Vec<Vec<usize>>,
}

impl AffineDecomposition {
    pub fn new(ops: &AssembledOperators, parameter_box: ParameterBox) -> Result<Self> {
        parameter_box.validate()?;
        let expected_dim = ops.darcy_blocks.len();
        if parameter_box.dimension() != expected_dim {
            return Err(Error::ShapeMismatch {
                context: "affine decomposition".into(),
                expected: format!("{expected_dim} stochastic indices"),
                got: format!("{}", parameter_box.dimension()),
            });
        }
        // Union pattern of the Stokes matrix and every Darcy block.
        let n = ops.m_v.n_rows();
        let mut union = TripletBuilder::new(n, n);
        for i in 0..n {
            let (cols, vals) = ops.a_stokes.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                union.add(i, j, v);
            }
        }
        for d in &ops.darcy_blocks {
            for i in 0..n {
                let (cols, vals) = d.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    union.add(i, j, v.abs() + 1.0);
                }
            }
        }
        let skeleton = union.finish_symmetric();
        let stokes_map = ops
            .a_stokes
            .index_map_into(&skeleton)
            .expect("stokes pattern inside union");
        let darcy_maps = ops
            .darcy_blocks
            .iter()
            .map(|d| {
                d.index_map_into(&skeleton)
                    .expect("darcy pattern inside union")
            })
            .collect();
        Ok(Self {
            parameter_box,
            model_kind: ops.model_kind,
            n_a: 1 + ops.darcy_blocks.len(),
            n_f: ops.f_components.len(),
            f_tags: ops.f_component_tags.clone(),
            skeleton,
            stokes_map,
            darcy_maps,
        })
    }

    pub fn dimension(&self) -> usize {
        self.parameter_box.dimension()
    }

    pub fn anchor_point(&self) -> Vec<f64> {
        self.parameter_box.anchor_point()
    }

    /// theta^A(xi): first entry 1 (Stokes), then the inverse permeabilities
    /// in component order.
    pub fn theta_a(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.parameter_box.check_membership(xi)?;
        let mut theta = Vec::with_capacity(self.n_a);
        theta.push(1.0);
        theta.extend(xi.iter().map(|&x| 1.0 / x));
        Ok(theta)
    }

    /// theta^f(xi): the sub-vector aligned with the inflow-adjacent
    /// right-hand-side components.
    pub fn theta_f(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.parameter_box.check_membership(xi)?;
        Ok(self
            .f_tags
            .iter()
            .map(|tag| match tag {
                FComponentTag::Stokes => 1.0,
                FComponentTag::Darcy { stochastic_index } => 1.0 / xi[*stochastic_index],
            })
            .collect())
    }

    /// A(xi) = A_S + sum_k theta_k A_D^k on the shared sparsity skeleton and
    /// f(xi) = sum theta^f_i f_i.
    pub fn assemble_at(&self, ops: &AssembledOperators, xi: &[f64]) -> Result<(CsrMatrix, DVec)> {
        let theta = self.theta_a(xi)?;
        let mut a = self.skeleton.clone();
        a.values_mut().fill(0.0);
        {
            let vals = a.values_mut();
            for (slot, &v) in self.stokes_map.iter().zip(ops.a_stokes.values()) {
                vals[*slot] += v;
            }
            for (k, (map, d)) in self.darcy_maps.iter().zip(&ops.darcy_blocks).enumerate() {
                let t = theta[k + 1];
                for (slot, &v) in map.iter().zip(d.values()) {
                    vals[*slot] += t * v;
                }
            }
        }
        let theta_f = self.theta_f(xi)?;
        let mut f = DVec::zeros(ops.n_velocity_free);
        for (t, fc) in theta_f.iter().zip(&ops.f_components) {
            f += fc * *t;
        }
        Ok((a, f))
    }

    /// Assemble and solve the high-fidelity system at `xi`.
    pub fn solve_at(&self, ops: &AssembledOperators, xi: &[f64]) -> Result<FieldSolution> {
        let (a, f) = self.assemble_at(ops, xi)?;
        let mut sol = crate::fem::solve_high_fidelity(ops, &a, &f)?;
        sol.xi = xi.to_vec();
        Ok(sol)
    }
}

// --- Sidecar persistence ------------------------------------------------------

const PARAMETER_BOX_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParameterBoxFile {
    format: String,
    version: u32,
    model: PermeabilityModel,
    intervals: Vec<(f64, f64)>,
}

/// Persist the generated intervals so experiments re-run bit-identically.
pub fn save_parameter_box(
    path: &Path,
    model: &PermeabilityModel,
    parameter_box: &ParameterBox,
) -> Result<()> {
    let file = ParameterBoxFile {
        format: "parameter-box".into(),
        version: PARAMETER_BOX_VERSION,
        model: *model,
        intervals: parameter_box.intervals.clone(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text).map_err(Error::io(path))
}

/// Parse and validate a persisted parameter box.
pub fn load_parameter_box(path: &Path) -> Result<(PermeabilityModel, ParameterBox)> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_parameter_box(&text)
}

/// Parse the sidecar format from text (also the fuzzed entry point).
pub fn parse_parameter_box(text: &str) -> Result<(PermeabilityModel, ParameterBox)> {
    let file: ParameterBoxFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != "parameter-box" {
        return Err(Error::Parse(format!("unknown format {:?}", file.format)));
    }
    if file.version != PARAMETER_BOX_VERSION {
        return Err(Error::FormatVersion {
            what: "parameter-box".into(),
            got: file.version,
            expected: PARAMETER_BOX_VERSION,
        });
    }
    let parameter_box = ParameterBox {
        intervals: file.intervals,
    };
    parameter_box.validate()?;
    if file.model.n_sub == 0 {
        return Err(Error::InvalidConfig("n_sub must be positive".into()));
    }
    if parameter_box.dimension() != file.model.dimension() {
        return Err(Error::ShapeMismatch {
            context: "parameter-box file".into(),
            expected: format!("{}", file.model.dimension()),
            got: format!("{}", parameter_box.dimension()),
        });
    }
    Ok((file.model, parameter_box))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_operators, BoundaryConditions, MeshConfig};

    #[test]
    fn interval_formula_examples() {
        let (a, b) = interval_from_exponent(-3.0, 0.1);
        assert!((a - 0.9e-3).abs() < 1e-18);
        assert!((b - 1.1e-3).abs() < 1e-18);

        let (a, b) = interval_from_exponent(-4.0, 0.05);
        // width / center = 2r
        let ratio = (b - a) / (0.5 * (a + b));
        assert!((ratio - 0.1).abs() < 1e-14);
    }

    #[test]
    fn generated_intervals_stay_in_construction_bounds() {
        let model = PermeabilityModel {
            kind: PermeabilityKind::Iso,
            n_sub: 9,
            seed: 42,
        };
        let pb = model.generate_intervals();
        assert_eq!(pb.dimension(), 81);
        pb.validate().unwrap();
        for &(a, b) in &pb.intervals {
            assert!(a >= 0.85e-6 - 1e-20, "{a}");
            assert!(b <= 1.15e-3 + 1e-18, "{b}");
            let r = (b - a) / (a + b);
            assert!((0.05 - 1e-12..=0.15 + 1e-12).contains(&r), "r = {r}");
        }
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let model = PermeabilityModel {
            kind: PermeabilityKind::Aniso1,
            n_sub: 6,
            seed: 7,
        };
        let a = model.generate_intervals();
        let b = model.generate_intervals();
        assert_eq!(a, b);
    }

    #[test]
    fn aniso_axes_use_their_exponent_ranges() {
        let model = PermeabilityModel {
            kind: PermeabilityKind::Aniso1,
            n_sub: 4,
            seed: 3,
        };
        let pb = model.generate_intervals();
        for (m, &(a, b)) in pb.intervals.iter().enumerate() {
            if m % 2 == 0 {
                // x axis small: centers in [1e-6, 10^-4.75]
                assert!(b <= 1.15 * 10f64.powf(-4.75) + 1e-18, "x axis: {b}");
            } else {
                // y axis large: centers in [10^-4.25, 1e-3]
                assert!(a >= 0.85 * 10f64.powf(-4.25) - 1e-18, "y axis: {a}");
            }
        }
        // aniso2 swaps the axes
        let model2 = PermeabilityModel {
            kind: PermeabilityKind::Aniso2,
            n_sub: 4,
            seed: 3,
        };
        let pb2 = model2.generate_intervals();
        assert!(pb2.intervals[0].0 >= 0.85 * 10f64.powf(-4.25) - 1e-18);
        assert!(pb2.intervals[1].1 <= 1.15 * 10f64.powf(-4.75) + 1e-18);
    }

    #[test]
    fn anchor_is_interval_midpoint() {
        let pb = ParameterBox {
            intervals: vec![(1e-30, 2.0), (0.9e-3, 1.1e-3)],
        };
        let c = pb.anchor_point();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!((c[1] - 1.0e-3).abs() < 1e-18);
    }

    fn tiny_setup(
        kind: PermeabilityKind,
        n_sub: usize,
    ) -> (AssembledOperators, AffineDecomposition) {
        let ops = build_operators(
            MeshConfig::new(n_sub, 2).unwrap(),
            BoundaryConditions::default(),
            kind.model_kind(),
            1e-3,
        )
        .unwrap();
        let model = PermeabilityModel {
            kind,
            n_sub,
            seed: 42,
        };
        let pb = model.generate_intervals();
        let dec = AffineDecomposition::new(&ops, pb).unwrap();
        (ops, dec)
    }

    #[test]
    fn theta_lengths_match_published_counts() {
        let (_, dec) = tiny_setup(PermeabilityKind::Aniso1, 6);
        assert_eq!(dec.n_a, 73);
        assert_eq!(dec.n_f, 7);
        let anchor = dec.anchor_point();
        assert_eq!(dec.theta_a(&anchor).unwrap().len(), 73);
        assert_eq!(dec.theta_f(&anchor).unwrap().len(), 7);
    }

    #[test]
    fn theta_values_are_inverse_permeabilities() {
        let (_, dec) = tiny_setup(PermeabilityKind::Iso, 2);
        let anchor = dec.anchor_point();
        let theta = dec.theta_a(&anchor).unwrap();
        assert_eq!(theta[0], 1.0);
        for (m, &(a, b)) in dec.parameter_box.intervals.iter().enumerate() {
            assert!((theta[m + 1] - 2.0 / (a + b)).abs() <= 1e-12 * theta[m + 1]);
            assert!(theta[m + 1] >= 1.0 / b - 1e-12 * theta[m + 1]);
        }
    }

    #[test]
    fn out_of_box_parameter_rejected() {
        let (_, dec) = tiny_setup(PermeabilityKind::Iso, 2);
        let mut xi = dec.anchor_point();
        xi[1] = dec.parameter_box.intervals[1].1 * 2.0;
        assert!(matches!(
            dec.theta_a(&xi).unwrap_err(),
            Error::OutOfBox { index: 1, .. }
        ));
    }

    #[test]
    fn single_subdomain_assembly_is_two_term_sum() {
        let (ops, dec) = tiny_setup(PermeabilityKind::Iso, 1);
        let xi = dec.anchor_point();
        let (a, _) = dec.assemble_at(&ops, &xi).unwrap();
        let expected = {
            let mut e = ops.a_stokes.to_dense();
            e += ops.darcy_blocks[0].to_dense() * (1.0 / xi[0]);
            e
        };
        let defect = (a.to_dense() - expected).abs().max();
        assert!(defect <= 1e-12, "defect {defect:.3e}");
    }

    #[test]
    fn affine_structure_in_differences() {
        let (ops, dec) = tiny_setup(PermeabilityKind::Iso, 2);
        let lo: Vec<f64> = dec.parameter_box.intervals.iter().map(|i| i.0).collect();
        let hi: Vec<f64> = dec.parameter_box.intervals.iter().map(|i| i.1).collect();
        let (a_lo, _) = dec.assemble_at(&ops, &lo).unwrap();
        let (a_hi, _) = dec.assemble_at(&ops, &hi).unwrap();
        // The difference must be exactly the theta-weighted Darcy sum: no
        // Stokes contribution.
        let mut rng = SplitMix64::new(10);
        let v = DVec::from_fn(ops.n_velocity_free, |_, _| rng.symmetric());
        let diff = a_lo.mul_vec(&v) - a_hi.mul_vec(&v);
        let mut expected = DVec::zeros(ops.n_velocity_free);
        for (m, d) in ops.darcy_blocks.iter().enumerate() {
            let dt = 1.0 / lo[m] - 1.0 / hi[m];
            expected += d.mul_vec(&v) * dt;
        }
        let rel = (&diff - &expected).norm() / expected.norm();
        assert!(rel <= 1e-12, "darcy-only difference violated: {rel:.3e}");
    }

    #[test]
    fn saddle_condition_number_has_moderate_magnitude() {
        // Order-of-magnitude anchor only: the estimate depends on the draws
        // and the estimator.
        let (ops, dec) = tiny_setup(PermeabilityKind::Iso, 1);
        let xi = dec.anchor_point();
        let (a, _) = dec.assemble_at(&ops, &xi).unwrap();
        let saddle = crate::fem::assemble_saddle(&a, &ops.b_div).to_dense();
        let svd = saddle.svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = smax / smin;
        assert!(cond > 1e1 && cond < 1e9, "cond = {cond:.3e}");
    }

    #[test]
    fn sidecar_roundtrip_and_validation() {
        let model = PermeabilityModel {
            kind: PermeabilityKind::Iso,
            n_sub: 3,
            seed: 11,
        };
        let pb = model.generate_intervals();
        let dir = std::env::temp_dir().join("brinkman_rom_param_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("intervals.json");
        save_parameter_box(&path, &model, &pb).unwrap();
        let (model2, pb2) = load_parameter_box(&path).unwrap();
        assert_eq!(model, model2);
        assert_eq!(pb, pb2);

        assert!(parse_parameter_box("{").is_err());
        assert!(parse_parameter_box(
            "{\"format\":\"x\",\"version\":1,\"model\":{\"kind\":\"iso\",\"n_sub\":1,\"seed\":0},\"intervals\":[[0.1,0.2]]}"
        )
        .is_err());
        // dimension mismatch
        assert!(parse_parameter_box(
            "{\"format\":\"parameter-box\",\"version\":1,\"model\":{\"kind\":\"iso\",\"n_sub\":2,\"seed\":0},\"intervals\":[[0.1,0.2]]}"
        )
        .is_err());
        // negative interval
        assert!(parse_parameter_box(
            "{\"format\":\"parameter-box\",\"version\":1,\"model\":{\"kind\":\"iso\",\"n_sub\":1,\"seed\":0},\"intervals\":[[-0.1,0.2]]}"
        )
        .is_err());
    }
}
