//! Experiment orchestration: configuration files, the full pipeline
//! (assembly, SCM training, combined reduced-basis ANOVA, Monte Carlo
//! reference, moment-error reports), and artifact persistence.

mod mc;
mod report;

pub use mc::{monte_carlo_reference, McMoments};
pub use report::{
    format_report, report_errors, write_report_csv, ErrorRow, MomentField, MomentKind,
    MomentReport,
};

use crate::anova::Fields;
use crate::fem::{build_operators, AssembledOperators, BoundaryConditions, FieldSpace, MeshConfig};
use crate::halton::Halton;
use crate::linalg::EigOptions;
use crate::param::{save_parameter_box, AffineDecomposition, PermeabilityKind, PermeabilityModel};
use crate::rb::{
    estimate_with_solution, rb_anova_drive, save_rb_model, write_effectivity_csv, write_rb_trace,
    EffectivityRow, RbAnovaConfig, RbAnovaResult, RbContext, RbModel, StabilityBounds,
};
use crate::rng::SplitMix64;
use crate::scm::{
    compute_beta, save_scm_data, scm_train, write_scm_trace, ScmConfig, ScmData, ScmMode,
    StabilityConstants,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One experiment, parseable from a TOML file with full round-trip fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub anova: AnovaSection,
    pub rb: RbSection,
    pub scm: ScmSection,
    pub monte_carlo: McSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: PermeabilityKind,
    pub n_sub: usize,
    pub n_elem: usize,
    pub viscosity: f64,
    #[serde(default = "default_inflow_peak")]
    pub inflow_peak: f64,
    pub seed: u64,
}

fn default_inflow_peak() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnovaSection {
    pub quad_points: usize,
    pub eps_anova: f64,
    pub initial_level: usize,
    pub max_level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbSection {
    pub eps_rb: f64,
    #[serde(default = "default_offline_mb")]
    pub max_offline_mb: u64,
}

fn default_offline_mb() -> u64 {
    2048
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmSection {
    pub m_e: usize,
    pub m_p: usize,
    pub tol: f64,
    pub train_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        MeshConfig::new(self.problem.n_sub, self.problem.n_elem)?;
        if self.problem.viscosity <= 0.0 {
            return Err(Error::InvalidConfig("viscosity must be positive".into()));
        }
        if self.anova.quad_points == 0 {
            return Err(Error::InvalidConfig("quad_points must be positive".into()));
        }
        for (name, tol) in [
            ("eps_anova", self.anova.eps_anova),
            ("eps_rb", self.rb.eps_rb),
            ("scm tol", self.scm.tol),
        ] {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.anova.initial_level > self.anova.max_level {
            return Err(Error::InvalidConfig(format!(
                "initial level {} exceeds max level {}",
                self.anova.initial_level, self.anova.max_level
            )));
        }
        if self.anova.initial_level == 0 {
            return Err(Error::InvalidConfig("initial level must be >= 1".into()));
        }
        if self.scm.train_size == 0 {
            return Err(Error::InvalidConfig(
                "scm train_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn permeability_model(&self) -> PermeabilityModel {
        PermeabilityModel {
            kind: self.problem.kind,
            n_sub: self.problem.n_sub,
            seed: self.problem.seed,
        }
    }

    pub fn scm_config(&self) -> ScmConfig {
        ScmConfig {
            m_e: self.scm.m_e,
            m_p: self.scm.m_p,
            tol: self.scm.tol,
            train_size: self.scm.train_size,
            seed: self.problem.seed,
        }
    }
}

/// Assembled problem pieces shared by every pipeline phase.
pub struct Problem {
    pub ops: AssembledOperators,
    pub dec: AffineDecomposition,
    pub model: PermeabilityModel,
}

/// Assemble the operators and the affine decomposition for a config.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let ops = build_operators(
        MeshConfig::new(cfg.problem.n_sub, cfg.problem.n_elem)?,
        BoundaryConditions {
            inflow_peak: cfg.problem.inflow_peak,
        },
        cfg.problem.kind.model_kind(),
        cfg.problem.viscosity,
    )?;
    let model = cfg.permeability_model();
    let parameter_box = model.generate_intervals();
    let dec = AffineDecomposition::new(&ops, parameter_box)?;
    Ok(Problem { ops, dec, model })
}

/// Trained SCM state for both modes plus the inf-sup constant.
pub struct TrainedStability {
    pub beta: f64,
    pub coercivity: ScmData,
    pub continuity: ScmData,
}

/// SCM training phase: one shared Halton candidate set, coercivity and
/// continuity trained against it, artifacts written into the output dir.
pub fn train_stability(
    cfg: &ExperimentConfig,
    problem: &Problem,
    out_dir: &Path,
) -> Result<TrainedStability> {
    let candidates = Halton::new(problem.dec.dimension())
        .points_in_box(cfg.scm.train_size, &problem.dec.parameter_box.intervals);
    let scm_cfg = cfg.scm_config();
    let opts = EigOptions::default();
    let (coercivity, trace_a) = scm_train(
        &problem.ops,
        &problem.dec,
        candidates.clone(),
        scm_cfg,
        ScmMode::Coercivity,
        opts,
    )?;
    let (continuity, trace_g) = scm_train(
        &problem.ops,
        &problem.dec,
        candidates,
        scm_cfg,
        ScmMode::Continuity,
        opts,
    )?;
    let beta = compute_beta(&problem.ops, opts)?;
    save_scm_data(&out_dir.join("scm_coercivity.json"), &coercivity)?;
    save_scm_data(&out_dir.join("scm_continuity.json"), &continuity)?;
    write_scm_trace(&out_dir.join("scm_trace_coercivity.csv"), &trace_a)?;
    write_scm_trace(&out_dir.join("scm_trace_continuity.csv"), &trace_g)?;
    let constants = StabilityConstants { beta };
    let text =
        serde_json::to_string_pretty(&constants).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(out_dir.join("beta.json"), text)
        .map_err(Error::io(&out_dir.join("beta.json")))?;
    Ok(TrainedStability {
        beta,
        coercivity,
        continuity,
    })
}

/// Moment fields of one estimator (free velocity dofs and pressure dofs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentFields {
    pub mean_u: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub variance_u: Vec<f64>,
    pub variance_p: Vec<f64>,
    pub hf_solves: usize,
    pub collocation_points: usize,
}

const MOMENTS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MomentsFile {
    format: String,
    version: u32,
    moments: MomentFields,
}

pub fn save_moments(path: &Path, moments: &MomentFields) -> Result<()> {
    let file = MomentsFile {
        format: "moments".into(),
        version: MOMENTS_VERSION,
        moments: moments.clone(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text).map_err(Error::io(path))
}

pub fn load_moments(path: &Path) -> Result<MomentFields> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let file: MomentsFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != "moments" || file.version != MOMENTS_VERSION {
        return Err(Error::FormatVersion {
            what: "moments".into(),
            got: file.version,
            expected: MOMENTS_VERSION,
        });
    }
    Ok(file.moments)
}

fn fields_to_moments(
    mean: &Fields,
    variance: &Fields,
    hf_solves: usize,
    collocation_points: usize,
) -> MomentFields {
    MomentFields {
        mean_u: mean.u.iter().copied().collect(),
        mean_p: mean.p.iter().copied().collect(),
        variance_u: variance.u.iter().copied().collect(),
        variance_p: variance.p.iter().copied().collect(),
        hf_solves,
        collocation_points,
    }
}

/// Write the four physical field files of one moment set. The mean velocity
/// carries the Dirichlet lift; variances of the constrained dofs are zero.
fn write_moment_fields(
    ops: &AssembledOperators,
    moments: &MomentFields,
    out_dir: &Path,
    prefix: &str,
) -> Result<()> {
    let mean_u_free = crate::linalg::DVec::from_vec(moments.mean_u.clone());
    let var_u_free = crate::linalg::DVec::from_vec(moments.variance_u.clone());
    let mean_full = ops.scatter_velocity(&mean_u_free, 1.0);
    let var_full = ops.scatter_velocity(&var_u_free, 0.0);
    crate::fem::write_field(
        &ops.mesh,
        &mean_full,
        FieldSpace::Velocity,
        &out_dir.join(format!("{prefix}_mean_velocity.csv")),
    )?;
    crate::fem::write_field(
        &ops.mesh,
        &var_full,
        FieldSpace::Velocity,
        &out_dir.join(format!("{prefix}_variance_velocity.csv")),
    )?;
    crate::fem::write_field(
        &ops.mesh,
        &crate::linalg::DVec::from_vec(moments.mean_p.clone()),
        FieldSpace::Pressure,
        &out_dir.join(format!("{prefix}_mean_pressure.csv")),
    )?;
    crate::fem::write_field(
        &ops.mesh,
        &crate::linalg::DVec::from_vec(moments.variance_p.clone()),
        FieldSpace::Pressure,
        &out_dir.join(format!("{prefix}_variance_pressure.csv")),
    )?;
    Ok(())
}

/// The full pipeline: assemble, train the stability bounds, run the combined
/// reduced-basis ANOVA, optionally compute the quasi-Monte-Carlo reference,
/// and emit every artifact plus the moment-error table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MomentReport> {
    cfg.validate().map_err(Error::in_phase("configuration"))?;
    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    std::fs::write(out_dir.join("config.resolved.toml"), cfg.to_toml())
        .map_err(Error::io(&out_dir.join("config.resolved.toml")))?;

    let problem = build_problem(cfg).map_err(Error::in_phase("assembly"))?;
    save_parameter_box(
        &out_dir.join("intervals.json"),
        &problem.model,
        &problem.dec.parameter_box,
    )
    .map_err(Error::in_phase("parameters"))?;

    let stability =
        train_stability(cfg, &problem, out_dir).map_err(Error::in_phase("scm-train"))?;

    let rb_result =
        run_rb_anova(cfg, &problem, &stability).map_err(Error::in_phase("rb-anova"))?;
    save_rb_model(&out_dir.join("rb_model.json"), &rb_result.model)
        .map_err(Error::in_phase("rb-anova"))?;
    write_rb_trace(&out_dir.join("rb_trace.csv"), &rb_result.greedy_trace)
        .map_err(Error::in_phase("rb-anova"))?;
    crate::anova::write_anova_report(&out_dir.join("anova_report.csv"), &rb_result.anova_report)
        .map_err(Error::in_phase("rb-anova"))?;
    let rb_moments = fields_to_moments(
        &rb_result.mean,
        &rb_result.variance,
        rb_result.hf_solves,
        rb_result.collocation_points,
    );
    save_moments(&out_dir.join("moments_rb.json"), &rb_moments)
        .map_err(Error::in_phase("rb-anova"))?;
    write_moment_fields(&problem.ops, &rb_moments, out_dir, "rb")
        .map_err(Error::in_phase("rb-anova"))?;

    if cfg.monte_carlo.samples == 0 {
        return Ok(MomentReport {
            rows: Vec::new(),
            hf_solves: rb_moments.hf_solves,
            collocation_points: rb_moments.collocation_points,
        });
    }
    let reference = monte_carlo_reference(
        &problem.ops,
        &problem.dec,
        cfg.monte_carlo.samples,
        Some(&out_dir.join("mc_checkpoint.json")),
    )
    .map_err(Error::in_phase("monte-carlo"))?;
    let ref_moments = MomentFields {
        mean_u: reference.mean_u.iter().copied().collect(),
        mean_p: reference.mean_p.iter().copied().collect(),
        variance_u: reference.variance_u.iter().copied().collect(),
        variance_p: reference.variance_p.iter().copied().collect(),
        hf_solves: cfg.monte_carlo.samples,
        collocation_points: cfg.monte_carlo.samples,
    };
    save_moments(&out_dir.join("moments_ref.json"), &ref_moments)
        .map_err(Error::in_phase("monte-carlo"))?;
    write_moment_fields(&problem.ops, &ref_moments, out_dir, "ref")
        .map_err(Error::in_phase("monte-carlo"))?;

    let report = report_errors(&rb_moments, &ref_moments, &problem.ops)
        .map_err(Error::in_phase("report"))?;
    write_report_csv(&out_dir.join("report.csv"), &report).map_err(Error::in_phase("report"))?;
    Ok(report)
}

/// The reduced-basis ANOVA phase on an already-assembled problem.
pub fn run_rb_anova(
    cfg: &ExperimentConfig,
    problem: &Problem,
    stability: &TrainedStability,
) -> Result<RbAnovaResult> {
    let mut ctx = RbContext::new(&problem.ops, &problem.dec)?;
    ctx.memory_cap_bytes = cfg.rb.max_offline_mb.saturating_mul(1 << 20);
    let bounds = StabilityBounds {
        beta: stability.beta,
        coercivity: &stability.coercivity,
        continuity: &stability.continuity,
    };
    rb_anova_drive(
        &ctx,
        &bounds,
        &RbAnovaConfig {
            eps_rb: cfg.rb.eps_rb,
            eps_anova: cfg.anova.eps_anova,
            initial_level: cfg.anova.initial_level,
            max_level: cfg.anova.max_level,
            quad_points: cfg.anova.quad_points,
        },
    )
}

/// The effectivity study: high-fidelity solves at random parameters compared
/// against the certified estimates of a trained model.
pub fn effectivity_study(
    cfg: &ExperimentConfig,
    problem: &Problem,
    stability: &TrainedStability,
    model: &RbModel,
    samples: usize,
) -> Result<Vec<EffectivityRow>> {
    let bounds = StabilityBounds {
        beta: stability.beta,
        coercivity: &stability.coercivity,
        continuity: &stability.continuity,
    };
    let mut rng = SplitMix64::new(cfg.problem.seed ^ 0xeffec);
    let parameters: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let u: Vec<f64> = (0..problem.dec.dimension())
                .map(|_| rng.next_f64())
                .collect();
            problem.dec.parameter_box.from_unit(&u)
        })
        .collect();
    use rayon::prelude::*;
    parameters
        .par_iter()
        .enumerate()
        .map(|(sample, xi)| {
            let (est, u_n, p_n) = estimate_with_solution(model, &problem.dec, &bounds, xi)?;
            let hf = problem.dec.solve_at(&problem.ops, xi)?;
            let du = &(&model.basis.v * &u_n) - &hf.u;
            let dp = &(&model.basis.q * &p_n) - &hf.p;
            let err_u = problem.ops.m_v.bilinear(&du, &du).max(0.0).sqrt();
            let err_p = problem.ops.m_q.bilinear(&dp, &dp).max(0.0).sqrt();
            let err = (err_u * err_u + err_p * err_p).sqrt();
            Ok(EffectivityRow {
                sample,
                effectivity_u: est.delta_u / err_u.max(1e-300),
                effectivity_p: est.delta_p / err_p.max(1e-300),
                effectivity_combined: est.delta / err.max(1e-300),
            })
        })
        .collect()
}

/// Run the pieces the effectivity subcommand needs, reusing artifacts when
/// they exist in the output directory.
pub fn run_effectivity(cfg: &ExperimentConfig, samples: usize) -> Result<Vec<EffectivityRow>> {
    cfg.validate().map_err(Error::in_phase("configuration"))?;
    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let problem = build_problem(cfg).map_err(Error::in_phase("assembly"))?;
    let scm_a = out_dir.join("scm_coercivity.json");
    let scm_g = out_dir.join("scm_continuity.json");
    let beta_path = out_dir.join("beta.json");
    let stability = if scm_a.exists() && scm_g.exists() && beta_path.exists() {
        let coercivity = crate::scm::load_scm_data(&scm_a)?;
        let continuity = crate::scm::load_scm_data(&scm_g)?;
        let text = std::fs::read_to_string(&beta_path).map_err(Error::io(&beta_path))?;
        let constants: StabilityConstants =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        TrainedStability {
            beta: constants.beta,
            coercivity,
            continuity,
        }
    } else {
        train_stability(cfg, &problem, out_dir).map_err(Error::in_phase("scm-train"))?
    };
    let rb_path = out_dir.join("rb_model.json");
    let model = if rb_path.exists() {
        crate::rb::load_rb_model(&rb_path)?
    } else {
        let result =
            run_rb_anova(cfg, &problem, &stability).map_err(Error::in_phase("rb-anova"))?;
        save_rb_model(&rb_path, &result.model).map_err(Error::in_phase("rb-anova"))?;
        result.model
    };
    let rows = effectivity_study(cfg, &problem, &stability, &model, samples)
        .map_err(Error::in_phase("effectivity"))?;
    write_effectivity_csv(&out_dir.join("effectivity.csv"), &rows)
        .map_err(Error::in_phase("effectivity"))?;
    Ok(rows)
}

/// Recompute the moment-error table from the artifacts in a directory.
pub fn report_from_dir(dir: &Path) -> Result<MomentReport> {
    let cfg = ExperimentConfig::load(&dir.join("config.resolved.toml"))?;
    let rb = load_moments(&dir.join("moments_rb.json"))?;
    let reference = load_moments(&dir.join("moments_ref.json"))?;
    let problem = build_problem(&cfg)?;
    let report = report_errors(&rb, &reference, &problem.ops)?;
    write_report_csv(&dir.join("report.csv"), &report)?;
    Ok(report)
}
