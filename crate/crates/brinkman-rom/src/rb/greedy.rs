//! Greedy reduced-basis training and the combined adaptive-ANOVA driver.

use super::{error_estimate, ErrorEstimate, RbContext, RbModel};
use crate::anova::{
    AnovaReportRow, AnovaState, Fields, NormPair, QuadratureRule, SolutionEvaluator,
};
use crate::linalg::DVec;
use crate::param::AffineDecomposition;
use crate::scm::{scm_bound, ScmData};
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashSet;

/// Stability constants used inside the error estimator: the one-time inf-sup
/// constant and the two trained SCM bounds.
pub struct StabilityBounds<'a> {
    pub beta: f64,
    pub coercivity: &'a ScmData,
    pub continuity: &'a ScmData,
}

impl StabilityBounds<'_> {
    /// (alpha_LB, gamma_UB) at one parameter.
    pub fn constants(&self, dec: &AffineDecomposition, xi: &[f64]) -> Result<(f64, f64)> {
        let alpha = scm_bound(dec, self.coercivity, xi)?.certified;
        let gamma = scm_bound(dec, self.continuity, xi)?.certified;
        Ok((alpha, gamma))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GreedyConfig {
    /// absolute stopping tolerance on the combined estimate
    pub eps_rb: f64,
    /// optional cap on the number of basis extensions
    pub max_extensions: Option<usize>,
}

/// One sweep of the greedy loop: the largest absolute estimate and the
/// largest solution-normalized estimates seen across the training set.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GreedyTraceRow {
    pub iteration: usize,
    pub max_delta: f64,
    pub max_rel_u: f64,
    pub max_rel_p: f64,
    pub max_rel_delta: f64,
    pub snapshots: usize,
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    pub trace: Vec<GreedyTraceRow>,
    pub hf_solves: usize,
    /// Set when training stopped above tolerance because every remaining
    /// worst point produced a numerically dependent snapshot: the residual
    /// content of those points is inside the basis span, and the leftover
    /// estimate is stability-constant slack.
    pub saturated: Option<String>,
}

/// One estimate sweep over the training set against an immutable model
/// snapshot. Basis columns are gram-orthonormal, so the V/Q norms of the
/// reduced solutions are the euclidean norms of their coefficient vectors.
fn sweep(
    model: &RbModel,
    dec: &AffineDecomposition,
    beta: f64,
    constants: &[(f64, f64)],
    training: &[Vec<f64>],
) -> Result<Vec<(ErrorEstimate, f64, f64)>> {
    training
        .par_iter()
        .zip(constants.par_iter())
        .map(|(xi, &(alpha_lb, gamma_ub))| {
            let theta_a = dec.theta_a(xi)?;
            let theta_f = dec.theta_f(xi)?;
            let (u, p) = model.solve_reduced(&theta_a, &theta_f)?;
            let norms = model.residual_dual_norms(&theta_a, &theta_f, &u, &p);
            let est = error_estimate(norms, alpha_lb, gamma_ub, beta)?;
            Ok((est, u.norm(), p.norm()))
        })
        .collect()
}

/// Greedy basis extension over a training set (largest-estimate-first),
/// stopping when every estimate is below the absolute tolerance.
pub fn greedy_extend(
    model: &mut RbModel,
    ctx: &RbContext,
    bounds: &StabilityBounds,
    training: &[Vec<f64>],
    cfg: &GreedyConfig,
) -> Result<GreedyOutcome> {
    let mut outcome = GreedyOutcome {
        trace: Vec::new(),
        hf_solves: 0,
        saturated: None,
    };
    if training.is_empty() {
        return Ok(outcome);
    }
    // Seed an uninitialized basis with the training point nearest the
    // training-set centroid.
    if model.basis.n_velocity() == 0 {
        let dim = ctx.dec.dimension();
        let mut centroid = vec![0.0; dim];
        for xi in training {
            for (c, x) in centroid.iter_mut().zip(xi) {
                *c += x / training.len() as f64;
            }
        }
        let unit_centroid = ctx.dec.parameter_box.to_unit(&centroid);
        let nearest = training
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = unit_dist2(&ctx.dec.parameter_box.to_unit(a), &unit_centroid);
                let db = unit_dist2(&ctx.dec.parameter_box.to_unit(b), &unit_centroid);
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        let sol = ctx.dec.solve_at(ctx.ops, &training[nearest])?;
        outcome.hf_solves += 1;
        model.extend_with_snapshot(ctx, &sol)?;
    }

    // Stability constants are basis-independent; compute once per point.
    let constants: Vec<(f64, f64)> = training
        .par_iter()
        .map(|xi| bounds.constants(ctx.dec, xi))
        .collect::<Result<Vec<_>>>()?;

    let mut iteration = 0usize;
    // Points whose snapshot came back numerically dependent: their manifold
    // content already sits in the span at the drop tolerance, so they cannot
    // be extended at again.
    let mut exhausted = vec![false; training.len()];
    let mut stagnation: Option<(usize, f64, usize)> = None; // (argmax, delta, count)
    loop {
        iteration += 1;
        let estimates = sweep(model, ctx.dec, bounds.beta, &constants, training)?;
        let mut max_delta = f64::NEG_INFINITY;
        let mut max_rel_u = 0.0f64;
        let mut max_rel_p = 0.0f64;
        let mut max_rel_delta = 0.0f64;
        for (est, un, pn) in estimates.iter() {
            max_delta = max_delta.max(est.delta);
            max_rel_u = max_rel_u.max(est.delta_u / un.max(1e-300));
            max_rel_p = max_rel_p.max(est.delta_p / pn.max(1e-300));
            let sol_norm = (un * un + pn * pn).sqrt();
            max_rel_delta = max_rel_delta.max(est.delta / sol_norm.max(1e-300));
        }
        outcome.trace.push(GreedyTraceRow {
            iteration,
            max_delta,
            max_rel_u,
            max_rel_p,
            max_rel_delta,
            snapshots: model.basis.snapshots.len(),
        });
        if max_delta < cfg.eps_rb {
            return Ok(outcome);
        }
        if let Some(cap) = cfg.max_extensions {
            if model.basis.snapshots.len() >= cap {
                return Ok(outcome);
            }
        }
        // Extend at the worst still-extendable point, lowest index breaking
        // ties; walk down the ranking past points whose snapshots turn out to
        // be dependent.
        let mut ranking: Vec<usize> = (0..training.len()).filter(|&i| !exhausted[i]).collect();
        ranking.sort_by(|&a, &b| {
            estimates[b]
                .0
                .delta
                .partial_cmp(&estimates[a].0.delta)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut extended_at: Option<usize> = None;
        for &i in &ranking {
            if estimates[i].0.delta < cfg.eps_rb {
                break;
            }
            let sol = ctx.dec.solve_at(ctx.ops, &training[i])?;
            outcome.hf_solves += 1;
            if model.extend_with_snapshot(ctx, &sol)? {
                extended_at = Some(i);
                break;
            }
            exhausted[i] = true;
        }
        let argmax = match extended_at {
            Some(i) => i,
            None => {
                outcome.saturated = Some(format!(
                    "estimate {max_delta:.3e} above tolerance {:.3e}, but every offending \
                     snapshot is numerically dependent at the drop tolerance",
                    cfg.eps_rb
                ));
                return Ok(outcome);
            }
        };
        // A successful extension at the same worst point that does not
        // decrease the estimate over three sweeps signals corrupted bounds.
        stagnation = match stagnation {
            Some((prev_arg, prev_delta, count))
                if prev_arg == argmax && max_delta >= prev_delta - 1e-300 =>
            {
                if count + 1 >= 3 {
                    return Err(Error::GreedyStagnation(format!(
                        "estimate {max_delta:.3e} at training point {argmax} did not decrease \
                         over three sweeps despite successful extensions"
                    )));
                }
                Some((argmax, max_delta, count + 1))
            }
            _ => Some((argmax, max_delta, 1)),
        };
    }
}

fn unit_dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Reduced-basis-backed evaluator for the ANOVA collocation: online solve,
/// then expansion to free-dof fields.
struct RbEvaluator<'a> {
    model: &'a RbModel,
    dec: &'a AffineDecomposition,
}

impl SolutionEvaluator for RbEvaluator<'_> {
    fn evaluate(&self, xi: &[f64]) -> Result<Fields> {
        let theta_a = self.dec.theta_a(xi)?;
        let theta_f = self.dec.theta_f(xi)?;
        let (u_n, p_n) = self.model.solve_reduced(&theta_a, &theta_f)?;
        Ok(Fields {
            u: &self.model.basis.v * u_n,
            p: &self.model.basis.q * p_n,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RbAnovaConfig {
    pub eps_rb: f64,
    pub eps_anova: f64,
    pub initial_level: usize,
    pub max_level: usize,
    pub quad_points: usize,
}

/// Everything the combined driver produces: moment fields on the free dofs,
/// solve accounting, and the traces that feed the report files.
pub struct RbAnovaResult {
    pub mean: Fields,
    pub variance: Fields,
    pub hf_solves: usize,
    pub collocation_points: usize,
    pub greedy_trace: Vec<(usize, GreedyTraceRow)>,
    pub anova_report: Vec<AnovaReportRow>,
    /// per-level greedy saturation diagnostics (training ended above
    /// tolerance on slack-dominated estimates)
    pub saturation: Vec<(usize, String)>,
    pub model: RbModel,
}

/// The combined algorithm: seed the basis at the anchor, then per ANOVA
/// level generate the new collocation points, greedy-train the basis on
/// them, reduced-solve the whole lattice, score directions, and adaptively
/// select the next level until no direction survives or the level cap is
/// reached.
pub fn rb_anova_drive(
    ctx: &RbContext,
    bounds: &StabilityBounds,
    cfg: &RbAnovaConfig,
) -> Result<RbAnovaResult> {
    if cfg.initial_level > cfg.max_level {
        return Err(Error::InvalidConfig(format!(
            "initial level {} exceeds max level {}",
            cfg.initial_level, cfg.max_level
        )));
    }
    let mut model = RbModel::empty(ctx);
    let anchor = ctx.dec.anchor_point();
    let sol = ctx.dec.solve_at(ctx.ops, &anchor)?;
    let mut hf_solves = 1usize;
    model.extend_with_snapshot(ctx, &sol)?;

    let rule = QuadratureRule::tensor(&ctx.dec.parameter_box, cfg.quad_points);
    let mut state = AnovaState::new(anchor, rule);
    state.activate_up_to(cfg.initial_level);

    let norms = NormPair {
        gram_u: Some(&ctx.ops.m_v),
        gram_p: Some(&ctx.ops.m_q),
    };
    // The accumulated point set starts at the anchor (the empty direction's
    // single lattice point).
    let mut visited: HashSet<crate::anova::PointKey> = HashSet::new();
    visited.insert(state.anchor_key());
    let mut greedy_trace: Vec<(usize, GreedyTraceRow)> = Vec::new();
    let mut anova_report: Vec<AnovaReportRow> = Vec::new();
    let mut saturation: Vec<(usize, String)> = Vec::new();

    let mut level = cfg.initial_level;
    loop {
        // New collocation points of this level's lattice.
        let lattice = state.lattice_points();
        let fresh: Vec<Vec<f64>> = lattice
            .iter()
            .filter(|(key, _)| !visited.contains(key))
            .map(|(_, xi)| xi.clone())
            .collect();
        for (key, _) in &lattice {
            visited.insert(key.clone());
        }
        let outcome = greedy_extend(
            &mut model,
            ctx,
            bounds,
            &fresh,
            &GreedyConfig {
                eps_rb: cfg.eps_rb,
                max_extensions: None,
            },
        )?;
        hf_solves += outcome.hf_solves;
        greedy_trace.extend(outcome.trace.into_iter().map(|row| (level, row)));
        if let Some(msg) = outcome.saturated {
            saturation.push((level, msg));
        }

        // Reduced solves over the whole accumulated lattice, then the ANOVA
        // bookkeeping.
        state.invalidate_solutions();
        let evaluator = RbEvaluator {
            model: &model,
            dec: ctx.dec,
        };
        state.evaluate_missing(&evaluator)?;
        state.recompute_terms()?;

        let cumulative = state.unique_point_count();
        let current_dirs: Vec<crate::anova::Direction> =
            state.active.get(level).cloned().unwrap_or_default();
        for d in &current_dirs {
            let indicator = state.indicator(d, &norms)?;
            anova_report.push(AnovaReportRow {
                level,
                direction: d.display_one_based(),
                indicator,
                points: cfg.quad_points.pow(d.order() as u32),
                cumulative_points: cumulative,
            });
        }

        if level >= cfg.max_level {
            break;
        }
        let next = state.select_next_level(level, cfg.eps_anova, &norms)?;
        if next.is_empty() {
            break;
        }
        state.set_active(level + 1, next);
        level += 1;
    }

    let mean = state.mean()?;
    let variance = state.variance()?;
    Ok(RbAnovaResult {
        mean,
        variance,
        hf_solves,
        collocation_points: state.unique_point_count(),
        greedy_trace,
        anova_report,
        saturation,
        model,
    })
}

/// Estimate plus reduced solve at a parameter (used by the effectivity
/// study and the acceptance suite).
pub fn estimate_with_solution(
    model: &RbModel,
    dec: &AffineDecomposition,
    bounds: &StabilityBounds,
    xi: &[f64],
) -> Result<(ErrorEstimate, DVec, DVec)> {
    let theta_a = dec.theta_a(xi)?;
    let theta_f = dec.theta_f(xi)?;
    let (u, p) = model.solve_reduced(&theta_a, &theta_f)?;
    let norms = model.residual_dual_norms(&theta_a, &theta_f, &u, &p);
    let (alpha_lb, gamma_ub) = bounds.constants(dec, xi)?;
    let est = error_estimate(norms, alpha_lb, gamma_ub, bounds.beta)?;
    Ok((est, u, p))
}
