//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured quantities (run with `--nocapture` to see them).
//!
//! The desk problem used throughout: 3x3 subdomains, 4x4 elements per
//! subdomain (12x12 grid, ~1.5k dof), 9 stochastic dimensions, seed 42.

use brinkman_rom::anova::{AnovaState, Direction, Fields, QuadratureRule};
use brinkman_rom::driver::{
    build_problem, run_rb_anova, train_stability, AnovaSection, ExperimentConfig, McSection,
    MomentField, MomentKind, OutputSection, ProblemConfig, RbSection, ScmSection,
};
use brinkman_rom::fem::{
    build_operators, count_affine_terms, mass_conservation_defect, solve_high_fidelity,
    BoundaryConditions, MeshConfig, ModelKind,
};
use brinkman_rom::halton::Halton;
use brinkman_rom::linalg::{DVec, EigOptions};
use brinkman_rom::param::{AffineDecomposition, ParameterBox, PermeabilityKind, PermeabilityModel};
use brinkman_rom::rb::{
    error_estimate, estimate_with_solution, greedy_extend, rb_anova_drive, GreedyConfig,
    RbAnovaConfig, RbContext, RbModel, StabilityBounds,
};
use brinkman_rom::rng::SplitMix64;
use brinkman_rom::scm::{compute_beta, exact_constant, scm_bound, scm_train, ScmConfig, ScmMode};
use std::sync::OnceLock;
use std::time::Instant;

// --- shared desk setup -------------------------------------------------------

struct Desk {
    ops: brinkman_rom::fem::AssembledOperators,
    dec: AffineDecomposition,
    beta: f64,
    coercivity: brinkman_rom::scm::ScmData,
    continuity: brinkman_rom::scm::ScmData,
}

impl Desk {
    fn bounds(&self) -> StabilityBounds<'_> {
        StabilityBounds {
            beta: self.beta,
            coercivity: &self.coercivity,
            continuity: &self.continuity,
        }
    }

    fn random_parameters(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = SplitMix64::new(seed);
        (0..count)
            .map(|_| {
                let u: Vec<f64> = (0..self.dec.dimension()).map(|_| rng.next_f64()).collect();
                self.dec.parameter_box.from_unit(&u)
            })
            .collect()
    }
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let ops = build_operators(
            MeshConfig::new(3, 4).unwrap(),
            BoundaryConditions::default(),
            ModelKind::Iso,
            1e-3,
        )
        .unwrap();
        let model = PermeabilityModel {
            kind: PermeabilityKind::Iso,
            n_sub: 3,
            seed: 42,
        };
        let dec = AffineDecomposition::new(&ops, model.generate_intervals()).unwrap();
        // SCM training with the published knobs on 2000 Halton candidates.
        let candidates =
            Halton::new(dec.dimension()).points_in_box(2000, &dec.parameter_box.intervals);
        let cfg = ScmConfig {
            m_e: 100,
            m_p: 100,
            tol: 0.1,
            train_size: 2000,
            seed: 42,
        };
        let (coercivity, trace_a) = scm_train(
            &ops,
            &dec,
            candidates.clone(),
            cfg,
            ScmMode::Coercivity,
            EigOptions::default(),
        )
        .unwrap();
        let (continuity, trace_g) = scm_train(
            &ops,
            &dec,
            candidates,
            cfg,
            ScmMode::Continuity,
            EigOptions::default(),
        )
       .unwrap();
        assert!(trace_a.last().unwrap().max_indicator < 0.1);
        assert!(trace_g.last().unwrap().max_indicator < 0.1);
        let beta = compute_beta(&ops, EigOptions::default()).unwrap();
        Desk {
            ops,
            dec,
            beta,
            coercivity,
            continuity,
        }
    })
}

fn desk_model() -> &'static RbModel {
    static MODEL: OnceLock<RbModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let d = desk();
        let ctx = RbContext::new(&d.ops, &d.dec).unwrap();
        let result = rb_anova_drive(
            &ctx,
            &d.bounds(),
            &RbAnovaConfig {
                eps_rb: 0.1,
                eps_anova: 1e-4,
                initial_level: 1,
                max_level: 2,
                quad_points: 5,
            },
        )
        .unwrap();
        result.model
    })
}

fn v_norm(d: &Desk, v: &DVec) -> f64 {
    d.ops.m_v.bilinear(v, v).max(0.0).sqrt()
}

fn q_norm(d: &Desk, v: &DVec) -> f64 {
    d.ops.m_q.bilinear(v, v).max(0.0).sqrt()
}

// --- criterion 1: exact dof-count reproduction -------------------------------

#[test]
fn criterion_1_dof_counts_match_published_tables() {
    let start = Instant::now();
    let iso = build_operators(
        MeshConfig::new(9, 12).unwrap(),
        BoundaryConditions::default(),
        ModelKind::Iso,
        1e-3,
    )
    .unwrap();
    assert_eq!(iso.n_velocity_free, 92880);
    assert_eq!(iso.n_pressure, 34992);
    assert_eq!(iso.n_velocity_free + iso.n_pressure, 127872);
    assert_eq!(count_affine_terms(ModelKind::Iso, 9), (82, 10));
    assert_eq!(iso.n_affine_matrices(), 82);
    assert_eq!(iso.f_components.len(), 10);
    drop(iso);

    let aniso = build_operators(
        MeshConfig::new(6, 18).unwrap(),
        BoundaryConditions::default(),
        ModelKind::Aniso,
        1e-3,
    )
    .unwrap();
    assert_eq!(aniso.n_velocity_free, 92880);
    assert_eq!(aniso.n_pressure, 34992);
    assert_eq!(count_affine_terms(ModelKind::Aniso, 6), (73, 7));
    assert_eq!(aniso.n_affine_matrices(), 73);
    assert_eq!(aniso.f_components.len(), 7);
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 30,
        "assembly took {elapsed:?}, budget 30 s"
    );
    println!(
        "criterion 1 PASS: dof counts 92880/34992/127872, affine sizes (82,10)/(73,7), \
         assembled in {elapsed:.2?}"
    );
}

// --- criterion 2: certified error bound (effectivity >= 1) -------------------

#[test]
fn criterion_2_effectivity_at_least_one() {
    let start = Instant::now();
    let d = desk();
    let model = desk_model();
    let bounds = d.bounds();
    let mut min_eff = [f64::INFINITY; 3];
    for xi in d.random_parameters(100, 0xeff) {
        let (est, u_n, p_n) = estimate_with_solution(model, &d.dec, &bounds, &xi).unwrap();
        let hf = d.dec.solve_at(&d.ops, &xi).unwrap();
        let du = &(&model.basis.v * &u_n) - &hf.u;
        let dp = &(&model.basis.q * &p_n) - &hf.p;
        let err_u = v_norm(d, &du);
        let err_p = q_norm(d, &dp);
        let err = (err_u * err_u + err_p * err_p).sqrt();
        let slack = 1.0 - 1e-10;
        assert!(
            est.delta_u >= err_u * slack,
            "velocity bound {:.6e} below true error {err_u:.6e}",
            est.delta_u
        );
        assert!(
            est.delta_p >= err_p * slack,
            "pressure bound {:.6e} below true error {err_p:.6e}",
            est.delta_p
        );
        assert!(est.delta >= err * slack);
        min_eff[0] = min_eff[0].min(est.delta_u / err_u.max(1e-300));
        min_eff[1] = min_eff[1].min(est.delta_p / err_p.max(1e-300));
        min_eff[2] = min_eff[2].min(est.delta / err.max(1e-300));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}, budget 5 min");
    println!(
        "criterion 2 PASS: 100 random points, smallest effectivities u/p/combined = \
         {:.2}/{:.2}/{:.2} (all >= 1) in {elapsed:.2?}",
        min_eff[0], min_eff[1], min_eff[2]
    );
}

// --- criterion 3: SCM sandwich ------------------------------------------------

#[test]
fn criterion_3_scm_sandwich_and_termination() {
    let start = Instant::now();
    let d = desk();
    // termination indicator below tolerance is asserted in the shared setup;
    // restate it here against the trained data
    let mut worst_gap: f64 = 0.0;
    for xi in d.random_parameters(50, 0x5c1) {
        let alpha_bound = scm_bound(&d.dec, &d.coercivity, &xi).unwrap();
        let (alpha, _) = exact_constant(
            &d.ops,
            &d.dec,
            &xi,
            ScmMode::Coercivity,
            EigOptions::default(),
        )
        .unwrap();
        assert!(
            alpha_bound.certified <= alpha * (1.0 + 1e-8),
            "alpha lower bound {:.6e} above alpha {alpha:.6e}",
            alpha_bound.certified
        );
        assert!(
            alpha_bound.vertex >= alpha * (1.0 - 1e-8),
            "alpha upper bound {:.6e} below alpha {alpha:.6e}",
            alpha_bound.vertex
        );
        let gamma_bound = scm_bound(&d.dec, &d.continuity, &xi).unwrap();
        let (gamma, _) = exact_constant(
            &d.ops,
            &d.dec,
            &xi,
            ScmMode::Continuity,
            EigOptions::default(),
        )
        .unwrap();
        assert!(
            gamma_bound.certified >= gamma * (1.0 - 1e-8),
            "gamma upper bound {:.6e} below gamma {gamma:.6e}",
            gamma_bound.certified
        );
        worst_gap = worst_gap.max(1.0 - alpha_bound.certified / alpha);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}, budget 5 min");
    println!(
        "criterion 3 PASS: sandwich holds at 50 probes (worst alpha gap {worst_gap:.3}), \
         trained to indicator < 0.1 on 2000 candidates, in {elapsed:.2?}"
    );
}

// --- criterion 4: ANOVA oracle equivalence ------------------------------------

struct Poly3 {
    terms: Vec<(f64, [u32; 3])>,
}

impl Poly3 {
    fn eval(&self, xi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, pw)| {
                c * xi
                    .iter()
                    .zip(pw)
                    .map(|(&x, &k)| x.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    fn mean_analytic(&self, pb: &ParameterBox) -> f64 {
        let moment = |a: f64, b: f64, k: u32| -> f64 {
            let kk = k as i32;
            (b.powi(kk + 1) - a.powi(kk + 1)) / ((kk as f64 + 1.0) * (b - a))
        };
        self.terms
            .iter()
            .map(|(c, pw)| {
                c * pw
                    .iter()
                    .zip(&pb.intervals)
                    .map(|(&k, &(a, b))| moment(a, b, k))
                    .product::<f64>()
            })
            .sum()
    }
}

#[test]
fn criterion_4_anova_matches_analytic_and_bruteforce_oracles() {
    let start = Instant::now();
    let pb = ParameterBox {
        intervals: vec![(0.4, 1.4), (0.2, 0.9), (1.1, 2.6)],
    };
    let polys = [
        Poly3 {
            terms: vec![
                (1.0, [9, 0, 0]),
                (-2.0, [2, 3, 1]),
                (0.25, [0, 1, 4]),
                (3.0, [1, 1, 1]),
            ],
        },
        Poly3 {
            terms: vec![(0.5, [4, 4, 4]), (1.5, [0, 9, 0]), (-0.75, [3, 0, 2])],
        },
        Poly3 {
            terms: vec![(2.0, [1, 0, 0]), (-1.0, [0, 2, 5]), (0.1, [5, 5, 0])],
        },
    ];
    for (which, poly) in polys.iter().enumerate() {
        let rule = QuadratureRule::tensor(&pb, 5);
        let mut state = AnovaState::new(pb.anchor_point(), rule);
        state.activate_up_to(3);
        let eval = |xi: &[f64]| Ok(Fields::scalar(poly.eval(xi)));
        state.evaluate_missing(&eval).unwrap();
        state.recompute_terms().unwrap();

        // collocation mean vs analytic uniform mean
        let mean = state.mean().unwrap().u[0];
        let analytic = poly.mean_analytic(&pb);
        assert!(
            (mean - analytic).abs() <= 1e-12 * analytic.abs().max(1.0),
            "poly {which}: mean {mean} vs analytic {analytic}"
        );

        // covariance-partition variance vs brute-force tensor-grid variance
        let full = Direction::new(vec![0, 1, 2]).unwrap();
        let mut grid_points = Vec::new();
        for i in 0..5u16 {
            for j in 0..5u16 {
                for k in 0..5u16 {
                    grid_points.push([i, j, k]);
                }
            }
        }
        let rule = QuadratureRule::tensor(&pb, 5);
        let weight = |m: &[u16; 3]| -> f64 {
            (0..3)
                .map(|c| rule.probabilistic_weights[c][m[c] as usize])
                .product()
        };
        let coords = |m: &[u16; 3]| -> Vec<f64> {
            (0..3).map(|c| rule.nodes[c][m[c] as usize]).collect()
        };
        let grid_mean: f64 = grid_points
            .iter()
            .map(|m| weight(m) * poly.eval(&coords(m)))
            .sum();
        let grid_var: f64 = grid_points
            .iter()
            .map(|m| {
                let v = poly.eval(&coords(m)) - grid_mean;
                weight(m) * v * v
            })
            .sum();
        let variance = state.variance().unwrap().u[0];
        assert!(
            (variance - grid_var).abs() <= 1e-10 * grid_var.abs().max(1.0),
            "poly {which}: variance {variance} vs brute force {grid_var}"
        );

        // Z-partition covariance for overlapping directions vs the explicit
        // union-grid oracle
        let s = Direction::new(vec![0, 1]).unwrap();
        let t = Direction::new(vec![1, 2]).unwrap();
        let cov = state.covariance(&s, &t).unwrap().u[0];
        let s_grid = state.term_grid(&s).unwrap();
        let t_grid = state.term_grid(&t).unwrap();
        let s_mean = state.term_mean(&s).unwrap().u[0];
        let t_mean = state.term_mean(&t).unwrap().u[0];
        let oracle: f64 = grid_points
            .iter()
            .map(|m| {
                let fs = s_grid[&vec![m[0], m[1]]].u[0] - s_mean;
                let ft = t_grid[&vec![m[1], m[2]]].u[0] - t_mean;
                weight(m) * fs * ft
            })
            .sum();
        assert!(
            (cov - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
            "poly {which}: covariance {cov} vs union-grid oracle {oracle}"
        );
        let _ = full;
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!(
        "criterion 4 PASS: 3 polynomial toys, mean to 1e-12, variance to 1e-10, \
         Z-partition covariance to 1e-12, in {elapsed:.2?}"
    );
}

// --- criterion 5: offline/online identity --------------------------------------

#[test]
fn criterion_5_offline_online_identity_at_every_basis_size() {
    let start = Instant::now();
    let d = desk();
    let ctx = RbContext::new(&d.ops, &d.dec).unwrap();
    let bounds = d.bounds();
    // training set: the level-1 lattice of the desk problem
    let rule = QuadratureRule::tensor(&d.dec.parameter_box, 5);
    let state = {
        let mut s = AnovaState::new(d.dec.anchor_point(), rule);
        s.activate_up_to(1);
        s
    };
    let training: Vec<Vec<f64>> = state
        .lattice_points()
        .into_iter()
        .map(|(_, xi)| xi)
        .collect();
    let probes = d.random_parameters(10, 0x1de);
    let mut model = RbModel::empty(&ctx);
    let anchor = d.dec.anchor_point();
    let sol = d.dec.solve_at(&d.ops, &anchor).unwrap();
    model.extend_with_snapshot(&ctx, &sol).unwrap();
    let mut sizes_checked = 0usize;
    let mut worst_rel: f64 = 0.0;
    loop {
        // identity check at the current basis size
        for xi in &probes {
            let theta_a = d.dec.theta_a(xi).unwrap();
            let theta_f = d.dec.theta_f(xi).unwrap();
            let (u, p) = model.solve_reduced(&theta_a, &theta_f).unwrap();
            let (r1, r2) = model.residual_dual_norms(&theta_a, &theta_f, &u, &p);
            let (a_xi, f_xi) = d.dec.assemble_at(&d.ops, xi).unwrap();
            let u_full = &model.basis.v * &u;
            let p_full = &model.basis.q * &p;
            let res1 = &f_xi - &a_xi.mul_vec(&u_full) - d.ops.b_div.mul_transpose_vec(&p_full);
            let res2 = &d.ops.g - d.ops.b_div.mul_vec(&u_full);
            let direct1 = res1.dot(&ctx.mv_chol.solve(&res1)).max(0.0).sqrt();
            let direct2 = res2.dot(&ctx.mq_chol.solve(&res2)).max(0.0).sqrt();
            let rel1 = (r1 - direct1).abs() / direct1.max(1e-300);
            let rel2 = (r2 - direct2).abs() / direct2.max(1e-300);
            assert!(
                rel1 <= 1e-8,
                "size {}: velocity-residual identity off by {rel1:.3e}",
                model.basis.n_velocity()
            );
            assert!(
                rel2 <= 1e-8,
                "size {}: pressure-residual identity off by {rel2:.3e}",
                model.basis.n_velocity()
            );
            worst_rel = worst_rel.max(rel1).max(rel2);
        }
        sizes_checked += 1;
        // extend by one greedy snapshot until the training tolerance is met
        let before = model.basis.snapshots.len();
        let outcome = greedy_extend(
            &mut model,
            &ctx,
            &bounds,
            &training,
            &GreedyConfig {
                eps_rb: 0.1,
                max_extensions: Some(before + 1),
            },
        )
        .unwrap();
        if model.basis.snapshots.len() == before || outcome.trace.last().unwrap().max_delta < 0.1
        {
            break;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    println!(
        "criterion 5 PASS: identity within 1e-8 at 10 random parameters across {sizes_checked} \
         basis sizes (worst deviation {worst_rel:.3e}) in {elapsed:.2?}"
    );
}

// --- criterion 6: tolerance trend ----------------------------------------------

#[test]
fn criterion_6_tolerance_trends_against_qmc_reference() {
    let start = Instant::now();
    let out_root = std::env::temp_dir().join("brinkman_rom_acceptance_c6");
    let _ = std::fs::remove_dir_all(&out_root);
    std::fs::create_dir_all(&out_root).unwrap();

    let make_cfg = |eps_rb: f64, eps_anova: f64, name: &str| ExperimentConfig {
        problem: ProblemConfig {
            kind: PermeabilityKind::Iso,
            n_sub: 3,
            n_elem: 4,
            viscosity: 1e-3,
            inflow_peak: 1.0,
            seed: 42,
        },
        anova: AnovaSection {
            quad_points: 5,
            eps_anova,
            initial_level: 1,
            max_level: 2,
        },
        rb: RbSection {
            eps_rb,
            max_offline_mb: 4096,
        },
        scm: ScmSection {
            m_e: 100,
            m_p: 100,
            tol: 0.1,
            train_size: 2000,
        },
        monte_carlo: McSection { samples: 0 },
        output: OutputSection {
            dir: out_root.join(name),
        },
    };

    // shared problem, stability training, and QMC reference
    let base = make_cfg(1.0, 1e-4, "base");
    std::fs::create_dir_all(&base.output.dir).unwrap();
    let problem = build_problem(&base).unwrap();
    let stability = train_stability(&base, &problem, &base.output.dir).unwrap();
    let reference = brinkman_rom::driver::monte_carlo_reference(
        &problem.ops,
        &problem.dec,
        10_000,
        None,
    )
    .unwrap();
    let ref_moments = brinkman_rom::driver::MomentFields {
        mean_u: reference.mean_u.iter().copied().collect(),
        mean_p: reference.mean_p.iter().copied().collect(),
        variance_u: reference.variance_u.iter().copied().collect(),
        variance_p: reference.variance_p.iter().copied().collect(),
        hf_solves: 10_000,
        collocation_points: 10_000,
    };

    let eps_rb_grid = [1.0, 0.1, 0.01];
    let eps_anova_grid = [1e-4, 1e-6];
    let mut mean_errors = vec![vec![0.0; eps_anova_grid.len()]; eps_rb_grid.len()];
    let mut basis_sizes = vec![vec![0usize; eps_anova_grid.len()]; eps_rb_grid.len()];
    for (i, &eps_rb) in eps_rb_grid.iter().enumerate() {
        for (j, &eps_anova) in eps_anova_grid.iter().enumerate() {
            let cfg = make_cfg(eps_rb, eps_anova, &format!("run-{i}-{j}"));
            let result = run_rb_anova(&cfg, &problem, &stability).unwrap();
            let rb_moments = brinkman_rom::driver::MomentFields {
                mean_u: result.mean.u.iter().copied().collect(),
                mean_p: result.mean.p.iter().copied().collect(),
                variance_u: result.variance.u.iter().copied().collect(),
                variance_p: result.variance.p.iter().copied().collect(),
                hf_solves: result.hf_solves,
                collocation_points: result.collocation_points,
            };
            let report =
                brinkman_rom::driver::report_errors(&rb_moments, &ref_moments, &problem.ops)
                    .unwrap();
            mean_errors[i][j] = report
                .row(MomentKind::Mean, MomentField::Combined)
                .unwrap()
                .error;
            basis_sizes[i][j] = result.hf_solves;
        }
    }

    println!("criterion 6 table: rows eps_rb {eps_rb_grid:?}, cols eps_anova {eps_anova_grid:?}");
    for (i, &eps_rb) in eps_rb_grid.iter().enumerate() {
        println!(
            "  eps_rb {eps_rb:>5}: mean errors {:?}, hf solves {:?}",
            mean_errors[i], basis_sizes[i]
        );
    }

    // Monotone non-increase of the combined mean error in eps_rb. Ties at
    // measurement resolution count as equal: once every run is more accurate
    // than the 1e4-point reference itself, the comparison saturates at the
    // reference's own error and differences of ~1e-6 relative are noise,
    // five orders below the published pattern's dynamic range.
    let tie = 1e-6;
    for j in 0..eps_anova_grid.len() {
        for i in 1..eps_rb_grid.len() {
            assert!(
                mean_errors[i][j] <= mean_errors[i - 1][j] * (1.0 + tie),
                "combined mean error not monotone in eps_rb at eps_anova {}: {:?}",
                eps_anova_grid[j],
                (0..eps_rb_grid.len()).map(|k| mean_errors[k][j]).collect::<Vec<_>>()
            );
            assert!(
                basis_sizes[i][j] >= basis_sizes[i - 1][j],
                "basis size shrank with tighter eps_rb"
            );
        }
    }
    // nearly flat in the ANOVA tolerance: the published pattern is a growth
    // of well under half when the lattice grows by an order of magnitude
    for i in 0..eps_rb_grid.len() {
        let a = basis_sizes[i][0] as f64;
        let b = basis_sizes[i][1] as f64;
        assert!(
            b <= 1.5 * a + 3.0,
            "solve count not nearly flat in eps_anova: {basis_sizes:?}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 1800, "took {elapsed:?}, budget 30 min");
    println!("criterion 6 PASS: monotone mean error in eps_rb, solve counts nearly flat in eps_anova, in {elapsed:.2?}");
}

// --- criterion 7: Stokes/Darcy limits -------------------------------------------

#[test]
fn criterion_7_stokes_limit_and_mass_conservation() {
    let start = Instant::now();
    let d = desk();
    // pure-Stokes oracle: saddle system without any Darcy block
    let f_stokes = d.ops.f_components[0].clone();
    let oracle = solve_high_fidelity(&d.ops, &d.ops.a_stokes, &f_stokes).unwrap();
    let mut worst_defect = mass_conservation_defect(&d.ops, &oracle.u);

    let stokes_error_at = |k: f64, worst: &mut f64| -> f64 {
        let mut a = d.ops.a_stokes.clone();
        for block in &d.ops.darcy_blocks {
            let scaled = block.scaled(1.0 / k);
            let map = scaled.index_map_into(&a).unwrap();
            for (slot, &v) in map.iter().zip(scaled.values()) {
                a.values_mut()[*slot] += v;
            }
        }
        let mut f = f_stokes.clone();
        for fc in &d.ops.f_components[1..] {
            f += fc * (1.0 / k);
        }
        let sol = solve_high_fidelity(&d.ops, &a, &f).unwrap();
        *worst = worst.max(mass_conservation_defect(&d.ops, &sol.u));
        let du = &sol.u - &oracle.u;
        v_norm(d, &du) / v_norm(d, &oracle.u)
    };

    let mut errors = Vec::new();
    for k in [1e3, 1e6, 1e9, 1e12] {
        errors.push((k, stokes_error_at(k, &mut worst_defect)));
    }
    println!(
        "criterion 7 convergence: {}",
        errors
            .iter()
            .map(|(k, e)| format!("k = {k:.0e}: rel V error {e:.3e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );

    // mass conservation at every parameter solved here plus a random sample
    for xi in d.random_parameters(20, 0x777) {
        let sol = d.dec.solve_at(&d.ops, &xi).unwrap();
        worst_defect = worst_defect.max(mass_conservation_defect(&d.ops, &sol.u));
    }
    assert!(
        worst_defect <= 1e-8,
        "mass conservation defect {worst_defect:.3e}"
    );

    println!(
        "criterion 7 partial: convergence to the Stokes oracle is first order in 1/k and mass \
         conservation holds (worst defect {worst_defect:.3e})"
    );
    let at_1e3 = errors[0].1;
    assert!(
        at_1e3 < 1e-6,
        "relative V-norm error {at_1e3:.3e} at k = 1e3 exceeds 1e-6; the limit converges at \
         first order ({}) and reaches 1e-6 only near k = 5e6, since 1/k at k = 1e3 matches the \
         viscosity 1e-3 and perturbs the momentum operator at O(1)",
        errors
            .iter()
            .map(|(k, e)| format!("{e:.2e} @ k={k:.0e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let elapsed = start.elapsed();
    println!(
        "criterion 7 PASS: Stokes limit {at_1e3:.3e} at k = 1e3, worst mass defect \
         {worst_defect:.3e}, in {elapsed:.2?}"
    );
}

// --- criterion 8: Galerkin reproduction ------------------------------------------

#[test]
fn criterion_8_snapshot_reproduction() {
    let start = Instant::now();
    let d = desk();
    let model = desk_model();
    let bounds = d.bounds();
    assert!(!model.basis.snapshots.is_empty());
    for snap in &model.basis.snapshots {
        let hf = d.dec.solve_at(&d.ops, &snap.xi).unwrap();
        let (est, u_n, p_n) = estimate_with_solution(model, &d.dec, &bounds, &snap.xi).unwrap();
        let du = &(&model.basis.v * &u_n) - &hf.u;
        let dp = &(&model.basis.q * &p_n) - &hf.p;
        let norm_u = v_norm(d, &hf.u);
        let norm_p = q_norm(d, &hf.p);
        let snapshot_norm = (norm_u * norm_u + norm_p * norm_p).sqrt();
        assert!(
            v_norm(d, &du) <= 1e-8 * norm_u.max(1.0),
            "velocity reproduction error {:.3e}",
            v_norm(d, &du)
        );
        assert!(
            q_norm(d, &dp) <= 1e-8 * norm_p.max(1.0),
            "pressure reproduction error {:.3e}",
            q_norm(d, &dp)
        );
        assert!(
            est.delta <= 1e-6 * snapshot_norm,
            "estimator {:.3e} at snapshot exceeds 1e-6 * {snapshot_norm:.3e}",
            est.delta
        );
    }
    let elapsed = start.elapsed();
    println!(
        "criterion 8 PASS: {} snapshots reproduced to 1e-8 with estimator below \
         1e-6 of the snapshot norm, in {elapsed:.2?}",
        model.basis.snapshots.len()
    );
}

// --- supporting sanity: the error-estimate formula is the one tested above ------

#[test]
fn estimator_formula_spot_check() {
    let est = error_estimate((2.0, 3.0), 0.5, 4.5, 0.3).unwrap();
    let kappa = (4.5f64 / 0.5).sqrt();
    assert!((est.delta_u - (2.0 / 0.5 + (2.0 / 0.3) * kappa * 3.0)).abs() < 1e-12);
    assert!((est.delta_p - ((2.0 / 0.3) * kappa * 2.0 + 4.5 / 0.09 * 3.0)).abs() < 1e-9);
}
