use super::*;
use crate::param::ParameterBox;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Multivariate polynomial toy: sum of coefficient * monomial terms.
#[derive(Clone)]
struct Poly {
    terms: Vec<(f64, Vec<u32>)>,
}

impl Poly {
    fn eval(&self, xi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, powers)| {
                c * powers
                    .iter()
                    .zip(xi)
                    .map(|(&k, &x)| x.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Uniform-law mean over the box (independent coordinates).
    fn mean_analytic(&self, pb: &ParameterBox) -> f64 {
        self.terms
            .iter()
            .map(|(c, powers)| {
                c * powers
                    .iter()
                    .zip(&pb.intervals)
                    .map(|(&k, &(a, b))| moment_uniform(a, b, k))
                    .product::<f64>()
            })
            .sum()
    }
}

/// E[x^k] for x uniform on [a,b].
fn moment_uniform(a: f64, b: f64, k: u32) -> f64 {
    let kk = k as i32;
    (b.powi(kk + 1) - a.powi(kk + 1)) / ((kk as f64 + 1.0) * (b - a))
}

fn scalar_evaluator(poly: Poly) -> impl SolutionEvaluator {
    move |xi: &[f64]| Ok(Fields::scalar(poly.eval(xi)))
}

fn unit_box(dim: usize) -> ParameterBox {
    ParameterBox {
        intervals: vec![(1e-12, 1.0); dim],
    }
}

fn full_lattice_state(pb: &ParameterBox, p: usize, levels: usize) -> AnovaState {
    let rule = QuadratureRule::tensor(pb, p);
    let mut state = AnovaState::new(pb.anchor_point(), rule);
    state.activate_up_to(levels);
    state
}

#[test]
fn direction_set_operations() {
    let a = Direction::new(vec![2, 0]).unwrap();
    assert_eq!(a.indices(), &[0, 2]);
    assert!(Direction::new(vec![1, 1]).is_err());
    let b = Direction::new(vec![1, 2]).unwrap();
    assert_eq!(a.union(&b).indices(), &[0, 1, 2]);
    assert_eq!(a.intersection(&b).indices(), &[2]);
    assert_eq!(a.difference(&b).indices(), &[0]);
    assert_eq!(a.proper_subsets().len(), 3);
    assert_eq!(a.display_one_based(), "{1,3}");
}

#[test]
fn linear_function_has_single_nonzero_term() {
    // phi = xi_1: phi_{1} = xi_1 - c_1, all other nonempty terms vanish
    let pb = unit_box(2);
    let poly = Poly {
        terms: vec![(1.0, vec![1, 0])],
    };
    let mut state = full_lattice_state(&pb, 5, 2);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();

    let d1 = Direction::new(vec![0]).unwrap();
    let grid = state.term_grid(&d1).unwrap();
    for (multi, value) in grid {
        let node = state.rule.nodes[0][multi[0] as usize];
        let expected = node - state.anchor[0];
        assert!((value.u[0] - expected).abs() < 1e-14);
    }
    for d in [
        Direction::new(vec![1]).unwrap(),
        Direction::new(vec![0, 1]).unwrap(),
    ] {
        for value in state.term_grid(&d).unwrap().values() {
            assert!(value.max_abs() < 1e-14);
        }
    }
}

#[test]
fn product_function_terms_match_hand_recursion() {
    // phi = xi_1 xi_2: phi_0 = c1 c2, phi_{1} = (x1-c1) c2,
    // phi_{12} = (x1-c1)(x2-c2)
    let pb = ParameterBox {
        intervals: vec![(0.2, 1.2), (0.5, 2.5)],
    };
    let poly = Poly {
        terms: vec![(1.0, vec![1, 1])],
    };
    let mut state = full_lattice_state(&pb, 5, 2);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();
    let c = state.anchor.clone();

    let empty = state.term_grid(&Direction::empty()).unwrap();
    assert!((empty[&vec![]].u[0] - c[0] * c[1]).abs() < 1e-14);

    let d1 = Direction::new(vec![0]).unwrap();
    for (multi, value) in state.term_grid(&d1).unwrap() {
        let x1 = state.rule.nodes[0][multi[0] as usize];
        assert!((value.u[0] - (x1 - c[0]) * c[1]).abs() < 1e-13);
    }
    let d12 = Direction::new(vec![0, 1]).unwrap();
    for (multi, value) in state.term_grid(&d12).unwrap() {
        let x1 = state.rule.nodes[0][multi[0] as usize];
        let x2 = state.rule.nodes[1][multi[1] as usize];
        assert!((value.u[0] - (x1 - c[0]) * (x2 - c[1])).abs() < 1e-13);
    }
}

#[test]
fn constant_function_has_zero_nonempty_terms() {
    let pb = unit_box(3);
    let poly = Poly {
        terms: vec![(4.2, vec![0, 0, 0])],
    };
    let mut state = full_lattice_state(&pb, 3, 3);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();
    for d in state.active_directions() {
        if d.order() == 0 {
            continue;
        }
        for v in state.term_grid(&d).unwrap().values() {
            assert!(v.max_abs() < 1e-14);
        }
    }
}

#[test]
fn term_means_match_analytic_values() {
    // phi = xi_1 on [0,1], anchor 1/2: E[phi_{1}] = 0 by symmetry.
    let pb = unit_box(1);
    let poly = Poly {
        terms: vec![(1.0, vec![1])],
    };
    let mut state = full_lattice_state(&pb, 5, 1);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();
    let d1 = Direction::new(vec![0]).unwrap();
    assert!(state.term_mean(&d1).unwrap().u[0].abs() < 1e-14);

    // phi = xi_1^2: E[phi_{1}] = 1/3 - c^2.
    let poly = Poly {
        terms: vec![(1.0, vec![2])],
    };
    let mut state = full_lattice_state(&pb, 5, 1);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();
    let c = state.anchor[0];
    let expected = moment_uniform(pb.intervals[0].0, pb.intervals[0].1, 2) - c * c;
    let got = state.term_mean(&d1).unwrap().u[0];
    assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    // empty-direction mean is the anchor value itself
    assert!((state.term_mean(&Direction::empty()).unwrap().u[0] - c * c).abs() < 1e-15);
}

#[test]
fn covariance_of_identical_directions_is_direct_variance() {
    let pb = ParameterBox {
        intervals: vec![(0.1, 1.1), (0.3, 0.9)],
    };
    let poly = Poly {
        terms: vec![(1.0, vec![2, 1]), (0.5, vec![1, 0])],
    };
    let mut state = full_lattice_state(&pb, 5, 2);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();
    let d = Direction::new(vec![0, 1]).unwrap();
    let cov = state.covariance(&d, &d).unwrap();
    // direct weighted sum of squared centered values
    let grid = state.term_grid(&d).unwrap();
    let mean = state.term_mean(&d).unwrap();
    let mut direct = 0.0;
    for (multi, v) in grid {
        let w = state.point_weight(&d, multi);
        let centered = v.u[0] - mean.u[0];
        direct += w * centered * centered;
    }
    assert!((cov.u[0] - direct).abs() < 1e-14);
}

#[test]
fn covariance_of_disjoint_directions_vanishes() {
    let pb = unit_box(2);
    let poly = Poly {
        terms: vec![(1.0, vec![2, 0]), (1.0, vec![0, 3]), (2.0, vec![1, 1])],
    };
    let mut state = full_lattice_state(&pb, 5, 2);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();
    let s = Direction::new(vec![0]).unwrap();
    let t = Direction::new(vec![1]).unwrap();
    let cov = state.covariance(&s, &t).unwrap();
    assert!(cov.max_abs() < 1e-14, "{}", cov.max_abs());
}

#[test]
fn overlapping_covariance_matches_explicit_tensor_oracle() {
    // S = {1,2}, T = {2,3} against the explicit grid over S union T.
    let pb = ParameterBox {
        intervals: vec![(0.2, 0.8), (0.1, 1.3), (0.4, 0.9)],
    };
    let poly = Poly {
        terms: vec![
            (1.3, vec![2, 1, 0]),
            (-0.7, vec![0, 2, 2]),
            (0.9, vec![1, 1, 1]),
            (0.4, vec![3, 0, 1]),
        ],
    };
    let mut state = full_lattice_state(&pb, 5, 3);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();
    let s = Direction::new(vec![0, 1]).unwrap();
    let t = Direction::new(vec![1, 2]).unwrap();
    let cov = state.covariance(&s, &t).unwrap();

    // Oracle: loop over the full tensor grid of S union T = {0,1,2}.
    let su = s.union(&t);
    let s_positions: Vec<usize> = s
        .indices()
        .iter()
        .map(|&m| su.indices().iter().position(|&k| k == m).unwrap())
        .collect();
    let t_positions: Vec<usize> = t
        .indices()
        .iter()
        .map(|&m| su.indices().iter().position(|&k| k == m).unwrap())
        .collect();
    let s_grid = state.term_grid(&s).unwrap();
    let t_grid = state.term_grid(&t).unwrap();
    let s_mean = state.term_mean(&s).unwrap().u[0];
    let t_mean = state.term_mean(&t).unwrap().u[0];
    let mut oracle = 0.0;
    for multi in state.grid_multi_indices(&su) {
        let w = state.point_weight(&su, &multi);
        let sm: Vec<u16> = s_positions.iter().map(|&p| multi[p]).collect();
        let tm: Vec<u16> = t_positions.iter().map(|&p| multi[p]).collect();
        let fs = s_grid[&sm].u[0] - s_mean;
        let ft = t_grid[&tm].u[0] - t_mean;
        oracle += w * fs * ft;
    }
    assert!(
        (cov.u[0] - oracle).abs() < 1e-12,
        "{} vs oracle {oracle}",
        cov.u[0]
    );
}

#[test]
fn full_lattice_moments_match_analytic_mean_and_grid_variance() {
    let pb = ParameterBox {
        intervals: vec![(0.5, 1.5), (0.2, 0.7), (1.0, 3.0)],
    };
    // per-variable degree <= 9 so the 5-point rule integrates the mean
    // exactly
    let poly = Poly {
        terms: vec![
            (1.0, vec![9, 0, 0]),
            (-2.0, vec![2, 3, 1]),
            (0.25, vec![0, 1, 4]),
            (3.0, vec![1, 1, 1]),
            (-0.125, vec![5, 2, 2]),
        ],
    };
    let mut state = full_lattice_state(&pb, 5, 3);
    state.evaluate_missing(&scalar_evaluator(poly.clone())).unwrap();
    state.recompute_terms().unwrap();

    let mean = state.mean().unwrap().u[0];
    let analytic = poly.mean_analytic(&pb);
    assert!(
        (mean - analytic).abs() <= 1e-12 * analytic.abs().max(1.0),
        "mean {mean} vs analytic {analytic}"
    );

    // brute-force tensor-grid variance over the full grid
    let full = Direction::new(vec![0, 1, 2]).unwrap();
    let mut grid_mean = 0.0;
    for multi in state.grid_multi_indices(&full) {
        let w = state.point_weight(&full, &multi);
        grid_mean += w * poly.eval(&state.point_coordinates(&full, &multi));
    }
    let mut grid_var = 0.0;
    for multi in state.grid_multi_indices(&full) {
        let w = state.point_weight(&full, &multi);
        let v = poly.eval(&state.point_coordinates(&full, &multi)) - grid_mean;
        grid_var += w * v * v;
    }
    let var = state.variance().unwrap().u[0];
    assert!(
        (var - grid_var).abs() <= 1e-10 * grid_var.abs().max(1.0),
        "variance {var} vs tensor-grid oracle {grid_var}"
    );
}

#[test]
fn reconstruction_at_top_level_grid_points() {
    let pb = ParameterBox {
        intervals: vec![(0.3, 1.0), (0.5, 2.0), (0.1, 0.6)],
    };
    let poly = Poly {
        terms: vec![(1.0, vec![2, 2, 1]), (-1.5, vec![1, 0, 3]), (0.7, vec![0, 1, 0])],
    };
    let mut state = full_lattice_state(&pb, 4, 3);
    state.evaluate_missing(&scalar_evaluator(poly.clone())).unwrap();
    state.recompute_terms().unwrap();
    let full = Direction::new(vec![0, 1, 2]).unwrap();
    for multi in state.grid_multi_indices(&full) {
        let xi = state.point_coordinates(&full, &multi);
        let mut total = 0.0;
        for d in state.active_directions() {
            let positions: Vec<u16> = d
                .indices()
                .iter()
                .map(|&m| {
                    let pos = full.indices().iter().position(|&k| k == m).unwrap();
                    multi[pos]
                })
                .collect();
            total += state.term_grid(&d).unwrap()[&positions].u[0];
        }
        let direct = poly.eval(&xi);
        assert!(
            (total - direct).abs() <= 1e-12 * direct.abs().max(1.0),
            "{total} vs {direct}"
        );
    }
}

#[test]
fn additively_separable_function_has_no_coupling_terms() {
    let pb = unit_box(3);
    let poly = Poly {
        terms: vec![(1.0, vec![3, 0, 0]), (2.0, vec![0, 2, 0]), (-1.0, vec![0, 0, 4])],
    };
    let mut state = full_lattice_state(&pb, 5, 3);
    state.evaluate_missing(&scalar_evaluator(poly)).unwrap();
    state.recompute_terms().unwrap();
    for d in state.active_directions() {
        if d.order() >= 2 {
            for v in state.term_grid(&d).unwrap().values() {
                assert!(v.max_abs() <= 1e-12, "direction {d:?}");
            }
        }
    }
}

#[test]
fn indicator_examples() {
    let pb = unit_box(1);
    // zero term mean -> indicator 0
    let odd = Poly {
        terms: vec![(1.0, vec![1])],
    };
    let mut state = full_lattice_state(&pb, 5, 1);
    state.evaluate_missing(&scalar_evaluator(odd)).unwrap();
    state.recompute_terms().unwrap();
    let d1 = Direction::new(vec![0]).unwrap();
    let norms = NormPair::default();
    // phi_0 = 0.5 at the anchor, E[phi_{1}] = 0
    let eta = state.indicator(&d1, &norms).unwrap();
    assert!(eta < 1e-13, "eta {eta}");

    // term mean equal in norm to the order-zero field -> eta = 1
    // phi = 1 + 12 (x - 1/2)^2: E of the first-order term is exactly 1.
    let shifted = Poly {
        terms: vec![(4.0, vec![0]), (12.0, vec![2]), (-12.0, vec![1])],
    };
    let mut state = full_lattice_state(&pb, 5, 1);
    state.evaluate_missing(&scalar_evaluator(shifted)).unwrap();
    state.recompute_terms().unwrap();
    // phi_0 = 4 + 12/4 - 6 = 1 exactly at anchor 1/2 (up to the epsilon-wide
    // interval start); E[term] = 4 + 12 E[x^2] - 12 E[x] - phi_0 = 1.
    let eta = state.indicator(&d1, &norms).unwrap();
    assert!((eta - 1.0).abs() < 1e-9, "eta {eta}");
}

#[test]
fn indicator_zero_denominator_reports_infinity() {
    // interval whose midpoint is exactly representable so the anchor value
    // vanishes identically
    let pb = ParameterBox {
        intervals: vec![(0.25, 0.75)],
    };
    let zero_at_anchor = Poly {
        terms: vec![(1.0, vec![1]), (-0.5, vec![0])],
    };
    let mut state = full_lattice_state(&pb, 4, 1);
    state
        .evaluate_missing(&scalar_evaluator(zero_at_anchor))
        .unwrap();
    state.recompute_terms().unwrap();
    let d1 = Direction::new(vec![0]).unwrap();
    let eta = state.indicator(&d1, &NormPair::default()).unwrap();
    assert!(eta.is_infinite());
}

#[test]
fn next_level_selection_rules() {
    // J~_1 = {{1},{2}} over M=3 -> J_2 = {{1,2}}
    let e1 = vec![
        Direction::new(vec![0]).unwrap(),
        Direction::new(vec![1]).unwrap(),
    ];
    let j2 = next_level_from_effective(&e1, 3, 1);
    assert_eq!(j2, vec![Direction::new(vec![0, 1]).unwrap()]);

    // a single effective singleton admits no pairs
    let e1 = vec![Direction::new(vec![0]).unwrap()];
    assert!(next_level_from_effective(&e1, 3, 1).is_empty());

    // J~_2 = all pairs of {1,2,3} -> J_3 = {{1,2,3}}
    let e2 = vec![
        Direction::new(vec![0, 1]).unwrap(),
        Direction::new(vec![0, 2]).unwrap(),
        Direction::new(vec![1, 2]).unwrap(),
    ];
    let j3 = next_level_from_effective(&e2, 3, 2);
    assert_eq!(j3, vec![Direction::new(vec![0, 1, 2]).unwrap()]);
}

#[test]
fn level_one_point_count_with_dedup() {
    // M = 81, p = 5: the odd rule shares its mid node with the anchor, so
    // the level-1 lattice has 1 + 81 * 4 = 325 unique points.
    let m = 81;
    let pb = ParameterBox {
        intervals: (0..m).map(|k| (1.0 + k as f64, 2.0 + k as f64)).collect(),
    };
    let rule = QuadratureRule::tensor(&pb, 5);
    let mut state = AnovaState::new(pb.anchor_point(), rule);
    state.activate_up_to(1);
    assert_eq!(state.unique_point_count(), 1 + m * 4);

    let calls = AtomicUsize::new(0);
    let counting = |xi: &[f64]| {
        calls.fetch_add(1, Ordering::SeqCst);
        Ok(Fields::scalar(xi.iter().sum()))
    };
    state.evaluate_missing(&counting).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 325);
    // a second pass costs nothing
    state.evaluate_missing(&counting).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 325);
    assert_eq!(state.evaluations, 325);
}

#[test]
fn enumerate_directions_counts() {
    assert_eq!(enumerate_directions(5, 0).len(), 1);
    assert_eq!(enumerate_directions(5, 1).len(), 5);
    assert_eq!(enumerate_directions(5, 2).len(), 10);
    assert_eq!(enumerate_directions(5, 3).len(), 10);
    assert_eq!(enumerate_directions(3, 4).len(), 0);
}
