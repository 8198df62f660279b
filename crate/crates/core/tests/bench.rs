mod common;

use std::collections::BTreeMap;

use common::*;
use interaction_core::bench::*;
use interaction_core::coalition::{binom_f64, Coalition};
use interaction_core::estimators::EstimatorKind;
use interaction_core::game::ValueFunction;
use interaction_core::indices::{faith_shap, shapley_taylor};
use interaction_core::{Error, IndexKind};

#[test]
fn table_has_every_index_and_renders_aligned() {
    let r = run_example_table(1, Some(0.1), 2).unwrap();
    assert_eq!(r.table.len(), 5);
    assert_eq!(r.config["p"], 0.1);
    assert!(r.table.iter().all(|row| row.order2.is_some()));
    let text = r.render_table();
    let widths: Vec<usize> = text.lines().map(str::len).collect();
    assert!(widths.iter().all(|w| *w == widths[0]), "{text}");

    let r1 = run_example_table(2, None, 1).unwrap();
    assert!(r1.table.iter().all(|row| row.order2.is_none()));
    assert!(run_example_table(1, Some(0.1), 3).is_err());
    assert!(run_example_table(1, None, 2).is_err());
    assert!(run_example_table(3, None, 2).is_err());
}

#[test]
fn faith_shap_curve_hits_both_endpoints() {
    let r = run_example_curve(1, Some(0.1), IndexKind::FaithShap, 2).unwrap();
    let first = &r.curve[0];
    let last = r.curve.last().unwrap();
    assert_eq!((first.size, first.value), (0, 0.0));
    assert!(first.approx.abs() < 1e-12);
    assert_eq!(last.size, 11);
    assert!((last.value - 5.5).abs() < 1e-12);
    assert!((last.approx - 5.5).abs() < 1e-9);
}

#[test]
fn shapley_taylor_curve_is_exact_at_zero_one_and_full() {
    let v = example_game(1, Some(0.1)).unwrap();
    let e = shapley_taylor(&v, 2).unwrap();
    let curve = approx_curve(&v, &e).unwrap();
    for s in [0, 1, 11] {
        assert!((curve[s].approx - curve[s].value).abs() < 1e-9, "s={s}");
    }
    // Elsewhere the quadratic surrogate misses the threshold game.
    assert!(curve.iter().any(|p| (p.approx - p.value).abs() > 1e-3));
}

#[test]
fn symmetric_curve_is_a_quadratic_in_size() {
    let v = example_game(2, None).unwrap();
    for kind in TABLE_KINDS {
        let e = exact_index(kind, &v, 2).unwrap();
        let e1 = e.score(Coalition::singleton(0));
        let e2 = e.score(Coalition::from_bits(0b11));
        for p in approx_curve(&v, &e).unwrap() {
            let expect = e.empty_score() + p.size as f64 * e1 + binom_f64(p.size, 2) * e2;
            assert!((p.approx - expect).abs() < 1e-9, "{kind} s={}", p.size);
        }
    }
}

#[test]
fn curve_of_a_symmetric_table_is_accepted() {
    let d = 5;
    let table: Vec<f64> = (0..1u64 << d).map(|m| (m.count_ones() as f64).sqrt()).collect();
    let v = ValueFunction::table(d, table).unwrap();
    let e = faith_shap(&v, 2).unwrap();
    let curve = approx_curve(&v, &e).unwrap();
    assert_eq!(curve.len(), d + 1);
    assert!((curve[3].value - 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn curve_rejects_an_asymmetric_game() {
    let v = random_game(5, &mut rng(70));
    let e = faith_shap(&v, 2).unwrap();
    assert!(matches!(approx_curve(&v, &e), Err(Error::Domain(_))));
}

fn sparse(d: usize) -> GameSpec {
    let mut params = BTreeMap::new();
    params.insert("d".to_string(), serde_json::json!(d));
    GameSpec::Builtin {
        builtin: "sparse_synthetic".into(),
        params,
    }
}

fn spec(d: usize, estimators: Vec<EstimatorKind>, budget: usize, every: usize, seeds: usize) -> ConvergenceSpec {
    ConvergenceSpec {
        game: sparse(d),
        estimators,
        order: 2,
        budget,
        checkpoint_every: every,
        budgets: None,
        seeds,
        seed: 3,
        lambda: 0.0,
        vary_game_seed: true,
        threshold: 1e-3,
        precision_k: 10,
        max_passes: None,
    }
}

#[test]
fn full_lattice_sampling_is_exact() {
    let s = spec(15, vec![EstimatorKind::FaithShapSampling], 1 << 15, 1 << 15, 1);
    let r = convergence_bench(&s).unwrap();
    assert_eq!(r.traces.len(), 1);
    assert!(r.traces[0].median_sq_distance < 1e-6, "{:?}", r.traces[0]);
    assert_eq!(r.traces[0].median_precision, Some(1.0));
}

#[test]
fn smallest_budget_reports_real_evaluations() {
    let s = spec(
        8,
        vec![
            EstimatorKind::FaithShapSampling,
            EstimatorKind::ShapleyTaylorPermutation,
            EstimatorKind::ShapleyInteractionPermutation,
        ],
        200,
        100,
        3,
    );
    let r = convergence_bench(&s).unwrap();
    for kind in &s.estimators {
        let first = r.traces.iter().find(|t| t.estimator == *kind).unwrap();
        assert!(first.mean_evaluations > 0.0);
        assert!(first.mean_evaluations <= first.budget as f64);
    }
    assert_eq!(r.thresholds.len(), 3);
}

#[test]
fn median_distance_does_not_grow_with_budget() {
    let s = spec(12, vec![EstimatorKind::FaithShapSampling], 2000, 200, 20);
    let r = convergence_bench(&s).unwrap();
    let medians: Vec<f64> = r.traces.iter().map(|t| t.median_sq_distance).collect();
    assert_eq!(medians.len(), 10);
    for w in medians.windows(2) {
        assert!(w[1] <= 1.1 * w[0], "{medians:?}");
    }
}

#[test]
fn rerunning_the_embedded_config_reproduces_the_result() {
    let s = spec(
        9,
        vec![EstimatorKind::FaithShapSampling, EstimatorKind::ShapleyTaylorPermutation],
        600,
        200,
        4,
    );
    let mut a = convergence_bench(&s).unwrap();
    let again: ConvergenceSpec = serde_json::from_value(a.config.clone()).unwrap();
    let mut b = convergence_bench(&again).unwrap();
    a.runtime_seconds = None;
    b.runtime_seconds = None;
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.traces_csv().starts_with("estimator,budget,"));
    assert_eq!(a.traces_csv().lines().count(), 1 + a.traces.len());
}

#[test]
fn bad_specs_are_config_errors() {
    let mut s = spec(6, vec![EstimatorKind::FaithShapSampling], 400, 200, 0);
    assert!(matches!(convergence_bench(&s), Err(Error::Config(_))));
    s.seeds = 1;
    s.budgets = Some(vec![800]);
    assert!(matches!(convergence_bench(&s), Err(Error::Config(_))));
    s.budgets = None;
    s.estimators.clear();
    assert!(matches!(convergence_bench(&s), Err(Error::Config(_))));
}

#[test]
fn file_games_load_through_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("game.json");
    let v = random_game(6, &mut rng(71));
    interaction_core::game::save_value_function(&v, &path).unwrap();
    let mut s = spec(6, vec![EstimatorKind::FaithShapSampling], 64, 64, 2);
    s.game = GameSpec::File { file: path };
    let r = convergence_bench(&s).unwrap();
    // Same game and the full lattice for both seeds.
    assert!(r.traces[0].std_sq_distance < 1e-20);
    assert!(r.traces[0].median_sq_distance < 1e-12);
}

#[test]
fn sampling_error_shrinks_over_checkpoints_at_fifteen_players() {
    let mut s = spec(15, vec![EstimatorKind::FaithShapSampling], 4000, 500, 20);
    s.seed = 0;
    s.lambda = 1e-3;
    let r = convergence_bench(&s).unwrap();
    let medians: Vec<f64> = r.traces.iter().map(|t| t.median_sq_distance).collect();
    assert_eq!(medians.len(), 8);
    for w in medians.windows(2) {
        assert!(w[1] <= w[0], "{medians:?}");
    }
}
