use std::collections::HashSet;

use prefixopt::eval::{AnalyticalEvaluator, Evaluator, Units};
use prefixopt::graph::GraphKey;
use prefixopt::pareto::{compare, front_of_points, merge, ParetoFront, Verdict};
use prefixopt::qfunc::ModelConfig;
use prefixopt::train::{anneal, dqn_train, enumerate, ReplayBuffer, SAConfig, TrainConfig};
use prefixopt::{Objectives, PrefixGraph, ScalarWeight, Scaling, Structure, Transition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    n: usize,
    legal_optional_sets: Vec<Vec<(usize, usize)>>,
    front: Vec<Objectives>,
}

#[test]
fn enumeration_matches_golden_n4() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/enumerate_n4.json")).unwrap();
    let golden: Golden = serde_json::from_str(&text).unwrap();
    let result = enumerate(golden.n, &AnalyticalEvaluator::default()).unwrap();
    let got: HashSet<Vec<(usize, usize)>> = result
        .designs
        .iter()
        .map(|(g, _)| {
            let mut v: Vec<_> = g.optional_nodes().map(|x| (x.msb, x.lsb)).collect();
            v.sort();
            v
        })
        .collect();
    let want: HashSet<Vec<(usize, usize)>> = golden
        .legal_optional_sets
        .iter()
        .map(|s| {
            let mut v = s.clone();
            v.sort();
            v
        })
        .collect();
    assert_eq!(got, want);
    let front: Vec<Objectives> = result.front.points.iter().map(|p| p.objectives()).collect();
    assert_eq!(front, golden.front);
}

#[test]
fn exact_fronts_for_small_widths() {
    let eval = AnalyticalEvaluator::default();
    let expect: [(usize, &[(f64, f64)]); 2] = [
        (5, &[(6.0, 4.0), (5.0, 4.5), (4.0, 5.5)]),
        (6, &[(9.0, 4.0), (8.0, 4.5), (7.0, 5.0), (6.0, 6.0), (5.0, 7.0)]),
    ];
    for (n, pts) in expect {
        let r = enumerate(n, &eval).unwrap();
        let got: Vec<(f64, f64)> = r.front.points.iter().map(|p| (p.area, p.delay)).collect();
        assert_eq!(got, pts, "n={n}");
    }
}

#[test]
fn regular_structures_never_beat_the_exact_front() {
    let eval = AnalyticalEvaluator::default();
    for n in 4..=7 {
        let exact = enumerate(n, &eval).unwrap().front;
        let regular = front_of_points(
            Some(eval.units()),
            Structure::ALL.iter().map(|s| {
                let g = s.build(n).unwrap();
                (eval.cost(&g, ScalarWeight::default()).unwrap(), g.canonical_key())
            }),
        );
        let c = compare(&exact, &regular).unwrap();
        assert!(matches!(c.verdict, Verdict::ADominates | Verdict::Equivalent), "n={n}: {c:?}");
    }
}

#[test]
fn annealing_finds_both_extremes_at_n5() {
    let eval = AnalyticalEvaluator::default();
    let exact = enumerate(5, &eval).unwrap().front;
    let mut found = Vec::new();
    for (a, d) in [(0.99, 0.01), (0.01, 0.99)] {
        let cfg = SAConfig { n: 5, w: ScalarWeight::new(a, d).unwrap(), seed: 3, ..Default::default() };
        let out = anneal(&cfg, &eval).unwrap();
        assert!(out.best.validate().is_ok());
        found.push(out.best_cost);
    }
    assert_eq!(found[0], exact.points.last().unwrap().objectives());
    assert_eq!(found[1], exact.points[0].objectives());
}

#[test]
fn tabular_training_is_reproducible_and_improves_on_the_start() {
    let eval = AnalyticalEvaluator::default();
    let w = ScalarWeight::new(0.01, 0.99).unwrap();
    let cfg = TrainConfig { n: 5, total_steps: 4000, warmup: 200, seed: 2, w, eval_interval: 500, ..Default::default() };
    let run = || {
        let mut vf = ModelConfig::Tabular { alpha: 0.1 }.build(5, 2, cfg.learning_rate).unwrap();
        let mut log = Vec::new();
        let out = dqn_train(&cfg, &eval, vf.as_mut(), Some(&mut log)).unwrap();
        (out, log)
    };
    let (a, log_a) = run();
    let (b, log_b) = run();
    assert_eq!(log_a, log_b);
    assert_eq!(a.metrics.len(), 8);
    assert_eq!(a.final_greedy, b.final_greedy);
    let start = [PrefixGraph::ripple(5).unwrap(), PrefixGraph::sklansky(5).unwrap()]
        .iter()
        .map(|g| w.scalarize(eval.cost(g, w).unwrap()))
        .fold(f64::INFINITY, f64::min);
    assert!(a.final_greedy.scalar <= start);
}

#[test]
fn replay_buffer_evicts_oldest() {
    let mut buf = ReplayBuffer::new(3);
    let g = PrefixGraph::ripple(4).unwrap();
    for i in 0..5 {
        buf.push(Transition {
            state: g.clone(),
            action: prefixopt::Action::add(3, 2),
            reward: Some(Objectives::new(i as f64, 0.0)),
            next_state: g.clone(),
        });
    }
    let kept: Vec<f64> = buf.iter().map(|t| t.reward.unwrap().area).collect();
    assert_eq!(kept, vec![2.0, 3.0, 4.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(buf.sample(8, &mut rng).len(), 8);
}

fn points_strategy() -> impl Strategy<Value = Vec<(Objectives, GraphKey)>> {
    prop::collection::vec((1u32..40, 1u32..40, 0u32..6), 0..30).prop_map(|v| {
        v.into_iter()
            .map(|(a, d, id)| (Objectives::new(a as f64, d as f64 * 0.5), GraphKey(format!("g{id}"))))
            .collect()
    })
}

fn units() -> Option<Units> {
    Some(Units::analytical(Scaling::UNIT))
}

fn same_points(a: &ParetoFront, b: &ParetoFront) -> bool {
    a.points.iter().map(|p| p.objectives()).eq(b.points.iter().map(|p| p.objectives()))
}

proptest! {
    #[test]
    fn front_is_sorted_and_non_dominated(pts in points_strategy()) {
        let f = front_of_points(units(), pts.clone());
        for w in f.points.windows(2) {
            prop_assert!(w[0].delay < w[1].delay && w[0].area > w[1].area);
        }
        for (p, _) in &pts {
            prop_assert!(f.points.iter().any(|q| q.objectives().weakly_dominates(*p)));
            prop_assert!(!f.points.iter().any(|q| p.dominates(q.objectives())));
        }
    }

    #[test]
    fn front_is_idempotent(pts in points_strategy()) {
        let f = front_of_points(units(), pts);
        let again = front_of_points(
            f.units.clone(),
            f.points.iter().flat_map(|p| p.ids.iter().map(move |id| (p.objectives(), id.clone()))),
        );
        prop_assert_eq!(again, f);
    }

    #[test]
    fn merged_front_covers_both_inputs(a in points_strategy(), b in points_strategy()) {
        let fa = front_of_points(units(), a.clone());
        let fb = front_of_points(units(), b.clone());
        let m = merge(&[&fa, &fb]).unwrap();
        let union = front_of_points(units(), a.into_iter().chain(b));
        prop_assert!(same_points(&m, &union));
        if !m.is_empty() {
            for f in [&fa, &fb] {
                let c = compare(&m, f).unwrap();
                prop_assert!(c.b_points.iter().all(|p| p.weakly_dominated_by_a));
            }
        }
    }

    #[test]
    fn comparison_is_symmetric(a in points_strategy(), b in points_strategy()) {
        let fa = front_of_points(units(), a);
        let fb = front_of_points(units(), b);
        let ab = compare(&fa, &fb).unwrap();
        let ba = compare(&fb, &fa).unwrap();
        let flipped = match ba.verdict {
            Verdict::ADominates => Verdict::BDominates,
            Verdict::BDominates => Verdict::ADominates,
            v => v,
        };
        prop_assert_eq!(ab.verdict, flipped);
        prop_assert_eq!(ab.a_points_strictly_dominated, ba.b_points_strictly_dominated);
    }
}
