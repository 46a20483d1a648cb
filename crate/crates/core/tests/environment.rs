use std::collections::{HashSet, VecDeque};

use prefixopt::env::{self, legalize, mask, step, Action, ActionKind};
use prefixopt::eval::AnalyticalEvaluator;
use prefixopt::train::enumerate;
use prefixopt::{NodeId, PrefixGraph, Structure};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn walk(n: usize, seed: u64, len: usize) -> Vec<(PrefixGraph, Action, PrefixGraph)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = env::reset(n, &mut rng).unwrap();
    let mut out = Vec::new();
    for _ in 0..len {
        let a = mask(&g).sample(&mut rng).unwrap();
        let next = step(&g, a).unwrap();
        out.push((g, a, next.clone()));
        g = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_reachable_state_is_legal(n in 3usize..20, seed in any::<u64>()) {
        for (_, _, next) in walk(n, seed, 60) {
            prop_assert!(next.validate().is_ok());
            prop_assert_eq!(legalize(next.nodes()), next.nodes().clone());
        }
    }

    #[test]
    fn actions_do_what_they_say(n in 3usize..16, seed in any::<u64>()) {
        for (g, a, next) in walk(n, seed, 60) {
            prop_assert_ne!(&g, &next);
            match a.kind {
                ActionKind::Add => {
                    prop_assert!(!g.contains(a.node()));
                    prop_assert!(next.contains(a.node()));
                }
                ActionKind::Delete => {
                    prop_assert!(g.in_minlist(a.node()));
                    prop_assert!(!next.contains(a.node()));
                }
            }
        }
    }

    #[test]
    fn mask_matches_step_outcomes(n in 3usize..10, seed in any::<u64>()) {
        for (g, _, _) in walk(n, seed, 20) {
            let m = mask(&g);
            for msb in 2..n {
                for lsb in 1..msb {
                    for a in [Action::add(msb, lsb), Action::delete(msb, lsb)] {
                        // a masked action is exactly one that would be a no-op
                        prop_assert_eq!(m.is_legal(a), step(&g, a).is_ok(), "{}", a);
                    }
                }
            }
        }
    }

    #[test]
    fn minlist_is_the_set_of_non_lower_parents(n in 3usize..16, seed in any::<u64>()) {
        for (_, _, next) in walk(n, seed, 40) {
            let lps = next.nodes().lower_parents();
            for v in next.nodes().iter() {
                prop_assert_eq!(next.in_minlist(v), !lps.contains(v), "{}", v);
            }
            prop_assert_eq!(legalize(next.minlist()), next.nodes().clone());
        }
    }

    #[test]
    fn deleting_a_fresh_minimal_add_undoes_it(n in 3usize..12, seed in any::<u64>()) {
        for (g, a, next) in walk(n, seed, 40) {
            if a.kind != ActionKind::Add {
                continue;
            }
            let mut grown = g.minlist().clone();
            grown.insert(a.node()).unwrap();
            let added: Vec<NodeId> = next.nodes().iter().filter(|&v| !g.contains(v)).collect();
            if *next.minlist() == grown && added == vec![a.node()] {
                prop_assert_eq!(step(&next, Action::delete(a.msb, a.lsb)).unwrap(), g);
            }
        }
    }
}

/// Breadth-first closure of the environment from the two episode starts.
fn reachable(n: usize) -> HashSet<PrefixGraph> {
    let mut seen: HashSet<PrefixGraph> = HashSet::new();
    let mut queue: VecDeque<PrefixGraph> =
        [Structure::Ripple, Structure::Sklansky].iter().map(|s| s.build(n).unwrap()).collect();
    while let Some(g) = queue.pop_front() {
        if !seen.insert(g.clone()) {
            continue;
        }
        for a in mask(&g).legal_actions() {
            let next = step(&g, a).unwrap();
            if !seen.contains(&next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

#[test]
fn environment_reaches_every_legal_graph() {
    let eval = AnalyticalEvaluator::default();
    for n in 4..=6 {
        let all = enumerate(n, &eval).unwrap();
        let seen = reachable(n);
        let nodes: HashSet<_> = seen.iter().map(|g| g.nodes().clone()).collect();
        assert_eq!(nodes.len(), all.designs.len(), "n={n}");
        for (g, _) in &all.designs {
            assert!(nodes.contains(g.nodes()), "n={n}: {} unreachable", g.to_json());
        }
    }
}

#[test]
fn full_graph_has_no_add_and_ripple_no_delete() {
    for n in [4, 9, 16] {
        let ks = PrefixGraph::kogge_stone(n).unwrap();
        let mut full = ks.clone();
        while let Some(a) = mask(&full).legal_actions().into_iter().find(|a| a.kind == ActionKind::Add) {
            full = step(&full, a).unwrap();
        }
        assert_eq!(full.non_input_count(), n * (n - 1) / 2);
        let ripple = PrefixGraph::ripple(n).unwrap();
        assert!(mask(&ripple).legal_actions().iter().all(|a| a.kind == ActionKind::Add));
    }
}
