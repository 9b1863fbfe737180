use probplan::belief::{BeliefConfig, BeliefNode};
use probplan::bn::build_belief_bn;
use probplan::cnf::{encode_bn, parse_wdimacs, wmc_bruteforce, write_wdimacs};
use probplan::oracle::{goal_probability, layer_prob, plan_probability, relaxed_layers, relaxed_reach_probability};
use probplan::prpg::{build_prpg, build_to_horizon, PrpgContext, PrpgOptions, PrpgStatus};
use probplan::random::{random_applicable_sequence, random_cnf, random_task, TaskShape};
use probplan::search::{plan, SearchConfig, SearchStatus};
use probplan::task::{parse_task, write_task};
use probplan::wmc::{wmc, WmcOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn belief_probabilities_match_explicit_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = TaskShape::default();
    for cfg in [BeliefConfig::default(), BeliefConfig::planner()] {
        for i in 0..300 {
            let task = random_task(&mut rng, &shape);
            let len = rng.gen_range(0..=4);
            let (seq, b) = random_applicable_sequence(&mut rng, &task, len);
            let mut node = BeliefNode::root(&task, &cfg);
            for a in &seq {
                node = node.successor(&task, *a, &cfg).unwrap_or_else(|e| panic!("task {i}: {e}"));
            }
            let got = node.goal_test(&task, &task.goal, task.theta, &cfg).probability;
            let want = goal_probability(&task, &b, &task.goal);
            assert!((got - want).abs() < 1e-9, "task {i}: {got} vs {want}\n{}", write_task(&task));
        }
    }
}

#[test]
fn wmc_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let n = rng.gen_range(0..=20);
        let m = rng.gen_range(0..=3 * n + 1);
        let cnf = random_cnf(&mut rng, n, m);
        let want = wmc_bruteforce(&cnf, &[]).unwrap();
        for opts in [WmcOptions::default(), WmcOptions::planner()] {
            let got = wmc(&cnf, &[], opts);
            assert!((got - want).abs() < 1e-9 * want.max(1.0), "cnf {i}: {got} vs {want}");
        }
    }
}

#[test]
fn encoded_nets_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..200 {
        let task = random_task(&mut rng, &TaskShape::default());
        let len = rng.gen_range(0..=3);
        let (seq, _) = random_applicable_sequence(&mut rng, &task, len);
        let enc = encode_bn(&build_belief_bn(&task, &seq)).unwrap();
        let total = wmc(&enc.cnf, &[], WmcOptions::default());
        assert!((total - 1.0).abs() < 1e-9, "net {i}: {total}");
    }
}

#[test]
fn relaxed_layers_classify_like_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..250 {
        let task = random_task(&mut rng, &TaskShape::default());
        let len = rng.gen_range(0..=3);
        let (seq, _) = random_applicable_sequence(&mut rng, &task, len);
        let h = rng.gen_range(0..=4);
        let mut ctx = PrpgContext::new(&task, &BeliefConfig::default());
        let g = build_to_horizon(&mut ctx, &task, &seq, h, None);
        let layers = relaxed_layers(&task, &seq, h).unwrap();
        assert_eq!(layers.len(), g.layers.len());
        for (k, layer) in layers.iter().enumerate() {
            for p in (0..task.num_props() as u32).map(probplan::task::PropId) {
                let pr = layer_prob(layer, &[p]);
                let name = &task.prop(p).name;
                assert_eq!(g.is_known(k, p), pr >= 1.0 - 1e-9, "task {i} layer {k} {name} pr={pr}");
                assert_eq!(g.is_known(k, p) || g.is_unknown(k, p), pr > 1e-12, "task {i} layer {k} {name} pr={pr}");
            }
        }
    }
}

#[test]
fn failed_graphs_have_no_relaxed_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failed = 0;
    for i in 0..250 {
        let task = random_task(&mut rng, &TaskShape::default());
        let len = rng.gen_range(0..=3);
        let (seq, _) = random_applicable_sequence(&mut rng, &task, len);
        let mut ctx = PrpgContext::new(&task, &BeliefConfig::planner());
        let g = build_prpg(&mut ctx, &task, &seq, &PrpgOptions::for_task(&task));
        if g.status == Some(PrpgStatus::Failed { capped: false }) {
            failed += 1;
            let best = relaxed_reach_probability(&task, &seq, 8, &task.goal).unwrap();
            assert!(best < task.theta - 1e-9, "task {i}: relaxed plan after {seq:?} reaches {best}\n{}", write_task(&task));
        }
    }
    assert!(failed > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn task_text_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task = random_task(&mut rng, &TaskShape::default());
        let again = parse_task(&write_task(&task)).unwrap();
        prop_assert_eq!(write_task(&again), write_task(&task));
    }

    #[test]
    fn wdimacs_round_trips(seed in any::<u64>(), n in 0usize..12, m in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cnf = random_cnf(&mut rng, n, m);
        let back = parse_wdimacs(&write_wdimacs(&cnf)).unwrap();
        let a = wmc_bruteforce(&cnf, &[]).unwrap();
        let b = wmc_bruteforce(&back, &[]).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }

    #[test]
    fn found_plans_reach_theta(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task = random_task(&mut rng, &TaskShape::default());
        let cfg = SearchConfig { node_limit: 2_000, ..SearchConfig::default() };
        let r = plan(&task, &cfg).unwrap();
        if r.status == SearchStatus::PlanFound {
            let p = plan_probability(&task, &r.plan, 1 << 16).unwrap();
            prop_assert!(p >= task.theta - 1e-9, "{} < {}", p, task.theta);
        }
    }

    #[test]
    fn more_tries_never_lower_safe_probability(n in 2usize..12, k in 0usize..12) {
        let spec = probplan::bench::BenchSpec::new(probplan::bench::Family::SafeUni, &[n], 0.5);
        let task = parse_task(&probplan::bench::generate(&spec).unwrap()).unwrap();
        let tries: Vec<_> = (0..k.min(n) as u32).map(probplan::task::ActionId).collect();
        let p = plan_probability(&task, &tries, 1 << 16).unwrap();
        prop_assert!((p - tries.len() as f64 / n as f64).abs() < 1e-9);
    }
}
