//! Property tests over the generation and decoding invariants.

use latentlab::decode::{soft_thinking_step, SoftThinkingConfig, SoftWeighting};
use latentlab::model::{init_random, ModelConfig};
use latentlab::taskgen::{
    bfs_reachable, categorize_entities, generate_graph, render_symbolic, EntityCategory,
    SymbolicVocab,
};
use ndarray::Array1;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_tasks_satisfy_reachability_invariants(
        seed in 0u64..5000,
        node_count in 9usize..=20,
        depth in 3usize..=6,
    ) {
        prop_assume!(node_count >= depth + 3);
        let task = generate_graph(seed, node_count, depth).unwrap();
        let reach = bfs_reachable(&task.graph, task.start);
        prop_assert!(reach.contains(&task.target));
        prop_assert!(!reach.contains(&task.distractor));
        prop_assert_eq!(task.gold_path.len(), depth + 1);
        task.validate().unwrap();
    }

    #[test]
    fn categories_partition_exactly_at_every_step(
        seed in 0u64..2000,
        depth in 3usize..=6,
    ) {
        let task = generate_graph(seed, depth + 8, depth).unwrap();
        for step in 1..=depth {
            let map = categorize_entities(&task, step).unwrap();
            prop_assert_eq!(map.categories.len(), task.graph.node_count);
            prop_assert_eq!(map.nodes_in(EntityCategory::CorrectNext).len(), 1);
            let total: usize = EntityCategory::ALL
                .iter()
                .map(|&c| map.nodes_in(c).len())
                .sum();
            prop_assert_eq!(total, task.graph.node_count);
        }
    }

    #[test]
    fn symbolic_entity_injection_is_node_symbols_only(
        seed in 0u64..2000,
        render_seed in 0u64..100,
    ) {
        let task = generate_graph(seed, 12, 4).unwrap();
        let vocab = SymbolicVocab::new();
        let rendered = render_symbolic(&task, &vocab, render_seed).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for toks in &rendered.entity_tokens {
            prop_assert_eq!(toks.len(), 1);
            prop_assert!(vocab.is_node_symbol(toks[0]));
            prop_assert!(seen.insert(toks[0]), "injection not injective");
        }
    }

    #[test]
    fn generation_is_pure_in_seed(seed in 0u64..2000) {
        let a = generate_graph(seed, 12, 4).unwrap();
        let b = generate_graph(seed, 12, 4).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn soft_tokens_stay_on_the_simplex_and_in_the_hull(
        raw_logits in proptest::collection::vec(-8.0f32..8.0, 11),
        k in 1usize..=8,
        uniform in proptest::bool::ANY,
    ) {
        let params = init_random::<f32>(
            ModelConfig {
                num_layers: 1,
                num_heads: 2,
                model_dim: 16,
                vocab_size: 11,
                max_positions: 16,
                tie_unembedding: true,
            },
            7,
        )
        .unwrap();
        let cfg = SoftThinkingConfig {
            soft_top_k: k,
            weighting: if uniform { SoftWeighting::Uniform } else { SoftWeighting::Softmax },
            ..Default::default()
        };
        let logits = Array1::from_vec(raw_logits);
        let (soft, _) = soft_thinking_step(&params, logits.view(), &cfg);
        let sum: f32 = soft.support.iter().map(|(_, w)| *w).sum();
        prop_assert!((sum - 1.0).abs() < 1e-5, "weights sum {sum}");
        prop_assert!(soft.support.iter().all(|(_, w)| *w >= 0.0));
        // reconstruct the embedding from (support, weights, table)
        let mut rebuilt = Array1::<f32>::zeros(16);
        for (id, w) in &soft.support {
            rebuilt += &(params.wte.row(*id as usize).to_owned() * *w);
        }
        for (a, b) in soft.embedding.iter().zip(rebuilt.iter()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cold_stop_is_monotone_in_threshold(
        raw_logits in proptest::collection::vec(-6.0f32..6.0, 11),
        c_lo in 0.0f64..0.5,
        c_gap in 0.0f64..0.5,
    ) {
        let params = init_random::<f32>(
            ModelConfig {
                num_layers: 1,
                num_heads: 2,
                model_dim: 16,
                vocab_size: 11,
                max_positions: 16,
                tie_unembedding: true,
            },
            3,
        )
        .unwrap();
        let logits = Array1::from_vec(raw_logits);
        let fire = |c: f64| {
            let cfg = SoftThinkingConfig { soft_top_k: 5, cold_stop: c, ..Default::default() };
            soft_thinking_step(&params, logits.view(), &cfg).1
        };
        if fire(c_lo) {
            prop_assert!(fire(c_lo + c_gap), "fired at {c_lo} but not at {}", c_lo + c_gap);
        }
    }
}
