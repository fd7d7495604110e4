//! Quick wall-clock and learning-dynamics probe for the stepwise regime
//! at a reduced width. Not part of the test suite.

use latentlab::decode::{AnswerRule, LatentN};
use latentlab::probes::run_no_latent_ablation;
use latentlab::taskgen::{generate_record, DatasetParams, SplitSizes};
use latentlab::training::{sequence_ids, train_run, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let layers: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let dim: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(128);
    let train_n: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(800);
    let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(10);
    let lr: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1e-4);

    let depth_max: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(5);
    let ds = DatasetParams {
        seed: 7,
        splits: SplitSizes {
            train: train_n,
            val: 100,
            test: 200,
        },
        node_count_min: 10,
        node_count_max: 13,
        ..DatasetParams::default()
    }
    .with_depth_range(3, depth_max);
    let gen = |lo: u64, hi: u64| -> Vec<_> {
        (lo..hi).map(|i| generate_record(&ds, i).unwrap()).collect()
    };
    let t0 = Instant::now();
    let train = gen(0, train_n as u64);
    let val = gen(train_n as u64, (train_n + 100) as u64);
    let test = gen((train_n + 100) as u64, (train_n + 300) as u64);
    println!("dataset: {:.1}s", t0.elapsed().as_secs_f32());

    let mut config = TrainConfig::scratch_symbolic(layers, dim, 42);
    config.total_epochs = epochs;
    config.early_stop_patience = None;
    config.optimizer.lr = lr;

    let t0 = Instant::now();
    let outcome = train_run(&train, &val, &config).unwrap();
    for m in &outcome.metrics {
        println!(
            "epoch {:2}  loss {:.4}  val_acc {:.3}  elapsed {:.0}s",
            m.epoch,
            m.train_loss,
            m.val_accuracy,
            t0.elapsed().as_secs_f32()
        );
    }
    println!(
        "best epoch {} val acc {:.3}  total {:.0}s",
        outcome.best_epoch,
        outcome.best_val_accuracy,
        t0.elapsed().as_secs_f32()
    );

    let (_, spec, _) = sequence_ids(false);
    let results = run_no_latent_ablation(
        &outcome.params,
        &test,
        LatentN::Depth,
        AnswerRule::FirstToken,
        &spec,
        false,
    )
    .unwrap();
    for r in &results {
        println!(
            "{}: {:.3} ({}/{})",
            r.condition.label(),
            r.accuracy(),
            r.outcome.correct,
            r.outcome.total
        );
    }
    // train-split accuracy to read the generalization gap
    let train_sub: Vec<_> = train.iter().take(200).cloned().collect();
    let on_train = latentlab::decode::evaluate_tasks(
        &outcome.params,
        &train_sub,
        false,
        &latentlab::decode::EvalDecode::Coconut {
            n: LatentN::Depth,
            answer: AnswerRule::FirstToken,
        },
        &spec,
    )
    .unwrap();
    println!("train-subset with-latent: {:.3}", on_train.accuracy());

    // belief signature on 4-hop test tasks
    let belief_tasks: Vec<_> = test.iter().filter(|r| r.task.depth == 4).cloned().collect();
    let profiles = latentlab::probes::run_belief_evolution(
        &outcome.params,
        &belief_tasks,
        latentlab::probes::BeliefMode::CoconutLatents,
        &spec,
        latentlab::model::LensMode::FinalNorm,
    )
    .unwrap();
    for p in &profiles {
        for s in &p.steps {
            println!(
                "belief depth{} step{}: cn={:.3} wn={:.3} tgt={:.3} other={:.3} (tgt_ent={:.3})",
                p.depth,
                s.step,
                s.masses[0],
                s.masses[1],
                s.masses[2],
                s.masses[3],
                s.target_entity
            );
        }
    }

    // uniform-superposition entropy ratios, trained vs random
    let vocab = latentlab::taskgen::SymbolicVocab::new();
    let random = latentlab::model::init_random::<f32>(outcome.params.config, 0xbad5eed).unwrap();
    let layers = latentlab::probes::probe_layers(outcome.params.config.num_layers).unwrap();
    let rows = latentlab::probes::run_uniform_superposition(
        &outcome.params,
        &random,
        &[2, 5, 10],
        50,
        77,
        vocab.bos(),
        &layers,
        latentlab::model::LensMode::FinalNorm,
    )
    .unwrap();
    let (first, last) = (layers.first(), layers.last());
    for &k in &[2usize, 5, 10] {
        let tf = latentlab::probes::row_mean(&rows, "trained", k, first).unwrap();
        let tl = latentlab::probes::row_mean(&rows, "trained", k, last).unwrap();
        let rf = latentlab::probes::row_mean(&rows, "random", k, first).unwrap();
        let rl = latentlab::probes::row_mean(&rows, "random", k, last).unwrap();
        println!(
            "uniform k={k}: trained {tf:.3}->{tl:.3} (ratio {:.2}), random {rf:.3}->{rl:.3} (ratio {:.2})",
            tl / tf,
            rl / rf
        );
    }
}
