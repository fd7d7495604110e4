//! Diagnostic: entity-belief tables under both probe alignments and both
//! lens modes, for the stepwise and discrete regimes. Not part of the
//! test suite.

use latentlab::model::{forward, logit_lens, DecodeCache, LensMode, ModelParams, SequenceItem};
use latentlab::taskgen::{
    categorize_entities, generate_record, DatasetParams, DatasetRecord, EntityCategory, SplitSizes,
};
use latentlab::training::{sequence_ids, train_run, Regime, TrainConfig};
use ndarray::Array1;

fn belief_table(
    params: &ModelParams<f32>,
    records: &[DatasetRecord],
    slot_out: bool,
    lens_mode: LensMode,
    start_latent: u32,
) {
    let final_layer = params.config.num_layers - 1;
    let depth = 4;
    let mut sums = vec![[0.0f64; 4]; depth];
    let mut n = 0usize;
    for rec in records.iter().filter(|r| r.task.depth == depth) {
        n += 1;
        let mut cache = DecodeCache::new(&params.config);
        let mut items: Vec<SequenceItem<f32>> = rec
            .symbolic
            .prompt_tokens
            .iter()
            .map(|&t| SequenceItem::Token(t))
            .collect();
        items.push(SequenceItem::Token(start_latent));
        let mut out = forward(params, &items, &mut cache, &[]).unwrap();
        // probs per step under the chosen alignment
        let mut hiddens: Vec<Array1<f32>> = Vec::new();
        for _ in 0..=depth {
            let h = out.final_hidden.clone();
            hiddens.push(h.clone());
            out = forward(params, &[SequenceItem::Vector(h)], &mut cache, &[]).unwrap();
        }
        for step in 1..=depth {
            // thought-in: the vector fed into slot `step` (hiddens[step-1]);
            // slot-out: the state at slot `step` itself (hiddens[step])
            let h = if slot_out {
                &hiddens[step]
            } else {
                &hiddens[step - 1]
            };
            let lens = logit_lens(params, h.view(), final_layer, 0, lens_mode).unwrap();
            let cats = categorize_entities(&rec.task, step).unwrap();
            let mut total = 0.0f64;
            let mut masses = [0.0f64; 4];
            for node in 0..rec.task.graph.node_count {
                let p = lens.probs[rec.symbolic.entity_tokens[node][0] as usize] as f64;
                total += p;
                let idx = EntityCategory::ALL
                    .iter()
                    .position(|c| *c == cats.categories[node])
                    .unwrap();
                masses[idx] += p;
            }
            for (i, m) in masses.iter().enumerate() {
                sums[step - 1][i] += m / total;
            }
        }
    }
    for (s, row) in sums.iter().enumerate() {
        println!(
            "    step {}: cn={:.3} wn={:.3} tgt={:.3} other={:.3}",
            s + 1,
            row[0] / n as f64,
            row[1] / n as f64,
            row[2] / n as f64,
            row[3] / n as f64
        );
    }
}

fn cot_belief_table(params: &ModelParams<f32>, records: &[DatasetRecord], lens_mode: LensMode) {
    let final_layer = params.config.num_layers - 1;
    let depth = 4;
    let mut sums = vec![[0.0f64; 4]; depth];
    let mut n = 0usize;
    for rec in records.iter().filter(|r| r.task.depth == depth) {
        n += 1;
        let mut items: Vec<SequenceItem<f32>> = rec
            .symbolic
            .prompt_tokens
            .iter()
            .map(|&t| SequenceItem::Token(t))
            .collect();
        for step in &rec.symbolic.cot_steps {
            for &t in step {
                items.push(SequenceItem::Token(t));
            }
        }
        let mut cache = DecodeCache::new(&params.config);
        let out = forward(params, &items, &mut cache, &[final_layer]).unwrap();
        let mut pos = rec.symbolic.prompt_tokens.len() - 1;
        for step in 1..=depth {
            let h = out.trace.state(final_layer, pos).unwrap();
            let lens = logit_lens(params, h, final_layer, pos, lens_mode).unwrap();
            let cats = categorize_entities(&rec.task, step).unwrap();
            let mut total = 0.0f64;
            let mut masses = [0.0f64; 4];
            for node in 0..rec.task.graph.node_count {
                let p = lens.probs[rec.symbolic.entity_tokens[node][0] as usize] as f64;
                total += p;
                let idx = EntityCategory::ALL
                    .iter()
                    .position(|c| *c == cats.categories[node])
                    .unwrap();
                masses[idx] += p / 1.0;
            }
            for (i, m) in masses.iter().enumerate() {
                sums[step - 1][i] += m / total;
            }
            pos += rec.symbolic.cot_steps[step - 1].len();
        }
    }
    for (s, row) in sums.iter().enumerate() {
        println!(
            "    step {}: cn={:.3} wn={:.3} tgt={:.3} other={:.3}",
            s + 1,
            row[0] / n as f64,
            row[1] / n as f64,
            row[2] / n as f64,
            row[3] / n as f64
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dim: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let train_n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);

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
    .with_depth_range(3, 5);
    let gen = |lo: u64, hi: u64| -> Vec<_> {
        (lo..hi).map(|i| generate_record(&ds, i).unwrap()).collect()
    };
    let train = gen(0, train_n as u64);
    let val = gen(train_n as u64, (train_n + 100) as u64);
    let test: Vec<DatasetRecord> = gen((train_n + 100) as u64, (train_n + 300) as u64);
    let (markers, _spec, _) = sequence_ids(false);

    let mut config = TrainConfig::scratch_symbolic(2, dim, 42);
    config.total_epochs = epochs;
    config.early_stop_patience = None;
    config.optimizer.lr = lr;
    let outcome = train_run(&train, &val, &config).unwrap();
    println!("stepwise best val {:.3}", outcome.best_val_accuracy);
    intermediate_accuracy(&outcome.params, &test, markers.start, markers.end);
    for (slot_out, label) in [(false, "thought-in"), (true, "slot-out")] {
        for (mode, mlabel) in [(LensMode::FinalNorm, "final-norm"), (LensMode::Raw, "raw")] {
            println!("  [{label} / {mlabel}]");
            belief_table(&outcome.params, &test, slot_out, mode, markers.start);
        }
    }

    if args.get(5).map(|s| s == "cot").unwrap_or(false) {
        let mut cot_config = config.clone();
        cot_config.regime = Regime::Cot;
        cot_config.total_epochs = epochs.min(6);
        let cot = train_run(&train, &val, &cot_config).unwrap();
        println!("cot best val {:.3}", cot.best_val_accuracy);
        for (mode, mlabel) in [(LensMode::FinalNorm, "final-norm"), (LensMode::Raw, "raw")] {
            println!("  [cot positions / {mlabel}]");
            cot_belief_table(&cot.params, &test, mode);
        }
    }
}

/// Accuracy of reading node_i after i latent steps, per hop index.
fn intermediate_accuracy(
    params: &ModelParams<f32>,
    records: &[DatasetRecord],
    start_latent: u32,
    end_latent: u32,
) {
    for i in 1..=4usize {
        let mut correct = 0usize;
        let mut total = 0usize;
        for rec in records.iter().filter(|r| r.task.depth >= i) {
            let (answer, _) = latentlab::decode::coconut_decode(
                params,
                &rec.symbolic.prompt_tokens,
                i,
                start_latent,
                end_latent,
                2,
                1,
            )
            .unwrap();
            let expected = rec.symbolic.entity_tokens[rec.task.gold_path[i]][0];
            total += 1;
            if answer.first() == Some(&expected) {
                correct += 1;
            }
        }
        println!(
            "  hop {i}: {:.3} ({correct}/{total})",
            correct as f64 / total as f64
        );
    }
}
