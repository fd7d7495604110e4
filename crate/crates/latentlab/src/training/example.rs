//! Training-example construction for the three regimes.

use super::{CurriculumSchedule, LatentMarkers};
use crate::model::batch::MASKED;
use crate::taskgen::{GraphTask, RenderedTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleItem {
    Token(u32),
    /// Placeholder whose input embedding is substituted at runtime.
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentTag {
    Question,
    Latent,
    Cot,
    Answer,
}

/// One training sequence with pre-shifted labels: `labels[t]` is the
/// token the logits at position `t` must predict, or [`MASKED`].
/// Question and latent positions are never supervised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub items: Vec<ExampleItem>,
    pub labels: Vec<i64>,
    pub segments: Vec<SegmentTag>,
}

impl TrainingExample {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn supervised_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != MASKED).count()
    }

    pub fn first_latent_index(&self) -> Option<usize> {
        self.items
            .iter()
            .position(|i| matches!(i, ExampleItem::Latent))
    }

    pub fn latent_count(&self) -> usize {
        self.items
            .iter()
            .filter(|i| matches!(i, ExampleItem::Latent))
            .count()
    }

    /// Default labels: predict the next token wherever the next token
    /// belongs to the chain or answer segments.
    fn shift_labels(items: &[ExampleItem], segments: &[SegmentTag]) -> Vec<i64> {
        let mut labels = vec![MASKED; items.len()];
        for t in 0..items.len().saturating_sub(1) {
            if matches!(segments[t + 1], SegmentTag::Cot | SegmentTag::Answer) {
                if let ExampleItem::Token(id) = items[t + 1] {
                    labels[t] = id as i64;
                }
            }
        }
        labels
    }
}

/// Plain discrete chain-of-thought supervision: question, every gold
/// step, then the answer. No latent markers anywhere.
pub fn build_cot_example(rendered: &RenderedTask) -> TrainingExample {
    let mut items = Vec::new();
    let mut segments = Vec::new();
    for &t in &rendered.prompt_tokens {
        items.push(ExampleItem::Token(t));
        segments.push(SegmentTag::Question);
    }
    for step in &rendered.cot_steps {
        for &t in step {
            items.push(ExampleItem::Token(t));
            segments.push(SegmentTag::Cot);
        }
    }
    for &t in &rendered.answer_tokens {
        items.push(ExampleItem::Token(t));
        segments.push(SegmentTag::Answer);
    }
    let labels = TrainingExample::shift_labels(&items, &segments);
    TrainingExample {
        items,
        labels,
        segments,
    }
}

/// Stage-`k` curriculum layout: question, the latent span standing in
/// for the first `k` steps, the remaining discrete steps, the answer.
/// When `k` exceeds the task depth every step is replaced.
pub fn build_coconut_example(
    rendered: &RenderedTask,
    stage_k: usize,
    schedule: &CurriculumSchedule,
    markers: &LatentMarkers,
) -> TrainingExample {
    let depth = rendered.cot_steps.len();
    let replaced = stage_k.min(depth);
    let n_latent = replaced * schedule.c_thought;

    let mut items = Vec::new();
    let mut segments = Vec::new();
    for &t in &rendered.prompt_tokens {
        items.push(ExampleItem::Token(t));
        segments.push(SegmentTag::Question);
    }
    items.push(ExampleItem::Token(markers.start));
    segments.push(SegmentTag::Latent);
    for _ in 0..n_latent {
        items.push(ExampleItem::Latent);
        segments.push(SegmentTag::Latent);
    }
    items.push(ExampleItem::Token(markers.end));
    segments.push(SegmentTag::Latent);
    for step in &rendered.cot_steps[replaced..] {
        for &t in step {
            items.push(ExampleItem::Token(t));
            segments.push(SegmentTag::Cot);
        }
    }
    for &t in &rendered.answer_tokens {
        items.push(ExampleItem::Token(t));
        segments.push(SegmentTag::Answer);
    }
    let labels = TrainingExample::shift_labels(&items, &segments);
    TrainingExample {
        items,
        labels,
        segments,
    }
}

/// Stepwise variant: one example per hop count `i`, supervising only the
/// value of the i-th node after `i` latent steps. The full gold chain is
/// never presented as discrete supervision.
pub fn build_stepwise_examples(
    task: &GraphTask,
    rendered: &RenderedTask,
    markers: &LatentMarkers,
) -> Vec<TrainingExample> {
    let depth = task.depth;
    let mut out = Vec::with_capacity(depth);
    for i in 1..=depth {
        let mut items = Vec::new();
        let mut segments = Vec::new();
        for &t in &rendered.prompt_tokens {
            items.push(ExampleItem::Token(t));
            segments.push(SegmentTag::Question);
        }
        items.push(ExampleItem::Token(markers.start));
        segments.push(SegmentTag::Latent);
        for _ in 0..i {
            items.push(ExampleItem::Latent);
            segments.push(SegmentTag::Latent);
        }
        items.push(ExampleItem::Token(markers.end));
        segments.push(SegmentTag::Latent);

        let mut labels = vec![MASKED; items.len()];
        let node_token = rendered.entity_tokens[task.gold_path[i]][0];
        *labels.last_mut().expect("non-empty") = node_token as i64;
        out.push(TrainingExample {
            items,
            labels,
            segments,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate_graph, render_symbolic, SymbolicVocab};

    fn fixture(depth: usize) -> (GraphTask, RenderedTask, LatentMarkers) {
        let task = generate_graph(41, depth + 7, depth).unwrap();
        let vocab = SymbolicVocab::new();
        let rendered = render_symbolic(&task, &vocab, 5).unwrap();
        (task, rendered, LatentMarkers::from_symbolic(&vocab))
    }

    #[test]
    fn stage_zero_keeps_all_steps_with_empty_latent_span() {
        let (_, rendered, markers) = fixture(4);
        let schedule = CurriculumSchedule::default();
        let ex = build_coconut_example(&rendered, 0, &schedule, &markers);
        assert_eq!(ex.latent_count(), 0);
        // start and end markers are adjacent
        let start_pos = ex
            .items
            .iter()
            .position(|i| *i == ExampleItem::Token(markers.start))
            .unwrap();
        assert_eq!(ex.items[start_pos + 1], ExampleItem::Token(markers.end));
        // every gold step still supervised
        let cot = build_cot_example(&rendered);
        assert_eq!(ex.supervised_count(), cot.supervised_count());
    }

    #[test]
    fn deep_stage_replaces_every_step() {
        let (_, rendered, markers) = fixture(5);
        let schedule = CurriculumSchedule::default();
        let ex = build_coconut_example(&rendered, 6, &schedule, &markers);
        assert_eq!(ex.latent_count(), 5); // capped at depth
        assert!(!ex.segments.contains(&SegmentTag::Cot));
    }

    #[test]
    fn supervised_count_drops_by_replaced_step_tokens() {
        let (_, rendered, markers) = fixture(4);
        let schedule = CurriculumSchedule::default();
        let base = build_coconut_example(&rendered, 0, &schedule, &markers);
        for k in 1..=4usize {
            let ex = build_coconut_example(&rendered, k, &schedule, &markers);
            let replaced_tokens: usize = rendered.cot_steps[..k].iter().map(|s| s.len()).sum();
            assert_eq!(
                ex.supervised_count(),
                base.supervised_count() - replaced_tokens,
                "stage {k}"
            );
        }
    }

    #[test]
    fn curriculum_supervision_is_monotone_in_stage() {
        let (_, rendered, markers) = fixture(5);
        let schedule = CurriculumSchedule::default();
        let counts: Vec<usize> = (0..=6)
            .map(|k| build_coconut_example(&rendered, k, &schedule, &markers).supervised_count())
            .collect();
        for w in counts.windows(2) {
            assert!(w[1] <= w[0], "supervision grew with stage: {counts:?}");
        }
    }

    #[test]
    fn question_and_latent_positions_are_masked() {
        let (_, rendered, markers) = fixture(4);
        let schedule = CurriculumSchedule::default();
        let ex = build_coconut_example(&rendered, 2, &schedule, &markers);
        for t in 0..ex.len() {
            // a supervised label must target a cot or answer token
            if ex.labels[t] != MASKED {
                assert!(matches!(
                    ex.segments[t + 1],
                    SegmentTag::Cot | SegmentTag::Answer
                ));
            }
        }
        // positions whose successor is inside the latent span are masked
        for t in 0..ex.len() - 1 {
            if ex.segments[t + 1] == SegmentTag::Latent {
                assert_eq!(ex.labels[t], MASKED);
            }
        }
    }

    #[test]
    fn stepwise_examples_cover_every_hop_once() {
        let (task, rendered, markers) = fixture(4);
        let examples = build_stepwise_examples(&task, &rendered, &markers);
        assert_eq!(examples.len(), 4);
        for (i, ex) in examples.iter().enumerate() {
            assert_eq!(ex.latent_count(), i + 1);
            assert_eq!(ex.supervised_count(), 1);
            let label = *ex.labels.last().unwrap();
            let expected = rendered.entity_tokens[task.gold_path[i + 1]][0] as i64;
            assert_eq!(label, expected);
        }
        // union of labels over i equals the gold path entity tokens
        let labels: Vec<i64> = examples.iter().map(|e| *e.labels.last().unwrap()).collect();
        let expected: Vec<i64> = (1..=4)
            .map(|i| rendered.entity_tokens[task.gold_path[i]][0] as i64)
            .collect();
        assert_eq!(labels, expected);
    }

    #[test]
    fn final_stepwise_label_is_the_target_token() {
        let (task, rendered, markers) = fixture(5);
        let examples = build_stepwise_examples(&task, &rendered, &markers);
        let last = examples.last().unwrap();
        assert_eq!(
            *last.labels.last().unwrap(),
            rendered.entity_tokens[task.target][0] as i64
        );
    }

    #[test]
    fn stepwise_never_supervises_two_consecutive_path_nodes() {
        let (task, rendered, markers) = fixture(4);
        for ex in build_stepwise_examples(&task, &rendered, &markers) {
            assert_eq!(ex.supervised_count(), 1);
        }
    }
}
