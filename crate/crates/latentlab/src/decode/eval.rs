//! Task-level accuracy evaluation shared by training validation and the
//! ablation probes.

use super::{coconut_decode, greedy_decode, no_latent_decode, DecodeError};
use crate::model::{ModelParams, Scalar};
use crate::taskgen::DatasetRecord;
use rayon::prelude::*;

/// Structural token ids needed to drive decoding for a rendering.
#[derive(Debug, Clone, Copy)]
pub struct SeqSpec {
    pub eos: u32,
    pub start_latent: u32,
    pub end_latent: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentN {
    /// One latent step per gold hop.
    Depth,
    Fixed(usize),
    /// Curriculum-stage count, capped at the task depth.
    StageCapped {
        stage: usize,
        c_thought: usize,
    },
}

impl LatentN {
    fn resolve(&self, depth: usize) -> usize {
        match self {
            LatentN::Depth => depth,
            LatentN::Fixed(n) => *n,
            LatentN::StageCapped { stage, c_thought } => stage.min(&depth) * c_thought,
        }
    }
}

/// How the answer token is read off the decoded continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerRule {
    /// First decoded token (stepwise-trained models supervise exactly
    /// one position after the latent block).
    FirstToken,
    /// Decode until eos and take the last non-eos token (models trained
    /// with discrete text after the latent block).
    UntilEos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalDecode {
    CotGreedy,
    Coconut {
        n: LatentN,
        answer: AnswerRule,
    },
    NoLatent {
        keep_markers: bool,
        answer: AnswerRule,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOutcome {
    pub correct: usize,
    pub total: usize,
}

impl EvalOutcome {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

fn read_answer(generated: &[u32], rule: AnswerRule, eos: u32) -> Option<u32> {
    match rule {
        AnswerRule::FirstToken => generated.first().copied(),
        AnswerRule::UntilEos => generated.iter().rev().find(|&&t| t != eos).copied(),
    }
}

/// Scores one record: decode under `mode` and compare against the target
/// entity token.
pub fn score_record<T: Scalar>(
    params: &ModelParams<T>,
    record: &DatasetRecord,
    use_natural: bool,
    mode: &EvalDecode,
    spec: &SeqSpec,
) -> Result<bool, DecodeError> {
    let rendered = if use_natural {
        &record.natural
    } else {
        &record.symbolic
    };
    let target_token = rendered.entity_tokens[record.task.target][0];
    let prompt = &rendered.prompt_tokens;
    let cot_len: usize = rendered.cot_steps.iter().map(|s| s.len()).sum();
    let generous = cot_len + rendered.answer_tokens.len() + 4;

    let generated = match mode {
        EvalDecode::CotGreedy => greedy_decode(params, prompt, spec.eos, generous)?.0,
        EvalDecode::Coconut { n, answer } => {
            let n_latent = n.resolve(record.task.depth);
            let max_answer = match answer {
                AnswerRule::FirstToken => 1,
                AnswerRule::UntilEos => generous,
            };
            coconut_decode(
                params,
                prompt,
                n_latent,
                spec.start_latent,
                spec.end_latent,
                spec.eos,
                max_answer,
            )?
            .0
        }
        EvalDecode::NoLatent {
            keep_markers,
            answer,
        } => {
            let max_answer = match answer {
                AnswerRule::FirstToken => 1,
                AnswerRule::UntilEos => generous,
            };
            no_latent_decode(
                params,
                prompt,
                *keep_markers,
                spec.start_latent,
                spec.end_latent,
                spec.eos,
                max_answer,
            )?
            .0
        }
    };
    let answer_rule = match mode {
        EvalDecode::CotGreedy => AnswerRule::UntilEos,
        EvalDecode::Coconut { answer, .. } | EvalDecode::NoLatent { answer, .. } => *answer,
    };
    Ok(read_answer(&generated, answer_rule, spec.eos) == Some(target_token))
}

/// Accuracy over a record set. Tasks decode concurrently over shared
/// immutable parameters; the reduction order is fixed by record index.
pub fn evaluate_tasks<T: Scalar>(
    params: &ModelParams<T>,
    records: &[DatasetRecord],
    use_natural: bool,
    mode: &EvalDecode,
    spec: &SeqSpec,
) -> Result<EvalOutcome, DecodeError> {
    let results: Result<Vec<bool>, DecodeError> = records
        .par_iter()
        .map(|r| score_record(params, r, use_natural, mode, spec))
        .collect();
    let results = results?;
    Ok(EvalOutcome {
        correct: results.iter().filter(|&&c| c).count(),
        total: results.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_rules_read_the_right_token() {
        assert_eq!(
            read_answer(&[5, 2, 10], AnswerRule::FirstToken, 10),
            Some(5)
        );
        assert_eq!(read_answer(&[5, 2, 10], AnswerRule::UntilEos, 10), Some(2));
        assert_eq!(read_answer(&[10], AnswerRule::UntilEos, 10), None);
        assert_eq!(read_answer(&[], AnswerRule::FirstToken, 10), None);
    }
}
