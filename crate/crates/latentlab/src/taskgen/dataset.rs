//! Dataset emission and parsing.
//!
//! One record per line, fields separated by tabs, in this order:
//!
//! ```text
//! id  edges  start  target  distractor  gold_path  depth
//!     nat_prompt  nat_cot  nat_answer  nat_entities
//!     sym_prompt  sym_cot  sym_answer  sym_entities
//! ```
//!
//! `edges` is a comma list of `src>dst`; `gold_path` a comma list of node
//! ids; token lists are space-separated ids; `*_cot` joins per-step spans
//! with `/`; `*_entities` joins per-node token lists with `,`. Records
//! round-trip exactly through [`parse_record`].

use super::render::{render_natural, render_symbolic};
use super::vocab::SymbolicVocab;
use super::{generate_graph, GraphSpec, GraphTask, RenderedTask, TaskGenError};
use crate::rng::{derive_seed, rng_from_seed};
use rand::Rng;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Generation parameters. Depth weights follow the source distribution:
/// 3 to 6 hops, concentrated at 4 and 5.
#[derive(Debug, Clone)]
pub struct DatasetParams {
    pub seed: u64,
    pub node_count_min: usize,
    pub node_count_max: usize,
    /// Relative weight per depth 3, 4, 5, 6.
    pub depth_weights: [f64; 4],
    pub splits: SplitSizes,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            seed: 0,
            node_count_min: 11,
            node_count_max: 14,
            depth_weights: [0.15, 0.35, 0.35, 0.15],
            splits: SplitSizes {
                train: 16_000,
                val: 300,
                test: 500,
            },
        }
    }
}

impl DatasetParams {
    /// Restrict to a single depth range (inclusive), keeping the
    /// configured weights for depths inside it.
    pub fn with_depth_range(mut self, min: usize, max: usize) -> Self {
        for d in 3..=6usize {
            if d < min || d > max {
                self.depth_weights[d - 3] = 0.0;
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: u64,
    pub task: GraphTask,
    pub natural: RenderedTask,
    pub symbolic: RenderedTask,
}

fn sample_depth(rng: &mut impl Rng, weights: &[f64; 4]) -> usize {
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "all depth weights are zero");
    let mut dart = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        dart -= w;
        if dart < 0.0 {
            return i + 3;
        }
    }
    6
}

/// Generates record `index` of the stream. Pure function of
/// `(params.seed, index)`; instances parallelize with no shared state.
pub fn generate_record(params: &DatasetParams, index: u64) -> Result<DatasetRecord, TaskGenError> {
    let instance_seed = derive_seed(params.seed, index);
    let mut rng = rng_from_seed(derive_seed(instance_seed, 0));
    let depth = sample_depth(&mut rng, &params.depth_weights);
    let node_count = rng.random_range(params.node_count_min..=params.node_count_max);
    let task = generate_graph(derive_seed(instance_seed, 1), node_count, depth)?;
    let natural = render_natural(&task, derive_seed(instance_seed, 2))?;
    let vocab = SymbolicVocab::new();
    let symbolic = render_symbolic(&task, &vocab, derive_seed(instance_seed, 3))?;
    Ok(DatasetRecord {
        id: index,
        task,
        natural,
        symbolic,
    })
}

fn tokens_to_str(tokens: &[u32]) -> String {
    tokens
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn spans_to_str(spans: &[Vec<u32>]) -> String {
    spans
        .iter()
        .map(|s| tokens_to_str(s))
        .collect::<Vec<_>>()
        .join("/")
}

fn rendering_fields(r: &RenderedTask) -> [String; 4] {
    [
        tokens_to_str(&r.prompt_tokens),
        spans_to_str(&r.cot_steps),
        tokens_to_str(&r.answer_tokens),
        spans_to_str(&r.entity_tokens),
    ]
}

pub fn format_record(rec: &DatasetRecord) -> String {
    let edges = rec
        .task
        .graph
        .edges
        .iter()
        .map(|(s, d)| format!("{s}>{d}"))
        .collect::<Vec<_>>()
        .join(",");
    let gold = rec
        .task
        .gold_path
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let nat = rendering_fields(&rec.natural);
    let sym = rendering_fields(&rec.symbolic);
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        rec.id,
        edges,
        rec.task.start,
        rec.task.target,
        rec.task.distractor,
        gold,
        rec.task.depth,
        nat[0],
        nat[1],
        nat[2],
        nat[3],
        sym[0],
        sym[1],
        sym[2],
        sym[3],
    )
}

fn parse_tokens(s: &str) -> Result<Vec<u32>, TaskGenError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(' ')
        .map(|t| {
            t.parse::<u32>()
                .map_err(|e| TaskGenError::MalformedRecord(e.to_string()))
        })
        .collect()
}

fn parse_spans(s: &str) -> Result<Vec<Vec<u32>>, TaskGenError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split('/').map(parse_tokens).collect()
}

pub fn parse_record(line: &str) -> Result<DatasetRecord, TaskGenError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 15 {
        return Err(TaskGenError::MalformedRecord(format!(
            "expected 15 tab-separated fields, got {}",
            fields.len()
        )));
    }
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| TaskGenError::MalformedRecord(format!("{s:?}: {e}")))
    };
    let id = fields[0]
        .parse::<u64>()
        .map_err(|e| TaskGenError::MalformedRecord(e.to_string()))?;
    let mut edges = Vec::new();
    if !fields[1].is_empty() {
        for pair in fields[1].split(',') {
            let (s, d) = pair
                .split_once('>')
                .ok_or_else(|| TaskGenError::MalformedRecord(format!("bad edge {pair:?}")))?;
            edges.push((parse_usize(s)?, parse_usize(d)?));
        }
    }
    let start = parse_usize(fields[2])?;
    let target = parse_usize(fields[3])?;
    let distractor = parse_usize(fields[4])?;
    let gold_path: Vec<usize> = fields[5]
        .split(',')
        .map(parse_usize)
        .collect::<Result<_, _>>()?;
    let depth = parse_usize(fields[6])?;
    let node_count = edges
        .iter()
        .flat_map(|&(s, d)| [s, d])
        .chain([start, target, distractor])
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    let task = GraphTask {
        graph: GraphSpec { node_count, edges },
        start,
        target,
        distractor,
        gold_path,
        depth,
    };
    let natural = RenderedTask {
        prompt_tokens: parse_tokens(fields[7])?,
        cot_steps: parse_spans(fields[8])?,
        answer_tokens: parse_tokens(fields[9])?,
        entity_tokens: parse_spans(fields[10])?,
    };
    let symbolic = RenderedTask {
        prompt_tokens: parse_tokens(fields[11])?,
        cot_steps: parse_spans(fields[12])?,
        answer_tokens: parse_tokens(fields[13])?,
        entity_tokens: parse_spans(fields[14])?,
    };
    Ok(DatasetRecord {
        id,
        task,
        natural,
        symbolic,
    })
}

/// Writes `train.txt`, `val.txt`, and `test.txt` under `dir`. The three
/// splits are disjoint windows of one deterministic record stream.
pub fn emit_dataset(params: &DatasetParams, dir: &Path) -> Result<SplitSizes, TaskGenError> {
    std::fs::create_dir_all(dir)?;
    let sizes = params.splits;
    let ranges = [
        ("train.txt", 0u64, sizes.train as u64),
        (
            "val.txt",
            sizes.train as u64,
            (sizes.train + sizes.val) as u64,
        ),
        (
            "test.txt",
            (sizes.train + sizes.val) as u64,
            (sizes.train + sizes.val + sizes.test) as u64,
        ),
    ];
    for (name, lo, hi) in ranges {
        let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
        for index in lo..hi {
            let rec = generate_record(params, index)?;
            writeln!(file, "{}", format_record(&rec))?;
        }
        file.flush()?;
    }
    Ok(sizes)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, TaskGenError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    file.lines().map(|line| parse_record(&line?)).collect()
}

/// Display text of a record's natural rendering, reconstructing entity
/// names from the stored token map.
pub fn natural_text_of(record: &DatasetRecord) -> String {
    let vocab = super::render::NaturalVocab::new();
    let names: Vec<&str> = record
        .natural
        .entity_tokens
        .iter()
        .map(|toks| vocab_word(&vocab, toks[0]))
        .collect();
    let edge_order: Vec<usize> = (0..record.task.graph.edges.len()).collect();
    super::render::natural_text(&record.task, &names, &edge_order)
}

fn vocab_word(vocab: &super::render::NaturalVocab, id: u32) -> &'static str {
    // lexicon words live in a static table; map through it so the names
    // borrow for as long as the caller needs
    super::render::LEXICON
        .iter()
        .find(|w| vocab.id(w) == Some(id))
        .copied()
        .unwrap_or("?")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params() -> DatasetParams {
        DatasetParams {
            seed: 42,
            splits: SplitSizes {
                train: 12,
                val: 6,
                test: 4,
            },
            ..DatasetParams::default()
        }
    }

    #[test]
    fn split_files_have_requested_sizes() {
        let dir = std::env::temp_dir().join("latentlab_ds_sizes");
        let _ = std::fs::remove_dir_all(&dir);
        emit_dataset(&tiny_params(), &dir).unwrap();
        assert_eq!(read_dataset(&dir.join("train.txt")).unwrap().len(), 12);
        assert_eq!(read_dataset(&dir.join("val.txt")).unwrap().len(), 6);
        assert_eq!(read_dataset(&dir.join("test.txt")).unwrap().len(), 4);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn records_round_trip_through_parser() {
        let params = tiny_params();
        for index in 0..20u64 {
            let rec = generate_record(&params, index).unwrap();
            let line = format_record(&rec);
            let parsed = parse_record(&line).unwrap();
            assert_eq!(parsed.task, rec.task);
            assert_eq!(parsed.natural, rec.natural);
            assert_eq!(parsed.symbolic, rec.symbolic);
            assert_eq!(format_record(&parsed), line);
        }
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let dir1 = std::env::temp_dir().join("latentlab_ds_det1");
        let dir2 = std::env::temp_dir().join("latentlab_ds_det2");
        for d in [&dir1, &dir2] {
            let _ = std::fs::remove_dir_all(d);
            emit_dataset(&tiny_params(), d).unwrap();
        }
        for name in ["train.txt", "val.txt", "test.txt"] {
            let a = std::fs::read(dir1.join(name)).unwrap();
            let b = std::fs::read(dir2.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
        std::fs::remove_dir_all(&dir1).unwrap();
        std::fs::remove_dir_all(&dir2).unwrap();
    }

    #[test]
    fn depth_distribution_concentrates_where_configured() {
        let params = DatasetParams {
            seed: 7,
            ..DatasetParams::default()
        };
        let mut counts = [0usize; 4];
        for index in 0..400u64 {
            let rec = generate_record(&params, index).unwrap();
            counts[rec.task.depth - 3] += 1;
        }
        let mid = counts[1] + counts[2];
        let outer = counts[0] + counts[3];
        assert!(
            mid > outer,
            "expected 4-5 hop concentration, got {counts:?}"
        );
    }

    #[test]
    fn depth_range_filter_restricts_depths() {
        let params = DatasetParams {
            seed: 3,
            ..DatasetParams::default()
        }
        .with_depth_range(4, 5);
        for index in 0..60u64 {
            let rec = generate_record(&params, index).unwrap();
            assert!(rec.task.depth == 4 || rec.task.depth == 5);
        }
    }
}
