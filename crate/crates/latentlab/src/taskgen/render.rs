//! Natural-language and symbolic renderings of graph tasks.

use super::vocab::SymbolicVocab;
use super::{GraphTask, RenderedTask, TaskGenError};
use crate::rng::rng_from_seed;
use rand::seq::SliceRandom;

/// Nonsense-word lexicon for entity names. The first five match the
/// canonical worked example so small demos read familiarly.
pub const LEXICON: [&str; 64] = [
    "dax", "wug", "zug", "blicket", "gorple", "fep", "tup", "vimp", "lorp", "snib", "yalt", "quen",
    "mib", "trel", "plon", "krid", "vash", "nolt", "grebe", "shum", "darp", "welk", "zorp", "flim",
    "tasp", "brig", "clun", "smee", "prat", "glorb", "nuss", "twip", "harn", "jeck", "vult",
    "quop", "melf", "sorn", "blip", "drat", "kwil", "pemb", "ruzz", "stol", "glib", "chaz", "frin",
    "womp", "nerl", "taxo", "bilk", "erst", "muld", "vope", "zint", "crad", "helb", "jorm", "slif",
    "dwen", "purv", "okta", "yimb", "rulc",
];

/// Word-level vocabulary for the natural rendering: six special ids,
/// eight template words, then the lexicon.
#[derive(Debug, Clone)]
pub struct NaturalVocab {
    words: Vec<String>,
}

const NAT_SPECIALS: [&str; 6] = [
    "<pad>",
    "<bos>",
    "<eos>",
    "<|start-latent|>",
    "<|latent|>",
    "<|end-latent|>",
];
const NAT_TEMPLATE: [&str; 8] = ["every", "is", "a", "or", "rex", ".", "?", "###"];

impl Default for NaturalVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl NaturalVocab {
    pub fn new() -> Self {
        let mut words: Vec<String> = NAT_SPECIALS.iter().map(|s| s.to_string()).collect();
        words.extend(NAT_TEMPLATE.iter().map(|s| s.to_string()));
        words.extend(LEXICON.iter().map(|s| s.to_string()));
        Self { words }
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn pad(&self) -> u32 {
        0
    }
    pub fn bos(&self) -> u32 {
        1
    }
    pub fn eos(&self) -> u32 {
        2
    }
    pub fn start_latent(&self) -> u32 {
        3
    }
    pub fn latent(&self) -> u32 {
        4
    }
    pub fn end_latent(&self) -> u32 {
        5
    }
    pub fn answer_marker(&self) -> u32 {
        self.id("###").unwrap()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.words.iter().position(|w| w == word).map(|i| i as u32)
    }

    fn id_or_panic(&self, word: &str) -> u32 {
        self.id(word)
            .unwrap_or_else(|| panic!("word {word:?} not in natural vocabulary"))
    }
}

/// Renders with a seeded random assignment of lexicon names to nodes and
/// a seeded shuffle of the edge statements.
pub fn render_natural(task: &GraphTask, rng_seed: u64) -> Result<RenderedTask, TaskGenError> {
    let n = task.graph.node_count;
    if n > LEXICON.len() {
        return Err(TaskGenError::VocabOverflow {
            needed: n,
            available: LEXICON.len(),
        });
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut name_idx: Vec<usize> = (0..LEXICON.len()).collect();
    name_idx.shuffle(&mut rng);
    let names: Vec<&str> = (0..n).map(|i| LEXICON[name_idx[i]]).collect();

    let mut edge_order: Vec<usize> = (0..task.graph.edges.len()).collect();
    edge_order.shuffle(&mut rng);
    render_natural_named(task, &names, &edge_order)
}

/// Same rendering with caller-chosen names and statement order.
pub fn render_natural_named(
    task: &GraphTask,
    names: &[&str],
    edge_order: &[usize],
) -> Result<RenderedTask, TaskGenError> {
    let vocab = NaturalVocab::new();
    let (every, is, a, or, rex, dot, qmark) = (
        vocab.id_or_panic("every"),
        vocab.id_or_panic("is"),
        vocab.id_or_panic("a"),
        vocab.id_or_panic("or"),
        vocab.id_or_panic("rex"),
        vocab.id_or_panic("."),
        vocab.id_or_panic("?"),
    );
    let name_tok = |node: usize| -> u32 { vocab.id_or_panic(names[node]) };

    let mut prompt = vec![vocab.bos()];
    // "Every X is a Y." per edge, in the given order
    for &ei in edge_order {
        let (s, d) = task.graph.edges[ei];
        prompt.extend_from_slice(&[every, name_tok(s), is, a, name_tok(d), dot]);
    }
    // "Rex is a <start>."
    prompt.extend_from_slice(&[rex, is, a, name_tok(task.start), dot]);
    // "Is Rex a <target> or a <distractor>?"
    prompt.extend_from_slice(&[
        is,
        rex,
        a,
        name_tok(task.target),
        or,
        a,
        name_tok(task.distractor),
        qmark,
    ]);

    // CoT: "Rex is a <entity>." for every path node after the start.
    let cot_steps: Vec<Vec<u32>> = task.gold_path[1..]
        .iter()
        .map(|&node| vec![rex, is, a, name_tok(node), dot])
        .collect();

    let answer_tokens = vec![vocab.answer_marker(), name_tok(task.target), vocab.eos()];

    let entity_tokens: Vec<Vec<u32>> = (0..task.graph.node_count)
        .map(|i| vec![name_tok(i)])
        .collect();

    Ok(RenderedTask {
        prompt_tokens: prompt,
        cot_steps,
        answer_tokens,
        entity_tokens,
    })
}

/// Human-readable text of the natural rendering, for summaries and demos.
pub fn natural_text(task: &GraphTask, names: &[&str], edge_order: &[usize]) -> String {
    fn cap(w: &str) -> String {
        let mut c = w.chars();
        match c.next() {
            Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
            None => String::new(),
        }
    }
    let mut out = String::new();
    for &ei in edge_order {
        let (s, d) = task.graph.edges[ei];
        out.push_str(&format!("Every {} is a {}. ", names[s], names[d]));
    }
    out.push_str(&format!("Rex is a {}. ", names[task.start]));
    out.push_str(&format!(
        "Is Rex a {} or a {}? {}",
        names[task.target],
        names[task.distractor],
        cap(names[task.target])
    ));
    out
}

/// Symbolic rendering: `bos (src edge_sep dst)* query_marker start target
/// option_sep distractor`, one node-symbol token per entity.
pub fn render_symbolic(
    task: &GraphTask,
    vocab: &SymbolicVocab,
    rng_seed: u64,
) -> Result<RenderedTask, TaskGenError> {
    let n = task.graph.node_count;
    if n > vocab.node_symbol_count() {
        return Err(TaskGenError::VocabOverflow {
            needed: n,
            available: vocab.node_symbol_count(),
        });
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut symbol_idx: Vec<usize> = (0..vocab.node_symbol_count()).collect();
    symbol_idx.shuffle(&mut rng);
    let sym = |node: usize| -> u32 { vocab.node_symbol(symbol_idx[node]) };

    let mut edge_order: Vec<usize> = (0..task.graph.edges.len()).collect();
    edge_order.shuffle(&mut rng);

    let mut prompt = vec![vocab.bos()];
    for ei in edge_order {
        let (s, d) = task.graph.edges[ei];
        prompt.extend_from_slice(&[sym(s), vocab.edge_sep(), sym(d)]);
    }
    prompt.extend_from_slice(&[
        vocab.query_marker(),
        sym(task.start),
        sym(task.target),
        vocab.option_sep(),
        sym(task.distractor),
    ]);

    let cot_steps: Vec<Vec<u32>> = task.gold_path[1..]
        .iter()
        .map(|&node| vec![sym(node)])
        .collect();
    let answer_tokens = vec![sym(task.target), vocab.eos()];
    let entity_tokens: Vec<Vec<u32>> = (0..n).map(|i| vec![sym(i)]).collect();

    Ok(RenderedTask {
        prompt_tokens: prompt,
        cot_steps,
        answer_tokens,
        entity_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate_graph, GraphSpec};

    fn paper_instance() -> GraphTask {
        GraphTask {
            graph: GraphSpec {
                node_count: 5,
                edges: vec![(0, 1), (0, 2), (1, 3)],
            },
            start: 0,
            target: 3,
            distractor: 4,
            gold_path: vec![0, 1, 3],
            depth: 2,
        }
    }

    #[test]
    fn paper_worked_example_text() {
        let task = paper_instance();
        let names = ["dax", "wug", "zug", "blicket", "gorple"];
        let text = natural_text(&task, &names, &[0, 1, 2]);
        assert_eq!(
            text,
            "Every dax is a wug. Every dax is a zug. Every wug is a blicket. \
             Rex is a dax. Is Rex a blicket or a gorple? Blicket"
        );
    }

    #[test]
    fn paper_worked_example_tokens() {
        let task = paper_instance();
        let names = ["dax", "wug", "zug", "blicket", "gorple"];
        let rendered = render_natural_named(&task, &names, &[0, 1, 2]).unwrap();
        let vocab = NaturalVocab::new();
        // bos + 3 statements of 6 + membership of 5 + question of 8
        assert_eq!(rendered.prompt_tokens.len(), 1 + 18 + 5 + 8);
        assert_eq!(rendered.cot_steps.len(), 2);
        assert_eq!(rendered.answer_tokens[1], vocab.id("blicket").unwrap());
        assert_eq!(*rendered.answer_tokens.last().unwrap(), vocab.eos());
    }

    #[test]
    fn single_edge_statement_precedes_question() {
        // minimal rendering over a hand-built record
        let task = GraphTask {
            graph: GraphSpec {
                node_count: 3,
                edges: vec![(0, 1)],
            },
            start: 0,
            target: 1,
            distractor: 2,
            gold_path: vec![0, 1],
            depth: 1,
        };
        let names = ["dax", "wug", "zug"];
        let rendered = render_natural_named(&task, &names, &[0]).unwrap();
        let vocab = NaturalVocab::new();
        let every = vocab.id("every").unwrap();
        let qmark = vocab.id("?").unwrap();
        let every_pos = rendered
            .prompt_tokens
            .iter()
            .position(|&t| t == every)
            .unwrap();
        let q_pos = rendered
            .prompt_tokens
            .iter()
            .position(|&t| t == qmark)
            .unwrap();
        assert!(every_pos < q_pos);
    }

    #[test]
    fn question_entities_appear_in_statements() {
        for seed in 0..40u64 {
            let task = generate_graph(seed, 12, 4).unwrap();
            let rendered = render_natural(&task, seed ^ 0xabcd).unwrap();
            let vocab = NaturalVocab::new();
            let qmark = vocab.id("?").unwrap();
            let rex = vocab.id("rex").unwrap();
            let q_start = rendered
                .prompt_tokens
                .iter()
                .rposition(|&t| t == rex)
                .unwrap();
            let statements = &rendered.prompt_tokens[..q_start];
            for &tok in &rendered.prompt_tokens[q_start..] {
                if tok == qmark || tok == rex {
                    continue;
                }
                let word = vocab.word(tok);
                if LEXICON.contains(&word) {
                    assert!(
                        statements.contains(&tok),
                        "entity {word} in question missing from statements (seed {seed})"
                    );
                }
            }
        }
    }

    #[test]
    fn symbolic_prompt_length_follows_layout_rule() {
        let task = GraphTask {
            graph: GraphSpec {
                node_count: 3,
                edges: vec![(0, 1)],
            },
            start: 0,
            target: 1,
            distractor: 2,
            gold_path: vec![0, 1],
            depth: 1,
        };
        let vocab = SymbolicVocab::new();
        let rendered = render_symbolic(&task, &vocab, 0).unwrap();
        // bos + one (src, sep, dst) triple + query block of 5
        assert_eq!(rendered.prompt_tokens.len(), 1 + 3 + 5);
    }

    #[test]
    fn symbolic_rendering_is_deterministic() {
        let task = generate_graph(5, 10, 3).unwrap();
        let vocab = SymbolicVocab::new();
        let a = render_symbolic(&task, &vocab, 123).unwrap();
        let b = render_symbolic(&task, &vocab, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reseeding_injection_changes_ids_not_lengths() {
        let task = generate_graph(5, 10, 3).unwrap();
        let vocab = SymbolicVocab::new();
        let a = render_symbolic(&task, &vocab, 1).unwrap();
        let b = render_symbolic(&task, &vocab, 2).unwrap();
        assert_eq!(a.prompt_tokens.len(), b.prompt_tokens.len());
        assert_eq!(a.cot_steps.len(), b.cot_steps.len());
        assert_ne!(a.entity_tokens, b.entity_tokens);
    }

    #[test]
    fn symbolic_entity_map_is_injective_node_symbols() {
        let task = generate_graph(9, 14, 5).unwrap();
        let vocab = SymbolicVocab::new();
        let rendered = render_symbolic(&task, &vocab, 77).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for toks in &rendered.entity_tokens {
            assert_eq!(toks.len(), 1);
            assert!(vocab.is_node_symbol(toks[0]));
            assert!(seen.insert(toks[0]), "entity token reused");
        }
    }

    #[test]
    fn vocabulary_overflow_is_reported() {
        let mut task = generate_graph(5, 10, 3).unwrap();
        task.graph.node_count = 30;
        let vocab = SymbolicVocab::new();
        assert!(matches!(
            render_symbolic(&task, &vocab, 0),
            Err(TaskGenError::VocabOverflow { .. })
        ));
    }
}
