//! The 40-token symbolic vocabulary.

/// Role of a token id in the symbolic vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenRole {
    NodeSymbol,
    EdgeSep,
    QueryMarker,
    AnswerMarker,
    OptionSep,
    Pad,
    Bos,
    Eos,
    StartLatent,
    Latent,
    EndLatent,
}

/// Fixed 40-token layout: 11 structural ids followed by 29 node symbols.
///
/// Ids 0..=10 are structural (id 10 is a second pad-role id reserved so
/// the node-symbol count stays at exactly 29); ids 11..=39 are the node
/// symbols entities map onto.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicVocab {
    roles: Vec<TokenRole>,
}

pub const SYMBOLIC_VOCAB_SIZE: usize = 40;
pub const NODE_SYMBOL_COUNT: usize = 29;
const NODE_SYMBOL_BASE: u32 = 11;

impl Default for SymbolicVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolicVocab {
    pub fn new() -> Self {
        use TokenRole::*;
        let mut roles = vec![
            Pad,
            Bos,
            Eos,
            EdgeSep,
            QueryMarker,
            AnswerMarker,
            OptionSep,
            StartLatent,
            Latent,
            EndLatent,
            Pad, // reserved
        ];
        roles.extend(std::iter::repeat_n(NodeSymbol, NODE_SYMBOL_COUNT));
        debug_assert_eq!(roles.len(), SYMBOLIC_VOCAB_SIZE);
        Self { roles }
    }

    pub fn size(&self) -> usize {
        self.roles.len()
    }

    pub fn role(&self, id: u32) -> TokenRole {
        self.roles[id as usize]
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
    pub fn edge_sep(&self) -> u32 {
        3
    }
    pub fn query_marker(&self) -> u32 {
        4
    }
    pub fn answer_marker(&self) -> u32 {
        5
    }
    pub fn option_sep(&self) -> u32 {
        6
    }
    pub fn start_latent(&self) -> u32 {
        7
    }
    pub fn latent(&self) -> u32 {
        8
    }
    pub fn end_latent(&self) -> u32 {
        9
    }

    /// The `index`-th node symbol id.
    pub fn node_symbol(&self, index: usize) -> u32 {
        assert!(
            index < NODE_SYMBOL_COUNT,
            "node symbol index {index} out of range"
        );
        NODE_SYMBOL_BASE + index as u32
    }

    pub fn node_symbol_count(&self) -> usize {
        NODE_SYMBOL_COUNT
    }

    /// All node-symbol ids in order.
    pub fn node_symbols(&self) -> Vec<u32> {
        (0..NODE_SYMBOL_COUNT)
            .map(|i| self.node_symbol(i))
            .collect()
    }

    pub fn is_node_symbol(&self, id: u32) -> bool {
        self.role(id) == TokenRole::NodeSymbol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forty_tokens_with_29_node_symbols() {
        let v = SymbolicVocab::new();
        assert_eq!(v.size(), 40);
        let node_count = (0..40).filter(|&i| v.is_node_symbol(i)).count();
        assert_eq!(node_count, 29);
    }

    #[test]
    fn structural_ids_are_distinct() {
        let v = SymbolicVocab::new();
        let ids = [
            v.pad(),
            v.bos(),
            v.eos(),
            v.edge_sep(),
            v.query_marker(),
            v.answer_marker(),
            v.option_sep(),
            v.start_latent(),
            v.latent(),
            v.end_latent(),
        ];
        let set: std::collections::BTreeSet<u32> = ids.iter().copied().collect();
        assert_eq!(set.len(), ids.len());
        for id in ids {
            assert_ne!(v.role(id), TokenRole::NodeSymbol);
        }
    }
}
