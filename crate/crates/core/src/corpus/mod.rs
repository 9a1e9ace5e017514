//! Dialogue data: single-turn extraction, filtering, vocabulary, pretrained
//! embedding loading and a synthetic corpus generator.

mod embeddings;
mod extract;
mod synthetic;
mod vocab;

pub use embeddings::{load_embeddings, parse_embedding_text, write_embeddings, EmbeddingMatrix};
pub use extract::{
    count_one_to_many, extract_single_turn, filter_by_token_list, read_corpus_file,
    read_pair_file, write_pair_file, CorpusStats, FilterMode, FilterOutcome, TextPair,
};
pub use synthetic::{generate_synthetic_corpus, Branching, PairLabel, SyntheticConfig, SyntheticCorpus};
pub use vocab::{strip_eos, terminate, DialoguePair, Vocab, BOS, EOS, PAD, RESERVED, UNK};

/// Lowercases and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases() {
        assert_eq!(tokenize("  Hello  World\tok "), vec!["hello", "world", "ok"]);
        assert!(tokenize("   ").is_empty());
    }
}
