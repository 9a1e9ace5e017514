use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token/id bijection. Ids `0..4` are reserved for PAD, UNK, BOS and EOS.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from sentences, keeping at most `max_words`
    /// non-reserved tokens ordered by descending frequency, ties broken
    /// lexicographically.
    pub fn build<'a, I>(sentences: I, max_words: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for s in sentences {
            for t in tokenize(s) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, _)| !RESERVED.contains(&w.as_str()))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(max) = max_words {
            words.truncate(max);
        }
        Self::from_words(words.into_iter().map(|(w, _)| w))
    }

    /// Reserved tokens followed by `words` in the given order (duplicates
    /// and reserved strings are skipped).
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut token_to_id: HashMap<String, usize> = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        for w in words {
            if !token_to_id.contains_key(&w) {
                token_to_id.insert(w.clone(), id_to_token.len());
                id_to_token.push(w);
            }
        }
        Self {
            id_to_token,
            token_to_id,
        }
    }

    /// Rebuilds the reverse index after deserialization.
    /// Rebuilds a vocabulary from its full id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(t, r)| t != r) {
            return Err(Error::Format("token list does not start with the reserved tokens".into()));
        }
        let mut v = Self {
            id_to_token: tokens,
            token_to_id: HashMap::new(),
        };
        v.reindex();
        if v.token_to_id.len() != v.id_to_token.len() {
            return Err(Error::Format("token list contains duplicates".into()));
        }
        Ok(v)
    }

    pub fn reindex(&mut self) {
        self.token_to_id = self
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.id_to_token
            .get(id)
            .map(String::as_str)
            .unwrap_or(RESERVED[UNK])
    }

    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        tokenize(sentence).iter().map(|t| self.id(t)).collect()
    }

    /// Joins tokens with single spaces, dropping PAD, BOS and EOS.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != PAD && i != BOS && i != EOS)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// An encoded (context, response) example. Both sequences end with EOS and
/// are at most `max_len` long.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialoguePair {
    pub context: Vec<usize>,
    pub response: Vec<usize>,
    pub pair_id: usize,
}

impl DialoguePair {
    pub fn encode(vocab: &Vocab, context: &str, response: &str, max_len: usize, pair_id: usize) -> Self {
        Self {
            context: terminate(vocab.encode(context), max_len),
            response: terminate(vocab.encode(response), max_len),
            pair_id,
        }
    }

    /// Response tokens without the trailing EOS.
    pub fn response_words(&self) -> &[usize] {
        strip_eos(&self.response)
    }

    pub fn context_words(&self) -> &[usize] {
        strip_eos(&self.context)
    }
}

/// Truncates to `max_len - 1` tokens, drops PAD, and appends EOS.
pub fn terminate(mut ids: Vec<usize>, max_len: usize) -> Vec<usize> {
    ids.retain(|&i| i != PAD && i != EOS);
    ids.truncate(max_len.max(1) - 1);
    ids.push(EOS);
    ids
}

pub fn strip_eos(ids: &[usize]) -> &[usize] {
    match ids.split_last() {
        Some((&EOS, rest)) => rest,
        _ => ids,
    }
}
