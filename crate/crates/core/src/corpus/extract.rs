use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, RESERVED, UNK};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TextPair {
    pub context: String,
    pub response: String,
}

impl TextPair {
    pub fn new(context: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            context: context.into(),
            response: response.into(),
        }
    }
}

/// One-to-many census of a pair list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pairs: usize,
    pub contexts: usize,
    pub multi_response_contexts: usize,
    pub max_responses: usize,
}

/// `[(u1,u2), (u2,u3), ..., (u_{T-1},u_T)]`. Dialogues shorter than two
/// utterances yield nothing.
pub fn extract_single_turn<S: AsRef<str>>(dialogue: &[S]) -> Vec<TextPair> {
    if dialogue.len() < 2 {
        log::debug!("skipping dialogue with {} utterance(s)", dialogue.len());
        return Vec::new();
    }
    dialogue
        .windows(2)
        .map(|w| TextPair::new(w[0].as_ref(), w[1].as_ref()))
        .collect()
}

/// What to do with a pair containing a token outside the allowed list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterMode {
    #[default]
    DropPair,
    ReplaceWithUnk,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterOutcome {
    pub pairs: Vec<TextPair>,
    /// Dropped pairs, or pairs that had a token replaced.
    pub dropped: usize,
}

pub fn filter_by_token_list(
    pairs: Vec<TextPair>,
    allowed: &HashSet<String>,
    mode: FilterMode,
) -> Result<FilterOutcome> {
    if allowed.is_empty() {
        return Err(Error::Config("allowed token list is empty".into()));
    }
    let ok = |s: &str| tokenize(s).iter().all(|t| allowed.contains(t));
    let mut out = Vec::with_capacity(pairs.len());
    let mut dropped = 0;
    for p in pairs {
        if ok(&p.context) && ok(&p.response) {
            out.push(p);
            continue;
        }
        dropped += 1;
        if mode == FilterMode::ReplaceWithUnk {
            let fix = |s: &str| {
                tokenize(s)
                    .into_iter()
                    .map(|t| if allowed.contains(&t) { t } else { RESERVED[UNK].to_string() })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            out.push(TextPair::new(fix(&p.context), fix(&p.response)));
        }
    }
    Ok(FilterOutcome {
        pairs: out,
        dropped,
    })
}

/// Groups pairs by exact context string and counts distinct responses.
pub fn count_one_to_many(pairs: &[TextPair]) -> CorpusStats {
    let mut by_context: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for p in pairs {
        by_context.entry(&p.context).or_default().insert(&p.response);
    }
    CorpusStats {
        pairs: pairs.len(),
        contexts: by_context.len(),
        multi_response_contexts: by_context.values().filter(|r| r.len() >= 2).count(),
        max_responses: by_context.values().map(BTreeSet::len).max().unwrap_or(0),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One dialogue per line, utterances separated by TAB.
pub fn read_corpus_file(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_text(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect())
}

/// One `context<TAB>response` pair per line.
pub fn read_pair_file(path: &Path) -> Result<Vec<TextPair>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(r), None) => out.push(TextPair::new(c, r)),
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: "expected exactly one TAB separating context and response".into(),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_pair_file(path: &Path, pairs: &[TextPair]) -> Result<()> {
    let mut buf = Vec::new();
    for p in pairs {
        writeln!(buf, "{}\t{}", p.context, p.response).expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
