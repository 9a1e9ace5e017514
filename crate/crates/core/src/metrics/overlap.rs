use std::collections::{HashMap, HashSet};
use std::hash::Hash;

/// Unique n-grams across all responses divided by the total n-gram count;
/// zero when no response has `n` tokens.
pub fn distinct_n<T: Hash + Eq, S: AsRef<[T]>>(responses: &[S], n: usize) -> f64 {
    assert!(n >= 1, "distinct-n needs n >= 1");
    let mut unique: HashSet<&[T]> = HashSet::new();
    let mut total = 0usize;
    for r in responses {
        for g in r.as_ref().windows(n) {
            unique.insert(g);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        unique.len() as f64 / total as f64
    }
}

fn ngram_counts<T: Hash + Eq>(tokens: &[T], k: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(k) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Sentence BLEU over orders `1..=n`: geometric mean of clipped precisions
/// times the brevity penalty. Unigram precision is unsmoothed; a
/// higher-order precision with no matches becomes `1 / (count + 1)`.
pub fn bleu_n<T: Hash + Eq>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    assert!(n >= 1, "BLEU needs n >= 1");
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let cand = ngram_counts(candidate, k);
        let refc = ngram_counts(reference, k);
        let total: usize = cand.values().sum();
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if k == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * (log_sum / n as f64).exp()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn distinct_examples() {
        assert_eq!(distinct_n(&[toks("a a b")], 1), 2.0 / 3.0);
        let one = distinct_n(&[toks("a b c")], 2);
        let two = distinct_n(&[toks("a b c"), toks("a b c")], 2);
        let three = distinct_n(&[toks("a b c"), toks("a b c"), toks("a b c")], 2);
        assert_eq!(one, 1.0);
        assert_eq!(two, 2.0 / 4.0);
        assert!(three < two);
        assert_eq!(distinct_n(&[toks("a")], 2), 0.0);
        assert_eq!(distinct_n::<&str, Vec<&str>>(&[], 1), 0.0);
    }

    #[test]
    fn bleu_examples() {
        let r = toks("the cat sat down");
        assert_eq!(bleu_n(&r, &r, 1), 1.0);
        assert!((bleu_n(&r, &r, 3) - 1.0).abs() < 1e-15);
        assert_eq!(bleu_n(&toks("x y z"), &toks("a b c"), 1), 0.0);
        assert!((bleu_n(&toks("a b c"), &toks("a b d"), 1) - 2.0 / 3.0).abs() < 1e-15);
        // p1 = 2/3, p2 = 1/2 (ab matched of ab, bc)
        let v = bleu_n(&toks("a b c"), &toks("a b d"), 2);
        assert!((v - (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-15);
        // unmatched bigrams smoothed to 1/(2+1)
        let v = bleu_n(&toks("a c b"), &toks("a b c"), 2);
        assert!((v - (1.0f64 * (1.0 / 3.0)).sqrt()).abs() < 1e-15);
        // brevity penalty
        let v = bleu_n(&toks("a b"), &toks("a b c d"), 1);
        assert!((v - (1.0f64 - 2.0).exp()).abs() < 1e-15);
        assert_eq!(bleu_n::<&str>(&[], &toks("a"), 1), 0.0);
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(
            cand in prop::collection::vec(0u8..5, 0..12),
            reference in prop::collection::vec(0u8..5, 1..12),
            n in 1usize..4,
        ) {
            let b = bleu_n(&cand, &reference, n);
            prop_assert!((0.0..=1.0).contains(&b));
            let d = distinct_n(&[cand.clone(), reference.clone()], n);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn self_bleu_is_one(sentence in prop::collection::vec(0u8..5, 3..12), n in 1usize..4) {
            prop_assert!((bleu_n(&sentence, &sentence, n) - 1.0).abs() < 1e-12);
        }
    }
}
