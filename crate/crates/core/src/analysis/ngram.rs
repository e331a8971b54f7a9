use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::LazyLock;

use serde::Serialize;

use crate::scorer::PermissionRiskEntry;

/// NLTK English list with "all" kept, since ".All" marks tenant-wide scope.
pub const STOPWORD_LIST_VERSION: &str = "nltk-english-198 (stop-words 0.10), minus \"all\"";

static STOPWORDS: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    stop_words::get("en")
        .iter()
        .copied()
        .filter(|w| *w != "all")
        .collect()
});

/// Lowercase words with punctuation treated as a separator and stop-words
/// dropped. No stemming; numerals are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(str::to_string)
        .collect()
}

pub fn ngram_set(text: &str, n: usize) -> BTreeSet<Vec<String>> {
    let n = n.max(1);
    tokenize(text).windows(n).map(<[String]>::to_vec).collect()
}

fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Jaccard similarity of the word n-gram sets; 0 when both are empty.
pub fn ngram_similarity(a: &str, b: &str, n: usize) -> f64 {
    jaccard(&ngram_set(a, n), &ngram_set(b, n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub models: Vec<String>,
    /// Reasoning texts per model.
    pub coverage: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

/// Model-vs-model similarity. Each model's n-gram set is the union over its
/// reasoning texts, so n-grams never straddle two permissions.
pub fn model_similarity_matrix(entries: &[PermissionRiskEntry], n: usize) -> SimilarityMatrix {
    let mut per_model: BTreeMap<&str, (usize, BTreeSet<Vec<String>>)> = BTreeMap::new();
    for e in entries {
        let slot = per_model.entry(e.model_name.as_str()).or_default();
        if let Some(text) = e.reasoning.as_deref() {
            slot.0 += 1;
            slot.1.extend(ngram_set(text, n));
        }
    }
    let sets: Vec<_> = per_model.values().collect();
    SimilarityMatrix {
        n,
        models: per_model.keys().map(|m| m.to_string()).collect(),
        coverage: sets.iter().map(|(c, _)| *c).collect(),
        values: sets
            .iter()
            .map(|(_, a)| sets.iter().map(|(_, b)| jaccard(a, b)).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_enumerated_bigrams() {
        let a = "allows read access to all mail";
        let b = "allows read access to all files";
        assert_eq!(ngram_set(a, 2).len(), 4);
        assert!((ngram_similarity(a, b, 2) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(ngram_similarity("Reads user mailboxes.", "reads USER mailboxes", 2), 1.0);
        assert_eq!(ngram_similarity("reads mail items", "writes calendar events", 2), 0.0);
        assert_eq!(ngram_similarity("the", "a", 2), 0.0);
    }

    #[test]
    fn tokenizer_strips_punctuation_and_stopwords() {
        assert_eq!(tokenize("The user's mail, 2 items!"), vec!["user", "mail", "2", "items"]);
        assert_eq!(STOPWORDS.len(), 197);
    }

    #[test]
    fn matrix_over_models() {
        let mk = |model: &str, text: &str| PermissionRiskEntry {
            permission_name: "P".into(),
            risk_score: 3,
            model_name: model.into(),
            reasoning: Some(text.into()),
            created_at: None,
            prompt_version: None,
            raw_output: None,
        };
        let m = model_similarity_matrix(
            &[mk("b", "reads every mailbox"), mk("a", "reads every mailbox"), mk("c", "sends chat")],
            2,
        );
        assert_eq!(m.models, vec!["a", "b", "c"]);
        assert_eq!(m.values[0][1], 1.0);
        assert_eq!(m.values[0][2], 0.0);
        assert_eq!(m.coverage, vec![1, 1, 1]);
    }

    proptest! {
        #[test]
        fn symmetric_reflexive_bounded(
            a in "[a-z ,.]{0,60}",
            b in "[a-z ,.]{0,60}",
            n in 2usize..=3,
        ) {
            let ab = ngram_similarity(&a, &b, n);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, ngram_similarity(&b, &a, n));
            if !ngram_set(&a, n).is_empty() {
                prop_assert_eq!(ngram_similarity(&a, &a, n), 1.0);
            }
        }
    }
}
