use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::seed;
use crate::spotting::Stemmer;
use crate::targets::Vocabulary;

/// Draws `n` distinct keywords uniformly from the vocabulary words that occur
/// (after stemming) in at least `min_occurrences` of the `references`.
/// Returned in vocabulary order.
pub fn select_keywords<S: AsRef<str>>(
    vocab: &Vocabulary,
    references: &[Vec<S>],
    n: usize,
    min_occurrences: usize,
    stemmer: &Stemmer,
    seed: u64,
) -> Result<Vec<String>> {
    let stemmed: Vec<std::collections::BTreeSet<String>> = references
        .iter()
        .map(|r| r.iter().map(|t| stemmer.stem(t.as_ref())).collect())
        .collect();
    let eligible: Vec<&String> = vocab
        .words()
        .iter()
        .filter(|w| {
            let s = stemmer.stem(w);
            stemmed.iter().filter(|r| r.contains(&s)).count() >= min_occurrences
        })
        .collect();
    if eligible.len() < n {
        return Err(Error::Validation(format!(
            "only {} vocabulary words occur at least {min_occurrences} times; cannot pick {n} keywords",
            eligible.len()
        )));
    }
    let mut picked = sample(&mut seed::rng(seed), eligible.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| eligible[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new((0..n).map(|i| format!("w{i:02}")).collect(), BTreeSet::new()).unwrap()
    }

    fn refs(v: &Vocabulary, n_utt: usize) -> Vec<Vec<String>> {
        (0..n_utt)
            .map(|u| vec![v.words()[u % v.len()].clone(), v.words()[(u * 7) % v.len()].clone()])
            .collect()
    }

    #[test]
    fn exhaustive_request_returns_all_eligible() {
        let v = vocab(5);
        let r = vec![vec!["w01", "w03"], vec!["w03", "zz"]];
        let k = select_keywords(&v, &r, 2, 1, &Stemmer::Identity, 3).unwrap();
        assert_eq!(k, ["w01", "w03"]);
    }

    #[test]
    fn thirty_nine_keywords_from_a_large_vocabulary() {
        let v = vocab(60);
        let r = refs(&v, 1000);
        let k = select_keywords(&v, &r, 39, 1, &Stemmer::Identity, 1).unwrap();
        assert_eq!(k.len(), 39);
        assert_eq!(k.iter().collect::<BTreeSet<_>>().len(), 39);
        assert!(k.iter().all(|w| v.contains(w)));
        assert_eq!(k, select_keywords(&v, &r, 39, 1, &Stemmer::Identity, 1).unwrap());
        assert_ne!(k, select_keywords(&v, &r, 39, 1, &Stemmer::Identity, 2).unwrap());
    }

    #[test]
    fn infeasible_frequency_threshold_errors_with_count() {
        let v = vocab(60);
        let r = refs(&v, 1000);
        let err = select_keywords(&v, &r, 10, 1000, &Stemmer::Identity, 1).unwrap_err();
        assert!(err.to_string().contains("only 0"), "{err}");
    }
}
