//! Seeded rule-based text transforms.
//!
//! Every transform is a pure function of `(text, magnitude, stream)`; the
//! caller derives the stream from `(global seed, pid, datapoint id)` per
//! the contract in [`crate::rng`]. Character-level operations work on
//! extended grapheme clusters; "alphanumeric" means a cluster containing a
//! Unicode letter or digit.
//!
//! Typo injection draws each event uniformly from four classes: adjacent-key
//! substitution on the QWERTY map below, adjacent transposition, duplication,
//! and single-letter deletion. Only letters are targeted and the sequence of
//! non-letter characters is left byte-identical. A letter outside the map
//! (for substitution), at no swappable neighbor (for transposition), or
//! tied with an identical neighbor falls back to duplication so every event
//! changes the text.
//!
//! QWERTY adjacency (lowercase; uppercase letters map through their
//! lowercase form and the replacement recases):
//!
//! ```text
//! q:wa       w:qesa     e:wrds     r:etfd     t:rygf     y:tuhg
//! u:yijh     i:uokj     o:iplk     p:ol
//! a:qwsz     s:wedxza   d:erfcxs   f:rtgvcd   g:tyhbvf   h:yujnbg
//! j:uikmnh   k:iolmj    l:opk
//! z:asx      x:sdcz     c:dfvx     v:fgbc     b:ghnv     n:hjmb     m:jkn
//! ```

use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::{is_alnum_cluster, split_sentences, tokenize_words, Corpus, Datapoint};
use crate::rng::Stream;

use super::plan::Magnitude;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("needs {needed} {unit} but only {available} available")]
    InsufficientMaterial {
        needed: usize,
        available: usize,
        unit: &'static str,
    },
    #[error("perturbation inapplicable: {0}")]
    Inapplicable(&'static str),
    #[error("datapoint missing field `{0}`")]
    MissingField(&'static str),
}

const QWERTY_ROWS: [&str; 3] = ["qwertyuiop", "asdfghjkl", "zxcvbnm"];

/// Lowercase QWERTY neighbors: the adjacent keys in the same row plus the
/// staggered keys directly above and below.
pub fn qwerty_neighbors(c: char) -> Vec<char> {
    let lower = c.to_ascii_lowercase();
    for (row_idx, row) in QWERTY_ROWS.iter().enumerate() {
        if let Some(pos) = row.find(lower) {
            let mut out = Vec::new();
            let row_bytes = row.as_bytes();
            if pos > 0 {
                out.push(row_bytes[pos - 1] as char);
            }
            if pos + 1 < row.len() {
                out.push(row_bytes[pos + 1] as char);
            }
            // staggered rows: key i sits between keys i and i+1 of the row
            // above, and above keys i-1 and i of the row below
            if row_idx > 0 {
                let above = QWERTY_ROWS[row_idx - 1].as_bytes();
                for j in [pos, pos + 1] {
                    if j < above.len() {
                        out.push(above[j] as char);
                    }
                }
            }
            if row_idx + 1 < QWERTY_ROWS.len() {
                let below = QWERTY_ROWS[row_idx + 1].as_bytes();
                for j in [pos.wrapping_sub(1), pos] {
                    if j < below.len() {
                        out.push(below[j] as char);
                    }
                }
            }
            return out;
        }
    }
    Vec::new()
}

/// Removes exactly `k` alphanumeric grapheme clusters at distinct,
/// uniformly chosen positions; everything else is preserved in order.
pub fn delete_random_chars(text: &str, k: usize, rng: &mut Stream) -> Result<String, RuleError> {
    if k == 0 {
        return Ok(text.to_string());
    }
    let clusters: Vec<&str> = text.graphemes(true).collect();
    let alnum: Vec<usize> = clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| is_alnum_cluster(c))
        .map(|(i, _)| i)
        .collect();
    if alnum.len() < k {
        return Err(RuleError::InsufficientMaterial {
            needed: k,
            available: alnum.len(),
            unit: "alphanumeric characters",
        });
    }
    let chosen = rng.choose_indices(alnum.len(), k);
    let drop: std::collections::BTreeSet<usize> = chosen.into_iter().map(|i| alnum[i]).collect();
    Ok(clusters
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, c)| *c)
        .collect())
}

/// Applies `k` typo events at distinct letter positions.
pub fn inject_typos(text: &str, k: usize, rng: &mut Stream) -> Result<String, RuleError> {
    if k == 0 {
        return Ok(text.to_string());
    }
    let mut chars: Vec<char> = text.chars().collect();
    let eligible: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_alphabetic())
        .map(|(i, _)| i)
        .collect();
    if eligible.len() < k {
        return Err(RuleError::InsufficientMaterial {
            needed: k,
            available: eligible.len(),
            unit: "letters",
        });
    }
    let mut positions: Vec<usize> = rng
        .choose_indices(eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    // apply right to left so earlier positions stay valid across
    // insertions and deletions
    positions.sort_unstable_by(|a, b| b.cmp(a));

    for pos in positions {
        match rng.below(4) {
            0 => substitute(&mut chars, pos, rng),
            1 => transpose(&mut chars, pos),
            2 => duplicate(&mut chars, pos),
            _ => {
                chars.remove(pos);
            }
        }
    }
    Ok(chars.into_iter().collect())
}

fn substitute(chars: &mut Vec<char>, pos: usize, rng: &mut Stream) {
    let original = chars[pos];
    let neighbors = qwerty_neighbors(original);
    if neighbors.is_empty() {
        duplicate(chars, pos);
        return;
    }
    let pick = neighbors[rng.below(neighbors.len() as u64) as usize];
    chars[pos] = if original.is_uppercase() {
        pick.to_ascii_uppercase()
    } else {
        pick
    };
}

fn transpose(chars: &mut Vec<char>, pos: usize) {
    let swappable = |i: usize| chars[i].is_alphabetic() && chars[i] != chars[pos];
    if pos + 1 < chars.len() && swappable(pos + 1) {
        chars.swap(pos, pos + 1);
    } else if pos > 0 && swappable(pos - 1) {
        chars.swap(pos - 1, pos);
    } else {
        duplicate(chars, pos);
    }
}

fn duplicate(chars: &mut Vec<char>, pos: usize) {
    let c = chars[pos];
    chars.insert(pos + 1, c);
}

/// Removes a uniformly chosen contiguous run of `k` words; the remainder
/// is rejoined with single spaces.
pub fn delete_word_span(text: &str, k: usize, rng: &mut Stream) -> Result<String, RuleError> {
    if k == 0 {
        return Ok(text.to_string());
    }
    let words = tokenize_words(text);
    if words.len() <= k {
        return Err(RuleError::InsufficientMaterial {
            needed: k + 1,
            available: words.len(),
            unit: "words",
        });
    }
    let start = rng.below((words.len() - k + 1) as u64) as usize;
    let mut kept: Vec<&str> = Vec::with_capacity(words.len() - k);
    kept.extend_from_slice(&words[..start]);
    kept.extend_from_slice(&words[start + k..]);
    Ok(kept.join(" "))
}

/// Reorders sentences. `Count(2)` swaps a uniformly chosen distinct pair;
/// `All` resamples a uniform permutation until it differs from the
/// identity; other counts permute that many chosen sentences among their
/// positions. The sentence multiset is always preserved.
pub fn shuffle_sentences(
    text: &str,
    magnitude: Magnitude,
    rng: &mut Stream,
) -> Result<String, RuleError> {
    let mut sentences = split_sentences(text);
    let m = sentences.len();
    if m < 2 {
        return Err(RuleError::Inapplicable("fewer than two sentences"));
    }
    match magnitude {
        Magnitude::Count(2) => {
            let (i, j) = rng.choose_pair(m);
            sentences.swap(i, j);
        }
        Magnitude::All => {
            let identity: Vec<usize> = (0..m).collect();
            let mut perm = identity.clone();
            loop {
                rng.shuffle(&mut perm);
                if perm != identity {
                    break;
                }
            }
            sentences = perm.into_iter().map(|i| sentences[i].clone()).collect();
        }
        Magnitude::Count(k) => {
            let k = (k as usize).min(m);
            if k < 2 {
                return Err(RuleError::Inapplicable("shuffle needs k >= 2"));
            }
            let picked = rng.choose_indices(m, k);
            let identity: Vec<usize> = (0..k).collect();
            let mut perm = identity.clone();
            loop {
                rng.shuffle(&mut perm);
                if perm != identity {
                    break;
                }
            }
            let originals: Vec<String> = picked.iter().map(|&i| sentences[i].clone()).collect();
            for (slot, &src) in picked.iter().zip(&perm) {
                sentences[*slot] = originals[src].clone();
            }
        }
    }
    Ok(sentences.join(" "))
}

/// Reference text of a uniformly chosen other datapoint.
pub fn substitute_reference_random(
    dp_index: usize,
    corpus: &Corpus,
    rng: &mut Stream,
) -> Result<String, RuleError> {
    let len = corpus.len();
    if len < 2 {
        return Err(RuleError::Inapplicable("corpus has a single datapoint"));
    }
    let mut donor = rng.below((len - 1) as u64) as usize;
    if donor >= dp_index {
        donor += 1;
    }
    Ok(corpus.datapoints[donor].reference.clone())
}

/// The datapoint's recorded wrong ending, verbatim.
pub fn substitute_ending_wrong(dp: &Datapoint) -> Result<String, RuleError> {
    dp.wrong_ending
        .clone()
        .ok_or(RuleError::MissingField("wrong_ending"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn stream(tag: &str) -> Stream {
        Stream::derive(0, "rules-test", tag)
    }

    fn alnum_count(text: &str) -> usize {
        text.graphemes(true).filter(|c| is_alnum_cluster(c)).count()
    }

    #[test]
    fn delete_zero_is_identity() {
        assert_eq!(
            delete_random_chars("abc", 0, &mut stream("a")).unwrap(),
            "abc"
        );
    }

    #[test]
    fn delete_all_alnum_leaves_the_rest() {
        assert_eq!(
            delete_random_chars("ab c", 3, &mut stream("b")).unwrap(),
            " "
        );
    }

    #[test]
    fn delete_matches_independent_selection_replay() {
        // Re-enact the documented selection rule with a second stream and
        // apply it by hand.
        let text = "The cat sat.";
        let got = delete_random_chars(text, 2, &mut Stream::derive(9, "p", "d")).unwrap();

        let mut replay = Stream::derive(9, "p", "d");
        let clusters: Vec<&str> = text.graphemes(true).collect();
        let alnum: Vec<usize> = clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| is_alnum_cluster(c))
            .map(|(i, _)| i)
            .collect();
        let chosen = replay.choose_indices(alnum.len(), 2);
        let drop: Vec<usize> = chosen.iter().map(|&i| alnum[i]).collect();
        let expect: String = clusters
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, c)| *c)
            .collect();
        assert_eq!(got, expect);
        assert_eq!(alnum_count(&got), 7);
        assert!(got.ends_with('.'));
    }

    #[test]
    fn delete_removes_exactly_k_and_nothing_else() {
        let text = "Näive résumé stats, 42 points!";
        for k in 1..=5 {
            let out = delete_random_chars(text, k, &mut stream(&format!("k{k}"))).unwrap();
            assert_eq!(alnum_count(&out), alnum_count(text) - k);
            let non_alnum = |s: &str| -> String {
                s.graphemes(true).filter(|c| !is_alnum_cluster(c)).collect()
            };
            assert_eq!(non_alnum(&out), non_alnum(text));
        }
    }

    #[test]
    fn delete_insufficient_material() {
        assert!(matches!(
            delete_random_chars("a b", 3, &mut stream("x")),
            Err(RuleError::InsufficientMaterial { .. })
        ));
    }

    #[test]
    fn typos_zero_is_identity() {
        assert_eq!(inject_typos("go", 0, &mut stream("t")).unwrap(), "go");
    }

    #[test]
    fn typos_change_the_text_and_respect_non_letters() {
        let text = "hello world, keep 42 intact!";
        for seed in 0..20 {
            let out = inject_typos(text, 2, &mut stream(&format!("s{seed}"))).unwrap();
            assert_ne!(out, text);
            let non_letters =
                |s: &str| -> String { s.chars().filter(|c| !c.is_alphabetic()).collect() };
            assert_eq!(non_letters(&out), non_letters(text));
        }
    }

    #[test]
    fn typos_edit_distance_bounded_by_two_per_event() {
        let text = "hello world";
        for seed in 0..50 {
            let out = inject_typos(text, 2, &mut stream(&format!("d{seed}"))).unwrap();
            assert!(edit_distance(text, &out) <= 4, "{text} -> {out}");
        }
    }

    fn edit_distance(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        let mut cur = vec![0; b.len() + 1];
        for i in 1..=a.len() {
            cur[0] = i;
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        prev[b.len()]
    }

    #[test]
    fn typos_insufficient_letters() {
        assert!(matches!(
            inject_typos("a 1 2 3", 2, &mut stream("x")),
            Err(RuleError::InsufficientMaterial { .. })
        ));
    }

    #[test]
    fn qwerty_neighbors_sane() {
        assert!(qwerty_neighbors('s').contains(&'a'));
        assert!(qwerty_neighbors('s').contains(&'d'));
        assert!(qwerty_neighbors('s').contains(&'w'));
        assert!(qwerty_neighbors('s').contains(&'x'));
        assert!(!qwerty_neighbors('s').contains(&'s'));
        assert!(qwerty_neighbors('é').is_empty());
        for c in 'a'..='z' {
            assert!(!qwerty_neighbors(c).is_empty(), "{c} has no neighbors");
        }
    }

    #[test]
    fn word_span_exhaustive_outcomes() {
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let out = delete_word_span("a b c", 2, &mut stream(&format!("w{seed}"))).unwrap();
            seen.insert(out);
        }
        assert_eq!(
            seen,
            ["a", "c"]
                .iter()
                .map(|s| s.to_string())
                .collect::<std::collections::BTreeSet<_>>()
        );
    }

    #[test]
    fn word_span_arithmetic() {
        let words: Vec<String> = (0..71).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let out = delete_word_span(&text, 25, &mut stream("long")).unwrap();
        assert_eq!(tokenize_words(&out).len(), 46);
    }

    #[test]
    fn word_span_never_deletes_everything() {
        assert!(matches!(
            delete_word_span("a b c", 3, &mut stream("x")),
            Err(RuleError::InsufficientMaterial { .. })
        ));
        assert_eq!(
            delete_word_span("a b c", 0, &mut stream("x")).unwrap(),
            "a b c"
        );
    }

    #[test]
    fn shuffle_two_sentences_must_swap() {
        let out = shuffle_sentences("A. B.", Magnitude::All, &mut stream("s")).unwrap();
        assert_eq!(out, "B. A.");
    }

    #[test]
    fn shuffle_pair_swap_is_a_transposition() {
        let text = "A. B. C.";
        let out = shuffle_sentences(text, Magnitude::Count(2), &mut stream("sw")).unwrap();
        let orig = ["A.", "B.", "C."];
        let got: Vec<&str> = out.split_whitespace().collect();
        let moved: Vec<usize> = (0..3).filter(|&i| got[i] != orig[i]).collect();
        assert_eq!(moved.len(), 2);
        assert_eq!(got[moved[0]], orig[moved[1]]);
        assert_eq!(got[moved[1]], orig[moved[0]]);
    }

    #[test]
    fn shuffle_preserves_sentence_multiset() {
        let text = "One stays. Two moves! Three waits? Four ends.";
        for seed in 0..30 {
            let out =
                shuffle_sentences(text, Magnitude::All, &mut stream(&format!("m{seed}"))).unwrap();
            let mut a = split_sentences(text);
            let mut b = split_sentences(&out);
            a.sort();
            b.sort();
            assert_eq!(a, b);
            assert_ne!(out, crate::corpus::normalize_whitespace(text));
        }
    }

    #[test]
    fn shuffle_single_sentence_inapplicable() {
        assert!(matches!(
            shuffle_sentences("only one here.", Magnitude::All, &mut stream("x")),
            Err(RuleError::Inapplicable(_))
        ));
    }

    #[test]
    fn random_reference_donor_is_never_self() {
        let corpus = test_corpus(10);
        for seed in 0..1000 {
            let mut rng = Stream::derive(seed, "donor", "d3");
            let donor = substitute_reference_random(3, &corpus, &mut rng).unwrap();
            assert_ne!(donor, corpus.datapoints[3].reference);
        }
    }

    #[test]
    fn two_story_corpus_forces_the_other_ending() {
        let corpus = test_corpus(2);
        let mut rng = Stream::derive(0, "donor", "d0");
        let donor = substitute_reference_random(0, &corpus, &mut rng).unwrap();
        assert_eq!(donor, corpus.datapoints[1].reference);
    }

    #[test]
    fn donor_frequencies_roughly_uniform() {
        let corpus = test_corpus(100);
        let mut counts = vec![0usize; 100];
        let draws = 99 * 200;
        for seed in 0..draws {
            let mut rng = Stream::derive(seed as u64, "donor", "d0");
            let donor = substitute_reference_random(0, &corpus, &mut rng).unwrap();
            let idx: usize = donor.strip_prefix("ref-").unwrap().parse().unwrap();
            counts[idx] += 1;
        }
        assert_eq!(counts[0], 0);
        // chi-square against uniform over the 99 donors; 160 is far beyond
        // any plausible seed-to-seed wobble at df = 98 (99% quantile ~134)
        let expected = draws as f64 / 99.0;
        let chi2: f64 = counts[1..]
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 160.0, "chi2 = {chi2}");
    }

    #[test]
    fn wrong_ending_is_verbatim_and_seed_free() {
        let corpus = test_corpus(2);
        let mut dp = corpus.datapoints[0].clone();
        dp.wrong_ending = Some("He flew away.".into());
        assert_eq!(substitute_ending_wrong(&dp).unwrap(), "He flew away.");
        dp.wrong_ending = None;
        assert!(matches!(
            substitute_ending_wrong(&dp),
            Err(RuleError::MissingField("wrong_ending"))
        ));
    }

    fn test_corpus(n: usize) -> Corpus {
        Corpus {
            task: crate::corpus::TaskKind::StoryCompletion,
            language_pair: None,
            datapoints: (0..n)
                .map(|i| Datapoint {
                    id: format!("id-{i}"),
                    context: format!("ctx-{i}"),
                    reference: format!("ref-{i}"),
                    wrong_ending: Some(format!("wrong-{i}")),
                })
                .collect(),
        }
    }
}
