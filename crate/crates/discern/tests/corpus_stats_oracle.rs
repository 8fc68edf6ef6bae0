//! Cross-checks corpus statistics on a bundled corpus against an
//! independent counter written from the documented rules, not from the
//! library's segmentation code.

use discern::corpus::{corpus_stats, load_corpus_from_str, TaskKind};
use discern::report::pipeline::builtin_dataset;

const GUARDS: [&str; 11] = [
    "Dr.", "Mr.", "Mrs.", "Ms.", "St.", "e.g.", "i.e.", "etc.", "vs.", "Fig.", "No.",
];

/// Sentence count by direct scan: terminators `.!?` followed by a space or
/// the end, except when the token ending at a period is a guarded
/// abbreviation; any trailing material is one more sentence.
fn count_sentences(text: &str) -> usize {
    let norm: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let flat = norm.join(" ");
    let chars: Vec<char> = flat.chars().collect();
    let mut count = 0;
    let mut consumed = 0; // chars belonging to counted sentences
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') && (i + 1 == chars.len() || chars[i + 1] == ' ') {
            let token: String = {
                let upto: String = chars[consumed..=i].iter().collect();
                upto.rsplit(' ').next().unwrap_or(&upto).to_string()
            };
            if !(c == '.' && GUARDS.contains(&token.as_str())) {
                count += 1;
                consumed = i + 2;
                i += 2;
                continue;
            }
        }
        i += 1;
    }
    if consumed < chars.len() {
        count += 1;
    }
    count
}

#[test]
fn bundled_corpus_stats_match_independent_counts() {
    // the bundled summarization corpus is ASCII, so chars() agrees with
    // grapheme clusters and makes an independent character counter
    let text = builtin_dataset("mini_summarization").unwrap();
    let corpus = load_corpus_from_str(text, TaskKind::Summarization).unwrap();

    let n = corpus.len() as f64;
    let mut chars = 0usize;
    let mut words = 0usize;
    let mut sentences = 0usize;
    for dp in &corpus.datapoints {
        assert!(dp.reference.is_ascii(), "oracle assumes ASCII references");
        chars += dp.reference.chars().count();
        words += dp.reference.split_whitespace().count();
        sentences += count_sentences(&dp.reference);
    }

    let stats = corpus_stats(&corpus).unwrap();
    assert_eq!(stats.avg_chars, chars as f64 / n);
    assert_eq!(stats.avg_words, words as f64 / n);
    assert_eq!(stats.avg_sentences, sentences as f64 / n);
    assert!(stats.avg_sentences >= 1.0);
}
