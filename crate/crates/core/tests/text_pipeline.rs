mod common;

use fitbot_core::text::{
    autocorrect, char_slice, levenshtein, phonetic_code, tokenize, TextError, Vocabulary,
    MAX_INPUT_CHARS,
};
use proptest::prelude::*;

#[test]
fn levenshtein_matches_edit_script_search() {
    let table = common::edit_script_distances(&['a', 'b', 'c'], 5);
    assert_eq!(table.len(), 364 * 364);
    for ((a, b), d) in &table {
        assert_eq!(levenshtein(a, b), *d, "{a:?} vs {b:?}");
    }
}

#[test]
fn levenshtein_matches_plain_recursion() {
    for a in common::all_strings(&['a', 'b', 'c'], 3) {
        for b in common::all_strings(&['a', 'b', 'c'], 3) {
            let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            assert_eq!(
                levenshtein(&a, &b),
                common::edit_distance_recursive(&ca, &cb)
            );
        }
    }
}

#[test]
fn levenshtein_counts_characters() {
    assert_eq!(levenshtein("café", "cafe"), 1);
    assert_eq!(levenshtein("kitten", "sitting"), 3);
    assert_eq!(levenshtein("", "abc"), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn levenshtein_is_a_metric(a in "[a-eé]{0,8}", b in "[a-eé]{0,8}", c in "[a-eé]{0,8}") {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &a), 0);
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
    }

    #[test]
    fn token_offsets_index_the_input(text in "[ a-zA-Z0-9'.,!?:/-]{0,60}") {
        let tokens = tokenize(&text).unwrap();
        let mut last_end = 0;
        for t in &tokens {
            prop_assert!(t.start < t.end);
            prop_assert!(t.start >= last_end);
            prop_assert_eq!(char_slice(&text, t.start, t.end), t.surface.clone());
            prop_assert_eq!(t.normalized.clone(), t.surface.to_lowercase());
            last_end = t.end;
        }
    }

    #[test]
    fn autocorrect_is_idempotent(words in prop::collection::vec("[a-z]{1,9}", 0..8)) {
        let skill = fitbot_core::fixtures::skill();
        let vocab = Vocabulary::from_skill(&skill);
        let text = words.join(" ");
        let once = autocorrect(&tokenize(&text).unwrap(), &vocab);
        let twice = autocorrect(&once, &vocab);
        let norm = |ts: &[fitbot_core::Token]| ts.iter().map(|t| t.normalized.clone()).collect::<Vec<_>>();
        prop_assert_eq!(norm(&once), norm(&twice));
        for (t, c) in tokenize(&text).unwrap().iter().zip(&once) {
            prop_assert_eq!((t.start, t.end), (c.start, c.end));
        }
    }
}

#[test]
fn input_length_limit() {
    assert!(tokenize(&"a".repeat(MAX_INPUT_CHARS)).is_ok());
    assert_eq!(
        tokenize(&"é".repeat(MAX_INPUT_CHARS + 1)),
        Err(TextError::InputTooLong(MAX_INPUT_CHARS + 1))
    );
}

#[test]
fn soundex_reference_codes() {
    for (word, code) in [
        ("Robert", "R163"),
        ("Rupert", "R163"),
        ("Rubin", "R150"),
        ("Ashcraft", "A261"),
        ("Tymczak", "T522"),
        ("Pfister", "P236"),
        ("Honeyman", "H555"),
        ("Lee", "L000"),
    ] {
        assert_eq!(phonetic_code(word).unwrap(), code, "{word}");
    }
    assert!(matches!(
        phonetic_code("123"),
        Err(TextError::NotEncodable(_))
    ));
}

#[test]
fn fixture_misspellings_are_repaired() {
    let vocab = Vocabulary::from_skill(&fitbot_core::fixtures::skill());
    let tokens = autocorrect(&tokenize("passwrd doesnt work").unwrap(), &vocab);
    let words: Vec<&str> = tokens.iter().map(|t| t.normalized.as_str()).collect();
    assert_eq!(words, ["password", "doesn't", "work"]);
    assert_eq!(tokens[0].corrected_from.as_deref(), Some("passwrd"));
    assert_eq!(tokens[2].corrected_from, None);
}

#[test]
fn wordlist_extends_vocabulary() {
    let mut vocab = Vocabulary::from_skill(&fitbot_core::fixtures::skill());
    assert!(!vocab.contains("weekend"));
    vocab
        .extend_from_wordlist(fitbot_core::fixtures::WORDLIST_TSV)
        .unwrap();
    assert!(vocab.contains("weekend"));
    let tokens = autocorrect(&tokenize("weekned").unwrap(), &vocab);
    assert_eq!(tokens[0].normalized, "weekend");
}
