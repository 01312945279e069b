//! Tokenization and answer-string normalization.
//!
//! The normalizer is shared by negative mining and evaluation so that
//! "contains the answer" means the same thing everywhere.

/// Whitespace tokenization. Surface forms are preserved.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        let cleaned: String = word
            .chars()
            .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
            .flat_map(char::to_lowercase)
            .collect();
        if cleaned.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&cleaned);
    }
    out
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00BF}' | '\u{00AB}' | '\u{00BB}'
    )
}

/// Normalized lowercase terms, as used by BM25.
pub fn terms(text: &str) -> Vec<String> {
    normalize(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Does `haystack` contain `answer` as a whole-token substring after normalization?
///
/// Both arguments are normalized here; an answer that normalizes to the
/// empty string never matches.
pub fn contains_answer(haystack: &str, answer: &str) -> bool {
    let needle = normalize(answer);
    if needle.is_empty() {
        return false;
    }
    contains_normalized(&normalize(haystack), &needle)
}

/// Same as [`contains_answer`] but both inputs are already normalized.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() || haystack.len() < needle.len() {
        return false;
    }
    // token-boundary match: " hay stack " contains " stack "
    let padded_hay = format!(" {haystack} ");
    let padded_needle = format!(" {needle} ");
    padded_hay.contains(&padded_needle)
}

/// True if any of the answers occurs in `haystack`.
pub fn contains_any(haystack: &str, answers: &[String]) -> bool {
    let hay = normalize(haystack);
    answers
        .iter()
        .any(|a| contains_normalized(&hay, &normalize(a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_strips_and_collapses() {
        assert_eq!(normalize("  The  U.S.   Army! "), "the us army");
        assert_eq!(normalize("..."), "");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn containment_respects_token_boundaries() {
        assert!(contains_answer("Paris is the capital.", "paris"));
        assert!(contains_answer("born in New  York, 1901", "new york"));
        assert!(!contains_answer("Parisian food", "Paris"));
        assert!(!contains_answer("anything", "!!"));
    }
}
