//! Word tokenization shared by the statistics, n-gram and vocabulary code.

/// Characters stripped from both ends of a whitespace-delimited token.
fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '“' | '”' | '‘' | '’' | '…' | '–' | '—' | '«' | '»' | '¿' | '¡' | '।' | '॥'
        )
}

/// Lowercase, split on whitespace, strip leading/trailing punctuation and drop
/// tokens that end up empty.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let tok = raw.trim_matches(is_edge_punct);
            (!tok.is_empty()).then(|| tok.to_lowercase())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_edge_punctuation_only() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
        assert_eq!(tokenize("don't (stop)"), vec!["don't", "stop"]);
        assert_eq!(tokenize("“Kya baat hai!” ..."), vec!["kya", "baat", "hai"]);
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n ").is_empty());
        assert!(tokenize("!!! ??").is_empty());
    }

    #[test]
    fn keeps_devanagari() {
        assert_eq!(tokenize("यह मज़ेदार है।"), vec!["यह", "मज़ेदार", "है"]);
    }
}
