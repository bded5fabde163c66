/// Minimum number of words in a participant revision.
pub const MIN_WORDS: usize = 5;

/// Whitespace-separated token count. The participant UI uses the same rule.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_whitespace_tokens() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("   "), 0);
        assert_eq!(word_count("too short text"), 3);
        assert_eq!(word_count("red meat is probably fine overall"), 6);
        assert_eq!(word_count(" a\tb\nc  d "), 4);
        assert_eq!(word_count("well-known, hyphen-ated words"), 3);
    }
}
