//! Tokenization shared by training and evaluation.
//!
//! The corpora are Chinese with embedded Latin fragments, so the tokenizer is
//! a hybrid: every CJK-range character is its own token, and runs of other
//! non-whitespace characters are whitespace-delimited words. Tokens carry
//! their character offsets so spans can be mapped between token and character
//! coordinates.

/// One token with its character offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Index of the first character (char count, not bytes).
    pub char_start: usize,
    /// One past the last character.
    pub char_end: usize,
}

/// True for characters tokenized individually (CJK ideographs, kana,
/// fullwidth forms, CJK punctuation).
#[inline]
pub fn is_cjk(c: char) -> bool {
    ('\u{2E80}'..='\u{9FFF}').contains(&c)
        || ('\u{F900}'..='\u{FAFF}').contains(&c)
        || ('\u{FF00}'..='\u{FFEF}').contains(&c)
        || ('\u{20000}'..='\u{2FA1F}').contains(&c)
}

/// Splits text into hybrid tokens: CJK characters individually, anything else
/// as whitespace-delimited runs.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run_start = 0usize;
    let mut run = String::new();
    for (idx, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if !run.is_empty() {
                tokens.push(Token { text: std::mem::take(&mut run), char_start: run_start, char_end: idx });
            }
        } else if is_cjk(c) {
            if !run.is_empty() {
                tokens.push(Token { text: std::mem::take(&mut run), char_start: run_start, char_end: idx });
            }
            tokens.push(Token { text: c.to_string(), char_start: idx, char_end: idx + 1 });
        } else {
            if run.is_empty() {
                run_start = idx;
            }
            run.push(c);
        }
    }
    if !run.is_empty() {
        let end = text.chars().count();
        tokens.push(Token { text: run, char_start: run_start, char_end: end });
    }
    tokens
}

/// Token texts only, for callers that do not need offsets.
pub fn tokenize_texts(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

/// Finds the first occurrence of `needle`'s token sequence inside `tokens`,
/// returning inclusive token indexes.
pub fn find_token_subsequence(tokens: &[Token], needle: &[String]) -> Option<(usize, usize)> {
    if needle.is_empty() || tokens.len() < needle.len() {
        return None;
    }
    'outer: for start in 0..=tokens.len() - needle.len() {
        for (k, n) in needle.iter().enumerate() {
            if &tokens[start + k].text != n {
                continue 'outer;
            }
        }
        return Some((start, start + needle.len() - 1));
    }
    None
}

/// Maps a character span to the token span that exactly covers it, if the
/// boundaries align with token boundaries.
pub fn char_span_to_token_span(
    tokens: &[Token],
    char_start: usize,
    char_end: usize,
) -> Option<(usize, usize)> {
    let first = tokens.iter().position(|t| t.char_start == char_start)?;
    let last = tokens.iter().position(|t| t.char_end == char_end)?;
    (first <= last).then_some((first, last))
}
