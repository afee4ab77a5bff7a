use super::{Token, VOCAB_SIZE};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenFormatError {
    #[error("line {line}: invalid token {text:?}")]
    InvalidToken { line: usize, text: String },
}

/// One sequence as space-separated integers, without a newline.
pub fn format_token_line(seq: &[Token]) -> String {
    seq.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

/// Parses one line of a `.tok` file; `line` is used in error messages.
pub fn parse_token_line(text: &str, line: usize) -> Result<Vec<Token>, TokenFormatError> {
    text.split_whitespace()
        .map(|s| {
            s.parse::<Token>()
                .ok()
                .filter(|&t| (t as usize) < VOCAB_SIZE)
                .ok_or_else(|| TokenFormatError::InvalidToken { line, text: s.to_string() })
        })
        .collect()
}

/// Every non-empty line of a `.tok` file, one sequence each.
pub fn parse_token_file(text: &str) -> Result<Vec<Vec<Token>>, TokenFormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_token_line(l, i + 1))
        .collect()
}
