use super::{command_kind, token_value, Token, MAX_SEQ_LEN, PART, START, STOP, VOCAB_SIZE};
use crate::lang::CommandKind;
use serde::Serialize;
use std::fmt;
use thiserror::Error;

/// What the grammar accepts next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Expected {
    Start,
    PartOrStop,
    Command,
    Value,
    /// Nothing may follow STOP.
    End,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expected::Start => "START",
            Expected::PartOrStop => "PART or STOP",
            Expected::Command => "a command token",
            Expected::Value => "a value token",
            Expected::End => "end of sequence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("prefix is unreachable at position {position}: expected {expected}")]
    UnreachablePrefix { position: usize, expected: Expected },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Start,
    Between,
    Command,
    Body(CommandKind, usize),
    Done,
}

/// Incremental parser for the token grammar, with a length budget so that
/// every admitted token can still be completed within `max_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarState {
    phase: Phase,
    len: usize,
    max_len: usize,
}

impl Default for GrammarState {
    fn default() -> Self {
        Self::new()
    }
}

const MIN_ARITY: usize = 7;

impl GrammarState {
    pub fn new() -> Self {
        Self::with_max_len(MAX_SEQ_LEN)
    }

    pub fn with_max_len(max_len: usize) -> Self {
        GrammarState { phase: Phase::Start, len: 0, max_len }
    }

    pub(crate) fn unbounded() -> Self {
        Self::with_max_len(usize::MAX)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn expected(&self) -> Expected {
        match self.phase {
            Phase::Start => Expected::Start,
            Phase::Between => Expected::PartOrStop,
            Phase::Command => Expected::Command,
            Phase::Body(..) => Expected::Value,
            Phase::Done => Expected::End,
        }
    }

    /// Tokens still available after the current prefix.
    fn room(&self) -> usize {
        self.max_len.saturating_sub(self.len)
    }

    pub fn allows(&self, t: Token) -> bool {
        let room = self.room();
        match self.phase {
            Phase::Start => t == START && room >= 2,
            Phase::Between => match t {
                STOP => room >= 1,
                PART => room >= 3 + MIN_ARITY,
                _ => false,
            },
            Phase::Command => command_kind(t).is_some_and(|k| room >= 2 + k.arity()),
            Phase::Body(..) => token_value(t).is_some(),
            Phase::Done => false,
        }
    }

    /// Advances by one token, or reports what was expected instead.
    pub fn push(&mut self, t: Token) -> Result<(), Expected> {
        if !self.allows(t) {
            return Err(self.expected());
        }
        self.phase = match self.phase {
            Phase::Start => Phase::Between,
            Phase::Between if t == STOP => Phase::Done,
            Phase::Between => Phase::Command,
            Phase::Command => {
                let kind = command_kind(t).expect("allowed");
                Phase::Body(kind, kind.arity())
            }
            Phase::Body(_, 1) => Phase::Between,
            Phase::Body(kind, n) => Phase::Body(kind, n - 1),
            Phase::Done => unreachable!(),
        };
        self.len += 1;
        Ok(())
    }

    /// Writes the admissible-token mask into `mask` (length `VOCAB_SIZE`).
    pub fn fill_mask(&self, mask: &mut [bool]) {
        assert_eq!(mask.len(), VOCAB_SIZE);
        for (t, slot) in mask.iter_mut().enumerate() {
            *slot = self.allows(t as Token);
        }
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; VOCAB_SIZE];
        self.fill_mask(&mut m);
        m
    }
}

/// Mask over the vocabulary of tokens that extend `prefix` towards a
/// well-formed sequence of at most `MAX_SEQ_LEN` tokens.
pub fn valid_next_tokens(prefix: &[Token]) -> Result<Vec<bool>, GrammarError> {
    let mut g = GrammarState::new();
    for (position, &t) in prefix.iter().enumerate() {
        g.push(t).map_err(|expected| GrammarError::UnreachablePrefix { position, expected })?;
    }
    Ok(g.mask())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn admitted(prefix: &[Token]) -> Vec<Token> {
        let m = valid_next_tokens(prefix).unwrap();
        (0..VOCAB_SIZE as Token).filter(|&t| m[t as usize]).collect()
    }

    #[test]
    fn masks_by_phase() {
        assert_eq!(admitted(&[]), vec![START]);
        assert_eq!(admitted(&[START]), vec![STOP, PART]);
        assert_eq!(admitted(&[START, PART]), (4..=10).collect::<Vec<_>>());
        assert_eq!(admitted(&[START, PART, 4]), (16..2048).collect::<Vec<_>>());
        assert!(admitted(&[START, STOP]).is_empty());
    }

    #[test]
    fn unreachable() {
        let e = valid_next_tokens(&[START, 16]).unwrap_err();
        assert_eq!(e, GrammarError::UnreachablePrefix { position: 1, expected: Expected::PartOrStop });
    }

    #[test]
    fn budget_closes_sequence() {
        // With room for only STOP, PART is no longer admissible.
        let mut g = GrammarState::with_max_len(11);
        g.push(START).unwrap();
        assert!(g.allows(PART));
        let mut g = GrammarState::with_max_len(10);
        g.push(START).unwrap();
        assert!(!g.allows(PART));
        assert!(g.allows(STOP));
    }

    #[test]
    fn budget_filters_long_commands() {
        // room after START PART: 13 - 2 = 11; WallPrim needs 2 + 7, Door 2 + 11.
        let mut g = GrammarState::with_max_len(13);
        g.push(START).unwrap();
        g.push(PART).unwrap();
        assert!(g.allows(super::super::command_token(CommandKind::WallPrim)));
        assert!(g.allows(super::super::command_token(CommandKind::Wall)));
        assert!(!g.allows(super::super::command_token(CommandKind::Door)));
    }
}
