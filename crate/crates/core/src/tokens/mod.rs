//! Integer token sequences for scene programs.
//!
//! Layout: `PAD=0, START=1, STOP=2, PART=3`, one token per command kind at
//! `4..=10`, and value tokens `16 + v` for `v` in `0..=2031`. A sequence is
//! `START (PART CMD v_1 .. v_arity)* STOP`.

mod grammar;
mod io;

pub use grammar::{valid_next_tokens, Expected, GrammarError, GrammarState};
pub use io::{format_token_line, parse_token_file, parse_token_line, TokenFormatError};

use crate::lang::{normalize_origin, quantize_scene, Command, CommandKind, ParamType, SceneProgram};
use serde::Serialize;
use thiserror::Error;

pub type Token = u16;

pub const PAD: Token = 0;
pub const START: Token = 1;
pub const STOP: Token = 2;
pub const PART: Token = 3;
pub const FIRST_COMMAND: Token = 4;
pub const VALUE_OFFSET: Token = 16;
pub const VOCAB_SIZE: usize = 2048;
pub const MAX_VALUE: u32 = VOCAB_SIZE as u32 - VALUE_OFFSET as u32 - 1;
pub const MAX_SEQ_LEN: usize = 2048;

/// Vocabulary partition of a token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TokenClass {
    Special,
    Command,
    Reserved,
    Value,
}

pub fn token_class(t: Token) -> TokenClass {
    match t {
        0..=3 => TokenClass::Special,
        4..=10 => TokenClass::Command,
        11..=15 => TokenClass::Reserved,
        _ => TokenClass::Value,
    }
}

pub fn command_token(kind: CommandKind) -> Token {
    FIRST_COMMAND + kind as Token
}

pub fn command_kind(t: Token) -> Option<CommandKind> {
    CommandKind::ALL.get(t.checked_sub(FIRST_COMMAND)? as usize).copied()
}

pub fn value_token(v: u32) -> Option<Token> {
    (v <= MAX_VALUE).then(|| VALUE_OFFSET + v as Token)
}

pub fn token_value(t: Token) -> Option<u32> {
    (t >= VALUE_OFFSET && (t as usize) < VOCAB_SIZE).then(|| (t - VALUE_OFFSET) as u32)
}

/// Token count of a program: `2 + Σ (2 + arity)`.
pub fn sequence_len(program: &SceneProgram) -> usize {
    2 + program.commands.iter().map(|c| 2 + c.kind().arity()).sum::<usize>()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenizeError {
    #[error("{field} quantizes to {value}, outside 0..={MAX_VALUE}")]
    ValueOutOfRange { field: String, value: i64 },
    #[error("sequence of {0} tokens exceeds {MAX_SEQ_LEN}")]
    SequenceTooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetokenizeError {
    #[error("malformed sequence at position {position}: expected {expected}")]
    MalformedSequence { position: usize, expected: Expected },
}

fn integer_value(ty: ParamType, x: f64, res: f64) -> i64 {
    match ty {
        ParamType::Int => x as i64,
        ParamType::Position(_) | ParamType::Extent => (x / res).round() as i64,
        ParamType::Angle { wrap: true } => x.round().rem_euclid(360.0) as i64,
        ParamType::Angle { wrap: false } => x.round() as i64,
    }
}

fn real_value(ty: ParamType, v: u32, res: f64) -> f64 {
    match ty {
        ParamType::Int | ParamType::Angle { .. } => v as f64,
        ParamType::Position(_) | ParamType::Extent => v as f64 * res,
    }
}

/// Encodes a program after translating its positional minimum to the
/// origin and quantizing at `program.resolution`. Command order is kept as
/// given; canonicalize first for training targets.
pub fn tokenize(program: &SceneProgram) -> Result<Vec<Token>, TokenizeError> {
    let len = sequence_len(program);
    if len > MAX_SEQ_LEN {
        return Err(TokenizeError::SequenceTooLong(len));
    }
    let res = program.resolution;
    let q = quantize_scene(&normalize_origin(program), res);
    let mut out = Vec::with_capacity(len);
    out.push(START);
    for cmd in &q.commands {
        let kind = cmd.kind();
        out.push(PART);
        out.push(command_token(kind));
        for (spec, x) in kind.params().iter().zip(cmd.values()) {
            let v = integer_value(spec.ty, x, res);
            let tok = u32::try_from(v).ok().and_then(value_token).ok_or_else(|| {
                TokenizeError::ValueOutOfRange {
                    field: format!("{}.{}", kind.name(), spec.name),
                    value: v,
                }
            })?;
            out.push(tok);
        }
    }
    out.push(STOP);
    Ok(out)
}

fn decode_body(kind: CommandKind, values: &[Token], res: f64) -> Command {
    let reals: Vec<f64> = kind
        .params()
        .iter()
        .zip(values)
        .map(|(spec, &t)| real_value(spec.ty, token_value(t).expect("value token"), res))
        .collect();
    Command::from_values(kind, &reals)
}

/// Strict inverse of [`tokenize`]: the sequence must be exactly
/// `START (PART CMD values)* STOP` with nothing after STOP.
pub fn detokenize(seq: &[Token], res: f64) -> Result<SceneProgram, DetokenizeError> {
    let mut grammar = GrammarState::unbounded();
    for (position, &t) in seq.iter().enumerate() {
        grammar
            .push(t)
            .map_err(|expected| DetokenizeError::MalformedSequence { position, expected })?;
    }
    if !grammar.is_complete() {
        return Err(DetokenizeError::MalformedSequence {
            position: seq.len(),
            expected: grammar.expected(),
        });
    }
    let mut commands = Vec::new();
    let mut i = 1;
    while seq[i] == PART {
        let kind = command_kind(seq[i + 1]).expect("grammar checked");
        let arity = kind.arity();
        commands.push(decode_body(kind, &seq[i + 2..i + 2 + arity], res));
        i += 2 + arity;
    }
    Ok(SceneProgram { commands, resolution: res })
}

/// Result of [`detokenize_lenient`].
#[derive(Debug, Clone, PartialEq)]
pub struct LenientDecode {
    pub program: SceneProgram,
    /// Malformed or truncated command bodies that were dropped.
    pub skipped: usize,
    /// Whether a STOP token was reached.
    pub terminated: bool,
}

/// Best-effort decoding of model output. Complete command bodies are kept;
/// a body cut short by a non-value token or by the end of input, or headed
/// by something other than a command token, is dropped and counted. Decoding
/// resumes at the next PART and ends at the first STOP.
pub fn detokenize_lenient(seq: &[Token], res: f64) -> LenientDecode {
    let mut commands = Vec::new();
    let mut skipped = 0;
    let mut i = usize::from(seq.first() == Some(&START));
    loop {
        match seq.get(i) {
            None => return LenientDecode { program: SceneProgram { commands, resolution: res }, skipped, terminated: false },
            Some(&STOP) => return LenientDecode { program: SceneProgram { commands, resolution: res }, skipped, terminated: true },
            Some(&PART) => {
                let body_start = i + 2;
                match seq.get(i + 1).copied().and_then(command_kind) {
                    Some(kind) => {
                        let arity = kind.arity();
                        let body = seq.get(body_start..).unwrap_or(&[]);
                        let n = body.iter().take(arity).take_while(|&&t| token_value(t).is_some()).count();
                        if n == arity {
                            commands.push(decode_body(kind, &body[..arity], res));
                            i = body_start + arity;
                        } else {
                            skipped += 1;
                            i = body_start + n;
                        }
                    }
                    None => {
                        skipped += 1;
                        i += 1;
                    }
                }
            }
            Some(_) => {
                // Stray tokens between bodies: skip the whole run as one.
                skipped += 1;
                i += 1;
                while let Some(&t) = seq.get(i) {
                    if t == PART || t == STOP {
                        break;
                    }
                    i += 1;
                }
            }
        }
    }
}

/// Position-wise accuracy over `max(len)` positions. Value tokens match
/// when within `slack` steps of each other; every other token must match
/// exactly.
pub fn token_accuracy_slack(pred: &[Token], gt: &[Token], slack: u32) -> f64 {
    let total = pred.len().max(gt.len());
    if total == 0 {
        return 1.0;
    }
    let correct = pred
        .iter()
        .zip(gt)
        .filter(|(&p, &g)| match (token_value(p), token_value(g)) {
            (Some(a), Some(b)) => a.abs_diff(b) <= slack,
            (None, None) => p == g,
            _ => false,
        })
        .count();
    correct as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_scene_text;

    const WALL: &str = "make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=1.0, b_y=0, b_z=0, height=2.5";

    #[test]
    fn empty_program() {
        let p = SceneProgram::default();
        assert_eq!(tokenize(&p).unwrap(), vec![START, STOP]);
        assert_eq!(detokenize(&[START, STOP], 0.05).unwrap(), p);
    }

    #[test]
    fn single_wall_layout() {
        let p = parse_scene_text(WALL).unwrap();
        let seq = tokenize(&p).unwrap();
        assert_eq!(seq, vec![1, 3, 4, 16, 16, 16, 16, 36, 16, 16, 66, 2]);
        assert_eq!(detokenize(&seq, 0.05).unwrap(), quantize_scene(&p, 0.05));
    }

    #[test]
    fn command_tokens_roundtrip() {
        for kind in CommandKind::ALL {
            assert_eq!(command_kind(command_token(kind)), Some(kind));
        }
        assert_eq!(command_token(CommandKind::WallPrim), 10);
        assert_eq!(command_kind(11), None);
        assert_eq!(command_kind(3), None);
        assert_eq!(value_token(MAX_VALUE), Some(2047));
        assert_eq!(value_token(MAX_VALUE + 1), None);
    }

    #[test]
    fn out_of_range() {
        let p = parse_scene_text("make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=200, b_y=0, b_z=0, height=2.5").unwrap();
        assert!(matches!(tokenize(&p), Err(TokenizeError::ValueOutOfRange { value: 4000, .. })));
    }

    #[test]
    fn strict_rejects_trailing_tokens() {
        let err = detokenize(&[START, STOP, PART], 0.05).unwrap_err();
        assert_eq!(err, DetokenizeError::MalformedSequence { position: 2, expected: Expected::End });
        let err = detokenize(&[START, PART, 4, 16], 0.05).unwrap_err();
        assert_eq!(err, DetokenizeError::MalformedSequence { position: 4, expected: Expected::Value });
    }

    #[test]
    fn lenient_truncation() {
        let p = parse_scene_text(&format!("{WALL}\n{}", WALL.replace("id=0", "id=1"))).unwrap();
        let seq = tokenize(&p).unwrap();
        let cut = &seq[..seq.len() - 4];
        assert!(detokenize(cut, 0.05).is_err());
        let d = detokenize_lenient(cut, 0.05);
        assert_eq!((d.program.len(), d.skipped, d.terminated), (1, 1, false));
    }

    #[test]
    fn lenient_skips_bad_headers_and_strays() {
        let seq = [START, PART, 12, 16, 16, PART, 4, 16, 16, 16, 16, 36, 16, 16, 66, 20, STOP];
        let d = detokenize_lenient(&seq, 0.05);
        assert_eq!((d.program.len(), d.skipped, d.terminated), (1, 3, true));
    }

    #[test]
    fn slack_accuracy() {
        let gt = vec![START, PART, 4, 20, 30, STOP];
        assert_eq!(token_accuracy_slack(&gt, &gt, 0), 1.0);
        let pred = vec![START, PART, 4, 21, 31, STOP];
        assert_eq!(token_accuracy_slack(&pred, &gt, 1), 1.0);
        assert!((token_accuracy_slack(&pred, &gt, 0) - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(token_accuracy_slack(&[START], &gt, 5), 1.0 / 6.0);
        // A command token near a value token never matches.
        assert_eq!(token_accuracy_slack(&[15], &[16], 5), 0.0);
    }
}
