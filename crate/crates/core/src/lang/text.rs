//! Line-oriented scene text: `<command_name>, key=value, key=value, ...`.

use super::{Command, CommandKind, ParamType, SceneProgram};
use std::collections::HashSet;
use std::fmt::Write;
use thiserror::Error;

/// Parse failure; `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: unknown command `{name}`")]
    UnknownCommand { name: String, line: usize },
    #[error("line {line}: missing parameter `{key}`")]
    MissingParameter { key: String, line: usize },
    #[error("line {line}: duplicate parameter `{key}`")]
    DuplicateParameter { key: String, line: usize },
    #[error("line {line}: unknown parameter `{key}`")]
    UnknownParameter { key: String, line: usize },
    #[error("line {line}: malformed number `{token}`")]
    MalformedNumber { token: String, line: usize },
    #[error("line {line}: expected `key=value`, found `{token}`")]
    MalformedField { token: String, line: usize },
    #[error("line {line}: reference to missing id {id}")]
    DanglingReference { id: u32, line: usize },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::UnknownCommand { line, .. }
            | ParseError::MissingParameter { line, .. }
            | ParseError::DuplicateParameter { line, .. }
            | ParseError::UnknownParameter { line, .. }
            | ParseError::MalformedNumber { line, .. }
            | ParseError::MalformedField { line, .. }
            | ParseError::DanglingReference { line, .. } => *line,
        }
    }
}

/// Parses scene text into a program, preserving line order.
///
/// `#` starts a comment, blank lines are skipped, LF and CRLF are both
/// accepted. Keys may appear in any order. Cross references are resolved
/// after the whole text is read, so forward references are allowed.
pub fn parse_scene_text(text: &str) -> Result<SceneProgram, ParseError> {
    let mut commands = Vec::new();
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        commands.push(parse_line(content, line_no)?);
        lines.push(line_no);
    }
    check_references(&commands, &lines)?;
    Ok(SceneProgram::new(commands))
}

fn parse_line(content: &str, line: usize) -> Result<Command, ParseError> {
    let mut fields = content.split(',').map(str::trim);
    let name = fields.next().unwrap_or_default();
    let kind = CommandKind::from_name(name)
        .ok_or_else(|| ParseError::UnknownCommand { name: name.to_string(), line })?;
    let specs = kind.params();
    let mut values: Vec<Option<f64>> = vec![None; specs.len()];

    for field in fields {
        if field.is_empty() {
            continue;
        }
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| ParseError::MalformedField { token: field.to_string(), line })?;
        let (key, value) = (key.trim(), value.trim());
        let slot = specs
            .iter()
            .position(|s| s.name == key)
            .ok_or_else(|| ParseError::UnknownParameter { key: key.to_string(), line })?;
        if values[slot].is_some() {
            return Err(ParseError::DuplicateParameter { key: key.to_string(), line });
        }
        let malformed = || ParseError::MalformedNumber { token: value.to_string(), line };
        let parsed = match specs[slot].ty {
            ParamType::Int => value.parse::<u32>().map_err(|_| malformed())? as f64,
            _ => {
                let x = value.parse::<f64>().map_err(|_| malformed())?;
                if !x.is_finite() {
                    return Err(malformed());
                }
                x
            }
        };
        values[slot] = Some(parsed);
    }

    let mut out = Vec::with_capacity(specs.len());
    for (spec, value) in specs.iter().zip(values) {
        match value {
            Some(v) => out.push(v),
            None if spec.optional => out.push(0.0),
            None => {
                return Err(ParseError::MissingParameter { key: spec.name.to_string(), line })
            }
        }
    }
    Ok(Command::from_values(kind, &out))
}

fn check_references(commands: &[Command], lines: &[usize]) -> Result<(), ParseError> {
    let walls: HashSet<u32> = commands
        .iter()
        .filter_map(|c| match c {
            Command::Wall(w) => Some(w.id),
            _ => None,
        })
        .collect();
    let boxes: HashSet<u32> = commands
        .iter()
        .filter_map(|c| match c {
            Command::Bbox(b) => Some(b.id),
            _ => None,
        })
        .collect();
    for (cmd, &line) in commands.iter().zip(lines) {
        let missing = match cmd {
            Command::Door(o) | Command::Window(o) => [o.wall0_id, o.wall1_id]
                .into_iter()
                .find(|id| !walls.contains(id)),
            Command::Prim(q) => Some(q.bbox_id).filter(|id| !boxes.contains(id)),
            Command::WallPrim(w) => Some(w.parent_wall_id).filter(|id| !walls.contains(id)),
            _ => None,
        };
        if let Some(id) = missing {
            return Err(ParseError::DanglingReference { id, line });
        }
    }
    Ok(())
}

/// Writes one line per command with keys in canonical parameter order.
/// Floats use the shortest representation that parses back to the same
/// `f64`. Door state keys are omitted when all three are zero.
pub fn serialize_scene_text(program: &SceneProgram) -> String {
    let mut out = String::new();
    for cmd in &program.commands {
        let kind = cmd.kind();
        let values = cmd.values();
        let skip_state = matches!(cmd, Command::Door(o)
            if o.open_degree == 0.0 && o.hinge_side == 0 && o.open_direction == 0);
        out.push_str(kind.name());
        for (spec, v) in kind.params().iter().zip(values) {
            if spec.optional && skip_state {
                continue;
            }
            match spec.ty {
                ParamType::Int => write!(out, ", {}={}", spec.name, v as u32),
                _ => write!(out, ", {}={:?}", spec.name, v),
            }
            .expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{OpeningCmd, WallCmd};

    #[test]
    fn parses_single_wall() {
        let p = parse_scene_text(
            "make_wall, id=0, a_x=0.0, a_y=0.0, a_z=0.0, b_x=4.0, b_y=0.0, b_z=0.0, height=2.5",
        )
        .unwrap();
        assert_eq!(
            p.commands,
            vec![Command::Wall(WallCmd {
                id: 0,
                a_x: 0.0,
                a_y: 0.0,
                a_z: 0.0,
                b_x: 4.0,
                b_y: 0.0,
                b_z: 0.0,
                height: 2.5
            })]
        );
    }

    #[test]
    fn empty_text_is_empty_program() {
        assert!(parse_scene_text("").unwrap().is_empty());
        assert!(parse_scene_text("\n  # only a comment\r\n\n").unwrap().is_empty());
        assert_eq!(serialize_scene_text(&SceneProgram::default()), "");
    }

    #[test]
    fn door_without_state_defaults_closed() {
        let text = "make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=4, b_y=0, b_z=0, height=2.5\n\
                    make_door, id=1, wall0_id=0, wall1_id=0, position_x=2.0, position_y=0.0, \
                    position_z=1.0, width=0.9, height=2.0\n";
        let p = parse_scene_text(text).unwrap();
        let Command::Door(d) = p.commands[1] else { panic!("not a door") };
        assert_eq!(
            d,
            OpeningCmd {
                id: 1,
                wall0_id: 0,
                wall1_id: 0,
                position_x: 2.0,
                position_y: 0.0,
                position_z: 1.0,
                width: 0.9,
                height: 2.0,
                open_degree: 0.0,
                hinge_side: 0,
                open_direction: 0,
            }
        );
        assert_eq!(parse_scene_text(&serialize_scene_text(&p)).unwrap(), p);
    }

    #[test]
    fn keys_in_any_order_and_crlf() {
        let text = "make_wall, height=2.5, b_z=0, b_y=0, b_x=1, a_z=0, a_y=0, a_x=0, id=3\r\n";
        let p = parse_scene_text(text).unwrap();
        assert_eq!(p.walls().next().unwrap().id, 3);
    }

    #[test]
    fn serializes_one_line_per_command() {
        let p = parse_scene_text("make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=4, b_y=0, b_z=0, height=2.5")
            .unwrap();
        assert_eq!(
            serialize_scene_text(&p),
            "make_wall, id=0, a_x=0.0, a_y=0.0, a_z=0.0, b_x=4.0, b_y=0.0, b_z=0.0, height=2.5\n"
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_scene_text("\n\nmake_table, id=0").unwrap_err();
        assert_eq!(err, ParseError::UnknownCommand { name: "make_table".into(), line: 3 });

        let err = parse_scene_text("make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=1, b_y=0, b_z=0")
            .unwrap_err();
        assert_eq!(err, ParseError::MissingParameter { key: "height".into(), line: 1 });

        let err = parse_scene_text("make_wall, id=0, id=1").unwrap_err();
        assert_eq!(err, ParseError::DuplicateParameter { key: "id".into(), line: 1 });

        let err = parse_scene_text("make_wall, id=0, a_x=1,5").unwrap_err();
        assert!(matches!(err, ParseError::MalformedField { line: 1, .. }));

        let err = parse_scene_text("make_wall, id=-1").unwrap_err();
        assert_eq!(err, ParseError::MalformedNumber { token: "-1".into(), line: 1 });

        let err = parse_scene_text("make_wall, id=0, a_x=1,0").unwrap_err();
        assert!(matches!(err, ParseError::MalformedField { .. }));

        let err = parse_scene_text("make_wall, id=0, a_x=nan").unwrap_err();
        assert!(matches!(err, ParseError::MalformedNumber { .. }));

        let err = parse_scene_text("make_wall, id=0, colour=3").unwrap_err();
        assert!(matches!(err, ParseError::UnknownParameter { .. }));
    }

    #[test]
    fn dangling_reference_reports_referencing_line() {
        let text = "make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=4, b_y=0, b_z=0, height=2.5\n\
                    make_window, id=0, wall0_id=99, wall1_id=99, position_x=2, position_y=0, \
                    position_z=1.5, width=1, height=1\n";
        let err = parse_scene_text(text).unwrap_err();
        assert_eq!(err, ParseError::DanglingReference { id: 99, line: 2 });
    }
}
