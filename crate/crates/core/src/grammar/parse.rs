//! Lexer and recursive-descent parser for the shot-description grammar.

use super::{
    Direction, PlanError, Primitive, Segment, ShotPlan, DEFAULT_BLEND_SECONDS,
};
use std::f64::consts::PI;

/// Parses a shot description into a validated [`ShotPlan`].
///
/// Total over arbitrary input: every string yields either a plan or a
/// structured [`PlanError`], never a panic.
pub fn parse(text: &str) -> Result<ShotPlan, PlanError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let plan = parser.plan()?;
    plan.validate()?;
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokKind {
    Ident,
    Number,
    LParen,
    RParen,
    Comma,
    Semi,
    Eq,
    Slash,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    start: usize,
    text: String,
    value: f64,
}

fn lex(text: &str) -> Result<Vec<Token>, PlanError> {
    let mut tokens = Vec::new();
    let bytes = text.char_indices().collect::<Vec<_>>();
    let mut i = 0;
    while i < bytes.len() {
        let (start, c) = bytes[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let punct = |kind| Token {
            kind,
            start,
            text: c.to_string(),
            value: 0.0,
        };
        match c {
            '(' => tokens.push(punct(TokKind::LParen)),
            ')' => tokens.push(punct(TokKind::RParen)),
            ',' => tokens.push(punct(TokKind::Comma)),
            ';' => tokens.push(punct(TokKind::Semi)),
            '=' => tokens.push(punct(TokKind::Eq)),
            '/' => tokens.push(punct(TokKind::Slash)),
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].1.is_ascii_alphanumeric() || bytes[j].1 == '_') {
                    j += 1;
                }
                let end = if j < bytes.len() { bytes[j].0 } else { text.len() };
                tokens.push(Token {
                    kind: TokKind::Ident,
                    start,
                    text: text[start..end].to_string(),
                    value: 0.0,
                });
                i = j;
                continue;
            }
            _ if c.is_ascii_digit()
                || ((c == '-' || c == '+' || c == '.') && next_starts_number(&bytes, i)) =>
            {
                let mut j = i;
                if bytes[j].1 == '-' || bytes[j].1 == '+' {
                    j += 1;
                }
                while j < bytes.len() && (bytes[j].1.is_ascii_digit() || bytes[j].1 == '.') {
                    j += 1;
                }
                // Exponent only when followed by a digit (optionally signed),
                // so "12s" and "3e" lex as number + ident.
                if j < bytes.len() && (bytes[j].1 == 'e' || bytes[j].1 == 'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k].1 == '-' || bytes[k].1 == '+') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].1.is_ascii_digit() {
                        j = k;
                        while j < bytes.len() && bytes[j].1.is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let end = if j < bytes.len() { bytes[j].0 } else { text.len() };
                let slice = &text[start..end];
                let value = slice.parse::<f64>().map_err(|_| PlanError::Syntax {
                    position: start,
                    expected: "a number".to_string(),
                    found: slice.to_string(),
                })?;
                tokens.push(Token {
                    kind: TokKind::Number,
                    start,
                    text: slice.to_string(),
                    value,
                });
                i = j;
                continue;
            }
            _ => {
                return Err(PlanError::Syntax {
                    position: start,
                    expected: "a statement, number, or punctuation".to_string(),
                    found: format!("character {c:?}"),
                })
            }
        }
        i += 1;
    }
    tokens.push(Token {
        kind: TokKind::Eof,
        start: text.len(),
        text: "end of input".to_string(),
        value: 0.0,
    });
    Ok(tokens)
}

fn next_starts_number(bytes: &[(usize, char)], i: usize) -> bool {
    let mut j = i;
    if bytes[j].1 == '-' || bytes[j].1 == '+' {
        j += 1;
    }
    if j < bytes.len() && bytes[j].1 == '.' {
        j += 1;
    }
    j < bytes.len() && bytes[j].1.is_ascii_digit()
}

/// Unit suffix attached to a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Meters,
    MetersPerSecond,
    Seconds,
    Degrees,
    Radians,
    DegreesPerSecond,
    RadiansPerSecond,
}

/// What dimension a quantity is expected to carry; bare numbers are read in
/// the canonical unit of the class (m, m/s, s, rad, rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Length,
    LinearSpeed,
    Time,
    Angle,
    AngularSpeed,
}

impl Dimension {
    fn convert(self, value: f64, unit: Option<Unit>, field: &str) -> Result<f64, PlanError> {
        let bad = |unit_name: &str, wanted: &str| {
            Err(PlanError::validation(
                field,
                format!("expected {wanted}, got unit {unit_name}"),
            ))
        };
        match (self, unit) {
            (_, None) => Ok(value),
            (Dimension::Length, Some(Unit::Meters)) => Ok(value),
            (Dimension::LinearSpeed, Some(Unit::MetersPerSecond)) => Ok(value),
            (Dimension::Time, Some(Unit::Seconds)) => Ok(value),
            (Dimension::Angle, Some(Unit::Radians)) => Ok(value),
            (Dimension::Angle, Some(Unit::Degrees)) => Ok(value * PI / 180.0),
            (Dimension::AngularSpeed, Some(Unit::RadiansPerSecond)) => Ok(value),
            (Dimension::AngularSpeed, Some(Unit::DegreesPerSecond)) => Ok(value * PI / 180.0),
            (Dimension::Length, Some(u)) => bad(unit_name(u), "a length in m"),
            (Dimension::LinearSpeed, Some(u)) => bad(unit_name(u), "a speed in m/s"),
            (Dimension::Time, Some(u)) => bad(unit_name(u), "a duration in s"),
            (Dimension::Angle, Some(u)) => bad(unit_name(u), "an angle in rad or deg"),
            (Dimension::AngularSpeed, Some(u)) => {
                bad(unit_name(u), "an angular speed in rad/s or deg/s")
            }
        }
    }
}

fn unit_name(u: Unit) -> &'static str {
    match u {
        Unit::Meters => "m",
        Unit::MetersPerSecond => "m/s",
        Unit::Seconds => "s",
        Unit::Degrees => "deg",
        Unit::Radians => "rad",
        Unit::DegreesPerSecond => "deg/s",
        Unit::RadiansPerSecond => "rad/s",
    }
}

#[derive(Debug, Clone)]
enum RawValue {
    Quantity { value: f64, unit: Option<Unit> },
    Word(String),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let tok = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, kind: TokKind, expected: &str) -> Result<Token, PlanError> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            Err(self.error_here(expected))
        }
    }

    fn error_here(&self, expected: &str) -> PlanError {
        let tok = self.peek();
        PlanError::Syntax {
            position: tok.start,
            expected: expected.to_string(),
            found: tok.text.clone(),
        }
    }

    fn plan(&mut self) -> Result<ShotPlan, PlanError> {
        let mut target: Option<[f64; 3]> = None;
        let mut blend: Option<f64> = None;
        let mut segments: Vec<Segment> = Vec::new();

        loop {
            if self.peek().kind == TokKind::Eof {
                break;
            }
            let tok = self.expect(
                TokKind::Ident,
                "a statement keyword (target, blend, orbit, dolly, pan_orbit, reveal, hold)",
            )?;
            match tok.text.as_str() {
                "target" => {
                    if target.is_some() {
                        return Err(PlanError::validation("target", "specified more than once"));
                    }
                    target = Some(self.target_args()?);
                }
                "blend" => {
                    if blend.is_some() {
                        return Err(PlanError::validation(
                            "blend_duration",
                            "specified more than once",
                        ));
                    }
                    blend = Some(self.blend_args()?);
                }
                "orbit" | "dolly" | "pan_orbit" | "reveal" | "hold" => {
                    segments.push(self.segment(&tok.text)?);
                }
                other => {
                    return Err(PlanError::Syntax {
                        position: tok.start,
                        expected:
                            "a statement keyword (target, blend, orbit, dolly, pan_orbit, reveal, hold)"
                                .to_string(),
                        found: other.to_string(),
                    })
                }
            }
            match self.peek().kind {
                TokKind::Semi => {
                    self.bump();
                }
                TokKind::Eof => break,
                _ => return Err(self.error_here("`;` or end of input")),
            }
        }

        let target = target.ok_or_else(|| {
            PlanError::validation("target", "missing required target(x, y, z) statement")
        })?;
        if segments.is_empty() {
            return Err(PlanError::validation("segments", "plan has no segments"));
        }
        let blend_duration = blend.unwrap_or_else(|| {
            let shortest = segments
                .iter()
                .map(|s| s.duration)
                .fold(f64::INFINITY, f64::min);
            // Default window, capped so the join invariant holds for short
            // segments.
            DEFAULT_BLEND_SECONDS.min((shortest / 2.0).max(0.0))
        });
        Ok(ShotPlan {
            target,
            blend_duration,
            segments,
        })
    }

    fn target_args(&mut self) -> Result<[f64; 3], PlanError> {
        self.expect(TokKind::LParen, "`(`")?;
        let x = self.quantity(Dimension::Length, "target.x")?;
        self.expect(TokKind::Comma, "`,`")?;
        let y = self.quantity(Dimension::Length, "target.y")?;
        self.expect(TokKind::Comma, "`,`")?;
        let z = self.quantity(Dimension::Length, "target.z")?;
        self.expect(TokKind::RParen, "`)`")?;
        Ok([x, y, z])
    }

    fn blend_args(&mut self) -> Result<f64, PlanError> {
        self.expect(TokKind::LParen, "`(`")?;
        let d = self.quantity(Dimension::Time, "blend_duration")?;
        self.expect(TokKind::RParen, "`)`")?;
        Ok(d)
    }

    fn segment(&mut self, keyword: &str) -> Result<Segment, PlanError> {
        let args = if self.peek().kind == TokKind::LParen {
            self.key_values()?
        } else {
            Vec::new()
        };
        let primitive = build_primitive(keyword, args)?;
        let for_tok = self.expect(TokKind::Ident, "`for <duration>`")?;
        if for_tok.text != "for" {
            return Err(PlanError::Syntax {
                position: for_tok.start,
                expected: "`for <duration>`".to_string(),
                found: for_tok.text,
            });
        }
        let duration = self.quantity(Dimension::Time, &format!("{keyword} duration"))?;
        Ok(Segment {
            primitive,
            duration,
        })
    }

    fn key_values(&mut self) -> Result<Vec<(String, RawValue)>, PlanError> {
        self.expect(TokKind::LParen, "`(`")?;
        let mut entries = Vec::new();
        if self.peek().kind == TokKind::RParen {
            self.bump();
            return Ok(entries);
        }
        loop {
            let key = self.expect(TokKind::Ident, "a parameter name")?;
            self.expect(TokKind::Eq, "`=`")?;
            let value = match self.peek().kind {
                TokKind::Number => {
                    let num = self.bump();
                    let unit = self.maybe_unit()?;
                    RawValue::Quantity {
                        value: num.value,
                        unit,
                    }
                }
                TokKind::Ident => RawValue::Word(self.bump().text),
                _ => return Err(self.error_here("a value (number or word)")),
            };
            entries.push((key.text, value));
            match self.peek().kind {
                TokKind::Comma => {
                    self.bump();
                }
                TokKind::RParen => {
                    self.bump();
                    break;
                }
                _ => return Err(self.error_here("`,` or `)`")),
            }
        }
        Ok(entries)
    }

    fn maybe_unit(&mut self) -> Result<Option<Unit>, PlanError> {
        if self.peek().kind != TokKind::Ident {
            return Ok(None);
        }
        let first = self.bump();
        let per_second = if self.peek().kind == TokKind::Slash {
            self.bump();
            let denom = self.expect(TokKind::Ident, "`s` after `/`")?;
            if denom.text != "s" {
                return Err(PlanError::Syntax {
                    position: denom.start,
                    expected: "`s` after `/`".to_string(),
                    found: denom.text,
                });
            }
            true
        } else {
            false
        };
        let unit = match (first.text.as_str(), per_second) {
            ("m", false) => Unit::Meters,
            ("m", true) => Unit::MetersPerSecond,
            ("s", false) => Unit::Seconds,
            ("deg", false) => Unit::Degrees,
            ("deg", true) => Unit::DegreesPerSecond,
            ("rad", false) => Unit::Radians,
            ("rad", true) => Unit::RadiansPerSecond,
            _ => {
                return Err(PlanError::Syntax {
                    position: first.start,
                    expected: "a unit (m, m/s, s, deg, rad, deg/s, rad/s)".to_string(),
                    found: first.text,
                })
            }
        };
        Ok(Some(unit))
    }

    fn quantity(&mut self, dim: Dimension, field: &str) -> Result<f64, PlanError> {
        let num = self.expect(TokKind::Number, "a number")?;
        let unit = self.maybe_unit()?;
        dim.convert(num.value, unit, field)
    }
}

struct Args {
    primitive: &'static str,
    entries: Vec<(String, RawValue)>,
}

impl Args {
    fn take(&mut self, key: &str) -> Result<Option<RawValue>, PlanError> {
        let mut found = None;
        let mut remaining = Vec::with_capacity(self.entries.len());
        for (k, v) in self.entries.drain(..) {
            if k == key {
                if found.is_some() {
                    return Err(PlanError::validation(
                        &format!("{}.{key}", self.primitive),
                        "specified more than once",
                    ));
                }
                found = Some(v);
            } else {
                remaining.push((k, v));
            }
        }
        self.entries = remaining;
        Ok(found)
    }

    fn required(&mut self, key: &str, dim: Dimension) -> Result<f64, PlanError> {
        let field = format!("{}.{key}", self.primitive);
        match self.take(key)? {
            Some(RawValue::Quantity { value, unit }) => dim.convert(value, unit, &field),
            Some(RawValue::Word(w)) => Err(PlanError::validation(
                &field,
                format!("expected a number, got `{w}`"),
            )),
            None => Err(PlanError::validation(&field, "missing required parameter")),
        }
    }

    fn optional(&mut self, key: &str, dim: Dimension, default: f64) -> Result<f64, PlanError> {
        let field = format!("{}.{key}", self.primitive);
        match self.take(key)? {
            Some(RawValue::Quantity { value, unit }) => dim.convert(value, unit, &field),
            Some(RawValue::Word(w)) => Err(PlanError::validation(
                &field,
                format!("expected a number, got `{w}`"),
            )),
            None => Ok(default),
        }
    }

    fn direction(&mut self, key: &str) -> Result<Direction, PlanError> {
        let field = format!("{}.{key}", self.primitive);
        match self.take(key)? {
            Some(RawValue::Word(w)) => match w.as_str() {
                "cw" => Ok(Direction::Cw),
                "ccw" => Ok(Direction::Ccw),
                other => Err(PlanError::validation(
                    &field,
                    format!("expected `cw` or `ccw`, got `{other}`"),
                )),
            },
            Some(RawValue::Quantity { .. }) => Err(PlanError::validation(
                &field,
                "expected `cw` or `ccw`, got a number",
            )),
            None => Err(PlanError::validation(&field, "missing required parameter")),
        }
    }

    fn finish(self) -> Result<(), PlanError> {
        if let Some((key, _)) = self.entries.first() {
            return Err(PlanError::validation(
                &format!("{}.{key}", self.primitive),
                "unknown parameter",
            ));
        }
        Ok(())
    }
}

fn build_primitive(
    keyword: &str,
    entries: Vec<(String, RawValue)>,
) -> Result<Primitive, PlanError> {
    let mut args = Args {
        primitive: match keyword {
            "orbit" => "orbit",
            "dolly" => "dolly",
            "pan_orbit" => "pan_orbit",
            "reveal" => "reveal",
            _ => "hold",
        },
        entries,
    };
    let primitive = match keyword {
        "orbit" => Primitive::Orbit {
            radius: args.required("radius", Dimension::Length)?,
            angular_speed: args.required("speed", Dimension::AngularSpeed)?,
            direction: args.direction("dir")?,
            climb_rate: args.optional("climb", Dimension::LinearSpeed, 0.0)?,
        },
        "dolly" => Primitive::DollyToward {
            speed: args.required("speed", Dimension::LinearSpeed)?,
            stop_distance: args.optional("stop", Dimension::Length, super::MIN_STOP_DISTANCE)?,
        },
        "pan_orbit" => Primitive::PanOrbit {
            radius: args.required("radius", Dimension::Length)?,
            angular_speed: args.required("speed", Dimension::AngularSpeed)?,
            direction: args.direction("dir")?,
            pan_offset: args.optional("pan", Dimension::Angle, 0.0)?,
        },
        "reveal" => Primitive::Reveal {
            retreat_speed: args.required("speed", Dimension::LinearSpeed)?,
            climb_rate: args.optional("climb", Dimension::LinearSpeed, 0.0)?,
        },
        _ => Primitive::Hold,
    };
    args.finish()?;
    Ok(primitive)
}
