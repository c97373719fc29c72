//! Fixed-length genomes, the tacit pipeline interpreter, and the text form of
//! pipelines.
//!
//! Grammar of the native text form (whitespace insignificant):
//!
//! ```text
//! program := "pipeline" "(" [call ("," call)*] ")"
//! call    := ident "(" [literal ("," literal)*] ")"
//! literal := number | ident | "true" | "false"
//! ```
//!
//! Identity slots are never written; parsing pads the tail with identities.

use std::fmt::{self, Write as _};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{
    apply_block, random_instance, write_param, BlockError, BlockId, BlockInstance, ParamKind,
    ParamValue,
};
use crate::image::{GrayImage, Plane};
use crate::scalar::Scalar;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{line}:{column}: {source}")]
    Block {
        line: usize,
        column: usize,
        source: BlockError,
    },
    #[error("pipeline has {count} blocks but the maximum length is {max}")]
    TooLong { count: usize, max: usize },
    #[error("genome length must be at least 1")]
    EmptyGenome,
    #[error("genome lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// A pipeline of exactly `L` block slots; identity slots are padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    slots: Vec<BlockInstance>,
}

impl Genome {
    pub fn new(slots: Vec<BlockInstance>) -> Result<Self, DslError> {
        if slots.is_empty() {
            return Err(DslError::EmptyGenome);
        }
        Ok(Self { slots })
    }

    /// `len` identity slots.
    pub fn identity(len: usize) -> Self {
        assert!(len >= 1, "genome length must be at least 1");
        Self {
            slots: vec![BlockInstance::identity(); len],
        }
    }

    /// Places `blocks` first and pads with identities up to `len`.
    pub fn padded(blocks: Vec<BlockInstance>, len: usize) -> Result<Self, DslError> {
        if blocks.len() > len {
            return Err(DslError::TooLong {
                count: blocks.len(),
                max: len,
            });
        }
        let mut slots = blocks;
        slots.resize(len.max(1), BlockInstance::identity());
        Self::new(slots)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    /// Always false; genomes hold at least one slot.
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[BlockInstance] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [BlockInstance] {
        &mut self.slots
    }

    /// Number of non-identity slots.
    pub fn effective_length(&self) -> usize {
        self.active().count()
    }

    /// Non-identity slots in execution order.
    pub fn active(&self) -> impl Iterator<Item = &BlockInstance> {
        self.slots.iter().filter(|b| !b.is_identity())
    }

    /// Same pipeline with identity slots moved to the tail.
    pub fn compacted(&self) -> Self {
        Self::padded(self.active().cloned().collect(), self.len()).expect("same length")
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_code(self, Dialect::Native))
    }
}

/// Applies every slot left to right; each output feeds the next block.
pub fn run_pipeline<T: Scalar>(g: &Genome, img: &Plane<T>) -> Plane<T> {
    let mut active = g.active();
    let Some(first) = active.next() else {
        return img.clone();
    };
    let mut cur = apply_block(first, img);
    for b in active {
        cur = apply_block(b, &cur);
    }
    cur
}

/// 8-bit in, 8-bit out, using the default working scalar.
pub fn run_pipeline_gray(g: &Genome, img: &GrayImage) -> GrayImage {
    if g.effective_length() == 0 {
        return img.clone();
    }
    run_pipeline(g, &img.to_plane::<Real>()).to_gray()
}

/// Quantized output after each non-identity block.
pub fn run_pipeline_stages(g: &Genome, img: &GrayImage) -> Vec<(BlockInstance, GrayImage)> {
    let mut cur = img.to_plane::<Real>();
    g.active()
        .map(|b| {
            cur = apply_block(b, &cur);
            (b.clone(), cur.to_gray())
        })
        .collect()
}

pub fn effective_length(g: &Genome) -> usize {
    g.effective_length()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// Block ids, parseable by [`parse_code`].
    Native,
    /// `Blocks.<matlab name>(...)` calls with quoted enums; output only.
    MatlabLike,
}

/// Renders the non-identity slots of `g` as program text.
pub fn emit_code(g: &Genome, dialect: Dialect) -> String {
    let mut out = String::from("pipeline(");
    for (i, b) in g.active().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match dialect {
            Dialect::Native => out.push_str(b.id().name()),
            Dialect::MatlabLike => {
                out.push_str("Blocks.");
                out.push_str(b.id().matlab_name());
            }
        }
        out.push('(');
        for (j, (v, spec)) in b.params().iter().zip(b.id().spec().params).enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            write_param(&mut out, *v, spec, dialect == Dialect::MatlabLike)
                .expect("writing to a String cannot fail");
        }
        out.push(')');
    }
    out.push(')');
    out
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Number(s) => write!(f, "number `{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> DslError {
        DslError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    /// Next token with its starting position.
    fn next(&mut self) -> Result<(Tok, usize, usize), DslError> {
        while self.chars.peek().is_some_and(|c| c.is_whitespace()) {
            self.bump();
        }
        let (line, column) = (self.line, self.column);
        let Some(&c) = self.chars.peek() else {
            return Ok((Tok::End, line, column));
        };
        let tok = match c {
            '(' => {
                self.bump();
                Tok::LParen
            }
            ')' => {
                self.bump();
                Tok::RParen
            }
            ',' => {
                self.bump();
                Tok::Comma
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(s)
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    let sign_after_exp =
                        (c == '-' || c == '+') && (s.is_empty() || s.ends_with(['e', 'E']));
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || sign_after_exp {
                        s.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                if s.parse::<f64>().is_err() {
                    return Err(self.error(line, column, format!("malformed number `{s}`")));
                }
                Tok::Number(s)
            }
            other => {
                return Err(self.error(line, column, format!("unexpected character `{other}`")));
            }
        };
        Ok((tok, line, column))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    line: usize,
    column: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Result<Self, DslError> {
        let mut lex = Lexer::new(text);
        let (tok, line, column) = lex.next()?;
        Ok(Self {
            lex,
            tok,
            line,
            column,
        })
    }

    fn advance(&mut self) -> Result<Tok, DslError> {
        let (tok, line, column) = self.lex.next()?;
        self.line = line;
        self.column = column;
        Ok(std::mem::replace(&mut self.tok, tok))
    }

    fn unexpected(&self, wanted: &str) -> DslError {
        DslError::Syntax {
            line: self.line,
            column: self.column,
            message: format!("expected {wanted}, found {}", self.tok),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<(), DslError> {
        if self.tok == want {
            self.advance()?;
            Ok(())
        } else {
            Err(self.unexpected(&want.to_string()))
        }
    }

    fn program(&mut self) -> Result<Vec<BlockInstance>, DslError> {
        match &self.tok {
            Tok::Ident(s) if s == "pipeline" => {
                self.advance()?;
            }
            _ => return Err(self.unexpected("`pipeline`")),
        }
        self.expect(Tok::LParen)?;
        let mut calls = Vec::new();
        if self.tok != Tok::RParen {
            calls.push(self.call()?);
            while self.tok == Tok::Comma {
                self.advance()?;
                calls.push(self.call()?);
            }
        }
        self.expect(Tok::RParen)?;
        if self.tok != Tok::End {
            return Err(self.unexpected("end of input"));
        }
        Ok(calls)
    }

    fn call(&mut self) -> Result<BlockInstance, DslError> {
        let (line, column) = (self.line, self.column);
        let block_err = |source| DslError::Block {
            line,
            column,
            source,
        };
        let name = match &self.tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("block name")),
        };
        let id = BlockId::from_name(&name).map_err(block_err)?;
        self.advance()?;
        self.expect(Tok::LParen)?;
        let specs = id.spec().params;
        let mut values = Vec::new();
        if self.tok != Tok::RParen {
            loop {
                let (pl, pc) = (self.line, self.column);
                let lit = self.advance()?;
                let value = match specs.get(values.len()) {
                    Some(spec) => literal_value(id, spec.name, spec.kind, &lit)
                        .map_err(|e| locate(e, pl, pc))?,
                    // arity error reported after the full argument list is read
                    None => ParamValue::Bool(false),
                };
                values.push(value);
                if self.tok == Tok::Comma {
                    self.advance()?;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        BlockInstance::new(id, values).map_err(block_err)
    }
}

fn locate(e: DslError, line: usize, column: usize) -> DslError {
    match e {
        DslError::Syntax { message, .. } => DslError::Syntax {
            line,
            column,
            message,
        },
        DslError::Block { source, .. } => DslError::Block {
            line,
            column,
            source,
        },
        other => other,
    }
}

/// Interprets one literal token according to the parameter kind.
fn literal_value(
    block: BlockId,
    param: &'static str,
    kind: ParamKind,
    lit: &Tok,
) -> Result<ParamValue, DslError> {
    let type_err = |expected: &'static str| DslError::Block {
        line: 0,
        column: 0,
        source: BlockError::Type {
            block,
            param,
            expected,
            got: lit.to_string(),
        },
    };
    match (kind, lit) {
        (ParamKind::Real { .. }, Tok::Number(s)) => {
            Ok(ParamValue::Real(s.parse().map_err(|_| type_err("real"))?))
        }
        (ParamKind::Integer { .. } | ParamKind::OddInteger { .. }, Tok::Number(s)) => s
            .parse::<i64>()
            .map(ParamValue::Int)
            .map_err(|_| type_err("integer")),
        (ParamKind::Boolean, Tok::Ident(s)) if s == "true" => Ok(ParamValue::Bool(true)),
        (ParamKind::Boolean, Tok::Ident(s)) if s == "false" => Ok(ParamValue::Bool(false)),
        (ParamKind::Enum { choices }, Tok::Ident(s)) => choices
            .iter()
            .position(|c| c == s)
            .map(ParamValue::Choice)
            .ok_or_else(|| type_err("one of the declared choices")),
        (ParamKind::Real { .. }, _) => Err(type_err("real")),
        (ParamKind::Integer { .. } | ParamKind::OddInteger { .. }, _) => Err(type_err("integer")),
        (ParamKind::Boolean, _) => Err(type_err("true or false")),
        (ParamKind::Enum { .. }, Tok::End | Tok::LParen | Tok::RParen | Tok::Comma) => {
            Err(type_err("enum name"))
        }
        (ParamKind::Enum { .. }, Tok::Number(_)) => Err(type_err("enum name")),
    }
}

/// Parses native program text into a genome of length `len`, identity-padded at the tail.
pub fn parse_code(text: &str, len: usize) -> Result<Genome, DslError> {
    if len == 0 {
        return Err(DslError::EmptyGenome);
    }
    let calls = Parser::new(text)?.program()?;
    Genome::padded(calls, len)
}

/// Parses native program text into its calls, identities included.
pub fn parse_blocks(text: &str) -> Result<Vec<BlockInstance>, DslError> {
    Parser::new(text)?.program()
}

/// Parses a program into a genome just long enough to hold it (at least one slot).
pub fn parse_pipeline(text: &str) -> Result<Genome, DslError> {
    let calls = parse_blocks(text)?;
    let len = calls.len().max(1);
    Genome::padded(calls, len)
}

/// Each slot draws its block uniformly from the full library, then random parameters.
pub fn random_genome<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Genome {
    assert!(len >= 1, "genome length must be at least 1");
    let slots = (0..len)
        .map(|_| {
            let id = BlockId::ALL[rng.random_range(0..BlockId::ALL.len())];
            random_instance(id, rng)
        })
        .collect();
    Genome { slots }
}

/// Child slot `i` is `a`'s or `b`'s slot `i`, chosen by `take_a[i]`.
pub(crate) fn splice(a: &Genome, b: &Genome, take_a: &[bool]) -> Result<Genome, DslError> {
    if a.len() != b.len() {
        return Err(DslError::LengthMismatch(a.len(), b.len()));
    }
    let slots = a
        .slots
        .iter()
        .zip(&b.slots)
        .zip(take_a)
        .map(|((x, y), &pick_a)| if pick_a { x.clone() } else { y.clone() })
        .collect();
    Ok(Genome { slots })
}

/// A five-block restoration pipeline used as a fixed benchmark and emission example.
pub fn reference_pipeline() -> Genome {
    let text = "pipeline(contrast_stretch(), adaptive_hist_eq(15, 21), \
                local_brighten(0.63579, false), unsharp_mask(37.3409, 1.363, 0.28738), \
                median_filter(5, 7, zeros))";
    parse_code(text, 5).expect("reference pipeline is valid")
}

/// Human-readable listing of a genome, one block per line.
pub fn describe(g: &Genome, dialect: Dialect) -> String {
    let mut out = String::new();
    for (i, b) in g.active().enumerate() {
        let name = match dialect {
            Dialect::Native => b.id().name(),
            Dialect::MatlabLike => b.id().matlab_name(),
        };
        let _ = write!(out, "{}. {name}(", i + 1);
        for (j, (v, spec)) in b.params().iter().zip(b.id().spec().params).enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            let _ = write_param(&mut out, *v, spec, false);
        }
        out.push_str(")\n");
    }
    out
}
