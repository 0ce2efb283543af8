//! Line-oriented scenario description language.
//!
//! ```text
//! # comment (a `#` that starts a token; inside a name it introduces a tag)
//! version 1
//! scenario mach_zehnder
//! description "free text"
//! mode A                      # path[.H|.V][#tag]
//! mode B
//! bs A B r=0.5                # optional convention=symmetric|rotation
//! phase B pi/3
//! mirror B
//! pbs A B
//! swmirror B on into=L
//! tag B theta=pi/2
//! identity A
//! segment armA A cut=1
//! detector D1 A
//! input : A
//! postselect D1 : (A + i*B)/sqrt(2)
//! analysis weakvalue detector=D1 segments=armA
//! ```
//!
//! Ports in element, segment and detector statements are mode selectors:
//! `A` covers every polarization and tag on path A. Mode references inside
//! state expressions must name a single declared mode. Input and
//! postselection states are normalized after evaluation. Detectors without a
//! `postselect` line default to the basis state of their (single) mode.
//!
//! Expressions support numbers, `pi`, `i`, `+ - * / ^`, unary minus and
//! `sqrt`, `sin`, `cos`, `exp`. Real operands are combined with real
//! arithmetic so that e.g. `-pi/2` is bit-for-bit `-FRAC_PI_2`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::circuit::{mode_postselections, BsConvention, Circuit, Element, Port, Scenario, Segment};
use crate::error::Error as CrateError;
use crate::hilbert::{Basis, ModeLabel, StateVector, C64};

pub const DSL_VERSION: u32 = 1;

/// Names that cannot be used as mode or port names.
pub const RESERVED: [&str; 8] = ["pi", "i", "sqrt", "sin", "cos", "exp", "on", "off"];

/// Analysis names; the CLI subcommand of the same name uses `-` for `_`.
pub const ANALYSIS_KINDS: [&str; 5] = ["weakvalue", "trace_map", "pointer_sweep", "ensemble", "fringe_sweep"];

const WORD_KEYS: [&str; 2] = ["detector", "property"];
const LIST_KEYS: [&str; 1] = ["segments"];
const NUMBER_KEYS: [&str; 8] = ["cut", "lambda", "lambda_min", "lambda_max", "points", "sigma", "n", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

/// A node with its source position. Positions do not take part in equality.
#[derive(Debug, Clone)]
pub struct Spanned<T> {
    pub node: T,
    pub span: Span,
}

impl<T> Spanned<T> {
    pub fn new(node: T, span: Span) -> Self {
        Self { node, span }
    }
}

impl<T: PartialEq> PartialEq for Spanned<T> {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct DslError {
    pub line: usize,
    pub col: usize,
    pub kind: DslErrorKind,
}

impl DslError {
    fn at(span: Span, kind: DslErrorKind) -> Self {
        Self {
            line: span.line,
            col: span.col,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown statement `{0}`")]
    UnknownStatement(String),
    #[error("unknown element kind `{0}`")]
    UnknownElement(String),
    #[error("`{element}` takes {expected} port(s), found {found}")]
    Arity {
        element: String,
        expected: usize,
        found: usize,
    },
    #[error("`{statement}` does not accept key `{key}`")]
    UnknownKey { statement: String, key: String },
    #[error("key `{0}` given twice")]
    DuplicateKey(String),
    #[error("`{statement}` requires key `{key}`")]
    MissingKey { statement: String, key: String },
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-unitary `{element}`: {detail}")]
    NonUnitary { element: String, detail: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("{0}")]
    Invalid(String),
}

// ---------------------------------------------------------------- AST

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }
}

/// Expression tree. Literals are nonnegative; negation is explicit.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Pi,
    I,
    Mode(ModeLabel),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerStmt {
    Bs {
        a: Port,
        b: Port,
        r: Expr,
        convention: Option<BsConvention>,
    },
    Phase {
        port: Port,
        angle: Expr,
    },
    Mirror {
        port: Port,
    },
    Pbs {
        a: Port,
        b: Port,
    },
    Swmirror {
        port: Port,
        on: bool,
        into: Port,
    },
    Tag {
        port: Port,
        theta: Expr,
    },
    Identity {
        port: Port,
    },
}

impl LayerStmt {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerStmt::Bs { .. } => "bs",
            LayerStmt::Phase { .. } => "phase",
            LayerStmt::Mirror { .. } => "mirror",
            LayerStmt::Pbs { .. } => "pbs",
            LayerStmt::Swmirror { .. } => "swmirror",
            LayerStmt::Tag { .. } => "tag",
            LayerStmt::Identity { .. } => "identity",
        }
    }
}

const ELEMENT_KINDS: [&str; 7] = ["bs", "phase", "mirror", "pbs", "swmirror", "tag", "identity"];

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStmt {
    pub name: String,
    pub port: Port,
    pub cut: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorStmt {
    pub name: String,
    pub port: Port,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostselectStmt {
    pub detector: String,
    pub state: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Word(String),
    Words(Vec<String>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisStmt {
    pub kind: String,
    pub params: Vec<(String, ParamValue)>,
}

impl AnalysisStmt {
    fn get(&self, key: &str) -> Option<&ParamValue> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn word(&self, key: &str) -> Option<&str> {
        match self.get(key) {
            Some(ParamValue::Word(w)) => Some(w),
            _ => None,
        }
    }

    pub fn words(&self, key: &str) -> Option<&[String]> {
        match self.get(key) {
            Some(ParamValue::Words(w)) => Some(w),
            _ => None,
        }
    }

    pub fn real(&self, key: &str) -> Result<Option<f64>, DslError> {
        match self.get(key) {
            Some(ParamValue::Expr(e)) => eval_real(e).map(Some).map_err(|k| DslError::at(Span::default(), k)),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDocument {
    pub version: u32,
    pub name: Option<String>,
    pub description: Option<String>,
    pub modes: Vec<Spanned<ModeLabel>>,
    pub layers: Vec<Spanned<LayerStmt>>,
    pub segments: Vec<Spanned<SegmentStmt>>,
    pub detectors: Vec<Spanned<DetectorStmt>>,
    pub input: Option<Spanned<Expr>>,
    pub postselections: Vec<Spanned<PostselectStmt>>,
    pub analyses: Vec<Spanned<AnalysisStmt>>,
}

impl Default for ScenarioDocument {
    fn default() -> Self {
        Self {
            version: DSL_VERSION,
            name: None,
            description: None,
            modes: vec![],
            layers: vec![],
            segments: vec![],
            detectors: vec![],
            input: None,
            postselections: vec![],
            analyses: vec![],
        }
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Colon,
    Eq,
    Comma,
    Newline,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Str(_) => f.write_str("string"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Caret => f.write_str("`^`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Newline => f.write_str("end of line"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '#')
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Eq),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, span });
            i += 1;
            col += 1;
            continue;
        }
        match c {
            '\n' => {
                out.push(Token { tok: Tok::Newline, span });
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    let Some(&c) = chars.get(i) else {
                        return Err(DslError::at(span, DslErrorKind::Syntax("unterminated string".into())));
                    };
                    i += 1;
                    col += 1;
                    match c {
                        '"' => break,
                        '\n' => {
                            return Err(DslError::at(span, DslErrorKind::Syntax("unterminated string".into())))
                        }
                        '\\' => {
                            let esc = chars.get(i).copied();
                            i += 1;
                            col += 1;
                            s.push(match esc {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                other => {
                                    return Err(DslError::at(
                                        Span { line, col: col - 2 },
                                        DslErrorKind::Syntax(format!("bad escape `\\{}`", other.unwrap_or(' '))),
                                    ))
                                }
                            });
                        }
                        c => s.push(c),
                    }
                }
                out.push(Token { tok: Tok::Str(s), span });
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()) {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if matches!(chars.get(i), Some('e' | 'E')) {
                    let mut j = i + 1;
                    if matches!(chars.get(j), Some('+' | '-')) {
                        j += 1;
                    }
                    if chars.get(j).is_some_and(|c| c.is_ascii_digit()) {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                if chars.get(i).is_some_and(|c| is_ident_continue(*c)) {
                    return Err(DslError::at(
                        Span { line, col: col + (i - start) },
                        DslErrorKind::Syntax("malformed number".into()),
                    ));
                }
                let s: String = chars[start..i].iter().collect();
                let x: f64 = s
                    .parse()
                    .map_err(|_| DslError::at(span, DslErrorKind::Syntax(format!("bad number `{s}`"))))?;
                out.push(Token { tok: Tok::Num(x), span });
                col += i - start;
            }
            c if is_ident_start(c) => {
                let start = i;
                while i < chars.len() && is_ident_continue(chars[i]) {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Token { tok: Tok::Ident(s), span });
                col += i - start;
            }
            other => {
                return Err(DslError::at(span, DslErrorKind::Syntax(format!("unexpected character `{other}`"))));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, DslError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(DslError::at(self.span(), DslErrorKind::Syntax(msg.into())))
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.syntax(format!("expected {wanted}, found {}", self.peek()))
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.unexpected(wanted)
        }
    }

    fn end_of_statement(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => self.unexpected("end of line"),
        }
    }

    fn ident(&mut self, wanted: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.span();
                self.bump();
                Ok((s, span))
            }
            _ => self.unexpected(wanted),
        }
    }

    fn name(&mut self, wanted: &str) -> PResult<String> {
        let (s, span) = self.ident(wanted)?;
        if s.contains(['.', '#']) || RESERVED.contains(&s.as_str()) {
            return Err(DslError::at(span, DslErrorKind::Syntax(format!("`{s}` is not a valid name"))));
        }
        Ok(s)
    }

    fn integer(&mut self, wanted: &str) -> PResult<u64> {
        match *self.peek() {
            Tok::Num(x) if x.fract() == 0.0 && x >= 0.0 && x < u64::MAX as f64 => {
                self.bump();
                Ok(x as u64)
            }
            _ => self.unexpected(wanted),
        }
    }

    /// Consecutive port-like identifiers (not followed by `=`, not reserved).
    fn ports(&mut self) -> PResult<Vec<(Port, Span)>> {
        let mut out = vec![];
        while let Tok::Ident(s) = self.peek().clone() {
            if *self.peek_at(1) == Tok::Eq || RESERVED.contains(&s.as_str()) {
                break;
            }
            let span = self.span();
            self.bump();
            out.push((parse_port(&s, span)?, span));
        }
        Ok(out)
    }

    fn keys(
        &mut self,
        statement: &str,
        allowed: &[&str],
        mut value: impl FnMut(&mut Self, &str) -> PResult<ParamValue>,
    ) -> PResult<Vec<(String, ParamValue)>> {
        let mut out: Vec<(String, ParamValue)> = vec![];
        while let Tok::Ident(key) = self.peek().clone() {
            let span = self.span();
            if *self.peek_at(1) != Tok::Eq {
                break;
            }
            if !allowed.contains(&key.as_str()) {
                return Err(DslError::at(
                    span,
                    DslErrorKind::UnknownKey {
                        statement: statement.into(),
                        key,
                    },
                ));
            }
            if out.iter().any(|(k, _)| *k == key) {
                return Err(DslError::at(span, DslErrorKind::DuplicateKey(key)));
            }
            self.bump();
            self.bump();
            let v = value(self, &key)?;
            out.push((key, v));
        }
        if let Tok::Ident(s) = self.peek().clone() {
            return Err(DslError::at(
                self.span(),
                DslErrorKind::Syntax(format!("expected `key=value` in `{statement}`, found `{s}`")),
            ));
        }
        Ok(out)
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Number(x))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(s) => {
                let span = self.span();
                self.bump();
                match s.as_str() {
                    "pi" => Ok(Expr::Pi),
                    "i" => Ok(Expr::I),
                    _ => {
                        if let Some(f) = Func::from_name(&s) {
                            self.expect(Tok::LParen, &format!("`(` after `{s}`"))?;
                            let arg = self.expr()?;
                            self.expect(Tok::RParen, "`)`")?;
                            Ok(Expr::Call(f, Box::new(arg)))
                        } else {
                            Ok(Expr::Mode(parse_mode(&s, span)?))
                        }
                    }
                }
            }
            _ => self.unexpected("an expression"),
        }
    }

    fn layer(&mut self, kind: &str, span: Span) -> PResult<LayerStmt> {
        let arity = |found: usize, expected: usize| -> PResult<()> {
            if found == expected {
                Ok(())
            } else {
                Err(DslError::at(
                    span,
                    DslErrorKind::Arity {
                        element: kind.into(),
                        expected,
                        found,
                    },
                ))
            }
        };
        let missing = |key: &str| {
            DslError::at(
                span,
                DslErrorKind::MissingKey {
                    statement: kind.into(),
                    key: key.into(),
                },
            )
        };
        let ports = self.ports()?;
        let mut ports_iter = ports.iter().map(|(p, _)| p.clone());
        let mut next_port = || ports_iter.next().expect("arity checked");
        let layer = match kind {
            "bs" => {
                arity(ports.len(), 2)?;
                let keys = self.keys(kind, &["r", "convention"], |p, key| match key {
                    "convention" => {
                        let (w, s) = p.ident("a convention")?;
                        match w.as_str() {
                            "symmetric" | "rotation" => Ok(ParamValue::Word(w)),
                            _ => Err(DslError::at(
                                s,
                                DslErrorKind::Syntax(format!("convention must be symmetric or rotation, not `{w}`")),
                            )),
                        }
                    }
                    _ => Ok(ParamValue::Expr(p.expr()?)),
                })?;
                let mut r = None;
                let mut convention = None;
                for (k, v) in keys {
                    match (k.as_str(), v) {
                        ("r", ParamValue::Expr(e)) => r = Some(e),
                        ("convention", ParamValue::Word(w)) => {
                            convention = Some(if w == "rotation" {
                                BsConvention::Rotation
                            } else {
                                BsConvention::Symmetric
                            })
                        }
                        _ => unreachable!("value kinds fixed by key"),
                    }
                }
                LayerStmt::Bs {
                    a: next_port(),
                    b: next_port(),
                    r: r.ok_or_else(|| missing("r"))?,
                    convention,
                }
            }
            "pbs" => {
                arity(ports.len(), 2)?;
                self.keys(kind, &[], |_, _| unreachable!())?;
                LayerStmt::Pbs {
                    a: next_port(),
                    b: next_port(),
                }
            }
            "phase" => {
                arity(ports.len(), 1)?;
                if matches!(self.peek(), Tok::Newline | Tok::Eof) {
                    return self.unexpected("a phase angle");
                }
                LayerStmt::Phase {
                    port: next_port(),
                    angle: self.expr()?,
                }
            }
            "mirror" | "identity" => {
                arity(ports.len(), 1)?;
                self.keys(kind, &[], |_, _| unreachable!())?;
                let port = next_port();
                if kind == "mirror" {
                    LayerStmt::Mirror { port }
                } else {
                    LayerStmt::Identity { port }
                }
            }
            "tag" => {
                arity(ports.len(), 1)?;
                let keys = self.keys(kind, &["theta"], |p, _| Ok(ParamValue::Expr(p.expr()?)))?;
                let theta = keys.into_iter().find_map(|(_, v)| match v {
                    ParamValue::Expr(e) => Some(e),
                    _ => None,
                });
                LayerStmt::Tag {
                    port: next_port(),
                    theta: theta.ok_or_else(|| missing("theta"))?,
                }
            }
            "swmirror" => {
                arity(ports.len(), 1)?;
                let on = match self.peek() {
                    Tok::Ident(s) if s == "on" => true,
                    Tok::Ident(s) if s == "off" => false,
                    _ => return self.unexpected("`on` or `off`"),
                };
                self.bump();
                let keys = self.keys(kind, &["into"], |p, _| {
                    let (s, span) = p.ident("a port")?;
                    parse_port(&s, span)?;
                    Ok(ParamValue::Word(s))
                })?;
                let into = keys.into_iter().find_map(|(_, v)| match v {
                    ParamValue::Word(w) => w.parse::<Port>().ok(),
                    _ => None,
                });
                LayerStmt::Swmirror {
                    port: next_port(),
                    on,
                    into: into.ok_or_else(|| missing("into"))?,
                }
            }
            _ => unreachable!("caller checks element kinds"),
        };
        Ok(layer)
    }

    fn analysis(&mut self) -> PResult<AnalysisStmt> {
        let (kind, span) = self.ident("an analysis kind")?;
        if !ANALYSIS_KINDS.contains(&kind.as_str()) {
            return Err(DslError::at(span, DslErrorKind::Invalid(format!("unknown analysis `{kind}`"))));
        }
        let allowed: Vec<&str> = WORD_KEYS.iter().chain(&LIST_KEYS).chain(&NUMBER_KEYS).copied().collect();
        let params = self.keys("analysis", &allowed, |p, key| {
            if WORD_KEYS.contains(&key) {
                Ok(ParamValue::Word(p.ident("a name")?.0))
            } else if LIST_KEYS.contains(&key) {
                let mut words = vec![p.ident("a name")?.0];
                while *p.peek() == Tok::Comma {
                    p.bump();
                    words.push(p.ident("a name")?.0);
                }
                Ok(ParamValue::Words(words))
            } else {
                Ok(ParamValue::Expr(p.expr()?))
            }
        })?;
        Ok(AnalysisStmt { kind, params })
    }

    fn document(&mut self) -> PResult<ScenarioDocument> {
        let mut doc = ScenarioDocument::default();
        let mut seen_version = false;
        loop {
            while *self.peek() == Tok::Newline {
                self.bump();
            }
            if *self.peek() == Tok::Eof {
                break;
            }
            let (kw, span) = self.ident("a statement keyword")?;
            match kw.as_str() {
                "version" => {
                    if seen_version {
                        return Err(DslError::at(span, DslErrorKind::Syntax("version given twice".into())));
                    }
                    seen_version = true;
                    let v = self.integer("a version number")?;
                    if v != DSL_VERSION as u64 {
                        return Err(DslError::at(span, DslErrorKind::Invalid(format!("unsupported version {v}"))));
                    }
                    doc.version = v as u32;
                }
                "scenario" => {
                    if doc.name.is_some() {
                        return Err(DslError::at(span, DslErrorKind::Syntax("scenario name given twice".into())));
                    }
                    doc.name = Some(self.name("a scenario name")?);
                }
                "description" => {
                    let Tok::Str(s) = self.peek().clone() else {
                        return self.unexpected("a quoted description");
                    };
                    self.bump();
                    if doc.description.is_some() {
                        return Err(DslError::at(span, DslErrorKind::Syntax("description given twice".into())));
                    }
                    doc.description = Some(s);
                }
                "mode" => {
                    let (s, mspan) = self.ident("a mode")?;
                    let m = parse_mode(&s, mspan)?;
                    if matches!(self.peek(), Tok::Ident(_)) {
                        return Err(DslError::at(
                            span,
                            DslErrorKind::Arity {
                                element: "mode".into(),
                                expected: 1,
                                found: 1 + self.ports()?.len(),
                            },
                        ));
                    }
                    doc.modes.push(Spanned::new(m, span));
                }
                "segment" => {
                    let name = self.name("a segment name")?;
                    let (s, pspan) = self.ident("a port")?;
                    let port = parse_port(&s, pspan)?;
                    let keys = self.keys("segment", &["cut"], |p, _| Ok(ParamValue::Expr(Expr::Number(p.integer("a cut index")? as f64))))?;
                    let cut = keys.into_iter().find_map(|(_, v)| match v {
                        ParamValue::Expr(Expr::Number(x)) => Some(x as usize),
                        _ => None,
                    });
                    let cut = cut.ok_or_else(|| {
                        DslError::at(
                            span,
                            DslErrorKind::MissingKey {
                                statement: "segment".into(),
                                key: "cut".into(),
                            },
                        )
                    })?;
                    doc.segments.push(Spanned::new(SegmentStmt { name, port, cut }, span));
                }
                "detector" => {
                    let name = self.name("a detector name")?;
                    let (s, pspan) = self.ident("a port")?;
                    let port = parse_port(&s, pspan)?;
                    doc.detectors.push(Spanned::new(DetectorStmt { name, port }, span));
                }
                "input" => {
                    self.expect(Tok::Colon, "`:`")?;
                    let e = self.expr()?;
                    if doc.input.is_some() {
                        return Err(DslError::at(span, DslErrorKind::Syntax("input given twice".into())));
                    }
                    doc.input = Some(Spanned::new(e, span));
                }
                "postselect" => {
                    let detector = self.name("a detector name")?;
                    self.expect(Tok::Colon, "`:`")?;
                    let state = self.expr()?;
                    doc.postselections.push(Spanned::new(PostselectStmt { detector, state }, span));
                }
                "analysis" => {
                    let a = self.analysis()?;
                    doc.analyses.push(Spanned::new(a, span));
                }
                k if ELEMENT_KINDS.contains(&k) => {
                    let l = self.layer(k, span)?;
                    doc.layers.push(Spanned::new(l, span));
                }
                other => {
                    return Err(DslError::at(span, DslErrorKind::UnknownElement(other.into())));
                }
            }
            self.end_of_statement()?;
        }
        if doc.modes.is_empty() {
            return Err(DslError::at(
                Span { line: 1, col: 1 },
                DslErrorKind::Syntax("empty scenario: expected at least one `mode` declaration".into()),
            ));
        }
        Ok(doc)
    }
}

fn parse_mode(s: &str, span: Span) -> PResult<ModeLabel> {
    let m: ModeLabel = s
        .parse()
        .map_err(|e: CrateError| DslError::at(span, DslErrorKind::Syntax(e.to_string())))?;
    if m.path.is_empty() || RESERVED.contains(&m.path.as_str()) {
        return Err(DslError::at(span, DslErrorKind::Syntax(format!("`{s}` is not a valid mode"))));
    }
    Ok(m)
}

fn parse_port(s: &str, span: Span) -> PResult<Port> {
    Ok(Port::from(&parse_mode(s, span)?))
}

/// Parses scenario text into a document without building it.
pub fn parse_scenario(text: &str) -> Result<ScenarioDocument, DslError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.document()
}

// ---------------------------------------------------------------- printer

// f64 Display never uses exponents and round-trips exactly.
fn fmt_number(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(x) => f.write_str(&fmt_number(*x)),
            Expr::Pi => f.write_str("pi"),
            Expr::I => f.write_str("i"),
            Expr::Mode(m) => write!(f, "{m}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

impl fmt::Display for LayerStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerStmt::Bs { a, b, r, convention } => {
                write!(f, "bs {a} {b} r={r}")?;
                if let Some(c) = convention {
                    write!(f, " convention={c}")?;
                }
                Ok(())
            }
            LayerStmt::Phase { port, angle } => write!(f, "phase {port} {angle}"),
            LayerStmt::Mirror { port } => write!(f, "mirror {port}"),
            LayerStmt::Pbs { a, b } => write!(f, "pbs {a} {b}"),
            LayerStmt::Swmirror { port, on, into } => {
                write!(f, "swmirror {port} {} into={into}", if *on { "on" } else { "off" })
            }
            LayerStmt::Tag { port, theta } => write!(f, "tag {port} theta={theta}"),
            LayerStmt::Identity { port } => write!(f, "identity {port}"),
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical text of a document; `parse_scenario(&print_scenario(d)) == d`.
pub fn print_scenario(doc: &ScenarioDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "version {}", doc.version);
    if let Some(n) = &doc.name {
        let _ = writeln!(s, "scenario {n}");
    }
    if let Some(d) = &doc.description {
        let _ = writeln!(s, "description {}", quote(d));
    }
    for m in &doc.modes {
        let _ = writeln!(s, "mode {}", m.node);
    }
    for l in &doc.layers {
        let _ = writeln!(s, "{}", l.node);
    }
    for g in &doc.segments {
        let _ = writeln!(s, "segment {} {} cut={}", g.node.name, g.node.port, g.node.cut);
    }
    for d in &doc.detectors {
        let _ = writeln!(s, "detector {} {}", d.node.name, d.node.port);
    }
    if let Some(i) = &doc.input {
        let _ = writeln!(s, "input : {}", i.node);
    }
    for p in &doc.postselections {
        let _ = writeln!(s, "postselect {} : {}", p.node.detector, p.node.state);
    }
    for a in &doc.analyses {
        let _ = write!(s, "analysis {}", a.node.kind);
        for (k, v) in &a.node.params {
            let _ = match v {
                ParamValue::Word(w) => write!(s, " {k}={w}"),
                ParamValue::Words(ws) => write!(s, " {k}={}", ws.join(",")),
                ParamValue::Expr(e) => write!(s, " {k}={e}"),
            };
        }
        s.push('\n');
    }
    s
}

impl fmt::Display for ScenarioDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_scenario(self))
    }
}

// ---------------------------------------------------------------- evaluation

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(C64),
    Vector(BTreeMap<ModeLabel, C64>),
}

fn is_real(c: C64) -> bool {
    c.im == 0.0
}

/// Multiplication that stays in real arithmetic when either factor is real.
fn mul(a: C64, b: C64) -> C64 {
    match (is_real(a), is_real(b)) {
        (true, true) => C64::new(a.re * b.re, 0.0),
        (true, false) => C64::new(a.re * b.re, a.re * b.im),
        (false, true) => C64::new(a.re * b.re, a.im * b.re),
        _ => a * b,
    }
}

fn div(a: C64, b: C64) -> C64 {
    if is_real(b) {
        C64::new(a.re / b.re, if is_real(a) { 0.0 } else { a.im / b.re })
    } else {
        a / b
    }
}

fn pow(a: C64, b: C64) -> C64 {
    if is_real(a) && is_real(b) {
        let (x, y) = (a.re, b.re);
        if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
            return C64::new(x.powi(y as i32), 0.0);
        }
        if x >= 0.0 {
            return C64::new(x.powf(y), 0.0);
        }
    }
    a.powc(b)
}

fn call(f: Func, a: C64) -> C64 {
    if is_real(a) {
        let x = a.re;
        match f {
            Func::Sqrt if x < 0.0 => C64::new(0.0, (-x).sqrt()),
            Func::Sqrt => C64::new(x.sqrt(), 0.0),
            Func::Sin => C64::new(x.sin(), 0.0),
            Func::Cos => C64::new(x.cos(), 0.0),
            Func::Exp => C64::new(x.exp(), 0.0),
        }
    } else {
        match f {
            Func::Sqrt => a.sqrt(),
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Exp => a.exp(),
        }
    }
}

fn eval(e: &Expr, basis: Option<&Basis>) -> Result<Value, DslErrorKind> {
    use Value::{Scalar, Vector};
    Ok(match e {
        Expr::Number(x) => Scalar(C64::new(*x, 0.0)),
        Expr::Pi => Scalar(C64::new(std::f64::consts::PI, 0.0)),
        Expr::I => Scalar(C64::new(0.0, 1.0)),
        Expr::Mode(m) => {
            let Some(b) = basis else {
                return Err(DslErrorKind::Type(format!("mode `{m}` used where a number is expected")));
            };
            if !b.contains(m) {
                return Err(DslErrorKind::UnknownMode(m.to_string()));
            }
            Vector(BTreeMap::from([(m.clone(), C64::new(1.0, 0.0))]))
        }
        Expr::Neg(x) => match eval(x, basis)? {
            Scalar(c) => Scalar(-c),
            Vector(v) => Vector(v.into_iter().map(|(k, c)| (k, -c)).collect()),
        },
        Expr::Call(f, x) => match eval(x, basis)? {
            Scalar(c) => Scalar(call(*f, c)),
            Vector(_) => return Err(DslErrorKind::Type(format!("`{}` needs a number", f.name()))),
        },
        Expr::Binary(op, l, r) => {
            let (l, r) = (eval(l, basis)?, eval(r, basis)?);
            match (op, l, r) {
                (BinOp::Add, Scalar(a), Scalar(b)) => Scalar(a + b),
                (BinOp::Sub, Scalar(a), Scalar(b)) => Scalar(a - b),
                (BinOp::Mul, Scalar(a), Scalar(b)) => Scalar(mul(a, b)),
                (BinOp::Div, Scalar(a), Scalar(b)) => Scalar(div(a, b)),
                (BinOp::Pow, Scalar(a), Scalar(b)) => Scalar(pow(a, b)),
                (BinOp::Add | BinOp::Sub, Vector(mut a), Vector(b)) => {
                    for (k, c) in b {
                        let c = if *op == BinOp::Sub { -c } else { c };
                        a.entry(k).and_modify(|x| *x += c).or_insert(c);
                    }
                    Vector(a)
                }
                (BinOp::Mul, Scalar(s), Vector(v)) | (BinOp::Mul, Vector(v), Scalar(s)) => {
                    Vector(v.into_iter().map(|(k, c)| (k, mul(s, c))).collect())
                }
                (BinOp::Div, Vector(v), Scalar(s)) => Vector(v.into_iter().map(|(k, c)| (k, div(c, s))).collect()),
                (op, _, _) => {
                    return Err(DslErrorKind::Type(format!(
                        "`{}` cannot combine these operands (states only add, subtract and scale)",
                        op.symbol()
                    )))
                }
            }
        }
    })
}

fn eval_real(e: &Expr) -> Result<f64, DslErrorKind> {
    match eval(e, None)? {
        Value::Scalar(c) if is_real(c) && c.re.is_finite() => Ok(c.re),
        Value::Scalar(c) => Err(DslErrorKind::Type(format!("expected a finite real number, got {c}"))),
        Value::Vector(_) => unreachable!("no basis given"),
    }
}

fn eval_state(e: &Expr, basis: &Basis, what: &str) -> Result<StateVector, DslErrorKind> {
    let Value::Vector(v) = eval(e, Some(basis))? else {
        return Err(DslErrorKind::Type(format!("{what} must be a state, not a number")));
    };
    let amps = basis
        .labels()
        .iter()
        .map(|l| v.get(l).copied().unwrap_or_default())
        .collect();
    let s = StateVector::new(basis.clone(), amps).map_err(|e| DslErrorKind::Invalid(e.to_string()))?;
    if !(s.norm() > 0.0 && s.norm().is_finite()) {
        return Err(DslErrorKind::Invalid(format!("{what} has zero or non-finite norm")));
    }
    s.normalized().map_err(|e| DslErrorKind::Invalid(e.to_string()))
}

fn build_error(element: &str, e: CrateError) -> DslErrorKind {
    match e {
        CrateError::NotUnitary(d) => DslErrorKind::NonUnitary {
            element: element.into(),
            detail: format!("deviation {d:.3e}"),
        },
        CrateError::InvalidParameter(msg) if element == "bs" => DslErrorKind::NonUnitary {
            element: element.into(),
            detail: msg,
        },
        CrateError::BasisMismatch(msg) => DslErrorKind::DimensionMismatch(msg),
        CrateError::DimensionOverflow(n) => DslErrorKind::DimensionMismatch(format!("dimension {n} exceeds 2^20")),
        other => DslErrorKind::Invalid(other.to_string()),
    }
}

impl ScenarioDocument {
    pub fn analysis(&self, kind: &str) -> Option<&AnalysisStmt> {
        self.analyses.iter().map(|a| &a.node).find(|a| a.kind == kind)
    }

    fn element(&self, l: &Spanned<LayerStmt>) -> Result<Element, DslError> {
        let real = |e: &Expr| eval_real(e).map_err(|k| DslError::at(l.span, k));
        Ok(match &l.node {
            LayerStmt::Bs { a, b, r, convention } => Element::BeamSplitter {
                a: a.clone(),
                b: b.clone(),
                reflectivity: real(r)?,
                convention: convention.unwrap_or(BsConvention::Symmetric),
            },
            LayerStmt::Phase { port, angle } => Element::PhaseShift {
                port: port.clone(),
                angle: real(angle)?,
            },
            LayerStmt::Mirror { port } => Element::Mirror { port: port.clone() },
            LayerStmt::Pbs { a, b } => Element::PolarizingBs {
                a: a.clone(),
                b: b.clone(),
            },
            LayerStmt::Swmirror { port, on, into } => Element::SwitchableMirror {
                port: port.clone(),
                into: into.clone(),
                on: *on,
            },
            LayerStmt::Tag { port, theta } => Element::Tag {
                port: port.clone(),
                theta: real(theta)?,
            },
            LayerStmt::Identity { port } => Element::Identity { port: port.clone() },
        })
    }

    /// Builds the scenario, reporting failures at the offending statement.
    pub fn build(&self) -> Result<Scenario, DslError> {
        let origin = Span { line: 1, col: 1 };
        let mut seen = BTreeSet::new();
        for m in &self.modes {
            if !seen.insert(&m.node) {
                return Err(DslError::at(m.span, DslErrorKind::Invalid(format!("mode `{}` declared twice", m.node))));
            }
        }
        let basis = Basis::new(self.modes.iter().map(|m| m.node.clone()))
            .map_err(|e| DslError::at(origin, build_error("mode", e)))?;

        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let e = self.element(l)?;
            e.unitary(&basis)
                .map_err(|err| DslError::at(l.span, build_error(l.node.kind_name(), err)))?;
            layers.push(e);
        }

        let n = layers.len();
        let mut segments = Vec::with_capacity(self.segments.len());
        for g in &self.segments {
            let s = &g.node;
            if s.cut > n {
                return Err(DslError::at(
                    g.span,
                    DslErrorKind::Invalid(format!("segment `{}` cut {} beyond {n} layers", s.name, s.cut)),
                ));
            }
            if s.port.modes(&basis).is_empty() {
                return Err(DslError::at(g.span, DslErrorKind::UnknownMode(s.port.to_string())));
            }
            if segments.iter().any(|o: &Segment| o.name == s.name) {
                return Err(DslError::at(g.span, DslErrorKind::Invalid(format!("segment `{}` declared twice", s.name))));
            }
            segments.push(Segment {
                name: s.name.clone(),
                cut: s.cut,
                port: s.port.clone(),
            });
        }

        let mut detectors = BTreeMap::new();
        for d in &self.detectors {
            if d.node.port.modes(&basis).is_empty() {
                return Err(DslError::at(d.span, DslErrorKind::UnknownMode(d.node.port.to_string())));
            }
            if detectors.insert(d.node.name.clone(), d.node.port.clone()).is_some() {
                return Err(DslError::at(
                    d.span,
                    DslErrorKind::Invalid(format!("detector `{}` declared twice", d.node.name)),
                ));
            }
        }

        let circuit = Circuit::new(basis.clone(), layers, segments, detectors.clone())
            .map_err(|e| DslError::at(origin, build_error("circuit", e)))?;

        let input = self.input.as_ref().ok_or_else(|| {
            DslError::at(origin, DslErrorKind::Syntax("missing `input : <state>` statement".into()))
        })?;
        let input = eval_state(&input.node, &basis, "input").map_err(|k| DslError::at(input.span, k))?;

        let mut explicit = BTreeMap::new();
        for p in &self.postselections {
            if !detectors.contains_key(&p.node.detector) {
                return Err(DslError::at(
                    p.span,
                    DslErrorKind::Invalid(format!("postselection for unknown detector `{}`", p.node.detector)),
                ));
            }
            let s = eval_state(&p.node.state, &basis, "postselection").map_err(|k| DslError::at(p.span, k))?;
            if explicit.insert(p.node.detector.clone(), s).is_some() {
                return Err(DslError::at(
                    p.span,
                    DslErrorKind::Invalid(format!("detector `{}` postselected twice", p.node.detector)),
                ));
            }
        }
        let implicit: BTreeMap<String, Port> = detectors
            .iter()
            .filter(|(d, _)| !explicit.contains_key(*d))
            .map(|(d, p)| (d.clone(), p.clone()))
            .collect();
        let mut postselections = mode_postselections(&basis, &implicit).map_err(|e| {
            let span = self
                .detectors
                .iter()
                .find(|d| implicit.contains_key(&d.node.name) && d.node.port.modes(&basis).len() != 1)
                .map_or(origin, |d| d.span);
            DslError::at(span, build_error("detector", e))
        })?;
        postselections.extend(explicit);

        Scenario::new(
            self.name.clone().unwrap_or_else(|| "scenario".into()),
            circuit,
            input,
            postselections,
            self.description.clone().unwrap_or_default(),
        )
        .map_err(|e| DslError::at(origin, build_error("scenario", e)))
    }
}

/// Parses and builds in one step.
pub fn load_scenario(text: &str) -> Result<(ScenarioDocument, Scenario), DslError> {
    let doc = parse_scenario(text)?;
    let sc = doc.build()?;
    Ok((doc, sc))
}
