//! The `.devs` model language.
//!
//! ```text
//! atomic Police {
//!     outputs toAuto, toManual;
//!     states BREAK(120), WORKING(360);
//!     init (BREAK, 0);
//!     int BREAK -> WORKING out toManual;
//!     int WORKING -> BREAK out toAuto;
//! }
//!
//! coupled System {
//!     outputs toManual;
//!     instance police1 : Police init (BREAK, 71.5);
//!     connect police1.toManual -> self.toManual;
//!     select [police1];
//! }
//! ```
//!
//! Times are decimals, `p/q` rationals or `inf`, and are normalised to
//! reduced rationals. `#` starts a line comment. An instance may override
//! the initial total state of the model it instantiates.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use indexmap::IndexSet;
use thiserror::Error;

use crate::formalism::{AtomicSpec, CoupledSpec, Diagnostic, Endpoint, EventLabel, Model, StateName, TotalState};
use crate::time::{parse_rational, Rational, TimeValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error("duplicate {0}")]
    DuplicateName(String),
    #[error("unknown model `{0}`")]
    UnknownReference(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(pos: Pos, kind: ParseErrorKind) -> Self {
        Self {
            line: pos.line,
            column: pos.column,
            kind,
        }
    }

    fn syntax(pos: Pos, msg: impl Into<String>) -> Self {
        Self::new(pos, ParseErrorKind::Syntax(msg.into()))
    }

    pub fn code(&self) -> &'static str {
        match self.kind {
            ParseErrorKind::Syntax(_) => "syntax-error",
            ParseErrorKind::DuplicateName(_) => "duplicate-name",
            ParseErrorKind::UnknownReference(_) => "unknown-reference",
        }
    }
}

/// A parsed model file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelDocument {
    pub definitions: Vec<Definition>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Definition {
    Atomic(AtomicSpec),
    Coupled(CoupledDef),
}

impl Definition {
    pub fn name(&self) -> &str {
        match self {
            Definition::Atomic(a) => &a.name,
            Definition::Coupled(c) => &c.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoupledDef {
    pub name: String,
    pub inputs: IndexSet<EventLabel>,
    pub outputs: IndexSet<EventLabel>,
    pub instances: Vec<Instance>,
    pub connections: Vec<Connection>,
    pub select: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub label: String,
    pub model: String,
    pub init: Option<TotalState>,
}

/// `connect from.event -> to.target;`, one entry of `Z_{from,to}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connection {
    pub from: Endpoint,
    pub event: EventLabel,
    pub to: Endpoint,
    pub target: EventLabel,
}

impl ModelDocument {
    pub fn get(&self, name: &str) -> Option<&Definition> {
        self.definitions.iter().find(|d| d.name() == name)
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(String),
    Sym(char),
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Number(s) => write!(f, "`{s}`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut pos = Pos { line: 1, column: 1 };
    let advance = |c: char, pos: &mut Pos| {
        if c == '\n' {
            pos.line += 1;
            pos.column = 1;
        } else {
            pos.column += 1;
        }
    };
    while let Some(&c) = chars.peek() {
        let start = pos;
        if c.is_whitespace() {
            chars.next();
            advance(c, &mut pos);
        } else if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                advance(c, &mut pos);
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek().filter(|c| c.is_ascii_alphanumeric() || **c == '_') {
                s.push(c);
                chars.next();
                advance(c, &mut pos);
            }
            out.push((Tok::Ident(s), start));
        } else if c.is_ascii_digit() || c == '-' {
            let mut s = String::new();
            chars.next();
            advance(c, &mut pos);
            if c == '-' {
                match chars.peek() {
                    Some('>') => {
                        chars.next();
                        advance('>', &mut pos);
                        out.push((Tok::Arrow, start));
                        continue;
                    }
                    Some(d) if d.is_ascii_digit() => {}
                    _ => return Err(ParseError::syntax(start, "expected `->` or a number after `-`")),
                }
            }
            s.push(c);
            let mut seen_dot = false;
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                } else if c == '.' && !seen_dot {
                    seen_dot = true;
                    s.push(c);
                } else {
                    break;
                }
                chars.next();
                advance(c, &mut pos);
            }
            if s.ends_with('.') {
                return Err(ParseError::syntax(start, format!("malformed number `{s}`")));
            }
            out.push((Tok::Number(s), start));
        } else if "{}()[],;:./".contains(c) {
            chars.next();
            advance(c, &mut pos);
            out.push((Tok::Sym(c), start));
        } else {
            return Err(ParseError::syntax(start, format!("unexpected character {c:?}")));
        }
    }
    out.push((Tok::Eof, pos));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<(Tok, Pos)>,
    idx: usize,
    /// Model references with their positions, checked after parsing.
    references: Vec<(String, Pos)>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.idx].0
    }

    fn pos(&self) -> Pos {
        self.tokens[self.idx].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.tokens[self.idx].clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        Err(ParseError::syntax(
            self.pos(),
            format!("expected {wanted}, found {}", self.peek()),
        ))
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> PResult<Pos> {
        if self.at_keyword(kw) {
            Ok(self.bump().1)
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn sym(&mut self, c: char) -> PResult<()> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("`{c}`"))
        }
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn arrow(&mut self) -> PResult<()> {
        if *self.peek() == Tok::Arrow {
            self.bump();
            Ok(())
        } else {
            self.unexpected("`->`")
        }
    }

    fn name(&mut self) -> PResult<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let pos = self.bump().1;
                Ok((s, pos))
            }
            _ => self.unexpected("a name"),
        }
    }

    /// `NAME ("," NAME)*` into a set, rejecting repeats.
    fn name_set(&mut self, what: &str) -> PResult<IndexSet<EventLabel>> {
        let mut set = IndexSet::new();
        loop {
            let (n, pos) = self.name()?;
            if !set.insert(EventLabel::new(n.clone())) {
                return Err(ParseError::new(
                    pos,
                    ParseErrorKind::DuplicateName(format!("{what} `{n}`")),
                ));
            }
            if !self.eat_sym(',') {
                return Ok(set);
            }
        }
    }

    /// `DECIMAL | INT "/" INT | "inf"`; a leading `-` is accepted here and
    /// rejected by the callers that need non-negative values.
    fn time(&mut self) -> PResult<(Option<Rational>, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if s == "inf" => {
                self.bump();
                Ok((None, pos))
            }
            Tok::Number(p) => {
                self.bump();
                let literal = if self.eat_sym('/') {
                    match self.bump() {
                        (Tok::Number(q), _) => format!("{p}/{q}"),
                        (other, at) => {
                            return Err(ParseError::syntax(at, format!("expected a denominator, found {other}")))
                        }
                    }
                } else {
                    p
                };
                parse_rational(&literal)
                    .map(|r| (Some(r), pos))
                    .map_err(|e| ParseError::syntax(pos, e.to_string()))
            }
            _ => self.unexpected("a time"),
        }
    }

    fn duration(&mut self) -> PResult<TimeValue> {
        match self.time()? {
            (None, _) => Ok(TimeValue::INFINITY),
            (Some(r), pos) => TimeValue::from_rational(r).map_err(|e| ParseError::syntax(pos, e.to_string())),
        }
    }

    /// `"(" NAME "," time ")"` with a finite, possibly negative elapsed time.
    fn total_state(&mut self) -> PResult<TotalState> {
        self.sym('(')?;
        let (state, _) = self.name()?;
        self.sym(',')?;
        let (elapsed, pos) = self.time()?;
        let elapsed = elapsed.ok_or_else(|| ParseError::syntax(pos, "initial elapsed time must be finite"))?;
        self.sym(')')?;
        Ok(TotalState {
            state: StateName::new(state),
            elapsed,
        })
    }

    fn alphabets(&mut self) -> PResult<(IndexSet<EventLabel>, IndexSet<EventLabel>)> {
        let mut inputs = IndexSet::new();
        let mut outputs = IndexSet::new();
        if self.at_keyword("inputs") {
            self.bump();
            inputs = self.name_set("input")?;
            self.sym(';')?;
        }
        if self.at_keyword("outputs") {
            self.bump();
            outputs = self.name_set("output")?;
            self.sym(';')?;
        }
        Ok((inputs, outputs))
    }

    fn atomic(&mut self) -> PResult<AtomicSpec> {
        let (name, _) = self.name()?;
        self.sym('{')?;
        let (inputs, outputs) = self.alphabets()?;
        self.keyword("states")?;
        let mut spec = AtomicSpec::new(name, TotalState::new("", Rational::default()));
        spec.inputs = inputs;
        spec.outputs = outputs;
        loop {
            let (state, pos) = self.name()?;
            self.sym('(')?;
            let ta = self.duration()?;
            self.sym(')')?;
            if spec.states.insert(StateName::new(state.clone()), ta).is_some() {
                return Err(ParseError::new(
                    pos,
                    ParseErrorKind::DuplicateName(format!("state `{state}`")),
                ));
            }
            if !self.eat_sym(',') {
                break;
            }
        }
        self.sym(';')?;
        self.keyword("init")?;
        spec.init = self.total_state()?;
        self.sym(';')?;
        loop {
            if self.at_keyword("int") {
                let pos = self.bump().1;
                let (from, _) = self.name()?;
                self.arrow()?;
                let (to, _) = self.name()?;
                let out = if self.at_keyword("out") {
                    self.bump();
                    Some(self.name()?.0)
                } else {
                    None
                };
                self.sym(';')?;
                if spec.internal.contains_key(from.as_str()) {
                    return Err(ParseError::new(
                        pos,
                        ParseErrorKind::DuplicateName(format!("internal transition for `{from}`")),
                    ));
                }
                spec = spec.with_internal(&from, &to, out.as_deref());
            } else if self.at_keyword("ext") {
                let pos = self.bump().1;
                let (from, _) = self.name()?;
                self.keyword("on")?;
                let (event, _) = self.name()?;
                self.arrow()?;
                let (to, _) = self.name()?;
                self.sym(';')?;
                let key = (StateName::new(from.clone()), EventLabel::new(event.clone()));
                if spec.external.contains_key(&key) {
                    return Err(ParseError::new(
                        pos,
                        ParseErrorKind::DuplicateName(format!("external transition for `{from}` on `{event}`")),
                    ));
                }
                spec.external.insert(key, StateName::new(to));
            } else {
                break;
            }
        }
        self.sym('}')?;
        Ok(spec)
    }

    fn endpoint(&mut self) -> PResult<(Endpoint, EventLabel)> {
        let (owner, _) = self.name()?;
        self.sym('.')?;
        let (event, _) = self.name()?;
        let end = if owner == "self" {
            Endpoint::Parent
        } else {
            Endpoint::Child(owner)
        };
        Ok((end, EventLabel::new(event)))
    }

    fn coupled(&mut self) -> PResult<CoupledDef> {
        let (name, _) = self.name()?;
        self.sym('{')?;
        let (inputs, outputs) = self.alphabets()?;
        let mut def = CoupledDef {
            name,
            inputs,
            outputs,
            ..CoupledDef::default()
        };
        let mut labels = HashSet::new();
        while self.at_keyword("instance") {
            self.bump();
            let (label, pos) = self.name()?;
            if label == "self" {
                return Err(ParseError::syntax(pos, "`self` cannot be used as an instance label"));
            }
            if !labels.insert(label.clone()) {
                return Err(ParseError::new(
                    pos,
                    ParseErrorKind::DuplicateName(format!("instance `{label}`")),
                ));
            }
            self.sym(':')?;
            let (model, model_pos) = self.name()?;
            self.references.push((model.clone(), model_pos));
            let init = if self.at_keyword("init") {
                self.bump();
                Some(self.total_state()?)
            } else {
                None
            };
            self.sym(';')?;
            def.instances.push(Instance { label, model, init });
        }
        let mut couplings = HashSet::new();
        while self.at_keyword("connect") {
            let pos = self.bump().1;
            let (from, event) = self.endpoint()?;
            self.arrow()?;
            let (to, mut target) = self.endpoint()?;
            if self.at_keyword("as") {
                self.bump();
                target = EventLabel::new(self.name()?.0);
            }
            self.sym(';')?;
            if !couplings.insert((from.clone(), event.clone(), to.clone())) {
                return Err(ParseError::new(
                    pos,
                    ParseErrorKind::DuplicateName(format!("coupling of `{from}.{event}` towards `{to}`")),
                ));
            }
            def.connections.push(Connection {
                from,
                event,
                to,
                target,
            });
        }
        self.keyword("select")?;
        self.sym('[')?;
        if !self.eat_sym(']') {
            loop {
                def.select.push(self.name()?.0);
                if !self.eat_sym(',') {
                    break;
                }
            }
            self.sym(']')?;
        }
        self.sym(';')?;
        self.sym('}')?;
        Ok(def)
    }

    fn document(&mut self) -> PResult<ModelDocument> {
        let mut doc = ModelDocument::default();
        let mut names = HashSet::new();
        loop {
            let pos = self.pos();
            let def = match self.peek() {
                Tok::Eof => break,
                Tok::Ident(k) if k == "atomic" => {
                    self.bump();
                    Definition::Atomic(self.atomic()?)
                }
                Tok::Ident(k) if k == "coupled" => {
                    self.bump();
                    Definition::Coupled(self.coupled()?)
                }
                _ => return self.unexpected("`atomic` or `coupled`"),
            };
            if !names.insert(def.name().to_string()) {
                return Err(ParseError::new(
                    pos,
                    ParseErrorKind::DuplicateName(format!("model `{}`", def.name())),
                ));
            }
            doc.definitions.push(def);
        }
        for (name, pos) in &self.references {
            if !names.contains(name) {
                return Err(ParseError::new(*pos, ParseErrorKind::UnknownReference(name.clone())));
            }
        }
        Ok(doc)
    }
}

/// Parses a whole document, stopping at the first error.
pub fn parse_model(text: &str) -> Result<ModelDocument, ParseError> {
    let tokens = lex(text)?;
    Parser {
        tokens,
        idx: 0,
        references: Vec::new(),
    }
    .document()
}

/// Like [`parse_model`], reporting invalid UTF-8 as a positioned error.
pub fn parse_model_bytes(bytes: &[u8]) -> Result<ModelDocument, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_model(text),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).expect("valid prefix");
            let line = valid.matches('\n').count() + 1;
            let column = valid.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            Err(ParseError::syntax(Pos { line, column }, "invalid UTF-8"))
        }
    }
}

// ---------------------------------------------------------------------------
// Serializer
// ---------------------------------------------------------------------------

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_alphabets(out: &mut String, inputs: &IndexSet<EventLabel>, outputs: &IndexSet<EventLabel>) {
    if !inputs.is_empty() {
        let _ = writeln!(out, "    inputs {};", join(inputs));
    }
    if !outputs.is_empty() {
        let _ = writeln!(out, "    outputs {};", join(outputs));
    }
}

fn write_atomic(out: &mut String, a: &AtomicSpec) {
    let _ = writeln!(out, "atomic {} {{", a.name);
    write_alphabets(out, &a.inputs, &a.outputs);
    let states = a.states.iter().map(|(s, ta)| format!("{s}({ta})"));
    let _ = writeln!(out, "    states {};", join(states));
    let _ = writeln!(out, "    init {};", a.init);
    for (from, to) in &a.internal {
        match a.output.get(from) {
            Some(y) => {
                let _ = writeln!(out, "    int {from} -> {to} out {y};");
            }
            None => {
                let _ = writeln!(out, "    int {from} -> {to};");
            }
        }
    }
    for ((from, x), to) in &a.external {
        let _ = writeln!(out, "    ext {from} on {x} -> {to};");
    }
    out.push_str("}\n");
}

fn write_coupled(out: &mut String, c: &CoupledDef) {
    let _ = writeln!(out, "coupled {} {{", c.name);
    write_alphabets(out, &c.inputs, &c.outputs);
    for inst in &c.instances {
        match &inst.init {
            Some(q) => {
                let _ = writeln!(out, "    instance {} : {} init {};", inst.label, inst.model, q);
            }
            None => {
                let _ = writeln!(out, "    instance {} : {};", inst.label, inst.model);
            }
        }
    }
    for conn in &c.connections {
        let _ = writeln!(
            out,
            "    connect {}.{} -> {}.{};",
            conn.from, conn.event, conn.to, conn.target
        );
    }
    let _ = writeln!(out, "    select [{}];", c.select.join(", "));
    out.push_str("}\n");
}

/// Canonical text. `parse_model(&serialize_model(d))` equals `d`.
pub fn serialize_model(doc: &ModelDocument) -> String {
    let mut out = String::new();
    for (i, def) in doc.definitions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match def {
            Definition::Atomic(a) => write_atomic(&mut out, a),
            Definition::Coupled(c) => write_coupled(&mut out, c),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown model `{0}`")]
    UnknownReference(String),
    #[error("model `{0}` contains itself")]
    Cyclic(String),
    #[error("instance `{0}` refers to a coupled model and cannot set an initial state")]
    CoupledInit(String),
    #[error("{} validation problem(s)", .0.len())]
    Invalid(Vec<Diagnostic>),
}

impl ResolveError {
    pub fn code(&self) -> &'static str {
        match self {
            ResolveError::UnknownReference(_) => "unknown-reference",
            ResolveError::Cyclic(_) => "cyclic-reference",
            ResolveError::CoupledInit(_) => "coupled-init",
            ResolveError::Invalid(_) => "invalid-model",
        }
    }
}

struct Resolver<'a> {
    doc: &'a ModelDocument,
    stack: Vec<&'a str>,
    coupled_cache: HashMap<&'a str, Arc<CoupledSpec>>,
}

impl<'a> Resolver<'a> {
    fn model(&mut self, name: &'a str, init: Option<&TotalState>) -> Result<Model, ResolveError> {
        let def = self
            .doc
            .get(name)
            .ok_or_else(|| ResolveError::UnknownReference(name.to_string()))?;
        match def {
            Definition::Atomic(a) => {
                let mut a = a.clone();
                if let Some(q) = init {
                    a.init = q.clone();
                }
                Ok(Model::Atomic(Arc::new(a)))
            }
            Definition::Coupled(c) => {
                if let Some(done) = self.coupled_cache.get(name) {
                    return Ok(Model::Coupled(done.clone()));
                }
                if self.stack.contains(&name) {
                    return Err(ResolveError::Cyclic(name.to_string()));
                }
                self.stack.push(name);
                let mut spec = CoupledSpec::new(c.name.clone());
                spec.inputs = c.inputs.clone();
                spec.outputs = c.outputs.clone();
                for inst in &c.instances {
                    if inst.init.is_some() && matches!(self.doc.get(&inst.model), Some(Definition::Coupled(_))) {
                        return Err(ResolveError::CoupledInit(inst.label.clone()));
                    }
                    let child = self.model(&inst.model, inst.init.as_ref())?;
                    spec.components.insert(inst.label.clone(), child);
                }
                for conn in &c.connections {
                    spec = spec.with_coupling(
                        conn.from.clone(),
                        conn.event.as_str(),
                        conn.to.clone(),
                        conn.target.as_str(),
                    );
                }
                spec.select = c.select.clone();
                self.stack.pop();
                let spec = Arc::new(spec);
                self.coupled_cache.insert(name, spec.clone());
                Ok(Model::Coupled(spec))
            }
        }
    }
}

/// Instantiates `root` with per-instance initial states applied and
/// validates the whole tree.
pub fn resolve(doc: &ModelDocument, root: &str) -> Result<Model, ResolveError> {
    let mut resolver = Resolver {
        doc,
        stack: Vec::new(),
        coupled_cache: HashMap::new(),
    };
    let model = resolver.model(root, None)?;
    let diagnostics = model.diagnostics();
    if diagnostics.is_empty() {
        Ok(model)
    } else {
        Err(ResolveError::Invalid(diagnostics))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formalism::fixtures;
    use crate::time::rat;
    use proptest::prelude::*;

    pub const TRAFFIC: &str = include_str!("../models/traffic_light.devs");

    #[test]
    fn parses_fixture() {
        let doc = parse_model(TRAFFIC).unwrap();
        let kinds: Vec<_> = doc
            .definitions
            .iter()
            .map(|d| matches!(d, Definition::Atomic(_)))
            .collect();
        assert_eq!(kinds, [true, true, false]);
        let model = resolve(&doc, "System").unwrap();
        let expected = Model::Coupled(Arc::new(fixtures::scenario_system()));
        assert_eq!(model, expected);
    }

    #[test]
    fn minimal_atomic() {
        let doc = parse_model("atomic A { states S0(inf); init (S0, 0); }").unwrap();
        let Definition::Atomic(a) = &doc.definitions[0] else {
            panic!()
        };
        assert_eq!(a.states.len(), 1);
        assert_eq!(a.ta("S0"), Some(&TimeValue::INFINITY));
        let text = serialize_model(&doc);
        assert_eq!(text, "atomic A {\n    states S0(inf);\n    init (S0, 0);\n}\n");
        assert_eq!(serialize_model(&parse_model(&text).unwrap()), text);
        assert!(matches!(resolve(&doc, "A"), Ok(Model::Atomic(_))));
    }

    #[test]
    fn invalid_init_parses_then_fails_validation() {
        let text = TRAFFIC.replace("init (GREEN, 10)", "init (YELLOW, 100)");
        let doc = parse_model(&text).unwrap();
        let ResolveError::Invalid(diags) = resolve(&doc, "System").unwrap_err() else {
            panic!("expected validation failure");
        };
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].path, "/light1");
        assert_eq!(diags[0].error.code(), "elapsed-exceeds-ta");
    }

    #[test]
    fn police_elapsed_beyond_break() {
        let text = TRAFFIC.replace("init (BREAK, 71.5)", "init (BREAK, 130)");
        let doc = parse_model(&text).unwrap();
        let ResolveError::Invalid(diags) = resolve(&doc, "System").unwrap_err() else {
            panic!("expected validation failure");
        };
        assert_eq!(diags[0].path, "/police1");
        assert_eq!(diags[0].error.code(), "elapsed-exceeds-ta");
    }

    #[test]
    fn unknown_root_and_cycles() {
        let doc = parse_model(TRAFFIC).unwrap();
        assert_eq!(
            resolve(&doc, "Nope").unwrap_err(),
            ResolveError::UnknownReference("Nope".into())
        );
        let doc = parse_model("coupled A { instance b : B; select [b]; }\ncoupled B { instance a : A; select [a]; }")
            .unwrap();
        assert!(matches!(resolve(&doc, "A"), Err(ResolveError::Cyclic(_))));
    }

    #[test]
    fn elapsed_serializes_as_rational() {
        let doc = parse_model(TRAFFIC).unwrap();
        let text = serialize_model(&doc);
        assert!(text.contains("instance police1 : Police init (BREAK, 143/2);"));
        assert_eq!(parse_model(&text).unwrap(), doc);
    }

    #[test]
    fn connect_as_renames_target() {
        let doc = parse_model(
            "atomic A { outputs y; states S(1); init (S, 0); int S -> S out y; }\n\
             atomic B { inputs u, v; states S(inf); init (S, 0); }\n\
             coupled C { instance a : A; instance b : B; connect a.y -> b.u as v; select [a, b]; }",
        )
        .unwrap();
        let Definition::Coupled(c) = &doc.definitions[2] else {
            panic!()
        };
        assert_eq!(c.connections[0].target, EventLabel::from("v"));
    }

    fn err(text: &str) -> ParseError {
        parse_model(text).unwrap_err()
    }

    #[test]
    fn error_positions_and_kinds() {
        let e = err("atomic A {\n  states S0(inf)\n  init (S0, 0); }");
        assert_eq!((e.line, e.column, e.code()), (3, 3, "syntax-error"));

        let e = err("atomic A { states S0(1), S0(2); init (S0, 0); }");
        assert_eq!(e.code(), "duplicate-name");

        let e = err("atomic A { states S0(inf); init (S0, 0); }\natomic A { states S0(inf); init (S0, 0); }");
        assert_eq!((e.line, e.code()), (2, "duplicate-name"));

        let e = err("coupled C {\n  instance x : Missing;\n  select [x]; }");
        assert_eq!((e.line, e.column, e.code()), (2, 16, "unknown-reference"));

        let e = err("atomic A { states S0(-1); init (S0, 0); }");
        assert_eq!(e.code(), "syntax-error");
        let e = err("atomic A { states S0(1/0); init (S0, 0); }");
        assert_eq!(e.code(), "syntax-error");
        let e = err("atomic A { states S0(1); init (S0, inf); int S0 -> S0; }");
        assert_eq!(e.code(), "syntax-error");
        let e = err("atomic A { states S0(1); init (S0, 0); int S0 -> S0; int S0 -> S0; }");
        assert_eq!(e.code(), "duplicate-name");
        let e = err("atomic A { states S0(1); init (S0, 0); } $");
        assert_eq!((e.line, e.column), (1, 42));
        let e = err("atomic A { states S0(1.); init (S0, 0); }");
        assert_eq!(e.code(), "syntax-error");
        let e = err("atomic A { inputs x, x; states S0(1); init (S0, 0); }");
        assert_eq!(e.code(), "duplicate-name");
    }

    #[test]
    fn negative_init_is_a_validation_error() {
        let doc = parse_model("atomic A { states S0(5); init (S0, -1/2); int S0 -> S0; }").unwrap();
        let Definition::Atomic(a) = &doc.definitions[0] else {
            panic!()
        };
        assert_eq!(a.init.elapsed, rat(-1, 2));
        let ResolveError::Invalid(d) = resolve(&doc, "A").unwrap_err() else {
            panic!()
        };
        assert_eq!(d[0].error.code(), "negative-elapsed");
        assert_eq!(d[0].path, "/");
        // the negative value survives a round trip
        assert_eq!(parse_model(&serialize_model(&doc)).unwrap(), doc);
    }

    #[test]
    fn invalid_utf8_has_position() {
        let e = parse_model_bytes(b"atomic A {\n  \xff }").unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
    }

    proptest! {
        #[test]
        fn arbitrary_text_never_panics(s in "\\PC*") {
            if let Err(e) = parse_model(&s) {
                prop_assert!(e.line >= 1 && e.column >= 1);
            }
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = parse_model_bytes(&bytes);
        }

        #[test]
        fn fixture_mutations_never_panic(cut in 0usize..2000, insert in "[{}();,.:/a-z0-9# \\-\\n>\\[\\]]{0,4}") {
            let mut text = TRAFFIC.to_string();
            let mut cut = cut.min(text.len());
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            text.insert_str(cut, &insert);
            if let Ok(doc) = parse_model(&text) {
                prop_assert_eq!(parse_model(&serialize_model(&doc)).unwrap(), doc);
            }
        }
    }
}
