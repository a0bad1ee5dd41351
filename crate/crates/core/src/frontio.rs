//! Parsers and serializers for every text format the engine reads or
//! writes: ontologies, graphs, rules, constraints, properties, generic
//! property templates, fact stores and process models. One shared
//! tokenizer; hand-written recursive descent; all problems surface as
//! ordered diagnostics rather than panics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::cgraph::{CgError, ConceptId, ConceptualGraph, Marker};
use crate::ingest::EnterpriseModel;
use crate::ontology::{ConceptLattice, Ontology, OntologyError, RelationLattice, UNIVERSAL};
use crate::propmodel::{
    CausalRelation, CmpOp, Coords, Domain, Expr, Fact, FactStore, GenericProperty, Perspective,
    Property, PropertyDef, RelationKind, Sense, TypeTag, Typology, Value,
};
use crate::reasoning::{
    Constraint, GraphRule, MandatoryPart, NegativeConstraint, PositiveConstraint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

/// One finding, pinned to a source location. Renders as
/// `file:line:col: severity[code]: message`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub file: String,
    pub line: usize,
    pub col: usize,
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(
            f,
            "{}:{}:{}: {}[{}]: {}",
            self.file, self.line, self.col, sev, self.code, self.message
        )
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| {
        (&a.file, a.line, a.col, &a.code)
            .cmp(&(&b.file, b.line, b.col, &b.code))
    });
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Real(f64),
    /// `*name` with no intervening space
    Coref(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    Star,
    DotDot,
    Pipe,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Real(r) => format!("`{r}`"),
            Tok::Coref(v) => format!("`*{v}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Star => "`*`".into(),
            Tok::DotDot => "`..`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    /// byte offset in the source
    start: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | '$')
}

fn lex(file: &str, src: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut toks = Vec::new();
    let mut diags = Vec::new();
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    // byte offset of each char index, for raw-text slicing
    let mut offsets = Vec::with_capacity(bytes.len() + 1);
    let mut off = 0;
    for c in &bytes {
        offsets.push(off);
        off += c.len_utf8();
    }
    offsets.push(off);
    macro_rules! push {
        ($tok:expr, $line:expr, $col:expr, $start:expr) => {
            toks.push(Token {
                tok: $tok,
                line: $line,
                col: $col,
                start: offsets[$start],
            })
        };
    }
    while i < bytes.len() {
        let c = bytes[i];
        let (tline, tcol, tstart) = (line, col, i);
        let advance = |i: &mut usize, line: &mut usize, col: &mut usize| {
            if bytes[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col);
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != '\n' {
                advance(&mut i, &mut line, &mut col);
            }
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col);
            let mut s = String::new();
            let mut closed = false;
            while i < bytes.len() {
                let ch = bytes[i];
                if ch == '"' {
                    advance(&mut i, &mut line, &mut col);
                    closed = true;
                    break;
                }
                if ch == '\\' && i + 1 < bytes.len() {
                    advance(&mut i, &mut line, &mut col);
                    let esc = bytes[i];
                    s.push(match esc {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                    advance(&mut i, &mut line, &mut col);
                    continue;
                }
                s.push(ch);
                advance(&mut i, &mut line, &mut col);
            }
            if !closed {
                diags.push(Diagnostic {
                    file: file.into(),
                    line: tline,
                    col: tcol,
                    severity: Severity::Error,
                    code: "unterminated-string".into(),
                    message: "string literal is not closed".into(),
                });
            }
            push!(Tok::Str(s), tline, tcol, tstart);
            continue;
        }
        if is_ident_start(c) {
            let mut s = String::new();
            while i < bytes.len() && is_ident_char(bytes[i]) {
                s.push(bytes[i]);
                advance(&mut i, &mut line, &mut col);
            }
            push!(Tok::Ident(s), tline, tcol, tstart);
            continue;
        }
        let minus_number = c == '-' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit();
        if c.is_ascii_digit() || minus_number {
            let mut s = String::new();
            if minus_number {
                s.push('-');
                advance(&mut i, &mut line, &mut col);
            }
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                s.push(bytes[i]);
                advance(&mut i, &mut line, &mut col);
            }
            let mut real = false;
            if i + 1 < bytes.len() && bytes[i] == '.' && bytes[i + 1].is_ascii_digit() {
                real = true;
                s.push('.');
                advance(&mut i, &mut line, &mut col);
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    s.push(bytes[i]);
                    advance(&mut i, &mut line, &mut col);
                }
            }
            if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    real = true;
                    while i < j {
                        s.push(bytes[i]);
                        advance(&mut i, &mut line, &mut col);
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        s.push(bytes[i]);
                        advance(&mut i, &mut line, &mut col);
                    }
                }
            }
            let tok = if real {
                Tok::Real(s.parse().unwrap_or(0.0))
            } else {
                match s.parse() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => Tok::Real(s.parse().unwrap_or(0.0)),
                }
            };
            push!(tok, tline, tcol, tstart);
            continue;
        }
        advance(&mut i, &mut line, &mut col);
        let two = |next: char| i < bytes.len() && bytes[i] == next;
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ':' => Tok::Colon,
            ';' => Tok::Semi,
            ',' => Tok::Comma,
            '|' => Tok::Pipe,
            '<' => {
                if two('=') {
                    advance(&mut i, &mut line, &mut col);
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            '>' => {
                if two('=') {
                    advance(&mut i, &mut line, &mut col);
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '=' => Tok::Eq,
            '!' => {
                if two('=') {
                    advance(&mut i, &mut line, &mut col);
                    Tok::Ne
                } else {
                    diags.push(Diagnostic {
                        file: file.into(),
                        line: tline,
                        col: tcol,
                        severity: Severity::Error,
                        code: "syntax".into(),
                        message: "stray `!`".into(),
                    });
                    continue;
                }
            }
            '.' => {
                if two('.') {
                    advance(&mut i, &mut line, &mut col);
                    Tok::DotDot
                } else {
                    diags.push(Diagnostic {
                        file: file.into(),
                        line: tline,
                        col: tcol,
                        severity: Severity::Error,
                        code: "syntax".into(),
                        message: "stray `.`".into(),
                    });
                    continue;
                }
            }
            '*' => {
                if i < bytes.len() && is_ident_start(bytes[i]) {
                    let mut s = String::new();
                    while i < bytes.len() && is_ident_char(bytes[i]) {
                        s.push(bytes[i]);
                        advance(&mut i, &mut line, &mut col);
                    }
                    Tok::Coref(s)
                } else {
                    Tok::Star
                }
            }
            other => {
                diags.push(Diagnostic {
                    file: file.into(),
                    line: tline,
                    col: tcol,
                    severity: Severity::Error,
                    code: "syntax".into(),
                    message: format!("unexpected character `{other}`"),
                });
                continue;
            }
        };
        push!(tok, tline, tcol, tstart);
    }
    toks.push(Token {
        tok: Tok::Eof,
        line,
        col,
        start: src.len(),
    });
    (toks, diags)
}

// --------------------------------------------------------------- parser

struct Parser<'a> {
    file: &'a str,
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

impl<'a> Parser<'a> {
    fn new(file: &'a str, src: &'a str) -> Self {
        let (toks, diags) = lex(file, src);
        Parser {
            file,
            src,
            toks,
            pos: 0,
            diags,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn error(&mut self, code: &str, message: impl Into<String>) {
        let (line, col) = self.here();
        self.error_at(line, col, code, message);
    }

    fn error_at(&mut self, line: usize, col: usize, code: &str, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            file: self.file.into(),
            line,
            col,
            severity: Severity::Error,
            code: code.into(),
            message: message.into(),
        });
    }

    fn warn_at(&mut self, line: usize, col: usize, code: &str, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            file: self.file.into(),
            line,
            col,
            severity: Severity::Warning,
            code: code.into(),
            message: message.into(),
        });
    }

    fn expect(&mut self, tok: Tok) -> bool {
        if *self.peek() == tok {
            self.bump();
            true
        } else {
            let found = self.peek().describe();
            self.error("syntax", format!("expected {}, found {}", tok.describe(), found));
            false
        }
    }

    fn expect_ident(&mut self, what: &str) -> Option<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Some(s)
            }
            Tok::Str(s) => {
                self.bump();
                Some(s)
            }
            other => {
                self.error("syntax", format!("expected {what}, found {}", other.describe()));
                None
            }
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(s) if s == kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    /// Skips tokens until one of the sync keywords (at nesting depth 0)
    /// or end of input.
    fn synchronize(&mut self, keywords: &[&str]) {
        let mut depth = 0usize;
        while !self.at_eof() {
            match self.peek() {
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    depth = depth.saturating_sub(1);
                }
                Tok::Ident(s) if depth == 0 && keywords.iter().any(|k| k == s) => return,
                _ => {}
            }
            self.bump();
        }
    }

    /// Consumes a balanced `{ ... }` block as raw source text.
    fn raw_block(&mut self) -> Option<String> {
        if !matches!(self.peek(), Tok::LBrace) {
            self.error("syntax", "expected `{`");
            return None;
        }
        let open = self.toks[self.pos].start;
        let rest = &self.src[open..];
        let mut depth = 0usize;
        let mut close = None;
        for (i, c) in rest.char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(open + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let close = match close {
            Some(c) => c,
            None => {
                self.error("syntax", "unbalanced `{` in template");
                return None;
            }
        };
        let text = self.src[open + 1..close].trim().to_string();
        // resync: skip every token inside the raw block, then the `}`
        while self.toks[self.pos].start <= close && !self.at_eof() {
            self.bump();
        }
        Some(text)
    }
}

fn cg_error_code(e: &CgError) -> &'static str {
    match e {
        CgError::Ontology(OntologyError::UnknownRelation(_)) => "unknown-relation",
        CgError::Ontology(OntologyError::UnknownType(_)) => "unknown-type",
        CgError::Ontology(_) => "ontology",
        CgError::ArityMismatch { .. } => "arity",
        CgError::SignatureViolation { .. } => "signature",
        _ => "graph",
    }
}

// ----------------------------------------------------------- ontologies

struct ConceptDecl {
    name: String,
    parent: Option<String>,
    line: usize,
    col: usize,
}

struct RelationDecl {
    name: String,
    signature: Vec<String>,
    parent: Option<String>,
    line: usize,
    col: usize,
}

fn parse_ontology_decls(
    p: &mut Parser,
) -> (Vec<ConceptDecl>, Vec<RelationDecl>) {
    let mut concepts = Vec::new();
    let mut relations = Vec::new();
    while !p.at_eof() {
        let (line, col) = p.here();
        if p.eat_keyword("concept") {
            let Some(name) = p.expect_ident("concept name") else {
                p.synchronize(&["concept", "relation"]);
                continue;
            };
            let parent = if p.eat(&Tok::Lt) {
                p.expect_ident("parent concept")
            } else {
                None
            };
            concepts.push(ConceptDecl {
                name,
                parent,
                line,
                col,
            });
        } else if p.eat_keyword("relation") {
            let Some(name) = p.expect_ident("relation name") else {
                p.synchronize(&["concept", "relation"]);
                continue;
            };
            if !p.expect(Tok::LParen) {
                p.synchronize(&["concept", "relation"]);
                continue;
            }
            let mut signature = Vec::new();
            loop {
                match p.expect_ident("argument type") {
                    Some(t) => signature.push(t),
                    None => break,
                }
                if !p.eat(&Tok::Comma) {
                    break;
                }
            }
            p.expect(Tok::RParen);
            let parent = if p.eat(&Tok::Lt) {
                p.expect_ident("parent relation")
            } else {
                None
            };
            relations.push(RelationDecl {
                name,
                signature,
                parent,
                line,
                col,
            });
        } else {
            let found = p.peek().describe();
            p.error("syntax", format!("expected `concept` or `relation`, found {found}"));
            p.synchronize(&["concept", "relation"]);
        }
    }
    (concepts, relations)
}

/// Parses one ontology file. Declaration problems become diagnostics;
/// on lattice-level failure no ontology is returned.
pub fn parse_ontology(file: &str, text: &str) -> (Option<Arc<Ontology>>, Vec<Diagnostic>) {
    let mut p = Parser::new(file, text);
    let (concepts, relations) = parse_ontology_decls(&mut p);
    let mut diags = p.diags;
    let ontology = build_ontology(file, &concepts, &relations, &mut diags);
    sort_diagnostics(&mut diags);
    (ontology, diags)
}

fn build_ontology(
    file: &str,
    concepts: &[ConceptDecl],
    relations: &[RelationDecl],
    diags: &mut Vec<Diagnostic>,
) -> Option<Arc<Ontology>> {
    let types = concepts.iter().map(|c| c.name.clone());
    let edges = concepts
        .iter()
        .filter_map(|c| c.parent.clone().map(|pa| (c.name.clone(), pa)));
    let lattice = match ConceptLattice::build(types, edges) {
        Ok(l) => l,
        Err(e) => {
            diags.push(Diagnostic {
                file: file.into(),
                line: concepts.first().map_or(1, |c| c.line),
                col: concepts.first().map_or(1, |c| c.col),
                severity: Severity::Error,
                code: "lattice".into(),
                message: e.to_string(),
            });
            return None;
        }
    };
    let sigs = relations
        .iter()
        .map(|r| (r.name.clone(), r.signature.clone()));
    let redges = relations
        .iter()
        .filter_map(|r| r.parent.clone().map(|pa| (r.name.clone(), pa)));
    let rels = match RelationLattice::build(sigs, redges, &lattice) {
        Ok(r) => r,
        Err(e) => {
            diags.push(Diagnostic {
                file: file.into(),
                line: relations.first().map_or(1, |r| r.line),
                col: relations.first().map_or(1, |r| r.col),
                severity: Severity::Error,
                code: "lattice".into(),
                message: e.to_string(),
            });
            return None;
        }
    };
    Some(Ontology::new(lattice, rels))
}

/// Canonical ontology text: concepts then relations, sorted by name.
pub fn ontology_to_text(ontology: &Ontology) -> String {
    let mut out = String::new();
    for ty in ontology.concepts.types() {
        if ty == UNIVERSAL {
            continue;
        }
        let parents = ontology
            .concepts
            .direct_parents(ty)
            .map(|p| p.clone())
            .unwrap_or_default();
        let mut wrote = false;
        for parent in &parents {
            if parent == UNIVERSAL && parents.len() == 1 {
                continue;
            }
            out.push_str(&format!("concept {ty} < {parent}\n"));
            wrote = true;
        }
        if !wrote {
            out.push_str(&format!("concept {ty}\n"));
        }
    }
    for rel in ontology.relations.relations() {
        let sig = ontology
            .relations
            .signature(rel)
            .expect("serializing a validated ontology")
            .join(", ");
        let parents = ontology.relations.direct_parents(rel).cloned().unwrap_or_default();
        if parents.is_empty() {
            out.push_str(&format!("relation {rel}({sig})\n"));
        } else {
            for parent in &parents {
                out.push_str(&format!("relation {rel}({sig}) < {parent}\n"));
            }
        }
    }
    out
}

// --------------------------------------------------------- graph bodies

/// Outcome of parsing one `{ ... }` graph body: the graph plus the
/// coreference variables it declared (first node per variable).
struct ParsedBody {
    graph: ConceptualGraph,
    vars: BTreeMap<String, ConceptId>,
}

fn marker_name(tok: &Tok) -> Option<String> {
    match tok {
        Tok::Ident(s) | Tok::Str(s) => Some(s.clone()),
        Tok::Int(i) => Some(i.to_string()),
        _ => None,
    }
}

impl<'a> Parser<'a> {
    /// Parses a graph body; the opening `{` must already be current.
    fn graph_body(&mut self, ontology: &Arc<Ontology>) -> ParsedBody {
        let mut graph = ConceptualGraph::new(ontology.clone());
        let mut vars: BTreeMap<String, ConceptId> = BTreeMap::new();
        let mut individuals: BTreeMap<String, Vec<ConceptId>> = BTreeMap::new();
        if !self.expect(Tok::LBrace) {
            return ParsedBody { graph, vars };
        }
        loop {
            let (line, col) = self.here();
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    self.error("syntax", "unterminated graph body");
                    break;
                }
                Tok::LBracket => {
                    self.bump();
                    let Some(ctype) = self.expect_ident("concept type") else {
                        self.synchronize(&[]);
                        break;
                    };
                    self.expect(Tok::Colon);
                    let marker = match self.peek().clone() {
                        Tok::Star => {
                            self.bump();
                            Marker::Generic
                        }
                        Tok::Coref(v) => {
                            self.bump();
                            Marker::CorefVar(v)
                        }
                        other => match marker_name(&other) {
                            Some(name) => {
                                self.bump();
                                Marker::Individual(name)
                            }
                            None => {
                                self.error("syntax", format!("expected a marker, found {}", other.describe()));
                                Marker::Generic
                            }
                        },
                    };
                    self.expect(Tok::RBracket);
                    match graph.add_concept(&ctype, marker.clone()) {
                        Ok(id) => match &marker {
                            Marker::CorefVar(v) => {
                                vars.entry(v.clone()).or_insert(id);
                            }
                            Marker::Individual(name) => {
                                individuals.entry(name.clone()).or_default().push(id);
                            }
                            Marker::Generic => {}
                        },
                        Err(e) => self.error_at(line, col, cg_error_code(&e), e.to_string()),
                    }
                }
                Tok::LParen => {
                    self.bump();
                    let Some(rtype) = self.expect_ident("relation type") else {
                        self.synchronize(&[]);
                        break;
                    };
                    let mut args = Vec::new();
                    let mut bad = false;
                    loop {
                        let (aline, acol) = self.here();
                        match self.peek().clone() {
                            Tok::RParen => {
                                self.bump();
                                break;
                            }
                            Tok::Eof => {
                                self.error("syntax", "unterminated relation");
                                bad = true;
                                break;
                            }
                            Tok::Coref(v) => {
                                self.bump();
                                match vars.get(&v) {
                                    Some(&id) => args.push(id),
                                    None => {
                                        self.error_at(aline, acol, "unknown-marker", format!("coreference variable `{v}` is not declared"));
                                        bad = true;
                                    }
                                }
                            }
                            other => match marker_name(&other) {
                                Some(name) => {
                                    self.bump();
                                    let as_var = vars.get(&name).copied();
                                    let as_ind = individuals.get(&name);
                                    match (as_var, as_ind) {
                                        (Some(_), Some(_)) => {
                                            self.error_at(aline, acol, "ambiguous-ref", format!("`{name}` names both a variable and an individual"));
                                            bad = true;
                                        }
                                        (Some(id), None) => args.push(id),
                                        (None, Some(ids)) if ids.len() == 1 => args.push(ids[0]),
                                        (None, Some(_)) => {
                                            self.error_at(aline, acol, "ambiguous-ref", format!("several concept nodes carry the individual marker `{name}`"));
                                            bad = true;
                                        }
                                        (None, None) => {
                                            self.error_at(aline, acol, "unknown-marker", format!("`{name}` does not name a declared concept"));
                                            bad = true;
                                        }
                                    }
                                }
                                None => {
                                    self.error("syntax", format!("expected a relation argument, found {}", other.describe()));
                                    self.bump();
                                    bad = true;
                                }
                            },
                        }
                    }
                    if !bad {
                        if let Err(e) = graph.add_relation(&rtype, &args) {
                            self.error_at(line, col, cg_error_code(&e), e.to_string());
                        }
                    }
                }
                other => {
                    self.error("syntax", format!("expected `[`, `(` or `}}`, found {}", other.describe()));
                    self.bump();
                }
            }
        }
        ParsedBody { graph, vars }
    }
}

/// Parses a file of `graph <Name> { ... }` blocks, in declaration order.
pub fn parse_graphs(
    file: &str,
    text: &str,
    ontology: &Arc<Ontology>,
) -> (Vec<(String, ConceptualGraph)>, Vec<Diagnostic>) {
    let mut p = Parser::new(file, text);
    let mut graphs: Vec<(String, ConceptualGraph)> = Vec::new();
    while !p.at_eof() {
        let (line, col) = p.here();
        if !p.eat_keyword("graph") {
            let found = p.peek().describe();
            p.error("syntax", format!("expected `graph`, found {found}"));
            p.synchronize(&["graph"]);
            continue;
        }
        let Some(name) = p.expect_ident("graph name") else {
            p.synchronize(&["graph"]);
            continue;
        };
        let body = p.graph_body(ontology);
        let report = body.graph.well_formed();
        for w in &report.warnings {
            p.warn_at(line, col, "disconnected", w.clone());
        }
        if graphs.iter().any(|(n, _)| *n == name) {
            p.error_at(line, col, "duplicate", format!("graph `{name}` is declared twice"));
        }
        graphs.push((name, body.graph));
    }
    let mut diags = p.diags;
    sort_diagnostics(&mut diags);
    (graphs, diags)
}

fn ident_ok(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    s.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-'))
        && !matches!(s, "true" | "false")
}

fn quoted(s: &str) -> String {
    if ident_ok(s) {
        s.to_string()
    } else {
        let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
        format!("\"{escaped}\"")
    }
}

/// Serializes a graph body. `forced` pins coreference-variable names onto
/// specific nodes (used to encode rule and constraint frontiers). Returns
/// the text and the variable name finally used for each node that got one.
fn body_to_text(
    g: &ConceptualGraph,
    indent: &str,
    forced: &BTreeMap<ConceptId, String>,
    reserved: &BTreeSet<String>,
) -> Result<(String, BTreeMap<ConceptId, String>), String> {
    let mut var_of: BTreeMap<ConceptId, String> = forced.clone();
    let mut used: BTreeSet<String> = forced.values().cloned().collect();
    used.extend(reserved.iter().cloned());
    for node in g.concepts() {
        if let Marker::CorefVar(v) = &node.marker {
            if !var_of.contains_key(&node.id) {
                var_of.insert(node.id, v.clone());
            }
            used.insert(v.clone());
        }
        if node.marker.is_individual() && forced.contains_key(&node.id) {
            return Err(format!(
                "node {} carries an individual marker but must also carry a frontier variable",
                node.id.0
            ));
        }
    }
    let referenced: BTreeSet<ConceptId> = g
        .relations()
        .flat_map(|r| r.args.iter().copied())
        .collect();
    let mut individual_count: BTreeMap<&str, usize> = BTreeMap::new();
    for node in g.concepts() {
        if let Marker::Individual(name) = &node.marker {
            *individual_count.entry(name.as_str()).or_default() += 1;
        }
    }
    let mut fresh = 0usize;
    for node in g.concepts() {
        if var_of.contains_key(&node.id) {
            continue;
        }
        match &node.marker {
            Marker::Generic if referenced.contains(&node.id) => {
                let name = loop {
                    fresh += 1;
                    let candidate = format!("g{fresh}");
                    if !used.contains(&candidate) {
                        break candidate;
                    }
                };
                used.insert(name.clone());
                var_of.insert(node.id, name);
            }
            Marker::Individual(name)
                if referenced.contains(&node.id) && individual_count[name.as_str()] > 1 =>
            {
                return Err(format!(
                    "individual marker `{name}` appears on several nodes and is referenced by a relation"
                ));
            }
            _ => {}
        }
    }
    let mut out = String::new();
    for node in g.concepts() {
        let marker = match (&node.marker, var_of.get(&node.id)) {
            (_, Some(v)) => format!("*{v}"),
            (Marker::Individual(name), None) => quoted(name),
            (Marker::Generic, None) => "*".to_string(),
            (Marker::CorefVar(_), None) => unreachable!("coref nodes always enter var_of"),
        };
        out.push_str(&format!("{indent}[{}: {marker}]\n", node.ctype));
    }
    for rel in g.relations() {
        let mut parts = vec![rel.rtype.clone()];
        for arg in &rel.args {
            match var_of.get(arg) {
                Some(v) => parts.push(format!("*{v}")),
                None => match &g.concept(*arg).expect("edge args exist").marker {
                    Marker::Individual(name) => parts.push(quoted(name)),
                    _ => unreachable!("referenced non-individual nodes get variables"),
                },
            }
        }
        out.push_str(&format!("{indent}({})\n", parts.join(" ")));
    }
    Ok((out, var_of))
}

/// Canonical `graph <Name> { ... }` text.
pub fn graph_to_text(name: &str, g: &ConceptualGraph) -> Result<String, String> {
    let (body, _) = body_to_text(g, "  ", &BTreeMap::new(), &BTreeSet::new())?;
    Ok(format!("graph {name} {{\n{body}}}\n"))
}

// ----------------------------------------------- rules and constraints

/// Frontier between two parsed bodies: the nodes they declare under the
/// same coreference variable.
fn shared_frontier(a: &ParsedBody, b: &ParsedBody) -> Vec<(ConceptId, ConceptId)> {
    a.vars
        .iter()
        .filter_map(|(v, &aid)| b.vars.get(v).map(|&bid| (aid, bid)))
        .collect()
}

/// Parses a file of `rule`, `positive` and `negative` blocks.
pub fn parse_rules(
    file: &str,
    text: &str,
    ontology: &Arc<Ontology>,
) -> (Vec<GraphRule>, Vec<Constraint>, Vec<Diagnostic>) {
    let mut p = Parser::new(file, text);
    let mut rules = Vec::new();
    let mut constraints = Vec::new();
    const TOPS: [&str; 3] = ["rule", "positive", "negative"];
    while !p.at_eof() {
        let (line, col) = p.here();
        if p.eat_keyword("rule") {
            let Some(name) = p.expect_ident("rule name") else {
                p.synchronize(&TOPS);
                continue;
            };
            p.expect(Tok::LBrace);
            if !p.eat_keyword("if") {
                p.error("syntax", "expected `if`");
                p.synchronize(&TOPS);
                continue;
            }
            let hyp = p.graph_body(ontology);
            if !p.eat_keyword("then") {
                p.error("syntax", "expected `then`");
                p.synchronize(&TOPS);
                continue;
            }
            let conc = p.graph_body(ontology);
            p.expect(Tok::RBrace);
            let frontier = shared_frontier(&hyp, &conc);
            match GraphRule::new(&name, hyp.graph, conc.graph, frontier) {
                Ok(rule) => rules.push(rule),
                Err(e) => p.error_at(line, col, "rule", e.to_string()),
            }
        } else if p.eat_keyword("positive") {
            let Some(name) = p.expect_ident("constraint name") else {
                p.synchronize(&TOPS);
                continue;
            };
            p.expect(Tok::LBrace);
            if !p.eat_keyword("when") {
                p.error("syntax", "expected `when`");
                p.synchronize(&TOPS);
                continue;
            }
            let cond = p.graph_body(ontology);
            if !p.eat_keyword("require") {
                p.error("syntax", "expected `require`");
                p.synchronize(&TOPS);
                continue;
            }
            let mut alternatives = Vec::new();
            let mut failed = false;
            loop {
                let alt = p.graph_body(ontology);
                let frontier = shared_frontier(&cond, &alt);
                match MandatoryPart::new(&cond.graph, alt.graph, frontier) {
                    Ok(part) => alternatives.push(part),
                    Err(e) => {
                        p.error_at(line, col, "constraint", e.to_string());
                        failed = true;
                    }
                }
                if !p.eat_keyword("or") {
                    break;
                }
            }
            p.expect(Tok::RBrace);
            if !failed {
                match PositiveConstraint::new(&name, cond.graph, alternatives) {
                    Ok(c) => constraints.push(Constraint::Positive(c)),
                    Err(e) => p.error_at(line, col, "constraint", e.to_string()),
                }
            }
        } else if p.eat_keyword("negative") {
            let Some(name) = p.expect_ident("constraint name") else {
                p.synchronize(&TOPS);
                continue;
            };
            p.expect(Tok::LBrace);
            if !p.eat_keyword("when") {
                p.error("syntax", "expected `when`");
                p.synchronize(&TOPS);
                continue;
            }
            let cond = p.graph_body(ontology);
            if !p.eat_keyword("forbid") {
                p.error("syntax", "expected `forbid`");
                p.synchronize(&TOPS);
                continue;
            }
            let forbidden = p.graph_body(ontology);
            p.expect(Tok::RBrace);
            let frontier = shared_frontier(&cond, &forbidden);
            match MandatoryPart::new(&cond.graph, forbidden.graph, frontier) {
                Ok(part) => constraints.push(Constraint::Negative(NegativeConstraint {
                    name,
                    condition: cond.graph,
                    mandatory: part,
                })),
                Err(e) => p.error_at(line, col, "constraint", e.to_string()),
            }
        } else {
            let found = p.peek().describe();
            p.error("syntax", format!("expected `rule`, `positive` or `negative`, found {found}"));
            p.synchronize(&TOPS);
        }
    }
    let mut diags = p.diags;
    sort_diagnostics(&mut diags);
    (rules, constraints, diags)
}

/// Assigns shared frontier variable names across two graphs, then
/// serializes both bodies.
fn paired_bodies(
    a: &ConceptualGraph,
    b: &ConceptualGraph,
    frontier: &[(ConceptId, ConceptId)],
) -> Result<(String, String), String> {
    let mut taken: BTreeSet<String> = BTreeSet::new();
    for g in [a, b] {
        for node in g.concepts() {
            if let Marker::CorefVar(v) = &node.marker {
                taken.insert(v.clone());
            }
        }
    }
    let mut forced_a = BTreeMap::new();
    let mut forced_b = BTreeMap::new();
    let mut fresh = 0usize;
    for (na, nb) in frontier {
        // reuse the variable the pair already shares, if any
        let existing = match (
            a.concept(*na).map(|n| &n.marker),
            b.concept(*nb).map(|n| &n.marker),
        ) {
            (Some(Marker::CorefVar(x)), Some(Marker::CorefVar(y))) if x == y => Some(x.clone()),
            _ => None,
        };
        let name = existing.unwrap_or_else(|| loop {
            fresh += 1;
            let candidate = format!("f{fresh}");
            if !taken.contains(&candidate) {
                break candidate;
            }
        });
        taken.insert(name.clone());
        forced_a.insert(*na, name.clone());
        forced_b.insert(*nb, name);
    }
    // reserve every variable visible in either body while serializing the
    // other, so a generated name never aliases across bodies and creates
    // an unintended frontier on re-parse
    let (ta, vars_a) = body_to_text(a, "    ", &forced_a, &taken)?;
    taken.extend(vars_a.into_values());
    let (tb, _) = body_to_text(b, "    ", &forced_b, &taken)?;
    Ok((ta, tb))
}

pub fn rule_to_text(rule: &GraphRule) -> Result<String, String> {
    let (hyp, conc) = paired_bodies(&rule.hypothesis, &rule.conclusion, &rule.frontier)?;
    Ok(format!(
        "rule {} {{\n  if {{\n{hyp}  }}\n  then {{\n{conc}  }}\n}}\n",
        rule.name
    ))
}

pub fn constraint_to_text(c: &Constraint) -> Result<String, String> {
    match c {
        Constraint::Positive(pc) => {
            let mut out = format!("positive {} {{\n  when {{\n", pc.name);
            // every alternative shares the same rendering of the condition;
            // frontier variables must therefore be consistent, so assign
            // condition-side names once
            let mut cond_forced: BTreeMap<ConceptId, String> = BTreeMap::new();
            let mut taken: BTreeSet<String> = pc
                .condition
                .concepts()
                .chain(pc.alternatives.iter().flat_map(|a| a.graph.concepts()))
                .filter_map(|n| match &n.marker {
                    Marker::CorefVar(v) => Some(v.clone()),
                    _ => None,
                })
                .collect();
            let mut fresh = 0usize;
            for part in &pc.alternatives {
                for (cid, _) in &part.frontier {
                    if cond_forced.contains_key(cid) {
                        continue;
                    }
                    let existing = match pc.condition.concept(*cid).map(|n| &n.marker) {
                        Some(Marker::CorefVar(v)) => Some(v.clone()),
                        _ => None,
                    };
                    let name = existing.unwrap_or_else(|| loop {
                        fresh += 1;
                        let candidate = format!("f{fresh}");
                        if !taken.contains(&candidate) {
                            break candidate;
                        }
                    });
                    taken.insert(name.clone());
                    cond_forced.insert(*cid, name);
                }
            }
            let (cond_text, cond_vars) = body_to_text(&pc.condition, "    ", &cond_forced, &taken)?;
            taken.extend(cond_vars.into_values());
            out.push_str(&cond_text);
            out.push_str("  }\n");
            for (i, part) in pc.alternatives.iter().enumerate() {
                let mut alt_forced = BTreeMap::new();
                for (cid, aid) in &part.frontier {
                    alt_forced.insert(*aid, cond_forced[cid].clone());
                }
                let (alt_text, alt_vars) = body_to_text(&part.graph, "    ", &alt_forced, &taken)?;
                taken.extend(alt_vars.into_values());
                out.push_str(if i == 0 { "  require {\n" } else { "  or {\n" });
                out.push_str(&alt_text);
                out.push_str("  }\n");
            }
            out.push_str("}\n");
            Ok(out)
        }
        Constraint::Negative(nc) => {
            let (cond, forbidden) =
                paired_bodies(&nc.condition, &nc.mandatory.graph, &nc.mandatory.frontier)?;
            Ok(format!(
                "negative {} {{\n  when {{\n{cond}  }}\n  forbid {{\n{forbidden}  }}\n}}\n",
                nc.name
            ))
        }
    }
}

// ---------------------------------------------------------- expressions

impl<'a> Parser<'a> {
    fn expr(&mut self) -> Expr {
        let mut lhs = self.expr_and();
        while self.eat_keyword("or") {
            let rhs = self.expr_and();
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        lhs
    }

    fn expr_and(&mut self) -> Expr {
        let mut lhs = self.expr_not();
        while self.eat_keyword("and") {
            let rhs = self.expr_not();
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        lhs
    }

    fn expr_not(&mut self) -> Expr {
        if self.eat_keyword("not") {
            Expr::Not(Box::new(self.expr_not()))
        } else {
            self.expr_cmp()
        }
    }

    fn expr_cmp(&mut self) -> Expr {
        let lhs = self.expr_primary();
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return lhs,
        };
        self.bump();
        let rhs = self.expr_primary();
        Expr::Cmp(op, Box::new(lhs), Box::new(rhs))
    }

    fn expr_primary(&mut self) -> Expr {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let e = self.expr();
                self.expect(Tok::RParen);
                e
            }
            Tok::Int(i) => {
                self.bump();
                Expr::Lit(Value::Int(i))
            }
            Tok::Real(r) => {
                self.bump();
                Expr::Lit(Value::Real(r))
            }
            Tok::Str(s) => {
                self.bump();
                Expr::Lit(Value::Text(s))
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "true" => Expr::True,
                    "false" => Expr::Lit(Value::Bool(false)),
                    _ => {
                        if self.eat(&Tok::LParen) {
                            let mut args = Vec::new();
                            if !self.eat(&Tok::RParen) {
                                loop {
                                    args.push(self.expr());
                                    if !self.eat(&Tok::Comma) {
                                        break;
                                    }
                                }
                                self.expect(Tok::RParen);
                            }
                            Expr::Call(name, args)
                        } else {
                            Expr::Name(name)
                        }
                    }
                }
            }
            other => {
                self.error("syntax", format!("expected an expression, found {}", other.describe()));
                self.bump();
                Expr::True
            }
        }
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Real(r) => {
            let s = r.to_string();
            if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
                s
            } else {
                format!("{s}.0")
            }
        }
        Value::Bool(b) => b.to_string(),
        Value::Text(s) => quoted(s),
        Value::List(vs) => {
            let inner: Vec<String> = vs.iter().map(value_text).collect();
            format!("({})", inner.join(", "))
        }
    }
}

pub fn expr_to_text(e: &Expr) -> String {
    fn prec(e: &Expr) -> u8 {
        match e {
            Expr::Or(..) => 1,
            Expr::And(..) => 2,
            Expr::Not(..) => 3,
            Expr::Cmp(..) => 4,
            _ => 5,
        }
    }
    fn go(e: &Expr, min: u8, out: &mut String) {
        let p = prec(e);
        let wrap = p < min;
        if wrap {
            out.push('(');
        }
        match e {
            Expr::True => out.push_str("true"),
            Expr::Lit(Value::Bool(true)) => out.push_str("true"),
            // text literals keep their quotes so they never reparse as
            // fact references
            Expr::Lit(Value::Text(s)) => {
                let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
                out.push_str(&format!("\"{escaped}\""));
            }
            Expr::Lit(v) => out.push_str(&value_text(v)),
            Expr::Name(n) => out.push_str(n),
            Expr::Call(f, args) => {
                out.push_str(f);
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    go(a, 0, out);
                }
                out.push(')');
            }
            Expr::Cmp(op, l, r) => {
                go(l, 5, out);
                out.push_str(match op {
                    CmpOp::Eq => " = ",
                    CmpOp::Ne => " != ",
                    CmpOp::Lt => " < ",
                    CmpOp::Le => " <= ",
                    CmpOp::Gt => " > ",
                    CmpOp::Ge => " >= ",
                });
                go(r, 5, out);
            }
            Expr::And(l, r) => {
                go(l, 2, out);
                out.push_str(" and ");
                go(r, 3, out);
            }
            Expr::Or(l, r) => {
                go(l, 1, out);
                out.push_str(" or ");
                go(r, 2, out);
            }
            Expr::Not(inner) => {
                out.push_str("not ");
                go(inner, 3, out);
            }
        }
        if wrap {
            out.push(')');
        }
    }
    let mut out = String::new();
    go(e, 0, &mut out);
    out
}

// ----------------------------------------------------------- properties

fn kind_name(kind: RelationKind) -> &'static str {
    match kind {
        RelationKind::Implication => "implication",
        RelationKind::Equivalence => "equivalence",
        RelationKind::Temporal => "temporal",
        RelationKind::Influence(Sense::Beneficial) => "influence(beneficial)",
        RelationKind::Influence(Sense::Harmful) => "influence(harmful)",
        RelationKind::Emergence => "emergence",
    }
}

impl<'a> Parser<'a> {
    fn relation_kind(&mut self) -> Option<RelationKind> {
        let Some(word) = self.expect_ident("relation kind") else {
            return None;
        };
        match word.as_str() {
            "implication" => Some(RelationKind::Implication),
            "equivalence" => Some(RelationKind::Equivalence),
            "temporal" => Some(RelationKind::Temporal),
            "emergence" => Some(RelationKind::Emergence),
            "influence" => {
                if !self.expect(Tok::LParen) {
                    return None;
                }
                let sense = if self.eat_keyword("beneficial") {
                    Some(Sense::Beneficial)
                } else if self.eat_keyword("harmful") {
                    Some(Sense::Harmful)
                } else {
                    // `+` lexes as part of nothing; accept -1/+... via idents
                    match self.bump() {
                        Tok::Int(-1) => Some(Sense::Harmful),
                        Tok::Int(1) => Some(Sense::Beneficial),
                        Tok::Ident(s) if s == "+" => Some(Sense::Beneficial),
                        _ => {
                            self.error("syntax", "expected `+`, `-`, `beneficial` or `harmful`");
                            None
                        }
                    }
                };
                self.expect(Tok::RParen);
                sense.map(RelationKind::Influence)
            }
            other => {
                self.error("syntax", format!("unknown relation kind `{other}`"));
                None
            }
        }
    }

    /// `causes { ... }` / `effects { ... }` body: bare names are fact
    /// references; everything else conjoins into the condition function.
    fn fact_expr_block(&mut self) -> (BTreeSet<String>, Expr) {
        let mut facts = BTreeSet::new();
        let mut theta = Expr::True;
        if !self.expect(Tok::LBrace) {
            return (facts, theta);
        }
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    self.error("syntax", "unterminated block");
                    break;
                }
                Tok::Comma | Tok::Semi => {
                    self.bump();
                }
                _ => {
                    let e = self.expr();
                    match e {
                        Expr::Name(n) => {
                            facts.insert(n);
                        }
                        other => {
                            theta = match theta {
                                Expr::True => other,
                                prev => Expr::And(Box::new(prev), Box::new(other)),
                            };
                        }
                    }
                }
            }
        }
        (facts, theta)
    }

    fn coords_clause(&mut self) -> Option<Coords> {
        use crate::propmodel::{Aspect, Scope, Target, Time};
        let target = match self.expect_ident("placement target")?.as_str() {
            "upper-referent" => Target::UpperReferent,
            "referent" => Target::Referent,
            "lower" => Target::Lower,
            other => {
                self.error("syntax", format!("unknown placement target `{other}`"));
                return None;
            }
        };
        // scope.aspect arrives as one dotted identifier
        let pair = self.expect_ident("scope.aspect")?;
        let (scope_s, aspect_s) = pair.split_once('.').unwrap_or((pair.as_str(), ""));
        let scope = match scope_s {
            "system" => Scope::System,
            "model" => Scope::Model,
            other => {
                self.error("syntax", format!("unknown placement scope `{other}`"));
                return None;
            }
        };
        let aspect = match aspect_s {
            "structural" => Aspect::Structural,
            "behavioral" => Aspect::Behavioral,
            "functional" => Aspect::Functional,
            other => {
                self.error("syntax", format!("unknown placement aspect `{other}`"));
                return None;
            }
        };
        let time = match self.expect_ident("placement time")?.as_str() {
            "past" => Time::Past,
            "present" => Time::Present,
            "future" => Time::Future,
            other => {
                self.error("syntax", format!("unknown placement time `{other}`"));
                return None;
            }
        };
        Some(Coords {
            target,
            scope,
            aspect,
            time,
        })
    }
}

/// Parses a file of `property` and `generic` blocks.
pub fn parse_properties(
    file: &str,
    text: &str,
    ontology: &Arc<Ontology>,
) -> (Vec<PropertyDef>, Vec<GenericProperty>, Vec<Diagnostic>) {
    let mut p = Parser::new(file, text);
    let mut defs = Vec::new();
    let mut generics = Vec::new();
    const TOPS: [&str; 2] = ["property", "generic"];
    while !p.at_eof() {
        let (line, col) = p.here();
        if p.eat_keyword("property") {
            let Some(name) = p.expect_ident("property name") else {
                p.synchronize(&TOPS);
                continue;
            };
            let mut degree = (String::new(), String::new());
            if p.eat_keyword("degree") {
                if let Some(d) = p.expect_ident("degree") {
                    degree = match d.split_once('.') {
                        Some((tag, deg)) => (tag.to_string(), deg.to_string()),
                        None => (String::new(), d),
                    };
                }
            }
            if !p.eat_keyword("kind") {
                p.error("syntax", "expected `kind`");
                p.synchronize(&TOPS);
                continue;
            }
            let Some(kind) = p.relation_kind() else {
                p.synchronize(&TOPS);
                continue;
            };
            if !p.expect(Tok::LBrace) {
                p.synchronize(&TOPS);
                continue;
            }
            let mut causes = BTreeSet::new();
            let mut effects = BTreeSet::new();
            let mut theta_c = Expr::True;
            let mut theta_e = Expr::True;
            let mut annotation = None;
            let mut bindings = BTreeMap::new();
            let mut coords = None;
            loop {
                if p.eat(&Tok::RBrace) {
                    break;
                }
                if p.at_eof() {
                    p.error("syntax", "unterminated property block");
                    break;
                }
                if p.eat_keyword("causes") {
                    let (f, t) = p.fact_expr_block();
                    causes = f;
                    theta_c = t;
                } else if p.eat_keyword("effects") {
                    let (f, t) = p.fact_expr_block();
                    effects = f;
                    theta_e = t;
                } else if p.eat_keyword("bind") {
                    let Some(fact) = p.expect_ident("fact name") else {
                        p.synchronize(&TOPS);
                        break;
                    };
                    if !p.eat_keyword("to") || !p.eat_keyword("graph") {
                        p.error("syntax", "expected `to graph`");
                        p.synchronize(&TOPS);
                        break;
                    }
                    let body = p.graph_body(ontology);
                    bindings.insert(fact, body.graph);
                } else if p.eat_keyword("note") {
                    if let Some(text) = p.expect_ident("annotation") {
                        annotation = Some(text);
                    }
                } else if p.eat_keyword("at") {
                    coords = p.coords_clause();
                } else {
                    let found = p.peek().describe();
                    p.error("syntax", format!("unexpected {found} in property block"));
                    p.bump();
                }
            }
            let relation = CausalRelation {
                kind,
                theta_c,
                theta_e,
                annotation,
            };
            match Property::new(&name, causes, effects, relation, degree) {
                Ok(property) => defs.push(PropertyDef {
                    property,
                    bindings,
                    coords,
                }),
                Err(e) => p.error_at(line, col, "property", e.to_string()),
            }
        } else if p.eat_keyword("generic") {
            let Some(name) = p.expect_ident("template name") else {
                p.synchronize(&TOPS);
                continue;
            };
            let mut perspectives = BTreeSet::new();
            if p.eat_keyword("perspective") {
                loop {
                    match self_perspective(&mut p) {
                        Some(pp) => {
                            perspectives.insert(pp);
                        }
                        None => break,
                    }
                }
            }
            if !p.eat_keyword("typology") {
                p.error("syntax", "expected `typology`");
                p.synchronize(&TOPS);
                continue;
            }
            let typology = match p.expect_ident("typology").as_deref() {
                Some("system") => Typology::System,
                Some("language") => Typology::ModelingLanguage,
                Some("axiomatic") => Typology::Axiomatic,
                Some(other) => {
                    p.error("syntax", format!("unknown typology `{other}`"));
                    p.synchronize(&TOPS);
                    continue;
                }
                None => {
                    p.synchronize(&TOPS);
                    continue;
                }
            };
            let mut placeholders: BTreeMap<String, String> = BTreeMap::new();
            if p.eat_keyword("where") {
                loop {
                    let Some(ph) = p.expect_ident("placeholder name") else {
                        break;
                    };
                    p.expect(Tok::Colon);
                    let Some(ty) = p.expect_ident("concept type") else {
                        break;
                    };
                    if !ontology.concepts.contains(&ty) {
                        p.error("unknown-type", format!("placeholder type `{ty}` is not declared"));
                    }
                    placeholders.insert(ph.trim_start_matches('$').to_string(), ty);
                    if !p.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            let Some(template) = p.raw_block() else {
                p.synchronize(&TOPS);
                continue;
            };
            for ph in scan_placeholders(&template) {
                placeholders.entry(ph).or_insert_with(|| UNIVERSAL.to_string());
            }
            generics.push(GenericProperty {
                name,
                perspectives,
                typology,
                placeholders,
                template,
            });
        } else {
            let found = p.peek().describe();
            p.error("syntax", format!("expected `property` or `generic`, found {found}"));
            p.synchronize(&TOPS);
        }
    }
    let mut diags = p.diags;
    sort_diagnostics(&mut diags);
    (defs, generics, diags)
}

fn self_perspective(p: &mut Parser) -> Option<Perspective> {
    let word = match p.peek() {
        Tok::Ident(s) => s.clone(),
        _ => return None,
    };
    let result = match word.as_str() {
        "stability" => Perspective::Stability,
        "reliability" => Perspective::Reliability,
        "integrity" => Perspective::Integrity,
        _ => return None,
    };
    p.bump();
    Some(result)
}

/// `$name` occurrences in a template body.
fn scan_placeholders(template: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let chars: Vec<char> = template.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '$' {
            let mut name = String::new();
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                name.push(chars[j]);
                j += 1;
            }
            if !name.is_empty() {
                out.insert(name);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

pub fn property_to_text(def: &PropertyDef) -> Result<String, String> {
    let p = &def.property;
    let degree = if p.degree.0.is_empty() && p.degree.1.is_empty() {
        String::new()
    } else if p.degree.0.is_empty() {
        format!(" degree {}", p.degree.1)
    } else {
        format!(" degree {}.{}", p.degree.0, p.degree.1)
    };
    let mut out = format!(
        "property {}{degree} kind {} {{\n",
        quoted(&p.name),
        kind_name(p.relation.kind)
    );
    let block = |facts: &BTreeSet<String>, theta: &Expr| -> String {
        let mut items: Vec<String> = facts.iter().map(|f| quoted(f)).collect();
        if *theta != Expr::True {
            items.push(expr_to_text(theta));
        }
        items.join("; ")
    };
    out.push_str(&format!("  causes {{ {} }}\n", block(&p.causes, &p.relation.theta_c)));
    out.push_str(&format!("  effects {{ {} }}\n", block(&p.effects, &p.relation.theta_e)));
    if let Some(note) = &p.relation.annotation {
        out.push_str(&format!("  note {}\n", quoted(note)));
    }
    // bindings share coreference variables on purpose, so a name generated
    // in one binding must not alias a variable used in any other
    let mut reserved: BTreeSet<String> = def
        .bindings
        .values()
        .flat_map(|g| g.concepts())
        .filter_map(|n| match &n.marker {
            Marker::CorefVar(v) => Some(v.clone()),
            _ => None,
        })
        .collect();
    for (fact, graph) in &def.bindings {
        let (body, vars) = body_to_text(graph, "    ", &BTreeMap::new(), &reserved)?;
        reserved.extend(vars.into_values());
        out.push_str(&format!("  bind {} to graph {{\n{body}  }}\n", quoted(fact)));
    }
    if let Some(c) = def.coords {
        use crate::propmodel::{Aspect, Scope, Target, Time};
        let target = match c.target {
            Target::UpperReferent => "upper-referent",
            Target::Referent => "referent",
            Target::Lower => "lower",
        };
        let scope = match c.scope {
            Scope::System => "system",
            Scope::Model => "model",
        };
        let aspect = match c.aspect {
            Aspect::Structural => "structural",
            Aspect::Behavioral => "behavioral",
            Aspect::Functional => "functional",
        };
        let time = match c.time {
            Time::Past => "past",
            Time::Present => "present",
            Time::Future => "future",
        };
        out.push_str(&format!("  at {target} {scope}.{aspect} {time}\n"));
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn generic_to_text(g: &GenericProperty) -> String {
    let mut out = format!("generic {}", quoted(&g.name));
    if !g.perspectives.is_empty() {
        out.push_str(" perspective");
        for pp in &g.perspectives {
            out.push_str(match pp {
                Perspective::Stability => " stability",
                Perspective::Reliability => " reliability",
                Perspective::Integrity => " integrity",
            });
        }
    }
    out.push_str(match g.typology {
        Typology::System => " typology system",
        Typology::ModelingLanguage => " typology language",
        Typology::Axiomatic => " typology axiomatic",
    });
    let declared: Vec<String> = g
        .placeholders
        .iter()
        .filter(|(_, ty)| ty.as_str() != UNIVERSAL)
        .map(|(ph, ty)| format!("{ph}: {ty}"))
        .collect();
    if !declared.is_empty() {
        out.push_str(&format!(" where {}", declared.join(", ")));
    }
    out.push_str(&format!(" {{\n{}\n}}\n", g.template));
    out
}

// ----------------------------------------------------------- fact store

impl<'a> Parser<'a> {
    fn type_tag(&mut self) -> Option<TypeTag> {
        match self.expect_ident("type")?.as_str() {
            "int" => Some(TypeTag::Int),
            "real" => Some(TypeTag::Real),
            "bool" => Some(TypeTag::Bool),
            "text" => Some(TypeTag::Text),
            other => {
                self.error("syntax", format!("unknown type `{other}`"));
                None
            }
        }
    }

    fn value(&mut self) -> Option<Value> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Some(Value::Int(i))
            }
            Tok::Real(r) => {
                self.bump();
                Some(Value::Real(r))
            }
            Tok::Str(s) => {
                self.bump();
                Some(Value::Text(s))
            }
            Tok::Ident(s) => {
                self.bump();
                match s.as_str() {
                    "true" => Some(Value::Bool(true)),
                    "false" => Some(Value::Bool(false)),
                    _ => Some(Value::Text(s)),
                }
            }
            other => {
                self.error("syntax", format!("expected a value, found {}", other.describe()));
                None
            }
        }
    }

    fn domain(&mut self) -> Option<Domain> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "any" => {
                self.bump();
                Some(Domain::Any)
            }
            Tok::Int(lo) => {
                self.bump();
                if !self.expect(Tok::DotDot) {
                    return None;
                }
                match self.bump() {
                    Tok::Int(hi) => Some(Domain::IntRange(lo, hi)),
                    other => {
                        self.error("syntax", format!("expected an integer, found {}", other.describe()));
                        None
                    }
                }
            }
            Tok::LBrace => {
                self.bump();
                let mut vals = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        vals.push(self.value()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RBrace);
                }
                Some(Domain::OneOf(vals))
            }
            other => {
                self.error("syntax", format!("expected a domain, found {}", other.describe()));
                None
            }
        }
    }
}

/// Parses a fact-store file of `var`, `param`, `handle` and `trusted`
/// declarations.
pub fn parse_facts(file: &str, text: &str) -> (FactStore, Vec<Diagnostic>) {
    let mut p = Parser::new(file, text);
    let mut store = FactStore::new();
    const TOPS: [&str; 4] = ["var", "param", "handle", "trusted"];
    while !p.at_eof() {
        let (line, col) = p.here();
        let fact = if p.eat_keyword("var") {
            (|p: &mut Parser| {
                let name = p.expect_ident("variable name")?;
                p.expect(Tok::Colon);
                let tag = p.type_tag()?;
                if !p.eat_keyword("in") {
                    p.error("syntax", "expected `in`");
                    return None;
                }
                let def = p.domain()?;
                p.expect(Tok::Eq);
                p.expect(Tok::LBracket);
                let mut series = Vec::new();
                if !p.eat(&Tok::RBracket) {
                    loop {
                        p.expect(Tok::LParen);
                        let t = match p.bump() {
                            Tok::Int(t) => t,
                            other => {
                                p.error("syntax", format!("expected a time point, found {}", other.describe()));
                                return None;
                            }
                        };
                        p.expect(Tok::Comma);
                        let v = p.value()?;
                        p.expect(Tok::RParen);
                        series.push((t, v));
                        if !p.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    p.expect(Tok::RBracket);
                }
                Some(Fact::Variable {
                    name,
                    tag,
                    series,
                    def,
                })
            })(&mut p)
        } else if p.eat_keyword("param") {
            (|p: &mut Parser| {
                let name = p.expect_ident("parameter name")?;
                p.expect(Tok::Colon);
                let tag = p.type_tag()?;
                p.expect(Tok::Eq);
                let value = p.value()?;
                Some(Fact::Parameter { name, tag, value })
            })(&mut p)
        } else if p.eat_keyword("handle") {
            (|p: &mut Parser| {
                let name = p.expect_ident("handle name")?;
                let mut params = Vec::new();
                if p.eat(&Tok::LParen) && !p.eat(&Tok::RParen) {
                    loop {
                        params.push(p.expect_ident("parameter")?);
                        if !p.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    p.expect(Tok::RParen);
                }
                p.expect(Tok::Colon);
                let result = p.type_tag()?;
                Some(Fact::Handle {
                    name,
                    params,
                    result,
                })
            })(&mut p)
        } else if p.eat_keyword("trusted") {
            p.expect_ident("property name")
                .map(|name| Fact::PropertyRef { name })
        } else {
            let found = p.peek().describe();
            p.error("syntax", format!("expected `var`, `param`, `handle` or `trusted`, found {found}"));
            p.synchronize(&TOPS);
            continue;
        };
        match fact {
            Some(f) => {
                if let Err(e) = store.insert(f) {
                    p.error_at(line, col, "fact", e.to_string());
                }
            }
            None => p.synchronize(&TOPS),
        }
    }
    let mut diags = p.diags;
    sort_diagnostics(&mut diags);
    (store, diags)
}

fn domain_text(d: &Domain) -> String {
    match d {
        Domain::Any => "any".into(),
        Domain::IntRange(lo, hi) => format!("{lo}..{hi}"),
        Domain::OneOf(vals) => {
            let inner: Vec<String> = vals.iter().map(value_text).collect();
            format!("{{{}}}", inner.join(", "))
        }
    }
}

pub fn facts_to_text(store: &FactStore) -> String {
    let mut out = String::new();
    for fact in store.facts() {
        match fact {
            Fact::Variable {
                name,
                tag,
                series,
                def,
            } => {
                let samples: Vec<String> = series
                    .iter()
                    .map(|(t, v)| format!("({t}, {})", value_text(v)))
                    .collect();
                out.push_str(&format!(
                    "var {}: {} in {} = [{}]\n",
                    quoted(name),
                    tag.name(),
                    domain_text(def),
                    samples.join(", ")
                ));
            }
            Fact::Parameter { name, tag, value } => {
                out.push_str(&format!(
                    "param {}: {} = {}\n",
                    quoted(name),
                    tag.name(),
                    value_text(value)
                ));
            }
            Fact::Handle {
                name,
                params,
                result,
            } => {
                let plist: Vec<String> = params.iter().map(|s| quoted(s)).collect();
                out.push_str(&format!(
                    "handle {}({}): {}\n",
                    quoted(name),
                    plist.join(", "),
                    result.name()
                ));
            }
            Fact::PropertyRef { name } => {
                out.push_str(&format!("trusted {}\n", quoted(name)));
            }
        }
    }
    out
}

// --------------------------------------------------------------- models

/// Parses a process-model file: `process` blocks holding activity
/// blocks, flow/resource/actor/location declarations and precedence
/// statements; the same statements are also accepted at top level.
pub fn parse_model(file: &str, text: &str) -> (EnterpriseModel, Vec<Diagnostic>) {
    use crate::ingest::{EntityKind, LinkKind};

    enum Stmt {
        Entity(String, EntityKind, usize, usize),
        Attr(String, String, String, usize, usize),
        Link(LinkKind, String, String, usize, usize),
    }

    let mut p = Parser::new(file, text);
    let mut stmts: Vec<Stmt> = Vec::new();

    fn activity_block(p: &mut Parser, name: &str, stmts: &mut Vec<Stmt>) {
        let (line, col) = p.here();
        stmts.push(Stmt::Entity(name.into(), EntityKind::Activity, line, col));
        if !p.eat(&Tok::LBrace) {
            return;
        }
        loop {
            let (sline, scol) = p.here();
            if p.eat(&Tok::RBrace) {
                break;
            }
            if p.at_eof() {
                p.error("syntax", "unterminated activity block");
                break;
            }
            if p.eat(&Tok::Semi) {
                continue;
            }
            if p.eat_keyword("input") {
                if let Some(f) = p.expect_ident("flow name") {
                    stmts.push(Stmt::Link(LinkKind::HasInput, name.into(), f, sline, scol));
                }
            } else if p.eat_keyword("output") {
                if let Some(f) = p.expect_ident("flow name") {
                    stmts.push(Stmt::Link(LinkKind::HasOutput, name.into(), f, sline, scol));
                }
            } else if p.eat_keyword("uses") {
                if let Some(r) = p.expect_ident("resource name") {
                    stmts.push(Stmt::Link(LinkKind::UsesResource, name.into(), r, sline, scol));
                }
            } else if p.eat_keyword("performed_by") {
                if let Some(a) = p.expect_ident("actor name") {
                    stmts.push(Stmt::Entity(a.clone(), EntityKind::Actor, sline, scol));
                    stmts.push(Stmt::Link(LinkKind::PerformedBy, name.into(), a, sline, scol));
                }
            } else if p.eat_keyword("at") {
                if let Some(l) = p.expect_ident("location name") {
                    stmts.push(Stmt::Entity(l.clone(), EntityKind::Location, sline, scol));
                    stmts.push(Stmt::Link(LinkKind::LocatedAt, name.into(), l, sline, scol));
                }
            } else if p.eat_keyword("attr") {
                let key = p.expect_ident("attribute key");
                let value = p.value();
                if let (Some(k), Some(v)) = (key, value) {
                    let text = match v {
                        Value::Text(s) => s,
                        other => value_text(&other),
                    };
                    stmts.push(Stmt::Attr(name.into(), k, text, sline, scol));
                }
            } else {
                let found = p.peek().describe();
                p.error("syntax", format!("unexpected {found} in activity block"));
                p.bump();
            }
            p.eat(&Tok::Semi);
        }
    }

    fn statements(p: &mut Parser, stmts: &mut Vec<Stmt>, in_process: Option<&str>) {
        loop {
            let (line, col) = p.here();
            match p.peek().clone() {
                Tok::Eof => {
                    if in_process.is_some() {
                        p.error("syntax", "unterminated process block");
                    }
                    return;
                }
                Tok::RBrace if in_process.is_some() => {
                    p.bump();
                    return;
                }
                Tok::Semi => {
                    p.bump();
                }
                _ => {
                    if p.eat_keyword("process") {
                        if in_process.is_some() {
                            p.error("syntax", "process blocks do not nest");
                        }
                        let Some(name) = p.expect_ident("process name") else {
                            p.synchronize(&["process"]);
                            continue;
                        };
                        stmts.push(Stmt::Entity(name.clone(), EntityKind::Process, line, col));
                        if p.eat(&Tok::LBrace) {
                            statements(p, stmts, Some(&name));
                        }
                    } else if p.eat_keyword("activity") {
                        let Some(name) = p.expect_ident("activity name") else {
                            continue;
                        };
                        if let Some(proc) = in_process {
                            stmts.push(Stmt::Link(
                                LinkKind::ComposedOf,
                                proc.into(),
                                name.clone(),
                                line,
                                col,
                            ));
                        }
                        activity_block(p, &name, stmts);
                    } else if p.eat_keyword("flow") {
                        let Some(name) = p.expect_ident("flow name") else {
                            continue;
                        };
                        stmts.push(Stmt::Entity(name.clone(), EntityKind::Flow, line, col));
                        if p.eat(&Tok::Colon) {
                            if let Some(domain) = p.expect_ident("domain") {
                                stmts.push(Stmt::Attr(
                                    name,
                                    "operational_domain".into(),
                                    domain,
                                    line,
                                    col,
                                ));
                            }
                        }
                        p.eat(&Tok::Semi);
                    } else if p.eat_keyword("resource") {
                        let Some(name) = p.expect_ident("resource name") else {
                            continue;
                        };
                        stmts.push(Stmt::Entity(name.clone(), EntityKind::Resource, line, col));
                        if p.eat_keyword("at") {
                            if let Some(l) = p.expect_ident("location name") {
                                stmts.push(Stmt::Entity(l.clone(), EntityKind::Location, line, col));
                                stmts.push(Stmt::Link(LinkKind::LocatedAt, name, l, line, col));
                            }
                        }
                        p.eat(&Tok::Semi);
                    } else if p.eat_keyword("actor") {
                        if let Some(name) = p.expect_ident("actor name") {
                            stmts.push(Stmt::Entity(name, EntityKind::Actor, line, col));
                        }
                        p.eat(&Tok::Semi);
                    } else if p.eat_keyword("location") {
                        if let Some(name) = p.expect_ident("location name") {
                            stmts.push(Stmt::Entity(name, EntityKind::Location, line, col));
                        }
                        p.eat(&Tok::Semi);
                    } else if let Tok::Ident(first) = p.peek().clone() {
                        // `A precedes B;`
                        p.bump();
                        if p.eat_keyword("precedes") {
                            if let Some(second) = p.expect_ident("activity name") {
                                stmts.push(Stmt::Link(LinkKind::Precedes, first, second, line, col));
                            }
                            p.eat(&Tok::Semi);
                        } else {
                            p.error_at(line, col, "syntax", format!("unexpected `{first}`"));
                            p.synchronize(&[
                                "process", "activity", "flow", "resource", "actor", "location",
                            ]);
                        }
                    } else {
                        let found = p.peek().describe();
                        p.error("syntax", format!("unexpected {found}"));
                        p.bump();
                    }
                }
            }
        }
    }

    statements(&mut p, &mut stmts, None);

    let mut model = EnterpriseModel::new();
    // entities first so statement order inside the file does not matter
    for s in &stmts {
        if let Stmt::Entity(name, kind, line, col) = s {
            match model.entity_kind(name) {
                None => {
                    model.add_entity(name.clone(), *kind).expect("fresh entity");
                }
                Some(existing) if existing == kind.type_name() => {}
                Some(existing) => {
                    p.error_at(
                        *line,
                        *col,
                        "kind-conflict",
                        format!("`{name}` was already declared as {existing}"),
                    );
                }
            }
        }
    }
    for s in &stmts {
        match s {
            Stmt::Entity(..) => {}
            Stmt::Attr(id, key, value, line, col) => {
                if let Err(e) = model.set_attr(id, key.clone(), value.clone()) {
                    p.error_at(*line, *col, "model", e.to_string());
                }
            }
            Stmt::Link(kind, from, to, line, col) => {
                if let Err(e) = model.add_link(*kind, from, to) {
                    p.error_at(*line, *col, "model", e.to_string());
                }
            }
        }
    }
    let mut diags = p.diags;
    sort_diagnostics(&mut diags);
    (model, diags)
}

pub fn model_to_text(model: &EnterpriseModel) -> String {
    use crate::ingest::{EntityKind, LinkKind};
    let mut out = String::new();
    let contained: BTreeSet<&str> = model
        .links()
        .filter(|l| l.kind == LinkKind::ComposedOf)
        .map(|l| l.to.as_str())
        .collect();
    let performed: BTreeSet<&str> = model
        .links()
        .filter(|l| l.kind == LinkKind::PerformedBy)
        .map(|l| l.to.as_str())
        .collect();
    let located: BTreeSet<&str> = model
        .links()
        .filter(|l| l.kind == LinkKind::LocatedAt)
        .map(|l| l.to.as_str())
        .collect();
    let emit_activity = |out: &mut String, indent: &str, id: &str| {
        let entity = model.entity(id).expect("activity exists");
        out.push_str(&format!("{indent}activity {id} {{\n"));
        for l in model.links_from(id, LinkKind::HasInput) {
            out.push_str(&format!("{indent}  input {};\n", l.to));
        }
        for l in model.links_from(id, LinkKind::HasOutput) {
            out.push_str(&format!("{indent}  output {};\n", l.to));
        }
        for l in model.links_from(id, LinkKind::UsesResource) {
            out.push_str(&format!("{indent}  uses {};\n", l.to));
        }
        for l in model.links_from(id, LinkKind::PerformedBy) {
            out.push_str(&format!("{indent}  performed_by {};\n", l.to));
        }
        for l in model.links_from(id, LinkKind::LocatedAt) {
            out.push_str(&format!("{indent}  at {};\n", l.to));
        }
        for (k, v) in &entity.attrs {
            out.push_str(&format!("{indent}  attr {} {};\n", k, quoted(v)));
        }
        out.push_str(&format!("{indent}}}\n"));
    };
    for process in model.entities().filter(|e| e.kind == EntityKind::Process) {
        out.push_str(&format!("process {} {{\n", process.id));
        for l in model.links_from(&process.id, LinkKind::ComposedOf) {
            if model.entity_kind(&l.to) == Some("Activity") {
                emit_activity(&mut out, "  ", &l.to);
            }
        }
        out.push_str("}\n");
    }
    for e in model.entities() {
        match e.kind {
            EntityKind::Process => {}
            EntityKind::Activity => {
                if !contained.contains(e.id.as_str()) {
                    emit_activity(&mut out, "", &e.id);
                }
            }
            EntityKind::Flow => match e.attrs.get("operational_domain") {
                Some(d) => out.push_str(&format!("flow {}: {};\n", e.id, d)),
                None => out.push_str(&format!("flow {};\n", e.id)),
            },
            EntityKind::Resource => {
                let mut locs = model.links_from(&e.id, LinkKind::LocatedAt);
                match locs.next() {
                    Some(l) => out.push_str(&format!("resource {} at {};\n", e.id, l.to)),
                    None => out.push_str(&format!("resource {};\n", e.id)),
                }
                for l in locs {
                    out.push_str(&format!("resource {} at {};\n", e.id, l.to));
                }
            }
            EntityKind::Actor => {
                if !performed.contains(e.id.as_str()) {
                    out.push_str(&format!("actor {};\n", e.id));
                }
            }
            EntityKind::Location => {
                if !located.contains(e.id.as_str()) {
                    out.push_str(&format!("location {};\n", e.id));
                }
            }
        }
    }
    for l in model.links() {
        if l.kind == LinkKind::Precedes {
            out.push_str(&format!("{} precedes {};\n", l.from, l.to));
        }
    }
    out
}

// --------------------------------------------------------------- bundle

/// Everything a set of input files can yield.
#[derive(Debug, Default)]
pub struct Bundle {
    pub ontology: Option<Arc<Ontology>>,
    pub graphs: Vec<(String, ConceptualGraph)>,
    pub rules: Vec<GraphRule>,
    pub constraints: Vec<Constraint>,
    pub properties: Vec<PropertyDef>,
    pub generics: Vec<GenericProperty>,
    pub facts: FactStore,
    pub model: Option<EnterpriseModel>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Bundle {
    /// The governing ontology: the one a file declared, else the built-in
    /// reference ontology.
    pub fn ontology(&self) -> Arc<Ontology> {
        self.ontology
            .clone()
            .unwrap_or_else(crate::ingest::reference_ontology)
    }
}

fn classify(text: &str) -> &'static str {
    let (toks, _) = lex("", text);
    for t in &toks {
        if let Tok::Ident(s) = &t.tok {
            return match s.as_str() {
                "concept" | "relation" => "ontology",
                "graph" => "graphs",
                "rule" | "positive" | "negative" => "rules",
                "property" | "generic" => "properties",
                "var" | "param" | "handle" | "trusted" => "facts",
                "process" | "activity" | "flow" | "resource" | "actor" | "location" | "model" => {
                    "model"
                }
                _ => "unknown",
            };
        }
    }
    "empty"
}

/// Parses a set of files into one bundle: ontology files first, then
/// everything else against the resulting (or built-in reference)
/// ontology; if a model is present its facts extend the store before
/// property fact references are cross-checked. Only I/O failure aborts.
pub fn parse_bundle(paths: &[std::path::PathBuf]) -> std::io::Result<Bundle> {
    let mut files = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path)?;
        files.push((path.display().to_string(), text));
    }
    Ok(parse_bundle_texts(&files))
}

pub fn parse_bundle_texts(files: &[(String, String)]) -> Bundle {
    let mut bundle = Bundle::default();
    let mut diags = Vec::new();
    for (name, text) in files {
        if classify(text) == "ontology" {
            let (ont, mut d) = parse_ontology(name, text);
            diags.append(&mut d);
            if let Some(ont) = ont {
                if bundle.ontology.is_some() {
                    diags.push(Diagnostic {
                        file: name.clone(),
                        line: 1,
                        col: 1,
                        severity: Severity::Error,
                        code: "duplicate".into(),
                        message: "more than one ontology file in the bundle".into(),
                    });
                } else {
                    bundle.ontology = Some(ont);
                }
            }
        }
    }
    let ontology = bundle.ontology();
    for (name, text) in files {
        match classify(text) {
            "ontology" | "empty" => {}
            "graphs" => {
                let (graphs, mut d) = parse_graphs(name, text, &ontology);
                diags.append(&mut d);
                for (gname, g) in graphs {
                    if bundle.graphs.iter().any(|(n, _)| *n == gname) {
                        diags.push(Diagnostic {
                            file: name.clone(),
                            line: 1,
                            col: 1,
                            severity: Severity::Error,
                            code: "duplicate".into(),
                            message: format!("graph `{gname}` is declared in several files"),
                        });
                    }
                    bundle.graphs.push((gname, g));
                }
            }
            "rules" => {
                let (mut rules, mut constraints, mut d) = parse_rules(name, text, &ontology);
                diags.append(&mut d);
                bundle.rules.append(&mut rules);
                bundle.constraints.append(&mut constraints);
            }
            "properties" => {
                let (mut defs, mut generics, mut d) = parse_properties(name, text, &ontology);
                diags.append(&mut d);
                bundle.properties.append(&mut defs);
                bundle.generics.append(&mut generics);
            }
            "facts" => {
                let (store, mut d) = parse_facts(name, text);
                diags.append(&mut d);
                for fact in store.facts() {
                    if let Err(e) = bundle.facts.insert(fact.clone()) {
                        diags.push(Diagnostic {
                            file: name.clone(),
                            line: 1,
                            col: 1,
                            severity: Severity::Error,
                            code: "fact".into(),
                            message: e.to_string(),
                        });
                    }
                }
            }
            "model" => {
                let (model, mut d) = parse_model(name, text);
                diags.append(&mut d);
                if bundle.model.is_some() {
                    diags.push(Diagnostic {
                        file: name.clone(),
                        line: 1,
                        col: 1,
                        severity: Severity::Error,
                        code: "duplicate".into(),
                        message: "more than one model file in the bundle".into(),
                    });
                } else {
                    bundle.model = Some(model);
                }
            }
            _ => {
                diags.push(Diagnostic {
                    file: name.clone(),
                    line: 1,
                    col: 1,
                    severity: Severity::Error,
                    code: "unknown-format".into(),
                    message: "could not recognize the file's format from its first keyword".into(),
                });
            }
        }
    }
    if let Some(model) = &bundle.model {
        let registry = crate::ingest::HandleFunctionRegistry::with_builtins();
        match crate::ingest::extract_facts(model, &registry, &mut bundle.facts) {
            Ok(_notes) => {}
            Err(e) => diags.push(Diagnostic {
                file: "<model>".into(),
                line: 1,
                col: 1,
                severity: Severity::Error,
                code: "fact".into(),
                message: e.to_string(),
            }),
        }
    }
    for def in &bundle.properties {
        for fact in def.property.causes.iter().chain(&def.property.effects) {
            if bundle.facts.get(fact).is_none() && !def.bindings.contains_key(fact) {
                diags.push(Diagnostic {
                    file: "<bundle>".into(),
                    line: 1,
                    col: 1,
                    severity: Severity::Error,
                    code: "unknown-fact".into(),
                    message: format!(
                        "property `{}` references fact `{fact}`, which is neither declared nor bound to a pattern",
                        def.property.name
                    ),
                });
            }
        }
    }
    sort_diagnostics(&mut diags);
    bundle.diagnostics = diags;
    bundle
}
