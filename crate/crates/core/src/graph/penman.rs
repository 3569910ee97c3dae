//! Penman notation reader and writer.
//!
//! Attribute constants (numbers, quoted strings, `-`/`+`) are read as ordinary
//! concepts. Inverse roles (`:ARG0-of`) are normalized to their base label with
//! the edge direction flipped.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::{AmrEdge, AmrGraph, GraphError, NodeId};

/// Roles that end in `-of` without being inverses.
const NON_INVERTED_ROLES: &[&str] = &["consist-of", "prep-out-of", "prep-on-behalf-of"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct PenmanError {
    pub offset: usize,
    pub kind: PenmanErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PenmanErrorKind {
    Empty,
    UnbalancedParens,
    UnterminatedString,
    UsedBeforeDefinition(String),
    DuplicateInstance(String),
    DuplicateRelation(String),
    Unexpected {
        expected: &'static str,
        found: String,
    },
    TrailingInput,
    Graph(GraphError),
}

impl fmt::Display for PenmanErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenmanErrorKind::Empty => f.write_str("empty input"),
            PenmanErrorKind::UnbalancedParens => f.write_str("unbalanced parentheses"),
            PenmanErrorKind::UnterminatedString => f.write_str("unterminated string"),
            PenmanErrorKind::UsedBeforeDefinition(v) => {
                write!(f, "variable `{v}` used before its definition")
            }
            PenmanErrorKind::DuplicateInstance(v) => {
                write!(f, "variable `{v}` assigned more than one concept")
            }
            PenmanErrorKind::DuplicateRelation(r) => write!(f, "duplicate relation `{r}`"),
            PenmanErrorKind::Unexpected { expected, found } => {
                write!(f, "expected {expected}, found {found}")
            }
            PenmanErrorKind::TrailingInput => f.write_str("trailing input after graph"),
            PenmanErrorKind::Graph(e) => write!(f, "invalid graph: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Open,
    Close,
    Slash,
    Role(String),
    Symbol(String),
    Quoted(String),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Open => f.write_str("`(`"),
            Token::Close => f.write_str("`)`"),
            Token::Slash => f.write_str("`/`"),
            Token::Role(r) => write!(f, "role `:{r}`"),
            Token::Symbol(s) => write!(f, "symbol `{s}`"),
            Token::Quoted(s) => write!(f, "string {s}"),
        }
    }
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '"' | '/')
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, PenmanError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut at_line_start = true;
    while let Some(&(offset, c)) = chars.peek() {
        if c == '\n' {
            at_line_start = true;
            chars.next();
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' && at_line_start {
            // Comment line.
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        at_line_start = false;
        match c {
            '(' => {
                chars.next();
                tokens.push((offset, Token::Open));
            }
            ')' => {
                chars.next();
                tokens.push((offset, Token::Close));
            }
            '/' => {
                chars.next();
                tokens.push((offset, Token::Slash));
            }
            '"' => {
                chars.next();
                let mut s = String::from('"');
                let mut closed = false;
                let mut escaped = false;
                for (_, c) in chars.by_ref() {
                    s.push(c);
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == '"' {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(PenmanError {
                        offset,
                        kind: PenmanErrorKind::UnterminatedString,
                    });
                }
                tokens.push((offset, Token::Quoted(s)));
            }
            _ => {
                let role = c == ':';
                if role {
                    chars.next();
                }
                let mut s = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if is_delimiter(c) {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                if role {
                    if s.is_empty() {
                        return Err(PenmanError {
                            offset,
                            kind: PenmanErrorKind::Unexpected {
                                expected: "role name",
                                found: "`:`".into(),
                            },
                        });
                    }
                    tokens.push((offset, Token::Role(s)));
                } else {
                    tokens.push((offset, Token::Symbol(s)));
                }
            }
        }
    }
    Ok(tokens)
}

struct Parser<'t> {
    tokens: &'t [(usize, Token)],
    pos: usize,
    end_offset: usize,
    all_vars: HashSet<String>,
    vars: HashMap<String, NodeId>,
    names: Vec<String>,
    edges: Vec<(usize, AmrEdge)>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&(usize, Token)> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end_offset, |(o, _)| *o)
    }

    fn err(&self, offset: usize, kind: PenmanErrorKind) -> PenmanError {
        PenmanError { offset, kind }
    }

    fn unexpected(&self, expected: &'static str) -> PenmanError {
        match self.peek() {
            Some((o, t)) => self.err(
                *o,
                PenmanErrorKind::Unexpected {
                    expected,
                    found: t.to_string(),
                },
            ),
            None => self.err(self.end_offset, PenmanErrorKind::UnbalancedParens),
        }
    }

    fn new_node(&mut self, name: String) -> NodeId {
        self.names.push(name);
        self.names.len() - 1
    }

    /// `( var / concept (:role target)* )`
    fn node(&mut self) -> Result<NodeId, PenmanError> {
        let open_offset = self.offset();
        match self.peek() {
            Some((_, Token::Open)) => self.pos += 1,
            _ => return Err(self.unexpected("`(`")),
        }
        let (var_offset, var) = match self.peek() {
            Some((o, Token::Symbol(s))) => (*o, s.clone()),
            _ => return Err(self.unexpected("variable")),
        };
        self.pos += 1;
        match self.peek() {
            Some((_, Token::Slash)) => self.pos += 1,
            _ => return Err(self.unexpected("`/`")),
        }
        let concept = match self.peek() {
            Some((_, Token::Symbol(s))) | Some((_, Token::Quoted(s))) => s.clone(),
            _ => return Err(self.unexpected("concept")),
        };
        self.pos += 1;
        if self.vars.contains_key(&var) {
            return Err(self.err(var_offset, PenmanErrorKind::DuplicateInstance(var)));
        }
        let id = self.new_node(concept);
        self.vars.insert(var, id);

        loop {
            match self.peek() {
                Some((_, Token::Close)) => {
                    self.pos += 1;
                    return Ok(id);
                }
                Some((role_offset, Token::Role(role))) => {
                    let (role_offset, role) = (*role_offset, role.clone());
                    self.pos += 1;
                    let target = self.target()?;
                    let (label, inverted) = normalize_role(&role);
                    let edge = if inverted {
                        AmrEdge::new(target, id, label)
                    } else {
                        AmrEdge::new(id, target, label)
                    };
                    self.edges.push((role_offset, edge));
                }
                Some(_) => return Err(self.unexpected("role or `)`")),
                None => return Err(self.err(open_offset, PenmanErrorKind::UnbalancedParens)),
            }
        }
    }

    fn target(&mut self) -> Result<NodeId, PenmanError> {
        match self.peek() {
            Some((_, Token::Open)) => self.node(),
            Some((o, Token::Symbol(s))) => {
                let (o, s) = (*o, s.clone());
                self.pos += 1;
                if let Some(&id) = self.vars.get(&s) {
                    Ok(id)
                } else if self.all_vars.contains(&s) {
                    Err(self.err(o, PenmanErrorKind::UsedBeforeDefinition(s)))
                } else {
                    Ok(self.new_node(s))
                }
            }
            Some((_, Token::Quoted(s))) => {
                let s = s.clone();
                self.pos += 1;
                Ok(self.new_node(s))
            }
            _ => Err(self.unexpected("relation target")),
        }
    }
}

fn normalize_role(role: &str) -> (String, bool) {
    match role.strip_suffix("-of") {
        Some(base) if !base.is_empty() && !NON_INVERTED_ROLES.contains(&role) => {
            (base.to_string(), true)
        }
        _ => (role.to_string(), false),
    }
}

/// Parses a single Penman graph.
pub fn parse_penman(text: &str) -> Result<AmrGraph, PenmanError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(PenmanError {
            offset: 0,
            kind: PenmanErrorKind::Empty,
        });
    }

    // Paren balance first, so the error points at the offending paren.
    let mut open = Vec::new();
    for (o, t) in &tokens {
        match t {
            Token::Open => open.push(*o),
            Token::Close if open.pop().is_none() => {
                return Err(PenmanError {
                    offset: *o,
                    kind: PenmanErrorKind::UnbalancedParens,
                });
            }
            _ => {}
        }
    }
    if let Some(&o) = open.last() {
        return Err(PenmanError {
            offset: o,
            kind: PenmanErrorKind::UnbalancedParens,
        });
    }

    let all_vars = tokens
        .windows(3)
        .filter_map(|w| match (&w[0].1, &w[1].1, &w[2].1) {
            (Token::Open, Token::Symbol(v), Token::Slash) => Some(v.clone()),
            _ => None,
        })
        .collect();

    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end_offset: text.len(),
        all_vars,
        vars: HashMap::new(),
        names: Vec::new(),
        edges: Vec::new(),
    };
    let root = parser.node()?;
    if let Some((o, _)) = parser.peek() {
        return Err(PenmanError {
            offset: *o,
            kind: PenmanErrorKind::TrailingInput,
        });
    }

    let mut seen = HashSet::new();
    for (offset, e) in &parser.edges {
        if !seen.insert(e.clone()) {
            return Err(PenmanError {
                offset: *offset,
                kind: PenmanErrorKind::DuplicateRelation(e.label.clone()),
            });
        }
    }
    let edges = parser.edges.into_iter().map(|(_, e)| e);
    AmrGraph::from_parts(parser.names, edges, root).map_err(|e| PenmanError {
        offset: 0,
        kind: PenmanErrorKind::Graph(e),
    })
}

pub(crate) fn is_constant_like(name: &str) -> bool {
    (name.len() >= 2 && name.starts_with('"') && name.ends_with('"'))
        || name == "-"
        || name == "+"
        || name.parse::<f64>().is_ok()
}

/// Serializes a graph to single-line Penman.
///
/// Variables are named `v0, v1, ...` in order of first visit. Leaf constants
/// with a single parent are written bare. Every concept must be reachable
/// from the root (ignoring direction).
pub fn emit_penman(g: &AmrGraph) -> Result<String, GraphError> {
    if let Some(id) = g.reachable_from_root().iter().position(|r| !r) {
        return Err(GraphError::Disconnected(id));
    }
    let adj = g.adjacency();
    let mut writer = Writer {
        g,
        adj,
        var: vec![None; g.len()],
        next_var: 0,
        edge_done: vec![false; g.edges().len()],
        out: String::new(),
    };
    writer.write_node(g.root());
    Ok(writer.out)
}

struct Writer<'g> {
    g: &'g AmrGraph,
    adj: Vec<Vec<(NodeId, usize)>>,
    var: Vec<Option<usize>>,
    next_var: usize,
    edge_done: Vec<bool>,
    out: String,
}

impl Writer<'_> {
    fn write_node(&mut self, id: NodeId) {
        let v = self.next_var;
        self.next_var += 1;
        self.var[id] = Some(v);
        self.out.push_str(&format!("(v{v} / {}", self.g.name(id)));

        let mut incident: Vec<(NodeId, usize)> = self.adj[id].clone();
        let g = self.g;
        incident.sort_by(|a, b| {
            let ea = &g.edges()[a.1];
            let eb = &g.edges()[b.1];
            (ea.head != id, &ea.label, g.name(a.0), a.0).cmp(&(
                eb.head != id,
                &eb.label,
                g.name(b.0),
                b.0,
            ))
        });
        for (other, ei) in incident {
            if self.edge_done[ei] {
                continue;
            }
            self.edge_done[ei] = true;
            let edge = &self.g.edges()[ei];
            let role = if edge.head == id {
                edge.label.clone()
            } else {
                format!("{}-of", edge.label)
            };
            self.out.push_str(&format!(" :{role} "));
            if let Some(ov) = self.var[other] {
                self.out.push_str(&format!("v{ov}"));
            } else if self.adj[other].len() == 1
                && other != self.g.root()
                && is_constant_like(self.g.name(other))
            {
                self.var[other] = Some(usize::MAX);
                self.out.push_str(self.g.name(other));
            } else {
                self.write_node(other);
            }
        }
        self.out.push(')');
    }
}
