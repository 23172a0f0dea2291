//! Plain-text graph files.
//!
//! ```text
//! N D
//! <N rows of D feature values>
//! <one undirected edge per line: u v>
//! ```
//!
//! Blank lines are ignored. Canonical output lists each edge once with
//! `u < v`, sorted, and prints floats in shortest round-trip form.

use std::fmt::Write as _;

use leap_core::graph::Graph;
use leap_core::Tensor;

/// Parse failure at a 1-based line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

pub fn serialize_graph(g: &Graph) -> String {
    let (n, d) = (g.num_nodes(), g.feature_dim());
    let mut out = format!("{n} {d}\n");
    for i in 0..n {
        let row: Vec<String> = g.features().row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

fn numbered(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize, ParseError> {
    tok.parse()
        .map_err(|_| ParseError::new(line, format!("{what}: expected a non-negative integer, found `{tok}`")))
}

pub fn parse_graph(content: &str) -> Result<Graph, ParseError> {
    let mut lines = numbered(content);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| ParseError::new(1, "empty file, expected header `N D`"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 2 {
        return Err(ParseError::new(hl, format!("malformed header `{header}`, expected `N D`")));
    }
    let n = parse_usize(toks[0], hl, "node count")?;
    let d = parse_usize(toks[1], hl, "feature width")?;
    if n == 0 || d == 0 {
        return Err(ParseError::new(hl, "node count and feature width must be >= 1"));
    }

    let mut feats = Vec::with_capacity(n * d);
    for row in 0..n {
        let (ln, text) = lines
            .next()
            .ok_or_else(|| ParseError::new(hl, format!("expected {n} feature rows, found {row}")))?;
        let mut count = 0;
        for tok in text.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| ParseError::new(ln, format!("non-numeric feature `{tok}`")))?;
            if !v.is_finite() {
                return Err(ParseError::new(ln, format!("non-finite feature `{tok}`")));
            }
            feats.push(v);
            count += 1;
        }
        if count != d {
            return Err(ParseError::new(ln, format!("expected {d} features, found {count}")));
        }
    }

    let mut edges = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (ln, text) in lines {
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(ParseError::new(ln, format!("malformed edge `{text}`, expected `u v`")));
        }
        let u = parse_usize(toks[0], ln, "edge endpoint")?;
        let v = parse_usize(toks[1], ln, "edge endpoint")?;
        if u >= n || v >= n {
            return Err(ParseError::new(ln, format!("edge {u} {v} references a node outside 0..{n}")));
        }
        if u == v {
            return Err(ParseError::new(ln, format!("self-loop on node {u}")));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(ParseError::new(ln, format!("edge {u} {v} listed twice")));
        }
        edges.push((u, v));
    }
    let x = Tensor::from_vec(n, d, feats).map_err(|e| ParseError::new(hl, e.to_string()))?;
    Graph::from_edges(n, &edges, x).map_err(|e| ParseError::new(hl, e.to_string()))
}
