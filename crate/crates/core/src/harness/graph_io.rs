//! Graphviz export of signed weighted DAGs and degree summaries.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{support_dag, CoefMatrix};

fn quote(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 2);
    out.push('"');
    for ch in name.chars() {
        if ch == '"' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('"');
    out
}

/// DOT text for `a`: every name becomes a node, every nonzero `A[(k, j)]` an
/// edge `k -> j` coloured orange (positive) or blue (negative) and labelled
/// with the coefficient to three decimals. Edges are listed row by row.
pub fn render_dot(a: &CoefMatrix, names: &[String]) -> Result<String> {
    let p = a.p();
    if names.len() != p {
        return Err(Error::InvalidInput(format!(
            "{} names for {p} nodes",
            names.len()
        )));
    }
    let support = support_dag(a)?;
    if support.topological_order().is_none() {
        return Err(Error::Cyclic);
    }
    let mut out = String::from("digraph dag {\n");
    for name in names {
        let _ = writeln!(out, "  {};", quote(name));
    }
    for &(k, j) in support.edges() {
        let v = a.get(k, j);
        let color = if v < 0.0 { "blue" } else { "orange" };
        let _ = writeln!(
            out,
            "  {} -> {} [color={color}, label=\"{v:.3}\"];",
            quote(&names[k]),
            quote(&names[j])
        );
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn export_dot(a: &CoefMatrix, names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_dot(a, names)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One parsed edge line from [`render_dot`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct DotEdge {
    pub from: String,
    pub to: String,
    pub color: String,
    pub label: f64,
}

fn take_quoted(s: &str) -> Option<(String, &str)> {
    let s = s.trim_start().strip_prefix('"')?;
    let mut out = String::new();
    let mut chars = s.char_indices();
    while let Some((i, ch)) = chars.next() {
        match ch {
            '\\' => out.push(chars.next()?.1),
            '"' => return Some((out, &s[i + 1..])),
            _ => out.push(ch),
        }
    }
    None
}

/// Reads back the edges written by [`render_dot`]. Not a general DOT parser.
pub fn parse_dot_edges(text: &str) -> Result<Vec<DotEdge>> {
    let bad = |line: &str| Error::InvalidInput(format!("unrecognised DOT line: {line}"));
    let mut edges = Vec::new();
    for line in text.lines() {
        if !line.contains("->") {
            continue;
        }
        let (from, rest) = take_quoted(line).ok_or_else(|| bad(line))?;
        let rest = rest.trim_start().strip_prefix("->").ok_or_else(|| bad(line))?;
        let (to, rest) = take_quoted(rest).ok_or_else(|| bad(line))?;
        let attrs = rest
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix("];"))
            .ok_or_else(|| bad(line))?;
        let mut color = None;
        let mut label = None;
        for attr in attrs.split(',') {
            match attr.trim().split_once('=') {
                Some(("color", c)) => color = Some(c.to_string()),
                Some(("label", l)) => label = l.trim_matches('"').parse::<f64>().ok(),
                _ => {}
            }
        }
        edges.push(DotEdge {
            from,
            to,
            color: color.ok_or_else(|| bad(line))?,
            label: label.ok_or_else(|| bad(line))?,
        });
    }
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeSummary {
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
    pub edges: usize,
    /// `2|E| / p`: each edge counts once at each endpoint.
    pub average_degree: f64,
}

pub fn degree_summary(a: &CoefMatrix) -> DegreeSummary {
    let p = a.p();
    let mut in_degree = vec![0; p];
    let mut out_degree = vec![0; p];
    let mut edges = 0;
    for k in 0..p {
        for j in 0..p {
            if k != j && a.get(k, j) != 0.0 {
                in_degree[j] += 1;
                out_degree[k] += 1;
                edges += 1;
            }
        }
    }
    DegreeSummary {
        in_degree,
        out_degree,
        edges,
        average_degree: 2.0 * edges as f64 / p as f64,
    }
}
