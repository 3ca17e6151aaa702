//! Graphviz DOT export. Besides display labels, every node and edge carries
//! machine-readable attributes so [`parse_dot`] can rebuild the circuit
//! exactly (floats are written in shortest round-trip form).

use std::collections::HashMap;

use super::{CircuitMeta, HardCircuit, Node, SumLink};
use crate::error::{DlnError, Result};
use crate::gates::Gate;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn export_dot(c: &HardCircuit) -> String {
    let mut out = String::from("digraph dln {\n  rankdir=LR;\n");
    out.push_str(&format!(
        "  output [shape=ellipse, label=\"Σ\", kind=\"output\", n_features=\"{}\", mean=\"{:?}\", std=\"{:?}\"];\n",
        c.n_features, c.target_mean, c.target_std
    ));
    for (i, name) in c.feature_names.iter().enumerate() {
        out.push_str(&format!("  // feature {i} = {}\n", quote(name)));
    }
    for (i, node) in c.nodes.iter().enumerate() {
        match *node {
            Node::Const { value } => out.push_str(&format!(
                "  n{i} [shape=plaintext, label=\"{}\", kind=\"const\", value=\"{value}\"];\n",
                value as u8
            )),
            Node::Threshold { feature, bias, positive } => {
                let op = if positive { "≥" } else { "≤" };
                let label = format!("{} {op} {bias}", c.feature_names[feature]);
                out.push_str(&format!(
                    "  n{i} [shape=box, style=filled, fillcolor=yellow, label={}, kind=\"threshold\", feature=\"{feature}\", bias=\"{bias:?}\", positive=\"{positive}\"];\n",
                    quote(&label)
                ));
            }
            Node::Gate { gate, a, b, layer } => {
                out.push_str(&format!(
                    "  n{i} [shape=diamond, label=\"{}\", kind=\"gate\", op=\"{}\", layer=\"{layer}\"];\n",
                    gate.name(),
                    gate.index()
                ));
                out.push_str(&format!("  n{a} -> n{i} [role=\"a\"];\n"));
                out.push_str(&format!("  n{b} -> n{i} [role=\"b\"];\n"));
            }
        }
    }
    for (j, l) in c.links.iter().enumerate() {
        out.push_str(&format!(
            "  n{} -> output [label=\"{}\", coef=\"{:?}\", link=\"{j}\"];\n",
            l.node, l.coefficient, l.coefficient
        ));
    }
    out.push_str("}\n");
    out
}

/// Split `k=v, k="v", ...` respecting quotes.
fn parse_attrs(s: &str) -> Result<HashMap<String, String>> {
    let mut attrs = HashMap::new();
    let mut chars = s.chars().peekable();
    loop {
        while matches!(chars.peek(), Some(c) if c.is_whitespace() || *c == ',') {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let key: String = std::iter::from_fn(|| chars.next_if(|&c| c != '=')).collect();
        if chars.next() != Some('=') {
            return Err(DlnError::Malformed(format!("attribute without value: {key}")));
        }
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            loop {
                match chars.next() {
                    Some('\\') => value.extend(chars.next()),
                    Some('"') => break,
                    Some(c) => value.push(c),
                    None => return Err(DlnError::Malformed("unterminated string".into())),
                }
            }
        } else {
            value = std::iter::from_fn(|| chars.next_if(|&c| c != ',' && !c.is_whitespace())).collect();
        }
        attrs.insert(key.trim().to_string(), value);
    }
    Ok(attrs)
}

fn field<T: std::str::FromStr>(attrs: &HashMap<String, String>, key: &str) -> Result<T> {
    attrs
        .get(key)
        .ok_or_else(|| DlnError::Malformed(format!("missing attribute {key}")))?
        .parse()
        .map_err(|_| DlnError::Malformed(format!("bad value for attribute {key}")))
}

fn node_id(s: &str) -> Result<usize> {
    s.trim()
        .strip_prefix('n')
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| DlnError::Malformed(format!("bad node id {s}")))
}

/// Rebuild a circuit from text produced by [`export_dot`]. Schema and
/// metadata are not part of the DOT text and come back empty.
pub fn parse_dot(text: &str) -> Result<HardCircuit> {
    let mut nodes: Vec<Option<Node>> = Vec::new();
    let mut inputs: HashMap<usize, (Option<usize>, Option<usize>)> = HashMap::new();
    let mut links: Vec<(usize, SumLink)> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut output: Option<HashMap<String, String>> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("// feature ") {
            let (_, name) = rest.split_once(" = ").ok_or_else(|| DlnError::Malformed(line.into()))?;
            names.push(parse_attrs(&format!("v={name}"))?.remove("v").unwrap_or_default());
            continue;
        }
        let Some(open) = line.find('[') else { continue };
        let close = line.rfind(']').ok_or_else(|| DlnError::Malformed(line.into()))?;
        let head = line[..open].trim();
        let attrs = parse_attrs(&line[open + 1..close])?;
        if let Some((src, dst)) = head.split_once("->") {
            let src = node_id(src)?;
            if dst.trim() == "output" {
                let idx: usize = field(&attrs, "link")?;
                links.push((idx, SumLink { node: src, coefficient: field(&attrs, "coef")? }));
            } else {
                let dst = node_id(dst)?;
                let slot = inputs.entry(dst).or_default();
                match attrs.get("role").map(String::as_str) {
                    Some("a") => slot.0 = Some(src),
                    Some("b") => slot.1 = Some(src),
                    _ => return Err(DlnError::Malformed(format!("edge without role: {line}"))),
                }
            }
            continue;
        }
        if head == "output" {
            output = Some(attrs);
            continue;
        }
        let id = node_id(head)?;
        let node = match attrs.get("kind").map(String::as_str) {
            Some("const") => Node::Const { value: field(&attrs, "value")? },
            Some("threshold") => Node::Threshold {
                feature: field(&attrs, "feature")?,
                bias: field(&attrs, "bias")?,
                positive: field(&attrs, "positive")?,
            },
            Some("gate") => Node::Gate {
                gate: Gate::new(field(&attrs, "op")?)?,
                a: usize::MAX,
                b: usize::MAX,
                layer: field(&attrs, "layer")?,
            },
            _ => return Err(DlnError::Malformed(format!("unknown node kind: {line}"))),
        };
        if nodes.len() <= id {
            nodes.resize(id + 1, None);
        }
        nodes[id] = Some(node);
    }
    let output = output.ok_or_else(|| DlnError::Malformed("missing output node".into()))?;
    let mut resolved = Vec::with_capacity(nodes.len());
    for (i, n) in nodes.into_iter().enumerate() {
        let mut n = n.ok_or_else(|| DlnError::Malformed(format!("node n{i} missing")))?;
        if let Node::Gate { a, b, .. } = &mut n {
            let (ia, ib) = inputs.get(&i).copied().unwrap_or_default();
            *a = ia.ok_or_else(|| DlnError::Malformed(format!("gate n{i} lacks input a")))?;
            *b = ib.ok_or_else(|| DlnError::Malformed(format!("gate n{i} lacks input b")))?;
        }
        resolved.push(n);
    }
    links.sort_by_key(|(idx, _)| *idx);
    let n_features: usize = field(&output, "n_features")?;
    if names.len() != n_features {
        names = (0..n_features).map(|j| format!("x{j}")).collect();
    }
    let circuit = HardCircuit {
        n_features,
        feature_names: names,
        nodes: resolved,
        links: links.into_iter().map(|(_, l)| l).collect(),
        target_mean: field(&output, "mean")?,
        target_std: field(&output, "std")?,
        schema: None,
        metadata: CircuitMeta::default(),
    };
    if !circuit.is_topological() {
        return Err(DlnError::Malformed("circuit is not topologically ordered".into()));
    }
    Ok(circuit)
}
