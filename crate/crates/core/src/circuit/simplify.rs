//! Function-preserving circuit rewrites, applied to a fixpoint:
//! constant folding, single-input gate reduction (wires and NOTs), NOT
//! absorption into gates, structural sharing of identical nodes, removal of
//! links to constant-false nodes, and dead-node elimination.

use std::collections::HashMap;

use super::{HardCircuit, Node, SumLink};
use crate::gates::Gate;

const MAX_ROUNDS: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Const(bool),
    Threshold(usize, u64, bool),
    Gate(u8, usize, usize),
}

struct Builder<'a> {
    nodes: Vec<Node>,
    interned: HashMap<Key, usize>,
    source: &'a HardCircuit,
}

impl Builder<'_> {
    fn intern(&mut self, node: Node) -> usize {
        let key = match node {
            Node::Const { value } => Key::Const(value),
            Node::Threshold { feature, bias, positive } => Key::Threshold(feature, bias.to_bits(), positive),
            Node::Gate { gate, a, b, .. } => Key::Gate(gate.truth_table(), a, b),
        };
        if let Some(&id) = self.interned.get(&key) {
            return id;
        }
        self.nodes.push(node);
        self.interned.insert(key, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    /// Input of a canonical NOT node, if `id` is one.
    fn not_input(&self, id: usize) -> Option<usize> {
        match self.nodes[id] {
            Node::Gate { gate: Gate::NOT_A, a, b, .. } if a == b => Some(a),
            _ => None,
        }
    }

    /// Node for a one-input function `f` of node `x`.
    fn unary(&mut self, f: Gate, x: usize, layer: usize) -> usize {
        // f is evaluated as f(p, p)
        if let Some(v) = self.nodes[x].is_const() {
            return self.intern(Node::Const { value: f.hard(v, v) });
        }
        match (f.hard(false, false), f.hard(true, true)) {
            (v, w) if v == w => self.intern(Node::Const { value: v }),
            (false, true) => x,
            _ => match self.not_input(x) {
                Some(inner) => inner,
                None => self.intern(Node::Gate { gate: Gate::NOT_A, a: x, b: x, layer }),
            },
        }
    }

    fn gate(&mut self, gate: Gate, a: usize, b: usize, layer: usize) -> usize {
        match (self.nodes[a].is_const(), self.nodes[b].is_const()) {
            (Some(va), Some(vb)) => return self.intern(Node::Const { value: gate.hard(va, vb) }),
            (Some(va), None) => return self.unary(Gate::from_fn(|p, _| gate.hard(va, p)), b, layer),
            (None, Some(vb)) => return self.unary(Gate::from_fn(|p, _| gate.hard(p, vb)), a, layer),
            (None, None) => {}
        }
        let (mut g, mut a, mut b) = (gate, a, b);
        // absorb negated inputs; NOT nodes never read another NOT node
        if a != b {
            if let Some(x) = self.not_input(a) {
                g = g.negate_a();
                a = x;
            }
            if let Some(x) = self.not_input(b) {
                g = g.negate_b();
                b = x;
            }
        }
        if a == b {
            let h = g;
            return self.unary(Gate::from_fn(|p, _| h.hard(p, p)), a, layer);
        }
        match (g.depends_on_a(), g.depends_on_b()) {
            (false, false) => self.intern(Node::Const { value: g.hard(false, false) }),
            (false, true) => {
                let h = g;
                self.unary(Gate::from_fn(|p, _| h.hard(false, p)), b, layer)
            }
            (true, false) => {
                let h = g;
                self.unary(Gate::from_fn(|p, _| h.hard(p, false)), a, layer)
            }
            (true, true) => {
                if a > b {
                    g = g.swapped();
                    std::mem::swap(&mut a, &mut b);
                }
                self.intern(Node::Gate { gate: g, a, b, layer })
            }
        }
    }

    fn rebuild(mut self) -> HardCircuit {
        let mut map = Vec::with_capacity(self.source.nodes.len());
        for node in &self.source.nodes {
            let id = match *node {
                Node::Const { value } => self.intern(Node::Const { value }),
                Node::Threshold { feature, bias, positive } => {
                    let slope = if positive { 1.0 } else { -1.0 };
                    self.intern(super::fold_threshold(feature, bias, slope))
                }
                Node::Gate { gate, a, b, layer } => self.gate(gate, map[a], map[b], layer),
            };
            map.push(id);
        }
        let links: Vec<SumLink> = self
            .source
            .links
            .iter()
            .map(|l| SumLink { node: map[l.node], coefficient: l.coefficient })
            .filter(|l| self.nodes[l.node].is_const() != Some(false))
            .collect();
        let mut out = self.source.clone();
        out.nodes = self.nodes;
        out.links = links;
        eliminate_dead(&mut out);
        out
    }
}

/// Drop nodes no link depends on, keeping relative order.
fn eliminate_dead(c: &mut HardCircuit) {
    let mut live = vec![false; c.nodes.len()];
    for l in &c.links {
        live[l.node] = true;
    }
    for i in (0..c.nodes.len()).rev() {
        if live[i] {
            if let Node::Gate { a, b, .. } = c.nodes[i] {
                live[a] = true;
                live[b] = true;
            }
        }
    }
    let mut new_id = vec![usize::MAX; c.nodes.len()];
    let mut nodes = Vec::new();
    for (i, node) in c.nodes.iter().enumerate() {
        if !live[i] {
            continue;
        }
        new_id[i] = nodes.len();
        nodes.push(match *node {
            Node::Gate { gate, a, b, layer } => Node::Gate { gate, a: new_id[a], b: new_id[b], layer },
            ref other => other.clone(),
        });
    }
    for l in &mut c.links {
        l.node = new_id[l.node];
    }
    c.nodes = nodes;
}

/// One round of every rewrite.
pub fn simplify_pass(circuit: &HardCircuit) -> HardCircuit {
    Builder { nodes: Vec::new(), interned: HashMap::new(), source: circuit }.rebuild()
}

/// Apply [`simplify_pass`] until the circuit stops changing.
pub fn simplify(circuit: &HardCircuit) -> HardCircuit {
    let mut cur = simplify_pass(circuit);
    for _ in 0..MAX_ROUNDS {
        let next = simplify_pass(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thr(feature: usize) -> Node {
        Node::Threshold { feature, bias: 0.5, positive: true }
    }

    fn gate(gate: Gate, a: usize, b: usize) -> Node {
        Node::Gate { gate, a, b, layer: 1 }
    }

    fn circuit(nodes: Vec<Node>, links: &[(usize, f64)]) -> HardCircuit {
        let mut c = HardCircuit::empty(4);
        c.nodes = nodes;
        c.links = links.iter().map(|&(node, coefficient)| SumLink { node, coefficient }).collect();
        c
    }

    #[test]
    fn and_with_true_becomes_wire() {
        let c = circuit(vec![thr(0), Node::Const { value: true }, gate(Gate::AND, 0, 1)], &[(2, 2.0)]);
        let s = simplify(&c);
        assert_eq!(s.nodes, vec![thr(0)]);
        assert_eq!(s.links, vec![SumLink { node: 0, coefficient: 2.0 }]);
    }

    #[test]
    fn dead_nodes_removed() {
        let c = circuit(vec![thr(0), thr(1), gate(Gate::XOR, 0, 1), thr(2)], &[(3, 1.0)]);
        let s = simplify(&c);
        assert_eq!(s.nodes, vec![thr(2)]);
        assert_eq!(s.links[0].node, 0);
    }

    #[test]
    fn duplicates_shared_and_double_negation_removed() {
        let c = circuit(
            vec![
                thr(0),
                thr(1),
                gate(Gate::OR, 0, 1),
                gate(Gate::OR, 1, 0),
                gate(Gate::NOT_A, 2, 2),
                gate(Gate::NOT_B, 4, 4),
                gate(Gate::AND, 3, 5),
            ],
            &[(6, 1.0), (3, 0.5)],
        );
        let s = simplify(&c);
        // OR(x0,x1) ∧ ¬¬OR(x0,x1) = OR(x0,x1)
        assert_eq!(s.nodes.len(), 3);
        assert_eq!(s.links[0].node, s.links[1].node);
    }

    #[test]
    fn false_links_dropped_true_links_kept() {
        let c = circuit(
            vec![thr(0), gate(Gate::XOR, 0, 0), gate(Gate::XNOR, 0, 0)],
            &[(1, 1.0), (2, 4.0)],
        );
        let s = simplify(&c);
        assert_eq!(s.nodes, vec![Node::Const { value: true }]);
        assert_eq!(s.links, vec![SumLink { node: 0, coefficient: 4.0 }]);
    }

    #[test]
    fn negation_absorbed_into_consumer() {
        let c = circuit(
            vec![thr(0), thr(1), gate(Gate::NOT_A, 0, 0), gate(Gate::AND, 2, 1)],
            &[(3, 1.0)],
        );
        let s = simplify(&c);
        assert_eq!(s.n_gates(), 1);
        assert!(matches!(s.nodes[2], Node::Gate { gate: Gate::NOT_A_AND_B, a: 0, b: 1, .. }));
    }
}
