//! Reference definitions written without reference to the library code.

use dln_core::circuit::{HardCircuit, Node};

pub type HardFn = fn(bool, bool) -> bool;
pub type SoftFn = fn(f64, f64) -> f64;

/// The sixteen two-input functions in the conventional order, each with its
/// probabilistic relaxation (inputs read as independent probabilities).
pub const GATES: [(&str, HardFn, SoftFn); 16] = [
    ("FALSE", |_, _| false, |_, _| 0.0),
    ("AND", |a, b| a && b, |a, b| a * b),
    ("A_AND_NOT_B", |a, b| a && !b, |a, b| a - a * b),
    ("A", |a, _| a, |a, _| a),
    ("NOT_A_AND_B", |a, b| !a && b, |a, b| b - a * b),
    ("B", |_, b| b, |_, b| b),
    ("XOR", |a, b| a != b, |a, b| a + b - 2.0 * a * b),
    ("OR", |a, b| a || b, |a, b| a + b - a * b),
    ("NOR", |a, b| !(a || b), |a, b| 1.0 - (a + b - a * b)),
    ("XNOR", |a, b| a == b, |a, b| 1.0 - (a + b - 2.0 * a * b)),
    ("NOT_B", |_, b| !b, |_, b| 1.0 - b),
    ("A_OR_NOT_B", |a, b| a || !b, |a, b| 1.0 - b + a * b),
    ("NOT_A", |a, _| !a, |a, _| 1.0 - a),
    ("NOT_A_OR_B", |a, b| !a || b, |a, b| 1.0 - a + a * b),
    ("NAND", |a, b| !(a && b), |a, b| 1.0 - a * b),
    ("TRUE", |_, _| true, |_, _| 1.0),
];

/// Central difference of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Evaluate a circuit by recursive descent from each linked node, using
/// [`GATES`] for the gate semantics. Returns the standardized-scale output.
pub fn eval_circuit(c: &HardCircuit, x: &[f64]) -> f64 {
    fn bit(c: &HardCircuit, x: &[f64], i: usize, memo: &mut [Option<bool>]) -> bool {
        if let Some(v) = memo[i] {
            return v;
        }
        let v = match c.nodes[i] {
            Node::Const { value } => value,
            Node::Threshold { feature, bias, positive } => {
                let v = x[feature];
                if positive {
                    v >= bias
                } else {
                    v <= bias
                }
            }
            Node::Gate { gate, a, b, .. } => {
                let (va, vb) = (bit(c, x, a, memo), bit(c, x, b, memo));
                (GATES[gate.index()].1)(va, vb)
            }
        };
        memo[i] = Some(v);
        v
    }
    let mut memo = vec![None; c.nodes.len()];
    let mut y = 0.0;
    for l in &c.links {
        if bit(c, x, l.node, &mut memo) {
            y += l.coefficient;
        }
    }
    y
}
