//! The sixteen two-input Boolean functions and their real-valued relaxations.
//!
//! Every soft gate is the unique multilinear polynomial that agrees with its
//! truth table on `{0,1}²`:
//!
//! ```text
//! soft(a, b) = c0 + c1·a + c2·b + c3·a·b
//! ```
//!
//! Because the relaxation is linear in the coefficients, a probability mixture
//! over gates collapses into a single coefficient vector, which is what the
//! training engine evaluates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::DlnError;

pub const NUM_GATES: usize = 16;

/// A two-input Boolean function, indexed so that the index is its truth table:
/// bit 0 is the output for `(1,1)`, bit 1 for `(1,0)`, bit 2 for `(0,1)` and
/// bit 3 for `(0,0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Gate(u8);

impl Gate {
    pub const FALSE: Gate = Gate(0);
    pub const AND: Gate = Gate(1);
    pub const A_AND_NOT_B: Gate = Gate(2);
    pub const A: Gate = Gate(3);
    pub const NOT_A_AND_B: Gate = Gate(4);
    pub const B: Gate = Gate(5);
    pub const XOR: Gate = Gate(6);
    pub const OR: Gate = Gate(7);
    pub const NOR: Gate = Gate(8);
    pub const XNOR: Gate = Gate(9);
    pub const NOT_B: Gate = Gate(10);
    pub const A_OR_NOT_B: Gate = Gate(11);
    pub const NOT_A: Gate = Gate(12);
    pub const NOT_A_OR_B: Gate = Gate(13);
    pub const NAND: Gate = Gate(14);
    pub const TRUE: Gate = Gate(15);

    pub fn new(index: usize) -> Result<Self, DlnError> {
        if index < NUM_GATES {
            Ok(Gate(index as u8))
        } else {
            Err(DlnError::GateIndex(index))
        }
    }

    pub fn all() -> impl Iterator<Item = Gate> {
        (0..NUM_GATES as u8).map(Gate)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// 4-bit truth table, see the type-level docs for the bit layout.
    #[inline]
    pub fn truth_table(self) -> u8 {
        self.0
    }

    pub fn from_truth_table(table: u8) -> Gate {
        Gate(table & 0x0f)
    }

    #[inline]
    pub fn hard(self, a: bool, b: bool) -> bool {
        let row = 3 - (2 * a as u8 + b as u8);
        (self.0 >> row) & 1 == 1
    }

    /// Multilinear coefficients `[c0, c1, c2, c3]`.
    #[inline]
    pub fn coefficients(self) -> [f64; 4] {
        COEFFICIENTS[self.index()]
    }

    #[inline]
    pub fn soft(self, a: f64, b: f64) -> f64 {
        let [c0, c1, c2, c3] = self.coefficients();
        c0 + c1 * a + c2 * b + c3 * a * b
    }

    /// Partial derivatives `(∂/∂a, ∂/∂b)` of the soft gate.
    #[inline]
    pub fn soft_grad(self, a: f64, b: f64) -> (f64, f64) {
        let [_, c1, c2, c3] = self.coefficients();
        (c1 + c3 * b, c2 + c3 * a)
    }

    /// The same function with its two inputs exchanged.
    pub fn swapped(self) -> Gate {
        let t = self.0;
        // rows (1,0) and (0,1) trade places
        let r10 = (t >> 1) & 1;
        let r01 = (t >> 2) & 1;
        Gate((t & 0b1001) | (r01 << 1) | (r10 << 2))
    }

    /// The function obtained by feeding `¬a` instead of `a`.
    pub fn negate_a(self) -> Gate {
        Gate::from_fn(|a, b| self.hard(!a, b))
    }

    /// The function obtained by feeding `¬b` instead of `b`.
    pub fn negate_b(self) -> Gate {
        Gate::from_fn(|a, b| self.hard(a, !b))
    }

    pub fn from_fn(f: impl Fn(bool, bool) -> bool) -> Gate {
        let mut t = 0u8;
        for a in [false, true] {
            for b in [false, true] {
                if f(a, b) {
                    t |= 1 << (3 - (2 * a as u8 + b as u8));
                }
            }
        }
        Gate(t)
    }

    pub fn depends_on_a(self) -> bool {
        (0..2).any(|b| self.hard(false, b == 1) != self.hard(true, b == 1))
    }

    pub fn depends_on_b(self) -> bool {
        (0..2).any(|a| self.hard(a == 1, false) != self.hard(a == 1, true))
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Gate> {
        NAMES.iter().position(|n| *n == name).map(|i| Gate(i as u8))
    }

    /// Render the gate applied to two sub-expressions.
    pub fn render(self, a: &str, b: &str) -> String {
        match self.0 {
            0 => "false".to_string(),
            1 => format!("({a} ∧ {b})"),
            2 => format!("({a} ∧ ¬{b})"),
            3 => a.to_string(),
            4 => format!("(¬{a} ∧ {b})"),
            5 => b.to_string(),
            6 => format!("({a} ⊕ {b})"),
            7 => format!("({a} ∨ {b})"),
            8 => format!("¬({a} ∨ {b})"),
            9 => format!("¬({a} ⊕ {b})"),
            10 => format!("¬{b}"),
            11 => format!("({a} ∨ ¬{b})"),
            12 => format!("¬{a}"),
            13 => format!("(¬{a} ∨ {b})"),
            14 => format!("¬({a} ∧ {b})"),
            _ => "true".to_string(),
        }
    }
}

impl TryFrom<u8> for Gate {
    type Error = DlnError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Gate::new(value as usize)
    }
}

impl From<Gate> for u8 {
    fn from(g: Gate) -> u8 {
        g.0
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const NAMES: [&str; NUM_GATES] = [
    "FALSE", "AND", "A_AND_NOT_B", "A", "NOT_A_AND_B", "B", "XOR", "OR", "NOR", "XNOR", "NOT_B",
    "A_OR_NOT_B", "NOT_A", "NOT_A_OR_B", "NAND", "TRUE",
];

const COEFFICIENTS: [[f64; 4]; NUM_GATES] = [
    [0.0, 0.0, 0.0, 0.0],   // false
    [0.0, 0.0, 0.0, 1.0],   // a·b
    [0.0, 1.0, 0.0, -1.0],  // a − a·b
    [0.0, 1.0, 0.0, 0.0],   // a
    [0.0, 0.0, 1.0, -1.0],  // b − a·b
    [0.0, 0.0, 1.0, 0.0],   // b
    [0.0, 1.0, 1.0, -2.0],  // a + b − 2ab
    [0.0, 1.0, 1.0, -1.0],  // a + b − ab
    [1.0, -1.0, -1.0, 1.0], // 1 − (a + b − ab)
    [1.0, -1.0, -1.0, 2.0], // 1 − (a + b − 2ab)
    [1.0, 0.0, -1.0, 0.0],  // 1 − b
    [1.0, 0.0, -1.0, 1.0],  // 1 − b + ab
    [1.0, -1.0, 0.0, 0.0],  // 1 − a
    [1.0, -1.0, 0.0, 1.0],  // 1 − a + ab
    [1.0, 0.0, 0.0, -1.0],  // 1 − ab
    [1.0, 0.0, 0.0, 0.0],   // true
];

/// Evaluate soft gate `k`; errors when `k` is not a gate index.
pub fn soft_gate_eval(k: usize, a: f64, b: f64) -> Result<f64, DlnError> {
    Ok(Gate::new(k)?.soft(a, b))
}

/// Evaluate hard gate `k`; errors when `k` is not a gate index.
pub fn hard_gate_eval(k: usize, a: bool, b: bool) -> Result<bool, DlnError> {
    Ok(Gate::new(k)?.hard(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert_eq!(soft_gate_eval(1, 0.5, 0.5).unwrap(), 0.25);
        assert_eq!(soft_gate_eval(15, 0.2, 0.9).unwrap(), 1.0);
        // a + b − 2ab at (0.3, 0.6) = 0.9 − 0.36
        assert!((soft_gate_eval(6, 0.3, 0.6).unwrap() - 0.54).abs() < 1e-15);
        assert!(hard_gate_eval(1, true, true).unwrap());
        assert!(!hard_gate_eval(1, true, false).unwrap());
    }

    #[test]
    fn out_of_range_index() {
        assert!(matches!(soft_gate_eval(16, 0.0, 0.0), Err(DlnError::GateIndex(16))));
        assert!(hard_gate_eval(99, true, true).is_err());
    }

    #[test]
    fn named_truth_tables() {
        let reference: [(Gate, fn(bool, bool) -> bool); 16] = [
            (Gate::FALSE, |_, _| false),
            (Gate::AND, |a, b| a && b),
            (Gate::A_AND_NOT_B, |a, b| a && !b),
            (Gate::A, |a, _| a),
            (Gate::NOT_A_AND_B, |a, b| !a && b),
            (Gate::B, |_, b| b),
            (Gate::XOR, |a, b| a ^ b),
            (Gate::OR, |a, b| a || b),
            (Gate::NOR, |a, b| !(a || b)),
            (Gate::XNOR, |a, b| !(a ^ b)),
            (Gate::NOT_B, |_, b| !b),
            (Gate::A_OR_NOT_B, |a, b| a || !b),
            (Gate::NOT_A, |a, _| !a),
            (Gate::NOT_A_OR_B, |a, b| !a || b),
            (Gate::NAND, |a, b| !(a && b)),
            (Gate::TRUE, |_, _| true),
        ];
        for (g, f) in reference {
            assert_eq!(Gate::from_fn(f), g, "{g}");
            for a in [false, true] {
                for b in [false, true] {
                    assert_eq!(g.hard(a, b), f(a, b));
                }
            }
        }
    }

    #[test]
    fn corner_agreement_exhaustive() {
        for g in Gate::all() {
            for a in [false, true] {
                for b in [false, true] {
                    let soft = g.soft(a as u8 as f64, b as u8 as f64);
                    assert_eq!(soft, g.hard(a, b) as u8 as f64, "{g} at ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn swap_and_negate() {
        for g in Gate::all() {
            for a in [false, true] {
                for b in [false, true] {
                    assert_eq!(g.swapped().hard(a, b), g.hard(b, a));
                    assert_eq!(g.negate_a().hard(a, b), g.hard(!a, b));
                    assert_eq!(g.negate_b().hard(a, b), g.hard(a, !b));
                }
            }
            assert_eq!(g.swapped().swapped(), g);
        }
        assert_eq!(Gate::A_AND_NOT_B.swapped(), Gate::NOT_A_AND_B);
        assert!(!Gate::NOT_B.depends_on_a());
        assert!(Gate::NOT_B.depends_on_b());
    }

    #[test]
    fn names_round_trip() {
        for g in Gate::all() {
            assert_eq!(Gate::from_name(g.name()), Some(g));
        }
    }

    // Central differences at interior points, checked against the analytic table.
    #[test]
    fn derivatives_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..100 {
            let a: f64 = rng.random_range(0.01..0.99);
            let b: f64 = rng.random_range(0.01..0.99);
            for g in Gate::all() {
                let (da, db) = g.soft_grad(a, b);
                let fda = (g.soft(a + h, b) - g.soft(a - h, b)) / (2.0 * h);
                let fdb = (g.soft(a, b + h) - g.soft(a, b - h)) / (2.0 * h);
                assert!((da - fda).abs() < 1e-6 && (db - fdb).abs() < 1e-6, "{g}");
            }
        }
    }
}
