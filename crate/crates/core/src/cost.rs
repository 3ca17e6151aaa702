//! Inference cost of a circuit in basic two-input gate operations (OPs).
//!
//! AND/OR/NAND/NOR cost 1, XOR/XNOR cost 3, NOT, wires and constants are
//! free. Floating-point work is charged per half-precision add, multiply and
//! compare; their default prices come from the gate-level decompositions in
//! [`fp16`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{HardCircuit, Node};
use crate::error::{DlnError, Result};
use crate::gates::{Gate, NUM_GATES};

/// Gate-level decompositions of IEEE binary16 arithmetic (1 sign bit,
/// 5 exponent bits, 10 stored + 1 hidden significand bits) into ripple-carry
/// and array structures, priced with the primitive gate costs.
pub mod fp16 {
    pub const AND: u64 = 1;
    pub const OR: u64 = 1;
    pub const XOR: u64 = 3;
    pub const FULL_ADDER: u64 = 2 * XOR + 2 * AND + OR;
    pub const HALF_ADDER: u64 = XOR + AND;
    /// (a ∧ ¬s) ∨ (b ∧ s)
    pub const MUX2: u64 = 2 * AND + OR;
    /// per bit of a magnitude comparator: generate a∧¬b, equal ¬(a⊕b),
    /// chained with one AND and one OR
    pub const COMPARE_BIT: u64 = AND + XOR + AND + OR;

    const SIG: u64 = 11;
    const EXP: u64 = 5;
    /// shift amounts up to 15 need four mux stages
    const SHIFT_STAGES: u64 = 4;

    pub const fn ripple_adder(bits: u64) -> u64 {
        bits * FULL_ADDER
    }

    pub const fn incrementer(bits: u64) -> u64 {
        bits * HALF_ADDER
    }

    pub const fn barrel_shifter(bits: u64, stages: u64) -> u64 {
        bits * stages * MUX2
    }

    /// Leading-zero count over `bits` inputs as a priority tree, about three
    /// gates per input bit.
    pub const fn leading_zero_counter(bits: u64) -> u64 {
        3 * bits
    }

    /// 15-bit magnitude compare plus sign handling (two muxes and an XOR).
    pub const fn compare() -> u64 {
        (SIG - 1 + EXP) * COMPARE_BIT + 2 * MUX2 + XOR
    }

    /// Array multiplier on the significands (partial-product ANDs, n(n−2)
    /// full adders, n half adders), exponent add and bias removal, one-bit
    /// normalization shift, rounding increment, exponent adjust, sign XOR.
    pub const fn mul() -> u64 {
        let array = SIG * SIG * AND + SIG * (SIG - 2) * FULL_ADDER + SIG * HALF_ADDER;
        array + 2 * ripple_adder(EXP) + SIG * MUX2 + incrementer(SIG) + incrementer(EXP) + XOR
    }

    /// Exponent difference, operand swap, alignment shift with sticky OR,
    /// conditional negate, 12-bit significand add, leading-zero count,
    /// normalization shift, exponent adjust, rounding increment.
    pub const fn add() -> u64 {
        ripple_adder(EXP)
            + 2 * (SIG + EXP - 1) * MUX2
            + barrel_shifter(SIG, SHIFT_STAGES)
            + (SIG - 1) * OR
            + SIG * XOR
            + ripple_adder(SIG + 1)
            + leading_zero_counter(SIG + 1)
            + barrel_shifter(SIG + 1, SHIFT_STAGES)
            + ripple_adder(EXP)
            + incrementer(SIG)
    }
}

/// Cost of gate `k` built from AND/OR (1), XOR (3) and free negations.
pub const fn default_gate_cost(k: usize) -> u64 {
    match k {
        // FALSE, A, B, ¬B, ¬A, TRUE
        0 | 3 | 5 | 10 | 12 | 15 => 0,
        // XOR, XNOR
        6 | 9 => 3,
        _ => 1,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    pub gates: [u64; NUM_GATES],
    pub fp16_add: u64,
    pub fp16_mul: u64,
    pub fp16_compare: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            gates: std::array::from_fn(default_gate_cost),
            fp16_add: fp16::add(),
            fp16_mul: fp16::mul(),
            fp16_compare: fp16::compare(),
        }
    }
}

/// Defaults with `overrides` applied. Keys are `fp16_add`, `fp16_mul`,
/// `fp16_compare`, or a gate name such as `XOR`.
pub fn set_cost_table(overrides: &BTreeMap<String, i64>) -> Result<CostTable> {
    let mut table = CostTable::default();
    for (key, &value) in overrides {
        if value < 0 {
            return Err(DlnError::NegativeCost(key.clone()));
        }
        let v = value as u64;
        match key.as_str() {
            "fp16_add" => table.fp16_add = v,
            "fp16_mul" => table.fp16_mul = v,
            "fp16_compare" => table.fp16_compare = v,
            name => match Gate::from_name(name) {
                Some(g) => table.gates[g.index()] = v,
                None => return Err(DlnError::UnknownCostKey(key.clone())),
            },
        }
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: usize,
    pub gates: usize,
    pub ops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub threshold_ops: u64,
    pub logic_ops: u64,
    pub sum_ops: u64,
    pub total_ops: u64,
    pub n_thresholds: usize,
    pub n_gates: usize,
    pub n_links: usize,
    /// logic cost per source layer, ascending
    pub per_layer: Vec<LayerCost>,
}

/// Count OPs over every node in the circuit (simplify first to exclude dead
/// logic). The sum costs one multiply per link, one add between links, and
/// one multiply and one add to restore target units; a circuit without links
/// predicts a constant and pays nothing there.
pub fn count_ops(circuit: &HardCircuit, table: &CostTable) -> CostReport {
    let mut threshold_ops = 0;
    let mut n_thresholds = 0;
    let mut layers: BTreeMap<usize, LayerCost> = BTreeMap::new();
    for node in &circuit.nodes {
        match *node {
            Node::Const { .. } => {}
            Node::Threshold { .. } => {
                n_thresholds += 1;
                threshold_ops += table.fp16_compare;
            }
            Node::Gate { gate, layer, .. } => {
                let entry = layers.entry(layer).or_insert(LayerCost { layer, gates: 0, ops: 0 });
                entry.gates += 1;
                entry.ops += table.gates[gate.index()];
            }
        }
    }
    let n_links = circuit.links.len() as u64;
    let sum_ops = if n_links == 0 {
        0
    } else {
        n_links * table.fp16_mul + (n_links - 1) * table.fp16_add + table.fp16_mul + table.fp16_add
    };
    let per_layer: Vec<LayerCost> = layers.into_values().collect();
    let logic_ops = per_layer.iter().map(|l| l.ops).sum();
    CostReport {
        threshold_ops,
        logic_ops,
        sum_ops,
        total_ops: threshold_ops + logic_ops + sum_ops,
        n_thresholds,
        n_gates: per_layer.iter().map(|l| l.gates).sum(),
        n_links: circuit.links.len(),
        per_layer,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::SumLink;

    #[test]
    fn primitive_costs() {
        let t = CostTable::default();
        assert_eq!(t.gates[Gate::XOR.index()], 3);
        assert_eq!(t.gates[Gate::XNOR.index()], 3);
        assert_eq!(t.gates[Gate::NOT_A.index()], 0);
        assert_eq!(t.gates[Gate::A_AND_NOT_B.index()], 1);
        assert_eq!(t.gates[Gate::NAND.index()], 1);
        assert_eq!(t.gates[Gate::TRUE.index()], 0);
    }

    #[test]
    fn fp16_calibration_is_in_expected_range() {
        // full adder = 9 OPs; an 11×11 array multiplier alone is over 1000
        assert_eq!(fp16::FULL_ADDER, 9);
        assert!((1000..2000).contains(&fp16::mul()));
        assert!((400..1200).contains(&fp16::add()));
        assert!((50..200).contains(&fp16::compare()));
    }

    #[test]
    fn single_xor_gate() {
        let mut c = HardCircuit::empty(2);
        c.nodes.push(Node::Threshold { feature: 0, bias: 0.5, positive: true });
        c.nodes.push(Node::Threshold { feature: 1, bias: 0.5, positive: true });
        c.nodes.push(Node::Gate { gate: Gate::XOR, a: 0, b: 1, layer: 1 });
        let r = count_ops(&c, &CostTable::default());
        assert_eq!(r.logic_ops, 3);
        assert_eq!(r.sum_ops, 0);
        assert_eq!(count_ops(&HardCircuit::empty(0), &CostTable::default()).logic_ops, 0);
    }

    #[test]
    fn two_link_sum() {
        let mut overrides = BTreeMap::new();
        overrides.insert("fp16_mul".to_string(), 7);
        overrides.insert("fp16_add".to_string(), 5);
        let t = set_cost_table(&overrides).unwrap();
        let mut c = HardCircuit::empty(1);
        c.nodes.push(Node::Const { value: true });
        c.links = vec![SumLink { node: 0, coefficient: 1.0 }, SumLink { node: 0, coefficient: 2.0 }];
        let r = count_ops(&c, &t);
        assert_eq!(r.sum_ops, 2 * 7 + 5 + 7 + 5);
        assert_eq!(r.total_ops, r.threshold_ops + r.logic_ops + r.sum_ops);
    }

    #[test]
    fn overrides() {
        assert_eq!(set_cost_table(&BTreeMap::new()).unwrap(), CostTable::default());
        let mut o = BTreeMap::new();
        o.insert("fp16_mul".to_string(), 1500);
        assert_eq!(set_cost_table(&o).unwrap().fp16_mul, 1500);
        o.insert("XOR".to_string(), -1);
        assert!(matches!(set_cost_table(&o), Err(DlnError::NegativeCost(_))));
        let mut o = BTreeMap::new();
        o.insert("fp32_mul".to_string(), 1);
        assert!(matches!(set_cost_table(&o), Err(DlnError::UnknownCostKey(_))));
    }
}
