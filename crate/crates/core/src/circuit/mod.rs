//! Discretized networks: a topologically ordered Boolean circuit over
//! feature-threshold atoms, feeding one floating-point weighted sum.

mod dot;
mod io;
mod rules;
mod simplify;

pub use dot::{export_dot, parse_dot};
pub use io::{
    load_circuit, load_document, load_model, save_circuit, save_document, save_model, ModelFile, CIRCUIT_FORMAT,
    FORMAT_VERSION, MODEL_FORMAT,
};
pub use rules::{extract_rules, Expr, Rule, RuleSet};
pub use simplify::{simplify, simplify_pass};

use serde::{Deserialize, Serialize};

use crate::data::Schema;
use crate::gates::Gate;
use crate::network::NetworkParams;
use crate::train::Predictor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Const { value: bool },
    /// `x[feature] ≥ bias` when `positive`, else `x[feature] ≤ bias`.
    Threshold { feature: usize, bias: f64, positive: bool },
    /// `layer` is the logic layer the gate came from (1-based).
    Gate { gate: Gate, a: usize, b: usize, layer: usize },
}

impl Node {
    pub fn is_const(&self) -> Option<bool> {
        match *self {
            Node::Const { value } => Some(value),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumLink {
    pub node: usize,
    pub coefficient: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CircuitMeta {
    /// threshold width followed by logic layer widths of the source network
    pub widths: Vec<usize>,
    pub seed: u64,
    pub config_digest: String,
    pub tau_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardCircuit {
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub nodes: Vec<Node>,
    /// in ascending order of the source SumLayer input index
    pub links: Vec<SumLink>,
    pub target_mean: f64,
    pub target_std: f64,
    /// preprocessing transforms, for rendering atoms in original units
    pub schema: Option<Schema>,
    pub metadata: CircuitMeta,
}

/// Threshold with an out-of-range bias, as the constant it equals on [0, 1].
pub fn fold_threshold(feature: usize, bias: f64, slope: f64) -> Node {
    if slope == 0.0 {
        return Node::Const { value: true };
    }
    let positive = slope > 0.0;
    if bias > 1.0 {
        Node::Const { value: !positive }
    } else if bias < 0.0 {
        Node::Const { value: positive }
    } else {
        Node::Threshold { feature, bias, positive }
    }
}

/// Turn trained parameters into a circuit: Heaviside thresholds (constant
/// when the bias lies outside [0, 1]), arg-max gates and links, and sum
/// links kept iff σ(S/τ_final) ≥ θ.
pub fn discretize(params: &NetworkParams, tau_final: f64) -> HardCircuit {
    let t = &params.threshold;
    let mut nodes: Vec<Node> = (0..t.len()).map(|i| fold_threshold(t.source_feature[i], t.bias[i], t.slope[i])).collect();
    let thr_nodes: Vec<usize> = (0..t.len()).collect();
    let mut prev: Vec<usize> = thr_nodes.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut inputs = prev.clone();
        if l > 0 && params.concat_inputs {
            inputs.extend_from_slice(&thr_nodes);
        }
        let mut cur = Vec::with_capacity(layer.out_dim);
        for i in 0..layer.out_dim {
            let (gate, a, b) = layer.hard_choice(i);
            cur.push(nodes.len());
            nodes.push(Node::Gate { gate, a: inputs[a], b: inputs[b], layer: l + 1 });
        }
        prev = cur;
    }
    let links = prev
        .iter()
        .enumerate()
        .filter(|&(j, _)| params.sum.retained(j, tau_final))
        .map(|(j, &node)| SumLink { node, coefficient: params.sum.coefficients[j] })
        .collect();
    HardCircuit {
        n_features: params.n_features,
        feature_names: (0..params.n_features).map(|j| format!("x{j}")).collect(),
        nodes,
        links,
        target_mean: 0.0,
        target_std: 1.0,
        schema: None,
        metadata: CircuitMeta { widths: params.widths(), seed: 0, config_digest: String::new(), tau_final },
    }
}

impl HardCircuit {
    /// Attach feature names and target scale from a fitted schema.
    pub fn with_schema(mut self, schema: &Schema) -> Self {
        let (mean, std) = schema.target_scale();
        self.feature_names = schema.feature_names.clone();
        self.target_mean = mean;
        self.target_std = std;
        self.schema = Some(schema.clone());
        self
    }

    /// A circuit with only constant nodes and no links.
    pub fn empty(n_features: usize) -> Self {
        HardCircuit {
            n_features,
            feature_names: (0..n_features).map(|j| format!("x{j}")).collect(),
            nodes: Vec::new(),
            links: Vec::new(),
            target_mean: 0.0,
            target_std: 1.0,
            schema: None,
            metadata: CircuitMeta::default(),
        }
    }

    pub fn n_thresholds(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Threshold { .. })).count()
    }

    pub fn n_gates(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Gate { .. })).count()
    }

    /// Node references point backwards and every link names a node.
    pub fn is_topological(&self) -> bool {
        let nodes_ok = self.nodes.iter().enumerate().all(|(i, n)| match *n {
            Node::Gate { a, b, .. } => a < i && b < i,
            Node::Threshold { feature, .. } => feature < self.n_features,
            Node::Const { .. } => true,
        });
        nodes_ok && self.links.iter().all(|l| l.node < self.nodes.len())
    }

    /// Bit value of every node for the preprocessed input `x`.
    pub fn node_values(&self, x: &[f64]) -> Vec<bool> {
        let mut v = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let bit = match *n {
                Node::Const { value } => value,
                Node::Threshold { feature, bias, positive } => {
                    if positive {
                        x[feature] >= bias
                    } else {
                        x[feature] <= bias
                    }
                }
                Node::Gate { gate, a, b, .. } => gate.hard(v[a], v[b]),
            };
            v.push(bit);
        }
        v
    }

    /// Σ C_j over links whose node is true, in link order.
    pub fn sum_bits(&self, values: &[bool]) -> f64 {
        let mut y = 0.0;
        for l in &self.links {
            if values[l.node] {
                y += l.coefficient;
            }
        }
        y
    }

    /// Prediction on the standardized target scale.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.sum_bits(&self.node_values(x))
    }

    /// Prediction in original target units.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.target_mean + self.target_std * self.forward(x)
    }
}

/// Discrete network output for a preprocessed input, standardized scale.
pub fn network_forward_hard(x: &[f64], circuit: &HardCircuit) -> f64 {
    circuit.forward(x)
}

impl Predictor for HardCircuit {
    fn predict_standardized(&self, x: &[f64]) -> f64 {
        self.forward(x)
    }
}
