//! Read a circuit as a weighted collection of Boolean rules over
//! feature-threshold atoms.

use serde::{Deserialize, Serialize};

use super::{HardCircuit, Node};
use crate::data::ColumnTransform;
use crate::gates::Gate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "snake_case")]
pub enum Expr {
    Const { value: bool },
    Atom { feature: usize, bias: f64, positive: bool },
    Gate { gate: Gate, a: Box<Expr>, b: Box<Expr> },
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> bool {
        match self {
            Expr::Const { value } => *value,
            Expr::Atom { feature, bias, positive } => {
                if *positive {
                    x[*feature] >= *bias
                } else {
                    x[*feature] <= *bias
                }
            }
            Expr::Gate { gate, a, b } => gate.hard(a.eval(x), b.eval(x)),
        }
    }

    fn build(c: &HardCircuit, id: usize) -> Expr {
        match c.nodes[id] {
            Node::Const { value } => Expr::Const { value },
            Node::Threshold { feature, bias, positive } => Expr::Atom { feature, bias, positive },
            Node::Gate { gate, a, b, .. } => {
                Expr::Gate { gate, a: Box::new(Expr::build(c, a)), b: Box::new(Expr::build(c, b)) }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub expression: Expr,
    pub text: String,
    /// coefficient on the standardized target scale
    pub coefficient: f64,
    /// contribution in original target units: coefficient × target std
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    /// target mean: the prediction when no rule fires
    pub intercept: f64,
    pub target_std: f64,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    /// Prediction in original units, summed in rule order exactly as the
    /// circuit does.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut y = 0.0;
        for r in &self.rules {
            if r.expression.eval(x) {
                y += r.coefficient;
            }
        }
        self.intercept + self.target_std * y
    }

    pub fn render(&self) -> String {
        let mut out = format!("intercept: {}\n", self.intercept);
        for r in &self.rules {
            out.push_str(&format!("{} : weight {}\n", r.text, r.weight));
        }
        out
    }
}

/// Human-readable atom, in original feature units when a schema is known.
fn render_atom(c: &HardCircuit, feature: usize, bias: f64, positive: bool) -> String {
    let name = &c.feature_names[feature];
    if let Some(schema) = &c.schema {
        let column = &schema.columns[schema.feature_origin[feature]];
        if let ColumnTransform::Categorical { .. } = column.transform {
            let value = name.strip_prefix(&format!("{}=", column.name)).unwrap_or(name);
            // one-hot inputs are exactly 0 or 1
            let fires_on_one = if positive { bias <= 1.0 } else { bias >= 1.0 };
            let fires_on_zero = if positive { bias <= 0.0 } else { bias >= 0.0 };
            return match (fires_on_zero, fires_on_one) {
                (false, true) => format!("({} = {value})", column.name),
                (true, false) => format!("({} ≠ {value})", column.name),
                (v, _) => v.to_string(),
            };
        }
        let raw = schema.unscale_feature(feature, bias);
        return format!("({name} {} {raw})", if positive { "≥" } else { "≤" });
    }
    format!("({name} {} {bias})", if positive { "≥" } else { "≤" })
}

fn render(c: &HardCircuit, id: usize) -> String {
    match c.nodes[id] {
        Node::Const { value } => value.to_string(),
        Node::Threshold { feature, bias, positive } => render_atom(c, feature, bias, positive),
        Node::Gate { gate, a, b, .. } => gate.render(&render(c, a), &render(c, b)),
    }
}

/// One rule per sum link; the target mean becomes the intercept.
pub fn extract_rules(circuit: &HardCircuit) -> RuleSet {
    let rules = circuit
        .links
        .iter()
        .map(|l| Rule {
            expression: Expr::build(circuit, l.node),
            text: render(circuit, l.node),
            coefficient: l.coefficient,
            weight: l.coefficient * circuit.target_std,
        })
        .collect();
    RuleSet { intercept: circuit.target_mean, target_std: circuit.target_std, rules }
}
