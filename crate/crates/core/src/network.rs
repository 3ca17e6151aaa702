//! Network parameters and the soft (training) and hard (inference) forward
//! passes, with exact reverse-mode gradients for the soft pass.
//!
//! Layout: ThresholdLayer → LogicLayer × n → SumLayer. With input
//! concatenation enabled, every logic layer after the first reads
//! `[previous layer outputs, threshold outputs]`.
//!
//! All selection distributions depend only on parameters and temperature, so
//! a [`SoftEngine`] computes them once and is then reused for every sample in
//! a batch. Per-sample activations are recorded in a [`Tape`], and
//! [`SoftEngine::backward`] accumulates into a [`GradAccumulator`] that is
//! turned into logit gradients once per batch.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{DlnError, Result};
use crate::gates::{Gate, NUM_GATES};

pub const DEFAULT_SUM_THRESHOLD: f64 = 0.8;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Heaviside step of `slope·(x − bias)`, with H(0) = 1.
#[inline]
pub fn heaviside(slope: f64, x: f64, bias: f64) -> bool {
    if slope > 0.0 {
        x >= bias
    } else if slope < 0.0 {
        x <= bias
    } else {
        true
    }
}

/// Index of the largest `row[j]` over `subset`, ties to the lowest index.
/// `subset` must be sorted ascending.
#[inline]
pub fn argmax_subset(row: &[f64], subset: &[usize]) -> usize {
    let mut best = subset[0];
    for &j in &subset[1..] {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

/// Softmax of `row[subset] / tau`; entries outside the subset carry no mass.
pub fn softmax_subset(row: &[f64], subset: &[usize], tau: f64) -> Vec<f64> {
    let max = subset.iter().map(|&j| row[j]).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = subset.iter().map(|&j| ((row[j] - max) / tau).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Bias,
    Slope,
    GateLogits,
    LinkA,
    LinkB,
    SumLinks,
    Coefficients,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::Bias,
        ParamGroup::Slope,
        ParamGroup::GateLogits,
        ParamGroup::LinkA,
        ParamGroup::LinkB,
        ParamGroup::SumLinks,
        ParamGroup::Coefficients,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub bias: Vec<f64>,
    pub slope: Vec<f64>,
    pub source_feature: Vec<usize>,
}

impl ThresholdParams {
    pub fn len(&self) -> usize {
        self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bias.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicLayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × 16`, row-major
    pub gate_logits: Vec<f64>,
    /// `out_dim × in_dim`, row-major
    pub link_a: Vec<f64>,
    pub link_b: Vec<f64>,
    /// Allowed gate indices per neuron, ascending.
    pub gate_subset: Vec<Vec<usize>>,
    /// Allowed input indices per neuron, ascending.
    pub link_subset_a: Vec<Vec<usize>>,
    pub link_subset_b: Vec<Vec<usize>>,
}

impl LogicLayerParams {
    pub fn gate_row(&self, i: usize) -> &[f64] {
        &self.gate_logits[i * NUM_GATES..(i + 1) * NUM_GATES]
    }

    pub fn link_a_row(&self, i: usize) -> &[f64] {
        &self.link_a[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn link_b_row(&self, i: usize) -> &[f64] {
        &self.link_b[i * self.in_dim..(i + 1) * self.in_dim]
    }

    /// Discrete choice `(gate, a, b)` for neuron `i`.
    pub fn hard_choice(&self, i: usize) -> (Gate, usize, usize) {
        let k = argmax_subset(self.gate_row(i), &self.gate_subset[i]);
        let a = argmax_subset(self.link_a_row(i), &self.link_subset_a[i]);
        let b = argmax_subset(self.link_b_row(i), &self.link_subset_b[i]);
        (Gate::new(k).expect("gate subsets hold valid indices"), a, b)
    }

    fn validate(&self, layer: usize) -> Result<()> {
        let n = self.out_dim;
        if self.gate_logits.len() != n * NUM_GATES
            || self.link_a.len() != n * self.in_dim
            || self.link_b.len() != n * self.in_dim
            || self.gate_subset.len() != n
            || self.link_subset_a.len() != n
            || self.link_subset_b.len() != n
        {
            return Err(DlnError::Dimension(format!("logic layer {layer} has inconsistent shapes")));
        }
        for i in 0..n {
            for (subset, bound) in [
                (&self.gate_subset[i], NUM_GATES),
                (&self.link_subset_a[i], self.in_dim),
                (&self.link_subset_b[i], self.in_dim),
            ] {
                if subset.is_empty() {
                    return Err(DlnError::EmptySubset { layer, neuron: i });
                }
                if subset.windows(2).any(|w| w[0] >= w[1]) || subset.iter().any(|&j| j >= bound) {
                    return Err(DlnError::Dimension(format!(
                        "layer {layer} neuron {i}: subset must be ascending and below {bound}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumParams {
    pub link_logits: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub threshold: f64,
}

impl SumParams {
    /// Whether link `j` survives discretization at temperature `tau`.
    pub fn retained(&self, j: usize, tau: f64) -> bool {
        sigmoid(self.link_logits[j] / tau) >= self.threshold
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub n_features: usize,
    pub threshold: ThresholdParams,
    pub layers: Vec<LogicLayerParams>,
    pub sum: SumParams,
    pub concat_inputs: bool,
}

impl NetworkParams {
    pub fn threshold_width(&self) -> usize {
        self.threshold.len()
    }

    /// Output widths: threshold layer, then each logic layer.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.threshold_width()).chain(self.layers.iter().map(|l| l.out_dim)).collect()
    }

    /// Input width logic layer `l` must have.
    pub fn expected_in_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.threshold_width()
        } else if self.concat_inputs {
            self.layers[l - 1].out_dim + self.threshold_width()
        } else {
            self.layers[l - 1].out_dim
        }
    }

    pub fn sum_in_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(self.threshold_width())
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.threshold;
        if t.slope.len() != t.len() || t.source_feature.len() != t.len() {
            return Err(DlnError::Dimension("threshold parameter lengths differ".into()));
        }
        if let Some(&f) = t.source_feature.iter().find(|&&f| f >= self.n_features) {
            return Err(DlnError::Dimension(format!("threshold reads feature {f} of {}", self.n_features)));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.in_dim != self.expected_in_dim(l) {
                return Err(DlnError::Dimension(format!(
                    "logic layer {l} expects {} inputs, previous layers provide {}",
                    layer.in_dim,
                    self.expected_in_dim(l)
                )));
            }
            layer.validate(l)?;
        }
        let d = self.sum_in_dim();
        if self.sum.link_logits.len() != d || self.sum.coefficients.len() != d {
            return Err(DlnError::Dimension(format!("sum layer expects {d} inputs")));
        }
        if !(self.sum.threshold > 0.0 && self.sum.threshold < 1.0) {
            return Err(DlnError::Config(format!("sum threshold {} not in (0,1)", self.sum.threshold)));
        }
        Ok(())
    }

    /// Random parameters for a given shape: biases uniform in [0, 1], slopes
    /// in ±[1, 4], all logits and coefficients standard normal, subsets of
    /// size `subspace` (16 = unrestricted). Used for property tests.
    pub fn random(
        n_features: usize,
        thresholds_per_feature: usize,
        widths: &[usize],
        subspace: usize,
        concat_inputs: bool,
        rng: &mut impl rand::Rng,
    ) -> NetworkParams {
        use rand_distr::{Distribution, StandardNormal};
        let normal = |rng: &mut dyn rand::RngCore, n: usize| -> Vec<f64> {
            (0..n).map(|_| StandardNormal.sample(rng)).collect()
        };
        let thr_w = n_features * thresholds_per_feature;
        let bias = (0..thr_w).map(|_| rng.random::<f64>()).collect();
        let slope = (0..thr_w)
            .map(|_| {
                let m = rng.random_range(1.0..4.0);
                if rng.random::<bool>() { m } else { -m }
            })
            .collect();
        let source_feature = (0..thr_w).map(|i| i / thresholds_per_feature).collect();
        let subset = |rng: &mut dyn rand::RngCore, universe: usize| -> Vec<usize> {
            let k = if subspace >= NUM_GATES { universe } else { subspace.min(universe) };
            let mut s = rand::seq::index::sample(rng, universe, k).into_vec();
            s.sort_unstable();
            s
        };
        let mut layers = Vec::new();
        let mut prev = thr_w;
        for (l, &out_dim) in widths.iter().enumerate() {
            let in_dim = if l > 0 && concat_inputs { prev + thr_w } else { prev };
            let gate_subset = (0..out_dim)
                .map(|_| if subspace >= NUM_GATES { (0..NUM_GATES).collect() } else { subset(rng, NUM_GATES) })
                .collect();
            let link_subset_a = (0..out_dim).map(|_| subset(rng, in_dim)).collect();
            let link_subset_b = (0..out_dim).map(|_| subset(rng, in_dim)).collect();
            layers.push(LogicLayerParams {
                in_dim,
                out_dim,
                gate_logits: normal(rng, out_dim * NUM_GATES),
                link_a: normal(rng, out_dim * in_dim),
                link_b: normal(rng, out_dim * in_dim),
                gate_subset,
                link_subset_a,
                link_subset_b,
            });
            prev = out_dim;
        }
        NetworkParams {
            n_features,
            threshold: ThresholdParams { bias, slope, source_feature },
            layers,
            sum: SumParams {
                link_logits: normal(rng, prev),
                coefficients: normal(rng, prev),
                threshold: DEFAULT_SUM_THRESHOLD,
            },
            concat_inputs,
        }
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|(_, s)| s.len()).sum()
    }

    /// Parameter tensors in canonical order, matching [`Gradients::slices`].
    pub fn slices(&self) -> Vec<(ParamGroup, &[f64])> {
        let mut v: Vec<(ParamGroup, &[f64])> =
            vec![(ParamGroup::Bias, &self.threshold.bias), (ParamGroup::Slope, &self.threshold.slope)];
        for l in &self.layers {
            v.push((ParamGroup::GateLogits, &l.gate_logits));
            v.push((ParamGroup::LinkA, &l.link_a));
            v.push((ParamGroup::LinkB, &l.link_b));
        }
        v.push((ParamGroup::SumLinks, &self.sum.link_logits));
        v.push((ParamGroup::Coefficients, &self.sum.coefficients));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut v: Vec<(ParamGroup, &mut [f64])> = vec![
            (ParamGroup::Bias, &mut self.threshold.bias),
            (ParamGroup::Slope, &mut self.threshold.slope),
        ];
        for l in &mut self.layers {
            v.push((ParamGroup::GateLogits, &mut l.gate_logits));
            v.push((ParamGroup::LinkA, &mut l.link_a));
            v.push((ParamGroup::LinkB, &mut l.link_b));
        }
        v.push((ParamGroup::SumLinks, &mut self.sum.link_logits));
        v.push((ParamGroup::Coefficients, &mut self.sum.coefficients));
        v
    }
}

/// Which relaxations use a discrete forward value with the relaxed backward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteConfig {
    /// Heaviside forward for threshold sigmoids.
    pub threshold: bool,
    /// One-hot forward for the gate-function softmax.
    pub gate: bool,
    /// One-hot forward for the two link-selection softmaxes.
    pub links: bool,
    /// Indicator forward for SumLayer link gates.
    #[serde(default)]
    pub sum: bool,
}

impl Default for SteConfig {
    fn default() -> Self {
        SteConfig { threshold: true, gate: true, links: true, sum: false }
    }
}

impl SteConfig {
    pub fn off() -> Self {
        SteConfig { threshold: false, gate: false, links: false, sum: false }
    }

    pub fn all() -> Self {
        SteConfig { threshold: true, gate: true, links: true, sum: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub bias: Vec<f64>,
    pub slope: Vec<f64>,
    pub layers: Vec<LayerGradients>,
    pub sum_links: Vec<f64>,
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGradients {
    pub gate_logits: Vec<f64>,
    pub link_a: Vec<f64>,
    pub link_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &NetworkParams) -> Self {
        Gradients {
            bias: vec![0.0; p.threshold.len()],
            slope: vec![0.0; p.threshold.len()],
            layers: p
                .layers
                .iter()
                .map(|l| LayerGradients {
                    gate_logits: vec![0.0; l.gate_logits.len()],
                    link_a: vec![0.0; l.link_a.len()],
                    link_b: vec![0.0; l.link_b.len()],
                })
                .collect(),
            sum_links: vec![0.0; p.sum.link_logits.len()],
            coefficients: vec![0.0; p.sum.coefficients.len()],
        }
    }

    pub fn slices(&self) -> Vec<(ParamGroup, &[f64])> {
        let mut v: Vec<(ParamGroup, &[f64])> =
            vec![(ParamGroup::Bias, &self.bias), (ParamGroup::Slope, &self.slope)];
        for l in &self.layers {
            v.push((ParamGroup::GateLogits, &l.gate_logits));
            v.push((ParamGroup::LinkA, &l.link_a));
            v.push((ParamGroup::LinkB, &l.link_b));
        }
        v.push((ParamGroup::SumLinks, &self.sum_links));
        v.push((ParamGroup::Coefficients, &self.coefficients));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut v: Vec<(ParamGroup, &mut [f64])> =
            vec![(ParamGroup::Bias, &mut self.bias), (ParamGroup::Slope, &mut self.slope)];
        for l in &mut self.layers {
            v.push((ParamGroup::GateLogits, &mut l.gate_logits));
            v.push((ParamGroup::LinkA, &mut l.link_a));
            v.push((ParamGroup::LinkB, &mut l.link_b));
        }
        v.push((ParamGroup::SumLinks, &mut self.sum_links));
        v.push((ParamGroup::Coefficients, &mut self.coefficients));
        v
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    /// Concatenated gradient values for one group.
    pub fn group(&self, group: ParamGroup) -> Vec<f64> {
        self.slices().into_iter().filter(|(g, _)| *g == group).flat_map(|(_, s)| s.to_vec()).collect()
    }
}

// ---------------------------------------------------------------------------
// Per-layer forward primitives
// ---------------------------------------------------------------------------

/// Soft threshold layer. Returns `(forward values, sigmoid values)`; the two
/// differ only when `ste` replaces the sigmoid by its Heaviside step.
pub fn threshold_forward(x: &[f64], p: &ThresholdParams, tau: f64, ste: bool) -> (Vec<f64>, Vec<f64>) {
    let mut out = Vec::with_capacity(p.len());
    let mut soft = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let xi = x[p.source_feature[i]];
        let s = sigmoid(p.slope[i] * (xi - p.bias[i]) / tau);
        soft.push(s);
        out.push(if ste { heaviside(p.slope[i], xi, p.bias[i]) as u8 as f64 } else { s });
    }
    (out, soft)
}

pub fn threshold_forward_soft(x: &[f64], p: &ThresholdParams, tau: f64, ste: bool) -> Vec<f64> {
    threshold_forward(x, p, tau, ste).0
}

pub fn threshold_forward_hard(x: &[f64], p: &ThresholdParams) -> Vec<bool> {
    (0..p.len()).map(|i| heaviside(p.slope[i], x[p.source_feature[i]], p.bias[i])).collect()
}

/// Selection state of one logic neuron at a fixed temperature.
#[derive(Clone, Debug)]
struct PreparedNeuron {
    gate_soft: Vec<f64>,
    /// multilinear coefficients of the effective gate mixture
    coef: [f64; 4],
    a_soft: Vec<f64>,
    a_eff: Vec<f64>,
    b_soft: Vec<f64>,
    b_eff: Vec<f64>,
}

fn one_hot_at(row: &[f64], subset: &[usize]) -> Vec<f64> {
    let best = argmax_subset(row, subset);
    subset.iter().map(|&j| if j == best { 1.0 } else { 0.0 }).collect()
}

#[derive(Clone, Debug)]
struct PreparedLayer {
    neurons: Vec<PreparedNeuron>,
}

impl PreparedLayer {
    fn new(p: &LogicLayerParams, tau: f64, ste_gate: bool, ste_links: bool) -> Self {
        let neurons = (0..p.out_dim)
            .map(|i| {
                let gs = &p.gate_subset[i];
                let gate_soft = softmax_subset(p.gate_row(i), gs, tau);
                let gate_eff = if ste_gate { one_hot_at(p.gate_row(i), gs) } else { gate_soft.clone() };
                let mut coef = [0.0; 4];
                for (&k, &w) in gs.iter().zip(&gate_eff) {
                    let c = Gate::new(k).expect("valid gate index").coefficients();
                    for (acc, ck) in coef.iter_mut().zip(c) {
                        *acc += w * ck;
                    }
                }
                let a_soft = softmax_subset(p.link_a_row(i), &p.link_subset_a[i], tau);
                let b_soft = softmax_subset(p.link_b_row(i), &p.link_subset_b[i], tau);
                let (a_eff, b_eff) = if ste_links {
                    (
                        one_hot_at(p.link_a_row(i), &p.link_subset_a[i]),
                        one_hot_at(p.link_b_row(i), &p.link_subset_b[i]),
                    )
                } else {
                    (a_soft.clone(), b_soft.clone())
                };
                PreparedNeuron { gate_soft, coef, a_soft, a_eff, b_soft, b_eff }
            })
            .collect();
        PreparedLayer { neurons }
    }

    fn forward(&self, p: &LogicLayerParams, x: &[f64], out: &mut Vec<f64>, ab: &mut Vec<(f64, f64)>) {
        for (i, n) in self.neurons.iter().enumerate() {
            let a: f64 = p.link_subset_a[i].iter().zip(&n.a_eff).map(|(&j, &w)| w * x[j]).sum();
            let b: f64 = p.link_subset_b[i].iter().zip(&n.b_eff).map(|(&j, &w)| w * x[j]).sum();
            let [c0, c1, c2, c3] = n.coef;
            out.push(c0 + c1 * a + c2 * b + c3 * a * b);
            ab.push((a, b));
        }
    }
}

pub fn logic_forward_soft(x: &[f64], p: &LogicLayerParams, tau: f64, ste_select: bool) -> Result<Vec<f64>> {
    p.validate(0)?;
    if x.len() != p.in_dim {
        return Err(DlnError::Dimension(format!("logic layer expects {} inputs, got {}", p.in_dim, x.len())));
    }
    let prepared = PreparedLayer::new(p, tau, ste_select, ste_select);
    let mut out = Vec::with_capacity(p.out_dim);
    let mut ab = Vec::with_capacity(p.out_dim);
    prepared.forward(p, x, &mut out, &mut ab);
    Ok(out)
}

pub fn logic_forward_hard(x: &[bool], p: &LogicLayerParams) -> Vec<bool> {
    (0..p.out_dim)
        .map(|i| {
            let (g, a, b) = p.hard_choice(i);
            g.hard(x[a], x[b])
        })
        .collect()
}

pub fn sum_forward_soft(x: &[f64], p: &SumParams, tau: f64) -> f64 {
    let mut y = 0.0;
    for j in 0..x.len() {
        y += sigmoid(p.link_logits[j] / tau) * p.coefficients[j] * x[j];
    }
    y
}

/// Sum of coefficients over retained links whose input bit is set, in
/// ascending link order.
pub fn sum_forward_hard(x: &[bool], p: &SumParams, tau_final: f64) -> f64 {
    let mut y = 0.0;
    for j in 0..x.len() {
        if x[j] && p.retained(j, tau_final) {
            y += p.coefficients[j];
        }
    }
    y
}

/// Discrete evaluation straight from trained parameters: Heaviside
/// thresholds, arg-max gates and links, thresholded sum links.
pub fn network_forward_hard_params(params: &NetworkParams, tau_final: f64, x: &[f64]) -> f64 {
    let thr = threshold_forward_hard(x, &params.threshold);
    let mut cur = thr.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        if l > 0 && params.concat_inputs {
            cur.extend_from_slice(&thr);
        }
        cur = logic_forward_hard(&cur, layer);
    }
    sum_forward_hard(&cur, &params.sum, tau_final)
}

// ---------------------------------------------------------------------------
// Whole-network soft pass with tape
// ---------------------------------------------------------------------------

static ENGINE_IDS: AtomicU64 = AtomicU64::new(1);

/// Activations recorded by one soft forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    engine: u64,
    input: Vec<f64>,
    thr_out: Vec<f64>,
    thr_soft: Vec<f64>,
    layer_in: Vec<Vec<f64>>,
    ab: Vec<Vec<(f64, f64)>>,
    layer_out: Vec<Vec<f64>>,
    pub prediction: f64,
}

impl Tape {
    pub fn threshold_outputs(&self) -> &[f64] {
        &self.thr_out
    }

    pub fn layer_outputs(&self, l: usize) -> &[f64] {
        &self.layer_out[l]
    }
}

/// Raw per-batch accumulators; converted to logit gradients by
/// [`SoftEngine::gradients`].
#[derive(Clone, Debug)]
pub struct GradAccumulator {
    engine: u64,
    bias: Vec<f64>,
    slope: Vec<f64>,
    /// per layer, per neuron: Σ dy·[1, a, b, ab]
    coef: Vec<Vec<[f64; 4]>>,
    /// per layer, per neuron, per subset position: Σ ∂L/∂(effective weight)
    sel_a: Vec<Vec<Vec<f64>>>,
    sel_b: Vec<Vec<Vec<f64>>>,
    sum_links: Vec<f64>,
    coefficients: Vec<f64>,
}

/// Soft forward/backward at a fixed temperature for a frozen parameter set.
pub struct SoftEngine<'a> {
    params: &'a NetworkParams,
    tau: f64,
    ste: SteConfig,
    id: u64,
    layers: Vec<PreparedLayer>,
    sum_soft: Vec<f64>,
    sum_eff: Vec<f64>,
}

impl<'a> SoftEngine<'a> {
    pub fn new(params: &'a NetworkParams, tau: f64, ste: SteConfig) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(DlnError::Config(format!("temperature must be positive, got {tau}")));
        }
        params.validate()?;
        let layers = params.layers.iter().map(|l| PreparedLayer::new(l, tau, ste.gate, ste.links)).collect();
        let sum_soft: Vec<f64> = params.sum.link_logits.iter().map(|s| sigmoid(s / tau)).collect();
        let sum_eff = if ste.sum {
            sum_soft.iter().map(|&g| if g >= params.sum.threshold { 1.0 } else { 0.0 }).collect()
        } else {
            sum_soft.clone()
        };
        Ok(SoftEngine {
            params,
            tau,
            ste,
            id: ENGINE_IDS.fetch_add(1, Ordering::Relaxed),
            layers,
            sum_soft,
            sum_eff,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        self.params
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn forward(&self, x: &[f64]) -> Result<Tape> {
        let p = self.params;
        if x.len() != p.n_features {
            return Err(DlnError::Dimension(format!("expected {} features, got {}", p.n_features, x.len())));
        }
        let (thr_out, thr_soft) = threshold_forward(x, &p.threshold, self.tau, self.ste.threshold);
        let mut layer_in = Vec::with_capacity(p.layers.len());
        let mut layer_out: Vec<Vec<f64>> = Vec::with_capacity(p.layers.len());
        let mut ab = Vec::with_capacity(p.layers.len());
        for (l, (layer, prep)) in p.layers.iter().zip(&self.layers).enumerate() {
            let mut input = if l == 0 { thr_out.clone() } else { layer_out[l - 1].clone() };
            if l > 0 && p.concat_inputs {
                input.extend_from_slice(&thr_out);
            }
            let mut out = Vec::with_capacity(layer.out_dim);
            let mut pairs = Vec::with_capacity(layer.out_dim);
            prep.forward(layer, &input, &mut out, &mut pairs);
            layer_in.push(input);
            layer_out.push(out);
            ab.push(pairs);
        }
        let last = layer_out.last().unwrap_or(&thr_out);
        let mut prediction = 0.0;
        for j in 0..last.len() {
            prediction += self.sum_eff[j] * p.sum.coefficients[j] * last[j];
        }
        Ok(Tape { engine: self.id, input: x.to_vec(), thr_out, thr_soft, layer_in, ab, layer_out, prediction })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.prediction)
    }

    pub fn accumulator(&self) -> GradAccumulator {
        let p = self.params;
        GradAccumulator {
            engine: self.id,
            bias: vec![0.0; p.threshold.len()],
            slope: vec![0.0; p.threshold.len()],
            coef: p.layers.iter().map(|l| vec![[0.0; 4]; l.out_dim]).collect(),
            sel_a: p.layers.iter().map(|l| l.link_subset_a.iter().map(|s| vec![0.0; s.len()]).collect()).collect(),
            sel_b: p.layers.iter().map(|l| l.link_subset_b.iter().map(|s| vec![0.0; s.len()]).collect()).collect(),
            sum_links: vec![0.0; p.sum.link_logits.len()],
            coefficients: vec![0.0; p.sum.coefficients.len()],
        }
    }

    /// Reverse pass for one sample, given ∂L/∂prediction.
    pub fn backward(&self, tape: &Tape, d_pred: f64, acc: &mut GradAccumulator) -> Result<()> {
        if tape.engine != self.id || acc.engine != self.id {
            return Err(DlnError::TapeMismatch);
        }
        let p = self.params;
        let tau = self.tau;
        let thr_w = p.threshold_width();
        let mut d_thr = vec![0.0; thr_w];

        // SumLayer
        let last = tape.layer_out.last().unwrap_or(&tape.thr_out);
        let mut dy: Vec<f64> = Vec::with_capacity(last.len());
        for j in 0..last.len() {
            let c = p.sum.coefficients[j];
            let g = self.sum_soft[j];
            acc.coefficients[j] += d_pred * self.sum_eff[j] * last[j];
            acc.sum_links[j] += d_pred * c * last[j] * g * (1.0 - g) / tau;
            dy.push(d_pred * self.sum_eff[j] * c);
        }

        // LogicLayers, last to first
        for l in (0..p.layers.len()).rev() {
            let layer = &p.layers[l];
            let prep = &self.layers[l];
            let x = &tape.layer_in[l];
            let mut dx = vec![0.0; layer.in_dim];
            for i in 0..layer.out_dim {
                let d = dy[i];
                if d == 0.0 {
                    continue;
                }
                let (a, b) = tape.ab[l][i];
                let n = &prep.neurons[i];
                let [_, c1, c2, c3] = n.coef;
                let cc = &mut acc.coef[l][i];
                cc[0] += d;
                cc[1] += d * a;
                cc[2] += d * b;
                cc[3] += d * a * b;
                let da = d * (c1 + c3 * b);
                let db = d * (c2 + c3 * a);
                for (pos, &j) in layer.link_subset_a[i].iter().enumerate() {
                    acc.sel_a[l][i][pos] += da * x[j];
                    dx[j] += da * n.a_eff[pos];
                }
                for (pos, &j) in layer.link_subset_b[i].iter().enumerate() {
                    acc.sel_b[l][i][pos] += db * x[j];
                    dx[j] += db * n.b_eff[pos];
                }
            }
            if l == 0 {
                for (t, v) in d_thr.iter_mut().zip(&dx) {
                    *t += v;
                }
                dy = Vec::new();
            } else {
                let prev_w = p.layers[l - 1].out_dim;
                if p.concat_inputs {
                    for (t, v) in d_thr.iter_mut().zip(&dx[prev_w..]) {
                        *t += v;
                    }
                }
                dx.truncate(prev_w);
                dy = dx;
            }
        }
        if p.layers.is_empty() {
            d_thr = dy;
        }

        // ThresholdLayer
        let t = &p.threshold;
        for i in 0..thr_w {
            if d_thr[i] == 0.0 {
                continue;
            }
            let s = tape.thr_soft[i];
            let ds = d_thr[i] * s * (1.0 - s) / tau;
            let xi = tape.input[t.source_feature[i]];
            acc.slope[i] += ds * (xi - t.bias[i]);
            acc.bias[i] -= ds * t.slope[i];
        }
        Ok(())
    }

    /// Convert accumulated effective-weight gradients into logit gradients
    /// through the soft selection distributions.
    pub fn gradients(&self, acc: &GradAccumulator) -> Result<Gradients> {
        if acc.engine != self.id {
            return Err(DlnError::TapeMismatch);
        }
        let p = self.params;
        let tau = self.tau;
        let mut g = Gradients::zeros_like(p);
        g.bias.copy_from_slice(&acc.bias);
        g.slope.copy_from_slice(&acc.slope);
        g.sum_links.copy_from_slice(&acc.sum_links);
        g.coefficients.copy_from_slice(&acc.coefficients);
        for (l, layer) in p.layers.iter().enumerate() {
            let lg = &mut g.layers[l];
            for i in 0..layer.out_dim {
                let n = &self.layers[l].neurons[i];
                let cc = acc.coef[l][i];
                let subset = &layer.gate_subset[i];
                let dp: Vec<f64> = subset
                    .iter()
                    .map(|&k| {
                        let c = Gate::new(k).expect("valid gate").coefficients();
                        c[0] * cc[0] + c[1] * cc[1] + c[2] * cc[2] + c[3] * cc[3]
                    })
                    .collect();
                softmax_backward(&n.gate_soft, &dp, tau, subset, &mut lg.gate_logits[i * NUM_GATES..]);
                let row = i * layer.in_dim;
                softmax_backward(&n.a_soft, &acc.sel_a[l][i], tau, &layer.link_subset_a[i], &mut lg.link_a[row..]);
                softmax_backward(&n.b_soft, &acc.sel_b[l][i], tau, &layer.link_subset_b[i], &mut lg.link_b[row..]);
            }
        }
        Ok(g)
    }
}

/// ∂L/∂logit_j = p_j (∂L/∂p_j − Σ_k p_k ∂L/∂p_k) / τ, scattered into `out`.
fn softmax_backward(probs: &[f64], dp: &[f64], tau: f64, subset: &[usize], out: &mut [f64]) {
    let dot: f64 = probs.iter().zip(dp).map(|(p, d)| p * d).sum();
    for ((&j, &p), &d) in subset.iter().zip(probs).zip(dp) {
        out[j] = p * (d - dot) / tau;
    }
}

/// Soft forward for one sample.
pub fn network_forward_soft(params: &NetworkParams, x: &[f64], tau: f64, ste: SteConfig) -> Result<f64> {
    SoftEngine::new(params, tau, ste)?.predict(x)
}

/// Gradients of a single sample's output with respect to every parameter,
/// scaled by `d_pred`.
pub fn network_backward(engine: &SoftEngine<'_>, tape: &Tape, d_pred: f64) -> Result<Gradients> {
    let mut acc = engine.accumulator();
    engine.backward(tape, d_pred, &mut acc)?;
    engine.gradients(&acc)
}
