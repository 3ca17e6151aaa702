//! Synthetic inputs: random circuits and a voice-measurement regression
//! table shaped like the Parkinson's telemonitoring data.

use dln_core::circuit::{HardCircuit, Node, SumLink};
use dln_core::gates::Gate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Circuit over `n_atoms` single-feature thresholds at 0.5 (one per
/// feature, random polarity), so 0/1 inputs realize every atom assignment.
/// Gates draw operands from all earlier nodes, sometimes the same node
/// twice; a constant node is added half of the time.
pub fn random_circuit(rng: &mut ChaCha8Rng, n_atoms: usize, n_gates: usize, n_links: usize) -> HardCircuit {
    let mut c = HardCircuit::empty(n_atoms);
    for f in 0..n_atoms {
        c.nodes.push(Node::Threshold { feature: f, bias: 0.5, positive: rng.random() });
    }
    if rng.random_bool(0.5) {
        c.nodes.push(Node::Const { value: rng.random() });
    }
    for g in 0..n_gates {
        let n = c.nodes.len();
        let a = rng.random_range(0..n);
        let b = if rng.random_bool(0.1) { a } else { rng.random_range(0..n) };
        let gate = Gate::new(rng.random_range(0..16)).expect("index below 16");
        c.nodes.push(Node::Gate { gate, a, b, layer: 1 + g / 8 });
    }
    for _ in 0..n_links {
        let node = rng.random_range(0..c.nodes.len());
        c.links.push(SumLink { node, coefficient: rng.random_range(-3.0..3.0) });
    }
    c.target_mean = rng.random_range(-5.0..5.0);
    c.target_std = rng.random_range(0.1..4.0);
    c
}

pub const PARKINSONS_COLUMNS: [&str; 20] = [
    "age",
    "sex",
    "test_time",
    "jitter_pct",
    "jitter_abs",
    "jitter_rap",
    "jitter_ppq5",
    "jitter_ddp",
    "shimmer",
    "shimmer_db",
    "shimmer_apq3",
    "shimmer_apq5",
    "shimmer_apq11",
    "shimmer_dda",
    "nhr",
    "hnr",
    "rpde",
    "dfa",
    "ppe",
    "total_updrs",
];

/// CSV text with 18 continuous voice and demographic columns, a categorical
/// `sex` column and a `total_updrs` target. Rows come from 42 simulated
/// subjects whose latent severity drifts over `test_time` and drives the
/// voice measures; the target adds threshold interactions between age, sex
/// and several measures on top of the severity trend.
pub fn parkinsons_like(n_rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let z = |rng: &mut ChaCha8Rng, sd: f64| sd * unit.sample(rng);
    struct Subject {
        age: f64,
        male: bool,
        severity: f64,
        rate: f64,
        offset: f64,
    }
    let subjects: Vec<Subject> = (0..42)
        .map(|_| Subject {
            age: rng.random_range(36.0..85.0),
            male: rng.random_bool(0.68),
            severity: z(&mut rng, 1.0),
            rate: rng.random_range(0.002..0.01),
            offset: z(&mut rng, 3.0),
        })
        .collect();
    let mut out = PARKINSONS_COLUMNS.join(",");
    out.push('\n');
    for _ in 0..n_rows {
        let sub = &subjects[rng.random_range(0..subjects.len())];
        let t: f64 = rng.random_range(-5.0..215.0);
        let s = sub.severity + sub.rate * t + 0.02 * (sub.age - 65.0) + z(&mut rng, 0.3);
        let jitter = (-5.0 + 0.35 * s + z(&mut rng, 0.25)).exp();
        let shimmer = (-3.2 + 0.3 * s + z(&mut rng, 0.25)).exp();
        let mut row = vec![format!("{:.1}", sub.age), if sub.male { "male" } else { "female" }.to_string()];
        row.push(format!("{t:.3}"));
        for factor in [100.0, 0.007, 0.5, 0.55, 1.5] {
            row.push(format!("{:.6}", jitter * factor * z(&mut rng, 0.1).exp()));
        }
        for factor in [1.0, 9.0, 0.5, 0.6, 0.8, 1.5] {
            row.push(format!("{:.6}", shimmer * factor * z(&mut rng, 0.1).exp()));
        }
        let nhr = (-4.0 + 0.4 * s + z(&mut rng, 0.4)).exp();
        let hnr = 21.0 - 2.5 * s + z(&mut rng, 2.0);
        let rpde = 0.54 + 0.05 * s + z(&mut rng, 0.08);
        let dfa = 0.65 + z(&mut rng, 0.06);
        let ppe = 0.22 + 0.06 * s + z(&mut rng, 0.07);
        for v in [nhr, hnr, rpde, dfa, ppe] {
            row.push(format!("{v:.6}"));
        }
        let ind = |c: bool| f64::from(u8::from(c));
        let y = 29.0
            + 6.0 * s
            + 5.0 * ind(sub.age > 65.0 && sub.male)
            + 4.0 * ind(ppe > 0.25 && hnr < 20.0)
            - 3.0 * ind(dfa > 0.7 && rpde < 0.5)
            + 0.02 * t * ind(sub.age > 60.0)
            + sub.offset
            + z(&mut rng, 2.0);
        row.push(format!("{y:.4}"));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parkinsons_table_shape() {
        let text = parkinsons_like(50, 1);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 51);
        assert!(lines.iter().all(|l| l.split(',').count() == PARKINSONS_COLUMNS.len()));
        assert_eq!(text, parkinsons_like(50, 1));
    }
}
