//! Sequential-measurement simulation with the textbook Born rule and
//! state update `ρ ↦ M(ρ) / tr M(ρ)`, used as an oracle for the trace rule.

use rand::Rng;

use crate::channels::{validate_instrument, Instrument};
use crate::error::{Error, Result};
use crate::process::{check_density, prob_table, sequential_process, OutcomeDistribution, Scenario};
use crate::random::rng;
use crate::tensor::ComplexMatrix;

/// Default number of simulated runs.
pub const DEFAULT_SAMPLES: u64 = 100_000;

/// Outcome tuples with `|z|` above this are flagged.
pub const Z_THRESHOLD: f64 = 4.0;

/// Per-step outcome probabilities may drift from 1 by at most this before
/// sampling refuses to renormalize.
pub const RENORM_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleEntry {
    pub outcome: Vec<String>,
    pub count: u64,
    pub frequency: f64,
    pub predicted: f64,
    pub std_error: f64,
    pub z_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleReport {
    pub seed: u64,
    pub samples: u64,
    pub entries: Vec<SampleEntry>,
    /// Largest gap between trace-rule and Born-plus-update predictions, when both were computed.
    pub analytic_deviation: Option<f64>,
}

impl SampleReport {
    pub fn flagged(&self) -> impl Iterator<Item = &SampleEntry> {
        self.entries.iter().filter(|e| e.z_score.is_nan() || e.z_score.abs() > Z_THRESHOLD)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z_score.abs()).fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.flagged().next().is_none()
    }

    pub fn get(&self, outcome: &[&str]) -> Option<&SampleEntry> {
        self.entries
            .iter()
            .find(|e| e.outcome.iter().map(String::as_str).eq(outcome.iter().copied()))
    }
}

/// Outcome probabilities of one step given the outcomes so far, with the
/// subtree for each outcome that can occur.
#[derive(Debug)]
struct Node {
    probs: Vec<f64>,
    children: Vec<Option<Node>>,
}

fn build_tree(rho: &ComplexMatrix, chain: &[Instrument]) -> Result<Option<Node>> {
    let Some((inst, rest)) = chain.split_first() else {
        return Ok(None);
    };
    let mut probs = Vec::with_capacity(inst.len());
    let mut children = Vec::with_capacity(inst.len());
    for map in inst.elements() {
        let out = map.apply(rho)?;
        let p = out.trace().re.max(0.0);
        probs.push(p);
        if p > 0.0 {
            children.push(build_tree(&out.scale_real(1.0 / p), rest)?);
        } else {
            children.push(None);
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > RENORM_SLACK {
        return Err(Error::Validity(format!(
            "outcome probabilities of {} sum to {total}",
            inst.region()
        )));
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(Some(Node { probs, children }))
}

fn check_chain(rho: &ComplexMatrix, chain: &[Instrument]) -> Result<()> {
    check_density(rho, 1e-9)?;
    let first = chain
        .first()
        .ok_or_else(|| Error::Composition("empty instrument chain".into()))?;
    if first.region().d_in() != rho.rows() {
        return Err(Error::Composition(format!(
            "state of dimension {} does not feed {}",
            rho.rows(),
            first.region()
        )));
    }
    for pair in chain.windows(2) {
        if pair[0].region().d_out() != pair[1].region().d_in() {
            return Err(Error::Composition(format!(
                "{} does not feed {}",
                pair[0].region(),
                pair[1].region()
            )));
        }
    }
    for inst in chain {
        let report = validate_instrument(inst, 1e-9)?;
        if !report.pass {
            return Err(Error::Validity(format!(
                "instrument on {} is invalid (trace-preservation defect {:e})",
                inst.region(),
                report.trace_preservation_defect
            )));
        }
    }
    Ok(())
}

/// Outcome tuples in odometer order (last instrument fastest).
fn outcome_tuples(chain: &[Instrument]) -> Vec<Vec<String>> {
    chain.iter().fold(vec![Vec::new()], |acc, inst| {
        acc.iter()
            .flat_map(|prefix| {
                inst.labels().iter().map(move |l| {
                    let mut t = prefix.clone();
                    t.push(l.clone());
                    t
                })
            })
            .collect()
    })
}

fn flat_index(indices: &[usize], chain: &[Instrument]) -> usize {
    indices
        .iter()
        .zip(chain)
        .fold(0, |acc, (&k, inst)| acc * inst.len() + k)
}

/// Joint probabilities from repeated Born rule and state update, in odometer order.
pub fn born_collapse_table(rho: &ComplexMatrix, chain: &[Instrument]) -> Result<OutcomeDistribution> {
    check_chain(rho, chain)?;
    let tree = build_tree(rho, chain)?.expect("chain is nonempty");
    let tuples = outcome_tuples(chain);
    let mut probs = vec![0.0; tuples.len()];
    fn walk(node: &Node, weight: f64, path: &mut Vec<usize>, chain: &[Instrument], out: &mut [f64]) {
        for (k, (p, child)) in node.probs.iter().zip(&node.children).enumerate() {
            path.push(k);
            match child {
                Some(c) => walk(c, weight * p, path, chain, out),
                None if path.len() == chain.len() => out[flat_index(path, chain)] = weight * p,
                None => {}
            }
            path.pop();
        }
    }
    walk(&tree, 1.0, &mut Vec::new(), chain, &mut probs);
    Ok(OutcomeDistribution {
        regions: chain.iter().map(|i| i.region().label().to_string()).collect(),
        entries: tuples.into_iter().zip(probs).collect(),
    })
}

fn sample_index<R: Rng>(probs: &[f64], r: &mut R) -> usize {
    let u: f64 = r.gen();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn z_score(frequency: f64, predicted: f64, n: u64) -> (f64, f64) {
    let n = n as f64;
    let se = (frequency * (1.0 - frequency) / n).sqrt();
    let diff = frequency - predicted;
    if se > 0.0 {
        return (se, diff / se);
    }
    if diff.abs() <= 1e-12 {
        return (se, 0.0);
    }
    let fallback = (predicted * (1.0 - predicted) / n).sqrt();
    let z = if fallback > 0.0 { diff / fallback } else { f64::INFINITY.copysign(diff) };
    (se, z)
}

/// Simulates `n` runs of the chain: at each step an outcome is drawn with
/// probability `tr M_k(ρ)` by inverse CDF and the state is updated. The
/// predicted column holds the Born-plus-update probabilities.
pub fn simulate_sequence(
    rho: &ComplexMatrix,
    instruments: &[Instrument],
    n: u64,
    seed: u64,
) -> Result<SampleReport> {
    let predicted = born_collapse_table(rho, instruments)?;
    let counts = sample_counts(rho, instruments, n, seed)?;
    Ok(report(seed, n, &counts, &predicted, None))
}

fn sample_counts(rho: &ComplexMatrix, chain: &[Instrument], n: u64, seed: u64) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::Validity("need at least one sample".into()));
    }
    let tree = build_tree(rho, chain)?.expect("chain is nonempty");
    let mut counts = vec![0u64; outcome_tuples(chain).len()];
    let mut r = rng(seed);
    let mut path = Vec::with_capacity(chain.len());
    for _ in 0..n {
        path.clear();
        let mut node = &tree;
        loop {
            let k = sample_index(&node.probs, &mut r);
            path.push(k);
            match &node.children[k] {
                Some(child) => node = child,
                None => break,
            }
        }
        counts[flat_index(&path, chain)] += 1;
    }
    Ok(counts)
}

fn report(
    seed: u64,
    n: u64,
    counts: &[u64],
    predicted: &OutcomeDistribution,
    analytic_deviation: Option<f64>,
) -> SampleReport {
    let entries = predicted
        .entries
        .iter()
        .zip(counts)
        .map(|((outcome, p), &count)| {
            let frequency = count as f64 / n as f64;
            let (std_error, z) = z_score(frequency, *p, n);
            SampleEntry {
                outcome: outcome.clone(),
                count,
                frequency,
                predicted: *p,
                std_error,
                z_score: z,
            }
        })
        .collect();
    SampleReport {
        seed,
        samples: n,
        entries,
        analytic_deviation,
    }
}

/// Compares sampled frequencies with the trace rule on the sequential
/// identity-channel process of the chain, and records how far the trace-rule
/// table is from the Born-plus-update table.
pub fn compare_with_process(
    rho: &ComplexMatrix,
    instruments: &[Instrument],
    n: u64,
    seed: u64,
) -> Result<SampleReport> {
    let born = born_collapse_table(rho, instruments)?;
    let chain = with_unique_regions(instruments)?;
    let regions: Vec<_> = chain.iter().map(|i| i.region().clone()).collect();
    let w = sequential_process(rho, &regions)?;
    let table = prob_table(&Scenario::new(chain.clone(), Some(w))?)?;
    let deviation = table
        .probabilities()
        .iter()
        .zip(born.probabilities())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let counts = sample_counts(rho, &chain, n, seed)?;
    Ok(report(seed, n, &counts, &table, Some(deviation)))
}

/// Relabels regions `t0, t1, ...` when the chain reuses a label.
fn with_unique_regions(chain: &[Instrument]) -> Result<Vec<Instrument>> {
    let mut labels: Vec<&str> = chain.iter().map(|i| i.region().label()).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() == chain.len() {
        return Ok(chain.to_vec());
    }
    chain
        .iter()
        .enumerate()
        .map(|(k, inst)| inst.rehome(inst.region().relabeled(format!("t{k}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{QuantumMap, Region};

    fn z(label: &str) -> Instrument {
        Instrument::projective(
            Region::new(label, 2, 2).unwrap(),
            &["0", "1"],
            vec![ComplexMatrix::basis_projector(2, 0), ComplexMatrix::basis_projector(2, 1)],
        )
        .unwrap()
    }

    fn x(label: &str) -> Instrument {
        let plus = ComplexMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let minus = ComplexMatrix::from_real_rows(&[&[0.5, -0.5], &[-0.5, 0.5]]);
        Instrument::projective(Region::new(label, 2, 2).unwrap(), &["+", "-"], vec![plus, minus]).unwrap()
    }

    fn ket0() -> ComplexMatrix {
        ComplexMatrix::basis_projector(2, 0)
    }

    #[test]
    fn deterministic_outcome_has_frequency_one() {
        let r = simulate_sequence(&ket0(), &[z("A")], 100_000, 1).unwrap();
        assert_eq!(r.get(&["0"]).unwrap().frequency, 1.0);
        assert_eq!(r.get(&["1"]).unwrap().count, 0);
        assert!(r.pass());
    }

    #[test]
    fn z_then_x_within_four_sigma() {
        let n = 100_000;
        let r = simulate_sequence(&ket0(), &[z("A"), x("B")], n, 2).unwrap();
        let e = r.get(&["0", "+"]).unwrap();
        assert!((e.frequency - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
        assert_eq!(r.entries.iter().map(|e| e.count).sum::<u64>(), n);
        assert!((r.entries.iter().map(|e| e.frequency).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r.pass());
    }

    #[test]
    fn same_seed_same_report() {
        let a = simulate_sequence(&ket0(), &[x("A"), z("B")], 1000, 9).unwrap();
        let b = simulate_sequence(&ket0(), &[x("A"), z("B")], 1000, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_sequence(&ket0(), &[x("A"), z("B")], 1000, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chain_mismatch_is_a_composition_error() {
        let trit = Instrument::deterministic(
            QuantumMap::identity(Region::new("B", 3, 3).unwrap()).unwrap(),
        )
        .unwrap();
        let err = simulate_sequence(&ket0(), &[z("A"), trit], 10, 1).unwrap_err();
        assert!(matches!(err, Error::Composition(_)));
        let err = simulate_sequence(&ket0(), &[], 10, 1).unwrap_err();
        assert!(matches!(err, Error::Composition(_)));
    }

    #[test]
    fn repeated_z_is_perfectly_correlated() {
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        let r = compare_with_process(&half, &[z("A"), z("A")], 100_000, 3).unwrap();
        let predicted: Vec<f64> = r.entries.iter().map(|e| e.predicted).collect();
        for (p, want) in predicted.iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((p - want).abs() < 1e-12);
        }
        assert!(r.analytic_deviation.unwrap() < 1e-12);
        assert_eq!(r.get(&["0", "1"]).unwrap().count, 0);
        assert!(r.pass());
    }

    #[test]
    fn z_then_x_against_process() {
        let r = compare_with_process(&ket0(), &[z("A"), x("B")], 100_000, 4).unwrap();
        assert!((r.get(&["0", "+"]).unwrap().predicted - 0.5).abs() < 1e-12);
        assert!((r.get(&["0", "-"]).unwrap().predicted - 0.5).abs() < 1e-12);
        assert!(r.get(&["1", "+"]).unwrap().predicted.abs() < 1e-12);
        assert!(r.pass());
    }

    #[test]
    fn single_deterministic_instrument() {
        let region = Region::new("A", 2, 2).unwrap();
        let inst = Instrument::deterministic(crate::channels::random_cptp(&region, 1)).unwrap();
        let r = compare_with_process(&crate::random::random_density(2, 2), &[inst], 1000, 5).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].frequency, 1.0);
        assert!(r.pass());
    }

    #[test]
    fn invalid_instruments_are_rejected() {
        let region = Region::new("A", 2, 2).unwrap();
        let half = Instrument::projective(region, &["0"], vec![ComplexMatrix::basis_projector(2, 0)]).unwrap();
        assert!(matches!(simulate_sequence(&ket0(), &[half], 10, 1), Err(Error::Validity(_))));
    }

    #[test]
    fn z_score_edge_cases() {
        assert_eq!(z_score(0.0, 0.0, 100), (0.0, 0.0));
        let (_, z) = z_score(0.0, 0.5, 100);
        assert!((z + 10.0).abs() < 1e-12);
        assert!(z_score(1.0, 1.0 - 1e-13, 100).1 == 0.0);
    }
}
