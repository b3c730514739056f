//! Process matrices and the joint-probability trace rule.
//!
//! A process matrix `W` lives on `⊗_X (X_I ⊗ X_O)` in region order and
//! assigns to one CP map per region the probability
//!
//! ```text
//! P(M^A, M^B, ...) = tr[(M^A ⊗ M^B ⊗ ...) · W]
//! ```
//!
//! where `M^X` are Choi matrices in the convention of [`crate::channels`].
//! Conditioning on an event in one region yields an updated process on the
//! remaining regions; with the trivial-evolution process this reproduces the
//! state-update rule, and with a single measure-and-discard region the trace
//! rule reduces to the Born rule.

use std::collections::HashSet;
use std::fmt;

use crate::channels::{random_cptp_tuple, Instrument, QuantumMap, Region};
use crate::error::{Error, Result};
use crate::random::derive_seed;
use crate::tensor::{contract_subsystem, kron_all, max_entangled, ComplexMatrix, C64};

/// Raw probabilities within this distance of `[0, 1]` are clamped; anything
/// further out is a validity error.
pub const PROB_SLACK: f64 = 1e-9;

/// Events with probability at or below this cannot be conditioned on.
pub const ZERO_PROB: f64 = 1e-12;

/// Default number of random CPTP tuples in [`validate_process`].
pub const DEFAULT_TRIALS: usize = 200;

/// Agreement required between the two routes to a conditional probability.
pub const CONDITIONAL_TOL: f64 = 1e-10;

/// Agreement required between normalizing denominators computed with
/// different CPTP completions.
pub const COMPLETION_TOL: f64 = 1e-8;

/// Tolerances for [`validate_process_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessTolerances {
    pub psd: f64,
    pub normalization: f64,
    pub trace: f64,
}

impl Default for ProcessTolerances {
    fn default() -> Self {
        Self {
            psd: 1e-10,
            normalization: 1e-8,
            trace: 1e-9,
        }
    }
}

/// A positive operator on the wires of an ordered list of regions.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    regions: Vec<Region>,
    matrix: ComplexMatrix,
}

impl ProcessMatrix {
    /// Checks shapes only; see [`validate_process`] for positivity and normalization.
    pub fn new(regions: Vec<Region>, matrix: ComplexMatrix) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::Shape("a process needs at least one region".into()));
        }
        check_unique_labels(&regions)?;
        let n: usize = regions.iter().map(Region::choi_dim).product();
        if matrix.rows() != n || matrix.cols() != n {
            return Err(Error::Shape(format!(
                "process matrix is {}x{}, regions need {n}x{n}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::Validity("non-finite process matrix entry".into()));
        }
        Ok(Self { regions, matrix })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn region_index(&self, label: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.label() == label)
    }

    /// Per-region Choi dimensions `d_I · d_O`.
    pub fn region_dims(&self) -> Vec<usize> {
        self.regions.iter().map(Region::choi_dim).collect()
    }

    /// Wire dimensions in global order `A_I, A_O, B_I, B_O, ...`.
    pub fn wire_dims(&self) -> Vec<usize> {
        self.regions.iter().flat_map(Region::wire_dims).collect()
    }

    /// `Π_X d_{X_O}`, the trace of any normalized process on these regions.
    pub fn expected_trace(&self) -> f64 {
        output_product(&self.regions)
    }

    /// `tr_X[(M^X ⊗ 1) · W]` as an operator on the other regions.
    fn contract(&self, index: usize, choi: &ComplexMatrix) -> Result<ComplexMatrix> {
        contract_subsystem(&self.matrix, &self.region_dims(), index, choi)
    }

    fn check_maps(&self, maps: &[QuantumMap]) -> Result<()> {
        if maps.len() != self.regions.len() {
            return Err(Error::Composition(format!(
                "{} maps for {} regions",
                maps.len(),
                self.regions.len()
            )));
        }
        for (r, m) in self.regions.iter().zip(maps) {
            if m.region() != r {
                return Err(Error::Composition(format!(
                    "map on {} supplied for region {r}",
                    m.region()
                )));
            }
        }
        Ok(())
    }

    /// Unclamped `tr[(⊗ M^X) · W]`.
    pub fn raw_trace_rule(&self, maps: &[QuantumMap]) -> Result<C64> {
        self.check_maps(maps)?;
        let chois: Vec<&ComplexMatrix> = maps.iter().map(QuantumMap::choi).collect();
        trace_against(&self.matrix, &self.region_dims(), &chois)
    }
}

impl fmt::Display for ProcessMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let regions: Vec<String> = self.regions.iter().map(ToString::to_string).collect();
        write!(f, "process on [{}]", regions.join(", "))
    }
}

fn check_unique_labels(regions: &[Region]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in regions {
        if !seen.insert(r.label()) {
            return Err(Error::Composition(format!("duplicate region label {}", r.label())));
        }
    }
    Ok(())
}

fn output_product(regions: &[Region]) -> f64 {
    regions.iter().map(|r| r.d_out() as f64).product()
}

/// `tr[(⊗ chois) · m]`, contracting one subsystem at a time.
fn trace_against(m: &ComplexMatrix, dims: &[usize], chois: &[&ComplexMatrix]) -> Result<C64> {
    let mut current = m.clone();
    for (k, choi) in chois.iter().enumerate() {
        current = contract_subsystem(&current, &dims[k..], 0, choi)?;
    }
    Ok(current[(0, 0)])
}

/// A probability from the trace rule, clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probability {
    pub value: f64,
    /// Real part of the trace before clamping.
    pub raw: f64,
}

impl Probability {
    fn from_raw(raw: C64) -> Result<Self> {
        if raw.im.abs() > PROB_SLACK {
            return Err(Error::Validity(format!(
                "trace rule produced a complex value {raw}"
            )));
        }
        let r = raw.re;
        if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&r) {
            return Err(Error::Validity(format!(
                "trace rule produced {r}, outside [0, 1]"
            )));
        }
        Ok(Self {
            value: r.clamp(0.0, 1.0),
            raw: r,
        })
    }
}

/// Joint probability of one event per region.
pub fn joint_prob(w: &ProcessMatrix, maps: &[QuantumMap]) -> Result<Probability> {
    Probability::from_raw(w.raw_trace_rule(maps)?)
}

/// A set of instruments, one per region, optionally with a process.
#[derive(Clone, Debug)]
pub struct Scenario {
    instruments: Vec<Instrument>,
    process: Option<ProcessMatrix>,
}

impl Scenario {
    /// Instruments are reordered to follow the process's region order.
    pub fn new(instruments: Vec<Instrument>, process: Option<ProcessMatrix>) -> Result<Self> {
        let regions: Vec<Region> = instruments.iter().map(|i| i.region().clone()).collect();
        check_unique_labels(&regions)?;
        let instruments = match &process {
            None => instruments,
            Some(w) => {
                if w.regions().len() != instruments.len() {
                    return Err(Error::Composition(format!(
                        "{} instruments for a process on {} regions",
                        instruments.len(),
                        w.regions().len()
                    )));
                }
                let mut ordered = Vec::with_capacity(instruments.len());
                for r in w.regions() {
                    let inst = instruments
                        .iter()
                        .find(|i| i.region() == r)
                        .ok_or_else(|| Error::Composition(format!("no instrument for region {r}")))?;
                    ordered.push(inst.clone());
                }
                ordered
            }
        };
        Ok(Self {
            instruments,
            process,
        })
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    pub fn process(&self) -> Option<&ProcessMatrix> {
        self.process.as_ref()
    }

    pub fn regions(&self) -> Vec<Region> {
        self.instruments.iter().map(|i| i.region().clone()).collect()
    }
}

/// Probabilities over the cartesian product of outcome labels, in odometer
/// order (last region varies fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    pub regions: Vec<String>,
    pub entries: Vec<(Vec<String>, f64)>,
}

impl OutcomeDistribution {
    pub fn get(&self, outcome: &[&str]) -> Option<f64> {
        self.entries
            .iter()
            .find(|(k, _)| k.iter().map(String::as_str).eq(outcome.iter().copied()))
            .map(|(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, p)| *p).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Joint outcome distribution of a scenario under its process.
pub fn prob_table(s: &Scenario) -> Result<OutcomeDistribution> {
    let w = s
        .process()
        .ok_or_else(|| Error::Validity("scenario has no process".into()))?;
    let dims = w.region_dims();
    let mut entries = Vec::new();
    let mut prefix = Vec::new();
    table_rec(w.matrix(), &dims, s.instruments(), &mut prefix, &mut entries)?;
    Ok(OutcomeDistribution {
        regions: w.regions().iter().map(|r| r.label().to_string()).collect(),
        entries,
    })
}

fn table_rec(
    reduced: &ComplexMatrix,
    dims: &[usize],
    instruments: &[Instrument],
    prefix: &mut Vec<String>,
    out: &mut Vec<(Vec<String>, f64)>,
) -> Result<()> {
    let Some((inst, rest)) = instruments.split_first() else {
        out.push((prefix.clone(), Probability::from_raw(reduced[(0, 0)])?.value));
        return Ok(());
    };
    for (label, map) in inst.iter() {
        let next = contract_subsystem(reduced, dims, 0, map.choi())?;
        prefix.push(label.to_string());
        table_rec(&next, &dims[1..], rest, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}

/// Result of [`validate_process`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessReport {
    /// Smallest eigenvalue of the Hermitian part of `W`.
    pub psd_margin: f64,
    pub hermiticity_defect: f64,
    /// `max |tr[(⊗ C) · W] − 1|` over the tested CPTP tuples.
    pub normalization_defect: f64,
    /// `|tr W − Π d_{X_O}|`.
    pub trace_defect: f64,
    pub trials: usize,
    pub psd_pass: bool,
    pub normalization_pass: bool,
    pub trace_pass: bool,
    pub pass: bool,
}

pub fn validate_process(w: &ProcessMatrix, trials: usize, seed: u64) -> Result<ProcessReport> {
    validate_process_with(w, trials, seed, &ProcessTolerances::default())
}

/// Positivity, operational normalization over the completely depolarizing
/// tuple plus `trials` random CPTP tuples, and the trace identity.
pub fn validate_process_with(
    w: &ProcessMatrix,
    trials: usize,
    seed: u64,
    tol: &ProcessTolerances,
) -> Result<ProcessReport> {
    let hermiticity_defect = w.matrix().hermiticity_defect();
    let psd_margin = w.matrix().min_eigenvalue()?;

    let depolarizing: Vec<QuantumMap> = w
        .regions()
        .iter()
        .map(|r| QuantumMap::depolarizing(r.clone()))
        .collect();
    let mut normalization_defect = (w.raw_trace_rule(&depolarizing)? - 1.0).norm();
    for t in 0..trials {
        let tuple = random_cptp_tuple(w.regions(), derive_seed(seed, t as u64));
        normalization_defect = normalization_defect.max((w.raw_trace_rule(&tuple)? - 1.0).norm());
    }

    let trace_defect = (w.matrix().trace() - w.expected_trace()).norm();

    let psd_pass = psd_margin >= -tol.psd && hermiticity_defect <= tol.psd;
    let normalization_pass = normalization_defect <= tol.normalization;
    let trace_pass = trace_defect <= tol.trace;
    Ok(ProcessReport {
        psd_margin,
        hermiticity_defect,
        normalization_defect,
        trace_defect,
        trials,
        psd_pass,
        normalization_pass,
        trace_pass,
        pass: psd_pass && normalization_pass && trace_pass,
    })
}

fn check_index(w: &ProcessMatrix, index: usize, m: &QuantumMap) -> Result<()> {
    let r = w
        .regions()
        .get(index)
        .ok_or_else(|| Error::Composition(format!("process has no region {index}")))?;
    if m.region() != r {
        return Err(Error::Composition(format!(
            "map on {} supplied for region {r}",
            m.region()
        )));
    }
    Ok(())
}

/// `tr[(M^X ⊗ C^{rest}) · W]` for a given CPTP completion on the other regions.
pub fn update_denominator(
    w: &ProcessMatrix,
    index: usize,
    m: &QuantumMap,
    completion: &[QuantumMap],
) -> Result<f64> {
    check_index(w, index, m)?;
    let numerator = w.contract(index, m.choi())?;
    let mut rest_dims = w.region_dims();
    rest_dims.remove(index);
    if completion.len() != rest_dims.len() {
        return Err(Error::Composition("one completion map per remaining region".into()));
    }
    for (k, c) in completion.iter().enumerate() {
        let expected = &w.regions()[if k < index { k } else { k + 1 }];
        if c.region() != expected {
            return Err(Error::Composition(format!(
                "completion map on {} supplied for {expected}",
                c.region()
            )));
        }
    }
    let chois: Vec<&ComplexMatrix> = completion.iter().map(QuantumMap::choi).collect();
    Ok(trace_against(&numerator, &rest_dims, &chois)?.re)
}

/// Probability of the event `m` in region `index`, marginalized with the
/// completely depolarizing channel elsewhere.
pub fn marginal_prob(w: &ProcessMatrix, index: usize, m: &QuantumMap) -> Result<Probability> {
    check_index(w, index, m)?;
    let completion: Vec<QuantumMap> = w
        .regions()
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != index)
        .map(|(_, r)| QuantumMap::depolarizing(r.clone()))
        .collect();
    let mut maps = completion;
    maps.insert(index, m.clone());
    joint_prob(w, &maps)
}

/// Updated process on the remaining regions after observing `m` in region `index`:
///
/// ```text
/// W̃ = tr_X[(M^X ⊗ 1) · W] / tr[(M^X ⊗ C) · W]
/// ```
///
/// The denominator is evaluated with the completely depolarizing completion
/// `C` and cross-checked against a seeded random CPTP completion.
pub fn update_process(w: &ProcessMatrix, index: usize, m: &QuantumMap) -> Result<ProcessMatrix> {
    check_index(w, index, m)?;
    if w.regions().len() < 2 {
        return Err(Error::Composition(
            "updating needs at least two regions".into(),
        ));
    }
    let numerator = w.contract(index, m.choi())?;
    let mut rest = w.regions().to_vec();
    rest.remove(index);

    // Depolarizing completion: tr[(⊗ 1/d_O) N] = tr N / Π d_O.
    let denominator = numerator.trace().re / output_product(&rest);
    if denominator <= ZERO_PROB {
        return Err(Error::UndefinedConditional(format!(
            "event in region {} has probability {denominator:e}",
            w.regions()[index].label()
        )));
    }
    let random = random_cptp_tuple(&rest, derive_seed(0x5eed, rest.len() as u64));
    let check = update_denominator(w, index, m, &random)?;
    if (check - denominator).abs() > COMPLETION_TOL {
        return Err(Error::Validity(format!(
            "normalizing denominator depends on the completion ({denominator} vs {check}); \
             the process is not normalized"
        )));
    }
    ProcessMatrix::new(rest, numerator.scale_real(1.0 / denominator))
}

/// `P(rest | M^X)` for the event `m` in region `index`, which must be an
/// outcome of `instrument`. `rest` holds one map per remaining region.
///
/// Computed as the ratio of joint to marginal probability and, independently,
/// as the trace rule on the updated process; the two must agree.
pub fn conditional_prob(
    w: &ProcessMatrix,
    index: usize,
    m: &QuantumMap,
    instrument: &Instrument,
    rest: &[QuantumMap],
) -> Result<f64> {
    check_index(w, index, m)?;
    if instrument.region() != m.region() || !instrument.contains(m, 1e-12) {
        return Err(Error::UndefinedConditional(format!(
            "the conditioning event is not an outcome of the instrument on {}",
            instrument.region()
        )));
    }
    let marginal = marginal_prob(w, index, m)?;
    if marginal.raw <= ZERO_PROB {
        return Err(Error::UndefinedConditional(format!(
            "conditioning event has probability {:e}",
            marginal.raw
        )));
    }
    let mut all = rest.to_vec();
    if all.len() + 1 != w.regions().len() {
        return Err(Error::Composition("one map per remaining region".into()));
    }
    all.insert(index, m.clone());
    let ratio = joint_prob(w, &all)?.raw / marginal.raw;

    let updated = update_process(w, index, m)?;
    let via_update = joint_prob(&updated, rest)?.raw;
    if (ratio - via_update).abs() > CONDITIONAL_TOL {
        return Err(Error::Validity(format!(
            "conditional probability routes disagree: {ratio} vs {via_update}"
        )));
    }
    Ok(Probability::from_raw(C64::new(ratio, 0.0))?.value)
}

/// Checks `rho` is a density matrix within `tol`.
pub fn check_density(rho: &ComplexMatrix, tol: f64) -> Result<()> {
    if !rho.is_square() || rho.rows() == 0 {
        return Err(Error::Validity("density matrix must be square and nonempty".into()));
    }
    if !crate::tensor::is_psd(rho, tol)? {
        return Err(Error::Validity("density matrix is not positive semidefinite".into()));
    }
    let tr = rho.trace();
    if (tr - 1.0).norm() > tol {
        return Err(Error::Validity(format!("density matrix has trace {tr}")));
    }
    Ok(())
}

const DENSITY_TOL: f64 = 1e-9;

/// Single region `(d, 1)` with `W = ρ`: the trace rule is the Born rule.
pub fn state_process(rho: &ComplexMatrix) -> Result<ProcessMatrix> {
    check_density(rho, DENSITY_TOL)?;
    ProcessMatrix::new(vec![Region::new("A", rho.rows(), 1)?], rho.clone())
}

/// Two regions `A = (d, d)`, `B = (d, b_out)` connected by the identity channel:
/// `W = ρ^{A_I} ⊗ [[1]]^{A_O B_I} ⊗ 1^{B_O}`.
pub fn identity_channel_process(rho: &ComplexMatrix, b_out: usize) -> Result<ProcessMatrix> {
    let d = rho.rows();
    sequential_process(rho, &[Region::new("A", d, d)?, Region::new("B", d, b_out)?])
}

/// Two measure-and-discard regions sharing the joint state `rho_joint` on `C^{d_a} ⊗ C^{d_b}`.
pub fn spacelike_process(rho_joint: &ComplexMatrix, d_a: usize, d_b: usize) -> Result<ProcessMatrix> {
    check_density(rho_joint, DENSITY_TOL)?;
    if d_a * d_b != rho_joint.rows() {
        return Err(Error::Shape(format!(
            "{d_a} x {d_b} does not factor a {}-dimensional state",
            rho_joint.rows()
        )));
    }
    ProcessMatrix::new(
        vec![Region::new("A", d_a, 1)?, Region::new("B", d_b, 1)?],
        rho_joint.clone(),
    )
}

/// Chain of regions with trivial evolution between consecutive ones:
/// `ρ^{1_I} ⊗ [[1]]^{1_O 2_I} ⊗ ... ⊗ 1^{n_O}`.
///
/// Each region's output dimension must equal the next region's input dimension.
pub fn sequential_process(rho: &ComplexMatrix, regions: &[Region]) -> Result<ProcessMatrix> {
    check_density(rho, DENSITY_TOL)?;
    let first = regions
        .first()
        .ok_or_else(|| Error::Shape("a chain needs at least one region".into()))?;
    if first.d_in() != rho.rows() {
        return Err(Error::Composition(format!(
            "state of dimension {} does not feed {first}",
            rho.rows()
        )));
    }
    let mut factors = vec![rho.clone()];
    for pair in regions.windows(2) {
        if pair[0].d_out() != pair[1].d_in() {
            return Err(Error::Composition(format!(
                "{} does not feed {}",
                pair[0], pair[1]
            )));
        }
        factors.push(max_entangled(pair[0].d_out()));
    }
    factors.push(ComplexMatrix::identity(regions[regions.len() - 1].d_out()));
    ProcessMatrix::new(regions.to_vec(), kron_all(&factors)?)
}
