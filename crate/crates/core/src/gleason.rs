//! Frame functions on tuples of CP maps.
//!
//! A [`FrameOracle`] is a black-box probability assignment. The checks here
//! test it for normalization over instruments, additivity and homogeneity;
//! [`reconstruct_process`] recovers the unique process matrix reproducing a
//! linear oracle by querying it on a spanning set of physical CP maps.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::channels::{kraus_sum, random_cp, random_cptp, random_instrument, QuantumMap, Region};
use crate::error::{Error, Result};
use crate::process::{joint_prob, ProcessMatrix};
use crate::random::{derive_seed, rng};
use crate::tensor::{kron, ComplexMatrix, HermBasis};

/// Default pass threshold for the axiom and linearity checks.
pub const ORACLE_TOL: f64 = 1e-8;

/// Number of held-out random tuples checked after reconstruction.
pub const HOLDOUT: usize = 50;

type Evaluator = dyn Fn(&[QuantumMap]) -> f64 + Send + Sync;

/// A probability assignment to one CP map per region.
///
/// The evaluator must be pure: equal inputs give equal outputs.
#[derive(Clone)]
pub struct FrameOracle {
    regions: Vec<Region>,
    evaluator: Arc<Evaluator>,
}

impl fmt::Debug for FrameOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameOracle").field("regions", &self.regions).finish()
    }
}

impl FrameOracle {
    pub fn new(
        regions: Vec<Region>,
        evaluator: impl Fn(&[QuantumMap]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            regions,
            evaluator: Arc::new(evaluator),
        }
    }

    /// The trace rule of a process matrix.
    pub fn from_process(w: ProcessMatrix) -> Self {
        let regions = w.regions().to_vec();
        Self::new(regions, move |maps| {
            joint_prob(&w, maps).map_or(f64::NAN, |p| p.value)
        })
    }

    /// Assigns `value` to every tuple.
    pub fn constant(regions: Vec<Region>, value: f64) -> Self {
        Self::new(regions, move |_| value)
    }

    /// Squared trace-rule probability; normalized nowhere but on deterministic tuples.
    pub fn squared(w: ProcessMatrix) -> Self {
        let regions = w.regions().to_vec();
        Self::new(regions, move |maps| {
            joint_prob(&w, maps).map_or(f64::NAN, |p| p.value * p.value)
        })
    }

    /// Relative frequency from `shots` simulated runs of the trace rule.
    ///
    /// The sampling seed is derived from `seed` and the queried maps, so the
    /// oracle stays pure.
    pub fn sampled(w: ProcessMatrix, shots: u64, seed: u64) -> Self {
        let regions = w.regions().to_vec();
        Self::new(regions, move |maps| {
            let Ok(p) = joint_prob(&w, maps) else {
                return f64::NAN;
            };
            let mut h = DefaultHasher::new();
            for m in maps {
                for z in m.choi().as_dmatrix().iter() {
                    z.re.to_bits().hash(&mut h);
                    z.im.to_bits().hash(&mut h);
                }
            }
            let mut r = rng(derive_seed(seed, h.finish()));
            let hits = Binomial::new(shots, p.value)
                .expect("probability lies in [0, 1]")
                .sample(&mut r);
            hits as f64 / shots as f64
        })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn evaluate(&self, maps: &[QuantumMap]) -> f64 {
        (self.evaluator)(maps)
    }
}

/// Result of [`axiom_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct AxiomReport {
    /// `max |Σ_tuples f − 1|` over the tested instrument tuples.
    pub normalization_defect: f64,
    /// Number of evaluations outside `[0, 1]` (or not finite).
    pub range_violations: usize,
    pub trials: usize,
    pub pass: bool,
}

pub fn axiom_check(o: &FrameOracle, trials: usize, seed: u64) -> AxiomReport {
    axiom_check_with(o, trials, seed, ORACLE_TOL)
}

/// Evaluates the oracle on every outcome tuple of `trials` random instrument
/// tuples (1 to 3 outcomes per region) and sums.
pub fn axiom_check_with(o: &FrameOracle, trials: usize, seed: u64, tol: f64) -> AxiomReport {
    let mut normalization_defect = 0.0f64;
    let mut range_violations = 0;
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t as u64);
        let mut picker = rng(trial_seed);
        let instruments: Vec<Vec<QuantumMap>> = o
            .regions()
            .iter()
            .enumerate()
            .map(|(x, r)| {
                let k = picker.gen_range(1..=3);
                random_instrument(r, k, derive_seed(trial_seed, x as u64 + 1))
                    .expect("k >= 1")
                    .elements()
                    .to_vec()
            })
            .collect();
        let mut total = 0.0;
        for_each_tuple(&instruments, &mut |maps| {
            let v = o.evaluate(maps);
            if !(0.0..=1.0).contains(&v) {
                range_violations += 1;
            }
            total += v;
        });
        let defect = (total - 1.0).abs();
        normalization_defect = if defect.is_nan() { f64::INFINITY } else { normalization_defect.max(defect) };
    }
    AxiomReport {
        normalization_defect,
        range_violations,
        trials,
        pass: normalization_defect <= tol && range_violations == 0,
    }
}

fn for_each_tuple(sets: &[Vec<QuantumMap>], f: &mut dyn FnMut(&[QuantumMap])) {
    fn rec(sets: &[Vec<QuantumMap>], acc: &mut Vec<QuantumMap>, f: &mut dyn FnMut(&[QuantumMap])) {
        match sets.split_first() {
            None => f(acc),
            Some((head, tail)) => {
                for m in head {
                    acc.push(m.clone());
                    rec(tail, acc, f);
                    acc.pop();
                }
            }
        }
    }
    rec(sets, &mut Vec::with_capacity(sets.len()), f);
}

fn with_slot(others: &[QuantumMap], index: usize, m: &QuantumMap) -> Vec<QuantumMap> {
    let mut maps = others.to_vec();
    maps[index] = m.clone();
    maps
}

/// `|f(M₁ + M₂, ·) − f(M₁, ·) − f(M₂, ·)|` with `others` fixed outside slot `index`.
pub fn additivity_defect(
    o: &FrameOracle,
    index: usize,
    m1: &QuantumMap,
    m2: &QuantumMap,
    others: &[QuantumMap],
) -> Result<f64> {
    let sum = m1.sum(m2)?;
    let f = |m: &QuantumMap| o.evaluate(&with_slot(others, index, m));
    Ok((f(&sum) - f(m1) - f(m2)).abs())
}

/// `|f(cM, ·) − c f(M, ·)|` with `others` fixed outside slot `index`.
pub fn homogeneity_defect(
    o: &FrameOracle,
    index: usize,
    m: &QuantumMap,
    c: f64,
    others: &[QuantumMap],
) -> Result<f64> {
    let scaled = m.scaled(c)?;
    let f = |m: &QuantumMap| o.evaluate(&with_slot(others, index, m));
    Ok((f(&scaled) - c * f(m)).abs())
}

/// Result of [`linearity_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinearityReport {
    pub additivity_defect: f64,
    pub homogeneity_defect: f64,
    pub trials: usize,
    pub pass: bool,
}

pub fn linearity_check(o: &FrameOracle, trials: usize, seed: u64) -> LinearityReport {
    linearity_check_with(o, trials, seed, ORACLE_TOL)
}

/// For each trial and region: fix random CPTP maps elsewhere, take two
/// outcomes of a random three-outcome instrument for the additivity test,
/// and a random real and a random rational factor in `(0, 1]` for homogeneity.
pub fn linearity_check_with(o: &FrameOracle, trials: usize, seed: u64, tol: f64) -> LinearityReport {
    let mut add = 0.0f64;
    let mut hom = 0.0f64;
    let regions = o.regions();
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t as u64);
        let mut r = rng(trial_seed);
        let others: Vec<QuantumMap> = regions
            .iter()
            .enumerate()
            .map(|(x, reg)| random_cptp(reg, derive_seed(trial_seed, 100 + x as u64)))
            .collect();
        for (x, reg) in regions.iter().enumerate() {
            let inst = random_instrument(reg, 3, derive_seed(trial_seed, 200 + x as u64))
                .expect("three outcomes");
            let (m1, m2) = (&inst.elements()[0], &inst.elements()[1]);
            let d = additivity_defect(o, x, m1, m2, &others).expect("outcomes of one instrument add");
            add = nan_max(add, d);

            let real_c: f64 = 1.0 - r.gen::<f64>();
            let den: u32 = r.gen_range(1..=12);
            let num: u32 = r.gen_range(1..=den);
            for c in [real_c, f64::from(num) / f64::from(den)] {
                let d = homogeneity_defect(o, x, m1, c, &others).expect("c lies in (0, 1]");
                hom = nan_max(hom, d);
            }
        }
    }
    LinearityReport {
        additivity_defect: add,
        homogeneity_defect: hom,
        trials,
        pass: add <= tol && hom <= tol,
    }
}

fn nan_max(acc: f64, v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        acc.max(v)
    }
}

/// Physical CP maps spanning the Choi space of one region, together with
/// the linear map back to an orthonormal Hermitian basis.
#[derive(Clone, Debug)]
pub struct SpanningSet {
    basis: HermBasis,
    maps: Vec<QuantumMap>,
    /// `to_basis[(μ, ν)]`: coefficient of map `ν` in basis element `μ`.
    to_basis: DMatrix<f64>,
}

impl SpanningSet {
    /// Spanning set from the Gell-Mann basis of the region's Choi space.
    pub fn canonical(region: &Region) -> Result<Self> {
        Self::from_basis(region, HermBasis::gell_mann(region.choi_dim()))
    }

    /// Spanning set from a seeded random orthonormal Hermitian basis.
    pub fn rotated(region: &Region, seed: u64) -> Result<Self> {
        Self::from_basis(region, HermBasis::random(region.choi_dim(), seed))
    }

    /// Each basis element `τ` is shifted and scaled to `(τ + λ 1) / s` with the
    /// smallest `λ >= 0` making it PSD and the smallest `s` making it trace
    /// non-increasing.
    pub fn from_basis(region: &Region, basis: HermBasis) -> Result<Self> {
        let n = region.choi_dim();
        if basis.dim() != n {
            return Err(Error::Shape(format!(
                "basis of dimension {} does not span Choi space of {region}",
                basis.dim()
            )));
        }
        let mut maps = Vec::with_capacity(basis.len());
        for tau in basis.elements() {
            let shift = (-tau.min_eigenvalue()?).max(0.0);
            let shifted = tau + &ComplexMatrix::identity(n).scale_real(shift);
            let scale = kraus_sum(region, &shifted)?.max_eigenvalue()?;
            if scale <= 0.0 {
                return Err(Error::Reconstruction("basis element maps to the zero map".into()));
            }
            maps.push(QuantumMap::from_choi(region.clone(), shifted.scale_real(1.0 / scale))?);
        }
        let len = basis.len();
        let coords = DMatrix::from_fn(len, len, |nu, mu| {
            maps[nu].choi().trace_product(&basis.elements()[mu]).re
        });
        let svd = coords.clone().svd(false, false);
        let smallest = svd.singular_values.min();
        if smallest < 1e-12 * svd.singular_values.max() {
            return Err(Error::Reconstruction(format!(
                "spanning set on {region} is deficient (smallest singular value {smallest:e})"
            )));
        }
        // maps = coords · basis, so basis = coords^{-1} · maps
        let to_basis = coords
            .try_inverse()
            .ok_or_else(|| Error::Reconstruction("singular coordinate system".into()))?;
        Ok(Self {
            basis,
            maps,
            to_basis,
        })
    }

    pub fn maps(&self) -> &[QuantumMap] {
        &self.maps
    }

    pub fn basis(&self) -> &HermBasis {
        &self.basis
    }
}

/// Options for [`reconstruct_process_with`].
#[derive(Clone, Debug)]
pub struct ReconstructOptions {
    pub tol: f64,
    /// Trials for the axiom and linearity preconditions.
    pub check_trials: usize,
    pub holdout: usize,
    pub seed: u64,
    /// When set, spanning sets come from random bases seeded with this value.
    pub rotated_basis: Option<u64>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            tol: ORACLE_TOL,
            check_trials: 10,
            holdout: HOLDOUT,
            seed: 0,
            rotated_basis: None,
        }
    }
}

pub fn reconstruct_process(o: &FrameOracle) -> Result<ProcessMatrix> {
    reconstruct_process_with(o, &ReconstructOptions::default())
}

/// Recovers the process matrix `W` with `f(M, ...) = tr[(⊗ M) · W]`.
///
/// The oracle is queried on every tuple of spanning-set maps, the query
/// tensor is transformed mode by mode into coefficients over products of
/// orthonormal basis elements, and `W` is assembled from them. The result is
/// checked against the oracle on held-out random tuples.
pub fn reconstruct_process_with(o: &FrameOracle, opts: &ReconstructOptions) -> Result<ProcessMatrix> {
    let axioms = axiom_check_with(o, opts.check_trials, derive_seed(opts.seed, 1), opts.tol);
    if !axioms.pass {
        return Err(Error::Precondition(format!(
            "oracle is not a frame function: normalization defect {:e}, {} range violations",
            axioms.normalization_defect, axioms.range_violations
        )));
    }
    let linear = linearity_check_with(o, opts.check_trials, derive_seed(opts.seed, 2), opts.tol);
    if !linear.pass {
        return Err(Error::Precondition(format!(
            "oracle is not linear: additivity defect {:e}, homogeneity defect {:e}",
            linear.additivity_defect, linear.homogeneity_defect
        )));
    }

    let regions = o.regions().to_vec();
    let sets = regions
        .iter()
        .enumerate()
        .map(|(x, r)| match opts.rotated_basis {
            None => SpanningSet::canonical(r),
            Some(seed) => SpanningSet::rotated(r, derive_seed(seed, x as u64)),
        })
        .collect::<Result<Vec<_>>>()?;

    let shape: Vec<usize> = sets.iter().map(|s| s.maps.len()).collect();
    let mut tensor = Vec::with_capacity(shape.iter().product());
    let map_sets: Vec<Vec<QuantumMap>> = sets.iter().map(|s| s.maps.clone()).collect();
    for_each_tuple(&map_sets, &mut |maps| tensor.push(o.evaluate(maps)));
    if tensor.iter().any(|v| !v.is_finite()) {
        return Err(Error::Reconstruction("oracle returned a non-finite value".into()));
    }

    for (k, set) in sets.iter().enumerate() {
        tensor = mode_product(&tensor, &shape, k, &set.to_basis);
    }

    let bases: Vec<&HermBasis> = sets.iter().map(|s| &s.basis).collect();
    let matrix = assemble(&tensor, &bases)?;
    let w = ProcessMatrix::new(regions.clone(), matrix.hermitian_part())?;

    let mut worst = 0.0f64;
    for t in 0..opts.holdout {
        let maps: Vec<QuantumMap> = regions
            .iter()
            .enumerate()
            .map(|(x, r)| random_cp(r, derive_seed(derive_seed(opts.seed, 1000 + t as u64), x as u64)))
            .collect();
        let predicted = w.raw_trace_rule(&maps)?.re;
        worst = nan_max(worst, (predicted - o.evaluate(&maps)).abs());
    }
    if worst > opts.tol {
        return Err(Error::Reconstruction(format!(
            "reconstructed process misses held-out queries by {worst:e}"
        )));
    }
    Ok(w)
}

/// Multiplies mode `k` of a row-major tensor by `m`: `out[.., μ, ..] = Σ_ν m[μ, ν] t[.., ν, ..]`.
fn mode_product(t: &[f64], shape: &[usize], k: usize, m: &DMatrix<f64>) -> Vec<f64> {
    let n = shape[k];
    let inner: usize = shape[k + 1..].iter().product();
    let outer: usize = shape[..k].iter().product();
    let mut out = vec![0.0; t.len()];
    for o in 0..outer {
        for mu in 0..n {
            for nu in 0..n {
                let c = m[(mu, nu)];
                if c == 0.0 {
                    continue;
                }
                let src = (o * n + nu) * inner;
                let dst = (o * n + mu) * inner;
                for i in 0..inner {
                    out[dst + i] += c * t[src + i];
                }
            }
        }
    }
    out
}

/// `Σ_μ coeffs[μ] ⊗_k τ^k_{μ_k}` for a row-major coefficient tensor.
fn assemble(coeffs: &[f64], bases: &[&HermBasis]) -> Result<ComplexMatrix> {
    let Some((first, rest)) = bases.split_first() else {
        return Ok(ComplexMatrix::identity(1).scale_real(coeffs[0]));
    };
    let stride = coeffs.len() / first.len();
    let mut acc: Option<ComplexMatrix> = None;
    for (mu, tau) in first.elements().iter().enumerate() {
        let block = assemble(&coeffs[mu * stride..(mu + 1) * stride], rest)?;
        let term = kron(tau, &block)?;
        match acc.as_mut() {
            Some(a) => *a += &term,
            None => acc = Some(term),
        }
    }
    Ok(acc.expect("bases are nonempty"))
}
