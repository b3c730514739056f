//! CP maps, instruments and POVMs.
//!
//! A [`QuantumMap`] is one event in a local region. Its Choi matrix uses the
//! output-transposed convention
//!
//! ```text
//! M = Σ_{jl} |l><j| ⊗ [M(|j><l|)]^T      (input wire first, output second)
//! ```
//!
//! which is the full transpose of the textbook Choi matrix. With this choice
//! `tr_out M = Σ_k K_k^† K_k`, and joint probabilities are plain traces
//! against a process matrix with no extra transposes.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::random::{derive_seed, haar_isometry, rng};
use crate::tensor::{contract_subsystem, is_psd, partial_trace, ComplexMatrix, C64, ZERO};

/// Tolerance used when constructing maps, instruments and POVMs.
pub const CHANNEL_TOL: f64 = 1e-9;

/// Eigenvalues of a Choi matrix below this are dropped when extracting Kraus operators.
pub const RANK_CUTOFF: f64 = 1e-12;

/// A local laboratory: an input and an output Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    label: String,
    d_in: usize,
    d_out: usize,
}

impl Region {
    pub fn new(label: impl Into<String>, d_in: usize, d_out: usize) -> Result<Self> {
        let label = label.into();
        if d_in == 0 || d_out == 0 {
            return Err(Error::Shape(format!(
                "region {label}: dimensions must be positive (got {d_in}, {d_out})"
            )));
        }
        Ok(Self { label, d_in, d_out })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    /// Side length of the region's Choi matrix.
    pub fn choi_dim(&self) -> usize {
        self.d_in * self.d_out
    }

    pub fn wire_dims(&self) -> [usize; 2] {
        [self.d_in, self.d_out]
    }

    /// Same dimensions under a different label.
    pub fn relabeled(&self, label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            d_in: self.d_in,
            d_out: self.d_out,
        }
    }

    fn same_dims(&self, other: &Region) -> bool {
        self.d_in == other.d_in && self.d_out == other.d_out
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}->{})", self.label, self.d_in, self.d_out)
    }
}

/// Choi matrix of `ρ ↦ Σ_k K_k ρ K_k^†`.
pub fn choi_from_kraus(region: &Region, kraus: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let (di, dout) = (region.d_in, region.d_out);
    for (k, op) in kraus.iter().enumerate() {
        if op.rows() != dout || op.cols() != di {
            return Err(Error::Shape(format!(
                "Kraus operator {k} is {}x{}, region {region} needs {dout}x{di}",
                op.rows(),
                op.cols()
            )));
        }
    }
    let n = di * dout;
    // M_{(j,a),(l,b)} = Σ_k conj(K[a,j]) K[b,l]
    let mut choi = ComplexMatrix::zeros(n, n);
    for op in kraus {
        let v: Vec<C64> = (0..n).map(|idx| op[(idx % dout, idx / dout)]).collect();
        for r in 0..n {
            let vr = v[r].conj();
            if vr == ZERO {
                continue;
            }
            for c in 0..n {
                choi[(r, c)] += vr * v[c];
            }
        }
    }
    Ok(choi)
}

/// Kraus operators from a PSD Choi matrix via eigendecomposition.
pub fn kraus_from_choi(region: &Region, choi: &ComplexMatrix, tol: f64) -> Result<Vec<ComplexMatrix>> {
    check_choi_shape(region, choi)?;
    if choi.hermiticity_defect() > tol {
        return Err(Error::Validity("Choi matrix is not Hermitian".into()));
    }
    let (values, vectors) = choi.eigh()?;
    if let Some(&min) = values.first() {
        if min < -tol {
            return Err(Error::Validity(format!(
                "Choi matrix has negative eigenvalue {min:e}"
            )));
        }
    }
    let dout = region.d_out;
    let kraus = values
        .iter()
        .enumerate()
        .filter(|(_, &lambda)| lambda > RANK_CUTOFF)
        .map(|(col, &lambda)| {
            let s = lambda.sqrt();
            ComplexMatrix::from_fn(dout, region.d_in, |a, j| {
                vectors[(j * dout + a, col)].conj() * s
            })
        })
        .collect();
    Ok(kraus)
}

/// Applies the linear map with Choi matrix `choi` to `rho`:
/// `M(ρ) = (tr_in[(ρ ⊗ 1) M])^T`.
pub fn apply_choi(region: &Region, choi: &ComplexMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_choi_shape(region, choi)?;
    check_input(region, rho)?;
    Ok(contract_subsystem(choi, &region.wire_dims(), 0, rho)?.transpose())
}

/// `Σ_k K_k^† K_k`, read off the Choi matrix.
pub fn kraus_sum(region: &Region, choi: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_choi_shape(region, choi)?;
    partial_trace(choi, &region.wire_dims(), &[0])
}

fn check_choi_shape(region: &Region, choi: &ComplexMatrix) -> Result<()> {
    let n = region.choi_dim();
    if choi.rows() != n || choi.cols() != n {
        return Err(Error::Shape(format!(
            "Choi matrix is {}x{}, region {region} needs {n}x{n}",
            choi.rows(),
            choi.cols()
        )));
    }
    Ok(())
}

fn check_input(region: &Region, rho: &ComplexMatrix) -> Result<()> {
    if rho.rows() != region.d_in || rho.cols() != region.d_in {
        return Err(Error::Shape(format!(
            "input is {}x{}, region {region} takes {}x{}",
            rho.rows(),
            rho.cols(),
            region.d_in,
            region.d_in
        )));
    }
    Ok(())
}

/// A completely positive, trace-non-increasing map on one region.
///
/// The Choi matrix is always materialized; Kraus operators are kept when the
/// map was built from them and derived lazily otherwise.
#[derive(Clone, Debug)]
pub struct QuantumMap {
    region: Region,
    choi: ComplexMatrix,
    kraus: OnceLock<Vec<ComplexMatrix>>,
}

impl QuantumMap {
    pub fn from_kraus(region: Region, kraus: Vec<ComplexMatrix>) -> Result<Self> {
        Self::from_kraus_with_tol(region, kraus, CHANNEL_TOL)
    }

    pub fn from_kraus_with_tol(region: Region, kraus: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        if kraus.iter().any(|k| !k.is_finite()) {
            return Err(Error::Validity("non-finite Kraus entry".into()));
        }
        let choi = choi_from_kraus(&region, &kraus)?;
        let map = Self {
            region,
            choi,
            kraus: OnceLock::from(kraus),
        };
        map.check_trace_non_increasing(tol)?;
        Ok(map)
    }

    pub fn from_choi(region: Region, choi: ComplexMatrix) -> Result<Self> {
        Self::from_choi_with_tol(region, choi, CHANNEL_TOL)
    }

    pub fn from_choi_with_tol(region: Region, choi: ComplexMatrix, tol: f64) -> Result<Self> {
        check_choi_shape(&region, &choi)?;
        if !choi.is_finite() {
            return Err(Error::Validity("non-finite Choi entry".into()));
        }
        if !is_psd(&choi, tol)? {
            return Err(Error::Validity(format!(
                "Choi matrix on {region} is not positive semidefinite"
            )));
        }
        let map = Self {
            region,
            choi: choi.hermitian_part(),
            kraus: OnceLock::new(),
        };
        map.check_trace_non_increasing(tol)?;
        Ok(map)
    }

    fn check_trace_non_increasing(&self, tol: f64) -> Result<()> {
        let top = kraus_sum(&self.region, &self.choi)?.max_eigenvalue()?;
        if top > 1.0 + tol {
            return Err(Error::Validity(format!(
                "map on {} increases trace (largest eigenvalue of Σ K^†K is {top})",
                self.region
            )));
        }
        Ok(())
    }

    /// The identity channel; needs `d_in == d_out`.
    pub fn identity(region: Region) -> Result<Self> {
        if region.d_in != region.d_out {
            return Err(Error::Shape(format!("identity channel needs d_in == d_out on {region}")));
        }
        let d = region.d_in;
        Self::from_kraus(region, vec![ComplexMatrix::identity(d)])
    }

    /// `ρ ↦ U ρ U^†`.
    pub fn unitary(region: Region, u: ComplexMatrix) -> Result<Self> {
        Self::from_kraus(region, vec![u])
    }

    pub fn zero(region: Region) -> Self {
        let n = region.choi_dim();
        Self {
            region,
            choi: ComplexMatrix::zeros(n, n),
            kraus: OnceLock::from(Vec::new()),
        }
    }

    /// `ρ ↦ tr(E ρ)` on a region with trivial output; its Choi matrix is `E`.
    pub fn measure_effect(region: Region, effect: ComplexMatrix) -> Result<Self> {
        if region.d_out != 1 {
            return Err(Error::Shape(format!("measure-effect map needs d_out = 1 on {region}")));
        }
        Self::from_choi(region, effect)
    }

    /// `ρ ↦ tr(ρ) 1/d_out`: the completely depolarizing channel, Choi `1/d_out`.
    pub fn depolarizing(region: Region) -> Self {
        let n = region.choi_dim();
        let choi = ComplexMatrix::identity(n).scale_real(1.0 / region.d_out as f64);
        Self {
            region,
            choi,
            kraus: OnceLock::new(),
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        self.kraus.get_or_init(|| {
            kraus_from_choi(&self.region, &self.choi, CHANNEL_TOL)
                .expect("Choi matrix was validated at construction")
        })
    }

    /// `M(ρ) = Σ_k K_k ρ K_k^†`.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_input(&self.region, rho)?;
        let mut out = ComplexMatrix::zeros(self.region.d_out, self.region.d_out);
        for k in self.kraus() {
            out += &(&(k * rho) * &k.dagger());
        }
        Ok(out)
    }

    /// Same as [`apply`](Self::apply) but through the Choi matrix.
    pub fn apply_via_choi(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        apply_choi(&self.region, &self.choi, rho)
    }

    /// `Σ_k K_k^† K_k`.
    pub fn kraus_sum(&self) -> ComplexMatrix {
        kraus_sum(&self.region, &self.choi).expect("shape checked at construction")
    }

    /// True when `Σ_k K_k^† K_k = 1` within `tol` (operator norm).
    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let defect = &self.kraus_sum() - &ComplexMatrix::identity(self.region.d_in);
        defect.hermitian_norm().is_ok_and(|n| n <= tol)
    }

    /// `c M` for `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c.is_nan() || c < 0.0 {
            return Err(Error::Validity(format!("cannot scale a CP map by {c}")));
        }
        let kraus = self
            .kraus
            .get()
            .map(|ks| ks.iter().map(|k| k.scale_real(c.sqrt())).collect::<Vec<_>>());
        let map = Self {
            region: self.region.clone(),
            choi: self.choi.scale_real(c),
            kraus: kraus.map(OnceLock::from).unwrap_or_default(),
        };
        map.check_trace_non_increasing(CHANNEL_TOL)?;
        Ok(map)
    }

    /// `M + N`; fails if the sum increases trace.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.region != other.region {
            return Err(Error::Composition(format!(
                "cannot add maps on {} and {}",
                self.region, other.region
            )));
        }
        let kraus = match (self.kraus.get(), other.kraus.get()) {
            (Some(a), Some(b)) => OnceLock::from(a.iter().chain(b).cloned().collect::<Vec<_>>()),
            _ => OnceLock::new(),
        };
        let map = Self {
            region: self.region.clone(),
            choi: &self.choi + &other.choi,
            kraus,
        };
        map.check_trace_non_increasing(CHANNEL_TOL)?;
        Ok(map)
    }

    /// The same map on a region with matching dimensions but another label.
    pub fn rehome(&self, region: Region) -> Result<Self> {
        if !self.region.same_dims(&region) {
            return Err(Error::Composition(format!(
                "cannot move a map on {} to {region}",
                self.region
            )));
        }
        Ok(Self {
            region,
            choi: self.choi.clone(),
            kraus: self.kraus.clone(),
        })
    }
}

impl PartialEq for QuantumMap {
    /// Maps are equal when they act identically, i.e. their Choi matrices agree.
    fn eq(&self, other: &Self) -> bool {
        self.region == other.region && self.choi == other.choi
    }
}

/// A finite set of labeled CP maps on one region.
///
/// Construction only checks structure; use [`validate_instrument`] for the
/// trace-preservation condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    region: Region,
    labels: Vec<String>,
    elements: Vec<QuantumMap>,
}

impl Instrument {
    pub fn new(region: Region, outcomes: Vec<(String, QuantumMap)>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Validity(format!("instrument on {region} has no outcomes")));
        }
        let mut seen = HashSet::new();
        for (label, map) in &outcomes {
            if map.region() != &region {
                return Err(Error::Composition(format!(
                    "outcome {label} lives on {}, instrument on {region}",
                    map.region()
                )));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::Validity(format!("duplicate outcome label {label}")));
            }
        }
        let (labels, elements) = outcomes.into_iter().unzip();
        Ok(Self {
            region,
            labels,
            elements,
        })
    }

    /// Outcomes labeled `"0"`, `"1"`, ...
    pub fn from_maps(region: Region, maps: Vec<QuantumMap>) -> Result<Self> {
        let outcomes = maps
            .into_iter()
            .enumerate()
            .map(|(k, m)| (k.to_string(), m))
            .collect();
        Self::new(region, outcomes)
    }

    /// Single-outcome instrument.
    pub fn deterministic(map: QuantumMap) -> Result<Self> {
        Self::from_maps(map.region().clone(), vec![map])
    }

    /// Lüders instrument `ρ ↦ P_k ρ P_k` for the given projectors.
    pub fn projective(region: Region, labels: &[&str], projectors: Vec<ComplexMatrix>) -> Result<Self> {
        if labels.len() != projectors.len() {
            return Err(Error::Shape("one label per projector".into()));
        }
        let outcomes = labels
            .iter()
            .zip(projectors)
            .map(|(l, p)| Ok((l.to_string(), QuantumMap::from_kraus(region.clone(), vec![p])?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(region, outcomes)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn elements(&self) -> &[QuantumMap] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn outcome(&self, label: &str) -> Option<&QuantumMap> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|k| &self.elements[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &QuantumMap)> {
        self.labels.iter().map(String::as_str).zip(self.elements.iter())
    }

    /// Choi matrix of the summed map.
    pub fn summed_choi(&self) -> ComplexMatrix {
        let n = self.region.choi_dim();
        let mut acc = ComplexMatrix::zeros(n, n);
        for m in &self.elements {
            acc += m.choi();
        }
        acc
    }

    /// True when some element has (numerically) the same Choi matrix as `map`.
    pub fn contains(&self, map: &QuantumMap, tol: f64) -> bool {
        map.region() == &self.region
            && self
                .elements
                .iter()
                .any(|m| m.choi().distance(map.choi()) <= tol)
    }

    /// The same instrument on a relabeled region of equal dimensions.
    pub fn rehome(&self, region: Region) -> Result<Self> {
        let elements = self
            .elements
            .iter()
            .map(|m| m.rehome(region.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            region,
            labels: self.labels.clone(),
            elements,
        })
    }
}

/// Outcome of [`validate_instrument`].
#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentReport {
    /// Smallest Choi eigenvalue per element.
    pub element_min_eigenvalues: Vec<f64>,
    pub element_cp: Vec<bool>,
    /// `‖tr_out(Σ M) − 1‖` in operator norm.
    pub trace_preservation_defect: f64,
    pub pass: bool,
}

pub fn validate_instrument(instrument: &Instrument, tol: f64) -> Result<InstrumentReport> {
    let mut element_min_eigenvalues = Vec::with_capacity(instrument.len());
    let mut element_cp = Vec::with_capacity(instrument.len());
    for m in instrument.elements() {
        if m.region() != instrument.region() {
            return Err(Error::Composition(format!(
                "element on {} inside instrument on {}",
                m.region(),
                instrument.region()
            )));
        }
        let min = m.choi().min_eigenvalue()?;
        element_min_eigenvalues.push(min);
        element_cp.push(min >= -tol && m.choi().hermiticity_defect() <= tol);
    }
    let region = instrument.region();
    let summed = kraus_sum(region, &instrument.summed_choi())?;
    let trace_preservation_defect =
        (&summed - &ComplexMatrix::identity(region.d_in())).hermitian_norm()?;
    let pass = element_cp.iter().all(|&ok| ok) && trace_preservation_defect <= tol;
    Ok(InstrumentReport {
        element_min_eigenvalues,
        element_cp,
        trace_preservation_defect,
        pass,
    })
}

/// A positive operator-valued measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    effects: Vec<ComplexMatrix>,
}

impl Povm {
    /// Checks `0 <= E <= 1` for each effect and `Σ E = 1`.
    pub fn new(effects: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        let d = effects
            .first()
            .map(ComplexMatrix::rows)
            .ok_or_else(|| Error::Validity("POVM has no effects".into()))?;
        let mut total = ComplexMatrix::zeros(d, d);
        for (k, e) in effects.iter().enumerate() {
            if e.rows() != d || e.cols() != d {
                return Err(Error::Shape(format!("effect {k} is not {d}x{d}")));
            }
            let complement = &ComplexMatrix::identity(d) - e;
            if !is_psd(e, tol)? || !is_psd(&complement, tol)? {
                return Err(Error::Validity(format!("effect {k} is not between 0 and 1")));
            }
            total += e;
        }
        let defect = (&total - &ComplexMatrix::identity(d)).hermitian_norm()?;
        if defect > tol {
            return Err(Error::Validity(format!("effects sum to 1 only within {defect:e}")));
        }
        Ok(Self { effects })
    }

    pub fn dim(&self) -> usize {
        self.effects[0].rows()
    }

    pub fn effects(&self) -> &[ComplexMatrix] {
        &self.effects
    }

    /// Born probabilities `tr(E_k ρ)`.
    pub fn probabilities(&self, rho: &ComplexMatrix) -> Vec<f64> {
        self.effects.iter().map(|e| e.trace_product(rho).re).collect()
    }
}

/// Measure-and-discard instrument on a `(d, 1)` region whose element Choi
/// matrices are the effects themselves.
pub fn povm_to_instrument(povm: &Povm, label: &str) -> Result<Instrument> {
    let region = Region::new(label, povm.dim(), 1)?;
    let maps = povm
        .effects()
        .iter()
        .map(|e| QuantumMap::measure_effect(region.clone(), e.clone()))
        .collect::<Result<Vec<_>>>()?;
    Instrument::from_maps(region, maps)
}

/// Seeded random CPTP map from a Haar-random Stinespring isometry with
/// environment dimension `d_in * d_out` (full Kraus rank).
pub fn random_cptp(region: &Region, seed: u64) -> QuantumMap {
    let inst = random_instrument(region, 1, seed).expect("one outcome is always valid");
    inst.elements[0].clone()
}

/// Seeded random instrument with `k` outcomes: a Haar-random Stinespring
/// isometry whose environment basis is randomly partitioned into `k`
/// nonempty groups.
pub fn random_instrument(region: &Region, k: usize, seed: u64) -> Result<Instrument> {
    if k == 0 {
        return Err(Error::Validity("an instrument needs at least one outcome".into()));
    }
    let (di, dout) = (region.d_in, region.d_out);
    let env = k.max(di * dout);
    let mut rng = rng(seed);
    let v = haar_isometry(dout * env, di, &mut rng);

    let mut order: Vec<usize> = (0..env).collect();
    order.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &e) in order.iter().enumerate() {
        let g = if pos < k { pos } else { rng.gen_range(0..k) };
        groups[g].push(e);
    }

    let maps = groups
        .iter()
        .map(|group| {
            let kraus = group
                .iter()
                .map(|&e| ComplexMatrix::from_fn(dout, di, |a, j| v[(a * env + e, j)]))
                .collect();
            QuantumMap::from_kraus(region.clone(), kraus)
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::from_maps(region.clone(), maps)
}

/// Random CP trace-non-increasing map: one outcome of a random two-outcome instrument.
pub fn random_cp(region: &Region, seed: u64) -> QuantumMap {
    let inst = random_instrument(region, 2, seed).expect("two outcomes are valid");
    inst.elements[0].clone()
}

/// Random `k`-outcome POVM on dimension `d`.
pub fn random_povm(d: usize, k: usize, seed: u64) -> Result<Povm> {
    let region = Region::new("povm", d, 1)?;
    let inst = random_instrument(&region, k, seed)?;
    Povm::new(inst.elements.iter().map(|m| m.choi().clone()).collect(), 1e-9)
}

/// One random CPTP map per region, with sub-seeds derived from `seed`.
pub fn random_cptp_tuple(regions: &[Region], seed: u64) -> Vec<QuantumMap> {
    regions
        .iter()
        .enumerate()
        .map(|(x, r)| random_cptp(r, derive_seed(seed, x as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_entangled;

    fn qubit() -> Region {
        Region::new("A", 2, 2).unwrap()
    }

    fn plus() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]])
    }

    /// Choi matrix straight from `Σ_{jl} |l><j| ⊗ [M(|j><l|)]^T`.
    fn choi_by_definition(region: &Region, f: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> ComplexMatrix {
        let (di, dout) = (region.d_in(), region.d_out());
        let mut out = ComplexMatrix::zeros(di * dout, di * dout);
        for j in 0..di {
            for l in 0..di {
                let image = f(&ComplexMatrix::unit(di, j, l)).transpose();
                out += &crate::tensor::kron(&ComplexMatrix::unit(di, l, j), &image).unwrap();
            }
        }
        out
    }

    #[test]
    fn identity_channel_choi_is_max_entangled() {
        let id = QuantumMap::identity(qubit()).unwrap();
        assert_eq!(id.choi(), &max_entangled(2));
        assert!((id.choi().max_eigenvalue().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn choi_from_kraus_matches_definition() {
        for seed in 0..5 {
            let region = Region::new("A", 2, 3).unwrap();
            let m = random_cp(&region, seed);
            let kraus = m.kraus().to_vec();
            let direct = choi_from_kraus(&region, &kraus).unwrap();
            let oracle = choi_by_definition(&region, |x| {
                let mut acc = ComplexMatrix::zeros(3, 3);
                for k in &kraus {
                    acc += &(&(k * x) * &k.dagger());
                }
                acc
            });
            assert!(direct.distance(&oracle) < 1e-12);
        }
    }

    #[test]
    fn measure_effect_choi_is_the_effect() {
        let region = Region::new("A", 2, 1).unwrap();
        let e = ComplexMatrix::from_rows(&[
            vec![C64::new(0.3, 0.0), C64::new(0.1, -0.2)],
            vec![C64::new(0.1, 0.2), C64::new(0.6, 0.0)],
        ])
        .unwrap();
        let oracle = choi_by_definition(&region, |x| ComplexMatrix::column(&[e.trace_product(x)]));
        assert!(oracle.distance(&e) < 1e-15);
        let m = QuantumMap::measure_effect(region.clone(), e.clone()).unwrap();
        let via_kraus = choi_from_kraus(&region, m.kraus()).unwrap();
        assert!(via_kraus.distance(&e) < 1e-12);
    }

    #[test]
    fn zero_map_has_zero_choi_and_no_kraus() {
        let z = QuantumMap::zero(qubit());
        assert_eq!(z.choi(), &ComplexMatrix::zeros(4, 4));
        assert!(kraus_from_choi(&qubit(), z.choi(), 1e-10).unwrap().is_empty());
        assert_eq!(choi_from_kraus(&qubit(), &[]).unwrap(), ComplexMatrix::zeros(4, 4));
    }

    #[test]
    fn kraus_shape_mismatch_is_rejected() {
        let err = QuantumMap::from_kraus(qubit(), vec![ComplexMatrix::identity(3)]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn kraus_from_identity_choi_is_a_phase() {
        let ks = kraus_from_choi(&qubit(), &max_entangled(2), 1e-10).unwrap();
        assert_eq!(ks.len(), 1);
        let k = &ks[0];
        let phase = k[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(k.distance(&ComplexMatrix::identity(2).scale(phase)) < 1e-12);
    }

    #[test]
    fn kraus_from_half_identity_choi_round_trips() {
        let choi = ComplexMatrix::identity(4).scale_real(0.5);
        let m = QuantumMap::from_choi(qubit(), choi.clone()).unwrap();
        assert!(m.is_trace_preserving(1e-12));
        let ks = kraus_from_choi(&qubit(), &choi, 1e-10).unwrap();
        assert_eq!(ks.len(), 4);
        assert!(choi_from_kraus(&qubit(), &ks).unwrap().distance(&choi) < 1e-12);
        let out = m.apply(&ComplexMatrix::real_diag(&[1.0, 0.0])).unwrap();
        assert!(out.distance(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-12);
    }

    #[test]
    fn non_psd_choi_is_rejected() {
        let bad = ComplexMatrix::real_diag(&[1.0, -0.1, 0.0, 0.0]);
        assert!(matches!(kraus_from_choi(&qubit(), &bad, 1e-10), Err(Error::Validity(_))));
        assert!(matches!(QuantumMap::from_choi(qubit(), bad), Err(Error::Validity(_))));
    }

    #[test]
    fn trace_increasing_maps_are_rejected() {
        let k = ComplexMatrix::identity(2).scale_real(1.1);
        assert!(matches!(QuantumMap::from_kraus(qubit(), vec![k]), Err(Error::Validity(_))));
    }

    #[test]
    fn apply_examples() {
        let rho = ComplexMatrix::from_rows(&[
            vec![C64::new(0.7, 0.0), C64::new(0.1, 0.2)],
            vec![C64::new(0.1, -0.2), C64::new(0.3, 0.0)],
        ])
        .unwrap();
        let id = QuantumMap::identity(qubit()).unwrap();
        assert!(id.apply(&rho).unwrap().distance(&rho) < 1e-15);

        let p0 = QuantumMap::from_kraus(qubit(), vec![ComplexMatrix::basis_projector(2, 0)]).unwrap();
        let out = p0.apply(&ComplexMatrix::identity(2).scale_real(0.5)).unwrap();
        assert!(out.distance(&ComplexMatrix::real_diag(&[0.5, 0.0])) < 1e-15);

        let region = Region::new("A", 2, 1).unwrap();
        let m = QuantumMap::measure_effect(region, plus()).unwrap();
        let out = m.apply(&ComplexMatrix::basis_projector(2, 0)).unwrap();
        assert_eq!((out.rows(), out.cols()), (1, 1));
        assert!((out[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-12);

        assert!(matches!(id.apply(&ComplexMatrix::identity(3)), Err(Error::Shape(_))));
    }

    #[test]
    fn apply_via_choi_agrees_with_kraus() {
        let region = Region::new("A", 3, 2).unwrap();
        for seed in 0..10 {
            let m = random_cp(&region, seed);
            let rho = crate::random::random_density(3, 100 + seed);
            let a = m.apply(&rho).unwrap();
            let b = m.apply_via_choi(&rho).unwrap();
            assert!(a.distance(&b) < 1e-10);
            assert!(a.trace().re <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn projective_instrument_passes() {
        let inst = Instrument::projective(
            qubit(),
            &["0", "1"],
            vec![ComplexMatrix::basis_projector(2, 0), ComplexMatrix::basis_projector(2, 1)],
        )
        .unwrap();
        let report = validate_instrument(&inst, 1e-10).unwrap();
        assert!(report.pass);
        assert!(report.trace_preservation_defect < 1e-15);
    }

    #[test]
    fn deterministic_identity_instrument_passes() {
        let inst = Instrument::deterministic(QuantumMap::identity(qubit()).unwrap()).unwrap();
        assert!(validate_instrument(&inst, 1e-10).unwrap().pass);
    }

    #[test]
    fn half_map_alone_fails_with_defect_one_half() {
        let half = QuantumMap::from_kraus(
            qubit(),
            vec![ComplexMatrix::identity(2).scale_real(std::f64::consts::FRAC_1_SQRT_2)],
        )
        .unwrap();
        let inst = Instrument::deterministic(half).unwrap();
        let report = validate_instrument(&inst, 1e-10).unwrap();
        assert!(!report.pass);
        assert!((report.trace_preservation_defect - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mixed_regions_are_a_composition_error() {
        let other = Region::new("B", 2, 2).unwrap();
        let err = Instrument::new(
            qubit(),
            vec![
                ("a".into(), QuantumMap::identity(qubit()).unwrap()),
                ("b".into(), QuantumMap::zero(other)),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Composition(_)));
    }

    #[test]
    fn random_generators_satisfy_contracts() {
        let region = Region::new("A", 2, 2).unwrap();
        let c = random_cptp(&region, 7);
        assert!(c.is_trace_preserving(1e-10));
        let inst = Instrument::deterministic(c).unwrap();
        assert!(validate_instrument(&inst, 1e-10).unwrap().pass);

        let inst = random_instrument(&region, 3, 7).unwrap();
        assert_eq!(inst.len(), 3);
        let report = validate_instrument(&inst, 1e-10).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(inst.elements().iter().all(|m| m.choi().frobenius_norm() > 0.0));

        let again = random_instrument(&region, 3, 7).unwrap();
        assert_eq!(inst, again);
        for (a, b) in inst.elements().iter().zip(again.elements()) {
            assert_eq!(a.kraus(), b.kraus());
        }
        assert!(matches!(random_instrument(&region, 0, 7), Err(Error::Validity(_))));
    }

    #[test]
    fn degenerate_regions_generate_valid_maps() {
        for (di, dout) in [(1, 3), (3, 1), (1, 1)] {
            let region = Region::new("A", di, dout).unwrap();
            let inst = random_instrument(&region, 2, 3).unwrap();
            assert!(validate_instrument(&inst, 1e-10).unwrap().pass);
        }
    }

    #[test]
    fn povm_conversions() {
        let z = Povm::new(
            vec![ComplexMatrix::basis_projector(2, 0), ComplexMatrix::basis_projector(2, 1)],
            1e-10,
        )
        .unwrap();
        let inst = povm_to_instrument(&z, "A").unwrap();
        assert_eq!(inst.region().d_out(), 1);
        assert_eq!(inst.elements()[0].choi(), &ComplexMatrix::real_diag(&[1.0, 0.0]));
        assert_eq!(inst.elements()[1].choi(), &ComplexMatrix::real_diag(&[0.0, 1.0]));
        assert!(validate_instrument(&inst, 1e-10).unwrap().pass);

        let trivial = Povm::new(vec![ComplexMatrix::identity(2)], 1e-10).unwrap();
        let inst = povm_to_instrument(&trivial, "A").unwrap();
        assert_eq!(inst.len(), 1);
        assert!(inst.elements()[0].is_trace_preserving(1e-12));

        let half = ComplexMatrix::identity(2).scale_real(0.5);
        let coin = Povm::new(vec![half.clone(), half.clone()], 1e-10).unwrap();
        let inst = povm_to_instrument(&coin, "A").unwrap();
        assert_eq!(inst.elements()[0], inst.elements()[1]);
        assert_eq!(inst.elements()[0].choi(), &half);

        let bad = Povm::new(vec![ComplexMatrix::basis_projector(2, 0)], 1e-10);
        assert!(matches!(bad, Err(Error::Validity(_))));
    }

    #[test]
    fn random_povm_is_valid() {
        let p = random_povm(3, 4, 1).unwrap();
        assert_eq!(p.effects().len(), 4);
        let probs = p.probabilities(&crate::random::random_density(3, 2));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collapse_is_independent_of_kraus_decomposition() {
        // Two decompositions of the same map: {K_0, K_1} and the unitary mix
        // {(K_0 + K_1)/√2, (K_0 − K_1)/√2}.
        let region = Region::new("A", 3, 3).unwrap();
        for seed in 0..10 {
            let m = random_cp(&region, seed);
            let ks = m.kraus().to_vec();
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let mut mixed = Vec::new();
            for pair in ks.chunks(2) {
                if let [a, b] = pair {
                    mixed.push((a + b).scale_real(r));
                    mixed.push((a - b).scale_real(r));
                } else {
                    mixed.push(pair[0].clone());
                }
            }
            let m2 = QuantumMap::from_kraus(region.clone(), mixed).unwrap();
            let rho = crate::random::random_density(3, 50 + seed);
            let a = m.apply(&rho).unwrap();
            let b = m2.apply(&rho).unwrap();
            let ua = a.scale_real(1.0 / a.trace().re);
            let ub = b.scale_real(1.0 / b.trace().re);
            assert!(ua.distance(&ub) < 1e-10);
            assert!(m.choi().distance(m2.choi()) < 1e-10);
        }
    }

    #[test]
    fn sum_and_scale() {
        let inst = random_instrument(&qubit(), 3, 4).unwrap();
        let s = inst.elements()[0].sum(&inst.elements()[1]).unwrap();
        let expected = inst.elements()[0].choi() + inst.elements()[1].choi();
        assert!(s.choi().distance(&expected) < 1e-15);
        let half = inst.elements()[2].scaled(0.5).unwrap();
        assert!(half.choi().distance(&inst.elements()[2].choi().scale_real(0.5)) < 1e-15);
        let id = QuantumMap::identity(qubit()).unwrap();
        assert!(matches!(id.sum(&id), Err(Error::Validity(_))));
        assert!(matches!(id.scaled(-1.0), Err(Error::Validity(_))));
    }
}
