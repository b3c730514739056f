//! Inner products on the space of linear maps between operator spaces.
//!
//! Two routes are provided and checked against each other:
//! the superoperator product `Σ_μ tr[M(τ_μ)^† N(τ_μ)]` over a Hilbert-Schmidt
//! basis of the input space, and the Choi product `tr(M^† N)`.

use crate::channels::{apply_choi, random_cp, QuantumMap, Region};
use crate::error::{Error, Result};
use crate::random::derive_seed;
use crate::tensor::{swap_operator, ComplexMatrix, HermBasis, C64};

/// Tolerance for the dual-route checks in [`verify_methods_lemmas`].
pub const LEMMA_TOL: f64 = 1e-9;

fn check_pair(m: &Region, n: &Region) -> Result<()> {
    if m != n {
        return Err(Error::Shape(format!("maps live on {m} and {n}")));
    }
    Ok(())
}

fn check_basis(region: &Region, basis: &HermBasis) -> Result<()> {
    if basis.dim() != region.d_in() {
        return Err(Error::Shape(format!(
            "basis of dimension {} does not span the input of {region}",
            basis.dim()
        )));
    }
    Ok(())
}

/// `Σ_μ tr[M(τ_μ)^† N(τ_μ)]`, evaluating both maps through their Kraus operators.
pub fn super_inner(m: &QuantumMap, n: &QuantumMap, basis: &HermBasis) -> Result<C64> {
    check_pair(m.region(), n.region())?;
    check_basis(m.region(), basis)?;
    let mut acc = C64::new(0.0, 0.0);
    for tau in basis.elements() {
        acc += m.apply(tau)?.hs_inner(&n.apply(tau)?);
    }
    Ok(acc)
}

/// Superoperator product for arbitrary (not necessarily CP) maps given by
/// their Choi matrices.
pub fn super_inner_choi(
    region: &Region,
    m: &ComplexMatrix,
    n: &ComplexMatrix,
    basis: &HermBasis,
) -> Result<C64> {
    check_basis(region, basis)?;
    let mut acc = C64::new(0.0, 0.0);
    for tau in basis.elements() {
        acc += apply_choi(region, m, tau)?.hs_inner(&apply_choi(region, n, tau)?);
    }
    Ok(acc)
}

/// `tr(M^† N)` on Choi matrices.
pub fn cj_inner(m: &QuantumMap, n: &QuantumMap) -> Result<C64> {
    check_pair(m.region(), n.region())?;
    Ok(m.choi().hs_inner(n.choi()))
}

/// Maximum deviation of `Σ_μ τ_μ ⊗ τ_μ` from the swap operator.
pub fn swap_deviation(basis: &HermBasis) -> f64 {
    (&basis.swap_sum() - &swap_operator(basis.dim())).max_abs()
}

/// Maximum deviation of `Σ_μ <m|τ_μ|k>^* <n|τ_μ|r>` from `δ_mn δ_kr` over all index tuples.
pub fn completeness_deviation(basis: &HermBasis) -> f64 {
    let d = basis.dim();
    let mut worst = 0.0f64;
    for m in 0..d {
        for k in 0..d {
            for n in 0..d {
                for r in 0..d {
                    let s: C64 = basis
                        .elements()
                        .iter()
                        .map(|t| t[(m, k)].conj() * t[(n, r)])
                        .sum();
                    let want = if m == n && k == r { 1.0 } else { 0.0 };
                    worst = worst.max((s - want).norm());
                }
            }
        }
    }
    worst
}

/// Maximum deviations found by [`verify_methods_lemmas`].
#[derive(Clone, Debug, PartialEq)]
pub struct LemmaReport {
    pub dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub swap_deviation: f64,
    pub completeness_deviation: f64,
    pub inner_product_deviation: f64,
    pub pass: bool,
}

/// Checks the swap decomposition and the completeness relation for the
/// Gell-Mann basis and a seeded random basis, then compares the superoperator
/// and Choi inner products on `trials` random CP map pairs.
///
/// Map pairs act from dimension `d` to an output dimension cycling through
/// `1..=d`, so non-square maps are covered.
pub fn verify_methods_lemmas(d: usize, trials: usize, seed: u64) -> Result<LemmaReport> {
    if d == 0 {
        return Err(Error::Shape("dimension must be positive".into()));
    }
    let bases = [HermBasis::gell_mann(d), HermBasis::random(d, derive_seed(seed, 0))];
    let swap = bases.iter().map(swap_deviation).fold(0.0, f64::max);
    let completeness = bases.iter().map(completeness_deviation).fold(0.0, f64::max);

    let mut inner = 0.0f64;
    for t in 0..trials {
        let region = Region::new("A", d, 1 + t % d)?;
        let m = random_cp(&region, derive_seed(seed, 2 * t as u64 + 1));
        let n = random_cp(&region, derive_seed(seed, 2 * t as u64 + 2));
        let cj = cj_inner(&m, &n)?;
        for basis in &bases {
            inner = inner.max((super_inner(&m, &n, basis)? - cj).norm());
        }
    }

    let pass = swap <= LEMMA_TOL && completeness <= LEMMA_TOL && inner <= LEMMA_TOL;
    Ok(LemmaReport {
        dim: d,
        trials,
        seed,
        swap_deviation: swap,
        completeness_deviation: completeness,
        inner_product_deviation: inner,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::random_cptp;
    use crate::tensor::hs_basis;

    fn qubit() -> Region {
        Region::new("A", 2, 2).unwrap()
    }

    fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    #[test]
    fn identity_map_has_norm_four() {
        let id = QuantumMap::identity(qubit()).unwrap();
        let s = super_inner(&id, &id, &hs_basis(2)).unwrap();
        assert!((s - C64::new(4.0, 0.0)).norm() < 1e-12);
        let c = cj_inner(&id, &id).unwrap();
        assert!((c - C64::new(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_map_is_orthogonal_to_everything() {
        let z = QuantumMap::zero(qubit());
        let m = random_cptp(&qubit(), 3);
        assert_eq!(super_inner(&z, &m, &hs_basis(2)).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(cj_inner(&z, &m).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn orthogonal_unitary_channels() {
        let id = QuantumMap::identity(qubit()).unwrap();
        let x = QuantumMap::unitary(qubit(), sigma_x()).unwrap();
        assert!(cj_inner(&id, &x).unwrap().norm() < 1e-15);
        assert!(super_inner(&id, &x, &hs_basis(2)).unwrap().norm() < 1e-12);
    }

    #[test]
    fn basis_independence() {
        let region = Region::new("A", 3, 2).unwrap();
        let m = random_cp(&region, 1);
        let n = random_cp(&region, 2);
        let a = super_inner(&m, &n, &hs_basis(3)).unwrap();
        let b = super_inner(&m, &n, &HermBasis::random(3, 99)).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn self_inner_product_is_real_and_positive() {
        let region = Region::new("A", 3, 3).unwrap();
        for seed in 0..10 {
            let m = random_cp(&region, seed);
            let v = cj_inner(&m, &m).unwrap();
            assert!(v.im.abs() < 1e-14);
            assert!(v.re > 0.0);
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let region = Region::new("A", 2, 3).unwrap();
        let m = random_cp(&region, 4);
        let n = random_cp(&region, 5);
        let basis = hs_basis(2);
        let mn = super_inner(&m, &n, &basis).unwrap();
        let nm = super_inner(&n, &m, &basis).unwrap();
        assert!((mn - nm.conj()).norm() < 1e-13);
    }

    #[test]
    fn sesquilinear_in_choi_combinations() {
        let region = Region::new("A", 2, 2).unwrap();
        let basis = hs_basis(2);
        let a = random_cp(&region, 10).choi().clone();
        let b = random_cp(&region, 11).choi().clone();
        let n = random_cp(&region, 12).choi().clone();
        let (alpha, beta) = (C64::new(0.3, -1.2), C64::new(-0.7, 0.4));
        let combo = &a.scale(alpha) + &b.scale(beta);
        let lhs = super_inner_choi(&region, &combo, &n, &basis).unwrap();
        let rhs = alpha.conj() * super_inner_choi(&region, &a, &n, &basis).unwrap()
            + beta.conj() * super_inner_choi(&region, &b, &n, &basis).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        let lhs = super_inner_choi(&region, &n, &combo, &basis).unwrap();
        let rhs = alpha * super_inner_choi(&region, &n, &a, &basis).unwrap()
            + beta * super_inner_choi(&region, &n, &b, &basis).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        assert!((lhs - combo_cj(&n, &combo)).norm() < 1e-12);
    }

    fn combo_cj(m: &ComplexMatrix, n: &ComplexMatrix) -> C64 {
        m.hs_inner(n)
    }

    #[test]
    fn mismatches_are_shape_errors() {
        let a = QuantumMap::identity(qubit()).unwrap();
        let b = QuantumMap::identity(Region::new("B", 2, 2).unwrap()).unwrap();
        assert!(matches!(cj_inner(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(super_inner(&a, &a, &hs_basis(3)), Err(Error::Shape(_))));
    }

    #[test]
    fn lemma_suite_passes() {
        for d in [1, 2, 3] {
            let r = verify_methods_lemmas(d, 50, 1).unwrap();
            assert!(r.pass, "{r:?}");
            assert!(r.inner_product_deviation < 1e-10);
        }
        assert!(verify_methods_lemmas(0, 1, 1).is_err());
    }
}
