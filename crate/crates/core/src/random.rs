//! Seeded random matrices: Ginibre samples, Haar isometries, density matrices.
//!
//! Every generator takes an explicit `u64` seed and owns its RNG, so calls
//! are stateless and bit-reproducible.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{ComplexMatrix, C64};

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-distributed isometry `rows x cols` (`rows >= cols`), via QR of a
/// Ginibre matrix with the phases of `R` absorbed into `Q`.
pub fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = ginibre(rows, cols, rng).into_dmatrix();
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut v = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..rows {
            v[(i, j)] = q[(i, j)] * phase;
        }
    }
    ComplexMatrix::from_dmatrix(v)
}

pub fn haar_unitary(dim: usize, seed: u64) -> ComplexMatrix {
    haar_isometry(dim, dim, &mut rng(seed))
}

/// Random real orthogonal matrix (Haar on O(n)).
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Full-rank random density matrix `G G^dagger / tr(G G^dagger)`.
pub fn random_density(dim: usize, seed: u64) -> ComplexMatrix {
    let g = ginibre(dim, dim, &mut rng(seed));
    let rho = &g * &g.dagger();
    let tr = rho.trace().re;
    rho.scale_real(1.0 / tr).hermitian_part()
}

/// Haar-random pure state `|psi><psi|`.
pub fn random_pure_state(dim: usize, seed: u64) -> ComplexMatrix {
    let v = haar_isometry(dim, 1, &mut rng(seed));
    (&v * &v.dagger()).hermitian_part()
}
