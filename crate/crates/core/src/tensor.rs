//! Dense complex linear algebra.
//!
//! Composite wires are always ordered region-major with the input wire
//! before the output wire (`A_I, A_O, B_I, B_O, ...`), and every Kronecker
//! product uses the left factor as the slow (outer) index.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest side length a tensor product may produce.
pub const MAX_DIM: usize = 1 << 14;

/// Default Hermiticity / orthonormality tolerance.
pub const HERM_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Dense complex matrix with value semantics.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a matrix from row-major rows. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let c = rows.first().map_or(0, |r| r.len());
        Self::from_fn(rows.len(), c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { ZERO })
    }

    pub fn real_diag(values: &[f64]) -> Self {
        Self::diag(&values.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>())
    }

    /// Column vector from amplitudes.
    pub fn column(amplitudes: &[C64]) -> Self {
        Self::from_fn(amplitudes.len(), 1, |i, _| amplitudes[i])
    }

    /// `|psi><psi|` for the given amplitudes.
    pub fn projector(amplitudes: &[C64]) -> Self {
        let v = Self::column(amplitudes);
        &v * &v.dagger()
    }

    /// `|k><k|` in dimension `dim`.
    pub fn basis_projector(dim: usize, k: usize) -> Self {
        Self::from_fn(dim, dim, |i, j| if i == k && j == k { ONE } else { ZERO })
    }

    /// `|i><j|` in dimension `dim`.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        Self::from_fn(dim, dim, |a, b| if a == i && b == j { ONE } else { ZERO })
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Row-major copy of the entries.
    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self(self.0.map(|z| z * c))
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self(self.0.map(|z| z * c))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows().min(self.cols())).map(|i| self.0[(i, i)]).sum()
    }

    /// `tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.cols(), other.rows());
        debug_assert_eq!(self.rows(), other.cols());
        let mut acc = ZERO;
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                acc += self.0[(i, j)] * other.0[(j, i)];
            }
        }
        acc
    }

    /// Hilbert-Schmidt inner product `tr(self^dagger other)`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &Self) -> f64 {
        (self - other).frobenius_norm()
    }

    pub fn hermitian_part(&self) -> Self {
        (self + &self.dagger()).scale_real(0.5)
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        self.distance_max(&self.dagger())
    }

    fn distance_max(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_defect() <= tol
    }

    fn require_square(&self, what: &str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what} needs a square matrix, got {}x{}",
                self.rows(),
                self.cols()
            )))
        }
    }

    /// Eigendecomposition of the Hermitian part, eigenvalues ascending.
    ///
    /// Eigenvectors are returned as the columns of the second component.
    pub fn eigh(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        self.require_square("eigendecomposition")?;
        let n = self.rows();
        if n == 0 {
            return Ok((Vec::new(), Self::zeros(0, 0)));
        }
        let eig = SymmetricEigen::new(self.hermitian_part().0);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = Self::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok((values, vectors))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigh()?.0)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.last().copied().unwrap_or(0.0))
    }

    /// Spectral norm of the Hermitian part.
    pub fn hermitian_norm(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev.iter().map(|v| v.abs()).fold(0.0, f64::max))
    }

    /// Apply to a column vector given as amplitudes.
    pub fn apply_vector(&self, v: &[C64]) -> Vec<C64> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)] * v[j]).sum())
            .collect()
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "  ")?;
            for j in 0..self.cols() {
                let z = self.0[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        self.0 += &rhs.0;
    }
}

/// Kronecker product `a ⊗ b`; `a` indexes the outer block.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows().checked_mul(b.rows());
    let cols = a.cols().checked_mul(b.cols());
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r <= MAX_DIM && c <= MAX_DIM => (r, c),
        _ => {
            return Err(Error::Size(format!(
                "kron of {}x{} and {}x{} exceeds {MAX_DIM}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )))
        }
    };
    let (br, bc) = (b.rows(), b.cols());
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    }))
}

/// Kronecker product of a sequence of factors, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut acc = ComplexMatrix::identity(1);
    for f in factors {
        acc = kron(&acc, f)?;
    }
    Ok(acc)
}

/// Mixed-radix split of composite indices over subsystem `dims`.
struct Radix<'a> {
    dims: &'a [usize],
    strides: Vec<usize>,
}

impl<'a> Radix<'a> {
    fn new(dims: &'a [usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Self { dims, strides }
    }

    fn digit(&self, index: usize, k: usize) -> usize {
        (index / self.strides[k]) % self.dims[k]
    }

    /// Re-encode the digits of `index` restricted to `subset` (in order).
    fn sub_index(&self, index: usize, subset: &[usize]) -> usize {
        subset
            .iter()
            .fold(0, |acc, &k| acc * self.dims[k] + self.digit(index, k))
    }
}

fn check_dims(m: &ComplexMatrix, dims: &[usize]) -> Result<()> {
    m.require_square("partial trace")?;
    let total: usize = dims.iter().product();
    if dims.is_empty() || total != m.rows() || dims.contains(&0) {
        return Err(Error::Shape(format!(
            "subsystem dims {dims:?} do not factor a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Partial trace keeping the subsystems listed in `keep` (in their original order).
pub fn partial_trace(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    check_dims(m, dims)?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Shape(format!(
            "keep set {keep:?} out of range for {} subsystems",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let radix = Radix::new(dims);
    let n = m.rows();
    let out_dim: usize = kept.iter().map(|&k| dims[k]).product();
    let kept_idx: Vec<usize> = (0..n).map(|i| radix.sub_index(i, &kept)).collect();
    let traced_idx: Vec<usize> = (0..n).map(|i| radix.sub_index(i, &traced)).collect();
    let mut out = ComplexMatrix::zeros(out_dim, out_dim);
    for i in 0..n {
        for j in 0..n {
            if traced_idx[i] == traced_idx[j] {
                out[(kept_idx[i], kept_idx[j])] += m[(i, j)];
            }
        }
    }
    Ok(out)
}

/// `tr_k[(1 ⊗ op_k ⊗ 1) · m]`: contracts subsystem `k` of `m` against `op`,
/// leaving an operator on the remaining subsystems.
pub fn contract_subsystem(
    m: &ComplexMatrix,
    dims: &[usize],
    k: usize,
    op: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    check_dims(m, dims)?;
    if k >= dims.len() {
        return Err(Error::Shape(format!("subsystem {k} out of range")));
    }
    if op.rows() != dims[k] || op.cols() != dims[k] {
        return Err(Error::Shape(format!(
            "operator {}x{} does not act on subsystem of dim {}",
            op.rows(),
            op.cols(),
            dims[k]
        )));
    }
    let radix = Radix::new(dims);
    let rest: Vec<usize> = (0..dims.len()).filter(|&x| x != k).collect();
    let n = m.rows();
    let out_dim = n / dims[k];
    let rest_idx: Vec<usize> = (0..n).map(|i| radix.sub_index(i, &rest)).collect();
    let digit: Vec<usize> = (0..n).map(|i| radix.digit(i, k)).collect();
    let mut out = ComplexMatrix::zeros(out_dim, out_dim);
    for i in 0..n {
        for j in 0..n {
            let w = m[(i, j)];
            if w == ZERO {
                continue;
            }
            // ((1 ⊗ op ⊗ 1) m)_{(p x q),(p' x q')} summed over x; here i carries y, j carries x.
            out[(rest_idx[i], rest_idx[j])] += op[(digit[j], digit[i])] * w;
        }
    }
    Ok(out)
}

/// True iff `m` is Hermitian within `tol` and its smallest eigenvalue is at least `-tol`.
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    m.require_square("positivity check")?;
    if !m.is_finite() || m.hermiticity_defect() > tol {
        return Ok(false);
    }
    Ok(m.min_eigenvalue()? >= -tol)
}

/// Orthonormal Hermitian operator basis under the Hilbert-Schmidt product.
#[derive(Clone, Debug)]
pub struct HermBasis {
    dim: usize,
    elements: Vec<ComplexMatrix>,
}

impl HermBasis {
    /// Wraps `elements` after checking they form an orthonormal Hermitian basis.
    pub fn new(dim: usize, elements: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        if elements.len() != dim * dim {
            return Err(Error::Shape(format!(
                "a basis for dimension {dim} needs {} elements, got {}",
                dim * dim,
                elements.len()
            )));
        }
        for (mu, t) in elements.iter().enumerate() {
            if t.rows() != dim || t.cols() != dim {
                return Err(Error::Shape(format!("element {mu} has the wrong shape")));
            }
            if !t.is_hermitian(tol) {
                return Err(Error::Validity(format!("element {mu} is not Hermitian")));
            }
        }
        let basis = Self { dim, elements };
        let defect = basis.orthonormality_defect();
        if defect > tol {
            return Err(Error::Validity(format!(
                "elements are not orthonormal (max Gram defect {defect:e})"
            )));
        }
        Ok(basis)
    }

    /// Normalized identity followed by the generalized Gell-Mann matrices:
    /// symmetric, antisymmetric, then diagonal.
    pub fn gell_mann(dim: usize) -> Self {
        assert!(dim >= 1, "Hilbert-space dimension must be positive");
        let mut elements = Vec::with_capacity(dim * dim);
        elements.push(ComplexMatrix::identity(dim).scale_real(1.0 / (dim as f64).sqrt()));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for j in 0..dim {
            for k in j + 1..dim {
                let mut t = ComplexMatrix::zeros(dim, dim);
                t[(j, k)] = C64::new(r, 0.0);
                t[(k, j)] = C64::new(r, 0.0);
                elements.push(t);
            }
        }
        for j in 0..dim {
            for k in j + 1..dim {
                let mut t = ComplexMatrix::zeros(dim, dim);
                t[(j, k)] = C64::new(0.0, -r);
                t[(k, j)] = C64::new(0.0, r);
                elements.push(t);
            }
        }
        for l in 1..dim {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut t = ComplexMatrix::zeros(dim, dim);
            for j in 0..l {
                t[(j, j)] = C64::new(norm, 0.0);
            }
            t[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
            elements.push(t);
        }
        Self { dim, elements }
    }

    /// Another orthonormal Hermitian basis: real orthogonal mixing of the
    /// Gell-Mann elements by `rotation` (a `d^2 x d^2` orthogonal matrix).
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Result<Self> {
        let n = self.elements.len();
        if rotation.nrows() != n || rotation.ncols() != n {
            return Err(Error::Shape("rotation has the wrong size".into()));
        }
        let elements = (0..n)
            .map(|mu| {
                let mut acc = ComplexMatrix::zeros(self.dim, self.dim);
                for (nu, t) in self.elements.iter().enumerate() {
                    acc += &t.scale_real(rotation[(mu, nu)]);
                }
                acc
            })
            .collect();
        Self::new(self.dim, elements, 1e-9)
    }

    /// Seeded random orthonormal Hermitian basis.
    pub fn random(dim: usize, seed: u64) -> Self {
        let rotation = crate::random::random_orthogonal(dim * dim, seed);
        Self::gell_mann(dim)
            .rotated(&rotation)
            .expect("orthogonal mixing preserves orthonormality")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Gram matrix `tr(τ_μ τ_ν)`.
    pub fn gram(&self) -> ComplexMatrix {
        let n = self.elements.len();
        ComplexMatrix::from_fn(n, n, |a, b| {
            self.elements[a].trace_product(&self.elements[b])
        })
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.elements.len();
        (&self.gram() - &ComplexMatrix::identity(n)).max_abs()
    }

    /// `Σ_μ τ_μ ⊗ τ_μ`.
    pub fn swap_sum(&self) -> ComplexMatrix {
        let d2 = self.dim * self.dim;
        let mut acc = ComplexMatrix::zeros(d2, d2);
        for t in &self.elements {
            acc += &kron(t, t).expect("d^2 fits");
        }
        acc
    }
}

/// Gell-Mann Hilbert-Schmidt basis for dimension `d`.
pub fn hs_basis(d: usize) -> HermBasis {
    HermBasis::gell_mann(d)
}

/// Swap operator on `C^d ⊗ C^d`, built from its action on product basis states.
pub fn swap_operator(d: usize) -> ComplexMatrix {
    let n = d * d;
    ComplexMatrix::from_fn(n, n, |row, col| {
        let (a, b) = (col / d, col % d);
        if row == b * d + a {
            ONE
        } else {
            ZERO
        }
    })
}

/// Unnormalized maximally entangled projector `Σ_{jl} |j><l| ⊗ |j><l|`.
pub fn max_entangled(d: usize) -> ComplexMatrix {
    let n = d * d;
    ComplexMatrix::from_fn(n, n, |row, col| {
        if row % (d + 1) == 0 && col % (d + 1) == 0 {
            ONE
        } else {
            ZERO
        }
    })
}
