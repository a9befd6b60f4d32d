//! Dense row-major matrices and the numerical kernels everything else is
//! built on.
//!
//! Random streams come from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`; normal deviates use the ziggurat sampler from
//! `rand_distr`. Both algorithms are fixed by the pinned crate versions, so a
//! `(seed, stream)` pair maps to the same numbers on every platform.
//!
//! Matrix products go through `matrixmultiply::dgemm` and are accounted for
//! by an [`OpCounter`], which the benchmark module uses to check the
//! closed-form FLOP model against the code that actually runs.

mod eig;

use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

pub use eig::{psd_quadform_inv, sym_eig, SpectralData};

/// Dense matrix of `f64` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!(
                "buffer of length {} cannot form a {rows}x{cols} matrix",
                data.len()
            ));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return invalid(format!("non-finite entry {bad}"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged rows");
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * c).collect() }
    }

    /// Elementwise `self - other`; shapes must agree.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return invalid(format!("shape mismatch {:?} vs {:?}", self.shape(), other.shape()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    /// `(M + Mᵀ)/2`; the matrix must be square.
    pub fn symmetrized(&self) -> Matrix {
        debug_assert!(self.is_square());
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// ChaCha8 stream for `seed`, using word-stream `stream` so that independent
/// consumers of one seed never share numbers.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Matrix with i.i.d. `N(0, std²)` entries, filled row-major from the stream
/// `(seed, 0)`.
pub fn gaussian_matrix(rows: usize, cols: usize, std: f64, seed: u64) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return invalid(format!("gaussian matrix needs positive dimensions, got {rows}x{cols}"));
    }
    if !(std > 0.0 && std.is_finite()) {
        return invalid(format!("standard deviation must be positive and finite, got {std}"));
    }
    let mut rng = rng_stream(seed, 0);
    let data = (0..rows * cols).map(|_| std * standard_normal(&mut rng)).collect();
    Ok(Matrix { rows, cols, data })
}

// ---------------------------------------------------------------------------
// Operation counting
// ---------------------------------------------------------------------------

/// Sink for floating-point operation counts.
///
/// Counting convention: a multiply-accumulate inside a matrix product is two
/// flops; the parameter update `B ← B − ηG` is one flop per entry.
pub trait OpCounter {
    fn add(&mut self, flops: u64);
}

/// Discards counts; compiles away in the hot path.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoCount;

impl OpCounter for NoCount {
    #[inline(always)]
    fn add(&mut self, _flops: u64) {}
}

/// Accumulates counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlopCounter {
    pub flops: u64,
}

impl OpCounter for FlopCounter {
    fn add(&mut self, flops: u64) {
        self.flops += flops;
    }
}

#[derive(Clone, Copy)]
enum Layout {
    Normal,
    Transposed,
}

fn strides(m: &Matrix, layout: Layout) -> (isize, isize) {
    match layout {
        Layout::Normal => (m.cols as isize, 1),
        Layout::Transposed => (1, m.cols as isize),
    }
}

fn gemm(a: &Matrix, la: Layout, b: &Matrix, lb: Layout, ops: &mut impl OpCounter) -> Matrix {
    let (m, k) = match la {
        Layout::Normal => (a.rows, a.cols),
        Layout::Transposed => (a.cols, a.rows),
    };
    let (k2, n) = match lb {
        Layout::Normal => (b.rows, b.cols),
        Layout::Transposed => (b.cols, b.rows),
    };
    assert_eq!(k, k2, "inner dimensions disagree in matrix product");
    let mut out = Matrix::zeros(m, n);
    ops.add(2 * (m * k * n) as u64);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    let (rsa, csa) = strides(a, la);
    let (rsb, csb) = strides(b, lb);
    // SAFETY: pointers and strides describe the full extent of `a`, `b` and
    // `out`, which are live, non-overlapping allocations of the stated shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// `A·B`.
pub fn matmul(a: &Matrix, b: &Matrix, ops: &mut impl OpCounter) -> Matrix {
    gemm(a, Layout::Normal, b, Layout::Normal, ops)
}

/// `A·Bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix, ops: &mut impl OpCounter) -> Matrix {
    gemm(a, Layout::Normal, b, Layout::Transposed, ops)
}

/// `Aᵀ·B`.
pub fn matmul_tn(a: &Matrix, b: &Matrix, ops: &mut impl OpCounter) -> Matrix {
    gemm(a, Layout::Transposed, b, Layout::Normal, ops)
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub frobenius: f64,
    pub max_entry: f64,
    pub spectral: f64,
}

const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITERS: usize = 10_000;
const POWER_START_SEED: u64 = 0x5eed_5ec0;

/// Frobenius, max-abs-entry and spectral norms. The spectral norm comes from
/// power iteration on `MᵀM`, stopped once the eigen-residual falls below
/// `1e-9` relative to the Rayleigh quotient.
pub fn norms(m: &Matrix) -> Norms {
    Norms { frobenius: m.frobenius(), max_entry: m.max_abs(), spectral: spectral_norm(m) }
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    let n = m.cols;
    if n == 0 || m.rows == 0 || m.max_abs() == 0.0 {
        return 0.0;
    }
    // fixed, generic start vector
    let mut rng = rng_stream(POWER_START_SEED, 0);
    let mut x: Vec<f64> = (0..n).map(|_| 1.0 + 0.5 * standard_normal(&mut rng)).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let apply = |x: &[f64]| -> Vec<f64> {
        let mx = m.matvec(x);
        let mut out = vec![0.0; n];
        for (i, mi) in mx.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(m.row(i)) {
                *o += a * mi;
            }
        }
        out
    };

    let mut mu = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let y = apply(&x);
        mu = dot(&x, &y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return 0.0;
        }
        let residual = y.iter().zip(&x).map(|(yi, xi)| (yi - mu * xi).powi(2)).sum::<f64>().sqrt();
        x = y.into_iter().map(|v| v / ny).collect();
        if residual <= POWER_TOL * mu.abs() {
            break;
        }
    }
    // final Rayleigh quotient at the normalized iterate
    let y = apply(&x);
    mu = mu.max(dot(&x, &y));
    mu.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_deterministic() {
        let a = gaussian_matrix(1, 1, 1.0, 42).unwrap();
        let b = gaussian_matrix(1, 1, 1.0, 42).unwrap();
        assert_eq!(a.as_slice()[0].to_bits(), b.as_slice()[0].to_bits());
        let c = gaussian_matrix(1, 1, 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_rejects_bad_args() {
        assert!(gaussian_matrix(2, 2, 0.0, 1).is_err());
        assert!(gaussian_matrix(0, 2, 1.0, 1).is_err());
        assert!(gaussian_matrix(2, 0, 1.0, 1).is_err());
        assert!(gaussian_matrix(2, 2, f64::NAN, 1).is_err());
    }

    #[test]
    fn gaussian_moments_at_scale() {
        let g = gaussian_matrix(1000, 1000, 1.0, 7).unwrap();
        let n = g.as_slice().len() as f64;
        let mean = g.as_slice().iter().sum::<f64>() / n;
        let var = g.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn gaussian_scales_with_std() {
        let a = gaussian_matrix(3, 4, 1.0, 9).unwrap();
        let b = gaussian_matrix(3, 4, 2.5, 9).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((2.5 * x - y).abs() < 1e-15);
        }
    }

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|p| a[(i, p)] * b[(p, j)]).sum()
        })
    }

    #[test]
    fn products_match_naive_loops() {
        let a = gaussian_matrix(5, 3, 1.0, 1).unwrap();
        let b = gaussian_matrix(3, 4, 1.0, 2).unwrap();
        let c = gaussian_matrix(4, 3, 1.0, 3).unwrap();
        let d = gaussian_matrix(5, 4, 1.0, 4).unwrap();
        let mut ops = FlopCounter::default();
        let ab = matmul(&a, &b, &mut ops);
        assert_eq!(ops.flops, 2 * 5 * 3 * 4);
        let want = naive(&a, &b);
        let close = |x: &Matrix, y: &Matrix| x.sub(y).unwrap().max_abs() < 1e-13;
        assert!(close(&ab, &want));
        assert!(close(&matmul_nt(&a, &c, &mut NoCount), &naive(&a, &c.transpose())));
        assert!(close(&matmul_tn(&a, &d, &mut NoCount), &naive(&a.transpose(), &d)));
    }

    #[test]
    fn norms_of_simple_matrices() {
        let z = norms(&Matrix::zeros(3, 2));
        assert_eq!((z.frobenius, z.max_entry, z.spectral), (0.0, 0.0, 0.0));
        let d = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let n = norms(&d);
        assert!((n.frobenius - 5.0).abs() < 1e-12);
        assert_eq!(n.max_entry, 4.0);
        assert!((n.spectral - 4.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_matches_eigen_oracle() {
        for seed in 0..5 {
            let m = gaussian_matrix(5, 7, 1.0, seed).unwrap();
            let gram = matmul_tn(&m, &m, &mut NoCount);
            let eig = sym_eig(&gram).unwrap();
            let want = eig.eigenvalues.last().unwrap().sqrt();
            let got = spectral_norm(&m);
            assert!(((got - want) / want).abs() < 1e-8, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0]).is_err());
    }
}
