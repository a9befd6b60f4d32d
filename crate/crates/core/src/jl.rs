//! Johnson–Lindenstrauss operators.
//!
//! Two kinds are provided:
//!
//! * **Gaussian**: a dense `out_dim × in_dim` matrix with i.i.d.
//!   `N(0, 1/out_dim)` entries, so `E‖Cx‖² = ‖x‖²`.
//! * **Fast Hadamard** (subsampled randomized Hadamard transform): random
//!   sign flips, zero padding to a power of two, an in-place Walsh–Hadamard
//!   butterfly, then a uniform row sample without replacement scaled by
//!   `1/√out_dim`. Applying it costs `O(pad·log pad)` per vector instead of
//!   `O(out_dim·in_dim)`.
//!
//! Operators map row vectors: [`JlOperator::apply`] takes an `n × in_dim`
//! matrix and returns `n × out_dim`.

use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::{self, gaussian_matrix, matmul_nt, rng_stream, Matrix, NoCount, OpCounter};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JlKind {
    Gaussian,
    FastHadamard,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Dense(Matrix),
    Srht { signs: Vec<f64>, pad: usize, rows: Vec<usize>, scale: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct JlOperator {
    in_dim: usize,
    out_dim: usize,
    seed: u64,
    repr: Repr,
}

impl JlOperator {
    /// Dense Gaussian operator with entry standard deviation `1/√out_dim`.
    pub fn gaussian(out_dim: usize, in_dim: usize, seed: u64) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return invalid(format!("JL operator needs positive dims, got {out_dim}x{in_dim}"));
        }
        let m = gaussian_matrix(out_dim, in_dim, 1.0 / (out_dim as f64).sqrt(), seed)?;
        Ok(Self { in_dim, out_dim, seed, repr: Repr::Dense(m) })
    }

    /// Subsampled randomized Hadamard transform. The padded length is the
    /// smallest power of two that is at least `max(in_dim, out_dim)`.
    pub fn fast_hadamard(out_dim: usize, in_dim: usize, seed: u64) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return invalid(format!("JL operator needs positive dims, got {out_dim}x{in_dim}"));
        }
        let pad = in_dim.max(out_dim).next_power_of_two();
        let mut rng = rng_stream(seed, 0);
        let signs = (0..pad).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let mut rows = index::sample(&mut rng, pad, out_dim).into_vec();
        rows.sort_unstable();
        let scale = ((pad as f64) / out_dim as f64).sqrt() / (pad as f64).sqrt();
        Ok(Self { in_dim, out_dim, seed, repr: Repr::Srht { signs, pad, rows, scale } })
    }

    pub fn new(kind: JlKind, out_dim: usize, in_dim: usize, seed: u64) -> Result<Self> {
        match kind {
            JlKind::Gaussian => Self::gaussian(out_dim, in_dim, seed),
            JlKind::FastHadamard => Self::fast_hadamard(out_dim, in_dim, seed),
        }
    }

    pub fn kind(&self) -> JlKind {
        match self.repr {
            Repr::Dense(_) => JlKind::Gaussian,
            Repr::Srht { .. } => JlKind::FastHadamard,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Padded transform length; `None` for the dense kind.
    pub fn pad(&self) -> Option<usize> {
        match &self.repr {
            Repr::Dense(_) => None,
            Repr::Srht { pad, .. } => Some(*pad),
        }
    }

    /// The dense matrix backing a Gaussian operator.
    pub fn dense(&self) -> Option<&Matrix> {
        match &self.repr {
            Repr::Dense(m) => Some(m),
            Repr::Srht { .. } => None,
        }
    }

    /// Apply to every row of `x` (`n × in_dim`), giving `n × out_dim`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.apply_counted(x, &mut NoCount)
    }

    pub fn apply_counted(&self, x: &Matrix, ops: &mut impl OpCounter) -> Result<Matrix> {
        if x.cols() != self.in_dim {
            return invalid(format!(
                "JL operator expects {} input columns, got {}",
                self.in_dim,
                x.cols()
            ));
        }
        match &self.repr {
            Repr::Dense(m) => Ok(matmul_nt(x, m, ops)),
            Repr::Srht { signs, pad, rows, scale } => {
                let mut out = Matrix::zeros(x.rows(), self.out_dim);
                let mut buf = vec![0.0; *pad];
                for i in 0..x.rows() {
                    buf.iter_mut().for_each(|b| *b = 0.0);
                    for (b, (xv, s)) in buf.iter_mut().zip(x.row(i).iter().zip(signs)) {
                        *b = xv * s;
                    }
                    fwht(&mut buf, ops);
                    for (o, &r) in out.row_mut(i).iter_mut().zip(rows) {
                        *o = buf[r] * scale;
                    }
                    ops.add((self.in_dim + self.out_dim) as u64);
                }
                Ok(out)
            }
        }
    }

    /// Closed-form flop count of [`apply`](Self::apply) on `n` rows.
    ///
    /// Dense: `2·out·in` per row. Fast: `in` sign flips, `pad·log₂ pad`
    /// butterfly add/subs and `out` scalings per row.
    pub fn apply_flops(&self, n: usize) -> u64 {
        let per_row = match &self.repr {
            Repr::Dense(_) => 2 * self.out_dim * self.in_dim,
            Repr::Srht { pad, .. } => {
                self.in_dim + pad * pad.trailing_zeros() as usize + self.out_dim
            }
        };
        (n * per_row) as u64
    }

    /// The operator as an explicit `out_dim × in_dim` matrix.
    pub fn materialize(&self) -> Matrix {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Srht { .. } => self
                .apply(&Matrix::identity(self.in_dim))
                .expect("identity has matching width")
                .transpose(),
        }
    }
}

/// In-place unnormalized Walsh–Hadamard transform; `a.len()` must be a power
/// of two.
pub fn fwht(a: &mut [f64], ops: &mut impl OpCounter) {
    let n = a.len();
    assert!(n.is_power_of_two(), "FWHT length {n} is not a power of two");
    let mut h = 1;
    if n >= 4 {
        // first two levels fused; the generic loop below vectorizes poorly for h < 4
        for q in a.chunks_exact_mut(4) {
            let (s0, d0) = (q[0] + q[1], q[0] - q[1]);
            let (s1, d1) = (q[2] + q[3], q[2] - q[3]);
            q[0] = s0 + s1;
            q[1] = d0 + d1;
            q[2] = s0 - s1;
            q[3] = d0 - d1;
        }
        h = 4;
    }
    while h < n {
        for block in a.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
    ops.add((n * n.trailing_zeros() as usize) as u64);
}

/// Worst-case and mean absolute inner-product error over all pairs `i ≤ j`
/// (diagonal included).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distortion {
    pub max_ip_error: f64,
    pub mean_ip_error: f64,
}

pub fn distortion_stats(x: &Matrix, op: &JlOperator) -> Result<Distortion> {
    let y = op.apply(x)?;
    let g = matmul_nt(x, x, &mut NoCount);
    let gy = matmul_nt(&y, &y, &mut NoCount);
    let n = x.rows();
    let (mut max, mut sum, mut count) = (0.0_f64, 0.0, 0usize);
    for i in 0..n {
        for j in i..n {
            let e = (g[(i, j)] - gy[(i, j)]).abs();
            max = max.max(e);
            sum += e;
            count += 1;
        }
    }
    Ok(Distortion { max_ip_error: max, mean_ip_error: if count > 0 { sum / count as f64 } else { 0.0 } })
}

/// Largest `‖op·s‖ / ‖s‖` over `trials` random sign vectors with exactly
/// `sparsity` nonzeros.
pub fn sparse_sign_preservation(
    op: &JlOperator,
    sparsity: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if sparsity == 0 || sparsity > op.in_dim() {
        return invalid(format!("sparsity must lie in 1..={}, got {sparsity}", op.in_dim()));
    }
    let mut rng = rng_stream(seed, 0);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let mut s = Matrix::zeros(1, op.in_dim());
        for idx in index::sample(&mut rng, op.in_dim(), sparsity) {
            s[(0, idx)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let image = op.apply(&s)?;
        worst = worst.max(linalg::norm2(image.row(0)) / (sparsity as f64).sqrt());
    }
    Ok(worst)
}
