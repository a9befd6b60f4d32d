//! NTK Gram matrices.
//!
//! * [`hinf_closed_form`]: infinite-width kernel for dense and bc networks,
//!   `H_ij = (x̃_i·x̃_j)(π − θ_ij)/(2π)` with `θ_ij` the angle between the
//!   projected inputs.
//! * [`hinf_monte_carlo`]: the same expectation by sampling, and the abc
//!   version `E_B[(1/m)(x̃_i·x̃_j)(S_i·S_j)]` with `S_i = Aᵀ Z_iᵀ`, which has
//!   no closed form.
//! * [`h_empirical`]: the finite-width kernel at a given network state.
//! * [`h_perp`]: the empirical kernel restricted, for each row `i`, to units
//!   whose activation on input `i` flipped since initialization.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::jl::JlOperator;
use crate::linalg::{
    dot, matmul, matmul_nt, norms, rng_stream, standard_normal, sym_eig, Matrix, NoCount, SpectralData,
};
use crate::network::Network;

/// Lower clamp applied to `λ_min` when it is used as a decay rate.
pub const LAMBDA0_FLOOR: f64 = 1e-8;
/// Symmetry tolerance, relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    MonteCarlo { samples: usize },
    Empirical { step: usize },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Analytic => f.write_str("analytic"),
            Provenance::MonteCarlo { samples } => write!(f, "monte-carlo({samples})"),
            Provenance::Empirical { step } => write!(f, "empirical({step})"),
        }
    }
}

#[derive(Debug)]
pub struct KernelMatrix {
    h: Matrix,
    provenance: Provenance,
    std_err: Option<Matrix>,
    spectral: OnceLock<SpectralData>,
}

impl Clone for KernelMatrix {
    fn clone(&self) -> Self {
        let spectral = OnceLock::new();
        if let Some(s) = self.spectral.get() {
            let _ = spectral.set(s.clone());
        }
        Self { h: self.h.clone(), provenance: self.provenance, std_err: self.std_err.clone(), spectral }
    }
}

impl KernelMatrix {
    /// Wrap a square matrix; it must be symmetric to [`SYMMETRY_TOL`] relative
    /// to its largest entry and is stored exactly symmetrized.
    pub fn new(h: Matrix, provenance: Provenance) -> Result<Self> {
        if !h.is_square() {
            return invalid(format!("kernel must be square, got {:?}", h.shape()));
        }
        if !h.is_finite() {
            return Err(Error::NumericFailure { what: "non-finite kernel entry".into(), residual: f64::NAN });
        }
        let asym = h.sub(&h.transpose())?.max_abs();
        if asym > SYMMETRY_TOL * h.max_abs().max(1e-300) {
            return invalid(format!("kernel asymmetric by {asym:.3e}"));
        }
        Ok(Self { h: h.symmetrized(), provenance, std_err: None, spectral: OnceLock::new() })
    }

    fn with_std_err(mut self, se: Matrix) -> Self {
        self.std_err = Some(se);
        self
    }

    pub fn matrix(&self) -> &Matrix {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.rows()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Per-entry standard errors (Monte-Carlo kernels only).
    pub fn std_err(&self) -> Option<&Matrix> {
        self.std_err.as_ref()
    }

    /// Eigen-decomposition, computed on first use.
    pub fn spectral(&self) -> Result<&SpectralData> {
        if let Some(s) = self.spectral.get() {
            return Ok(s);
        }
        let s = sym_eig(&self.h)?;
        Ok(self.spectral.get_or_init(|| s))
    }

    pub fn lambda_min(&self) -> Result<f64> {
        Ok(self.spectral()?.eigenvalues[0])
    }

    pub fn lambda_max(&self) -> Result<f64> {
        Ok(self.spectral()?.lambda_max())
    }

    /// `λ_min` floored at [`LAMBDA0_FLOOR`].
    pub fn lambda0(&self) -> Result<f64> {
        Ok(self.lambda_min()?.max(LAMBDA0_FLOOR))
    }

    /// Full matrix as CSV with header `c0,…,c{n-1}`.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut s = (0..n).map(|j| format!("c{j}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for i in 0..n {
            let row: Vec<String> = self.h.row(i).iter().map(|v| crate::output::fmt_f64(*v)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Header plus one line: `n,provenance,lambda_min,trace,spectral_norm`.
    pub fn summary_csv(&self) -> Result<String> {
        let sd = self.spectral()?;
        let norm = sd.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        Ok(format!(
            "n,provenance,lambda_min,trace,spectral_norm\n{},{},{},{},{}\n",
            self.n(),
            self.provenance,
            crate::output::fmt_f64(sd.eigenvalues[0]),
            crate::output::fmt_f64(self.h.trace()),
            crate::output::fmt_f64(norm)
        ))
    }
}

fn projected(x: &Matrix, c: Option<&JlOperator>) -> Result<Matrix> {
    match c {
        Some(op) => op.apply(x),
        None => Ok(x.clone()),
    }
}

/// Infinite-width kernel of a dense (`c = None`) or bc network.
pub fn hinf_closed_form(x: &Matrix, c: Option<&JlOperator>) -> Result<KernelMatrix> {
    let xt = projected(x, c)?;
    let n = xt.rows();
    let nrm: Vec<f64> = (0..n).map(|i| crate::linalg::norm2(xt.row(i))).collect();
    if let Some(i) = nrm.iter().position(|v| *v == 0.0) {
        return Err(Error::DegenerateInput(format!("projected input {i} has zero norm")));
    }
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let ip = dot(xt.row(i), xt.row(j));
            let cos = (ip / (nrm[i] * nrm[j])).clamp(-1.0, 1.0);
            let theta = cos.acos();
            let v = ip * (PI - theta) / (2.0 * PI);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    KernelMatrix::new(h, Provenance::Analytic)
}

/// Draws per chunk; chunk `c` uses seed `seed + c`.
const CHUNK_PLAIN: usize = 16_384;
const CHUNK_FACTORED: usize = 4;

struct Moments {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

/// Monte-Carlo infinite-width kernel.
///
/// Without `a_and_v`, each draw is `b ~ N(0, I)` in the projected space and
/// contributes `(x̃_i·x̃_j) 1{b·x̃_i ≥ 0} 1{b·x̃_j ≥ 0}`. With `(A, v)`, each
/// draw is a fresh trainable matrix `B` with unit-variance entries and
/// contributes `(1/m)(x̃_i·x̃_j)(S_i·S_j)`.
pub fn hinf_monte_carlo(
    x: &Matrix,
    c: Option<&JlOperator>,
    a_and_v: Option<(&Matrix, &[f64])>,
    samples: usize,
    seed: u64,
) -> Result<KernelMatrix> {
    if samples == 0 {
        return invalid("Monte-Carlo kernel needs at least one sample");
    }
    let xt = projected(x, c)?;
    let n = xt.rows();
    let gram = matmul_nt(&xt, &xt, &mut NoCount);
    if let Some((a, v)) = a_and_v {
        if a.rows() != v.len() {
            return invalid("A and v disagree on width");
        }
    }
    let chunk = if a_and_v.is_some() { CHUNK_FACTORED } else { CHUNK_PLAIN };
    let n_chunks = samples.div_ceil(chunk);
    let parts: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let count = chunk.min(samples - ci * chunk);
            let cseed = seed.wrapping_add(ci as u64);
            match a_and_v {
                None => plain_chunk(&xt, &gram, count, cseed),
                Some((a, v)) => factored_chunk(&xt, &gram, a, v, count, cseed),
            }
        })
        .collect();
    let mut sum = vec![0.0; n * n];
    let mut sumsq = vec![0.0; n * n];
    for p in &parts {
        for (s, v) in sum.iter_mut().zip(&p.sum) {
            *s += v;
        }
        for (s, v) in sumsq.iter_mut().zip(&p.sumsq) {
            *s += v;
        }
    }
    let s = samples as f64;
    let mean = Matrix::from_vec(n, n, sum.iter().map(|v| v / s).collect())?;
    let se = Matrix::from_fn(n, n, |i, j| {
        let mu = mean[(i, j)];
        if samples < 2 {
            return f64::INFINITY;
        }
        let var = ((sumsq[i * n + j] / s - mu * mu) * s / (s - 1.0)).max(0.0);
        (var / s).sqrt()
    });
    Ok(KernelMatrix::new(mean.symmetrized(), Provenance::MonteCarlo { samples })?
        .with_std_err(se.symmetrized()))
}

fn plain_chunk(xt: &Matrix, gram: &Matrix, count: usize, seed: u64) -> Moments {
    let (n, l) = xt.shape();
    let mut rng = rng_stream(seed, 0);
    let mut sum = vec![0.0; n * n];
    let mut sumsq = vec![0.0; n * n];
    let mut b = vec![0.0; l];
    let mut on = vec![false; n];
    for _ in 0..count {
        b.iter_mut().for_each(|v| *v = standard_normal(&mut rng));
        for (i, o) in on.iter_mut().enumerate() {
            *o = dot(&b, xt.row(i)) >= 0.0;
        }
        for i in 0..n {
            if !on[i] {
                continue;
            }
            for j in 0..n {
                if on[j] {
                    let g = gram[(i, j)];
                    sum[i * n + j] += g;
                    sumsq[i * n + j] += g * g;
                }
            }
        }
    }
    Moments { sum, sumsq }
}

fn factored_chunk(xt: &Matrix, gram: &Matrix, a: &Matrix, v: &[f64], count: usize, seed: u64) -> Moments {
    let (n, l) = xt.shape();
    let (m, k) = a.shape();
    let mut rng = rng_stream(seed, 0);
    let mut sum = vec![0.0; n * n];
    let mut sumsq = vec![0.0; n * n];
    for _ in 0..count {
        let b = Matrix::from_fn(k, l, |_, _| standard_normal(&mut rng));
        let pre = matmul_nt(&matmul_nt(xt, &b, &mut NoCount), a, &mut NoCount);
        let z = Matrix::from_fn(n, m, |i, r| if pre[(i, r)] >= 0.0 { v[r] } else { 0.0 });
        let s = matmul(&z, a, &mut NoCount);
        let ss = matmul_nt(&s, &s, &mut NoCount);
        for i in 0..n {
            for j in 0..n {
                let val = gram[(i, j)] * ss[(i, j)] / m as f64;
                sum[i * n + j] += val;
                sumsq[i * n + j] += val * val;
            }
        }
    }
    Moments { sum, sumsq }
}

/// Unit-sign table `Z` (`n × m`) and projected inputs at the network state.
fn state_features(net: &Network, x: &Matrix) -> Result<(Matrix, Matrix)> {
    let xt = net.project(x, &mut NoCount)?;
    let pre = net.forward_projected(&xt, &mut NoCount)?.pre;
    let z = crate::network::pattern_from_pre(&pre, net.v()).z;
    Ok((xt, z))
}

/// `(1/m) G ∘ K` with `K = M Zᵀ` (dense/bc) or `(M A)(Z A)ᵀ` (abc).
fn masked_kernel(net: &Network, xt: &Matrix, left: &Matrix, z: &Matrix) -> Matrix {
    let gram = matmul_nt(xt, xt, &mut NoCount);
    let k = match net.a() {
        None => matmul_nt(left, z, &mut NoCount),
        Some(a) => matmul_nt(&matmul(left, a, &mut NoCount), &matmul(z, a, &mut NoCount), &mut NoCount),
    };
    let m = net.m() as f64;
    Matrix::from_fn(gram.rows(), gram.cols(), |i, j| gram[(i, j)] * k[(i, j)] / m)
}

/// Empirical kernel at the network's current parameters, tagged as step 0.
pub fn h_empirical(net: &Network, x: &Matrix) -> Result<KernelMatrix> {
    h_empirical_at(net, x, 0)
}

pub fn h_empirical_at(net: &Network, x: &Matrix, step: usize) -> Result<KernelMatrix> {
    let (xt, z) = state_features(net, x)?;
    let h = masked_kernel(net, &xt, &z, &z);
    KernelMatrix::new(h.symmetrized(), Provenance::Empirical { step })
}

/// `flipped[i * m + r]`: unit `r` changed state on input `i` between the two
/// networks.
pub fn flip_table(net_t: &Network, net_0: &Network, x: &Matrix) -> Result<Vec<bool>> {
    if !net_t.shares_frozen(net_0) {
        return invalid("networks do not share frozen parts");
    }
    let p_t = net_t.pre_activations(x)?;
    let p_0 = net_0.pre_activations(x)?;
    Ok(p_t
        .as_slice()
        .iter()
        .zip(p_0.as_slice())
        .map(|(a, b)| (*a >= 0.0) != (*b >= 0.0))
        .collect())
}

/// Kernel restricted row-wise to flipped units, then symmetrized.
pub fn h_perp(net_t: &Network, net_0: &Network, x: &Matrix) -> Result<KernelMatrix> {
    let flips = flip_table(net_t, net_0, x)?;
    let (xt, z) = state_features(net_t, x)?;
    let m = net_t.m();
    let masked = Matrix::from_fn(z.rows(), m, |i, r| if flips[i * m + r] { z[(i, r)] } else { 0.0 });
    let h = masked_kernel(net_t, &xt, &masked, &z);
    KernelMatrix::new(h.symmetrized(), Provenance::Empirical { step: 0 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deviation {
    pub max_entry: f64,
    pub frobenius: f64,
    pub spectral: f64,
    pub sum_abs: f64,
}

pub fn matrix_deviation(h1: &Matrix, h2: &Matrix) -> Result<Deviation> {
    if h1.shape() != h2.shape() {
        return invalid(format!("kernel shapes differ: {:?} vs {:?}", h1.shape(), h2.shape()));
    }
    let diff = h1.sub(h2)?;
    let nm = norms(&diff);
    Ok(Deviation {
        max_entry: nm.max_entry,
        frobenius: nm.frobenius,
        spectral: nm.spectral,
        sum_abs: diff.as_slice().iter().map(|v| v.abs()).sum(),
    })
}

pub fn kernel_deviation(h1: &KernelMatrix, h2: &KernelMatrix) -> Result<Deviation> {
    matrix_deviation(h1.matrix(), h2.matrix())
}
