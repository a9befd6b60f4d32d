//! FLOP accounting and per-iteration timing.
//!
//! Closed-form counts per GD iteration (multiply-add = 2 flops, update = 1
//! flop per trainable entry), `n` samples:
//!
//! | variant | forward | gradient | update |
//! |---------|---------|----------|--------|
//! | dense | `2nmd` | `2nmd` | `md` |
//! | bc | `2nld + 2nml` | `2nml` | `ml` |
//! | abc | `2nld + 2nkl + 2nmk` | `2n(mk + kl)` | `kl` |
//!
//! The `2nld` term is the projection `X̃ = X Cᵀ` (Gaussian `C`). Training
//! caches `X̃`, so the steady-state cost is [`CostModel::cached_per_iter`].

use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::linalg::NoCount;
use crate::network::{Dataset, Dims, Network, Variant};
use crate::trainer::counted_iteration;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BenchDims {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub l: usize,
    pub k: usize,
}

impl BenchDims {
    pub fn network_dims(&self) -> Dims {
        Dims::new(self.m, self.d, self.l, self.k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    pub variant: Variant,
    pub dims: BenchDims,
    pub flops_projection: u64,
    pub flops_forward: u64,
    pub flops_grad: u64,
    pub flops_update: u64,
    pub flops_total_per_iter: u64,
}

impl CostModel {
    /// Per-iteration cost once `X̃` is cached.
    pub fn cached_per_iter(&self) -> u64 {
        self.flops_total_per_iter - self.flops_projection
    }
}

pub fn flop_count(variant: Variant, dims: BenchDims) -> CostModel {
    let BenchDims { n, d, m, l, k } = dims;
    let [n, d, m, l, k] = [n, d, m, l, k].map(|v| v as u64);
    let (proj, fwd, grad, upd) = match variant {
        Variant::Dense => (0, 2 * n * m * d, 2 * n * m * d, m * d),
        Variant::TwoFactor => (2 * n * l * d, 2 * n * l * d + 2 * n * m * l, 2 * n * m * l, m * l),
        Variant::ThreeFactor => (
            2 * n * l * d,
            2 * n * l * d + 2 * n * k * l + 2 * n * m * k,
            2 * n * (m * k + k * l),
            k * l,
        ),
    };
    CostModel {
        variant,
        dims,
        flops_projection: proj,
        flops_forward: fwd,
        flops_grad: grad,
        flops_update: upd,
        flops_total_per_iter: fwd + grad + upd,
    }
}

/// Wall-clock samples with their order statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingStats {
    pub samples_ns: Vec<u64>,
    pub median_ns: u64,
    pub p10_ns: u64,
    pub p90_ns: u64,
}

impl TimingStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples_ns: Vec<u64>) -> Self {
        let mut s = samples_ns.clone();
        s.sort_unstable();
        let pick = |q: f64| -> u64 {
            if s.is_empty() {
                return 0;
            }
            let idx = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
            s[idx]
        };
        Self { median_ns: pick(0.5), p10_ns: pick(0.1), p90_ns: pick(0.9), samples_ns }
    }
}

pub const WARMUP_ITERS: usize = 2;
pub const MIN_ITERS: usize = 5;

/// Run `f` `warmup` times untimed, then `reps` times timed.
pub fn time_samples(warmup: usize, reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<TimingStats> {
    for _ in 0..warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_nanos() as u64);
    }
    Ok(TimingStats::from_samples(samples))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub variant: Variant,
    pub dims: BenchDims,
    pub iters: usize,
    pub timing: TimingStats,
    /// Flops of one timed iteration (projection cached).
    pub flops_per_iter: u64,
    pub achieved_flops_per_sec: f64,
    pub threads: usize,
}

pub const BENCH_HEADER: &str = "variant,n,d,m,l,k,flops_per_iter,median_ns,p10_ns,p90_ns,threads";

impl BenchResult {
    pub fn csv_row(&self) -> String {
        let BenchDims { n, d, m, l, k } = self.dims;
        format!(
            "{},{n},{d},{m},{l},{k},{},{},{},{},{}",
            self.variant,
            self.flops_per_iter,
            self.timing.median_ns,
            self.timing.p10_ns,
            self.timing.p90_ns,
            self.threads
        )
    }
}

pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

/// Bytes of the largest first-layer-sized buffer, `m·max(d, l, k)·8`.
pub fn memory_estimate(dims: BenchDims) -> u64 {
    (dims.m as u64) * (dims.d.max(dims.l).max(dims.k) as u64) * 8
}

/// Time full GD iterations (forward, gradient, update) on a throwaway
/// instance. Dataset generation and the projection happen before timing.
pub fn time_per_iter(
    variant: Variant,
    dims: BenchDims,
    iters: usize,
    seed: u64,
    memory_cap: u64,
) -> Result<BenchResult> {
    if iters < MIN_ITERS {
        return invalid(format!("need at least {MIN_ITERS} timed iterations, got {iters}"));
    }
    let required = memory_estimate(dims);
    if required > memory_cap {
        return Err(Error::MemoryCap { required, cap: memory_cap });
    }
    let x = crate::data::sphere_uniform(dims.n, dims.d, seed)?;
    let y = vec![0.5; dims.n];
    let data = Dataset::new(x, y)?;
    let mut net = Network::init(variant, dims.network_dims(), seed)?;
    let xt = net.project(data.x(), &mut NoCount)?;
    let eta = 1e-6;
    let timing = time_samples(WARMUP_ITERS, iters, || {
        net = counted_iteration(&net, &data, eta, Some(&xt), &mut NoCount)?;
        Ok(())
    })?;
    let flops = flop_count(variant, dims).cached_per_iter();
    let achieved = if timing.median_ns > 0 { flops as f64 / (timing.median_ns as f64 * 1e-9) } else { f64::NAN };
    Ok(BenchResult {
        variant,
        dims,
        iters,
        timing,
        flops_per_iter: flops,
        achieved_flops_per_sec: achieved,
        threads: 1,
    })
}

/// Flops actually executed by one counted iteration, with or without the
/// projection.
pub fn counted_flops(variant: Variant, dims: BenchDims, seed: u64, include_projection: bool) -> Result<u64> {
    let x = crate::data::sphere_uniform(dims.n, dims.d, seed)?;
    let data = Dataset::new(x, vec![0.25; dims.n])?;
    let net = Network::init(variant, dims.network_dims(), seed)?;
    let xt = net.project(data.x(), &mut NoCount)?;
    let mut ops = crate::linalg::FlopCounter::default();
    let cached = if include_projection { None } else { Some(&xt) };
    counted_iteration(&net, &data, 0.1, cached, &mut ops)?;
    Ok(ops.flops)
}
