//! Bound calculators and predictors: eigen-decomposition loss prediction, the
//! B-drift bound, Rademacher complexity (formula and empirical value), the
//! generalization gap, and per-run bound reports.

use std::fmt::Write as _;

use log::warn;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, matmul, norm2, psd_quadform_inv, rng_stream, Matrix, NoCount};
use crate::network::{Dataset, Network};
use crate::ntk::{matrix_deviation, KernelMatrix};
use crate::output::{fmt_f64, parse_f64};
use crate::trainer::TrainTrace;

/// Columns are per-sample output gradients `∂u_i/∂vec(B)` (`p × n`, `B`
/// flattened row-major), so `zᵀz` is the empirical kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub z: Matrix,
    pub m: usize,
}

/// Build the gradient-feature matrix at the network's current state.
///
/// dense/bc: entry `(r·c_dim + c, i) = v_r 1{pre_{i,r} ≥ 0} x̃_{i,c}/√m`;
/// abc: `(a·l + c, i) = S_{i,a} x̃_{i,c}/√m` with `S = Z A`.
pub fn feature_matrix(net: &Network, x: &Matrix) -> Result<FeatureMatrix> {
    let xt = net.project(x, &mut NoCount)?;
    let pre = net.forward_projected(&xt, &mut NoCount)?.pre;
    let zsign = crate::network::pattern_from_pre(&pre, net.v()).z;
    let s = match net.a() {
        None => zsign,
        Some(a) => matmul(&zsign, a, &mut NoCount),
    };
    let (n, rows) = (xt.rows(), s.cols());
    let cdim = xt.cols();
    let scale = 1.0 / (net.m() as f64).sqrt();
    let mut z = Matrix::zeros(rows * cdim, n);
    for i in 0..n {
        for a in 0..rows {
            let sa = s[(i, a)];
            if sa == 0.0 {
                continue;
            }
            for c in 0..cdim {
                z[(a * cdim + c, i)] = sa * xt[(i, c)] * scale;
            }
        }
    }
    Ok(FeatureMatrix { z, m: net.m() })
}

/// Predicted `‖y − u(t)‖` for `t = 0..=steps` under linear dynamics with
/// kernel `hinf`, starting from residual `r0 = y − u(0)`.
pub fn predicted_loss_curve(hinf: &KernelMatrix, r0: &[f64], eta: f64, steps: usize) -> Result<Vec<f64>> {
    if r0.len() != hinf.n() {
        return invalid(format!("residual length {} != kernel size {}", r0.len(), hinf.n()));
    }
    let sd = hinf.spectral()?;
    if eta * sd.lambda_max() > 1.0 {
        warn!("eta * lambda_max = {:.3} > 1: the decay envelope does not apply", eta * sd.lambda_max());
    }
    let coef: Vec<f64> = (0..hinf.n()).map(|i| dot(&sd.eigenvector(i), r0).powi(2)).collect();
    let factors: Vec<f64> = sd.eigenvalues.iter().map(|l| (1.0 - eta * l).powi(2)).collect();
    let mut weights = coef;
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        out.push(weights.iter().sum::<f64>().sqrt());
        for (w, f) in weights.iter_mut().zip(&factors) {
            *w *= f;
        }
    }
    Ok(out)
}

/// Same curve projected from the labels alone, i.e. assuming `u(0) = 0`.
pub fn predicted_loss_curve_from_labels(hinf: &KernelMatrix, y: &[f64], eta: f64, steps: usize) -> Result<Vec<f64>> {
    predicted_loss_curve(hinf, y, eta, steps)
}

/// Leading term of the B-drift bound, `√(r0ᵀ H⁻¹ r0)`.
pub fn b_drift_bound(hinf: &KernelMatrix, r0: &[f64]) -> Result<f64> {
    Ok(psd_quadform_inv(hinf.matrix(), r0)?.sqrt())
}

/// `τ/√(n·d_eff)·(1 + (4 ln(2/δ)/m)^{1/4}) + 2R²√(m/π) + R√(ln(2/δ))`.
pub fn rademacher_bound(r: f64, tau: f64, n: usize, d_eff: usize, m: usize, delta: f64) -> Result<f64> {
    if !(r >= 0.0 && tau >= 0.0) || n == 0 || d_eff == 0 || m == 0 {
        return invalid("rademacher bound needs R, tau >= 0 and n, d_eff, m >= 1");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    let log_term = (2.0 / delta).ln();
    let m = m as f64;
    Ok(tau / ((n * d_eff) as f64).sqrt() * (1.0 + (4.0 * log_term / m).powf(0.25))
        + 2.0 * r * r * (m / std::f64::consts::PI).sqrt()
        + r * log_term.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

pub const DEFAULT_EPSILON_SAMPLES: usize = 256;

/// `(τ/n)·E‖Z0 ε‖` over Rademacher `ε` (Monte-Carlo) plus the flip correction
/// `(2R/(n√m))·Σ flips`.
pub fn rademacher_empirical(
    z0: &FeatureMatrix,
    tau: f64,
    flips: &[bool],
    r: f64,
    epsilon_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if epsilon_samples == 0 {
        return invalid("need at least one epsilon sample");
    }
    let n = z0.z.cols();
    let mut rng = rng_stream(seed, 0);
    let (mut sum, mut sumsq) = (0.0, 0.0);
    let mut eps = vec![0.0; n];
    for _ in 0..epsilon_samples {
        eps.iter_mut().for_each(|e| *e = if rng.random::<bool>() { 1.0 } else { -1.0 });
        let v = norm2(&z0.z.matvec(&eps));
        sum += v;
        sumsq += v * v;
    }
    let s = epsilon_samples as f64;
    let mean = sum / s;
    let var = if epsilon_samples > 1 { ((sumsq / s - mean * mean) * s / (s - 1.0)).max(0.0) } else { 0.0 };
    let total_flips = flips.iter().filter(|f| **f).count() as f64;
    let nf = n as f64;
    Ok(Estimate {
        value: tau / nf * mean + 2.0 * r / (nf * (z0.m as f64).sqrt()) * total_flips,
        std_err: tau / nf * (var / s).sqrt(),
    })
}

/// Exact `E‖Z ε‖` over all `2ⁿ` sign vectors (`n` = columns of `z`, at most 24).
pub fn expected_norm_exhaustive(z: &Matrix) -> Result<f64> {
    let n = z.cols();
    if n == 0 || n > 24 {
        return invalid(format!("exhaustive enumeration supports 1..=24 columns, got {n}"));
    }
    // ε and −ε give the same norm, so fix the last sign to +1
    let half = 1usize << (n - 1);
    let mut eps = vec![1.0; n];
    let mut total = 0.0;
    for mask in 0..half {
        for (b, e) in eps.iter_mut().take(n - 1).enumerate() {
            *e = if mask >> b & 1 == 1 { -1.0 } else { 1.0 };
        }
        total += norm2(&z.matvec(&eps));
    }
    Ok(total / half as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gap {
    pub train_l1: f64,
    pub heldout_l1: f64,
    pub gap: f64,
}

/// Mean absolute errors on both sets; `gap = heldout − train`.
pub fn generalization_gap(net: &Network, train: &Dataset, heldout: &Dataset) -> Result<Gap> {
    let l1 = |d: &Dataset| -> Result<f64> {
        let u = net.forward(d.x())?;
        Ok(u.iter().zip(d.y()).map(|(a, b)| (a - b).abs()).sum::<f64>() / d.n() as f64)
    };
    let (train_l1, heldout_l1) = (l1(train)?, l1(heldout)?);
    Ok(Gap { train_l1, heldout_l1, gap: heldout_l1 - train_l1 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundEntry {
    pub name: String,
    pub bound: f64,
    pub measured: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl BoundEntry {
    /// Entry passing when `measured ≤ limit_factor · bound`.
    pub fn new(name: &str, bound: f64, measured: f64, limit_factor: f64) -> Self {
        let ratio = ratio(measured, bound);
        let pass = measured <= limit_factor * bound || (measured == 0.0 && bound == 0.0);
        Self { name: name.to_string(), bound, measured, ratio, pass }
    }

    /// Entry passing when `measured ≥ floor`.
    pub fn at_least(name: &str, floor: f64, measured: f64) -> Self {
        Self { name: name.to_string(), bound: floor, measured, ratio: ratio(measured, floor), pass: measured >= floor }
    }
}

fn ratio(measured: f64, bound: f64) -> f64 {
    if bound != 0.0 {
        measured / bound
    } else if measured == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
}

pub const REPORT_HEADER: &str = "name,bound,measured,ratio,pass";

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn push(&mut self, e: BoundEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: BoundReport) {
        self.entries.extend(other.entries);
    }

    /// CSV rows followed by a `#`-prefixed human-readable summary.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.name,
                fmt_f64(e.bound),
                fmt_f64(e.measured),
                fmt_f64(e.ratio),
                e.pass
            );
        }
        let passed = self.entries.iter().filter(|e| e.pass).count();
        let _ = writeln!(s, "# {passed}/{} entries pass", self.entries.len());
        for e in &self.entries {
            let _ = writeln!(
                s,
                "# {:<28} {} measured {:.4e} vs bound {:.4e} (ratio {:.3})",
                e.name,
                if e.pass { "PASS" } else { "FAIL" },
                e.measured,
                e.bound,
                e.ratio
            );
        }
        s
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::Parse("bound report header missing".into()));
        }
        let mut entries = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("bad report row `{line}`")));
            }
            entries.push(BoundEntry {
                name: f[0].to_string(),
                bound: parse_f64(f[1])?,
                measured: parse_f64(f[2])?,
                ratio: parse_f64(f[3])?,
                pass: f[4].parse().map_err(|_| Error::Parse(format!("bad pass flag `{}`", f[4])))?,
            });
        }
        Ok(Self { entries })
    }
}

/// Everything produced by one seeded training run that the report checks.
#[derive(Clone, Debug, Default)]
pub struct RunArtifacts {
    pub data: Option<Dataset>,
    pub net0: Option<Network>,
    pub trace: Option<TrainTrace>,
    /// Infinite-width kernel (closed form or Monte-Carlo).
    pub hinf: Option<KernelMatrix>,
    /// Empirical kernel at initialization.
    pub h0: Option<KernelMatrix>,
    /// Empirical kernel at the final step.
    pub h_final: Option<KernelMatrix>,
    pub eta: Option<f64>,
    pub delta: f64,
}

/// Tolerances for the report's pass flags.
pub const DRIFT_SLACK: f64 = 1.0;
pub const PREDICTION_TOL: f64 = 0.15;
pub const PREDICTION_MIN_LOSS: f64 = 1e-3;
pub const B_DRIFT_FACTOR: f64 = 2.0;

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::IncompleteReport(what.to_string()))
}

/// Largest relative gap between predicted and measured `‖y − u(t)‖` over
/// steps with loss at least `min_loss`.
pub fn prediction_error(predicted: &[f64], losses: &[f64], min_loss: f64) -> f64 {
    predicted
        .iter()
        .zip(losses)
        .filter(|(_, l)| **l >= min_loss)
        .map(|(p, l)| {
            let actual = l.sqrt();
            (p - actual).abs() / actual
        })
        .fold(0.0, f64::max)
}

/// Ratio of each loss to the decay envelope `(1 − ηλ/2)^t loss(0)`; the
/// envelope holds when the maximum is at most 1.
pub fn envelope_ratio(losses: &[f64], eta: f64, lambda: f64) -> f64 {
    let rate = 1.0 - eta * lambda / 2.0;
    let l0 = losses[0];
    losses
        .iter()
        .enumerate()
        .map(|(t, l)| {
            let env = rate.powi(t as i32) * l0;
            if env > 0.0 {
                l / env
            } else if *l == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// `4√n ‖r0‖ / (√m λ0)`.
pub fn row_drift_bound(n: usize, r0_norm: f64, m: usize, lambda0: f64) -> f64 {
    4.0 * (n as f64).sqrt() * r0_norm / ((m as f64).sqrt() * lambda0)
}

pub fn bound_report(a: &RunArtifacts) -> Result<BoundReport> {
    let data = need(&a.data, "dataset")?;
    let net0 = need(&a.net0, "initial network")?;
    let trace = need(&a.trace, "training trace")?;
    let hinf = need(&a.hinf, "infinite-width kernel")?;
    let h0 = need(&a.h0, "initial empirical kernel")?;
    let h_final = need(&a.h_final, "final empirical kernel")?;
    let eta = *need(&a.eta, "learning rate")?;
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {}", a.delta));
    }
    let n = data.n();
    let m = net0.m();
    let u0 = net0.forward(data.x())?;
    let r0: Vec<f64> = data.y().iter().zip(&u0).map(|(y, u)| y - u).collect();
    let losses = trace.losses();
    let last = trace.last();
    let lambda0 = hinf.lambda0()?;

    let mut rep = BoundReport::default();
    let env = envelope_ratio(&losses, eta, h0.lambda0()?);
    rep.push(BoundEntry::new("convergence_envelope", 1.0, env, 1.0));

    // NaN entries (drift not recorded at that step) are skipped by f64::max
    let max_drift = trace.records.iter().map(|r| r.max_row_drift).fold(0.0, f64::max);
    let r_prime = row_drift_bound(n, norm2(&r0), m, lambda0);
    rep.push(BoundEntry::new("row_drift", r_prime, max_drift, 1.0 + DRIFT_SLACK));

    let dev = matrix_deviation(h_final.matrix(), h0.matrix())?;
    rep.push(BoundEntry::new("kernel_stability", lambda0 / 4.0, dev.spectral, 1.0));

    let steps = last.t;
    let predicted = predicted_loss_curve(hinf, &r0, eta, steps)?;
    let perr = prediction_error(&predicted, &losses, PREDICTION_MIN_LOSS);
    rep.push(BoundEntry::new("eigen_prediction", PREDICTION_TOL, perr, 1.0));

    let bdb = b_drift_bound(hinf, &r0)?;
    rep.push(BoundEntry::new("b_drift", bdb, last.b_fro_drift, B_DRIFT_FACTOR));

    let flips = last.total_flips() as f64;
    let flip_bound = (m * n) as f64 * max_drift / a.delta;
    rep.push(BoundEntry::new("flip_count", flip_bound, flips, 1.0));
    Ok(rep)
}

/// Small order statistics used by the experiment drivers.
pub mod stats {
    pub fn median(v: &[f64]) -> f64 {
        let mut s: Vec<f64> = v.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        let n = s.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        }
    }

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for t in i..=j {
                r[idx[t]] = avg;
            }
            i = j + 1;
        }
        r
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    /// Spearman rank correlation (average ranks for ties).
    pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
        pearson(&ranks(a), &ranks(b))
    }

    /// Least-squares slope of `ln y` against `ln x`.
    pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
        let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Dims, Variant};
    use crate::ntk::{h_empirical, Provenance};

    fn kernel(h: Matrix) -> KernelMatrix {
        KernelMatrix::new(h, Provenance::Analytic).unwrap()
    }

    #[test]
    fn feature_gram_is_empirical_kernel() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.6, 0.8, 0.0, 0.0],
            vec![0.0, 0.0, 0.6, 0.0, 0.8],
        ])
        .unwrap();
        for variant in Variant::ALL {
            let net = Network::init(variant, Dims::new(20, 5, 4, 6), 3).unwrap();
            let f = feature_matrix(&net, &x).unwrap();
            let ztz = crate::linalg::matmul_tn(&f.z, &f.z, &mut NoCount);
            let h = h_empirical(&net, &x).unwrap();
            assert!(ztz.sub(h.matrix()).unwrap().max_abs() <= 1e-10, "{variant}");
        }
    }

    #[test]
    fn curve_examples() {
        let r0 = [3.0, 4.0];
        let h = kernel(Matrix::identity(2).scale(0.5));
        let c = predicted_loss_curve(&h, &r0, 0.2, 10).unwrap();
        assert!((c[0] - 5.0).abs() < 1e-12);
        for (t, v) in c.iter().enumerate() {
            assert!((v - 5.0 * 0.9f64.powi(t as i32)).abs() < 1e-12);
        }
        let h = kernel(Matrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap());
        let c = predicted_loss_curve(&h, &r0, 0.5, 400).unwrap();
        assert!(c.windows(2).all(|w| w[1] < w[0]));
        assert!(c[400] < 1e-6);
    }

    #[test]
    fn b_drift_examples() {
        let r0 = [3.0, 4.0];
        assert!((b_drift_bound(&kernel(Matrix::identity(2)), &r0).unwrap() - 5.0).abs() < 1e-8);
        assert!((b_drift_bound(&kernel(Matrix::identity(2).scale(4.0)), &r0).unwrap() - 2.5).abs() < 1e-8);
    }

    #[test]
    fn rademacher_formula_examples() {
        assert_eq!(rademacher_bound(0.0, 0.0, 16, 16, 4096, 0.1).unwrap(), 0.0);
        let lim = rademacher_bound(0.0, (16.0f64 * 8.0).sqrt(), 16, 8, usize::MAX, 0.1).unwrap();
        assert!((lim - 1.0).abs() < 1e-4);
        let v = rademacher_bound(0.01, 2.0, 16, 16, 4096, 0.1).unwrap();
        let l = 20f64.ln();
        let hand = 2.0 / 16.0 * (1.0 + (4.0 * l / 4096.0).powf(0.25))
            + 2.0 * 1e-4 * (4096.0 / std::f64::consts::PI).sqrt()
            + 0.01 * l.sqrt();
        assert!((v - hand).abs() < 1e-12);
        assert!(rademacher_bound(0.0, 1.0, 1, 1, 1, 1.0).is_err());
    }

    #[test]
    fn rademacher_empirical_examples() {
        let z = FeatureMatrix { z: Matrix::from_fn(5, 3, |r, c| if c == 1 { r as f64 } else { 0.0 }), m: 4 };
        let e = rademacher_empirical(&z, 0.0, &[], 0.0, 16, 1).unwrap();
        assert_eq!(e.value, 0.0);
        let e = rademacher_empirical(&z, 1.0, &[], 0.0, 16, 1).unwrap();
        let col_norm = (0..5).map(|r| (r * r) as f64).sum::<f64>().sqrt();
        assert!((e.value - col_norm / 3.0).abs() < 1e-12);
        assert!(e.std_err < 1e-12);
        let e = rademacher_empirical(&z, 0.0, &[true, false, true], 0.5, 16, 1).unwrap();
        assert!((e.value - 2.0 * 0.5 / (3.0 * 2.0) * 2.0).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_small_cases() {
        // one column: every sign gives the column norm
        let z = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert!((expected_norm_exhaustive(&z).unwrap() - 5.0).abs() < 1e-15);
        // orthogonal unit columns: ‖Zε‖ = √n for every ε
        let z = Matrix::identity(3);
        assert!((expected_norm_exhaustive(&z).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        // equal columns: ‖Zε‖ = |Σε|·‖c‖, mean of |ε1+ε2| is 1
        let z = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!((expected_norm_exhaustive(&z).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn report_round_trip() {
        let mut rep = BoundReport::default();
        rep.push(BoundEntry::new("a", 1.5, 0.3, 1.0));
        rep.push(BoundEntry::new("b", 0.0, 0.0, 1.0));
        rep.push(BoundEntry::new("c", 0.1, 1.0 / 3.0, 2.0));
        assert!(!rep.all_pass());
        let back = BoundReport::from_csv(&rep.to_csv()).unwrap();
        assert_eq!(back, rep);
        assert!(BoundReport::from_csv("nope\n").is_err());
    }

    #[test]
    fn missing_artifact_is_named() {
        let err = bound_report(&RunArtifacts { delta: 0.1, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::IncompleteReport(ref s) if s == "dataset"));
    }

    #[test]
    fn stats_helpers() {
        assert_eq!(stats::median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(stats::median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((stats::spearman(&[1.0, 2.0, 3.0], &[9.0, 5.0, 1.0]) + 1.0).abs() < 1e-15);
        let x = [1.0, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((stats::loglog_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
