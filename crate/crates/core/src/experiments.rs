//! Seeded experiment drivers.
//!
//! Every experiment takes a serializable config, fans its seeds out over the
//! rayon pool (results are collected in seed order, so output never depends
//! on scheduling) and returns CSV files plus a [`BoundReport`]. Wall-clock
//! numbers are returned separately as `meta` lines and timing files under
//! `timing/`, so every other CSV is byte-identical across reruns.

use std::time::Instant;

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::analysis::{
    bound_report, expected_norm_exhaustive, feature_matrix, generalization_gap, predicted_loss_curve,
    rademacher_bound, rademacher_empirical, stats, BoundEntry, BoundReport, RunArtifacts,
};
use crate::bench::{counted_flops, flop_count, time_per_iter, time_samples, BenchDims, BENCH_HEADER};
use crate::data::{gen_data, sphere_uniform, teacher_dataset, GenMode};
use crate::error::{Error, Result};
use crate::jl::{distortion_stats, JlKind, JlOperator};
use crate::linalg::{matmul_nt, Matrix, NoCount};
use crate::network::{Dataset, Dims, Network, Variant};
use crate::ntk::{
    flip_table, h_empirical, h_empirical_at, hinf_closed_form, hinf_monte_carlo, kernel_deviation, KernelMatrix,
};
use crate::output::Table;
use crate::trainer::{train, weight_drift, TrainConfig, TrainTrace};

pub const EXPERIMENT_NAMES: [&str; 9] = [
    "kernel-concentration",
    "kernel-stability",
    "convergence",
    "eigen-predict",
    "drift",
    "rademacher",
    "generalization",
    "jl-distortion",
    "bench",
];

pub const DEFAULT_DELTA: f64 = 0.1;

/// Files (relative path, contents), the report, and non-reproducible notes.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub files: Vec<(String, String)>,
    pub report: BoundReport,
    pub meta: Vec<(String, String)>,
}

impl ExperimentOutput {
    fn table(&mut self, name: &str, t: &Table) {
        self.files.push((name.to_string(), t.to_csv()));
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_4764_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `i`-th run under base seed `base`. Hashing keeps the
/// per-run sub-seeds (`seed+1`…`seed+4`) of different runs apart.
pub fn run_seed(base: u64, i: usize) -> u64 {
    splitmix64(base ^ splitmix64(i as u64))
}

const MC_SALT: u64 = 0x6d63_5f6b_6572_6e6c;
const HELDOUT_SALT: u64 = 0x6865_6c64_6f75_7421;
const TEACHER_SALT: u64 = 0x7465_6163_6865_7221;

/// One training setup shared by the training-based experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSetup {
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub k: usize,
    pub m: usize,
    pub min_angle_deg: f64,
    pub steps: usize,
    /// Learning rate; unset means `1/(2‖H(0)‖)`.
    pub eta: Option<f64>,
    pub loss_floor: f64,
    /// Monte-Carlo draws for the abc infinite-width kernel.
    pub hinf_samples: usize,
}

impl Default for TrainSetup {
    fn default() -> Self {
        Self {
            n: 16,
            d: 32,
            l: 16,
            k: 512,
            m: 8192,
            min_angle_deg: 30.0,
            steps: 2000,
            eta: None,
            loss_floor: crate::trainer::DEFAULT_LOSS_FLOOR,
            hinf_samples: 64,
        }
    }
}

/// Everything measured on one seeded training run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub variant: Variant,
    pub index: usize,
    pub seed: u64,
    pub m: usize,
    pub eta: f64,
    pub lambda_min_h0: f64,
    pub lambda0: f64,
    pub trace: TrainTrace,
    pub predicted: Vec<f64>,
    pub report: BoundReport,
    pub envelope_ratio: f64,
    pub strictly_decreasing: bool,
    pub max_row_drift: f64,
    pub row_drift_bound: f64,
    pub b_fro_drift: f64,
    pub b_drift_bound: f64,
    pub prediction_error: f64,
    pub wall_nanos: u64,
}

fn infinite_kernel(net: &Network, x: &Matrix, samples: usize, seed: u64) -> Result<KernelMatrix> {
    match net.variant() {
        Variant::Dense => hinf_closed_form(x, None),
        Variant::TwoFactor => hinf_closed_form(x, net.c()),
        Variant::ThreeFactor => {
            let a = net.a().expect("abc has A");
            hinf_monte_carlo(x, net.c(), Some((a, net.v())), samples, seed ^ MC_SALT)
        }
    }
}

/// Train one seeded instance and evaluate its bound report.
pub fn seeded_run(setup: &TrainSetup, variant: Variant, index: usize, seed: u64, delta: f64) -> Result<RunSummary> {
    let start = Instant::now();
    let data = gen_data(setup.n, setup.d, GenMode::SphereSeparated { min_angle_deg: setup.min_angle_deg }, seed)?;
    let (mut summary, _) = train_and_report(setup, variant, &data, index, seed, delta)?;
    summary.wall_nanos = start.elapsed().as_nanos() as u64;
    Ok(summary)
}

/// Train on a given dataset (`setup.n`, `setup.d` are ignored) and return
/// the summary together with the trained network.
pub fn train_and_report(
    setup: &TrainSetup,
    variant: Variant,
    data: &Dataset,
    index: usize,
    seed: u64,
    delta: f64,
) -> Result<(RunSummary, Network)> {
    let start = Instant::now();
    let dims = Dims::new(setup.m, data.d(), setup.l, setup.k);
    let net0 = Network::init(variant, dims, seed)?;
    let h0 = h_empirical(&net0, data.x())?;
    let eta = match setup.eta {
        Some(e) => e,
        None => 0.5 / h0.lambda_max()?,
    };
    let hinf = infinite_kernel(&net0, data.x(), setup.hinf_samples, seed)?;
    let mut cfg = TrainConfig::new(eta, setup.steps);
    cfg.loss_floor = setup.loss_floor;
    // per-step drift costs as much as a forward pass for abc; measure it once
    cfg.track_drift = variant != Variant::ThreeFactor;
    let (net_t, mut trace) = train(&net0, data, &cfg)?;
    if !cfg.track_drift {
        let (row, b) = weight_drift(&net0, &net_t)?;
        let last = trace.records.last_mut().expect("step 0");
        last.max_row_drift = row;
        last.b_fro_drift = b;
    }
    let steps = trace.last().t;
    let h_final = h_empirical_at(&net_t, data.x(), steps)?;
    let u0 = net0.forward(data.x())?;
    let r0: Vec<f64> = data.y().iter().zip(&u0).map(|(y, u)| y - u).collect();
    let predicted = predicted_loss_curve(&hinf, &r0, eta, steps)?;
    let lambda_min_h0 = h0.lambda_min()?;
    let lambda0 = hinf.lambda0()?;
    let report = bound_report(&RunArtifacts {
        data: Some(data.clone()),
        net0: Some(net0),
        trace: Some(trace.clone()),
        hinf: Some(hinf),
        h0: Some(h0),
        h_final: Some(h_final),
        eta: Some(eta),
        delta,
    })?;
    let get = |name: &str| report.get(name).expect("report entry");
    let losses = trace.losses();
    let summary = RunSummary {
        variant,
        index,
        seed,
        m: setup.m,
        eta,
        lambda_min_h0,
        lambda0,
        predicted,
        envelope_ratio: get("convergence_envelope").measured,
        strictly_decreasing: losses.windows(2).all(|w| w[1] < w[0]),
        max_row_drift: get("row_drift").measured,
        row_drift_bound: get("row_drift").bound,
        b_fro_drift: get("b_drift").measured,
        b_drift_bound: get("b_drift").bound,
        prediction_error: get("eigen_prediction").measured,
        report: report.clone(),
        trace,
        wall_nanos: start.elapsed().as_nanos() as u64,
    };
    Ok((summary, net_t))
}

fn seeded_runs(setup: &TrainSetup, variant: Variant, base: u64, seeds: usize, delta: f64) -> Result<Vec<RunSummary>> {
    (0..seeds)
        .into_par_iter()
        .map(|i| seeded_run(setup, variant, i, run_seed(base, i), delta))
        .collect()
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        total += 1;
        hit += f as usize;
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

const RUNS_HEADER: [&str; 17] = [
    "variant",
    "index",
    "seed",
    "m",
    "eta",
    "lambda_min_h0",
    "lambda0",
    "steps",
    "loss0",
    "loss_final",
    "envelope_ratio",
    "strictly_decreasing",
    "max_row_drift",
    "row_drift_bound",
    "b_fro_drift",
    "b_drift_bound",
    "prediction_error",
];

fn runs_table(runs: &[RunSummary]) -> Table {
    let mut t = Table::new(&RUNS_HEADER);
    for r in runs {
        t.push(vec![
            r.variant.name().into(),
            r.index.into(),
            r.seed.to_string().into(),
            r.m.into(),
            r.eta.into(),
            r.lambda_min_h0.into(),
            r.lambda0.into(),
            r.trace.last().t.into(),
            r.trace.records[0].loss.into(),
            r.trace.last().loss.into(),
            r.envelope_ratio.into(),
            r.strictly_decreasing.into(),
            r.max_row_drift.into(),
            r.row_drift_bound.into(),
            r.b_fro_drift.into(),
            r.b_drift_bound.into(),
            r.prediction_error.into(),
        ]);
    }
    t
}

/// Runs satisfying `max_row_drift ≤ (1 + slack)·bound`.
pub fn row_drift_ok(r: &RunSummary) -> bool {
    r.max_row_drift <= (1.0 + crate::analysis::DRIFT_SLACK) * r.row_drift_bound
}

pub fn prediction_ok(r: &RunSummary) -> bool {
    r.prediction_error <= crate::analysis::PREDICTION_TOL
}

// ---------------------------------------------------------------- convergence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub seed: u64,
    pub delta: f64,
    pub seeds: usize,
    pub variants: Vec<Variant>,
    pub write_traces: bool,
    pub envelope_fraction: f64,
    pub drift_fraction: f64,
    pub setup: TrainSetup,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: DEFAULT_DELTA,
            seeds: 20,
            variants: vec![Variant::TwoFactor, Variant::ThreeFactor],
            write_traces: true,
            envelope_fraction: 0.95,
            drift_fraction: 0.95,
            setup: TrainSetup::default(),
        }
    }
}

/// All runs of a convergence config, in (variant, seed) order.
pub fn convergence_runs(cfg: &ConvergenceConfig) -> Result<Vec<RunSummary>> {
    let mut all = Vec::new();
    for &v in &cfg.variants {
        all.extend(seeded_runs(&cfg.setup, v, cfg.seed, cfg.seeds, cfg.delta)?);
    }
    Ok(all)
}

pub fn convergence_report(cfg: &ConvergenceConfig, runs: &[RunSummary]) -> BoundReport {
    let mut rep = BoundReport::default();
    for &v in &cfg.variants {
        let mine = || runs.iter().filter(move |r| r.variant == v);
        rep.push(BoundEntry::at_least(
            &format!("{v}_envelope_fraction"),
            cfg.envelope_fraction,
            fraction(mine().map(|r| r.envelope_ratio <= 1.0)),
        ));
        rep.push(BoundEntry::at_least(
            &format!("{v}_strictly_decreasing_fraction"),
            1.0,
            fraction(mine().map(|r| r.strictly_decreasing)),
        ));
        rep.push(BoundEntry::at_least(
            &format!("{v}_row_drift_fraction"),
            cfg.drift_fraction,
            fraction(mine().map(row_drift_ok)),
        ));
    }
    rep
}

pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ExperimentOutput> {
    let runs = convergence_runs(cfg)?;
    let mut out = ExperimentOutput::default();
    out.table("runs.csv", &runs_table(&runs));
    if cfg.write_traces {
        for r in &runs {
            out.files.push((format!("traces/{}_{:03}.csv", r.variant, r.index), r.trace.to_csv(false)));
        }
    }
    for r in &runs {
        out.note(&format!("run_wall_nanos.{}_{:03}", r.variant, r.index), r.wall_nanos);
        let steps: u64 = r.trace.records.iter().map(|s| s.wall_nanos).sum();
        out.note(&format!("train_wall_nanos.{}_{:03}", r.variant, r.index), steps);
    }
    out.report = convergence_report(cfg, &runs);
    Ok(out)
}

// -------------------------------------------------------------- eigen-predict

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenPredictConfig {
    pub seed: u64,
    pub delta: f64,
    pub seeds: usize,
    pub seed_fraction: f64,
    pub setup: TrainSetup,
}

impl Default for EigenPredictConfig {
    fn default() -> Self {
        Self { seed: 0, delta: DEFAULT_DELTA, seeds: 20, seed_fraction: 0.8, setup: TrainSetup::default() }
    }
}

pub fn eigen_predict_report(runs: &[RunSummary], seed_fraction: f64) -> BoundReport {
    let mut rep = BoundReport::default();
    rep.push(BoundEntry::at_least("prediction_fraction", seed_fraction, fraction(runs.iter().map(prediction_ok))));
    rep
}

pub fn run_eigen_predict(cfg: &EigenPredictConfig) -> Result<ExperimentOutput> {
    let runs = seeded_runs(&cfg.setup, Variant::TwoFactor, cfg.seed, cfg.seeds, cfg.delta)?;
    let mut out = ExperimentOutput::default();
    let mut summary = Table::new(&["index", "seed", "steps", "prediction_error", "within_tolerance"]);
    let mut curves = Table::new(&["index", "t", "measured", "predicted"]);
    for r in &runs {
        summary.push(vec![
            r.index.into(),
            r.seed.to_string().into(),
            r.trace.last().t.into(),
            r.prediction_error.into(),
            prediction_ok(r).into(),
        ]);
        for (rec, p) in r.trace.records.iter().zip(&r.predicted) {
            curves.push(vec![r.index.into(), rec.t.into(), rec.loss.sqrt().into(), (*p).into()]);
        }
    }
    out.table("prediction.csv", &summary);
    out.table("curves.csv", &curves);
    out.report = eigen_predict_report(&runs, cfg.seed_fraction);
    Ok(out)
}

// ---------------------------------------------------------------------- drift

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub seed: u64,
    pub delta: f64,
    pub seeds: usize,
    pub m_grid: Vec<usize>,
    /// Width at which the median B-drift ratio must stay within `max_ratio`.
    pub check_m: usize,
    pub max_ratio: f64,
    pub drift_fraction: f64,
    pub setup: TrainSetup,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: DEFAULT_DELTA,
            seeds: 10,
            m_grid: vec![2048, 8192, 32768],
            check_m: 8192,
            max_ratio: 2.0,
            drift_fraction: 0.95,
            setup: TrainSetup::default(),
        }
    }
}

/// Median of `b_fro_drift / b_drift_bound` per width, in grid order.
pub fn drift_medians(m_grid: &[usize], runs: &[RunSummary]) -> Vec<f64> {
    m_grid
        .iter()
        .map(|&m| {
            let v: Vec<f64> = runs.iter().filter(|r| r.m == m).map(|r| r.b_fro_drift / r.b_drift_bound).collect();
            stats::median(&v)
        })
        .collect()
}

pub fn drift_report(cfg: &DriftConfig, runs: &[RunSummary]) -> BoundReport {
    let med = drift_medians(&cfg.m_grid, runs);
    let mut rep = BoundReport::default();
    if let Some(i) = cfg.m_grid.iter().position(|&m| m == cfg.check_m) {
        rep.push(BoundEntry::new(&format!("b_drift_median_ratio_m{}", cfg.check_m), cfg.max_ratio, med[i], 1.0));
    }
    let increases = med.windows(2).filter(|w| w[1] > w[0]).count();
    rep.push(BoundEntry::new("b_drift_ratio_increases", 0.0, increases as f64, 1.0));
    rep.push(BoundEntry::at_least("row_drift_fraction", cfg.drift_fraction, fraction(runs.iter().map(row_drift_ok))));
    rep
}

pub fn drift_runs(cfg: &DriftConfig) -> Result<Vec<RunSummary>> {
    let mut all = Vec::new();
    for &m in &cfg.m_grid {
        let setup = TrainSetup { m, ..cfg.setup.clone() };
        all.extend(seeded_runs(&setup, Variant::TwoFactor, cfg.seed, cfg.seeds, cfg.delta)?);
    }
    Ok(all)
}

pub fn run_drift(cfg: &DriftConfig) -> Result<ExperimentOutput> {
    let runs = drift_runs(cfg)?;
    let mut out = ExperimentOutput::default();
    let mut t = Table::new(&[
        "m",
        "index",
        "seed",
        "steps",
        "b_fro_drift",
        "b_drift_bound",
        "ratio",
        "max_row_drift",
        "row_drift_bound",
    ]);
    for r in &runs {
        t.push(vec![
            r.m.into(),
            r.index.into(),
            r.seed.to_string().into(),
            r.trace.last().t.into(),
            r.b_fro_drift.into(),
            r.b_drift_bound.into(),
            (r.b_fro_drift / r.b_drift_bound).into(),
            r.max_row_drift.into(),
            r.row_drift_bound.into(),
        ]);
    }
    out.table("drift.csv", &t);
    let mut med = Table::new(&["m", "median_ratio"]);
    for (m, v) in cfg.m_grid.iter().zip(drift_medians(&cfg.m_grid, &runs)) {
        med.push(vec![(*m).into(), v.into()]);
    }
    out.table("drift_medians.csv", &med);
    out.report = drift_report(cfg, &runs);
    Ok(out)
}

// -------------------------------------------------------- kernel-concentration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConcentrationConfig {
    pub seed: u64,
    pub delta: f64,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub seeds: usize,
    pub m_grid: Vec<usize>,
    pub slope_min: f64,
    pub slope_max: f64,
    /// Draws for the closed-form vs Monte-Carlo check; 0 skips it.
    pub mc_samples: usize,
    pub mc_abs_tol: f64,
}

impl Default for KernelConcentrationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: DEFAULT_DELTA,
            n: 16,
            d: 32,
            l: 16,
            seeds: 20,
            m_grid: vec![256, 1024, 4096, 16384],
            slope_min: -0.65,
            slope_max: -0.35,
            mc_samples: 1_000_000,
            mc_abs_tol: 2e-3,
        }
    }
}

/// Inputs at angles 0°, 60°, 90°, 180° from the first one.
pub fn angle_probe() -> Matrix {
    let r = |deg: f64| vec![deg.to_radians().cos(), deg.to_radians().sin()];
    Matrix::from_rows(&[r(0.0), r(60.0), r(90.0), r(180.0)]).expect("four rows")
}

pub fn run_kernel_concentration(cfg: &KernelConcentrationConfig) -> Result<ExperimentOutput> {
    let mut jobs = Vec::new();
    for &m in &cfg.m_grid {
        for i in 0..cfg.seeds {
            jobs.push((m, i));
        }
    }
    let rows: Vec<(usize, usize, u64, crate::ntk::Deviation)> = jobs
        .into_par_iter()
        .map(|(m, i)| {
            let seed = run_seed(cfg.seed, i);
            let data = gen_data(cfg.n, cfg.d, GenMode::SphereUniform, seed)?;
            let net = Network::init(Variant::TwoFactor, Dims::new(m, cfg.d, cfg.l, 0), seed)?;
            let h0 = h_empirical(&net, data.x())?;
            let hinf = hinf_closed_form(data.x(), net.c())?;
            Ok((m, i, seed, kernel_deviation(&h0, &hinf)?))
        })
        .collect::<Result<_>>()?;
    let mut out = ExperimentOutput::default();
    let mut t = Table::new(&["m", "seed", "max_entry", "frobenius", "spectral", "sum_abs"]);
    for (m, _, seed, dev) in &rows {
        t.push(vec![
            (*m).into(),
            seed.to_string().into(),
            dev.max_entry.into(),
            dev.frobenius.into(),
            dev.spectral.into(),
            dev.sum_abs.into(),
        ]);
    }
    out.table("deviations.csv", &t);
    let medians: Vec<f64> = cfg
        .m_grid
        .iter()
        .map(|&m| stats::median(&rows.iter().filter(|r| r.0 == m).map(|r| r.3.max_entry).collect::<Vec<_>>()))
        .collect();
    let mut mt = Table::new(&["m", "median_max_entry"]);
    for (m, v) in cfg.m_grid.iter().zip(&medians) {
        mt.push(vec![(*m).into(), (*v).into()]);
    }
    out.table("medians.csv", &mt);
    let ms: Vec<f64> = cfg.m_grid.iter().map(|&m| m as f64).collect();
    let slope = stats::loglog_slope(&ms, &medians);
    out.report.push(BoundEntry::new("concentration_slope_upper", cfg.slope_max, slope, 1.0));
    out.report.push(BoundEntry::at_least("concentration_slope_lower", cfg.slope_min, slope));

    if cfg.mc_samples > 0 {
        let (table, worst_z, worst_abs) = closed_vs_monte_carlo(cfg.mc_samples, cfg.seed)?;
        out.table("closed_vs_mc.csv", &table);
        out.report.push(BoundEntry::new("mc_max_z_score", 3.0, worst_z, 1.0));
        out.report.push(BoundEntry::new("mc_max_abs_diff", cfg.mc_abs_tol, worst_abs, 1.0));
    }
    Ok(out)
}

/// Compare the closed form with Monte-Carlo on [`angle_probe`]: returns the
/// table, the largest `|diff|/se` (0 where both agree exactly) and the
/// largest `|diff|`.
pub fn closed_vs_monte_carlo(samples: usize, seed: u64) -> Result<(Table, f64, f64)> {
    let x = angle_probe();
    let exact = hinf_closed_form(&x, None)?;
    let mc = hinf_monte_carlo(&x, None, None, samples, seed ^ MC_SALT)?;
    let se = mc.std_err().expect("monte-carlo kernels carry standard errors");
    let mut t = Table::new(&["pair", "angle_deg", "closed_form", "monte_carlo", "std_err", "abs_diff"]);
    let (mut worst_z, mut worst_abs) = (0.0_f64, 0.0_f64);
    for (j, deg) in [0.0, 60.0, 90.0, 180.0].into_iter().enumerate() {
        // angle 0 is the (0, 0) diagonal entry
        let (a, b) = (exact.matrix()[(0, j)], mc.matrix()[(0, j)]);
        let s = se[(0, j)];
        let diff = (a - b).abs();
        let z = if diff == 0.0 { 0.0 } else if s > 0.0 { diff / s } else { f64::INFINITY };
        worst_z = worst_z.max(z);
        worst_abs = worst_abs.max(diff);
        t.push(vec![format!("0-{j}").into(), deg.into(), a.into(), b.into(), s.into(), diff.into()]);
    }
    Ok((t, worst_z, worst_abs))
}

// ------------------------------------------------------------ kernel-stability

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelStabilityConfig {
    pub seed: u64,
    pub delta: f64,
    pub seeds: usize,
    pub m_grid: Vec<usize>,
    /// Fixed number of GD steps (no early stop).
    pub horizon: usize,
    pub max_spearman: f64,
    pub setup: TrainSetup,
}

impl Default for KernelStabilityConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: DEFAULT_DELTA,
            seeds: 10,
            m_grid: vec![1024, 4096, 16384],
            horizon: 100,
            max_spearman: -0.9,
            setup: TrainSetup::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityRow {
    pub m: usize,
    pub index: usize,
    pub seed: u64,
    pub total_flips: usize,
    pub flip_fraction: f64,
    pub sum_abs: f64,
    pub spectral_dev: f64,
    /// `(2n/m)·max_ij |x̃_i·x̃_j|` per flip.
    pub linear_bound: f64,
    pub lambda_min_h0: f64,
    pub lambda_min_ht: f64,
    pub lambda0: f64,
}

pub fn stability_rows(cfg: &KernelStabilityConfig) -> Result<Vec<StabilityRow>> {
    let mut jobs = Vec::new();
    for &m in &cfg.m_grid {
        for i in 0..cfg.seeds {
            jobs.push((m, i));
        }
    }
    jobs.into_par_iter()
        .map(|(m, i)| {
            let s = &cfg.setup;
            let seed = run_seed(cfg.seed, i);
            let data = gen_data(s.n, s.d, GenMode::SphereSeparated { min_angle_deg: s.min_angle_deg }, seed)?;
            let net0 = Network::init(Variant::TwoFactor, Dims::new(m, s.d, s.l, s.k), seed)?;
            let h0 = h_empirical(&net0, data.x())?;
            let eta = s.eta.unwrap_or(0.5 / h0.lambda_max()?);
            let mut tc = TrainConfig::new(eta, cfg.horizon);
            tc.loss_floor = 0.0;
            tc.track_drift = false;
            let (net_t, trace) = train(&net0, &data, &tc)?;
            let ht = h_empirical_at(&net_t, data.x(), trace.last().t)?;
            let dev = kernel_deviation(&ht, &h0)?;
            let xt = net0.project(data.x(), &mut NoCount)?;
            let gmax = matmul_nt(&xt, &xt, &mut NoCount).max_abs();
            let flips = trace.last().total_flips();
            let hinf = hinf_closed_form(data.x(), net0.c())?;
            Ok(StabilityRow {
                m,
                index: i,
                seed,
                total_flips: flips,
                flip_fraction: flips as f64 / (m * s.n) as f64,
                sum_abs: dev.sum_abs,
                spectral_dev: dev.spectral,
                linear_bound: 2.0 * s.n as f64 * gmax / m as f64 * flips as f64,
                lambda_min_h0: h0.lambda_min()?,
                lambda_min_ht: ht.lambda_min()?,
                lambda0: hinf.lambda0()?,
            })
        })
        .collect()
}

pub fn flip_medians(m_grid: &[usize], rows: &[StabilityRow]) -> Vec<f64> {
    m_grid
        .iter()
        .map(|&m| stats::median(&rows.iter().filter(|r| r.m == m).map(|r| r.flip_fraction).collect::<Vec<_>>()))
        .collect()
}

pub fn run_kernel_stability(cfg: &KernelStabilityConfig) -> Result<ExperimentOutput> {
    let rows = stability_rows(cfg)?;
    let mut out = ExperimentOutput::default();
    let mut t = Table::new(&[
        "m",
        "index",
        "seed",
        "total_flips",
        "flip_fraction",
        "sum_abs",
        "spectral_dev",
        "linear_bound",
        "lambda_min_h0",
        "lambda_min_ht",
        "lambda0",
    ]);
    for r in &rows {
        t.push(vec![
            r.m.into(),
            r.index.into(),
            r.seed.to_string().into(),
            r.total_flips.into(),
            r.flip_fraction.into(),
            r.sum_abs.into(),
            r.spectral_dev.into(),
            r.linear_bound.into(),
            r.lambda_min_h0.into(),
            r.lambda_min_ht.into(),
            r.lambda0.into(),
        ]);
    }
    out.table("stability.csv", &t);
    let med = flip_medians(&cfg.m_grid, &rows);
    let mut mt = Table::new(&["m", "median_flip_fraction"]);
    for (m, v) in cfg.m_grid.iter().zip(&med) {
        mt.push(vec![(*m).into(), (*v).into()]);
    }
    out.table("flip_medians.csv", &mt);
    let ms: Vec<f64> = cfg.m_grid.iter().map(|&m| m as f64).collect();
    out.report.push(BoundEntry::new("flip_fraction_spearman", cfg.max_spearman, stats::spearman(&ms, &med), 1.0));
    let linear = rows.iter().filter(|r| r.sum_abs > r.linear_bound * (1.0 + 1e-12)).count();
    out.report.push(BoundEntry::new("sum_abs_above_flip_bound", 0.0, linear as f64, 1.0));
    let weyl = rows.iter().filter(|r| r.lambda_min_ht < r.lambda_min_h0 - r.sum_abs - 1e-12).count();
    out.report.push(BoundEntry::new("lambda_min_below_weyl", 0.0, weyl as f64, 1.0));
    out.report.push(BoundEntry::at_least(
        "deviation_within_quarter_lambda0_fraction",
        0.95,
        fraction(rows.iter().map(|r| r.spectral_dev <= r.lambda0 / 4.0)),
    ));
    Ok(out)
}

// ------------------------------------------------------------------ rademacher

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RademacherConfig {
    pub seed: u64,
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub seeds: usize,
    pub m: usize,
    pub d: usize,
    pub l: usize,
    pub steps: usize,
    pub epsilon_samples: usize,
    /// Dimension in the bound's first term; unset means `l`.
    pub d_eff: Option<usize>,
}

impl Default for RademacherConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: DEFAULT_DELTA,
            n_grid: vec![6, 8, 10, 12],
            seeds: 5,
            m: 256,
            d: 16,
            l: 8,
            steps: 100,
            epsilon_samples: crate::analysis::DEFAULT_EPSILON_SAMPLES,
            d_eff: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RademacherRow {
    pub n: usize,
    pub seed: u64,
    pub tau: f64,
    pub r: f64,
    pub total_flips: usize,
    pub mc_value: f64,
    pub mc_std_err: f64,
    pub exact_value: f64,
    pub bound: f64,
}

impl RademacherRow {
    pub fn z_score(&self) -> f64 {
        let diff = (self.mc_value - self.exact_value).abs();
        if diff == 0.0 {
            0.0
        } else if self.mc_std_err > 0.0 {
            diff / self.mc_std_err
        } else {
            f64::INFINITY
        }
    }
}

pub fn rademacher_rows(cfg: &RademacherConfig) -> Result<Vec<RademacherRow>> {
    let mut jobs = Vec::new();
    for &n in &cfg.n_grid {
        for i in 0..cfg.seeds {
            jobs.push((n, i));
        }
    }
    jobs.into_par_iter()
        .map(|(n, i)| {
            let seed = run_seed(cfg.seed, i);
            let data = gen_data(n, cfg.d, GenMode::SphereUniform, seed)?;
            let net0 = Network::init(Variant::TwoFactor, Dims::new(cfg.m, cfg.d, cfg.l, 0), seed)?;
            let h0 = h_empirical(&net0, data.x())?;
            let mut tc = TrainConfig::new(0.5 / h0.lambda_max()?, cfg.steps);
            tc.track_flips = false;
            let (net_t, trace) = train(&net0, &data, &tc)?;
            let (r, tau) = weight_drift(&net0, &net_t)?;
            let flips = flip_table(&net_t, &net0, data.x())?;
            let z0 = feature_matrix(&net0, data.x())?;
            let est = rademacher_empirical(&z0, tau, &flips, r, cfg.epsilon_samples, seed ^ MC_SALT)?;
            let total_flips = flips.iter().filter(|f| **f).count();
            let flip_term = 2.0 * r / (n as f64 * (cfg.m as f64).sqrt()) * total_flips as f64;
            let exact = tau / n as f64 * expected_norm_exhaustive(&z0.z)? + flip_term;
            let bound = rademacher_bound(r, tau, n, cfg.d_eff.unwrap_or(cfg.l), cfg.m, cfg.delta)?;
            debug_assert!(trace.last().t <= cfg.steps);
            Ok(RademacherRow {
                n,
                seed,
                tau,
                r,
                total_flips,
                mc_value: est.value,
                mc_std_err: est.std_err,
                exact_value: exact,
                bound,
            })
        })
        .collect()
}

pub fn run_rademacher(cfg: &RademacherConfig) -> Result<ExperimentOutput> {
    let rows = rademacher_rows(cfg)?;
    let mut out = ExperimentOutput::default();
    let mut t = Table::new(&[
        "n",
        "seed",
        "tau",
        "r",
        "total_flips",
        "mc_value",
        "mc_std_err",
        "exact_value",
        "bound",
        "z_score",
    ]);
    for r in &rows {
        t.push(vec![
            r.n.into(),
            r.seed.to_string().into(),
            r.tau.into(),
            r.r.into(),
            r.total_flips.into(),
            r.mc_value.into(),
            r.mc_std_err.into(),
            r.exact_value.into(),
            r.bound.into(),
            r.z_score().into(),
        ]);
    }
    out.table("rademacher.csv", &t);
    let worst_z = rows.iter().map(|r| r.z_score()).fold(0.0, f64::max);
    out.report.push(BoundEntry::new("mc_vs_exhaustive_max_z", 3.0, worst_z, 1.0));
    let above = rows.iter().filter(|r| r.mc_value > r.bound).count();
    out.report.push(BoundEntry::new("empirical_above_bound", 0.0, above as f64, 1.0));
    Ok(out)
}

// -------------------------------------------------------------- generalization

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralizationConfig {
    pub seed: u64,
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub seeds: usize,
    pub d: usize,
    pub l: usize,
    pub m: usize,
    pub teacher_width: usize,
    pub heldout: usize,
    pub steps: usize,
    pub max_spearman: f64,
}

impl Default for GeneralizationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: DEFAULT_DELTA,
            n_grid: vec![8, 16, 32],
            seeds: 10,
            d: 16,
            l: 16,
            m: 2048,
            teacher_width: 4,
            heldout: 256,
            steps: 2000,
            max_spearman: -0.8,
        }
    }
}

pub fn run_generalization(cfg: &GeneralizationConfig) -> Result<ExperimentOutput> {
    let mut jobs = Vec::new();
    for &n in &cfg.n_grid {
        for i in 0..cfg.seeds {
            jobs.push((n, i));
        }
    }
    let rows: Vec<(usize, u64, crate::analysis::Gap)> = jobs
        .into_par_iter()
        .map(|(n, i)| {
            let seed = run_seed(cfg.seed, i);
            let teacher = run_seed(cfg.seed ^ TEACHER_SALT, i);
            let train_set = teacher_dataset(n, cfg.d, cfg.teacher_width, teacher, seed)?;
            let held = teacher_dataset(cfg.heldout, cfg.d, cfg.teacher_width, teacher, seed ^ HELDOUT_SALT)?;
            let net0 = Network::init(Variant::TwoFactor, Dims::new(cfg.m, cfg.d, cfg.l, 0), seed)?;
            let h0 = h_empirical(&net0, train_set.x())?;
            let mut tc = TrainConfig::new(0.5 / h0.lambda_max()?, cfg.steps);
            tc.track_drift = false;
            tc.track_flips = false;
            let (net_t, _) = train(&net0, &train_set, &tc)?;
            Ok((n, seed, generalization_gap(&net_t, &train_set, &held)?))
        })
        .collect::<Result<_>>()?;
    let mut out = ExperimentOutput::default();
    let mut t = Table::new(&["n", "seed", "train_l1", "heldout_l1", "gap"]);
    for (n, seed, g) in &rows {
        t.push(vec![(*n).into(), seed.to_string().into(), g.train_l1.into(), g.heldout_l1.into(), g.gap.into()]);
    }
    out.table("generalization.csv", &t);
    let med: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| stats::median(&rows.iter().filter(|r| r.0 == n).map(|r| r.2.gap).collect::<Vec<_>>()))
        .collect();
    let mut mt = Table::new(&["n", "median_gap"]);
    for (n, v) in cfg.n_grid.iter().zip(&med) {
        mt.push(vec![(*n).into(), (*v).into()]);
    }
    out.table("gap_medians.csv", &mt);
    let ns: Vec<f64> = cfg.n_grid.iter().map(|&n| n as f64).collect();
    out.report.push(BoundEntry::new("gap_spearman", cfg.max_spearman, stats::spearman(&ns, &med), 1.0));
    Ok(out)
}

// --------------------------------------------------------------- jl-distortion

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JlDistortionConfig {
    pub seed: u64,
    pub delta: f64,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    /// Failure probability in the target dimension `⌈8 ln(n²/δ)/ε²⌉`.
    pub jl_delta: f64,
    pub seeds: usize,
    pub success_fraction: f64,
    pub sweep_out_dims: Vec<usize>,
    pub sweep_seeds: usize,
    /// Input width for the sweep; above every out_dim so the fast operator
    /// always subsamples.
    pub sweep_d: usize,
    pub sweep_n: usize,
    pub max_spearman: f64,
    /// Inputs width for the informative fast-vs-dense timing; 0 skips it.
    pub timing_d: usize,
    pub timing_l: usize,
    pub timing_n: usize,
}

impl Default for JlDistortionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: DEFAULT_DELTA,
            n: 256,
            d: 256,
            epsilon: 0.2,
            jl_delta: 0.05,
            seeds: 100,
            success_fraction: 0.99,
            sweep_out_dims: vec![16, 64, 256, 1024],
            sweep_seeds: 20,
            sweep_d: 2048,
            sweep_n: 64,
            max_spearman: -0.9,
            timing_d: 4096,
            timing_l: 64,
            timing_n: 64,
        }
    }
}

pub fn jl_target_dim(n: usize, epsilon: f64, delta: f64) -> usize {
    (8.0 * ((n * n) as f64 / delta).ln() / (epsilon * epsilon)).ceil() as usize
}

const KINDS: [(JlKind, &str); 2] = [(JlKind::Gaussian, "gaussian"), (JlKind::FastHadamard, "fast-hadamard")];

/// Largest entrywise gap between the fast path and the materialized operator
/// over a few shapes with `pad ≤ 64`.
pub fn fast_path_max_gap(seed: u64) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (i, (out, inp)) in [(4, 3), (16, 16), (10, 40), (64, 64), (7, 33), (64, 17)].into_iter().enumerate() {
        let op = JlOperator::fast_hadamard(out, inp, run_seed(seed, i))?;
        let x = crate::linalg::gaussian_matrix(8, inp, 1.0, run_seed(seed ^ 1, i))?;
        let fast = op.apply(&x)?;
        let slow = matmul_nt(&x, &op.materialize(), &mut NoCount);
        worst = worst.max(fast.sub(&slow)?.max_abs());
    }
    Ok(worst)
}

pub fn run_jl_distortion(cfg: &JlDistortionConfig) -> Result<ExperimentOutput> {
    let ell = jl_target_dim(cfg.n, cfg.epsilon, cfg.jl_delta);
    let mut out = ExperimentOutput::default();
    let mut t = Table::new(&["kind", "seed", "out_dim", "max_ip_error", "mean_ip_error"]);
    for (kind, label) in KINDS {
        let rows: Vec<(u64, crate::jl::Distortion)> = (0..cfg.seeds)
            .into_par_iter()
            .map(|i| {
                let seed = run_seed(cfg.seed, i);
                let x = sphere_uniform(cfg.n, cfg.d, seed)?;
                let op = JlOperator::new(kind, ell, cfg.d, seed ^ MC_SALT)?;
                Ok((seed, distortion_stats(&x, &op)?))
            })
            .collect::<Result<_>>()?;
        for (seed, d) in &rows {
            t.push(vec![label.into(), seed.to_string().into(), ell.into(), d.max_ip_error.into(), d.mean_ip_error.into()]);
        }
        out.report.push(BoundEntry::at_least(
            &format!("{label}_fraction_within_eps"),
            cfg.success_fraction,
            fraction(rows.iter().map(|r| r.1.max_ip_error <= cfg.epsilon)),
        ));
    }
    out.table("distortion.csv", &t);

    let mut sweep = Table::new(&["kind", "out_dim", "median_max_ip_error"]);
    for (kind, label) in KINDS {
        let meds: Vec<f64> = cfg
            .sweep_out_dims
            .iter()
            .map(|&od| {
                let v: Vec<f64> = (0..cfg.sweep_seeds)
                    .into_par_iter()
                    .map(|i| {
                        let seed = run_seed(cfg.seed ^ 0x5eed, i);
                        let x = sphere_uniform(cfg.sweep_n, cfg.sweep_d, seed)?;
                        let op = JlOperator::new(kind, od, cfg.sweep_d, seed ^ MC_SALT)?;
                        Ok(distortion_stats(&x, &op)?.max_ip_error)
                    })
                    .collect::<Result<_>>()?;
                Ok(stats::median(&v))
            })
            .collect::<Result<_>>()?;
        for (od, v) in cfg.sweep_out_dims.iter().zip(&meds) {
            sweep.push(vec![label.into(), (*od).into(), (*v).into()]);
        }
        let ods: Vec<f64> = cfg.sweep_out_dims.iter().map(|&v| v as f64).collect();
        out.report.push(BoundEntry::new(
            &format!("{label}_decay_spearman"),
            cfg.max_spearman,
            stats::spearman(&ods, &meds),
            1.0,
        ));
    }
    out.table("sweep.csv", &sweep);
    out.report.push(BoundEntry::new("fast_path_max_gap", 1e-12, fast_path_max_gap(cfg.seed)?, 1.0));

    if cfg.timing_d > 0 {
        let (fast, dense) = fast_vs_dense_timing(cfg.timing_n, cfg.timing_d, cfg.timing_l, cfg.seed)?;
        let mut tt = Table::new(&["kind", "n", "d", "l", "median_ns", "p10_ns", "p90_ns"]);
        for (label, s) in [("fast-hadamard", &fast), ("gaussian", &dense)] {
            tt.push(vec![
                label.into(),
                cfg.timing_n.into(),
                cfg.timing_d.into(),
                cfg.timing_l.into(),
                s.median_ns.into(),
                s.p10_ns.into(),
                s.p90_ns.into(),
            ]);
        }
        out.files.push(("timing/jl_apply.csv".into(), tt.to_csv()));
        out.note("jl_fast_over_dense_median", fast.median_ns as f64 / dense.median_ns.max(1) as f64);
    }
    Ok(out)
}

/// Median-of-repetitions timing of applying both operator kinds.
pub fn fast_vs_dense_timing(
    n: usize,
    d: usize,
    l: usize,
    seed: u64,
) -> Result<(crate::bench::TimingStats, crate::bench::TimingStats)> {
    let x = sphere_uniform(n, d, seed)?;
    let fast = JlOperator::fast_hadamard(l, d, seed)?;
    let dense = JlOperator::gaussian(l, d, seed)?;
    let tf = time_samples(2, 9, || fast.apply(&x).map(|_| ()))?;
    let td = time_samples(2, 9, || dense.apply(&x).map(|_| ()))?;
    Ok((tf, td))
}

// ----------------------------------------------------------------------- bench

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub delta: f64,
    pub dims: Vec<BenchDims>,
    pub variants: Vec<Variant>,
    pub iters: usize,
    pub memory_cap: u64,
    /// Dimensions at which operation counters are compared with the model.
    pub toy_dims: Vec<BenchDims>,
    pub min_flop_ratio: f64,
    /// Skip wall-clock timing entirely (flop checks still run).
    pub skip_timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let bd = |n, d, m, l, k| BenchDims { n, d, m, l, k };
        Self {
            seed: 0,
            delta: DEFAULT_DELTA,
            dims: vec![bd(64, 1024, 16384, 64, 256)],
            variants: Variant::ALL.to_vec(),
            iters: 5,
            memory_cap: crate::bench::DEFAULT_MEMORY_CAP,
            toy_dims: vec![bd(2, 3, 4, 2, 3), bd(8, 8, 8, 8, 8), bd(5, 7, 6, 3, 2), bd(2, 1, 1, 1, 1)],
            min_flop_ratio: 2.0,
            skip_timing: false,
        }
    }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let mut ft = Table::new(&[
        "variant",
        "n",
        "d",
        "m",
        "l",
        "k",
        "flops_projection",
        "flops_forward",
        "flops_grad",
        "flops_update",
        "flops_total_per_iter",
    ]);
    for dims in &cfg.dims {
        for &v in &cfg.variants {
            let c = flop_count(v, *dims);
            ft.push(vec![
                v.name().into(),
                dims.n.into(),
                dims.d.into(),
                dims.m.into(),
                dims.l.into(),
                dims.k.into(),
                c.flops_projection.into(),
                c.flops_forward.into(),
                c.flops_grad.into(),
                c.flops_update.into(),
                c.flops_total_per_iter.into(),
            ]);
        }
        let dense = flop_count(Variant::Dense, *dims).flops_total_per_iter as f64;
        let abc = flop_count(Variant::ThreeFactor, *dims).flops_total_per_iter as f64;
        out.report.push(BoundEntry::at_least(
            &format!("flop_ratio_dense_abc_m{}", dims.m),
            cfg.min_flop_ratio,
            dense / abc,
        ));
    }
    out.table("flops.csv", &ft);

    let mut ct = Table::new(&["variant", "n", "d", "m", "l", "k", "model", "counted", "model_cached", "counted_cached"]);
    let mut mismatches = 0usize;
    for (i, dims) in cfg.toy_dims.iter().enumerate() {
        for v in Variant::ALL {
            let c = flop_count(v, *dims);
            let full = counted_flops(v, *dims, run_seed(cfg.seed, i), true)?;
            let cached = counted_flops(v, *dims, run_seed(cfg.seed, i), false)?;
            mismatches += (full != c.flops_total_per_iter) as usize + (cached != c.cached_per_iter()) as usize;
            ct.push(vec![
                v.name().into(),
                dims.n.into(),
                dims.d.into(),
                dims.m.into(),
                dims.l.into(),
                dims.k.into(),
                c.flops_total_per_iter.into(),
                full.into(),
                c.cached_per_iter().into(),
                cached.into(),
            ]);
        }
    }
    out.table("flop_counters.csv", &ct);
    out.report.push(BoundEntry::new("flop_counter_mismatches", 0.0, mismatches as f64, 1.0));

    if !cfg.skip_timing {
        let mut csv = format!("{BENCH_HEADER}\n");
        for dims in &cfg.dims {
            for &v in &cfg.variants {
                let r = time_per_iter(v, *dims, cfg.iters, cfg.seed, cfg.memory_cap)?;
                csv.push_str(&r.csv_row());
                csv.push('\n');
                out.note(&format!("achieved_flops_per_sec.{v}_m{}", dims.m), r.achieved_flops_per_sec);
            }
        }
        out.files.push(("timing/bench.csv".into(), csv));
    }
    Ok(out)
}

// ------------------------------------------------------------------- registry

#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentConfig {
    KernelConcentration(KernelConcentrationConfig),
    KernelStability(KernelStabilityConfig),
    Convergence(ConvergenceConfig),
    EigenPredict(EigenPredictConfig),
    Drift(DriftConfig),
    Rademacher(RademacherConfig),
    Generalization(GeneralizationConfig),
    JlDistortion(JlDistortionConfig),
    Bench(BenchConfig),
}

fn parse_table<T: DeserializeOwned>(table: toml::Table) -> Result<T> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| Error::Parse(e.to_string()))
}

fn unknown(name: &str) -> Error {
    Error::UnknownExperiment { name: name.to_string(), valid: EXPERIMENT_NAMES.join(", ") }
}

macro_rules! each_config {
    ($self:expr, $c:ident => $body:expr) => {
        match $self {
            ExperimentConfig::KernelConcentration($c) => $body,
            ExperimentConfig::KernelStability($c) => $body,
            ExperimentConfig::Convergence($c) => $body,
            ExperimentConfig::EigenPredict($c) => $body,
            ExperimentConfig::Drift($c) => $body,
            ExperimentConfig::Rademacher($c) => $body,
            ExperimentConfig::Generalization($c) => $body,
            ExperimentConfig::JlDistortion($c) => $body,
            ExperimentConfig::Bench($c) => $body,
        }
    };
}

impl ExperimentConfig {
    /// Build a config from a TOML table; absent keys take their defaults.
    pub fn from_toml(name: &str, table: toml::Table) -> Result<Self> {
        Ok(match name {
            "kernel-concentration" => Self::KernelConcentration(parse_table(table)?),
            "kernel-stability" => Self::KernelStability(parse_table(table)?),
            "convergence" => Self::Convergence(parse_table(table)?),
            "eigen-predict" => Self::EigenPredict(parse_table(table)?),
            "drift" => Self::Drift(parse_table(table)?),
            "rademacher" => Self::Rademacher(parse_table(table)?),
            "generalization" => Self::Generalization(parse_table(table)?),
            "jl-distortion" => Self::JlDistortion(parse_table(table)?),
            "bench" => Self::Bench(parse_table(table)?),
            _ => return Err(unknown(name)),
        })
    }

    pub fn default_for(name: &str) -> Result<Self> {
        Self::from_toml(name, toml::Table::new())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::KernelConcentration(_) => "kernel-concentration",
            Self::KernelStability(_) => "kernel-stability",
            Self::Convergence(_) => "convergence",
            Self::EigenPredict(_) => "eigen-predict",
            Self::Drift(_) => "drift",
            Self::Rademacher(_) => "rademacher",
            Self::Generalization(_) => "generalization",
            Self::JlDistortion(_) => "jl-distortion",
            Self::Bench(_) => "bench",
        }
    }

    /// The resolved config as TOML; feeding it back reproduces the run.
    pub fn to_toml(&self) -> Result<String> {
        let body = each_config!(self, c => toml::to_string(c)).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(format!("experiment = \"{}\"\n{body}", self.name()))
    }

    pub fn seed(&self) -> u64 {
        each_config!(self, c => c.seed)
    }

    pub fn run(&self) -> Result<ExperimentOutput> {
        match self {
            Self::KernelConcentration(c) => run_kernel_concentration(c),
            Self::KernelStability(c) => run_kernel_stability(c),
            Self::Convergence(c) => run_convergence(c),
            Self::EigenPredict(c) => run_eigen_predict(c),
            Self::Drift(c) => run_drift(c),
            Self::Rademacher(c) => run_rademacher(c),
            Self::Generalization(c) => run_generalization(c),
            Self::JlDistortion(c) => run_jl_distortion(c),
            Self::Bench(c) => run_bench(c),
        }
    }
}
