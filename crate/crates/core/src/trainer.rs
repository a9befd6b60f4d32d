//! Full-batch gradient descent on `Φ(B) = ½‖y − u‖²`, touching only the
//! trainable matrix.
//!
//! With `D_{j,r} = −(1/√m)(y_j − u_j) v_r 1{pre_{j,r} ≥ 0}` (an `n × m`
//! matrix) the gradient is
//!
//! * dense: `Dᵀ X`
//! * bc:    `Dᵀ X̃`, with `X̃ = X Cᵀ`
//! * abc:   `(D A)ᵀ X̃`
//!
//! `X̃` only depends on frozen parts, so [`train`] computes it once.

use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::linalg::{matmul, matmul_tn, Matrix, NoCount, OpCounter};
use crate::network::{Dataset, ForwardPass, Network, Variant};

pub const DEFAULT_LOSS_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: usize,
    pub loss_floor: f64,
    pub track_flips: bool,
    pub track_drift: bool,
}

impl TrainConfig {
    pub fn new(eta: f64, steps: usize) -> Self {
        Self { eta, steps, loss_floor: DEFAULT_LOSS_FLOOR, track_flips: true, track_drift: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return invalid(format!("learning rate must be finite and >= 0, got {}", self.eta));
        }
        if !(self.loss_floor >= 0.0) {
            return invalid("loss floor must be >= 0");
        }
        Ok(())
    }
}

/// One row of a training trace. `loss` is `‖u − y‖²` (not halved).
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub loss: f64,
    /// `max_r ‖W_r(t) − W_r(0)‖` in input space; NaN when drift is untracked.
    pub max_row_drift: f64,
    /// `‖B(t) − B(0)‖_F`.
    pub b_fro_drift: f64,
    /// Per-sample count of units whose on/off state differs from step 0;
    /// empty when flips are untracked.
    pub flip_counts: Vec<usize>,
    pub wall_nanos: u64,
}

impl StepRecord {
    pub fn total_flips(&self) -> usize {
        self.flip_counts.iter().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<StepRecord>,
}

pub const TRACE_HEADER: &str = "t,loss,max_row_drift,b_fro_drift,total_flips,wall_nanos";

impl TrainTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("trace always holds step 0")
    }

    /// CSV with [`TRACE_HEADER`]. With `timings = false` the wall-clock column
    /// is written as 0 so reruns produce identical bytes.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut s = String::from(TRACE_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.t,
                crate::output::fmt_f64(r.loss),
                crate::output::fmt_f64(r.max_row_drift),
                crate::output::fmt_f64(r.b_fro_drift),
                r.total_flips(),
                if timings { r.wall_nanos } else { 0 }
            ));
        }
        s
    }
}

/// Gradient from a finished forward pass on projected inputs `xt`.
pub fn grad_from_forward(
    net: &Network,
    xt: &Matrix,
    y: &[f64],
    fp: &ForwardPass,
    ops: &mut impl OpCounter,
) -> Result<Matrix> {
    let n = xt.rows();
    if y.len() != n || fp.pre.rows() != n {
        return invalid("labels, inputs and forward pass disagree on n");
    }
    let m = net.m();
    let scale = -1.0 / (m as f64).sqrt();
    let v = net.v();
    let mut dmat = Matrix::zeros(n, m);
    for j in 0..n {
        let coef = scale * (y[j] - fp.u[j]);
        let pre = fp.pre.row(j);
        for (r, out) in dmat.row_mut(j).iter_mut().enumerate() {
            if pre[r] >= 0.0 {
                *out = coef * v[r];
            }
        }
    }
    Ok(match net.a() {
        None => matmul_tn(&dmat, xt, ops),
        Some(a) => matmul_tn(&matmul(&dmat, a, ops), xt, ops),
    })
}

/// `∂Φ/∂B` (or `∂Φ/∂W` for dense).
pub fn grad_b(net: &Network, data: &Dataset) -> Result<Matrix> {
    let xt = net.project(data.x(), &mut NoCount)?;
    let fp = net.forward_projected(&xt, &mut NoCount)?;
    grad_from_forward(net, &xt, data.y(), &fp, &mut NoCount)
}

/// `Φ = ½‖y − u‖²`.
pub fn objective(net: &Network, data: &Dataset) -> Result<f64> {
    let u = net.forward(data.x())?;
    Ok(0.5 * sq_residual(&u, data.y()))
}

pub(crate) fn sq_residual(u: &[f64], y: &[f64]) -> f64 {
    u.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum()
}

fn apply_update(b: &Matrix, g: &Matrix, eta: f64, ops: &mut impl OpCounter) -> Matrix {
    let mut out = b.clone();
    for (o, gv) in out.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *o -= eta * gv;
    }
    ops.add(b.as_slice().len() as u64);
    out
}

pub fn gd_step(net: &Network, data: &Dataset, eta: f64) -> Result<Network> {
    TrainConfig::new(eta, 1).validate()?;
    let g = grad_b(net, data)?;
    net.with_trainable(apply_update(net.trainable(), &g, eta, &mut NoCount))
}

/// One full iteration (forward, gradient, update) with every operation
/// counted. With `xt = None` the projection is recomputed and counted too.
pub fn counted_iteration(
    net: &Network,
    data: &Dataset,
    eta: f64,
    xt: Option<&Matrix>,
    ops: &mut impl OpCounter,
) -> Result<Network> {
    let owned;
    let xt = match xt {
        Some(x) => x,
        None => {
            owned = net.project(data.x(), ops)?;
            &owned
        }
    };
    let fp = net.forward_projected(xt, ops)?;
    let g = grad_from_forward(net, xt, data.y(), &fp, ops)?;
    net.with_trainable(apply_update(net.trainable(), &g, eta, ops))
}

/// Drift of the effective first-layer rows, measured through `C Cᵀ` so that
/// `W` is never formed.
struct DriftProbe {
    b0: Matrix,
    cct: Option<Matrix>,
}

impl DriftProbe {
    fn new(net: &Network) -> Self {
        let cct = net.projection_matrix().map(|c| crate::linalg::matmul_nt(&c, &c, &mut NoCount));
        Self { b0: net.trainable().clone(), cct }
    }

    /// (max row drift, Frobenius drift of B).
    fn measure(&self, net: &Network) -> (f64, f64) {
        let delta = net.trainable().sub(&self.b0).expect("same shape");
        let fro = delta.frobenius();
        let latent = match net.a() {
            None => delta,
            Some(a) => matmul(a, &delta, &mut NoCount),
        };
        let max = match &self.cct {
            None => (0..latent.rows())
                .map(|r| crate::linalg::dot(latent.row(r), latent.row(r)))
                .fold(0.0, f64::max),
            Some(g) => {
                let lg = matmul(&latent, g, &mut NoCount);
                (0..latent.rows())
                    .map(|r| crate::linalg::dot(latent.row(r), lg.row(r)).max(0.0))
                    .fold(0.0, f64::max)
            }
        };
        (max.sqrt(), fro)
    }
}

/// `(max_r ‖W_r − W_r(0)‖, ‖B − B(0)‖_F)` between two states of one network.
pub fn weight_drift(net0: &Network, net: &Network) -> Result<(f64, f64)> {
    if !net.shares_frozen(net0) {
        return invalid("networks do not share frozen parts");
    }
    Ok(DriftProbe::new(net0).measure(net))
}

fn flip_counts(pre0: &Matrix, pre: &Matrix) -> Vec<usize> {
    (0..pre.rows())
        .map(|i| {
            pre0.row(i)
                .iter()
                .zip(pre.row(i))
                .filter(|(a, b)| (**a >= 0.0) != (**b >= 0.0))
                .count()
        })
        .collect()
}

/// Run up to `cfg.steps` GD steps, recording every step including `t = 0`.
/// Stops early once the loss reaches `cfg.loss_floor`.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<(Network, TrainTrace)> {
    cfg.validate()?;
    let xt = net.project(data.x(), &mut NoCount)?;
    let y = data.y();
    let probe = cfg.track_drift.then(|| DriftProbe::new(net));

    let start = Instant::now();
    let mut fp = net.forward_projected(&xt, &mut NoCount)?;
    let pre0 = fp.pre.clone();
    let mut loss = sq_residual(&fp.u, y);
    if !loss.is_finite() {
        return Err(Error::Diverged { step: 0, last_finite_loss: f64::NAN });
    }
    let mut trace = TrainTrace::default();
    trace.records.push(StepRecord {
        t: 0,
        loss,
        max_row_drift: if cfg.track_drift { 0.0 } else { f64::NAN },
        b_fro_drift: 0.0,
        flip_counts: if cfg.track_flips { vec![0; data.n()] } else { Vec::new() },
        wall_nanos: start.elapsed().as_nanos() as u64,
    });

    let mut cur = net.clone();
    for t in 1..=cfg.steps {
        if loss <= cfg.loss_floor {
            break;
        }
        let start = Instant::now();
        let g = grad_from_forward(&cur, &xt, y, &fp, &mut NoCount)?;
        cur = cur.with_trainable(apply_update(cur.trainable(), &g, cfg.eta, &mut NoCount))?;
        fp = cur.forward_projected(&xt, &mut NoCount)?;
        let wall = start.elapsed().as_nanos() as u64;
        let next = sq_residual(&fp.u, y);
        if !next.is_finite() {
            return Err(Error::Diverged { step: t, last_finite_loss: loss });
        }
        loss = next;
        let (max_row_drift, b_fro_drift) = match &probe {
            Some(p) => p.measure(&cur),
            None => (f64::NAN, cur.trainable().sub(net.trainable())?.frobenius()),
        };
        trace.records.push(StepRecord {
            t,
            loss,
            max_row_drift,
            b_fro_drift,
            flip_counts: if cfg.track_flips { flip_counts(&pre0, &fp.pre) } else { Vec::new() },
            wall_nanos: wall,
        });
    }
    Ok((cur, trace))
}

/// Step size with unit constant: `λ0/n²` for dense and bc, `λ0 δ⁴/n²` for abc.
pub fn default_eta(lambda0: f64, n: usize, delta: f64, variant: Variant) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return invalid(format!("lambda0 must be positive, got {lambda0}"));
    }
    if n == 0 {
        return invalid("n must be positive");
    }
    let base = lambda0 / (n * n) as f64;
    Ok(match variant {
        Variant::Dense | Variant::TwoFactor => base,
        Variant::ThreeFactor => {
            if !(delta > 0.0 && delta < 1.0) {
                return invalid(format!("delta must lie in (0, 1), got {delta}"));
            }
            base * delta.powi(4)
        }
    })
}
