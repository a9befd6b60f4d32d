//! Worked examples that need more machinery than a unit test: whole training
//! runs and Monte-Carlo comparisons.

use lowrank_ntk::analysis::generalization_gap;
use lowrank_ntk::data::{gen_data, sphere_uniform, GenMode};
use lowrank_ntk::error::Error;
use lowrank_ntk::experiments::{seeded_run, TrainSetup};
use lowrank_ntk::jl::{sparse_sign_preservation, JlOperator};
use lowrank_ntk::linalg::{gaussian_matrix, Matrix};
use lowrank_ntk::network::{Dataset, Dims, Network, Variant};
use lowrank_ntk::ntk::{h_empirical, h_perp, hinf_closed_form, hinf_monte_carlo, kernel_deviation};
use lowrank_ntk::trainer::{gd_step, train, TrainConfig};

fn separated(n: usize, d: usize, angle: f64, seed: u64) -> Dataset {
    gen_data(n, d, GenMode::SphereSeparated { min_angle_deg: angle }, seed).unwrap()
}

#[test]
fn abc_with_square_mixing_matches_bc_in_distribution() {
    let (m, d, l) = (256, 16, 8);
    let x = sphere_uniform(4, d, 99).unwrap();
    let mut diffs = Vec::new();
    for s in 0..100u64 {
        let bc = Network::init(Variant::TwoFactor, Dims::new(m, d, l, 0), s).unwrap();
        // k = m with N(0, 1/k) entries, so E[AᵀA] = I
        let a = gaussian_matrix(m, m, 1.0 / (m as f64).sqrt(), 10_000 + s).unwrap();
        let abc = Network::from_parts(
            Variant::ThreeFactor,
            Some(a),
            bc.c().cloned(),
            bc.v().to_vec(),
            bc.trainable().clone(),
        )
        .unwrap();
        let (ub, ua) = (bc.forward(&x).unwrap(), abc.forward(&x).unwrap());
        diffs.extend(ua.iter().zip(&ub).map(|(p, q)| p - q));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(mean.abs() <= 2.0 * se, "mean diff {mean} vs se {se}");
}

#[test]
fn zero_step_size_leaves_network_unchanged() {
    let data = separated(4, 6, 30.0, 1);
    for v in Variant::ALL {
        let net = Network::init(v, Dims::new(16, 6, 4, 5), 2).unwrap();
        let next = gd_step(&net, &data, 0.0).unwrap();
        assert_eq!(next.trainable(), net.trainable());
    }
}

#[test]
fn two_steps_compose() {
    let data = separated(4, 6, 30.0, 3);
    for v in Variant::ALL {
        let net = Network::init(v, Dims::new(16, 6, 4, 5), 4).unwrap();
        let twice = gd_step(&gd_step(&net, &data, 0.05).unwrap(), &data, 0.05).unwrap();
        let mut cfg = TrainConfig::new(0.05, 2);
        cfg.loss_floor = 0.0;
        let (trained, _) = train(&net, &data, &cfg).unwrap();
        assert_eq!(trained.trainable(), twice.trainable(), "{v}");
    }
}

#[test]
fn well_conditioned_bc_run_decreases_for_500_steps() {
    let data = separated(16, 32, 60.0, 5);
    let net = Network::init(Variant::TwoFactor, Dims::new(8192, 32, 16, 0), 5).unwrap();
    let hinf = hinf_closed_form(data.x(), net.c()).unwrap();
    let eta = 0.5 / hinf.lambda_max().unwrap();
    let mut cfg = TrainConfig::new(eta, 500);
    cfg.loss_floor = 0.0;
    cfg.track_flips = false;
    cfg.track_drift = false;
    let (_, trace) = train(&net, &data, &cfg).unwrap();
    let losses = trace.losses();
    assert_eq!(losses.len(), 501);
    for (t, w) in losses.windows(2).enumerate() {
        assert!(w[1] < w[0], "loss rose at step {}: {} -> {}", t + 1, w[0], w[1]);
    }
}

#[test]
fn huge_step_size_diverges_before_the_cap() {
    let data = separated(8, 16, 30.0, 6);
    for v in Variant::ALL {
        let net = Network::init(v, Dims::new(256, 16, 8, 32), 6).unwrap();
        let mut cfg = TrainConfig::new(1e3, 100_000);
        cfg.track_flips = false;
        cfg.track_drift = false;
        match train(&net, &data, &cfg) {
            Err(Error::Diverged { step, .. }) => assert!(step < 100_000),
            other => panic!("{v}: expected divergence, got {:?}", other.map(|r| r.1.last().t)),
        }
    }
}

#[test]
fn factored_integrand_approaches_closed_form_at_k_equal_m() {
    let x = sphere_uniform(4, 16, 7).unwrap();
    let (m, k) = (4096, 4096);
    let net = Network::init(Variant::ThreeFactor, Dims::new(m, 16, 16, k), 7).unwrap();
    let closed = hinf_closed_form(&x, net.c()).unwrap();
    let mc = hinf_monte_carlo(&x, net.c(), Some((net.a().unwrap(), net.v())), 8, 8).unwrap();
    let dev = kernel_deviation(&closed, &mc).unwrap();
    assert!(dev.max_entry < 0.05, "{dev:?}");
}

#[test]
fn restricted_kernel_diagonal_is_bounded_by_full_kernel() {
    let data = separated(6, 8, 30.0, 9);
    // abc units share A, so their features are not orthogonal and the
    // restricted diagonal can go negative; the bound holds per unit only
    for v in [Variant::Dense, Variant::TwoFactor] {
        let net0 = Network::init(v, Dims::new(64, 8, 6, 12), 9).unwrap();
        let mut cfg = TrainConfig::new(0.5, 40);
        cfg.loss_floor = 0.0;
        let (net_t, _) = train(&net0, &data, &cfg).unwrap();
        let perp = h_perp(&net_t, &net0, data.x()).unwrap();
        let full = h_empirical(&net_t, data.x()).unwrap();
        for i in 0..data.n() {
            let p = perp.matrix()[(i, i)];
            assert!(p >= 0.0 && p <= full.matrix()[(i, i)] + 1e-14, "{v} {i}: {p}");
        }
    }
}

#[test]
fn generalization_gap_examples() {
    let data = separated(6, 5, 20.0, 10);
    let net = Network::init(Variant::TwoFactor, Dims::new(32, 5, 4, 0), 10).unwrap();
    let g = generalization_gap(&net, &data, &data).unwrap();
    assert_eq!(g.gap, 0.0);

    let zero = net.with_trainable(Matrix::zeros(32, 4)).unwrap();
    let g = generalization_gap(&zero, &data, &data).unwrap();
    let mean_abs = data.y().iter().map(|y| y.abs()).sum::<f64>() / data.n() as f64;
    assert!((g.train_l1 - mean_abs).abs() < 1e-15);
}

#[test]
fn converged_run_report_is_complete() {
    let run = seeded_run(&TrainSetup::default(), Variant::TwoFactor, 0, 0, 0.1).unwrap();
    let names: Vec<&str> = run.report.entries.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(
        names,
        ["convergence_envelope", "row_drift", "kernel_stability", "eigen_prediction", "b_drift", "flip_count"]
    );
    assert!(run.prediction_error <= 0.15, "{}", run.prediction_error);
}

#[test]
fn full_hadamard_preserves_sparse_norms_exactly() {
    let op = JlOperator::fast_hadamard(64, 64, 3).unwrap();
    for s in [1, 5, 64] {
        let r = sparse_sign_preservation(&op, s, 10, s as u64).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "sparsity {s}: {r}");
    }
}
