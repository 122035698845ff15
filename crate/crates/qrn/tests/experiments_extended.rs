//! Reduced-scale runs of the experiments that the acceptance suite does
//! not train: the two-qubit state predictor and the ω-conditioned master
//! equation, plus the degeneracy cross-check between the two master
//! equation setups when the ω interval collapses.

use qrn::experiments::{run_exp3, run_exp4, run_exp5, ExperimentConfig};
use qrn::qrn::rollout_state_predictor;

fn reduced(experiment: u8) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(experiment);
    cfg.n_train = 160;
    cfg.n_test = 40;
    cfg.epochs = 15;
    cfg.hidden_size = 24;
    cfg.seed = 13;
    cfg
}

#[test]
fn exp3_predicts_reduced_dynamics_and_beats_baseline() {
    let cfg = reduced(3);
    let out = run_exp3(&cfg).unwrap();

    assert!(out.loss_log.last().unwrap() < out.loss_log.first().unwrap());
    for v in &out.curve.values {
        assert!(v.is_finite() && (0.0..=1.0).contains(v));
    }
    let trained = out.curve.mean_where(|t| t <= cfg.t_max);
    let baseline = out.baseline.mean_where(|t| t <= cfg.t_max);
    assert!(
        trained < baseline,
        "trained {trained} vs baseline {baseline}"
    );

    // Predictor post-processing keeps every evaluated state valid.
    let rho0 = qrn::dynamics::sample_random_state(2, 999);
    let rollout = rollout_state_predictor(&rho0, &out.net, cfg.dt, cfg.n_eval_steps()).unwrap();
    for s in &rollout.states {
        s.validate().unwrap();
    }
}

#[test]
fn exp5_learns_with_omega_conditioning() {
    let cfg = reduced(5);
    let out = run_exp5(&cfg).unwrap();
    assert!(out.loss_log.last().unwrap() < out.loss_log.first().unwrap());
    for v in &out.curve.values {
        assert!(v.is_finite() && *v >= 0.0);
    }
    let trained = out.curve.mean_where(|t| t <= cfg.t_max);
    let baseline = out.baseline.mean_where(|t| t <= cfg.t_max);
    assert!(
        trained < baseline,
        "trained {trained} vs baseline {baseline}"
    );
}

#[test]
fn exp5_with_collapsed_omega_interval_reproduces_exp4() {
    // ω ~ U[1,1] makes every record identical to the fixed-frequency
    // setup; with μ = 1 the only remaining differences from the EXP4
    // Lamb-shift run are the extra (constant) network input and the
    // initialization, so held-out costs agree within run-to-run noise.
    let mut exp5_cfg = reduced(5);
    exp5_cfg.omega_range = (1.0, 1.0);
    exp5_cfg.mu_count = 1;
    let exp5 = run_exp5(&exp5_cfg).unwrap();

    let exp4_cfg = reduced(4);
    let exp4 = run_exp4(&exp4_cfg).unwrap();

    let a = exp5.curve.mean_where(|t| t <= exp5_cfg.t_max);
    let b = exp4
        .with_lamb_shift
        .curve
        .mean_where(|t| t <= exp4_cfg.t_max);
    let ratio = a / b;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "collapsed-ω cost {a:.3e} vs fixed-ω cost {b:.3e} (ratio {ratio:.2})"
    );
}
