//! CLI behaviors beyond the determinism criterion: resume fidelity,
//! zero-epoch checkpoints, exit codes, dataset re-integration, predicted
//! state validity.

use std::path::PathBuf;
use std::process::Command;

use qrn::dynamics::{generate_trajectory, trace_distance, two_level_model, DecayParams};
use qrn::io::{read_checkpoint, read_dataset};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qrn")
}

fn run_ok(args: &[&str]) {
    let out = Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_expect_code(args: &[&str], code: i32) {
    let out = Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: stderr = {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Paths {
    dir: tempfile::TempDir,
}

impl Paths {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn p(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn generated_dataset_matches_fine_step_reintegration() {
    let paths = Paths::new();
    run_ok(&[
        "generate",
        "--exp",
        "1",
        "--n",
        "5",
        "--seed",
        "9",
        "--out",
        &paths.p("d.txt"),
    ]);
    let data = read_dataset(&paths.path("d.txt")).unwrap();
    assert_eq!(data.meta.n_steps, 70);

    let model = two_level_model(
        data.meta.omega,
        DecayParams::new(data.meta.gamma0_1, data.meta.lambda_1).unwrap(),
    );
    for record in &data.records {
        let fine = generate_trajectory(
            record.traj.states[0].clone(),
            &model,
            data.meta.dt / 10.0,
            data.meta.n_steps * 10,
        )
        .unwrap();
        for (j, stored) in record.traj.states.iter().enumerate() {
            let d = trace_distance(stored, &fine.states[10 * j]);
            assert!(
                d < 1e-6,
                "state {j}: trace distance {d} from dt/10 reference"
            );
        }
    }
}

#[test]
fn two_qubit_dataset_stores_reduced_states() {
    let paths = Paths::new();
    run_ok(&[
        "generate",
        "--exp",
        "3",
        "--n",
        "5",
        "--seed",
        "4",
        "--out",
        &paths.p("d.txt"),
    ]);
    let data = read_dataset(&paths.path("d.txt")).unwrap();
    assert_eq!(data.meta.d, 2);
    for r in &data.records {
        assert_eq!(r.traj.dim(), 2);
        for s in &r.traj.states {
            s.validate().unwrap();
        }
    }
}

#[test]
fn zero_epochs_writes_the_initialization() {
    let paths = Paths::new();
    run_ok(&[
        "generate",
        "--exp",
        "2",
        "--n",
        "6",
        "--seed",
        "3",
        "--out",
        &paths.p("d.txt"),
    ]);
    run_ok(&[
        "train",
        "--dataset",
        &paths.p("d.txt"),
        "--out",
        &paths.p("c.ckpt"),
        "--epochs",
        "0",
        "--seed",
        "8",
        "--hidden",
        "10",
    ]);
    let ckpt = read_checkpoint(&paths.path("c.ckpt")).unwrap();
    assert_eq!(ckpt.epochs_done, 0);
    assert_eq!(ckpt.adam.step, 0);
    let fresh = qrn::experiments::init_network(&ckpt.config);
    assert_eq!(ckpt.net, fresh);
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    let paths = Paths::new();
    run_ok(&[
        "generate",
        "--exp",
        "1",
        "--n",
        "8",
        "--seed",
        "2",
        "--out",
        &paths.p("d.txt"),
    ]);
    let common = [
        "--dataset",
        &paths.p("d.txt"),
        "--seed",
        "5",
        "--hidden",
        "10",
        "--batch",
        "4",
    ];

    let straight: Vec<String> = ["train", "--out", &paths.p("full.ckpt"), "--epochs", "4"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut straight_args: Vec<&str> = straight.iter().map(String::as_str).collect();
    straight_args.extend_from_slice(&common);
    run_ok(&straight_args);

    let first: Vec<String> = ["train", "--out", &paths.p("part.ckpt"), "--epochs", "2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut first_args: Vec<&str> = first.iter().map(String::as_str).collect();
    first_args.extend_from_slice(&common);
    run_ok(&first_args);

    let resume_src = paths.p("part.ckpt");
    let second: Vec<String> = [
        "train",
        "--out",
        &paths.p("resumed.ckpt"),
        "--epochs",
        "4",
        "--resume",
        &resume_src,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut second_args: Vec<&str> = second.iter().map(String::as_str).collect();
    second_args.extend_from_slice(&common);
    run_ok(&second_args);

    let full = std::fs::read(paths.path("full.ckpt")).unwrap();
    let resumed = std::fs::read(paths.path("resumed.ckpt")).unwrap();
    assert_eq!(
        full, resumed,
        "resume does not replay the uninterrupted run"
    );

    // The resumed run logs only its own epochs, with absolute indices,
    // and its losses match the tail of the uninterrupted log.
    let full_log = std::fs::read_to_string(paths.path("full.ckpt.log")).unwrap();
    let resumed_log = std::fs::read_to_string(paths.path("resumed.ckpt.log")).unwrap();
    let full_rows: Vec<&str> = full_log.lines().skip(1).collect();
    let resumed_rows: Vec<&str> = resumed_log.lines().skip(1).collect();
    assert_eq!(full_rows.len(), 4);
    assert_eq!(resumed_rows.len(), 2);
    assert!(resumed_rows[0].starts_with("2\t"));
    assert_eq!(resumed_rows, &full_rows[2..]);
}

#[test]
fn evaluate_on_own_training_set_is_finite() {
    let paths = Paths::new();
    run_ok(&[
        "generate",
        "--exp",
        "2",
        "--n",
        "8",
        "--seed",
        "6",
        "--out",
        &paths.p("d.txt"),
    ]);
    run_ok(&[
        "train",
        "--dataset",
        &paths.p("d.txt"),
        "--out",
        &paths.p("c.ckpt"),
        "--epochs",
        "2",
        "--seed",
        "1",
        "--hidden",
        "10",
    ]);
    run_ok(&[
        "evaluate",
        "--checkpoint",
        &paths.p("c.ckpt"),
        "--dataset",
        &paths.p("d.txt"),
        "--out",
        &paths.p("m.tsv"),
        "--operators",
        &paths.p("ops.tsv"),
    ]);
    let table = std::fs::read_to_string(paths.path("m.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "time\tmetric\tn");
    assert_eq!(rows.len(), 71, "one row per time step plus header");
    for row in &rows[1..] {
        let metric: f64 = row.split('\t').nth(1).unwrap().parse().unwrap();
        assert!(metric.is_finite() && metric >= 0.0);
    }
    let ops = std::fs::read_to_string(paths.path("ops.tsv")).unwrap();
    assert!(ops.starts_with("time\tabs_L00\tabs_L01\tabs_L10\tabs_L11\treference"));
}

#[test]
fn predict_from_excited_state_yields_valid_states() {
    let paths = Paths::new();
    run_ok(&[
        "generate",
        "--exp",
        "2",
        "--n",
        "6",
        "--seed",
        "3",
        "--out",
        &paths.p("d.txt"),
    ]);
    run_ok(&[
        "train",
        "--dataset",
        &paths.p("d.txt"),
        "--out",
        &paths.p("c.ckpt"),
        "--epochs",
        "1",
        "--seed",
        "1",
        "--hidden",
        "10",
    ]);
    run_ok(&[
        "predict",
        "--checkpoint",
        &paths.p("c.ckpt"),
        "--out",
        &paths.p("p.txt"),
        "--rho0",
        "1,0,0,0,0,0,0,0",
        "--steps",
        "50",
    ]);
    let data = read_dataset(&paths.path("p.txt")).unwrap();
    assert_eq!(data.records.len(), 1);
    assert_eq!(data.records[0].traj.len(), 51);
    // read_dataset re-validates every state; spot-check the initial one.
    let first = &data.records[0].traj.states[0];
    assert!((first.mat().get(0, 0).re - 1.0).abs() < 1e-12);
}

#[test]
fn exit_codes_follow_the_contract() {
    let paths = Paths::new();
    // Usage error: unknown flag.
    run_expect_code(&["generate", "--bogus"], 1);
    // Usage error: experiment id out of range.
    run_expect_code(
        &[
            "generate",
            "--exp",
            "9",
            "--n",
            "1",
            "--out",
            &paths.p("x.txt"),
        ],
        1,
    );
    // Usage error: malformed rho0 (needs a checkpoint first).
    run_ok(&[
        "generate",
        "--exp",
        "1",
        "--n",
        "4",
        "--seed",
        "2",
        "--out",
        &paths.p("d.txt"),
    ]);
    run_ok(&[
        "train",
        "--dataset",
        &paths.p("d.txt"),
        "--out",
        &paths.p("c.ckpt"),
        "--epochs",
        "0",
        "--hidden",
        "8",
    ]);
    run_expect_code(
        &[
            "predict",
            "--checkpoint",
            &paths.p("c.ckpt"),
            "--out",
            &paths.p("p.txt"),
            "--rho0",
            "not,numbers",
        ],
        1,
    );
    // Data error: missing dataset file.
    run_expect_code(
        &[
            "train",
            "--dataset",
            &paths.p("missing.txt"),
            "--out",
            &paths.p("x.ckpt"),
        ],
        2,
    );
    // Data error: --exp contradicts the dataset header.
    run_expect_code(
        &[
            "train",
            "--exp",
            "2",
            "--dataset",
            &paths.p("d.txt"),
            "--out",
            &paths.p("x.ckpt"),
            "--epochs",
            "0",
        ],
        2,
    );
    // Data error: evaluating against a dataset from another experiment.
    run_ok(&[
        "generate",
        "--exp",
        "2",
        "--n",
        "4",
        "--seed",
        "2",
        "--out",
        &paths.p("d2.txt"),
    ]);
    run_expect_code(
        &[
            "evaluate",
            "--checkpoint",
            &paths.p("c.ckpt"),
            "--dataset",
            &paths.p("d2.txt"),
            "--out",
            &paths.p("m.tsv"),
        ],
        2,
    );
    // Data error: corrupted dataset (invalid stored state fails validation).
    let text = std::fs::read_to_string(paths.path("d.txt")).unwrap();
    std::fs::write(paths.path("bad.txt"), text.replacen("state ", "state 2", 1)).unwrap();
    let out = Command::new(bin())
        .args([
            "train",
            "--dataset",
            &paths.p("bad.txt"),
            "--out",
            &paths.p("x.ckpt"),
        ])
        .output()
        .unwrap();
    assert!(matches!(out.status.code(), Some(2) | Some(3)));
}
