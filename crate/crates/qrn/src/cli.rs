//! Command-line entry points: dataset generation, training, prediction,
//! evaluation. Everything is deterministic given `--seed`; repeated runs
//! produce byte-identical files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 numerical
//! failure. The mapping lives in [`CliError::code`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dynamics::{decay_rate, sample_random_state, DecayParams, DensityMatrix, DynamicsError};
use crate::experiments::{
    self, build_train_records, eval_cost_curve, eval_operator_trace, eval_trace_distance_curve,
    ExperimentConfig, ExperimentError, TrajRecord,
};
use crate::io::{
    read_checkpoint, read_dataset, write_checkpoint, write_dataset, write_loss_log,
    write_metrics_table, write_operator_table, CheckpointFile, DatasetFile, DatasetMeta, IoError,
};
use crate::neural::AdamState;
use crate::qrn::{decode_complex, rollout_master_equation, rollout_state_predictor, QrnError};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::InvalidState(inner) => CliError::Numerical(inner.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Diverged { .. } => CliError::Numerical(e.to_string()),
            ExperimentError::Dynamics(inner) => CliError::Numerical(inner.to_string()),
            ExperimentError::Qrn(inner) => CliError::from(inner),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<QrnError> for CliError {
    fn from(e: QrnError) -> Self {
        match e {
            QrnError::DegenerateOutput { .. } => CliError::Numerical(e.to_string()),
            QrnError::Dynamics(inner) => CliError::Numerical(inner.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

fn parse_omega_range(raw: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = raw.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("invalid lower bound `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("invalid upper bound `{hi}`"))?;
    if hi < lo {
        return Err(format!("empty interval {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Parser)]
#[command(
    name = "qrn",
    about = "Open-quantum-system trajectory datasets and recurrent master-equation learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a ground-truth trajectory dataset.
    Generate(GenerateArgs),
    /// Train a network on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Roll a trained network forward from an initial state.
    Predict(PredictArgs),
    /// Evaluate a checkpoint against a dataset and emit a metrics table.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Experiment id (1..=5); selects the physical model and defaults.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub exp: u8,
    /// Number of trajectories.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Integration horizon; the file stores t_max/dt steps per record.
    #[arg(long = "t-max", default_value_t = 0.7)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// EXP5: per-trajectory ω is drawn uniformly from this interval.
    #[arg(long = "omega-range", value_parser = parse_omega_range, default_value = "0.5:1.5")]
    pub omega_range: (f64, f64),
    /// Draw Ginibre mixed initial states instead of Haar pure states.
    #[arg(long)]
    pub mixed: bool,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::defaults(args.exp);
    cfg.n_train = args.n;
    cfg.seed = args.seed;
    cfg.dt = args.dt;
    cfg.t_max = args.t_max;
    cfg.t_eval = args.t_max;
    cfg.omega = args.omega;
    cfg.omega_range = args.omega_range;
    cfg.mixed_initial_states = args.mixed;
    cfg.validate()?;

    let records = build_train_records(&cfg)?;
    let mut states = 0usize;
    for r in &records {
        for s in &r.traj.states {
            s.validate()?;
            states += 1;
        }
    }
    let data = DatasetFile {
        meta: DatasetMeta::from_config(&cfg, cfg.n_train_steps()),
        records,
    };
    write_dataset(&args.out, &data)?;
    println!(
        "wrote {} trajectories ({} states, invariant checks {}/{} passed) to {}",
        data.records.len(),
        states,
        states,
        states,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Expected experiment id; must match the dataset header if given.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub exp: Option<u8>,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint output path (written after every epoch).
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log path; defaults to `<out>.log`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub mu: usize,
    /// Learn a Lamb-shift correction alongside the Lindblad operators.
    #[arg(long = "lamb-shift")]
    pub lamb_shift: bool,
    #[arg(long, default_value_t = 40)]
    pub hidden: usize,
    /// L2 penalty on the output-layer weights; defaults to 0.001 for
    /// experiment 2 and 0 otherwise.
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long = "t-max", default_value_t = 0.7)]
    pub t_max: f64,
    #[arg(long = "t-eval", default_value_t = 1.0)]
    pub t_eval: f64,
    /// Resume from an existing checkpoint (training replays the exact
    /// uninterrupted schedule).
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

fn config_for_training(args: &TrainArgs, meta: &DatasetMeta) -> Result<ExperimentConfig, CliError> {
    if let Some(exp) = args.exp {
        if exp != meta.experiment {
            return Err(CliError::Data(format!(
                "dataset is for experiment {}, --exp says {exp}",
                meta.experiment
            )));
        }
    }
    let mut cfg = ExperimentConfig::defaults(meta.experiment);
    cfg.dt = meta.dt;
    cfg.omega = meta.omega;
    cfg.gamma0_1 = meta.gamma0_1;
    cfg.lambda_1 = meta.lambda_1;
    cfg.gamma0_2 = meta.gamma0_2;
    cfg.lambda_2 = meta.lambda_2;
    cfg.couplings = meta.couplings;
    cfg.t_max = args.t_max;
    cfg.t_eval = args.t_eval;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch;
    cfg.learning_rate = args.lr;
    cfg.seed = args.seed;
    cfg.mu_count = args.mu;
    cfg.include_lamb_shift = args.lamb_shift;
    cfg.hidden_size = args.hidden;
    cfg.l2_penalty = args
        .l2
        .unwrap_or(if meta.experiment == 2 { 0.001 } else { 0.0 });
    cfg.validate()?;
    if cfg.n_train_steps() > meta.n_steps {
        return Err(CliError::Data(format!(
            "dataset holds {} steps per record but t_max {} at dt {} needs {}",
            meta.n_steps,
            cfg.t_max,
            cfg.dt,
            cfg.n_train_steps()
        )));
    }
    Ok(cfg)
}

/// Checkpoint fields that must agree for a step-for-step resume.
fn check_resume_compatible(a: &ExperimentConfig, b: &ExperimentConfig) -> Result<(), CliError> {
    let same = a.experiment == b.experiment
        && a.dt == b.dt
        && a.t_max == b.t_max
        && a.mu_count == b.mu_count
        && a.include_lamb_shift == b.include_lamb_shift
        && a.hidden_size == b.hidden_size
        && a.batch_size == b.batch_size
        && a.learning_rate == b.learning_rate
        && a.l2_penalty == b.l2_penalty
        && a.seed == b.seed;
    if same {
        Ok(())
    } else {
        Err(CliError::Data(
            "checkpoint configuration does not match the requested training run".into(),
        ))
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let data = read_dataset(&args.dataset)?;
    let cfg = config_for_training(args, &data.meta)?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    });

    let (mut net, mut adam, start_epoch) = match &args.resume {
        Some(path) => {
            let ckpt = read_checkpoint(path)?;
            check_resume_compatible(&ckpt.config, &cfg)?;
            (ckpt.net, ckpt.adam, ckpt.epochs_done)
        }
        None => {
            let net = experiments::init_network(&cfg);
            let adam = AdamState::new(cfg.learning_rate, &net);
            (net, adam, 0)
        }
    };
    if start_epoch > cfg.epochs {
        return Err(CliError::Data(format!(
            "checkpoint has {start_epoch} epochs done, more than the requested {}",
            cfg.epochs
        )));
    }

    let mut losses: Vec<f64> = Vec::new();
    if start_epoch == cfg.epochs {
        // Nothing to train (includes --epochs 0): checkpoint equals the
        // initialization or the resumed state.
        write_checkpoint(
            &args.out,
            &CheckpointFile {
                config: cfg.clone(),
                epochs_done: start_epoch,
                net,
                adam,
            },
        )?;
        write_loss_log(&log_path, start_epoch, &losses)?;
        println!("wrote checkpoint after 0 epochs to {}", args.out.display());
        return Ok(());
    }

    for epoch in start_epoch..cfg.epochs {
        let log = experiments::train(&cfg, &data.records, &mut net, &mut adam, epoch, epoch + 1)
            .map_err(|e| {
                // On divergence the checkpoint of the previous epoch stays
                // on disk.
                CliError::from(e)
            })?;
        losses.extend(&log);
        write_checkpoint(
            &args.out,
            &CheckpointFile {
                config: cfg.clone(),
                epochs_done: epoch + 1,
                net: net.clone(),
                adam: adam.clone(),
            },
        )?;
        write_loss_log(&log_path, start_epoch, &losses)?;
        println!("epoch {epoch}: mean training loss {:.6e}", log[0]);
    }
    println!(
        "trained {} epochs; checkpoint {} loss log {}",
        cfg.epochs - start_epoch,
        args.out.display(),
        log_path.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Initial state as 2d² comma-separated reals (real parts row-major,
    /// then imaginary parts). Sampled from --seed when omitted.
    #[arg(long)]
    pub rho0: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of prediction steps; defaults to t_eval/dt of the checkpoint.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Conditioning frequency for checkpoints trained with a per-record ω.
    #[arg(long)]
    pub omega: Option<f64>,
}

fn parse_rho0(raw: &str, d: usize) -> Result<DensityMatrix, CliError> {
    let values: Vec<f64> = raw
        .split(',')
        .map(|tok| tok.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("invalid --rho0: {e}")))?;
    if values.len() != 2 * d * d {
        return Err(CliError::Usage(format!(
            "--rho0 needs {} values, got {}",
            2 * d * d,
            values.len()
        )));
    }
    DensityMatrix::new(decode_complex(&values))
        .map_err(|e| CliError::Data(format!("--rho0 is not a valid density matrix: {e}")))
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let cfg = &ckpt.config;
    let d = cfg.state_dim();
    let rho0 = match &args.rho0 {
        Some(raw) => parse_rho0(raw, d)?,
        None => sample_random_state(d, args.seed),
    };
    let n_steps = args.steps.unwrap_or_else(|| cfg.n_eval_steps());

    let (traj, omega) = if cfg.is_predictor() {
        (
            rollout_state_predictor(&rho0, &ckpt.net, cfg.dt, n_steps)?,
            None,
        )
    } else {
        let omega = cfg
            .uses_omega_input()
            .then(|| args.omega.unwrap_or(cfg.omega));
        let qcfg = cfg.qrn_config_for(omega.unwrap_or(cfg.omega));
        (
            rollout_master_equation(&rho0, &ckpt.net, &qcfg, n_steps, omega),
            omega,
        )
    };
    for s in &traj.states {
        s.validate()?;
    }

    let data = DatasetFile {
        meta: DatasetMeta::from_config(cfg, n_steps),
        records: vec![TrajRecord { omega, traj }],
    };
    write_dataset(&args.out, &data)?;
    println!(
        "wrote predicted trajectory ({} states) to {}",
        n_steps + 1,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Metrics table output: time, metric, sample count (tab-separated).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the learned-operator magnitude table (master-equation
    /// checkpoints; includes a √γ(t) reference column for experiment 2).
    #[arg(long)]
    pub operators: Option<PathBuf>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let data = read_dataset(&args.dataset)?;
    let cfg = &ckpt.config;
    if data.meta.experiment != cfg.experiment {
        return Err(CliError::Data(format!(
            "checkpoint is for experiment {}, dataset for {}",
            cfg.experiment, data.meta.experiment
        )));
    }
    if (data.meta.dt - cfg.dt).abs() > 1e-12 {
        return Err(CliError::Data(format!(
            "checkpoint dt {} does not match dataset dt {}",
            cfg.dt, data.meta.dt
        )));
    }
    if data.meta.d != cfg.state_dim() {
        return Err(CliError::Data(format!(
            "checkpoint is for dimension {}, dataset stores {}",
            cfg.state_dim(),
            data.meta.d
        )));
    }

    // Evaluate over the full horizon stored in the dataset.
    let mut eval_cfg = cfg.clone();
    eval_cfg.t_eval = data.meta.n_steps as f64 * data.meta.dt;
    eval_cfg.t_max = eval_cfg.t_max.min(eval_cfg.t_eval);

    let curve = if cfg.is_predictor() {
        eval_trace_distance_curve(&eval_cfg, &ckpt.net, &data.records)?
    } else {
        eval_cost_curve(&eval_cfg, &ckpt.net, &data.records)?
    };
    write_metrics_table(&args.out, &curve)?;

    if let Some(op_path) = &args.operators {
        if cfg.is_predictor() {
            return Err(CliError::Usage(
                "--operators applies only to master-equation checkpoints".into(),
            ));
        }
        let trace = eval_operator_trace(&eval_cfg, &ckpt.net, &data.records)?;
        let reference = if cfg.experiment == 2 {
            let params = DecayParams::new(cfg.gamma0_1, cfg.lambda_1)?;
            let values: Result<Vec<f64>, DynamicsError> = trace
                .times
                .iter()
                .map(|&t| decay_rate(t, &params).map(f64::sqrt))
                .collect();
            Some(values?)
        } else {
            None
        };
        write_operator_table(op_path, &trace, reference.as_deref())?;
    }

    println!(
        "evaluated {} trajectories; mean metric {:.6e} (t ≤ {}), {:.6e} (t > {})",
        curve.n_samples,
        curve.mean_where(|t| t <= cfg.t_max),
        cfg.t_max,
        curve.mean_where(|t| t > cfg.t_max),
        cfg.t_max
    );
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_map_by_error_class() {
        assert_eq!(CliError::Usage("x".into()).code(), 1);
        assert_eq!(CliError::Data("x".into()).code(), 2);
        assert_eq!(CliError::Numerical("x".into()).code(), 3);

        let diverged = CliError::from(ExperimentError::Diverged { step: 9 });
        assert_eq!(diverged.code(), 3);
        let degenerate = CliError::from(QrnError::DegenerateOutput { norm: 0.0 });
        assert_eq!(degenerate.code(), 3);
        let parse = CliError::from(IoError::Parse {
            line: 1,
            msg: "x".into(),
        });
        assert_eq!(parse.code(), 2);
        let mismatch = CliError::from(QrnError::TrajectoryMismatch("x".into()));
        assert_eq!(mismatch.code(), 2);
    }

    #[test]
    fn omega_range_parsing() {
        assert_eq!(parse_omega_range("0.5:1.5").unwrap(), (0.5, 1.5));
        assert_eq!(parse_omega_range("1:1").unwrap(), (1.0, 1.0));
        assert!(parse_omega_range("2:1").is_err());
        assert!(parse_omega_range("nope").is_err());
    }
}
