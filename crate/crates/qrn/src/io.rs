//! Dataset and checkpoint persistence.
//!
//! Both formats are line-oriented `key value` text with a versioned first
//! line: human-inspectable, diff-friendly, and trivially exact. Floats are
//! printed with the shortest representation that parses back to the same
//! bits, so a write → read round-trip reproduces every f64 bitwise and the
//! byte stream for a given value is deterministic. All writes go through a
//! temp file in the target directory followed by a rename.
//!
//! Dataset layout: a header (schema version, experiment id, state
//! dimension, Δt, step count, model parameters, seed) followed by one
//! record per trajectory — an optional per-record ω line, then n_steps+1
//! `state` lines, each carrying the 2d² re/im row-major encoding of a
//! density matrix. Every state is re-validated on read.
//!
//! Checkpoint layout: the full experiment configuration, the epoch and
//! optimizer counters, then every parameter array (network, then Adam
//! first and second moments) in the declared fixed order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dynamics::{DensityMatrix, DynamicsError, Trajectory};
use crate::experiments::{ExperimentConfig, TrajRecord};
use crate::neural::{AdamState, GruNetwork};
use crate::qrn::decode_complex;

pub const DATASET_MAGIC: &str = "qrn-dataset v1";
pub const CHECKPOINT_MAGIC: &str = "qrn-checkpoint v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("stored state invalid: {0}")]
    InvalidState(#[from] DynamicsError),
}

/// Dataset header: generation parameters shared by all records.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub experiment: u8,
    pub d: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub omega: f64,
    pub gamma0_1: f64,
    pub lambda_1: f64,
    pub gamma0_2: f64,
    pub lambda_2: f64,
    pub couplings: [f64; 3],
}

impl DatasetMeta {
    pub fn from_config(cfg: &ExperimentConfig, n_steps: usize) -> Self {
        Self {
            experiment: cfg.experiment,
            d: cfg.state_dim(),
            dt: cfg.dt,
            n_steps,
            seed: cfg.seed,
            omega: cfg.omega,
            gamma0_1: cfg.gamma0_1,
            lambda_1: cfg.lambda_1,
            gamma0_2: cfg.gamma0_2,
            lambda_2: cfg.lambda_2,
            couplings: cfg.couplings,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub meta: DatasetMeta,
    pub records: Vec<TrajRecord>,
}

/// Checkpoint: everything needed to resume training or to predict.
#[derive(Debug, Clone)]
pub struct CheckpointFile {
    pub config: ExperimentConfig,
    pub epochs_done: usize,
    pub net: GruNetwork,
    pub adam: AdamState,
}

fn atomic_write(path: &Path, contents: &str) -> Result<(), IoError> {
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|source| IoError::Io {
        path: tmp.clone(),
        source,
    })?;
    fs::rename(&tmp, path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn push_floats(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.push(' ');
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
}

pub fn write_dataset(path: &Path, data: &DatasetFile) -> Result<(), IoError> {
    let m = &data.meta;
    let mut out = String::new();
    out.push_str(DATASET_MAGIC);
    out.push('\n');
    writeln!(out, "experiment {}", m.experiment).unwrap();
    writeln!(out, "d {}", m.d).unwrap();
    writeln!(out, "dt {}", m.dt).unwrap();
    writeln!(out, "n_steps {}", m.n_steps).unwrap();
    writeln!(out, "seed {}", m.seed).unwrap();
    writeln!(out, "omega {}", m.omega).unwrap();
    writeln!(out, "gamma0_1 {}", m.gamma0_1).unwrap();
    writeln!(out, "lambda_1 {}", m.lambda_1).unwrap();
    writeln!(out, "gamma0_2 {}", m.gamma0_2).unwrap();
    writeln!(out, "lambda_2 {}", m.lambda_2).unwrap();
    writeln!(out, "c1 {}", m.couplings[0]).unwrap();
    writeln!(out, "c2 {}", m.couplings[1]).unwrap();
    writeln!(out, "c3 {}", m.couplings[2]).unwrap();
    writeln!(out, "n_records {}", data.records.len()).unwrap();
    for (i, record) in data.records.iter().enumerate() {
        writeln!(out, "record {i}").unwrap();
        if let Some(w) = record.omega {
            writeln!(out, "omega {w}").unwrap();
        }
        for state in &record.traj.states {
            out.push_str("state");
            push_floats(&mut out, crate::qrn::encode_complex(state.mat()));
        }
    }
    atomic_write(path, &out)
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    peeked: Option<(usize, &'a str)>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            iter: text.lines().enumerate(),
            peeked: None,
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.peeked.take().or_else(|| self.iter.next())
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.iter.next();
        }
        self.peeked
    }

    fn expect(&mut self, key: &str) -> Result<(usize, &'a str), IoError> {
        match self.next() {
            Some((lineno, line)) => {
                match line.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
                    Some(rest) => Ok((lineno + 1, rest)),
                    None => Err(IoError::Parse {
                        line: lineno + 1,
                        msg: format!("expected `{key} …`, found `{line}`"),
                    }),
                }
            }
            None => Err(IoError::Parse {
                line: 0,
                msg: format!("missing `{key}`"),
            }),
        }
    }
}

fn parse_num<T: std::str::FromStr>(raw: &str, line: usize, what: &str) -> Result<T, IoError> {
    raw.trim().parse().map_err(|_| IoError::Parse {
        line,
        msg: format!("invalid {what}: `{raw}`"),
    })
}

fn parse_float_list(raw: &str, line: usize) -> Result<Vec<f64>, IoError> {
    raw.split_whitespace()
        .map(|tok| parse_num::<f64>(tok, line, "float"))
        .collect()
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = Lines::new(&text);

    match lines.next() {
        Some((_, magic)) if magic == DATASET_MAGIC => {}
        Some((lineno, other)) => {
            return Err(IoError::Parse {
                line: lineno + 1,
                msg: format!("expected `{DATASET_MAGIC}`, found `{other}`"),
            })
        }
        None => {
            return Err(IoError::Parse {
                line: 0,
                msg: "empty file".into(),
            })
        }
    }

    let (l, raw) = lines.expect("experiment")?;
    let experiment: u8 = parse_num(raw, l, "experiment id")?;
    let (l, raw) = lines.expect("d")?;
    let d: usize = parse_num(raw, l, "dimension")?;
    let (l, raw) = lines.expect("dt")?;
    let dt: f64 = parse_num(raw, l, "dt")?;
    let (l, raw) = lines.expect("n_steps")?;
    let n_steps: usize = parse_num(raw, l, "n_steps")?;
    let (l, raw) = lines.expect("seed")?;
    let seed: u64 = parse_num(raw, l, "seed")?;
    let (l, raw) = lines.expect("omega")?;
    let omega: f64 = parse_num(raw, l, "omega")?;
    let (l, raw) = lines.expect("gamma0_1")?;
    let gamma0_1: f64 = parse_num(raw, l, "gamma0_1")?;
    let (l, raw) = lines.expect("lambda_1")?;
    let lambda_1: f64 = parse_num(raw, l, "lambda_1")?;
    let (l, raw) = lines.expect("gamma0_2")?;
    let gamma0_2: f64 = parse_num(raw, l, "gamma0_2")?;
    let (l, raw) = lines.expect("lambda_2")?;
    let lambda_2: f64 = parse_num(raw, l, "lambda_2")?;
    let (l, raw) = lines.expect("c1")?;
    let c1: f64 = parse_num(raw, l, "c1")?;
    let (l, raw) = lines.expect("c2")?;
    let c2: f64 = parse_num(raw, l, "c2")?;
    let (l, raw) = lines.expect("c3")?;
    let c3: f64 = parse_num(raw, l, "c3")?;
    let (l, raw) = lines.expect("n_records")?;
    let n_records: usize = parse_num(raw, l, "n_records")?;

    let meta = DatasetMeta {
        experiment,
        d,
        dt,
        n_steps,
        seed,
        omega,
        gamma0_1,
        lambda_1,
        gamma0_2,
        lambda_2,
        couplings: [c1, c2, c3],
    };

    let mut records = Vec::with_capacity(n_records);
    for i in 0..n_records {
        let (l, raw) = lines.expect("record")?;
        let index: usize = parse_num(raw, l, "record index")?;
        if index != i {
            return Err(IoError::Parse {
                line: l,
                msg: format!("record {index}, expected {i}"),
            });
        }
        let record_omega = match lines.peek() {
            Some((_, line)) if line.starts_with("omega ") => {
                let (l, raw) = lines.expect("omega")?;
                Some(parse_num::<f64>(raw, l, "record omega")?)
            }
            _ => None,
        };
        let mut states = Vec::with_capacity(n_steps + 1);
        for _ in 0..=n_steps {
            let (l, raw) = lines.expect("state")?;
            let values = parse_float_list(raw, l)?;
            if values.len() != 2 * d * d {
                return Err(IoError::Parse {
                    line: l,
                    msg: format!("state has {} values, expected {}", values.len(), 2 * d * d),
                });
            }
            states.push(DensityMatrix::new(decode_complex(&values))?);
        }
        records.push(TrajRecord {
            omega: record_omega,
            traj: Trajectory {
                t0: 0.0,
                dt,
                states,
            },
        });
    }
    if let Some((lineno, line)) = lines.next() {
        if !line.trim().is_empty() {
            return Err(IoError::Parse {
                line: lineno + 1,
                msg: format!("unexpected trailing content `{line}`"),
            });
        }
    }
    Ok(DatasetFile { meta, records })
}

fn write_config(out: &mut String, cfg: &ExperimentConfig) {
    writeln!(out, "experiment {}", cfg.experiment).unwrap();
    writeln!(out, "n_train {}", cfg.n_train).unwrap();
    writeln!(out, "n_test {}", cfg.n_test).unwrap();
    writeln!(out, "dt {}", cfg.dt).unwrap();
    writeln!(out, "t_max {}", cfg.t_max).unwrap();
    writeln!(out, "t_eval {}", cfg.t_eval).unwrap();
    writeln!(out, "omega {}", cfg.omega).unwrap();
    writeln!(out, "gamma0_1 {}", cfg.gamma0_1).unwrap();
    writeln!(out, "lambda_1 {}", cfg.lambda_1).unwrap();
    writeln!(out, "gamma0_2 {}", cfg.gamma0_2).unwrap();
    writeln!(out, "lambda_2 {}", cfg.lambda_2).unwrap();
    writeln!(out, "c1 {}", cfg.couplings[0]).unwrap();
    writeln!(out, "c2 {}", cfg.couplings[1]).unwrap();
    writeln!(out, "c3 {}", cfg.couplings[2]).unwrap();
    writeln!(out, "mu_count {}", cfg.mu_count).unwrap();
    writeln!(out, "include_lamb_shift {}", cfg.include_lamb_shift).unwrap();
    writeln!(out, "omega_lo {}", cfg.omega_range.0).unwrap();
    writeln!(out, "omega_hi {}", cfg.omega_range.1).unwrap();
    writeln!(out, "epochs {}", cfg.epochs).unwrap();
    writeln!(out, "batch_size {}", cfg.batch_size).unwrap();
    writeln!(out, "learning_rate {}", cfg.learning_rate).unwrap();
    writeln!(out, "l2_penalty {}", cfg.l2_penalty).unwrap();
    writeln!(out, "hidden_size {}", cfg.hidden_size).unwrap();
    writeln!(out, "mixed_initial_states {}", cfg.mixed_initial_states).unwrap();
    writeln!(out, "seed {}", cfg.seed).unwrap();
}

fn read_config(lines: &mut Lines) -> Result<ExperimentConfig, IoError> {
    let (l, raw) = lines.expect("experiment")?;
    let experiment: u8 = parse_num(raw, l, "experiment")?;
    let (l, raw) = lines.expect("n_train")?;
    let n_train: usize = parse_num(raw, l, "n_train")?;
    let (l, raw) = lines.expect("n_test")?;
    let n_test: usize = parse_num(raw, l, "n_test")?;
    let (l, raw) = lines.expect("dt")?;
    let dt: f64 = parse_num(raw, l, "dt")?;
    let (l, raw) = lines.expect("t_max")?;
    let t_max: f64 = parse_num(raw, l, "t_max")?;
    let (l, raw) = lines.expect("t_eval")?;
    let t_eval: f64 = parse_num(raw, l, "t_eval")?;
    let (l, raw) = lines.expect("omega")?;
    let omega: f64 = parse_num(raw, l, "omega")?;
    let (l, raw) = lines.expect("gamma0_1")?;
    let gamma0_1: f64 = parse_num(raw, l, "gamma0_1")?;
    let (l, raw) = lines.expect("lambda_1")?;
    let lambda_1: f64 = parse_num(raw, l, "lambda_1")?;
    let (l, raw) = lines.expect("gamma0_2")?;
    let gamma0_2: f64 = parse_num(raw, l, "gamma0_2")?;
    let (l, raw) = lines.expect("lambda_2")?;
    let lambda_2: f64 = parse_num(raw, l, "lambda_2")?;
    let (l, raw) = lines.expect("c1")?;
    let c1: f64 = parse_num(raw, l, "c1")?;
    let (l, raw) = lines.expect("c2")?;
    let c2: f64 = parse_num(raw, l, "c2")?;
    let (l, raw) = lines.expect("c3")?;
    let c3: f64 = parse_num(raw, l, "c3")?;
    let (l, raw) = lines.expect("mu_count")?;
    let mu_count: usize = parse_num(raw, l, "mu_count")?;
    let (l, raw) = lines.expect("include_lamb_shift")?;
    let include_lamb_shift: bool = parse_num(raw, l, "include_lamb_shift")?;
    let (l, raw) = lines.expect("omega_lo")?;
    let omega_lo: f64 = parse_num(raw, l, "omega_lo")?;
    let (l, raw) = lines.expect("omega_hi")?;
    let omega_hi: f64 = parse_num(raw, l, "omega_hi")?;
    let (l, raw) = lines.expect("epochs")?;
    let epochs: usize = parse_num(raw, l, "epochs")?;
    let (l, raw) = lines.expect("batch_size")?;
    let batch_size: usize = parse_num(raw, l, "batch_size")?;
    let (l, raw) = lines.expect("learning_rate")?;
    let learning_rate: f64 = parse_num(raw, l, "learning_rate")?;
    let (l, raw) = lines.expect("l2_penalty")?;
    let l2_penalty: f64 = parse_num(raw, l, "l2_penalty")?;
    let (l, raw) = lines.expect("hidden_size")?;
    let hidden_size: usize = parse_num(raw, l, "hidden_size")?;
    let (l, raw) = lines.expect("mixed_initial_states")?;
    let mixed_initial_states: bool = parse_num(raw, l, "mixed_initial_states")?;
    let (l, raw) = lines.expect("seed")?;
    let seed: u64 = parse_num(raw, l, "seed")?;

    Ok(ExperimentConfig {
        experiment,
        n_train,
        n_test,
        dt,
        t_max,
        t_eval,
        omega,
        gamma0_1,
        lambda_1,
        gamma0_2,
        lambda_2,
        couplings: [c1, c2, c3],
        mu_count,
        include_lamb_shift,
        omega_range: (omega_lo, omega_hi),
        epochs,
        batch_size,
        learning_rate,
        l2_penalty,
        hidden_size,
        mixed_initial_states,
        seed,
    })
}

pub fn write_checkpoint(path: &Path, ckpt: &CheckpointFile) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    write_config(&mut out, &ckpt.config);
    writeln!(out, "epochs_done {}", ckpt.epochs_done).unwrap();
    writeln!(out, "adam_step {}", ckpt.adam.step).unwrap();
    writeln!(out, "adam_lr {}", ckpt.adam.learning_rate).unwrap();
    writeln!(out, "input_size {}", ckpt.net.input_size).unwrap();
    writeln!(out, "hidden_size {}", ckpt.net.hidden_size).unwrap();
    writeln!(out, "output_size {}", ckpt.net.output_size).unwrap();

    let names = ckpt.net.param_names();
    for (prefix, source) in [
        ("param", &ckpt.net),
        ("adam_m", &ckpt.adam.m),
        ("adam_v", &ckpt.adam.v),
    ] {
        for (name, slice) in names.iter().zip(source.param_slices()) {
            write!(out, "{prefix} {name} {}", slice.len()).unwrap();
            push_floats(&mut out, slice.iter().copied());
        }
    }
    atomic_write(path, &out)
}

fn read_param_block(
    lines: &mut Lines,
    prefix: &str,
    names: &[String],
    target: &mut GruNetwork,
) -> Result<(), IoError> {
    for name in names {
        let (l, raw) = lines.expect(prefix)?;
        let rest = raw
            .strip_prefix(name.as_str())
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| IoError::Parse {
                line: l,
                msg: format!("expected parameter `{name}`, found `{raw}`"),
            })?;
        let mut toks = rest.split_whitespace();
        let count: usize = parse_num(toks.next().unwrap_or(""), l, "length")?;
        let values: Vec<f64> = toks
            .map(|tok| parse_num::<f64>(tok, l, "float"))
            .collect::<Result<_, _>>()?;
        if values.len() != count {
            return Err(IoError::Parse {
                line: l,
                msg: format!("{name}: {} values, header says {count}", values.len()),
            });
        }
        let idx = names.iter().position(|n| n == name).unwrap();
        let slot = &mut target.param_slices_mut()[idx];
        if slot.len() != count {
            return Err(IoError::Schema(format!(
                "{name}: stored length {count} does not match architecture {}",
                slot.len()
            )));
        }
        slot.copy_from_slice(&values);
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointFile, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = Lines::new(&text);
    match lines.next() {
        Some((_, magic)) if magic == CHECKPOINT_MAGIC => {}
        Some((lineno, other)) => {
            return Err(IoError::Parse {
                line: lineno + 1,
                msg: format!("expected `{CHECKPOINT_MAGIC}`, found `{other}`"),
            })
        }
        None => {
            return Err(IoError::Parse {
                line: 0,
                msg: "empty file".into(),
            })
        }
    }
    let config = read_config(&mut lines)?;
    let (l, raw) = lines.expect("epochs_done")?;
    let epochs_done: usize = parse_num(raw, l, "epochs_done")?;
    let (l, raw) = lines.expect("adam_step")?;
    let adam_step: u64 = parse_num(raw, l, "adam_step")?;
    let (l, raw) = lines.expect("adam_lr")?;
    let adam_lr: f64 = parse_num(raw, l, "adam_lr")?;
    let (l, raw) = lines.expect("input_size")?;
    let input_size: usize = parse_num(raw, l, "input_size")?;
    let (l, raw) = lines.expect("hidden_size")?;
    let hidden_size: usize = parse_num(raw, l, "hidden_size")?;
    let (l, raw) = lines.expect("output_size")?;
    let output_size: usize = parse_num(raw, l, "output_size")?;

    let mut net = GruNetwork::zeros(input_size, hidden_size, output_size);
    let names = net.param_names();
    read_param_block(&mut lines, "param", &names, &mut net)?;
    let mut adam = AdamState::new(adam_lr, &net);
    adam.step = adam_step;
    read_param_block(&mut lines, "adam_m", &names, &mut adam.m)?;
    read_param_block(&mut lines, "adam_v", &names, &mut adam.v)?;

    Ok(CheckpointFile {
        config,
        epochs_done,
        net,
        adam,
    })
}

/// Delimited metrics table: `time<TAB>metric<TAB>n`, one row per time.
pub fn write_metrics_table(
    path: &Path,
    curve: &crate::experiments::MetricsCurve,
) -> Result<(), IoError> {
    let mut out = String::from("time\tmetric\tn\n");
    for (t, v) in curve.times.iter().zip(&curve.values) {
        writeln!(out, "{t}\t{v}\t{}", curve.n_samples).unwrap();
    }
    atomic_write(path, &out)
}

/// Per-epoch training loss: `epoch<TAB>loss`. `first_epoch` keeps the
/// indices absolute when a resumed run logs only its own epochs.
pub fn write_loss_log(path: &Path, first_epoch: usize, losses: &[f64]) -> Result<(), IoError> {
    let mut out = String::from("epoch\tloss\n");
    for (e, loss) in losses.iter().enumerate() {
        writeln!(out, "{}\t{loss}", first_epoch + e).unwrap();
    }
    atomic_write(path, &out)
}

/// Learned-operator table: time, |entry| columns, and an optional
/// reference column (√γ(t) in the Markovian experiment).
pub fn write_operator_table(
    path: &Path,
    trace: &crate::experiments::OperatorTrace,
    reference: Option<&[f64]>,
) -> Result<(), IoError> {
    let d_sq = trace.mean_abs_entries.first().map_or(0, Vec::len);
    let d = (d_sq as f64).sqrt() as usize;
    let mut out = String::from("time");
    for i in 0..d {
        for j in 0..d {
            write!(out, "\tabs_L{i}{j}").unwrap();
        }
    }
    if reference.is_some() {
        out.push_str("\treference");
    }
    out.push('\n');
    for (k, (t, entries)) in trace.times.iter().zip(&trace.mean_abs_entries).enumerate() {
        write!(out, "{t}").unwrap();
        for e in entries {
            write!(out, "\t{e}").unwrap();
        }
        if let Some(r) = reference {
            write!(out, "\t{}", r[k]).unwrap();
        }
        out.push('\n');
    }
    atomic_write(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{build_train_records, ExperimentConfig};
    use crate::neural::init_params;
    use crate::qrn::encode_complex;

    fn tiny_cfg(experiment: u8) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(experiment);
        cfg.n_train = 4;
        cfg.n_test = 2;
        cfg.t_max = 0.05;
        cfg.t_eval = 0.08;
        cfg.seed = 3;
        cfg
    }

    #[test]
    fn dataset_round_trip_is_exact_and_deterministic() {
        let cfg = tiny_cfg(1);
        let records = build_train_records(&cfg).unwrap();
        let data = DatasetFile {
            meta: DatasetMeta::from_config(&cfg, cfg.n_train_steps()),
            records,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.txt");
        write_dataset(&path, &data).unwrap();
        let loaded = read_dataset(&path).unwrap();
        assert_eq!(loaded, data);

        let path2 = dir.path().join("data2.txt");
        write_dataset(&path2, &loaded).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn dataset_round_trip_keeps_per_record_omega() {
        let cfg = tiny_cfg(5);
        let records = build_train_records(&cfg).unwrap();
        assert!(records[0].omega.is_some());
        let data = DatasetFile {
            meta: DatasetMeta::from_config(&cfg, cfg.n_train_steps()),
            records,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.txt");
        write_dataset(&path, &data).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), data);
    }

    #[test]
    fn dataset_reader_rejects_invalid_states_and_bad_headers() {
        let cfg = tiny_cfg(1);
        let records = build_train_records(&cfg).unwrap();
        let data = DatasetFile {
            meta: DatasetMeta::from_config(&cfg, cfg.n_train_steps()),
            records,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.txt");
        write_dataset(&path, &data).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        // Double a stored state's leading entry: trace breaks.
        let corrupted = text.replacen("state ", "state 2", 1);
        std::fs::write(&path, corrupted).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(IoError::Parse { .. }) | Err(IoError::InvalidState(_))
        ));

        std::fs::write(&path, "not a dataset\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(IoError::Parse { .. })));

        // Truncated record section.
        let mut lines: Vec<&str> = text.lines().collect();
        lines.truncate(lines.len() - 1);
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(read_dataset(&path).is_err());
    }

    #[test]
    fn checkpoint_round_trip_preserves_forward_outputs_bitwise() {
        let cfg = tiny_cfg(2);
        let net = init_params(cfg.input_size(), 10, cfg.output_size(), 5);
        let mut adam = crate::neural::AdamState::new(cfg.learning_rate, &net);
        adam.step = 17;
        // Make the moments nonzero so the round-trip is meaningful.
        for arr in adam.m.param_slices_mut() {
            for (i, v) in arr.iter_mut().enumerate() {
                *v = (i as f64 + 1.0).recip();
            }
        }
        let ckpt = CheckpointFile {
            config: cfg.clone(),
            epochs_done: 2,
            net,
            adam,
        };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        write_checkpoint(&path, &ckpt).unwrap();
        let loaded = read_checkpoint(&path).unwrap();

        assert_eq!(loaded.config, ckpt.config);
        assert_eq!(loaded.epochs_done, 2);
        assert_eq!(loaded.net, ckpt.net);
        assert_eq!(loaded.adam, ckpt.adam);

        let rho0 = crate::dynamics::sample_random_state(2, 9);
        let enc = encode_complex(rho0.mat());
        let (a, _) = crate::neural::network_forward_rollout(&ckpt.net, &enc, 30, None);
        let (b, _) = crate::neural::network_forward_rollout(&loaded.net, &enc, 30, None);
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_reader_rejects_architecture_mismatch() {
        let cfg = tiny_cfg(1);
        let net = init_params(cfg.input_size(), 6, cfg.output_size(), 5);
        let adam = crate::neural::AdamState::new(cfg.learning_rate, &net);
        let ckpt = CheckpointFile {
            config: cfg,
            epochs_done: 0,
            net,
            adam,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        write_checkpoint(&path, &ckpt).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace("hidden_size 6", "hidden_size 7");
        std::fs::write(&path, tampered).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }

    #[test]
    fn metrics_table_format() {
        let curve = crate::experiments::MetricsCurve {
            times: vec![0.01, 0.02],
            values: vec![0.5, 0.25],
            n_samples: 7,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.tsv");
        write_metrics_table(&path, &curve).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "time\tmetric\tn\n0.01\t0.5\t7\n0.02\t0.25\t7\n");
    }
}
