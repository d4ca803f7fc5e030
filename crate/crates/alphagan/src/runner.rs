//! The training loop around [`Trainer`]: loss CSV, periodic checkpoints and
//! resumption.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use alphagan_core::train::{LossRecord, Trainer, TrainingConfig};
use alphagan_core::volume::VoxelGrid;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::to_key_values;
use crate::error::{Error, Result};

pub const LOSS_HEADER: &str = "iteration,L_D,L_C,L_G,GP_D,GP_C,wallclock_ms";
pub const LOSS_FILE: &str = "losses.csv";
pub const ROLLING_CHECKPOINT: &str = "checkpoint.agan";
pub const FINAL_CHECKPOINT: &str = "final.agan";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
    /// Iterations between progress log lines; 0 disables them.
    pub log_every: u64,
}

pub struct RunOutcome {
    pub trainer: Trainer<f32>,
    pub records: Vec<LossRecord>,
    pub final_checkpoint: PathBuf,
    pub loss_log: PathBuf,
}

fn preamble(config: &TrainingConfig) -> String {
    let lr = config.optimizers.generator_encoder.learning_rate;
    let mut s = format!("# lr = {lr}\n");
    for (k, v) in to_key_values(config) {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s.push_str(LOSS_HEADER);
    s.push('\n');
    s
}

pub fn format_record(r: &LossRecord, wallclock_ms: u128) -> String {
    format!(
        "{},{},{},{},{},{},{wallclock_ms}",
        r.iteration, r.l_d, r.l_c, r.l_g, r.gp_d, r.gp_c
    )
}

/// Rows of a loss log, skipping the `#` preamble and the header.
pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<(LossRecord, u128)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line == LOSS_HEADER || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("{}: malformed row `{line}`", path.display()));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        out.push((
            LossRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                l_d: num(1)?,
                l_c: num(2)?,
                l_g: num(3)?,
                gp_d: num(4)?,
                gp_c: num(5)?,
            },
            f[6].parse().map_err(|_| bad())?,
        ));
    }
    Ok(out)
}

/// Keeps the preamble, header and rows up to `iteration`.
fn truncate_log(path: &Path, iteration: u64) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for line in text.lines() {
        let row_iter = line.split(',').next().and_then(|c| c.parse::<u64>().ok());
        if row_iter.is_none_or(|i| i <= iteration) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept).map_err(|e| Error::io(path, e))
}

fn checkpoint_finite(ck: &Checkpoint) -> Result<()> {
    for (name, values) in &ck.tensors {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(alphagan_core::Error::NonFinite(format!("checkpoint tensor {name}")).into());
        }
    }
    Ok(())
}

fn write_checkpoint(trainer: &Trainer<f32>, path: &Path) -> Result<()> {
    let ck = Checkpoint::from_trainer(trainer);
    checkpoint_finite(&ck)?;
    save_checkpoint(&ck, path)
}

/// Trains until `config.iterations`, appending one flushed CSV row per
/// iteration and checkpointing every `config.checkpoint_interval`
/// iterations and at the end.
pub fn run_training(data: &[VoxelGrid], config: TrainingConfig, options: &RunOptions) -> Result<RunOutcome> {
    if data.is_empty() {
        return Err(alphagan_core::Error::Contract("training set is empty".into()).into());
    }
    config.validate()?;
    let out = &options.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let loss_log = out.join(LOSS_FILE);
    let mut trainer = Trainer::<f32>::new(config.clone())?;
    let log_file = match &options.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            ck.restore_into(&mut trainer)?;
            log::info!("resumed from {} at iteration {}", path.display(), ck.iteration);
            if loss_log.exists() {
                truncate_log(&loss_log, ck.iteration)?;
                OpenOptions::new().append(true).open(&loss_log)
            } else {
                File::create(&loss_log).and_then(|mut f| f.write_all(preamble(&config).as_bytes()).map(|_| f))
            }
        }
        None => File::create(&loss_log).and_then(|mut f| f.write_all(preamble(&config).as_bytes()).map(|_| f)),
    };
    let mut log = BufWriter::new(log_file.map_err(|e| Error::io(&loss_log, e))?);
    if trainer.needs_replacement(data.len()) {
        log::warn!(
            "{} training volumes is fewer than the batch size {}; sampling with replacement",
            data.len(),
            config.batch_size
        );
    }
    let start = Instant::now();
    let rolling = out.join(ROLLING_CHECKPOINT);
    let mut records = Vec::new();
    while trainer.iteration() < config.iterations {
        let record = trainer.step(data)?;
        let io = |e| Error::io(&loss_log, e);
        writeln!(log, "{}", format_record(&record, start.elapsed().as_millis())).map_err(io)?;
        log.flush().map_err(io)?;
        let it = record.iteration;
        if options.log_every > 0 && it % options.log_every == 0 {
            log::info!(
                "iteration {it}: L_D {:.4} L_C {:.4} L_G {:.4}",
                record.l_d,
                record.l_c,
                record.l_g
            );
        }
        records.push(record);
        if config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0 {
            write_checkpoint(&trainer, &rolling)?;
        }
    }
    let final_checkpoint = out.join(FINAL_CHECKPOINT);
    write_checkpoint(&trainer, &final_checkpoint)?;
    Ok(RunOutcome {
        trainer,
        records,
        final_checkpoint,
        loss_log,
    })
}
