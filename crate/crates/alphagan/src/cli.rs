//! The `alphagan` command line: phantom, preprocess, train, generate,
//! evaluate and inspect-checkpoint.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use alphagan_core::metrics::{evaluate_model, generate_volumes, ProtocolConfig};
use alphagan_core::networks::Preset;
use alphagan_core::random::SeedStream;
use alphagan_core::train::TrainingConfig;
use alphagan_core::volume::{generate_phantom, preprocess, Preprocessing, DEFAULT_STRUCTURES};
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::load_checkpoint;
use crate::config::{apply_all, parse_key_values, to_key_values, KeyValues};
use crate::dataset::{grid_extents, load_dataset, max_extent, model_grids, postprocess_generated};
use crate::error::{Error, Result};
use crate::manifest::{RunManifest, SEED_ENV};
use crate::montage::write_montage;
use crate::nifti::{read_nifti, write_nifti, Volume};
use crate::report::{report_table, write_report};
use crate::runner::{run_training, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "alphagan", version, about = "Volumetric alpha-GAN training, generation and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic brain phantoms as NIfTI files.
    Phantom(PhantomArgs),
    /// Pad, flip and normalize a directory of volumes to model space.
    Preprocess(PreprocessArgs),
    /// Train a preset on a directory of volumes.
    Train(TrainArgs),
    /// Sample volumes from a trained checkpoint.
    Generate(GenerateArgs),
    /// Score a checkpoint against real volumes.
    Evaluate(EvaluateArgs),
    /// Print the contents of a checkpoint.
    InspectCheckpoint(InspectArgs),
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// One extent for a cube, or `nx,ny,nz`.
    #[arg(long, default_value = "16")]
    pub shape: String,
    #[arg(long, default_value_t = DEFAULT_STRUCTURES)]
    pub structures: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Write `.nii.gz` instead of `.nii`.
    #[arg(long)]
    pub gzip: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Target `nx,ny,nz` (or one extent); defaults to a cube of the largest
    /// extent in the data.
    #[arg(long)]
    pub target: Option<String>,
    /// Axes to mirror, any of `x`, `y`, `z`.
    #[arg(long, default_value = "")]
    pub flip: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Learning rate of every optimizer group.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Model-space extents, `D,H,W` or one extent.
    #[arg(long)]
    pub volume: Option<String>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub checkpoint_interval: Option<u64>,
    /// Augmentation list, e.g. `flip:0@0.5;zoom:0.9:1.1@0.5`, or `none`.
    #[arg(long)]
    pub augmentation: Option<String>,
    /// Any configuration key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Scan whose extents, intensity range and header the outputs take.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Axes the training data were mirrored along, any of `x`, `y`, `z`.
    #[arg(long, default_value = "")]
    pub flip: String,
    /// Also write a PGM slice montage per volume.
    #[arg(long)]
    pub montage: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub real: PathBuf,
    /// CSV report path; defaults to `report.csv` in the output directory.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Output directory; defaults to the report's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Pair comparisons per real volume.
    #[arg(long, default_value_t = 100)]
    pub pairs_per_volume: usize,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub path: PathBuf,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn parse_extents(text: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| usage(format!("bad extent list `{text}`"))))
        .collect::<Result<_>>()?;
    match parts[..] {
        [e] => Ok([e; 3]),
        [a, b, c] => Ok([a, b, c]),
        _ => Err(usage(format!("expected 1 or 3 extents, got `{text}`"))),
    }
}

fn parse_flip(text: &str) -> Result<[bool; 3]> {
    let mut f = [false; 3];
    for c in text.chars().filter(|c| !matches!(c, ',' | ' ')) {
        let axis = "xyz".find(c).ok_or_else(|| usage(format!("flip axes are x, y, z, got `{c}`")))?;
        f[axis] = true;
    }
    Ok(f)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn nifti_name(stem: &str, i: usize, gzip: bool) -> String {
    format!("{stem}_{i:03}.nii{}", if gzip { ".gz" } else { "" })
}

fn phantom(a: &PhantomArgs, m: &mut RunManifest) -> Result<()> {
    let dims = parse_extents(&a.shape)?;
    create_dir(&a.out)?;
    for i in 0..a.count {
        let grid = generate_phantom(a.seed.wrapping_add(i as u64), dims, a.structures)?;
        let path = a.out.join(nifti_name("phantom", i, a.gzip));
        write_nifti(&Volume::new(grid), &path, None)?;
        m.outputs.push(path);
    }
    m.config = vec![
        ("count".into(), a.count.to_string()),
        ("shape".into(), format!("{},{},{}", dims[0], dims[1], dims[2])),
        ("structures".into(), a.structures.to_string()),
    ];
    log::info!("wrote {} phantoms to {}", a.count, a.out.display());
    Ok(())
}

fn preprocess_cmd(a: &PreprocessArgs, m: &mut RunManifest) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let volumes: Vec<Volume> = data.iter().map(|(_, v)| v.clone()).collect();
    let target = match &a.target {
        Some(t) => parse_extents(t)?,
        None => [max_extent(&volumes); 3],
    };
    let config = Preprocessing {
        target,
        flip: parse_flip(&a.flip)?,
    };
    create_dir(&a.out)?;
    for (path, v) in &data {
        let p = preprocess(&v.grid, &config)?;
        let out = a.out.join(path.file_name().expect("listed files have names"));
        let mut header = v.derived_header();
        header.set_dims(target);
        let written = Volume {
            grid: p.grid,
            header,
            extension: v.extension.clone(),
        };
        write_nifti(&written, &out, None)?;
        m.inputs.push(path.clone());
        m.outputs.push(out);
    }
    m.config = vec![
        ("target".into(), format!("{},{},{}", target[0], target[1], target[2])),
        ("flip".into(), a.flip.clone()),
    ];
    Ok(())
}

/// Defaults, then the configuration file, then flags.
pub fn resolve_train_config(a: &TrainArgs, data_extent: usize) -> Result<TrainingConfig> {
    let mut kv: KeyValues = Vec::new();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        kv.extend(parse_key_values(&text)?);
    }
    let mut flag = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.push((k.to_string(), v));
        }
    };
    flag("preset", a.preset.clone());
    flag("loss", a.loss.clone());
    flag("iterations", a.iters.map(|v| v.to_string()));
    flag("batch_size", a.batch.map(|v| v.to_string()));
    flag("seed", a.seed.map(|v| v.to_string()));
    flag("lr", a.lr.map(|v| v.to_string()));
    flag("width", a.width.map(|v| v.to_string()));
    flag("volume", a.volume.clone());
    flag("latent_dim", a.latent.map(|v| v.to_string()));
    flag("checkpoint_interval", a.checkpoint_interval.map(|v| v.to_string()));
    flag("augmentation", a.augmentation.clone());
    for s in &a.set {
        let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        kv.push((k.trim().to_string(), v.trim().to_string()));
    }
    let has = |k: &str| kv.iter().any(|(key, _)| key == k);
    let (has_volume, has_width) = (has("volume"), has("width"));
    let mut config = TrainingConfig::for_preset(Preset::SigmaRat2);
    apply_all(&mut config, &kv)?;
    if !has_volume {
        config.volume = [data_extent; 3];
    }
    if !has_width {
        config.width = if config.volume.iter().any(|&e| e < 64) { 0.125 } else { 1.0 };
    }
    config.validate()?;
    Ok(config)
}

fn train(a: &TrainArgs, m: &mut RunManifest) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let volumes: Vec<Volume> = data.iter().map(|(_, v)| v.clone()).collect();
    let config = resolve_train_config(a, max_extent(&volumes))?;
    let grids = model_grids(&volumes, &Preprocessing {
        target: grid_extents(config.volume),
        flip: [false; 3],
    })?;
    m.seed = config.seed;
    m.config = to_key_values(&config);
    m.inputs = data.into_iter().map(|(p, _)| p).collect();
    let options = RunOptions {
        out_dir: a.out.clone(),
        resume: a.resume.clone(),
        log_every: a.log_every,
    };
    let outcome = run_training(&grids, config, &options)?;
    m.outputs = vec![outcome.loss_log, outcome.final_checkpoint];
    Ok(())
}

fn generate(a: &GenerateArgs, m: &mut RunManifest) -> Result<()> {
    let ck = load_checkpoint(&a.model)?;
    let mut trainer = ck.trainer::<f32>()?;
    let reference = a.reference.as_ref().map(read_nifti).transpose()?;
    let flip = parse_flip(&a.flip)?;
    create_dir(&a.out)?;
    let mut stream = SeedStream::new(a.seed);
    let grids = generate_volumes(&mut trainer.bundle.generator, a.count, 8, &mut stream)?;
    for (i, g) in grids.iter().enumerate() {
        let path = a.out.join(nifti_name("generated", i, false));
        let volume = match &reference {
            Some(r) => {
                let v = postprocess_generated(g, r, flip)?;
                write_nifti(&v, &path, Some(r))?;
                v
            }
            None => {
                let v = Volume::new(g.clone());
                write_nifti(&v, &path, None)?;
                v
            }
        };
        m.outputs.push(path);
        if a.montage {
            let path = a.out.join(format!("generated_{i:03}.pgm"));
            write_montage(&volume.grid, volume.grid.range(), &path)?;
            m.outputs.push(path);
        }
    }
    m.inputs.push(a.model.clone());
    m.inputs.extend(a.reference.clone());
    m.config = vec![
        ("count".into(), a.count.to_string()),
        ("flip".into(), a.flip.clone()),
        ("montage".into(), a.montage.to_string()),
    ];
    Ok(())
}

fn evaluate(a: &EvaluateArgs, m: &mut RunManifest) -> Result<PathBuf> {
    let ck = load_checkpoint(&a.model)?;
    let mut trainer = ck.trainer::<f32>()?;
    let data = load_dataset(&a.real)?;
    let volumes: Vec<Volume> = data.iter().map(|(_, v)| v.clone()).collect();
    let config = Preprocessing {
        target: grid_extents(trainer.config.volume),
        flip: [false; 3],
    };
    let real = model_grids(&volumes, &config)?;
    let min_extent = *trainer.config.volume.iter().min().expect("three extents");
    let mut protocol = ProtocolConfig::scaled(real.len(), min_extent, a.seed);
    protocol.pair_comparisons = a.pairs_per_volume * real.len();
    protocol.mmd_trials = protocol.pair_comparisons;
    if real.len() < protocol.ms_ssim_batch {
        log::warn!("{} real volumes is fewer than the MS-SSIM batch of 8; using batches of {}", real.len(), real.len());
        protocol.ms_ssim_batch = real.len().max(2);
    }
    let report = evaluate_model(&mut trainer.bundle, &real, &protocol)?;
    let report_path = a.report.clone().unwrap_or_else(|| a.out.clone().unwrap_or_default().join("report.csv"));
    if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let model = ck.preset().name();
    write_report(&report_path, model, &report)?;
    print!("{}", report_table(model, &report));
    m.inputs.push(a.model.clone());
    m.inputs.extend(data.into_iter().map(|(p, _)| p));
    m.outputs.push(report_path.clone());
    m.config = vec![
        ("pair_comparisons".into(), protocol.pair_comparisons.to_string()),
        ("mmd_trials".into(), protocol.mmd_trials.to_string()),
        ("ms_ssim_trials".into(), protocol.ms_ssim_trials.to_string()),
        ("ms_ssim_batch".into(), protocol.ms_ssim_batch.to_string()),
    ];
    Ok(report_path)
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let ck = load_checkpoint(&a.path)?;
    println!("preset     {}", ck.preset().name());
    println!("iteration  {}", ck.iteration);
    println!("parameters {}", ck.parameter_count());
    println!("tensors    {}", ck.tensors.len());
    for (k, v) in to_key_values(&ck.config) {
        println!("  {k} = {v}");
    }
    for (name, values) in &ck.tensors {
        println!("  {name} [{}]", values.len());
    }
    Ok(())
}

/// Runs a parsed command; every command except `inspect-checkpoint` writes
/// a manifest into its output directory.
pub fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    let name = match &cli.command {
        Command::Phantom(_) => "phantom",
        Command::Preprocess(_) => "preprocess",
        Command::Train(_) => "train",
        Command::Generate(_) => "generate",
        Command::Evaluate(_) => "evaluate",
        Command::InspectCheckpoint(_) => "inspect-checkpoint",
    };
    let seed = match &cli.command {
        Command::Phantom(a) => a.seed,
        Command::Generate(a) => a.seed,
        Command::Evaluate(a) => a.seed,
        _ => 0,
    };
    let mut m = RunManifest::new(name, argv, seed);
    let dir = match &cli.command {
        Command::Phantom(a) => {
            phantom(a, &mut m)?;
            a.out.clone()
        }
        Command::Preprocess(a) => {
            preprocess_cmd(a, &mut m)?;
            a.out.clone()
        }
        Command::Train(a) => {
            train(a, &mut m)?;
            a.out.clone()
        }
        Command::Generate(a) => {
            generate(a, &mut m)?;
            a.out.clone()
        }
        Command::Evaluate(a) => {
            let report = evaluate(a, &mut m)?;
            a.out.clone().unwrap_or_else(|| report.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        Command::InspectCheckpoint(a) => return inspect(a),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    m.finish(dir)?;
    Ok(())
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit status.
pub fn dispatch<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
