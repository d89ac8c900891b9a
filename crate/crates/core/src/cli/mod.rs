//! The `naimishnet` command line.
//!
//! Exit codes: 0 success, 1 a run that failed part-way (for example one of the
//! keypoint models), 2 usage errors, 3 unreadable or malformed data, 4 failed
//! self-checks.

mod config;
mod manifest;

pub use config::Settings;
pub use manifest::{InputDigest, RunManifest, Timings};

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{
    hflip_augment, keypoint_counts, parse_id_lookup, parse_test_csv, parse_training_csv, FkpDataset, KeypointSchema,
};
use crate::error::Error;
use crate::eval::{predict, write_submission, PredictionSet};
use crate::nn::{Conv2d, Dense, Elu, Flatten, Layer, LayerRow, MaxPool2d, Model, NetConfig, ELU_ALPHA, TABLE_I};
use crate::optim::{check_layer, grad_check_sampled, GradCheckReport};
use crate::tensor::{uniform_init, Rng, Tensor};
use crate::train::{load_checkpoint, train_all, train_model, write_outcome, Precision, TrainConfig};
use manifest::Clock;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_SELF_CHECK: i32 = 4;

const NAIMISHNET_PARAMS: usize = 7_488_962;
const GRADCHECK_STEP: f64 = 1e-5;
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    SelfCheck(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::SelfCheck(_) => EXIT_SELF_CHECK,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(e) => write!(f, "data: {e}"),
            CliError::SelfCheck(m) => write!(f, "self-check failed: {m}"),
            CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Parse { .. } | Error::Header(_) | Error::Checkpoint(_) => CliError::Data(e),
            other => CliError::Failed(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "naimishnet", version, about = "NaimishNet facial keypoint detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the layer table and parameter count, checked against the reference.
    Inspect {
        #[arg(long)]
        json: bool,
        /// Build a deliberately wrong network (exercises the self-check).
        #[arg(long, hide = true)]
        tamper: bool,
    },
    /// Compare backward passes with central finite differences.
    Gradcheck {
        #[arg(long, value_enum)]
        layer: Option<GradLayer>,
        #[arg(long, default_value_t = 100)]
        seed: u64,
        /// Negate the end-to-end model's parameter gradients.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Non-missing rows per keypoint after augmentation.
    Counts {
        #[command(flatten)]
        data: DataFlags,
    },
    /// Train the model for one keypoint.
    Train {
        #[command(flatten)]
        flags: TrainFlags,
        /// Keypoint name or index.
        #[arg(long)]
        keypoint: Option<String>,
    },
    /// Train all fifteen keypoint models.
    TrainAll {
        #[command(flatten)]
        flags: TrainFlags,
        /// Models trained concurrently.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Predict keypoints for test images.
    Predict {
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keypoints to predict (name or index); all with a checkpoint if omitted.
        #[arg(long)]
        keypoint: Vec<String>,
    },
    /// Write a Kaggle submission from checkpoints and the lookup table.
    Submit {
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        lookup: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Clamp locations to [0, 95].
        #[arg(long)]
        clip: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GradLayer {
    Conv2d,
    Maxpool2d,
    Elu,
    Dense,
    Flatten,
    Model,
}

#[derive(Debug, Args)]
struct DataFlags {
    /// Kaggle training CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Keep only the first N rows, before augmentation.
    #[arg(long)]
    limit_rows: Option<usize>,
    /// Skip horizontal-flip augmentation.
    #[arg(long)]
    no_augment: bool,
    /// File of `key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[command(flatten)]
    data: DataFlags,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum epochs [default: 300].
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size [default: 128].
    #[arg(long)]
    batch: Option<usize>,
    /// Epochs without improvement before stopping [default: 30, capped below --epochs].
    #[arg(long)]
    patience: Option<usize>,
    /// Output directory [default: runs].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train in 64-bit floats.
    #[arg(long)]
    f64: bool,
}

const DATA_KEYS: &[&str] = &["data", "limit-rows", "no-augment"];
const TRAIN_KEYS: &[&str] = &[
    "data",
    "limit-rows",
    "no-augment",
    "seed",
    "epochs",
    "batch",
    "patience",
    "out",
    "f64",
    "keypoint",
    "jobs",
];

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Inspect { json, tamper } => cmd_inspect(json, tamper, out),
        Command::Gradcheck {
            layer,
            seed,
            inject_fault,
        } => cmd_gradcheck(layer, seed, inject_fault, out),
        Command::Counts { data } => cmd_counts(data, out),
        Command::Train { flags, keypoint } => cmd_train(flags, keypoint, out),
        Command::TrainAll { flags, jobs } => cmd_train_all(flags, jobs, out, err),
        Command::Predict {
            checkpoints,
            test,
            out: path,
            keypoint,
        } => cmd_predict(&checkpoints, &test, &path, &keypoint, out),
        Command::Submit {
            checkpoints,
            test,
            lookup,
            out: path,
            clip,
        } => cmd_submit(&checkpoints, &test, &lookup, &path, clip, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Failed(format!("writing output: {e}")))
}

/// `1234567` as `1,234,567`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn shape_text(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(ToString::to_string).collect();
    format!("({})", dims.join(", "))
}

#[derive(Serialize)]
struct InspectReport {
    layers: Vec<LayerRow>,
    total_params: usize,
    matches_reference: bool,
}

/// Layer table of the built network and whether it matches the reference.
pub fn inspect_report(tamper: bool) -> crate::Result<(Vec<LayerRow>, usize, bool)> {
    let mut config = NetConfig::naimishnet();
    if tamper {
        config.dense_units[0] = 999;
    }
    let model = Model::<f32>::build(config, &mut Rng::new(0))?;
    let rows = model.layer_table()?;
    let total = model.count_params();
    let matches = total == NAIMISHNET_PARAMS
        && rows.len() == TABLE_I.len()
        && rows
            .iter()
            .zip(TABLE_I)
            .all(|(row, (name, shape))| row.name == name && row.shape == shape);
    Ok((rows, total, matches))
}

fn cmd_inspect(json: bool, tamper: bool, out: &mut dyn Write) -> CliResult<()> {
    let (layers, total_params, matches_reference) = inspect_report(tamper)?;
    let text = if json {
        let report = InspectReport {
            layers,
            total_params,
            matches_reference,
        };
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        let mut t = format!("{:<16} {:<16} {:>10}\n", "Layer", "Output shape", "Params");
        for row in &layers {
            let name = crate::nn::subscript_name(&row.name);
            let _ = writeln!(
                t,
                "{name:<16} {:<16} {:>10}",
                shape_text(&row.shape),
                group_thousands(row.params)
            );
        }
        let _ = writeln!(t, "Total trainable parameters: {}", group_thousands(total_params));
        t
    };
    emit(out, &text)?;
    if !matches_reference {
        return Err(CliError::SelfCheck(
            "layer table differs from the NaimishNet reference".into(),
        ));
    }
    Ok(())
}

fn random(shape: &[usize], rng: &mut Rng) -> crate::Result<Tensor<f64>> {
    uniform_init(shape, -1.0, 1.0, rng)
}

fn gradcheck_case(layer: GradLayer, seed: u64, inject_fault: bool) -> crate::Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let (mut layer, x) = match layer {
        GradLayer::Conv2d => {
            let conv = Conv2d::new(random(&[3, 2, 3, 3], &mut rng)?, random(&[3], &mut rng)?)?;
            (Layer::Conv2d(conv), random(&[1, 2, 5, 5], &mut rng)?)
        }
        GradLayer::Maxpool2d => (Layer::MaxPool2d(MaxPool2d::new()), random(&[1, 2, 5, 5], &mut rng)?),
        GradLayer::Elu => {
            // keep clear of the kink at zero where the derivative jumps
            let x = random(&[4, 8], &mut rng)?.map(|v| if v.abs() < 1e-3 { 0.5 } else { v });
            (Layer::Elu(Elu::new(ELU_ALPHA)), x)
        }
        GradLayer::Dense => {
            let dense = Dense::new(random(&[6, 4], &mut rng)?, random(&[4], &mut rng)?)?;
            (Layer::Dense(dense), random(&[3, 6], &mut rng)?)
        }
        GradLayer::Flatten => (Layer::Flatten(Flatten::default()), random(&[2, 2, 3, 3], &mut rng)?),
        GradLayer::Model => {
            let config = NetConfig::reduced();
            let mut model = Model::<f64>::build(config.clone(), &mut rng)?;
            model.inject_backward_fault(inject_fault);
            let x = uniform_init(&config.input_shape(2), 0.0, 1.0, &mut rng)?;
            let y = random(&[2, config.outputs], &mut rng)?;
            return grad_check_sampled(&mut model, &x, &y, GRADCHECK_STEP, None, &mut rng);
        }
    };
    check_layer(&mut layer, &x, GRADCHECK_STEP, &mut rng)
}

fn cmd_gradcheck(layer: Option<GradLayer>, seed: u64, inject_fault: bool, out: &mut dyn Write) -> CliResult<()> {
    let cases = match layer {
        Some(l) => vec![l],
        None => GradLayer::value_variants().to_vec(),
    };
    let mut failed = Vec::new();
    for case in cases {
        let name = case
            .to_possible_value()
            .expect("no skipped variants")
            .get_name()
            .to_string();
        let report = gradcheck_case(case, seed, inject_fault)?;
        let ok = report.max_relative_error < GRADCHECK_TOLERANCE;
        emit(
            out,
            &format!(
                "{name:<10} max relative error {:.3e} over {} entries  {}\n",
                report.max_relative_error,
                report.checked,
                if ok { "ok" } else { "FAIL" }
            ),
        )?;
        if !ok {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::SelfCheck(format!(
            "relative error at or above {GRADCHECK_TOLERANCE:e} in {}",
            failed.join(", ")
        )))
    }
}

/// Parses, truncates and (unless disabled) augments the training file.
fn load_training(
    settings: &mut Settings,
    flags: DataFlags,
    schema: &KeypointSchema,
) -> CliResult<(PathBuf, FkpDataset)> {
    let path: PathBuf = settings
        .require::<String>("data", flags.data.map(|p| p.display().to_string()))?
        .into();
    let mut ds = parse_training_csv(&path, schema)?;
    if let Some(n) = settings.get::<usize>("limit-rows", flags.limit_rows, None)? {
        ds = ds.head(n);
    }
    if !settings.switch("no-augment", flags.no_augment)? {
        ds = hflip_augment(&ds, schema)?;
    }
    Ok((path, ds))
}

fn counts_table(ds: &FkpDataset, schema: &KeypointSchema) -> CliResult<String> {
    let counts = keypoint_counts(ds, schema)?;
    let mut t = String::from("keypoint,rows\n");
    for (name, c) in schema.names().iter().zip(counts) {
        let _ = writeln!(t, "{name},{c}");
    }
    Ok(t)
}

fn cmd_counts(flags: DataFlags, out: &mut dyn Write) -> CliResult<()> {
    let schema = KeypointSchema::kaggle();
    let mut settings = Settings::load(flags.config.as_deref(), DATA_KEYS)?;
    let (_, ds) = load_training(&mut settings, flags, &schema)?;
    emit(out, &counts_table(&ds, &schema)?)
}

struct TrainSetup {
    settings: Settings,
    schema: KeypointSchema,
    data_path: PathBuf,
    config_path: Option<PathBuf>,
    dataset: FkpDataset,
    config: TrainConfig,
    out_dir: PathBuf,
}

fn train_setup(flags: TrainFlags) -> CliResult<TrainSetup> {
    let schema = KeypointSchema::kaggle();
    let config_path = flags.data.config.clone();
    let mut settings = Settings::load(config_path.as_deref(), TRAIN_KEYS)?;
    let seed = settings.get("seed", flags.seed, Some(42))?.unwrap_or(42);
    let max_epochs = settings.get("epochs", flags.epochs, Some(300))?.unwrap_or(300);
    let batch_size = settings.get("batch", flags.batch, Some(128))?.unwrap_or(128);
    let default_patience = 30.min(max_epochs.saturating_sub(1));
    let patience = settings
        .get("patience", flags.patience, Some(default_patience))?
        .unwrap_or(default_patience);
    let out_dir: PathBuf = settings
        .get::<String>("out", flags.out.map(|p| p.display().to_string()), Some("runs".into()))?
        .unwrap_or_default()
        .into();
    let precision = if settings.switch("f64", flags.f64)? {
        Precision::F64
    } else {
        Precision::F32
    };
    let config = TrainConfig {
        batch_size,
        max_epochs,
        patience,
        seed,
        precision,
        out_dir: Some(out_dir.clone()),
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (data_path, dataset) = load_training(&mut settings, flags.data, &schema)?;
    Ok(TrainSetup {
        settings,
        schema,
        data_path,
        config_path,
        dataset,
        config,
        out_dir,
    })
}

fn digests(paths: &[&Path]) -> CliResult<Vec<InputDigest>> {
    Ok(paths.iter().map(|p| InputDigest::of(p)).collect::<crate::Result<_>>()?)
}

fn finish_manifest(
    command: &str,
    config: std::collections::BTreeMap<String, String>,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    mut outputs: Vec<PathBuf>,
    manifest_path: PathBuf,
    clock: &Clock,
) -> CliResult<PathBuf> {
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        command: command.into(),
        config,
        seed,
        inputs,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        timings: clock.timings(),
    };
    Ok(manifest.write(&manifest_path)?)
}

fn cmd_train(flags: TrainFlags, keypoint: Option<String>, out: &mut dyn Write) -> CliResult<()> {
    let clock = Clock::start();
    let mut setup = train_setup(flags)?;
    let spec = setup.settings.require::<String>("keypoint", keypoint)?;
    let index = setup
        .schema
        .resolve_keypoint(&spec)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    setup.config.keypoint_index = index;
    let outcome = train_model(&setup.dataset, &setup.schema, &setup.config)?;
    let outputs = write_outcome(&outcome, &setup.out_dir)?;

    let mut text = outcome.history.to_csv();
    let best = outcome.best_record();
    let _ = writeln!(
        text,
        "{}: {} epochs run, best epoch {}, train RMSE {:.4} px, validation RMSE {:.4} px ({} train / {} validation rows)",
        outcome.checkpoint.keypoint,
        outcome.schedule.epochs_run,
        outcome.schedule.best_epoch,
        best.train_rmse_px,
        best.val_rmse_px,
        outcome.train_rows,
        outcome.val_rows
    );
    for p in &outputs {
        let _ = writeln!(text, "wrote {}", p.display());
    }
    let mut inputs = vec![setup.data_path.as_path()];
    inputs.extend(setup.config_path.as_deref());
    let manifest = finish_manifest(
        "train",
        setup.settings.resolved,
        Some(setup.config.seed),
        digests(&inputs)?,
        outputs,
        setup
            .out_dir
            .join(format!("{}_manifest.json", outcome.checkpoint.keypoint)),
        &clock,
    )?;
    let _ = writeln!(text, "wrote {}", manifest.display());
    emit(out, &text)
}

fn cmd_train_all(flags: TrainFlags, jobs: Option<usize>, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let clock = Clock::start();
    let mut setup = train_setup(flags)?;
    let jobs = setup.settings.get("jobs", jobs, Some(1))?.unwrap_or(1);
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let counts = counts_table(&setup.dataset, &setup.schema)?;
    emit(out, &format!("rows per keypoint after augmentation\n{counts}"))?;

    let report = train_all(&setup.dataset, &setup.schema, &setup.config, jobs);
    let mut outputs = Vec::new();
    for (_, outcome) in report.succeeded() {
        outputs.extend(write_outcome(outcome, &setup.out_dir)?);
    }
    let epochs = report.epochs_summary();
    let rmse = report.rmse_summary()?;
    for (name, text) in [("epochs_summary.csv", &epochs), ("rmse_summary.csv", &rmse)] {
        let path = setup.out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        outputs.push(path);
    }
    emit(out, &format!("\n{epochs}\n{rmse}"))?;

    let mut inputs = vec![setup.data_path.as_path()];
    inputs.extend(setup.config_path.as_deref());
    let manifest = finish_manifest(
        "train-all",
        setup.settings.resolved,
        Some(setup.config.seed),
        digests(&inputs)?,
        outputs,
        setup.out_dir.join("manifest.json"),
        &clock,
    )?;
    emit(out, &format!("wrote {}\n", manifest.display()))?;

    let failed: Vec<String> = report.failed().map(|(n, e)| format!("{n}: {e}")).collect();
    if failed.is_empty() {
        return Ok(());
    }
    for f in &failed {
        let _ = writeln!(err, "failed {f}");
    }
    Err(CliError::Failed(format!(
        "{} of 15 keypoint models failed",
        failed.len()
    )))
}

fn checkpoint_path(dir: &Path, keypoint: &str) -> PathBuf {
    dir.join(format!("{keypoint}.ckpt"))
}

/// Loads the checkpoints for `keypoints` and predicts every test image.
fn predict_keypoints(
    dir: &Path,
    test: &FkpDataset,
    keypoints: &BTreeSet<usize>,
    schema: &KeypointSchema,
) -> CliResult<(PredictionSet, Vec<PathBuf>)> {
    let mut preds = PredictionSet::new(schema, test.image_ids.clone())?;
    let mut used = Vec::new();
    for &k in keypoints {
        let name = &schema.names()[k];
        let path = checkpoint_path(dir, name);
        if !path.is_file() {
            return Err(CliError::Data(Error::Checkpoint(format!(
                "missing checkpoint for keypoint {name} ({})",
                path.display()
            ))));
        }
        let ckpt = load_checkpoint(&path)?;
        if &ckpt.keypoint != name {
            return Err(CliError::Data(Error::Checkpoint(format!(
                "{} holds keypoint {}, expected {name}",
                path.display(),
                ckpt.keypoint
            ))));
        }
        preds.insert(k, path.display().to_string(), predict(&ckpt, test)?)?;
        used.push(path);
    }
    Ok((preds, used))
}

fn cmd_predict(
    dir: &Path,
    test_path: &Path,
    out_path: &Path,
    requested: &[String],
    out: &mut dyn Write,
) -> CliResult<()> {
    let clock = Clock::start();
    let schema = KeypointSchema::kaggle();
    let keypoints: BTreeSet<usize> = if requested.is_empty() {
        (0..schema.num_keypoints())
            .filter(|&k| checkpoint_path(dir, &schema.names()[k]).is_file())
            .collect()
    } else {
        requested
            .iter()
            .map(|s| schema.resolve_keypoint(s).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<CliResult<_>>()?
    };
    if keypoints.is_empty() {
        return Err(CliError::Data(Error::Checkpoint(format!(
            "no checkpoints in {}",
            dir.display()
        ))));
    }
    let test = parse_test_csv(test_path)?;
    let (preds, used) = predict_keypoints(dir, &test, &keypoints, &schema)?;
    fs::write(out_path, preds.to_csv(&schema)).map_err(|e| Error::io(out_path, e))?;

    let mut inputs = vec![test_path];
    inputs.extend(used.iter().map(PathBuf::as_path));
    let config = [
        ("checkpoints", dir.display().to_string()),
        ("test", test_path.display().to_string()),
        ("out", out_path.display().to_string()),
        (
            "keypoint",
            keypoints
                .iter()
                .map(|&k| schema.names()[k].clone())
                .collect::<Vec<_>>()
                .join(" "),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let manifest = finish_manifest(
        "predict",
        config,
        None,
        digests(&inputs)?,
        vec![out_path.to_path_buf()],
        sibling_manifest(out_path),
        &clock,
    )?;
    emit(
        out,
        &format!(
            "predicted {} keypoint(s) for {} images\nwrote {}\nwrote {}\n",
            keypoints.len(),
            test.len(),
            out_path.display(),
            manifest.display()
        ),
    )
}

fn sibling_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn cmd_submit(
    dir: &Path,
    test_path: &Path,
    lookup_path: &Path,
    out_path: &Path,
    clip: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let clock = Clock::start();
    let schema = KeypointSchema::kaggle();
    let lookup = parse_id_lookup(lookup_path, &schema)?;
    let keypoints: BTreeSet<usize> = lookup.iter().map(|r| r.column / 2).collect();
    let test = parse_test_csv(test_path)?;
    let (preds, used) = predict_keypoints(dir, &test, &keypoints, &schema)?;
    let rows = write_submission(&lookup, &preds, out_path, clip).map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::Data(Error::InvalidArgument(m)),
        other => other.into(),
    })?;

    let mut inputs = vec![test_path, lookup_path];
    inputs.extend(used.iter().map(PathBuf::as_path));
    let config = [
        ("checkpoints", dir.display().to_string()),
        ("test", test_path.display().to_string()),
        ("lookup", lookup_path.display().to_string()),
        ("out", out_path.display().to_string()),
        ("clip", clip.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let manifest = finish_manifest(
        "submit",
        config,
        None,
        digests(&inputs)?,
        vec![out_path.to_path_buf()],
        sibling_manifest(out_path),
        &clock,
    )?;
    emit(
        out,
        &format!(
            "wrote {rows} rows to {}\nwrote {}\n",
            out_path.display(),
            manifest.display()
        ),
    )
}
