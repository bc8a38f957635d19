//! `actionwords` command-line interface.
//!
//! Options may also come from a `--config` file of `key = value` lines
//! (`#` starts a comment). Keys are long flag names; `true`/`false` toggle
//! switches. Flags given on the command line win over the file.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array2, Axis};

use crate::codebook::{kmeans_fit, Codebook, KMeansConfig};
use crate::encoding::{
    default_beta, direct_assign, hard_assign, soft_assign, EmbeddingTable, SaConfig, WordRegistry, WordSequence,
};
use crate::error::{Error, ErrorKind, Result};
use crate::features::{
    estimate_ratio, fuse, pca_fit, FeatureSequence, FlowStats, FusionConfig, RatioMode, Stream,
};
use crate::io;
use crate::models::{
    build_clstm, build_tcnn, generate_synthetic_dataset, predict, prediction_curve, prefix, recognition_accuracy,
    render_features, train, Classifier, ClstmConfig, Example, SyntheticConfig, TcnnConfig, TrainConfig,
};
use crate::nn::Real;
use crate::report::{Report, ReportFormat};
use crate::seed::derive_seed;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "actionwords", version, about = "Videos as sentences of ActionWords")]
#[command(args_override_self = true)]
struct Cli {
    /// `key = value` option file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed. Every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a feature manifest and rewrite it in canonical form.
    Ingest(IngestArgs),
    /// Fit PCA on every frame of a feature set.
    Pca(PcaArgs),
    /// Fuse temporal and spatial features with a data ratio.
    Fuse(FuseArgs),
    /// Estimate the data ratio from per-frame flow averages.
    Ratio(RatioArgs),
    /// Build a k-means codebook from training features.
    Codebook(CodebookArgs),
    /// Turn feature sets into word sentences and an embedding table.
    Encode(EncodeArgs),
    /// Train a classifier on an encoded dataset.
    Train(TrainArgs),
    /// Recognition accuracy and, optionally, the early-prediction curve.
    Eval(EvalArgs),
    /// Per-video predictions as CSV.
    Predict(PredictArgs),
    /// Generate the synthetic order-sensitive dataset.
    Synth(SynthArgs),
    /// Convert a JSON report to CSV or back.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "features")]
    stem: String,
}

#[derive(Args, Debug)]
struct PcaArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FuseArgs {
    #[arg(long)]
    temporal: PathBuf,
    #[arg(long)]
    spatial: PathBuf,
    #[arg(long)]
    pca_temporal: PathBuf,
    #[arg(long)]
    pca_spatial: PathBuf,
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "fused")]
    stem: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RatioModeArg {
    MuUnder,
    HalfMuUnder,
}

#[derive(Args, Debug)]
struct RatioArgs {
    /// Text file with one per-frame flow average per line.
    #[arg(long)]
    flow: PathBuf,
    #[arg(long, value_enum, default_value = "mu-under")]
    mode: RatioModeArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct CodebookArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EncodeMode {
    Ha,
    Sa,
    Da,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Codeword,
    Random,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ha")]
    mode: EncodeMode,
    /// Required for `ha` and `sa`.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Neighbours for soft assignment.
    #[arg(long, default_value_t = 5)]
    knn: usize,
    /// Soft-assignment kernel sharpness; defaults to 1 / (2 * distortion).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value = "codeword")]
    init: InitArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Tcnn,
    Clstm,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory with `train.jsonl`, optional `test.jsonl` and `table.bin`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "tcnn")]
    model: ModelArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Sentence length; defaults to the longest training sentence.
    #[arg(long)]
    l_max: Option<usize>,
    /// Comma-separated convolution widths (T-CNN) or a single width (C-LSTM).
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// Filters per convolution; one value applies to every width.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<usize>>,
    /// Dense hidden size (T-CNN) or the two LSTM sizes (C-LSTM).
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Dropout rates: two for the T-CNN, one for the C-LSTM.
    #[arg(long, value_delimiter = ',')]
    dropout: Option<Vec<f64>>,
    /// Pool (or recur) only over windows that touch a real word.
    #[arg(long)]
    masked: bool,
    #[arg(long)]
    freeze_embeddings: bool,
    /// Embedding width when the dataset has no `table.bin`.
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    /// Report validation accuracy on `test.jsonl` after every epoch.
    #[arg(long)]
    validate: bool,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Add wall-clock seconds to the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint file or a training output directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Also compute accuracy at 10%, 20%, ..., 100% of each sentence.
    #[arg(long)]
    curve: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Observe only the first `tenths / 10` of each sentence.
    #[arg(long, default_value_t = 10)]
    tenths: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    vocab: usize,
    #[arg(long, default_value_t = 32.0)]
    mean_len: f64,
    #[arg(long, default_value_t = 200)]
    train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    /// Probability of a uniform jump instead of the class cycle step.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Dimension of the rendered frame features.
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    feature_noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

/// Runs the CLI and returns the process exit code. Errors are printed to
/// stderr as one JSON line `{"error": ..., "message": ...}`.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let argv = match with_config_file(argv) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_line("Usage", &e.to_string()));
            return EXIT_USAGE;
        }
    };
    if cli.threads == 0 {
        return fail(&Error::BadConfig("--threads must be at least 1".into()));
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => return fail(&Error::BadConfig(e.to_string())),
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => fail(&e),
    }
}

fn error_line(name: &str, message: &str) -> String {
    serde_json::json!({ "error": name, "message": message.trim() }).to_string()
}

fn fail(e: &Error) -> i32 {
    eprintln!("{}", error_line(e.name(), &e.to_string()));
    match e.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

/// Splices options from `--config <file>` in front of the command-line
/// options so that later (command-line) occurrences override them.
fn with_config_file(argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else if a == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut extra = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::BadConfig(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match value {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => {
                extra.push(format!("--{key}"));
                extra.push(value.to_string());
            }
        }
    }
    // The subcommand is the first argument that is not a global option.
    let mut at = 1;
    while at < argv.len() {
        match argv[at].as_str() {
            "--config" | "--seed" | "--threads" => at += 2,
            a if a.starts_with("--") => at += 1,
            _ => break,
        }
    }
    let mut out = argv[..(at + 1).min(argv.len())].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[(at + 1).min(argv.len())..]);
    Ok(out)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Pca(a) => pca(a),
        Command::Fuse(a) => fuse_cmd(a),
        Command::Ratio(a) => ratio(a),
        Command::Codebook(a) => codebook(a, seed),
        Command::Encode(a) => encode(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Synth(a) => synth(a, seed),
        Command::Report(a) => report_cmd(a),
    }
}

fn emit(report: &Report, out: &OutputArgs) -> Result<()> {
    let text = report.render(out.format.into())?;
    match &out.out {
        Some(path) => io::write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn stack_frames(seqs: &[FeatureSequence]) -> Result<Array2<f64>> {
    let dim = seqs.first().ok_or(Error::EmptyDataset)?.dim();
    let total: usize = seqs.iter().map(FeatureSequence::len).sum();
    let mut out = Array2::zeros((total, dim));
    let mut row = 0;
    for s in seqs {
        if s.dim() != dim {
            return Err(Error::InconsistentDim {
                expected: dim,
                got: s.dim(),
            });
        }
        out.slice_mut(ndarray::s![row..row + s.len(), ..])
            .assign(&s.frames().mapv(f64::from));
        row += s.len();
    }
    Ok(out)
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let seqs = io::read_features(&a.manifest)?;
    stack_frames(&seqs)?;
    io::write_features(&a.out, &a.stem, &seqs)?;
    Ok(())
}

fn pca(a: &PcaArgs) -> Result<()> {
    let frames = stack_frames(&io::read_features(&a.features)?)?;
    io::save_pca(&a.out, &pca_fit(frames.view(), a.dim)?)
}

fn fuse_cmd(a: &FuseArgs) -> Result<()> {
    let cfg = FusionConfig::new(a.ratio, a.dim)?;
    let pca_t = io::load_pca(&a.pca_temporal)?;
    let pca_s = io::load_pca(&a.pca_spatial)?;
    let spatial: HashMap<String, FeatureSequence> = io::read_features(&a.spatial)?
        .into_iter()
        .map(|s| (s.video_id.clone(), s))
        .collect();
    let mut fused = Vec::new();
    for t in io::read_features(&a.temporal)? {
        let s = spatial
            .get(&t.video_id)
            .ok_or_else(|| Error::format("spatial manifest", format!("no entry for {}", t.video_id)))?;
        if s.len() != t.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: {} temporal frames vs {} spatial frames",
                t.video_id,
                t.len(),
                s.len()
            )));
        }
        let mut frames = Array2::zeros((t.len(), a.dim));
        for (i, mut row) in frames.axis_iter_mut(Axis(0)).enumerate() {
            let xt = t.frames().row(i).mapv(f64::from);
            let xs = s.frames().row(i).mapv(f64::from);
            let x = fuse(xt.view(), xs.view(), &cfg, &pca_t, &pca_s)?;
            row.assign(&x.mapv(|v| v as f32));
        }
        fused.push(FeatureSequence::new(t.video_id.clone(), t.label, Stream::Fused, frames)?);
    }
    io::write_features(&a.out, &a.stem, &fused)?;
    Ok(())
}

fn ratio(a: &RatioArgs) -> Result<()> {
    let started = Instant::now();
    let stats = FlowStats::from_frames(io::read_flow_stats(&a.flow)?)?;
    let mode = match a.mode {
        RatioModeArg::MuUnder => RatioMode::MuUnder,
        RatioModeArg::HalfMuUnder => RatioMode::HalfMuUnder,
    };
    let mut report = Report::new();
    report.metrics.insert("frames".into(), stats.len() as f64);
    report.metrics.insert("mu_all".into(), stats.mu_all());
    report.metrics.insert("mu_under".into(), stats.mu_under());
    report.metrics.insert("threshold".into(), mode.threshold(&stats));
    report.metrics.insert("ratio".into(), estimate_ratio(&stats, mode)?);
    report.config.insert("mode".into(), a.mode.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
    if a.output.timing {
        report.metrics.insert("wall_clock_seconds".into(), started.elapsed().as_secs_f64());
    }
    emit(&report, &a.output)
}

fn codebook(a: &CodebookArgs, seed: u64) -> Result<()> {
    let frames = stack_frames(&io::read_features(&a.features)?)?;
    let mut cfg = KMeansConfig::new(a.k, derive_seed(seed, "kmeans"));
    cfg.max_iter = a.max_iter;
    io::save_codebook(&a.out, &kmeans_fit(frames.view(), &cfg)?)
}

fn encode(a: &EncodeArgs, seed: u64) -> Result<()> {
    let train_feats = io::read_features(&a.train)?;
    let test_feats = match &a.test {
        Some(p) => io::read_features(p)?,
        None => Vec::new(),
    };
    let cb: Option<Codebook> = a.codebook.as_deref().map(io::load_codebook).transpose()?;
    let need_cb = || cb.as_ref().ok_or_else(|| Error::BadConfig("this mode needs --codebook".into()));
    let sa = match a.mode {
        EncodeMode::Sa => {
            let c = need_cb()?;
            Some(SaConfig::new(a.knn, a.beta.unwrap_or_else(|| default_beta(c)))?)
        }
        _ => None,
    };
    if a.mode == EncodeMode::Ha {
        need_cb()?;
    }

    let mut registry = WordRegistry::new();
    let mut encode_set = |feats: &[FeatureSequence]| -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(feats.len());
        for f in feats {
            let mut ids = Vec::with_capacity(f.len());
            for row in f.frames().rows() {
                let x = row.mapv(f64::from);
                let assignment = match a.mode {
                    EncodeMode::Ha => hard_assign(x.view(), need_cb()?)?,
                    EncodeMode::Sa => soft_assign(x.view(), need_cb()?, sa.as_ref().expect("set above"), &mut registry)?,
                    EncodeMode::Da => direct_assign(x.view(), &mut registry)?,
                };
                ids.push(assignment.word_id);
            }
            out.push(Example {
                video_id: f.video_id.clone(),
                label: f.label,
                words: WordSequence::new(ids),
            });
        }
        Ok(out)
    };
    let train_set = encode_set(&train_feats)?;
    let test_set = encode_set(&test_feats)?;

    let table = match (a.mode, a.init) {
        (EncodeMode::Ha, InitArg::Codeword) => EmbeddingTable::<f32>::from_codebook(need_cb()?),
        (_, InitArg::Codeword) => EmbeddingTable::<f32>::from_registry(&registry)?,
        (mode, InitArg::Random) => {
            let (vocab, dim) = match mode {
                EncodeMode::Ha => (need_cb()?.k() + 1, need_cb()?.dim()),
                _ => (registry.len() + 1, train_feats.first().ok_or(Error::EmptyDataset)?.dim()),
            };
            EmbeddingTable::random(vocab, dim, derive_seed(seed, "embeddings"))?
        }
    };
    io::write_examples(&a.out.join("train.jsonl"), &train_set)?;
    if a.test.is_some() {
        io::write_examples(&a.out.join("test.jsonl"), &test_set)?;
    }
    io::save_table(&a.out.join("table.bin"), &table)
}

fn load_split(data: &Path, split: &str) -> Result<Vec<Example>> {
    io::read_examples(&data.join(format!("{split}.jsonl")))
}

fn load_or_make_table(data: &Path, train_set: &[Example], dim: usize, seed: u64) -> Result<EmbeddingTable<f32>> {
    let path = data.join("table.bin");
    if path.exists() {
        return io::load_table(&path);
    }
    let vocab = train_set
        .iter()
        .flat_map(|e| e.words.ids.iter().copied())
        .max()
        .unwrap_or(0)
        + 1;
    let vocab = match fs::read_to_string(data.join("synth.json")) {
        Ok(text) => {
            let cfg: SyntheticConfig = serde_json::from_str(&text).map_err(|e| Error::format("synth.json", e))?;
            vocab.max(cfg.vocab + 1)
        }
        Err(_) => vocab,
    };
    EmbeddingTable::random(vocab, dim, derive_seed(seed, "embeddings"))
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    let train_set = load_split(&a.data, "train")?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let val_set = if a.validate { Some(load_split(&a.data, "test")?) } else { None };
    let table = load_or_make_table(&a.data, &train_set, a.embed_dim, seed)?;
    let classes = train_set.iter().map(|e| e.label).max().unwrap_or(0) + 1;
    let classes = classes.max(val_set.iter().flatten().map(|e| e.label + 1).max().unwrap_or(0));
    let l_max = a
        .l_max
        .unwrap_or_else(|| train_set.iter().map(|e| e.words.len()).max().unwrap_or(1));
    let init_seed = derive_seed(seed, "init");
    let tcfg = TrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: derive_seed(seed, "train"),
        train_embeddings: !a.freeze_embeddings,
    };

    let (model, history) = match a.model {
        ModelArg::Tcnn => {
            let mut cfg = TcnnConfig::new(l_max);
            if let Some(w) = &a.widths {
                cfg.widths = w.clone();
            }
            cfg.filters = match &a.filters {
                Some(f) if f.len() == 1 => vec![f[0]; cfg.widths.len()],
                Some(f) => f.clone(),
                None => vec![200; cfg.widths.len()],
            };
            if let Some(h) = &a.hidden {
                cfg.hidden = single(h, "--hidden")?;
            }
            if let Some(d) = &a.dropout {
                let [r1, r2] = pair(d, "--dropout")?;
                cfg.dropout_concat = r1;
                cfg.dropout_hidden = r2;
            }
            cfg.masked_pool = a.masked;
            let mut m = build_tcnn(classes, table, cfg, init_seed)?;
            let h = train(&mut m, &train_set, val_set.as_deref(), &tcfg)?;
            (io::SavedModel::Tcnn(m), h)
        }
        ModelArg::Clstm => {
            let mut cfg = ClstmConfig::new(l_max);
            if let Some(w) = &a.widths {
                cfg.width = single(w, "--widths")?;
            }
            if let Some(f) = &a.filters {
                cfg.filters = single(f, "--filters")?;
            }
            if let Some(h) = &a.hidden {
                cfg.hidden = pair(h, "--hidden")?;
            }
            if let Some(d) = &a.dropout {
                cfg.dropout = single(d, "--dropout")?;
            }
            cfg.masked = a.masked;
            let mut m = build_clstm(classes, table, cfg, init_seed)?;
            let h = train(&mut m, &train_set, val_set.as_deref(), &tcfg)?;
            (io::SavedModel::Clstm(m), h)
        }
    };

    io::save_checkpoint(&a.out.join("model.ckpt"), &model, seed)?;
    io::write_history(&a.out.join("history.csv"), &history)?;
    let mut report = Report::new();
    if let Some(last) = history.last() {
        report.metrics.insert("train_loss".into(), last.train_loss);
        report.metrics.insert("train_accuracy".into(), last.train_acc);
        if let Some(v) = last.val_acc {
            report.metrics.insert("val_accuracy".into(), v);
        }
    }
    report.metrics.insert("epochs".into(), history.len() as f64);
    report.config = BTreeMap::from([
        ("model".into(), format!("{:?}", a.model).to_lowercase()),
        ("classes".into(), classes.to_string()),
        ("l_max".into(), l_max.to_string()),
        ("batch_size".into(), a.batch_size.to_string()),
        ("lr".into(), a.lr.to_string()),
        ("seed".into(), seed.to_string()),
        ("train_embeddings".into(), (!a.freeze_embeddings).to_string()),
    ]);
    io::write_atomic(&a.out.join("report.json"), report.to_json()?.as_bytes())
}

fn single<T: Copy>(v: &[T], flag: &str) -> Result<T> {
    match v {
        [x] => Ok(*x),
        _ => Err(Error::BadConfig(format!("{flag} takes one value"))),
    }
}

fn pair<T: Copy>(v: &[T], flag: &str) -> Result<[T; 2]> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::BadConfig(format!("{flag} takes two comma-separated values"))),
    }
}

fn load_model(path: &Path) -> Result<io::SavedModel> {
    let file = if path.is_dir() { path.join("model.ckpt") } else { path.to_path_buf() };
    Ok(io::load_checkpoint(&file)?.0)
}

fn evaluate<T: Real, M: Classifier<T>>(model: &M, set: &[Example], curve: bool, report: &mut Report) -> Result<()> {
    report.metrics.insert("accuracy".into(), recognition_accuracy(model, set)?);
    if curve {
        report.curve = Some(prediction_curve(model, set)?);
    }
    report.config.insert("l_max".into(), model.l_max().to_string());
    report.config.insert("classes".into(), model.num_classes().to_string());
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let model = load_model(&a.model)?;
    let set = load_split(&a.data, &a.split)?;
    let mut report = Report::new();
    report.metrics.insert("samples".into(), set.len() as f64);
    match &model {
        io::SavedModel::Tcnn(m) => evaluate(m, &set, a.curve, &mut report)?,
        io::SavedModel::Clstm(m) => evaluate(m, &set, a.curve, &mut report)?,
    }
    let arch = match model {
        io::SavedModel::Tcnn(_) => "tcnn",
        io::SavedModel::Clstm(_) => "clstm",
    };
    report.config.insert("model".into(), arch.into());
    report.config.insert("split".into(), a.split.clone());
    if a.output.timing {
        report.metrics.insert("wall_clock_seconds".into(), started.elapsed().as_secs_f64());
    }
    emit(&report, &a.output)
}

fn predictions<T: Real, M: Classifier<T>>(model: &M, set: &[Example], tenths: usize) -> Result<Vec<(usize, f64)>> {
    set.iter()
        .map(|ex| {
            let seq = prefix(&ex.words, tenths, model.l_max())?;
            let (label, probs) = predict(model, &seq)?;
            Ok((label, probs[label].to_f64()))
        })
        .collect()
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let set = load_split(&a.data, &a.split)?;
    let preds = match &model {
        io::SavedModel::Tcnn(m) => predictions(m, &set, a.tenths)?,
        io::SavedModel::Clstm(m) => predictions(m, &set, a.tenths)?,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format("predictions", e);
    w.write_record(["video_id", "label", "predicted", "probability"]).map_err(csv_err)?;
    for (ex, (label, p)) in set.iter().zip(preds) {
        w.write_record([ex.video_id.clone(), ex.label.to_string(), label.to_string(), p.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("predictions", e))?;
    match &a.out {
        Some(p) => io::write_atomic(p, &bytes),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let cfg = SyntheticConfig {
        classes: a.classes,
        vocab: a.vocab,
        mean_len: a.mean_len,
        train_per_class: a.train_per_class,
        test_per_class: a.test_per_class,
        noise: a.noise,
        seed: derive_seed(seed, "synth"),
        ..SyntheticConfig::default()
    };
    let (train_set, test_set) = generate_synthetic_dataset(&cfg)?;
    // One render call so both splits share the word prototypes.
    let all: Vec<Example> = train_set.iter().chain(&test_set).cloned().collect();
    let feats = render_features(&all, a.vocab, a.feature_dim, a.feature_noise, derive_seed(seed, "features"))?;
    let (train_feats, test_feats) = feats.split_at(train_set.len());

    io::write_examples(&a.out.join("train.jsonl"), &train_set)?;
    io::write_examples(&a.out.join("test.jsonl"), &test_set)?;
    io::write_features(&a.out.join("features"), "train", train_feats)?;
    io::write_features(&a.out.join("features"), "test", test_feats)?;
    let meta = serde_json::to_string_pretty(&cfg).map_err(|e| Error::format("synth.json", e))?;
    io::write_atomic(&a.out.join("synth.json"), format!("{meta}\n").as_bytes())
}

fn report_cmd(a: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let report = if text.trim_start().starts_with('{') {
        Report::from_json(&text)?
    } else {
        Report::from_csv(&text)?
    };
    emit(&report, &a.output)
}
