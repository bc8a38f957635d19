//! On-disk formats.
//!
//! Binary artifacts (codebooks, PCA models, embedding tables, checkpoints)
//! are one JSON header line followed by raw little-endian `f32` values.
//! Feature sets are a JSON-lines manifest next to a raw `f32` data file;
//! encoded datasets are JSON lines of `{"video_id", "label", "ids"}`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::codebook::Codebook;
use crate::encoding::{EmbeddingTable, InitMode};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, PcaModel, Stream};
use crate::models::{
    build_clstm, build_tcnn, ClstmConfig, ClstmModel, EpochStats, Example, TcnnConfig, TcnnModel,
};
use crate::nn::Parameters;

pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to a temporary file beside `path`, then renames it over.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn f32_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

fn f32_values(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::format("float blob", format!("{} bytes is not a multiple of 4", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Header line plus float blob.
pub fn write_blob_file<H: Serialize>(path: &Path, header: &H, values: &[f32]) -> Result<()> {
    let mut bytes = serde_json::to_vec(header).map_err(|e| Error::format("header", e))?;
    bytes.push(b'\n');
    bytes.extend(f32_bytes(values.iter().copied()));
    write_atomic(path, &bytes)
}

pub fn read_blob_file<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f32>)> {
    let bytes = read_bytes(path)?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("blob file", "missing header line"))?;
    let header = serde_json::from_slice(&bytes[..split]).map_err(|e| Error::format("header", e))?;
    Ok((header, f32_values(&bytes[split + 1..])?))
}

fn check_version(kind: &str, expected_kind: &'static str, version: u32) -> Result<()> {
    if kind != expected_kind {
        return Err(Error::format(expected_kind, format!("file holds a {kind}")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::format(expected_kind, format!("unsupported format_version {version}")));
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::format(what, format!("expected {expected} floats, found {got}")));
    }
    Ok(())
}

fn to_f64(values: &[f32]) -> Vec<f64> {
    values.iter().map(|&v| f64::from(v)).collect()
}

fn matrix(rows: usize, cols: usize, values: &[f32]) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), to_f64(values)).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct CodebookHeader {
    format_version: u32,
    kind: String,
    k: usize,
    dim: usize,
    distortion: f64,
    seed: u64,
    history: Vec<f64>,
}

pub fn save_codebook(path: &Path, cb: &Codebook) -> Result<()> {
    let header = CodebookHeader {
        format_version: FORMAT_VERSION,
        kind: "codebook".into(),
        k: cb.k(),
        dim: cb.dim(),
        distortion: cb.distortion(),
        seed: cb.seed(),
        history: cb.history().to_vec(),
    };
    let values: Vec<f32> = cb.centroids().iter().map(|&v| v as f32).collect();
    write_blob_file(path, &header, &values)
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let (h, values): (CodebookHeader, _) = read_blob_file(path)?;
    check_version(&h.kind, "codebook", h.format_version)?;
    check_len("codebook", h.k * h.dim, values.len())?;
    Codebook::from_centroids(matrix(h.k, h.dim, &values)?, h.distortion, h.seed)
}

#[derive(Serialize, Deserialize)]
struct TableHeader {
    format_version: u32,
    kind: String,
    vocab_size: usize,
    dim: usize,
    init_mode: InitMode,
}

pub fn save_table(path: &Path, table: &EmbeddingTable<f32>) -> Result<()> {
    let header = TableHeader {
        format_version: FORMAT_VERSION,
        kind: "embeddings".into(),
        vocab_size: table.vocab_size(),
        dim: table.dim(),
        init_mode: table.init_mode(),
    };
    write_blob_file(path, &header, &table.rows().iter().copied().collect::<Vec<_>>())
}

pub fn load_table(path: &Path) -> Result<EmbeddingTable<f32>> {
    let (h, values): (TableHeader, Vec<f32>) = read_blob_file(path)?;
    check_version(&h.kind, "embeddings", h.format_version)?;
    check_len("embedding table", h.vocab_size * h.dim, values.len())?;
    let rows = Array2::from_shape_vec((h.vocab_size, h.dim), values).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    EmbeddingTable::from_rows(rows, h.init_mode)
}

#[derive(Serialize, Deserialize)]
struct PcaHeader {
    format_version: u32,
    kind: String,
    input_dim: usize,
    components: usize,
}

/// Blob order: mean, components (row-major), explained variance.
pub fn save_pca(path: &Path, model: &PcaModel) -> Result<()> {
    let header = PcaHeader {
        format_version: FORMAT_VERSION,
        kind: "pca".into(),
        input_dim: model.input_dim(),
        components: model.num_components(),
    };
    let values: Vec<f32> = model
        .mean()
        .iter()
        .chain(model.components().iter())
        .chain(model.explained_variance().iter())
        .map(|&v| v as f32)
        .collect();
    write_blob_file(path, &header, &values)
}

pub fn load_pca(path: &Path) -> Result<PcaModel> {
    let (h, values): (PcaHeader, Vec<f32>) = read_blob_file(path)?;
    check_version(&h.kind, "pca", h.format_version)?;
    let (d, k) = (h.input_dim, h.components);
    check_len("pca model", d + k * d + k, values.len())?;
    let mean = Array1::from(to_f64(&values[..d]));
    let components = matrix(k, d, &values[d..d + k * d])?;
    let variance = Array1::from(to_f64(&values[d + k * d..]));
    PcaModel::from_parts(mean, components, variance)
}

/// A trained classifier of either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Tcnn(TcnnModel<f32>),
    Clstm(ClstmModel<f32>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
enum ArchConfig {
    Tcnn(TcnnConfig),
    Clstm(ClstmConfig),
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    kind: String,
    classes: usize,
    vocab_size: usize,
    dim: usize,
    init_mode: InitMode,
    seed: u64,
    config: ArchConfig,
    /// Float count of each parameter block, in blob order.
    blocks: Vec<usize>,
}

/// Blocks are stored in the model's declared order: embedding table, then
/// convolution(s), then the recurrent layers if any, then dense layers.
pub fn save_checkpoint(path: &Path, model: &SavedModel, seed: u64) -> Result<()> {
    use crate::models::Classifier;
    let (config, classes, table, blocks) = match model {
        SavedModel::Tcnn(m) => (ArchConfig::Tcnn(m.config().clone()), m.num_classes(), m.embeddings(), m.blocks()),
        SavedModel::Clstm(m) => (ArchConfig::Clstm(m.config().clone()), m.num_classes(), m.embeddings(), m.blocks()),
    };
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        kind: "checkpoint".into(),
        classes,
        vocab_size: table.vocab_size(),
        dim: table.dim(),
        init_mode: table.init_mode(),
        seed,
        config,
        blocks: blocks.iter().map(|b| b.len()).collect(),
    };
    let values: Vec<f32> = blocks.iter().flat_map(|b| b.iter().copied()).collect();
    write_blob_file(path, &header, &values)
}

/// Returns the model and the seed it was trained with.
pub fn load_checkpoint(path: &Path) -> Result<(SavedModel, u64)> {
    let (h, values): (CheckpointHeader, Vec<f32>) = read_blob_file(path)?;
    check_version(&h.kind, "checkpoint", h.format_version)?;
    let table = EmbeddingTable::<f32>::from_rows(Array2::zeros((h.vocab_size, h.dim)), h.init_mode)?;
    let mut model = match h.config {
        ArchConfig::Tcnn(cfg) => SavedModel::Tcnn(build_tcnn(h.classes, table, cfg, 0)?),
        ArchConfig::Clstm(cfg) => SavedModel::Clstm(build_clstm(h.classes, table, cfg, 0)?),
    };
    let blocks = match &mut model {
        SavedModel::Tcnn(m) => m.blocks_mut(),
        SavedModel::Clstm(m) => m.blocks_mut(),
    };
    let lengths: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
    if lengths != h.blocks {
        return Err(Error::format("checkpoint", "parameter blocks do not match the architecture"));
    }
    check_len("checkpoint", lengths.iter().sum(), values.len())?;
    let mut offset = 0;
    for block in blocks {
        let n = block.len();
        block.copy_from_slice(&values[offset..offset + n]);
        offset += n;
    }
    let pad_is_zero = match &model {
        SavedModel::Tcnn(m) => m.embeddings.rows().row(0).iter().all(|&v| v == 0.0),
        SavedModel::Clstm(m) => m.embeddings.rows().row(0).iter().all(|&v| v == 0.0),
    };
    if !pad_is_zero {
        return Err(Error::format("checkpoint", "pad row is not zero"));
    }
    Ok((model, h.seed))
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub video_id: String,
    pub label: usize,
    pub num_frames: usize,
    pub dim: usize,
    pub stream: Stream,
    pub data_file: String,
    pub byte_offset: u64,
}

/// Writes `<stem>.jsonl` and `<stem>.bin` into `dir`. Returns the manifest path.
pub fn write_features(dir: &Path, stem: &str, seqs: &[FeatureSequence]) -> Result<PathBuf> {
    let data_name = format!("{stem}.bin");
    let mut data = Vec::new();
    let mut manifest = Vec::new();
    for seq in seqs {
        let record = FeatureRecord {
            video_id: seq.video_id.clone(),
            label: seq.label,
            num_frames: seq.len(),
            dim: seq.dim(),
            stream: seq.stream,
            data_file: data_name.clone(),
            byte_offset: data.len() as u64,
        };
        data.extend(f32_bytes(seq.frames().iter().copied()));
        serde_json::to_writer(&mut manifest, &record).map_err(|e| Error::format("manifest", e))?;
        manifest.push(b'\n');
    }
    write_atomic(&dir.join(&data_name), &data)?;
    let path = dir.join(format!("{stem}.jsonl"));
    write_atomic(&path, &manifest)?;
    Ok(path)
}

/// Reads a manifest; data files are resolved relative to it.
pub fn read_features(manifest: &Path) -> Result<Vec<FeatureSequence>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let records: Vec<FeatureRecord> = read_json_lines(manifest, "manifest")?;
    let mut out = Vec::with_capacity(records.len());
    let mut cache: Option<(String, Vec<u8>)> = None;
    for r in records {
        if cache.as_ref().is_none_or(|(name, _)| *name != r.data_file) {
            let bytes = read_bytes(&base.join(&r.data_file))?;
            cache = Some((r.data_file.clone(), bytes));
        }
        let bytes = &cache.as_ref().expect("loaded above").1;
        let start = usize::try_from(r.byte_offset).map_err(|e| Error::format("manifest", e))?;
        let end = start + r.num_frames * r.dim * 4;
        if end > bytes.len() {
            return Err(Error::format("manifest", format!("{} reads past the end of {}", r.video_id, r.data_file)));
        }
        let frames = Array2::from_shape_vec((r.num_frames, r.dim), f32_values(&bytes[start..end])?)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        out.push(FeatureSequence::new(r.video_id, r.label, r.stream, frames)?);
    }
    Ok(out)
}

fn read_json_lines<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(what, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_examples(path: &Path, examples: &[Example]) -> Result<()> {
    let mut bytes = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut bytes, ex).map_err(|e| Error::format("examples", e))?;
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

pub fn read_examples(path: &Path) -> Result<Vec<Example>> {
    read_json_lines(path, "examples")
}

/// One `f_i` per line; blank lines are skipped.
pub fn read_flow_stats(path: &Path) -> Result<Vec<f64>> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::format("flow statistics", format!("line {}: {e}", n + 1)))
        })
        .collect()
}

/// CSV with columns `epoch,train_loss,train_acc,val_acc`; `val_acc` is empty
/// when no validation set was given.
pub fn write_history(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "train_acc", "val_acc"])
        .map_err(|e| Error::format("history", e))?;
    for h in history {
        let val = h.val_acc.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([h.epoch.to_string(), h.train_loss.to_string(), h.train_acc.to_string(), val])
            .map_err(|e| Error::format("history", e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("history", e))?;
    write_atomic(path, &bytes)
}
