//! On-disk formats: datasets and checkpoints as canonical JSON (sorted keys,
//! shortest round-trip floats) and training logs as CSV.
//!
//! Every write goes to a temporary file in the target directory and is then
//! renamed over the destination, so readers never observe a partial file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::loss::{LossConfig, SkeletonGraph};
use crate::metrics::MetricReport;
use crate::predictor::{CompositePredictor, KeypointSet};
use crate::scene::{LabeledSequence, SceneConfig};
use crate::siren::{Activation, DenseLayer, Mlp};
use crate::trainer::{TrainConfig, TrainRecord};

pub const FORMAT_VERSION: u32 = 1;

pub const METRICS_HEADER: &str = "step,total,recon,position,geometric,epe,mse,tc,ga";

pub const PLOT_HEADER: &str = "step,loss,epe";

/// Replace `path` with `bytes` in one rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with object keys in byte order and a trailing newline.
fn canonical_json<T: Serialize>(doc: &T) -> Result<String> {
    // serde_json's default map is ordered, so the round trip through Value
    // sorts every object.
    let value = serde_json::to_value(doc).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::Numeric(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn parse_document<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        let key = if key == "." { "(document)".to_string() } else { key };
        Error::schema(key, e.into_inner().to_string())
    })
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::schema(
            "version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}

fn ensure_finite(values: &[f64], key: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::schema(format!("{key}[{i}]"), "value is not finite")),
        None => Ok(()),
    }
}

type Frames = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    version: u32,
    m: usize,
    d: usize,
    t: usize,
    edges: Vec<[usize; 2]>,
    reference_lengths: Vec<f64>,
    frames: Frames,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noisy_frames: Option<Frames>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    masks: Option<Vec<Vec<bool>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator_config: Option<SceneConfig>,
}

fn frames_from_doc(frames: &Frames, key: &str, t: usize, m: usize, d: usize) -> Result<Vec<KeypointSet>> {
    if frames.len() != t {
        return Err(Error::schema(key, format!("expected {t} frames, found {}", frames.len())));
    }
    frames
        .iter()
        .enumerate()
        .map(|(f, rows)| {
            if rows.len() != m {
                return Err(Error::schema(
                    format!("{key}[{f}]"),
                    format!("expected {m} keypoints, found {}", rows.len()),
                ));
            }
            if let Some(i) = rows.iter().position(|r| r.len() != d) {
                return Err(Error::schema(
                    format!("{key}[{f}][{i}]"),
                    format!("expected {d} coordinates, found {}", rows[i].len()),
                ));
            }
            KeypointSet::from_rows(rows).map_err(|e| Error::schema(format!("{key}[{f}]"), e.to_string()))
        })
        .collect()
}

pub fn dataset_to_string(seq: &LabeledSequence) -> Result<String> {
    let doc = DatasetDoc {
        version: FORMAT_VERSION,
        m: seq.m(),
        d: seq.d(),
        t: seq.t(),
        edges: seq.graph.edges().iter().map(|&(i, j)| [i, j]).collect(),
        reference_lengths: seq.graph.reference_lengths().to_vec(),
        frames: seq.frames.iter().map(KeypointSet::to_rows).collect(),
        noisy_frames: Some(seq.noisy_frames.iter().map(KeypointSet::to_rows).collect()),
        masks: Some(seq.masks.clone()),
        generator_config: seq.config.clone(),
    };
    canonical_json(&doc)
}

/// Parse a dataset document; `origin` only labels errors.
pub fn dataset_from_str(text: &str, origin: &Path) -> Result<LabeledSequence> {
    let doc: DatasetDoc = parse_document(text, origin)?;
    check_version(doc.version)?;
    if doc.t == 0 {
        return Err(Error::schema("t", "a dataset needs at least one frame"));
    }
    if doc.m == 0 {
        return Err(Error::schema("m", "a dataset needs at least one keypoint"));
    }
    if !(1..=3).contains(&doc.d) {
        return Err(Error::schema("d", format!("dimension must be 1, 2 or 3, got {}", doc.d)));
    }
    let (t, m, d) = (doc.t, doc.m, doc.d);
    let frames = frames_from_doc(&doc.frames, "frames", t, m, d)?;
    let noisy = doc
        .noisy_frames
        .as_ref()
        .map(|f| frames_from_doc(f, "noisy_frames", t, m, d))
        .transpose()?;
    if let Some(masks) = &doc.masks {
        if masks.len() != t {
            return Err(Error::schema("masks", format!("expected {t} rows, found {}", masks.len())));
        }
        if let Some(f) = masks.iter().position(|r| r.len() != m) {
            return Err(Error::schema(format!("masks[{f}]"), format!("expected {m} entries")));
        }
    }
    if doc.edges.len() != doc.reference_lengths.len() {
        return Err(Error::schema(
            "reference_lengths",
            format!("{} lengths for {} edges", doc.reference_lengths.len(), doc.edges.len()),
        ));
    }
    let edges = doc.edges.iter().map(|&[i, j]| (i, j)).collect();
    let graph = SkeletonGraph::new(edges, doc.reference_lengths, m).map_err(|e| Error::schema("edges", e.to_string()))?;
    LabeledSequence::new(frames, graph, doc.masks, noisy, doc.generator_config)
        .map_err(|e| Error::schema("(document)", e.to_string()))
}

pub fn save_dataset(seq: &LabeledSequence, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), dataset_to_string(seq)?.as_bytes())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledSequence> {
    let path = path.as_ref();
    dataset_from_str(&read_text(path)?, path)
}

/// Shape of one dense layer; weights live in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

fn describe(net: &Mlp) -> Vec<LayerSpec> {
    net.layers()
        .iter()
        .map(|l| LayerSpec {
            in_dim: l.in_dim(),
            out_dim: l.out_dim(),
            activation: l.activation,
        })
        .collect()
}

fn skeleton(specs: &[LayerSpec], key: &str) -> Result<Mlp> {
    let layers = specs
        .iter()
        .map(|s| DenseLayer::new(Array2::zeros((s.out_dim, s.in_dim)), Array1::zeros(s.out_dim), s.activation))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::schema(key, e.to_string()))?;
    Mlp::from_layers(layers).map_err(|e| Error::schema(key, e.to_string()))
}

/// Training settings stored next to the loss weights.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSettings {
    lr: f64,
    batch_size: usize,
    max_steps: usize,
    seed: u64,
    log_every: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    version: u32,
    m: usize,
    d: usize,
    low_branch: Vec<LayerSpec>,
    high_branch: Vec<LayerSpec>,
    omega0: f64,
    lambda_mix: f64,
    params: Vec<f64>,
    loss_cfg: LossConfig,
    train_cfg: TrainSettings,
    steps_completed: usize,
    final_metrics: Option<MetricReport>,
}

/// A trained predictor together with how it was trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub predictor: CompositePredictor,
    pub train: TrainConfig,
    pub steps_completed: usize,
    pub final_metrics: Option<MetricReport>,
}

pub fn checkpoint_to_string(ckpt: &Checkpoint) -> Result<String> {
    let params = ckpt.predictor.flatten();
    if let Some(i) = params.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("parameter {i} is not finite")));
    }
    let cfg = &ckpt.train;
    let doc = CheckpointDoc {
        version: FORMAT_VERSION,
        m: ckpt.predictor.m(),
        d: ckpt.predictor.d(),
        low_branch: describe(ckpt.predictor.low()),
        high_branch: describe(ckpt.predictor.high()),
        omega0: ckpt.predictor.omega0(),
        lambda_mix: ckpt.predictor.lambda_mix(),
        params,
        loss_cfg: cfg.loss,
        train_cfg: TrainSettings {
            lr: cfg.lr,
            batch_size: cfg.batch_size,
            max_steps: cfg.max_steps,
            seed: cfg.seed,
            log_every: cfg.log_every,
        },
        steps_completed: ckpt.steps_completed,
        final_metrics: ckpt.final_metrics,
    };
    canonical_json(&doc)
}

pub fn checkpoint_from_str(text: &str, origin: &Path) -> Result<Checkpoint> {
    let doc: CheckpointDoc = parse_document(text, origin)?;
    check_version(doc.version)?;
    ensure_finite(&doc.params, "params")?;
    let low = skeleton(&doc.low_branch, "low_branch")?;
    let high = skeleton(&doc.high_branch, "high_branch")?;
    let expected = low.param_count() + high.param_count();
    if doc.params.len() != expected {
        return Err(Error::schema(
            "params",
            format!("architecture needs {expected} parameters, found {}", doc.params.len()),
        ));
    }
    let mut predictor = CompositePredictor::from_branches(low, high, doc.lambda_mix, doc.omega0, doc.m, doc.d)
        .map_err(|e| Error::schema("(document)", e.to_string()))?;
    predictor.set_params(&doc.params)?;
    let s = doc.train_cfg;
    let train = TrainConfig {
        lr: s.lr,
        batch_size: s.batch_size,
        max_steps: s.max_steps,
        seed: s.seed,
        loss: doc.loss_cfg,
        log_every: s.log_every,
    };
    train.validate().map_err(|e| Error::schema("train_cfg", e.to_string()))?;
    Ok(Checkpoint {
        predictor,
        train,
        steps_completed: doc.steps_completed,
        final_metrics: doc.final_metrics,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), checkpoint_to_string(ckpt)?.as_bytes())
}

/// Nothing is returned unless the whole file parses and validates.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    checkpoint_from_str(&read_text(path)?, path)
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub total: f64,
    pub recon: f64,
    pub position: f64,
    pub geometric: f64,
    pub epe: f64,
    pub mse: f64,
    pub tc: f64,
    pub ga: f64,
}

impl From<&TrainRecord> for MetricsRow {
    fn from(r: &TrainRecord) -> Self {
        Self {
            step: r.step,
            total: r.loss.total,
            recon: r.loss.recon_term,
            position: r.loss.position_term,
            geometric: r.loss.geometric_term,
            epe: r.epe,
            mse: r.mse,
            tc: r.tc,
            ga: r.ga,
        }
    }
}

impl MetricsRow {
    fn values(&self) -> [f64; 8] {
        [
            self.total,
            self.recon,
            self.position,
            self.geometric,
            self.epe,
            self.mse,
            self.tc,
            self.ga,
        ]
    }
}

pub fn metrics_csv_string(rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        let values = row.values();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite metric at step {}", row.step)));
        }
        write!(out, "{}", row.step).unwrap();
        for v in values {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn metrics_from_str(text: &str, origin: &Path) -> Result<Vec<MetricsRow>> {
    let parse_err = |line: usize, column: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        column,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == METRICS_HEADER => {}
        _ => return Err(parse_err(1, 1, format!("expected header `{METRICS_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(parse_err(n + 1, 1, format!("expected 9 columns, found {}", fields.len())));
        }
        let mut col = 1;
        let step = fields[0]
            .parse::<usize>()
            .map_err(|e| parse_err(n + 1, col, format!("step: {e}")))?;
        let mut values = [0.0; 8];
        for (k, field) in fields[1..].iter().enumerate() {
            col += fields[k].len() + 1;
            let v: f64 = field.parse().map_err(|e| parse_err(n + 1, col, format!("{field:?}: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(n + 1, col, format!("{field:?} is not finite")));
            }
            values[k] = v;
        }
        let [total, recon, position, geometric, epe, mse, tc, ga] = values;
        rows.push(MetricsRow {
            step,
            total,
            recon,
            position,
            geometric,
            epe,
            mse,
            tc,
            ga,
        });
    }
    Ok(rows)
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), metrics_csv_string(rows)?.as_bytes())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    metrics_from_str(&read_text(path)?, path)
}

/// `step,loss,epe` columns for plotting, `loss` being the total objective.
pub fn plot_csv_string(rows: &[MetricsRow]) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{:?},{:?}", r.step, r.total, r.epe).unwrap();
    }
    out
}

pub fn export_plot(log: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<usize> {
    let rows = read_metrics_csv(log)?;
    write_atomic(out.as_ref(), plot_csv_string(&rows).as_bytes())?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::scene::generate_chain_scene;
    use crate::PredictorConfig;

    fn scene() -> LabeledSequence {
        let cfg = SceneConfig {
            noise_sigma: 0.05,
            occlusion_rate: 0.2,
            ..SceneConfig::chain(4, 3, 12)
        };
        generate_chain_scene(&cfg).unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let seq = scene();
        let text = dataset_to_string(&seq).unwrap();
        let back = dataset_from_str(&text, Path::new("mem")).unwrap();
        assert_eq!(back, seq);
        assert_eq!(dataset_to_string(&back).unwrap(), text);
    }

    #[test]
    fn keys_are_sorted() {
        let text = dataset_to_string(&scene()).unwrap();
        let top: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = top.clone();
        sorted.sort();
        assert_eq!(top, sorted);
        assert!(top.contains(&"generator_config"));
    }

    #[test]
    fn zero_frames_is_schema_error() {
        let text = r#"{"version":1,"m":2,"d":2,"t":0,"edges":[[0,1]],"reference_lengths":[1.0],"frames":[]}"#;
        match dataset_from_str(text, Path::new("mem")) {
            Err(Error::Schema { key, .. }) => assert_eq!(key, "t"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_key() {
        let cases = [
            (r#"{"version":2,"m":1,"d":2,"t":1,"edges":[],"reference_lengths":[],"frames":[[[0,0]]]}"#, "version"),
            (r#"{"version":1,"m":1,"d":2,"t":1,"edges":[],"reference_lengths":[],"frames":[[[0]]]}"#, "frames[0][0]"),
            (r#"{"version":1,"m":1,"d":2,"t":1,"edges":[],"reference_lengths":[],"frames":[[[0,"x"]]]}"#, "frames[0][0][1]"),
            (r#"{"version":1,"m":2,"d":2,"t":1,"edges":[[0,1]],"reference_lengths":[],"frames":[[[0,0],[1,0]]]}"#, "reference_lengths"),
            (r#"{"version":1,"m":1,"d":2,"t":1,"reference_lengths":[],"frames":[[[0,0]]]}"#, "(document)"),
            (r#"{"version":1,"m":1,"d":2,"t":1,"edges":[],"reference_lengths":[],"frames":[[[0,0]]],"masks":[[true,false]]}"#, "masks[0]"),
        ];
        for (text, expected) in cases {
            match dataset_from_str(text, Path::new("mem")) {
                Err(Error::Schema { key, .. }) => assert_eq!(key, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let text = "{\n  \"version\": 1,\n  \"m\": ]\n}";
        match dataset_from_str(text, Path::new("bad.json")) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 8)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_and_truncation() {
        let pred = CompositePredictor::new(
            &PredictorConfig {
                low_hidden: vec![5],
                high_hidden: vec![6, 4],
                ..PredictorConfig::default()
            },
            3,
            2,
            &mut Rng::new(9),
        )
        .unwrap();
        let ckpt = Checkpoint {
            predictor: pred,
            train: TrainConfig::default(),
            steps_completed: 17,
            final_metrics: None,
        };
        let text = checkpoint_to_string(&ckpt).unwrap();
        let back = checkpoint_from_str(&text, Path::new("mem")).unwrap();
        assert_eq!(back, ckpt);
        let cut = &text[..text.len() / 2];
        assert!(matches!(checkpoint_from_str(cut, Path::new("mem")), Err(Error::Parse { .. })));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let rows = vec![
            MetricsRow {
                step: 0,
                total: 12.5,
                recon: 6.0,
                position: 6.0,
                geometric: 1.0 / 3.0,
                epe: 1e-20,
                mse: 0.1,
                tc: 0.9,
                ga: 1.0,
            },
            MetricsRow {
                step: 100,
                total: 0.0,
                recon: 0.0,
                position: 0.0,
                geometric: 0.0,
                epe: 0.0,
                mse: 0.0,
                tc: 1.0,
                ga: 1.0,
            },
        ];
        let text = metrics_csv_string(&rows).unwrap();
        assert!(text.starts_with("step,total,recon,position,geometric,epe,mse,tc,ga\n"));
        assert_eq!(metrics_from_str(&text, Path::new("mem")).unwrap(), rows);
        let plot = plot_csv_string(&rows);
        assert_eq!(plot, "step,loss,epe\n0,12.5,1e-20\n100,0.0,0.0\n");
    }

    #[test]
    fn metrics_csv_rejects_bad_rows() {
        let header = format!("{METRICS_HEADER}\n");
        for (body, line) in [("1,2,3\n", 2), ("1,NaN,0,0,0,0,0,0,0\n", 2), ("0,0,0,0,0,0,0,0,0\nx,0,0,0,0,0,0,0,0\n", 3)] {
            match metrics_from_str(&(header.clone() + body), Path::new("m.csv")) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{body}"),
                other => panic!("{body}: {other:?}"),
            }
        }
        assert!(matches!(metrics_from_str("a,b\n", Path::new("m.csv")), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let missing = dir.path().join("nope").join("out.txt");
        assert!(matches!(write_atomic(&missing, b"x"), Err(Error::Io { .. })));
    }
}
