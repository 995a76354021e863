//! Model persistence: a JSON header (version, kind, tensor shape manifest,
//! config/normalization metadata) followed by a little-endian IEEE-754 f64
//! payload. The header is diffable; the payload round-trips bit-exactly, and
//! save -> load -> save reproduces the file byte for byte.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dgan::{Critics, DganConfig, DganModel, GenSpec, GeneratorBundle};
use crate::downstream::{
    ClassifierModel, ClassifierNetConfig, FeatureScaler, ForecastModel, LogisticModel,
    NetTrainConfig,
};
use crate::error::{Error, Result};
use crate::nets::{Activation, Dense, LstmStack, Parameterized};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"YGCK";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub tensors: Vec<(String, Tensor)>,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    tensors: Vec<TensorMeta>,
    meta: serde_json::Value,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Data(format!("checkpoint is missing tensor {name:?}")))
    }

    /// Adds run provenance (seed and config hash) to the metadata.
    pub fn with_run_info(mut self, seed: u64, config_hash: &str) -> Checkpoint {
        if let serde_json::Value::Object(map) = &mut self.meta {
            map.insert("seed".into(), serde_json::json!(seed));
            map.insert("config_hash".into(), serde_json::json!(config_hash));
        }
        self
    }
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    let header = Header {
        kind: ck.kind.clone(),
        tensors: ck
            .tensors
            .iter()
            .map(|(name, t)| TensorMeta { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
        meta: ck.meta.clone(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serialization");
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, t) in &ck.tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open checkpoint {}: {e}", path.display())))?
        .read_to_end(&mut buf)?;
    if buf.len() < 16 || &buf[..4] != MAGIC {
        return Err(Error::Data("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if buf.len() < 16 + header_len {
        return Err(Error::Data("corrupt checkpoint: truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&buf[16..16 + header_len])
        .map_err(|e| Error::Data(format!("corrupt checkpoint header: {e}")))?;

    let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    let payload = &buf[16 + header_len..];
    if payload.len() != expected * 8 {
        return Err(Error::Data(format!(
            "corrupt checkpoint: payload holds {} bytes, manifest expects {}",
            payload.len(),
            expected * 8
        )));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut offset = 0;
    for tm in header.tensors {
        let len: usize = tm.shape.iter().product();
        let data: Vec<f64> = payload[offset..offset + len * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += len * 8;
        tensors.push((tm.name, Tensor::from_vec(&tm.shape, data)));
    }
    Ok(Checkpoint { kind: header.kind, tensors, meta: header.meta })
}

/// Overwrites every parameter of `model` from same-named checkpoint tensors.
fn fill_params(model: &mut impl Parameterized, ck: &Checkpoint) -> Result<()> {
    for (name, param) in model.params_mut() {
        let stored = ck.tensor(&name)?;
        if stored.shape() != param.shape() {
            return Err(Error::Data(format!(
                "checkpoint tensor {name:?} has shape {:?}, model expects {:?}",
                stored.shape(),
                param.shape()
            )));
        }
        *param = stored.clone();
    }
    Ok(())
}

fn meta_field<T: serde::de::DeserializeOwned>(meta: &serde_json::Value, field: &str) -> Result<T> {
    serde_json::from_value(
        meta.get(field)
            .cloned()
            .ok_or_else(|| Error::Data(format!("checkpoint metadata missing {field:?}")))?,
    )
    .map_err(|e| Error::Data(format!("bad checkpoint metadata {field:?}: {e}")))
}

// --- DGAN ---

pub const KIND_DGAN: &str = "dgan";

pub fn dgan_to_checkpoint(model: &DganModel) -> Checkpoint {
    let mut tensors = Vec::new();
    for (n, t) in model.bundle.params() {
        tensors.push((format!("bundle.{n}"), t.clone()));
    }
    for (n, t) in model.critics.params() {
        tensors.push((format!("critics.{n}"), t.clone()));
    }
    Checkpoint {
        kind: KIND_DGAN.into(),
        tensors,
        meta: serde_json::json!({
            "config": model.config,
            "spec": model.bundle.spec,
            "meta_scale": model.critics.meta_scale,
        }),
    }
}

pub fn dgan_from_checkpoint(ck: &Checkpoint) -> Result<DganModel> {
    if ck.kind != KIND_DGAN {
        return Err(Error::Data(format!("expected a {KIND_DGAN:?} checkpoint, found {:?}", ck.kind)));
    }
    let config: DganConfig = meta_field(&ck.meta, "config")?;
    let spec: GenSpec = meta_field(&ck.meta, "spec")?;
    let mut rng = crate::rng::stream(0, "checkpoint-rebuild");
    let mut bundle = GeneratorBundle::new(&config, spec.f, spec.attr_names.clone(), &mut rng)?;
    let mut critics = Critics::new(&config, &bundle.spec, &mut rng);
    let strip = |prefix: &str| -> Checkpoint {
        Checkpoint {
            kind: ck.kind.clone(),
            tensors: ck
                .tensors
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
                .collect(),
            meta: serde_json::Value::Null,
        }
    };
    fill_params(&mut bundle, &strip("bundle."))?;
    fill_params(&mut critics, &strip("critics."))?;
    critics.alpha = config.alpha;
    critics.meta_scale = meta_field(&ck.meta, "meta_scale")?;
    Ok(DganModel { bundle, critics, config })
}

// --- forecaster ---

pub const KIND_FORECASTER: &str = "forecaster";

#[derive(Serialize, Deserialize)]
struct ForecasterMeta {
    w: usize,
    h: usize,
    f: usize,
    dropout: f64,
    lstm_widths: Vec<usize>,
    scaler: FeatureScaler,
    train_config: NetTrainConfig,
}

pub fn forecaster_to_checkpoint(model: &ForecastModel, train_config: &NetTrainConfig) -> Checkpoint {
    let meta = ForecasterMeta {
        w: model.w,
        h: model.h,
        f: model.f,
        dropout: model.dropout,
        lstm_widths: model.lstm.cells.iter().map(|c| c.hidden).collect(),
        scaler: model.scaler.clone(),
        train_config: train_config.clone(),
    };
    Checkpoint {
        kind: KIND_FORECASTER.into(),
        tensors: model.params().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        meta: serde_json::json!({ "forecaster": meta }),
    }
}

pub fn forecaster_from_checkpoint(ck: &Checkpoint) -> Result<ForecastModel> {
    if ck.kind != KIND_FORECASTER {
        return Err(Error::Data(format!("expected a {KIND_FORECASTER:?} checkpoint, found {:?}", ck.kind)));
    }
    let meta: ForecasterMeta = meta_field(&ck.meta, "forecaster")?;
    let mut rng = crate::rng::stream(0, "checkpoint-rebuild");
    let mut model = ForecastModel {
        lstm: LstmStack::new(meta.f, &meta.lstm_widths, &mut rng),
        head: Dense::new(*meta.lstm_widths.last().unwrap(), meta.h * meta.f, Activation::Identity, &mut rng),
        dropout: meta.dropout,
        w: meta.w,
        h: meta.h,
        f: meta.f,
        scaler: meta.scaler,
    };
    fill_params(&mut model, ck)?;
    Ok(model)
}

// --- logistic classifier ---

pub const KIND_LOGISTIC: &str = "logistic";

pub fn logistic_to_checkpoint(model: &LogisticModel) -> Checkpoint {
    Checkpoint {
        kind: KIND_LOGISTIC.into(),
        tensors: vec![
            ("beta".into(), Tensor::from_vec(&[model.beta.len()], model.beta.clone())),
            ("intercept".into(), Tensor::scalar(model.intercept)),
        ],
        meta: serde_json::json!({
            "lambda": model.lambda,
            "scaler": model.scaler,
            "w": model.w,
            "f": model.f,
            "single_class": model.single_class,
        }),
    }
}

pub fn logistic_from_checkpoint(ck: &Checkpoint) -> Result<LogisticModel> {
    if ck.kind != KIND_LOGISTIC {
        return Err(Error::Data(format!("expected a {KIND_LOGISTIC:?} checkpoint, found {:?}", ck.kind)));
    }
    Ok(LogisticModel {
        beta: ck.tensor("beta")?.data().to_vec(),
        intercept: ck.tensor("intercept")?.item(),
        lambda: meta_field(&ck.meta, "lambda")?,
        scaler: meta_field(&ck.meta, "scaler")?,
        w: meta_field(&ck.meta, "w")?,
        f: meta_field(&ck.meta, "f")?,
        single_class: meta_field(&ck.meta, "single_class")?,
    })
}

// --- LSTM classifier ---

pub const KIND_LSTM_CLASSIFIER: &str = "lstm-classifier";

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    w: usize,
    f: usize,
    dropout: f64,
    lstm_width: usize,
    dense_width: usize,
    scaler: FeatureScaler,
    train_config: ClassifierNetConfig,
}

pub fn classifier_to_checkpoint(model: &ClassifierModel, train_config: &ClassifierNetConfig) -> Checkpoint {
    let meta = ClassifierMeta {
        w: model.w,
        f: model.f,
        dropout: model.dropout,
        lstm_width: model.lstm.cells[0].hidden,
        dense_width: model.dense.output_dim(),
        scaler: model.scaler.clone(),
        train_config: train_config.clone(),
    };
    Checkpoint {
        kind: KIND_LSTM_CLASSIFIER.into(),
        tensors: model.params().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        meta: serde_json::json!({ "classifier": meta }),
    }
}

pub fn classifier_from_checkpoint(ck: &Checkpoint) -> Result<ClassifierModel> {
    if ck.kind != KIND_LSTM_CLASSIFIER {
        return Err(Error::Data(format!(
            "expected a {KIND_LSTM_CLASSIFIER:?} checkpoint, found {:?}",
            ck.kind
        )));
    }
    let meta: ClassifierMeta = meta_field(&ck.meta, "classifier")?;
    let mut rng = crate::rng::stream(0, "checkpoint-rebuild");
    let mut model = ClassifierModel {
        lstm: LstmStack::new(meta.f, &[meta.lstm_width], &mut rng),
        dense: Dense::new(meta.lstm_width, meta.dense_width, Activation::Tanh, &mut rng),
        output: Dense::new(meta.dense_width, 2, Activation::Softmax, &mut rng),
        dropout: meta.dropout,
        w: meta.w,
        f: meta.f,
        scaler: meta.scaler,
    };
    fill_params(&mut model, ck)?;
    Ok(model)
}

/// sha256 hex digest of a canonical JSON rendering, used to stamp artifacts.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(config).expect("config serialization");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
