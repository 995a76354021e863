//! Training/test set construction: fixed-length GAN segments with attribute
//! metadata, rolling forecast windows, and rolling classifier windows with
//! future-recession labels.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::YieldPanel;

pub const FEATURES: usize = 2;

/// Fixed-length multivariate windows with per-sample attributes.
///
/// `features` is row-major `[sample][step][feature]`; `attributes` is
/// `[sample][attribute]` following `attr_schema`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub t: usize,
    pub f: usize,
    features: Vec<f64>,
    attributes: Vec<f64>,
    pub attr_schema: Vec<String>,
}

impl SampleSet {
    pub fn new(
        t: usize,
        f: usize,
        features: Vec<f64>,
        attributes: Vec<f64>,
        attr_schema: Vec<String>,
    ) -> Result<SampleSet> {
        if t == 0 || f == 0 {
            return Err(Error::Data("sample set with zero window length or features".into()));
        }
        if !features.len().is_multiple_of(t * f) {
            return Err(Error::Data("feature payload is not a multiple of T*F".into()));
        }
        let n = features.len() / (t * f);
        if attributes.len() != n * attr_schema.len() {
            return Err(Error::Data(format!(
                "attribute payload {} does not match {} samples x {} attributes",
                attributes.len(),
                n,
                attr_schema.len()
            )));
        }
        if features.iter().chain(&attributes).any(|v| !v.is_finite()) {
            return Err(Error::Data("sample set contains non-finite values".into()));
        }
        Ok(SampleSet { t, f, features, attributes, attr_schema })
    }

    pub fn n_samples(&self) -> usize {
        if self.features.is_empty() { 0 } else { self.features.len() / (self.t * self.f) }
    }

    pub fn n_attrs(&self) -> usize {
        self.attr_schema.len()
    }

    /// Flattened T x F window of sample `i`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.t * self.f;
        &self.features[i * w..(i + 1) * w]
    }

    pub fn attrs(&self, i: usize) -> &[f64] {
        let a = self.n_attrs();
        &self.attributes[i * a..(i + 1) * a]
    }

    pub fn features_flat(&self) -> &[f64] {
        &self.features
    }

    pub fn attributes_flat(&self) -> &[f64] {
        &self.attributes
    }

    pub fn value(&self, i: usize, step: usize, feature: usize) -> f64 {
        self.features[(i * self.t + step) * self.f + feature]
    }

    pub fn attr_index(&self, name: &str) -> Result<usize> {
        self.attr_schema
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::Data(format!("unknown attribute {name:?}")))
    }

    /// All values of one feature across samples and steps.
    pub fn feature_values(&self, feature: usize) -> Vec<f64> {
        (0..self.n_samples())
            .flat_map(|i| (0..self.t).map(move |s| self.value(i, s, feature)))
            .collect()
    }
}

/// Supervised windows: inputs `[sample][step][feature]` plus either
/// H-step-ahead series targets or binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedSet {
    pub w: usize,
    pub f: usize,
    inputs: Vec<f64>,
    pub targets: Targets,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `[sample][step][feature]`, H steps ahead for every feature.
    Series { h: usize, values: Vec<f64> },
    /// One binary label per sample.
    Labels(Vec<u8>),
}

impl SupervisedSet {
    pub fn new_forecast(w: usize, f: usize, inputs: Vec<f64>, h: usize, targets: Vec<f64>) -> Result<SupervisedSet> {
        if w == 0 || f == 0 || h == 0 {
            return Err(Error::Data("zero window, feature, or horizon".into()));
        }
        if !inputs.len().is_multiple_of(w * f) {
            return Err(Error::Data("input payload is not a multiple of W*F".into()));
        }
        let n = inputs.len() / (w * f);
        if targets.len() != n * h * f {
            return Err(Error::Data(format!(
                "{} targets do not match {} samples x {}x{}",
                targets.len(),
                n,
                h,
                f
            )));
        }
        Ok(SupervisedSet { w, f, inputs, targets: Targets::Series { h, values: targets } })
    }

    pub fn new_classify(w: usize, f: usize, inputs: Vec<f64>, labels: Vec<u8>) -> Result<SupervisedSet> {
        if w == 0 || f == 0 {
            return Err(Error::Data("zero window or feature count".into()));
        }
        if !inputs.len().is_multiple_of(w * f) {
            return Err(Error::Data("input payload is not a multiple of W*F".into()));
        }
        let n = inputs.len() / (w * f);
        if labels.len() != n {
            return Err(Error::Data(format!("{} labels for {} samples", labels.len(), n)));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Data("classification labels must be 0/1".into()));
        }
        Ok(SupervisedSet { w, f, inputs, targets: Targets::Labels(labels) })
    }

    pub fn n_samples(&self) -> usize {
        if self.inputs.is_empty() { 0 } else { self.inputs.len() / (self.w * self.f) }
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let w = self.w * self.f;
        &self.inputs[i * w..(i + 1) * w]
    }

    pub fn inputs_flat(&self) -> &[f64] {
        &self.inputs
    }

    pub fn horizon(&self) -> Option<usize> {
        match &self.targets {
            Targets::Series { h, .. } => Some(*h),
            Targets::Labels(_) => None,
        }
    }

    pub fn series_target(&self, i: usize) -> &[f64] {
        match &self.targets {
            Targets::Series { h, values } => {
                let s = h * self.f;
                &values[i * s..(i + 1) * s]
            }
            Targets::Labels(_) => panic!("series_target on a classification set"),
        }
    }

    pub fn labels(&self) -> &[u8] {
        match &self.targets {
            Targets::Labels(l) => l,
            Targets::Series { .. } => panic!("labels on a forecasting set"),
        }
    }
}

/// Which per-segment attributes to attach during GAN segmentation.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct AttributePlan {
    /// 1 iff any recession day falls inside the segment.
    pub recession_in_window: bool,
    /// 1 iff any recession day falls in the given number of days after the
    /// segment; segments whose lookahead runs past the panel are dropped.
    pub future_recession_lookahead: Option<usize>,
}

pub const ATTR_RECESSION: &str = "recession";
pub const ATTR_FUTURE_RECESSION: &str = "future_recession";

/// Consecutive non-overlapping T-day segments in date order, trailing
/// remainder dropped.
pub fn segment_gan_samples(panel: &YieldPanel, t: usize, plan: &AttributePlan) -> Result<SampleSet> {
    if t == 0 {
        return Err(Error::Config("segment length must be positive".into()));
    }
    if panel.len() < t {
        return Err(Error::Data(format!("panel length {} is shorter than segment length {t}", panel.len())));
    }
    let mut schema = Vec::new();
    if plan.recession_in_window {
        schema.push(ATTR_RECESSION.to_string());
    }
    if plan.future_recession_lookahead.is_some() {
        schema.push(ATTR_FUTURE_RECESSION.to_string());
    }

    let rec = panel.recession();
    let mut features = Vec::new();
    let mut attributes = Vec::new();
    let n_whole = panel.len() / t;
    for s in 0..n_whole {
        let (lo, hi) = (s * t, (s + 1) * t);
        if let Some(h) = plan.future_recession_lookahead {
            if hi + h > panel.len() {
                break; // lookahead would run past the panel
            }
        }
        for i in lo..hi {
            features.push(panel.y1()[i]);
            features.push(panel.y10()[i]);
        }
        if plan.recession_in_window {
            attributes.push(f64::from(rec[lo..hi].contains(&1)));
        }
        if let Some(h) = plan.future_recession_lookahead {
            attributes.push(f64::from(rec[hi..hi + h].contains(&1)));
        }
    }
    if features.is_empty() {
        return Err(Error::Data("no complete segments fit the panel".into()));
    }
    SampleSet::new(t, FEATURES, features, attributes, schema)
}

/// Rolling W-day windows with H-day-ahead series targets:
/// n = len - W - H + 1, window i covers days [i, i+W), target [i+W, i+W+H).
pub fn rolling_windows(panel: &YieldPanel, w: usize, h: usize) -> Result<SupervisedSet> {
    if w == 0 || h == 0 {
        return Err(Error::Config("window and horizon must be positive".into()));
    }
    let len = panel.len();
    if len < w + h {
        return Err(Error::Data(format!("panel length {len} below W+H = {}", w + h)));
    }
    let n = len - w - h + 1;
    let feats = panel.features();
    let mut inputs = Vec::with_capacity(n * w * FEATURES);
    let mut targets = Vec::with_capacity(n * h * FEATURES);
    for i in 0..n {
        inputs.extend_from_slice(&feats[i * FEATURES..(i + w) * FEATURES]);
        targets.extend_from_slice(&feats[(i + w) * FEATURES..(i + w + h) * FEATURES]);
    }
    SupervisedSet::new_forecast(w, FEATURES, inputs, h, targets)
}

/// Rolling W-day windows labeled 1 iff any recession day falls within the
/// `h` days after the window.
///
/// `lookahead_recession` optionally extends the recession column past the
/// panel end (historical flags after a training cutoff). Windows whose
/// lookahead is not fully covered are dropped.
pub fn rolling_classifier_windows(
    panel: &YieldPanel,
    w: usize,
    h: usize,
    lookahead_recession: Option<&[u8]>,
) -> Result<SupervisedSet> {
    if w == 0 || h == 0 {
        return Err(Error::Config("window and lookahead must be positive".into()));
    }
    let len = panel.len();
    if len < w {
        return Err(Error::Data(format!("panel length {len} below window {w}")));
    }
    let mut rec = panel.recession().to_vec();
    if let Some(extra) = lookahead_recession {
        rec.extend_from_slice(extra);
    }
    let feats = panel.features();
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..=(len - w) {
        let end = i + w;
        if end + h > rec.len() {
            break;
        }
        inputs.extend_from_slice(&feats[i * FEATURES..end * FEATURES]);
        labels.push(u8::from(rec[end..end + h].contains(&1)));
    }
    if labels.is_empty() {
        return Err(Error::Data("no classifier window has full lookahead coverage".into()));
    }
    SupervisedSet::new_classify(w, FEATURES, inputs, labels)
}

/// Per-segment rolling forecast windows, never crossing segment boundaries:
/// each T-day segment yields T - W - H + 1 windows.
pub fn windows_from_synthetic(set: &SampleSet, w: usize, h: usize) -> Result<SupervisedSet> {
    if w == 0 || h == 0 {
        return Err(Error::Config("window and horizon must be positive".into()));
    }
    if set.t < w + h {
        return Err(Error::Data(format!("segment length {} below W+H = {}", set.t, w + h)));
    }
    let per = set.t - w - h + 1;
    let n = set.n_samples();
    let mut inputs = Vec::with_capacity(n * per * w * set.f);
    let mut targets = Vec::with_capacity(n * per * h * set.f);
    for s in 0..n {
        let seg = set.sample(s);
        for i in 0..per {
            inputs.extend_from_slice(&seg[i * set.f..(i + w) * set.f]);
            targets.extend_from_slice(&seg[(i + w) * set.f..(i + w + h) * set.f]);
        }
    }
    SupervisedSet::new_forecast(w, set.f, inputs, h, targets)
}

/// Per-segment rolling windows for classification: every window inherits the
/// segment's binary attribute as its label.
pub fn labeled_windows_from_synthetic(set: &SampleSet, w: usize, attr: &str) -> Result<SupervisedSet> {
    if w == 0 {
        return Err(Error::Config("window must be positive".into()));
    }
    if set.t < w {
        return Err(Error::Data(format!("segment length {} below window {w}", set.t)));
    }
    let idx = set.attr_index(attr)?;
    let per = set.t - w + 1;
    let n = set.n_samples();
    let mut inputs = Vec::with_capacity(n * per * w * set.f);
    let mut labels = Vec::with_capacity(n * per);
    for s in 0..n {
        let a = set.attrs(s)[idx];
        if a != 0.0 && a != 1.0 {
            return Err(Error::Data(format!("attribute {attr:?} of sample {s} is {a}, not binary")));
        }
        let seg = set.sample(s);
        for i in 0..per {
            inputs.extend_from_slice(&seg[i * set.f..(i + w) * set.f]);
            labels.push(a as u8);
        }
    }
    SupervisedSet::new_classify(w, set.f, inputs, labels)
}

/// Concatenation of two compatible supervised sets; counts add.
pub fn combine_sets(a: &SupervisedSet, b: &SupervisedSet) -> Result<SupervisedSet> {
    if a.w != b.w || a.f != b.f {
        return Err(Error::Data(format!(
            "window/feature mismatch: {}x{} vs {}x{}",
            a.w, a.f, b.w, b.f
        )));
    }
    let mut inputs = a.inputs.clone();
    inputs.extend_from_slice(&b.inputs);
    match (&a.targets, &b.targets) {
        (Targets::Series { h: ha, values: va }, Targets::Series { h: hb, values: vb }) => {
            if ha != hb {
                return Err(Error::Data(format!("horizon mismatch: {ha} vs {hb}")));
            }
            let mut values = va.clone();
            values.extend_from_slice(vb);
            SupervisedSet::new_forecast(a.w, a.f, inputs, *ha, values)
        }
        (Targets::Labels(la), Targets::Labels(lb)) => {
            let mut labels = la.clone();
            labels.extend_from_slice(lb);
            SupervisedSet::new_classify(a.w, a.f, inputs, labels)
        }
        _ => Err(Error::Data("cannot combine forecasting and classification sets".into())),
    }
}

// --- serialization: manifest JSON + little-endian f64 payload ---

#[derive(Serialize, Deserialize)]
struct SampleSetManifest {
    format_version: u32,
    kind: String,
    n: usize,
    t: usize,
    f: usize,
    attr_schema: Vec<String>,
    provenance: String,
    payload: String,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct SupervisedManifest {
    format_version: u32,
    kind: String,
    n: usize,
    w: usize,
    f: usize,
    #[serde(default)]
    h: Option<usize>,
    provenance: String,
    payload: String,
    #[serde(default)]
    meta: serde_json::Value,
}

fn write_payload(path: &Path, chunks: &[&[f64]]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for chunk in chunks {
        for v in *chunk {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_payload(path: &Path, expect: usize) -> Result<Vec<f64>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open payload {}: {e}", path.display())))?
        .read_to_end(&mut buf)?;
    if buf.len() != expect * 8 {
        return Err(Error::Data(format!(
            "payload {} holds {} bytes, expected {}",
            path.display(),
            buf.len(),
            expect * 8
        )));
    }
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn payload_name(base: &Path) -> String {
    format!("{}.f64", base.file_name().unwrap_or_default().to_string_lossy())
}

/// Writes `<base>.json` + `<base>.f64` (features then attributes).
pub fn save_sample_set(set: &SampleSet, base: &Path, provenance: &str, meta: serde_json::Value) -> Result<()> {
    let manifest = SampleSetManifest {
        format_version: 1,
        kind: "gan".into(),
        n: set.n_samples(),
        t: set.t,
        f: set.f,
        attr_schema: set.attr_schema.clone(),
        provenance: provenance.into(),
        payload: payload_name(base),
        meta,
    };
    std::fs::write(base.with_extension("json"), serde_json::to_string_pretty(&manifest).unwrap())?;
    write_payload(&base.with_extension("f64"), &[&set.features, &set.attributes])
}

pub fn load_sample_set(base: &Path) -> Result<SampleSet> {
    let text = std::fs::read_to_string(base.with_extension("json"))
        .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", base.display())))?;
    let m: SampleSetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad manifest: {e}")))?;
    if m.kind != "gan" {
        return Err(Error::Data(format!("expected a gan sample set, found kind {:?}", m.kind)));
    }
    let total = m.n * m.t * m.f + m.n * m.attr_schema.len();
    let payload = read_payload(&base.with_extension("f64"), total)?;
    let split = m.n * m.t * m.f;
    SampleSet::new(m.t, m.f, payload[..split].to_vec(), payload[split..].to_vec(), m.attr_schema)
}

/// Writes `<base>.json` + `<base>.f64` (inputs then targets; labels stored as
/// 0.0/1.0).
pub fn save_supervised_set(set: &SupervisedSet, base: &Path, provenance: &str, meta: serde_json::Value) -> Result<()> {
    let (kind, h, target_data): (&str, Option<usize>, Vec<f64>) = match &set.targets {
        Targets::Series { h, values } => ("forecast", Some(*h), values.clone()),
        Targets::Labels(l) => ("classify", None, l.iter().map(|&v| f64::from(v)).collect()),
    };
    let manifest = SupervisedManifest {
        format_version: 1,
        kind: kind.into(),
        n: set.n_samples(),
        w: set.w,
        f: set.f,
        h,
        provenance: provenance.into(),
        payload: payload_name(base),
        meta,
    };
    std::fs::write(base.with_extension("json"), serde_json::to_string_pretty(&manifest).unwrap())?;
    write_payload(&base.with_extension("f64"), &[&set.inputs, &target_data])
}

pub fn load_supervised_set(base: &Path) -> Result<SupervisedSet> {
    let text = std::fs::read_to_string(base.with_extension("json"))
        .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", base.display())))?;
    let m: SupervisedManifest =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad manifest: {e}")))?;
    let input_len = m.n * m.w * m.f;
    match m.kind.as_str() {
        "forecast" => {
            let h = m.h.ok_or_else(|| Error::Data("forecast manifest missing horizon".into()))?;
            let payload = read_payload(&base.with_extension("f64"), input_len + m.n * h * m.f)?;
            SupervisedSet::new_forecast(m.w, m.f, payload[..input_len].to_vec(), h, payload[input_len..].to_vec())
        }
        "classify" => {
            let payload = read_payload(&base.with_extension("f64"), input_len + m.n)?;
            let labels = payload[input_len..]
                .iter()
                .map(|&v| {
                    if v == 0.0 {
                        Ok(0u8)
                    } else if v == 1.0 {
                        Ok(1u8)
                    } else {
                        Err(Error::Data(format!("stored label {v} is not 0/1")))
                    }
                })
                .collect::<Result<Vec<u8>>>()?;
            SupervisedSet::new_classify(m.w, m.f, payload[..input_len].to_vec(), labels)
        }
        other => Err(Error::Data(format!("unknown supervised set kind {other:?}"))),
    }
}
