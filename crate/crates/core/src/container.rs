//! `FRFD1` container files.
//!
//! Layout: the 6 magic bytes `FRFD1\n`, a little-endian `u32` header length,
//! a UTF-8 JSON header, then the payload of little-endian `f64` values.
//! Arrays are stored row-major, one after another in header order; complex
//! arrays (`c128`) interleave real and imaginary parts.
//!
//! The header's `content_hash` is the SHA-256 of the schema name, version,
//! array names, dtypes and shapes, the compact metadata JSON and the payload
//! bytes. Readers reject files whose hash or payload length disagree with the
//! header.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::damage::{Measurements, Split, Standardizer, Task, TaskModel, TrainingMetadata};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mlp::{Activation, Layer, MlpNetwork};
use crate::panel::DamageScenario;
use crate::pca::{PcaBasis, PcaGroup, PcaLayout, PrincipalAxes};
use crate::signal::{ChannelKind, FrfMatrix};

pub const MAGIC: &[u8; 6] = b"FRFD1\n";
pub const VERSION: u32 = 1;

pub const SCHEMA_FRF: &str = "frf_matrix";
pub const SCHEMA_BASIS: &str = "pca_basis";
pub const SCHEMA_MODEL: &str = "task_model";
pub const SCHEMA_DATASET: &str = "dataset";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
}

impl Dtype {
    fn as_str(self) -> &'static str {
        match self {
            Dtype::F64 => "f64",
            Dtype::C128 => "c128",
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F64 => 1,
            Dtype::C128 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
}

impl ArraySpec {
    pub fn n_elements(&self) -> usize {
        self.shape.iter().product()
    }

    /// Number of `f64` words in the payload.
    pub fn n_words(&self) -> usize {
        self.n_elements() * self.dtype.width()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub spec: ArraySpec,
    /// Interleaved re/im for `c128`.
    pub data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    version: u32,
    arrays: Vec<ArraySpec>,
    metadata: Value,
    content_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub schema: String,
    pub version: u32,
    pub metadata: Value,
    pub arrays: Vec<Array>,
}

fn corrupt(path: &str, reason: impl Into<String>) -> Error {
    Error::Corrupt {
        path: path.to_string(),
        reason: reason.into(),
    }
}

impl Container {
    pub fn new(schema: &str, metadata: Value) -> Self {
        Self {
            schema: schema.to_string(),
            version: VERSION,
            metadata,
            arrays: Vec::new(),
        }
    }

    pub fn push_f64(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<()> {
        let spec = ArraySpec {
            name: name.to_string(),
            shape: shape.to_vec(),
            dtype: Dtype::F64,
        };
        self.push(spec, data)
    }

    pub fn push_c128(&mut self, name: &str, shape: &[usize], data: &[Complex64]) -> Result<()> {
        let spec = ArraySpec {
            name: name.to_string(),
            shape: shape.to_vec(),
            dtype: Dtype::C128,
        };
        self.push(spec, data.iter().flat_map(|c| [c.re, c.im]).collect())
    }

    fn push(&mut self, spec: ArraySpec, data: Vec<f64>) -> Result<()> {
        if spec.n_words() != data.len() {
            return Err(Error::Dimension(format!(
                "array {} of shape {:?} given {} values",
                spec.name,
                spec.shape,
                data.len()
            )));
        }
        if self.arrays.iter().any(|a| a.spec.name == spec.name) {
            return Err(Error::InvalidInput(format!("duplicate array {}", spec.name)));
        }
        self.arrays.push(Array { spec, data });
        Ok(())
    }

    pub fn array(&self, name: &str) -> Result<&Array> {
        self.arrays
            .iter()
            .find(|a| a.spec.name == name)
            .ok_or_else(|| corrupt(&self.schema, format!("missing array {name}")))
    }

    /// Real array with the given rank.
    pub fn f64_array(&self, name: &str, rank: usize) -> Result<(&[usize], &[f64])> {
        let a = self.array(name)?;
        if a.spec.dtype != Dtype::F64 || a.spec.shape.len() != rank {
            return Err(corrupt(&self.schema, format!("array {name} has the wrong dtype or rank")));
        }
        Ok((&a.spec.shape, &a.data))
    }

    pub fn c128_array(&self, name: &str, rank: usize) -> Result<(&[usize], Vec<Complex64>)> {
        let a = self.array(name)?;
        if a.spec.dtype != Dtype::C128 || a.spec.shape.len() != rank {
            return Err(corrupt(&self.schema, format!("array {name} has the wrong dtype or rank")));
        }
        let values = a.data.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        Ok((&a.spec.shape, values))
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.as_bytes());
        h.update([0u8]);
        h.update(self.version.to_le_bytes());
        for a in &self.arrays {
            h.update(a.spec.name.as_bytes());
            h.update([0u8]);
            h.update(a.spec.dtype.as_str().as_bytes());
            h.update([0u8]);
            h.update((a.spec.shape.len() as u64).to_le_bytes());
            for &d in &a.spec.shape {
                h.update((d as u64).to_le_bytes());
            }
        }
        h.update(serde_json::to_string(&self.metadata).expect("metadata serializes").as_bytes());
        for a in &self.arrays {
            for v in &a.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            schema: self.schema.clone(),
            version: self.version,
            arrays: self.arrays.iter().map(|a| a.spec.clone()).collect(),
            metadata: self.metadata.clone(),
            content_hash: self.content_hash(),
        };
        let text = serde_json::to_vec(&header).expect("header serializes");
        let words: usize = self.arrays.iter().map(|a| a.data.len()).sum();
        let mut out = Vec::with_capacity(MAGIC.len() + 4 + text.len() + 8 * words);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(&text);
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses and verifies a container; `origin` names the source in errors.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let bad = |reason: &str| corrupt(origin, reason);
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("missing FRFD1 magic"));
        }
        let len_bytes: [u8; 4] = bytes[6..10].try_into().expect("slice of 4");
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let body = &bytes[10..];
        if header_len > body.len() {
            return Err(bad("header length exceeds file size"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| corrupt(origin, format!("header: {e}")))?;
        if header.version != VERSION {
            return Err(corrupt(origin, format!("unsupported version {}", header.version)));
        }
        let payload = &body[header_len..];
        let words: usize = header.arrays.iter().map(ArraySpec::n_words).sum();
        if payload.len() != 8 * words {
            return Err(corrupt(
                origin,
                format!("payload holds {} bytes, header declares {}", payload.len(), 8 * words),
            ));
        }
        let mut offset = 0;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for spec in header.arrays {
            let n = spec.n_words();
            let data = payload[offset * 8..(offset + n) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            offset += n;
            arrays.push(Array { spec, data });
        }
        let c = Self {
            schema: header.schema,
            version: header.version,
            metadata: header.metadata,
            arrays,
        };
        if c.content_hash() != header.content_hash {
            return Err(bad("content hash mismatch"));
        }
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    /// Reads a container and checks its schema.
    pub fn read_schema(path: &Path, schema: &str) -> Result<Self> {
        let c = Self::read(path)?;
        c.expect_schema(schema)?;
        Ok(c)
    }

    pub fn expect_schema(&self, schema: &str) -> Result<()> {
        if self.schema != schema {
            return Err(corrupt(
                schema,
                format!("expected a {schema} container, found {}", self.schema),
            ));
        }
        Ok(())
    }

    fn meta<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .metadata
            .get(key)
            .ok_or_else(|| corrupt(&self.schema, format!("metadata lacks {key}")))?;
        serde_json::from_value(v.clone()).map_err(|e| corrupt(&self.schema, format!("metadata {key}: {e}")))
    }
}

pub fn frf_to_container(frf: &FrfMatrix) -> Result<Container> {
    let mut c = Container::new(
        SCHEMA_FRF,
        json!({
            "channel_kinds": frf.channel_kinds(),
            "n_averages": frf.n_averages(),
        }),
    );
    c.push_c128("values", &[frf.n_channels(), frf.n_bins()], frf.values())?;
    c.push_f64("freq_bins", &[frf.n_bins()], frf.freq_bins().to_vec())?;
    Ok(c)
}

pub fn frf_from_container(c: &Container) -> Result<FrfMatrix> {
    c.expect_schema(SCHEMA_FRF)?;
    let (shape, values) = c.c128_array("values", 2)?;
    let (fshape, freq) = c.f64_array("freq_bins", 1)?;
    let kinds: Vec<ChannelKind> = c.meta("channel_kinds")?;
    if shape[0] != kinds.len() || shape[1] != fshape[0] {
        return Err(corrupt(SCHEMA_FRF, "array shapes disagree with metadata"));
    }
    FrfMatrix::new(values, freq.to_vec(), kinds, c.meta("n_averages")?)
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupMeta {
    channels: Vec<usize>,
    degenerate: bool,
}

pub fn basis_to_container(b: &PcaBasis) -> Result<Container> {
    let groups: Vec<GroupMeta> = b
        .groups
        .iter()
        .map(|g| GroupMeta {
            channels: g.channels.clone(),
            degenerate: g.axes.degenerate,
        })
        .collect();
    let mut c = Container::new(
        SCHEMA_BASIS,
        json!({
            "block": b.block,
            "layout": b.layout,
            "n_channels": b.n_channels,
            "bins_per_channel": b.bins_per_channel,
            "basis_id": b.basis_id,
            "groups": groups,
        }),
    );
    for (i, g) in b.groups.iter().enumerate() {
        let a = &g.axes;
        c.push_f64(&format!("group{i}.mean"), &[a.mean.len()], a.mean.clone())?;
        c.push_f64(
            &format!("group{i}.components"),
            &[a.components.rows(), a.components.cols()],
            a.components.as_slice().to_vec(),
        )?;
        c.push_f64(&format!("group{i}.eigenvalues"), &[a.eigenvalues.len()], a.eigenvalues.clone())?;
    }
    Ok(c)
}

pub fn basis_from_container(c: &Container) -> Result<PcaBasis> {
    c.expect_schema(SCHEMA_BASIS)?;
    let metas: Vec<GroupMeta> = c.meta("groups")?;
    let mut groups = Vec::with_capacity(metas.len());
    for (i, m) in metas.into_iter().enumerate() {
        let (_, mean) = c.f64_array(&format!("group{i}.mean"), 1)?;
        let (shape, comps) = c.f64_array(&format!("group{i}.components"), 2)?;
        let (_, eig) = c.f64_array(&format!("group{i}.eigenvalues"), 1)?;
        if shape[0] != mean.len() {
            return Err(corrupt(SCHEMA_BASIS, format!("group {i} shapes disagree")));
        }
        groups.push(PcaGroup {
            channels: m.channels,
            axes: PrincipalAxes {
                mean: mean.to_vec(),
                components: Matrix::from_vec(shape[0], shape[1], comps.to_vec())?,
                eigenvalues: eig.to_vec(),
                degenerate: m.degenerate,
            },
        });
    }
    let block: ChannelKind = c.meta("block")?;
    let layout: PcaLayout = c.meta("layout")?;
    let basis = PcaBasis::from_groups(block, layout, c.meta("n_channels")?, c.meta("bins_per_channel")?, groups);
    let stored: String = c.meta("basis_id")?;
    if stored != basis.basis_id {
        return Err(corrupt(SCHEMA_BASIS, "basis_id does not match basis contents"));
    }
    Ok(basis)
}

pub fn model_to_container(m: &TaskModel) -> Result<Container> {
    let activations: Vec<Activation> = m.network.layers().iter().map(|l| l.activation).collect();
    let mut c = Container::new(
        SCHEMA_MODEL,
        json!({
            "task": m.task,
            "sizes": m.network.sizes(),
            "activations": activations,
            "basis_id": m.basis_id,
            "training": m.metadata,
        }),
    );
    for (i, l) in m.network.layers().iter().enumerate() {
        c.push_f64(
            &format!("layer{i}.weights"),
            &[l.weights.rows(), l.weights.cols()],
            l.weights.as_slice().to_vec(),
        )?;
        c.push_f64(&format!("layer{i}.bias"), &[l.bias.len()], l.bias.clone())?;
    }
    let d = m.input_stats.dim();
    c.push_f64("input_mean", &[d], m.input_stats.mean.clone())?;
    c.push_f64("input_std", &[d], m.input_stats.std.clone())?;
    if let Some(t) = &m.target_stats {
        c.push_f64("target_mean", &[t.dim()], t.mean.clone())?;
        c.push_f64("target_std", &[t.dim()], t.std.clone())?;
    }
    Ok(c)
}

pub fn model_from_container(c: &Container) -> Result<TaskModel> {
    c.expect_schema(SCHEMA_MODEL)?;
    let activations: Vec<Activation> = c.meta("activations")?;
    let mut layers = Vec::with_capacity(activations.len());
    for (i, activation) in activations.into_iter().enumerate() {
        let (shape, w) = c.f64_array(&format!("layer{i}.weights"), 2)?;
        let (_, b) = c.f64_array(&format!("layer{i}.bias"), 1)?;
        layers.push(Layer {
            weights: Matrix::from_vec(shape[0], shape[1], w.to_vec())?,
            bias: b.to_vec(),
            activation,
        });
    }
    let stats = |mean: &str, std: &str| -> Result<Standardizer> {
        Ok(Standardizer {
            mean: c.f64_array(mean, 1)?.1.to_vec(),
            std: c.f64_array(std, 1)?.1.to_vec(),
        })
    };
    let task: Task = c.meta("task")?;
    let target_stats = match task {
        Task::Localize => None,
        Task::Severity(_) => Some(stats("target_mean", "target_std")?),
    };
    let metadata: TrainingMetadata = c.meta("training")?;
    let model = TaskModel {
        task,
        network: MlpNetwork::from_layers(layers)?,
        input_stats: stats("input_mean", "input_std")?,
        target_stats,
        basis_id: c.meta("basis_id")?,
        metadata,
    };
    model.validate()?;
    Ok(model)
}

/// Log-magnitude dataset with its split and provenance metadata.
pub fn dataset_to_container(meas: &Measurements, split: &Split, extra: Value) -> Result<Container> {
    meas.validate()?;
    let mut c = Container::new(
        SCHEMA_DATASET,
        json!({
            "channel_kinds": meas.channel_kinds,
            "scenarios": meas.scenarios,
            "split": split,
            "run": extra,
        }),
    );
    let data: Vec<f64> = meas.log_magnitude.iter().flatten().flatten().copied().collect();
    c.push_f64(
        "log_magnitude",
        &[meas.n_scenarios(), meas.channel_kinds.len(), meas.bins_per_channel()],
        data,
    )?;
    c.push_f64("freq_bins", &[meas.freq_bins.len()], meas.freq_bins.clone())?;
    Ok(c)
}

pub fn dataset_from_container(c: &Container) -> Result<(Measurements, Split)> {
    c.expect_schema(SCHEMA_DATASET)?;
    let (shape, data) = c.f64_array("log_magnitude", 3)?;
    let (_, freq) = c.f64_array("freq_bins", 1)?;
    let (s, ch, b) = (shape[0], shape[1], shape[2]);
    let log_magnitude = (0..s)
        .map(|i| (0..ch).map(|j| data[(i * ch + j) * b..(i * ch + j + 1) * b].to_vec()).collect())
        .collect();
    let meas = Measurements {
        scenarios: c.meta::<Vec<DamageScenario>>("scenarios")?,
        freq_bins: freq.to_vec(),
        channel_kinds: c.meta("channel_kinds")?,
        log_magnitude,
    };
    meas.validate()?;
    let split: Split = c.meta("split")?;
    let n = meas.n_scenarios();
    if split.train.iter().chain(&split.val).chain(&split.test).any(|&i| i >= n) {
        return Err(corrupt(SCHEMA_DATASET, "split references missing scenarios"));
    }
    Ok((meas, split))
}

pub fn write_frf(path: &Path, frf: &FrfMatrix) -> Result<()> {
    frf_to_container(frf)?.write(path)
}

pub fn read_frf(path: &Path) -> Result<FrfMatrix> {
    frf_from_container(&Container::read_schema(path, SCHEMA_FRF)?)
}

pub fn write_basis(path: &Path, b: &PcaBasis) -> Result<()> {
    basis_to_container(b)?.write(path)
}

pub fn read_basis(path: &Path) -> Result<PcaBasis> {
    basis_from_container(&Container::read_schema(path, SCHEMA_BASIS)?)
}

pub fn write_model(path: &Path, m: &TaskModel) -> Result<()> {
    model_to_container(m)?.write(path)
}

pub fn read_model(path: &Path) -> Result<TaskModel> {
    model_from_container(&Container::read_schema(path, SCHEMA_MODEL)?)
}
