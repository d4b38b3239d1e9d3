//! Checkpoint files: a text header followed by raw little-endian `f32` data.
//!
//! ```text
//! matrix-se checkpoint
//! version 1
//! step 1200
//! model m=48 blocks=2 vocab_in=12 vocab_out=12 flatten=zorder
//! optimizer step=1200 lr=0.0001 beta1=0.9 beta2=0.999 epsilon=1e-8
//! config 16
//! task=transpose
//! ...
//! arrays 123
//! embedding 12x48 0
//! ...
//! end
//! <payload>
//! ```
//!
//! Array offsets are byte offsets into the payload, which starts right after
//! the `end` line. Arrays are stored in manifest order with no gaps: model
//! parameters first, then the optimizer's first and second moments.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use super::config::{ConfigError, TrainConfig};
use crate::autodiff::{Array, RAdamState};
use crate::model::{init_params_with, InitOptions, ModelParams};
use crate::perm::FlattenKind;
use crate::tasks::TaskId;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "matrix-se checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint manifest does not match the model: {0}")]
    ManifestMismatch(String),
    #[error("checkpoint truncated: payload needs {expected} bytes, file has {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint config: {0}")]
    Config(#[from] ConfigError),
    #[error("checkpoint vocabulary {found:?} does not fit task {task} {expected:?}")]
    VocabMismatch {
        task: TaskId,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub optimizer: RAdamState,
    /// Completed training steps.
    pub step: u64,
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn manifest_arrays(ck: &Checkpoint) -> Vec<(String, &Array)> {
    let params = ck.params.named_tensors();
    let mut out: Vec<(String, &Array)> = params.iter().map(|(n, a)| (n.clone(), *a)).collect();
    for (tag, moments) in [("m", &ck.optimizer.first_moment), ("v", &ck.optimizer.second_moment)] {
        for ((name, _), a) in params.iter().zip(moments) {
            out.push((format!("radam.{tag}.{name}"), a));
        }
    }
    out
}

fn dims(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

/// Serialises a checkpoint to bytes.
pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let p = &ck.params;
    let o = &ck.optimizer;
    let arrays = manifest_arrays(ck);
    let config = ck.config.to_text();
    let mut h = String::new();
    let _ = writeln!(h, "{MAGIC}");
    let _ = writeln!(h, "version {FORMAT_VERSION}");
    let _ = writeln!(h, "step {}", ck.step);
    let _ = writeln!(
        h,
        "model m={} blocks={} vocab_in={} vocab_out={} flatten={}",
        p.m,
        p.num_blocks(),
        p.vocab_in,
        p.vocab_out,
        p.flatten_kind.as_str()
    );
    let _ = writeln!(
        h,
        "optimizer step={} lr={:?} beta1={:?} beta2={:?} epsilon={:?}",
        o.step, o.learning_rate, o.beta1, o.beta2, o.epsilon
    );
    let _ = writeln!(h, "config {}", config.lines().count());
    h.push_str(&config);
    let _ = writeln!(h, "arrays {}", arrays.len());
    let mut offset = 0;
    for (name, a) in &arrays {
        let _ = writeln!(h, "{name} {} {offset}", dims(a.shape()));
        offset += a.len() * 4;
    }
    let _ = writeln!(h, "end");
    let mut out = h.into_bytes();
    out.reserve(offset);
    for (_, a) in &arrays {
        for v in a.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    // write-then-rename so a crash never leaves a half-written checkpoint
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode(ck)).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| CheckpointError::Header("unterminated header".into()))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| CheckpointError::Header("header is not UTF-8".into()))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str, CheckpointError> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| CheckpointError::Header(format!("expected '{key}' line, got {line:?}")))
    }
}

fn fields(line: &str) -> impl Iterator<Item = (&str, &str)> {
    line.split_whitespace().filter_map(|kv| kv.split_once('='))
}

fn field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T, CheckpointError> {
    fields(line)
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| CheckpointError::Header(format!("missing or bad field '{key}'")))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CheckpointError> {
    s.trim()
        .parse()
        .map_err(|_| CheckpointError::Header(format!("bad {what}: {s:?}")))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut lines = Lines { bytes, pos: 0 };
    if lines.next()? != MAGIC {
        return Err(CheckpointError::Header("not a matrix-se checkpoint".into()));
    }
    let version = lines.keyed("version")?;
    if version.trim() != FORMAT_VERSION.to_string() {
        return Err(CheckpointError::VersionMismatch {
            found: version.trim().to_string(),
            expected: FORMAT_VERSION,
        });
    }
    let step: u64 = num(lines.keyed("step")?, "step")?;
    let model = lines.keyed("model")?;
    let m: usize = field(model, "m")?;
    let blocks: usize = field(model, "blocks")?;
    let vocab_in: usize = field(model, "vocab_in")?;
    let vocab_out: usize = field(model, "vocab_out")?;
    let flatten: FlattenKind = field(model, "flatten")?;
    if m == 0 || blocks == 0 || vocab_in == 0 || vocab_out == 0 {
        return Err(CheckpointError::Header("model dimensions must be positive".into()));
    }
    let opt = lines.keyed("optimizer")?;
    let config_lines: usize = num(lines.keyed("config")?, "config line count")?;
    let mut config_text = String::new();
    for _ in 0..config_lines {
        config_text.push_str(lines.next()?);
        config_text.push('\n');
    }
    let config = TrainConfig::from_text(&config_text)?;
    let count: usize = num(lines.keyed("arrays")?, "array count")?;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let line = lines.next()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(CheckpointError::Header(format!("bad manifest line {line:?}")));
        }
        let shape = parts[1]
            .split('x')
            .map(|d| num(d, "dimension"))
            .collect::<Result<Vec<usize>, _>>()?;
        entries.push(Entry {
            name: parts[0].to_string(),
            shape,
            offset: num(parts[2], "offset")?,
        });
    }
    if lines.next()? != "end" {
        return Err(CheckpointError::Header("missing 'end' line".into()));
    }
    let payload = &bytes[lines.pos..];

    let mut params = init_params_with(
        m,
        blocks,
        vocab_in,
        vocab_out,
        0,
        InitOptions {
            flatten_kind: flatten,
            ..InitOptions::default()
        },
    );
    let mut optimizer = RAdamState::new(params.named_tensors().into_iter().map(|(_, a)| a), field(opt, "lr")?);
    optimizer.step = field(opt, "step")?;
    optimizer.beta1 = field(opt, "beta1")?;
    optimizer.beta2 = field(opt, "beta2")?;
    optimizer.epsilon = field(opt, "epsilon")?;
    let skeleton = Checkpoint {
        config,
        params: params.clone(),
        optimizer: optimizer.clone(),
        step,
    };
    let expected: Vec<(String, Vec<usize>)> = manifest_arrays(&skeleton)
        .into_iter()
        .map(|(n, a)| (n, a.shape().to_vec()))
        .collect();
    if expected.len() != entries.len() {
        return Err(CheckpointError::ManifestMismatch(format!(
            "{} arrays listed, model has {}",
            entries.len(),
            expected.len()
        )));
    }
    let mut offset = 0usize;
    for (e, (name, shape)) in entries.iter().zip(&expected) {
        if &e.name != name || &e.shape != shape {
            return Err(CheckpointError::ManifestMismatch(format!(
                "entry {} {} where {} {} was expected",
                e.name,
                dims(&e.shape),
                name,
                dims(shape)
            )));
        }
        if e.offset != offset {
            return Err(CheckpointError::ManifestMismatch(format!(
                "{} at byte {} but previous arrays end at {offset}",
                e.name, e.offset
            )));
        }
        offset += shape.iter().product::<usize>() * 4;
    }
    if payload.len() < offset {
        return Err(CheckpointError::Truncated {
            expected: offset,
            found: payload.len(),
        });
    }
    if payload.len() > offset {
        return Err(CheckpointError::ManifestMismatch(format!(
            "{} trailing bytes after the last array",
            payload.len() - offset
        )));
    }

    let mut chunks = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut fill = |a: &mut Array| {
        for v in a.data_mut() {
            *v = chunks.next().expect("length checked above");
        }
    };
    for a in params.tensors_mut() {
        fill(a);
    }
    for a in optimizer.first_moment.iter_mut() {
        fill(a);
    }
    for a in optimizer.second_moment.iter_mut() {
        fill(a);
    }
    Ok(Checkpoint {
        config: skeleton.config,
        params,
        optimizer,
        step,
    })
}

impl Checkpoint {
    /// Parameters for `task`, provided the vocabularies agree.
    pub fn params_for(&self, task: TaskId) -> Result<&ModelParams, CheckpointError> {
        let expected = (task.vocab_in(), task.vocab_out());
        let found = (self.params.vocab_in, self.params.vocab_out);
        if expected != found {
            return Err(CheckpointError::VocabMismatch { task, expected, found });
        }
        Ok(&self.params)
    }
}
