//! Checkpoint container: `PSGN1` magic, a little-endian `u64` header length,
//! a JSON header (configs, counters, RNG state, tensor directory) and the raw
//! little-endian `f32` payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Parameters};
use crate::tensor::Tensor;
use crate::trainer::{TrainConfig, TrainState};

pub const MAGIC: &[u8; 5] = b"PSGN1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in `f32` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        RngState {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::CorruptCheckpoint("malformed rng state".into());
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse::<u128>().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSteps {
    pub generator: u64,
    pub db: u64,
    pub dp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: TrainConfig,
    pub epoch: usize,
    pub step: u64,
    pub rng: RngState,
    pub optimizer_steps: OptimizerSteps,
    pub tensors: Vec<TensorEntry>,
    pub payload_len: usize,
}

/// Every tensor of the state in checkpoint order.
fn collect_tensors(state: &TrainState) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    let mut network = |prefix: &str, module: &dyn Parameters<f32>, opt: &Adam| {
        let mut names = Vec::new();
        module.visit_params(prefix, &mut |name, p| {
            names.push(name.to_string());
            out.push((name.to_string(), p.value.clone()));
        });
        module.visit_buffers(prefix, &mut |name, b| out.push((name.to_string(), b.clone())));
        for (name, m) in names.iter().zip(&opt.first) {
            out.push((format!("adam.m.{name}"), m.clone()));
        }
        for (name, v) in names.iter().zip(&opt.second) {
            out.push((format!("adam.v.{name}"), v.clone()));
        }
    };
    network("generator", &state.generator, &state.opt_generator);
    network("db", &state.db, &state.opt_db);
    network("dp", &state.dp, &state.opt_dp);
    out
}

/// Serializes the full state into container bytes.
pub fn encode_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let tensors = collect_tensors(state);
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for (name, t) in &tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
    }
    let header = CheckpointHeader {
        version: VERSION,
        config: state.config.clone(),
        epoch: state.epoch,
        step: state.step,
        rng: RngState::capture(&state.rng),
        optimizer_steps: OptimizerSteps {
            generator: state.opt_generator.step,
            db: state.opt_db.step,
            dp: state.opt_dp.step,
        },
        tensors: entries,
        payload_len: offset,
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(MAGIC.len() + 8 + json.len() + 4 * offset);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

/// Writes atomically: a sibling temporary file is renamed over `path`.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(state)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

/// Parses and validates the header without building networks.
pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let len_bytes: [u8; 8] = bytes[MAGIC.len()..MAGIC.len() + 8].try_into().unwrap();
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let start = MAGIC.len() + 8;
    let end = start
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes[start..end]).map_err(|e| corrupt(format!("header: {e}")))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == VERSION as u64 => {}
        Some(v) => return Err(corrupt(format!("unsupported version {v}"))),
        None => return Err(corrupt("missing version")),
    }
    let header: CheckpointHeader =
        serde_json::from_value(value).map_err(|e| corrupt(format!("header: {e}")))?;
    let payload = &bytes[end..];
    if payload.len() != 4 * header.payload_len {
        return Err(corrupt(format!(
            "payload has {} bytes, header declares {} floats",
            payload.len(),
            header.payload_len
        )));
    }
    Ok((header, payload))
}

struct Payload<'a> {
    entries: std::slice::Iter<'a, TensorEntry>,
    data: &'a [u8],
    error: Option<Error>,
}

impl Payload<'_> {
    fn fill(&mut self, name: &str, target: &mut Tensor) {
        if self.error.is_some() {
            return;
        }
        let Some(entry) = self.entries.next() else {
            self.error = Some(corrupt(format!("missing tensor {name}")));
            return;
        };
        if entry.name != name || entry.shape != target.shape() {
            self.error = Some(corrupt(format!(
                "expected {name} {:?}, found {} {:?}",
                target.shape(),
                entry.name,
                entry.shape
            )));
            return;
        }
        let start = entry.offset * 4;
        let Some(raw) = self.data.get(start..start + target.len() * 4) else {
            self.error = Some(corrupt(format!("tensor {name} exceeds payload")));
            return;
        };
        for (v, chunk) in target.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
}

fn restore_network<M: Parameters<f32>>(
    payload: &mut Payload<'_>,
    prefix: &str,
    module: &mut M,
    opt: &mut Adam,
) {
    let mut names = Vec::new();
    module.visit_params_mut(prefix, &mut |name, p| {
        names.push(name.to_string());
        payload.fill(name, &mut p.value);
    });
    module.visit_buffers_mut(prefix, &mut |name, b| payload.fill(name, b));
    for (name, m) in names.iter().zip(opt.first.iter_mut()) {
        payload.fill(&format!("adam.m.{name}"), m);
    }
    for (name, v) in names.iter().zip(opt.second.iter_mut()) {
        payload.fill(&format!("adam.v.{name}"), v);
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    let (header, data) = read_header(bytes)?;
    let mut state = TrainState::new(header.config.clone())
        .map_err(|e| corrupt(format!("invalid stored config: {e}")))?;
    let mut payload = Payload {
        entries: header.tensors.iter(),
        data,
        error: None,
    };
    restore_network(&mut payload, "generator", &mut state.generator, &mut state.opt_generator);
    restore_network(&mut payload, "db", &mut state.db, &mut state.opt_db);
    restore_network(&mut payload, "dp", &mut state.dp, &mut state.opt_dp);
    if let Some(err) = payload.error {
        return Err(err);
    }
    if payload.entries.next().is_some() {
        return Err(corrupt("unexpected extra tensors"));
    }
    state.opt_generator.step = header.optimizer_steps.generator;
    state.opt_db.step = header.optimizer_steps.db;
    state.opt_dp.step = header.optimizer_steps.dp;
    state.epoch = header.epoch;
    state.step = header.step;
    state.rng = header.rng.restore()?;
    Ok(state)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::tests::{tiny_config, tiny_pair};
    use rand::RngCore;

    fn trained_state() -> TrainState {
        let mut state = TrainState::new(tiny_config()).unwrap();
        state.train_step(&tiny_pair(3)).unwrap();
        state.rng.next_u64();
        state
    }

    #[test]
    fn encode_decode_encode_is_byte_identical() {
        let state = trained_state();
        let bytes = encode_checkpoint(&state).unwrap();
        let restored = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&restored).unwrap(), bytes);
        assert_eq!(restored.step, 1);
        let mut a = state.rng.clone();
        let mut b = restored.rng.clone();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn save_and_load_through_the_filesystem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.psgn");
        let state = trained_state();
        save_checkpoint(&state, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let again = dir.path().join("again.psgn");
        save_checkpoint(&loaded, &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
        assert!(!dir.path().join(".model.psgn.tmp").exists());
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode_checkpoint(&trained_state()).unwrap();
        for cut in [3, 20, bytes.len() - 1] {
            assert!(matches!(
                decode_checkpoint(&bytes[..cut]),
                Err(Error::CorruptCheckpoint(_))
            ));
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let state = trained_state();
        let bytes = encode_checkpoint(&state).unwrap();
        let (header, payload) = read_header(&bytes).unwrap();
        let mut header = header;
        header.version = 2;
        let json = serde_json::to_vec(&header).unwrap();
        let mut forged = MAGIC.to_vec();
        forged.extend_from_slice(&(json.len() as u64).to_le_bytes());
        forged.extend_from_slice(&json);
        forged.extend_from_slice(payload);
        match decode_checkpoint(&forged) {
            Err(Error::CorruptCheckpoint(msg)) => assert!(msg.contains("unsupported version")),
            other => panic!("expected unsupported version, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_checkpoint(&trained_state()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::CorruptCheckpoint(_))));
    }
}
