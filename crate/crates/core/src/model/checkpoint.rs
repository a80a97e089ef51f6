//! Binary checkpoint container.
//!
//! ```text
//! magic     8 bytes  "DPDNCKPT"
//! version   u32
//! header    u32 length + UTF-8 TOML (model config and training counters)
//! tensors   u32 count, then per tensor:
//!             u16 name length, name, 4 x u32 shape, f32 data
//! optimizer u8 flag; if 1: u64 step, then m and v (f32) for every tensor
//! crc32     u32 over every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, AdamState, Tensor4};

pub const MAGIC: &[u8; 8] = b"DPDNCKPT";
pub const VERSION: u32 = 1;

/// Training counters stored alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingState {
    /// Number of completed epochs.
    pub epoch: u64,
    /// Number of completed optimiser steps.
    pub step: u64,
    pub best_val: Option<f64>,
    pub best_epoch: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    state: TrainingState,
    adam: Option<AdamHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamHeader {
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub state: TrainingState,
    pub optimizer: Option<Adam<f32>>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        self.0.reserve(v.len() * 4);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> std::result::Result<&'b [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("unexpected end of data at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f32>, String> {
        let bytes = self.take(n.checked_mul(4).ok_or("tensor too large")?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>) -> Self {
        Self {
            params,
            state: TrainingState::default(),
            optimizer: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.params.config,
            state: self.state,
            adam: self.optimizer.as_ref().map(|a| AdamHeader {
                beta1: a.config.beta1,
                beta2: a.config.beta2,
                eps: a.config.eps,
            }),
        };
        let text = toml::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u32(text.len() as u32);
        w.0.extend_from_slice(text.as_bytes());
        let tensors = self.params.tensors();
        w.u32(tensors.len() as u32);
        for (name, t) in tensors {
            w.u16(name.len() as u16);
            w.0.extend_from_slice(name.as_bytes());
            for d in t.shape() {
                w.u32(d as u32);
            }
            w.f32s(t.data());
        }
        match &self.optimizer {
            None => w.u8(0),
            Some(adam) => {
                w.u8(1);
                w.u64(adam.step_count());
                for st in &adam.states {
                    w.f32s(&st.m);
                    w.f32s(&st.v);
                }
            }
        }
        let crc = crc32fast::hash(&w.0);
        w.u32(crc);
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(bad("checksum mismatch (file corrupt or truncated)".into()));
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = r.u32().map_err(bad)?;
        if version != VERSION {
            return Err(bad(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let len = r.u32().map_err(bad)? as usize;
        let text = std::str::from_utf8(r.take(len).map_err(bad)?)
            .map_err(|e| bad(format!("header is not UTF-8: {e}")))?;
        let header: Header = toml::from_str(text).map_err(|e| bad(format!("bad header: {e}")))?;

        let count = r.u32().map_err(bad)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let n = r.u16().map_err(bad)? as usize;
            let name = String::from_utf8(r.take(n).map_err(bad)?.to_vec())
                .map_err(|e| bad(format!("tensor name is not UTF-8: {e}")))?;
            let mut shape = [0usize; 4];
            for d in &mut shape {
                *d = r.u32().map_err(bad)? as usize;
            }
            let data = r.f32s(shape.iter().product()).map_err(bad)?;
            tensors.push((name, Tensor4::from_vec(shape, data)?));
        }
        let params = ModelParams::from_tensors(header.model, tensors).map_err(|e| bad(e.to_string()))?;

        let optimizer = match r.u8().map_err(bad)? {
            0 => None,
            1 => {
                let cfg = header
                    .adam
                    .map(|a| AdamConfig {
                        beta1: a.beta1,
                        beta2: a.beta2,
                        eps: a.eps,
                    })
                    .unwrap_or_default();
                let step = r.u64().map_err(bad)?;
                let mut states = Vec::with_capacity(params.tensors().len());
                for (_, t) in params.tensors() {
                    let m = r.f32s(t.len()).map_err(bad)?;
                    let v = r.f32s(t.len()).map_err(bad)?;
                    states.push(AdamState { m, v, step });
                }
                Some(Adam { config: cfg, states })
            }
            f => return Err(bad(format!("invalid optimiser flag {f}"))),
        };
        if r.pos != body.len() {
            return Err(bad(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self {
            params,
            state: header.state,
            optimizer,
        })
    }

    /// Writes atomically via a temporary file in the same directory.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Loads a checkpoint and checks that it was built for `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        let got = ck.params.config;
        if got.param_shapes() != expected.param_shapes() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: format!(
                    "shape mismatch: checkpoint holds a {} model (base {}, depth {}), expected {} (base {}, depth {})",
                    got.input_variant,
                    got.base_filters,
                    got.depth,
                    expected.input_variant,
                    expected.base_filters,
                    expected.depth
                ),
            });
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, forward, InputVariant};

    fn sample() -> Checkpoint {
        let cfg = ModelConfig::reduced(InputVariant::Dual, 4, 2, 16);
        let params = build::<f32>(&cfg, 5).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), params.tensors().iter().map(|(_, t)| t));
        for (i, st) in adam.states.iter_mut().enumerate() {
            st.step = 7;
            st.m.iter_mut().for_each(|m| *m = i as f32 * 0.5);
            st.v.iter_mut().for_each(|v| *v = 0.25);
        }
        Checkpoint {
            params,
            state: TrainingState {
                epoch: 3,
                step: 7,
                best_val: Some(0.012345678901234),
                best_epoch: Some(2),
            },
            optimizer: Some(adam),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let probe = Tensor4::from_fn([1, 8, 8, 6], |[_, y, x, c]| ((y * 8 + x + c) % 5) as f32 / 5.0);
        assert_eq!(
            forward(&ck.params, &probe).unwrap(),
            forward(&back.params, &probe).unwrap()
        );
    }

    #[test]
    fn truncation_and_corruption_fail_checksum() {
        let bytes = sample().to_bytes().unwrap();
        let p = Path::new("x.ckpt");
        for cut in [bytes.len() - 1, bytes.len() / 2, 20] {
            let err = Checkpoint::from_bytes(&bytes[..cut], p).unwrap_err();
            assert!(err.to_string().contains("checksum"), "{err}");
        }
        let mut flipped = bytes.clone();
        flipped[100] ^= 0x40;
        assert!(Checkpoint::from_bytes(&flipped, p).unwrap_err().to_string().contains("checksum"));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
    }

    #[test]
    fn wrong_variant_is_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        sample().save(&path).unwrap();
        let single = ModelConfig::reduced(InputVariant::Single, 4, 2, 16);
        let err = Checkpoint::load_expecting(&path, &single).unwrap_err();
        assert!(err.to_string().contains("shape mismatch"), "{err}");
    }
}
