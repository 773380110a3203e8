//! Binary checkpoint format.
//!
//! ```text
//! "SSGN"                      4-byte magic
//! u32 LE                      format version (1)
//! u64 LE + UTF-8              config block: `key=value` lines
//! repeated: u64 LE n + n×f64 LE
//!                             tensors in declaration order: generator
//!                             W0, b0, W1, b1, ..., then Adam first moments
//!                             in the same order, then Adam second moments
//! ```
//!
//! Floats in the config block use Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every field bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CheckpointError, Error, Result};
use crate::generator::{AdamState, GeneratorConfig, GeneratorParams};
use crate::ndgrad::MlpParams;
use crate::scalar::Scalar;
use crate::ssprior::PriorParams;

pub const MAGIC: [u8; 4] = *b"SSGN";
pub const VERSION: u32 = 1;

/// Everything needed to resume training or evaluate a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T = f64> {
    pub generator: GeneratorConfig<T>,
    /// Prior with the live sparsity level as `alpha1`.
    pub prior: PriorParams<T>,
    pub params: GeneratorParams<T>,
    pub adam: AdamState<T>,
    /// Number of completed epochs.
    pub epoch: usize,
    /// Master seed; per-epoch random streams are derived from it and `epoch`.
    pub seed: u64,
}

impl<T: Scalar> Checkpoint<T> {
    fn config_block(&self) -> String {
        let g = &self.generator;
        let f = |v: T| format!("{:?}", v.f64());
        let lines = [
            ("scalar", T::NAME.to_string()),
            ("latent_dim", g.latent_dim.to_string()),
            ("output_dim", g.output_dim.to_string()),
            ("layers", g.layers_string()),
            ("obs_noise_sigma", f(g.obs_noise_sigma)),
            ("alpha1", f(self.prior.alpha1())),
            ("sigma1_sq", f(self.prior.sigma1_sq())),
            ("sigma2_sq", f(self.prior.sigma2_sq())),
            ("adam_t", self.adam.t.to_string()),
            ("adam_beta1", f(self.adam.beta1)),
            ("adam_beta2", f(self.adam.beta2)),
            ("adam_eps", f(self.adam.eps)),
            ("epoch", self.epoch.to_string()),
            ("seed", self.seed.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let block = self.config_block();
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        out.extend_from_slice(block.as_bytes());
        let tensors = self
            .params
            .tensors()
            .map(|t| t.data())
            .chain(self.adam.m.iter().map(Vec::as_slice))
            .chain(self.adam.v.iter().map(Vec::as_slice));
        for data in tensors {
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.f64().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic).into());
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version).into());
        }
        let block_len = r.len("config length")?;
        let block = std::str::from_utf8(r.take(block_len, "config block")?)
            .map_err(|_| corrupt("config block is not UTF-8"))?;
        let cfg = ConfigBlock::parse(block)?;

        let latent_dim: usize = cfg.get("latent_dim")?;
        let output_dim: usize = cfg.get("output_dim")?;
        let layers = GeneratorConfig::<T>::parse_layers(cfg.raw("layers")?)
            .map_err(|e| corrupt(e.to_string()))?;
        let generator = GeneratorConfig {
            latent_dim,
            layers,
            obs_noise_sigma: T::of(cfg.get::<f64>("obs_noise_sigma")?),
            output_dim,
        };
        generator.validate().map_err(|e| corrupt(e.to_string()))?;
        let prior = PriorParams::new(
            T::of(cfg.get("alpha1")?),
            T::of(cfg.get("sigma1_sq")?),
            T::of(cfg.get("sigma2_sq")?),
        )
        .map_err(|e| corrupt(e.to_string()))?;

        let mut params = MlpParams::zeros(&generator.layers);
        for t in params.tensors_mut() {
            r.tensor_into(t.data_mut())?;
        }
        let mut adam = AdamState::with_hyper(
            &params,
            T::of(cfg.get("adam_beta1")?),
            T::of(cfg.get("adam_beta2")?),
            T::of(cfg.get("adam_eps")?),
        );
        adam.t = cfg.get("adam_t")?;
        for m in adam.m.iter_mut() {
            r.tensor_into(m)?;
        }
        for v in adam.v.iter_mut() {
            r.tensor_into(v)?;
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            generator,
            prior,
            params,
            adam,
            epoch: cfg.get("epoch")?,
            seed: cfg.get("seed")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn save_checkpoint<T: Scalar>(path: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    Checkpoint::load(path)
}

fn corrupt(msg: impl Into<String>) -> Error {
    CheckpointError::Corrupt(msg.into()).into()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self, what: &'static str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| corrupt(format!("{what} {v} too large")))
    }

    fn tensor_into<T: Scalar>(&mut self, dst: &mut [T]) -> Result<()> {
        let n = self.len("tensor length")?;
        if n != dst.len() {
            return Err(corrupt(format!(
                "tensor holds {n} values, configuration implies {}",
                dst.len()
            )));
        }
        let raw = self.take(n.checked_mul(8).ok_or(CheckpointError::Truncated("tensor data"))?, "tensor data")?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(8)) {
            *d = T::of(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
        }
        Ok(())
    }
}

struct ConfigBlock<'a> {
    entries: BTreeMap<&'a str, &'a str>,
}

impl<'a> ConfigBlock<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| corrupt(format!("config line without '=': {line:?}")))?;
            entries.insert(k.trim(), v.trim());
        }
        Ok(ConfigBlock { entries })
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.entries
            .get(key)
            .copied()
            .ok_or_else(|| corrupt(format!("missing config key {key}")))
    }

    fn get<V: FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| corrupt(format!("bad value {raw:?} for {key}")))
    }
}
