//! Single-file checkpoints: an 8-byte magic, a version, a JSON header and
//! the raw little-endian `f32` payload of every named tensor.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Sscn};
use crate::nn::{Adam, AdamConfig, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"SSCNCKPT";
const VERSION: u32 = 1;
const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";

/// Progress counters needed to resume a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub epoch: u64,
    /// Batches of `epoch` already consumed.
    pub batch_in_epoch: u64,
    pub best_metric: Option<f64>,
    /// The training configuration, opaque to this module.
    pub config: Value,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    architecture: IndexMap<String, String>,
    optimizer: Option<OptimizerHeader>,
    train: Option<TrainState>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Sscn,
    pub optimizer: Option<Adam>,
    pub train: Option<TrainState>,
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::BadCheckpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Field-by-field differences between two configs, as `field: a vs b`.
pub fn config_diff<T: Serialize>(stored: &T, runtime: &T) -> Vec<String> {
    let (Ok(Value::Object(a)), Ok(Value::Object(b))) = (serde_json::to_value(stored), serde_json::to_value(runtime)) else {
        return vec!["configs are not comparable".into()];
    };
    let mut diffs = Vec::new();
    for (k, va) in &a {
        match b.get(k) {
            Some(vb) if vb == va => {}
            Some(vb) => diffs.push(format!("{k}: checkpoint {va} vs runtime {vb}")),
            None => diffs.push(format!("{k}: checkpoint {va} vs runtime <absent>")),
        }
    }
    for (k, vb) in &b {
        if !a.contains_key(k) {
            diffs.push(format!("{k}: checkpoint <absent> vs runtime {vb}"));
        }
    }
    diffs
}

impl Checkpoint {
    pub fn new(model: Sscn) -> Self {
        Self {
            model,
            optimizer: None,
            train: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: Vec<(String, &Tensor)> = self.model.params.iter().map(|(n, t)| (n.to_string(), t)).collect();
        if let Some(opt) = &self.optimizer {
            tensors.extend(opt.m.iter().map(|(n, t)| (format!("{ADAM_M}{n}"), t)));
            tensors.extend(opt.v.iter().map(|(n, t)| (format!("{ADAM_V}{n}"), t)));
        }
        let mut offset = 0u64;
        let entries = tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 4 * t.numel() as u64;
                e
            })
            .collect();
        let header = Header {
            model: self.model.config.clone(),
            architecture: self.model.config.arch_notes().into_iter().collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                config: o.config,
                step: o.step,
            }),
            train: self.train.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(20 + json.len() + offset as usize);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, t) in &tensors {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad(path, "not an SSCN checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(path, format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let data_start = 20usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad(path, "truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..data_start]).map_err(|e| bad(path, format!("header: {e}")))?;
        let payload = &bytes[data_start..];
        let mut params = ParamStore::new();
        let mut m = IndexMap::new();
        let mut v = IndexMap::new();
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let slice = payload
                .get(start..start + 4 * n)
                .ok_or_else(|| bad(path, format!("tensor {} runs past end of file", e.name)))?;
            let data = slice.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(&e.shape, data);
            if let Some(name) = e.name.strip_prefix(ADAM_M) {
                m.insert(name.to_string(), t);
            } else if let Some(name) = e.name.strip_prefix(ADAM_V) {
                v.insert(name.to_string(), t);
            } else {
                params.insert(&e.name, t);
            }
        }
        let model = Sscn::from_params(header.model, params)?;
        let optimizer = header.optimizer.map(|o| Adam {
            config: o.config,
            step: o.step,
            m,
            v,
        });
        Ok(Self {
            model,
            optimizer,
            train: header.train,
        })
    }

    /// Load and require the stored model config to equal `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ckpt = Self::load(path)?;
        let diffs = config_diff(&ckpt.model.config, expected);
        if !diffs.is_empty() {
            return Err(Error::ConfigMismatch { diffs });
        }
        Ok(ckpt)
    }
}

/// Path helper: `dir/name`.
pub fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.ckpt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::rgb_to_lab;
    use crate::model::{AttentionMode, ColorizeOptions};
    use image::RgbImage;

    fn tiny() -> ModelConfig {
        ModelConfig {
            scale_factor: 1.0 / 16.0,
            class_count: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let model = Sscn::new(tiny()).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        opt.step = 7;
        opt.m.insert("ldt.wq".into(), Tensor::full(&[2, 2], 0.5));
        opt.v.insert("ldt.wq".into(), Tensor::full(&[2, 2], 0.25));
        let ckpt = Checkpoint {
            model,
            optimizer: Some(opt),
            train: Some(TrainState {
                step: 7,
                epoch: 1,
                batch_in_epoch: 2,
                best_metric: Some(0.5),
                config: serde_json::json!({"lr": 1e-4}),
            }),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = checkpoint_path(dir.path(), "x");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.train, ckpt.train);
        let opt = back.optimizer.as_ref().unwrap();
        assert_eq!(opt.step, 7);
        assert_eq!(opt.m["ldt.wq"], Tensor::full(&[2, 2], 0.5));
        for (name, t) in ckpt.model.params.iter() {
            assert_eq!(**back.model.params.get(name).unwrap(), *t, "{name}");
        }
        let img = RgbImage::from_fn(32, 32, |x, y| image::Rgb([(x * 8) as u8, (y * 8) as u8, 90]));
        let l = rgb_to_lab(&img).luma();
        let opts = ColorizeOptions {
            mode: AttentionMode::Sparse { k: 8, r: 8 },
            seed: 1,
        };
        let a = ckpt.model.colorize(&l, &img, &opts).unwrap();
        let b = back.model.colorize(&l, &img, &opts).unwrap();
        assert_eq!(a.image.a(), b.image.a());
        assert_eq!(a.image.b(), b.image.b());
    }

    #[test]
    fn config_mismatch_reports_diff() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        Checkpoint::new(Sscn::new(tiny()).unwrap()).save(&path).unwrap();
        let other = ModelConfig {
            scale_factor: 0.125,
            ..tiny()
        };
        match Checkpoint::load_expecting(&path, &other) {
            Err(Error::ConfigMismatch { diffs }) => {
                assert_eq!(diffs.len(), 1);
                assert!(diffs[0].starts_with("scale_factor"), "{diffs:?}");
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
        assert!(Checkpoint::load_expecting(&path, &tiny()).is_ok());
    }

    #[test]
    fn garbage_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::BadCheckpoint { .. })));
        let good = dir.path().join("good.ckpt");
        Checkpoint::new(Sscn::new(tiny()).unwrap()).save(&good).unwrap();
        let bytes = fs::read(&good).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::BadCheckpoint { .. })));
    }
}
