//! Evaluation-set manifests: one JSON object per line naming a source
//! image, an augmentation family and the seed that fixes its parameters.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pairs::{make_eval_triplet, AugKind, EvalTriplet};
use crate::error::{Error, Result};
use crate::imaging::{load_rgb, resize_square};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source_path: PathBuf,
    pub aug_type: AugKind,
    pub seed: u64,
    /// SHA-256 of the materialized reference's raw RGB bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative source paths are resolved against.
    pub root: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { entries, root })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Hash of the canonical JSON-lines serialization.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.source_path.is_absolute() {
            entry.source_path.clone()
        } else {
            self.root.join(&entry.source_path)
        }
    }

    /// Regenerate a triplet at `resolution × resolution`. A recorded
    /// reference hash that does not match is an error.
    pub fn materialize(&self, entry: &ManifestEntry, resolution: u32) -> Result<EvalTriplet> {
        let source = resize_square(&load_rgb(&self.resolve(entry))?, resolution);
        let mut rng = ChaCha8Rng::seed_from_u64(entry.seed);
        let triplet = make_eval_triplet(&source, entry.aug_type, &mut rng)?;
        if let Some(want) = &entry.reference_sha256 {
            let got = sha256_hex(triplet.reference.as_raw());
            if &got != want {
                return Err(Error::Manifest(format!(
                    "{}/{}: reference hash {got} does not match manifest {want}",
                    entry.source_path.display(),
                    entry.aug_type
                )));
            }
        }
        Ok(triplet)
    }

    /// One entry per (source, kind); seeds count up from `base_seed`.
    /// Reference hashes are recorded by materializing each entry.
    pub fn build(root: &Path, sources: &[PathBuf], kinds: &[AugKind], base_seed: u64, resolution: u32) -> Result<Self> {
        let mut manifest = Manifest {
            entries: Vec::new(),
            root: root.to_path_buf(),
        };
        let mut seed = base_seed;
        for src in sources {
            for &kind in kinds {
                let mut entry = ManifestEntry {
                    source_path: src.clone(),
                    aug_type: kind,
                    seed,
                    reference_sha256: None,
                };
                let triplet = manifest.materialize(&entry, resolution)?;
                entry.reference_sha256 = Some(sha256_hex(triplet.reference.as_raw()));
                manifest.entries.push(entry);
                seed += 1;
            }
        }
        Ok(manifest)
    }
}
