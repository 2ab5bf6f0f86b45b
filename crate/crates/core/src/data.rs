//! Class-labeled image folders and a synthetic generator for them.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{load_rgb, resize_square, save_rgb};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetItem {
    pub path: PathBuf,
    pub class: usize,
}

/// `root/<class>/<image>` layout. Classes are subdirectories in sorted
/// order; images directly under `root` are rejected as unlabeled.
#[derive(Clone, Debug)]
pub struct ImageFolder {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub items: Vec<DatasetItem>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

impl ImageFolder {
    pub fn open(root: &Path) -> Result<Self> {
        let mut classes = Vec::new();
        let mut items = Vec::new();
        for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
            let class = classes.len();
            classes.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
            for path in sorted_entries(&dir)?.into_iter().filter(|p| p.is_file() && is_image(p)) {
                items.push(DatasetItem { path, class });
            }
        }
        if items.is_empty() {
            return Err(Error::EmptyDataset(root.to_path_buf()));
        }
        Ok(Self {
            root: root.to_path_buf(),
            classes,
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Keep the first `n` images of each class, cycling over classes until
    /// `n` images in total are kept.
    pub fn truncate_balanced(&mut self, n: usize) {
        let mut per_class: Vec<Vec<DatasetItem>> = vec![Vec::new(); self.classes.len()];
        for item in self.items.drain(..) {
            per_class[item.class].push(item);
        }
        let mut iters: Vec<_> = per_class.into_iter().map(|v| v.into_iter()).collect();
        let mut kept = Vec::with_capacity(n);
        while kept.len() < n {
            let before = kept.len();
            for it in iters.iter_mut() {
                if kept.len() == n {
                    break;
                }
                kept.extend(it.next());
            }
            if kept.len() == before {
                break;
            }
        }
        kept.sort_by(|a, b| a.path.cmp(&b.path));
        self.items = kept;
    }

    /// Decode every image resized to `resolution × resolution`.
    pub fn load_all(&self, resolution: u32) -> Result<Vec<RgbImage>> {
        self.items
            .par_iter()
            .map(|item| Ok(resize_square(&load_rgb(&item.path)?, resolution)))
            .collect()
    }
}

fn hsv(h: f32, s: f32, v: f32) -> Rgb<u8> {
    let h = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    Rgb([r, g, b].map(|ch| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8))
}

/// A colorful synthetic scene whose palette and shape family depend on
/// `class`: a two-tone gradient background plus a few blobs.
pub fn synthetic_image(class: usize, classes: usize, size: u32, rng: &mut impl Rng) -> RgbImage {
    let base = class as f32 / classes.max(1) as f32;
    let jitter = rng.random_range(-0.03f32..0.03);
    let bg = (base + jitter, base + 0.5 + jitter);
    let bg_v = (rng.random_range(0.35f32..0.6), rng.random_range(0.7f32..0.95));
    let angle = rng.random_range(0.0f32..std::f32::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let n_shapes = rng.random_range(2..=4);
    let shapes: Vec<(f32, f32, f32, f32, f32)> = (0..n_shapes)
        .map(|i| {
            (
                rng.random_range(0.15f32..0.85),
                rng.random_range(0.15f32..0.85),
                rng.random_range(0.1f32..0.25),
                base + 0.25 + 0.1 * i as f32 + rng.random_range(-0.03f32..0.03),
                rng.random_range(0.75f32..1.0),
            )
        })
        .collect();
    let square = class % 2 == 1;
    RgbImage::from_fn(size, size, |x, y| {
        let (u, v) = (x as f32 / size as f32, y as f32 / size as f32);
        for &(cx, cy, r, hue, val) in shapes.iter().rev() {
            let (dx, dy) = (u - cx, v - cy);
            let inside = if square { dx.abs().max(dy.abs()) < r } else { dx * dx + dy * dy < r * r };
            if inside {
                return hsv(hue, 0.85, val);
            }
        }
        let t = ((u - 0.5) * ca + (v - 0.5) * sa + 0.5).clamp(0.0, 1.0);
        hsv(bg.0 + (bg.1 - bg.0) * t * 0.3, 0.7, bg_v.0 + (bg_v.1 - bg_v.0) * t)
    })
}

/// Write `classes × per_class` synthetic PNGs in the folder layout
/// [`ImageFolder::open`] reads.
pub fn write_synthetic_dataset(root: &Path, classes: usize, per_class: usize, size: u32, seed: u64) -> Result<ImageFolder> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in 0..classes {
        let dir = root.join(format!("class_{class:02}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..per_class {
            let img = synthetic_image(class, classes, size, &mut rng);
            save_rgb(&img, &dir.join(format!("img_{i:04}.png")))?;
        }
    }
    ImageFolder::open(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_folder_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write_synthetic_dataset(dir.path(), 3, 4, 32, 1).unwrap();
        assert_eq!(ds.classes, vec!["class_00", "class_01", "class_02"]);
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.items[5].class, 1);
        let imgs = ds.load_all(16).unwrap();
        assert_eq!(imgs[0].dimensions(), (16, 16));
        assert!(imgs[0].pixels().any(|p| p.0[0] != p.0[1] || p.0[1] != p.0[2]));
    }

    #[test]
    fn balanced_truncation_cycles_classes() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = write_synthetic_dataset(dir.path(), 3, 4, 16, 2).unwrap();
        ds.truncate_balanced(5);
        let mut counts = [0; 3];
        for it in &ds.items {
            counts[it.class] += 1;
        }
        assert_eq!(counts, [2, 2, 1]);
    }

    #[test]
    fn empty_folder_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("only_class")).unwrap();
        assert!(matches!(ImageFolder::open(dir.path()), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn generator_is_seeded() {
        let a = synthetic_image(2, 5, 24, &mut ChaCha8Rng::seed_from_u64(3));
        let b = synthetic_image(2, 5, 24, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
