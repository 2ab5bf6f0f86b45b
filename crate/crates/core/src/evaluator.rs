//! Self-augmentation evaluation: colorize a gray image from a distorted copy
//! of itself and score the result against the original.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{lab_to_rgb, rgb_to_lab, LabImage, LumaPlane};
use crate::error::{Error, Result};
use crate::imaging::resize_square;
use crate::model::{ColorizeOptions, Sscn};
use crate::warp::{AugKind, Manifest};

/// Reported PSNR when the images are identical.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const HIS_BINS: usize = 32;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn same_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::Shape(format!("images differ in size: {:?} vs {:?}", a.dimensions(), b.dimensions())));
    }
    Ok(())
}

/// `10·log10(255² / MSE)` over all three channels, capped at [`PSNR_CAP`].
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.as_raw().len();
    let sse: f64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (255.0f64 * 255.0 / (sse / n as f64)).log10()).min(PSNR_CAP))
}

/// BT.601 luma in `[0, 255]`.
pub fn luminance(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64)
        .collect()
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h × w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            rows[y * ow + ox] = (0..n).map(|i| k[i] * x[y * w + ox + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = (0..n).map(|i| k[i] * rows[(oy + i) * ow + ox]).sum();
        }
    }
    out
}

/// Per-window SSIM from local statistics.
pub fn ssim_index(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
}

/// Mean SSIM of the luma planes over all 11×11 Gaussian windows that fit.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}")));
    }
    let (x, y) = (luminance(a), luminance(b));
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mx = filter_valid(&x, h, w, &k);
    let my = filter_valid(&y, h, w, &k);
    let mxx = filter_valid(&prod(&x, &x), h, w, &k);
    let myy = filter_valid(&prod(&y, &y), h, w, &k);
    let mxy = filter_valid(&prod(&x, &y), h, w, &k);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            ssim_index(ux, uy, mxx[i] - ux * ux, myy[i] - uy * uy, mxy[i] - ux * uy)
        })
        .sum();
    Ok(total / n as f64)
}

/// Histogram intersection over 32-bin per-channel normalized histograms,
/// averaged over channels.
pub fn his(pred: &RgbImage, reference: &RgbImage) -> f64 {
    let hist = |img: &RgbImage| {
        let mut h = [[0.0f64; HIS_BINS]; 3];
        for p in img.pixels() {
            for c in 0..3 {
                h[c][p.0[c] as usize * HIS_BINS / 256] += 1.0;
            }
        }
        let n = (img.width() * img.height()).max(1) as f64;
        h.map(|ch| ch.map(|v| v / n))
    };
    let (a, b) = (hist(pred), hist(reference));
    (0..3)
        .map(|c| (0..HIS_BINS).map(|i| a[c][i].min(b[c][i])).sum::<f64>())
        .sum::<f64>()
        / 3.0
}

/// Anything that predicts chroma for a gray image from a color reference.
/// Implementations only ever see the luminance of the ground truth.
pub trait Colorizer: Sync {
    fn colorize(&self, target_l: &LumaPlane, reference: &RgbImage, seed: u64) -> Result<LabImage>;
}

/// Which network output is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Coarse,
    #[default]
    Final,
}

pub struct ModelColorizer<'a> {
    pub model: &'a Sscn,
    pub options: ColorizeOptions,
    pub stage: Stage,
}

impl Colorizer for ModelColorizer<'_> {
    fn colorize(&self, target_l: &LumaPlane, reference: &RgbImage, seed: u64) -> Result<LabImage> {
        let opts = ColorizeOptions {
            seed: self.options.seed ^ seed,
            ..self.options
        };
        let out = self.model.colorize(target_l, reference, &opts)?;
        match self.stage {
            Stage::Final => Ok(out.image),
            Stage::Coarse => out
                .coarse
                .ok_or_else(|| Error::InvalidInput("this model variant has no coarse stage".into())),
        }
    }
}

/// Oracle that pastes the reference's chroma under the target luminance.
pub struct CopyReferenceChroma;

impl Colorizer for CopyReferenceChroma {
    fn colorize(&self, target_l: &LumaPlane, reference: &RgbImage, _seed: u64) -> Result<LabImage> {
        let reference = if reference.dimensions() == (target_l.width as u32, target_l.height as u32) {
            reference.clone()
        } else {
            image::imageops::resize(
                reference,
                target_l.width as u32,
                target_l.height as u32,
                image::imageops::FilterType::Triangle,
            )
        };
        LabImage::from_planes(target_l.clone(), rgb_to_lab(&reference).chroma())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub index: usize,
    pub source: PathBuf,
    pub aug_type: AugKind,
    pub psnr: f64,
    pub ssim: f64,
    pub his: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingEntry {
    pub index: usize,
    pub source: PathBuf,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugSummary {
    pub aug_type: AugKind,
    pub count: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub manifest_sha256: String,
    pub psnr_space: String,
    pub rows: Vec<EvalRow>,
    pub missing: Vec<MissingEntry>,
    pub entries: usize,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl EvalReport {
    /// Per-family means in TPS, RR, RC order, for families with rows.
    pub fn summaries(&self) -> Vec<AugSummary> {
        let mut by: BTreeMap<AugKind, Vec<&EvalRow>> = BTreeMap::new();
        for r in &self.rows {
            by.entry(r.aug_type).or_default().push(r);
        }
        by.into_iter()
            .map(|(aug_type, rows)| AugSummary {
                aug_type,
                count: rows.len(),
                psnr: mean(rows.iter().map(|r| r.psnr)),
                ssim: mean(rows.iter().map(|r| r.ssim)),
            })
            .collect()
    }

    /// Mean of the per-family means.
    pub fn mean(&self) -> (f64, f64) {
        let s = self.summaries();
        (mean(s.iter().map(|a| a.psnr)), mean(s.iter().map(|a| a.ssim)))
    }

    fn header(&self) -> String {
        format!(
            "# method={}\n# psnr_space={}\n# manifest_sha256={}\n# coverage={}/{}\n",
            self.method,
            self.psnr_space,
            self.manifest_sha256,
            self.rows.len(),
            self.entries
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("index,source,aug_type,psnr,ssim,his\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6}",
                r.index,
                r.source.display(),
                r.aug_type.label(),
                r.psnr,
                r.ssim,
                r.his
            );
        }
        for m in &self.missing {
            let _ = writeln!(out, "# missing {} {}: {}", m.index, m.source.display(), m.reason);
        }
        out
    }

    /// PSNR/SSIM cells per reference family plus the mean column.
    pub fn to_table(&self) -> String {
        render_table(&[self])
    }

    /// Write the CSV to `path` and the rendered table next to it as `.txt`.
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let table = path.with_extension("txt");
        let text = format!("{}{}", self.header(), self.to_table());
        fs::write(&table, text).map_err(|e| Error::io(&table, e))?;
        Ok(table)
    }
}

/// One row per report in the layout `Methods | TPS | RR | RC | Mean`.
pub fn render_table(reports: &[&EvalReport]) -> String {
    let mut header = vec!["Methods".to_string()];
    header.extend(AugKind::ALL.iter().map(|k| k.label().to_string()));
    header.push("Mean".into());
    let mut rows = vec![header];
    for r in reports {
        let s = r.summaries();
        let mut row = vec![r.method.clone()];
        for kind in AugKind::ALL {
            row.push(match s.iter().find(|a| a.aug_type == kind) {
                Some(a) => format!("{:.2}/{:.3}", a.psnr, a.ssim),
                None => "-".into(),
            });
        }
        let (p, q) = r.mean();
        row.push(format!("{p:.2}/{q:.3}"));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("-|-"));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub method: String,
    pub resolution: u32,
    pub aug_types: Vec<AugKind>,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            method: "SSCN".into(),
            resolution: 96,
            aug_types: AugKind::ALL.to_vec(),
            jobs: 0,
        }
    }
}

fn score(colorizer: &dyn Colorizer, manifest: &Manifest, index: usize, resolution: u32) -> Result<EvalRow> {
    let entry = &manifest.entries[index];
    let triplet = manifest.materialize(entry, resolution)?;
    let lab = colorizer.colorize(&triplet.target_l, &triplet.reference, entry.seed)?;
    let pred = lab_to_rgb(&lab);
    Ok(EvalRow {
        index,
        source: entry.source_path.clone(),
        aug_type: entry.aug_type,
        psnr: psnr(&pred, &triplet.gt_rgb)?,
        ssim: ssim(&pred, &triplet.gt_rgb)?,
        his: his(&pred, &triplet.reference),
    })
}

/// Score every manifest entry of the requested families. Unreadable source
/// images are listed as missing rather than aborting the run; a reference
/// that no longer matches its recorded hash is an error.
pub fn evaluate(colorizer: &dyn Colorizer, manifest: &Manifest, opts: &EvalOptions) -> Result<EvalReport> {
    let indices: Vec<usize> = (0..manifest.entries.len())
        .filter(|&i| opts.aug_types.contains(&manifest.entries[i].aug_type))
        .collect();
    let run = || -> Vec<(usize, Result<EvalRow>)> {
        indices
            .par_iter()
            .map(|&i| (i, score(colorizer, manifest, i, opts.resolution)))
            .collect()
    };
    let results = if opts.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?
            .install(run)
    } else {
        run()
    };
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (index, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e @ (Error::Io { .. } | Error::Image { .. })) => missing.push(MissingEntry {
                index,
                source: manifest.entries[index].source_path.clone(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(EvalReport {
        method: opts.method.clone(),
        manifest_sha256: manifest.hash(),
        psnr_space: "rgb".into(),
        rows,
        missing,
        entries: indices.len(),
    })
}

/// Source images resized for manifest building: every PNG/JPEG under `dir`.
pub fn collect_sources(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            {
                out.push(p.strip_prefix(dir).unwrap_or(&p).to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Resize helper used by callers that feed arbitrary-size images.
pub fn fit(img: &RgbImage, resolution: u32) -> RgbImage {
    if img.dimensions() == (resolution, resolution) {
        img.clone()
    } else {
        resize_square(img, resolution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_synthetic_dataset;
    use crate::warp::{make_eval_triplet_with, Augmentation, TpsWarpSpec, DEFAULT_GRID};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()]))
    }

    fn loop_psnr(a: &RgbImage, b: &RgbImage) -> f64 {
        let mut sse = 0.0;
        let mut n = 0.0;
        for y in 0..a.height() {
            for x in 0..a.width() {
                for c in 0..3 {
                    let d = a.get_pixel(x, y).0[c] as f64 - b.get_pixel(x, y).0[c] as f64;
                    sse += d * d;
                    n += 1.0;
                }
            }
        }
        10.0 * (255.0 * 255.0 / (sse / n)).log10()
    }

    fn loop_ssim(a: &RgbImage, b: &RgbImage) -> f64 {
        let (x, y) = (luminance(a), luminance(b));
        let (w, h) = (a.width() as usize, a.height() as usize);
        let k = gaussian_window();
        let mut total = 0.0;
        let mut count = 0.0;
        for oy in 0..=h - SSIM_WINDOW {
            for ox in 0..=w - SSIM_WINDOW {
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let (wt, p) = (k[i] * k[j], (oy + i) * w + ox + j);
                        mx += wt * x[p];
                        my += wt * y[p];
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let (wt, p) = (k[i] * k[j], (oy + i) * w + ox + j);
                        vx += wt * (x[p] - mx) * (x[p] - mx);
                        vy += wt * (y[p] - my) * (y[p] - my);
                        cxy += wt * (x[p] - mx) * (y[p] - my);
                    }
                }
                total += ssim_index(mx, my, vx, vy, cxy);
                count += 1.0;
            }
        }
        total / count
    }

    fn loop_his(a: &RgbImage, b: &RgbImage) -> f64 {
        let mut acc = 0.0;
        for c in 0..3 {
            let mut ha = vec![0.0; HIS_BINS];
            let mut hb = vec![0.0; HIS_BINS];
            for p in a.pixels() {
                ha[(p.0[c] / 8) as usize] += 1.0 / (a.width() * a.height()) as f64;
            }
            for p in b.pixels() {
                hb[(p.0[c] / 8) as usize] += 1.0 / (b.width() * b.height()) as f64;
            }
            for i in 0..HIS_BINS {
                acc += if ha[i] < hb[i] { ha[i] } else { hb[i] };
            }
        }
        acc / 3.0
    }

    #[test]
    fn psnr_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_image(&mut rng, 20, 16);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let base = RgbImage::from_pixel(8, 8, image::Rgb([100, 50, 200]));
        let shifted = RgbImage::from_pixel(8, 8, image::Rgb([116, 66, 216]));
        let want = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
        assert!((psnr(&base, &shifted).unwrap() - want).abs() < 1e-12);
        assert!((want - 24.048).abs() < 1e-3);
        for _ in 0..5 {
            let (x, y) = (random_image(&mut rng, 17, 13), random_image(&mut rng, 17, 13));
            assert!((psnr(&x, &y).unwrap() - loop_psnr(&x, &y)).abs() < 1e-9);
            assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
        }
        assert!(psnr(&a, &base).is_err());
    }

    #[test]
    fn ssim_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 24, 20);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        for _ in 0..3 {
            let (x, y) = (random_image(&mut rng, 19, 15), random_image(&mut rng, 19, 15));
            let s = ssim(&x, &y).unwrap();
            assert!((s - loop_ssim(&x, &y)).abs() < 1e-6);
            assert!((s - ssim(&y, &x).unwrap()).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&s));
        }
        let neg = RgbImage::from_fn(24, 20, |x, y| {
            let p = a.get_pixel(x, y).0;
            image::Rgb([255 - p[0], 255 - p[1], 255 - p[2]])
        });
        assert!(ssim(&a, &neg).unwrap() < 0.3);
        assert!(ssim(&RgbImage::new(10, 30), &RgbImage::new(10, 30)).is_err());
    }

    #[test]
    fn ssim_single_window_constant_shift() {
        let c = RgbImage::from_pixel(11, 11, image::Rgb([80, 80, 80]));
        let d = RgbImage::from_pixel(11, 11, image::Rgb([120, 120, 120]));
        let (x, y): (f64, f64) = (80.0, 120.0);
        // Zero variance: structure and contrast terms are exactly 1.
        let luminance_term = (2.0 * x * y + C1) / (x * x + y * y + C1);
        assert!(luminance_term < 1.0);
        assert!((ssim(&c, &d).unwrap() - luminance_term).abs() < 1e-9);
    }

    #[test]
    fn his_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_image(&mut rng, 16, 16);
        assert!((his(&a, &a) - 1.0).abs() < 1e-12);
        let black = RgbImage::new(8, 8);
        let white = RgbImage::from_pixel(8, 8, image::Rgb([255, 255, 255]));
        assert_eq!(his(&black, &white), 0.0);
        for _ in 0..5 {
            let (x, y) = (random_image(&mut rng, 16, 12), random_image(&mut rng, 10, 9));
            assert!((his(&x, &y) - loop_his(&x, &y)).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn metrics_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = (random_image(&mut rng, 14, 12), random_image(&mut rng, 14, 12));
            prop_assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
            prop_assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-12);
            prop_assert!(psnr(&x, &y).unwrap() > 0.0);
        }
    }

    fn manifest(dir: &Path, kinds: &[AugKind]) -> Manifest {
        write_synthetic_dataset(dir, 2, 2, 48, 4).unwrap();
        let sources = collect_sources(dir).unwrap();
        Manifest::build(dir, &sources, kinds, 9, 48).unwrap()
    }

    #[test]
    fn copy_oracle_scores_and_report_layout() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path(), &AugKind::ALL);
        let opts = EvalOptions { resolution: 48, method: "copy".into(), ..EvalOptions::default() };
        let report = evaluate(&CopyReferenceChroma, &m, &opts).unwrap();
        assert_eq!(report.rows.len(), 12);
        assert!(report.missing.is_empty());
        let s = report.summaries();
        assert_eq!(s.iter().map(|a| a.aug_type).collect::<Vec<_>>(), AugKind::ALL.to_vec());
        for a in &s {
            let rows: Vec<f64> = report.rows.iter().filter(|r| r.aug_type == a.aug_type).map(|r| r.psnr).collect();
            assert!((a.psnr - rows.iter().sum::<f64>() / rows.len() as f64).abs() < 1e-9);
        }
        let (p, q) = report.mean();
        assert!((p - s.iter().map(|a| a.psnr).sum::<f64>() / 3.0).abs() < 1e-9);
        assert!((q - s.iter().map(|a| a.ssim).sum::<f64>() / 3.0).abs() < 1e-9);
        let table = report.to_table();
        assert!(table.starts_with("Methods | TPS"), "{table}");
        assert!(table.lines().nth(2).unwrap().starts_with("copy"));
        let csv = report.to_csv();
        assert!(csv.contains("# psnr_space=rgb"));
        assert!(csv.contains(&format!("# manifest_sha256={}", m.hash())));
    }

    #[test]
    fn zero_displacement_tps_with_copy_oracle_is_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for class in 0..3 {
            let img = crate::data::synthetic_image(class, 3, 40, &mut rng);
            let aug = Augmentation::Tps(TpsWarpSpec::identity(DEFAULT_GRID));
            let t = make_eval_triplet_with(&img, &aug).unwrap();
            assert_eq!(t.reference, t.gt_rgb);
            let lab = CopyReferenceChroma.colorize(&t.target_l, &t.reference, 0).unwrap();
            assert_eq!(psnr(&lab_to_rgb(&lab), &t.gt_rgb).unwrap(), PSNR_CAP);
        }
    }

    #[test]
    fn missing_sources_listed_and_parallel_runs_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), &[AugKind::Tps, AugKind::Rc]);
        let first = m.resolve(&m.entries[0]);
        fs::remove_file(first).unwrap();
        m.entries.truncate(6);
        let one = evaluate(&CopyReferenceChroma, &m, &EvalOptions { resolution: 48, jobs: 1, ..Default::default() }).unwrap();
        let many = evaluate(&CopyReferenceChroma, &m, &EvalOptions { resolution: 48, jobs: 3, ..Default::default() }).unwrap();
        assert_eq!(one.to_csv(), many.to_csv());
        assert_eq!(one.missing.len(), m.entries.iter().filter(|e| e.source_path == m.entries[0].source_path).count());
        assert!(one.to_csv().contains(&format!("# coverage={}/6", one.rows.len())));
    }
}
