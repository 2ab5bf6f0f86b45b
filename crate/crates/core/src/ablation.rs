//! Ablation hooks: the k/r sweep, coarse-vs-final stage scoring and
//! side-by-side comparison of model variants.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{evaluate, render_table, Colorizer, EvalOptions, EvalReport, ModelColorizer, Stage};
use crate::ldt::region_grid;
use crate::model::{AttentionMode, ColorizeOptions, Sscn};
use crate::warp::{AugKind, Manifest};

/// Parse `k=128,256 r=0,128` style arguments into the two axes.
pub fn parse_sweep(args: &[String]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut ks = None;
    let mut rs = None;
    for arg in args {
        let (name, values) = arg
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("sweep axis {arg:?} is not name=v1,v2,...")))?;
        let parsed = values
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|v| v.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidInput(format!("sweep axis {name}: {e}")))?;
        match name.trim() {
            "k" => ks = Some(parsed),
            "r" => rs = Some(parsed),
            other => return Err(Error::InvalidInput(format!("unknown sweep axis {other:?}, expected k or r"))),
        }
    }
    match (ks, rs) {
        (Some(k), Some(r)) if !k.is_empty() && !r.is_empty() => Ok((k, r)),
        _ => Err(Error::InvalidInput("sweep needs both k=... and r=... values".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub r: usize,
    /// `None` when the combination was skipped.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub regions: usize,
    pub manifest_sha256: String,
    pub points: Vec<SweepPoint>,
}

/// Evaluate the model on the TPS entries of `manifest` at every (k, r).
/// Combinations with `k + r` above the region count are recorded as skipped.
pub fn sweep_kr(model: &Sscn, manifest: &Manifest, ks: &[usize], rs: &[usize], opts: &EvalOptions, seed: u64) -> Result<SweepReport> {
    let res = opts.resolution as usize;
    let (gh, gw) = region_grid(res, res);
    let regions = gh * gw;
    let opts = EvalOptions {
        aug_types: vec![AugKind::Tps],
        ..opts.clone()
    };
    let mut points = Vec::new();
    for &k in ks {
        for &r in rs {
            let mode = AttentionMode::Sparse { k, r };
            if let Err(e) = mode.validate(res, res) {
                points.push(SweepPoint { k, r, psnr: None, ssim: None, note: e.to_string() });
                continue;
            }
            let colorizer = ModelColorizer {
                model,
                options: ColorizeOptions { mode, seed },
                stage: Stage::Final,
            };
            let report = evaluate(&colorizer, manifest, &opts)?;
            let (p, s) = report.mean();
            points.push(SweepPoint {
                k,
                r,
                psnr: Some(p),
                ssim: Some(s),
                note: format!("{} images", report.rows.len()),
            });
        }
    }
    Ok(SweepReport {
        regions,
        manifest_sha256: manifest.hash(),
        points,
    })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# regions={}\n# manifest_sha256={}\nk,r,psnr,ssim,note\n", self.regions, self.manifest_sha256);
        for p in &self.points {
            let f = |v: Option<f64>, d: usize| v.map_or(String::new(), |x| format!("{x:.d$}"));
            let _ = writeln!(out, "{},{},{},{},{}", p.k, p.r, f(p.psnr, 6), f(p.ssim, 6), p.note);
        }
        out
    }

    /// PSNR/SSIM grid with one row per k and one column per r.
    pub fn to_table(&self) -> String {
        let mut ks: Vec<usize> = self.points.iter().map(|p| p.k).collect();
        let mut rs: Vec<usize> = self.points.iter().map(|p| p.r).collect();
        ks.dedup();
        rs.sort_unstable();
        rs.dedup();
        let mut out = String::from("k \\ r");
        for r in &rs {
            let _ = write!(out, " | {r:>12}");
        }
        out.push('\n');
        for k in &ks {
            let _ = write!(out, "{k:<5}");
            for r in &rs {
                let cell = self
                    .points
                    .iter()
                    .find(|p| p.k == *k && p.r == *r)
                    .and_then(|p| p.psnr.zip(p.ssim))
                    .map_or("skipped".to_string(), |(a, b)| format!("{a:.2}/{b:.3}"));
                let _ = write!(out, " | {cell:>12}");
            }
            out.push('\n');
        }
        out
    }
}

/// Reports for several colorizers over one manifest, rendered as one table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<EvalReport>,
}

impl Comparison {
    pub fn run(entries: &[(&str, &dyn Colorizer)], manifest: &Manifest, opts: &EvalOptions) -> Result<Self> {
        let reports = entries
            .iter()
            .map(|(label, c)| evaluate(*c, manifest, &EvalOptions { method: label.to_string(), ..opts.clone() }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { reports })
    }

    pub fn to_table(&self) -> String {
        let refs: Vec<&EvalReport> = self.reports.iter().collect();
        let mut out = String::new();
        if let Some(first) = self.reports.first() {
            let _ = writeln!(out, "# psnr_space={}\n# manifest_sha256={}", first.psnr_space, first.manifest_sha256);
        }
        out.push_str(&render_table(&refs));
        if let [a, b, ..] = self.reports.as_slice() {
            let (pa, sa) = a.mean();
            let (pb, sb) = b.mean();
            let _ = writeln!(
                out,
                "\n{} minus {}: {:+.2} dB PSNR, {:+.3} SSIM",
                a.method,
                b.method,
                pa - pb,
                sa - sb
            );
        }
        out
    }
}

/// First-stage against full-pipeline scores for one two-stage model.
pub fn stage_ablation(model: &Sscn, options: ColorizeOptions, manifest: &Manifest, opts: &EvalOptions) -> Result<Comparison> {
    let fin = ModelColorizer { model, options, stage: Stage::Final };
    let coarse = ModelColorizer { model, options, stage: Stage::Coarse };
    Comparison::run(&[("two-stage", &fin), ("stage-1 only", &coarse)], manifest, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_synthetic_dataset;
    use crate::evaluator::collect_sources;
    use crate::model::ModelConfig;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn sweep_arguments() {
        let (k, r) = parse_sweep(&args(&["k=128,256,512", "r=0,128,256,512"])).unwrap();
        assert_eq!(k, vec![128, 256, 512]);
        assert_eq!(r, vec![0, 128, 256, 512]);
        assert!(parse_sweep(&args(&["k=1"])).is_err());
        assert!(parse_sweep(&args(&["q=1", "r=2"])).is_err());
        assert!(parse_sweep(&args(&["k=x", "r=2"])).is_err());
    }

    #[test]
    fn sweep_skips_oversized_selections() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_dataset(dir.path(), 1, 2, 32, 3).unwrap();
        let m = Manifest::build(dir.path(), &collect_sources(dir.path()).unwrap(), &[AugKind::Tps, AugKind::Rr], 0, 32).unwrap();
        let model = Sscn::new(ModelConfig { scale_factor: 1.0 / 16.0, class_count: 1, ..ModelConfig::default() }).unwrap();
        let opts = EvalOptions { resolution: 32, ..EvalOptions::default() };
        let rep = sweep_kr(&model, &m, &[16, 60], &[0, 8], &opts, 0).unwrap();
        assert_eq!(rep.regions, 64);
        assert_eq!(rep.points.len(), 4);
        let skipped: Vec<(usize, usize)> = rep.points.iter().filter(|p| p.psnr.is_none()).map(|p| (p.k, p.r)).collect();
        assert_eq!(skipped, vec![(60, 8)]);
        assert!(rep.points[0].note.starts_with("2 images"));
        assert!(rep.to_table().contains("skipped"));
        assert!(rep.to_csv().lines().nth(2).unwrap().starts_with("k,r,psnr"));
        let stages = stage_ablation(&model, ColorizeOptions::default().with_mode(AttentionMode::Dense), &m, &opts).unwrap();
        let table = stages.to_table();
        assert!(table.contains("two-stage") && table.contains("stage-1 only") && table.contains("minus"));
    }
}
