use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use super::lab::srgb8_to_lab;
use crate::error::{Error, Result};

/// Number of in-gamut ab bins.
pub const Q: usize = 313;
/// Lattice spacing of the ab bins, in Lab units.
pub const GRID: i32 = 10;
const AB_LIMIT: i32 = 110;

/// Quantized ab plane: `Q` bin centers on a grid-10 lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct AbGamut {
    centers: Vec<[f32; 2]>,
    index: HashMap<(i32, i32), usize>,
}

impl AbGamut {
    /// Process-wide instance, built on first use.
    pub fn shared() -> &'static AbGamut {
        static GAMUT: OnceLock<AbGamut> = OnceLock::new();
        GAMUT.get_or_init(|| build_gamut().expect("gamut construction"))
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[[f32; 2]] {
        &self.centers
    }

    /// Bin id of the lattice cell whose center is `(a, b)`, if in gamut.
    pub fn bin_at(&self, a: i32, b: i32) -> Option<usize> {
        if a % GRID != 0 || b % GRID != 0 {
            return None;
        }
        self.index.get(&(a / GRID, b / GRID)).copied()
    }

    /// Bin id of the nearest center (exhaustive; ties go to the lower id).
    pub fn nearest(&self, a: f32, b: f32) -> usize {
        let mut best = (f32::INFINITY, 0);
        for (i, c) in self.centers.iter().enumerate() {
            let d = (c[0] - a).powi(2) + (c[1] - b).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// The `n` nearest bins, closest first, with squared distances.
    pub fn nearest_n(&self, a: f32, b: f32, n: usize) -> Vec<(usize, f32)> {
        let mut best: Vec<(usize, f32)> = Vec::with_capacity(n + 1);
        for (i, c) in self.centers.iter().enumerate() {
            let d = (c[0] - a).powi(2) + (c[1] - b).powi(2);
            if best.len() == n && d >= best[n - 1].1 {
                continue;
            }
            let pos = best.partition_point(|&(_, bd)| bd <= d);
            best.insert(pos, (i, d));
            best.truncate(n);
        }
        best
    }

    /// Write the centers as a headerless `a,b` CSV, one bin per row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for c in &self.centers {
            writeln!(f, "{},{}", c[0], c[1]).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Build the quantized ab gamut.
///
/// A lattice cell is kept when its center lies within one cell diagonal
/// (`10·√2`) of the chroma footprint of the 8-bit sRGB cube. The result is
/// deterministic and must contain exactly [`Q`] bins.
pub fn build_gamut() -> Result<AbGamut> {
    let cells = (2 * AB_LIMIT / GRID + 1) as usize;
    let reach = (GRID as f64) * std::f64::consts::SQRT_2;
    let mut keep = vec![false; cells * cells];
    let to_cell = |v: f64| ((v + AB_LIMIT as f64) / GRID as f64).round() as i64;
    for r in 0..=255u8 {
        for g in 0..=255u8 {
            for b in 0..=255u8 {
                let lab = srgb8_to_lab([r, g, b]);
                let (ca, cb) = (to_cell(lab[1]), to_cell(lab[2]));
                for ia in (ca - 2).max(0)..=(ca + 2).min(cells as i64 - 1) {
                    let da = (ia * GRID as i64 - AB_LIMIT as i64) as f64 - lab[1];
                    if da.abs() > reach {
                        continue;
                    }
                    for ib in (cb - 2).max(0)..=(cb + 2).min(cells as i64 - 1) {
                        let slot = &mut keep[ia as usize * cells + ib as usize];
                        if *slot {
                            continue;
                        }
                        let db = (ib * GRID as i64 - AB_LIMIT as i64) as f64 - lab[2];
                        if da * da + db * db <= reach * reach {
                            *slot = true;
                        }
                    }
                }
            }
        }
    }
    let mut centers = Vec::new();
    let mut index = HashMap::new();
    for ia in 0..cells {
        for ib in 0..cells {
            if keep[ia * cells + ib] {
                let a = ia as i32 * GRID - AB_LIMIT;
                let b = ib as i32 * GRID - AB_LIMIT;
                index.insert((a / GRID, b / GRID), centers.len());
                centers.push([a as f32, b as f32]);
            }
        }
    }
    if centers.len() != Q {
        return Err(Error::GamutSize(centers.len()));
    }
    Ok(AbGamut { centers, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::lab::lab_to_srgb;

    #[test]
    fn has_exactly_313_bins_and_contains_origin() {
        let g = AbGamut::shared();
        assert_eq!(g.len(), Q);
        let origin = g.bin_at(0, 0).expect("origin in gamut");
        assert_eq!(g.centers()[origin], [0.0, 0.0]);
        assert!(g.centers().iter().all(|c| c[0] as i32 % GRID == 0 && c[1] as i32 % GRID == 0));
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(&build_gamut().unwrap(), AbGamut::shared());
    }

    #[test]
    fn centers_displayable_at_mid_luminance_are_all_kept() {
        // Enumerate every lattice cell; those whose center converts to an
        // in-range RGB at L=50 must be bins.
        let g = AbGamut::shared();
        let mut displayable = 0;
        for a in (-110..=110).step_by(10) {
            for b in (-110..=110).step_by(10) {
                let rgb = lab_to_srgb([50.0, a as f64, b as f64]);
                if rgb.iter().all(|c| (0.0..=1.0).contains(c)) {
                    displayable += 1;
                    assert!(g.bin_at(a, b).is_some(), "({a},{b}) displayable but not a bin");
                }
            }
        }
        assert!(displayable > 100);
    }

    #[test]
    fn nearest_n_agrees_with_sorting() {
        let g = AbGamut::shared();
        let near = g.nearest_n(33.0, -21.0, 5);
        let mut all: Vec<(usize, f32)> = g
            .centers()
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c[0] - 33.0).powi(2) + (c[1] + 21.0).powi(2)))
            .collect();
        all.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        assert_eq!(near, all[..5].to_vec());
    }
}
