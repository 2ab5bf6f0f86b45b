use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::FloatImage;

/// Control points per side of the TPS grid.
pub const DEFAULT_GRID: usize = 4;
/// Upper bound on a normal-regime displacement, as a fraction of image size.
pub const NORMAL_MAX: f64 = 0.08;
/// Displacement range of the violent regime, as a fraction of image size.
pub const VIOLENT_RANGE: (f64, f64) = (0.2, 0.4);

/// Control points in normalized `[0, 1]²` coordinates plus their
/// displacements. Zero displacements describe the identity warp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpsWarpSpec {
    pub control: Vec<[f64; 2]>,
    pub displacements: Vec<[f64; 2]>,
    pub violent: bool,
}

impl TpsWarpSpec {
    /// Regular `grid × grid` lattice spanning the unit square.
    pub fn lattice(grid: usize) -> Vec<[f64; 2]> {
        assert!(grid >= 2);
        let step = 1.0 / (grid - 1) as f64;
        (0..grid)
            .flat_map(|j| (0..grid).map(move |i| [i as f64 * step, j as f64 * step]))
            .collect()
    }

    pub fn identity(grid: usize) -> Self {
        let control = Self::lattice(grid);
        let displacements = vec![[0.0; 2]; control.len()];
        Self {
            control,
            displacements,
            violent: false,
        }
    }

    /// Where each control point ends up in the warped image.
    pub fn targets(&self) -> Vec<[f64; 2]> {
        self.control
            .iter()
            .zip(&self.displacements)
            .map(|(c, d)| [c[0] + d[0], c[1] + d[1]])
            .collect()
    }

    pub fn max_displacement(&self) -> f64 {
        self.displacements
            .iter()
            .map(|d| d[0].hypot(d[1]))
            .fold(0.0, f64::max)
    }
}

/// Draw a random warp on the default lattice. Each displacement has a
/// uniformly random direction and a magnitude uniform in `[0, 0.08]`
/// (normal) or `[0.2, 0.4]` (violent).
pub fn random_spec<R: Rng + ?Sized>(rng: &mut R, violent: bool) -> TpsWarpSpec {
    let control = TpsWarpSpec::lattice(DEFAULT_GRID);
    let (lo, hi) = if violent { VIOLENT_RANGE } else { (0.0, NORMAL_MAX) };
    let magnitude = Uniform::new_inclusive(lo, hi).expect("valid range");
    let angle = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
    let displacements = control
        .iter()
        .map(|_| {
            let m = magnitude.sample(rng);
            let t = angle.sample(rng);
            [m * t.cos(), m * t.sin()]
        })
        .collect();
    TpsWarpSpec {
        control,
        displacements,
        violent,
    }
}

/// Thin-plate spline `R² → R²` interpolating `sources[i] ↦ values[i]`.
#[derive(Clone, Debug)]
pub struct ThinPlateSpline {
    centers: Vec<[f64; 2]>,
    /// Kernel weights, one `[x, y]` pair per center.
    weights: Vec<[f64; 2]>,
    /// Affine part: rows are the constant, x and y coefficients.
    affine: [[f64; 2]; 3],
}

fn kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

impl ThinPlateSpline {
    pub fn fit(centers: &[[f64; 2]], values: &[[f64; 2]]) -> Result<Self> {
        let n = centers.len();
        if n != values.len() {
            return Err(Error::Shape(format!("{n} centers but {} values", values.len())));
        }
        if n < 3 {
            return Err(Error::DegenerateGrid(format!("{n} control points, need at least 3")));
        }
        if !has_non_collinear_triple(centers) {
            return Err(Error::DegenerateGrid("all control points are collinear".into()));
        }
        let system = Self::system(centers);
        let lu = system.lu();
        let mut sol = [DVector::zeros(n + 3), DVector::zeros(n + 3)];
        for (axis, s) in sol.iter_mut().enumerate() {
            let rhs = DVector::from_fn(n + 3, |i, _| if i < n { values[i][axis] } else { 0.0 });
            *s = lu
                .solve(&rhs)
                .ok_or_else(|| Error::DegenerateGrid("singular TPS system (repeated points?)".into()))?;
        }
        let weights = (0..n).map(|i| [sol[0][i], sol[1][i]]).collect();
        let affine = [0, 1, 2].map(|k| [sol[0][n + k], sol[1][n + k]]);
        Ok(Self {
            centers: centers.to_vec(),
            weights,
            affine,
        })
    }

    fn system(centers: &[[f64; 2]]) -> DMatrix<f64> {
        let n = centers.len();
        DMatrix::from_fn(n + 3, n + 3, |i, j| match (i < n, j < n) {
            (true, true) => {
                let (p, q) = (centers[i], centers[j]);
                kernel((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
            }
            (true, false) => affine_basis(centers[i], j - n),
            (false, true) => affine_basis(centers[j], i - n),
            (false, false) => 0.0,
        })
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for axis in 0..2 {
            out[axis] = self.affine[0][axis] + self.affine[1][axis] * p[0] + self.affine[2][axis] * p[1];
        }
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let u = kernel((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2));
            out[0] += w[0] * u;
            out[1] += w[1] * u;
        }
        out
    }

    /// Max-abs residual of the interpolation conditions.
    pub fn residual(&self, values: &[[f64; 2]]) -> f64 {
        self.centers
            .iter()
            .zip(values)
            .map(|(c, v)| {
                let e = self.eval(*c);
                (e[0] - v[0]).abs().max((e[1] - v[1]).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn affine_basis(p: [f64; 2], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => p[0],
        _ => p[1],
    }
}

fn has_non_collinear_triple(points: &[[f64; 2]]) -> bool {
    let a = points[0];
    let Some(b) = points.iter().find(|p| (p[0] - a[0]).hypot(p[1] - a[1]) > 1e-12) else {
        return false;
    };
    points.iter().any(|c| {
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        cross.abs() > 1e-12
    })
}

/// Warp an image so that content at each control point moves to
/// `control + displacement`. Backward mapping: the spline sends warped
/// positions back to source positions, sampled bilinearly with edge
/// replication.
pub fn tps_warp(image: &FloatImage, spec: &TpsWarpSpec) -> Result<FloatImage> {
    let targets = spec.targets();
    let spline = ThinPlateSpline::fit(&targets, &spec.control)?;
    let (w, h) = (image.width as f64, image.height as f64);
    Ok(image.remap(image.width, image.height, |x, y| {
        let p = [(x as f64 + 0.5) / w, (y as f64 + 0.5) / h];
        let s = spline.eval(p);
        (s[0] * w - 0.5, s[1] * h - 0.5)
    }))
}
