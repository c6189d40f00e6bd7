//! Weighted point clouds on canonical manifolds.
//!
//! Every sampler is deterministic and quasi-uniform, and its weights sum to
//! the manifold volume exactly (up to floating accumulation): the (P, V)
//! pair is a quadrature rule for manifold integrals. A seeded nonuniform
//! mode (smooth density warp plus per-point jitter, weights recomputed by
//! 1-D Voronoi cells in parameter space) exercises nonuniform sampling on
//! the interval and circle.

use crate::assembly::NeighborIndex;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;

const GOLDEN_FRAC: f64 = 0.618_033_988_749_894_9;

/// Sample points with per-point volume weights and intrinsic dimension.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Array2<f64>,
    weights: Array1<f64>,
    intrinsic_dim: usize,
    boundary: Vec<bool>,
    manifold: Option<Manifold>,
    h_estimate: f64,
}

impl PointCloud {
    /// Assemble a cloud from raw parts, validating weights and computing the
    /// fill-distance estimate. Single-point clouds are admitted for
    /// degenerate diagnostics (h is then 0).
    pub fn from_parts(
        points: Array2<f64>,
        weights: Array1<f64>,
        intrinsic_dim: usize,
        boundary: Vec<bool>,
        manifold: Option<Manifold>,
    ) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("empty point cloud".into()));
        }
        if weights.len() != n || boundary.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: weights.len().min(boundary.len()),
            });
        }
        if intrinsic_dim < 1 || intrinsic_dim > points.ncols() {
            return Err(Error::InvalidParameter(format!(
                "intrinsic dimension {intrinsic_dim} incompatible with ambient dimension {}",
                points.ncols()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "volume weights must be strictly positive, found {w}"
            )));
        }
        let h_estimate = estimate_fill_distance_raw(&points, intrinsic_dim);
        Ok(PointCloud {
            points,
            weights,
            intrinsic_dim,
            boundary,
            manifold,
            h_estimate,
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn manifold(&self) -> Option<&Manifold> {
        self.manifold.as_ref()
    }

    /// Max over points of the nearest-neighbor distance (fill-distance
    /// proxy). Zero for degenerate clouds with duplicate points.
    pub fn h_estimate(&self) -> f64 {
        self.h_estimate
    }

    pub fn total_volume(&self) -> f64 {
        self.weights.sum()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).to_vec()
    }
}

/// Max nearest-neighbor distance, computed with the uniform-grid index.
pub fn estimate_fill_distance(cloud: &PointCloud) -> f64 {
    cloud.h_estimate()
}

fn estimate_fill_distance_raw(points: &Array2<f64>, intrinsic_dim: usize) -> f64 {
    let n = points.nrows();
    if n < 2 {
        return 0.0;
    }
    // initial radius from the bounding-box diagonal and intrinsic density
    let d = points.ncols();
    let mut diag = 0.0;
    for c in 0..d {
        let col = points.column(c);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        diag += (hi - lo) * (hi - lo);
    }
    let diag = diag.sqrt();
    let guess = if diag > 0.0 {
        diag / (n as f64).powf(1.0 / intrinsic_dim as f64)
    } else {
        1.0
    };
    let index = NeighborIndex::build(points, guess.max(1e-300)).expect("positive radius");
    let mut h = 0.0f64;
    for i in 0..n {
        if let Some((_, dist)) = index.nearest_other(i) {
            h = h.max(dist);
        }
    }
    h
}

/// Built-in manifolds with analytic Neumann ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Manifold {
    /// `[0, L]` with endpoints as boundary.
    Interval { length: f64 },
    /// Circle of the given radius embedded in the plane.
    Circle { radius: f64 },
    /// `[0, Lx] × [0, Ly]`.
    Rectangle { lx: f64, ly: f64 },
    /// Torus of revolution in 3-space (no closed-form spectrum).
    Torus { major: f64, minor: f64 },
    /// Product of two circles in 4-space; analytic spectrum.
    FlatTorus { major: f64, minor: f64 },
    /// Unit sphere.
    Sphere,
    /// Upper unit hemisphere, equator as Neumann boundary.
    Hemisphere,
}

/// Options for the seeded nonuniform samplers (interval and circle).
#[derive(Debug, Clone, Copy)]
pub struct NonuniformOptions {
    /// Per-point jitter amplitude as a fraction of the parameter spacing.
    pub jitter_frac: f64,
    /// Smooth density-warp amplitude in [0, 1): parameter map
    /// `s = u + warp·sin(2πu)/(2π)`.
    pub warp: f64,
    pub seed: u64,
}

impl Manifold {
    pub fn tag(&self) -> &'static str {
        match self {
            Manifold::Interval { .. } => "interval",
            Manifold::Circle { .. } => "circle",
            Manifold::Rectangle { .. } => "rectangle",
            Manifold::Torus { .. } => "torus",
            Manifold::FlatTorus { .. } => "flat_torus",
            Manifold::Sphere => "sphere",
            Manifold::Hemisphere => "hemisphere",
        }
    }

    /// Named parameters, used by the CLI and the cloud CSV header.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Manifold::Interval { length } => vec![("L", length)],
            Manifold::Circle { radius } => vec![("radius", radius)],
            Manifold::Rectangle { lx, ly } => vec![("Lx", lx), ("Ly", ly)],
            Manifold::Torus { major, minor } | Manifold::FlatTorus { major, minor } => {
                vec![("R", major), ("r", minor)]
            }
            Manifold::Sphere | Manifold::Hemisphere => vec![],
        }
    }

    /// Parse a manifold from its tag and a key=value parameter map.
    /// Unknown keys are rejected; missing keys fall back to defaults
    /// (unit sizes).
    pub fn from_params(tag: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let mut take = params.clone();
        let mut get = |key: &str, default: f64| take.remove(key).unwrap_or(default);
        let m = match tag {
            "interval" => Manifold::Interval {
                length: get("L", 1.0),
            },
            "circle" => Manifold::Circle {
                radius: get("radius", 1.0),
            },
            "rectangle" => Manifold::Rectangle {
                lx: get("Lx", 1.0),
                ly: get("Ly", 1.0),
            },
            "torus" => Manifold::Torus {
                major: get("R", 2.0),
                minor: get("r", 1.0),
            },
            "flat_torus" => Manifold::FlatTorus {
                major: get("R", 2.0),
                minor: get("r", 1.0),
            },
            "sphere" => Manifold::Sphere,
            "hemisphere" => Manifold::Hemisphere,
            other => return Err(Error::UnknownManifold(other.into())),
        };
        if let Some(key) = take.keys().next() {
            return Err(Error::InvalidParameter(format!(
                "unknown parameter '{key}' for manifold {tag}"
            )));
        }
        for (name, v) in m.params() {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "parameter {name} must be positive, got {v}"
                )));
            }
        }
        if let Manifold::Torus { major, minor } | Manifold::FlatTorus { major, minor } = m {
            if let Manifold::Torus { .. } = m {
                if minor >= major {
                    return Err(Error::InvalidParameter(format!(
                        "torus needs r < R, got r={minor} R={major}"
                    )));
                }
            }
            let _ = (major, minor);
        }
        Ok(m)
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Manifold::Interval { length } => length,
            Manifold::Circle { radius } => 2.0 * PI * radius,
            Manifold::Rectangle { lx, ly } => lx * ly,
            Manifold::Torus { major, minor } | Manifold::FlatTorus { major, minor } => {
                4.0 * PI * PI * major * minor
            }
            Manifold::Sphere => 4.0 * PI,
            Manifold::Hemisphere => 2.0 * PI,
        }
    }

    pub fn min_points(&self) -> usize {
        match self {
            Manifold::Interval { .. } => 2,
            Manifold::Circle { .. } => 3,
            Manifold::Rectangle { .. } => 2, // per side
            Manifold::Torus { .. } | Manifold::FlatTorus { .. } => 9,
            Manifold::Sphere => 8,
            Manifold::Hemisphere => 8,
        }
    }

    /// Deterministic quasi-uniform sample with exact-volume weights.
    ///
    /// For the rectangle, `n` is the per-side count. For the hemisphere the
    /// actual point count is the nearest band-quantized value to `n`.
    pub fn sample(&self, n: usize) -> Result<PointCloud> {
        if n < self.min_points() {
            return Err(Error::TooFewPoints {
                tag: self.tag().into(),
                min: self.min_points(),
                got: n,
            });
        }
        match *self {
            Manifold::Interval { length } => self.build_interval(n, length, None),
            Manifold::Circle { radius } => self.build_circle(n, radius, None),
            Manifold::Rectangle { lx, ly } => self.build_rectangle(n, lx, ly),
            Manifold::Torus { major, minor } => self.build_torus(n, major, minor),
            Manifold::FlatTorus { major, minor } => self.build_flat_torus(n, major, minor),
            Manifold::Sphere => self.build_sphere(n),
            Manifold::Hemisphere => self.build_hemisphere(n),
        }
    }

    /// Seeded nonuniform sample (interval and circle only): midpoint
    /// parameters jittered by `jitter_frac` of the spacing, pushed through a
    /// smooth density warp, with 1-D Voronoi weights on parameter space.
    pub fn sample_nonuniform(&self, n: usize, opts: NonuniformOptions) -> Result<PointCloud> {
        if n < self.min_points() {
            return Err(Error::TooFewPoints {
                tag: self.tag().into(),
                min: self.min_points(),
                got: n,
            });
        }
        if !(0.0..0.5).contains(&opts.jitter_frac.min(0.49)) && opts.jitter_frac >= 0.5 {
            return Err(Error::InvalidParameter(
                "jitter fraction must lie in [0, 0.5) to preserve ordering".into(),
            ));
        }
        if !(0.0..1.0).contains(&opts.warp) {
            return Err(Error::InvalidParameter(
                "warp amplitude must lie in [0, 1)".into(),
            ));
        }
        match *self {
            Manifold::Interval { length } => self.build_interval(n, length, Some(opts)),
            Manifold::Circle { radius } => self.build_circle(n, radius, Some(opts)),
            _ => Err(Error::InvalidParameter(format!(
                "nonuniform sampling is only available on interval and circle, not {}",
                self.tag()
            ))),
        }
    }

    fn warped_parameters(n: usize, opts: Option<NonuniformOptions>) -> Vec<f64> {
        let mut u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        if let Some(o) = opts {
            let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
            for v in u.iter_mut() {
                *v += o.jitter_frac * (rng.gen::<f64>() - 0.5) / n as f64;
            }
            u.sort_by(f64::total_cmp);
            if o.warp != 0.0 {
                for v in u.iter_mut() {
                    *v += o.warp * (2.0 * PI * *v).sin() / (2.0 * PI);
                }
            }
        }
        u
    }

    fn build_interval(
        &self,
        n: usize,
        length: f64,
        opts: Option<NonuniformOptions>,
    ) -> Result<PointCloud> {
        let u = Self::warped_parameters(n, opts);
        let mut pts = Array2::zeros((n, 1));
        let mut w = Array1::zeros(n);
        for (i, &ui) in u.iter().enumerate() {
            pts[[i, 0]] = length * ui;
        }
        if opts.is_some() {
            // Voronoi cells in parameter space
            for i in 0..n {
                let left = if i == 0 {
                    0.0
                } else {
                    0.5 * (pts[[i - 1, 0]] + pts[[i, 0]])
                };
                let right = if i == n - 1 {
                    length
                } else {
                    0.5 * (pts[[i, 0]] + pts[[i + 1, 0]])
                };
                w[i] = right - left;
            }
        } else {
            w.fill(length / n as f64);
        }
        let boundary: Vec<bool> = (0..n).map(|i| i == 0 || i == n - 1).collect();
        PointCloud::from_parts(pts, w, 1, boundary, Some(*self))
    }

    fn build_circle(
        &self,
        n: usize,
        radius: f64,
        opts: Option<NonuniformOptions>,
    ) -> Result<PointCloud> {
        let u = Self::warped_parameters(n, opts);
        let mut pts = Array2::zeros((n, 2));
        let angles: Vec<f64> = u.iter().map(|&ui| 2.0 * PI * ui).collect();
        for (i, &th) in angles.iter().enumerate() {
            pts[[i, 0]] = radius * th.cos();
            pts[[i, 1]] = radius * th.sin();
        }
        let mut w = Array1::zeros(n);
        if opts.is_some() {
            for i in 0..n {
                let prev = angles[(i + n - 1) % n];
                let next = angles[(i + 1) % n];
                let gap_prev = (angles[i] - prev).rem_euclid(2.0 * PI);
                let gap_next = (next - angles[i]).rem_euclid(2.0 * PI);
                w[i] = radius * 0.5 * (gap_prev + gap_next);
            }
        } else {
            w.fill(2.0 * PI * radius / n as f64);
        }
        PointCloud::from_parts(pts, w, 1, vec![false; n], Some(*self))
    }

    fn build_rectangle(&self, n_side: usize, lx: f64, ly: f64) -> Result<PointCloud> {
        let n = n_side * n_side;
        let mut pts = Array2::zeros((n, 2));
        let mut boundary = vec![false; n];
        let (hx, hy) = (lx / n_side as f64, ly / n_side as f64);
        for iy in 0..n_side {
            for ix in 0..n_side {
                let i = iy * n_side + ix;
                pts[[i, 0]] = (ix as f64 + 0.5) * hx;
                pts[[i, 1]] = (iy as f64 + 0.5) * hy;
                boundary[i] = ix == 0 || iy == 0 || ix == n_side - 1 || iy == n_side - 1;
            }
        }
        let w = Array1::from_elem(n, hx * hy);
        PointCloud::from_parts(pts, w, 2, boundary, Some(*self))
    }

    fn grid_split(n: usize, aspect: f64) -> (usize, usize) {
        let n_major = ((n as f64 * aspect).sqrt().round() as usize).max(3);
        let n_minor = ((n as f64 / n_major as f64).round() as usize).max(3);
        (n_major, n_minor)
    }

    fn build_torus(&self, n: usize, major: f64, minor: f64) -> Result<PointCloud> {
        let (n_th, n_ph) = Self::grid_split(n, major / minor);
        let total = n_th * n_ph;
        let mut pts = Array2::zeros((total, 3));
        let mut w = Array1::zeros(total);
        let dth = 2.0 * PI / n_th as f64;
        let dph = 2.0 * PI / n_ph as f64;
        for jp in 0..n_ph {
            let phi = (jp as f64 + 0.5) * dph;
            let ring = major + minor * phi.cos();
            for jt in 0..n_th {
                let th = (jt as f64 + 0.5) * dth;
                let i = jp * n_th + jt;
                pts[[i, 0]] = ring * th.cos();
                pts[[i, 1]] = ring * th.sin();
                pts[[i, 2]] = minor * phi.sin();
                // metric-correct area element r(R + r cos φ) dθ dφ
                w[i] = minor * ring * dth * dph;
            }
        }
        PointCloud::from_parts(pts, w, 2, vec![false; total], Some(*self))
    }

    fn build_flat_torus(&self, n: usize, major: f64, minor: f64) -> Result<PointCloud> {
        let (n_th, n_ph) = Self::grid_split(n, major / minor);
        let total = n_th * n_ph;
        let mut pts = Array2::zeros((total, 4));
        let dth = 2.0 * PI / n_th as f64;
        let dph = 2.0 * PI / n_ph as f64;
        for jp in 0..n_ph {
            let phi = (jp as f64 + 0.5) * dph;
            for jt in 0..n_th {
                let th = (jt as f64 + 0.5) * dth;
                let i = jp * n_th + jt;
                pts[[i, 0]] = major * th.cos();
                pts[[i, 1]] = major * th.sin();
                pts[[i, 2]] = minor * phi.cos();
                pts[[i, 3]] = minor * phi.sin();
            }
        }
        let w = Array1::from_elem(total, major * minor * dth * dph);
        PointCloud::from_parts(pts, w, 2, vec![false; total], Some(*self))
    }

    fn build_sphere(&self, n: usize) -> Result<PointCloud> {
        // Fibonacci lattice: z strictly decreasing, golden-angle azimuth.
        let golden_angle = PI * (3.0 - 5.0f64.sqrt());
        let mut pts = Array2::zeros((n, 3));
        for i in 0..n {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            pts[[i, 0]] = rho * phi.cos();
            pts[[i, 1]] = rho * phi.sin();
            pts[[i, 2]] = z;
        }
        let w = Array1::from_elem(n, 4.0 * PI / n as f64);
        PointCloud::from_parts(pts, w, 2, vec![false; n], Some(*self))
    }

    fn build_hemisphere(&self, n: usize) -> Result<PointCloud> {
        // Latitude bands of equal angular height with exact band areas;
        // points sit at the equal-area median latitude of their band.
        let n_bands = ((PI * n as f64 / 8.0).sqrt().round() as usize).max(2);
        let dtheta = 0.5 * PI / n_bands as f64;
        let mut pts_vec = Vec::new();
        let mut w_vec = Vec::new();
        let mut boundary = Vec::new();
        for b in 0..n_bands {
            let th0 = b as f64 * dtheta;
            let th1 = (b as f64 + 1.0) * dtheta;
            let area = 2.0 * PI * (th0.cos() - th1.cos());
            let m = ((n as f64 * area / (2.0 * PI)).round() as usize).max(1);
            let cz = 0.5 * (th0.cos() + th1.cos());
            let sz = (1.0 - cz * cz).max(0.0).sqrt();
            let offset = (b as f64 * GOLDEN_FRAC).fract();
            let is_boundary = b == n_bands - 1;
            for j in 0..m {
                let phi = 2.0 * PI * (j as f64 + offset) / m as f64;
                pts_vec.push([sz * phi.cos(), sz * phi.sin(), cz]);
                w_vec.push(area / m as f64);
                boundary.push(is_boundary);
            }
        }
        let total = pts_vec.len();
        let mut pts = Array2::zeros((total, 3));
        for (i, p) in pts_vec.iter().enumerate() {
            pts[[i, 0]] = p[0];
            pts[[i, 1]] = p[1];
            pts[[i, 2]] = p[2];
        }
        PointCloud::from_parts(pts, Array1::from_vec(w_vec), 2, boundary, Some(*self))
    }

    /// Built-in smooth test functions with exact manifold integrals, for
    /// the quadrature-hypothesis check.
    pub fn quadrature_test_set(&self) -> Vec<QuadTestFunction> {
        let mk = |name: &str, exact: f64, f: Box<dyn Fn(&[f64]) -> f64 + Sync>| QuadTestFunction {
            name: name.to_string(),
            exact,
            f,
        };
        match *self {
            Manifold::Interval { length } => {
                let l = length;
                vec![
                    mk("one", l, Box::new(|_| 1.0)),
                    mk("x", l * l / 2.0, Box::new(|p| p[0])),
                    mk("x_squared", l * l * l / 3.0, Box::new(move |p| p[0] * p[0])),
                    mk(
                        "cos_pi_x_over_L",
                        0.0,
                        Box::new(move |p| (PI * p[0] / l).cos()),
                    ),
                    mk(
                        "cos_2pi_x_over_L",
                        0.0,
                        Box::new(move |p| (2.0 * PI * p[0] / l).cos()),
                    ),
                ]
            }
            Manifold::Circle { radius } => {
                let rho = radius;
                vec![
                    mk("one", 2.0 * PI * rho, Box::new(|_| 1.0)),
                    mk("x", 0.0, Box::new(|p| p[0])),
                    mk(
                        "x_squared",
                        PI * rho * rho * rho,
                        Box::new(|p| p[0] * p[0]),
                    ),
                    mk("xy", 0.0, Box::new(|p| p[0] * p[1])),
                ]
            }
            Manifold::Rectangle { lx, ly } => vec![
                mk("one", lx * ly, Box::new(|_| 1.0)),
                mk("x", lx * lx * ly / 2.0, Box::new(|p| p[0])),
                mk("x_squared", lx * lx * lx * ly / 3.0, Box::new(|p| p[0] * p[0])),
                mk(
                    "cos_cos",
                    0.0,
                    Box::new(move |p| (PI * p[0] / lx).cos() * (PI * p[1] / ly).cos()),
                ),
            ],
            Manifold::Torus { major, minor } => vec![
                mk("one", 4.0 * PI * PI * major * minor, Box::new(|_| 1.0)),
                mk("z", 0.0, Box::new(|p| p[2])),
                mk(
                    "z_squared",
                    2.0 * PI * PI * major * minor.powi(3),
                    Box::new(|p| p[2] * p[2]),
                ),
                mk("x", 0.0, Box::new(|p| p[0])),
            ],
            Manifold::FlatTorus { major, minor } => vec![
                mk("one", 4.0 * PI * PI * major * minor, Box::new(|_| 1.0)),
                mk("x1", 0.0, Box::new(|p| p[0])),
                mk(
                    "x1_squared",
                    2.0 * PI * PI * major.powi(3) * minor,
                    Box::new(|p| p[0] * p[0]),
                ),
                mk("x1_x3", 0.0, Box::new(|p| p[0] * p[2])),
            ],
            Manifold::Sphere => vec![
                mk("one", 4.0 * PI, Box::new(|_| 1.0)),
                mk("z", 0.0, Box::new(|p| p[2])),
                mk("z_squared", 4.0 * PI / 3.0, Box::new(|p| p[2] * p[2])),
                mk("x_squared", 4.0 * PI / 3.0, Box::new(|p| p[0] * p[0])),
                mk("cos_pi_z", 0.0, Box::new(|p| (PI * p[2]).cos())),
            ],
            Manifold::Hemisphere => vec![
                mk("one", 2.0 * PI, Box::new(|_| 1.0)),
                mk("z", PI, Box::new(|p| p[2])),
                mk("z_squared", 2.0 * PI / 3.0, Box::new(|p| p[2] * p[2])),
                mk("x_squared", 2.0 * PI / 3.0, Box::new(|p| p[0] * p[0])),
                mk("cos_pi_z", 0.0, Box::new(|p| (PI * p[2]).cos())),
            ],
        }
    }
}

/// A test function with its exact manifold integral.
pub struct QuadTestFunction {
    pub name: String,
    pub exact: f64,
    pub f: Box<dyn Fn(&[f64]) -> f64 + Sync>,
}

/// One row of the quadrature-hypothesis check.
#[derive(Debug, Clone)]
pub struct QuadCheckRow {
    pub name: String,
    pub exact: f64,
    pub computed: f64,
    pub abs_error: f64,
}

/// Evaluate `|∫f − Σ f(p_i) V_i|` for every built-in test function of the
/// cloud's manifold.
pub fn quadrature_check(cloud: &PointCloud) -> Result<Vec<QuadCheckRow>> {
    let manifold = cloud.manifold().ok_or_else(|| {
        Error::InvalidParameter("quadrature check needs a cloud with a manifold tag".into())
    })?;
    let mut rows = Vec::new();
    for tf in manifold.quadrature_test_set() {
        let mut acc = 0.0;
        for i in 0..cloud.n() {
            let p = cloud.points.row(i);
            acc += (tf.f)(p.as_slice().unwrap()) * cloud.weights[i];
        }
        rows.push(QuadCheckRow {
            name: tf.name,
            exact: tf.exact,
            computed: acc,
            abs_error: (acc - tf.exact).abs(),
        });
    }
    Ok(rows)
}
