//! Stiffness/mass pencil assembly from a weighted point cloud.
//!
//! The symmetrized pencil realizes the kernel-integral Laplacian: multiplying
//! row i of the discrete operator by `V_i` gives a symmetric stiffness
//!
//! ```text
//! A_ij = −(C_t/t) R(|p_i−p_j|²/4t) V_i V_j   (i ≠ j),   A_ii = −Σ_{j≠i} A_ij
//! ```
//!
//! and a mass matrix `B_ij = C_t R̄(|p_i−p_j|²/4t) V_i V_j`, including the
//! diagonal term `C_t R̄(0) V_i²`. Both share the neighbor-graph sparsity
//! pattern (support radius `2√t`). Eigenvalues and eigenvectors of the
//! unsymmetrized operator are unchanged by the row scaling since every
//! `V_i > 0`.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::kernels::{normalization_constant, KernelFamily, KernelSpec, ScaledKernel};
use crate::linalg::CsrMatrix;
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use std::collections::HashMap;

const MAX_DIM: usize = 4;

/// Uniform-grid fixed-radius index over the ambient bounding box.
///
/// Cell size equals the build radius; queries at any radius scan the
/// covering cell range, so each query costs O(candidates in range).
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    cell: f64,
    origin: [f64; MAX_DIM],
    dim: usize,
    cells: HashMap<[i64; MAX_DIM], Vec<usize>>,
    points: Array2<f64>,
}

impl NeighborIndex {
    pub fn build(points: &Array2<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "neighbor radius must be positive, got {radius}"
            )));
        }
        let dim = points.ncols();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "ambient dimension {dim} outside supported range 1..={MAX_DIM}"
            )));
        }
        let mut origin = [0.0; MAX_DIM];
        for d in 0..dim {
            origin[d] = points
                .column(d)
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
        }
        let mut cells: HashMap<[i64; MAX_DIM], Vec<usize>> = HashMap::new();
        for i in 0..points.nrows() {
            let key = Self::key_of(&origin, radius, dim, points.row(i).as_slice().unwrap());
            cells.entry(key).or_default().push(i);
        }
        Ok(NeighborIndex {
            cell: radius,
            origin,
            dim,
            cells,
            points: points.clone(),
        })
    }

    fn key_of(origin: &[f64; MAX_DIM], cell: f64, dim: usize, x: &[f64]) -> [i64; MAX_DIM] {
        let mut key = [0i64; MAX_DIM];
        for d in 0..dim {
            key[d] = ((x[d] - origin[d]) / cell).floor() as i64;
        }
        key
    }

    /// All indices j with `|x − p_j| ≤ radius`, ascending, with squared
    /// distances. The boundary is inclusive.
    pub fn query(&self, x: &[f64], radius: f64) -> Vec<(usize, f64)> {
        debug_assert_eq!(x.len(), self.dim);
        let r2 = radius * radius;
        let mut lo = [0i64; MAX_DIM];
        let mut hi = [0i64; MAX_DIM];
        for d in 0..self.dim {
            lo[d] = ((x[d] - radius - self.origin[d]) / self.cell).floor() as i64;
            hi[d] = ((x[d] + radius - self.origin[d]) / self.cell).floor() as i64;
        }
        let mut out = Vec::new();
        let mut key = [0i64; MAX_DIM];
        self.scan_cells(0, &lo, &hi, &mut key, &mut |idx_list| {
            for &j in idx_list {
                let p = self.points.row(j);
                let mut sq = 0.0;
                for d in 0..self.dim {
                    let diff = x[d] - p[d];
                    sq += diff * diff;
                }
                if sq <= r2 {
                    out.push((j, sq));
                }
            }
        });
        out.sort_unstable_by_key(|(j, _)| *j);
        out
    }

    fn scan_cells(
        &self,
        d: usize,
        lo: &[i64; MAX_DIM],
        hi: &[i64; MAX_DIM],
        key: &mut [i64; MAX_DIM],
        visit: &mut impl FnMut(&[usize]),
    ) {
        if d == self.dim {
            if let Some(list) = self.cells.get(key) {
                visit(list);
            }
            return;
        }
        for c in lo[d]..=hi[d] {
            key[d] = c;
            self.scan_cells(d + 1, lo, hi, key, visit);
        }
    }

    /// Nearest neighbor of point i excluding i itself, by expanding search.
    /// Returns `None` only for a single-point index.
    pub fn nearest_other(&self, i: usize) -> Option<(usize, f64)> {
        if self.points.nrows() < 2 {
            return None;
        }
        let x = self.points.row(i);
        let x = x.as_slice().unwrap();
        let mut radius = self.cell;
        loop {
            let hits = self.query(x, radius);
            let best = hits
                .iter()
                .filter(|(j, _)| *j != i)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some(&(j, sq)) = best {
                return Some((j, sq.sqrt()));
            }
            radius *= 2.0;
        }
    }
}

/// Symmetrized stiffness/mass pencil at bandwidth `t`.
#[derive(Debug, Clone)]
pub struct PimPencil {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub t: f64,
    pub kernel: KernelFamily,
    pub graph_mode: bool,
    /// The volume weights actually used (all `1/n` in graph mode).
    pub weights: Array1<f64>,
    pub intrinsic_dim: usize,
    /// Rows whose only pattern entry is the diagonal: the cloud is
    /// disconnected at this bandwidth.
    pub disconnected: Vec<usize>,
}

/// Options for [`assemble_pencil`].
#[derive(Debug, Clone, Copy)]
pub struct AssembleOptions {
    /// Replace every weight by 1/n (weighted graph Laplacian degeneration).
    pub graph_mode: bool,
    /// Mass diagonal regularization: adds `jitter · trace(B)/n` to each
    /// `B_ii`. Default 0.
    pub jitter: f64,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            graph_mode: false,
            jitter: 0.0,
        }
    }
}

pub fn assemble_pencil(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    t: f64,
    opts: AssembleOptions,
) -> Result<PimPencil> {
    let n = cloud.n();
    if n < 2 {
        return Err(Error::TooFewPoints {
            tag: "assembly".into(),
            min: 2,
            got: n,
        });
    }
    let scaled = ScaledKernel::new(kernel, t, cloud.intrinsic_dim())?;
    let radius = scaled.support_radius();
    let weights: Array1<f64> = if opts.graph_mode {
        Array1::from_elem(n, 1.0 / n as f64)
    } else {
        cloud.weights().to_owned()
    };
    let index = NeighborIndex::build(cloud.points(), radius)?;
    let inv_t = 1.0 / t;

    let rows: Vec<(Vec<(usize, f64)>, Vec<(usize, f64)>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = cloud.points().row(i);
            let neighbors = index.query(pi.as_slice().unwrap(), radius);
            let vi = weights[i];
            let mut a_row = Vec::with_capacity(neighbors.len());
            let mut b_row = Vec::with_capacity(neighbors.len());
            let mut diag = 0.0;
            let mut diag_pos = 0;
            for &(j, sq) in &neighbors {
                if j == i {
                    diag_pos = a_row.len();
                    a_row.push((i, 0.0));
                    b_row.push((i, scaled.r_bar(0.0) * vi * vi));
                } else {
                    let aij = -(scaled.r(sq) * inv_t) * (vi * weights[j]);
                    diag -= aij; // ascending-j accumulation, reproducible
                    a_row.push((j, aij));
                    b_row.push((j, scaled.r_bar(sq) * (vi * weights[j])));
                }
            }
            a_row[diag_pos].1 = diag;
            let isolated = neighbors.len() <= 1;
            (a_row, b_row, isolated)
        })
        .collect();

    let mut a_rows = Vec::with_capacity(n);
    let mut b_rows = Vec::with_capacity(n);
    let mut disconnected = Vec::new();
    for (i, (a_row, b_row, isolated)) in rows.into_iter().enumerate() {
        if isolated {
            disconnected.push(i);
        }
        a_rows.push(a_row);
        b_rows.push(b_row);
    }
    let a = CsrMatrix::from_rows(n, a_rows);
    let mut b = CsrMatrix::from_rows(n, b_rows);

    if opts.jitter != 0.0 {
        let trace: f64 = (0..n).map(|i| b.get(i, i)).sum();
        let add = opts.jitter * trace / n as f64;
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                b.row(i)
                    .map(|(j, v)| (j, if j == i { v + add } else { v }))
                    .collect()
            })
            .collect();
        b = CsrMatrix::from_rows(n, std::mem::take(&mut rows));
    }

    Ok(PimPencil {
        a,
        b,
        t,
        kernel: kernel.family(),
        graph_mode: opts.graph_mode,
        weights,
        intrinsic_dim: cloud.intrinsic_dim(),
        disconnected,
    })
}

/// The unsymmetrized operator action `diag(1/V)·A·u`, i.e. the pointwise
/// kernel-sum Laplacian at the samples.
pub fn apply_discrete_laplacian(pencil: &PimPencil, u: &Array1<f64>) -> Result<Array1<f64>> {
    if u.len() != pencil.a.n() {
        return Err(Error::DimensionMismatch {
            expected: pencil.a.n(),
            got: u.len(),
        });
    }
    let mut out = pencil.a.matvec(u);
    for (o, v) in out.iter_mut().zip(pencil.weights.iter()) {
        *o /= *v;
    }
    Ok(out)
}

/// Diagnostics on the kernel mass seen from each sample,
/// `w_(t,h)(p_i) = Σ_j R_t(p_i, p_j) V_j`.
#[derive(Debug, Clone)]
pub struct WBandReport {
    pub w: Array1<f64>,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    /// Points where w falls below 10% of the median: bandwidth too small or
    /// sampling too sparse there.
    pub flagged: Vec<usize>,
}

/// Per-point kernel-mass band check. Uses the exact identity
/// `w_i = t·A_ii/V_i + C_t R(0) V_i`, so no cloud access is needed.
pub fn spectral_shift_check(pencil: &PimPencil) -> Result<WBandReport> {
    let n = pencil.a.n();
    let c_t = normalization_constant(pencil.t, pencil.intrinsic_dim)?;
    let r0 = pencil.kernel.spec().r(0.0);
    let mut w = Array1::zeros(n);
    for i in 0..n {
        let vi = pencil.weights[i];
        w[i] = pencil.t * pencil.a.get(i, i) / vi + c_t * r0 * vi;
    }
    let mut sorted: Vec<f64> = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    let min = sorted[0];
    let max = sorted[n - 1];
    let flagged = (0..n).filter(|&i| w[i] < 0.1 * median).collect();
    Ok(WBandReport {
        w,
        min,
        max,
        median,
        flagged,
    })
}
