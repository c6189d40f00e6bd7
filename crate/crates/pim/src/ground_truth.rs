//! Analytic Neumann spectra and eigenfunctions for the built-in manifolds.
//!
//! Eigenvalues are reported as μ ≥ 0 in the convention −Δu = μu with
//! vanishing normal derivative at the boundary, ascending and repeated
//! according to multiplicity. The per-manifold mode ordering is fixed so a
//! mode index addresses one concrete eigenfunction.

use crate::cloud::Manifold;
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// A maximal run of equal eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenCluster {
    pub value: f64,
    pub first_mode: usize,
    pub multiplicity: usize,
}

/// Analytic spectrum of a manifold, with evaluable eigenfunctions.
pub struct GroundTruth {
    manifold: Manifold,
    eigenvalues: Vec<f64>,
    clusters: Vec<EigenCluster>,
    modes: Vec<Mode>,
}

enum Mode {
    Constant,
    /// cos(mπx/L) on the interval.
    IntervalCos { m: usize, length: f64 },
    /// cos(mθ) / sin(mθ) on the circle.
    CircleTrig { m: usize, sine: bool },
    /// cos(aπx/Lx)·cos(bπy/Ly).
    RectangleCos { a: usize, b: usize, lx: f64, ly: f64 },
    /// Product of circle modes on the flat torus.
    FlatTorusTrig {
        a: usize,
        b: usize,
        sine_a: bool,
        sine_b: bool,
    },
    /// Real solid harmonic restricted to the unit sphere.
    Harmonic { index: usize },
}

impl GroundTruth {
    /// The first `n_modes` Neumann eigenvalues (with multiplicity) for the
    /// manifold. Errors for manifolds without a closed-form spectrum.
    pub fn new(manifold: Manifold, n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter("need at least one mode".into()));
        }
        let (eigenvalues, modes) = enumerate_modes(manifold, n_modes)?;
        let clusters = cluster(&eigenvalues);
        Ok(GroundTruth {
            manifold,
            eigenvalues,
            clusters,
            modes,
        })
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    /// Ascending eigenvalues, repeated according to multiplicity.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn clusters(&self) -> &[EigenCluster] {
        &self.clusters
    }

    pub fn volume(&self) -> f64 {
        self.manifold.volume()
    }

    /// Evaluate mode `mode` at an ambient point.
    pub fn eigenfunction(&self, mode: usize, point: &[f64]) -> Result<f64> {
        let m = self.modes.get(mode).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "mode {mode} beyond the {} enumerated modes",
                self.modes.len()
            ))
        })?;
        Ok(match *m {
            Mode::Constant => 1.0,
            Mode::IntervalCos { m, length } => (m as f64 * PI * point[0] / length).cos(),
            Mode::CircleTrig { m, sine } => {
                let theta = point[1].atan2(point[0]);
                if sine {
                    (m as f64 * theta).sin()
                } else {
                    (m as f64 * theta).cos()
                }
            }
            Mode::RectangleCos { a, b, lx, ly } => {
                (a as f64 * PI * point[0] / lx).cos() * (b as f64 * PI * point[1] / ly).cos()
            }
            Mode::FlatTorusTrig {
                a,
                b,
                sine_a,
                sine_b,
            } => {
                let theta = point[1].atan2(point[0]);
                let phi = point[3].atan2(point[2]);
                let fa = if sine_a {
                    (a as f64 * theta).sin()
                } else {
                    (a as f64 * theta).cos()
                };
                let fb = if sine_b {
                    (b as f64 * phi).sin()
                } else {
                    (b as f64 * phi).cos()
                };
                fa * fb
            }
            Mode::Harmonic { index } => {
                eval_harmonic(index, point[0], point[1], point[2])
            }
        })
    }
}

fn cluster(values: &[f64]) -> Vec<EigenCluster> {
    let mut out: Vec<EigenCluster> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (v - c.value).abs() <= 1e-9 * (1.0 + v.abs()) => {
                c.multiplicity += 1;
            }
            _ => out.push(EigenCluster {
                value: v,
                first_mode: i,
                multiplicity: 1,
            }),
        }
    }
    out
}

fn enumerate_modes(manifold: Manifold, n_modes: usize) -> Result<(Vec<f64>, Vec<Mode>)> {
    let mut items: Vec<(f64, Mode)> = Vec::new();
    match manifold {
        Manifold::Interval { length } => {
            for m in 0..n_modes {
                let mu = (m as f64 * PI / length).powi(2);
                let mode = if m == 0 {
                    Mode::Constant
                } else {
                    Mode::IntervalCos { m, length }
                };
                items.push((mu, mode));
            }
        }
        Manifold::Circle { radius } => {
            items.push((0.0, Mode::Constant));
            let mut m = 1usize;
            while items.len() < n_modes {
                let mu = (m as f64 / radius).powi(2);
                items.push((mu, Mode::CircleTrig { m, sine: false }));
                items.push((mu, Mode::CircleTrig { m, sine: true }));
                m += 1;
            }
        }
        Manifold::Rectangle { lx, ly } => {
            // enumerate enough (a, b) pairs to cover n_modes after sorting
            let bound = n_modes + 2;
            for a in 0..bound {
                for b in 0..bound {
                    let mu = (a as f64 * PI / lx).powi(2) + (b as f64 * PI / ly).powi(2);
                    let mode = if a == 0 && b == 0 {
                        Mode::Constant
                    } else {
                        Mode::RectangleCos { a, b, lx, ly }
                    };
                    items.push((mu, mode));
                }
            }
        }
        Manifold::FlatTorus { major, minor } => {
            let bound = n_modes + 2;
            for a in 0..bound {
                for b in 0..bound {
                    let mu = (a as f64 / major).powi(2) + (b as f64 / minor).powi(2);
                    if a == 0 && b == 0 {
                        items.push((mu, Mode::Constant));
                        continue;
                    }
                    let branches: &[(bool, bool)] = match (a > 0, b > 0) {
                        (true, false) => &[(false, false), (true, false)],
                        (false, true) => &[(false, false), (false, true)],
                        (true, true) => {
                            &[(false, false), (false, true), (true, false), (true, true)]
                        }
                        (false, false) => unreachable!(),
                    };
                    for &(sa, sb) in branches {
                        items.push((
                            mu,
                            Mode::FlatTorusTrig {
                                a,
                                b,
                                sine_a: sa,
                                sine_b: sb,
                            },
                        ));
                    }
                }
            }
        }
        Manifold::Sphere => {
            let mut l = 0usize;
            'outer: loop {
                let mu = (l * (l + 1)) as f64;
                for m_idx in 0..(2 * l + 1) {
                    let mode = if l == 0 {
                        Mode::Constant
                    } else {
                        Mode::Harmonic {
                            index: harmonic_table_index(l, m_idx, false)?,
                        }
                    };
                    items.push((mu, mode));
                    if items.len() >= n_modes {
                        break 'outer;
                    }
                }
                l += 1;
            }
        }
        Manifold::Hemisphere => {
            let mut l = 0usize;
            'outer2: loop {
                let mu = (l * (l + 1)) as f64;
                for m_idx in 0..(l + 1) {
                    let mode = if l == 0 {
                        Mode::Constant
                    } else {
                        Mode::Harmonic {
                            index: harmonic_table_index(l, m_idx, true)?,
                        }
                    };
                    items.push((mu, mode));
                    if items.len() >= n_modes {
                        break 'outer2;
                    }
                }
                l += 1;
            }
        }
        Manifold::Torus { .. } => {
            return Err(Error::NoGroundTruth("torus".into()));
        }
    }
    items.sort_by(|x, y| x.0.total_cmp(&y.0));
    items.truncate(n_modes);
    if items.len() < n_modes {
        return Err(Error::InvalidParameter(format!(
            "could not enumerate {n_modes} modes for {}",
            manifold.tag()
        )));
    }
    let (values, modes): (Vec<f64>, Vec<Mode>) = items.into_iter().unzip();
    Ok((values, modes))
}

// Real solid harmonics (homogeneous harmonic polynomials) tabulated through
// degree 4, evaluated at ambient (x, y, z); entries record (l, z-parity).
// Hemisphere Neumann modes are exactly the z-even entries of each degree.
struct HarmonicEntry {
    l: usize,
    z_even: bool,
    f: fn(f64, f64, f64) -> f64,
}

#[rustfmt::skip]
const HARMONICS: &[HarmonicEntry] = &[
    // l = 1
    HarmonicEntry { l: 1, z_even: true,  f: |x, _, _| x },
    HarmonicEntry { l: 1, z_even: true,  f: |_, y, _| y },
    HarmonicEntry { l: 1, z_even: false, f: |_, _, z| z },
    // l = 2
    HarmonicEntry { l: 2, z_even: true,  f: |x, y, z| 3.0 * z * z - (x * x + y * y + z * z) },
    HarmonicEntry { l: 2, z_even: true,  f: |x, y, _| x * x - y * y },
    HarmonicEntry { l: 2, z_even: true,  f: |x, y, _| x * y },
    HarmonicEntry { l: 2, z_even: false, f: |_, y, z| y * z },
    HarmonicEntry { l: 2, z_even: false, f: |x, _, z| z * x },
    // l = 3
    HarmonicEntry { l: 3, z_even: true,  f: |x, y, z| x * (5.0 * z * z - (x * x + y * y + z * z)) },
    HarmonicEntry { l: 3, z_even: true,  f: |x, y, z| y * (5.0 * z * z - (x * x + y * y + z * z)) },
    HarmonicEntry { l: 3, z_even: true,  f: |x, y, _| x * (x * x - 3.0 * y * y) },
    HarmonicEntry { l: 3, z_even: true,  f: |x, y, _| y * (3.0 * x * x - y * y) },
    HarmonicEntry { l: 3, z_even: false, f: |x, y, z| z * (5.0 * z * z - 3.0 * (x * x + y * y + z * z)) },
    HarmonicEntry { l: 3, z_even: false, f: |x, y, z| z * (x * x - y * y) },
    HarmonicEntry { l: 3, z_even: false, f: |x, y, z| x * y * z },
    // l = 4
    HarmonicEntry { l: 4, z_even: true,  f: |x, y, z| { let r2 = x * x + y * y + z * z; 35.0 * z.powi(4) - 30.0 * z * z * r2 + 3.0 * r2 * r2 } },
    HarmonicEntry { l: 4, z_even: true,  f: |x, y, z| (x * x - y * y) * (7.0 * z * z - (x * x + y * y + z * z)) },
    HarmonicEntry { l: 4, z_even: true,  f: |x, y, z| x * y * (7.0 * z * z - (x * x + y * y + z * z)) },
    HarmonicEntry { l: 4, z_even: true,  f: |x, y, _| x.powi(4) - 6.0 * x * x * y * y + y.powi(4) },
    HarmonicEntry { l: 4, z_even: true,  f: |x, y, _| x * y * (x * x - y * y) },
    HarmonicEntry { l: 4, z_even: false, f: |x, y, z| x * z * (7.0 * z * z - 3.0 * (x * x + y * y + z * z)) },
    HarmonicEntry { l: 4, z_even: false, f: |x, y, z| y * z * (7.0 * z * z - 3.0 * (x * x + y * y + z * z)) },
    HarmonicEntry { l: 4, z_even: false, f: |x, y, z| z * x * (x * x - 3.0 * y * y) },
    HarmonicEntry { l: 4, z_even: false, f: |x, y, z| z * y * (3.0 * x * x - y * y) },
];

const MAX_TABULATED_L: usize = 4;

fn harmonic_table_index(l: usize, m_idx: usize, even_only: bool) -> Result<usize> {
    if l > MAX_TABULATED_L {
        return Err(Error::InvalidParameter(format!(
            "spherical harmonics tabulated through degree {MAX_TABULATED_L}, requested {l}"
        )));
    }
    let mut count = 0;
    for (i, e) in HARMONICS.iter().enumerate() {
        if e.l == l && (!even_only || e.z_even) {
            if count == m_idx {
                return Ok(i);
            }
            count += 1;
        }
    }
    Err(Error::InvalidParameter(format!(
        "no harmonic entry l={l} index {m_idx}"
    )))
}

fn eval_harmonic(index: usize, x: f64, y: f64, z: f64) -> f64 {
    (HARMONICS[index].f)(x, y, z)
}
