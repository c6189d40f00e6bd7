//! Kernel families with exact first and second tail integrals.
//!
//! A kernel here is a compactly supported, nonnegative, C² profile
//! `R: [0, ∞) → [0, ∞)` with `R(r) = 0` for `r > 1` and `R` bounded below on
//! `[0, 1/2)`. The two tail integrals
//!
//! ```text
//! R̄(r)  = ∫_r^∞ R(s) ds        (mass profile)
//! R̄̄(r) = ∫_r^∞ R̄(s) ds
//! ```
//!
//! satisfy `R̄' = −R` and `R̄̄' = −R̄`, which is exactly what makes the
//! stiffness and mass quadratures consistent with each other. The default
//! family has closed-form tails; the truncated-Gaussian family tabulates
//! them at construction.
//!
//! At bandwidth `t` the profile is evaluated at squared ambient distances,
//! `R_t(x, y) = C_t R(|x−y|²/4t)` with `C_t = (4πt)^(−k/2)`, so the support
//! radius in ambient space is `2√t`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which primitive level of the kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    /// The profile R itself (stiffness side).
    R,
    /// First tail integral R̄ (mass side).
    RBar,
    /// Second tail integral R̄̄.
    RBarBar,
}

/// Kernel family tag, also the CLI-facing name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Wendland,
    Gaussian,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Wendland => "wendland",
            KernelFamily::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wendland" => Ok(KernelFamily::Wendland),
            "gaussian" => Ok(KernelFamily::Gaussian),
            other => Err(Error::InvalidParameter(format!(
                "unknown kernel family '{other}' (expected wendland or gaussian)"
            ))),
        }
    }

    pub fn spec(self) -> KernelSpec {
        match self {
            KernelFamily::Wendland => KernelSpec::wendland(),
            KernelFamily::Gaussian => KernelSpec::truncated_gaussian(),
        }
    }
}

/// A kernel profile with its two tail integrals and support metadata.
///
/// Immutable after construction; shared freely across threads.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    delta0: f64,
    tables: Option<TailTables>,
}

impl KernelSpec {
    /// Default family: `R(r) = (1−r)⁴(4r+1)` on `[0,1]`.
    ///
    /// Closed-form tails: `R̄(r) = (1−r)⁵(1+2r)/3` and
    /// `R̄̄(r) = (1−r)⁶/6 − 2(1−r)⁷/21`. The profile is monotone
    /// decreasing, so the lower bound on `[0, 1/2)` is `R(1/2) = 3/16`.
    pub fn wendland() -> Self {
        KernelSpec {
            family: KernelFamily::Wendland,
            delta0: 3.0 / 16.0,
            tables: None,
        }
    }

    /// Truncated Gaussian: `e^(−r)` blended to zero over `[1−ε, 1]` with a
    /// quintic C² step (ε = 0.1). Tails are tabulated by per-cell
    /// Gauss-Legendre quadrature and evaluated by cubic Hermite
    /// interpolation, whose slopes are the exact identities `R̄' = −R`,
    /// `R̄̄' = −R̄`.
    pub fn truncated_gaussian() -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            delta0: (-0.5f64).exp(),
            tables: Some(TailTables::build(gaussian_profile, 2048)),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Lower bound of R on [0, 1/2).
    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// The profile R(r). Exactly zero for r > 1.
    pub fn r(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        if r > 1.0 {
            return 0.0;
        }
        match self.family {
            KernelFamily::Wendland => {
                let s = 1.0 - r;
                let s2 = s * s;
                s2 * s2 * (4.0 * r + 1.0)
            }
            KernelFamily::Gaussian => gaussian_profile(r),
        }
    }

    /// First tail integral R̄(r) = ∫_r^∞ R. Exactly zero for r > 1.
    pub fn r_bar(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        if r > 1.0 {
            return 0.0;
        }
        match self.family {
            KernelFamily::Wendland => {
                let s = 1.0 - r;
                let s2 = s * s;
                s2 * s2 * s * (1.0 + 2.0 * r) / 3.0
            }
            KernelFamily::Gaussian => self.tables.as_ref().unwrap().eval_bar(r, self),
        }
    }

    /// Second tail integral R̄̄(r) = ∫_r^∞ R̄. Exactly zero for r > 1.
    pub fn r_bar_bar(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        if r > 1.0 {
            return 0.0;
        }
        match self.family {
            KernelFamily::Wendland => {
                let s = 1.0 - r;
                let s6 = s * s * s * s * s * s;
                s6 / 6.0 - 2.0 * s6 * s / 21.0
            }
            KernelFamily::Gaussian => self.tables.as_ref().unwrap().eval_bar_bar(r, self),
        }
    }

    pub fn eval(&self, which: Primitive, r: f64) -> f64 {
        match which {
            Primitive::R => self.r(r),
            Primitive::RBar => self.r_bar(r),
            Primitive::RBarBar => self.r_bar_bar(r),
        }
    }
}

/// `C_t = (4πt)^(−k/2)`, the heat-kernel normalization for intrinsic
/// dimension `k`. Rejects nonpositive `t`.
pub fn normalization_constant(t: f64, intrinsic_dim: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveBandwidth(t));
    }
    if intrinsic_dim == 0 {
        return Err(Error::InvalidParameter(
            "intrinsic dimension must be at least 1".into(),
        ));
    }
    Ok((4.0 * std::f64::consts::PI * t).powf(-(intrinsic_dim as f64) / 2.0))
}

/// A kernel pinned to a bandwidth and intrinsic dimension, evaluated at
/// squared ambient distances: `C_t · K(d²/4t)`.
///
/// Returns exactly 0 whenever `d² > 4t`, for all three primitive levels.
#[derive(Debug, Clone)]
pub struct ScaledKernel<'a> {
    spec: &'a KernelSpec,
    t: f64,
    c_t: f64,
    inv_4t: f64,
}

impl<'a> ScaledKernel<'a> {
    pub fn new(spec: &'a KernelSpec, t: f64, intrinsic_dim: usize) -> Result<Self> {
        let c_t = normalization_constant(t, intrinsic_dim)?;
        Ok(ScaledKernel {
            spec,
            t,
            c_t,
            inv_4t: 1.0 / (4.0 * t),
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.t
    }

    /// Support radius in ambient space, `2√t`.
    pub fn support_radius(&self) -> f64 {
        2.0 * self.t.sqrt()
    }

    pub fn normalization(&self) -> f64 {
        self.c_t
    }

    pub fn r(&self, sq_dist: f64) -> f64 {
        let x = sq_dist * self.inv_4t;
        if x > 1.0 {
            return 0.0;
        }
        self.c_t * self.spec.r(x)
    }

    pub fn r_bar(&self, sq_dist: f64) -> f64 {
        let x = sq_dist * self.inv_4t;
        if x > 1.0 {
            return 0.0;
        }
        self.c_t * self.spec.r_bar(x)
    }

    pub fn r_bar_bar(&self, sq_dist: f64) -> f64 {
        let x = sq_dist * self.inv_4t;
        if x > 1.0 {
            return 0.0;
        }
        self.c_t * self.spec.r_bar_bar(x)
    }

    pub fn eval(&self, which: Primitive, sq_dist: f64) -> f64 {
        match which {
            Primitive::R => self.r(sq_dist),
            Primitive::RBar => self.r_bar(sq_dist),
            Primitive::RBarBar => self.r_bar_bar(sq_dist),
        }
    }
}

/// Evaluate `C_t · K(sq_dist/4t)` for the selected primitive level.
pub fn kernel_at_scale(
    spec: &KernelSpec,
    t: f64,
    intrinsic_dim: usize,
    sq_dist: f64,
    which: Primitive,
) -> Result<f64> {
    Ok(ScaledKernel::new(spec, t, intrinsic_dim)?.eval(which, sq_dist))
}

fn gaussian_profile(r: f64) -> f64 {
    const EPS: f64 = 0.1;
    if r > 1.0 {
        return 0.0;
    }
    let base = (-r).exp();
    if r <= 1.0 - EPS {
        base
    } else {
        let x = (1.0 - r) / EPS;
        // quintic smoothstep: C2 at both ends
        let s = x * x * x * (6.0 * x * x - 15.0 * x + 10.0);
        base * s
    }
}

/// Tabulated tail integrals on a uniform grid over [0, 1], interpolated by
/// cubic Hermite with exact derivative data.
#[derive(Debug, Clone)]
struct TailTables {
    n_cells: usize,
    bar: Vec<f64>,
    bar_bar: Vec<f64>,
}

// Gauss-Legendre 5-point nodes/weights on [-1, 1].
const GL5_X: [f64; 5] = [
    -0.906179845938664,
    -0.538469310105683,
    0.0,
    0.538469310105683,
    0.906179845938664,
];
const GL5_W: [f64; 5] = [
    0.236926885056189,
    0.478628670499366,
    0.568888888888889,
    0.478628670499366,
    0.236926885056189,
];

fn gauss5(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL5_X.iter().zip(GL5_W.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

impl TailTables {
    fn build(profile: impl Fn(f64) -> f64 + Copy, n_cells: usize) -> Self {
        let h = 1.0 / n_cells as f64;
        let mut bar = vec![0.0; n_cells + 1];
        for i in (0..n_cells).rev() {
            let a = i as f64 * h;
            bar[i] = bar[i + 1] + gauss5(profile, a, a + h);
        }
        let mut tables = TailTables {
            n_cells,
            bar,
            bar_bar: Vec::new(),
        };
        // integrate the interpolated R-bar for the second tail
        let mut bar_bar = vec![0.0; n_cells + 1];
        for i in (0..n_cells).rev() {
            let a = i as f64 * h;
            bar_bar[i] = bar_bar[i + 1]
                + gauss5(|x| tables.hermite(&tables.bar, x, |y| profile(y)), a, a + h);
        }
        tables.bar_bar = bar_bar;
        tables
    }

    /// Cubic Hermite on the cell containing x; `slope(y)` is the negated
    /// derivative of the tabulated function at node y.
    fn hermite(&self, values: &[f64], x: f64, slope: impl Fn(f64) -> f64) -> f64 {
        let h = 1.0 / self.n_cells as f64;
        let cell = ((x * self.n_cells as f64).floor() as usize).min(self.n_cells - 1);
        let x0 = cell as f64 * h;
        let s = (x - x0) / h;
        let v0 = values[cell];
        let v1 = values[cell + 1];
        let d0 = -slope(x0);
        let d1 = -slope(x0 + h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * v0
            + (s3 - 2.0 * s2 + s) * h * d0
            + (-2.0 * s3 + 3.0 * s2) * v1
            + (s3 - s2) * h * d1
    }

    fn eval_bar(&self, x: f64, spec: &KernelSpec) -> f64 {
        self.hermite(&self.bar, x, |y| spec.r(y))
    }

    fn eval_bar_bar(&self, x: f64, spec: &KernelSpec) -> f64 {
        self.hermite(&self.bar_bar, x, |y| self.eval_bar(y, spec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature, used as the independent oracle for the
    /// closed-form tails.
    pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
        }
        fn recurse(
            f: &impl Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            whole: f64,
            fm: f64,
            tol: f64,
            depth: usize,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (left, flm) = simpson(f, a, fa, m, fm);
            let (right, frm) = simpson(f, m, fm, b, fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, fa, m, fm, left, flm, tol / 2.0, depth - 1)
                    + recurse(f, m, fm, b, fb, right, frm, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let (whole, fm) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, whole, fm, tol, 50)
    }

    #[test]
    fn wendland_point_values() {
        let k = KernelSpec::wendland();
        assert_eq!(k.r(0.0), 1.0);
        assert_eq!(k.r(1.0), 0.0);
        assert_eq!(k.r(2.0), 0.0);
        assert!((k.delta0() - 3.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn wendland_tails_match_quadrature() {
        let k = KernelSpec::wendland();
        let rbar0 = adaptive_simpson(&|s| k.r(s), 0.0, 1.0, 1e-13);
        assert!((k.r_bar(0.0) - rbar0).abs() < 1e-10, "{rbar0}");
        let rbb0 = adaptive_simpson(&|s| k.r_bar(s), 0.0, 1.0, 1e-13);
        assert!((k.r_bar_bar(0.0) - rbb0).abs() < 1e-10, "{rbb0}");
        // closed-form spot values
        assert!((k.r_bar(0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((k.r_bar_bar(0.0) - 1.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_tails_match_quadrature() {
        let k = KernelSpec::truncated_gaussian();
        for i in 0..20 {
            let r = i as f64 / 20.0;
            let want = adaptive_simpson(&|s| k.r(s), r, 1.0, 1e-13);
            assert!(
                (k.r_bar(r) - want).abs() < 1e-9,
                "r={r}: {} vs {want}",
                k.r_bar(r)
            );
        }
        assert!((k.delta0() - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn derivative_relations_by_central_differences() {
        for spec in [KernelSpec::wendland(), KernelSpec::truncated_gaussian()] {
            let eps = 1e-5;
            for i in 1..100 {
                let r = i as f64 / 100.0;
                if r + eps > 1.0 {
                    continue;
                }
                let d_bar = (spec.r_bar(r + eps) - spec.r_bar(r - eps)) / (2.0 * eps);
                let scale = spec.r(r).abs().max(1e-3);
                assert!(
                    (d_bar + spec.r(r)).abs() / scale < 1e-6,
                    "{:?} r={r}: d_bar={d_bar} -R={}",
                    spec.family(),
                    -spec.r(r)
                );
                let d_bb = (spec.r_bar_bar(r + eps) - spec.r_bar_bar(r - eps)) / (2.0 * eps);
                let scale = spec.r_bar(r).abs().max(1e-3);
                assert!(
                    (d_bb + spec.r_bar(r)).abs() / scale < 1e-6,
                    "{:?} r={r}",
                    spec.family()
                );
            }
        }
    }

    #[test]
    fn tails_nonincreasing_and_delta0_lower_bound() {
        for spec in [KernelSpec::wendland(), KernelSpec::truncated_gaussian()] {
            let mut prev_bar = f64::INFINITY;
            let mut prev_bb = f64::INFINITY;
            for i in 0..=400 {
                let r = i as f64 / 400.0;
                let b = spec.r_bar(r);
                let bb = spec.r_bar_bar(r);
                assert!(b <= prev_bar + 1e-14);
                assert!(bb <= prev_bb + 1e-14);
                prev_bar = b;
                prev_bb = bb;
            }
            for i in 0..500 {
                let r = i as f64 / 1000.0; // dense grid of [0, 1/2)
                assert!(spec.r(r) >= spec.delta0() - 1e-12);
            }
        }
    }

    #[test]
    fn smoothness_across_support_edge() {
        // R, R', R'' continuous at r = 1: finite differences straddling the
        // edge stay bounded and small.
        for spec in [KernelSpec::wendland(), KernelSpec::truncated_gaussian()] {
            let eps = 1e-4;
            let f = |r: f64| spec.r(r);
            let d1 = (f(1.0 + eps) - f(1.0 - eps)) / (2.0 * eps);
            let d2 = (f(1.0 + eps) - 2.0 * f(1.0) + f(1.0 - eps)) / (eps * eps);
            assert!(f(1.0).abs() < 1e-10);
            assert!(d1.abs() < 1e-3, "{:?} d1={d1}", spec.family());
            assert!(d2.abs() < 1.0, "{:?} d2={d2}", spec.family());
        }
    }

    #[test]
    fn normalization_identity() {
        let quarter_pi_inv = 1.0 / (4.0 * std::f64::consts::PI);
        assert!((normalization_constant(quarter_pi_inv, 2).unwrap() - 1.0).abs() < 1e-14);
        assert!((normalization_constant(quarter_pi_inv, 4).unwrap() - 1.0).abs() < 1e-14);
        let want = (0.04 * std::f64::consts::PI).powf(-0.5);
        assert!((normalization_constant(0.01, 1).unwrap() - want).abs() < 1e-14);
        assert!(normalization_constant(0.0, 1).is_err());
        assert!(normalization_constant(-1.0, 2).is_err());
    }

    #[test]
    fn scaled_kernel_support_and_values() {
        let spec = KernelSpec::wendland();
        let t = 0.03;
        let sk = ScaledKernel::new(&spec, t, 2).unwrap();
        for which in [Primitive::R, Primitive::RBar, Primitive::RBarBar] {
            assert_eq!(sk.eval(which, 4.0 * t + 1e-12), 0.0);
            assert_eq!(sk.eval(which, 100.0), 0.0);
        }
        let c_t = normalization_constant(t, 2).unwrap();
        assert!((sk.r(0.0) - c_t).abs() < 1e-15); // C_t * R(0)
        // sq_dist = t hits the profile at 1/4
        let want = c_t * spec.r_bar(0.25);
        assert!((sk.r_bar(t) - want).abs() < 1e-15);
        let oracle = c_t * adaptive_simpson(&|s| spec.r(s), 0.25, 1.0, 1e-13);
        assert!((sk.r_bar(t) - oracle).abs() < 1e-10);
    }

    #[test]
    fn scaled_kernel_rejects_bad_t() {
        let spec = KernelSpec::wendland();
        assert!(ScaledKernel::new(&spec, 0.0, 1).is_err());
        assert!(ScaledKernel::new(&spec, -0.5, 1).is_err());
    }
}
