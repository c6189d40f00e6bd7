//! Refinement studies: eigenvalue errors, eigenfunction subspace residuals,
//! and fitted empirical rates across (n, t) ladders.

use crate::assembly::{assemble_pencil, AssembleOptions, PimPencil};
use crate::cloud::{Manifold, NonuniformOptions, PointCloud};
use crate::eigensolve::{eigenvalue_table, solve_pencil, EigenTableRow, Spectrum, SolveOptions};
use crate::error::{Error, Result};
use crate::ground_truth::GroundTruth;
use crate::kernels::KernelFamily;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Bandwidth selection per ladder level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    Fixed { t: f64 },
    /// `t = c · h^gamma` from the measured fill distance.
    PowerOfFill { c: f64, gamma: f64 },
}

impl BandwidthRule {
    pub fn bandwidth(&self, h: f64) -> f64 {
        match *self {
            BandwidthRule::Fixed { t } => t,
            BandwidthRule::PowerOfFill { c, gamma } => c * h.powf(gamma),
        }
    }
}

/// Which inner product measures the subspace residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualNorm {
    /// Mass inner product (the computable surrogate for L²/H⁰).
    Mass,
    /// Stiffness inner product (H¹-seminorm flavor); undefined on the
    /// constant cluster.
    Stiffness,
}

#[derive(Debug, Clone)]
pub struct LadderConfig {
    pub manifold: Manifold,
    pub n_list: Vec<usize>,
    pub rule: BandwidthRule,
    pub kernel: KernelFamily,
    /// Number of nonconstant modes compared; m+1 modes are solved.
    pub modes: usize,
    pub graph_mode: bool,
    pub mass_jitter: f64,
    pub nonuniform: Option<NonuniformOptions>,
    pub solver: SolveOptions,
    pub residual_norm: ResidualNorm,
}

impl LadderConfig {
    pub fn new(manifold: Manifold, n_list: Vec<usize>, rule: BandwidthRule, modes: usize) -> Self {
        LadderConfig {
            manifold,
            n_list,
            rule,
            kernel: KernelFamily::Wendland,
            modes,
            graph_mode: false,
            mass_jitter: 0.0,
            nonuniform: None,
            solver: SolveOptions::default(),
            residual_norm: ResidualNorm::Mass,
        }
    }
}

/// One refinement level. A failed stage leaves `error` set and the ladder
/// continues.
#[derive(Debug, Clone)]
pub struct LadderRow {
    pub n: usize,
    pub h: f64,
    pub t: f64,
    pub modes: Vec<EigenTableRow>,
    /// Per ground-truth cluster within the solved range; `None` when the
    /// residual could not be evaluated.
    pub cluster_residuals: Vec<Option<f64>>,
    pub wall_ms: f64,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedRate {
    pub mode: usize,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<LadderRow>,
    /// Log-log slopes of eigenvalue error vs h per nonconstant mode;
    /// empty unless at least 3 levels succeeded.
    pub fitted_rates: Vec<FittedRate>,
}

/// Least-squares slope and intercept of `log e` against `log h`.
/// Needs at least 3 strictly positive pairs.
pub fn fit_rate(h_values: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if h_values.len() != errors.len() {
        return Err(Error::DimensionMismatch {
            expected: h_values.len(),
            got: errors.len(),
        });
    }
    if h_values.len() < 3 {
        return Err(Error::InvalidParameter(
            "rate fit needs at least 3 ladder levels".into(),
        ));
    }
    if h_values.iter().chain(errors.iter()).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(
            "rate fit needs strictly positive h and error values".into(),
        ));
    }
    let n = h_values.len() as f64;
    let xs: Vec<f64> = h_values.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    Ok((slope, ym - slope * xm))
}

/// B-orthogonal projection residual of a ground-truth eigenfunction cluster
/// against the computed eigenspace whose μ fall in the matching window
/// `max(5% of the cluster value, 3 × median residual norm)`.
pub fn subspace_residual(
    spectrum: &Spectrum,
    truth: &GroundTruth,
    cloud: &PointCloud,
    pencil: &PimPencil,
    cluster_index: usize,
    norm: ResidualNorm,
) -> Result<f64> {
    let cluster = *truth
        .clusters()
        .get(cluster_index)
        .ok_or_else(|| Error::InvalidParameter(format!("no cluster {cluster_index}")))?;
    if norm == ResidualNorm::Stiffness && cluster.value == 0.0 {
        return Err(Error::InvalidParameter(
            "stiffness-norm residual is undefined on the constant cluster".into(),
        ));
    }
    let gram = |u: &Array1<f64>, v: &Array1<f64>| -> f64 {
        match norm {
            ResidualNorm::Mass => u.dot(&pencil.b.matvec(v)),
            ResidualNorm::Stiffness => u.dot(&pencil.a.matvec(v)),
        }
    };
    let mut sorted_res: Vec<f64> = spectrum.residual_norms.clone();
    sorted_res.sort_by(f64::total_cmp);
    let median_res = sorted_res.get(sorted_res.len() / 2).copied().unwrap_or(0.0);
    let window = (0.05 * cluster.value).max(3.0 * median_res).max(1e-12);
    let members: Vec<usize> = (0..spectrum.mu.len())
        .filter(|&i| (spectrum.mu[i] - cluster.value).abs() <= window)
        .collect();
    if members.is_empty() {
        return Err(Error::ClusterNotResolved {
            index: cluster_index,
            value: cluster.value,
        });
    }
    let span: Vec<Array1<f64>> = members
        .iter()
        .map(|&i| spectrum.vectors.column(i).to_owned())
        .collect();
    // Gram matrix of the span in the chosen inner product
    let k = span.len();
    let mut g = Array2::zeros((k, k));
    let mut cache: Vec<Array1<f64>> = Vec::with_capacity(k);
    for v in &span {
        cache.push(match norm {
            ResidualNorm::Mass => pencil.b.matvec(v),
            ResidualNorm::Stiffness => pencil.a.matvec(v),
        });
    }
    for i in 0..k {
        for j in 0..k {
            g[[i, j]] = span[i].dot(&cache[j]);
        }
    }
    let mut worst = 0.0f64;
    for m in 0..cluster.multiplicity {
        let mode = cluster.first_mode + m;
        let mut phi = Array1::zeros(cloud.n());
        for i in 0..cloud.n() {
            phi[i] = truth.eigenfunction(mode, &cloud.point(i))?;
        }
        let phi_norm2 = gram(&phi, &phi);
        if !(phi_norm2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampled eigenfunction {mode} has nonpositive norm in the chosen inner product"
            )));
        }
        phi.mapv_inplace(|x| x / phi_norm2.sqrt());
        // solve G coef = <span, phi>
        let rhs = Array1::from_iter(cache.iter().map(|c| c.dot(&phi)));
        let coef = solve_small_spd(&g, &rhs)?;
        let mut r = phi.clone();
        for (c, v) in coef.iter().zip(span.iter()) {
            r = r - &(v.clone() * *c);
        }
        let rn = gram(&r, &r).max(0.0).sqrt();
        worst = worst.max(rn);
    }
    Ok(worst)
}

fn solve_small_spd(g: &Array2<f64>, rhs: &Array1<f64>) -> Result<Array1<f64>> {
    let k = g.nrows();
    let mut l = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..=i {
            let mut sum = g[[i, j]];
            for p in 0..j {
                sum -= l[[i, p]] * l[[j, p]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "projection Gram matrix not positive definite".into(),
                    ));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    let mut x = rhs.clone();
    for i in 0..k {
        let mut sum = x[i];
        for p in 0..i {
            sum -= l[[i, p]] * x[p];
        }
        x[i] = sum / l[[i, i]];
    }
    for i in (0..k).rev() {
        let mut sum = x[i];
        for p in (i + 1)..k {
            sum -= l[[p, i]] * x[p];
        }
        x[i] = sum / l[[i, i]];
    }
    Ok(x)
}

/// Run a refinement ladder: sample, assemble, solve, compare, per level.
/// Stage failures are recorded in the row and the ladder continues.
pub fn run_ladder(config: &LadderConfig) -> Result<ConvergenceReport> {
    if config.n_list.is_empty() {
        return Err(Error::InvalidParameter("empty refinement ladder".into()));
    }
    if config
        .n_list
        .windows(2)
        .any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidParameter(
            "ladder sizes must be strictly ascending".into(),
        ));
    }
    let truth = GroundTruth::new(config.manifold, config.modes + 1)?;
    let kernel = config.kernel.spec();
    let mut rows = Vec::new();
    for &n in &config.n_list {
        let started = Instant::now();
        let mut warnings = Vec::new();
        let row = (|| -> Result<(PointCloud, PimPencil, Spectrum)> {
            let cloud = match config.nonuniform {
                Some(opts) => config.manifold.sample_nonuniform(n, opts)?,
                None => config.manifold.sample(n)?,
            };
            let t = config.rule.bandwidth(cloud.h_estimate());
            let pencil = assemble_pencil(
                &cloud,
                &kernel,
                t,
                AssembleOptions {
                    graph_mode: config.graph_mode,
                    jitter: config.mass_jitter,
                },
            )?;
            if !pencil.disconnected.is_empty() {
                warnings.push(format!(
                    "disconnected at this bandwidth: {} isolated rows (t = {:.3e})",
                    pencil.disconnected.len(),
                    t
                ));
            }
            let spectrum = solve_pencil(&pencil, config.modes + 1, &config.solver)?;
            Ok((cloud, pencil, spectrum))
        })();
        match row {
            Ok((cloud, pencil, spectrum)) => {
                let table = eigenvalue_table(&spectrum, &truth)?;
                let mut cluster_residuals = Vec::new();
                for (ci, cl) in truth.clusters().iter().enumerate() {
                    if cl.first_mode + cl.multiplicity > config.modes + 1 {
                        cluster_residuals.push(None);
                        continue;
                    }
                    if config.residual_norm == ResidualNorm::Stiffness && cl.value == 0.0 {
                        cluster_residuals.push(None);
                        continue;
                    }
                    match subspace_residual(
                        &spectrum,
                        &truth,
                        &cloud,
                        &pencil,
                        ci,
                        config.residual_norm,
                    ) {
                        Ok(r) => cluster_residuals.push(Some(r)),
                        Err(e) => {
                            warnings.push(format!("cluster {ci}: {e}"));
                            cluster_residuals.push(None);
                        }
                    }
                }
                rows.push(LadderRow {
                    n: cloud.n(),
                    h: cloud.h_estimate(),
                    t: pencil.t,
                    modes: table,
                    cluster_residuals,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                    warnings,
                    error: None,
                });
            }
            Err(e) => {
                rows.push(LadderRow {
                    n,
                    h: f64::NAN,
                    t: f64::NAN,
                    modes: Vec::new(),
                    cluster_residuals: Vec::new(),
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                    warnings,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let good: Vec<&LadderRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let mut fitted_rates = Vec::new();
    if good.len() >= 3 {
        for mode in 1..=config.modes {
            let mut hs = Vec::new();
            let mut es = Vec::new();
            for row in &good {
                if let Some(entry) = row.modes.iter().find(|m| m.mode == mode) {
                    if entry.abs_error > 0.0 && row.h > 0.0 {
                        hs.push(row.h);
                        es.push(entry.abs_error);
                    }
                }
            }
            if hs.len() >= 3 {
                if let Ok((slope, intercept)) = fit_rate(&hs, &es) {
                    fitted_rates.push(FittedRate {
                        mode,
                        slope,
                        intercept,
                    });
                }
            }
        }
    }
    Ok(ConvergenceReport { rows, fitted_rates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::dense_generalized_eigs;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn fit_rate_recovers_exact_slopes() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        let e1: Vec<f64> = h.to_vec();
        let (s, _) = fit_rate(&h, &e1).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let e2: Vec<f64> = h.iter().map(|x| x * x).collect();
        let (s, _) = fit_rate(&h, &e2).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h: Vec<f64> = (0..8).map(|i| 0.2 / 2.0f64.powi(i)).collect();
        let e: Vec<f64> = h
            .iter()
            .map(|x| 3.0 * x.powf(1.5) * (1.0 + 0.01 * (rng.gen::<f64>() - 0.5)))
            .collect();
        let (s, _) = fit_rate(&h, &e).unwrap();
        assert!((s - 1.5).abs() < 0.1, "slope {s}");
    }

    #[test]
    fn fit_rate_rejects_bad_input() {
        assert!(fit_rate(&[0.1, 0.05], &[1.0, 0.5]).is_err());
        assert!(fit_rate(&[0.1, 0.05, 0.02], &[1.0, 0.0, 0.5]).is_err());
        assert!(fit_rate(&[0.1, -0.05, 0.02], &[1.0, 0.1, 0.5]).is_err());
    }

    fn interval_spectrum(n: usize) -> (PointCloud, PimPencil, Spectrum, GroundTruth) {
        let manifold = Manifold::Interval { length: PI };
        let cloud = manifold.sample(n).unwrap();
        let t = 0.01 * cloud.h_estimate().sqrt();
        let pencil = assemble_pencil(
            &cloud,
            &KernelFamily::Wendland.spec(),
            t,
            AssembleOptions::default(),
        )
        .unwrap();
        let spectrum =
            dense_generalized_eigs(&pencil.a.to_dense(), &pencil.b.to_dense(), 4).unwrap();
        let truth = GroundTruth::new(manifold, 4).unwrap();
        (cloud, pencil, spectrum, truth)
    }

    #[test]
    fn residual_of_exact_eigenvectors_is_zero() {
        let (cloud, pencil, spectrum, truth) = interval_spectrum(200);
        // replace computed cluster-1 vector by the sampled analytic one
        let mut phi = Array1::zeros(cloud.n());
        for i in 0..cloud.n() {
            phi[i] = truth.eigenfunction(1, &cloud.point(i)).unwrap();
        }
        let bn = phi.dot(&pencil.b.matvec(&phi)).sqrt();
        phi.mapv_inplace(|x| x / bn);
        let mut fake = spectrum.clone();
        fake.vectors.column_mut(1).assign(&phi);
        let r = subspace_residual(&fake, &truth, &cloud, &pencil, 1, ResidualNorm::Mass).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn residual_of_orthogonal_target_is_one() {
        let (cloud, pencil, spectrum, truth) = interval_spectrum(200);
        // span holds only the mode-2 eigenvector while the window matches
        // cluster 1: the projection removes almost nothing
        let mut fake = spectrum.clone();
        let v2 = spectrum.vectors.column(2).to_owned();
        fake.vectors.column_mut(1).assign(&v2);
        fake.mu[1] = truth.clusters()[1].value;
        let r = subspace_residual(&fake, &truth, &cloud, &pencil, 1, ResidualNorm::Mass).unwrap();
        assert!((r - 1.0).abs() < 0.05, "{r}");
    }

    #[test]
    fn residual_decreases_with_refinement() {
        let (c1, p1, s1, t1) = interval_spectrum(200);
        let (c2, p2, s2, t2) = interval_spectrum(400);
        let r1 = subspace_residual(&s1, &t1, &c1, &p1, 1, ResidualNorm::Mass).unwrap();
        let r2 = subspace_residual(&s2, &t2, &c2, &p2, 1, ResidualNorm::Mass).unwrap();
        assert!(r2 < r1, "{r1} -> {r2}");
        // stiffness-norm variant works on nonconstant clusters
        let ra = subspace_residual(&s1, &t1, &c1, &p1, 1, ResidualNorm::Stiffness).unwrap();
        assert!(ra > 0.0 && ra < 1.0);
        assert!(
            subspace_residual(&s1, &t1, &c1, &p1, 0, ResidualNorm::Stiffness).is_err()
        );
    }

    #[test]
    fn unresolved_cluster_errors() {
        let (cloud, pencil, mut spectrum, truth) = interval_spectrum(150);
        for m in spectrum.mu.iter_mut() {
            *m += 100.0; // push every computed value out of any window
        }
        match subspace_residual(&spectrum, &truth, &cloud, &pencil, 1, ResidualNorm::Mass) {
            Err(Error::ClusterNotResolved { .. }) => {}
            other => panic!("expected unresolved cluster, got {other:?}"),
        }
    }

    #[test]
    fn single_level_ladder_has_no_rates() {
        let cfg = LadderConfig::new(
            Manifold::Interval { length: PI },
            vec![80],
            BandwidthRule::PowerOfFill { c: 0.01, gamma: 0.5 },
            3,
        );
        let report = run_ladder(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.fitted_rates.is_empty());
        assert!(report.rows[0].error.is_none());
        // mode 0 stays exact
        assert!(report.rows[0].modes[0].abs_error <= 1e-8);
    }

    #[test]
    fn ladder_records_failures_and_continues() {
        let cfg = LadderConfig::new(
            Manifold::Interval { length: PI },
            vec![50, 100],
            BandwidthRule::Fixed { t: 1e-12 }, // far below connectivity
            2,
        );
        let report = run_ladder(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            // either the solve failed outright or the disconnection warning
            // fired; silence would be a bug
            assert!(
                row.error.is_some() || !row.warnings.is_empty(),
                "row n={} gave neither error nor warning",
                row.n
            );
        }
    }

    #[test]
    fn ladder_rejects_bad_configs() {
        let cfg = LadderConfig::new(
            Manifold::Interval { length: PI },
            vec![],
            BandwidthRule::Fixed { t: 0.01 },
            2,
        );
        assert!(run_ladder(&cfg).is_err());
        let cfg = LadderConfig::new(
            Manifold::Interval { length: PI },
            vec![100, 100],
            BandwidthRule::Fixed { t: 0.01 },
            2,
        );
        assert!(run_ladder(&cfg).is_err());
    }

    #[test]
    fn ladder_report_is_deterministic() {
        let mk = || {
            let cfg = LadderConfig::new(
                Manifold::Interval { length: PI },
                vec![60, 120],
                BandwidthRule::PowerOfFill { c: 0.01, gamma: 0.5 },
                3,
            );
            run_ladder(&cfg).unwrap()
        };
        let r1 = mk();
        let r2 = mk();
        for (a, b) in r1.rows.iter().zip(r2.rows.iter()) {
            assert_eq!(a.n, b.n);
            for (ma, mb) in a.modes.iter().zip(b.modes.iter()) {
                assert_eq!(ma.computed.to_bits(), mb.computed.to_bits());
            }
            for (ca, cb) in a.cluster_residuals.iter().zip(b.cluster_residuals.iter()) {
                assert_eq!(
                    ca.map(f64::to_bits),
                    cb.map(f64::to_bits)
                );
            }
        }
    }
}
