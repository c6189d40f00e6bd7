//! Subcommand CLI over the pipeline: sample, assemble, eigs, poisson,
//! extend, converge, quadcheck.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, bad files),
//! 2 numerical failure (non-convergence, non-PD mass, disconnection).
//! All outputs are written atomically.

use crate::assembly::{assemble_pencil, spectral_shift_check, AssembleOptions};
use crate::cloud::{quadrature_check, Manifold, NonuniformOptions, PointCloud};
use crate::convergence::{run_ladder, BandwidthRule, LadderConfig, ResidualNorm};
use crate::eigensolve::{solve_pencil, LanczosOptions, SolveOptions};
use crate::error::{Error, Result};
use crate::io;
use crate::kernels::KernelFamily;
use crate::operators::{poisson_solve, FieldEvaluator, PoissonMethod, PoissonOptions};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "pim",
    about = "Laplace-Beltrami spectra from point clouds via the point integral method",
    version
)]
struct Cli {
    /// Cap worker threads for parallel assembly.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a weighted point cloud on a built-in manifold.
    Sample(SampleArgs),
    /// Assemble the stiffness/mass pencil from a cloud CSV.
    Assemble(AssembleArgs),
    /// Solve the generalized eigenproblem of an assembled pencil.
    Eigs(EigsArgs),
    /// Solve the kernel-integral Poisson system for given f samples.
    Poisson(PoissonArgs),
    /// Evaluate an eigenvector extension at off-sample points.
    Extend(ExtendArgs),
    /// Run a refinement ladder against the analytic spectrum.
    Converge(ConvergeArgs),
    /// Check the quadrature hypothesis on the built-in test functions.
    Quadcheck(QuadcheckArgs),
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Manifold tag: interval, circle, rectangle, torus, flat_torus,
    /// sphere, hemisphere.
    #[arg(long)]
    manifold: String,
    /// Point count (per side for the rectangle; band-quantized on the
    /// hemisphere).
    #[arg(long)]
    n: usize,
    /// Manifold parameter, repeatable: --param L=3.14 --param radius=2
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Seeded nonuniform mode: per-point jitter as a fraction of the
    /// spacing (interval/circle only).
    #[arg(long, default_value_t = 0.0)]
    jitter_frac: f64,
    /// Smooth density-warp amplitude for the nonuniform mode.
    #[arg(long, default_value_t = 0.0)]
    warp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    /// Input cloud CSV.
    #[arg(short, long)]
    input: PathBuf,
    /// Kernel bandwidth t (ambient support radius is 2*sqrt(t)).
    #[arg(long)]
    t: f64,
    /// Kernel family.
    #[arg(long, default_value = "wendland")]
    kernel: String,
    /// Replace all volume weights by 1/n (weighted graph Laplacian).
    #[arg(long)]
    graph_mode: bool,
    /// Mass-diagonal regularization epsilon (adds eps*trace(B)/n).
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Output pencil directory.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EigsArgs {
    /// Input pencil directory.
    #[arg(short, long)]
    input: PathBuf,
    /// Number of modes (including the constant mode).
    #[arg(short = 'm', long = "modes")]
    modes: usize,
    /// Force the iterative Lanczos path.
    #[arg(long)]
    lanczos: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 400)]
    max_iter: usize,
    /// Deflate the constant mode before reduction.
    #[arg(long)]
    deflate_constant: bool,
    /// Also write eigenvectors to this sidecar CSV.
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct PoissonArgs {
    /// Input pencil directory.
    #[arg(short, long)]
    input: PathBuf,
    /// CSV of right-hand-side samples f(p_i).
    #[arg(long = "f")]
    f_samples: PathBuf,
    /// Use conjugate gradients with nullspace projection instead of the
    /// direct sparse factorization.
    #[arg(long)]
    cg: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ExtendArgs {
    /// Input spectrum JSON (must reference a vector sidecar).
    #[arg(short, long)]
    input: PathBuf,
    /// Mode index to extend.
    #[arg(long)]
    mode: usize,
    /// CSV of evaluation points (columns x1..xd).
    #[arg(long)]
    at: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long)]
    manifold: String,
    /// Ascending ladder sizes, comma separated: --n 125,250,500,1000
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Bandwidth rule: "fixed" (needs --t) or "c*h^<gamma>" (needs --c).
    #[arg(long = "t-rule", default_value = "c*h^0.5")]
    t_rule: String,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value = "wendland")]
    kernel: String,
    /// Nonconstant modes to compare.
    #[arg(short = 'm', long = "modes", default_value_t = 6)]
    modes: usize,
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    graph_mode: bool,
    /// Mass-diagonal regularization epsilon.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter_frac: f64,
    #[arg(long, default_value_t = 0.0)]
    warp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Measure subspace residuals in the stiffness (H1-seminorm) inner
    /// product instead of the mass inner product.
    #[arg(long)]
    h1_residual: bool,
    #[arg(long)]
    lanczos: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct QuadcheckArgs {
    #[arg(long)]
    manifold: String,
    #[arg(long)]
    n: usize,
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Optional CSV output.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Parse argv and run; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    if let Some(threads) = cli.threads {
        // best effort: the pool can only be initialized once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_params(raw: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in raw {
        let (k, v) = item.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("--param expects KEY=VALUE, got '{item}'"))
        })?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("--param {k}: '{v}' is not a float")))?;
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn parse_t_rule(rule: &str, c: Option<f64>, t: Option<f64>) -> Result<BandwidthRule> {
    if rule == "fixed" {
        let t = t.ok_or_else(|| {
            Error::InvalidParameter("--t-rule fixed requires --t <float>".into())
        })?;
        return Ok(BandwidthRule::Fixed { t });
    }
    if let Some(rest) = rule.strip_prefix("c*h^") {
        let gamma: f64 = rest.parse().map_err(|_| {
            Error::InvalidParameter(format!("bad exponent in --t-rule '{rule}'"))
        })?;
        let c = c.ok_or_else(|| {
            Error::InvalidParameter("--t-rule c*h^<gamma> requires --c <float>".into())
        })?;
        return Ok(BandwidthRule::PowerOfFill { c, gamma });
    }
    Err(Error::InvalidParameter(format!(
        "unknown --t-rule '{rule}' (expected 'fixed' or 'c*h^<gamma>')"
    )))
}

fn sample_cloud(
    manifold: &Manifold,
    n: usize,
    jitter_frac: f64,
    warp: f64,
    seed: u64,
) -> Result<PointCloud> {
    if jitter_frac == 0.0 && warp == 0.0 {
        manifold.sample(n)
    } else {
        manifold.sample_nonuniform(
            n,
            NonuniformOptions {
                jitter_frac,
                warp,
                seed,
            },
        )
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Sample(args) => {
            let params = parse_params(&args.params)?;
            let manifold = Manifold::from_params(&args.manifold, &params)?;
            let cloud = sample_cloud(&manifold, args.n, args.jitter_frac, args.warp, args.seed)?;
            io::write_cloud_csv(&cloud, &args.output)?;
            println!(
                "wrote {} points (h = {:.6e}) to {}",
                cloud.n(),
                cloud.h_estimate(),
                args.output.display()
            );
            Ok(())
        }
        Command::Assemble(args) => {
            let kernel = KernelFamily::parse(&args.kernel)?.spec();
            let cloud = io::read_cloud_csv(&args.input)?;
            let pencil = assemble_pencil(
                &cloud,
                &kernel,
                args.t,
                AssembleOptions {
                    graph_mode: args.graph_mode,
                    jitter: args.jitter,
                },
            )?;
            if !pencil.disconnected.is_empty() {
                eprintln!(
                    "warning: disconnected at this bandwidth ({} isolated rows)",
                    pencil.disconnected.len()
                );
            }
            let band = spectral_shift_check(&pencil)?;
            if !band.flagged.is_empty() {
                eprintln!(
                    "warning: kernel mass below 10% of median at {} points",
                    band.flagged.len()
                );
            }
            io::write_pencil(&pencil, &args.input.to_string_lossy(), &args.output)?;
            println!(
                "wrote pencil (n = {}, nnz = {}) to {}",
                pencil.a.n(),
                pencil.a.nnz(),
                args.output.display()
            );
            Ok(())
        }
        Command::Eigs(args) => {
            let (pencil, _cloud) = io::read_pencil(&args.input)?;
            let opts = SolveOptions {
                use_lanczos: args.lanczos,
                dense_cap: 4000,
                deflate_constant: args.deflate_constant,
                lanczos: LanczosOptions {
                    max_iter: args.max_iter,
                    tol: args.tol,
                    seed: 7,
                },
            };
            let spectrum = solve_pencil(&pencil, args.modes, &opts)?;
            let vectors_path = match &args.vectors {
                Some(p) => {
                    io::write_vectors_csv(&spectrum.vectors, p)?;
                    Some(p.to_string_lossy().into_owned())
                }
                None => None,
            };
            let header: io::PencilHeader = serde_json::from_str(&std::fs::read_to_string(
                args.input.join("header.json"),
            )?)?;
            let file = io::SpectrumFile {
                n: pencil.a.n(),
                t: pencil.t,
                kernel: pencil.kernel,
                graph_mode: pencil.graph_mode,
                mu: spectrum.mu.clone(),
                residuals: spectrum.residual_norms.clone(),
                solver: if args.lanczos || pencil.a.n() > 4000 {
                    "lanczos".into()
                } else {
                    "dense".into()
                },
                cloud: header.cloud,
                vectors: vectors_path,
            };
            io::write_spectrum_json(&file, &args.output)?;
            println!(
                "mu[0..{}] = {:?}",
                spectrum.mu.len().min(8),
                &spectrum.mu[..spectrum.mu.len().min(8)]
            );
            println!("wrote spectrum to {}", args.output.display());
            Ok(())
        }
        Command::Poisson(args) => {
            let (pencil, _cloud) = io::read_pencil(&args.input)?;
            let f = io::read_column_csv(&args.f_samples)?;
            let sol = poisson_solve(
                &pencil,
                &f,
                &PoissonOptions {
                    method: if args.cg {
                        PoissonMethod::ConjugateGradient
                    } else {
                        PoissonMethod::Direct
                    },
                    tol: args.tol,
                },
            )?;
            io::write_column_csv("u", &sol.u, &args.output)?;
            println!(
                "solved (residual {:.3e}{}) -> {}",
                sol.residual,
                sol.iterations
                    .map(|i| format!(", {i} cg iterations"))
                    .unwrap_or_default(),
                args.output.display()
            );
            Ok(())
        }
        Command::Extend(args) => {
            let spec_file = io::read_spectrum_json(&args.input)?;
            let base = args.input.parent().unwrap_or_else(|| Path::new("."));
            let vectors_path = spec_file.vectors.as_ref().ok_or_else(|| {
                Error::InvalidParameter(
                    "spectrum has no vector sidecar; rerun eigs with --vectors".into(),
                )
            })?;
            let vectors = io::read_vectors_csv(&io::resolve_stored_path(vectors_path, base))?;
            if args.mode >= vectors.ncols() {
                return Err(Error::InvalidParameter(format!(
                    "mode {} beyond the {} stored modes",
                    args.mode,
                    vectors.ncols()
                )));
            }
            let cloud = io::read_cloud_csv(&io::resolve_stored_path(&spec_file.cloud, base))?;
            // graph-mode spectra extend with the weights that built them
            let cloud = if spec_file.graph_mode {
                let n = cloud.n();
                PointCloud::from_parts(
                    cloud.points().clone(),
                    Array1::from_elem(n, 1.0 / n as f64),
                    cloud.intrinsic_dim(),
                    cloud.boundary().to_vec(),
                    cloud.manifold().copied(),
                )?
            } else {
                cloud
            };
            let kernel = spec_file.kernel.spec();
            let eval = FieldEvaluator::new(&cloud, &kernel, spec_file.t)?;
            let u = vectors.column(args.mode).to_owned();
            let mu = spec_file.mu[args.mode];
            let pts = io::read_points_csv(&args.at)?;
            let mut values = Array1::zeros(pts.nrows());
            for i in 0..pts.nrows() {
                values[i] = eval.extend(&u, mu, pts.row(i).as_slice().unwrap())?;
            }
            io::write_column_csv("value", &values, &args.output)?;
            println!(
                "extended mode {} at {} points -> {}",
                args.mode,
                pts.nrows(),
                args.output.display()
            );
            Ok(())
        }
        Command::Converge(args) => {
            let params = parse_params(&args.params)?;
            let manifold = Manifold::from_params(&args.manifold, &params)?;
            let rule = parse_t_rule(&args.t_rule, args.c, args.t)?;
            let mut config = LadderConfig::new(manifold, args.n.clone(), rule, args.modes);
            config.kernel = KernelFamily::parse(&args.kernel)?;
            config.graph_mode = args.graph_mode;
            config.mass_jitter = args.jitter;
            if args.jitter_frac != 0.0 || args.warp != 0.0 {
                config.nonuniform = Some(NonuniformOptions {
                    jitter_frac: args.jitter_frac,
                    warp: args.warp,
                    seed: args.seed,
                });
            }
            config.solver.use_lanczos = args.lanczos;
            config.solver.lanczos.tol = args.tol;
            config.residual_norm = if args.h1_residual {
                ResidualNorm::Stiffness
            } else {
                ResidualNorm::Mass
            };
            let report = run_ladder(&config)?;
            let summary = io::ReportSummary {
                manifold: manifold.tag().into(),
                params: manifold
                    .params()
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect(),
                kernel: config.kernel,
                t_rule: args.t_rule.clone(),
                modes: args.modes,
                graph_mode: args.graph_mode,
                fitted_rates: report.fitted_rates.clone(),
                levels: report
                    .rows
                    .iter()
                    .map(|r| io::ReportLevelSummary {
                        n: r.n,
                        h: r.h,
                        t: r.t,
                        wall_ms: r.wall_ms,
                        warnings: r.warnings.clone(),
                        error: r.error.clone(),
                    })
                    .collect(),
                report_csv: "report.csv".into(),
            };
            io::write_report(&report, &summary, &args.output)?;
            for row in &report.rows {
                match &row.error {
                    Some(e) => println!("n = {:5}: FAILED ({e})", row.n),
                    None => {
                        let worst = row
                            .modes
                            .iter()
                            .skip(1)
                            .map(|m| m.rel_error)
                            .fold(0.0, f64::max);
                        println!(
                            "n = {:5}: h = {:.4e}, t = {:.4e}, worst rel err = {:.3e}",
                            row.n, row.h, row.t, worst
                        );
                    }
                }
            }
            for rate in &report.fitted_rates {
                println!("mode {}: fitted rate {:.3}", rate.mode, rate.slope);
            }
            println!(
                "wrote {} and {}",
                args.output.join("report.csv").display(),
                args.output.join("summary.json").display()
            );
            Ok(())
        }
        Command::Quadcheck(args) => {
            let params = parse_params(&args.params)?;
            let manifold = Manifold::from_params(&args.manifold, &params)?;
            let cloud = manifold.sample(args.n)?;
            let rows = quadrature_check(&cloud)?;
            println!("{:<20} {:>24} {:>24} {:>12}", "function", "exact", "computed", "abs_error");
            for row in &rows {
                println!(
                    "{:<20} {:>24.16e} {:>24.16e} {:>12.3e}",
                    row.name, row.exact, row.computed, row.abs_error
                );
            }
            if let Some(out) = &args.output {
                let mut csv = String::from("function,exact,computed,abs_error\n");
                for row in &rows {
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        row.name,
                        io::format_f64(row.exact),
                        io::format_f64(row.computed),
                        io::format_f64(row.abs_error)
                    ));
                }
                io::atomic_write(out, &csv)?;
                println!("wrote {}", out.display());
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_rule_parsing() {
        assert_eq!(
            parse_t_rule("fixed", None, Some(0.01)).unwrap(),
            BandwidthRule::Fixed { t: 0.01 }
        );
        assert_eq!(
            parse_t_rule("c*h^0.5", Some(0.01), None).unwrap(),
            BandwidthRule::PowerOfFill {
                c: 0.01,
                gamma: 0.5
            }
        );
        assert!(parse_t_rule("c*h^0.5", None, None).is_err());
        assert!(parse_t_rule("fixed", Some(0.01), None).is_err());
        assert!(parse_t_rule("h^2", Some(1.0), Some(1.0)).is_err());
    }

    #[test]
    fn param_parsing() {
        let p = parse_params(&["L=3.5".into(), "radius=2".into()]).unwrap();
        assert_eq!(p["L"], 3.5);
        assert!(parse_params(&["L".into()]).is_err());
        assert!(parse_params(&["L=abc".into()]).is_err());
    }
}
