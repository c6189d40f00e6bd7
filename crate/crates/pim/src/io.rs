//! Stable text formats: cloud CSV, pencil triplet files with a JSON header,
//! spectrum JSON with optional vector sidecar, and report CSV.
//!
//! Floats are written with 17 significant digits so every f64 round-trips
//! exactly; writers are deterministic, so write → read → write is
//! byte-identical. Outputs land atomically (temp file + rename).

use crate::assembly::PimPencil;
use crate::cloud::{Manifold, PointCloud};
use crate::convergence::{ConvergenceReport, FittedRate};
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::linalg::CsrMatrix;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// 17-significant-digit decimal form; parses back to the identical f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, path: &Path, kind: &'static str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::FileFormat {
        kind,
        path: path.display().to_string(),
        detail: format!("expected a float, found '{s}'"),
    })
}

/// Write `content` to `path` atomically (same-directory temp + rename).
pub fn atomic_write(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir)?;
    }
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into()),
        std::process::id()
    ));
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// cloud CSV

/// Cloud CSV: one `#` metadata line (intrinsic dimension, fill distance,
/// manifold tag and parameters), a header `x1,..,xd,V,boundary`, then one
/// row per point.
pub fn write_cloud_csv(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# intrinsic_dim={} h={}",
        cloud.intrinsic_dim(),
        format_f64(cloud.h_estimate())
    ));
    if let Some(m) = cloud.manifold() {
        out.push_str(&format!(" manifold={}", m.tag()));
        for (k, v) in m.params() {
            out.push_str(&format!(" {k}={}", format_f64(v)));
        }
    }
    out.push('\n');
    let d = cloud.ambient_dim();
    for c in 0..d {
        out.push_str(&format!("x{},", c + 1));
    }
    out.push_str("V,boundary\n");
    for i in 0..cloud.n() {
        for c in 0..d {
            out.push_str(&format_f64(cloud.points()[[i, c]]));
            out.push(',');
        }
        out.push_str(&format_f64(cloud.weights()[i]));
        out.push(',');
        out.push_str(if cloud.boundary()[i] { "1" } else { "0" });
        out.push('\n');
    }
    atomic_write(path, &out)
}

pub fn read_cloud_csv(path: &Path) -> Result<PointCloud> {
    let kind = "cloud csv";
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().peekable();
    let mut intrinsic_dim = None;
    let mut manifold_tag: Option<String> = None;
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    while let Some(line) = lines.peek() {
        if !line.starts_with('#') {
            break;
        }
        for token in line.trim_start_matches('#').split_whitespace() {
            if let Some((key, value)) = token.split_once('=') {
                match key {
                    "intrinsic_dim" => {
                        intrinsic_dim = Some(value.parse::<usize>().map_err(|_| {
                            Error::FileFormat {
                                kind,
                                path: path.display().to_string(),
                                detail: format!("bad intrinsic_dim '{value}'"),
                            }
                        })?)
                    }
                    "manifold" => manifold_tag = Some(value.to_string()),
                    "h" => {} // informational; recomputed from the points
                    other => {
                        params.insert(other.to_string(), parse_f64(value, path, kind)?);
                    }
                }
            }
        }
        lines.next();
    }
    let header = lines.next().ok_or_else(|| Error::FileFormat {
        kind,
        path: path.display().to_string(),
        detail: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.iter().filter(|c| c.starts_with('x')).count();
    if d == 0 || cols.len() != d + 2 || cols[d] != "V" || cols[d + 1] != "boundary" {
        return Err(Error::FileFormat {
            kind,
            path: path.display().to_string(),
            detail: format!("unexpected header '{header}'"),
        });
    }
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::FileFormat {
                kind,
                path: path.display().to_string(),
                detail: format!("row has {} fields, expected {}", fields.len(), d + 2),
            });
        }
        let mut coords = Vec::with_capacity(d);
        for f in &fields[..d] {
            coords.push(parse_f64(f, path, kind)?);
        }
        let w = parse_f64(fields[d], path, kind)?;
        let b = match fields[d + 1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::FileFormat {
                    kind,
                    path: path.display().to_string(),
                    detail: format!("boundary flag '{other}' is not 0/1"),
                })
            }
        };
        rows.push((coords, w, b));
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::FileFormat {
            kind,
            path: path.display().to_string(),
            detail: "no data rows".into(),
        });
    }
    let mut points = Array2::zeros((n, d));
    let mut weights = Array1::zeros(n);
    let mut boundary = Vec::with_capacity(n);
    for (i, (coords, w, b)) in rows.into_iter().enumerate() {
        for (c, v) in coords.into_iter().enumerate() {
            points[[i, c]] = v;
        }
        weights[i] = w;
        boundary.push(b);
    }
    let manifold = match manifold_tag {
        Some(tag) => Some(Manifold::from_params(&tag, &params)?),
        None => None,
    };
    let k = intrinsic_dim.unwrap_or(d);
    PointCloud::from_parts(points, weights, k, boundary, manifold)
}

// ---------------------------------------------------------------------------
// pencil directory

#[derive(Debug, Serialize, Deserialize)]
pub struct PencilHeader {
    pub n: usize,
    pub t: f64,
    pub kernel: KernelFamily,
    pub graph_mode: bool,
    pub intrinsic_dim: usize,
    /// Path of the cloud the pencil was assembled from, as given to the CLI.
    pub cloud: String,
}

fn write_coo(matrix: &CsrMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, j, v) in matrix.triplets() {
        out.push_str(&format!("{i} {j} {}\n", format_f64(v)));
    }
    atomic_write(path, &out)
}

fn read_coo(path: &Path, n: usize) -> Result<CsrMatrix> {
    let kind = "pencil coo";
    let text = fs::read_to_string(path)?;
    let mut triplets = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (i, j, v) = (it.next(), it.next(), it.next());
        match (i, j, v) {
            (Some(i), Some(j), Some(v)) => {
                let i = i.parse::<usize>().map_err(|_| Error::FileFormat {
                    kind,
                    path: path.display().to_string(),
                    detail: format!("bad row index '{i}'"),
                })?;
                let j = j.parse::<usize>().map_err(|_| Error::FileFormat {
                    kind,
                    path: path.display().to_string(),
                    detail: format!("bad col index '{j}'"),
                })?;
                triplets.push((i, j, parse_f64(v, path, kind)?));
            }
            _ => {
                return Err(Error::FileFormat {
                    kind,
                    path: path.display().to_string(),
                    detail: format!("expected 'row col value', found '{line}'"),
                })
            }
        }
    }
    CsrMatrix::from_triplets(n, &triplets)
}

/// Write `header.json`, `A.coo`, `B.coo` into `dir`.
pub fn write_pencil(pencil: &PimPencil, cloud_path: &str, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = PencilHeader {
        n: pencil.a.n(),
        t: pencil.t,
        kernel: pencil.kernel,
        graph_mode: pencil.graph_mode,
        intrinsic_dim: pencil.intrinsic_dim,
        cloud: cloud_path.to_string(),
    };
    atomic_write(
        &dir.join("header.json"),
        &serde_json::to_string_pretty(&header)?,
    )?;
    write_coo(&pencil.a, &dir.join("A.coo"))?;
    write_coo(&pencil.b, &dir.join("B.coo"))?;
    Ok(())
}

/// Load a pencil directory together with its cloud (weights come from the
/// cloud file, or 1/n in graph mode).
pub fn read_pencil(dir: &Path) -> Result<(PimPencil, PointCloud)> {
    let header_path = dir.join("header.json");
    let header: PencilHeader = serde_json::from_str(&fs::read_to_string(&header_path)?)?;
    let cloud_path = resolve_stored_path(&header.cloud, dir);
    let cloud = read_cloud_csv(&cloud_path)?;
    if cloud.n() != header.n {
        return Err(Error::FileFormat {
            kind: "pencil header",
            path: header_path.display().to_string(),
            detail: format!("header n={} but cloud has {} points", header.n, cloud.n()),
        });
    }
    let a = read_coo(&dir.join("A.coo"), header.n)?;
    let b = read_coo(&dir.join("B.coo"), header.n)?;
    let weights = if header.graph_mode {
        Array1::from_elem(header.n, 1.0 / header.n as f64)
    } else {
        cloud.weights().to_owned()
    };
    let disconnected = (0..header.n)
        .filter(|&i| a.row(i).all(|(j, _)| j == i))
        .collect();
    Ok((
        PimPencil {
            a,
            b,
            t: header.t,
            kernel: header.kernel,
            graph_mode: header.graph_mode,
            weights,
            intrinsic_dim: header.intrinsic_dim,
            disconnected,
        },
        cloud,
    ))
}

/// Resolve a path stored in a header: absolute or cwd-relative as given,
/// falling back to sibling-of-the-header layout.
pub fn resolve_stored_path(stored: &str, dir: &Path) -> PathBuf {
    let p = PathBuf::from(stored);
    if p.exists() || p.is_absolute() {
        return p;
    }
    let sibling = dir.join(stored);
    if sibling.exists() {
        sibling
    } else {
        p
    }
}

// ---------------------------------------------------------------------------
// spectrum JSON + vector sidecar

#[derive(Debug, Serialize, Deserialize)]
pub struct SpectrumFile {
    pub n: usize,
    pub t: f64,
    pub kernel: KernelFamily,
    pub graph_mode: bool,
    pub mu: Vec<f64>,
    pub residuals: Vec<f64>,
    pub solver: String,
    /// Cloud path, carried over from the pencil header.
    pub cloud: String,
    /// Vector sidecar CSV (one column per mode), when written.
    pub vectors: Option<String>,
}

pub fn write_spectrum_json(file: &SpectrumFile, path: &Path) -> Result<()> {
    atomic_write(path, &serde_json::to_string_pretty(file)?)
}

pub fn read_spectrum_json(path: &Path) -> Result<SpectrumFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_vectors_csv(vectors: &Array2<f64>, path: &Path) -> Result<()> {
    let (n, m) = vectors.dim();
    let mut out = String::new();
    let header: Vec<String> = (0..m).map(|j| format!("mode_{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..n {
        let row: Vec<String> = (0..m).map(|j| format_f64(vectors[[i, j]])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, &out)
}

pub fn read_vectors_csv(path: &Path) -> Result<Array2<f64>> {
    let kind = "vectors csv";
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::FileFormat {
        kind,
        path: path.display().to_string(),
        detail: "empty file".into(),
    })?;
    let m = header.split(',').count();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| parse_f64(f, path, kind))
            .collect::<Result<_>>()?;
        if vals.len() != m {
            return Err(Error::FileFormat {
                kind,
                path: path.display().to_string(),
                detail: format!("row has {} fields, expected {m}", vals.len()),
            });
        }
        rows.push(vals);
    }
    let n = rows.len();
    let mut out = Array2::zeros((n, m));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Single-column CSV with a named header.
pub fn write_column_csv(name: &str, values: &Array1<f64>, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 26 + 8);
    out.push_str(name);
    out.push('\n');
    for v in values.iter() {
        out.push_str(&format_f64(*v));
        out.push('\n');
    }
    atomic_write(path, &out)
}

/// Read a single-column CSV; a non-numeric first line is treated as header.
pub fn read_column_csv(path: &Path) -> Result<Array1<f64>> {
    let kind = "column csv";
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue, // header
            Err(_) => {
                return Err(Error::FileFormat {
                    kind,
                    path: path.display().to_string(),
                    detail: format!("expected a float, found '{line}'"),
                })
            }
        }
    }
    if values.is_empty() {
        return Err(Error::FileFormat {
            kind,
            path: path.display().to_string(),
            detail: "no values".into(),
        });
    }
    Ok(Array1::from_vec(values))
}

/// Read evaluation points: uses the columns named x1..xd of a headed CSV, so
/// a full cloud CSV works as input too. Comment lines are skipped.
pub fn read_points_csv(path: &Path) -> Result<Array2<f64>> {
    let kind = "points csv";
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::FileFormat {
        kind,
        path: path.display().to_string(),
        detail: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let coord_cols: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with('x'))
        .map(|(i, _)| i)
        .collect();
    if coord_cols.is_empty() {
        return Err(Error::FileFormat {
            kind,
            path: path.display().to_string(),
            detail: "no coordinate columns x1..xd in header".into(),
        });
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let mut coords = Vec::with_capacity(coord_cols.len());
        for &c in &coord_cols {
            let f = fields.get(c).ok_or_else(|| Error::FileFormat {
                kind,
                path: path.display().to_string(),
                detail: "short row".into(),
            })?;
            coords.push(parse_f64(f, path, kind)?);
        }
        rows.push(coords);
    }
    let n = rows.len();
    let d = coord_cols.len();
    let mut out = Array2::zeros((n, d));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// convergence report

/// Deterministic CSV of a ladder report, one row per (level, mode).
/// Wall-clock times deliberately stay out of this file (they live in the
/// JSON summary) so identical configurations give byte-identical reports.
pub fn report_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from(
        "level,n,h,t,mode,mu_computed,mu_exact,abs_error,rel_error,cluster,cluster_residual\n",
    );
    for (level, row) in report.rows.iter().enumerate() {
        if row.error.is_some() {
            continue;
        }
        for entry in &row.modes {
            let cres = row
                .cluster_residuals
                .get(entry.cluster)
                .copied()
                .flatten()
                .map(format_f64)
                .unwrap_or_default();
            out.push_str(&format!(
                "{level},{},{},{},{},{},{},{},{},{},{cres}\n",
                row.n,
                format_f64(row.h),
                format_f64(row.t),
                entry.mode,
                format_f64(entry.computed),
                format_f64(entry.exact),
                format_f64(entry.abs_error),
                format_f64(entry.rel_error),
                entry.cluster,
            ));
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportLevelSummary {
    pub n: usize,
    pub h: f64,
    pub t: f64,
    pub wall_ms: f64,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportSummary {
    pub manifold: String,
    pub params: BTreeMap<String, f64>,
    pub kernel: KernelFamily,
    pub t_rule: String,
    pub modes: usize,
    pub graph_mode: bool,
    pub fitted_rates: Vec<FittedRate>,
    pub levels: Vec<ReportLevelSummary>,
    pub report_csv: String,
}

pub fn write_report(
    report: &ConvergenceReport,
    summary: &ReportSummary,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    atomic_write(&dir.join("report.csv"), &report_csv(report))?;
    atomic_write(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(summary)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_pencil, AssembleOptions};
    use crate::kernels::KernelSpec;
    use std::f64::consts::PI;

    fn tmpdir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("pim-io-{}-{name}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn cloud_csv_roundtrip_is_byte_identical() {
        let dir = tmpdir("cloud");
        let cloud = Manifold::Interval { length: PI }.sample(37).unwrap();
        let p1 = dir.join("c1.csv");
        let p2 = dir.join("c2.csv");
        write_cloud_csv(&cloud, &p1).unwrap();
        let back = read_cloud_csv(&p1).unwrap();
        write_cloud_csv(&back, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(back.n(), 37);
        assert_eq!(back.intrinsic_dim(), 1);
        assert!(matches!(
            back.manifold(),
            Some(Manifold::Interval { .. })
        ));
        // exact values survive
        for i in 0..37 {
            assert_eq!(
                back.points()[[i, 0]].to_bits(),
                cloud.points()[[i, 0]].to_bits()
            );
            assert_eq!(back.weights()[i].to_bits(), cloud.weights()[i].to_bits());
        }
    }

    #[test]
    fn pencil_roundtrip_entrywise_equality() {
        let dir = tmpdir("pencil");
        let cloud = Manifold::Circle { radius: 1.0 }.sample(40).unwrap();
        let cloud_path = dir.join("cloud.csv");
        write_cloud_csv(&cloud, &cloud_path).unwrap();
        let t = 0.02;
        let pencil =
            assemble_pencil(&cloud, &KernelSpec::wendland(), t, AssembleOptions::default())
                .unwrap();
        let pdir = dir.join("pencil");
        write_pencil(&pencil, cloud_path.to_str().unwrap(), &pdir).unwrap();
        let (back, cloud_back) = read_pencil(&pdir).unwrap();
        assert_eq!(cloud_back.n(), 40);
        assert_eq!(back.t, t);
        assert_eq!(back.a, pencil.a);
        assert_eq!(back.b, pencil.b);
    }

    #[test]
    fn spectrum_json_and_vectors() {
        let dir = tmpdir("spectrum");
        let path = dir.join("spectrum.json");
        let vec_path = dir.join("vectors.csv");
        let vectors = ndarray::array![[1.0, 0.5], [0.25, -0.125], [0.1, 1e-17]];
        write_vectors_csv(&vectors, &vec_path).unwrap();
        let file = SpectrumFile {
            n: 3,
            t: 0.01,
            kernel: KernelFamily::Wendland,
            graph_mode: false,
            mu: vec![0.0, 1.0000000001],
            residuals: vec![1e-16, 1e-12],
            solver: "dense".into(),
            cloud: "cloud.csv".into(),
            vectors: Some(vec_path.to_str().unwrap().to_string()),
        };
        write_spectrum_json(&file, &path).unwrap();
        let back = read_spectrum_json(&path).unwrap();
        assert_eq!(back.mu[1].to_bits(), file.mu[1].to_bits());
        let vb = read_vectors_csv(&vec_path).unwrap();
        for (a, b) in vectors.iter().zip(vb.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn column_csv_and_points() {
        let dir = tmpdir("cols");
        let path = dir.join("f.csv");
        let vals = ndarray::array![1.5, -2.25, 3.0e-7];
        write_column_csv("f", &vals, &path).unwrap();
        let back = read_column_csv(&path).unwrap();
        for (a, b) in vals.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // a cloud csv doubles as a points file
        let cloud = Manifold::Sphere.sample(20).unwrap();
        let cpath = dir.join("cloud.csv");
        write_cloud_csv(&cloud, &cpath).unwrap();
        let pts = read_points_csv(&cpath).unwrap();
        assert_eq!(pts.dim(), (20, 3));
        assert_eq!(pts[[5, 2]].to_bits(), cloud.points()[[5, 2]].to_bits());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tmpdir("bad");
        let path = dir.join("bad.csv");
        fs::write(&path, "x1,V,boundary\n1.0,nope,0\n").unwrap();
        assert!(read_cloud_csv(&path).is_err());
        fs::write(&path, "x1,weight\n1.0,1.0\n").unwrap();
        assert!(read_cloud_csv(&path).is_err());
        let coo = dir.join("bad.coo");
        fs::write(&coo, "0 0\n").unwrap();
        assert!(read_coo(&coo, 2).is_err());
    }
}
