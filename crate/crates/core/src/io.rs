//! Point cloud files (ASCII PLY, XYZ), dense matrix text files, scene
//! sidecars and JSON-lines result records.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! finite value reads back bit-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, Point, PointCloud, RigidTransform};
use crate::synth::{Scene, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Xyz,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ply") => Ok(CloudFormat::Ply),
            Some("xyz") | Some("txt") => Ok(CloudFormat::Xyz),
            _ => Err(Error::invalid(format!("unsupported cloud format: {}", path.display()))),
        }
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn parse_f64(path: &Path, line: usize, token: &str) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| parse_err(path, line, format!("not a number: {token:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {token:?}")));
    }
    Ok(v)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let format = CloudFormat::from_path(path)?;
    let text = fs::read_to_string(path)?;
    match format {
        CloudFormat::Ply => parse_ply(path, &text),
        CloudFormat::Xyz => parse_xyz(path, &text),
    }
}

pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let text = match CloudFormat::from_path(path)? {
        CloudFormat::Ply => format_ply(cloud),
        CloudFormat::Xyz => format_xyz(cloud),
    };
    fs::write(path, text)?;
    Ok(())
}

fn parse_xyz(path: &Path, text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(parse_err(path, k + 1, format!("expected 3 coordinates, found {}", tokens.len())));
        }
        let mut c = [0.0; 3];
        for (slot, t) in c.iter_mut().zip(&tokens) {
            *slot = parse_f64(path, k + 1, t)?;
        }
        points.push(Point::from(c));
    }
    Ok(PointCloud::new(points))
}

fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for p in cloud.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

const PLY_TYPES: [&str; 4] = ["float", "double", "float32", "float64"];

fn parse_ply(path: &Path, text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    let mut vertices: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut header_end = None;
    for (k, raw) in lines.by_ref() {
        let line = raw.trim();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(parse_err(path, k + 1, format!("unsupported PLY format {other:?}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                let n = n.parse().map_err(|_| parse_err(path, k + 1, format!("bad vertex count {n:?}")))?;
                vertices = Some(n);
                in_vertex = true;
            }
            ["element", name, _] => {
                return Err(parse_err(path, k + 1, format!("unsupported element {name:?}")));
            }
            ["property", ty, name] if in_vertex => {
                if !PLY_TYPES.contains(ty) {
                    return Err(parse_err(path, k + 1, format!("property {name} has unsupported type {ty}")));
                }
                props.push((*name).to_string());
            }
            ["end_header"] => {
                header_end = Some(k + 1);
                break;
            }
            _ => return Err(parse_err(path, k + 1, format!("malformed header line {line:?}"))),
        }
    }
    let header_end = header_end.ok_or_else(|| parse_err(path, text.lines().count(), "missing end_header"))?;
    let n = vertices.ok_or_else(|| parse_err(path, header_end, "missing vertex element"))?;
    let column = |name: &str| props.iter().position(|p| p == name);
    let mut xyz = [0; 3];
    for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = column(name).ok_or_else(|| parse_err(path, header_end, format!("missing property {name}")))?;
    }
    let mut feature_cols = Vec::new();
    while let Some(c) = column(&format!("f{}", feature_cols.len())) {
        feature_cols.push(c);
    }
    let overlap_col = column("overlap");

    let mut points = Vec::with_capacity(n);
    let mut features = DMatrix::zeros(n, feature_cols.len());
    let mut overlap = Vec::with_capacity(n);
    for (k, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if points.len() == n {
            return Err(parse_err(path, k + 1, format!("more than {n} vertices")));
        }
        let values: Vec<f64> = line.split_whitespace().map(|t| parse_f64(path, k + 1, t)).collect::<Result<_>>()?;
        if values.len() != props.len() {
            return Err(parse_err(path, k + 1, format!("expected {} values, found {}", props.len(), values.len())));
        }
        let row = points.len();
        points.push(Point::new(values[xyz[0]], values[xyz[1]], values[xyz[2]]));
        for (c, &col) in feature_cols.iter().enumerate() {
            features[(row, c)] = values[col];
        }
        if let Some(col) = overlap_col {
            overlap.push(values[col]);
        }
    }
    if points.len() != n {
        return Err(parse_err(path, text.lines().count(), format!("expected {n} vertices, found {}", points.len())));
    }
    let mut cloud = PointCloud::new(points);
    if !feature_cols.is_empty() {
        cloud.set_features(features)?;
    }
    if overlap_col.is_some() {
        cloud.set_overlap_scores(overlap)?;
    }
    Ok(cloud)
}

fn format_ply(cloud: &PointCloud) -> String {
    let mut out = String::new();
    let b = cloud.feature_dim().unwrap_or(0);
    let _ = writeln!(out, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len());
    for name in ["x", "y", "z"] {
        let _ = writeln!(out, "property double {name}");
    }
    for c in 0..b {
        let _ = writeln!(out, "property double f{c}");
    }
    if cloud.overlap_scores().is_some() {
        out.push_str("property double overlap\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(f) = cloud.features() {
            for c in 0..b {
                let _ = write!(out, " {}", f[(i, c)]);
            }
        }
        if let Some(o) = cloud.overlap_scores() {
            let _ = write!(out, " {}", o[i]);
        }
        out.push('\n');
    }
    out
}

/// Dense matrix text: the row count, the column count, then one
/// whitespace-separated line per row.
pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{}\n{}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut dim = |what: &str| -> Result<usize> {
        let (k, l) = lines.next().ok_or_else(|| parse_err(path, 0, format!("missing {what} count")))?;
        l.trim().parse().map_err(|_| parse_err(path, k + 1, format!("bad {what} count {l:?}")))
    };
    let (rows, cols) = (dim("row")?, dim("column")?);
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (k, l) in lines {
        let row: Vec<f64> = l.split_whitespace().map(|t| parse_f64(path, k + 1, t)).collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(parse_err(path, k + 1, format!("expected {cols} values, found {}", row.len())));
        }
        data.extend(row);
        seen += 1;
    }
    if seen != rows {
        return Err(parse_err(path, text.lines().count(), format!("expected {rows} rows, found {seen}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Ground truth and generator settings stored next to a scene's clouds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSidecar {
    pub scene_id: String,
    pub config: SceneConfig,
    pub gt: RigidTransform,
    pub gt_corr: Vec<(usize, usize)>,
    pub overlap: f64,
    pub p_file: String,
    pub q_file: String,
}

/// Writes `<id>_p.ply`, `<id>_q.ply` and `<id>.json` into `dir`; returns the
/// sidecar path.
pub fn write_scene(dir: &Path, scene_id: &str, scene: &Scene, config: &SceneConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p_file = format!("{scene_id}_p.ply");
    let q_file = format!("{scene_id}_q.ply");
    write_cloud(&scene.p, &dir.join(&p_file))?;
    write_cloud(&scene.q, &dir.join(&q_file))?;
    let sidecar = SceneSidecar {
        scene_id: scene_id.to_string(),
        config: *config,
        gt: scene.gt,
        gt_corr: scene.gt_corr.pairs().to_vec(),
        overlap: scene.overlap,
        p_file,
        q_file,
    };
    let path = dir.join(format!("{scene_id}.json"));
    fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(path)
}

pub fn read_scene(sidecar_path: &Path) -> Result<(Scene, SceneSidecar)> {
    let sidecar: SceneSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path)?)?;
    let dir = sidecar_path.parent().unwrap_or(Path::new("."));
    let p = read_cloud(&dir.join(&sidecar.p_file))?;
    let q = read_cloud(&dir.join(&sidecar.q_file))?;
    let gt = RigidTransform::new(sidecar.gt.rotation, sidecar.gt.translation)?;
    let gt_corr = CorrespondenceSet::new(sidecar.gt_corr.clone(), None, p.len(), q.len())?;
    Ok((Scene { p, q, gt, gt_corr, overlap: sidecar.overlap }, sidecar))
}

/// Scene sidecars in `dir`, sorted by file name.
pub fn list_scenes(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    out.sort();
    Ok(out)
}

/// One line of registration output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scene_id: String,
    pub rre_deg: f64,
    pub rte_m: f64,
    pub rmse_m: f64,
    pub rr: bool,
    pub n_corr: usize,
    pub runtime_ms: u64,
}

pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}
