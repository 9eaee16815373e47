//! File formats: XYZ and ASCII PLY clouds, distance matrices, the dataset
//! manifest, and the CSV outputs of the trainer.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! written file reads back bit-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chamfer::{Point3, PointCloud};
use crate::embedopt::{DiskPoint, EmbeddingState};
use crate::error::{Error, Result};
use crate::hierdata::{HierarchyManifest, Role, SampleRecord};
use crate::hyperbolicity::DistanceMatrix;
use crate::losses::LossReport;

pub const LOSS_CSV_HEADER: &str = "epoch,l_z,l_t,total";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_float(tok: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

/// Numeric rows of a whitespace-separated text file, skipping blank lines
/// and `#` comments. Each row carries its 1-based line number.
fn numeric_rows(text: &str, path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| parse_float(t, path, i + 1))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((i + 1, row));
    }
    Ok(rows)
}

/// Parse XYZ text: one `x y z` triple per line.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (line, row) in numeric_rows(text, path)? {
        match row.as_slice() {
            &[x, y, z] => pts.push([x, y, z]),
            _ => {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected 3 coordinates, found {}", row.len()),
                ))
            }
        }
    }
    if pts.is_empty() {
        return Err(parse_err(path, 0, "no points"));
    }
    PointCloud::new(pts)
}

/// XYZ text with optional leading `#` comment lines.
pub fn format_xyz(cloud: &PointCloud, comments: &[String]) -> String {
    let mut out = String::with_capacity(cloud.len() * 64);
    for c in comments {
        for line in c.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    out
}

pub fn write_xyz(path: &Path, cloud: &PointCloud, comments: &[String]) -> Result<()> {
    write_text(path, &format_xyz(cloud, comments))
}

/// Parse the vertex element of an ASCII PLY file. Other elements are
/// skipped with a warning.
pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    // (name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut header_done = false;
    for (i, raw) in lines.by_ref() {
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", f, ..] => {
                return Err(parse_err(path, i + 1, format!("unsupported PLY format {f}")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let n = count
                    .parse()
                    .map_err(|_| parse_err(path, i + 1, format!("bad element count {count:?}")))?;
                elements.push((name.to_string(), n, Vec::new()));
            }
            ["property", "list", ..] => {
                let (name, _, props) = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, i + 1, "property before element"))?;
                if name == "vertex" {
                    return Err(parse_err(path, i + 1, "list properties on vertices are not supported"));
                }
                props.push(toks[toks.len() - 1].to_string());
            }
            ["property", _, pname] => {
                let (_, _, props) = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, i + 1, "property before element"))?;
                props.push(pname.to_string());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(parse_err(path, i + 1, format!("unrecognized header line {raw:?}"))),
        }
    }
    if !header_done {
        return Err(parse_err(path, 0, "missing end_header"));
    }

    let mut pts: Vec<Point3> = Vec::new();
    let mut found_vertex = false;
    for (name, count, props) in &elements {
        if name != "vertex" {
            log::warn!("{}: skipping PLY element {name:?} ({count} rows)", path.display());
            for _ in 0..*count {
                if lines.next().is_none() {
                    return Err(parse_err(path, 0, format!("truncated {name} element")));
                }
            }
            continue;
        }
        found_vertex = true;
        let col = |axis: &str| {
            props
                .iter()
                .position(|p| p == axis)
                .ok_or_else(|| parse_err(path, 0, format!("vertex element lacks property {axis}")))
        };
        let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
        for _ in 0..*count {
            let (i, raw) = lines
                .next()
                .ok_or_else(|| parse_err(path, 0, "truncated vertex element"))?;
            let vals = raw
                .split_whitespace()
                .map(|t| parse_float(t, path, i + 1))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != props.len() {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected {} values, found {}", props.len(), vals.len()),
                ));
            }
            pts.push([vals[cx], vals[cy], vals[cz]]);
        }
    }
    if !found_vertex || pts.is_empty() {
        return Err(parse_err(path, 0, "no vertices"));
    }
    PointCloud::new(pts)
}

/// Read a cloud, choosing the parser by extension (`.ply`, else XYZ).
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => parse_ply(&text, path),
        _ => parse_xyz(&text, path),
    }
}

/// Read a square distance matrix, one whitespace-separated row per line.
pub fn read_distance_matrix(path: &Path) -> Result<DistanceMatrix> {
    let text = read_text(path)?;
    let rows = numeric_rows(&text, path)?;
    let n = rows.len();
    if let Some((line, r)) = rows.iter().find(|(_, r)| r.len() != n) {
        return Err(parse_err(
            path,
            *line,
            format!("expected {n} entries per row, found {}", r.len()),
        ));
    }
    DistanceMatrix::from_rows(rows.into_iter().map(|(_, r)| r).collect())
}

/// Read generic points: an embedding CSV (coordinate columns `c0..`) or
/// any whitespace-separated numeric table with a fixed column count.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    if text.starts_with("id,") {
        return parse_embedding_csv(&text, path);
    }
    let rows = numeric_rows(&text, path)?;
    let dim = rows.first().map_or(0, |(_, r)| r.len());
    if let Some((line, r)) = rows.iter().find(|(_, r)| r.len() != dim) {
        return Err(parse_err(path, *line, format!("expected {dim} columns, found {}", r.len())));
    }
    if dim == 0 {
        return Err(parse_err(path, 0, "no points"));
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

fn parse_embedding_csv(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let coord_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.len() > 1 && h.starts_with('c') && h[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    if coord_cols.is_empty() {
        return Err(parse_err(path, 1, "no coordinate columns c0.. in header"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(
            coord_cols
                .iter()
                .map(|&c| parse_float(rec.get(c).unwrap_or(""), path, line))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    pub role: Role,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    /// Relative to the manifest's directory.
    pub cloud_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub seed: u64,
    pub categories: Vec<String>,
    pub samples: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// Write every cloud as `clouds/<id>.xyz` plus `manifest.json` into `dir`.
pub fn write_dataset(
    manifest: &HierarchyManifest,
    dir: &Path,
    config: Option<serde_json::Value>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("clouds")).map_err(|e| Error::io(dir, e))?;
    let header: Vec<String> = config
        .as_ref()
        .map(|c| vec![format!("config {c}")])
        .unwrap_or_default();
    let mut entries = Vec::with_capacity(manifest.len());
    for s in manifest.samples() {
        let rel = format!("clouds/{}.xyz", s.id);
        let mut comments = vec![format!("{} {} {:?}", s.id, s.category, s.role).to_lowercase()];
        comments.extend(header.iter().cloned());
        write_xyz(&dir.join(&rel), &s.cloud, &comments)?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            category: s.category.clone(),
            role: s.role,
            n_points: s.n_points,
            parent_id: s.parent_id.clone(),
            cloud_path: rel,
        });
    }
    let file = ManifestFile {
        seed: manifest.seed(),
        categories: manifest.categories().to_vec(),
        samples: entries,
        config,
    };
    let path = dir.join("manifest.json");
    write_text(&path, &(serde_json::to_string_pretty(&file)? + "\n"))?;
    Ok(path)
}

/// Load and validate a manifest together with all referenced clouds.
pub fn load_manifest(path: &Path) -> Result<HierarchyManifest> {
    let text = read_text(path)?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let samples = file
        .samples
        .into_iter()
        .map(|e| {
            Ok(SampleRecord {
                cloud: read_cloud(&base.join(&e.cloud_path))?,
                id: e.id,
                category: e.category,
                role: e.role,
                n_points: e.n_points,
                parent_id: e.parent_id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    HierarchyManifest::new(samples, file.categories, file.seed)
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

fn finish_csv(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Loss curve, one row per epoch starting at 1.
pub fn format_loss_csv(losses: &[LossReport]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(LOSS_CSV_HEADER.split(',')).map_err(csv_err)?;
    for (i, r) in losses.iter().enumerate() {
        wtr.write_record([
            (i + 1).to_string(),
            r.l_z.to_string(),
            r.l_t.to_string(),
            r.total.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(wtr)
}

fn role_str(role: Role) -> &'static str {
    match role {
        Role::Part => "part",
        Role::Whole => "whole",
    }
}

/// One row per sample with its hyperbolic norm and ball coordinates.
pub fn format_embedding_csv(state: &EmbeddingState, manifest: &HierarchyManifest) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["id", "category", "role", "n_points", "hnorm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..state.dim()).map(|i| format!("c{i}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for (i, s) in manifest.samples().iter().enumerate() {
        let mut row = vec![
            s.id.clone(),
            s.category.clone(),
            role_str(s.role).to_string(),
            s.n_points.to_string(),
            state.hyperbolic_norm(i).to_string(),
        ];
        row.extend(state.ball_coords(i).iter().map(f64::to_string));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    finish_csv(wtr)
}

pub fn format_disk_csv(points: &[DiskPoint]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["id", "category", "role", "n_points", "hnorm", "x", "y", "radius"])
        .map_err(csv_err)?;
    for p in points {
        wtr.write_record([
            p.id.clone(),
            p.category.clone(),
            role_str(p.role).to_string(),
            p.n_points.to_string(),
            p.hnorm.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.radius.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(wtr)
}
