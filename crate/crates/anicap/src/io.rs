//! File formats: OFF and OBJ meshes, JSON state dumps, CSV tables and
//! coordinate-format matrices.
//!
//! Meshes are ASCII, positions plus triangles. Boundary flags are never
//! stored; they are recomputed on import, and boundary heights within
//! `1e-12` of the wall are snapped onto it. OFF files may carry `# key: value`
//! comment lines after the header, which are returned as metadata.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anicap_core::linalg::SymSparse;
use anicap_core::state::GeometricState;
use anicap_core::{CapillaryMesh, Vec3, VertexKind};
use serde::Serialize;

/// `# key: value` comment lines of a mesh file.
pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Mesh { path: PathBuf, source: anicap_core::Error },
    #[error("{path}: unsupported mesh extension (expected .off or .obj)")]
    Extension { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
            Some("off") => Ok(MeshFormat::Off),
            Some("obj") => Ok(MeshFormat::Obj),
            _ => Err(IoError::Extension { path: path.to_path_buf() }),
        }
    }
}

/// Plain vertex and triangle lists as read from a file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub metadata: Metadata,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn parse_floats<'a>(path: &Path, line: usize, toks: impl Iterator<Item = &'a str>) -> Result<Vec<f64>, IoError> {
    toks.map(|t| {
        t.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| parse_err(path, line, format!("bad coordinate {t:?}")))
    })
    .collect()
}

fn metadata_line(meta: &mut Metadata, text: &str) {
    if let Some((k, v)) = text.trim_start_matches('#').split_once(':') {
        let k = k.trim();
        if !k.is_empty() && !k.contains(char::is_whitespace) {
            meta.insert(k.to_string(), v.trim().to_string());
        }
    }
}

/// Parse OFF text. `path` is only used in error messages.
pub fn parse_off(text: &str, path: &Path) -> Result<RawMesh, IoError> {
    let mut raw = RawMesh::default();
    // Data tokens with their line numbers, comments stripped.
    let mut toks: Vec<(usize, &str)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (data, comment) = match line.find('#') {
            Some(p) => (&line[..p], Some(&line[p..])),
            None => (line, None),
        };
        if let Some(c) = comment {
            metadata_line(&mut raw.metadata, c);
        }
        toks.extend(data.split_whitespace().map(|t| (i + 1, t)));
    }
    let mut it = toks.into_iter();
    match it.next() {
        Some((_, "OFF")) => {}
        Some((l, t)) => return Err(parse_err(path, l, format!("expected OFF header, found {t:?}"))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut count = |what: &str| -> Result<usize, IoError> {
        let (l, t) = it.next().ok_or_else(|| parse_err(path, 0, format!("missing {what}")))?;
        t.parse::<usize>().map_err(|_| parse_err(path, l, format!("bad {what} {t:?}")))
    };
    let nv = count("vertex count")?;
    let nf = count("face count")?;
    let _ne = count("edge count")?;
    let mut it = it.peekable();
    for _ in 0..nv {
        let chunk: Vec<(usize, &str)> = it.by_ref().take(3).collect();
        if chunk.len() < 3 {
            return Err(parse_err(path, 0, "truncated vertex list"));
        }
        let c = parse_floats(path, chunk[0].0, chunk.iter().map(|t| t.1))?;
        raw.vertices.push(Vec3::new(c[0], c[1], c[2]));
    }
    for _ in 0..nf {
        let (l, t) = it.next().ok_or_else(|| parse_err(path, 0, "truncated face list"))?;
        if t != "3" {
            return Err(parse_err(path, l, format!("only triangles are supported, found a face of size {t}")));
        }
        let mut tri = [0usize; 3];
        for slot in &mut tri {
            let (l, t) = it.next().ok_or_else(|| parse_err(path, l, "truncated face"))?;
            *slot = t.parse::<usize>().map_err(|_| parse_err(path, l, format!("bad index {t:?}")))?;
        }
        raw.triangles.push(tri);
        // Face colors may follow the indices on the same line.
        while it.peek().is_some_and(|n| n.0 == l) {
            it.next();
        }
    }
    if let Some((l, t)) = it.next() {
        return Err(parse_err(path, l, format!("unexpected trailing data {t:?}")));
    }
    Ok(raw)
}

/// Parse OBJ text: `v` and `f` records; texture and normal indices in faces
/// are ignored, negative indices count from the end.
pub fn parse_obj(text: &str, path: &Path) -> Result<RawMesh, IoError> {
    let mut raw = RawMesh::default();
    for (i, line) in text.lines().enumerate() {
        let l = i + 1;
        let line = line.trim();
        if line.starts_with('#') {
            metadata_line(&mut raw.metadata, line);
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c = parse_floats(path, l, toks.take(3))?;
                if c.len() < 3 {
                    return Err(parse_err(path, l, "vertex needs three coordinates"));
                }
                raw.vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = toks
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let k: i64 = first.parse().map_err(|_| parse_err(path, l, format!("bad index {t:?}")))?;
                        let n = raw.vertices.len() as i64;
                        let k = if k < 0 { n + k } else { k - 1 };
                        if k < 0 || k >= n {
                            return Err(parse_err(path, l, format!("index {t} out of range")));
                        }
                        Ok(k as usize)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(parse_err(path, l, format!("only triangles are supported, found a face of size {}", idx.len())));
                }
                raw.triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok(raw)
}

pub fn read_raw(path: &Path) -> Result<RawMesh, IoError> {
    let format = MeshFormat::from_path(path)?;
    let text = fs::read_to_string(path).map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    match format {
        MeshFormat::Off => parse_off(&text, path),
        MeshFormat::Obj => parse_obj(&text, path),
    }
}

/// Read and validate a mesh, returning it with the file's metadata.
pub fn read_mesh(path: &Path) -> Result<(CapillaryMesh, Metadata), IoError> {
    let raw = read_raw(path)?;
    let mesh = CapillaryMesh::new(raw.vertices, raw.triangles)
        .map_err(|source| IoError::Mesh { path: path.to_path_buf(), source })?;
    Ok((mesh, raw.metadata))
}

/// OFF text with the metadata as `# key: value` lines after the header.
pub fn off_string(mesh: &CapillaryMesh, meta: &Metadata) -> String {
    let mut s = String::from("OFF\n");
    for (k, v) in meta {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str(&format!("{} {} 0\n", mesh.num_vertices(), mesh.num_faces()));
    for p in mesh.vertices() {
        s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    for t in mesh.triangles() {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    s
}

pub fn obj_string(mesh: &CapillaryMesh, meta: &Metadata) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    for p in mesh.vertices() {
        s.push_str(&format!("v {} {} {}\n", p.x, p.y, p.z));
    }
    for t in mesh.triangles() {
        s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    s
}

/// Write a mesh in the format given by the extension of `path`.
pub fn write_mesh(path: &Path, mesh: &CapillaryMesh, meta: &Metadata) -> Result<(), IoError> {
    let text = match MeshFormat::from_path(path)? {
        MeshFormat::Off => off_string(mesh, meta),
        MeshFormat::Obj => obj_string(mesh, meta),
    };
    write_text(path, &text)
}

fn create_parent(path: &Path) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Write { path: dir.to_path_buf(), source })?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    create_parent(path)?;
    fs::write(path, text).map_err(|source| IoError::Write { path: path.to_path_buf(), source })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    write_text(path, &s)
}

/// Write CSV rows with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    write_text(path, &csv_string(rows))
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("CSV row");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("UTF-8 CSV")
}

/// `(row, col, value)` entries of a sparse matrix.
pub type Triplets = Vec<(usize, usize, f64)>;

/// Coordinate format: a `# rows nnz` comment, then one `row col value` line
/// per stored entry (both triangles of the symmetric matrix).
pub fn write_triplets(path: &Path, m: &SymSparse) -> Result<(), IoError> {
    create_parent(path)?;
    let f = fs::File::create(path).map_err(|source| IoError::Write { path: path.to_path_buf(), source })?;
    let mut w = BufWriter::new(f);
    let res = (|| -> io::Result<()> {
        writeln!(w, "# {} {}", m.dim(), m.nnz())?;
        for (i, j, v) in m.triplets() {
            writeln!(w, "{i} {j} {v}")?;
        }
        w.flush()
    })();
    res.map_err(|source| IoError::Write { path: path.to_path_buf(), source })
}

/// Read a coordinate-format file back as `(dim, triplets)`.
pub fn read_triplets(path: &Path) -> Result<(usize, Triplets), IoError> {
    let f = fs::File::open(path).map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    let mut dim = 0;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.first() == Some(&"#") {
            dim = toks.get(1).and_then(|t| t.parse().ok()).unwrap_or(0);
            continue;
        }
        if toks.is_empty() {
            continue;
        }
        let bad = || parse_err(path, i + 1, "expected `row col value`");
        if toks.len() != 3 {
            return Err(bad());
        }
        out.push((
            toks[0].parse().map_err(|_| bad())?,
            toks[1].parse().map_err(|_| bad())?,
            toks[2].parse().map_err(|_| bad())?,
        ));
    }
    Ok((dim, out))
}

/// Per-vertex arrays of a [`GeometricState`] plus the wall data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDump {
    pub positions: Vec<[f64; 3]>,
    pub kinds: Vec<&'static str>,
    pub normals: Vec<[f64; 3]>,
    pub anisotropic_normals: Vec<[f64; 3]>,
    pub vertex_areas: Vec<f64>,
    pub mean_curvature: Vec<f64>,
    pub anisotropic_mean_curvature: Vec<f64>,
    pub tr_hf2: Vec<f64>,
    pub f_value: Vec<f64>,
    pub boundary: BoundaryDump,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryDump {
    pub vertices: Vec<usize>,
    pub tangent: Vec<[f64; 3]>,
    pub conormal: Vec<[f64; 3]>,
    pub capillary_residual: Vec<f64>,
    pub q_f: Vec<f64>,
    pub q_f_alt: Vec<f64>,
    pub principal_residual: Vec<f64>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl StateDump {
    pub fn new(state: &GeometricState) -> Self {
        let p = &state.points;
        let b = &state.boundary;
        Self {
            positions: state.positions.iter().map(arr).collect(),
            kinds: state
                .kinds
                .iter()
                .map(|k| match k {
                    VertexKind::Interior => "interior",
                    VertexKind::Wall => "wall",
                    VertexKind::Truncation => "truncation",
                })
                .collect(),
            normals: p.iter().map(|q| arr(&q.nu)).collect(),
            anisotropic_normals: p.iter().map(|q| arr(&q.nu_f)).collect(),
            vertex_areas: state.vertex_areas.clone(),
            mean_curvature: p.iter().map(|q| q.mean).collect(),
            anisotropic_mean_curvature: p.iter().map(|q| q.hf_mean).collect(),
            tr_hf2: p.iter().map(|q| q.tr_hf2).collect(),
            f_value: p.iter().map(|q| q.f_value).collect(),
            boundary: BoundaryDump {
                vertices: b.iter().map(|g| g.vertex).collect(),
                tangent: b.iter().map(|g| arr(&g.tangent)).collect(),
                conormal: b.iter().map(|g| arr(&g.mu)).collect(),
                capillary_residual: b.iter().map(|g| g.capillary_residual).collect(),
                q_f: b.iter().map(|g| g.q_f).collect(),
                q_f_alt: b.iter().map(|g| g.q_f_alt).collect(),
                principal_residual: b.iter().map(|g| g.principal_residual).collect(),
            },
        }
    }
}
