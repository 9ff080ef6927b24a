//! Mesh-based anthropometrics: waist circumference from plane sections,
//! trunk volume between two cutting planes, mass under uniform density and
//! evaluation of a linear trunk-mass regression.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{SubjectAnthropometry, UpAxis, Vec3};

/// Triangles with a smaller area are rejected as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;
/// Section endpoints closer than this are the same point.
pub const CHAIN_TOLERANCE: f64 = 1e-9;
/// Vertices exactly on a cutting plane are treated as lying this far above it.
pub const PLANE_NUDGE: f64 = 1e-12;

/// Default trunk slab as fractions of mesh height when no pose is paired.
pub const DEFAULT_TRUNK_FRACTIONS: (f64, f64) = (0.50, 0.82);

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    up: UpAxis,
    closed: bool,
}

impl TriMesh {
    /// Validate indices, triangle areas and edge orientation.
    ///
    /// A directed edge used twice means two neighbouring triangles disagree on
    /// orientation, which is an error. The mesh is closed when every directed
    /// edge has its reverse.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, up: UpAxis) -> Result<Self> {
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(
                "mesh vertex with non-finite coordinate".into(),
            ));
        }
        let mut edges: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 3);
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::InvalidInput(format!(
                    "triangle {t} references vertex {bad} of {}",
                    vertices.len()
                )));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area < DEGENERATE_AREA {
                return Err(Error::DegenerateGeometry(format!(
                    "triangle {t} has area {area:e} m²"
                )));
            }
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                let count = edges.entry(e).or_insert(0);
                *count += 1;
                if *count > 1 {
                    return Err(Error::Orientation(e.0, e.1));
                }
            }
        }
        let closed =
            !triangles.is_empty() && edges.keys().all(|&(a, b)| edges.contains_key(&(b, a)));
        Ok(Self {
            vertices,
            triangles,
            up,
            closed,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn up_axis(&self) -> UpAxis {
        self.up
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Lowest and highest vertex height along the up axis.
    pub fn height_range(&self) -> (f64, f64) {
        self.vertices
            .iter()
            .map(|v| self.up.height(v))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| {
                (lo.min(h), hi.max(h))
            })
    }

    /// Copy with every vertex transformed by `f`.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            ..self.clone()
        }
    }

    /// Disjoint union of two meshes sharing an up axis.
    pub fn merged(&self, other: &TriMesh) -> Result<TriMesh> {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
        TriMesh::new(vertices, triangles, self.up)
    }

    fn signed_heights(&self, plane: f64) -> Vec<f64> {
        self.vertices
            .iter()
            .map(|v| {
                let s = self.up.height(v) - plane;
                if s == 0.0 {
                    PLANE_NUDGE
                } else {
                    s
                }
            })
            .collect()
    }

    /// Two unit vectors spanning the plane orthogonal to the up axis.
    fn plane_basis(&self) -> (Vec3, Vec3) {
        let mut e1 = Vec3::zeros();
        let mut e2 = Vec3::zeros();
        e1[(self.up.axis + 1) % 3] = 1.0;
        e2[(self.up.axis + 2) % 3] = 1.0;
        (e1, e2)
    }
}

/// Parse Wavefront OBJ text: `v` and `f` records, polygons fan-triangulated.
pub fn parse_obj(text: &str, path: &Path, up: UpAxis) -> Result<TriMesh> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 {
                    return Err(parse_err(lineno, "vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx = fields
                    .map(|f| {
                        let head = f.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|_| parse_err(lineno, format!("bad face index {f:?}")))?;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            -1
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(parse_err(lineno, format!("face index {i} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<usize>>>()?;
                if idx.len() < 3 {
                    return Err(parse_err(
                        lineno,
                        "face needs at least three vertices".into(),
                    ));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles, up)
}

pub fn load_obj(path: impl AsRef<Path>, up: UpAxis) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path, up)
}

/// Serialize as OBJ text with 1-based indices.
pub fn to_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in mesh.triangles() {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    out
}

/// One closed loop of a planar section.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionLoop {
    pub perimeter_m: f64,
    /// Unsigned enclosed area in the section plane.
    pub area_m2: f64,
    pub points: Vec<Vec3>,
}

fn edge_point(mesh: &TriMesh, s: &[f64], a: usize, b: usize) -> Vec3 {
    // canonical order so both triangles sharing the edge get the same bits
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
    pa + (pb - pa) * (s[a] / (s[a] - s[b]))
}

/// Merges points closer than [`CHAIN_TOLERANCE`] into shared nodes.
struct NodeIndex {
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    points: Vec<Vec3>,
}

impl NodeIndex {
    const CELL: f64 = 4.0 * CHAIN_TOLERANCE;

    fn new() -> Self {
        Self {
            cells: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn key(p: &Vec3) -> (i64, i64, i64) {
        let q = |v: f64| (v / Self::CELL).floor() as i64;
        (q(p.x), q(p.y), q(p.z))
    }

    fn insert(&mut self, p: Vec3) -> usize {
        let (kx, ky, kz) = Self::key(&p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        if let Some(&id) = ids
                            .iter()
                            .find(|&&id| (self.points[id] - p).norm() <= CHAIN_TOLERANCE)
                        {
                            return id;
                        }
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(p);
        self.cells.entry((kx, ky, kz)).or_default().push(id);
        id
    }
}

/// All closed loops where the plane at `height` cuts the mesh.
pub fn plane_sections(mesh: &TriMesh, height: f64) -> Result<Vec<SectionLoop>> {
    let s = mesh.signed_heights(height);
    let mut nodes = NodeIndex::new();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    for tri in &mesh.triangles {
        let mut ends = Vec::with_capacity(2);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if (s[a] < 0.0) != (s[b] < 0.0) {
                ends.push(edge_point(mesh, &s, a, b));
            }
        }
        if ends.len() == 2 {
            let (i, j) = (nodes.insert(ends[0]), nodes.insert(ends[1]));
            if i != j {
                segments.push((i, j));
            }
        }
    }
    if segments.is_empty() {
        return Err(Error::EmptySection(height));
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes.points.len()];
    for (k, &(i, j)) in segments.iter().enumerate() {
        adjacency[i].push(k);
        adjacency[j].push(k);
    }
    if adjacency.iter().any(|a| a.len() != 2) {
        return Err(Error::NonManifoldSection(height));
    }
    let (e1, e2) = mesh.plane_basis();
    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        let first = segments[start].0;
        let mut node = first;
        let mut seg = start;
        let mut points = Vec::new();
        loop {
            used[seg] = true;
            points.push(nodes.points[node]);
            let (a, b) = segments[seg];
            node = if a == node { b } else { a };
            if node == first {
                break;
            }
            seg = match adjacency[node].iter().find(|&&k| !used[k]) {
                Some(&k) => k,
                None => return Err(Error::NonManifoldSection(height)),
            };
        }
        let n = points.len();
        let mut perimeter = 0.0;
        let mut twice_area = 0.0;
        for k in 0..n {
            let (p, q) = (points[k], points[(k + 1) % n]);
            perimeter += (q - p).norm();
            twice_area += p.dot(&e1) * q.dot(&e2) - q.dot(&e1) * p.dot(&e2);
        }
        loops.push(SectionLoop {
            perimeter_m: perimeter,
            area_m2: 0.5 * twice_area.abs(),
            points,
        });
    }
    Ok(loops)
}

/// Perimeter of the section loop enclosing the largest area (the torso,
/// when arms cut the plane as separate loops).
pub fn plane_section_perimeter(mesh: &TriMesh, height: f64) -> Result<f64> {
    let loops = plane_sections(mesh, height)?;
    let best = loops
        .iter()
        .max_by(|a, b| a.area_m2.total_cmp(&b.area_m2))
        .expect("sections are nonempty");
    Ok(best.perimeter_m)
}

fn signed_tet(o: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (a - o).dot(&(b - o).cross(&(c - o))) / 6.0
}

/// Signed volume of the mesh interior below the plane at `plane`.
///
/// Triangles are clipped to the lower half-space and summed as tetrahedra
/// against an apex on the plane, so the planar cap closing the clipped
/// surface contributes nothing.
fn volume_below(mesh: &TriMesh, plane: f64) -> f64 {
    let s = mesh.signed_heights(plane);
    // lies on the plane for either sign of the axis
    let apex = mesh.up.unit() * plane;
    let mut total = 0.0;
    let mut poly: Vec<Vec3> = Vec::with_capacity(4);
    for tri in &mesh.triangles {
        if tri.iter().all(|&i| s[i] > 0.0) {
            continue;
        }
        poly.clear();
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if s[a] < 0.0 {
                poly.push(mesh.vertices[a]);
            }
            if (s[a] < 0.0) != (s[b] < 0.0) {
                poly.push(edge_point(mesh, &s, a, b));
            }
        }
        for k in 1..poly.len().saturating_sub(1) {
            total += signed_tet(&apex, &poly[0], &poly[k], &poly[k + 1]);
        }
    }
    total
}

fn total_signed_volume(mesh: &TriMesh) -> f64 {
    let o = Vec3::zeros();
    mesh.triangles
        .iter()
        .map(|t| {
            signed_tet(
                &o,
                &mesh.vertices[t[0]],
                &mesh.vertices[t[1]],
                &mesh.vertices[t[2]],
            )
        })
        .sum()
}

/// Interior volume between the planes at `lo` and `hi` along the up axis.
pub fn slab_volume(mesh: &TriMesh, lo: f64, hi: f64) -> Result<f64> {
    if !mesh.closed {
        return Err(Error::OpenMesh);
    }
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidInput(format!(
            "invalid slab range [{lo}, {hi}]"
        )));
    }
    // inward-oriented meshes have negative total volume
    let orientation = total_signed_volume(mesh).signum();
    let v = orientation * (volume_below(mesh, hi) - volume_below(mesh, lo));
    Ok(v.max(0.0))
}

/// Whole-mesh enclosed volume.
pub fn mesh_volume(mesh: &TriMesh) -> Result<f64> {
    if !mesh.closed {
        return Err(Error::OpenMesh);
    }
    Ok(total_signed_volume(mesh).abs())
}

/// Uniform body density in kg/m³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BodyDensity(f64);

impl BodyDensity {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidInput(format!(
                "density must be positive, got {rho}"
            )));
        }
        Ok(Self(rho))
    }

    pub fn kg_per_m3(&self) -> f64 {
        self.0
    }
}

impl Default for BodyDensity {
    /// 1.071 g/cm³.
    fn default() -> Self {
        Self(1071.0)
    }
}

pub fn segment_mass(volume_m3: f64, density: BodyDensity) -> Result<f64> {
    if !(volume_m3.is_finite() && volume_m3 >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "volume must be nonnegative, got {volume_m3}"
        )));
    }
    Ok(density.0 * volume_m3)
}

/// Height range of the default trunk slab for a mesh.
pub fn default_trunk_bounds(mesh: &TriMesh, fractions: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = mesh.height_range();
    (lo + fractions.0 * (hi - lo), lo + fractions.1 * (hi - lo))
}

/// `m = β0 + β1·weight_kg + β2·height_m + β3·waist_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrunkMassRegression {
    pub beta: [f64; 4],
    pub provenance: String,
}

const SHIPPED_TRUNK_REGRESSION: &str = include_str!("../data/trunk_mass_regression.json");

impl TrunkMassRegression {
    pub fn from_json(text: &str) -> Result<Self> {
        let reg: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("trunk regression file: {e}")))?;
        if !reg.beta.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidConfig(
                "regression coefficients must be finite".into(),
            ));
        }
        Ok(reg)
    }

    /// Coefficients fitted to the synthetic body corpus (see `synth::body_corpus`).
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_TRUNK_REGRESSION).expect("shipped coefficients parse")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrunkMassEstimate {
    pub mass_kg: f64,
    /// Set when the prediction is not positive.
    pub out_of_domain: bool,
}

pub fn trunk_mass_regression_eval(
    reg: &TrunkMassRegression,
    subject: &SubjectAnthropometry,
) -> Result<TrunkMassEstimate> {
    let waist = subject
        .waist_circumference_m
        .ok_or_else(|| Error::MissingInput("subject waist circumference".into()))?;
    let [b0, b1, b2, b3] = reg.beta;
    let mass_kg = b0 + b1 * subject.weight_kg + b2 * subject.height_m + b3 * waist;
    Ok(TrunkMassEstimate {
        mass_kg,
        out_of_domain: mass_kg <= 0.0,
    })
}

/// Least-squares fit of the trunk-mass regression to
/// `(weight_kg, height_m, waist_m, trunk_mass_kg)` rows.
pub fn fit_trunk_mass_regression(
    rows: &[[f64; 4]],
    provenance: impl Into<String>,
) -> Result<TrunkMassRegression> {
    if rows.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: rows.len(),
        });
    }
    let x = nalgebra::DMatrix::from_fn(
        rows.len(),
        4,
        |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] },
    );
    let y = nalgebra::DVector::from_iterator(rows.len(), rows.iter().map(|r| r[3]));
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-12 {
        return Err(Error::DegenerateDesign(
            "trunk regression inputs are collinear".into(),
        ));
    }
    let beta = svd
        .solve(&y, smax * 1e-12)
        .map_err(|e| Error::DegenerateDesign(e.to_string()))?;
    Ok(TrunkMassRegression {
        beta: [beta[0], beta[1], beta[2], beta[3]],
        provenance: provenance.into(),
    })
}

/// Percent differences `(estimated − measured)/measured·100` and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub percent_diffs: Vec<f64>,
    pub mean_pct: f64,
    pub min_pct: f64,
    pub max_pct: f64,
}

pub fn estimate_error_stats(measured: &[f64], estimated: &[f64]) -> Result<ErrorStats> {
    if measured.len() != estimated.len() || measured.is_empty() {
        return Err(Error::InvalidInput(format!(
            "need equal nonzero lengths, got {} measured and {} estimated",
            measured.len(),
            estimated.len()
        )));
    }
    if measured.iter().any(|m| *m == 0.0 || !m.is_finite()) {
        return Err(Error::InvalidInput(
            "measured values must be finite and nonzero".into(),
        ));
    }
    let percent_diffs: Vec<f64> = measured
        .iter()
        .zip(estimated)
        .map(|(m, e)| (e - m) / m * 100.0)
        .collect();
    let n = percent_diffs.len() as f64;
    Ok(ErrorStats {
        mean_pct: percent_diffs.iter().sum::<f64>() / n,
        min_pct: percent_diffs.iter().copied().fold(f64::INFINITY, f64::min),
        max_pct: percent_diffs
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        percent_diffs,
    })
}
