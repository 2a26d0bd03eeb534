//! Point cloud and mesh file IO.
//!
//! Supported cloud formats: `.xyz` (whitespace-separated `x y z` per line,
//! `#` comments), `.obj` (only `v` records) and ascii `.ply` (vertex
//! element with `x`/`y`/`z` properties). Meshes load from `.obj` and ascii
//! `.ply`; quads and larger faces are fan-triangulated. All coordinates
//! parse as 64-bit decimals; normals, colors and materials are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{GeomError, Point3, PointCloud, TriangleMesh};

fn open(path: &Path) -> Result<BufReader<File>, GeomError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| GeomError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> GeomError {
    GeomError::MalformedRecord {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn parse_coords(fields: &[&str], path: &Path, line: usize) -> Result<Point3, GeomError> {
    if fields.len() < 3 {
        return Err(malformed(
            path,
            line,
            format!("expected 3 coordinates, found {}", fields.len()),
        ));
    }
    let mut c = [0.0f64; 3];
    for (k, f) in fields.iter().take(3).enumerate() {
        c[k] = f
            .parse::<f64>()
            .map_err(|_| malformed(path, line, format!("cannot parse '{f}' as a number")))?;
    }
    Ok(Point3::new(c[0], c[1], c[2]))
}

/// Loads vertex positions from `.xyz`, `.obj` or ascii `.ply`, in file
/// order.
pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud, GeomError> {
    let path = path.as_ref();
    let points = match extension(path).as_str() {
        "xyz" => load_xyz(path)?,
        "obj" => load_obj(path)?.0,
        "ply" => load_ply(path)?.0,
        other => {
            return Err(GeomError::UnsupportedExtension {
                path: path.display().to_string(),
                expected: format!(".xyz, .obj or .ply (got .{other})"),
            })
        }
    };
    if points.is_empty() {
        return Err(GeomError::EmptyCloud {
            path: path.display().to_string(),
        });
    }
    Ok(PointCloud::new(points))
}

/// Loads a triangle mesh from `.obj` or ascii `.ply`. Quads and larger
/// faces are fan-triangulated; degenerate (zero-area) triangles are
/// dropped and counted in the second return value.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<(TriangleMesh, usize), GeomError> {
    let path = path.as_ref();
    let (vertices, faces) = match extension(path).as_str() {
        "obj" => load_obj(path)?,
        "ply" => load_ply(path)?,
        other => {
            return Err(GeomError::UnsupportedExtension {
                path: path.display().to_string(),
                expected: format!(".obj or .ply (got .{other})"),
            })
        }
    };
    if faces.is_empty() {
        return Err(GeomError::EmptyMesh {
            path: path.display().to_string(),
        });
    }
    let mut triangles = Vec::with_capacity(faces.len());
    let mut dropped = 0usize;
    for tri in faces {
        if is_degenerate(&vertices, tri) {
            dropped += 1;
        } else {
            triangles.push(tri);
        }
    }
    if triangles.is_empty() {
        return Err(GeomError::EmptyMesh {
            path: path.display().to_string(),
        });
    }
    Ok((TriangleMesh { vertices, triangles }, dropped))
}

fn is_degenerate(vertices: &[Point3], [a, b, c]: [usize; 3]) -> bool {
    if a == b || b == c || a == c {
        return true;
    }
    let cross = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
    cross.norm_squared() == 0.0
}

fn load_xyz(path: &Path) -> Result<Vec<Point3>, GeomError> {
    let mut points = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| GeomError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        points.push(parse_coords(&fields, path, idx + 1)?);
    }
    Ok(points)
}

type Faces = Vec<[usize; 3]>;

fn load_obj(path: &Path) -> Result<(Vec<Point3>, Faces), GeomError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| GeomError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        let mut fields = trimmed.split_whitespace();
        match fields.next() {
            Some("v") => {
                let rest: Vec<&str> = fields.collect();
                vertices.push(parse_coords(&rest, path, lineno)?);
            }
            Some("f") => {
                let mut corner_indices = Vec::new();
                for field in fields {
                    // "v", "v/vt", "v/vt/vn" and "v//vn" forms
                    let v = field.split('/').next().unwrap_or("");
                    let parsed: isize = v.parse().map_err(|_| {
                        malformed(path, lineno, format!("cannot parse face index '{field}'"))
                    })?;
                    if parsed < 1 || parsed as usize > vertices.len() {
                        return Err(GeomError::FaceIndexOutOfRange {
                            path: path.display().to_string(),
                            line: lineno,
                            index: parsed,
                            vertices: vertices.len(),
                        });
                    }
                    corner_indices.push(parsed as usize - 1);
                }
                if corner_indices.len() < 3 {
                    return Err(malformed(
                        path,
                        lineno,
                        format!("face has {} vertices, need at least 3", corner_indices.len()),
                    ));
                }
                fan_triangulate(&corner_indices, &mut faces);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn fan_triangulate(corners: &[usize], out: &mut Faces) {
    for k in 1..corners.len() - 1 {
        out.push([corners[0], corners[k], corners[k + 1]]);
    }
}

fn load_ply(path: &Path) -> Result<(Vec<Point3>, Faces), GeomError> {
    let reader = open(path)?;
    let mut lines = reader.lines().enumerate();

    let mut next_line = |ctx: &str| -> Result<(usize, String), GeomError> {
        match lines.next() {
            Some((idx, Ok(line))) => Ok((idx + 1, line)),
            Some((idx, Err(source))) => Err(GeomError::Io {
                path: format!("{} (line {})", path.display(), idx + 1),
                source,
            }),
            None => Err(malformed(path, 0, format!("unexpected end of file in {ctx}"))),
        }
    };

    // Header
    let (_, magic) = next_line("header")?;
    if magic.trim() != "ply" {
        return Err(malformed(path, 1, "missing 'ply' magic line"));
    }
    let mut vertex_count = 0usize;
    let mut face_count = 0usize;
    let mut xyz_cols = [usize::MAX; 3];
    let mut vertex_props = 0usize;
    let mut in_vertex_element = false;
    let mut saw_ascii_format = false;
    loop {
        let (lineno, line) = next_line("header")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(malformed(
                        path,
                        lineno,
                        format!("unsupported PLY format '{fmt}' (only ascii)"),
                    ));
                }
                saw_ascii_format = true;
            }
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                vertex_count = n
                    .parse()
                    .map_err(|_| malformed(path, lineno, "bad vertex count"))?;
                in_vertex_element = true;
            }
            ["element", "face", n] => {
                face_count = n
                    .parse()
                    .map_err(|_| malformed(path, lineno, "bad face count"))?;
                in_vertex_element = false;
            }
            ["element", ..] => in_vertex_element = false,
            ["property", "list", ..] => {}
            ["property", _ty, name] if in_vertex_element => {
                match *name {
                    "x" => xyz_cols[0] = vertex_props,
                    "y" => xyz_cols[1] = vertex_props,
                    "z" => xyz_cols[2] = vertex_props,
                    _ => {}
                }
                vertex_props += 1;
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => {}
        }
    }
    if !saw_ascii_format {
        return Err(malformed(path, 0, "missing 'format ascii 1.0' line"));
    }
    if xyz_cols.contains(&usize::MAX) {
        return Err(malformed(path, 0, "vertex element lacks x/y/z properties"));
    }

    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let (lineno, line) = next_line("vertex data")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < vertex_props {
            return Err(malformed(
                path,
                lineno,
                format!("expected {vertex_props} vertex properties, found {}", fields.len()),
            ));
        }
        let coords = [fields[xyz_cols[0]], fields[xyz_cols[1]], fields[xyz_cols[2]]];
        vertices.push(parse_coords(&coords, path, lineno)?);
    }

    let mut faces = Vec::with_capacity(face_count);
    for _ in 0..face_count {
        let (lineno, line) = next_line("face data")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let n: usize = fields
            .first()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| malformed(path, lineno, "bad face list count"))?;
        if fields.len() < n + 1 || n < 3 {
            return Err(malformed(path, lineno, "bad face record"));
        }
        let mut corners = Vec::with_capacity(n);
        for f in &fields[1..=n] {
            let v: usize = f
                .parse()
                .map_err(|_| malformed(path, lineno, format!("bad face index '{f}'")))?;
            if v >= vertices.len() {
                return Err(GeomError::FaceIndexOutOfRange {
                    path: path.display().to_string(),
                    line: lineno,
                    index: v as isize,
                    vertices: vertices.len(),
                });
            }
            corners.push(v);
        }
        fan_triangulate(&corners, &mut faces);
    }

    Ok((vertices, faces))
}

/// Writes a mesh as ascii OBJ: vertices first, then 1-based faces.
/// Coordinates use the shortest decimal form that round-trips `f64`.
pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), GeomError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| GeomError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| GeomError::Io {
        path: path.display().to_string(),
        source,
    };
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z).map_err(io_err)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes a point cloud as `.xyz`, one `x y z` line per point.
pub fn write_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), GeomError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| GeomError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| GeomError::Io {
        path: path.display().to_string(),
        source,
    };
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
