//! Surface container files, OBJ export and atomic output.
//!
//! A surface is a JSON manifest next to little-endian `f64` binaries, one per
//! array, row-major with `v` fastest. Grid patches store positions, quadrature
//! weights, domain density and, when present, derivative jets (15 values per
//! sample). Mesh patches store nodes, triangles (`u64`), positions and
//! tangents (6 values per node).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{
    EdgeTag, Jet, MeshPatch, Orientation, ParamPatch, Patch, Rect, Seam, SurfaceImmersion, Vec3,
};

pub const SURFACE_FORMAT: &str = "srnf-lab-surface/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceManifest {
    pub format: String,
    pub orientation: Orientation,
    pub seams: Vec<Seam>,
    pub patches: Vec<PatchEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchEntry {
    Grid {
        domain: Rect,
        nu: usize,
        nv: usize,
        edges: [EdgeTag; 4],
        positions_file: String,
        weights_file: String,
        density_file: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        jets_file: Option<String>,
    },
    Mesh {
        node_count: usize,
        triangle_count: usize,
        nodes_file: String,
        triangles_file: String,
        positions_file: String,
        tangents_file: String,
        loops: Vec<Vec<usize>>,
        loop_tags: Vec<EdgeTag>,
    },
}

/// Writes `bytes` to a temporary file beside `path`, then renames it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParam(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn f64_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(f64::to_le_bytes).collect()
}

pub fn write_f64(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    atomic_write(path, &f64_bytes(values))
}

pub fn read_f64(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidPatch(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn read_u64(path: &Path) -> Result<Vec<u64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidPatch(format!("{}: truncated index file", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn vec3s(values: &[f64], per: usize, count: usize, what: &str) -> Result<Vec<Vec3>> {
    if values.len() != per * count {
        return Err(Error::InvalidPatch(format!(
            "{what}: expected {} values, found {}",
            per * count,
            values.len()
        )));
    }
    Ok(values.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Writes `f` as `<dir>/<name>.json` plus binaries; returns every file
/// written, manifest first.
pub fn write_surface(dir: &Path, name: &str, f: &SurfaceImmersion) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut entries = Vec::with_capacity(f.patches.len());
    let mut put = |file: String, values: Vec<u8>| -> Result<String> {
        let path = dir.join(&file);
        atomic_write(&path, &values)?;
        written.push(path);
        Ok(file)
    };
    for (k, patch) in f.patches.iter().enumerate() {
        let stem = format!("{name}.p{k}");
        let entry = match patch {
            Patch::Grid(g) => PatchEntry::Grid {
                domain: g.rect(),
                nu: g.nu(),
                nv: g.nv(),
                edges: g.edges(),
                positions_file: put(
                    format!("{stem}.positions.f64"),
                    f64_bytes(g.positions().iter().flat_map(|p| [p.x, p.y, p.z])),
                )?,
                weights_file: put(format!("{stem}.weights.f64"), f64_bytes(g.weights().iter().copied()))?,
                density_file: put(format!("{stem}.density.f64"), f64_bytes(g.density().iter().copied()))?,
                jets_file: g
                    .jets()
                    .map(|jets| {
                        put(
                            format!("{stem}.jets.f64"),
                            f64_bytes(jets.iter().flat_map(|j| {
                                [j.du, j.dv, j.duu, j.duv, j.dvv].into_iter().flat_map(|v| [v.x, v.y, v.z])
                            })),
                        )
                    })
                    .transpose()?,
            },
            Patch::Mesh(m) => PatchEntry::Mesh {
                node_count: m.nodes().len(),
                triangle_count: m.triangles().len(),
                nodes_file: put(format!("{stem}.nodes.f64"), f64_bytes(m.nodes().iter().flatten().copied()))?,
                triangles_file: put(
                    format!("{stem}.triangles.u64"),
                    m.triangles().iter().flatten().flat_map(|&k| (k as u64).to_le_bytes()).collect(),
                )?,
                positions_file: put(
                    format!("{stem}.positions.f64"),
                    f64_bytes(m.positions().iter().flat_map(|p| [p.x, p.y, p.z])),
                )?,
                tangents_file: put(
                    format!("{stem}.tangents.f64"),
                    f64_bytes(m.tangents().iter().flat_map(|[a, b]| [a.x, a.y, a.z, b.x, b.y, b.z])),
                )?,
                loops: m.loops().to_vec(),
                loop_tags: m.loop_tags().to_vec(),
            },
        };
        entries.push(entry);
    }
    let manifest = SurfaceManifest {
        format: SURFACE_FORMAT.to_string(),
        orientation: f.orientation,
        seams: f.seams.clone(),
        patches: entries,
    };
    let path = dir.join(format!("{name}.json"));
    write_json(&path, &manifest)?;
    written.insert(0, path);
    Ok(written)
}

/// Reads a surface written by [`write_surface`].
pub fn read_surface(manifest_path: &Path) -> Result<SurfaceImmersion> {
    let manifest: SurfaceManifest = read_json(manifest_path)?;
    if manifest.format != SURFACE_FORMAT {
        return Err(Error::InvalidPatch(format!("unknown surface format {:?}", manifest.format)));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let patches = manifest
        .patches
        .iter()
        .map(|entry| -> Result<Patch> {
            match entry {
                PatchEntry::Grid {
                    domain,
                    nu,
                    nv,
                    edges,
                    positions_file,
                    weights_file,
                    density_file,
                    jets_file,
                } => {
                    let n = nu * nv;
                    let positions = vec3s(&read_f64(&dir.join(positions_file))?, 3, n, positions_file)?;
                    let mut p = ParamPatch::from_samples(*domain, *nu, *nv, positions)?
                        .with_weights(read_f64(&dir.join(weights_file))?)?
                        .with_density(read_f64(&dir.join(density_file))?)?
                        .with_edges(*edges);
                    if let Some(file) = jets_file {
                        let v = vec3s(&read_f64(&dir.join(file))?, 15, n, file)?;
                        let jets = v
                            .chunks_exact(5)
                            .map(|c| Jet {
                                du: c[0],
                                dv: c[1],
                                duu: c[2],
                                duv: c[3],
                                dvv: c[4],
                            })
                            .collect();
                        p = p.with_jets(jets)?;
                    }
                    Ok(Patch::Grid(p))
                }
                PatchEntry::Mesh {
                    node_count,
                    triangle_count,
                    nodes_file,
                    triangles_file,
                    positions_file,
                    tangents_file,
                    loops,
                    loop_tags,
                } => {
                    let raw = read_f64(&dir.join(nodes_file))?;
                    if raw.len() != 2 * node_count {
                        return Err(Error::InvalidPatch(format!("{nodes_file}: wrong node count")));
                    }
                    let nodes = raw.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
                    let idx = read_u64(&dir.join(triangles_file))?;
                    if idx.len() != 3 * triangle_count {
                        return Err(Error::InvalidPatch(format!("{triangles_file}: wrong triangle count")));
                    }
                    let triangles = idx
                        .chunks_exact(3)
                        .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
                        .collect();
                    let positions = vec3s(&read_f64(&dir.join(positions_file))?, 3, *node_count, positions_file)?;
                    let t = vec3s(&read_f64(&dir.join(tangents_file))?, 6, *node_count, tangents_file)?;
                    let tangents = t.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
                    let m = MeshPatch::new(nodes, triangles, positions, tangents, loops.clone())?
                        .with_loop_tags(loop_tags.clone())?;
                    Ok(Patch::Mesh(m))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    SurfaceImmersion::new(patches, manifest.orientation, manifest.seams)
}

/// Wavefront OBJ with quad faces for grid patches and triangles for meshes.
pub fn obj_string(f: &SurfaceImmersion) -> String {
    let mut out = String::new();
    let mut base = 1usize;
    let flip = f.orientation == Orientation::Negative;
    for (k, patch) in f.patches.iter().enumerate() {
        out.push_str(&format!("o patch{k}\n"));
        for p in patch.positions() {
            out.push_str(&format!("v {} {} {}\n", p.x, p.y, p.z));
        }
        let mut face = |mut idx: Vec<usize>| {
            if flip {
                idx.reverse();
            }
            out.push('f');
            for i in idx {
                out.push_str(&format!(" {}", base + i));
            }
            out.push('\n');
        };
        match patch {
            Patch::Grid(g) => {
                for i in 0..g.nu() - 1 {
                    for j in 0..g.nv() - 1 {
                        face(vec![g.idx(i, j), g.idx(i + 1, j), g.idx(i + 1, j + 1), g.idx(i, j + 1)]);
                    }
                }
            }
            Patch::Mesh(m) => {
                for t in m.triangles() {
                    face(t.to_vec());
                }
            }
        }
        base += patch.len();
    }
    out
}

pub fn write_obj(path: &Path, f: &SurfaceImmersion) -> Result<()> {
    atomic_write(path, obj_string(f).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexamples::{gen_chessboard, ChessboardSpec, DiscSpec};
    use crate::geom::srnf;
    use crate::shapes;

    #[test]
    fn grid_surface_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let f = shapes::cubed_sphere(9).sample().unwrap();
        let files = write_surface(dir.path(), "sphere", &f).unwrap();
        assert_eq!(files[0], dir.path().join("sphere.json"));
        let g = read_surface(&files[0]).unwrap();
        let (qa, qb) = (srnf(&f).unwrap(), srnf(&g).unwrap());
        assert_eq!(qa.max_deviation(&qb).unwrap(), 0.0);
        assert_eq!(g.seams, f.seams);
        assert!(g.is_closed());
    }

    #[test]
    fn mesh_surface_roundtrip_is_exact() {
        let spec = ChessboardSpec {
            discs: vec![DiscSpec {
                center: [0.0, 0.0],
                radius: 0.3,
                cap: Default::default(),
                translation: [0.0, 0.0],
            }],
            mesh_spacing: 0.1,
            cap_resolution: 9,
            cap_radial: 5,
            table_samples: 9,
            ..ChessboardSpec::default()
        };
        let cb = gen_chessboard(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_surface(dir.path(), "board", &cb.id).unwrap();
        let g = read_surface(&files[0]).unwrap();
        g.validate().unwrap();
        assert!(g.is_closed());
        assert_eq!(srnf(&g).unwrap().max_deviation(&srnf(&cb.id).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn obj_counts() {
        let f = shapes::unit_cylinder(5, 4).sample().unwrap();
        let s = obj_string(&f);
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 20);
        assert_eq!(s.lines().filter(|l| l.starts_with("f ")).count(), 12);
    }

    #[test]
    fn truncated_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.f64");
        atomic_write(&p, &[0u8; 12]).unwrap();
        assert!(read_f64(&p).is_err());
    }
}
