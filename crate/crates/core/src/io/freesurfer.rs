//! FreeSurfer per-vertex scalar ("curv") and triangle surface binaries.
//! Both are big-endian.

use std::path::Path;

use super::bytes::{read_file, write_file, ByteReader};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

const CURV_MAGIC: [u8; 3] = [0xFF, 0xFF, 0xFF];
const SURF_MAGIC: [u8; 3] = [0xFF, 0xFF, 0xFE];

pub fn read_fs_curv(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let path = path.as_ref();
    parse_fs_curv(&read_file(path)?, path)
}

/// Parses curv bytes; `path` only labels errors.
pub fn parse_fs_curv(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    let mut r = ByteReader::new(bytes, path);
    if r.take(3, "magic")? != CURV_MAGIC {
        return Err(r.error(0, "bad magic, expected FF FF FF"));
    }
    let nv = r.be_count("vertex count")?;
    let _nf = r.be_count("facet count")?;
    let at = r.pos();
    let per_vertex = r.be_i32("values per vertex")?;
    if per_vertex != 1 {
        return Err(r.error(at, format!("values per vertex is {per_vertex}, expected 1")));
    }
    if r.remaining() < nv * 4 {
        return Err(r.error(
            r.pos(),
            format!(
                "truncated values: {nv} vertices need {} bytes, {} left",
                nv * 4,
                r.remaining()
            ),
        ));
    }
    let values = (0..nv).map(|_| r.be_f32("value")).collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    Ok(values)
}

pub fn encode_fs_curv(values: &[f32], facet_count: usize) -> Result<Vec<u8>> {
    let nv = i32::try_from(values.len()).map_err(|_| Error::Usage("too many vertices for curv".into()))?;
    let nf = i32::try_from(facet_count).map_err(|_| Error::Usage("too many facets for curv".into()))?;
    let mut out = Vec::with_capacity(15 + 4 * values.len());
    out.extend_from_slice(&CURV_MAGIC);
    out.extend_from_slice(&nv.to_be_bytes());
    out.extend_from_slice(&nf.to_be_bytes());
    out.extend_from_slice(&1i32.to_be_bytes());
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

pub fn write_fs_curv(path: impl AsRef<Path>, values: &[f32], facet_count: usize) -> Result<()> {
    write_file(path.as_ref(), &encode_fs_curv(values, facet_count)?)
}

pub fn read_fs_surface(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    parse_fs_surface(&read_file(path)?, path)
}

pub fn parse_fs_surface(bytes: &[u8], path: &Path) -> Result<TriMesh> {
    let mut r = ByteReader::new(bytes, path);
    if r.take(3, "magic")? != SURF_MAGIC {
        return Err(r.error(0, "bad magic, expected FF FF FE"));
    }
    // comment runs up to and including the first "\n\n"
    let rest = &bytes[3..];
    let end = rest
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| r.error(3, "comment is not terminated by two newlines"))?;
    r.take(end + 2, "comment")?;
    let nv = r.be_count("vertex count")?;
    let nf = r.be_count("facet count")?;
    if r.remaining() < nv * 12 + nf * 12 {
        return Err(r.error(
            r.pos(),
            format!(
                "truncated body: {nv} vertices and {nf} facets need {} bytes, {} left",
                nv * 12 + nf * 12,
                r.remaining()
            ),
        ));
    }
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = r.be_f32("coordinate")? as f64;
        let y = r.be_f32("coordinate")? as f64;
        let z = r.be_f32("coordinate")? as f64;
        vertices.push([x, y, z]);
    }
    let mut facets = Vec::with_capacity(nf);
    for _ in 0..nf {
        let mut tri = [0usize; 3];
        for t in tri.iter_mut() {
            let at = r.pos();
            let i = r.be_i32("facet index")?;
            if i < 0 || i as usize >= nv {
                return Err(r.error(at, format!("facet index {i} out of range for {nv} vertices")));
            }
            *t = i as usize;
        }
        facets.push(tri);
    }
    // some writers append tags after the facets; they are ignored
    TriMesh::new(vertices, facets).map_err(|e| r.error(r.pos(), e.to_string()))
}

/// Encodes a surface; coordinates are stored as f32. `comment` must not
/// contain a blank line.
pub fn encode_fs_surface(mesh: &TriMesh, comment: &str) -> Result<Vec<u8>> {
    if comment.contains("\n\n") {
        return Err(Error::Usage("surface comment may not contain a blank line".into()));
    }
    let count = |n: usize| i32::try_from(n).map_err(|_| Error::Usage("mesh too large for the surface format".into()));
    let mut out = Vec::new();
    out.extend_from_slice(&SURF_MAGIC);
    out.extend_from_slice(comment.trim_end_matches('\n').as_bytes());
    out.extend_from_slice(b"\n\n");
    out.extend_from_slice(&count(mesh.vertex_count())?.to_be_bytes());
    out.extend_from_slice(&count(mesh.facet_count())?.to_be_bytes());
    for p in mesh.vertices() {
        for c in p {
            out.extend_from_slice(&(*c as f32).to_be_bytes());
        }
    }
    for f in mesh.facets() {
        for &i in f {
            out.extend_from_slice(&(i as i32).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_fs_surface(path: impl AsRef<Path>, mesh: &TriMesh, comment: &str) -> Result<()> {
    write_file(path.as_ref(), &encode_fs_surface(mesh, comment)?)
}
