//! Result files. Each file is written to a temporary sibling and renamed into
//! place, so it is either complete or absent.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::field::Field3D;

pub const MAGIC: &[u8; 4] = b"GMCF";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Binary dump: magic, the three stored extents (halo included) as
/// little-endian u32, then every value as little-endian f32 with `i`
/// varying fastest and `k` slowest.
pub fn encode_field(f: &Field3D<f32>) -> Vec<u8> {
    let (im, jm, km) = f.dims();
    let mut out = Vec::with_capacity(16 + 4 * f.as_slice().len());
    out.extend_from_slice(MAGIC);
    for n in [im + 2, jm + 2, km + 2] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in f.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_field`]: stored extents and values.
pub fn decode_field(bytes: &[u8]) -> Result<([usize; 3], Vec<f32>), String> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err("not a GMCF field dump".into());
    }
    let word = |n: usize| u32::from_le_bytes(bytes[4 + 4 * n..8 + 4 * n].try_into().unwrap()) as usize;
    let dims = [word(0), word(1), word(2)];
    let body = &bytes[16..];
    if body.len() != 4 * dims.iter().product::<usize>() {
        return Err(format!("dump holds {} bytes of data for extents {dims:?}", body.len()));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((dims, values))
}

pub fn field_header(name: &str, f: &Field3D<f32>) -> String {
    let (im, jm, km) = f.dims();
    format!(
        "name = {name}\nformat = GMCF\nextents = {} {} {}\ninterior = {im} {jm} {km}\nhalo = 1\n\
         dtype = f32 little-endian\norder = i fastest, then j, then k\ndata_offset = 16\n",
        im + 2,
        jm + 2,
        km + 2
    )
}

/// Writes `<dir>/<name>.bin` and its `<name>.hdr` sidecar.
pub fn dump_field(dir: &Path, name: &str, f: &Field3D<f32>) -> std::io::Result<Vec<PathBuf>> {
    let bin = dir.join(format!("{name}.bin"));
    let hdr = dir.join(format!("{name}.hdr"));
    write_atomic(&bin, &encode_field(f))?;
    write_atomic(&hdr, field_header(name, f).as_bytes())?;
    Ok(vec![bin, hdr])
}

/// Two-column CSV with a header row and a 1-based index column.
pub fn residual_csv(index: &str, column: &str, residuals: &[f64]) -> String {
    let mut s = format!("{index},{column}\n");
    for (n, r) in residuals.iter().enumerate() {
        s.push_str(&format!("{},{r:e}\n", n + 1));
    }
    s
}

/// FNV-1a over the bytes, for quick identity checks in summaries.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}
