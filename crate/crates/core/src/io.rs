//! File formats: binary hidden-state matrices, vector and subspace
//! containers, JSONL corpora, and JSON reports.
//!
//! All floats are f64 in memory and 32-bit on disk (widened on load).
//! JSON numbers are rendered with 17 significant digits so that reloading
//! reproduces the exact double. Report files carry no timestamps; volatile
//! run details go to a `.meta` sidecar so reruns stay byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::fingerprint64;
use crate::subspace::ContentSubspace;
use crate::types::{HiddenStateSet, Matrix, SteeringVector};

/// Magic for raw hidden-state matrices.
pub const HSV_MAGIC: &[u8; 4] = b"HSV1";
/// Magic for steering-vector files (JSON header + one matrix block).
pub const VECTOR_MAGIC: &[u8; 4] = b"SVC1";
/// Magic for subspace files (JSON header + centroid/basis/singular blocks).
pub const SUBSPACE_MAGIC: &[u8; 4] = b"SSP1";

fn io_err(context: &str, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{context}: {e}")))
}

// ---------------------------------------------------------------------------
// JSON with 17-significant-digit floats
// ---------------------------------------------------------------------------

/// serde_json formatter that renders every float with 17 significant digits
/// (scientific notation), enough to round-trip any f64 exactly.
#[derive(Clone, Copy, Default)]
pub struct PreciseFloats;

impl serde_json::ser::Formatter for PreciseFloats {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{:.16e}", value as f64)
    }
}

/// Serializes to a JSON string with full-precision floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PreciseFloats);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(std::io::Error::other(format!("serializing JSON: {e}"))))?;
    String::from_utf8(out)
        .map_err(|e| Error::Io(std::io::Error::other(format!("JSON not UTF-8: {e}"))))
}

/// Writes a report as pretty-free JSON plus trailing newline. Content is a
/// pure function of the value — no clocks, no environment.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = to_json_string(value)?;
    let mut f = BufWriter::new(
        File::create(path).map_err(|e| io_err(&format!("creating {}", path.display()), e))?,
    );
    f.write_all(json.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f =
        File::open(path).map_err(|e| io_err(&format!("opening {}", path.display()), e))?;
    serde_json::from_reader(BufReader::new(f))
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Volatile run details for a report, kept out of the report itself.
#[derive(Debug, Serialize, Deserialize)]
pub struct MetaSidecar {
    pub created_unix_secs: u64,
    pub tool_version: String,
    /// Free-form run annotation (e.g. the prompt an extraction run used).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Writes `<report>.meta` next to a report file.
pub fn write_meta_sidecar(report_path: &Path) -> Result<()> {
    write_meta_sidecar_with_note(report_path, None)
}

/// Like [`write_meta_sidecar`] but with an attached annotation.
pub fn write_meta_sidecar_with_note(report_path: &Path, note: Option<&str>) -> Result<()> {
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = MetaSidecar {
        created_unix_secs: created,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        note: note.map(str::to_string),
    };
    let mut path = report_path.as_os_str().to_owned();
    path.push(".meta");
    write_json_file(Path::new(&path), &meta)
}

/// FNV-1a fingerprint of a file's bytes, as 16 hex digits.
pub fn file_fingerprint(path: &Path) -> Result<String> {
    let mut f =
        File::open(path).map_err(|e| io_err(&format!("opening {}", path.display()), e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    Ok(format!("{:016x}", fingerprint64(&bytes)))
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

/// Reads one JSON object per line; malformed lines are reported with their
/// 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f =
        File::open(path).map_err(|e| io_err(&format!("opening {}", path.display()), e))?;
    let reader = BufReader::new(f);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| {
            if e.kind() == std::io::ErrorKind::InvalidData {
                Error::Ingest(format!("{}:{}: not valid UTF-8", path.display(), i + 1))
            } else {
                io_err(&format!("reading {}", path.display()), e)
            }
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        items.push(item);
    }
    Ok(items)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = BufWriter::new(
        File::create(path).map_err(|e| io_err(&format!("creating {}", path.display()), e))?,
    );
    for item in items {
        let json = to_json_string(item)?;
        f.write_all(json.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .map_err(|e| io_err(&format!("writing {}", path.display()), e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// HSV1 matrix blocks
// ---------------------------------------------------------------------------

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Writes one `HSV1` block: magic, rows, cols, layer, then row-major f32.
pub fn write_matrix_block<W: Write>(w: &mut W, m: &Matrix, layer: u32) -> Result<()> {
    let ctx = "writing matrix block";
    w.write_all(HSV_MAGIC).map_err(|e| io_err(ctx, e))?;
    let rows = u32::try_from(m.rows)
        .map_err(|_| Error::Ingest(format!("{} rows exceed the u32 on-disk limit", m.rows)))?;
    let cols = u32::try_from(m.cols)
        .map_err(|_| Error::Ingest(format!("{} cols exceed the u32 on-disk limit", m.cols)))?;
    write_u32(w, rows).map_err(|e| io_err(ctx, e))?;
    write_u32(w, cols).map_err(|e| io_err(ctx, e))?;
    write_u32(w, layer).map_err(|e| io_err(ctx, e))?;
    let mut buf = Vec::with_capacity(m.data.len() * 4);
    for &x in &m.data {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| io_err(ctx, e))
}

/// Reads one `HSV1` block, widening values to f64.
pub fn read_matrix_block<R: Read>(r: &mut R, what: &str) -> Result<(Matrix, u32)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Ingest(format!("{what}: reading magic: {e}")))?;
    if &magic != HSV_MAGIC {
        return Err(Error::Ingest(format!(
            "{what}: bad magic {:?}, expected {:?}",
            magic, HSV_MAGIC
        )));
    }
    let rows = read_u32(r).map_err(|e| Error::Ingest(format!("{what}: reading rows: {e}")))?;
    let cols = read_u32(r).map_err(|e| Error::Ingest(format!("{what}: reading cols: {e}")))?;
    let layer = read_u32(r).map_err(|e| Error::Ingest(format!("{what}: reading layer: {e}")))?;
    let n = rows as u64 * cols as u64;
    if n > (1u64 << 32) {
        return Err(Error::Ingest(format!(
            "{what}: implausible size {rows}×{cols}"
        )));
    }
    let mut bytes = vec![0u8; (n * 4) as usize];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Ingest(format!("{what}: truncated data section: {e}")))?;
    let mut data = Vec::with_capacity(n as usize);
    for chunk in bytes.chunks_exact(4) {
        let x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        if !x.is_finite() {
            return Err(Error::Ingest(format!("{what}: non-finite value on disk")));
        }
        data.push(x);
    }
    Ok((
        Matrix {
            rows: rows as usize,
            cols: cols as usize,
            data,
        },
        layer,
    ))
}

/// Writes `<dir>/<question_id>.hsv`.
pub fn write_hidden_states(dir: &Path, set: &HiddenStateSet) -> Result<()> {
    set.validate()?;
    let path = dir.join(format!("{}.hsv", set.question_id));
    let mut f = BufWriter::new(
        File::create(&path).map_err(|e| io_err(&format!("creating {}", path.display()), e))?,
    );
    write_matrix_block(&mut f, &set.states, set.layer)
}

/// Reads one `.hsv` file; the question id is the file stem.
pub fn read_hidden_states(path: &Path) -> Result<HiddenStateSet> {
    let question_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Ingest(format!("{}: cannot derive question id", path.display())))?
        .to_string();
    let f =
        File::open(path).map_err(|e| io_err(&format!("opening {}", path.display()), e))?;
    let mut r = BufReader::new(f);
    let (states, layer) = read_matrix_block(&mut r, &path.display().to_string())?;
    let set = HiddenStateSet {
        question_id,
        layer,
        states,
    };
    set.validate()?;
    Ok(set)
}

/// Reads every `*.hsv` in a directory, sorted by question id.
pub fn read_hidden_states_dir(dir: &Path) -> Result<Vec<HiddenStateSet>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| io_err(&format!("listing {}", dir.display()), e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "hsv").unwrap_or(false))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_hidden_states(p)).collect()
}

// ---------------------------------------------------------------------------
// Steering-vector files
// ---------------------------------------------------------------------------

fn write_json_header<W: Write, T: Serialize>(w: &mut W, header: &T) -> Result<()> {
    let json = to_json_string(header)?;
    let len = u32::try_from(json.len())
        .map_err(|_| Error::Io(std::io::Error::other("header exceeds u32 length")))?;
    write_u32(w, len).map_err(|e| io_err("writing header length", e))?;
    w.write_all(json.as_bytes())
        .map_err(|e| io_err("writing header", e))
}

fn read_json_header<R: Read, T: DeserializeOwned>(r: &mut R, what: &str) -> Result<T> {
    let len = read_u32(r).map_err(|e| Error::Ingest(format!("{what}: header length: {e}")))?;
    if len > (1 << 20) {
        return Err(Error::Ingest(format!("{what}: implausible header size {len}")));
    }
    let mut bytes = vec![0u8; len as usize];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Ingest(format!("{what}: truncated header: {e}")))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{what}: header: {e}")))
}

/// Writes a steering vector: magic, JSON metadata header, then a 1×D block.
pub fn write_vector_file(path: &Path, v: &SteeringVector) -> Result<()> {
    let mut f = BufWriter::new(
        File::create(path).map_err(|e| io_err(&format!("creating {}", path.display()), e))?,
    );
    f.write_all(VECTOR_MAGIC)
        .map_err(|e| io_err("writing magic", e))?;
    write_json_header(&mut f, v)?;
    let m = Matrix::from_rows(&[v.direction.clone()])?;
    write_matrix_block(&mut f, &m, v.layer)
}

/// Reads a steering vector and re-validates it (unit norm after widening).
pub fn read_vector_file(path: &Path) -> Result<SteeringVector> {
    let what = path.display().to_string();
    let f = File::open(path).map_err(|e| io_err(&format!("opening {what}"), e))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Ingest(format!("{what}: reading magic: {e}")))?;
    if &magic != VECTOR_MAGIC {
        return Err(Error::Ingest(format!(
            "{what}: bad magic {:?}, expected {:?}",
            magic, VECTOR_MAGIC
        )));
    }
    let mut v: SteeringVector = read_json_header(&mut r, &what)?;
    let (m, layer) = read_matrix_block(&mut r, &what)?;
    if m.rows != 1 {
        return Err(Error::Ingest(format!(
            "{what}: expected a single direction row, found {}",
            m.rows
        )));
    }
    if layer != v.layer {
        return Err(Error::Ingest(format!(
            "{what}: header layer {} disagrees with block layer {layer}",
            v.layer
        )));
    }
    v.direction = m.data;
    // f32 storage perturbs the norm slightly; renormalize before validating.
    v.direction = crate::vecmath::l2_normalize(&v.direction)?;
    v.validate()?;
    Ok(v)
}

// ---------------------------------------------------------------------------
// Subspace files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SubspaceHeader {
    rank: usize,
    dim: usize,
}

/// Writes a fitted subspace: magic, JSON header, then centroid (1×D),
/// basis (K×D), and singular values (1×K) blocks.
pub fn write_subspace_file(path: &Path, s: &ContentSubspace) -> Result<()> {
    s.validate()?;
    let mut f = BufWriter::new(
        File::create(path).map_err(|e| io_err(&format!("creating {}", path.display()), e))?,
    );
    f.write_all(SUBSPACE_MAGIC)
        .map_err(|e| io_err("writing magic", e))?;
    write_json_header(
        &mut f,
        &SubspaceHeader {
            rank: s.rank(),
            dim: s.dim(),
        },
    )?;
    write_matrix_block(&mut f, &Matrix::from_rows(&[s.centroid.clone()])?, 0)?;
    write_matrix_block(&mut f, &s.basis, 0)?;
    write_matrix_block(&mut f, &Matrix::from_rows(&[s.singular_values.clone()])?, 0)
}

/// Restores exact orthonormality lost to f32 storage. Rows arrive within
/// ~1e-7 of orthonormal, so the correction is tiny and numerically stable.
fn reorthonormalize_rows(basis: &mut Matrix, what: &str) -> Result<()> {
    for i in 0..basis.rows {
        for j in 0..i {
            let proj = crate::vecmath::dot(basis.row(i), basis.row(j));
            let (head, tail) = basis.data.split_at_mut(i * basis.cols);
            let prev = &head[j * basis.cols..(j + 1) * basis.cols];
            for (x, p) in tail[..basis.cols].iter_mut().zip(prev) {
                *x -= proj * p;
            }
        }
        let cols = basis.cols;
        let row = &mut basis.data[i * cols..(i + 1) * cols];
        let norm = crate::vecmath::l2_norm(row);
        if norm <= 1e-6 {
            return Err(Error::Ingest(format!(
                "{what}: basis row {i} degenerate after widening"
            )));
        }
        for x in row.iter_mut() {
            *x /= norm;
        }
    }
    Ok(())
}

/// Reads a fitted subspace. The basis is re-orthonormalized after the f32
/// round trip, mirroring how steering directions are renormalized.
pub fn read_subspace_file(path: &Path) -> Result<ContentSubspace> {
    let what = path.display().to_string();
    let f = File::open(path).map_err(|e| io_err(&format!("opening {what}"), e))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Ingest(format!("{what}: reading magic: {e}")))?;
    if &magic != SUBSPACE_MAGIC {
        return Err(Error::Ingest(format!(
            "{what}: bad magic {:?}, expected {:?}",
            magic, SUBSPACE_MAGIC
        )));
    }
    let header: SubspaceHeader = read_json_header(&mut r, &what)?;
    let (centroid, _) = read_matrix_block(&mut r, &what)?;
    let (mut basis, _) = read_matrix_block(&mut r, &what)?;
    let (singulars, _) = read_matrix_block(&mut r, &what)?;
    if centroid.rows != 1 || singulars.rows != 1 {
        return Err(Error::Ingest(format!(
            "{what}: centroid and singular blocks must be single rows"
        )));
    }
    if basis.rows != header.rank || basis.cols != header.dim {
        return Err(Error::Ingest(format!(
            "{what}: basis is {}×{}, header says {}×{}",
            basis.rows, basis.cols, header.rank, header.dim
        )));
    }
    reorthonormalize_rows(&mut basis, &what)?;
    let s = ContentSubspace {
        basis,
        centroid: centroid.data,
        singular_values: singulars.data,
    };
    s.validate()?;
    Ok(s)
}
