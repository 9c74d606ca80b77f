use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matcore::Mat;

/// Leading bytes of the packed binary matrix format.
pub const BINARY_MAGIC: &[u8; 8] = b"MATLDA\x00\x01";

/// Reads a comma-separated matrix, one matrix row per line. Lines starting
/// with `#` are ignored.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row_no = i + 1;
        let line = record.position().map_or(row_no as u64, |p| p.line());
        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("row {row_no} (line {line}), column {}: '{cell}' is not a number", j + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("row {row_no} (line {line}), column {}: non-finite value", j + 1),
                ));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(
                    path,
                    format!(
                        "ragged row {row_no} (line {line}): {} columns, expected {}",
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::parse(path, "no matrix rows"));
    }
    Mat::from_rows(&rows).map_err(|e| Error::parse(path, e.to_string()))
}

/// Writes with 17 significant digits, enough to reproduce every entry exactly.
pub fn save_matrix_csv(m: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(m.rows() * m.cols() * 24);
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.16e}", m.get(i, j)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Magic header, `p` and `q` as little-endian u64, then row-major f64 entries.
pub fn save_matrix_bin(m: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>, bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(&mut w, BINARY_MAGIC)?;
    write(&mut w, &(m.rows() as u64).to_le_bytes())?;
    write(&mut w, &(m.cols() as u64).to_le_bytes())?;
    for v in m.to_row_major() {
        write(&mut w, &v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_matrix_bin(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 || &bytes[..8] != BINARY_MAGIC {
        return Err(Error::parse(path, "not a binary matrix file (bad magic header)"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
    let (p, q) = (word(8), word(16));
    let expected = p
        .checked_mul(q)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(24));
    if expected != Some(bytes.len() as u64) {
        return Err(Error::parse(
            path,
            format!("header declares {p}x{q} but the payload has {} bytes", bytes.len() - 24),
        ));
    }
    let data = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Mat::from_row_major(p as usize, q as usize, data).map_err(|e| Error::parse(path, e.to_string()))
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

/// Binary format for `.bin` files, CSV otherwise.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    if is_binary(path) {
        load_matrix_bin(path)
    } else {
        load_matrix_csv(path)
    }
}

pub fn save_matrix(m: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_binary(path) {
        save_matrix_bin(m, path)
    } else {
        save_matrix_csv(m, path)
    }
}

/// Row-major grey levels: the minimum maps to 255 and the maximum to 0, so
/// larger entries are darker. A constant matrix is uniform 128.
pub fn pgm_pixels(m: &Mat) -> Vec<u8> {
    let values = m.to_row_major();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| (255.0 * (hi - v) / (hi - lo)).round() as u8)
        .collect()
}

/// Binary PGM (P5, maxval 255) with one pixel per entry.
pub fn render_pgm(m: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", m.cols(), m.rows()).into_bytes();
    bytes.extend(pgm_pixels(m));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let position = e.position().map(|p| format!("line {}: ", p.line())).unwrap_or_default();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::parse(path, format!("{position}{kind:?}")),
    }
}
