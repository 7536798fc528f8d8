//! Study artifacts: `<study>-<seed>.json` and `<study>-<seed>.csv`.
//!
//! JSON is UTF-8, pretty-printed, with keys in declaration order. CSV uses
//! LF line endings and RFC 4180 quoting.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trainer::csv_err;

pub fn artifact_path(dir: &Path, study: &str, seed: u64, ext: &str) -> PathBuf {
    dir.join(format!("{study}-{seed}.{ext}"))
}

pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, study: &str, seed: u64, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = artifact_path(dir, study, seed, "json");
    fs::write(&path, to_json_bytes(value)?)?;
    Ok(path)
}

/// Writes a header row followed by numeric rows.
pub fn write_csv_rows<W: Write>(w: W, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for row in rows {
        out.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(dir: &Path, study: &str, seed: u64, header: &[String], rows: &[Vec<f64>]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = artifact_path(dir, study, seed, "csv");
    let f = fs::File::create(&path)?;
    write_csv_rows(std::io::BufWriter::new(f), header, rows)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_use_lf() {
        let mut buf = Vec::new();
        write_csv_rows(&mut buf, &["a".into(), "b".into()], &[vec![1.0, 0.5], vec![2.0, -1.0]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,0.5\n2,-1\n");
    }
}
