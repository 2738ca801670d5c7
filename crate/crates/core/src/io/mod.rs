//! Tensor files, CSV ingestion, annotation and configuration files, and run
//! manifests.

mod config;
mod csv_ingest;
mod manifest;
mod tensor_file;

pub use config::{DecomposeConfig, EvaluateConfig, PipelineConfig, PreprocessConfig, RunConfig, Source};
pub use csv_ingest::{ingest_csv, CsvLayout};
pub use manifest::{sha256_file, sha256_hex, RunManifest, StepTiming};
pub use tensor_file::{decode_tensor, encode_tensor, read_tensor, write_tensor, HEADER_LEN, MAGIC, VERSION};

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{AnnotationSet, Scalogram};

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::arg(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that parses back to the same `f64`.
pub fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::num(format!("JSON encoding: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses and validates `{"intervals": [{"kind", "start_s", "end_s"}]}`.
pub fn read_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = read_to_string(path)?;
    let set: AnnotationSet = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    set.validate()?;
    Ok(set)
}

pub fn write_annotations(path: &Path, set: &AnnotationSet) -> Result<()> {
    write_json(path, set)
}

/// Magnitude grid as CSV: a `freq_hz` column followed by one column per
/// sample, headed by its time in seconds.
pub fn write_scalogram_csv(path: &Path, sc: &Scalogram, fs: f64) -> Result<()> {
    let t = sc.magnitudes.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("freq_hz".to_string()).chain((0..t).map(|k| format!("{}", k as f64 / fs)));
    let encode = |e: csv::Error| Error::num(format!("CSV encoding: {e}"));
    w.write_record(header).map_err(encode)?;
    for (f, row) in sc.freqs_hz.iter().zip(&sc.magnitudes) {
        w.write_record(std::iter::once(f).chain(row).map(|v| v.to_string())).map_err(encode)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::num(format!("CSV encoding: {e}")))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::IntervalKind;

    #[test]
    fn annotation_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        fs::write(
            &p,
            r#"{"intervals": [{"kind": "contraction", "start_s": 10, "end_s": 90},
                              {"kind": "dummy", "start_s": 100, "end_s": 180}]}"#,
        )
        .unwrap();
        let set = read_annotations(&p).unwrap();
        assert_eq!(set.intervals.len(), 2);
        assert_eq!(set.count(IntervalKind::Dummy), 1);

        fs::write(
            &p,
            r#"{"intervals": [{"kind": "contraction", "start_s": 10, "end_s": 90},
                              {"kind": "contraction", "start_s": 50, "end_s": 120}]}"#,
        )
        .unwrap();
        let msg = read_annotations(&p).unwrap_err().to_string();
        assert!(msg.contains("#0") && msg.contains("#1"), "{msg}");

        fs::write(&p, r#"{"intervals": [{"kind": "rest", "start_s": 1, "end_s": 2}]}"#).unwrap();
        assert!(read_annotations(&p).is_err());
        fs::write(&p, r#"{"intervals": [{"kind": "dummy", "start_s": 3, "end_s": 2}]}"#).unwrap();
        assert!(read_annotations(&p).is_err());

        fs::write(&p, r#"{"intervals": []}"#).unwrap();
        assert!(read_annotations(&p).unwrap().intervals.is_empty());
    }

    #[test]
    fn scalogram_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sc.csv");
        let sc = Scalogram { freqs_hz: vec![0.5, 1.0], magnitudes: vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]] };
        write_scalogram_csv(&p, &sc, 2.0).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "freq_hz,0,0.5,1\n0.5,1,2,3\n1,4,5,6\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
