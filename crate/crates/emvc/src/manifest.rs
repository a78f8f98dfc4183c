//! Manifest CSV reading and writing.

use std::path::Path;

use emvc_core::data::{check_streams, DrivingSample, MANIFEST_HEADER};

use crate::error::{CliError, Result};

pub fn read_manifest(path: &Path) -> Result<Vec<DrivingSample>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_manifest(file, path)
}

pub fn parse_manifest(input: impl std::io::Read, path: &Path) -> Result<Vec<DrivingSample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rdr.headers().map_err(|e| CliError::Operational(format!("{}: {e}", path.display())))?;
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(CliError::Operational(format!(
            "{}: header must be `{}`",
            path.display(),
            MANIFEST_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Operational(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let fields: Vec<&str> = rec.iter().collect();
        out.push(DrivingSample::from_fields(&fields, line)?);
    }
    check_streams(&out)?;
    Ok(out)
}

pub fn write_manifest(path: &Path, samples: &[DrivingSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Operational(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| CliError::Operational(format!("{}: {e}", path.display()));
    w.write_record(MANIFEST_HEADER).map_err(wrap)?;
    for s in samples {
        w.write_record(s.to_fields()).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
