use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::{DataError, ProfileSet, Result, SampleRecord};

pub const DATASET_HEADER: [&str; 6] = ["case", "station", "x", "y", "k_rans", "k_dns"];

/// Freestream velocities live next to the dataset: `flow.csv` → `flow.uinf.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("uinf.json")
}

/// Parses dataset rows. Each record carries its 1-based source line.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<(u64, SampleRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().ne(DATASET_HEADER.iter().copied()) {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected header '{}'", DATASET_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let record: SampleRecord = row.deserialize(Some(&header)).map_err(|e| DataError::Parse {
            line,
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        out.push((line, record));
    }
    Ok(out)
}

/// Loads a CSV dataset. Freestream velocities come from `u_inf_override`
/// (applied to every case) or else from the sidecar JSON.
pub fn load_dataset(path: &Path, u_inf_override: Option<f64>) -> Result<ProfileSet> {
    let records = read_records(BufReader::new(File::open(path)?))?;
    let u_inf = match u_inf_override {
        Some(u) => {
            if !(u > 0.0) {
                return Err(DataError::NonPositiveFreestream { value: u });
            }
            records.iter().map(|(_, r)| (r.case_id.clone(), u)).collect()
        }
        None => {
            let sidecar = sidecar_path(path);
            if sidecar.exists() {
                serde_json::from_reader::<_, BTreeMap<String, f64>>(BufReader::new(File::open(sidecar)?))?
            } else {
                BTreeMap::new()
            }
        }
    };
    ProfileSet::from_records(records, u_inf)
}

/// Writes rows with shortest round-trip decimal formatting.
pub fn write_records<W: Write>(writer: W, records: impl IntoIterator<Item = SampleRecord>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DATASET_HEADER)?;
    for r in records {
        w.write_record([
            r.case_id,
            r.station.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.k_rans.to_string(),
            r.k_dns.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the CSV and its freestream sidecar.
pub fn write_dataset(ps: &ProfileSet, path: &Path) -> Result<()> {
    write_records(std::io::BufWriter::new(File::create(path)?), ps.records())?;
    let mut sidecar = serde_json::to_string_pretty(&ps.u_inf)?;
    sidecar.push('\n');
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}
