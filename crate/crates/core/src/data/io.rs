//! Dataset file format and CSV export.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic "XVDS" | u32 version=1 | u32 M | u32 obs_dim | u64 record_count
//! per record: u64 sample_id | u32 identity | f64 viewpoint | obs_dim × f64
//! ```
//!
//! The split tag is not part of the file; it is assigned by the caller at
//! load time, so the payload round-trips bit for bit.

use super::{DataError, Dataset, SampleRecord, SplitTag};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"XVDS";
const VERSION: u32 = 1;

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    ds.validate()?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ds.num_identities.to_le_bytes())?;
    w.write_all(&(ds.obs_dim as u32).to_le_bytes())?;
    w.write_all(&(ds.records.len() as u64).to_le_bytes())?;
    for r in &ds.records {
        w.write_all(&r.sample_id.to_le_bytes())?;
        w.write_all(&r.identity.to_le_bytes())?;
        w.write_all(&r.viewpoint.to_le_bytes())?;
        for v in &r.observation {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_corrupt(
    r: &mut impl Read,
    buf: &mut [u8],
    what: &str,
) -> Result<(), DataError> {
    r.read_exact(buf)
        .map_err(|_| DataError::CorruptRecord(format!("truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32, DataError> {
    let mut b = [0u8; 4];
    read_exact_or_corrupt(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64, DataError> {
    let mut b = [0u8; 8];
    read_exact_or_corrupt(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, what: &str) -> Result<f64, DataError> {
    let mut b = [0u8; 8];
    read_exact_or_corrupt(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

/// Loads a dataset file, assigning it the given split tag.
pub fn load_dataset(path: &Path, split: SplitTag) -> Result<Dataset, DataError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or_corrupt(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(DataError::CorruptRecord(format!(
            "bad magic {magic:?}, not a dataset file"
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(DataError::FormatVersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let num_identities = read_u32(&mut r, "identity count")?;
    let obs_dim = read_u32(&mut r, "obs_dim")? as usize;
    let count = read_u64(&mut r, "record count")? as usize;

    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let what = format!("record {i}");
        let sample_id = read_u64(&mut r, &what)?;
        let identity = read_u32(&mut r, &what)?;
        let viewpoint = read_f64(&mut r, &what)?;
        let mut observation = vec![0.0; obs_dim];
        for v in observation.iter_mut() {
            *v = read_f64(&mut r, &what)?;
        }
        records.push(SampleRecord {
            sample_id,
            identity,
            viewpoint,
            observation,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DataError::CorruptRecord(
            "trailing bytes after final record".into(),
        ));
    }

    let ds = Dataset {
        records,
        num_identities,
        obs_dim,
        split,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes the dataset as CSV for inspection:
/// `sample_id,identity,viewpoint,obs_0..obs_{d-1}`.
pub fn export_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "sample_id,identity,viewpoint")?;
    for d in 0..ds.obs_dim {
        write!(w, ",obs_{d}")?;
    }
    writeln!(w)?;
    for r in &ds.records {
        write!(w, "{},{},{}", r.sample_id, r.identity, r.viewpoint)?;
        for v in &r.observation {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
