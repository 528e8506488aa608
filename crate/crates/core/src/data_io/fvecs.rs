// fvecs: per record, a little-endian i32 `d` then `d` little-endian f32.
// bvecs: same header, then `d` unsigned bytes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::DataError;
use crate::types::VectorRecord;

pub fn load_fvecs(path: impl AsRef<Path>) -> Result<(usize, Vec<VectorRecord>), DataError> {
    read_fvecs(BufReader::new(File::open(path)?))
}

pub fn load_bvecs(path: impl AsRef<Path>) -> Result<(usize, Vec<VectorRecord>), DataError> {
    read_bvecs(BufReader::new(File::open(path)?))
}

pub fn read_fvecs(reader: impl Read) -> Result<(usize, Vec<VectorRecord>), DataError> {
    read_records(reader, 4, |bytes, out| {
        out.extend(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        )
    })
}

/// bvecs components are widened to `f32` on ingest.
pub fn read_bvecs(reader: impl Read) -> Result<(usize, Vec<VectorRecord>), DataError> {
    read_records(reader, 1, |bytes, out| {
        out.extend(bytes.iter().map(|b| *b as f32))
    })
}

fn read_records(
    mut reader: impl Read,
    component_size: usize,
    decode: impl Fn(&[u8], &mut Vec<f32>),
) -> Result<(usize, Vec<VectorRecord>), DataError> {
    let mut records = Vec::new();
    let mut dim: Option<usize> = None;
    let mut offset = 0u64;
    let mut body = Vec::new();
    loop {
        let mut header = [0u8; 4];
        match read_full(&mut reader, &mut header)? {
            0 => break,
            4 => {}
            _ => return Err(DataError::TruncatedRecord(offset)),
        }
        let declared = i32::from_le_bytes(header);
        if declared <= 0 {
            return Err(DataError::InvalidDimension {
                offset,
                dim: declared,
            });
        }
        let d = declared as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(DataError::InconsistentDimension(records.len()))
            }
            Some(_) => {}
        }
        body.resize(d * component_size, 0);
        if read_full(&mut reader, &mut body)? != body.len() {
            return Err(DataError::TruncatedRecord(offset));
        }
        let id = u32::try_from(records.len())
            .ok()
            .filter(|id| *id != u32::MAX)
            .ok_or(DataError::TooManyVectors)?;
        let mut values = Vec::with_capacity(d);
        decode(&body, &mut values);
        records.push(VectorRecord::new(id, values));
        offset += 4 + body.len() as u64;
    }
    match dim {
        Some(d) => Ok((d, records)),
        None => Err(DataError::EmptyFile),
    }
}

/// Reads until `buf` is full or EOF; returns the number of bytes read.
fn read_full(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Writes records in fvecs layout, in the order given.
pub fn write_fvecs<'a, I>(path: impl AsRef<Path>, records: I) -> Result<(), DataError>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut out = BufWriter::new(File::create(path)?);
    for values in records {
        let d = i32::try_from(values.len())
            .map_err(|_| DataError::InvalidDimension { offset: 0, dim: -1 })?;
        out.write_all(&d.to_le_bytes())?;
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fvecs_bytes(rows: &[&[f32]]) -> Vec<u8> {
        let mut out = Vec::new();
        for r in rows {
            out.extend((r.len() as i32).to_le_bytes());
            for v in *r {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn single_record() {
        let (d, recs) = read_fvecs(&fvecs_bytes(&[&[1.0, 2.0]])[..]).unwrap();
        assert_eq!(d, 2);
        assert_eq!(recs, vec![VectorRecord::new(0, vec![1.0, 2.0])]);
    }

    #[test]
    fn inconsistent_dimension() {
        let bytes = fvecs_bytes(&[&[1.0, 2.0], &[1.0, 2.0, 3.0]]);
        assert!(matches!(
            read_fvecs(&bytes[..]),
            Err(DataError::InconsistentDimension(1))
        ));
    }

    #[test]
    fn empty_and_truncated() {
        assert!(matches!(read_fvecs(&[][..]), Err(DataError::EmptyFile)));

        let mut bytes = fvecs_bytes(&[&[1.0, 2.0], &[3.0, 4.0]]);
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(
            read_fvecs(&bytes[..]),
            Err(DataError::TruncatedRecord(12))
        ));
        assert!(matches!(
            read_fvecs(&bytes[..14]),
            Err(DataError::TruncatedRecord(12))
        ));
    }

    #[test]
    fn non_positive_header() {
        let bytes = 0i32.to_le_bytes();
        assert!(matches!(
            read_fvecs(&bytes[..]),
            Err(DataError::InvalidDimension { offset: 0, dim: 0 })
        ));
    }

    #[test]
    fn bvecs_widen_to_float() {
        let mut bytes = Vec::new();
        bytes.extend(3i32.to_le_bytes());
        bytes.extend([0u8, 128, 255]);
        bytes.extend(3i32.to_le_bytes());
        bytes.extend([1u8, 2, 3]);
        let (d, recs) = read_bvecs(&bytes[..]).unwrap();
        assert_eq!(d, 3);
        assert_eq!(recs[0].values, vec![0.0, 128.0, 255.0]);
        assert_eq!(recs[1].id.0, 1);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.fvecs");
        let rows = [vec![0.5f32, -1.25, 3.0e-12], vec![f32::MAX, 0.0, -0.0]];
        write_fvecs(&path, rows.iter().map(Vec::as_slice)).unwrap();
        let (d, recs) = load_fvecs(&path).unwrap();
        assert_eq!(d, 3);
        for (r, orig) in recs.iter().zip(&rows) {
            let a: Vec<u32> = r.values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = orig.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }
}
