//! On-disk spill segment format.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic          16 bytes   "EVALKIT-SPILL-01"
//! fingerprint    u64        XXH64 (seed 0) of the schema's canonical string
//! row_count      u64
//! column_count   u32
//! column × column_count:
//!   type_tag     u8         1 int, 2 float, 3 string, 4 string-sequence, 5 float-sequence
//!   block_len    u64        payload bytes that follow
//!   payload
//!     int            i64 per row
//!     float          f64 bits per row
//!     string         u32 byte length, UTF-8 bytes
//!     string-seq     u32 item count, then (u32 byte length, UTF-8 bytes) per item
//!     float-seq      u32 item count, then f64 bits per item
//! checksum       u64        XXH64 (seed 0) of every preceding byte
//! ```
//!
//! Columns appear in schema order. A segment is written through a buffered,
//! hashing writer and read back in full, checksum first.

use std::fs::File;
use std::hash::Hasher;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use evalkit_core::{Batch, Column, ColumnType, FeatureSchema};
use twox_hash::XxHash64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 16] = b"EVALKIT-SPILL-01";
const HEADER_LEN: usize = 16 + 8 + 8 + 4;

pub fn schema_fingerprint(schema: &FeatureSchema) -> u64 {
    XxHash64::oneshot(0, schema.canonical().as_bytes())
}

/// Metadata of a segment file written by [`write_segment`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentInfo {
    pub path: PathBuf,
    pub rows: usize,
    pub bytes: u64,
    pub checksum: u64,
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: XxHash64,
    written: u64,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.write(&buf[..n]);
        self.written += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn payload_len(col: &Column) -> u64 {
    let n = col.len() as u64;
    match col {
        Column::Int(_) | Column::Float(_) => 8 * n,
        Column::Str(v) => v.iter().map(|s| 4 + s.len() as u64).sum(),
        Column::StrSeq(v) => v
            .iter()
            .map(|seq| 4 + seq.iter().map(|s| 4 + s.len() as u64).sum::<u64>())
            .sum(),
        Column::FloatSeq(v) => v.iter().map(|seq| 4 + 8 * seq.len() as u64).sum(),
    }
}

fn len_u32(len: usize, path: &Path) -> Result<[u8; 4]> {
    u32::try_from(len).map(u32::to_le_bytes).map_err(|_| Error::CorruptSegment {
        path: path.to_path_buf(),
        reason: format!("value of length {len} exceeds the u32 length field"),
    })
}

fn write_column<W: Write>(w: &mut W, col: &Column, path: &Path) -> Result<()> {
    let io = |source| Error::SpillIo { path: path.to_path_buf(), source };
    match col {
        Column::Int(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        Column::Float(v) => {
            for x in v {
                w.write_all(&x.to_bits().to_le_bytes()).map_err(io)?;
            }
        }
        Column::Str(v) => {
            for s in v {
                w.write_all(&len_u32(s.len(), path)?).map_err(io)?;
                w.write_all(s.as_bytes()).map_err(io)?;
            }
        }
        Column::StrSeq(v) => {
            for seq in v {
                w.write_all(&len_u32(seq.len(), path)?).map_err(io)?;
                for s in seq {
                    w.write_all(&len_u32(s.len(), path)?).map_err(io)?;
                    w.write_all(s.as_bytes()).map_err(io)?;
                }
            }
        }
        Column::FloatSeq(v) => {
            for seq in v {
                w.write_all(&len_u32(seq.len(), path)?).map_err(io)?;
                for x in seq {
                    w.write_all(&x.to_bits().to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    Ok(())
}

/// Writes `batch` (already conformed to the schema behind `fingerprint`) to `path`.
pub fn write_segment(path: &Path, fingerprint: u64, batch: &Batch) -> Result<SegmentInfo> {
    let io = |source| Error::SpillIo { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    let mut w = HashingWriter {
        inner: BufWriter::with_capacity(1 << 16, file),
        hasher: XxHash64::with_seed(0),
        written: 0,
    };
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&fingerprint.to_le_bytes()).map_err(io)?;
    w.write_all(&(batch.num_rows() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(batch.num_columns() as u32).to_le_bytes()).map_err(io)?;
    for (_, col) in batch.columns() {
        w.write_all(&[col.ty().tag()]).map_err(io)?;
        w.write_all(&payload_len(col).to_le_bytes()).map_err(io)?;
        write_column(&mut w, col, path)?;
    }
    let checksum = w.hasher.finish();
    let bytes = w.written + 8;
    let mut inner = w.inner;
    inner.write_all(&checksum.to_le_bytes()).map_err(io)?;
    let file = inner.into_inner().map_err(|e| io(e.into_error()))?;
    file.sync_data().map_err(io)?;
    Ok(SegmentInfo { path: path.to_path_buf(), rows: batch.num_rows(), bytes, checksum })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptSegment { path: self.path.to_path_buf(), reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.corrupt(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid UTF-8 in string value"))
    }

    fn column(&mut self, ty: ColumnType, rows: usize) -> Result<Column> {
        Ok(match ty {
            ColumnType::Int => {
                Column::Int((0..rows).map(|_| self.u64().map(|v| v as i64)).collect::<Result<_>>()?)
            }
            ColumnType::Float => {
                Column::Float((0..rows).map(|_| self.u64().map(f64::from_bits)).collect::<Result<_>>()?)
            }
            ColumnType::Str => Column::Str((0..rows).map(|_| self.string()).collect::<Result<_>>()?),
            ColumnType::StrSeq => Column::StrSeq(
                (0..rows)
                    .map(|_| {
                        let k = self.u32()? as usize;
                        (0..k).map(|_| self.string()).collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?,
            ),
            ColumnType::FloatSeq => Column::FloatSeq(
                (0..rows)
                    .map(|_| {
                        let k = self.u32()? as usize;
                        (0..k).map(|_| self.u64().map(f64::from_bits)).collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

/// Reads a segment, verifying checksum, magic, fingerprint and shape.
pub fn read_segment(path: &Path, schema: &FeatureSchema) -> Result<Batch> {
    let buf = std::fs::read(path).map_err(|source| Error::SpillIo { path: path.to_path_buf(), source })?;
    if buf.len() < HEADER_LEN + 8 {
        return Err(Error::CorruptSegment {
            path: path.to_path_buf(),
            reason: format!("file is {} bytes, shorter than the fixed header", buf.len()),
        });
    }
    let (body, trailer) = buf.split_at(buf.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().unwrap());
    let computed = XxHash64::oneshot(0, body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { path: path.to_path_buf(), stored, computed });
    }
    let mut c = Cursor { buf: body, pos: 0, path };
    if c.take(16)? != MAGIC {
        return Err(c.corrupt("bad magic"));
    }
    if c.u64()? != schema_fingerprint(schema) {
        return Err(c.corrupt("schema fingerprint does not match the buffer's schema"));
    }
    let rows = usize::try_from(c.u64()?).map_err(|_| c.corrupt("row count overflows usize"))?;
    let ncols = c.u32()? as usize;
    if ncols != schema.len() {
        return Err(c.corrupt(format!("{ncols} columns, schema has {}", schema.len())));
    }
    let mut batch = Batch::new();
    for field in schema.fields() {
        let tag = c.u8()?;
        if ColumnType::from_tag(tag) != Some(field.ty) {
            return Err(c.corrupt(format!("column `{}` has type tag {tag}", field.name)));
        }
        let block = c.u64()? as usize;
        let start = c.pos;
        let col = c.column(field.ty, rows)?;
        if c.pos - start != block {
            return Err(c.corrupt(format!("column `{}` block length mismatch", field.name)));
        }
        batch.push_column(field.name.clone(), col)?;
    }
    if c.pos != body.len() {
        return Err(c.corrupt("trailing bytes after the last column"));
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new([
            ("i", ColumnType::Int),
            ("f", ColumnType::Float),
            ("s", ColumnType::Str),
            ("ss", ColumnType::StrSeq),
            ("fs", ColumnType::FloatSeq),
        ])
        .unwrap()
    }

    fn sample() -> Batch {
        Batch::new()
            .with("i", vec![1i64, -7])
            .with("f", vec![0.5, f64::NEG_INFINITY])
            .with("s", vec!["héllo", ""])
            .with("ss", vec![vec!["a".to_string(), "bc".to_string()], vec![]])
            .with("fs", vec![vec![1.0, -0.0], vec![f64::MIN_POSITIVE]])
    }

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg");
        let fp = schema_fingerprint(&schema());
        let info = write_segment(&path, fp, &sample()).unwrap();
        assert_eq!(info.bytes, std::fs::metadata(&path).unwrap().len());
        let back = read_segment(&path, &schema()).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.float_seqs("fs").unwrap()[0][1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg");
        write_segment(&path, 0xABCD, &Batch::new().with("x", vec![5i64])).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..16], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 0xABCD);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[32..36].try_into().unwrap()), 1);
        assert_eq!(bytes[36], 1);
        assert_eq!(u64::from_le_bytes(bytes[37..45].try_into().unwrap()), 8);
        assert_eq!(i64::from_le_bytes(bytes[45..53].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 53 + 8);
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg");
        write_segment(&path, schema_fingerprint(&schema()), &sample()).unwrap();
        let clean = std::fs::read(&path).unwrap();
        for i in 0..clean.len() {
            let mut bad = clean.clone();
            bad[i] ^= 0x10;
            std::fs::write(&path, &bad).unwrap();
            assert!(
                matches!(read_segment(&path, &schema()), Err(Error::ChecksumMismatch { .. })),
                "byte {i} not detected"
            );
        }
    }

    #[test]
    fn truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg");
        write_segment(&path, schema_fingerprint(&schema()), &sample()).unwrap();
        let clean = std::fs::read(&path).unwrap();
        std::fs::write(&path, &clean[..clean.len() - 3]).unwrap();
        assert!(read_segment(&path, &schema()).is_err());
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg");
        let one = FeatureSchema::new([("x", ColumnType::Int)]).unwrap();
        write_segment(&path, schema_fingerprint(&one), &Batch::new().with("x", vec![1i64])).unwrap();
        let other = FeatureSchema::new([("y", ColumnType::Int)]).unwrap();
        assert!(matches!(read_segment(&path, &other), Err(Error::CorruptSegment { .. })));
    }
}
