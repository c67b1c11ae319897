//! Columnar row accumulation with transparent spill to disk.
//!
//! Rows are appended to an in-memory chunk. When the chunk's heap footprint
//! exceeds the spill threshold it is written out as a checksummed segment
//! (see [`segment`]) and memory is released. Materialization reads the
//! segments back in write order followed by the live chunk, so the result is
//! row-for-row identical to what an unspilled buffer would hold.

pub mod segment;

use std::path::{Path, PathBuf};

use evalkit_core::{Batch, CoreError, FeatureSchema};
use tempfile::TempDir;

use crate::error::{Error, Result};
pub use segment::{read_segment, schema_fingerprint, write_segment, SegmentInfo};

pub const DEFAULT_SPILL_THRESHOLD: usize = 64 << 20;
pub const ENV_SPILL_THRESHOLD: &str = "EVALKIT_SPILL_THRESHOLD";
pub const ENV_SPILL_DIR: &str = "EVALKIT_SPILL_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferConfig {
    /// Heap bytes the in-memory chunk may hold before it is spilled.
    pub spill_threshold: usize,
    /// Parent directory for spill files; a private temp dir when `None`.
    pub spill_dir: Option<PathBuf>,
    /// Keep segment files after the buffer is dropped or reset.
    pub retain_segments: bool,
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig { spill_threshold: DEFAULT_SPILL_THRESHOLD, spill_dir: None, retain_segments: false }
    }
}

impl BufferConfig {
    /// Defaults overridden by `EVALKIT_SPILL_THRESHOLD` (bytes) and `EVALKIT_SPILL_DIR`.
    pub fn from_env() -> Self {
        let mut cfg = BufferConfig::default();
        if let Some(t) = std::env::var(ENV_SPILL_THRESHOLD).ok().and_then(|v| v.trim().parse().ok()) {
            cfg.spill_threshold = t;
        }
        if let Some(d) = std::env::var_os(ENV_SPILL_DIR).filter(|d| !d.is_empty()) {
            cfg.spill_dir = Some(PathBuf::from(d));
        }
        cfg
    }

    pub fn with_threshold(mut self, bytes: usize) -> Self {
        self.spill_threshold = bytes;
        self
    }

    pub fn with_spill_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.spill_dir = Some(dir.into());
        self
    }
}

#[derive(Debug)]
enum SpillDir {
    Unallocated,
    Temp(TempDir),
    Kept(PathBuf),
}

/// Append-only columnar buffer for one schema.
#[derive(Debug)]
pub struct ColumnarBuffer {
    schema: FeatureSchema,
    fingerprint: u64,
    config: BufferConfig,
    chunk: Batch,
    segments: Vec<SegmentInfo>,
    rows: usize,
    written: usize,
    dir: SpillDir,
}

impl ColumnarBuffer {
    pub fn new(schema: FeatureSchema, config: BufferConfig) -> Self {
        ColumnarBuffer {
            fingerprint: schema_fingerprint(&schema),
            chunk: Batch::empty(&schema),
            schema,
            config,
            segments: Vec::new(),
            rows: 0,
            written: 0,
            dir: SpillDir::Unallocated,
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.segments
    }

    /// Heap bytes held by the in-memory chunk.
    pub fn resident_bytes(&self) -> usize {
        self.chunk.heap_bytes()
    }

    /// Appends the rows of `batch`, which must match the schema exactly.
    pub fn append(&mut self, batch: Batch) -> Result<()> {
        let batch = batch.conform(&self.schema)?;
        let n = batch.num_rows();
        if n == 0 {
            return Err(CoreError::EmptyBatch.into());
        }
        self.chunk.extend(batch)?;
        self.rows += n;
        if self.chunk.heap_bytes() > self.config.spill_threshold {
            self.spill()?;
        }
        Ok(())
    }

    /// Writes the in-memory chunk to a new segment and releases its memory.
    pub fn spill(&mut self) -> Result<()> {
        if self.chunk.num_rows() == 0 {
            return Ok(());
        }
        let dir = self.spill_dir()?;
        let path = dir.join(format!("segment-{:06}.evks", self.written));
        let info = write_segment(&path, self.fingerprint, &self.chunk)?;
        self.segments.push(info);
        self.written += 1;
        self.chunk = Batch::empty(&self.schema);
        Ok(())
    }

    fn spill_dir(&mut self) -> Result<PathBuf> {
        if let SpillDir::Unallocated = self.dir {
            let parent = self.config.spill_dir.clone().unwrap_or_else(std::env::temp_dir);
            std::fs::create_dir_all(&parent)
                .map_err(|source| Error::SpillIo { path: parent.clone(), source })?;
            let tmp = tempfile::Builder::new()
                .prefix("evalkit-spill-")
                .tempdir_in(&parent)
                .map_err(|source| Error::SpillIo { path: parent.clone(), source })?;
            self.dir = if self.config.retain_segments {
                SpillDir::Kept(tmp.keep())
            } else {
                SpillDir::Temp(tmp)
            };
        }
        Ok(match &self.dir {
            SpillDir::Temp(t) => t.path().to_path_buf(),
            SpillDir::Kept(p) => p.clone(),
            SpillDir::Unallocated => unreachable!(),
        })
    }

    /// Directory holding this buffer's segments, once one has been written.
    pub fn spill_path(&self) -> Option<&Path> {
        match &self.dir {
            SpillDir::Temp(t) => Some(t.path()),
            SpillDir::Kept(p) => Some(p),
            SpillDir::Unallocated => None,
        }
    }

    /// Visits the buffered rows in append order, one segment (or the live chunk) at a time.
    pub fn for_each_chunk(&self, mut f: impl FnMut(Batch) -> Result<()>) -> Result<()> {
        for seg in &self.segments {
            f(read_segment(&seg.path, &self.schema)?)?;
        }
        if self.chunk.num_rows() > 0 {
            f(self.chunk.clone())?;
        }
        Ok(())
    }

    /// All buffered rows as one batch, in append order.
    pub fn materialize(&self) -> Result<Batch> {
        let mut out = Batch::empty(&self.schema);
        self.for_each_chunk(|b| Ok(out.extend(b)?))?;
        Ok(out)
    }

    /// Drops all rows and, unless retained, the segment files.
    pub fn reset(&mut self) {
        self.chunk = Batch::empty(&self.schema);
        if !self.config.retain_segments {
            for seg in &self.segments {
                let _ = std::fs::remove_file(&seg.path);
            }
        }
        self.segments.clear();
        self.rows = 0;
    }

    /// Materializes and resets in one step.
    pub fn take(&mut self) -> Result<Batch> {
        let batch = self.materialize()?;
        self.reset();
        Ok(batch)
    }

    /// Concatenates partition buffers, in the given order, into a new buffer.
    /// Data is streamed one segment at a time.
    pub fn merge(parts: &[&ColumnarBuffer], config: BufferConfig) -> Result<ColumnarBuffer> {
        let first = parts.first().ok_or(CoreError::EmptyInput)?;
        for p in &parts[1..] {
            if p.schema != first.schema {
                return Err(CoreError::IncompatibleSchemas(format!(
                    "cannot merge {} with {}",
                    first.schema, p.schema
                ))
                .into());
            }
        }
        let mut out = ColumnarBuffer::new(first.schema.clone(), config);
        for p in parts {
            p.for_each_chunk(|b| out.append(b))?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use evalkit_core::ColumnType;

    fn schema() -> FeatureSchema {
        FeatureSchema::new([("predictions", ColumnType::Int), ("text", ColumnType::Str)]).unwrap()
    }

    fn rows(start: i64, n: i64) -> Batch {
        Batch::new()
            .with("text", (start..start + n).map(|i| format!("row {i}")).collect::<Vec<_>>())
            .with("predictions", (start..start + n).collect::<Vec<_>>())
    }

    #[test]
    fn spills_and_restores_order() {
        let mut buf = ColumnarBuffer::new(schema(), BufferConfig::default().with_threshold(256));
        for k in 0..20 {
            buf.append(rows(k * 5, 5)).unwrap();
        }
        assert!(!buf.segments().is_empty());
        assert_eq!(buf.len(), 100);
        let all = buf.materialize().unwrap();
        assert_eq!(all.ints("predictions").unwrap(), (0..100).collect::<Vec<i64>>().as_slice());
        assert_eq!(all.column_names(), vec!["predictions", "text"]);
    }

    #[test]
    fn rejects_empty_and_mismatched_batches() {
        let mut buf = ColumnarBuffer::new(schema(), BufferConfig::default());
        assert!(matches!(buf.append(rows(0, 0)), Err(Error::Core(CoreError::EmptyBatch))));
        let wrong = Batch::new().with("predictions", vec![1i64]);
        assert!(matches!(buf.append(wrong), Err(Error::Core(CoreError::SchemaMismatch(_)))));
        assert!(buf.is_empty());
    }

    #[test]
    fn temp_dir_removed_on_drop() {
        let parent = tempfile::tempdir().unwrap();
        let cfg = BufferConfig::default().with_threshold(0).with_spill_dir(parent.path());
        let dir = {
            let mut buf = ColumnarBuffer::new(schema(), cfg);
            buf.append(rows(0, 3)).unwrap();
            let d = buf.spill_path().unwrap().to_path_buf();
            assert!(d.exists());
            d
        };
        assert!(!dir.exists());
    }

    #[test]
    fn retained_segments_survive_drop() {
        let parent = tempfile::tempdir().unwrap();
        let mut cfg = BufferConfig::default().with_threshold(0).with_spill_dir(parent.path());
        cfg.retain_segments = true;
        let seg = {
            let mut buf = ColumnarBuffer::new(schema(), cfg);
            buf.append(rows(0, 3)).unwrap();
            buf.segments()[0].path.clone()
        };
        assert!(seg.exists());
    }

    #[test]
    fn merge_concatenates_in_order() {
        let cfg = BufferConfig::default().with_threshold(64);
        let mut a = ColumnarBuffer::new(schema(), cfg.clone());
        let mut b = ColumnarBuffer::new(schema(), BufferConfig::default());
        a.append(rows(0, 10)).unwrap();
        b.append(rows(10, 4)).unwrap();
        let m = ColumnarBuffer::merge(&[&a, &b], cfg).unwrap();
        assert_eq!(m.len(), 14);
        assert_eq!(m.materialize().unwrap(), rows(0, 14).conform(&schema()).unwrap());
    }

    #[test]
    fn merge_rejects_different_schemas() {
        let a = ColumnarBuffer::new(schema(), BufferConfig::default());
        let other = FeatureSchema::new([("data", ColumnType::Int)]).unwrap();
        let b = ColumnarBuffer::new(other, BufferConfig::default());
        assert!(ColumnarBuffer::merge(&[&a, &b], BufferConfig::default()).is_err());
    }

    #[test]
    fn reset_deletes_segments() {
        let mut buf = ColumnarBuffer::new(schema(), BufferConfig::default().with_threshold(0));
        buf.append(rows(0, 2)).unwrap();
        let seg = buf.segments()[0].path.clone();
        let taken = buf.take().unwrap();
        assert_eq!(taken.num_rows(), 2);
        assert!(!seg.exists());
        assert!(buf.is_empty());
    }
}
