//! `GIDAT1` binary files: per-realization intensity records and accumulator
//! snapshots. Fixed 104-byte little-endian header followed by f64 payloads.
//!
//! ```text
//! 0   magic "GIDAT1"      6   version u8    7   kind u8 (0 records, 1 snapshot)
//! 8   x points u64        16  x pitch       24  x origin
//! 32  y points u64 (0 = 1D)  40  y pitch    48  y origin
//! 56  wavelength          64  d1    72  d2    80  d
//! 88  seed u64            96  count u64
//! records:  count × (i1, i2[P])
//! snapshot: s1, s2[P], s12[P]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::correlate::{AccumulatorSnapshot, CorrelationAccumulator};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

pub const MAGIC: &[u8; 6] = b"GIDAT1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 104;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FileKind {
    Records = 0,
    Snapshot = 1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordHeader {
    pub grid: Grid,
    pub wavelength: f64,
    pub d1: f64,
    pub d2: f64,
    pub d: f64,
    pub seed: u64,
    pub count: u64,
}

impl RecordHeader {
    fn encode(&self, kind: FileKind) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..6].copy_from_slice(MAGIC);
        h[6] = VERSION;
        h[7] = kind as u8;
        let mut put = |at: usize, b: [u8; 8]| h[at..at + 8].copy_from_slice(&b);
        let x = self.grid.x;
        put(8, (x.points as u64).to_le_bytes());
        put(16, x.pitch.to_le_bytes());
        put(24, x.origin.to_le_bytes());
        if let Some(y) = self.grid.y {
            put(32, (y.points as u64).to_le_bytes());
            put(40, y.pitch.to_le_bytes());
            put(48, y.origin.to_le_bytes());
        }
        put(56, self.wavelength.to_le_bytes());
        put(64, self.d1.to_le_bytes());
        put(72, self.d2.to_le_bytes());
        put(80, self.d.to_le_bytes());
        put(88, self.seed.to_le_bytes());
        put(96, self.count.to_le_bytes());
        h
    }

    fn decode(h: &[u8; HEADER_LEN], expected: FileKind) -> Result<Self> {
        if &h[..6] != MAGIC {
            return Err(Error::Format("bad magic, not a GIDAT1 file".into()));
        }
        if h[6] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", h[6])));
        }
        if h[7] != expected as u8 {
            return Err(Error::Format(format!("file kind {} where {} was expected", h[7], expected as u8)));
        }
        let word = |at: usize| -> [u8; 8] { h[at..at + 8].try_into().unwrap() };
        let f = |at: usize| f64::from_le_bytes(word(at));
        let u = |at: usize| u64::from_le_bytes(word(at));
        let points = |at: usize| usize::try_from(u(at)).map_err(|_| Error::Format("grid size overflows".into()));
        let axis = |p: usize, pitch: f64, origin: f64| {
            Axis::with_origin(p, pitch, origin).map_err(|e| Error::Format(format!("invalid grid: {e}")))
        };
        let x = axis(points(8)?, f(16), f(24))?;
        let y = match points(32)? {
            0 => None,
            n => Some(axis(n, f(40), f(48))?),
        };
        Ok(RecordHeader {
            grid: Grid::from_axes(x, y),
            wavelength: f(56),
            d1: f(64),
            d2: f(72),
            d: f(80),
            seed: u(88),
            count: u(96),
        })
    }
}

/// Streams records to disk; the count in the header is patched on [`Self::finish`].
pub struct RecordWriter {
    out: BufWriter<File>,
    header: RecordHeader,
    buf: Vec<u8>,
}

impl RecordWriter {
    pub fn create(path: &Path, mut header: RecordHeader) -> Result<Self> {
        header.count = 0;
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&header.encode(FileKind::Records))?;
        Ok(RecordWriter {
            out,
            header,
            buf: Vec::new(),
        })
    }

    pub fn push(&mut self, i1: f64, i2: &[f64]) -> Result<()> {
        if i2.len() != self.header.grid.len() {
            return Err(Error::GridMismatch(format!(
                "record has {} samples, header grid has {}",
                i2.len(),
                self.header.grid.len()
            )));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&i1.to_le_bytes());
        for v in i2 {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&self.buf)?;
        self.header.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.header.count
    }

    pub fn finish(mut self) -> Result<RecordHeader> {
        self.out.seek(SeekFrom::Start(0))?;
        self.out.write_all(&self.header.encode(FileKind::Records))?;
        self.out.flush()?;
        Ok(self.header)
    }
}

/// A fully loaded record file. `i2` holds `count` patterns back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineRecordFile {
    pub header: RecordHeader,
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
}

impl OfflineRecordFile {
    pub fn pattern(&self, index: usize) -> &[f64] {
        let p = self.header.grid.len();
        &self.i2[index * p..(index + 1) * p]
    }

    pub fn len(&self) -> usize {
        self.i1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i1.is_empty()
    }
}

pub fn write_records(path: &Path, header: RecordHeader, records: impl IntoIterator<Item = (f64, Vec<f64>)>) -> Result<RecordHeader> {
    let mut w = RecordWriter::create(path, header)?;
    for (i1, i2) in records {
        w.push(i1, &i2)?;
    }
    w.finish()
}

fn read_header(r: &mut impl Read, kind: FileKind) -> Result<RecordHeader> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("file shorter than the header".into()),
        _ => Error::Io(e),
    })?;
    RecordHeader::decode(&h, kind)
}

fn read_f64s(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file: {what} incomplete")),
        _ => Error::Io(e),
    })?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after the declared records".into()));
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<OfflineRecordFile> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r, FileKind::Records)?;
    let p = header.grid.len();
    let count = usize::try_from(header.count).map_err(|_| Error::Format("record count overflows".into()))?;
    let expected_len = (HEADER_LEN as u64).saturating_add(header.count.saturating_mul((p as u64 + 1) * 8));
    let actual_len = std::fs::metadata(path)?.len();
    if actual_len < expected_len {
        return Err(Error::Format(format!(
            "truncated file: header declares {count} records ({expected_len} bytes), file has {actual_len} bytes"
        )));
    }
    let mut i1 = Vec::with_capacity(count);
    let mut i2 = Vec::with_capacity(count * p);
    for k in 0..count {
        let rec = read_f64s(&mut r, p + 1, &format!("record {k}"))?;
        i1.push(rec[0]);
        i2.extend_from_slice(&rec[1..]);
    }
    expect_eof(&mut r)?;
    Ok(OfflineRecordFile { header, i1, i2 })
}

/// Writes accumulator totals; geometry fields are carried along for provenance.
pub fn write_snapshot(path: &Path, header: RecordHeader, acc: &CorrelationAccumulator) -> Result<()> {
    acc.grid().ensure_matches(&header.grid, "snapshot header grid")?;
    let snap = acc.snapshot();
    let header = RecordHeader {
        count: snap.count,
        ..header
    };
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&header.encode(FileKind::Snapshot))?;
    out.write_all(&snap.s1.to_le_bytes())?;
    for v in snap.s2.iter().chain(&snap.s12) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(RecordHeader, AccumulatorSnapshot)> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r, FileKind::Snapshot)?;
    let p = header.grid.len();
    let s1 = read_f64s(&mut r, 1, "s1")?[0];
    let s2 = read_f64s(&mut r, p, "s2")?;
    let s12 = read_f64s(&mut r, p, "s12")?;
    expect_eof(&mut r)?;
    Ok((
        header,
        AccumulatorSnapshot {
            grid: header.grid,
            count: header.count,
            s1,
            s2,
            s12,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn header(grid: Grid) -> RecordHeader {
        RecordHeader {
            grid,
            wavelength: 0.532e-6,
            d1: 0.06,
            d2: 0.075,
            d: 0.135,
            seed: 42,
            count: 0,
        }
    }

    fn random_records(n: usize, p: usize) -> Vec<(f64, Vec<f64>)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        (0..n)
            .map(|_| (rng.random::<f64>() * 3.0, (0..p).map(|_| rng.random::<f64>()).collect()))
            .collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.gidat");
        let grid = Grid::from_axes(Axis::with_origin(16, 1.557e-6, -0.7e-6).unwrap(), None);
        let recs = random_records(100, 16);
        let h = write_records(&path, header(grid), recs.clone()).unwrap();
        assert_eq!(h.count, 100);
        let f = read_records(&path).unwrap();
        assert_eq!(f.header, h);
        for (k, (i1, i2)) in recs.iter().enumerate() {
            assert_eq!(f.i1[k].to_bits(), i1.to_bits());
            assert_eq!(f.pattern(k), &i2[..]);
        }
    }

    #[test]
    fn two_dimensional_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.gidat");
        let grid = Grid::new_2d((4, 3), (1e-6, 2e-6)).unwrap();
        write_records(&path, header(grid), random_records(3, 12)).unwrap();
        assert_eq!(read_records(&path).unwrap().header.grid, grid);
    }

    #[test]
    fn corrupted_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.gidat");
        write_records(&path, header(Grid::new_1d(4, 1e-6).unwrap()), random_records(2, 4)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_records(&path), Err(Error::Format(_))));
        bytes[0] = b'G';
        bytes[6] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_records(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.gidat");
        write_records(&path, header(Grid::new_1d(4, 1e-6).unwrap()), random_records(5, 4)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_records(&path), Err(Error::Format(_))));
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0u8; 40]);
        std::fs::write(&path, &longer).unwrap();
        assert!(matches!(read_records(&path), Err(Error::Format(_))));
        std::fs::write(&path, &bytes[..50]).unwrap();
        assert!(matches!(read_records(&path), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_record_length() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RecordWriter::create(&dir.path().join("r"), header(Grid::new_1d(4, 1e-6).unwrap())).unwrap();
        assert!(matches!(w.push(1.0, &[0.0; 3]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn snapshot_round_trip_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new_1d(8, 1e-6).unwrap();
        let recs = random_records(50, 8);
        let rec_path = dir.path().join("r.gidat");
        write_records(&rec_path, header(grid), recs.clone()).unwrap();

        let mut live = CorrelationAccumulator::new(grid);
        for (i1, i2) in &recs {
            live.update_raw(*i1, i2).unwrap();
        }
        let file = read_records(&rec_path).unwrap();
        let mut replay = CorrelationAccumulator::new(file.header.grid);
        for k in 0..file.len() {
            replay.update_raw(file.i1[k], file.pattern(k)).unwrap();
        }
        assert_eq!(replay.finalize().unwrap(), live.finalize().unwrap());

        let snap_path = dir.path().join("s.gidat");
        write_snapshot(&snap_path, header(grid), &live).unwrap();
        let (h, snap) = read_snapshot(&snap_path).unwrap();
        assert_eq!(h.count, 50);
        assert_eq!(snap, live.snapshot());
        assert!(matches!(read_records(&snap_path), Err(Error::Format(_))));
    }
}
