//! Endpoint-sorted binary table files.
//!
//! Layout: a 52-byte header, then `record_count` 16-byte records, each
//! the little-endian end value followed by the little-endian start
//! value. Records are strictly ascending by end: the end column is the
//! search key, so keeping it first lets lookups read keys alone. The
//! header carries a CRC-32 of itself; record integrity is checked
//! functionally by attack-time chain regeneration instead of a bulk
//! checksum. Writes go to a temporary name and are renamed into place,
//! so readers never observe a half-written table.

use crate::tmto::{ChainMode, ChainRecord, TableParams};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"A5RT";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 52;
pub const RECORD_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:02x?}, not a table file")]
    BadMagic { found: [u8; 4] },
    #[error("format version {found}, this build reads {supported}")]
    VersionMismatch { found: u16, supported: u16 },
    #[error("header checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("unknown chain mode byte {0:#04x}")]
    BadMode(u8),
    #[error("records out of order at byte offset {offset}")]
    UnsortedRecords { offset: u64 },
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("writer given records not strictly ascending by end (index {0})")]
    UnsortedInput(usize),
    #[error("shard {path} parameters differ from {first}")]
    ParamsMismatch { path: PathBuf, first: PathBuf },
    #[error("no shards given to merge")]
    NoShards,
    #[error("record index {index} out of range ({count} records)")]
    RecordOutOfRange { index: u64, count: u64 },
    #[error("record at byte offset {offset} exceeds the {width}-bit state width")]
    RecordOutsideWidth { offset: u64, width: u32 },
}

/// CRC-32 with the standard reflected polynomial.
pub fn crc32(data: &[u8]) -> u32 {
    let mut c = !0u32;
    for &b in data {
        c = CRC_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    !c
}

static CRC_TABLE: [u32; 256] = make_crc_table();

const fn make_crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 == 1 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

fn mode_byte(mode: ChainMode) -> u8 {
    match mode {
        ChainMode::Fixed => 0,
        ChainMode::Dp => 1,
    }
}

fn encode_header(params: &TableParams, record_count: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[6] = params.state_width as u8;
    h[7] = mode_byte(params.mode);
    h[8..12].copy_from_slice(&params.n_colors.to_le_bytes());
    h[12..16].copy_from_slice(&params.steps_per_color.to_le_bytes());
    h[16..20].copy_from_slice(&params.dp_bits.to_le_bytes());
    h[20..24].copy_from_slice(&params.max_segment_steps.to_le_bytes());
    h[24..32].copy_from_slice(&params.table_id.to_le_bytes());
    h[32..40].copy_from_slice(&params.reduction_seed.to_le_bytes());
    h[40..48].copy_from_slice(&record_count.to_le_bytes());
    let crc = crc32(&h[..48]);
    h[48..52].copy_from_slice(&crc.to_le_bytes());
    h
}

fn decode_header(h: &[u8; HEADER_LEN]) -> Result<(TableParams, u64), StoreError> {
    if h[0..4] != MAGIC {
        return Err(StoreError::BadMagic {
            found: [h[0], h[1], h[2], h[3]],
        });
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let stored = u32::from_le_bytes(h[48..52].try_into().unwrap());
    let computed = crc32(&h[..48]);
    if stored != computed {
        return Err(StoreError::ChecksumMismatch { stored, computed });
    }
    let mode = match h[7] {
        0 => ChainMode::Fixed,
        1 => ChainMode::Dp,
        other => return Err(StoreError::BadMode(other)),
    };
    let params = TableParams {
        state_width: h[6] as u32,
        mode,
        n_colors: u32::from_le_bytes(h[8..12].try_into().unwrap()),
        steps_per_color: u32::from_le_bytes(h[12..16].try_into().unwrap()),
        dp_bits: u32::from_le_bytes(h[16..20].try_into().unwrap()),
        max_segment_steps: u32::from_le_bytes(h[20..24].try_into().unwrap()),
        table_id: u64::from_le_bytes(h[24..32].try_into().unwrap()),
        reduction_seed: u64::from_le_bytes(h[32..40].try_into().unwrap()),
    };
    let record_count = u64::from_le_bytes(h[40..48].try_into().unwrap());
    Ok((params, record_count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteSummary {
    pub records: u64,
    pub bytes: u64,
}

/// The conventional file name for one table of a set.
pub fn table_file_name(prefix: &str, table_id: u64) -> String {
    format!("{prefix}_t{table_id}.a5rt")
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".tmp");
    PathBuf::from(os)
}

/// Write a table file. Records must already be strictly ascending by
/// end value; anything else is rejected before any byte is written.
pub fn write_table(
    path: &Path,
    params: &TableParams,
    records: &[ChainRecord],
) -> Result<WriteSummary, StoreError> {
    for (i, pair) in records.windows(2).enumerate() {
        if pair[0].end >= pair[1].end {
            return Err(StoreError::UnsortedInput(i + 1));
        }
    }
    let tmp = tmp_path(path);
    let mut w = BufWriter::new(File::create(&tmp)?);
    w.write_all(&encode_header(params, records.len() as u64))?;
    for rec in records {
        w.write_all(&rec.end.to_le_bytes())?;
        w.write_all(&rec.start.to_le_bytes())?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(WriteSummary {
        records: records.len() as u64,
        bytes: (HEADER_LEN + RECORD_LEN * records.len()) as u64,
    })
}

/// A validated open table file with random access by record index and
/// binary search by end value.
#[derive(Debug)]
pub struct TableReader {
    file: File,
    path: PathBuf,
    params: TableParams,
    record_count: u64,
}

impl TableReader {
    /// Open and fully validate: magic, version, header checksum, exact
    /// file length, and a streaming scan of the whole record array
    /// checking strict sortedness and that every field fits the state
    /// width.
    pub fn open(path: &Path) -> Result<TableReader, StoreError> {
        let file = File::open(path)?;
        let actual = file.metadata()?.len();
        let mut header = [0u8; HEADER_LEN];
        if actual < HEADER_LEN as u64 {
            return Err(StoreError::Truncated {
                expected: HEADER_LEN as u64,
                actual,
            });
        }
        file.read_exact_at(&mut header, 0)?;
        let (params, record_count) = decode_header(&header)?;
        let expected = HEADER_LEN as u64 + RECORD_LEN as u64 * record_count;
        if actual != expected {
            return Err(StoreError::Truncated { expected, actual });
        }
        let reader = TableReader {
            file,
            path: path.to_path_buf(),
            params,
            record_count,
        };
        reader.check_records()?;
        Ok(reader)
    }

    fn check_records(&self) -> Result<(), StoreError> {
        let width = self.params.state_width;
        let mask = if width >= 64 {
            u64::MAX
        } else {
            (1u64 << width) - 1
        };
        let mut prev: Option<u64> = None;
        let mut iter = self.records()?;
        let mut index = 0u64;
        while let Some(rec) = iter.next_record()? {
            let offset = HEADER_LEN as u64 + RECORD_LEN as u64 * index;
            if rec.end & !mask != 0 || rec.start & !mask != 0 {
                return Err(StoreError::RecordOutsideWidth { offset, width });
            }
            if let Some(p) = prev {
                if rec.end <= p {
                    return Err(StoreError::UnsortedRecords { offset });
                }
            }
            prev = Some(rec.end);
            index += 1;
        }
        Ok(())
    }

    pub fn params(&self) -> &TableParams {
        &self.params
    }

    pub fn record_count(&self) -> u64 {
        self.record_count
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, index: u64) -> Result<ChainRecord, StoreError> {
        if index >= self.record_count {
            return Err(StoreError::RecordOutOfRange {
                index,
                count: self.record_count,
            });
        }
        let mut buf = [0u8; RECORD_LEN];
        self.file
            .read_exact_at(&mut buf, HEADER_LEN as u64 + RECORD_LEN as u64 * index)?;
        Ok(ChainRecord {
            end: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
            start: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
        })
    }

    fn end_at(&self, index: u64) -> Result<u64, StoreError> {
        let mut buf = [0u8; 8];
        self.file
            .read_exact_at(&mut buf, HEADER_LEN as u64 + RECORD_LEN as u64 * index)?;
        Ok(u64::from_le_bytes(buf))
    }

    /// Binary search the end column; `Some(start)` on an exact match.
    pub fn find_by_end(&self, end: u64) -> Result<Option<u64>, StoreError> {
        let mut lo = 0u64;
        let mut hi = self.record_count;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let e = self.end_at(mid)?;
            if e < end {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo < self.record_count && self.end_at(lo)? == end {
            Ok(Some(self.record(lo)?.start))
        } else {
            Ok(None)
        }
    }

    /// A fresh sequential reader over all records (separate file handle;
    /// does not disturb concurrent random access).
    pub fn records(&self) -> Result<RecordIter, StoreError> {
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(HEADER_LEN as u64))?;
        Ok(RecordIter {
            reader: BufReader::new(file),
            remaining: self.record_count,
        })
    }
}

pub struct RecordIter {
    reader: BufReader<File>,
    remaining: u64,
}

impl RecordIter {
    pub fn next_record(&mut self) -> Result<Option<ChainRecord>, StoreError> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let mut buf = [0u8; RECORD_LEN];
        self.reader.read_exact(&mut buf)?;
        self.remaining -= 1;
        Ok(Some(ChainRecord {
            end: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
            start: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeSummary {
    pub records_in: u64,
    pub records_out: u64,
    pub merged: u64,
}

/// Streaming k-way merge of sorted shards that share identical
/// parameters, deduplicating equal ends by keeping the smallest start,
/// the same rule the in-memory build uses, so shard-wise generation and
/// one-shot generation agree byte for byte.
pub fn merge_shards(shards: &[PathBuf], out: &Path) -> Result<MergeSummary, StoreError> {
    let readers = shards
        .iter()
        .map(|p| TableReader::open(p))
        .collect::<Result<Vec<_>, _>>()?;
    let first = readers.first().ok_or(StoreError::NoShards)?;
    for r in &readers[1..] {
        if r.params() != first.params() {
            return Err(StoreError::ParamsMismatch {
                path: r.path().to_path_buf(),
                first: first.path().to_path_buf(),
            });
        }
    }
    let params = *first.params();

    let mut iters = Vec::with_capacity(readers.len());
    let mut heap = BinaryHeap::new();
    let mut records_in = 0u64;
    for (i, r) in readers.iter().enumerate() {
        let mut it = r.records()?;
        if let Some(rec) = it.next_record()? {
            heap.push(Reverse((rec.end, rec.start, i)));
        }
        records_in += r.record_count();
        iters.push(it);
    }

    let tmp = tmp_path(out);
    let mut w = BufWriter::new(File::create(&tmp)?);
    w.write_all(&[0u8; HEADER_LEN])?;

    let mut records_out = 0u64;
    let mut current: Option<ChainRecord> = None;
    while let Some(Reverse((end, start, i))) = heap.pop() {
        if let Some(rec) = iters[i].next_record()? {
            heap.push(Reverse((rec.end, rec.start, i)));
        }
        match current {
            Some(cur) if cur.end == end => {
                // Same end: the heap yields starts in ascending order,
                // so the held record already has the smallest start.
                debug_assert!(cur.start <= start);
            }
            Some(cur) => {
                w.write_all(&cur.end.to_le_bytes())?;
                w.write_all(&cur.start.to_le_bytes())?;
                records_out += 1;
                current = Some(ChainRecord { start, end });
            }
            None => current = Some(ChainRecord { start, end }),
        }
    }
    if let Some(cur) = current {
        w.write_all(&cur.end.to_le_bytes())?;
        w.write_all(&cur.start.to_le_bytes())?;
        records_out += 1;
    }
    w.flush()?;
    let mut file = w.into_inner().map_err(|e| e.into_error())?;
    file.seek(SeekFrom::Start(0))?;
    file.write_all(&encode_header(&params, records_out))?;
    file.sync_all()?;
    fs::rename(&tmp, out)?;
    Ok(MergeSummary {
        records_in,
        records_out,
        merged: records_in - records_out,
    })
}
