//! Trajectory binary format and CSV export.
//!
//! Layout: magic `FPD1`, u32 version = 1, u32 d, u64 count, f64 dt,
//! u64 seed, u32 rng-algorithm id, then `count * d` little-endian f64
//! values row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::sde::{TimeSeriesDataset, TrajectorySink};

pub const FPD_MAGIC: [u8; 4] = *b"FPD1";
pub const FPD_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpdHeader {
    pub version: u32,
    pub dim: u32,
    pub count: u64,
    pub dt: f64,
    pub seed: u64,
    pub rng_algorithm: u32,
}

impl FpdHeader {
    fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&FPD_MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&self.dim.to_le_bytes())?;
        w.write_all(&self.count.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.rng_algorithm.to_le_bytes())?;
        Ok(())
    }

    fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != FPD_MAGIC {
            return Err(CoreError::format("trajectory file: bad magic"));
        }
        let version = read_u32(r)?;
        if version != FPD_VERSION {
            return Err(CoreError::format(format!(
                "trajectory file: unsupported version {version}"
            )));
        }
        let dim = read_u32(r)?;
        let count = read_u64(r)?;
        let dt = f64::from_bits(read_u64(r)?);
        let seed = read_u64(r)?;
        let rng_algorithm = read_u32(r)?;
        if dim == 0 {
            return Err(CoreError::format("trajectory file: zero dimension"));
        }
        Ok(FpdHeader {
            version,
            dim,
            count,
            dt,
            seed,
            rng_algorithm,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Streaming writer; doubles as a [`TrajectorySink`] so simulation can write
/// states to disk as they are produced.
pub struct FpdWriter<W: Write> {
    w: W,
    header: FpdHeader,
    written: u64,
}

impl FpdWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: FpdHeader) -> Result<Self> {
        let file = File::create(path)?;
        FpdWriter::new(BufWriter::new(file), header)
    }
}

impl<W: Write> FpdWriter<W> {
    pub fn new(mut w: W, header: FpdHeader) -> Result<Self> {
        header.write_to(&mut w)?;
        Ok(FpdWriter {
            w,
            header,
            written: 0,
        })
    }

    pub fn push_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.header.dim as usize {
            return Err(CoreError::contract(format!(
                "FpdWriter: state dimension {} does not match header {}",
                state.len(),
                self.header.dim
            )));
        }
        for v in state {
            self.w.write_all(&v.to_le_bytes())?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.count {
            return Err(CoreError::format(format!(
                "FpdWriter: wrote {} states, header promised {}",
                self.written, self.header.count
            )));
        }
        self.w.flush()?;
        Ok(self.w)
    }
}

impl<W: Write> TrajectorySink for FpdWriter<W> {
    fn push(&mut self, state: &[f64]) -> Result<()> {
        self.push_state(state)
    }
}

/// Streaming reader over the row-major payload.
pub struct FpdReader<R: Read> {
    r: R,
    header: FpdHeader,
}

impl FpdReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| {
            CoreError::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        FpdReader::new(BufReader::new(file))
    }
}

impl<R: Read> FpdReader<R> {
    pub fn new(mut r: R) -> Result<Self> {
        let header = FpdHeader::read_from(&mut r)?;
        Ok(FpdReader { r, header })
    }

    pub fn header(&self) -> &FpdHeader {
        &self.header
    }

    /// Visit every state in order. The callback receives the state index and
    /// a reusable row buffer.
    pub fn for_each_state(
        mut self,
        mut f: impl FnMut(u64, &[f64]) -> Result<()>,
    ) -> Result<()> {
        let d = self.header.dim as usize;
        let mut raw = vec![0u8; d * 8];
        let mut row = vec![0.0f64; d];
        for n in 0..self.header.count {
            self.r.read_exact(&mut raw).map_err(|e| {
                CoreError::format(format!("trajectory file truncated at state {n}: {e}"))
            })?;
            for (k, chunk) in raw.chunks_exact(8).enumerate() {
                row[k] = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            f(n, &row)?;
        }
        Ok(())
    }
}

pub fn write_fpd(path: &Path, dataset: &TimeSeriesDataset) -> Result<()> {
    let header = FpdHeader {
        version: FPD_VERSION,
        dim: dataset.dim() as u32,
        count: dataset.n_states() as u64,
        dt: dataset.dt(),
        seed: dataset.seed(),
        rng_algorithm: dataset.rng_algorithm(),
    };
    let mut w = FpdWriter::create(path, header)?;
    let mut row = vec![0.0; dataset.dim()];
    for n in 0..dataset.n_states() {
        dataset.state_into(n, &mut row);
        w.push_state(&row)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_fpd(path: &Path) -> Result<TimeSeriesDataset> {
    let reader = FpdReader::open(path)?;
    let h = *reader.header();
    let d = h.dim as usize;
    let mut columns = vec![Vec::with_capacity(h.count as usize); d];
    reader.for_each_state(|_, row| {
        for (k, v) in row.iter().enumerate() {
            columns[k].push(*v);
        }
        Ok(())
    })?;
    let ds = TimeSeriesDataset::from_columns(columns, h.dt, h.seed).with_rng_algorithm(h.rng_algorithm);
    Ok(ds)
}

/// CSV export: header `t,x1,...,xd`, one row per state with `t = n * dt`.
pub fn write_csv(dataset: &TimeSeriesDataset, w: &mut impl Write) -> Result<()> {
    write!(w, "t")?;
    for k in 1..=dataset.dim() {
        write!(w, ",x{k}")?;
    }
    writeln!(w)?;
    let mut row = vec![0.0; dataset.dim()];
    for n in 0..dataset.n_states() {
        dataset.state_into(n, &mut row);
        write!(w, "{}", n as f64 * dataset.dt())?;
        for v in &row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
