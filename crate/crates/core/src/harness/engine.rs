//! Deterministic chunked accumulation.
//!
//! Realizations are grouped into fixed chunks `[c·CHUNK, (c+1)·CHUNK)` counted from
//! index 0. Each chunk is accumulated sequentially in index order and chunks are
//! merged in chunk order. A checkpoint inside a chunk only pauses that chunk; it is
//! resumed later by the same sequential updates. The totals after `N` realizations
//! therefore depend on nothing but the first `N` records: neither the worker count
//! nor the checkpoint schedule changes a single bit.

use rayon::prelude::*;

use crate::correlate::CorrelationAccumulator;
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const CHUNK: u64 = 1024;

/// Raw intensities of consecutive realizations, kept when records are requested.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordBuffer {
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
}

impl RecordBuffer {
    pub fn push(&mut self, i1: f64, i2: &[f64]) {
        self.i1.push(i1);
        self.i2.extend_from_slice(i2);
    }

    fn append(&mut self, mut other: RecordBuffer) {
        self.i1.append(&mut other.i1);
        self.i2.append(&mut other.i2);
    }
}

/// Produces realizations `start..end` in order, updating `acc` and, when given,
/// appending the raw intensities to `records`.
pub trait Producer: Sync {
    fn produce(&self, start: u64, end: u64, acc: &mut CorrelationAccumulator, records: Option<&mut RecordBuffer>) -> Result<()>;
}

impl<F> Producer for F
where
    F: Fn(u64, u64, &mut CorrelationAccumulator, Option<&mut RecordBuffer>) -> Result<()> + Sync,
{
    fn produce(&self, start: u64, end: u64, acc: &mut CorrelationAccumulator, records: Option<&mut RecordBuffer>) -> Result<()> {
        self(start, end, acc, records)
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

#[derive(Debug, Clone)]
pub struct ChunkedAccumulator {
    completed: CorrelationAccumulator,
    partial: CorrelationAccumulator,
    pos: u64,
}

impl ChunkedAccumulator {
    pub fn new(grid: Grid) -> Self {
        ChunkedAccumulator {
            completed: CorrelationAccumulator::new(grid),
            partial: CorrelationAccumulator::new(grid),
            pos: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.pos
    }

    /// Totals over every realization consumed so far.
    pub fn current(&self) -> Result<CorrelationAccumulator> {
        if self.partial.count() == 0 {
            Ok(self.completed.clone())
        } else {
            CorrelationAccumulator::merged(&self.completed, &self.partial)
        }
    }

    /// Consumes realizations up to `target` (exclusive end index), running chunks on
    /// `pool`. Returns the raw records of the new realizations when `record` is set.
    pub fn advance(&mut self, target: u64, pool: &rayon::ThreadPool, record: bool, producer: &impl Producer) -> Result<Option<RecordBuffer>> {
        if target < self.pos {
            return Err(Error::InvalidArgument(format!(
                "cannot rewind from {} to {target} realizations",
                self.pos
            )));
        }
        let grid = *self.completed.grid();
        let mut pieces = Vec::new();
        let mut start = self.pos;
        while start < target {
            let end = ((start / CHUNK + 1) * CHUNK).min(target);
            let init = if start % CHUNK == 0 {
                CorrelationAccumulator::new(grid)
            } else {
                std::mem::replace(&mut self.partial, CorrelationAccumulator::new(grid))
            };
            pieces.push((start, end, init));
            start = end;
        }
        let done: Vec<(u64, CorrelationAccumulator, Option<RecordBuffer>)> = pool.install(|| {
            pieces
                .into_par_iter()
                .map(|(s, e, mut acc)| {
                    let mut rec = record.then(RecordBuffer::default);
                    producer.produce(s, e, &mut acc, rec.as_mut())?;
                    if acc.count() != e - (s / CHUNK) * CHUNK {
                        return Err(Error::InvalidArgument(format!(
                            "producer for {s}..{e} left {} samples in its chunk",
                            acc.count()
                        )));
                    }
                    Ok((e, acc, rec))
                })
                .collect::<Result<_>>()
        })?;
        let mut records = record.then(RecordBuffer::default);
        for (end, acc, rec) in done {
            if end % CHUNK == 0 {
                self.completed.merge(&acc)?;
            } else {
                self.partial = acc;
            }
            if let (Some(all), Some(rec)) = (records.as_mut(), rec) {
                all.append(rec);
            }
        }
        self.pos = target;
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pseudo-data depending only on the realization index.
    fn producer(p: usize) -> impl Producer {
        move |s: u64, e: u64, acc: &mut CorrelationAccumulator, mut rec: Option<&mut RecordBuffer>| -> Result<()> {
            let mut i2 = vec![0.0; p];
            for n in s..e {
                let i1 = ((n as f64) * 0.731).sin().abs() * 3.0;
                for (j, v) in i2.iter_mut().enumerate() {
                    *v = ((n as f64) * 0.37 + j as f64 * 1.3).cos().powi(2) * 2.0;
                }
                acc.update_raw(i1, &i2)?;
                if let Some(r) = rec.as_deref_mut() {
                    r.push(i1, &i2);
                }
            }
            Ok(())
        }
    }

    fn run(workers: usize, schedule: &[u64]) -> Vec<CorrelationAccumulator> {
        let grid = Grid::new_1d(5, 1.0).unwrap();
        let pool = thread_pool(workers).unwrap();
        let mut c = ChunkedAccumulator::new(grid);
        let prod = producer(5);
        schedule
            .iter()
            .map(|&n| {
                c.advance(n, &pool, false, &prod).unwrap();
                c.current().unwrap()
            })
            .collect()
    }

    #[test]
    fn independent_of_workers_and_schedule() {
        let a = run(1, &[5000]);
        let b = run(4, &[5000]);
        let c = run(8, &[1000, 1500, 3000, 4097, 5000]);
        assert_eq!(a[0], b[0]);
        assert_eq!(a[0], *c.last().unwrap());
        let d = run(3, &[1500]);
        assert_eq!(d[0], c[1]);
    }

    #[test]
    fn records_are_in_index_order() {
        let grid = Grid::new_1d(5, 1.0).unwrap();
        let pool = thread_pool(4).unwrap();
        let mut c = ChunkedAccumulator::new(grid);
        let prod = producer(5);
        let mut all = c.advance(1500, &pool, true, &prod).unwrap().unwrap();
        all.append(c.advance(3100, &pool, true, &prod).unwrap().unwrap());
        let mut direct = RecordBuffer::default();
        let mut scratch = CorrelationAccumulator::new(grid);
        prod.produce(0, 3100, &mut scratch, Some(&mut direct)).unwrap();
        assert_eq!(all, direct);
        assert!(c.advance(10, &pool, false, &prod).is_err());
    }
}
