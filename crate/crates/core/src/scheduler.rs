//! Parallel reconstruction driver.
//!
//! z-slices are dealt to worker threads round-robin in chunks. Projections are
//! consumed in blocks of `b`: the images of a block are padded once per
//! locality domain, then every thread runs the line kernel `b` times on each
//! of its voxel rows, keeping the row in a local buffer in between. A barrier
//! separates consecutive blocks.

use std::io::Write as _;
use std::sync::{Barrier, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::ProjectionStack;
use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::kernel::{line_update, KernelConfig, LineSpan, PaddedImage, ProjectionView, Volume};
use crate::precompute::{build_clip_table, ClipTable};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub threads: usize,
    /// Slices per scheduling chunk; 1 is the cyclic distribution.
    pub chunk: usize,
    /// Projection block factor `b`.
    pub block: usize,
    pub kernel: KernelConfig,
    pub clip: bool,
    /// Locality domains holding their own padded image copies.
    pub numa_domains: usize,
    /// Print a percentage line to stderr while running.
    #[serde(default)]
    pub progress: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            threads: 1,
            chunk: 1,
            block: 1,
            kernel: KernelConfig::default(),
            clip: true,
            numa_domains: 1,
            progress: false,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if self.chunk == 0 {
            return Err(Error::Config("chunk must be >= 1".into()));
        }
        if self.block == 0 {
            return Err(Error::Config("block factor must be >= 1".into()));
        }
        if self.numa_domains == 0 {
            return Err(Error::Config("numa_domains must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Wall time including image padding/copying, excluding volume zeroing.
    pub wall_seconds: f64,
    pub updates: u64,
    pub gups: f64,
    pub per_thread_updates: Vec<u64>,
    pub bytes_copied: u64,
    /// Voxels written back from the line buffers to the volume.
    pub voxel_writebacks: u64,
    pub blocks: usize,
}

impl RunStats {
    /// Voxel memory traffic assuming one load and one store per written-back
    /// voxel (8 bytes for f32).
    pub fn voxel_traffic_bytes(&self, elem_bytes: usize) -> u64 {
        self.voxel_writebacks * 2 * elem_bytes as u64
    }

    /// `max / min` of per-thread update counts (1.0 is perfect balance).
    pub fn imbalance(&self) -> f64 {
        imbalance(&self.per_thread_updates)
    }
}

/// `max / min` over the counts; infinite if some thread had no work.
pub fn imbalance(counts: &[u64]) -> f64 {
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().min().unwrap_or(0);
    if min == 0 {
        if max == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        max as f64 / min as f64
    }
}

/// Giga-updates per second with SI prefix.
pub fn gups(updates: u64, seconds: f64) -> f64 {
    updates as f64 / seconds / 1e9
}

/// Round-robin assignment of `chunk`-sized groups of z-slices to threads.
pub fn partition_slices(l: usize, threads: usize, chunk: usize) -> Vec<Vec<usize>> {
    assert!(threads >= 1 && chunk >= 1);
    let mut parts = vec![Vec::new(); threads];
    for (c, start) in (0..l).step_by(chunk).enumerate() {
        parts[c % threads].extend(start..(start + chunk).min(l));
    }
    parts
}

/// Voxel updates each thread would perform for a partition.
pub fn thread_work(parts: &[Vec<usize>], l: usize, views: usize, clip: Option<&ClipTable>) -> Vec<u64> {
    parts
        .iter()
        .map(|zs| {
            zs.iter()
                .map(|&z| match clip {
                    Some(t) => t.slice_updates(z),
                    None => (views * l * l) as u64,
                })
                .sum()
        })
        .collect()
}

/// Domain of thread `t` when `threads` workers are split into `domains`
/// contiguous groups.
fn domain_of(t: usize, threads: usize, domains: usize) -> usize {
    t * domains / threads
}

struct WorkerResult {
    updates: u64,
    writebacks: u64,
    bytes_copied: u64,
}

/// Backprojects every image of `stack` into a fresh volume on `grid`.
///
/// With `cfg.clip` set, `clip` is used if given, otherwise a table is built
/// before timing starts.
pub fn reconstruct<T: Real>(
    stack: &ProjectionStack,
    grid: &VoxelGrid,
    cfg: &RunConfig,
    clip: Option<&ClipTable>,
) -> Result<(Volume<T>, RunStats)> {
    cfg.validate()?;
    stack.check()?;
    for (i, m) in stack.matrices.iter().enumerate() {
        m.validate_for_grid(grid)
            .map_err(|reason| Error::InvalidMatrix { index: i, reason })?;
    }
    let l = grid.size();
    let views = stack.count();

    let built;
    let table = if cfg.clip {
        match clip {
            Some(t) => {
                if t.size() != l || t.count() != views {
                    return Err(Error::Dimension(format!(
                        "clip table is for L={} x {} views, run needs L={l} x {views}",
                        t.size(),
                        t.count()
                    )));
                }
                Some(t)
            }
            None => {
                built = build_clip_table(grid, &stack.matrices, stack.isx, stack.isy)?;
                Some(&built)
            }
        }
    } else {
        None
    };

    let threads = cfg.threads;
    let domains = cfg.numa_domains.min(threads);
    let b = cfg.block;
    let lanes = cfg.kernel.lanes.get();
    let kcfg = cfg.kernel;
    let matrices: Vec<[T; 12]> = stack.matrices.iter().map(|m| m.narrow::<T>()).collect();
    let parts = partition_slices(l, threads, cfg.chunk);
    let n_blocks = views.div_ceil(b);

    let mut volume = Volume::<T>::zeros(*grid);
    let mut slots: Vec<Option<&mut [T]>> = volume.as_mut_slice().chunks_mut(l * l).map(Some).collect();
    let owned: Vec<Vec<(usize, &mut [T])>> = parts
        .iter()
        .map(|zs| zs.iter().map(|&z| (z, slots[z].take().unwrap())).collect())
        .collect();

    let buffers: Vec<RwLock<Vec<PaddedImage<T>>>> = (0..domains).map(|_| RwLock::new(Vec::new())).collect();
    let start = Barrier::new(threads + 1);
    let step = Barrier::new(threads);

    let (elapsed, results) = std::thread::scope(|s| {
        let handles: Vec<_> = owned
            .into_iter()
            .enumerate()
            .map(|(t, mut mine)| {
                let d = domain_of(t, threads, domains);
                let leader = t == 0 || domain_of(t - 1, threads, domains) != d;
                let (buffers, start, step, matrices) = (&buffers, &start, &step, &matrices);
                s.spawn(move || {
                    // Zero-touch the owned slices before timing starts.
                    for (_, slice) in mine.iter_mut() {
                        slice.fill(T::zero());
                    }
                    start.wait();

                    let mut line_buf = vec![T::zero(); l];
                    let mut spans: Vec<Option<(usize, usize)>> = Vec::with_capacity(b);
                    let mut res = WorkerResult {
                        updates: 0,
                        writebacks: 0,
                        bytes_copied: 0,
                    };
                    for blk in 0..n_blocks {
                        let p0 = blk * b;
                        let p1 = (p0 + b).min(views);
                        if leader {
                            let mut imgs = buffers[d].write().unwrap();
                            imgs.resize_with(p1 - p0, || PaddedImage::zeroed(stack.isx, stack.isy, lanes));
                            for (k, img) in imgs.iter_mut().enumerate() {
                                img.fill_from(stack.image(p0 + k));
                                res.bytes_copied += img.size_bytes() as u64;
                            }
                        }
                        step.wait();
                        {
                            let imgs = buffers[d].read().unwrap();
                            for (z, slice) in mine.iter_mut() {
                                let z = *z;
                                for y in 0..l {
                                    spans.clear();
                                    let (mut lo, mut hi) = (usize::MAX, 0);
                                    for p in p0..p1 {
                                        let r = match table {
                                            Some(t) => t.range(p, z, y),
                                            None => Some((0, l - 1)),
                                        };
                                        if let Some((a, c)) = r {
                                            lo = lo.min(a);
                                            hi = hi.max(c);
                                        }
                                        spans.push(r);
                                    }
                                    if lo > hi {
                                        continue;
                                    }
                                    let row = &mut slice[y * l..(y + 1) * l];
                                    line_buf[lo..=hi].copy_from_slice(&row[lo..=hi]);
                                    for (k, span) in spans.iter().enumerate() {
                                        if let Some((x0, x1)) = *span {
                                            let view = ProjectionView {
                                                image: &imgs[k],
                                                matrix: &matrices[p0 + k],
                                            };
                                            res.updates +=
                                                line_update(&mut line_buf, view, grid, LineSpan { y, z, x0, x1 }, &kcfg)
                                                    as u64;
                                        }
                                    }
                                    row[lo..=hi].copy_from_slice(&line_buf[lo..=hi]);
                                    res.writebacks += (hi - lo + 1) as u64;
                                }
                            }
                        }
                        step.wait();
                        if cfg.progress && t == 0 {
                            let pct = 100 * (blk + 1) / n_blocks;
                            eprint!("\rreconstruct: {pct:3}%");
                            if blk + 1 == n_blocks {
                                eprintln!();
                            }
                            let _ = std::io::stderr().flush();
                        }
                    }
                    res
                })
            })
            .collect();

        start.wait();
        let t0 = Instant::now();
        let results: Vec<_> = handles.into_iter().map(|h| h.join()).collect();
        (t0.elapsed().as_secs_f64(), results)
    });

    let mut per_thread_updates = Vec::with_capacity(threads);
    let (mut writebacks, mut bytes_copied) = (0, 0);
    for r in results {
        let r = r.map_err(|_| Error::Run("worker thread panicked".into()))?;
        per_thread_updates.push(r.updates);
        writebacks += r.writebacks;
        bytes_copied += r.bytes_copied;
    }
    let updates = per_thread_updates.iter().sum();
    let stats = RunStats {
        wall_seconds: elapsed,
        updates,
        gups: gups(updates, elapsed),
        per_thread_updates,
        bytes_copied,
        voxel_writebacks: writebacks,
        blocks: n_blocks,
    };
    Ok((volume, stats))
}
