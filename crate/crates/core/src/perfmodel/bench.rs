//! Host measurements feeding the model: update-benchmark bandwidth and
//! in-L1 kernel cycles.

use std::hint::black_box;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::geometry::{ProjectionMatrix, VoxelGrid};
use crate::kernel::{line_update, pad_image, KernelConfig, LineSpan, ProjectionView};

use super::{MachineModel, Measured, CACHELINE_BYTES};

/// Clock assumed when `/proc/cpuinfo` is unavailable. Predicted GUPS do not
/// depend on it: measured cycles scale inversely with the assumed clock.
pub const FALLBACK_CLOCK_HZ: f64 = 2.0e9;

/// Nominal clock from `/proc/cpuinfo` (first `cpu MHz` entry), in Hz.
pub fn host_clock_hz() -> Option<f64> {
    let text = std::fs::read_to_string("/proc/cpuinfo").ok()?;
    text.lines()
        .filter(|l| l.starts_with("cpu MHz"))
        .find_map(|l| l.split(':').nth(1)?.trim().parse::<f64>().ok())
        .map(|mhz| mhz * 1e6)
}

/// Size of the highest cache level reported by sysfs, in bytes.
pub fn host_llc_bytes() -> Option<usize> {
    let base = std::path::Path::new("/sys/devices/system/cpu/cpu0/cache");
    let mut best: Option<(u32, usize)> = None;
    for entry in std::fs::read_dir(base).ok()?.flatten() {
        let read = |f: &str| std::fs::read_to_string(entry.path().join(f)).ok();
        let (Some(level), Some(size)) = (read("level"), read("size")) else {
            continue;
        };
        let level: u32 = level.trim().parse().ok()?;
        let size = size.trim();
        let bytes = match size.strip_suffix('K') {
            Some(k) => k.parse::<usize>().ok()? * 1024,
            None => match size.strip_suffix('M') {
                Some(m) => m.parse::<usize>().ok()? << 20,
                None => size.parse().ok()?,
            },
        };
        if best.map_or(true, |(l, _)| level > l) {
            best = Some((level, bytes));
        }
    }
    best.map(|(_, b)| b)
}

/// Update-benchmark length: `4 × LLC` bytes of f32 values, at least 32 MiB
/// and at most 1 GiB.
pub fn microbench_len(llc_bytes: Option<usize>) -> usize {
    let bytes = llc_bytes.map_or(64 << 20, |b| 4 * b).clamp(32 << 20, 1 << 30);
    bytes / 4
}

pub fn host_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Update benchmark `a[i] = s·a[i]` over `n` f32 values split across
/// `threads`. Returns the best of `reps` (at least 5) runs in bytes/s,
/// counting 8 bytes per element.
pub fn update_microbench(n: usize, threads: usize, reps: usize) -> Result<f64> {
    if n == 0 || threads == 0 {
        return Err(Error::Config("update benchmark needs n >= 1 and threads >= 1".into()));
    }
    let reps = reps.max(5);
    let mut data = vec![1.0f32; n];
    let chunk = n.div_ceil(threads);
    let mut best = Duration::MAX;
    for rep in 0..reps {
        let s = if rep % 2 == 0 { 1.000_001f32 } else { 0.999_999f32 };
        let t0 = Instant::now();
        std::thread::scope(|scope| {
            for part in data.chunks_mut(chunk) {
                scope.spawn(move || {
                    for v in part.iter_mut() {
                        *v *= s;
                    }
                    black_box(part);
                });
            }
        });
        best = best.min(t0.elapsed());
    }
    let secs = best.as_secs_f64();
    if secs <= 0.0 {
        return Err(Error::Measurement("update benchmark finished below timer resolution".into()));
    }
    Ok(8.0 * n as f64 / secs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTiming {
    /// Median cycles per `W`-wide iteration.
    pub cycles_per_iter: f64,
    /// Median seconds per voxel update (independent of the clock value).
    pub seconds_per_update: f64,
    /// Iterations in each timed batch.
    pub iters_per_batch: u64,
    pub batches: usize,
}

const MIN_ITERS_PER_BATCH: u64 = 10_000;
const MIN_BATCH: Duration = Duration::from_millis(2);
const BATCHES: usize = 21;

/// Times the f32 kernel on one voxel line with a small image so that line,
/// image and matrix stay L1-resident. `clock_hz` only converts seconds to
/// cycles.
pub fn measure_kernel_cycles(cfg: &KernelConfig, line_len: usize, clock_hz: f64) -> Result<KernelTiming> {
    if !(clock_hz > 0.0) {
        return Err(Error::Config(format!("clock must be positive, got {clock_hz}")));
    }
    let grid = VoxelGrid::new(line_len)?;
    let (isx, isy) = (64usize, 16usize);
    let raw: Vec<f32> = (0..isx * isy).map(|i| ((i * 37 % 101) as f32) / 101.0 + 0.5).collect();
    let image = pad_image::<f32>(&raw, isx, isy, cfg.lanes.get());
    // u sweeps [1, isx−3] along the line, v stays inside the image; w ≈ 1.
    let half = crate::geometry::VOLUME_EDGE_MM / 2.0;
    let su = (isx as f64 - 4.0) / (2.0 * half);
    let m = ProjectionMatrix::from_rows(
        [su, 0.0, 0.0, su * half + 1.0],
        [0.0, 0.01, 0.01, isy as f64 / 2.0],
        [1e-4, 0.0, 0.0, 1.0],
    );
    let a = m.narrow::<f32>();
    let view = ProjectionView {
        image: &image,
        matrix: &a,
    };
    let span = LineSpan::full(&grid, line_len / 2, line_len / 2);
    let mut line = vec![0.0f32; line_len];
    let steps = line_len.div_ceil(cfg.lanes.get()) as u64;

    let mut batch = |reps: u64| -> Duration {
        let t0 = Instant::now();
        for _ in 0..reps {
            black_box(line_update(black_box(&mut line), view, &grid, span, cfg));
        }
        t0.elapsed()
    };

    let mut reps = MIN_ITERS_PER_BATCH.div_ceil(steps).max(1);
    loop {
        let t = batch(reps);
        if t >= MIN_BATCH {
            break;
        }
        if reps > u64::MAX / 4 {
            return Err(Error::Measurement("timer resolution insufficient for kernel timing".into()));
        }
        reps *= 2;
    }

    let mut samples: Vec<f64> = (0..BATCHES).map(|_| batch(reps).as_secs_f64()).collect();
    samples.sort_by(f64::total_cmp);
    let median = samples[BATCHES / 2];
    if median <= 0.0 {
        return Err(Error::Measurement("timer resolution insufficient for kernel timing".into()));
    }
    let iters = reps * steps;
    Ok(KernelTiming {
        cycles_per_iter: median * clock_hz / iters as f64,
        seconds_per_update: median / (reps * line_len as u64) as f64,
        iters_per_batch: iters,
        batches: BATCHES,
    })
}

/// Single-socket model of this machine: measured kernel cycles for `cfg` and,
/// with `bandwidth`, the update benchmark on one thread and on all cores.
pub fn measure_host(cfg: &KernelConfig, line_len: usize, bandwidth: bool) -> Result<MachineModel> {
    let clock_hz = host_clock_hz().unwrap_or(FALLBACK_CLOCK_HZ);
    let cores = host_cores();
    let timing = measure_kernel_cycles(cfg, line_len, clock_hz)?;
    let mut measured = Measured {
        kernel_cycles_per_iter: Some(timing.cycles_per_iter),
        ..Measured::default()
    };
    if bandwidth {
        let n = microbench_len(host_llc_bytes());
        measured.update_bw_1thread = Some(update_microbench(n, 1, 5)?);
        let socket = update_microbench(n, cores, 5)?;
        measured.update_bw_socket = Some(socket);
        measured.update_bw_node = Some(socket);
    }
    Ok(MachineModel {
        name: "host".to_string(),
        clock_hz,
        cores_per_socket: cores,
        sockets: 1,
        lanes: cfg.lanes.get(),
        cacheline_bytes: CACHELINE_BYTES,
        measured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{LaneWidth, RecipMode};

    #[test]
    fn microbench_positive() {
        let bw = update_microbench(1 << 16, 1, 5).unwrap();
        assert!(bw > 0.0 && bw.is_finite());
        assert!(update_microbench(0, 1, 5).is_err());
    }

    #[test]
    fn microbench_len_bounds() {
        assert_eq!(microbench_len(Some(8 << 20)), 8 << 20);
        assert_eq!(microbench_len(Some(1 << 20)), 8 << 20);
        assert_eq!(microbench_len(Some(1 << 30)), 1 << 28);
        assert_eq!(microbench_len(None), 16 << 20);
    }

    #[test]
    fn kernel_timing_positive() {
        let t = measure_kernel_cycles(&KernelConfig::fast(LaneWidth::Four, RecipMode::Approx12), 128, 2e9).unwrap();
        assert!(t.cycles_per_iter > 0.0 && t.iters_per_batch >= MIN_ITERS_PER_BATCH);
        assert!(measure_kernel_cycles(&KernelConfig::oracle(), 128, 0.0).is_err());
    }

    #[test]
    fn host_model_predicts() {
        let m = measure_host(&KernelConfig::strict(LaneWidth::Eight), 64, false).unwrap();
        m.validate().unwrap();
        assert!(super::super::predict_socket(&m).unwrap().gups > 0.0);
    }
}
