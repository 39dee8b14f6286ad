//! Performance model for the backprojection.
//!
//! Two simple upper bounds (arithmetic throughput, streaming bandwidth) and a
//! cacheline-transfer model that scales measured in-L1 kernel cycles to a full
//! 64-byte voxel cacheline. All formulas are pure; the `bench` submodule
//! provides the host measurements that feed them.

mod bench;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bench::{
    host_clock_hz, host_cores, host_llc_bytes, measure_host, measure_kernel_cycles, microbench_len, update_microbench,
    KernelTiming, FALLBACK_CLOCK_HZ,
};

/// Cycles per vectorized update (one `W`-wide iteration) assuming full
/// vectorization, one add and one multiply per cycle and a pipelined reciprocal.
pub const ARITH_CYCLES_PER_ITER: f64 = 21.0;

/// Bytes of voxel traffic per update: one load and one store of an f32.
pub const BYTES_PER_UPDATE: f64 = 8.0;

pub const CACHELINE_BYTES: usize = 64;

/// Cycles to move one cacheline between adjacent cache levels.
pub const CYCLES_PER_LINE_TRANSFER: f64 = 2.0;

/// Schema tag of the JSON reports.
pub const REPORT_SCHEMA: &str = "conebeam.perf-report/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measured {
    /// Update-benchmark bandwidths in bytes/s.
    pub update_bw_1thread: Option<f64>,
    pub update_bw_socket: Option<f64>,
    pub update_bw_node: Option<f64>,
    /// Cycles per `W`-wide kernel iteration with all operands in L1.
    pub kernel_cycles_per_iter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineModel {
    pub name: String,
    pub clock_hz: f64,
    pub cores_per_socket: usize,
    pub sockets: usize,
    /// Lane width `W` of the kernel the model describes.
    pub lanes: usize,
    #[serde(default = "default_cacheline")]
    pub cacheline_bytes: usize,
    #[serde(default)]
    pub measured: Measured,
}

fn default_cacheline() -> usize {
    CACHELINE_BYTES
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl MachineModel {
    pub fn validate(&self) -> Result<()> {
        positive("clock_hz", self.clock_hz)?;
        if self.cores_per_socket == 0 || self.sockets == 0 || self.lanes == 0 {
            return Err(Error::Config("cores, sockets and lanes must be >= 1".into()));
        }
        if self.cacheline_bytes != CACHELINE_BYTES {
            return Err(Error::Config(format!(
                "cacheline is fixed at {CACHELINE_BYTES} bytes, got {}",
                self.cacheline_bytes
            )));
        }
        let m = &self.measured;
        for (name, v) in [
            ("update_bw_1thread", m.update_bw_1thread),
            ("update_bw_socket", m.update_bw_socket),
            ("update_bw_node", m.update_bw_node),
            ("kernel_cycles_per_iter", m.kernel_cycles_per_iter),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let m: MachineModel = toml::from_str(s).map_err(|e| Error::Config(format!("machine file: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("machine model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn cores(&self) -> usize {
        self.sockets * self.cores_per_socket
    }

    /// Voxels per cacheline (16 for f32).
    pub fn voxels_per_cacheline(&self) -> f64 {
        self.cacheline_bytes as f64 / 4.0
    }

    /// Published test machines: `HPT`, `WEM`, `WEX`, `SNB` (AVX kernel) and
    /// `SNB-SSE`. Kernel cycles are those of the best kernel variant.
    pub fn preset(name: &str) -> Option<Self> {
        let gb = 1e9;
        let mk = |name: &str, clock: f64, sockets, cores, lanes, bw: [f64; 3], cycles: f64| MachineModel {
            name: name.to_string(),
            clock_hz: clock * 1e9,
            cores_per_socket: cores,
            sockets,
            lanes,
            cacheline_bytes: CACHELINE_BYTES,
            measured: Measured {
                update_bw_1thread: Some(bw[0] * gb),
                update_bw_socket: Some(bw[1] * gb),
                update_bw_node: Some(bw[2] * gb),
                kernel_cycles_per_iter: Some(cycles),
            },
        };
        match name.to_ascii_uppercase().as_str() {
            "HPT" => Some(mk("HPT", 3.2, 2, 4, 4, [5.9, 6.2, 8.4], 57.4)),
            "WEM" => Some(mk("WEM", 2.93, 2, 6, 4, [15.2, 20.3, 39.1], 51.5)),
            "WEX" => Some(mk("WEX", 2.40, 4, 10, 4, [8.3, 24.6, 98.7], 54.7)),
            // Single socket: the socket figure is also the node figure.
            "SNB" => Some(mk("SNB", 3.5, 1, 4, 8, [16.5, 17.3, 17.3], 76.2)),
            "SNB-SSE" => Some(mk("SNB-SSE", 3.5, 1, 4, 4, [16.5, 17.3, 17.3], 44.4)),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 5] = ["HPT", "WEM", "WEX", "SNB", "SNB-SSE"];
}

/// Node GUPS if the kernel were limited only by arithmetic:
/// `sockets · cores · W · clock / 21`.
pub fn arithmetic_bound(m: &MachineModel) -> f64 {
    m.cores() as f64 * m.lanes as f64 * m.clock_hz / ARITH_CYCLES_PER_ITER / 1e9
}

/// Node GUPS if limited only by voxel streaming: `update_bw_node / 8 B`.
pub fn bandwidth_bound(m: &MachineModel) -> Option<f64> {
    m.measured.update_bw_node.map(|bw| bw / BYTES_PER_UPDATE / 1e9)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocketPrediction {
    /// In-core cycles for one cacheline update: `(16/W) · kernel cycles`.
    pub cacheline_cycles: f64,
    /// L1↔L2 load plus evict of the voxel line. Reported separately: the
    /// in-core term dominates and sets the prediction.
    pub transfer_cycles: f64,
    /// Required voxel bandwidth per core and per socket (bytes/s).
    pub bw_per_core: f64,
    pub bw_per_socket: f64,
    /// Predicted socket throughput (GUPS).
    pub gups: f64,
    /// Whether the required socket bandwidth exceeds the measured update
    /// bandwidth; `None` when no socket bandwidth was measured.
    pub bandwidth_limited: Option<bool>,
}

pub fn predict_socket(m: &MachineModel) -> Result<SocketPrediction> {
    let cycles = m
        .measured
        .kernel_cycles_per_iter
        .ok_or_else(|| Error::Config(format!("machine '{}' has no kernel_cycles_per_iter", m.name)))?;
    let per_line = m.voxels_per_cacheline();
    let cacheline_cycles = per_line / m.lanes as f64 * cycles;
    // One cacheline in, one evicted.
    let bytes_per_line = 2.0 * m.cacheline_bytes as f64;
    let bw_per_core = bytes_per_line * m.clock_hz / cacheline_cycles;
    let bw_per_socket = bw_per_core * m.cores_per_socket as f64;
    let gups = m.cores_per_socket as f64 * per_line * m.clock_hz / cacheline_cycles / 1e9;
    Ok(SocketPrediction {
        cacheline_cycles,
        transfer_cycles: 2.0 * CYCLES_PER_LINE_TRANSFER,
        bw_per_core,
        bw_per_socket,
        gups,
        bandwidth_limited: m.measured.update_bw_socket.map(|bw| bw_per_socket > bw),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub predicted_gups: f64,
    pub measured_gups: f64,
    /// `(measured − predicted) / measured`.
    pub deviation: f64,
    pub band: f64,
    pub pass: bool,
}

/// Signed deviation of a measurement from the prediction, relative to the
/// measurement: negative when the model over-predicts.
pub fn deviation(predicted: f64, measured: f64) -> f64 {
    (measured - predicted) / measured
}

pub fn validate(predicted: f64, measured: f64, band: f64) -> Validation {
    let dev = deviation(predicted, measured);
    Validation {
        predicted_gups: predicted,
        measured_gups: measured,
        deviation: dev,
        band,
        pass: dev.abs() <= band,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub schema: String,
    pub machine: MachineModel,
    pub arithmetic_bound_gups: f64,
    pub bandwidth_bound_gups: Option<f64>,
    pub prediction: Option<SocketPrediction>,
    pub validation: Option<Validation>,
}

impl PerfReport {
    pub fn new(machine: &MachineModel) -> Self {
        PerfReport {
            schema: REPORT_SCHEMA.to_string(),
            machine: machine.clone(),
            arithmetic_bound_gups: arithmetic_bound(machine),
            bandwidth_bound_gups: bandwidth_bound(machine),
            prediction: predict_socket(machine).ok(),
            validation: None,
        }
    }

    pub fn with_measurement(mut self, measured_gups: f64, band: f64) -> Result<Self> {
        let p = self
            .prediction
            .ok_or_else(|| Error::Config("cannot validate without a socket prediction".into()))?;
        self.validation = Some(validate(p.gups, measured_gups, band));
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for PerfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.machine;
        writeln!(
            f,
            "machine {}: {} x {} cores @ {:.2} GHz, W={}",
            m.name,
            m.sockets,
            m.cores_per_socket,
            m.clock_hz / 1e9,
            m.lanes
        )?;
        writeln!(f, "  arithmetic bound (node) : {:8.3} GUPS", self.arithmetic_bound_gups)?;
        match self.bandwidth_bound_gups {
            Some(b) => writeln!(f, "  bandwidth bound (node)  : {b:8.3} GUPS")?,
            None => writeln!(f, "  bandwidth bound (node)  :      n/a (no update_bw_node)")?,
        }
        if let Some(p) = &self.prediction {
            writeln!(f, "  cacheline update        : {:8.1} cycles in-core", p.cacheline_cycles)?;
            writeln!(f, "  required BW per core    : {:8.2} GB/s", p.bw_per_core / 1e9)?;
            writeln!(f, "  required BW per socket  : {:8.2} GB/s", p.bw_per_socket / 1e9)?;
            writeln!(f, "  predicted socket perf   : {:8.3} GUPS", p.gups)?;
            match p.bandwidth_limited {
                Some(true) => writeln!(f, "  flag                    : bandwidth-limited")?,
                Some(false) => writeln!(f, "  flag                    : core-bound")?,
                None => {}
            }
        }
        if let Some(v) = &self.validation {
            writeln!(
                f,
                "  measured {:.3} GUPS, deviation {:+.1}% ({} band ±{:.0}%)",
                v.measured_gups,
                100.0 * v.deviation,
                if v.pass { "within" } else { "OUTSIDE" },
                100.0 * v.band
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn arithmetic_bound_examples() {
        let wem = MachineModel::preset("WEM").unwrap();
        assert!(rel(arithmetic_bound(&wem), 6.7) < 0.01);
        let snb = MachineModel::preset("SNB").unwrap();
        assert!(rel(arithmetic_bound(&snb), 5.33) < 0.001);
    }

    #[test]
    fn arithmetic_bound_linear_in_lanes() {
        let mut m = MachineModel::preset("WEM").unwrap();
        let b4 = arithmetic_bound(&m);
        m.lanes = 8;
        assert_eq!(arithmetic_bound(&m), 2.0 * b4);
    }

    #[test]
    fn bandwidth_bound_examples() {
        for (name, want) in [("HPT", 1.05), ("WEM", 4.89), ("SNB", 2.16)] {
            let m = MachineModel::preset(name).unwrap();
            assert!(rel(bandwidth_bound(&m).unwrap(), want) < 0.002, "{name}");
        }
    }

    #[test]
    fn wem_socket_prediction() {
        let p = predict_socket(&MachineModel::preset("WEM").unwrap()).unwrap();
        assert!((p.bw_per_core / 1e9 - 1.82).abs() < 0.01);
        assert!((p.gups - 1.37).abs() < 0.01);
        assert_eq!(p.bandwidth_limited, Some(false));
    }

    #[test]
    fn snb_avx_cacheline() {
        let p = predict_socket(&MachineModel::preset("SNB").unwrap()).unwrap();
        assert_eq!(p.cacheline_cycles.round(), 152.0);
        let sse = predict_socket(&MachineModel::preset("SNB-SSE").unwrap()).unwrap();
        assert_eq!(sse.cacheline_cycles.round(), 178.0);
    }

    #[test]
    fn harpertown_is_bandwidth_limited() {
        let p = predict_socket(&MachineModel::preset("HPT").unwrap()).unwrap();
        assert_eq!(p.bandwidth_limited, Some(true));
    }

    #[test]
    fn doubling_clock_doubles_prediction() {
        let mut m = MachineModel::preset("WEX").unwrap();
        let g = predict_socket(&m).unwrap().gups;
        m.clock_hz *= 2.0;
        assert!(rel(predict_socket(&m).unwrap().gups, 2.0 * g) < 1e-12);
    }

    #[test]
    fn fewer_cycles_predict_more() {
        let mut m = MachineModel::preset("WEM").unwrap();
        let mut last = 0.0;
        for c in [80.0, 60.0, 51.5, 40.0, 10.0] {
            m.measured.kernel_cycles_per_iter = Some(c);
            let g = predict_socket(&m).unwrap().gups;
            assert!(g > last);
            last = g;
        }
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(format!("{:.1}", 100.0 * deviation(1.42, 1.20)), "-18.3");
        assert_eq!(deviation(2.0, 2.0), 0.0);
        let v = validate(1.0, 0.9, 0.25);
        assert!(v.pass && (v.deviation + 1.0 / 9.0).abs() < 1e-12);
        assert!(!validate(1.0, 0.7, 0.25).pass);
    }

    #[test]
    fn toml_round_trip_and_bounds_only() {
        let m = MachineModel::preset("HPT").unwrap();
        assert_eq!(MachineModel::from_toml_str(&m.to_toml_string()).unwrap(), m);

        let bare = MachineModel::from_toml_str(
            "name = \"bare\"\nclock_hz = 2e9\ncores_per_socket = 2\nsockets = 1\nlanes = 4\n",
        )
        .unwrap();
        let r = PerfReport::new(&bare);
        assert!(r.bandwidth_bound_gups.is_none() && r.prediction.is_none());
        assert!(r.with_measurement(1.0, 0.25).is_err());
    }

    #[test]
    fn invalid_machine_files() {
        assert!(MachineModel::from_toml_str("name = \"x\"").is_err());
        let bad_line = "name = \"x\"\nclock_hz = 1e9\ncores_per_socket = 1\nsockets = 1\nlanes = 4\ncacheline_bytes = 128\n";
        assert!(MachineModel::from_toml_str(bad_line).is_err());
        let neg = "name = \"x\"\nclock_hz = 1e9\ncores_per_socket = 1\nsockets = 1\nlanes = 4\n[measured]\nupdate_bw_node = -1.0\n";
        assert!(MachineModel::from_toml_str(neg).is_err());
    }

    #[test]
    fn report_json_has_schema() {
        let r = PerfReport::new(&MachineModel::preset("SNB").unwrap());
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema"], REPORT_SCHEMA);
        assert!(r.to_string().contains("predicted socket perf"));
    }
}
