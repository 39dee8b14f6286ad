//! Reconstruction quality (PSNR) and the benchmark result record.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, Volume};
use crate::scalar::Real;
use crate::scheduler::{RunConfig, RunStats};

/// FLOPs charged per voxel update when converting GUPS to GFLOP/s.
pub const FLOPS_PER_UPDATE: f64 = 31.0;

/// Wall-time goal for a 512³ / 496-view reconstruction, and the rate it implies.
pub const GOAL_SECONDS: f64 = 20.0;
pub const GOAL_GUPS: f64 = 512.0 * 512.0 * 512.0 * 496.0 / GOAL_SECONDS / 1e9;

pub const BENCH_SCHEMA: &str = "conebeam.bench-result/1";

/// `10·log₁₀(M² / MSE)` in dB; `M` defaults to the maximum of `reference`.
/// Identical volumes give `+∞`.
pub fn psnr<T: Real>(vol: &Volume<T>, reference: &Volume<T>, peak: Option<f64>) -> Result<f64> {
    if vol.grid().size() != reference.grid().size() {
        return Err(Error::Dimension(format!(
            "volume L = {} differs from reference L = {}",
            vol.grid().size(),
            reference.grid().size()
        )));
    }
    let m = match peak {
        Some(m) => m,
        None => reference.max_value().to_f64().unwrap_or(0.0),
    };
    let sse: f64 = vol
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| {
            let d = a.to_f64().unwrap_or(f64::NAN) - b.to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum();
    let mse = sse / vol.as_slice().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (m * m / mse).log10())
}

/// Formats a PSNR value, printing `inf` for identical volumes.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{db:.2}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub l: usize,
    pub views: usize,
    pub isx: usize,
    pub isy: usize,
    pub threads: usize,
    pub chunk: usize,
    pub block: usize,
    pub clip: bool,
    pub kernel: KernelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub schema: String,
    pub wall_seconds: f64,
    pub updates: u64,
    pub gups: f64,
    pub gflops: f64,
    pub config: ConfigEcho,
    pub per_thread_updates: Vec<u64>,
    pub voxel_writebacks: u64,
    pub bytes_copied: u64,
    /// Serialized as `null` when unset or infinite.
    #[serde(default, with = "psnr_json")]
    pub psnr_db: Option<f64>,
}

mod psnr_json {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    // JSON has no infinity; identical volumes are written as the string "inf".
    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_infinite() => Repr::Text("inf".into()).serialize(s),
            Some(x) => Repr::Num(*x).serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(match Option::<Repr>::deserialize(d)? {
            None => None,
            Some(Repr::Num(x)) => Some(x),
            Some(Repr::Text(t)) if t == "inf" => Some(f64::INFINITY),
            Some(Repr::Text(t)) => return Err(serde::de::Error::custom(format!("bad PSNR value '{t}'"))),
        })
    }
}

impl BenchResult {
    pub fn new(stats: &RunStats, cfg: &RunConfig, l: usize, views: usize, isx: usize, isy: usize) -> Self {
        BenchResult {
            schema: BENCH_SCHEMA.to_string(),
            wall_seconds: stats.wall_seconds,
            updates: stats.updates,
            gups: stats.gups,
            gflops: stats.gups * FLOPS_PER_UPDATE,
            config: ConfigEcho {
                l,
                views,
                isx,
                isy,
                threads: cfg.threads,
                chunk: cfg.chunk,
                block: cfg.block,
                clip: cfg.clip,
                kernel: cfg.kernel,
            },
            per_thread_updates: stats.per_thread_updates.clone(),
            voxel_writebacks: stats.voxel_writebacks,
            bytes_copied: stats.bytes_copied,
            psnr_db: None,
        }
    }

    /// Seconds a 512³ / 496-view run would take at this rate.
    pub fn projected_goal_seconds(&self) -> f64 {
        GOAL_GUPS * GOAL_SECONDS / self.gups
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench result serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("bench report: {e}")))
    }
}

impl fmt::Display for BenchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "L={} views={} detector={}x{} threads={} chunk={} block={} clip={} kernel={}",
            c.l, c.views, c.isx, c.isy, c.threads, c.chunk, c.block, c.clip, c.kernel
        )?;
        writeln!(f, "wall time   : {:.3} s", self.wall_seconds)?;
        writeln!(f, "updates     : {}", self.updates)?;
        writeln!(f, "performance : {:.3} GUPS, {:.1} GFLOP/s", self.gups, self.gflops)?;
        if let Some(p) = self.psnr_db {
            writeln!(f, "PSNR        : {} dB", format_psnr(p))?;
        }
        let goal = self.gups >= GOAL_GUPS;
        writeln!(
            f,
            "goal        : {:.2} GUPS ({} s at 512^3 x 496) {} (projected {:.1} s)",
            GOAL_GUPS,
            GOAL_SECONDS,
            if goal { "reached" } else { "not reached" },
            self.projected_goal_seconds()
        )
    }
}
