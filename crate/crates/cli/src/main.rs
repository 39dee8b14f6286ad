use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conebeam::datagen::{generate_stack, make_phantom, read_stack, read_volume, read_volume_expect, write_stack, write_volume, PhantomKind};
use conebeam::geometry::{CircularTrajectory, VoxelGrid};
use conebeam::kernel::{ArithmeticMode, ExtractStrategy, KernelConfig, LaneWidth, RecipMode};
use conebeam::perfmodel::{measure_host, MachineModel, PerfReport};
use conebeam::precompute::{build_clip_table, clip_stats, ClipTable};
use conebeam::report::{format_psnr, psnr, BenchResult};
use conebeam::scheduler::{reconstruct, RunConfig};
use conebeam::Error;

/// Cone-beam CT backprojection benchmark.
#[derive(Parser)]
#[command(name = "conebeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic projection stack.
    GenData(GenData),
    /// Backproject a stack into a volume and report throughput.
    Reconstruct(Reconstruct),
    /// Compare a volume against a reference.
    Psnr(PsnrArgs),
    /// Evaluate the performance model for a machine.
    Model(ModelArgs),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value = "spheres3")]
    phantom: PhantomKind,
    #[arg(long, default_value_t = 496)]
    views: usize,
    /// Check the trajectory against a grid of this size.
    #[arg(long = "size-l", default_value_t = 512)]
    size_l: usize,
    #[arg(long, default_value_t = 1248)]
    isx: usize,
    #[arg(long, default_value_t = 960)]
    isy: usize,
    /// Detector pitch in mm; defaults to keeping the 1248 x 0.32 mm detector width.
    #[arg(long)]
    pitch: Option<f64>,
    #[arg(long, default_value_t = 750.0)]
    sid: f64,
    #[arg(long, default_value_t = 1200.0)]
    sdd: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Reconstruct {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 512)]
    l: usize,
    #[arg(long, env = "BP_THREADS", default_value_t = default_threads())]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    chunk: usize,
    #[arg(long = "block-b", default_value_t = 1)]
    block_b: usize,
    #[arg(long, default_value = "8", value_parser = parse_lanes)]
    lanes: LaneWidth,
    /// Reciprocal: exact, approx12 or approx12_nr. Defaults to exact with
    /// --strict and approx12_nr otherwise.
    #[arg(long)]
    recip: Option<RecipMode>,
    #[arg(long, default_value = "v2")]
    extract: ExtractStrategy,
    #[arg(long, default_value = "on", value_parser = parse_switch, action = clap::ArgAction::Set)]
    clip: bool,
    /// Clip table cache: read if present, otherwise built and written.
    #[arg(long)]
    clip_cache: Option<PathBuf>,
    /// Fixed evaluation order, bitwise reproducible across lane widths.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 1)]
    numa_domains: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the benchmark result as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Reference volume for a PSNR line in the report.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long)]
    progress: bool,
}

#[derive(Args)]
struct PsnrArgs {
    #[arg(long)]
    vol: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Peak value; defaults to the reference maximum.
    #[arg(long)]
    max: Option<f64>,
}

#[derive(Args)]
struct ModelArgs {
    /// Machine description (TOML).
    #[arg(long, conflicts_with = "preset")]
    machine_file: Option<PathBuf>,
    /// Built-in machine: HPT, WEM, WEX, SNB or SNB-SSE.
    #[arg(long)]
    preset: Option<String>,
    /// Measure this host (kernel cycles and update bandwidth).
    #[arg(long)]
    measure: bool,
    /// Lane width of the measured kernel.
    #[arg(long, default_value = "8", value_parser = parse_lanes)]
    lanes: LaneWidth,
    /// Compare the prediction with the GUPS of a reconstruct report.
    #[arg(long)]
    validate_against: Option<PathBuf>,
    /// Accepted relative deviation.
    #[arg(long, default_value_t = 0.25)]
    band: f64,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the (possibly measured) machine description as TOML.
    #[arg(long)]
    save_machine: Option<PathBuf>,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_lanes(s: &str) -> Result<LaneWidth, String> {
    let w: usize = s.parse().map_err(|_| format!("'{s}' is not a lane width"))?;
    LaneWidth::from_usize(w).map_err(|e| e.to_string())
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on or off, got '{s}'")),
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Io(Error),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_io() {
            Failure::Io(e)
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn write_text(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| Failure::Io(Error::Io { path: path.to_path_buf(), source: e }))
}

fn gen_data(a: GenData) -> CmdResult {
    let pitch = a.pitch.unwrap_or(0.32 * 1248.0 / a.isx as f64);
    let traj = CircularTrajectory {
        views: a.views,
        sid: a.sid,
        sdd: a.sdd,
        nu: a.isx,
        nv: a.isy,
        pitch,
    };
    let grid = VoxelGrid::new(a.size_l)?;
    for (i, m) in traj.matrices()?.iter().enumerate() {
        m.validate_for_grid(&grid)
            .map_err(|reason| Error::InvalidMatrix { index: i, reason })?;
    }
    let stack = generate_stack(&make_phantom(a.phantom), &traj)?;
    write_stack(&a.out, &stack)?;
    println!(
        "wrote {} views of {}x{} ({:.2} GB payload) to {}",
        stack.count(),
        stack.isx,
        stack.isy,
        stack.payload_bytes() as f64 / 1e9,
        a.out.display()
    );
    Ok(())
}

fn load_or_build_clip(a: &Reconstruct, grid: &VoxelGrid, stack: &conebeam::datagen::ProjectionStack) -> Result<Option<ClipTable>, Failure> {
    if !a.clip {
        return Ok(None);
    }
    let table = match &a.clip_cache {
        Some(p) if p.exists() => ClipTable::read(p)?,
        other => {
            let t = build_clip_table(grid, &stack.matrices, stack.isx, stack.isy)?;
            if let Some(p) = other {
                t.write(p)?;
            }
            t
        }
    };
    if table.size() != grid.size() || table.count() != stack.count() {
        return Err(Failure::Validation(format!(
            "clip table is for L={} with {} views, run needs L={} with {}",
            table.size(),
            table.count(),
            grid.size(),
            stack.count()
        )));
    }
    let s = clip_stats(&table);
    println!("clipping removes {:.1}% of the updates", 100.0 * s.reduction);
    Ok(Some(table))
}

fn reconstruct_cmd(a: Reconstruct) -> CmdResult {
    let stack = read_stack(&a.input)?;
    let grid = VoxelGrid::new(a.l)?;
    let kernel = KernelConfig {
        lanes: a.lanes,
        recip: a.recip.unwrap_or(if a.strict { RecipMode::Exact } else { RecipMode::Approx12Nr }),
        extract: a.extract,
        arithmetic: if a.strict { ArithmeticMode::Strict } else { ArithmeticMode::Fast },
        ..KernelConfig::default()
    };
    let cfg = RunConfig {
        threads: a.threads,
        chunk: a.chunk,
        block: a.block_b,
        kernel,
        clip: a.clip,
        numa_domains: a.numa_domains,
        progress: a.progress,
    };
    let table = load_or_build_clip(&a, &grid, &stack)?;
    let (vol, stats) = reconstruct::<f32>(&stack, &grid, &cfg, table.as_ref())?;
    let mut result = BenchResult::new(&stats, &cfg, a.l, stack.count(), stack.isx, stack.isy);
    if let Some(r) = &a.reference {
        let reference = read_volume_expect(r, a.l)?;
        result.psnr_db = Some(psnr(&vol, &reference, None)?);
    }
    print!("{result}");
    if let Some(out) = &a.out {
        write_volume(out, &vol)?;
    }
    if let Some(p) = &a.report {
        write_text(p, &result.to_json())?;
    }
    Ok(())
}

fn psnr_cmd(a: PsnrArgs) -> CmdResult {
    let vol = read_volume(&a.vol)?;
    let reference = read_volume(&a.reference)?;
    let p = psnr(&vol, &reference, a.max)?;
    println!("PSNR: {} dB", format_psnr(p));
    Ok(())
}

fn model_cmd(a: ModelArgs) -> CmdResult {
    let mut machine = match (&a.machine_file, &a.preset) {
        (Some(p), _) => MachineModel::load(p)?,
        (None, Some(name)) => MachineModel::preset(name).ok_or_else(|| {
            Failure::Validation(format!("unknown preset '{name}' (known: {})", MachineModel::PRESETS.join(", ")))
        })?,
        (None, None) if a.measure => measure_host(&KernelConfig::fast(a.lanes, RecipMode::Approx12Nr), 512, true)?,
        (None, None) => return Err(Failure::Validation("need --machine-file, --preset or --measure".into())),
    };
    if a.measure && (a.machine_file.is_some() || a.preset.is_some()) {
        let host = measure_host(&KernelConfig::fast(LaneWidth::from_usize(machine.lanes)?, RecipMode::Approx12Nr), 512, true)?;
        machine.measured = host.measured;
    }
    let mut report = PerfReport::new(&machine);
    if let Some(path) = &a.validate_against {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(Error::Io { path: path.clone(), source: e }))?;
        let bench = BenchResult::from_json(&text)?;
        report = report.with_measurement(bench.gups, a.band)?;
    }
    print!("{report}");
    if let Some(p) = &a.json {
        write_text(p, &report.to_json())?;
    }
    if let Some(p) = &a.save_machine {
        write_text(p, &machine.to_toml_string())?;
    }
    match report.validation {
        Some(v) if !v.pass => Err(Failure::Validation(format!(
            "deviation {:+.1}% outside ±{:.0}%",
            100.0 * v.deviation,
            100.0 * v.band
        ))),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Psnr(a) => psnr_cmd(a),
        Command::Model(a) => model_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
