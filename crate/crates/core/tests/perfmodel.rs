use conebeam::kernel::{ExtractStrategy, KernelConfig, LaneWidth, RecipMode};
use conebeam::perfmodel::{
    arithmetic_bound, bandwidth_bound, measure_kernel_cycles, predict_socket, update_microbench, validate,
    MachineModel, PerfReport,
};

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn preset(name: &str) -> MachineModel {
    MachineModel::preset(name).unwrap()
}

/// Published figures reproduced from the published inputs.
#[test]
fn published_bounds() {
    for (name, want) in [("HPT", 4.86), ("WEM", 6.75), ("SNB", 5.31)] {
        let got = arithmetic_bound(&preset(name));
        assert!(rel(got, want) <= 0.01, "{name}: {got}");
    }
    for (name, want) in [("HPT", 1.06), ("WEM", 4.90), ("SNB", 2.15)] {
        let got = bandwidth_bound(&preset(name)).unwrap();
        assert!(rel(got, want) <= 0.01, "{name}: {got}");
    }
}

#[test]
fn published_socket_predictions() {
    // Published table: BW/core, BW/socket (GB/s), GUPS.
    let rows = [
        ("HPT", 1.7, 6.8, 0.85),
        ("WEM", 1.9, 11.2, 1.42),
        ("SNB-SSE", 2.5, 10.0, 1.25),
        ("SNB", 3.0, 12.0, 1.51),
    ];
    for (name, core, socket, gups) in rows {
        let p = predict_socket(&preset(name)).unwrap();
        assert!(rel(p.bw_per_core / 1e9, core) <= 0.05, "{name} core {}", p.bw_per_core);
        assert!(rel(p.bw_per_socket / 1e9, socket) <= 0.05, "{name} socket {}", p.bw_per_socket);
        assert!(rel(p.gups, gups) <= 0.05, "{name} gups {}", p.gups);
    }
}

#[test]
fn only_harpertown_is_bandwidth_limited() {
    for name in MachineModel::PRESETS {
        let limited = predict_socket(&preset(name)).unwrap().bandwidth_limited.unwrap();
        assert_eq!(limited, name == "HPT", "{name}");
    }
}

#[test]
fn published_deviations() {
    // Measured and predicted GUPS with the published deviation in percent.
    let rows = [
        (0.75, 0.85, -13.3),
        (1.20, 1.42, -18.3),
        (1.30, 1.45, -11.5),
        (1.11, 1.25, -12.6),
        (1.28, 1.51, -18.0),
    ];
    for (measured, predicted, want) in rows {
        let v = validate(predicted, measured, 0.25);
        assert!((100.0 * v.deviation - want).abs() < 0.05, "{measured} vs {predicted}: {}", v.deviation);
        assert!(v.pass);
    }
    let report = PerfReport::new(&preset("WEM")).with_measurement(1.20, 0.25).unwrap();
    let text = report.to_string();
    assert!(text.contains("deviation -13.8%"), "{text}");
}

#[test]
fn microbench_counts_load_and_store() {
    let n = 1 << 20;
    let bw1 = update_microbench(n, 1, 5).unwrap();
    let bw2 = update_microbench(n, 2, 5).unwrap();
    assert!(bw1 > 1e8 && bw2 > 1e8);
}

#[test]
fn kernel_cycles_reproducible() {
    let cfg = KernelConfig {
        extract: ExtractStrategy::V2Shift,
        ..KernelConfig::fast(LaneWidth::Four, RecipMode::Approx12)
    };
    let a = measure_kernel_cycles(&cfg, 256, 2e9).unwrap();
    let b = measure_kernel_cycles(&cfg, 256, 2e9).unwrap();
    assert!(rel(a.cycles_per_iter, b.cycles_per_iter) <= 0.05, "{} vs {}", a.cycles_per_iter, b.cycles_per_iter);
}
