//! Golden-file checks for report rendering: fixed inputs must produce
//! byte-identical output across runs and machines.

use trufl_core::bench::reference;
use trufl_core::bench::{emit_report, render_report, LatencyRow, LatencyTable, ReportFormat};

fn sample_table() -> LatencyTable {
    let rows = [
        (4, "none", 0.049),
        (4, "centralized", 1.231),
        (4, "distributed", 0.984),
        (64, "centralized", 12.399),
        (64, "distributed", 4.012),
        (128, "distributed", 7.769),
    ];
    LatencyTable {
        rows: rows
            .iter()
            .map(|&(host_count, mode, measured_ms)| LatencyRow {
                host_count,
                mode: mode.to_string(),
                measured_ms,
                reference_ms: reference::trust_latency_ms(host_count, mode),
            })
            .collect(),
    }
}

#[test]
fn markdown_render_matches_golden_file() {
    let golden = include_str!("golden/latency_report.md");
    let rendered = render_report(&sample_table(), ReportFormat::Markdown);
    assert_eq!(rendered, golden);
}

#[test]
fn emitted_file_is_bit_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    emit_report(&sample_table(), ReportFormat::Csv, &a).unwrap();
    emit_report(&sample_table(), ReportFormat::Csv, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
