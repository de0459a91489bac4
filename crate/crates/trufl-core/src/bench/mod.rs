//! Desk-scale benchmark harness for the two experiments: trust setup/verify
//! latency against host count, and end-to-end reachability-check latency
//! against installed rule count.
//!
//! Scenarios run sequentially to keep timings clean; each measurement is the
//! median of a configurable repeat count after one discarded warm-up run.
//! Absolute published numbers are attached as reference columns only —
//! hardware differs, so the suites assert orderings and ratios, never
//! absolute values.

pub mod reference;

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use crate::flowrules::{end_to_end_check, install_generated, RuleGenConfig, SlaPolicy};
use crate::topology::{build_topology, NetworkTopology, TopologyError};
use crate::trust::{TrustError, TrustManager, TrustMode};

/// Default measurement repeats; one extra warm-up run is always discarded.
pub const DEFAULT_REPEATS: usize = 5;

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Benchmark topology for a host count: four hosts per switch, two domains
/// (one when the switch count cannot fill two).
pub fn bench_topology(host_count: usize) -> Result<NetworkTopology, TopologyError> {
    let hosts_per_switch = (host_count / 4).max(1);
    let switches = host_count / hosts_per_switch;
    build_topology(host_count, hosts_per_switch, 2.min(switches))
}

/// One measured point of the trust-latency experiment.
#[derive(Debug, Clone, Serialize)]
pub struct LatencyRow {
    pub host_count: usize,
    pub mode: String,
    pub measured_ms: f64,
    pub reference_ms: Option<f64>,
}

/// Trust setup+verify latency table.
#[derive(Debug, Clone, Default)]
pub struct LatencyTable {
    pub rows: Vec<LatencyRow>,
}

/// One measured point of the reachability experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ReachabilityRow {
    pub rule_count: usize,
    pub measured_ms: f64,
    pub violations: usize,
    pub reference_trufl_ms: Option<u32>,
    pub reference_netsyn_ms: Option<u32>,
    /// Inclusive reference range, rendered as `lo-hi`.
    pub reference_sdpa_ms: Option<(u32, u32)>,
    pub reference_hassel_ms: Option<u32>,
}

/// End-to-end reachability latency table.
#[derive(Debug, Clone, Default)]
pub struct ReachabilityTable {
    pub rows: Vec<ReachabilityRow>,
}

/// Parameters for the trust-latency experiment.
#[derive(Debug, Clone)]
pub struct TrustBenchConfig {
    pub host_counts: Vec<usize>,
    pub modes: Vec<TrustMode>,
    pub repeats: usize,
}

impl Default for TrustBenchConfig {
    fn default() -> Self {
        TrustBenchConfig {
            host_counts: reference::TRUST_LATENCY_HOSTS.to_vec(),
            modes: vec![
                TrustMode::NoTrust,
                TrustMode::Centralized,
                TrustMode::Distributed { workers: 4 },
            ],
            repeats: DEFAULT_REPEATS,
        }
    }
}

/// Measure provisioning plus verification latency for every host count and
/// mode combination. Reference columns attach where the dataset has the
/// host count.
pub fn bench_trust_latency(
    manager: &TrustManager<'_>,
    cfg: &TrustBenchConfig,
) -> Result<LatencyTable, TrustError> {
    let mut table = LatencyTable::default();
    for &host_count in &cfg.host_counts {
        let topo = bench_topology(host_count)?;
        for &mode in &cfg.modes {
            let run = |now: i64| -> Result<f64, TrustError> {
                let (store, setup) = manager.provision(&topo, mode, now)?;
                let verify = manager.verify_trust(&topo, &store, mode, now);
                Ok(setup.setup_ms + verify.verify_ms)
            };
            run(0)?; // warm-up, discarded
            let mut samples = Vec::with_capacity(cfg.repeats.max(1));
            for i in 0..cfg.repeats.max(1) {
                samples.push(run(i as i64)?);
            }
            table.rows.push(LatencyRow {
                host_count,
                mode: mode.label().to_string(),
                measured_ms: median(samples),
                reference_ms: reference::trust_latency_ms(host_count, mode.label()),
            });
        }
    }
    Ok(table)
}

/// Parameters for the reachability experiment.
#[derive(Debug, Clone)]
pub struct ReachBenchConfig {
    pub rule_counts: Vec<usize>,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for ReachBenchConfig {
    fn default() -> Self {
        ReachBenchConfig {
            rule_counts: reference::FORWARDING_RULE_COUNTS.to_vec(),
            seed: 42,
            repeats: DEFAULT_REPEATS,
        }
    }
}

/// The drop intents checked by the reachability experiment: cross-domain
/// traffic between the two generated /24 host ranges.
pub fn bench_sla_policy() -> SlaPolicy {
    SlaPolicy::from_text(
        "drop any 10.0.0.0/24 10.1.0.0/24\n\
         drop tcp 10.1.0.0/24 10.0.0.0/24\n",
    )
    .expect("static policy parses")
}

/// Measure end-to-end policy checking against generated rule sets of
/// increasing size on a fixed 16-host topology.
pub fn bench_reachability(cfg: &ReachBenchConfig) -> Result<ReachabilityTable, TopologyError> {
    let sla = bench_sla_policy();
    let mut table = ReachabilityTable::default();
    for &rule_count in &cfg.rule_counts {
        let mut topo = bench_topology(16)?;
        install_generated(&mut topo, &RuleGenConfig::new(rule_count, cfg.seed));
        end_to_end_check(&topo, &sla); // warm-up, discarded
        let mut samples = Vec::with_capacity(cfg.repeats.max(1));
        let mut violations = 0;
        for _ in 0..cfg.repeats.max(1) {
            let (v, ms) = end_to_end_check(&topo, &sla);
            violations = v.len();
            samples.push(ms);
        }
        let reference = reference::forwarding_reference(rule_count);
        table.rows.push(ReachabilityRow {
            rule_count,
            measured_ms: median(samples),
            violations,
            reference_trufl_ms: reference.map(|r| r.trufl_ms),
            reference_netsyn_ms: reference.map(|r| r.netsyn_ms),
            reference_sdpa_ms: reference.map(|r| r.sdpa_ms),
            reference_hassel_ms: reference.map(|r| r.hassel_ms),
        });
    }
    Ok(table)
}

/// Report output formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "jsonl" => Ok(ReportFormat::Jsonl),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// Anything renderable as a column table. Millisecond cells use two
/// decimals; column order is fixed by the implementation.
pub trait ReportTable {
    fn headers(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
    fn json_rows(&self) -> Vec<serde_json::Value>;
}

fn opt_cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or("-".to_string(), |x| x.to_string())
}

impl ReportTable for LatencyTable {
    fn headers(&self) -> Vec<&'static str> {
        vec!["host_count", "mode", "measured_ms", "reference_ms"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.host_count.to_string(),
                    r.mode.clone(),
                    format!("{:.2}", r.measured_ms),
                    opt_cell(r.reference_ms),
                ]
            })
            .collect()
    }

    fn json_rows(&self) -> Vec<serde_json::Value> {
        self.rows
            .iter()
            .map(|r| {
                json!({
                    "record": "trust_latency",
                    "host_count": r.host_count,
                    "mode": r.mode,
                    "measured_ms": round2(r.measured_ms),
                    "reference_ms": r.reference_ms,
                })
            })
            .collect()
    }
}

impl ReportTable for ReachabilityTable {
    fn headers(&self) -> Vec<&'static str> {
        vec![
            "rule_count",
            "measured_ms",
            "violations",
            "reference_trufl_ms",
            "reference_netsyn_ms",
            "reference_sdpa_ms",
            "reference_hassel_ms",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.rule_count.to_string(),
                    format!("{:.2}", r.measured_ms),
                    r.violations.to_string(),
                    opt_cell(r.reference_trufl_ms),
                    opt_cell(r.reference_netsyn_ms),
                    opt_cell(r.reference_sdpa_ms.map(|(lo, hi)| format!("{lo}-{hi}"))),
                    opt_cell(r.reference_hassel_ms),
                ]
            })
            .collect()
    }

    fn json_rows(&self) -> Vec<serde_json::Value> {
        self.rows
            .iter()
            .map(|r| {
                json!({
                    "record": "reachability_latency",
                    "rule_count": r.rule_count,
                    "measured_ms": round2(r.measured_ms),
                    "violations": r.violations,
                    "reference_trufl_ms": r.reference_trufl_ms,
                    "reference_netsyn_ms": r.reference_netsyn_ms,
                    "reference_sdpa_ms": r.reference_sdpa_ms.map(|(lo, hi)| format!("{lo}-{hi}")),
                    "reference_hassel_ms": r.reference_hassel_ms,
                })
            })
            .collect()
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Render a table to a string in the requested format. Output is bit-stable
/// for identical inputs.
pub fn render_report<T: ReportTable>(table: &T, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = table.headers().join(",");
            out.push('\n');
            for row in table.rows() {
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let headers = table.headers();
            let mut out = format!("| {} |\n", headers.join(" | "));
            out.push_str(&format!(
                "|{}\n",
                headers.iter().map(|_| " --- |").collect::<String>()
            ));
            for row in table.rows() {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
            out
        }
        ReportFormat::Jsonl => {
            let mut out = String::new();
            for row in table.json_rows() {
                out.push_str(&row.to_string());
                out.push('\n');
            }
            out
        }
    }
}

/// Write a rendered report to `path`.
pub fn emit_report<T: ReportTable>(
    table: &T,
    format: ReportFormat,
    path: &Path,
) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(render_report(table, format).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pki::TestProvider;

    fn sample_latency_table() -> LatencyTable {
        LatencyTable {
            rows: vec![
                LatencyRow {
                    host_count: 4,
                    mode: "centralized".into(),
                    measured_ms: 1.234,
                    reference_ms: Some(0.59),
                },
                LatencyRow {
                    host_count: 8,
                    mode: "distributed".into(),
                    measured_ms: 0.5,
                    reference_ms: None,
                },
            ],
        }
    }

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let csv = render_report(&sample_latency_table(), ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "host_count,mode,measured_ms,reference_ms");
        assert_eq!(lines[1], "4,centralized,1.23,0.59");
        assert_eq!(lines[2], "8,distributed,0.50,-");
    }

    #[test]
    fn rendering_is_bit_stable() {
        let t = sample_latency_table();
        for f in [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Jsonl] {
            assert_eq!(render_report(&t, f), render_report(&t, f));
        }
    }

    #[test]
    fn jsonl_rows_parse_back() {
        let out = render_report(&sample_latency_table(), ReportFormat::Jsonl);
        for line in out.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["record"], "trust_latency");
        }
    }

    #[test]
    fn median_of_odd_and_even_sample_counts() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![]), 0.0);
    }

    #[test]
    fn trust_bench_attaches_references() {
        let provider = TestProvider::seeded(1);
        let manager = TrustManager::new(&provider);
        let cfg = TrustBenchConfig {
            host_counts: vec![4],
            modes: vec![TrustMode::NoTrust, TrustMode::Centralized],
            repeats: 1,
        };
        let table = bench_trust_latency(&manager, &cfg).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].reference_ms, Some(0.20));
        assert_eq!(table.rows[1].reference_ms, Some(0.59));
        assert!(table.rows[1].measured_ms >= 0.0);
    }

    #[test]
    fn reach_bench_runs_at_small_scale() {
        let cfg = ReachBenchConfig {
            rule_counts: vec![100, 10_000],
            seed: 7,
            repeats: 1,
        };
        let table = bench_reachability(&cfg).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].reference_trufl_ms, None);
        assert_eq!(table.rows[1].reference_trufl_ms, Some(7));
    }
}
