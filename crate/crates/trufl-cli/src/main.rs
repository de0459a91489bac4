//! `trufl` — topology generation, trust provisioning and verification, SLA
//! checking, attack demos and the benchmark harness behind one binary.
//!
//! Machine-readable reports go to stdout as JSON-lines (one object per line,
//! tagged by a `record` field); human summaries go to stderr. Exit codes:
//! 0 success, 1 violations or verification failures found, 2 usage or input
//! errors.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use trufl_core::bench::{
    bench_reachability, bench_trust_latency, emit_report, render_report, ReachBenchConfig,
    ReportFormat, ReportTable, TrustBenchConfig,
};
use trufl_core::flowrules::{check_sla, check_unauthorized_rules, SlaPolicy, ViolationReport};
use trufl_core::pki::{CryptoProvider, KeyStrength, RsaProvider, TestProvider};
use trufl_core::topology::{
    build_topology, motivating_example, parse_rules_file, rogue_tunnel_rule, NetworkTopology,
    NodeId,
};
use trufl_core::trust::{TrustManager, TrustMode};

#[derive(Parser)]
#[command(name = "trufl", version, about = "SDN trust management and flow-rule compliance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology file (or the built-in two-switch scenario).
    GenTopo(GenTopoArgs),
    /// Provision trust over a topology and report setup latency.
    Setup(TrustArgs),
    /// Provision, then challenge-verify every link; failures exit 1.
    Verify(VerifyArgs),
    /// Check a topology's flow tables against an SLA policy.
    CheckSla(CheckSlaArgs),
    /// Run the built-in indirect-violation scenario and report what it finds.
    Demo(DemoArgs),
    /// Load an armored certificate bundle and print its contents.
    ShowCerts(ShowCertsArgs),
    /// Trust setup/verify latency across host counts and modes.
    BenchLatency(BenchLatencyArgs),
    /// End-to-end reachability check latency across rule counts.
    BenchReach(BenchReachArgs),
}

#[derive(Args)]
struct GenTopoArgs {
    /// Number of hosts.
    #[arg(long, required_unless_present = "motivating")]
    hosts: Option<usize>,
    /// Hosts attached to each switch.
    #[arg(long, default_value_t = 1)]
    hosts_per_switch: usize,
    /// Number of security domains.
    #[arg(long, default_value_t = 1)]
    domains: usize,
    /// Emit the built-in two-switch trust-violation scenario instead.
    #[arg(long)]
    motivating: bool,
    /// Write the topology here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// With --motivating: also write the scenario's SLA policy here.
    #[arg(long)]
    sla_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    None,
    Central,
    Dist,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    /// RSA/SHA-256 via OpenSSL.
    Real,
    /// Fast deterministic keyed-digest provider (no security).
    Test,
}

#[derive(Args)]
struct TrustArgs {
    /// Topology file to load.
    #[arg(long)]
    topology: PathBuf,
    /// Trust mode.
    #[arg(long, value_enum, default_value = "central")]
    mode: ModeArg,
    /// Worker count for distributed mode (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// RSA modulus size in bits (1024, 2048 or 4096).
    #[arg(long, default_value_t = 2048)]
    key_bits: u32,
    /// Crypto provider.
    #[arg(long, value_enum, default_value = "real")]
    provider: ProviderArg,
    /// PRNG seed (overridden by TRUFL_SEED, flag wins over env).
    #[arg(long)]
    seed: Option<u64>,
    /// Write every issued certificate plus the anchors as an armored bundle.
    #[arg(long)]
    dump_certs: Option<PathBuf>,
}

#[derive(Args)]
struct ShowCertsArgs {
    /// Armored certificate bundle to load.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    trust: TrustArgs,
    /// Attach this many rogue switches before verifying.
    #[arg(long, default_value_t = 0)]
    rogues: usize,
}

#[derive(Args)]
struct CheckSlaArgs {
    /// Topology file to load.
    #[arg(long)]
    topology: PathBuf,
    /// SLA policy file (one `verdict proto src_cidr dst_cidr` per line).
    #[arg(long)]
    sla: PathBuf,
    /// Extra rules to install (one `switch rule…` per line).
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Also write the violation reports here as JSON-lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    /// Also install the compromised-switch layer-2 tunnel rule.
    #[arg(long)]
    with_tunnel: bool,
}

#[derive(Args)]
struct BenchLatencyArgs {
    /// Comma-separated host counts.
    #[arg(long, default_value = "4,16,64,256")]
    hosts: String,
    /// Comma-separated modes out of none,central,dist.
    #[arg(long, default_value = "none,central,dist")]
    modes: String,
    /// Measurement repeats (median is reported; one warm-up is discarded).
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 2048)]
    key_bits: u32,
    #[arg(long, value_enum, default_value = "real")]
    provider: ProviderArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Report format for --out.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write the report table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchReachArgs {
    /// Rule counts: comma-separated or `start..end:step` (inclusive).
    #[arg(long, default_value = "10000..50000:10000")]
    rules: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::GenTopo(args) => gen_topo(args),
        Command::Setup(args) => setup(args),
        Command::Verify(args) => verify(args),
        Command::CheckSla(args) => check_sla_cmd(args),
        Command::Demo(args) => demo(args),
        Command::ShowCerts(args) => show_certs(args),
        Command::BenchLatency(args) => bench_latency(args),
        Command::BenchReach(args) => bench_reach(args),
    }
}

/// Default PRNG seed: --seed flag, then TRUFL_SEED, then 42.
fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("TRUFL_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(42)
}

fn wall_clock_now() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

fn make_provider(arg: ProviderArg, seed: u64) -> Box<dyn CryptoProvider> {
    match arg {
        ProviderArg::Real => Box::new(RsaProvider::new()),
        ProviderArg::Test => Box::new(TestProvider::seeded(seed)),
    }
}

fn make_mode(mode: ModeArg, workers: Option<usize>) -> TrustMode {
    match mode {
        ModeArg::None => TrustMode::NoTrust,
        ModeArg::Central => TrustMode::Centralized,
        ModeArg::Dist => TrustMode::Distributed {
            workers: workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            }),
        },
    }
}

fn load_topology(path: &PathBuf) -> Result<NetworkTopology> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading topology {}", path.display()))?;
    let topo = NetworkTopology::from_text(&text)
        .with_context(|| format!("parsing topology {}", path.display()))?;
    let errors = topo.validate();
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("integrity: {e}");
        }
        bail!("topology {} is inconsistent ({} errors)", path.display(), errors.len());
    }
    Ok(topo)
}

/// One JSON-lines record on stdout: the serialized value plus a record tag.
fn emit_record(record: &str, value: &impl Serialize) {
    let mut v = serde_json::to_value(value).expect("reports serialize");
    if let Some(obj) = v.as_object_mut() {
        let mut tagged = serde_json::Map::new();
        tagged.insert("record".into(), record.into());
        tagged.append(obj);
        v = serde_json::Value::Object(tagged);
    }
    println!("{v}");
}

fn emit_violations(violations: &[ViolationReport]) {
    for v in violations {
        emit_record("violation", v);
    }
}

fn summarize_violations(violations: &[ViolationReport]) {
    for v in violations {
        let witness = v
            .witness
            .as_ref()
            .map(|w| format!("{} -> {}", w.src_ip, w.dst_ip))
            .unwrap_or_else(|| "-".into());
        let rules: Vec<String> = v
            .rules
            .iter()
            .map(|r| format!("{}[{}]", r.switch, r.index))
            .collect();
        eprintln!("  {}: {} via {}", v.kind, witness, rules.join(", "));
    }
    eprintln!(
        "{} violation(s) found",
        violations.len()
    );
}

fn gen_topo(args: GenTopoArgs) -> Result<i32> {
    let (topo, sla) = if args.motivating {
        let (t, s) = motivating_example();
        (t, Some(s))
    } else {
        let hosts = args.hosts.expect("clap enforces hosts unless --motivating");
        (
            build_topology(hosts, args.hosts_per_switch, args.domains)?,
            None,
        )
    };
    let text = topo.to_text();
    match &args.out {
        Some(path) => std::fs::write(path, &text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    if let Some(sla_path) = &args.sla_out {
        match sla {
            Some(policy) => std::fs::write(sla_path, policy.to_text())
                .with_context(|| format!("writing {}", sla_path.display()))?,
            None => bail!("--sla-out requires --motivating"),
        }
    }
    eprintln!(
        "topology: {} nodes, {} links, {} domains",
        topo.node_count(),
        topo.links().len(),
        topo.domains().len()
    );
    Ok(0)
}

fn setup(args: TrustArgs) -> Result<i32> {
    let topo = load_topology(&args.topology)?;
    let seed = resolve_seed(args.seed);
    let provider = make_provider(args.provider, seed);
    let mode = make_mode(args.mode, args.workers);
    let manager = TrustManager::new(provider.as_ref())
        .with_key_strength(KeyStrength::new(args.key_bits)?);
    let (store, report) = manager.provision(&topo, mode, wall_clock_now())?;
    if let Some(path) = &args.dump_certs {
        let mut bundle = String::new();
        for anchor in store.anchors() {
            bundle.push_str(&anchor.certificate().to_armored());
        }
        for node in store.nodes() {
            if let Some(cred) = store.credential(node) {
                // Anchors already written; the root's credential is one.
                if store.anchors().iter().any(|a| *a.certificate() == cred.certificate) {
                    continue;
                }
                bundle.push_str(&cred.certificate.to_armored());
            }
        }
        std::fs::write(path, bundle).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote certificate bundle to {}", path.display());
    }
    emit_record("setup_report", &report);
    eprintln!(
        "provisioned {} certificates for {} hosts in {:.2} ms ({})",
        report.certificates, report.host_count, report.setup_ms, report.mode
    );
    Ok(0)
}

fn show_certs(args: ShowCertsArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let certs = trufl_core::pki::parse_armored_bundle(&text)?;
    for cert in &certs {
        emit_record(
            "certificate",
            &serde_json::json!({
                "subject": cert.subject_common_name,
                "issuer": cert.issuer_common_name,
                "serial": cert.serial,
                "not_before": cert.not_before,
                "not_after": cert.not_after,
                "self_signed": cert.is_self_signed(),
            }),
        );
    }
    eprintln!("{} certificate(s) loaded from {}", certs.len(), args.input.display());
    Ok(0)
}

fn verify(args: VerifyArgs) -> Result<i32> {
    let mut topo = load_topology(&args.trust.topology)?;
    let seed = resolve_seed(args.trust.seed);
    let provider = make_provider(args.trust.provider, seed);
    let mode = make_mode(args.trust.mode, args.trust.workers);
    let manager = TrustManager::new(provider.as_ref())
        .with_key_strength(KeyStrength::new(args.trust.key_bits)?);
    let now = wall_clock_now();
    let (mut store, mut setup_report) = manager.provision(&topo, mode, now)?;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..args.rogues {
        let id = manager.attach_rogue_switch(&mut topo, &mut store, &mut rng, now)?;
        eprintln!("attached rogue switch {id}");
    }

    let report = manager.verify_trust(&topo, &store, mode, now);
    setup_report.verify_ms = Some(report.verify_ms);
    emit_record("setup_report", &setup_report);
    let failed: Vec<_> = report.failed_links().cloned().collect();
    for link in &failed {
        emit_record("link_failure", link);
    }
    // Rules installed behind the controller's back, or sitting on switches
    // whose chains no longer verify.
    let unauthorized = check_unauthorized_rules(&topo, &store, provider.as_ref(), now);
    emit_violations(&unauthorized);
    emit_record("verify_report", &report_summary(&report));
    eprintln!(
        "verified {} links in {:.2} ms: {} failed, {} unauthorized rule(s)",
        report.links.len(),
        report.verify_ms,
        failed.len(),
        unauthorized.len()
    );
    Ok(if failed.is_empty() && unauthorized.is_empty() {
        0
    } else {
        1
    })
}

#[derive(Serialize)]
struct VerifySummary {
    mode: String,
    verify_ms: f64,
    links_total: usize,
    links_failed: usize,
}

fn report_summary(report: &trufl_core::trust::VerifyReport) -> VerifySummary {
    VerifySummary {
        mode: report.mode.clone(),
        verify_ms: report.verify_ms,
        links_total: report.links.len(),
        links_failed: report.failed_links().count(),
    }
}

fn check_sla_cmd(args: CheckSlaArgs) -> Result<i32> {
    let mut topo = load_topology(&args.topology)?;
    let sla_text = std::fs::read_to_string(&args.sla)
        .with_context(|| format!("reading SLA policy {}", args.sla.display()))?;
    let sla = SlaPolicy::from_text(&sla_text)
        .with_context(|| format!("parsing SLA policy {}", args.sla.display()))?;
    if let Some(rules_path) = &args.rules {
        let text = std::fs::read_to_string(rules_path)
            .with_context(|| format!("reading rules {}", rules_path.display()))?;
        for (switch, rule) in parse_rules_file(&text)? {
            topo.add_rule(&switch, rule)?;
        }
    }
    let violations = check_sla(&topo, &sla);
    emit_violations(&violations);
    if let Some(out) = &args.out {
        let lines: String = violations
            .iter()
            .map(|v| format!("{}\n", serde_json::to_string(v).unwrap()))
            .collect();
        std::fs::write(out, lines).with_context(|| format!("writing {}", out.display()))?;
    }
    summarize_violations(&violations);
    Ok(if violations.is_empty() { 0 } else { 1 })
}

fn demo(args: DemoArgs) -> Result<i32> {
    let (mut topo, sla) = motivating_example();
    if args.with_tunnel {
        topo.add_rule(&NodeId::new("switch1"), rogue_tunnel_rule())?;
    }
    let violations = check_sla(&topo, &sla);
    emit_violations(&violations);
    summarize_violations(&violations);
    Ok(if violations.is_empty() { 0 } else { 1 })
}

fn parse_counts(s: &str) -> Result<Vec<usize>> {
    if let Some((range, step)) = s.split_once(':') {
        if let Some((start, end)) = range.split_once("..") {
            let start: usize = start.trim().parse().context("range start")?;
            let end: usize = end.trim().parse().context("range end")?;
            let step: usize = step.trim().parse().context("range step")?;
            if step == 0 || end < start {
                bail!("invalid range {s:?}");
            }
            return Ok((start..=end).step_by(step).collect());
        }
        bail!("invalid range {s:?}; expected start..end:step");
    }
    s.split(',')
        .map(|part| part.trim().parse().with_context(|| format!("count {part:?}")))
        .collect()
}

fn parse_modes(s: &str, workers: Option<usize>) -> Result<Vec<TrustMode>> {
    s.split(',')
        .map(|part| match part.trim() {
            "none" => Ok(TrustMode::NoTrust),
            "central" => Ok(TrustMode::Centralized),
            "dist" => Ok(make_mode(ModeArg::Dist, workers)),
            other => bail!("unknown mode {other:?} (expected none, central or dist)"),
        })
        .collect()
}

fn write_table<T: ReportTable>(table: &T, format: &str, out: Option<&PathBuf>) -> Result<()> {
    let format: ReportFormat = format
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    if let Some(path) = out {
        emit_report(table, format, path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    // Stdout always carries the JSON-lines form; stderr a readable table.
    print!("{}", render_report(table, ReportFormat::Jsonl));
    eprint!("{}", render_report(table, ReportFormat::Markdown));
    Ok(())
}

fn bench_latency(args: BenchLatencyArgs) -> Result<i32> {
    let seed = resolve_seed(args.seed);
    let provider = make_provider(args.provider, seed);
    let manager = TrustManager::new(provider.as_ref())
        .with_key_strength(KeyStrength::new(args.key_bits)?);
    let cfg = TrustBenchConfig {
        host_counts: parse_counts(&args.hosts)?,
        modes: parse_modes(&args.modes, args.workers)?,
        repeats: args.repeats.max(1),
    };
    let table = bench_trust_latency(&manager, &cfg)?;
    write_table(&table, &args.format, args.out.as_ref())?;
    Ok(0)
}

fn bench_reach(args: BenchReachArgs) -> Result<i32> {
    let cfg = ReachBenchConfig {
        rule_counts: parse_counts(&args.rules)?,
        seed: resolve_seed(args.seed),
        repeats: args.repeats.max(1),
    };
    let table = bench_reachability(&cfg)?;
    write_table(&table, &args.format, args.out.as_ref())?;
    Ok(0)
}
