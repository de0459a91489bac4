//! Published reference measurements used as comparison columns.
//!
//! These are the originally reported numbers for the trust-latency and
//! end-to-end reachability experiments (TRUFL itself plus the NetSyn, SDPA
//! and Hassel tools). They are citations, not measurements made here:
//! report emitters attach them verbatim next to locally measured values and
//! no assertion compares against them in absolute terms.

/// Host counts of the trust-latency dataset.
pub const TRUST_LATENCY_HOSTS: [usize; 4] = [4, 16, 64, 256];

/// Reference setup+verify latency (ms) without any trust machinery.
pub const TRUST_LATENCY_NO_TRUST_MS: [f64; 4] = [0.20, 1.53, 1.106, 5.41];

/// Reference setup+verify latency (ms) for centralized trust.
pub const TRUST_LATENCY_CENTRALIZED_MS: [f64; 4] = [0.59, 3.18, 10.84, 46.44];

/// Reference setup+verify latency (ms) for distributed trust.
pub const TRUST_LATENCY_DISTRIBUTED_MS: [f64; 4] = [0.43, 1.74, 3.53, 15.45];

/// Rule counts of the forwarding-latency dataset.
pub const FORWARDING_RULE_COUNTS: [usize; 5] = [10_000, 20_000, 30_000, 40_000, 50_000];

/// Reference end-to-end check latency (ms) for TRUFL.
pub const FORWARDING_TRUFL_MS: [u32; 5] = [7, 11, 14, 19, 28];

/// Reference latency (ms) for NetSyn.
pub const FORWARDING_NETSYN_MS: [u32; 5] = [25, 34, 43, 57, 65];

/// Reference latency ranges (ms) for SDPA.
pub const FORWARDING_SDPA_MS: [(u32, u32); 5] =
    [(130, 140), (130, 145), (130, 145), (130, 145), (130, 145)];

/// Reference latency (ms) for Hassel.
pub const FORWARDING_HASSEL_MS: [u32; 5] = [100, 1100, 3000, 5000, 6000];

/// Reference trust latency for a host count and mode label, when the
/// dataset has that point.
pub fn trust_latency_ms(host_count: usize, mode_label: &str) -> Option<f64> {
    let idx = TRUST_LATENCY_HOSTS.iter().position(|&h| h == host_count)?;
    match mode_label {
        "none" => Some(TRUST_LATENCY_NO_TRUST_MS[idx]),
        "centralized" => Some(TRUST_LATENCY_CENTRALIZED_MS[idx]),
        "distributed" => Some(TRUST_LATENCY_DISTRIBUTED_MS[idx]),
        _ => None,
    }
}

/// Reference forwarding-latency columns for one rule count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardingReference {
    pub trufl_ms: u32,
    pub netsyn_ms: u32,
    pub sdpa_ms: (u32, u32),
    pub hassel_ms: u32,
}

pub fn forwarding_reference(rule_count: usize) -> Option<ForwardingReference> {
    let idx = FORWARDING_RULE_COUNTS.iter().position(|&c| c == rule_count)?;
    Some(ForwardingReference {
        trufl_ms: FORWARDING_TRUFL_MS[idx],
        netsyn_ms: FORWARDING_NETSYN_MS[idx],
        sdpa_ms: FORWARDING_SDPA_MS[idx],
        hassel_ms: FORWARDING_HASSEL_MS[idx],
    })
}
