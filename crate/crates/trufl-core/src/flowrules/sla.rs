//! SLA intents and compliance checking: direct, indirect and tunnel
//! bypasses of drop intents, plus out-of-band rule detection.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::pki::{verify_chain, CryptoProvider};
use crate::topology::{NetworkTopology, NodeId, NodeKind, PortId};
use crate::trust::TrustStore;

use super::pattern::{Cidr, Packet, PatternParseError, Protocol, ProtocolMatch};
use super::simulate::{default_hop_limit, probe_packets, simulate_forward, Disposition, RuleRef};
use super::table::{Action, RuleOrigin};

/// What an intent decides for covered traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Allow,
    Drop,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Allow => write!(f, "allow"),
            Verdict::Drop => write!(f, "drop"),
        }
    }
}

impl FromStr for Verdict {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "allow" => Ok(Verdict::Allow),
            "drop" => Ok(Verdict::Drop),
            _ => Err(PatternParseError {
                what: "verdict",
                input: s.to_string(),
            }),
        }
    }
}

/// One reachability intent between two address ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlaIntent {
    pub protocol: ProtocolMatch,
    pub src: Cidr,
    pub dst: Cidr,
    pub verdict: Verdict,
}

impl SlaIntent {
    pub fn covers(&self, proto: Protocol, src: std::net::Ipv4Addr, dst: std::net::Ipv4Addr) -> bool {
        self.protocol.matches(proto) && self.src.contains(src) && self.dst.contains(dst)
    }
}

impl fmt::Display for SlaIntent {
    /// Policy line grammar: `verdict proto src_cidr dst_cidr`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.verdict, self.protocol, self.src, self.dst)
    }
}

impl FromStr for SlaIntent {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(PatternParseError {
                what: "sla intent",
                input: s.to_string(),
            });
        }
        Ok(SlaIntent {
            verdict: fields[0].parse()?,
            protocol: fields[1].parse()?,
            src: fields[2].parse()?,
            dst: fields[3].parse()?,
        })
    }
}

/// An ordered list of intents with first-match semantics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlaPolicy {
    intents: Vec<SlaIntent>,
}

impl SlaPolicy {
    pub fn new(intents: Vec<SlaIntent>) -> Self {
        SlaPolicy { intents }
    }

    pub fn intents(&self) -> &[SlaIntent] {
        &self.intents
    }

    /// First intent covering the flow, in list order.
    pub fn first_match(
        &self,
        proto: Protocol,
        src: std::net::Ipv4Addr,
        dst: std::net::Ipv4Addr,
    ) -> Option<(usize, &SlaIntent)> {
        self.intents
            .iter()
            .enumerate()
            .find(|(_, i)| i.covers(proto, src, dst))
    }

    /// Parse one intent per line; `#` lines and blanks are ignored.
    pub fn from_text(text: &str) -> Result<Self, PatternParseError> {
        let mut intents = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            intents.push(line.parse()?);
        }
        Ok(SlaPolicy::new(intents))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for intent in &self.intents {
            out.push_str(&intent.to_string());
            out.push('\n');
        }
        out
    }
}

/// How a violation bypasses the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A single switch delivers traffic a drop intent forbids.
    Direct,
    /// A multi-switch rule path delivers it while no single rule contradicts
    /// the intent on its own.
    Indirect,
    /// Delivery through a layer-2 tunnel action.
    RogueTunnel,
    /// A rule that should not exist: local origin, or any rule on a switch
    /// whose trust chain does not verify.
    UnauthorizedRule,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::Direct => "direct",
            ViolationKind::Indirect => "indirect",
            ViolationKind::RogueTunnel => "rogue_tunnel",
            ViolationKind::UnauthorizedRule => "unauthorized_rule",
        };
        write!(f, "{s}")
    }
}

/// A rule implicated in a violation, with its rendered form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvolvedRule {
    pub switch: NodeId,
    pub index: usize,
    pub rule: String,
}

/// The intent a violation bypasses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolatedIntent {
    pub index: usize,
    pub intent: String,
}

/// One detected violation. For SLA bypasses the witness packet replayed from
/// `ingress` reproduces the violating delivery; unauthorized-rule findings
/// have no witness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub kind: ViolationKind,
    pub witness: Option<Packet>,
    pub ingress: Option<PortId>,
    pub path: Vec<NodeId>,
    pub rules: Vec<InvolvedRule>,
    pub intent: Option<ViolatedIntent>,
}

fn involved(topo: &NetworkTopology, refs: &[RuleRef]) -> Vec<InvolvedRule> {
    refs.iter()
        .map(|r| InvolvedRule {
            switch: r.switch.clone(),
            index: r.index,
            rule: topo
                .table(&r.switch)
                .and_then(|t| t.rules().get(r.index))
                .map(|rule| rule.to_string())
                .unwrap_or_default(),
        })
        .collect()
}

fn classify(topo: &NetworkTopology, refs: &[RuleRef], path: &[NodeId]) -> ViolationKind {
    let tunneled = refs.iter().any(|r| {
        topo.table(&r.switch)
            .and_then(|t| t.rules().get(r.index))
            .is_some_and(|rule| matches!(rule.action, Action::Tunnel { .. }))
    });
    if tunneled {
        ViolationKind::RogueTunnel
    } else if path.len() <= 1 {
        ViolationKind::Direct
    } else {
        ViolationKind::Indirect
    }
}

/// Search for packets that bypass drop intents.
///
/// For every ordered host pair the checker injects the shared probe set at
/// the source's access switch; a probe whose first matching intent is a drop
/// and whose simulation delivers is a violation, classified by its rule
/// path. Violations are deduplicated by (intent, kind, rule path) — the rule
/// path is the vulnerability, not each packet exercising it — keeping the
/// first witness in probe order. Output order is deterministic.
pub fn check_sla(topo: &NetworkTopology, sla: &SlaPolicy) -> Vec<ViolationReport> {
    debug_assert!(topo.validate().is_empty(), "topology must be consistent");
    let hop_limit = default_hop_limit(topo);
    let hosts: Vec<&NodeId> = topo.hosts().collect();

    type Key = (usize, ViolationKind, Vec<RuleRef>);
    let mut found: BTreeMap<Key, ViolationReport> = BTreeMap::new();

    for src in &hosts {
        let Some((src_port, ingress)) = topo.host_uplink(src) else {
            continue;
        };
        for dst in &hosts {
            let Some(dst_port) = topo.node_ports(dst).next() else {
                continue;
            };
            for mut pkt in probe_packets(src_port, dst_port) {
                let Some((intent_idx, intent)) =
                    sla.first_match(pkt.protocol, pkt.src_ip, pkt.dst_ip)
                else {
                    continue;
                };
                if intent.verdict != Verdict::Drop {
                    continue;
                }
                pkt.in_port = ingress.id.index;
                let trace = simulate_forward(topo, &pkt, &ingress.id, hop_limit);
                let Disposition::Delivered { path } = trace.disposition else {
                    continue;
                };
                let kind = classify(topo, &trace.rules, &path);
                let key = (intent_idx, kind, trace.rules.clone());
                found.entry(key).or_insert_with(|| ViolationReport {
                    kind,
                    witness: Some(pkt),
                    ingress: Some(ingress.id.clone()),
                    path,
                    rules: involved(topo, &trace.rules),
                    intent: Some(ViolatedIntent {
                        index: intent_idx,
                        intent: intent.to_string(),
                    }),
                });
            }
        }
    }
    found.into_values().collect()
}

/// Flag rules that bypassed the controller: every local-origin rule, and
/// every rule on a switch whose credentials fail chain verification against
/// the store's anchors.
pub fn check_unauthorized_rules(
    topo: &NetworkTopology,
    store: &TrustStore,
    provider: &dyn CryptoProvider,
    now: i64,
) -> Vec<ViolationReport> {
    let mut out = Vec::new();
    for (switch, table) in topo.tables() {
        if topo.node_kind(switch) != Some(NodeKind::Switch) {
            continue;
        }
        let trusted = store
            .credential(switch)
            .is_some_and(|cred| verify_chain(provider, &cred.chain, store.anchors(), now).is_ok());
        for (index, rule) in table.rules().iter().enumerate() {
            if rule.origin == RuleOrigin::Local || !trusted {
                out.push(ViolationReport {
                    kind: ViolationKind::UnauthorizedRule,
                    witness: None,
                    ingress: None,
                    path: vec![switch.clone()],
                    rules: vec![InvolvedRule {
                        switch: switch.clone(),
                        index,
                        rule: rule.to_string(),
                    }],
                    intent: None,
                });
            }
        }
    }
    out
}

/// Run the policy check under a wall clock; returns the violations and the
/// elapsed milliseconds.
pub fn end_to_end_check(topo: &NetworkTopology, sla: &SlaPolicy) -> (Vec<ViolationReport>, f64) {
    let start = Instant::now();
    let violations = check_sla(topo, sla);
    (violations, start.elapsed().as_secs_f64() * 1e3)
}
