//! Flow rules, per-switch flow tables and table lookup.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use super::pattern::{
    CompiledMatch, CompiledPacket, HeaderPattern, MacPattern, Packet, PatternParseError,
    ProtocolMatch,
};

/// What a matching rule does with the packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Discard.
    Drop,
    /// Deliver toward the port owning the packet's destination MAC, if that
    /// port is directly attached to the matching switch.
    Allow,
    /// Emit on the given local port index.
    Forward(u16),
    /// Layer-2 tunnel: deliver directly to the port whose MAC matches
    /// `dst_mac` on VLAN `vlan`, bypassing all further table lookups.
    Tunnel { vlan: u16, dst_mac: MacPattern },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Drop => write!(f, "drop"),
            Action::Allow => write!(f, "allow"),
            Action::Forward(p) => write!(f, "fwd {p}"),
            Action::Tunnel { vlan, dst_mac } => write!(f, "tunnel {vlan},{dst_mac}"),
        }
    }
}

/// Who installed the rule. Anything not pushed by the controller is suspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOrigin {
    Controller,
    Local,
}

impl fmt::Display for RuleOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleOrigin::Controller => write!(f, "controller"),
            RuleOrigin::Local => write!(f, "local"),
        }
    }
}

impl FromStr for RuleOrigin {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "controller" => Ok(RuleOrigin::Controller),
            "local" => Ok(RuleOrigin::Local),
            _ => Err(PatternParseError {
                what: "origin",
                input: s.to_string(),
            }),
        }
    }
}

/// Per-rule counters, updated only by the simulator. Duration is measured in
/// virtual seconds: the topology clock ticks once per injected packet.
#[derive(Debug, Default)]
pub struct RuleStats {
    duration_secs: AtomicU64,
    bytes: AtomicU64,
    installed_at: AtomicU64,
}

impl RuleStats {
    pub fn duration_secs(&self) -> u64 {
        self.duration_secs.load(Ordering::Relaxed)
    }

    pub fn bytes(&self) -> u64 {
        self.bytes.load(Ordering::Relaxed)
    }

    pub(crate) fn set_installed_at(&self, tick: u64) {
        self.installed_at.store(tick, Ordering::Relaxed);
    }

    pub(crate) fn record(&self, size_bytes: u32, now_tick: u64) {
        self.bytes.fetch_add(size_bytes as u64, Ordering::Relaxed);
        let age = now_tick.saturating_sub(self.installed_at.load(Ordering::Relaxed));
        self.duration_secs.fetch_max(age, Ordering::Relaxed);
    }
}

/// One OpenFlow-style rule: priority, protocol selector, header pattern,
/// action, origin and statistics.
#[derive(Debug)]
pub struct FlowRule {
    pub priority: u32,
    pub protocol: ProtocolMatch,
    pub header: HeaderPattern,
    pub action: Action,
    pub origin: RuleOrigin,
    pub stats: RuleStats,
}

impl FlowRule {
    pub fn new(
        priority: u32,
        protocol: ProtocolMatch,
        header: HeaderPattern,
        action: Action,
        origin: RuleOrigin,
    ) -> Self {
        FlowRule {
            priority,
            protocol,
            header,
            action,
            origin,
            stats: RuleStats::default(),
        }
    }
}

impl Clone for FlowRule {
    fn clone(&self) -> Self {
        // Counters restart from zero; statistics belong to one simulation.
        FlowRule::new(
            self.priority,
            self.protocol,
            self.header,
            self.action,
            self.origin,
        )
    }
}

impl PartialEq for FlowRule {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
            && self.protocol == other.protocol
            && self.header == other.header
            && self.action == other.action
            && self.origin == other.origin
    }
}

impl Eq for FlowRule {}

impl fmt::Display for FlowRule {
    /// Rule line grammar:
    /// `priority proto in_port src_mac dst_mac src_ip dst_ip src_port dst_port vlan action [args] origin`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = &self.header;
        write!(
            f,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            self.priority,
            self.protocol,
            h.in_port,
            h.src_mac,
            h.dst_mac,
            h.src_ip,
            h.dst_ip,
            h.src_port,
            h.dst_port,
            h.vlan,
            self.action,
            self.origin
        )
    }
}

/// Rule line parsing error.
#[derive(Debug, Error)]
pub enum RuleParseError {
    #[error("rule line has {found} fields, expected 12 or 13")]
    FieldCount { found: usize },
    #[error(transparent)]
    Field(#[from] PatternParseError),
    #[error("invalid priority {0:?}")]
    Priority(String),
    #[error("invalid action {0:?}")]
    Action(String),
}

impl FromStr for FlowRule {
    type Err = RuleParseError;

    /// Parse a whitespace-separated rule line (the `Display` form).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        if fields.len() < 12 || fields.len() > 13 {
            return Err(RuleParseError::FieldCount {
                found: fields.len(),
            });
        }
        let priority: u32 = fields[0]
            .parse()
            .map_err(|_| RuleParseError::Priority(fields[0].to_string()))?;
        let protocol: ProtocolMatch = fields[1].parse()?;
        let header = HeaderPattern {
            in_port: fields[2].parse()?,
            src_mac: fields[3].parse()?,
            dst_mac: fields[4].parse()?,
            src_ip: fields[5].parse()?,
            dst_ip: fields[6].parse()?,
            src_port: fields[7].parse()?,
            dst_port: fields[8].parse()?,
            vlan: fields[9].parse()?,
        };
        let (action, origin_field) = match fields[10] {
            "drop" => (Action::Drop, 11),
            "allow" => (Action::Allow, 11),
            "fwd" => {
                if fields.len() != 13 {
                    return Err(RuleParseError::Action("fwd without port".into()));
                }
                let port: u16 = fields[11]
                    .parse()
                    .map_err(|_| RuleParseError::Action(format!("fwd {}", fields[11])))?;
                (Action::Forward(port), 12)
            }
            "tunnel" => {
                if fields.len() != 13 {
                    return Err(RuleParseError::Action("tunnel without args".into()));
                }
                let (vlan, mac) = fields[11]
                    .split_once(',')
                    .ok_or_else(|| RuleParseError::Action(format!("tunnel {}", fields[11])))?;
                let vlan: u16 = vlan
                    .parse()
                    .map_err(|_| RuleParseError::Action(format!("tunnel vlan {vlan}")))?;
                (
                    Action::Tunnel {
                        vlan,
                        dst_mac: mac.parse()?,
                    },
                    12,
                )
            }
            other => return Err(RuleParseError::Action(other.to_string())),
        };
        if fields.len() != origin_field + 1 {
            return Err(RuleParseError::FieldCount {
                found: fields.len(),
            });
        }
        let origin: RuleOrigin = fields[origin_field].parse()?;
        Ok(FlowRule::new(priority, protocol, header, action, origin))
    }
}

/// An ordered flow table. Insertion order is preserved, indices are stable,
/// and ties between equal priorities go to the earliest-inserted rule.
///
/// Matchers are pre-compiled into a dense side array and scanned in
/// descending-priority order so a lookup stops at the first hit; the scan
/// order is rebuilt lazily after mutations.
#[derive(Debug, Default)]
pub struct FlowTable {
    rules: Vec<FlowRule>,
    compiled: Vec<CompiledMatch>,
    scan_order: std::sync::OnceLock<Vec<u32>>,
}

impl FlowTable {
    pub fn new() -> Self {
        FlowTable::default()
    }

    pub fn push(&mut self, rule: FlowRule) -> usize {
        self.compiled.push(CompiledMatch::new(rule.protocol, &rule.header));
        self.rules.push(rule);
        self.scan_order = std::sync::OnceLock::new();
        self.rules.len() - 1
    }

    pub fn rules(&self) -> &[FlowRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn scan_order(&self) -> &[u32] {
        self.scan_order.get_or_init(|| {
            let mut order: Vec<u32> = (0..self.rules.len() as u32).collect();
            order.sort_by_key(|&i| (std::cmp::Reverse(self.rules[i as usize].priority), i));
            order
        })
    }

    /// Highest-priority matching rule, earliest-inserted on ties; `None` is a
    /// table miss.
    pub fn lookup(&self, pkt: &Packet) -> Option<(usize, &FlowRule)> {
        self.lookup_compiled(&CompiledPacket::new(pkt))
    }

    pub(crate) fn lookup_compiled(&self, pkt: &CompiledPacket) -> Option<(usize, &FlowRule)> {
        for &i in self.scan_order() {
            let i = i as usize;
            if self.compiled[i].matches(pkt) {
                return Some((i, &self.rules[i]));
            }
        }
        None
    }
}

impl Clone for FlowTable {
    fn clone(&self) -> Self {
        let mut t = FlowTable::new();
        for rule in &self.rules {
            t.push(rule.clone());
        }
        t
    }
}

impl PartialEq for FlowTable {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl Eq for FlowTable {}

/// Does this rule match the packet? Every non-wildcard field must cover the
/// packet's value and the protocol selector must accept its protocol.
pub fn matches(rule: &FlowRule, pkt: &Packet) -> bool {
    CompiledMatch::new(rule.protocol, &rule.header).matches(&CompiledPacket::new(pkt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowrules::pattern::Protocol;

    fn pkt() -> Packet {
        Packet {
            in_port: 1,
            protocol: Protocol::Tcp,
            src_mac: "aa:bb:cc:00:0a:01".parse().unwrap(),
            dst_mac: "aa:bb:cc:00:0b:03".parse().unwrap(),
            src_ip: "192.168.4.2".parse().unwrap(),
            dst_ip: "172.16.10.3".parse().unwrap(),
            src_port: 80,
            dst_port: 443,
            vlan: None,
            size_bytes: 64,
        }
    }

    fn wildcard_rule(priority: u32, action: Action) -> FlowRule {
        FlowRule::new(
            priority,
            ProtocolMatch::Any,
            HeaderPattern::any(),
            action,
            RuleOrigin::Controller,
        )
    }

    #[test]
    fn all_wildcard_rule_matches_any_packet() {
        assert!(matches(&wildcard_rule(0, Action::Drop), &pkt()));
    }

    #[test]
    fn mac_suffix_rule_matches_destination() {
        let rule = FlowRule::new(
            10,
            ProtocolMatch::Any,
            HeaderPattern {
                dst_mac: "*:00:0b:03".parse().unwrap(),
                ..HeaderPattern::any()
            },
            Action::Allow,
            RuleOrigin::Controller,
        );
        assert!(matches(&rule, &pkt()));
        let mut other = pkt();
        other.dst_mac = "aa:bb:cc:00:0b:04".parse().unwrap();
        assert!(!matches(&rule, &other));
    }

    #[test]
    fn cidr_rule_matches_by_prefix() {
        let rule = FlowRule::new(
            1,
            ProtocolMatch::Any,
            HeaderPattern {
                dst_ip: "172.16.10.0/16".parse().unwrap(),
                ..HeaderPattern::any()
            },
            Action::Drop,
            RuleOrigin::Controller,
        );
        let mut p = pkt();
        p.dst_ip = "172.16.99.7".parse().unwrap();
        assert!(matches(&rule, &p));
        p.dst_ip = "172.17.0.1".parse().unwrap();
        assert!(!matches(&rule, &p));
    }

    #[test]
    fn empty_table_misses() {
        assert!(FlowTable::new().lookup(&pkt()).is_none());
    }

    #[test]
    fn lookup_prefers_priority() {
        let mut t = FlowTable::new();
        t.push(wildcard_rule(5, Action::Drop));
        t.push(wildcard_rule(10, Action::Allow));
        let (idx, rule) = t.lookup(&pkt()).unwrap();
        assert_eq!(idx, 1);
        assert_eq!(rule.priority, 10);
    }

    #[test]
    fn lookup_ties_break_by_insertion_order() {
        let mut t = FlowTable::new();
        t.push(wildcard_rule(10, Action::Drop));
        t.push(wildcard_rule(10, Action::Allow));
        let (idx, rule) = t.lookup(&pkt()).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(rule.action, Action::Drop);
    }

    #[test]
    fn rule_line_roundtrip() {
        let lines = [
            "10 any * *:*:*:00:0a:01 *:*:*:00:0b:03 * * * * * fwd 3 controller",
            "5 tcp 2 * * 10.0.0.0/24 * 80 1-1024 * drop controller",
            "100 any * *:*:*:00:0a:01 * * * * * 1 tunnel 1,*:*:*:00:0b:03 local",
            "0 udp * * * * * * * * allow controller",
        ];
        for line in lines {
            let rule: FlowRule = line.parse().unwrap();
            let rendered = rule.to_string();
            let again: FlowRule = rendered.parse().unwrap();
            assert_eq!(rule, again, "line {line:?} did not roundtrip");
        }
    }

    #[test]
    fn malformed_rule_lines_rejected() {
        assert!("10 any *".parse::<FlowRule>().is_err());
        assert!("x any * * * * * * * * drop controller"
            .parse::<FlowRule>()
            .is_err());
        assert!("10 any * * * * * * * * fwd controller"
            .parse::<FlowRule>()
            .is_err());
        assert!("10 any * * * * * * * * drop nobody"
            .parse::<FlowRule>()
            .is_err());
    }
}
