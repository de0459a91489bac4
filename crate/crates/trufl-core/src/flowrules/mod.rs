//! OpenFlow-style rule model, forwarding simulation and SLA compliance
//! checking.
//!
//! A rule is (priority, protocol, header pattern, action, stats); matching,
//! table lookup and the multi-hop simulator are pure over an immutable
//! topology, with statistics kept in atomic counters. The SLA checker
//! searches for witness packets that bypass drop intents directly, across
//! multiple switches, or through layer-2 tunnels.

mod generator;
mod pattern;
mod simulate;
mod sla;
mod table;

pub use generator::{generate_rules, install_generated, RuleGenConfig};
pub use pattern::{
    Cidr, HeaderPattern, InPortMatch, IpPattern, MacAddr, MacPattern, Packet, PatternParseError,
    PortMatch, Protocol, ProtocolMatch, VlanMatch,
};
pub use simulate::{
    brute_force_reachability, default_hop_limit, simulate_forward, Disposition, RuleRef, SimError,
    Trace, PROBE_PACKET_SIZE, PROBE_TRANSPORT_PORTS,
};
pub use sla::{
    check_sla, check_unauthorized_rules, end_to_end_check, InvolvedRule, SlaIntent, SlaPolicy,
    Verdict, ViolatedIntent, ViolationKind, ViolationReport,
};
pub use table::{matches, Action, FlowRule, FlowTable, RuleOrigin, RuleParseError, RuleStats};
