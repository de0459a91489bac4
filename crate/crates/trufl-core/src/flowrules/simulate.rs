//! Multi-hop forwarding simulation over per-switch flow tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NetworkTopology, NodeId, NodeKind, Port, PortId};

use super::pattern::{CompiledPacket, Packet, Protocol};
use super::table::Action;

/// Transport ports probed by the witness search and the reachability oracle.
/// Both sides enumerate the same packet set so their verdicts are comparable.
pub const PROBE_TRANSPORT_PORTS: [u16; 3] = [80, 443, 1024];

/// Payload size of probe packets.
pub const PROBE_PACKET_SIZE: u32 = 64;

/// Where a packet ended up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum Disposition {
    /// Reached the host port owning its destination MAC; `path` lists the
    /// switches that performed lookups, in order.
    Delivered { path: Vec<NodeId> },
    /// Discarded: an explicit drop rule, a table miss, a control-plane port,
    /// or a host NIC that is not the addressed destination.
    Dropped { at: NodeId },
    /// Still in flight after the hop limit.
    Looped { path: Vec<NodeId> },
    /// Structural dead end: missing port, unlinked egress, unresolvable
    /// tunnel or allow target.
    NoRoute,
}

/// A rule position inside a switch table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleRef {
    pub switch: NodeId,
    pub index: usize,
}

/// Simulation outcome plus every rule the packet matched on its way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub disposition: Disposition,
    pub rules: Vec<RuleRef>,
}

impl Trace {
    fn end(disposition: Disposition, rules: Vec<RuleRef>) -> Trace {
        Trace { disposition, rules }
    }
}

/// Hop limit used when callers do not supply one.
pub fn default_hop_limit(topo: &NetworkTopology) -> usize {
    topo.switches().count() + 1
}

enum Step {
    Continue(PortId),
    Done(Disposition),
}

/// Walk a packet through the data plane starting at `ingress`.
///
/// `ingress` may be a host port (the packet first crosses the access link)
/// or a switch port. Each switch lookup rewrites the packet's in-port field,
/// updates the matched rule's statistics and applies its action. Forwarding
/// into a controller or authority port drops the packet: control-plane nodes
/// never forward. Delivery requires the receiving host port to own the
/// packet's destination MAC; a frame arriving at any other NIC is dropped
/// there.
pub fn simulate_forward(
    topo: &NetworkTopology,
    pkt: &Packet,
    ingress: &PortId,
    hop_limit: usize,
) -> Trace {
    let mut rules = Vec::new();
    if topo.port(ingress).is_none() || hop_limit == 0 {
        return Trace::end(Disposition::NoRoute, rules);
    }
    let mut cur = match topo.node_kind(&ingress.node) {
        Some(NodeKind::Host) => match topo.peer(ingress) {
            Some(peer) => peer.clone(),
            None => return Trace::end(Disposition::NoRoute, rules),
        },
        Some(NodeKind::Switch) => ingress.clone(),
        _ => return Trace::end(Disposition::NoRoute, rules),
    };

    let now = topo.advance_tick();
    let mut cpkt = CompiledPacket::new(pkt);
    let mut path: Vec<NodeId> = Vec::new();

    for _ in 0..hop_limit {
        let sw = cur.node.clone();
        if topo.node_kind(&sw) != Some(NodeKind::Switch) {
            return Trace::end(Disposition::NoRoute, rules);
        }
        cpkt.set_in_port(cur.index);
        path.push(sw.clone());
        let table = topo.table(&sw).expect("switch nodes always carry a table");
        let Some((index, rule)) = table.lookup_compiled(&cpkt) else {
            // Table miss: no controller punt is modeled, the packet dies here.
            return Trace::end(Disposition::Dropped { at: sw }, rules);
        };
        rule.stats.record(pkt.size_bytes, now);
        rules.push(RuleRef {
            switch: sw.clone(),
            index,
        });

        let step = match rule.action {
            Action::Drop => Step::Done(Disposition::Dropped { at: sw }),
            Action::Forward(out) => egress(topo, pkt, &sw, out, &path),
            Action::Allow => match topo.port_by_mac(pkt.dst_mac) {
                None => Step::Done(Disposition::NoRoute),
                Some(target) => {
                    let local = topo
                        .node_ports(&sw)
                        .find(|p| topo.peer(&p.id) == Some(&target.id));
                    match local {
                        Some(p) => egress(topo, pkt, &sw, p.id.index, &path),
                        None => Step::Done(Disposition::NoRoute),
                    }
                }
            },
            Action::Tunnel { vlan, dst_mac } => {
                let target = topo.ports().find(|p| {
                    topo.node_kind(&p.id.node) == Some(NodeKind::Host)
                        && p.vlan == Some(vlan)
                        && dst_mac.matches(p.mac)
                });
                Step::Done(match target {
                    None => Disposition::NoRoute,
                    Some(t) if t.mac == pkt.dst_mac => Disposition::Delivered { path: path.clone() },
                    Some(t) => Disposition::Dropped {
                        at: t.id.node.clone(),
                    },
                })
            }
        };
        match step {
            Step::Continue(next) => cur = next,
            Step::Done(d) => return Trace::end(d, rules),
        }
    }
    Trace::end(Disposition::Looped { path }, rules)
}

fn egress(
    topo: &NetworkTopology,
    pkt: &Packet,
    switch: &NodeId,
    out_port: u16,
    path: &[NodeId],
) -> Step {
    let out_id = PortId::new(switch.clone(), out_port);
    if topo.port(&out_id).is_none() {
        return Step::Done(Disposition::NoRoute);
    }
    let Some(far) = topo.peer(&out_id) else {
        return Step::Done(Disposition::NoRoute);
    };
    match topo.node_kind(&far.node) {
        Some(NodeKind::Switch) => Step::Continue(far.clone()),
        Some(NodeKind::Host) => {
            let far_port = topo.port(far).expect("linked ports exist");
            if far_port.mac == pkt.dst_mac {
                Step::Done(Disposition::Delivered {
                    path: path.to_vec(),
                })
            } else {
                Step::Done(Disposition::Dropped {
                    at: far.node.clone(),
                })
            }
        }
        // Controllers and authorities terminate data-plane traffic.
        Some(_) => Step::Done(Disposition::Dropped {
            at: far.node.clone(),
        }),
        None => Step::Done(Disposition::NoRoute),
    }
}

/// Reachability oracle errors.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown host {0}")]
    UnknownHost(NodeId),
    #[error("{0} is not a host")]
    NotAHost(NodeId),
}

/// The shared probe set for a source/destination port pair: both protocols,
/// every combination of the probe transport ports, and VLAN untagged plus
/// the source port's tag when it has one.
pub(crate) fn probe_packets(src: &Port, dst: &Port) -> Vec<Packet> {
    let (Some(src_ip), Some(dst_ip)) = (src.ip, dst.ip) else {
        return Vec::new();
    };
    let mut vlans = vec![None];
    if src.vlan.is_some() {
        vlans.push(src.vlan);
    }
    let mut out = Vec::new();
    for protocol in [Protocol::Tcp, Protocol::Udp] {
        for &src_port in &PROBE_TRANSPORT_PORTS {
            for &dst_port in &PROBE_TRANSPORT_PORTS {
                for &vlan in &vlans {
                    out.push(Packet {
                        in_port: 0,
                        protocol,
                        src_mac: src.mac,
                        dst_mac: dst.mac,
                        src_ip,
                        dst_ip,
                        src_port,
                        dst_port,
                        vlan,
                        size_bytes: PROBE_PACKET_SIZE,
                    });
                }
            }
        }
    }
    out
}

/// Exhaustively probe whether any packet from `src` reaches `dst`, using the
/// documented probe set. Ground truth for the policy checker.
pub fn brute_force_reachability(
    topo: &NetworkTopology,
    src: &NodeId,
    dst: &NodeId,
) -> Result<bool, SimError> {
    for node in [src, dst] {
        match topo.node_kind(node) {
            None => return Err(SimError::UnknownHost(node.clone())),
            Some(NodeKind::Host) => {}
            Some(_) => return Err(SimError::NotAHost(node.clone())),
        }
    }
    let Some((src_port, ingress)) = topo.host_uplink(src) else {
        return Ok(false);
    };
    let Some(dst_port) = topo.node_ports(dst).next() else {
        return Ok(false);
    };
    let hop_limit = default_hop_limit(topo);
    for mut pkt in probe_packets(src_port, dst_port) {
        pkt.in_port = ingress.id.index;
        let trace = simulate_forward(topo, &pkt, &ingress.id, hop_limit);
        if matches!(trace.disposition, Disposition::Delivered { .. }) {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowrules::{
        FlowRule, HeaderPattern, InPortMatch, ProtocolMatch, RuleOrigin,
    };
    use crate::topology::motivating_example;

    fn motivating_packet() -> Packet {
        Packet {
            in_port: 1,
            protocol: Protocol::Tcp,
            src_mac: "aa:bb:cc:00:0a:01".parse().unwrap(),
            dst_mac: "aa:bb:cc:00:0b:03".parse().unwrap(),
            src_ip: "192.168.4.2".parse().unwrap(),
            dst_ip: "172.16.10.3".parse().unwrap(),
            src_port: 80,
            dst_port: 80,
            vlan: None,
            size_bytes: 64,
        }
    }

    #[test]
    fn motivating_packet_is_delivered_via_both_switches() {
        let (topo, _) = motivating_example();
        let trace = simulate_forward(
            &topo,
            &motivating_packet(),
            &PortId::new("switch1", 1),
            default_hop_limit(&topo),
        );
        assert_eq!(
            trace.disposition,
            Disposition::Delivered {
                path: vec![NodeId::new("switch1"), NodeId::new("switch2")]
            }
        );
        assert_eq!(trace.rules.len(), 2);
    }

    #[test]
    fn injection_at_host_port_crosses_access_link() {
        let (topo, _) = motivating_example();
        let trace = simulate_forward(
            &topo,
            &motivating_packet(),
            &PortId::new("h1", 1),
            default_hop_limit(&topo),
        );
        assert!(matches!(trace.disposition, Disposition::Delivered { .. }));
    }

    #[test]
    fn drop_rule_stops_packet_at_first_switch() {
        let (mut topo, _) = motivating_example();
        topo.add_rule(
            &NodeId::new("switch1"),
            FlowRule::new(
                50,
                ProtocolMatch::Any,
                HeaderPattern::any(),
                Action::Drop,
                RuleOrigin::Controller,
            ),
        )
        .unwrap();
        let trace = simulate_forward(
            &topo,
            &motivating_packet(),
            &PortId::new("switch1", 1),
            default_hop_limit(&topo),
        );
        assert_eq!(
            trace.disposition,
            Disposition::Dropped {
                at: NodeId::new("switch1")
            }
        );
    }

    #[test]
    fn table_miss_is_an_implicit_drop() {
        let (topo, _) = motivating_example();
        let mut pkt = motivating_packet();
        pkt.dst_mac = "aa:bb:cc:00:0b:04".parse().unwrap();
        let trace = simulate_forward(
            &topo,
            &pkt,
            &PortId::new("switch1", 1),
            default_hop_limit(&topo),
        );
        assert_eq!(
            trace.disposition,
            Disposition::Dropped {
                at: NodeId::new("switch1")
            }
        );
        assert!(trace.rules.is_empty());
    }

    #[test]
    fn mutual_wildcard_forwarding_loops_at_hop_limit() {
        let (mut topo, _) = motivating_example();
        for sw in ["switch1", "switch2"] {
            topo.add_rule(
                &NodeId::new(sw),
                FlowRule::new(
                    99,
                    ProtocolMatch::Any,
                    HeaderPattern {
                        in_port: InPortMatch::Any,
                        ..HeaderPattern::any()
                    },
                    Action::Forward(3),
                    RuleOrigin::Controller,
                ),
            )
            .unwrap();
        }
        let trace = simulate_forward(&topo, &motivating_packet(), &PortId::new("switch1", 1), 5);
        match trace.disposition {
            Disposition::Looped { path } => assert_eq!(path.len(), 5),
            other => panic!("expected loop, got {other:?}"),
        }
    }

    #[test]
    fn stats_conservation_bytes_equal_size_times_hops() {
        let (topo, _) = motivating_example();
        let pkt = motivating_packet();
        let trace = simulate_forward(
            &topo,
            &pkt,
            &PortId::new("switch1", 1),
            default_hop_limit(&topo),
        );
        let hops = match &trace.disposition {
            Disposition::Delivered { path } => path.len() as u64,
            other => panic!("expected delivery, got {other:?}"),
        };
        let total: u64 = topo
            .tables()
            .flat_map(|(_, t)| t.rules().iter())
            .map(|r| r.stats.bytes())
            .sum();
        assert_eq!(total, u64::from(pkt.size_bytes) * hops);
    }

    #[test]
    fn reachability_oracle_on_the_motivating_pair() {
        let (topo, _) = motivating_example();
        assert!(brute_force_reachability(&topo, &NodeId::new("h1"), &NodeId::new("h3")).unwrap());
        // No reverse rules exist.
        assert!(!brute_force_reachability(&topo, &NodeId::new("h3"), &NodeId::new("h1")).unwrap());
        // Hairpin to self is not routed.
        assert!(!brute_force_reachability(&topo, &NodeId::new("h1"), &NodeId::new("h1")).unwrap());
        assert!(brute_force_reachability(&topo, &NodeId::new("nope"), &NodeId::new("h1")).is_err());
    }
}
