//! Parameterized topology generation and the two-switch trust-violation
//! scenario.
//!
//! Generated addressing is deterministic: host `k` of domain `d` gets IP
//! `10.d.(k/250).(k%250+1)` and MAC `02:00:00:dd:hi:lo` with `hi:lo` the
//! 16-bit host ordinal; switch and controller ports use the disjoint
//! `02:01:...`/`02:02:...` prefixes. Identical parameters therefore produce
//! byte-identical topologies.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use crate::flowrules::{
    Action, Cidr, FlowRule, HeaderPattern, MacAddr, MacPattern, ProtocolMatch,
    RuleOrigin, SlaIntent, SlaPolicy, Verdict, VlanMatch,
};

use super::{NetworkTopology, NodeId, NodeKind, PortId, SecurityDomain, TopologyError};

fn host_mac(domain: u32, ordinal: usize) -> MacAddr {
    MacAddr([
        0x02,
        0x00,
        0x00,
        domain as u8,
        (ordinal >> 8) as u8,
        (ordinal & 0xff) as u8,
    ])
}

fn host_ip(domain: u32, ordinal: usize) -> Ipv4Addr {
    Ipv4Addr::new(
        10,
        domain as u8,
        (ordinal / 250) as u8,
        (ordinal % 250 + 1) as u8,
    )
}

fn switch_port_mac(switch_ordinal: usize, port: u16) -> MacAddr {
    MacAddr([
        0x02,
        0x01,
        (switch_ordinal >> 8) as u8,
        (switch_ordinal & 0xff) as u8,
        (port >> 8) as u8,
        (port & 0xff) as u8,
    ])
}

fn controller_port_mac(controller_ordinal: usize, port: u16) -> MacAddr {
    MacAddr([
        0x02,
        0x02,
        controller_ordinal as u8,
        0x00,
        (port >> 8) as u8,
        (port & 0xff) as u8,
    ])
}

/// Tracks the next free port index per node while wiring links.
struct PortAllocator {
    next: std::collections::BTreeMap<NodeId, u16>,
}

impl PortAllocator {
    fn new() -> Self {
        PortAllocator {
            next: Default::default(),
        }
    }

    fn alloc(&mut self, node: &NodeId) -> u16 {
        let slot = self.next.entry(node.clone()).or_insert(1);
        let idx = *slot;
        *slot += 1;
        idx
    }
}

/// Generate a multi-domain topology.
///
/// Switches (`n_hosts / hosts_per_switch` of them) are distributed
/// round-robin over `n_domains` domains, chained linearly within each domain
/// and each linked to the domain controller; the first switches of adjacent
/// domains share a gateway link; hosts attach evenly, `hosts_per_switch` per
/// switch. One root authority node is always present.
pub fn build_topology(
    n_hosts: usize,
    hosts_per_switch: usize,
    n_domains: usize,
) -> Result<NetworkTopology, TopologyError> {
    if n_hosts == 0 || hosts_per_switch == 0 || n_domains == 0 {
        return Err(TopologyError::EmptyParameters);
    }
    if !n_hosts.is_multiple_of(hosts_per_switch) {
        return Err(TopologyError::NotDivisible {
            n_hosts,
            hosts_per_switch,
        });
    }
    let n_switches = n_hosts / hosts_per_switch;
    if n_switches < n_domains {
        return Err(TopologyError::TooFewSwitches {
            switches: n_switches,
            domains: n_domains,
        });
    }
    if n_domains > 256 {
        return Err(TopologyError::TooManyDomains(n_domains));
    }

    let mut topo = NetworkTopology::new();
    let mut alloc = PortAllocator::new();

    topo.add_node("root", NodeKind::RootAuthority)?;
    let controllers: Vec<NodeId> = (0..n_domains).map(|d| NodeId::new(format!("c{d}"))).collect();
    for c in &controllers {
        topo.add_node(c.clone(), NodeKind::Controller)?;
    }
    let switches: Vec<NodeId> = (0..n_switches).map(|i| NodeId::new(format!("s{i}"))).collect();
    for s in &switches {
        topo.add_node(s.clone(), NodeKind::Switch)?;
    }

    // Switch si joins domain i mod n_domains.
    let mut domain_switches: Vec<Vec<usize>> = vec![Vec::new(); n_domains];
    for (i, _) in switches.iter().enumerate() {
        domain_switches[i % n_domains].push(i);
    }

    // Hosts attach in global order, hosts_per_switch to each switch; the
    // per-domain ordinal drives the address scheme.
    let mut domain_hosts: Vec<Vec<NodeId>> = vec![Vec::new(); n_domains];
    let mut next_ordinal: Vec<usize> = vec![0; n_domains];
    let mut host_links: Vec<(NodeId, NodeId)> = Vec::new();
    for j in 0..n_hosts {
        let switch_idx = j / hosts_per_switch;
        let domain = switch_idx % n_domains;
        let ordinal = next_ordinal[domain];
        next_ordinal[domain] += 1;
        if ordinal >= 250 * 256 {
            return Err(TopologyError::TooManyHosts {
                domain: domain as u32,
                hosts: next_ordinal[domain],
            });
        }
        let host = NodeId::new(format!("h{j}"));
        topo.add_node(host.clone(), NodeKind::Host)?;
        let port = PortId::new(host.clone(), 1);
        topo.add_port(
            port,
            host_mac(domain as u32, ordinal),
            Some(host_ip(domain as u32, ordinal)),
            None,
        )?;
        alloc.alloc(&host);
        domain_hosts[domain].push(host.clone());
        host_links.push((host, switches[switch_idx].clone()));
    }

    let wire = |topo: &mut NetworkTopology,
                    alloc: &mut PortAllocator,
                    a: &NodeId,
                    b: &NodeId|
     -> Result<(), TopologyError> {
        let pa = match topo.node_kind(a).unwrap() {
            NodeKind::Host => PortId::new(a.clone(), 1),
            _ => {
                let idx = alloc.alloc(a);
                let pid = PortId::new(a.clone(), idx);
                let mac = port_mac_for(topo, a, idx);
                topo.add_port(pid.clone(), mac, None, None)?;
                pid
            }
        };
        let idx = alloc.alloc(b);
        let pb = PortId::new(b.clone(), idx);
        let mac = port_mac_for(topo, b, idx);
        topo.add_port(pb.clone(), mac, None, None)?;
        topo.add_link(pa, pb)
    };

    // Access links.
    for (host, switch) in &host_links {
        wire(&mut topo, &mut alloc, host, switch)?;
    }
    // Intra-domain switch chain.
    for members in &domain_switches {
        for pair in members.windows(2) {
            let a = switches[pair[0]].clone();
            let b = switches[pair[1]].clone();
            wire(&mut topo, &mut alloc, &a, &b)?;
        }
    }
    // Switch-to-controller links.
    for (d, members) in domain_switches.iter().enumerate() {
        for &i in members {
            let s = switches[i].clone();
            let c = controllers[d].clone();
            wire(&mut topo, &mut alloc, &s, &c)?;
        }
    }
    // Gateway link between the first switches of adjacent domains.
    for d in 0..n_domains.saturating_sub(1) {
        let a = switches[domain_switches[d][0]].clone();
        let b = switches[domain_switches[d + 1][0]].clone();
        wire(&mut topo, &mut alloc, &a, &b)?;
    }

    for d in 0..n_domains {
        topo.add_domain(SecurityDomain {
            id: d as u32,
            controller: controllers[d].clone(),
            switches: domain_switches[d]
                .iter()
                .map(|&i| switches[i].clone())
                .collect(),
            hosts: domain_hosts[d].iter().cloned().collect(),
        });
    }

    Ok(topo)
}

fn port_mac_for(topo: &NetworkTopology, node: &NodeId, index: u16) -> MacAddr {
    let ordinal = node
        .as_str()
        .trim_start_matches(|c: char| c.is_ascii_alphabetic())
        .parse::<usize>()
        .unwrap_or(0);
    match topo.node_kind(node) {
        Some(NodeKind::Controller) => controller_port_mac(ordinal, index),
        _ => switch_port_mac(ordinal, index),
    }
}

/// VLAN used throughout the two-switch scenario.
pub const MOTIVATING_TUNNEL_VLAN: u16 = 1;

/// The two-switch, four-host trust-violation scenario.
///
/// switch1 carries hosts in 192.168.4.0/24 and forwards traffic for MAC
/// suffix `00:0b:03` toward switch2; switch2 accepts any source toward that
/// MAC. The returned policy contains a single intent dropping all traffic
/// from 192.168.4.0/24 to 172.16.10.0/16, which the pre-loaded rules bypass
/// indirectly.
pub fn motivating_example() -> (NetworkTopology, SlaPolicy) {
    let mut topo = NetworkTopology::new();
    topo.add_node("root", NodeKind::RootAuthority).unwrap();
    topo.add_node("c0", NodeKind::Controller).unwrap();
    topo.add_node("switch1", NodeKind::Switch).unwrap();
    topo.add_node("switch2", NodeKind::Switch).unwrap();

    let hosts: [(&str, &str, &str); 4] = [
        ("h1", "aa:bb:cc:00:0a:01", "192.168.4.2"),
        ("h2", "aa:bb:cc:00:0a:02", "192.168.4.3"),
        ("h3", "aa:bb:cc:00:0b:03", "172.16.10.3"),
        ("h4", "aa:bb:cc:00:0b:04", "172.16.10.4"),
    ];
    for (name, mac, ip) in hosts {
        topo.add_node(name, NodeKind::Host).unwrap();
        topo.add_port(
            PortId::new(name, 1),
            mac.parse().unwrap(),
            Some(ip.parse().unwrap()),
            Some(MOTIVATING_TUNNEL_VLAN),
        )
        .unwrap();
    }

    // switch1 ports: 1 h1, 2 h2, 3 switch2, 4 c0; switch2 mirrors it.
    for (sw, ordinal) in [("switch1", 1usize), ("switch2", 2usize)] {
        for idx in 1..=4u16 {
            topo.add_port(PortId::new(sw, idx), switch_port_mac(ordinal, idx), None, None)
                .unwrap();
        }
    }
    for idx in 1..=2u16 {
        topo.add_port(
            PortId::new("c0", idx),
            controller_port_mac(0, idx),
            None,
            None,
        )
        .unwrap();
    }

    topo.add_link(PortId::new("h1", 1), PortId::new("switch1", 1)).unwrap();
    topo.add_link(PortId::new("h2", 1), PortId::new("switch1", 2)).unwrap();
    topo.add_link(PortId::new("h3", 1), PortId::new("switch2", 1)).unwrap();
    topo.add_link(PortId::new("h4", 1), PortId::new("switch2", 2)).unwrap();
    topo.add_link(PortId::new("switch1", 3), PortId::new("switch2", 3)).unwrap();
    topo.add_link(PortId::new("switch1", 4), PortId::new("c0", 1)).unwrap();
    topo.add_link(PortId::new("switch2", 4), PortId::new("c0", 2)).unwrap();

    topo.add_domain(SecurityDomain {
        id: 0,
        controller: NodeId::new("c0"),
        switches: BTreeSet::from([NodeId::new("switch1"), NodeId::new("switch2")]),
        hosts: hosts.iter().map(|(n, _, _)| NodeId::new(*n)).collect(),
    });

    // Forward traffic for the 00:0b:03 host out the inter-switch port.
    topo.add_rule(
        &NodeId::new("switch1"),
        FlowRule::new(
            10,
            ProtocolMatch::Any,
            HeaderPattern {
                src_mac: MacPattern::suffix(&[0x00, 0x0a, 0x01]),
                dst_mac: MacPattern::suffix(&[0x00, 0x0b, 0x03]),
                ..HeaderPattern::any()
            },
            Action::Forward(3),
            RuleOrigin::Controller,
        ),
    )
    .unwrap();
    // Accept any source toward the 00:0b:03 host.
    topo.add_rule(
        &NodeId::new("switch2"),
        FlowRule::new(
            10,
            ProtocolMatch::Any,
            HeaderPattern {
                dst_mac: MacPattern::suffix(&[0x00, 0x0b, 0x03]),
                ..HeaderPattern::any()
            },
            Action::Allow,
            RuleOrigin::Controller,
        ),
    )
    .unwrap();

    let policy = SlaPolicy::new(vec![SlaIntent {
        protocol: ProtocolMatch::Any,
        src: Cidr::new("192.168.4.0".parse().unwrap(), 24).unwrap(),
        dst: Cidr::new("172.16.10.0".parse().unwrap(), 16).unwrap(),
        verdict: Verdict::Drop,
    }]);

    (topo, policy)
}

/// The out-of-band layer-2 tunnel a compromised switch1 installs: VLAN-1
/// traffic from the 00:0a:01 host is tunneled straight to the 00:0b:03 host,
/// bypassing IP matching entirely. Local origin, higher priority than the
/// controller rules.
pub fn rogue_tunnel_rule() -> FlowRule {
    FlowRule::new(
        100,
        ProtocolMatch::Any,
        HeaderPattern {
            src_mac: MacPattern::suffix(&[0x00, 0x0a, 0x01]),
            vlan: VlanMatch::Exact(MOTIVATING_TUNNEL_VLAN),
            ..HeaderPattern::any()
        },
        Action::Tunnel {
            vlan: MOTIVATING_TUNNEL_VLAN,
            dst_mac: MacPattern::suffix(&[0x00, 0x0b, 0x03]),
        },
        RuleOrigin::Local,
    )
}
