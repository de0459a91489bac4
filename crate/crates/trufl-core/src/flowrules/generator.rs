//! Deterministic pseudorandom rule generation for benchmark workloads.
//!
//! A configurable fraction of the rules (default 1%) are coherent
//! forwarding paths between real host pairs, installed above the noise
//! priorities so reachability checking has actual multi-hop work to do; the
//! rest are random match/action noise drawn from the topology's address
//! space. Same seed, same rules.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::topology::{NetworkTopology, NodeId, NodeKind};

use super::pattern::{
    Cidr, HeaderPattern, InPortMatch, IpPattern, MacAddr, MacPattern, PortMatch, ProtocolMatch,
    VlanMatch,
};
use super::table::{Action, FlowRule, RuleOrigin};

/// Priority used by generated path rules; noise stays strictly below.
const PATH_PRIORITY: u32 = 900;
const NOISE_PRIORITY_CEILING: u32 = 900;

/// Rule generation parameters.
#[derive(Debug, Clone)]
pub struct RuleGenConfig {
    pub count: usize,
    pub seed: u64,
    /// Fraction of rules forming valid inter-switch forwarding paths.
    pub path_fraction: f64,
}

impl RuleGenConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        RuleGenConfig {
            count,
            seed,
            path_fraction: 0.01,
        }
    }
}

struct SwitchInfo {
    id: NodeId,
    port_indices: Vec<u16>,
}

/// Generate `cfg.count` rules for the topology's switches.
pub fn generate_rules(topo: &NetworkTopology, cfg: &RuleGenConfig) -> Vec<(NodeId, FlowRule)> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let switches: Vec<SwitchInfo> = topo
        .switches()
        .map(|s| SwitchInfo {
            id: s.clone(),
            port_indices: topo.node_ports(s).map(|p| p.id.index).collect(),
        })
        .collect();
    let hosts: Vec<&NodeId> = topo.hosts().collect();
    let host_ports: Vec<(MacAddr, std::net::Ipv4Addr)> = hosts
        .iter()
        .filter_map(|h| topo.node_ports(h).next())
        .filter_map(|p| p.ip.map(|ip| (p.mac, ip)))
        .collect();
    if switches.is_empty() || host_ports.is_empty() {
        return Vec::new();
    }

    let adjacency = switch_adjacency(topo);
    let mut out = Vec::with_capacity(cfg.count);

    // Path phase needs two distinct hosts; attempts are bounded so a
    // topology with no routable pairs cannot stall generation.
    let path_budget = (cfg.count as f64 * cfg.path_fraction).round() as usize;
    let mut attempts = 0usize;
    while hosts.len() >= 2 && out.len() < path_budget.min(cfg.count) && attempts < path_budget * 50 + 100
    {
        attempts += 1;
        let src = hosts[rng.random_range(0..hosts.len())];
        let dst = hosts[rng.random_range(0..hosts.len())];
        if src == dst {
            continue;
        }
        let Some(rules) = path_rules(topo, &adjacency, src, dst) else {
            continue;
        };
        for rule in rules {
            if out.len() < cfg.count {
                out.push(rule);
            }
        }
    }

    while out.len() < cfg.count {
        let sw = &switches[rng.random_range(0..switches.len())];
        out.push((sw.id.clone(), noise_rule(&mut rng, sw, &host_ports)));
    }
    out
}

/// Generate and install in one step; returns how many rules were added.
pub fn install_generated(topo: &mut NetworkTopology, cfg: &RuleGenConfig) -> usize {
    let rules = generate_rules(topo, cfg);
    let n = rules.len();
    for (switch, rule) in rules {
        topo.add_rule(&switch, rule).expect("generated switches exist");
    }
    n
}

fn switch_adjacency(topo: &NetworkTopology) -> BTreeMap<NodeId, Vec<(NodeId, u16)>> {
    let mut adj: BTreeMap<NodeId, Vec<(NodeId, u16)>> = BTreeMap::new();
    for link in topo.links() {
        let (ka, kb) = (
            topo.node_kind(&link.a.node),
            topo.node_kind(&link.b.node),
        );
        if ka == Some(NodeKind::Switch) && kb == Some(NodeKind::Switch) {
            adj.entry(link.a.node.clone())
                .or_default()
                .push((link.b.node.clone(), link.a.index));
            adj.entry(link.b.node.clone())
                .or_default()
                .push((link.a.node.clone(), link.b.index));
        }
    }
    adj
}

/// Hop-by-hop /32 forwarding rules from src's switch to dst's host port.
fn path_rules(
    topo: &NetworkTopology,
    adjacency: &BTreeMap<NodeId, Vec<(NodeId, u16)>>,
    src: &NodeId,
    dst: &NodeId,
) -> Option<Vec<(NodeId, FlowRule)>> {
    let (_, src_sw_port) = topo.host_uplink(src)?;
    let (dst_port, dst_sw_port) = topo.host_uplink(dst)?;
    let dst_ip = dst_port.ip?;
    let start = src_sw_port.id.node.clone();
    let goal = dst_sw_port.id.node.clone();

    // BFS over the switch graph.
    let mut prev: BTreeMap<NodeId, (NodeId, u16)> = BTreeMap::new();
    let mut queue = VecDeque::from([start.clone()]);
    let mut seen = std::collections::BTreeSet::from([start.clone()]);
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            break;
        }
        for (next, out_port) in adjacency.get(&cur).into_iter().flatten() {
            if seen.insert(next.clone()) {
                prev.insert(next.clone(), (cur.clone(), *out_port));
                queue.push_back(next.clone());
            }
        }
    }
    if start != goal && !prev.contains_key(&goal) {
        return None;
    }

    let header = HeaderPattern {
        dst_ip: IpPattern::Cidr(Cidr::new(dst_ip, 32).unwrap()),
        ..HeaderPattern::any()
    };
    let mut rules = vec![(
        goal.clone(),
        FlowRule::new(
            PATH_PRIORITY,
            ProtocolMatch::Any,
            header,
            Action::Forward(dst_sw_port.id.index),
            RuleOrigin::Controller,
        ),
    )];
    let mut cur = goal;
    while cur != start {
        let (parent, out_port) = prev.get(&cur)?.clone();
        rules.push((
            parent.clone(),
            FlowRule::new(
                PATH_PRIORITY,
                ProtocolMatch::Any,
                header,
                Action::Forward(out_port),
                RuleOrigin::Controller,
            ),
        ));
        cur = parent;
    }
    rules.reverse();
    Some(rules)
}

fn noise_rule(
    rng: &mut ChaCha20Rng,
    sw: &SwitchInfo,
    host_ports: &[(MacAddr, std::net::Ipv4Addr)],
) -> FlowRule {
    let priority = rng.random_range(0..NOISE_PRIORITY_CEILING);
    let protocol = match rng.random_range(0..10) {
        0..=5 => ProtocolMatch::Any,
        6..=7 => ProtocolMatch::Tcp,
        _ => ProtocolMatch::Udp,
    };
    let in_port = if rng.random_range(0..10) == 0 {
        InPortMatch::Exact(*sw.port_indices.choose(rng).unwrap())
    } else {
        InPortMatch::Any
    };
    let mac_field = |rng: &mut ChaCha20Rng| -> MacPattern {
        match rng.random_range(0..10) {
            0..=6 => MacPattern::any(),
            7..=8 => {
                let mac = host_ports.choose(rng).unwrap().0;
                MacPattern::suffix(&mac.0[3..])
            }
            _ => MacPattern::exact(host_ports.choose(rng).unwrap().0),
        }
    };
    let src_mac = mac_field(rng);
    let dst_mac = mac_field(rng);
    let ip_field = |rng: &mut ChaCha20Rng| -> IpPattern {
        if rng.random_range(0..2) == 0 {
            IpPattern::Any
        } else {
            let base = host_ports.choose(rng).unwrap().1;
            let prefix = *[8u8, 16, 24, 32].choose(rng).unwrap();
            IpPattern::Cidr(Cidr::new(base, prefix).unwrap())
        }
    };
    let src_ip = ip_field(rng);
    let dst_ip = ip_field(rng);
    let port_field = |rng: &mut ChaCha20Rng| -> PortMatch {
        match rng.random_range(0..10) {
            0..=6 => PortMatch::Any,
            7 => PortMatch::Exact(*[80u16, 443, 1024, 8080].choose(rng).unwrap()),
            _ => {
                let lo = rng.random_range(0..60000u16);
                PortMatch::Range(lo, lo + rng.random_range(0..5000))
            }
        }
    };
    let src_port = port_field(rng);
    let dst_port = port_field(rng);
    let vlan = if rng.random_range(0..20) == 0 {
        VlanMatch::Exact(rng.random_range(1..5))
    } else {
        VlanMatch::Any
    };
    let action = match rng.random_range(0..20) {
        0..=7 => Action::Drop,
        8..=14 => Action::Forward(*sw.port_indices.choose(rng).unwrap()),
        15..=17 => Action::Allow,
        _ => Action::Tunnel {
            vlan: rng.random_range(1..5),
            dst_mac: MacPattern::suffix(&host_ports.choose(rng).unwrap().0 .0[3..]),
        },
    };
    FlowRule::new(
        priority,
        protocol,
        HeaderPattern {
            in_port,
            src_mac,
            dst_mac,
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            vlan,
        },
        action,
        RuleOrigin::Controller,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_topology;

    #[test]
    fn generation_is_deterministic() {
        let topo = build_topology(16, 4, 2).unwrap();
        let cfg = RuleGenConfig::new(500, 42);
        let a = generate_rules(&topo, &cfg);
        let b = generate_rules(&topo, &cfg);
        assert_eq!(a.len(), 500);
        let render = |rules: &[(NodeId, FlowRule)]| {
            rules
                .iter()
                .map(|(s, r)| format!("{s} {r}"))
                .collect::<Vec<_>>()
        };
        assert_eq!(render(&a), render(&b));
    }

    #[test]
    fn different_seeds_differ() {
        let topo = build_topology(16, 4, 2).unwrap();
        let a = generate_rules(&topo, &RuleGenConfig::new(100, 1));
        let b = generate_rules(&topo, &RuleGenConfig::new(100, 2));
        assert_ne!(
            a.iter().map(|(_, r)| r.to_string()).collect::<Vec<_>>(),
            b.iter().map(|(_, r)| r.to_string()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn installed_rules_keep_topology_consistent() {
        let mut topo = build_topology(16, 4, 2).unwrap();
        let n = install_generated(&mut topo, &RuleGenConfig::new(1000, 7));
        assert_eq!(n, 1000);
        assert_eq!(topo.rule_count(), 1000);
        assert_eq!(topo.validate(), vec![]);
    }

    #[test]
    fn path_rules_create_real_reachability() {
        use crate::flowrules::simulate::brute_force_reachability;
        let mut topo = build_topology(16, 4, 2).unwrap();
        install_generated(&mut topo, &RuleGenConfig::new(2000, 3));
        let hosts: Vec<NodeId> = topo.hosts().cloned().collect();
        let mut reached = 0;
        for src in &hosts {
            for dst in &hosts {
                if src != dst && brute_force_reachability(&topo, src, dst).unwrap() {
                    reached += 1;
                }
            }
        }
        assert!(reached > 0, "no generated path delivered");
    }
}
