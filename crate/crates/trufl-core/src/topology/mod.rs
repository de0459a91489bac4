//! The modeled multi-tenant SDN network: nodes, ports, links, security
//! domains and per-switch flow tables.
//!
//! A topology is built once (by the generator, the scenario fixtures or the
//! file parser) and is then structurally immutable; the only interior
//! mutability is the per-rule statistics counters and the virtual clock,
//! both atomic, so a topology can be shared across simulation threads.
//! Controllers and authorities are nodes like any other but never forward
//! data-plane traffic.

mod build;
mod format;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowrules::{FlowRule, FlowTable, InPortMatch, MacAddr};

pub use build::{build_topology, motivating_example, rogue_tunnel_rule, MOTIVATING_TUNNEL_VLAN};
pub use format::{parse_rules_file, FormatError};

/// Opaque node identifier, unique within a topology.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId::new(s)
    }
}

/// Role of a node in the planes of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Host,
    Switch,
    Controller,
    RootAuthority,
    BridgeAuthority,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeKind::Host => "host",
            NodeKind::Switch => "switch",
            NodeKind::Controller => "controller",
            NodeKind::RootAuthority => "root-authority",
            NodeKind::BridgeAuthority => "bridge-authority",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for NodeKind {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "host" => Ok(NodeKind::Host),
            "switch" => Ok(NodeKind::Switch),
            "controller" => Ok(NodeKind::Controller),
            "root-authority" => Ok(NodeKind::RootAuthority),
            "bridge-authority" => Ok(NodeKind::BridgeAuthority),
            _ => Err(TopologyError::UnknownNodeKind(s.to_string())),
        }
    }
}

/// A port is addressed by its owning node and a 1-based index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortId {
    pub node: NodeId,
    pub index: u16,
}

impl PortId {
    pub fn new(node: impl Into<NodeId>, index: u16) -> Self {
        PortId {
            node: node.into(),
            index,
        }
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.index)
    }
}

/// A network interface: hardware address plus optional IP and VLAN tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub id: PortId,
    pub mac: MacAddr,
    pub ip: Option<std::net::Ipv4Addr>,
    pub vlan: Option<u16>,
}

/// An undirected link between two ports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub a: PortId,
    pub b: PortId,
}

/// A controller plus the switches and hosts it governs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityDomain {
    pub id: u32,
    pub controller: NodeId,
    pub switches: std::collections::BTreeSet<NodeId>,
    pub hosts: std::collections::BTreeSet<NodeId>,
}

/// Construction-time errors. Integrity violations that can only be created
/// by mutation are reported by [`NetworkTopology::validate`] instead.
#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("host count, hosts per switch and domain count must all be positive")]
    EmptyParameters,
    #[error("{n_hosts} hosts not divisible by {hosts_per_switch} hosts per switch")]
    NotDivisible { n_hosts: usize, hosts_per_switch: usize },
    #[error("{switches} switches cannot fill {domains} domains")]
    TooFewSwitches { switches: usize, domains: usize },
    #[error("at most 256 domains are addressable, got {0}")]
    TooManyDomains(usize),
    #[error("domain {domain} exceeds the addressable host count ({hosts})")]
    TooManyHosts { domain: u32, hosts: usize },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate port {0}")]
    DuplicatePort(PortId),
    #[error("port index 0 is reserved ({0})")]
    ZeroPortIndex(PortId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown port {0}")]
    UnknownPort(PortId),
    #[error("port {0} is already linked")]
    PortAlreadyLinked(PortId),
    #[error("cannot link port {0} to itself")]
    SelfLink(PortId),
    #[error("node {0} is not a switch")]
    NotASwitch(NodeId),
    #[error("unknown node kind {0:?}")]
    UnknownNodeKind(String),
}

/// One violated invariant, naming the offending identifier.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegrityError {
    #[error("port {0} is owned by a node that does not exist")]
    UnknownPortOwner(PortId),
    #[error("port {0} has index 0; indices start at 1")]
    ZeroPortIndex(PortId),
    #[error("link endpoint {0} does not resolve to an existing port")]
    DanglingLinkEndpoint(PortId),
    #[error("link connects port {0} to itself")]
    SelfLink(PortId),
    #[error("port {0} appears in more than one link")]
    PortReused(PortId),
    #[error("topology has no root authority")]
    MissingRootAuthority,
    #[error("topology has {0} root authorities, expected exactly one")]
    MultipleRootAuthorities(usize),
    #[error("topology has {0} bridge authorities, expected at most one")]
    MultipleBridgeAuthorities(usize),
    #[error("host port {0} is missing an IP address")]
    HostPortMissingIp(PortId),
    #[error("{kind} {node} belongs to no security domain")]
    NodeInNoDomain { kind: NodeKind, node: NodeId },
    #[error("{kind} {node} belongs to {count} security domains")]
    NodeInMultipleDomains {
        kind: NodeKind,
        node: NodeId,
        count: usize,
    },
    #[error("domain {domain} controller {node} is missing or not a controller")]
    BadDomainController { domain: u32, node: NodeId },
    #[error("domain {domain} member {node} is missing or of the wrong kind")]
    BadDomainMember { domain: u32, node: NodeId },
    #[error("host {host} is attached to switch {switch} outside its domain")]
    ForeignHostAttachment { host: NodeId, switch: NodeId },
    #[error("flow table attached to {0}, which is not a switch")]
    TableOnNonSwitch(NodeId),
    #[error("rule {index} on {switch} matches in-port {port}, which does not exist")]
    RuleInPortUnknown {
        switch: NodeId,
        index: usize,
        port: u16,
    },
}

/// The complete modeled network.
#[derive(Debug, Default)]
pub struct NetworkTopology {
    nodes: BTreeMap<NodeId, NodeKind>,
    ports: BTreeMap<PortId, Port>,
    links: Vec<Link>,
    peers: BTreeMap<PortId, PortId>,
    mac_index: BTreeMap<MacAddr, PortId>,
    domains: Vec<SecurityDomain>,
    tables: BTreeMap<NodeId, FlowTable>,
    tick: AtomicU64,
}

impl NetworkTopology {
    pub fn new() -> Self {
        NetworkTopology::default()
    }

    pub fn add_node(&mut self, id: impl Into<NodeId>, kind: NodeKind) -> Result<(), TopologyError> {
        let id = id.into();
        if self.nodes.contains_key(&id) {
            return Err(TopologyError::DuplicateNode(id));
        }
        if kind == NodeKind::Switch {
            self.tables.insert(id.clone(), FlowTable::new());
        }
        self.nodes.insert(id, kind);
        Ok(())
    }

    /// Remove a node record without cascading. Ports, links and domain
    /// memberships that referenced it become integrity errors; this is the
    /// hook tests use to manufacture invalid topologies.
    pub fn remove_node(&mut self, id: &NodeId) -> bool {
        self.tables.remove(id);
        self.nodes.remove(id).is_some()
    }

    pub fn add_port(
        &mut self,
        id: PortId,
        mac: MacAddr,
        ip: Option<std::net::Ipv4Addr>,
        vlan: Option<u16>,
    ) -> Result<(), TopologyError> {
        if id.index == 0 {
            return Err(TopologyError::ZeroPortIndex(id));
        }
        if !self.nodes.contains_key(&id.node) {
            return Err(TopologyError::UnknownNode(id.node.clone()));
        }
        if self.ports.contains_key(&id) {
            return Err(TopologyError::DuplicatePort(id));
        }
        self.mac_index.entry(mac).or_insert_with(|| id.clone());
        self.ports.insert(
            id.clone(),
            Port {
                id,
                mac,
                ip,
                vlan,
            },
        );
        Ok(())
    }

    pub fn set_port_vlan(&mut self, id: &PortId, vlan: Option<u16>) -> Result<(), TopologyError> {
        match self.ports.get_mut(id) {
            Some(port) => {
                port.vlan = vlan;
                Ok(())
            }
            None => Err(TopologyError::UnknownPort(id.clone())),
        }
    }

    pub fn add_link(&mut self, a: PortId, b: PortId) -> Result<(), TopologyError> {
        if a == b {
            return Err(TopologyError::SelfLink(a));
        }
        for p in [&a, &b] {
            if !self.ports.contains_key(p) {
                return Err(TopologyError::UnknownPort(p.clone()));
            }
            if self.peers.contains_key(p) {
                return Err(TopologyError::PortAlreadyLinked(p.clone()));
            }
        }
        self.peers.insert(a.clone(), b.clone());
        self.peers.insert(b.clone(), a.clone());
        self.links.push(Link { a, b });
        Ok(())
    }

    pub fn add_domain(&mut self, domain: SecurityDomain) {
        self.domains.push(domain);
    }

    /// Enroll a switch into an existing domain (used when a device joins the
    /// fabric after construction, e.g. rogue injection).
    pub fn add_domain_switch(&mut self, domain_id: u32, switch: NodeId) -> Result<(), TopologyError> {
        match self.domains.iter_mut().find(|d| d.id == domain_id) {
            Some(domain) => {
                domain.switches.insert(switch);
                Ok(())
            }
            None => Err(TopologyError::UnknownNode(NodeId::new(format!(
                "domain {domain_id}"
            )))),
        }
    }

    /// Append a rule to a switch's flow table, returning its index.
    pub fn add_rule(&mut self, switch: &NodeId, rule: FlowRule) -> Result<usize, TopologyError> {
        if self.nodes.get(switch) != Some(&NodeKind::Switch) {
            return Err(TopologyError::NotASwitch(switch.clone()));
        }
        rule.stats.set_installed_at(self.tick.load(Ordering::Relaxed));
        Ok(self
            .tables
            .get_mut(switch)
            .expect("switch nodes always carry a table")
            .push(rule))
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, NodeKind)> {
        self.nodes.iter().map(|(id, kind)| (id, *kind))
    }

    pub fn node_kind(&self, id: &NodeId) -> Option<NodeKind> {
        self.nodes.get(id).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &NodeId> {
        self.nodes
            .iter()
            .filter(move |(_, k)| **k == kind)
            .map(|(id, _)| id)
    }

    pub fn hosts(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes_of_kind(NodeKind::Host)
    }

    pub fn switches(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes_of_kind(NodeKind::Switch)
    }

    pub fn controllers(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes_of_kind(NodeKind::Controller)
    }

    pub fn ports(&self) -> impl Iterator<Item = &Port> {
        self.ports.values()
    }

    pub fn port(&self, id: &PortId) -> Option<&Port> {
        self.ports.get(id)
    }

    pub fn node_ports(&self, node: &NodeId) -> impl Iterator<Item = &Port> {
        // Ports sort by (node, index), so this is a contiguous range.
        self.ports
            .range(PortId::new(node.clone(), 0)..=PortId::new(node.clone(), u16::MAX))
            .map(|(_, p)| p)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// The port at the far end of `id`'s link, if any.
    pub fn peer(&self, id: &PortId) -> Option<&PortId> {
        self.peers.get(id)
    }

    /// First port carrying this hardware address.
    pub fn port_by_mac(&self, mac: MacAddr) -> Option<&Port> {
        self.mac_index.get(&mac).and_then(|id| self.ports.get(id))
    }

    pub fn domains(&self) -> &[SecurityDomain] {
        &self.domains
    }

    pub fn domain_of(&self, node: &NodeId) -> Option<&SecurityDomain> {
        self.domains
            .iter()
            .find(|d| d.switches.contains(node) || d.hosts.contains(node) || d.controller == *node)
    }

    pub fn table(&self, switch: &NodeId) -> Option<&FlowTable> {
        self.tables.get(switch)
    }

    pub fn tables(&self) -> impl Iterator<Item = (&NodeId, &FlowTable)> {
        self.tables.iter()
    }

    /// Total installed rules across all switches.
    pub fn rule_count(&self) -> usize {
        self.tables.values().map(FlowTable::len).sum()
    }

    /// A host's access link as (host port, switch port), taking the host's
    /// lowest-indexed linked port.
    pub fn host_uplink(&self, host: &NodeId) -> Option<(&Port, &Port)> {
        for port in self.node_ports(host) {
            if let Some(peer) = self.peer(&port.id) {
                if let Some(peer_port) = self.ports.get(peer) {
                    if self.node_kind(&peer_port.id.node) == Some(NodeKind::Switch) {
                        return Some((port, peer_port));
                    }
                }
            }
        }
        None
    }

    /// Advance the virtual clock by one second and return the new value.
    /// Called once per injected packet.
    pub(crate) fn advance_tick(&self) -> u64 {
        self.tick.fetch_add(1, Ordering::Relaxed) + 1
    }

    /// Every invariant violation in the topology; empty means consistent.
    pub fn validate(&self) -> Vec<IntegrityError> {
        let mut errors = Vec::new();

        for (id, port) in &self.ports {
            if id.index == 0 {
                errors.push(IntegrityError::ZeroPortIndex(id.clone()));
            }
            if !self.nodes.contains_key(&id.node) {
                errors.push(IntegrityError::UnknownPortOwner(id.clone()));
            }
            if self.nodes.get(&id.node) == Some(&NodeKind::Host) && port.ip.is_none() {
                errors.push(IntegrityError::HostPortMissingIp(id.clone()));
            }
        }

        let mut seen = BTreeMap::new();
        for link in &self.links {
            if link.a == link.b {
                errors.push(IntegrityError::SelfLink(link.a.clone()));
            }
            for end in [&link.a, &link.b] {
                if !self.ports.contains_key(end)
                    || !self.nodes.contains_key(&end.node)
                {
                    errors.push(IntegrityError::DanglingLinkEndpoint(end.clone()));
                }
                let count = seen.entry(end.clone()).or_insert(0usize);
                *count += 1;
                if *count == 2 {
                    errors.push(IntegrityError::PortReused(end.clone()));
                }
            }
        }

        let roots = self.nodes_of_kind(NodeKind::RootAuthority).count();
        match roots {
            0 => errors.push(IntegrityError::MissingRootAuthority),
            1 => {}
            n => errors.push(IntegrityError::MultipleRootAuthorities(n)),
        }
        let bridges = self.nodes_of_kind(NodeKind::BridgeAuthority).count();
        if bridges > 1 {
            errors.push(IntegrityError::MultipleBridgeAuthorities(bridges));
        }

        // Domain partition over switches and hosts.
        for (node, kind) in self.nodes() {
            if !matches!(kind, NodeKind::Switch | NodeKind::Host) {
                continue;
            }
            let member_of = self
                .domains
                .iter()
                .filter(|d| d.switches.contains(node) || d.hosts.contains(node))
                .count();
            match member_of {
                0 => errors.push(IntegrityError::NodeInNoDomain {
                    kind,
                    node: node.clone(),
                }),
                1 => {}
                count => errors.push(IntegrityError::NodeInMultipleDomains {
                    kind,
                    node: node.clone(),
                    count,
                }),
            }
        }

        for domain in &self.domains {
            if self.nodes.get(&domain.controller) != Some(&NodeKind::Controller) {
                errors.push(IntegrityError::BadDomainController {
                    domain: domain.id,
                    node: domain.controller.clone(),
                });
            }
            for sw in &domain.switches {
                if self.nodes.get(sw) != Some(&NodeKind::Switch) {
                    errors.push(IntegrityError::BadDomainMember {
                        domain: domain.id,
                        node: sw.clone(),
                    });
                }
            }
            for host in &domain.hosts {
                if self.nodes.get(host) != Some(&NodeKind::Host) {
                    errors.push(IntegrityError::BadDomainMember {
                        domain: domain.id,
                        node: host.clone(),
                    });
                }
            }
            // Hosts attach only to this domain's switches.
            for host in &domain.hosts {
                for port in self.node_ports(host) {
                    if let Some(peer) = self.peer(&port.id) {
                        if self.nodes.get(&peer.node) == Some(&NodeKind::Switch)
                            && !domain.switches.contains(&peer.node)
                        {
                            errors.push(IntegrityError::ForeignHostAttachment {
                                host: host.clone(),
                                switch: peer.node.clone(),
                            });
                        }
                    }
                }
            }
        }

        for (switch, table) in &self.tables {
            if self.nodes.get(switch) != Some(&NodeKind::Switch) {
                errors.push(IntegrityError::TableOnNonSwitch(switch.clone()));
                continue;
            }
            for (index, rule) in table.rules().iter().enumerate() {
                if let InPortMatch::Exact(port) = rule.header.in_port {
                    if !self
                        .ports
                        .contains_key(&PortId::new(switch.clone(), port))
                    {
                        errors.push(IntegrityError::RuleInPortUnknown {
                            switch: switch.clone(),
                            index,
                            port,
                        });
                    }
                }
            }
        }

        errors
    }
}
