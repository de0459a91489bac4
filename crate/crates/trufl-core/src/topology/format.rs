//! Line-oriented topology serialization.
//!
//! Five sections in fixed order, one record per line, fields tab-separated,
//! `-` for absent optional fields, `#` lines ignored on input:
//!
//! ```text
//! NODES    <id> <kind>
//! PORTS    <node> <index> <mac> <ip|-> <vlan|->
//! LINKS    <node-a> <index-a> <node-b> <index-b>
//! DOMAINS  <id> <controller> <switches,comma,separated|-> <hosts|->
//! RULES    <switch> <priority> <proto> <in-port> <src-mac> <dst-mac>
//!          <src-ip> <dst-ip> <src-port> <dst-port> <vlan> <action> [args] <origin>
//! ```
//!
//! Serialization is canonical (nodes, ports and rules in stored order), so
//! parse ∘ serialize is the identity on its own output.

use std::fmt::Write as _;

use thiserror::Error;

use crate::flowrules::FlowRule;

use super::{NetworkTopology, NodeId, PortId, SecurityDomain, TopologyError};

/// Topology/rule file parsing failure, with the 1-based line number.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Construction {
        line: usize,
        source: TopologyError,
    },
    #[error("missing section {0}")]
    MissingSection(&'static str),
}

fn syntax(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        line,
        message: message.into(),
    }
}

const SECTIONS: [&str; 5] = ["NODES", "PORTS", "LINKS", "DOMAINS", "RULES"];

impl NetworkTopology {
    /// Render the canonical text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("NODES\n");
        for (id, kind) in self.nodes() {
            writeln!(out, "{id}\t{kind}").unwrap();
        }
        out.push_str("PORTS\n");
        for port in self.ports() {
            let ip = port.ip.map_or("-".to_string(), |ip| ip.to_string());
            let vlan = port.vlan.map_or("-".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                port.id.node, port.id.index, port.mac, ip, vlan
            )
            .unwrap();
        }
        out.push_str("LINKS\n");
        for link in self.links() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                link.a.node, link.a.index, link.b.node, link.b.index
            )
            .unwrap();
        }
        out.push_str("DOMAINS\n");
        for d in self.domains() {
            let switches = join_or_dash(d.switches.iter());
            let hosts = join_or_dash(d.hosts.iter());
            writeln!(out, "{}\t{}\t{}\t{}", d.id, d.controller, switches, hosts).unwrap();
        }
        out.push_str("RULES\n");
        for (switch, table) in self.tables() {
            for rule in table.rules() {
                writeln!(out, "{}\t{}", switch, rule.to_string().replace(' ', "\t")).unwrap();
            }
        }
        out
    }

    /// Parse the text form produced by [`NetworkTopology::to_text`].
    pub fn from_text(text: &str) -> Result<Self, FormatError> {
        let mut topo = NetworkTopology::new();
        let mut section: Option<&'static str> = None;
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = SECTIONS.iter().find(|s| **s == line) {
                section = Some(name);
                seen.push(*name);
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match section {
                None => return Err(syntax(lineno, "record before any section header")),
                Some("NODES") => {
                    if fields.len() != 2 {
                        return Err(syntax(lineno, "expected <id> <kind>"));
                    }
                    let kind = fields[1]
                        .parse()
                        .map_err(|e: TopologyError| syntax(lineno, e.to_string()))?;
                    topo.add_node(fields[0], kind)
                        .map_err(|source| FormatError::Construction { line: lineno, source })?;
                }
                Some("PORTS") => {
                    if fields.len() != 5 {
                        return Err(syntax(lineno, "expected <node> <index> <mac> <ip|-> <vlan|->"));
                    }
                    let index: u16 = fields[1]
                        .parse()
                        .map_err(|_| syntax(lineno, format!("bad port index {:?}", fields[1])))?;
                    let mac = fields[2]
                        .parse()
                        .map_err(|_| syntax(lineno, format!("bad mac {:?}", fields[2])))?;
                    let ip = parse_opt(fields[3])
                        .map_err(|_| syntax(lineno, format!("bad ip {:?}", fields[3])))?;
                    let vlan = parse_opt(fields[4])
                        .map_err(|_| syntax(lineno, format!("bad vlan {:?}", fields[4])))?;
                    topo.add_port(PortId::new(fields[0], index), mac, ip, vlan)
                        .map_err(|source| FormatError::Construction { line: lineno, source })?;
                }
                Some("LINKS") => {
                    if fields.len() != 4 {
                        return Err(syntax(lineno, "expected <node-a> <index-a> <node-b> <index-b>"));
                    }
                    let ia: u16 = fields[1]
                        .parse()
                        .map_err(|_| syntax(lineno, format!("bad port index {:?}", fields[1])))?;
                    let ib: u16 = fields[3]
                        .parse()
                        .map_err(|_| syntax(lineno, format!("bad port index {:?}", fields[3])))?;
                    topo.add_link(PortId::new(fields[0], ia), PortId::new(fields[2], ib))
                        .map_err(|source| FormatError::Construction { line: lineno, source })?;
                }
                Some("DOMAINS") => {
                    if fields.len() != 4 {
                        return Err(syntax(lineno, "expected <id> <controller> <switches> <hosts>"));
                    }
                    let id: u32 = fields[0]
                        .parse()
                        .map_err(|_| syntax(lineno, format!("bad domain id {:?}", fields[0])))?;
                    topo.add_domain(SecurityDomain {
                        id,
                        controller: NodeId::new(fields[1]),
                        switches: split_or_empty(fields[2]),
                        hosts: split_or_empty(fields[3]),
                    });
                }
                Some("RULES") => {
                    if fields.len() < 2 {
                        return Err(syntax(lineno, "expected <switch> <rule fields…>"));
                    }
                    let rule: FlowRule = fields[1..]
                        .join(" ")
                        .parse()
                        .map_err(|e| syntax(lineno, format!("{e}")))?;
                    topo.add_rule(&NodeId::new(fields[0]), rule)
                        .map_err(|source| FormatError::Construction { line: lineno, source })?;
                }
                Some(_) => unreachable!(),
            }
        }
        for required in SECTIONS {
            if !seen.contains(&required) {
                return Err(FormatError::MissingSection(required));
            }
        }
        Ok(topo)
    }
}

fn join_or_dash<'a>(mut items: impl Iterator<Item = &'a NodeId>) -> String {
    let joined = items.by_ref().map(|n| n.as_str()).collect::<Vec<_>>().join(",");
    if joined.is_empty() {
        "-".to_string()
    } else {
        joined
    }
}

fn split_or_empty(field: &str) -> std::collections::BTreeSet<NodeId> {
    if field == "-" {
        Default::default()
    } else {
        field.split(',').map(NodeId::new).collect()
    }
}

fn parse_opt<T: std::str::FromStr>(field: &str) -> Result<Option<T>, T::Err> {
    if field == "-" {
        Ok(None)
    } else {
        field.parse().map(Some)
    }
}

/// Parse a standalone rules file: one record per line in the RULES-section
/// grammar (`<switch> <rule fields…>`).
pub fn parse_rules_file(text: &str) -> Result<Vec<(NodeId, FlowRule)>, FormatError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(syntax(lineno, "expected <switch> <rule fields…>"));
        }
        let rule: FlowRule = fields[1..]
            .join(" ")
            .parse()
            .map_err(|e| syntax(lineno, format!("{e}")))?;
        out.push((NodeId::new(fields[0]), rule));
    }
    Ok(out)
}
