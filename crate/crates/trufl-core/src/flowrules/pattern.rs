//! Header fields, wildcard patterns and concrete packets.
//!
//! Every pattern type has a text form used by the rule and topology file
//! formats: `*` is a wildcard, MAC patterns are colon-separated byte fields
//! (short forms are left-padded with wildcards, so `*:00:0a:01` means
//! `*:*:*:00:0a:01`), IP patterns are CIDR blocks, transport ports are exact
//! values or `lo-hi` ranges.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Field parsing error, shared by all pattern grammars.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("invalid {what}: {input:?}")]
pub struct PatternParseError {
    pub what: &'static str,
    pub input: String,
}

fn parse_err(what: &'static str, input: &str) -> PatternParseError {
    PatternParseError {
        what,
        input: input.to_string(),
    }
}

/// A 48-bit hardware address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub fn to_u64(self) -> u64 {
        let mut v = 0u64;
        for b in self.0 {
            v = (v << 8) | b as u64;
        }
        v
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bytes = [0u8; 6];
        let fields: Vec<&str> = s.split(':').collect();
        if fields.len() != 6 {
            return Err(parse_err("mac address", s));
        }
        for (i, field) in fields.iter().enumerate() {
            bytes[i] = u8::from_str_radix(field, 16).map_err(|_| parse_err("mac address", s))?;
        }
        Ok(MacAddr(bytes))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-byte exact-or-wildcard MAC pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacPattern(pub [Option<u8>; 6]);

impl MacPattern {
    pub fn any() -> Self {
        MacPattern([None; 6])
    }

    pub fn exact(mac: MacAddr) -> Self {
        MacPattern(mac.0.map(Some))
    }

    /// Pattern fixing only the trailing bytes, e.g. `suffix(&[0x00,0x0b,0x03])`
    /// is `*:*:*:00:0b:03`.
    pub fn suffix(tail: &[u8]) -> Self {
        assert!(tail.len() <= 6);
        let mut fields = [None; 6];
        for (i, b) in tail.iter().enumerate() {
            fields[6 - tail.len() + i] = Some(*b);
        }
        MacPattern(fields)
    }

    pub fn matches(&self, mac: MacAddr) -> bool {
        self.0
            .iter()
            .zip(mac.0.iter())
            .all(|(pat, byte)| pat.is_none_or(|p| p == *byte))
    }

    /// (mask, value) pair for `(mac & mask) == value` matching.
    pub fn to_mask_value(self) -> (u64, u64) {
        let mut mask = 0u64;
        let mut value = 0u64;
        for field in self.0 {
            mask <<= 8;
            value <<= 8;
            if let Some(b) = field {
                mask |= 0xff;
                value |= b as u64;
            }
        }
        (mask, value)
    }
}

impl fmt::Display for MacPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|b| match b {
                Some(v) => format!("{v:02x}"),
                None => "*".to_string(),
            })
            .collect();
        write!(f, "{}", parts.join(":"))
    }
}

impl FromStr for MacPattern {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            return Ok(MacPattern::any());
        }
        let fields: Vec<&str> = s.split(':').collect();
        if fields.is_empty() || fields.len() > 6 {
            return Err(parse_err("mac pattern", s));
        }
        let mut out = [None; 6];
        let pad = 6 - fields.len();
        for (i, field) in fields.iter().enumerate() {
            out[pad + i] = match *field {
                "*" => None,
                hex => {
                    Some(u8::from_str_radix(hex, 16).map_err(|_| parse_err("mac pattern", s))?)
                }
            };
        }
        Ok(MacPattern(out))
    }
}

/// An IPv4 prefix. The address is kept as written; containment masks it, so
/// non-canonical forms like `192.168.4.0/16` behave as their network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cidr {
    pub addr: Ipv4Addr,
    pub prefix: u8,
}

impl Cidr {
    pub fn new(addr: Ipv4Addr, prefix: u8) -> Result<Self, PatternParseError> {
        if prefix > 32 {
            return Err(parse_err("cidr prefix", &prefix.to_string()));
        }
        Ok(Cidr { addr, prefix })
    }

    pub fn mask(&self) -> u32 {
        if self.prefix == 0 {
            0
        } else {
            u32::MAX << (32 - self.prefix)
        }
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        let m = self.mask();
        (u32::from(ip) & m) == (u32::from(self.addr) & m)
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.prefix)
    }
}

impl FromStr for Cidr {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, prefix) = match s.split_once('/') {
            Some((a, p)) => (
                a.parse().map_err(|_| parse_err("cidr", s))?,
                p.parse().map_err(|_| parse_err("cidr", s))?,
            ),
            None => (s.parse().map_err(|_| parse_err("cidr", s))?, 32),
        };
        Cidr::new(addr, prefix).map_err(|_| parse_err("cidr", s))
    }
}

/// CIDR-or-wildcard IP field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpPattern {
    Any,
    Cidr(Cidr),
}

impl IpPattern {
    pub fn matches(&self, ip: Ipv4Addr) -> bool {
        match self {
            IpPattern::Any => true,
            IpPattern::Cidr(c) => c.contains(ip),
        }
    }

    fn to_mask_net(self) -> (u32, u32) {
        match self {
            IpPattern::Any => (0, 0),
            IpPattern::Cidr(c) => (c.mask(), u32::from(c.addr) & c.mask()),
        }
    }
}

impl fmt::Display for IpPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IpPattern::Any => write!(f, "*"),
            IpPattern::Cidr(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for IpPattern {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            Ok(IpPattern::Any)
        } else {
            Ok(IpPattern::Cidr(s.parse()?))
        }
    }
}

/// Exact value, inclusive range, or wildcard transport-port field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortMatch {
    Any,
    Exact(u16),
    Range(u16, u16),
}

impl PortMatch {
    pub fn matches(&self, port: u16) -> bool {
        match *self {
            PortMatch::Any => true,
            PortMatch::Exact(p) => p == port,
            PortMatch::Range(lo, hi) => (lo..=hi).contains(&port),
        }
    }

    fn bounds(self) -> (u16, u16) {
        match self {
            PortMatch::Any => (0, u16::MAX),
            PortMatch::Exact(p) => (p, p),
            PortMatch::Range(lo, hi) => (lo, hi),
        }
    }
}

impl fmt::Display for PortMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortMatch::Any => write!(f, "*"),
            PortMatch::Exact(p) => write!(f, "{p}"),
            PortMatch::Range(lo, hi) => write!(f, "{lo}-{hi}"),
        }
    }
}

impl FromStr for PortMatch {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            return Ok(PortMatch::Any);
        }
        if let Some((lo, hi)) = s.split_once('-') {
            let lo: u16 = lo.parse().map_err(|_| parse_err("port range", s))?;
            let hi: u16 = hi.parse().map_err(|_| parse_err("port range", s))?;
            if lo > hi {
                return Err(parse_err("port range", s));
            }
            return Ok(PortMatch::Range(lo, hi));
        }
        s.parse()
            .map(PortMatch::Exact)
            .map_err(|_| parse_err("port", s))
    }
}

/// Exact-or-wildcard ingress port index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InPortMatch {
    Any,
    Exact(u16),
}

impl InPortMatch {
    pub fn matches(&self, port: u16) -> bool {
        match *self {
            InPortMatch::Any => true,
            InPortMatch::Exact(p) => p == port,
        }
    }
}

impl fmt::Display for InPortMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InPortMatch::Any => write!(f, "*"),
            InPortMatch::Exact(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for InPortMatch {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            Ok(InPortMatch::Any)
        } else {
            s.parse()
                .map(InPortMatch::Exact)
                .map_err(|_| parse_err("in-port", s))
        }
    }
}

/// Exact-or-wildcard VLAN tag. An exact tag only matches tagged packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlanMatch {
    Any,
    Exact(u16),
}

impl VlanMatch {
    pub fn matches(&self, vlan: Option<u16>) -> bool {
        match *self {
            VlanMatch::Any => true,
            VlanMatch::Exact(v) => vlan == Some(v),
        }
    }
}

impl fmt::Display for VlanMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VlanMatch::Any => write!(f, "*"),
            VlanMatch::Exact(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for VlanMatch {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            Ok(VlanMatch::Any)
        } else {
            s.parse()
                .map(VlanMatch::Exact)
                .map_err(|_| parse_err("vlan", s))
        }
    }
}

/// Transport protocol of a concrete packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Tcp => write!(f, "tcp"),
            Protocol::Udp => write!(f, "udp"),
        }
    }
}

impl FromStr for Protocol {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp" => Ok(Protocol::Tcp),
            "udp" => Ok(Protocol::Udp),
            _ => Err(parse_err("protocol", s)),
        }
    }
}

/// Protocol selector of a rule or policy intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolMatch {
    Any,
    Tcp,
    Udp,
}

impl ProtocolMatch {
    pub fn matches(&self, proto: Protocol) -> bool {
        match self {
            ProtocolMatch::Any => true,
            ProtocolMatch::Tcp => proto == Protocol::Tcp,
            ProtocolMatch::Udp => proto == Protocol::Udp,
        }
    }
}

impl fmt::Display for ProtocolMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolMatch::Any => write!(f, "any"),
            ProtocolMatch::Tcp => write!(f, "tcp"),
            ProtocolMatch::Udp => write!(f, "udp"),
        }
    }
}

impl FromStr for ProtocolMatch {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "any" | "*" => Ok(ProtocolMatch::Any),
            "tcp" => Ok(ProtocolMatch::Tcp),
            "udp" => Ok(ProtocolMatch::Udp),
            _ => Err(parse_err("protocol", s)),
        }
    }
}

/// The match side of a flow rule: ingress port, L2/L3 addresses, transport
/// ports and VLAN, each exact, ranged or wildcarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderPattern {
    pub in_port: InPortMatch,
    pub src_mac: MacPattern,
    pub dst_mac: MacPattern,
    pub src_ip: IpPattern,
    pub dst_ip: IpPattern,
    pub src_port: PortMatch,
    pub dst_port: PortMatch,
    pub vlan: VlanMatch,
}

impl HeaderPattern {
    /// Pattern matching every packet.
    pub fn any() -> Self {
        HeaderPattern {
            in_port: InPortMatch::Any,
            src_mac: MacPattern::any(),
            dst_mac: MacPattern::any(),
            src_ip: IpPattern::Any,
            dst_ip: IpPattern::Any,
            src_port: PortMatch::Any,
            dst_port: PortMatch::Any,
            vlan: VlanMatch::Any,
        }
    }

    /// Pattern matching exactly one value per field, taken from `pkt`.
    pub fn exactly(pkt: &Packet) -> Self {
        HeaderPattern {
            in_port: InPortMatch::Exact(pkt.in_port),
            src_mac: MacPattern::exact(pkt.src_mac),
            dst_mac: MacPattern::exact(pkt.dst_mac),
            src_ip: IpPattern::Cidr(Cidr::new(pkt.src_ip, 32).unwrap()),
            dst_ip: IpPattern::Cidr(Cidr::new(pkt.dst_ip, 32).unwrap()),
            src_port: PortMatch::Exact(pkt.src_port),
            dst_port: PortMatch::Exact(pkt.dst_port),
            vlan: match pkt.vlan {
                Some(v) => VlanMatch::Exact(v),
                None => VlanMatch::Any,
            },
        }
    }
}

/// A concrete packet: one point in header space plus a payload size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    /// Ingress port index on the switch currently holding the packet;
    /// rewritten at each hop by the simulator.
    pub in_port: u16,
    pub protocol: Protocol,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub vlan: Option<u16>,
    /// Payload size used for byte counters.
    pub size_bytes: u32,
}

/// Flattened packet fields for mask-based matching.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CompiledPacket {
    proto: u8,
    in_port: u32,
    vlan: u32,
    src_mac: u64,
    dst_mac: u64,
    src_ip: u32,
    dst_ip: u32,
    src_port: u16,
    dst_port: u16,
}

const FIELD_ANY: u32 = u32::MAX;
const VLAN_UNTAGGED: u32 = 0x1_0000;

impl CompiledPacket {
    pub(crate) fn new(pkt: &Packet) -> Self {
        CompiledPacket {
            proto: match pkt.protocol {
                Protocol::Tcp => 1,
                Protocol::Udp => 2,
            },
            in_port: pkt.in_port as u32,
            vlan: pkt.vlan.map_or(VLAN_UNTAGGED, |v| v as u32),
            src_mac: pkt.src_mac.to_u64(),
            dst_mac: pkt.dst_mac.to_u64(),
            src_ip: pkt.src_ip.into(),
            dst_ip: pkt.dst_ip.into(),
            src_port: pkt.src_port,
            dst_port: pkt.dst_port,
        }
    }

    pub(crate) fn set_in_port(&mut self, port: u16) {
        self.in_port = port as u32;
    }
}

/// Precompiled rule matcher: wildcards become full-range masks so a match is
/// a handful of integer compares regardless of pattern shape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CompiledMatch {
    proto: u8,
    in_port: u32,
    vlan: u32,
    src_mac_mask: u64,
    src_mac_val: u64,
    dst_mac_mask: u64,
    dst_mac_val: u64,
    src_ip_mask: u32,
    src_ip_net: u32,
    dst_ip_mask: u32,
    dst_ip_net: u32,
    sp_lo: u16,
    sp_hi: u16,
    dp_lo: u16,
    dp_hi: u16,
}

impl CompiledMatch {
    pub(crate) fn new(protocol: ProtocolMatch, header: &HeaderPattern) -> Self {
        let (src_mac_mask, src_mac_val) = header.src_mac.to_mask_value();
        let (dst_mac_mask, dst_mac_val) = header.dst_mac.to_mask_value();
        let (src_ip_mask, src_ip_net) = header.src_ip.to_mask_net();
        let (dst_ip_mask, dst_ip_net) = header.dst_ip.to_mask_net();
        let (sp_lo, sp_hi) = header.src_port.bounds();
        let (dp_lo, dp_hi) = header.dst_port.bounds();
        CompiledMatch {
            proto: match protocol {
                ProtocolMatch::Any => 0,
                ProtocolMatch::Tcp => 1,
                ProtocolMatch::Udp => 2,
            },
            in_port: match header.in_port {
                InPortMatch::Any => FIELD_ANY,
                InPortMatch::Exact(p) => p as u32,
            },
            vlan: match header.vlan {
                VlanMatch::Any => FIELD_ANY,
                VlanMatch::Exact(v) => v as u32,
            },
            src_mac_mask,
            src_mac_val,
            dst_mac_mask,
            dst_mac_val,
            src_ip_mask,
            src_ip_net,
            dst_ip_mask,
            dst_ip_net,
            sp_lo,
            sp_hi,
            dp_lo,
            dp_hi,
        }
    }

    #[inline]
    pub(crate) fn matches(&self, p: &CompiledPacket) -> bool {
        (self.proto == 0 || self.proto == p.proto)
            && (self.in_port == FIELD_ANY || self.in_port == p.in_port)
            && (self.vlan == FIELD_ANY || self.vlan == p.vlan)
            && (p.src_mac & self.src_mac_mask) == self.src_mac_val
            && (p.dst_mac & self.dst_mac_mask) == self.dst_mac_val
            && (p.src_ip & self.src_ip_mask) == self.src_ip_net
            && (p.dst_ip & self.dst_ip_mask) == self.dst_ip_net
            && (self.sp_lo..=self.sp_hi).contains(&p.src_port)
            && (self.dp_lo..=self.dp_hi).contains(&p.dst_port)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_pattern_shorthand_left_pads() {
        let p: MacPattern = "*:00:0a:01".parse().unwrap();
        assert_eq!(p, MacPattern::suffix(&[0x00, 0x0a, 0x01]));
        assert_eq!(p.to_string(), "*:*:*:00:0a:01");
    }

    #[test]
    fn mac_suffix_pattern_matches_trailing_bytes() {
        let p: MacPattern = "*:00:0b:03".parse().unwrap();
        assert!(p.matches("aa:bb:cc:00:0b:03".parse().unwrap()));
        assert!(!p.matches("aa:bb:cc:00:0b:04".parse().unwrap()));
        assert!(!p.matches("aa:bb:cc:cc:0b:03".parse().unwrap()));
    }

    #[test]
    fn cidr_containment_masks_base_address() {
        let c: Cidr = "172.16.10.0/16".parse().unwrap();
        assert!(c.contains("172.16.99.7".parse().unwrap()));
        assert!(!c.contains("172.17.0.1".parse().unwrap()));
        // Non-canonical base accepted, the open-question form.
        let odd: Cidr = "192.168.4.0/16".parse().unwrap();
        assert!(odd.contains("192.168.200.1".parse().unwrap()));
    }

    #[test]
    fn port_range_bounds_are_inclusive() {
        let r: PortMatch = "80-90".parse().unwrap();
        assert!(r.matches(80) && r.matches(90));
        assert!(!r.matches(91));
        assert!("90-80".parse::<PortMatch>().is_err());
    }

    #[test]
    fn vlan_exact_rejects_untagged() {
        let v = VlanMatch::Exact(1);
        assert!(v.matches(Some(1)));
        assert!(!v.matches(None));
        assert!(!v.matches(Some(2)));
        assert!(VlanMatch::Any.matches(None));
    }

    #[test]
    fn display_parse_roundtrip() {
        for s in ["*", "aa:*:cc:00:0a:01", "*:*:*:00:0b:03"] {
            let p: MacPattern = s.parse().unwrap();
            let again: MacPattern = p.to_string().parse().unwrap();
            assert_eq!(p, again);
        }
        for s in ["*", "10.0.0.0/8", "192.168.4.0/24"] {
            let p: IpPattern = s.parse().unwrap();
            assert_eq!(p.to_string().parse::<IpPattern>().unwrap(), p);
        }
    }
}
