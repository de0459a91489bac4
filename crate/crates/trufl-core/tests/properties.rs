//! Property tests for the pattern algebra, table semantics, topology
//! generator and certificate machinery.

use proptest::prelude::*;

use trufl_core::flowrules::{
    matches, Action, Cidr, FlowRule, FlowTable, HeaderPattern, MacAddr, Packet, Protocol,
    ProtocolMatch, RuleOrigin,
};
use trufl_core::pki::{
    verify_signature, CryptoProvider, KeyStrength, TestProvider,
};
use trufl_core::topology::{build_topology, NodeKind};

fn arb_mac() -> impl Strategy<Value = MacAddr> {
    any::<[u8; 6]>().prop_map(MacAddr)
}

fn arb_packet() -> impl Strategy<Value = Packet> {
    (
        (1u16..16, prop::bool::ANY, arb_mac(), arb_mac()),
        (any::<u32>(), any::<u32>()),
        (any::<u16>(), any::<u16>(), prop::option::of(1u16..4094), 1u32..1500),
    )
        .prop_map(
            |((in_port, tcp, src_mac, dst_mac), (src_ip, dst_ip), (sp, dp, vlan, size))| Packet {
                in_port,
                protocol: if tcp { Protocol::Tcp } else { Protocol::Udp },
                src_mac,
                dst_mac,
                src_ip: src_ip.into(),
                dst_ip: dst_ip.into(),
                src_port: sp,
                dst_port: dp,
                vlan,
                size_bytes: size,
            },
        )
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

proptest! {
    /// An all-wildcard rule matches every packet.
    #[test]
    fn wildcard_matches_everything(pkt in arb_packet()) {
        prop_assert!(matches(&wildcard_rule(0, Action::Drop), &pkt));
    }

    /// A fully exact rule matches its packet and rejects any single-field
    /// perturbation.
    #[test]
    fn exact_rule_matches_exactly_one_point(pkt in arb_packet()) {
        // Pin the vlan so the pattern can constrain it.
        let mut pkt = pkt;
        pkt.vlan = Some(pkt.vlan.unwrap_or(7));

        let proto = match pkt.protocol {
            Protocol::Tcp => ProtocolMatch::Tcp,
            Protocol::Udp => ProtocolMatch::Udp,
        };
        let rule = FlowRule::new(
            1,
            proto,
            HeaderPattern::exactly(&pkt),
            Action::Allow,
            RuleOrigin::Controller,
        );
        prop_assert!(matches(&rule, &pkt));

        let mut variants: Vec<Packet> = Vec::new();
        let mut v = pkt; v.in_port = v.in_port.wrapping_add(1); variants.push(v);
        let mut v = pkt; v.protocol = match v.protocol { Protocol::Tcp => Protocol::Udp, Protocol::Udp => Protocol::Tcp }; variants.push(v);
        let mut v = pkt; v.src_mac.0[5] ^= 1; variants.push(v);
        let mut v = pkt; v.dst_mac.0[0] ^= 0x80; variants.push(v);
        let mut v = pkt; v.src_ip = (u32::from(v.src_ip).wrapping_add(1)).into(); variants.push(v);
        let mut v = pkt; v.dst_ip = (u32::from(v.dst_ip).wrapping_add(1)).into(); variants.push(v);
        let mut v = pkt; v.src_port = v.src_port.wrapping_add(1); variants.push(v);
        let mut v = pkt; v.dst_port = v.dst_port.wrapping_add(1); variants.push(v);
        let mut v = pkt; v.vlan = Some(v.vlan.unwrap() ^ 1); variants.push(v);

        for variant in variants {
            prop_assert!(!matches(&rule, &variant), "perturbed packet still matched: {variant:?}");
        }
    }

    /// Adding a higher-priority all-wildcard rule with the opposite action
    /// flips the lookup verdict for every packet the lower rule matched.
    #[test]
    fn priority_shadowing_flips_lookup(pkt in arb_packet()) {
        let mut table = FlowTable::new();
        table.push(FlowRule::new(
            5,
            ProtocolMatch::Any,
            HeaderPattern::exactly(&pkt),
            Action::Allow,
            RuleOrigin::Controller,
        ));
        let (idx, rule) = table.lookup(&pkt).unwrap();
        prop_assert_eq!(idx, 0);
        prop_assert_eq!(rule.action, Action::Allow);

        table.push(wildcard_rule(10, Action::Drop));
        let (idx, rule) = table.lookup(&pkt).unwrap();
        prop_assert_eq!(idx, 1);
        prop_assert_eq!(rule.action, Action::Drop);
    }

    /// CIDR containment agrees with an independent prefix-shift oracle.
    #[test]
    fn cidr_containment_oracle(addr in any::<u32>(), prefix in 0u8..=32, probe in any::<u32>()) {
        let cidr = Cidr::new(addr.into(), prefix).unwrap();
        let expected = if prefix == 0 {
            true
        } else {
            (probe >> (32 - prefix)) == (addr >> (32 - prefix))
        };
        prop_assert_eq!(cidr.contains(probe.into()), expected);
    }

    /// Generated topologies are consistent, partition their switches and
    /// hosts exactly, and serialize identically on rebuild.
    #[test]
    fn generator_invariants(
        hosts_per_switch in 1usize..=4,
        switch_count in 1usize..=10,
        domains in 1usize..=3,
    ) {
        prop_assume!(switch_count >= domains);
        let n_hosts = switch_count * hosts_per_switch;
        let topo = build_topology(n_hosts, hosts_per_switch, domains).unwrap();
        prop_assert_eq!(topo.validate(), vec![]);

        let mut covered = std::collections::BTreeSet::new();
        let mut total = 0usize;
        for d in topo.domains() {
            total += d.switches.len() + d.hosts.len();
            covered.extend(d.switches.iter().cloned());
            covered.extend(d.hosts.iter().cloned());
        }
        // Exact partition: no overlap, nothing missed.
        prop_assert_eq!(total, covered.len());
        let all: std::collections::BTreeSet<_> = topo
            .nodes()
            .filter(|(_, k)| matches!(k, NodeKind::Switch | NodeKind::Host))
            .map(|(id, _)| id.clone())
            .collect();
        prop_assert_eq!(covered, all);

        let rebuilt = build_topology(n_hosts, hosts_per_switch, domains).unwrap();
        prop_assert_eq!(topo.to_text(), rebuilt.to_text());
    }

    /// Sign/verify round-trips on arbitrary payloads; any payload or key
    /// change breaks it.
    #[test]
    fn signature_roundtrip(payload in prop::collection::vec(any::<u8>(), 0..256), flip in any::<u8>()) {
        let provider = TestProvider::seeded(11);
        let pair = provider.generate_keypair(KeyStrength::Bits2048).unwrap();
        let sig = provider.sign(&pair.private, &payload).unwrap();
        prop_assert!(verify_signature(&provider, &pair.public, &payload, &sig));

        let mut altered = payload.clone();
        altered.push(flip);
        prop_assert!(!verify_signature(&provider, &pair.public, &altered, &sig));
    }
}
