//! Hierarchical trust provisioning and verification over a topology.
//!
//! Provisioning builds the four-level authority chain: the root certifies
//! controllers, each controller (its domain's control-plane CA) certifies
//! switches, and each switch (data-plane CA) certifies its hosts, so every
//! leaf chain is host → switch → controller → root. Centralized mode does
//! all issuance on one worker; distributed mode hands each security domain
//! to a worker and fans issuance within a domain out across per-port
//! workers. Verification signs a fresh challenge per node and walks its
//! chain to the root, link by link.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowrules::MacAddr;
use crate::pki::{
    create_cert_request, verify_chain, CertChain, Certificate, ChainFailure, CryptoProvider,
    Issuer, KeyPair, KeyStrength, PkiError, TrustAnchor, DEFAULT_VALIDITY_SECS,
};
use crate::topology::{IntegrityError, NetworkTopology, NodeId, NodeKind, PortId};

/// How much trust machinery runs and how parallel it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustMode {
    /// Baseline: no keys, no certificates, no verification work.
    NoTrust,
    /// All issuance and verification on a single worker.
    Centralized,
    /// One worker per security domain, per-port workers inside a domain.
    Distributed { workers: usize },
}

impl TrustMode {
    pub fn label(&self) -> &'static str {
        match self {
            TrustMode::NoTrust => "none",
            TrustMode::Centralized => "centralized",
            TrustMode::Distributed { .. } => "distributed",
        }
    }

    fn workers(&self) -> usize {
        match self {
            TrustMode::Distributed { workers } => (*workers).max(1),
            _ => 1,
        }
    }
}

impl std::fmt::Display for TrustMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Key material and chain held for one node.
#[derive(Debug, Clone)]
pub struct NodeCredential {
    pub keypair: KeyPair,
    pub certificate: Certificate,
    pub chain: CertChain,
}

/// Per-node credentials plus the anchor set used for verification.
#[derive(Debug, Default)]
pub struct TrustStore {
    creds: BTreeMap<NodeId, NodeCredential>,
    anchors: Vec<TrustAnchor>,
}

impl TrustStore {
    pub fn credential(&self, node: &NodeId) -> Option<&NodeCredential> {
        self.creds.get(node)
    }

    /// Mutable credential access, for tamper-style tests.
    pub fn credential_mut(&mut self, node: &NodeId) -> Option<&mut NodeCredential> {
        self.creds.get_mut(node)
    }

    pub fn insert(&mut self, node: NodeId, cred: NodeCredential) {
        self.creds.insert(node, cred);
    }

    pub fn anchors(&self) -> &[TrustAnchor] {
        &self.anchors
    }

    pub fn add_anchor(&mut self, anchor: TrustAnchor) {
        self.anchors.push(anchor);
    }

    pub fn len(&self) -> usize {
        self.creds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.creds.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.creds.keys()
    }

    /// The (subject, issuer) certification edges, independent of key bytes
    /// and serials. Two provisioning runs over the same topology agree here.
    pub fn subject_issuer_edges(&self) -> std::collections::BTreeSet<(String, String)> {
        self.creds
            .values()
            .map(|c| {
                (
                    c.certificate.subject_common_name.clone(),
                    c.certificate.issuer_common_name.clone(),
                )
            })
            .collect()
    }
}

/// Wall-clock report for one provisioning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetupReport {
    pub mode: String,
    pub workers: Option<usize>,
    pub host_count: usize,
    pub certificates: usize,
    pub setup_ms: f64,
    /// Filled in by callers that pair setup with a verification run.
    pub verify_ms: Option<f64>,
    pub per_domain_ms: Vec<DomainTiming>,
}

/// Issuance wall-clock for one security domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainTiming {
    pub domain: u32,
    pub ms: f64,
}

/// Why one endpoint of a link failed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyFailure {
    /// The store holds no credential for this node.
    MissingCredential,
    /// The challenge signature did not verify under the node's certificate.
    SignatureMismatch,
    /// The certificate chain failed.
    Chain(ChainFailure),
}

impl std::fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyFailure::MissingCredential => write!(f, "missing-credential"),
            VerifyFailure::SignatureMismatch => write!(f, "signature-mismatch"),
            VerifyFailure::Chain(reason) => write!(f, "chain:{reason}"),
        }
    }
}

/// One endpoint's verification outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointCheck {
    pub port: PortId,
    pub failure: Option<VerifyFailure>,
}

/// Verification outcome for one link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCheck {
    pub a: EndpointCheck,
    pub b: EndpointCheck,
}

impl LinkCheck {
    pub fn passed(&self) -> bool {
        self.a.failure.is_none() && self.b.failure.is_none()
    }
}

/// Link-wise verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub mode: String,
    pub verify_ms: f64,
    pub links: Vec<LinkCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.links.iter().all(LinkCheck::passed)
    }

    pub fn failed_links(&self) -> impl Iterator<Item = &LinkCheck> {
        self.links.iter().filter(|l| !l.passed())
    }

    /// Nodes with at least one failing endpoint, with one reason each.
    pub fn failed_nodes(&self) -> BTreeMap<NodeId, VerifyFailure> {
        let mut out = BTreeMap::new();
        for link in &self.links {
            for ep in [&link.a, &link.b] {
                if let Some(reason) = ep.failure {
                    out.entry(ep.port.node.clone()).or_insert(reason);
                }
            }
        }
        out
    }
}

/// Provisioning and verification errors.
#[derive(Debug, Error)]
pub enum TrustError {
    #[error("topology is inconsistent: {0:?}")]
    InvalidTopology(Vec<IntegrityError>),
    #[error("topology has no root authority node")]
    NoRootAuthority,
    #[error(transparent)]
    Topology(#[from] crate::topology::TopologyError),
    #[error(transparent)]
    Pki(#[from] PkiError),
}

/// A root authority: its self-signed anchor plus the issuing handle.
#[derive(Debug)]
pub struct RootCa {
    pub issuer: Issuer,
    pub anchor: TrustAnchor,
}

/// Binds a crypto provider and issuance parameters; all operations take the
/// clock as an argument.
pub struct TrustManager<'p> {
    provider: &'p dyn CryptoProvider,
    pub key_strength: KeyStrength,
    pub validity_secs: i64,
}

impl<'p> TrustManager<'p> {
    pub fn new(provider: &'p dyn CryptoProvider) -> Self {
        TrustManager {
            provider,
            key_strength: KeyStrength::default(),
            validity_secs: DEFAULT_VALIDITY_SECS,
        }
    }

    pub fn with_key_strength(mut self, strength: KeyStrength) -> Self {
        self.key_strength = strength;
        self
    }

    pub fn provider(&self) -> &'p dyn CryptoProvider {
        self.provider
    }

    /// Self-signed management-plane root.
    pub fn setup_root_ca(&self, name: &str, now: i64) -> Result<RootCa, PkiError> {
        let (issuer, anchor) =
            Issuer::self_signed(self.provider, name, self.key_strength, self.validity_secs, now)?;
        Ok(RootCa { issuer, anchor })
    }

    /// Provision credentials for every node of the topology.
    pub fn provision(
        &self,
        topo: &NetworkTopology,
        mode: TrustMode,
        now: i64,
    ) -> Result<(TrustStore, SetupReport), TrustError> {
        let errors = topo.validate();
        if !errors.is_empty() {
            return Err(TrustError::InvalidTopology(errors));
        }
        let host_count = topo.hosts().count();
        let start = Instant::now();

        if mode == TrustMode::NoTrust {
            return Ok((
                TrustStore::default(),
                SetupReport {
                    mode: mode.label().to_string(),
                    workers: None,
                    host_count,
                    certificates: 0,
                    setup_ms: start.elapsed().as_secs_f64() * 1e3,
                    verify_ms: None,
                    per_domain_ms: Vec::new(),
                },
            ));
        }

        let root_id = topo
            .nodes_of_kind(NodeKind::RootAuthority)
            .next()
            .ok_or(TrustError::NoRootAuthority)?
            .clone();
        let root = self.setup_root_ca(root_id.as_str(), now)?;

        let mut store = TrustStore::default();
        store.add_anchor(root.anchor.clone());
        store.insert(
            root_id.clone(),
            NodeCredential {
                keypair: root.issuer.keypair().clone(),
                certificate: root.issuer.certificate.clone(),
                chain: CertChain::new(vec![root.issuer.certificate.clone()]),
            },
        );

        // Controllers are certified sequentially by the root before domain
        // workers start; this keeps the root's serial allocation a plain
        // prefix and the controller count is small.
        let mut controller_issuers: BTreeMap<NodeId, Issuer> = BTreeMap::new();
        for controller in topo.controllers() {
            let keypair = self.provider.generate_keypair(self.key_strength)?;
            let req = create_cert_request(&keypair, controller.as_str())?;
            let cert = root
                .issuer
                .issue(self.provider, &req, self.validity_secs, now)?;
            store.insert(
                controller.clone(),
                NodeCredential {
                    keypair: keypair.clone(),
                    certificate: cert.clone(),
                    chain: CertChain::new(vec![cert.clone(), root.issuer.certificate.clone()]),
                },
            );
            controller_issuers.insert(controller.clone(), Issuer::new(cert, keypair)?);
        }

        // Per-domain work lists: each switch with the hosts attached to it.
        struct DomainWork<'a> {
            domain_id: u32,
            controller: &'a NodeId,
            switches: Vec<(NodeId, Vec<NodeId>)>,
        }
        let mut works = Vec::new();
        for domain in topo.domains() {
            let mut switches: Vec<(NodeId, Vec<NodeId>)> = domain
                .switches
                .iter()
                .map(|s| (s.clone(), Vec::new()))
                .collect();
            for host in &domain.hosts {
                let slot = topo
                    .host_uplink(host)
                    .and_then(|(_, sw_port)| {
                        switches.iter_mut().find(|(s, _)| *s == sw_port.id.node)
                    });
                match slot {
                    Some((_, hosts)) => hosts.push(host.clone()),
                    // Unattached host: the first switch of the domain
                    // certifies it so provisioning stays total.
                    None => {
                        if let Some((_, hosts)) = switches.first_mut() {
                            hosts.push(host.clone());
                        }
                    }
                }
            }
            works.push(DomainWork {
                domain_id: domain.id,
                controller: &domain.controller,
                switches,
            });
        }

        let inner_workers = mode.workers();
        let root_cert = &root.issuer.certificate;
        let process_domain = |work: &DomainWork| -> Result<(Vec<(NodeId, NodeCredential)>, DomainTiming), TrustError> {
            let t0 = Instant::now();
            let mut creds: Vec<(NodeId, NodeCredential)> = Vec::new();
            let ctrl_issuer = controller_issuers
                .get(work.controller)
                .expect("domain controllers are certified first");
            let ctrl_cert = &ctrl_issuer.certificate;

            // Switch phase: keygen and controller-signed certificates.
            let switch_results = parallel_map(work.switches.clone(), inner_workers, |(sw, hosts)| {
                let keypair = self.provider.generate_keypair(self.key_strength)?;
                let req = create_cert_request(&keypair, sw.as_str())?;
                let cert = ctrl_issuer.issue(self.provider, &req, self.validity_secs, now)?;
                Ok::<_, TrustError>((sw, hosts, keypair, cert))
            });
            let mut switch_issuers = Vec::new();
            for result in switch_results {
                let (sw, hosts, keypair, cert) = result?;
                creds.push((
                    sw.clone(),
                    NodeCredential {
                        keypair: keypair.clone(),
                        certificate: cert.clone(),
                        chain: CertChain::new(vec![
                            cert.clone(),
                            ctrl_cert.clone(),
                            root_cert.clone(),
                        ]),
                    },
                ));
                switch_issuers.push((sw, hosts, Issuer::new(cert, keypair)?));
            }

            // Host phase: each switch certifies its hosts on per-port workers.
            for (_, hosts, sw_issuer) in &switch_issuers {
                let host_results = parallel_map(hosts.clone(), inner_workers, |host| {
                    let keypair = self.provider.generate_keypair(self.key_strength)?;
                    let req = create_cert_request(&keypair, host.as_str())?;
                    let cert = sw_issuer.issue(self.provider, &req, self.validity_secs, now)?;
                    Ok::<_, TrustError>((host, keypair, cert))
                });
                for result in host_results {
                    let (host, keypair, cert) = result?;
                    creds.push((
                        host,
                        NodeCredential {
                            keypair,
                            certificate: cert.clone(),
                            chain: CertChain::new(vec![
                                cert,
                                sw_issuer.certificate.clone(),
                                ctrl_cert.clone(),
                                root_cert.clone(),
                            ]),
                        },
                    ));
                }
            }

            Ok((
                creds,
                DomainTiming {
                    domain: work.domain_id,
                    ms: t0.elapsed().as_secs_f64() * 1e3,
                },
            ))
        };

        let mut per_domain_ms = Vec::new();
        match mode {
            TrustMode::Centralized => {
                for work in &works {
                    let (creds, timing) = process_domain(work)?;
                    for (node, cred) in creds {
                        store.insert(node, cred);
                    }
                    per_domain_ms.push(timing);
                }
            }
            TrustMode::Distributed { .. } => {
                let results = parallel_map(works.iter().collect::<Vec<_>>(), mode.workers(), |work| {
                    process_domain(work)
                });
                for result in results {
                    let (creds, timing) = result?;
                    for (node, cred) in creds {
                        store.insert(node, cred);
                    }
                    per_domain_ms.push(timing);
                }
                per_domain_ms.sort_by_key(|t| t.domain);
            }
            TrustMode::NoTrust => unreachable!(),
        }

        let certificates = store.len();
        Ok((
            store,
            SetupReport {
                mode: mode.label().to_string(),
                workers: match mode {
                    TrustMode::Distributed { workers } => Some(workers),
                    _ => None,
                },
                host_count,
                certificates,
                setup_ms: start.elapsed().as_secs_f64() * 1e3,
                verify_ms: None,
                per_domain_ms,
            },
        ))
    }

    /// Challenge-sign and chain-verify both endpoints of every link.
    ///
    /// Each node signs a fresh 32-byte nonce concatenated with its id; the
    /// signature must verify under its certificate and its chain must reach
    /// an anchor at time `now`. Per-node results are computed once and
    /// reported per link. NoTrust performs no checks and reports no links.
    pub fn verify_trust(
        &self,
        topo: &NetworkTopology,
        store: &TrustStore,
        mode: TrustMode,
        now: i64,
    ) -> VerifyReport {
        let start = Instant::now();
        if mode == TrustMode::NoTrust {
            return VerifyReport {
                mode: mode.label().to_string(),
                verify_ms: start.elapsed().as_secs_f64() * 1e3,
                links: Vec::new(),
            };
        }

        let mut endpoint_nodes: Vec<NodeId> = topo
            .links()
            .iter()
            .flat_map(|l| [l.a.node.clone(), l.b.node.clone()])
            .collect();
        endpoint_nodes.sort();
        endpoint_nodes.dedup();

        let check_node = |node: &NodeId| -> Option<VerifyFailure> {
            let Some(cred) = store.credential(node) else {
                return Some(VerifyFailure::MissingCredential);
            };
            let mut challenge = [0u8; 32].to_vec();
            rand::rng().fill_bytes(&mut challenge[..32]);
            challenge.extend_from_slice(node.as_str().as_bytes());
            let Ok(sig) = self.provider.sign(&cred.keypair.private, &challenge) else {
                return Some(VerifyFailure::SignatureMismatch);
            };
            if !self
                .provider
                .verify(&cred.certificate.subject_public_key, &challenge, &sig)
            {
                return Some(VerifyFailure::SignatureMismatch);
            }
            verify_chain(self.provider, &cred.chain, store.anchors(), now)
                .err()
                .map(VerifyFailure::Chain)
        };

        let results: BTreeMap<NodeId, Option<VerifyFailure>> = match mode {
            TrustMode::Distributed { workers } => {
                // Group nodes by domain so each domain verifies on one worker.
                let mut groups: BTreeMap<u32, Vec<NodeId>> = BTreeMap::new();
                for node in endpoint_nodes {
                    let domain = topo.domain_of(&node).map(|d| d.id).unwrap_or(u32::MAX);
                    groups.entry(domain).or_default().push(node);
                }
                parallel_map(groups.into_values().collect(), workers.max(1), |nodes| {
                    nodes
                        .into_iter()
                        .map(|n| {
                            let r = check_node(&n);
                            (n, r)
                        })
                        .collect::<Vec<_>>()
                })
                .into_iter()
                .flatten()
                .collect()
            }
            _ => endpoint_nodes
                .into_iter()
                .map(|n| {
                    let r = check_node(&n);
                    (n, r)
                })
                .collect(),
        };

        let links = topo
            .links()
            .iter()
            .map(|link| LinkCheck {
                a: EndpointCheck {
                    port: link.a.clone(),
                    failure: results.get(&link.a.node).copied().flatten(),
                },
                b: EndpointCheck {
                    port: link.b.clone(),
                    failure: results.get(&link.b.node).copied().flatten(),
                },
            })
            .collect();

        VerifyReport {
            mode: mode.label().to_string(),
            verify_ms: start.elapsed().as_secs_f64() * 1e3,
            links,
        }
    }

    /// Insert a decoy switch: linked into the data plane of a random
    /// existing switch's domain, carrying a self-signed certificate that
    /// chains to no anchor. Returns the new node id.
    pub fn attach_rogue_switch(
        &self,
        topo: &mut NetworkTopology,
        store: &mut TrustStore,
        rng: &mut dyn RngCore,
        now: i64,
    ) -> Result<NodeId, TrustError> {
        let switches: Vec<NodeId> = topo
            .switches()
            .filter(|s| !s.as_str().starts_with("rogue"))
            .cloned()
            .collect();
        let target = switches[(rng.next_u64() % switches.len() as u64) as usize].clone();
        self.attach_rogue_switch_at(topo, store, &target, now)
    }

    /// As [`TrustManager::attach_rogue_switch`], with an explicit target.
    pub fn attach_rogue_switch_at(
        &self,
        topo: &mut NetworkTopology,
        store: &mut TrustStore,
        target: &NodeId,
        now: i64,
    ) -> Result<NodeId, TrustError> {
        let ordinal = topo
            .nodes()
            .filter(|(id, _)| id.as_str().starts_with("rogue"))
            .count();
        let rogue = NodeId::new(format!("rogue{ordinal}"));
        topo.add_node(rogue.clone(), NodeKind::Switch)
            .expect("rogue ids are fresh");

        let rogue_port = PortId::new(rogue.clone(), 1);
        topo.add_port(
            rogue_port.clone(),
            MacAddr([0x02, 0x03, ordinal as u8, 0, 0, 1]),
            None,
            None,
        )
        .expect("fresh port");
        let next_index = topo
            .node_ports(target)
            .map(|p| p.id.index)
            .max()
            .unwrap_or(0)
            + 1;
        let target_port = PortId::new(target.clone(), next_index);
        topo.add_port(
            target_port.clone(),
            MacAddr([
                0x02,
                0x03,
                ordinal as u8,
                0xff,
                (next_index >> 8) as u8,
                (next_index & 0xff) as u8,
            ]),
            None,
            None,
        )
        .expect("fresh port");
        topo.add_link(rogue_port, target_port).expect("fresh ports");

        // Join the target's domain so the topology stays structurally valid;
        // only the trust layer can tell this switch apart.
        if let Some(domain_id) = topo.domain_of(target).map(|d| d.id) {
            topo.add_domain_switch(domain_id, rogue.clone()).unwrap();
        }

        let (issuer, _anchor) = Issuer::self_signed(
            self.provider,
            rogue.as_str(),
            self.key_strength,
            self.validity_secs,
            now,
        )?;
        store.insert(
            rogue.clone(),
            NodeCredential {
                keypair: issuer.keypair().clone(),
                certificate: issuer.certificate.clone(),
                chain: CertChain::new(vec![issuer.certificate.clone()]),
            },
        );
        Ok(rogue)
    }
}

/// Run `f` over `items` on up to `workers` scoped threads, preserving input
/// order in the output.
fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = items.len();
    let workers = workers.max(1).min(n.max(1));
    if workers <= 1 || n <= 1 {
        return items.into_iter().map(f).collect();
    }
    let slots: Vec<Mutex<Option<T>>> = items.into_iter().map(|i| Mutex::new(Some(i))).collect();
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<R>> = (0..n).map(|_| None).collect();
    let collected: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::with_capacity(n));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut local = Vec::new();
                loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= n {
                        break;
                    }
                    let item = slots[idx].lock().unwrap().take().unwrap();
                    local.push((idx, f(item)));
                }
                collected.lock().unwrap().extend(local);
            });
        }
    });
    for (idx, r) in collected.into_inner().unwrap() {
        results[idx] = Some(r);
    }
    results.into_iter().map(|r| r.unwrap()).collect()
}
