//! TRUFL: distributed trust management and flow-rule compliance checking
//! over simulated software-defined networks.
//!
//! The crate models a multi-tenant SDN — controllers, switches, hosts and
//! security domains — and layers two concerns on top of it:
//!
//! * **Trust.** A hierarchical PKI in which a management-plane root
//!   certifies controllers, controllers certify their domain's switches and
//!   switches certify their hosts. Provisioning runs either centralized on
//!   one worker or distributed with one worker per security domain fanning
//!   out across per-port workers; verification challenge-signs every link
//!   endpoint and walks its chain of trust. Decoy switches with self-signed
//!   certificates, cross-certification through a bridge authority, and
//!   tampered credentials are all first-class scenarios.
//! * **Flow rules.** An OpenFlow-style rule model with per-switch tables, a
//!   multi-hop forwarding simulator, and an SLA checker that finds packets
//!   bypassing drop intents directly, across multi-switch rule paths, or
//!   through rogue layer-2 tunnels — plus detection of rules installed
//!   behind the controller's back.
//!
//! [`bench`] reproduces the two experiments at desk scale (trust latency
//! versus host count per mode; end-to-end check latency versus rule count)
//! and renders CSV, Markdown or JSON-lines reports with the published
//! reference numbers attached as citation columns.
//!
//! Topologies are immutable once built and safe to share across threads;
//! clocks and randomness are always injected, never ambient.
//!
//! ## Example
//!
//! Provision trust over a generated network, verify every link, then catch
//! the built-in scenario's policy bypass:
//!
//! ```
//! use trufl_core::flowrules::{check_sla, ViolationKind};
//! use trufl_core::pki::TestProvider;
//! use trufl_core::topology::{build_topology, motivating_example};
//! use trufl_core::trust::{TrustManager, TrustMode};
//!
//! // 16 hosts, 4 per switch, 2 security domains; one root authority.
//! let topo = build_topology(16, 4, 2)?;
//! assert!(topo.validate().is_empty());
//!
//! // The test provider trades security for speed; production callers use
//! // `RsaProvider` instead.
//! let provider = TestProvider::seeded(7);
//! let manager = TrustManager::new(&provider);
//! let mode = TrustMode::Distributed { workers: 2 };
//! let (store, setup) = manager.provision(&topo, mode, 0)?;
//! assert_eq!(setup.host_count, 16);
//!
//! let report = manager.verify_trust(&topo, &store, mode, 0);
//! assert!(report.all_passed());
//!
//! // Two switches forward around a drop intent; the checker finds the
//! // multi-hop bypass.
//! let (scenario, policy) = motivating_example();
//! let violations = check_sla(&scenario, &policy);
//! assert_eq!(violations.len(), 1);
//! assert_eq!(violations[0].kind, ViolationKind::Indirect);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod bench;
pub mod flowrules;
pub mod pki;
pub mod topology;
pub mod trust;
