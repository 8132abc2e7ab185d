//! The provisioning agent. One agent controls one switch; it keeps a
//! topology view, answers lightpath requests with commit-with-compensation
//! over its peers, keeps path leases alive, and reroutes on loss of light.
//!
//! Handlers never block. Every entry point takes an [`AgentCtx`] and leaves
//! its effects (messages, timers, trace lines, events) in it for the harness
//! to carry out.

pub mod wire;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::device::{
    DeviceError, Direction, LightChange, LightEvent, OpticalPlant, PortId, PortRef, SpanState,
    SwitchId,
};
use crate::lookup::{Lease, LeaseSubject};
use crate::simnet::{Describe, GroupName, NodeId, SimTime};
use crate::topology::{
    extract_route, Endpoint, Hop, LinkStateUpdate, PortStatus, PortView, Route, RouteError,
    TopoGraph,
};

pub const DEFAULT_ACK_DEADLINE_MS: u64 = 1000;
pub const DEFAULT_PATH_LEASE_MS: u64 = 5000;
pub const DEFAULT_TOKEN: &str = "osd-secret";
pub const DEFAULT_GROUP: &str = "optical";

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolMessage {
    XConnRequest {
        path_id: String,
        txn_id: u64,
        hops: Vec<Hop>,
    },
    XConnAck {
        path_id: String,
        txn_id: u64,
    },
    XConnNack {
        path_id: String,
        txn_id: u64,
        reason: String,
    },
    Teardown {
        path_id: String,
    },
    PathLeaseRenew {
        path_id: String,
        round: u64,
    },
    PathLeaseAck {
        path_id: String,
        round: u64,
    },
    LossOfLightNotify {
        path_id: String,
        update: LinkStateUpdate,
    },
    TopoAnnounce(LinkStateUpdate),
    TopoSyncRequest,
    TopoSnapshot(Vec<LinkStateUpdate>),
}

impl ProtocolMessage {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolMessage::XConnRequest { .. } => "xconn_request",
            ProtocolMessage::XConnAck { .. } => "xconn_ack",
            ProtocolMessage::XConnNack { .. } => "xconn_nack",
            ProtocolMessage::Teardown { .. } => "teardown",
            ProtocolMessage::PathLeaseRenew { .. } => "lease_renew",
            ProtocolMessage::PathLeaseAck { .. } => "lease_ack",
            ProtocolMessage::LossOfLightNotify { .. } => "lol_notify",
            ProtocolMessage::TopoAnnounce(_) => "topo_announce",
            ProtocolMessage::TopoSyncRequest => "topo_sync",
            ProtocolMessage::TopoSnapshot(_) => "topo_snapshot",
        }
    }
}

impl Describe for ProtocolMessage {
    fn describe(&self) -> String {
        let name = self.name();
        match self {
            ProtocolMessage::XConnRequest { path_id, txn_id, .. }
            | ProtocolMessage::XConnAck { path_id, txn_id } => {
                format!("type={name} path={path_id} txn={txn_id}")
            }
            ProtocolMessage::XConnNack {
                path_id,
                txn_id,
                reason,
            } => format!("type={name} path={path_id} txn={txn_id} reason={reason}"),
            ProtocolMessage::Teardown { path_id } => format!("type={name} path={path_id}"),
            ProtocolMessage::PathLeaseRenew { path_id, round }
            | ProtocolMessage::PathLeaseAck { path_id, round } => {
                format!("type={name} path={path_id} round={round}")
            }
            ProtocolMessage::LossOfLightNotify { path_id, update } => {
                format!("type={name} path={path_id} span={}", update.span_id)
            }
            ProtocolMessage::TopoAnnounce(u) => {
                format!("type={name} span={} state={} seq={}", u.span_id, u.state, u.origin_seq)
            }
            ProtocolMessage::TopoSyncRequest => format!("type={name}"),
            ProtocolMessage::TopoSnapshot(us) => format!("type={name} updates={}", us.len()),
        }
    }
}

pub fn agent_id(sw: &SwitchId) -> NodeId {
    NodeId::new(format!("agent-{sw}"))
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub group: GroupName,
    pub token: String,
    pub ack_deadline_ms: u64,
    pub path_lease_ms: u64,
    /// Extra reroute attempts after the first fails on contention.
    pub reroute_retries: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            group: GroupName::new(DEFAULT_GROUP),
            token: DEFAULT_TOKEN.to_string(),
            ack_deadline_ms: DEFAULT_ACK_DEADLINE_MS,
            path_lease_ms: DEFAULT_PATH_LEASE_MS,
            reroute_retries: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LightpathRequest {
    pub req_id: u64,
    pub src_host: String,
    pub dst_host: String,
    pub credential: String,
    pub submitted_at: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    Auth,
    UnknownHost(String),
    Route(RouteError),
    Busy(PortRef),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Auth => f.write_str("auth"),
            Rejection::UnknownHost(h) => write!(f, "unknown-host:{h}"),
            Rejection::Route(RouteError::PortBusy(p)) | Rejection::Busy(p) => write!(f, "busy:{p}"),
            Rejection::Route(RouteError::EndpointDark(p)) => write!(f, "dark:{p}"),
            Rejection::Route(RouteError::Unreachable(s)) => write!(f, "unreachable:{s}"),
            Rejection::Route(RouteError::SameEndpoint) => f.write_str("same-endpoint"),
            Rejection::Route(e) => write!(f, "route:{}", e.to_string().replace(' ', "-")),
        }
    }
}

impl std::error::Error for Rejection {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    PreCommit,
    Committed,
    RolledBack,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AckState {
    Pending,
    Acked,
    Nacked,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TxnPurpose {
    Setup {
        req_id: u64,
        src: Endpoint,
        dst: Endpoint,
    },
    Reroute {
        attempt: u32,
        old_route: Route,
    },
}

#[derive(Clone, Debug)]
pub struct Transaction {
    pub txn_id: u64,
    pub path_id: String,
    pub phase: Phase,
    pub held_ports: BTreeSet<(PortRef, Direction)>,
    pub participants: BTreeSet<NodeId>,
    pub acks: BTreeMap<NodeId, AckState>,
    pub started_at: SimTime,
    pub ack_deadline: SimTime,
    pub route: Route,
    pub purpose: TxnPurpose,
    /// Longest message chain observed while collecting acks.
    pub depth: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathState {
    Active,
    Rerouting,
    TornDown,
}

impl fmt::Display for PathState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathState::Active => "active",
            PathState::Rerouting => "rerouting",
            PathState::TornDown => "torn_down",
        })
    }
}

/// Initiator-side record of a committed lightpath.
#[derive(Clone, Debug)]
pub struct LightpathRecord {
    pub path_id: String,
    pub req_id: u64,
    pub initiator: NodeId,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub route: Route,
    pub lease: Lease,
    pub state: PathState,
    pub flow: Option<String>,
    pub reroutes: u32,
    renew_round: u64,
    renew_pending: BTreeSet<NodeId>,
}

/// Cross-connects this agent installed for some path, with their own expiry.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPath {
    pub initiator: NodeId,
    pub hops: Vec<Hop>,
    pub expiry: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AgentTimer {
    AckDeadline { txn_id: u64 },
    RenewPath { path_id: String },
    RenewCheck { path_id: String, round: u64 },
    LeaseCheck { path_id: String },
    Resync,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentEvent {
    PathActive {
        path_id: String,
        req_id: u64,
        route: Route,
    },
    PathRerouted {
        path_id: String,
        route: Route,
    },
    PathTornDown {
        path_id: String,
        reason: String,
    },
    RequestFailed {
        req_id: u64,
        path_id: String,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Send { to: NodeId, msg: ProtocolMessage },
    Multicast { to: Vec<NodeId>, msg: ProtocolMessage },
    Broadcast { msg: ProtocolMessage },
    Timer { after_ms: u64, timer: AgentTimer },
    Trace { kind: &'static str, detail: String },
    Event(AgentEvent),
}

/// Everything a handler may touch: the clock, the controlled switch (through
/// the plant), and an outbox.
pub struct AgentCtx<'a> {
    pub now: SimTime,
    pub plant: &'a mut OpticalPlant,
    /// Causal depth of the message being handled; 0 for timers and local
    /// stimuli.
    pub depth: u32,
    pub actions: Vec<Action>,
}

impl<'a> AgentCtx<'a> {
    pub fn new(now: SimTime, plant: &'a mut OpticalPlant, depth: u32) -> Self {
        AgentCtx {
            now,
            plant,
            depth,
            actions: Vec::new(),
        }
    }

    fn send(&mut self, to: NodeId, msg: ProtocolMessage) {
        self.actions.push(Action::Send { to, msg });
    }

    fn multicast(&mut self, to: Vec<NodeId>, msg: ProtocolMessage) {
        if !to.is_empty() {
            self.actions.push(Action::Multicast { to, msg });
        }
    }

    fn broadcast(&mut self, msg: ProtocolMessage) {
        self.actions.push(Action::Broadcast { msg });
    }

    fn timer(&mut self, after_ms: u64, timer: AgentTimer) {
        self.actions.push(Action::Timer { after_ms, timer });
    }

    fn trace(&mut self, kind: &'static str, detail: String) {
        self.actions.push(Action::Trace { kind, detail });
    }

    fn event(&mut self, e: AgentEvent) {
        self.actions.push(Action::Event(e));
    }
}

/// Port view of the initiator: remote ports are assumed free (their owners
/// decide), local ports consult the lock table and the device.
struct LocalView<'a> {
    agent: &'a Agent,
    plant: &'a OpticalPlant,
    own_path: Option<&'a str>,
}

impl PortView for LocalView<'_> {
    fn status(&self, port: &PortRef, dir: Direction) -> PortStatus {
        if port.switch != self.agent.switch {
            return PortStatus::Free;
        }
        if self.agent.port_taken(self.plant, port.port, dir, self.own_path) {
            return PortStatus::Busy;
        }
        if dir == Direction::Ingress && !self.plant.port_has_light(port) {
            return PortStatus::Dark;
        }
        PortStatus::Free
    }
}

#[derive(Clone, Debug)]
pub struct Agent {
    id: NodeId,
    switch: SwitchId,
    cfg: AgentConfig,
    graph: TopoGraph,
    locks: BTreeMap<(PortId, Direction), String>,
    txns: BTreeMap<u64, Transaction>,
    paths: BTreeMap<String, LightpathRecord>,
    local: BTreeMap<String, LocalPath>,
    path_seq: u64,
    txn_seq: u64,
    clock: u64,
}

impl Agent {
    pub fn new(switch: SwitchId, graph: TopoGraph, cfg: AgentConfig) -> Self {
        Agent {
            id: agent_id(&switch),
            switch,
            cfg,
            graph,
            locks: BTreeMap::new(),
            txns: BTreeMap::new(),
            paths: BTreeMap::new(),
            local: BTreeMap::new(),
            path_seq: 0,
            txn_seq: 0,
            clock: 0,
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn switch(&self) -> &SwitchId {
        &self.switch
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &TopoGraph {
        &self.graph
    }

    pub fn paths(&self) -> impl Iterator<Item = &LightpathRecord> {
        self.paths.values()
    }

    pub fn path(&self, path_id: &str) -> Option<&LightpathRecord> {
        self.paths.get(path_id)
    }

    pub fn local_paths(&self) -> &BTreeMap<String, LocalPath> {
        &self.local
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.txns.values()
    }

    pub fn locks(&self) -> impl Iterator<Item = (PortId, Direction, &str)> {
        self.locks.iter().map(|((p, d), path)| (*p, *d, path.as_str()))
    }

    pub fn attach_flow(&mut self, path_id: &str, flow: &str) -> bool {
        match self.paths.get_mut(path_id) {
            Some(r) => {
                r.flow = Some(flow.to_string());
                true
            }
            None => false,
        }
    }

    fn port_taken(&self, plant: &OpticalPlant, port: PortId, dir: Direction, own: Option<&str>) -> bool {
        if let Some(holder) = self.locks.get(&(port, dir)) {
            if Some(holder.as_str()) != own {
                return true;
            }
        }
        plant.switch(&self.switch).is_some_and(|s| {
            s.cross_connects().iter().any(|x| {
                let hit = match dir {
                    Direction::Ingress => x.in_port == port,
                    Direction::Egress => x.out_port == port,
                };
                hit && (x.owner_path.is_none() || x.owner_path.as_deref() != own)
            })
        })
    }

    fn next_seq(&mut self) -> u64 {
        self.clock = self.clock.max(self.graph.max_seq()) + 1;
        self.clock
    }

    fn plan_route(
        &self,
        plant: &OpticalPlant,
        src: &Endpoint,
        dst: &Endpoint,
        own: Option<&str>,
    ) -> Result<Route, RouteError> {
        let tree = self.graph.compute_spt(&src.port.switch);
        let view = LocalView {
            agent: self,
            plant,
            own_path: own,
        };
        extract_route(&tree, &self.graph, src, dst, &view)
    }

    /// Lock every local port of `hops` for `path_id`, or none of them.
    fn acquire(&mut self, plant: &OpticalPlant, path_id: &str, hops: &[Hop]) -> Result<(), PortRef> {
        let keys: Vec<(PortId, Direction)> = hops
            .iter()
            .flat_map(|h| [(h.in_port, Direction::Ingress), (h.out_port, Direction::Egress)])
            .collect();
        if let Some((p, _)) = keys
            .iter()
            .find(|(p, d)| self.port_taken(plant, *p, *d, Some(path_id)))
        {
            return Err(PortRef {
                switch: self.switch.clone(),
                port: *p,
            });
        }
        for k in keys {
            self.locks.insert(k, path_id.to_string());
        }
        Ok(())
    }

    /// Make the device hold exactly `hops` for `path_id`. On device failure
    /// every trace of the path on this switch is removed.
    fn install(
        &mut self,
        path_id: &str,
        initiator: &NodeId,
        hops: &[Hop],
        ctx: &mut AgentCtx,
    ) -> Result<(), DeviceError> {
        let old = self.local.get(path_id).map(|l| l.hops.clone()).unwrap_or_default();
        for h in old.iter().filter(|h| !hops.contains(h)) {
            self.tear_hop(path_id, h, ctx);
        }
        let mut made = Vec::new();
        for h in hops.iter().filter(|h| !old.contains(h)) {
            match ctx
                .plant
                .make_cross_connect(&self.switch, h.in_port, h.out_port, Some(path_id), ctx.now)
            {
                Ok(_) => {
                    ctx.trace("xconn_made", format!("path={path_id} hop={h}"));
                    made.push(h.clone());
                }
                Err(e) => {
                    ctx.trace("xconn_failed", format!("path={path_id} hop={h} error={}", e.to_string().replace(' ', "-")));
                    for m in &made {
                        self.tear_hop(path_id, m, ctx);
                    }
                    for h in old.iter().filter(|h| hops.contains(h)) {
                        self.tear_hop(path_id, h, ctx);
                    }
                    self.local.remove(path_id);
                    self.locks.retain(|_, p| p != path_id);
                    return Err(e);
                }
            }
        }
        self.locks.retain(|_, p| p != path_id);
        for h in hops {
            self.locks.insert((h.in_port, Direction::Ingress), path_id.to_string());
            self.locks.insert((h.out_port, Direction::Egress), path_id.to_string());
        }
        self.local.insert(
            path_id.to_string(),
            LocalPath {
                initiator: initiator.clone(),
                hops: hops.to_vec(),
                expiry: ctx.now.plus(self.cfg.path_lease_ms),
            },
        );
        ctx.timer(
            self.cfg.path_lease_ms,
            AgentTimer::LeaseCheck {
                path_id: path_id.to_string(),
            },
        );
        Ok(())
    }

    fn tear_hop(&self, path_id: &str, h: &Hop, ctx: &mut AgentCtx) {
        if let Ok(true) = ctx.plant.tear_cross_connect(&self.switch, h.in_port, h.out_port) {
            ctx.trace("xconn_torn", format!("path={path_id} hop={h}"));
        }
    }

    /// Drop everything this switch holds for `path_id`. Returns whether
    /// anything was held.
    fn release(&mut self, path_id: &str, ctx: &mut AgentCtx) -> bool {
        let had_locks = self.locks.values().any(|p| p == path_id);
        self.locks.retain(|_, p| p != path_id);
        match self.local.remove(path_id) {
            Some(l) => {
                for h in &l.hops {
                    self.tear_hop(path_id, h, ctx);
                }
                true
            }
            None => had_locks,
        }
    }

    // ---- initiator side ----

    pub fn request_lightpath(
        &mut self,
        req: &LightpathRequest,
        ctx: &mut AgentCtx,
    ) -> Result<String, Rejection> {
        let result = self.try_request(req, ctx);
        if let Err(r) = &result {
            ctx.trace("request_rejected", format!("req={} reason={r}", req.req_id));
        }
        result
    }

    fn try_request(&mut self, req: &LightpathRequest, ctx: &mut AgentCtx) -> Result<String, Rejection> {
        if req.credential != self.cfg.token {
            return Err(Rejection::Auth);
        }
        let endpoint = |h: &str| {
            self.graph
                .endpoint(h)
                .ok_or_else(|| Rejection::UnknownHost(h.to_string()))
        };
        let (src, dst) = (endpoint(&req.src_host)?, endpoint(&req.dst_host)?);
        let route = self
            .plan_route(ctx.plant, &src, &dst, None)
            .map_err(Rejection::Route)?;
        self.path_seq += 1;
        let path_id = format!("{}/{}", self.id, self.path_seq);
        ctx.trace(
            "request_accepted",
            format!("req={} path={path_id} src={} dst={}", req.req_id, req.src_host, req.dst_host),
        );
        let purpose = TxnPurpose::Setup {
            req_id: req.req_id,
            src,
            dst,
        };
        self.begin_txn(&path_id, route, purpose, ctx).map_err(Rejection::Busy)?;
        Ok(path_id)
    }

    fn begin_txn(
        &mut self,
        path_id: &str,
        route: Route,
        purpose: TxnPurpose,
        ctx: &mut AgentCtx,
    ) -> Result<u64, PortRef> {
        let local_hops: Vec<Hop> = route.hops_on(&self.switch).cloned().collect();
        self.acquire(ctx.plant, path_id, &local_hops)?;

        self.txn_seq += 1;
        let txn_id = self.txn_seq;
        let participants: BTreeSet<NodeId> = route
            .switches()
            .filter(|s| **s != self.switch)
            .map(agent_id)
            .collect();
        let kind = match purpose {
            TxnPurpose::Setup { .. } => "setup",
            TxnPurpose::Reroute { .. } => "reroute",
        };
        ctx.trace(
            "txn_begin",
            format!(
                "txn={txn_id} path={path_id} purpose={kind} participants={} route={}",
                participants.len(),
                route.to_string().replace(' ', ",")
            ),
        );
        for p in &participants {
            let hops: Vec<Hop> = route
                .hops
                .iter()
                .filter(|h| agent_id(&h.switch) == *p)
                .cloned()
                .collect();
            ctx.send(
                p.clone(),
                ProtocolMessage::XConnRequest {
                    path_id: path_id.to_string(),
                    txn_id,
                    hops,
                },
            );
        }
        let txn = Transaction {
            txn_id,
            path_id: path_id.to_string(),
            phase: Phase::PreCommit,
            held_ports: route.ports().into_iter().collect(),
            acks: participants.iter().map(|p| (p.clone(), AckState::Pending)).collect(),
            participants,
            started_at: ctx.now,
            ack_deadline: ctx.now.plus(self.cfg.ack_deadline_ms),
            route,
            purpose,
            depth: 0,
        };
        let no_remote = txn.participants.is_empty();
        self.txns.insert(txn_id, txn);

        if !local_hops.is_empty() {
            let me = self.id.clone();
            if let Err(e) = self.install(path_id, &me, &local_hops, ctx) {
                self.rollback(txn_id, &format!("local-{}", reason_of(&e)), ctx);
                return Ok(txn_id);
            }
        }
        if no_remote {
            self.commit(txn_id, ctx);
        } else {
            ctx.timer(self.cfg.ack_deadline_ms, AgentTimer::AckDeadline { txn_id });
        }
        Ok(txn_id)
    }

    fn on_ack(&mut self, from: &NodeId, txn_id: u64, ctx: &mut AgentCtx) {
        let Some(txn) = self.txns.get_mut(&txn_id) else {
            return;
        };
        if txn.phase != Phase::PreCommit || txn.acks.get(from) != Some(&AckState::Pending) {
            return;
        }
        txn.acks.insert(from.clone(), AckState::Acked);
        txn.depth = txn.depth.max(ctx.depth);
        if txn.acks.values().all(|a| *a == AckState::Acked) {
            self.commit(txn_id, ctx);
        }
    }

    fn on_nack(&mut self, from: &NodeId, txn_id: u64, reason: &str, ctx: &mut AgentCtx) {
        let Some(txn) = self.txns.get_mut(&txn_id) else {
            return;
        };
        if txn.phase != Phase::PreCommit {
            return;
        }
        txn.acks.insert(from.clone(), AckState::Nacked);
        self.rollback(txn_id, &format!("nack:{from}:{reason}"), ctx);
    }

    fn commit(&mut self, txn_id: u64, ctx: &mut AgentCtx) {
        let txn = self.txns.get_mut(&txn_id).expect("live txn");
        txn.phase = Phase::Committed;
        let txn = txn.clone();
        let path_id = txn.path_id.clone();
        let kind = match txn.purpose {
            TxnPurpose::Setup { .. } => "setup",
            TxnPurpose::Reroute { .. } => "reroute",
        };
        ctx.trace(
            "txn_commit",
            format!(
                "txn={txn_id} path={path_id} purpose={kind} depth={} latency={}",
                txn.depth,
                ctx.now.since(txn.started_at)
            ),
        );
        match txn.purpose {
            TxnPurpose::Setup { req_id, src, dst } => {
                let lease = Lease {
                    lease_id: txn_id,
                    holder: self.id.clone(),
                    subject: LeaseSubject::Lightpath(path_id.clone()),
                    granted_at: ctx.now,
                    duration: self.cfg.path_lease_ms,
                    renew_count: 0,
                };
                self.paths.insert(
                    path_id.clone(),
                    LightpathRecord {
                        path_id: path_id.clone(),
                        req_id,
                        initiator: self.id.clone(),
                        src,
                        dst,
                        route: txn.route.clone(),
                        lease,
                        state: PathState::Active,
                        flow: None,
                        reroutes: 0,
                        renew_round: 0,
                        renew_pending: BTreeSet::new(),
                    },
                );
                ctx.trace(
                    "path_active",
                    format!(
                        "path={path_id} req={req_id} hops={}",
                        txn.route.to_string().replace(' ', ",")
                    ),
                );
                ctx.event(AgentEvent::PathActive {
                    path_id: path_id.clone(),
                    req_id,
                    route: txn.route,
                });
                ctx.timer(self.cfg.path_lease_ms / 2, AgentTimer::RenewPath { path_id });
            }
            TxnPurpose::Reroute { old_route, .. } => {
                let new_switches: BTreeSet<&SwitchId> = txn.route.switches().collect();
                let stale: BTreeSet<NodeId> = old_route
                    .switches()
                    .filter(|s| !new_switches.contains(s) && **s != self.switch)
                    .map(agent_id)
                    .collect();
                ctx.multicast(
                    stale.into_iter().collect(),
                    ProtocolMessage::Teardown {
                        path_id: path_id.clone(),
                    },
                );
                if !new_switches.contains(&self.switch) {
                    self.release(&path_id, ctx);
                }
                let rec = self.paths.get_mut(&path_id).expect("rerouted path has record");
                rec.route = txn.route.clone();
                rec.state = PathState::Active;
                rec.reroutes += 1;
                rec.lease.renew(ctx.now);
                rec.renew_pending.clear();
                ctx.trace(
                    "reroute_ok",
                    format!(
                        "path={path_id} count={} hops={}",
                        rec.reroutes,
                        txn.route.to_string().replace(' ', ",")
                    ),
                );
                ctx.event(AgentEvent::PathRerouted {
                    path_id,
                    route: txn.route,
                });
            }
        }
    }

    fn rollback(&mut self, txn_id: u64, reason: &str, ctx: &mut AgentCtx) {
        let txn = self.txns.get_mut(&txn_id).expect("live txn");
        if txn.phase != Phase::PreCommit {
            return;
        }
        txn.phase = Phase::RolledBack;
        let txn = txn.clone();
        let path_id = txn.path_id.clone();
        ctx.trace("txn_rollback", format!("txn={txn_id} path={path_id} reason={reason}"));
        let compensate: Vec<NodeId> = txn
            .acks
            .iter()
            .filter(|(_, a)| **a != AckState::Nacked)
            .map(|(p, _)| p.clone())
            .collect();
        ctx.multicast(
            compensate,
            ProtocolMessage::Teardown {
                path_id: path_id.clone(),
            },
        );
        self.release(&path_id, ctx);
        match txn.purpose {
            TxnPurpose::Setup { req_id, .. } => {
                ctx.event(AgentEvent::RequestFailed {
                    req_id,
                    path_id,
                    reason: reason.to_string(),
                });
            }
            TxnPurpose::Reroute { attempt, .. } => self.reroute_attempt_failed(&path_id, attempt, ctx),
        }
    }

    fn reroute_attempt_failed(&mut self, path_id: &str, attempt: u32, ctx: &mut AgentCtx) {
        if attempt <= self.cfg.reroute_retries {
            self.start_reroute(path_id, attempt + 1, "retry", ctx);
        } else {
            self.teardown_path(path_id, "reroute-failed", ctx);
        }
    }

    fn start_reroute(&mut self, path_id: &str, attempt: u32, reason: &str, ctx: &mut AgentCtx) {
        let Some(rec) = self.paths.get_mut(path_id) else {
            return;
        };
        if rec.state == PathState::TornDown {
            return;
        }
        rec.state = PathState::Rerouting;
        let (src, dst, old_route) = (rec.src.clone(), rec.dst.clone(), rec.route.clone());
        ctx.trace(
            "reroute_begin",
            format!("path={path_id} attempt={attempt} reason={reason}"),
        );
        let route = match self.plan_route(ctx.plant, &src, &dst, Some(path_id)) {
            Ok(r) => r,
            Err(e) => {
                let why = Rejection::Route(e).to_string();
                self.teardown_path(path_id, &format!("no-route:{why}"), ctx);
                return;
            }
        };
        let purpose = TxnPurpose::Reroute { attempt, old_route };
        if let Err(port) = self.begin_txn(path_id, route, purpose, ctx) {
            ctx.trace("reroute_busy", format!("path={path_id} port={port}"));
            self.reroute_attempt_failed(path_id, attempt, ctx);
        }
    }

    fn teardown_path(&mut self, path_id: &str, reason: &str, ctx: &mut AgentCtx) {
        let Some(rec) = self.paths.get_mut(path_id) else {
            return;
        };
        if rec.state == PathState::TornDown {
            return;
        }
        rec.state = PathState::TornDown;
        let mut targets: BTreeSet<NodeId> = rec
            .route
            .switches()
            .filter(|s| **s != self.switch)
            .map(agent_id)
            .collect();
        for txn in self.txns.values_mut().filter(|t| t.path_id == path_id) {
            if txn.phase == Phase::PreCommit {
                txn.phase = Phase::RolledBack;
                targets.extend(txn.participants.iter().cloned());
            }
        }
        ctx.multicast(
            targets.into_iter().collect(),
            ProtocolMessage::Teardown {
                path_id: path_id.to_string(),
            },
        );
        self.release(path_id, ctx);
        ctx.trace("path_torn_down", format!("path={path_id} reason={reason}"));
        ctx.event(AgentEvent::PathTornDown {
            path_id: path_id.to_string(),
            reason: reason.to_string(),
        });
    }

    /// Client-initiated teardown. Unknown or finished paths are a traced
    /// no-op.
    pub fn teardown(&mut self, path_id: &str, credential: &str, ctx: &mut AgentCtx) -> Result<(), Rejection> {
        if credential != self.cfg.token {
            ctx.trace("request_rejected", format!("path={path_id} reason=auth"));
            return Err(Rejection::Auth);
        }
        match self.paths.get(path_id) {
            Some(r) if r.state != PathState::TornDown => self.teardown_path(path_id, "client", ctx),
            _ => ctx.trace("teardown_noop", format!("path={path_id}")),
        }
        Ok(())
    }

    // ---- message and timer dispatch ----

    pub fn on_message(&mut self, from: &NodeId, msg: ProtocolMessage, ctx: &mut AgentCtx) {
        match msg {
            ProtocolMessage::XConnRequest { path_id, txn_id, hops } => {
                self.on_xconn_request(from, &path_id, txn_id, &hops, ctx)
            }
            ProtocolMessage::XConnAck { txn_id, .. } => self.on_ack(from, txn_id, ctx),
            ProtocolMessage::XConnNack { txn_id, reason, .. } => {
                self.on_nack(from, txn_id, &reason, ctx)
            }
            ProtocolMessage::Teardown { path_id } => {
                if !self.release(&path_id, ctx) {
                    ctx.trace("teardown_noop", format!("path={path_id}"));
                }
            }
            ProtocolMessage::PathLeaseRenew { path_id, round } => {
                let lease = self.cfg.path_lease_ms;
                match self.local.get_mut(&path_id) {
                    Some(l) => {
                        l.expiry = ctx.now.plus(lease);
                        ctx.timer(lease, AgentTimer::LeaseCheck { path_id: path_id.clone() });
                        ctx.send(from.clone(), ProtocolMessage::PathLeaseAck { path_id, round });
                    }
                    None => ctx.trace("renew_unknown", format!("path={path_id} round={round}")),
                }
            }
            ProtocolMessage::PathLeaseAck { path_id, round } => {
                if let Some(rec) = self.paths.get_mut(&path_id) {
                    if rec.renew_round == round {
                        rec.renew_pending.remove(from);
                    }
                }
            }
            ProtocolMessage::LossOfLightNotify { path_id, update } => {
                self.learn(&update, ctx);
                let span_cut = self
                    .graph
                    .edge(&update.span_id)
                    .is_some_and(|e| e.state == SpanState::Cut);
                match self.paths.get(&path_id) {
                    Some(r)
                        if r.state == PathState::Active
                            && span_cut
                            && r.route.spans.contains(&update.span_id) =>
                    {
                        self.start_reroute(&path_id, 1, "loss-of-light", ctx)
                    }
                    _ => ctx.trace(
                        "notify_ignored",
                        format!("path={path_id} span={}", update.span_id),
                    ),
                }
            }
            ProtocolMessage::TopoAnnounce(u) => self.learn(&u, ctx),
            ProtocolMessage::TopoSyncRequest => {
                ctx.send(from.clone(), ProtocolMessage::TopoSnapshot(self.graph.latest_updates()));
            }
            ProtocolMessage::TopoSnapshot(us) => {
                for u in &us {
                    self.learn(u, ctx);
                }
                self.resync(ctx);
            }
        }
    }

    fn on_xconn_request(
        &mut self,
        from: &NodeId,
        path_id: &str,
        txn_id: u64,
        hops: &[Hop],
        ctx: &mut AgentCtx,
    ) {
        let ack = ProtocolMessage::XConnAck {
            path_id: path_id.to_string(),
            txn_id,
        };
        if self.local.get(path_id).is_some_and(|l| l.hops == hops) {
            let lease = self.cfg.path_lease_ms;
            if let Some(l) = self.local.get_mut(path_id) {
                l.expiry = ctx.now.plus(lease);
            }
            ctx.timer(lease, AgentTimer::LeaseCheck { path_id: path_id.to_string() });
            ctx.trace("xconn_reack", format!("path={path_id} txn={txn_id}"));
            ctx.send(from.clone(), ack);
            return;
        }
        let nack = |reason: String| ProtocolMessage::XConnNack {
            path_id: path_id.to_string(),
            txn_id,
            reason,
        };
        if let Err(port) = self.acquire(ctx.plant, path_id, hops) {
            ctx.trace("xconn_refused", format!("path={path_id} txn={txn_id} reason=port-busy port={port}"));
            ctx.send(from.clone(), nack(format!("port-busy:{port}")));
            return;
        }
        if let Err(e) = self.install(path_id, from, hops, ctx) {
            ctx.send(from.clone(), nack(reason_of(&e)));
            return;
        }
        ctx.send(from.clone(), ack);
    }

    pub fn on_timer(&mut self, timer: AgentTimer, ctx: &mut AgentCtx) {
        match timer {
            AgentTimer::AckDeadline { txn_id } => {
                if self.txns.get(&txn_id).is_some_and(|t| t.phase == Phase::PreCommit) {
                    self.rollback(txn_id, "ack-deadline", ctx);
                }
            }
            AgentTimer::RenewPath { path_id } => self.renew_path(&path_id, ctx),
            AgentTimer::RenewCheck { path_id, round } => {
                let Some(rec) = self.paths.get(&path_id) else {
                    return;
                };
                if rec.state == PathState::Active && rec.renew_round == round && !rec.renew_pending.is_empty() {
                    let missing: Vec<String> = rec.renew_pending.iter().map(NodeId::to_string).collect();
                    ctx.trace(
                        "renew_missing",
                        format!("path={path_id} round={round} from={}", missing.join(",")),
                    );
                    self.start_reroute(&path_id, 1, "renew-missing", ctx);
                }
            }
            AgentTimer::LeaseCheck { path_id } => {
                if self.local.get(&path_id).is_some_and(|l| l.expiry <= ctx.now) {
                    ctx.trace("path_lease_expired", format!("path={path_id}"));
                    self.release(&path_id, ctx);
                }
            }
            AgentTimer::Resync => self.resync(ctx),
        }
    }

    fn renew_path(&mut self, path_id: &str, ctx: &mut AgentCtx) {
        let half = self.cfg.path_lease_ms / 2;
        let lease = self.cfg.path_lease_ms;
        let me = self.switch.clone();
        let Some(rec) = self.paths.get_mut(path_id) else {
            return;
        };
        if rec.state == PathState::TornDown {
            return;
        }
        rec.lease.renew(ctx.now);
        if rec.state == PathState::Active {
            rec.renew_round += 1;
            let round = rec.renew_round;
            rec.renew_pending = rec.route.switches().filter(|s| **s != me).map(agent_id).collect();
            let targets: Vec<NodeId> = rec.renew_pending.iter().cloned().collect();
            if !targets.is_empty() {
                ctx.multicast(
                    targets,
                    ProtocolMessage::PathLeaseRenew {
                        path_id: path_id.to_string(),
                        round,
                    },
                );
                ctx.timer(
                    self.cfg.ack_deadline_ms,
                    AgentTimer::RenewCheck {
                        path_id: path_id.to_string(),
                        round,
                    },
                );
            }
        }
        if let Some(l) = self.local.get_mut(path_id) {
            l.expiry = ctx.now.plus(lease);
            ctx.timer(lease, AgentTimer::LeaseCheck { path_id: path_id.to_string() });
        }
        ctx.timer(half, AgentTimer::RenewPath { path_id: path_id.to_string() });
    }

    // ---- topology ----

    fn learn(&mut self, u: &LinkStateUpdate, ctx: &mut AgentCtx) {
        self.clock = self.clock.max(u.origin_seq);
        let changes = self.graph.apply_update(u);
        if changes.is_empty() {
            return;
        }
        self.reroute_affected(&changes.spans, ctx);
    }

    /// Reroute own active paths that cross a span now known to be cut.
    fn reroute_affected(&mut self, spans: &[String], ctx: &mut AgentCtx) {
        let cut: Vec<&String> = spans
            .iter()
            .filter(|s| self.graph.edge(s).is_some_and(|e| e.state == SpanState::Cut))
            .collect();
        if cut.is_empty() {
            return;
        }
        let hit: Vec<String> = self
            .paths
            .values()
            .filter(|r| r.state == PathState::Active && r.route.spans.iter().any(|s| cut.contains(&s)))
            .map(|r| r.path_id.clone())
            .collect();
        for p in hit {
            self.start_reroute(&p, 1, "topology", ctx);
        }
    }

    fn announce(&mut self, span_id: &str, state: SpanState, ctx: &mut AgentCtx) -> Option<LinkStateUpdate> {
        let span = ctx.plant.span(span_id)?.clone();
        let u = LinkStateUpdate {
            origin: self.id.to_string(),
            span_id: span_id.to_string(),
            state,
            cost: span.cost,
            origin_seq: self.next_seq(),
            announce: Some((span.from, span.to)),
        };
        ctx.broadcast(ProtocolMessage::TopoAnnounce(u.clone()));
        Some(u)
    }

    /// Device push: a span ending on this switch changed state.
    pub fn on_light_event(&mut self, ev: &LightEvent, ctx: &mut AgentCtx) {
        let state = match ev.change {
            LightChange::LossOfLight => SpanState::Cut,
            LightChange::Restored => SpanState::Lit,
        };
        ctx.trace(
            match ev.change {
                LightChange::LossOfLight => "loss_of_light",
                LightChange::Restored => "light_restored",
            },
            format!("span={} port={}", ev.span_id, ev.port),
        );
        let Some(u) = self.announce(&ev.span_id, state, ctx) else {
            return;
        };
        let changes = self.graph.apply_update(&u);
        if state == SpanState::Cut {
            let notify: Vec<(String, NodeId)> = self
                .local
                .iter()
                .filter(|(_, l)| l.initiator != self.id && l.hops.iter().any(|h| self.hop_uses_span(h, &u)))
                .map(|(p, l)| (p.clone(), l.initiator.clone()))
                .collect();
            for (path_id, initiator) in notify {
                ctx.send(
                    initiator,
                    ProtocolMessage::LossOfLightNotify {
                        path_id,
                        update: u.clone(),
                    },
                );
            }
        }
        if !changes.is_empty() {
            self.reroute_affected(&changes.spans, ctx);
        }
    }

    fn hop_uses_span(&self, h: &Hop, u: &LinkStateUpdate) -> bool {
        let Some((from, to)) = &u.announce else {
            return false;
        };
        (from.switch == self.switch && from.port == h.out_port)
            || (to.switch == self.switch && to.port == h.in_port)
    }

    /// Announce any span on this switch whose device state the graph has
    /// wrong (after a restart, or a missed announcement).
    fn resync(&mut self, ctx: &mut AgentCtx) {
        let stale: Vec<(String, SpanState)> = ctx
            .plant
            .spans()
            .filter(|s| s.from.switch == self.switch || s.to.switch == self.switch)
            .filter(|s| self.graph.edge(&s.span_id).map(|e| e.state) != Some(s.state))
            .map(|s| (s.span_id.clone(), s.state))
            .collect();
        for (span, state) in stale {
            if let Some(u) = self.announce(&span, state, ctx) {
                let changes = self.graph.apply_update(&u);
                self.reroute_affected(&changes.spans, ctx);
            }
        }
    }

    /// Called when the agent process comes back empty after a crash: remove
    /// cross-connects a previous incarnation left behind and ask peers for
    /// the current topology.
    pub fn on_restart(&mut self, ctx: &mut AgentCtx) {
        let owned: Vec<(PortId, PortId, String)> = ctx
            .plant
            .switch(&self.switch)
            .map(|s| {
                s.cross_connects()
                    .iter()
                    .filter_map(|x| x.owner_path.clone().map(|p| (x.in_port, x.out_port, p)))
                    .collect()
            })
            .unwrap_or_default();
        for (i, o, p) in &owned {
            let _ = ctx.plant.tear_cross_connect(&self.switch, *i, *o);
            ctx.trace("reconcile_teardown", format!("path={p} hop={}:{i}>{o}", self.switch));
        }
        ctx.broadcast(ProtocolMessage::TopoSyncRequest);
        ctx.timer(self.cfg.ack_deadline_ms, AgentTimer::Resync);
    }
}

fn reason_of(e: &DeviceError) -> String {
    match e {
        DeviceError::DeviceFailure(_) => "device-failure".to_string(),
        DeviceError::PortBusy { port, .. } => format!("port-busy:{port}"),
        other => other.to_string().replace(' ', "-"),
    }
}
