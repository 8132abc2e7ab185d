//! The simulated deployment: one agent per switch, a lookup service, client
//! requests, modeled flows, and the optical plant, all driven by one
//! deterministic [`SimNet`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::agent::wire::{self, WireError};
use crate::agent::{
    agent_id, Action, Agent, AgentConfig, AgentCtx, AgentEvent, AgentTimer, LightpathRecord,
    LightpathRequest, PathState, ProtocolMessage,
};
use crate::device::{DeviceError, OpticalPlant, SpanState, SwitchId};
use crate::lookup::{
    Notice, Registry, ServiceDescriptor, ServiceKind, SubscriptionId, DEFAULT_REGISTRATION_LEASE_MS,
};
use crate::simnet::{
    Describe, Destination, EventTrace, FaultKind, FaultSpec, Fired, GroupName, NetError,
    NetPayload, NodeId, Outgoing, SimNet, SimTime, DEFAULT_LATENCY_MS,
};
use crate::topology::TopoGraph;

pub const DEFAULT_TCP_BUDGET_MS: u64 = 2000;
pub const LOOKUP_NODE: &str = "lookup";

/// What the fabric carries.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// An encoded [`ProtocolMessage`].
    Frame(Vec<u8>),
    Notice(Notice),
}

impl Describe for Payload {
    fn describe(&self) -> String {
        match self {
            Payload::Frame(bytes) => match wire::decode(bytes) {
                Ok(m) => m.describe(),
                Err(e) => format!("type=undecodable error={e:?}"),
            },
            Payload::Notice(n) => format!("type=notice kind={} sub={}", n.event.kind, n.subscription.0),
        }
    }
}

/// A scripted client or operator action.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Request { src: String, dst: String },
    Teardown { path_id: String },
    TeardownAll,
    FailSwitch { switch: SwitchId, failed: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub enum LocalEvent {
    Agent(AgentTimer),
    RegistrationRenew,
    LeaseSweep,
    FlowDeadline { flow_id: String, dark_since: SimTime },
    Command(Command),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RequestOutcome {
    Pending { agent: NodeId, path_id: String },
    Active { path_id: String },
    Rejected(String),
    Failed(String),
    /// Sent to an agent that was down.
    Lost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowState {
    Alive,
    Dead,
    Closed,
}

/// A transfer riding a lightpath that dies when its path stays dark longer
/// than the timeout budget.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    pub flow_id: String,
    pub path_id: String,
    pub dst_host: String,
    pub timeout_budget: u64,
    pub dark_since: Option<SimTime>,
    pub state: FlowState,
    pub dark_intervals: Vec<(SimTime, SimTime)>,
}

#[derive(Clone, Debug)]
pub struct WorldConfig {
    pub seed: u64,
    pub agent: AgentConfig,
    pub registration_lease_ms: u64,
    pub tcp_budget_ms: u64,
    pub latency_ms: u64,
    /// Credential attached to client requests.
    pub client_token: String,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let agent = AgentConfig::default();
        WorldConfig {
            seed: 0,
            client_token: agent.token.clone(),
            agent,
            registration_lease_ms: DEFAULT_REGISTRATION_LEASE_MS,
            tcp_budget_ms: DEFAULT_TCP_BUDGET_MS,
            latency_ms: DEFAULT_LATENCY_MS,
        }
    }
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("command time {at} is before now {now}")]
    InPast { at: SimTime, now: SimTime },
}

pub struct World {
    net: SimNet<Payload, LocalEvent>,
    plant: OpticalPlant,
    baseline: TopoGraph,
    agents: BTreeMap<NodeId, Agent>,
    registry: Registry,
    registrations: BTreeMap<NodeId, u64>,
    flows: BTreeMap<String, FlowModel>,
    outcomes: BTreeMap<u64, RequestOutcome>,
    next_req: u64,
    plant_generation: u64,
    cfg: WorldConfig,
}

impl World {
    pub fn new(plant: OpticalPlant, cfg: WorldConfig) -> Result<World, WorldError> {
        let mut net = SimNet::new(cfg.seed);
        net.set_default_latency(cfg.latency_ms);
        let group = cfg.agent.group.clone();
        net.attach(NodeId::new(LOOKUP_NODE), std::slice::from_ref(&group))?;
        let baseline = TopoGraph::from_plant(&plant);
        let mut world = World {
            net,
            plant_generation: plant.generation(),
            plant,
            baseline,
            agents: BTreeMap::new(),
            registry: Registry::new(),
            registrations: BTreeMap::new(),
            flows: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            next_req: 0,
            cfg,
        };
        let switches: Vec<SwitchId> = world.plant.switches().map(|s| s.id.clone()).collect();
        for sw in switches {
            let agent = Agent::new(sw.clone(), world.baseline.clone(), world.cfg.agent.clone());
            let id = agent.id().clone();
            world.net.attach(id.clone(), std::slice::from_ref(&group))?;
            world.agents.insert(id.clone(), agent);
            world.register(&id, &sw);
        }
        Ok(world)
    }

    pub fn now(&self) -> SimTime {
        self.net.now()
    }

    pub fn trace(&self) -> &EventTrace {
        self.net.trace()
    }

    pub fn net(&self) -> &SimNet<Payload, LocalEvent> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut SimNet<Payload, LocalEvent> {
        &mut self.net
    }

    pub fn plant(&self) -> &OpticalPlant {
        &self.plant
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn agents(&self) -> impl Iterator<Item = &Agent> {
        self.agents.values()
    }

    pub fn agent(&self, id: &NodeId) -> Option<&Agent> {
        self.agents.get(id)
    }

    pub fn agent_for(&self, sw: &str) -> Option<&Agent> {
        self.agents.get(&agent_id(&SwitchId::from(sw)))
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn flows(&self) -> &BTreeMap<String, FlowModel> {
        &self.flows
    }

    pub fn outcome(&self, req_id: u64) -> Option<&RequestOutcome> {
        self.outcomes.get(&req_id)
    }

    pub fn outcomes(&self) -> &BTreeMap<u64, RequestOutcome> {
        &self.outcomes
    }

    /// Every lightpath record held by a live initiator.
    pub fn lightpaths(&self) -> impl Iterator<Item = &LightpathRecord> {
        self.agents.values().flat_map(Agent::paths)
    }

    pub fn lightpath(&self, path_id: &str) -> Option<&LightpathRecord> {
        self.agents.values().find_map(|a| a.path(path_id))
    }

    pub fn active_paths(&self) -> Vec<&LightpathRecord> {
        self.lightpaths().filter(|r| r.state == PathState::Active).collect()
    }

    pub fn set_latency(&mut self, ms: u64) {
        self.net.set_default_latency(ms);
    }

    // ---- lookup ----

    fn register(&mut self, id: &NodeId, sw: &SwitchId) {
        let desc = ServiceDescriptor::new(id.clone(), vec![self.cfg.agent.group.clone()], ServiceKind::Agent)
            .with_attribute("switch", sw.as_str());
        let now = self.now();
        let reg = self
            .registry
            .register(desc, self.cfg.registration_lease_ms, now)
            .expect("agent descriptors are valid");
        self.net.record(
            "registered",
            id.as_str(),
            format!("lease={} expiry={}", reg.lease.lease_id, reg.lease.expiry().ms()),
        );
        self.registrations.insert(id.clone(), reg.lease.lease_id);
        self.send_notices(reg.notices);
        self.net.schedule_local(
            Some(id.clone()),
            self.cfg.registration_lease_ms / 2,
            LocalEvent::RegistrationRenew,
        );
        self.net
            .schedule_local(None, self.cfg.registration_lease_ms, LocalEvent::LeaseSweep);
    }

    fn send_notices(&mut self, notices: Vec<Notice>) {
        let group = self.cfg.agent.group.clone();
        for n in notices {
            let _ = self.net.send(Outgoing {
                src: NodeId::new(LOOKUP_NODE),
                dest: Destination::Unicast(n.subscriber.clone()),
                group: group.clone(),
                payload: Payload::Notice(n),
                depth: 1,
            });
        }
    }

    /// Attach a non-agent node (a client or monitor) to the agent group.
    pub fn add_client(&mut self, name: &str) -> Result<NodeId, WorldError> {
        let id = NodeId::new(name);
        self.net.attach(id.clone(), std::slice::from_ref(&self.cfg.agent.group))?;
        Ok(id)
    }

    pub fn subscribe(&mut self, subscriber: &NodeId, group: Option<GroupName>) -> SubscriptionId {
        self.registry.subscribe(subscriber.clone(), group)
    }

    pub fn discover(&self, group: &GroupName) -> Vec<ServiceDescriptor> {
        self.registry.discover(group, None, self.now())
    }

    /// The live registered agent closest to `sw` by shortest-path distance,
    /// ties broken by id.
    pub fn closest_agent(&self, sw: &SwitchId) -> Option<NodeId> {
        let graph = TopoGraph::from_plant(&self.plant);
        let tree = graph.compute_spt(sw);
        self.registry
            .discover(&self.cfg.agent.group, Some(ServiceKind::Agent), self.now())
            .into_iter()
            .filter_map(|d| {
                let sw = SwitchId::new(d.attributes.get("switch")?.clone());
                Some((tree.dist(&sw)?, d.node))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
            .map(|(_, n)| n)
    }

    // ---- client surface ----

    /// Submit a request now with the configured client token.
    pub fn submit(&mut self, src: &str, dst: &str) -> u64 {
        let token = self.cfg.client_token.clone();
        self.submit_with(src, dst, &token)
    }

    pub fn submit_with(&mut self, src: &str, dst: &str, credential: &str) -> u64 {
        self.next_req += 1;
        let req = LightpathRequest {
            req_id: self.next_req,
            src_host: src.to_string(),
            dst_host: dst.to_string(),
            credential: credential.to_string(),
            submitted_at: self.now(),
        };
        let outcome = self.route_request(&req);
        self.outcomes.insert(req.req_id, outcome);
        req.req_id
    }

    /// Submit directly to `agent`, bypassing closest-agent selection.
    pub fn submit_to(&mut self, agent: &NodeId, src: &str, dst: &str) -> u64 {
        self.next_req += 1;
        let req = LightpathRequest {
            req_id: self.next_req,
            src_host: src.to_string(),
            dst_host: dst.to_string(),
            credential: self.cfg.client_token.clone(),
            submitted_at: self.now(),
        };
        let outcome = self.deliver_request(agent, &req);
        self.outcomes.insert(req.req_id, outcome);
        req.req_id
    }

    fn route_request(&mut self, req: &LightpathRequest) -> RequestOutcome {
        let Some(host) = self.plant.host(&req.src_host) else {
            self.net.record(
                "request_rejected",
                "client",
                format!("req={} reason=unknown-host:{}", req.req_id, req.src_host),
            );
            return RequestOutcome::Rejected(format!("unknown-host:{}", req.src_host));
        };
        let sw = host.attached.switch.clone();
        match self.closest_agent(&sw) {
            Some(agent) => self.deliver_request(&agent, req),
            None => {
                self.net
                    .record("request_rejected", "client", format!("req={} reason=no-agent", req.req_id));
                RequestOutcome::Rejected("no-agent".into())
            }
        }
    }

    fn deliver_request(&mut self, agent: &NodeId, req: &LightpathRequest) -> RequestOutcome {
        self.net.record(
            "request",
            agent.as_str(),
            format!("req={} src={} dst={}", req.req_id, req.src_host, req.dst_host),
        );
        if self.net.is_crashed(agent) || !self.agents.contains_key(agent) {
            self.net.record("request_lost", agent.as_str(), format!("req={}", req.req_id));
            return RequestOutcome::Lost;
        }
        let now = self.now();
        let mut a = self.agents.remove(agent).expect("checked");
        let mut ctx = AgentCtx::new(now, &mut self.plant, 0);
        let result = a.request_lightpath(req, &mut ctx);
        let actions = ctx.actions;
        self.agents.insert(agent.clone(), a);
        let outcome = match result {
            Ok(path_id) => RequestOutcome::Pending {
                agent: agent.clone(),
                path_id,
            },
            Err(r) => RequestOutcome::Rejected(r.to_string()),
        };
        self.outcomes.insert(req.req_id, outcome.clone());
        self.apply(agent, 0, actions);
        self.outcomes.get(&req.req_id).cloned().unwrap_or(outcome)
    }

    /// Client teardown, sent to the path's initiator.
    pub fn teardown(&mut self, path_id: &str) -> Result<(), String> {
        let token = self.cfg.client_token.clone();
        let initiator = match path_id.split_once('/') {
            Some((a, _)) => NodeId::new(a),
            None => {
                self.net.record("teardown_noop", "client", format!("path={path_id}"));
                return Ok(());
            }
        };
        if self.net.is_crashed(&initiator) || !self.agents.contains_key(&initiator) {
            self.net.record("request_lost", initiator.as_str(), format!("teardown={path_id}"));
            return Ok(());
        }
        self.with_agent(&initiator, 0, |a, ctx| a.teardown(path_id, &token, ctx))
            .unwrap_or(Ok(()))
            .map_err(|e| e.to_string())
    }

    pub fn teardown_all(&mut self) {
        let ids: Vec<String> = self
            .lightpaths()
            .filter(|r| r.state != PathState::TornDown)
            .map(|r| r.path_id.clone())
            .collect();
        for id in ids {
            let _ = self.teardown(&id);
        }
    }

    pub fn set_switch_failed(&mut self, sw: &SwitchId, failed: bool) -> Result<(), WorldError> {
        self.plant.set_switch_failed(sw, failed)?;
        self.net.record("device", sw.as_str(), format!("failed={failed}"));
        Ok(())
    }

    /// Schedule a command at absolute time `at`.
    pub fn schedule(&mut self, at: SimTime, cmd: Command) -> Result<(), WorldError> {
        let now = self.now();
        if at < now {
            return Err(WorldError::InPast { at, now });
        }
        self.net.schedule_local(None, at.since(now), LocalEvent::Command(cmd));
        Ok(())
    }

    pub fn inject_fault(&mut self, fault: FaultSpec) -> Result<(), WorldError> {
        let plant = &self.plant;
        self.net
            .inject_fault(fault, |t| plant.resolve_target(t).is_some())?;
        Ok(())
    }

    // ---- driving ----

    pub fn run_until(&mut self, until: SimTime) {
        while let Some(ev) = self.net.next_event(until) {
            self.dispatch(ev);
        }
        self.check_flows();
    }

    pub fn run_for(&mut self, ms: u64) {
        let until = self.now().plus(ms);
        self.run_until(until);
    }

    fn dispatch(&mut self, fired: Fired<Payload, LocalEvent>) {
        match fired {
            Fired::Deliver { to, env } => match &env.payload {
                NetPayload::Joined { .. } => {}
                NetPayload::App(Payload::Notice(n)) => {
                    self.net.record(
                        "notice",
                        to.as_str(),
                        format!("kind={} subject={}", n.event.kind, n.event.subject.node),
                    );
                }
                NetPayload::App(Payload::Frame(bytes)) => {
                    if !self.agents.contains_key(&to) {
                        return;
                    }
                    match wire::decode(bytes) {
                        Ok(msg) => {
                            let from = env.src.clone();
                            self.with_agent(&to, env.depth, |a, ctx| a.on_message(&from, msg, ctx));
                        }
                        Err(e) => self.net.record("decode_error", to.as_str(), format!("error={e:?}")),
                    }
                }
            },
            Fired::Fault(spec) => self.on_fault(spec),
            Fired::Local { node, payload } => match payload {
                LocalEvent::Agent(timer) => {
                    if let Some(n) = node {
                        self.with_agent(&n, 0, |a, ctx| a.on_timer(timer, ctx));
                    }
                }
                LocalEvent::RegistrationRenew => {
                    if let Some(n) = node {
                        self.renew_registration(&n);
                    }
                }
                LocalEvent::LeaseSweep => {
                    let now = self.now();
                    let (expired, notices) = self.registry.expire(now);
                    for d in expired {
                        self.net.record("lease_expired", d.node.as_str(), String::new());
                    }
                    self.send_notices(notices);
                }
                LocalEvent::FlowDeadline { flow_id, dark_since } => self.flow_deadline(&flow_id, dark_since),
                LocalEvent::Command(cmd) => self.run_command(cmd),
            },
        }
        if self.plant.generation() != self.plant_generation {
            self.check_flows();
        }
    }

    fn run_command(&mut self, cmd: Command) {
        match cmd {
            Command::Request { src, dst } => {
                self.submit(&src, &dst);
            }
            Command::Teardown { path_id } => {
                let _ = self.teardown(&path_id);
            }
            Command::TeardownAll => self.teardown_all(),
            Command::FailSwitch { switch, failed } => {
                let _ = self.set_switch_failed(&switch, failed);
            }
        }
    }

    fn renew_registration(&mut self, id: &NodeId) {
        let Some(&lease_id) = self.registrations.get(id) else {
            return;
        };
        let now = self.now();
        match self.registry.renew(lease_id, now) {
            Ok(_) => {
                self.net.schedule_local(
                    Some(id.clone()),
                    self.cfg.registration_lease_ms / 2,
                    LocalEvent::RegistrationRenew,
                );
                self.net
                    .schedule_local(None, self.cfg.registration_lease_ms, LocalEvent::LeaseSweep);
            }
            Err(e) => self.net.record("renew_failed", id.as_str(), format!("error={e}").replace(' ', "-")),
        }
    }

    fn on_fault(&mut self, spec: FaultSpec) {
        let now = self.now();
        match spec.kind {
            FaultKind::FiberCut(ref t) | FaultKind::FiberRestore(ref t) => {
                let state = if matches!(spec.kind, FaultKind::FiberCut(_)) {
                    SpanState::Cut
                } else {
                    SpanState::Lit
                };
                for span in self.plant.resolve_target(t).unwrap_or_default() {
                    let events = self
                        .plant
                        .set_span_state(&span, state, now)
                        .expect("resolved span exists");
                    for ev in events {
                        let id = agent_id(&ev.switch);
                        if self.net.is_crashed(&id) {
                            continue;
                        }
                        self.with_agent(&id, 0, |a, ctx| a.on_light_event(&ev, ctx));
                    }
                }
            }
            FaultKind::RestartAgent(n) => {
                let Some(old) = self.agents.get(&n) else {
                    return;
                };
                if self.net.is_crashed(&n) {
                    return;
                }
                let sw = old.switch().clone();
                let fresh = Agent::new(sw.clone(), self.baseline.clone(), self.cfg.agent.clone());
                self.agents.insert(n.clone(), fresh);
                self.with_agent(&n, 0, |a, ctx| a.on_restart(ctx));
                self.register(&n, &sw);
            }
            _ => {}
        }
    }

    fn with_agent<R>(
        &mut self,
        id: &NodeId,
        depth: u32,
        f: impl FnOnce(&mut Agent, &mut AgentCtx) -> R,
    ) -> Option<R> {
        let mut agent = self.agents.remove(id)?;
        let now = self.now();
        let mut ctx = AgentCtx::new(now, &mut self.plant, depth);
        let r = f(&mut agent, &mut ctx);
        let actions = ctx.actions;
        self.agents.insert(id.clone(), agent);
        self.apply(id, depth, actions);
        Some(r)
    }

    fn apply(&mut self, id: &NodeId, depth: u32, actions: Vec<Action>) {
        let group = self.cfg.agent.group.clone();
        for action in actions {
            let send = |dest, msg: &ProtocolMessage| Outgoing {
                src: id.clone(),
                dest,
                group: group.clone(),
                payload: Payload::Frame(wire::encode(msg)),
                depth: depth + 1,
            };
            match action {
                Action::Send { to, msg } => {
                    let _ = self.net.send(send(Destination::Unicast(to), &msg));
                }
                Action::Multicast { to, msg } => {
                    let _ = self.net.send(send(Destination::Multicast(to), &msg));
                }
                Action::Broadcast { msg } => {
                    let _ = self.net.send(send(Destination::Broadcast, &msg));
                }
                Action::Timer { after_ms, timer } => {
                    self.net
                        .schedule_local(Some(id.clone()), after_ms, LocalEvent::Agent(timer));
                }
                Action::Trace { kind, detail } => self.net.record(kind, id.as_str(), detail),
                Action::Event(e) => self.on_agent_event(id, e),
            }
        }
    }

    fn on_agent_event(&mut self, id: &NodeId, e: AgentEvent) {
        match e {
            AgentEvent::PathActive { path_id, req_id, .. } => {
                self.outcomes.insert(req_id, RequestOutcome::Active { path_id: path_id.clone() });
                let flow_id = format!("flow-{req_id}");
                let dst_host = self
                    .agents
                    .get(id)
                    .and_then(|a| a.path(&path_id))
                    .map(|r| r.dst.host.clone())
                    .unwrap_or_default();
                if let Some(a) = self.agents.get_mut(id) {
                    a.attach_flow(&path_id, &flow_id);
                }
                self.net
                    .record("flow_start", id.as_str(), format!("flow={flow_id} path={path_id}"));
                self.flows.insert(
                    flow_id.clone(),
                    FlowModel {
                        flow_id,
                        path_id,
                        dst_host,
                        timeout_budget: self.cfg.tcp_budget_ms,
                        dark_since: None,
                        state: FlowState::Alive,
                        dark_intervals: Vec::new(),
                    },
                );
                self.check_flows();
            }
            AgentEvent::PathRerouted { .. } => {}
            AgentEvent::PathTornDown { path_id, .. } => {
                self.check_flows();
                let now = self.now();
                for f in self.flows.values_mut().filter(|f| f.path_id == path_id) {
                    if f.state != FlowState::Alive {
                        continue;
                    }
                    if let Some(since) = f.dark_since.take() {
                        f.dark_intervals.push((since, now));
                    }
                    f.state = FlowState::Closed;
                    self.net
                        .record("flow_closed", id.as_str(), format!("flow={} path={path_id}", f.flow_id));
                }
            }
            AgentEvent::RequestFailed { req_id, reason, .. } => {
                self.outcomes.insert(req_id, RequestOutcome::Failed(reason));
            }
        }
    }

    /// Re-evaluate darkness of every live flow against the current plant.
    fn check_flows(&mut self) {
        self.plant_generation = self.plant.generation();
        let map = self.plant.light_map();
        let now = self.now();
        let mut deadlines = Vec::new();
        for f in self.flows.values_mut().filter(|f| f.state == FlowState::Alive) {
            let lit = self.plant.host_receives_light_in(&map, &f.dst_host);
            match (lit, f.dark_since) {
                (false, None) => {
                    f.dark_since = Some(now);
                    self.net
                        .record("flow_dark", "-", format!("flow={} path={}", f.flow_id, f.path_id));
                    deadlines.push((f.flow_id.clone(), now, f.timeout_budget));
                }
                (true, Some(since)) => {
                    f.dark_since = None;
                    f.dark_intervals.push((since, now));
                    self.net.record(
                        "flow_lit",
                        "-",
                        format!("flow={} path={} dark_ms={}", f.flow_id, f.path_id, now.since(since)),
                    );
                }
                _ => {}
            }
        }
        for (flow_id, dark_since, budget) in deadlines {
            self.net.schedule_local(
                None,
                budget + 1,
                LocalEvent::FlowDeadline { flow_id, dark_since },
            );
        }
    }

    fn flow_deadline(&mut self, flow_id: &str, dark_since: SimTime) {
        self.check_flows();
        let now = self.now();
        let Some(f) = self.flows.get_mut(flow_id) else {
            return;
        };
        if f.state == FlowState::Alive && f.dark_since == Some(dark_since) {
            f.state = FlowState::Dead;
            self.net.record(
                "flow_dead",
                "-",
                format!("flow={flow_id} path={} dark_ms={}", f.path_id, now.since(dark_since)),
            );
        }
    }
}
