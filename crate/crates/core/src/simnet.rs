//! Deterministic discrete-event scheduler and group message fabric.
//!
//! Every node (agent, lookup service, client) attaches to one or more groups
//! and exchanges [`Envelope`]s over the fabric. Delivery is scheduled at
//! `sent_at + latency(src, dst)`; events that share a timestamp fire in
//! insertion order, so a run is fully determined by its inputs and seed.
//!
//! The fabric is pull-based: callers drive it with [`SimNet::next_event`] and
//! dispatch the returned [`Fired`] events to their own handlers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::rc::Rc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default one-way latency between any two nodes, in simulated milliseconds.
pub const DEFAULT_LATENCY_MS: u64 = 10;

/// Simulated time in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn ms(self) -> u64 {
        self.0
    }

    pub fn plus(self, ms: u64) -> SimTime {
        SimTime(self.0.saturating_add(ms))
    }

    /// Milliseconds elapsed since `earlier`, zero if `earlier` is later.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupName(String);

impl GroupName {
    pub fn new(name: impl Into<String>) -> Self {
        GroupName(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for GroupName {
    fn from(s: &str) -> Self {
        GroupName(s.to_string())
    }
}

impl fmt::Display for GroupName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Destination {
    Unicast(NodeId),
    /// A subset of the envelope's group.
    Multicast(Vec<NodeId>),
    /// Every member of the envelope's group except the sender.
    Broadcast,
}

/// What travels on the fabric: membership notices generated by the fabric
/// itself, or an application payload.
#[derive(Clone, Debug, PartialEq)]
pub enum NetPayload<P> {
    Joined { node: NodeId, group: GroupName },
    App(P),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope<P> {
    pub msg_id: u64,
    pub src: NodeId,
    pub dest: Destination,
    pub group: GroupName,
    pub payload: NetPayload<P>,
    pub sent_at: SimTime,
    /// Length of the causal message chain ending in this envelope.
    pub depth: u32,
}

/// An envelope before the fabric assigns its id and send time.
#[derive(Clone, Debug)]
pub struct Outgoing<P> {
    pub src: NodeId,
    pub dest: Destination,
    pub group: GroupName,
    pub payload: P,
    pub depth: u32,
}

/// Short human-readable label used in `send` trace records.
pub trait Describe {
    fn describe(&self) -> String;
}

impl Describe for u64 {
    fn describe(&self) -> String {
        format!("n={self}")
    }
}

impl Describe for () {
    fn describe(&self) -> String {
        String::new()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropRule {
    pub probability: f64,
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
    pub until: Option<SimTime>,
}

impl DropRule {
    fn matches(&self, src: &NodeId, dst: &NodeId, now: SimTime) -> bool {
        self.from.as_ref().is_none_or(|f| f == src)
            && self.to.as_ref().is_none_or(|t| t == dst)
            && self.until.is_none_or(|u| now < u)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FaultKind {
    /// Target is a span id or a duplex link id.
    FiberCut(String),
    FiberRestore(String),
    DropMessages(DropRule),
    Partition(BTreeSet<NodeId>, BTreeSet<NodeId>),
    HealPartition(BTreeSet<NodeId>, BTreeSet<NodeId>),
    CrashAgent(NodeId),
    RestartAgent(NodeId),
}

impl FaultKind {
    pub fn label(&self) -> &'static str {
        match self {
            FaultKind::FiberCut(_) => "fiber_cut",
            FaultKind::FiberRestore(_) => "fiber_restore",
            FaultKind::DropMessages(_) => "drop_message",
            FaultKind::Partition(..) => "partition",
            FaultKind::HealPartition(..) => "heal_partition",
            FaultKind::CrashAgent(_) => "crash_agent",
            FaultKind::RestartAgent(_) => "restart_agent",
        }
    }

    fn detail(&self) -> String {
        fn set(s: &BTreeSet<NodeId>) -> String {
            s.iter().map(NodeId::as_str).collect::<Vec<_>>().join(",")
        }
        match self {
            FaultKind::FiberCut(t) | FaultKind::FiberRestore(t) => format!("target={t}"),
            FaultKind::DropMessages(r) => {
                let mut d = format!("p={}", r.probability);
                if let Some(f) = &r.from {
                    d.push_str(&format!(" from={f}"));
                }
                if let Some(t) = &r.to {
                    d.push_str(&format!(" to={t}"));
                }
                if let Some(u) = r.until {
                    d.push_str(&format!(" until={u}"));
                }
                d
            }
            FaultKind::Partition(a, b) | FaultKind::HealPartition(a, b) => {
                format!("a={} b={}", set(a), set(b))
            }
            FaultKind::CrashAgent(n) | FaultKind::RestartAgent(n) => format!("target={n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub at: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub kind: String,
    pub node: String,
    pub detail: String,
}

impl TraceRecord {
    /// Value of a `key=value` token in the detail field.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail.split(' ').find_map(|tok| {
            tok.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventTrace {
    records: Vec<TraceRecord>,
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl EventTrace {
    pub fn push(&mut self, time: SimTime, kind: &str, node: &str, detail: impl Into<String>) {
        self.records.push(TraceRecord {
            time,
            kind: clean(kind),
            node: clean(node),
            detail: clean(&detail.into()),
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn since(&self, start: usize) -> EventTrace {
        EventTrace {
            records: self.records[start.min(self.records.len())..].to_vec(),
        }
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// One record per line: `time<TAB>kind<TAB>node<TAB>detail`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.time, r.kind, r.node, r.detail));
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<EventTrace, NetError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(4, '\t');
            let (Some(t), Some(kind), Some(node), Some(detail)) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(NetError::BadTraceLine(i + 1));
            };
            let time = t.parse().map_err(|_| NetError::BadTraceLine(i + 1))?;
            records.push(TraceRecord {
                time: SimTime(time),
                kind: kind.to_string(),
                node: node.to_string(),
                detail: detail.to_string(),
            });
        }
        Ok(EventTrace { records })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("node {0} is already attached")]
    DuplicateNode(NodeId),
    #[error("node {0} must join at least one group")]
    NoGroups(NodeId),
    #[error("node {0} is not attached")]
    UnknownNode(NodeId),
    #[error("node {0} is crashed")]
    Crashed(NodeId),
    #[error("fault time {at} is before current time {now}")]
    FaultInPast { at: SimTime, now: SimTime },
    #[error("unknown fault target {0}")]
    UnknownTarget(String),
    #[error("drop probability {0} outside [0, 1]")]
    BadProbability(String),
    #[error("malformed trace line {0}")]
    BadTraceLine(usize),
}

#[derive(Debug)]
enum Event<P, L> {
    Deliver { to: NodeId, env: Rc<Envelope<P>> },
    Fault(FaultSpec),
    Local { node: Option<NodeId>, incarnation: u64, payload: L },
}

struct Scheduled<P, L> {
    at: SimTime,
    seq: u64,
    event: Event<P, L>,
}

impl<P, L> PartialEq for Scheduled<P, L> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<P, L> Eq for Scheduled<P, L> {}

impl<P, L> PartialOrd for Scheduled<P, L> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P, L> Ord for Scheduled<P, L> {
    // BinaryHeap is a max-heap; invert to pop the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// An event handed back to the caller for dispatch.
#[derive(Debug)]
pub enum Fired<P, L> {
    Deliver { to: NodeId, env: Rc<Envelope<P>> },
    /// Network-level effects (crash flags, partitions, drop rules) are
    /// already applied when this is returned.
    Fault(FaultSpec),
    Local { node: Option<NodeId>, payload: L },
}

#[derive(Debug, Clone)]
struct NodeState {
    crashed: bool,
    incarnation: u64,
}

pub struct SimNet<P, L> {
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Scheduled<P, L>>,
    nodes: BTreeMap<NodeId, NodeState>,
    groups: BTreeMap<GroupName, BTreeSet<NodeId>>,
    latency: BTreeMap<(NodeId, NodeId), u64>,
    default_latency: u64,
    partitions: Vec<(BTreeSet<NodeId>, BTreeSet<NodeId>)>,
    drop_rules: Vec<DropRule>,
    rng: ChaCha8Rng,
    next_msg_id: u64,
    pending_deliveries: usize,
    trace: EventTrace,
}

impl<P: Describe, L> SimNet<P, L> {
    pub fn new(seed: u64) -> Self {
        SimNet {
            now: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes: BTreeMap::new(),
            groups: BTreeMap::new(),
            latency: BTreeMap::new(),
            default_latency: DEFAULT_LATENCY_MS,
            partitions: Vec::new(),
            drop_rules: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_msg_id: 1,
            pending_deliveries: 0,
            trace: EventTrace::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut EventTrace {
        &mut self.trace
    }

    pub fn record(&mut self, kind: &str, node: &str, detail: impl Into<String>) {
        let now = self.now;
        self.trace.push(now, kind, node, detail);
    }

    pub fn set_default_latency(&mut self, ms: u64) {
        self.default_latency = ms;
    }

    pub fn set_latency(&mut self, from: NodeId, to: NodeId, ms: u64) {
        self.latency.insert((from, to), ms);
    }

    pub fn latency(&self, from: &NodeId, to: &NodeId) -> u64 {
        self.latency
            .get(&(from.clone(), to.clone()))
            .copied()
            .unwrap_or(self.default_latency)
    }

    pub fn is_attached(&self, node: &NodeId) -> bool {
        self.nodes.contains_key(node)
    }

    pub fn is_crashed(&self, node: &NodeId) -> bool {
        self.nodes.get(node).is_some_and(|n| n.crashed)
    }

    pub fn members(&self, group: &GroupName) -> Vec<NodeId> {
        self.groups
            .get(group)
            .map(|m| m.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Deliveries scheduled but not yet fired.
    pub fn pending_deliveries(&self) -> usize {
        self.pending_deliveries
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    fn schedule(&mut self, at: SimTime, event: Event<P, L>) {
        self.seq += 1;
        self.queue.push(Scheduled {
            at,
            seq: self.seq,
            event,
        });
    }

    /// Attach a node; every existing member of each joined group is sent a
    /// membership notice.
    pub fn attach(&mut self, node: NodeId, groups: &[GroupName]) -> Result<(), NetError> {
        if self.nodes.contains_key(&node) {
            return Err(NetError::DuplicateNode(node));
        }
        if groups.is_empty() {
            return Err(NetError::NoGroups(node));
        }
        let groups: BTreeSet<GroupName> = groups.iter().cloned().collect();
        self.nodes.insert(
            node.clone(),
            NodeState {
                crashed: false,
                incarnation: 0,
            },
        );
        let names = groups.iter().map(GroupName::as_str).collect::<Vec<_>>().join(",");
        self.record("attach", node.as_str(), format!("groups={names}"));
        for group in groups {
            let existing = self.members(&group);
            self.groups.entry(group.clone()).or_default().insert(node.clone());
            if existing.is_empty() {
                continue;
            }
            let payload = NetPayload::Joined {
                node: node.clone(),
                group: group.clone(),
            };
            self.dispatch(node.clone(), Destination::Multicast(existing), group, payload, 0);
        }
        Ok(())
    }

    /// Fire-and-forget send. Fails only when the sender itself cannot send.
    pub fn send(&mut self, out: Outgoing<P>) -> Result<u64, NetError> {
        match self.nodes.get(&out.src) {
            None => return Err(NetError::UnknownNode(out.src)),
            Some(n) if n.crashed => return Err(NetError::Crashed(out.src)),
            Some(_) => {}
        }
        Ok(self.dispatch(out.src, out.dest, out.group, NetPayload::App(out.payload), out.depth))
    }

    fn dispatch(
        &mut self,
        src: NodeId,
        dest: Destination,
        group: GroupName,
        payload: NetPayload<P>,
        depth: u32,
    ) -> u64 {
        let msg_id = self.next_msg_id;
        self.next_msg_id += 1;

        // (recipient, known-and-eligible)
        let recipients: Vec<(NodeId, bool)> = match &dest {
            Destination::Unicast(n) => vec![(n.clone(), self.nodes.contains_key(n))],
            Destination::Multicast(members) => members
                .iter()
                .map(|m| {
                    let ok = self.groups.get(&group).is_some_and(|g| g.contains(m));
                    (m.clone(), ok)
                })
                .collect(),
            Destination::Broadcast => self
                .members(&group)
                .into_iter()
                .filter(|m| *m != src)
                .map(|m| (m, true))
                .collect(),
        };

        let label = match &payload {
            NetPayload::Joined { node, .. } => format!("join node={node}"),
            NetPayload::App(p) => p.describe(),
        };
        let dest_label = match &dest {
            Destination::Unicast(n) => n.to_string(),
            Destination::Multicast(_) => "multicast".to_string(),
            Destination::Broadcast => "broadcast".to_string(),
        };
        self.record(
            "send",
            src.as_str(),
            format!(
                "msg={msg_id} dest={dest_label} group={group} rcpt={} depth={depth} {label}",
                recipients.len()
            ),
        );

        let env = Rc::new(Envelope {
            msg_id,
            src: src.clone(),
            dest,
            group,
            payload,
            sent_at: self.now,
            depth,
        });

        for (to, eligible) in recipients {
            if !eligible {
                self.record("undeliverable", to.as_str(), format!("msg={msg_id} reason=unknown"));
                continue;
            }
            if self.partitioned(&src, &to) {
                self.record("drop", to.as_str(), format!("msg={msg_id} reason=partition"));
                continue;
            }
            if self.random_drop(&src, &to) {
                self.record("drop", to.as_str(), format!("msg={msg_id} reason=random"));
                continue;
            }
            let at = self.now.plus(self.latency(&src, &to));
            self.pending_deliveries += 1;
            self.schedule(at, Event::Deliver { to, env: Rc::clone(&env) });
        }
        msg_id
    }

    fn partitioned(&self, a: &NodeId, b: &NodeId) -> bool {
        self.partitions.iter().any(|(x, y)| {
            (x.contains(a) && y.contains(b)) || (x.contains(b) && y.contains(a))
        })
    }

    fn random_drop(&mut self, src: &NodeId, dst: &NodeId) -> bool {
        let now = self.now;
        let p = self
            .drop_rules
            .iter()
            .filter(|r| r.matches(src, dst, now))
            .map(|r| r.probability)
            .fold(0.0_f64, f64::max);
        p > 0.0 && self.rng.gen_bool(p.min(1.0))
    }

    /// Schedule a local (non-message) event. Node-scoped events are
    /// discarded if the node is crashed or has restarted by fire time.
    pub fn schedule_local(&mut self, node: Option<NodeId>, after_ms: u64, payload: L) {
        let incarnation = node
            .as_ref()
            .and_then(|n| self.nodes.get(n))
            .map_or(0, |n| n.incarnation);
        let at = self.now.plus(after_ms);
        self.schedule(
            at,
            Event::Local {
                node,
                incarnation,
                payload,
            },
        );
    }

    /// Validate and schedule a fault. `span_known` resolves fiber targets,
    /// which live outside the fabric.
    pub fn inject_fault(
        &mut self,
        fault: FaultSpec,
        span_known: impl Fn(&str) -> bool,
    ) -> Result<(), NetError> {
        if fault.at < self.now {
            return Err(NetError::FaultInPast {
                at: fault.at,
                now: self.now,
            });
        }
        match &fault.kind {
            FaultKind::FiberCut(t) | FaultKind::FiberRestore(t) => {
                if !span_known(t) {
                    return Err(NetError::UnknownTarget(t.clone()));
                }
            }
            FaultKind::CrashAgent(n) | FaultKind::RestartAgent(n) => {
                if !self.nodes.contains_key(n) {
                    return Err(NetError::UnknownTarget(n.to_string()));
                }
            }
            FaultKind::Partition(a, b) | FaultKind::HealPartition(a, b) => {
                if let Some(n) = a.iter().chain(b).find(|n| !self.nodes.contains_key(*n)) {
                    return Err(NetError::UnknownTarget(n.to_string()));
                }
            }
            FaultKind::DropMessages(rule) => {
                if !(0.0..=1.0).contains(&rule.probability) {
                    return Err(NetError::BadProbability(rule.probability.to_string()));
                }
                for n in rule.from.iter().chain(rule.to.iter()) {
                    if !self.nodes.contains_key(n) {
                        return Err(NetError::UnknownTarget(n.to_string()));
                    }
                }
            }
        }
        let at = fault.at;
        self.schedule(at, Event::Fault(fault));
        Ok(())
    }

    fn apply_fault(&mut self, fault: &FaultSpec) {
        let node = match &fault.kind {
            FaultKind::CrashAgent(n) | FaultKind::RestartAgent(n) => n.to_string(),
            _ => "-".to_string(),
        };
        self.record("fault", &node, format!("kind={} {}", fault.kind.label(), fault.kind.detail()));
        match &fault.kind {
            FaultKind::CrashAgent(n) => {
                if let Some(state) = self.nodes.get_mut(n) {
                    state.crashed = true;
                }
            }
            FaultKind::RestartAgent(n) => {
                if let Some(state) = self.nodes.get_mut(n) {
                    if state.crashed {
                        state.crashed = false;
                        state.incarnation += 1;
                    }
                }
            }
            FaultKind::DropMessages(rule) => self.drop_rules.push(rule.clone()),
            FaultKind::Partition(a, b) => self.partitions.push((a.clone(), b.clone())),
            FaultKind::HealPartition(a, b) => self
                .partitions
                .retain(|(x, y)| !((x == a && y == b) || (x == b && y == a))),
            FaultKind::FiberCut(_) | FaultKind::FiberRestore(_) => {}
        }
    }

    /// Pop the next actionable event with fire time `<= until`. Returns
    /// `None` (and advances the clock to `until`) once no such event remains.
    pub fn next_event(&mut self, until: SimTime) -> Option<Fired<P, L>> {
        while self.queue.peek().is_some_and(|s| s.at <= until) {
            let Scheduled { at, event, .. } = self.queue.pop().expect("peeked");
            self.now = at;
            match event {
                Event::Deliver { to, env } => {
                    self.pending_deliveries -= 1;
                    let crashed = self.nodes.get(&to).is_none_or(|n| n.crashed);
                    if crashed {
                        self.record(
                            "undeliverable",
                            to.as_str(),
                            format!("msg={} reason=crashed", env.msg_id),
                        );
                        continue;
                    }
                    let still_member = self
                        .groups
                        .get(&env.group)
                        .is_some_and(|g| g.contains(&to));
                    if !still_member && !matches!(env.dest, Destination::Unicast(_)) {
                        self.record(
                            "undeliverable",
                            to.as_str(),
                            format!("msg={} reason=left-group", env.msg_id),
                        );
                        continue;
                    }
                    self.record(
                        "deliver",
                        to.as_str(),
                        format!("msg={} from={}", env.msg_id, env.src),
                    );
                    return Some(Fired::Deliver { to, env });
                }
                Event::Fault(spec) => {
                    self.apply_fault(&spec);
                    return Some(Fired::Fault(spec));
                }
                Event::Local {
                    node,
                    incarnation,
                    payload,
                } => {
                    if let Some(n) = &node {
                        match self.nodes.get(n) {
                            Some(s) if !s.crashed && s.incarnation == incarnation => {}
                            _ => continue,
                        }
                    }
                    return Some(Fired::Local { node, payload });
                }
            }
        }
        if until > self.now {
            self.now = until;
        }
        None
    }

    /// Process every event up to `until` through `handler`, returning the
    /// trace segment produced.
    pub fn run_until<F>(&mut self, until: SimTime, mut handler: F) -> EventTrace
    where
        F: FnMut(&mut Self, Fired<P, L>),
    {
        let start = self.trace.len();
        while let Some(ev) = self.next_event(until) {
            handler(self, ev);
        }
        self.trace.since(start)
    }
}

/// Build a small fabric, push `n` unicast messages through it and return the
/// network with its trace. Used by [`throughput_probe`].
pub fn probe_fabric(n: usize, seed: u64) -> SimNet<u64, ()> {
    const NODES: usize = 8;
    let group = GroupName::from("probe");
    let mut net: SimNet<u64, ()> = SimNet::new(seed);
    let ids: Vec<NodeId> = (0..NODES).map(|i| NodeId::new(format!("p{i}"))).collect();
    for id in &ids {
        net.attach(id.clone(), std::slice::from_ref(&group))
            .expect("fresh probe node");
    }
    // drain membership notices
    net.run_until(SimTime(u64::MAX / 2), |_, _| {});
    let mut delivered = 0usize;
    let mut sent = 0usize;
    while delivered < n {
        while sent < n && sent - delivered < 256 {
            let src = ids[sent % NODES].clone();
            let dst = ids[(sent + 1 + sent / NODES) % NODES].clone();
            let dst = if dst == src { ids[(sent + 1) % NODES].clone() } else { dst };
            net.send(Outgoing {
                src,
                dest: Destination::Unicast(dst),
                group: group.clone(),
                payload: sent as u64,
                depth: 1,
            })
            .expect("probe node is live");
            sent += 1;
        }
        let horizon = net.now().plus(DEFAULT_LATENCY_MS);
        while let Some(ev) = net.next_event(horizon) {
            if matches!(ev, Fired::Deliver { .. }) {
                delivered += 1;
            }
        }
    }
    net
}

/// Wall-clock message routing rate of the fabric, in messages per second.
pub fn throughput_probe(n: usize) -> f64 {
    let started = Instant::now();
    let net = probe_fabric(n, 0x5eed);
    let secs = started.elapsed().as_secs_f64().max(1e-9);
    drop(net);
    n as f64 / secs
}
