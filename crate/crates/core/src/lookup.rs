//! Lease-based service registry with discovery and remote event notification.
//!
//! A registration stays discoverable while its lease is live
//! (`now < granted_at + duration`). The owner of the registry schedules a
//! sweep at every expiry it is told about; [`Registry::expire`] removes the
//! lapsed entries and yields one `lease_expired` notice per matching
//! subscriber.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::simnet::{GroupName, NodeId, SimTime};

/// Default registration lease in simulated milliseconds.
pub const DEFAULT_REGISTRATION_LEASE_MS: u64 = 30_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ServiceKind {
    Agent,
    DeviceMonitor,
    Client,
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServiceKind::Agent => "agent",
            ServiceKind::DeviceMonitor => "device-monitor",
            ServiceKind::Client => "client",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceDescriptor {
    pub node: NodeId,
    pub groups: Vec<GroupName>,
    pub kind: ServiceKind,
    pub attributes: BTreeMap<String, String>,
}

impl ServiceDescriptor {
    pub fn new(node: NodeId, groups: Vec<GroupName>, kind: ServiceKind) -> Self {
        ServiceDescriptor {
            node,
            groups,
            kind,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attribute(mut self, key: &str, value: &str) -> Self {
        self.attributes.insert(key.to_string(), value.to_string());
        self
    }

    fn in_group(&self, group: &GroupName) -> bool {
        self.groups.contains(group)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LeaseSubject {
    Registration(NodeId),
    Lightpath(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lease {
    pub lease_id: u64,
    pub holder: NodeId,
    pub subject: LeaseSubject,
    pub granted_at: SimTime,
    pub duration: u64,
    pub renew_count: u32,
}

impl Lease {
    pub fn expiry(&self) -> SimTime {
        self.granted_at.plus(self.duration)
    }

    pub fn is_live(&self, now: SimTime) -> bool {
        now < self.expiry()
    }

    /// Restart the lease window at `now`.
    pub fn renew(&mut self, now: SimTime) {
        self.granted_at = now;
        self.renew_count += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NotificationKind {
    Registered,
    LeaseExpired,
    Deregistered,
}

impl fmt::Display for NotificationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NotificationKind::Registered => "registered",
            NotificationKind::LeaseExpired => "lease_expired",
            NotificationKind::Deregistered => "deregistered",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventNotification {
    pub kind: NotificationKind,
    pub subject: ServiceDescriptor,
    pub at: SimTime,
}

/// A notification addressed to one subscriber.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Notice {
    pub subscriber: NodeId,
    pub subscription: SubscriptionId,
    pub event: EventNotification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SubscriptionId(pub u64);

#[derive(Clone, Debug)]
struct Subscription {
    subscriber: NodeId,
    group: Option<GroupName>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LookupError {
    #[error("lease duration must be positive")]
    ZeroDuration,
    #[error("service {0} must belong to at least one group")]
    NoGroups(NodeId),
    #[error("unknown lease {0}")]
    UnknownLease(u64),
    #[error("lease {lease_id} expired at {expired_at}; re-register")]
    Expired { lease_id: u64, expired_at: SimTime },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registration {
    pub lease: Lease,
    /// Lease cancelled because the same node registered again.
    pub replaced: Option<Lease>,
    pub notices: Vec<Notice>,
}

#[derive(Debug, Default)]
pub struct Registry {
    entries: BTreeMap<NodeId, (ServiceDescriptor, Lease)>,
    subscriptions: BTreeMap<SubscriptionId, Subscription>,
    next_lease: u64,
    next_sub: u64,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        desc: ServiceDescriptor,
        duration: u64,
        now: SimTime,
    ) -> Result<Registration, LookupError> {
        if duration == 0 {
            return Err(LookupError::ZeroDuration);
        }
        if desc.groups.is_empty() {
            return Err(LookupError::NoGroups(desc.node));
        }
        self.next_lease += 1;
        let lease = Lease {
            lease_id: self.next_lease,
            holder: desc.node.clone(),
            subject: LeaseSubject::Registration(desc.node.clone()),
            granted_at: now,
            duration,
            renew_count: 0,
        };
        let replaced = self
            .entries
            .insert(desc.node.clone(), (desc.clone(), lease.clone()))
            .map(|(_, old)| old);
        let notices = self.fan_out(NotificationKind::Registered, &desc, now);
        Ok(Registration {
            lease,
            replaced,
            notices,
        })
    }

    pub fn renew(&mut self, lease_id: u64, now: SimTime) -> Result<Lease, LookupError> {
        let (_, lease) = self
            .entries
            .values_mut()
            .find(|(_, l)| l.lease_id == lease_id)
            .ok_or(LookupError::UnknownLease(lease_id))?;
        if !lease.is_live(now) {
            return Err(LookupError::Expired {
                lease_id,
                expired_at: lease.expiry(),
            });
        }
        lease.renew(now);
        Ok(lease.clone())
    }

    pub fn deregister(&mut self, node: &NodeId, now: SimTime) -> Vec<Notice> {
        match self.entries.remove(node) {
            Some((desc, _)) => self.fan_out(NotificationKind::Deregistered, &desc, now),
            None => Vec::new(),
        }
    }

    /// Live registrations in `group`, optionally restricted to one kind.
    pub fn discover(
        &self,
        group: &GroupName,
        kind: Option<ServiceKind>,
        now: SimTime,
    ) -> Vec<ServiceDescriptor> {
        self.entries
            .values()
            .filter(|(d, l)| l.is_live(now) && d.in_group(group))
            .filter(|(d, _)| kind.is_none_or(|k| d.kind == k))
            .map(|(d, _)| d.clone())
            .collect()
    }

    pub fn lease_of(&self, node: &NodeId) -> Option<&Lease> {
        self.entries.get(node).map(|(_, l)| l)
    }

    /// A subscription may precede any matching registration.
    pub fn subscribe(&mut self, subscriber: NodeId, group: Option<GroupName>) -> SubscriptionId {
        self.next_sub += 1;
        let id = SubscriptionId(self.next_sub);
        self.subscriptions.insert(id, Subscription { subscriber, group });
        id
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) -> bool {
        self.subscriptions.remove(&id).is_some()
    }

    /// Remove every entry whose lease lapsed at or before `now`.
    pub fn expire(&mut self, now: SimTime) -> (Vec<ServiceDescriptor>, Vec<Notice>) {
        let lapsed: Vec<NodeId> = self
            .entries
            .iter()
            .filter(|(_, (_, l))| !l.is_live(now))
            .map(|(n, _)| n.clone())
            .collect();
        let mut gone = Vec::new();
        let mut notices = Vec::new();
        for node in lapsed {
            let (desc, _) = self.entries.remove(&node).expect("listed above");
            notices.extend(self.fan_out(NotificationKind::LeaseExpired, &desc, now));
            gone.push(desc);
        }
        (gone, notices)
    }

    fn fan_out(&self, kind: NotificationKind, desc: &ServiceDescriptor, at: SimTime) -> Vec<Notice> {
        self.subscriptions
            .iter()
            .filter(|(_, s)| s.group.as_ref().is_none_or(|g| desc.in_group(g)))
            .map(|(id, s)| Notice {
                subscriber: s.subscriber.clone(),
                subscription: *id,
                event: EventNotification {
                    kind,
                    subject: desc.clone(),
                    at,
                },
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(name: &str, group: &str) -> ServiceDescriptor {
        ServiceDescriptor::new(name.into(), vec![group.into()], ServiceKind::Agent)
    }

    #[test]
    fn register_sets_expiry() {
        let mut reg = Registry::new();
        let r = reg.register(agent("agent-cern", "optical"), 30_000, SimTime(0)).unwrap();
        assert_eq!(r.lease.expiry(), SimTime(30_000));
        assert_eq!(
            reg.discover(&"optical".into(), None, SimTime(1)),
            vec![agent("agent-cern", "optical")]
        );
    }

    #[test]
    fn register_rejects_zero_duration() {
        let mut reg = Registry::new();
        assert_eq!(
            reg.register(agent("a", "g"), 0, SimTime(0)),
            Err(LookupError::ZeroDuration)
        );
    }

    #[test]
    fn re_registration_replaces() {
        let mut reg = Registry::new();
        let first = reg.register(agent("a", "g"), 100, SimTime(0)).unwrap();
        let second = reg
            .register(agent("a", "g").with_attribute("v", "2"), 100, SimTime(5))
            .unwrap();
        assert_eq!(second.replaced.as_ref().map(|l| l.lease_id), Some(first.lease.lease_id));
        let found = reg.discover(&"g".into(), None, SimTime(6));
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].attributes.get("v").map(String::as_str), Some("2"));
        assert_eq!(
            reg.renew(first.lease.lease_id, SimTime(7)),
            Err(LookupError::UnknownLease(first.lease.lease_id))
        );
    }

    #[test]
    fn renew_boundaries() {
        let mut reg = Registry::new();
        let lease = reg.register(agent("a", "g"), 30_000, SimTime(0)).unwrap().lease;
        let renewed = reg.renew(lease.lease_id, SimTime(29_999)).unwrap();
        assert_eq!(renewed.expiry(), SimTime(59_999));
        assert_eq!(renewed.renew_count, 1);
        assert!(matches!(
            reg.renew(lease.lease_id, SimTime(60_000)),
            Err(LookupError::Expired { .. })
        ));
        assert_eq!(reg.renew(999, SimTime(0)), Err(LookupError::UnknownLease(999)));
    }

    #[test]
    fn renew_after_expiry_is_rejected() {
        let mut reg = Registry::new();
        let lease = reg.register(agent("a", "g"), 30_000, SimTime(0)).unwrap().lease;
        assert!(reg.renew(lease.lease_id, SimTime(30_001)).is_err());
    }

    #[test]
    fn discover_filters_expired_and_unknown_groups() {
        let mut reg = Registry::new();
        reg.register(agent("a", "g"), 100, SimTime(0)).unwrap();
        reg.register(agent("b", "g"), 200, SimTime(0)).unwrap();
        reg.register(agent("c", "g"), 200, SimTime(0)).unwrap();
        assert_eq!(reg.discover(&"g".into(), None, SimTime(50)).len(), 3);
        // lazily filtered even before the sweep runs
        assert_eq!(reg.discover(&"g".into(), None, SimTime(100)).len(), 2);
        assert!(reg.discover(&"nope".into(), None, SimTime(0)).is_empty());
        assert!(reg
            .discover(&"g".into(), Some(ServiceKind::Client), SimTime(0))
            .is_empty());
    }

    #[test]
    fn subscription_before_provider() {
        let mut reg = Registry::new();
        reg.subscribe("watcher".into(), Some("g".into()));
        let r = reg.register(agent("a", "g"), 100, SimTime(0)).unwrap();
        assert_eq!(r.notices.len(), 1);
        assert_eq!(r.notices[0].event.kind, NotificationKind::Registered);
        let other = reg.register(agent("b", "h"), 100, SimTime(0)).unwrap();
        assert!(other.notices.is_empty());
    }

    #[test]
    fn expiry_notifies_each_subscriber_once() {
        let mut reg = Registry::new();
        reg.subscribe("w1".into(), Some("g".into()));
        reg.subscribe("w2".into(), None);
        reg.register(agent("a", "g"), 100, SimTime(0)).unwrap();
        let (gone, notices) = reg.expire(SimTime(99));
        assert!(gone.is_empty() && notices.is_empty());
        let (gone, notices) = reg.expire(SimTime(100));
        assert_eq!(gone.len(), 1);
        assert_eq!(notices.len(), 2);
        assert!(notices.iter().all(|n| n.event.kind == NotificationKind::LeaseExpired));
        let (_, again) = reg.expire(SimTime(200));
        assert!(again.is_empty());
    }

    #[test]
    fn deregister_notifies() {
        let mut reg = Registry::new();
        reg.subscribe("w".into(), None);
        reg.register(agent("a", "g"), 100, SimTime(0)).unwrap();
        let n = reg.deregister(&"a".into(), SimTime(3));
        assert_eq!(n[0].event.kind, NotificationKind::Deregistered);
        assert!(reg.deregister(&"a".into(), SimTime(4)).is_empty());
    }
}
