//! Simulated shared-medium radio channels with range, seeded loss and
//! latency, and strict-priority outboxes.

use super::message::{ChannelClass, Priority};
use super::NetError;
use crate::geometry::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

pub const DEFAULT_OUTBOX_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub class: ChannelClass,
    pub latency_mean: f64,
    pub latency_jitter: f64,
    pub bandwidth: f64,
    pub loss_rate: f64,
    pub range: f64,
    pub seed: u64,
    /// Probability that a delivered frame has one bit flipped in transit.
    #[serde(default)]
    pub corruption_rate: f64,
    #[serde(default = "default_capacity")]
    pub outbox_capacity: usize,
}

fn default_capacity() -> usize {
    DEFAULT_OUTBOX_CAPACITY
}

impl ChannelSpec {
    pub fn latency_sensitive() -> Self {
        Self {
            class: ChannelClass::LatencySensitive,
            latency_mean: 0.05,
            latency_jitter: 0.01,
            bandwidth: 100_000.0,
            loss_rate: 0.0,
            range: 10_000.0,
            seed: 1,
            corruption_rate: 0.0,
            outbox_capacity: DEFAULT_OUTBOX_CAPACITY,
        }
    }

    pub fn latency_insensitive() -> Self {
        Self {
            class: ChannelClass::LatencyInsensitive,
            latency_mean: 0.3,
            latency_jitter: 0.1,
            bandwidth: 5_000_000.0,
            loss_rate: 0.0,
            range: 10_000.0,
            seed: 2,
            corruption_rate: 0.0,
            outbox_capacity: DEFAULT_OUTBOX_CAPACITY,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |what: &str| Err(NetError::InvalidChannel(what.to_string()));
        if !(self.latency_mean.is_finite() && self.latency_mean >= 0.0) {
            return bad("latency_mean must be finite and non-negative");
        }
        if !(self.latency_jitter.is_finite() && self.latency_jitter >= 0.0 && self.latency_jitter <= self.latency_mean) {
            return bad("latency_jitter must lie in [0, latency_mean]");
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(0.0..=1.0).contains(&self.loss_rate) || !(0.0..=1.0).contains(&self.corruption_rate) {
            return bad("loss_rate and corruption_rate must lie in [0, 1]");
        }
        if !(self.range > 0.0) {
            return bad("range must be positive");
        }
        if self.outbox_capacity == 0 {
            return bad("outbox_capacity must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum Destination {
    Broadcast,
    Node(u8),
}

/// Frame-recipient pair accounting; every counter is in those units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NetCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_range: u64,
    pub dropped_loss: u64,
    pub dropped_overflow: u64,
    pub corrupted: u64,
}

impl NetCounters {
    pub fn add(&mut self, o: &NetCounters) {
        self.sent += o.sent;
        self.delivered += o.delivered;
        self.dropped_range += o.dropped_range;
        self.dropped_loss += o.dropped_loss;
        self.dropped_overflow += o.dropped_overflow;
        self.corrupted += o.corrupted;
    }
}

#[derive(Debug, Clone)]
struct Queued {
    order: u64,
    recipients: Vec<u8>,
    bytes: Vec<u8>,
}

/// Per-node strict-priority transmit queue with FIFO order inside a class.
#[derive(Debug, Clone)]
pub struct Outbox {
    queues: [VecDeque<Queued>; 4],
    capacity: usize,
}

impl Outbox {
    fn new(capacity: usize) -> Self {
        Self {
            queues: Default::default(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(|q| q.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts `item`; on overflow returns the dropped frame, which is the
    /// newest frame of the lowest priority class present (possibly `item`).
    fn priority_enqueue(&mut self, priority: Priority, item: Queued) -> Option<Queued> {
        let p = priority as usize;
        if self.len() < self.capacity {
            self.queues[p].push_back(item);
            return None;
        }
        let lowest = (0..4).rev().find(|&c| !self.queues[c].is_empty()).unwrap_or(p);
        if lowest <= p {
            return Some(item);
        }
        let dropped = self.queues[lowest].pop_back();
        self.queues[p].push_back(item);
        dropped
    }

    fn head(&self) -> Option<(usize, u64)> {
        (0..4).find_map(|c| self.queues[c].front().map(|q| (c, q.order)))
    }

    fn pop(&mut self, class: usize) -> Option<Queued> {
        self.queues[class].pop_front()
    }

    fn pending_recipients(&self) -> u64 {
        self.queues.iter().flatten().map(|q| q.recipients.len() as u64).sum()
    }
}

/// A frame arriving at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub time: f64,
    pub order: u64,
    pub from: u8,
    pub to: u8,
    pub class: ChannelClass,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
struct HeapEntry(Delivery);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .time
            .total_cmp(&other.0.time)
            .then(self.0.order.cmp(&other.0.order))
    }
}

#[derive(Debug, Clone)]
pub struct Channel {
    pub spec: ChannelSpec,
    rng: ChaCha8Rng,
    busy_until: f64,
    outboxes: BTreeMap<u8, Outbox>,
    last_delivery: BTreeMap<(u8, u8), f64>,
    in_flight: BinaryHeap<Reverse<HeapEntry>>,
    next_order: u64,
    pub counters: NetCounters,
}

impl Channel {
    pub fn new(spec: ChannelSpec) -> Result<Self, NetError> {
        spec.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
            busy_until: 0.0,
            outboxes: BTreeMap::new(),
            last_delivery: BTreeMap::new(),
            in_flight: BinaryHeap::new(),
            next_order: 0,
            counters: NetCounters::default(),
        })
    }

    fn enqueue(&mut self, from: u8, recipients: Vec<u8>, priority: Priority, bytes: Vec<u8>) {
        self.counters.sent += recipients.len() as u64;
        let item = Queued {
            order: self.next_order,
            recipients,
            bytes,
        };
        self.next_order += 1;
        let cap = self.spec.outbox_capacity;
        let outbox = self.outboxes.entry(from).or_insert_with(|| Outbox::new(cap));
        if let Some(dropped) = outbox.priority_enqueue(priority, item) {
            self.counters.dropped_overflow += dropped.recipients.len() as u64;
        }
    }

    pub fn outbox_len(&self, node: u8) -> usize {
        self.outboxes.get(&node).map_or(0, |o| o.len())
    }

    pub fn pending(&self) -> u64 {
        self.outboxes.values().map(|o| o.pending_recipients()).sum::<u64>() + self.in_flight.len() as u64
    }

    /// Starts transmissions while the medium frees up before `until`.
    fn schedule(&mut self, now: f64, until: f64, positions: &BTreeMap<u8, Vec2>) {
        while self.busy_until < until {
            let next = self
                .outboxes
                .iter()
                .filter_map(|(id, o)| o.head().map(|(class, order)| (class, order, *id)))
                .min();
            let Some((class, _, from)) = next else { break };
            let item = self.outboxes.get_mut(&from).and_then(|o| o.pop(class)).expect("head exists");
            let start = now.max(self.busy_until);
            let airtime = (item.bytes.len() * 8) as f64 / self.spec.bandwidth;
            self.busy_until = start + airtime;
            let origin = positions.get(&from).copied();
            for to in item.recipients {
                let reachable = match (origin, positions.get(&to)) {
                    (Some(a), Some(b)) => a.distance(*b) <= self.spec.range,
                    _ => false,
                };
                if !reachable {
                    self.counters.dropped_range += 1;
                    continue;
                }
                if self.spec.loss_rate > 0.0 && self.rng.random_bool(self.spec.loss_rate) {
                    self.counters.dropped_loss += 1;
                    continue;
                }
                let jitter = if self.spec.latency_jitter > 0.0 {
                    self.spec.latency_jitter * (2.0 * self.rng.random::<f64>() - 1.0)
                } else {
                    0.0
                };
                let mut bytes = item.bytes.clone();
                if self.spec.corruption_rate > 0.0 && self.rng.random_bool(self.spec.corruption_rate) {
                    let bit = self.rng.random_range(0..bytes.len() * 8);
                    bytes[bit / 8] ^= 1 << (bit % 8);
                    self.counters.corrupted += 1;
                }
                let link = (from, to);
                let earliest = self.busy_until + self.spec.latency_mean + jitter;
                let time = self.last_delivery.get(&link).map_or(earliest, |t| earliest.max(*t));
                self.last_delivery.insert(link, time);
                let order = self.next_order;
                self.next_order += 1;
                self.in_flight.push(Reverse(HeapEntry(Delivery {
                    time,
                    order,
                    from,
                    to,
                    class: self.spec.class,
                    bytes,
                })));
            }
        }
    }

    fn deliver(&mut self, now: f64, alive: &BTreeSet<u8>, out: &mut Vec<Delivery>) {
        while let Some(Reverse(HeapEntry(d))) = self.in_flight.peek() {
            if d.time > now {
                break;
            }
            let Reverse(HeapEntry(d)) = self.in_flight.pop().expect("peeked");
            if alive.contains(&d.to) {
                self.counters.delivered += 1;
                out.push(d);
            } else {
                self.counters.dropped_range += 1;
            }
        }
    }

    fn drop_node(&mut self, node: u8) {
        if let Some(o) = self.outboxes.remove(&node) {
            self.counters.dropped_range += o.pending_recipients();
        }
    }
}

/// The pair of channels shared by every node.
#[derive(Debug, Clone)]
pub struct Network {
    pub sensitive: Channel,
    pub insensitive: Channel,
    nodes: BTreeSet<u8>,
}

impl Network {
    pub fn new(sensitive: ChannelSpec, insensitive: ChannelSpec, nodes: impl IntoIterator<Item = u8>) -> Result<Self, NetError> {
        Ok(Self {
            sensitive: Channel::new(sensitive)?,
            insensitive: Channel::new(insensitive)?,
            nodes: nodes.into_iter().collect(),
        })
    }

    pub fn nodes(&self) -> &BTreeSet<u8> {
        &self.nodes
    }

    pub fn channel(&self, class: ChannelClass) -> &Channel {
        match class {
            ChannelClass::LatencySensitive => &self.sensitive,
            ChannelClass::LatencyInsensitive => &self.insensitive,
        }
    }

    fn channel_mut(&mut self, class: ChannelClass) -> &mut Channel {
        match class {
            ChannelClass::LatencySensitive => &mut self.sensitive,
            ChannelClass::LatencyInsensitive => &mut self.insensitive,
        }
    }

    /// Queues a frame for transmission; recipients are fixed at this point.
    pub fn transmit(&mut self, from: u8, dest: Destination, class: ChannelClass, priority: Priority, bytes: Vec<u8>) {
        if !self.nodes.contains(&from) {
            return;
        }
        let recipients: Vec<u8> = match dest {
            Destination::Broadcast => self.nodes.iter().copied().filter(|n| *n != from).collect(),
            Destination::Node(n) if n != from => vec![n],
            Destination::Node(_) => vec![],
        };
        self.channel_mut(class).enqueue(from, recipients, priority, bytes);
    }

    /// Runs the medium access for the interval `[now, until)`.
    pub fn schedule(&mut self, now: f64, until: f64, positions: &BTreeMap<u8, Vec2>) {
        self.sensitive.schedule(now, until, positions);
        self.insensitive.schedule(now, until, positions);
    }

    /// Frames due by `now`, ordered by arrival time.
    pub fn deliver(&mut self, now: f64) -> Vec<Delivery> {
        let mut out = Vec::new();
        self.sensitive.deliver(now, &self.nodes, &mut out);
        self.insensitive.deliver(now, &self.nodes, &mut out);
        out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.class.cmp(&b.class)).then(a.order.cmp(&b.order)));
        out
    }

    /// Removes a node; its queued traffic and traffic addressed to it count as unreachable.
    pub fn remove_node(&mut self, node: u8) {
        self.nodes.remove(&node);
        self.sensitive.drop_node(node);
        self.insensitive.drop_node(node);
    }

    pub fn counters(&self) -> NetCounters {
        let mut c = self.sensitive.counters;
        c.add(&self.insensitive.counters);
        c
    }

    pub fn pending(&self) -> u64 {
        self.sensitive.pending() + self.insensitive.pending()
    }
}
