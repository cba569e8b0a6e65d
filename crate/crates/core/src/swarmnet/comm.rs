//! Per-node communication manager: encapsulation with per-channel sequence
//! numbers, inbox decoding, duplicate suppression and peer freshness.

use super::frame::StreamDecoder;
use super::message::{ChannelClass, Priority, SwarmMessage};
use super::network::{Delivery, Destination};
use super::NetError;
use std::collections::{BTreeMap, VecDeque};

/// A repeated sequence number from the same sender inside this window is a duplicate.
pub const DEDUP_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub dest: Destination,
    pub class: ChannelClass,
    pub priority: Priority,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub from: u8,
    pub time: f64,
    pub class: ChannelClass,
    pub msg: SwarmMessage,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CommCounters {
    pub received: u64,
    pub dropped_crc: u64,
    pub malformed: u64,
    pub duplicates: u64,
}

impl CommCounters {
    pub fn add(&mut self, o: &CommCounters) {
        self.received += o.received;
        self.dropped_crc += o.dropped_crc;
        self.malformed += o.malformed;
        self.duplicates += o.duplicates;
    }
}

#[derive(Debug, Clone)]
pub struct CommManager {
    pub id: u8,
    seq: [u8; 2],
    inbox: Vec<Delivery>,
    outgoing: Vec<Outgoing>,
    last_heard: BTreeMap<u8, f64>,
    recent: BTreeMap<(u8, ChannelClass), VecDeque<(u8, f64)>>,
    pub counters: CommCounters,
}

fn class_index(c: ChannelClass) -> usize {
    match c {
        ChannelClass::LatencySensitive => 0,
        ChannelClass::LatencyInsensitive => 1,
    }
}

impl CommManager {
    pub fn new(id: u8) -> Self {
        Self {
            id,
            seq: [0; 2],
            inbox: Vec::new(),
            outgoing: Vec::new(),
            last_heard: BTreeMap::new(),
            recent: BTreeMap::new(),
            counters: CommCounters::default(),
        }
    }

    /// Encapsulates `msg` and queues it for the network on its channel and priority.
    pub fn send(&mut self, msg: &SwarmMessage, dest: Destination) -> Result<(), NetError> {
        let class = msg.channel();
        let slot = &mut self.seq[class_index(class)];
        let bytes = super::message::encode(msg, self.id, *slot)?;
        *slot = slot.wrapping_add(1);
        self.outgoing.push(Outgoing {
            dest,
            class,
            priority: msg.priority(),
            bytes,
        });
        Ok(())
    }

    pub fn take_outgoing(&mut self) -> Vec<Outgoing> {
        std::mem::take(&mut self.outgoing)
    }

    pub fn accept(&mut self, d: Delivery) {
        self.inbox.push(d);
    }

    pub fn inbox_len(&self) -> usize {
        self.inbox.len()
    }

    fn is_duplicate(&mut self, from: u8, class: ChannelClass, seq: u8, now: f64) -> bool {
        let window = self.recent.entry((from, class)).or_default();
        while window.front().is_some_and(|(_, t)| now - t > DEDUP_WINDOW) {
            window.pop_front();
        }
        if window.iter().any(|(s, _)| *s == seq) {
            return true;
        }
        window.push_back((seq, now));
        false
    }

    /// Decodes every frame due by `now`, in delivery order.
    pub fn poll(&mut self, now: f64) -> Vec<Received> {
        let mut due: Vec<Delivery> = Vec::new();
        let mut rest = Vec::new();
        for d in self.inbox.drain(..) {
            if d.time <= now {
                due.push(d);
            } else {
                rest.push(d);
            }
        }
        self.inbox = rest;
        due.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.class.cmp(&b.class)).then(a.order.cmp(&b.order)));
        let mut out = Vec::with_capacity(due.len());
        for d in due {
            let mut dec = StreamDecoder::new();
            dec.push(&d.bytes);
            let Some(frame) = dec.next_frame() else {
                self.counters.dropped_crc += 1;
                continue;
            };
            if self.is_duplicate(frame.sysid, d.class, frame.seq, d.time) {
                self.counters.duplicates += 1;
                continue;
            }
            match SwarmMessage::from_frame(&frame) {
                Ok(msg) => {
                    self.counters.received += 1;
                    self.last_heard.insert(frame.sysid, d.time);
                    out.push(Received {
                        from: frame.sysid,
                        time: d.time,
                        class: d.class,
                        msg,
                    });
                }
                Err(_) => self.counters.malformed += 1,
            }
        }
        out
    }

    pub fn last_heard(&self, peer: u8) -> Option<f64> {
        self.last_heard.get(&peer).copied()
    }

    /// Seconds since anything arrived from `peer`; infinite if never heard.
    pub fn age(&self, peer: u8, now: f64) -> f64 {
        self.last_heard(peer).map_or(f64::INFINITY, |t| now - t)
    }

    pub fn peers(&self) -> impl Iterator<Item = (u8, f64)> + '_ {
        self.last_heard.iter().map(|(k, v)| (*k, *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarmnet::message::{Ack, AckStatus};

    fn delivery(time: f64, order: u64, bytes: Vec<u8>) -> Delivery {
        Delivery {
            time,
            order,
            from: 1,
            to: 2,
            class: ChannelClass::LatencySensitive,
            bytes,
        }
    }

    fn ack(id: u16) -> SwarmMessage {
        SwarmMessage::Ack(Ack {
            command_id: id,
            status: AckStatus::Accepted,
        })
    }

    #[test]
    fn empty_inbox() {
        let mut c = CommManager::new(2);
        assert!(c.poll(10.0).is_empty());
    }

    #[test]
    fn time_gating_and_order() {
        let mut tx = CommManager::new(1);
        for id in 0..3 {
            tx.send(&ack(id), Destination::Node(2)).unwrap();
        }
        let out = tx.take_outgoing();
        let mut rx = CommManager::new(2);
        rx.accept(delivery(1.2, 1, out[1].bytes.clone()));
        rx.accept(delivery(1.0, 0, out[0].bytes.clone()));
        rx.accept(delivery(5.0, 2, out[2].bytes.clone()));
        let got = rx.poll(2.0);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].msg, ack(0));
        assert_eq!(got[1].msg, ack(1));
        assert_eq!(rx.age(1, 2.0), 0.8);
        assert_eq!(rx.poll(5.0).len(), 1);
    }

    #[test]
    fn duplicate_sequence_suppressed() {
        let mut tx = CommManager::new(1);
        tx.send(&ack(7), Destination::Node(2)).unwrap();
        let bytes = tx.take_outgoing().remove(0).bytes;
        let mut rx = CommManager::new(2);
        rx.accept(delivery(1.0, 0, bytes.clone()));
        rx.accept(delivery(1.1, 1, bytes));
        assert_eq!(rx.poll(2.0).len(), 1);
        assert_eq!(rx.counters.duplicates, 1);
    }

    #[test]
    fn corrupted_frame_counted() {
        let mut tx = CommManager::new(1);
        tx.send(&ack(7), Destination::Node(2)).unwrap();
        let mut bytes = tx.take_outgoing().remove(0).bytes;
        bytes[6] ^= 0x01;
        let mut rx = CommManager::new(2);
        rx.accept(delivery(1.0, 0, bytes));
        assert!(rx.poll(2.0).is_empty());
        assert_eq!(rx.counters.dropped_crc, 1);
    }

    #[test]
    fn sequence_wraps_per_channel() {
        let mut tx = CommManager::new(1);
        for i in 0..300u16 {
            tx.send(&ack(i), Destination::Broadcast).unwrap();
        }
        let out = tx.take_outgoing();
        assert_eq!(out[255].bytes[2], 255);
        assert_eq!(out[256].bytes[2], 0);
    }
}
