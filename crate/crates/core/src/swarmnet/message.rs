//! Message catalog and little-endian payload layouts.

use super::frame::{encode_frame, Frame, MAX_PAYLOAD};
use super::NetError;
use serde::{Deserialize, Serialize};

pub const MSG_HEARTBEAT: u8 = 0x01;
pub const MSG_PLAN_PROGRESS: u8 = 0x02;
pub const MSG_ASSIGNMENT: u8 = 0x03;
pub const MSG_COMMAND: u8 = 0x04;
pub const MSG_ACK: u8 = 0x05;
pub const MSG_DETECTION: u8 = 0x06;
pub const MSG_IMAGERY_CHUNK: u8 = 0x07;

/// System id of the ground station.
pub const GCS_SYSID: u8 = 0;
/// Command target meaning every agent.
pub const BROADCAST: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelClass {
    LatencySensitive,
    LatencyInsensitive,
}

/// Transmission priority; lower value is served first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Command = 0,
    Coordination = 1,
    Telemetry = 2,
    Bulk = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub time_ms: u32,
    pub position: [f32; 2],
    pub altitude: f32,
    pub airspeed: f32,
    pub course: f32,
    pub roll: f32,
    pub pitch: f32,
    /// Remaining battery in half-percent steps (0..=200).
    pub battery: u8,
    pub mode: u8,
    /// 0xFF when not in a group.
    pub group: u8,
    pub role: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanProgress {
    pub time_ms: u32,
    pub mission_id: u16,
    pub task: u8,
    pub segment: u8,
    pub progress: f32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMsg {
    pub mission_id: u16,
    pub group_id: u8,
    pub version: u32,
    pub proposer: u8,
    /// (task index, agent id) pairs.
    pub awards: Vec<(u8, u8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandBody {
    Launch { lead: f32, spacing: f32 },
    Formation { mission_id: u16, pattern: u8, speed: f32, altitude: f32, waypoints: Vec<[f32; 2]> },
    SetPattern { pattern: u8 },
    Tracking { mission_id: u16, radius: f32, altitude: f32, area: Vec<[f32; 2]> },
    Transit { mission_id: u16, speed: f32, altitude: f32, waypoints: Vec<[f32; 2]> },
    Rtl,
    Land { lead: f32, spacing: f32 },
    SetParam { param: u8, value: f32 },
}

impl CommandBody {
    pub fn code(&self) -> u8 {
        match self {
            CommandBody::Launch { .. } => 1,
            CommandBody::Formation { .. } => 2,
            CommandBody::SetPattern { .. } => 3,
            CommandBody::Tracking { .. } => 4,
            CommandBody::Transit { .. } => 5,
            CommandBody::Rtl => 6,
            CommandBody::Land { .. } => 7,
            CommandBody::SetParam { .. } => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMsg {
    pub command_id: u16,
    pub target: u8,
    pub issued_ms: u32,
    pub body: CommandBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Accepted = 0,
    Rejected = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub command_id: u16,
    pub status: AckStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub time_ms: u32,
    pub target_id: u8,
    pub position: [f32; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageryChunk {
    pub image_id: u16,
    pub index: u16,
    pub total: u16,
    pub data: Vec<u8>,
}

pub const IMAGERY_HEADER: usize = 6;
pub const MAX_IMAGERY_DATA: usize = MAX_PAYLOAD - IMAGERY_HEADER;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SwarmMessage {
    Heartbeat(Heartbeat),
    PlanProgress(PlanProgress),
    Assignment(AssignmentMsg),
    Command(CommandMsg),
    Ack(Ack),
    Detection(Detection),
    ImageryChunk(ImageryChunk),
}

impl SwarmMessage {
    pub fn message_id(&self) -> u8 {
        match self {
            SwarmMessage::Heartbeat(_) => MSG_HEARTBEAT,
            SwarmMessage::PlanProgress(_) => MSG_PLAN_PROGRESS,
            SwarmMessage::Assignment(_) => MSG_ASSIGNMENT,
            SwarmMessage::Command(_) => MSG_COMMAND,
            SwarmMessage::Ack(_) => MSG_ACK,
            SwarmMessage::Detection(_) => MSG_DETECTION,
            SwarmMessage::ImageryChunk(_) => MSG_IMAGERY_CHUNK,
        }
    }

    pub fn channel(&self) -> ChannelClass {
        match self {
            SwarmMessage::ImageryChunk(_) => ChannelClass::LatencyInsensitive,
            _ => ChannelClass::LatencySensitive,
        }
    }

    pub fn priority(&self) -> Priority {
        match self {
            SwarmMessage::Command(_) | SwarmMessage::Ack(_) => Priority::Command,
            SwarmMessage::Assignment(_) | SwarmMessage::PlanProgress(_) | SwarmMessage::Detection(_) => {
                Priority::Coordination
            }
            SwarmMessage::Heartbeat(_) => Priority::Telemetry,
            SwarmMessage::ImageryChunk(_) => Priority::Bulk,
        }
    }

    pub fn encode_payload(&self) -> Result<Vec<u8>, NetError> {
        let mut w = Writer::default();
        match self {
            SwarmMessage::Heartbeat(h) => {
                w.u32(h.time_ms);
                w.f32(h.position[0]);
                w.f32(h.position[1]);
                w.f32(h.altitude);
                w.f32(h.airspeed);
                w.f32(h.course);
                w.f32(h.roll);
                w.f32(h.pitch);
                w.u8(h.battery);
                w.u8(h.mode);
                w.u8(h.group);
                w.u8(h.role);
            }
            SwarmMessage::PlanProgress(p) => {
                w.u32(p.time_ms);
                w.u16(p.mission_id);
                w.u8(p.task);
                w.u8(p.segment);
                w.f32(p.progress);
            }
            SwarmMessage::Assignment(a) => {
                w.u16(a.mission_id);
                w.u8(a.group_id);
                w.u32(a.version);
                w.u8(a.proposer);
                w.count(a.awards.len())?;
                for (task, agent) in &a.awards {
                    w.u8(*task);
                    w.u8(*agent);
                }
            }
            SwarmMessage::Command(c) => {
                w.u16(c.command_id);
                w.u8(c.target);
                w.u8(c.body.code());
                w.u32(c.issued_ms);
                match &c.body {
                    CommandBody::Launch { lead, spacing } | CommandBody::Land { lead, spacing } => {
                        w.f32(*lead);
                        w.f32(*spacing);
                    }
                    CommandBody::Formation {
                        mission_id,
                        pattern,
                        speed,
                        altitude,
                        waypoints,
                    } => {
                        w.u16(*mission_id);
                        w.u8(*pattern);
                        w.f32(*speed);
                        w.f32(*altitude);
                        w.points(waypoints)?;
                    }
                    CommandBody::SetPattern { pattern } => w.u8(*pattern),
                    CommandBody::Tracking {
                        mission_id,
                        radius,
                        altitude,
                        area,
                    } => {
                        w.u16(*mission_id);
                        w.f32(*radius);
                        w.f32(*altitude);
                        w.points(area)?;
                    }
                    CommandBody::Transit {
                        mission_id,
                        speed,
                        altitude,
                        waypoints,
                    } => {
                        w.u16(*mission_id);
                        w.f32(*speed);
                        w.f32(*altitude);
                        w.points(waypoints)?;
                    }
                    CommandBody::Rtl => {}
                    CommandBody::SetParam { param, value } => {
                        w.u8(*param);
                        w.f32(*value);
                    }
                }
            }
            SwarmMessage::Ack(a) => {
                w.u16(a.command_id);
                w.u8(a.status as u8);
            }
            SwarmMessage::Detection(d) => {
                w.u32(d.time_ms);
                w.u8(d.target_id);
                w.f32(d.position[0]);
                w.f32(d.position[1]);
            }
            SwarmMessage::ImageryChunk(c) => {
                w.u16(c.image_id);
                w.u16(c.index);
                w.u16(c.total);
                w.bytes(&c.data);
            }
        }
        if w.0.len() > MAX_PAYLOAD {
            return Err(NetError::PayloadTooLarge(w.0.len()));
        }
        Ok(w.0)
    }

    pub fn decode_payload(msgid: u8, payload: &[u8]) -> Result<SwarmMessage, NetError> {
        let mut r = Reader::new(msgid, payload);
        let msg = match msgid {
            MSG_HEARTBEAT => SwarmMessage::Heartbeat(Heartbeat {
                time_ms: r.u32()?,
                position: [r.f32()?, r.f32()?],
                altitude: r.f32()?,
                airspeed: r.f32()?,
                course: r.f32()?,
                roll: r.f32()?,
                pitch: r.f32()?,
                battery: r.u8()?,
                mode: r.u8()?,
                group: r.u8()?,
                role: r.u8()?,
            }),
            MSG_PLAN_PROGRESS => SwarmMessage::PlanProgress(PlanProgress {
                time_ms: r.u32()?,
                mission_id: r.u16()?,
                task: r.u8()?,
                segment: r.u8()?,
                progress: r.f32()?,
            }),
            MSG_ASSIGNMENT => {
                let mission_id = r.u16()?;
                let group_id = r.u8()?;
                let version = r.u32()?;
                let proposer = r.u8()?;
                let n = r.u8()? as usize;
                let mut awards = Vec::with_capacity(n);
                for _ in 0..n {
                    awards.push((r.u8()?, r.u8()?));
                }
                SwarmMessage::Assignment(AssignmentMsg {
                    mission_id,
                    group_id,
                    version,
                    proposer,
                    awards,
                })
            }
            MSG_COMMAND => {
                let command_id = r.u16()?;
                let target = r.u8()?;
                let code = r.u8()?;
                let issued_ms = r.u32()?;
                let body = match code {
                    1 => CommandBody::Launch {
                        lead: r.f32()?,
                        spacing: r.f32()?,
                    },
                    2 => CommandBody::Formation {
                        mission_id: r.u16()?,
                        pattern: r.u8()?,
                        speed: r.f32()?,
                        altitude: r.f32()?,
                        waypoints: r.points()?,
                    },
                    3 => CommandBody::SetPattern { pattern: r.u8()? },
                    4 => CommandBody::Tracking {
                        mission_id: r.u16()?,
                        radius: r.f32()?,
                        altitude: r.f32()?,
                        area: r.points()?,
                    },
                    5 => CommandBody::Transit {
                        mission_id: r.u16()?,
                        speed: r.f32()?,
                        altitude: r.f32()?,
                        waypoints: r.points()?,
                    },
                    6 => CommandBody::Rtl,
                    7 => CommandBody::Land {
                        lead: r.f32()?,
                        spacing: r.f32()?,
                    },
                    8 => CommandBody::SetParam {
                        param: r.u8()?,
                        value: r.f32()?,
                    },
                    other => return Err(NetError::InvalidField { msgid, field: "command kind", value: other as u32 }),
                };
                SwarmMessage::Command(CommandMsg {
                    command_id,
                    target,
                    issued_ms,
                    body,
                })
            }
            MSG_ACK => {
                let command_id = r.u16()?;
                let status = match r.u8()? {
                    0 => AckStatus::Accepted,
                    1 => AckStatus::Rejected,
                    other => return Err(NetError::InvalidField { msgid, field: "ack status", value: other as u32 }),
                };
                SwarmMessage::Ack(Ack { command_id, status })
            }
            MSG_DETECTION => SwarmMessage::Detection(Detection {
                time_ms: r.u32()?,
                target_id: r.u8()?,
                position: [r.f32()?, r.f32()?],
            }),
            MSG_IMAGERY_CHUNK => SwarmMessage::ImageryChunk(ImageryChunk {
                image_id: r.u16()?,
                index: r.u16()?,
                total: r.u16()?,
                data: r.rest(),
            }),
            other => return Err(NetError::UnknownMessage(other)),
        };
        r.finish()?;
        Ok(msg)
    }

    pub fn to_frame(&self, sysid: u8, seq: u8) -> Result<Frame, NetError> {
        Ok(Frame {
            seq,
            sysid,
            msgid: self.message_id(),
            payload: self.encode_payload()?,
        })
    }

    pub fn from_frame(frame: &Frame) -> Result<SwarmMessage, NetError> {
        Self::decode_payload(frame.msgid, &frame.payload)
    }
}

/// Encodes a message into a complete frame.
pub fn encode(msg: &SwarmMessage, sysid: u8, seq: u8) -> Result<Vec<u8>, NetError> {
    encode_frame(sysid, seq, msg.message_id(), &msg.encode_payload()?)
}

/// Decodes exactly one complete frame into a message and its header.
pub fn decode(bytes: &[u8]) -> Result<(Frame, SwarmMessage), NetError> {
    match super::frame::decode_frame(bytes)? {
        super::frame::Parsed::Frame(frame, used) => {
            if used != bytes.len() {
                return Err(NetError::TrailingBytes(bytes.len() - used));
            }
            let msg = SwarmMessage::from_frame(&frame)?;
            Ok((frame, msg))
        }
        super::frame::Parsed::Incomplete => Err(NetError::Truncated),
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn count(&mut self, n: usize) -> Result<(), NetError> {
        let n = u8::try_from(n).map_err(|_| NetError::PayloadTooLarge(n))?;
        self.u8(n);
        Ok(())
    }
    fn points(&mut self, pts: &[[f32; 2]]) -> Result<(), NetError> {
        self.count(pts.len())?;
        for p in pts {
            self.f32(p[0]);
            self.f32(p[1]);
        }
        Ok(())
    }
}

struct Reader<'a> {
    msgid: u8,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(msgid: u8, buf: &'a [u8]) -> Self {
        Self { msgid, buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], NetError> {
        let end = self.pos + N;
        let slice = self.buf.get(self.pos..end).ok_or(NetError::ShortPayload {
            msgid: self.msgid,
            len: self.buf.len(),
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, NetError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn f32(&mut self) -> Result<f32, NetError> {
        Ok(f32::from_le_bytes(self.take()?))
    }
    fn points(&mut self) -> Result<Vec<[f32; 2]>, NetError> {
        let n = self.u8()? as usize;
        (0..n).map(|_| Ok([self.f32()?, self.f32()?])).collect()
    }
    fn rest(&mut self) -> Vec<u8> {
        let out = self.buf[self.pos..].to_vec();
        self.pos = self.buf.len();
        out
    }
    fn finish(&self) -> Result<(), NetError> {
        if self.pos != self.buf.len() {
            return Err(NetError::LongPayload {
                msgid: self.msgid,
                extra: self.buf.len() - self.pos,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::swarmnet::crc::crc16_bitwise;
    use proptest::prelude::*;

    #[test]
    fn ack_reference_bytes() {
        let msg = SwarmMessage::Ack(Ack {
            command_id: 0,
            status: AckStatus::Accepted,
        });
        let bytes = encode(&msg, 1, 0).unwrap();
        let body = [0x03, 0x00, 0x01, 0x05, 0x00, 0x00, 0x00];
        let crc = crc16_bitwise(&body).to_le_bytes();
        let mut expected = vec![0xFD];
        expected.extend_from_slice(&body);
        expected.extend_from_slice(&crc);
        assert_eq!(bytes, expected);
        // Frozen; cross-checked against binascii.crc_hqx(body, 0xFFFF) = 0x3F58.
        assert_eq!(bytes, [0xFD, 0x03, 0x00, 0x01, 0x05, 0x00, 0x00, 0x00, 0x58, 0x3F]);
    }

    #[test]
    fn heartbeat_is_36_bytes() {
        let hb = SwarmMessage::Heartbeat(Heartbeat {
            time_ms: 1,
            position: [1.0, 2.0],
            altitude: 3.0,
            airspeed: 4.0,
            course: 0.5,
            roll: 0.1,
            pitch: 0.0,
            battery: 200,
            mode: 3,
            group: 0xFF,
            role: 0,
        });
        assert_eq!(hb.encode_payload().unwrap().len(), 36);
    }

    #[test]
    fn channel_assignment() {
        let chunk = SwarmMessage::ImageryChunk(ImageryChunk {
            image_id: 1,
            index: 0,
            total: 1,
            data: vec![],
        });
        assert_eq!(chunk.channel(), ChannelClass::LatencyInsensitive);
        assert_eq!(chunk.priority(), Priority::Bulk);
        let ack = SwarmMessage::Ack(Ack {
            command_id: 3,
            status: AckStatus::Rejected,
        });
        assert_eq!(ack.channel(), ChannelClass::LatencySensitive);
    }

    #[test]
    fn malformed_payloads_rejected() {
        assert!(matches!(SwarmMessage::decode_payload(0x09, &[]), Err(NetError::UnknownMessage(9))));
        assert!(matches!(
            SwarmMessage::decode_payload(MSG_ACK, &[0, 0]),
            Err(NetError::ShortPayload { .. })
        ));
        assert!(matches!(
            SwarmMessage::decode_payload(MSG_ACK, &[0, 0, 0, 1]),
            Err(NetError::LongPayload { .. })
        ));
        assert!(matches!(
            SwarmMessage::decode_payload(MSG_ACK, &[0, 0, 7]),
            Err(NetError::InvalidField { .. })
        ));
        let too_many = CommandMsg {
            command_id: 1,
            target: BROADCAST,
            issued_ms: 0,
            body: CommandBody::Transit {
                mission_id: 1,
                speed: 19.0,
                altitude: 100.0,
                waypoints: vec![[0.0, 0.0]; 40],
            },
        };
        assert!(matches!(
            SwarmMessage::Command(too_many).encode_payload(),
            Err(NetError::PayloadTooLarge(_))
        ));
    }

    fn finite() -> impl Strategy<Value = f32> {
        -1e5f32..1e5
    }

    fn points(max: usize) -> impl Strategy<Value = Vec<[f32; 2]>> {
        proptest::collection::vec([finite(), finite()], 0..max)
    }

    pub(crate) fn any_command_body() -> impl Strategy<Value = CommandBody> {
        prop_oneof![
            (finite(), finite()).prop_map(|(lead, spacing)| CommandBody::Launch { lead, spacing }),
            (any::<u16>(), any::<u8>(), finite(), finite(), points(28)).prop_map(|(mission_id, pattern, speed, altitude, waypoints)| {
                CommandBody::Formation { mission_id, pattern, speed, altitude, waypoints }
            }),
            any::<u8>().prop_map(|pattern| CommandBody::SetPattern { pattern }),
            (any::<u16>(), finite(), finite(), points(28)).prop_map(|(mission_id, radius, altitude, area)| {
                CommandBody::Tracking { mission_id, radius, altitude, area }
            }),
            (any::<u16>(), finite(), finite(), points(28)).prop_map(|(mission_id, speed, altitude, waypoints)| {
                CommandBody::Transit { mission_id, speed, altitude, waypoints }
            }),
            Just(CommandBody::Rtl),
            (finite(), finite()).prop_map(|(lead, spacing)| CommandBody::Land { lead, spacing }),
            (any::<u8>(), finite()).prop_map(|(param, value)| CommandBody::SetParam { param, value }),
        ]
    }

    pub(crate) fn any_message() -> impl Strategy<Value = SwarmMessage> {
        prop_oneof![
            (any::<u32>(), [finite(), finite()], finite(), finite(), finite(), finite(), finite(), any::<[u8; 4]>()).prop_map(
                |(time_ms, position, altitude, airspeed, course, roll, pitch, b)| {
                    SwarmMessage::Heartbeat(Heartbeat {
                        time_ms,
                        position,
                        altitude,
                        airspeed,
                        course,
                        roll,
                        pitch,
                        battery: b[0],
                        mode: b[1],
                        group: b[2],
                        role: b[3],
                    })
                }
            ),
            (any::<u32>(), any::<u16>(), any::<u8>(), any::<u8>(), finite()).prop_map(|(time_ms, mission_id, task, segment, progress)| {
                SwarmMessage::PlanProgress(PlanProgress { time_ms, mission_id, task, segment, progress })
            }),
            (any::<u16>(), any::<u8>(), any::<u32>(), any::<u8>(), proptest::collection::vec((any::<u8>(), any::<u8>()), 0..100)).prop_map(
                |(mission_id, group_id, version, proposer, awards)| {
                    SwarmMessage::Assignment(AssignmentMsg { mission_id, group_id, version, proposer, awards })
                }
            ),
            (any::<u16>(), any::<u8>(), any::<u32>(), any_command_body()).prop_map(|(command_id, target, issued_ms, body)| {
                SwarmMessage::Command(CommandMsg { command_id, target, issued_ms, body })
            }),
            (any::<u16>(), any::<bool>()).prop_map(|(command_id, rej)| SwarmMessage::Ack(Ack {
                command_id,
                status: if rej { AckStatus::Rejected } else { AckStatus::Accepted },
            })),
            (any::<u32>(), any::<u8>(), [finite(), finite()]).prop_map(|(time_ms, target_id, position)| {
                SwarmMessage::Detection(Detection { time_ms, target_id, position })
            }),
            (any::<u16>(), any::<u16>(), any::<u16>(), proptest::collection::vec(any::<u8>(), 0..=MAX_IMAGERY_DATA)).prop_map(
                |(image_id, index, total, data)| SwarmMessage::ImageryChunk(ImageryChunk { image_id, index, total, data })
            ),
        ]
    }

    proptest! {
        #[test]
        fn codec_round_trip(msg in any_message(), sysid: u8, seq: u8) {
            let bytes = encode(&msg, sysid, seq).unwrap();
            let (frame, back) = decode(&bytes).unwrap();
            prop_assert_eq!(frame.sysid, sysid);
            prop_assert_eq!(frame.seq, seq);
            prop_assert_eq!(back, msg);
        }

        #[test]
        fn decode_payload_never_panics(msgid: u8, payload in proptest::collection::vec(any::<u8>(), 0..=255)) {
            let _ = SwarmMessage::decode_payload(msgid, &payload);
        }
    }
}
