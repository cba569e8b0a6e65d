//! Per-agent supervisory state machine.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Standby,
    Taxi,
    Launch,
    Mission,
    Avoid,
    Rtl,
    Land,
    Failsafe,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Standby,
        Mode::Taxi,
        Mode::Launch,
        Mode::Mission,
        Mode::Avoid,
        Mode::Rtl,
        Mode::Land,
        Mode::Failsafe,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    /// Modes in which actuators may be driven.
    pub fn actuates(self) -> bool {
        !matches!(self, Mode::Standby | Mode::Failsafe)
    }

    pub fn airborne(self) -> bool {
        matches!(self, Mode::Launch | Mode::Mission | Mode::Avoid | Mode::Rtl | Mode::Land)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    LaunchCommand,
    TaxiComplete,
    Airborne,
    MissionCommand,
    AvoidTriggered,
    AvoidCleared,
    RtlCommand,
    LandCommand,
    LandStart,
    Landed,
    BatteryLow,
    LinkLost,
    Fault,
}

impl Event {
    pub const ALL: [Event; 13] = [
        Event::LaunchCommand,
        Event::TaxiComplete,
        Event::Airborne,
        Event::MissionCommand,
        Event::AvoidTriggered,
        Event::AvoidCleared,
        Event::RtlCommand,
        Event::LandCommand,
        Event::LandStart,
        Event::Landed,
        Event::BatteryLow,
        Event::LinkLost,
        Event::Fault,
    ];
}

/// What an accepted event does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Mode changed.
    Transition { from: Mode, to: Mode },
    /// Accepted without a mode change (e.g. a mission command while flying
    /// one, or one deferred until launch completes).
    Accepted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub mode: Mode,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommanderState {
    pub mode: Mode,
    /// Mode to resume once an avoidance manoeuvre clears.
    pub resume: Mode,
    pub last_event: Option<Event>,
}

impl Default for CommanderState {
    fn default() -> Self {
        Self {
            mode: Mode::Standby,
            resume: Mode::Mission,
            last_event: None,
        }
    }
}

/// The allowed-transition table. `None` is a prohibited event.
pub fn transition(mode: Mode, resume: Mode, event: Event) -> Option<Option<Mode>> {
    use Event as E;
    use Mode as M;
    let next = match (mode, event) {
        (_, E::Fault) if mode != M::Failsafe => Some(M::Failsafe),
        (M::Standby, E::LaunchCommand) => Some(M::Taxi),
        (M::Taxi, E::TaxiComplete) => Some(M::Launch),
        (M::Launch, E::Airborne) => Some(M::Mission),
        (M::Taxi | M::Launch | M::Mission | M::Avoid, E::MissionCommand) => None,
        (M::Mission | M::Rtl, E::AvoidTriggered) => Some(M::Avoid),
        (M::Avoid, E::AvoidCleared) => Some(resume),
        (M::Mission | M::Avoid | M::Launch, E::RtlCommand | E::BatteryLow | E::LinkLost) => Some(M::Rtl),
        (M::Mission | M::Avoid, E::LandCommand) => Some(M::Rtl),
        (M::Rtl, E::LandCommand | E::RtlCommand) => None,
        (M::Rtl, E::LandStart) => Some(M::Land),
        (M::Land, E::Landed) => Some(M::Standby),
        _ => return None,
    };
    Some(next)
}

impl CommanderState {
    pub fn step(&mut self, event: Event) -> Result<Outcome, Rejection> {
        let Some(next) = transition(self.mode, self.resume, event) else {
            return Err(Rejection { mode: self.mode, event });
        };
        self.last_event = Some(event);
        match next {
            None => Ok(Outcome::Accepted),
            Some(to) => {
                let from = self.mode;
                if to == Mode::Avoid {
                    self.resume = from;
                }
                self.mode = to;
                Ok(Outcome::Transition { from, to })
            }
        }
    }
}

/// Pure form of [`CommanderState::step`].
pub fn commander_step(state: CommanderState, event: Event) -> (CommanderState, Result<Outcome, Rejection>) {
    let mut s = state;
    let r = s.step(event);
    (s, r)
}
