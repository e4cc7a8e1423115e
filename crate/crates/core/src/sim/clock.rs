use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Simulated seconds since the device was powered up.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct VirtualClock {
    now_s: f64,
}

impl VirtualClock {
    pub fn new() -> Self {
        VirtualClock { now_s: 0.0 }
    }

    pub fn at(now_s: f64) -> Self {
        VirtualClock { now_s }
    }

    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    pub fn advance(self, dt: f64) -> Result<Self, SimError> {
        advance_clock(self, dt)
    }
}

pub fn advance_clock(clock: VirtualClock, dt: f64) -> Result<VirtualClock, SimError> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(SimError::NegativeTimeStep(dt));
    }
    Ok(VirtualClock {
        now_s: clock.now_s + dt,
    })
}

/// How the device decides what time it is when it samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ClockMode {
    /// Time advances by `poll_period_s` after every poll.
    Virtual {
        #[serde(default = "default_period")]
        poll_period_s: f64,
    },
    RealTime,
}

fn default_period() -> f64 {
    1.0
}

impl Default for ClockMode {
    fn default() -> Self {
        ClockMode::Virtual {
            poll_period_s: default_period(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum DeviceClock {
    Virtual { clock: VirtualClock, period_s: f64 },
    RealTime { start: Instant },
}

impl DeviceClock {
    pub(crate) fn new(mode: ClockMode) -> Self {
        match mode {
            ClockMode::Virtual { poll_period_s } => DeviceClock::Virtual {
                clock: VirtualClock::new(),
                period_s: poll_period_s,
            },
            ClockMode::RealTime => DeviceClock::RealTime {
                start: Instant::now(),
            },
        }
    }

    pub(crate) fn now_s(&self) -> f64 {
        match self {
            DeviceClock::Virtual { clock, .. } => clock.now_s(),
            DeviceClock::RealTime { start } => start.elapsed().as_secs_f64(),
        }
    }

    pub(crate) fn tick(&mut self) {
        if let DeviceClock::Virtual { clock, period_s } = self {
            *clock = clock.advance(*period_s).expect("validated period");
        }
    }
}
