use nalgebra::Vector2;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }
}

/// One sensor measurement: pixel position, timestamp (s) and polarity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: f64, y: f64, t: f64, polarity: Polarity) -> Self {
        Event { x, y, t, polarity }
    }

    pub fn pixel(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// Time window `[alpha, beta]` in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub alpha: f64,
    pub beta: f64,
}

impl Window {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Window { alpha, beta }
    }

    pub fn duration(&self) -> f64 {
        self.beta - self.alpha
    }

    /// Half duration `Δ`.
    pub fn half(&self) -> f64 {
        0.5 * (self.beta - self.alpha)
    }

    pub fn midpoint(&self) -> f64 {
        self.alpha + self.half()
    }
}

/// Time-ordered events over a window, with the index `M` that splits them
/// into the halves `t ≤ α + Δ` and `t > α + Δ`.
#[derive(Clone, Debug)]
pub struct EventBatch {
    events: Vec<Event>,
    window: Window,
    split: usize,
}

impl EventBatch {
    pub fn new(events: Vec<Event>, window: Window) -> Result<Self> {
        if !(window.alpha.is_finite() && window.beta.is_finite()) || window.beta < window.alpha {
            return Err(Error::Data(format!(
                "invalid window [{}, {}]",
                window.alpha, window.beta
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in events.iter().enumerate() {
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(Error::Data(format!("event {i} has invalid timestamp {}", e.t)));
            }
            if e.t < prev {
                return Err(Error::Data(format!(
                    "event {i} at t = {} precedes its predecessor at t = {prev}",
                    e.t
                )));
            }
            if e.t < window.alpha || e.t > window.beta {
                return Err(Error::Data(format!(
                    "event {i} at t = {} lies outside [{}, {}]",
                    e.t, window.alpha, window.beta
                )));
            }
            prev = e.t;
        }
        let mid = window.midpoint();
        let split = events.partition_point(|e| e.t <= mid);
        Ok(EventBatch {
            events,
            window,
            split,
        })
    }

    /// Batch whose window spans its first and last timestamps.
    pub fn from_events(events: Vec<Event>) -> Result<Self> {
        let window = match (events.first(), events.last()) {
            (Some(a), Some(b)) => Window::new(a.t, b.t),
            _ => return Err(Error::InsufficientData("empty event batch".into())),
        };
        Self::new(events, window)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of events in the first half (`M`).
    pub fn split_index(&self) -> usize {
        self.split
    }
}
