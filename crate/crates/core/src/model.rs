//! Domain types shared by every other module: physical parameters, the hybrid
//! state, events, sampled trajectories and the signum functions that drive the
//! discrete switching.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default gravitational acceleration [m/s²].
pub const G_DEFAULT: f64 = 9.81;
/// Default stick band on the relative velocity [m/s].
pub const EPS_V_DEFAULT: f64 = 1e-4;
/// Default event localization width [s].
pub const TOL_EVENT_DEFAULT: f64 = 1e-9;
/// Default validity bound on impact speed [m/s].
pub const OMEGA_MAX_DEFAULT: f64 = 2.0;
/// Data acquisition rate of the reference setup [Hz].
pub const SAMPLE_RATE_DEFAULT: f64 = 5000.0;
/// Maximal constant platform velocity of the reference setup [m/s].
pub const V_PLATFORM_DEFAULT: f64 = 0.1;
/// Laser sensor repeatability [m].
pub const SENSOR_QUANTUM: f64 = 8e-6;

/// Physical and model constants of the active/passive pair.
///
/// The Hunt-Crossley damping coefficient is not stored; see [`SystemParams::lambda`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Active body mass [kg].
    pub m1: f64,
    /// Passive body mass [kg].
    pub m2: f64,
    /// Coulomb friction force [N].
    pub b: f64,
    /// Active-subsystem velocity gain [N·s/m].
    pub a1: f64,
    /// Active-subsystem position gain [N/m].
    pub a2: f64,
    /// Contact stiffness [N/mⁿ].
    pub k: f64,
    /// Restitution slope [s/m].
    pub alpha: f64,
    /// Contact exponent.
    pub n: f64,
    /// Impact position of the fixed frame [m].
    pub x_c: f64,
    /// Constant platform velocity [m/s].
    pub v_platform: f64,
    /// Upper bound of impact speeds for which the contact law is trusted [m/s].
    pub omega_max: f64,
    /// Gravitational acceleration [m/s²].
    pub g: f64,
}

impl SystemParams {
    /// Steel disk on the moving platform.
    pub fn steel() -> Self {
        Self {
            m2: 0.052,
            b: 0.214,
            alpha: 0.2,
            ..Self::base()
        }
    }

    /// Aluminium disk on the moving platform.
    pub fn aluminium() -> Self {
        Self {
            m2: 0.024,
            b: 0.1106,
            alpha: 1.0,
            ..Self::base()
        }
    }

    fn base() -> Self {
        Self {
            m1: 1.0,
            m2: 0.05,
            b: 0.2,
            a1: 20.0,
            a2: 100.0,
            k: 1.0e4,
            alpha: 0.2,
            n: 1.0,
            x_c: 0.0,
            v_platform: V_PLATFORM_DEFAULT,
            omega_max: OMEGA_MAX_DEFAULT,
            g: G_DEFAULT,
        }
    }

    /// Hunt-Crossley damping coefficient λ = 1.5·α·k.
    pub fn lambda(&self) -> f64 {
        1.5 * self.alpha * self.k
    }

    /// Largest acceleration the friction interface can transmit to the passive body.
    pub fn stiction_limit(&self) -> f64 {
        self.b / self.m2
    }

    /// Nominal friction coefficient μ = b / (m₂·g).
    pub fn friction_coefficient(&self) -> f64 {
        self.b / (self.m2 * self.g)
    }

    /// `Ok` when every invariant holds, otherwise all violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        let fields = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("b", self.b),
            ("a1", self.a1),
            ("a2", self.a2),
            ("k", self.k),
            ("alpha", self.alpha),
            ("n", self.n),
            ("x_c", self.x_c),
            ("v_platform", self.v_platform),
            ("omega_max", self.omega_max),
            ("g", self.g),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                v.push(Violation::new(name, value, "must be finite"));
            }
        }
        let positive = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("b", self.b),
            ("k", self.k),
            ("omega_max", self.omega_max),
            ("g", self.g),
        ];
        for (name, value) in positive {
            if value.is_finite() && value <= 0.0 {
                v.push(Violation::new(name, value, "must be > 0"));
            }
        }
        for (name, value) in [("a1", self.a1), ("a2", self.a2), ("alpha", self.alpha)] {
            if value.is_finite() && value < 0.0 {
                v.push(Violation::new(name, value, "must be >= 0"));
            }
        }
        if self.n.is_finite() && self.n < 1.0 {
            v.push(Violation::new("n", self.n, "must be >= 1"));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    /// Like [`validate`](Self::validate) but as a crate error.
    pub fn checked(&self) -> Result<()> {
        self.validate().map_err(Error::InvalidParams)
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::steel()
    }
}

/// A single violated parameter invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub value: f64,
    pub rule: &'static str,
}

impl Violation {
    fn new(field: &'static str, value: f64, rule: &'static str) -> Self {
        Self { field, value, rule }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} {}", self.field, self.value, self.rule)
    }
}

/// Named parameter set plus the acquisition rate used for sampled output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub params: SystemParams,
    pub sample_rate: f64,
}

impl Preset {
    pub const NAMES: [&'static str; 2] = ["steel", "aluminium"];

    pub fn by_name(name: &str) -> Option<Self> {
        let params = match name {
            "steel" => SystemParams::steel(),
            "aluminium" | "aluminum" => SystemParams::aluminium(),
            _ => return None,
        };
        Some(Self {
            name: if name == "steel" { "steel" } else { "aluminium" },
            params,
            sample_rate: SAMPLE_RATE_DEFAULT,
        })
    }
}

/// Discrete mode of the hybrid automaton: friction state × contact state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    SlipFree,
    StickFree,
    SlipContact,
    StickContact,
}

impl Mode {
    pub fn from_flags(stick: bool, contact: bool) -> Self {
        match (stick, contact) {
            (false, false) => Mode::SlipFree,
            (true, false) => Mode::StickFree,
            (false, true) => Mode::SlipContact,
            (true, true) => Mode::StickContact,
        }
    }

    pub fn is_stick(self) -> bool {
        matches!(self, Mode::StickFree | Mode::StickContact)
    }

    pub fn is_contact(self) -> bool {
        matches!(self, Mode::SlipContact | Mode::StickContact)
    }

    pub fn with_stick(self, stick: bool) -> Self {
        Self::from_flags(stick, self.is_contact())
    }

    pub fn with_contact(self, contact: bool) -> Self {
        Self::from_flags(self.is_stick(), contact)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SlipFree => "SlipFree",
            Mode::StickFree => "StickFree",
            Mode::SlipContact => "SlipContact",
            Mode::StickContact => "StickContact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "SlipFree" => Mode::SlipFree,
            "StickFree" => Mode::StickFree,
            "SlipContact" => Mode::SlipContact,
            "StickContact" => Mode::StickContact,
            _ => return None,
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Continuous state of both bodies plus the discrete mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x1: f64,
    pub v1: f64,
    pub x2: f64,
    pub v2: f64,
    pub mode: Mode,
}

impl SimState {
    /// Relative displacement z = x₁ − x₂.
    pub fn z(&self) -> f64 {
        self.x1 - self.x2
    }

    /// Relative velocity ż = v₁ − v₂.
    pub fn z_dot(&self) -> f64 {
        self.v1 - self.v2
    }

    /// Penetration as seen by the contact law: zero in free modes by definition.
    pub fn penetration(&self, x_c: f64) -> f64 {
        if self.mode.is_contact() {
            crate::contact::penetration(self.x2, x_c)
        } else {
            0.0
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.x1.is_finite()
            && self.v1.is_finite()
            && self.x2.is_finite()
            && self.v2.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Impact,
    Separation,
    StickOnset,
    SlipOnset,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Impact => "Impact",
            EventKind::Separation => "Separation",
            EventKind::StickOnset => "StickOnset",
            EventKind::SlipOnset => "SlipOnset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Impact" => EventKind::Impact,
            "Separation" => EventKind::Separation,
            "StickOnset" => EventKind::StickOnset,
            "SlipOnset" => EventKind::SlipOnset,
            _ => return None,
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A localized guard crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub t_event: f64,
    /// State at the crossing, still in the pre-event mode.
    pub state: SimState,
    /// Approach speed into the frame; only set for impacts.
    pub v_in: Option<f64>,
}

/// One output sample: state plus derived penetration and contact force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub state: SimState,
    pub p: f64,
    pub f: f64,
}

/// Uniformly sampled simulation output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.state.t)
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn last_state(&self) -> Option<&SimState> {
        self.samples.last().map(|s| &s.state)
    }
}

/// Three-valued signum: 1, 0 or −1.
pub fn sgn(y: f64) -> Result<i8> {
    if !y.is_finite() {
        return Err(Error::NonFinite("sgn argument"));
    }
    Ok(if y > 0.0 {
        1
    } else if y < 0.0 {
        -1
    } else {
        0
    })
}

/// Signum with a dead band: 0 iff |y| ≤ eps.
pub fn sgn_banded(y: f64, eps: f64) -> Result<i8> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("band width must be > 0, got {eps}")));
    }
    if y.is_nan() {
        return Err(Error::NonFinite("sgn_banded argument"));
    }
    Ok(if y.abs() <= eps {
        0
    } else if y > 0.0 {
        1
    } else {
        -1
    })
}

/// Sign of a finite value known to be nonzero, falling back to +1 at zero.
pub(crate) fn sign_or_pos(y: f64) -> f64 {
    if y < 0.0 {
        -1.0
    } else {
        1.0
    }
}
