//! Event-driven integration of the combined friction/impact hybrid system.
//!
//! Each discrete mode has a smooth vector field that is advanced with fixed-step
//! classical Runge-Kutta. Guard functions are checked at the end of every step; a
//! sign change triggers bisection on the step length, the mode switch is applied at
//! the localized state and integration resumes from there. The continuous state is
//! never reset except for the exact stick projection `v₂ := v₁`.
//!
//! Guards per mode:
//!
//! | mode      | guard                         | event        |
//! |-----------|-------------------------------|--------------|
//! | `*Free`   | `x₂ − X_c` rises above 0      | `Impact`     |
//! | `*Contact`| `x₂ − X_c` falls to 0         | `Separation` |
//! | `*Contact`| `1 + 1.5αṗ` falls to 0        | `Separation` |
//! | `Slip*`   | `sgn·(v₁ − v₂)` falls to 0    | `StickOnset` |
//! | `Stick*`  | `b − |F_required|` drops below 0 | `SlipOnset` |

use log::warn;

use crate::contact::{self, damping_factor, elastic_energy, raw_contact_force};
use crate::error::{Error, Result};
use crate::friction::{stiction_holds, CouplingMode};
use crate::model::{
    sign_or_pos, Event, EventKind, Mode, Sample, SimState, SystemParams, Trajectory,
    EPS_V_DEFAULT, SAMPLE_RATE_DEFAULT, TOL_EVENT_DEFAULT,
};

/// Slack on `x₂ ≥ X_c` accepted for states in a contact mode [m].
pub const EPS_X: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Base step [s].
    pub dt: f64,
    /// Width of the final bisection bracket [s].
    pub tol_event: f64,
    /// Stick band on the relative velocity [m/s].
    pub eps_v: f64,
    /// Events allowed within one base step before declaring chattering.
    pub max_events: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 2e-5,
            tol_event: TOL_EVENT_DEFAULT,
            eps_v: EPS_V_DEFAULT,
            max_events: 16,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.tol_event > 0.0 && self.tol_event < self.dt) {
            return Err(Error::invalid(format!(
                "tol_event must lie in (0, dt), got {}",
                self.tol_event
            )));
        }
        if !(self.eps_v > 0.0 && self.eps_v.is_finite()) {
            return Err(Error::invalid(format!("eps_v must be > 0, got {}", self.eps_v)));
        }
        if self.max_events == 0 {
            return Err(Error::invalid("max_events must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Platform at rest, passive body kicked toward the frame.
    IdleImpulse,
    /// Platform at constant velocity carrying the passive body into the frame.
    ConstantDrag,
    /// Anything else, e.g. a full feedback drive.
    Custom,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub initial: SimState,
    pub params: SystemParams,
    pub coupling: CouplingMode,
    pub t_end: f64,
    /// Output sample interval [s].
    pub dt: f64,
}

impl Scenario {
    /// Passive body starting `gap` before the frame, moving toward it at `speed`,
    /// on a platform at rest.
    pub fn idle_impulse(params: SystemParams, speed: f64, gap: f64) -> Self {
        let params = SystemParams {
            v_platform: 0.0,
            ..params
        };
        let initial = initial_state(&params, 0.0, 0.0, params.x_c - gap, speed.abs());
        Self {
            kind: ScenarioKind::IdleImpulse,
            initial,
            params,
            coupling: CouplingMode::constant_velocity(),
            t_end: 0.5,
            dt: 1.0 / SAMPLE_RATE_DEFAULT,
        }
    }

    /// Passive body resting on the platform `gap` before the frame while the
    /// platform moves at `params.v_platform`.
    pub fn constant_drag(params: SystemParams, gap: f64) -> Self {
        let v = params.v_platform;
        let initial = initial_state(&params, 0.0, v, params.x_c - gap, v);
        Self {
            kind: ScenarioKind::ConstantDrag,
            initial,
            params,
            coupling: CouplingMode::constant_velocity(),
            t_end: 5.0,
            dt: 1.0 / SAMPLE_RATE_DEFAULT,
        }
    }

    /// Arbitrary initial state and active-body drive.
    pub fn custom(params: SystemParams, coupling: CouplingMode, initial: SimState) -> Self {
        Self {
            kind: ScenarioKind::Custom,
            initial,
            params,
            coupling,
            t_end: 1.0,
            dt: 1.0 / SAMPLE_RATE_DEFAULT,
        }
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_sample_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Same scenario with new parameters; initial positions and velocities are kept.
    pub fn with_params(mut self, params: SystemParams) -> Self {
        self.params = params;
        let s = self.initial;
        self.initial = initial_state(&params, s.x1, s.v1, s.x2, s.v2);
        self.initial.t = s.t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.checked()?;
        if !self.initial.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("sample dt must be > 0, got {}", self.dt)));
        }
        match self.kind {
            ScenarioKind::IdleImpulse if self.params.v_platform != 0.0 || self.initial.v1 != 0.0 => {
                Err(Error::invalid("idle-impulse scenario requires a platform at rest"))
            }
            ScenarioKind::ConstantDrag if self.initial.v1 != self.params.v_platform => Err(
                Error::invalid("constant-drag scenario must start at the platform velocity"),
            ),
            _ => Ok(()),
        }
    }
}

/// State at t = 0 with the mode inferred from geometry and the stick band.
pub fn initial_state(params: &SystemParams, x1: f64, v1: f64, x2: f64, v2: f64) -> SimState {
    let contact = x2 > params.x_c;
    let stick = (v1 - v2).abs() <= EPS_V_DEFAULT;
    SimState {
        t: 0.0,
        x1,
        v1,
        x2,
        v2: if stick { v1 } else { v2 },
        mode: Mode::from_flags(stick, contact),
    }
}

/// ½m₂v₂² plus the elastic energy stored in the frame.
pub fn mechanical_energy(state: &SimState, params: &SystemParams) -> f64 {
    0.5 * params.m2 * state.v2 * state.v2 + elastic_energy(state.penetration(params.x_c), params)
}

type GuardFn = fn(&Simulator<'_>, &SimState, f64) -> f64;

/// Guard function with its crossing rule and the event it raises.
struct Guard {
    kind: EventKind,
    value: GuardFn,
    /// true: crossing is `prev ≤ 0 → cur > 0`; false: `prev > 0 → cur ≤ 0`.
    rising: bool,
}

impl Guard {
    fn crossed(&self, prev: f64, cur: f64) -> bool {
        if self.rising {
            prev <= 0.0 && cur > 0.0
        } else {
            prev > 0.0 && cur <= 0.0
        }
    }
}

fn g_entry(sim: &Simulator<'_>, s: &SimState, _: f64) -> f64 {
    let d = s.x2 - sim.params.x_c;
    // after a force-limited separation the body may still sit beyond X_c;
    // it re-enters as soon as it moves inward again
    if d > 0.0 {
        s.v2
    } else {
        d
    }
}

fn g_exit(sim: &Simulator<'_>, s: &SimState, _: f64) -> f64 {
    s.x2 - sim.params.x_c
}

fn g_force(sim: &Simulator<'_>, s: &SimState, _: f64) -> f64 {
    damping_factor(s.v2, sim.params)
}

fn g_stick(_: &Simulator<'_>, s: &SimState, dir: f64) -> f64 {
    dir * s.z_dot()
}

fn g_slip(sim: &Simulator<'_>, s: &SimState, _: f64) -> f64 {
    let f = sim.contact_force(s);
    sim.params.b - sim.coupling.required_friction(s, sim.params, f).abs()
}

const IMPACT: Guard = Guard {
    kind: EventKind::Impact,
    value: g_entry,
    rising: true,
};
const EXIT: Guard = Guard {
    kind: EventKind::Separation,
    value: g_exit,
    rising: false,
};
const RELEASE: Guard = Guard {
    kind: EventKind::Separation,
    value: g_force,
    rising: false,
};
const STICK: Guard = Guard {
    kind: EventKind::StickOnset,
    value: g_stick,
    rising: false,
};
const SLIP: Guard = Guard {
    kind: EventKind::SlipOnset,
    value: g_slip,
    rising: false,
};

fn priority(kind: EventKind) -> u8 {
    match kind {
        EventKind::Impact => 0,
        EventKind::Separation => 1,
        EventKind::StickOnset => 2,
        EventKind::SlipOnset => 3,
    }
}

/// Integrator bound to one parameter set and drive.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    pub params: &'a SystemParams,
    pub coupling: &'a CouplingMode,
    pub cfg: IntegratorConfig,
}

impl<'a> Simulator<'a> {
    pub fn new(params: &'a SystemParams, coupling: &'a CouplingMode, cfg: IntegratorConfig) -> Self {
        Self {
            params,
            coupling,
            cfg,
        }
    }

    /// Clamped contact force for a state; zero in free modes.
    pub fn contact_force(&self, s: &SimState) -> f64 {
        if !s.mode.is_contact() {
            return 0.0;
        }
        let p = contact::penetration(s.x2, self.params.x_c);
        raw_contact_force(p, s.v2, self.params).max(0.0)
    }

    /// Friction sign used while slipping: sgn(ż), or the breakaway direction when ż = 0.
    pub fn slip_direction(&self, s: &SimState) -> f64 {
        let zd = s.z_dot();
        if zd != 0.0 {
            sign_or_pos(zd)
        } else {
            self.coupling
                .breakaway_direction(s, self.params, self.contact_force(s))
        }
    }

    fn derivative(&self, s: &SimState, dir: f64) -> [f64; 4] {
        let f = self.contact_force(s);
        if s.mode.is_stick() {
            let a = self.coupling.stick_acceleration(s, self.params, f);
            [s.v1, a, s.v2, a]
        } else {
            let (a1, a2) = self.coupling.slip_accelerations(s, self.params, dir, f);
            [s.v1, a1, s.v2, a2]
        }
    }

    /// One classical RK4 step of length `h` in the current mode with the slip
    /// direction frozen at `dir`.
    fn rk4(&self, s: &SimState, h: f64, dir: f64) -> SimState {
        let at = |k: &[f64; 4], c: f64| SimState {
            t: s.t + c * h,
            x1: s.x1 + c * h * k[0],
            v1: s.v1 + c * h * k[1],
            x2: s.x2 + c * h * k[2],
            v2: s.v2 + c * h * k[3],
            mode: s.mode,
        };
        let k1 = self.derivative(s, dir);
        let k2 = self.derivative(&at(&k1, 0.5), dir);
        let k3 = self.derivative(&at(&k2, 0.5), dir);
        let k4 = self.derivative(&at(&k3, 1.0), dir);
        let inc = |i: usize| h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        let mut out = SimState {
            t: s.t + h,
            x1: s.x1 + inc(0),
            v1: s.v1 + inc(1),
            x2: s.x2 + inc(2),
            v2: s.v2 + inc(3),
            mode: s.mode,
        };
        if s.mode.is_stick() {
            out.v2 = out.v1;
        }
        out
    }

    /// Advances by `h` without looking at guards.
    pub fn advance(&self, s: &SimState, h: f64) -> SimState {
        self.rk4(s, h, self.slip_direction(s))
    }

    pub fn check_consistent(&self, s: &SimState) -> Result<()> {
        let bad = |reason: String| {
            Err(Error::ModeInconsistent {
                mode: s.mode,
                t: s.t,
                reason,
            })
        };
        if s.mode.is_stick() && s.z_dot().abs() > self.cfg.eps_v {
            return bad(format!("|v1 - v2| = {} exceeds stick band", s.z_dot().abs()));
        }
        if s.mode.is_contact() && s.x2 < self.params.x_c - EPS_X {
            return bad(format!("x2 = {} lies before the frame", s.x2));
        }
        Ok(())
    }

    /// One base step of length `cfg.dt`. Guards are not inspected; use
    /// [`detect_and_locate`](Self::detect_and_locate) on the result.
    pub fn step(&self, s: &SimState) -> Result<SimState> {
        self.check_consistent(s)?;
        let next = self.advance(s, self.cfg.dt);
        if !next.is_finite() {
            return Err(Error::NonFiniteState { t: next.t });
        }
        Ok(next)
    }

    fn guards(mode: Mode) -> [&'static Guard; 3] {
        match (mode.is_contact(), mode.is_stick()) {
            (false, false) => [&IMPACT, &STICK, &STICK],
            (false, true) => [&IMPACT, &SLIP, &SLIP],
            (true, false) => [&EXIT, &RELEASE, &STICK],
            (true, true) => [&EXIT, &RELEASE, &SLIP],
        }
    }

    /// Finds the earliest guard crossing between `prev` and `next` (one step of the
    /// current mode apart) and localizes it by bisection to `cfg.tol_event`.
    pub fn detect_and_locate(&self, prev: &SimState, next: &SimState) -> Result<Option<Event>> {
        if next.mode != prev.mode {
            return Err(Error::invalid("detect_and_locate needs states of one mode"));
        }
        let h = next.t - prev.t;
        let dir = self.slip_direction(prev);
        let mut best: Option<(f64, EventKind, SimState)> = None;
        let guards = Self::guards(prev.mode);
        for (i, g) in guards.iter().enumerate() {
            if guards[..i].iter().any(|o| std::ptr::eq(*o, *g)) {
                continue;
            }
            let g0 = (g.value)(self, prev, dir);
            if !g.crossed(g0, (g.value)(self, next, dir)) {
                continue;
            }
            let (mut lo, mut hi) = (0.0, h);
            let mut at_hi = *next;
            while hi - lo > self.cfg.tol_event {
                let mid = 0.5 * (lo + hi);
                let s = self.rk4(prev, mid, dir);
                if g.crossed(g0, (g.value)(self, &s, dir)) {
                    hi = mid;
                    at_hi = s;
                } else {
                    lo = mid;
                }
            }
            let better = match &best {
                None => true,
                Some((t, kind, _)) => {
                    if (hi - t).abs() <= self.cfg.tol_event {
                        priority(g.kind) < priority(*kind)
                    } else {
                        hi < *t
                    }
                }
            };
            if better {
                best = Some((hi, g.kind, at_hi));
            }
        }
        Ok(best.map(|(_, kind, state)| Event {
            kind,
            t_event: state.t,
            state,
            v_in: (kind == EventKind::Impact).then_some(state.v2),
        }))
    }

    /// Switches the mode at a localized event. Positions and velocities are
    /// continuous; only stick onset projects `v₂ := v₁`.
    pub fn apply_event(&self, event: &Event) -> Result<SimState> {
        let mut s = event.state;
        let mode = s.mode;
        let inadmissible = |name| {
            Err(Error::InadmissibleTransition {
                event: name,
                mode,
            })
        };
        match event.kind {
            EventKind::Impact => {
                if mode.is_contact() {
                    return inadmissible("Impact");
                }
                s.mode = mode.with_contact(true);
            }
            EventKind::Separation => {
                if !mode.is_contact() {
                    return inadmissible("Separation");
                }
                s.mode = mode.with_contact(false);
            }
            EventKind::StickOnset => {
                if mode.is_stick() {
                    return inadmissible("StickOnset");
                }
                s.v2 = s.v1;
            }
            EventKind::SlipOnset => {
                if !mode.is_stick() {
                    return inadmissible("SlipOnset");
                }
                s.mode = mode.with_stick(false);
                return Ok(s);
            }
        }
        // settle the friction state at the new contact configuration
        if s.z_dot().abs() <= self.cfg.eps_v {
            let f = self.contact_force(&s);
            let required = self.coupling.required_friction(&s, self.params, f) / self.params.m2;
            let stick = stiction_holds(required, self.params);
            if stick {
                s.v2 = s.v1;
            }
            s.mode = s.mode.with_stick(stick);
        } else {
            s.mode = s.mode.with_stick(false);
        }
        Ok(s)
    }

    /// Integrates from `initial` to `t_end`, recording every event and a sample
    /// every `sample_dt` (an integer multiple of `cfg.dt`).
    pub fn run(&self, initial: &SimState, t_end: f64, sample_dt: f64) -> Result<Trajectory> {
        self.params.checked()?;
        self.cfg.validate()?;
        let mut traj = Trajectory {
            dt: sample_dt,
            ..Trajectory::default()
        };
        if t_end == 0.0 {
            return Ok(traj);
        }
        let ratio = sample_dt / self.cfg.dt;
        let stride = ratio.round();
        if stride < 1.0 || (ratio - stride).abs() > 1e-6 * stride {
            return Err(Error::invalid(format!(
                "sample interval {sample_dt} is not a multiple of the step {}",
                self.cfg.dt
            )));
        }
        let stride = stride as u64;
        let steps = (t_end / self.cfg.dt * (1.0 + 1e-12)).floor() as u64;
        let t0 = initial.t;

        let mut state = *initial;
        self.check_consistent(&state)?;
        traj.samples.push(self.sample(&state));
        for i in 1..=steps {
            let t_target = t0 + i as f64 * self.cfg.dt;
            let mut count = 0;
            loop {
                let h = t_target - state.t;
                if h <= 1e-3 * self.cfg.tol_event {
                    break;
                }
                self.check_consistent(&state)?;
                let next = self.advance(&state, h);
                if !next.is_finite() {
                    return Err(Error::NonFiniteState { t: next.t });
                }
                match self.detect_and_locate(&state, &next)? {
                    None => {
                        state = next;
                        break;
                    }
                    Some(ev) => {
                        count += 1;
                        if count > self.cfg.max_events {
                            return Err(Error::Chattering {
                                t: ev.t_event,
                                cap: self.cfg.max_events,
                            });
                        }
                        if let Some(v) = ev.v_in.filter(|v| *v > self.params.omega_max) {
                            let msg = format!(
                                "impact speed {v:.4} m/s at t = {:.6} s exceeds the validity bound {} m/s",
                                ev.t_event, self.params.omega_max
                            );
                            warn!("{msg}");
                            traj.warnings.push(msg);
                        }
                        state = self.apply_event(&ev)?;
                        traj.events.push(ev);
                    }
                }
            }
            state.t = t_target;
            if i % stride == 0 {
                traj.samples.push(self.sample(&state));
            }
        }
        Ok(traj)
    }

    fn sample(&self, s: &SimState) -> Sample {
        Sample {
            state: *s,
            p: s.penetration(self.params.x_c),
            f: self.contact_force(s),
        }
    }
}

/// Runs a scenario.
pub fn simulate(scenario: &Scenario, cfg: &IntegratorConfig) -> Result<Trajectory> {
    scenario.validate()?;
    Simulator::new(&scenario.params, &scenario.coupling, *cfg).run(
        &scenario.initial,
        scenario.t_end,
        scenario.dt,
    )
}

/// Largest retreat from the frame after each separation, up to the next impact.
pub fn rebound_excursions(traj: &Trajectory, x_c: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let events: Vec<&Event> = traj
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Impact | EventKind::Separation))
        .collect();
    for (i, e) in events.iter().enumerate() {
        if e.kind != EventKind::Separation {
            continue;
        }
        let t_next = events
            .get(i + 1)
            .map_or(f64::INFINITY, |n| n.t_event);
        let min_x = traj
            .samples
            .iter()
            .filter(|s| s.state.t > e.t_event && s.state.t < t_next)
            .map(|s| s.state.x2)
            .fold(e.state.x2, f64::min);
        out.push(x_c - min_x);
    }
    out
}

/// How a trajectory ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// Pressed against the frame with no further impacts or separations.
    SustainedContact,
    /// Riding on the platform without contact.
    Stick,
    /// Still moving freely or bouncing.
    Unsettled,
}

/// Classifies the end of a trajectory; `quiet` is the trailing window [s] that
/// must be free of impacts and separations.
pub fn terminal_regime(traj: &Trajectory, quiet: f64) -> Terminal {
    let Some(last) = traj.last_state() else {
        return Terminal::Unsettled;
    };
    let busy = traj.events.iter().any(|e| {
        matches!(e.kind, EventKind::Impact | EventKind::Separation) && e.t_event > last.t - quiet
    });
    match (busy, last.mode) {
        (false, m) if m.is_contact() => Terminal::SustainedContact,
        (false, Mode::StickFree) => Terminal::Stick,
        _ => Terminal::Unsettled,
    }
}
