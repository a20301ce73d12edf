//! Coulomb friction coupling between the active platform and the passive body.
//!
//! In slip the interface transmits a force of constant magnitude `b` opposing the
//! relative velocity ż = v₁ − v₂. In stick both bodies share one acceleration as long
//! as the friction force this requires stays within `b`; otherwise breakaway occurs
//! in the direction of the unbalanced force.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{sgn, sgn_banded, sign_or_pos, SimState, SystemParams};

/// Time profile used for the exogenous input `u(t)` or a prescribed acceleration.
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// How the active body moves.
#[derive(Clone)]
pub enum CouplingMode {
    /// Active body obeys its own feedback loop and feels the friction reaction:
    /// `(m₁ + m₂(1−|sgn ż|))ẍ₁ + a₁ẋ₁ + a₂x₁ + b·sgn(ż) = u(t)`.
    FullFeedback { u: Profile },
    /// Active body follows `ẍ₁ = f₁(t)` regardless of the friction reaction.
    RobustControlled { accel: Profile },
}

impl CouplingMode {
    /// Robustly controlled platform at constant velocity.
    pub fn constant_velocity() -> Self {
        CouplingMode::RobustControlled {
            accel: Arc::new(|_| 0.0),
        }
    }

    pub fn robust(accel: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CouplingMode::RobustControlled {
            accel: Arc::new(accel),
        }
    }

    pub fn full_feedback(u: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CouplingMode::FullFeedback { u: Arc::new(u) }
    }

    /// Common acceleration of both bodies when they stick, with contact force `f`
    /// acting on the passive body.
    pub fn stick_acceleration(&self, state: &SimState, params: &SystemParams, f: f64) -> f64 {
        match self {
            CouplingMode::RobustControlled { accel } => accel(state.t),
            CouplingMode::FullFeedback { u } => {
                (u(state.t) - params.a1 * state.v1 - params.a2 * state.x1 - f)
                    / (params.m1 + params.m2)
            }
        }
    }

    /// Friction force the interface must transmit to the passive body to keep stick.
    pub fn required_friction(&self, state: &SimState, params: &SystemParams, f: f64) -> f64 {
        params.m2 * self.stick_acceleration(state, params, f) + f
    }

    /// Slip direction that stick would break into: sign of the unbalanced force.
    pub fn breakaway_direction(&self, state: &SimState, params: &SystemParams, f: f64) -> f64 {
        sign_or_pos(self.required_friction(state, params, f))
    }

    /// Accelerations `(ẍ₁, ẍ₂)` in slip with friction sign `dir` = sgn(ż).
    pub fn slip_accelerations(
        &self,
        state: &SimState,
        params: &SystemParams,
        dir: f64,
        f: f64,
    ) -> (f64, f64) {
        let a_passive = (params.b * dir - f) / params.m2;
        let a_active = match self {
            CouplingMode::RobustControlled { accel } => accel(state.t),
            CouplingMode::FullFeedback { u } => {
                (u(state.t) - params.a1 * state.v1 - params.a2 * state.x1 - params.b * dir)
                    / params.m1
            }
        };
        (a_active, a_passive)
    }
}

impl fmt::Debug for CouplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingMode::FullFeedback { .. } => f.write_str("FullFeedback"),
            CouplingMode::RobustControlled { .. } => f.write_str("RobustControlled"),
        }
    }
}

impl Default for CouplingMode {
    fn default() -> Self {
        Self::constant_velocity()
    }
}

/// Whether stiction can supply the acceleration `required_accel` to the passive body.
///
/// The boundary `|a| = b/m₂` counts as holding.
pub fn stiction_holds(required_accel: f64, params: &SystemParams) -> bool {
    required_accel.abs() <= params.stiction_limit()
}

/// Accelerations of both bodies under full feedback coupling with input `u`, no contact.
///
/// The friction branch is taken from `state.mode`; in slip with ż exactly zero the
/// direction of the incipient relative motion is used.
pub fn coupled_accelerations(
    state: &SimState,
    params: &SystemParams,
    u: f64,
) -> Result<(f64, f64)> {
    params.checked()?;
    if !u.is_finite() {
        return Err(Error::NonFinite("input u"));
    }
    let drive = CouplingMode::full_feedback(move |_| u);
    if state.mode.is_stick() {
        let a = drive.stick_acceleration(state, params, 0.0);
        if stiction_holds(a, params) {
            return Ok((a, a));
        }
        let dir = drive.breakaway_direction(state, params, 0.0);
        return Ok(drive.slip_accelerations(state, params, dir, 0.0));
    }
    let dir = match sgn(state.z_dot())? {
        0 => drive.breakaway_direction(state, params, 0.0),
        s => f64::from(s),
    };
    Ok(drive.slip_accelerations(state, params, dir, 0.0))
}

/// Passive body acceleration from friction and a (non-negative) contact force.
///
/// Inside the stick band the body follows `active_accel` when stiction can provide
/// it; otherwise breakaway applies.
pub fn passive_acceleration(
    state: &SimState,
    params: &SystemParams,
    contact_force: f64,
    active_accel: f64,
    eps_v: f64,
) -> Result<f64> {
    if contact_force.is_nan() || contact_force < 0.0 {
        return Err(Error::invalid(format!(
            "contact force must be >= 0, got {contact_force}"
        )));
    }
    match sgn_banded(state.z_dot(), eps_v)? {
        0 => {
            let required = active_accel + contact_force / params.m2;
            if stiction_holds(required, params) {
                Ok(active_accel)
            } else {
                Ok((params.b * sign_or_pos(required) - contact_force) / params.m2)
            }
        }
        s => Ok((params.b * f64::from(s) - contact_force) / params.m2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;

    fn state(mode: Mode, v1: f64, v2: f64) -> SimState {
        SimState {
            t: 0.0,
            x1: 0.0,
            v1,
            x2: 0.0,
            v2,
            mode,
        }
    }

    #[test]
    fn equilibrium_in_stick() {
        let p = SystemParams::steel();
        let (a1, a2) = coupled_accelerations(&state(Mode::StickFree, 0.0, 0.0), &p, 0.0).unwrap();
        assert_eq!((a1, a2), (0.0, 0.0));
    }

    #[test]
    fn slip_with_negative_relative_velocity() {
        let p = SystemParams::aluminium();
        let (_, a2) = coupled_accelerations(&state(Mode::SlipFree, 0.0, 0.5), &p, 0.0).unwrap();
        assert!((a2 - (-4.6083)).abs() < 1e-4, "{a2}");
    }

    /// Searches the friction force that equalizes both accelerations.
    fn force_balance_oracle(p: &SystemParams, u: f64) -> Option<f64> {
        let steps = 200_000;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..=steps {
            let fr = -p.b + 2.0 * p.b * i as f64 / steps as f64;
            let gap = ((u - fr) / p.m1 - fr / p.m2).abs();
            if best.map_or(true, |(g, _)| gap < g) {
                best = Some((gap, fr));
            }
        }
        let (gap, fr) = best?;
        (gap < 1e-2).then_some(fr / p.m2)
    }

    #[test]
    fn stick_with_admissible_acceleration() {
        let p = SystemParams::aluminium();
        let u = 3.0 * (p.m1 + p.m2);
        let (a1, a2) = coupled_accelerations(&state(Mode::StickFree, 0.0, 0.0), &p, u).unwrap();
        assert!((a1 - 3.0).abs() < 1e-12);
        assert_eq!(a1, a2);
        let oracle = force_balance_oracle(&p, u).expect("stiction should hold");
        assert!((oracle - 3.0).abs() < 1e-3, "{oracle}");
    }

    #[test]
    fn stick_breaks_away_when_limit_exceeded() {
        let p = SystemParams::aluminium();
        let u = 10.0 * (p.m1 + p.m2);
        assert!(force_balance_oracle(&p, u).is_none());
        let (a1, a2) = coupled_accelerations(&state(Mode::StickFree, 0.0, 0.0), &p, u).unwrap();
        assert!((a2 - p.b / p.m2).abs() < 1e-12);
        assert!(a1 > a2);
    }

    #[test]
    fn coupled_accelerations_rejects_bad_params() {
        let p = SystemParams {
            b: -1.0,
            ..SystemParams::steel()
        };
        assert!(coupled_accelerations(&state(Mode::SlipFree, 1.0, 0.0), &p, 0.0).is_err());
    }

    #[test]
    fn passive_acceleration_cases() {
        let p = SystemParams::aluminium();
        let eps = 1e-4;
        let slip = state(Mode::SlipFree, 0.1, 0.0);
        let a = passive_acceleration(&slip, &p, 0.0, 0.0, eps).unwrap();
        assert!((a - 4.6083).abs() < 1e-4);
        let a = passive_acceleration(&slip, &p, 1.0, 0.0, eps).unwrap();
        assert!((a - (-37.058)).abs() < 1e-3, "{a}");
        let stick = state(Mode::StickFree, 0.1, 0.1);
        assert_eq!(passive_acceleration(&stick, &p, 0.0, 0.0, eps).unwrap(), 0.0);
        assert!(passive_acceleration(&stick, &p, -0.1, 0.0, eps).is_err());
    }

    #[test]
    fn stiction_boundary() {
        let steel = SystemParams::steel();
        let alu = SystemParams::aluminium();
        assert!(stiction_holds(0.0, &steel));
        assert!(stiction_holds(alu.b / alu.m2, &alu));
        assert!(stiction_holds(-alu.b / alu.m2, &alu));
        assert!(!stiction_holds(10.0, &alu));
    }

    #[test]
    fn slip_acceleration_is_coulomb() {
        let p = SystemParams::aluminium();
        let drive = CouplingMode::constant_velocity();
        for v2 in [-3.0, -0.5, 0.09, 0.0999] {
            let s = state(Mode::SlipFree, 0.1, v2);
            let (_, a2) = drive.slip_accelerations(&s, &p, sign_or_pos(s.z_dot()), 0.0);
            assert_eq!(a2, p.b / p.m2);
        }
        let s = state(Mode::SlipFree, 0.1, 0.5);
        let (_, a2) = drive.slip_accelerations(&s, &p, -1.0, 0.0);
        assert_eq!(a2, -p.b / p.m2);
    }
}
