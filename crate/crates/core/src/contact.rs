//! Hunt-Crossley vibro-impact contact against the fixed frame.
//!
//! The contact force `f = λ·pⁿ·ṗ + k·pⁿ` with `λ = 1.5·α·k` vanishes together with
//! the penetration `p`, so it is zero at both the impact and the separation instant.
//! Over a closed penetration cycle the damping term traces a hysteresis loop whose
//! area is the energy dissipated in the frame.

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::signal;

/// Penetration tolerance for a trace to count as starting/ending at the origin [m].
pub const CLOSURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSample {
    /// Penetration [m].
    pub p: f64,
    /// Penetration rate [m/s].
    pub p_dot: f64,
    /// Contact force [N].
    pub f: f64,
}

/// `½(1 + sgn(x₂ − X_c))(x₂ − X_c)`, i.e. `max(x₂ − X_c, 0)`.
pub fn penetration(x2: f64, x_c: f64) -> f64 {
    let d = x2 - x_c;
    if d > 0.0 {
        d
    } else {
        0.0
    }
}

/// Unclamped Hunt-Crossley force; negative during fast withdrawal.
pub fn raw_contact_force(p: f64, p_dot: f64, params: &SystemParams) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let pn = p.powf(params.n);
    params.lambda() * pn * p_dot + params.k * pn
}

/// Hunt-Crossley contact force, clamped at zero (the frame never pulls).
pub fn contact_force(p: f64, p_dot: f64, params: &SystemParams) -> Result<f64> {
    if p.is_nan() || p < 0.0 {
        return Err(Error::invalid(format!("penetration must be >= 0, got {p}")));
    }
    if !p_dot.is_finite() {
        return Err(Error::NonFinite("penetration rate"));
    }
    Ok(raw_contact_force(p, p_dot, params).max(0.0))
}

/// Factor `1 + 1.5·α·ṗ` whose sign decides whether the raw force is positive.
pub fn damping_factor(p_dot: f64, params: &SystemParams) -> f64 {
    1.0 + 1.5 * params.alpha * p_dot
}

/// Velocity-dependent restitution `e = 1 − α·v_in`, limited to `[0, 1]`.
pub fn restitution_coefficient(v_in: f64, alpha: f64) -> f64 {
    (1.0 - alpha * v_in).clamp(0.0, 1.0)
}

/// Elastic energy stored at penetration `p`: `k·pⁿ⁺¹/(n+1)`.
pub fn elastic_energy(p: f64, params: &SystemParams) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    params.k * p.powf(params.n + 1.0) / (params.n + 1.0)
}

/// Builds the `(p, ṗ, f)` map for a sampled penetration history.
pub fn hysteresis_trace(
    p_profile: &[f64],
    dt: f64,
    params: &SystemParams,
) -> Result<Vec<ContactSample>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if let Some((i, p)) = p_profile
        .iter()
        .enumerate()
        .find(|(_, p)| p.is_nan() || **p < 0.0)
    {
        return Err(Error::invalid(format!(
            "negative penetration {p} at index {i}"
        )));
    }
    if p_profile.is_empty() {
        return Ok(Vec::new());
    }
    let p_dot = if p_profile.len() >= 3 {
        signal::differentiate(p_profile, 1.0 / dt)?
    } else {
        vec![0.0; p_profile.len()]
    };
    p_profile
        .iter()
        .zip(&p_dot)
        .map(|(&p, &pd)| {
            Ok(ContactSample {
                p,
                p_dot: pd,
                f: contact_force(p, pd, params)?,
            })
        })
        .collect()
}

/// Dissipated energy `∮ f dp` over a trace of closed penetration cycles
/// (trapezoidal rule).
pub fn loop_energy(trace: &[ContactSample]) -> Result<f64> {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Ok(0.0);
    };
    if first.p.abs() > CLOSURE_TOL || last.p.abs() > CLOSURE_TOL {
        return Err(Error::UnclosedCycle {
            start: first.p,
            end: last.p,
        });
    }
    Ok(trace
        .windows(2)
        .map(|w| 0.5 * (w[0].f + w[1].f) * (w[1].p - w[0].p))
        .sum())
}

/// Per-cycle dissipated energies; a cycle runs between consecutive returns to p = 0.
pub fn cycle_energies(trace: &[ContactSample]) -> Result<Vec<f64>> {
    loop_energy(trace)?;
    let mut out = Vec::new();
    let mut start = None;
    for (i, s) in trace.iter().enumerate() {
        let at_origin = s.p.abs() <= CLOSURE_TOL;
        match (start, at_origin) {
            (None, false) if i > 0 => start = Some(i - 1),
            (Some(s0), true) => {
                out.push(loop_energy(&trace[s0..=i])?);
                start = None;
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Rectified, exponentially decaying sinusoid used as a penetration driver:
/// `p(t) = A·e^(−t/τ)·max(sin 2πft, 0)` over an integer number of periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleProfile {
    pub amplitude: f64,
    pub frequency: f64,
    pub decay: f64,
    pub cycles: u32,
    pub dt: f64,
}

impl Default for CycleProfile {
    fn default() -> Self {
        Self {
            amplitude: 0.01,
            frequency: 10.0,
            decay: 0.2,
            cycles: 5,
            dt: 1e-4,
        }
    }
}

impl CycleProfile {
    pub fn samples(&self) -> Result<Vec<f64>> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.amplitude) && ok(self.frequency) && ok(self.decay) && ok(self.dt)) {
            return Err(Error::invalid(format!("invalid cycle profile {self:?}")));
        }
        let steps = (f64::from(self.cycles) / (self.frequency * self.dt)).round() as usize;
        let w = 2.0 * std::f64::consts::PI * self.frequency;
        let mut p: Vec<f64> = (0..=steps)
            .map(|i| {
                let t = i as f64 * self.dt;
                self.amplitude * (-t / self.decay).exp() * (w * t).sin().max(0.0)
            })
            .collect();
        // sin(2πN) is a rounding residue, not a real penetration
        if let Some(last) = p.last_mut() {
            *last = 0.0;
        }
        Ok(p)
    }
}
