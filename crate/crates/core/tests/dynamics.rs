use impact_pair::contact::{self, ContactSample};
use impact_pair::friction::CouplingMode;
use impact_pair::hybrid::{self, initial_state, IntegratorConfig, Scenario};
use impact_pair::{EventKind, Mode, SimState, SystemParams};
use proptest::prelude::*;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

/// Step response of `m·x'' + c·x' + s·x = u` from rest, underdamped case.
fn damped_step(m: f64, c: f64, s: f64, u: f64, t: f64) -> f64 {
    let wn = (s / m).sqrt();
    let zeta = c / (2.0 * (s * m).sqrt());
    assert!(zeta < 1.0);
    let wd = wn * (1.0 - zeta * zeta).sqrt();
    u / s * (1.0 - (-zeta * wn * t).exp() * ((wd * t).cos() + zeta * wn / wd * (wd * t).sin()))
}

#[test]
fn full_feedback_stick_moves_as_one_body() {
    let p = SystemParams::steel();
    let u = 2.0;
    let x2_0 = p.x_c - 1.0;
    let initial = SimState {
        x1: 0.0,
        ..initial_state(&p, 0.0, 0.0, x2_0, 0.0)
    };
    assert_eq!(initial.mode, Mode::StickFree);
    let sc = Scenario::custom(p, CouplingMode::full_feedback(move |_| u), initial).with_t_end(1.0);
    let traj = hybrid::simulate(&sc, &cfg()).unwrap();
    assert!(traj.events.is_empty(), "{:?}", traj.events);
    for s in &traj.samples {
        let x = damped_step(p.m1 + p.m2, p.a1, p.a2, u, s.state.t);
        assert!((s.state.x1 - x).abs() < 1e-6, "t = {}", s.state.t);
        assert!((s.state.x2 - x2_0 - x).abs() < 1e-6);
        assert_eq!(s.state.v1, s.state.v2);
    }
}

#[test]
fn stick_survives_admissible_platform_acceleration() {
    let p = SystemParams::aluminium();
    let limit = p.b / p.m2;
    let drive = CouplingMode::robust(move |t| 0.95 * limit * (25.0 * t).sin());
    let initial = initial_state(&p, 0.0, 0.0, p.x_c - 1.0, 0.0);
    let traj = hybrid::simulate(&Scenario::custom(p, drive, initial).with_t_end(1.0), &cfg()).unwrap();
    assert!(traj.events.is_empty(), "{:?}", traj.events);
    assert!(traj.samples.iter().all(|s| s.state.mode == Mode::StickFree && s.state.v1 == s.state.v2));
}

#[test]
fn stick_breaks_under_excess_platform_acceleration() {
    let p = SystemParams::aluminium();
    let limit = p.b / p.m2;
    let drive = CouplingMode::robust(move |t| 1.5 * limit * (25.0 * t).sin());
    let initial = initial_state(&p, 0.0, 0.0, p.x_c - 1.0, 0.0);
    let traj = hybrid::simulate(&Scenario::custom(p, drive, initial).with_t_end(0.5), &cfg()).unwrap();
    let slip = traj.events_of(EventKind::SlipOnset).next().expect("breakaway");
    // breakaway when 1.5·limit·sin(25t) first exceeds the limit
    let t_oracle = (1.0f64 / 1.5).asin() / 25.0;
    assert!((slip.t_event - t_oracle).abs() < 1e-6, "{} vs {t_oracle}", slip.t_event);
}

#[test]
fn step_halving_through_events_converges() {
    let p = SystemParams::steel();
    let sc = Scenario::idle_impulse(p, 1.0, 0.01).with_t_end(0.1);
    let end = |dt: f64| {
        let traj = hybrid::simulate(&sc, &IntegratorConfig { dt, ..cfg() }).unwrap();
        *traj.last_state().unwrap()
    };
    let (a, b, c) = (end(4e-5), end(2e-5), end(1e-5));
    let d1 = (a.x2 - b.x2).abs();
    let d2 = (b.x2 - c.x2).abs();
    assert!(d2 <= d1 / 2.0 || d2 < 1e-12, "{d1} {d2}");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let sc = Scenario::constant_drag(SystemParams::aluminium(), 0.01).with_t_end(1.0);
    let a = hybrid::simulate(&sc, &cfg()).unwrap();
    let b = hybrid::simulate(&sc, &cfg()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loop_energy_matches_kinetic_energy_loss() {
    let p = SystemParams {
        alpha: 0.3,
        b: 1e-6,
        ..SystemParams::steel()
    };
    let initial = SimState {
        t: 0.0,
        x1: 0.0,
        v1: 0.0,
        x2: p.x_c - 1e-4,
        v2: 0.8,
        mode: Mode::SlipFree,
    };
    let dt = cfg().dt;
    let sc = Scenario::custom(p, CouplingMode::constant_velocity(), initial)
        .with_t_end(0.03)
        .with_sample_dt(dt);
    let traj = hybrid::simulate(&sc, &cfg()).unwrap();
    let imp = traj.events_of(EventKind::Impact).next().unwrap();
    let sep = traj.events_of(EventKind::Separation).next().unwrap();
    let mut trace = vec![ContactSample { p: 0.0, p_dot: imp.state.v2, f: 0.0 }];
    trace.extend(
        traj.samples
            .iter()
            .filter(|s| s.state.t > imp.t_event && s.state.t < sep.t_event)
            .map(|s| ContactSample { p: s.p, p_dot: s.state.v2, f: s.f }),
    );
    trace.push(ContactSample { p: 0.0, p_dot: sep.state.v2, f: 0.0 });
    let loop_e = contact::loop_energy(&trace).unwrap();
    let ke_loss = 0.5 * p.m2 * (imp.state.v2.powi(2) - sep.state.v2.powi(2));
    assert!(loop_e > 0.0);
    assert!((loop_e - ke_loss).abs() <= 1e-3 * ke_loss, "{loop_e} vs {ke_loss}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn idle_impulse_energy_never_grows(v0 in 0.2f64..1.5, alpha in 0.0f64..1.0, gap in 1e-3f64..0.05) {
        let p = SystemParams { alpha, ..SystemParams::steel() };
        let sc = Scenario::idle_impulse(p, v0, gap).with_t_end(0.3);
        let traj = hybrid::simulate(&sc, &cfg()).unwrap();
        let e: Vec<f64> = traj.samples.iter().map(|s| hybrid::mechanical_energy(&s.state, &p)).collect();
        for w in e.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-6), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn samples_respect_mode_invariants(v0 in 0.2f64..1.5, alpha in 0.0f64..1.0) {
        let p = SystemParams { alpha, ..SystemParams::aluminium() };
        let sc = Scenario::idle_impulse(p, v0, 0.005).with_t_end(0.2);
        let traj = hybrid::simulate(&sc, &cfg()).unwrap();
        for s in &traj.samples {
            let st = s.state;
            if st.mode.is_stick() {
                prop_assert!(st.z_dot().abs() <= cfg().eps_v);
            }
            if st.mode.is_contact() {
                prop_assert!(st.x2 >= p.x_c - hybrid::EPS_X);
                prop_assert!(s.f >= 0.0);
            } else {
                prop_assert_eq!(s.p, 0.0);
            }
        }
        let ts: Vec<f64> = traj.times().collect();
        prop_assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }
}
