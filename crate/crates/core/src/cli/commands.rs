use std::fmt::Write as _;
use std::path::PathBuf;

use super::{CliError, RunConfig};
use crate::contact::{self, CycleProfile};
use crate::hybrid::{self, IntegratorConfig, Scenario, Terminal};
use crate::ident::{self, Bound, FitConfig, FitProblem, FreeParam, Weights};
use crate::model::{EventKind, Preset, SystemParams};
use crate::signal;

type CmdResult<T> = Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Runs the command named in `cfg` and returns a one-paragraph summary.
pub fn run(cfg: &RunConfig) -> CmdResult<String> {
    match cfg.command.as_str() {
        "simulate" => cmd_simulate(cfg),
        "hysteresis" => cmd_hysteresis(cfg),
        "fit" => cmd_fit(cfg),
        "process" => cmd_process(cfg),
        other => Err(config_err(format!("unknown command {other:?}"))),
    }
}

fn header(cfg: &RunConfig) -> Vec<String> {
    vec![format!("config {}", cfg.to_json())]
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn preset(cfg: &RunConfig) -> CmdResult<Preset> {
    Preset::by_name(&cfg.preset).ok_or_else(|| {
        config_err(format!(
            "unknown preset {:?}, expected one of {:?}",
            cfg.preset,
            Preset::NAMES
        ))
    })
}

/// Preset parameters with the overrides of `cfg` applied.
fn params(cfg: &RunConfig) -> CmdResult<SystemParams> {
    let mut p = preset(cfg)?.params;
    let overrides = [
        (cfg.k, &mut p.k),
        (cfg.alpha, &mut p.alpha),
        (cfg.n, &mut p.n),
        (cfg.xc, &mut p.x_c),
        (cfg.b, &mut p.b),
        (cfg.v_platform, &mut p.v_platform),
    ];
    for (value, slot) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    p.checked()?;
    Ok(p)
}

fn integrator(cfg: &RunConfig) -> CmdResult<IntegratorConfig> {
    let ic = IntegratorConfig {
        dt: cfg.dt,
        ..IntegratorConfig::default()
    };
    ic.validate()?;
    Ok(ic)
}

/// Scenario described by `cfg`, validated.
pub fn scenario_for(cfg: &RunConfig) -> CmdResult<Scenario> {
    let params = params(cfg)?;
    let fs = cfg.fs.unwrap_or(preset(cfg)?.sample_rate);
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(config_err(format!("fs must be > 0, got {fs}")));
    }
    if !(cfg.gap >= 0.0 && cfg.gap.is_finite()) {
        return Err(config_err(format!("gap must be >= 0, got {}", cfg.gap)));
    }
    let mut sc = match cfg.scenario.as_str() {
        "idle-impulse" => {
            if cfg.v_platform.is_some_and(|v| v != 0.0) {
                return Err(config_err("idle-impulse runs with the platform at rest"));
            }
            let v2 = cfg.v2.unwrap_or(1.0);
            if !v2.is_finite() {
                return Err(config_err("v2 must be finite"));
            }
            Scenario::idle_impulse(params, v2, cfg.gap)
        }
        "constant-drag" => {
            if cfg.v2.is_some() {
                return Err(config_err("v2 only applies to idle-impulse"));
            }
            Scenario::constant_drag(params, cfg.gap)
        }
        other => {
            return Err(config_err(format!(
                "unknown scenario {other:?}, expected idle-impulse or constant-drag"
            )))
        }
    };
    sc = sc.with_sample_dt(1.0 / fs);
    if let Some(t_end) = cfg.t_end {
        sc = sc.with_t_end(t_end);
    }
    sc.validate()?;
    Ok(sc)
}

fn cmd_simulate(cfg: &RunConfig) -> CmdResult<String> {
    let sc = scenario_for(cfg)?;
    let ic = integrator(cfg)?;
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(config_err(format!("noise must be >= 0, got {}", cfg.noise)));
    }
    let traj = hybrid::simulate(&sc, &ic)?;
    let pre = header(cfg);
    signal::export_trajectory(&traj, out_path(cfg, "trajectory.csv"), &pre)?;

    let mut log = String::new();
    for line in &pre {
        writeln!(log, "# {line}").unwrap();
    }
    for (i, e) in traj.events.iter().enumerate() {
        write!(
            log,
            "{:>4}  {:<10}  t={:.9} s  x2={:.9e} m  v2={:.6e} m/s",
            i + 1,
            e.kind.as_str(),
            e.t_event,
            e.state.x2,
            e.state.v2
        )
        .unwrap();
        if let Some(v) = e.v_in {
            write!(log, "  v_in={v:.6e} m/s").unwrap();
        }
        log.push('\n');
    }
    let count = |k| traj.events_of(k).count();
    let (impacts, separations) = (count(EventKind::Impact), count(EventKind::Separation));
    let rebounds = hybrid::rebound_excursions(&traj, sc.params.x_c);
    let terminal = match hybrid::terminal_regime(&traj, 0.1 * sc.t_end) {
        Terminal::SustainedContact => "sustained contact",
        Terminal::Stick => "stick",
        Terminal::Unsettled => "unsettled",
    };
    writeln!(log, "impacts: {impacts}").unwrap();
    writeln!(log, "separations: {separations}").unwrap();
    writeln!(log, "stick onsets: {}", count(EventKind::StickOnset)).unwrap();
    writeln!(log, "slip onsets: {}", count(EventKind::SlipOnset)).unwrap();
    let reb: Vec<String> = rebounds.iter().map(|r| format!("{r:.6e}")).collect();
    writeln!(log, "rebound excursions [m]: {}", reb.join(" ")).unwrap();
    writeln!(log, "terminal regime: {terminal}").unwrap();
    for w in &traj.warnings {
        writeln!(log, "warning: {w}").unwrap();
    }
    signal::write_text(out_path(cfg, "events.txt"), &log)?;

    if cfg.noise > 0.0 {
        let std = ident::amplitude_noise(&traj, cfg.noise);
        let m = ident::synthetic_trace(&traj, std, cfg.seed)?;
        let x1 = m.x1.as_deref().unwrap_or(&[]);
        signal::export_columns(
            out_path(cfg, "measured.csv"),
            &["t", "x1", "x2"],
            &[&m.t, x1, &m.x2],
            &pre,
        )?;
    }
    Ok(format!(
        "{} samples, {impacts} impacts, {separations} separations, {terminal}; wrote {}",
        traj.len(),
        cfg.out.display()
    ))
}

fn cmd_hysteresis(cfg: &RunConfig) -> CmdResult<String> {
    if cfg.alphas.is_empty() {
        return Err(config_err("alphas must list at least one value"));
    }
    for (i, a) in cfg.alphas.iter().enumerate() {
        if !(*a >= 0.0 && a.is_finite()) {
            return Err(config_err(format!("alpha values must be finite and >= 0, got {a}")));
        }
        if cfg.alphas[..i].contains(a) {
            return Err(config_err(format!("alpha {a} listed twice")));
        }
    }
    let base = params(cfg)?;
    let profile = CycleProfile {
        amplitude: cfg.amplitude,
        frequency: cfg.frequency,
        decay: cfg.decay,
        cycles: cfg.cycles,
        dt: cfg.profile_dt,
    };
    let p = profile.samples()?;
    let pre = header(cfg);

    let mut energies = Vec::with_capacity(cfg.alphas.len());
    for &alpha in &cfg.alphas {
        let params = SystemParams { alpha, ..base };
        params.checked()?;
        let trace = contact::hysteresis_trace(&p, profile.dt, &params)?;
        let name = format!("hysteresis_alpha_{alpha}.csv");
        signal::export_hysteresis(&trace, out_path(cfg, &name), &pre)?;
        energies.push((alpha, contact::loop_energy(&trace)?, name));
    }

    let mut text = String::new();
    for line in &pre {
        writeln!(text, "# {line}").unwrap();
    }
    writeln!(text, "alpha,loop_energy,file").unwrap();
    for (alpha, e, name) in &energies {
        writeln!(text, "{},{},{name}", signal::fmt_f64(*alpha), signal::fmt_f64(*e)).unwrap();
    }
    signal::write_text(out_path(cfg, "loop_energy.txt"), &text)?;
    let summary: Vec<String> = energies
        .iter()
        .map(|(a, e, _)| format!("alpha={a}: {e:.6e} J"))
        .collect();
    Ok(format!("loop energies {}; wrote {}", summary.join(", "), cfg.out.display()))
}

fn input_trace(cfg: &RunConfig) -> CmdResult<signal::MeasuredTrace> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| config_err(format!("{} needs --input", cfg.command)))?;
    if !path.is_file() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    Ok(signal::load_csv(path)?)
}

fn cmd_process(cfg: &RunConfig) -> CmdResult<String> {
    let trace = input_trace(cfg)?;
    let v2 = signal::reconstruct_velocity(&trace.x2, trace.fs, cfg.fc)?;
    signal::export_columns(
        out_path(cfg, "velocity.csv"),
        &["t", "x2", "v2"],
        &[&trace.t, &trace.x2, &v2],
        &header(cfg),
    )?;
    Ok(format!(
        "{} samples at {:.1} Hz, cutoff {} Hz; wrote {}",
        trace.len(),
        trace.fs,
        cfg.fc,
        cfg.out.display()
    ))
}

/// Splits `name=rest`, resolving the name to a free parameter.
fn keyed(spec: &str) -> CmdResult<(FreeParam, &str)> {
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("expected name=value, got {spec:?}")))?;
    let p = FreeParam::parse(name).ok_or_else(|| config_err(format!("unknown parameter {name:?}")))?;
    Ok((p, rest))
}

fn number(s: &str) -> CmdResult<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| config_err(format!("not a finite number: {s:?}")))
}

fn parse_bound(spec: &str) -> CmdResult<(FreeParam, Bound)> {
    let (p, rest) = keyed(spec)?;
    let (lo, hi) = rest
        .split_once(':')
        .ok_or_else(|| config_err(format!("bounds must read name=lo:hi, got {spec:?}")))?;
    let (lo, hi) = (number(lo)?, number(hi)?);
    if lo >= hi {
        return Err(config_err(format!("empty bound for {p}: {lo} >= {hi}")));
    }
    Ok((p, Bound::new(lo, hi)))
}

fn cmd_fit(cfg: &RunConfig) -> CmdResult<String> {
    let trace = input_trace(cfg)?;
    let template = scenario_for(cfg)?;
    let ic = integrator(cfg)?;
    let nominal = template.params;

    let mut free = Vec::new();
    for name in &cfg.free {
        let p = FreeParam::parse(name)
            .ok_or_else(|| config_err(format!("unknown free parameter {name:?}")))?;
        free.push((p, p.default_bound(p.get(&nominal))));
    }
    if free.is_empty() {
        return Err(config_err("no free parameters"));
    }
    for spec in &cfg.bounds {
        let (p, b) = parse_bound(spec)?;
        let slot = free
            .iter_mut()
            .find(|(q, _)| *q == p)
            .ok_or_else(|| config_err(format!("bound given for {p}, which is not free")))?;
        slot.1 = b;
    }
    let mut init: Vec<f64> = free
        .iter()
        .map(|(p, b)| p.get(&nominal).clamp(b.lo, b.hi))
        .collect();
    for spec in &cfg.init {
        let (p, v) = keyed(spec)?;
        let i = free
            .iter()
            .position(|(q, _)| *q == p)
            .ok_or_else(|| config_err(format!("initial value given for {p}, which is not free")))?;
        init[i] = number(v)?;
    }

    let weights = Weights {
        velocity: cfg.velocity_weight,
        ..Weights::default()
    };
    let problem = FitProblem::new(trace, template, free.clone(), weights, ic)?;
    let fit_cfg = FitConfig {
        max_evals: cfg.max_evals,
        starts: cfg.starts,
        seed: cfg.seed,
        ..FitConfig::default()
    };
    let result = ident::fit(&problem, &init, &fit_cfg)?;

    let pre = header(cfg);
    let mut report = String::new();
    for line in &pre {
        writeln!(report, "# {line}").unwrap();
    }
    report.push_str(&result.report());
    signal::write_text(out_path(cfg, "fit_report.txt"), &report)?;
    signal::export_trajectory(&result.trace_hat, out_path(cfg, "fit_trajectory.csv"), &pre)?;

    if cfg.profile > 0 {
        let window = |fp: FreeParam| {
            free.iter()
                .find(|(q, _)| *q == fp)
                .map_or_else(|| fp.default_bound(fp.get(&nominal)), |(_, b)| *b)
        };
        let (kb, ab) = (window(FreeParam::K), window(FreeParam::Alpha));
        let n = cfg.profile.max(2);
        let grid = |b: Bound, geometric: bool| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let s = i as f64 / (n - 1) as f64;
                    if geometric && b.lo > 0.0 {
                        b.lo * (b.hi / b.lo).powf(s)
                    } else {
                        b.lo + s * (b.hi - b.lo)
                    }
                })
                .collect()
        };
        let surface = ident::profile_coupling(&problem, &grid(kb, true), &grid(ab, false))?;
        let mut text = String::new();
        for line in &pre {
            writeln!(text, "# {line}").unwrap();
        }
        text.push_str(&surface.to_csv());
        signal::write_text(out_path(cfg, "coupling_surface.csv"), &text)?;
    }

    let values: Vec<String> = result
        .params_hat
        .iter()
        .map(|(p, v)| format!("{p}={v:.6e}"))
        .collect();
    Ok(format!(
        "{}; rmse={:.3e} m; {} evaluations; converged={}; wrote {}",
        values.join(" "),
        result.rmse,
        result.n_evals,
        result.converged,
        cfg.out.display()
    ))
}
