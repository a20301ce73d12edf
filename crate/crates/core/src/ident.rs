//! Identification of contact parameters from a measured position trace.
//!
//! The objective simulates the scenario with candidate parameters and compares the
//! passive-body position with the measurement sample by sample. Impact and
//! separation times move with the parameters, so the objective is only piecewise
//! smooth; it is minimized with a bounded Nelder-Mead simplex, optionally from
//! several seeded starting points.
//!
//! `α` and `k` enter the contact force as a product through `λ = 1.5αk`, which
//! shows up as a curved valley of the objective. [`profile_coupling`] evaluates
//! the objective on a `(k, α)` grid to make that valley visible.

use std::cell::Cell;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{simulate, IntegratorConfig, Scenario};
use crate::model::{SystemParams, Trajectory};
use crate::signal::{self, MeasuredTrace};

/// Objective value returned for candidates whose simulation fails.
pub const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    K,
    Alpha,
    Xc,
    B,
    N,
}

impl FreeParam {
    pub fn name(self) -> &'static str {
        match self {
            FreeParam::K => "k",
            FreeParam::Alpha => "alpha",
            FreeParam::Xc => "x_c",
            FreeParam::B => "b",
            FreeParam::N => "n",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim() {
            "k" => FreeParam::K,
            "alpha" => FreeParam::Alpha,
            "x_c" | "xc" => FreeParam::Xc,
            "b" => FreeParam::B,
            "n" => FreeParam::N,
            _ => return None,
        })
    }

    pub fn get(self, p: &SystemParams) -> f64 {
        match self {
            FreeParam::K => p.k,
            FreeParam::Alpha => p.alpha,
            FreeParam::Xc => p.x_c,
            FreeParam::B => p.b,
            FreeParam::N => p.n,
        }
    }

    pub fn set(self, p: &mut SystemParams, v: f64) {
        match self {
            FreeParam::K => p.k = v,
            FreeParam::Alpha => p.alpha = v,
            FreeParam::Xc => p.x_c = v,
            FreeParam::B => p.b = v,
            FreeParam::N => p.n = v,
        }
    }

    /// Search window used when none is given: a factor of 4 around positive values,
    /// ±1 mm around the impact position.
    pub fn default_bound(self, nominal: f64) -> Bound {
        match self {
            FreeParam::Xc => Bound::new(nominal - 1e-3, nominal + 1e-3),
            FreeParam::N => Bound::new(1.0, 2.0),
            FreeParam::Alpha if nominal == 0.0 => Bound::new(0.0, 1.0),
            _ => Bound::new(nominal / 4.0, nominal * 4.0),
        }
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn to_unit(self, x: f64) -> f64 {
        (x - self.lo) / (self.hi - self.lo)
    }

    fn from_unit(self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    pub fn contains(self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Relative weights of the position and (optional) velocity residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub position: f64,
    pub velocity: Option<f64>,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            position: 1.0,
            velocity: None,
        }
    }
}

/// A measured trace, the scenario that produced it and the parameters to adjust.
#[derive(Debug, Clone)]
pub struct FitProblem {
    trace: MeasuredTrace,
    template: Scenario,
    free: Vec<(FreeParam, Bound)>,
    weights: Weights,
    integrator: IntegratorConfig,
    measured_v: Option<Vec<f64>>,
}

impl FitProblem {
    /// `template` supplies the known constants and initial state; its time
    /// horizon and sampling are taken from the trace.
    pub fn new(
        trace: MeasuredTrace,
        template: Scenario,
        free: Vec<(FreeParam, Bound)>,
        weights: Weights,
        integrator: IntegratorConfig,
    ) -> Result<Self> {
        if free.is_empty() {
            return Err(Error::invalid("at least one free parameter is required"));
        }
        for (i, (p, b)) in free.iter().enumerate() {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(Error::invalid(format!("bounds for {p} must be finite and ordered")));
            }
            if free[..i].iter().any(|(q, _)| q == p) {
                return Err(Error::invalid(format!("{p} listed twice")));
            }
        }
        if !(weights.position >= 0.0) || weights.velocity.is_some_and(|w| !(w >= 0.0)) {
            return Err(Error::invalid("weights must be >= 0"));
        }
        integrator.validate()?;

        let dt = trace.dt();
        let stride = (dt / integrator.dt - 1e-9).ceil().max(1.0);
        let integrator = IntegratorConfig {
            dt: dt / stride,
            tol_event: integrator.tol_event.min(0.5 * dt / stride),
            ..integrator
        };
        let mut template = template
            .with_sample_dt(dt)
            .with_t_end(trace.t[trace.len() - 1] - trace.t[0]);
        template.initial.t = trace.t[0];

        let measured_v = match weights.velocity {
            Some(_) => Some(signal::reconstruct_velocity(
                &trace.x2,
                trace.fs,
                signal::FC_DEFAULT.min(0.45 * trace.fs),
            )?),
            None => None,
        };
        Ok(Self {
            trace,
            template,
            free,
            weights,
            integrator,
            measured_v,
        })
    }

    pub fn free(&self) -> &[(FreeParam, Bound)] {
        &self.free
    }

    pub fn trace(&self) -> &MeasuredTrace {
        &self.trace
    }

    pub fn template(&self) -> &Scenario {
        &self.template
    }

    /// Template parameters with `candidate` substituted for the free ones.
    pub fn params_for(&self, candidate: &[f64]) -> SystemParams {
        let mut p = self.template.params;
        for ((fp, _), &v) in self.free.iter().zip(candidate) {
            fp.set(&mut p, v);
        }
        p
    }

    /// Free-parameter values of the template.
    pub fn nominal(&self) -> Vec<f64> {
        self.free
            .iter()
            .map(|(p, _)| p.get(&self.template.params))
            .collect()
    }

    pub fn simulate(&self, params: &SystemParams) -> Result<Trajectory> {
        simulate(&self.template.clone().with_params(*params), &self.integrator)
    }

    /// Weighted residual for a full parameter set; [`PENALTY`] on failure.
    pub fn objective_params(&self, params: &SystemParams) -> f64 {
        if params.validate().is_err() {
            return PENALTY;
        }
        match self.simulate(params) {
            Ok(traj) => self.residual(&traj).unwrap_or(PENALTY),
            Err(_) => PENALTY,
        }
    }

    /// Position RMSE and, when weighted, velocity RMSE.
    fn rmse(&self, traj: &Trajectory) -> Option<(f64, Option<f64>)> {
        if traj.len() != self.trace.len() {
            return None;
        }
        let n = traj.len() as f64;
        let sx = traj
            .samples
            .iter()
            .zip(&self.trace.x2)
            .map(|(s, x)| (s.state.x2 - x).powi(2))
            .sum::<f64>();
        let sv = self.measured_v.as_ref().map(|mv| {
            let sv = traj
                .samples
                .iter()
                .zip(mv)
                .map(|(s, v)| (s.state.v2 - v).powi(2))
                .sum::<f64>();
            (sv / n).sqrt()
        });
        let rx = (sx / n).sqrt();
        (rx.is_finite() && sv.map_or(true, f64::is_finite)).then_some((rx, sv))
    }

    fn residual(&self, traj: &Trajectory) -> Option<f64> {
        let (rx, rv) = self.rmse(traj)?;
        Some(self.weights.position * rx + self.weights.velocity.unwrap_or(0.0) * rv.unwrap_or(0.0))
    }
}

/// Weighted RMSE between the trace and the simulation at `candidate`.
///
/// Out-of-bounds or failed candidates yield [`PENALTY`], never an error.
pub fn objective(candidate: &[f64], problem: &FitProblem) -> f64 {
    if candidate.len() != problem.free.len()
        || candidate
            .iter()
            .zip(&problem.free)
            .any(|(x, (_, b))| !b.contains(*x))
    {
        return PENALTY;
    }
    problem.objective_params(&problem.params_for(candidate))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Total objective evaluation budget, including the identifiability probe.
    pub max_evals: usize,
    /// Number of simplex runs; the first starts from the given initial point.
    pub starts: usize,
    /// Simplex diameter (in bound-normalized units) at which a run has converged.
    pub tol: f64,
    /// Initial simplex edge in bound-normalized units.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            starts: 5,
            tol: 1e-6,
            initial_step: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Fitted values in the order of the problem's free parameters.
    pub params_hat: Vec<(FreeParam, f64)>,
    /// Complete parameter set at the optimum.
    pub params: SystemParams,
    /// Position RMSE at the optimum [m].
    pub rmse: f64,
    /// Objective value at the optimum.
    pub objective: f64,
    pub n_evals: usize,
    pub converged: bool,
    /// Free parameters that do not change the objective near the optimum.
    pub unidentifiable: Vec<FreeParam>,
    pub trace_hat: Trajectory,
}

impl FitResult {
    pub fn value(&self, p: FreeParam) -> Option<f64> {
        self.params_hat.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }

    /// Key-value report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (p, v) in &self.params_hat {
            s.push_str(&format!("{}={}\n", p, signal::fmt_f64(*v)));
        }
        s.push_str(&format!("rmse={}\n", signal::fmt_f64(self.rmse)));
        s.push_str(&format!("objective={}\n", signal::fmt_f64(self.objective)));
        s.push_str(&format!("n_evals={}\n", self.n_evals));
        s.push_str(&format!("converged={}\n", self.converged));
        let names: Vec<&str> = self.unidentifiable.iter().map(|p| p.name()).collect();
        s.push_str(&format!("unidentifiable={}\n", names.join(",")));
        s.push_str(&format!("impacts={}\n", self.trace_hat.events_of(crate::EventKind::Impact).count()));
        s
    }
}

/// Outcome of one bounded simplex run in unit coordinates.
#[derive(Debug, Clone)]
struct SimplexRun {
    best: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
}

/// Nelder-Mead on the unit box with points projected back into `[0, 1]ᵈ`.
fn nelder_mead(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    start: &[f64],
    step: f64,
    tol: f64,
    budget: usize,
) -> SimplexRun {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let d = start.len();
    let project = |x: &mut [f64]| x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let evals = Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x)
    };

    let mut verts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..d {
        let mut v = start.to_vec();
        v[i] = if v[i] + step <= 1.0 { v[i] + step } else { v[i] - step };
        verts.push(v);
    }
    let mut vals: Vec<f64> = verts.iter().map(|v| eval(v)).collect();

    let diameter = |verts: &[Vec<f64>], best: usize| {
        verts
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&verts[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };

    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let (best, worst, second) = (order[0], order[d], order[d.saturating_sub(1)]);
        if diameter(&verts, best) < tol {
            converged = true;
            break;
        }
        if evals.get() + 2 > budget {
            break;
        }

        let mut centroid = vec![0.0; d];
        for &i in &order[..d] {
            for (c, x) in centroid.iter_mut().zip(&verts[i]) {
                *c += x / d as f64;
            }
        }
        let along = |coef: f64| {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&verts[worst])
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            project(&mut x);
            x
        };

        let xr = along(REFLECT);
        let fr = eval(&xr);
        if fr < vals[best] {
            let xe = along(EXPAND);
            let fe = eval(&xe);
            if fe < fr {
                (verts[worst], vals[worst]) = (xe, fe);
            } else {
                (verts[worst], vals[worst]) = (xr, fr);
            }
            continue;
        }
        if fr < vals[second] {
            (verts[worst], vals[worst]) = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < vals[worst] {
            let x = along(CONTRACT * REFLECT);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(-CONTRACT);
            let v = eval(&x);
            (x, v)
        };
        if fc < vals[worst].min(fr) {
            (verts[worst], vals[worst]) = (xc, fc);
            continue;
        }
        if evals.get() + d > budget {
            break;
        }
        let anchor = verts[best].clone();
        for i in 0..=d {
            if i == best {
                continue;
            }
            for (x, a) in verts[i].iter_mut().zip(&anchor) {
                *x = a + SHRINK * (*x - a);
            }
            vals[i] = eval(&verts[i]);
        }
    }

    let best = (0..=d)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    SimplexRun {
        best: verts[best].clone(),
        value: vals[best],
        evals: evals.get(),
        converged,
    }
}

/// Fits the free parameters starting from `init` (in physical units).
pub fn fit(problem: &FitProblem, init: &[f64], cfg: &FitConfig) -> Result<FitResult> {
    let d = problem.free.len();
    if init.len() != d {
        return Err(Error::invalid(format!("expected {d} initial values, got {}", init.len())));
    }
    for (x, (p, b)) in init.iter().zip(&problem.free) {
        if !b.contains(*x) {
            return Err(Error::invalid(format!(
                "initial {p} = {x} outside [{}, {}]",
                b.lo, b.hi
            )));
        }
    }
    if cfg.starts == 0 || !(cfg.tol > 0.0) || !(cfg.initial_step > 0.0 && cfg.initial_step <= 0.5) {
        return Err(Error::invalid(format!("invalid fit configuration {cfg:?}")));
    }
    // leave room for the identifiability probe at the end
    let probe_cost = 2 * d + 1;
    if cfg.max_evals < probe_cost + cfg.starts * (d + 3) {
        return Err(Error::invalid(format!("evaluation budget {} too small", cfg.max_evals)));
    }

    let bounds: Vec<Bound> = problem.free.iter().map(|(_, b)| *b).collect();
    let to_phys = |u: &[f64]| -> Vec<f64> {
        u.iter().zip(&bounds).map(|(u, b)| b.from_unit(*u)).collect()
    };
    let f = |u: &[f64]| objective(&to_phys(u), problem);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![init.iter().zip(&bounds).map(|(x, b)| b.to_unit(*x)).collect::<Vec<_>>()];
    for _ in 1..cfg.starts {
        starts.push((0..d).map(|_| rng.random_range(0.0..=1.0)).collect());
    }
    let budget = (cfg.max_evals - probe_cost) / cfg.starts;
    let runs: Vec<SimplexRun> = starts
        .par_iter()
        .map(|s| nelder_mead(&f, s, cfg.initial_step, cfg.tol, budget))
        .collect();
    let mut n_evals: usize = runs.iter().map(|r| r.evals).sum();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)))
        .map(|(_, r)| r.clone())
        .expect("at least one start");

    // a parameter is unidentifiable when nudging it leaves the objective unchanged
    let probe: Vec<(usize, Vec<f64>)> = (0..d)
        .flat_map(|i| {
            [-1.0, 1.0].into_iter().map({
                let best = &best.best;
                move |sgn| {
                    let mut u = best.clone();
                    u[i] = (u[i] + sgn * 0.05).clamp(0.0, 1.0);
                    (i, u)
                }
            })
        })
        .collect();
    let probed: Vec<(usize, f64)> = probe.par_iter().map(|(i, u)| (*i, f(u))).collect();
    n_evals += probed.len();
    let flat_tol = 1e-9 * best.value.abs() + 1e-15;
    let unidentifiable = (0..d)
        .filter(|&i| {
            probed
                .iter()
                .filter(|(j, _)| *j == i)
                .all(|(_, v)| (v - best.value).abs() <= flat_tol)
        })
        .map(|i| problem.free[i].0)
        .collect();

    let x = to_phys(&best.best);
    let params = problem.params_for(&x);
    let trace_hat = problem.simulate(&params)?;
    n_evals += 1;
    let (rmse, _) = problem
        .rmse(&trace_hat)
        .ok_or(Error::NonFiniteState { t: f64::NAN })?;
    Ok(FitResult {
        params_hat: problem.free.iter().map(|(p, _)| *p).zip(x).collect(),
        params,
        rmse,
        objective: best.value,
        n_evals,
        converged: best.converged,
        unidentifiable,
        trace_hat,
    })
}

/// Objective sampled on a `(k, α)` grid; `values[i][j]` belongs to `(k[i], α[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSurface {
    pub k: Vec<f64>,
    pub alpha: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl CouplingSurface {
    /// Grid indices of the smallest objective value (first in row-major order on ties).
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v < self.values[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn min(&self) -> f64 {
        let (i, j) = self.argmin();
        self.values[i][j]
    }

    /// `k,alpha,objective` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,alpha,objective\n");
        for (i, k) in self.k.iter().enumerate() {
            for (j, a) in self.alpha.iter().enumerate() {
                s.push_str(&format!(
                    "{},{},{}\n",
                    signal::fmt_f64(*k),
                    signal::fmt_f64(*a),
                    signal::fmt_f64(self.values[i][j])
                ));
            }
        }
        s
    }
}

/// Evaluates the objective over a `(k, α)` grid, all other parameters at their
/// template values.
pub fn profile_coupling(
    problem: &FitProblem,
    k_grid: &[f64],
    alpha_grid: &[f64],
) -> Result<CouplingSurface> {
    if k_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::invalid("empty profile grid"));
    }
    let cells: Vec<(f64, f64)> = k_grid
        .iter()
        .flat_map(|&k| alpha_grid.iter().map(move |&a| (k, a)))
        .collect();
    let flat: Vec<f64> = cells
        .par_iter()
        .map(|&(k, alpha)| {
            problem.objective_params(&SystemParams {
                k,
                alpha,
                ..problem.template.params
            })
        })
        .collect();
    Ok(CouplingSurface {
        k: k_grid.to_vec(),
        alpha: alpha_grid.to_vec(),
        values: flat.chunks(alpha_grid.len()).map(<[f64]>::to_vec).collect(),
    })
}

/// Turns a simulated trajectory into a measurement with Gaussian position noise
/// of standard deviation `noise_std`.
pub fn synthetic_trace(traj: &Trajectory, noise_std: f64, seed: u64) -> Result<MeasuredTrace> {
    let t: Vec<f64> = traj.times().collect();
    let mut x2: Vec<f64> = traj.samples.iter().map(|s| s.state.x2).collect();
    let x1: Vec<f64> = traj.samples.iter().map(|s| s.state.x1).collect();
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std)
            .map_err(|e| Error::invalid(format!("noise level: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in &mut x2 {
            *x += normal.sample(&mut rng);
        }
    } else if noise_std < 0.0 || noise_std.is_nan() {
        return Err(Error::invalid(format!("noise level must be >= 0, got {noise_std}")));
    }
    MeasuredTrace::new(t, x2, Some(x1))
}

/// Standard deviation for noise at `fraction` of the position range of `traj`.
pub fn amplitude_noise(traj: &Trajectory, fraction: f64) -> f64 {
    let (lo, hi) = traj
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.state.x2), hi.max(s.state.x2))
        });
    if hi > lo {
        fraction * (hi - lo)
    } else {
        0.0
    }
}
