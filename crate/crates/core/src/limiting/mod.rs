//! Reduced limiting control systems `ẋ = F̂(t, x)u`, `y = Ĥ(t, x)u = 0`
//! with `u(t) ∈ U_{x(t)}`, the class constraints weak limits inherit from
//! the switching signals, and zeroing-output diagnostics for switched runs.

mod falsify;

pub use falsify::{wzsd_falsify, FalsifierConfig, FalsifierOutcome, FalsifierVerdict};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    norm, Covering, ModeIndex, OutputMap, RelaxedControl, SimplexPoint, SwitchedSystem, SwitchingSignal,
    Trajectory, VectorField,
};
use crate::signals::{pattern_cover, PatternConstraint, Run, VALIDATOR_TOL};

/// A control is an `ε`-vertex when within this distance of `e_i`.
pub const VERTEX_TOL: f64 = 1e-6;

/// Constraint imposed directly on relaxed controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlClassConstraint {
    None,
    /// `∫_t^{t+window} u_mode ≥ bound` for every `t`.
    IntegralLowerBound { mode: ModeIndex, window: f64, bound: f64 },
    /// Every window holds an `e1, e2, e1` vertex pattern.
    Pattern(PatternConstraint),
}

impl ControlClassConstraint {
    pub fn validate(&self, n_modes: usize) -> Result<()> {
        match *self {
            ControlClassConstraint::None => Ok(()),
            ControlClassConstraint::IntegralLowerBound { mode, window, bound } => {
                crate::signals::MeasureConstraint::new(window, bound, mode)?;
                if mode.get() > n_modes {
                    return Err(Error::param(format!("constrained mode {mode} exceeds {n_modes} modes")));
                }
                Ok(())
            }
            ControlClassConstraint::Pattern(p) => {
                PatternConstraint::new(p.window, p.dm, p.d_max)?;
                if n_modes < 2 {
                    return Err(Error::param("pattern constraint needs two modes"));
                }
                Ok(())
            }
        }
    }

    /// Window length the check needs, if any.
    pub fn window(&self) -> Option<f64> {
        match *self {
            ControlClassConstraint::None => None,
            ControlClassConstraint::IntegralLowerBound { window, .. } => Some(window),
            ControlClassConstraint::Pattern(p) => Some(p.window),
        }
    }
}

/// Where the limiting functions come from.
#[derive(Clone)]
pub enum LimitSpec {
    /// `f̂_i` and `h_i` do not depend on `t`, so they are their own limits.
    TimeInvariant,
    /// Limiting functions `f̂_{i,γ}`, `h_{i,γ}` supplied by the caller.
    UserSupplied { fhat: VectorField, h: OutputMap, output_dim: usize },
}

#[derive(Clone)]
pub struct ReducedLimitingSystem {
    name: String,
    dim: usize,
    n_modes: usize,
    output_dim: usize,
    fhat: VectorField,
    h: OutputMap,
    covering: Covering,
    constraints: Vec<ControlClassConstraint>,
}

impl std::fmt::Debug for ReducedLimitingSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedLimitingSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("n_modes", &self.n_modes)
            .field("constraints", &self.constraints)
            .finish_non_exhaustive()
    }
}

/// Assembles the reduced system of `sys` under covering `χ`.
pub fn build_reduced(
    sys: &SwitchedSystem,
    covering: &Covering,
    constraints: Vec<ControlClassConstraint>,
    limits: LimitSpec,
) -> Result<ReducedLimitingSystem> {
    if covering.dim() != sys.dim() || covering.n_modes() != sys.n_modes() {
        return Err(Error::Input(format!(
            "covering is {}-dimensional with {} pieces, system has n = {}, N = {}",
            covering.dim(),
            covering.n_modes(),
            sys.dim(),
            sys.n_modes()
        )));
    }
    for c in &constraints {
        c.validate(sys.n_modes())?;
    }
    let (fhat, h, output_dim) = match limits {
        LimitSpec::TimeInvariant => {
            if !sys.time_invariant_limits() {
                return Err(Error::Unsupported(format!(
                    "{} has time-dependent precompact parts; supply their limiting functions",
                    sys.name()
                )));
            }
            (sys.fhat_field(), sys.output_map(), sys.output_dim())
        }
        LimitSpec::UserSupplied { fhat, h, output_dim } => (fhat, h, output_dim),
    };
    Ok(ReducedLimitingSystem {
        name: format!("{}-reduced", sys.name()),
        dim: sys.dim(),
        n_modes: sys.n_modes(),
        output_dim,
        fhat,
        h,
        covering: covering.clone(),
        constraints,
    })
}

impl ReducedLimitingSystem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn covering(&self) -> &Covering {
        &self.covering
    }

    pub fn constraints(&self) -> &[ControlClassConstraint] {
        &self.constraints
    }

    /// Same system with a different constraint list.
    pub fn with_constraints(&self, constraints: Vec<ControlClassConstraint>) -> Result<Self> {
        for c in &constraints {
            c.validate(self.n_modes)?;
        }
        Ok(ReducedLimitingSystem { constraints, ..self.clone() })
    }

    /// Column `f̂_{i,γ}(t, x)`.
    pub fn fhat(&self, t: f64, x: &[f64], mode: ModeIndex, out: &mut [f64]) {
        (self.fhat)(t, x, mode, out)
    }

    /// Entry `|h_{i,γ}(t, x)|` of `Ĥ_γ`.
    pub fn hhat_entry(&self, t: f64, x: &[f64], mode: ModeIndex) -> f64 {
        let mut out = vec![0.0; self.output_dim];
        (self.h)(t, x, mode, &mut out);
        norm(&out)
    }

    pub fn hhat(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (1..=self.n_modes).map(|i| self.hhat_entry(t, x, ModeIndex::of(i))).collect()
    }

    /// `Ĥ_γ(t, x)·p`.
    pub fn output(&self, t: f64, x: &[f64], p: &SimplexPoint) -> f64 {
        p.weights()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| w * self.hhat_entry(t, x, ModeIndex::from_zero_based(i)))
            .sum()
    }

    /// The reduced dynamics as a switched system with scalar output
    /// `|h_{i,γ}|`, so that relaxed simulation reports `Ĥ_γ u`.
    pub fn as_switched(&self) -> SwitchedSystem {
        let h = self.h.clone();
        let p = self.output_dim;
        let out: OutputMap = Arc::new(move |t, x, m, o: &mut [f64]| {
            let mut v = vec![0.0; p];
            h(t, x, m, &mut v);
            o[0] = norm(&v);
        });
        SwitchedSystem::new(self.name.clone(), self.dim, self.n_modes, 1, self.fhat.clone(), out)
            .with_time_invariant_limits(true)
    }
}

/// Largest `Ĥ_γ(t, x(t))·u(t)` over the grid; each step is evaluated at
/// both ends with the control of the cell it lies in.
pub fn output_residual(sigma: &ReducedLimitingSystem, traj: &Trajectory, u: &RelaxedControl) -> Result<f64> {
    if traj.dim() != sigma.dim() || u.n_modes() != sigma.n_modes() {
        return Err(Error::Input("trajectory or control does not match the reduced system".into()));
    }
    if traj.time(0) < u.start() - 1e-12 || traj.final_time() > u.end() + 1e-9 {
        return Err(Error::Domain { t: traj.final_time(), start: u.start(), end: u.end() });
    }
    if traj.len() == 1 {
        return Ok(sigma.output(traj.time(0), traj.state(0), u.at(traj.time(0))));
    }
    let mut worst: f64 = 0.0;
    for k in 0..traj.len() - 1 {
        let (t0, t1) = (traj.time(k), traj.time(k + 1));
        let p = u.at(0.5 * (t0 + t1));
        worst = worst.max(sigma.output(t0, traj.state(k), p)).max(sigma.output(t1, traj.state(k + 1), p));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub satisfied: bool,
    /// `min_t ∫_t^{t+T0} u_i − δ0` for the integral kind.
    pub margin: Option<f64>,
    /// First window anchor without a pattern, for the pattern kind.
    pub first_violation: Option<f64>,
}

/// Checks a relaxed control against a class constraint, exactly for the
/// integral kind (the window integral is piecewise linear in the anchor
/// with kinks at cell boundaries and cell boundaries shifted by the window).
pub fn check_control_constraint(u: &RelaxedControl, c: &ControlClassConstraint) -> Result<ConstraintReport> {
    match *c {
        ControlClassConstraint::None => Ok(ConstraintReport { satisfied: true, margin: None, first_violation: None }),
        ControlClassConstraint::IntegralLowerBound { mode, window, bound } => {
            if mode.get() > u.n_modes() {
                return Err(Error::param(format!("constrained mode {mode} exceeds {} modes", u.n_modes())));
            }
            let (t0, t1) = (u.start(), u.end());
            let last = t1 - window;
            if last < t0 - 1e-9 {
                return Err(Error::param(format!("control spans {} s, shorter than the window {window}", t1 - t0)));
            }
            let last = last.max(t0);
            let mut cum = Vec::with_capacity(u.len() + 1);
            cum.push(0.0);
            for p in u.values() {
                cum.push(cum.last().unwrap() + p.weight(mode) * u.step());
            }
            let integral_to = |t: f64| -> f64 {
                let k = u.cell_of(t).min(u.len() - 1);
                let into = (t - u.cell_start(k)).clamp(0.0, u.step());
                cum[k] + u.values()[k].weight(mode) * into
            };
            let mut min = f64::INFINITY;
            let mut consider = |a: f64| {
                if a >= t0 - 1e-12 && a <= last + 1e-12 {
                    let a = a.clamp(t0, last);
                    min = min.min(integral_to(a + window) - integral_to(a));
                }
            };
            consider(t0);
            consider(last);
            for k in 0..=u.len() {
                let b = u.cell_start(k);
                consider(b);
                consider(b - window);
            }
            let margin = min - bound;
            Ok(ConstraintReport { satisfied: margin >= -VALIDATOR_TOL, margin: Some(margin), first_violation: None })
        }
        ControlClassConstraint::Pattern(p) => {
            let runs = control_runs(u);
            let rep = pattern_cover(&runs, &p, u.start(), u.end())?;
            Ok(ConstraintReport { satisfied: rep.satisfied, margin: None, first_violation: rep.first_violation })
        }
    }
}

/// Maximal runs of cells that are `ε`-vertices `e1` (label 1), `e2`
/// (label 2), or anything else (label 0).
fn control_runs(u: &RelaxedControl) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (k, p) in u.values().iter().enumerate() {
        let label = match p.as_vertex(VERTEX_TOL) {
            Some(m) if m.get() <= 2 => m.get() as u8,
            _ => 0,
        };
        let (a, b) = (u.cell_start(k), if k + 1 == u.len() { u.end() } else { u.cell_start(k + 1) });
        match runs.last_mut() {
            Some(r) if r.label == label => r.end = b,
            _ => runs.push(Run { start: a, end: b, label }),
        }
    }
    runs
}

/// Pointwise mean of `u_seq`, then a centered moving average over
/// `2m + 1` cells, `m = round(window / (2 δu))`. The result drops `m`
/// cells at each end so every averaged value uses full windows; window
/// integrals of the output are convex combinations of window integrals of
/// the input, so integral lower bounds carry over.
pub fn windowed_weak_average(u_seq: &[RelaxedControl], window: f64) -> Result<RelaxedControl> {
    let first = u_seq.first().ok_or_else(|| Error::Input("empty control sequence".into()))?;
    if u_seq.iter().any(|u| !u.same_grid(first)) {
        return Err(Error::Input("controls must share a grid".into()));
    }
    if !(window >= 0.0) {
        return Err(Error::param("window must be nonnegative"));
    }
    let n = first.n_modes();
    let cells = first.len();
    let mut mean = vec![0.0; cells * n];
    for u in u_seq {
        for (k, p) in u.values().iter().enumerate() {
            for (i, w) in p.weights().iter().enumerate() {
                mean[k * n + i] += w / u_seq.len() as f64;
            }
        }
    }
    let m = (window / (2.0 * first.step())).round() as usize;
    if 2 * m + 1 > cells {
        return Err(Error::param(format!("window {window} is longer than the control's {cells} cells")));
    }
    let mut prefix = vec![0.0; (cells + 1) * n];
    for k in 0..cells {
        for i in 0..n {
            prefix[(k + 1) * n + i] = prefix[k * n + i] + mean[k * n + i];
        }
    }
    let width = (2 * m + 1) as f64;
    let values = (m..cells - m)
        .map(|k| {
            let w = (0..n).map(|i| (prefix[(k + m + 1) * n + i] - prefix[(k - m) * n + i]) / width).collect();
            SimplexPoint::new(w)
        })
        .collect::<Result<Vec<_>>>()?;
    RelaxedControl::new(first.cell_start(m), first.step(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Inner radius of the shell.
    pub eps: f64,
    /// Outer radius of the shell.
    pub radius: f64,
    pub output_decay_tol: f64,
    /// Shortest flagged segment, in seconds.
    pub min_duration: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { eps: 0.1, radius: 10.0, output_decay_tol: 1e-6, min_duration: 5.0 }
    }
}

/// Trajectory segment staying in a shell around the origin with (near)
/// zero output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroingCandidate {
    pub trajectory: Trajectory,
    pub signal: Option<SwitchingSignal>,
    pub control: Option<RelaxedControl>,
    /// `min |x(t)|` over the segment.
    pub eps: f64,
    pub output_sup: f64,
    pub span: (f64, f64),
}

/// Flags maximal segments with `eps ≤ |x| ≤ radius` and output norm at most
/// `output_decay_tol`, lasting at least `min_duration`.
pub fn scan_zeroing_sequences(
    batch: &[(Trajectory, SwitchingSignal)],
    cfg: &ScanConfig,
) -> Result<Vec<ZeroingCandidate>> {
    if batch.is_empty() {
        return Err(Error::Input("empty trajectory batch".into()));
    }
    if !(cfg.eps > 0.0 && cfg.radius > cfg.eps) {
        return Err(Error::param("scan needs 0 < eps < radius"));
    }
    let mut found = Vec::new();
    for (traj, sigma) in batch {
        if !traj.has_outputs() {
            return Err(Error::Input("trajectory has no outputs".into()));
        }
        let good = |k: usize| {
            let r = traj.norm_at(k);
            r >= cfg.eps && r <= cfg.radius && norm(traj.output(k)) <= cfg.output_decay_tol
        };
        let mut k = 0;
        while k < traj.len() {
            if !good(k) {
                k += 1;
                continue;
            }
            let a = k;
            while k + 1 < traj.len() && good(k + 1) {
                k += 1;
            }
            let (ta, tb) = (traj.time(a), traj.time(k));
            if tb - ta >= cfg.min_duration {
                let seg = traj.slice(a, k);
                let eps = (a..=k).map(|j| traj.norm_at(j)).fold(f64::INFINITY, f64::min);
                let output_sup = (a..=k).map(|j| norm(traj.output(j))).fold(0.0, f64::max);
                found.push(ZeroingCandidate {
                    trajectory: seg,
                    signal: sigma.restrict(ta, tb.max(ta + 1e-12).min(sigma.end())).ok(),
                    control: None,
                    eps,
                    output_sup,
                    span: (ta, tb),
                });
            }
            k += 1;
        }
    }
    Ok(found)
}
