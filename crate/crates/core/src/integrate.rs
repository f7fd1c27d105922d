//! Fixed-step classical RK4 for switched, relaxed and covering-closed-loop
//! dynamics.
//!
//! Steps never straddle a switching instant or a control cell boundary:
//! every constancy interval `[a, b]` is split into `n = ⌈(b − a)/h⌉` equal
//! steps, so the right-hand side is smooth in `t` inside each step. Results
//! are bit-for-bit deterministic for identical inputs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    active_index_set, norm, Covering, ModeIndex, RelaxedControl, SimplexPoint, SwitchedSystem,
    SwitchingSignal, Trajectory,
};

/// `(t, ξ, I_ξ) -> mode`; must return a member of `I_ξ`.
pub type CoveringPolicy = Arc<dyn Fn(f64, &[f64], &[ModeIndex]) -> ModeIndex + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Base step `h_int` in seconds.
    pub step: f64,
    /// Time tolerance for locating covering-boundary crossings.
    pub event_bisection_tol: f64,
    /// State norm above which a run is declared divergent.
    pub divergence_bound: f64,
    /// Maximum number of closed-loop switching events.
    pub max_switches: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 1e-3,
            event_bisection_tol: 1e-12,
            divergence_bound: 1e9,
            max_switches: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_step(step: f64) -> Self {
        IntegratorConfig { step, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::param(format!("integrator step must be positive, got {}", self.step)));
        }
        if !(self.event_bisection_tol > 0.0 && self.event_bisection_tol < self.step) {
            return Err(Error::param("event_bisection_tol must lie in (0, step)"));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(Error::param("divergence_bound must be positive"));
        }
        Ok(())
    }
}

/// Scratch space for one RK4 step.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// One classical RK4 step of length `h` from `(t, x)` into `out`.
    pub(crate) fn step<F>(&mut self, rhs: &mut F, t: f64, x: &[f64], h: f64, out: &mut [f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        rhs(t, x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        rhs(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Number of equal steps used on an interval of length `len`.
pub(crate) fn steps_for(len: f64, h: f64) -> usize {
    ((len / h) - 1e-9).ceil().max(1.0) as usize
}

fn check_state(t: f64, x: &[f64], cfg: &IntegratorConfig) -> Result<(), StepFailure> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StepFailure::NonFinite(t));
    }
    if norm(x) > cfg.divergence_bound {
        return Err(StepFailure::Diverged);
    }
    Ok(())
}

enum StepFailure {
    NonFinite(f64),
    Diverged,
}

fn fail(f: StepFailure, traj: Trajectory) -> Error {
    match f {
        StepFailure::NonFinite(t) => Error::NonFinite { t },
        StepFailure::Diverged => Error::BlowUp { t: traj.final_time(), partial: Box::new(traj) },
    }
}

fn check_inputs(sys: &SwitchedSystem, t0: f64, x0: &[f64], tf: f64, cfg: &IntegratorConfig) -> Result<()> {
    cfg.validate()?;
    if x0.len() != sys.dim() {
        return Err(Error::Dimension { expected: sys.dim(), got: x0.len() });
    }
    if !(tf >= t0) || !t0.is_finite() || !tf.is_finite() {
        return Err(Error::param(format!("need finite t0 <= tf, got [{t0}, {tf}]")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("initial state must be finite"));
    }
    Ok(())
}

/// Interval boundaries `[t0, s_1, …, s_k, tf]` from the interior cut times.
fn segments(t0: f64, tf: f64, cuts: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut pts = vec![t0];
    pts.extend(cuts.filter(|&s| s > t0 && s < tf));
    if tf > t0 {
        pts.push(tf);
    }
    pts
}

/// Integrates `ẋ = f(t, x, σ(t))` on `[t0, tf]`.
///
/// Outputs are filled with `h(t, x(t), σ(t))`. Divergence past
/// `cfg.divergence_bound` returns [`Error::BlowUp`] carrying the partial
/// trajectory.
pub fn simulate(
    sys: &SwitchedSystem,
    sigma: &SwitchingSignal,
    t0: f64,
    x0: &[f64],
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_inputs(sys, t0, x0, tf, cfg)?;
    if !sigma.covers(t0, tf) {
        return Err(Error::Domain { t: if t0 < sigma.start() { t0 } else { tf }, start: sigma.start(), end: sigma.end() });
    }
    if sigma.max_mode() > sys.n_modes() {
        return Err(Error::param(format!("signal uses mode {} of a {}-mode system", sigma.max_mode(), sys.n_modes())));
    }
    let n = sys.dim();
    let mut traj = Trajectory::empty(n, sys.output_dim(), false);
    let mut y = vec![0.0; sys.output_dim()];
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut rk = Rk4::new(n);

    let mode0 = sigma.mode_at(t0);
    sys.h(t0, &x, mode0, &mut y);
    traj.push_mode(t0, &x, mode0, &y);

    let pts = segments(t0, tf, sigma.switch_times().iter().copied());
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mode = sigma.mode_at(a);
        let steps = steps_for(b - a, cfg.step);
        let h = (b - a) / steps as f64;
        let mut rhs = |t: f64, x: &[f64], out: &mut [f64]| sys.f(t, x, mode, out);
        for k in 0..steps {
            let t = a + k as f64 * h;
            let t_next = if k + 1 == steps { b } else { a + (k + 1) as f64 * h };
            rk.step(&mut rhs, t, &x, t_next - t, &mut next);
            if let Err(e) = check_state(t_next, &next, cfg) {
                return Err(fail(e, traj));
            }
            std::mem::swap(&mut x, &mut next);
            let m = if k + 1 == steps { sigma.mode_at(t_next) } else { mode };
            sys.h(t_next, &x, m, &mut y);
            traj.push_mode(t_next, &x, m, &y);
        }
    }
    Ok(traj)
}

/// Integrates the relaxed dynamics `ẋ = Σ_i u_i(t) f_i(t, x)` on `[t0, tf]`.
///
/// Outputs are the scalar `Σ_i u_i(t) |h_i(t, x)|`.
pub fn simulate_relaxed(
    sys: &SwitchedSystem,
    u: &RelaxedControl,
    t0: f64,
    x0: &[f64],
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_inputs(sys, t0, x0, tf, cfg)?;
    if u.n_modes() != sys.n_modes() {
        return Err(Error::Dimension { expected: sys.n_modes(), got: u.n_modes() });
    }
    if t0 < u.start() - 1e-12 || tf > u.end() + 1e-9 * u.step() {
        return Err(Error::Domain { t: if t0 < u.start() { t0 } else { tf }, start: u.start(), end: u.end() });
    }
    let n = sys.dim();
    let mut traj = Trajectory::empty(n, 1, true);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut rk = Rk4::new(n);

    let weighted_output = |t: f64, x: &[f64], p: &SimplexPoint| -> f64 {
        p.weights()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| w * sys.output_norm(t, x, ModeIndex::from_zero_based(i)))
            .sum()
    };

    let u0 = u.at(t0);
    traj.push_control(t0, &x, u0, &[weighted_output(t0, &x, u0)]);

    let cuts = (1..u.len()).map(|k| u.cell_start(k));
    let pts = segments(t0, tf, cuts);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let p = u.at(0.5 * (a + b)).clone();
        let steps = steps_for(b - a, cfg.step);
        let h = (b - a) / steps as f64;
        let mut rhs = |t: f64, x: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            for (i, &wi) in p.weights().iter().enumerate() {
                if wi == 0.0 {
                    continue;
                }
                sys.f(t, x, ModeIndex::from_zero_based(i), &mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o += wi * b;
                }
            }
        };
        for k in 0..steps {
            let t = a + k as f64 * h;
            let t_next = if k + 1 == steps { b } else { a + (k + 1) as f64 * h };
            rk.step(&mut rhs, t, &x, t_next - t, &mut next);
            if let Err(e) = check_state(t_next, &next, cfg) {
                return Err(fail(e, traj));
            }
            std::mem::swap(&mut x, &mut next);
            let up = if k + 1 == steps { u.at(t_next) } else { &p };
            let yk = weighted_output(t_next, &x, up);
            traj.push_control(t_next, &x, up, &[yk]);
        }
    }
    Ok(traj)
}

/// Closed-loop simulation that keeps `x(t) ∈ χ_{σ(t)}`.
///
/// The policy is queried at every sample with the active index set `I_x`.
/// When a step would leave the active piece, the crossing is bracketed by
/// bisection on the step length down to `cfg.event_bisection_tol`; the run
/// resumes from the first bracket end outside the piece and the policy is
/// re-queried there. Returns the trajectory and the generated signal.
pub fn simulate_with_covering(
    sys: &SwitchedSystem,
    covering: &Covering,
    policy: &CoveringPolicy,
    t0: f64,
    x0: &[f64],
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, SwitchingSignal)> {
    check_inputs(sys, t0, x0, tf, cfg)?;
    if covering.dim() != sys.dim() || covering.n_modes() != sys.n_modes() {
        return Err(Error::param("covering does not match the system's dimensions"));
    }
    let n = sys.dim();
    let mut traj = Trajectory::empty(n, sys.output_dim(), false);
    let mut y = vec![0.0; sys.output_dim()];
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut rk = Rk4::new(n);
    let mut breaks = Vec::new();
    let mut modes = Vec::new();
    let mut events = 0usize;

    let query = |t: f64, x: &[f64]| -> Result<ModeIndex> {
        let active = active_index_set(x, covering)?;
        let m = policy(t, x, &active);
        if !active.contains(&m) {
            return Err(Error::Policy { t, mode: m.get() });
        }
        Ok(m)
    };

    let mut t = t0;
    let mut mode = query(t, &x)?;
    breaks.push(t);
    modes.push(mode);
    sys.h(t, &x, mode, &mut y);
    traj.push_mode(t, &x, mode, &y);

    while t < tf {
        let remaining = tf - t;
        let h = if remaining <= cfg.step * (1.0 + 1e-9) { remaining } else { cfg.step };
        let mut rhs = |s: f64, x: &[f64], out: &mut [f64]| sys.f(s, x, mode, out);
        rk.step(&mut rhs, t, &x, h, &mut next);
        let mut t_next = if h == remaining { tf } else { t + h };
        let mut crossed = false;
        if !covering.contains(&next, mode) {
            let (mut lo, mut hi) = (0.0, h);
            let mut probe = vec![0.0; n];
            while hi - lo > cfg.event_bisection_tol {
                let mid = 0.5 * (lo + hi);
                rk.step(&mut rhs, t, &x, mid, &mut probe);
                if covering.contains(&probe, mode) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            rk.step(&mut rhs, t, &x, hi, &mut next);
            t_next = t + hi;
            crossed = true;
        }
        if let Err(e) = check_state(t_next, &next, cfg) {
            return Err(fail(e, traj));
        }
        std::mem::swap(&mut x, &mut next);
        t = t_next;
        let new_mode = query(t, &x)?;
        if crossed || new_mode != mode {
            events += 1;
            if events > cfg.max_switches {
                return Err(Error::Chattering { t, events });
            }
        }
        if new_mode != mode && t < tf {
            breaks.push(t);
            modes.push(new_mode);
        }
        mode = new_mode;
        sys.h(t, &x, mode, &mut y);
        traj.push_mode(t, &x, mode, &y);
    }
    let end = if tf > t0 { tf } else { t0 + cfg.step };
    let sigma = SwitchingSignal::new(breaks, modes, end)?;
    Ok((traj, sigma))
}
