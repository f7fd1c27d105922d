//! Numerical checks of weak multiple-Lyapunov certificates along sampled
//! states and simulated trajectories, and of the output integral bound
//! `∫_s^t α(|h|) ≤ M + μ(t − s)`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::Rk4;
use crate::model::{Covering, Drive, ModeIndex, ScalarField, SwitchedSystem, SwitchingSignal, Trajectory, VectorField};

/// Monotone scalar map `s -> φ(s)`.
pub type Gauge = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Revisit comparisons (`V_i(t) ≥ V_i(s)` for `t < s`) allow this much.
pub const REVISIT_TOL: f64 = 1e-7;
/// Absolute tolerance of the sandwich check.
pub const SANDWICH_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct LyapunovCertificate {
    v: ScalarField,
    grad: Option<VectorField>,
    phi1: Gauge,
    phi2: Gauge,
    eta: ScalarField,
}

impl std::fmt::Debug for LyapunovCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LyapunovCertificate").field("has_gradient", &self.grad.is_some()).finish()
    }
}

impl LyapunovCertificate {
    /// Checks on a sample grid of `[0, 100]` that `φ1`, `φ2` vanish at 0
    /// and increase strictly.
    pub fn new(v: ScalarField, phi1: Gauge, phi2: Gauge, eta: ScalarField) -> Result<Self> {
        for (name, phi) in [("phi1", &phi1), ("phi2", &phi2)] {
            if phi(0.0).abs() > 1e-12 {
                return Err(Error::param(format!("{name}(0) = {} is not zero", phi(0.0))));
            }
            let mut prev = 0.0;
            for k in 1..=400 {
                let s = 100.0 * (k as f64 / 400.0).powi(2);
                let p = phi(s);
                if !(p > prev) {
                    return Err(Error::param(format!("{name} is not strictly increasing near s = {s}")));
                }
                prev = p;
            }
        }
        Ok(LyapunovCertificate { v, grad: None, phi1, phi2, eta })
    }

    /// Attaches `∂V/∂ξ`, written into the output buffer.
    pub fn with_gradient(mut self, grad: VectorField) -> Self {
        self.grad = Some(grad);
        self
    }

    pub fn v(&self, t: f64, x: &[f64], mode: ModeIndex) -> f64 {
        (self.v)(t, x, mode)
    }

    pub fn eta(&self, t: f64, x: &[f64], mode: ModeIndex) -> f64 {
        (self.eta)(t, x, mode)
    }

    pub fn phi1(&self, s: f64) -> f64 {
        (self.phi1)(s)
    }

    pub fn phi2(&self, s: f64) -> f64 {
        (self.phi2)(s)
    }

    pub fn gradient(&self, t: f64, x: &[f64], mode: ModeIndex, out: &mut [f64]) -> bool {
        match &self.grad {
            Some(g) => {
                g(t, x, mode, out);
                true
            }
            None => false,
        }
    }

    /// Same certificate with `φ2` scaled by `k`.
    pub fn with_phi2_scaled(&self, k: f64) -> Self {
        let phi2 = self.phi2.clone();
        LyapunovCertificate { phi2: Arc::new(move |s| k * phi2(s)), ..self.clone() }
    }
}

/// `α`, `M`, `μ` of the integral bound.
#[derive(Clone)]
pub struct IntegralBoundParams {
    pub alpha: Gauge,
    pub m: f64,
    pub mu: f64,
}

impl IntegralBoundParams {
    pub fn new(alpha: Gauge, m: f64, mu: f64) -> Result<Self> {
        if !(m >= 0.0 && mu >= 0.0) {
            return Err(Error::param(format!("integral bound needs M, μ >= 0, got M = {m}, μ = {mu}")));
        }
        if alpha(0.0).abs() > 1e-12 || (1..=50).any(|k| !(alpha(k as f64 * 0.2) > 0.0)) {
            return Err(Error::param("alpha must vanish only at zero"));
        }
        Ok(IntegralBoundParams { alpha, m, mu })
    }

    /// `α(s) = s^p`.
    pub fn power(p: f64, m: f64, mu: f64) -> Result<Self> {
        Self::new(Arc::new(move |s: f64| s.abs().powf(p)), m, mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Location {
    pub t: f64,
    pub x: Vec<f64>,
    pub mode: usize,
}

/// Outcome of one check. `worst_margin` is the smallest
/// `allowed − observed` seen; negative beyond the slack means a violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_location: Option<Location>,
    pub slack: f64,
    pub violations: usize,
    pub samples: usize,
}

impl CheckReport {
    fn new(check: &str, slack: f64) -> Self {
        CheckReport {
            check: check.into(),
            pass: true,
            worst_margin: f64::INFINITY,
            worst_location: None,
            slack,
            violations: 0,
            samples: 0,
        }
    }

    /// Records `margin` (violation iff `margin < −allow`).
    fn record(&mut self, margin: f64, allow: f64, at: impl FnOnce() -> Location) {
        self.samples += 1;
        let bad = !(margin >= -allow);
        if bad {
            self.violations += 1;
            self.pass = false;
        }
        if margin < self.worst_margin || (bad && self.worst_location.is_none()) || margin.is_nan() {
            self.worst_margin = margin;
            self.worst_location = Some(at());
        }
    }
}

/// Axis-aligned sample box with a list of sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub times: Vec<f64>,
}

impl SampleBox {
    pub fn cube(dim: usize, r: f64) -> Self {
        SampleBox { lo: vec![-r; dim], hi: vec![r; dim], times: vec![0.0, 1.0, 7.5] }
    }

    fn points(&self, density: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.lo.len();
        if n != self.hi.len() || n == 0 {
            return Err(Error::param("sample box bounds must have equal nonzero length"));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l <= &0.0 && h >= &0.0)) {
            return Err(Error::param("sample box must contain the origin"));
        }
        let d = density.max(2);
        let total = d.checked_pow(n as u32).filter(|&c| c <= 2_000_000).ok_or_else(|| Error::param("sample grid too large"))?;
        let mut pts = Vec::with_capacity(total + 1);
        for mut k in 0..total {
            let mut p = vec![0.0; n];
            for j in 0..n {
                let i = k % d;
                k /= d;
                p[j] = self.lo[j] + (self.hi[j] - self.lo[j]) * i as f64 / (d - 1) as f64;
            }
            pts.push(p);
        }
        pts.push(vec![0.0; n]);
        Ok(pts)
    }
}

/// `φ1(|ξ|) ≤ V(t, ξ, i) ≤ φ2(|ξ|)` on a grid of `density` points per
/// axis, for every mode whose covering piece contains `ξ`.
pub fn check_sandwich(
    cert: &LyapunovCertificate,
    sample: &SampleBox,
    covering: &Covering,
    density: usize,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("sandwich", SANDWICH_TOL);
    for p in sample.points(density)? {
        let r = crate::model::norm(&p);
        for &t in &sample.times {
            for mode in covering.members(&p) {
                let v = cert.v(t, &p, mode);
                let (lo, hi) = (cert.phi1(r), cert.phi2(r));
                let allow = SANDWICH_TOL * hi.abs().max(1.0);
                let margin = (v - lo).min(hi - v);
                rep.record(margin, allow, || Location { t, x: p.clone(), mode: mode.get() });
            }
        }
    }
    Ok(rep)
}

/// Results of the along-trajectory decrease (item 2) and revisit (item 3)
/// checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecreaseReport {
    pub decrease: CheckReport,
    pub revisit: CheckReport,
}

impl DecreaseReport {
    pub fn pass(&self) -> bool {
        self.decrease.pass && self.revisit.pass
    }
}

fn check_signal_matches(traj: &Trajectory, sigma: &SwitchingSignal) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::Input("empty trajectory".into()));
    }
    if !sigma.covers(traj.time(0), traj.final_time()) {
        return Err(Error::Input("signal does not span the trajectory".into()));
    }
    if let Drive::Modes(ms) = traj.drive() {
        for (k, &m) in ms.iter().enumerate() {
            if sigma.mode_at(traj.time(k)) != m {
                return Err(Error::Input(format!(
                    "trajectory mode {m} at t = {} differs from the signal",
                    traj.time(k)
                )));
            }
        }
    }
    Ok(())
}

/// Decrease of `V_σ` along `traj` and the same-mode revisit condition.
///
/// On each step `[t_k, t_{k+1}]` with mode `i = σ(t_k)` the slope
/// `(V_i(x_{k+1}) − V_i(x_k))/h` plus the trapezoid mean of `η_i` must not
/// exceed the slack. The slack is ten times the largest difference between
/// that quantity and its value recomputed from `x_k` with two half steps
/// and a midpoint-refined quadrature, so it tracks the integrator's local
/// error on this very trajectory.
pub fn check_decrease_along(
    cert: &LyapunovCertificate,
    sys: &SwitchedSystem,
    traj: &Trajectory,
    sigma: &SwitchingSignal,
) -> Result<DecreaseReport> {
    check_signal_matches(traj, sigma)?;
    if traj.dim() != sys.dim() {
        return Err(Error::Dimension { expected: sys.dim(), got: traj.dim() });
    }
    let n = sys.dim();
    let mut rk = Rk4::new(n);
    let (mut xa, mut xm, mut xb) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let steps = traj.len().saturating_sub(1);
    let mut q = Vec::with_capacity(steps);
    let mut floor = Vec::with_capacity(steps);
    let mut est: f64 = 0.0;
    for k in 0..steps {
        let (t0, t1) = (traj.time(k), traj.time(k + 1));
        let h = t1 - t0;
        let mode = sigma.mode_at(t0);
        let (x0, x1) = (traj.state(k), traj.state(k + 1));
        let (v0, v1) = (cert.v(t0, x0, mode), cert.v(t1, x1, mode));
        let (e0, e1) = (cert.eta(t0, x0, mode), cert.eta(t1, x1, mode));
        q.push((v1 - v0) / h + 0.5 * (e0 + e1));
        floor.push(64.0 * f64::EPSILON * (v0.abs() + v1.abs()).max(1.0) / h);

        let mut rhs = |t: f64, x: &[f64], out: &mut [f64]| sys.f(t, x, mode, out);
        rk.step(&mut rhs, t0, x0, h, &mut xa);
        rk.step(&mut rhs, t0, x0, 0.5 * h, &mut xm);
        let tm = t0 + 0.5 * h;
        rk.step(&mut rhs, tm, &xm, 0.5 * h, &mut xb);
        let qa = (cert.v(t1, &xa, mode) - v0) / h + 0.5 * (e0 + cert.eta(t1, &xa, mode));
        let qb = (cert.v(t1, &xb, mode) - v0) / h
            + 0.25 * (e0 + 2.0 * cert.eta(tm, &xm, mode) + cert.eta(t1, &xb, mode));
        if (qa - qb).is_finite() {
            est = est.max((qa - qb).abs());
        }
    }
    let slack = (10.0 * est).max(1e-9);
    let mut decrease = CheckReport::new("decrease", slack);
    for k in 0..steps {
        let t = traj.time(k);
        decrease.record(slack - q[k], floor[k], || Location {
            t,
            x: traj.state(k).to_vec(),
            mode: sigma.mode_at(t).get(),
        });
    }
    if steps == 0 {
        decrease.worst_margin = slack;
    }

    let mut revisit = CheckReport::new("revisit", REVISIT_TOL);
    let mut running_min: Vec<f64> = vec![f64::INFINITY; sigma.max_mode()];
    for k in 0..traj.len() {
        let t = traj.time(k);
        let mode = sigma.mode_at(t);
        let v = cert.v(t, traj.state(k), mode);
        let slot = &mut running_min[mode.zero_based()];
        if slot.is_finite() {
            revisit.record(*slot - v, REVISIT_TOL, || Location { t, x: traj.state(k).to_vec(), mode: mode.get() });
        }
        *slot = slot.min(v);
    }
    if revisit.samples == 0 {
        revisit.worst_margin = 0.0;
    }
    Ok(DecreaseReport { decrease, revisit })
}

/// `∫_s^t α(|h(τ, x(τ), σ(τ))|) dτ ≤ M + μ(t − s) + slack` for all sample
/// pairs `s < t`, by per-step trapezoids evaluated with the step's own
/// mode. The worst pair is found in one pass via the running minimum of
/// `C(s) − μs`.
///
/// The allowance at `t` is `max(1e−6·max(1, M), 10·E(t))`, where `E(t)`
/// accumulates the step-doubling estimate `|T_h − T_2h|/3` of the
/// quadrature error over consecutive same-mode step pairs up to `t`.
/// Reported `slack` is the final allowance.
pub fn check_integral_bound(
    traj: &Trajectory,
    sigma: &SwitchingSignal,
    sys: &SwitchedSystem,
    params: &IntegralBoundParams,
) -> Result<CheckReport> {
    check_signal_matches(traj, sigma)?;
    let base = 1e-6 * params.m.max(1.0);
    let mut rep = CheckReport::new("integral_bound", base);
    let a = |t: f64, x: &[f64], m: ModeIndex| (params.alpha)(sys.output_norm(t, x, m));
    let mut cum = 0.0;
    let mut err = 0.0;
    // Previous step's (mode, t0, α(t0)) with its trapezoid, for pairing.
    let mut prev: Option<(ModeIndex, f64, f64, f64)> = None;
    // min over s <= t of C(s) − μ s, and where it was attained.
    let mut best = (-params.mu * traj.time(0), 0usize);
    for k in 0..traj.len() - 1 {
        let (t0, t1) = (traj.time(k), traj.time(k + 1));
        let mode = sigma.mode_at(t0);
        let (a0, a1) = (a(t0, traj.state(k), mode), a(t1, traj.state(k + 1), mode));
        let trap = 0.5 * (t1 - t0) * (a0 + a1);
        cum += trap;
        prev = match prev {
            Some((m, s0, as0, trap0)) if m == mode => {
                err += ((trap0 + trap) - 0.5 * (t1 - s0) * (as0 + a1)).abs() / 3.0;
                None
            }
            _ => Some((mode, t0, a0, trap)),
        };
        let allow = base.max(10.0 * err);
        let lhs = (cum - params.mu * t1) - best.0;
        let margin = params.m - lhs;
        let s_idx = best.1;
        rep.record(margin, allow, || Location {
            t: t1,
            x: traj.state(k + 1).to_vec(),
            mode: sigma.mode_at(traj.time(s_idx)).get(),
        });
        if cum - params.mu * t1 < best.0 {
            best = (cum - params.mu * t1, k + 1);
        }
    }
    rep.slack = base.max(10.0 * err);
    if rep.samples == 0 {
        rep.worst_margin = params.m;
    }
    Ok(rep)
}

/// Central finite differences of `V` against the analytic gradient at the
/// given points, relative error `|fd − g| / max(|g|, 1)`.
pub fn check_gradient(
    cert: &LyapunovCertificate,
    points: &[(f64, Vec<f64>, ModeIndex)],
    rel_tol: f64,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("gradient", rel_tol);
    for (t, x, mode) in points {
        let n = x.len();
        let mut g = vec![0.0; n];
        if !cert.gradient(*t, x, *mode, &mut g) {
            return Err(Error::Unsupported("certificate has no analytic gradient".into()));
        }
        let mut y = x.clone();
        for j in 0..n {
            let d = 1e-5 * x[j].abs().max(1.0);
            y[j] = x[j] + d;
            let vp = cert.v(*t, &y, *mode);
            y[j] = x[j] - d;
            let vm = cert.v(*t, &y, *mode);
            y[j] = x[j];
            let fd = (vp - vm) / (2.0 * d);
            let err = (fd - g[j]).abs() / g[j].abs().max(1.0);
            rep.record(rel_tol - err, 0.0, || Location { t: *t, x: x.clone(), mode: mode.get() });
        }
    }
    Ok(rep)
}
