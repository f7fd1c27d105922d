//! Bounded search for bounded output-zero trajectories of a reduced
//! limiting system that stay away from the origin.
//!
//! Candidates are indexed `0..budget`. The first `2·n·N` are the constant
//! vertex controls from the axis points `±r·e_j`; the rest are drawn from a
//! per-index seed, either as open-loop controls of the constrained class or
//! as closed-loop controls restricted, cell by cell, to the face of
//! `U_{x(t)}` on which the output vanishes. The lowest-index counterexample
//! wins, so results do not depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_control_constraint, ControlClassConstraint, ReducedLimitingSystem, ZeroingCandidate};
use crate::error::{Error, Result};
use crate::integrate::{simulate_relaxed, steps_for, IntegratorConfig, Rk4};
use crate::model::{norm, ModeIndex, RelaxedControl, SimplexPoint, SwitchingSignal};
use crate::rng::{derive_seed, rng_from_seed};
use crate::signals::{gen_arbitrary, gen_measure_constrained, gen_pattern, MeasureConstraint, PatternConstraint};

const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FalsifierConfig {
    /// Required lower bound on `|x(t)|`, as a fraction of `|x0| = x0_radius`.
    pub eps: f64,
    /// Horizon `T` of each candidate, in seconds.
    pub span: f64,
    pub residual_tol: f64,
    /// Maximum number of candidates evaluated.
    pub budget: usize,
    pub seed: u64,
    /// Cell length of candidate controls.
    pub control_step: f64,
    pub integrator: IntegratorConfig,
    pub x0_radius: f64,
    /// Probability that a random candidate is open-loop.
    pub open_loop_prob: f64,
}

impl Default for FalsifierConfig {
    fn default() -> Self {
        FalsifierConfig {
            eps: 0.5,
            span: 5.0,
            residual_tol: 1e-8,
            budget: 10_000,
            seed: 0,
            control_step: 0.01,
            integrator: IntegratorConfig::with_step(0.01),
            x0_radius: 1.0,
            open_loop_prob: 0.5,
        }
    }
}

impl FalsifierConfig {
    fn validate(&self, sigma: &ReducedLimitingSystem) -> Result<()> {
        self.integrator.validate()?;
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::param(format!("eps must lie in (0, 1], got {}", self.eps)));
        }
        if !(self.x0_radius > 0.0 && self.control_step > 0.0 && self.residual_tol >= 0.0) {
            return Err(Error::param("x0_radius and control_step must be positive, residual_tol nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.open_loop_prob) {
            return Err(Error::param("open_loop_prob must lie in [0, 1]"));
        }
        for c in sigma.constraints() {
            if let Some(w) = c.window() {
                if self.span < w {
                    return Err(Error::param(format!("span {} is shorter than the constraint window {w}", self.span)));
                }
            }
        }
        if !(self.span > 0.0) {
            return Err(Error::param("span must be positive"));
        }
        Ok(())
    }

    fn eps_abs(&self) -> f64 {
        self.eps * self.x0_radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FalsifierVerdict {
    NoCounterexampleFound,
    Counterexample { candidate: Box<ZeroingCandidate>, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalsifierOutcome {
    pub verdict: FalsifierVerdict,
    pub budget_used: usize,
    pub seed: u64,
    pub eps: f64,
    pub residual_tol: f64,
    pub span: f64,
    pub control_step: f64,
    pub integrator_step: f64,
}

impl FalsifierOutcome {
    pub fn found(&self) -> bool {
        matches!(self.verdict, FalsifierVerdict::Counterexample { .. })
    }

    pub fn candidate(&self) -> Option<&ZeroingCandidate> {
        match &self.verdict {
            FalsifierVerdict::Counterexample { candidate, .. } => Some(candidate),
            FalsifierVerdict::NoCounterexampleFound => None,
        }
    }
}

/// Searches for `(x0, u)` with `min |x| ≥ eps·|x0|` on `[0, span]`, output
/// residual at most `residual_tol`, zero weight on every component whose
/// output entry exceeds the tolerance, `u(t) ∈ U_{x(t)}`, and every class
/// constraint of `Σ` satisfied. "No counterexample" is evidence only.
///
/// A found candidate is re-simulated and re-checked; disagreement is
/// reported as [`Error::Revalidation`].
pub fn wzsd_falsify(sigma: &ReducedLimitingSystem, cfg: &FalsifierConfig) -> Result<FalsifierOutcome> {
    cfg.validate(sigma)?;
    let hit = (0..cfg.budget).into_par_iter().find_map_first(|k| evaluate(sigma, cfg, k).map(|c| (k, c)));
    let (verdict, budget_used) = match hit {
        Some((k, cand)) => {
            let x0 = cand.trajectory.state(0).to_vec();
            let u = cand.control.clone().expect("candidates carry their control");
            match assess(sigma, cfg, &u, &x0) {
                Some(again) if again.trajectory.max_deviation(&cand.trajectory).is_ok_and(|d| d <= 1e-9) => {}
                Some(_) => return Err(Error::Revalidation(format!("candidate {k} re-simulates differently"))),
                None => return Err(Error::Revalidation(format!("candidate {k} fails its checks on re-simulation"))),
            }
            (FalsifierVerdict::Counterexample { candidate: Box::new(cand), index: k }, k + 1)
        }
        None => (FalsifierVerdict::NoCounterexampleFound, cfg.budget),
    };
    Ok(FalsifierOutcome {
        verdict,
        budget_used,
        seed: cfg.seed,
        eps: cfg.eps,
        residual_tol: cfg.residual_tol,
        span: cfg.span,
        control_step: cfg.control_step,
        integrator_step: cfg.integrator.step,
    })
}

fn evaluate(sigma: &ReducedLimitingSystem, cfg: &FalsifierConfig, k: usize) -> Option<ZeroingCandidate> {
    let (n, nm) = (sigma.dim(), sigma.n_modes());
    let fixed = 2 * n * nm;
    if k < fixed {
        let mode = ModeIndex::from_zero_based(k / (2 * n));
        let axis = (k / 2) % n;
        let mut x0 = vec![0.0; n];
        x0[axis] = if k % 2 == 0 { cfg.x0_radius } else { -cfg.x0_radius };
        let u = RelaxedControl::constant(SimplexPoint::vertex(nm, mode), 0.0, cfg.span, cfg.control_step).ok()?;
        return assess(sigma, cfg, &u, &x0);
    }
    let mut rng = rng_from_seed(derive_seed(cfg.seed, k as u64));
    let x0 = random_x0(&mut rng, n, cfg.x0_radius);
    let u = if rng.random_bool(cfg.open_loop_prob) {
        open_loop(sigma, cfg, &mut rng)?
    } else {
        closed_loop(sigma, cfg, &mut rng, &x0)?
    };
    assess(sigma, cfg, &u, &x0)
}

/// Uniform direction, or a signed axis with probability 1/4.
fn random_x0(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    if rng.random_bool(0.25) {
        let mut x = vec![0.0; n];
        x[rng.random_range(0..n)] = if rng.random_bool(0.5) { r } else { -r };
        return x;
    }
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let l = norm(&x);
        if l > 1e-9 {
            return x.into_iter().map(|v| v * r / l).collect();
        }
    }
}

/// A member of the constrained class, quantized to the control grid. The
/// generating parameters are tightened so that quantization stays inside
/// the class.
fn open_loop(sigma: &ReducedLimitingSystem, cfg: &FalsifierConfig, rng: &mut ChaCha8Rng) -> Option<RelaxedControl> {
    let seed: u64 = rng.random();
    let span = (0.0, cfg.span);
    let du = cfg.control_step;
    let signal: SwitchingSignal = match sigma.constraints().first().copied().unwrap_or(ControlClassConstraint::None) {
        ControlClassConstraint::None => {
            let mean = rng.random_range(0.02..2.0);
            gen_arbitrary(sigma.n_modes(), span, mean, seed).ok()?
        }
        ControlClassConstraint::IntegralLowerBound { mode, window, bound } => {
            let c = MeasureConstraint::new(window, (bound + 4.0 * du).min(window), mode).ok()?;
            gen_measure_constrained(&c, sigma.n_modes(), span, seed).ok()?
        }
        ControlClassConstraint::Pattern(p) => {
            let c = PatternConstraint::new(p.window - 8.0 * du, p.dm + du, (p.d_max - du).max(p.dm + du)).ok()?;
            gen_pattern(&c, span, seed).ok()?
        }
    };
    let q = signal.quantized(du).ok()?;
    crate::model::signal_to_control(&q, du, sigma.n_modes()).ok()
}

/// Components allowed at `(t, x)`: zero output entry and `x ∈ χ_i`.
fn allowed(sigma: &ReducedLimitingSystem, cfg: &FalsifierConfig, t: f64, x: &[f64]) -> Vec<bool> {
    (1..=sigma.n_modes())
        .map(|i| {
            let m = ModeIndex::of(i);
            sigma.hhat_entry(t, x, m) <= cfg.residual_tol && sigma.covering().contains_tol(x, m, MEMBERSHIP_TOL)
        })
        .collect()
}

/// Builds a control cell by cell, integrating as it goes, and gives up as
/// soon as no face-restricted, constraint-respecting choice exists.
fn closed_loop(
    sigma: &ReducedLimitingSystem,
    cfg: &FalsifierConfig,
    rng: &mut ChaCha8Rng,
    x0: &[f64],
) -> Option<RelaxedControl> {
    let n = sigma.dim();
    let du = cfg.control_step;
    let cells = ((cfg.span / du) - 1e-9).ceil().max(1.0) as usize;
    let constraint = sigma.constraints().first().copied().unwrap_or(ControlClassConstraint::None);
    let target: Option<RelaxedControl> = match constraint {
        ControlClassConstraint::Pattern(_) => Some(open_loop(sigma, cfg, rng)?),
        _ => None,
    };
    let vertex_bias = rng.random_range(0.0..1.0);
    let eps_abs = cfg.eps_abs();

    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut rk = Rk4::new(n);
    let mut values: Vec<SimplexPoint> = Vec::with_capacity(cells);
    let mut current: Option<Vec<f64>> = None;
    let mut hold = 0usize;
    // Constrained-mode weight of recent cells, for the integral kind.
    let mut recent: Vec<f64> = Vec::new();
    for k in 0..cells {
        let t = k as f64 * du;
        let ok = allowed(sigma, cfg, t, &x);
        if !ok.iter().any(|&a| a) {
            return None;
        }
        let w: Vec<f64> = if let Some(tg) = &target {
            let w = tg.values()[k.min(tg.len() - 1)].weights().to_vec();
            if w.iter().zip(&ok).any(|(wi, a)| *wi > 0.0 && !a) {
                return None;
            }
            w
        } else {
            let keep = hold > 0
                && current.as_ref().is_some_and(|c| c.iter().zip(&ok).all(|(wi, a)| *wi == 0.0 || *a));
            let mut w = if keep {
                hold -= 1;
                current.clone().unwrap()
            } else {
                hold = rng.random_range(0..50);
                random_face_point(rng, &ok, vertex_bias)
            };
            if let ControlClassConstraint::IntegralLowerBound { mode, window, bound } = constraint {
                let cells_w = (window / du).round() as usize;
                let lookback = cells_w.saturating_sub(1).min(recent.len());
                let have: f64 = recent[recent.len() - lookback..].iter().sum::<f64>() * du;
                let need = ((bound - have) / du + 1e-9).clamp(0.0, 1.0);
                let j = mode.zero_based();
                if need > 0.0 && w[j] < need {
                    if !ok[j] {
                        return None;
                    }
                    let rest: f64 = w.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, v)| v).sum();
                    let scale = if rest > 0.0 { (1.0 - need) / rest } else { 0.0 };
                    for (i, v) in w.iter_mut().enumerate() {
                        *v = if i == j { need.max(*v).min(1.0) } else { *v * scale };
                    }
                }
                recent.push(w[j]);
            }
            current = Some(w.clone());
            w
        };
        let p = SimplexPoint::new(w).ok()?;

        let sub = steps_for(du, cfg.integrator.step);
        let h = du / sub as f64;
        let mut rhs = |tt: f64, xx: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let mut col = vec![0.0; n];
            for (i, wi) in p.weights().iter().enumerate() {
                if *wi > 0.0 {
                    sigma.fhat(tt, xx, ModeIndex::from_zero_based(i), &mut col);
                    out.iter_mut().zip(&col).for_each(|(o, c)| *o += wi * c);
                }
            }
        };
        for s in 0..sub {
            rk.step(&mut rhs, t + s as f64 * h, &x, h, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
        let r = norm(&x);
        if !r.is_finite() || r < eps_abs || r > cfg.integrator.divergence_bound {
            return None;
        }
        let end_ok = allowed(sigma, cfg, t + du, &x);
        if p.weights().iter().zip(&end_ok).any(|(wi, a)| *wi > 0.0 && !a) {
            return None;
        }
        values.push(p);
    }
    RelaxedControl::new(0.0, du, values).ok()
}

/// A vertex of the allowed face with probability `vertex_bias`, otherwise
/// normalized exponentials on it.
fn random_face_point(rng: &mut ChaCha8Rng, ok: &[bool], vertex_bias: f64) -> Vec<f64> {
    let idx: Vec<usize> = ok.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i).collect();
    let mut w = vec![0.0; ok.len()];
    if rng.random_bool(vertex_bias) || idx.len() == 1 {
        w[idx[rng.random_range(0..idx.len())]] = 1.0;
        return w;
    }
    let mut total = 0.0;
    for &i in &idx {
        let e: f64 = -(1.0 - rng.random::<f64>()).ln();
        w[i] = e;
        total += e;
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Simulates `(x0, u)` and applies every acceptance check.
fn assess(sigma: &ReducedLimitingSystem, cfg: &FalsifierConfig, u: &RelaxedControl, x0: &[f64]) -> Option<ZeroingCandidate> {
    let sys = sigma.as_switched();
    let traj = simulate_relaxed(&sys, u, 0.0, x0, cfg.span, &cfg.integrator).ok()?;
    let min = traj.min_norm();
    if !(min >= cfg.eps_abs()) {
        return None;
    }
    let mut residual: f64 = 0.0;
    for k in 0..traj.len().saturating_sub(1) {
        let (t0, t1) = (traj.time(k), traj.time(k + 1));
        let p = u.at(0.5 * (t0 + t1));
        for (t, x) in [(t0, traj.state(k)), (t1, traj.state(k + 1))] {
            let ok = allowed(sigma, cfg, t, x);
            if p.weights().iter().zip(&ok).any(|(w, a)| *w > 0.0 && !a) {
                return None;
            }
            residual = residual.max(sigma.output(t, x, p));
        }
    }
    if residual > cfg.residual_tol {
        return None;
    }
    for c in sigma.constraints() {
        if !check_control_constraint(u, c).ok()?.satisfied {
            return None;
        }
    }
    Some(ZeroingCandidate {
        trajectory: traj,
        signal: None,
        control: Some(u.clone()),
        eps: min,
        output_sup: residual,
        span: (0.0, cfg.span),
    })
}
