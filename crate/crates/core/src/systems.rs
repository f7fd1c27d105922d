//! Registry of the worked example systems with certificates, coverings,
//! signal classes and reduced limiting systems wired together.
//!
//! Default callables:
//! - `motivating(a)`: no callables; the cube root is the real (odd) one.
//! - `example1`: `g_i(t, ξ) = sin t`, persistently exciting with `T = π`.
//! - `example4`: `b1(t) = 1 + sin(t)/2`, `b2(t) = 1 + cos t`,
//!   `α_j(t, v) = v`, `ρ_j(v) = v²`. `b1` stays positive so the bundled
//!   policy never has to slide along `ξ1 = 0`.
//! - `inverter`: `L1 = L2 = C1 = C2 = 1`, `g_i(t, v) = v`, `ℓ_i(v) = v²`,
//!   pattern class `S[10, 0.5, 2]`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::integrate::CoveringPolicy;
use crate::limiting::{build_reduced, ControlClassConstraint, LimitSpec, ReducedLimitingSystem};
use crate::lyapunov::{Gauge, IntegralBoundParams, LyapunovCertificate};
use crate::model::{Covering, HalfSpace, ModeIndex, OutputMap, ScalarField, SwitchedSystem, SwitchingSignal, VectorField};
use crate::signals::{gen_arbitrary, gen_measure_constrained, gen_pattern, validate_measure, validate_pattern, MeasureConstraint, PatternConstraint};
use crate::stability::{StabilityClass, TrajectorySource};

/// `(t, ξ) -> value`.
pub type StateGain = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// `(t, v) -> value` for scalar arguments.
pub type ScalarGain = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `t -> value`.
pub type TimeGain = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Switching class the trajectories of an entry are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalClass {
    Arbitrary { mean_dwell: f64 },
    Measure(MeasureConstraint),
    Pattern(PatternConstraint),
    /// Closed-loop switching from the entry's covering policy.
    CoveringPolicy,
}

impl SignalClass {
    pub fn generate(&self, n_modes: usize, span: (f64, f64), seed: u64) -> Result<SwitchingSignal> {
        match self {
            SignalClass::Arbitrary { mean_dwell } => gen_arbitrary(n_modes, span, *mean_dwell, seed),
            SignalClass::Measure(c) => gen_measure_constrained(c, n_modes, span, seed),
            SignalClass::Pattern(c) => gen_pattern(c, span, seed),
            SignalClass::CoveringPolicy => {
                Err(Error::Unsupported("covering-policy classes are generated in closed loop".into()))
            }
        }
    }

    /// Membership of `σ` in the class (vacuous for arbitrary switching).
    pub fn contains(&self, sigma: &SwitchingSignal) -> Result<bool> {
        match self {
            SignalClass::Arbitrary { .. } | SignalClass::CoveringPolicy => Ok(true),
            SignalClass::Measure(c) => Ok(validate_measure(sigma, c)?.satisfied),
            SignalClass::Pattern(c) => Ok(validate_pattern(sigma, c)?.satisfied),
        }
    }
}

#[derive(Clone)]
pub struct RegistryEntry {
    pub id: &'static str,
    pub system: SwitchedSystem,
    pub certificate: LyapunovCertificate,
    pub covering: Covering,
    pub signal_class: SignalClass,
    pub reduced: ReducedLimitingSystem,
    pub policy: Option<CoveringPolicy>,
    /// Gauge `α` of the output integral bound, when the entry states one.
    pub integral_alpha: Option<Gauge>,
    pub expected_verdict: StabilityClass,
    pub params: serde_json::Value,
}

impl std::fmt::Debug for RegistryEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegistryEntry").field("id", &self.id).field("system", &self.system).finish_non_exhaustive()
    }
}

impl RegistryEntry {
    /// JSON descriptor for manifests and report bundles.
    pub fn describe(&self) -> serde_json::Value {
        json!({
            "id": self.id,
            "dim": self.system.dim(),
            "n_modes": self.system.n_modes(),
            "output_dim": self.system.output_dim(),
            "params": self.params,
            "signal_class": self.signal_class,
            "covering_trivial": self.covering.is_trivial(),
            "reduced_constraints": self.reduced.constraints(),
            "expected_verdict": self.expected_verdict,
        })
    }

    /// Integral-bound parameters with `M = V(t0, x0, σ(t0))`, `μ = 0`.
    pub fn integral_bound_for(&self, t0: f64, x0: &[f64], mode: ModeIndex) -> Option<Result<IntegralBoundParams>> {
        let alpha = self.integral_alpha.clone()?;
        Some(IntegralBoundParams::new(alpha, self.certificate.v(t0, x0, mode), 0.0))
    }
}

/// Trajectory source matching the entry's class.
pub fn signal_source(e: &RegistryEntry) -> Result<TrajectorySource> {
    match e.signal_class {
        SignalClass::CoveringPolicy => {
            let policy = e.policy.clone().ok_or_else(|| Error::Input(format!("{} has no covering policy", e.id)))?;
            Ok(TrajectorySource::Covering { covering: e.covering.clone(), policy })
        }
        class => {
            let n = e.system.n_modes();
            Ok(TrajectorySource::Signals(Arc::new(move |seed, span| class.generate(n, span, seed))))
        }
    }
}

fn cbrt_signed(v: f64) -> f64 {
    v.cbrt()
}

fn field(f: impl Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync + 'static) -> VectorField {
    Arc::new(move |t, x, m: ModeIndex, out: &mut [f64]| f(t, x, m.get(), out))
}

fn scalar(f: impl Fn(f64, &[f64], usize) -> f64 + Send + Sync + 'static) -> ScalarField {
    Arc::new(move |t, x, m: ModeIndex| f(t, x, m.get()))
}

fn scalar_output(f: impl Fn(f64, &[f64], usize) -> f64 + Send + Sync + 'static) -> OutputMap {
    Arc::new(move |t, x, m: ModeIndex, out: &mut [f64]| out[0] = f(t, x, m.get()))
}

fn difference(f: VectorField, g: VectorField) -> VectorField {
    Arc::new(move |t, x, m, out: &mut [f64]| {
        let mut tmp = vec![0.0; out.len()];
        f(t, x, m, out);
        g(t, x, m, &mut tmp);
        out.iter_mut().zip(&tmp).for_each(|(o, v)| *o -= v);
    })
}

fn half_norm_sq() -> (ScalarField, VectorField) {
    (
        scalar(|_, x, _| 0.5 * x.iter().map(|v| v * v).sum::<f64>()),
        field(|_, x, _, out| out.copy_from_slice(x)),
    )
}

/// Sample points for hypothesis checks.
fn probe_grid() -> impl Iterator<Item = (f64, f64)> {
    (0..40).flat_map(|i| (0..41).map(move |j| (i as f64 * 0.37, -4.0 + 0.2 * j as f64)))
}

/// The two-mode rotation / damped-rotation example with the measure class
/// `S_{1, 0.2}` on mode 2.
pub fn motivating(a: f64) -> Result<RegistryEntry> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param(format!("a must be positive, got {a}")));
    }
    let f = field(move |_, x, i, out| {
        if i == 1 {
            out[0] = x[1];
            out[1] = -x[0];
        } else {
            out[0] = -cbrt_signed(x[0]) + a * x[1];
            out[1] = -a * x[0];
        }
    });
    let fhat = field(move |_, x, i, out| {
        if i == 1 {
            out[0] = x[1];
            out[1] = -x[0];
        } else {
            out[0] = a * x[1];
            out[1] = 0.0;
        }
    });
    let h = scalar_output(|_, x, i| if i == 1 { 0.0 } else { x[0].abs() });
    let system = SwitchedSystem::new("motivating", 2, 2, 1, f.clone(), h)
        .with_decomposition(fhat.clone(), Some(difference(f, fhat)))
        .with_time_invariant_limits(true);
    let (v, grad) = half_norm_sq();
    let eta = scalar(|_, x, i| if i == 1 { 0.0 } else { x[0].abs().powf(4.0 / 3.0) });
    let certificate = LyapunovCertificate::new(v, Arc::new(|s| 0.5 * s * s), Arc::new(|s| 0.5 * s * s), eta)?.with_gradient(grad);
    let covering = Covering::trivial(2, 2);
    let class = MeasureConstraint::new(1.0, 0.2, ModeIndex::of(2))?;
    let reduced = build_reduced(
        &system,
        &covering,
        vec![ControlClassConstraint::IntegralLowerBound { mode: ModeIndex::of(2), window: 1.0, bound: 0.2 }],
        LimitSpec::TimeInvariant,
    )?;
    Ok(RegistryEntry {
        id: "motivating",
        system,
        certificate,
        covering,
        signal_class: SignalClass::Measure(class),
        reduced,
        policy: None,
        integral_alpha: Some(Arc::new(|s: f64| s.abs().powf(4.0 / 3.0))),
        expected_verdict: StabilityClass::GuasConsistent,
        params: json!({ "a": a, "T0": 1.0, "delta0": 0.2 }),
    })
}

/// `∫_{t0}^{t0+T} |g(s)|^r ds` by the composite midpoint rule.
pub fn excitation_integral(g: impl Fn(f64) -> f64, t0: f64, len: f64, r: f64) -> f64 {
    let n = 20_000;
    let h = len / n as f64;
    (0..n).map(|k| g(t0 + (k as f64 + 0.5) * h).abs().powf(r)).sum::<f64>() * h
}

/// Three-mode system with a common weak Lyapunov function under arbitrary
/// switching. Reduced limits use `ĝ_i(t + shift, ·)`.
pub fn example1(g1: StateGain, g2: StateGain, limit_shift: f64) -> Result<RegistryEntry> {
    for (name, g) in [("g1", &g1), ("g2", &g2)] {
        if probe_grid().any(|(t, v)| !g(t, &[v, -v]).is_finite()) {
            return Err(Error::param(format!("{name} is not finite on the probe grid")));
        }
    }
    let (a1, a2) = (g1.clone(), g2.clone());
    let f = field(move |t, x, i, out| match i {
        1 => {
            let g = a1(t, x);
            out[0] = -g * x[1];
            out[1] = g * x[0] - x[1];
        }
        _ => {
            let k = if i == 2 { 1.0 } else { 2.0 };
            let g = a2(t, x);
            out[0] = k * g * x[1] - x[0];
            out[1] = -k * g * x[0];
        }
    });
    let fhat_at = |g1: StateGain, g2: StateGain, shift: f64| {
        field(move |t, x, i, out| match i {
            1 => {
                out[0] = 0.0;
                out[1] = g1(t + shift, &[x[0], 0.0]) * x[0];
            }
            _ => {
                let k = if i == 2 { 1.0 } else { 2.0 };
                out[0] = k * g2(t + shift, &[0.0, x[1]]) * x[1];
                out[1] = 0.0;
            }
        })
    };
    let fhat = fhat_at(g1.clone(), g2.clone(), 0.0);
    let eta_fn = |_: f64, x: &[f64], i: usize| if i == 1 { x[1] * x[1] } else { x[0] * x[0] };
    let system = SwitchedSystem::new("example1", 2, 3, 1, f.clone(), scalar_output(eta_fn))
        .with_decomposition(fhat.clone(), Some(difference(f, fhat)));
    let (v, grad) = half_norm_sq();
    let certificate =
        LyapunovCertificate::new(v, Arc::new(|s| 0.5 * s * s), Arc::new(|s| 0.5 * s * s), scalar(eta_fn))?.with_gradient(grad);
    let covering = Covering::trivial(2, 3);
    let reduced = build_reduced(
        &system,
        &covering,
        vec![],
        LimitSpec::UserSupplied { fhat: fhat_at(g1, g2, limit_shift), h: scalar_output(eta_fn), output_dim: 1 },
    )?;
    Ok(RegistryEntry {
        id: "example1",
        system,
        certificate,
        covering,
        signal_class: SignalClass::Arbitrary { mean_dwell: 0.5 },
        reduced,
        policy: None,
        integral_alpha: None,
        expected_verdict: StabilityClass::GuasConsistent,
        params: json!({ "g": "user", "limit_shift": limit_shift, "mean_dwell": 0.5 }),
    })
}

pub fn example1_default() -> RegistryEntry {
    let g: StateGain = Arc::new(|t, _| t.sin());
    let mut e = example1(g.clone(), g, 1000.0).expect("default parameters are valid");
    e.params = json!({ "g": "sin t", "limit_shift": 1000.0, "mean_dwell": 0.5 });
    e
}

/// The half-plane covering `χ1 = χ2 = {ξ1 ≥ 0}`, `χ3 = {ξ1 ≤ 0}`.
pub fn example4_covering() -> Covering {
    let right = vec![HalfSpace::new(vec![1.0, 0.0], 0.0)];
    let left = vec![HalfSpace::new(vec![-1.0, 0.0], 0.0)];
    Covering::new(2, vec![right.clone(), right, left]).expect("valid covering")
}

/// Three-mode multiple-Lyapunov example on the half-plane covering, with
/// closed-loop policy "mode 3 iff ξ1 < 0, else mode 1".
pub fn example4(
    b1: TimeGain,
    b2: TimeGain,
    alpha1: ScalarGain,
    alpha2: ScalarGain,
    rho1: Gauge,
    rho2: Gauge,
    limit_shift: f64,
) -> Result<RegistryEntry> {
    for (name, b) in [("b1", &b1), ("b2", &b2)] {
        if (0..2000).any(|k| !b(k as f64 * 0.05).is_finite()) {
            return Err(Error::param(format!("{name} is not bounded on the probe grid")));
        }
    }
    for (j, alpha, rho) in [(1, &alpha1, &rho1), (2, &alpha2, &rho2)] {
        if let Some((t, v)) = probe_grid().find(|&(t, v)| rho(v) > v * alpha(t, v) + 1e-12 || (v != 0.0 && !(rho(v) > 0.0))) {
            return Err(Error::param(format!("ρ{j}(v) <= v·α{j}(t, v) fails or ρ{j} is not positive definite at t = {t}, v = {v}")));
        }
    }
    let (c1, c2, d1, d2) = (b1.clone(), b2.clone(), alpha1.clone(), alpha2.clone());
    let f = field(move |t, x, i, out| match i {
        1 => {
            let b = c1(t);
            out[0] = b * x[1];
            out[1] = -b * x[0] - d1(t, x[1]);
        }
        2 => {
            let b = c2(t);
            out[0] = -d2(t, x[0]) - b * x[1];
            out[1] = b * x[0];
        }
        _ => {
            out[0] = -3.0 * x[0] + 5.0 * x[1];
            out[1] = -5.0 * x[0] + 3.0 * x[1];
        }
    });
    let fhat_at = |b1: TimeGain, b2: TimeGain, shift: f64| {
        field(move |t, x, i, out| match i {
            1 => {
                out[0] = 0.0;
                out[1] = -b1(t + shift) * x[0];
            }
            2 => {
                out[0] = -b2(t + shift) * x[1];
                out[1] = 0.0;
            }
            _ => {
                out[0] = -3.0 * x[0] + 5.0 * x[1];
                out[1] = -5.0 * x[0] + 3.0 * x[1];
            }
        })
    };
    let fhat = fhat_at(b1.clone(), b2.clone(), 0.0);
    let (r1, r2) = (rho1.clone(), rho2.clone());
    let eta_fn = move |_: f64, x: &[f64], i: usize| match i {
        1 => r1(x[1]),
        2 => r2(x[0]),
        _ => 0.0,
    };
    let eta_out = eta_fn.clone();
    let system = SwitchedSystem::new("example4", 2, 3, 1, f.clone(), scalar_output(eta_out.clone()))
        .with_decomposition(fhat.clone(), Some(difference(f, fhat)));
    let v = scalar(|_, x, i| {
        if i == 3 {
            5.0 * x[0] * x[0] - 6.0 * x[0] * x[1] + 5.0 * x[1] * x[1]
        } else {
            5.0 * (x[0] * x[0] + x[1] * x[1])
        }
    });
    let grad = field(|_, x, i, out| {
        if i == 3 {
            out[0] = 10.0 * x[0] - 6.0 * x[1];
            out[1] = -6.0 * x[0] + 10.0 * x[1];
        } else {
            out[0] = 10.0 * x[0];
            out[1] = 10.0 * x[1];
        }
    });
    let certificate =
        LyapunovCertificate::new(v, Arc::new(|s| 2.0 * s * s), Arc::new(|s| 8.0 * s * s), scalar(eta_fn))?.with_gradient(grad);
    let covering = example4_covering();
    let policy: CoveringPolicy =
        Arc::new(|_, x, _| if x[0] < 0.0 { ModeIndex::of(3) } else { ModeIndex::of(1) });
    let reduced = build_reduced(
        &system,
        &covering,
        vec![],
        LimitSpec::UserSupplied { fhat: fhat_at(b1, b2, limit_shift), h: scalar_output(eta_out), output_dim: 1 },
    )?;
    Ok(RegistryEntry {
        id: "example4",
        system,
        certificate,
        covering,
        signal_class: SignalClass::CoveringPolicy,
        reduced,
        policy: Some(policy),
        integral_alpha: None,
        expected_verdict: StabilityClass::GuasConsistent,
        params: json!({ "b": "user", "limit_shift": limit_shift }),
    })
}

pub fn example4_default() -> RegistryEntry {
    let alpha: ScalarGain = Arc::new(|_, v| v);
    let rho: Gauge = Arc::new(|v| v * v);
    let mut e = example4(
        Arc::new(|t: f64| 1.0 + 0.5 * t.sin()),
        Arc::new(|t: f64| 1.0 + t.cos()),
        alpha.clone(),
        alpha,
        rho.clone(),
        rho,
        1000.0,
    )
    .expect("default parameters are valid");
    e.params = json!({ "b1": "1 + sin(t)/2", "b2": "1 + cos t", "alpha": "v", "rho": "v^2", "limit_shift": 1000.0 });
    e
}

/// Inverter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct InverterParams {
    pub l1: f64,
    pub l2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for InverterParams {
    fn default() -> Self {
        InverterParams { l1: 1.0, l2: 1.0, c1: 1.0, c2: 1.0 }
    }
}

type Mat4 = [[f64; 4]; 4];

const M1: Mat4 = [[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0], [0.0, -1.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0]];
const M2: Mat4 = [[0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0]];
const M1_HAT: Mat4 = [[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, -1.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0]];
const M2_HAT: Mat4 = [[0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0]];

fn scaled(m: &Mat4, p: &[f64; 4]) -> Mat4 {
    let mut a = *m;
    for (r, row) in a.iter_mut().enumerate() {
        row.iter_mut().for_each(|v| *v /= p[r]);
    }
    a
}

fn mul(a: &Mat4, x: &[f64], out: &mut [f64]) {
    for r in 0..4 {
        out[r] = (0..4).map(|c| a[r][c] * x[c]).sum();
    }
}

/// Mode matrices `(A1, A2, Â1, Â2)` for the given parameters.
pub fn inverter_matrices(p: &InverterParams) -> [Mat4; 4] {
    let d = [p.l1, p.l2, p.c1, p.c2];
    [scaled(&M1, &d), scaled(&M2, &d), scaled(&M1_HAT, &d), scaled(&M2_HAT, &d)]
}

/// Four-state, two-mode inverter `ẋ = A_σ x − e4 g_σ(t, x4)` with the
/// pattern class `S[T, dm, dM]`, which needs `dM < π√(L1 C1)`.
pub fn inverter(
    p: InverterParams,
    g1: ScalarGain,
    g2: ScalarGain,
    ell1: Gauge,
    ell2: Gauge,
    pattern: PatternConstraint,
) -> Result<RegistryEntry> {
    if ![p.l1, p.l2, p.c1, p.c2].iter().all(|v| *v > 0.0 && v.is_finite()) {
        return Err(Error::param(format!("inverter parameters must be positive: {p:?}")));
    }
    PatternConstraint::new(pattern.window, pattern.dm, pattern.d_max)?;
    let limit = PI * (p.l1 * p.c1).sqrt();
    if pattern.d_max >= limit {
        return Err(Error::param(format!("dM = {} must be below π√(L1·C1) = {limit}", pattern.d_max)));
    }
    for (i, g, ell) in [(1, &g1, &ell1), (2, &g2, &ell2)] {
        if let Some((t, v)) = probe_grid().find(|&(t, v)| ell(v) > v * g(t, v) + 1e-12 || (v != 0.0 && !(ell(v) > 0.0))) {
            return Err(Error::param(format!("ℓ{i}(v) <= v·g{i}(t, v) fails or ℓ{i} is not positive definite at t = {t}, v = {v}")));
        }
    }
    let [a1, a2, ah1, ah2] = inverter_matrices(&p);
    let (h1, h2) = (g1.clone(), g2.clone());
    let f = field(move |t, x, i, out| {
        let (a, g) = if i == 1 { (&a1, &h1) } else { (&a2, &h2) };
        mul(a, x, out);
        out[3] -= g(t, x[3]);
    });
    let fhat = field(move |_, x, i, out| mul(if i == 1 { &ah1 } else { &ah2 }, x, out));
    let c2 = p.c2;
    let (e1, e2) = (ell1.clone(), ell2.clone());
    let eta_fn = move |_: f64, x: &[f64], i: usize| c2 * if i == 1 { e1(x[3]) } else { e2(x[3]) };
    let system = SwitchedSystem::new("inverter", 4, 2, 1, f.clone(), scalar_output(eta_fn.clone()))
        .with_decomposition(fhat.clone(), Some(difference(f, fhat)))
        .with_time_invariant_limits(true);
    let diag = [p.l1, p.l2, p.c1, p.c2];
    let v = scalar(move |_, x, _| 0.5 * (0..4).map(|k| diag[k] * x[k] * x[k]).sum::<f64>());
    let grad = field(move |_, x, _, out| (0..4).for_each(|k| out[k] = diag[k] * x[k]));
    let lmin = diag.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
    let lmax = diag.iter().cloned().fold(0.0, f64::max) / 2.0;
    let certificate =
        LyapunovCertificate::new(v, Arc::new(move |s| lmin * s * s), Arc::new(move |s| lmax * s * s), scalar(eta_fn))?
            .with_gradient(grad);
    let covering = Covering::trivial(4, 2);
    let reduced =
        build_reduced(&system, &covering, vec![ControlClassConstraint::Pattern(pattern)], LimitSpec::TimeInvariant)?;
    Ok(RegistryEntry {
        id: "inverter",
        system,
        certificate,
        covering,
        signal_class: SignalClass::Pattern(pattern),
        reduced,
        policy: None,
        integral_alpha: None,
        expected_verdict: StabilityClass::GuasConsistent,
        params: json!({ "L1": p.l1, "L2": p.l2, "C1": p.c1, "C2": p.c2, "T": pattern.window, "dm": pattern.dm, "dM": pattern.d_max }),
    })
}

/// Inverter with linear loads and the given parameters and pattern.
pub fn inverter_linear(p: InverterParams, pattern: PatternConstraint) -> Result<RegistryEntry> {
    let g: ScalarGain = Arc::new(|_, v| v);
    let ell: Gauge = Arc::new(|v| v * v);
    inverter(p, g.clone(), g, ell.clone(), ell, pattern)
}

pub fn inverter_default() -> RegistryEntry {
    inverter_linear(InverterParams::default(), PatternConstraint { window: 10.0, dm: 0.5, d_max: 2.0 })
        .expect("default parameters are valid")
}

/// Registry lookup with default parameters (`motivating` uses `a = 1`).
pub fn by_id(id: &str) -> Result<RegistryEntry> {
    match id {
        "motivating" => motivating(1.0),
        "example1" => Ok(example1_default()),
        "example4" => Ok(example4_default()),
        "inverter" => Ok(inverter_default()),
        other => Err(Error::Input(format!("unknown system id {other:?}"))),
    }
}

pub const IDS: [&str; 4] = ["motivating", "example1", "example4", "inverter"];

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn m(i: usize) -> ModeIndex {
        ModeIndex::of(i)
    }

    #[test]
    fn motivating_substitutions() {
        let e = motivating(1.0).unwrap();
        assert_eq!(e.system.eval_f(0.0, &[0.0, 1.0], m(1)), vec![1.0, 0.0]);
        assert_eq!(e.system.eval_f(0.0, &[1.0, 1.0], m(2)), vec![0.0, -1.0]);
        for i in 1..=2 {
            assert_eq!(e.system.eval_f(0.0, &[0.0, 0.0], m(i)), vec![0.0, 0.0]);
        }
        // The odd cube root keeps mode 2 dissipative for negative ξ1.
        let x = [-8.0, 0.0];
        assert_eq!(e.system.eval_f(0.0, &x, m(2))[0], 2.0);
        assert!(motivating(0.0).is_err());
        assert!(motivating(-1.0).is_err());
    }

    #[test]
    fn example1_substitutions() {
        let e = example1_default();
        let t = 0.7;
        assert_eq!(e.system.eval_f(t, &[1.0, 0.0], m(1)), vec![0.0, t.sin()]);
        assert!((excitation_integral(|s| s.sin(), 0.0, PI, 1.0) - 2.0).abs() < 1e-6);
        // Outputs vanish exactly with their coordinate.
        assert_eq!(e.system.eval_h(t, &[3.0, 0.0], m(1)), vec![0.0]);
        assert_eq!(e.system.eval_h(t, &[0.0, 3.0], m(2)), vec![0.0]);
        assert!(e.system.eval_h(t, &[0.0, 3.0], m(1))[0] > 0.0);
        assert!(e.system.eval_h(t, &[3.0, 0.0], m(3))[0] > 0.0);
    }

    #[test]
    fn example1_reduced_matches_hand_assembly() {
        let shift = 1000.0_f64;
        let e = example1_default();
        let x = [0.4, -1.1];
        let t = 2.3;
        let g = (t + shift).sin();
        let mut out = [0.0; 2];
        for (i, want) in [(1, [0.0, g * x[0]]), (2, [g * x[1], 0.0]), (3, [2.0 * g * x[1], 0.0])] {
            e.reduced.fhat(t, &x, m(i), &mut out);
            assert_eq!(out, want, "mode {i}");
        }
        assert_eq!(e.reduced.hhat(t, &x), vec![x[1] * x[1], x[0] * x[0], x[0] * x[0]]);
    }

    #[test]
    fn example4_substitutions() {
        let e = example4_default();
        assert_eq!(e.system.eval_f(0.0, &[1.0, 0.0], m(3)), vec![-3.0, -5.0]);
        assert_eq!(e.certificate.v(0.0, &[1.0, 1.0], m(3)), 4.0);
        assert!(excitation_integral(|s| 1.0 + 0.5 * s.sin(), 100.0, 0.01, 1.0) > 0.0);
        assert!(excitation_integral(|s| 1.0 + s.cos(), 100.0, 2.0 * PI, 1.0) > 6.0);
        let bad_rho: Gauge = Arc::new(|v| 2.0 * v * v);
        let alpha: ScalarGain = Arc::new(|_, v| v);
        let b: TimeGain = Arc::new(|_| 1.0);
        assert!(example4(b.clone(), b, alpha.clone(), alpha, bad_rho.clone(), bad_rho, 0.0).is_err());
    }

    #[test]
    fn example4_mode3_conserves_v3() {
        let e = example4_default();
        let mut rng = crate::rng::rng_from_seed(1);
        let mut g = [0.0; 2];
        for _ in 0..1000 {
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            e.certificate.gradient(0.0, &x, m(3), &mut g);
            let f = e.system.eval_f(0.0, &x, m(3));
            let dv = g[0] * f[0] + g[1] * f[1];
            assert!(dv.abs() <= 1e-12 * (1.0 + x[0] * x[0] + x[1] * x[1]), "{dv}");
        }
    }

    #[test]
    fn inverter_substitutions() {
        let e = inverter_default();
        assert_eq!(e.system.eval_f(0.0, &[0.0, 1.0, 1.0, 1.0], m(1)), vec![0.0, 2.0, -1.0, -2.0]);
        for i in 1..=2 {
            assert_eq!(e.system.eval_f(1.0, &[0.0; 4], m(i)), vec![0.0; 4]);
        }
        let bad = PatternConstraint { window: 10.0, dm: 0.5, d_max: 3.2 };
        assert!(inverter_linear(InverterParams::default(), bad).is_err());
        let ok_for_big_c = inverter_linear(InverterParams { c1: 4.0, ..Default::default() }, bad);
        assert!(ok_for_big_c.is_ok());
    }

    #[test]
    fn inverter_energy_never_increases() {
        let e = inverter_default();
        let mut rng = crate::rng::rng_from_seed(2);
        let mut g = [0.0; 4];
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            for i in 1..=2 {
                e.certificate.gradient(0.0, &x, m(i), &mut g);
                let f = e.system.eval_f(0.0, &x, m(i));
                let dv: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
                let eta = e.certificate.eta(0.0, &x, m(i));
                assert!(dv <= -eta + 1e-12, "{dv} > -{eta}");
            }
        }
    }

    #[test]
    fn decompositions_are_consistent() {
        let mut rng = crate::rng::rng_from_seed(3);
        for id in IDS {
            let e = by_id(id).unwrap();
            let (n, nm) = (e.system.dim(), e.system.n_modes());
            let (mut fh, mut df) = (vec![0.0; n], vec![0.0; n]);
            for _ in 0..1000 {
                let t = rng.random_range(0.0..100.0);
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let i = m(rng.random_range(1..=nm));
                let f = e.system.eval_f(t, &x, i);
                e.system.fhat(t, &x, i, &mut fh);
                assert!(e.system.dferr(t, &x, i, &mut df));
                for k in 0..n {
                    assert!((f[k] - fh[k] - df[k]).abs() <= 1e-10, "{id}");
                }
            }
        }
    }

    #[test]
    fn descriptors_are_json() {
        for id in IDS {
            let d = by_id(id).unwrap().describe();
            assert_eq!(d["id"], id);
            assert!(d["dim"].as_u64().unwrap() >= 2);
        }
        assert!(by_id("nope").is_err());
    }

    #[test]
    fn classes_generate_members() {
        for id in ["motivating", "example1", "inverter"] {
            let e = by_id(id).unwrap();
            let s = e.signal_class.generate(e.system.n_modes(), (0.0, 50.0), 8).unwrap();
            assert!(e.signal_class.contains(&s).unwrap(), "{id}");
        }
        assert!(SignalClass::CoveringPolicy.generate(3, (0.0, 1.0), 0).is_err());
    }
}
