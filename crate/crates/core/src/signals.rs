//! Generators and exact validators for the switching-signal classes:
//! arbitrary switching, the measure class `S_{T0,δ0}` (mode `i` active for
//! at least `δ0` seconds in every window of length `T0`), and the pattern
//! class `S[T, dm, dM]` (every window of length `T` contains a 1-2-1
//! pattern whose pieces last between `dm` and `dM`).
//!
//! Validators work on the breakpoints directly, so they carry no sampling
//! error. Switching instants closer than [`MIN_DWELL`] are not produced by
//! the generators; that is a storage granularity, not a dwell-time
//! assumption.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Covering, ModeIndex, SwitchingSignal, Trajectory};
use crate::rng::rng_from_seed;

/// Smallest interval length the generators emit.
pub const MIN_DWELL: f64 = 1e-4;
/// Comparison slack for validator boundary cases.
pub const VALIDATOR_TOL: f64 = 1e-9;

/// `|{s ∈ [t, t+T0] : σ(s) = mode}| ≥ δ0` for all `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConstraint {
    pub window: f64,
    pub min_active: f64,
    pub mode: ModeIndex,
}

impl MeasureConstraint {
    pub fn new(window: f64, min_active: f64, mode: ModeIndex) -> Result<Self> {
        if !(min_active > 0.0 && min_active <= window && window.is_finite()) {
            return Err(Error::param(format!(
                "measure constraint needs 0 < δ0 <= T0, got δ0 = {min_active}, T0 = {window}"
            )));
        }
        Ok(MeasureConstraint { window, min_active, mode })
    }
}

/// The 1-2-1 pattern class `S[T, dm, dM]` over two modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternConstraint {
    pub window: f64,
    pub dm: f64,
    pub d_max: f64,
}

impl PatternConstraint {
    pub fn new(window: f64, dm: f64, d_max: f64) -> Result<Self> {
        if !(dm > 0.0 && dm <= d_max && d_max.is_finite()) {
            return Err(Error::param(format!("pattern needs 0 < dm <= dM, got dm = {dm}, dM = {d_max}")));
        }
        if 3.0 * dm > window {
            return Err(Error::param(format!("a pattern of three pieces >= {dm} cannot fit in T = {window}")));
        }
        Ok(PatternConstraint { window, dm, d_max })
    }

    /// Longest piece the back-to-back generator may use so that every
    /// sliding window still holds a full pattern: `2·dm + 4·D ≤ T`.
    pub fn generator_piece_bound(&self) -> Option<f64> {
        let d = self.d_max.min((self.window - 2.0 * self.dm) / 4.0);
        (d >= self.dm - 1e-12).then_some(d.max(self.dm))
    }
}

fn check_span(span: (f64, f64)) -> Result<()> {
    if !(span.1 > span.0) || !span.0.is_finite() || !span.1.is_finite() {
        return Err(Error::param(format!("invalid span [{}, {}]", span.0, span.1)));
    }
    Ok(())
}

/// Appends `(start, mode)` unless it repeats the previous mode.
struct Builder {
    breaks: Vec<f64>,
    modes: Vec<ModeIndex>,
}

impl Builder {
    fn new() -> Self {
        Builder { breaks: Vec::new(), modes: Vec::new() }
    }

    fn push(&mut self, t: f64, mode: ModeIndex) {
        if self.modes.last() == Some(&mode) {
            return;
        }
        if let Some(&last) = self.breaks.last() {
            if t <= last {
                *self.modes.last_mut().unwrap() = mode;
                return;
            }
        }
        self.breaks.push(t);
        self.modes.push(mode);
    }

    fn finish(self, end: f64) -> Result<SwitchingSignal> {
        let mut breaks = Vec::with_capacity(self.breaks.len());
        let mut modes = Vec::with_capacity(self.modes.len());
        for (b, m) in self.breaks.into_iter().zip(self.modes) {
            if b >= end {
                break;
            }
            breaks.push(b);
            modes.push(m);
        }
        Ok(SwitchingSignal::new(breaks, modes, end)?.merged())
    }
}

fn other_mode(rng: &mut ChaCha8Rng, n_modes: usize, exclude: ModeIndex) -> ModeIndex {
    let k = rng.random_range(0..n_modes - 1);
    let k = if k + 1 >= exclude.get() { k + 1 } else { k };
    ModeIndex::from_zero_based(k)
}

/// Random switching with exponential dwell times of mean `mean_dwell`,
/// clipped to `[MIN_DWELL, 10·mean_dwell]`. Each new mode is drawn
/// uniformly among the other modes.
pub fn gen_arbitrary(n_modes: usize, span: (f64, f64), mean_dwell: f64, seed: u64) -> Result<SwitchingSignal> {
    check_span(span)?;
    if n_modes == 0 {
        return Err(Error::param("need at least one mode"));
    }
    if !(mean_dwell > 0.0) || !mean_dwell.is_finite() {
        return Err(Error::param("mean dwell must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let mut mode = ModeIndex::from_zero_based(rng.random_range(0..n_modes));
    if n_modes == 1 {
        return SwitchingSignal::constant(mode, span.0, span.1);
    }
    let exp = Exp::new(1.0 / mean_dwell).map_err(|e| Error::param(e.to_string()))?;
    let mut b = Builder::new();
    let mut t = span.0;
    while t < span.1 {
        b.push(t, mode);
        let d: f64 = exp.sample(&mut rng);
        t += d.clamp(MIN_DWELL.max(mean_dwell * 1e-6).min(mean_dwell), 10.0 * mean_dwell);
        mode = other_mode(&mut rng, n_modes, mode);
    }
    b.finish(span.1)
}

/// Dwell lengths of the intervals of a raw (unmerged) arbitrary signal.
pub fn dwell_lengths(sigma: &SwitchingSignal) -> Vec<f64> {
    sigma.intervals().map(|(a, b, _)| b - a).collect()
}

/// Random member of `S_{T0,δ0}`.
///
/// Alternates blocks of `c.mode` with length in `[δ0 + m, T0]` and gaps of
/// other modes with length in `[0, T0 − δ0 − m]`, `m = min(δ0, T0 − δ0)/2`.
/// Any window either ends at a block start or starts at a block end at its
/// measure minimum, and both see at least `min(block, T0 − gap) ≥ δ0 + m`.
pub fn gen_measure_constrained(
    c: &MeasureConstraint,
    n_modes: usize,
    span: (f64, f64),
    seed: u64,
) -> Result<SwitchingSignal> {
    check_span(span)?;
    MeasureConstraint::new(c.window, c.min_active, c.mode)?;
    if c.mode.get() > n_modes {
        return Err(Error::param(format!("constrained mode {} exceeds {n_modes} modes", c.mode)));
    }
    let margin = c.min_active.min(c.window - c.min_active) / 2.0;
    let max_gap = c.window - c.min_active - margin;
    if n_modes == 1 || max_gap < MIN_DWELL {
        return SwitchingSignal::constant(c.mode, span.0, span.1);
    }
    let mut rng = rng_from_seed(seed);
    let mut b = Builder::new();
    let mut t = span.0;
    while t < span.1 {
        let gap = rng.random_range(0.0..=max_gap);
        if gap >= MIN_DWELL {
            let pieces = rng.random_range(1..=3usize);
            let mut cuts: Vec<f64> = (1..pieces).map(|_| rng.random_range(0.0..gap)).collect();
            cuts.push(0.0);
            cuts.push(gap);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() < MIN_DWELL);
            for w in cuts.windows(2) {
                b.push(t + w[0], other_mode(&mut rng, n_modes, c.mode));
            }
            t += gap;
        }
        let lo = c.min_active + margin;
        let block = if c.window > lo { rng.random_range(lo..=c.window) } else { lo };
        b.push(t, c.mode);
        t += block;
    }
    b.finish(span.1)
}

/// Exact infimum over window anchors of the active measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureReport {
    pub satisfied: bool,
    pub min_measure: f64,
    pub worst_anchor: f64,
}

/// Cumulative active time `A(t) = |{s ∈ [start, t] : σ(s) = mode}|`.
pub(crate) struct ActiveTime {
    breaks: Vec<f64>,
    cum: Vec<f64>,
    active: Vec<bool>,
}

impl ActiveTime {
    pub(crate) fn new(sigma: &SwitchingSignal, mode: ModeIndex) -> Self {
        let mut cum = Vec::with_capacity(sigma.len());
        let mut acc = 0.0;
        let mut active = Vec::with_capacity(sigma.len());
        for (a, b, m) in sigma.intervals() {
            cum.push(acc);
            active.push(m == mode);
            if m == mode {
                acc += b - a;
            }
        }
        ActiveTime { breaks: sigma.breakpoints().to_vec(), cum, active }
    }

    pub(crate) fn at(&self, t: f64) -> f64 {
        let k = self.breaks.partition_point(|&b| b <= t).saturating_sub(1);
        self.cum[k] + if self.active[k] { (t - self.breaks[k]).max(0.0) } else { 0.0 }
    }
}

/// Checks `σ ∈ S_{T0,δ0}` on `σ`'s domain. The window measure is
/// piecewise linear in the anchor with kinks where an endpoint meets a
/// breakpoint, so evaluating those anchors gives the exact infimum.
pub fn validate_measure(sigma: &SwitchingSignal, c: &MeasureConstraint) -> Result<MeasureReport> {
    let (t0, t1) = (sigma.start(), sigma.end());
    let last = t1 - c.window;
    if last < t0 - 1e-12 {
        return Err(Error::param(format!(
            "signal spans {} s, shorter than the window {}",
            t1 - t0,
            c.window
        )));
    }
    let last = last.max(t0);
    let at = ActiveTime::new(sigma, c.mode);
    let mut anchors = vec![t0, last];
    for &b in sigma.breakpoints() {
        anchors.push(b);
        anchors.push(b - c.window);
    }
    let mut best = (f64::INFINITY, t0);
    for a in anchors {
        if a < t0 || a > last {
            continue;
        }
        let m = at.at(a + c.window) - at.at(a);
        if m < best.0 {
            best = (m, a);
        }
    }
    Ok(MeasureReport {
        satisfied: best.0 >= c.min_active - VALIDATOR_TOL,
        min_measure: best.0,
        worst_anchor: best.1,
    })
}

/// Random member of `S[T, dm, dM]`: back-to-back 1-2-1 patterns with piece
/// lengths uniform in `[dm, D]`, where `D` is
/// [`PatternConstraint::generator_piece_bound`].
pub fn gen_pattern(c: &PatternConstraint, span: (f64, f64), seed: u64) -> Result<SwitchingSignal> {
    check_span(span)?;
    PatternConstraint::new(c.window, c.dm, c.d_max)?;
    let Some(d) = c.generator_piece_bound() else {
        return Err(Error::param(format!(
            "window T = {} is too short to tile with patterns (need T >= 6·dm = {})",
            c.window,
            6.0 * c.dm
        )));
    };
    let mut rng = rng_from_seed(seed);
    let draw = |rng: &mut ChaCha8Rng| if d > c.dm { rng.random_range(c.dm..=d) } else { c.dm };
    let (one, two) = (ModeIndex::of(1), ModeIndex::of(2));
    let mut b = Builder::new();
    let mut t = span.0;
    while t < span.1 {
        b.push(t, one);
        t += draw(&mut rng);
        b.push(t, two);
        t += draw(&mut rng);
        b.push(t, one);
        t += draw(&mut rng);
    }
    b.finish(span.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatternReport {
    pub satisfied: bool,
    /// Earliest window anchor with no compliant pattern.
    pub first_violation: Option<f64>,
}

/// A maximal constant run; `label` is 1, 2 or 0 for anything else.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Run {
    pub start: f64,
    pub end: f64,
    pub label: u8,
}

/// Exact window check for the 1-2-1 pattern over labelled runs.
///
/// A 2-run `[τ2, τ3)` of length in `[dm, dM]` between 1-runs of length at
/// least `dm` serves exactly the anchors `t ∈ [τ3 + dm − T, τ2 − dm]`; the
/// class holds iff those intervals cover `[start, end − T]`.
pub(crate) fn pattern_cover(runs: &[Run], c: &PatternConstraint, start: f64, end: f64) -> Result<PatternReport> {
    let last = end - c.window;
    if last < start - 1e-12 {
        return Err(Error::param(format!("span {} s is shorter than the window {}", end - start, c.window)));
    }
    let last = last.max(start);
    let tol = VALIDATOR_TOL;
    let mut served: Vec<(f64, f64)> = Vec::new();
    for w in runs.windows(3) {
        let (pre, mid, post) = (w[0], w[1], w[2]);
        if pre.label != 1 || mid.label != 2 || post.label != 1 {
            continue;
        }
        let len = mid.end - mid.start;
        if len < c.dm - tol || len > c.d_max + tol {
            continue;
        }
        if pre.end - pre.start < c.dm - tol || post.end - post.start < c.dm - tol {
            continue;
        }
        served.push((mid.end + c.dm - c.window, mid.start - c.dm));
    }
    served.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Everything in [start, covered] is served.
    let mut covered = f64::NEG_INFINITY;
    for (lo, hi) in served {
        if lo > covered.max(start) + tol {
            break;
        }
        covered = covered.max(hi);
        if covered + tol >= last {
            return Ok(PatternReport { satisfied: true, first_violation: None });
        }
    }
    Ok(PatternReport { satisfied: false, first_violation: Some(covered.max(start).min(last)) })
}

/// Checks `σ ∈ S[T, dm, dM]` on `σ`'s domain.
pub fn validate_pattern(sigma: &SwitchingSignal, c: &PatternConstraint) -> Result<PatternReport> {
    let runs: Vec<Run> = sigma
        .merged()
        .intervals()
        .map(|(a, b, m)| Run { start: a, end: b, label: if m.get() <= 2 { m.get() as u8 } else { 0 } })
        .collect();
    pattern_cover(&runs, c, sigma.start(), sigma.end())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub satisfied: bool,
    /// `(t, mode)` at the first sample with `x(t) ∉ χ_{σ(t)}`.
    pub first_violation: Option<(f64, usize)>,
}

/// Checks `x(t) ∈ χ_{σ(t)}` at every sample, with boundary slack `1e−9`.
pub fn validate_covering_invariance(
    traj: &Trajectory,
    sigma: &SwitchingSignal,
    covering: &Covering,
) -> Result<InvarianceReport> {
    if !sigma.covers(traj.time(0), traj.final_time()) {
        return Err(Error::Input("signal does not span the trajectory".into()));
    }
    for k in 0..traj.len() {
        let t = traj.time(k);
        let m = sigma.mode_at(t);
        if !covering.contains_tol(traj.state(k), m, VALIDATOR_TOL) {
            return Ok(InvarianceReport { satisfied: false, first_violation: Some((t, m.get())) });
        }
    }
    Ok(InvarianceReport { satisfied: true, first_violation: None })
}
