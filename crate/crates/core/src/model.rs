//! Domain types shared by every analysis: mode indices, switching signals,
//! relaxed controls on the probability simplex, switched systems, closed
//! coverings of the state space and sampled trajectories.
//!
//! A switching signal `σ` embeds into the relaxed controls through
//! `σ ↦ u_σ`, where `u_σ(t)` is the simplex vertex `e_{σ(t)}`. Under that
//! map the switched right-hand side `f(t, x, σ(t))` and the relaxed one
//! `Σ_i u_i(t) f_i(t, x)` coincide, which is what [`signal_to_control`]
//! and the relaxed integrator rely on.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for a simplex point's weights to be accepted as-is.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Largest unit-sum drift that is silently re-normalized.
pub const SIMPLEX_RENORM_TOL: f64 = 1e-9;

/// `(t, x, mode, out)`: writes `dx/dt` into `out`.
pub type VectorField = Arc<dyn Fn(f64, &[f64], ModeIndex, &mut [f64]) + Send + Sync>;
/// `(t, x, mode, out)`: writes the output vector into `out`.
pub type OutputMap = Arc<dyn Fn(f64, &[f64], ModeIndex, &mut [f64]) + Send + Sync>;
/// `(t, x, mode) -> value`.
pub type ScalarField = Arc<dyn Fn(f64, &[f64], ModeIndex) -> f64 + Send + Sync>;

/// 1-based index of a mode in `{1, …, N}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeIndex(usize);

impl ModeIndex {
    pub fn new(value: usize, n_modes: usize) -> Result<Self> {
        if value == 0 || value > n_modes {
            return Err(Error::param(format!("mode {value} not in 1..={n_modes}")));
        }
        Ok(ModeIndex(value))
    }

    /// Builds an index without a mode-count check. `value` must be ≥ 1.
    pub fn of(value: usize) -> Self {
        assert!(value >= 1, "mode indices are 1-based");
        ModeIndex(value)
    }

    pub fn from_zero_based(i: usize) -> Self {
        ModeIndex(i + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn zero_based(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Right-continuous piecewise-constant map from `[start, end]` to modes.
///
/// `σ(t) = modes[k]` for `t ∈ [breaks[k], breaks[k+1])`; the last interval
/// is closed at `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    breaks: Vec<f64>,
    modes: Vec<ModeIndex>,
    end: f64,
}

impl SwitchingSignal {
    pub fn new(breaks: Vec<f64>, modes: Vec<ModeIndex>, end: f64) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != modes.len() {
            return Err(Error::param(format!(
                "signal needs one mode per breakpoint ({} breakpoints, {} modes)",
                breaks.len(),
                modes.len()
            )));
        }
        if !end.is_finite() || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::param("signal times must be finite"));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("breakpoints must be strictly increasing"));
        }
        if *breaks.last().unwrap() >= end {
            return Err(Error::param("last breakpoint must precede the domain end"));
        }
        Ok(SwitchingSignal { breaks, modes, end })
    }

    pub fn constant(mode: ModeIndex, start: f64, end: f64) -> Result<Self> {
        Self::new(vec![start], vec![mode], end)
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    /// Switching instants strictly inside the domain.
    pub fn switch_times(&self) -> &[f64] {
        &self.breaks[1..]
    }

    pub fn len(&self) -> usize {
        self.breaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breaks.is_empty()
    }

    pub fn max_mode(&self) -> usize {
        self.modes.iter().map(|m| m.get()).max().unwrap_or(1)
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        t0 >= self.start() - 1e-12 && t1 <= self.end + 1e-12
    }

    pub fn at(&self, t: f64) -> Result<ModeIndex> {
        if !(self.start()..=self.end).contains(&t) {
            return Err(Error::Domain { t, start: self.start(), end: self.end });
        }
        Ok(self.mode_at(t))
    }

    /// Like [`at`](Self::at) but clamps `t` into the domain.
    pub fn mode_at(&self, t: f64) -> ModeIndex {
        let k = self.breaks.partition_point(|&b| b <= t);
        self.modes[k.saturating_sub(1)]
    }

    /// `(start, end, mode)` for every constancy interval.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, ModeIndex)> + '_ {
        (0..self.breaks.len()).map(move |k| {
            let b = self.breaks.get(k + 1).copied().unwrap_or(self.end);
            (self.breaks[k], b, self.modes[k])
        })
    }

    /// Merges adjacent intervals carrying the same mode.
    pub fn merged(&self) -> Self {
        let mut breaks = vec![self.breaks[0]];
        let mut modes = vec![self.modes[0]];
        for (&b, &m) in self.breaks.iter().zip(&self.modes).skip(1) {
            if m != *modes.last().unwrap() {
                breaks.push(b);
                modes.push(m);
            }
        }
        SwitchingSignal { breaks, modes, end: self.end }
    }

    /// Restriction to `[a, b]`.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        if a >= b || !self.covers(a, b) {
            return Err(Error::Domain { t: a, start: self.start(), end: self.end });
        }
        let mut breaks = vec![a];
        let mut modes = vec![self.mode_at(a)];
        for (&t, &m) in self.breaks.iter().zip(&self.modes) {
            if t > a && t < b {
                breaks.push(t);
                modes.push(m);
            }
        }
        Self::new(breaks, modes, b)
    }

    /// Time translation `t ↦ σ(t − dt)`.
    pub fn shifted(&self, dt: f64) -> Self {
        SwitchingSignal {
            breaks: self.breaks.iter().map(|b| b + dt).collect(),
            modes: self.modes.clone(),
            end: self.end + dt,
        }
    }

    /// Rounds every switching time to the grid `start + k·step`, dropping
    /// intervals that collapse.
    pub fn quantized(&self, step: f64) -> Result<Self> {
        if step <= 0.0 {
            return Err(Error::param("quantization step must be positive"));
        }
        let s0 = self.start();
        let cells = ((self.end - s0) / step).round().max(1.0);
        let end = s0 + cells * step;
        let mut breaks = vec![s0];
        let mut modes = vec![self.modes[0]];
        for (&b, &m) in self.breaks.iter().zip(&self.modes).skip(1) {
            let q = ((b - s0) / step).round();
            if q <= 0.0 || q >= cells {
                if q <= 0.0 {
                    *modes.last_mut().unwrap() = m;
                }
                continue;
            }
            let tq = s0 + q * step;
            if tq <= *breaks.last().unwrap() {
                *modes.last_mut().unwrap() = m;
            } else {
                breaks.push(tq);
                modes.push(m);
            }
        }
        Ok(SwitchingSignal { breaks, modes, end }.merged())
    }
}

/// A point of the probability simplex `U = {µ ≥ 0 : Σ µ_i = 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Simplex("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Simplex(format!("non-finite weights {weights:?}")));
        }
        if let Some(w) = weights.iter().find(|&&w| w < -SIMPLEX_TOL) {
            return Err(Error::Simplex(format!("negative weight {w}")));
        }
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        let drift = (sum - 1.0).abs();
        if drift > SIMPLEX_RENORM_TOL {
            return Err(Error::Simplex(format!("weights sum to {sum}")));
        }
        if drift > SIMPLEX_TOL {
            for w in weights.iter_mut() {
                *w /= sum;
            }
        }
        Ok(SimplexPoint(weights))
    }

    /// The vertex `e_i` of the simplex over `n_modes` modes.
    pub fn vertex(n_modes: usize, mode: ModeIndex) -> Self {
        let mut w = vec![0.0; n_modes];
        w[mode.zero_based()] = 1.0;
        SimplexPoint(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn weight(&self, mode: ModeIndex) -> f64 {
        self.0[mode.zero_based()]
    }

    /// Sup-norm distance to `e_mode`.
    pub fn distance_to_vertex(&self, mode: ModeIndex) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(k, &w)| if k == mode.zero_based() { (1.0 - w).abs() } else { w.abs() })
            .fold(0.0, f64::max)
    }

    /// The vertex this point coincides with, if any.
    pub fn as_vertex(&self, tol: f64) -> Option<ModeIndex> {
        (0..self.0.len())
            .map(ModeIndex::from_zero_based)
            .find(|&m| self.distance_to_vertex(m) <= tol)
    }
}

/// Piecewise-constant control on a uniform grid, with values in the simplex.
///
/// Cell `k` covers `[start + k·step, start + (k+1)·step)`; the last cell is
/// closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedControl {
    start: f64,
    step: f64,
    values: Vec<SimplexPoint>,
}

impl RelaxedControl {
    pub fn new(start: f64, step: f64, values: Vec<SimplexPoint>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(Error::param("control grid needs a finite start and positive step"));
        }
        let Some(first) = values.first() else {
            return Err(Error::param("control needs at least one cell"));
        };
        let n = first.dim();
        if let Some(bad) = values.iter().find(|v| v.dim() != n) {
            return Err(Error::Dimension { expected: n, got: bad.dim() });
        }
        Ok(RelaxedControl { start, step, values })
    }

    /// The constant control `p` over `[start, end]`.
    pub fn constant(p: SimplexPoint, start: f64, end: f64, step: f64) -> Result<Self> {
        let cells = (((end - start) / step) - 1e-9).ceil().max(1.0) as usize;
        Self::new(start, step, vec![p; cells])
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.cell_start(self.values.len())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_modes(&self) -> usize {
        self.values[0].dim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[SimplexPoint] {
        &self.values
    }

    pub fn cell_start(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    /// Index of the cell containing `t` (clamped into the grid).
    pub fn cell_of(&self, t: f64) -> usize {
        let k = ((t - self.start) / self.step).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.values.len() - 1)
        }
    }

    pub fn at(&self, t: f64) -> &SimplexPoint {
        &self.values[self.cell_of(t)]
    }

    pub fn same_grid(&self, other: &RelaxedControl) -> bool {
        self.values.len() == other.values.len()
            && (self.start - other.start).abs() <= 1e-12
            && (self.step - other.step).abs() <= 1e-15 * self.step.max(1.0)
            && self.n_modes() == other.n_modes()
    }
}

/// `σ ↦ u_σ`: samples `σ` at cell midpoints of a grid with step `du` over
/// the signal's domain.
pub fn signal_to_control(sigma: &SwitchingSignal, du: f64, n_modes: usize) -> Result<RelaxedControl> {
    if !(du > 0.0) {
        return Err(Error::param("control step must be positive"));
    }
    if sigma.max_mode() > n_modes {
        return Err(Error::param(format!(
            "signal uses mode {} but the system has {n_modes}",
            sigma.max_mode()
        )));
    }
    let cells = (((sigma.end() - sigma.start()) / du) - 1e-9).ceil().max(1.0) as usize;
    let values = (0..cells)
        .map(|k| {
            let mid = (sigma.start() + (k as f64 + 0.5) * du).min(sigma.end());
            SimplexPoint::vertex(n_modes, sigma.mode_at(mid))
        })
        .collect();
    RelaxedControl::new(sigma.start(), du, values)
}

/// Closed half-space `{ξ : normal·ξ ≥ offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        HalfSpace { normal, offset }
    }

    /// Signed boundary function; the half-space is `{g ≥ 0}`.
    pub fn value(&self, xi: &[f64]) -> f64 {
        self.normal.iter().zip(xi).map(|(a, x)| a * x).sum::<f64>() - self.offset
    }
}

/// Closed covering `χ = {χ_i}` of `R^n`, each piece an intersection of
/// closed half-spaces (an empty list is the whole space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    dim: usize,
    pieces: Vec<Vec<HalfSpace>>,
}

impl Covering {
    pub fn new(dim: usize, pieces: Vec<Vec<HalfSpace>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::param("covering needs at least one piece"));
        }
        for h in pieces.iter().flatten() {
            if h.normal.len() != dim {
                return Err(Error::Dimension { expected: dim, got: h.normal.len() });
            }
            if !(norm(&h.normal) > 0.0 && h.normal.iter().all(|v| v.is_finite()) && h.offset.is_finite()) {
                return Err(Error::param("half-space normals must be finite and nonzero"));
            }
        }
        Ok(Covering { dim, pieces })
    }

    /// Every piece is the whole space.
    pub fn trivial(dim: usize, n_modes: usize) -> Self {
        Covering { dim, pieces: vec![Vec::new(); n_modes] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_modes(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.pieces.iter().all(Vec::is_empty)
    }

    pub fn boundaries(&self, mode: ModeIndex) -> &[HalfSpace] {
        &self.pieces[mode.zero_based()]
    }

    /// Exact closed-set membership: boundary points belong.
    pub fn contains(&self, xi: &[f64], mode: ModeIndex) -> bool {
        self.contains_tol(xi, mode, 0.0)
    }

    pub fn contains_tol(&self, xi: &[f64], mode: ModeIndex, tol: f64) -> bool {
        self.pieces[mode.zero_based()].iter().all(|h| h.value(xi) >= -tol)
    }

    /// Modes whose piece contains `xi`, without the covering check.
    pub fn members(&self, xi: &[f64]) -> Vec<ModeIndex> {
        (0..self.pieces.len())
            .map(ModeIndex::from_zero_based)
            .filter(|&m| self.contains(xi, m))
            .collect()
    }
}

/// `I_ξ = {i : ξ ∈ χ_i}`; empty means `χ` fails to cover `ξ`.
pub fn active_index_set(xi: &[f64], covering: &Covering) -> Result<Vec<ModeIndex>> {
    if xi.len() != covering.dim() {
        return Err(Error::Dimension { expected: covering.dim(), got: xi.len() });
    }
    let set = covering.members(xi);
    if set.is_empty() {
        return Err(Error::Covering(xi.to_vec()));
    }
    Ok(set)
}

/// Radius `δ` with `I_ζ ⊆ I_ξ` whenever `|ζ − ξ| < δ`: for each piece
/// missing `ξ`, the distance to its most violated boundary hyperplane.
/// Infinite when every piece contains `ξ`.
pub fn nesting_radius(xi: &[f64], covering: &Covering) -> Result<f64> {
    if xi.len() != covering.dim() {
        return Err(Error::Dimension { expected: covering.dim(), got: xi.len() });
    }
    let mut delta = f64::INFINITY;
    for i in 0..covering.n_modes() {
        let gap = covering
            .boundaries(ModeIndex::from_zero_based(i))
            .iter()
            .map(|h| -h.value(xi) / norm(&h.normal))
            .fold(f64::NEG_INFINITY, f64::max);
        if gap > 0.0 {
            delta = delta.min(gap);
        }
    }
    Ok(delta)
}

/// `U_ξ = co{e_i : i ∈ I_ξ}`, stored by its generating vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdmissibleSet {
    n_modes: usize,
    vertices: Vec<ModeIndex>,
}

impl AdmissibleSet {
    pub fn vertices(&self) -> &[ModeIndex] {
        &self.vertices
    }

    pub fn is_full(&self) -> bool {
        self.vertices.len() == self.n_modes
    }

    /// `p ∈ U_ξ` iff `p` puts (numerically) no weight outside `I_ξ`.
    pub fn contains(&self, p: &SimplexPoint) -> bool {
        p.weights().iter().enumerate().all(|(k, &w)| {
            w <= SIMPLEX_TOL || self.vertices.contains(&ModeIndex::from_zero_based(k))
        })
    }

    pub fn is_subset_of(&self, other: &AdmissibleSet) -> bool {
        self.vertices.iter().all(|v| other.vertices.contains(v))
    }
}

pub fn admissible_control_set(xi: &[f64], covering: &Covering) -> Result<AdmissibleSet> {
    Ok(AdmissibleSet {
        n_modes: covering.n_modes(),
        vertices: active_index_set(xi, covering)?,
    })
}

/// Family of mode vector fields `f_i`, output maps `h_i` and the split
/// `f_i = f̂_i + Δf_i` into a precompact part and a zeroing part.
#[derive(Clone)]
pub struct SwitchedSystem {
    name: String,
    dim: usize,
    n_modes: usize,
    output_dim: usize,
    f: VectorField,
    h: OutputMap,
    fhat: VectorField,
    dferr: Option<VectorField>,
    time_invariant_limits: bool,
}

impl fmt::Debug for SwitchedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SwitchedSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("n_modes", &self.n_modes)
            .field("output_dim", &self.output_dim)
            .field("time_invariant_limits", &self.time_invariant_limits)
            .finish_non_exhaustive()
    }
}

impl SwitchedSystem {
    /// A system whose precompact part is `f` itself.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        n_modes: usize,
        output_dim: usize,
        f: VectorField,
        h: OutputMap,
    ) -> Self {
        SwitchedSystem {
            name: name.into(),
            dim,
            n_modes,
            output_dim,
            fhat: f.clone(),
            f,
            h,
            dferr: None,
            time_invariant_limits: false,
        }
    }

    pub fn with_decomposition(mut self, fhat: VectorField, dferr: Option<VectorField>) -> Self {
        self.fhat = fhat;
        self.dferr = dferr;
        self
    }

    pub fn with_time_invariant_limits(mut self, flag: bool) -> Self {
        self.time_invariant_limits = flag;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn time_invariant_limits(&self) -> bool {
        self.time_invariant_limits
    }

    pub fn has_decomposition(&self) -> bool {
        self.dferr.is_some()
    }

    pub fn f(&self, t: f64, x: &[f64], mode: ModeIndex, out: &mut [f64]) {
        (self.f)(t, x, mode, out)
    }

    pub fn h(&self, t: f64, x: &[f64], mode: ModeIndex, out: &mut [f64]) {
        (self.h)(t, x, mode, out)
    }

    pub fn fhat(&self, t: f64, x: &[f64], mode: ModeIndex, out: &mut [f64]) {
        (self.fhat)(t, x, mode, out)
    }

    pub fn dferr(&self, t: f64, x: &[f64], mode: ModeIndex, out: &mut [f64]) -> bool {
        match &self.dferr {
            Some(d) => {
                d(t, x, mode, out);
                true
            }
            None => false,
        }
    }

    pub fn fhat_field(&self) -> VectorField {
        self.fhat.clone()
    }

    pub fn output_map(&self) -> OutputMap {
        self.h.clone()
    }

    pub fn eval_f(&self, t: f64, x: &[f64], mode: ModeIndex) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.f(t, x, mode, &mut out);
        out
    }

    pub fn eval_h(&self, t: f64, x: &[f64], mode: ModeIndex) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim];
        self.h(t, x, mode, &mut out);
        out
    }

    /// Euclidean norm `|h_i(t, x)|`.
    pub fn output_norm(&self, t: f64, x: &[f64], mode: ModeIndex) -> f64 {
        norm(&self.eval_h(t, x, mode))
    }

    /// The system with every vector field negated (outputs unchanged).
    pub fn negated(&self) -> Self {
        let neg = |g: VectorField| -> VectorField {
            Arc::new(move |t, x, m, out: &mut [f64]| {
                g(t, x, m, out);
                out.iter_mut().for_each(|v| *v = -*v);
            })
        };
        SwitchedSystem {
            name: format!("{}-negated", self.name),
            f: neg(self.f.clone()),
            fhat: neg(self.fhat.clone()),
            dferr: self.dferr.clone().map(neg),
            ..self.clone()
        }
    }

    /// The system with outputs multiplied by `scale`.
    pub fn with_output_scale(&self, scale: f64) -> Self {
        let h = self.h.clone();
        SwitchedSystem {
            name: format!("{}-output-x{scale}", self.name),
            h: Arc::new(move |t, x, m, out: &mut [f64]| {
                h(t, x, m, out);
                out.iter_mut().for_each(|v| *v *= scale);
            }),
            ..self.clone()
        }
    }
}

/// What drives a trajectory at each sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Drive {
    Modes(Vec<ModeIndex>),
    Controls(Vec<SimplexPoint>),
}

/// Time samples of a solution together with the active mode (or control)
/// and the output at each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    drive: Drive,
    output_dim: usize,
    outputs: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn empty(dim: usize, output_dim: usize, relaxed: bool) -> Self {
        Trajectory {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            drive: if relaxed { Drive::Controls(Vec::new()) } else { Drive::Modes(Vec::new()) },
            output_dim,
            outputs: Vec::new(),
        }
    }

    /// Assembles a trajectory from parts, checking the invariants.
    pub fn from_parts(
        dim: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        drive: Drive,
        output_dim: usize,
        outputs: Vec<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::param("trajectory needs at least one sample"));
        }
        if states.len() != n * dim {
            return Err(Error::Dimension { expected: n * dim, got: states.len() });
        }
        let drive_len = match &drive {
            Drive::Modes(m) => m.len(),
            Drive::Controls(c) => c.len(),
        };
        if drive_len != n {
            return Err(Error::Dimension { expected: n, got: drive_len });
        }
        if outputs.len() != n * output_dim {
            return Err(Error::Dimension { expected: n * output_dim, got: outputs.len() });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("trajectory times must be strictly increasing"));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("trajectory states must be finite"));
        }
        Ok(Trajectory { dim, times, states, drive, output_dim, outputs })
    }

    pub(crate) fn push_mode(&mut self, t: f64, x: &[f64], mode: ModeIndex, y: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        if let Drive::Modes(m) = &mut self.drive {
            m.push(mode);
        }
        self.outputs.extend_from_slice(y);
    }

    pub(crate) fn push_control(&mut self, t: f64, x: &[f64], u: &SimplexPoint, y: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        if let Drive::Controls(c) = &mut self.drive {
            c.push(u.clone());
        }
        self.outputs.extend_from_slice(y);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim.max(1))
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn drive(&self) -> &Drive {
        &self.drive
    }

    pub fn mode(&self, k: usize) -> Option<ModeIndex> {
        match &self.drive {
            Drive::Modes(m) => Some(m[k]),
            Drive::Controls(_) => None,
        }
    }

    pub fn control(&self, k: usize) -> Option<&SimplexPoint> {
        match &self.drive {
            Drive::Controls(c) => Some(&c[k]),
            Drive::Modes(_) => None,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn has_outputs(&self) -> bool {
        self.output_dim > 0
    }

    pub fn output(&self, k: usize) -> &[f64] {
        &self.outputs[k * self.output_dim..(k + 1) * self.output_dim]
    }

    pub fn norm_at(&self, k: usize) -> f64 {
        norm(self.state(k))
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.norm_at(k)).collect()
    }

    pub fn min_norm(&self) -> f64 {
        (0..self.len()).map(|k| self.norm_at(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.len()).map(|k| self.norm_at(k)).fold(0.0, f64::max)
    }

    /// Linear interpolation of `|x(t)|` (clamped to the sampled span).
    pub fn norm_at_time(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.norm_at(0);
        }
        if k >= self.len() {
            return self.norm_at(self.len() - 1);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.state(k - 1), self.state(k));
        let x: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + w * (q - p)).collect();
        norm(&x)
    }

    /// Largest pointwise distance between the states of two trajectories
    /// sampled on the same grid.
    pub fn max_deviation(&self, other: &Trajectory) -> Result<f64> {
        if self.len() != other.len() || self.dim != other.dim {
            return Err(Error::Input(format!(
                "trajectories differ in shape ({}x{} vs {}x{})",
                self.len(),
                self.dim,
                other.len(),
                other.dim
            )));
        }
        let mut worst = 0.0f64;
        for k in 0..self.len() {
            if (self.times[k] - other.times[k]).abs() > 1e-9 {
                return Err(Error::Input(format!("time grids differ at sample {k}")));
            }
            let d: Vec<f64> = self.state(k).iter().zip(other.state(k)).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&d));
        }
        Ok(worst)
    }

    /// Samples before the first one with `|x| < floor` (the whole
    /// trajectory if there is none, or if the first sample is below already).
    pub fn until_norm_below(&self, floor: f64) -> Trajectory {
        match (0..self.len()).find(|&k| self.norm_at(k) < floor) {
            Some(k) if k > 0 => self.slice(0, k - 1),
            _ => self.clone(),
        }
    }

    /// Samples `from..=to`.
    pub fn slice(&self, from: usize, to: usize) -> Trajectory {
        let drive = match &self.drive {
            Drive::Modes(m) => Drive::Modes(m[from..=to].to_vec()),
            Drive::Controls(c) => Drive::Controls(c[from..=to].to_vec()),
        };
        Trajectory {
            dim: self.dim,
            times: self.times[from..=to].to_vec(),
            states: self.states[from * self.dim..(to + 1) * self.dim].to_vec(),
            drive,
            output_dim: self.output_dim,
            outputs: self.outputs[from * self.output_dim..(to + 1) * self.output_dim].to_vec(),
        }
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
