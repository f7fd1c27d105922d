//! Monte Carlo estimates of the KL bound `|x(t)| ≤ β(|x(s)|, t − s)` as a
//! max-envelope table, its monotone regularization, and the resulting
//! stability classification.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{simulate, simulate_with_covering, CoveringPolicy, IntegratorConfig};
use crate::model::{Covering, SwitchedSystem, SwitchingSignal, Trajectory};
use crate::rng::{derive_seed, rng_from_seed};

/// `(seed, span) -> σ` drawn from a signal class.
pub type SignalGenerator = Arc<dyn Fn(u64, (f64, f64)) -> Result<SwitchingSignal> + Send + Sync>;

/// How each trial obtains its switching.
#[derive(Clone)]
pub enum TrajectorySource {
    Signals(SignalGenerator),
    /// Closed-loop switching generated by a covering policy.
    Covering { covering: Covering, policy: CoveringPolicy },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    /// Upper edges of the initial-norm bins; bin `b` draws `|x0|`
    /// uniformly from `(radii[b−1], radii[b]]` (or exactly 0 when the edge is 0).
    pub radii: Vec<f64>,
    pub horizon: f64,
    /// Number of `τ` columns, evenly spaced on `[0, horizon]`.
    pub n_tau: usize,
    pub trials: usize,
    /// Start times are drawn uniformly from `[0, max_offset]`.
    pub max_offset: f64,
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            radii: vec![0.5, 1.0, 2.0],
            horizon: 200.0,
            n_tau: 101,
            trials: 200,
            max_offset: 50.0,
            seed: 0,
            integrator: IntegratorConfig::with_step(1e-2),
        }
    }
}

impl EnvelopeConfig {
    fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if self.trials == 0 {
            return Err(Error::param("need at least one trial"));
        }
        if self.radii.is_empty() || self.radii[0] < 0.0 || self.radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("radius bins must be nonnegative and strictly increasing"));
        }
        if !(self.horizon > 0.0) || self.n_tau < 2 || !(self.max_offset >= 0.0) {
            return Err(Error::param("need horizon > 0, n_tau >= 2 and max_offset >= 0"));
        }
        Ok(())
    }
}

/// Empirical `β(r, τ)`: row `b` is the largest `|x(s + τ)|` over trials
/// started in bin `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEnvelope {
    pub radius_bins: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub beta_table: Vec<Vec<f64>>,
    pub trials_per_cell: usize,
    /// The same table over trials with offset below / above `max_offset/2`.
    pub early: Vec<Vec<f64>>,
    pub late: Vec<Vec<f64>>,
}

struct TrialResult {
    bin: usize,
    late: bool,
    norms: Vec<f64>,
}

/// Samples trajectories bin by bin and records per-cell maxima. A trial
/// that diverges contributes `+∞` from its failure time on.
pub fn estimate_envelope(sys: &SwitchedSystem, source: &TrajectorySource, cfg: &EnvelopeConfig) -> Result<StabilityEnvelope> {
    cfg.validate()?;
    let n = sys.dim();
    let nb = cfg.radii.len();
    let tau: Vec<f64> = (0..cfg.n_tau).map(|j| cfg.horizon * j as f64 / (cfg.n_tau - 1) as f64).collect();
    let results: Vec<TrialResult> = (0..nb * cfg.trials)
        .into_par_iter()
        .map(|k| -> Result<TrialResult> {
            let bin = k / cfg.trials;
            let mut rng = rng_from_seed(derive_seed(cfg.seed, k as u64));
            let lo = if bin == 0 { 0.0 } else { cfg.radii[bin - 1] };
            let hi = cfg.radii[bin];
            let r = lo + (hi - lo) * (1.0 - rng.random::<f64>());
            let mut x0: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let l = crate::model::norm(&x0);
            x0.iter_mut().for_each(|v| *v = if l > 0.0 { *v * r / l } else { 0.0 });
            let s = if cfg.max_offset > 0.0 { rng.random_range(0.0..=cfg.max_offset) } else { 0.0 };
            let sub_seed: u64 = rng.random();
            let tf = s + cfg.horizon;
            let run = match source {
                TrajectorySource::Signals(gen) => {
                    let sigma = gen(sub_seed, (s, tf))?;
                    simulate(sys, &sigma, s, &x0, tf, &cfg.integrator)
                }
                TrajectorySource::Covering { covering, policy } => {
                    simulate_with_covering(sys, covering, policy, s, &x0, tf, &cfg.integrator).map(|(t, _)| t)
                }
            };
            let norms = match run {
                Ok(tr) => tau.iter().map(|&d| tr.norm_at_time(s + d)).collect(),
                Err(Error::BlowUp { t, partial }) => cells_until(&partial, &tau, s, t),
                Err(Error::NonFinite { t }) => tau.iter().map(|&d| if s + d < t { f64::NAN } else { f64::INFINITY }).collect(),
                Err(e) => return Err(e),
            };
            Ok(TrialResult { bin, late: s > 0.5 * cfg.max_offset, norms })
        })
        .collect::<Result<_>>()?;

    let mut table = vec![vec![0.0_f64; cfg.n_tau]; nb];
    let mut early = table.clone();
    let mut late = table.clone();
    for r in &results {
        for (j, &v) in r.norms.iter().enumerate() {
            // NaN marks a pre-failure cell with no stored sample.
            let v = if v.is_nan() { f64::INFINITY } else { v };
            table[r.bin][j] = table[r.bin][j].max(v);
            let part = if r.late { &mut late } else { &mut early };
            part[r.bin][j] = part[r.bin][j].max(v);
        }
    }
    Ok(StabilityEnvelope {
        radius_bins: cfg.radii.clone(),
        tau_grid: tau,
        beta_table: table,
        trials_per_cell: cfg.trials,
        early,
        late,
    })
}

fn cells_until(partial: &Trajectory, tau: &[f64], s: f64, t_fail: f64) -> Vec<f64> {
    tau.iter()
        .map(|&d| if s + d <= partial.final_time() && s + d < t_fail { partial.norm_at_time(s + d) } else { f64::INFINITY })
        .collect()
}

/// Regularized table and how much regularization changed it, relative to
/// each row's largest raw value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regularized {
    pub table: Vec<Vec<f64>>,
    pub residual_tau: f64,
    pub residual_radius: f64,
}

/// Running max from the right along `τ`, then running max down the bins.
pub fn regularize(env: &StabilityEnvelope) -> Regularized {
    let raw = &env.beta_table;
    let mut t = raw.clone();
    let scale: Vec<f64> = raw.iter().map(|row| row.iter().cloned().fold(0.0, f64::max).max(1e-300)).collect();
    let mut residual_tau: f64 = 0.0;
    for (b, row) in t.iter_mut().enumerate() {
        for j in (0..row.len().saturating_sub(1)).rev() {
            if row[j + 1] > row[j] {
                if row[j + 1].is_finite() {
                    residual_tau = residual_tau.max((row[j + 1] - row[j]) / scale[b]);
                }
                row[j] = row[j + 1];
            }
        }
    }
    let after_tau = t.clone();
    let mut residual_radius: f64 = 0.0;
    for b in 1..t.len() {
        for j in 0..t[b].len() {
            if t[b - 1][j] > t[b][j] {
                if t[b - 1][j].is_finite() {
                    residual_radius = residual_radius.max((t[b - 1][j] - after_tau[b][j]) / scale[b]);
                }
                t[b][j] = t[b - 1][j];
            }
        }
    }
    Regularized { table: t, residual_tau, residual_radius }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityClass {
    GuasConsistent,
    UsOnly,
    Inconclusive,
    UnstableEvidence,
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StabilityClass::GuasConsistent => "GUAS-consistent",
            StabilityClass::UsOnly => "US-only",
            StabilityClass::Inconclusive => "inconclusive",
            StabilityClass::UnstableEvidence => "unstable-evidence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub decay_ratio: f64,
    pub tail_fraction: f64,
    /// Rows count as bounded when `β(r, τ) ≤ gain_bound·r`.
    pub gain_bound: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig { decay_ratio: 0.05, tail_fraction: 0.2, gain_bound: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub class: StabilityClass,
    /// Per row: largest tail value over the row's first column.
    pub tail_ratios: Vec<f64>,
    /// Largest `β(r, τ)/r` over rows with `r > 0`.
    pub gain: f64,
    pub residual_tau: f64,
    pub residual_radius: f64,
    pub thresholds: ClassifyConfig,
}

pub fn classify(env: &StabilityEnvelope, cfg: &ClassifyConfig) -> StabilityVerdict {
    let reg = regularize(env);
    let t = &reg.table;
    let cols = env.tau_grid.len();
    let tail = ((cfg.tail_fraction * cols as f64).ceil() as usize).clamp(1, cols);
    let mut ratios = Vec::with_capacity(t.len());
    let mut gain: f64 = 0.0;
    let mut unbounded = false;
    for (b, row) in t.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            unbounded = true;
        }
        let first = row[0];
        let tmax = row[cols - tail..].iter().cloned().fold(0.0, f64::max);
        ratios.push(if first > 0.0 { tmax / first } else if tmax > 0.0 { f64::INFINITY } else { 0.0 });
        let r = env.radius_bins[b];
        if r > 0.0 {
            gain = gain.max(row.iter().cloned().fold(0.0, f64::max) / r);
        }
    }
    let bounded = gain <= cfg.gain_bound;
    let class = if unbounded {
        StabilityClass::UnstableEvidence
    } else if bounded && ratios.iter().all(|&q| q <= cfg.decay_ratio) {
        StabilityClass::GuasConsistent
    } else if bounded {
        StabilityClass::UsOnly
    } else {
        StabilityClass::Inconclusive
    };
    StabilityVerdict {
        class,
        tail_ratios: ratios,
        gain,
        residual_tau: reg.residual_tau,
        residual_radius: reg.residual_radius,
        thresholds: *cfg,
    }
}

/// Largest cell-wise difference between the early- and late-offset
/// sub-tables, relative to the full table's first column in that row.
pub fn shift_uniformity(env: &StabilityEnvelope) -> f64 {
    let mut worst: f64 = 0.0;
    for b in 0..env.beta_table.len() {
        let scale = env.beta_table[b][0];
        if !(scale > 0.0) {
            continue;
        }
        for j in 0..env.tau_grid.len() {
            let (e, l) = (env.early[b][j], env.late[b][j]);
            if e > 0.0 && l > 0.0 {
                worst = worst.max((e - l).abs() / scale);
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsVerdict {
    pub pass: bool,
    pub radius_bins: Vec<f64>,
    /// Monotone envelope of `sup_{t ≥ s} |x(t)|` over samples with
    /// `|x(s)|` in each bin.
    pub envelope: Vec<f64>,
    /// Largest `envelope(r)/r`.
    pub gain: f64,
    pub margin: f64,
}

/// Fits the smallest monotone `α` with `sup_{t ≥ s}|x(t)| ≤ α(|x(s)|)` on
/// the bins (upper edges) and passes iff the smallest bin's value is at
/// most `margin`. Samples with `|x(s)|` beyond the last edge are ignored.
pub fn check_us(ensemble: &[Trajectory], radius_bins: &[f64], margin: f64) -> Result<UsVerdict> {
    if ensemble.is_empty() {
        return Err(Error::Input("empty ensemble".into()));
    }
    if radius_bins.is_empty() || radius_bins.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("radius bins must be strictly increasing"));
    }
    let mut env = vec![0.0f64; radius_bins.len()];
    for tr in ensemble {
        let norms = tr.norms();
        let mut suffix = f64::NEG_INFINITY;
        for k in (0..norms.len()).rev() {
            let r = norms[k];
            suffix = suffix.max(if r.is_finite() { r } else { f64::INFINITY });
            let b = radius_bins.partition_point(|&e| e < r);
            if b < env.len() {
                env[b] = env[b].max(suffix);
            }
        }
    }
    for b in 1..env.len() {
        env[b] = env[b].max(env[b - 1]);
    }
    let gain = env
        .iter()
        .zip(radius_bins)
        .filter(|(_, r)| **r > 0.0)
        .map(|(e, r)| e / r)
        .fold(0.0, f64::max);
    Ok(UsVerdict {
        pass: env[0] <= margin && env.iter().all(|v| v.is_finite()),
        radius_bins: radius_bins.to_vec(),
        envelope: env,
        gain,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModeIndex;
    use crate::systems;

    fn synthetic(rows: Vec<Vec<f64>>) -> StabilityEnvelope {
        let cols = rows[0].len();
        StabilityEnvelope {
            radius_bins: (1..=rows.len()).map(|b| b as f64).collect(),
            tau_grid: (0..cols).map(|j| j as f64).collect(),
            early: rows.clone(),
            late: rows.clone(),
            beta_table: rows,
            trials_per_cell: 1,
        }
    }

    #[test]
    fn geometric_decay_is_guas_consistent() {
        let rows = (1..=3).map(|b| (0..20).map(|j| b as f64 * 0.5f64.powi(j)).collect()).collect();
        let v = classify(&synthetic(rows), &ClassifyConfig::default());
        assert_eq!(v.class, StabilityClass::GuasConsistent);
        assert_eq!(v.residual_tau, 0.0);
    }

    #[test]
    fn flat_table_is_us_only() {
        let rows = (1..=3).map(|b| vec![b as f64; 20]).collect();
        assert_eq!(classify(&synthetic(rows), &ClassifyConfig::default()).class, StabilityClass::UsOnly);
    }

    #[test]
    fn infinite_cell_is_unstable_evidence() {
        let mut rows: Vec<Vec<f64>> = (1..=3).map(|b| vec![b as f64; 20]).collect();
        rows[1][7] = f64::INFINITY;
        assert_eq!(classify(&synthetic(rows), &ClassifyConfig::default()).class, StabilityClass::UnstableEvidence);
    }

    #[test]
    fn huge_gain_is_inconclusive() {
        let rows = (1..=3).map(|b| vec![100.0 * b as f64; 20]).collect();
        assert_eq!(classify(&synthetic(rows), &ClassifyConfig::default()).class, StabilityClass::Inconclusive);
    }

    #[test]
    fn regularization_is_monotone() {
        let rows = vec![vec![1.0, 0.5, 0.8, 0.1], vec![0.9, 0.9, 0.2, 0.3]];
        let r = regularize(&synthetic(rows));
        assert_eq!(r.table[0], vec![1.0, 0.8, 0.8, 0.1]);
        assert_eq!(r.table[1], vec![1.0, 0.9, 0.8, 0.3]);
        assert!((r.residual_tau - 0.3).abs() < 1e-12);
        assert!(r.residual_radius > 0.0);
    }

    fn motivating_cfg(radii: Vec<f64>) -> EnvelopeConfig {
        EnvelopeConfig {
            radii,
            horizon: 10.0,
            n_tau: 11,
            trials: 6,
            max_offset: 5.0,
            seed: 4,
            integrator: IntegratorConfig::with_step(1e-2),
        }
    }

    fn constant_one() -> TrajectorySource {
        TrajectorySource::Signals(Arc::new(|_, (a, b)| SwitchingSignal::constant(ModeIndex::of(1), a, b)))
    }

    #[test]
    fn zero_bin_rows_are_zero() {
        let e = systems::motivating(1.0).unwrap();
        let env = estimate_envelope(&e.system, &constant_one(), &motivating_cfg(vec![0.0, 1.0])).unwrap();
        assert!(env.beta_table[0].iter().all(|&v| v == 0.0));
        assert!(env.beta_table[1].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn conserved_norm_is_not_asymptotically_stable() {
        let e = systems::motivating(1.0).unwrap();
        let env = estimate_envelope(&e.system, &constant_one(), &motivating_cfg(vec![0.5, 1.0])).unwrap();
        let v = classify(&env, &ClassifyConfig::default());
        assert_eq!(v.class, StabilityClass::UsOnly);
    }

    #[test]
    fn envelope_is_reproducible_and_pool_independent() {
        let e = systems::motivating(1.0).unwrap();
        let src = systems::signal_source(&e).unwrap();
        let cfg = motivating_cfg(vec![0.5, 1.0]);
        let a = estimate_envelope(&e.system, &src, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| estimate_envelope(&e.system, &src, &cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blow_up_becomes_infinite_cells() {
        let grow = SwitchedSystem::new(
            "grow",
            1,
            1,
            1,
            Arc::new(|_, x, _, out| out[0] = 5.0 * x[0]),
            Arc::new(|_, _, _, out| out[0] = 0.0),
        );
        let src = constant_one();
        let cfg = EnvelopeConfig { radii: vec![1.0], ..motivating_cfg(vec![1.0]) };
        let env = estimate_envelope(&grow, &src, &cfg).unwrap();
        assert!(env.beta_table[0].last().unwrap().is_infinite());
        assert_eq!(classify(&env, &ClassifyConfig::default()).class, StabilityClass::UnstableEvidence);
    }

    #[test]
    fn us_check_examples() {
        let e = systems::inverter_default();
        let src = systems::signal_source(&e).unwrap();
        let cfg = IntegratorConfig::with_step(1e-2);
        let ens: Vec<Trajectory> = (0..5)
            .map(|k| {
                let sigma = match &src {
                    TrajectorySource::Signals(g) => g(k, (0.0, 30.0)).unwrap(),
                    _ => unreachable!(),
                };
                let x0 = [0.3 * k as f64, -0.5, 0.4, 0.2];
                simulate(&e.system, &sigma, 0.0, &x0, 30.0, &cfg).unwrap()
            })
            .collect();
        let v = check_us(&ens, &[0.25, 0.5, 1.0, 2.0], 0.25 + 1e-6).unwrap();
        assert!(v.pass);
        for (env, r) in v.envelope.iter().zip(&v.radius_bins) {
            assert!(*env <= r + 1e-6);
        }

        let zero = simulate(&e.system, &SwitchingSignal::constant(ModeIndex::of(1), 0.0, 1.0).unwrap(), 0.0, &[0.0; 4], 1.0, &cfg).unwrap();
        assert!(check_us(&[zero], &[0.5, 1.0], 1e-12).unwrap().envelope.iter().all(|&v| v == 0.0));

        let grow = SwitchedSystem::new("grow", 1, 1, 1, Arc::new(|_, x, _, out| out[0] = x[0]), Arc::new(|_, _, _, out| out[0] = 0.0));
        let sigma = SwitchingSignal::constant(ModeIndex::of(1), 0.0, 5.0).unwrap();
        let tr = simulate(&grow, &sigma, 0.0, &[0.1], 5.0, &cfg).unwrap();
        assert!(!check_us(&[tr], &[0.25, 1.0, 2.0], 0.25).unwrap().pass);
        assert!(check_us(&[], &[1.0], 1.0).is_err());
    }
}
