//! Experiment manifest: one JSON document naming a registry system, its
//! parameters, the switching class and the analysis settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use swstab::limiting::FalsifierConfig;
use swstab::signals::{MeasureConstraint, PatternConstraint};
use swstab::stability::{ClassifyConfig, EnvelopeConfig, StabilityClass, TrajectorySource};
use swstab::systems::{self, InverterParams, RegistryEntry, SignalClass};
use swstab::{Error, IntegratorConfig, ModeIndex, SwitchingSignal};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub system: SystemSpec,
    /// Overrides the entry's own switching class.
    #[serde(default)]
    pub signal: Option<SignalSpec>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub id: String,
    #[serde(default = "empty_object")]
    pub params: Value,
    /// Replace every `f_i` by `−f_i`.
    #[serde(default)]
    pub negate: bool,
    /// Multiply every output by this factor.
    #[serde(default = "one")]
    pub output_scale: f64,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Arbitrary { mean_dwell: f64 },
    Measure { window: f64, min_active: f64, mode: usize },
    Pattern { window: f64, dm: f64, d_max: f64 },
    Constant { mode: usize },
    CoveringPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    pub t0: f64,
    pub horizon: f64,
    /// Fixed initial state; otherwise drawn with `|x0| ≤ x0_radius`.
    pub x0: Option<Vec<f64>>,
    pub x0_radius: f64,
    pub trajectories: usize,
    pub sandwich_radius: f64,
    pub sandwich_density: usize,
    /// Certification stops each run at its first sample with `|x|` below this.
    pub resolution_floor: f64,
    pub envelope: EnvelopeConfig,
    pub classify: ClassifyConfig,
    /// Verdict the envelope command must reproduce; the entry's own by default.
    pub expect: Option<StabilityClass>,
    pub falsifier: Option<FalsifierConfig>,
    /// Run the falsifier without the inherited class constraints.
    pub drop_constraints: bool,
    pub expect_counterexample: bool,
}

impl Default for Analysis {
    fn default() -> Self {
        Analysis {
            t0: 0.0,
            horizon: 20.0,
            x0: None,
            x0_radius: 2.0,
            trajectories: 10,
            sandwich_radius: 3.0,
            sandwich_density: 9,
            resolution_floor: 0.0,
            envelope: EnvelopeConfig::default(),
            classify: ClassifyConfig::default(),
            expect: None,
            falsifier: None,
            drop_constraints: false,
            expect_counterexample: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MotivatingParams {
    a: f64,
}

impl Default for MotivatingParams {
    fn default() -> Self {
        MotivatingParams { a: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ShiftParams {
    limit_shift: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        ShiftParams { limit_shift: 1000.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InverterManifestParams {
    #[serde(rename = "L1")]
    l1: f64,
    #[serde(rename = "L2")]
    l2: f64,
    #[serde(rename = "C1")]
    c1: f64,
    #[serde(rename = "C2")]
    c2: f64,
    #[serde(rename = "T")]
    window: f64,
    dm: f64,
    #[serde(rename = "dM")]
    d_max: f64,
}

impl Default for InverterManifestParams {
    fn default() -> Self {
        InverterManifestParams { l1: 1.0, l2: 1.0, c1: 1.0, c2: 1.0, window: 10.0, dm: 0.5, d_max: 2.0 }
    }
}

fn parse<P: serde::de::DeserializeOwned + Serialize>(v: &Value) -> swstab::Result<(P, Value)> {
    let p: P = serde_json::from_value(v.clone()).map_err(|e| Error::Input(format!("system params: {e}")))?;
    let resolved = serde_json::to_value(&p)?;
    Ok((p, resolved))
}

impl Manifest {
    pub fn load(path: &Path) -> swstab::Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    /// Builds the registry entry and fills `system.params` with every default.
    pub fn resolve(&mut self) -> swstab::Result<RegistryEntry> {
        let params = &self.system.params;
        let (mut entry, resolved) = match self.system.id.as_str() {
            "motivating" => {
                let (p, r) = parse::<MotivatingParams>(params)?;
                (systems::motivating(p.a)?, r)
            }
            "example1" => {
                let (p, r) = parse::<ShiftParams>(params)?;
                let g: systems::StateGain = Arc::new(|t, _| t.sin());
                (systems::example1(g.clone(), g, p.limit_shift)?, r)
            }
            "example4" => {
                let (p, r) = parse::<ShiftParams>(params)?;
                let mut e = systems::example4_default();
                if p.limit_shift != ShiftParams::default().limit_shift {
                    let alpha: systems::ScalarGain = Arc::new(|_, v| v);
                    let rho: swstab::lyapunov::Gauge = Arc::new(|v| v * v);
                    e = systems::example4(
                        Arc::new(|t: f64| 1.0 + 0.5 * t.sin()),
                        Arc::new(|t: f64| 1.0 + t.cos()),
                        alpha.clone(),
                        alpha,
                        rho.clone(),
                        rho,
                        p.limit_shift,
                    )?;
                }
                (e, r)
            }
            "inverter" => {
                let (p, r) = parse::<InverterManifestParams>(params)?;
                let pattern = PatternConstraint::new(p.window, p.dm, p.d_max)?;
                let ip = InverterParams { l1: p.l1, l2: p.l2, c1: p.c1, c2: p.c2 };
                (systems::inverter_linear(ip, pattern)?, r)
            }
            other => return Err(Error::Input(format!("unknown system id {other:?}; known: {:?}", systems::IDS))),
        };
        self.system.params = resolved;
        if self.system.negate {
            entry.system = entry.system.negated();
        }
        if self.system.output_scale != 1.0 {
            if !(self.system.output_scale > 0.0 && self.system.output_scale.is_finite()) {
                return Err(Error::Input("output_scale must be positive".into()));
            }
            entry.system = entry.system.with_output_scale(self.system.output_scale);
        }
        if let Some(spec) = self.signal {
            self.check_signal(&entry, spec)?;
        }
        self.validate()?;
        if self.analysis.falsifier.is_none() {
            let window = entry.reduced.constraints().iter().filter_map(|c| c.window()).fold(0.0, f64::max);
            let d = FalsifierConfig::default();
            self.analysis.falsifier = Some(FalsifierConfig { span: d.span.max(2.0 * window), ..d });
        }
        Ok(entry)
    }

    fn check_signal(&self, e: &RegistryEntry, spec: SignalSpec) -> swstab::Result<()> {
        let n = e.system.n_modes();
        match spec {
            SignalSpec::Measure { window, min_active, mode } => {
                ModeIndex::new(mode, n)?;
                MeasureConstraint::new(window, min_active, ModeIndex::of(mode))?;
            }
            SignalSpec::Pattern { window, dm, d_max } => {
                PatternConstraint::new(window, dm, d_max)?;
            }
            SignalSpec::Constant { mode } => {
                ModeIndex::new(mode, n)?;
            }
            SignalSpec::Arbitrary { mean_dwell } if !(mean_dwell > 0.0) => {
                return Err(Error::Input("mean_dwell must be positive".into()));
            }
            SignalSpec::CoveringPolicy if e.policy.is_none() => {
                return Err(Error::Input(format!("{} has no covering policy", e.id)));
            }
            _ => {}
        }
        Ok(())
    }

    fn validate(&self) -> swstab::Result<()> {
        self.integrator.validate()?;
        let a = &self.analysis;
        if !(a.horizon >= 0.0 && a.t0.is_finite() && a.x0_radius > 0.0) {
            return Err(Error::Input("need horizon >= 0, finite t0 and x0_radius > 0".into()));
        }
        if !(a.resolution_floor >= 0.0) {
            return Err(Error::Input("resolution_floor must be nonnegative".into()));
        }
        Ok(())
    }

    /// Trajectory source for the manifest's class (or the entry's own).
    pub fn source(&self, e: &RegistryEntry) -> swstab::Result<TrajectorySource> {
        let n = e.system.n_modes();
        let class = match self.signal {
            None => return systems::signal_source(e),
            Some(SignalSpec::CoveringPolicy) => SignalClass::CoveringPolicy,
            Some(SignalSpec::Constant { mode }) => {
                let m = ModeIndex::new(mode, n)?;
                return Ok(TrajectorySource::Signals(Arc::new(move |_, (a, b)| SwitchingSignal::constant(m, a, b))));
            }
            Some(SignalSpec::Arbitrary { mean_dwell }) => SignalClass::Arbitrary { mean_dwell },
            Some(SignalSpec::Measure { window, min_active, mode }) => {
                SignalClass::Measure(MeasureConstraint::new(window, min_active, ModeIndex::new(mode, n)?)?)
            }
            Some(SignalSpec::Pattern { window, dm, d_max }) => SignalClass::Pattern(PatternConstraint::new(window, dm, d_max)?),
        };
        let mut tmp = e.clone();
        tmp.signal_class = class;
        systems::signal_source(&tmp)
    }

    /// Shortest span the class generators accept.
    pub fn min_signal_span(&self, e: &RegistryEntry) -> f64 {
        let class = match self.signal {
            Some(SignalSpec::Measure { window, .. }) | Some(SignalSpec::Pattern { window, .. }) => window,
            Some(_) => 0.0,
            None => match e.signal_class {
                SignalClass::Measure(c) => c.window,
                SignalClass::Pattern(c) => c.window,
                _ => 0.0,
            },
        };
        class.max(1.0)
    }

    pub fn signal_constraint_json(&self, e: &RegistryEntry) -> Value {
        match self.signal {
            Some(s) => serde_json::to_value(s).unwrap_or(Value::Null),
            None => serde_json::to_value(e.signal_class).unwrap_or(Value::Null),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(text: &str) -> swstab::Result<Manifest> {
        serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))
    }

    #[test]
    fn defaults_are_materialized() {
        let mut m = manifest(r#"{"system": {"id": "inverter"}}"#).unwrap();
        let e = m.resolve().unwrap();
        assert_eq!(e.id, "inverter");
        assert_eq!(m.system.params["dM"], 2.0);
        assert_eq!(m.analysis.falsifier.unwrap().span, 20.0);
        let back = serde_json::to_string(&m).unwrap();
        assert!(back.contains("\"integrator\""));
    }

    #[test]
    fn bad_manifests_are_input_errors() {
        assert!(manifest(r#"{"system": {"id": "motivating"}, "bogus": 1}"#).is_err());
        let mut m = manifest(r#"{"system": {"id": "nope"}}"#).unwrap();
        assert!(m.resolve().is_err());
        let mut m = manifest(r#"{"system": {"id": "motivating", "params": {"b": 1}}}"#).unwrap();
        assert!(m.resolve().is_err());
        let mut m = manifest(r#"{"system": {"id": "inverter", "params": {"dM": 3.2}}}"#).unwrap();
        assert!(matches!(m.resolve(), Err(Error::Parameter(_))));
        let mut m = manifest(r#"{"system": {"id": "motivating"}, "signal": {"kind": "constant", "mode": 3}}"#).unwrap();
        assert!(m.resolve().is_err());
    }
}
