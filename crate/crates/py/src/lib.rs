//! Python bindings. Reports come back as plain dicts and lists.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use swstab::limiting::{wzsd_falsify, FalsifierConfig};
use swstab::lyapunov::{check_decrease_along, check_integral_bound, check_sandwich, SampleBox};
use swstab::signals::{gen_arbitrary, gen_measure_constrained, gen_pattern, validate_measure, validate_pattern};
use swstab::signals::{MeasureConstraint, PatternConstraint};
use swstab::stability::{classify, estimate_envelope, shift_uniformity, ClassifyConfig, EnvelopeConfig, TrajectorySource};
use swstab::systems::{by_id, signal_source, RegistryEntry, SignalClass, IDS};
use swstab::{simulate, simulate_with_covering, Error, IntegratorConfig, ModeIndex, SwitchingSignal, Trajectory};

fn err(e: Error) -> PyErr {
    match e {
        Error::BlowUp { .. } | Error::NonFinite { .. } | Error::Chattering { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn trajectory_dict(py: Python<'_>, tr: &Trajectory) -> PyResult<Py<PyAny>> {
    let modes: Vec<Option<usize>> = (0..tr.len()).map(|k| tr.mode(k).map(ModeIndex::get)).collect();
    let v = serde_json::json!({
        "t": tr.times(),
        "x": tr.states().collect::<Vec<_>>(),
        "mode": modes,
        "y": (0..tr.len()).map(|k| tr.output(k)).collect::<Vec<_>>(),
    });
    to_py(py, &v)
}

/// Piecewise-constant switching signal with 1-based modes.
#[pyclass(name = "Signal", module = "pyswstab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySignal {
    inner: SwitchingSignal,
}

#[pymethods]
impl PySignal {
    /// `breaks[k]` starts the interval on which `modes[k]` is active.
    #[new]
    fn new(breaks: Vec<f64>, modes: Vec<usize>, end: f64) -> PyResult<Self> {
        if modes.contains(&0) {
            return Err(PyValueError::new_err("modes are 1-based"));
        }
        let modes = modes.into_iter().map(ModeIndex::of).collect();
        Ok(PySignal { inner: SwitchingSignal::new(breaks, modes, end).map_err(err)? })
    }

    #[getter]
    fn breaks(&self) -> Vec<f64> {
        self.inner.breakpoints().to_vec()
    }

    #[getter]
    fn modes(&self) -> Vec<usize> {
        self.inner.modes().iter().map(|m| m.get()).collect()
    }

    #[getter]
    fn start(&self) -> f64 {
        self.inner.start()
    }

    #[getter]
    fn end(&self) -> f64 {
        self.inner.end()
    }

    fn mode_at(&self, t: f64) -> PyResult<usize> {
        Ok(self.inner.at(t).map_err(err)?.get())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Signal({} pieces on [{}, {}])", self.inner.len(), self.inner.start(), self.inner.end())
    }
}

/// A registry example: system, certificate, signal class and reduced
/// limiting system.
#[pyclass(name = "System", module = "pyswstab", frozen)]
struct PySystem {
    entry: RegistryEntry,
}

impl PySystem {
    fn signal_for(&self, signal: Option<&PySignal>, t0: f64, tf: f64, seed: u64) -> PyResult<Option<SwitchingSignal>> {
        if let Some(s) = signal {
            return Ok(Some(s.inner.clone()));
        }
        match self.entry.signal_class {
            SignalClass::CoveringPolicy => Ok(None),
            class => Ok(Some(class.generate(self.entry.system.n_modes(), (t0, tf), seed).map_err(err)?)),
        }
    }
}

#[pymethods]
impl PySystem {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        Ok(PySystem { entry: by_id(id).map_err(err)? })
    }

    #[getter]
    fn id(&self) -> &str {
        self.entry.id
    }

    #[getter]
    fn dim(&self) -> usize {
        self.entry.system.dim()
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.entry.system.n_modes()
    }

    fn describe(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.entry.describe())
    }

    /// Draws a signal from the entry's class on `[t0, t1]`.
    #[pyo3(signature = (t0, t1, seed=0))]
    fn generate_signal(&self, t0: f64, t1: f64, seed: u64) -> PyResult<PySignal> {
        let inner = self.entry.signal_class.generate(self.entry.system.n_modes(), (t0, t1), seed).map_err(err)?;
        Ok(PySignal { inner })
    }

    fn signal_in_class(&self, signal: &PySignal) -> PyResult<bool> {
        self.entry.signal_class.contains(&signal.inner).map_err(err)
    }

    /// Simulates from `x0` on `[t0, t_end]`. Without `signal`, one is drawn
    /// from the entry's class (or the covering policy switches in closed loop).
    /// Returns `(trajectory, signal)`.
    #[pyo3(signature = (x0, t_end, t0=0.0, signal=None, seed=0, step=1e-3))]
    fn simulate(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        t_end: f64,
        t0: f64,
        signal: Option<PyRef<'_, PySignal>>,
        seed: u64,
        step: f64,
    ) -> PyResult<(Py<PyAny>, PySignal)> {
        let cfg = IntegratorConfig::with_step(step);
        let e = &self.entry;
        let sigma = self.signal_for(signal.as_deref(), t0, t_end, seed)?;
        let (tr, sigma) = match sigma {
            Some(s) => (py.detach(|| simulate(&e.system, &s, t0, &x0, t_end, &cfg)).map_err(err)?, s),
            None => {
                let policy = e.policy.as_ref().expect("covering-policy entries carry a policy");
                py.detach(|| simulate_with_covering(&e.system, &e.covering, policy, t0, &x0, t_end, &cfg)).map_err(err)?
            }
        };
        Ok((trajectory_dict(py, &tr)?, PySignal { inner: sigma }))
    }

    /// `φ1(|ξ|) ≤ V ≤ φ2(|ξ|)` on a grid over `[−radius, radius]^n`.
    #[pyo3(signature = (radius=3.0, density=9))]
    fn check_sandwich(&self, py: Python<'_>, radius: f64, density: usize) -> PyResult<Py<PyAny>> {
        let e = &self.entry;
        let rep = check_sandwich(&e.certificate, &SampleBox::cube(e.system.dim(), radius), &e.covering, density).map_err(err)?;
        to_py(py, &rep)
    }

    /// Decrease and revisit checks along a simulated solution. `x0` and
    /// `signal` as in `simulate`.
    #[pyo3(signature = (x0, t_end, signal=None, seed=0, step=1e-2))]
    fn check_decrease(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        t_end: f64,
        signal: Option<PyRef<'_, PySignal>>,
        seed: u64,
        step: f64,
    ) -> PyResult<Py<PyAny>> {
        let (tr, sigma) = self.run(py, &x0, t_end, signal.as_deref(), seed, step)?;
        let rep = check_decrease_along(&self.entry.certificate, &self.entry.system, &tr, &sigma).map_err(err)?;
        to_py(py, &serde_json::json!({"decrease": rep.decrease, "revisit": rep.revisit}))
    }

    /// Output integral bound with `M = V(t0, x0)`. Samples after the first
    /// with `|x| < resolution_floor` are dropped.
    #[pyo3(signature = (x0, t_end, signal=None, seed=0, step=1e-2, resolution_floor=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn check_integral_bound(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        t_end: f64,
        signal: Option<PyRef<'_, PySignal>>,
        seed: u64,
        step: f64,
        resolution_floor: f64,
    ) -> PyResult<Py<PyAny>> {
        let (tr, sigma) = self.run(py, &x0, t_end, signal.as_deref(), seed, step)?;
        let tr = tr.until_norm_below(resolution_floor);
        let params = self
            .entry
            .integral_bound_for(tr.time(0), tr.state(0), sigma.mode_at(tr.time(0)))
            .ok_or_else(|| PyValueError::new_err(format!("{} states no integral bound", self.entry.id)))?
            .map_err(err)?;
        to_py(py, &check_integral_bound(&tr, &sigma, &self.entry.system, &params).map_err(err)?)
    }

    /// Monte Carlo stability envelope and its classification.
    #[pyo3(signature = (trials=50, horizon=40.0, radii=vec![0.5, 1.0, 2.0], n_tau=41, max_offset=20.0, seed=0, step=1e-2))]
    #[allow(clippy::too_many_arguments)]
    fn envelope(
        &self,
        py: Python<'_>,
        trials: usize,
        horizon: f64,
        radii: Vec<f64>,
        n_tau: usize,
        max_offset: f64,
        seed: u64,
        step: f64,
    ) -> PyResult<Py<PyAny>> {
        let cfg =
            EnvelopeConfig { radii, horizon, n_tau, trials, max_offset, seed, integrator: IntegratorConfig::with_step(step) };
        let e = &self.entry;
        let source: TrajectorySource = signal_source(e).map_err(err)?;
        let env = py.detach(|| estimate_envelope(&e.system, &source, &cfg)).map_err(err)?;
        let verdict = classify(&env, &ClassifyConfig::default());
        to_py(
            py,
            &serde_json::json!({
                "envelope": env,
                "verdict": verdict,
                "expected": e.expected_verdict,
                "shift_uniformity": shift_uniformity(&env),
            }),
        )
    }

    /// Searches the reduced limiting system for a zeroing-output solution
    /// bounded away from the origin.
    #[pyo3(signature = (budget=1000, seed=0, span=None, drop_constraints=false))]
    fn falsify(&self, py: Python<'_>, budget: usize, seed: u64, span: Option<f64>, drop_constraints: bool) -> PyResult<Py<PyAny>> {
        let red = if drop_constraints {
            self.entry.reduced.with_constraints(vec![]).map_err(err)?
        } else {
            self.entry.reduced.clone()
        };
        let window = red.constraints().iter().filter_map(|c| c.window()).fold(0.0, f64::max);
        let cfg = FalsifierConfig { budget, seed, span: span.unwrap_or(f64::max(5.0, 2.0 * window)), ..Default::default() };
        let out = py.detach(|| wzsd_falsify(&red, &cfg)).map_err(err)?;
        let candidate = out.candidate().map(|c| {
            serde_json::json!({
                "x0": c.trajectory.state(0),
                "min_norm": c.trajectory.min_norm(),
                "trajectory": serde_json::json!({
                    "t": c.trajectory.times(),
                    "x": c.trajectory.states().collect::<Vec<_>>(),
                }),
            })
        });
        to_py(
            py,
            &serde_json::json!({
                "verdict": if out.found() { "counterexample" } else { "no_counterexample_found" },
                "candidate": candidate,
                "budget_used": out.budget_used,
                "seed": out.seed,
                "eps": out.eps,
                "residual_tol": out.residual_tol,
                "span": out.span,
            }),
        )
    }

    fn __repr__(&self) -> String {
        format!("System({:?})", self.entry.id)
    }
}

impl PySystem {
    fn run(
        &self,
        py: Python<'_>,
        x0: &[f64],
        t_end: f64,
        signal: Option<&PySignal>,
        seed: u64,
        step: f64,
    ) -> PyResult<(Trajectory, SwitchingSignal)> {
        let cfg = IntegratorConfig::with_step(step);
        let e = &self.entry;
        match self.signal_for(signal, 0.0, t_end, seed)? {
            Some(s) => Ok((py.detach(|| simulate(&e.system, &s, 0.0, x0, t_end, &cfg)).map_err(err)?, s)),
            None => {
                let policy = e.policy.as_ref().expect("covering-policy entries carry a policy");
                py.detach(|| simulate_with_covering(&e.system, &e.covering, policy, 0.0, x0, t_end, &cfg)).map_err(err)
            }
        }
    }
}

/// Registry ids.
#[pyfunction]
fn systems() -> Vec<&'static str> {
    IDS.to_vec()
}

/// Random switching with exponential dwell times of mean `mean_dwell`.
#[pyfunction]
#[pyo3(signature = (n_modes, t0, t1, mean_dwell, seed=0))]
fn arbitrary_signal(n_modes: usize, t0: f64, t1: f64, mean_dwell: f64, seed: u64) -> PyResult<PySignal> {
    Ok(PySignal { inner: gen_arbitrary(n_modes, (t0, t1), mean_dwell, seed).map_err(err)? })
}

/// Signal in which `mode` is active at least `min_active` in every window.
#[pyfunction]
#[pyo3(signature = (n_modes, t0, t1, window, min_active, mode=1, seed=0))]
fn measure_signal(n_modes: usize, t0: f64, t1: f64, window: f64, min_active: f64, mode: usize, seed: u64) -> PyResult<PySignal> {
    let c = MeasureConstraint::new(window, min_active, ModeIndex::new(mode, n_modes).map_err(err)?).map_err(err)?;
    Ok(PySignal { inner: gen_measure_constrained(&c, n_modes, (t0, t1), seed).map_err(err)? })
}

/// Two-mode signal containing a compliant `1→2→1→2` pattern in every window.
#[pyfunction]
#[pyo3(signature = (t0, t1, window, dm, d_max, seed=0))]
fn pattern_signal(t0: f64, t1: f64, window: f64, dm: f64, d_max: f64, seed: u64) -> PyResult<PySignal> {
    let c = PatternConstraint::new(window, dm, d_max).map_err(err)?;
    Ok(PySignal { inner: gen_pattern(&c, (t0, t1), seed).map_err(err)? })
}

/// Exact check of the windowed active-measure constraint.
#[pyfunction]
#[pyo3(signature = (signal, window, min_active, mode=1))]
fn check_measure(py: Python<'_>, signal: &PySignal, window: f64, min_active: f64, mode: usize) -> PyResult<Py<PyAny>> {
    let c = MeasureConstraint::new(window, min_active, ModeIndex::new(mode, signal.inner.max_mode().max(mode)).map_err(err)?)
        .map_err(err)?;
    to_py(py, &validate_measure(&signal.inner, &c).map_err(err)?)
}

/// Exact check of the windowed switching-pattern constraint.
#[pyfunction]
fn check_pattern(py: Python<'_>, signal: &PySignal, window: f64, dm: f64, d_max: f64) -> PyResult<Py<PyAny>> {
    let c = PatternConstraint::new(window, dm, d_max).map_err(err)?;
    to_py(py, &validate_pattern(&signal.inner, &c).map_err(err)?)
}

#[pymodule]
fn pyswstab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PySignal>()?;
    m.add_function(wrap_pyfunction!(systems, m)?)?;
    m.add_function(wrap_pyfunction!(arbitrary_signal, m)?)?;
    m.add_function(wrap_pyfunction!(measure_signal, m)?)?;
    m.add_function(wrap_pyfunction!(pattern_signal, m)?)?;
    m.add_function(wrap_pyfunction!(check_measure, m)?)?;
    m.add_function(wrap_pyfunction!(check_pattern, m)?)?;
    Ok(())
}
