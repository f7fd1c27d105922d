use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use swstab::integrate::simulate_with_covering;
use swstab::io::{write_json, write_signal_bundle, write_trajectory_file, SignalSidecar};
use swstab::limiting::{wzsd_falsify, FalsifierOutcome};
use swstab::lyapunov::{check_decrease_along, check_integral_bound, check_sandwich, CheckReport, SampleBox};
use swstab::rng::{derive_seed, rng_from_seed};
use swstab::stability::{classify, estimate_envelope, shift_uniformity, StabilityEnvelope, TrajectorySource};
use swstab::systems::RegistryEntry;
use swstab::{norm, simulate, Error, SwitchingSignal, Trajectory};

use crate::manifest::Manifest;

/// How a command ended when no error was raised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

pub struct Report {
    pub status: Status,
    pub summary: String,
}

/// Stream ids for seeds derived from the master seed.
const X0_STREAM: u64 = 1;
const SIGNAL_STREAM: u64 = 2;

fn x0_for(m: &Manifest, e: &RegistryEntry, k: usize) -> swstab::Result<Vec<f64>> {
    use rand::Rng;
    if let Some(x0) = &m.analysis.x0 {
        if x0.len() != e.system.dim() {
            return Err(Error::Dimension { expected: e.system.dim(), got: x0.len() });
        }
        return Ok(x0.clone());
    }
    let mut rng = rng_from_seed(derive_seed(derive_seed(m.seed, X0_STREAM), k as u64));
    let v: Vec<f64> = (0..e.system.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = m.analysis.x0_radius * rng.random_range(0.1..=1.0);
    let n = norm(&v).max(1e-12);
    Ok(v.iter().map(|c| c * r / n).collect())
}

/// Runs trajectory `k` of the batch.
fn run(m: &Manifest, e: &RegistryEntry, source: &TrajectorySource, k: usize) -> swstab::Result<(Trajectory, SwitchingSignal)> {
    let x0 = x0_for(m, e, k)?;
    let (t0, tf) = (m.analysis.t0, m.analysis.t0 + m.analysis.horizon);
    match source {
        TrajectorySource::Covering { covering, policy } => {
            simulate_with_covering(&e.system, covering, policy, t0, &x0, tf, &m.integrator)
        }
        TrajectorySource::Signals(generate) => {
            let span = m.analysis.horizon.max(m.min_signal_span(e));
            let sigma = generate(derive_seed(derive_seed(m.seed, SIGNAL_STREAM), k as u64), (t0, t0 + span))?;
            let tr = simulate(&e.system, &sigma, t0, &x0, tf, &m.integrator)?;
            Ok((tr, sigma))
        }
    }
}

fn batch(m: &Manifest, e: &RegistryEntry) -> swstab::Result<Vec<(Trajectory, SwitchingSignal)>> {
    let source = m.source(e)?;
    (0..m.analysis.trajectories).into_par_iter().map(|k| run(m, e, &source, k)).collect()
}

fn sidecar(m: &Manifest, e: &RegistryEntry, sigma: &SwitchingSignal, k: usize) -> SignalSidecar {
    SignalSidecar {
        start: sigma.start(),
        end: sigma.end(),
        n_modes: e.system.n_modes(),
        seed: Some(derive_seed(derive_seed(m.seed, SIGNAL_STREAM), k as u64)),
        constraint: m.signal_constraint_json(e),
    }
}

pub fn simulate_cmd(m: &Manifest, e: &RegistryEntry, out: &Path) -> swstab::Result<Report> {
    let source = m.source(e)?;
    let n = m.analysis.trajectories.max(1);
    let results: Vec<_> = (0..n).into_par_iter().map(|k| run(m, e, &source, k)).collect();
    let mut summary = String::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok((tr, sigma)) => {
                write_trajectory_file(&tr, &out.join(format!("trajectory_{k}.csv")))?;
                write_signal_bundle(out, &format!("signal_{k}"), &sigma, &sidecar(m, e, &sigma, k))?;
                let _ = writeln!(
                    summary,
                    "trajectory {k}: {} samples, |x(t_f)| = {:.6e}, {} switches",
                    tr.len(),
                    norm(tr.final_state()),
                    sigma.switch_times().len()
                );
            }
            Err(Error::BlowUp { t, partial }) => {
                write_trajectory_file(&partial, &out.join(format!("trajectory_{k}.partial.csv")))?;
                return Err(Error::BlowUp { t, partial });
            }
            Err(err) => return Err(err),
        }
    }
    Ok(Report { status: Status::Pass, summary })
}

/// Worst-case merge of per-trajectory reports of one check.
fn merge(check: &str, reports: impl IntoIterator<Item = CheckReport>) -> CheckReport {
    let mut acc: Option<CheckReport> = None;
    for r in reports {
        acc = Some(match acc {
            None => r,
            Some(mut a) => {
                a.pass &= r.pass;
                a.violations += r.violations;
                a.samples += r.samples;
                a.slack = a.slack.max(r.slack);
                if r.worst_margin < a.worst_margin {
                    a.worst_margin = r.worst_margin;
                    a.worst_location = r.worst_location;
                }
                a
            }
        });
    }
    let mut r = acc.expect("non-empty batch");
    r.check = check.into();
    r
}

fn report_json(r: &CheckReport) -> Value {
    json!({
        "check": r.check,
        "pass": r.pass,
        "worst_margin": r.worst_margin,
        "worst_location": r.worst_location,
        "slack": r.slack,
        "violations": r.violations,
        "samples": r.samples,
    })
}

pub fn certify(m: &Manifest, e: &RegistryEntry, out: &Path) -> swstab::Result<(Report, Vec<CheckReport>)> {
    if m.analysis.trajectories == 0 {
        return Err(Error::Input("certification needs a non-empty trajectory batch".into()));
    }
    let runs = batch(m, e)?;
    let floor = m.analysis.resolution_floor;
    let runs: Vec<_> = runs.into_iter().map(|(tr, s)| (tr.until_norm_below(floor), s)).collect();
    let a = &m.analysis;
    let mut reports =
        vec![check_sandwich(&e.certificate, &SampleBox::cube(e.system.dim(), a.sandwich_radius), &e.covering, a.sandwich_density)?];
    let dec = runs
        .par_iter()
        .map(|(tr, s)| check_decrease_along(&e.certificate, &e.system, tr, s))
        .collect::<swstab::Result<Vec<_>>>()?;
    let (d, r): (Vec<_>, Vec<_>) = dec.into_iter().map(|d| (d.decrease, d.revisit)).unzip();
    reports.push(merge("decrease", d));
    reports.push(merge("revisit", r));
    if e.integral_alpha.is_some() {
        let ib = runs
            .par_iter()
            .map(|(tr, s)| {
                let params = e.integral_bound_for(tr.time(0), tr.state(0), s.mode_at(tr.time(0))).expect("alpha")?;
                check_integral_bound(tr, s, &e.system, &params)
            })
            .collect::<swstab::Result<Vec<_>>>()?;
        reports.push(merge("integral_bound", ib));
    }
    let bundle: Vec<Value> = reports.iter().map(report_json).collect();
    write_json(&out.join("certify.json"), &json!({ "system": e.describe(), "reports": bundle, "trajectories": runs.len() }))?;
    let mut summary = String::new();
    for r in &reports {
        let _ = writeln!(
            summary,
            "{:<15} {}  worst margin {:.3e}, slack {:.1e}, {} violations / {} samples",
            r.check,
            if r.pass { "pass" } else { "FAIL" },
            r.worst_margin,
            r.slack,
            r.violations,
            r.samples
        );
    }
    let status = if reports.iter().all(|r| r.pass) { Status::Pass } else { Status::Fail };
    Ok((Report { status, summary }, reports))
}

fn write_envelope_csv(env: &StabilityEnvelope, path: &Path) -> swstab::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["radius".to_string()];
    header.extend(env.tau_grid.iter().map(|t| format!("tau={t}")));
    w.write_record(&header)?;
    for (r, row) in env.radius_bins.iter().zip(&env.beta_table) {
        let mut rec = vec![format!("{r}")];
        rec.extend(row.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn envelope(m: &Manifest, e: &RegistryEntry, out: &Path) -> swstab::Result<Report> {
    let mut cfg = m.analysis.envelope.clone();
    cfg.integrator = m.integrator;
    let env = estimate_envelope(&e.system, &m.source(e)?, &cfg)?;
    let v = classify(&env, &m.analysis.classify);
    let expected = m.analysis.expect.unwrap_or(e.expected_verdict);
    let uniformity = shift_uniformity(&env);
    write_envelope_csv(&env, &out.join("envelope.csv"))?;
    write_json(
        &out.join("verdict.json"),
        &json!({
            "verdict": v,
            "expected": expected,
            "pass": v.class == expected,
            "shift_uniformity": uniformity,
            "trials_per_cell": env.trials_per_cell,
            "envelope_file": "envelope.csv",
        }),
    )?;
    let tails: Vec<String> = v.tail_ratios.iter().map(|q| format!("{q:.3}")).collect();
    let summary = format!(
        "verdict {} (expected {expected}); tail ratios [{}], gain {:.3}, shift uniformity {:.3}\n",
        v.class,
        tails.join(", "),
        v.gain,
        uniformity
    );
    Ok(Report { status: if v.class == expected { Status::Pass } else { Status::Fail }, summary })
}

pub fn falsify(m: &Manifest, e: &RegistryEntry, out: &Path) -> swstab::Result<(Report, FalsifierOutcome)> {
    let cfg = m.analysis.falsifier.expect("resolved manifest has a falsifier config");
    let red = if m.analysis.drop_constraints { e.reduced.with_constraints(vec![])? } else { e.reduced.clone() };
    let outcome = wzsd_falsify(&red, &cfg)?;
    let mut file: Option<PathBuf> = None;
    if let Some(c) = outcome.candidate() {
        let name = "counterexample.csv";
        write_trajectory_file(&c.trajectory, &out.join(name))?;
        file = Some(name.into());
    }
    let verdict = if outcome.found() { "counterexample" } else { "no_counterexample_found" };
    write_json(
        &out.join("falsify.json"),
        &json!({
            "verdict": verdict,
            "budget_used": outcome.budget_used,
            "seed": outcome.seed,
            "eps": outcome.eps,
            "residual_tol": outcome.residual_tol,
            "span": outcome.span,
            "control_step": outcome.control_step,
            "integrator_step": outcome.integrator_step,
            "constraints": red.constraints(),
            "counterexample_file": file,
        }),
    )?;
    let pass = outcome.found() == m.analysis.expect_counterexample;
    let summary = format!(
        "falsifier: {verdict} after {} of {} candidates (expected {})\n",
        outcome.budget_used,
        cfg.budget,
        if m.analysis.expect_counterexample { "a counterexample" } else { "none" }
    );
    Ok((Report { status: if pass { Status::Pass } else { Status::Fail }, summary }, outcome))
}

/// Default manifest reproducing the claimed verdict of a registry example.
pub fn reproduce_manifest(id: &str, seed: u64) -> Manifest {
    let mut v = json!({ "system": { "id": id }, "seed": seed, "integrator": { "step": 0.01 } });
    match id {
        "motivating" => {
            v["analysis"] = json!({ "horizon": 40.0, "trajectories": 50, "resolution_floor": 0.01 });
        }
        "example4" | "example1" | "inverter" => {
            v["analysis"] = json!({ "horizon": 40.0, "trajectories": 50 });
        }
        _ => {}
    }
    serde_json::from_value(v).expect("static manifest")
}

pub fn reproduce(m: &Manifest, e: &RegistryEntry, out: &Path) -> swstab::Result<Report> {
    let (cert, _) = certify(m, e, out)?;
    let env = envelope(m, e, out)?;
    let (fals, _) = falsify(m, e, out)?;
    let status =
        if [cert.status, env.status, fals.status].iter().all(|s| *s == Status::Pass) { Status::Pass } else { Status::Fail };
    let summary = format!("reproduce {}\n{}{}{}", e.id, cert.summary, env.summary, fals.summary);
    Ok(Report { status, summary })
}

pub fn ensure_dir(dir: &Path) -> swstab::Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}
