use proptest::prelude::*;

use swstab::limiting::{windowed_weak_average, wzsd_falsify, FalsifierConfig};
use swstab::lyapunov::{check_decrease_along, check_gradient, check_sandwich, SampleBox};
use swstab::signals::{
    gen_arbitrary, gen_measure_constrained, gen_pattern, validate_measure, validate_pattern, MeasureConstraint,
    PatternConstraint,
};
use swstab::stability::{estimate_envelope, regularize, EnvelopeConfig};
use swstab::systems::{self, signal_source};
use swstab::{
    active_index_set, nesting_radius, norm, signal_to_control, simulate, simulate_relaxed, simulate_with_covering,
    Covering, HalfSpace, IntegratorConfig, ModeIndex, RelaxedControl, SimplexPoint, SwitchingSignal,
};

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_weights_are_simplex_points(w in weights(4)) {
        let s: f64 = w.iter().sum();
        let p = SimplexPoint::new(w.iter().map(|v| v / s).collect()).unwrap();
        prop_assert!((p.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.weights().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn unnormalized_weights_are_rejected(w in weights(3), k in 1.01..3.0f64) {
        let s: f64 = w.iter().sum();
        prop_assert!(SimplexPoint::new(w.iter().map(|v| k * v / s).collect()).is_err());
    }

    #[test]
    fn weak_averages_stay_in_the_simplex(seed in 0u64..1000, cells in 20usize..80, frac in 0.0..0.9f64) {
        let seq: Vec<RelaxedControl> = (0..3)
            .map(|j| {
                let s = gen_arbitrary(3, (0.0, cells as f64 * 0.01), 0.03, seed * 7 + j).unwrap();
                signal_to_control(&s, 0.01, 3).unwrap()
            })
            .collect();
        let avg = windowed_weak_average(&seq, frac * cells as f64 * 0.01).unwrap();
        for p in avg.values() {
            prop_assert!((p.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.weights().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn measure_generator_round_trips(
        seed in any::<u64>(),
        n in 1usize..5,
        window in 0.1..3.0f64,
        frac in 0.0..=1.0f64,
        spans in 1.0..8.0f64,
    ) {
        let mode = ModeIndex::of(1 + (seed % n as u64) as usize);
        let c = MeasureConstraint::new(window, frac * window, mode).unwrap();
        let s = gen_measure_constrained(&c, n, (0.0, window * spans), seed).unwrap();
        let rep = validate_measure(&s, &c).unwrap();
        prop_assert!(rep.satisfied, "{:?} on {:?}", rep, c);
    }

    #[test]
    fn pattern_generator_round_trips(seed in any::<u64>(), dm in 0.01..1.0f64, ratio in 1.0..4.0f64, extra in 0.0..3.0f64, spans in 1.0..5.0f64) {
        let window = 6.0 * dm + extra;
        let c = PatternConstraint::new(window, dm, dm * ratio).unwrap();
        let s = gen_pattern(&c, (0.0, window * spans), seed).unwrap();
        let rep = validate_pattern(&s, &c).unwrap();
        prop_assert!(rep.satisfied, "{:?} on {:?}", rep, c);
    }

    #[test]
    fn covering_sets_nest_within_the_computed_radius(
        normals in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..5),
        base in (-2.0..2.0f64, -2.0..2.0f64),
        dirs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64), 20),
    ) {
        let mut pieces: Vec<Vec<HalfSpace>> = normals
            .iter()
            .filter(|(a, b, _)| a.hypot(*b) > 1e-3)
            .map(|&(a, b, c)| vec![HalfSpace::new(vec![a, b], c)])
            .collect();
        pieces.push(vec![]);
        let cov = Covering::new(2, pieces).unwrap();
        let xi = [base.0, base.1];
        let delta = nesting_radius(&xi, &cov).unwrap();
        prop_assume!(delta.is_finite());
        let here = active_index_set(&xi, &cov).unwrap();
        for (dx, dy, r) in dirs {
            let n = dx.hypot(dy).max(1e-9);
            let z = [xi[0] + dx / n * r * delta * 0.999, xi[1] + dy / n * r * delta * 0.999];
            let there = active_index_set(&z, &cov).unwrap();
            prop_assert!(there.iter().all(|m| here.contains(m)), "{there:?} ⊄ {here:?} at {z:?}");
        }
    }

    #[test]
    fn embedding_equivalence_on_random_signals(seed in any::<u64>(), idx in 0usize..4, x in (-2.0..2.0f64, -2.0..2.0f64)) {
        let e = systems::by_id(systems::IDS[idx]).unwrap();
        let s = gen_arbitrary(e.system.n_modes(), (0.0, 3.0), 0.2, seed).unwrap().quantized(0.01).unwrap();
        let mut x0 = vec![0.3; e.system.dim()];
        x0[0] = x.0;
        x0[1] = x.1;
        let cfg = IntegratorConfig::with_step(1e-3);
        let a = simulate(&e.system, &s, 0.0, &x0, 3.0, &cfg).unwrap();
        let b = simulate_relaxed(&e.system, &signal_to_control(&s, 0.01, e.system.n_modes()).unwrap(), 0.0, &x0, 3.0, &cfg).unwrap();
        prop_assert!(a.max_deviation(&b).unwrap() <= 1e-11);
    }

    #[test]
    fn steps_never_straddle_breakpoints(seed in any::<u64>(), h in 0.005..0.2f64) {
        let e = systems::example1_default();
        let s = gen_arbitrary(3, (0.0, 4.0), 0.1, seed).unwrap();
        let tr = simulate(&e.system, &s, 0.0, &[1.0, -1.0], 4.0, &IntegratorConfig::with_step(h)).unwrap();
        for b in s.switch_times() {
            prop_assert!(tr.times().contains(b));
        }
        for k in 0..tr.len() - 1 {
            prop_assert!(tr.time(k + 1) - tr.time(k) <= h * (1.0 + 1e-9));
        }
    }

    #[test]
    fn simulation_is_bit_deterministic(seed in any::<u64>()) {
        let e = systems::motivating(1.0).unwrap();
        let s = gen_arbitrary(2, (0.0, 5.0), 0.3, seed).unwrap();
        let cfg = IntegratorConfig::with_step(1e-2);
        let a = simulate(&e.system, &s, 0.0, &[0.7, 0.2], 5.0, &cfg).unwrap();
        let b = simulate(&e.system, &s, 0.0, &[0.7, 0.2], 5.0, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = swstab::rng::rng_from_seed(seed);
        for id in systems::IDS {
            let e = systems::by_id(id).unwrap();
            let pts: Vec<_> = (0..100)
                .map(|_| {
                    let x: Vec<f64> = (0..e.system.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                    (rng.random_range(0.0..10.0), x, ModeIndex::of(rng.random_range(1..=e.system.n_modes())))
                })
                .collect();
            let rep = check_gradient(&e.certificate, &pts, 1e-5).unwrap();
            prop_assert!(rep.pass, "{id}: {rep:?}");
        }
    }
}

/// Error of a single-mode run at step `h` against an `h/64` reference.
fn rk4_error(h: f64) -> f64 {
    let e = systems::example1_default();
    let s = SwitchingSignal::constant(ModeIndex::of(2), 0.0, 2.0).unwrap();
    let x0 = [1.0, 0.5];
    let run = |h: f64| simulate(&e.system, &s, 0.0, &x0, 2.0, &IntegratorConfig::with_step(h)).unwrap();
    let r = run(h / 64.0);
    let a = run(h);
    let d: Vec<f64> = a.final_state().iter().zip(r.final_state()).map(|(p, q)| p - q).collect();
    norm(&d)
}

#[test]
fn rk4_self_convergence() {
    for h in [0.1, 0.05, 0.02] {
        let ratio = rk4_error(h) / rk4_error(h / 2.0);
        assert!(ratio >= 8.0, "h = {h}: ratio {ratio}");
    }
}

#[test]
fn every_entry_passes_its_certificate_on_its_class() {
    use rand::Rng;
    for id in systems::IDS {
        let e = systems::by_id(id).unwrap();
        let dim = e.system.dim();
        let rep = check_sandwich(&e.certificate, &SampleBox::cube(dim, 3.0), &e.covering, 7).unwrap();
        assert!(rep.pass, "{id}: {rep:?}");
        let cfg = IntegratorConfig::with_step(1e-2);
        for k in 0..100u64 {
            let mut rng = swstab::rng::rng_from_seed(k);
            let x0: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (tr, s) = match (&e.policy, signal_source(&e).unwrap()) {
                (Some(p), _) => simulate_with_covering(&e.system, &e.covering, p, 0.0, &x0, 10.0, &cfg).unwrap(),
                (None, swstab::stability::TrajectorySource::Signals(g)) => {
                    let s = g(k, (0.0, 20.0)).unwrap();
                    (simulate(&e.system, &s, 0.0, &x0, 20.0, &cfg).unwrap(), s)
                }
                _ => unreachable!(),
            };
            let rep = check_decrease_along(&e.certificate, &e.system, &tr, &s).unwrap();
            assert!(rep.pass(), "{id} trial {k}: {:?} {:?}", rep.decrease, rep.revisit);
        }
    }
}

#[test]
fn envelopes_are_reproducible_and_monotone_in_radius() {
    let e = systems::motivating(1.0).unwrap();
    let src = signal_source(&e).unwrap();
    let cfg = EnvelopeConfig { trials: 20, horizon: 20.0, n_tau: 21, max_offset: 5.0, seed: 4, ..Default::default() };
    let a = estimate_envelope(&e.system, &src, &cfg).unwrap();
    let b = estimate_envelope(&e.system, &src, &cfg).unwrap();
    assert_eq!(a, b);
    let reg = regularize(&a);
    for j in 0..a.tau_grid.len() {
        for r in 1..reg.table.len() {
            assert!(reg.table[r][j] >= reg.table[r - 1][j]);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| estimate_envelope(&e.system, &src, &cfg).unwrap());
    assert_eq!(a, c);
}

#[test]
fn kept_candidates_respect_the_output_face() {
    let e = systems::example4_default();
    let bare = e.reduced.with_constraints(vec![]).unwrap();
    let cfg = FalsifierConfig { budget: 200, seed: 3, ..Default::default() };
    let out = wzsd_falsify(&bare, &cfg).unwrap();
    if let Some(c) = out.candidate() {
        let u = c.control.as_ref().unwrap();
        let tr = &c.trajectory;
        for k in 0..tr.len() {
            let p = u.at(tr.time(k).min(u.end() - 1e-12));
            let hh = bare.hhat(tr.time(k), tr.state(k));
            for (i, &w) in p.weights().iter().enumerate() {
                assert!(hh[i] <= cfg.residual_tol || w <= 1e-12, "weight {w} on mode {} with Ĥ = {}", i + 1, hh[i]);
            }
        }
    }
}
