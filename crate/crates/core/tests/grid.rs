use ermsim::grid::*;
use proptest::prelude::*;

fn run(kind: GridScenarioKind) -> GridScenarioResult {
    run_scenario(&FeederModel::ieee13(), &GridScenario::new(kind)).unwrap()
}

fn terminal(r: &GridScenarioResult) -> (f64, GridEvent) {
    r.terminal_event().cloned().expect("scenario ends in a terminal event")
}

#[test]
fn scenarios_end_in_expected_order() {
    let a = run(GridScenarioKind::InstantTrip);
    let b = run(GridScenarioKind::VoltageDegradation);
    let c = run(GridScenarioKind::LossOfExcitation);
    let (ta, ea) = terminal(&a);
    let (tb, eb) = terminal(&b);
    let (tc, ec) = terminal(&c);
    assert_eq!(ea, GridEvent::GridShutdown);
    assert_eq!(eb, GridEvent::VoltageCollapse);
    assert_eq!(ec, GridEvent::VoltageCollapse);
    assert!(ta < tc && tc < tb, "A {ta} C {tc} B {tb}");
    assert!(tb - 2.0 > 60.0, "{tb}");
    assert_eq!(a.first_event(|e| matches!(e, GridEvent::DgTrip { .. })), Some(2.0));
}

#[test]
fn baseline_runs_to_the_end_quietly() {
    let r = run(GridScenarioKind::Baseline);
    assert!(r.events.is_empty(), "{:?}", r.events);
    let last = r.samples.last().unwrap();
    assert!((last.t - 120.0).abs() < 1e-9);
    assert_eq!(last.f, 60.0);
}

#[test]
fn instant_trip_frequency_declines_linearly() {
    let r = run(GridScenarioKind::InstantTrip);
    let pts: Vec<(f64, f64)> = r.samples.iter().filter(|s| s.t > 2.05).map(|s| (s.t, s.f)).collect();
    assert!(pts.len() > 20);
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(r2 > 0.999, "R^2 {r2}");
    assert!(sxy / sxx < 0.0);
}

#[test]
fn shutdown_time_matches_closed_form() {
    let sc = GridScenario::new(GridScenarioKind::InstantTrip);
    let r = run_scenario(&FeederModel::ieee13(), &sc).unwrap();
    let p_pre = r.samples[0].p_slack_mw;
    let after = r.samples.iter().find(|s| s.t > sc.t_attack).unwrap();
    let deficit = after.p_slack_mw - p_pre;
    assert!((deficit - 0.1).abs() < 0.01, "{deficit}");
    let expected = sc.t_attack + sc.frequency.time_to_reach(deficit, sc.protection.uf_trip_hz).unwrap();
    let (t, _) = terminal(&r);
    // The decline starts one step after the trip and the scan is discrete.
    assert!((t - expected).abs() <= 2.0 * sc.dt, "{t} vs {expected}");
    let tail = &r.samples[r.samples.len() - 2..];
    assert!(tail[0].f >= sc.protection.uf_trip_hz && tail[1].f < sc.protection.uf_trip_hz);
}

#[test]
fn more_headroom_delays_or_prevents_shutdown() {
    let model = FeederModel::ieee13();
    let mut last = 0.0;
    for h in [0.0, 0.02, 0.05, 0.08] {
        let mut sc = GridScenario::new(GridScenarioKind::InstantTrip);
        sc.frequency.headroom_mw = h;
        let t =
            run_scenario(&model, &sc).unwrap().first_event(|e| *e == GridEvent::GridShutdown).unwrap_or(f64::INFINITY);
        assert!(t >= last, "headroom {h}: {t} < {last}");
        last = t;
    }
    let mut sc = GridScenario::new(GridScenarioKind::InstantTrip);
    sc.frequency.headroom_mw = 0.2;
    let r = run_scenario(&model, &sc).unwrap();
    assert!(r.first_event(|e| *e == GridEvent::GridShutdown).is_none());
    assert!((r.samples.last().unwrap().f - 60.0).abs() < 1e-6);
}

#[test]
fn absorbed_deficit_recovers_within_three_inertia_constants() {
    let fm = FrequencyModel { headroom_mw: 0.05, ..Default::default() };
    let dt = 0.01;
    let mut f = 59.5;
    for _ in 0..((3.0 * fm.h_agg / dt) as usize) {
        f += frequency_step(&fm, f, 0.03, dt);
    }
    // 59.5 + 0.5 * (1 - e^-6) leaves about 1.2 mHz.
    assert!((f - 60.0).abs() < 2e-3, "{f}");
}

#[test]
fn undervoltage_trips_after_delay_at_0_85_pu() {
    let s = ProtectionSettings::default();
    let mut st = ProtectionState::default();
    let dt = 0.1;
    let mut fired = None;
    for k in 0..150 {
        let out = protection_scan(&s, &mut st, 60.0, &[1.0, 0.85, 0.99], dt);
        if let (Some(b), None) = (out.uv_trip_bus, fired) {
            fired = Some((k as f64 + 1.0) * dt);
            assert_eq!(b, 1);
        }
    }
    let t = fired.expect("undervoltage trip");
    assert!((t - s.trip_delay_s).abs() < 1e-9, "{t}");
    assert!(st.uv_tripped);
}

#[test]
fn scenario_runs_are_deterministic() {
    for kind in GridScenarioKind::ALL {
        assert_eq!(run(kind), run(kind));
    }
}

#[test]
fn scenario_names_round_trip() {
    for kind in GridScenarioKind::ALL {
        assert_eq!(GridScenarioKind::parse(kind.as_str()).unwrap(), kind);
    }
    assert!(GridScenarioKind::parse("brownout").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decline_slope_scales_with_excess(p in 0.0f64..1.0, h in 0.0f64..0.5) {
        let fm = FrequencyModel { headroom_mw: h, ..Default::default() };
        let rate = fm.decline_rate(p);
        let excess = (p - h).max(0.0);
        prop_assert!((rate + excess * fm.f0 / (2.0 * fm.h_agg * fm.s_base_mva)).abs() < 1e-12);
        prop_assert!(rate <= 0.0);
    }

    #[test]
    fn frequency_never_overshoots_nominal_when_absorbed(f0 in 59.0f64..61.0, p in -0.02f64..0.02, dt in 1e-3f64..0.5) {
        let fm = FrequencyModel::default();
        let f1 = f0 + frequency_step(&fm, f0, p, dt);
        prop_assert!((f1 - 60.0).abs() <= (f0 - 60.0).abs() + 1e-12);
        prop_assert!((f1 - 60.0) * (f0 - 60.0) >= 0.0);
    }
}
