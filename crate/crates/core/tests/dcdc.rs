use ermsim::dcdc::*;
use ermsim::signal::{ForcedLevel, OverrideSchedule, PwmChannel, PwmOverride};
use proptest::prelude::*;

fn fixed_run(params: FlybackParams, d: f64, t_end: f64) -> FlybackRun {
    FlybackRun {
        params,
        source: InputSource::Ideal { v_in: 17.0 },
        control: DutyControl::Fixed(d),
        dt: 1e-8,
        t_start: 0.0,
        t_end,
        record_dt: 1e-5,
    }
}

fn clamp_forced(level: ForcedLevel, t: f64) -> OverrideSchedule {
    OverrideSchedule::from(t, PwmOverride { target: PwmChannel::Pwm1, forced_level: level })
}

#[test]
fn lossless_output_follows_ideal_ratio() {
    // Near-ideal coupling; the default leakage costs several percent of duty
    // at high d through commutation time.
    let p = FlybackParams {
        r_on: 1e-4,
        r_on_clamp: 1e-4,
        v_diode: 0.0,
        r_winding: 0.0,
        l_lk: 0.1e-6,
        ..FlybackParams::default()
    };
    for d in [0.3, 0.5, 0.65] {
        let tr = run_flyback(&fixed_run(p, d, 0.02), &OverrideSchedule::none()).unwrap();
        let settled = tr.v_out.window(0.015, 0.02).mean().unwrap();
        let ideal = ideal_flyback_output(17.0, p.turns_ratio, d).unwrap();
        assert!((settled / ideal - 1.0).abs() < 0.05, "d={d}: {settled} vs {ideal}");
    }
}

#[test]
fn lossy_output_stays_within_band_of_ideal() {
    let p = FlybackParams::default();
    let tr = run_flyback(&fixed_run(p, 0.5, 0.02), &OverrideSchedule::none()).unwrap();
    let settled = tr.v_out.window(0.015, 0.02).mean().unwrap();
    let ideal = ideal_flyback_output(17.0, p.turns_ratio, 0.5).unwrap();
    assert!(settled < ideal && settled > 0.85 * ideal, "{settled} vs {ideal}");
}

#[test]
fn energy_audit_closes() {
    let p = FlybackParams::default();
    let tr = run_flyback(&fixed_run(p, 0.65, 0.01), &OverrideSchedule::none()).unwrap();
    let e = tr.final_state.energy;
    let stored = tr.final_state.stored_energy(&p);
    assert!(e.input >= e.load);
    let deficit = e.input - e.load;
    let accounted = e.dissipated + stored;
    assert!((deficit - accounted).abs() <= 0.02 * deficit, "deficit {deficit}, accounted {accounted}");
}

#[test]
fn clamp_attacks_move_outputs_the_right_way() {
    let p = FlybackParams::default();
    let t_att = 0.01;
    // The panel's current limit is what the shoot-through loss works
    // against; a stiff source would feed it without limit.
    let run = FlybackRun {
        source: InputSource::Pv { panel: PvPanelModel::default(), c_in: 100e-6 },
        ..fixed_run(p, 0.65, 0.02)
    };
    let healthy = run_flyback(&run, &OverrideSchedule::none()).unwrap();
    let high = run_flyback(&run, &clamp_forced(ForcedLevel::High, t_att)).unwrap();
    let low = run_flyback(&run, &clamp_forced(ForcedLevel::Low, t_att)).unwrap();

    let tail = |tr: &FlybackTrace| tr.v_out.window(0.017, 0.02).mean().unwrap();
    assert!(tail(&high) <= tail(&healthy));
    let h_peak = healthy.v_sw.window(t_att, 0.02).max().unwrap();
    let l_peak = low.v_sw.window(t_att, 0.02).max().unwrap();
    assert!(l_peak >= h_peak);
    assert!(low.destroyed_at.is_some());
    assert_eq!(low.final_state.v_out, -p.v_diode);
}

#[test]
fn runs_are_deterministic() {
    let run = FlybackRun {
        source: InputSource::Pv { panel: PvPanelModel::default(), c_in: 100e-6 },
        control: DutyControl::Mppt { initial: MpptState::new(0.5, 0.01), interval_s: 1e-3 },
        ..fixed_run(FlybackParams::default(), 0.5, 5e-3)
    };
    let ovr = clamp_forced(ForcedLevel::High, 2e-3);
    assert_eq!(run_flyback(&run, &ovr).unwrap(), run_flyback(&run, &ovr).unwrap());
}

#[test]
fn spike_estimate_examples() {
    assert!((spike_estimate(2.8e-6, 5.0, 1e-6).unwrap() - 14.0).abs() < 1e-9);
    assert!((spike_estimate(2.8e-6, 10.0, 5e-7).unwrap() - 56.0).abs() < 1e-9);
    assert!((ideal_flyback_output(17.0, 1.5, 0.65).unwrap() - 72.857).abs() < 0.01);
}

proptest! {
    #[test]
    fn pv_current_bounded_and_decreasing(u1 in 0.0f64..1.0, u2 in 0.0f64..1.0) {
        let panel = PvPanelModel::default();
        let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
        let (i_lo, i_hi) = (pv_current(&panel, lo * panel.v_oc).unwrap(), pv_current(&panel, hi * panel.v_oc).unwrap());
        prop_assert!((0.0..=panel.i_sc).contains(&i_lo));
        prop_assert!((0.0..=panel.i_sc).contains(&i_hi));
        prop_assert!(i_hi <= i_lo);
    }

    #[test]
    fn mppt_duty_stays_in_band(steps in prop::collection::vec((0.0f64..25.0, 0.0f64..10.0), 1..200), d0 in 0.1f64..0.85) {
        let mut m = MpptState::new(d0, 0.02);
        for (v, i) in steps {
            m = mppt_step(&m, v, i);
            prop_assert!((0.1..=0.85).contains(&m.duty), "{}", m.duty);
        }
    }

    #[test]
    fn output_never_below_diode_drop(d in 0.1f64..0.8, forced in 0u8..3) {
        let p = FlybackParams::default();
        let ovr = match forced {
            0 => OverrideSchedule::none(),
            1 => clamp_forced(ForcedLevel::High, 5e-4),
            _ => clamp_forced(ForcedLevel::Low, 5e-4),
        };
        let tr = run_flyback(&fixed_run(p, d, 2e-3), &ovr).unwrap();
        prop_assert!(tr.v_out.samples.iter().all(|v| v.is_finite() && *v >= -p.v_diode - 1e-9));
        prop_assert!(tr.final_state.energy.input.is_finite());
    }
}

#[test]
fn pv_point_below_open_circuit() {
    let panel = PvPanelModel::default();
    let i = pv_current(&panel, 0.8 * panel.v_oc).unwrap();
    assert!(i > 0.0 && i < panel.i_sc);
    assert!(pv_current(&panel, 0.79 * panel.v_oc).unwrap() > i);
    assert!(pv_current(&panel, 0.81 * panel.v_oc).unwrap() < i);
}
