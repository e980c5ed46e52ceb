use ermsim::grid::GridScenarioKind;
use ermsim::pipeline::*;
use ermsim::sensor::EnvironmentProfile;
use ermsim::signal::OverrideSchedule;
use ermsim::trojan::PayloadMode;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn synthetic(stage: Stage, pairs: &[(&str, f64)]) -> ScenarioResult {
    ScenarioResult {
        stage,
        channels: BTreeMap::new(),
        events: Vec::new(),
        summary: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        schedule: OverrideSchedule::none(),
    }
}

fn single(k: GridScenarioKind) -> DgBehavior {
    DgBehavior::Single(k)
}

#[test]
fn behavior_mapping_rules() {
    use GridScenarioKind::*;
    let failed = synthetic(Stage::Dcdc, &[("t_failure_s", 6.0), ("v_out_reduction", 1.01)]);
    assert_eq!(derive_dg_behavior(&failed), single(InstantTrip));
    assert_eq!(derive_dg_behavior(&synthetic(Stage::Dcdc, &[("v_out_reduction", 0.4)])), single(VoltageDegradation));
    assert_eq!(derive_dg_behavior(&synthetic(Stage::Dcdc, &[("v_out_reduction", 0.05)])), single(Baseline));
    assert_eq!(derive_dg_behavior(&synthetic(Stage::Dcdc, &[])), single(Baseline));

    let loe = synthetic(Stage::Dcac, &[("neg_pos_ratio_after", 0.49), ("pos_reduction", 0.0), ("rms_reduction", 0.18)]);
    assert_eq!(derive_dg_behavior(&loe), single(LossOfExcitation));
    let both = synthetic(Stage::Dcac, &[("neg_pos_ratio_after", 0.5), ("pos_reduction", 0.4)]);
    assert_eq!(derive_dg_behavior(&both), DgBehavior::Ambiguous(vec![VoltageDegradation, LossOfExcitation]));
    let sym = synthetic(Stage::Dcac, &[("neg_pos_ratio_after", 0.98), ("pos_reduction", 0.3)]);
    assert_eq!(derive_dg_behavior(&sym), single(VoltageDegradation));
    // The DC-DC reduction key is ignored on the DC-AC stage.
    let mixed = synthetic(Stage::Dcac, &[("neg_pos_ratio_after", 1.0), ("v_out_reduction", 0.9)]);
    assert_eq!(derive_dg_behavior(&mixed), single(Baseline));
}

#[test]
fn stage_follows_payload_mode() {
    assert_eq!(Stage::for_mode(PayloadMode::Pwm1High), Stage::Dcdc);
    assert_eq!(Stage::for_mode(PayloadMode::Pwm1Low), Stage::Dcdc);
    assert_eq!(Stage::for_mode(PayloadMode::Pwm5High), Stage::Dcac);
    for c in Channel::ALL {
        assert_eq!(Channel::parse(c.name()), Some(c));
    }
}

#[test]
fn validation_reports_every_problem() {
    let mut s = DeviceScenario::new(EnvironmentProfile::constant(25.0, 2.0), PayloadMode::Pwm5High);
    s.stage = Stage::Dcdc;
    s.control_decimate = 0;
    s.power_dt = 1.0;
    let p = s.problems();
    assert_eq!(p.len(), 4, "{p:?}");
    assert!(run_device_scenario(&s).is_err());
}

fn inert_pair(mode: PayloadMode, env: EnvironmentProfile) -> (ScenarioResult, ScenarioResult) {
    let present = DeviceScenario::new(env, mode);
    let bypassed = DeviceScenario { trojan_present: false, ..present.clone() };
    (run_device_scenario(&present).unwrap(), run_device_scenario(&bypassed).unwrap())
}

fn assert_bit_identical(a: &ScenarioResult, b: &ScenarioResult) {
    assert_eq!(a.channels.keys().collect::<Vec<_>>(), b.channels.keys().collect::<Vec<_>>());
    for (name, ts) in &a.channels {
        let other = &b.channels[name];
        assert_eq!(ts.samples.len(), other.samples.len(), "{name}");
        for (x, y) in ts.samples.iter().zip(&other.samples) {
            assert_eq!(x.to_bits(), y.to_bits(), "{name}");
        }
    }
    assert!(a.events.is_empty() && b.events.is_empty());
}

#[test]
fn trojan_is_inert_under_benign_conditions() {
    // A slow warm-up drives the sensor path without reaching the trigger.
    let env = EnvironmentProfile::ramp_from(25.0, 0.2, 0.05, 1.0);
    let (a, b) = inert_pair(PayloadMode::Pwm5High, env.clone());
    assert_bit_identical(&a, &b);
    assert_eq!(a.summary["glitches"], 0.0);
    let (a, b) = inert_pair(PayloadMode::Pwm1High, env);
    assert_bit_identical(&a, &b);
    assert_eq!(derive_dg_behavior(&a), DgBehavior::Single(GridScenarioKind::Baseline));
}

#[test]
fn untriggered_run_reports_no_trigger() {
    let s = DeviceScenario::new(EnvironmentProfile::constant(25.0, 1.0), PayloadMode::Pwm5High);
    let r = run_device_scenario(&s).unwrap();
    assert_eq!(r.t_trigger(), None);
    assert_eq!(r.summary["triggered"], 0.0);
    assert!(r.summary["rms_reduction"].abs() < 0.01);
    assert!(r.channel(Channel::VOut).is_some() && r.channel(Channel::VMain).is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn failure_always_wins(red in -1.0f64..2.0, ratio in 0.0f64..2.0, dcac in any::<bool>()) {
        let stage = if dcac { Stage::Dcac } else { Stage::Dcdc };
        let r = synthetic(stage, &[("t_failure_s", 1.0), ("v_out_reduction", red), ("pos_reduction", red), ("neg_pos_ratio_after", ratio)]);
        prop_assert_eq!(derive_dg_behavior(&r), DgBehavior::Single(GridScenarioKind::InstantTrip));
    }

    #[test]
    fn mapping_is_threshold_consistent(red in -1.0f64..2.0, ratio in 0.0f64..2.0) {
        let r = synthetic(Stage::Dcac, &[("pos_reduction", red), ("neg_pos_ratio_after", ratio)]);
        let asym = ratio < ASYMMETRY_RATIO;
        let deg = red >= DEGRADATION_FRACTION;
        let got = derive_dg_behavior(&r);
        match got {
            DgBehavior::Ambiguous(k) => prop_assert!(asym && deg && k.len() == 2),
            DgBehavior::Single(GridScenarioKind::LossOfExcitation) => prop_assert!(asym && !deg),
            DgBehavior::Single(GridScenarioKind::VoltageDegradation) => prop_assert!(!asym && deg),
            DgBehavior::Single(GridScenarioKind::Baseline) => prop_assert!(!asym && !deg),
            DgBehavior::Single(GridScenarioKind::InstantTrip) => prop_assert!(false),
        }
    }
}
