use ermsim::grid::GridScenarioKind;
use ermsim::pipeline::{Channel, Stage};
use ermsim::sensor::{EnvSegment, EnvironmentProfile};
use ermsim::trojan::PayloadMode;
use ermsim_cli::config::*;
use proptest::prelude::*;

fn segments() -> impl Strategy<Value = Vec<EnvSegment>> {
    prop::collection::vec((0.6f64..20.0, -1.0f64..2.0, prop::option::of(-1e-3f64..1e-3)), 1..5).prop_map(|parts| {
        let mut t = 0.0;
        parts
            .into_iter()
            .map(|(len, rate, emi)| {
                let s = EnvSegment::new(t, t + len, rate);
                t += len;
                match emi {
                    Some(e) => s.with_emi(e),
                    None => s,
                }
            })
            .collect()
    })
}

prop_compose! {
    fn config()(
        mode in prop::sample::select(vec![PayloadMode::Pwm1High, PayloadMode::Pwm1Low, PayloadMode::Pwm5High]),
        kind in prop::option::of(prop::sample::select(GridScenarioKind::ALL.to_vec())),
        segs in segments(),
        t0 in -20.0f64..60.0,
        duty in 0.1f64..0.85,
        r_load in 1.0f64..500.0,
        c_bus in 1e-6f64..1e-3,
        present in any::<bool>(),
        mppt in any::<bool>(),
        coupled in any::<bool>(),
        stiff in any::<bool>(),
        decimate in 1usize..50,
        channels in prop::sample::subsequence(Channel::ALL.to_vec(), 1..=Channel::ALL.len()),
        t_attack in 0.0f64..20.0,
    ) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.trigger.payload_mode = mode;
        c.stage = Stage::for_mode(mode);
        c.power_dt = default_power_dt(c.stage);
        c.grid_kind = kind;
        c.env = EnvironmentProfile::new(t0, segs).unwrap();
        c.duty = duty;
        c.r_load = r_load;
        c.c_bus = c_bus;
        c.trojan_present = present;
        c.control = if mppt { ControlKind::Mppt } else { ControlKind::Fixed };
        c.source = if coupled { SourceKind::Dcdc } else { SourceKind::Ideal };
        c.load = if stiff { LoadKind::StiffGrid } else { LoadKind::Resistive };
        c.decimate = decimate;
        c.channels = channels;
        c.grid.t_attack = t_attack;
        c
    }
}

proptest! {
    #[test]
    fn emitted_config_parses_back_identically(c in config()) {
        let text = emit_config(&c);
        let back = parse_config_str(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back, c);
    }

    #[test]
    fn emitting_twice_is_stable(c in config()) {
        let once = emit_config(&c);
        prop_assert_eq!(emit_config(&parse_config_str(&once).unwrap()), once);
    }
}
