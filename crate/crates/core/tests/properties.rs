use proptest::prelude::*;
use tfqkd_core::chernoff::{expected_lower, expected_upper, real_lower, real_upper, TailSetting};
use tfqkd_core::config::{bind_constrained_intensity, validate};
use tfqkd_core::keyrate::evaluate;
use tfqkd_core::{ChannelPair, DeviceParams, ProtocolVariant, RunConfig, SourceParams};

fn symmetric_source() -> impl Strategy<Value = SourceParams> {
    (
        0.05f64..0.9,
        1e-4f64..0.1,
        0.02f64..0.6,
        0.005f64..0.4,
        0.5f64..0.98,
        (0.05f64..0.9, 0.05f64..0.9),
        1e-3f64..1.0,
    )
        .prop_map(|(sig, dec1, gap, send, pz, (w1, w2), slice)| {
            let rest = 1.0 - pz;
            let px1 = rest * w1;
            let px2 = (rest - px1) * w2;
            SourceParams::symmetric(sig, dec1, dec1 + gap, send, pz, rest - px1 - px2, px1, px2, slice)
        })
}

fn device() -> impl Strategy<Value = DeviceParams> {
    (-11.0f64..-5.0, 0.0f64..0.1).prop_map(|(ld, e_d)| DeviceParams {
        dark_rate: 10f64.powf(ld),
        misalignment: e_d,
        ..DeviceParams::reference()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rate_is_never_negative(dev in device(), src in symmetric_source(), la in 0.0f64..300.0, dl in 0.0f64..100.0, send_b in 0.005f64..0.4) {
        let channel = ChannelPair::new(la, la + dl);
        let original = validate(dev, channel, src, ProtocolVariant::Original).unwrap();
        let r = evaluate(&original).unwrap();
        prop_assert!(r.rate_per_window >= 0.0 && r.key_length >= 0.0);
        prop_assert!((r.rate_per_window - r.key_length / dev.total_windows).abs() <= 1e-15 * r.rate_per_window);

        let general = bind_constrained_intensity(&SourceParams { send_b, ..src }).unwrap();
        if let Ok(cfg) = validate(dev, channel, general, ProtocolVariant::General) {
            prop_assert!(evaluate(&cfg).unwrap().rate_per_window >= 0.0);
        }
    }

    #[test]
    fn modified_equals_original_on_symmetric_channels(dev in device(), src in symmetric_source(), l in 0.0f64..250.0) {
        let channel = ChannelPair::new(l, l);
        let original = evaluate(&validate(dev, channel, src, ProtocolVariant::Original).unwrap()).unwrap();
        let modified = evaluate(&validate(dev, channel, src, ProtocolVariant::Modified).unwrap()).unwrap();
        prop_assert_eq!(original.rate_per_window, modified.rate_per_window);
        prop_assert_eq!(original.n1, modified.n1);
    }

    #[test]
    fn config_text_round_trips(dev in device(), src in symmetric_source(), la in 0.0f64..300.0, lb in 0.0f64..300.0, v in 0usize..3) {
        let cfg = RunConfig { device: dev, channel: ChannelPair::new(la, lb), source: src, variant: ProtocolVariant::ALL[v] };
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn chernoff_bounds_bracket_their_argument(lx in 0.0f64..13.0, lxi in -14.0f64..-2.0) {
        let x = 10f64.powf(lx);
        let s = TailSetting::new(10f64.powf(lxi)).unwrap();
        prop_assert!(expected_lower(x, &s).unwrap() <= x);
        prop_assert!(expected_upper(x, &s).unwrap() >= x);
        prop_assert!(real_lower(x, &s).unwrap() <= x);
        prop_assert!(real_upper(x, &s).unwrap() >= x);
    }
}
