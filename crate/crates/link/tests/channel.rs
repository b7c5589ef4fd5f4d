use oisac_core::geometry::RelativeState;
use oisac_link::channel::{apply_channel_packet, apply_channel_raster, plr, PacketOutcome};
use oisac_link::queue::{displayed_payload, simulate_display_queue, DisplayQueue};
use oisac_link::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn table_entries_are_reproduced_exactly() {
    let t = PlrTable::default();
    for &(cm, p) in &t.distance {
        assert_eq!(t.distance_loss(cm / 100.0), p, "{cm} cm");
    }
    for &(deg, p) in &t.angle {
        let got = t.angle_loss(f64::to_radians(deg));
        assert!((got - p).abs() < 1e-15, "{deg} deg: {got}");
    }
}

#[test]
fn empirical_drop_rate_matches_model() {
    let cfg = ChannelConfig::default();
    let s = RelativeState::new(0.75, 0.0, std::f64::consts::FRAC_PI_6);
    let expected = plr(s.range(), s.gamma, &cfg.plr);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = VelocityPayload::default();
    let n = 100_000;
    let dropped = (0..n)
        .filter(|_| apply_channel_packet(&p, &s, &cfg, &mut rng) == PacketOutcome::Dropped)
        .count();
    let rate = dropped as f64 / n as f64;
    assert!((rate - expected).abs() <= 0.005, "{rate} vs {expected}");
}

#[test]
fn loss_grows_with_distance_and_angle() {
    let t = PlrTable::default();
    let mut prev = 0.0;
    for i in 0..200 {
        let p = plr(0.01 * i as f64, 0.0, &t);
        assert!(p >= prev);
        prev = p;
    }
    let mut prev = 0.0;
    for i in 0..90 {
        let p = plr(1.0, f64::to_radians(i as f64), &t);
        assert!(p >= prev);
        prev = p;
    }
}

proptest! {
    #[test]
    fn raster_corruption_keeps_shape(w in 1usize..40, h in 1usize..30, accel in 0.0..3.0f64,
                                     sigma in 0.0..50.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = FrameRaster::filled(w, h, 0);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i * 37 % 256) as u8;
        }
        let cfg = ChannelConfig { noise_sigma: sigma, ..ChannelConfig::default() };
        let out = apply_channel_raster(&img, accel, &cfg, &mut rng);
        prop_assert_eq!((out.width, out.height, out.data.len()), (w, h, w * h));
        let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(apply_channel_raster(&img, accel, &cfg, &mut rng2), out);
    }
}

#[test]
fn delay_is_monotone_in_queue_size() {
    for policy in [QueuePolicy::DropNewest, QueuePolicy::DropOldest] {
        let mut prev = 0.0;
        for n_q in 1..=60 {
            let cfg = DisplayQueueConfig {
                n_q,
                policy,
                ..Default::default()
            };
            let d = simulate_display_queue(&cfg, 300.0);
            assert!(d + 1e-9 >= prev, "{policy:?} n_q={n_q}: {d} < {prev}");
            prev = d;
        }
    }
}

#[test]
fn render_time_floor() {
    let cfg = DisplayQueueConfig {
        f_pub: 10.0,
        n_q: 30,
        ..Default::default()
    };
    assert!((simulate_display_queue(&cfg, 100.0) - 0.06).abs() < 1e-9);
}

/// Lag of the displayed speed behind a leader accelerating at 0.1 m/s^2.
fn ramp_lags(n_q: usize) -> Vec<f64> {
    let cfg = DisplayQueueConfig {
        n_q,
        ..Default::default()
    };
    let mut q = DisplayQueue::new(cfg);
    let mut lags = Vec::new();
    let dt = 0.001;
    let mut k = 0;
    for step in 0..60_000 {
        let t = step as f64 * dt;
        while cfg.publish_time(k) <= t + 1e-12 {
            let tp = cfg.publish_time(k);
            q.publish(tp, 0.1 * tp);
            k += 1;
        }
        q.advance(t);
        if t > 20.0 {
            if let Some((_, v)) = q.on_screen() {
                lags.push(0.1 * t - v);
            }
        }
    }
    lags
}

#[test]
fn single_slot_ramp_lag() {
    let lags = ramp_lags(1);
    let min = lags.iter().copied().fold(f64::INFINITY, f64::min);
    let max = lags.iter().copied().fold(0.0, f64::max);
    let mean = lags.iter().sum::<f64>() / lags.len() as f64;
    // on-screen age runs from t_tx to t_tx plus one display interval
    assert!(min >= 0.006 - 1e-9 && max <= 0.016 + 1e-9, "{min}..{max}");
    assert!((mean - 0.011).abs() < 0.001, "{mean}");
}

#[test]
fn deep_queue_ramp_lag() {
    let lags = ramp_lags(50);
    let mean = lags.iter().sum::<f64>() / lags.len() as f64;
    assert!((mean - 0.32).abs() <= 0.15 * 0.32, "{mean}");
}

#[test]
fn displayed_payload_on_constant_velocity() {
    let codec = PayloadCodec::for_bounds(&oisac_core::Bounds::experimental());
    let p = codec.encode(&oisac_core::Twist::new(0.3, 0.05), 0, 0);
    let history = vec![(0.0, p)];
    for t in [0.5, 3.0, 10.0] {
        assert_eq!(displayed_payload(t, &history, &DisplayQueueConfig::default()), Some(p));
    }
}

#[test]
fn displayed_payload_tracks_stamped_history() {
    let history: Vec<(f64, u32)> = (0..1000).map(|i| (i as f64 * 0.01, i)).collect();
    let shown = displayed_payload(5.0, &history, &DisplayQueueConfig::default()).unwrap();
    let age = 5.0 - f64::from(shown) * 0.01;
    assert!((0.06 - 1e-9..=0.16 + 1e-9).contains(&age), "{age}");
}
