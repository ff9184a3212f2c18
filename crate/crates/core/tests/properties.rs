use proptest::prelude::*;

use quanta_core::bayer::BayerPattern;
use quanta_core::cube::{read_cube, write_cube, CubeHeader, PhotonCube};
use quanta_core::recon::{adaptive_weights, rate_estimate, FlowField};
use quanta_core::sim::{sample_binary_frame, simulate_burst_sequence, BinaryFrame, NanoBurst, PhotonRateMap, Protocol, SimParams};
use quanta_core::{Image, RngSpec, SrgbImage};

fn pattern_strategy() -> impl Strategy<Value = Option<BayerPattern>> {
    prop_oneof![Just(None), proptest::sample::select(BayerPattern::ALL.to_vec()).prop_map(Some)]
}

fn cube_strategy() -> impl Strategy<Value = PhotonCube> {
    (1usize..=40, 1usize..=24, 0usize..=12, pattern_strategy(), any::<u64>(), 1.0f64..1e6, 0.01f64..20.0)
        .prop_flat_map(|(w, h, n, pattern, seed, fps, alpha)| {
            proptest::collection::vec(0u8..=1, w * h * n).prop_map(move |bits| {
                let header = CubeHeader {
                    width: w as u32,
                    height: h as u32,
                    frame_count: n as u32,
                    fps,
                    channels: if pattern.is_some() { 3 } else { 1 },
                    pattern,
                    alpha,
                    seed,
                };
                let frames = bits
                    .chunks(w * h)
                    .map(|c| BinaryFrame::new(w, h, 1, pattern, c.to_vec()).unwrap())
                    .collect();
                PhotonCube::new(header, frames).unwrap()
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cube_write_read_is_identity(cube in cube_strategy()) {
        let mut buf = Vec::new();
        let written = write_cube(&cube, &mut buf).unwrap();
        prop_assert_eq!(written as usize, buf.len());
        let back = read_cube(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &cube);
        let mut again = Vec::new();
        write_cube(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn truncated_cubes_are_rejected(cube in cube_strategy(), cut in 1usize..64) {
        let mut buf = Vec::new();
        write_cube(&cube, &mut buf).unwrap();
        let keep = buf.len().saturating_sub(cut);
        prop_assert!(read_cube(&mut &buf[..keep]).is_err());
    }

    #[test]
    fn nano_burst_values_lie_on_the_lattice(
        w in 1usize..16, h in 1usize..16, frames in 1usize..9, seed: u64, level in 0.0f64..=1.0,
    ) {
        let img = SrgbImage::new(Image::filled(w, h, 1, level)).unwrap();
        let sim = simulate_burst_sequence(&vec![img; frames], Protocol::BlurFree7, &SimParams::default(), &RngSpec::new(seed)).unwrap();
        prop_assert_eq!(sim.bursts.len(), frames);
        for nb in &sim.bursts {
            for v in nb.values() {
                let k = v * 7.0;
                prop_assert!((k - k.round()).abs() < 1e-12 && (0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn nano_burst_png_round_trip(w in 1usize..12, h in 1usize..12, n in 1u32..=64, seed: u64) {
        let rng = RngSpec::new(seed);
        let counts: Vec<u16> = (0..w * h).map(|i| (rng.bits(0, i as u64) % (n as u64 + 1)) as u16).collect();
        let nb = NanoBurst::from_counts(w, h, n, None, counts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nb.png");
        nb.save_png(&p).unwrap();
        prop_assert_eq!(NanoBurst::load_png(&p, n, None).unwrap(), nb);
    }

    #[test]
    fn rate_estimate_is_monotone(n in 1u32..200, k in 0u32..200) {
        prop_assume!(k < n);
        prop_assert!(rate_estimate(k, n) < rate_estimate(k + 1, n));
        prop_assert!(rate_estimate(n, n).is_finite());
    }

    #[test]
    fn brighter_scenes_fire_more(lo in 0.0f64..2.0, extra in 0.05f64..2.0, seed: u64) {
        // Shared uniforms make the comparison pathwise, not just on average.
        let rng = RngSpec::new(seed);
        let a = sample_binary_frame(&PhotonRateMap::constant(32, 32, 1, lo).unwrap(), &rng, 3);
        let b = sample_binary_frame(&PhotonRateMap::constant(32, 32, 1, lo + extra).unwrap(), &rng, 3);
        prop_assert!(a.bits().iter().zip(b.bits()).all(|(x, y)| x <= y));
    }

    #[test]
    fn sampling_is_deterministic(seed: u64, frame in 0u64..1000, rate in 0.0f64..4.0) {
        let map = PhotonRateMap::constant(17, 9, 3, rate).unwrap();
        let rng = RngSpec::new(seed);
        prop_assert_eq!(sample_binary_frame(&map, &rng, frame), sample_binary_frame(&map, &rng, frame));
    }

    #[test]
    fn adaptive_weights_are_normalised(
        t in 1usize..6, flows in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0, any::<bool>()), 6),
        sigma in 0.1f64..10.0, tau in 0.1f64..100.0,
    ) {
        let t = 2 * t - 1;
        let c = t / 2;
        let flow_sq: Vec<f64> = flows.iter().take(t).map(|(x, y, _)| x * x + y * y).collect();
        let valid: Vec<bool> = flows.iter().take(t).map(|f| f.2).collect();
        let Some(w) = adaptive_weights(&flow_sq, &valid, c, sigma, tau) else {
            prop_assert!(valid.iter().all(|v| !v));
            return Ok(());
        };
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, &ok) in valid.iter().enumerate() {
            if !ok {
                prop_assert_eq!(w[i], 0.0);
            }
        }
    }
}

#[test]
fn uniform_flow_field_reports_magnitude() {
    let f = FlowField::uniform(4, 3, 3.0, -4.0);
    assert_eq!(f.magnitude_sq(5), 25.0);
    assert_eq!(f.valid_fraction(), 1.0);
}
