use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otasplit::channel::{draw_channel, power_factor, RadioConfig};
use otasplit::digital::{digital_round, DigitalConfig};
use otasplit::nn::argmax;
use otasplit::ota::{analog_inference, transmit_slot, FadingPolicy};
use otasplit::split::{CutOutputs, SplitNetwork};

fn random_inputs(rng: &mut ChaCha8Rng, agents: usize, width: usize) -> Vec<Vec<f64>> {
    (0..agents)
        .map(|_| (0..width).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noiseless_analog_matches_centralized(
        agents in prop::sample::select(vec![1usize, 2, 6, 24]),
        cut in prop::sample::select(vec![1usize, 8, 32]),
        agg in prop::sample::select(vec![1usize, 16, 256]),
        subcarriers in prop::sample::select(vec![1usize, 7, 128]),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let split = SplitNetwork::random(agents, 4, cut, agg, 5, &mut rng).unwrap();
        let inputs = random_inputs(&mut rng, agents, 4);
        let radio = RadioConfig { subcarriers, noise_psd: 0.0, epsilon: 0.0, ..RadioConfig::default() };
        let (analog, round) = analog_inference(&split, &inputs, &radio, FadingPolicy::V1, &mut rng).unwrap();
        let reference = split.centralized_forward(&inputs).unwrap();
        let worst = analog.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-9, "max diff {}", worst);
        prop_assert_eq!(argmax(&analog), argmax(&reference));
        prop_assert_eq!(round.channel_uses, agg.div_ceil(subcarriers) * subcarriers);
    }

    #[test]
    fn transmit_power_never_exceeds_budget(
        agents in 1usize..16,
        width in 1usize..40,
        log_power in -6.0f64..1.0,
        epsilon in 0.0f64..1.0,
        v1 in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = 10f64.powf(log_power);
        let radio = RadioConfig { subcarriers: 16, max_power_w: p, epsilon, ..RadioConfig::default() };
        let outputs = CutOutputs::new(random_inputs(&mut rng, agents, width)).unwrap();
        let channel = draw_channel(&mut rng, agents, 16);
        let policy = if v1 { FadingPolicy::V1 } else { FadingPolicy::V0 };
        let (_, report) = transmit_slot(&outputs, 0, &channel, &radio, policy, &mut rng).unwrap();
        for w in report.transmit_power.iter().flatten() {
            prop_assert!(*w <= p + 1e-12);
        }
    }

    #[test]
    fn power_factor_scales_inversely_with_amplitude(
        signal in prop::collection::vec(0.1f64..5.0, 1..20),
        scale in 0.1f64..10.0,
    ) {
        let gains = vec![Complex64::new(0.6, 0.8); signal.len()];
        let scaled: Vec<f64> = signal.iter().map(|x| x * scale).collect();
        let a = power_factor(&signal, &gains, 1e-3, 0.2).unwrap().value().unwrap();
        let b = power_factor(&scaled, &gains, 1e-3, 0.2).unwrap().value().unwrap();
        prop_assert!((a / b - scale).abs() <= 1e-9 * scale);
    }
}

#[test]
fn digital_cost_grows_with_agents() {
    let cfg = DigitalConfig::new(32, RadioConfig::default().with_snr_db(10.0));
    let trials = 300;
    let mut stats = Vec::new();
    for agents in [1usize, 2, 6, 24, 48] {
        let mut rng = ChaCha8Rng::seed_from_u64(agents as u64);
        let costs: Vec<f64> = (0..trials)
            .map(|_| digital_round(agents, &cfg, &mut rng).unwrap().channel_uses as f64)
            .collect();
        let mean = costs.iter().sum::<f64>() / trials as f64;
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        stats.push((agents, mean, (var / trials as f64).sqrt()));
    }
    for pair in stats.windows(2) {
        let ((m0, mean0, se0), (m1, mean1, se1)) = (pair[0], pair[1]);
        let slack = 3.0 * (se0 * se0 + se1 * se1).sqrt();
        assert!(mean1 + slack >= mean0, "M={m0}: {mean0}, M={m1}: {mean1}");
    }
    assert!(stats[4].1 > stats[0].1, "{stats:?}");
}
