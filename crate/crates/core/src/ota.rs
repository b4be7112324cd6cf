//! Analog over-the-air aggregation round.
//!
//! Element `j` of every agent's soft-cut output rides on subcarrier
//! `j mod S` of slot `j / S`. Each slot the agents pre-invert their channel,
//! agree on a common scaling `alpha` (the smallest per-agent power factor),
//! and transmit simultaneously; the server sees the superposition plus noise
//! and divides by `alpha`. Agents whose subcarrier is deep-faded stay silent
//! on it, and the fading policy decides how the server compensates.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{
    draw_channel, global_alpha, noise_sample, power_factor, ChannelRealization, FadeMask,
    PowerFactor, RadioConfig,
};
use crate::error::{Error, Result};
use crate::split::{CutOutputs, SplitNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FadingPolicy {
    /// Faded agents contribute nothing (A-SLv0).
    V0,
    /// Faded agents are replaced by the average of the transmitting ones (A-SLv1).
    V1,
}

/// Per-slot diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub alpha: PowerFactor,
    /// `None` when every subcarrier of the agent was deep-faded.
    pub agent_factors: Vec<Option<PowerFactor>>,
    /// Realised mean `|alpha x / h|^2` over the agent's active subcarriers.
    pub transmit_power: Vec<Option<f64>>,
    pub faded_pairs: usize,
    /// Elements set to zero because nobody could transmit them.
    pub erased: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogRoundResult {
    /// Equalised aggregation-layer inputs.
    pub i_hat: Vec<f64>,
    pub slots_used: usize,
    pub channel_uses: usize,
    pub alpha_per_slot: Vec<PowerFactor>,
    /// Fraction of (agent, element) pairs lost to deep fades.
    pub fade_fraction: f64,
    /// Elements the server could not reconstruct and set to zero.
    pub erased: usize,
    pub slot_reports: Vec<SlotReport>,
}

pub fn slots_needed(aggregation_width: usize, subcarriers: usize) -> usize {
    aggregation_width.div_ceil(subcarriers)
}

/// Subcarrier-slot pairs one analog inference occupies. Partially used
/// slots count in full; the agent count does not enter.
pub fn channel_uses_analog(aggregation_width: usize, subcarriers: usize) -> usize {
    slots_needed(aggregation_width, subcarriers) * subcarriers
}

/// Server-side correction of a partial sum over `transmitting` of `agents`.
pub fn apply_policy(partial: f64, transmitting: usize, agents: usize, policy: FadingPolicy) -> f64 {
    if transmitting == 0 {
        return 0.0;
    }
    match policy {
        FadingPolicy::V0 => partial,
        // adding (M - k) copies of s / (M - k) for the k silent agents
        FadingPolicy::V1 => partial * agents as f64 / transmitting as f64,
    }
}

/// One slot carrying elements `first_element..first_element + n` where
/// `n = min(S, N_A - first_element)`, over the supplied channel.
pub fn transmit_slot<R: Rng + ?Sized>(
    outputs: &CutOutputs,
    first_element: usize,
    channel: &ChannelRealization,
    radio: &RadioConfig,
    policy: FadingPolicy,
    rng: &mut R,
) -> Result<(Vec<f64>, SlotReport)> {
    let agents = outputs.agents();
    if first_element >= outputs.width() {
        return Err(Error::config(format!(
            "slot starts at element {first_element} beyond width {}",
            outputs.width()
        )));
    }
    let n = radio.subcarriers.min(outputs.width() - first_element);
    if channel.agents() != agents || channel.subcarriers() < n {
        return Err(Error::Shape {
            context: "slot channel (agents x subcarriers)",
            expected: agents * n,
            actual: channel.agents() * channel.subcarriers(),
        });
    }
    let mask = FadeMask::new(channel, radio.epsilon);

    let mut agent_factors = Vec::with_capacity(agents);
    let mut active: Vec<Vec<usize>> = Vec::with_capacity(agents);
    for m in 0..agents {
        let idx: Vec<usize> = (0..n).filter(|&i| !mask.is_masked(m, i)).collect();
        let factor = if idx.is_empty() {
            None
        } else {
            let x: Vec<f64> = idx
                .iter()
                .map(|&i| outputs.agent(m)[first_element + i])
                .collect();
            let h: Vec<Complex64> = idx.iter().map(|&i| channel.gain(m, i)).collect();
            Some(power_factor(&x, &h, radio.max_power_w, radio.epsilon)?)
        };
        agent_factors.push(factor);
        active.push(idx);
    }
    let participants: Vec<PowerFactor> = agent_factors.iter().flatten().copied().collect();
    let alpha = if participants.is_empty() {
        PowerFactor::Unbounded
    } else {
        global_alpha(&participants)?
    };

    let mut received = vec![Complex64::new(0.0, 0.0); n];
    let mut transmitting = vec![0usize; n];
    let mut transmit_power = vec![None; agents];
    if let PowerFactor::Bounded(a) = alpha {
        for m in 0..agents {
            if active[m].is_empty() {
                continue;
            }
            let mut energy = 0.0;
            for &i in &active[m] {
                let h = channel.gain(m, i);
                let symbol = a * outputs.agent(m)[first_element + i] / h;
                energy += symbol.norm_sqr();
                received[i] += h * symbol;
                transmitting[i] += 1;
            }
            transmit_power[m] = Some(energy / active[m].len() as f64);
        }
    } else {
        // zero signal everywhere: agents still count as transmitting
        for (m, idx) in active.iter().enumerate() {
            if !idx.is_empty() {
                transmit_power[m] = Some(0.0);
            }
            for &i in idx {
                transmitting[i] += 1;
            }
        }
    }

    let noise_var = radio.noise_variance();
    let mut i_hat = Vec::with_capacity(n);
    let mut erased = 0;
    for i in 0..n {
        let y = received[i] + noise_sample(rng, noise_var)?;
        let value = match alpha {
            PowerFactor::Bounded(a) if transmitting[i] > 0 => {
                apply_policy(y.re / a, transmitting[i], agents, policy)
            }
            _ => {
                erased += 1;
                0.0
            }
        };
        i_hat.push(value);
    }

    let faded_pairs = (0..agents).map(|m| n - active[m].len()).sum();
    Ok((
        i_hat,
        SlotReport {
            alpha,
            agent_factors,
            transmit_power,
            faded_pairs,
            erased,
        },
    ))
}

/// Full analog round over freshly drawn block-fading channels, one per slot.
pub fn analog_round<R: Rng + ?Sized>(
    outputs: &CutOutputs,
    radio: &RadioConfig,
    policy: FadingPolicy,
    rng: &mut R,
) -> Result<AnalogRoundResult> {
    radio.validate()?;
    let agents = outputs.agents();
    let width = outputs.width();
    let slots = slots_needed(width, radio.subcarriers);

    let mut i_hat = Vec::with_capacity(width);
    let mut alpha_per_slot = Vec::with_capacity(slots);
    let mut slot_reports = Vec::with_capacity(slots);
    let mut faded = 0usize;
    let mut erased = 0usize;
    for slot in 0..slots {
        let first = slot * radio.subcarriers;
        let channel = draw_channel(rng, agents, radio.subcarriers);
        let (values, report) = transmit_slot(outputs, first, &channel, radio, policy, rng)?;
        erased += report.erased;
        faded += report.faded_pairs;
        alpha_per_slot.push(report.alpha);
        slot_reports.push(report);
        i_hat.extend(values);
    }

    Ok(AnalogRoundResult {
        i_hat,
        slots_used: slots,
        channel_uses: slots * radio.subcarriers,
        alpha_per_slot,
        fade_fraction: faded as f64 / (agents * width) as f64,
        erased,
        slot_reports,
    })
}

/// Agents -> analog uplink -> server head, for one sample.
pub fn analog_inference<X: AsRef<[f64]>, R: Rng + ?Sized>(
    split: &SplitNetwork,
    inputs: &[X],
    radio: &RadioConfig,
    policy: FadingPolicy,
    rng: &mut R,
) -> Result<(Vec<f64>, AnalogRoundResult)> {
    let outputs = split.cut_outputs(inputs)?;
    let round = analog_round(&outputs, radio, policy, rng)?;
    let probabilities = split.ps_forward(&round.i_hat)?;
    Ok((probabilities, round))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noiseless(subcarriers: usize, epsilon: f64) -> RadioConfig {
        RadioConfig {
            subcarriers,
            noise_psd: 0.0,
            epsilon,
            ..RadioConfig::default()
        }
    }

    fn random_outputs(rng: &mut ChaCha8Rng, agents: usize, width: usize) -> CutOutputs {
        CutOutputs::new(
            (0..agents)
                .map(|_| (0..width).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn policy_algebra() {
        let s = 0.9;
        assert!((apply_policy(s, 3, 4, FadingPolicy::V1) - (s + s / 3.0)).abs() < 1e-15);
        assert_eq!(apply_policy(s, 1, 4, FadingPolicy::V0), s);
        assert_eq!(apply_policy(s, 0, 4, FadingPolicy::V0), 0.0);
        assert_eq!(apply_policy(s, 0, 4, FadingPolicy::V1), 0.0);
    }

    #[test]
    fn channel_use_counts() {
        assert_eq!(channel_uses_analog(256, 128), 256);
        assert_eq!(slots_needed(256, 128), 2);
        assert_eq!(channel_uses_analog(1, 128), 128);
        assert_eq!(channel_uses_analog(257, 128), 384);
    }

    #[test]
    fn noiseless_round_recovers_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(agents, width, s) in &[(1, 5, 4), (6, 256, 128), (24, 17, 8)] {
            let outputs = random_outputs(&mut rng, agents, width);
            let round =
                analog_round(&outputs, &noiseless(s, 0.0), FadingPolicy::V0, &mut rng).unwrap();
            assert_eq!(round.slots_used, width.div_ceil(s));
            assert_eq!(round.channel_uses, round.slots_used * s);
            assert_eq!(round.erased, 0);
            for (a, b) in round.i_hat.iter().zip(outputs.sum()) {
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_outputs_superpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let outputs = CutOutputs::new(vec![vec![0.75; 10]; 5]).unwrap();
        let round = analog_round(&outputs, &noiseless(4, 0.0), FadingPolicy::V1, &mut rng).unwrap();
        for v in round.i_hat {
            assert!((v - 3.75).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_signal_is_erased_not_nan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let outputs = CutOutputs::new(vec![vec![0.0; 6]; 3]).unwrap();
        let radio = RadioConfig {
            subcarriers: 6,
            ..RadioConfig::default()
        };
        let round = analog_round(&outputs, &radio, FadingPolicy::V1, &mut rng).unwrap();
        assert_eq!(round.alpha_per_slot, vec![PowerFactor::Unbounded]);
        assert_eq!(round.erased, 6);
        assert!(round.i_hat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fully_faded_subcarrier_is_zero_under_both_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let outputs = CutOutputs::new(vec![vec![1.0, 2.0]; 2]).unwrap();
        let c = |v: f64| Complex64::new(v, 0.0);
        // subcarrier 0 faded for both agents, subcarrier 1 clear
        let channel =
            ChannelRealization::from_gains(2, 2, vec![c(0.1), c(1.0), c(0.2), c(1.5)]).unwrap();
        for policy in [FadingPolicy::V0, FadingPolicy::V1] {
            let (values, report) =
                transmit_slot(&outputs, 0, &channel, &noiseless(2, 0.2), policy, &mut rng).unwrap();
            assert_eq!(values[0], 0.0);
            assert!((values[1] - 4.0).abs() < 1e-12);
            assert_eq!(report.faded_pairs, 2);
        }
    }

    #[test]
    fn rejects_mismatched_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let outputs = CutOutputs::new(vec![vec![1.0; 4]; 2]).unwrap();
        let channel = draw_channel(&mut rng, 3, 4);
        assert!(transmit_slot(
            &outputs,
            0,
            &channel,
            &noiseless(4, 0.0),
            FadingPolicy::V0,
            &mut rng
        )
        .is_err());
        assert!(CutOutputs::new(vec![]).is_err());
        assert!(CutOutputs::new(vec![vec![]]).is_err());
    }

    #[test]
    fn round_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let outputs = random_outputs(&mut rng, 4, 40);
        let radio = RadioConfig {
            subcarriers: 16,
            ..RadioConfig::default()
        };
        let a = analog_round(
            &outputs,
            &radio,
            FadingPolicy::V1,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let b = analog_round(
            &outputs,
            &radio,
            FadingPolicy::V1,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.fade_fraction));
    }

    #[test]
    fn noise_variance_scales_with_alpha() {
        // Agents transmit a constant so alpha is fixed by channel; measure the
        // spread of the reconstruction error against sigma^2 / (2 alpha^2).
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let outputs = CutOutputs::new(vec![vec![1.0]; 2]).unwrap();
        let radio = RadioConfig {
            subcarriers: 1,
            epsilon: 0.0,
            ..RadioConfig::default()
        };
        let sigma2 = radio.noise_variance();
        let mut normalised = Vec::new();
        for _ in 0..20_000 {
            let round = analog_round(&outputs, &radio, FadingPolicy::V0, &mut rng).unwrap();
            let alpha = round.alpha_per_slot[0].value().unwrap();
            let err = round.i_hat[0] - 2.0;
            normalised.push(err / (sigma2 / (2.0 * alpha * alpha)).sqrt());
        }
        let var = normalised.iter().map(|e| e * e).sum::<f64>() / normalised.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "normalised variance {var}");
    }
}
