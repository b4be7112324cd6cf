//! Fast invariant checks run by the `selftest` subcommand.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{draw_channel, ChannelRealization, RadioConfig};
use crate::digital::{
    run_budgeted, upload_duration, BudgetedScheme, DigitalConfig, FixedGain, Upload,
};
use crate::error::Result;
use crate::nn::argmax;
use crate::ota::{
    analog_inference, analog_round, channel_uses_analog, slots_needed, transmit_slot, FadingPolicy,
};
use crate::split::{CutOutputs, SplitNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome {
            name,
            passed,
            detail,
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

pub fn run() -> Vec<CheckOutcome> {
    vec![
        outcome("split equivalence", split_equivalence()),
        outcome("cost formulas", cost_formulas()),
        outcome("budgeted analog tasks", budgeted_tasks()),
        outcome("digital upload duration", digital_durations()),
        outcome("power constraint", power_constraint()),
        outcome("v1 algebra", v1_algebra()),
        outcome("channel statistics", channel_statistics()),
    ]
}

fn split_equivalence() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let radio = RadioConfig {
        subcarriers: 16,
        noise_psd: 0.0,
        epsilon: 0.0,
        ..RadioConfig::default()
    };
    let mut worst = 0.0f64;
    let mut argmax_ok = true;
    for trial in 0..24 {
        let agents = [1, 2, 6, 24][trial % 4];
        let split = SplitNetwork::random(agents, 5, 8, 16, 4, &mut rng)?;
        let inputs: Vec<Vec<f64>> = (0..agents)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let (analog, _) = analog_inference(&split, &inputs, &radio, FadingPolicy::V0, &mut rng)?;
        let reference = split.centralized_forward(&inputs)?;
        for (a, b) in analog.iter().zip(&reference) {
            worst = worst.max((a - b).abs());
        }
        argmax_ok &= argmax(&analog) == argmax(&reference);
    }
    Ok((
        worst <= 1e-9 && argmax_ok,
        format!("max |diff| = {worst:.3e}"),
    ))
}

fn cost_formulas() -> Result<(bool, String)> {
    let constant = (1..=128).all(|_m| channel_uses_analog(256, 128) == 256);
    let ok = constant
        && slots_needed(256, 128) == 2
        && DigitalConfig::new(32, RadioConfig::default()).payload_bits() == 1024;
    Ok((
        ok,
        format!(
            "analog CUs {} over {} slots",
            channel_uses_analog(256, 128),
            slots_needed(256, 128)
        ),
    ))
}

fn budgeted_tasks() -> Result<(bool, String)> {
    let scheme = BudgetedScheme::Analog {
        aggregation_width: 256,
        subcarriers: 128,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let low = run_budgeted(&scheme, 2_000_000, 10_000, &mut rng)?.completed_tasks;
    let high = run_budgeted(&scheme, 5_000_000, 10_000, &mut rng)?.completed_tasks;
    Ok((
        low == 7812 && high == 10_000,
        format!("{low} and {high} tasks"),
    ))
}

fn digital_durations() -> Result<(bool, String)> {
    let radio = RadioConfig::default();
    let mut unit = FixedGain(Complex64::new(1.0, 0.0));
    let a = upload_duration(30, 1, &radio, 100, &mut unit)?;
    let b = upload_duration(1024, 21, &radio, 100, &mut unit)?;
    Ok((
        a == Upload::Slots(2) && b == Upload::Slots(4),
        format!("{a:?}, {b:?}"),
    ))
}

fn power_constraint() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let radio = RadioConfig {
        subcarriers: 32,
        ..RadioConfig::default()
    };
    let p = radio.max_power_w;
    let mut ok = true;
    for _ in 0..500 {
        let agents = rng.random_range(1..8);
        let outputs = CutOutputs::new(
            (0..agents)
                .map(|_| (0..32).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect(),
        )?;
        let round = analog_round(&outputs, &radio, FadingPolicy::V1, &mut rng)?;
        for report in &round.slot_reports {
            let powers: Vec<f64> = report.transmit_power.iter().flatten().copied().collect();
            ok &= powers.iter().all(|&w| w <= p + 1e-12);
            if let Some(max) = powers.iter().copied().reduce(f64::max) {
                ok &= ((max - p) / p).abs() <= 1e-9;
            }
        }
    }
    Ok((ok, "500 rounds".into()))
}

fn v1_algebra() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let radio = RadioConfig {
        subcarriers: 8,
        noise_psd: 0.0,
        epsilon: 0.2,
        ..RadioConfig::default()
    };
    let mut ok = true;
    for _ in 0..200 {
        let agents = rng.random_range(2..7);
        let row: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let outputs = CutOutputs::new(vec![row.clone(); agents])?;
        let mut channel = draw_channel(&mut rng, agents, 8);
        // keep at least agent 0 clear on every subcarrier
        let mut gains = channel.gains().to_vec();
        for g in gains.iter_mut().take(8) {
            if g.norm_sqr() <= 0.2 {
                *g = Complex64::new(1.0, 0.0);
            }
        }
        channel = ChannelRealization::from_gains(agents, 8, gains)?;
        let (v1, _) = transmit_slot(&outputs, 0, &channel, &radio, FadingPolicy::V1, &mut rng)?;
        for (got, x) in v1.iter().zip(&row) {
            let expected = agents as f64 * x;
            ok &= (got - expected).abs() <= 1e-12 * expected.abs().max(1.0);
        }
    }
    Ok((ok, "200 random fade patterns".into()))
}

fn channel_statistics() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let ch = draw_channel(&mut rng, 1, n);
    let mean = ch.gains().iter().map(|h| h.norm_sqr()).sum::<f64>() / n as f64;
    let faded = ch.gains().iter().filter(|h| h.norm_sqr() <= 0.2).count() as f64 / n as f64;
    let expected = 1.0 - (-0.2f64).exp();
    Ok((
        (mean - 1.0).abs() <= 0.01 && (faded - expected).abs() <= 0.005,
        format!("E|h|^2 = {mean:.4}, P(|h|^2 <= 0.2) = {faded:.4}"),
    ))
}
