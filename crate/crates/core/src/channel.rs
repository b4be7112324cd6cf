//! Block Rayleigh fading uplink: channel draws, AWGN, deep-fade masks and
//! the per-slot power negotiation between agents.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Radio parameters shared by the analog and digital schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    /// Subcarriers available per slot.
    pub subcarriers: usize,
    /// Bandwidth of one subcarrier in Hz.
    pub bandwidth_hz: f64,
    /// Slot (coherence) duration in seconds.
    pub slot_duration_s: f64,
    /// Noise power spectral density N_0 in W/Hz.
    pub noise_psd: f64,
    /// Per-agent maximum transmit power P_m in W.
    pub max_power_w: f64,
    /// Deep-fade threshold on |h|^2.
    pub epsilon: f64,
}

/// 1 mW at 0 dB SNR over 15 kHz.
pub const DEFAULT_NOISE_PSD: f64 = 1e-3 / 15e3;

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            subcarriers: 128,
            bandwidth_hz: 15e3,
            slot_duration_s: 1e-3,
            noise_psd: DEFAULT_NOISE_PSD,
            max_power_w: 1e-3,
            epsilon: 0.2,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let non_negative = |v: f64| v >= 0.0 && v.is_finite();
        if self.subcarriers == 0 {
            return Err(Error::config("subcarriers must be at least 1"));
        }
        if !positive(self.bandwidth_hz)
            || !positive(self.slot_duration_s)
            || !positive(self.max_power_w)
        {
            return Err(Error::config(
                "bandwidth, slot duration and max power must be positive",
            ));
        }
        if !non_negative(self.noise_psd) || !non_negative(self.epsilon) {
            return Err(Error::config("noise psd and epsilon must be non-negative"));
        }
        Ok(())
    }

    /// Noise variance per subcarrier and slot, `N_0 W`.
    pub fn noise_variance(&self) -> f64 {
        self.noise_psd * self.bandwidth_hz
    }

    /// Average receive SNR `P / (N_0 W)` for a unit-variance channel.
    pub fn snr(&self) -> f64 {
        self.max_power_w / self.noise_variance()
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr().log10()
    }

    /// Same noise floor, transmit power chosen to hit `snr_db`. A noiseless
    /// radio is returned unchanged since every power gives infinite SNR.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        if self.noise_variance() == 0.0 {
            return self.clone();
        }
        Self {
            max_power_w: 10f64.powf(snr_db / 10.0) * self.noise_variance(),
            ..self.clone()
        }
    }
}

/// Complex gains `h[m][i]` of one slot, agent-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    agents: usize,
    subcarriers: usize,
    gains: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn from_gains(agents: usize, subcarriers: usize, gains: Vec<Complex64>) -> Result<Self> {
        if agents * subcarriers != gains.len() || agents == 0 || subcarriers == 0 {
            return Err(Error::Shape {
                context: "channel gains",
                expected: agents * subcarriers,
                actual: gains.len(),
            });
        }
        Ok(Self {
            agents,
            subcarriers,
            gains,
        })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn gain(&self, agent: usize, subcarrier: usize) -> Complex64 {
        self.gains[agent * self.subcarriers + subcarrier]
    }

    pub fn agent_gains(&self, agent: usize) -> &[Complex64] {
        &self.gains[agent * self.subcarriers..(agent + 1) * self.subcarriers]
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }
}

/// One `CN(0, 1)` sample: `(g1 + j g2) / sqrt(2)`.
pub fn rayleigh_gain<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Fresh i.i.d. Rayleigh block for `agents x subcarriers`.
pub fn draw_channel<R: Rng + ?Sized>(
    rng: &mut R,
    agents: usize,
    subcarriers: usize,
) -> ChannelRealization {
    assert!(
        agents >= 1 && subcarriers >= 1,
        "channel needs at least one agent and subcarrier"
    );
    let gains = (0..agents * subcarriers)
        .map(|_| rayleigh_gain(rng))
        .collect();
    ChannelRealization {
        agents,
        subcarriers,
        gains,
    }
}

/// Circularly-symmetric complex Gaussian with total variance `variance`.
pub fn noise_sample<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Result<Complex64> {
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::config(format!(
            "noise variance {variance} is negative"
        )));
    }
    if variance == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(rayleigh_gain(rng) * variance.sqrt())
}

/// `masked[m][i]` is set exactly when `|h[m][i]|^2 <= epsilon`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FadeMask {
    subcarriers: usize,
    masked: Vec<bool>,
}

impl FadeMask {
    pub fn new(channel: &ChannelRealization, epsilon: f64) -> Self {
        Self {
            subcarriers: channel.subcarriers,
            masked: channel
                .gains
                .iter()
                .map(|h| h.norm_sqr() <= epsilon)
                .collect(),
        }
    }

    pub fn is_masked(&self, agent: usize, subcarrier: usize) -> bool {
        self.masked[agent * self.subcarriers + subcarrier]
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// Scaling an agent can afford this slot. `Unbounded` means the agent's
/// signal is identically zero and it imposes no limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerFactor {
    Bounded(f64),
    Unbounded,
}

impl PowerFactor {
    pub fn value(self) -> Option<f64> {
        match self {
            PowerFactor::Bounded(a) => Some(a),
            PowerFactor::Unbounded => None,
        }
    }
}

/// `alpha_m = sqrt(P / mean_i |x_i / h_i|^2)` over the agent's active
/// subcarriers. None of the supplied gains may be deep-faded.
pub fn power_factor(
    signals: &[f64],
    gains: &[Complex64],
    max_power: f64,
    epsilon: f64,
) -> Result<PowerFactor> {
    if signals.is_empty() {
        return Err(Error::config(
            "power factor needs at least one active subcarrier",
        ));
    }
    if signals.len() != gains.len() {
        return Err(Error::Shape {
            context: "power factor gains",
            expected: signals.len(),
            actual: gains.len(),
        });
    }
    let mut energy = 0.0;
    for (index, (x, h)) in signals.iter().zip(gains).enumerate() {
        let gain_sq = h.norm_sqr();
        if gain_sq <= epsilon || gain_sq == 0.0 {
            return Err(Error::DeepFadeInActiveSet { index, gain_sq });
        }
        energy += x * x / gain_sq;
    }
    if energy == 0.0 {
        return Ok(PowerFactor::Unbounded);
    }
    let mean = energy / signals.len() as f64;
    Ok(PowerFactor::Bounded((max_power / mean).sqrt()))
}

/// Smallest bounded factor; `Unbounded` only if every participant is.
pub fn global_alpha(factors: &[PowerFactor]) -> Result<PowerFactor> {
    if factors.is_empty() {
        return Err(Error::NoParticipants);
    }
    Ok(factors
        .iter()
        .filter_map(|f| f.value())
        .reduce(f64::min)
        .map_or(PowerFactor::Unbounded, PowerFactor::Bounded))
}
