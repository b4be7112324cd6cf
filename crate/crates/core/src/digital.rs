//! Digital baseline: each agent gets its own share of orthogonal
//! subcarriers and uploads `bits_per_element * N_D` bits at the Shannon rate
//! of its block-fading channels. Also holds the channel-use budget used to
//! compare both schemes.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{rayleigh_gain, RadioConfig};
use crate::error::{Error, Result};
use crate::ota::channel_uses_analog;

/// `W log2(1 + P |h|^2 / (N_0 W))` in bit/s.
pub fn shannon_rate(power_w: f64, h: Complex64, noise_psd: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + power_w * h.norm_sqr() / (noise_psd * bandwidth_hz)).log2()
}

/// Source of per-slot subcarrier gains for an uploading agent.
pub trait GainSource {
    fn next_slot(&mut self, subcarriers: usize) -> Vec<Complex64>;
}

/// Independent `CN(0, 1)` gains every slot.
pub struct RayleighGains<'a, R: Rng + ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> GainSource for RayleighGains<'_, R> {
    fn next_slot(&mut self, subcarriers: usize) -> Vec<Complex64> {
        (0..subcarriers).map(|_| rayleigh_gain(self.0)).collect()
    }
}

/// The same gain on every subcarrier and slot.
pub struct FixedGain(pub Complex64);

impl GainSource for FixedGain {
    fn next_slot(&mut self, subcarriers: usize) -> Vec<Complex64> {
        vec![self.0; subcarriers]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upload {
    Slots(u64),
    /// Not delivered within the slot guard.
    Undeliverable,
}

/// Number of whole slots until the accumulated Shannon capacity of the
/// agent's subcarriers covers `payload_bits`. The rate is constant within a
/// slot and redrawn between slots.
pub fn upload_duration<G: GainSource + ?Sized>(
    payload_bits: u64,
    subcarriers: usize,
    radio: &RadioConfig,
    max_slots: u64,
    gains: &mut G,
) -> Result<Upload> {
    if subcarriers == 0 {
        return Err(Error::config(
            "an uploading agent needs at least one subcarrier",
        ));
    }
    if payload_bits == 0 {
        return Ok(Upload::Slots(0));
    }
    let target = payload_bits as f64;
    let mut delivered = 0.0;
    for slot in 1..=max_slots {
        let rate: f64 = gains
            .next_slot(subcarriers)
            .into_iter()
            .map(|h| shannon_rate(radio.max_power_w, h, radio.noise_psd, radio.bandwidth_hz))
            .sum();
        delivered += rate * radio.slot_duration_s;
        if delivered >= target {
            return Ok(Upload::Slots(slot));
        }
    }
    Ok(Upload::Undeliverable)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalConfig {
    pub bits_per_element: u32,
    /// Cut-layer width N_D: elements each agent uploads.
    pub elements_per_agent: usize,
    pub radio: RadioConfig,
    /// Per-upload slot guard.
    pub max_slots: u64,
}

impl DigitalConfig {
    pub fn new(elements_per_agent: usize, radio: RadioConfig) -> Self {
        Self {
            bits_per_element: 32,
            elements_per_agent,
            radio,
            max_slots: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if self.bits_per_element == 0 {
            return Err(Error::config("bits_per_element must be at least 1"));
        }
        if self.radio.noise_psd <= 0.0 {
            return Err(Error::config("digital rates need a positive noise psd"));
        }
        if self.max_slots == 0 {
            return Err(Error::config("max_slots must be at least 1"));
        }
        Ok(())
    }

    pub fn payload_bits(&self) -> u64 {
        u64::from(self.bits_per_element) * self.elements_per_agent as u64
    }

    /// Subcarriers per agent: `floor(S / M)`, at least one. Leftovers idle.
    pub fn subcarriers_per_agent(&self, agents: usize) -> usize {
        (self.radio.subcarriers / agents.max(1)).max(1)
    }

    /// Digital channel uses if every agent needed exactly one slot.
    pub fn nominal_cost(&self, agents: usize) -> usize {
        agents * self.elements_per_agent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UploadOutcome {
    /// Per-agent upload slots.
    pub tau_hat: Vec<u64>,
    /// Round duration in slots; the sum over agent batches when `M > S`.
    pub tau_bar: u64,
    pub batch_tau_bar: Vec<u64>,
    pub channel_uses: u64,
    pub delivered: bool,
}

/// One inference task over the digital uplink. When `M > S` agents upload in
/// batches of `S`, one subcarrier each, and batch durations add up.
pub fn digital_round<R: Rng + ?Sized>(
    agents: usize,
    cfg: &DigitalConfig,
    rng: &mut R,
) -> Result<UploadOutcome> {
    cfg.validate()?;
    if agents == 0 {
        return Err(Error::NoParticipants);
    }
    let s = cfg.radio.subcarriers;
    let per_agent = cfg.subcarriers_per_agent(agents);
    let payload = cfg.payload_bits();
    let mut gains = RayleighGains(rng);

    let mut tau_hat = Vec::with_capacity(agents);
    let mut batch_tau_bar = Vec::new();
    let mut delivered = true;
    let mut pending = agents;
    while pending > 0 {
        let batch = pending.min(s);
        pending -= batch;
        let mut longest = 0;
        for _ in 0..batch {
            let slots =
                match upload_duration(payload, per_agent, &cfg.radio, cfg.max_slots, &mut gains)? {
                    Upload::Slots(n) => n,
                    Upload::Undeliverable => {
                        delivered = false;
                        cfg.max_slots
                    }
                };
            longest = longest.max(slots);
            tau_hat.push(slots);
        }
        batch_tau_bar.push(longest);
    }
    let tau_bar: u64 = batch_tau_bar.iter().sum();
    Ok(UploadOutcome {
        tau_hat,
        tau_bar,
        batch_tau_bar,
        channel_uses: tau_bar * s as u64,
        delivered,
    })
}

/// Channel-use budget and what has been spent from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetLedger {
    pub total_cus: u64,
    pub consumed: u64,
    pub completed_tasks: u64,
}

impl BudgetLedger {
    pub fn new(total_cus: u64) -> Self {
        Self {
            total_cus,
            consumed: 0,
            completed_tasks: 0,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.total_cus - self.consumed
    }

    /// Books one completed task if its cost fits in what is left.
    pub fn try_complete(&mut self, cost: u64) -> bool {
        if cost > self.remaining() {
            return false;
        }
        self.consumed += cost;
        self.completed_tasks += 1;
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BudgetedScheme {
    Analog {
        aggregation_width: usize,
        subcarriers: usize,
    },
    Digital {
        agents: usize,
        config: DigitalConfig,
    },
}

/// Runs up to `task_count` inference tasks in order and stops at the first
/// one that does not fit the remaining budget.
pub fn run_budgeted<R: Rng + ?Sized>(
    scheme: &BudgetedScheme,
    budget: u64,
    task_count: u64,
    rng: &mut R,
) -> Result<BudgetLedger> {
    let mut ledger = BudgetLedger::new(budget);
    match scheme {
        BudgetedScheme::Analog {
            aggregation_width,
            subcarriers,
        } => {
            if *aggregation_width == 0 || *subcarriers == 0 {
                return Err(Error::config("analog scheme needs N_A >= 1 and S >= 1"));
            }
            let cost = channel_uses_analog(*aggregation_width, *subcarriers) as u64;
            while ledger.completed_tasks < task_count && ledger.try_complete(cost) {}
        }
        BudgetedScheme::Digital { agents, config } => {
            while ledger.completed_tasks < task_count {
                let outcome = digital_round(*agents, config, rng)?;
                if !outcome.delivered || !ledger.try_complete(outcome.channel_uses) {
                    break;
                }
            }
        }
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_db() -> RadioConfig {
        RadioConfig::default()
    }

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn shannon_rate_examples() {
        let r = zero_db();
        assert_eq!(
            shannon_rate(
                r.max_power_w,
                Complex64::new(0.0, 0.0),
                r.noise_psd,
                r.bandwidth_hz
            ),
            0.0
        );
        let unit = shannon_rate(r.max_power_w, one(), r.noise_psd, r.bandwidth_hz);
        assert!((unit - 15_000.0).abs() < 1e-9);
        assert!(shannon_rate(2.0 * r.max_power_w, one(), r.noise_psd, r.bandwidth_hz) > unit);
    }

    #[test]
    fn upload_duration_examples() {
        let r = zero_db();
        let mut fixed = FixedGain(one());
        assert_eq!(
            upload_duration(0, 1, &r, 10, &mut fixed).unwrap(),
            Upload::Slots(0)
        );
        assert_eq!(
            upload_duration(30, 1, &r, 10, &mut fixed).unwrap(),
            Upload::Slots(2)
        );
        assert_eq!(
            upload_duration(31, 1, &r, 10, &mut fixed).unwrap(),
            Upload::Slots(3)
        );
        // 21 subcarriers carry 315 bits per slot
        assert_eq!(
            upload_duration(1024, 21, &r, 10, &mut fixed).unwrap(),
            Upload::Slots(4)
        );
        assert!(upload_duration(1, 0, &r, 10, &mut fixed).is_err());
    }

    #[test]
    fn dead_channel_hits_guard() {
        let mut dead = FixedGain(Complex64::new(0.0, 0.0));
        assert_eq!(
            upload_duration(8, 4, &zero_db(), 100, &mut dead).unwrap(),
            Upload::Undeliverable
        );
    }

    #[test]
    fn allocation() {
        let cfg = DigitalConfig::new(32, zero_db());
        assert_eq!(cfg.subcarriers_per_agent(1), 128);
        assert_eq!(cfg.subcarriers_per_agent(24), 5);
        assert_eq!(cfg.subcarriers_per_agent(200), 1);
        assert_eq!(cfg.payload_bits(), 1024);
        assert_eq!(cfg.nominal_cost(6), 192);
    }

    #[test]
    fn round_bookkeeping() {
        let cfg = DigitalConfig::new(32, zero_db().with_snr_db(20.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = digital_round(24, &cfg, &mut rng).unwrap();
        assert_eq!(out.tau_hat.len(), 24);
        assert_eq!(out.tau_bar, *out.tau_hat.iter().max().unwrap());
        assert_eq!(out.channel_uses, out.tau_bar * 128);
        assert!(out.delivered);
    }

    #[test]
    fn batches_when_agents_exceed_subcarriers() {
        let radio = RadioConfig {
            subcarriers: 4,
            ..zero_db().with_snr_db(10.0)
        };
        let cfg = DigitalConfig::new(2, radio);
        let out = digital_round(10, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out.batch_tau_bar.len(), 3);
        assert_eq!(out.tau_bar, out.batch_tau_bar.iter().sum::<u64>());
        assert_eq!(out.channel_uses, out.tau_bar * 4);
    }

    #[test]
    fn channel_uses_grow_with_payload() {
        let radio = zero_db();
        let mut last = 0;
        for n_d in [1, 4, 16, 64] {
            let cfg = DigitalConfig::new(n_d, radio.clone());
            let out = digital_round(6, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
            assert!(out.channel_uses >= last);
            last = out.channel_uses;
        }
    }

    #[test]
    fn higher_power_never_slows_an_upload() {
        let lo = zero_db();
        let hi = lo.with_snr_db(10.0);
        for seed in 0..50 {
            let a = upload_duration(
                1024,
                5,
                &lo,
                1_000_000,
                &mut RayleighGains(&mut ChaCha8Rng::seed_from_u64(seed)),
            )
            .unwrap();
            let b = upload_duration(
                1024,
                5,
                &hi,
                1_000_000,
                &mut RayleighGains(&mut ChaCha8Rng::seed_from_u64(seed)),
            )
            .unwrap();
            match (a, b) {
                (Upload::Slots(a), Upload::Slots(b)) => assert!(b <= a),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn analog_budget_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scheme = BudgetedScheme::Analog {
            aggregation_width: 256,
            subcarriers: 128,
        };
        let run =
            |budget, rng: &mut ChaCha8Rng| run_budgeted(&scheme, budget, 10_000, rng).unwrap();
        assert_eq!(run(2_000_000, &mut rng).completed_tasks, 7812);
        assert_eq!(run(5_000_000, &mut rng).completed_tasks, 10_000);
        let empty = run(0, &mut rng);
        assert_eq!((empty.completed_tasks, empty.consumed), (0, 0));
    }

    #[test]
    fn ledger_never_overspends() {
        let mut ledger = BudgetLedger::new(10);
        assert!(ledger.try_complete(4));
        assert!(ledger.try_complete(4));
        assert!(!ledger.try_complete(4));
        assert_eq!(
            ledger,
            BudgetLedger {
                total_cus: 10,
                consumed: 8,
                completed_tasks: 2
            }
        );
    }

    #[test]
    fn digital_budget_respects_limit() {
        let cfg = DigitalConfig::new(32, zero_db());
        let scheme = BudgetedScheme::Digital {
            agents: 12,
            config: cfg,
        };
        let ledger =
            run_budgeted(&scheme, 100_000, 10_000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(ledger.consumed <= ledger.total_cus);
        assert!(ledger.completed_tasks > 0 && ledger.completed_tasks < 10_000);
    }
}
