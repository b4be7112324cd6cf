use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Scheme};
use super::dataset::{generate_dataset, DatasetSpec, SyntheticDataset};
use crate::channel::RadioConfig;
use crate::digital::{run_budgeted, BudgetedScheme, DigitalConfig};
use crate::error::{Error, Result};
use crate::nn::{argmax, train_sgd, Activation, Network, TrainConfig};
use crate::ota::{analog_round, FadingPolicy};
use crate::split::{CutOutputs, SplitNetwork};

/// Index of the aggregation layer in the base network
/// `[dim -> N_D relu, N_D -> N_A relu, N_A -> classes softmax]`.
pub const AGGREGATION_LAYER: usize = 1;

const STREAM_DATASET: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_ACCURACY: u64 = 2;
const STREAM_SCALABILITY: u64 = 3;

/// Generator for one grid point: the experiment seed picks the key, the grid
/// indices pick the ChaCha stream.
pub fn grid_rng(seed: u64, indices: &[u64]) -> ChaCha8Rng {
    let stream = indices.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &i| {
        (h ^ i).wrapping_mul(0x0000_0100_0000_01b3)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub base: Network,
    pub test: SyntheticDataset,
}

pub fn train_base_model(cfg: &ExperimentConfig, train: &SyntheticDataset) -> Result<Network> {
    let d = &cfg.dataset;
    let init = Network::random(
        &[d.dim, cfg.cut_width, cfg.aggregation_width, d.classes],
        &[Activation::Relu, Activation::Relu, Activation::Softmax],
        &mut grid_rng(cfg.seed, &[STREAM_INIT]),
    )?;
    let train_cfg = TrainConfig {
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.learning_rate,
        epochs: cfg.train.epochs,
        seed: cfg.seed,
    };
    train_sgd(&init, &train.pooled()?, &train_cfg)
}

/// Generates the dataset for `max(agents)` agents and either trains the base
/// model or checks the supplied one against the configured widths.
pub fn prepare_model(cfg: &ExperimentConfig, base: Option<Network>) -> Result<PreparedModel> {
    cfg.validate()?;
    let d = &cfg.dataset;
    let spec = DatasetSpec {
        classes: d.classes,
        dim: d.dim,
        samples: d.train_samples + d.test_samples,
        agents: cfg.max_agents(),
        distortion: d.distortion,
        view_noise: d.view_noise,
        class_separation: d.class_separation,
    };
    let data = generate_dataset(&mut grid_rng(cfg.seed, &[STREAM_DATASET]), &spec)?;
    let (train, test) = data.split_at(d.train_samples);
    let base = match base {
        Some(net) => {
            let widths: Vec<usize> = net.layers().iter().map(|l| l.out_dim()).collect();
            let expected = [cfg.cut_width, cfg.aggregation_width, d.classes];
            if net.in_dim() != Some(d.dim) || widths != expected {
                return Err(Error::config(format!(
                    "weights have input {:?} and widths {widths:?}, config expects input {} and {expected:?}",
                    net.in_dim(),
                    d.dim
                )));
            }
            net
        }
        None => train_base_model(cfg, &train)?,
    };
    Ok(PreparedModel { base, test })
}

pub fn split_for_agents(base: &Network, agents: usize) -> Result<SplitNetwork> {
    SplitNetwork::from_averaging(base, AGGREGATION_LAYER, agents)
}

fn cut_outputs_for(split: &SplitNetwork, test: &SyntheticDataset) -> Result<Vec<CutOutputs>> {
    (0..test.samples())
        .into_par_iter()
        .map(|s| split.cut_outputs(&test.sample_views(s)[..split.agents()]))
        .collect()
}

fn analog_accuracy(
    split: &SplitNetwork,
    outputs: &[CutOutputs],
    labels: &[usize],
    radio: &RadioConfig,
    policy: FadingPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut correct = 0usize;
    for (out, &label) in outputs.iter().zip(labels) {
        let round = analog_round(out, radio, policy, rng)?;
        if argmax(&split.ps_forward(&round.i_hat)?) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Test accuracy through the analog uplink, one fresh channel sequence per
/// sample drawn from `rng`.
pub fn evaluate_analog(
    split: &SplitNetwork,
    test: &SyntheticDataset,
    radio: &RadioConfig,
    policy: FadingPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let outputs = cut_outputs_for(split, test)?;
    analog_accuracy(split, &outputs, test.labels(), radio, policy, rng)
}

/// Digital decoding is error-free, so this is the centralised model's
/// accuracy and does not depend on the radio.
pub fn digital_accuracy(split: &SplitNetwork, test: &SyntheticDataset) -> Result<f64> {
    let correct = (0..test.samples())
        .into_par_iter()
        .map(|s| {
            let probs = split.centralized_forward(&test.sample_views(s)[..split.agents()])?;
            Ok(usize::from(argmax(&probs) == test.labels()[s]))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / test.samples() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub scheme: Scheme,
    pub agents: usize,
    /// `None` for the digital scheme, whose accuracy is SNR-independent.
    pub snr_db: Option<f64>,
    pub run: usize,
    pub accuracy: f64,
}

pub fn run_accuracy_sweep(
    cfg: &ExperimentConfig,
    model: &PreparedModel,
) -> Result<Vec<AccuracyRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (m_idx, &agents) in cfg.agents.iter().enumerate() {
        let split = split_for_agents(&model.base, agents)?;
        let outputs = cut_outputs_for(&split, &model.test)?;
        let labels = model.test.labels();

        let mut points = Vec::new();
        for (s_idx, &scheme) in cfg.schemes.iter().enumerate() {
            match scheme.policy() {
                None => points.push((s_idx, scheme, None, 0)),
                Some(_) => {
                    for (snr_idx, _) in cfg.snr_db.iter().enumerate() {
                        for run in 0..cfg.runs {
                            points.push((s_idx, scheme, Some(snr_idx), run));
                        }
                    }
                }
            }
        }
        let chunk = points
            .into_par_iter()
            .map(|(s_idx, scheme, snr_idx, run)| -> Result<AccuracyRow> {
                let (snr_db, accuracy) = match (scheme.policy(), snr_idx) {
                    (Some(policy), Some(snr_idx)) => {
                        let snr_db = cfg.snr_db[snr_idx];
                        let radio = cfg.radio.with_snr_db(snr_db);
                        let mut rng = grid_rng(
                            cfg.seed,
                            &[
                                STREAM_ACCURACY,
                                s_idx as u64,
                                m_idx as u64,
                                snr_idx as u64,
                                run as u64,
                            ],
                        );
                        (
                            Some(snr_db),
                            analog_accuracy(&split, &outputs, labels, &radio, policy, &mut rng)?,
                        )
                    }
                    _ => (None, digital_accuracy(&split, &model.test)?),
                };
                Ok(AccuracyRow {
                    scheme,
                    agents,
                    snr_db,
                    run,
                    accuracy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(chunk);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalabilityRow {
    pub scheme: Scheme,
    pub agents: usize,
    pub cu_budget: u64,
    pub snr_db: f64,
    pub run: usize,
    pub completed_tasks: u64,
}

pub fn run_scalability_sweep(cfg: &ExperimentConfig) -> Result<Vec<ScalabilityRow>> {
    cfg.validate()?;
    let mut points = Vec::new();
    for &scheme in &cfg.schemes {
        for (m_idx, &agents) in cfg.agents.iter().enumerate() {
            for &budget in &cfg.cu_budgets {
                for (snr_idx, &snr_db) in cfg.snr_db.iter().enumerate() {
                    for run in 0..cfg.runs {
                        points.push((scheme, m_idx, agents, budget, snr_idx, snr_db, run));
                    }
                }
            }
        }
    }
    points
        .into_par_iter()
        .map(|(scheme, m_idx, agents, cu_budget, snr_idx, snr_db, run)| {
            let radio = cfg.radio.with_snr_db(snr_db);
            let budgeted = match scheme {
                Scheme::Digital => BudgetedScheme::Digital {
                    agents,
                    config: DigitalConfig {
                        bits_per_element: cfg.bits_per_element,
                        elements_per_agent: cfg.cut_width,
                        radio,
                        max_slots: cfg.max_slots,
                    },
                },
                _ => BudgetedScheme::Analog {
                    aggregation_width: cfg.aggregation_width,
                    subcarriers: radio.subcarriers,
                },
            };
            // budgets share a channel sequence so larger budgets extend smaller ones
            let mut rng = grid_rng(
                cfg.seed,
                &[STREAM_SCALABILITY, m_idx as u64, snr_idx as u64, run as u64],
            );
            let ledger = run_budgeted(&budgeted, cu_budget, cfg.task_count, &mut rng)?;
            Ok(ScalabilityRow {
                scheme,
                agents,
                cu_budget,
                snr_db,
                run,
                completed_tasks: ledger.completed_tasks,
            })
        })
        .collect()
}

pub fn write_accuracy_csv<W: Write>(rows: &[AccuracyRow], mut out: W) -> io::Result<()> {
    out.write_all(b"scheme,M,snr_db,run,accuracy\n")?;
    for r in rows {
        let snr = r
            .snr_db
            .map_or_else(|| "inf".to_string(), |v| v.to_string());
        writeln!(
            out,
            "{},{},{},{},{}",
            r.scheme.name(),
            r.agents,
            snr,
            r.run,
            r.accuracy
        )?;
    }
    out.flush()
}

pub fn write_scalability_csv<W: Write>(rows: &[ScalabilityRow], mut out: W) -> io::Result<()> {
    out.write_all(b"scheme,M,cu_budget,snr_db,run,completed_tasks\n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.scheme.name(),
            r.agents,
            r.cu_budget,
            r.snr_db,
            r.run,
            r.completed_tasks
        )?;
    }
    out.flush()
}
