//! Correlated multi-view classification data. Every sample has one latent
//! point drawn around its class mean; each agent observes it through its own
//! fixed linear distortion plus private noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::LabeledDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples: usize,
    pub agents: usize,
    pub distortion: f64,
    pub view_noise: f64,
    pub class_separation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    classes: usize,
    dim: usize,
    labels: Vec<usize>,
    /// `views[agent][sample]`
    views: Vec<Vec<Vec<f64>>>,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate_dataset<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &DatasetSpec,
) -> Result<SyntheticDataset> {
    let DatasetSpec {
        classes,
        dim,
        samples,
        agents,
        distortion,
        view_noise,
        class_separation,
    } = *spec;
    if classes < 2 || dim == 0 || samples < classes || agents == 0 {
        return Err(Error::config(format!(
            "degenerate dataset: classes {classes}, dim {dim}, samples {samples}, agents {agents}"
        )));
    }
    if !(distortion >= 0.0 && view_noise >= 0.0 && class_separation >= 0.0) {
        return Err(Error::config("dataset scales must be non-negative"));
    }

    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| class_separation * normal(rng)).collect())
        .collect();
    let scale = distortion / (dim as f64).sqrt();
    let mixers: Vec<Vec<f64>> = (0..agents)
        .map(|_| (0..dim * dim).map(|_| scale * normal(rng)).collect())
        .collect();
    let noise_std = distortion * view_noise;

    let mut labels = Vec::with_capacity(samples);
    let mut views = vec![Vec::with_capacity(samples); agents];
    for i in 0..samples {
        let label = i % classes;
        let latent: Vec<f64> = means[label].iter().map(|mu| mu + normal(rng)).collect();
        for (m, mixer) in mixers.iter().enumerate() {
            let view: Vec<f64> = (0..dim)
                .map(|r| {
                    let mixed: f64 = (0..dim).map(|c| mixer[r * dim + c] * latent[c]).sum();
                    latent[r] + mixed + noise_std * normal(rng)
                })
                .collect();
            views[m].push(view);
        }
        labels.push(label);
    }
    Ok(SyntheticDataset {
        classes,
        dim,
        labels,
        views,
    })
}

impl SyntheticDataset {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agents(&self) -> usize {
        self.views.len()
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn view(&self, agent: usize, sample: usize) -> &[f64] {
        &self.views[agent][sample]
    }

    /// All agents' views of one sample.
    pub fn sample_views(&self, sample: usize) -> Vec<&[f64]> {
        self.views.iter().map(|v| v[sample].as_slice()).collect()
    }

    /// First `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.samples());
        let part = |range: std::ops::Range<usize>| Self {
            classes: self.classes,
            dim: self.dim,
            labels: self.labels[range.clone()].to_vec(),
            views: self
                .views
                .iter()
                .map(|v| v[range.clone()].to_vec())
                .collect(),
        };
        (part(0..n), part(n..self.samples()))
    }

    /// The same samples seen by the first `agents` agents only.
    pub fn with_agents(&self, agents: usize) -> Result<Self> {
        if agents == 0 || agents > self.agents() {
            return Err(Error::config(format!(
                "dataset has {} agents, asked for {agents}",
                self.agents()
            )));
        }
        Ok(Self {
            views: self.views[..agents].to_vec(),
            ..self.clone()
        })
    }

    /// One view per sample, cycling through agents, for training a single
    /// agent-agnostic model.
    pub fn pooled(&self) -> Result<LabeledDataset> {
        let inputs = (0..self.samples())
            .map(|i| self.views[i % self.agents()][i].clone())
            .collect();
        LabeledDataset::new(inputs, self.labels.clone())
    }
}
