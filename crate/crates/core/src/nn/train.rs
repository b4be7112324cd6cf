use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax, Activation, Network};
use crate::error::{Error, Result};

/// Feature vectors with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Shape {
                context: "dataset labels",
                expected: inputs.len(),
                actual: labels.len(),
            });
        }
        if let Some(first) = inputs.first() {
            let width = first.len();
            if let Some(bad) = inputs.iter().find(|x| x.len() != width) {
                return Err(Error::Shape {
                    context: "dataset feature width",
                    expected: width,
                    actual: bad.len(),
                });
            }
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive and finite"));
        }
        Ok(())
    }
}

fn check_compatible(net: &Network, data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (Some(in_dim), Some(classes)) = (net.in_dim(), net.out_dim()) else {
        return Err(Error::config("network has no layers"));
    };
    let width = data.inputs[0].len();
    if width != in_dim {
        return Err(Error::Shape {
            context: "dataset features vs network input",
            expected: in_dim,
            actual: width,
        });
    }
    if let Some(&label) = data.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// `log(sum(exp(z))) - z[label]` with max subtraction.
fn softmax_cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

fn logits(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    let layers = net.layers();
    let (last, hidden) = layers.split_last().expect("checked non-empty");
    let mut h = x.to_vec();
    for layer in hidden {
        h = layer.forward(&h)?;
    }
    last.affine(&h)
}

/// Mean softmax cross-entropy over the dataset. The final layer's activation
/// is ignored; the loss is computed from its logits.
pub fn cross_entropy(net: &Network, data: &LabeledDataset) -> Result<f64> {
    check_compatible(net, data)?;
    let mut total = 0.0;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        total += softmax_cross_entropy(&logits(net, x)?, y);
    }
    Ok(total / data.len() as f64)
}

pub fn accuracy(net: &Network, data: &LabeledDataset) -> Result<f64> {
    check_compatible(net, data)?;
    let mut correct = 0usize;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        if argmax(&net.forward_slice(x)?) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Minibatch SGD on softmax cross-entropy. The last layer must use
/// `Softmax`; hidden layers may use `Relu` or `Identity`.
pub fn train_sgd(net: &Network, data: &LabeledDataset, cfg: &TrainConfig) -> Result<Network> {
    cfg.validate()?;
    check_compatible(net, data)?;
    let layers = net.layers();
    if layers.last().map(|l| l.activation()) != Some(Activation::Softmax) {
        return Err(Error::config("training requires a softmax output layer"));
    }
    if layers[..layers.len() - 1]
        .iter()
        .any(|l| l.activation() == Activation::Softmax)
    {
        return Err(Error::config(
            "softmax is only supported on the output layer",
        ));
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads: Vec<(Vec<f64>, Vec<f64>)> = net
        .layers()
        .iter()
        .map(|l| (vec![0.0; l.weights().len()], vec![0.0; l.out_dim()]))
        .collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            for (gw, gb) in grads.iter_mut() {
                gw.fill(0.0);
                gb.fill(0.0);
            }
            for &idx in batch {
                accumulate_gradient(&net, &data.inputs[idx], data.labels[idx], &mut grads)?;
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (layer, (gw, gb)) in net.layers_mut().iter_mut().zip(&grads) {
                let (w, b) = layer.params_mut();
                w.iter_mut().zip(gw).for_each(|(p, g)| *p -= step * g);
                b.iter_mut().zip(gb).for_each(|(p, g)| *p -= step * g);
            }
        }
    }
    Ok(net)
}

fn accumulate_gradient(
    net: &Network,
    x: &[f64],
    label: usize,
    grads: &mut [(Vec<f64>, Vec<f64>)],
) -> Result<()> {
    let layers = net.layers();
    // activations[l] is the input of layer l; pre[l] its affine output.
    let mut activations = Vec::with_capacity(layers.len() + 1);
    let mut pre = Vec::with_capacity(layers.len());
    activations.push(x.to_vec());
    for layer in layers {
        let z = layer.affine(activations.last().unwrap())?;
        let mut a = z.clone();
        layer.activation().apply(&mut a);
        pre.push(z);
        activations.push(a);
    }

    let mut delta = activations.last().unwrap().clone();
    delta[label] -= 1.0;

    for l in (0..layers.len()).rev() {
        let input = &activations[l];
        let out_dim = layers[l].out_dim();
        let (gw, gb) = &mut grads[l];
        for (k, &a) in input.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (g, d) in gw[k * out_dim..(k + 1) * out_dim].iter_mut().zip(&delta) {
                *g += a * d;
            }
        }
        gb.iter_mut().zip(&delta).for_each(|(g, d)| *g += d);

        if l > 0 {
            let w = layers[l].weights().data();
            let mut prev: Vec<f64> = w
                .chunks_exact(out_dim)
                .map(|row| row.iter().zip(&delta).map(|(wk, d)| wk * d).sum())
                .collect();
            if layers[l - 1].activation() == Activation::Relu {
                for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
    }
    Ok(())
}
