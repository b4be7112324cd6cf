use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
}

impl Activation {
    pub fn apply(self, values: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for v in values.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Activation::Softmax => softmax_in_place(values),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Softmax => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Softmax),
            _ => None,
        }
    }
}

fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// Affine map followed by an element-wise activation. Weights are stored
/// `(in_dim, out_dim)`, so `y_j = a(sum_k x_k W[k, j] + b_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::Shape {
                context: "dense layer weight rank",
                expected: 2,
                actual: weights.shape().len(),
            });
        }
        let out_dim = weights.shape()[1];
        if bias.shape() != [out_dim] {
            return Err(Error::Shape {
                context: "dense layer bias length",
                expected: out_dim,
                actual: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Uniform initialisation in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]` for
    /// both weights and bias.
    pub fn random<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
        let weights = Tensor::matrix(in_dim, out_dim, draw(in_dim * out_dim))?;
        let bias = Tensor::vector(draw(out_dim))?;
        Self::new(weights, bias, activation)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.data_mut(), self.bias.data_mut())
    }

    /// `x W + b`, before the activation.
    pub fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape {
                context: "dense layer input",
                expected: self.in_dim(),
                actual: x.len(),
            });
        }
        let out_dim = self.out_dim();
        let mut y = self.bias.data().to_vec();
        for (xk, row) in x.iter().zip(self.weights.data().chunks_exact(out_dim)) {
            if *xk == 0.0 {
                continue;
            }
            for (yj, w) in y.iter_mut().zip(row) {
                *yj += xk * w;
            }
        }
        Ok(y)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.affine(x)?;
        self.activation.apply(&mut y);
        Ok(y)
    }
}

/// A chain of dense layers. An empty network is the identity map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape {
                    context: "consecutive layer widths",
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Randomly initialised network with widths `dims[0] -> dims[1] -> ...`;
    /// `activations[i]` belongs to the layer producing `dims[i + 1]`.
    pub fn random<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() != activations.len() + 1 {
            return Err(Error::config(format!(
                "{} widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| DenseLayer::random(w[0], w[1], act, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.layers.first().map(DenseLayer::in_dim)
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.layers.last().map(DenseLayer::out_dim)
    }

    pub fn forward_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if let Some(expected) = self.in_dim() {
            if x.len() != expected {
                return Err(Error::Shape {
                    context: "network input",
                    expected,
                    actual: x.len(),
                });
            }
        }
        Tensor::vector(self.forward_slice(x.data())?)
    }
}

#[cfg(test)]
mod tests {
    use super::{Activation, DenseLayer, Error, Network, Tensor};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(act: Activation) -> Network {
        let layer = DenseLayer::new(
            Tensor::identity(2).unwrap(),
            Tensor::vector(vec![0.0, 0.0]).unwrap(),
            act,
        )
        .unwrap();
        Network::new(vec![layer]).unwrap()
    }

    #[test]
    fn identity_layer_passes_through() {
        let x = Tensor::vector(vec![3.0, -1.0]).unwrap();
        assert_eq!(
            single(Activation::Identity).forward(&x).unwrap().data(),
            &[3.0, -1.0]
        );
    }

    #[test]
    fn relu_layer_clips_negatives() {
        let x = Tensor::vector(vec![3.0, -1.0]).unwrap();
        assert_eq!(
            single(Activation::Relu).forward(&x).unwrap().data(),
            &[3.0, 0.0]
        );
    }

    /// Straight triple loop, independent of the row-axpy path in `affine`.
    #[allow(clippy::needless_range_loop)]
    fn oracle_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in net.layers() {
            let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
            let mut y = vec![0.0; n_out];
            for j in 0..n_out {
                let mut acc = layer.bias().data()[j];
                for k in 0..n_in {
                    acc += h[k] * layer.weights().data()[k * n_out + j];
                }
                y[j] = acc;
            }
            match layer.activation() {
                Activation::Identity => {}
                Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Softmax => {
                    let m = y.iter().cloned().fold(f64::MIN, f64::max);
                    let s: f64 = y.iter().map(|v| (v - m).exp()).sum();
                    y.iter_mut().for_each(|v| *v = (*v - m).exp() / s);
                }
            }
            h = y;
        }
        h
    }

    #[test]
    fn two_layer_net_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let net = Network::random(
                &[3, 4, 2],
                &[Activation::Relu, Activation::Identity],
                &mut rng,
            )
            .unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fast = net.forward_slice(&x).unwrap();
            let slow = oracle_forward(&net, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_names_dims() {
        let err = single(Activation::Identity)
            .forward(&Tensor::vector(vec![1.0; 3]).unwrap())
            .unwrap_err();
        assert!(
            matches!(
                err,
                Error::Shape {
                    expected: 2,
                    actual: 3,
                    ..
                }
            ),
            "{err}"
        );
        assert!(err.to_string().contains("expected 2, got 3"));
    }

    #[test]
    fn unchained_layers_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DenseLayer::random(2, 3, Activation::Relu, &mut rng).unwrap();
        let b = DenseLayer::random(4, 1, Activation::Relu, &mut rng).unwrap();
        assert!(Network::new(vec![a, b]).is_err());
    }

    #[test]
    fn softmax_survives_large_logits() {
        let mut v = vec![1000.0, 999.0, -1000.0];
        Activation::Softmax.apply(&mut v);
        assert!(v.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_normalises(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let mut v = logits.clone();
            Activation::Softmax.apply(&mut v);
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
        }

        #[test]
        fn relu_is_nonnegative(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let mut v = values.clone();
            Activation::Relu.apply(&mut v);
            prop_assert!(v.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn affine_part_is_affine(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = DenseLayer::random(5, 4, Activation::Identity, &mut rng).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let f_mix = layer.affine(&mix).unwrap();
            let (fx, fy, f0) = (
                layer.affine(&x).unwrap(),
                layer.affine(&y).unwrap(),
                layer.affine(&[0.0; 5]).unwrap(),
            );
            for j in 0..4 {
                let expected = a * fx[j] + b * fy[j] - (a + b - 1.0) * f0[j];
                prop_assert!((f_mix[j] - expected).abs() <= 1e-9);
            }
        }
    }
}
