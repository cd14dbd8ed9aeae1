//! Feed-forward multilayer perceptron trained by pattern-sequential
//! backpropagation.
//!
//! Corrections follow the "ascent on -E" convention: [`MlpNetwork::backward`]
//! returns `Δw = α δ z` terms that [`MlpNetwork::update`] adds to the weights,
//! where for an output unit `δ_k = (d_k - y_k) θ'(y_in_k)` and for a hidden
//! unit `δ_j = (Σ_k δ_k w_jk) θ'(z_in_j)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seeds;

/// Epoch MSE above which training is abandoned.
pub const DIVERGENCE_MSE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// `θ'` expressed through the activation value `z = θ(x)`.
    pub fn derivative_from_output(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => z * (1.0 - z),
            Activation::Linear => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One fully connected layer; `weights` is `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn n_inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.rows()
    }
}

/// Activations retained by [`MlpNetwork::forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// Pre-activations per layer.
    pub pre: Vec<Vec<f64>>,
    /// Activations per layer; the last entry is the network output.
    pub post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map_or(&[], Vec::as_slice)
    }

    fn layer_input(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

/// Weight corrections for one pattern, plus the error terms that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub deltas: Vec<Vec<f64>>,
}

impl Gradients {
    /// Layer by layer, weights row-major then biases; same order as
    /// [`MlpNetwork::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.dw.as_slice().iter().chain(&g.db).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
}

impl MlpNetwork {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.n_outputs() {
                return Err(Error::Dimension(format!(
                    "layer {l}: {} biases for {} units",
                    layer.bias.len(),
                    layer.n_outputs()
                )));
            }
            if layer.n_inputs() == 0 || layer.n_outputs() == 0 {
                return Err(Error::Dimension(format!("layer {l} is empty")));
            }
            if l > 0 && layers[l - 1].n_outputs() != layer.n_inputs() {
                return Err(Error::Dimension(format!(
                    "layer {l} takes {} inputs but layer {} emits {}",
                    layer.n_inputs(),
                    l - 1,
                    layers[l - 1].n_outputs()
                )));
            }
            if layer
                .weights
                .as_slice()
                .iter()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidInput(format!("layer {l} has non-finite weights")));
            }
        }
        Ok(Self { layers })
    }

    /// All weights and biases zero.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        check_sizes(sizes)?;
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| Layer {
                weights: Matrix::zeros(sizes[l + 1], sizes[l]),
                bias: vec![0.0; sizes[l + 1]],
                activation: if l + 1 == n { output } else { hidden },
            })
            .collect();
        Self::from_layers(layers)
    }

    /// Uniform draws in `±scale`, defaulting to `1/√fan_in` per layer.
    pub fn init(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
        scale: Option<f64>,
    ) -> Result<Self> {
        if let Some(s) = scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidInput(format!("init scale must be positive, got {s}")));
            }
        }
        let mut net = Self::zeros(sizes, hidden, output)?;
        let mut rng = seeds::rng(seed);
        for layer in &mut net.layers {
            let s = scale.unwrap_or(1.0 / (layer.n_inputs() as f64).sqrt());
            for w in layer.weights.as_mut_slice().iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-s..s);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_outputs()
    }

    /// Layer widths from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::n_outputs))
            .collect()
    }

    pub fn n_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_parameters() {
            return Err(Error::Dimension(format!(
                "{} parameters for a network with {}",
                values.len(),
                self.n_parameters()
            )));
        }
        let mut it = values.iter();
        for layer in &mut self.layers {
            for w in layer.weights.as_mut_slice().iter_mut().chain(layer.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// `½ Σ w²` over weights, biases excluded.
    pub fn half_weight_norm_sq(&self) -> f64 {
        0.5 * self
            .layers
            .iter()
            .flat_map(|l| l.weights.as_slice())
            .map(|w| w * w)
            .sum::<f64>()
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input of length {} for a network expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = post.last().map_or(x, Vec::as_slice);
            let z_in: Vec<f64> = (0..layer.n_outputs())
                .map(|j| {
                    layer.bias[j]
                        + layer
                            .weights
                            .row(j)
                            .iter()
                            .zip(input)
                            .map(|(w, v)| w * v)
                            .sum::<f64>()
                })
                .collect();
            let z = z_in.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z_in);
            post.push(z);
        }
        Ok(ForwardCache {
            input: x.to_vec(),
            pre,
            post,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.post.pop().unwrap_or_default())
    }

    /// Error terms and weight corrections for one pattern.
    pub fn backward(&self, cache: &ForwardCache, target: &[f64], alpha: f64) -> Result<Gradients> {
        self.check_cache(cache)?;
        if target.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "target of length {} for {} outputs",
                target.len(),
                self.output_dim()
            )));
        }
        let deltas = self.deltas(cache, target);
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let input = cache.layer_input(l);
                let mut dw = Matrix::zeros(layer.n_outputs(), layer.n_inputs());
                let mut db = vec![0.0; layer.n_outputs()];
                for (j, d) in deltas[l].iter().enumerate() {
                    let ad = alpha * d;
                    for (g, v) in dw.row_mut(j).iter_mut().zip(input) {
                        *g = ad * v;
                    }
                    db[j] = ad;
                }
                LayerGradient { dw, db }
            })
            .collect();
        Ok(Gradients { layers, deltas })
    }

    /// Adds corrections to weights and biases.
    pub fn update(&mut self, g: &Gradients) -> Result<()> {
        if g.layers.len() != self.layers.len()
            || g.layers.iter().zip(&self.layers).any(|(g, l)| {
                g.dw.rows() != l.weights.rows() || g.dw.cols() != l.weights.cols() || g.db.len() != l.bias.len()
            })
        {
            return Err(Error::Dimension("gradient shapes do not match the network".into()));
        }
        for (layer, g) in self.layers.iter_mut().zip(&g.layers) {
            for (w, d) in layer.weights.as_mut_slice().iter_mut().zip(g.dw.as_slice()) {
                *w += d;
            }
            for (b, d) in layer.bias.iter_mut().zip(&g.db) {
                *b += d;
            }
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let stale = cache.input.len() != self.input_dim()
            || cache.pre.len() != self.layers.len()
            || cache.post.len() != self.layers.len()
            || self
                .layers
                .iter()
                .zip(cache.pre.iter().zip(&cache.post))
                .any(|(l, (a, b))| a.len() != l.n_outputs() || b.len() != l.n_outputs());
        if stale {
            return Err(Error::Dimension("forward cache does not match the network".into()));
        }
        Ok(())
    }

    fn deltas(&self, cache: &ForwardCache, target: &[f64]) -> Vec<Vec<f64>> {
        let n = self.layers.len();
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n];
        let out = &cache.post[n - 1];
        let act = self.layers[n - 1].activation;
        deltas[n - 1] = out
            .iter()
            .zip(target)
            .map(|(y, d)| (d - y) * act.derivative_from_output(*y))
            .collect();
        for l in (0..n - 1).rev() {
            let next = &self.layers[l + 1];
            let act = self.layers[l].activation;
            let mut delta_in = vec![0.0; self.layers[l].n_outputs()];
            for (k, dk) in deltas[l + 1].iter().enumerate() {
                for (acc, w) in delta_in.iter_mut().zip(next.weights.row(k)) {
                    *acc += dk * w;
                }
            }
            deltas[l] = delta_in
                .iter()
                .zip(&cache.post[l])
                .map(|(s, z)| s * act.derivative_from_output(*z))
                .collect();
        }
        deltas
    }

    /// One pattern-sequential step, in place. Identical arithmetic to
    /// `backward` followed by `update`, with optional weight decay.
    fn step(&mut self, x: &[f64], target: &[f64], alpha: f64, l2_lambda: f64) -> Result<()> {
        let cache = self.forward(x)?;
        let deltas = self.deltas(&cache, target);
        let decay = alpha * l2_lambda;
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let input = cache.layer_input(l);
            for (j, d) in deltas[l].iter().enumerate() {
                let ad = alpha * d;
                let row = layer.weights.row_mut(j);
                if l2_lambda == 0.0 {
                    for (w, v) in row.iter_mut().zip(input) {
                        *w += ad * v;
                    }
                } else {
                    for (w, v) in row.iter_mut().zip(input) {
                        *w += ad * v - decay * *w;
                    }
                }
                layer.bias[j] += ad;
            }
        }
        Ok(())
    }

    /// Mean squared error per output element over a data set.
    pub fn mse(&self, data: &TrainingSet) -> Result<f64> {
        let mut sum = 0.0;
        for (x, d) in data.patterns() {
            let y = self.predict(x)?;
            sum += y.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(sum / (data.len() * data.target_dim()) as f64)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidInput(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

/// `E = ½ Σ_i ‖y_i - d_i‖²`.
pub fn cost(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if outputs.len() != targets.len() || outputs.iter().zip(targets).any(|(y, d)| y.len() != d.len()) {
        return Err(Error::Dimension("outputs and targets differ in shape".into()));
    }
    Ok(0.5
        * outputs
            .iter()
            .zip(targets)
            .map(|(y, d)| y.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let (ni, nt) = (inputs[0].len(), targets[0].len());
        if ni == 0 || nt == 0 {
            return Err(Error::Dimension("patterns must be non-empty".into()));
        }
        if inputs.iter().any(|x| x.len() != ni) || targets.iter().any(|d| d.len() != nt) {
            return Err(Error::Dimension("patterns differ in length".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn target_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn patterns(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .map(|(x, d)| (x.as_slice(), d.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub alpha: f64,
    pub max_epochs: usize,
    pub target_mse: f64,
    pub l2_lambda: f64,
    pub shuffle_seed: u64,
    pub init_seed: u64,
    /// Uniform init half-width; `None` means `1/√fan_in`.
    pub init_scale: Option<f64>,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            max_epochs: 300,
            target_mse: 0.0,
            l2_lambda: 0.0,
            shuffle_seed: 0,
            init_seed: 0,
            init_scale: None,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidInput("max_epochs must be at least 1".into()));
        }
        if !(self.l2_lambda >= 0.0) || !self.l2_lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "l2_lambda must be non-negative, got {}",
                self.l2_lambda
            )));
        }
        if self.target_mse.is_nan() {
            return Err(Error::InvalidInput("target_mse is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub mse: f64,
    /// `E/p + λ ½ Σ w²`.
    pub objective: f64,
}

/// Plain backpropagation; ignores `params.l2_lambda`.
pub fn train(
    net: MlpNetwork,
    data: &TrainingSet,
    params: &TrainParams,
) -> Result<(MlpNetwork, Vec<f64>)> {
    let (net, history) = run(net, data, params, 0.0)?;
    Ok((net, history.into_iter().map(|r| r.mse).collect()))
}

/// Backpropagation with `-α λ w` weight decay after every pattern.
pub fn train_regularized(
    net: MlpNetwork,
    data: &TrainingSet,
    params: &TrainParams,
) -> Result<(MlpNetwork, Vec<EpochRecord>)> {
    run(net, data, params, params.l2_lambda)
}

fn run(
    mut net: MlpNetwork,
    data: &TrainingSet,
    params: &TrainParams,
    l2_lambda: f64,
) -> Result<(MlpNetwork, Vec<EpochRecord>)> {
    params.validate()?;
    if data.input_dim() != net.input_dim() || data.target_dim() != net.output_dim() {
        return Err(Error::Dimension(format!(
            "{}-in/{}-out data for a {:?} network",
            data.input_dim(),
            data.target_dim(),
            net.sizes()
        )));
    }
    let mut rng = seeds::rng(params.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(params.max_epochs);
    for epoch in 1..=params.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            net.step(&data.inputs[i], &data.targets[i], params.alpha, l2_lambda)?;
        }
        let mse = net.mse(data)?;
        if !mse.is_finite() || mse > DIVERGENCE_MSE {
            return Err(Error::Diverged { epoch, mse });
        }
        let per_pattern = 0.5 * mse * data.target_dim() as f64;
        let objective = per_pattern + l2_lambda * net.half_weight_norm_sq();
        history.push(EpochRecord { mse, objective });
        if mse <= params.target_mse {
            break;
        }
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> TrainingSet {
        TrainingSet::new(
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![vec![0.0], vec![1.0], vec![1.0], vec![0.0]],
        )
        .unwrap()
    }

    fn unit_chain() -> MlpNetwork {
        let layer = |a| Layer {
            weights: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            bias: vec![0.0],
            activation: a,
        };
        MlpNetwork::from_layers(vec![layer(Activation::Sigmoid), layer(Activation::Sigmoid)]).unwrap()
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = MlpNetwork::zeros(&[3, 5, 2], Activation::Sigmoid, Activation::Sigmoid).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn unit_chain_hand_value() {
        let y = unit_chain().predict(&[0.0]).unwrap()[0];
        assert!((y - 0.622459).abs() < 1e-6);
    }

    #[test]
    fn unit_chain_symbolic_gradients() {
        let net = unit_chain();
        let cache = net.forward(&[0.0]).unwrap();
        let g = net.backward(&cache, &[1.0], 1.0).unwrap();
        let z: f64 = 0.5;
        let y = 1.0 / (1.0 + (-z).exp());
        let dk = (1.0 - y) * y * (1.0 - y);
        let dj = dk * 1.0 * z * (1.0 - z);
        assert!((g.layers[1].dw[(0, 0)] - dk * z).abs() < 1e-9);
        assert!((g.layers[1].db[0] - dk).abs() < 1e-9);
        assert!((g.layers[0].dw[(0, 0)] - dj * 0.0).abs() < 1e-9);
        assert!((g.layers[0].db[0] - dj).abs() < 1e-9);
    }

    #[test]
    fn linear_identity_layer_passes_hidden_through() {
        let hidden = Layer {
            weights: Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap(),
            bias: vec![0.1, -0.2],
            activation: Activation::Sigmoid,
        };
        let out = Layer {
            weights: Matrix::identity(2),
            bias: vec![0.0, 0.0],
            activation: Activation::Linear,
        };
        let net = MlpNetwork::from_layers(vec![hidden, out]).unwrap();
        let cache = net.forward(&[0.3, 0.7]).unwrap();
        assert_eq!(cache.output(), cache.post[0].as_slice());
    }

    #[test]
    fn exact_target_gives_zero_gradients() {
        let net = MlpNetwork::init(&[3, 4, 2], Activation::Sigmoid, Activation::Sigmoid, 3, None).unwrap();
        let cache = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let y = cache.output().to_vec();
        let g = net.backward(&cache, &y, 0.5).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let a = MlpNetwork::zeros(&[2, 3, 1], Activation::Sigmoid, Activation::Sigmoid).unwrap();
        let b = MlpNetwork::zeros(&[2, 4, 1], Activation::Sigmoid, Activation::Sigmoid).unwrap();
        let cache = a.forward(&[0.0, 0.0]).unwrap();
        assert!(b.backward(&cache, &[0.0], 0.1).is_err());
    }

    #[test]
    fn cost_values() {
        assert_eq!(cost(&[vec![1.0, 0.0]], &[vec![0.0, 0.0]]).unwrap(), 0.5);
        assert_eq!(cost(&[vec![0.3]], &[vec![0.3]]).unwrap(), 0.0);
        assert!(cost(&[vec![0.3]], &[vec![0.3, 0.1]]).is_err());
    }

    #[test]
    fn sigmoid_derivative_identity() {
        for &x in &[-6.0, -1.3, 0.0, 0.4, 2.2, 7.5] {
            let h = 1e-5;
            let numeric = (sigmoid(x + h) - sigmoid(x - h)) / (2.0 * h);
            let s = sigmoid(x);
            assert!((Activation::Sigmoid.derivative_from_output(s) - numeric).abs() < 1e-8);
        }
    }

    #[test]
    fn small_step_descends() {
        let net0 = MlpNetwork::init(&[4, 6, 3], Activation::Sigmoid, Activation::Sigmoid, 11, None).unwrap();
        let x = [0.2, -0.4, 0.9, 0.1];
        let d = [1.0, 0.0, 0.5];
        let c0 = net0.forward(&x).unwrap();
        let e0 = cost(&[c0.output().to_vec()], &[d.to_vec()]).unwrap();
        let mut net = net0.clone();
        net.update(&net0.backward(&c0, &d, 1e-4).unwrap()).unwrap();
        let e1 = cost(&[net.predict(&x).unwrap()], &[d.to_vec()]).unwrap();
        assert!(e1 < e0);
    }

    #[test]
    fn zero_alpha_update_is_identity() {
        let net0 = MlpNetwork::init(&[2, 3, 1], Activation::Sigmoid, Activation::Linear, 5, None).unwrap();
        let cache = net0.forward(&[1.0, 2.0]).unwrap();
        let mut net = net0.clone();
        net.update(&net0.backward(&cache, &[4.0], 0.0).unwrap()).unwrap();
        assert_eq!(net, net0);
    }

    #[test]
    fn epoch_limits() {
        let data = xor();
        let net = MlpNetwork::init(&[2, 4, 1], Activation::Sigmoid, Activation::Sigmoid, 1, None).unwrap();
        let mut p = TrainParams { alpha: 0.5, max_epochs: 0, ..TrainParams::default() };
        assert!(train(net.clone(), &data, &p).is_err());
        p.max_epochs = 1;
        assert_eq!(train(net.clone(), &data, &p).unwrap().1.len(), 1);
        p.max_epochs = 17;
        p.target_mse = -1.0;
        assert_eq!(train(net, &data, &p).unwrap().1.len(), 17);
    }

    #[test]
    fn divergence_guard() {
        let data = TrainingSet::new(vec![vec![1e3]], vec![vec![1e4]]).unwrap();
        let net = MlpNetwork::init(&[1, 1], Activation::Linear, Activation::Linear, 0, None).unwrap();
        let p = TrainParams { alpha: 10.0, max_epochs: 50, ..TrainParams::default() };
        assert!(matches!(train(net, &data, &p), Err(Error::Diverged { .. })));
    }

    #[test]
    fn zero_lambda_matches_plain_training() {
        let data = xor();
        let net = MlpNetwork::init(&[2, 4, 1], Activation::Sigmoid, Activation::Sigmoid, 9, None).unwrap();
        let p = TrainParams { alpha: 0.5, max_epochs: 200, shuffle_seed: 4, ..TrainParams::default() };
        let (a, ha) = train(net.clone(), &data, &p).unwrap();
        let (b, hb) = train_regularized(net, &data, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb.iter().map(|r| r.mse).collect::<Vec<_>>());
    }

    #[test]
    fn huge_lambda_collapses_outputs() {
        let data = xor();
        let net = MlpNetwork::init(&[2, 4, 1], Activation::Sigmoid, Activation::Sigmoid, 2, None).unwrap();
        let p = TrainParams {
            alpha: 1e-3,
            max_epochs: 5000,
            l2_lambda: 1e3,
            shuffle_seed: 2,
            ..TrainParams::default()
        };
        let (trained, _) = train_regularized(net, &data, &p).unwrap();
        assert!(trained.half_weight_norm_sq() < 1e-6);
        for (x, _) in data.patterns() {
            assert!((trained.predict(x).unwrap()[0] - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = xor();
        let p = TrainParams { alpha: 0.5, max_epochs: 100, shuffle_seed: 8, ..TrainParams::default() };
        let mk = || MlpNetwork::init(&[2, 4, 1], Activation::Sigmoid, Activation::Sigmoid, 8, None).unwrap();
        let (a, _) = train(mk(), &data, &p).unwrap();
        let (b, _) = train(mk(), &data, &p).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn parameter_round_trip() {
        let mut net = MlpNetwork::init(&[3, 2, 2], Activation::Sigmoid, Activation::Linear, 4, None).unwrap();
        let p = net.parameters();
        assert_eq!(p.len(), net.n_parameters());
        let doubled: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        net.set_parameters(&doubled).unwrap();
        assert_eq!(net.parameters(), doubled);
    }
}
