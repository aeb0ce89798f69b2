use serde::{Deserialize, Serialize};

use super::{Matrix, Rng};
use crate::error::{Error, Result};

/// A named trainable tensor with its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Param { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Fails with the name of the first parameter holding a NaN/Inf gradient.
pub fn ensure_finite_grads<'a>(params: impl IntoIterator<Item = &'a Param>) -> Result<()> {
    for p in params {
        if !p.grad.all_finite() {
            return Err(Error::NonFiniteGradient { param: p.name.clone() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Identity,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation and the activation output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if pre > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => out * (1.0 - out),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer computing `activation(input · W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
}

/// What [`DenseLayer::backward`] needs from the forward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Matrix,
    pub pre: Matrix,
    pub output: Matrix,
}

impl DenseLayer {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(name: &str, fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| (2.0 * rng.uniform() - 1.0) * limit).collect();
        DenseLayer {
            weight: Param::new(format!("{name}.weight"), Matrix::from_vec(fan_in, fan_out, w).unwrap()),
            bias: Param::new(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
            activation,
        }
    }

    pub fn from_parts(name: &str, weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::dim(format!(
                "{name}: bias length {} does not match {} outputs",
                bias.len(),
                weight.cols()
            )));
        }
        if let Activation::LeakyRelu { slope } = activation {
            if !(slope > 0.0) {
                return Err(Error::config(format!("{name}: LeakyReLU slope must be positive")));
            }
        }
        Ok(DenseLayer {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), Matrix::row_vector(&bias)),
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    fn pre_activation(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(Error::dim(format!(
                "{}: input has {} columns, layer expects {}",
                self.weight.name,
                input.cols(),
                self.in_dim()
            )));
        }
        let mut pre = input.matmul(&self.weight.value)?;
        pre.add_row_broadcast(self.bias.value.data())?;
        Ok(pre)
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let act = self.activation;
        Ok(self.pre_activation(input)?.map(|v| act.apply(v)))
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<(Matrix, DenseCache)> {
        let pre = self.pre_activation(input)?;
        let act = self.activation;
        let output = pre.map(|v| act.apply(v));
        let cache = DenseCache { input: input.clone(), pre, output: output.clone() };
        Ok((output, cache))
    }

    /// Accumulates `∂loss/∂W` and `∂loss/∂b` into the gradient slots and
    /// returns `∂loss/∂input`.
    pub fn backward(&mut self, cache: &DenseCache, grad_out: &Matrix) -> Result<Matrix> {
        grad_out.expect_shape(cache.output.shape(), "dense backward")?;
        let act = self.activation;
        let mut grad_pre = grad_out.clone();
        for ((g, &p), &o) in grad_pre.data_mut().iter_mut().zip(cache.pre.data()).zip(cache.output.data()) {
            *g *= act.derivative(p, o);
        }
        let gw = cache.input.t_matmul(&grad_pre)?;
        self.weight.grad.add_scaled(&gw, 1.0)?;
        self.bias.grad.add_scaled(&grad_pre.column_sums(), 1.0)?;
        grad_pre.matmul_t(&self.weight.value)
    }
}

/// A chain of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    pub layers: Vec<DenseCache>,
}

impl MlpCache {
    /// Sign of every LeakyReLU pre-activation (true = positive branch).
    pub fn leaky_signs(&self, layers: &[DenseLayer], out: &mut Vec<bool>) {
        for (cache, layer) in self.layers.iter().zip(layers) {
            if matches!(layer.activation, Activation::LeakyRelu { .. }) {
                out.extend(cache.pre.data().iter().map(|&v| v > 0.0));
            }
        }
    }
}

impl Mlp {
    /// Builds `dims.len() - 1` Glorot-initialized layers named `{name}.{i}`;
    /// every layer but the last uses `hidden`, the last uses `output`.
    pub fn glorot(name: &str, dims: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::glorot(&format!("{name}.{i}"), dims[i], dims[i + 1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let mut x = input.clone();
        for l in &self.layers {
            x = l.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, c) = l.forward_cached(&x)?;
            caches.push(c);
            x = y;
        }
        Ok((x, MlpCache { layers: caches }))
    }

    pub fn backward(&mut self, cache: &MlpCache, grad_out: &Matrix) -> Result<Matrix> {
        let mut g = grad_out.clone();
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            g = layer.backward(c, &g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }
}
