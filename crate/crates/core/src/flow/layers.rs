use diffcore::{Graph, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable copy of a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl From<&Tensor> for StoredTensor {
    fn from(t: &Tensor) -> Self {
        StoredTensor {
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }
}

impl StoredTensor {
    pub fn to_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::new(self.shape.clone(), self.data.clone())?)
    }
}

/// Bind a tensor as a leaf (trainable) or a constant.
pub(crate) fn bind_tensor(g: &mut Graph, t: &Tensor, trainable: bool) -> Var {
    if trainable {
        g.leaf(t.clone())
    } else {
        g.constant(t.clone())
    }
}

/// Fully connected layer `x W + b` with `W: [in, out]`, `b: [1, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Gaussian weights with std `1/sqrt(in)`; zero bias.
    pub fn random<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let std = 1.0 / (input as f64).sqrt();
        let data = (0..input * output)
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                std * e
            })
            .collect();
        Dense {
            weight: Tensor::matrix(input, output, data),
            bias: Tensor::zeros(&[1, output]),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[1, output]),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.rows()
    }

    pub fn output(&self) -> usize {
        self.weight.cols()
    }
}

/// Multilayer perceptron with `tanh` between layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// An [`Mlp`] recorded on a graph.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub params: Vec<(Var, Var)>,
}

impl Mlp {
    /// Hidden layers random, final layer zero when `zero_last`.
    pub fn new<R: Rng>(sizes: &[usize], zero_last: bool, rng: &mut R) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                if zero_last && i + 1 == n {
                    Dense::zeros(sizes[i], sizes[i + 1])
                } else {
                    Dense::random(sizes[i], sizes[i + 1], rng)
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
        BoundMlp {
            params: self
                .layers
                .iter()
                .map(|l| (bind_tensor(g, &l.weight, trainable), bind_tensor(g, &l.bias, trainable)))
                .collect(),
        }
    }

    pub fn store(&self) -> Vec<StoredTensor> {
        self.tensors().into_iter().map(StoredTensor::from).collect()
    }

    /// Rebuild from stored tensors laid out like `self`.
    pub fn restore(&mut self, stored: &[StoredTensor]) -> Result<()> {
        let slots = self.tensors_mut();
        if slots.len() != stored.len() {
            return Err(Error::Data(format!(
                "expected {} tensors, found {}",
                slots.len(),
                stored.len()
            )));
        }
        for (slot, s) in slots.into_iter().zip(stored) {
            let t = s.to_tensor()?;
            if t.shape() != slot.shape() {
                return Err(Error::Data(format!(
                    "tensor shape {:?} does not match {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(())
    }
}

impl BoundMlp {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.value(x).rows();
        let mut h = x;
        for (i, &(w, b)) in self.params.iter().enumerate() {
            let xw = g.matmul(h, w);
            let bb = if n == 1 { b } else { g.repeat_rows(b, n) };
            h = g.add(xw, bb);
            if i + 1 < self.params.len() {
                h = g.tanh(h);
            }
        }
        h
    }

    pub fn vars(&self) -> Vec<Var> {
        self.params.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}
