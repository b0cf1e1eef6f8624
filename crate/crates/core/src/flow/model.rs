use diffcore::{Graph, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::{bind_tensor, BoundMlp, Mlp, StoredTensor};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dim: usize,
    pub cond_dim: usize,
    pub blocks: usize,
    pub hidden: usize,
    /// Coupling log-scales are clamped to `[-clamp, clamp]`.
    pub log_scale_clamp: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dim: 218,
            cond_dim: 128,
            blocks: 4,
            hidden: 64,
            log_scale_clamp: 8.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.cond_dim == 0 || self.blocks == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("invalid flow configuration {self:?}")));
        }
        if !(self.log_scale_clamp > 0.0) {
            return Err(Error::Config("log_scale_clamp must be positive".into()));
        }
        Ok(())
    }

    /// Width of the untouched half of a coupling.
    pub fn split(&self) -> usize {
        self.dim / 2
    }
}

/// Actnorm, then a fixed permutation, an affine coupling on the permuted
/// coordinates, and the inverse permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBlock {
    /// Actnorm log-scale `[1, d]`; the scale `exp(log_scale)` is never zero.
    pub log_scale: Tensor,
    pub bias: Tensor,
    pub perm: Vec<usize>,
    /// `[x_a, v] -> [shift, raw log-scale]` for the transformed half.
    pub conditioner: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedFlow {
    pub config: FlowConfig,
    pub blocks: Vec<FlowBlock>,
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn is_permutation(perm: &[usize], d: usize) -> bool {
    let mut seen = vec![false; d];
    perm.len() == d && perm.iter().all(|&p| p < d && !std::mem::replace(&mut seen[p], true))
}

impl ConditionedFlow {
    /// Identity-initialized flow: unit actnorm, zero final conditioner
    /// layers, seeded permutations and hidden weights.
    pub fn new(config: FlowConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let d_a = config.split();
        let d_b = d - d_a;
        let mut prev: Vec<usize> = Vec::new();
        let blocks = (0..config.blocks)
            .map(|k| {
                // odd blocks transform what the previous block passed
                // through, so every dimension is conditioned on v
                let perm = if k % 2 == 0 {
                    let mut p: Vec<usize> = (0..d).collect();
                    p.shuffle(&mut rng);
                    p
                } else {
                    [&prev[d_a..], &prev[..d_a]].concat()
                };
                prev = perm.clone();
                FlowBlock {
                    log_scale: Tensor::zeros(&[1, d]),
                    bias: Tensor::zeros(&[1, d]),
                    perm,
                    conditioner: Mlp::new(
                        &[d_a + config.cond_dim, config.hidden, config.hidden, 2 * d_b],
                        true,
                        &mut rng,
                    ),
                }
            })
            .collect();
        Ok(ConditionedFlow { config, blocks })
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(&b.log_scale);
            out.push(&b.bias);
            out.extend(b.conditioner.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.log_scale);
            out.push(&mut b.bias);
            out.extend(b.conditioner.tensors_mut());
        }
        out
    }

    /// Record the parameters on `g`, as leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundFlow {
        BoundFlow {
            blocks: self
                .blocks
                .iter()
                .map(|b| BoundBlock {
                    log_scale: bind_tensor(g, &b.log_scale, trainable),
                    bias: bind_tensor(g, &b.bias, trainable),
                    perm: b.perm.clone(),
                    inv_perm: inverse_perm(&b.perm),
                    net: b.conditioner.bind(g, trainable),
                })
                .collect(),
            split: self.config.split(),
            clamp: self.config.log_scale_clamp,
        }
    }

    fn check_rows(&self, rows: &[Vec<f64>], v: &[f64]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::Dimension("no input rows".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != self.dim()) {
            return Err(Error::Dimension(format!(
                "flow input has {} entries, flow dimension is {}",
                r.len(),
                self.dim()
            )));
        }
        if v.len() != self.config.cond_dim {
            return Err(Error::Dimension(format!(
                "conditioning has {} entries, expected {}",
                v.len(),
                self.config.cond_dim
            )));
        }
        Ok(())
    }

    fn run(
        &self,
        rows: &[Vec<f64>],
        v: &[f64],
        inverse: bool,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        self.check_rows(rows, v)?;
        let mut g = Graph::new();
        let flow = self.bind(&mut g, false);
        let x = g.constant(Tensor::matrix(rows.len(), self.dim(), rows.concat()));
        let vv = g.constant(Tensor::matrix(1, v.len(), v.to_vec()));
        let (y, ld) = if inverse {
            flow.inverse(&mut g, x, vv)?
        } else {
            flow.forward(&mut g, x, vv)?
        };
        let out = g
            .value(y)
            .data()
            .chunks(self.dim())
            .map(|c| c.to_vec())
            .collect();
        Ok((out, g.value(ld).data().to_vec()))
    }

    /// `f_v(z)` and `log|det df_v/dz|` for each row of `z`.
    pub fn forward_rows(&self, z: &[Vec<f64>], v: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        self.run(z, v, false)
    }

    /// `f_v^{-1}(psi)` and the log-determinant of the inverse map.
    pub fn inverse_rows(
        &self,
        psi: &[Vec<f64>],
        v: &[f64],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        self.run(psi, v, true)
    }

    pub fn forward(&self, z: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (mut y, ld) = self.forward_rows(&[z.to_vec()], v)?;
        Ok((y.pop().expect("one row"), ld[0]))
    }

    pub fn inverse(&self, psi: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (mut z, ld) = self.inverse_rows(&[psi.to_vec()], v)?;
        Ok((z.pop().expect("one row"), ld[0]))
    }

    /// `log N(f_v^{-1}(psi); 0, I) + log|det d f_v^{-1} / d psi|` per row.
    pub fn log_prob_rows(&self, psi: &[Vec<f64>], v: &[f64]) -> Result<Vec<f64>> {
        let (z, ld) = self.inverse_rows(psi, v)?;
        Ok(z.iter()
            .zip(ld)
            .map(|(z, ld)| standard_normal_log_density(z) + ld)
            .collect())
    }

    pub fn log_prob(&self, psi: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.log_prob_rows(&[psi.to_vec()], v)?[0])
    }

    /// `n` draws `f_v(z_i)` with `z_i ~ N(0, I)`; returns `(poses, latents)`.
    pub fn sample<R: Rng>(
        &self,
        v: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if n == 0 {
            return Err(Error::UndefinedInput("sample count must be at least 1".into()));
        }
        let z = standard_normal_rows(n, self.dim(), rng);
        let (y, _) = self.forward_rows(&z, v)?;
        Ok((y, z))
    }

    /// `f_v(0)`.
    pub fn mode(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&vec![0.0; self.dim()], v)?.0)
    }

    pub fn to_stored(&self) -> StoredFlow {
        StoredFlow {
            config: self.config,
            blocks: self
                .blocks
                .iter()
                .map(|b| StoredBlock {
                    log_scale: (&b.log_scale).into(),
                    bias: (&b.bias).into(),
                    perm: b.perm.clone(),
                    conditioner: b.conditioner.store(),
                })
                .collect(),
        }
    }

    pub fn from_stored(stored: &StoredFlow) -> Result<Self> {
        let mut flow = ConditionedFlow::new(stored.config, 0)?;
        if stored.blocks.len() != flow.blocks.len() {
            return Err(Error::Data("stored flow block count mismatch".into()));
        }
        let d = flow.dim();
        for (b, s) in flow.blocks.iter_mut().zip(&stored.blocks) {
            if !is_permutation(&s.perm, d) {
                return Err(Error::Data("stored permutation is not a bijection".into()));
            }
            b.perm = s.perm.clone();
            b.log_scale = s.log_scale.to_tensor()?;
            b.bias = s.bias.to_tensor()?;
            if b.log_scale.shape() != [1, d] || b.bias.shape() != [1, d] {
                return Err(Error::Data("stored actnorm has the wrong shape".into()));
            }
            b.conditioner.restore(&s.conditioner)?;
        }
        Ok(flow)
    }
}

/// Serializable flow parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFlow {
    pub config: FlowConfig,
    pub blocks: Vec<StoredBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredBlock {
    pub log_scale: StoredTensor,
    pub bias: StoredTensor,
    pub perm: Vec<usize>,
    pub conditioner: Vec<StoredTensor>,
}

pub fn standard_normal_log_density(z: &[f64]) -> f64 {
    -0.5 * z.len() as f64 * LN_2PI - 0.5 * z.iter().map(|x| x * x).sum::<f64>()
}

pub fn standard_normal_rows<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

#[derive(Debug, Clone)]
struct BoundBlock {
    log_scale: Var,
    bias: Var,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    net: BoundMlp,
}

/// A flow recorded on a graph.
#[derive(Debug, Clone)]
pub struct BoundFlow {
    blocks: Vec<BoundBlock>,
    split: usize,
    clamp: f64,
}

impl BoundFlow {
    /// Parameter variables in the order of [`ConditionedFlow::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(b.log_scale);
            out.push(b.bias);
            out.extend(b.net.vars());
        }
        out
    }

    fn conditioning(g: &mut Graph, v: Var, n: usize) -> Var {
        if g.value(v).rows() == 1 && n > 1 {
            g.repeat_rows(v, n)
        } else {
            v
        }
    }

    /// Shift and clamped log-scale for the transformed half.
    fn coupling_terms(&self, g: &mut Graph, net: &BoundMlp, xa: Var, cond: Var) -> (Var, Var) {
        let inp = g.concat(&[xa, cond], 1);
        let out = net.apply(g, inp);
        let d_b = g.value(out).cols() / 2;
        let shift = g.slice(out, 1, 0, d_b);
        let raw = g.slice(out, 1, d_b, 2 * d_b);
        (shift, g.clamp(raw, -self.clamp, self.clamp))
    }

    fn check(g: &Graph, x: Var, ld: Var, block: usize) -> Result<()> {
        if g.value(x).is_finite() && g.value(ld).is_finite() {
            Ok(())
        } else {
            Err(Error::FlowNumeric { block })
        }
    }

    /// `z: [n, d]`, `v: [1, F]` or `[n, F]`. Returns `f_v(z)` and the
    /// per-row log-determinant `[n, 1]`.
    pub fn forward(&self, g: &mut Graph, z: Var, v: Var) -> Result<(Var, Var)> {
        let (n, d) = (g.value(z).rows(), g.value(z).cols());
        let cond = Self::conditioning(g, v, n);
        let mut x = z;
        let mut total: Option<Var> = None;
        for (k, b) in self.blocks.iter().enumerate() {
            let scale = g.exp(b.log_scale);
            let scale = g.repeat_rows(scale, n);
            let bias = g.repeat_rows(b.bias, n);
            let xs = g.mul(x, scale);
            let xn = g.add(xs, bias);
            let xp = g.select_cols(xn, &b.perm);
            let xa = g.slice(xp, 1, 0, self.split);
            let xb = g.slice(xp, 1, self.split, d);
            let (shift, s) = self.coupling_terms(g, &b.net, xa, cond);
            let es = g.exp(s);
            let yb = g.mul(xb, es);
            let yb = g.add(yb, shift);
            let yp = g.concat(&[xa, yb], 1);
            x = g.select_cols(yp, &b.inv_perm);
            let s_rows = g.row_sums(s);
            let ls = g.sum(b.log_scale);
            let ld = g.add(s_rows, ls);
            total = Some(match total {
                None => ld,
                Some(t) => g.add(t, ld),
            });
            Self::check(g, x, total.expect("set above"), k)?;
        }
        Ok((x, total.expect("at least one block")))
    }

    /// Exact inverse of [`forward`](Self::forward); the returned
    /// log-determinant is that of the inverse map (the negated forward one).
    pub fn inverse(&self, g: &mut Graph, y: Var, v: Var) -> Result<(Var, Var)> {
        let (n, d) = (g.value(y).rows(), g.value(y).cols());
        let cond = Self::conditioning(g, v, n);
        let mut x = y;
        let mut total: Option<Var> = None;
        for (k, b) in self.blocks.iter().enumerate().rev() {
            let yp = g.select_cols(x, &b.perm);
            let ya = g.slice(yp, 1, 0, self.split);
            let yb = g.slice(yp, 1, self.split, d);
            let (shift, s) = self.coupling_terms(g, &b.net, ya, cond);
            let diff = g.sub(yb, shift);
            let neg = g.neg(s);
            let ens = g.exp(neg);
            let xb = g.mul(diff, ens);
            let xp = g.concat(&[ya, xb], 1);
            let xn = g.select_cols(xp, &b.inv_perm);
            let bias = g.repeat_rows(b.bias, n);
            let centered = g.sub(xn, bias);
            let nls = g.neg(b.log_scale);
            let inv_scale = g.exp(nls);
            let inv_scale = g.repeat_rows(inv_scale, n);
            x = g.mul(centered, inv_scale);
            let s_rows = g.row_sums(s);
            let ls = g.sum(b.log_scale);
            let ld = g.add(s_rows, ls);
            let ld = g.neg(ld);
            total = Some(match total {
                None => ld,
                Some(t) => g.add(t, ld),
            });
            Self::check(g, x, total.expect("set above"), k)?;
        }
        Ok((x, total.expect("at least one block")))
    }
}

/// `log N(z; 0, I)` per row of `z: [n, d]`, as `[n, 1]`.
pub fn graph_standard_normal_log_density(g: &mut Graph, z: Var) -> Var {
    let d = g.value(z).cols() as f64;
    let sq = g.square(z);
    let rows = g.row_sums(sq);
    let half = g.scale(rows, -0.5);
    g.add_scalar(half, -0.5 * d * LN_2PI)
}
