use crate::{DiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), DiffError> {
    if !(cfg.lr > 0.0) {
        return Err(DiffError::contract("adam_step", format!("lr must be positive, got {}", cfg.lr)));
    }
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(DiffError::contract(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(DiffError::contract(
                "adam_step",
                format!("slot {i}: param {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((pj, &gj), mj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = *mj / bc1;
            let v_hat = *vj / bc2;
            *pj -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0])];
        let mut state = AdamState::new(&params);
        state.m[0] = Tensor::vector(vec![0.5, 0.5]);
        state.v[0] = Tensor::vector(vec![0.25, 0.25]);
        state.step = 10;
        let before_m = state.m[0].clone();
        let cfg = AdamConfig::default();
        let grads = vec![Tensor::zeros(&[2])];
        let p0 = params[0].clone();
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        assert_eq!(state.m[0].data()[0], before_m.data()[0] * 0.9);
        assert_eq!(state.v[0].data()[0], 0.25 * 0.999);
        // the decayed moments still move params; the raw update is zero only
        // from a fresh state
        let mut fresh = vec![p0.clone()];
        let mut fresh_state = AdamState::new(&fresh);
        adam_step(&mut fresh, &grads, &mut fresh_state, &cfg).unwrap();
        assert_eq!(fresh[0], p0);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let cfg = AdamConfig::default();
        let g = 0.37;
        let mut params = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Tensor::scalar(g)], &mut state, &cfg).unwrap();
        let expected = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
        assert!((params[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::scalar(0.0)];
        let mut state = AdamState::new(&params);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = params[0].item();
            adam_step(&mut params, &[Tensor::scalar(-2.5)], &mut state, &cfg).unwrap();
            last = params[0].item() - before;
        }
        assert!((last - cfg.lr).abs() < 1e-9, "step {last}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut params = vec![Tensor::zeros(&[2])];
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &[Tensor::zeros(&[3])], &mut state, &AdamConfig::default());
        assert!(err.is_err());
        let bad = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        assert!(adam_step(&mut params, &[Tensor::zeros(&[2])], &mut state, &bad).is_err());
    }
}
