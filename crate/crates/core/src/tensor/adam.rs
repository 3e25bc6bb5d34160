use super::ParamStore;

/// Adam hyperparameters. Defaults match the usual `(0.9, 0.999, 1e-8)`
/// with a static learning rate of `1e-4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter in the store.
///
/// Gradients are read but left in place; the caller zeroes them.
pub fn adam_step(params: &mut ParamStore, cfg: &AdamConfig) {
    for p in params.iter_mut() {
        p.step += 1;
        let t = p.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        let grads = p.grad.data();
        let m = p.first_moment.data_mut();
        for (mi, &g) in m.iter_mut().zip(grads) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
        }
        let v = p.second_moment.data_mut();
        for (vi, &g) in v.iter_mut().zip(grads) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
        }
        let m = p.first_moment.data();
        let v = p.second_moment.data();
        for ((w, &mi), &vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}
