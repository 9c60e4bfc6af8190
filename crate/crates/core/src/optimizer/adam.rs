use crate::error::{Error, Result};

/// Adam hyper-parameters and stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Iteration budget per pyramid level.
    pub max_iters: usize,
    /// Stop once an accepted step changes the loss by less than this.
    pub tolerance: f64,
    /// Reject steps that increase the loss and halve the learning rate.
    pub line_guard: bool,
    /// With the guard on, stop once the learning rate falls below
    /// `lr * lr_floor`.
    pub lr_floor: f64,
    /// After an accepted step the learning rate grows by this factor, up to
    /// `lr`, so a few rejections early on do not stall a whole level.
    pub lr_growth: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iters: 500,
            tolerance: 1e-9,
            line_guard: true,
            lr_floor: 1e-3,
            lr_growth: 1.1,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.tolerance >= 0.0
            && self.lr_floor > 0.0
            && self.lr_floor <= 1.0
            && self.lr_growth >= 1.0
            && self.lr_growth.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration: {self:?}")))
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update at iteration `t` (1-based).
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut AdamMoments,
    config: &AdamConfig,
    t: usize,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Config("Adam iteration counter starts at 1".into()));
    }
    let n = params.len();
    if grads.len() != n || moments.m.len() != n || moments.v.len() != n {
        return Err(Error::Config("parameter, gradient and moment lengths differ".into()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Optimization(format!(
            "non-finite gradient component {i}: {}",
            grads[i]
        )));
    }
    let c1 = 1.0 - config.beta1.powi(t as i32);
    let c2 = 1.0 - config.beta2.powi(t as i32);
    for i in 0..n {
        let g = grads[i];
        moments.m[i] = config.beta1 * moments.m[i] + (1.0 - config.beta1) * g;
        moments.v[i] = config.beta2 * moments.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = moments.m[i] / c1;
        let v_hat = moments.v[i] / c2;
        params[i] -= config.lr * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}
