use super::{Result, Scalar, Tensor4, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn update(
        &mut self,
        cfg: &AdamConfig,
        name: &str,
        param: &mut Tensor4<T>,
        grad: &Tensor4<T>,
        lr: f64,
    ) -> Result<()> {
        check(name, param, grad, self)?;
        self.apply(cfg, param, grad, lr);
        Ok(())
    }

    fn apply(&mut self, cfg: &AdamConfig, param: &mut Tensor4<T>, grad: &Tensor4<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(cfg.beta1);
        let b2 = T::lit(cfg.beta2);
        let one = T::one();
        let c1 = T::lit(1.0 / (1.0 - cfg.beta1.powi(t)));
        let c2 = T::lit(1.0 / (1.0 - cfg.beta2.powi(t)));
        let lr = T::lit(lr);
        let eps = T::lit(cfg.eps);
        for (((p, &g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mhat = *m * c1;
            let vhat = *v * c2;
            *p = *p - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

fn check<T: Scalar>(name: &str, param: &Tensor4<T>, grad: &Tensor4<T>, st: &AdamState<T>) -> Result<()> {
    if grad.shape() != param.shape() || st.m.len() != param.len() || st.v.len() != param.len() {
        return Err(TensorError::ShapeMismatch {
            op: "adam_step",
            left: param.shape(),
            right: grad.shape(),
        });
    }
    if !grad.is_finite() {
        return Err(TensorError::NonFiniteGradient(name.to_string()));
    }
    Ok(())
}

/// Adam over an ordered list of named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub states: Vec<AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<'p>(config: AdamConfig, params: impl IntoIterator<Item = &'p Tensor4<T>>) -> Self {
        Self {
            config,
            states: params.into_iter().map(|p| AdamState::new(p.len())).collect(),
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step)
    }

    /// Validates every gradient before touching any parameter, so a rejected
    /// step leaves the model unchanged.
    pub fn step<'p>(
        &mut self,
        params: impl IntoIterator<Item = (&'p str, &'p mut Tensor4<T>)>,
        grads: &[Tensor4<T>],
        lr: f64,
    ) -> Result<()> {
        let mut params: Vec<(&str, &mut Tensor4<T>)> = params.into_iter().collect();
        if params.len() != grads.len() || params.len() != self.states.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: [params.len(), 0, 0, 0],
                right: [grads.len(), 0, 0, 0],
            });
        }
        for ((name, p), (g, st)) in params.iter().zip(grads.iter().zip(&self.states)) {
            check(name, p, g, st)?;
        }
        for ((_, p), (g, st)) in params.iter_mut().zip(grads.iter().zip(self.states.iter_mut())) {
            st.apply(&self.config, p, g, lr);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor4<f64> {
        Tensor4::full([1, 1, 1, 1], v)
    }

    #[test]
    fn zero_gradient_leaves_param_and_counts_step() {
        let mut p = scalar(0.7);
        let mut st = AdamState::new(1);
        st.update(&AdamConfig::default(), "w", &mut p, &scalar(0.0), 1e-3).unwrap();
        assert_eq!(p.data(), &[0.7]);
        assert_eq!(st.step, 1);
        st.update(&AdamConfig::default(), "w", &mut p, &scalar(0.0), 1e-3).unwrap();
        assert_eq!(st.step, 2);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // closed form: m̂ = g, v̂ = g², Δ = lr * g / (|g| + eps)
        let mut p = scalar(0.0);
        let mut st = AdamState::new(1);
        st.update(&AdamConfig::default(), "w", &mut p, &scalar(1.0), 1e-3).unwrap();
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((p.data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(1);
        let mut prev = 1.0;
        for _ in 0..500 {
            st.update(&AdamConfig::default(), "w", &mut p, &scalar(0.3), 1e-2).unwrap();
            assert!(p.data()[0] < prev);
            prev = p.data()[0];
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = scalar(1.0);
        let mut b = scalar(2.0);
        let mut adam = Adam::new(AdamConfig::default(), [&a, &b]);
        let err = adam
            .step(
                [("enc1.w", &mut a), ("enc2.w", &mut b)],
                &[scalar(1.0), scalar(f64::NAN)],
                1e-3,
            )
            .unwrap_err();
        assert_eq!(err, TensorError::NonFiniteGradient("enc2.w".into()));
        assert_eq!(a.data(), &[1.0]);
        assert_eq!(adam.step_count(), 0);
    }
}
