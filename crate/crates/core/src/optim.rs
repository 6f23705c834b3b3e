/// RMSProp hyperparameters. Defaults: learning rate 0.001, decay 0.9,
/// epsilon 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter squared-gradient accumulators, one slot per tensor.
#[derive(Debug, Clone)]
pub struct RmsProp {
    config: RmsPropConfig,
    accumulators: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, sizes: &[usize]) -> Self {
        RmsProp {
            config,
            accumulators: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn config(&self) -> RmsPropConfig {
        self.config
    }

    /// `acc ← ρ·acc + (1−ρ)·g²;  p ← p − lr·g / (√acc + ε)`
    pub fn step(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        let RmsPropConfig {
            learning_rate,
            rho,
            epsilon,
        } = self.config;
        let acc = &mut self.accumulators[slot];
        debug_assert_eq!(acc.len(), params.len());
        debug_assert_eq!(grads.len(), params.len());
        for ((p, a), &g) in params.iter_mut().zip(acc.iter_mut()).zip(grads) {
            *a = rho * *a + (1.0 - rho) * g * g;
            *p -= learning_rate * g / (a.sqrt() + epsilon);
        }
    }

    pub fn accumulators(&self, slot: usize) -> &[f64] {
        &self.accumulators[slot]
    }
}
