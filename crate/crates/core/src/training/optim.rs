use serde::{Deserialize, Serialize};

use crate::gnn::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Plain gradient descent or Adam with the usual moment defaults.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &[Mat]) -> Self {
        let zeros = || params.iter().map(|p| Mat::zeros(p.raw_dim())).collect();
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (zeros(), zeros()),
        };
        Self { kind, lr, step: 0, m, v }
    }

    pub fn step(&mut self, params: &mut [Mat], grads: &[Mat]) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.scaled_add(-self.lr, g);
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
                    });
                }
            }
        }
    }
}
