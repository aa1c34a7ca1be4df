/// Per-key optimizer applied by the server on push.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub enum SparseOptimizer {
    /// `v <- v - lr * g`
    #[default]
    Sgd,
    /// Adam with per-key moment estimates and step count.
    Adam { beta1: f32, beta2: f32, eps: f32 },
}


impl SparseOptimizer {
    pub fn adam() -> Self {
        SparseOptimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub(crate) fn state_len(&self, dim: usize) -> usize {
        match self {
            SparseOptimizer::Sgd => 0,
            SparseOptimizer::Adam { .. } => 2 * dim,
        }
    }
}

/// A stored embedding plus whatever state its optimizer keeps.
#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub value: Vec<f32>,
    pub state: Vec<f32>,
    pub steps: u32,
}

impl Entry {
    pub fn new(value: Vec<f32>, opt: &SparseOptimizer) -> Self {
        let state = vec![0.0; opt.state_len(value.len())];
        Entry { value, state, steps: 0 }
    }

    pub fn apply(&mut self, opt: &SparseOptimizer, grad: &[f32], lr: f32) {
        match *opt {
            SparseOptimizer::Sgd => {
                for (v, g) in self.value.iter_mut().zip(grad) {
                    *v -= lr * g;
                }
            }
            SparseOptimizer::Adam { beta1, beta2, eps } => {
                let dim = self.value.len();
                if self.state.len() != 2 * dim {
                    self.state = vec![0.0; 2 * dim];
                }
                self.steps += 1;
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (m, s) = self.state.split_at_mut(dim);
                for i in 0..dim {
                    let g = grad[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    s[i] = beta2 * s[i] + (1.0 - beta2) * g * g;
                    let mhat = m[i] / c1;
                    let shat = s[i] / c2;
                    self.value[i] -= lr * mhat / (shat.sqrt() + eps);
                }
            }
        }
    }
}
