use crate::exec::Exec;

use super::{logistic, FeatureVector};

const PROB_FLOOR: f64 = 1e-12;

/// Weighted logistic log-loss over sparse features with an optional dense
/// column (the log bid for the win-rate model).
///
/// Parameter layout: `[w0, β, w1..wk]` with a dense column, `[w0, w1..wk]`
/// without. Targets may be soft labels in `[0, 1]`. The L2 penalty applies
/// to the sparse feature weights only.
#[derive(Clone, Debug)]
pub struct LogisticObjective {
    rows: Vec<FeatureVector>,
    dense: Option<Vec<f64>>,
    targets: Vec<f64>,
    weights: Vec<f64>,
    total_weight: f64,
    dim: usize,
    l2: f64,
}

impl LogisticObjective {
    /// Panics if the slices disagree in length; callers validate inputs.
    pub fn new(
        rows: Vec<FeatureVector>,
        dense: Option<Vec<f64>>,
        targets: Vec<f64>,
        weights: Vec<f64>,
        dim: usize,
        l2: f64,
    ) -> Self {
        assert_eq!(rows.len(), targets.len());
        assert_eq!(rows.len(), weights.len());
        if let Some(d) = &dense {
            assert_eq!(d.len(), rows.len());
        }
        let total_weight = weights.iter().sum();
        LogisticObjective {
            rows,
            dense,
            targets,
            weights,
            total_weight,
            dim,
            l2,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn offset(&self) -> usize {
        if self.dense.is_some() {
            2
        } else {
            1
        }
    }

    pub fn n_params(&self) -> usize {
        self.offset() + self.dim
    }

    fn margin(&self, theta: &[f64], i: usize) -> f64 {
        let off = self.offset();
        let mut z = theta[0] + self.rows[i].dot(&theta[off..]);
        if let Some(d) = &self.dense {
            z += theta[1] * d[i];
        }
        z
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        0.5 * self.l2 * theta[self.offset()..].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn loss(&self, theta: &[f64], exec: Exec) -> f64 {
        let data = exec.sum(self.len(), |i| {
            let p = logistic(self.margin(theta, i)).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            let t = self.targets[i];
            -self.weights[i] * (t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        });
        data / self.total_weight + self.penalty(theta)
    }

    pub fn gradient(&self, theta: &[f64], exec: Exec) -> Vec<f64> {
        let off = self.offset();
        let mut g = exec.sum_vec(self.len(), self.n_params(), |range, acc| {
            for i in range {
                let r = self.weights[i] * (logistic(self.margin(theta, i)) - self.targets[i]);
                acc[0] += r;
                if let Some(d) = &self.dense {
                    acc[1] += r * d[i];
                }
                for &(j, x) in self.rows[i].entries() {
                    acc[off + j as usize] += r * x;
                }
            }
        });
        for v in g.iter_mut() {
            *v /= self.total_weight;
        }
        for j in off..g.len() {
            g[j] += self.l2 * theta[j];
        }
        g
    }

    /// Fixed-step full-batch gradient descent from `theta`. Stops early when
    /// the largest gradient component drops below `tolerance`. Returns the
    /// number of steps taken.
    pub fn descend(
        &self,
        theta: &mut [f64],
        learning_rate: f64,
        max_steps: usize,
        tolerance: f64,
        exec: Exec,
    ) -> usize {
        for step in 0..max_steps {
            let g = self.gradient(theta, exec);
            if g.iter().all(|v| v.abs() < tolerance) {
                return step;
            }
            for (t, gj) in theta.iter_mut().zip(&g) {
                *t -= learning_rate * gj;
            }
        }
        max_steps
    }
}
