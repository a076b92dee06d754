use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Gradients;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameter update rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `p <- p - lr * g`
    #[default]
    Sgd,
    /// Heavy-ball momentum: `u <- beta * u + g; p <- p - lr * u`.
    Momentum { beta: f64 },
}

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    rule: UpdateRule,
    lr: T,
    max_grad_norm: Option<T>,
    velocity: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(rule: UpdateRule, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if let UpdateRule::Momentum { beta } = rule {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("momentum must be in [0, 1), got {beta}")));
            }
        }
        Ok(Optimizer {
            rule,
            lr: T::lit(lr),
            max_grad_norm: None,
            velocity: Vec::new(),
        })
    }

    /// Rescales each step's gradients to global norm at most `max_norm`.
    pub fn with_clipping(mut self, max_norm: f64) -> Result<Self> {
        if !(max_norm > 0.0) {
            return Err(Error::Config(format!("max_grad_norm must be positive, got {max_norm}")));
        }
        self.max_grad_norm = Some(T::lit(max_norm));
        Ok(self)
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(UpdateRule::Sgd, lr)
    }

    /// Applies one update. Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.n_params() != params.len() {
            return Err(Error::Dimension(format!(
                "gradients for {} parameters, store has {}",
                grads.n_params(),
                params.len()
            )));
        }
        for (id, g) in grads.iter() {
            if g.len() != params.get(id).len() {
                return Err(Error::Dimension(format!(
                    "gradient width {} for `{}` of width {}",
                    g.len(),
                    params.path(id),
                    params.get(id).len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite gradient for `{}`",
                    params.path(id)
                )));
            }
        }
        let clip = self.max_grad_norm.and_then(|max| {
            let norm = grads.norm();
            (norm > max).then(|| max / norm)
        });
        let mut clipped;
        let grads = match clip {
            Some(factor) => {
                clipped = grads.clone();
                clipped.scale(factor);
                &clipped
            }
            None => grads,
        };
        if self.velocity.len() < params.len() {
            self.velocity.resize(params.len(), None);
        }
        for (id, g) in grads.iter() {
            let p = params.get_mut(id).as_mut_slice();
            match self.rule {
                UpdateRule::Sgd => {
                    for (pv, &gv) in p.iter_mut().zip(g) {
                        *pv -= self.lr * gv;
                    }
                }
                UpdateRule::Momentum { beta } => {
                    let beta = T::lit(beta);
                    let u = self.velocity[id.index()].get_or_insert_with(|| vec![T::zero(); g.len()]);
                    for ((pv, uv), &gv) in p.iter_mut().zip(u.iter_mut()).zip(g) {
                        *uv = beta * *uv + gv;
                        *pv -= self.lr * *uv;
                    }
                }
            }
        }
        Ok(())
    }
}
