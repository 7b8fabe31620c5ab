//! Black-box differentiation of the solver: a second solve at perturbed
//! costs yields the gradient of a piecewise-linear interpolation of the
//! loss, `dL/dc = (x(c + lambda * dL/dx) - x(c)) / lambda`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::instance::{LiftedSolution, PairKey, QapInstance};

/// Loss gradient with respect to the assignment indicators (`dL/dx`).
/// The lifted variables carry no loss gradient, so only unary entries exist.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub unary: Vec<Vec<f64>>,
}

impl LossGrad {
    pub fn zeros(n1: usize, n2: usize) -> Self {
        Self { unary: vec![vec![0.0; n2]; n1] }
    }
}

/// Gradient of the loss with respect to the instance costs. Pairwise entries
/// mirror the instance's sparse keys; absent keys mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGradient {
    pub unary_grad: Vec<Vec<f64>>,
    pub pairwise_grad: BTreeMap<PairKey, f64>,
}

impl CostGradient {
    pub fn is_zero(&self) -> bool {
        self.unary_grad.iter().flatten().all(|&g| g == 0.0)
            && self.pairwise_grad.values().all(|&g| g == 0.0)
    }
}

/// Returns the instance with `unary + lambda * g` and pairwise costs
/// untouched. Entries with zero gradient are copied bit-for-bit.
pub fn perturb_costs(inst: &QapInstance, g: &LossGrad, lambda: f64) -> Result<QapInstance> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be > 0, got {lambda}")));
    }
    if g.unary.len() != inst.n1 || g.unary.iter().any(|row| row.len() != inst.n2) {
        return Err(Error::ShapeMismatch(format!(
            "loss gradient does not match {} x {} instance",
            inst.n1, inst.n2
        )));
    }
    let mut out = inst.clone();
    for (row, grow) in out.unary.iter_mut().zip(&g.unary) {
        for (c, &gv) in row.iter_mut().zip(grow) {
            if gv != 0.0 {
                *c += lambda * gv;
            }
        }
    }
    Ok(out)
}

/// Piecewise-linear interpolation gradient from the forward and perturbed
/// solutions: `(x_pert - x) / lambda` on unary entries and the analogous
/// lifted difference on pairwise keys.
pub fn bb_gradient(
    x: &LiftedSolution,
    x_pert: &LiftedSolution,
    lambda: f64,
) -> Result<CostGradient> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be > 0, got {lambda}")));
    }
    let (n1, n2) = (x.x.n1, x.x.n2);
    if x_pert.x.n1 != n1 || x_pert.x.n2 != n2 {
        return Err(Error::ShapeMismatch(format!(
            "solutions are {} x {} and {} x {}",
            n1, n2, x_pert.x.n1, x_pert.x.n2
        )));
    }

    let mut unary_grad = vec![vec![0.0; n2]; n1];
    for &(i, s) in x_pert.x.pairs.difference(&x.x.pairs) {
        unary_grad[i][s] = 1.0 / lambda;
    }
    for &(i, s) in x.x.pairs.difference(&x_pert.x.pairs) {
        unary_grad[i][s] = -1.0 / lambda;
    }

    let mut pairwise_grad = BTreeMap::new();
    let active = x.active_keys();
    let active_pert = x_pert.active_keys();
    for &k in active_pert.difference(&active) {
        pairwise_grad.insert(k, 1.0 / lambda);
    }
    for &k in active.difference(&active_pert) {
        pairwise_grad.insert(k, -1.0 / lambda);
    }

    Ok(CostGradient { unary_grad, pairwise_grad })
}
