//! Exact QAP solver: depth-first branch and bound over per-row assignment
//! decisions with an admissible lower bound. Ties within tolerance are
//! broken toward the lexicographically smallest pair set.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::instance::{Matching, QapInstance};

/// Globally optimal matching of the full quadratic objective.
///
/// Refuses instances with `max(n1, n2) > node_limit`.
pub fn solve_qap_exact(
    inst: &QapInstance,
    node_limit: usize,
    tolerance: f64,
) -> Result<Matching> {
    if inst.n1.max(inst.n2) > node_limit {
        return Err(Error::NodeLimit(format!(
            "instance is {} x {} but node_limit is {node_limit}",
            inst.n1, inst.n2
        )));
    }
    if inst.complete && inst.n1 != inst.n2 {
        return Err(Error::Infeasible(format!(
            "complete matching requires equal sides, got {} x {}",
            inst.n1, inst.n2
        )));
    }

    let mut search = Search::new(inst, tolerance);
    search.dfs(0, 0.0);
    Matching::new(search.best_pairs, inst.n1, inst.n2)
}

struct Search<'a> {
    inst: &'a QapInstance,
    tolerance: f64,
    /// Admissible per-assignment lower bound on pairwise contributions.
    pair_min: Vec<Vec<f64>>,
    col_used: Vec<bool>,
    assigned: Vec<(usize, usize)>,
    best_obj: f64,
    best_pairs: Vec<(usize, usize)>,
}

impl<'a> Search<'a> {
    fn new(inst: &'a QapInstance, tolerance: f64) -> Self {
        Self {
            pair_min: pairwise_lower_bounds(inst),
            col_used: vec![false; inst.n2],
            assigned: Vec::with_capacity(inst.n1),
            best_obj: f64::INFINITY,
            best_pairs: Vec::new(),
            inst,
            tolerance,
        }
    }

    fn dfs(&mut self, row: usize, acc: f64) {
        if row == self.inst.n1 {
            self.offer(acc);
            return;
        }
        let bound_tail = self.future_bound(row + 1);
        for s in 0..self.inst.n2 {
            if self.col_used[s] {
                continue;
            }
            let step = self.inst.unary[row][s] + self.pair_cost_with_assigned(row, s);
            if acc + step + bound_tail <= self.best_obj + self.tolerance {
                self.col_used[s] = true;
                self.assigned.push((row, s));
                self.dfs(row + 1, acc + step);
                self.assigned.pop();
                self.col_used[s] = false;
            }
        }
        if !self.inst.complete && acc + bound_tail <= self.best_obj + self.tolerance {
            self.dfs(row + 1, acc);
        }
    }

    fn offer(&mut self, obj: f64) {
        if self.inst.complete && self.assigned.len() != self.inst.n1 {
            return;
        }
        if obj < self.best_obj - self.tolerance {
            self.best_obj = obj;
            self.best_pairs = self.assigned.clone();
        } else if obj <= self.best_obj + self.tolerance && self.assigned < self.best_pairs {
            self.best_obj = self.best_obj.min(obj);
            self.best_pairs = self.assigned.clone();
        }
    }

    /// Pairwise cost incurred by assigning `row -> s` against earlier rows.
    fn pair_cost_with_assigned(&self, row: usize, s: usize) -> f64 {
        let mut total = 0.0;
        for &(j, l) in &self.assigned {
            if let Some(&c) = self.inst.pairwise.get(&((j, row), (l, s))) {
                total += c;
            }
        }
        total
    }

    /// Admissible bound on the cost contributed by rows `from..n1`.
    fn future_bound(&self, from: usize) -> f64 {
        let mut bound = 0.0;
        for r in from..self.inst.n1 {
            let mut row_min = f64::INFINITY;
            for s in 0..self.inst.n2 {
                if !self.col_used[s] {
                    row_min = row_min.min(self.inst.unary[r][s] + self.pair_min[r][s]);
                }
            }
            bound += if self.inst.complete { row_min } else { row_min.min(0.0) };
        }
        bound
    }
}

/// For each assignment `(i, s)`, a lower bound on the pairwise cost any
/// completion can add through edges incident to `i`: per incident edge, the
/// minimum of zero and the smallest cost reachable with `i -> s` fixed.
fn pairwise_lower_bounds(inst: &QapInstance) -> Vec<Vec<f64>> {
    // (row, col, partner row) -> min cost over the partner's columns
    let mut edge_min: HashMap<(usize, usize, usize), f64> = HashMap::new();
    for (&((i, j), (s, l)), &c) in &inst.pairwise {
        let a = edge_min.entry((i, s, j)).or_insert(f64::INFINITY);
        *a = a.min(c);
        let b = edge_min.entry((j, l, i)).or_insert(f64::INFINITY);
        *b = b.min(c);
    }
    let mut pair_min = vec![vec![0.0f64; inst.n2]; inst.n1];
    for (&(i, s, _), &m) in &edge_min {
        pair_min[i][s] += m.min(0.0);
    }
    pair_min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::objective;
    use std::collections::BTreeMap;

    #[test]
    fn refuses_oversize_instances() {
        let inst = QapInstance::unary_only(vec![vec![0.0; 9]; 9], false).unwrap();
        assert!(matches!(
            solve_qap_exact(&inst, 8, 1e-9),
            Err(Error::NodeLimit(_))
        ));
    }

    #[test]
    fn all_zero_incomplete_prefers_empty_matching() {
        let inst = QapInstance::unary_only(vec![vec![0.0; 3]; 3], false).unwrap();
        let m = solve_qap_exact(&inst, 8, 1e-9).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn negative_pairwise_flips_the_unary_optimum() {
        // Unary favors the identity, but the anti-diagonal edge pair carries
        // -10; enumeration over all 34 partial matchings puts the optimum at
        // {(0,2), (1,1), (2,0)} with objective -8.
        let mut unary = vec![vec![1.0; 3]; 3];
        for i in 0..3 {
            unary[i][i] = 0.0;
        }
        let mut pw = BTreeMap::new();
        pw.insert(((0, 2), (2, 0)), -10.0);
        let inst = QapInstance::new(unary, pw, false).unwrap();
        let m = solve_qap_exact(&inst, 8, 1e-9).unwrap();
        assert_eq!(
            m.pairs.iter().copied().collect::<Vec<_>>(),
            vec![(0, 2), (1, 1), (2, 0)]
        );
        assert_eq!(objective(&inst, &m).unwrap(), -8.0);
    }
}
