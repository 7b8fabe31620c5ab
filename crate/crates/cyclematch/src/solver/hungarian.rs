//! Hungarian algorithm (shortest augmenting paths with potentials, O(n^3)).
//!
//! Incomplete matching is realized by augmenting each side with dummy nodes
//! of cost zero, so that assigning to a dummy means leaving a node unassigned.

use crate::error::{Error, Result};
use crate::instance::Matching;

/// Optimal linear assignment on the unary costs. In complete mode all nodes
/// of the smaller side are assigned; in incomplete mode any subset may stay
/// unassigned.
pub fn solve_lap_hungarian(unary: &[Vec<f64>], complete: bool) -> Result<Matching> {
    let n1 = unary.len();
    let n2 = unary.first().map_or(0, Vec::len);
    if unary.iter().any(|row| row.len() != n2) {
        return Err(Error::ShapeMismatch("ragged unary cost matrix".into()));
    }
    if unary.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInstance("non-finite unary cost".into()));
    }
    if n1 == 0 || n2 == 0 {
        return Ok(Matching::empty(n1, n2));
    }

    // Pad to a square matrix; dummy entries cost zero.
    let dim = if complete { n1.max(n2) } else { n1 + n2 };
    let mut cost = vec![vec![0.0f64; dim]; dim];
    for (i, row) in unary.iter().enumerate() {
        cost[i][..n2].copy_from_slice(row);
    }

    let row_to_col = assign_square(&cost);
    let pairs = row_to_col
        .iter()
        .enumerate()
        .filter(|&(i, &s)| i < n1 && s < n2)
        .map(|(i, &s)| (i, s));
    Matching::new(pairs, n1, n2)
}

/// Minimum-cost perfect assignment on a square matrix; returns row -> column.
fn assign_square(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // Column n is a virtual starting column; row index n is a scratch slot.
    let mut potential_row = vec![0.0f64; n + 1];
    let mut potential_col = vec![0.0f64; n + 1];
    let mut matched_row = vec![n; n + 1]; // matched_row[j] = row matched to column j
    let mut way = vec![n; n + 1];

    for i in 0..n {
        matched_row[n] = i;
        let mut j0 = n;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = n;
            for j in 0..n {
                if !used[j] {
                    let reduced = cost[i0][j] - potential_row[i0] - potential_col[j];
                    if reduced < min_slack[j] {
                        min_slack[j] = reduced;
                        way[j] = j0;
                    }
                    if min_slack[j] < delta {
                        delta = min_slack[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    potential_row[matched_row[j]] += delta;
                    potential_col[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == n {
                break;
            }
        }
        // Augment along the alternating path back to the virtual column.
        while j0 != n {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut row_to_col = vec![n; n];
    for j in 0..n {
        if matched_row[j] < n {
            row_to_col[matched_row[j]] = j;
        }
    }
    row_to_col
}
