//! Discrete cycle-consistency loss over matching triples, its gradient, and
//! cycle-consistency verification for systems of three or more sets.
//!
//! For a fixed index triple `(i, s, k)` the partial loss over the binary
//! chain indicators is `ab + bc + ac - 3abc`: one exactly when two of the
//! three links are present and the third is missing.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::instance::Matching;

/// Matchings over three sets, oriented along the chain
/// `V1 -> V2 -> V3 -> V1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingTriple {
    pub x12: Matching,
    pub x23: Matching,
    pub x31: Matching,
}

impl MatchingTriple {
    pub fn new(x12: Matching, x23: Matching, x31: Matching) -> Result<Self> {
        if x12.n2 != x23.n1 || x23.n2 != x31.n1 || x31.n2 != x12.n1 {
            return Err(Error::ShapeMismatch(format!(
                "triple sides do not chain: {}x{}, {}x{}, {}x{}",
                x12.n1, x12.n2, x23.n1, x23.n2, x31.n1, x31.n2
            )));
        }
        Ok(Self { x12, x23, x31 })
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.x12.n1, self.x23.n1, self.x31.n1)
    }
}

/// `ab + bc + ac - 3abc`; symmetric in its arguments.
pub fn partial_loss(a: bool, b: bool, c: bool) -> i64 {
    let (a, b, c) = (a as i64, b as i64, c as i64);
    a * b + b * c + a * c - 3 * a * b * c
}

/// Sum of the partial loss over all `(i, s, k)` index triples: the number of
/// triples with exactly two of the three chain indicators active.
///
/// Computed in `O(#pairs)` by walking matched chains; the cubic triple loop
/// is kept as a test oracle.
pub fn total_loss(t: &MatchingTriple) -> i64 {
    let f12 = t.x12.forward();
    let f23 = t.x23.forward();
    let f31 = t.x31.forward();
    let i31 = t.x31.inverse(); // i31[i] = k with (k, i) matched

    let mut loss = 0;
    // (1,1,0) and (1,0,1): chains through an x12 pair.
    for &(i, s) in &t.x12.pairs {
        if let Some(k) = f23[s] {
            if f31[k] != Some(i) {
                loss += 1; // x12, x23 active; x31 missing
            }
        }
        if let Some(k) = i31[i] {
            if f23[s] != Some(k) {
                loss += 1; // x12, x31 active; x23 missing
            }
        }
    }
    // (0,1,1): chains through x23 and x31 with the closing x12 missing.
    for &(s, k) in &t.x23.pairs {
        if let Some(i) = f31[k] {
            if f12[i] != Some(s) {
                loss += 1;
            }
        }
    }
    loss
}

/// Per-entry derivative of the total loss. For `(i, s)` the entry is
/// `sum_k (x23_sk + x31_ki - 3 x23_sk x31_ki)`, independent of `x12` itself;
/// the other two matrices are the cyclic analogues.
pub fn loss_gradient(t: &MatchingTriple) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (n1, n2, n3) = t.sizes();
    let f12 = t.x12.forward();
    let i12 = t.x12.inverse();
    let f23 = t.x23.forward();
    let i23 = t.x23.inverse();
    let f31 = t.x31.forward();
    let i31 = t.x31.inverse();

    // grad[i][s] = a + b - 3c where a, b, c are the indicator sums over k.
    let chain_entry = |a: Option<usize>, b: Option<usize>| -> f64 {
        let both = a.is_some() && a == b;
        (a.is_some() as i64 + b.is_some() as i64 - 3 * both as i64) as f64
    };

    let mut g12 = vec![vec![0.0; n2]; n1];
    for (i, row) in g12.iter_mut().enumerate() {
        for (s, v) in row.iter_mut().enumerate() {
            // k reached forward via x23 from s, and k reaching i via x31.
            *v = chain_entry(f23[s], i31[i]);
        }
    }
    let mut g23 = vec![vec![0.0; n3]; n2];
    for (s, row) in g23.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = chain_entry(f31[k], i12[s]);
        }
    }
    let mut g31 = vec![vec![0.0; n1]; n3];
    for (k, row) in g31.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = chain_entry(f12[i], i23[k]);
        }
    }
    (g12, g23, g31)
}

/// Pairwise matchings over `d` sets in canonical orientation
/// (lower set index -> higher).
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingSystem {
    pub d: usize,
    pub matchings: BTreeMap<(usize, usize), Matching>,
}

impl MatchingSystem {
    pub fn new(d: usize, matchings: BTreeMap<(usize, usize), Matching>) -> Result<Self> {
        for (&(a, b), m) in &matchings {
            if a >= b || b >= d {
                return Err(Error::Config(format!(
                    "matching key ({a}, {b}) is not canonical for d = {d}"
                )));
            }
            let _ = m;
        }
        Ok(Self { d, matchings })
    }

    pub fn get(&self, a: usize, b: usize) -> Result<&Matching> {
        self.matchings
            .get(&(a.min(b), a.max(b)))
            .ok_or_else(|| Error::Config(format!("missing matching for pair ({a}, {b})")))
    }

    /// Matching oriented from `a` to `b`, transposing the stored one if needed.
    pub fn oriented(&self, a: usize, b: usize) -> Result<Matching> {
        let m = self.get(a, b)?;
        Ok(if a < b { m.clone() } else { m.transposed() })
    }
}

/// True iff every matching chain closes. Checked on all unordered triples,
/// which is equivalent to consistency of arbitrary-length cycles.
pub fn is_cycle_consistent(system: &MatchingSystem) -> Result<bool> {
    for a in 0..system.d {
        for b in (a + 1)..system.d {
            for c in (b + 1)..system.d {
                let t = MatchingTriple::new(
                    system.oriented(a, b)?,
                    system.oriented(b, c)?,
                    system.oriented(c, a)?,
                )?;
                if total_loss(&t) != 0 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matching(pairs: &[(usize, usize)], n1: usize, n2: usize) -> Matching {
        Matching::new(pairs.iter().copied(), n1, n2).unwrap()
    }

    fn identity(n: usize) -> Matching {
        Matching::new((0..n).map(|i| (i, i)), n, n).unwrap()
    }

    /// Cubic reference counter over all (i, s, k) triples.
    pub(crate) fn total_loss_bruteforce(t: &MatchingTriple) -> i64 {
        let (n1, n2, n3) = t.sizes();
        let mut loss = 0;
        for i in 0..n1 {
            for s in 0..n2 {
                for k in 0..n3 {
                    loss += partial_loss(
                        t.x12.contains(i, s),
                        t.x23.contains(s, k),
                        t.x31.contains(k, i),
                    );
                }
            }
        }
        loss
    }

    #[test]
    fn partial_loss_value_table() {
        assert_eq!(partial_loss(false, true, true), 1);
        assert_eq!(partial_loss(true, true, true), 0);
        assert_eq!(partial_loss(true, false, false), 0);
        assert_eq!(partial_loss(false, false, false), 0);
    }

    #[test]
    fn partial_loss_is_symmetric() {
        for bits in 0..8u8 {
            let (a, b, c) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
            let v = partial_loss(a, b, c);
            assert_eq!(v, partial_loss(a, c, b));
            assert_eq!(v, partial_loss(b, a, c));
            assert_eq!(v, partial_loss(b, c, a));
            assert_eq!(v, partial_loss(c, a, b));
            assert_eq!(v, partial_loss(c, b, a));
        }
    }

    #[test]
    fn identity_triple_is_consistent() {
        let t = MatchingTriple::new(identity(3), identity(3), identity(3)).unwrap();
        assert_eq!(total_loss(&t), 0);
    }

    #[test]
    fn empty_triple_has_zero_loss() {
        let t = MatchingTriple::new(
            Matching::empty(3, 3),
            Matching::empty(3, 3),
            Matching::empty(3, 3),
        )
        .unwrap();
        assert_eq!(total_loss(&t), 0);
    }

    #[test]
    fn swapped_closing_matching_costs_six() {
        // x12 = x23 = identity, x31 swaps points 1 and 2; checked against the
        // exhaustive 27-triple enumeration.
        let x31 = matching(&[(0, 0), (1, 2), (2, 1)], 3, 3);
        let t = MatchingTriple::new(identity(3), identity(3), x31).unwrap();
        assert_eq!(total_loss_bruteforce(&t), 6);
        assert_eq!(total_loss(&t), 6);
    }

    #[test]
    fn fast_loss_matches_bruteforce_on_partial_matchings() {
        let t = MatchingTriple::new(
            matching(&[(0, 1), (2, 0)], 3, 2),
            matching(&[(1, 3)], 2, 4),
            matching(&[(3, 0), (1, 2)], 4, 3),
        )
        .unwrap();
        assert_eq!(total_loss(&t), total_loss_bruteforce(&t));
    }

    #[test]
    fn gradient_value_table_per_chain_state() {
        // For a single (i, s, k) cell: d/dx12 = x23 + x31 - 3 x23 x31.
        for (x23, x31, want) in
            [(false, false, 0.0), (true, false, 1.0), (false, true, 1.0), (true, true, -1.0)]
        {
            let m23 = if x23 { matching(&[(0, 0)], 1, 1) } else { Matching::empty(1, 1) };
            let m31 = if x31 { matching(&[(0, 0)], 1, 1) } else { Matching::empty(1, 1) };
            let t = MatchingTriple::new(Matching::empty(1, 1), m23, m31).unwrap();
            let (g12, _, _) = loss_gradient(&t);
            assert_eq!(g12[0][0], want, "x23={x23} x31={x31}");
        }
    }

    #[test]
    fn gradient_is_independent_of_x12() {
        let x23 = matching(&[(0, 1), (1, 0)], 2, 2);
        let x31 = matching(&[(0, 0)], 2, 2);
        let with = MatchingTriple::new(identity(2), x23.clone(), x31.clone()).unwrap();
        let without = MatchingTriple::new(Matching::empty(2, 2), x23, x31).unwrap();
        assert_eq!(loss_gradient(&with).0, loss_gradient(&without).0);
    }

    #[test]
    fn gradient_matches_flip_finite_difference() {
        let t = MatchingTriple::new(
            matching(&[(0, 1), (1, 2)], 3, 3),
            matching(&[(0, 0), (2, 1)], 3, 3),
            matching(&[(1, 0), (2, 2)], 3, 3),
        )
        .unwrap();
        let (g12, _, _) = loss_gradient(&t);
        for i in 0..3 {
            for s in 0..3 {
                let mut on = t.clone();
                on.x12.pairs.insert((i, s));
                let mut off = t.clone();
                off.x12.pairs.remove(&(i, s));
                let diff = total_loss_bruteforce(&on) - total_loss_bruteforce(&off);
                assert_eq!(g12[i][s], diff as f64, "entry ({i}, {s})");
            }
        }
    }

    #[test]
    fn consistency_of_identities_and_of_the_swap_example() {
        let mut ms = BTreeMap::new();
        ms.insert((0, 1), identity(3));
        ms.insert((1, 2), identity(3));
        ms.insert((0, 2), identity(3));
        assert!(is_cycle_consistent(&MatchingSystem::new(3, ms).unwrap()).unwrap());

        let mut ms = BTreeMap::new();
        ms.insert((0, 1), identity(3));
        ms.insert((1, 2), identity(3));
        // x31 swaps 1 and 2, stored canonically as x13 = transpose.
        ms.insert((0, 2), matching(&[(0, 0), (1, 2), (2, 1)], 3, 3).transposed());
        assert!(!is_cycle_consistent(&MatchingSystem::new(3, ms).unwrap()).unwrap());
    }

    #[test]
    fn missing_pair_is_an_error() {
        let mut ms = BTreeMap::new();
        ms.insert((0, 1), identity(2));
        ms.insert((1, 2), identity(2));
        let system = MatchingSystem::new(3, ms).unwrap();
        assert!(is_cycle_consistent(&system).is_err());
    }

    #[test]
    fn label_induced_system_of_four_sets_is_consistent() {
        // Each set observes a subset of a 5-label universe; matchings are
        // induced by shared labels.
        let observed: [&[usize]; 4] = [&[0, 1, 2, 4], &[1, 2, 3], &[0, 2, 3, 4], &[1, 4]];
        let mut ms = BTreeMap::new();
        for a in 0..4 {
            for b in (a + 1)..4 {
                let pairs: Vec<(usize, usize)> = observed[a]
                    .iter()
                    .enumerate()
                    .filter_map(|(i, la)| {
                        observed[b].iter().position(|lb| lb == la).map(|s| (i, s))
                    })
                    .collect();
                ms.insert(
                    (a, b),
                    matching(&pairs, observed[a].len(), observed[b].len()),
                );
            }
        }
        assert!(is_cycle_consistent(&MatchingSystem::new(4, ms).unwrap()).unwrap());
    }
}
