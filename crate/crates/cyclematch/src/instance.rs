//! Core domain types for matching problems: keypoint sets, QAP instances,
//! matchings and lifted solutions.
//!
//! A `QapInstance` couples an `n1 x n2` unary cost matrix with sparse pairwise
//! costs keyed by one edge of each side. The key `((i, j), (s, l))` with
//! `i < j` an edge of the first graph and `{s, l}` an edge of the second
//! carries the cost added when `i -> s` and `j -> l` are both assigned.
//! Absent keys mean cost zero. Both orientations of the second edge may
//! appear as separate keys since they describe different assignment pairs.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Sparse pairwise cost key: (edge of side 1 with `i < j`, ordered pair on side 2).
pub type PairKey = ((usize, usize), (usize, usize));

/// One "image": 2D keypoints, per-point features, Delaunay edges and optional
/// ground-truth universe labels (evaluation only; `None` per point marks an outlier).
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub set_id: String,
    pub points: Vec<(f64, f64)>,
    pub features: Vec<Vec<f64>>,
    /// Undirected edge list, canonicalized to `i < j`, sorted, deduplicated.
    pub edges: Vec<(usize, usize)>,
    pub universe_labels: Option<Vec<Option<usize>>>,
}

impl KeypointSet {
    pub fn new(
        set_id: impl Into<String>,
        points: Vec<(f64, f64)>,
        features: Vec<Vec<f64>>,
        edges: Vec<(usize, usize)>,
        universe_labels: Option<Vec<Option<usize>>>,
    ) -> Result<Self> {
        let set_id = set_id.into();
        let n = points.len();
        if features.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "set {set_id}: {} feature vectors for {n} points",
                features.len()
            )));
        }
        if let Some(dim) = features.first().map(Vec::len) {
            if features.iter().any(|f| f.len() != dim) {
                return Err(Error::ShapeMismatch(format!(
                    "set {set_id}: ragged feature vectors"
                )));
            }
        }
        if let Some(labels) = &universe_labels {
            if labels.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "set {set_id}: {} labels for {n} points",
                    labels.len()
                )));
            }
        }
        let mut canon: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a == b {
                return Err(Error::InvalidInstance(format!(
                    "set {set_id}: self-loop edge ({a}, {b})"
                )));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidInstance(format!(
                    "set {set_id}: edge ({a}, {b}) out of range for {n} points"
                )));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        let before = canon.len();
        canon.dedup();
        if canon.len() != before {
            return Err(Error::InvalidInstance(format!(
                "set {set_id}: duplicate edges"
            )));
        }
        Ok(Self { set_id, points, features, edges: canon, universe_labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Labels present on this set's points, as a sorted set (outliers excluded).
    pub fn label_set(&self) -> Option<BTreeSet<usize>> {
        self.universe_labels
            .as_ref()
            .map(|ls| ls.iter().filter_map(|l| *l).collect())
    }
}

/// A graph matching instance in integer-quadratic form: unary costs plus
/// sparse edge-pair costs, minimized under the uniqueness constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct QapInstance {
    pub n1: usize,
    pub n2: usize,
    /// `unary[i][s]` is the cost of assigning node `i` of side 1 to node `s` of side 2.
    pub unary: Vec<Vec<f64>>,
    pub pairwise: BTreeMap<PairKey, f64>,
    /// Equality (`true`) vs. inequality (`false`) in the uniqueness constraints.
    pub complete: bool,
}

impl QapInstance {
    pub fn new(
        unary: Vec<Vec<f64>>,
        pairwise: BTreeMap<PairKey, f64>,
        complete: bool,
    ) -> Result<Self> {
        let n1 = unary.len();
        let n2 = unary.first().map_or(0, Vec::len);
        if unary.iter().any(|row| row.len() != n2) {
            return Err(Error::ShapeMismatch("ragged unary cost matrix".into()));
        }
        if unary.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInstance("non-finite unary cost".into()));
        }
        for (&((i, j), (s, l)), &c) in &pairwise {
            if !c.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "non-finite pairwise cost at (({i},{j}),({s},{l}))"
                )));
            }
            if i >= j || j >= n1 {
                return Err(Error::InvalidInstance(format!(
                    "pairwise key edge ({i},{j}) is not a canonical side-1 edge"
                )));
            }
            if s == l || s >= n2 || l >= n2 {
                return Err(Error::InvalidInstance(format!(
                    "pairwise key pair ({s},{l}) is not a valid side-2 pair"
                )));
            }
        }
        Ok(Self { n1, n2, unary, pairwise, complete })
    }

    pub fn unary_only(unary: Vec<Vec<f64>>, complete: bool) -> Result<Self> {
        Self::new(unary, BTreeMap::new(), complete)
    }
}

/// A (possibly partial) assignment satisfying the uniqueness constraints.
/// Stored as a set of `(i, s)` pairs; dense views are derived on demand.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Matching {
    pub pairs: BTreeSet<(usize, usize)>,
    pub n1: usize,
    pub n2: usize,
}

impl Matching {
    /// Builds a matching, checking index bounds only. Uniqueness is a separate
    /// predicate (`validate_matching`) so that invalid candidates can be probed.
    pub fn new(
        pairs: impl IntoIterator<Item = (usize, usize)>,
        n1: usize,
        n2: usize,
    ) -> Result<Self> {
        let pairs: BTreeSet<(usize, usize)> = pairs.into_iter().collect();
        for &(i, s) in &pairs {
            if i >= n1 || s >= n2 {
                return Err(Error::InvalidMatching(format!(
                    "pair ({i}, {s}) out of range for {n1} x {n2}"
                )));
            }
        }
        Ok(Self { pairs, n1, n2 })
    }

    pub fn empty(n1: usize, n2: usize) -> Self {
        Self { pairs: BTreeSet::new(), n1, n2 }
    }

    pub fn contains(&self, i: usize, s: usize) -> bool {
        self.pairs.contains(&(i, s))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Dense row view: `forward()[i] == Some(s)` iff `(i, s)` is matched.
    pub fn forward(&self) -> Vec<Option<usize>> {
        let mut map = vec![None; self.n1];
        for &(i, s) in &self.pairs {
            map[i] = Some(s);
        }
        map
    }

    /// Dense column view: `inverse()[s] == Some(i)` iff `(i, s)` is matched.
    pub fn inverse(&self) -> Vec<Option<usize>> {
        let mut map = vec![None; self.n2];
        for &(i, s) in &self.pairs {
            map[s] = Some(i);
        }
        map
    }

    /// The same matching read in the opposite direction.
    pub fn transposed(&self) -> Matching {
        Matching {
            pairs: self.pairs.iter().map(|&(i, s)| (s, i)).collect(),
            n1: self.n2,
            n2: self.n1,
        }
    }
}

/// A matching together with its active lifted pair-of-assignment indicators
/// (`y_{is,jl} = x_is * x_jl`), restricted to pairwise keys of the instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSolution {
    pub x: Matching,
    /// Active assignment pairs `((i, s), (j, l))`.
    pub y: BTreeSet<((usize, usize), (usize, usize))>,
}

impl LiftedSolution {
    /// Canonical instance key for an active assignment pair.
    pub fn pair_key(a: (usize, usize), b: (usize, usize)) -> PairKey {
        let ((i, s), (j, l)) = (a, b);
        if i < j {
            ((i, j), (s, l))
        } else {
            ((j, i), (l, s))
        }
    }

    /// Active instance pairwise keys of this solution.
    pub fn active_keys(&self) -> BTreeSet<PairKey> {
        self.y.iter().map(|&(a, b)| Self::pair_key(a, b)).collect()
    }
}

/// True iff row/column uniqueness holds, and, for complete square instances,
/// every node is assigned.
pub fn validate_matching(m: &Matching, complete: bool) -> bool {
    let mut rows = vec![false; m.n1];
    let mut cols = vec![false; m.n2];
    for &(i, s) in &m.pairs {
        if i >= m.n1 || s >= m.n2 || rows[i] || cols[s] {
            return false;
        }
        rows[i] = true;
        cols[s] = true;
    }
    if complete && m.n1 == m.n2 && m.pairs.len() != m.n1 {
        return false;
    }
    true
}

/// Rebuilds the lifted variables `y_{is,jl} = x_is * x_jl` over the pairwise
/// keys present in the instance.
pub fn lift(m: &Matching, inst: &QapInstance) -> Result<LiftedSolution> {
    check_matching(m, inst)?;
    let fwd = m.forward();
    let mut y = BTreeSet::new();
    for &((i, j), (s, l)) in inst.pairwise.keys() {
        if fwd[i] == Some(s) && fwd[j] == Some(l) {
            y.insert(((i, s), (j, l)));
        }
    }
    Ok(LiftedSolution { x: m.clone(), y })
}

/// Total cost of a matching: unary terms plus pairwise terms over active keys.
pub fn objective(inst: &QapInstance, m: &Matching) -> Result<f64> {
    check_matching(m, inst)?;
    let fwd = m.forward();
    let mut total = 0.0;
    for &(i, s) in &m.pairs {
        total += inst.unary[i][s];
    }
    for (&((i, j), (s, l)), &c) in &inst.pairwise {
        if fwd[i] == Some(s) && fwd[j] == Some(l) {
            total += c;
        }
    }
    Ok(total)
}

fn check_matching(m: &Matching, inst: &QapInstance) -> Result<()> {
    if m.n1 != inst.n1 || m.n2 != inst.n2 {
        return Err(Error::ShapeMismatch(format!(
            "matching is {} x {} but instance is {} x {}",
            m.n1, m.n2, inst.n1, inst.n2
        )));
    }
    if !validate_matching(m, inst.complete) {
        return Err(Error::InvalidMatching(
            "uniqueness constraints violated".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(pairs: &[(usize, usize)], n1: usize, n2: usize) -> Matching {
        Matching::new(pairs.iter().copied(), n1, n2).unwrap()
    }

    #[test]
    fn validate_accepts_identity_permutation() {
        assert!(validate_matching(&m(&[(0, 0), (1, 1)], 2, 2), true));
    }

    #[test]
    fn validate_rejects_reused_column() {
        let bad = Matching {
            pairs: [(0, 0), (1, 0)].into_iter().collect(),
            n1: 2,
            n2: 2,
        };
        assert!(!validate_matching(&bad, false));
    }

    #[test]
    fn validate_accepts_empty_on_incomplete() {
        assert!(validate_matching(&Matching::empty(3, 2), false));
    }

    #[test]
    fn validate_requires_full_assignment_when_complete() {
        assert!(!validate_matching(&m(&[(0, 0)], 2, 2), true));
    }

    #[test]
    fn lift_of_empty_matching_is_empty() {
        let mut pw = BTreeMap::new();
        pw.insert(((0, 1), (0, 1)), 5.0);
        let inst = QapInstance::new(vec![vec![0.0; 2]; 2], pw, false).unwrap();
        let lifted = lift(&Matching::empty(2, 2), &inst).unwrap();
        assert!(lifted.y.is_empty());
    }

    #[test]
    fn lift_identity_activates_matching_edge_pair() {
        let mut pw = BTreeMap::new();
        pw.insert(((0, 1), (0, 1)), 5.0);
        let inst = QapInstance::new(vec![vec![0.0; 2]; 2], pw, true).unwrap();
        let lifted = lift(&m(&[(0, 0), (1, 1)], 2, 2), &inst).unwrap();
        let expect: BTreeSet<_> = [((0, 0), (1, 1))].into_iter().collect();
        assert_eq!(lifted.y, expect);
    }

    #[test]
    fn lift_transposition_tracks_key_orientation() {
        // Key ((0,1),(0,1)) activates only under i0->s0 and i1->s1, so the
        // transposition produces an empty lift.
        let mut pw = BTreeMap::new();
        pw.insert(((0, 1), (0, 1)), 5.0);
        let inst = QapInstance::new(vec![vec![0.0; 2]; 2], pw, true).unwrap();
        let swap = m(&[(0, 1), (1, 0)], 2, 2);
        assert!(lift(&swap, &inst).unwrap().y.is_empty());

        // With the opposite orientation present the transposition activates it.
        let mut pw = BTreeMap::new();
        pw.insert(((0, 1), (1, 0)), 5.0);
        let inst = QapInstance::new(vec![vec![0.0; 2]; 2], pw, true).unwrap();
        let lifted = lift(&swap, &inst).unwrap();
        let expect: BTreeSet<_> = [((0, 1), (1, 0))].into_iter().collect();
        assert_eq!(lifted.y, expect);
    }

    #[test]
    fn lift_rejects_invalid_matching() {
        let inst = QapInstance::unary_only(vec![vec![0.0; 2]; 2], false).unwrap();
        let bad = Matching {
            pairs: [(0, 0), (1, 0)].into_iter().collect(),
            n1: 2,
            n2: 2,
        };
        assert!(matches!(lift(&bad, &inst), Err(Error::InvalidMatching(_))));
    }

    #[test]
    fn objective_of_empty_matching_is_zero() {
        let inst = QapInstance::unary_only(vec![vec![3.0; 2]; 2], false).unwrap();
        assert_eq!(objective(&inst, &Matching::empty(2, 2)).unwrap(), 0.0);
    }

    #[test]
    fn objective_sums_unary_diagonal() {
        let inst =
            QapInstance::unary_only(vec![vec![1.0, 9.0], vec![9.0, 2.0]], true).unwrap();
        let obj = objective(&inst, &m(&[(0, 0), (1, 1)], 2, 2)).unwrap();
        assert_eq!(obj, 3.0);
    }

    #[test]
    fn objective_includes_active_pairwise_cost() {
        let mut pw = BTreeMap::new();
        pw.insert(((0, 1), (0, 1)), 5.0);
        let inst = QapInstance::new(vec![vec![0.0; 2]; 2], pw, true).unwrap();
        let obj = objective(&inst, &m(&[(0, 0), (1, 1)], 2, 2)).unwrap();
        assert_eq!(obj, 5.0);
    }

    #[test]
    fn keypoint_set_rejects_self_loops_and_duplicates() {
        let pts = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let feats = vec![vec![0.0]; 3];
        assert!(KeypointSet::new("a", pts.clone(), feats.clone(), vec![(1, 1)], None).is_err());
        assert!(
            KeypointSet::new("a", pts.clone(), feats.clone(), vec![(0, 1), (1, 0)], None).is_err()
        );
        let ks = KeypointSet::new("a", pts, feats, vec![(2, 0), (0, 1)], None).unwrap();
        assert_eq!(ks.edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn pairwise_keys_must_be_canonical() {
        let mut pw = BTreeMap::new();
        pw.insert(((1, 0), (0, 1)), 1.0);
        assert!(QapInstance::new(vec![vec![0.0; 2]; 2], pw, false).is_err());
    }
}
