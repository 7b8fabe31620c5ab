//! Self-contained verification suite backing the `check` command: exhaustive
//! reference implementations (matching enumeration, cubic loss counting,
//! chain walking, quartic Delaunay checking, finite differences) that are
//! independent of the production code paths they cross-check.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::blackbox::{bb_gradient, perturb_costs, CostGradient, LossGrad};
use crate::cost::{backward, build_instance, CostModelParams};
use crate::cycle::{
    is_cycle_consistent, loss_gradient, partial_loss, total_loss, MatchingSystem, MatchingTriple,
};
use crate::data::delaunay;
use crate::error::Result;
use crate::instance::{lift, objective, Matching, PairKey, QapInstance};
use crate::solver::{solve, solve_lap_hungarian, SolverConfig, SolverKind};

pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs every check with instance sizes small enough for the exhaustive
/// references. Different seeds draw different random instances.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        check_lap_oracle(&mut rng),
        check_qap_oracle(&mut rng),
        check_local_search(&mut rng),
        check_cycle_oracle(&mut rng),
        check_gradient_table(&mut rng),
        check_blackbox(&mut rng),
        check_gradcheck(&mut rng),
        check_chat_monotonic(&mut rng),
        check_triples_suffice(&mut rng),
        check_delaunay(&mut rng),
    ]
}

// ---- reference implementations -----------------------------------------------

/// All matchings of an `n1 x n2` instance (partial injections, or only the
/// full ones in complete mode), enumerated row by row.
pub fn enumerate_matchings(n1: usize, n2: usize, complete: bool) -> Vec<Matching> {
    fn recurse(
        row: usize,
        n1: usize,
        n2: usize,
        complete: bool,
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<Matching>,
    ) {
        if row == n1 {
            if !complete || current.len() == n1 {
                out.push(Matching::new(current.iter().copied(), n1, n2).unwrap());
            }
            return;
        }
        for s in 0..n2 {
            if !used[s] {
                used[s] = true;
                current.push((row, s));
                recurse(row + 1, n1, n2, complete, used, current, out);
                current.pop();
                used[s] = false;
            }
        }
        if !complete {
            recurse(row + 1, n1, n2, complete, used, current, out);
        }
    }
    let mut out = Vec::new();
    recurse(0, n1, n2, complete, &mut vec![false; n2], &mut Vec::new(), &mut out);
    out
}

/// Exhaustive optimum with the lexicographic tie-break.
pub fn brute_force_optimum(inst: &QapInstance, tolerance: f64) -> Result<(Matching, f64)> {
    let mut best: Option<(f64, Matching)> = None;
    for m in enumerate_matchings(inst.n1, inst.n2, inst.complete) {
        let obj = objective(inst, &m)?;
        best = Some(match best {
            None => (obj, m),
            Some((bo, bm)) => {
                if obj < bo - tolerance || (obj <= bo + tolerance && m.pairs < bm.pairs) {
                    (bo.min(obj), m)
                } else {
                    (bo, bm)
                }
            }
        });
    }
    let (obj, m) = best.expect("at least the empty matching");
    Ok((m, obj))
}

/// Cubic triple loop counting configurations with exactly two active links.
pub fn total_loss_reference(t: &MatchingTriple) -> i64 {
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

/// Chain-walking consistency: for every increasing sequence of set indices
/// and every complete chain of matches along it, the closing pair must be
/// matched too.
pub fn chain_consistency_reference(system: &MatchingSystem) -> Result<bool> {
    let d = system.d;
    let mut sequences: Vec<Vec<usize>> = Vec::new();
    for mask in 0u32..(1 << d) {
        let seq: Vec<usize> = (0..d).filter(|&k| mask & (1 << k) != 0).collect();
        if seq.len() >= 3 {
            sequences.push(seq);
        }
    }
    for seq in sequences {
        let first = seq[0];
        let size_first = system.oriented(first, seq[1])?.n1;
        'start: for p0 in 0..size_first {
            let mut p = p0;
            for w in seq.windows(2) {
                let m = system.oriented(w[0], w[1])?;
                match m.forward()[p] {
                    Some(q) => p = q,
                    None => continue 'start,
                }
            }
            let closing = system.oriented(*seq.last().unwrap(), first)?;
            if closing.forward()[p] != Some(p0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Quartic Delaunay reference: the union of edges of all triangles whose
/// circumcircle is empty of other points (general position assumed).
pub fn delaunay_reference(points: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let orient =
                    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if orient.abs() < 1e-12 {
                    continue;
                }
                let empty = (0..n)
                    .filter(|&p| p != i && p != j && p != k)
                    .all(|p| !plain_in_circle(a, b, c, points[p]));
                if empty {
                    edges.insert((i, j));
                    edges.insert((j, k));
                    edges.insert((i, k));
                }
            }
        }
    }
    edges.into_iter().collect()
}

fn plain_in_circle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (ax, ay) = (a.0 - d.0, a.1 - d.1);
    let (bx, by) = (b.0 - d.0, b.1 - d.1);
    let (cx, cy) = (c.0 - d.0, c.1 - d.1);
    let det = (ax * ax + ay * ay) * (bx * cy - by * cx)
        - (bx * bx + by * by) * (ax * cy - ay * cx)
        + (cx * cx + cy * cy) * (ax * by - ay * bx);
    let orient = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    if orient > 0.0 {
        det > 1e-12
    } else {
        det < -1e-12
    }
}

// ---- random generators ---------------------------------------------------------

pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> QapInstance {
    let n1 = rng.gen_range(1..=max_n);
    let n2 = rng.gen_range(1..=max_n);
    let complete = n1 == n2 && rng.gen_bool(0.5);
    let unary: Vec<Vec<f64>> = (0..n1)
        .map(|_| (0..n2).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut pairwise = BTreeMap::new();
    if n1 >= 2 && n2 >= 2 {
        let keys = rng.gen_range(0..=(n1 * n2));
        for _ in 0..keys {
            let i = rng.gen_range(0..n1 - 1);
            let j = rng.gen_range(i + 1..n1);
            let s = rng.gen_range(0..n2);
            let mut l = rng.gen_range(0..n2 - 1);
            if l >= s {
                l += 1;
            }
            pairwise.insert(((i, j), (s, l)), rng.gen_range(-1.0..1.0));
        }
    }
    QapInstance::new(unary, pairwise, complete).unwrap()
}

pub fn random_matching(rng: &mut ChaCha8Rng, n1: usize, n2: usize) -> Matching {
    let mut cols: Vec<usize> = (0..n2).collect();
    cols.shuffle(rng);
    let pairs = (0..n1)
        .zip(cols)
        .filter(|_| rng.gen_bool(0.7))
        .collect::<Vec<_>>();
    Matching::new(pairs, n1, n2).unwrap()
}

pub fn random_triple(rng: &mut ChaCha8Rng, max_n: usize) -> MatchingTriple {
    let n1 = rng.gen_range(1..=max_n);
    let n2 = rng.gen_range(1..=max_n);
    let n3 = rng.gen_range(1..=max_n);
    MatchingTriple::new(
        random_matching(rng, n1, n2),
        random_matching(rng, n2, n3),
        random_matching(rng, n3, n1),
    )
    .unwrap()
}

/// Random keypoint set with features suitable for gradcheck.
fn random_keypoints(rng: &mut ChaCha8Rng, id: &str, n: usize, d: usize) -> crate::instance::KeypointSet {
    let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let edges = if n >= 3 { delaunay(&points).unwrap() } else { vec![] };
    crate::instance::KeypointSet::new(id, points, features, edges, None).unwrap()
}

/// A matching system over `d` sets: label-induced (consistent by
/// construction) or randomly corrupted.
pub fn random_system(rng: &mut ChaCha8Rng, d: usize, corrupt: bool) -> MatchingSystem {
    let universe = rng.gen_range(3..=5usize);
    let observed: Vec<Vec<usize>> = (0..d)
        .map(|_| {
            (0..universe)
                .filter(|_| rng.gen_bool(0.8))
                .collect::<Vec<usize>>()
        })
        .collect();
    let mut matchings = BTreeMap::new();
    for a in 0..d {
        for b in (a + 1)..d {
            let pairs: Vec<(usize, usize)> = observed[a]
                .iter()
                .enumerate()
                .filter_map(|(i, la)| {
                    observed[b].iter().position(|lb| lb == la).map(|s| (i, s))
                })
                .collect();
            let mut m =
                Matching::new(pairs, observed[a].len(), observed[b].len()).unwrap();
            if corrupt && rng.gen_bool(0.5) && m.len() >= 2 {
                // swap two column targets
                let pairs: Vec<(usize, usize)> = m.pairs.iter().copied().collect();
                let x = rng.gen_range(0..pairs.len());
                let mut y = rng.gen_range(0..pairs.len() - 1);
                if y >= x {
                    y += 1;
                }
                let mut set = m.pairs.clone();
                set.remove(&pairs[x]);
                set.remove(&pairs[y]);
                set.insert((pairs[x].0, pairs[y].1));
                set.insert((pairs[y].0, pairs[x].1));
                m = Matching { pairs: set, n1: m.n1, n2: m.n2 };
            }
            matchings.insert((a, b), m);
        }
    }
    MatchingSystem::new(d, matchings).unwrap()
}

// ---- individual checks -----------------------------------------------------------

fn outcome(name: &'static str, failures: usize, total: usize) -> CheckReport {
    CheckReport {
        name,
        passed: failures == 0,
        detail: format!("{}/{total} cases ok", total - failures),
    }
}

fn check_lap_oracle(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 60;
    for _ in 0..total {
        let n = rng.gen_range(1..=6usize);
        let complete = rng.gen_bool(0.5);
        let unary: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let inst = QapInstance::unary_only(unary.clone(), complete).unwrap();
        let m = solve_lap_hungarian(&unary, complete).unwrap();
        let got = objective(&inst, &m).unwrap();
        let (_, want) = brute_force_optimum(&inst, 1e-9).unwrap();
        if (got - want).abs() > 1e-9 {
            failures += 1;
        }
    }
    outcome("lap_oracle", failures, total)
}

fn check_qap_oracle(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 60;
    for _ in 0..total {
        let inst = random_instance(rng, 5);
        let cfg = SolverConfig { kind: SolverKind::QapExact, ..Default::default() };
        let m = solve(&inst, &cfg).unwrap();
        let got = objective(&inst, &m).unwrap();
        let (_, want) = brute_force_optimum(&inst, 1e-9).unwrap();
        if (got - want).abs() > 1e-9 {
            failures += 1;
        }
    }
    outcome("qap_oracle", failures, total)
}

fn check_local_search(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 40;
    for _ in 0..total {
        let inst = random_instance(rng, 5);
        let cfg = SolverConfig { kind: SolverKind::QapLocal, ..Default::default() };
        let m = solve(&inst, &cfg).unwrap();
        let got = objective(&inst, &m).unwrap();
        let seed = solve_lap_hungarian(&inst.unary, inst.complete).unwrap();
        let seed_obj = objective(&inst, &seed).unwrap();
        if got > seed_obj + 1e-9 {
            failures += 1;
        }
    }
    outcome("local_search_seed_bound", failures, total)
}

fn check_cycle_oracle(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 100;
    for _ in 0..total {
        let t = random_triple(rng, 5);
        if total_loss(&t) != total_loss_reference(&t) {
            failures += 1;
            continue;
        }
        let mut ms = BTreeMap::new();
        ms.insert((0, 1), t.x12.clone());
        ms.insert((1, 2), t.x23.clone());
        ms.insert((0, 2), t.x31.transposed());
        let system = MatchingSystem::new(3, ms).unwrap();
        if (total_loss(&t) == 0) != is_cycle_consistent(&system).unwrap() {
            failures += 1;
        }
    }
    outcome("cycle_loss_oracle", failures, total)
}

fn check_gradient_table(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    // Fixed table: (x23, x31) in {(0,0),(1,0),(0,1),(1,1)} -> {0, 1, 1, -1}.
    for (b, c, want) in [
        (false, false, 0),
        (true, false, 1),
        (false, true, 1),
        (true, true, -1),
    ] {
        let got = partial_loss(true, b, c) - partial_loss(false, b, c);
        if got != want {
            failures += 1;
        }
    }
    // Multilinearity: gradient equals the flip difference of the total loss.
    let total = 20;
    for _ in 0..total {
        let t = random_triple(rng, 4);
        let (g12, _, _) = loss_gradient(&t);
        for i in 0..t.x12.n1 {
            for s in 0..t.x12.n2 {
                let mut on = t.clone();
                on.x12.pairs.insert((i, s));
                let mut off = t.clone();
                off.x12.pairs.remove(&(i, s));
                let diff = total_loss_reference(&on) - total_loss_reference(&off);
                if g12[i][s] != diff as f64 {
                    failures += 1;
                }
            }
        }
    }
    outcome("gradient_table", failures, total + 4)
}

fn check_blackbox(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 40;
    let lambda = 80.0;
    for _ in 0..total {
        let inst = random_instance(rng, 5);
        let cfg = SolverConfig { kind: SolverKind::QapExact, ..Default::default() };
        let x = solve(&inst, &cfg).unwrap();

        // zero-gradient fixpoint, bitwise
        let zero = LossGrad::zeros(inst.n1, inst.n2);
        let same = perturb_costs(&inst, &zero, lambda).unwrap();
        let bitwise = same
            .unary
            .iter()
            .flatten()
            .zip(inst.unary.iter().flatten())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !bitwise || solve(&same, &cfg).unwrap() != x {
            failures += 1;
            continue;
        }

        // range property under a random loss gradient
        let g = LossGrad {
            unary: (0..inst.n1)
                .map(|_| {
                    (0..inst.n2)
                        .map(|_| [-1.0, 0.0, 1.0, 2.0][rng.gen_range(0..4)])
                        .collect()
                })
                .collect(),
        };
        let pert = perturb_costs(&inst, &g, lambda).unwrap();
        let x_pert = solve(&pert, &cfg).unwrap();
        let cg = bb_gradient(
            &lift(&x, &inst).unwrap(),
            &lift(&x_pert, &pert).unwrap(),
            lambda,
        )
        .unwrap();
        let ok = cg
            .unary_grad
            .iter()
            .flatten()
            .chain(cg.pairwise_grad.values())
            .all(|&v| v == 0.0 || v == 1.0 / lambda || v == -1.0 / lambda);
        if !ok {
            failures += 1;
        }
    }
    outcome("blackbox_layer", failures, total)
}

fn check_gradcheck(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 10;
    for _ in 0..total {
        if gradcheck_case(rng, 1e-5).is_none() {
            failures += 1;
        }
    }
    outcome("cost_head_gradcheck", failures, total)
}

/// One random finite-difference comparison; returns None on failure.
pub fn gradcheck_case(rng: &mut ChaCha8Rng, rel_tol: f64) -> Option<f64> {
    let d = rng.gen_range(2..=4usize);
    let e = rng.gen_range(1..=4usize);
    let n1 = rng.gen_range(3..=4usize);
    let n2 = rng.gen_range(3..=4usize);
    let ks1 = random_keypoints(rng, "a", n1, d);
    let ks2 = random_keypoints(rng, "b", n2, d);
    let params = CostModelParams::init_random(d, e, rng.gen_range(-0.5..0.5), rng.gen());

    let template = build_instance(&ks1, &ks2, &params, false).ok()?;
    let cg = CostGradient {
        unary_grad: (0..n1)
            .map(|_| (0..n2).map(|_| rng.gen_range(-1.0..1.0f64)).collect())
            .collect(),
        pairwise_grad: template
            .pairwise
            .keys()
            .map(|&k| (k, rng.gen_range(-1.0..1.0)))
            .collect(),
    };

    let analytic = backward(&ks1, &ks2, &params, &cg).ok()?;

    // scalar objective F(params) = sum(cg .* costs(params))
    let f = |p: &CostModelParams| -> f64 {
        let inst = build_instance(&ks1, &ks2, p, false).unwrap();
        let mut total = 0.0;
        for (row, grow) in inst.unary.iter().zip(&cg.unary_grad) {
            for (c, g) in row.iter().zip(grow) {
                total += c * g;
            }
        }
        for (k, g) in &cg.pairwise_grad {
            total += inst.pairwise[k] * g;
        }
        total
    };

    let h = 1e-5;
    let mut fd_node = vec![vec![0.0; e]; d];
    let mut fd_edge = vec![vec![0.0; e]; d];
    for di in 0..d {
        for ei in 0..e {
            let mut plus = params.clone();
            plus.node_proj[di][ei] += h;
            let mut minus = params.clone();
            minus.node_proj[di][ei] -= h;
            fd_node[di][ei] = (f(&plus) - f(&minus)) / (2.0 * h);
            let mut plus = params.clone();
            plus.edge_proj[di][ei] += h;
            let mut minus = params.clone();
            minus.edge_proj[di][ei] -= h;
            fd_edge[di][ei] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    let mut plus = params.clone();
    plus.c_hat += h;
    let mut minus = params.clone();
    minus.c_hat -= h;
    let fd_chat = (f(&plus) - f(&minus)) / (2.0 * h);

    let mut num = 0.0;
    let mut den = 0.0;
    let mut acc = |a: f64, b: f64| {
        num += (a - b) * (a - b);
        den += b * b;
    };
    for di in 0..d {
        for ei in 0..e {
            acc(analytic.d_node_proj[di][ei], fd_node[di][ei]);
            acc(analytic.d_edge_proj[di][ei], fd_edge[di][ei]);
        }
    }
    acc(analytic.d_c_hat, fd_chat);
    let rel = (num.sqrt()) / den.sqrt().max(1e-12);
    (rel <= rel_tol).then_some(rel)
}

fn check_chat_monotonic(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 10;
    let sweep = [-1.0, -0.5, 0.0, 0.257, 0.5, 1.0];
    for _ in 0..total {
        let d = 4;
        let n1 = rng.gen_range(3..=5);
        let n2 = rng.gen_range(3..=5);
        let ks1 = random_keypoints(rng, "a", n1, d);
        let ks2 = random_keypoints(rng, "b", n2, d);
        let base = CostModelParams::init_random(d, 3, 0.0, rng.gen());
        let cfg = SolverConfig { kind: SolverKind::QapExact, ..Default::default() };
        let mut last = 0usize;
        for (idx, &c_hat) in sweep.iter().enumerate() {
            let params = CostModelParams { c_hat, ..base.clone() };
            let inst = build_instance(&ks1, &ks2, &params, false).unwrap();
            let m = solve(&inst, &cfg).unwrap();
            if idx > 0 && m.len() < last {
                failures += 1;
                break;
            }
            last = m.len();
        }
    }
    outcome("chat_monotonicity", failures, total)
}

fn check_triples_suffice(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 30;
    for i in 0..total {
        let d = if i % 2 == 0 { 4 } else { 5 };
        let system = random_system(rng, d, i % 3 == 0);
        let triples_ok = is_cycle_consistent(&system).unwrap();
        let chains_ok = chain_consistency_reference(&system).unwrap();
        if triples_ok != chains_ok {
            failures += 1;
        }
    }
    outcome("triples_suffice", failures, total)
}

fn check_delaunay(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut failures = 0;
    let total = 20;
    for _ in 0..total {
        let n = rng.gen_range(3..=10usize);
        let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
        let got = delaunay(&points).unwrap();
        if got.len() > 3 * n.saturating_sub(2) {
            failures += 1;
            continue;
        }
        if got != delaunay_reference(&points) {
            failures += 1;
        }
    }
    outcome("delaunay_oracle", failures, total)
}

/// Convenience wrapper asserting a pairwise key map matches its instance.
pub fn pairwise_keys_match(inst: &QapInstance, keys: &BTreeMap<PairKey, f64>) -> bool {
    keys.keys().all(|k| inst.pairwise.contains_key(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_enumeration_counts() {
        // Sum over k of C(3,k)^2 k! = 1 + 9 + 18 + 6 = 34 partial matchings.
        assert_eq!(enumerate_matchings(3, 3, false).len(), 34);
        assert_eq!(enumerate_matchings(3, 3, true).len(), 6);
        assert_eq!(enumerate_matchings(0, 2, false).len(), 1);
    }

    #[test]
    fn all_checks_pass_on_default_seed() {
        for report in run_all(0) {
            assert!(report.passed, "{}: {}", report.name, report.detail);
        }
    }

    #[test]
    fn checks_pass_on_other_seeds() {
        for seed in [1, 42] {
            for report in run_all(seed) {
                assert!(report.passed, "seed {seed} {}: {}", report.name, report.detail);
            }
        }
    }
}
