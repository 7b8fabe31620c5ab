//! Local search for QAP instances: hill climbing from a LAP seed with
//! reassign / swap / toggle moves and multi-restart from perturbed seeds.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::instance::{Matching, QapInstance};
use crate::solver::{solve_lap_hungarian, SolverConfig};

/// Approximate QAP solver. The result is never worse than its LAP-on-unary
/// seed and is deterministic given the configured seed.
pub fn solve_qap_local(inst: &QapInstance, cfg: &SolverConfig) -> Result<Matching> {
    solve_qap_local_seeded(inst, cfg, None)
}

/// Variant that also hill-climbs from a caller-provided warm start (the LAP
/// seed is still always included).
pub fn solve_qap_local_seeded(
    inst: &QapInstance,
    cfg: &SolverConfig,
    warm: Option<&Matching>,
) -> Result<Matching> {
    let tol = cfg.tolerance;
    let lap_seed = solve_lap_hungarian(&inst.unary, inst.complete)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.local_search.rng_seed);

    let mut starts: Vec<Matching> = Vec::new();
    if let Some(w) = warm {
        starts.push(w.clone());
    }
    starts.push(lap_seed.clone());
    for _ in 1..cfg.local_search.restarts.max(1) {
        starts.push(perturb(inst, &lap_seed, &mut rng));
    }

    let mut best: Option<(f64, Matching)> = None;
    for start in starts {
        let (m, obj) = hill_climb(inst, start, cfg.local_search.max_passes, tol, None);
        best = Some(match best {
            None => (obj, m),
            Some((bo, bm)) => {
                if obj < bo - tol || (obj <= bo + tol && m.pairs < bm.pairs) {
                    (bo.min(obj), m)
                } else {
                    (bo, bm)
                }
            }
        });
    }
    Ok(best.expect("at least one start").1)
}

/// First-improvement hill climb over the move set; each pass scans moves in
/// a fixed order and applies the first improving one. Returns the local
/// optimum and its objective. `trace`, when given, records accepted deltas.
fn hill_climb(
    inst: &QapInstance,
    start: Matching,
    max_passes: usize,
    tol: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> (Matching, f64) {
    let mut state = State::new(inst, &start);
    for _ in 0..max_passes {
        match state.first_improving_move(tol) {
            Some((delta, mv)) => {
                state.apply(mv, delta);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(delta);
                }
            }
            None => break,
        }
    }
    let obj = state.obj;
    (state.into_matching(), obj)
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Reassign { i: usize, to: usize },
    Swap { i1: usize, i2: usize },
    Unassign { i: usize },
    Assign { i: usize, s: usize },
}

struct State<'a> {
    inst: &'a QapInstance,
    fwd: Vec<Option<usize>>,
    col_used: Vec<bool>,
    obj: f64,
}

impl<'a> State<'a> {
    fn new(inst: &'a QapInstance, m: &Matching) -> Self {
        let fwd = m.forward();
        let mut col_used = vec![false; inst.n2];
        for s in fwd.iter().flatten() {
            col_used[*s] = true;
        }
        let obj = crate::instance::objective(inst, m).expect("valid start");
        Self { inst, fwd, col_used, obj }
    }

    fn into_matching(&self) -> Matching {
        let pairs = self
            .fwd
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s)));
        Matching::new(pairs, self.inst.n1, self.inst.n2).expect("valid state")
    }

    /// Scans moves in a fixed order and returns the first with delta < -tol.
    fn first_improving_move(&self, tol: f64) -> Option<(f64, Move)> {
        let n1 = self.inst.n1;
        let n2 = self.inst.n2;
        // (a) reassign an assigned node to a free column
        for i in 0..n1 {
            if let Some(s_old) = self.fwd[i] {
                for s_new in 0..n2 {
                    if !self.col_used[s_new] {
                        let delta = self.contribution(i, s_new, &[i])
                            - self.contribution(i, s_old, &[i]);
                        if delta < -tol {
                            return Some((delta, Move::Reassign { i, to: s_new }));
                        }
                    }
                }
            }
        }
        // (b) swap the columns of two assigned nodes
        for i1 in 0..n1 {
            let Some(s1) = self.fwd[i1] else { continue };
            for i2 in (i1 + 1)..n1 {
                let Some(s2) = self.fwd[i2] else { continue };
                let excl = [i1, i2];
                let before = self.contribution(i1, s1, &excl)
                    + self.contribution(i2, s2, &excl)
                    + self.pair_between(i1, s1, i2, s2);
                let after = self.contribution(i1, s2, &excl)
                    + self.contribution(i2, s1, &excl)
                    + self.pair_between(i1, s2, i2, s1);
                let delta = after - before;
                if delta < -tol {
                    return Some((delta, Move::Swap { i1, i2 }));
                }
            }
        }
        // (c) toggle assignment state (incomplete only)
        if !self.inst.complete {
            for i in 0..n1 {
                match self.fwd[i] {
                    Some(s) => {
                        let delta = -self.contribution(i, s, &[i]);
                        if delta < -tol {
                            return Some((delta, Move::Unassign { i }));
                        }
                    }
                    None => {
                        for s in 0..n2 {
                            if !self.col_used[s] {
                                let delta = self.contribution(i, s, &[i]);
                                if delta < -tol {
                                    return Some((delta, Move::Assign { i, s }));
                                }
                            }
                        }
                    }
                }
            }
        }
        None
    }

    fn apply(&mut self, mv: Move, delta: f64) {
        match mv {
            Move::Reassign { i, to } => {
                let old = self.fwd[i].expect("reassign of assigned node");
                self.col_used[old] = false;
                self.col_used[to] = true;
                self.fwd[i] = Some(to);
            }
            Move::Swap { i1, i2 } => {
                let (s1, s2) = (self.fwd[i1].unwrap(), self.fwd[i2].unwrap());
                self.fwd[i1] = Some(s2);
                self.fwd[i2] = Some(s1);
            }
            Move::Unassign { i } => {
                let s = self.fwd[i].take().expect("unassign of assigned node");
                self.col_used[s] = false;
            }
            Move::Assign { i, s } => {
                self.fwd[i] = Some(s);
                self.col_used[s] = true;
            }
        }
        self.obj += delta;
    }

    /// Cost of having `i -> s` given the other current assignments,
    /// excluding rows listed in `excl`.
    fn contribution(&self, i: usize, s: usize, excl: &[usize]) -> f64 {
        let mut total = self.inst.unary[i][s];
        for (j, l) in self.fwd.iter().enumerate() {
            if j == i || excl.contains(&j) {
                continue;
            }
            if let Some(l) = l {
                total += self.pair_between(i, s, j, *l);
            }
        }
        total
    }

    fn pair_between(&self, i: usize, s: usize, j: usize, l: usize) -> f64 {
        let key = if i < j { ((i, j), (s, l)) } else { ((j, i), (l, s)) };
        self.inst.pairwise.get(&key).copied().unwrap_or(0.0)
    }
}

/// Randomly mutates a seed matching to start another climb elsewhere.
fn perturb(inst: &QapInstance, seed: &Matching, rng: &mut ChaCha8Rng) -> Matching {
    let mut fwd = seed.forward();
    let mut col_used = vec![false; inst.n2];
    for s in fwd.iter().flatten() {
        col_used[*s] = true;
    }
    let mutations = inst.n1 / 2 + 1;
    for _ in 0..mutations {
        if inst.n1 == 0 || inst.n2 == 0 {
            break;
        }
        let i = rng.gen_range(0..inst.n1);
        match fwd[i] {
            Some(s) if !inst.complete && rng.gen_bool(0.5) => {
                fwd[i] = None;
                col_used[s] = false;
            }
            _ => {
                let free: Vec<usize> = (0..inst.n2).filter(|&s| !col_used[s]).collect();
                if let Some(&s_new) = free.as_slice().choose(rng) {
                    if let Some(s_old) = fwd[i] {
                        col_used[s_old] = false;
                    }
                    fwd[i] = Some(s_new);
                    col_used[s_new] = true;
                }
            }
        }
    }
    let pairs = fwd.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s)));
    Matching::new(pairs, inst.n1, inst.n2).expect("perturbation stays feasible")
}

#[cfg(test)]
pub(crate) fn hill_climb_traced(
    inst: &QapInstance,
    start: Matching,
    max_passes: usize,
    tol: f64,
) -> (Matching, f64, Vec<f64>) {
    let mut deltas = Vec::new();
    let (m, obj) = hill_climb(inst, start, max_passes, tol, Some(&mut deltas));
    (m, obj, deltas)
}
