//! LAP and QAP solvers behind one interface, usable as interchangeable
//! black boxes: each maps an instance to a matching minimizing the total
//! cost over the feasible set.

mod exact;
mod hungarian;
mod local;

pub use exact::solve_qap_exact;
pub use hungarian::solve_lap_hungarian;
pub use local::solve_qap_local;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Matching, QapInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Lap,
    QapExact,
    QapLocal,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lap" => Ok(Self::Lap),
            "qap_exact" => Ok(Self::QapExact),
            "qap_local" => Ok(Self::QapLocal),
            other => Err(Error::Config(format!(
                "unknown solver kind '{other}' (expected lap, qap_exact or qap_local)"
            ))),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Lap => "lap",
            Self::QapExact => "qap_exact",
            Self::QapLocal => "qap_local",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchConfig {
    /// Upper bound on improvement passes per hill climb.
    pub max_passes: usize,
    /// Number of starting points (the first is the LAP seed, the rest
    /// are random perturbations of it).
    pub restarts: usize,
    pub rng_seed: u64,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self { max_passes: 200, restarts: 2, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Size guard for the exact solver.
    pub node_limit: usize,
    pub local_search: LocalSearchConfig,
    /// Absolute tolerance for objective comparisons.
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Lap,
            node_limit: 8,
            local_search: LocalSearchConfig::default(),
            tolerance: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_limit == 0 {
            return Err(Error::Config("node_limit must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Solves an instance with the configured solver. Output depends only on
/// `(inst, cfg)`; solvers keep no state across calls.
pub fn solve(inst: &QapInstance, cfg: &SolverConfig) -> Result<Matching> {
    solve_seeded(inst, cfg, None)
}

/// Like [`solve`], but allows warm-starting the local search from a known
/// matching (ignored by the other solver kinds).
pub fn solve_seeded(
    inst: &QapInstance,
    cfg: &SolverConfig,
    warm: Option<&Matching>,
) -> Result<Matching> {
    cfg.validate()?;
    if inst.complete && inst.n1 != inst.n2 {
        return Err(Error::Infeasible(format!(
            "complete matching requires equal sides, got {} x {}",
            inst.n1, inst.n2
        )));
    }
    match cfg.kind {
        SolverKind::Lap => solve_lap_hungarian(&inst.unary, inst.complete),
        SolverKind::QapExact => solve_qap_exact(inst, cfg.node_limit, cfg.tolerance),
        SolverKind::QapLocal => local::solve_qap_local_seeded(inst, cfg, warm),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::objective;
    use std::collections::BTreeMap;

    #[test]
    fn solve_dispatches_lap() {
        let inst =
            QapInstance::unary_only(vec![vec![0.0, 1.0], vec![1.0, 0.0]], true).unwrap();
        let cfg = SolverConfig { kind: SolverKind::Lap, ..Default::default() };
        let m = solve(&inst, &cfg).unwrap();
        assert_eq!(m.pairs.iter().copied().collect::<Vec<_>>(), vec![(0, 0), (1, 1)]);
        assert_eq!(objective(&inst, &m).unwrap(), 0.0);
    }

    #[test]
    fn complete_rectangular_is_infeasible() {
        let inst = QapInstance::unary_only(vec![vec![1.0, 2.0]], true).unwrap();
        for kind in [SolverKind::Lap, SolverKind::QapExact, SolverKind::QapLocal] {
            let cfg = SolverConfig { kind, ..Default::default() };
            assert!(matches!(solve(&inst, &cfg), Err(Error::Infeasible(_))));
        }
    }

    #[test]
    fn unary_only_exact_matches_lap_objective() {
        let unary = vec![
            vec![0.3, -0.2, 0.9],
            vec![-0.5, 0.1, 0.4],
            vec![0.2, 0.8, -0.7],
        ];
        let inst = QapInstance::unary_only(unary, false).unwrap();
        let lap = solve(&inst, &SolverConfig { kind: SolverKind::Lap, ..Default::default() })
            .unwrap();
        let exact = solve(
            &inst,
            &SolverConfig { kind: SolverKind::QapExact, ..Default::default() },
        )
        .unwrap();
        let (a, b) = (
            objective(&inst, &lap).unwrap(),
            objective(&inst, &exact).unwrap(),
        );
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }

    #[test]
    fn solver_output_depends_only_on_inputs() {
        let mut pw = BTreeMap::new();
        pw.insert(((0, 1), (0, 1)), -0.4);
        pw.insert(((0, 1), (1, 0)), 0.7);
        let inst =
            QapInstance::new(vec![vec![0.1, -0.3], vec![0.2, -0.1]], pw, false).unwrap();
        let cfg = SolverConfig { kind: SolverKind::QapLocal, ..Default::default() };
        let first = solve(&inst, &cfg).unwrap();
        for _ in 0..3 {
            assert_eq!(solve(&inst, &cfg).unwrap(), first);
        }
    }
}
