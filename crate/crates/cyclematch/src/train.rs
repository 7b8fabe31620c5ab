//! Unsupervised training loop: sample triples of sets, solve the three
//! pairwise matching problems, measure the discrete cycle loss, re-solve at
//! perturbed costs, assemble cost gradients and backpropagate into the cost
//! model, one optimizer step per batch.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{bb_gradient, perturb_costs, LossGrad};
use crate::cost::{
    adam_step, backward, build_instance, AdamConfig, AdamState, CostModelParams, ParamGradient,
};
use crate::cycle::{loss_gradient, total_loss, MatchingTriple};
use crate::data::{accuracy, common_labels, f1, Dataset};
use crate::error::{Error, Result};
use crate::instance::{lift, KeypointSet, QapInstance};
use crate::solver::{solve, solve_seeded, SolverConfig};

/// Minimum number of shared labels for a pair of sets to be used in
/// training triples or evaluation.
pub const MIN_COMMON_LABELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_triples: usize,
    /// Interpolation strength of the black-box gradient.
    pub lambda: f64,
    pub steps: usize,
    pub adam: AdamConfig,
    pub solver: SolverConfig,
    /// Evaluate every this many steps (0 disables periodic evaluation).
    pub eval_every: usize,
    /// Matching regime used for built instances and reported metrics.
    pub complete: bool,
    /// Backpropagate pairwise cost gradients from lifted-solution
    /// differences (edge parameters receive no signal otherwise).
    pub pairwise_gradients: bool,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_triples: 12,
            lambda: 80.0,
            steps: 500,
            adam: AdamConfig::default(),
            solver: SolverConfig::default(),
            eval_every: 0,
            complete: false,
            pairwise_gradients: true,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_triples == 0 {
            return Err(Error::Config("batch_triples must be >= 1".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub cycle_loss: f64,
    /// Mean accuracy (complete regime) or F1 (incomplete), on eval steps.
    pub metric: Option<f64>,
    pub solver_calls: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
}

impl TrainReport {
    /// CSV with the resolved configuration embedded as `# key=value` header
    /// lines for provenance.
    pub fn to_csv(&self, config_lines: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in config_lines {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str("step,cycle_loss,accuracy_or_f1,solver_calls,wall_ms\n");
        for r in &self.records {
            let metric = r.metric.map(|m| format!("{m}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.cycle_loss, metric, r.solver_calls, r.wall_ms
            ));
        }
        out
    }

    pub fn mean_cycle_loss(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.records[range];
        slice.iter().map(|r| r.cycle_loss).sum::<f64>() / slice.len().max(1) as f64
    }
}

/// Unordered triples of distinct sets whose three pairs each share at least
/// [`MIN_COMMON_LABELS`] labels. Unlabeled datasets admit all triples.
pub fn admissible_triples(ds: &Dataset) -> Result<Vec<(usize, usize, usize)>> {
    let n = ds.sets.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "need at least 3 sets to form triples, got {n}"
        )));
    }
    let labeled = ds.sets.iter().all(|ks| ks.universe_labels.is_some());
    let mut pair_ok = vec![vec![true; n]; n];
    if labeled {
        for a in 0..n {
            for b in (a + 1)..n {
                let ok = common_labels(&ds.sets[a], &ds.sets[b])? >= MIN_COMMON_LABELS;
                pair_ok[a][b] = ok;
                pair_ok[b][a] = ok;
            }
        }
    }
    let mut triples = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if !pair_ok[a][b] {
                continue;
            }
            for c in (b + 1)..n {
                if pair_ok[a][c] && pair_ok[b][c] {
                    triples.push((a, b, c));
                }
            }
        }
    }
    if triples.is_empty() {
        return Err(Error::Config(
            "no admissible triple: no 3 sets share enough labels pairwise".into(),
        ));
    }
    Ok(triples)
}

/// Uniform sample among admissible triples.
pub fn sample_triple(ds: &Dataset, rng: &mut ChaCha8Rng) -> Result<(usize, usize, usize)> {
    let triples = admissible_triples(ds)?;
    Ok(triples[rng.gen_range(0..triples.len())])
}

/// Samples a batch; triples are distinct within the batch when enough
/// admissible triples exist.
fn sample_batch(
    triples: &[(usize, usize, usize)],
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize, usize)> {
    if triples.len() >= batch {
        rand::seq::index::sample(rng, triples.len(), batch)
            .into_iter()
            .map(|i| triples[i])
            .collect()
    } else {
        (0..batch).map(|_| triples[rng.gen_range(0..triples.len())]).collect()
    }
}

pub struct StepMetrics {
    pub mean_cycle_loss: f64,
    pub solver_calls: usize,
}

/// One batch step: accumulates gradients over the batch (fixed reduction
/// order, so results do not depend on worker scheduling) and applies a
/// single Adam update. Exactly six solver calls per triple.
pub fn train_step(
    ds: &Dataset,
    batch: &[(usize, usize, usize)],
    params: &mut CostModelParams,
    adam: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<StepMetrics> {
    cfg.validate()?;
    let results: Vec<Result<(ParamGradient, i64)>> = batch
        .par_iter()
        .map(|&(a, b, c)| triple_gradient(&ds.sets[a], &ds.sets[b], &ds.sets[c], params, cfg))
        .collect();

    let mut total = ParamGradient::zeros(params.feature_dim(), params.embed_dim());
    let mut loss_sum = 0i64;
    for r in results {
        let (g, loss) = r?;
        total.add_assign(&g);
        loss_sum += loss;
    }
    adam_step(params, &total, adam);
    Ok(StepMetrics {
        mean_cycle_loss: loss_sum as f64 / batch.len() as f64,
        solver_calls: 6 * batch.len(),
    })
}

/// Forward solves, cycle loss, perturbed solves, black-box gradients and the
/// chain rule for one triple of sets.
fn triple_gradient(
    ka: &KeypointSet,
    kb: &KeypointSet,
    kc: &KeypointSet,
    params: &CostModelParams,
    cfg: &TrainConfig,
) -> Result<(ParamGradient, i64)> {
    let inst12 = build_instance(ka, kb, params, cfg.complete)?;
    let inst23 = build_instance(kb, kc, params, cfg.complete)?;
    let inst31 = build_instance(kc, ka, params, cfg.complete)?;

    let x12 = solve(&inst12, &cfg.solver)?;
    let x23 = solve(&inst23, &cfg.solver)?;
    let x31 = solve(&inst31, &cfg.solver)?;

    let triple = MatchingTriple::new(x12, x23, x31)?;
    let loss = total_loss(&triple);
    let (g12, g23, g31) = loss_gradient(&triple);

    let mut grad = ParamGradient::zeros(params.feature_dim(), params.embed_dim());
    for (inst, x, g, (ks_from, ks_to)) in [
        (&inst12, &triple.x12, g12, (ka, kb)),
        (&inst23, &triple.x23, g23, (kb, kc)),
        (&inst31, &triple.x31, g31, (kc, ka)),
    ] {
        let perturbed = perturb_costs(inst, &LossGrad { unary: g }, cfg.lambda)?;
        let x_pert = solve_seeded(&perturbed, &cfg.solver, Some(x))?;
        let lifted = lift(x, inst)?;
        let lifted_pert = lift(&x_pert, &perturbed)?;
        let mut cg = bb_gradient(&lifted, &lifted_pert, cfg.lambda)?;
        if !cfg.pairwise_gradients {
            cg.pairwise_grad.clear();
        }
        grad.add_assign(&backward(ks_from, ks_to, params, &cg)?);
    }
    Ok((grad, loss))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMetric {
    pub set_a: usize,
    pub set_b: usize,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub mean_accuracy: f64,
    pub mean_f1: f64,
    pub mean_cycle_loss: f64,
    pub pairs: Vec<PairMetric>,
}

/// Mean accuracy and F1 over all admissible set pairs, plus the mean cycle
/// loss over up to `max_triples` admissible triples. Requires labels.
pub fn evaluate(
    ds: &Dataset,
    params: &CostModelParams,
    solver: &SolverConfig,
    complete: bool,
    max_triples: usize,
) -> Result<EvalSummary> {
    if ds.sets.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    if ds.sets.iter().any(|ks| ks.universe_labels.is_none()) {
        return Err(Error::MissingLabels("evaluation requires labels".into()));
    }
    let n = ds.sets.len();
    let mut admissible_pairs = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if common_labels(&ds.sets[a], &ds.sets[b])? >= MIN_COMMON_LABELS {
                admissible_pairs.push((a, b));
            }
        }
    }
    if admissible_pairs.is_empty() {
        return Err(Error::Config("no admissible pair shares enough labels".into()));
    }

    let pairs: Vec<Result<PairMetric>> = admissible_pairs
        .par_iter()
        .map(|&(a, b)| {
            let inst = build_instance(&ds.sets[a], &ds.sets[b], params, complete)?;
            let m = solve(&inst, solver)?;
            Ok(PairMetric {
                set_a: a,
                set_b: b,
                accuracy: accuracy(&m, &ds.sets[a], &ds.sets[b])?,
                f1: f1(&m, &ds.sets[a], &ds.sets[b])?,
            })
        })
        .collect();
    let pairs: Vec<PairMetric> = pairs.into_iter().collect::<Result<_>>()?;

    let triples = admissible_triples(ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e7a1);
    let chosen: Vec<(usize, usize, usize)> = if triples.len() <= max_triples {
        triples
    } else {
        rand::seq::index::sample(&mut rng, triples.len(), max_triples)
            .into_iter()
            .map(|i| triples[i])
            .collect()
    };
    let losses: Vec<Result<i64>> = chosen
        .par_iter()
        .map(|&(a, b, c)| {
            let t = solve_triple(ds, (a, b, c), params, solver, complete)?;
            Ok(total_loss(&t))
        })
        .collect();
    let mut loss_sum = 0i64;
    let count = losses.len();
    for l in losses {
        loss_sum += l?;
    }

    Ok(EvalSummary {
        mean_accuracy: mean(pairs.iter().map(|p| p.accuracy)),
        mean_f1: mean(pairs.iter().map(|p| p.f1)),
        mean_cycle_loss: loss_sum as f64 / count.max(1) as f64,
        pairs,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    sum / count.max(1) as f64
}

fn solve_triple(
    ds: &Dataset,
    (a, b, c): (usize, usize, usize),
    params: &CostModelParams,
    solver: &SolverConfig,
    complete: bool,
) -> Result<MatchingTriple> {
    let x12 = solve(&build_instance(&ds.sets[a], &ds.sets[b], params, complete)?, solver)?;
    let x23 = solve(&build_instance(&ds.sets[b], &ds.sets[c], params, complete)?, solver)?;
    let x31 = solve(&build_instance(&ds.sets[c], &ds.sets[a], params, complete)?, solver)?;
    MatchingTriple::new(x12, x23, x31)
}

/// Full training run: a pure function of (dataset, initial parameters,
/// config). Returns the trained parameters and the per-step report.
pub fn train(
    ds: &Dataset,
    init: CostModelParams,
    cfg: &TrainConfig,
) -> Result<(CostModelParams, TrainReport)> {
    cfg.validate()?;
    let triples = admissible_triples(ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut params = init;
    let mut adam = AdamState::new(params.feature_dim(), params.embed_dim(), cfg.adam);
    let mut report = TrainReport::default();

    for step in 0..cfg.steps {
        let start = Instant::now();
        let batch = sample_batch(&triples, cfg.batch_triples, &mut rng);
        let metrics = train_step(ds, &batch, &mut params, &mut adam, cfg)?;
        let metric = if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            let summary = evaluate(ds, &params, &cfg.solver, cfg.complete, 100)?;
            Some(if cfg.complete { summary.mean_accuracy } else { summary.mean_f1 })
        } else {
            None
        };
        report.records.push(StepRecord {
            step,
            cycle_loss: metrics.mean_cycle_loss,
            metric,
            solver_calls: metrics.solver_calls,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok((params, report))
}

/// Parameters that make the exact matching of labeled data trivially
/// recoverable: unary cost -1 on true pairs, +1 otherwise. Used as an oracle
/// in tests and the verification command.
pub fn oracle_instance(
    ks1: &KeypointSet,
    ks2: &KeypointSet,
    complete: bool,
) -> Result<QapInstance> {
    let (l1, l2) = match (&ks1.universe_labels, &ks2.universe_labels) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::MissingLabels("oracle costs need labels".into())),
    };
    let unary = l1
        .iter()
        .map(|a| {
            l2.iter()
                .map(|b| match (a, b) {
                    (Some(x), Some(y)) if x == y => -1.0,
                    _ => 1.0,
                })
                .collect()
        })
        .collect();
    QapInstance::unary_only(unary, complete)
}
