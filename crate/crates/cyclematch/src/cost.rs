//! Differentiable cost head: learnable linear projections from keypoint
//! features to node and edge embeddings, cosine-similarity costs with an
//! assignment offset, the exact analytic backward pass, and Adam updates.
//!
//! Sign convention: the solvers minimize, so similarities are negated when
//! instances are built. Unary costs are `-(cos(z1_i, z2_s) + c_hat)`: raising
//! `c_hat` lowers every unary cost, which makes the solver assign more pairs
//! (fewer unassigned points). Edge costs are `-cos(w1_ij, w2_sl)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blackbox::CostGradient;
use crate::error::{Error, Result};
use crate::hexfloat::{self, HexF64};
use crate::instance::{KeypointSet, QapInstance};

const NORM_EPS: f64 = 1e-12;

/// Learnable parameters, shared across all keypoint sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModelParams {
    /// `D x E` projection applied to node features.
    pub node_proj: Vec<Vec<f64>>,
    /// `D x E` projection applied to edge feature differences.
    pub edge_proj: Vec<Vec<f64>>,
    /// Assignment offset; larger values decrease the number of unassigned points.
    pub c_hat: f64,
}

impl CostModelParams {
    pub fn feature_dim(&self) -> usize {
        self.node_proj.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.node_proj.first().map_or(0, Vec::len)
    }

    /// Random initialization, deterministic in the seed.
    pub fn init_random(feature_dim: usize, embed_dim: usize, c_hat: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (feature_dim as f64).sqrt();
        let mut sample = |d: usize, e: usize| -> Vec<Vec<f64>> {
            (0..d)
                .map(|_| {
                    (0..e)
                        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        };
        Self {
            node_proj: sample(feature_dim, embed_dim),
            edge_proj: sample(feature_dim, embed_dim),
            c_hat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, e) = (self.feature_dim(), self.embed_dim());
        if d == 0 || e == 0 {
            return Err(Error::Config("projection matrices must be non-empty".into()));
        }
        let ragged = self.node_proj.iter().any(|r| r.len() != e)
            || self.edge_proj.len() != d
            || self.edge_proj.iter().any(|r| r.len() != e);
        if ragged {
            return Err(Error::ShapeMismatch("ragged projection matrices".into()));
        }
        let finite = self
            .node_proj
            .iter()
            .chain(&self.edge_proj)
            .flatten()
            .all(|v| v.is_finite())
            && self.c_hat.is_finite();
        if !finite {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Node and edge embeddings of one keypoint set (unnormalized). Edge entries
/// align with the set's canonical `i < j` edge list.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub nodes: Vec<Vec<f64>>,
    pub edges: Vec<Vec<f64>>,
}

/// Projects features to node embeddings and edge-difference embeddings:
/// `z_i = node_proj^T f_i` and `w_ij = edge_proj^T (f_i - f_j)`.
pub fn embed(ks: &KeypointSet, params: &CostModelParams) -> Result<Embeddings> {
    let d = params.feature_dim();
    if ks.feature_dim() != d && !ks.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "set {} has feature dim {} but parameters expect {}",
            ks.set_id,
            ks.feature_dim(),
            d
        )));
    }
    let nodes = ks.features.iter().map(|f| project(f, &params.node_proj)).collect();
    let edges = ks
        .edges
        .iter()
        .map(|&(i, j)| {
            let diff = sub(&ks.features[i], &ks.features[j]);
            project(&diff, &params.edge_proj)
        })
        .collect();
    Ok(Embeddings { nodes, edges })
}

/// Builds the matching instance for a pair of keypoint sets: negated cosine
/// similarities of normalized embeddings, with the `c_hat` offset on unary
/// costs and both orientations of each edge pair as separate keys.
pub fn build_instance(
    ks1: &KeypointSet,
    ks2: &KeypointSet,
    params: &CostModelParams,
    complete: bool,
) -> Result<QapInstance> {
    let e1 = embed(ks1, params)?;
    let e2 = embed(ks2, params)?;
    let z1: Vec<Vec<f64>> = e1.nodes.iter().map(|z| normalize(z)).collect();
    let z2: Vec<Vec<f64>> = e2.nodes.iter().map(|z| normalize(z)).collect();
    let w1: Vec<Vec<f64>> = e1.edges.iter().map(|w| normalize(w)).collect();
    let w2: Vec<Vec<f64>> = e2.edges.iter().map(|w| normalize(w)).collect();

    let unary = z1
        .iter()
        .map(|zi| z2.iter().map(|zs| -(dot(zi, zs) + params.c_hat)).collect())
        .collect();

    let mut pairwise = BTreeMap::new();
    for (&(i, j), wij) in ks1.edges.iter().zip(&w1) {
        for (&(s, l), wsl) in ks2.edges.iter().zip(&w2) {
            let sim = dot(wij, wsl);
            // (i -> s, j -> l) sees the stored orientation; (i -> l, j -> s)
            // sees the reversed second edge, which flips the sign.
            pairwise.insert(((i, j), (s, l)), -sim);
            pairwise.insert(((i, j), (l, s)), sim);
        }
    }
    QapInstance::new(unary, pairwise, complete)
}

/// Gradients of a scalar loss with respect to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub d_node_proj: Vec<Vec<f64>>,
    pub d_edge_proj: Vec<Vec<f64>>,
    pub d_c_hat: f64,
}

impl ParamGradient {
    pub fn zeros(feature_dim: usize, embed_dim: usize) -> Self {
        Self {
            d_node_proj: vec![vec![0.0; embed_dim]; feature_dim],
            d_edge_proj: vec![vec![0.0; embed_dim]; feature_dim],
            d_c_hat: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &ParamGradient) {
        for (a, b) in self.d_node_proj.iter_mut().flatten().zip(other.d_node_proj.iter().flatten())
        {
            *a += *b;
        }
        for (a, b) in self.d_edge_proj.iter_mut().flatten().zip(other.d_edge_proj.iter().flatten())
        {
            *a += *b;
        }
        self.d_c_hat += other.d_c_hat;
    }

    pub fn is_zero(&self) -> bool {
        self.d_c_hat == 0.0
            && self.d_node_proj.iter().flatten().all(|&g| g == 0.0)
            && self.d_edge_proj.iter().flatten().all(|&g| g == 0.0)
    }
}

/// Exact chain rule from a cost gradient back to the parameters, through the
/// negation, the normalized inner products, the feature differences and the
/// linear projections.
pub fn backward(
    ks1: &KeypointSet,
    ks2: &KeypointSet,
    params: &CostModelParams,
    cg: &CostGradient,
) -> Result<ParamGradient> {
    let (d, e) = (params.feature_dim(), params.embed_dim());
    if cg.unary_grad.len() != ks1.len()
        || cg.unary_grad.iter().any(|row| row.len() != ks2.len())
    {
        return Err(Error::ShapeMismatch(format!(
            "cost gradient is {} x {} but sets have {} and {} points",
            cg.unary_grad.len(),
            cg.unary_grad.first().map_or(0, Vec::len),
            ks1.len(),
            ks2.len()
        )));
    }

    let emb1 = embed(ks1, params)?;
    let emb2 = embed(ks2, params)?;
    let z1: Vec<Vec<f64>> = emb1.nodes.iter().map(|z| normalize(z)).collect();
    let z2: Vec<Vec<f64>> = emb2.nodes.iter().map(|z| normalize(z)).collect();
    let w1: Vec<Vec<f64>> = emb1.edges.iter().map(|w| normalize(w)).collect();
    let w2: Vec<Vec<f64>> = emb2.edges.iter().map(|w| normalize(w)).collect();

    let mut grad = ParamGradient::zeros(d, e);

    // Unary path: c_is = -(<z1_i, z2_s> + c_hat).
    let mut d_z1_hat = vec![vec![0.0; e]; ks1.len()];
    let mut d_z2_hat = vec![vec![0.0; e]; ks2.len()];
    for (i, row) in cg.unary_grad.iter().enumerate() {
        for (s, &g) in row.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let d_sim = -g;
            axpy(&mut d_z1_hat[i], d_sim, &z2[s]);
            axpy(&mut d_z2_hat[s], d_sim, &z1[i]);
            grad.d_c_hat -= g;
        }
    }
    for (i, g_hat) in d_z1_hat.iter().enumerate() {
        let dz = normalize_backward(&emb1.nodes[i], g_hat);
        outer_add(&mut grad.d_node_proj, &ks1.features[i], &dz);
    }
    for (s, g_hat) in d_z2_hat.iter().enumerate() {
        let dz = normalize_backward(&emb2.nodes[s], g_hat);
        outer_add(&mut grad.d_node_proj, &ks2.features[s], &dz);
    }

    // Pairwise path: every key maps to the canonical edge embeddings with a
    // sign for the orientation of the second edge.
    let edge_index2: BTreeMap<(usize, usize), usize> =
        ks2.edges.iter().copied().enumerate().map(|(idx, e)| (e, idx)).collect();
    let edge_index1: BTreeMap<(usize, usize), usize> =
        ks1.edges.iter().copied().enumerate().map(|(idx, e)| (e, idx)).collect();
    let mut d_w1_hat = vec![vec![0.0; e]; ks1.edges.len()];
    let mut d_w2_hat = vec![vec![0.0; e]; ks2.edges.len()];
    for (&((i, j), (s, l)), &g) in &cg.pairwise_grad {
        if g == 0.0 {
            continue;
        }
        let &e1 = edge_index1.get(&(i, j)).ok_or_else(|| {
            Error::ShapeMismatch(format!("gradient key edge ({i},{j}) missing in set 1"))
        })?;
        let (canon2, sign) = if s < l { ((s, l), 1.0) } else { ((l, s), -1.0) };
        let &e2 = edge_index2.get(&canon2).ok_or_else(|| {
            Error::ShapeMismatch(format!("gradient key edge ({s},{l}) missing in set 2"))
        })?;
        // cost = -sign * cos(w1_e1, w2_e2)
        let d_sim = -sign * g;
        axpy(&mut d_w1_hat[e1], d_sim, &w2[e2]);
        axpy(&mut d_w2_hat[e2], d_sim, &w1[e1]);
    }
    for (idx, g_hat) in d_w1_hat.iter().enumerate() {
        let dw = normalize_backward(&emb1.edges[idx], g_hat);
        let (i, j) = ks1.edges[idx];
        let diff = sub(&ks1.features[i], &ks1.features[j]);
        outer_add(&mut grad.d_edge_proj, &diff, &dw);
    }
    for (idx, g_hat) in d_w2_hat.iter().enumerate() {
        let dw = normalize_backward(&emb2.edges[idx], g_hat);
        let (s, l) = ks2.edges[idx];
        let diff = sub(&ks2.features[s], &ks2.features[l]);
        outer_add(&mut grad.d_edge_proj, &diff, &dw);
    }

    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps between halvings of the learning rate (0 disables the schedule).
    pub lr_halving_period: usize,
    /// Whether the offset c_hat is learned or kept fixed.
    pub update_c_hat: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_halving_period: 200,
            update_c_hat: false,
        }
    }
}

/// First/second moment accumulators mirroring the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m_node: Vec<Vec<f64>>,
    v_node: Vec<Vec<f64>>,
    m_edge: Vec<Vec<f64>>,
    v_edge: Vec<Vec<f64>>,
    m_c_hat: f64,
    v_c_hat: f64,
}

impl AdamState {
    pub fn new(feature_dim: usize, embed_dim: usize, config: AdamConfig) -> Self {
        let zeros = || vec![vec![0.0; embed_dim]; feature_dim];
        Self {
            config,
            step: 0,
            m_node: zeros(),
            v_node: zeros(),
            m_edge: zeros(),
            v_edge: zeros(),
            m_c_hat: 0.0,
            v_c_hat: 0.0,
        }
    }

    /// Learning rate in effect for the next step, after scheduled halvings.
    pub fn effective_lr(&self) -> f64 {
        let halvings = if self.config.lr_halving_period == 0 {
            0
        } else {
            self.step / self.config.lr_halving_period as u64
        };
        self.config.lr * 0.5f64.powi(halvings as i32)
    }
}

/// One Adam update. The moments and step counter live in `state`; parameters
/// are updated in place.
pub fn adam_step(params: &mut CostModelParams, grad: &ParamGradient, state: &mut AdamState) {
    let lr = state.effective_lr();
    state.step += 1;
    let t = state.step as i32;
    let cfg = state.config;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    let update =
        |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        };

    for (row, (grow, (mrow, vrow))) in params.node_proj.iter_mut().zip(
        grad.d_node_proj
            .iter()
            .zip(state.m_node.iter_mut().zip(state.v_node.iter_mut())),
    ) {
        for (p, (g, (m, v))) in row
            .iter_mut()
            .zip(grow.iter().zip(mrow.iter_mut().zip(vrow.iter_mut())))
        {
            update(p, *g, m, v);
        }
    }
    for (row, (grow, (mrow, vrow))) in params.edge_proj.iter_mut().zip(
        grad.d_edge_proj
            .iter()
            .zip(state.m_edge.iter_mut().zip(state.v_edge.iter_mut())),
    ) {
        for (p, (g, (m, v))) in row
            .iter_mut()
            .zip(grow.iter().zip(mrow.iter_mut().zip(vrow.iter_mut())))
        {
            update(p, *g, m, v);
        }
    }
    if cfg.update_c_hat {
        let mut c = params.c_hat;
        update(&mut c, grad.d_c_hat, &mut state.m_c_hat, &mut state.v_c_hat);
        params.c_hat = c;
    }
}

// ---- checkpoint serialization ------------------------------------------------

const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MatrixDto {
    rows: usize,
    cols: usize,
    data: Vec<HexF64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDto {
    schema_version: u32,
    feature_dim: usize,
    embed_dim: usize,
    c_hat: HexF64,
    node_proj: MatrixDto,
    edge_proj: MatrixDto,
}

fn matrix_to_dto(m: &[Vec<f64>]) -> MatrixDto {
    MatrixDto {
        rows: m.len(),
        cols: m.first().map_or(0, Vec::len),
        data: m.iter().flat_map(|row| hexfloat::encode_vec(row)).collect(),
    }
}

fn matrix_from_dto(dto: &MatrixDto) -> Result<Vec<Vec<f64>>> {
    if dto.data.len() != dto.rows * dto.cols {
        return Err(Error::Parse(format!(
            "matrix tagged {}x{} but has {} entries",
            dto.rows,
            dto.cols,
            dto.data.len()
        )));
    }
    Ok(dto
        .data
        .chunks(dto.cols.max(1))
        .map(hexfloat::decode_vec)
        .collect())
}

pub fn params_to_json(params: &CostModelParams) -> Result<String> {
    let dto = CheckpointDto {
        schema_version: CHECKPOINT_SCHEMA,
        feature_dim: params.feature_dim(),
        embed_dim: params.embed_dim(),
        c_hat: HexF64(params.c_hat),
        node_proj: matrix_to_dto(&params.node_proj),
        edge_proj: matrix_to_dto(&params.edge_proj),
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

pub fn params_from_json(text: &str) -> Result<CostModelParams> {
    let dto: CheckpointDto = serde_json::from_str(text)?;
    if dto.schema_version != CHECKPOINT_SCHEMA {
        return Err(Error::SchemaVersion {
            found: dto.schema_version,
            expected: CHECKPOINT_SCHEMA,
        });
    }
    let params = CostModelParams {
        node_proj: matrix_from_dto(&dto.node_proj)?,
        edge_proj: matrix_from_dto(&dto.edge_proj)?,
        c_hat: dto.c_hat.0,
    };
    params.validate()?;
    if params.feature_dim() != dto.feature_dim || params.embed_dim() != dto.embed_dim {
        return Err(Error::Parse("checkpoint shape tags disagree with data".into()));
    }
    Ok(params)
}

pub fn save_params(params: &CostModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_json(params)?)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<CostModelParams> {
    params_from_json(&std::fs::read_to_string(path)?)
}

// ---- small dense helpers ------------------------------------------------------

fn project(f: &[f64], proj: &[Vec<f64>]) -> Vec<f64> {
    let e = proj.first().map_or(0, Vec::len);
    let mut out = vec![0.0; e];
    for (fd, row) in f.iter().zip(proj) {
        for (o, p) in out.iter_mut().zip(row) {
            *o += fd * p;
        }
    }
    out
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(acc: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `v / (||v|| + eps)`, guarded against zero-norm inputs.
fn normalize(v: &[f64]) -> Vec<f64> {
    let inv = 1.0 / (norm(v) + NORM_EPS);
    v.iter().map(|x| x * inv).collect()
}

/// Exact Jacobian-transpose product of the guarded normalization:
/// for `g(z) = z / (||z|| + eps)`,
/// `dL/dz = gbar / (||z|| + eps) - z * <z, gbar> / (||z|| (||z|| + eps)^2)`.
fn normalize_backward(z: &[f64], gbar: &[f64]) -> Vec<f64> {
    let s = norm(z);
    let u = 1.0 / (s + NORM_EPS);
    let mut out: Vec<f64> = gbar.iter().map(|g| g * u).collect();
    if s > 0.0 {
        let coeff = dot(z, gbar) / (s * (s + NORM_EPS) * (s + NORM_EPS));
        for (o, zv) in out.iter_mut().zip(z) {
            *o -= coeff * zv;
        }
    }
    out
}

/// `acc += f (x) g` where `f` has length D and `g` length E.
fn outer_add(acc: &mut [Vec<f64>], f: &[f64], g: &[f64]) {
    for (row, fd) in acc.iter_mut().zip(f) {
        for (cell, gv) in row.iter_mut().zip(g) {
            *cell += fd * gv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_params(d: usize, c_hat: f64) -> CostModelParams {
        let mut eye = vec![vec![0.0; d]; d];
        for (i, row) in eye.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        CostModelParams { node_proj: eye.clone(), edge_proj: eye, c_hat }
    }

    fn ks(id: &str, features: Vec<Vec<f64>>, edges: Vec<(usize, usize)>) -> KeypointSet {
        let points = (0..features.len()).map(|i| (i as f64, 0.5 * i as f64)).collect();
        KeypointSet::new(id, points, features, edges, None).unwrap()
    }

    #[test]
    fn zero_features_embed_to_zero() {
        let set = ks("a", vec![vec![0.0; 3]; 2], vec![(0, 1)]);
        let emb = embed(&set, &identity_params(3, 0.0)).unwrap();
        assert!(emb.nodes.iter().flatten().all(|&v| v == 0.0));
        assert!(emb.edges.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_projection_passes_features_through() {
        let set = ks("a", vec![vec![1.0, 2.0], vec![0.5, -1.0]], vec![(0, 1)]);
        let emb = embed(&set, &identity_params(2, 0.0)).unwrap();
        assert_eq!(emb.nodes[0], vec![1.0, 2.0]);
        assert_eq!(emb.edges[0], vec![0.5, 3.0]);
    }

    #[test]
    fn equal_endpoint_features_give_zero_edge_embedding() {
        let set = ks("a", vec![vec![1.0, 2.0], vec![1.0, 2.0]], vec![(0, 1)]);
        let emb = embed(&set, &identity_params(2, 0.0)).unwrap();
        assert!(emb.edges[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_embeddings_cost_minus_one_at_zero_offset() {
        let a = ks("a", vec![vec![3.0, 0.0]], vec![]);
        let b = ks("b", vec![vec![5.0, 0.0]], vec![]);
        let inst = build_instance(&a, &b, &identity_params(2, 0.0), false).unwrap();
        assert!((inst.unary[0][0] - (-1.0)).abs() < 1e-9);
        assert!(inst.pairwise.is_empty());
    }

    #[test]
    fn orthogonal_embeddings_cost_minus_offset() {
        let a = ks("a", vec![vec![1.0, 0.0]], vec![]);
        let b = ks("b", vec![vec![0.0, 1.0]], vec![]);
        let inst = build_instance(&a, &b, &identity_params(2, 0.257), false).unwrap();
        assert!((inst.unary[0][0] - (-0.257)).abs() < 1e-12);
    }

    #[test]
    fn scaling_a_feature_vector_leaves_its_cost_row_unchanged() {
        let mk = |scale: f64| {
            ks("a", vec![vec![scale * 0.3, scale * -0.7], vec![1.0, 0.2]], vec![(0, 1)])
        };
        let b = ks("b", vec![vec![0.4, 0.9], vec![-0.2, 0.1]], vec![(0, 1)]);
        let p = identity_params(2, 0.1);
        let base = build_instance(&mk(1.0), &b, &p, false).unwrap();
        let scaled = build_instance(&mk(7.5), &b, &p, false).unwrap();
        for (r1, r2) in base.unary.iter().zip(&scaled.unary) {
            for (a, b) in r1.iter().zip(r2) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_cost_gradient_backpropagates_to_zero() {
        let a = ks("a", vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![(0, 1)]);
        let b = ks("b", vec![vec![1.0, 1.0], vec![0.5, 0.3]], vec![(0, 1)]);
        let p = identity_params(2, 0.0);
        let inst = build_instance(&a, &b, &p, false).unwrap();
        let cg = CostGradient {
            unary_grad: vec![vec![0.0; 2]; 2],
            pairwise_grad: inst.pairwise.keys().map(|&k| (k, 0.0)).collect(),
        };
        let g = backward(&a, &b, &p, &cg).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn pairwise_only_gradient_leaves_node_projection_untouched() {
        let a = ks("a", vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![(0, 1)]);
        let b = ks("b", vec![vec![1.0, 1.0], vec![0.5, 0.3]], vec![(0, 1)]);
        let p = identity_params(2, 0.0);
        let mut pairwise_grad = BTreeMap::new();
        pairwise_grad.insert(((0, 1), (0, 1)), 1.0);
        let cg = CostGradient { unary_grad: vec![vec![0.0; 2]; 2], pairwise_grad };
        let g = backward(&a, &b, &p, &cg).unwrap();
        assert!(g.d_node_proj.iter().flatten().all(|&v| v == 0.0));
        assert!(g.d_edge_proj.iter().flatten().any(|&v| v != 0.0));
        assert_eq!(g.d_c_hat, 0.0);
    }

    #[test]
    fn d_c_hat_is_negated_sum_of_unary_gradient() {
        let a = ks("a", vec![vec![1.0, 0.0]], vec![]);
        let b = ks("b", vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![]);
        let p = identity_params(2, 0.3);
        let cg = CostGradient {
            unary_grad: vec![vec![0.25, -1.5]],
            pairwise_grad: BTreeMap::new(),
        };
        let g = backward(&a, &b, &p, &cg).unwrap();
        assert!((g.d_c_hat - -(0.25 - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut p = identity_params(2, 0.1);
        let before = p.clone();
        let mut st = AdamState::new(2, 2, AdamConfig::default());
        adam_step(&mut p, &ParamGradient::zeros(2, 2), &mut st);
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_about_lr() {
        let mut p = identity_params(1, 0.0);
        p.node_proj[0][0] = 2.0;
        let mut g = ParamGradient::zeros(1, 1);
        g.d_node_proj[0][0] = 1.0;
        let cfg = AdamConfig { lr: 0.1, lr_halving_period: 0, ..Default::default() };
        let mut st = AdamState::new(1, 1, cfg);
        adam_step(&mut p, &g, &mut st);
        let moved = 2.0 - p.node_proj[0][0];
        assert!((moved - 0.1).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn adam_constant_gradient_moves_monotonically() {
        let mut p = identity_params(1, 0.0);
        let mut g = ParamGradient::zeros(1, 1);
        g.d_node_proj[0][0] = 1.0;
        let mut st = AdamState::new(1, 1, AdamConfig::default());
        let x0 = p.node_proj[0][0];
        adam_step(&mut p, &g, &mut st);
        let x1 = p.node_proj[0][0];
        adam_step(&mut p, &g, &mut st);
        let x2 = p.node_proj[0][0];
        assert!(x1 < x0 && x2 < x1);
    }

    #[test]
    fn lr_halves_on_schedule() {
        let cfg = AdamConfig { lr: 0.4, lr_halving_period: 2, ..Default::default() };
        let mut st = AdamState::new(1, 1, cfg);
        assert_eq!(st.effective_lr(), 0.4);
        st.step = 2;
        assert_eq!(st.effective_lr(), 0.2);
        st.step = 5;
        assert_eq!(st.effective_lr(), 0.1);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = CostModelParams::init_random(3, 2, 0.257, 42);
        let text = params_to_json(&p).unwrap();
        let back = params_from_json(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn checkpoint_rejects_unknown_schema() {
        let p = CostModelParams::init_random(2, 2, 0.0, 1);
        let text = params_to_json(&p).unwrap().replace(
            "\"schema_version\": 1",
            "\"schema_version\": 99",
        );
        assert!(matches!(
            params_from_json(&text),
            Err(Error::SchemaVersion { found: 99, .. })
        ));
    }
}
