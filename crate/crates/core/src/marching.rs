//! Block time marching: per-block losses in BTM and ExBTM form and the
//! block-by-block training schedule.
//!
//! Block `i` covers `D x [t_{i-1}, t_i]`. Its loss matches the solution at
//! block-boundary times against a reference: the exact initial data at
//! `t_0`, otherwise the frozen network of the preceding block. BTM matches
//! only at `t_{i-1}`; ExBTM matches at every `t_{j-1}`, `j = 1..=i`, and
//! carries the previous block's final loss as a constant.

use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{locate_non_finite, loss_gradient, GradVector, JetBatch, LossAdjoint, PointSet};
use crate::error::{ConfigError, Error, NonFiniteError};
use crate::network::{ArchVector, Field, HLConcParams, LayerActivations, Network};
use crate::optim::{adam_step, lbfgs_minimize, AdamConfig, AdamState, LbfgsConfig, LbfgsState, LbfgsStatus};
use crate::pde::{ExactField, ProblemSpec, Residual};
use crate::sampling::{midpoints, sample_block, CollocationSets, QuadratureGrid, TimeBlocks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarchMode {
    ExBtm,
    Btm,
}

impl MarchMode {
    pub fn name(self) -> &'static str {
        match self {
            MarchMode::ExBtm => "exbtm",
            MarchMode::Btm => "btm",
        }
    }

    /// Block-boundary indices `j` whose times `t_{j-1}` enter block `i`'s loss.
    pub fn temporal_blocks(self, i: usize) -> std::ops::RangeInclusive<usize> {
        match self {
            MarchMode::ExBtm => 1..=i,
            MarchMode::Btm => i..=i,
        }
    }
}

impl fmt::Display for MarchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MarchMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exbtm" => Ok(MarchMode::ExBtm),
            "btm" => Ok(MarchMode::Btm),
            _ => Err(ConfigError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub interior: f64,
    pub temporal: f64,
    pub boundary_sq: f64,
    pub boundary_sqrt: f64,
    pub carried: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// The part that depends on the block's own parameters.
    pub fn block_total(&self) -> f64 {
        self.interior + self.temporal + self.boundary_sq + self.boundary_sqrt
    }

    pub fn boundary(&self) -> f64 {
        self.boundary_sq + self.boundary_sqrt
    }
}

/// How residual families are reduced to loss terms: penalty weights, the
/// measure multiplying each mean (1 for Monte Carlo losses, the domain
/// measure for quadrature integrals) and the smoothing inside square roots.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub weights: Vec<f64>,
    pub interior_scale: f64,
    pub temporal_scale: f64,
    pub boundary_scale: f64,
    pub sqrt_eps: f64,
}

/// Smoothing of square-root loss terms, `sqrt(m + SQRT_EPS)`.
pub const SQRT_EPS: f64 = 1e-12;

const SET_INTERIOR: usize = 0;
const SET_LEFT: usize = 1;
const SET_RIGHT: usize = 2;
const SET_TEMPORAL: usize = 3;

/// All fixed data of one block's loss: point sets, manufactured data, and
/// reference jets at the block-boundary times.
#[derive(Debug, Clone)]
pub struct BlockProblem {
    spec: ProblemSpec,
    mode: MarchMode,
    block: usize,
    sets: Vec<PointSet>,
    source: Vec<f64>,
    boundary_data: (Vec<f64>, Vec<f64>),
    targets: Vec<JetBatch>,
    reduction: Reduction,
    carried: f64,
}

/// Frozen solutions of earlier blocks: `refs[j - 1]` is block `j`.
pub type FrozenRefs<'a> = [Option<&'a dyn Field>];

impl BlockProblem {
    /// Monte Carlo training loss on the block's collocation sets.
    pub fn training(
        mode: MarchMode,
        spec: &ProblemSpec,
        blocks: &TimeBlocks,
        sets: &CollocationSets,
        refs: &FrozenRefs<'_>,
        carried: f64,
    ) -> Result<Self, ConfigError> {
        spec.validate()?;
        let reduction = Reduction {
            weights: spec.weights.clone(),
            interior_scale: 1.0,
            temporal_scale: 1.0,
            boundary_scale: 1.0,
            sqrt_eps: SQRT_EPS,
        };
        Self::build(
            mode,
            spec,
            blocks,
            sets.block,
            (sets.interior_xs.clone(), sets.interior_ts.clone()),
            sets.boundary_ts.clone(),
            sets.temporal_xs.clone(),
            refs,
            reduction,
            carried,
        )
    }

    /// Unweighted midpoint-rule integrals of the same residuals (`m` cells
    /// per axis), as used by the generalization error.
    pub fn quadrature(
        mode: MarchMode,
        spec: &ProblemSpec,
        blocks: &TimeBlocks,
        i: usize,
        m: usize,
        refs: &FrozenRefs<'_>,
    ) -> Result<Self, ConfigError> {
        let (t0, t1) = blocks.bounds(i);
        let (a, b) = spec.x_domain;
        let grid = QuadratureGrid::rect(spec.x_domain, (t0, t1), m);
        let reduction = Reduction {
            weights: vec![1.0; spec.n_weights()],
            interior_scale: grid.measure(),
            temporal_scale: b - a,
            boundary_scale: t1 - t0,
            sqrt_eps: 0.0,
        };
        Self::build(
            mode,
            spec,
            blocks,
            i,
            (grid.xs, grid.ts),
            midpoints(t0, t1, m),
            midpoints(a, b, m),
            refs,
            reduction,
            0.0,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        mode: MarchMode,
        spec: &ProblemSpec,
        blocks: &TimeBlocks,
        i: usize,
        interior: (Vec<f64>, Vec<f64>),
        boundary_ts: Vec<f64>,
        temporal_xs: Vec<f64>,
        refs: &FrozenRefs<'_>,
        reduction: Reduction,
        carried: f64,
    ) -> Result<Self, ConfigError> {
        if reduction.weights.len() != spec.n_weights() {
            return Err(ConfigError::WeightCount { expected: spec.n_weights(), got: reduction.weights.len() });
        }
        let (a, b) = spec.x_domain;
        let source = interior.0.iter().zip(&interior.1).map(|(&x, &t)| spec.source_term(x, t)).collect();
        let boundary_data = spec.boundary_data(&boundary_ts);
        let nb = boundary_ts.len();
        let mut sets = vec![
            PointSet::new("interior", interior.0, interior.1, spec.interior_order()),
            PointSet::new("boundary_left", vec![a; nb], boundary_ts.clone(), spec.boundary_order()),
            PointSet::new("boundary_right", vec![b; nb], boundary_ts, spec.boundary_order()),
        ];
        let exact = ExactField(spec);
        let mut targets = Vec::new();
        for j in mode.temporal_blocks(i) {
            let t = blocks.boundary(j - 1);
            let reference: &dyn Field = if j == 1 {
                &exact
            } else {
                refs.get(j - 2).copied().flatten().ok_or(ConfigError::MissingFrozenBlock { needed: j - 1 })?
            };
            let ts = vec![t; temporal_xs.len()];
            targets.push(reference.eval_batch(&temporal_xs, &ts, spec.temporal_order()));
            sets.push(PointSet::new("temporal", temporal_xs.clone(), ts, spec.temporal_order()));
        }
        Ok(BlockProblem {
            spec: spec.clone(),
            mode,
            block: i,
            sets,
            source,
            boundary_data,
            targets,
            reduction,
            carried,
        })
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn mode(&self) -> MarchMode {
        self.mode
    }

    pub fn carried(&self) -> f64 {
        self.carried
    }

    pub fn point_sets(&self) -> &[PointSet] {
        &self.sets
    }

    /// Number of temporal residual families in the loss.
    pub fn temporal_family_count(&self) -> usize {
        self.targets.len() * self.spec.temporal_components().len()
    }

    /// Loss and its gradient with respect to the block's parameters. The
    /// carried constant enters the total but not the gradient.
    pub fn loss_and_grad(
        &self,
        params: &HLConcParams,
        acts: &LayerActivations,
    ) -> Result<(LossBreakdown, GradVector), NonFiniteError> {
        let mut breakdown = LossBreakdown::default();
        let (_, grad) = loss_gradient(params, acts, &self.sets, |outs| {
            let (b, adj) = self.reduce(outs, true);
            breakdown = b;
            Ok(LossAdjoint { value: b.total, output_adjoints: adj.unwrap() })
        })?;
        Ok((breakdown, grad))
    }

    /// Loss of any field (no gradient).
    pub fn evaluate_field(&self, field: &dyn Field) -> Result<LossBreakdown, NonFiniteError> {
        let outs: Vec<JetBatch> = self.sets.iter().map(|s| field.eval_batch(&s.xs, &s.ts, s.order)).collect();
        let (b, _) = self.reduce(&outs, false);
        if !b.total.is_finite() {
            return Err(locate_non_finite(&self.sets, &outs));
        }
        Ok(b)
    }

    fn reduce(&self, outs: &[JetBatch], with_adjoint: bool) -> (LossBreakdown, Option<Vec<Array2<f64>>>) {
        let spec = &self.spec;
        let red = &self.reduction;
        let w = &red.weights;
        let mut adj: Option<Vec<Array2<f64>>> =
            with_adjoint.then(|| outs.iter().map(|o| Array2::zeros(o.data.dim())).collect());
        let mut b = LossBreakdown { carried: self.carried, ..Default::default() };

        let mut add_term = |families: &[&Residual], weight: f64, scale: f64, sqrt: bool| -> f64 {
            let s: f64 = families.iter().map(|f| scale * mean_square(&f.values)).sum();
            let (value, ds) = if sqrt {
                let r = (s + red.sqrt_eps).sqrt();
                (weight * r, weight / (2.0 * r))
            } else {
                (weight * s, weight)
            };
            if let Some(adj) = adj.as_mut() {
                for f in families {
                    let n = f.values.len();
                    let k = ds * scale * 2.0 / n as f64;
                    for part in &f.partials {
                        let col0 = part.channel as usize * n;
                        let mut row = adj[part.set].row_mut(part.output);
                        let row = row.as_slice_mut().unwrap();
                        for (p, r) in f.values.iter().enumerate() {
                            row[col0 + p] += k * r * part.coeff.at(p);
                        }
                    }
                }
            }
            value
        };

        let interior = spec.interior_residuals(&outs[SET_INTERIOR], SET_INTERIOR, &self.source);
        for (k, f) in interior.iter().enumerate() {
            b.interior += add_term(&[f], w[k], red.interior_scale, false);
        }
        let n_int = interior.len();

        let temporal: Vec<Vec<Residual>> = (0..self.targets.len())
            .map(|q| spec.temporal_residuals(&outs[SET_TEMPORAL + q], SET_TEMPORAL + q, &self.targets[q]))
            .collect();
        let n_comp = spec.temporal_components().len();
        for c in 0..n_comp {
            let fams: Vec<&Residual> = temporal.iter().map(|v| &v[c]).collect();
            b.temporal += add_term(&fams, w[n_int + c], red.temporal_scale, false);
        }

        let terms = spec.boundary_terms(&outs[SET_LEFT], &outs[SET_RIGHT], (SET_LEFT, SET_RIGHT), &self.boundary_data);
        for (k, term) in terms.iter().enumerate() {
            let fams: Vec<&Residual> = term.families.iter().collect();
            let v = add_term(&fams, w[n_int + n_comp + k], red.boundary_scale, term.sqrt);
            if term.sqrt {
                b.boundary_sqrt += v;
            } else {
                b.boundary_sq += v;
            }
        }
        b.total = b.interior + b.temporal + b.boundary_sq + b.boundary_sqrt + b.carried;
        (b, adj)
    }
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum::<f64>() / v.len() as f64
}

/// Training schedule and network setup shared by all blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MarchConfig {
    pub arch: ArchVector,
    pub acts: LayerActivations,
    pub n_blocks: usize,
    pub n_c: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Full-batch Adam steps before L-BFGS.
    pub adam_steps: usize,
    pub lbfgs: LbfgsConfig,
    /// Parameter snapshot interval in L-BFGS iterations (0 disables).
    pub checkpoint_every: usize,
    /// Start block `i` from block `i - 1`'s parameters instead of a fresh
    /// initialization.
    pub warm_start: bool,
    /// Loss above which training counts as diverged.
    pub divergence_limit: f64,
}

impl MarchConfig {
    pub fn new(arch: ArchVector, acts: LayerActivations) -> Self {
        MarchConfig {
            arch,
            acts,
            n_blocks: 5,
            n_c: 2000,
            seed: 0,
            adam: AdamConfig::default(),
            adam_steps: 100,
            lbfgs: LbfgsConfig::default(),
            checkpoint_every: 100,
            warm_start: false,
            divergence_limit: 1e8,
        }
    }

    /// Seed of block `i`'s fresh initialization; kept apart from the
    /// collocation streams.
    pub fn init_rng(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1000 + i as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iter: usize,
    pub loss: LossBreakdown,
}

/// Parameters recorded during L-BFGS for error-versus-loss analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    /// Block loss without the carried constant.
    pub loss: f64,
    pub params: HLConcParams,
}

#[derive(Debug, Clone)]
pub struct TrainedBlock {
    pub index: usize,
    pub network: Network,
    /// Final loss including the carried constant.
    pub final_loss: LossBreakdown,
    pub history: Vec<HistoryEntry>,
    pub snapshots: Vec<Snapshot>,
    pub lbfgs_status: Option<LbfgsStatus>,
    pub wall_time: Duration,
}

/// Block `j`'s frozen network from `frozen`, looked up by block index.
pub fn frozen_refs(frozen: &[TrainedBlock], upto: usize) -> Vec<Option<&dyn Field>> {
    (1..upto)
        .map(|j| frozen.iter().find(|b| b.index == j).map(|b| &b.network as &dyn Field))
        .collect()
}

/// Trains block `i` given the frozen earlier blocks.
pub fn train_block(
    mode: MarchMode,
    spec: &ProblemSpec,
    i: usize,
    frozen: &[TrainedBlock],
    cfg: &MarchConfig,
) -> Result<TrainedBlock, Error> {
    let start = Instant::now();
    let blocks = TimeBlocks::new(spec.horizon, cfg.n_blocks)?;
    cfg.acts.validate(&cfg.arch, true)?;
    if cfg.arch.out_dim() != spec.n_outputs() {
        return Err(ConfigError::InvalidArch(format!(
            "{} needs {} output(s), architecture has {}",
            spec.kind(),
            spec.n_outputs(),
            cfg.arch.out_dim()
        ))
        .into());
    }
    let previous = |j: usize| frozen.iter().find(|b| b.index == j).ok_or(ConfigError::MissingFrozenBlock { needed: j });
    let carried = match mode {
        MarchMode::ExBtm if i > 1 => previous(i - 1)?.final_loss.total,
        _ => 0.0,
    };
    let sets = sample_block(cfg.seed, i, spec, &blocks, cfg.n_c);
    let refs = frozen_refs(frozen, i);
    let problem = BlockProblem::training(mode, spec, &blocks, &sets, &refs, carried)?;

    let mut params = if cfg.warm_start && i > 1 {
        previous(i - 1)?.network.params.clone()
    } else {
        HLConcParams::glorot(cfg.arch.clone(), &mut cfg.init_rng(i))
    };
    let acts = &cfg.acts;
    let diverged = |loss: f64, last_good: &HLConcParams| Error::Diverged {
        block: i,
        loss,
        last_good: Box::new(last_good.clone()),
    };
    let bad = |b: &LossBreakdown| !(b.total.is_finite() && b.total <= cfg.divergence_limit);

    let mut history = Vec::new();
    let mut adam = AdamState::new(params.len(), cfg.adam);
    for step in 0..cfg.adam_steps {
        let (b, g) = problem.loss_and_grad(&params, acts).map_err(|_| diverged(f64::NAN, &params))?;
        if bad(&b) {
            return Err(diverged(b.total, &params));
        }
        history.push(HistoryEntry { iter: step, loss: b });
        adam_step(&mut adam, params.values_mut(), g.as_slice());
    }

    // breakdowns of recent evaluations, keyed by the exact total they produced
    let evaluated = std::cell::RefCell::new(Vec::<(u64, LossBreakdown)>::new());
    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let p = HLConcParams::from_values(cfg.arch.clone(), x.to_vec()).unwrap();
        match problem.loss_and_grad(&p, acts) {
            Ok((b, g)) => {
                evaluated.borrow_mut().push((b.total.to_bits(), b));
                (b.total, g.0)
            }
            Err(_) => (f64::NAN, vec![0.0; x.len()]),
        }
    };
    let (b0, _) = problem.loss_and_grad(&params, acts).map_err(|_| diverged(f64::NAN, &params))?;
    if bad(&b0) {
        return Err(diverged(b0.total, &params));
    }
    let iter0 = cfg.adam_steps;
    history.push(HistoryEntry { iter: iter0, loss: b0 });
    let mut snapshots = Vec::new();
    if cfg.checkpoint_every > 0 {
        snapshots.push(Snapshot { iter: iter0, loss: b0.block_total(), params: params.clone() });
    }
    let mut last_good = params.clone();
    let mut failure: Option<f64> = None;
    let mut state = LbfgsState::default();
    let mut x = params.values().to_vec();
    let report = lbfgs_minimize(objective, &mut x, &mut state, &cfg.lbfgs, |k, x, f| {
        let b = {
            let mut ev = evaluated.borrow_mut();
            let found = ev.iter().rev().find(|(bits, _)| *bits == f.to_bits()).map(|e| e.1);
            ev.clear();
            found
        };
        let b = b.unwrap_or(LossBreakdown { total: f, carried, ..Default::default() });
        if bad(&b) {
            failure = Some(f);
            return ControlFlow::Break(());
        }
        last_good.values_mut().copy_from_slice(x);
        history.push(HistoryEntry { iter: iter0 + k, loss: b });
        if cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 {
            snapshots.push(Snapshot { iter: iter0 + k, loss: b.block_total(), params: last_good.clone() });
        }
        ControlFlow::Continue(())
    });
    if let Some(f) = failure {
        return Err(diverged(f, &last_good));
    }
    params.values_mut().copy_from_slice(&x);
    let final_loss = history.last().map(|h| h.loss).unwrap_or(b0);
    Ok(TrainedBlock {
        index: i,
        network: Network::new(params, acts.clone()),
        final_loss,
        history,
        snapshots,
        lbfgs_status: Some(report.status),
        wall_time: start.elapsed(),
    })
}

/// Trains all blocks in order, calling `on_block` as each one freezes.
pub fn march_with<F>(mode: MarchMode, spec: &ProblemSpec, cfg: &MarchConfig, mut on_block: F) -> Result<Vec<TrainedBlock>, Error>
where
    F: FnMut(&TrainedBlock) -> Result<(), Error>,
{
    let mut done: Vec<TrainedBlock> = Vec::with_capacity(cfg.n_blocks);
    for i in 1..=cfg.n_blocks {
        let block = train_block(mode, spec, i, &done, cfg)?;
        on_block(&block)?;
        done.push(block);
    }
    Ok(done)
}

pub fn march_all(mode: MarchMode, spec: &ProblemSpec, cfg: &MarchConfig) -> Result<Vec<TrainedBlock>, Error> {
    march_with(mode, spec, cfg, |_| Ok(()))
}
