//! Hidden-layer concatenated feed-forward networks (and the plain FNN
//! baseline): parameter layout, jet evaluation, reverse pass, capacity-
//! preserving embeddings and checkpoints.
//!
//! Every hidden layer's activated state feeds both the next hidden layer and,
//! through its own mixing matrix `M_i`, the output:
//! `u(z) = sum_i M_i h_i(z) + b_L`.
//!
//! Canonical parameter order: hidden layers in order (weights row-major,
//! then biases), then the mixing matrices `M_1 .. M_{L-1}` (row-major), then
//! the output bias.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::ActivationKind;
use crate::autodiff::{
    accumulate_outer, activate_batch, activate_batch_adjoint, jet_add, jet_chain, ActivationCache, Channel, Jet2,
    JetBatch, Order,
};
use crate::error::{ConfigError, Error};

/// Layer widths `(l_0, l_1, ..., l_L)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchVector(Vec<usize>);

/// `N_c`: hidden nodes exposed to the output; `N_h`: hidden-layer
/// coefficients; `N_a`: all parameters of the concatenated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub n_c: usize,
    pub n_h: usize,
    pub n_a: usize,
}

impl ArchVector {
    /// Validates: at least two hidden layers, two inputs, one or two outputs.
    pub fn new(widths: Vec<usize>) -> Result<Self, ConfigError> {
        if widths.len() < 4 {
            return Err(ConfigError::InvalidArch(format!(
                "{widths:?}: need at least two hidden layers"
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(ConfigError::InvalidArch(format!("{widths:?}: zero width")));
        }
        if widths[0] != 2 {
            return Err(ConfigError::InvalidArch(format!("{widths:?}: inputs must be (x, t)")));
        }
        let out = *widths.last().unwrap();
        if out != 1 && out != 2 {
            return Err(ConfigError::InvalidArch(format!("{widths:?}: output width must be 1 or 2")));
        }
        Ok(ArchVector(widths))
    }

    pub fn widths(&self) -> &[usize] {
        &self.0
    }

    /// Number of hidden layers, `L - 1`.
    pub fn n_hidden(&self) -> usize {
        self.0.len() - 2
    }

    pub fn out_dim(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Width of hidden layer `h` (0-based).
    pub fn hidden_width(&self, h: usize) -> usize {
        self.0[h + 1]
    }

    pub fn counts(&self) -> ParamCounts {
        count_params(&self.0)
    }

    /// `2-90-90-1` style label.
    pub fn label(&self) -> String {
        self.0.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-")
    }
}

impl fmt::Display for ArchVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Closed-form parameter counts for the widths `(l_0, ..., l_L)`.
pub fn count_params(widths: &[usize]) -> ParamCounts {
    let l = widths.len() - 1;
    let out = widths[l];
    let hidden = &widths[1..l];
    let n_c: usize = hidden.iter().sum();
    let n_h: usize = (1..l).map(|i| (widths[i - 1] + 1) * widths[i]).sum();
    ParamCounts { n_c, n_h, n_a: n_h + (n_c + 1) * out }
}

/// One activation per hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerActivations(pub Vec<ActivationKind>);

impl LayerActivations {
    pub fn uniform(kind: ActivationKind, n_hidden: usize) -> Self {
        LayerActivations(vec![kind; n_hidden])
    }

    /// The first two hidden layers must be tanh unless `allow_override`.
    pub fn validate(&self, arch: &ArchVector, allow_override: bool) -> Result<(), ConfigError> {
        if self.0.len() != arch.n_hidden() {
            return Err(ConfigError::InvalidArch(format!(
                "{} activations for {} hidden layers",
                self.0.len(),
                arch.n_hidden()
            )));
        }
        if !allow_override && self.0.iter().take(2).any(|&k| k != ActivationKind::Tanh) {
            return Err(ConfigError::Invalid(
                "the first two hidden layers must use tanh (set allow_activation_override to bypass)".into(),
            ));
        }
        Ok(())
    }

    pub fn kinds(&self) -> &[ActivationKind] {
        &self.0
    }
}

/// Parameters of a hidden-layer concatenated network, stored flat in
/// canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct HLConcParams {
    arch: ArchVector,
    values: Vec<f64>,
}

/// Intermediate state kept by [`HLConcParams::forward_taped`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: JetBatch,
    pre: Vec<JetBatch>,
    post: Vec<JetBatch>,
    caches: Vec<ActivationCache>,
}

impl HLConcParams {
    pub fn zeros(arch: ArchVector) -> Self {
        let n = arch.counts().n_a;
        HLConcParams { arch, values: vec![0.0; n] }
    }

    pub fn from_values(arch: ArchVector, values: Vec<f64>) -> Result<Self, ConfigError> {
        let n = arch.counts().n_a;
        if values.len() != n {
            return Err(ConfigError::InvalidArch(format!(
                "{} values for {arch} (needs {n})",
                values.len()
            )));
        }
        Ok(HLConcParams { arch, values })
    }

    /// Glorot-uniform hidden weights and mixing matrices, zero biases.
    pub fn glorot<R: Rng>(arch: ArchVector, rng: &mut R) -> Self {
        let mut p = HLConcParams::zeros(arch);
        let w = p.arch.widths().to_vec();
        let out = p.arch.out_dim();
        for h in 0..p.arch.n_hidden() {
            let bound = (6.0 / (w[h] + w[h + 1]) as f64).sqrt();
            let range = p.weight_range(h);
            for v in &mut p.values[range] {
                *v = rng.random_range(-bound..bound);
            }
        }
        for h in 0..p.arch.n_hidden() {
            let bound = (6.0 / (w[h + 1] + out) as f64).sqrt();
            let range = p.mix_range(h);
            for v in &mut p.values[range] {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    pub fn arch(&self) -> &ArchVector {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn hidden_offset(&self, h: usize) -> usize {
        let w = self.arch.widths();
        (0..h).map(|k| (w[k] + 1) * w[k + 1]).sum()
    }

    /// Range of `W_h` (`l_{h+1} x l_h`, row-major) for hidden layer `h` (0-based).
    pub fn weight_range(&self, h: usize) -> Range<usize> {
        let w = self.arch.widths();
        let start = self.hidden_offset(h);
        start..start + w[h + 1] * w[h]
    }

    pub fn bias_range(&self, h: usize) -> Range<usize> {
        let w = self.arch.widths();
        let start = self.weight_range(h).end;
        start..start + w[h + 1]
    }

    /// Range of the mixing matrix `M_h` (`l_L x l_{h+1}`).
    pub fn mix_range(&self, h: usize) -> Range<usize> {
        let w = self.arch.widths();
        let out = self.arch.out_dim();
        let start = self.arch.counts().n_h + (0..h).map(|k| out * w[k + 1]).sum::<usize>();
        start..start + out * w[h + 1]
    }

    pub fn out_bias_range(&self) -> Range<usize> {
        let n = self.values.len();
        n - self.arch.out_dim()..n
    }

    pub fn weight(&self, h: usize) -> ArrayView2<'_, f64> {
        let w = self.arch.widths();
        ArrayView2::from_shape((w[h + 1], w[h]), &self.values[self.weight_range(h)]).unwrap()
    }

    pub fn bias(&self, h: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[self.bias_range(h)])
    }

    pub fn mix(&self, h: usize) -> ArrayView2<'_, f64> {
        let shape = (self.arch.out_dim(), self.arch.hidden_width(h));
        ArrayView2::from_shape(shape, &self.values[self.mix_range(h)]).unwrap()
    }

    pub fn out_bias(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[self.out_bias_range()])
    }

    fn weight_mut(&mut self, h: usize) -> ArrayViewMut2<'_, f64> {
        let w = self.arch.widths().to_vec();
        let r = self.weight_range(h);
        ArrayViewMut2::from_shape((w[h + 1], w[h]), &mut self.values[r]).unwrap()
    }

    fn mix_mut(&mut self, h: usize) -> ArrayViewMut2<'_, f64> {
        let shape = (self.arch.out_dim(), self.arch.hidden_width(h));
        let r = self.mix_range(h);
        ArrayViewMut2::from_shape(shape, &mut self.values[r]).unwrap()
    }

    /// Output jets at one point via scalar jet arithmetic.
    pub fn forward_jet(&self, acts: &LayerActivations, x: f64, t: f64) -> Vec<Jet2> {
        let mut layer = vec![Jet2::seed_x(x), Jet2::seed_t(t)];
        let out_dim = self.arch.out_dim();
        let mut out = vec![Jet2::ZERO; out_dim];
        for (h, &act) in acts.kinds().iter().enumerate() {
            let w = self.weight(h);
            let b = self.bias(h);
            let next: Vec<Jet2> = (0..w.nrows())
                .map(|j| {
                    let mut z = Jet2::ZERO;
                    for (m, a) in layer.iter().enumerate() {
                        z = jet_add(z, a.scale(w[[j, m]]));
                    }
                    let z = z + b[j];
                    let d = act.eval_derivs(z.val);
                    jet_chain([d[0], d[1], d[2]], z)
                })
                .collect();
            let mix = self.mix(h);
            for (o, u) in out.iter_mut().enumerate() {
                for (j, a) in next.iter().enumerate() {
                    *u = jet_add(*u, a.scale(mix[[o, j]]));
                }
            }
            layer = next;
        }
        let b = self.out_bias();
        out.iter().enumerate().map(|(o, u)| *u + b[o]).collect()
    }

    /// Output values at one point, plain `f64` arithmetic.
    pub fn forward_value(&self, acts: &LayerActivations, x: f64, t: f64) -> Vec<f64> {
        let mut layer = vec![x, t];
        let mut out = vec![0.0; self.arch.out_dim()];
        for (h, &act) in acts.kinds().iter().enumerate() {
            let w = self.weight(h);
            let b = self.bias(h);
            let next: Vec<f64> = (0..w.nrows())
                .map(|j| {
                    let mut z = 0.0;
                    for (m, a) in layer.iter().enumerate() {
                        z += w[[j, m]] * a;
                    }
                    act.eval(z + b[j])
                })
                .collect();
            let mix = self.mix(h);
            for (o, u) in out.iter_mut().enumerate() {
                for (j, a) in next.iter().enumerate() {
                    *u += mix[[o, j]] * a;
                }
            }
            layer = next;
        }
        let b = self.out_bias();
        out.iter().enumerate().map(|(o, u)| u + b[o]).collect()
    }

    /// Batched forward pass keeping everything the reverse pass needs.
    pub fn forward_taped(&self, acts: &LayerActivations, xs: &[f64], ts: &[f64], order: Order) -> (JetBatch, Tape) {
        let n = xs.len();
        let inputs = JetBatch::inputs(xs, ts, order);
        let mut pre = Vec::with_capacity(self.arch.n_hidden());
        let mut post: Vec<JetBatch> = Vec::with_capacity(self.arch.n_hidden());
        let mut caches = Vec::with_capacity(self.arch.n_hidden());
        let mut out = JetBatch::zeros(self.arch.out_dim(), order, n);
        for (h, &act) in acts.kinds().iter().enumerate() {
            let prev = if h == 0 { &inputs } else { &post[h - 1] };
            let mut z = JetBatch {
                order,
                n_points: n,
                data: self.weight(h).dot(&prev.data),
            };
            let b = self.bias(h);
            for (j, row) in z.data.axis_iter_mut(Axis(0)).enumerate() {
                let row = row.into_slice().unwrap();
                for v in &mut row[..n] {
                    *v += b[j];
                }
            }
            let (a, cache) = activate_batch(act, &z);
            ndarray::linalg::general_mat_mul(1.0, &self.mix(h), &a.data, 1.0, &mut out.data);
            pre.push(z);
            post.push(a);
            caches.push(cache);
        }
        let b = self.out_bias();
        for (o, row) in out.data.axis_iter_mut(Axis(0)).enumerate() {
            let row = row.into_slice().unwrap();
            for v in &mut row[..n] {
                *v += b[o];
            }
        }
        (out, Tape { inputs, pre, post, caches })
    }

    /// Batched output jets.
    pub fn forward_batch(&self, acts: &LayerActivations, xs: &[f64], ts: &[f64], order: Order) -> JetBatch {
        self.forward_taped(acts, xs, ts, order).0
    }

    /// Reverse pass: adds `d loss / d theta` to `grad` given the adjoint of
    /// the output jets (same shape as the output batch data).
    pub fn backward(&self, tape: &Tape, out_bar: ArrayView2<f64>, grad: &mut [f64]) {
        let n = tape.inputs.n_points;
        let n_hidden = self.arch.n_hidden();
        let w = self.arch.widths().to_vec();
        let out_dim = self.arch.out_dim();

        let ob_range = self.out_bias_range();
        for (o, g) in grad[ob_range].iter_mut().enumerate() {
            *g += out_bar.row(o).to_slice().unwrap()[..n].iter().sum::<f64>();
        }
        for h in 0..n_hidden {
            let r = self.mix_range(h);
            let mut gm = ArrayViewMut2::from_shape((out_dim, w[h + 1]), &mut grad[r]).unwrap();
            accumulate_outer(&mut gm, out_bar, tape.post[h].data.view());
        }

        let mut a_bar = self.mix(n_hidden - 1).t().dot(&out_bar);
        for h in (0..n_hidden).rev() {
            let z_bar = activate_batch_adjoint(&tape.pre[h], &tape.caches[h], &a_bar);
            let prev = if h == 0 { &tape.inputs } else { &tape.post[h - 1] };
            let r = self.weight_range(h);
            let mut gw = ArrayViewMut2::from_shape((w[h + 1], w[h]), &mut grad[r]).unwrap();
            accumulate_outer(&mut gw, z_bar.view(), prev.data.view());
            let rb = self.bias_range(h);
            for (j, g) in grad[rb].iter_mut().enumerate() {
                *g += z_bar.row(j).to_slice().unwrap()[..n].iter().sum::<f64>();
            }
            if h > 0 {
                a_bar = self.weight(h).t().dot(&z_bar);
                ndarray::linalg::general_mat_mul(1.0, &self.mix(h - 1).t(), &out_bar, 1.0, &mut a_bar);
            }
        }
    }

    /// Adds `extra` nodes to hidden layer `h` (0-based) without changing the
    /// network function.
    ///
    /// New nodes get zero outgoing weights and zero mixing columns, so they
    /// contribute nothing. Their incoming weights are Glorot-random from
    /// `seed` so that training can move them; biases are zero.
    pub fn embed_widen(&self, h: usize, extra: usize, seed: u64) -> HLConcParams {
        assert!(h < self.arch.n_hidden(), "hidden layer {h} out of range");
        assert!(extra >= 1);
        let mut widths = self.arch.widths().to_vec();
        widths[h + 1] += extra;
        let mut new = HLConcParams::zeros(ArchVector(widths.clone()));
        new.copy_blocks_from(self);
        let old_rows = self.arch.hidden_width(h);
        let bound = (6.0 / (widths[h] + widths[h + 1]) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wh = new.weight_mut(h);
        for j in old_rows..old_rows + extra {
            for m in 0..widths[h] {
                wh[[j, m]] = rng.random_range(-bound..bound);
            }
        }
        new
    }

    /// Appends a hidden layer of `new_width` nodes without changing the
    /// network function: its mixing matrix is zero and its bias is zero.
    /// Incoming weights are zero for `seed = None`, Glorot-random otherwise.
    pub fn embed_deepen(&self, new_width: usize, seed: Option<u64>) -> HLConcParams {
        assert!(new_width >= 1);
        let mut widths = self.arch.widths().to_vec();
        let last = widths.len() - 1;
        widths.insert(last, new_width);
        let mut new = HLConcParams::zeros(ArchVector(widths.clone()));
        new.copy_blocks_from(self);
        if let Some(seed) = seed {
            let h = new.arch.n_hidden() - 1;
            let bound = (6.0 / (widths[h] + widths[h + 1]) as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in new.weight_mut(h).iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        new
    }

    /// Copies every block of `old` into the top-left corner of the matching
    /// block of `self` (layer-wise; `self` may be wider or deeper).
    fn copy_blocks_from(&mut self, old: &HLConcParams) {
        for h in 0..old.arch.n_hidden() {
            let ow = old.weight(h);
            self.weight_mut(h).slice_mut(ndarray::s![..ow.nrows(), ..ow.ncols()]).assign(&ow);
            let ob = old.bias(h);
            let r = self.bias_range(h);
            self.values[r.start..r.start + ob.len()].copy_from_slice(ob.as_slice().unwrap());
            let om = old.mix(h);
            self.mix_mut(h).slice_mut(ndarray::s![.., ..om.ncols()]).assign(&om);
        }
        let r = self.out_bias_range();
        self.values[r].copy_from_slice(old.out_bias().as_slice().unwrap());
    }

    /// Text checkpoint: a version line, the architecture, the activations,
    /// the parameter count, then one value per line in canonical order.
    /// Values use the shortest decimal that round-trips, so reading back is
    /// bit-exact.
    pub fn write_checkpoint<W: Write>(&self, acts: &LayerActivations, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        let widths: Vec<String> = self.arch.widths().iter().map(|v| v.to_string()).collect();
        writeln!(w, "arch {}", widths.join(" "))?;
        let names: Vec<&str> = acts.kinds().iter().map(|k| k.name()).collect();
        writeln!(w, "activations {}", names.join(" "))?;
        writeln!(w, "params {}", self.values.len())?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<(HLConcParams, LayerActivations), Error> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut lines = r.lines();
        let mut next = || -> Result<String, Error> { lines.next().ok_or_else(|| bad("truncated"))?.map_err(Error::from) };
        if next()?.trim() != CHECKPOINT_MAGIC {
            return Err(bad("bad header"));
        }
        let arch_line = next()?;
        let widths = arch_line
            .strip_prefix("arch ")
            .ok_or_else(|| bad("missing arch"))?
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|_| bad("bad width")))
            .collect::<Result<Vec<_>, _>>()?;
        let arch = ArchVector::new(widths)?;
        let act_line = next()?;
        let acts = act_line
            .strip_prefix("activations ")
            .ok_or_else(|| bad("missing activations"))?
            .split_whitespace()
            .map(|s| s.parse::<ActivationKind>())
            .collect::<Result<Vec<_>, _>>()?;
        let count: usize = next()?
            .strip_prefix("params ")
            .ok_or_else(|| bad("missing params"))?
            .trim()
            .parse()
            .map_err(|_| bad("bad count"))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(next()?.trim().parse::<f64>().map_err(|_| bad("bad value"))?);
        }
        let acts = LayerActivations(acts);
        acts.validate(&arch, true)?;
        Ok((HLConcParams::from_values(arch, values)?, acts))
    }
}

const CHECKPOINT_MAGIC: &str = "hlconc-checkpoint v1";

/// Conventional FNN: the same hidden maps, then one affine output map from
/// the last hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainFNNParams {
    pub hidden_weights: Vec<Array2<f64>>,
    pub hidden_biases: Vec<Vec<f64>>,
    pub out_weight: Array2<f64>,
    pub out_bias: Vec<f64>,
}

impl PlainFNNParams {
    pub fn zeros(arch: &ArchVector) -> Self {
        let w = arch.widths();
        let l = w.len() - 1;
        PlainFNNParams {
            hidden_weights: (1..l).map(|k| Array2::zeros((w[k], w[k - 1]))).collect(),
            hidden_biases: (1..l).map(|k| vec![0.0; w[k]]).collect(),
            out_weight: Array2::zeros((w[l], w[l - 1])),
            out_bias: vec![0.0; w[l]],
        }
    }

    pub fn random<R: Rng>(arch: &ArchVector, rng: &mut R, scale: f64) -> Self {
        let mut p = PlainFNNParams::zeros(arch);
        for w in p.hidden_weights.iter_mut().chain(std::iter::once(&mut p.out_weight)) {
            w.mapv_inplace(|_| rng.random_range(-scale..scale));
        }
        for b in p.hidden_biases.iter_mut().chain(std::iter::once(&mut p.out_bias)) {
            b.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
        }
        p
    }

    /// Conventional parameter count: hidden coefficients plus `(l_{L-1} + 1) l_L`.
    pub fn len(&self) -> usize {
        let hidden: usize = self
            .hidden_weights
            .iter()
            .zip(&self.hidden_biases)
            .map(|(w, b)| w.len() + b.len())
            .sum();
        hidden + self.out_weight.len() + self.out_bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Output jets at one point.
    pub fn forward_fnn_jet(&self, acts: &LayerActivations, x: f64, t: f64) -> Vec<Jet2> {
        let mut layer = vec![Jet2::seed_x(x), Jet2::seed_t(t)];
        for ((w, b), act) in self.hidden_weights.iter().zip(&self.hidden_biases).zip(acts.kinds()) {
            layer = (0..w.nrows())
                .map(|j| {
                    let z = (0..w.ncols()).fold(Jet2::constant(b[j]), |z, m| z + layer[m].scale(w[[j, m]]));
                    let d = act.eval_derivs(z.val);
                    jet_chain([d[0], d[1], d[2]], z)
                })
                .collect();
        }
        (0..self.out_weight.nrows())
            .map(|o| {
                (0..self.out_weight.ncols()).fold(Jet2::constant(self.out_bias[o]), |u, j| {
                    u + layer[j].scale(self.out_weight[[o, j]])
                })
            })
            .collect()
    }

    /// The same function as an HLConcFNN: zero mixing for all but the last
    /// hidden layer, whose mixing matrix is the FNN output map.
    pub fn to_hlconc(&self, arch: &ArchVector) -> HLConcParams {
        let mut p = HLConcParams::zeros(arch.clone());
        for h in 0..arch.n_hidden() {
            p.weight_mut(h).assign(&self.hidden_weights[h]);
            let r = p.bias_range(h);
            p.values[r].copy_from_slice(&self.hidden_biases[h]);
        }
        p.mix_mut(arch.n_hidden() - 1).assign(&self.out_weight);
        let r = p.out_bias_range();
        p.values[r].copy_from_slice(&self.out_bias);
        p
    }
}

/// Anything that yields output jets on a batch of points: a trained network,
/// or a closed-form exact solution.
pub trait Field {
    fn n_outputs(&self) -> usize;
    fn eval_batch(&self, xs: &[f64], ts: &[f64], order: Order) -> JetBatch;
}

/// Parameters together with their activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub params: HLConcParams,
    pub acts: LayerActivations,
}

impl Network {
    pub fn new(params: HLConcParams, acts: LayerActivations) -> Self {
        Network { params, acts }
    }
}

/// Chunk size for large evaluation batches; keeps the tape small.
const EVAL_CHUNK: usize = 8192;

impl Field for Network {
    fn n_outputs(&self) -> usize {
        self.params.arch().out_dim()
    }

    fn eval_batch(&self, xs: &[f64], ts: &[f64], order: Order) -> JetBatch {
        let n = xs.len();
        if n <= EVAL_CHUNK {
            return self.params.forward_batch(&self.acts, xs, ts, order);
        }
        let mut out = JetBatch::zeros(self.n_outputs(), order, n);
        let mut start = 0;
        while start < n {
            let end = (start + EVAL_CHUNK).min(n);
            let part = self.params.forward_batch(&self.acts, &xs[start..end], &ts[start..end], order);
            for o in 0..self.n_outputs() {
                for c in 0..order.n_channels() {
                    let ch = CHANNELS[c];
                    out.channel_mut(o, ch)[start..end].copy_from_slice(part.channel(o, ch));
                }
            }
            start = end;
        }
        out
    }
}

pub(crate) const CHANNELS: [Channel; 5] = [Channel::Val, Channel::X, Channel::T, Channel::XX, Channel::XT];
