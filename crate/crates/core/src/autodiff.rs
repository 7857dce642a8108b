//! Second-order input jets over `(x, t)` and exact parameter gradients of
//! losses built from them.
//!
//! Two representations are provided. [`Jet2`] is a scalar jet used for closed
//! forms and pointwise network evaluation. [`JetBatch`] stores a whole layer's
//! jets for many points as one matrix so that affine maps become single GEMMs;
//! the reverse pass in [`loss_gradient`] runs over these batches.

use std::ops::{Add, Mul, Neg, Sub};

use ndarray::{Array2, ArrayView2};

use crate::activations::ActivationKind;
use crate::error::NonFiniteError;
use crate::network::{HLConcParams, LayerActivations};

/// Value with first and second partial derivatives in `x` and `t`.
///
/// `d_tt` is not carried; none of the residuals need it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub val: f64,
    pub d_x: f64,
    pub d_t: f64,
    pub d_xx: f64,
    pub d_xt: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2::constant(0.0);
    pub const ONE: Jet2 = Jet2::constant(1.0);

    pub const fn new(val: f64, d_x: f64, d_t: f64, d_xx: f64, d_xt: f64) -> Self {
        Jet2 { val, d_x, d_t, d_xx, d_xt }
    }

    pub const fn constant(c: f64) -> Self {
        Jet2::new(c, 0.0, 0.0, 0.0, 0.0)
    }

    /// Jet of the input coordinate `x`.
    pub const fn seed_x(x: f64) -> Self {
        Jet2::new(x, 1.0, 0.0, 0.0, 0.0)
    }

    /// Jet of the input coordinate `t`.
    pub const fn seed_t(t: f64) -> Self {
        Jet2::new(t, 0.0, 1.0, 0.0, 0.0)
    }

    /// Jet of `g(x)` from the univariate derivatives `[g, g', g'']`.
    pub const fn of_x(g: [f64; 3]) -> Self {
        Jet2::new(g[0], g[1], 0.0, g[2], 0.0)
    }

    /// Jet of `g(t)` from `[g, g']` (no `d_tt` channel).
    pub const fn of_t(g: [f64; 2]) -> Self {
        Jet2::new(g[0], 0.0, g[1], 0.0, 0.0)
    }

    pub fn scale(self, s: f64) -> Self {
        Jet2::new(
            s * self.val,
            s * self.d_x,
            s * self.d_t,
            s * self.d_xx,
            s * self.d_xt,
        )
    }

    pub fn channel(&self, ch: Channel) -> f64 {
        match ch {
            Channel::Val => self.val,
            Channel::X => self.d_x,
            Channel::T => self.d_t,
            Channel::XX => self.d_xx,
            Channel::XT => self.d_xt,
        }
    }

    pub fn components(&self) -> [f64; 5] {
        [self.val, self.d_x, self.d_t, self.d_xx, self.d_xt]
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.val.sin_cos();
        jet_chain([s, c, -s], self)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.val.sin_cos();
        jet_chain([c, -s, -c], self)
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|v| v.is_finite())
    }
}

/// Componentwise sum.
pub fn jet_add(a: Jet2, b: Jet2) -> Jet2 {
    Jet2::new(
        a.val + b.val,
        a.d_x + b.d_x,
        a.d_t + b.d_t,
        a.d_xx + b.d_xx,
        a.d_xt + b.d_xt,
    )
}

/// Product rule through second order.
pub fn jet_mul(a: Jet2, b: Jet2) -> Jet2 {
    Jet2::new(
        a.val * b.val,
        a.d_x * b.val + a.val * b.d_x,
        a.d_t * b.val + a.val * b.d_t,
        a.d_xx * b.val + 2.0 * a.d_x * b.d_x + a.val * b.d_xx,
        a.d_xt * b.val + a.d_x * b.d_t + a.d_t * b.d_x + a.val * b.d_xt,
    )
}

/// Composition `f(a)` given `[f(z), f'(z), f''(z)]` at `z = a.val`.
pub fn jet_chain(f: [f64; 3], a: Jet2) -> Jet2 {
    let [f0, f1, f2] = f;
    Jet2::new(
        f0,
        f1 * a.d_x,
        f1 * a.d_t,
        f2 * a.d_x * a.d_x + f1 * a.d_xx,
        f2 * a.d_x * a.d_t + f1 * a.d_xt,
    )
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        jet_add(self, rhs)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        jet_add(self, -rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        jet_mul(self, rhs)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        rhs.scale(self)
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: f64) -> Jet2 {
        Jet2 { val: self.val + rhs, ..self }
    }
}

/// One derivative channel of a jet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Val = 0,
    X = 1,
    T = 2,
    XX = 3,
    XT = 4,
}

/// How many channels a batch carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    /// value only
    Value,
    /// value, `d_x`, `d_t`
    First,
    /// all five channels
    Second,
}

impl Order {
    pub fn n_channels(self) -> usize {
        match self {
            Order::Value => 1,
            Order::First => 3,
            Order::Second => 5,
        }
    }

    pub fn has(self, ch: Channel) -> bool {
        (ch as usize) < self.n_channels()
    }
}

/// Jets of `rows` scalar quantities at `n_points` points.
///
/// Stored as a `rows x (channels * n_points)` matrix: column `c * n_points + p`
/// holds channel `c` at point `p`. Affine maps act on all channels at once and
/// biases touch only the value block.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    pub order: Order,
    pub n_points: usize,
    pub data: Array2<f64>,
}

impl JetBatch {
    pub fn zeros(rows: usize, order: Order, n_points: usize) -> Self {
        JetBatch {
            order,
            n_points,
            data: Array2::zeros((rows, order.n_channels() * n_points)),
        }
    }

    /// Input-layer jets: row 0 seeds `x`, row 1 seeds `t`.
    pub fn inputs(xs: &[f64], ts: &[f64], order: Order) -> Self {
        assert_eq!(xs.len(), ts.len());
        let n = xs.len();
        let mut b = JetBatch::zeros(2, order, n);
        b.data.row_mut(0).as_slice_mut().unwrap()[..n].copy_from_slice(xs);
        b.data.row_mut(1).as_slice_mut().unwrap()[..n].copy_from_slice(ts);
        if order >= Order::First {
            b.channel_mut(0, Channel::X).fill(1.0);
            b.channel_mut(1, Channel::T).fill(1.0);
        }
        b
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn channel(&self, row: usize, ch: Channel) -> &[f64] {
        assert!(self.order.has(ch), "channel {ch:?} not carried at {:?}", self.order);
        let n = self.n_points;
        let c = ch as usize;
        &self.data.row(row).to_slice().unwrap()[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, row: usize, ch: Channel) -> &mut [f64] {
        assert!(self.order.has(ch), "channel {ch:?} not carried at {:?}", self.order);
        let n = self.n_points;
        let c = ch as usize;
        &mut self.data.row_mut(row).into_slice().unwrap()[c * n..(c + 1) * n]
    }

    /// Jet of `row` at point `p`; channels not carried read as zero.
    pub fn jet(&self, row: usize, p: usize) -> Jet2 {
        let n = self.n_points;
        let r = self.data.row(row);
        let get = |c: usize| if c < self.order.n_channels() { r[c * n + p] } else { 0.0 };
        Jet2::new(get(0), get(1), get(2), get(3), get(4))
    }
}

/// Derivatives `f', f'', f'''` of one layer's activation at its pre-activation values.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    d1: Array2<f64>,
    d2: Array2<f64>,
    d3: Array2<f64>,
}

/// Applies `act` to every jet in `z` (chain rule per channel).
pub fn activate_batch(act: ActivationKind, z: &JetBatch) -> (JetBatch, ActivationCache) {
    let n = z.n_points;
    let rows = z.rows();
    let order = z.order;
    // built by pushing rather than zero-filling: every entry is written once
    let mut a = Vec::with_capacity(rows * order.n_channels() * n);
    let mut d1v = Vec::with_capacity(rows * n);
    let mut d2v = Vec::with_capacity(rows * n);
    let mut d3v = Vec::with_capacity(rows * n);
    for r in 0..rows {
        let zr = z.data.row(r).to_slice().unwrap();
        let base = d1v.len();
        for &zp in &zr[..n] {
            let [f0, f1, f2, f3] = act.eval_derivs(zp);
            a.push(f0);
            d1v.push(f1);
            d2v.push(f2);
            d3v.push(f3);
        }
        if order == Order::Value {
            continue;
        }
        let (d1, d2) = (&d1v[base..], &d2v[base..]);
        let zx = &zr[n..2 * n];
        let zt = &zr[2 * n..3 * n];
        a.extend(d1.iter().zip(zx).map(|(f, x)| f * x));
        a.extend(d1.iter().zip(zt).map(|(f, t)| f * t));
        if order == Order::Second {
            let zxx = &zr[3 * n..4 * n];
            let zxt = &zr[4 * n..5 * n];
            a.extend((0..n).map(|p| d2[p] * zx[p] * zx[p] + d1[p] * zxx[p]));
            a.extend((0..n).map(|p| d2[p] * zx[p] * zt[p] + d1[p] * zxt[p]));
        }
    }
    let shape = |v: Vec<f64>, cols: usize| Array2::from_shape_vec((rows, cols), v).unwrap();
    let a = JetBatch { order, n_points: n, data: shape(a, order.n_channels() * n) };
    let cache = ActivationCache { d1: shape(d1v, n), d2: shape(d2v, n), d3: shape(d3v, n) };
    (a, cache)
}

/// Adjoint of [`activate_batch`]: maps `a_bar` (adjoint of the activated jets)
/// to the adjoint of the pre-activation jets `z`.
pub fn activate_batch_adjoint(z: &JetBatch, cache: &ActivationCache, a_bar: &Array2<f64>) -> Array2<f64> {
    let n = z.n_points;
    let rows = z.rows();
    let order = z.order;
    let mut z_bar = Array2::zeros(a_bar.raw_dim());
    for r in 0..rows {
        let zr = z.data.row(r).to_slice().unwrap();
        let ab = a_bar.row(r).to_slice().unwrap();
        let zb = z_bar.row_mut(r).into_slice().unwrap();
        let d1 = cache.d1.row(r).to_slice().unwrap();
        let d2 = cache.d2.row(r).to_slice().unwrap();
        let d3 = cache.d3.row(r).to_slice().unwrap();
        match order {
            Order::Value => {
                for p in 0..n {
                    zb[p] = ab[p] * d1[p];
                }
            }
            Order::First => {
                let (zx, zt) = (&zr[n..2 * n], &zr[2 * n..3 * n]);
                let (abv, abx, abt) = (&ab[..n], &ab[n..2 * n], &ab[2 * n..3 * n]);
                let (zbv, rest) = zb.split_at_mut(n);
                let (zbx, zbt) = rest.split_at_mut(n);
                for p in 0..n {
                    zbv[p] = abv[p] * d1[p] + (abx[p] * zx[p] + abt[p] * zt[p]) * d2[p];
                    zbx[p] = abx[p] * d1[p];
                    zbt[p] = abt[p] * d1[p];
                }
            }
            Order::Second => {
                let zx = &zr[n..2 * n];
                let zt = &zr[2 * n..3 * n];
                let zxx = &zr[3 * n..4 * n];
                let zxt = &zr[4 * n..5 * n];
                let abv = &ab[..n];
                let abx = &ab[n..2 * n];
                let abt = &ab[2 * n..3 * n];
                let abxx = &ab[3 * n..4 * n];
                let abxt = &ab[4 * n..5 * n];
                let (zbv, rest) = zb.split_at_mut(n);
                let (zbx, rest) = rest.split_at_mut(n);
                let (zbt, rest) = rest.split_at_mut(n);
                let (zbxx, zbxt) = rest.split_at_mut(n);
                for p in 0..n {
                    let (f1, f2, f3) = (d1[p], d2[p], d3[p]);
                    let (x, t) = (zx[p], zt[p]);
                    zbv[p] = abv[p] * f1
                        + (abx[p] * x + abt[p] * t) * f2
                        + abxx[p] * (f3 * x * x + f2 * zxx[p])
                        + abxt[p] * (f3 * x * t + f2 * zxt[p]);
                    zbx[p] = abx[p] * f1 + 2.0 * abxx[p] * f2 * x + abxt[p] * f2 * t;
                    zbt[p] = abt[p] * f1 + abxt[p] * f2 * x;
                    zbxx[p] = abxx[p] * f1;
                    zbxt[p] = abxt[p] * f1;
                }
            }
        }
    }
    z_bar
}

/// Gradient with respect to every trainable parameter, in the network's
/// canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(pub Vec<f64>);

impl GradVector {
    pub fn zeros(n: usize) -> Self {
        GradVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// A set of points evaluated together at one jet order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub name: &'static str,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub order: Order,
}

impl PointSet {
    pub fn new(name: &'static str, xs: Vec<f64>, ts: Vec<f64>, order: Order) -> Self {
        assert_eq!(xs.len(), ts.len());
        PointSet { name, xs, ts, order }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Loss value plus its adjoint with respect to each point set's output jets.
///
/// `output_adjoints[g]` has the shape of the output [`JetBatch`] data of set `g`.
#[derive(Debug, Clone)]
pub struct LossAdjoint {
    pub value: f64,
    pub output_adjoints: Vec<Array2<f64>>,
}

/// Evaluates a loss defined on network output jets and returns its exact
/// gradient with respect to all parameters.
///
/// The forward pass runs each point set at its own jet order; the loss
/// closure sees the output jets and returns their adjoints; one reverse pass
/// per set accumulates the parameter gradient in a fixed order.
pub fn loss_gradient<F>(
    params: &HLConcParams,
    acts: &LayerActivations,
    sets: &[PointSet],
    loss: F,
) -> Result<(f64, GradVector), NonFiniteError>
where
    F: FnOnce(&[JetBatch]) -> Result<LossAdjoint, NonFiniteError>,
{
    let taped: Vec<_> = sets
        .iter()
        .map(|s| params.forward_taped(acts, &s.xs, &s.ts, s.order))
        .collect();
    let outputs: Vec<JetBatch> = taped.iter().map(|(out, _)| out.clone()).collect();
    let adj = loss(&outputs)?;
    if !adj.value.is_finite() {
        return Err(locate_non_finite(sets, &outputs));
    }
    let mut grad = GradVector::zeros(params.len());
    for ((_, tape), u_bar) in taped.iter().zip(&adj.output_adjoints) {
        params.backward(tape, u_bar.view(), &mut grad.0);
    }
    Ok((adj.value, grad))
}

pub(crate) fn locate_non_finite(sets: &[PointSet], outputs: &[JetBatch]) -> NonFiniteError {
    for (set, out) in sets.iter().zip(outputs) {
        for p in 0..out.n_points {
            if (0..out.rows()).any(|r| !out.jet(r, p).is_finite()) {
                return NonFiniteError { set: set.name, index: p };
            }
        }
    }
    NonFiniteError { set: sets.first().map_or("loss", |s| s.name), index: 0 }
}

/// `out += a * b^T` summed over all columns, i.e. the weight-gradient GEMM.
pub(crate) fn accumulate_outer(out: &mut ndarray::ArrayViewMut2<f64>, a: ArrayView2<f64>, b: ArrayView2<f64>) {
    ndarray::linalg::general_mat_mul(1.0, &a, &b.t(), 1.0, out);
}
