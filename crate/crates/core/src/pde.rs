//! The four model problems: coefficients, closed-form solutions,
//! manufactured sources, and residual evaluators.
//!
//! Residuals are produced in linearized form: values plus partial derivatives
//! with respect to individual output jet channels, which is all the loss
//! assembly needs to back-propagate into the network.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{jet_chain, Channel, Jet2, JetBatch, Order};
use crate::error::ConfigError;
use crate::network::{Field, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Heat,
    Burgers,
    Wave,
    KleinGordon,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::Heat,
        ProblemKind::Burgers,
        ProblemKind::Wave,
        ProblemKind::KleinGordon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Heat => "heat",
            ProblemKind::Burgers => "burgers",
            ProblemKind::Wave => "wave",
            ProblemKind::KleinGordon => "kleingordon",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::UnknownProblem(s.to_string()))
    }
}

/// PDE and its coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pde {
    /// `u_t - nu u_xx = f`
    Heat { nu: f64 },
    /// `u_t - nu u_xx + u u_x = f`
    Burgers { nu: f64 },
    /// `u_tt - c^2 u_xx = 0`, periodic in x; `delta0` sets the pulse width.
    Wave { c: f64, delta0: f64, x0: f64 },
    /// `eps^2 u_tt - a^2 u_xx + eps1^2 u + sin(u) = f`
    KleinGordon { eps: f64, a: f64, eps1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub pde: Pde,
    pub x_domain: (f64, f64),
    pub horizon: f64,
    pub weights: Vec<f64>,
}

impl ProblemSpec {
    pub fn heat() -> Self {
        ProblemSpec {
            pde: Pde::Heat { nu: 0.1 },
            x_domain: (0.0, 1.0),
            horizon: 10.0,
            weights: vec![0.8, 0.9, 0.9],
        }
    }

    pub fn burgers() -> Self {
        ProblemSpec {
            pde: Pde::Burgers { nu: 1.0 },
            x_domain: (0.0, 2.0),
            horizon: 10.0,
            weights: vec![0.6, 0.4, 0.4, 0.4, 0.4],
        }
    }

    pub fn wave() -> Self {
        ProblemSpec {
            pde: Pde::Wave { c: 2.0, delta0: 2.0, x0: 3.0 },
            x_domain: (0.0, 5.0),
            horizon: 10.0,
            weights: vec![0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1],
        }
    }

    pub fn klein_gordon() -> Self {
        ProblemSpec {
            pde: Pde::KleinGordon { eps: 1.0, a: 1.0, eps1: 1.0 },
            x_domain: (0.0, 1.0),
            horizon: 10.0,
            weights: vec![0.4, 0.4, 0.4, 0.6, 0.6, 0.6, 0.6],
        }
    }

    pub fn for_kind(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Heat => Self::heat(),
            ProblemKind::Burgers => Self::burgers(),
            ProblemKind::Wave => Self::wave(),
            ProblemKind::KleinGordon => Self::klein_gordon(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self, ConfigError> {
        Ok(Self::for_kind(name.parse()?))
    }

    pub fn kind(&self) -> ProblemKind {
        match self.pde {
            Pde::Heat { .. } => ProblemKind::Heat,
            Pde::Burgers { .. } => ProblemKind::Burgers,
            Pde::Wave { .. } => ProblemKind::Wave,
            Pde::KleinGordon { .. } => ProblemKind::KleinGordon,
        }
    }

    /// 1 for scalar problems, 2 for the `(u, v)` first-order-in-time systems.
    pub fn n_outputs(&self) -> usize {
        match self.pde {
            Pde::Heat { .. } | Pde::Burgers { .. } => 1,
            Pde::Wave { .. } | Pde::KleinGordon { .. } => 2,
        }
    }

    pub fn n_interior(&self) -> usize {
        if self.n_outputs() == 1 {
            1
        } else {
            3
        }
    }

    /// Components matched at block boundaries: `u`, or `u, v, u_x`.
    pub fn temporal_components(&self) -> &'static [(usize, Channel)] {
        if self.n_outputs() == 1 {
            &[(0, Channel::Val)]
        } else {
            &[(0, Channel::Val), (1, Channel::Val), (0, Channel::X)]
        }
    }

    pub fn n_weights(&self) -> usize {
        match self.pde {
            Pde::Heat { .. } => 3,
            Pde::Burgers { .. } => 5,
            Pde::Wave { .. } => 8,
            Pde::KleinGordon { .. } => 7,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.weights.len() != self.n_weights() {
            return Err(ConfigError::WeightCount {
                expected: self.n_weights(),
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(ConfigError::Invalid("penalty weights must be positive".into()));
        }
        if !(self.x_domain.1 > self.x_domain.0) || !(self.horizon > 0.0) {
            return Err(ConfigError::Invalid("empty space-time domain".into()));
        }
        Ok(())
    }

    pub fn interior_order(&self) -> Order {
        Order::Second
    }

    pub fn boundary_order(&self) -> Order {
        match self.pde {
            Pde::Wave { .. } => Order::First,
            _ => Order::Value,
        }
    }

    pub fn temporal_order(&self) -> Order {
        if self.n_outputs() == 1 {
            Order::Value
        } else {
            Order::First
        }
    }

    /// Exact `(u, v)` jets; `v = u_t` (its `d_t` channel holds `u_tt`).
    pub fn exact_jets(&self, x: f64, t: f64) -> (Jet2, Jet2) {
        match self.pde {
            Pde::Heat { .. } => separable(heat_profile, x, t),
            Pde::Burgers { .. } => separable(burgers_profile, x, t),
            Pde::KleinGordon { .. } => separable(kg_profile, x, t),
            Pde::Wave { c, delta0, x0 } => {
                let k = 3.0 / delta0;
                let (l0, l1) = self.x_domain;
                let period = l1 - l0;
                let half = 0.5 * period;
                let xi = (x - x0 + c * t + half).rem_euclid(period);
                let eta = (x - x0 - c * t + half).rem_euclid(period);
                let fx = sech3_derivs(k, xi - half);
                let fe = sech3_derivs(k, eta - half);
                let jx = Jet2::new(xi, 1.0, c, 0.0, 0.0);
                let je = Jet2::new(eta, 1.0, -c, 0.0, 0.0);
                let u = jet_chain([fx[0], fx[1], fx[2]], jx) + jet_chain([fe[0], fe[1], fe[2]], je);
                let v = (jet_chain([fx[1], fx[2], fx[3]], jx) - jet_chain([fe[1], fe[2], fe[3]], je)).scale(c);
                (u, v)
            }
        }
    }

    /// Exact `(u, v)`; `v = u_t`, meaningful for the two-field problems.
    pub fn exact_solution(&self, x: f64, t: f64) -> (f64, f64) {
        let (u, v) = self.exact_jets(x, t);
        (u.val, v.val)
    }

    /// Manufactured source: the PDE operator applied to the exact solution.
    pub fn source_term(&self, x: f64, t: f64) -> f64 {
        let (u, v) = self.exact_jets(x, t);
        match self.pde {
            Pde::Heat { nu } => u.d_t - nu * u.d_xx,
            Pde::Burgers { nu } => u.d_t - nu * u.d_xx + u.val * u.d_x,
            Pde::Wave { .. } => 0.0,
            Pde::KleinGordon { eps, a, eps1 } => eps * eps * v.d_t - a * a * u.d_xx + eps1 * eps1 * u.val + u.val.sin(),
        }
    }

    /// Interior residual values at one point from the output jets `(u[, v])`.
    pub fn interior_residual_values(&self, out: &[Jet2], f: f64) -> Vec<f64> {
        let u = out[0];
        match self.pde {
            Pde::Heat { nu } => vec![u.d_t - nu * u.d_xx - f],
            Pde::Burgers { nu } => vec![u.d_t - nu * u.d_xx + u.val * u.d_x - f],
            Pde::Wave { c, .. } => {
                let v = out[1];
                vec![u.d_t - v.val, v.d_t - c * c * u.d_xx - f, u.d_xt - v.d_x]
            }
            Pde::KleinGordon { eps, a, eps1 } => {
                let v = out[1];
                vec![
                    u.d_t - v.val,
                    eps * eps * v.d_t - a * a * u.d_xx + eps1 * eps1 * u.val + u.val.sin() - f,
                    u.d_xt - v.d_x,
                ]
            }
        }
    }

    /// Interior residual families on a batch of network outputs.
    pub fn interior_residuals(&self, out: &JetBatch, set: usize, source: &[f64]) -> Vec<Residual> {
        let n = out.n_points;
        let u = |ch| out.channel(0, ch);
        let lin = |name, terms: &[(usize, Channel, f64)], extra: &dyn Fn(usize) -> f64| {
            let mut values = vec![0.0; n];
            for &(o, ch, c) in terms {
                for (r, &v) in values.iter_mut().zip(out.channel(o, ch)) {
                    *r += c * v;
                }
            }
            for (p, r) in values.iter_mut().enumerate() {
                *r += extra(p);
            }
            Residual {
                name,
                values,
                partials: terms
                    .iter()
                    .map(|&(o, ch, c)| Partial { set, output: o, channel: ch, coeff: Coeff::Const(c) })
                    .collect(),
            }
        };
        let minus_f = |p: usize| -source[p];
        let zero = |_: usize| 0.0;
        match self.pde {
            Pde::Heat { nu } => vec![lin("interior", &[(0, Channel::T, 1.0), (0, Channel::XX, -nu)], &minus_f)],
            Pde::Burgers { nu } => {
                let (uv, ux) = (u(Channel::Val), u(Channel::X));
                let nonlinear = |p: usize| uv[p] * ux[p] - source[p];
                let mut r = lin("interior", &[(0, Channel::T, 1.0), (0, Channel::XX, -nu)], &nonlinear);
                r.partials.push(Partial { set, output: 0, channel: Channel::Val, coeff: Coeff::PerPoint(ux.to_vec()) });
                r.partials.push(Partial { set, output: 0, channel: Channel::X, coeff: Coeff::PerPoint(uv.to_vec()) });
                vec![r]
            }
            Pde::Wave { c, .. } => vec![
                lin("interior_u", &[(0, Channel::T, 1.0), (1, Channel::Val, -1.0)], &zero),
                lin("interior_v", &[(1, Channel::T, 1.0), (0, Channel::XX, -c * c)], &minus_f),
                lin("interior_grad", &[(0, Channel::XT, 1.0), (1, Channel::X, -1.0)], &zero),
            ],
            Pde::KleinGordon { eps, a, eps1 } => {
                let uv = u(Channel::Val);
                let nonlinear = |p: usize| eps1 * eps1 * uv[p] + uv[p].sin() - source[p];
                let mut r2 = lin("interior_v", &[(1, Channel::T, eps * eps), (0, Channel::XX, -a * a)], &nonlinear);
                let du: Vec<f64> = uv.iter().map(|u| eps1 * eps1 + u.cos()).collect();
                r2.partials.push(Partial { set, output: 0, channel: Channel::Val, coeff: Coeff::PerPoint(du) });
                vec![
                    lin("interior_u", &[(0, Channel::T, 1.0), (1, Channel::Val, -1.0)], &zero),
                    r2,
                    lin("interior_grad", &[(0, Channel::XT, 1.0), (1, Channel::X, -1.0)], &zero),
                ]
            }
        }
    }

    /// Data on the boundary times of the left and right boundary sets: the
    /// Dirichlet values for heat/Burgers, `u_t` for Klein–Gordon, nothing for
    /// the periodic wave problem.
    pub fn boundary_data(&self, ts: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = self.x_domain;
        let pick = |x: f64| -> Vec<f64> {
            ts.iter()
                .map(|&t| {
                    let (u, v) = self.exact_jets(x, t);
                    match self.pde {
                        Pde::KleinGordon { .. } => v.val,
                        _ => u.val,
                    }
                })
                .collect()
        };
        match self.pde {
            Pde::Wave { .. } => (Vec::new(), Vec::new()),
            _ => (pick(a), pick(b)),
        }
    }

    /// Spatial-boundary loss terms in penalty-weight order.
    pub fn boundary_terms(
        &self,
        left: &JetBatch,
        right: &JetBatch,
        sets: (usize, usize),
        data: &(Vec<f64>, Vec<f64>),
    ) -> Vec<BoundaryTerm> {
        let (sl, sr) = sets;
        let dirichlet = |name, out: &JetBatch, set, g: &[f64], o| Residual {
            name,
            values: out.channel(o, Channel::Val).iter().zip(g).map(|(u, g)| u - g).collect(),
            partials: vec![Partial { set, output: o, channel: Channel::Val, coeff: Coeff::Const(1.0) }],
        };
        let periodic = |name, o, ch| Residual {
            name,
            values: left.channel(o, ch).iter().zip(right.channel(o, ch)).map(|(l, r)| l - r).collect(),
            partials: vec![
                Partial { set: sl, output: o, channel: ch, coeff: Coeff::Const(1.0) },
                Partial { set: sr, output: o, channel: ch, coeff: Coeff::Const(-1.0) },
            ],
        };
        match self.pde {
            Pde::Heat { .. } => vec![BoundaryTerm {
                sqrt: true,
                families: vec![
                    dirichlet("boundary_left", left, sl, &data.0, 0),
                    dirichlet("boundary_right", right, sr, &data.1, 0),
                ],
            }],
            Pde::Burgers { .. } => {
                let l = dirichlet("boundary_left", left, sl, &data.0, 0);
                let r = dirichlet("boundary_right", right, sr, &data.1, 0);
                vec![
                    BoundaryTerm { sqrt: false, families: vec![l.clone(), r.clone()] },
                    BoundaryTerm { sqrt: true, families: vec![l] },
                    BoundaryTerm { sqrt: true, families: vec![r] },
                ]
            }
            Pde::Wave { .. } => vec![
                BoundaryTerm { sqrt: true, families: vec![periodic("periodic_v", 1, Channel::Val)] },
                BoundaryTerm { sqrt: true, families: vec![periodic("periodic_ux", 0, Channel::X)] },
            ],
            Pde::KleinGordon { .. } => vec![BoundaryTerm {
                sqrt: true,
                families: vec![
                    dirichlet("boundary_left", left, sl, &data.0, 1),
                    dirichlet("boundary_right", right, sr, &data.1, 1),
                ],
            }],
        }
    }

    /// Block-boundary matching residuals against a reference field's jets
    /// at the same points (exact initial data or a frozen earlier block).
    pub fn temporal_residuals(&self, out: &JetBatch, set: usize, target: &JetBatch) -> Vec<Residual> {
        const NAMES: [&str; 3] = ["temporal_u", "temporal_v", "temporal_ux"];
        self.temporal_components()
            .iter()
            .zip(NAMES)
            .map(|(&(o, ch), name)| Residual {
                name,
                values: out.channel(o, ch).iter().zip(target.channel(o, ch)).map(|(a, b)| a - b).collect(),
                partials: vec![Partial { set, output: o, channel: ch, coeff: Coeff::Const(1.0) }],
            })
            .collect()
    }
}

/// One residual family: a value per point and its linearization in the
/// output jet channels of one or more point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub name: &'static str,
    pub values: Vec<f64>,
    pub partials: Vec<Partial>,
}

/// `d residual[p] / d out[set](output, channel)[p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial {
    pub set: usize,
    pub output: usize,
    pub channel: Channel,
    pub coeff: Coeff,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coeff {
    Const(f64),
    PerPoint(Vec<f64>),
}

impl Coeff {
    #[inline]
    pub fn at(&self, p: usize) -> f64 {
        match self {
            Coeff::Const(c) => *c,
            Coeff::PerPoint(v) => v[p],
        }
    }
}

/// Boundary contribution `W (sum_f mean(r_f^2))` or its square root.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTerm {
    pub sqrt: bool,
    pub families: Vec<Residual>,
}

/// The closed-form solution as a [`Field`].
#[derive(Debug, Clone, Copy)]
pub struct ExactField<'a>(pub &'a ProblemSpec);

impl Field for ExactField<'_> {
    fn n_outputs(&self) -> usize {
        self.0.n_outputs()
    }

    fn eval_batch(&self, xs: &[f64], ts: &[f64], order: Order) -> JetBatch {
        let n = xs.len();
        let mut out = JetBatch::zeros(self.n_outputs(), order, n);
        for (p, (&x, &t)) in xs.iter().zip(ts).enumerate() {
            let (u, v) = self.0.exact_jets(x, t);
            for (o, jet) in [u, v].iter().take(self.n_outputs()).enumerate() {
                for &ch in &CHANNELS[..order.n_channels()] {
                    out.channel_mut(o, ch)[p] = jet.channel(ch);
                }
            }
        }
        out
    }
}

/// `(u, v)` for `u = X(x) X(t)` given `X, X', X'', X'''` at a point.
fn separable(profile: fn(f64) -> [f64; 4], x: f64, t: f64) -> (Jet2, Jet2) {
    let px = profile(x);
    let pt = profile(t);
    let gx = Jet2::of_x([px[0], px[1], px[2]]);
    (gx * Jet2::of_t([pt[0], pt[1]]), gx * Jet2::of_t([pt[1], pt[2]]))
}

fn heat_profile(s: f64) -> [f64; 4] {
    let (a, b) = (PI * s + PI / 5.0, 2.0 * PI * s - 3.0 * PI / 5.0);
    trig_pair(2.0, PI, a, 1.5, 2.0 * PI, b)
}

fn kg_profile(s: f64) -> [f64; 4] {
    let (a, b) = (PI * s + PI / 5.0, 2.0 * PI * s + 7.0 * PI / 20.0);
    trig_pair(2.0, PI, a, 1.8, 2.0 * PI, b)
}

/// Derivatives of `A cos(a) + B cos(b)` where `a' = ka`, `b' = kb`.
fn trig_pair(amp_a: f64, ka: f64, a: f64, amp_b: f64, kb: f64, b: f64) -> [f64; 4] {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    [
        amp_a * ca + amp_b * cb,
        -amp_a * ka * sa - amp_b * kb * sb,
        -amp_a * ka * ka * ca - amp_b * kb * kb * cb,
        amp_a * ka.powi(3) * sa + amp_b * kb.powi(3) * sb,
    ]
}

/// `(1/5 + s/10) (2 sin(pi s + 2pi/5) + cos(pi s - 3pi/5) / 2)` and derivatives.
fn burgers_profile(s: f64) -> [f64; 4] {
    let (a, b) = (PI * s + 2.0 * PI / 5.0, PI * s - 3.0 * PI / 5.0);
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let q = [
        2.0 * sa + 0.5 * cb,
        PI * (2.0 * ca - 0.5 * sb),
        -PI * PI * (2.0 * sa + 0.5 * cb),
        -PI.powi(3) * (2.0 * ca - 0.5 * sb),
    ];
    let l = 0.2 + s / 10.0;
    let dl = 0.1;
    [
        l * q[0],
        dl * q[0] + l * q[1],
        2.0 * dl * q[1] + l * q[2],
        3.0 * dl * q[2] + l * q[3],
    ]
}

/// `sech^3(k y)` and its first three derivatives with respect to `y`.
fn sech3_derivs(k: f64, y: f64) -> [f64; 4] {
    let z = k * y;
    let s = 1.0 / z.cosh();
    let th = z.tanh();
    let s3 = s * s * s;
    let s5 = s3 * s * s;
    [
        s3,
        k * (-3.0 * s3 * th),
        k * k * (9.0 * s3 - 12.0 * s5),
        k * k * k * (-27.0 * s3 * th + 60.0 * s5 * th),
    ]
}
