//! Reference implementations used as oracles by the integration tests. Kept
//! free of library numerics: networks are decoded from the raw parameter
//! vector and evaluated with plain scalar code, and exact solutions are
//! written out from their closed forms.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Scalar activations, written independently of the library.
pub fn activation(name: &str) -> fn(f64) -> f64 {
    match name {
        "tanh" => f64::tanh,
        "sine" => f64::sin,
        "gaussian" => |z| (-z * z).exp(),
        "swish" => |z| z / (1.0 + (-z).exp()),
        "softplus" => |z| if z > 30.0 { z } else { z.exp().ln_1p() },
        other => panic!("unknown activation {other}"),
    }
}

/// A concatenated network decoded from the canonical parameter layout:
/// every hidden layer's `W` (row-major) then `b`, then the mixing matrices
/// in layer order, then the output bias.
pub struct RefNet {
    pub widths: Vec<usize>,
    pub w: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    pub m: Vec<Vec<Vec<f64>>>,
    pub out_b: Vec<f64>,
    pub acts: Vec<fn(f64) -> f64>,
}

impl RefNet {
    pub fn decode(widths: &[usize], acts: &[&str], values: &[f64]) -> RefNet {
        let n_hidden = widths.len() - 2;
        let out = widths[n_hidden + 1];
        let mut k = 0;
        let mut take = |n: usize| {
            let s = values[k..k + n].to_vec();
            k += n;
            s
        };
        let mut w = Vec::new();
        let mut b = Vec::new();
        for h in 0..n_hidden {
            let (rows, cols) = (widths[h + 1], widths[h]);
            w.push((0..rows).map(|_| take(cols)).collect());
            b.push(take(rows));
        }
        let mut m = Vec::new();
        for h in 0..n_hidden {
            m.push((0..out).map(|_| take(widths[h + 1])).collect());
        }
        let out_b = take(out);
        assert_eq!(k, values.len(), "parameter count does not match {widths:?}");
        RefNet { widths: widths.to_vec(), w, b, m, out_b, acts: acts.iter().map(|a| activation(a)).collect() }
    }

    pub fn eval(&self, x: f64, t: f64) -> Vec<f64> {
        let mut u = self.out_b.clone();
        let mut a = vec![x, t];
        for h in 0..self.w.len() {
            let z: Vec<f64> = self.w[h]
                .iter()
                .zip(&self.b[h])
                .map(|(row, bj)| row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + bj)
                .collect();
            a = z.into_iter().map(self.acts[h]).collect();
            for (o, row) in self.m[h].iter().enumerate() {
                u[o] += row.iter().zip(&a).map(|(m, v)| m * v).sum::<f64>();
            }
        }
        u
    }
}

/// Parses the text checkpoint format into `(widths, activations, values)`.
pub fn read_checkpoint_text(text: &str) -> (Vec<usize>, Vec<String>, Vec<f64>) {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("hlconc-checkpoint v1"));
    let field = |line: Option<&str>, key: &str| -> Vec<String> {
        let line = line.expect("truncated checkpoint");
        let mut parts = line.split_whitespace();
        assert_eq!(parts.next(), Some(key));
        parts.map(str::to_string).collect()
    };
    let widths = field(lines.next(), "arch").iter().map(|s| s.parse().unwrap()).collect();
    let acts = field(lines.next(), "activations");
    let n: usize = field(lines.next(), "params")[0].parse().unwrap();
    let values: Vec<f64> = lines.take(n).map(|l| l.trim().parse().unwrap()).collect();
    assert_eq!(values.len(), n);
    (widths, acts, values)
}

/// Value and the five derivative channels `(u, u_x, u_t, u_xx, u_xt)` of
/// `f` by Richardson-extrapolated central differences.
pub fn fd_jet(f: impl Fn(f64, f64) -> f64, x: f64, t: f64, h: f64) -> [f64; 5] {
    let d = |h: f64| {
        let c = f(x, t);
        [
            c,
            (f(x + h, t) - f(x - h, t)) / (2.0 * h),
            (f(x, t + h) - f(x, t - h)) / (2.0 * h),
            (f(x + h, t) - 2.0 * c + f(x - h, t)) / (h * h),
            (f(x + h, t + h) - f(x + h, t - h) - f(x - h, t + h) + f(x - h, t - h)) / (4.0 * h * h),
        ]
    };
    let (a, b) = (d(h), d(h / 2.0));
    std::array::from_fn(|k| if k == 0 { a[0] } else { (4.0 * b[k] - a[k]) / 3.0 })
}

/// `(g, g', g'')` of a one-dimensional factor.
type Factor = [f64; 3];

/// `A cos(p s + a) + B cos(q s + b)`.
fn cos_pair(s: f64, (amp_a, p, a): (f64, f64, f64), (amp_b, q, b): (f64, f64, f64)) -> Factor {
    let (x, y) = (p * s + a, q * s + b);
    [
        amp_a * x.cos() + amp_b * y.cos(),
        -amp_a * p * x.sin() - amp_b * q * y.sin(),
        -amp_a * p * p * x.cos() - amp_b * q * q * y.cos(),
    ]
}

fn heat_factor(s: f64) -> Factor {
    cos_pair(s, (2.0, PI, PI / 5.0), (1.5, 2.0 * PI, -3.0 * PI / 5.0))
}

fn kg_factor(s: f64) -> Factor {
    cos_pair(s, (2.0, PI, PI / 5.0), (1.8, 2.0 * PI, 7.0 * PI / 20.0))
}

/// `(1/5 + s/10) (2 sin(pi s + 2pi/5) + cos(pi s - 3pi/5) / 2)`.
fn burgers_factor(s: f64) -> Factor {
    let l = [0.2 + s / 10.0, 0.1, 0.0];
    let (a, b) = (PI * s + 2.0 * PI / 5.0, PI * s - 3.0 * PI / 5.0);
    let q = [
        2.0 * a.sin() + 0.5 * b.cos(),
        2.0 * PI * a.cos() - 0.5 * PI * b.sin(),
        -2.0 * PI * PI * a.sin() - 0.5 * PI * PI * b.cos(),
    ];
    [l[0] * q[0], l[1] * q[0] + l[0] * q[1], 2.0 * l[1] * q[1] + l[0] * q[2]]
}

/// Exact fields with derivatives: `u` as `[u, u_x, u_t, u_xx, u_xt, u_tt]`.
pub fn exact_heat(x: f64, t: f64) -> [f64; 6] {
    separable(heat_factor(x), heat_factor(t))
}

pub fn exact_burgers(x: f64, t: f64) -> [f64; 6] {
    separable(burgers_factor(x), burgers_factor(t))
}

pub fn exact_kg(x: f64, t: f64) -> [f64; 6] {
    separable(kg_factor(x), kg_factor(t))
}

fn separable(g: Factor, h: Factor) -> [f64; 6] {
    [g[0] * h[0], g[1] * h[0], g[0] * h[1], g[2] * h[0], g[1] * h[1], g[0] * h[2]]
}

/// Periodic superposition of two `sech^3` pulses on `[0, 5]`, speed 2,
/// `delta0 = 2`, `x0 = 3`.
pub fn exact_wave(x: f64, t: f64) -> [f64; 6] {
    let (c, k, x0) = (2.0, 1.5, 3.0);
    let pulse = |y: f64| -> Factor {
        let s = 1.0 / (k * y).cosh();
        let th = (k * y).tanh();
        let s3 = s.powi(3);
        [s3, -3.0 * k * s3 * th, 3.0 * k * k * s3 * (4.0 * th * th - 1.0)]
    };
    let xi = (x - x0 + c * t + 2.5).rem_euclid(5.0);
    let eta = (x - x0 - c * t + 2.5).rem_euclid(5.0);
    let (p, q) = (pulse(xi - 2.5), pulse(eta - 2.5));
    [
        p[0] + q[0],
        p[1] + q[1],
        c * (p[1] - q[1]),
        p[2] + q[2],
        c * (p[2] - q[2]),
        c * c * (p[2] + q[2]),
    ]
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Rows of a headed CSV file as string fields.
pub fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

/// Relative l2 error of `approx` against `exact` over a uniform grid with
/// endpoints on `[a, b] x [t0, t1]`.
pub fn grid_l2(
    approx: impl Fn(f64, f64) -> f64,
    exact: impl Fn(f64, f64) -> f64,
    (a, b): (f64, f64),
    (t0, t1): (f64, f64),
    n: usize,
) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let t = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let x = a + (b - a) * j as f64 / (n - 1) as f64;
            let e = exact(x, t);
            num += (approx(x, t) - e).powi(2);
            den += e * e;
        }
    }
    (num / den).sqrt()
}
