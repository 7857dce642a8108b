//! Full-batch Adam and L-BFGS with a strong-Wolfe line search.
//!
//! The line search follows the cubic-interpolation bracketing/zoom scheme
//! popularized by PyTorch's `LBFGS(line_search_fn="strong_wolfe")`.
//! Non-finite objective values are treated as failed sufficient decrease,
//! which makes the search back off.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        AdamState { config, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, &g), (m, v)) in params.iter_mut().zip(grad).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop when the gradient 2-norm falls below this.
    pub tol_grad: f64,
    /// Relative decrease regarded as no progress.
    pub tol_change: f64,
    /// Consecutive no-progress iterations before stopping.
    pub patience: usize,
    pub max_iters: usize,
    pub max_line_search: usize,
    /// Consecutive line-search failures before giving up.
    pub max_failures: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 50,
            c1: 1e-4,
            c2: 0.9,
            tol_grad: 1e-9,
            tol_change: 1e-12,
            patience: 20,
            max_iters: 3000,
            max_line_search: 25,
            max_failures: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    MaxIters,
    GradientTolerance,
    NoProgress,
    LineSearchFailed,
    /// The iteration callback asked to stop.
    Interrupted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsReport {
    pub status: LbfgsStatus,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective at the start and after every accepted iteration.
    pub history: Vec<f64>,
}

/// Curvature pairs and counters carried across iterations.
#[derive(Debug, Clone, Default)]
pub struct LbfgsState {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    gamma: f64,
    pub iterations: usize,
    pub failures: usize,
}

impl LbfgsState {
    pub fn history_len(&self) -> usize {
        self.pairs.len()
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>, cap: usize) {
        let ys = dot(&s, &y);
        let yy = dot(&y, &y);
        // skip pairs without positive curvature
        if !(ys > f64::EPSILON * (dot(&s, &s) * yy).sqrt()) {
            return;
        }
        if self.pairs.len() == cap {
            self.pairs.pop_front();
        }
        self.gamma = ys / yy;
        self.pairs.push_back((s, y, 1.0 / ys));
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Two-loop recursion: `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alpha = vec![0.0; self.pairs.len()];
        for (k, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &q);
            axpy(-alpha[k], y, &mut q);
        }
        for v in &mut q {
            *v *= self.gamma;
        }
        for (k, (s, y, rho)) in self.pairs.iter().enumerate() {
            let beta = rho * dot(y, &q);
            axpy(alpha[k] - beta, s, &mut q);
        }
        q
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sanitize(f: f64) -> f64 {
    if f.is_finite() {
        f
    } else {
        f64::INFINITY
    }
}

/// Minimizer of the cubic through `(x1, f1, g1)` and `(x2, f2, g2)`,
/// clamped to `bounds` (default: the interval between the points).
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: Option<(f64, f64)>) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let t = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if t.is_nan() {
            return 0.5 * (lo + hi);
        }
        t.max(lo).min(hi)
    } else {
        0.5 * (lo + hi)
    }
}

/// Bracket width (in parameter units) below which the zoom stops.
const STEP_TOL: f64 = 1e-12;

struct Probe {
    t: f64,
    f: f64,
    g: Vec<f64>,
    gtd: f64,
}

struct LineSearchResult {
    t: f64,
    f: f64,
    g: Vec<f64>,
    evals: usize,
}

/// Strong-Wolfe line search along `d` from `x` (objective `f0`, slope `gtd0 < 0`).
fn strong_wolfe<F>(obj: &mut F, x: &[f64], t0: f64, d: &[f64], f0: f64, g0: &[f64], gtd0: f64, cfg: &LbfgsConfig) -> LineSearchResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d_norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut xt = vec![0.0; x.len()];
    let mut evals = 0;
    let mut eval = |t: f64, evals: &mut usize| -> Probe {
        for ((o, xi), di) in xt.iter_mut().zip(x).zip(d) {
            *o = xi + t * di;
        }
        let (f, g) = obj(&xt);
        *evals += 1;
        let gtd = dot(&g, d);
        Probe { t, f: sanitize(f), g, gtd }
    };
    let armijo = |p: &Probe| p.f > f0 + cfg.c1 * p.t * gtd0;

    let mut prev = Probe { t: 0.0, f: f0, g: g0.to_vec(), gtd: gtd0 };
    let mut new = eval(t0, &mut evals);
    let mut ls_iter = 0;
    let mut done = false;
    let mut bracket: Vec<Probe> = loop {
        if ls_iter >= cfg.max_line_search {
            break vec![Probe { t: 0.0, f: f0, g: g0.to_vec(), gtd: gtd0 }, new];
        }
        if armijo(&new) || (ls_iter > 1 && new.f >= prev.f) {
            break vec![prev, new];
        }
        if new.gtd.abs() <= -cfg.c2 * gtd0 {
            done = true;
            break vec![new];
        }
        if new.gtd >= 0.0 {
            break vec![prev, new];
        }
        let min_step = new.t + 0.01 * (new.t - prev.t);
        let max_step = new.t * 10.0;
        let t = cubic_interpolate(prev.t, prev.f, prev.gtd, new.t, new.f, new.gtd, Some((min_step, max_step)));
        prev = new;
        new = eval(t, &mut evals);
        ls_iter += 1;
    };

    if bracket.len() == 1 {
        let p = bracket.pop().unwrap();
        return LineSearchResult { t: p.t, f: p.f, g: p.g, evals };
    }
    let mut insuf_progress = false;
    let (mut low, mut high) = if bracket[0].f <= bracket[1].f { (0, 1) } else { (1, 0) };
    while !done && ls_iter < cfg.max_line_search {
        let (bmin, bmax) = (bracket[0].t.min(bracket[1].t), bracket[0].t.max(bracket[1].t));
        if (bracket[1].t - bracket[0].t).abs() * d_norm < STEP_TOL {
            break;
        }
        let mut t = cubic_interpolate(
            bracket[0].t,
            bracket[0].f,
            bracket[0].gtd,
            bracket[1].t,
            bracket[1].f,
            bracket[1].gtd,
            None,
        );
        let eps = 0.1 * (bmax - bmin);
        if (bmax - t).min(t - bmin) < eps {
            if insuf_progress || t >= bmax || t <= bmin {
                t = if (t - bmax).abs() < (t - bmin).abs() { bmax - eps } else { bmin + eps };
                insuf_progress = false;
            } else {
                insuf_progress = true;
            }
        } else {
            insuf_progress = false;
        }
        let p = eval(t, &mut evals);
        ls_iter += 1;
        if armijo(&p) || p.f >= bracket[low].f {
            bracket[high] = p;
        } else {
            if p.gtd.abs() <= -cfg.c2 * gtd0 {
                done = true;
            } else if p.gtd * (bracket[high].t - bracket[low].t) >= 0.0 {
                bracket.swap(low, high);
            }
            bracket[low] = p;
        }
        (low, high) = if bracket[0].f <= bracket[1].f { (0, 1) } else { (1, 0) };
    }
    let p = bracket.swap_remove(low);
    LineSearchResult { t: p.t, f: p.f, g: p.g, evals }
}

/// Minimizes `obj` from `x` in place.
///
/// `on_iter(iteration, x, f)` runs after every accepted step and may stop the
/// run by returning `ControlFlow::Break`.
pub fn lbfgs_minimize<F, C>(mut obj: F, x: &mut [f64], state: &mut LbfgsState, cfg: &LbfgsConfig, mut on_iter: C) -> LbfgsReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    C: FnMut(usize, &[f64], f64) -> ControlFlow<()>,
{
    let (mut f, mut g) = obj(x);
    let mut evals = 1;
    let mut history = vec![f];
    let report = |status, iterations, evaluations, history| LbfgsReport { status, iterations, evaluations, history };
    if !f.is_finite() {
        return report(LbfgsStatus::LineSearchFailed, 0, evals, history);
    }
    if norm(&g) <= cfg.tol_grad {
        return report(LbfgsStatus::GradientTolerance, 0, evals, history);
    }
    let mut stale = 0;
    let mut fresh = true;
    let mut iter = 0;
    let mut failures = 0;
    while iter < cfg.max_iters {
        let mut d = if state.pairs.is_empty() { g.iter().map(|v| -v).collect() } else { state.direction(&g) };
        let mut gtd = dot(&g, &d);
        if !(gtd < 0.0) {
            // not a descent direction; restart from steepest descent
            state.clear();
            d = g.iter().map(|v| -v).collect();
            gtd = -dot(&g, &g);
        }
        let t0 = if fresh || state.pairs.is_empty() {
            (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
        } else {
            1.0
        };
        let ls = strong_wolfe(&mut obj, x, t0, &d, f, &g, gtd, cfg);
        evals += ls.evals;
        let accepted = ls.t > 0.0 && ls.f.is_finite() && ls.f <= f + cfg.c1 * ls.t * gtd;
        let (t, f_new, g_new) = if accepted {
            (ls.t, ls.f, ls.g)
        } else {
            state.clear();
            match backtrack(&mut obj, x, f, &g, cfg, &mut evals) {
                Some(r) => r,
                None => {
                    failures += 1;
                    state.failures += 1;
                    if failures >= cfg.max_failures {
                        return report(LbfgsStatus::LineSearchFailed, iter, evals, history);
                    }
                    fresh = true;
                    continue;
                }
            }
        };
        if accepted {
            failures = 0;
        } else {
            // the fallback moved along -g
            d = g.iter().map(|v| -v).collect();
        }
        let s: Vec<f64> = d.iter().map(|v| t * v).collect();
        axpy(1.0, &s, x);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        state.push(s, y, cfg.history);
        fresh = false;
        iter += 1;
        state.iterations += 1;
        let decrease = f - f_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if on_iter(iter, x, f).is_break() {
            return report(LbfgsStatus::Interrupted, iter, evals, history);
        }
        if norm(&g) <= cfg.tol_grad {
            return report(LbfgsStatus::GradientTolerance, iter, evals, history);
        }
        if decrease <= cfg.tol_change * (f + decrease).abs() {
            stale += 1;
            if stale >= cfg.patience {
                return report(LbfgsStatus::NoProgress, iter, evals, history);
            }
        } else {
            stale = 0;
        }
    }
    report(LbfgsStatus::MaxIters, iter, evals, history)
}

/// Armijo backtracking along `-g`. Returns `(t, f, g)` on success.
fn backtrack<F>(obj: &mut F, x: &[f64], f0: f64, g0: &[f64], cfg: &LbfgsConfig, evals: &mut usize) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let gg = dot(g0, g0);
    let mut t = (1.0 / g0.iter().map(|v| v.abs()).sum::<f64>()).min(1.0);
    let mut xt = vec![0.0; x.len()];
    for _ in 0..60 {
        for ((o, xi), gi) in xt.iter_mut().zip(x).zip(g0) {
            *o = xi - t * gi;
        }
        let (f, g) = obj(&xt);
        *evals += 1;
        if f.is_finite() && f <= f0 - cfg.c1 * t * gg && f < f0 {
            return Some((t, f, g));
        }
        t *= 0.5;
    }
    None
}
