//! Self-checks behind the `check`, `grad-check` and `quadrature-rate`
//! commands. Each returns a worst-case discrepancy so callers can compare it
//! against a tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::ActivationKind;
use crate::autodiff::Jet2;
use crate::eval::least_squares_line;
use crate::marching::{BlockProblem, MarchMode};
use crate::network::{ArchVector, Field, HLConcParams, LayerActivations, Network};
use crate::pde::ProblemSpec;
use crate::sampling::{midpoint_integrate_2d, sample_block, TimeBlocks};

fn perturbed(arch: &ArchVector, rng: &mut ChaCha8Rng, spread: f64) -> HLConcParams {
    let mut p = HLConcParams::glorot(arch.clone(), rng);
    for v in p.values_mut() {
        *v += rng.random_range(-spread..spread);
    }
    p
}

/// Largest relative discrepancy (scaled by the gradient's max entry) between
/// the loss gradient and central differences on a `[2, 8, 8, out]` network,
/// block 3 with frozen predecessors.
pub fn grad_check(spec: &ProblemSpec, mode: MarchMode, seed: u64) -> f64 {
    let blocks = TimeBlocks::new(spec.horizon, 5).unwrap();
    let arch = ArchVector::new(vec![2, 8, 8, spec.n_outputs()]).unwrap();
    let acts = LayerActivations::uniform(ActivationKind::Tanh, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b1 = Network::new(perturbed(&arch, &mut rng, 0.1), acts.clone());
    let b2 = Network::new(perturbed(&arch, &mut rng, 0.1), acts.clone());
    let refs: Vec<Option<&dyn Field>> = vec![Some(&b1), Some(&b2)];
    let sets = sample_block(seed, 3, spec, &blocks, 32);
    let problem = BlockProblem::training(mode, spec, &blocks, &sets, &refs, 0.5).unwrap();
    let p = perturbed(&arch, &mut rng, 0.2);
    let (_, g) = problem.loss_and_grad(&p, &acts).unwrap();
    let scale = g.max_abs().max(1e-12);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut q = p.clone();
    for k in 0..p.len() {
        let v = p.values()[k];
        q.values_mut()[k] = v + h;
        let fp = problem.loss_and_grad(&q, &acts).unwrap().0.total;
        q.values_mut()[k] = v - h;
        let fm = problem.loss_and_grad(&q, &acts).unwrap().0.total;
        q.values_mut()[k] = v;
        worst = worst.max(((fp - fm) / (2.0 * h) - g.0[k]).abs() / scale);
    }
    worst
}

/// Largest relative error of the network's jet channels against central
/// differences of the value path, for one activation used in every layer.
pub fn jet_check(kind: ActivationKind, seed: u64) -> f64 {
    let arch = ArchVector::new(vec![2, 6, 5, 4, 2]).unwrap();
    let acts = LayerActivations::uniform(kind, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = perturbed(&arch, &mut rng, 0.1);
    let h = 1e-4;
    let val = |x: f64, t: f64, o: usize| p.forward_value(&acts, x, t)[o];
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (x, t) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let jets = p.forward_jet(&acts, x, t);
        for (o, j) in jets.iter().enumerate() {
            let f = |dx: f64, dt: f64| val(x + dx, t + dt, o);
            let d_x = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
            let d_t = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
            let d_xx = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
            let d_xt = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
            let fd = Jet2::new(f(0.0, 0.0), d_x, d_t, d_xx, d_xt);
            for (a, b) in j.components().iter().zip(fd.components()) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }
    worst
}

/// Largest output change under widening and deepening of random networks.
pub fn embedding_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = ArchVector::new(vec![2, 5, 4, 1]).unwrap();
    let acts = LayerActivations::uniform(ActivationKind::Tanh, 2);
    let deep_acts = LayerActivations(vec![ActivationKind::Tanh, ActivationKind::Tanh, ActivationKind::Sine]);
    let p = perturbed(&arch, &mut rng, 0.3);
    let wide = p.embed_widen(1, 3, seed);
    let deep = p.embed_deepen(3, Some(seed));
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (x, t) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let u = p.forward_value(&acts, x, t)[0];
        worst = worst.max((wide.forward_value(&acts, x, t)[0] - u).abs());
        worst = worst.max((deep.forward_value(&deep_acts, x, t)[0] - u).abs());
    }
    worst
}

/// Largest interior residual of the exact solution at random points.
pub fn manufactured_check(spec: &ProblemSpec, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = spec.x_domain;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (x, t) = (rng.random_range(a..b), rng.random_range(0.0..spec.horizon));
        let (u, v) = spec.exact_jets(x, t);
        let f = spec.source_term(x, t);
        for r in spec.interior_residual_values(&[u, v], f) {
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Log-log slope of the midpoint-rule error against the number of cells for
/// `sin(pi x) sin(pi t)` on the unit square (expected `-2/d = -1`).
pub fn quadrature_rate() -> f64 {
    use std::f64::consts::PI;
    let exact = 4.0 / (PI * PI);
    let points: Vec<(f64, f64)> = [4usize, 8, 16, 32]
        .iter()
        .map(|&m| {
            let q = midpoint_integrate_2d(|x, t| (PI * x).sin() * (PI * t).sin(), (0.0, 1.0), (0.0, 1.0), m);
            (((m * m) as f64).ln(), (q - exact).abs().ln())
        })
        .collect();
    least_squares_line(&points).0
}
