//! Per-block collocation sets and midpoint quadrature.
//!
//! Random sets come from ChaCha8 seeded with the run seed; each time block
//! reads its own stream (stream id = block index), so a block's sets depend
//! only on `(seed, block)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ConfigError, Error};
use crate::marching::{BlockProblem, MarchMode};
use crate::network::Field;
use crate::pde::ProblemSpec;

/// Uniform partition of `[0, horizon]` into `count` blocks, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBlocks {
    pub horizon: f64,
    pub count: usize,
}

impl TimeBlocks {
    pub fn new(horizon: f64, count: usize) -> Result<Self, ConfigError> {
        if count == 0 || !(horizon > 0.0) {
            return Err(ConfigError::Invalid("need at least one time block over a positive horizon".into()));
        }
        Ok(TimeBlocks { horizon, count })
    }

    pub fn width(&self) -> f64 {
        self.horizon / self.count as f64
    }

    /// `t_j`, the end of block `j` (`t_0 = 0`).
    pub fn boundary(&self, j: usize) -> f64 {
        if j == self.count {
            self.horizon
        } else {
            self.width() * j as f64
        }
    }

    /// `(t_{i-1}, t_i)` for block `i`.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        assert!(i >= 1 && i <= self.count, "block {i} out of range");
        (self.boundary(i - 1), self.boundary(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSets {
    pub block: usize,
    pub interior_xs: Vec<f64>,
    pub interior_ts: Vec<f64>,
    /// Times shared by both spatial boundary locations.
    pub boundary_ts: Vec<f64>,
    /// Spatial points reused at every block-boundary time.
    pub temporal_xs: Vec<f64>,
}

/// Draws from the open interval `(a, b)`.
fn open_uniform<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    loop {
        let v = rng.random_range(a..b);
        if v > a {
            return v;
        }
    }
}

pub fn sample_block(seed: u64, block: usize, spec: &ProblemSpec, blocks: &TimeBlocks, n_c: usize) -> CollocationSets {
    assert!(n_c >= 1);
    let (t0, t1) = blocks.bounds(block);
    let (a, b) = spec.x_domain;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    let mut interior_xs = Vec::with_capacity(n_c);
    let mut interior_ts = Vec::with_capacity(n_c);
    for _ in 0..n_c {
        interior_xs.push(open_uniform(&mut rng, a, b));
        interior_ts.push(open_uniform(&mut rng, t0, t1));
    }
    let boundary_ts = (0..n_c).map(|_| open_uniform(&mut rng, t0, t1)).collect();
    let temporal_xs = (0..n_c).map(|_| open_uniform(&mut rng, a, b)).collect();
    CollocationSets { block, interior_xs, interior_ts, boundary_ts, temporal_xs }
}

impl CollocationSets {
    pub fn n_c(&self) -> usize {
        self.interior_xs.len()
    }

    /// CSV dump with columns `set,x,t`. Boundary rows use the domain
    /// endpoints; temporal rows leave `t` empty since they are reused at
    /// several times.
    pub fn write_csv<W: Write>(&self, spec: &ProblemSpec, mut w: W) -> std::io::Result<()> {
        writeln!(w, "set,x,t")?;
        for (x, t) in self.interior_xs.iter().zip(&self.interior_ts) {
            writeln!(w, "interior,{x},{t}")?;
        }
        for (label, x) in [("left", spec.x_domain.0), ("right", spec.x_domain.1)] {
            for t in &self.boundary_ts {
                writeln!(w, "{label},{x},{t}")?;
            }
        }
        for x in &self.temporal_xs {
            writeln!(w, "temporal,{x},")?;
        }
        Ok(())
    }
}

/// Cell midpoints of a uniform partition with equal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub weight: f64,
}

pub fn midpoints(a: f64, b: f64, m: usize) -> Vec<f64> {
    let h = (b - a) / m as f64;
    (0..m).map(|k| a + h * (k as f64 + 0.5)).collect()
}

impl QuadratureGrid {
    /// `m` cells on `[a, b]`; the second coordinate is fixed at `t`.
    pub fn interval(a: f64, b: f64, m: usize, t: f64) -> Self {
        assert!(m >= 1);
        QuadratureGrid { xs: midpoints(a, b, m), ts: vec![t; m], weight: (b - a) / m as f64 }
    }

    /// `m x m` cells on `[a, b] x [c, d]`.
    pub fn rect(x: (f64, f64), t: (f64, f64), m: usize) -> Self {
        assert!(m >= 1);
        let mx = midpoints(x.0, x.1, m);
        let mt = midpoints(t.0, t.1, m);
        let mut xs = Vec::with_capacity(m * m);
        let mut ts = Vec::with_capacity(m * m);
        for &t in &mt {
            for &x in &mx {
                xs.push(x);
                ts.push(t);
            }
        }
        let weight = (x.1 - x.0) * (t.1 - t.0) / (m * m) as f64;
        QuadratureGrid { xs, ts, weight }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weight * self.len() as f64
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.weight * self.xs.iter().zip(&self.ts).map(|(&x, &t)| f(x, t)).sum::<f64>()
    }
}

/// Midpoint rule with `m` cells on `[a, b]`.
pub fn midpoint_integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    QuadratureGrid::interval(a, b, m, 0.0).integrate(|x, _| f(x))
}

/// Midpoint rule with `m` cells per axis (`m^2` cells) on a box.
pub fn midpoint_integrate_2d(f: impl Fn(f64, f64) -> f64, x: (f64, f64), t: (f64, f64), m: usize) -> f64 {
    QuadratureGrid::rect(x, t, m).integrate(f)
}

/// Quadrature estimate of the generalization error `E_G` for block `i`:
/// the unweighted integral counterpart of the training loss,
/// `E_G,i^2 = int R_int^2 + sum_j int_D R_tb^2 + (boundary terms)`, with
/// square roots kept on the boundary terms that carry them in the loss.
/// In ExBTM mode the previous blocks' `E_G^2` is added recursively.
///
/// `fields[j - 1]` is the solution on block `j`; `m` is the number of cells
/// per axis.
pub fn generalization_error(
    mode: MarchMode,
    spec: &ProblemSpec,
    blocks: &TimeBlocks,
    fields: &[&dyn Field],
    i: usize,
    m: usize,
) -> Result<f64, Error> {
    let mut acc = 0.0;
    let first = match mode {
        MarchMode::ExBtm => 1,
        MarchMode::Btm => i,
    };
    for k in first..=i {
        let refs: Vec<Option<&dyn Field>> = fields[..k - 1].iter().map(|f| Some(*f)).collect();
        let problem = BlockProblem::quadrature(mode, spec, blocks, k, m, &refs)?;
        let b = problem.evaluate_field(fields[k - 1])?;
        acc += b.block_total();
    }
    Ok(acc.max(0.0).sqrt())
}
