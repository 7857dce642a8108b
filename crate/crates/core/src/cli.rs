//! Run orchestration: TOML configs, artifact layout, sweeps.
//!
//! A run directory `<problem>_<mode>_<arch>_<nc>_<seed>/` holds
//!
//! * `config.toml`: the config as given; re-running it reproduces the run
//! * `block_<i>.ckpt`: frozen network of block `i`
//! * `loss_block_<i>.csv`: `iter,total,interior,temporal,boundary,carried`
//! * `errors.csv`: relative errors per block on the evaluation grid
//! * `scaling.csv`: `block,iter,loss,l2_u[,l2_v]` over parameter snapshots
//! * `scaling_fit.csv`: log-log fits of l2 error against loss
//! * `generalization.csv`: `block,e_g,loss`
//!
//! On divergence the completed blocks' artifacts are kept and the last
//! finite parameters of the failing block go to `block_<i>_last_good.ckpt`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{ConfigError, Error};
use crate::eval::{compute_errors, scaling_fit, ErrorReport, ErrorRow, ScalingSeries};
use crate::marching::{train_block, MarchConfig, MarchMode, TrainedBlock};
use crate::network::{ArchVector, Field, LayerActivations, Network};
use crate::optim::{AdamConfig, LbfgsConfig};
use crate::pde::ProblemSpec;
use crate::sampling::{generalization_error, TimeBlocks};

/// Environment variable naming the output root when the config has none.
pub const OUTPUT_ROOT_ENV: &str = "HLCONC_OUT";

/// Exit status for a config error.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status for training divergence.
pub const EXIT_DIVERGED: u8 = 3;
/// Exit status for I/O and other failures.
pub const EXIT_OTHER: u8 = 1;

/// One training run. Defaults are the desk-scale heat setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `heat`, `burgers`, `wave` or `kleingordon`.
    pub problem: String,
    pub arch: Vec<usize>,
    /// One name per hidden layer, or a single name used for all of them.
    pub activations: Vec<String>,
    /// Permit non-tanh activations in the first two hidden layers.
    pub allow_activation_override: bool,
    /// `exbtm` or `btm`.
    pub mode: String,
    pub n_c: usize,
    pub blocks: usize,
    pub seed: u64,
    pub adam_steps: usize,
    /// Snapshot interval in L-BFGS iterations for the scaling analysis.
    pub checkpoint_every: usize,
    /// Points per axis of the error grid.
    pub eval_grid: usize,
    /// Midpoint cells per axis for the generalization error (0 skips it).
    pub eg_cells: usize,
    pub warm_start: bool,
    /// Penalty weights; the problem's defaults when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_root: Option<PathBuf>,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "heat".into(),
            arch: vec![2, 90, 90, 1],
            activations: vec!["tanh".into()],
            allow_activation_override: false,
            mode: "exbtm".into(),
            n_c: 2000,
            blocks: 5,
            seed: 0,
            adam_steps: 100,
            checkpoint_every: 100,
            eval_grid: 200,
            eg_cells: 100,
            warm_start: false,
            weights: None,
            output_root: None,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

/// A validated config with everything needed to start training.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub spec: ProblemSpec,
    pub mode: MarchMode,
    pub march: MarchConfig,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn layer_activations(&self, n_hidden: usize) -> Result<LayerActivations, ConfigError> {
        let kinds = self
            .activations
            .iter()
            .map(|s| s.parse::<ActivationKind>())
            .collect::<Result<Vec<_>, _>>()?;
        match kinds.len() {
            1 => Ok(LayerActivations::uniform(kinds[0], n_hidden)),
            n if n == n_hidden => Ok(LayerActivations(kinds)),
            n => Err(ConfigError::InvalidArch(format!(
                "{n} activations given for {n_hidden} hidden layers"
            ))),
        }
    }

    /// Checks every setting and fixes the output directory. Touches nothing
    /// on disk.
    pub fn resolve(&self) -> Result<ResolvedRun, ConfigError> {
        let mut spec = ProblemSpec::by_name(&self.problem)?;
        if let Some(w) = &self.weights {
            spec.weights = w.clone();
        }
        spec.validate()?;
        let mode: MarchMode = self.mode.parse()?;
        let arch = ArchVector::new(self.arch.clone())?;
        if arch.out_dim() != spec.n_outputs() {
            return Err(ConfigError::InvalidArch(format!(
                "{} needs {} output(s), architecture {} has {}",
                self.problem,
                spec.n_outputs(),
                arch,
                arch.out_dim()
            )));
        }
        let acts = self.layer_activations(arch.n_hidden())?;
        acts.validate(&arch, self.allow_activation_override)?;
        let invalid = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.n_c == 0 {
            return invalid("n_c must be positive");
        }
        if self.blocks == 0 {
            return invalid("blocks must be positive");
        }
        if self.eval_grid < 2 {
            return invalid("eval_grid must be at least 2");
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return invalid("adam.lr must be positive");
        }
        if self.lbfgs.history == 0 {
            return invalid("lbfgs.history must be positive");
        }
        if !(0.0 < self.lbfgs.c1 && self.lbfgs.c1 < self.lbfgs.c2 && self.lbfgs.c2 < 1.0) {
            return invalid("lbfgs line search needs 0 < c1 < c2 < 1");
        }

        let mut march = MarchConfig::new(arch.clone(), acts);
        march.n_blocks = self.blocks;
        march.n_c = self.n_c;
        march.seed = self.seed;
        march.adam = self.adam;
        march.adam_steps = self.adam_steps;
        march.lbfgs = self.lbfgs;
        march.checkpoint_every = self.checkpoint_every;
        march.warm_start = self.warm_start;

        let root = self
            .output_root
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        let name = format!("{}_{}_{}_{}_{}", spec.kind(), mode, arch.label(), self.n_c, self.seed);
        Ok(ResolvedRun { config: self.clone(), spec, mode, march, out_dir: root.join(name) })
    }
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Diverged { .. } | Error::NonFinite(_) => EXIT_DIVERGED,
        _ => EXIT_OTHER,
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub errors: ErrorReport,
}

fn create(path: PathBuf) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_loss_history(block: &TrainedBlock, path: PathBuf) -> Result<(), Error> {
    let mut w = create(path)?;
    writeln!(w, "iter,total,interior,temporal,boundary,carried")?;
    for h in &block.history {
        let l = &h.loss;
        writeln!(w, "{},{},{},{},{},{}", h.iter, l.total, l.interior, l.temporal, l.boundary(), l.carried)?;
    }
    w.flush()?;
    Ok(())
}

fn write_checkpoint(network: &Network, path: PathBuf) -> Result<(), Error> {
    let mut w = create(path)?;
    network.params.write_checkpoint(&network.acts, &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_errors(report: &ErrorReport, dir: &Path) -> Result<(), Error> {
    let mut w = create(dir.join("errors.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Trains all blocks and writes the run directory. `log` receives one
/// progress line per block.
pub fn run(config: &RunConfig, mut log: impl FnMut(&str)) -> Result<RunOutcome, Error> {
    let r = config.resolve()?;
    let dir = &r.out_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;

    let blocks = TimeBlocks::new(r.spec.horizon, r.march.n_blocks)?;
    let mut report = ErrorReport { mode: r.mode, seed: config.seed, grid_n: config.eval_grid, rows: Vec::new() };
    let mut done: Vec<TrainedBlock> = Vec::with_capacity(r.march.n_blocks);
    for i in 1..=r.march.n_blocks {
        let block = match train_block(r.mode, &r.spec, i, &done, &r.march) {
            Ok(b) => b,
            Err(Error::Diverged { block, loss, last_good }) => {
                let net = Network::new((*last_good).clone(), r.march.acts.clone());
                write_checkpoint(&net, dir.join(format!("block_{block}_last_good.ckpt")))?;
                write_errors(&report, dir)?;
                return Err(Error::Diverged { block, loss, last_good });
            }
            Err(e) => return Err(e),
        };
        write_checkpoint(&block.network, dir.join(format!("block_{i}.ckpt")))?;
        write_loss_history(&block, dir.join(format!("loss_block_{i}.csv")))?;
        let row = compute_errors(&block.network, &r.spec, &blocks, i, config.eval_grid)?;
        log(&format!(
            "block {i}/{}: loss {:.3e}, l2 {:.3e}, {} iterations, {:.1}s",
            r.march.n_blocks,
            block.final_loss.total,
            row.l2_u,
            block.history.len(),
            block.wall_time.as_secs_f64()
        ));
        report.rows.push(row);
        done.push(block);
    }
    write_errors(&report, dir)?;
    write_scaling(&r, &blocks, &done, dir)?;
    if config.eg_cells > 0 {
        write_generalization(&r, &blocks, &done, config.eg_cells, dir)?;
    }
    Ok(RunOutcome { out_dir: dir.clone(), errors: report })
}

fn write_scaling(r: &ResolvedRun, blocks: &TimeBlocks, done: &[TrainedBlock], dir: &Path) -> Result<(), Error> {
    let two = r.spec.n_outputs() == 2;
    let mut w = create(dir.join("scaling.csv"))?;
    writeln!(w, "block,iter,loss,l2_u{}", if two { ",l2_v" } else { "" })?;
    let mut per_block = Vec::new();
    let mut pooled = ScalingSeries::default();
    for b in done {
        let mut series = ScalingSeries::default();
        for s in &b.snapshots {
            let net = Network::new(s.params.clone(), r.march.acts.clone());
            let row = compute_errors(&net, &r.spec, blocks, b.index, r.config.eval_grid)?;
            match row.v {
                Some((l2v, _)) => writeln!(w, "{},{},{},{},{}", b.index, s.iter, s.loss, row.l2_u, l2v)?,
                None => writeln!(w, "{},{},{},{}", b.index, s.iter, s.loss, row.l2_u)?,
            }
            series.points.push((s.loss, row.l2_u));
        }
        pooled.points.extend_from_slice(&series.points);
        per_block.push((b.index.to_string(), series));
    }
    w.flush()?;
    per_block.push(("pooled".to_string(), pooled));

    let mut w = create(dir.join("scaling_fit.csv"))?;
    writeln!(w, "scope,slope,intercept,points,status")?;
    for (scope, series) in &per_block {
        match scaling_fit(series) {
            Ok(f) => writeln!(w, "{scope},{},{},{},ok", f.slope, f.intercept, f.n_points)?,
            Err(e) => writeln!(w, "{scope},,,{},{e}", series.points.len())?,
        }
    }
    w.flush()?;
    Ok(())
}

fn write_generalization(
    r: &ResolvedRun,
    blocks: &TimeBlocks,
    done: &[TrainedBlock],
    cells: usize,
    dir: &Path,
) -> Result<(), Error> {
    let fields: Vec<&dyn Field> = done.iter().map(|b| &b.network as &dyn Field).collect();
    let mut w = create(dir.join("generalization.csv"))?;
    writeln!(w, "block,e_g,loss")?;
    for b in done {
        let eg = generalization_error(r.mode, &r.spec, blocks, &fields, b.index, cells)?;
        writeln!(w, "{},{},{}", b.index, eg, b.final_loss.total)?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NC,
    Depth,
    Activation,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NC => "n_c",
            SweepAxis::Depth => "depth",
            SweepAxis::Activation => "activation",
        }
    }

    /// Applies one axis value to `base`. Depth values are dash-separated
    /// architectures (`2-90-90-10-1`); activation values are one name or
    /// slash-separated names per hidden layer (`tanh/tanh/sine`).
    pub fn apply(self, base: &RunConfig, value: &str) -> Result<RunConfig, ConfigError> {
        let mut c = base.clone();
        let bad = || ConfigError::Invalid(format!("bad {} value `{value}`", self.name()));
        match self {
            SweepAxis::NC => c.n_c = value.parse().map_err(|_| bad())?,
            SweepAxis::Depth => {
                c.arch = value.split('-').map(|w| w.parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
            }
            SweepAxis::Activation => c.activations = value.split('/').map(str::to_string).collect(),
        }
        Ok(c)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n_c" | "nc" => Ok(SweepAxis::NC),
            "depth" => Ok(SweepAxis::Depth),
            "activation" => Ok(SweepAxis::Activation),
            _ => Err(ConfigError::Invalid(format!("unknown sweep axis `{s}` (expected n_c|depth|activation)"))),
        }
    }
}

/// Result of one sweep cell.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub value: String,
    pub mode: MarchMode,
    pub outcome: Result<RunOutcome, String>,
}

const SWEEP_MODES: [MarchMode; 2] = [MarchMode::ExBtm, MarchMode::Btm];

/// Runs every axis value in both modes, one after another. Cell failures
/// are recorded and the sweep continues; invalid values fail up front.
///
/// Writes `<root>/sweep_<problem>_<axis>/summary.csv` (rows: metric and
/// block, columns: value and mode) and `status.csv` next to the cell runs.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    mut log: impl FnMut(&str),
) -> Result<(PathBuf, Vec<SweepCell>), Error> {
    if values.is_empty() {
        return Err(ConfigError::Invalid("sweep needs at least one value".into()).into());
    }
    let root = base.resolve()?.out_dir.parent().map(Path::to_path_buf).unwrap_or_default();
    let sweep_dir = root.join(format!("sweep_{}_{}", base.problem, axis.name()));
    let mut plan = Vec::new();
    for value in values {
        for mode in SWEEP_MODES {
            let mut c = axis.apply(base, value)?;
            c.mode = mode.name().to_string();
            c.output_root = Some(sweep_dir.join(value.replace('/', "-")));
            c.resolve()?;
            plan.push((value.clone(), mode, c));
        }
    }

    fs::create_dir_all(&sweep_dir)?;
    let mut cells = Vec::new();
    for (value, mode, c) in plan {
        log(&format!("{} = {value}, {mode}", axis.name()));
        let outcome = run(&c, &mut log).map_err(|e| e.to_string());
        if let Err(e) = &outcome {
            log(&format!("cell failed: {e}"));
        }
        cells.push(SweepCell { value, mode, outcome });
    }

    let mut w = create(sweep_dir.join("status.csv"))?;
    writeln!(w, "value,mode,status,dir")?;
    for c in &cells {
        match &c.outcome {
            Ok(o) => writeln!(w, "{},{},ok,{}", c.value, c.mode, o.out_dir.display())?,
            Err(e) => writeln!(w, "{},{},\"{}\",", c.value, c.mode, e.replace('"', "'"))?,
        }
    }
    w.flush()?;
    write_summary(&cells, base.blocks, &mut create(sweep_dir.join("summary.csv"))?)?;
    Ok((sweep_dir, cells))
}

fn write_summary<W: Write>(cells: &[SweepCell], n_blocks: usize, w: &mut W) -> Result<(), Error> {
    let has_v = cells
        .iter()
        .any(|c| matches!(&c.outcome, Ok(o) if o.errors.rows.iter().any(|r| r.v.is_some())));
    let mut metrics: Vec<(&str, fn(&ErrorRow) -> Option<f64>)> =
        vec![("l2_u", |r| Some(r.l2_u)), ("linf_u", |r| Some(r.linf_u))];
    if has_v {
        metrics.push(("l2_v", |r| r.v.map(|v| v.0)));
        metrics.push(("linf_v", |r| r.v.map(|v| v.1)));
    }
    write!(w, "metric,block")?;
    for c in cells {
        write!(w, ",{}_{}", c.value, c.mode)?;
    }
    writeln!(w)?;
    for (name, get) in &metrics {
        for i in 1..=n_blocks {
            write!(w, "{name},{i}")?;
            for c in cells {
                let v = match &c.outcome {
                    Ok(o) => o.errors.rows.iter().find(|r| r.block == i).and_then(get),
                    Err(_) => None,
                };
                match v {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}
