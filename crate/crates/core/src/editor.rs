//! Single-step boundary-guided editing.
//!
//! The edit happens once, at the mixing step `t_m`: the latent is moved to a
//! target signed distance ζ from a fitted boundary, then the chain continues
//! stochastically down to 0 (the mixing trajectory). Above `t_m` the walk is
//! deterministic: DDIM inversion for real images, `p_i` from a Gaussian
//! start for unconditional samples.

use std::cell::RefCell;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::boundary::{invert_to, signed_distance, Boundary, MultiBoundary, Space};
use crate::error::{check_dim, Error, Result};
use crate::geometry::nearest_neighbor_score;
use crate::model::NoisePredictor;
use crate::schedule::{Direction, NoiseSchedule, StepPlan};
use crate::trajectory::{denoise_batch, sample_starts, sample_streams, BatchRun, RunOptions, StochasticSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    /// Move along the normal until the signed distance equals ζ.
    #[default]
    SetDistance,
    /// Move by ζ along the normal.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HInjection {
    /// Edit `h` only at `t_m`.
    #[default]
    SingleStep,
    /// Edit `h` at `t_m` and the following `K − 1` steps.
    Iterative(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zeta {
    Uniform(f64),
    PerSample(Vec<f64>),
}

impl Zeta {
    fn get(&self, i: usize) -> f64 {
        match self {
            Zeta::Uniform(z) => *z,
            Zeta::PerSample(v) => v[i],
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let ok = match self {
            Zeta::Uniform(z) => z.is_finite(),
            Zeta::PerSample(v) => {
                check_dim(n, v.len())?;
                v.iter().all(|z| z.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("editing strength ζ must be finite"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditTarget {
    pub boundary: Boundary,
    pub zeta: Zeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSpec {
    /// Applied in order; ε-space and h-space targets may be mixed.
    pub targets: Vec<EditTarget>,
    pub mode: EditMode,
    pub h_injection: HInjection,
}

impl EditSpec {
    pub fn single(boundary: Boundary, zeta: Zeta, mode: EditMode) -> Self {
        Self { targets: vec![EditTarget { boundary, zeta }], mode, h_injection: HInjection::SingleStep }
    }

    fn validate(&self, predictor: &NoisePredictor, t_m: usize, n: usize) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::invalid("an edit needs at least one boundary"));
        }
        if let HInjection::Iterative(0) = self.h_injection {
            return Err(Error::invalid("iterative h injection needs K >= 1"));
        }
        for target in &self.targets {
            let b = &target.boundary;
            if b.t_m != t_m {
                return Err(Error::invalid(format!(
                    "boundary '{}' was fitted at t_m = {}, edit runs at t_m = {t_m}",
                    b.attribute, b.t_m
                )));
            }
            let dim = match b.space {
                Space::Epsilon => predictor.data_dim(),
                Space::H => predictor.bottleneck_dim(),
            };
            if b.normal.len() != dim {
                return Err(Error::invalid(format!(
                    "boundary '{}' has dimension {}, {} space has {dim}",
                    b.attribute,
                    b.normal.len(),
                    b.space
                )));
            }
            target.zeta.validate(n)?;
        }
        Ok(())
    }
}

/// Move `x` relative to `boundary`: to signed distance ζ (`SetDistance`)
/// or by ζ along the normal (`Additive`).
pub fn edit_latent(x: &[f64], boundary: &Boundary, zeta: f64, mode: EditMode) -> Result<Vec<f64>> {
    if !zeta.is_finite() {
        return Err(Error::invalid("editing strength ζ must be finite"));
    }
    let step = match mode {
        EditMode::SetDistance => zeta - signed_distance(boundary, x)?,
        EditMode::Additive => {
            check_dim(boundary.normal.len(), x.len())?;
            zeta
        }
    };
    Ok(x.iter().zip(&boundary.normal).map(|(v, n)| v + step * n).collect())
}

type HLog = (Vec<usize>, Vec<Vec<f64>>, Vec<Vec<f64>>);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditTrace {
    /// Steps at which the ε-space latent was changed, one entry per step.
    pub eps_mutations: Vec<usize>,
    /// Steps at which some bottleneck activation was replaced.
    pub h_injections: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub images: Array2<f64>,
    /// `before[k][i]`: signed distance of sample `i` to target `k` just
    /// before editing (for h targets: at the first injection).
    pub before: Vec<Vec<f64>>,
    /// Distances once every edit at that step has been applied.
    pub after: Vec<Vec<f64>>,
    pub trace: EditTrace,
    /// Every state of the walk, when requested.
    pub run: Option<BatchRun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub t_m: usize,
    /// Inversion steps from 0 to `t_m`.
    pub steps_inv: usize,
    /// Generation steps over the whole denoising span.
    pub steps_gen: usize,
    pub seed: u64,
    pub sampler: StochasticSampler,
    /// Keep every state of the walk.
    pub record: bool,
}

impl PipelineConfig {
    pub fn new(t_m: usize, steps_inv: usize, steps_gen: usize, seed: u64) -> Self {
        Self { t_m, steps_inv, steps_gen, seed, sampler: StochasticSampler::Ddim, record: false }
    }
}

/// Steps at which h edits apply.
fn injection_steps(plan: &StepPlan, t_m: usize, injection: HInjection) -> Vec<usize> {
    let k = match injection {
        HInjection::SingleStep => 1,
        HInjection::Iterative(k) => k,
    };
    plan.taus().iter().rev().copied().filter(|&t| t <= t_m && t > 0).take(k).collect()
}

/// Run the mixing trajectory from `start` (rows at `plan.end()`), editing
/// once the walk reaches `t_m`.
fn run_edit(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    start: &Array2<f64>,
    plan: &StepPlan,
    spec: &EditSpec,
    config: &PipelineConfig,
) -> Result<EditOutcome> {
    let n = start.nrows();
    let t_m = config.t_m;
    spec.validate(predictor, t_m, n)?;
    if !plan.contains(t_m) {
        return Err(Error::invalid(format!("t_m = {t_m} is not a step of the generation plan")));
    }
    let k = spec.targets.len();
    let mut before = vec![vec![f64::NAN; n]; k];
    let mut after = vec![vec![f64::NAN; n]; k];
    let mut eps_mutations = Vec::new();
    let eps_targets: Vec<usize> = (0..k).filter(|&j| spec.targets[j].boundary.space == Space::Epsilon).collect();
    let h_targets: Vec<usize> = (0..k).filter(|&j| spec.targets[j].boundary.space == Space::H).collect();

    let mut hook = |t: usize, x: &mut Array2<f64>| -> Result<()> {
        let snapshot = x.clone();
        if t == t_m {
            for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                let mut v = row.to_vec();
                for &j in &eps_targets {
                    let target = &spec.targets[j];
                    before[j][i] = signed_distance(&target.boundary, &v)?;
                    v = edit_latent(&v, &target.boundary, target.zeta.get(i), spec.mode)?;
                }
                for &j in &eps_targets {
                    after[j][i] = signed_distance(&spec.targets[j].boundary, &v)?;
                }
                row.assign(&ArrayView1::from(&v));
            }
        }
        // Instrumentation is independent of the branch above: any change to
        // the latent, at any step, is logged.
        if *x != snapshot {
            eps_mutations.push(t);
        }
        Ok(())
    };

    let h_steps = injection_steps(plan, t_m, spec.h_injection);
    // (injection steps, distances before, distances after)
    let h_log: RefCell<HLog> = RefCell::new((Vec::new(), vec![vec![f64::NAN; n]; k], vec![vec![f64::NAN; n]; k]));
    let h_edit = |t: usize, i: usize, h: &[f64]| -> Option<Vec<f64>> {
        if h_targets.is_empty() || !h_steps.contains(&t) {
            return None;
        }
        let mut log = h_log.borrow_mut();
        let mut v = h.to_vec();
        let first = t == h_steps[0];
        for &j in &h_targets {
            let target = &spec.targets[j];
            if first {
                log.1[j][i] = signed_distance(&target.boundary, &v).unwrap_or(f64::NAN);
            }
            v = edit_latent(&v, &target.boundary, target.zeta.get(i), spec.mode).ok()?;
        }
        if first {
            for &j in &h_targets {
                log.2[j][i] = signed_distance(&spec.targets[j].boundary, &v).unwrap_or(f64::NAN);
            }
        }
        if log.0.last() != Some(&t) {
            log.0.push(t);
        }
        Some(v)
    };

    let options =
        RunOptions::mixed(t_m).with_sampler(config.sampler).recording(if config.record { 1 } else { usize::MAX });
    let mut rngs = sample_streams(config.seed, n);
    let run = denoise_batch(
        predictor,
        schedule,
        start,
        plan,
        &options,
        &mut rngs,
        Some(&mut hook),
        if h_targets.is_empty() { None } else { Some(&h_edit) },
    )?;
    let (h_injections, h_before, h_after) = h_log.into_inner();
    for &j in &h_targets {
        before[j] = h_before[j].clone();
        after[j] = h_after[j].clone();
    }
    Ok(EditOutcome {
        images: run.final_state().clone(),
        before,
        after,
        trace: EditTrace { eps_mutations, h_injections },
        run: config.record.then_some(run),
    })
}

/// Edit latents that already sit at `t_m` (e.g. a cached inversion).
pub fn edit_from_latents(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    x_tm: &Array2<f64>,
    spec: &EditSpec,
    config: &PipelineConfig,
) -> Result<EditOutcome> {
    let plan = StepPlan::even(schedule, config.steps_gen, config.t_m, Direction::Denoise)?;
    run_edit(predictor, schedule, x_tm, &plan, spec, config)
}

/// Invert real images to `t_m`, edit once, denoise stochastically to 0.
pub fn boundary_diffusion_conditional(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    x0: &Array2<f64>,
    spec: &EditSpec,
    config: &PipelineConfig,
) -> Result<EditOutcome> {
    if !predictor.is_trained() {
        return Err(Error::invalid("editing needs a trained model"));
    }
    check_dim(predictor.data_dim(), x0.ncols())?;
    let x_tm = invert_to(predictor, schedule, x0, config.t_m, config.steps_inv)?;
    edit_from_latents(predictor, schedule, &x_tm, spec, config)
}

/// Sample `n` Gaussian starts, run `p_i` down to `t_m`, edit, then run
/// `p_s` to 0. The generation plan spans `T → 0` in `steps_gen` steps and
/// must contain `t_m`.
pub fn boundary_diffusion_unconditional(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    n: usize,
    spec: &EditSpec,
    config: &PipelineConfig,
) -> Result<EditOutcome> {
    if !predictor.is_trained() {
        return Err(Error::invalid("editing needs a trained model"));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let plan = StepPlan::even(schedule, config.steps_gen, schedule.steps(), Direction::Denoise)?;
    let starts = sample_starts(config.seed, n, predictor.data_dim());
    run_edit(predictor, schedule, &starts, &plan, spec, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiEditReport {
    /// `residuals[k][i] = d_k(x'_i) − ζ_k(i)` after all edits.
    pub residuals: Vec<Vec<f64>>,
    pub cosines: Vec<(usize, usize, f64)>,
}

/// Sequential edits along stacked boundaries at the single step `t_m`.
pub fn multi_attribute_edit(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    x0: &Array2<f64>,
    multi: &MultiBoundary,
    zetas: &[Zeta],
    mode: EditMode,
    config: &PipelineConfig,
) -> Result<(EditOutcome, MultiEditReport)> {
    if zetas.len() != multi.boundaries.len() {
        return Err(Error::invalid(format!("{} strengths for {} boundaries", zetas.len(), multi.boundaries.len())));
    }
    let spec = EditSpec {
        targets: multi
            .boundaries
            .iter()
            .zip(zetas)
            .map(|(b, z)| EditTarget { boundary: b.clone(), zeta: z.clone() })
            .collect(),
        mode,
        h_injection: HInjection::SingleStep,
    };
    let outcome = boundary_diffusion_conditional(predictor, schedule, x0, &spec, config)?;
    let residuals = outcome
        .after
        .iter()
        .zip(zetas)
        .map(|(after, z)| after.iter().enumerate().map(|(i, d)| d - z.get(i)).collect())
        .collect();
    Ok((outcome, MultiEditReport { residuals, cosines: multi.cosines.clone() }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub zeta: f64,
    /// Mean attribute score of the outputs.
    pub score: f64,
    /// Mean nearest-neighbor distance of the outputs to the reference set.
    pub nn_score: f64,
    pub degraded: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Outputs per grid point.
    pub images: Vec<Array2<f64>>,
    /// Nearest-neighbor score of the unedited reconstruction.
    pub baseline_nn_score: f64,
    pub degradation_factor: f64,
}

impl SweepResult {
    pub fn scores_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].score >= w[0].score)
    }
}

/// Edit the same inverted latents to every ζ in `grid` with a shared noise
/// tail, scoring outputs with `scorer`. A point is flagged as degraded
/// when its nearest-neighbor score exceeds `degradation_factor` times the
/// unedited reconstruction's.
#[allow(clippy::too_many_arguments)]
pub fn strength_sweep(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    x0: &Array2<f64>,
    boundary: &Boundary,
    grid: &[f64],
    mode: EditMode,
    config: &PipelineConfig,
    scorer: &dyn Fn(&[f64]) -> Result<f64>,
    reference: &[Vec<f64>],
    degradation_factor: f64,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::invalid("the ζ grid is empty"));
    }
    if !predictor.is_trained() {
        return Err(Error::invalid("editing needs a trained model"));
    }
    let x_tm = invert_to(predictor, schedule, x0, config.t_m, config.steps_inv)?;
    let mean_nn = |imgs: &Array2<f64>| -> Result<f64> {
        let mut total = 0.0;
        for row in imgs.rows() {
            total += nearest_neighbor_score(row.as_slice().expect("contiguous"), reference)?;
        }
        Ok(total / imgs.nrows() as f64)
    };
    let plain = edit_from_latents(
        predictor,
        schedule,
        &x_tm,
        &EditSpec::single(boundary.clone(), Zeta::Uniform(0.0), EditMode::Additive),
        config,
    )?;
    let baseline = mean_nn(&plain.images)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut images = Vec::with_capacity(grid.len());
    for &zeta in grid {
        let spec = EditSpec::single(boundary.clone(), Zeta::Uniform(zeta), mode);
        let out = edit_from_latents(predictor, schedule, &x_tm, &spec, config)?;
        let mut score = 0.0;
        for row in out.images.rows() {
            score += scorer(row.as_slice().expect("contiguous"))?;
        }
        let nn = mean_nn(&out.images)?;
        points.push(SweepPoint {
            zeta,
            score: score / out.images.nrows() as f64,
            nn_score: nn,
            degraded: nn > degradation_factor * baseline,
        });
        images.push(out.images);
    }
    Ok(SweepResult { points, images, baseline_nn_score: baseline, degradation_factor })
}
