//! Mixing-step search.
//!
//! Scanning from `T` downward, the mixing step `t_m` is the first recorded
//! step whose radius shift `Δr` reaches a threshold. Above `t_m` the chain
//! is still Gaussian-like and its radius barely moves; once content starts
//! forming the radius drops quickly.
//!
//! The reference threshold of 4 was read off scans that start at the
//! Gaussian radius `√12,288 ≈ 110.85` and contract to the radius of face
//! images. Raw shifts only mean something relative to such a scale, so the
//! default rule ([`ShiftScale::Contraction`]) measures each shift as a
//! share of the scan's own total contraction, converted to reference units.
//! [`ShiftScale::StartRadius`] rescales by the start radius instead.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{radius_scan, RadiusScan};
use crate::model::NoisePredictor;
use crate::schedule::{Direction, NoiseSchedule, StepPlan};
use crate::trajectory::{invert_batch, sample_starts, stack_rows, Mode, RunOptions, Source};

pub const REFERENCE_THRESHOLD: f64 = 4.0;
pub const REFERENCE_DIM: usize = 12_288;

/// Total radius contraction assumed for the reference scans: from
/// `√12,288` down to about `√(0.3·12,288) ≈ 61`, the radius of `[−1, 1]`
/// face images with mean squared pixel ≈ 0.3. A shift of 4 is then 8% of
/// the walk, 0.8 of the mean per-stride contraction over ten strides.
pub const REFERENCE_CONTRACTION: f64 = 50.0;

/// `threshold · √(d / 12,288)`: the raw threshold for a scan starting at `√d`.
pub fn scaled_threshold(threshold: f64, d: usize) -> f64 {
    threshold * (d as f64 / REFERENCE_DIM as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftScale {
    /// Compare `Δr` as recorded.
    Raw,
    /// Compare `Δr · √12,288 / r(T)`.
    StartRadius,
    /// Compare `Δr · 50 / C`, where `C` is the scan's contraction from its
    /// peak radius to its last recorded radius. Needs a scan that reaches
    /// the data end of the chain.
    #[default]
    Contraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSign {
    /// `|Δr|`: growth counts as much as contraction.
    Absolute,
    /// Only contraction (`Δr > 0`) counts. A stochastic sampler started
    /// inside the sphere first re-inflates the radius; that transient is
    /// not content forming.
    #[default]
    Decrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRule {
    pub threshold: f64,
    pub scale: ShiftScale,
    pub sign: ShiftSign,
    /// Rescale each shift to a 100-step gap, for strides other than 100.
    pub per_hundred_steps: bool,
}

impl Default for DetectionRule {
    fn default() -> Self {
        Self {
            threshold: REFERENCE_THRESHOLD,
            scale: ShiftScale::Contraction,
            sign: ShiftSign::Decrease,
            per_hundred_steps: false,
        }
    }
}

impl DetectionRule {
    /// `|Δr| ≥ threshold` on the recorded shifts, nothing else.
    pub fn raw(threshold: f64) -> Self {
        Self { threshold, scale: ShiftScale::Raw, sign: ShiftSign::Absolute, per_hundred_steps: false }
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::invalid("threshold must be positive"));
        }
        Ok(())
    }

    /// Shift as compared against the threshold.
    pub fn effective_shift(&self, delta_r: f64, gap: usize, scale: &ScanScale) -> f64 {
        let mut v = match self.sign {
            ShiftSign::Absolute => delta_r.abs(),
            ShiftSign::Decrease => delta_r,
        };
        v /= self.raw_threshold(scale) / self.threshold;
        if self.per_hundred_steps {
            v *= 100.0 / gap.max(1) as f64;
        }
        v
    }

    /// Raw `Δr` needed to fire, with 100-step normalization left out.
    /// Infinite when the scan never contracts under
    /// [`ShiftScale::Contraction`].
    pub fn raw_threshold(&self, scale: &ScanScale) -> f64 {
        match self.scale {
            ShiftScale::Raw => self.threshold,
            ShiftScale::StartRadius => self.threshold * scale.start_radius / (REFERENCE_DIM as f64).sqrt(),
            ShiftScale::Contraction if scale.contraction > 0.0 => {
                self.threshold * scale.contraction / REFERENCE_CONTRACTION
            }
            ShiftScale::Contraction => f64::INFINITY,
        }
    }
}

/// Size of one scan, for rescaling its shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanScale {
    /// `r(T)`
    pub start_radius: f64,
    /// Peak radius minus last radius.
    pub contraction: f64,
}

impl ScanScale {
    /// From `r(T)` and the recorded shifts (`Δr > 0` is a contraction).
    pub fn from_shifts(start_radius: f64, delta_r: &[f64]) -> Self {
        let (mut sum, mut low) = (0.0f64, 0.0f64);
        for &d in delta_r {
            sum += d;
            low = low.min(sum);
        }
        Self { start_radius, contraction: sum - low }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Detection {
    Found { t_m: usize, delta_r: f64 },
    NoneFound { max_shift: f64 },
}

impl Detection {
    pub fn t_m(&self) -> Option<usize> {
        match self {
            Detection::Found { t_m, .. } => Some(*t_m),
            Detection::NoneFound { .. } => None,
        }
    }
}

/// First step (from the top) whose effective shift reaches the threshold.
///
/// `steps[i]` is the step at which `delta_r[i]` was recorded and
/// `steps_above[i]` the recorded step before it; `start_radius` is `r(T)`.
pub fn detect(
    steps: &[usize],
    steps_above: &[usize],
    delta_r: &[f64],
    start_radius: f64,
    rule: &DetectionRule,
) -> Result<Detection> {
    check_dim(steps.len(), delta_r.len())?;
    check_dim(steps.len(), steps_above.len())?;
    if steps.len() < 2 {
        return Err(Error::invalid("need at least two radius shifts"));
    }
    rule.validate()?;
    let scale = ScanScale::from_shifts(start_radius, delta_r);
    let mut max_shift = f64::NEG_INFINITY;
    for ((&step, &above), &dr) in steps.iter().zip(steps_above).zip(delta_r) {
        let shift = rule.effective_shift(dr, above.abs_diff(step), &scale);
        if shift >= rule.threshold {
            return Ok(Detection::Found { t_m: step, delta_r: dr });
        }
        max_shift = max_shift.max(shift);
    }
    Ok(Detection::NoneFound { max_shift })
}

/// [`detect`] on a plain sequence of shifts at evenly spaced steps.
pub fn detect_sequence(steps: &[usize], delta_r: &[f64], rule: &DetectionRule) -> Result<Detection> {
    check_dim(steps.len(), delta_r.len())?;
    if steps.len() < 2 {
        return Err(Error::invalid("need at least two radius shifts"));
    }
    let gap = steps[0].abs_diff(steps[1]);
    let above: Vec<usize> = steps.iter().map(|s| s + gap).collect();
    detect(steps, &above, delta_r, (REFERENCE_DIM as f64).sqrt(), rule)
}

/// One scan with its detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    pub source: Source,
    pub mode: Mode,
    pub detection: Detection,
    pub scan: RadiusScan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    /// Detected step of the primary scan (sampled starts with the
    /// stochastic sampler when combos are present).
    pub t_m: Option<usize>,
    pub detection: Detection,
    pub scan: RadiusScan,
    pub rule: DetectionRule,
    pub stride: usize,
    pub combos: Vec<ComboResult>,
    /// Some recorded standard error is non-finite or exceeds half the raw
    /// threshold, so the detection is not trustworthy.
    pub wide_std_error: bool,
}

impl MixingReport {
    /// Largest minus smallest detected `t_m` across combos, if all fired.
    pub fn combo_spread(&self) -> Option<usize> {
        let found: Option<Vec<usize>> = self.combos.iter().map(|c| c.detection.t_m()).collect();
        let found = found?;
        Some(found.iter().max()? - found.iter().min()?)
    }

    pub fn combos_agree(&self) -> bool {
        !self.combos.is_empty() && self.combo_spread().is_some_and(|s| s <= self.stride)
    }
}

fn scan_detection(scan: &RadiusScan, rule: &DetectionRule) -> Result<Detection> {
    let mut steps = Vec::new();
    let mut above = Vec::new();
    let mut drs = Vec::new();
    for w in scan.points.windows(2) {
        steps.push(w[1].step);
        above.push(w[0].step);
        drs.push(w[1].delta_r.expect("every point after the first has a shift"));
    }
    detect(&steps, &above, &drs, scan.points[0].r, rule)
}

fn wide(scan: &RadiusScan, rule: &DetectionRule) -> bool {
    let drs: Vec<f64> = scan.points.iter().filter_map(|p| p.delta_r).collect();
    let limit = rule.raw_threshold(&ScanScale::from_shifts(scan.points[0].r, &drs)) / 2.0;
    scan.points.iter().any(|p| !p.std_error.is_finite() || p.std_error > limit)
}

/// Detect `t_m` on a single scan.
pub fn find_mixing_step(scan: &RadiusScan, rule: &DetectionRule) -> Result<MixingReport> {
    if scan.points.len() < 3 {
        return Err(Error::invalid("need at least two radius shifts"));
    }
    let detection = scan_detection(scan, rule)?;
    Ok(MixingReport {
        t_m: detection.t_m(),
        detection,
        scan: scan.clone(),
        rule: *rule,
        stride: scan.stride,
        combos: Vec::new(),
        wide_std_error: wide(scan, rule),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub n_samples: usize,
    pub stride: usize,
    pub rule: DetectionRule,
    /// Steps of the inversion and denoising plans (unit steps when equal
    /// to `T`).
    pub steps: usize,
    pub seed: u64,
}

/// Scan all four {sampled, inverted} × {stochastic, deterministic} combos.
///
/// Inverted starts come from the first `n_samples` rows of `dataset`. The
/// stochastic sampler runs at the schedule's η. Scans run on separate
/// threads; each sample owns its random stream, so results are
/// thread-count independent.
pub fn cross_validate_mixing(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    dataset: &[Vec<f64>],
    config: &CrossValidation,
) -> Result<MixingReport> {
    let n = config.n_samples;
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if dataset.len() < n {
        return Err(Error::invalid(format!("need {n} images for inverted starts, dataset has {}", dataset.len())));
    }
    let d = predictor.data_dim();
    let t = schedule.steps();
    let inv_plan = StepPlan::even(schedule, config.steps, t, Direction::Invert)?;
    let plan = inv_plan.with_direction(Direction::Denoise);

    let sampled = sample_starts(config.seed, n, d);
    let x0 = stack_rows(&dataset[..n])?;
    let inverted: Array2<f64> = invert_batch(predictor, schedule, &x0, &inv_plan, usize::MAX)?.final_state().clone();

    let jobs = [
        (Source::Sampled, Mode::Stochastic, &sampled),
        (Source::Sampled, Mode::Deterministic, &sampled),
        (Source::Inverted, Mode::Stochastic, &inverted),
        (Source::Inverted, Mode::Deterministic, &inverted),
    ];
    let scans: Vec<Result<RadiusScan>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(_, mode, starts)| {
                let plan = &plan;
                s.spawn(move || {
                    radius_scan(predictor, schedule, starts, plan, &RunOptions::new(mode), config.stride, config.seed)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scan thread panicked")).collect()
    });

    let mut combos = Vec::with_capacity(4);
    for (&(source, mode, _), scan) in jobs.iter().zip(scans) {
        let scan = scan?;
        let detection = scan_detection(&scan, &config.rule)?;
        combos.push(ComboResult { source, mode, detection, scan });
    }
    let primary = &combos[0];
    Ok(MixingReport {
        t_m: primary.detection.t_m(),
        detection: primary.detection,
        scan: primary.scan.clone(),
        rule: config.rule,
        stride: config.stride,
        wide_std_error: combos.iter().any(|c| wide(&c.scan, &config.rule)),
        combos,
    })
}
