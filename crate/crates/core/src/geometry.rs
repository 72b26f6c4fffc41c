//! High-dimensional Gaussian geometry probes.
//!
//! The central quantity is the Gaussian radius `r = √(E‖x‖²)`, which for
//! `N(0, σ²I_d)` concentrates at `σ√d`. Tracking `r` along the denoising
//! chain is how the mixing step is found (see [`crate::mixing`]).

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::NoisePredictor;
use crate::rng::{self, tag};
use crate::schedule::{NoiseSchedule, StepPlan};
use crate::trajectory::{denoise_batch, sample_streams, BatchRun, Mode, RunOptions, Source};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub r: f64,
    /// Delta-method standard error of `r`.
    pub std_error: f64,
    pub n: usize,
    pub d: usize,
}

/// `r = √(mean ‖x‖²)` over the rows of `samples`.
///
/// With `m` the mean and `s²` the sample variance of the squared lengths,
/// `SE(r) ≈ s / (2√m·√N)`. A single sample has no spread estimate and
/// reports an infinite standard error.
pub fn estimate_radius(samples: ArrayView2<'_, f64>) -> Result<RadiusEstimate> {
    let n = samples.nrows();
    if n == 0 {
        return Err(Error::invalid("cannot estimate a radius from zero samples"));
    }
    let sq: Vec<f64> = samples.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mean = sq.iter().sum::<f64>() / n as f64;
    let std_error = if n < 2 {
        f64::INFINITY
    } else if mean == 0.0 {
        0.0
    } else {
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / (2.0 * mean.sqrt() * (n as f64).sqrt())
    };
    Ok(RadiusEstimate { r: mean.sqrt(), std_error, n, d: samples.ncols() })
}

/// Same as [`estimate_radius`] for a list of vectors.
pub fn estimate_radius_rows(samples: &[Vec<f64>]) -> Result<RadiusEstimate> {
    let d = samples.first().map_or(0, Vec::len);
    for s in samples {
        check_dim(d, s.len())?;
    }
    let flat: Vec<f64> = samples.iter().flatten().copied().collect();
    let view = ArrayView2::from_shape((samples.len(), d), &flat).expect("row-major");
    estimate_radius(view)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub step: usize,
    pub r: f64,
    /// `r(previous recorded step) − r(this step)`; absent at the first point.
    pub delta_r: Option<f64>,
    pub std_error: f64,
}

/// Radii recorded along a denoising run, from `T` downward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusScan {
    pub points: Vec<ScanPoint>,
    pub stride: usize,
    pub n_samples: usize,
}

impl RadiusScan {
    /// Build from a recorded batch run (states ordered from `T` down).
    pub fn from_run(run: &BatchRun, stride: usize) -> Result<Self> {
        if run.steps.len() < 2 {
            return Err(Error::invalid("a radius scan needs at least two recorded steps"));
        }
        let mut points: Vec<ScanPoint> = Vec::with_capacity(run.steps.len());
        for (&step, x) in run.steps.iter().zip(&run.states) {
            let est = estimate_radius(x.view())?;
            let delta_r = points.last().map(|p| p.r - est.r);
            points.push(ScanPoint { step, r: est.r, delta_r, std_error: est.std_error });
        }
        Ok(Self { points, stride, n_samples: run.states[0].nrows() })
    }

    pub fn steps(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.step).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.r).collect()
    }

    /// CSV with header `step,r,delta_r,std_error`; the first `delta_r` is empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,r,delta_r,std_error\n");
        for p in &self.points {
            let dr = p.delta_r.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", p.step, p.r, dr, p.std_error).expect("string write");
        }
        out
    }
}

/// Denoise `starts` (all at `plan.end()`) and record the radius every
/// `stride` steps.
pub fn radius_scan(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    starts: &Array2<f64>,
    plan: &StepPlan,
    options: &RunOptions,
    stride: usize,
    seed: u64,
) -> Result<RadiusScan> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if plan.taus().iter().filter(|&&t| t % stride == 0).count() < 2 {
        return Err(Error::invalid(format!("stride {stride} records fewer than two steps of the plan")));
    }
    let mut rngs = sample_streams(seed, starts.nrows());
    let opts = options.recording(stride);
    let run = denoise_batch(predictor, schedule, starts, plan, &opts, &mut rngs, None, None)?;
    RadiusScan::from_run(&run, stride)
}

/// Volume and surface area of the unit ball in `d` dimensions,
/// `A = 2π^{d/2}/Γ(d/2)`, `V = A/d`, evaluated in log space.
pub fn unit_sphere_volume_area(d: usize) -> Result<(f64, f64)> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let half = d as f64 / 2.0;
    let log_area = std::f64::consts::LN_2 + half * std::f64::consts::PI.ln() - libm::lgamma(half);
    let area = log_area.exp();
    Ok((area / d as f64, area))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabEstimate {
    pub fraction: f64,
    pub std_error: f64,
    /// `(2/c)·e^{−c²/2}`
    pub bound: f64,
    pub n: usize,
}

/// Fraction of the unit hemisphere `x_1 ≥ 0` lying above `x_1 = c/√(d−1)`.
///
/// Points are uniform in the ball (normalized Gaussian direction, radius
/// `U^{1/d}`) and folded onto the upper hemisphere by `|x_1|`.
pub fn hemisphere_slab_fraction(d: usize, c: f64, n: usize, seed: u64) -> Result<SlabEstimate> {
    if d < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("c must be positive"));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let plane = c / ((d - 1) as f64).sqrt();
    let mut rng = rng::stream(seed, tag::PROBE, 0);
    let mut hits = 0usize;
    for _ in 0..n {
        let g = rng::gaussian_vec(&mut rng, d);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = rng.random::<f64>().powf(1.0 / d as f64);
        if (g[0] / norm * radius).abs() > plane {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    Ok(SlabEstimate {
        fraction: p,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        bound: 2.0 / c * (-c * c / 2.0).exp(),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    /// `k/d`
    pub expected: f64,
    pub mean_abs_deviation: f64,
    /// Fraction of draws with `|‖w‖² − k/d| ≥ ε·k/d`.
    pub failure_rate: f64,
    /// `4·e^{−kε²/64}`; may exceed 1.
    pub bound: f64,
}

/// Squared length of the projection of a random unit vector onto a
/// `k`-dimensional subspace.
///
/// By rotation invariance a random vector against the first `k`
/// coordinates has the same law as a fixed vector against a random
/// subspace, so only the vector is drawn.
pub fn random_projection_check(d: usize, k: usize, n: usize, epsilon: f64, seed: u64) -> Result<ProjectionReport> {
    if k == 0 || k > d {
        return Err(Error::invalid(format!("need 1 <= k <= d, got k={k}, d={d}")));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let expected = k as f64 / d as f64;
    let mut rng = rng::stream(seed, tag::PROBE, 1);
    let (mut dev_sum, mut fails) = (0.0, 0usize);
    for _ in 0..n {
        let v = rng::gaussian_vec(&mut rng, d);
        let total: f64 = v.iter().map(|x| x * x).sum();
        let w = if k == d { 1.0 } else { v[..k].iter().map(|x| x * x).sum::<f64>() / total };
        let dev = (w - expected).abs();
        dev_sum += dev;
        if dev >= epsilon * expected {
            fails += 1;
        }
    }
    Ok(ProjectionReport {
        d,
        k,
        epsilon,
        expected,
        mean_abs_deviation: dev_sum / n as f64,
        failure_rate: fails as f64 / n as f64,
        bound: 4.0 * (-(k as f64) * epsilon * epsilon / 64.0).exp(),
    })
}

/// Spherical interpolation of direction, linear interpolation of norm.
pub fn slerp(a: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_dim(a.len(), b.len())?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda must lie in [0, 1]"));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("slerp is undefined for a zero vector"));
    }
    let cos = (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0);
    if cos <= -1.0 + 1e-12 {
        return Err(Error::invalid("slerp is undefined for antipodal vectors"));
    }
    if lambda == 0.0 {
        return Ok(a.to_vec());
    }
    if lambda == 1.0 {
        return Ok(b.to_vec());
    }
    let norm = (1.0 - lambda) * na + lambda * nb;
    let theta = cos.acos();
    let (wa, wb) = if theta < 1e-9 {
        (1.0 - lambda, lambda)
    } else {
        (((1.0 - lambda) * theta).sin() / theta.sin(), (lambda * theta).sin() / theta.sin())
    };
    let mut dir: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x / na + wb * y / nb).collect();
    let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v *= norm / dn);
    Ok(dir)
}

/// Root-mean-square pixel distance from `x` to its nearest reference image.
pub fn nearest_neighbor_score(x: &[f64], reference: &[Vec<f64>]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for r in reference {
        check_dim(x.len(), r.len())?;
        let dist: f64 = x.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum();
        best = best.min(dist);
    }
    if !best.is_finite() {
        return Err(Error::invalid("reference set is empty"));
    }
    Ok((best / x.len() as f64).sqrt())
}

/// Interpolation endpoints at step `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurve {
    pub source: Source,
    pub lambdas: Vec<f64>,
    /// Mean nearest-neighbor score per grid point (lower is closer to data).
    pub scores: Vec<f64>,
    /// Mean score over the interior grid points.
    pub mid_path_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEffectReport {
    pub mode: Mode,
    pub curves: Vec<DistanceCurve>,
}

/// Slerp each endpoint pair over `lambdas`, denoise every point along
/// `plan` with `options`, and score outputs by nearest-neighbor distance to
/// `reference`. One curve per endpoint source, in order of first appearance.
#[allow(clippy::too_many_arguments)]
pub fn distance_effect_experiment(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    pairs: &[EndpointPair],
    reference: &[Vec<f64>],
    lambdas: &[f64],
    plan: &StepPlan,
    options: &RunOptions,
    seed: u64,
) -> Result<DistanceEffectReport> {
    if !predictor.is_trained() {
        return Err(Error::invalid("the distance-effect experiment needs a trained model"));
    }
    if pairs.is_empty() || lambdas.is_empty() {
        return Err(Error::invalid("need at least one pair and one grid point"));
    }
    let d = predictor.data_dim();
    let mut sources: Vec<Source> = Vec::new();
    for p in pairs {
        if !sources.contains(&p.source) {
            sources.push(p.source);
        }
    }
    let mut curves = Vec::new();
    for (si, &source) in sources.iter().enumerate() {
        let group: Vec<&EndpointPair> = pairs.iter().filter(|p| p.source == source).collect();
        let mut rows = Vec::with_capacity(group.len() * lambdas.len());
        for p in &group {
            for &l in lambdas {
                rows.push(slerp(&p.a, &p.b, l)?);
            }
        }
        let starts = crate::trajectory::stack_rows(&rows)?;
        check_dim(d, starts.ncols())?;
        // The same stream index serves the same (pair, λ) slot in every group.
        let mut rngs = sample_streams(seed ^ si as u64, rows.len());
        let run =
            denoise_batch(predictor, schedule, &starts, plan, &options.recording(usize::MAX), &mut rngs, None, None)?;
        let out = run.final_state();
        let mut scores = vec![0.0; lambdas.len()];
        for (i, row) in out.rows().into_iter().enumerate() {
            let s = nearest_neighbor_score(row.as_slice().expect("contiguous"), reference)?;
            scores[i % lambdas.len()] += s / group.len() as f64;
        }
        let interior: Vec<f64> =
            lambdas.iter().zip(&scores).filter(|(&l, _)| l > 0.0 && l < 1.0).map(|(_, &s)| s).collect();
        let mid_path_score =
            if interior.is_empty() { f64::NAN } else { interior.iter().sum::<f64>() / interior.len() as f64 };
        curves.push(DistanceCurve { source, lambdas: lambdas.to_vec(), scores, mid_path_score });
    }
    Ok(DistanceEffectReport { mode: options.mode, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::zero_predictor;
    use crate::schedule::Direction;
    use crate::trajectory::sample_starts;
    use std::f64::consts::PI;

    #[test]
    fn all_ones_radius() {
        let x = Array2::from_elem((1, 4), 1.0);
        let est = estimate_radius(x.view()).unwrap();
        assert_eq!(est.r, 2.0);
        assert!(est.std_error.is_infinite());
        assert!(estimate_radius(Array2::<f64>::zeros((0, 3)).view()).is_err());
        assert!(estimate_radius_rows(&[vec![1.0; 3], vec![1.0; 2]]).is_err());
    }

    #[test]
    fn delta_method_standard_error() {
        // Squared lengths 1 and 9: mean 5, sample variance 32.
        let est = estimate_radius_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert!((est.r - 5f64.sqrt()).abs() < 1e-15);
        let expect = 32f64.sqrt() / (2.0 * 5f64.sqrt() * 2f64.sqrt());
        assert!((est.std_error - expect).abs() < 1e-15);
    }

    #[test]
    fn radius_consistency_within_three_standard_errors() {
        for (d, sigma) in [(16usize, 0.5), (1024, 1.0), (12_288, 2.0)] {
            let x = sample_starts(d as u64, 300, d) * sigma;
            let est = estimate_radius(x.view()).unwrap();
            let truth = sigma * (d as f64).sqrt();
            assert!((est.r - truth).abs() <= 3.0 * est.std_error, "d={d}: {} vs {truth}", est.r);
        }
    }

    #[test]
    fn annulus_concentration() {
        let d = 12_288;
        let x = sample_starts(9, 400, d);
        let root = (d as f64).sqrt();
        let inside = x.rows().into_iter().filter(|r| (r.dot(r).sqrt() - root).abs() <= 5.0).count();
        assert!(inside as f64 >= 0.99 * 400.0);
    }

    #[test]
    fn sphere_closed_forms() {
        let (v2, a2) = unit_sphere_volume_area(2).unwrap();
        assert!((v2 - PI).abs() < 1e-12 && (a2 - 2.0 * PI).abs() < 1e-12);
        let (v3, a3) = unit_sphere_volume_area(3).unwrap();
        assert!((v3 - 4.0 * PI / 3.0).abs() < 1e-12 && (a3 - 4.0 * PI).abs() < 1e-12);
        let (v1, a1) = unit_sphere_volume_area(1).unwrap();
        assert!((v1 - 2.0).abs() < 1e-12 && (a1 - 2.0).abs() < 1e-12);
        assert!(unit_sphere_volume_area(0).is_err());
        let mut prev = unit_sphere_volume_area(20).unwrap().0;
        for d in 21..400 {
            let v = unit_sphere_volume_area(d).unwrap().0;
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-100);
    }

    #[test]
    fn slab_fraction_limits_and_errors() {
        let near_zero = hemisphere_slab_fraction(20, 1e-9, 2000, 1).unwrap();
        assert!(near_zero.fraction > 0.999);
        assert!(hemisphere_slab_fraction(1, 1.0, 10, 1).is_err());
        assert!(hemisphere_slab_fraction(5, 0.0, 10, 1).is_err());
        assert!(hemisphere_slab_fraction(5, 1.0, 0, 1).is_err());
    }

    #[test]
    fn projection_full_space_is_exact() {
        let rep = random_projection_check(30, 30, 100, 0.1, 2).unwrap();
        assert_eq!(rep.failure_rate, 0.0);
        assert_eq!(rep.mean_abs_deviation, 0.0);
        assert!(random_projection_check(10, 11, 10, 0.5, 1).is_err());
        assert!(random_projection_check(10, 0, 10, 0.5, 1).is_err());
    }

    #[test]
    fn slerp_cases() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        assert_eq!(slerp(&a, &b, 0.0).unwrap(), a);
        assert_eq!(slerp(&a, &b, 1.0).unwrap(), b);
        let mid = slerp(&a, &b, 0.5).unwrap();
        let h = 0.5f64.sqrt();
        for (m, e) in mid.iter().zip([h, h, 0.0]) {
            assert!((m - e).abs() < 1e-15);
        }
        assert!(slerp(&a, &[-1.0, 0.0, 0.0], 0.5).is_err());
        assert!(slerp(&a, &[0.0; 3], 0.5).is_err());
        assert!(slerp(&a, &b[..2], 0.5).is_err());
        let same = slerp(&a, &[3.0, 0.0, 0.0], 0.5).unwrap();
        assert!((same[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_model_scan_is_a_scale() {
        let s = NoiseSchedule::desk(0.0);
        let m = zero_predictor(16);
        let starts = sample_starts(4, 50, 16);
        let plan = StepPlan::even(&s, s.steps(), s.steps(), Direction::Denoise).unwrap();
        let scan = radius_scan(&m, &s, &starts, &plan, &RunOptions::new(Mode::Deterministic), 10, 0).unwrap();
        assert_eq!(scan.steps(), (0..=10).rev().map(|k| k * 10).collect::<Vec<_>>());
        let r_t = scan.points[0].r;
        let a_t = s.alpha_bar(s.steps());
        for p in &scan.points {
            let expect = (s.alpha_bar(p.step) / a_t).sqrt() * r_t;
            assert!((p.r - expect).abs() <= 1e-9 * expect, "step {}", p.step);
        }
        assert!(scan.points[0].delta_r.is_none());
        let csv = scan.to_csv();
        assert!(csv.starts_with("step,r,delta_r,std_error\n100,"));
        assert_eq!(csv.lines().count(), 12);
        assert!(radius_scan(&m, &s, &starts, &plan, &RunOptions::new(Mode::Deterministic), 0, 0).is_err());
        assert!(radius_scan(&m, &s, &starts, &plan, &RunOptions::new(Mode::Deterministic), 1000, 0).is_err());
    }

    #[test]
    fn distance_effect_needs_training() {
        let s = NoiseSchedule::desk(0.0);
        let m = zero_predictor(4);
        let plan = StepPlan::even(&s, 10, 100, Direction::Denoise).unwrap();
        let pair = EndpointPair { a: vec![1.0; 4], b: vec![-1.0, 1.0, 1.0, 1.0], source: Source::Sampled };
        let err = distance_effect_experiment(
            &m,
            &s,
            &[pair],
            &[vec![0.0; 4]],
            &[0.0, 1.0],
            &plan,
            &RunOptions::new(Mode::Deterministic),
            0,
        );
        assert!(err.is_err());
    }
}
