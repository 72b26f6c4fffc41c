//! Linear semantic boundaries in latent space.
//!
//! Images are inverted deterministically to the mixing step, and a linear
//! SVM separates the latents of images with and without an attribute. The
//! unit normal `n` and bias `b` give the signed distance `d(x) = nᵀx + b`.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::binio::fnv1a64;
use crate::error::{check_dim, Error, Result};
use crate::model::NoisePredictor;
use crate::rng::{self, tag};
use crate::schedule::{Direction, NoiseSchedule, StepPlan};
use crate::trajectory::{invert_batch, stack_rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// The latent `x_t` itself.
    Epsilon,
    /// The noise predictor's bottleneck activation at `(x_t, t)`.
    H,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Epsilon => "epsilon",
            Space::H => "h",
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" | "eps" => Ok(Space::Epsilon),
            "h" => Ok(Space::H),
            other => Err(Error::invalid(format!("unknown latent space '{other}' (expected epsilon or h)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDataset {
    pub latents: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub space: Space,
    pub t_m: usize,
}

impl LatentDataset {
    pub fn new(latents: Vec<Vec<f64>>, labels: Vec<bool>, space: Space, t_m: usize) -> Result<Self> {
        check_dim(latents.len(), labels.len())?;
        if let Some(first) = latents.first() {
            for l in &latents {
                check_dim(first.len(), l.len())?;
            }
        }
        Ok(Self { latents, labels, space, t_m })
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.latents.first().map_or(0, Vec::len)
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            latents: indices.iter().map(|&i| self.latents[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            space: self.space,
            t_m: self.t_m,
        }
    }
}

/// Deterministic inversion of every image to `t_m` along `steps_inv` even
/// steps.
pub fn invert_to(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    images: &Array2<f64>,
    t_m: usize,
    steps_inv: usize,
) -> Result<Array2<f64>> {
    if t_m == 0 {
        return Ok(images.clone());
    }
    let plan = StepPlan::even(schedule, steps_inv, t_m, Direction::Invert)?;
    Ok(invert_batch(predictor, schedule, images, &plan, usize::MAX)?.final_state().clone())
}

/// Latents at `t_m` in `space`, one per image, labels kept in order.
pub fn assemble_latent_dataset(
    predictor: &NoisePredictor,
    schedule: &NoiseSchedule,
    images: &[Vec<f64>],
    labels: &[bool],
    t_m: usize,
    space: Space,
    steps_inv: usize,
) -> Result<LatentDataset> {
    if !predictor.is_trained() {
        return Err(Error::invalid("latent datasets need a trained model"));
    }
    if labels.len() != images.len() {
        return Err(Error::invalid(format!("{} images but {} labels", images.len(), labels.len())));
    }
    if images.is_empty() {
        return Err(Error::invalid("no images to invert"));
    }
    schedule.check_step(t_m)?;
    let x = invert_to(predictor, schedule, &stack_rows(images)?, t_m, steps_inv)?;
    let rows = match space {
        Space::Epsilon => x,
        Space::H => predictor.predict_batch(x.view(), &vec![t_m as f64; x.nrows()])?.h,
    };
    let latents = rows.rows().into_iter().map(|r| r.to_vec()).collect();
    LatentDataset::new(latents, labels.to_vec(), space, t_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub epochs: usize,
    /// Regularization strength λ.
    pub lambda: f64,
    pub seed: u64,
    /// Fit a bias; when false the boundary passes through the origin.
    pub use_bias: bool,
    pub test_fraction: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { epochs: 200, lambda: 1e-2, seed: 0, use_bias: true, test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub attribute: String,
    pub space: Space,
    pub t_m: usize,
    /// Unit normal pointing toward the positive class.
    pub normal: Vec<f64>,
    pub bias: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Standard deviation of signed distances over the training latents.
    pub distance_spread: f64,
    pub fit: SvmConfig,
}

/// Seeded split into (train, test) index lists.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid("test_fraction must lie in [0, 1)"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, tag::SPLIT, u64::MAX));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let test = idx[..n_test].to_vec();
    let train = idx[n_test..].to_vec();
    Ok((train, test))
}

/// Pegasos-style hinge-loss training; returns the raw `(w, b)`.
///
/// With a bias, latents are centered on the training mean, `w` is fitted
/// through the origin, and the bias is then set by exact minimization of
/// the training hinge loss along the remaining single coordinate (the loss
/// is piecewise linear in `b`, so a breakpoint is optimal). The mean is
/// folded back into the returned bias. Without a bias nothing is centered.
pub fn pegasos(data: &LatentDataset, config: &SvmConfig) -> Result<(Vec<f64>, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a boundary to an empty dataset"));
    }
    if !data.labels.iter().any(|&l| l) || data.labels.iter().all(|&l| l) {
        return Err(Error::invalid("both classes must be present to fit a boundary"));
    }
    if !(config.lambda > 0.0 && config.lambda.is_finite()) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if config.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    let d = data.dim();
    let n = data.len();
    let mean: Vec<f64> = if config.use_bias {
        (0..d).map(|j| data.latents.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect()
    } else {
        vec![0.0; d]
    };
    let xs: Vec<Vec<f64>> = data.latents.iter().map(|x| x.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let ys: Vec<f64> = data.labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();

    let lambda = config.lambda;
    let mut w = vec![0.0; d];
    // w is stored as scale · v so the shrink step is O(1).
    let mut scale = 1.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(config.seed, tag::SVM, 0);
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            step += 1;
            let eta = 1.0 / (lambda * step as f64);
            let margin = ys[i] * scale * dot(&w, &xs[i]);
            scale *= 1.0 - eta * lambda;
            if scale.abs() < 1e-12 {
                // Only hit on the very first step (η·λ = 1): restart from zero.
                w.iter_mut().for_each(|v| *v = 0.0);
                scale = 1.0;
            }
            if margin < 1.0 {
                let c = eta * ys[i] / scale;
                for (wj, xj) in w.iter_mut().zip(&xs[i]) {
                    *wj += c * xj;
                }
            }
            // Project onto the ball of radius 1/√λ.
            let norm = scale.abs() * dot(&w, &w).sqrt();
            let limit = 1.0 / lambda.sqrt();
            if norm > limit {
                scale *= limit / norm;
            }
        }
    }
    let w: Vec<f64> = w.iter().map(|v| v * scale).collect();
    let b = if config.use_bias {
        let scores: Vec<f64> = xs.iter().map(|x| dot(&w, x)).collect();
        best_bias(&scores, &ys) - dot(&w, &mean)
    } else {
        0.0
    };
    if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
        return Err(Error::NonFinite("SVM weights diverged".into()));
    }
    Ok((w, b))
}

/// Minimizer of `Σ max(0, 1 − y_i(s_i + b))` over the breakpoints
/// `b = y_i − s_i`; ties go to the smallest `|b|`.
fn best_bias(scores: &[f64], ys: &[f64]) -> f64 {
    let loss = |b: f64| -> f64 { scores.iter().zip(ys).map(|(s, y)| (1.0 - y * (s + b)).max(0.0)).sum() };
    let mut best: (f64, f64) = (loss(0.0), 0.0);
    for (s, y) in scores.iter().zip(ys) {
        let b = y - s;
        let l = loss(b);
        if l < best.0 || (l == best.0 && b.abs() < best.1.abs()) {
            best = (l, b);
        }
    }
    best.1
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fit on a seeded 80/20 split and normalize to a unit normal.
pub fn fit_boundary(data: &LatentDataset, attribute: &str, config: &SvmConfig) -> Result<Boundary> {
    let (train_idx, test_idx) = split_indices(data.len(), config.test_fraction, config.seed)?;
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let (w, b) = pegasos(&train, config)?;
    let norm = dot(&w, &w).sqrt();
    if norm == 0.0 {
        return Err(Error::NonFinite("SVM returned a zero weight vector".into()));
    }
    let mut boundary = Boundary {
        attribute: attribute.to_string(),
        space: data.space,
        t_m: data.t_m,
        normal: w.iter().map(|v| v / norm).collect(),
        bias: b / norm,
        train_accuracy: 0.0,
        test_accuracy: f64::NAN,
        n_train: train.len(),
        n_test: test.len(),
        distance_spread: 0.0,
        fit: *config,
    };
    boundary.train_accuracy = evaluate_boundary(&boundary, &train)?;
    if !test.is_empty() {
        boundary.test_accuracy = evaluate_boundary(&boundary, &test)?;
    }
    let dists: Vec<f64> = train.latents.iter().map(|x| signed_distance(&boundary, x)).collect::<Result<_>>()?;
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    boundary.distance_spread = (dists.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / dists.len() as f64).sqrt();
    Ok(boundary)
}

/// `nᵀx + b`
pub fn signed_distance(boundary: &Boundary, x: &[f64]) -> Result<f64> {
    check_dim(boundary.normal.len(), x.len())?;
    Ok(dot(&boundary.normal, x) + boundary.bias)
}

/// Fraction of samples whose distance sign matches the label (a distance
/// of exactly zero counts as negative).
pub fn evaluate_boundary(boundary: &Boundary, data: &LatentDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    if data.space != boundary.space {
        return Err(Error::invalid(format!("boundary lives in {} space, dataset in {}", boundary.space, data.space)));
    }
    let mut hits = 0usize;
    for (x, &label) in data.latents.iter().zip(&data.labels) {
        if (signed_distance(boundary, x)? > 0.0) == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Held-out accuracy for several training-set sizes, drawn from the front
/// of the seeded training split. The test split is shared.
pub fn sample_size_sweep(data: &LatentDataset, sizes: &[usize], config: &SvmConfig) -> Result<Vec<(usize, f64)>> {
    let (train_idx, test_idx) = split_indices(data.len(), config.test_fraction, config.seed)?;
    let test = data.subset(&test_idx);
    if test.is_empty() {
        return Err(Error::invalid("sample-size sweep needs a test split"));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let n = n.min(train_idx.len());
        let sub = data.subset(&train_idx[..n]);
        let cfg = SvmConfig { test_fraction: 0.0, ..*config };
        let acc = match fit_boundary(&sub, "sweep", &cfg) {
            Ok(b) => evaluate_boundary(&b, &test)?,
            Err(Error::InvalidArgument(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        out.push((n, acc));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiBoundary {
    pub boundaries: Vec<Boundary>,
    /// `(i, j, cos(n_i, n_j))` for every pair `i < j`.
    pub cosines: Vec<(usize, usize, f64)>,
}

impl MultiBoundary {
    pub fn attributes(&self) -> Vec<&str> {
        self.boundaries.iter().map(|b| b.attribute.as_str()).collect()
    }

    /// `Nᵀx + b`, one distance per stacked boundary.
    pub fn signed_distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.boundaries.iter().map(|b| signed_distance(b, x)).collect()
    }
}

/// Row-stack boundaries that share a space, dimension and `t_m`.
pub fn stack_boundaries(boundaries: &[Boundary]) -> Result<MultiBoundary> {
    let first = boundaries.first().ok_or_else(|| Error::invalid("need at least one boundary to stack"))?;
    for b in boundaries {
        if b.space != first.space {
            return Err(Error::invalid("cannot stack boundaries from different spaces"));
        }
        if b.t_m != first.t_m {
            return Err(Error::invalid("cannot stack boundaries fitted at different t_m"));
        }
        check_dim(first.normal.len(), b.normal.len())?;
    }
    let mut cosines = Vec::new();
    for i in 0..boundaries.len() {
        for j in i + 1..boundaries.len() {
            cosines.push((i, j, dot(&boundaries[i].normal, &boundaries[j].normal)));
        }
    }
    Ok(MultiBoundary { boundaries: boundaries.to_vec(), cosines })
}

const FILE_HEADER: &str = "# bdk boundary v1";

impl Boundary {
    /// Key-value text; every number is written in shortest round-trip form
    /// and the last line holds an FNV-1a checksum of everything above it.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{FILE_HEADER}").unwrap();
        writeln!(s, "attribute = {}", self.attribute).unwrap();
        writeln!(s, "space = {}", self.space).unwrap();
        writeln!(s, "t_m = {}", self.t_m).unwrap();
        writeln!(s, "dim = {}", self.normal.len()).unwrap();
        writeln!(s, "bias = {}", self.bias).unwrap();
        writeln!(s, "train_accuracy = {}", self.train_accuracy).unwrap();
        writeln!(s, "test_accuracy = {}", self.test_accuracy).unwrap();
        writeln!(s, "n_train = {}", self.n_train).unwrap();
        writeln!(s, "n_test = {}", self.n_test).unwrap();
        writeln!(s, "distance_spread = {}", self.distance_spread).unwrap();
        writeln!(s, "fit.epochs = {}", self.fit.epochs).unwrap();
        writeln!(s, "fit.lambda = {}", self.fit.lambda).unwrap();
        writeln!(s, "fit.seed = {}", self.fit.seed).unwrap();
        writeln!(s, "fit.use_bias = {}", self.fit.use_bias).unwrap();
        writeln!(s, "fit.test_fraction = {}", self.fit.test_fraction).unwrap();
        let normal: Vec<String> = self.normal.iter().map(|v| v.to_string()).collect();
        writeln!(s, "normal = {}", normal.join(" ")).unwrap();
        let sum = fnv1a64(s.as_bytes());
        writeln!(s, "checksum = {sum:016x}").unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let body_end =
            text.rfind("checksum = ").ok_or_else(|| Error::Truncated("boundary file has no checksum line".into()))?;
        let (body, tail) = text.split_at(body_end);
        if !body.starts_with(FILE_HEADER) {
            return Err(Error::BadMagic { expected: FILE_HEADER });
        }
        let stored = u64::from_str_radix(tail["checksum = ".len()..].trim(), 16)
            .map_err(|_| Error::Malformed("unreadable checksum".into()))?;
        let computed = fnv1a64(body.as_bytes());
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let mut map = std::collections::HashMap::new();
        for line in body.lines().skip(1) {
            let (k, v) = line.split_once(" = ").ok_or_else(|| Error::Malformed(format!("line without '=': {line}")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Malformed(format!("missing key '{k}'")));
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Malformed(format!("bad value for '{k}': {v}")))
        }
        let dim: usize = num("dim", get("dim")?)?;
        let normal: Vec<f64> = get("normal")?.split_whitespace().map(|v| num("normal", v)).collect::<Result<_>>()?;
        check_dim(dim, normal.len())?;
        Ok(Self {
            attribute: get("attribute")?.to_string(),
            space: get("space")?.parse()?,
            t_m: num("t_m", get("t_m")?)?,
            normal,
            bias: num("bias", get("bias")?)?,
            train_accuracy: num("train_accuracy", get("train_accuracy")?)?,
            test_accuracy: num("test_accuracy", get("test_accuracy")?)?,
            n_train: num("n_train", get("n_train")?)?,
            n_test: num("n_test", get("n_test")?)?,
            distance_spread: num("distance_spread", get("distance_spread")?)?,
            fit: SvmConfig {
                epochs: num("fit.epochs", get("fit.epochs")?)?,
                lambda: num("fit.lambda", get("fit.lambda")?)?,
                seed: num("fit.seed", get("fit.seed")?)?,
                use_bias: num("fit.use_bias", get("fit.use_bias")?)?,
                test_fraction: num("fit.test_fraction", get("fit.test_fraction")?)?,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Checksum recorded in the text form, for manifests.
    pub fn checksum(&self) -> u64 {
        let text = self.to_text();
        let body_end = text.rfind("checksum = ").expect("written above");
        fnv1a64(&text.as_bytes()[..body_end])
    }
}
