//! Python bindings: `import bdk`.
//!
//! Images and latents cross the boundary as lists of rows (any sequence of
//! float sequences, numpy arrays included) and come back as lists of lists.
//! Long computations release the interpreter lock.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyArithmeticError, PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;

use bdk_core::boundary::{self as bnd, Space, SvmConfig};
use bdk_core::editor::{self, EditMode, EditSpec, PipelineConfig, Zeta};
use bdk_core::markov_tv::{self, DiscreteChain, DiscreteDistribution};
use bdk_core::mixing::{self, CrossValidation, DetectionRule};
use bdk_core::model::NoisePredictor;
use bdk_core::schedule::{Direction, NoiseSchedule, StepPlan};
use bdk_core::synth::{self, Attribute, SpriteConfig};
use bdk_core::trajectory::{self as traj, Mode, RunOptions};
use bdk_core::{checkpoint, geometry, toy, ErrorFamily};

fn py_err(e: bdk_core::Error) -> PyErr {
    let msg = e.to_string();
    match e.family() {
        ErrorFamily::Io => PyIOError::new_err(msg),
        ErrorFamily::Validation => PyValueError::new_err(msg),
        ErrorFamily::Numeric => PyArithmeticError::new_err(msg),
        ErrorFamily::NotFound => PyFileNotFoundError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for bdk_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

type Rows = Vec<Vec<f64>>;
type ScanRow = (usize, f64, Option<f64>, f64);
/// `(name, value)` pairs, which arrive in Python as lists of tuples.
type Named<T> = Vec<(String, T)>;

fn rows(x: &Array2<f64>) -> Rows {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_mode(mode: &str, t_m: Option<usize>) -> PyResult<RunOptions> {
    match (mode, t_m) {
        ("stochastic", _) => Ok(RunOptions::new(Mode::Stochastic)),
        ("deterministic", _) => Ok(RunOptions::new(Mode::Deterministic)),
        ("mixed", Some(t)) => Ok(RunOptions::mixed(t)),
        ("mixed", None) => Err(PyValueError::new_err("mode 'mixed' needs t_m")),
        _ => Err(PyValueError::new_err(format!("unknown mode {mode:?}"))),
    }
}

fn parse_edit_mode(mode: &str) -> PyResult<EditMode> {
    match mode {
        "set_distance" => Ok(EditMode::SetDistance),
        "additive" => Ok(EditMode::Additive),
        _ => Err(PyValueError::new_err(format!("unknown edit mode {mode:?}"))),
    }
}

fn parse<T: std::str::FromStr<Err = bdk_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

/// Noise schedule: `T` steps of a linear β ramp plus the sampler's η.
#[pyclass(module = "bdk", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Schedule {
    inner: NoiseSchedule,
}

#[pymethods]
impl Schedule {
    #[new]
    #[pyo3(signature = (steps, beta_start, beta_end, eta = 1.0))]
    fn new(steps: usize, beta_start: f64, beta_end: f64, eta: f64) -> PyResult<Self> {
        Ok(Self { inner: NoiseSchedule::linear(steps, beta_start, beta_end, eta).py()? })
    }

    /// The desk schedule (T = 100) the toy model is trained on.
    #[staticmethod]
    #[pyo3(signature = (eta = 1.0))]
    fn desk(eta: f64) -> Self {
        Self { inner: NoiseSchedule::desk(eta) }
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta()
    }

    fn alpha_bar(&self, t: usize) -> PyResult<f64> {
        self.inner.check_step(t).py()?;
        Ok(self.inner.alpha_bar(t))
    }

    fn betas(&self) -> Vec<f64> {
        self.inner.betas().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Schedule(steps={}, beta_start={}, beta_end={}, eta={})",
            self.inner.steps(),
            self.inner.beta_start(),
            self.inner.beta_end(),
            self.inner.eta()
        )
    }
}

/// An attribute hyperplane in latent space at `t_m`.
#[pyclass(module = "bdk", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Boundary {
    inner: bnd::Boundary,
}

#[pymethods]
impl Boundary {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: bnd::Boundary::load(&path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).py()
    }

    #[getter]
    fn attribute(&self) -> &str {
        &self.inner.attribute
    }

    #[getter]
    fn space(&self) -> &'static str {
        self.inner.space.name()
    }

    #[getter]
    fn t_m(&self) -> usize {
        self.inner.t_m
    }

    #[getter]
    fn normal(&self) -> Vec<f64> {
        self.inner.normal.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    #[getter]
    fn test_accuracy(&self) -> f64 {
        self.inner.test_accuracy
    }

    #[getter]
    fn distance_spread(&self) -> f64 {
        self.inner.distance_spread
    }

    fn signed_distance(&self, x: Vec<f64>) -> PyResult<f64> {
        bnd::signed_distance(&self.inner, &x).py()
    }

    fn __repr__(&self) -> String {
        format!(
            "Boundary(attribute={:?}, space={:?}, t_m={}, test_accuracy={:.3})",
            self.inner.attribute,
            self.inner.space.name(),
            self.inner.t_m,
            self.inner.test_accuracy
        )
    }
}

/// A noise predictor together with the schedule it was trained on.
#[pyclass(module = "bdk", frozen)]
pub struct Model {
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
}

impl Model {
    fn plan_to(&self, steps: usize, t_end: usize, direction: Direction) -> PyResult<StepPlan> {
        StepPlan::even(&self.schedule, steps, t_end, direction).py()
    }
}

#[pymethods]
impl Model {
    /// The built-in toy checkpoint (16×16 sprites, T = 100).
    #[staticmethod]
    fn toy() -> PyResult<Self> {
        let (predictor, schedule) = toy::load_toy().py()?;
        Ok(Self { predictor, schedule })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (predictor, schedule) = checkpoint::load_checkpoint(&path).py()?;
        Ok(Self { predictor, schedule })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save_checkpoint(&self.predictor, &self.schedule, &path).py()
    }

    #[getter]
    fn schedule(&self) -> Schedule {
        Schedule { inner: self.schedule.clone() }
    }

    #[getter]
    fn data_dim(&self) -> usize {
        self.predictor.data_dim()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.predictor.param_count()
    }

    /// Predicted noise and bottleneck activation for a batch at step `t`.
    fn predict(&self, py: Python<'_>, xs: Vec<Vec<f64>>, t: usize) -> PyResult<(Rows, Rows)> {
        self.schedule.check_step(t).py()?;
        let x = traj::stack_rows(&xs).py()?;
        let p = py.detach(|| self.predictor.predict_batch(x.view(), &vec![t as f64; x.nrows()])).py()?;
        Ok((rows(&p.noise), rows(&p.h)))
    }

    /// Deterministic inversion of clean images to step `t` in `steps` steps
    /// (default `t`).
    #[pyo3(signature = (images, t, steps = None))]
    fn invert(&self, py: Python<'_>, images: Vec<Vec<f64>>, t: usize, steps: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
        let x0 = traj::stack_rows(&images).py()?;
        let out = py.detach(|| bnd::invert_to(&self.predictor, &self.schedule, &x0, t, steps.unwrap_or(t))).py()?;
        Ok(rows(&out))
    }

    /// Denoise `latents` from step `t` to 0.
    #[pyo3(signature = (latents, t, mode = "deterministic", t_m = None, steps = None, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn denoise(
        &self,
        py: Python<'_>,
        latents: Vec<Vec<f64>>,
        t: usize,
        mode: &str,
        t_m: Option<usize>,
        steps: Option<usize>,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let opts = parse_mode(mode, t_m)?;
        let x = traj::stack_rows(&latents).py()?;
        let plan = self.plan_to(steps.unwrap_or(t), t, Direction::Denoise)?;
        let run = py
            .detach(|| {
                let mut rngs = traj::sample_streams(seed, x.nrows());
                traj::denoise_batch(&self.predictor, &self.schedule, &x, &plan, &opts, &mut rngs, None, None)
            })
            .py()?;
        Ok(rows(run.final_state()))
    }

    /// Unconditional samples from `N(0, I)` at `T`.
    #[pyo3(signature = (n, mode = "stochastic", t_m = None, steps = None, seed = 0))]
    fn sample(
        &self,
        py: Python<'_>,
        n: usize,
        mode: &str,
        t_m: Option<usize>,
        steps: Option<usize>,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let t = self.schedule.steps();
        let starts = rows(&traj::sample_starts(seed, n, self.predictor.data_dim()));
        self.denoise(py, starts, t, mode, t_m, steps, seed)
    }

    /// Radius of sampled starts along one walk: `[(step, r, Δr, std_error)]`
    /// every `stride` steps, with Δr `None` at the first point.
    #[pyo3(signature = (n, mode = "stochastic", stride = 10, seed = 0))]
    fn radius_scan(&self, py: Python<'_>, n: usize, mode: &str, stride: usize, seed: u64) -> PyResult<Vec<ScanRow>> {
        let opts = parse_mode(mode, None)?;
        let t = self.schedule.steps();
        let plan = self.plan_to(t, t, Direction::Denoise)?;
        let starts = traj::sample_starts(seed, n, self.predictor.data_dim());
        let scan = py
            .detach(|| geometry::radius_scan(&self.predictor, &self.schedule, &starts, &plan, &opts, stride, seed))
            .py()?;
        Ok(scan.points.iter().map(|p| (p.step, p.r, p.delta_r, p.std_error)).collect())
    }

    /// Detected `t_m` on all four {sampled, inverted} × {stochastic,
    /// deterministic} walks: `(t_m, {"sampled/stochastic": t, ...})`.
    #[pyo3(signature = (images, stride = 10, seed = 0))]
    fn find_mixing(
        &self,
        py: Python<'_>,
        images: Vec<Vec<f64>>,
        stride: usize,
        seed: u64,
    ) -> PyResult<(Option<usize>, Named<Option<usize>>)> {
        let cfg = CrossValidation {
            n_samples: images.len(),
            stride,
            rule: DetectionRule::default(),
            steps: self.schedule.steps(),
            seed,
        };
        let rep = py.detach(|| mixing::cross_validate_mixing(&self.predictor, &self.schedule, &images, &cfg)).py()?;
        let combos = rep
            .combos
            .iter()
            .map(|c| (format!("{:?}/{:?}", c.source, c.mode).to_lowercase(), c.detection.t_m()))
            .collect();
        Ok((rep.t_m, combos))
    }

    /// Fit a boundary for `attribute` on latents of `images` at `t_m`.
    #[pyo3(signature = (images, labels, attribute, t_m, space = "epsilon", seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn fit_boundary(
        &self,
        py: Python<'_>,
        images: Vec<Vec<f64>>,
        labels: Vec<bool>,
        attribute: &str,
        t_m: usize,
        space: &str,
        seed: u64,
    ) -> PyResult<Boundary> {
        let space: Space = parse(space)?;
        let cfg = SvmConfig { seed, ..SvmConfig::default() };
        let inner = py
            .detach(|| {
                let data =
                    bnd::assemble_latent_dataset(&self.predictor, &self.schedule, &images, &labels, t_m, space, t_m)?;
                bnd::fit_boundary(&data, attribute, &cfg)
            })
            .py()?;
        Ok(Boundary { inner })
    }

    /// Invert to the boundary's `t_m`, set each latent's signed distance
    /// (or shift it, with `mode="additive"`) by `zeta`, then denoise with
    /// the mixed walk. `zeta` is one value or one per image.
    #[pyo3(signature = (images, boundary, zeta, mode = "set_distance", steps = None, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn edit(
        &self,
        py: Python<'_>,
        images: Vec<Vec<f64>>,
        boundary: &Boundary,
        zeta: Vec<f64>,
        mode: &str,
        steps: Option<usize>,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let t_m = boundary.inner.t_m;
        let zeta = match zeta.as_slice() {
            [z] => Zeta::Uniform(*z),
            _ => Zeta::PerSample(zeta),
        };
        let spec = EditSpec::single(boundary.inner.clone(), zeta, parse_edit_mode(mode)?);
        let steps = steps.unwrap_or(t_m);
        let cfg = PipelineConfig::new(t_m, steps, steps, seed);
        let x0 = traj::stack_rows(&images).py()?;
        let out = py
            .detach(|| editor::boundary_diffusion_conditional(&self.predictor, &self.schedule, &x0, &spec, &cfg))
            .py()?;
        Ok(rows(&out.images))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(data_dim={}, params={}, steps={})",
            self.predictor.data_dim(),
            self.predictor.param_count(),
            self.schedule.steps()
        )
    }
}

/// Labeled sprites: `(images, {attribute: labels})`. `seed=None` gives the
/// evaluation set the toy model is tested on.
#[pyfunction]
#[pyo3(signature = (n, seed = None))]
fn sprites(n: usize, seed: Option<u64>) -> PyResult<(Rows, Named<Vec<bool>>)> {
    let cfg: SpriteConfig = toy::eval_config(seed);
    let ds = synth::generate_sprite_dataset(&cfg, n).py()?;
    let labels = ds.config.attributes.iter().zip(ds.labels).map(|(a, l)| (a.name().to_string(), l)).collect();
    Ok((ds.images, labels))
}

/// Pixel-statistic verdict for a 16×16 grayscale sprite: `True`, `False`
/// or `None` when ambiguous.
#[pyfunction]
fn attribute_oracle(image: Vec<f64>, attribute: &str) -> PyResult<Option<bool>> {
    let attr: Attribute = parse(attribute)?;
    let geometry = toy::eval_config(None).geometry();
    Ok(synth::attribute_oracle(&image, geometry, attr).py()?.as_bool())
}

/// `(r, std_error)` with `r = sqrt(mean ‖x‖²)`.
#[pyfunction]
fn estimate_radius(samples: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let e = geometry::estimate_radius_rows(&samples).py()?;
    Ok((e.r, e.std_error))
}

/// Volume and surface area of the unit ball in `d` dimensions.
#[pyfunction]
fn unit_sphere_volume_area(d: usize) -> PyResult<(f64, f64)> {
    geometry::unit_sphere_volume_area(d).py()
}

/// Monte Carlo fraction of the unit hemisphere `x_1 ≥ 0` above `x_1 = c/√(d−1)`:
/// `(fraction, std_error)`.
#[pyfunction]
#[pyo3(signature = (d, c, n = 100_000, seed = 0))]
fn hemisphere_slab_fraction(d: usize, c: f64, n: usize, seed: u64) -> PyResult<(f64, f64)> {
    let e = geometry::hemisphere_slab_fraction(d, c, n, seed).py()?;
    Ok((e.fraction, e.std_error))
}

#[pyfunction]
fn tv_distance(mu: Vec<f64>, nu: Vec<f64>) -> PyResult<f64> {
    let mu = DiscreteDistribution::new(mu).py()?;
    let nu = DiscreteDistribution::new(nu).py()?;
    markov_tv::tv_distance(&mu, &nu).py()
}

/// First `t` with `max_x TV(P^t(x, ·), π) <= epsilon` from `start`, or
/// `None` within `budget` steps.
#[pyfunction]
#[pyo3(signature = (matrix, start, epsilon = 0.25, budget = 10_000))]
fn chain_mixing_time(matrix: Vec<Vec<f64>>, start: Vec<f64>, epsilon: f64, budget: usize) -> PyResult<Option<usize>> {
    let chain = DiscreteChain::new(matrix).py()?;
    let start = DiscreteDistribution::new(start).py()?;
    Ok(markov_tv::chain_mixing_time(&chain, &start, epsilon, budget).py()?.t_mix())
}

/// Register the module's classes and functions on `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Schedule>()?;
    m.add_class::<Model>()?;
    m.add_class::<Boundary>()?;
    m.add_function(wrap_pyfunction!(sprites, m)?)?;
    m.add_function(wrap_pyfunction!(attribute_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_radius, m)?)?;
    m.add_function(wrap_pyfunction!(unit_sphere_volume_area, m)?)?;
    m.add_function(wrap_pyfunction!(hemisphere_slab_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(chain_mixing_time, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
fn bdk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
