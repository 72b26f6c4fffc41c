//! Variance schedule and closed-form forward-diffusion arithmetic.
//!
//! Steps are indexed `1..=T`. Index `0` denotes clean data, with
//! `alpha_bar(0) = 1`. `alpha_bar` is always the cumulative product
//! `Π_{s≤t}(1 − β_s)`; some DDIM write-ups call this quantity `α_t`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Default total steps for desk-scale runs.
pub const DESK_STEPS: usize = 100;
/// Default β endpoints for desk-scale runs (see [`NoiseSchedule::desk`]).
pub const DESK_BETA_START: f64 = 1e-4;
pub const DESK_BETA_END: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    eta: f64,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear β schedule over `steps` steps.
    ///
    /// `eta` is the DDIM stochasticity used by stochastic samplers
    /// (`0` deterministic, `1` DDPM-level variance).
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64, eta: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!("need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("eta must lie in [0, 1], got {eta}")));
        }
        let beta: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            (0..steps).map(|i| beta_start + span * i as f64 / (steps - 1) as f64).collect()
        };
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self { beta_start, beta_end, eta, beta, alpha_bar })
    }

    /// The classic 1000-step schedule, β from 1e-4 to 0.02.
    pub fn ddpm_default(eta: f64) -> Self {
        Self::linear(1000, 1e-4, 0.02, eta).expect("valid constants")
    }

    /// The 100-step desk-scale schedule.
    ///
    /// β_end is raised to 0.2 so that `alpha_bar(T) ≈ 2e-5`; keeping 0.02
    /// over only 100 steps would leave `alpha_bar(T) ≈ 0.37`, far from pure
    /// noise.
    pub fn desk(eta: f64) -> Self {
        Self::linear(DESK_STEPS, DESK_BETA_START, DESK_BETA_END, eta).expect("valid constants")
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::linear(self.steps(), self.beta_start, self.beta_end, eta)
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// β at step `t` (`1..=T`).
    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "beta index {t} out of 1..={}", self.steps());
        self.beta[t - 1]
    }

    /// Cumulative ᾱ at step `t` (`0..=T`); `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(Error::StepOutOfRange { step: t, steps: self.steps() });
        }
        Ok(())
    }

    /// DDIM noise scale for a jump `t → t_prev` at stochasticity `eta`:
    /// `σ = η·√((1−ᾱ_prev)/(1−ᾱ_t))·√(1−ᾱ_t/ᾱ_prev)`.
    pub fn ddim_sigma(&self, t: usize, t_prev: usize, eta: f64) -> f64 {
        let a_t = self.alpha_bar(t);
        let a_prev = self.alpha_bar(t_prev);
        let ratio = ((1.0 - a_prev) / (1.0 - a_t)).max(0.0);
        eta * ratio.sqrt() * (1.0 - a_t / a_prev).max(0.0).sqrt()
    }

    /// Closed-form forward sample `√ᾱ_t·x0 + √(1−ᾱ_t)·noise`.
    pub fn q_sample(&self, x0: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>> {
        check_dim(x0.len(), noise.len())?;
        if t == 0 {
            return Err(Error::StepOutOfRange { step: t, steps: self.steps() });
        }
        self.check_step(t)?;
        let a = self.alpha_bar(t);
        Ok(q_sample_with(a, x0, noise))
    }
}

/// Forward sample for an explicit ᾱ, including the `ᾱ = 1` and `ᾱ = 0` limits.
pub fn q_sample_with(alpha_bar: f64, x0: &[f64], noise: &[f64]) -> Vec<f64> {
    let s = alpha_bar.sqrt();
    let n = (1.0 - alpha_bar).sqrt();
    x0.iter().zip(noise).map(|(x, e)| s * x + n * e).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Denoise,
    Invert,
}

/// Skip-step plan. `taus` is stored ascending from `0`; a denoising plan is
/// walked from its last entry down to `0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPlan {
    taus: Vec<usize>,
    direction: Direction,
}

impl StepPlan {
    /// Evenly spaced indices `0..=t_end` split into `n_steps` jumps.
    pub fn even(schedule: &NoiseSchedule, n_steps: usize, t_end: usize, direction: Direction) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be positive"));
        }
        schedule.check_step(t_end)?;
        if n_steps > t_end {
            return Err(Error::invalid(format!("n_steps ({n_steps}) exceeds t_end ({t_end})")));
        }
        let mut taus: Vec<usize> = (0..=n_steps).map(|i| (i * t_end + n_steps / 2) / n_steps).collect();
        taus.dedup();
        Ok(Self { taus, direction })
    }

    /// Plan from explicit indices; must start at 0 and be strictly increasing.
    pub fn from_taus(schedule: &NoiseSchedule, taus: Vec<usize>, direction: Direction) -> Result<Self> {
        if taus.len() < 2 || taus[0] != 0 {
            return Err(Error::invalid("plan needs at least two indices starting at 0"));
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("plan indices must be strictly increasing"));
        }
        schedule.check_step(*taus.last().unwrap())?;
        Ok(Self { taus, direction })
    }

    pub fn taus(&self) -> &[usize] {
        &self.taus
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Highest index in the plan.
    pub fn end(&self) -> usize {
        *self.taus.last().unwrap()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.taus.binary_search(&t).is_ok()
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        Self { taus: self.taus.clone(), direction }
    }

    /// Sub-plan keeping only indices `<= t`, which must be part of the plan.
    pub fn truncate_at(&self, t: usize) -> Result<Self> {
        if !self.contains(t) || t == 0 {
            return Err(Error::invalid(format!("step {t} is not a positive plan index")));
        }
        Ok(Self { taus: self.taus.iter().copied().filter(|&s| s <= t).collect(), direction: self.direction })
    }

    /// Pairs `(from, to)` in walk order.
    pub fn transitions(&self) -> Vec<(usize, usize)> {
        match self.direction {
            Direction::Invert => self.taus.windows(2).map(|w| (w[0], w[1])).collect(),
            Direction::Denoise => self.taus.windows(2).rev().map(|w| (w[1], w[0])).collect(),
        }
    }
}
