//! The committed toy checkpoint and the recipe that produced it.

use serde::{Deserialize, Serialize};

use crate::checkpoint::checkpoint_from_bytes;
use crate::error::{Error, Result};
use crate::model::{
    default_layer_sizes, train_predictor, NoisePredictor, Preconditioner, TrainConfig, DEFAULT_TIME_EMBED_DIM,
};
use crate::schedule::NoiseSchedule;
use crate::synth::{generate_sprite_dataset, SpriteConfig};

/// Bytes of `assets/toy.bdkt`, produced by [`train_toy`] with
/// [`ToyRecipe::default`].
pub static TOY_CHECKPOINT: &[u8] = include_bytes!("../assets/toy.bdkt");

/// Seed of the sprites used for evaluation; disjoint from training.
pub const EVAL_DATA_SEED: u64 = 77;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRecipe {
    pub data: SpriteConfig,
    pub n_images: usize,
    /// Stochasticity of `p_s`; 1 is DDPM-like.
    pub eta: f64,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for ToyRecipe {
    fn default() -> Self {
        Self {
            data: SpriteConfig::default(),
            n_images: 4000,
            eta: 1.0,
            init_seed: 0,
            train: TrainConfig { epochs: 300, seed: 1, ..TrainConfig::default() },
        }
    }
}

/// Mean squared pixel, the preconditioner's data scale.
pub fn second_moment(images: &[Vec<f64>]) -> Result<f64> {
    let n: usize = images.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::invalid("no pixels"));
    }
    Ok(images.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64)
}

/// Train from scratch on the desk schedule. Returns the model (parameters
/// quantized to f32), its schedule and the per-epoch loss.
pub fn train_toy(recipe: &ToyRecipe) -> Result<(NoisePredictor, NoiseSchedule, Vec<f64>)> {
    let ds = generate_sprite_dataset(&recipe.data, recipe.n_images)?;
    train_on(&ds.images, recipe.eta, recipe.init_seed, &recipe.train)
}

/// [`train_toy`] on caller-supplied images.
pub fn train_on(
    images: &[Vec<f64>],
    eta: f64,
    init_seed: u64,
    config: &TrainConfig,
) -> Result<(NoisePredictor, NoiseSchedule, Vec<f64>)> {
    let d = images.first().map(Vec::len).ok_or_else(|| Error::invalid("training set is empty"))?;
    let schedule = NoiseSchedule::desk(1.0).with_eta(eta)?;
    let precond = Preconditioner::new(&schedule, second_moment(images)?)?;
    let init = NoisePredictor::new(default_layer_sizes(d), DEFAULT_TIME_EMBED_DIM, init_seed)?
        .with_preconditioner(Some(precond));
    let (model, curve) = train_predictor(&init, images, &schedule, config)?;
    Ok((model, schedule, curve))
}

/// The committed checkpoint.
pub fn load_toy() -> Result<(NoisePredictor, NoiseSchedule)> {
    checkpoint_from_bytes(TOY_CHECKPOINT)
}

/// Sprites for evaluation, drawn with [`EVAL_DATA_SEED`] unless `seed` is
/// given.
pub fn eval_config(seed: Option<u64>) -> SpriteConfig {
    SpriteConfig { seed: seed.unwrap_or(EVAL_DATA_SEED), ..ToyRecipe::default().data }
}
