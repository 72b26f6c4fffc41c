use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bdk_core::boundary::Boundary;
use bdk_core::checkpoint::{checkpoint_from_bytes, stored_checksum};
use bdk_core::model::NoisePredictor;
use bdk_core::schedule::NoiseSchedule;
use bdk_core::synth::{generate_sprite_dataset, SpriteDataset};
use bdk_core::toy::{eval_config, TOY_CHECKPOINT};

use crate::manifest::{manifest_file_name, RunManifest, GIT_DESCRIBE};
use crate::{Cli, CliError, CliResult, OUT_DIR_ENV};

/// Output directory plus everything the manifest needs to know.
pub struct Context {
    pub out: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl Context {
    pub fn new(cli: &Cli, argv: &[OsString]) -> CliResult<Self> {
        let out = cli
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("bdk-out"));
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            out,
            manifest: RunManifest {
                command: cli.command.name().to_string(),
                argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
                flags: serde_json::to_value(&cli.command)?,
                seeds: BTreeMap::new(),
                checkpoint: None,
                boundaries: BTreeMap::new(),
                git_describe: GIT_DESCRIBE.to_string(),
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                wall_time_s: 0.0,
                outputs: Vec::new(),
                exit_code: 0,
                error: None,
            },
            started: Instant::now(),
        })
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.to_string(), value);
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Write `bytes` to `name` under the output directory and record it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.record(name);
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(name, text.as_bytes())
    }

    /// Note a file written by other means.
    pub fn record(&mut self, name: &str) {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
    }

    pub fn load_checkpoint(&mut self, path: Option<&Path>) -> CliResult<(NoisePredictor, NoiseSchedule)> {
        let (label, bytes) = match path {
            Some(p) => (p.display().to_string(), read(p)?),
            None => ("builtin:toy".to_string(), TOY_CHECKPOINT.to_vec()),
        };
        let loaded = checkpoint_from_bytes(&bytes)?;
        let sum = stored_checksum(&bytes).unwrap_or_default();
        self.manifest.checkpoint = Some((label, format!("{sum:016x}")));
        Ok(loaded)
    }

    pub fn load_boundary(&mut self, path: &Path) -> CliResult<Boundary> {
        if !path.exists() {
            return Err(CliError::NotFound(format!("boundary file {}", path.display())));
        }
        let b = Boundary::load(path)?;
        self.manifest.boundaries.insert(path.display().to_string(), format!("{:016x}", b.checksum()));
        Ok(b)
    }

    /// Images from `--data`, else `n` evaluation sprites drawn from `seed`.
    pub fn images(&mut self, data: Option<&Path>, n: usize, seed: u64) -> CliResult<SpriteDataset> {
        match data {
            Some(p) => {
                if !p.exists() {
                    return Err(CliError::NotFound(format!("dataset {}", p.display())));
                }
                let ds = SpriteDataset::load(p)?;
                if ds.len() < n {
                    return Err(CliError::Validation(format!("{} holds {} images, need {n}", p.display(), ds.len())));
                }
                Ok(ds)
            }
            None => {
                self.seed("data", seed);
                Ok(generate_sprite_dataset(&eval_config(Some(seed)), n)?)
            }
        }
    }

    /// Write the manifest; returns its path.
    pub fn finish(mut self, exit_code: i32, error: Option<String>) -> CliResult<PathBuf> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        self.manifest.exit_code = exit_code;
        self.manifest.error = error;
        let name = manifest_file_name(&self.manifest.command);
        let path = self.path(&name);
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(path)
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::NotFound(format!("{}", path.display()))
        } else {
            CliError::Io(e)
        }
    })
}
