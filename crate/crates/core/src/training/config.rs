use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LossKind, MIXUP_ETA};
use crate::error::{Error, Result};
use crate::models::MlpSpec;

/// Current experiment file format version.
pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// A full experiment description, stored as TOML.
///
/// ```toml
/// format_version = 1
///
/// [dataset]
/// kind = "paraboloid"   # paraboloid | sincurve | csv
/// n = 200
/// noise = 0.2
///
/// [model]
/// latent = 2
///
/// [training]
/// loss = "MICAE"        # AE | MICAE | MECAE | ISO_BASELINE
/// alpha = 0.01
///
/// [seeds]
/// init = 1
///
/// [output]
/// dir = "runs/micae"
/// ```
///
/// Omitted fields take the defaults of [`DatasetSpec`], [`ModelShape`],
/// [`TrainingSpec`] and [`Seeds`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelShape,
    pub training: TrainingSpec,
    #[serde(default)]
    pub seeds: Seeds,
    pub output: OutputSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Paraboloid,
    Sincurve,
    Csv,
}

/// Training data source. Synthetic kinds draw `n` noisy training points, a
/// clean validation set of `validation` points, and a clean test grid of
/// `test_grid` points per axis. The CSV kind splits the file by `split`
/// and corrupts only the training rows with `noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "defaults::validation")]
    pub validation: usize,
    #[serde(default = "defaults::test_grid")]
    pub test_grid: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<[usize; 3]>,
}

/// Encoder `D -> hidden^layers -> latent`, decoder mirrored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    #[serde(default = "defaults::latent")]
    pub latent: usize,
    #[serde(default = "defaults::hidden")]
    pub hidden: usize,
    #[serde(default = "defaults::hidden_layers")]
    pub hidden_layers: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            latent: defaults::latent(),
            hidden: defaults::hidden(),
            hidden_layers: defaults::hidden_layers(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    pub loss: LossKind,
    #[serde(default)]
    pub alpha: f64,
    /// When present, `train` runs one model per value and keeps the one
    /// with the lowest validation error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::mixup_eta")]
    pub mixup_eta: f64,
    /// Evaluate the regularizer at mix-up points too. Defaults to on for
    /// synthetic datasets and off for CSV data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixup: Option<bool>,
    /// Rescale each batch gradient to at most this Euclidean norm before
    /// the optimizer step. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

/// Seeds for network initialization, data generation and the estimator
/// and shuffling streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "defaults::seed")]
    pub init: u64,
    #[serde(default = "defaults::seed")]
    pub data: u64,
    #[serde(default = "defaults::seed")]
    pub estimator: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            init: 1,
            data: 1,
            estimator: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

mod defaults {
    pub fn n() -> usize {
        200
    }
    pub fn validation() -> usize {
        100
    }
    pub fn test_grid() -> usize {
        100
    }
    pub fn latent() -> usize {
        2
    }
    pub fn hidden() -> usize {
        64
    }
    pub fn hidden_layers() -> usize {
        2
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn epochs() -> usize {
        2000
    }
    pub fn batch_size() -> usize {
        100
    }
    pub fn mixup_eta() -> f64 {
        super::MIXUP_ETA
    }
    pub fn seed() -> u64 {
        1
    }
}

/// Offset separating derived seeds (decoder init, validation data) from
/// the user-facing ones.
pub(crate) const DERIVED_SEED_OFFSET: u64 = 1 << 32;

impl ExperimentConfig {
    /// Desk-scale defaults for a synthetic dataset.
    pub fn synthetic(kind: DatasetKind, noise: f64, loss: LossKind, alpha: f64, dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            format_version: CONFIG_FORMAT_VERSION,
            dataset: DatasetSpec {
                kind,
                n: defaults::n(),
                noise,
                validation: defaults::validation(),
                test_grid: defaults::test_grid(),
                path: None,
                dims: None,
                split: None,
            },
            model: ModelShape {
                latent: if kind == DatasetKind::Sincurve { 1 } else { 2 },
                ..ModelShape::default()
            },
            training: TrainingSpec {
                loss,
                alpha,
                alpha_grid: None,
                learning_rate: defaults::learning_rate(),
                epochs: defaults::epochs(),
                batch_size: defaults::batch_size(),
                mixup_eta: MIXUP_ETA,
                mixup: None,
                grad_clip: None,
            },
            seeds: Seeds::default(),
            output: OutputSpec { dir: dir.into() },
        }
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: format!("{origin}: {}", e.path()),
            msg: e.inner().to_string(),
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Ambient dimension implied by the dataset.
    pub fn ambient_dim(&self) -> Result<usize> {
        match self.dataset.kind {
            DatasetKind::Paraboloid => Ok(3),
            DatasetKind::Sincurve => Ok(2),
            DatasetKind::Csv => self.dataset.dims.ok_or_else(|| Error::Config {
                path: "dataset.dims".into(),
                msg: "required for csv datasets".into(),
            }),
        }
    }

    /// Mix-up range passed to the loss, if mix-up is enabled.
    pub fn mixup(&self) -> Option<f64> {
        let on = self.training.mixup.unwrap_or(self.dataset.kind != DatasetKind::Csv);
        on.then_some(self.training.mixup_eta)
    }

    pub fn encoder_spec(&self) -> Result<MlpSpec> {
        let d = self.ambient_dim()?;
        Ok(MlpSpec::uniform(d, self.model.hidden, self.model.hidden_layers, self.model.latent, self.seeds.init))
    }

    pub fn decoder_spec(&self) -> Result<MlpSpec> {
        let d = self.ambient_dim()?;
        Ok(MlpSpec::uniform(
            self.model.latent,
            self.model.hidden,
            self.model.hidden_layers,
            d,
            self.seeds.init.wrapping_add(DERIVED_SEED_OFFSET),
        ))
    }

    pub fn validate(&self, origin: &str) -> Result<()> {
        let fail = |field: &str, msg: String| {
            Err(Error::Config {
                path: format!("{origin}: {field}"),
                msg,
            })
        };
        if self.format_version != CONFIG_FORMAT_VERSION {
            return fail(
                "format_version",
                format!("unsupported version {} (expected {CONFIG_FORMAT_VERSION})", self.format_version),
            );
        }
        let d = &self.dataset;
        if d.n == 0 {
            return fail("dataset.n", "must be positive".into());
        }
        if !(d.noise >= 0.0 && d.noise.is_finite()) {
            return fail("dataset.noise", format!("must be a nonnegative number, got {}", d.noise));
        }
        if d.validation == 0 {
            return fail("dataset.validation", "must be positive".into());
        }
        if d.test_grid < 2 {
            return fail("dataset.test_grid", "must be at least 2".into());
        }
        if d.kind == DatasetKind::Csv {
            if d.path.is_none() {
                return fail("dataset.path", "required for csv datasets".into());
            }
            if d.dims.unwrap_or(0) == 0 {
                return fail("dataset.dims", "required and positive for csv datasets".into());
            }
            match d.split {
                Some([a, b, c]) if a > 0 && b > 0 && c > 0 => {}
                _ => return fail("dataset.split", "three positive sizes are required for csv datasets".into()),
            }
        }
        let m = &self.model;
        if m.latent == 0 || m.hidden == 0 || m.hidden_layers == 0 {
            return fail("model", "latent, hidden and hidden_layers must be positive".into());
        }
        let t = &self.training;
        if !(t.alpha >= 0.0 && t.alpha.is_finite()) {
            return fail("training.alpha", format!("must be nonnegative, got {}", t.alpha));
        }
        if let Some(g) = &t.alpha_grid {
            if g.is_empty() || g.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                return fail("training.alpha_grid", "must be a nonempty list of nonnegative numbers".into());
            }
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return fail("training.learning_rate", format!("must be positive, got {}", t.learning_rate));
        }
        if t.epochs == 0 {
            return fail("training.epochs", "must be positive".into());
        }
        if t.batch_size == 0 {
            return fail("training.batch_size", "must be positive".into());
        }
        if !(t.mixup_eta >= 0.0 && t.mixup_eta.is_finite()) {
            return fail("training.mixup_eta", format!("must be nonnegative, got {}", t.mixup_eta));
        }
        if let Some(c) = t.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return fail("training.grad_clip", format!("must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1
[dataset]
kind = "paraboloid"
noise = 0.2
[training]
loss = "MECAE"
alpha = 0.1
[output]
dir = "out"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL, "test").unwrap();
        assert_eq!(c.dataset.n, 200);
        assert_eq!(c.model.hidden, 64);
        assert_eq!(c.training.batch_size, 100);
        assert_eq!(c.training.mixup_eta, 0.2);
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string(), "echo").unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = MINIMAL.replace("alpha = 0.1", "alpha = \"big\"");
        match ExperimentConfig::from_toml_str(&bad, "cfg") {
            Err(Error::Config { path, .. }) => assert!(path.contains("training.alpha"), "{path}"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("noise = 0.2", "noise = -1.0");
        match ExperimentConfig::from_toml_str(&bad, "cfg") {
            Err(Error::Config { path, .. }) => assert!(path.contains("dataset.noise"), "{path}"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("[output]", "[output]\nextra = 1");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad, "cfg"), Err(Error::Config { .. })));
    }
}
