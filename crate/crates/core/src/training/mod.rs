//! Losses, mix-up augmentation, Adam and the training loop.
//!
//! The total loss of a batch is the mean squared reconstruction error plus
//! `alpha` times the mean curvature penalty over the encoded batch and an
//! equal number of mix-up points. Gradients flow through the penalty into
//! both decoder and encoder parameters.

mod config;
mod run;

pub use config::{DatasetKind, DatasetSpec, ExperimentConfig, ModelShape, OutputSpec, Seeds, TrainingSpec, CONFIG_FORMAT_VERSION};
pub use run::{grid_search, load_datasets, train, train_on, EpochMetrics, GridResult, TrainedRun, METRICS_HEADER};

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::tape::gradient;
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::estimators::{eec_from_jet, eic_from_jet, iso_from_jet, Probes};
use crate::geometry::JetView;
use crate::models::{taylor, AutoencoderModel};
use crate::rng::Rng;

/// Alpha values searched by default.
pub const ALPHA_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0];

/// Default mix-up range parameter.
pub const MIXUP_ETA: f64 = 0.2;

/// Which regularizer accompanies the reconstruction error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "MICAE")]
    Micae,
    #[serde(rename = "MECAE")]
    Mecae,
    #[serde(rename = "ISO_BASELINE")]
    IsoBaseline,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ae => "AE",
            LossKind::Micae => "MICAE",
            LossKind::Mecae => "MECAE",
            LossKind::IsoBaseline => "ISO_BASELINE",
        }
    }

    /// Jet order the penalty needs.
    fn order(self) -> usize {
        match self {
            LossKind::Ae => 0,
            LossKind::Micae => 3,
            LossKind::Mecae => 2,
            LossKind::IsoBaseline => 1,
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AE" => Ok(LossKind::Ae),
            "MICAE" => Ok(LossKind::Micae),
            "MECAE" => Ok(LossKind::Mecae),
            "ISO_BASELINE" => Ok(LossKind::IsoBaseline),
            _ => Err(Error::InvalidSpec(format!("unknown loss kind `{s}`"))),
        }
    }
}

/// Latent points `delta z_a + (1 - delta) z_b` with their pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixup {
    pub points: Vec<Vec<f64>>,
    /// `(a, b, delta)` per output point.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Set when the batch was too small to mix and was returned unchanged.
    pub warning: bool,
}

/// One mix-up point per batch entry, each from a random pair of distinct
/// entries with `delta ~ U(-eta, 1 + eta)`.
pub fn mixup_augment(z: &[Vec<f64>], eta: f64, rng: &mut Rng) -> Result<Mixup> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidSpec(format!("mix-up eta must be nonnegative, got {eta}")));
    }
    let n = z.len();
    if n < 2 {
        return Ok(Mixup {
            points: z.to_vec(),
            pairs: (0..n).map(|i| (i, i, 1.0)).collect(),
            warning: true,
        });
    }
    let mut points = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let delta = if eta == 0.0 {
            rng.random_range(0.0..1.0)
        } else {
            rng.random_range(-eta..1.0 + eta)
        };
        points.push(z[a].iter().zip(&z[b]).map(|(x, y)| delta * x + (1.0 - delta) * y).collect());
        pairs.push((a, b, delta));
    }
    Ok(Mixup {
        points,
        pairs,
        warning: false,
    })
}

/// Value and gradient of a loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub reconstruction: f64,
    /// Mean penalty before multiplying by alpha.
    pub penalty: f64,
    /// Encoder then decoder parameters.
    pub grad: Vec<f64>,
    /// Regularizer points skipped because the metric was singular there.
    pub skipped: usize,
    /// Extrinsic samples clamped at zero.
    pub clamped: usize,
    pub mixup_warning: bool,
}

fn to_array(points: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(points.len() * dim);
    for p in points {
        crate::error::check_dim("point", dim, p.len())?;
        flat.extend_from_slice(p);
    }
    Ok(Array2::from_shape_vec((points.len(), dim), flat).expect("shape"))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Penalty of one point from its jet coefficients, with the gradient over
/// them. `Ok(None)` marks a point whose metric is singular.
fn penalty_head(kind: LossKind, latent: usize, ambient: usize, coeffs: &[f64], probes: Option<&Probes>) -> Result<Option<(f64, Vec<f64>, bool)>> {
    let order = kind.order();
    let mut err = None;
    let (val, grad) = gradient(coeffs, |c| {
        let view = match JetView::new(latent, ambient, order, c) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                return Var::constant(0.0);
            }
        };
        let r = match (kind, probes) {
            (LossKind::Micae, Some(p)) => eic_from_jet(&view, &p.v, &p.w),
            (LossKind::Mecae, Some(p)) => eec_from_jet(&view, &p.v, &p.w),
            (LossKind::IsoBaseline, _) => iso_from_jet(&view),
            _ => Ok(Var::constant(0.0)),
        };
        r.unwrap_or_else(|e| {
            err = Some(e);
            Var::constant(0.0)
        })
    });
    match err {
        Some(e) if e.is_numerical() => Ok(None),
        Some(e) => Err(e),
        None if !val.is_finite() => Ok(None),
        None if kind == LossKind::Mecae && val < 0.0 => Ok(Some((0.0, vec![0.0; coeffs.len()], true))),
        None => Ok(Some((val, grad, false))),
    }
}

/// Loss of `batch` and its gradient over all model parameters.
///
/// With `mixup = Some(eta)` the regularizer also runs on one mix-up point
/// per batch entry; with `None` only the encoded batch is used. Mix-up
/// pairs and estimator probes are drawn from `rng` in a fixed order, so a
/// cloned generator reproduces the same evaluation.
pub fn loss(
    model: &AutoencoderModel,
    batch: &[Vec<f64>],
    kind: LossKind,
    alpha: f64,
    mixup: Option<f64>,
    rng: &mut Rng,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(Error::InvalidSpec("batch must not be empty".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidSpec(format!("alpha must be nonnegative, got {alpha}")));
    }
    let b = batch.len();
    let (m, d) = (model.latent_dim(), model.ambient_dim());
    let x = to_array(batch, d)?;
    let (z, tape_e) = taylor::forward(&model.encoder, &model.phi, x.view(), 0)?;
    let (xh, tape_d) = taylor::forward(&model.decoder, &model.theta, z.view(), 0)?;
    let diff = &xh - &x;
    let reconstruction = diff.iter().map(|v| v * v).sum::<f64>() / b as f64;
    let xh_bar = diff * (2.0 / b as f64);

    let (g_theta_rec, mut z_bar) = taylor::backward(&model.decoder, &model.theta, &tape_d, &xh_bar);
    let mut g_theta = g_theta_rec;
    let mut penalty = 0.0;
    let (mut skipped, mut clamped, mut mixup_warning) = (0, 0, false);

    let active = kind != LossKind::Ae && alpha > 0.0 && !(kind == LossKind::Micae && m == 1);
    if active {
        let zs = rows(&z);
        let mix = match mixup {
            Some(eta) => {
                let mix = mixup_augment(&zs, eta, rng)?;
                mixup_warning = mix.warning;
                (!mix.warning).then_some(mix)
            }
            None => None,
        };
        let mut reg_points = zs;
        if let Some(mix) = &mix {
            reg_points.extend(mix.points.iter().cloned());
        }
        let n_reg = reg_points.len();
        let order = kind.order();
        let zr = to_array(&reg_points, m)?;
        let (jets, tape_r) = taylor::forward(&model.decoder, &model.theta, zr.view(), order)?;
        let k = tape_r.components();
        let mut jet_bar = Array2::<f64>::zeros(jets.raw_dim());
        let jet_flat = jets.as_slice().expect("contiguous");
        let mut total = 0.0;
        {
            let bar_flat = jet_bar.as_slice_mut().expect("contiguous");
            for r in 0..n_reg {
                let probes = match kind {
                    LossKind::Micae => Some(Probes::intrinsic(m, rng)),
                    LossKind::Mecae => Some(Probes::extrinsic(d, m, rng)),
                    _ => None,
                };
                let span = r * k * d..(r + 1) * k * d;
                match penalty_head(kind, m, d, &jet_flat[span.clone()], probes.as_ref())? {
                    None => skipped += 1,
                    Some((v, g, c)) => {
                        clamped += c as usize;
                        total += v;
                        bar_flat[span].copy_from_slice(&g);
                    }
                }
            }
        }
        let valid = n_reg - skipped;
        if valid > 0 {
            penalty = total / valid as f64;
            jet_bar *= alpha / valid as f64;
            let (g_theta_reg, zr_bar) = taylor::backward(&model.decoder, &model.theta, &tape_r, &jet_bar);
            g_theta.iter_mut().zip(&g_theta_reg).for_each(|(a, b)| *a += b);
            for i in 0..b {
                for c in 0..m {
                    z_bar[[i, c]] += zr_bar[[i, c]];
                }
            }
            if let Some(mix) = &mix {
                for (j, &(a, bb, delta)) in mix.pairs.iter().enumerate() {
                    for c in 0..m {
                        let g = zr_bar[[b + j, c]];
                        z_bar[[a, c]] += delta * g;
                        z_bar[[bb, c]] += (1.0 - delta) * g;
                    }
                }
            }
        }
    }

    let (g_phi, _) = taylor::backward(&model.encoder, &model.phi, &tape_e, &z_bar);
    let mut grad = g_phi;
    grad.extend_from_slice(&g_theta);
    Ok(LossOutput {
        loss: reconstruction + alpha * penalty,
        reconstruction,
        penalty,
        grad,
        skipped,
        clamped,
        mixup_warning,
    })
}

/// Mean squared reconstruction error `mean ||f(g(x)) - target||^2`.
pub fn reconstruction_error(model: &AutoencoderModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    crate::error::check_dim("reconstruction targets", inputs.len(), targets.len())?;
    if inputs.is_empty() {
        return Err(Error::InvalidSpec("no points to reconstruct".into()));
    }
    let d = model.ambient_dim();
    let x = to_array(inputs, d)?;
    let t = to_array(targets, d)?;
    let (z, _) = taylor::forward(&model.encoder, &model.phi, x.view(), 0)?;
    let (xh, _) = taylor::forward(&model.decoder, &model.theta, z.view(), 0)?;
    let diff = xh - t;
    Ok(diff.iter().map(|v| v * v).sum::<f64>() / inputs.len() as f64)
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates and counters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub rejected: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            rejected: 0,
            config: AdamConfig::default(),
        }
    }
}

/// One bias-corrected Adam update. A gradient with any non-finite entry is
/// rejected: parameters and moments stay as they are, `rejected` increases
/// and `Ok(false)` is returned.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) -> Result<bool> {
    crate::error::check_dim("gradient", params.len(), grad.len())?;
    crate::error::check_dim("optimizer state", params.len(), state.m.len())?;
    if grad.iter().any(|g| !g.is_finite()) {
        state.rejected += 1;
        return Ok(false);
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
    Ok(true)
}
