//! Evaluation, curvature scans and diagnostic suites behind the `curvreg`
//! command line.
//!
//! Every output that depends only on inputs and seeds is written separately
//! from wall-clock timings, so reruns reproduce it byte for byte.

pub mod checks;
pub mod cli;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::autodiff::DiffProgram;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{eec_mean_from_jet, eic_mean_from_jet};
use crate::geometry::{LocalGeometry, LocalJet};
use crate::models::AutoencoderModel;
use crate::rng;

pub use checks::{estimator_suite, invariance_suite, render_table, CheckRow};

/// Values at or below this are reported as zero: their log column is left
/// empty and the zero flag is set.
pub const ZERO_FLOOR: f64 = 1e-20;

/// How curvature is computed in a scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ScanMode {
    Exact,
    Estimated,
}

impl ScanMode {
    pub fn name(self) -> &'static str {
        match self {
            ScanMode::Exact => "exact",
            ScanMode::Estimated => "estimated",
        }
    }
}

/// Curvature at one latent point. Singular points carry `NaN` values.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub latent: Vec<f64>,
    pub intrinsic: f64,
    pub extrinsic: f64,
    /// Standard errors, estimated mode only.
    pub intrinsic_se: Option<f64>,
    pub extrinsic_se: Option<f64>,
    /// Extrinsic samples clamped at zero, estimated mode only.
    pub clamped: usize,
    pub singular: bool,
}

impl ScanRow {
    fn singular(latent: &[f64]) -> Self {
        ScanRow {
            latent: latent.to_vec(),
            intrinsic: f64::NAN,
            extrinsic: f64::NAN,
            intrinsic_se: None,
            extrinsic_se: None,
            clamped: 0,
            singular: true,
        }
    }
}

/// Curvature from precomputed third-order jets. In estimated mode point `i`
/// draws intrinsic probes from stream `(seed, 2i)` and extrinsic probes
/// from stream `(seed, 2i + 1)`.
pub fn scan_jets(jets: Vec<LocalJet>, latent: &[Vec<f64>], mode: ScanMode, samples: usize, seed: u64) -> Result<Vec<ScanRow>> {
    crate::error::check_dim("latent points", jets.len(), latent.len())?;
    jets.into_iter()
        .zip(latent)
        .enumerate()
        .map(|(i, (jet, z))| {
            let row = match mode {
                ScanMode::Exact => LocalGeometry::from_jet(jet).and_then(|g| {
                    Ok(ScanRow {
                        latent: z.clone(),
                        intrinsic: g.intrinsic()?,
                        extrinsic: g.extrinsic(),
                        intrinsic_se: None,
                        extrinsic_se: None,
                        clamped: 0,
                        singular: false,
                    })
                }),
                ScanMode::Estimated => {
                    let i = i as u64;
                    eic_mean_from_jet(&jet, samples, &mut rng::stream(seed, 2 * i)).and_then(|a| {
                        let b = eec_mean_from_jet(&jet, samples, &mut rng::stream(seed, 2 * i + 1))?;
                        Ok(ScanRow {
                            latent: z.clone(),
                            intrinsic: a.mean,
                            extrinsic: b.mean,
                            intrinsic_se: Some(a.standard_error),
                            extrinsic_se: Some(b.standard_error),
                            clamped: b.clamped,
                            singular: false,
                        })
                    })
                }
            };
            match row {
                Err(e) if e.is_numerical() => Ok(ScanRow::singular(z)),
                other => other,
            }
        })
        .collect()
}

/// Scan an arbitrary program at the given latent points.
pub fn scan_program<P: DiffProgram>(
    f: &P,
    theta: &[f64],
    latent: &[Vec<f64>],
    mode: ScanMode,
    samples: usize,
    seed: u64,
) -> Result<Vec<ScanRow>> {
    let jets = latent
        .iter()
        .map(|z| LocalJet::from_program(f, z, theta, 3))
        .collect::<Result<Vec<_>>>()?;
    scan_jets(jets, latent, mode, samples, seed)
}

/// Scan a model's decoder at the given latent points.
pub fn scan_decoder(model: &AutoencoderModel, latent: &[Vec<f64>], mode: ScanMode, samples: usize, seed: u64) -> Result<Vec<ScanRow>> {
    scan_jets(model.decoder_jets(latent, 3)?, latent, mode, samples, seed)
}

/// `value,log10_value,value_zero` cells, with an empty log cell for zeros
/// and empty cells for `NaN`.
fn log_cells(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str(",,,0");
    } else if v.abs() <= ZERO_FLOOR {
        let _ = write!(out, ",{v},,1");
    } else {
        let _ = write!(out, ",{v},{},0", v.log10());
    }
}

fn opt_cell(out: &mut String, v: Option<f64>) {
    match v {
        Some(v) => {
            let _ = write!(out, ",{v}");
        }
        None => out.push(','),
    }
}

/// Column header of a scan CSV for latent dimension `m`.
pub fn scan_header(m: usize, mode: ScanMode) -> String {
    let mut h = String::from("index");
    for i in 0..m {
        let _ = write!(h, ",z{i}");
    }
    h.push_str(",intrinsic,log10_intrinsic,intrinsic_zero,extrinsic,log10_extrinsic,extrinsic_zero");
    if mode == ScanMode::Estimated {
        h.push_str(",intrinsic_se,extrinsic_se,extrinsic_clamped");
    }
    h.push_str(",singular");
    h
}

/// Render a scan as CSV: a `#` line with `meta`, the header, one row per
/// point.
pub fn scan_csv(rows: &[ScanRow], m: usize, mode: ScanMode, meta: &str) -> String {
    let mut out = format!("# {meta}\n{}\n", scan_header(m, mode));
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(out, "{i}");
        for x in &r.latent {
            let _ = write!(out, ",{x}");
        }
        log_cells(&mut out, r.intrinsic);
        log_cells(&mut out, r.extrinsic);
        if mode == ScanMode::Estimated {
            opt_cell(&mut out, r.intrinsic_se);
            opt_cell(&mut out, r.extrinsic_se);
            let _ = write!(out, ",{}", r.clamped);
        }
        let _ = writeln!(out, ",{}", u8::from(r.singular));
    }
    out
}

/// Mean of the non-singular values of a scan column.
pub fn scan_mean(rows: &[ScanRow], column: impl Fn(&ScanRow) -> f64) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter(|r| !r.singular).map(column).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Per-point squared reconstruction errors `||f(g(x_i)) - t_i||^2`.
pub fn squared_errors(model: &AutoencoderModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    crate::error::check_dim("test targets", inputs.len(), targets.len())?;
    let out = model.reconstruct(inputs)?;
    Ok(out
        .iter()
        .zip(targets)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportEcho {
    pub model_sha256: String,
    pub encoder_widths: Vec<usize>,
    pub encoder_seed: u64,
    pub decoder_widths: Vec<usize>,
    pub decoder_seed: u64,
    pub clean_test: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrupt_test: Option<String>,
    pub test_points: usize,
    pub rng: String,
}

/// Test-set evaluation of a trained model. Per-point arrays follow the
/// order of the test set; curvature is exact, at the encoded clean points.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub clean2clean: f64,
    pub corrupt2clean: Option<f64>,
    pub clean_errors: Vec<f64>,
    pub corrupt_errors: Option<Vec<f64>>,
    pub curvature: Vec<ScanRow>,
    pub echo: ReportEcho,
    /// Wall time per phase in seconds, not part of the deterministic output.
    pub timings: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    clean2clean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    corrupt2clean: Option<f64>,
    mean_intrinsic: Option<f64>,
    mean_extrinsic: Option<f64>,
    singular_points: usize,
    echo: &'a ReportEcho,
}

/// Evaluate `model` on a clean test set and, optionally, its corrupted
/// counterpart (same row order).
pub fn evaluate(model: &AutoencoderModel, model_bytes: &[u8], clean: &Dataset, corrupt: Option<&Dataset>) -> Result<EvalReport> {
    if clean.is_empty() {
        return Err(Error::InvalidSpec("clean test set is empty".into()));
    }
    crate::error::check_dim("test set dimension", model.ambient_dim(), clean.dim())?;
    let mut timings = Vec::new();
    let t = Instant::now();
    let clean_errors = squared_errors(model, &clean.points, &clean.points)?;
    let corrupt_errors = match corrupt {
        Some(c) => {
            crate::error::check_dim("corrupted test rows", clean.len(), c.len())?;
            crate::error::check_dim("corrupted test dimension", model.ambient_dim(), c.dim())?;
            Some(squared_errors(model, &c.points, &clean.points)?)
        }
        None => None,
    };
    timings.push(("reconstruction".to_string(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let latent = model.encode(&clean.points)?;
    let curvature = scan_decoder(model, &latent, ScanMode::Exact, 0, 0)?;
    timings.push(("curvature".to_string(), t.elapsed().as_secs_f64()));
    let echo = ReportEcho {
        model_sha256: sha256_hex(model_bytes),
        encoder_widths: model.encoder.spec().widths.clone(),
        encoder_seed: model.encoder.spec().seed,
        decoder_widths: model.decoder.spec().widths.clone(),
        decoder_seed: model.decoder.spec().seed,
        clean_test: clean.provenance.clone(),
        corrupt_test: corrupt.map(|c| c.provenance.clone()),
        test_points: clean.len(),
        rng: rng::RNG_ALGORITHM.to_string(),
    };
    Ok(EvalReport {
        clean2clean: mean(&clean_errors),
        corrupt2clean: corrupt_errors.as_deref().map(mean),
        clean_errors,
        corrupt_errors,
        curvature,
        echo,
        timings,
    })
}

impl EvalReport {
    /// Deterministic summary as TOML.
    pub fn summary_toml(&self) -> String {
        let s = ReportSummary {
            clean2clean: self.clean2clean,
            corrupt2clean: self.corrupt2clean,
            mean_intrinsic: scan_mean(&self.curvature, |r| r.intrinsic),
            mean_extrinsic: scan_mean(&self.curvature, |r| r.extrinsic),
            singular_points: self.curvature.iter().filter(|r| r.singular).count(),
            echo: &self.echo,
        };
        toml::to_string(&s).expect("report serializes")
    }

    /// Per-point CSV: squared errors, exact curvature and their log10
    /// columns with zero flags.
    pub fn points_csv(&self) -> String {
        let mut out = String::from("index,clean_sq_error,log10_clean_sq_error,clean_sq_error_zero");
        if self.corrupt_errors.is_some() {
            out.push_str(",corrupt_sq_error,log10_corrupt_sq_error,corrupt_sq_error_zero");
        }
        out.push_str(",intrinsic,log10_intrinsic,intrinsic_zero,extrinsic,log10_extrinsic,extrinsic_zero,singular\n");
        for (i, c) in self.curvature.iter().enumerate() {
            let _ = write!(out, "{i}");
            log_cells(&mut out, self.clean_errors[i]);
            if let Some(e) = &self.corrupt_errors {
                log_cells(&mut out, e[i]);
            }
            log_cells(&mut out, c.intrinsic);
            log_cells(&mut out, c.extrinsic);
            let _ = writeln!(out, ",{}", u8::from(c.singular));
        }
        out
    }

    pub fn timings_toml(&self) -> String {
        let mut s = String::new();
        for (name, secs) in &self.timings {
            let _ = writeln!(s, "{name} = {secs:.6}");
        }
        s
    }

    /// Write `report.toml`, `points.csv` and `timings.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("report.toml", self.summary_toml()),
            ("points.csv", self.points_csv()),
            ("timings.toml", self.timings_toml()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::DenseMatrix;
    use crate::programs::{Cylinder, LinearMap};

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![-0.5 + i as f64 / n as f64, 0.3 - 0.1 * i as f64]).collect()
    }

    #[test]
    fn linear_decoder_scans_to_flagged_zeros() {
        let f = LinearMap::new(DenseMatrix::from_vec(3, 2, vec![1.0, 0.5, 0.0, 1.0, 2.0, -1.0]));
        let rows = scan_program(&f, &[], &grid(4), ScanMode::Exact, 0, 1).unwrap();
        let csv = scan_csv(&rows, 2, ScanMode::Exact, "test");
        for line in csv.lines().skip(2) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(&cells[3..9], &["0", "", "1", "0", "", "1"], "{line}");
        }
    }

    #[test]
    fn cylinder_scan_values() {
        let f = Cylinder { radius: 1.0 };
        let rows = scan_program(&f, &[], &grid(3), ScanMode::Exact, 0, 1).unwrap();
        for r in &rows {
            assert!(r.intrinsic <= ZERO_FLOOR);
            assert!((r.extrinsic - 1.0).abs() < 1e-6, "{}", r.extrinsic);
        }
        let est = scan_program(&f, &[], &grid(3), ScanMode::Estimated, 10_000, 5).unwrap();
        for (e, x) in est.iter().zip(&rows) {
            let se = e.extrinsic_se.unwrap();
            assert!((e.extrinsic - x.extrinsic).abs() <= 3.0 * se, "{} vs {} (se {se})", e.extrinsic, x.extrinsic);
            assert!(e.intrinsic.abs() <= 1e-10);
        }
        assert_eq!(est, scan_program(&f, &[], &grid(3), ScanMode::Estimated, 10_000, 5).unwrap());
    }

    #[test]
    fn singular_points_are_flagged() {
        let f = LinearMap::new(DenseMatrix::from_vec(3, 2, vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0]));
        let rows = scan_program(&f, &[], &grid(2), ScanMode::Exact, 0, 1).unwrap();
        assert!(rows.iter().all(|r| r.singular));
        let csv = scan_csv(&rows, 2, ScanMode::Exact, "test");
        assert!(csv.lines().nth(2).unwrap().ends_with(",1"));
    }
}
