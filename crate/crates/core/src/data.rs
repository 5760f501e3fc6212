//! Synthetic manifold datasets, Gaussian corruption and CSV storage.
//!
//! A dataset file starts with a `#` provenance line, then a column header
//! `x0,x1,..`, then one row per point. The provenance line is
//! `curvreg-data v1` followed by space-separated `key=value` tokens, for
//! example `curvreg-data v1 kind=paraboloid n=200 noise=0.2 seed=1`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

/// What a dataset is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
    Test,
}

/// Points in `R^D`, with the clean points they were corrupted from when
/// noise has been added.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub role: Role,
    pub clean: Option<Vec<Vec<f64>>>,
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Clean counterpart, or the points themselves for noiseless data.
    pub fn clean_points(&self) -> &[Vec<f64>] {
        self.clean.as_deref().unwrap_or(&self.points)
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }
}

const PROVENANCE_PREFIX: &str = "curvreg-data v1";

fn provenance(tokens: &[(&str, String)]) -> String {
    let mut s = PROVENANCE_PREFIX.to_string();
    for (k, v) in tokens {
        let _ = write!(s, " {k}={v}");
    }
    s
}

fn add_noise(points: &[Vec<f64>], sigma: f64, rng: &mut rng::Rng) -> Result<Vec<Vec<f64>>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidSpec(format!("noise level must be a nonnegative number, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(points.to_vec());
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    Ok(points
        .iter()
        .map(|p| p.iter().map(|x| x + normal.sample(rng)).collect())
        .collect())
}

fn noisy(clean: Vec<Vec<f64>>, sigma: f64, seed: u64, prov: String) -> Result<Dataset> {
    let points = add_noise(&clean, sigma, &mut rng::stream(seed, 1))?;
    Ok(Dataset {
        points,
        role: Role::Train,
        clean: (sigma > 0.0).then_some(clean),
        provenance: prov,
    })
}

/// `n` points `(x, y, x^2 + y^2)` with `x, y ~ U(-1, 1)` plus `N(0, sigma^2 I_3)`
/// noise.
pub fn gen_paraboloid(n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidSpec("dataset size must be positive".into()));
    }
    let mut r = rng::stream(seed, 0);
    let clean: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let x: f64 = r.random_range(-1.0..1.0);
            let y: f64 = r.random_range(-1.0..1.0);
            vec![x, y, x * x + y * y]
        })
        .collect();
    let prov = provenance(&[
        ("kind", "paraboloid".into()),
        ("n", n.to_string()),
        ("noise", sigma.to_string()),
        ("seed", seed.to_string()),
        ("domain", "(-1,1)^2".into()),
    ]);
    noisy(clean, sigma, seed, prov)
}

/// Noiseless `k x k` grid on the paraboloid at the cell centres of
/// `(-1, 1)^2`, row-major in `x` then `y`.
pub fn paraboloid_testgrid(k: usize) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::InvalidSpec(format!("grid size must be at least 2, got {k}")));
    }
    let c = |i: usize| -1.0 + (2 * i + 1) as f64 / k as f64;
    let points = (0..k)
        .flat_map(|i| (0..k).map(move |j| (c(i), c(j))))
        .map(|(x, y)| vec![x, y, x * x + y * y])
        .collect();
    Ok(Dataset {
        points,
        role: Role::Test,
        clean: None,
        provenance: provenance(&[("kind", "paraboloid-grid".into()), ("k", k.to_string())]),
    })
}

/// Default sampling interval of the sin-curve.
pub const SINCURVE_INTERVAL: (f64, f64) = (-PI, PI);

/// `n` points `(t, sin t)` with `t ~ U(-pi, pi)` plus noise.
pub fn gen_sincurve(n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    gen_sincurve_on(n, sigma, seed, SINCURVE_INTERVAL)
}

/// Sin-curve sampled on a custom interval.
pub fn gen_sincurve_on(n: usize, sigma: f64, seed: u64, interval: (f64, f64)) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidSpec("dataset size must be positive".into()));
    }
    if !(interval.0 < interval.1) {
        return Err(Error::InvalidSpec(format!("empty interval {interval:?}")));
    }
    let mut r = rng::stream(seed, 0);
    let clean: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let t: f64 = r.random_range(interval.0..interval.1);
            vec![t, t.sin()]
        })
        .collect();
    let prov = provenance(&[
        ("kind", "sincurve".into()),
        ("n", n.to_string()),
        ("noise", sigma.to_string()),
        ("seed", seed.to_string()),
        ("interval", format!("({},{})", interval.0, interval.1)),
    ]);
    noisy(clean, sigma, seed, prov)
}

/// `k` evenly spaced noiseless sin-curve points at cell centres of the
/// default interval.
pub fn sincurve_testgrid(k: usize) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::InvalidSpec(format!("grid size must be at least 2, got {k}")));
    }
    let (a, b) = SINCURVE_INTERVAL;
    let points = (0..k)
        .map(|i| {
            let t = a + (b - a) * (i as f64 + 0.5) / k as f64;
            vec![t, t.sin()]
        })
        .collect();
    Ok(Dataset {
        points,
        role: Role::Test,
        clean: None,
        provenance: provenance(&[("kind", "sincurve-grid".into()), ("k", k.to_string())]),
    })
}

/// Add i.i.d. `N(0, sigma^2)` noise, keeping the input as clean counterpart.
pub fn corrupt(data: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    let clean = data.clean_points().to_vec();
    let points = add_noise(&data.points, sigma, &mut rng::stream(seed, 1))?;
    Ok(Dataset {
        points,
        role: data.role,
        clean: Some(clean),
        provenance: format!("{} corrupt={sigma} corrupt_seed={seed}", data.provenance),
    })
}

/// Write the dataset points as CSV.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_csv_string(data)).map_err(|e| Error::io(path, e))
}

pub fn to_csv_string(data: &Dataset) -> String {
    let mut s = format!("# {}\n", data.provenance);
    let header: Vec<String> = (0..data.dim()).map(|i| format!("x{i}")).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for p in &data.points {
        let row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Read a dataset file. With `dims` set, every row must have exactly that
/// many values.
pub fn read_csv(path: &Path, dims: Option<usize>, role: Role) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::DatasetMissing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let provenance = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_len = reader
        .headers()
        .map_err(|e| Error::CsvFormat {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?
        .len();
    let want = dims.unwrap_or(header_len);
    if want == 0 {
        return Err(Error::CsvFormat {
            path: path.to_path_buf(),
            msg: "no columns".into(),
        });
    }
    let mut points = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::CsvRow {
            path: path.to_path_buf(),
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != want {
            return Err(Error::CsvRow {
                path: path.to_path_buf(),
                row,
                msg: format!("expected {want} values, found {}", rec.len()),
            });
        }
        let p = rec
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(Error::CsvRow {
                    path: path.to_path_buf(),
                    row,
                    msg: format!("`{f}` is not a finite number"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(p);
    }
    Ok(Dataset {
        points,
        role,
        clean: None,
        provenance,
    })
}

/// Read rows of `dims` values, shuffle them with `seed` and split into
/// training, validation and test sets of the requested sizes.
pub fn ingest_csv(path: &Path, dims: usize, split: (usize, usize, usize), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let all = read_csv(path, Some(dims), Role::Train)?;
    let needed = split.0 + split.1 + split.2;
    if needed > all.len() {
        return Err(Error::InsufficientRows {
            needed,
            found: all.len(),
        });
    }
    let mut idx: Vec<usize> = (0..all.len()).collect();
    idx.shuffle(&mut rng::stream(seed, 0));
    let part = |range: std::ops::Range<usize>, role: Role, name: &str| Dataset {
        points: idx[range].iter().map(|&i| all.points[i].clone()).collect(),
        role,
        clean: None,
        provenance: format!("{} split={name} shuffle_seed={seed}", all.provenance),
    };
    Ok((
        part(0..split.0, Role::Train, "train"),
        part(split.0..split.0 + split.1, Role::Validation, "validation"),
        part(split.0 + split.1..needed, Role::Test, "test"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_paraboloid_is_on_manifold() {
        let d = gen_paraboloid(50, 0.0, 3).unwrap();
        assert!(d.clean.is_none());
        for p in &d.points {
            assert_eq!(p[2], p[0] * p[0] + p[1] * p[1]);
            assert!(p[0].abs() < 1.0 && p[1].abs() < 1.0);
        }
    }

    #[test]
    fn grid_shape() {
        let g = paraboloid_testgrid(100).unwrap();
        assert_eq!(g.len(), 10_000);
        assert_eq!(g.dim(), 3);
        assert_eq!(g.clean_points(), &g.points[..]);
    }

    #[test]
    fn sincurve_points() {
        let d = gen_sincurve(20, 0.0, 1).unwrap();
        for p in &d.points {
            assert_eq!(p[1], p[0].sin());
            assert!(p[0].abs() < PI);
        }
        assert_eq!(gen_sincurve(20, 0.1, 1).unwrap(), gen_sincurve(20, 0.1, 1).unwrap());
        assert_ne!(gen_sincurve(20, 0.1, 1).unwrap().points, gen_sincurve(20, 0.1, 2).unwrap().points);
    }

    #[test]
    fn zero_corruption_is_identity() {
        let d = gen_paraboloid(10, 0.0, 1).unwrap();
        let c = corrupt(&d, 0.0, 5).unwrap();
        assert_eq!(c.points, d.points);
        assert_eq!(c.clean.as_deref(), Some(&d.points[..]));
    }
}
