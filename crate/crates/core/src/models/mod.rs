//! Multilayer perceptrons and the encoder/decoder pair.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (`out x in`, row-major) followed by the offset vector. Hidden layers use
//! unit-slope ELU, the output layer is linear.

pub mod taylor;

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{DiffProgram, Scalar};
use crate::error::{Error, Result};
use crate::geometry::LocalJet;
use crate::rng;

/// Layer widths `(input, hidden.., output)` and the initialization seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl MlpSpec {
    /// `input -> hidden x layers -> output`.
    pub fn uniform(input: usize, hidden: usize, layers: usize, output: usize, seed: u64) -> Self {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, layers));
        widths.push(output);
        MlpSpec { widths, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::InvalidSpec(format!(
                "a network needs input, output and at least one hidden width, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidSpec(format!("widths must be positive, got {:?}", self.widths)));
        }
        Ok(())
    }
}

/// A fully connected ELU network as a differentiable program of its input
/// and flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    offsets: Vec<usize>,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut offsets = Vec::with_capacity(spec.widths.len());
        let mut off = 0;
        for w in spec.widths.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        offsets.push(off);
        Ok(Mlp { spec, offsets })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Number of affine maps.
    pub fn layers(&self) -> usize {
        self.spec.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        *self.offsets.last().expect("nonempty")
    }

    /// `(offset, fan_in, fan_out)` of affine map `l`.
    pub fn layer_layout(&self, l: usize) -> (usize, usize, usize) {
        (self.offsets[l], self.spec.widths[l], self.spec.widths[l + 1])
    }

    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero offsets,
    /// drawn from stream `(seed, 0)`.
    pub fn init_params(&self) -> Vec<f64> {
        let mut r = rng::stream(self.spec.seed, 0);
        let mut p = vec![0.0; self.param_count()];
        for l in 0..self.layers() {
            let (off, n_in, n_out) = self.layer_layout(l);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for x in &mut p[off..off + n_in * n_out] {
                *x = r.random_range(-bound..bound);
            }
        }
        p
    }

    /// Pointwise evaluation of every row; identical to calling
    /// [`DiffProgram::eval`] on each.
    pub fn eval_batch(&self, params: &[f64], points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        crate::error::check_dim("network parameters", self.param_count(), params.len())?;
        points
            .iter()
            .map(|x| {
                crate::error::check_dim("network input", self.input_dim(), x.len())?;
                Ok(self.eval(x, params))
            })
            .collect()
    }
}

impl DiffProgram for Mlp {
    fn input_dim(&self) -> usize {
        self.spec.widths[0]
    }
    fn output_dim(&self) -> usize {
        *self.spec.widths.last().expect("nonempty")
    }
    fn param_dim(&self) -> usize {
        self.param_count()
    }
    fn eval<S: Scalar>(&self, z: &[S], theta: &[S]) -> Vec<S> {
        let mut a: Vec<S> = z.to_vec();
        for l in 0..self.layers() {
            let (off, n_in, n_out) = self.layer_layout(l);
            let hidden = l + 1 < self.layers();
            a = (0..n_out)
                .map(|o| {
                    let row = &theta[off + o * n_in..off + (o + 1) * n_in];
                    let mut acc = theta[off + n_in * n_out + o];
                    for (&w, &x) in row.iter().zip(&a) {
                        acc += w * x;
                    }
                    if hidden {
                        acc.elu()
                    } else {
                        acc
                    }
                })
                .collect();
        }
        a
    }
}

/// Encoder `R^D -> R^m` and decoder `R^m -> R^D` with their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Current model file format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "curvreg-model";
const END_HEADER: &str = "end_header\n";

impl AutoencoderModel {
    /// Build both networks and initialize them from their spec seeds.
    pub fn new(encoder: MlpSpec, decoder: MlpSpec) -> Result<Self> {
        let encoder = Mlp::new(encoder)?;
        let decoder = Mlp::new(decoder)?;
        if encoder.output_dim() != decoder.input_dim() {
            return Err(Error::InvalidSpec(format!(
                "encoder output {} does not match decoder input {}",
                encoder.output_dim(),
                decoder.input_dim()
            )));
        }
        if encoder.input_dim() != decoder.output_dim() {
            return Err(Error::InvalidSpec(format!(
                "encoder input {} does not match decoder output {}",
                encoder.input_dim(),
                decoder.output_dim()
            )));
        }
        let phi = encoder.init_params();
        let theta = decoder.init_params();
        Ok(AutoencoderModel {
            encoder,
            decoder,
            phi,
            theta,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn encode(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.encoder.eval_batch(&self.phi, x)
    }

    pub fn decode(&self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.decoder.eval_batch(&self.theta, z)
    }

    pub fn reconstruct(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.decode(&self.encode(x)?)
    }

    /// Decoder jets of the given order at each latent point.
    pub fn decoder_jets(&self, z: &[Vec<f64>], order: usize) -> Result<Vec<LocalJet>> {
        let m = self.latent_dim();
        let mut flat = Vec::with_capacity(z.len() * m);
        for p in z {
            crate::error::check_dim("latent point", m, p.len())?;
            flat.extend_from_slice(p);
        }
        let pts = ndarray::Array2::from_shape_vec((z.len(), m), flat).expect("shape");
        let (out, _) = taylor::forward(&self.decoder, &self.theta, pts.view(), order)?;
        taylor::to_local_jets(&out, m, order)
    }

    /// Encoder then decoder parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.phi.clone();
        p.extend_from_slice(&self.theta);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let n = self.phi.len();
        crate::error::check_dim("model parameters", n + self.theta.len(), p.len())?;
        self.phi.copy_from_slice(&p[..n]);
        self.theta.copy_from_slice(&p[n..]);
        Ok(())
    }

    /// Serialize: a text header followed by the little-endian `f64`
    /// parameter block (encoder layers, then decoder layers).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut block = Vec::with_capacity(8 * (self.phi.len() + self.theta.len()));
        for x in self.phi.iter().chain(&self.theta) {
            block.extend_from_slice(&x.to_le_bytes());
        }
        let digest = hex::encode(Sha256::digest(&block));
        let widths = |m: &Mlp| {
            m.spec()
                .widths
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let header = format!(
            "{MAGIC}\nformat_version = {MODEL_FORMAT_VERSION}\nrng = {}\nencoder_widths = {}\nencoder_seed = {}\ndecoder_widths = {}\ndecoder_seed = {}\nparam_count = {}\nsha256 = {digest}\n{END_HEADER}",
            rng::RNG_ALGORITHM,
            widths(&self.encoder),
            self.encoder.spec().seed,
            widths(&self.decoder),
            self.decoder.spec().seed,
            self.phi.len() + self.theta.len(),
        );
        let mut out = header.into_bytes();
        out.extend_from_slice(&block);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end = find(bytes, END_HEADER.as_bytes())
            .ok_or_else(|| Error::ModelFormat("missing end of header".into()))?;
        let header = std::str::from_utf8(&bytes[..end])
            .map_err(|_| Error::ModelFormat("header is not UTF-8".into()))?;
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::ModelFormat("not a model file".into()));
        }
        let mut fields = std::collections::BTreeMap::new();
        for line in lines {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::ModelFormat(format!("bad header line `{line}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::ModelFormat(format!("missing header field `{k}`")))
        };
        let version = get("format_version")?;
        if version.parse::<u32>().ok() != Some(MODEL_FORMAT_VERSION) {
            return Err(Error::ModelVersion {
                found: version.to_string(),
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::ModelFormat(format!("header field `{k}` is not an integer")))
        };
        let widths = |k: &str| -> Result<Vec<usize>> {
            get(k)?
                .split_whitespace()
                .map(|w| w.parse().map_err(|_| Error::ModelFormat(format!("bad width in `{k}`"))))
                .collect()
        };
        let enc = MlpSpec {
            widths: widths("encoder_widths")?,
            seed: num("encoder_seed")?,
        };
        let dec = MlpSpec {
            widths: widths("decoder_widths")?,
            seed: num("decoder_seed")?,
        };
        let count = num("param_count")? as usize;
        let digest = get("sha256")?;
        let mut model = AutoencoderModel::new(enc, dec)?;
        if count != model.phi.len() + model.theta.len() {
            return Err(Error::ModelFormat(format!(
                "param_count {count} does not match the network shapes"
            )));
        }
        let block = &bytes[end + END_HEADER.len()..];
        if block.len() < 8 * count {
            return Err(Error::ModelTruncated {
                expected: 8 * count,
                found: block.len(),
            });
        }
        if block.len() > 8 * count {
            return Err(Error::ModelFormat(format!(
                "{} trailing bytes after the parameter block",
                block.len() - 8 * count
            )));
        }
        if hex::encode(Sha256::digest(block)) != digest {
            return Err(Error::ModelChecksum);
        }
        let params: Vec<f64> = block
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        model.set_params(&params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LocalJet;
    use ndarray::Array2;

    fn small() -> Mlp {
        Mlp::new(MlpSpec::uniform(2, 5, 2, 3, 7)).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = small().init_params();
        assert_eq!(a, small().init_params());
        let b = (6.0f64 / 7.0).sqrt();
        assert!(a[..10].iter().all(|x| x.abs() <= b));
        assert!(a[10..15].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let n = small();
        let y: Vec<f64> = n.eval(&[0.3, -1.0], &vec![0.0; n.param_count()]);
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Mlp::new(MlpSpec { widths: vec![2, 3], seed: 0 }).is_err());
        assert!(Mlp::new(MlpSpec { widths: vec![2, 0, 3], seed: 0 }).is_err());
        let e = MlpSpec::uniform(3, 4, 1, 2, 0);
        let d = MlpSpec::uniform(3, 4, 1, 3, 0);
        assert!(AutoencoderModel::new(e, d).is_err());
    }

    #[test]
    fn batched_jets_match_nested_duals() {
        let n = small();
        let p = n.init_params();
        let pts = Array2::from_shape_vec((3, 2), vec![0.1, -0.2, 0.7, 0.3, -0.5, -0.9]).unwrap();
        for order in 0..=3 {
            let (out, _) = taylor::forward(&n, &p, pts.view(), order).unwrap();
            let jets = taylor::to_local_jets(&out, 2, order).unwrap();
            for (i, jet) in jets.iter().enumerate() {
                let z = [pts[[i, 0]], pts[[i, 1]]];
                let reference = LocalJet::from_program(&n, &z, &p, order).unwrap();
                for (a, b) in jet.coeffs().iter().zip(reference.coeffs()) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "order {order}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn batched_jet_adjoint_matches_tape() {
        let n = small();
        let p = n.init_params();
        let pts = Array2::from_shape_vec((2, 2), vec![0.1, -0.2, -0.5, 0.4]).unwrap();
        let order = 3;
        let (out, tape) = taylor::forward(&n, &p, pts.view(), order).unwrap();
        let weights = Array2::from_shape_fn(out.raw_dim(), |(r, c)| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let (gp, gz) = taylor::backward(&n, &p, &tape, &weights);
        // Reference: tape gradient of <weights, jets> over (points, params).
        let mut x = pts.iter().copied().collect::<Vec<_>>();
        x.extend_from_slice(&p);
        let (_, g) = crate::autodiff::gradient(&x, |v| {
            let mut acc = crate::autodiff::Var::constant(0.0);
            for i in 0..2 {
                let z = &v[2 * i..2 * i + 2];
                let jet = jet_generic(&n, z, &v[4..], order);
                let k = jet.len() / 3;
                for kk in 0..k {
                    for o in 0..3 {
                        acc += jet[kk * 3 + o].scale(weights[[i * k + kk, o]]);
                    }
                }
            }
            acc
        });
        for (a, b) in gz.iter().zip(&g[..4]) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} {b}");
        }
        for (a, b) in gp.iter().zip(&g[4..]) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} {b}");
        }
    }

    /// Third-order jet of a 2-input program over any scalar, in jet layout.
    fn jet_generic<S: Scalar>(f: &Mlp, z: &[S], theta: &[S], order: usize) -> Vec<S> {
        use crate::autodiff::{lift, Dual};
        assert_eq!(order, 3);
        let m = 2;
        let d = f.output_dim();
        let k = crate::geometry::jet_len(3, m);
        let mut out = vec![S::zero(); k * d];
        let unit = |i: usize, c: usize| if i == c { S::one() } else { S::zero() };
        let t3 = lift(&lift(&lift(theta)));
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    let zs: Vec<Dual<Dual<Dual<S>>>> = (0..m)
                        .map(|c| {
                            let inner = Dual::new(Dual::new(z[c], unit(l, c)), Dual::new(unit(j, c), S::zero()));
                            let tangent = Dual::new(Dual::new(unit(i, c), S::zero()), Dual::new(S::zero(), S::zero()));
                            Dual::new(inner, tangent)
                        })
                        .collect();
                    let y = f.eval(&zs, &t3);
                    for o in 0..d {
                        out[o] = y[o].re.re.re;
                        out[(1 + l) * d + o] = y[o].re.re.du;
                        out[(1 + m + j * m + l) * d + o] = y[o].re.du.du;
                        out[(1 + m + m * m + (i * m + j) * m + l) * d + o] = y[o].du.du.du;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn file_round_trip_and_errors() {
        let m = AutoencoderModel::new(MlpSpec::uniform(3, 4, 2, 2, 1), MlpSpec::uniform(2, 4, 2, 3, 2)).unwrap();
        let bytes = m.to_bytes();
        let back = AutoencoderModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);

        let trunc = &bytes[..bytes.len() - 5];
        assert!(matches!(AutoencoderModel::from_bytes(trunc), Err(Error::ModelTruncated { .. })));

        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(AutoencoderModel::from_bytes(&flipped), Err(Error::ModelChecksum)));

        let text = String::from_utf8_lossy(&bytes).replace("format_version = 1", "format_version = 9");
        let mut versioned = text.into_bytes();
        versioned.truncate(bytes.len());
        let header_end = find(&bytes, END_HEADER.as_bytes()).unwrap() + END_HEADER.len();
        versioned[header_end..].copy_from_slice(&bytes[header_end..]);
        assert!(matches!(AutoencoderModel::from_bytes(&versioned), Err(Error::ModelVersion { .. })));
    }
}
