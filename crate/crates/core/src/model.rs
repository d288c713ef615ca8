//! The full two-stage model, its on-disk format, and inference.
//!
//! Parameter file layout:
//!
//! ```text
//! 8 bytes   magic "MATTEPRM"
//! u32 LE    header length in bytes
//! header    UTF-8 key=value lines (format version and architecture)
//! payload   every weight/bias array as little-endian f32, in layer-table
//!           order: initial, dense1..dense4, classifier, feather conv1,
//!           feather conv2 (weights before biases)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::feathering::{
    apply_linear_matte, feather_forward, feather_init, feather_inputs, AlphaMatte, FeatherParams, DEFAULT_HIDDEN,
};
use crate::guided::{guided_filter_with, GuidedFilterConfig};
use crate::paramset::ParamSet;
use crate::segnet::{ldn_forward, ldn_init, LdnConfig, LdnParams, ScoreMaps, DENSE_LAYERS};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 8] = b"MATTEPRM";

/// Version of the parameter file format this build reads and writes.
pub const FORMAT_VERSION: u32 = 1;

/// Weights of the segmentation network and the feathering block.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub ldn: LdnParams<T>,
    pub feather: FeatherParams<T>,
}

impl ModelParams<f32> {
    /// Both components initialised from one seed.
    pub fn init(config: &LdnConfig, feather_hidden: usize, seed: u64) -> Result<Self> {
        Ok(ModelParams {
            ldn: ldn_init(config, seed)?,
            feather: feather_init(feather_hidden, seed.wrapping_add(0x5eed_f00d))?,
        })
    }

    pub fn default_init(seed: u64) -> Result<Self> {
        Self::init(&LdnConfig::default(), DEFAULT_HIDDEN, seed)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.ldn.config;
        let header = format!(
            "format_version={FORMAT_VERSION}\ninitial_channels={}\ngrowth={}\ndilations={}\ninput_h={}\ninput_w={}\nfeather_hidden={}\nfeather_smooth={}\n",
            c.initial_channels,
            c.growth,
            c.dilations.map(|d| d.to_string()).join(","),
            c.input_size.0,
            c.input_size.1,
            self.feather.hidden(),
            self.feather.smooth,
        );
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for a in self.arrays() {
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = bytes
            .get(12..12 + hlen)
            .ok_or_else(|| bad("truncated header"))
            .and_then(|h| std::str::from_utf8(h).map_err(|_| bad("header is not UTF-8")))?;

        let mut config = LdnConfig::default();
        let mut hidden = None;
        let mut smooth = 0;
        let mut version = None;
        for line in header.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(&format!("bad header line {line:?}")))?;
            let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad(&format!("bad value for {k}: {v:?}")));
            match k.trim() {
                "format_version" => version = Some(num(v)?),
                "initial_channels" => config.initial_channels = num(v)?,
                "growth" => config.growth = num(v)?,
                "dilations" => {
                    let d: Vec<usize> = v.split(',').map(num).collect::<Result<_>>()?;
                    config.dilations = d
                        .try_into()
                        .map_err(|_| bad(&format!("expected {DENSE_LAYERS} dilation rates")))?;
                }
                "input_h" => config.input_size.0 = num(v)?,
                "input_w" => config.input_size.1 = num(v)?,
                "feather_hidden" => hidden = Some(num(v)?),
                "feather_smooth" => smooth = num(v)?,
                other => return Err(bad(&format!("unknown header key {other:?}"))),
            }
        }
        if version != Some(FORMAT_VERSION as usize) {
            return Err(bad(&format!("unsupported format version {version:?}")));
        }
        config.validate()?;
        let mut params = ModelParams {
            ldn: LdnParams::zeros(&config),
            feather: FeatherParams::zeros(hidden.ok_or_else(|| bad("missing feather_hidden"))?)?,
        };
        let payload = &bytes[12 + hlen..];
        if payload.len() != 4 * params.param_count() {
            return Err(bad(&format!(
                "payload has {} bytes, architecture needs {}",
                payload.len(),
                4 * params.param_count()
            )));
        }
        let flat: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.set_flat(&flat);
        params.feather.smooth = smooth;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

impl<T: Real> ModelParams<T> {
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            ldn: self.ldn.cast(),
            feather: self.feather.cast(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            ldn: self.ldn.zeros_like(),
            feather: self.feather.zeros_like(),
        }
    }
}

impl<T: Real> ParamSet<T> for ModelParams<T> {
    fn arrays(&self) -> Vec<&[T]> {
        let mut v = self.ldn.arrays();
        v.extend(self.feather.arrays());
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.ldn.arrays_mut();
        v.extend(self.feather.arrays_mut());
        v
    }
}

/// How the coarse segmentation is turned into a matte.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Refiner {
    /// The soft foreground score map itself.
    Scores,
    /// Binarised foreground mask (argmax of the two scores).
    Mask,
    /// Guided filter of the binarised mask, guided by the image.
    GuidedFilter(GuidedFilterConfig),
    /// The learned feathering block.
    Feathering,
}

impl Refiner {
    pub fn label(&self) -> &'static str {
        match self {
            Refiner::Scores => "LDN-scores",
            Refiner::Mask => "LDN",
            Refiner::GuidedFilter(_) => "LDN+GF",
            Refiner::Feathering => "LDN+FB",
        }
    }
}

/// Runs the feathering block on precomputed score maps.
pub fn feather_matte<T: Real>(image: &Tensor<T>, scores: &ScoreMaps<T>, params: &FeatherParams<T>) -> Result<AlphaMatte<T>> {
    let stack = feather_inputs(image, scores)?;
    let coeffs = feather_forward(&stack, params)?;
    apply_linear_matte(&coeffs, scores)
}

/// Applies `refiner` to score maps already computed for `image`.
pub fn refine<T: Real>(image: &Tensor<T>, scores: &ScoreMaps<T>, params: &ModelParams<T>, refiner: Refiner) -> Result<Tensor<T>> {
    match refiner {
        Refiner::Scores => Ok(scores.s_f.clone()),
        Refiner::Mask => Ok(scores.argmax_mask()),
        Refiner::GuidedFilter(cfg) => {
            let q = guided_filter_with(image, &scores.argmax_mask(), &cfg)?;
            Ok(q.map(|v| v.max(T::zero()).min(T::one())))
        }
        Refiner::Feathering => feather_matte(image, scores, &params.feather).map(|m| m.alpha),
    }
}

/// Image `(n, 3, h, w)` → matte `(n, 1, h, w)`.
pub fn predict<T: Real>(image: &Tensor<T>, params: &ModelParams<T>, refiner: Refiner) -> Result<Tensor<T>> {
    let scores = ldn_forward(image, &params.ldn)?;
    refine(image, &scores, params, refiner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn bytes_round_trip_bit_exact() {
        let p = ModelParams::default_init(9).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        let q = ModelParams::from_bytes(&bytes).unwrap();
        assert_eq!(q.to_bytes(), bytes);
        let bits = |m: &ModelParams| m.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
    }

    #[test]
    fn non_default_architecture_round_trips() {
        let cfg = LdnConfig {
            initial_channels: 5,
            growth: 4,
            dilations: [1, 3, 5, 7],
            input_size: (64, 96),
        };
        let mut p = ModelParams::init(&cfg, 6, 1).unwrap();
        p.feather.smooth = 3;
        let q = ModelParams::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn header_without_smoothing_key_loads_unsmoothed() {
        let bytes = ModelParams::default_init(0).unwrap().to_bytes();
        let line = b"feather_smooth=0\n";
        let at = bytes.windows(line.len()).position(|w| w == line).unwrap();
        let mut old = bytes[..at].to_vec();
        old.extend_from_slice(&bytes[at + line.len()..]);
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) - line.len() as u32;
        old[8..12].copy_from_slice(&hlen.to_le_bytes());
        assert_eq!(ModelParams::from_bytes(&old).unwrap().feather.smooth, 0);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = ModelParams::default_init(0).unwrap().to_bytes();
        assert!(ModelParams::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(ModelParams::from_bytes(b"NOTMAGIC\0\0\0\0").is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 4]);
        assert!(ModelParams::from_bytes(&extra).is_err());
        let text = String::from_utf8_lossy(&bytes[12..60]).replace("format_version=1", "format_version=7");
        let mut wrong = bytes.clone();
        wrong[12..60].copy_from_slice(text.as_bytes());
        assert!(matches!(ModelParams::from_bytes(&wrong), Err(Error::Format(_))));
    }

    #[test]
    fn refiners_produce_mattes_in_range() {
        let p = ModelParams::default_init(4).unwrap();
        let img = Tensor::from_fn(Shape::new(1, 3, 32, 32), |_, c, y, x| ((c + y + 2 * x) % 7) as f32 / 6.0);
        for r in [
            Refiner::Scores,
            Refiner::Mask,
            Refiner::GuidedFilter(GuidedFilterConfig::default()),
            Refiner::Feathering,
        ] {
            let a = predict(&img, &p, r).unwrap();
            assert_eq!(a.shape(), Shape::new(1, 1, 32, 32));
            assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)), "{}", r.label());
        }
    }
}
