//! Random mirror, zoom, rotation and blur for training samples.

use rand::Rng;

use super::config::AugmentConfig;
use crate::data::Sample;
use crate::error::Result;
use crate::tensor::{Shape, Tensor};

/// Blur kernel radius (5×5 taps).
const BLUR_RADIUS: usize = 2;

/// One draw of the random transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub scale: f64,
    pub rotation_deg: f64,
    /// Gaussian σ in pixels; 0 disables the blur.
    pub blur_sigma: f64,
}

impl AugmentParams {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, cfg: &AugmentConfig) -> Self {
        let mut uniform = |(lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let scale = uniform(cfg.scale);
        let rotation_deg = uniform(cfg.rotation_deg);
        let flip = cfg.flip_prob > 0.0 && rng.random_bool(cfg.flip_prob);
        let blur = cfg.blur_prob > 0.0 && rng.random_bool(cfg.blur_prob);
        let blur_sigma = if blur && cfg.blur_sigma_max > 0.0 {
            rng.random_range(0.0..=cfg.blur_sigma_max)
        } else {
            0.0
        };
        AugmentParams {
            flip,
            scale,
            rotation_deg,
            blur_sigma,
        }
    }

    fn is_geometric_identity(&self) -> bool {
        !self.flip && self.scale == 1.0 && self.rotation_deg == 0.0
    }
}

/// Draws a transform from `rng` and applies it, producing a sample of
/// size `out_size`.
pub fn augment<R: Rng + ?Sized>(sample: &Sample, rng: &mut R, cfg: &AugmentConfig, out_size: (usize, usize)) -> Result<Sample> {
    let p = AugmentParams::draw(rng, cfg);
    apply_augment(sample, &p, out_size)
}

/// Applies a fixed transform. The same warp is used for image and alpha;
/// the image is reflect-padded, alpha is zero outside the source; the mask
/// is re-derived from the warped alpha. Blur touches the image only.
pub fn apply_augment(sample: &Sample, p: &AugmentParams, out_size: (usize, usize)) -> Result<Sample> {
    let (oh, ow) = out_size;
    let (image, alpha) = if p.is_geometric_identity() {
        let s = sample.resized(oh, ow)?;
        (s.image, s.alpha)
    } else {
        let (ih, iw) = sample.size();
        let map = Warp::new((ih, iw), out_size, p);
        (warp(&sample.image, &map, Border::Reflect), warp(&sample.alpha, &map, Border::Zero))
    };
    let image = if p.blur_sigma > 0.0 {
        gaussian_blur(&image, p.blur_sigma)
    } else {
        image
    };
    Sample::new(image, alpha.map(|v| v.clamp(0.0, 1.0)))
}

/// Output pixel → source coordinate.
struct Warp {
    in_size: (usize, usize),
    out_size: (usize, usize),
    out_c: (f64, f64),
    in_c: (f64, f64),
    /// Source pixels per output pixel at unit zoom (align-corners).
    k: (f64, f64),
    cos: f64,
    sin: f64,
    scale: f64,
    flip: bool,
}

fn ratio(i: usize, o: usize) -> f64 {
    if o > 1 {
        (i as f64 - 1.0) / (o as f64 - 1.0)
    } else {
        1.0
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

impl Warp {
    fn new(in_size: (usize, usize), out_size: (usize, usize), p: &AugmentParams) -> Self {
        let th = p.rotation_deg.to_radians();
        let half = |n: usize| (n as f64 - 1.0) / 2.0;
        Warp {
            in_size,
            out_size,
            out_c: (half(out_size.0), half(out_size.1)),
            in_c: (half(in_size.0), half(in_size.1)),
            k: (ratio(in_size.0, out_size.0), ratio(in_size.1, out_size.1)),
            cos: th.cos(),
            sin: th.sin(),
            scale: p.scale,
            flip: p.flip,
        }
    }

    /// `(y, x)` in the source for output pixel `(oy, ox)`.
    fn source(&self, oy: usize, ox: usize) -> (f64, f64) {
        let u = ox as f64 - self.out_c.1;
        let v = oy as f64 - self.out_c.0;
        // undo the rotation, then the zoom
        let ur = (self.cos * u + self.sin * v) / self.scale;
        let vr = (-self.sin * u + self.cos * v) / self.scale;
        let mut x = self.in_c.1 + ur * self.k.1;
        let y = self.in_c.0 + vr * self.k.0;
        if self.flip {
            x = (self.in_size.1 - 1) as f64 - x;
        }
        (snap(y), snap(x))
    }
}

#[derive(Clone, Copy)]
enum Border {
    Reflect,
    Zero,
}

/// Mirror index into `[0, n)` without repeating the edge pixel.
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

fn fetch(plane: &[f32], h: usize, w: usize, y: i64, x: i64, border: Border) -> f32 {
    match border {
        Border::Reflect => plane[reflect(y, h) * w + reflect(x, w)],
        Border::Zero => {
            if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
                0.0
            } else {
                plane[y as usize * w + x as usize]
            }
        }
    }
}

fn warp(input: &Tensor, map: &Warp, border: Border) -> Tensor {
    let s = input.shape();
    let out_shape = Shape::new(s.n, s.c, map.out_size.0, map.out_size.1);
    let coords: Vec<(f64, f64)> = (0..out_shape.h)
        .flat_map(|oy| (0..out_shape.w).map(move |ox| (oy, ox)))
        .map(|(oy, ox)| map.source(oy, ox))
        .collect();
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            for (o, &(y, x)) in out.plane_mut(n, c).iter_mut().zip(&coords) {
                let (y0, x0) = (y.floor(), x.floor());
                let (fy, fx) = ((y - y0) as f32, (x - x0) as f32);
                let (y0, x0) = (y0 as i64, x0 as i64);
                let g = |dy, dx| fetch(src, s.h, s.w, y0 + dy, x0 + dx, border);
                *o = if fy == 0.0 && fx == 0.0 {
                    g(0, 0)
                } else {
                    (1.0 - fy) * ((1.0 - fx) * g(0, 0) + fx * g(0, 1)) + fy * ((1.0 - fx) * g(1, 0) + fx * g(1, 1))
                };
            }
        }
    }
    out
}

/// Separable 5×5 Gaussian with reflect borders.
pub fn gaussian_blur(input: &Tensor, sigma: f64) -> Tensor {
    let r = BLUR_RADIUS as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    let k: Vec<f32> = k.into_iter().map(|v| v as f32).collect();

    let s = input.shape();
    let mut out = input.clone();
    let mut tmp = vec![0.0f32; s.plane()];
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            for y in 0..s.h {
                for x in 0..s.w {
                    tmp[y * s.w + x] = (-r..=r)
                        .map(|d| k[(d + r) as usize] * src[y * s.w + reflect(x as i64 + d, s.w)])
                        .sum();
                }
            }
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                for x in 0..s.w {
                    dst[y * s.w + x] = (-r..=r)
                        .map(|d| k[(d + r) as usize] * tmp[reflect(y as i64 + d, s.h) * s.w + x])
                        .sum();
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(h: usize, w: usize) -> Sample {
        let img = Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| ((c * 31 + y * 7 + x * 3) % 17) as f32 / 16.0);
        let a = Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| ((y * w + x) % 5) as f32 / 4.0);
        Sample::new(img, a).unwrap()
    }

    fn fixed(flip: bool, scale: f64, rot: f64) -> AugmentParams {
        AugmentParams {
            flip,
            scale,
            rotation_deg: rot,
            blur_sigma: 0.0,
        }
    }

    #[test]
    fn disabled_is_identity() {
        let s = sample(12, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&s, &mut rng, &AugmentConfig::none(), (12, 16)).unwrap(), s);
    }

    #[test]
    fn double_flip_is_identity() {
        let s = sample(9, 10);
        let once = apply_augment(&s, &fixed(true, 1.0, 0.0), (9, 10)).unwrap();
        assert_ne!(once, s);
        assert_eq!(once.image.at(0, 1, 3, 0), s.image.at(0, 1, 3, 9));
        assert_eq!(apply_augment(&once, &fixed(true, 1.0, 0.0), (9, 10)).unwrap(), s);
    }

    #[test]
    fn quarter_turn_permutes_pixels() {
        let n = 11;
        let s = sample(n, n);
        let r = apply_augment(&s, &fixed(false, 1.0, 90.0), (n, n)).unwrap();
        for oy in 0..n {
            for ox in 0..n {
                for c in 0..3 {
                    assert_eq!(r.image.at(0, c, oy, ox), s.image.at(0, c, n - 1 - ox, oy));
                }
                assert_eq!(r.alpha.at(0, 0, oy, ox), s.alpha.at(0, 0, n - 1 - ox, oy));
            }
        }
    }

    #[test]
    fn zoom_out_pads_alpha_with_zero() {
        let s = Sample::new(Tensor::full(Shape::new(1, 3, 16, 16), 0.3), Tensor::full(Shape::new(1, 1, 16, 16), 1.0)).unwrap();
        let r = apply_augment(&s, &fixed(false, 0.5, 0.0), (16, 16)).unwrap();
        assert_eq!(r.alpha.at(0, 0, 0, 0), 0.0);
        assert_eq!(r.alpha.at(0, 0, 8, 8), 1.0);
        assert!(r.image.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        assert_eq!(r.mask, crate::data::binarize(&r.alpha));
    }

    #[test]
    fn blur_preserves_constants_and_skips_alpha() {
        let s = sample(10, 10);
        let p = AugmentParams {
            blur_sigma: 1.2,
            ..fixed(false, 1.0, 0.0)
        };
        let r = apply_augment(&s, &p, (10, 10)).unwrap();
        assert_eq!(r.alpha, s.alpha);
        assert_ne!(r.image, s.image);
        let flat = Tensor::full(Shape::new(1, 1, 6, 6), 0.25f32);
        assert!(gaussian_blur(&flat, 1.0).max_abs_diff(&flat) < 1e-6);
    }

    #[test]
    fn reflect_indexing() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
    }
}
