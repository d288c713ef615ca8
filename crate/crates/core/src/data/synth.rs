//! Procedural portrait-like matting corpus.
//!
//! Each sample is a head ellipse plus a rounded-rectangle torso running off
//! the bottom edge, optionally with thin semi-transparent strands, composited
//! over a textured background. The ground-truth matte is the generator's own
//! opacity map, so `image = α·F + (1 − α)·B` holds exactly.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::tensor::{Shape, Tensor};

/// Which part of the figure the ground truth covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SynthMode {
    /// Head, torso and strands.
    #[default]
    Full,
    /// Head and strands only; the torso is still drawn in the image.
    Head,
}

impl FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SynthMode::Full),
            "head" => Ok(SynthMode::Head),
            other => Err(Error::InvalidArgument(format!("unknown synth mode {other:?} (full|head)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub mode: SynthMode,
    /// Probability that a sample gets strands.
    pub strand_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 128,
            width: 128,
            mode: SynthMode::Full,
            strand_prob: 0.6,
        }
    }
}

/// A generated sample together with the layers it was composited from.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub sample: Sample,
    /// Foreground colour `F`, `(1, 3, h, w)`.
    pub foreground: Tensor,
    /// Background colour `B`, `(1, 3, h, w)`.
    pub background: Tensor,
    /// Opacity used for compositing. Equals `sample.alpha` in
    /// [`SynthMode::Full`].
    pub composite_alpha: Tensor,
}

struct Strand {
    p0: (f64, f64),
    p1: (f64, f64),
    half_width: f64,
    opacity: f64,
}

struct Figure {
    head_c: (f64, f64),
    head_r: (f64, f64),
    body_c: (f64, f64),
    body_half: (f64, f64),
    body_round: f64,
    feather: f64,
    strands: Vec<Strand>,
    skin: [f64; 3],
    shirt: [f64; 3],
    stripe: Option<(f64, f64)>,
    hair: [f64; 3],
}

struct Backdrop {
    c0: [f64; 3],
    c1: [f64; 3],
    waves: [(f64, f64, f64); 2],
    noise: f64,
}

fn rgb(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()].map(|v: f64| 0.05 + 0.9 * v)
}

fn l1(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn ellipse_sd(p: (f64, f64), c: (f64, f64), r: (f64, f64)) -> f64 {
    let (dx, dy) = (p.0 - c.0, p.1 - c.1);
    let k = ((dx / r.0).powi(2) + (dy / r.1).powi(2)).sqrt();
    let g = ((dx / (r.0 * r.0)).powi(2) + (dy / (r.1 * r.1)).powi(2)).sqrt();
    if g < 1e-12 {
        return -r.0.min(r.1);
    }
    // first-order distance: (k − 1) / |∇k|
    (k - 1.0) * k / g
}

fn rounded_rect_sd(p: (f64, f64), c: (f64, f64), half: (f64, f64), round: f64) -> f64 {
    let qx = (p.0 - c.0).abs() - (half.0 - round);
    let qy = (p.1 - c.1).abs() - (half.1 - round);
    let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
    outside + qx.max(qy).min(0.0) - round
}

fn segment_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
    ((p.0 - a.0 - t * vx).powi(2) + (p.1 - a.1 - t * vy).powi(2)).sqrt()
}

fn ramp(sd: f64, width: f64) -> f64 {
    (0.5 - sd / width).clamp(0.0, 1.0)
}

impl Figure {
    fn random(rng: &mut ChaCha8Rng, h: f64, w: f64, strand_prob: f64) -> Self {
        let rx = w * rng.random_range(0.12..0.2);
        let ry = rx * rng.random_range(1.1..1.35);
        let head_c = (w * rng.random_range(0.38..0.62), h * rng.random_range(0.24..0.4));
        let top = head_c.1 + ry * rng.random_range(0.7..0.95);
        let bottom = h + 0.2 * h;
        let half_w = w * rng.random_range(0.22..0.38);
        let body_c = (head_c.0 + w * rng.random_range(-0.05..0.05), 0.5 * (top + bottom));
        let body_half = (half_w, 0.5 * (bottom - top));
        let body_round = (w * rng.random_range(0.06..0.14)).min(half_w);
        let feather = rng.random_range(1.0..4.0);

        let mut strands = Vec::new();
        if rng.random_bool(strand_prob) {
            for _ in 0..rng.random_range(2..=5) {
                let theta = rng.random_range(200f64..340.0).to_radians();
                let p0 = (head_c.0 + 0.9 * rx * theta.cos(), head_c.1 + 0.9 * ry * theta.sin());
                let dir = theta + rng.random_range(-0.5..0.5);
                let len = w * rng.random_range(0.08..0.2);
                strands.push(Strand {
                    p0,
                    p1: (p0.0 + len * dir.cos(), p0.1 + len * dir.sin()),
                    half_width: rng.random_range(0.3..0.8),
                    opacity: rng.random_range(0.35..0.75),
                });
            }
        }

        let r = rng.random_range(0.55..0.95);
        let g = r * rng.random_range(0.6..0.85);
        let skin = [r, g, g * rng.random_range(0.6..0.9)];
        let shirt = rgb(rng);
        let stripe = rng
            .random_bool(0.5)
            .then(|| (rng.random_range(0.15..0.6), rng.random_range(0.0..std::f64::consts::TAU)));
        let dark = rng.random_range(0.03..0.3);
        let hair = [dark, dark * rng.random_range(0.7..1.0), dark * rng.random_range(0.5..1.0)];
        Figure {
            head_c,
            head_r: (rx, ry),
            body_c,
            body_half,
            body_round,
            feather,
            strands,
            skin,
            shirt,
            stripe,
            hair,
        }
    }

    /// `(head α, torso α, strand α, F)` at a pixel centre.
    fn eval(&self, p: (f64, f64)) -> (f64, f64, f64, [f64; 3]) {
        let sd_head = ellipse_sd(p, self.head_c, self.head_r);
        let sd_body = rounded_rect_sd(p, self.body_c, self.body_half, self.body_round);
        let a_head = ramp(sd_head, self.feather);
        let a_body = ramp(sd_body, self.feather);
        let a_strand = self
            .strands
            .iter()
            .map(|s| s.opacity * (0.5 + s.half_width - segment_dist(p, s.p0, s.p1)).clamp(0.0, 1.0))
            .fold(0.0, f64::max);

        // head shading falls off from the centre
        let (dx, dy) = ((p.0 - self.head_c.0) / self.head_r.0, (p.1 - self.head_c.1) / self.head_r.1);
        let shade = 1.0 - 0.25 * (dx * dx + dy * dy).min(1.5);
        let mut shirt = self.shirt;
        if let Some((freq, phase)) = self.stripe {
            let k = 0.8 + 0.2 * (freq * p.1 + phase).sin();
            shirt = shirt.map(|v| v * k);
        }
        // whichever shape is more opaque supplies the body colour
        let body = if a_head >= a_body { self.skin.map(|v| v * shade) } else { shirt };
        let a = a_head.max(a_body);
        let a_tot = 1.0 - (1.0 - a_strand) * (1.0 - a);
        let f = if a_tot > 0.0 {
            std::array::from_fn(|j| (a_strand * self.hair[j] + (1.0 - a_strand) * a * body[j]) / a_tot)
        } else {
            body
        };
        (a_head, a_body, a_strand, f.map(|v| v.clamp(0.0, 1.0)))
    }
}

impl Backdrop {
    fn random(rng: &mut ChaCha8Rng, avoid: &[[f64; 3]]) -> Self {
        let mut c0 = rgb(rng);
        for _ in 0..20 {
            if avoid.iter().all(|a| l1(a, &c0) > 0.35) {
                break;
            }
            c0 = rgb(rng);
        }
        let c1 = c0.map(|v| (v + rng.random_range(-0.3..0.3)).clamp(0.0, 1.0));
        let mut wave = || {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let freq = rng.random_range(0.02..0.25);
            (freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU))
        };
        let waves = [wave(), wave()];
        Backdrop {
            c0,
            c1,
            waves,
            noise: rng.random_range(0.0..0.05),
        }
    }

    fn eval(&self, p: (f64, f64), jitter: f64) -> [f64; 3] {
        let t = self.waves.iter().map(|&(fx, fy, ph)| (fx * p.0 + fy * p.1 + ph).sin()).sum::<f64>();
        let t = 0.5 + 0.25 * t;
        std::array::from_fn(|j| (self.c0[j] + t * (self.c1[j] - self.c0[j]) + self.noise * jitter).clamp(0.0, 1.0))
    }
}

/// The `index`-th sample of the corpus identified by `seed`.
pub fn synth_sample(index: usize, seed: u64, cfg: &SynthConfig) -> Result<SynthSample> {
    let (h, w) = (cfg.height, cfg.width);
    if h < 4 || w < 4 {
        return Err(Error::InvalidArgument(format!("synthetic images must be at least 4x4, got {h}x{w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let fig = Figure::random(&mut rng, h as f64, w as f64, cfg.strand_prob);
    let back = Backdrop::random(&mut rng, &[fig.skin, fig.shirt]);

    let rgb_shape = Shape::new(1, 3, h, w);
    let a_shape = Shape::new(1, 1, h, w);
    let mut fg = Tensor::zeros(rgb_shape);
    let mut bg = Tensor::zeros(rgb_shape);
    let mut image = Tensor::zeros(rgb_shape);
    let mut comp = Tensor::zeros(a_shape);
    let mut gt = Tensor::zeros(a_shape);
    for y in 0..h {
        for x in 0..w {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let (a_head, a_body, a_strand, f) = fig.eval(p);
            let b = back.eval(p, rng.random_range(-1.0..1.0));
            let over = |a: f64| (1.0 - (1.0 - a_strand) * (1.0 - a)) as f32;
            let a_tot = over(a_head.max(a_body));
            comp.set(0, 0, y, x, a_tot);
            gt.set(
                0,
                0,
                y,
                x,
                match cfg.mode {
                    SynthMode::Full => a_tot,
                    SynthMode::Head => over(a_head),
                },
            );
            for c in 0..3 {
                let (fc, bc) = (f[c] as f32, b[c] as f32);
                fg.set(0, c, y, x, fc);
                bg.set(0, c, y, x, bc);
                image.set(0, c, y, x, a_tot * fc + (1.0 - a_tot) * bc);
            }
        }
    }
    Ok(SynthSample {
        sample: Sample::new(image, gt)?,
        foreground: fg,
        background: bg,
        composite_alpha: comp,
    })
}

/// `n` samples generated in parallel; sample `i` depends only on `(i, seed)`.
pub fn synth_dataset(n: usize, seed: u64, cfg: &SynthConfig) -> Result<Vec<SynthSample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("synthetic corpus size must be at least 1".into()));
    }
    map_indexed(n, |i| synth_sample(i, seed, cfg)).into_iter().collect()
}
