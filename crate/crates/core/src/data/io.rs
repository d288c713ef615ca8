//! 8-bit PNG images and mattes, and the dataset manifest.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::Sample;
use crate::error::{Error, Result};
use crate::ops::bilinear_resize;
use crate::parallel::map_indexed;
use crate::tensor::{Shape, Tensor};

/// Paired image/alpha files plus the split they should be divided by.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<(PathBuf, PathBuf)>,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        DatasetManifest {
            entries: Vec::new(),
            split_ratio: 0.9,
            seed: 0,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    image::open(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

fn check_8bit(path: &Path, img: &DynamicImage) -> Result<()> {
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => Ok(()),
        other => Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            format: format!("{other:?}"),
        }),
    }
}

/// `v ∈ [0, 1]` → nearest 8-bit level.
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn rgb_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = img.dimensions();
    Tensor::from_fn(Shape::new(1, 3, h as usize, w as usize), |_, c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

fn gray_tensor(img: &GrayImage) -> Tensor {
    let (w, h) = img.dimensions();
    Tensor::from_fn(Shape::new(1, 1, h as usize, w as usize), |_, _, y, x| {
        img.get_pixel(x as u32, y as u32)[0] as f32 / 255.0
    })
}

/// Reads an 8-bit PNG as a `(1, 3, h, w)` tensor in `[0, 1]`.
pub fn load_rgb_png(path: &Path) -> Result<Tensor> {
    let img = open(path)?;
    check_8bit(path, &img)?;
    Ok(rgb_tensor(&img.to_rgb8()))
}

/// Reads an 8-bit grayscale PNG as a `(1, 1, h, w)` matte in `[0, 1]`.
pub fn load_alpha_png(path: &Path) -> Result<Tensor> {
    let img = open(path)?;
    check_8bit(path, &img)?;
    Ok(gray_tensor(&img.to_luma8()))
}

fn write_png(path: &Path, img: DynamicImage) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
        source => Error::Decode {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// Writes the first sample of a 3-channel tensor as an RGB PNG.
pub fn save_rgb_png(path: &Path, image: &Tensor) -> Result<()> {
    let s = image.shape();
    if s.c != 3 {
        return Err(Error::InvalidArgument(format!("expected a 3-channel image, got {s}")));
    }
    let mut buf = Vec::with_capacity(3 * s.plane());
    for i in 0..s.plane() {
        for c in 0..3 {
            buf.push(to_u8(image.plane(0, c)[i]));
        }
    }
    let img = RgbImage::from_raw(s.w as u32, s.h as u32, buf).expect("buffer sized from shape");
    write_png(path, DynamicImage::ImageRgb8(img))
}

/// Writes the first sample of a 1-channel matte as a grayscale PNG
/// (255 = fully foreground).
pub fn save_alpha_png(path: &Path, alpha: &Tensor) -> Result<()> {
    let s = alpha.shape();
    if s.c != 1 {
        return Err(Error::InvalidArgument(format!("expected a 1-channel matte, got {s}")));
    }
    let buf = alpha.plane(0, 0).iter().map(|&v| to_u8(v)).collect();
    let img = GrayImage::from_raw(s.w as u32, s.h as u32, buf).expect("buffer sized from shape");
    write_png(path, DynamicImage::ImageLuma8(img))
}

/// Loads an image/matte pair, optionally resizing both to `(h, w)`.
pub fn load_sample(image_path: &Path, alpha_path: &Path, target_size: Option<(usize, usize)>) -> Result<Sample> {
    let img = open(image_path)?;
    let alpha = open(alpha_path)?;
    check_8bit(image_path, &img)?;
    check_8bit(alpha_path, &alpha)?;
    let (isz, asz) = ((img.width(), img.height()), (alpha.width(), alpha.height()));
    if isz != asz {
        return Err(Error::SizeMismatch {
            image: image_path.to_path_buf(),
            alpha: alpha_path.to_path_buf(),
            image_size: isz,
            alpha_size: asz,
        });
    }
    let mut image = rgb_tensor(&img.to_rgb8());
    let mut alpha = gray_tensor(&alpha.to_luma8());
    if let Some((h, w)) = target_size {
        image = bilinear_resize(&image, h, w)?;
        alpha = bilinear_resize(&alpha, h, w)?;
    }
    Sample::new(image, alpha)
}

/// Loads every manifest entry in parallel.
pub fn load_dataset(manifest: &DatasetManifest, target_size: Option<(usize, usize)>) -> Result<Vec<Sample>> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    map_indexed(manifest.entries.len(), |i| {
        let (img, alpha) = &manifest.entries[i];
        load_sample(img, alpha, target_size)
    })
    .into_iter()
    .collect()
}

/// Parses a manifest: `image<TAB>alpha` per line, optional
/// `# split_ratio=…` and `# seed=…` lines, other `#` lines ignored.
/// Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut m = DatasetManifest::default();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::Config(format!("{}:{}: {what}", path.display(), lineno + 1));
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                match k.trim() {
                    "split_ratio" => m.split_ratio = v.trim().parse().map_err(|_| bad("bad split_ratio"))?,
                    "seed" => m.seed = v.trim().parse().map_err(|_| bad("bad seed"))?,
                    _ => {}
                }
            }
            continue;
        }
        let (img, alpha) = line.split_once('\t').ok_or_else(|| bad("expected image<TAB>alpha"))?;
        m.entries.push((base.join(img), base.join(alpha)));
    }
    let mut seen = std::collections::HashSet::new();
    for (a, b) in &m.entries {
        if a == b || !seen.insert(a.clone()) || !seen.insert(b.clone()) {
            return Err(Error::Config(format!("{}: path listed twice: {}", path.display(), a.display())));
        }
    }
    Ok(m)
}

/// Writes `manifest` to `path`, storing entries relative to its directory
/// when possible.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &PathBuf| p.strip_prefix(base).unwrap_or(p).display().to_string();
    let mut text = format!("# split_ratio={}\n# seed={}\n", manifest.split_ratio, manifest.seed);
    for (img, alpha) in &manifest.entries {
        text.push_str(&format!("{}\t{}\n", rel(img), rel(alpha)));
    }
    fs::write(path, text).map_err(io_err(path))
}
