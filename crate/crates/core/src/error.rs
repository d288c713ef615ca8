use std::path::PathBuf;

/// Errors produced by the matting engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("unsupported pixel format in {}: {format} (expected 8 bits per channel)", path.display())]
    UnsupportedBitDepth { path: PathBuf, format: String },

    #[error("image {} is {image_size:?} but alpha {} is {alpha_size:?}", image.display(), alpha.display())]
    SizeMismatch {
        image: PathBuf,
        alpha: PathBuf,
        image_size: (u32, u32),
        alpha_size: (u32, u32),
    },

    #[error("malformed parameter file: {0}")]
    Format(String),

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("dataset is empty")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Shape {
        op,
        detail: detail.into(),
    })
}
