//! Loader for the IDX files of the MNIST handwritten digits.
//!
//! Pixels are binarized as `x = ⌊z/128⌋` and flattened row-major.

use std::io::Read;
use std::path::{Path, PathBuf};

use rbm_core::{Error, Result, SampleSet};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn stem(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown MNIST split {other:?}"))),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(format!("{what}: truncated header")))
}

/// Parses an IDX image file into binarized samples.
pub fn parse_images(bytes: &[u8]) -> Result<SampleSet> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::parse(format!("images: bad magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let m = rows * cols;
    let body = &bytes[16..];
    if body.len() < count * m {
        return Err(Error::parse(format!(
            "images: truncated, expected {} pixel bytes, found {}",
            count * m,
            body.len()
        )));
    }
    let flat = body[..count * m].iter().map(|z| z / 128).collect();
    SampleSet::from_flat(m, flat)
}

/// Parses an IDX label file.
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABEL_MAGIC {
        return Err(Error::parse(format!("labels: bad magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::parse(format!(
            "labels: truncated, expected {count} bytes, found {}",
            body.len()
        )));
    }
    Ok(body[..count].to_vec())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Image and label file paths of a split inside `dir`, using the
/// conventional `train-images-idx3-ubyte` naming.
pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}-images-idx3-ubyte", split.stem())),
        dir.join(format!("{}-labels-idx1-ubyte", split.stem())),
    )
}

/// Loads and binarizes a split. A label file, if present, must have the same count.
pub fn mnist_load(dir: &Path, split: Split) -> Result<SampleSet> {
    let (images, labels) = split_paths(dir, split);
    let samples = parse_images(&read_all(&images)?)?;
    if labels.exists() {
        let l = parse_labels(&read_all(&labels)?)?;
        if l.len() != samples.len() {
            return Err(Error::parse(format!(
                "count mismatch: {} images but {} labels",
                samples.len(),
                l.len()
            )));
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(count: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGE_MAGIC, count, 2, 2] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn binarizes_at_128() {
        let s = parse_images(&image_file(2, &[0, 127, 128, 255, 255, 1, 200, 64])).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.row(0), &[0, 0, 1, 1]);
        assert_eq!(s.row(1), &[1, 0, 1, 0]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut bad = image_file(1, &[0; 4]);
        bad[3] = 0x01;
        assert!(parse_images(&bad).is_err());
        assert!(parse_images(&image_file(2, &[0; 5])).is_err());
        assert!(parse_images(&[0, 0, 8]).is_err());
        let mut labels = LABEL_MAGIC.to_be_bytes().to_vec();
        labels.extend_from_slice(&3u32.to_be_bytes());
        labels.extend_from_slice(&[1, 2]);
        assert!(parse_labels(&labels).is_err());
        labels.push(7);
        assert_eq!(parse_labels(&labels).unwrap(), vec![1, 2, 7]);
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = std::env::temp_dir().join(format!("mnist-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (img, lab) = split_paths(&dir, Split::Test);
        std::fs::write(&img, image_file(1, &[0; 4])).unwrap();
        let mut labels = LABEL_MAGIC.to_be_bytes().to_vec();
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[1, 2]);
        std::fs::write(&lab, labels).unwrap();
        assert!(mnist_load(&dir, Split::Test).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
