//! IDX binary format as published for MNIST and Fashion-MNIST: a big-endian
//! magic number (`0x0000_08NN`, NN = dimension count), big-endian `u32`
//! dimension sizes, then unsigned bytes.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

/// Returns `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(path, format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::format(path, "zero-sized image dimension"));
    }
    let body = &bytes[16..];
    let expected = count * rows * cols;
    if body.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} pixel bytes, found {}", body.len()),
        ));
    }
    Ok((count, rows, cols, body.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(path, format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::format(
            path,
            format!("expected {count} label bytes, found {}", body.len()),
        ));
    }
    Ok(body.to_vec())
}

/// Loads an image/label file pair. Pixels are scaled to `[0, 1]` and laid
/// out as `(N, 1, rows, cols)`. At least 10 classes are assumed.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let (count, rows, cols, pixels) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {} labels",
            images_path.display(),
            labels_path.display(),
            labels.len()
        )));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let features = Tensor::new(vec![count, 1, rows, cols], data)?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    LabeledDataset::new(features, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    fn images_fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3];
        b.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
        b.extend_from_slice(&[255, 0, 255, 0, 255, 0]);
        b
    }

    #[test]
    fn two_image_fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &images_fixture());
        let lbl = write(dir.path(), "lbl", &[0, 0, 8, 1, 0, 0, 0, 2, 7, 2]);
        let d = load_idx(&img, &lbl).unwrap();
        assert_eq!(d.features().shape(), &[2, 1, 2, 3]);
        assert_eq!(d.labels(), &[7, 2]);
        assert_eq!(d.num_classes(), 10);
        assert_eq!(d.features().row(0), &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(d.features().row(1), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn truncated_and_bad_magic_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut short = images_fixture();
        short.pop();
        let img = write(dir.path(), "img", &short);
        let lbl = write(dir.path(), "lbl", &[0, 0, 8, 1, 0, 0, 0, 2, 7, 2]);
        assert!(matches!(load_idx(&img, &lbl), Err(Error::Format { .. })));

        let header_only = write(dir.path(), "hdr", &[0, 0, 8, 3, 0, 0]);
        assert!(matches!(load_idx(&header_only, &lbl), Err(Error::Format { .. })));

        let img = write(dir.path(), "img2", &images_fixture());
        let swapped = write(dir.path(), "lbl2", &[0, 0, 8, 3, 0, 0, 0, 2, 7, 2]);
        assert!(matches!(load_idx(&img, &swapped), Err(Error::Format { .. })));
    }

    #[test]
    fn count_mismatch_is_a_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &images_fixture());
        let lbl = write(dir.path(), "lbl", &[0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3]);
        assert!(matches!(load_idx(&img, &lbl), Err(Error::Consistency(_))));
    }
}
