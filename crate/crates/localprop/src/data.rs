//! MNIST-style IDX ingestion, deterministic splits and mini-batching.
//!
//! Files are the standard big-endian IDX containers (image magic
//! `0x00000803`, label magic `0x00000801`); gzip-compressed files are
//! detected by extension and decompressed transparently. Pixels land in
//! `[0, 1]` after division by 255.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::bufread::GzDecoder;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::derive_seed;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// An in-memory image/label set. Immutable after load.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `[n, rows*cols]` pixels in `[0, 1]`, row-major flattening.
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    pub name: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.images.ncols()
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, indices: &[usize], name: &str) -> Dataset {
        let images = self.images.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset {
            images,
            labels,
            name: name.to_string(),
        }
    }
}

/// Validation holdout description.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub validation_count: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            validation_count: 2000,
            seed: 0,
        }
    }
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

fn read_u32_be(reader: &mut dyn Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|e| Error::IdxTruncated {
        path: path.display().to_string(),
        detail: format!("while reading {what}: {e}"),
    })?;
    Ok(u32::from_be_bytes(buf))
}

fn read_exact_counted(reader: &mut dyn Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    reader.read_exact(buf).map_err(|e| Error::IdxTruncated {
        path: path.display().to_string(),
        detail: format!("while reading {what}: {e}"),
    })
}

/// Load one image file + one label file into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path, name: &str) -> Result<Dataset> {
    let mut img = open_maybe_gz(images_path)?;
    let magic = read_u32_be(&mut img, images_path, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::IdxMagic {
            path: images_path.display().to_string(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(&mut img, images_path, "image count")? as usize;
    let rows = read_u32_be(&mut img, images_path, "row count")? as usize;
    let cols = read_u32_be(&mut img, images_path, "column count")? as usize;
    let mut pixels = vec![0u8; n * rows * cols];
    read_exact_counted(&mut img, &mut pixels, images_path, "pixel data")?;

    let mut lab = open_maybe_gz(labels_path)?;
    let magic = read_u32_be(&mut lab, labels_path, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::IdxMagic {
            path: labels_path.display().to_string(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let n_labels = read_u32_be(&mut lab, labels_path, "label count")? as usize;
    if n_labels != n {
        return Err(Error::IdxCountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    let mut labels = vec![0u8; n_labels];
    read_exact_counted(&mut lab, &mut labels, labels_path, "label data")?;

    let data: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let images = Array2::from_shape_vec((n, rows * cols), data)
        .expect("pixel buffer matches header dims");
    Ok(Dataset {
        images,
        labels,
        name: name.to_string(),
    })
}

/// Deterministic disjoint train/validation split: the validation set is the
/// last `validation_count` rows of a seeded permutation.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if spec.validation_count >= ds.len() {
        return Err(Error::Config(format!(
            "validation_count {} must be below the dataset size {}",
            spec.validation_count,
            ds.len()
        )));
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);
    let cut = ds.len() - spec.validation_count;
    let train = ds.subset(&indices[..cut], &format!("{}-train", ds.name));
    let val = ds.subset(&indices[cut..], &format!("{}-val", ds.name));
    Ok((train, val))
}

/// One-hot encode labels to width [`NUM_CLASSES`].
pub fn one_hot(labels: &[u8]) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), NUM_CLASSES));
    for (r, &l) in labels.iter().enumerate() {
        out[[r, l as usize]] = 1.0;
    }
    out
}

/// Epoch-seeded mini-batch iterator. Shuffles once per epoch and includes
/// the final short batch.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl<'a> BatchIter<'a> {
    /// Indices visited this epoch (a permutation of `0..len`).
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = (Array2<f64>, Array2<f64>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let idx = &self.order[self.cursor..end];
        self.cursor = end;
        let x = self.ds.images.select(Axis(0), idx);
        let labels: Vec<u8> = idx.iter().map(|&i| self.ds.labels[i]).collect();
        Some((x, one_hot(&labels)))
    }
}

/// Mini-batches for one epoch, shuffled by `(seed, epoch)`.
pub fn batches(ds: &Dataset, batch_size: usize, shuffle_seed: u64, epoch: usize) -> BatchIter<'_> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(shuffle_seed, 0xba7c, epoch as u64));
    order.shuffle(&mut rng);
    BatchIter {
        ds,
        order,
        batch_size,
        cursor: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_fixture(dir: &Path, gz: bool) -> (std::path::PathBuf, std::path::PathBuf) {
        // two 2x2 "images" with known bytes and labels [3, 9]
        let mut img_bytes = Vec::new();
        img_bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        img_bytes.extend_from_slice(&2u32.to_be_bytes());
        img_bytes.extend_from_slice(&2u32.to_be_bytes());
        img_bytes.extend_from_slice(&2u32.to_be_bytes());
        img_bytes.extend_from_slice(&[0, 255, 128, 64, 255, 0, 0, 32]);
        let mut lab_bytes = Vec::new();
        lab_bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lab_bytes.extend_from_slice(&2u32.to_be_bytes());
        lab_bytes.extend_from_slice(&[3, 9]);

        let (img_path, lab_path) = if gz {
            (dir.join("img.idx.gz"), dir.join("lab.idx.gz"))
        } else {
            (dir.join("img.idx"), dir.join("lab.idx"))
        };
        for (path, bytes) in [(&img_path, &img_bytes), (&lab_path, &lab_bytes)] {
            if gz {
                let f = File::create(path).unwrap();
                let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::fast());
                enc.write_all(bytes).unwrap();
                enc.finish().unwrap();
            } else {
                std::fs::write(path, bytes).unwrap();
            }
        }
        (img_path, lab_path)
    }

    #[test]
    fn loads_crafted_fixture_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for gz in [false, true] {
            let (img, lab) = write_idx_fixture(dir.path(), gz);
            let ds = load_idx(&img, &lab, "fixture").unwrap();
            assert_eq!(ds.len(), 2);
            assert_eq!(ds.feature_dim(), 4);
            assert_eq!(ds.labels, vec![3, 9]);
            let expected = [
                [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0],
                [1.0, 0.0, 0.0, 32.0 / 255.0],
            ];
            for r in 0..2 {
                for c in 0..4 {
                    assert_eq!(ds.images[[r, c]], expected[r][c], "gz={gz} [{r},{c}]");
                }
            }
        }
    }

    #[test]
    fn wrong_magic_is_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx_fixture(dir.path(), false);
        // feed the image file where labels belong: magic 0x803 instead of 0x801
        let err = load_idx(&img, &img, "bad").unwrap_err();
        assert!(matches!(err, Error::IdxMagic { found, .. } if found == IMAGE_MAGIC));
        let err = load_idx(&lab, &lab, "bad").unwrap_err();
        assert!(matches!(err, Error::IdxMagic { found, .. } if found == LABEL_MAGIC));
    }

    #[test]
    fn truncated_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx_fixture(dir.path(), false);
        let bytes = std::fs::read(&img).unwrap();
        let cut = dir.path().join("cut.idx");
        std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_idx(&cut, &lab, "cut").unwrap_err();
        assert!(matches!(err, Error::IdxTruncated { .. }));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (img, _) = write_idx_fixture(dir.path(), false);
        let mut lab_bytes = Vec::new();
        lab_bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lab_bytes.extend_from_slice(&3u32.to_be_bytes());
        lab_bytes.extend_from_slice(&[1, 2, 3]);
        let lab3 = dir.path().join("lab3.idx");
        std::fs::write(&lab3, &lab_bytes).unwrap();
        let err = load_idx(&img, &lab3, "mismatch").unwrap_err();
        assert!(matches!(
            err,
            Error::IdxCountMismatch { images: 2, labels: 3 }
        ));
    }

    fn synthetic(n: usize) -> Dataset {
        let images = Array2::from_shape_fn((n, 3), |(r, c)| (r * 3 + c) as f64);
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        Dataset {
            images,
            labels,
            name: "synthetic".into(),
        }
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seed_stable() {
        let ds = synthetic(100);
        let spec = SplitSpec {
            validation_count: 20,
            seed: 5,
        };
        let (tr_a, va_a) = split(&ds, &spec).unwrap();
        let (tr_b, va_b) = split(&ds, &spec).unwrap();
        assert_eq!(tr_a.images, tr_b.images);
        assert_eq!(va_a.images, va_b.images);
        assert_eq!(tr_a.len(), 80);
        assert_eq!(va_a.len(), 20);
        // first-feature values identify original rows (row r has value 3r)
        let mut seen: Vec<i64> = tr_a
            .images
            .column(0)
            .iter()
            .chain(va_a.images.column(0).iter())
            .map(|&v| v as i64)
            .collect();
        seen.sort_unstable();
        let expected: Vec<i64> = (0..100).map(|r| 3 * r).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn split_rejects_oversized_validation() {
        let ds = synthetic(10);
        let spec = SplitSpec {
            validation_count: 10,
            seed: 0,
        };
        assert!(split(&ds, &spec).is_err());
    }

    #[test]
    fn batches_cover_a_permutation_with_short_tail() {
        let ds = synthetic(103);
        let iter = batches(&ds, 25, 7, 0);
        let mut visited: Vec<usize> = iter.order().to_vec();
        let sizes: Vec<usize> = batches(&ds, 25, 7, 0).map(|(x, _)| x.nrows()).collect();
        assert_eq!(sizes, vec![25, 25, 25, 25, 3]);
        visited.sort_unstable();
        assert_eq!(visited, (0..103).collect::<Vec<_>>());
        // different epoch, different order
        assert_ne!(batches(&ds, 25, 7, 0).order(), batches(&ds, 25, 7, 1).order());
        // same epoch twice, identical order
        assert_eq!(batches(&ds, 25, 7, 4).order(), batches(&ds, 25, 7, 4).order());
    }

    #[test]
    fn one_hot_width_ten() {
        let y = one_hot(&[3]);
        assert_eq!(
            y.row(0).to_vec(),
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }
}
