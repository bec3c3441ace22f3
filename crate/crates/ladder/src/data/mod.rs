//! MNIST ingestion, semi-supervised splits, and batch scheduling.
//!
//! Training examples load into an immutable [`Dataset`]; the test set loads
//! into the separate [`TestSet`] wrapper, whose contents are unreadable while
//! a [`TestSetSeal`] is active on the thread. Training and hyperparameter
//! search hold a seal for their whole duration, so no code path inside them
//! can touch test data even by accident.

mod idx;

pub use idx::{parse_idx, IdxPayload};

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Scalar, Tensor};
use sha2::{Digest, Sha256};
use std::cell::Cell;
use std::io::Read;
use std::path::{Path, PathBuf};

/// Validation examples carved from the training set.
pub const VALIDATION_SIZE: usize = 10_000;

/// One entry of the standard MNIST distribution, with the SHA-256 of its
/// decompressed payload.
pub struct MnistFile {
    pub name: &'static str,
    pub sha256: &'static str,
}

/// The four standard MNIST files.
pub const MNIST_FILES: [MnistFile; 4] = [
    MnistFile {
        name: "train-images-idx3-ubyte",
        sha256: "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    },
    MnistFile {
        name: "train-labels-idx1-ubyte",
        sha256: "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    },
    MnistFile {
        name: "t10k-images-idx3-ubyte",
        sha256: "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    },
    MnistFile {
        name: "t10k-labels-idx1-ubyte",
        sha256: "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    },
];

/// An immutable classification dataset with pixels scaled into `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Dataset<S: Scalar> {
    images: Tensor<S>,
    labels: Vec<usize>,
    classes: usize,
}

impl<S: Scalar> Dataset<S> {
    /// Wrap pre-scaled images and labels, checking every invariant.
    pub fn new(images: Tensor<S>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::Data(format!(
                "dataset has {} image rows but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if classes == 0 {
            return Err(Error::Data("dataset needs at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!("label {bad} out of range for {classes} classes")));
        }
        images.validate()?;
        if images
            .data()
            .iter()
            .any(|&v| v < S::zero() || v > S::one())
        {
            return Err(Error::Data("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self { images, labels, classes })
    }

    /// Build from parsed IDX payloads, scaling pixels by 1/255.
    pub fn from_idx(images: IdxPayload, labels: IdxPayload, classes: usize) -> Result<Self> {
        let (count, rows, cols, pixels) = match images {
            IdxPayload::Images { count, rows, cols, pixels } => (count, rows, cols, pixels),
            IdxPayload::Labels(_) => {
                return Err(Error::Data("expected an image payload, found labels".into()))
            }
        };
        let labels = match labels {
            IdxPayload::Labels(l) => l,
            IdxPayload::Images { .. } => {
                return Err(Error::Data("expected a label payload, found images".into()))
            }
        };
        let scale = S::from_f64(1.0 / 255.0);
        let data: Vec<S> = pixels.iter().map(|&p| S::from_f64(f64::from(p)) * scale).collect();
        let images = Tensor::new(count, rows * cols, data)?;
        Self::new(images, labels.into_iter().map(usize::from).collect(), classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Feature width (pixels per example).
    pub fn width(&self) -> usize {
        self.images.cols()
    }

    pub fn images(&self) -> &Tensor<S> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copy the rows at `idx` into a batch tensor plus matching labels.
    pub fn gather(&self, idx: &[usize]) -> Result<(Tensor<S>, Vec<usize>)> {
        let images = self.gather_images(idx)?;
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Ok((images, labels))
    }

    /// Copy just the feature rows at `idx`.
    pub fn gather_images(&self, idx: &[usize]) -> Result<Tensor<S>> {
        let cols = self.images.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= self.len() {
                return Err(Error::Data(format!("gather index {i} out of {}", self.len())));
            }
            data.extend_from_slice(self.images.row_slice(i));
        }
        Tensor::new(idx.len(), cols, data)
    }

    /// Per-class example counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

// ---------------------------------------------------------------------------
// Test-set access control
// ---------------------------------------------------------------------------

thread_local! {
    static SEAL_DEPTH: Cell<usize> = const { Cell::new(0) };
}

/// While alive, test-set contents are unreadable on this thread.
///
/// Training and search operations hold one for their whole body; workers on
/// other threads must create their own. Seals nest.
#[must_use = "the seal only protects while it is alive"]
pub struct TestSetSeal(());

impl TestSetSeal {
    pub fn activate() -> Self {
        SEAL_DEPTH.with(|d| d.set(d.get() + 1));
        Self(())
    }
}

impl Drop for TestSetSeal {
    fn drop(&mut self) {
        SEAL_DEPTH.with(|d| d.set(d.get() - 1));
    }
}

fn test_access_sealed() -> bool {
    SEAL_DEPTH.with(Cell::get) > 0
}

/// The held-out test set; contents are only reachable through [`Self::dataset`],
/// which fails while a [`TestSetSeal`] is active.
pub struct TestSet<S: Scalar> {
    data: Dataset<S>,
}

impl<S: Scalar> TestSet<S> {
    pub fn new(data: Dataset<S>) -> Self {
        Self { data }
    }

    /// Borrow the underlying data, unless sealed.
    pub fn dataset(&self) -> Result<&Dataset<S>> {
        if test_access_sealed() {
            return Err(Error::TestSetSealed(
                "test set is sealed during training and hyperparameter search".into(),
            ));
        }
        Ok(&self.data)
    }

    /// Number of examples (safe to expose while sealed).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

// ---------------------------------------------------------------------------
// File loading
// ---------------------------------------------------------------------------

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Read a file, transparently gunzipping.
fn read_decompressed(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Data(format!("{}: gzip decompression failed: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Find `name` under `dir`: prepared cache first, then raw, then gzipped.
pub fn locate(dir: &Path, name: &str) -> Result<PathBuf> {
    let candidates = [
        dir.join("prepared").join(name),
        dir.join(name),
        dir.join(format!("{name}.gz")),
    ];
    candidates
        .iter()
        .find(|p| p.is_file())
        .cloned()
        .ok_or_else(|| {
            Error::Data(format!(
                "{name}[.gz] not found under {}; fetch the four standard MNIST files there",
                dir.display()
            ))
        })
}

/// Load one standard file with digest verification.
pub fn load_verified(dir: &Path, file: &MnistFile) -> Result<IdxPayload> {
    let path = locate(dir, file.name)?;
    let payload = read_decompressed(&path)?;
    let got = sha256_hex(&payload);
    if got != file.sha256 {
        return Err(Error::Data(format!(
            "{}: SHA-256 {got} does not match the pinned {}",
            path.display(),
            file.sha256
        )));
    }
    parse_idx(&payload)
}

/// Load the 60000-example training set from `dir`, digest-verified.
pub fn load_mnist_train<S: Scalar>(dir: &Path) -> Result<Dataset<S>> {
    let images = load_verified(dir, &MNIST_FILES[0])?;
    let labels = load_verified(dir, &MNIST_FILES[1])?;
    Dataset::from_idx(images, labels, 10)
}

/// Load the 10000-example test set from `dir`, digest-verified.
pub fn load_mnist_test<S: Scalar>(dir: &Path) -> Result<TestSet<S>> {
    let images = load_verified(dir, &MNIST_FILES[2])?;
    let labels = load_verified(dir, &MNIST_FILES[3])?;
    Ok(TestSet::new(Dataset::from_idx(images, labels, 10)?))
}

/// Verify all four files and write decompressed copies plus a manifest under
/// `dir/prepared/`; returns `(name, example count)` per file.
pub fn prepare_cache(dir: &Path) -> Result<Vec<(String, usize)>> {
    let out_dir = dir.join("prepared");
    std::fs::create_dir_all(&out_dir)?;
    let mut summary = Vec::new();
    let mut manifest = Vec::new();
    for file in &MNIST_FILES {
        let path = locate(dir, file.name)?;
        let payload = read_decompressed(&path)?;
        let got = sha256_hex(&payload);
        if got != file.sha256 {
            return Err(Error::Data(format!(
                "{}: SHA-256 {got} does not match the pinned {}",
                path.display(),
                file.sha256
            )));
        }
        let count = match parse_idx(&payload)? {
            IdxPayload::Images { count, .. } => count,
            IdxPayload::Labels(l) => l.len(),
        };
        std::fs::write(out_dir.join(file.name), &payload)?;
        manifest.push(serde_json::json!({
            "name": file.name,
            "sha256": file.sha256,
            "examples": count,
        }));
        summary.push((file.name.to_string(), count));
    }
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_vec_pretty(&serde_json::Value::Array(manifest))?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Semi-supervised splits
// ---------------------------------------------------------------------------

/// Index sets of one semi-supervised split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemiSplit {
    /// Examples whose labels the trainer may see (balanced per class, except
    /// in the fully supervised case).
    pub labeled: Vec<usize>,
    /// Reconstruction pool; one pass over it defines an epoch.
    pub unlabeled: Vec<usize>,
    /// Held-out validation examples, disjoint from `labeled`.
    pub validation: Vec<usize>,
    /// Seed the split was drawn with.
    pub seed: u64,
}

/// Carve a validation set and a balanced labeled subset out of `train`.
///
/// The split shuffles all indices with a substream of `seed`, takes
/// `validation_size` for validation, and picks `n_labeled / classes` examples
/// per class from the remaining pool. `n_labeled` equal to the whole pool
/// selects everything (fully supervised) without the balance requirement.
/// With `labeled_in_unlabeled`, the unlabeled pool keeps the labeled
/// examples' features (their labels stay hidden from the reconstruction
/// path by construction); otherwise they are removed from the pool.
pub fn make_split<S: Scalar>(
    train: &Dataset<S>,
    n_labeled: usize,
    validation_size: usize,
    seed: u64,
    labeled_in_unlabeled: bool,
) -> Result<SemiSplit> {
    let n = train.len();
    if validation_size >= n {
        return Err(Error::Config(format!(
            "validation size {validation_size} must be below the dataset size {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    RngStream::new(seed).substream("split/perm").shuffle(&mut perm);
    let validation = perm[..validation_size].to_vec();
    let pool = &perm[validation_size..];

    let labeled: Vec<usize> = if n_labeled == pool.len() {
        pool.to_vec()
    } else {
        let classes = train.classes();
        if n_labeled == 0 || n_labeled % classes != 0 {
            return Err(Error::Config(format!(
                "labeled count {n_labeled} must be a positive multiple of {classes}"
            )));
        }
        let per_class = n_labeled / classes;
        let mut counts = vec![0usize; classes];
        let mut chosen = Vec::with_capacity(n_labeled);
        for &i in pool {
            let c = train.labels()[i];
            if counts[c] < per_class {
                counts[c] += 1;
                chosen.push(i);
                if chosen.len() == n_labeled {
                    break;
                }
            }
        }
        if chosen.len() != n_labeled {
            let (short, have) = counts
                .iter()
                .enumerate()
                .min_by_key(|(_, &c)| c)
                .map(|(c, &have)| (c, have))
                .expect("at least one class");
            return Err(Error::Data(format!(
                "pool cannot supply {per_class} labeled examples per class (class {short} has {have})"
            )));
        }
        chosen
    };

    // Fully supervised without pool reuse leaves the unlabeled pool empty;
    // that is legitimate, reconstruction then runs on the labeled batches.
    let unlabeled = if labeled_in_unlabeled {
        pool.to_vec()
    } else {
        let labeled_set: std::collections::HashSet<usize> = labeled.iter().copied().collect();
        pool.iter().copied().filter(|i| !labeled_set.contains(i)).collect()
    };

    Ok(SemiSplit { labeled, unlabeled, validation, seed })
}

// ---------------------------------------------------------------------------
// Batch scheduling
// ---------------------------------------------------------------------------

/// Index lists for one optimization step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepIndices {
    pub labeled: Vec<usize>,
    /// Empty in fully supervised mode (reconstruction reuses the labeled
    /// batch).
    pub unlabeled: Vec<usize>,
}

/// Plan one epoch of batches.
///
/// With `batch_unlabeled >= 1`, the epoch is one shuffled pass over the
/// unlabeled pool (each example exactly once); labeled examples are drawn
/// alongside, recycling with a fresh shuffle whenever the labeled pool runs
/// out. With `batch_unlabeled == 0`, the epoch is one shuffled pass over the
/// labeled pool and the unlabeled lists stay empty.
pub fn epoch_batches(
    split: &SemiSplit,
    batch_labeled: usize,
    batch_unlabeled: usize,
    rng: &RngStream,
) -> Result<Vec<StepIndices>> {
    if batch_labeled == 0 {
        return Err(Error::Config("labeled batch size must be positive".into()));
    }
    if split.labeled.is_empty() {
        return Err(Error::Data("labeled pool is empty".into()));
    }

    if batch_unlabeled == 0 {
        let mut order = split.labeled.clone();
        rng.substream("lab0").shuffle(&mut order);
        return Ok(order
            .chunks(batch_labeled)
            .map(|c| StepIndices { labeled: c.to_vec(), unlabeled: Vec::new() })
            .collect());
    }

    if split.unlabeled.is_empty() {
        return Err(Error::Data("unlabeled pool is empty".into()));
    }
    let mut unlabeled = split.unlabeled.clone();
    rng.substream("unl").shuffle(&mut unlabeled);

    let mut steps = Vec::with_capacity(unlabeled.len().div_ceil(batch_unlabeled));
    let mut lab_order = split.labeled.clone();
    let mut lab_pos = lab_order.len(); // force a shuffle before first use
    let mut cycle = 0u64;
    for chunk in unlabeled.chunks(batch_unlabeled) {
        let mut labeled = Vec::with_capacity(batch_labeled);
        while labeled.len() < batch_labeled {
            if lab_pos == lab_order.len() {
                rng.substream(&format!("lab{cycle}")).shuffle(&mut lab_order);
                cycle += 1;
                lab_pos = 0;
            }
            let take = (batch_labeled - labeled.len()).min(lab_order.len() - lab_pos);
            labeled.extend_from_slice(&lab_order[lab_pos..lab_pos + take]);
            lab_pos += take;
        }
        steps.push(StepIndices { labeled, unlabeled: chunk.to_vec() });
    }
    Ok(steps)
}
