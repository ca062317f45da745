//! Paired datasets, synthetic corruption and deterministic batch sampling.
//!
//! A dataset root holds `low/<id>.<ext>` and `normal/<id>.<ext>` with
//! matching file names. Batches are a pure function of the loaded pairs,
//! the seed and the step index, so training can resume mid-epoch and a
//! background prefetcher yields exactly the single-threaded sequence.

mod corrupt;

use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

pub use corrupt::{
    add_gaussian_noise, add_poisson_noise, simulate_misalignment, translate, CorruptionRecipe,
    Noise, Shift,
};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::rng::{self, derive_seed, tag};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub id: String,
    pub low: ImageTensor,
    pub normal: ImageTensor,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Eval,
}

/// One matched pair of files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairEntry {
    pub id: String,
    /// File name shared by both directories.
    pub file: String,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: Split,
    pub pairs: Vec<PairEntry>,
    pub recipe: CorruptionRecipe,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.id.as_str())
    }

    pub fn low_path(&self, entry: &PairEntry) -> PathBuf {
        self.root.join("low").join(&entry.file)
    }

    pub fn normal_path(&self, entry: &PairEntry) -> PathBuf {
        self.root.join("normal").join(&entry.file)
    }

    pub fn load_pair(&self, index: usize) -> Result<ImagePair> {
        let entry = &self.pairs[index];
        Ok(ImagePair {
            id: entry.id.clone(),
            low: ImageTensor::load(&self.low_path(entry))?,
            normal: ImageTensor::load(&self.normal_path(entry))?,
        })
    }

    pub fn with_recipe(mut self, recipe: CorruptionRecipe) -> Self {
        self.recipe = recipe;
        self
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

fn list_images(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if path.is_file() && is_image {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

fn image_dims(path: &Path) -> Result<(usize, usize)> {
    let format_err = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let (w, h) = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .into_dimensions()
        .map_err(|e| format_err(e.to_string()))?;
    Ok((h as usize, w as usize))
}

/// Matches `root/low` against `root/normal` by file name, in lexicographic
/// order. Every image is probed so unreadable files fail here rather than
/// mid-training.
pub fn load_pairs(root: &Path) -> Result<DatasetManifest> {
    let low_dir = root.join("low");
    let normal_dir = root.join("normal");
    let low = list_images(&low_dir)?;
    let normal = list_images(&normal_dir)?;
    for (names, dir, other) in [(&low, &low_dir, &normal_dir), (&normal, &normal_dir, &low_dir)] {
        if let Some(orphan) = names.iter().find(|n| !other.join(n).is_file()) {
            return Err(Error::MissingCounterpart {
                path: dir.join(orphan),
                expected_dir: other.clone(),
            });
        }
    }
    let mut pairs = Vec::with_capacity(low.len());
    for file in low {
        let (h, w) = image_dims(&low_dir.join(&file))?;
        let dims = image_dims(&normal_dir.join(&file))?;
        if dims != (h, w) {
            return Err(Error::InvalidImage(format!(
                "pair `{file}`: low is {h}x{w} but normal is {}x{}",
                dims.0, dims.1
            )));
        }
        let id = Path::new(&file)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&file)
            .to_string();
        if pairs.iter().any(|p: &PairEntry| p.id == id) {
            return Err(Error::InvalidArgument(format!(
                "pair id `{id}` appears with two extensions"
            )));
        }
        pairs.push(PairEntry {
            id,
            file,
            height: h,
            width: w,
        });
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        split: Split::Train,
        pairs,
        recipe: CorruptionRecipe::default(),
    })
}

/// Patch sampling options.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchSpec {
    pub batch: usize,
    pub patch: usize,
    pub flip: bool,
}

/// Pairs held in memory, ready for sampling.
#[derive(Clone, Debug)]
pub struct Dataset {
    pairs: Vec<ImagePair>,
    recipe: CorruptionRecipe,
}

impl Dataset {
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let pairs = (0..manifest.len())
            .map(|i| manifest.load_pair(i))
            .collect::<Result<_>>()?;
        Ok(Self::from_pairs(pairs, manifest.recipe))
    }

    pub fn from_pairs(pairs: Vec<ImagePair>, recipe: CorruptionRecipe) -> Self {
        Dataset { pairs, recipe }
    }

    pub fn pairs(&self) -> &[ImagePair] {
        &self.pairs
    }

    pub fn validate(&self, spec: &BatchSpec) -> Result<()> {
        if spec.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.pairs.is_empty() {
            return Err(Error::InvalidArgument("no pairs to sample from".into()));
        }
        if spec.patch == 0 || spec.patch % 4 != 0 {
            return Err(Error::shape(format!(
                "patch size {} must be a positive multiple of 4",
                spec.patch
            )));
        }
        for p in &self.pairs {
            let (h, w) = p.low.dims();
            if spec.patch > h.min(w) {
                return Err(Error::shape(format!(
                    "patch size {} exceeds pair `{}` of size {h}x{w}",
                    spec.patch, p.id
                )));
            }
            if 2 * self.recipe.max_shift >= h.min(w) {
                return Err(Error::InvalidArgument(format!(
                    "max shift {} too large for pair `{}` of size {h}x{w}",
                    self.recipe.max_shift, p.id
                )));
            }
        }
        Ok(())
    }

    /// Which pair feeds global sample `g`: epochs visit every pair once in
    /// an order shuffled per epoch.
    fn pair_index(&self, seed: u64, g: u64) -> (u64, usize) {
        let n = self.pairs.len() as u64;
        let epoch = g / n;
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[tag::EPOCH_ORDER, epoch]));
        (epoch, order[(g % n) as usize])
    }

    /// Batch for `step`. The normal image of each pair gets one random shift
    /// per epoch, the low image fresh noise per sample, and both share one
    /// crop window and flip decision.
    pub fn batch(&self, seed: u64, step: u64, spec: &BatchSpec) -> Result<Vec<ImagePair>> {
        self.validate(spec)?;
        let mut out = Vec::with_capacity(spec.batch);
        for b in 0..spec.batch {
            let g = step * spec.batch as u64 + b as u64;
            let (epoch, index) = self.pair_index(seed, g);
            let pair = &self.pairs[index];

            let mut normal = pair.normal.clone();
            if self.recipe.max_shift > 0 {
                let s = derive_seed(seed, &[tag::MISALIGN, epoch, index as u64]);
                normal = simulate_misalignment(&normal, self.recipe.max_shift, s)?.0;
            }
            let low = self
                .recipe
                .noise
                .apply(&pair.low, derive_seed(seed, &[tag::NOISE, g]))?;

            let (h, w) = low.dims();
            let mut rng = rng::stream(seed, &[tag::CROP, g]);
            let top = rng.random_range(0..=h - spec.patch);
            let left = rng.random_range(0..=w - spec.patch);
            let flip = spec.flip && rng.random_bool(0.5);
            let window = |img: &ImageTensor| -> Result<ImageTensor> {
                let c = img.crop(top, left, spec.patch, spec.patch)?;
                Ok(if flip { c.flip_horizontal() } else { c })
            };
            out.push(ImagePair {
                id: pair.id.clone(),
                low: window(&low)?,
                normal: window(&normal)?,
            });
        }
        Ok(out)
    }
}

/// Produces batches for consecutive steps on a background thread. The
/// channel is FIFO with a single producer, so the sequence is identical to
/// calling [`Dataset::batch`] in a loop.
pub struct Prefetcher {
    rx: Option<Receiver<Result<Vec<ImagePair>>>>,
    handle: Option<JoinHandle<()>>,
}

impl Prefetcher {
    pub fn spawn(dataset: Arc<Dataset>, seed: u64, steps: std::ops::Range<u64>, spec: BatchSpec, depth: usize) -> Self {
        let (tx, rx) = mpsc::sync_channel(depth.max(1));
        let handle = std::thread::spawn(move || {
            for step in steps {
                if tx.send(dataset.batch(seed, step, &spec)).is_err() {
                    break;
                }
            }
        });
        Prefetcher {
            rx: Some(rx),
            handle: Some(handle),
        }
    }

    /// Next batch, or `None` once the step range is exhausted.
    pub fn next_batch(&mut self) -> Option<Result<Vec<ImagePair>>> {
        self.rx.as_ref()?.recv().ok()
    }
}

impl Drop for Prefetcher {
    fn drop(&mut self) {
        self.rx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
