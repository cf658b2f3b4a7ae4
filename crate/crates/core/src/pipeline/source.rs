use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dataset::{load_index, CellRecord};
use crate::error::{Error, Result, Stage};
use crate::features::{extract, read_descriptor_dump, write_descriptor_dump, DenseGridSpec, Descriptors, Sampling};
use crate::imaging::{load_image, GrayImage};

use super::PipelineConfig;

/// File name of the dataset index inside a dataset directory.
pub const INDEX_FILE: &str = "labels.csv";

/// Where the pipeline reads cell images from.
///
/// `enter` is called whenever the pipeline moves to a new stage, before
/// any image of that stage is loaded; test harnesses use it to check
/// which stage touched which image.
pub trait ImageSource: Sync {
    fn load(&self, record: &CellRecord) -> Result<GrayImage>;

    fn enter(&self, _stage: Stage) {}
}

/// Images below a root directory, addressed by the index paths.
#[derive(Debug, Clone)]
pub struct DirSource {
    pub root: PathBuf,
}

impl ImageSource for DirSource {
    fn load(&self, record: &CellRecord) -> Result<GrayImage> {
        load_image(&self.root.join(&record.image_path))
    }
}

/// A dataset directory: `labels.csv` and the images it lists.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub records: Vec<CellRecord>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let records = load_index(&dir.join(INDEX_FILE))?;
        if records.is_empty() {
            return Err(Error::data(format!("{} lists no images", dir.join(INDEX_FILE).display())));
        }
        Ok(Self {
            root: dir.to_path_buf(),
            records,
        })
    }

    pub fn source(&self) -> DirSource {
        DirSource { root: self.root.clone() }
    }
}

/// Local descriptors of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFeatures {
    pub descriptors: Descriptors,
    /// Corner detection found nothing and the fallback dense grid was used.
    pub fallback: bool,
}

/// Extracts descriptors as configured. Corner sampling that finds no
/// corners falls back to a dense grid and flags the cell.
pub fn extract_cell(img: &GrayImage, config: &PipelineConfig) -> Result<CellFeatures> {
    let set = extract(img, config.sampling, config.descriptor)?;
    if set.descriptors.is_empty() && matches!(config.sampling, Sampling::Corners(_)) {
        let grid = Sampling::Dense(DenseGridSpec::new(config.corner_fallback_grid));
        let set = extract(img, grid, config.descriptor)?;
        return Ok(CellFeatures {
            descriptors: set.descriptors,
            fallback: true,
        });
    }
    if set.descriptors.is_empty() {
        return Err(Error::data("feature extraction produced no descriptors"));
    }
    Ok(CellFeatures {
        descriptors: set.descriptors,
        fallback: false,
    })
}

/// On-disk descriptor cache in the descriptor dump format, keyed by the
/// image pixels and the extraction parameters.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hex key of an image under an extraction setting.
    pub fn key(img: &GrayImage, config: &PipelineConfig) -> String {
        let mut h = Sha256::new();
        h.update((img.width() as u64).to_le_bytes());
        h.update((img.height() as u64).to_le_bytes());
        for v in img.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        let params = match config.sampling {
            Sampling::Corners(_) => format!(
                "{}|{}|fallback:{}",
                config.sampling, config.descriptor, config.corner_fallback_grid
            ),
            _ => format!("{}|{}", config.sampling, config.descriptor),
        };
        h.update(params.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, key: &str, fallback: bool) -> PathBuf {
        let suffix = if fallback { ".fallback.desc" } else { ".desc" };
        self.dir.join(format!("{key}{suffix}"))
    }

    /// Cached descriptors, extracting and storing them on a miss.
    pub fn get_or_extract(&self, img: &GrayImage, config: &PipelineConfig) -> Result<CellFeatures> {
        let key = Self::key(img, config);
        for fallback in [false, true] {
            let path = self.path(&key, fallback);
            if let Ok(file) = File::open(&path) {
                let mut reader = std::io::BufReader::new(file);
                if let Ok(descriptors) = read_descriptor_dump(&mut reader) {
                    return Ok(CellFeatures { descriptors, fallback });
                }
            }
        }
        let features = extract_cell(img, config)?;
        let path = self.path(&key, features.fallback);
        // Write to a unique temporary name first so concurrent writers never
        // expose a partial file.
        let tmp = self
            .dir
            .join(format!("{key}.{:?}.tmp", std::thread::current().id()).replace(['(', ')'], ""));
        let write = || -> std::io::Result<()> {
            let mut out = BufWriter::new(File::create(&tmp)?);
            write_descriptor_dump(&mut out, &features.descriptors)?;
            out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            std::fs::rename(&tmp, &path)
        };
        write().map_err(|e| Error::io(&path, e))?;
        Ok(features)
    }
}

/// Loads and describes one cell, through the cache when there is one.
pub(crate) fn cell_features(
    source: &dyn ImageSource,
    record: &CellRecord,
    config: &PipelineConfig,
    cache: Option<&FeatureCache>,
) -> Result<CellFeatures> {
    let img = source.load(record)?;
    let features = match cache {
        Some(c) => c.get_or_extract(&img, config),
        None => extract_cell(&img, config),
    };
    features.map_err(|e| match e {
        Error::Data(m) => Error::data(format!("{}: {m}", record.image_path)),
        e => e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank() -> GrayImage {
        GrayImage::filled(40, 40, 0.5).unwrap()
    }

    #[test]
    fn flat_image_with_corners_falls_back_to_dense_grid() {
        let mut c = PipelineConfig::default();
        c.set("sampling", "corners:5").unwrap();
        c.set("corner_fallback_grid", "4").unwrap();
        let f = extract_cell(&blank(), &c).unwrap();
        assert!(f.fallback);
        assert_eq!(f.descriptors.rows(), 16);
    }

    #[test]
    fn cache_hits_return_identical_descriptors() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path()).unwrap();
        let img = GrayImage::from_fn(48, 48, |x, y| ((x * 7 + y * 3) % 11) as f32 / 11.0).unwrap();
        let mut c = PipelineConfig::default();
        c.set("sampling", "dense:6").unwrap();
        let first = cache.get_or_extract(&img, &c).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let second = cache.get_or_extract(&img, &c).unwrap();
        assert_eq!(first, second);
        assert_eq!(first, extract_cell(&img, &c).unwrap());
        // A different setting is a different key.
        c.set("sampling", "dense:5").unwrap();
        cache.get_or_extract(&img, &c).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn cached_fallback_flag_survives() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path()).unwrap();
        let mut c = PipelineConfig::default();
        c.set("sampling", "corners:5").unwrap();
        c.set("corner_fallback_grid", "3").unwrap();
        assert!(cache.get_or_extract(&blank(), &c).unwrap().fallback);
        assert!(cache.get_or_extract(&blank(), &c).unwrap().fallback);
    }
}
