#![allow(dead_code)]

use std::path::Path;
use std::sync::Mutex;

use elpv_core::dataset::CellRecord;
use elpv_core::imaging::GrayImage;
use elpv_core::pipeline::{DirSource, ImageSource, PipelineConfig};
use elpv_core::synthetic::{write_synthetic_dataset, SyntheticSpec};
use elpv_core::{Result, Stage};

/// Small synthetic dataset written to `dir`.
pub fn small_dataset(dir: &Path, cells: usize) -> Vec<CellRecord> {
    write_synthetic_dataset(
        dir,
        SyntheticSpec {
            cells,
            side: 64,
            seed: 5,
        },
    )
    .unwrap()
}

/// A configuration scaled down for test-sized data.
pub fn small_config() -> PipelineConfig {
    PipelineConfig::from_key_values(
        "sampling = dense:8\n\
         K = 8\n\
         m = 2\n\
         codebook_sample = 2000\n\
         kmeans_batch = 256\n\
         kmeans_iterations = 30\n\
         grid_c = 0.1,1,10\n\
         folds = 3\n",
    )
    .unwrap()
}

/// Records the stage in effect at every image load.
pub struct RecordingSource {
    pub inner: DirSource,
    pub stage: Mutex<Option<Stage>>,
    pub stages: Mutex<Vec<Stage>>,
    pub loads: Mutex<Vec<(Option<Stage>, String)>>,
}

impl RecordingSource {
    pub fn new(root: &Path) -> Self {
        Self {
            inner: DirSource { root: root.to_path_buf() },
            stage: Mutex::new(None),
            stages: Mutex::new(Vec::new()),
            loads: Mutex::new(Vec::new()),
        }
    }
}

impl ImageSource for RecordingSource {
    fn load(&self, record: &CellRecord) -> Result<GrayImage> {
        let stage = *self.stage.lock().unwrap();
        self.loads.lock().unwrap().push((stage, record.image_path.clone()));
        self.inner.load(record)
    }

    fn enter(&self, stage: Stage) {
        *self.stage.lock().unwrap() = Some(stage);
        self.stages.lock().unwrap().push(stage);
    }
}
