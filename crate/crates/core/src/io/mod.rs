//! File formats: station and observation tables, ESRI ASCII rasters and
//! fitted-model files.

pub mod model_file;
pub mod raster;
pub mod stations;

pub use model_file::{ModelFile, MODEL_FORMAT, MODEL_VERSION};
pub use raster::Raster;
pub use stations::{read_dataset, read_observations, read_stations, Dataset};
