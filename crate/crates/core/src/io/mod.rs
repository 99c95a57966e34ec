//! File formats: ENVI cubes, spectrum CSV, TOML configuration and map outputs.

pub mod config;
pub mod envi;
pub mod image;
pub mod spectrum;

pub use config::{load_device, read_sample_index, DeviceFile, Project, ProjectConfig, SampleEntry};
pub use envi::{read_cube, read_header, write_cube, EnviHeader};
pub use image::{read_grid_csv, write_grid_csv, write_index_png, write_mask_png};
pub use spectrum::{read_spectrum, write_spectrum};
