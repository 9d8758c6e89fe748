pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod disc_background;
pub mod disc_pedestrian;
pub mod error;
pub mod generator;
pub mod losses;
pub mod nn;
pub mod scene;
pub mod synthesis;
pub mod tensor;
pub mod toyscapes;
pub mod trainer;
