//! Binary tensor container, checkpoints and JSON files.

mod checkpoint;
mod container;
mod json;

pub use checkpoint::{
    bank_container, bank_from_container, checkpoint_container, load_checkpoint, pipeline_from_container,
    save_checkpoint,
};
pub use container::{DType, TensorContainer, TensorData};
pub use json::{read_json, write_json};
