//! The dense dilated despeckling network.

mod checkpoint;
mod config;
mod model;

pub use checkpoint::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub(crate) use checkpoint::{read_model_body, write_model_body, Reader, Writer};
pub use config::{DenseBlockConfig, ModelConfig, FULL_DILATIONS};
pub use model::{build_bdss, stacked_extent, Model};
