//! File formats and run configuration.

mod checkpoint;
mod config;
mod cxt;
mod image;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{key_spec, KeyKind, KeySpec, MaskSource, RunConfig, KEYS};
pub use cxt::{encode_tensor, load_mask, load_maps, load_tensor, save_mask, save_maps, save_tensor, CxtFile, CxtPayload, MAGIC};
pub use image::{export_png, quantize, to_gray, window_bounds, Window};
