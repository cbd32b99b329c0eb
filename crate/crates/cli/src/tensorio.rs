//! Model-input tensor files: a small JSON format carrying one tensor.

use serde::{Deserialize, Serialize};
use std::path::Path;
use tinyad_core::tensor::{Shape, Tensor};
use tinyad_core::{Error, Result};

#[derive(Serialize, Deserialize)]
struct TensorFile {
    channels: usize,
    spatial: Vec<usize>,
    data: Vec<f32>,
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let text = std::fs::read_to_string(path)?;
    let file: TensorFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Tensor::new(Shape { channels: file.channels, spatial: file.spatial }, file.data)
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let file = TensorFile {
        channels: tensor.shape().channels,
        spatial: tensor.shape().spatial.clone(),
        data: tensor.data().to_vec(),
    };
    std::fs::write(path, serde_json::to_string(&file).expect("tensor serializes"))?;
    Ok(())
}
