//! Dense channel-major tensors with 1-D or 2-D spatial extent.
//!
//! Every activation in the engine is a [`Tensor`]: a contiguous block of
//! `f32` values where the channel index varies slowest. For a 2-D tensor the
//! height index varies next and the width index fastest, so flattening and
//! reshaping round-trip exactly.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Channel count plus 1-D or 2-D spatial extents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub spatial: Vec<usize>,
}

impl Shape {
    pub fn new_1d(channels: usize, len: usize) -> Self {
        Shape { channels, spatial: vec![len] }
    }

    pub fn new_2d(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, spatial: vec![height, width] }
    }

    pub fn rank(&self) -> usize {
        self.spatial.len()
    }

    /// Elements in one channel plane.
    pub fn plane_elems(&self) -> usize {
        self.spatial.iter().product()
    }

    pub fn element_count(&self) -> usize {
        self.channels * self.plane_elems()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Shape("channel count must be positive".into()));
        }
        if self.spatial.is_empty() || self.spatial.len() > 2 {
            return Err(Error::Shape(format!(
                "spatial rank must be 1 or 2, got {}",
                self.spatial.len()
            )));
        }
        if self.spatial.iter().any(|&e| e == 0) {
            return Err(Error::Shape("spatial extents must be positive".into()));
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}", self.channels)?;
        for e in &self.spatial {
            write!(f, ", {e}")?;
        }
        write!(f, "]")
    }
}

/// Half-open index ranges, one per spatial axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub ranges: Vec<Range<usize>>,
}

impl Region {
    pub fn new_1d(r: Range<usize>) -> Self {
        Region { ranges: vec![r] }
    }

    pub fn new_2d(rows: Range<usize>, cols: Range<usize>) -> Self {
        Region { ranges: vec![rows, cols] }
    }

    /// Full-extent region for a shape.
    pub fn full(shape: &Shape) -> Self {
        Region { ranges: shape.spatial.iter().map(|&e| 0..e).collect() }
    }

    pub fn extents(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.end - r.start).collect()
    }

    pub fn elems(&self) -> usize {
        self.ranges.iter().map(|r| r.end - r.start).product()
    }

    fn check_for(&self, shape: &Shape) -> Result<()> {
        if self.ranges.len() != shape.rank() {
            return Err(Error::Range(format!(
                "region rank {} does not match tensor rank {}",
                self.ranges.len(),
                shape.rank()
            )));
        }
        for (axis, (r, &extent)) in self.ranges.iter().zip(&shape.spatial).enumerate() {
            if r.start >= r.end || r.end > extent {
                return Err(Error::Range(format!(
                    "axis {axis}: range [{}, {}) invalid for extent {extent}",
                    r.start, r.end
                )));
            }
        }
        Ok(())
    }

    /// Intersection of two regions of the same rank; errors if empty.
    pub fn intersect(&self, other: &Region) -> Result<Region> {
        if self.ranges.len() != other.ranges.len() {
            return Err(Error::Range("region rank mismatch".into()));
        }
        let mut ranges = Vec::with_capacity(self.ranges.len());
        for (a, b) in self.ranges.iter().zip(&other.ranges) {
            let start = a.start.max(b.start);
            let end = a.end.min(b.end);
            if start >= end {
                return Err(Error::Range("empty intersection".into()));
            }
            ranges.push(start..end);
        }
        Ok(Region { ranges })
    }
}

/// Contiguous channel-major block of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.element_count() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.element_count()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.element_count();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Flat index of `(channel, spatial...)` under the channel-major rule.
    pub fn index_of(&self, channel: usize, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.shape.rank());
        let mut offset = 0;
        for (&c, &e) in coords.iter().zip(&self.shape.spatial) {
            debug_assert!(c < e);
            offset = offset * e + c;
        }
        channel * self.shape.plane_elems() + offset
    }

    pub fn at(&self, channel: usize, coords: &[usize]) -> f32 {
        self.data[self.index_of(channel, coords)]
    }

    /// Copy of the region across all channels.
    pub fn slice(&self, region: &Region) -> Result<Tensor> {
        region.check_for(&self.shape)?;
        let out_shape = Shape { channels: self.shape.channels, spatial: region.extents() };
        let mut out = Vec::with_capacity(out_shape.element_count());
        match self.shape.rank() {
            1 => {
                let r = &region.ranges[0];
                for c in 0..self.shape.channels {
                    let base = c * self.shape.spatial[0];
                    out.extend_from_slice(&self.data[base + r.start..base + r.end]);
                }
            }
            2 => {
                let (rows, cols) = (&region.ranges[0], &region.ranges[1]);
                let (h, w) = (self.shape.spatial[0], self.shape.spatial[1]);
                for c in 0..self.shape.channels {
                    let plane = c * h * w;
                    for row in rows.clone() {
                        let base = plane + row * w;
                        out.extend_from_slice(&self.data[base + cols.start..base + cols.end]);
                    }
                }
            }
            _ => unreachable!("rank checked at construction"),
        }
        Tensor::new(out_shape, out)
    }

    /// Write `src` into the region of `self`, all channels.
    pub fn write_region(&mut self, region: &Region, src: &Tensor) -> Result<()> {
        region.check_for(&self.shape)?;
        if src.shape.channels != self.shape.channels || src.shape.spatial != region.extents() {
            return Err(Error::Shape(format!(
                "source shape {} does not match region extents {:?}",
                src.shape,
                region.extents()
            )));
        }
        match self.shape.rank() {
            1 => {
                let r = &region.ranges[0];
                let src_w = src.shape.spatial[0];
                for c in 0..self.shape.channels {
                    let base = c * self.shape.spatial[0];
                    self.data[base + r.start..base + r.end]
                        .copy_from_slice(&src.data[c * src_w..(c + 1) * src_w]);
                }
            }
            2 => {
                let (rows, cols) = (&region.ranges[0], &region.ranges[1]);
                let (h, w) = (self.shape.spatial[0], self.shape.spatial[1]);
                let (sh, sw) = (src.shape.spatial[0], src.shape.spatial[1]);
                for c in 0..self.shape.channels {
                    let plane = c * h * w;
                    let splane = c * sh * sw;
                    for (i, row) in rows.clone().enumerate() {
                        let dst = plane + row * w + cols.start;
                        let s = splane + i * sw;
                        self.data[dst..dst + sw].copy_from_slice(&src.data[s..s + sw]);
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }
}

/// Largest elementwise absolute difference between two same-shaped tensors.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> Result<f32> {
    if a.shape != b.shape {
        return Err(Error::Shape(format!(
            "shape mismatch: {} vs {}",
            a.shape, b.shape
        )));
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x - y).abs())
        .fold(0.0f32, f32::max))
}
