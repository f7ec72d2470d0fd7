//! Model-free per-sample feature vectors.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{CodecError, ImageStack, TensorFile};
use crate::numeric::Matrix;
use crate::{Error, Result};

/// Where a feature matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Pixel,
    Hog,
    /// Produced outside this crate (e.g. a pretrained network) and read from DIVT.
    External,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 3] = [FeatureSource::Pixel, FeatureSource::Hog, FeatureSource::External];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSource::Pixel => "pixel",
            FeatureSource::Hog => "hog",
            FeatureSource::External => "external",
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pixel" | "pixels" => Ok(FeatureSource::Pixel),
            "hog" => Ok(FeatureSource::Hog),
            "external" | "inception" => Ok(FeatureSource::External),
            other => Err(Error::invalid(format!(
                "unknown feature source {other:?} (expected pixel, hog or external)"
            ))),
        }
    }
}

/// `n × d` finite feature matrix tagged with its source.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    matrix: Matrix,
    source: FeatureSource,
}

impl FeatureMatrix {
    pub fn new(matrix: Matrix, source: FeatureSource) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(Error::invalid(format!(
                "feature matrix must be non-empty, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if !matrix.all_finite() {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        Ok(Self { matrix, source })
    }

    pub fn from_tensor(t: &TensorFile, source: FeatureSource) -> Result<Self> {
        Self::new(t.to_matrix(), source)
    }

    pub fn to_tensor(&self) -> Result<TensorFile, CodecError> {
        TensorFile::from_matrix(&self.matrix)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn d(&self) -> usize {
        self.matrix.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Matrix {
        self.matrix.select_rows(indices)
    }
}

/// Flattened pixels scaled to `[0, 1]`.
pub fn pixel_features(stack: &ImageStack) -> Result<FeatureMatrix> {
    let data = stack.pixels().iter().map(|&p| f64::from(p) / 255.0).collect();
    FeatureMatrix::new(
        Matrix::new(stack.count(), stack.image_len(), data)?,
        FeatureSource::Pixel,
    )
}

/// HOG layout. Defaults are the classic detector settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogParams {
    pub cell: usize,
    pub bins: usize,
    pub block: usize,
    pub eps: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            cell: 8,
            bins: 9,
            block: 2,
            eps: 1e-6,
        }
    }
}

impl HogParams {
    /// Cells per axis after zero-padding to a multiple of the cell size.
    pub fn cells_for(&self, height: usize, width: usize) -> (usize, usize) {
        (height.div_ceil(self.cell), width.div_ceil(self.cell))
    }

    pub fn dimension(&self, height: usize, width: usize) -> usize {
        let (cy, cx) = self.cells_for(height, width);
        if cy < self.block || cx < self.block {
            return 0;
        }
        (cy - self.block + 1) * (cx - self.block + 1) * self.block * self.block * self.bins
    }

    fn validate(&self) -> Result<()> {
        if self.cell == 0 || self.bins == 0 || self.block == 0 || self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::invalid(format!("invalid HOG parameters {self:?}")));
        }
        Ok(())
    }
}

/// Per-cell orientation histograms, `[cell_y][cell_x][bin]` flattened.
///
/// Gradients use `[-1, 0, 1]` central differences with replicated borders
/// on the zero-padded image. Orientation is the unsigned edge direction in
/// `[0°, 180°)`, i.e. perpendicular to the gradient, so a vertical edge
/// (horizontal gradient) falls at 90°. Bin `b` is centred at
/// `(b + ½)·180°/bins` and votes are split linearly between the two nearest
/// centres, wrapping at 180°.
pub fn cell_histograms(image: &[u8], height: usize, width: usize, params: &HogParams) -> Vec<f64> {
    let (cy, cx) = params.cells_for(height, width);
    let (ph, pw) = (cy * params.cell, cx * params.cell);
    let px = |y: usize, x: usize| -> f64 {
        if y < height && x < width {
            f64::from(image[y * width + x]) / 255.0
        } else {
            0.0
        }
    };
    let bin_width = 180.0 / params.bins as f64;
    let mut hist = vec![0.0; cy * cx * params.bins];
    for y in 0..ph {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(ph - 1));
        for x in 0..pw {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(pw - 1));
            let gx = px(y, right) - px(y, left);
            let gy = px(down, x) - px(up, x);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees() + 90.0;
            angle = angle.rem_euclid(180.0);
            let pos = angle / bin_width - 0.5;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = (lower as i64).rem_euclid(params.bins as i64) as usize;
            let b1 = (b0 + 1) % params.bins;
            let base = ((y / params.cell) * cx + x / params.cell) * params.bins;
            hist[base + b0] += mag * (1.0 - frac);
            hist[base + b1] += mag * frac;
        }
    }
    hist
}

fn hog_one(image: &[u8], height: usize, width: usize, params: &HogParams) -> Vec<f64> {
    let (cy, cx) = params.cells_for(height, width);
    let hist = cell_histograms(image, height, width, params);
    let bins = params.bins;
    let mut out = Vec::with_capacity(params.dimension(height, width));
    for by in 0..=(cy - params.block) {
        for bx in 0..=(cx - params.block) {
            let start = out.len();
            for dy in 0..params.block {
                for dx in 0..params.block {
                    let base = ((by + dy) * cx + bx + dx) * bins;
                    out.extend_from_slice(&hist[base..base + bins]);
                }
            }
            let block = &mut out[start..];
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + params.eps * params.eps).sqrt();
            block.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// HOG descriptors, one row per image, computed in parallel.
pub fn hog_features(stack: &ImageStack, params: &HogParams) -> Result<FeatureMatrix> {
    params.validate()?;
    let (h, w) = (stack.height(), stack.width());
    let d = params.dimension(h, w);
    if d == 0 {
        return Err(Error::invalid(format!(
            "{h}x{w} image has fewer than {} cells per axis",
            params.block
        )));
    }
    let rows: Vec<Vec<f64>> = (0..stack.count())
        .into_par_iter()
        .map(|i| hog_one(stack.image(i), h, w, params))
        .collect();
    FeatureMatrix::new(Matrix::from_rows(&rows)?, FeatureSource::Hog)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_image(size: usize) -> Vec<u8> {
        (0..size * size)
            .map(|i| if i % size >= size / 2 { 255 } else { 0 })
            .collect()
    }

    #[test]
    fn pixel_scaling() {
        let stack = ImageStack::new(1, 2, 2, vec![0, 255, 255, 0]).unwrap();
        let f = pixel_features(&stack).unwrap();
        assert_eq!(f.matrix().row(0), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(f.source(), FeatureSource::Pixel);
    }

    #[test]
    fn identical_images_identical_rows() {
        let stack = ImageStack::new(2, 3, 3, [7u8; 18].to_vec()).unwrap();
        let f = pixel_features(&stack).unwrap();
        assert_eq!(f.matrix().row(0), f.matrix().row(1));
        assert!(f.matrix().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn constant_image_has_zero_descriptor() {
        let stack = ImageStack::new(1, 16, 16, vec![200; 256]).unwrap();
        let f = hog_features(&stack, &HogParams::default()).unwrap();
        assert!(f.matrix().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mnist_dimension() {
        let stack = ImageStack::new(1, 28, 28, vec![0; 784]).unwrap();
        let f = hog_features(&stack, &HogParams::default()).unwrap();
        assert_eq!(f.d(), 324);
        assert_eq!(HogParams::default().dimension(28, 28), 3 * 3 * 2 * 2 * 9);
    }

    #[test]
    fn vertical_edge_votes_at_ninety_degrees() {
        // step between columns 7 and 8: gx = 1 at x = 7 and x = 8, gy = 0,
        // so every vote lands exactly on the 90° centre (bin 4)
        let img = step_image(16);
        let p = HogParams::default();
        let hist = cell_histograms(&img, 16, 16, &p);
        for cell in 0..4 {
            let h = &hist[cell * 9..(cell + 1) * 9];
            // columns 7 (left cells) and 8 (right cells), 8 rows each, magnitude 1
            assert!((h[4] - 8.0).abs() < 1e-12, "cell {cell}: {h:?}");
            let rest: f64 = h.iter().enumerate().filter(|(b, _)| *b != 4).map(|(_, v)| v).sum();
            assert!(rest.abs() < 1e-12);
        }
    }

    #[test]
    fn horizontal_edge_splits_between_end_bins() {
        // horizontal edge: gradient along y, edge direction 0°, between bins 0 and 8
        let img: Vec<u8> = (0..256).map(|i| if i / 16 >= 8 { 255 } else { 0 }).collect();
        let hist = cell_histograms(&img, 16, 16, &HogParams::default());
        let h = &hist[0..9];
        assert!((h[0] - 4.0).abs() < 1e-12 && (h[8] - 4.0).abs() < 1e-12, "{h:?}");
    }

    #[test]
    fn rotation_reverses_cell_grid() {
        let img = step_image(16);
        let rotated: Vec<u8> = img.iter().rev().copied().collect();
        let p = HogParams::default();
        let a = cell_histograms(&img, 16, 16, &p);
        let b = cell_histograms(&rotated, 16, 16, &p);
        let cells = 4;
        for c in 0..cells {
            let mirror = cells - 1 - c;
            assert_eq!(&a[c * 9..(c + 1) * 9], &b[mirror * 9..(mirror + 1) * 9]);
        }
    }

    #[test]
    fn blocks_are_unit_norm() {
        let img = step_image(16);
        let stack = ImageStack::new(1, 16, 16, img).unwrap();
        let f = hog_features(&stack, &HogParams::default()).unwrap();
        let norm: f64 = f.matrix().row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn too_small_for_a_block() {
        let stack = ImageStack::new(1, 8, 8, vec![0; 64]).unwrap();
        assert!(hog_features(&stack, &HogParams::default()).is_err());
    }
}
