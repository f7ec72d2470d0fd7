use super::CodecError;

pub const IDX_IMAGES_MAGIC: [u8; 4] = [0x00, 0x00, 0x08, 0x03];
pub const IDX_LABELS_MAGIC: [u8; 4] = [0x00, 0x00, 0x08, 0x01];

/// Grayscale `u8` images, row-major within an image, images back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageStack {
    count: usize,
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl ImageStack {
    pub fn new(count: usize, height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, CodecError> {
        if height == 0 || width == 0 {
            return Err(CodecError::InvalidShape(format!(
                "image size {height}x{width} must be at least 1x1"
            )));
        }
        let expected = count
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| CodecError::DimOverflow {
                dims: vec![count as u64, height as u64, width as u64],
            })?;
        if pixels.len() != expected {
            return Err(CodecError::InvalidShape(format!(
                "{count}x{height}x{width} images need {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            count,
            height,
            width,
            pixels,
        })
    }

    /// Stack of images of identical size.
    pub fn from_images<I: AsRef<[u8]>>(height: usize, width: usize, images: &[I]) -> Result<Self, CodecError> {
        let mut pixels = Vec::with_capacity(images.len() * height * width);
        for img in images {
            pixels.extend_from_slice(img.as_ref());
        }
        Self::new(images.len(), height, width, pixels)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let len = self.image_len();
        &self.pixels[i * len..(i + 1) * len]
    }

    pub fn images(&self) -> impl Iterator<Item = &[u8]> {
        self.pixels.chunks_exact(self.image_len())
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn select(&self, indices: &[usize]) -> ImageStack {
        let mut pixels = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        ImageStack {
            count: indices.len(),
            height: self.height,
            width: self.width,
            pixels,
        }
    }
}

fn read_header(bytes: &[u8], magic: [u8; 4], ndims: usize) -> Result<(Vec<usize>, &[u8]), CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated {
            needed: 4,
            available: bytes.len(),
        });
    }
    if bytes[..4] != magic {
        return Err(CodecError::BadMagic {
            expected: magic.to_vec(),
            found: bytes[..4].to_vec(),
        });
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(CodecError::Truncated {
            needed: header_len,
            available: bytes.len(),
        });
    }
    let raw: Vec<u64> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u64::from(u32::from_be_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let total = raw
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .and_then(|t| t.checked_add(header_len))
        .ok_or_else(|| CodecError::DimOverflow { dims: raw.clone() })?;
    if bytes.len() < total {
        return Err(CodecError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(CodecError::TrailingBytes {
            extra: bytes.len() - total,
        });
    }
    let dims = raw.iter().map(|&d| d as usize).collect();
    Ok((dims, &bytes[header_len..]))
}

fn dim_u32(d: usize) -> [u8; 4] {
    u32::try_from(d)
        .expect("IDX dimensions are limited to u32")
        .to_be_bytes()
}

pub fn decode_images(bytes: &[u8]) -> Result<ImageStack, CodecError> {
    let (dims, payload) = read_header(bytes, IDX_IMAGES_MAGIC, 3)?;
    ImageStack::new(dims[0], dims[1], dims[2], payload.to_vec())
}

pub fn encode_images(stack: &ImageStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + stack.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC);
    out.extend_from_slice(&dim_u32(stack.count));
    out.extend_from_slice(&dim_u32(stack.height));
    out.extend_from_slice(&dim_u32(stack.width));
    out.extend_from_slice(&stack.pixels);
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u8>, CodecError> {
    let (_, payload) = read_header(bytes, IDX_LABELS_MAGIC, 1)?;
    Ok(payload.to_vec())
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC);
    out.extend_from_slice(&dim_u32(labels.len()));
    out.extend_from_slice(labels);
    out
}
