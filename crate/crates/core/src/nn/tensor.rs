use super::NnError;

/// Width, height and channel count of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(width: usize, height: usize, channels: usize) -> Self {
        Shape {
            width,
            height,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixels in a single channel plane.
    pub fn plane(&self) -> usize {
        self.width * self.height
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// Dense 3-D array of `f32`, laid out channel-major then row-major:
/// element `(x, y, c)` lives at `c * h * w + y * w + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self, NnError> {
        if shape.is_empty() {
            return Err(NnError::EmptyShape(shape));
        }
        if data.len() != shape.len() {
            return Err(NnError::DataLength {
                shape,
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
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

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    /// One channel plane as a slice.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.shape.plane();
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Little-endian encoding: u32 width, height, channels, then raw f32 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len() * 4);
        out.extend_from_slice(&(self.shape.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.shape.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.shape.channels as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 12 {
            return Err(NnError::TensorEncoding("header shorter than 12 bytes".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        let shape = Shape::new(dim(0), dim(1), dim(2));
        let body = &bytes[12..];
        let expected = shape
            .width
            .checked_mul(shape.height)
            .and_then(|v| v.checked_mul(shape.channels))
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| NnError::TensorEncoding("dimensions overflow".into()))?;
        if body.len() != expected {
            return Err(NnError::TensorEncoding(format!(
                "expected {expected} payload bytes for {shape}, found {}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data)
    }
}

/// Bilinear resampling with corner-aligned sampling: output corners map
/// exactly onto input corners. Each channel is resampled independently.
pub fn resize_bilinear(input: &Tensor, width: usize, height: usize) -> Tensor {
    let src = input.shape();
    if src.width == width && src.height == height {
        return input.clone();
    }
    let out_shape = Shape::new(width, height, src.channels);
    let mut out = Vec::with_capacity(out_shape.len());
    let xs: Vec<(usize, usize, f32)> = (0..width).map(|x| sample_axis(x, width, src.width)).collect();
    let ys: Vec<(usize, usize, f32)> = (0..height).map(|y| sample_axis(y, height, src.height)).collect();
    for c in 0..src.channels {
        let plane = input.channel(c);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * src.width + x0] * (1.0 - fx) + plane[y0 * src.width + x1] * fx;
                let bottom = plane[y1 * src.width + x0] * (1.0 - fx) + plane[y1 * src.width + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor {
        shape: out_shape,
        data: out,
    }
}

fn sample_axis(dst: usize, dst_len: usize, src_len: usize) -> (usize, usize, f32) {
    if src_len == 1 {
        return (0, 0, 0.0);
    }
    let pos = if dst_len == 1 {
        (src_len - 1) as f64 / 2.0
    } else {
        dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
    };
    let lo = (pos.floor() as usize).min(src_len - 1);
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, (pos - lo as f64) as f32)
}
