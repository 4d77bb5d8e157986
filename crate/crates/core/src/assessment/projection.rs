use crate::nn::{resize_bilinear, Shape, Tensor};

/// Feature maps of one layer rendered as oracle-sized images.
#[derive(Debug, Clone, PartialEq)]
pub struct IRImageSet {
    pub layer: usize,
    /// One image per feature map, in channel order.
    pub images: Vec<Tensor>,
}

/// Projects every channel of `ir` to an image of `oracle_input`'s shape:
/// min-max normalize to `[0, 1]` (a constant map becomes all zeros), resize
/// bilinearly with aligned corners, then replicate across the oracle's
/// channels.
pub fn project_feature_maps(layer: usize, ir: &Tensor, oracle_input: Shape) -> IRImageSet {
    let plane_shape = Shape::new(ir.width(), ir.height(), 1);
    let images = (0..ir.channels())
        .map(|c| {
            let plane = ir.channel(c);
            let (min, max) = plane.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            let normalized: Vec<f32> = if max > min {
                let range = max as f64 - min as f64;
                plane
                    .iter()
                    .map(|&v| ((v as f64 - min as f64) / range) as f32)
                    .collect()
            } else {
                vec![0.0; plane.len()]
            };
            let map = Tensor::new(plane_shape, normalized).expect("plane shape");
            let resized = resize_bilinear(&map, oracle_input.width, oracle_input.height);
            let single: Vec<f32> = resized.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
            let mut data = Vec::with_capacity(oracle_input.len());
            for _ in 0..oracle_input.channels {
                data.extend_from_slice(&single);
            }
            Tensor::new(oracle_input, data).expect("oracle shape")
        })
        .collect();
    IRImageSet { layer, images }
}

/// Adapts an image to `shape`: bilinear resize, and a single channel is
/// replicated when the target has more. Returns `None` for any other channel
/// mismatch.
pub fn fit_to_shape(x: &Tensor, shape: Shape) -> Option<Tensor> {
    let resized = resize_bilinear(x, shape.width, shape.height);
    if resized.channels() == shape.channels {
        return Some(resized);
    }
    if resized.channels() != 1 {
        return None;
    }
    let mut data = Vec::with_capacity(shape.len());
    for _ in 0..shape.channels {
        data.extend_from_slice(resized.data());
    }
    Tensor::new(shape, data).ok()
}
