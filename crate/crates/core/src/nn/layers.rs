//! Per-layer forward kernels. Accumulation order is fixed: for every output
//! element the sum runs over input channels, then kernel rows, then kernel
//! columns.

use super::{
    Activation, ConvParams, LayerKind, LayerSpec, LayerWeights, PoolParams, Shape, Tensor, BATCH_NORM_EPSILON,
    LEAKY_SLOPE,
};

#[inline]
fn activate(v: f32, activation: Activation) -> f32 {
    match activation {
        Activation::Linear => v,
        Activation::Relu => v.max(0.0),
        Activation::Leaky => {
            if v > 0.0 {
                v
            } else {
                LEAKY_SLOPE * v
            }
        }
    }
}

/// Runs one non-route layer. Route layers are assembled by the caller, which
/// owns the earlier outputs.
pub(crate) fn apply(layer: &LayerSpec, weights: &LayerWeights, input: &Tensor) -> Tensor {
    match (&layer.kind, weights) {
        (
            LayerKind::Convolutional(p),
            LayerWeights::Convolutional {
                biases,
                batch_norm,
                filters,
            },
        ) => convolve(p, biases, batch_norm.as_ref(), filters, input, layer.output),
        (LayerKind::MaxPool(p), _) => max_pool(p, input, layer.output),
        (LayerKind::AvgPool(Some(p)), _) => avg_pool(p, input, layer.output),
        (LayerKind::AvgPool(None), _) => global_avg_pool(input),
        (LayerKind::Connected { activation, .. }, LayerWeights::Connected { biases, weights }) => {
            connected(*activation, biases, weights, input, layer.output)
        }
        (LayerKind::Softmax, _) => softmax(input),
        (kind, _) => unreachable!("layer {} ({}) has mismatched weights", layer.index, kind.name()),
    }
}

pub(crate) fn concat(parts: &[&Tensor]) -> Tensor {
    let first = parts[0].shape();
    let channels = parts.iter().map(|t| t.channels()).sum();
    let mut data = Vec::with_capacity(first.plane() * channels);
    for t in parts {
        data.extend_from_slice(t.data());
    }
    Tensor::new(Shape::new(first.width, first.height, channels), data).expect("route shapes validated at load")
}

fn convolve(
    p: &ConvParams,
    biases: &[f32],
    batch_norm: Option<&super::BatchNorm>,
    filters: &[f32],
    input: &Tensor,
    out_shape: Shape,
) -> Tensor {
    let in_shape = input.shape();
    let (w, h, c_in) = (in_shape.width as isize, in_shape.height as isize, in_shape.channels);
    let k = p.size;
    let pad = p.padding() as isize;
    let stride = p.stride as isize;
    let src = input.data();
    let mut out = Vec::with_capacity(out_shape.len());
    for oc in 0..p.filters {
        let bias = biases.get(oc).copied().unwrap_or(0.0);
        let (scale, shift) = match batch_norm {
            Some(bn) => {
                let a = bn.scale[oc] / (bn.variance[oc] + BATCH_NORM_EPSILON).sqrt();
                (a, bias - bn.mean[oc] * a)
            }
            None => (1.0, bias),
        };
        let kernel = &filters[oc * c_in * k * k..(oc + 1) * c_in * k * k];
        for oy in 0..out_shape.height as isize {
            for ox in 0..out_shape.width as isize {
                let mut sum = 0.0f32;
                for ic in 0..c_in {
                    let plane = &src[ic * (w * h) as usize..(ic + 1) * (w * h) as usize];
                    for ky in 0..k {
                        let iy = oy * stride + ky as isize - pad;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let row = &plane[(iy * w) as usize..((iy + 1) * w) as usize];
                        let krow = &kernel[(ic * k + ky) * k..(ic * k + ky + 1) * k];
                        for (kx, &wt) in krow.iter().enumerate() {
                            let ix = ox * stride + kx as isize - pad;
                            if ix < 0 || ix >= w {
                                continue;
                            }
                            sum += wt * row[ix as usize];
                        }
                    }
                }
                let v = if batch_norm.is_some() {
                    sum * scale + shift
                } else {
                    sum + shift
                };
                out.push(activate(v, p.activation));
            }
        }
    }
    Tensor::new(out_shape, out).expect("conv output shape")
}

fn max_pool(p: &PoolParams, input: &Tensor, out_shape: Shape) -> Tensor {
    let mut out = Vec::with_capacity(out_shape.len());
    for c in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..p.size {
                    for kx in 0..p.size {
                        m = m.max(input.get(ox * p.stride + kx, oy * p.stride + ky, c));
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(out_shape, out).expect("maxpool output shape")
}

fn avg_pool(p: &PoolParams, input: &Tensor, out_shape: Shape) -> Tensor {
    let count = (p.size * p.size) as f32;
    let mut out = Vec::with_capacity(out_shape.len());
    for c in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let mut sum = 0.0f32;
                for ky in 0..p.size {
                    for kx in 0..p.size {
                        sum += input.get(ox * p.stride + kx, oy * p.stride + ky, c);
                    }
                }
                out.push(sum / count);
            }
        }
    }
    Tensor::new(out_shape, out).expect("avgpool output shape")
}

fn global_avg_pool(input: &Tensor) -> Tensor {
    let count = input.shape().plane() as f32;
    let out = (0..input.channels())
        .map(|c| input.channel(c).iter().sum::<f32>() / count)
        .collect();
    Tensor::new(Shape::new(1, 1, input.channels()), out).expect("global avgpool shape")
}

fn connected(activation: Activation, biases: &[f32], weights: &[f32], input: &Tensor, out_shape: Shape) -> Tensor {
    let x = input.data();
    let out = weights
        .chunks_exact(x.len())
        .zip(biases)
        .map(|(row, &b)| {
            let mut sum = 0.0f32;
            for (w, v) in row.iter().zip(x) {
                sum += w * v;
            }
            activate(sum + b, activation)
        })
        .collect();
    Tensor::new(out_shape, out).expect("connected output shape")
}

fn softmax(input: &Tensor) -> Tensor {
    let x = input.data();
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = x.iter().map(|v| (v - max).exp()).collect();
    let mut total = 0.0f32;
    for e in &exps {
        total += e;
    }
    let out = exps.into_iter().map(|e| e / total).collect();
    Tensor::new(input.shape(), out).expect("softmax shape")
}
