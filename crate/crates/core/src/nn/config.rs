use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{NnError, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Leaky,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Leaky => "leaky",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Activation::Linear),
            "relu" => Some(Activation::Relu),
            "leaky" => Some(Activation::Leaky),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub filters: usize,
    pub size: usize,
    pub stride: usize,
    /// `pad=1` pads by `size / 2` on every side.
    pub pad: bool,
    pub activation: Activation,
    pub batch_normalize: bool,
    pub bias: bool,
}

impl ConvParams {
    pub fn padding(&self) -> usize {
        if self.pad {
            self.size / 2
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolParams {
    pub size: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Convolutional(ConvParams),
    MaxPool(PoolParams),
    /// `None` averages each whole channel down to 1x1.
    AvgPool(Option<PoolParams>),
    /// Channel concatenation of earlier outputs. Index 0 names the network input.
    Route(Vec<usize>),
    Connected {
        outputs: usize,
        activation: Activation,
    },
    Softmax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Convolutional(_) => "convolutional",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::AvgPool(_) => "avgpool",
            LayerKind::Route(_) => "route",
            LayerKind::Connected { .. } => "connected",
            LayerKind::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    /// 1-based position in the network.
    pub index: usize,
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
}

/// A shape-checked layer sequence. Every layer carries its resolved input
/// and output shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    input: Shape,
    layers: Vec<LayerSpec>,
}

impl ModelConfig {
    pub fn new(input: Shape, kinds: Vec<LayerKind>) -> Result<Self, NnError> {
        if input.is_empty() {
            return Err(NnError::Shape {
                layer: 0,
                message: format!("network input {input} has a zero dimension"),
            });
        }
        let count = kinds.len();
        let mut layers: Vec<LayerSpec> = Vec::with_capacity(count);
        for (pos, kind) in kinds.into_iter().enumerate() {
            let index = pos + 1;
            let prev = layers.last().map_or(input, |l| l.output);
            let shape_err = |message: String| NnError::Shape { layer: index, message };
            let output = match &kind {
                LayerKind::Convolutional(p) => {
                    if p.filters == 0 || p.size == 0 || p.stride == 0 {
                        return Err(shape_err("filters, size and stride must be positive".into()));
                    }
                    let pad = p.padding();
                    if prev.width + 2 * pad < p.size || prev.height + 2 * pad < p.size {
                        return Err(shape_err(format!("kernel {} larger than padded input {prev}", p.size)));
                    }
                    Shape::new(
                        (prev.width + 2 * pad - p.size) / p.stride + 1,
                        (prev.height + 2 * pad - p.size) / p.stride + 1,
                        p.filters,
                    )
                }
                LayerKind::MaxPool(p) | LayerKind::AvgPool(Some(p)) => {
                    if p.size == 0 || p.stride == 0 {
                        return Err(shape_err("size and stride must be positive".into()));
                    }
                    if prev.width < p.size || prev.height < p.size {
                        return Err(shape_err(format!("pool window {} larger than input {prev}", p.size)));
                    }
                    Shape::new(
                        (prev.width - p.size) / p.stride + 1,
                        (prev.height - p.size) / p.stride + 1,
                        prev.channels,
                    )
                }
                LayerKind::AvgPool(None) => Shape::new(1, 1, prev.channels),
                LayerKind::Route(sources) => {
                    if sources.is_empty() {
                        return Err(shape_err("route needs at least one source".into()));
                    }
                    let mut width_height = None;
                    let mut channels = 0;
                    for &s in sources {
                        if s >= index {
                            return Err(NnError::RouteOrder {
                                layer: index,
                                source_index: s,
                            });
                        }
                        let shape = if s == 0 { input } else { layers[s - 1].output };
                        match width_height {
                            None => width_height = Some((shape.width, shape.height)),
                            Some(wh) if wh != (shape.width, shape.height) => {
                                return Err(shape_err(format!(
                                    "route sources disagree on width/height: {}x{} vs {}x{}",
                                    wh.0, wh.1, shape.width, shape.height
                                )))
                            }
                            _ => {}
                        }
                        channels += shape.channels;
                    }
                    let (w, h) = width_height.unwrap();
                    Shape::new(w, h, channels)
                }
                LayerKind::Connected { outputs, .. } => {
                    if *outputs == 0 {
                        return Err(shape_err("connected output must be positive".into()));
                    }
                    Shape::new(1, 1, *outputs)
                }
                LayerKind::Softmax => {
                    if index != count {
                        return Err(shape_err("softmax may only appear as the final layer".into()));
                    }
                    prev
                }
            };
            layers.push(LayerSpec {
                index,
                kind,
                input: prev,
                output,
            });
        }
        Ok(ModelConfig { input, layers })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().map_or(self.input, |l| l.output)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// 1-based layer lookup.
    pub fn layer(&self, index: usize) -> &LayerSpec {
        &self.layers[index - 1]
    }

    /// Output shape of layer `index`, with 0 meaning the network input.
    pub fn output_of(&self, index: usize) -> Shape {
        if index == 0 {
            self.input
        } else {
            self.layers[index - 1].output
        }
    }

    pub fn ends_in_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(l) if l.kind == LayerKind::Softmax)
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind.clone()).collect()
    }

    pub fn parse(text: &str) -> Result<Self, NnError> {
        let sections = split_sections(text)?;
        let mut iter = sections.into_iter();
        let net = iter.next().ok_or(NnError::Syntax {
            line: 1,
            message: "missing [net] section".into(),
        })?;
        if net.name != "net" {
            return Err(NnError::Syntax {
                line: net.line,
                message: format!("first section must be [net], found [{}]", net.name),
            });
        }
        let mut net_keys = KeyReader::new(net);
        let input = Shape::new(
            net_keys.required_usize("width")?,
            net_keys.required_usize("height")?,
            net_keys.required_usize("channels")?,
        );
        net_keys.finish()?;

        let mut kinds = Vec::new();
        for section in iter {
            let name = section.name.clone();
            let line = section.line;
            let mut keys = KeyReader::new(section);
            let kind = match name.as_str() {
                "convolutional" => LayerKind::Convolutional(ConvParams {
                    filters: keys.required_usize("filters")?,
                    size: keys.usize_or("size", 1)?,
                    stride: keys.usize_or("stride", 1)?,
                    pad: keys.flag("pad", false)?,
                    activation: keys.activation()?,
                    batch_normalize: keys.flag("batch_normalize", false)?,
                    bias: keys.flag("bias", true)?,
                }),
                "maxpool" => {
                    let size = keys.required_usize("size")?;
                    LayerKind::MaxPool(PoolParams {
                        size,
                        stride: keys.usize_or("stride", size)?,
                    })
                }
                "avgpool" => match keys.optional_usize("size")? {
                    Some(size) => LayerKind::AvgPool(Some(PoolParams {
                        size,
                        stride: keys.usize_or("stride", size)?,
                    })),
                    None => LayerKind::AvgPool(None),
                },
                "route" => LayerKind::Route(keys.index_list("layers")?),
                "connected" => LayerKind::Connected {
                    outputs: keys.required_usize("output")?,
                    activation: keys.activation()?,
                },
                "softmax" => LayerKind::Softmax,
                other => {
                    return Err(NnError::Syntax {
                        line,
                        message: format!("unknown section [{other}]"),
                    })
                }
            };
            keys.finish()?;
            kinds.push(kind);
        }
        ModelConfig::new(input, kinds)
    }

    /// Canonical text form; `parse(to_text())` yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let i = self.input;
        let _ = writeln!(
            out,
            "[net]\nwidth={}\nheight={}\nchannels={}",
            i.width, i.height, i.channels
        );
        for layer in &self.layers {
            out.push('\n');
            let _ = writeln!(out, "[{}]", layer.kind.name());
            match &layer.kind {
                LayerKind::Convolutional(p) => {
                    let _ = writeln!(
                        out,
                        "filters={}\nsize={}\nstride={}\npad={}\nactivation={}\nbatch_normalize={}\nbias={}",
                        p.filters,
                        p.size,
                        p.stride,
                        p.pad as u8,
                        p.activation.name(),
                        p.batch_normalize as u8,
                        p.bias as u8
                    );
                }
                LayerKind::MaxPool(p) | LayerKind::AvgPool(Some(p)) => {
                    let _ = writeln!(out, "size={}\nstride={}", p.size, p.stride);
                }
                LayerKind::AvgPool(None) | LayerKind::Softmax => {}
                LayerKind::Route(sources) => {
                    let list: Vec<String> = sources.iter().map(|s| s.to_string()).collect();
                    let _ = writeln!(out, "layers={}", list.join(","));
                }
                LayerKind::Connected { outputs, activation } => {
                    let _ = writeln!(out, "output={outputs}\nactivation={}", activation.name());
                }
            }
        }
        out
    }
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<(usize, String, String)>,
}

fn split_sections(text: &str) -> Result<Vec<Section>, NnError> {
    let mut sections: Vec<Section> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| NnError::Syntax {
                line: line_no,
                message: format!("unterminated section header `{line}`"),
            })?;
            sections.push(Section {
                name: name.trim().to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| NnError::Syntax {
            line: line_no,
            message: format!("expected key=value, found `{line}`"),
        })?;
        let section = sections.last_mut().ok_or_else(|| NnError::Syntax {
            line: line_no,
            message: "key=value before any section header".into(),
        })?;
        section
            .entries
            .push((line_no, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(sections)
}

struct KeyReader {
    section: String,
    line: usize,
    values: BTreeMap<String, (usize, String)>,
}

impl KeyReader {
    fn new(section: Section) -> Self {
        KeyReader {
            section: section.name,
            line: section.line,
            values: section.entries.into_iter().map(|(l, k, v)| (k, (l, v))).collect(),
        }
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.values.remove(key)
    }

    fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize, NnError> {
        value.parse().map_err(|_| NnError::Syntax {
            line,
            message: format!("`{key}` expects a non-negative integer, found `{value}`"),
        })
    }

    fn optional_usize(&mut self, key: &str) -> Result<Option<usize>, NnError> {
        self.take(key)
            .map(|(line, v)| Self::parse_usize(line, key, &v))
            .transpose()
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, NnError> {
        Ok(self.optional_usize(key)?.unwrap_or(default))
    }

    fn required_usize(&mut self, key: &str) -> Result<usize, NnError> {
        self.optional_usize(key)?.ok_or_else(|| NnError::Syntax {
            line: self.line,
            message: format!("[{}] requires `{key}`", self.section),
        })
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool, NnError> {
        match self.take(key) {
            None => Ok(default),
            Some((_, v)) if v == "0" => Ok(false),
            Some((_, v)) if v == "1" => Ok(true),
            Some((line, v)) => Err(NnError::Syntax {
                line,
                message: format!("`{key}` expects 0 or 1, found `{v}`"),
            }),
        }
    }

    fn activation(&mut self) -> Result<Activation, NnError> {
        match self.take("activation") {
            None => Ok(Activation::Linear),
            Some((line, v)) => Activation::parse(&v).ok_or(NnError::Syntax {
                line,
                message: format!("unknown activation `{v}`"),
            }),
        }
    }

    fn index_list(&mut self, key: &str) -> Result<Vec<usize>, NnError> {
        let (line, v) = self.take(key).ok_or_else(|| NnError::Syntax {
            line: self.line,
            message: format!("[{}] requires `{key}`", self.section),
        })?;
        v.split(',').map(|s| Self::parse_usize(line, key, s.trim())).collect()
    }

    fn finish(self) -> Result<(), NnError> {
        match self.values.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(NnError::Syntax {
                line,
                message: format!("unknown key `{key}` in [{}]", self.section),
            }),
        }
    }
}
