//! Feed-forward ReLU classifiers, their flow-domain lift, and a small trainer.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Flow, FlowMatrix, GridImage, GridShape, PixelValues};

pub const MODEL_VERSION: u32 = 1;

/// Affine map `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if bias.len() != weights.nrows() {
            return Err(Error::dim(format!(
                "bias has {} entries, weight matrix has {} rows",
                bias.len(),
                weights.nrows()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("layer parameters must be finite".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .outer_iter()
            .zip(self.bias.iter())
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

fn check_chain(layers: &[Layer], input_dim: usize) -> Result<()> {
    let Some(last) = layers.last() else {
        return Err(Error::InvalidArgument("network needs at least one layer".into()));
    };
    let mut width = input_dim;
    for (k, layer) in layers.iter().enumerate() {
        if layer.inputs() != width {
            return Err(Error::dim(format!(
                "layer {k} expects {} inputs, previous width is {width}",
                layer.inputs()
            )));
        }
        width = layer.outputs();
    }
    if last.outputs() < 2 {
        return Err(Error::InvalidArgument("classifier needs at least two classes".into()));
    }
    Ok(())
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn forward_layers(layers: &[Layer], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (k, layer) in layers.iter().enumerate() {
        h = layer.apply(&h);
        if k + 1 < layers.len() {
            relu_in_place(&mut h);
        }
    }
    h
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// `min_{t≠y} f_y − f_t` and the minimizing competitor (lowest index on ties).
pub fn margin(logits: &[f64], label: usize) -> (f64, usize) {
    let mut best: Option<(f64, usize)> = None;
    for (t, &v) in logits.iter().enumerate() {
        if t == label {
            continue;
        }
        let m = logits[label] - v;
        if best.map_or(true, |(b, _)| m < b) {
            best = Some((m, t));
        }
    }
    best.expect("at least two classes")
}

fn margin_grad_layers(layers: &[Layer], x: &[f64], label: usize) -> (f64, Vec<f64>) {
    // keep pre-activations of every hidden layer for the ReLU masks
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut h = x.to_vec();
    for (k, layer) in layers.iter().enumerate() {
        let z = layer.apply(&h);
        if k + 1 < layers.len() {
            h = z.clone();
            relu_in_place(&mut h);
        } else {
            h = z.clone();
        }
        pre.push(z);
    }
    let (value, t) = margin(&h, label);
    let mut g = vec![0.0; h.len()];
    g[label] = 1.0;
    g[t] = -1.0;
    for k in (0..layers.len()).rev() {
        if k + 1 < layers.len() {
            for (gi, z) in g.iter_mut().zip(&pre[k]) {
                if *z <= 0.0 {
                    *gi = 0.0;
                }
            }
        }
        let w = &layers[k].weights;
        let mut next = vec![0.0; w.ncols()];
        for (row, &gi) in w.outer_iter().zip(&g) {
            if gi == 0.0 {
                continue;
            }
            for (n, wv) in next.iter_mut().zip(row.iter()) {
                *n += gi * wv;
            }
        }
        g = next;
    }
    (value, g)
}

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// ReLU network on images of a fixed grid shape. No activation after the last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    shape: GridShape,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(shape: GridShape, layers: Vec<Layer>) -> Result<Self> {
        check_chain(&layers, shape.pixels())?;
        Ok(Self { shape, layers })
    }

    /// He-initialized network with the given hidden widths.
    pub fn random<R: Rng + ?Sized>(
        shape: GridShape,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![shape.pixels()];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| normal.sample(rng));
            let b = Array1::from_shape_fn(fan_out, |_| 0.1 * normal.sample(rng));
            layers.push(Layer::new(w, b)?);
        }
        Self::new(shape, layers)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.shape.pixels()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    pub fn is_linear(&self) -> bool {
        self.layers.len() == 1
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(forward_layers(&self.layers, x))
    }

    pub fn forward_image<B: PixelValues + ?Sized>(&self, image: &B) -> Result<Vec<f64>> {
        self.shape.ensure_same(&image.shape(), "network input")?;
        self.forward(image.values())
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn classify_image<B: PixelValues + ?Sized>(&self, image: &B) -> Result<usize> {
        Ok(argmax(&self.forward_image(image)?))
    }

    /// Margin loss and its gradient with respect to the pixel input.
    pub fn margin_loss_and_grad(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        check_label(label, self.class_count())?;
        Ok(margin_grad_layers(&self.layers, x, label))
    }
}

/// A network reading flows: `lifted(δ) = original(R + Aδ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedNetwork {
    reference: GridImage,
    layers: Vec<Layer>,
}

impl LiftedNetwork {
    pub fn shape(&self) -> GridShape {
        self.reference.shape()
    }

    pub fn reference(&self) -> &GridImage {
        &self.reference
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn flow_dim(&self) -> usize {
        self.shape().flow_dim()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    pub fn forward(&self, delta: &Flow) -> Result<Vec<f64>> {
        self.shape().ensure_same(&delta.shape(), "lifted network input")?;
        Ok(forward_layers(&self.layers, delta.as_slice()))
    }

    pub fn classify(&self, delta: &Flow) -> Result<usize> {
        Ok(argmax(&self.forward(delta)?))
    }

    pub fn margin_loss_and_grad(&self, delta: &Flow, label: usize) -> Result<(f64, Flow)> {
        margin_loss_and_grad(self, delta, label)
    }
}

/// Replaces the first layer `(W, b)` by `(W A, W R + b)`.
pub fn lift_network(net: &Network, reference: &GridImage, matrix: &FlowMatrix) -> Result<LiftedNetwork> {
    net.shape.ensure_same(&reference.shape(), "lift reference")?;
    net.shape.ensure_same(&matrix.shape(), "lift matrix")?;
    let first = &net.layers[0];
    let w = matrix.left_mul(&first.weights)?;
    let b = Array1::from(first.apply(reference.mass()));
    let mut layers = Vec::with_capacity(net.layers.len());
    layers.push(Layer::new(w, b)?);
    layers.extend(net.layers[1..].iter().cloned());
    Ok(LiftedNetwork {
        reference: reference.clone(),
        layers,
    })
}

pub fn margin_loss_and_grad(net: &LiftedNetwork, delta: &Flow, label: usize) -> Result<(f64, Flow)> {
    net.shape().ensure_same(&delta.shape(), "lifted network input")?;
    check_label(label, net.class_count())?;
    let (value, grad) = margin_grad_layers(&net.layers, delta.as_slice(), label);
    Ok((value, Flow::from_vec(delta.shape(), grad)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    shape: [usize; 2],
    layers: Vec<LayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

pub fn model_to_json(net: &Network) -> String {
    let file = ModelFile {
        version: MODEL_VERSION,
        shape: [net.shape.rows(), net.shape.cols()],
        layers: net
            .layers
            .iter()
            .map(|l| LayerFile {
                rows: l.outputs(),
                cols: l.inputs(),
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json(text: &str, context: &str) -> Result<Network> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| {
        Error::parse(context, format!("line {} column {}: {e}", e.line(), e.column()))
    })?;
    if probe.version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            found: probe.version,
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        Error::parse(context, format!("line {} column {}: {e}", e.line(), e.column()))
    })?;
    let shape = GridShape::new(file.shape[0], file.shape[1])
        .map_err(|e| Error::parse(context, format!("field shape: {e}")))?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (k, l) in file.layers.into_iter().enumerate() {
        if l.weights.len() != l.rows * l.cols {
            return Err(Error::parse(
                context,
                format!(
                    "field layers[{k}].weights: {} numbers for a {}x{} matrix",
                    l.weights.len(),
                    l.rows,
                    l.cols
                ),
            ));
        }
        if l.bias.len() != l.rows {
            return Err(Error::parse(
                context,
                format!("field layers[{k}].bias: {} numbers for {} rows", l.bias.len(), l.rows),
            ));
        }
        let w = Array2::from_shape_vec((l.rows, l.cols), l.weights).expect("length checked");
        let layer = Layer::new(w, Array1::from(l.bias))
            .map_err(|e| Error::parse(context, format!("field layers[{k}]: {e}")))?;
        layers.push(layer);
    }
    Network::new(shape, layers).map_err(|e| Error::parse(context, format!("field layers: {e}")))
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Number of classes; `None` uses `max label + 1`.
    pub classes: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.02,
            momentum: 0.9,
            seed: 0,
            classes: None,
        }
    }
}

/// Minibatch SGD with momentum on softmax cross-entropy.
///
/// Inputs are multiplied by the pixel count during training so a uniform
/// image has unit entries; the factor is folded back into the first layer.
pub fn train_small(images: &[GridImage], labels: &[usize], cfg: &TrainConfig) -> Result<Network> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if images.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("batch size and learning rate must be positive".into()));
    }
    let shape = images[0].shape();
    for img in images {
        shape.ensure_same(&img.shape(), "training image")?;
    }
    let classes = cfg
        .classes
        .unwrap_or_else(|| labels.iter().max().map_or(2, |&m| m + 1))
        .max(2);
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {classes} classes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Network::random(shape, &cfg.hidden, classes, &mut rng)?;
    let mut ws: Vec<Array2<f64>> = init.layers.iter().map(|l| l.weights.clone()).collect();
    let mut bs: Vec<Array1<f64>> = init.layers.iter().map(|l| l.bias.clone()).collect();
    let mut vw: Vec<Array2<f64>> = ws.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
    let mut vb: Vec<Array1<f64>> = bs.iter().map(|b| Array1::zeros(b.raw_dim())).collect();

    let scale = shape.pixels() as f64;
    let p = shape.pixels();
    let inputs = Array2::from_shape_fn((images.len(), p), |(r, c)| images[r].mass()[c] * scale);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let depth = ws.len();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let x = inputs.select(Axis(0), batch);
            // forward, keeping activations
            let mut acts = vec![x];
            for k in 0..depth {
                let mut z = acts[k].dot(&ws[k].t()) + &bs[k];
                if k + 1 < depth {
                    z.mapv_inplace(|v| v.max(0.0));
                }
                acts.push(z);
            }
            // softmax cross-entropy gradient
            let mut g = acts[depth].clone();
            for (mut row, &idx) in g.outer_iter_mut().zip(batch) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
                row[labels[idx]] -= 1.0;
            }
            g /= batch.len() as f64;
            for k in (0..depth).rev() {
                let gw = g.t().dot(&acts[k]);
                let gb = g.sum_axis(Axis(0));
                if k > 0 {
                    let mut back = g.dot(&ws[k]);
                    back.zip_mut_with(&acts[k], |b, &a| {
                        if a <= 0.0 {
                            *b = 0.0;
                        }
                    });
                    g = back;
                }
                vw[k] = &vw[k] * cfg.momentum - &gw * cfg.learning_rate;
                vb[k] = &vb[k] * cfg.momentum - &gb * cfg.learning_rate;
                ws[k] += &vw[k];
                bs[k] += &vb[k];
            }
        }
    }
    ws[0] *= scale;
    let layers = ws
        .into_iter()
        .zip(bs)
        .map(|(w, b)| Layer::new(w, b))
        .collect::<Result<Vec<_>>>()?;
    Network::new(shape, layers)
}

/// Fraction of images classified as their label.
pub fn accuracy(net: &Network, images: &[GridImage], labels: &[usize]) -> Result<f64> {
    if images.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (img, &label) in images.iter().zip(labels) {
        if net.classify_image(img)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / images.len() as f64)
}
