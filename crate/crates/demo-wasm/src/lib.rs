//! Browser bindings: layer geometry, digit classification from a drawing,
//! and dropout mask previews.

use digit_triad::arch::cnn_spec;
use digit_triad::mnist::{CLASSES, PIXELS, SIDE};
use digit_triad::nn::{conv_out_dim, dropout_forward, softmax, stream_rng, Layer, Mode, Sequential};
use digit_triad::svm::LinearModel;
use digit_triad::Tensor;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Output extent of a convolution or pooling window sweep.
#[wasm_bindgen(js_name = convOutDim)]
pub fn conv_out_dim_js(input: usize, padding: usize, filter: usize, stride: usize) -> Result<usize, JsError> {
    conv_out_dim(input, padding, filter, stride).map_err(js_err)
}

#[wasm_bindgen(js_name = cnnGeometry)]
pub fn cnn_geometry_js(side: usize) -> Result<Vec<String>, JsError> {
    cnn_geometry(side).map_err(js_err)
}

#[wasm_bindgen(js_name = prepareDrawing)]
pub fn prepare_drawing_js(rgba: &[u8], width: usize, height: usize) -> Result<Vec<f32>, JsError> {
    prepare_drawing(rgba, width, height).map_err(js_err)
}

#[wasm_bindgen(js_name = dropoutMask)]
pub fn dropout_mask_js(rate: f64, seed: u64, side: usize) -> Result<Vec<f32>, JsError> {
    dropout_mask(rate, seed, side).map_err(js_err)
}

/// One line per layer of the CNN for a square input of side `side`:
/// name, output extents and parameter count. Errors name the first layer
/// whose geometry does not fit.
pub fn cnn_geometry(side: usize) -> digit_triad::Result<Vec<String>> {
    let mut spec = cnn_spec();
    spec.input_shape = vec![side, side, 1];
    let net: Sequential<f32> = spec.build(0)?;
    let mut lines = vec![format!("input      {:?}", net.input_shape())];
    for (layer, shape) in net.layers().iter().zip(&net.shapes()[1..]) {
        let params: usize = layer.parameters().iter().map(|p| p.len()).sum();
        lines.push(format!("{:<10} {:?}  {} params", layer.name(), shape, params));
    }
    lines.push(format!("total      {} params", net.parameter_count()));
    Ok(lines)
}

/// Converts an RGBA canvas into a 28×28 MNIST-style image: the ink's
/// bounding box is scaled to fit 20×20, then shifted so its centre of mass
/// sits at the image centre. Ink is distance from the corner colour, so both
/// dark-on-light and light-on-dark drawings work.
pub fn prepare_drawing(rgba: &[u8], width: usize, height: usize) -> Result<Vec<f32>, String> {
    if rgba.len() != width * height * 4 || width == 0 || height == 0 {
        return Err(format!("expected {}×{} RGBA bytes, got {}", width, height, rgba.len()));
    }
    let ink: Vec<f32> = rgba
        .chunks_exact(4)
        .map(|p| {
            let lum = (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0;
            p[3] as f32 / 255.0 * (1.0 - lum)
        })
        .collect();
    let bg = (ink[0] + ink[width - 1] + ink[(height - 1) * width] + ink[height * width - 1]) / 4.0;
    let ink: Vec<f32> = ink.iter().map(|&v| (v - bg).abs()).collect();

    let (mut x0, mut y0, mut x1, mut y1) = (width, height, 0, 0);
    for y in 0..height {
        for x in 0..width {
            if ink[y * width + x] > 0.1 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    let mut out = vec![0.0f32; PIXELS];
    if x0 > x1 {
        return Ok(out);
    }
    let (bw, bh) = ((x1 - x0 + 1) as f32, (y1 - y0 + 1) as f32);
    let scale = 20.0 / bw.max(bh);
    let (sw, sh) = ((bw * scale).round().max(1.0) as usize, (bh * scale).round().max(1.0) as usize);

    // Box-filter resample of the bounding box into sw × sh.
    let mut small = vec![0.0f32; sw * sh];
    for sy in 0..sh {
        for sx in 0..sw {
            let (fx0, fx1) = (x0 as f32 + sx as f32 / scale, x0 as f32 + (sx + 1) as f32 / scale);
            let (fy0, fy1) = (y0 as f32 + sy as f32 / scale, y0 as f32 + (sy + 1) as f32 / scale);
            let (mut sum, mut n) = (0.0, 0.0);
            for y in fy0.floor() as usize..(fy1.ceil() as usize).min(height) {
                for x in fx0.floor() as usize..(fx1.ceil() as usize).min(width) {
                    sum += ink[y * width + x];
                    n += 1.0;
                }
            }
            small[sy * sw + sx] = if n > 0.0 { sum / n } else { 0.0 };
        }
    }
    let peak = small.iter().cloned().fold(0.0f32, f32::max).max(1e-6);

    let (mut mx, mut my, mut mass) = (0.0f32, 0.0f32, 0.0f32);
    for sy in 0..sh {
        for sx in 0..sw {
            let v = small[sy * sw + sx];
            mx += v * sx as f32;
            my += v * sy as f32;
            mass += v;
        }
    }
    let half = (SIDE / 2) as f32;
    let (ox, oy) = ((half - mx / mass).round() as isize, (half - my / mass).round() as isize);
    for sy in 0..sh {
        for sx in 0..sw {
            let (x, y) = (sx as isize + ox, sy as isize + oy);
            if (0..SIDE as isize).contains(&x) && (0..SIDE as isize).contains(&y) {
                out[y as usize * SIDE + x as usize] = (small[sy * sw + sx] / peak).min(1.0);
            }
        }
    }
    Ok(out)
}

pub enum Model {
    Linear(LinearModel<f32>),
    Network(Sequential<f32>),
}

impl Model {
    /// Detects the format from the magic bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Model, String> {
        match bytes.get(..4) {
            Some(b"DSVM") => LinearModel::from_bytes(bytes).map(Model::Linear).map_err(|e| e.to_string()),
            Some(b"DNET") => Sequential::from_bytes(bytes).map(Model::Network).map_err(|e| e.to_string()),
            _ => Err("not a DSVM or DNET model file".into()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Model::Linear(_) => "linear svm".into(),
            Model::Network(n) if n.input_shape().len() == 3 => format!("cnn, {} parameters", n.parameter_count()),
            Model::Network(n) => format!("mlp, {} parameters", n.parameter_count()),
        }
    }

    /// Ten per-class scores for a 784-pixel image in [0, 1]: softmax
    /// probabilities for networks, raw decision values for the SVM.
    pub fn scores(&self, pixels: &[f32]) -> Result<Vec<f32>, String> {
        if pixels.len() != PIXELS {
            return Err(format!("expected {PIXELS} pixels, got {}", pixels.len()));
        }
        let out = match self {
            Model::Linear(m) => Tensor::from_vec(&[1, PIXELS], pixels.to_vec()).and_then(|x| m.decision_scores(&x)),
            Model::Network(n) => {
                let dims = [&[1][..], n.input_shape()].concat();
                Tensor::from_vec(&dims, pixels.to_vec()).and_then(|x| softmax(&n.infer(&x)?))
            }
        }
        .map_err(|e| e.to_string())?;
        debug_assert_eq!(out.len(), CLASSES);
        Ok(out.into_data())
    }

    /// Number of dropout layers, which are inactive at inference time.
    pub fn dropout_layers(&self) -> usize {
        match self {
            Model::Linear(_) => 0,
            Model::Network(n) => n.layers().iter().filter(|l| matches!(l, Layer::Dropout(_))).count(),
        }
    }
}

/// A trained model loaded from DSVM or DNET bytes.
#[wasm_bindgen]
pub struct Classifier {
    model: Model,
}

#[wasm_bindgen]
impl Classifier {
    #[wasm_bindgen(constructor)]
    pub fn new(bytes: &[u8]) -> Result<Classifier, JsError> {
        Ok(Classifier { model: Model::from_bytes(bytes).map_err(js_err)? })
    }

    pub fn kind(&self) -> String {
        self.model.describe()
    }

    pub fn scores(&self, pixels: &[f32]) -> Result<Vec<f32>, JsError> {
        self.model.scores(pixels).map_err(js_err)
    }

    #[wasm_bindgen(js_name = dropoutLayers)]
    pub fn dropout_layers(&self) -> usize {
        self.model.dropout_layers()
    }
}

/// Training-mode dropout applied to an all-ones `side × side` grid: entries
/// are 0 (dropped) or `1/(1 − rate)` (kept and rescaled).
pub fn dropout_mask(rate: f64, seed: u64, side: usize) -> digit_triad::Result<Vec<f32>> {
    let ones = Tensor::<f32>::full(&[1, side.max(1) * side.max(1)], 1.0)?;
    let mut rng = stream_rng(seed, 1);
    Ok(dropout_forward(&ones, rate, Mode::Train, &mut rng)?.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas(w: usize, h: usize, ink: impl Fn(usize, usize) -> bool) -> Vec<u8> {
        let mut px = Vec::with_capacity(w * h * 4);
        for y in 0..h {
            for x in 0..w {
                let v = if ink(x, y) { 0 } else { 255 };
                px.extend_from_slice(&[v, v, v, 255]);
            }
        }
        px
    }

    #[test]
    fn blank_canvas_is_blank() {
        let img = prepare_drawing(&canvas(56, 56, |_, _| false), 56, 56).unwrap();
        assert!(img.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn off_centre_stroke_is_recentred_and_fits_20_pixels() {
        let img = prepare_drawing(&canvas(200, 200, |x, y| (10..30).contains(&x) && (5..150).contains(&y)), 200, 200).unwrap();
        let rows: Vec<usize> = (0..SIDE).filter(|&r| img[r * SIDE..(r + 1) * SIDE].iter().any(|&v| v > 0.0)).collect();
        assert!(rows.len() <= 20 && rows.len() >= 18, "{rows:?}");
        let cols: Vec<usize> = (0..SIDE).filter(|&c| (0..SIDE).any(|r| img[r * SIDE + c] > 0.0)).collect();
        let mid = (cols[0] + cols[cols.len() - 1]) as f32 / 2.0;
        assert!((mid - 13.5).abs() <= 1.5, "{cols:?}");
        assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn geometry_walks_the_cnn() {
        let lines = cnn_geometry(28).unwrap();
        assert!(lines.iter().any(|l| l.contains("[12, 12, 64]")));
        assert!(lines.last().unwrap().contains("1199882"));
        assert!(cnn_geometry(4).is_err(), "4×4 input cannot fit two 3×3 convolutions and a pool");
        assert_eq!(conv_out_dim(28, 0, 3, 1).unwrap(), 26);
    }

    #[test]
    fn mask_values_are_zero_or_rescaled() {
        let m = dropout_mask(0.5, 1, 20).unwrap();
        assert_eq!(m.len(), 400);
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
        assert_ne!(dropout_mask(0.5, 1, 20).unwrap(), dropout_mask(0.5, 2, 20).unwrap());
    }

    #[test]
    fn classifier_round_trips_both_formats() {
        let svm = LinearModel::<f32>::zeros(10, 784).unwrap();
        let m = Model::from_bytes(&svm.to_bytes()).unwrap();
        assert_eq!(m.scores(&[0.0; 784]).unwrap(), vec![0.0; 10]);
        let mlp: Sequential<f32> = digit_triad::arch::build_mlp(1).unwrap();
        let m = Model::from_bytes(&mlp.to_bytes()).unwrap();
        let p = m.scores(&[0.5; 784]).unwrap();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        assert_eq!(m.dropout_layers(), 4);
        assert!(m.describe().starts_with("mlp"));
        assert!(Model::from_bytes(b"nope").is_err());
        assert!(m.scores(&[0.0; 3]).is_err());
    }
}
