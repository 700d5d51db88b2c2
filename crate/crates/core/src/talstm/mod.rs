//! Temporal-attention LSTM heading predictor.
//!
//! Windows of `T` steps carry per-step features `[x, y, D, I]` (position
//! and field sample relative to the current destination) and the headings
//! commanded at those steps. After each window the model forecasts the
//! `T` headings of the next window.

mod gradcheck;
mod io;
mod lstm;
mod network;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::angle::wrap_deg;
use crate::error::{Error, Result};

pub use gradcheck::{check_fixture, gradient_check, GradCheckOptions, GradCheckReport, TensorCheck, GRADCHECK_SEED};
pub use io::{load_model, read_dataset_csv, save_model, write_dataset_csv, MODEL_MAGIC, MODEL_VERSION};
pub use lstm::{lstm_step, LstmParams};
pub use network::{softmax, DecodeOut, EncodeOut};
pub use params::{Layout, ModelDims, Tensor, TENSORS};
pub use train::{train, Optimizer, TrainConfig, TrainReport};

use network::Net;

/// Number of per-step input features.
pub const INPUT_DIM: usize = 4;

/// Heading scale: degrees per unit of the network's output.
pub const HEADING_SCALE_DEG: f64 = 180.0;

/// One length-`T` window: inputs `[l_x, l_y, D, I]` and headings in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSeries {
    /// 1-based window index within its sequence.
    pub n: usize,
    pub inputs: Vec<[f64; INPUT_DIM]>,
    pub targets: Vec<f64>,
}

impl WindowSeries {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn validate(&self, window: usize) -> Result<()> {
        if self.inputs.len() != window || self.targets.len() != window {
            return Err(Error::InvalidInput(format!(
                "window {} has {} inputs and {} targets, model window is {window}",
                self.n,
                self.inputs.len(),
                self.targets.len()
            )));
        }
        let finite = self.inputs.iter().flatten().chain(&self.targets).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput(format!("window {} has non-finite values", self.n)));
        }
        Ok(())
    }
}

/// Per-feature standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; INPUT_DIM],
    pub std: [f64; INPUT_DIM],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean: [0.0; INPUT_DIM],
            std: [1.0; INPUT_DIM],
        }
    }
}

impl Normalization {
    /// Mean and population standard deviation over every step of every window.
    /// Near-constant features keep unit scale.
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a WindowSeries>) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0; INPUT_DIM];
        let mut sq = [0.0; INPUT_DIM];
        for w in windows {
            for x in &w.inputs {
                n += 1;
                for c in 0..INPUT_DIM {
                    sum[c] += x[c];
                    sq[c] += x[c] * x[c];
                }
            }
        }
        if n == 0 {
            return Self::default();
        }
        let mut out = Self::default();
        for c in 0..INPUT_DIM {
            let m = sum[c] / n as f64;
            let var = (sq[c] / n as f64 - m * m).max(0.0);
            out.mean[c] = m;
            out.std[c] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        out
    }

    /// Multiply the standardized output by `gain`. Attention weights over a
    /// window average `1 / T`, so a gain of `T` keeps attended inputs near
    /// unit scale.
    pub fn with_gain(mut self, gain: f64) -> Self {
        self.std.iter_mut().for_each(|s| *s /= gain);
        self
    }

    pub fn apply(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        let mut o = [0.0; INPUT_DIM];
        for c in 0..INPUT_DIM {
            o[c] = (x[c] - self.mean[c]) / self.std[c];
        }
        o
    }
}

/// Training provenance stored with a model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: u32,
    pub learning_rate: f64,
    pub drop_factor: f64,
    pub seed: u64,
    pub loss_trace: Vec<f64>,
    pub val_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaLstmModel {
    layout: Layout,
    pub params: Vec<f64>,
    pub norm: Normalization,
    pub meta: TrainingMeta,
}

impl TaLstmModel {
    /// Freshly initialized, untrained model.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.hidden == 0 || dims.window == 0 {
            return Err(Error::InvalidInput(format!(
                "hidden size and window must be positive, got {} and {}",
                dims.hidden, dims.window
            )));
        }
        let layout = Layout::new(dims);
        let params = layout.init(seed);
        Ok(Self {
            layout,
            params,
            norm: Normalization::default(),
            meta: TrainingMeta {
                seed,
                ..Default::default()
            },
        })
    }

    pub(crate) fn from_parts(dims: ModelDims, params: Vec<f64>, norm: Normalization, meta: TrainingMeta) -> Result<Self> {
        let layout = Layout::new(dims);
        if params.len() != layout.total() {
            return Err(Error::Model(format!(
                "parameter count {} does not match dimensions (expected {})",
                params.len(),
                layout.total()
            )));
        }
        Ok(Self {
            layout,
            params,
            norm,
            meta,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.layout.dims
    }

    pub fn window(&self) -> usize {
        self.layout.dims.window
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn is_trained(&self) -> bool {
        !self.meta.loss_trace.is_empty()
    }

    pub fn tensor(&self, t: Tensor) -> &[f64] {
        &self.params[self.layout.range(t)]
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [f64] {
        let r = self.layout.range(t);
        &mut self.params[r]
    }

    pub fn encoder_lstm(&self) -> LstmParams {
        LstmParams {
            hidden: self.dims().hidden,
            input: INPUT_DIM,
            w: self.tensor(Tensor::EncW).to_vec(),
            b: self.tensor(Tensor::EncB).to_vec(),
        }
    }

    pub fn decoder_lstm(&self) -> LstmParams {
        LstmParams {
            hidden: self.dims().hidden,
            input: self.dims().fusion(),
            w: self.tensor(Tensor::DecW).to_vec(),
            b: self.tensor(Tensor::DecB).to_vec(),
        }
    }

    pub(crate) fn net(&self) -> Net<'_> {
        Net::new(&self.layout, &self.params)
    }

    /// Normalized inputs and scaled teacher series of a window.
    pub(crate) fn prepare(&self, w: &WindowSeries) -> (Vec<[f64; INPUT_DIM]>, Vec<f64>) {
        let x = w.inputs.iter().map(|v| self.norm.apply(v)).collect();
        let y = w.targets.iter().map(|v| wrap_deg(*v) / HEADING_SCALE_DEG).collect();
        (x, y)
    }

    /// Training loss (mean over forecast windows) of a set of sequences.
    pub fn loss(&self, sequences: &[Vec<WindowSeries>]) -> Result<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for seq in sequences {
            let (xs, ys) = self.prepare_sequence(seq)?;
            let pass = network::forward_sequence(&self.net(), &xs, &ys);
            sum += network::sequence_loss(&pass, &ys);
            count += seq.len().saturating_sub(1);
        }
        if count == 0 {
            return Err(Error::InvalidInput("no forecast windows in dataset".into()));
        }
        Ok(sum / count as f64)
    }

    pub(crate) fn prepare_sequence(&self, seq: &[WindowSeries]) -> Result<(Vec<Vec<[f64; INPUT_DIM]>>, Vec<Vec<f64>>)> {
        let mut xs = Vec::with_capacity(seq.len());
        let mut ys = Vec::with_capacity(seq.len());
        for w in seq {
            w.validate(self.window())?;
            let (x, y) = self.prepare(w);
            xs.push(x);
            ys.push(y);
        }
        Ok((xs, ys))
    }
}

/// Forecast for the next window.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Headings in degrees, each in (-180, 180].
    pub headings_deg: Vec<f64>,
    pub local_attention: Vec<f64>,
    pub global_attention: Vec<f64>,
}

/// Streaming inference over the windows of one mission leg.
#[derive(Debug, Clone)]
pub struct Predictor<'m> {
    model: &'m TaLstmModel,
    he: Vec<f64>,
    ce: Vec<f64>,
    hd: Vec<f64>,
    cd: Vec<f64>,
    enc_states: Vec<Vec<f64>>,
}

impl<'m> Predictor<'m> {
    pub fn new(model: &'m TaLstmModel) -> Result<Self> {
        if !model.is_trained() {
            return Err(Error::Policy("TA-LSTM model has not been trained".into()));
        }
        Ok(Self::new_untrained(model))
    }

    /// Skip the trained-model check, for tests and diagnostics.
    pub fn new_untrained(model: &'m TaLstmModel) -> Self {
        let h = model.dims().hidden;
        Self {
            model,
            he: vec![0.0; h],
            ce: vec![0.0; h],
            hd: vec![0.0; h],
            cd: vec![0.0; h],
            enc_states: Vec::new(),
        }
    }

    pub fn windows_seen(&self) -> usize {
        self.enc_states.len()
    }

    /// Consume window `n` and forecast window `n + 1`.
    pub fn predict_window(&mut self, w: &WindowSeries) -> Result<Prediction> {
        w.validate(self.model.window())?;
        let net = self.model.net();
        let (x, y) = self.model.prepare(w);
        let (eo, _) = network::encode(&net, &x, &y, &self.he, &self.ce);
        self.enc_states.push(eo.he.clone());
        let (dout, _, yhat) = network::decode(&net, &eo.xbar, &self.enc_states, &y, &self.hd, &self.cd);
        self.he = eo.he;
        self.ce = eo.ce;
        self.hd = dout.hd;
        self.cd = dout.cd;
        Ok(Prediction {
            headings_deg: yhat.iter().map(|v| wrap_deg(v * HEADING_SCALE_DEG)).collect(),
            local_attention: eo.attention,
            global_attention: dout.beta,
        })
    }
}

/// Local-attention encoder for one window from explicit previous states.
pub fn encode_window(model: &TaLstmModel, w: &WindowSeries, he: &[f64], ce: &[f64]) -> Result<EncodeOut> {
    w.validate(model.window())?;
    let (x, y) = model.prepare(w);
    Ok(network::encode(&model.net(), &x, &y, he, ce).0)
}

/// Global-attention decoder step. `teacher` is in degrees; returns the new
/// decoder state and the forecast in degrees.
pub fn decode_window(
    model: &TaLstmModel,
    xbar: &[f64],
    enc_states: &[Vec<f64>],
    teacher: &[f64],
    hd: &[f64],
    cd: &[f64],
) -> Result<(DecodeOut, Vec<f64>)> {
    let d = model.dims();
    if enc_states.is_empty() {
        return Err(Error::InvalidInput("decoder needs at least one encoder state".into()));
    }
    if xbar.len() != d.window * INPUT_DIM || teacher.len() != d.window {
        return Err(Error::InvalidInput("decoder input dimensions do not match the model".into()));
    }
    let y: Vec<f64> = teacher.iter().map(|v| wrap_deg(*v) / HEADING_SCALE_DEG).collect();
    let (out, _, yhat) = network::decode(&model.net(), xbar, enc_states, &y, hd, cd);
    Ok((out, yhat.iter().map(|v| wrap_deg(v * HEADING_SCALE_DEG)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_window(rng: &mut ChaCha8Rng, n: usize, t: usize) -> WindowSeries {
        WindowSeries {
            n,
            inputs: (0..t)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect(),
            targets: (0..t).map(|_| rng.random_range(-170.0..170.0)).collect(),
        }
    }

    #[test]
    fn softmax_properties() {
        let u = softmax(&[0.3; 7]);
        assert!(u.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));
        let mut e = vec![0.5; 20];
        e[4] += 20.0;
        let a = softmax(&e);
        assert!(a[4] > 0.999);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = e.iter().map(|v| v + 123.0).collect();
        let b = softmax(&shifted);
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        assert_eq!(argmax(&a), argmax(&b));
    }

    #[test]
    fn attention_weights_are_distributions() {
        let model = TaLstmModel::new(ModelDims::new(6, 5), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = Predictor::new_untrained(&model);
        for n in 1..=4 {
            let pr = p.predict_window(&random_window(&mut rng, n, 5)).unwrap();
            assert_eq!(pr.headings_deg.len(), 5);
            assert_eq!(pr.global_attention.len(), n);
            for w in [&pr.local_attention, &pr.global_attention] {
                assert!(w.iter().all(|v| *v >= 0.0));
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert!(pr.headings_deg.iter().all(|h| *h > -180.0 && *h <= 180.0));
        }
    }

    #[test]
    fn single_state_decoder_uses_that_state() {
        let model = TaLstmModel::new(ModelDims::new(4, 3), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random_window(&mut rng, 1, 3);
        let h = vec![0.0; 4];
        let eo = encode_window(&model, &w, &h, &h).unwrap();
        let (d, _) = decode_window(&model, &eo.xbar, &[eo.he.clone()], &w.targets, &h, &h).unwrap();
        assert_eq!(d.beta, vec![1.0]);
        for j in 0..4 {
            assert!((d.context[j] - eo.he[j]).abs() < 1e-15);
        }
        let same = vec![eo.he.clone(); 3];
        let (d, _) = decode_window(&model, &eo.xbar, &same, &w.targets, &h, &h).unwrap();
        for j in 0..4 {
            assert!((d.context[j] - eo.he[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_is_pure() {
        let model = TaLstmModel::new(ModelDims::new(5, 4), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ws: Vec<_> = (1..=3).map(|n| random_window(&mut rng, n, 4)).collect();
        let run = || {
            let mut p = Predictor::new_untrained(&model);
            ws.iter().map(|w| p.predict_window(w).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn untrained_model_rejected_for_missions() {
        let model = TaLstmModel::new(ModelDims::new(3, 2), 0).unwrap();
        assert!(matches!(Predictor::new(&model), Err(Error::Policy(_))));
    }

    #[test]
    fn zero_output_head_loss_is_mean_square_of_bias() {
        let mut model = TaLstmModel::new(ModelDims::new(4, 3), 7).unwrap();
        for t in [Tensor::OutW, Tensor::OutBw, Tensor::OutV] {
            model.tensor_mut(t).fill(0.0);
        }
        let bias = [0.1, -0.2, 0.3];
        model.tensor_mut(Tensor::OutBy).copy_from_slice(&bias);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seq: Vec<_> = (1..=3).map(|n| random_window(&mut rng, n, 3)).collect();
        for w in &mut seq {
            w.targets = vec![0.0; 3];
        }
        let expected = bias.iter().map(|b| b * b).sum::<f64>() / 3.0;
        assert!((model.loss(&[seq]).unwrap() - expected).abs() < 1e-15);
    }
}
