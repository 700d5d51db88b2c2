//! Mini-batch training with backpropagation through time.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{backward_sequence, forward_sequence, sequence_loss, wrap2, Net};
use super::{Normalization, TaLstmModel, TrainingMeta, WindowSeries, HEADING_SCALE_DEG, INPUT_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sequences per mini-batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub drop_factor: f64,
    /// Epochs between learning-rate drops.
    pub drop_period: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub clip_norm: f64,
    pub optimizer: Optimizer,
    /// Gaussian noise added to the inputs of each training pass, per
    /// feature, in units of that feature's standard deviation. Zero
    /// disables it.
    pub input_noise: [f64; INPUT_DIM],
    /// Standard deviation, in degrees, of Gaussian noise added to the
    /// teacher series fed to the network. Forecast targets stay clean.
    pub teacher_noise_deg: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 20,
            learning_rate: 0.005,
            drop_factor: 0.9,
            drop_period: 1,
            train_ratio: 0.7,
            val_ratio: 0.2,
            clip_norm: 1.0,
            optimizer: Optimizer::Sgd,
            input_noise: [0.0; INPUT_DIM],
            teacher_noise_deg: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs = 0: no training performed".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.drop_factor > 0.0 && self.drop_factor <= 1.0) {
            return Err(Error::InvalidInput(format!("drop factor must be in (0, 1], got {}", self.drop_factor)));
        }
        if self.drop_period == 0 {
            return Err(Error::InvalidInput("drop period must be >= 1".into()));
        }
        let ok_ratio = |r: f64| (0.0..=1.0).contains(&r);
        if !(ok_ratio(self.train_ratio) && ok_ratio(self.val_ratio) && self.train_ratio > 0.0)
            || self.train_ratio + self.val_ratio > 1.0 + 1e-12
        {
            return Err(Error::InvalidInput(format!(
                "split ratios train={} val={} are invalid",
                self.train_ratio, self.val_ratio
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidInput("clip norm must be positive".into()));
        }
        if self.input_noise.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("input noise must be finite and >= 0".into()));
        }
        if !(self.teacher_noise_deg >= 0.0 && self.teacher_noise_deg.is_finite()) {
            return Err(Error::InvalidInput("teacher noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training-split loss after each epoch.
    pub train_loss: Vec<f64>,
    /// Validation-split loss after each epoch, empty without a validation split.
    pub val_loss: Vec<f64>,
    pub test_loss: Option<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

type Prepared = (Vec<Vec<[f64; INPUT_DIM]>>, Vec<Vec<f64>>);

fn split_counts(n: usize, train: f64, val: f64) -> (usize, usize) {
    let nt = ((n as f64 * train).round() as usize).clamp(1, n);
    let nv = ((n as f64 * val).round() as usize).min(n - nt);
    (nt, nv)
}

fn eval(model: &TaLstmModel, data: &[Prepared]) -> f64 {
    let net = model.net();
    let (sum, count) = data
        .iter()
        .map(|(xs, ys)| {
            let pass = forward_sequence(&net, xs, ys);
            (sequence_loss(&pass, ys), ys.len().saturating_sub(1))
        })
        .fold((0.0, 0usize), |(s, c), (a, b)| (s + a, c + b));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Train `model` on whole sequences of consecutive windows.
///
/// Sequences are split into train/validation/test sets, features are
/// standardized on the training split, and each epoch visits the training
/// sequences in a seeded shuffled order. Per-sequence gradients within a
/// batch are computed in parallel and summed in sequence order.
pub fn train(model: &mut TaLstmModel, sequences: &[Vec<WindowSeries>], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let usable: Vec<&Vec<WindowSeries>> = sequences.iter().filter(|s| s.len() >= 2).collect();
    if usable.is_empty() {
        return Err(Error::InvalidInput(
            "empty dataset: need at least one sequence with two or more windows".into(),
        ));
    }
    for s in &usable {
        for w in s.iter() {
            w.validate(model.window())?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.shuffle(&mut rng);
    let (nt, nv) = split_counts(usable.len(), cfg.train_ratio, cfg.val_ratio);
    let train_idx = &order[..nt];
    let val_idx = &order[nt..nt + nv];
    let test_idx = &order[nt + nv..];

    model.norm = Normalization::fit(train_idx.iter().flat_map(|&i| usable[i].iter())).with_gain(model.window() as f64);
    let prep = |idx: &[usize], m: &TaLstmModel| -> Result<Vec<Prepared>> {
        idx.iter().map(|&i| m.prepare_sequence(usable[i])).collect()
    };
    let train_set = prep(train_idx, model)?;
    let val_set = prep(val_idx, model)?;
    let test_set = prep(test_idx, model)?;

    let n_params = model.params.len();
    let mut lr = cfg.learning_rate;
    let mut adam_m = vec![0.0; n_params];
    let mut adam_v = vec![0.0; n_params];
    let mut adam_t = 0i32;
    let mut train_trace = Vec::with_capacity(cfg.epochs);
    let mut val_trace = Vec::with_capacity(cfg.epochs);
    let noisy = cfg.input_noise.iter().any(|v| *v > 0.0);
    let mut input_sd = cfg.input_noise;
    input_sd.iter_mut().for_each(|v| *v *= model.window() as f64);
    let teacher_sd = cfg.teacher_noise_deg / HEADING_SCALE_DEG;
    let mut batch_order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        batch_order.shuffle(&mut rng);
        for batch in batch_order.chunks(cfg.batch_size) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
            let layout = model.layout().clone();
            let params = &model.params;
            let parts: Vec<(f64, usize, Vec<f64>)> = batch
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(&i, &s)| {
                    let net = Net::new(&layout, params);
                    let (xs, ys) = &train_set[i];
                    let noisy_xs;
                    let xs = if noisy {
                        noisy_xs = add_noise(xs, &input_sd, s);
                        &noisy_xs
                    } else {
                        xs
                    };
                    let noisy_ys;
                    let teacher = if teacher_sd > 0.0 {
                        noisy_ys = add_teacher_noise(ys, teacher_sd, s ^ 0x5eed);
                        &noisy_ys
                    } else {
                        ys
                    };
                    let pass = forward_sequence(&net, xs, teacher);
                    let loss = sequence_loss(&pass, ys);
                    let mut g = vec![0.0; n_params];
                    backward_sequence(&net, &pass, ys, 1.0, &mut g);
                    (loss, ys.len() - 1, g)
                })
                .collect();
            let count: usize = parts.iter().map(|p| p.1).sum();
            let mut grad = vec![0.0; n_params];
            let mut loss = 0.0;
            for (l, _, g) in &parts {
                loss += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let inv = 1.0 / count as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            loss *= inv;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} in epoch {} (learning rate {lr} may be too high)",
                    epoch + 1
                )));
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in model.params.iter_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
                Optimizer::Adam => {
                    adam_t += 1;
                    let (b1, b2) = (0.9f64, 0.999f64);
                    let c1 = 1.0 - b1.powi(adam_t);
                    let c2 = 1.0 - b2.powi(adam_t);
                    for j in 0..n_params {
                        adam_m[j] = b1 * adam_m[j] + (1.0 - b1) * grad[j];
                        adam_v[j] = b2 * adam_v[j] + (1.0 - b2) * grad[j] * grad[j];
                        let mh = adam_m[j] / c1;
                        let vh = adam_v[j] / c2;
                        model.params[j] -= lr * mh / (vh.sqrt() + 1e-8);
                    }
                }
            }
        }
        if (epoch + 1) % cfg.drop_period == 0 {
            lr *= cfg.drop_factor;
        }
        let tl = eval(model, &train_set);
        if !tl.is_finite() {
            return Err(Error::Training(format!(
                "training loss became {tl} after epoch {} (learning rate may be too high)",
                epoch + 1
            )));
        }
        train_trace.push(tl);
        if !val_set.is_empty() {
            val_trace.push(eval(model, &val_set));
        }
        log::debug!("epoch {} train {tl:.6} lr {lr:.3e}", epoch + 1);
    }

    let test_loss = if test_set.is_empty() {
        None
    } else {
        Some(eval(model, &test_set))
    };
    model.meta = TrainingMeta {
        epochs: cfg.epochs as u32,
        learning_rate: cfg.learning_rate,
        drop_factor: cfg.drop_factor,
        seed: cfg.seed,
        loss_trace: train_trace.clone(),
        val_trace: val_trace.clone(),
    };
    Ok(TrainReport {
        train_loss: train_trace,
        val_loss: val_trace,
        test_loss,
        n_train: train_set.len(),
        n_val: val_set.len(),
        n_test: test_set.len(),
    })
}

fn add_noise(xs: &[Vec<[f64; INPUT_DIM]>], sd: &[f64; INPUT_DIM], seed: u64) -> Vec<Vec<[f64; INPUT_DIM]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    xs.iter()
        .map(|w| {
            w.iter()
                .map(|x| {
                    let mut o = *x;
                    for c in 0..INPUT_DIM {
                        if sd[c] > 0.0 {
                            o[c] += sd[c] * unit.sample(&mut rng);
                        }
                    }
                    o
                })
                .collect()
        })
        .collect()
}

/// Noisy copy of scaled headings, wrapped back into `[-1, 1)`.
fn add_teacher_noise(ys: &[Vec<f64>], sd: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    ys.iter()
        .map(|w| w.iter().map(|y| wrap2(y + sd * unit.sample(&mut rng))).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::talstm::ModelDims;

    fn constant_sequence(theta: f64, t: usize, windows: usize) -> Vec<WindowSeries> {
        (1..=windows)
            .map(|n| WindowSeries {
                n,
                inputs: (0..t)
                    .map(|k| {
                        let s = ((n - 1) * t + k) as f64;
                        [s * 0.8, s * 0.5, 2.0 - 0.01 * s, 30.0 - 0.02 * s]
                    })
                    .collect(),
                targets: vec![theta; t],
            })
            .collect()
    }

    #[test]
    fn split_counts_cover_dataset() {
        assert_eq!(split_counts(10, 0.7, 0.2), (7, 2));
        assert_eq!(split_counts(1, 0.7, 0.2), (1, 0));
        assert_eq!(split_counts(3, 0.7, 0.2), (2, 1));
    }

    #[test]
    fn rejects_zero_epochs_and_empty_data() {
        let mut m = TaLstmModel::new(ModelDims::new(3, 4), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let e = train(&mut m, &[constant_sequence(1.0, 4, 2)], &cfg).unwrap_err();
        assert!(e.to_string().contains("no training performed"));
        let e = train(&mut m, &[], &TrainConfig::default()).unwrap_err();
        assert!(e.to_string().contains("empty dataset"));
    }

    #[test]
    fn diverging_learning_rate_is_reported() {
        let mut m = TaLstmModel::new(ModelDims::new(3, 4), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: f64::MAX,
            clip_norm: f64::MAX,
            ..Default::default()
        };
        let e = train(&mut m, &[constant_sequence(1.0, 4, 3)], &cfg).unwrap_err();
        assert!(matches!(e, Error::Training(_)), "{e}");
    }

    #[test]
    fn same_seed_same_parameters() {
        let data: Vec<_> = (0..6).map(|i| constant_sequence(10.0 * i as f64, 4, 3)).collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            seed: 9,
            input_noise: [0.1; INPUT_DIM],
            ..Default::default()
        };
        let mut a = TaLstmModel::new(ModelDims::new(4, 4), 1).unwrap();
        let mut b = TaLstmModel::new(ModelDims::new(4, 4), 1).unwrap();
        train(&mut a, &data, &cfg).unwrap();
        train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
