//! Fold training: windowed sampling, augmentation, AdamW steps, per-epoch
//! sliding-window validation, and strict-improvement early stopping.

use ndarray::{s, Array3, Array4};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trabs_autograd::{AdamW, AdamWConfig, Tape, Var};
use trabs_core::preprocess::{split_breasts, zscore_channels};
use trabs_core::{Case, CoreError};

use crate::augment::{augment, AugmentConfig};
use crate::error::{ModelError, Result};
use crate::infer::{sliding_window_probs, Blend, InferenceConfig};
use crate::loss::{dice_ce_from_probs, multiscale_loss};
use crate::net::Network;
use crate::splits::FoldSplit;
use crate::window::sample_window;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience_epochs: usize,
    /// Training window (depth, height, width) in voxels.
    pub window: [usize; 3],
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub crop_margin: usize,
    pub val_overlap: f64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-2,
            patience_epochs: 30,
            window: [32, 256, 256],
            batch_size: 2,
            max_epochs: 1000,
            seed: 0,
            crop_margin: 2,
            val_overlap: 0.5,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    /// CPU-scale preset (64x64x8 windows).
    pub fn toy() -> Self {
        TrainConfig {
            window: [8, 64, 64],
            batch_size: 8,
            max_epochs: 200,
            patience_epochs: 10,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience_epochs == 0 {
            return Err(ModelError::Config("patience must be >= 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ModelError::Config("batch_size and max_epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_overlap) {
            return Err(ModelError::Config("val_overlap must be in [0, 1)".into()));
        }
        Ok(())
    }
}

pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut x = base ^ a.wrapping_mul(0x9e3779b97f4a7c15) ^ b.wrapping_mul(0xc2b2ae3d27d4eb4f);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Strict-improvement early stopping.
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    pub best_epoch: usize,
    since_best: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochStats>,
}

/// One normalized breast-side crop with its ground truth.
pub struct SideSample {
    pub case_id: String,
    pub image: Array4<f32>,
    pub fgt: Array3<u8>,
}

/// Splits, normalizes, and collects the sides of each listed case.
pub fn prepare_sides(ids: &[String], cases: &[Case], margin: usize) -> Result<Vec<SideSample>> {
    let mut out = Vec::new();
    for id in ids {
        let case = cases
            .iter()
            .find(|c| &c.case_id == id)
            .ok_or_else(|| CoreError::MissingCase(id.clone(), "case set".into()))?;
        let pair = split_breasts(case, margin)?;
        for side in pair.sides() {
            let mut image = side.image.clone();
            zscore_channels(&mut image);
            let fgt = side.fgt.clone().ok_or_else(|| {
                CoreError::MissingCase(id.clone(), "ground-truth FGT masks".into())
            })?;
            out.push(SideSample {
                case_id: id.clone(),
                image,
                fgt,
            });
        }
    }
    if out.is_empty() {
        return Err(ModelError::Config("no training sides".into()));
    }
    Ok(out)
}

fn stack_batch(samples: &[(Array4<f32>, Array3<u8>)]) -> (Array4<f32>, Array4<u8>) {
    let n = samples.len();
    let s = samples[0].0.shape();
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    let mut images = Array4::<f32>::zeros((n * c, d, h, w));
    let mut masks = Array4::<u8>::zeros((n, d, h, w));
    for (i, (img, msk)) in samples.iter().enumerate() {
        images.slice_mut(s![i * c..(i + 1) * c, .., .., ..]).assign(img);
        masks.slice_mut(s![i, .., .., ..]).assign(msk);
    }
    (images, masks)
}

/// Trains `network` in place on one fold; on return the network holds the
/// best-validation-loss weights.
pub fn train_fold(
    network: &mut Network,
    fold: &FoldSplit,
    cases: &[Case],
    cfg: &TrainConfig,
) -> Result<TrainingRecord> {
    cfg.validate()?;
    let (fd, fp) = network.config().count_downsampling();
    if cfg.window[0] % fd != 0 || cfg.window[1] % fp != 0 || cfg.window[2] % fp != 0 {
        return Err(ModelError::Config(format!(
            "window {:?} not divisible by model downsampling ({fd}, {fp})",
            cfg.window
        )));
    }
    let train = prepare_sides(&fold.train_ids, cases, cfg.crop_margin)?;
    let val = prepare_sides(&fold.val_ids, cases, cfg.crop_margin)?;
    let val_cfg = InferenceConfig {
        window: cfg.window,
        overlap: cfg.val_overlap,
        tta_flips: false,
        blend: Blend::Uniform,
    };

    let mut opt = AdamW::new(
        AdamWConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        network.store(),
    );
    let mut stopper = EarlyStopper::new(cfg.patience_epochs);
    let mut best_weights = network.store().clone_tensors();
    let mut history = Vec::new();
    let in_channels = train[0].image.shape()[0];

    let mut epochs_run = 0usize;
    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        // one random window per training side, in a shuffled order
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64, 0));
        order.shuffle(&mut rng);

        let mut train_loss_sum = 0.0f64;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Array4<f32>, Array3<u8>)> = chunk
                .iter()
                .map(|&i| {
                    let sample = &train[i];
                    let (img, msk) = sample_window(
                        &sample.image,
                        &sample.fgt,
                        cfg.window,
                        derive_seed(cfg.seed, epoch as u64, 1 + i as u64),
                    );
                    augment(
                        &img,
                        &msk,
                        &cfg.augment,
                        derive_seed(cfg.seed, epoch as u64, 0x1000 + i as u64),
                    )
                })
                .collect();
            let (images, masks) = stack_batch(&batch);
            let b = batch.len();
            let (wd, wh, ww) = (cfg.window[0], cfg.window[1], cfg.window[2]);
            let x = Var::constant(
                images
                    .into_shape_with_order((b, in_channels, wd, wh, ww))
                    .unwrap()
                    .into_dyn(),
            );

            let tape = Tape::<f32>::new();
            let (out, pv) = network.forward_train(&tape, x);
            let loss = multiscale_loss(&out, &masks)?;
            let lv = loss.scalar() as f64;
            if !lv.is_finite() {
                return Err(ModelError::DivergedLoss { epoch, loss: lv });
            }
            train_loss_sum += lv;
            n_batches += 1;

            let mut grads = tape.backward(&loss);
            let collected: Vec<_> = network
                .store()
                .iter()
                .filter_map(|(id, _, _)| grads.take(pv.var(id)).map(|g| (id, g)))
                .collect();
            drop(grads);
            drop(out);
            opt.step(network.store_mut(), &collected);
        }
        let train_loss = train_loss_sum / n_batches.max(1) as f64;

        let mut val_loss_sum = 0.0f64;
        for sample in &val {
            let probs = sliding_window_probs(network, &sample.image, &val_cfg);
            val_loss_sum += dice_ce_from_probs(&probs, &sample.fgt);
        }
        let val_loss = val_loss_sum / val.len() as f64;
        if !val_loss.is_finite() {
            return Err(ModelError::DivergedLoss { epoch, loss: val_loss });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });

        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => {
                best_weights = network.store().clone_tensors();
            }
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    network.store_mut().restore_tensors(&best_weights);
    Ok(TrainingRecord {
        epochs_run,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_loss(),
        history,
    })
}

/// Epoch-loss history as CSV.
pub fn write_history_csv(path: &std::path::Path, history: &[EpochStats]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| ModelError::io(path, e.into()))?;
    wtr.write_record(["epoch", "train_loss", "val_loss"])
        .map_err(|e| ModelError::io(path, e.into()))?;
    for h in history {
        wtr.write_record([
            h.epoch.to_string(),
            format!("{:.6}", h.train_loss),
            format!("{:.6}", h.val_loss),
        ])
        .map_err(|e| ModelError::io(path, e.into()))?;
    }
    wtr.flush().map_err(|e| ModelError::io(path, e))?;
    Ok(())
}
