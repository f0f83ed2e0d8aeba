//! Offline training: normalized squared-error cost with an activation
//! regularizer, reverse-mode gradients through the tree, and mini-batch SGD
//! with periodic compression.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doe::Sample;
use crate::error::{DmnError, Result};
use crate::network::{relu, CompressOptions, Gradient, MaterialNetwork, Weights};
use crate::tensor::Mat6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_z: f64,
    pub lr_angle: f64,
    /// Regularization coefficient on the total activation.
    pub lambda: f64,
    /// Epoch period of compression; 0 disables it.
    pub compress_every: usize,
    pub compress: CompressOptions,
    pub seed: u64,
    /// Per-component gradient bound.
    pub clip: f64,
    /// Epochs at which both learning rates double.
    pub restart_double_at: Vec<usize>,
    /// Epoch period of full train/test error evaluation.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            epochs: 5000,
            lr_z: 0.01,
            lr_angle: 0.02,
            lambda: 0.001,
            compress_every: 10,
            compress: CompressOptions::default(),
            seed: 0,
            clip: 10.0,
            restart_double_at: Vec::new(),
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(DmnError::Validation("batch size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) || !(self.lr_z >= 0.0) || !(self.lr_angle >= 0.0) {
            return Err(DmnError::Validation(
                "rates and λ must be nonnegative".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(DmnError::Validation("log period must be at least 1".into()));
        }
        Ok(())
    }
}

fn target_norm2(s: &Sample) -> f64 {
    s.c_target.norm_squared()
}

/// Relative Frobenius error `‖C_target − C̄‖ / ‖C_target‖`.
pub fn sample_error(net: &MaterialNetwork, s: &Sample) -> Result<f64> {
    let out = net.forward_linear(&s.c_p1, s.c_p2.as_ref())?.output;
    Ok((s.c_target - out).norm() / s.c_target.norm())
}

/// `λ·(Σ a(z) − 2^(N−2))²`.
pub fn regularization(net: &MaterialNetwork, lambda: f64) -> f64 {
    let excess = net.z.iter().map(|&z| relu(z)).sum::<f64>() - reg_target(net);
    lambda * excess * excess
}

fn reg_target(net: &MaterialNetwork) -> f64 {
    2f64.powi(net.depth as i32 - 2)
}

/// Total cost and the per-sample normalized squared errors `J_s`.
pub fn cost(net: &MaterialNetwork, batch: &[Sample], lambda: f64) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(DmnError::Validation("empty batch".into()));
    }
    let w = net.weights()?;
    let rot = net.prepare();
    let js: Vec<f64> = batch
        .par_iter()
        .map(|s| {
            let out = net
                .forward_prepared(&w, &rot, &s.c_p1, s.c_p2.as_ref())?
                .output;
            Ok((s.c_target - out).norm_squared() / target_norm2(s))
        })
        .collect::<Result<_>>()?;
    let mse = js.iter().sum::<f64>() / (2.0 * batch.len() as f64);
    Ok((mse + regularization(net, lambda), js))
}

/// Cost and its exact gradient with respect to all `z` and angles.
pub fn cost_and_gradient(
    net: &MaterialNetwork,
    batch: &[Sample],
    lambda: f64,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(DmnError::Validation("empty batch".into()));
    }
    let ns = batch.len() as f64;
    let w = net.weights()?;
    let rot = net.prepare();
    let parts: Vec<(f64, Gradient)> = batch
        .par_iter()
        .map(|s| sample_gradient(net, &w, &rot, s, ns))
        .collect::<Result<_>>()?;
    let mut grad = Gradient::zeros(net);
    let mut j = 0.0;
    for (js, g) in &parts {
        j += js;
        grad.add_assign(g);
    }
    j /= 2.0 * ns;
    let excess = net.z.iter().map(|&z| relu(z)).sum::<f64>() - reg_target(net);
    j += lambda * excess * excess;
    for (g, &z) in grad.z.iter_mut().zip(&net.z) {
        if z > 0.0 {
            *g += 2.0 * lambda * excess;
        }
    }
    Ok((j, grad))
}

fn sample_gradient(
    net: &MaterialNetwork,
    w: &Weights,
    rot: &[crate::block::PreparedRotation],
    s: &Sample,
    ns: f64,
) -> Result<(f64, Gradient)> {
    let fwd = net.forward_prepared(w, rot, &s.c_p1, s.c_p2.as_ref())?;
    let t2 = target_norm2(s);
    let diff: Mat6 = fwd.output - s.c_target;
    let js = diff.norm_squared() / t2;
    let g_out = diff / (ns * t2);
    Ok((js, net.backward_linear(w, rot, &fwd, &g_out)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub max: f64,
}

pub fn evaluate(net: &MaterialNetwork, samples: &[Sample]) -> Result<ErrorStats> {
    if samples.is_empty() {
        return Ok(ErrorStats {
            mean: 0.0,
            max: 0.0,
        });
    }
    let w = net.weights()?;
    let rot = net.prepare();
    let errs: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let out = net
                .forward_prepared(&w, &rot, &s.c_p1, s.c_p2.as_ref())?
                .output;
            Ok((s.c_target - out).norm() / s.c_target.norm())
        })
        .collect::<Result<_>>()?;
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let max = errs.iter().copied().fold(0.0, f64::max);
    Ok(ErrorStats { mean, max })
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_error: f64,
    pub test_error: f64,
    pub test_max_error: f64,
    pub active_leaves: usize,
    pub vf1: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.history.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_error,test_error,test_max_error,active_leaves,vf1\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{:.8e},{:.8e},{:.8e},{},{:.8}\n",
                r.epoch, r.train_error, r.test_error, r.test_max_error, r.active_leaves, r.vf1
            ));
        }
        s
    }
}

/// Resumable training state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trainer {
    pub net: MaterialNetwork,
    pub config: TrainConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    pub report: TrainReport,
}

impl Trainer {
    pub fn new(net: MaterialNetwork, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        net.validate()?;
        Ok(Self {
            net,
            config,
            epoch: 0,
            report: TrainReport::default(),
        })
    }

    fn lr_scale(&self) -> f64 {
        let doublings = self
            .config
            .restart_double_at
            .iter()
            .filter(|&&e| e <= self.epoch)
            .count();
        2f64.powi(doublings as i32)
    }

    /// Runs one epoch of shuffled mini-batch SGD.
    pub fn step_epoch(&mut self, train: &[Sample], test: &[Sample]) -> Result<()> {
        if train.is_empty() {
            return Err(DmnError::Validation("empty training set".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64 + 1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let scale = self.lr_scale();
        let (lr_z, lr_a) = (self.config.lr_z * scale, self.config.lr_angle * scale);
        let clip = self.config.clip;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (_, g) = cost_and_gradient(&self.net, &batch, self.config.lambda)?;
            for (z, gz) in self.net.z.iter_mut().zip(&g.z) {
                *z -= lr_z * gz.clamp(-clip, clip);
            }
            for (a, ga) in self.net.angles.iter_mut().zip(&g.angles) {
                a.alpha -= lr_a * ga[0].clamp(-clip, clip);
                a.beta -= lr_a * ga[1].clamp(-clip, clip);
                a.gamma -= lr_a * ga[2].clamp(-clip, clip);
            }
            if self.net.active_leaves() == 0 {
                return Err(DmnError::AllLeavesDeactivated);
            }
        }
        self.epoch += 1;

        if self.config.compress_every > 0 && self.epoch % self.config.compress_every == 0 {
            self.net.compress(&self.config.compress)?;
        }
        if self.epoch % self.config.log_every == 0 || self.epoch == self.config.epochs {
            self.log(train, test)?;
        }
        Ok(())
    }

    fn log(&mut self, train: &[Sample], test: &[Sample]) -> Result<()> {
        let tr = evaluate(&self.net, train)?;
        let te = evaluate(&self.net, test)?;
        let w = self.net.weights()?;
        self.report.history.push(EpochRecord {
            epoch: self.epoch,
            train_error: tr.mean,
            test_error: te.mean,
            test_max_error: te.max,
            active_leaves: self.net.active_leaves(),
            vf1: w.vf1,
        });
        Ok(())
    }

    /// Trains until `config.epochs`, calling `on_epoch` after each epoch.
    pub fn run(
        &mut self,
        train: &[Sample],
        test: &[Sample],
        mut on_epoch: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.step_epoch(train, test)?;
            on_epoch(self)?;
        }
        Ok(())
    }
}

/// Trains `net` on `train` with `config`; returns the trained network and report.
pub fn train(
    net: MaterialNetwork,
    train: &[Sample],
    test: &[Sample],
    config: TrainConfig,
) -> Result<(MaterialNetwork, TrainReport)> {
    let mut t = Trainer::new(net, config)?;
    t.run(train, test, |_| Ok(()))?;
    Ok((t.net, t.report))
}
