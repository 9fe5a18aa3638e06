//! Mini-batch Adam training with a plateau learning-rate schedule, and
//! test-split evaluation.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::chanmodel::{stream_rng, ChannelSample, Dataset, Split, Stream};
use crate::error::{check_dim, invalid, Error, Result};
use crate::models::loss::{loss_m_batch, loss_s_batch, mse_batch};
use crate::models::{sample_rows, BaselineAe, BaselineBf, CsiFBnetM, CsiFBnetS, LossVariant};
use crate::nncore::{AdamState, Mlp, MlpGrads, QuantMode, Real};

mod eval;

pub use eval::{evaluate, evaluate_nmse, AeBf, AeConjPhase, BeamPolicy, ConjPhase, Metric, MultiCellOracle};

/// Rows per chunk when evaluating a whole split.
pub const EVAL_CHUNK: usize = 1024;

/// What the network is trained to minimize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Single-cell beam loss.
    BeamS { variant: LossVariant },
    /// Multi-cell negated SINR at a fixed `(alpha, rho)`.
    BeamM { alpha: f64, rho: f64 },
    /// Reconstruction error.
    Mse,
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        if let Objective::BeamM { alpha, rho } = *self {
            if rho == f64::INFINITY {
                return Err(invalid("rho = infinity is not trainable: the loss does not converge"));
            }
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(invalid(format!("rho must be positive and finite, got {rho}")));
            }
            if !(0.0..=1.0).contains(&alpha) {
                return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_init: f64,
    pub plateau_epochs: usize,
    pub lr_decay: f64,
    /// Absolute improvement the validation loss must make to reset the plateau counter.
    pub plateau_tol: f64,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 500,
            epochs: 200,
            lr_init: 1e-3,
            plateau_epochs: 40,
            lr_decay: 0.5,
            plateau_tol: 1e-6,
            seed: 0,
            objective: Objective::BeamS {
                variant: LossVariant::Abs2,
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if !(self.lr_init > 0.0) || !self.lr_init.is_finite() {
            return Err(invalid(format!("lr_init must be positive, got {}", self.lr_init)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(invalid(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.plateau_epochs == 0 {
            return Err(invalid("plateau_epochs must be positive"));
        }
        if !(self.plateau_tol >= 0.0) {
            return Err(invalid("plateau_tol must be non-negative"));
        }
        self.objective.validate()
    }
}

/// Halves (by `decay`) the learning rate once the monitored loss has gone
/// `patience` consecutive observations without beating its best by more than
/// `tol`; the counter then restarts.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    decay: f64,
    patience: usize,
    tol: f64,
    best: f64,
    stale: usize,
    reductions: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, decay: f64, patience: usize, tol: f64) -> Self {
        Self {
            lr,
            decay,
            patience,
            tol,
            best: f64::INFINITY,
            stale: 0,
            reductions: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Records one loss and returns the learning rate to use next.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best - self.tol || self.best == f64::INFINITY {
            self.best = self.best.min(loss);
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale == self.patience {
                self.lr *= self.decay;
                self.reductions += 1;
                self.stale = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used for the updates of this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<EpochRecord>,
}

impl LossTrace {
    pub const HEADER: &'static str = "epoch,train_loss,val_loss,lr";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{},{:e},{:e},{:e}", r.epoch, r.train_loss, r.val_loss, r.lr);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::write_atomic(path, self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainStatus {
    Completed,
    /// Stopped early on a non-finite loss or gradient; the model is the best one seen before.
    Aborted { epoch: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters with the lowest validation loss over all logged epochs.
    pub model: M,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub trace: LossTrace,
    pub status: TrainStatus,
}

/// Channels of one split as batches in real-concat layout, plus an optional
/// network-input override (used to feed reconstructed CSI to a beamformer
/// while the loss still sees the true channels).
#[derive(Debug, Clone)]
pub struct TrainData<F> {
    pub h: Array2<F>,
    pub g: Option<Array2<F>>,
    pub input: Option<Array2<F>>,
}

impl<F: Real> TrainData<F> {
    pub fn from_samples(h: &[ChannelSample], g: Option<&[ChannelSample]>) -> Result<Self> {
        let n_t = h.first().ok_or_else(|| invalid("empty sample set"))?.n_t();
        let hx = sample_rows(h, n_t)?;
        let gx = match g {
            Some(g) => {
                check_dim(h.len(), g.len())?;
                Some(sample_rows(g, n_t)?)
            }
            None => None,
        };
        Ok(Self {
            h: hx,
            g: gx,
            input: None,
        })
    }

    /// The `split` of `ds`, with `g` when the dataset is paired.
    pub fn from_split(ds: &Dataset, split: Split) -> Result<Self> {
        let (h, g) = split_samples(ds, split);
        Self::from_samples(&h, g.as_deref())
    }

    pub fn with_input(mut self, input: Array2<F>) -> Result<Self> {
        check_dim(self.len(), input.nrows())?;
        self.input = Some(input);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self) -> Batch<'_, F> {
        Batch {
            h: self.h.view(),
            g: self.g.as_ref().map(|g| g.view()),
            input: self.input.as_ref().map(|x| x.view()),
        }
    }

    fn select(&self, idx: &[usize]) -> TrainData<F> {
        TrainData {
            h: self.h.select(Axis(0), idx),
            g: self.g.as_ref().map(|g| g.select(Axis(0), idx)),
            input: self.input.as_ref().map(|x| x.select(Axis(0), idx)),
        }
    }

    fn rows(&self, start: usize, end: usize) -> Batch<'_, F> {
        let s = ndarray::s![start..end, ..];
        Batch {
            h: self.h.slice(s),
            g: self.g.as_ref().map(|g| g.slice(s)),
            input: self.input.as_ref().map(|x| x.slice(s)),
        }
    }
}

/// Clones the `h` (and `g`) samples of one split, in split order.
pub fn split_samples(ds: &Dataset, split: Split) -> (Vec<ChannelSample>, Option<Vec<ChannelSample>>) {
    let idx = ds.indices(split);
    let h = idx.iter().map(|&i| ds.h[i].clone()).collect();
    let g = ds.g.as_ref().map(|g| idx.iter().map(|&i| g[i].clone()).collect());
    (h, g)
}

#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, F> {
    pub h: ArrayView2<'a, F>,
    pub g: Option<ArrayView2<'a, F>>,
    pub input: Option<ArrayView2<'a, F>>,
}

impl<'a, F: Real> Batch<'a, F> {
    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn need_g(&self) -> Result<ArrayView2<'a, F>> {
        self.g.ok_or_else(|| invalid("this objective needs paired (h, g) data"))
    }
}

/// A model the trainer can fit: a fixed list of networks and a differentiable loss.
pub trait Trainable<F: Real>: Clone {
    fn nets(&self) -> Vec<&Mlp<F>>;
    fn nets_mut(&mut self) -> Vec<&mut Mlp<F>>;
    fn check_objective(&self, objective: &Objective) -> Result<()>;
    /// Batch-mean loss and its gradients (one entry per network in `nets()` order).
    fn loss_and_grads(&self, batch: &Batch<'_, F>, objective: &Objective, mode: QuantMode) -> Result<(f64, Vec<MlpGrads<F>>)>;
    /// Batch-mean loss with the quantizer active.
    fn loss(&self, batch: &Batch<'_, F>, objective: &Objective) -> Result<f64>;
}

fn wrong_objective(model: &str, objective: &Objective) -> Error {
    invalid(format!("{model} cannot be trained on {objective:?}"))
}

impl<F: Real> Trainable<F> for CsiFBnetS<F> {
    fn nets(&self) -> Vec<&Mlp<F>> {
        CsiFBnetS::nets(self)
    }

    fn nets_mut(&mut self) -> Vec<&mut Mlp<F>> {
        CsiFBnetS::nets_mut(self)
    }

    fn check_objective(&self, objective: &Objective) -> Result<()> {
        match objective {
            Objective::BeamS { .. } => Ok(()),
            o => Err(wrong_objective("csifbnet-s", o)),
        }
    }

    fn loss_and_grads(&self, batch: &Batch<'_, F>, objective: &Objective, mode: QuantMode) -> Result<(f64, Vec<MlpGrads<F>>)> {
        let Objective::BeamS { variant } = *objective else {
            return Err(wrong_objective("csifbnet-s", objective));
        };
        let fw = self.forward_batch(batch.h, mode)?;
        let (loss, dtheta) = loss_s_batch(batch.h, fw.theta.view(), variant)?;
        Ok((loss, self.backward_batch(&fw, dtheta.view())?))
    }

    fn loss(&self, batch: &Batch<'_, F>, objective: &Objective) -> Result<f64> {
        let Objective::BeamS { variant } = *objective else {
            return Err(wrong_objective("csifbnet-s", objective));
        };
        let fw = self.forward_batch(batch.h, QuantMode::Active)?;
        Ok(loss_s_batch(batch.h, fw.theta.view(), variant)?.0)
    }
}

impl<F: Real> Trainable<F> for CsiFBnetM<F> {
    fn nets(&self) -> Vec<&Mlp<F>> {
        CsiFBnetM::nets(self)
    }

    fn nets_mut(&mut self) -> Vec<&mut Mlp<F>> {
        CsiFBnetM::nets_mut(self)
    }

    fn check_objective(&self, objective: &Objective) -> Result<()> {
        match objective {
            Objective::BeamM { .. } => Ok(()),
            o => Err(wrong_objective("csifbnet-m", o)),
        }
    }

    fn loss_and_grads(&self, batch: &Batch<'_, F>, objective: &Objective, mode: QuantMode) -> Result<(f64, Vec<MlpGrads<F>>)> {
        let Objective::BeamM { alpha, rho } = *objective else {
            return Err(wrong_objective("csifbnet-m", objective));
        };
        let g = batch.need_g()?;
        let fw = self.forward_batch(batch.h, g, mode)?;
        let (loss, dtheta) = loss_m_batch(batch.h, g, fw.theta.view(), alpha, rho)?;
        Ok((loss, self.backward_batch(&fw, dtheta.view())?))
    }

    fn loss(&self, batch: &Batch<'_, F>, objective: &Objective) -> Result<f64> {
        let Objective::BeamM { alpha, rho } = *objective else {
            return Err(wrong_objective("csifbnet-m", objective));
        };
        let g = batch.need_g()?;
        let fw = self.forward_batch(batch.h, g, QuantMode::Active)?;
        Ok(loss_m_batch(batch.h, g, fw.theta.view(), alpha, rho)?.0)
    }
}

impl<F: Real> Trainable<F> for BaselineAe<F> {
    fn nets(&self) -> Vec<&Mlp<F>> {
        BaselineAe::nets(self)
    }

    fn nets_mut(&mut self) -> Vec<&mut Mlp<F>> {
        BaselineAe::nets_mut(self)
    }

    fn check_objective(&self, objective: &Objective) -> Result<()> {
        match objective {
            Objective::Mse => Ok(()),
            o => Err(wrong_objective("baseline-ae", o)),
        }
    }

    fn loss_and_grads(&self, batch: &Batch<'_, F>, objective: &Objective, mode: QuantMode) -> Result<(f64, Vec<MlpGrads<F>>)> {
        self.check_objective(objective)?;
        let fw = self.forward_batch(batch.h, mode)?;
        let (loss, drecon) = mse_batch(batch.h, fw.recon.view())?;
        Ok((loss, self.backward_batch(&fw, drecon.view())?))
    }

    fn loss(&self, batch: &Batch<'_, F>, objective: &Objective) -> Result<f64> {
        self.check_objective(objective)?;
        let recon = self.reconstruct_batch(batch.h)?;
        Ok(mse_batch(batch.h, recon.view())?.0)
    }
}

impl<F: Real> BaselineBf<F> {
    fn input_for(&self, batch: &Batch<'_, F>) -> Result<Array2<F>> {
        if let Some(x) = batch.input {
            return Ok(x.to_owned());
        }
        match self.streams() {
            1 => Ok(batch.h.to_owned()),
            _ => Ok(concatenate(Axis(1), &[batch.h, batch.need_g()?]).expect("equal row counts")),
        }
    }

    fn beam_loss(&self, batch: &Batch<'_, F>, objective: &Objective, theta: ArrayView2<F>) -> Result<(f64, Array2<F>)> {
        match *objective {
            Objective::BeamS { variant } => loss_s_batch(batch.h, theta, variant),
            Objective::BeamM { alpha, rho } => loss_m_batch(batch.h, batch.need_g()?, theta, alpha, rho),
            Objective::Mse => Err(wrong_objective("baseline-bf", objective)),
        }
    }
}

impl<F: Real> Trainable<F> for BaselineBf<F> {
    fn nets(&self) -> Vec<&Mlp<F>> {
        BaselineBf::nets(self)
    }

    fn nets_mut(&mut self) -> Vec<&mut Mlp<F>> {
        BaselineBf::nets_mut(self)
    }

    fn check_objective(&self, objective: &Objective) -> Result<()> {
        match (self.streams(), objective) {
            (1, Objective::BeamS { .. }) | (2, Objective::BeamM { .. }) => Ok(()),
            (_, o) => Err(wrong_objective("baseline-bf", o)),
        }
    }

    fn loss_and_grads(&self, batch: &Batch<'_, F>, objective: &Objective, _mode: QuantMode) -> Result<(f64, Vec<MlpGrads<F>>)> {
        self.check_objective(objective)?;
        let x = self.input_for(batch)?;
        let (theta, tape) = self.forward_batch(x.view())?;
        let (loss, dtheta) = self.beam_loss(batch, objective, theta.view())?;
        Ok((loss, self.backward_batch(&tape, dtheta.view())?))
    }

    fn loss(&self, batch: &Batch<'_, F>, objective: &Objective) -> Result<f64> {
        self.check_objective(objective)?;
        let x = self.input_for(batch)?;
        let theta = self.net.predict(x.view())?;
        Ok(self.beam_loss(batch, objective, theta.view())?.0)
    }
}

/// Mean loss over a whole data set, in chunks, with the quantizer active.
pub fn dataset_loss<F: Real, M: Trainable<F>>(model: &M, data: &TrainData<F>, objective: &Objective) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("loss over an empty set"));
    }
    let mut total = 0.0;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        total += model.loss(&data.rows(start, end), objective)? * (end - start) as f64;
        start = end;
    }
    Ok(total / data.len() as f64)
}

/// Generator for weight initialization of a run seeded with `seed`; `slot`
/// separates networks built for the same run.
pub fn init_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    stream_rng(seed, Stream::Training, (1 << 55) + slot)
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Training, epoch as u64));
    idx
}

/// Fits `model` on `train`, monitoring `val`. Epoch 0 logs the untrained
/// model; every later epoch is one shuffled pass of Adam steps followed by a
/// validation pass. Returns the best-validation parameters.
pub fn train<M: Trainable<f32>>(
    model: M,
    train: &TrainData<f32>,
    val: &TrainData<f32>,
    config: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    let obj = config.objective;
    model.check_objective(&obj)?;
    if train.is_empty() || val.is_empty() {
        return Err(invalid("training and validation sets must be non-empty"));
    }
    if config.batch_size > train.len() {
        return Err(invalid(format!(
            "batch_size {} exceeds the training set size {}",
            config.batch_size,
            train.len()
        )));
    }

    let mut model = model;
    let mut adam = AdamState::new(&model.nets());
    let mut sched = PlateauScheduler::new(config.lr_init, config.lr_decay, config.plateau_epochs, config.plateau_tol);
    let mut trace = LossTrace::default();

    let train0 = dataset_loss(&model, train, &obj)?;
    let val0 = dataset_loss(&model, val, &obj)?;
    if !val0.is_finite() || !train0.is_finite() {
        return Err(Error::NonFinite("loss of the initial model".into()));
    }
    trace.records.push(EpochRecord {
        epoch: 0,
        train_loss: train0,
        val_loss: val0,
        lr: sched.lr(),
    });
    sched.observe(val0);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val = val0;
    let mut status = TrainStatus::Completed;

    'epochs: for epoch in 1..=config.epochs {
        let lr = sched.lr();
        let order = epoch_order(config.seed, epoch, train.len());
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let data = train.select(chunk);
            let (loss, grads) = model.loss_and_grads(&data.batch(), &obj, QuantMode::Active)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                status = TrainStatus::Aborted {
                    epoch,
                    reason: "non-finite training loss or gradient".into(),
                };
                break 'epochs;
            }
            adam.step(&mut model.nets_mut(), &grads, lr)?;
            total += loss * chunk.len() as f64;
        }
        let val_loss = dataset_loss(&model, val, &obj)?;
        if !val_loss.is_finite() {
            status = TrainStatus::Aborted {
                epoch,
                reason: "non-finite validation loss".into(),
            };
            break;
        }
        trace.records.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss,
            lr,
        });
        if val_loss < best_val {
            best = model.clone();
            best_val = val_loss;
            best_epoch = epoch;
        }
        sched.observe(val_loss);
        log::debug!("epoch {epoch}: train {:.6} val {val_loss:.6} lr {lr:e}", total / train.len() as f64);
    }
    if let TrainStatus::Aborted { epoch, reason } = &status {
        log::warn!("training aborted at epoch {epoch}: {reason}");
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        best_val_loss: best_val,
        trace,
        status,
    })
}
