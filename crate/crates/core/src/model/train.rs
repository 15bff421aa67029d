use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{finetune_loss, parameter_loss, penalty_loss};
use super::{curves_to_grid, MatchingModel, ParamPredictor};
use crate::eq::{NormalizedParams, PeakDesign, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::nn::{AdamState, DiffCascadeResponse, ValueGrid};
use crate::spectrum::{fmt_sig9, order_free_sum, SpectrumDb, GRID_LEN};

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Factor applied to the learning rate after every epoch.
    pub lr_decay_per_epoch: f64,
    /// Penalty weight in the fine-tuning objective.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 1e-4,
            batch_size: 128,
            epochs: 3,
            lr_decay_per_epoch: 0.1,
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.batch_size > 0
            && self.epochs > 0
            && self.lr_decay_per_epoch > 0.0
            && self.lambda >= 0.0
            && self.lambda.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!("training config {self:?}")))
        }
    }

    /// Learning rate used during epoch `epoch` (0-based).
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay_per_epoch.powi(epoch as i32)
    }

    /// Sample order for one epoch, a pure function of (seed, epoch).
    fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    /// 1-based.
    pub epoch: usize,
    pub split: String,
    pub loss_db: f64,
}

/// Per-epoch losses. `train` rows hold the stage's training objective;
/// `test` rows hold the evaluation MAE in dB when a test set was supplied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn push(&mut self, epoch: usize, split: &str, loss_db: f64) {
        self.rows.push(HistoryRow {
            epoch,
            split: split.into(),
            loss_db,
        });
    }

    pub fn split(&self, split: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.split == split).map(|r| r.loss_db).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "split", "loss_db"])?;
        for r in &self.rows {
            out.write_record([r.epoch.to_string(), r.split.clone(), fmt_sig9(r.loss_db)])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: History,
    pub optimizer: AdamState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaeReport {
    /// Mean absolute dB error of each example, in input order.
    pub per_example: Vec<f64>,
    pub mean_db: f64,
    /// Mean over examples of the summed out-of-range magnitude of the raw
    /// (unclamped) predictions.
    pub mean_penalty: f64,
}

fn gather(curves: &[SpectrumDb], idx: &[usize]) -> ValueGrid {
    curves_to_grid(&idx.iter().map(|&i| &curves[i]).collect::<Vec<_>>())
}

fn check_curves(curves: &[SpectrumDb], what: &'static str) -> Result<()> {
    if curves.is_empty() {
        Err(Error::Empty(what))
    } else {
        Ok(())
    }
}

fn run_epochs(
    model: &mut MatchingModel,
    n: usize,
    cfg: &TrainingConfig,
    eval: Option<&[SpectrumDb]>,
    mut step: impl FnMut(&mut MatchingModel, &[usize]) -> Result<f64>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut adam = AdamState::new(cfg.lr);
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        adam.lr = cfg.lr_for_epoch(epoch);
        let order = cfg.epoch_order(n, epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.network_mut().zero_grad();
            let loss = step(model, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss in epoch {}", epoch + 1)));
            }
            adam.step(&mut model.network_mut().params_mut())?;
            total += loss * batch.len() as f64;
        }
        history.push(epoch + 1, "train", total / n as f64);
        if let Some(test) = eval {
            let report = evaluate_mae(model, test, model.peak_design)?;
            history.push(epoch + 1, "test", report.mean_db);
        }
    }
    Ok(TrainOutcome {
        history,
        optimizer: adam,
    })
}

/// Base stage: Adam on the parameter loss.
pub fn train_base(
    model: &mut MatchingModel,
    inputs: &[SpectrumDb],
    targets: &[NormalizedParams],
    cfg: &TrainingConfig,
    eval: Option<&[SpectrumDb]>,
) -> Result<TrainOutcome> {
    check_curves(inputs, "training set")?;
    if inputs.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} curves but {} parameter targets",
            inputs.len(),
            targets.len()
        )));
    }
    run_epochs(model, inputs.len(), cfg, eval, |m, batch| {
        let x = gather(inputs, batch);
        let t = ValueGrid::new(
            vec![batch.len(), PARAM_COUNT],
            batch.iter().flat_map(|&i| targets[i].0).collect(),
        )?;
        let v = m.forward(&x)?;
        let (loss, g) = parameter_loss(&t, &v)?;
        m.backward(&g)?;
        Ok(loss)
    })
}

/// Fine-tuning stage: Adam on spectral + λ·penalty through the differentiable
/// cascade response. Each curve is both input and target.
pub fn finetune(
    model: &mut MatchingModel,
    curves: &[SpectrumDb],
    cfg: &TrainingConfig,
    eval: Option<&[SpectrumDb]>,
) -> Result<TrainOutcome> {
    check_curves(curves, "fine-tuning set")?;
    let mut response = DiffCascadeResponse::new(model.peak_design);
    run_epochs(model, curves.len(), cfg, eval, |m, batch| {
        let x = gather(curves, batch);
        let v = m.forward(&x)?;
        let r = response.forward(&v)?;
        let (loss, gx, gv) = finetune_loss(&x, &r, &v, cfg.lambda)?;
        let mut dv = response.backward(&gx)?;
        for (d, p) in dv.values.iter_mut().zip(&gv.values) {
            *d += p;
        }
        m.backward(&dv)?;
        Ok(loss)
    })
}

/// Mean absolute dB error between each curve and the response of the clamped
/// prediction for it.
pub fn evaluate_mae<P: ParamPredictor + ?Sized>(
    predictor: &P,
    curves: &[SpectrumDb],
    peak: PeakDesign,
) -> Result<MaeReport> {
    check_curves(curves, "test set")?;
    let response = DiffCascadeResponse::new(peak);
    let mut per_example = Vec::with_capacity(curves.len());
    let mut penalties = Vec::with_capacity(curves.len());
    for chunk in curves.chunks(EVAL_CHUNK) {
        let x = curves_to_grid(&chunk.iter().collect::<Vec<_>>());
        let raw = predictor.predict_params(&x)?;
        if raw.shape() != [chunk.len(), PARAM_COUNT] {
            return Err(Error::Shape(format!("predictor returned {:?}", raw.shape())));
        }
        if raw.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predicted parameters".into()));
        }
        for i in 0..chunk.len() {
            let row = ValueGrid::new(vec![1, PARAM_COUNT], raw.row(i).to_vec())?;
            penalties.push(penalty_loss(&row)?.0);
        }
        let clamped = ValueGrid::new(raw.shape().to_vec(), raw.values.iter().map(|v| v.clamp(0.0, 1.0)).collect())?;
        let r = response.predict(&clamped)?;
        for (i, c) in chunk.iter().enumerate() {
            let mut d: Vec<f64> = c.values().iter().zip(r.row(i)).map(|(a, b)| (a - b).abs()).collect();
            per_example.push(order_free_sum(&mut d) / GRID_LEN as f64);
        }
    }
    let n = per_example.len() as f64;
    let mean_db = order_free_sum(&mut per_example.clone()) / n;
    let mean_penalty = order_free_sum(&mut penalties) / n;
    Ok(MaeReport {
        per_example,
        mean_db,
        mean_penalty,
    })
}
