//! The EQ matching models: an MLP and a CNN mapping a 256-bin difference
//! curve to 10 normalized EQ parameters, their losses and training.

mod loss;
mod train;

pub use loss::{finetune_loss, parameter_loss, penalty_loss, spectral_loss};
pub use train::{
    evaluate_mae, finetune, train_base, History, HistoryRow, MaeReport, TrainOutcome, TrainingConfig,
};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eq::{denormalize_params, EqSettings, NormalizedParams, PeakDesign, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Checkpoint, Conv1d, Dense, Flatten, Layer, Relu, Sequential, ValueGrid};
use crate::spectrum::{SpectrumDb, GRID_LEN};

/// Width of the flattened CNN feature map for a 256-bin input.
pub const CNN_FLAT_LEN: usize = 7808;
const HIDDEN: usize = 256;
const KERNEL: usize = 5;
const CONV_CHANNELS: [usize; 3] = [16, 32, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Mlp,
    Cnn,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Cnn => "cnn",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Architecture::Mlp),
            "cnn" => Ok(Architecture::Cnn),
            _ => Err(Error::OutOfRange(format!("unknown architecture `{s}`"))),
        }
    }
}

/// Anything that maps `[batch, 256]` curves to `[batch, 10]` raw parameters.
pub trait ParamPredictor {
    fn predict_params(&self, curves: &ValueGrid) -> Result<ValueGrid>;
}

#[derive(Debug, Clone)]
pub struct MatchingModel {
    arch: Architecture,
    net: Sequential,
    /// Peak prototype the model was fine-tuned against.
    pub peak_design: PeakDesign,
}

impl MatchingModel {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let dense_in = match arch {
            Architecture::Mlp => GRID_LEN,
            Architecture::Cnn => {
                let mut ch = 1;
                let mut len = GRID_LEN;
                for &out in &CONV_CHANNELS {
                    layers.push(Layer::Conv1d(Conv1d::new(ch, out, KERNEL, &mut rng)));
                    layers.push(Layer::Relu(Relu::new()));
                    ch = out;
                    len = len + 1 - KERNEL;
                }
                layers.push(Layer::Flatten(Flatten::default()));
                assert_eq!(ch * len, CNN_FLAT_LEN, "CNN flatten width");
                CNN_FLAT_LEN
            }
        };
        let hidden_layers = match arch {
            Architecture::Mlp => 3,
            Architecture::Cnn => 2,
        };
        let mut width = dense_in;
        for _ in 0..hidden_layers {
            layers.push(Layer::Dense(Dense::new(width, HIDDEN, &mut rng)));
            layers.push(Layer::Relu(Relu::new()));
            width = HIDDEN;
        }
        layers.push(Layer::Dense(Dense::new(width, PARAM_COUNT, &mut rng)));
        MatchingModel {
            arch,
            net: Sequential::new(layers),
            peak_design: PeakDesign::Cookbook,
        }
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    /// Input width of the first dense layer: 7808 for the CNN, 256 for the MLP.
    pub fn flatten_len(&self) -> usize {
        self.net
            .layers
            .iter()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.inputs()),
                _ => None,
            })
            .expect("model has a dense layer")
    }

    fn shape_input(&self, x: &ValueGrid) -> Result<ValueGrid> {
        if x.shape().len() != 2 || x.shape()[1] != GRID_LEN {
            return Err(Error::Shape(format!("model expects [batch, {GRID_LEN}], got {:?}", x.shape())));
        }
        match self.arch {
            Architecture::Mlp => Ok(x.clone()),
            Architecture::Cnn => x.reshaped(vec![x.batch(), 1, GRID_LEN]),
        }
    }

    /// Training-mode pass that records what `backward` needs.
    pub fn forward(&mut self, x: &ValueGrid) -> Result<ValueGrid> {
        let x = self.shape_input(x)?;
        self.net.forward(&x)
    }

    /// Accumulates parameter gradients from d loss / d output.
    pub fn backward(&mut self, grad: &ValueGrid) -> Result<()> {
        self.net.backward(grad).map(|_| ())
    }

    pub fn predict(&self, x: &ValueGrid) -> Result<ValueGrid> {
        self.net.predict(&self.shape_input(x)?)
    }

    /// Forward, clamp to the unit cube, denormalize.
    pub fn predict_eq(&self, curve: &SpectrumDb) -> Result<EqSettings> {
        let x = ValueGrid::new(vec![1, GRID_LEN], curve.values().to_vec())?;
        let y = self.predict(&x)?;
        if y.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model output".into()));
        }
        let v = NormalizedParams(y.values.as_slice().try_into().expect("10 outputs"));
        Ok(denormalize_params(&v, true))
    }

    pub fn to_checkpoint(&self, optimizer: Option<&AdamState>, mut metadata: Vec<(String, String)>) -> Checkpoint {
        metadata.retain(|(k, _)| k != "peak_design");
        metadata.insert(0, ("peak_design".into(), self.peak_design.as_str().into()));
        Checkpoint {
            arch: self.arch.as_str().into(),
            metadata,
            params: self
                .net
                .params()
                .into_iter()
                .map(|p| ValueGrid::new(p.shape().to_vec(), p.values.clone()).expect("own shape"))
                .collect(),
            adam: optimizer.cloned(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let arch: Architecture = ckpt.arch.parse()?;
        let mut model = MatchingModel::new(arch, 0);
        if let Some(p) = ckpt.meta("peak_design") {
            model.peak_design = p.parse()?;
        }
        let mut params = model.net.params_mut();
        if params.len() != ckpt.params.len() {
            return Err(Error::format("checkpoint", format!(
                "{} tensors for a {arch} model that has {}",
                ckpt.params.len(),
                params.len()
            )));
        }
        for (dst, src) in params.iter_mut().zip(&ckpt.params) {
            if dst.shape() != src.shape() {
                return Err(Error::format("checkpoint", format!(
                    "tensor shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.values.copy_from_slice(&src.values);
        }
        Ok(model)
    }
}

impl ParamPredictor for MatchingModel {
    fn predict_params(&self, curves: &ValueGrid) -> Result<ValueGrid> {
        self.predict(curves)
    }
}

/// Stacks curves into a `[n, 256]` grid.
pub fn curves_to_grid(curves: &[&SpectrumDb]) -> ValueGrid {
    let rows: Vec<&[f64]> = curves.iter().map(|c| c.values()).collect();
    if rows.is_empty() {
        return ValueGrid::zeros(vec![0, GRID_LEN]);
    }
    ValueGrid::from_rows(&rows).expect("spectra share the grid length")
}
