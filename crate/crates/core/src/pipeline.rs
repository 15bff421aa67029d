//! End-to-end automatic equalization of a single recording.
//!
//! measure at 44.1 kHz → classify (or take the override) → difference against
//! the class target → matching model → EQ designed and applied at the
//! recording's native rate.

use std::io::Write;
use std::path::Path;

use crate::audio::Audio;
use crate::eq::{cascade_response_db_with, denormalize_params, process_audio, EqSettings, NormalizedParams, PeakDesign, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::model::{curves_to_grid, ParamPredictor};
use crate::spectrum::{
    fmt_sig9, measure_spectrum, spectral_difference, DifferenceCurve, LogFrequencyGrid, SpectrumDb, StftConfig,
    DEFAULT_LIMIT_DB, DEFAULT_SMOOTH_SIGMA,
};
use crate::audio::ANALYSIS_RATE;
use crate::targets::TargetBank;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEqOptions {
    pub class_override: Option<String>,
    pub stft: StftConfig,
    pub sigma: f64,
    pub limit_db: f64,
    pub peak_design: PeakDesign,
    /// Scale the output to a peak of 1.0. Off by default: no makeup gain.
    pub peak_normalize: bool,
    /// Skip processing; only settings and diagnostics are produced.
    pub dry_run: bool,
}

impl Default for AutoEqOptions {
    fn default() -> Self {
        AutoEqOptions {
            class_override: None,
            stft: StftConfig::default(),
            sigma: DEFAULT_SMOOTH_SIGMA,
            limit_db: DEFAULT_LIMIT_DB,
            peak_design: PeakDesign::Cookbook,
            peak_normalize: false,
            dry_run: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEqResult {
    pub settings: EqSettings,
    pub predicted_class: String,
    pub difference: DifferenceCurve,
    /// Response of `settings` on the analysis grid at 44.1 kHz.
    pub predicted_response: SpectrumDb,
    /// Mean |difference − predicted_response| in dB.
    pub residual_mae_db: f64,
}

impl AutoEqResult {
    /// `freq_hz,difference_db,predicted_response_db,residual_db`, one row per bin.
    pub fn write_diagnostics<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["freq_hz", "difference_db", "predicted_response_db", "residual_db"])?;
        let diff = self.difference.curve().values();
        let resp = self.predicted_response.values();
        for (i, f) in LogFrequencyGrid::canonical().freqs().iter().enumerate() {
            wr.write_record([
                fmt_sig9(*f),
                fmt_sig9(diff[i]),
                fmt_sig9(resp[i]),
                fmt_sig9(diff[i] - resp[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_diagnostics(&self, path: &Path) -> Result<()> {
        self.write_diagnostics(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct AutoEqOutput {
    pub result: AutoEqResult,
    /// `None` on a dry run.
    pub audio: Option<Audio>,
}

/// Runs one predictor on one curve and maps its output to clamped settings.
pub fn predict_settings<P: ParamPredictor + ?Sized>(predictor: &P, curve: &SpectrumDb) -> Result<EqSettings> {
    let y = predictor.predict_params(&curves_to_grid(&[curve]))?;
    if y.values.len() != PARAM_COUNT {
        return Err(Error::Shape(format!("predictor returned {} values", y.values.len())));
    }
    if y.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model output".into()));
    }
    let v = NormalizedParams(y.values.as_slice().try_into().expect("length checked"));
    Ok(denormalize_params(&v, true))
}

pub fn auto_eq<P: ParamPredictor + ?Sized>(
    audio: &Audio,
    bank: &TargetBank,
    predictor: &P,
    opts: &AutoEqOptions,
) -> Result<AutoEqOutput> {
    if audio.is_empty() {
        return Err(Error::Empty("input audio"));
    }
    if bank.is_empty() {
        return Err(Error::Empty("target bank"));
    }
    let measured = measure_spectrum(audio, opts.stft)?;
    let predicted_class = match &opts.class_override {
        Some(c) => {
            bank.get(c)?;
            c.clone()
        }
        None => bank.classify(&measured)?.0,
    };
    let target = bank.target(&predicted_class)?;
    let difference = spectral_difference(target, &measured, opts.sigma, opts.limit_db);
    let settings = predict_settings(predictor, difference.curve())?;
    let predicted_response = cascade_response_db_with(
        &settings,
        LogFrequencyGrid::canonical(),
        ANALYSIS_RATE as f64,
        opts.peak_design,
    )?;
    let residual_mae_db = difference.curve().mean_abs_diff(&predicted_response);
    let out_audio = if opts.dry_run {
        None
    } else {
        let processed = process_audio(audio, &settings, opts.peak_design)?;
        Some(if opts.peak_normalize { processed.peak_normalized() } else { processed })
    };
    Ok(AutoEqOutput {
        result: AutoEqResult {
            settings,
            predicted_class,
            difference,
            predicted_response,
            residual_mae_db,
        },
        audio: out_audio,
    })
}

/// Largest absolute change of the measured spectrum between two clips over
/// 50 Hz to 16 kHz, after removing the overall level difference.
pub fn spectral_deviation_db(before: &Audio, after: &Audio, stft: StftConfig) -> Result<f64> {
    let a = measure_spectrum(before, stft)?;
    let b = measure_spectrum(after, stft)?;
    let freqs = LogFrequencyGrid::canonical().freqs();
    let d: Vec<f64> = b
        .values()
        .iter()
        .zip(a.values())
        .zip(freqs)
        .filter(|(_, f)| (50.0..=16_000.0).contains(*f))
        .map(|((x, y), _)| x - y)
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    Ok(d.iter().fold(0.0, |m, v| m.max((v - mean).abs())))
}
