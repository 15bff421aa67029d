//! Multichannel audio buffers, WAV I/O and sample-rate conversion.

use std::path::Path;

use rubato::{FftFixedInOut, Resampler};

use crate::error::{Error, Result};

/// Nominal rate at which all analysis runs.
pub const ANALYSIS_RATE: u32 = 44_100;

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    /// One vector per channel, all of equal length.
    pub channels: Vec<Vec<f64>>,
}

impl Audio {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::OutOfRange("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::Empty("audio has no channels"));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        Ok(Audio {
            sample_rate,
            channels,
        })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Self {
        Audio {
            sample_rate,
            channels: vec![samples],
        }
    }

    pub fn frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames() == 0
    }

    /// Mean of all channels.
    pub fn to_mono(&self) -> Audio {
        if self.channels.len() == 1 {
            return self.clone();
        }
        let n = self.channels.len() as f64;
        let mixed = (0..self.frames())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect();
        Audio::mono(self.sample_rate, mixed)
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Scales so the absolute peak is 1.0 (no-op for silence).
    pub fn peak_normalized(mut self) -> Audio {
        let p = self.peak();
        if p > 0.0 {
            for c in &mut self.channels {
                c.iter_mut().for_each(|v| *v /= p);
            }
        }
        self
    }

    /// Band-limited conversion to `target_rate`. Output length is
    /// `round(frames * target / source)`; the resampler's delay is removed.
    pub fn resampled(&self, target_rate: u32) -> Result<Audio> {
        if target_rate == self.sample_rate {
            return Ok(self.clone());
        }
        let n_ch = self.channel_count();
        let frames = self.frames();
        let expect = ((frames as u64 * target_rate as u64 + self.sample_rate as u64 / 2)
            / self.sample_rate as u64) as usize;
        let mut rs = FftFixedInOut::<f64>::new(self.sample_rate as usize, target_rate as usize, 1024, n_ch)
            .map_err(|e| Error::Resample(e.to_string()))?;
        let delay = rs.output_delay();
        let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(expect + delay); n_ch];
        let mut pos = 0;
        let push = |out: &mut Vec<Vec<f64>>, chunk: Vec<Vec<f64>>| {
            for (o, c) in out.iter_mut().zip(chunk) {
                o.extend(c);
            }
        };
        loop {
            let need = rs.input_frames_next();
            if pos + need > frames {
                break;
            }
            let chunk: Vec<&[f64]> = self.channels.iter().map(|c| &c[pos..pos + need]).collect();
            let res = rs.process(&chunk, None).map_err(|e| Error::Resample(e.to_string()))?;
            push(&mut out, res);
            pos += need;
        }
        let rest: Vec<&[f64]> = self.channels.iter().map(|c| &c[pos..]).collect();
        let res = rs
            .process_partial(Some(&rest), None)
            .map_err(|e| Error::Resample(e.to_string()))?;
        push(&mut out, res);
        while out[0].len() < expect + delay {
            let res = rs
                .process_partial::<&[f64]>(None, None)
                .map_err(|e| Error::Resample(e.to_string()))?;
            push(&mut out, res);
        }
        for o in &mut out {
            o.drain(..delay);
            o.truncate(expect);
        }
        Audio::new(target_rate, out)
    }

    /// Reads PCM 16/24/32-bit integer or 32-bit float WAV files.
    pub fn read_wav(path: &Path) -> Result<Audio> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        let n_ch = spec.channels as usize;
        let interleaved: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()?,
            hound::SampleFormat::Int => {
                let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 * scale))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
        for frame in interleaved.chunks_exact(n_ch) {
            for (c, v) in channels.iter_mut().zip(frame) {
                c.push(*v);
            }
        }
        Audio::new(spec.sample_rate, channels)
    }

    /// Writes 32-bit float WAV at the buffer's own sample rate.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: self.channel_count() as u16,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(path, spec)?;
        for i in 0..self.frames() {
            for c in &self.channels {
                w.write_sample(c[i] as f32)?;
            }
        }
        w.finalize()?;
        Ok(())
    }
}
