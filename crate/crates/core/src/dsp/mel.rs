use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioClip, DspError, Result, CANONICAL_RATE};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MelConfig {
    pub sample_rate: u32,
    /// STFT window and FFT length, in samples.
    pub window: usize,
    pub hop: usize,
    pub mel_bins: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Added before the logarithm.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: CANONICAL_RATE,
            window: 1024,
            hop: 480,
            mel_bins: 64,
            f_min: 0.0,
            f_max: CANONICAL_RATE as f64 / 2.0,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DspError::ConfigMismatch(msg));
        if self.mel_bins < 1 {
            return bad("melBins must be at least 1".into());
        }
        if self.hop == 0 || self.window < self.hop {
            return bad(format!("window {} must be >= hop {} > 0", self.window, self.hop));
        }
        if !(self.f_min >= 0.0 && self.f_max > self.f_min) {
            return bad(format!("bad frequency range {}..{}", self.f_min, self.f_max));
        }
        if self.sample_rate == 0 || self.f_max > self.sample_rate as f64 / 2.0 + 1e-9 {
            return bad(format!("f_max {} above Nyquist", self.f_max));
        }
        Ok(())
    }

    /// Frame count for a signal of `len` samples with center padding.
    pub fn frames_for(&self, len: usize) -> usize {
        1 + len / self.hop
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters (peak height 1) on the FFT bin grid: `mel_bins × (window/2 + 1)`.
pub fn mel_filterbank<F: Scalar>(config: &MelConfig) -> Array2<F> {
    let n_freq = config.window / 2 + 1;
    let (lo, hi) = (hz_to_mel(config.f_min), hz_to_mel(config.f_max));
    let edges: Vec<f64> = (0..config.mel_bins + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.mel_bins + 1) as f64))
        .collect();
    let bin_hz = config.sample_rate as f64 / config.window as f64;
    Array2::from_shape_fn((config.mel_bins, n_freq), |(m, k)| {
        let f = k as f64 * bin_hz;
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let rise = (f - left) / (center - left);
        let fall = (right - f) / (right - center);
        F::of(rise.min(fall).max(0.0))
    })
}

/// Time-frequency features: `frames × mel_bins`, log power unless built with
/// [`MelExtractor::power`].
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram<F = f32> {
    pub values: Array2<F>,
    pub hop: usize,
    pub window: usize,
}

impl<F: Scalar> MelSpectrogram<F> {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn mel_bins(&self) -> usize {
        self.values.ncols()
    }

    /// Mean over frames: one value per mel bin.
    pub fn time_mean(&self) -> Array1<F> {
        self.values
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(self.mel_bins()))
    }
}

/// Reusable STFT plan, window and filterbank for one [`MelConfig`].
pub struct MelExtractor<F: Scalar = f32> {
    config: MelConfig,
    fft: Arc<dyn Fft<F>>,
    hann: Vec<F>,
    filterbank: Array2<F>,
}

impl<F: Scalar> MelExtractor<F> {
    pub fn new(config: MelConfig) -> Result<Self> {
        config.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(config.window);
        let n = config.window as f64;
        // Periodic Hann.
        let hann = (0..config.window)
            .map(|i| F::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos()))
            .collect();
        Ok(MelExtractor {
            filterbank: mel_filterbank(&config),
            config,
            fft,
            hann,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &Array2<F> {
        &self.filterbank
    }

    /// Power spectrogram `frames × (window/2 + 1)` with zero center padding.
    pub fn stft_power(&self, clip: &AudioClip<F>) -> Result<Array2<F>> {
        if clip.sample_rate != self.config.sample_rate {
            return Err(DspError::ConfigMismatch(format!(
                "clip at {} Hz, extractor expects {} Hz",
                clip.sample_rate, self.config.sample_rate
            )));
        }
        let win = self.config.window;
        let pad = win / 2;
        let frames = self.config.frames_for(clip.samples.len());
        let n_freq = win / 2 + 1;
        let mut out = Array2::zeros((frames, n_freq));
        let mut buf = vec![Complex::new(F::zero(), F::zero()); win];
        let mut scratch = vec![Complex::new(F::zero(), F::zero()); self.fft.get_inplace_scratch_len()];
        for (t, mut row) in out.outer_iter_mut().enumerate() {
            let start = (t * self.config.hop) as isize - pad as isize;
            for (i, slot) in buf.iter_mut().enumerate() {
                let idx = start + i as isize;
                let x = if idx >= 0 && (idx as usize) < clip.samples.len() {
                    clip.samples[idx as usize]
                } else {
                    F::zero()
                };
                *slot = Complex::new(x * self.hann[i], F::zero());
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, v) in row.iter_mut().enumerate() {
                *v = buf[k].norm_sqr();
            }
        }
        debug_assert_eq!(out.ncols(), n_freq);
        Ok(out)
    }

    /// Mel power before log compression.
    pub fn power(&self, clip: &AudioClip<F>) -> Result<MelSpectrogram<F>> {
        let power = self.stft_power(clip)?;
        Ok(MelSpectrogram {
            values: power.dot(&self.filterbank.t()),
            hop: self.config.hop,
            window: self.config.window,
        })
    }

    /// `log(mel power + floor)`.
    pub fn extract(&self, clip: &AudioClip<F>) -> Result<MelSpectrogram<F>> {
        let mut mel = self.power(clip)?;
        let floor = F::of(self.config.log_floor);
        mel.values.mapv_inplace(|v| (v + floor).ln());
        Ok(mel)
    }
}
