use super::AudioClip;
use crate::scalar::Scalar;

/// Zero crossings of the sinc kernel on each side, at the source rate.
const ZERO_CROSSINGS: usize = 32;
/// Kernel table resolution (entries per source sample).
const OVERSAMPLE: usize = 512;
const KAISER_BETA: f64 = 8.6;
/// Fraction of the lower Nyquist frequency kept in the passband.
const ROLLOFF: f64 = 0.95;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    table: Vec<f64>,
    /// Kernel half-width in source samples.
    half_width: f64,
    cutoff: f64,
}

impl Kernel {
    fn new(ratio: f64) -> Self {
        let cutoff = ROLLOFF * ratio.min(1.0);
        let half_width = ZERO_CROSSINGS as f64 / cutoff;
        let len = (half_width * OVERSAMPLE as f64).ceil() as usize + 2;
        let norm = bessel_i0(KAISER_BETA);
        let table = (0..len)
            .map(|i| {
                let x = i as f64 / OVERSAMPLE as f64;
                if x >= half_width {
                    return 0.0;
                }
                let arg = std::f64::consts::PI * cutoff * x;
                let sinc = if x == 0.0 { 1.0 } else { arg.sin() / arg };
                let r = x / half_width;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
                cutoff * sinc * window
            })
            .collect();
        Kernel { table, half_width, cutoff }
    }

    fn at(&self, dist: f64) -> f64 {
        let pos = dist.abs() * OVERSAMPLE as f64;
        let i = pos.floor() as usize;
        if i + 1 >= self.table.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        self.table[i] * (1.0 - frac) + self.table[i + 1] * frac
    }
}

/// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
///
/// Output length is `round(len * target / source)`. Each output sample's
/// kernel weights are normalized to sum to one, so constant signals stay
/// constant all the way to the edges. Equal rates return the input untouched.
pub fn resample<F: Scalar>(clip: AudioClip<F>, target_rate: u32) -> AudioClip<F> {
    if clip.sample_rate == target_rate || clip.samples.is_empty() {
        return AudioClip { sample_rate: target_rate, ..clip };
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let kernel = Kernel::new(ratio);
    debug_assert!(kernel.cutoff > 0.0);
    let n = clip.samples.len();
    let src: Vec<f64> = clip.samples.iter().map(|s| s.as_f64()).collect();
    let out_len = (n as f64 * ratio).round() as usize;

    let samples = (0..out_len)
        .map(|j| {
            let t = j as f64 / ratio;
            let lo = (t - kernel.half_width).ceil().max(0.0) as usize;
            let hi = ((t + kernel.half_width).floor() as usize).min(n - 1);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (i, s) in src.iter().enumerate().take(hi + 1).skip(lo) {
                let w = kernel.at(t - i as f64);
                acc += w * s;
                wsum += w;
            }
            F::of(if wsum.abs() > 1e-12 { acc / wsum } else { 0.0 })
        })
        .collect();

    AudioClip {
        samples,
        sample_rate: target_rate,
        source_recording_id: clip.source_recording_id,
        chunk_index: clip.chunk_index,
    }
}
