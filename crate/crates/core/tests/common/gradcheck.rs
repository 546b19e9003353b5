//! Central-difference oracle for the full model gradient.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonotext_core::encoder::{ContrastiveModel, Dense, EncoderConfig};
use sonotext_core::trainer::{contrastive_loss, loss_and_grads, Batch};

pub const H: f64 = 1e-6;
/// Denominator floor for the relative error of near-zero partials.
pub const REL_FLOOR: f64 = 1e-3;
/// Pre-activations closer than this to the ReLU kink make a batch non-differentiable for FD.
pub const KINK_MARGIN: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub struct Case {
    pub model: ContrastiveModel<f64>,
    pub audio: Array2<f64>,
    pub text: Array2<f64>,
}

/// Loss recomputed without the library's backward pass: embeddings from the
/// public forward path, then the library loss.
pub fn forward_loss(model: &ContrastiveModel<f64>, audio: &Array2<f64>, text: &Array2<f64>) -> f64 {
    let n = audio.nrows();
    let d = model.embed_dim();
    let mut ea = Vec::with_capacity(n * d);
    let mut et = Vec::with_capacity(n * d);
    for i in 0..n {
        ea.extend(model.embed_audio_mean(audio.row(i)).unwrap().values);
        let feat = model.text_encoder.encode_counts(text.row(i));
        let z = model.text_head.project(feat.view());
        let norm = z.dot(&z).sqrt();
        et.extend(z.iter().map(|v| v / norm));
    }
    let batch = Batch::new(
        Array2::from_shape_vec((n, d), ea).unwrap(),
        Array2::from_shape_vec((n, d), et).unwrap(),
    )
    .unwrap();
    contrastive_loss(&batch, model.tau()).unwrap()
}

fn min_abs_preactivation(layer: &Dense<f64>, x: &Array2<f64>) -> (f64, Array2<f64>) {
    let pre = layer.forward_batch(x.view());
    let m = pre.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    (m, pre.mapv(|v| v.max(0.0)))
}

fn kink_distance(model: &ContrastiveModel<f64>, audio: &Array2<f64>, text: &Array2<f64>) -> f64 {
    let (a0, a1) = min_abs_preactivation(&model.audio_encoder.layer, audio);
    let (a2, _) = min_abs_preactivation(&model.audio_head.first, &a1);
    let (t0, t1) = min_abs_preactivation(&model.text_encoder.layer, text);
    let (t2, _) = min_abs_preactivation(&model.text_head.first, &t1);
    a0.min(a2).min(t0).min(t2)
}

/// Random model and batch (N ≤ 8, D ≤ 16) clear of ReLU kinks. Returns the case
/// and how many draws were rejected for sitting near a kink.
pub fn random_case(seed: u64) -> (Case, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = 0;
    loop {
        let cfg = EncoderConfig {
            embed_dim: rng.random_range(2..=16),
            mel_bins: rng.random_range(2..=6),
            audio_feature_dim: rng.random_range(2..=6),
            text_feature_dim: rng.random_range(2..=6),
            hidden_dim: rng.random_range(2..=8),
            vocab_hash_buckets: rng.random_range(3..=10),
        };
        let n = rng.random_range(2..=8);
        let mut model = ContrastiveModel::<f64>::new(cfg, rng.random()).unwrap();
        model.log_tau = rng.random_range((0.05f64).ln()..(2.0f64).ln());
        for (_, p) in model.params_mut() {
            for v in p.iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let audio = Array2::from_shape_simple_fn((n, cfg.mel_bins), || rng.random_range(-2.0..2.0));
        let text = Array2::from_shape_simple_fn((n, cfg.vocab_hash_buckets), || rng.random_range(0..3) as f64);
        if kink_distance(&model, &audio, &text) > KINK_MARGIN {
            return (Case { model, audio, text }, rejected);
        }
        rejected += 1;
    }
}

pub struct Report {
    pub partials: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Compares every analytic partial of `case` against central differences.
pub fn check(case: &Case) -> Report {
    let (_, grads) = loss_and_grads(&case.model, case.audio.view(), case.text.view()).unwrap();
    let analytic: Vec<(&'static str, Vec<f64>)> =
        grads.params().iter().map(|p| (p.name, p.data.to_vec())).collect();
    let mut report = Report { partials: 0, max_rel_err: 0.0, worst: String::new() };
    let mut model = case.model.clone();
    for (k, (name, a)) in analytic.iter().enumerate() {
        for (i, &ai) in a.iter().enumerate() {
            let orig = model.params_mut()[k].1[i];
            model.params_mut()[k].1[i] = orig + H;
            let up = forward_loss(&model, &case.audio, &case.text);
            model.params_mut()[k].1[i] = orig - H;
            let down = forward_loss(&model, &case.audio, &case.text);
            model.params_mut()[k].1[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let e = rel_err(ai, numeric);
            report.partials += 1;
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = format!("{name}[{i}]: analytic {ai:.3e}, numeric {numeric:.3e}");
            }
        }
    }
    report
}
