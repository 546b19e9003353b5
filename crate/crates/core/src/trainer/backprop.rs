use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{contrastive_loss_grad, Batch, Result, TrainError};
use crate::encoder::{relu, ContrastiveModel, Dense, EncoderError, ProjectionHead};
use crate::scalar::Scalar;

/// Parameter gradients, laid out exactly like the model they belong to.
pub type Gradients<F> = ContrastiveModel<F>;

/// Activations of one tower kept for the backward pass.
struct Tower<F> {
    input: Array2<F>,
    enc_pre: Array2<F>,
    enc_out: Array2<F>,
    hidden_pre: Array2<F>,
    hidden: Array2<F>,
    proj: Array2<F>,
    norms: Array1<F>,
    emb: Array2<F>,
}

fn relu_mask<F: Scalar>(pre: &Array2<F>) -> Array2<F> {
    pre.mapv(|v| if v > F::zero() { F::one() } else { F::zero() })
}

fn forward<F: Scalar>(enc: &Dense<F>, head: &ProjectionHead<F>, x: ArrayView2<'_, F>) -> Result<Tower<F>> {
    let enc_pre = enc.forward_batch(x);
    let enc_out = enc_pre.mapv(relu);
    let hidden_pre = head.first.forward_batch(enc_out.view());
    let hidden = hidden_pre.mapv(relu);
    let proj = head.second.forward_batch(hidden.view());
    let norms: Array1<F> = proj.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if norms.iter().any(|n| !n.is_finite()) {
        return Err(TrainError::NonFiniteLoss);
    }
    if norms.iter().any(|n| n.is_zero()) {
        return Err(TrainError::Encoder(EncoderError::ZeroVector));
    }
    let emb = &proj / &norms.view().insert_axis(Axis(1));
    Ok(Tower {
        input: x.to_owned(),
        enc_pre,
        enc_out,
        hidden_pre,
        hidden,
        proj,
        norms,
        emb,
    })
}

/// Accumulates `dW = dy^T x`, `db = sum(dy)` into `grad`, returns `dx = dy W`.
fn dense_backward<F: Scalar>(layer: &Dense<F>, grad: &mut Dense<F>, x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
    grad.weight += &dy.t().dot(x);
    grad.bias += &dy.sum_axis(Axis(0));
    dy.dot(&layer.weight)
}

fn backward<F: Scalar>(
    tower: &Tower<F>,
    d_emb: &Array2<F>,
    enc: &Dense<F>,
    head: &ProjectionHead<F>,
    g_enc: &mut Dense<F>,
    g_head: &mut ProjectionHead<F>,
) {
    // e = z / |z|  =>  dz = (de - e (e . de)) / |z|
    let along = (&tower.emb * d_emb).sum_axis(Axis(1)).insert_axis(Axis(1));
    let d_proj = (d_emb - &(&tower.emb * &along)) / tower.norms.view().insert_axis(Axis(1));
    debug_assert_eq!(d_proj.dim(), tower.proj.dim());
    let d_hidden = dense_backward(&head.second, &mut g_head.second, &tower.hidden, &d_proj);
    let d_hidden_pre = d_hidden * relu_mask(&tower.hidden_pre);
    let d_enc_out = dense_backward(&head.first, &mut g_head.first, &tower.enc_out, &d_hidden_pre);
    let d_enc_pre = d_enc_out * relu_mask(&tower.enc_pre);
    dense_backward(enc, g_enc, &tower.input, &d_enc_pre);
}

/// Loss of `model` on one batch plus the gradient of every parameter.
///
/// `audio` holds time-averaged mel vectors (`N × melBins`) and `text` holds
/// hashed token counts (`N × buckets`); row `i` of each is pair `i`.
pub fn loss_and_grads<F: Scalar>(
    model: &ContrastiveModel<F>,
    audio: ArrayView2<'_, F>,
    text: ArrayView2<'_, F>,
) -> Result<(f64, Gradients<F>)> {
    if audio.nrows() != text.nrows() || audio.nrows() == 0 {
        return Err(TrainError::InvalidBatch(format!(
            "{} audio rows vs {} text rows",
            audio.nrows(),
            text.nrows()
        )));
    }
    let expect = |expected: usize, actual: usize| {
        if expected == actual {
            Ok(())
        } else {
            Err(TrainError::Encoder(EncoderError::DimensionMismatch { expected, actual }))
        }
    };
    expect(model.audio_encoder.layer.inputs(), audio.ncols())?;
    expect(model.text_encoder.layer.inputs(), text.ncols())?;

    let a = forward(&model.audio_encoder.layer, &model.audio_head, audio)?;
    let t = forward(&model.text_encoder.layer, &model.text_head, text)?;
    let batch = Batch { audio: a.emb.clone(), text: t.emb.clone() };
    let lg = contrastive_loss_grad(&batch, model.log_tau.as_f64())?;

    let mut grads = model.zeros_like();
    grads.log_tau = F::of(lg.d_log_tau);
    backward(
        &a,
        &lg.d_audio,
        &model.audio_encoder.layer,
        &model.audio_head,
        &mut grads.audio_encoder.layer,
        &mut grads.audio_head,
    );
    backward(
        &t,
        &lg.d_text,
        &model.text_encoder.layer,
        &model.text_head,
        &mut grads.text_encoder.layer,
        &mut grads.text_head,
    );
    Ok((lg.loss, grads))
}
