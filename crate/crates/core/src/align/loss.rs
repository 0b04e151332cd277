use super::decoder::{sequence_nll, ToyDecoderParams, TokenSeq};
use super::linalg::{dot, norm};
use super::{AlignConfig, CosineMode, Embedding, FuseMode, LossBreakdown};
use crate::error::{Error, Result};

fn check_lists(ev: &[Embedding], im: &[Embedding]) -> Result<()> {
    if ev.len() != im.len() {
        return Err(Error::Dimension(format!(
            "{} event embeddings vs {} image embeddings",
            ev.len(),
            im.len()
        )));
    }
    if ev.is_empty() {
        return Err(Error::Degenerate("empty embedding lists".into()));
    }
    let d = ev[0].dim();
    if ev.iter().chain(im).any(|e| e.dim() != d) {
        return Err(Error::Dimension("embeddings differ in width".into()));
    }
    Ok(())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {} entries", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero-norm vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `1 - cos(a, b)` and its gradients w.r.t. `a` and `b`.
fn cosine_term(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero-norm vector".into()));
    }
    let c = dot(a, b) / (na * nb);
    // d(1 - c)/da = -(b / (|a||b|) - c * a / |a|^2)
    let ga = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| -(bi / (na * nb) - c * ai / (na * na)))
        .collect();
    let gb = b
        .iter()
        .zip(a)
        .map(|(bi, ai)| -(ai / (na * nb) - c * bi / (nb * nb)))
        .collect();
    Ok((1.0 - c, ga, gb))
}

fn concat(list: &[Embedding]) -> Vec<f64> {
    list.iter().flat_map(|e| e.0.iter().copied()).collect()
}

/// Loss, then gradients for every event and image embedding.
type CosineLossGrad = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

pub(crate) fn cosine_loss_with_grad(
    ev: &[Embedding],
    im: &[Embedding],
    mode: CosineMode,
) -> Result<CosineLossGrad> {
    check_lists(ev, im)?;
    let d = ev[0].dim();
    match mode {
        CosineMode::Flatten => {
            let (loss, ga, gb) = cosine_term(&concat(ev), &concat(im))?;
            let split = |g: Vec<f64>| g.chunks(d.max(1)).map(<[f64]>::to_vec).collect();
            Ok((loss, split(ga), split(gb)))
        }
        CosineMode::PerPairMean => {
            let k = ev.len() as f64;
            let mut loss = 0.0;
            let (mut gev, mut gim) = (Vec::new(), Vec::new());
            for (a, b) in ev.iter().zip(im) {
                let (l, ga, gb) = cosine_term(&a.0, &b.0)?;
                loss += l / k;
                gev.push(ga.into_iter().map(|g| g / k).collect());
                gim.push(gb.into_iter().map(|g| g / k).collect());
            }
            Ok((loss, gev, gim))
        }
    }
}

/// Cosine alignment loss between event and image embedding lists, in `[0, 2]`.
pub fn cosine_alignment_loss(ev: &[Embedding], im: &[Embedding], mode: CosineMode) -> Result<f64> {
    check_lists(ev, im)?;
    match mode {
        CosineMode::Flatten => Ok(1.0 - cosine_similarity(&concat(ev), &concat(im))?),
        CosineMode::PerPairMean => {
            let mut total = 0.0;
            for (a, b) in ev.iter().zip(im) {
                total += 1.0 - cosine_similarity(&a.0, &b.0)?;
            }
            Ok(total / ev.len() as f64)
        }
    }
}

pub fn mean_embedding(list: &[Embedding]) -> Result<Embedding> {
    let first = list
        .first()
        .ok_or_else(|| Error::Degenerate("mean of an empty embedding list".into()))?;
    let d = first.dim();
    let mut out = vec![0.0; d];
    for e in list {
        if e.dim() != d {
            return Err(Error::Dimension("embeddings differ in width".into()));
        }
        for (o, v) in out.iter_mut().zip(&e.0) {
            *o += v;
        }
    }
    let k = list.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(Embedding(out))
}

pub fn fuse_embeddings(ev: &Embedding, im: &Embedding, mode: FuseMode) -> Result<Embedding> {
    if ev.dim() != im.dim() {
        return Err(Error::Dimension(format!("{} vs {} entries", ev.dim(), im.dim())));
    }
    let scale = match mode {
        FuseMode::Mean => 0.5,
        FuseMode::Sum => 1.0,
    };
    Ok(Embedding(
        ev.0.iter().zip(&im.0).map(|(a, b)| scale * (a + b)).collect(),
    ))
}

/// Sequence NLL conditioned on the average of the event and image embeddings.
pub fn prior_fused_nll(
    decoder: &ToyDecoderParams,
    ev: &Embedding,
    im: &Embedding,
    seq: &TokenSeq,
) -> Result<f64> {
    let fused = fuse_embeddings(ev, im, FuseMode::Mean)?;
    sequence_nll(decoder, &fused.0, seq)
}

/// All three objectives for one sample. Embedding lists are mean-pooled to
/// condition the decoder.
pub fn total_loss(
    decoder: &ToyDecoderParams,
    ev: &[Embedding],
    im: &[Embedding],
    seq: &TokenSeq,
    config: &AlignConfig,
) -> Result<LossBreakdown> {
    let pooled_ev = mean_embedding(ev)?;
    let pooled_im = mean_embedding(im)?;
    let l_ev_t = sequence_nll(decoder, &pooled_ev.0, seq)?;
    let l_ev_im_t = prior_fused_nll(decoder, &pooled_ev, &pooled_im, seq)?;
    let l_c = cosine_alignment_loss(ev, im, config.cosine_mode)?;
    Ok(LossBreakdown::compose(
        l_ev_t,
        l_ev_im_t,
        l_c,
        config.lambda1,
        config.lambda2,
    ))
}
