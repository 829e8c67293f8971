//! Diffusion-transformer velocity network.
//!
//! Each latent frame is concatenated with the aligned low-resolution frame,
//! projected to `model_dim` and tagged with a sinusoidal encoding of its
//! normalized time in the utterance. A block applies self-attention over
//! frames, cross-attention over the conditioning tokens and an MLP, each on
//! a layer-normalized input shifted by a per-block projection of the
//! conditioning vector `silu(time_mlp(t) + global)`.

use rand::Rng;
use srflow_conditioning::bundle::build_bundle;
use srflow_conditioning::{ConditioningConfig, ConditioningInputs};
use srflow_numerics::{sinusoidal_features, Bound, Graph, ParamStore, Tensor, Var};

use crate::config::DiTConfig;
use crate::error::{FlowError, Result};
use FlowError::FrameMismatch;

const LN_EPS: f64 = 1e-5;
/// Normalized time is multiplied by this before sinusoidal encoding, which
/// gives the fastest component a period of about a tenth of the utterance.
pub const POSITION_SCALE: f64 = 64.0;
/// Timestep `t` in `[0, 1]` is multiplied by this before encoding.
pub const TIME_SCALE: f64 = 1000.0;

/// Sinusoidal features for a normalized position in `[0, 1]`.
pub fn position_features(p: f64, dim: usize) -> Vec<f64> {
    sinusoidal_features(p * POSITION_SCALE, dim, POSITION_SCALE)
}

/// Normalized time of each MDCT frame centre in an utterance.
pub fn frame_positions(num_frames: usize, frame_len: usize, num_samples: usize) -> Vec<f64> {
    let l = num_samples.max(1) as f64;
    (0..num_frames).map(|t| (t * frame_len) as f64 / l).collect()
}

fn block(i: usize, name: &str) -> String {
    format!("dit.block{i}.{name}")
}

/// Fresh parameters for the network and its conditioning embeddings.
pub fn init_params<R: Rng + ?Sized>(
    cfg: &DiTConfig,
    cond: &ConditioningConfig,
    vocab_size: usize,
    rng: &mut R,
) -> Result<ParamStore> {
    cfg.validate()?;
    if cond.width != cfg.cond_width {
        return Err(FlowError::Config(format!(
            "conditioning width {} differs from cond_width {}",
            cond.width, cfg.cond_width
        )));
    }
    let (d, c, l, e) = (cfg.model_dim, cfg.cond_width, cfg.latent_dim, cfg.time_embed_dim);
    let h = d * cfg.mlp_ratio;
    let mut s = ParamStore::new();
    let lin = |s: &mut ParamStore, name: &str, fan_in: usize, out: usize, rng: &mut R| {
        s.insert(format!("{name}.w"), Tensor::fan_in_uniform(&[fan_in, out], fan_in, rng));
        s.insert(format!("{name}.b"), Tensor::zeros(&[out]));
    };
    let ln = |s: &mut ParamStore, name: &str| {
        s.insert(format!("{name}.gain"), Tensor::ones(&[d]));
        s.insert(format!("{name}.bias"), Tensor::zeros(&[d]));
    };
    lin(&mut s, "dit.in", 2 * l, d, rng);
    lin(&mut s, "dit.time1", e, c, rng);
    lin(&mut s, "dit.time2", c, c, rng);
    for i in 0..cfg.depth {
        // Shifts start at zero so every block begins unmodulated.
        s.insert(block(i, "mod.w"), Tensor::zeros(&[c, 3 * d]));
        s.insert(block(i, "mod.b"), Tensor::zeros(&[3 * d]));
        ln(&mut s, &block(i, "ln1"));
        lin(&mut s, &block(i, "attn.qkv"), d, 3 * d, rng);
        lin(&mut s, &block(i, "attn.out"), d, d, rng);
        ln(&mut s, &block(i, "ln2"));
        lin(&mut s, &block(i, "xattn.q"), d, d, rng);
        lin(&mut s, &block(i, "xattn.k"), c, d, rng);
        lin(&mut s, &block(i, "xattn.v"), c, d, rng);
        lin(&mut s, &block(i, "xattn.out"), d, d, rng);
        ln(&mut s, &block(i, "ln3"));
        lin(&mut s, &block(i, "mlp1"), d, h, rng);
        lin(&mut s, &block(i, "mlp2"), h, d, rng);
    }
    s.insert("dit.final.mod.w".to_string(), Tensor::zeros(&[c, d]));
    s.insert("dit.final.mod.b".to_string(), Tensor::zeros(&[d]));
    ln(&mut s, "dit.final.ln");
    lin(&mut s, "dit.out", d, l, rng);
    cond.init_params(vocab_size, &mut s, rng);
    Ok(s)
}

fn linear(g: &mut Graph, p: &Bound, x: Var, name: &str) -> Result<Var> {
    let w = p.var(&format!("{name}.w"))?;
    let b = p.var(&format!("{name}.b"))?;
    Ok(g.linear(x, w, Some(b))?)
}

fn norm(g: &mut Graph, p: &Bound, x: Var, name: &str, shift: Var) -> Result<Var> {
    let gain = p.var(&format!("{name}.gain"))?;
    let bias = p.var(&format!("{name}.bias"))?;
    let y = g.layer_norm(x, Some(gain), Some(bias), LN_EPS)?;
    Ok(g.add(y, shift)?)
}

/// Multi-head scaled dot-product attention of `[T, D]` queries over `[S, D]`
/// keys and values.
fn attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize, head_dim: usize) -> Result<Var> {
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (a, b) = (h * head_dim, (h + 1) * head_dim);
        let qh = g.slice(q, 1, a, b)?;
        let kh = g.slice(k, 1, a, b)?;
        let vh = g.slice(v, 1, a, b)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale)?;
        let w = g.softmax(scores)?;
        outs.push(g.matmul(w, vh)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        Ok(g.concat(&outs, 1)?)
    }
}

fn position_block(positions: impl Iterator<Item = Option<f64>>, dim: usize) -> Result<(Tensor, usize)> {
    let mut data = Vec::new();
    let mut rows = 0;
    for p in positions {
        match p {
            Some(p) => data.extend(position_features(p, dim)),
            None => data.extend(std::iter::repeat_n(0.0, dim)),
        }
        rows += 1;
    }
    Ok((Tensor::new(vec![rows, dim], data)?, rows))
}

/// Velocity for one frame sequence, recorded on `g`.
///
/// `xt` and `lr` are `[T, latent_dim]` with `T <= max_frames`; `frame_pos`
/// holds the normalized utterance time of each frame.
#[allow(clippy::too_many_arguments)]
pub fn forward_graph(
    g: &mut Graph,
    p: &Bound,
    cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    xt: Var,
    lr: Var,
    t: f64,
    frame_pos: &[f64],
    cond: &ConditioningInputs,
) -> Result<Var> {
    let (xs, ls) = (g.shape(xt).to_vec(), g.shape(lr).to_vec());
    if xs.len() != 2 || xs[1] != cfg.latent_dim {
        return Err(FrameMismatch(format!("xt shape {xs:?}, latent_dim {}", cfg.latent_dim)));
    }
    if xs != ls {
        return Err(FrameMismatch(format!("xt shape {xs:?} vs low-resolution shape {ls:?}")));
    }
    let frames = xs[0];
    if frame_pos.len() != frames {
        return Err(FrameMismatch(format!("{} positions for {frames} frames", frame_pos.len())));
    }
    if frames > cfg.max_frames {
        return Err(FrameMismatch(format!("{frames} frames exceed max_frames {}", cfg.max_frames)));
    }
    if cond.token_positions.len() != cond.token_ids.len() {
        return Err(FlowError::Config("token positions do not match token ids".into()));
    }
    let (d, heads, hd) = (cfg.model_dim, cfg.num_heads, cfg.head_dim());

    let bundle = build_bundle(g, p, cond_cfg, cond)?;
    let token_pos = cond.token_positions.iter().copied().chain([None, None]);
    let (pe, _) = position_block(token_pos, cfg.cond_width)?;
    let pe = g.constant(pe);
    let tokens = g.add(bundle.tokens, pe)?;

    let tf = g.constant(Tensor::new(
        vec![1, cfg.time_embed_dim],
        sinusoidal_features(t * TIME_SCALE, cfg.time_embed_dim, 10_000.0),
    )?);
    let te = linear(g, p, tf, "dit.time1")?;
    let te = g.silu(te)?;
    let te = linear(g, p, te, "dit.time2")?;
    let c = g.add(te, bundle.global)?;
    let c = g.silu(c)?;

    let x = g.concat(&[xt, lr], 1)?;
    let h0 = linear(g, p, x, "dit.in")?;
    let (fpe, _) = position_block(frame_pos.iter().map(|&v| Some(v)), d)?;
    let fpe = g.constant(fpe);
    let mut h = g.add(h0, fpe)?;

    for i in 0..cfg.depth {
        let mods = linear(g, p, c, &block(i, "mod"))?;
        let shift = |g: &mut Graph, k: usize| -> Result<Var> {
            let s = g.slice(mods, 1, k * d, (k + 1) * d)?;
            Ok(g.reshape(s, &[d])?)
        };

        let s1 = shift(g, 0)?;
        let a = norm(g, p, h, &block(i, "ln1"), s1)?;
        let qkv = linear(g, p, a, &block(i, "attn.qkv"))?;
        let q = g.slice(qkv, 1, 0, d)?;
        let k = g.slice(qkv, 1, d, 2 * d)?;
        let v = g.slice(qkv, 1, 2 * d, 3 * d)?;
        let att = attention(g, q, k, v, heads, hd)?;
        let att = linear(g, p, att, &block(i, "attn.out"))?;
        h = g.add(h, att)?;

        let s2 = shift(g, 1)?;
        let a = norm(g, p, h, &block(i, "ln2"), s2)?;
        let q = linear(g, p, a, &block(i, "xattn.q"))?;
        let k = linear(g, p, tokens, &block(i, "xattn.k"))?;
        let v = linear(g, p, tokens, &block(i, "xattn.v"))?;
        let att = attention(g, q, k, v, heads, hd)?;
        let att = linear(g, p, att, &block(i, "xattn.out"))?;
        h = g.add(h, att)?;

        let s3 = shift(g, 2)?;
        let a = norm(g, p, h, &block(i, "ln3"), s3)?;
        let m = linear(g, p, a, &block(i, "mlp1"))?;
        let m = g.silu(m)?;
        let m = linear(g, p, m, &block(i, "mlp2"))?;
        h = g.add(h, m)?;
    }

    let fs = linear(g, p, c, "dit.final.mod")?;
    let fs = g.reshape(fs, &[d])?;
    let a = norm(g, p, h, "dit.final.ln", fs)?;
    linear(g, p, a, "dit.out")
}

/// Velocity over a whole latent sequence, evaluated in chunks of at most
/// `max_frames` frames.
#[allow(clippy::too_many_arguments)]
pub fn dit_forward(
    params: &ParamStore,
    cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    xt: &Tensor,
    t: f64,
    lr: &Tensor,
    frame_pos: &[f64],
    cond: &ConditioningInputs,
) -> Result<Tensor> {
    if xt.shape() != lr.shape() || xt.ndim() != 2 {
        return Err(FrameMismatch(format!(
            "xt shape {:?} vs low-resolution shape {:?}",
            xt.shape(),
            lr.shape()
        )));
    }
    let (frames, dim) = (xt.rows(), xt.cols());
    if frame_pos.len() != frames {
        return Err(FrameMismatch(format!("{} positions for {frames} frames", frame_pos.len())));
    }
    let mut out = Vec::with_capacity(frames * dim);
    let mut g = Graph::new();
    let mut start = 0;
    while start < frames {
        let end = (start + cfg.max_frames).min(frames);
        g.clear();
        let p = params.bind(&mut g);
        let rows = |x: &Tensor| Tensor::new(vec![end - start, dim], x.data()[start * dim..end * dim].to_vec());
        let xv = g.constant(rows(xt)?);
        let lv = g.constant(rows(lr)?);
        let v = forward_graph(&mut g, &p, cfg, cond_cfg, xv, lv, t, &frame_pos[start..end], cond)?;
        out.extend_from_slice(g.value(v).data());
        start = end;
    }
    Ok(Tensor::new(vec![frames, dim], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frame_positions_span_the_utterance() {
        let p = frame_positions(5, 64, 256);
        assert_eq!(p, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let cfg = DiTConfig {
            cond_width: 32,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(init_params(&cfg, &ConditioningConfig::default(), 10, &mut rng).is_err());
    }
}
