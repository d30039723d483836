//! Masked multi-head set attention and the two-layer block.

use super::partition::{
    assign_windows, partition_sets, positional_encoding, PosTables, SetPartition, SortAxis,
};
use super::{Window4DError, WindowConfig};
use crate::sparse4d::SparseTensor4D;
use crate::weights::{Init, WeightBundle, WeightsError};

/// Projection weights for one attention layer. All matrices are row-major
/// (in x out) over the full feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub bq: Vec<f32>,
    pub bk: Vec<f32>,
    pub bv: Vec<f32>,
    pub bo: Vec<f32>,
    pub heads: usize,
    pub channels: usize,
}

impl AttentionParams {
    pub fn validate(&self) -> Result<(), Window4DError> {
        let c = self.channels;
        if self.heads == 0 || c % self.heads != 0 {
            return Err(Window4DError::InvalidConfig(format!(
                "feature width {c} must divide evenly into {} heads",
                self.heads
            )));
        }
        for (name, m) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            if m.len() != c * c {
                return Err(Window4DError::ShapeMismatch(format!(
                    "{name} has {} values, expected {}",
                    m.len(),
                    c * c
                )));
            }
        }
        for (name, b) in [("bq", &self.bq), ("bk", &self.bk), ("bv", &self.bv), ("bo", &self.bo)] {
            if b.len() != c {
                return Err(Window4DError::ShapeMismatch(format!(
                    "{name} has {} values, expected {c}",
                    b.len()
                )));
            }
        }
        Ok(())
    }

    /// Identity projections with zero bias; attention output equals input for
    /// single-voxel sets.
    pub fn identity(channels: usize, heads: usize) -> Self {
        let mut eye = vec![0.0f32; channels * channels];
        for i in 0..channels {
            eye[i * channels + i] = 1.0;
        }
        Self {
            wq: eye.clone(),
            wk: eye.clone(),
            wv: eye.clone(),
            wo: eye,
            bq: vec![0.0; channels],
            bk: vec![0.0; channels],
            bv: vec![0.0; channels],
            bo: vec![0.0; channels],
            heads,
            channels,
        }
    }
}

/// Two-layer feed-forward with rectified hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams {
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
    pub channels: usize,
    pub hidden: usize,
}

impl FeedForwardParams {
    pub fn validate(&self) -> Result<(), Window4DError> {
        if self.w1.len() != self.channels * self.hidden
            || self.b1.len() != self.hidden
            || self.w2.len() != self.hidden * self.channels
            || self.b2.len() != self.channels
        {
            return Err(Window4DError::ShapeMismatch(
                "feed-forward parameter shapes inconsistent".into(),
            ));
        }
        Ok(())
    }

    pub fn zeros(channels: usize, hidden: usize) -> Self {
        Self {
            w1: vec![0.0; channels * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * channels],
            b2: vec![0.0; channels],
            channels,
            hidden,
        }
    }
}

/// Masked scaled-dot-product attention over every set of a partition.
///
/// The gathered buffer fills masked slots with `pad_fill`; masked keys
/// receive -inf logits and masked queries produce no output writes, so valid
/// outputs are independent of `pad_fill` by construction (tested, not
/// assumed). Returns the attention output aligned with the input rows.
pub fn set_attention(
    features: &[f32],
    partition: &SetPartition,
    params: &AttentionParams,
    pad_fill: f32,
) -> Result<Vec<f32>, Window4DError> {
    params.validate()?;
    let c = params.channels;
    if features.len() % c != 0 {
        return Err(Window4DError::ShapeMismatch(format!(
            "feature buffer length {} not divisible by width {c}",
            features.len()
        )));
    }
    let heads = params.heads;
    let dh = c / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let cap = partition.capacity;

    let mut out = vec![0.0f32; features.len()];
    let mut x = vec![0.0f32; cap * c];
    let mut q = vec![0.0f64; cap * c];
    let mut k = vec![0.0f64; cap * c];
    let mut v = vec![0.0f64; cap * c];
    let mut attn = vec![0.0f64; cap * c];
    let mut logits = vec![0.0f64; cap];

    for set in &partition.sets {
        // Gather.
        for (slot, (&row, &valid)) in set.rows.iter().zip(&set.valid).enumerate() {
            let dst = &mut x[slot * c..(slot + 1) * c];
            if valid {
                dst.copy_from_slice(&features[row as usize * c..(row as usize + 1) * c]);
            } else {
                dst.fill(pad_fill);
            }
        }
        project(&x, &params.wq, &params.bq, cap, c, &mut q);
        project(&x, &params.wk, &params.bk, cap, c, &mut k);
        project(&x, &params.wv, &params.bv, cap, c, &mut v);

        attn.iter_mut().for_each(|a| *a = 0.0);
        for h in 0..heads {
            let base = h * dh;
            for qi in 0..cap {
                if !set.valid[qi] {
                    continue;
                }
                // Logits over valid keys, max-subtracted softmax.
                logits.iter_mut().for_each(|l| *l = f64::NEG_INFINITY);
                let mut max_logit = f64::NEG_INFINITY;
                for ki in 0..cap {
                    if !set.valid[ki] {
                        continue;
                    }
                    let mut dot = 0.0f64;
                    for d in 0..dh {
                        dot += q[qi * c + base + d] * k[ki * c + base + d];
                    }
                    let l = dot * scale;
                    logits[ki] = l;
                    if l > max_logit {
                        max_logit = l;
                    }
                }
                let mut denom = 0.0f64;
                for l in logits.iter_mut() {
                    if l.is_finite() {
                        *l = (*l - max_logit).exp();
                        denom += *l;
                    } else {
                        *l = 0.0;
                    }
                }
                for ki in 0..cap {
                    let w = logits[ki];
                    if w == 0.0 {
                        continue;
                    }
                    let w = w / denom;
                    for d in 0..dh {
                        attn[qi * c + base + d] += w * v[ki * c + base + d];
                    }
                }
            }
        }

        // Output projection and scatter back to valid rows.
        for (slot, (&row, &valid)) in set.rows.iter().zip(&set.valid).enumerate() {
            if !valid {
                continue;
            }
            let dst = &mut out[row as usize * c..(row as usize + 1) * c];
            for o in 0..c {
                let mut acc = params.bo[o] as f64;
                for i in 0..c {
                    acc += attn[slot * c + i] * params.wo[i * c + o] as f64;
                }
                dst[o] = acc as f32;
            }
        }
    }
    Ok(out)
}

fn project(x: &[f32], w: &[f32], b: &[f32], rows: usize, c: usize, out: &mut [f64]) {
    for r in 0..rows {
        let xr = &x[r * c..(r + 1) * c];
        let dst = &mut out[r * c..(r + 1) * c];
        for o in 0..c {
            let mut acc = b[o] as f64;
            for i in 0..c {
                acc += xr[i] as f64 * w[i * c + o] as f64;
            }
            dst[o] = acc;
        }
    }
}

/// y = x W1 + b1, rectified, then W2 + b2. Row-aligned with the input.
pub fn feed_forward(features: &[f32], p: &FeedForwardParams) -> Result<Vec<f32>, Window4DError> {
    p.validate()?;
    let c = p.channels;
    if features.len() % c != 0 {
        return Err(Window4DError::ShapeMismatch(format!(
            "feature buffer length {} not divisible by width {c}",
            features.len()
        )));
    }
    let n = features.len() / c;
    let mut out = vec![0.0f32; features.len()];
    let mut hidden = vec![0.0f64; p.hidden];
    for r in 0..n {
        let x = &features[r * c..(r + 1) * c];
        for h in 0..p.hidden {
            let mut acc = p.b1[h] as f64;
            for i in 0..c {
                acc += x[i] as f64 * p.w1[i * p.hidden + h] as f64;
            }
            hidden[h] = acc.max(0.0);
        }
        let dst = &mut out[r * c..(r + 1) * c];
        for o in 0..c {
            let mut acc = p.b2[o] as f64;
            for (h, &hv) in hidden.iter().enumerate() {
                acc += hv * p.w2[h * c + o] as f64;
            }
            dst[o] = acc as f32;
        }
    }
    Ok(out)
}

/// Parameters of one attention layer: positional tables, attention, and
/// feed-forward.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub pos: PosTables,
    pub attn: AttentionParams,
    pub ffn: FeedForwardParams,
}

/// Two-layer block parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dsvt4dParams {
    pub layers: Vec<LayerParams>,
    pub channels: usize,
}

impl Dsvt4dParams {
    /// (name, shape, init) specs for one block, for seeding or validation.
    pub fn param_specs(
        cfg: &WindowConfig,
        channels: usize,
        hidden: usize,
    ) -> Vec<(String, Vec<usize>, Init)> {
        let eff = cfg.effective_window();
        let mut specs = Vec::new();
        let axis_names = ["x", "y", "z", "t"];
        for layer in 0..cfg.shifts.len() {
            for (a, axis) in axis_names.iter().enumerate() {
                specs.push((
                    format!("dsvt.layer{layer}.pos.{axis}"),
                    vec![eff[a], channels],
                    Init::Embedding,
                ));
            }
            for m in ["wq", "wk", "wv", "wo"] {
                specs.push((
                    format!("dsvt.layer{layer}.attn.{m}"),
                    vec![channels, channels],
                    Init::Normal { fan_in: channels },
                ));
            }
            for b in ["bq", "bk", "bv", "bo"] {
                specs.push((format!("dsvt.layer{layer}.attn.{b}"), vec![channels], Init::Zeros));
            }
            specs.push((
                format!("dsvt.layer{layer}.ffn.w1"),
                vec![channels, hidden],
                Init::Normal { fan_in: channels },
            ));
            specs.push((format!("dsvt.layer{layer}.ffn.b1"), vec![hidden], Init::Zeros));
            specs.push((
                format!("dsvt.layer{layer}.ffn.w2"),
                vec![hidden, channels],
                Init::Normal { fan_in: hidden },
            ));
            specs.push((format!("dsvt.layer{layer}.ffn.b2"), vec![channels], Init::Zeros));
        }
        specs
    }

    /// Bind a weight bundle to the block topology.
    pub fn from_bundle(
        cfg: &WindowConfig,
        channels: usize,
        hidden: usize,
        heads: usize,
        bundle: &WeightBundle,
    ) -> Result<Self, Window4DError> {
        let eff = cfg.effective_window();
        let fetch = |name: String, shape: &[usize]| -> Result<Vec<f32>, Window4DError> {
            bundle
                .get(&name, shape)
                .map(|s| s.to_vec())
                .map_err(|e: WeightsError| Window4DError::ShapeMismatch(e.to_string()))
        };
        let mut layers = Vec::new();
        for layer in 0..cfg.shifts.len() {
            let pos = PosTables {
                tables: [
                    fetch(format!("dsvt.layer{layer}.pos.x"), &[eff[0], channels])?,
                    fetch(format!("dsvt.layer{layer}.pos.y"), &[eff[1], channels])?,
                    fetch(format!("dsvt.layer{layer}.pos.z"), &[eff[2], channels])?,
                    fetch(format!("dsvt.layer{layer}.pos.t"), &[eff[3], channels])?,
                ],
                extents: eff,
                channels,
            };
            let attn = AttentionParams {
                wq: fetch(format!("dsvt.layer{layer}.attn.wq"), &[channels, channels])?,
                wk: fetch(format!("dsvt.layer{layer}.attn.wk"), &[channels, channels])?,
                wv: fetch(format!("dsvt.layer{layer}.attn.wv"), &[channels, channels])?,
                wo: fetch(format!("dsvt.layer{layer}.attn.wo"), &[channels, channels])?,
                bq: fetch(format!("dsvt.layer{layer}.attn.bq"), &[channels])?,
                bk: fetch(format!("dsvt.layer{layer}.attn.bk"), &[channels])?,
                bv: fetch(format!("dsvt.layer{layer}.attn.bv"), &[channels])?,
                bo: fetch(format!("dsvt.layer{layer}.attn.bo"), &[channels])?,
                heads,
                channels,
            };
            attn.validate()?;
            let ffn = FeedForwardParams {
                w1: fetch(format!("dsvt.layer{layer}.ffn.w1"), &[channels, hidden])?,
                b1: fetch(format!("dsvt.layer{layer}.ffn.b1"), &[hidden])?,
                w2: fetch(format!("dsvt.layer{layer}.ffn.w2"), &[hidden, channels])?,
                b2: fetch(format!("dsvt.layer{layer}.ffn.b2"), &[channels])?,
                channels,
                hidden,
            };
            ffn.validate()?;
            layers.push(LayerParams { pos, attn, ffn });
        }
        Ok(Self { layers, channels })
    }
}

/// One attention layer: h = x + pe; h = h + attention(h); h = h + ffn(h).
fn dsvt_layer(
    features: &[f32],
    indices: &[[i32; 4]],
    cfg: &WindowConfig,
    shift: [usize; 4],
    sort_axis: SortAxis,
    params: &LayerParams,
) -> Result<Vec<f32>, Window4DError> {
    let assignment = assign_windows(indices, cfg, shift)?;
    let partition = partition_sets(&assignment, cfg, sort_axis)?;
    let pe = positional_encoding(&assignment.inner, &params.pos)?;

    let mut h: Vec<f32> = features.iter().zip(&pe).map(|(f, p)| f + p).collect();
    let attn_out = set_attention(&h, &partition, &params.attn, 0.0)?;
    for (hv, a) in h.iter_mut().zip(&attn_out) {
        *hv += a;
    }
    let ffn_out = feed_forward(&h, &params.ffn)?;
    for (hv, f) in h.iter_mut().zip(&ffn_out) {
        *hv += f;
    }
    Ok(h)
}

/// The two-layer block: layer 0 uses shifts[0] sorting along x, layer 1 uses
/// shifts[1] sorting along y. Active sites are preserved throughout.
pub fn dsvt4d_block(
    x: &SparseTensor4D,
    params: &Dsvt4dParams,
    cfg: &WindowConfig,
) -> Result<SparseTensor4D, Window4DError> {
    cfg.validate()?;
    if params.layers.len() != cfg.shifts.len() {
        return Err(Window4DError::ShapeMismatch(format!(
            "{} layer parameter sets for {} shifts",
            params.layers.len(),
            cfg.shifts.len()
        )));
    }
    if x.channels() != params.channels {
        return Err(Window4DError::ShapeMismatch(format!(
            "tensor width {} vs block width {}",
            x.channels(),
            params.channels
        )));
    }
    let mut features = x.features().to_vec();
    for (layer, p) in params.layers.iter().enumerate() {
        let sort_axis = if layer % 2 == 0 { SortAxis::X } else { SortAxis::Y };
        features = dsvt_layer(&features, x.indices(), cfg, cfg.shifts[layer], sort_axis, p)?;
    }
    x.with_features(features, params.channels)
        .map_err(|e| Window4DError::ShapeMismatch(e.to_string()))
}
