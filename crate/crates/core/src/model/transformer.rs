//! Post-norm transformer encoder with a tied masked-LM head, forward and
//! backward passes written out by hand over `ndarray`.

use ndarray::{s, Array1, Array2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::MlmConfig;

const INIT_STD: f64 = 0.02;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[in, out]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: normal_matrix(rng, fan_in, fan_out),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &x.t().dot(dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    fn init(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
        }
    }

    fn forward(&self, x: &Array2<f64>, eps: f64) -> (Array2<f64>, NormCache) {
        let dim = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / dim;
        let centered = x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / dim;
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &self.gamma + &self.beta;
        (y, NormCache { xhat, inv_std })
    }

    fn backward(&self, cache: &NormCache, dy: &Array2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let dim = dy.ncols() as f64;
        let dxhat = dy * &self.gamma;
        let mean_d = dxhat.sum_axis(Axis(1)) / dim;
        let mean_dx = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / dim;
        let mut dx = dxhat - &mean_d.view().insert_axis(Axis(1));
        dx -= &(&cache.xhat * &mean_dx.view().insert_axis(Axis(1)));
        dx * &cache.inv_std.view().insert_axis(Axis(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub attn_norm: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_norm: LayerNorm,
}

struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_norm: NormCache,
    h1: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ffn_norm: NormCache,
}

/// All trainable tensors. Gradients share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmWeights {
    pub word_embeddings: Array2<f64>,
    pub position_embeddings: Array2<f64>,
    pub embed_norm: LayerNorm,
    pub layers: Vec<EncoderLayer>,
    pub head_transform: Linear,
    pub head_norm: LayerNorm,
    pub decoder_bias: Array1<f64>,
}

/// Cached activations of one sequence, needed by [`MlmWeights::backward`].
pub struct ForwardPass {
    ids: Vec<u32>,
    mask_positions: Vec<usize>,
    embed_norm: NormCache,
    layers: Vec<LayerCache>,
    final_hidden: Array2<f64>,
    head_in: Array2<f64>,
    head_pre_act: Array2<f64>,
    head_norm: NormCache,
    head_out: Array2<f64>,
    /// `[n_masks, vocab]`; excluded ids hold negative infinity.
    pub logits: Array2<f64>,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        // Box-Muller
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        INIT_STD * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    })
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            total += e;
            e
        });
        row /= total;
    }
}

/// Row-wise softmax of logits.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    softmax_rows(&mut p);
    p
}

impl EncoderLayer {
    fn init(rng: &mut ChaCha8Rng, cfg: &MlmConfig) -> Self {
        let d = cfg.hidden_size;
        Self {
            query: Linear::init(rng, d, d),
            key: Linear::init(rng, d, d),
            value: Linear::init(rng, d, d),
            attn_out: Linear::init(rng, d, d),
            attn_norm: LayerNorm::init(d),
            ffn_in: Linear::init(rng, d, cfg.intermediate_size),
            ffn_out: Linear::init(rng, cfg.intermediate_size, d),
            ffn_norm: LayerNorm::init(d),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            attn_out: self.attn_out.zeros_like(),
            attn_norm: self.attn_norm.zeros_like(),
            ffn_in: self.ffn_in.zeros_like(),
            ffn_out: self.ffn_out.zeros_like(),
            ffn_norm: self.ffn_norm.zeros_like(),
        }
    }

    fn forward(&self, x: Array2<f64>, heads: usize, eps: f64) -> (Array2<f64>, LayerCache) {
        let q = self.query.forward(&x);
        let k = self.key.forward(&x);
        let v = self.value.forward(&x);
        let dh = x.ncols() / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Array2::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut scores);
            ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let attn = self.attn_out.forward(&ctx);
        let (h1, attn_norm) = self.attn_norm.forward(&(&x + &attn), eps);
        let pre_act = self.ffn_in.forward(&h1);
        let act = pre_act.mapv(gelu);
        let ffn = self.ffn_out.forward(&act);
        let (out, ffn_norm) = self.ffn_norm.forward(&(&h1 + &ffn), eps);
        let cache = LayerCache {
            x,
            q,
            k,
            v,
            probs,
            ctx,
            attn_norm,
            h1,
            pre_act,
            act,
            ffn_norm,
        };
        (out, cache)
    }

    fn backward(&self, c: &LayerCache, dout: &Array2<f64>, g: &mut EncoderLayer) -> Array2<f64> {
        let d_res2 = self.ffn_norm.backward(&c.ffn_norm, dout, &mut g.ffn_norm);
        let d_act = self.ffn_out.backward(&c.act, &d_res2, &mut g.ffn_out);
        let mut d_pre = d_act;
        Zip::from(&mut d_pre)
            .and(&c.pre_act)
            .for_each(|d, &x| *d *= gelu_grad(x));
        let d_h1 = d_res2 + self.ffn_in.backward(&c.h1, &d_pre, &mut g.ffn_in);

        let d_res1 = self.attn_norm.backward(&c.attn_norm, &d_h1, &mut g.attn_norm);
        let d_ctx = self.attn_out.backward(&c.ctx, &d_res1, &mut g.attn_out);
        let heads = c.probs.len();
        let dh = c.x.ncols() / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for (h, p) in c.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let d_ctx_h = d_ctx.slice(cols);
            let d_p = d_ctx_h.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&d_ctx_h));
            let row_dot = (&d_p * p).sum_axis(Axis(1));
            let d_scores = (d_p - &row_dot.view().insert_axis(Axis(1))) * p * scale;
            dq.slice_mut(cols).assign(&d_scores.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&d_scores.t().dot(&c.q.slice(cols)));
        }
        let mut dx = d_res1;
        dx += &self.query.backward(&c.x, &dq, &mut g.query);
        dx += &self.key.backward(&c.x, &dk, &mut g.key);
        dx += &self.value.backward(&c.x, &dv, &mut g.value);
        dx
    }
}

impl MlmWeights {
    pub fn init(cfg: &MlmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.hidden_size;
        Self {
            word_embeddings: normal_matrix(&mut rng, cfg.vocab_size, d),
            position_embeddings: normal_matrix(&mut rng, cfg.max_position_embeddings, d),
            embed_norm: LayerNorm::init(d),
            layers: (0..cfg.num_hidden_layers)
                .map(|_| EncoderLayer::init(&mut rng, cfg))
                .collect(),
            head_transform: Linear::init(&mut rng, d, d),
            head_norm: LayerNorm::init(d),
            decoder_bias: Array1::zeros(cfg.vocab_size),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            word_embeddings: Array2::zeros(self.word_embeddings.raw_dim()),
            position_embeddings: Array2::zeros(self.position_embeddings.raw_dim()),
            embed_norm: self.embed_norm.zeros_like(),
            layers: self.layers.iter().map(EncoderLayer::zeros_like).collect(),
            head_transform: self.head_transform.zeros_like(),
            head_norm: self.head_norm.zeros_like(),
            decoder_bias: Array1::zeros(self.decoder_bias.raw_dim()),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Named views over every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![
            (
                "embeddings.word_embeddings.weight".to_string(),
                self.word_embeddings.view().into_dyn(),
            ),
            (
                "embeddings.position_embeddings.weight".to_string(),
                self.position_embeddings.view().into_dyn(),
            ),
            (
                "embeddings.LayerNorm.weight".to_string(),
                self.embed_norm.gamma.view().into_dyn(),
            ),
            (
                "embeddings.LayerNorm.bias".to_string(),
                self.embed_norm.beta.view().into_dyn(),
            ),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("encoder.layer.{i}");
            let linears = [
                ("attention.self.query", &l.query),
                ("attention.self.key", &l.key),
                ("attention.self.value", &l.value),
                ("attention.output.dense", &l.attn_out),
                ("intermediate.dense", &l.ffn_in),
                ("output.dense", &l.ffn_out),
            ];
            for (name, lin) in linears {
                out.push((format!("{p}.{name}.weight"), lin.weight.view().into_dyn()));
                out.push((format!("{p}.{name}.bias"), lin.bias.view().into_dyn()));
            }
            for (name, ln) in [
                ("attention.output.LayerNorm", &l.attn_norm),
                ("output.LayerNorm", &l.ffn_norm),
            ] {
                out.push((format!("{p}.{name}.weight"), ln.gamma.view().into_dyn()));
                out.push((format!("{p}.{name}.bias"), ln.beta.view().into_dyn()));
            }
        }
        out.push((
            "cls.predictions.transform.dense.weight".into(),
            self.head_transform.weight.view().into_dyn(),
        ));
        out.push((
            "cls.predictions.transform.dense.bias".into(),
            self.head_transform.bias.view().into_dyn(),
        ));
        out.push((
            "cls.predictions.transform.LayerNorm.weight".into(),
            self.head_norm.gamma.view().into_dyn(),
        ));
        out.push((
            "cls.predictions.transform.LayerNorm.bias".into(),
            self.head_norm.beta.view().into_dyn(),
        ));
        out.push(("cls.predictions.bias".into(), self.decoder_bias.view().into_dyn()));
        out
    }

    /// Mutable counterpart of [`MlmWeights::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = vec![
            (
                "embeddings.word_embeddings.weight".to_string(),
                self.word_embeddings.view_mut().into_dyn(),
            ),
            (
                "embeddings.position_embeddings.weight".to_string(),
                self.position_embeddings.view_mut().into_dyn(),
            ),
            (
                "embeddings.LayerNorm.weight".to_string(),
                self.embed_norm.gamma.view_mut().into_dyn(),
            ),
            (
                "embeddings.LayerNorm.bias".to_string(),
                self.embed_norm.beta.view_mut().into_dyn(),
            ),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = format!("encoder.layer.{i}");
            let linears = [
                ("attention.self.query", &mut l.query),
                ("attention.self.key", &mut l.key),
                ("attention.self.value", &mut l.value),
                ("attention.output.dense", &mut l.attn_out),
                ("intermediate.dense", &mut l.ffn_in),
                ("output.dense", &mut l.ffn_out),
            ];
            for (name, lin) in linears {
                out.push((format!("{p}.{name}.weight"), lin.weight.view_mut().into_dyn()));
                out.push((format!("{p}.{name}.bias"), lin.bias.view_mut().into_dyn()));
            }
            for (name, ln) in [
                ("attention.output.LayerNorm", &mut l.attn_norm),
                ("output.LayerNorm", &mut l.ffn_norm),
            ] {
                out.push((format!("{p}.{name}.weight"), ln.gamma.view_mut().into_dyn()));
                out.push((format!("{p}.{name}.bias"), ln.beta.view_mut().into_dyn()));
            }
        }
        out.push((
            "cls.predictions.transform.dense.weight".into(),
            self.head_transform.weight.view_mut().into_dyn(),
        ));
        out.push((
            "cls.predictions.transform.dense.bias".into(),
            self.head_transform.bias.view_mut().into_dyn(),
        ));
        out.push((
            "cls.predictions.transform.LayerNorm.weight".into(),
            self.head_norm.gamma.view_mut().into_dyn(),
        ));
        out.push((
            "cls.predictions.transform.LayerNorm.bias".into(),
            self.head_norm.beta.view_mut().into_dyn(),
        ));
        out.push(("cls.predictions.bias".into(), self.decoder_bias.view_mut().into_dyn()));
        out
    }

    /// Runs the encoder over `ids` and the LM head over `mask_positions`.
    /// Logits of `excluded` ids are pinned to negative infinity.
    pub fn forward(&self, cfg: &MlmConfig, ids: &[u32], mask_positions: &[usize], excluded: &[u32]) -> ForwardPass {
        let eps = cfg.layer_norm_eps;
        let t = ids.len();
        let d = cfg.hidden_size;
        let mut x = Array2::zeros((t, d));
        for (row, &id) in ids.iter().enumerate() {
            let mut r = x.row_mut(row);
            r.assign(&self.word_embeddings.row(id as usize));
            r += &self.position_embeddings.row(row);
        }
        let (mut x, embed_norm) = self.embed_norm.forward(&x, eps);
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(x, cfg.num_attention_heads, eps);
            layers.push(cache);
            x = out;
        }
        let head_in = x.select(Axis(0), mask_positions);
        let head_pre_act = self.head_transform.forward(&head_in);
        let act = head_pre_act.mapv(gelu);
        let (head_out, head_norm) = self.head_norm.forward(&act, eps);
        let mut logits = head_out.dot(&self.word_embeddings.t()) + &self.decoder_bias;
        for &id in excluded {
            logits.column_mut(id as usize).fill(f64::NEG_INFINITY);
        }
        ForwardPass {
            ids: ids.to_vec(),
            mask_positions: mask_positions.to_vec(),
            embed_norm,
            layers,
            final_hidden: x,
            head_in,
            head_pre_act,
            head_norm,
            head_out,
            logits,
        }
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative with
    /// respect to the pass's logits is `d_logits`.
    pub fn backward(&self, pass: &ForwardPass, d_logits: &Array2<f64>, grad: &mut MlmWeights) {
        grad.word_embeddings += &d_logits.t().dot(&pass.head_out);
        grad.decoder_bias += &d_logits.sum_axis(Axis(0));
        let d_head_out = d_logits.dot(&self.word_embeddings);
        let mut d_act = self
            .head_norm
            .backward(&pass.head_norm, &d_head_out, &mut grad.head_norm);
        Zip::from(&mut d_act)
            .and(&pass.head_pre_act)
            .for_each(|d, &x| *d *= gelu_grad(x));
        let d_head_in = self
            .head_transform
            .backward(&pass.head_in, &d_act, &mut grad.head_transform);

        let mut dx = Array2::zeros(pass.final_hidden.raw_dim());
        for (row, &pos) in pass.mask_positions.iter().enumerate() {
            let mut r = dx.row_mut(pos);
            r += &d_head_in.row(row);
        }
        for ((layer, cache), g) in self.layers.iter().zip(&pass.layers).zip(grad.layers.iter_mut()).rev() {
            dx = layer.backward(cache, &dx, g);
        }
        let d_embed = self.embed_norm.backward(&pass.embed_norm, &dx, &mut grad.embed_norm);
        for (row, &id) in pass.ids.iter().enumerate() {
            let mut w = grad.word_embeddings.row_mut(id as usize);
            w += &d_embed.row(row);
            let mut p = grad.position_embeddings.row_mut(row);
            p += &d_embed.row(row);
        }
    }
}

/// Summed cross-entropy of `labels` under `logits`, and its gradient
/// (softmax minus one-hot) scaled by `scale`.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[u32], scale: f64) -> (f64, Array2<f64>) {
    let mut probs = softmax(logits);
    let mut loss = 0.0;
    for (mut row, &label) in probs.rows_mut().into_iter().zip(labels) {
        let p = row[label as usize];
        loss -= p.max(f64::MIN_POSITIVE).ln();
        row[label as usize] -= 1.0;
        row *= scale;
    }
    (loss, probs)
}
