//! Tiny U-Net without attention: residual blocks with GroupNorm and SiLU,
//! strided-conv downsampling, nearest upsampling and skip concatenation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    sinusoidal_embedding, Checkpoint, Graph, NnError, ParamId, ParamStore, Tensor, Var,
};

use super::{DenoiserError, TaskPrompt};

const INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub channel_mults: Vec<usize>,
    pub res_blocks: usize,
    pub embed_dim: usize,
    pub init_seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 6,
            out_channels: 3,
            base_width: 32,
            channel_mults: vec![1, 2, 4],
            res_blocks: 2,
            embed_dim: 128,
            init_seed: 0,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<(), DenoiserError> {
        let bad = |m: &str| Err(DenoiserError::Config(m.to_string()));
        if self.out_channels == 0 || self.in_channels <= self.out_channels {
            return bad("in_channels must exceed out_channels (condition + target)");
        }
        if self.base_width == 0 || self.channel_mults.is_empty() || self.channel_mults.contains(&0)
        {
            return bad("base_width and channel_mults must be positive");
        }
        if self.res_blocks == 0 {
            return bad("res_blocks must be at least 1");
        }
        if self.embed_dim < 2 || !self.embed_dim.is_multiple_of(2) {
            return bad("embed_dim must be even");
        }
        Ok(())
    }

    /// Spatial sizes must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.channel_mults.len() - 1)
    }

    pub fn condition_channels(&self) -> usize {
        self.in_channels - self.out_channels
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvP {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormP {
    gamma: ParamId,
    beta: ParamId,
    groups: usize,
}

#[derive(Debug, Clone, Copy)]
struct LinP {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct ResBlock {
    norm1: NormP,
    conv1: ConvP,
    emb: LinP,
    norm2: NormP,
    conv2: ConvP,
    skip: Option<ConvP>,
}

#[derive(Debug, Clone)]
struct Level {
    blocks: Vec<ResBlock>,
    resample: Option<ConvP>,
}

#[derive(Debug, Clone)]
struct Layout {
    time_mlp: (LinP, LinP),
    prompt_mlp: (LinP, LinP),
    conv_in: ConvP,
    down: Vec<Level>,
    mid: ResBlock,
    up: Vec<Level>,
    norm_out: NormP,
    conv_out: ConvP,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Builder {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Builder {
    fn conv(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        zero: bool,
    ) -> ConvP {
        let w = if zero {
            Tensor::zeros(&[cout, cin, k, k])
        } else {
            Tensor::randn(&[cout, cin, k, k], INIT_STD, &mut self.rng)
        };
        ConvP {
            w: self.store.add(format!("{name}.weight"), w),
            b: self
                .store
                .add(format!("{name}.bias"), Tensor::zeros(&[cout])),
            stride,
            pad: k / 2,
        }
    }

    fn norm(&mut self, name: &str, c: usize) -> NormP {
        NormP {
            gamma: self
                .store
                .add(format!("{name}.weight"), Tensor::full(&[c], 1.0)),
            beta: self.store.add(format!("{name}.bias"), Tensor::zeros(&[c])),
            groups: gcd(8, c),
        }
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) -> LinP {
        LinP {
            w: self.store.add(
                format!("{name}.weight"),
                Tensor::randn(&[dout, din], INIT_STD, &mut self.rng),
            ),
            b: self
                .store
                .add(format!("{name}.bias"), Tensor::zeros(&[dout])),
        }
    }

    fn res_block(&mut self, name: &str, cin: usize, cout: usize, embed: usize) -> ResBlock {
        ResBlock {
            norm1: self.norm(&format!("{name}.norm1"), cin),
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, 3, 1, false),
            emb: self.linear(&format!("{name}.emb"), embed, cout),
            norm2: self.norm(&format!("{name}.norm2"), cout),
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3, 1, false),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cin, cout, 1, 1, false)),
        }
    }
}

/// The conditional v-predictor `f_θ(z_t; x, p)`.
#[derive(Debug, Clone)]
pub struct UNet {
    config: UNetConfig,
    store: ParamStore,
    layout: Layout,
}

impl UNet {
    pub fn new(config: UNetConfig) -> Result<Self, DenoiserError> {
        config.validate()?;
        let mut b = Builder {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(config.init_seed),
        };
        let e = config.embed_dim;
        let time_mlp = (b.linear("time.0", e, e), b.linear("time.1", e, e));
        let prompt_mlp = (b.linear("prompt.0", e, e), b.linear("prompt.1", e, e));
        let base = config.base_width;
        let conv_in = b.conv("conv_in", config.in_channels, base, 3, 1, false);

        let mut skips = vec![base];
        let mut ch = base;
        let mut down = Vec::new();
        let last = config.channel_mults.len() - 1;
        for (l, &m) in config.channel_mults.iter().enumerate() {
            let cout = base * m;
            let mut blocks = Vec::new();
            for i in 0..config.res_blocks {
                blocks.push(b.res_block(&format!("down.{l}.{i}"), ch, cout, e));
                ch = cout;
                skips.push(ch);
            }
            let resample =
                (l != last).then(|| b.conv(&format!("down.{l}.downsample"), ch, ch, 3, 2, false));
            if resample.is_some() {
                skips.push(ch);
            }
            down.push(Level { blocks, resample });
        }
        let mid = b.res_block("mid", ch, ch, e);
        let mut up = Vec::new();
        for (l, &m) in config.channel_mults.iter().enumerate().rev() {
            let cout = base * m;
            let mut blocks = Vec::new();
            for i in 0..=config.res_blocks {
                let skip = skips.pop().expect("one skip per down activation");
                blocks.push(b.res_block(&format!("up.{l}.{i}"), ch + skip, cout, e));
                ch = cout;
            }
            let resample =
                (l != 0).then(|| b.conv(&format!("up.{l}.upsample"), ch, ch, 3, 1, false));
            up.push(Level { blocks, resample });
        }
        debug_assert!(skips.is_empty());
        let norm_out = b.norm("norm_out", ch);
        let conv_out = b.conv("conv_out", ch, config.out_channels, 3, 1, true);
        let layout = Layout {
            time_mlp,
            prompt_mlp,
            conv_in,
            down,
            mid,
            up,
            norm_out,
            conv_out,
        };
        Ok(Self {
            config,
            store: b.store,
            layout,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Checks `z_t` against `z_x` and the configuration; returns the batch size.
    pub fn check_inputs(&self, z_t: &Tensor, z_x: &Tensor) -> Result<usize, DenoiserError> {
        let (n, c, h, w) = z_t.dims4()?;
        let (nx, cx, hx, wx) = z_x.dims4()?;
        if (n, h, w) != (nx, hx, wx) {
            return Err(DenoiserError::Shape(format!(
                "noisy target {:?} and condition {:?} are not aligned",
                z_t.shape(),
                z_x.shape()
            )));
        }
        if c != self.config.out_channels || cx != self.config.condition_channels() {
            return Err(DenoiserError::Shape(format!(
                "expected {} target and {} condition channels, got {c} and {cx}",
                self.config.out_channels,
                self.config.condition_channels()
            )));
        }
        let k = self.config.size_multiple();
        if h % k != 0 || w % k != 0 {
            return Err(DenoiserError::Shape(format!(
                "spatial size {h}x{w} must be divisible by {k}"
            )));
        }
        Ok(n)
    }

    /// Embedding vector `MLP(sin(t)) + MLP(sin(p))`, shape `[1, embed_dim]`.
    pub fn embedding(&self, t: usize, prompt: TaskPrompt) -> Result<Tensor, DenoiserError> {
        let mut g = Graph::with_params(&self.store);
        let e = self.embed_node(&mut g, 1, t, prompt)?;
        Ok(g.value(e).clone())
    }

    fn embed_node<'a>(
        &self,
        g: &mut Graph<'a>,
        n: usize,
        t: usize,
        prompt: TaskPrompt,
    ) -> Result<Var, NnError> {
        let d = self.config.embed_dim;
        let mlp = |g: &mut Graph<'a>, value: f32, (l0, l1): (LinP, LinP)| -> Result<Var, NnError> {
            let s = sinusoidal_embedding(value, d)?;
            let rows: Vec<f32> = (0..n).flat_map(|_| s.data().iter().copied()).collect();
            let x = g.input(Tensor::from_vec(&[n, d], rows)?);
            let h = linear(g, x, l0)?;
            let h = g.silu(h)?;
            linear(g, h, l1)
        };
        let te = mlp(g, t as f32, self.layout.time_mlp)?;
        let pe = mlp(g, prompt.id() as f32, self.layout.prompt_mlp)?;
        g.add(te, pe)
    }

    /// Records the forward pass on `g` (which must borrow this model's parameters).
    pub fn forward_node<'a>(
        &self,
        g: &mut Graph<'a>,
        z_t: Var,
        z_x: Var,
        t: usize,
        prompt: TaskPrompt,
    ) -> Result<Var, DenoiserError> {
        let n = self.check_inputs(g.value(z_t), g.value(z_x))?;
        let emb = self.embed_node(g, n, t, prompt)?;
        let emb = g.silu(emb)?;
        let x = g.concat(z_x, z_t)?;
        let mut h = conv(g, x, self.layout.conv_in)?;
        let mut skips = vec![h];
        for level in &self.layout.down {
            for block in &level.blocks {
                h = res_block(g, h, emb, block)?;
                skips.push(h);
            }
            if let Some(c) = level.resample {
                h = conv(g, h, c)?;
                skips.push(h);
            }
        }
        h = res_block(g, h, emb, &self.layout.mid)?;
        for level in &self.layout.up {
            for block in &level.blocks {
                let s = skips.pop().expect("skip stack matches layout");
                let cat = g.concat(h, s)?;
                h = res_block(g, cat, emb, block)?;
            }
            if let Some(c) = level.resample {
                let u = g.upsample2x(h)?;
                h = conv(g, u, c)?;
            }
        }
        h = norm(g, h, self.layout.norm_out)?;
        h = g.silu(h)?;
        Ok(conv(g, h, self.layout.conv_out)?)
    }

    /// v prediction for `z_t` given the condition latent `z_x`.
    pub fn forward(
        &self,
        z_t: &Tensor,
        z_x: &Tensor,
        t: usize,
        prompt: TaskPrompt,
    ) -> Result<Tensor, DenoiserError> {
        let mut g = Graph::with_params(&self.store);
        let (a, b) = (g.input(z_t.clone()), g.input(z_x.clone()));
        let out = self.forward_node(&mut g, a, b, t, prompt)?;
        Ok(g.value(out).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: serde_json::to_value(&self.config).expect("config serializes"),
            tensors: self
                .store
                .iter()
                .map(|(name, p)| (name.to_string(), p.value.clone()))
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, DenoiserError> {
        let config: UNetConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| DenoiserError::Checkpoint(format!("model config: {e}")))?;
        let mut model = Self::new(config)?;
        if ckpt.tensors.len() != model.store.len() {
            return Err(DenoiserError::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.store.len(),
                ckpt.tensors.len()
            )));
        }
        for ((name, p), (cname, t)) in model.store.iter_mut().zip(&ckpt.tensors) {
            if name != cname || p.value.shape() != t.shape() {
                return Err(DenoiserError::Checkpoint(format!(
                    "tensor {cname} {:?} does not match {name} {:?}",
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), DenoiserError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        crate::nn::write_checkpoint(f, &self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, DenoiserError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_checkpoint(&crate::nn::read_checkpoint(f)?)
    }
}

fn conv(g: &mut Graph<'_>, x: Var, p: ConvP) -> Result<Var, NnError> {
    let (w, b) = (g.param(p.w), g.param(p.b));
    g.conv2d(x, w, b, p.stride, p.pad)
}

fn norm(g: &mut Graph<'_>, x: Var, p: NormP) -> Result<Var, NnError> {
    let (gamma, beta) = (g.param(p.gamma), g.param(p.beta));
    g.group_norm(x, gamma, beta, p.groups)
}

fn linear(g: &mut Graph<'_>, x: Var, p: LinP) -> Result<Var, NnError> {
    let (w, b) = (g.param(p.w), g.param(p.b));
    g.linear(x, w, b)
}

fn res_block(g: &mut Graph<'_>, x: Var, emb: Var, p: &ResBlock) -> Result<Var, NnError> {
    let h = norm(g, x, p.norm1)?;
    let h = g.silu(h)?;
    let h = conv(g, h, p.conv1)?;
    let e = linear(g, emb, p.emb)?;
    let h = g.add_channel(h, e)?;
    let h = norm(g, h, p.norm2)?;
    let h = g.silu(h)?;
    let h = conv(g, h, p.conv2)?;
    let skip = match p.skip {
        Some(c) => conv(g, x, c)?,
        None => x,
    };
    g.add(h, skip)
}
