//! Conditional 1-D convolutional U-Net noise predictor.
//!
//! Two or more resolution levels of residual blocks over the action sequence,
//! each block modulated (scale and bias per channel) by a conditioning vector
//! made of a diffusion-step embedding and the observation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;
use libm::{cos, exp, log, sin, sqrt};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tape::{ConvSpec, NormSpec, Tape, Var};
use super::tensor::Tensor;

/// Action channels: position (3) + 6D rotation.
pub const ACTION_DIM: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArchError {
    #[error("need at least one U-Net level")]
    NoLevels,
    #[error("{channels} channels not divisible into {groups} groups")]
    Groups { channels: usize, groups: usize },
    #[error("kernel size must be odd, got {0}")]
    EvenKernel(usize),
    #[error("time embedding dim must be even and at least 4, got {0}")]
    TimeDim(usize),
    #[error("horizon {t_p} not divisible by {factor} (required by {levels} levels)")]
    Horizon { t_p: usize, factor: usize, levels: usize },
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Channels per resolution level.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub groups: usize,
    /// Sinusoidal diffusion-step embedding size.
    pub time_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { channels: alloc::vec![64, 128], kernel: 5, groups: 8, time_dim: 64 }
    }
}

impl ArchConfig {
    pub fn validate(&self, t_p: usize) -> Result<(), ArchError> {
        if self.channels.is_empty() {
            return Err(ArchError::NoLevels);
        }
        for &c in &self.channels {
            if self.groups == 0 || c % self.groups != 0 {
                return Err(ArchError::Groups { channels: c, groups: self.groups });
            }
        }
        if self.kernel.is_multiple_of(2) {
            return Err(ArchError::EvenKernel(self.kernel));
        }
        if self.time_dim < 4 || !self.time_dim.is_multiple_of(2) {
            return Err(ArchError::TimeDim(self.time_dim));
        }
        let factor = 1 << (self.channels.len() - 1);
        if t_p == 0 || !t_p.is_multiple_of(factor) {
            return Err(ArchError::Horizon { t_p, factor, levels: self.channels.len() });
        }
        Ok(())
    }
}

/// Name, shape and offset of one parameter array in the flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
struct Layout {
    entries: Vec<ParamEntry>,
    len: usize,
    /// `(offset, len, fan_in)` of arrays drawn uniformly at init; others
    /// keep their fixed initial value.
    random: Vec<(usize, usize, usize)>,
    ones: Vec<(usize, usize)>,
}

impl Layout {
    fn alloc(&mut self, name: &str, shape: &[usize]) -> usize {
        let offset = self.len;
        let entry = ParamEntry { name: name.to_string(), shape: shape.to_vec(), offset };
        self.len += entry.len();
        self.entries.push(entry);
        offset
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> ConvSpec {
        let w = self.alloc(&format!("{name}.weight"), &[cout, cin, k]);
        let b = self.alloc(&format!("{name}.bias"), &[cout]);
        self.random.push((w, cout * cin * k, cin * k));
        self.random.push((b, cout, cin * k));
        ConvSpec { w, b, cin, cout, k, stride, pad: k / 2 }
    }

    fn norm(&mut self, name: &str, c: usize, groups: usize) -> NormSpec {
        let gamma = self.alloc(&format!("{name}.weight"), &[c]);
        let beta = self.alloc(&format!("{name}.bias"), &[c]);
        self.ones.push((gamma, c));
        NormSpec { gamma, beta, c, groups }
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, a: &ArchConfig) -> Block {
        Block {
            conv: self.conv(&format!("{name}.conv"), cin, cout, a.kernel, 1),
            norm: self.norm(&format!("{name}.norm"), cout, a.groups),
        }
    }

    fn res(&mut self, name: &str, cin: usize, cout: usize, cond: usize, a: &ArchConfig) -> ResBlock {
        ResBlock {
            b1: self.block(&format!("{name}.block0"), cin, cout, a),
            b2: self.block(&format!("{name}.block1"), cout, cout, a),
            film: self.conv(&format!("{name}.cond"), cond, 2 * cout, 1, 1),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.residual"), cin, cout, 1, 1)),
        }
    }
}

/// Convolution, group norm, Mish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    conv: ConvSpec,
    norm: NormSpec,
}

impl Block {
    fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = tape.conv(x, self.conv);
        let h = tape.group_norm(h, self.norm);
        tape.mish(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ResBlock {
    b1: Block,
    b2: Block,
    film: ConvSpec,
    skip: Option<ConvSpec>,
}

impl ResBlock {
    /// `cond` is the already Mish-activated conditioning vector.
    fn forward(&self, tape: &mut Tape, x: Var, cond: Var) -> Var {
        let h = self.b1.forward(tape, x);
        let f = tape.conv(cond, self.film);
        let h = tape.film(h, f);
        let h = self.b2.forward(tape, h);
        let r = match self.skip {
            Some(s) => tape.conv(x, s),
            None => x,
        };
        tape.add(h, r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Level {
    res: [ResBlock; 2],
    /// Down- or upsampling convolution after the blocks.
    resample: Option<ConvSpec>,
}

/// The denoiser's structure; weights are held separately in a flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    pub arch: ArchConfig,
    pub obs_dim: usize,
    pub t_p: usize,
    pub entries: Vec<ParamEntry>,
    pub n_params: usize,
    time_mlp: [ConvSpec; 2],
    down: Vec<Level>,
    mid: [ResBlock; 2],
    up: Vec<Level>,
    head: Block,
    out: ConvSpec,
    init_random: Vec<(usize, usize, usize)>,
    init_ones: Vec<(usize, usize)>,
}

/// Sinusoidal embedding of the diffusion step.
pub fn timestep_embedding(k: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let scale = log(10_000.0) / (half - 1) as f64;
    let mut e = Vec::with_capacity(dim);
    for i in 0..half {
        e.push(sin(k * exp(-scale * i as f64)));
    }
    for i in 0..half {
        e.push(cos(k * exp(-scale * i as f64)));
    }
    e
}

impl UNet {
    pub fn new(arch: ArchConfig, obs_dim: usize, t_p: usize) -> Result<Self, ArchError> {
        arch.validate(t_p)?;
        let mut l = Layout::default();
        let d = arch.time_dim;
        let time_mlp = [l.conv("time_mlp.0", d, 4 * d, 1, 1), l.conv("time_mlp.2", 4 * d, d, 1, 1)];
        let cond = d + obs_dim;
        let ch = &arch.channels;
        let n = ch.len();
        let mut down = Vec::new();
        let mut cin = ACTION_DIM;
        for (i, &c) in ch.iter().enumerate() {
            let res = [l.res(&format!("down.{i}.0"), cin, c, cond, &arch), l.res(&format!("down.{i}.1"), c, c, cond, &arch)];
            let resample = (i + 1 < n).then(|| {
                let mut s = l.conv(&format!("down.{i}.down"), c, c, 3, 2);
                s.pad = 1;
                s
            });
            down.push(Level { res, resample });
            cin = c;
        }
        let last = ch[n - 1];
        let mid = [l.res("mid.0", last, last, cond, &arch), l.res("mid.1", last, last, cond, &arch)];
        let mut up = Vec::new();
        for i in (0..n - 1).rev() {
            let (c_out, c_in) = (ch[i], ch[i + 1]);
            let res = [
                l.res(&format!("up.{i}.0"), 2 * c_in, c_out, cond, &arch),
                l.res(&format!("up.{i}.1"), c_out, c_out, cond, &arch),
            ];
            let mut s = l.conv(&format!("up.{i}.up"), c_out, c_out, 3, 1);
            s.pad = 1;
            up.push(Level { res, resample: Some(s) });
        }
        let head = l.block("final.0", ch[0], ch[0], &arch);
        let out = l.conv("final.1", ch[0], ACTION_DIM, 1, 1);
        Ok(Self {
            arch,
            obs_dim,
            t_p,
            entries: l.entries,
            n_params: l.len,
            time_mlp,
            down,
            mid,
            up,
            head,
            out,
            init_random: l.random,
            init_ones: l.ones,
        })
    }

    /// Uniform(±1/√fan_in) weights and biases, unit norm gains.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = alloc::vec![0.0; self.n_params];
        for &(off, len, fan_in) in &self.init_random {
            let bound = 1.0 / sqrt(fan_in as f64);
            for v in &mut p[off..off + len] {
                *v = rng.random_range(-bound..bound);
            }
        }
        for &(off, len) in &self.init_ones {
            p[off..off + len].fill(1.0);
        }
        p
    }

    /// The final 1×1 projection to action channels.
    pub fn output_layer(&self) -> ConvSpec {
        self.out
    }

    /// Records the forward pass: `actions` is `[9][B][t_p]`, `obs` is
    /// `[obs_dim][B][1]`, one diffusion step per batch element.
    pub fn forward(&self, tape: &mut Tape, actions: Var, obs: Var, steps: &[f64]) -> Var {
        let x = self.features(tape, actions, obs, steps);
        tape.conv(x, self.out)
    }

    /// Everything up to the output projection: `[channels[0]][B][t_p]`.
    pub fn features(&self, tape: &mut Tape, actions: Var, obs: Var, steps: &[f64]) -> Var {
        let (b, t) = {
            let a = tape.value(actions);
            (a.b, a.t)
        };
        assert_eq!(t, self.t_p, "action horizon");
        assert_eq!(steps.len(), b, "one step per batch element");
        assert_eq!(tape.value(obs).shape(), [self.obs_dim, b, 1], "observation shape");
        let embs: Vec<Vec<f64>> = steps.iter().map(|&k| timestep_embedding(k, self.arch.time_dim)).collect();
        let cols: Vec<&[f64]> = embs.iter().map(|e| &e[..]).collect();
        let temb = tape.leaf(Tensor::from_columns(&cols));
        let h = tape.conv(temb, self.time_mlp[0]);
        let h = tape.mish(h);
        let time_feat = tape.conv(h, self.time_mlp[1]);
        let cond = tape.concat(time_feat, obs);
        let cond = tape.mish(cond);

        let mut x = actions;
        let mut skips = Vec::new();
        for level in &self.down {
            x = level.res[0].forward(tape, x, cond);
            x = level.res[1].forward(tape, x, cond);
            skips.push(x);
            if let Some(s) = level.resample {
                x = tape.conv(x, s);
            }
        }
        for r in &self.mid {
            x = r.forward(tape, x, cond);
        }
        for level in &self.up {
            let skip = skips.pop().expect("one skip per level");
            x = tape.concat(x, skip);
            x = level.res[0].forward(tape, x, cond);
            x = level.res[1].forward(tape, x, cond);
            if let Some(s) = level.resample {
                x = tape.upsample(x);
                x = tape.conv(x, s);
            }
        }
        self.head.forward(tape, x)
    }

    /// Noise prediction without keeping the tape.
    pub fn predict(&self, params: &[f64], actions: Tensor, obs: Tensor, steps: &[f64]) -> Tensor {
        let mut tape = Tape::new(params);
        let a = tape.leaf(actions);
        let o = tape.leaf(obs);
        let y = self.forward(&mut tape, a, o, steps);
        tape.value(y).clone()
    }
}
