use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{AutodiffError, Bound, ParamId, ParameterSet, Tape, Tensor, Var};
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Softplus => tape.softplus(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    /// Complex visibilities -> dense -> U-Net.
    A,
    /// Amplitudes and closure phases -> phase MLP -> recombined
    /// visibilities -> dense -> U-Net.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub image_size: usize,
    /// Channels after the stem; doubled at each down-sampling stage.
    pub base_width: usize,
    /// Number of down-sampling (and up-sampling) stages.
    pub depth: usize,
    pub activation: Activation,
    /// Width of the two hidden layers of decoder B's phase network.
    pub phase_hidden: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            base_width: 16,
            depth: 4,
            activation: Activation::Relu,
            phase_hidden: 256,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

/// Parameter handles and wiring of one decoder; the values live in a
/// shared [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct Decoder {
    kind: DecoderKind,
    config: DecoderConfig,
    input_len: usize,
    n_vis: usize,
    phase: Vec<Layer>,
    dense: Layer,
    stem: Layer,
    downs: Vec<Layer>,
    ups: Vec<Layer>,
    head: Layer,
}

fn random_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}

impl Decoder {
    /// Registers freshly initialized parameters named `{prefix}...`.
    ///
    /// For decoder A, `input_len` is the packed complex vector length. For
    /// decoder B, the input is `n_vis` amplitudes followed by the closure
    /// encodings, `input_len` in total.
    pub fn new<R: Rng + ?Sized>(
        kind: DecoderKind,
        config: DecoderConfig,
        input_len: usize,
        n_vis: usize,
        params: &mut ParameterSet,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        let g = config.image_size;
        if config.depth == 0 || config.base_width == 0 || g % (1 << config.depth) != 0 {
            return Err(AutodiffError::InvalidArgument {
                op: "decoder",
                reason: "image size must be divisible by 2^depth with depth, width >= 1",
            });
        }
        if kind == DecoderKind::B && (n_vis == 0 || n_vis > input_len) {
            return Err(AutodiffError::InvalidArgument {
                op: "decoder",
                reason: "amplitude count must be between 1 and the input length",
            });
        }
        let mut layer = |params: &mut ParameterSet, name: &str, wshape: &[usize], fan_in: usize, gain: f64, bias: usize| {
            let w = params.insert(
                &format!("{prefix}{name}.w"),
                random_tensor(rng, wshape, gain / sqrt(fan_in.max(1) as f64)),
            )?;
            let bshape: Vec<usize> = if wshape.len() == 4 { [bias, 1, 1].into() } else { [bias].into() };
            let b = params.insert(&format!("{prefix}{name}.b"), Tensor::zeros(&bshape))?;
            Ok::<_, AutodiffError>(Layer { w, b })
        };
        let act_gain = if config.activation == Activation::Relu {
            sqrt(2.0)
        } else {
            1.0
        };
        let mut phase = Vec::new();
        let mut dense_in = input_len;
        if kind == DecoderKind::B {
            let h = config.phase_hidden;
            phase.push(layer(params, "phase0", &[input_len, h], input_len, act_gain, h)?);
            phase.push(layer(params, "phase1", &[h, h], h, act_gain, h)?);
            phase.push(layer(params, "phase2", &[h, n_vis], h, 1.0, n_vis)?);
            dense_in = 2 * n_vis;
        }
        let dense = layer(params, "dense", &[dense_in, g * g], dense_in, 1.0, g * g)?;
        let c = config.base_width;
        let stem = layer(params, "stem", &[c, 1, 3, 3], 9, act_gain, c)?;
        let mut downs = Vec::new();
        for d in 1..=config.depth {
            let (ci, co) = (c << (d - 1), c << d);
            downs.push(layer(params, &format!("down{d}"), &[co, ci, 3, 3], 9 * ci, act_gain, co)?);
        }
        let mut ups = Vec::new();
        for d in (1..=config.depth).rev() {
            let (ci, co) = ((c << d) + (c << (d - 1)), c << (d - 1));
            ups.push(layer(params, &format!("up{d}"), &[co, ci, 3, 3], 9 * ci, act_gain, co)?);
        }
        let head = layer(params, "head", &[1, c, 1, 1], c, 1.0, 1)?;
        Ok(Self {
            kind,
            config,
            input_len,
            n_vis,
            phase,
            dense,
            stem,
            downs,
            ups,
            head,
        })
    }

    pub fn kind(&self) -> DecoderKind {
        self.kind
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    fn affine(&self, tape: &mut Tape, bound: &Bound, x: Var, l: Layer) -> Result<Var, AutodiffError> {
        let y = tape.matmul(x, bound.var(l.w))?;
        tape.add(y, bound.var(l.b))
    }

    fn conv(&self, tape: &mut Tape, bound: &Bound, x: Var, l: Layer, stride: usize) -> Result<Var, AutodiffError> {
        let y = tape.conv2d(x, bound.var(l.w), stride)?;
        tape.add(y, bound.var(l.b))
    }

    /// Phase estimates `[B, n_vis]` of decoder B.
    pub fn phases(&self, tape: &mut Tape, bound: &Bound, input: Var) -> Result<Var, AutodiffError> {
        let act = self.config.activation;
        let mut h = input;
        for (i, l) in self.phase.iter().enumerate() {
            h = self.affine(tape, bound, h, *l)?;
            if i + 1 < self.phase.len() {
                h = act.apply(tape, h);
            }
        }
        Ok(h)
    }

    /// Maps a batch of packed measurement vectors `[B, L]` to images
    /// `[B, size*size]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: Var) -> Result<Var, AutodiffError> {
        let shape = tape.shape(input).to_vec();
        if shape.len() != 2 || shape[1] != self.input_len {
            return Err(AutodiffError::ShapeMismatch {
                op: "decoder",
                lhs: shape,
                rhs: [0, self.input_len].into(),
            });
        }
        let b = shape[0];
        let g = self.config.image_size;
        let act = self.config.activation;
        let mut x = input;
        if self.kind == DecoderKind::B {
            let phi = self.phases(tape, bound, input)?;
            let amps = tape.slice(input, 1, 0, self.n_vis)?;
            let c = tape.cos(phi);
            let s = tape.sin(phi);
            let re = tape.mul(amps, c)?;
            let im = tape.mul(amps, s)?;
            let re = tape.reshape(re, &[b, self.n_vis, 1])?;
            let im = tape.reshape(im, &[b, self.n_vis, 1])?;
            let both = tape.concat(&[re, im], 2)?;
            x = tape.reshape(both, &[b, 2 * self.n_vis])?;
        }
        let grid = self.affine(tape, bound, x, self.dense)?;
        let grid = tape.reshape(grid, &[b, 1, g, g])?;
        let h = self.conv(tape, bound, grid, self.stem, 1)?;
        let mut h = act.apply(tape, h);
        let mut skips = Vec::with_capacity(self.downs.len());
        for l in &self.downs {
            skips.push(h);
            let y = self.conv(tape, bound, h, *l, 2)?;
            h = act.apply(tape, y);
        }
        for l in &self.ups {
            let u = tape.upsample2x(h)?;
            let skip = skips.pop().expect("one skip per stage");
            let cat = tape.concat(&[u, skip], 1)?;
            let y = self.conv(tape, bound, cat, *l, 1)?;
            h = act.apply(tape, y);
        }
        let y = self.conv(tape, bound, h, self.head, 1)?;
        let y = tape.softplus(y);
        // softplus(0) * 1/g^2 per pixel puts the untrained total flux near 0.7
        let y = tape.scale(y, 1.0 / (g * g) as f64);
        tape.reshape(y, &[b, g * g])
    }

    /// Forward pass on plain data; returns one image per input row.
    pub fn decode(&self, params: &ParameterSet, inputs: &[f64]) -> Result<Vec<Vec<f64>>, AutodiffError> {
        if self.input_len == 0 || inputs.len() % self.input_len != 0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "decoder",
                lhs: [inputs.len()].into(),
                rhs: [self.input_len].into(),
            });
        }
        let b = inputs.len() / self.input_len;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(Tensor::from_vec(&[b, self.input_len], inputs.to_vec())?);
        let y = self.forward(&mut tape, &bound, x)?;
        let p = self.config.image_size * self.config.image_size;
        Ok(tape.value(y).data().chunks(p).map(|c| c.to_vec()).collect())
    }
}
