//! Convolutional network with iteration-recurrent hidden states.
//!
//! Each recurrent layer computes
//! `h_l = leaky(conv_in(a_{l-1}) + conv_hh(h_l^{prev}) + b_l)` and passes it
//! both to the next layer and to its own next call. A linear convolution maps
//! the last activation to two output channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv_accumulate, conv_backward_input, conv_backward_weight, ConvGeom, ConvPlan, FeatureMap, Padding};
use crate::error::{Error, Result};

pub const LEAK: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub hidden: usize,
    /// Number of recurrent layers; zero leaves only the output convolution.
    pub layers: usize,
    pub kernel: [usize; 3],
    /// One entry per recurrent layer.
    pub dilations: Vec<[usize; 3]>,
    pub padding: [Padding; 3],
    pub out_kernel: [usize; 3],
}

impl NetConfig {
    /// x-f net: grid `[f, y, x]` with `y` as batch (no mixing across rows).
    pub fn xf(hidden: usize) -> Self {
        NetConfig {
            hidden,
            layers: 2,
            kernel: [3, 1, 3],
            dilations: vec![[1, 1, 1]; 2],
            padding: [Padding::Circular, Padding::Zero, Padding::Zero],
            out_kernel: [3, 1, 3],
        }
    }

    /// x-t net: 3-frame temporal neighbourhood (circular in `t`) in the
    /// recurrent layers, per-frame spatial output layer.
    pub fn xt(hidden: usize) -> Self {
        NetConfig {
            hidden,
            layers: 2,
            kernel: [3, 3, 3],
            dilations: vec![[1, 1, 1]; 2],
            padding: [Padding::Circular, Padding::Zero, Padding::Zero],
            out_kernel: [1, 3, 3],
        }
    }

    /// Full-size layer count and width: 4 recurrent layers of 64 channels.
    pub fn full_scale(mut base: NetConfig) -> Self {
        base.hidden = 64;
        base.layers = 4;
        base.dilations = vec![[1, 1, 1]; 4];
        base
    }

    /// Single 1x1x1 linear layer; with identity weights it passes input through.
    pub fn passthrough() -> Self {
        NetConfig {
            hidden: 0,
            layers: 0,
            kernel: [1, 1, 1],
            dilations: Vec::new(),
            padding: [Padding::Zero; 3],
            out_kernel: [1, 1, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilations.len() != self.layers {
            return Err(Error::param(format!(
                "{} dilations for {} layers",
                self.dilations.len(),
                self.layers
            )));
        }
        if self.layers > 0 && self.hidden == 0 {
            return Err(Error::param("recurrent layers need hidden >= 1"));
        }
        for d in &self.dilations {
            self.geom(*d).validate()?;
        }
        self.out_geom().validate()
    }

    fn geom(&self, dilation: [usize; 3]) -> ConvGeom {
        ConvGeom {
            kernel: self.kernel,
            dilation,
            padding: self.padding,
        }
    }

    fn out_geom(&self) -> ConvGeom {
        ConvGeom {
            kernel: self.out_kernel,
            dilation: [1, 1, 1],
            padding: self.padding,
        }
    }
}

/// One convolution's place in the flat parameter vector.
#[derive(Debug, Clone)]
struct Slot {
    c_in: usize,
    c_out: usize,
    geom: ConvGeom,
    w: usize,
    bias: Option<usize>,
}

impl Slot {
    fn n_weights(&self) -> usize {
        self.c_in * self.c_out * self.geom.taps()
    }

    fn weights<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.w..self.w + self.n_weights()]
    }

    fn fan_in(&self) -> usize {
        self.c_in * self.geom.taps()
    }
}

#[derive(Debug, Clone)]
struct Layer {
    input: Slot,
    hidden: Slot,
}

#[derive(Debug, Clone)]
pub struct ConvRecNet {
    config: NetConfig,
    theta: Vec<f64>,
    layers: Vec<Layer>,
    out: Slot,
}

/// Hidden state of every recurrent layer after one call.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub layers: Vec<FeatureMap>,
}

/// Activations recorded by a forward call, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct NetTape {
    grid: [usize; 3],
    input: FeatureMap,
    h_prev: Option<HiddenState>,
    pre: Vec<FeatureMap>,
    acts: Vec<FeatureMap>,
}

/// Gradients from one backward call.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub theta: Vec<f64>,
    pub input: FeatureMap,
    /// Gradient with respect to the incoming hidden state, if there was one.
    pub hidden: Option<HiddenState>,
}

fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAK * z
    }
}

fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAK
    }
}

impl ConvRecNet {
    fn layout(config: &NetConfig) -> (Vec<Layer>, Slot, usize) {
        let mut next = 0;
        let mut slot = |c_in: usize, c_out: usize, geom: ConvGeom, bias: bool| {
            let w = next;
            next += c_in * c_out * geom.taps();
            let b = bias.then(|| {
                let b = next;
                next += c_out;
                b
            });
            Slot { c_in, c_out, geom, w, bias: b }
        };
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let c_in = if l == 0 { 2 } else { config.hidden };
            let geom = config.geom(config.dilations[l]);
            let input = slot(c_in, config.hidden, geom, true);
            let hidden = slot(config.hidden, config.hidden, geom, false);
            layers.push(Layer { input, hidden });
        }
        let c_last = if config.layers == 0 { 2 } else { config.hidden };
        let out = slot(c_last, 2, config.out_geom(), true);
        (layers, out, next)
    }

    /// All parameters zero: the output is zero for any input.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let (layers, out, n) = Self::layout(&config);
        Ok(ConvRecNet {
            config,
            theta: vec![0.0; n],
            layers,
            out,
        })
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots: Vec<Slot> = net
            .layers
            .iter()
            .flat_map(|l| [l.input.clone(), l.hidden.clone()])
            .chain(std::iter::once(net.out.clone()))
            .collect();
        for s in slots {
            let bound = 1.0 / (s.fan_in() as f64).sqrt();
            for w in &mut net.theta[s.w..s.w + s.n_weights()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// The passthrough configuration with identity weights: `y = x`.
    pub fn identity() -> Self {
        let mut net = Self::zeros(NetConfig::passthrough()).expect("passthrough config is valid");
        let w = net.out.w;
        // Weight layout [out][in]: diagonal entries 0 and 3.
        net.theta[w] = 1.0;
        net.theta[w + 3] = 1.0;
        net
    }

    pub fn from_params(config: NetConfig, theta: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if theta.len() != net.theta.len() {
            return Err(Error::param(format!(
                "expected {} parameters, got {}",
                net.theta.len(),
                theta.len()
            )));
        }
        net.theta = theta;
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    /// Zero hidden state for a given grid.
    pub fn zero_hidden(&self, grid: [usize; 3]) -> HiddenState {
        HiddenState {
            layers: (0..self.config.layers).map(|_| FeatureMap::zeros(self.config.hidden, grid)).collect(),
        }
    }

    fn check_hidden(&self, h: &HiddenState, grid: [usize; 3]) -> Result<()> {
        if h.layers.len() != self.config.layers
            || h.layers.iter().any(|m| m.grid != grid || m.channels != self.config.hidden)
        {
            return Err(Error::shape(format!(
                "hidden state does not match {} layers of {} channels on {grid:?}",
                self.config.layers, self.config.hidden
            )));
        }
        Ok(())
    }

    fn conv(&self, slot: &Slot, plan: &ConvPlan, x: &FeatureMap, out: &mut FeatureMap) {
        conv_accumulate(plan, slot.weights(&self.theta), slot.c_in, slot.c_out, x, out);
    }

    fn add_bias(&self, slot: &Slot, out: &mut FeatureMap) {
        if let Some(b) = slot.bias {
            let plane = out.plane();
            for o in 0..slot.c_out {
                let bo = self.theta[b + o];
                out.data[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bo);
            }
        }
    }

    /// Run the net on a two-channel input. A missing `h_prev` is treated as
    /// zero. With `record` set the returned tape supports `backward`.
    pub fn forward(
        &self,
        x: &FeatureMap,
        h_prev: Option<&HiddenState>,
        record: bool,
    ) -> Result<(FeatureMap, HiddenState, Option<NetTape>)> {
        if x.channels != 2 {
            return Err(Error::shape(format!("network input needs 2 channels, got {}", x.channels)));
        }
        let grid = x.grid;
        if let Some(h) = h_prev {
            self.check_hidden(h, grid)?;
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<FeatureMap> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let plan = ConvPlan::new(&layer.input.geom, grid);
            let mut z = FeatureMap::zeros(self.config.hidden, grid);
            self.add_bias(&layer.input, &mut z);
            let a_prev = if l == 0 { x } else { &acts[l - 1] };
            self.conv(&layer.input, &plan, a_prev, &mut z);
            if let Some(h) = h_prev {
                self.conv(&layer.hidden, &plan, &h.layers[l], &mut z);
            }
            let mut a = z.clone();
            a.data.iter_mut().for_each(|v| *v = leaky(*v));
            pre.push(z);
            acts.push(a);
        }
        let last = acts.last().unwrap_or(x);
        let mut y = FeatureMap::zeros(2, grid);
        self.add_bias(&self.out, &mut y);
        self.conv(&self.out, &ConvPlan::new(&self.out.geom, grid), last, &mut y);
        let h_next = HiddenState { layers: acts.clone() };
        let tape = record.then(|| NetTape {
            grid,
            input: x.clone(),
            h_prev: h_prev.cloned(),
            pre,
            acts,
        });
        Ok((y, h_next, tape))
    }

    /// Reverse pass for one forward call. `dh_next` is the gradient flowing
    /// into the hidden state this call produced (from later calls).
    /// Parameter gradients are accumulated into `g_theta`.
    pub fn backward_into(
        &self,
        tape: &NetTape,
        dy: &FeatureMap,
        dh_next: Option<&HiddenState>,
        g_theta: &mut [f64],
    ) -> Result<(FeatureMap, Option<HiddenState>)> {
        let grid = tape.grid;
        if dy.channels != 2 || dy.grid != grid {
            return Err(Error::shape("output gradient does not match the recorded forward"));
        }
        if g_theta.len() != self.theta.len() {
            return Err(Error::shape("parameter gradient buffer has the wrong length"));
        }
        if tape.pre.len() != self.layers.len() {
            return Err(Error::shape("tape was recorded by a different network"));
        }
        if let Some(h) = dh_next {
            self.check_hidden(h, grid)?;
        }
        let out_plan = ConvPlan::new(&self.out.geom, grid);
        let last = tape.acts.last().unwrap_or(&tape.input);
        self.slot_param_grads(&self.out, &out_plan, last, dy, g_theta);
        let mut g_a = FeatureMap::zeros(self.out.c_in, grid);
        conv_backward_input(&out_plan, self.out.weights(&self.theta), self.out.c_in, 2, dy, &mut g_a);

        let mut g_h_prev = tape.h_prev.as_ref().map(|_| self.zero_hidden(grid));
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if let Some(dh) = dh_next {
                g_a.add_assign(&dh.layers[l]);
            }
            let mut g_z = g_a;
            for (g, z) in g_z.data.iter_mut().zip(&tape.pre[l].data) {
                *g *= leaky_grad(*z);
            }
            let plan = ConvPlan::new(&layer.input.geom, grid);
            let a_prev = if l == 0 { &tape.input } else { &tape.acts[l - 1] };
            self.slot_param_grads(&layer.input, &plan, a_prev, &g_z, g_theta);
            if let (Some(h), Some(gh)) = (&tape.h_prev, g_h_prev.as_mut()) {
                self.slot_param_grads(&layer.hidden, &plan, &h.layers[l], &g_z, g_theta);
                conv_backward_input(&plan, layer.hidden.weights(&self.theta), layer.hidden.c_in, layer.hidden.c_out, &g_z, &mut gh.layers[l]);
            }
            let mut g_prev = FeatureMap::zeros(layer.input.c_in, grid);
            conv_backward_input(&plan, layer.input.weights(&self.theta), layer.input.c_in, layer.input.c_out, &g_z, &mut g_prev);
            g_a = g_prev;
        }
        Ok((g_a, g_h_prev))
    }

    pub fn backward(&self, tape: &NetTape, dy: &FeatureMap, dh_next: Option<&HiddenState>) -> Result<NetGrads> {
        let mut theta = vec![0.0; self.theta.len()];
        let (input, hidden) = self.backward_into(tape, dy, dh_next, &mut theta)?;
        Ok(NetGrads { theta, input, hidden })
    }

    fn slot_param_grads(&self, slot: &Slot, plan: &ConvPlan, x: &FeatureMap, g_out: &FeatureMap, g_theta: &mut [f64]) {
        let n = slot.n_weights();
        conv_backward_weight(plan, slot.c_in, slot.c_out, x, g_out, &mut g_theta[slot.w..slot.w + n]);
        if let Some(b) = slot.bias {
            let plane = g_out.plane();
            for o in 0..slot.c_out {
                g_theta[b + o] += g_out.data[o * plane..(o + 1) * plane].iter().sum::<f64>();
            }
        }
    }

    /// Human-readable layer list, one line per convolution.
    pub fn manifest(&self) -> Vec<String> {
        let describe = |name: String, s: &Slot| {
            format!(
                "{name} in={} out={} kernel={:?} dilation={:?} weights@{} bias@{}",
                s.c_in,
                s.c_out,
                s.geom.kernel,
                s.geom.dilation,
                s.w,
                s.bias.map_or("-".to_string(), |b| b.to_string())
            )
        };
        let mut lines = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            lines.push(describe(format!("rec{l}.input"), &layer.input));
            lines.push(describe(format!("rec{l}.hidden"), &layer.hidden));
        }
        lines.push(describe("output".into(), &self.out));
        lines
    }
}
