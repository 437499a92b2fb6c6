use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ops, ConvGeometry, Real, Tape, Tensor, Var};
use crate::rng::{self, tag};

use super::config::{block_name, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvSlot {
    pub kernel: usize,
    pub bias: usize,
    pub geom: ConvGeometry,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockSlots {
    pub input_width: usize,
    /// Convolution and the slope of the PReLU that follows it.
    pub layers: Vec<(ConvSlot, usize)>,
    /// Slopes of the PReLU after each concat stage, one per layer after the first.
    pub concat_slopes: Vec<usize>,
}

/// Parameter addresses of every layer, in graph order.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub lowlevel: ConvSlot,
    pub lowlevel_slope: usize,
    pub blocks: Vec<BlockSlots>,
    pub bottleneck: ConvSlot,
    pub reconstruction: ConvSlot,
    pub shapes: Vec<Vec<usize>>,
    pub names: Vec<String>,
    /// `(kernel extent, dilation)` of every convolution on the deepest path.
    pub chain: Vec<(usize, usize)>,
}

struct LayoutBuilder {
    shapes: Vec<Vec<usize>>,
    names: Vec<String>,
    chain: Vec<(usize, usize)>,
}

impl LayoutBuilder {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, dilation: usize) -> ConvSlot {
        self.shapes.push(vec![cout, cin, k, k]);
        self.names.push(format!("{name}.weight"));
        self.shapes.push(vec![cout]);
        self.names.push(format!("{name}.bias"));
        self.chain.push((k, dilation));
        ConvSlot {
            kernel: self.shapes.len() - 2,
            bias: self.shapes.len() - 1,
            geom: ConvGeometry::same(k, dilation),
        }
    }

    fn slope(&mut self, name: &str, c: usize) -> usize {
        self.shapes.push(vec![c]);
        self.names.push(format!("{name}.slope"));
        self.shapes.len() - 1
    }
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut lb = LayoutBuilder {
            shapes: Vec::new(),
            names: Vec::new(),
            chain: Vec::new(),
        };
        let low = config.lowlevel_channels;
        let lowlevel = lb.conv("lowlevel", 1, low, 3, 1);
        let lowlevel_slope = lb.slope("lowlevel", low);

        let mut blocks = Vec::new();
        for (b, (block, input_width)) in config.blocks.iter().zip(config.block_inputs()).enumerate() {
            let bname = block_name(b);
            let mut layers = Vec::new();
            let mut concat_slopes = Vec::new();
            for (i, &d) in block.layer_dilations.iter().enumerate() {
                let name = format!("{bname}.conv{}", i + 1);
                let conv = lb.conv(&name, block.layer_input(input_width, i), block.growth, block.kernel, d);
                let slope = lb.slope(&name, block.growth);
                layers.push((conv, slope));
                if i > 0 {
                    concat_slopes.push(lb.slope(&format!("{bname}.concat{}", i + 1), (i + 1) * block.growth));
                }
            }
            blocks.push(BlockSlots {
                input_width,
                layers,
                concat_slopes,
            });
        }

        let widest = *config.inter_block_concats().last().expect("three blocks");
        let bottleneck = lb.conv("bottleneck", widest, config.bottleneck_channels, 1, 1);
        let reconstruction = lb.conv("reconstruction", config.bottleneck_channels, 1, 3, 1);
        Ok(Layout {
            lowlevel,
            lowlevel_slope,
            blocks,
            bottleneck,
            reconstruction,
            shapes: lb.shapes,
            names: lb.names,
            chain: lb.chain,
        })
    }

    fn kernel_slots(&self) -> impl Iterator<Item = ConvSlot> + '_ {
        std::iter::once(self.lowlevel)
            .chain(self.blocks.iter().flat_map(|b| b.layers.iter().map(|l| l.0)))
            .chain([self.bottleneck, self.reconstruction])
    }
}

/// Evaluation backend for the shared forward definition.
trait Exec<T: Real> {
    type V: Clone;
    fn conv(&mut self, x: &Self::V, slot: ConvSlot) -> Result<Self::V>;
    fn prelu(&mut self, x: &Self::V, slope: usize) -> Result<Self::V>;
    fn concat(&mut self, parts: &[Self::V]) -> Result<Self::V>;
}

struct Eager<'a, T> {
    params: &'a [Tensor<T>],
}

impl<T: Real> Exec<T> for Eager<'_, T> {
    type V = Rc<Tensor<T>>;

    fn conv(&mut self, x: &Self::V, s: ConvSlot) -> Result<Self::V> {
        Ok(Rc::new(ops::conv2d(x, &self.params[s.kernel], &self.params[s.bias], s.geom)?))
    }

    fn prelu(&mut self, x: &Self::V, slope: usize) -> Result<Self::V> {
        Ok(Rc::new(ops::prelu(x, &self.params[slope])?))
    }

    fn concat(&mut self, parts: &[Self::V]) -> Result<Self::V> {
        let refs: Vec<&Tensor<T>> = parts.iter().map(|p| p.as_ref()).collect();
        Ok(Rc::new(ops::concat_channels(&refs)?))
    }
}

struct Recorded<'a, T> {
    tape: &'a mut Tape<T>,
    params: &'a [Var],
}

impl<T: Real> Exec<T> for Recorded<'_, T> {
    type V = Var;

    fn conv(&mut self, x: &Var, s: ConvSlot) -> Result<Var> {
        self.tape.conv2d(*x, self.params[s.kernel], self.params[s.bias], s.geom)
    }

    fn prelu(&mut self, x: &Var, slope: usize) -> Result<Var> {
        self.tape.prelu(*x, self.params[slope])
    }

    fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.tape.concat_channels(parts)
    }
}

fn run_block<T: Real, E: Exec<T>>(ex: &mut E, slots: &BlockSlots, input: E::V) -> Result<E::V> {
    let mut outputs: Vec<E::V> = Vec::with_capacity(slots.layers.len());
    let mut current = input;
    for (i, &(conv, slope)) in slots.layers.iter().enumerate() {
        let y = ex.conv(&current, conv)?;
        outputs.push(ex.prelu(&y, slope)?);
        current = if i == 0 {
            outputs[0].clone()
        } else {
            let cat = ex.concat(&outputs)?;
            ex.prelu(&cat, slots.concat_slopes[i - 1])?
        };
    }
    Ok(current)
}

fn run_model<T: Real, E: Exec<T>>(ex: &mut E, layout: &Layout, input: E::V) -> Result<E::V> {
    let low = ex.conv(&input, layout.lowlevel)?;
    let mut trunk = ex.prelu(&low, layout.lowlevel_slope)?;
    for slots in &layout.blocks {
        let out = run_block(ex, slots, trunk.clone())?;
        trunk = ex.concat(&[trunk, out])?;
    }
    let squeezed = ex.conv(&trunk, layout.bottleneck)?;
    ex.conv(&squeezed, layout.reconstruction)
}

/// One-side extent of the receptive field of a chain of convolutions given
/// as `(kernel extent, dilation)` pairs.
pub fn stacked_extent(layers: &[(usize, usize)]) -> usize {
    1 + layers.iter().map(|&(k, d)| d * (k - 1)).sum::<usize>()
}

/// The despeckling network: parameters plus the static layer graph.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<Tensor<T>>,
}

/// Builds a freshly initialized single-precision network.
pub fn build_bdss(config: ModelConfig, seed: u64) -> Result<Model<f32>> {
    Model::build(config, seed)
}

impl<T: Real> Model<T> {
    /// Kernels are uniform in `±sqrt(6 / fan_in)`, biases zero and PReLU
    /// slopes 0.25. Each tensor draws from its own substream.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        let layout = Layout::new(&config)?;
        let mut params: Vec<Tensor<T>> = layout
            .names
            .iter()
            .zip(&layout.shapes)
            .map(|(name, shape)| {
                if name.ends_with(".slope") {
                    Tensor::full(shape, T::of(0.25))
                } else {
                    Tensor::zeros(shape)
                }
            })
            .collect();
        for slot in layout.kernel_slots() {
            let t = &mut params[slot.kernel];
            let s = t.shape();
            let bound = (6.0 / (s[1] * s[2] * s[3]) as f64).sqrt();
            let mut r = rng::substream(seed, tag::INIT, &[slot.kernel as u64]);
            for v in t.data_mut() {
                *v = T::of(r.random_range(-bound..bound));
            }
        }
        Ok(Model { config, layout, params })
    }

    /// Assembles a model from explicit parameters in graph order.
    pub fn from_params(config: ModelConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        let layout = Layout::new(&config)?;
        if params.len() != layout.shapes.len() {
            return Err(Error::config(format!(
                "expected {} parameter tensors, got {}",
                layout.shapes.len(),
                params.len()
            )));
        }
        for ((p, shape), name) in params.iter().zip(&layout.shapes).zip(&layout.names) {
            if p.shape() != shape.as_slice() {
                return Err(Error::config(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    p.shape()
                )));
            }
            p.validate_finite().map_err(|e| Error::NonFinite(format!("parameter `{name}`: {e}")))?;
        }
        Ok(Model { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.layout.names
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Looks up a parameter tensor by name, e.g. `"reconstruction.bias"`.
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.layout.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.layout.names.iter().position(|n| n == name).map(|i| &mut self.params[i])
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }

    /// One-side extent of the theoretical receptive field.
    pub fn receptive_field(&self) -> usize {
        stacked_extent(&self.layout.chain)
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = input.dims4()?;
        if c != 1 {
            return Err(Error::config(format!("network input needs 1 channel, got {c}")));
        }
        let span = self
            .config
            .blocks
            .iter()
            .flat_map(|b| b.layer_dilations.iter().map(move |&d| ops::field_of_view(b.kernel, d)))
            .max()
            .unwrap_or(1);
        if h.min(w) < span {
            log::warn!("input {h}x{w} is smaller than the widest dilated kernel span {span}; padding dominates");
        }
        Ok(())
    }

    /// Despeckled estimate for a `(B, 1, H, W)` batch.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut ex = Eager { params: &self.params };
        let out = run_model(&mut ex, &self.layout, Rc::new(input.clone()))?;
        Ok(Rc::try_unwrap(out).unwrap_or_else(|rc| (*rc).clone()))
    }

    /// Records the parameters as leaves of `tape`, in graph order.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Records a forward pass on `tape` using parameter leaves from
    /// [`Model::register`].
    pub fn forward_on_tape(&self, tape: &mut Tape<T>, params: &[Var], input: Var) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::config(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.check_input(tape.value(input))?;
        let mut ex = Recorded { tape, params };
        run_model(&mut ex, &self.layout, input)
    }

    /// Output of dense block `block` (0-based) for an input of the block's
    /// declared width.
    pub fn dense_block_forward(&self, block: usize, input: &Tensor<T>) -> Result<Tensor<T>> {
        let slots = self
            .layout
            .blocks
            .get(block)
            .ok_or_else(|| Error::config(format!("no dense block {block}")))?;
        let [_, c, _, _] = input.dims4()?;
        if c != slots.input_width {
            return Err(Error::config(format!(
                "layer `{}` expects {} input channels, got {c}",
                block_name(block),
                slots.input_width
            )));
        }
        let mut ex = Eager { params: &self.params };
        let out = run_block(&mut ex, slots, Rc::new(input.clone()))?;
        Ok(Rc::try_unwrap(out).unwrap_or_else(|rc| (*rc).clone()))
    }
}
