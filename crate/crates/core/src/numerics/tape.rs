//! Reverse-mode automatic differentiation over a recorded tape.

use crate::error::{Error, Result};

use super::ops::{self, ConvGeometry};
use super::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeometry,
    },
    Prelu {
        input: Var,
        slope: Var,
    },
    Concat(Vec<Var>),
    Slice {
        input: Var,
        start: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Square(Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// A computation graph built by eager evaluation.
///
/// Leaf gradients accumulate across [`Tape::backward`] calls until
/// [`Tape::zero_grad`] is called.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a differentiable leaf.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, populated by [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, geom: ConvGeometry) -> Result<Var> {
        let value = ops::conv2d(self.value(input), self.value(kernel), self.value(bias), geom)?;
        let rg = self.any_grad(&[input, kernel, bias]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            rg,
        ))
    }

    pub fn prelu(&mut self, input: Var, slope: Var) -> Result<Var> {
        let value = ops::prelu(self.value(input), self.value(slope))?;
        let rg = self.any_grad(&[input, slope]);
        Ok(self.push(value, Op::Prelu { input, slope }, rg))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = ops::concat_channels(&values)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let value = ops::slice_channels(self.value(input), start, len)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::Slice { input, start }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::config(format!(
                "{name}: shapes {:?} and {:?} differ",
                x.shape(),
                y.shape()
            )));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "add", |p, q| p + q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "sub", |p, q| p - q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "mul", |p, q| p * q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Square(a), rg)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let value = self.value(a).map(|v| v * factor);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s: T = x.data().iter().copied().sum();
        let m = s / T::of(x.len() as f64);
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Reverse-mode sweep from a scalar `loss`, adding into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        // Working gradients for this sweep only; intermediate nodes must not
        // carry state into the next call.
        let mut work: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        if self.nodes[loss.0].requires_grad {
            work[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), T::one()));
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = work[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    work[idx] = Some(g);
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                } => {
                    let want_input = self.nodes[input.0].requires_grad;
                    let grads = ops::conv2d_backward(
                        self.value(*input),
                        self.value(*kernel),
                        self.value(*bias),
                        *geom,
                        &g,
                        want_input,
                    )?;
                    if let Some(dx) = grads.input {
                        accumulate(&mut work, *input, dx);
                    }
                    accumulate(&mut work, *kernel, grads.kernel);
                    accumulate(&mut work, *bias, grads.bias);
                }
                Op::Prelu { input, slope } => {
                    let (dx, da) = ops::prelu_backward(self.value(*input), self.value(*slope), &g)?;
                    accumulate(&mut work, *input, dx);
                    accumulate(&mut work, *slope, da);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let c = self.value(*p).shape()[1];
                        accumulate(&mut work, *p, ops::slice_channels(&g, start, c)?);
                        start += c;
                    }
                }
                Op::Slice { input, start } => {
                    let src = self.value(*input);
                    let [b, c, h, w] = src.dims4()?;
                    let len = g.shape()[1];
                    let plane = h * w;
                    let mut dx = Tensor::zeros(&[b, c, h, w]);
                    for bi in 0..b {
                        let base = (bi * c + start) * plane;
                        dx.data_mut()[base..base + len * plane]
                            .copy_from_slice(&g.data()[bi * len * plane..(bi + 1) * len * plane]);
                    }
                    accumulate(&mut work, *input, dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut work, *a, g.clone());
                    accumulate(&mut work, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut work, *b, g.map(|v| -v));
                    accumulate(&mut work, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, self.value(*b), |p, q| p * q);
                    let gb = zip_map(&g, self.value(*a), |p, q| p * q);
                    accumulate(&mut work, *a, ga);
                    accumulate(&mut work, *b, gb);
                }
                Op::Square(a) => {
                    let two = T::of(2.0);
                    let ga = zip_map(&g, self.value(*a), |p, q| two * p * q);
                    accumulate(&mut work, *a, ga);
                }
                Op::Scale(a, f) => {
                    let f = *f;
                    accumulate(&mut work, *a, g.map(|v| v * f));
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    accumulate(&mut work, *a, Tensor::full(self.value(*a).shape(), s));
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let s = g.data()[0] / T::of(x.len() as f64);
                    accumulate(&mut work, *a, Tensor::full(x.shape(), s));
                }
            }
        }

        for (idx, node) in self.nodes.iter_mut().enumerate() {
            if !(node.requires_grad && matches!(node.op, Op::Leaf)) {
                continue;
            }
            let contribution = work.get_mut(idx).and_then(Option::take);
            match (&mut node.grad, contribution) {
                (Some(acc), Some(c)) => ops::add_assign(acc.data_mut(), c.data()),
                (slot @ None, Some(c)) => *slot = Some(c),
                (slot @ None, None) => *slot = Some(Tensor::zeros(node.value.shape())),
                (Some(_), None) => {}
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(work: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut work[v.0] {
        Some(acc) => ops::add_assign(acc.data_mut(), g.data()),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::new(a.shape(), data).expect("zip_map operands share a shape")
}
