//! Forward and backward kernels shared by the eager path and the tape.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{Real, Tensor};

/// Dilation and zero padding of a square convolution kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(dilation: usize, padding: usize) -> Self {
        ConvGeometry { dilation, padding }
    }

    /// Size-preserving geometry for a `kernel x kernel` filter.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        ConvGeometry {
            dilation,
            padding: dilation * (kernel - 1) / 2,
        }
    }
}

/// Spatial output extent of a dilated convolution, or `None` if empty.
pub fn conv_output_extent(input: usize, kernel: usize, geom: ConvGeometry) -> Option<usize> {
    let padded = input + 2 * geom.padding;
    let span = geom.dilation * (kernel - 1);
    (padded > span).then(|| padded - span)
}

/// One-side extent of the field of view of an `r x r` kernel with dilation
/// `l`: `(r + 1) * l - 1`. For `l = 1` this is `r`.
pub fn field_of_view(r: usize, l: usize) -> usize {
    debug_assert!(r >= 1 && r % 2 == 1 && l >= 1);
    (r + 1) * l - 1
}

struct ConvDims {
    batch: usize,
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    geom: ConvGeometry,
}

impl ConvDims {
    fn cols_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols_len(&self) -> usize {
        self.cols_rows() * self.ho * self.wo
    }

    /// 1x1 kernels without padding read the input plane directly.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.geom.padding == 0
    }

    /// Valid output range `[lo, hi)` along one axis for tap offset `off`.
    fn valid_range(out: usize, inp: usize, off: isize) -> (usize, usize) {
        // input index = o + off must lie in [0, inp)
        let lo = (-off).max(0) as usize;
        let hi = (inp as isize - off).clamp(0, out as isize) as usize;
        (lo.min(hi), hi)
    }

    fn tap_offset(&self, tap: usize) -> isize {
        (tap * self.geom.dilation) as isize - self.geom.padding as isize
    }

    /// Unrolls one input sample into a `(cin * k * k) x (ho * wo)` matrix.
    fn im2col<T: Real>(&self, plane: &[T]) -> Vec<T> {
        let (h, w, ho, wo, k) = (self.h, self.w, self.ho, self.wo, self.k);
        let mut cols = Vec::with_capacity(self.cols_len());
        for ci in 0..self.cin {
            let src = &plane[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                let dy = self.tap_offset(ki);
                let (y_lo, y_hi) = Self::valid_range(ho, h, dy);
                for kj in 0..k {
                    let dx = self.tap_offset(kj);
                    let (x_lo, x_hi) = Self::valid_range(wo, w, dx);
                    for oy in 0..ho {
                        if oy < y_lo || oy >= y_hi || x_lo >= x_hi {
                            cols.resize(cols.len() + wo, T::zero());
                            continue;
                        }
                        let iy = (oy as isize + dy) as usize;
                        let ix0 = (x_lo as isize + dx) as usize;
                        cols.resize(cols.len() + x_lo, T::zero());
                        cols.extend_from_slice(&src[iy * w + ix0..iy * w + ix0 + (x_hi - x_lo)]);
                        cols.resize(cols.len() + wo - x_hi, T::zero());
                    }
                }
            }
        }
        cols
    }

    /// Output extent equals input extent, so the input gradient is itself a
    /// convolution of the upstream gradient with the flipped kernel.
    fn is_same(&self) -> bool {
        2 * self.geom.padding == self.geom.dilation * (self.k - 1)
    }

    fn col2im_add<T: Real>(&self, cols: &[T], plane: &mut [T]) {
        let (h, w, ho, wo, k) = (self.h, self.w, self.ho, self.wo, self.k);
        let n = ho * wo;
        for ci in 0..self.cin {
            let dst = &mut plane[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                let dy = self.tap_offset(ki);
                let (y_lo, y_hi) = Self::valid_range(ho, h, dy);
                for kj in 0..k {
                    let dx = self.tap_offset(kj);
                    let (x_lo, x_hi) = Self::valid_range(wo, w, dx);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let row = (ci * k + ki) * k + kj;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in y_lo..y_hi {
                        let iy = (oy as isize + dy) as usize;
                        let ix0 = (x_lo as isize + dx) as usize;
                        let out = &mut dst[iy * w + ix0..iy * w + ix0 + (x_hi - x_lo)];
                        for (o, &v) in out.iter_mut().zip(&src[oy * wo + x_lo..oy * wo + x_hi]) {
                            *o = *o + v;
                        }
                    }
                }
            }
        }
    }
}

fn conv_dims<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    geom: ConvGeometry,
) -> Result<ConvDims> {
    let [batch, cin, h, w] = input.dims4()?;
    let [cout, kcin, k, k2] = kernel.dims4()?;
    if k != k2 || k == 0 {
        return Err(Error::config(format!(
            "convolution kernel must be square, got {k}x{k2}"
        )));
    }
    if kcin != cin {
        return Err(Error::config(format!(
            "convolution expects {kcin} input channels, input has {cin}"
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::config(format!(
            "bias shape {:?} does not match {cout} output channels",
            bias.shape()
        )));
    }
    if geom.dilation == 0 {
        return Err(Error::config("dilation must be at least 1"));
    }
    if h == 0 || w == 0 {
        return Err(Error::Geometry(format!("empty input plane {h}x{w}")));
    }
    let (ho, wo) = match (
        conv_output_extent(h, k, geom),
        conv_output_extent(w, k, geom),
    ) {
        (Some(ho), Some(wo)) => (ho, wo),
        _ => {
            return Err(Error::Geometry(format!(
                "{h}x{w} input with {k}x{k} kernel, dilation {}, padding {} has no output",
                geom.dilation, geom.padding
            )))
        }
    };
    Ok(ConvDims {
        batch,
        cin,
        cout,
        k,
        h,
        w,
        ho,
        wo,
        geom,
    })
}

/// Dilated 2-D cross-correlation with zero padding.
///
/// `input` is `(B, Cin, H, W)`, `kernel` is `(Cout, Cin, k, k)`, `bias` is
/// `(Cout)`. Output extent is `H + 2 * padding - dilation * (k - 1)`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    geom: ConvGeometry,
) -> Result<Tensor<T>> {
    let d = conv_dims(input, kernel, bias, geom)?;
    let n = d.ho * d.wo;
    let kk = d.cols_rows();
    let plane_in = d.cin * d.h * d.w;
    let mut out = vec![T::zero(); d.batch * d.cout * n];
    out.par_chunks_mut(d.cout * n)
        .zip(input.data().par_chunks(plane_in))
        .for_each(|(dst, src)| {
            for (co, row) in dst.chunks_mut(n).enumerate() {
                row.fill(bias.data()[co]);
            }
            let owned;
            let cols: &[T] = if d.is_pointwise() {
                src
            } else {
                owned = d.im2col(src);
                &owned
            };
            T::gemm(
                d.cout,
                kk,
                n,
                T::one(),
                kernel.data(),
                (kk as isize, 1),
                cols,
                (n as isize, 1),
                T::one(),
                dst,
                (n as isize, 1),
            );
        });
    Tensor::new(&[d.batch, d.cout, d.ho, d.wo], out)
}

/// Gradients of a convolution given the upstream gradient `grad_out`.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    geom: ConvGeometry,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let d = conv_dims(input, kernel, bias, geom)?;
    if grad_out.shape() != [d.batch, d.cout, d.ho, d.wo] {
        return Err(Error::config("conv2d_backward: upstream gradient has the wrong shape"));
    }
    let n = d.ho * d.wo;
    let kk = d.cols_rows();
    let plane_in = d.cin * d.h * d.w;

    let transposed = want_input && d.is_same() && !d.is_pointwise();
    let by_cols = want_input && !transposed;

    struct Partial<T> {
        kernel: Vec<T>,
        bias: Vec<T>,
        input: Option<Vec<T>>,
    }

    let partials: Vec<Partial<T>> = input
        .data()
        .par_chunks(plane_in)
        .zip(grad_out.data().par_chunks(d.cout * n))
        .map(|(src, g)| {
            let owned;
            let cols: &[T] = if d.is_pointwise() {
                src
            } else {
                owned = d.im2col(src);
                &owned
            };
            let mut dk = vec![T::zero(); d.cout * kk];
            // dK = G * cols^T
            T::gemm(
                d.cout,
                n,
                kk,
                T::one(),
                g,
                (n as isize, 1),
                cols,
                (1, n as isize),
                T::zero(),
                &mut dk,
                (kk as isize, 1),
            );
            let db = g.chunks(n).map(|row| row.iter().copied().sum()).collect();
            let dx = by_cols.then(|| input_grad_by_cols(&d, kernel.data(), g));
            Partial {
                kernel: dk,
                bias: db,
                input: dx,
            }
        })
        .collect();

    // Fixed-order reduction keeps results independent of the thread count.
    let mut dk = vec![T::zero(); d.cout * kk];
    let mut db = vec![T::zero(); d.cout];
    let mut dx = by_cols.then(|| Vec::with_capacity(d.batch * plane_in));
    for p in partials {
        add_assign(&mut dk, &p.kernel);
        add_assign(&mut db, &p.bias);
        if let (Some(dx), Some(part)) = (dx.as_mut(), p.input) {
            dx.extend(part);
        }
    }
    let input_grad = if transposed {
        Some(conv2d(grad_out, &flip_transpose(kernel, &d), &Tensor::zeros(&[d.cin]), geom)?)
    } else {
        dx.map(|v| Tensor::new(input.shape(), v)).transpose()?
    };
    Ok(ConvGrads {
        input: input_grad,
        kernel: Tensor::new(kernel.shape(), dk)?,
        bias: Tensor::new(bias.shape(), db)?,
    })
}

/// `(cin, cout, k, k)` kernel with both spatial axes reversed.
fn flip_transpose<T: Real>(kernel: &Tensor<T>, d: &ConvDims) -> Tensor<T> {
    let (cin, cout, k) = (d.cin, d.cout, d.k);
    let src = kernel.data();
    Tensor::from_fn(&[cin, cout, k, k], |idx| {
        let (kx, rest) = (idx % k, idx / k);
        let (ky, rest) = (rest % k, rest / k);
        let (co, ci) = (rest % cout, rest / cout);
        src[((co * cin + ci) * k + (k - 1 - ky)) * k + (k - 1 - kx)]
    })
}

/// Input gradient of one sample through the unrolled matrix:
/// `dcols = K^T * G`, folded back onto the input plane.
fn input_grad_by_cols<T: Real>(d: &ConvDims, kernel: &[T], g: &[T]) -> Vec<T> {
    let n = d.ho * d.wo;
    let kk = d.cols_rows();
    let mut dcols = vec![T::zero(); kk * n];
    T::gemm(
        kk,
        d.cout,
        n,
        T::one(),
        kernel,
        (1, kk as isize),
        g,
        (n as isize, 1),
        T::zero(),
        &mut dcols,
        (n as isize, 1),
    );
    if d.is_pointwise() {
        dcols
    } else {
        let mut dx = vec![T::zero(); d.cin * d.h * d.w];
        d.col2im_add(&dcols, &mut dx);
        dx
    }
}

pub(crate) fn add_assign<T: Real>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = *a + b;
    }
}

/// `(channels, inner)` split used by per-channel operations. Rank-1 tensors
/// count as a single channel.
fn channel_layout(shape: &[usize]) -> (usize, usize, usize) {
    match shape.len() {
        0 => (1, 1, 1),
        1 => (1, 1, shape[0]),
        _ => (shape[0], shape[1], shape[2..].iter().product()),
    }
}

fn check_slope<T: Real>(x: &Tensor<T>, slope: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (outer, c, inner) = channel_layout(x.shape());
    if slope.len() != c {
        return Err(Error::config(format!(
            "PReLU needs {c} slopes, got {}",
            slope.len()
        )));
    }
    Ok((outer, c, inner))
}

/// Per-channel parametric ReLU: `x` for `x >= 0`, `a * x` otherwise.
pub fn prelu<T: Real>(x: &Tensor<T>, slope: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c, inner) = check_slope(x, slope)?;
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if *v < T::zero() {
            *v = *v * slope.data()[(i / inner) % c];
        }
    }
    Ok(out)
}

/// Returns `(dx, dslope)`. The derivative at exactly zero takes the
/// positive branch.
pub fn prelu_backward<T: Real>(
    x: &Tensor<T>,
    slope: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (_, c, inner) = check_slope(x, slope)?;
    let mut dx = grad_out.clone();
    let mut da = vec![T::zero(); c];
    for (i, (g, &v)) in dx.data_mut().iter_mut().zip(x.data()).enumerate() {
        if v < T::zero() {
            let ch = (i / inner) % c;
            da[ch] = da[ch] + *g * v;
            *g = *g * slope.data()[ch];
        }
    }
    Ok((dx, Tensor::new(slope.shape(), da)?))
}

/// Concatenates `(B, C_i, H, W)` tensors along the channel axis.
pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::config("concat of an empty list"))?;
    let [b, _, h, w] = first.dims4()?;
    let mut total = 0;
    for p in parts {
        let [pb, pc, ph, pw] = p.dims4()?;
        if (pb, ph, pw) != (b, h, w) {
            return Err(Error::config(format!(
                "concat parts disagree: {:?} vs {:?}",
                first.shape(),
                p.shape()
            )));
        }
        total += pc;
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(b * total * plane);
    for bi in 0..b {
        for p in parts {
            let pc = p.shape()[1];
            out.extend_from_slice(&p.data()[bi * pc * plane..(bi + 1) * pc * plane]);
        }
    }
    Tensor::new(&[b, total, h, w], out)
}

/// Channels `[start, start + len)` of a `(B, C, H, W)` tensor.
pub fn slice_channels<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims4()?;
    if start + len > c || len == 0 {
        return Err(Error::config(format!(
            "channel slice {start}..{} out of range for {c} channels",
            start + len
        )));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(b * len * plane);
    for bi in 0..b {
        let base = (bi * c + start) * plane;
        out.extend_from_slice(&x.data()[base..base + len * plane]);
    }
    Tensor::new(&[b, len, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t4(shape: [usize; 4], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(&shape, data).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = t4([1, 1, 3, 3], (1..=9).map(f64::from).collect());
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let k = t4([1, 1, 3, 3], k);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &k, &b, ConvGeometry::new(1, 1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dilated_taps_hand_counted() {
        let x = Tensor::<f32>::full(&[1, 1, 5, 5], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &k, &b, ConvGeometry::new(2, 2)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
        assert_eq!(y.data()[2 * 5 + 2], 9.0);
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[24], 4.0);
    }

    #[test]
    fn output_extent_formula() {
        let x = Tensor::<f32>::zeros(&[2, 3, 9, 7]);
        let k = Tensor::zeros(&[4, 3, 3, 3]);
        let b = Tensor::zeros(&[4]);
        let y = conv2d(&x, &k, &b, ConvGeometry::new(2, 1)).unwrap();
        // 9 + 2 - 4 = 7, 7 + 2 - 4 = 5
        assert_eq!(y.shape(), &[2, 4, 7, 5]);
    }

    #[test]
    fn conv_errors() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let b = Tensor::zeros(&[1]);
        let wrong_cin = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            conv2d(&x, &wrong_cin, &b, ConvGeometry::new(1, 1)),
            Err(Error::Config(_))
        ));
        let k = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(matches!(
            conv2d(&x, &k, &b, ConvGeometry::new(3, 0)),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn bias_fills_output() {
        let x = Tensor::<f32>::zeros(&[1, 1, 4, 4]);
        let k = Tensor::zeros(&[2, 1, 1, 1]);
        let b = Tensor::new(&[2], vec![0.5, -1.0]).unwrap();
        let y = conv2d(&x, &k, &b, ConvGeometry::new(1, 0)).unwrap();
        assert!(y.data()[..16].iter().all(|&v| v == 0.5));
        assert!(y.data()[16..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn field_of_view_values() {
        assert_eq!(field_of_view(3, 1), 3);
        assert_eq!(field_of_view(3, 2), 7);
        assert_eq!(field_of_view(3, 3), 11);
        assert_eq!(field_of_view(3, 4), 15);
        assert_eq!(field_of_view(1, 5), 9);
        for r in [1, 3, 5, 7] {
            assert_eq!(field_of_view(r, 1), r);
        }
    }

    #[test]
    fn prelu_forward_cases() {
        let x = Tensor::<f64>::new(&[3], vec![2.0, 0.0, 5.0]).unwrap();
        let a = Tensor::new(&[1], vec![0.7]).unwrap();
        assert_eq!(prelu(&x, &a).unwrap(), x);
        let x = Tensor::<f64>::new(&[1], vec![-1.0]).unwrap();
        let a = Tensor::new(&[1], vec![0.25]).unwrap();
        assert_eq!(prelu(&x, &a).unwrap().data(), &[-0.25]);
    }

    #[test]
    fn prelu_slope_count_checked() {
        let x = Tensor::<f32>::zeros(&[1, 3, 2, 2]);
        let a = Tensor::zeros(&[2]);
        assert!(matches!(prelu(&x, &a), Err(Error::Config(_))));
    }

    #[test]
    fn prelu_zero_takes_positive_branch() {
        let x = Tensor::<f64>::new(&[2], vec![0.0, -0.0]).unwrap();
        let a = Tensor::new(&[1], vec![0.25]).unwrap();
        let g = Tensor::full(&[2], 1.0);
        let (dx, da) = prelu_backward(&x, &a, &g).unwrap();
        assert_eq!(dx.data(), &[1.0, 1.0]);
        assert_eq!(da.data(), &[0.0]);
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let a = Tensor::<f32>::from_fn(&[2, 3, 2, 2], |i| i as f32);
        let b = Tensor::<f32>::from_fn(&[2, 1, 2, 2], |i| -(i as f32));
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 4, 2, 2]);
        assert_eq!(slice_channels(&c, 0, 3).unwrap(), a);
        assert_eq!(slice_channels(&c, 3, 1).unwrap(), b);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        let b = Tensor::<f32>::zeros(&[1, 1, 3, 2]);
        assert!(matches!(concat_channels(&[&a, &b]), Err(Error::Config(_))));
        assert!(matches!(concat_channels::<f32>(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn input_gradient_paths_agree() {
        let wave = |shape: &[usize], phase: f64| Tensor::<f64>::from_fn(shape, |i| (i as f64 * 0.731 + phase).sin());
        for (k, dil) in [(3, 1), (3, 2), (3, 4), (5, 1)] {
            let geom = ConvGeometry::same(k, dil);
            let x = wave(&[2, 3, 9, 8], 0.1);
            let w = wave(&[4, 3, k, k], 0.7);
            let b = wave(&[4], 1.3);
            let g = wave(&[2, 4, 9, 8], 2.9);
            let fast = conv2d_backward(&x, &w, &b, geom, &g, true).unwrap().input.unwrap();
            let d = conv_dims(&x, &w, &b, geom).unwrap();
            let slow: Vec<f64> = g
                .data()
                .chunks(4 * 72)
                .flat_map(|gs| input_grad_by_cols(&d, w.data(), gs))
                .collect();
            let slow = Tensor::new(x.shape(), slow).unwrap();
            assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12, "k {k} dilation {dil}");
        }
    }
}
