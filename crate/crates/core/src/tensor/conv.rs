use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

const AXES: [&str; 3] = ["T", "H", "W"];

/// Stride and zero padding of a 3D convolution, per `T, H, W` axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3dSpec {
    pub fn new(stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self { stride, padding }
    }

    /// Stride 1, no padding.
    pub fn unit() -> Self {
        Self::new([1; 3], [0; 3])
    }

    /// Stride `s` on every axis with `p` padding on every axis.
    pub fn uniform(s: usize, p: usize) -> Self {
        Self::new([s; 3], [p; 3])
    }
}

/// `floor((input + 2·pad − kernel) / stride) + 1`.
pub fn conv3d_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::arg("convolution stride must be at least 1"));
    }
    let padded = input + 2 * pad;
    if kernel == 0 || kernel > padded {
        return Err(Error::arg(format!(
            "kernel extent {kernel} exceeds padded input extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Geometry shared by the forward pass, im2col and col2im.
#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    out: [usize; 3],
    spec: Conv3dSpec,
}

impl Geometry {
    fn in_volume(&self) -> usize {
        self.input.iter().product()
    }

    fn out_volume(&self) -> usize {
        self.out.iter().product()
    }

    fn patch(&self) -> usize {
        self.c * self.kernel.iter().product::<usize>()
    }

    /// 1×1×1 kernels at unit stride read the input as-is.
    fn is_pointwise(&self) -> bool {
        self.kernel == [1; 3] && self.spec.stride == [1; 3] && self.spec.padding == [0; 3]
    }

    /// Visits every kernel tap with the contiguous run of output columns it
    /// touches: `f(row, out_start, in_start, len, in_step)` for each output
    /// `(t, h)` line whose input line is in bounds.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let [t, h, w] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [ot, oh, ow] = self.out;
        let [st, sh, sw] = self.spec.stride;
        let [pt, ph, pw] = self.spec.padding;
        for c in 0..self.c {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let row = ((c * kt + dt) * kh + dh) * kw + dw;
                        // Output columns zw with 0 <= zw*sw + dw - pw < w.
                        let lo = if pw > dw { (pw - dw).div_ceil(sw) } else { 0 };
                        let hi = if w + pw > dw {
                            ((w - 1 + pw - dw) / sw + 1).min(ow)
                        } else {
                            0
                        };
                        if lo >= hi {
                            continue;
                        }
                        for zt in 0..ot {
                            let it = (zt * st + dt) as isize - pt as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for zh in 0..oh {
                                let ih = (zh * sh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let in_row = ((c * t + it as usize) * h + ih as usize) * w;
                                let iw = lo * sw + dw - pw;
                                f(row, (zt * oh + zh) * ow + lo, in_row + iw, hi - lo, sw);
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let p = self.out_volume();
        cols.fill(T::zero());
        self.for_each_run(|row, o, i, len, step| {
            let dst = &mut cols[row * p + o..][..len];
            if step == 1 {
                dst.copy_from_slice(&x[i..i + len]);
            } else {
                for (k, d) in dst.iter_mut().enumerate() {
                    *d = x[i + k * step];
                }
            }
        });
    }

    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.out_volume();
        self.for_each_run(|row, o, i, len, step| {
            let src = &cols[row * p + o..][..len];
            for (k, &s) in src.iter().enumerate() {
                let d = &mut dx[i + k * step];
                *d = *d + s;
            }
        });
    }
}

impl<'t, T: Real> Var<'t, T> {
    /// 3D cross-correlation of `[N, C, T, H, W]` input with
    /// `[Co, C, kt, kh, kw]` weights and an optional `[Co]` bias.
    pub fn conv3d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        spec: Conv3dSpec,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let wv = weight.value();
        let [n, c, t, h, w] = x.dims5("conv3d input")?;
        let [co, wc, kt, kh, kw] = wv.dims5("conv3d weight")?;
        if wc != c {
            return Err(Error::dim("C", wc, c));
        }
        if let Some(b) = bias {
            let bv = b.value();
            if bv.shape() != [co] {
                return Err(Error::dim("bias", co, bv.numel()));
            }
        }
        let input = [t, h, w];
        let kernel = [kt, kh, kw];
        let mut out = [0; 3];
        for axis in 0..3 {
            out[axis] = conv3d_output_extent(
                input[axis],
                kernel[axis],
                spec.stride[axis],
                spec.padding[axis],
            )
            .map_err(|e| match e {
                Error::Argument(msg) => Error::arg(format!("axis {}: {msg}", AXES[axis])),
                other => other,
            })?;
        }
        let geo = Geometry {
            c,
            input,
            kernel,
            out,
            spec,
        };
        let (ck, p, vin) = (geo.patch(), geo.out_volume(), geo.in_volume());
        let mut y = vec![T::zero(); n * co * p];
        let mut cols = if geo.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); ck * p]
        };
        for b in 0..n {
            let xs = &x.data()[b * c * vin..(b + 1) * c * vin];
            let rhs: &[T] = if geo.is_pointwise() {
                xs
            } else {
                geo.im2col(xs, &mut cols);
                &cols
            };
            T::gemm(
                co,
                ck,
                p,
                (wv.data(), ck as isize, 1),
                (rhs, p as isize, 1),
                (&mut y[b * co * p..(b + 1) * co * p], p as isize, 1),
                false,
            );
        }
        if let Some(bv) = bias.map(|b| b.value()) {
            for b in 0..n {
                for (o, &bias) in bv.data().iter().enumerate() {
                    let start = (b * co + o) * p;
                    y[start..start + p].iter_mut().for_each(|v| *v = *v + bias);
                }
            }
        }
        let [ot, oh, ow] = out;
        let output = Tensor::new([n, co, ot, oh, ow], y)?;
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        self.tape().record(
            "conv3d",
            output,
            &inputs,
            Box::new(move |inputs, _out, g, needs| {
                let (x, wv) = (&inputs[0], &inputs[1]);
                let mut dx = needs[0].then(|| vec![T::zero(); n * c * vin]);
                let mut dw = needs[1].then(|| vec![T::zero(); co * ck]);
                let pointwise = geo.is_pointwise();
                let mut cols = vec![T::zero(); if pointwise { 0 } else { ck * p }];
                for b in 0..n {
                    let gs = &g[b * co * p..(b + 1) * co * p];
                    if let Some(dx) = dx.as_mut() {
                        let dxs = &mut dx[b * c * vin..(b + 1) * c * vin];
                        let wt = (wv.data(), 1, ck as isize);
                        if pointwise {
                            T::gemm(ck, co, p, wt, (gs, p as isize, 1), (dxs, p as isize, 1), false);
                        } else {
                            T::gemm(ck, co, p, wt, (gs, p as isize, 1), (&mut cols, p as isize, 1), false);
                            geo.col2im(&cols, dxs);
                        }
                    }
                    if let Some(dw) = dw.as_mut() {
                        let xs = &x.data()[b * c * vin..(b + 1) * c * vin];
                        let rhs: &[T] = if pointwise {
                            xs
                        } else {
                            geo.im2col(xs, &mut cols);
                            &cols
                        };
                        T::gemm(
                            co,
                            p,
                            ck,
                            (gs, p as isize, 1),
                            (rhs, 1, p as isize),
                            (dw, ck as isize, 1),
                            true,
                        );
                    }
                }
                let mut grads = vec![dx, dw];
                if inputs.len() == 3 {
                    grads.push(needs[2].then(|| {
                        let mut db = vec![T::zero(); co];
                        for b in 0..n {
                            for (o, d) in db.iter_mut().enumerate() {
                                let start = (b * co + o) * p;
                                for &gv in &g[start..start + p] {
                                    *d = *d + gv;
                                }
                            }
                        }
                        db
                    }));
                }
                grads
            }),
        )
    }
}
