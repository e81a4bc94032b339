use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

impl<'t, T: Real> Var<'t, T> {
    /// Group normalization over `[N, C, ...]`: each group of `C / groups`
    /// channels is shifted to zero mean and scaled to unit variance, then the
    /// per-channel affine `gain · x̂ + bias` is applied.
    pub fn group_norm(
        self,
        groups: usize,
        eps: f64,
        gain: Var<'t, T>,
        bias: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        if x.rank() < 2 {
            return Err(Error::dim("group_norm rank", 2, x.rank()));
        }
        let (n, c) = (x.shape()[0], x.shape()[1]);
        if groups == 0 || c % groups != 0 {
            return Err(Error::arg(format!(
                "{c} channels cannot be split into {groups} groups"
            )));
        }
        let (gv, bv) = (gain.value(), bias.value());
        if gv.shape() != [c] {
            return Err(Error::dim("gain", c, gv.numel()));
        }
        if bv.shape() != [c] {
            return Err(Error::dim("bias", c, bv.numel()));
        }
        let spatial = x.numel() / (n * c);
        let per_group = c / groups;
        let m = per_group * spatial;
        let eps = T::from_f64_lossy(eps);
        let inv_m = T::from_f64_lossy(1.0 / m as f64);

        // Normalized values and per-group inverse std are kept for backward.
        let mut xhat = vec![T::zero(); x.numel()];
        let mut inv_std = vec![T::zero(); n * groups];
        for (gi, chunk) in x.data().chunks(m).enumerate() {
            let mut mean = T::zero();
            for &v in chunk {
                mean = mean + v;
            }
            mean = mean * inv_m;
            let mut var = T::zero();
            for &v in chunk {
                let d = v - mean;
                var = var + d * d;
            }
            var = var * inv_m;
            let is = T::one() / (var + eps).sqrt();
            inv_std[gi] = is;
            for (o, &v) in xhat[gi * m..(gi + 1) * m].iter_mut().zip(chunk) {
                *o = (v - mean) * is;
            }
        }
        let mut y = vec![T::zero(); x.numel()];
        for b in 0..n {
            for ch in 0..c {
                let start = (b * c + ch) * spatial;
                let (g, s) = (gv.data()[ch], bv.data()[ch]);
                for (o, &xh) in y[start..start + spatial]
                    .iter_mut()
                    .zip(&xhat[start..start + spatial])
                {
                    *o = g * xh + s;
                }
            }
        }
        self.tape().record(
            "group_norm",
            Tensor::new(x.shape().to_vec(), y)?,
            &[self, gain, bias],
            Box::new(move |inputs, _out, g, needs| {
                let gv = inputs[1].data();
                let dx = needs[0].then(|| {
                    let mut dx = vec![T::zero(); g.len()];
                    for gi in 0..n * groups {
                        let (b, grp) = (gi / groups, gi % groups);
                        // dxhat = g · gain, accumulated into group means.
                        let mut mean_d = T::zero();
                        let mut mean_dx = T::zero();
                        for local in 0..per_group {
                            let ch = grp * per_group + local;
                            let start = (b * c + ch) * spatial;
                            for i in start..start + spatial {
                                let d = g[i] * gv[ch];
                                mean_d = mean_d + d;
                                mean_dx = mean_dx + d * xhat[i];
                            }
                        }
                        mean_d = mean_d * inv_m;
                        mean_dx = mean_dx * inv_m;
                        let is = inv_std[gi];
                        for local in 0..per_group {
                            let ch = grp * per_group + local;
                            let start = (b * c + ch) * spatial;
                            for i in start..start + spatial {
                                let d = g[i] * gv[ch];
                                dx[i] = is * (d - mean_d - xhat[i] * mean_dx);
                            }
                        }
                    }
                    dx
                });
                let per_channel = |f: &dyn Fn(usize) -> T| -> Vec<T> {
                    let mut acc = vec![T::zero(); c];
                    for b in 0..n {
                        for (ch, a) in acc.iter_mut().enumerate() {
                            let start = (b * c + ch) * spatial;
                            for i in start..start + spatial {
                                *a = *a + f(i);
                            }
                        }
                    }
                    acc
                };
                let dgain = needs[1].then(|| per_channel(&|i| g[i] * xhat[i]));
                let dbias = needs[2].then(|| per_channel(&|i| g[i]));
                vec![dx, dgain, dbias]
            }),
        )
    }
}
