use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

impl<'t, T: Real> Var<'t, T> {
    /// Nearest-neighbour upsampling of an `N, C, T, H, W` tensor: every voxel
    /// is replicated into a `ft × fh × fw` block.
    pub fn upsample_nearest3d(self, factor: [usize; 3]) -> Result<Var<'t, T>> {
        if factor.contains(&0) {
            return Err(Error::arg(format!("upsample factor {factor:?} has a zero")));
        }
        let x = self.value();
        let [n, c, t, h, w] = x.dims5("upsample input")?;
        let [ft, fh, fw] = factor;
        let (ot, oh, ow) = (t * ft, h * fh, w * fw);
        let mut out = vec![T::zero(); n * c * ot * oh * ow];
        let src = x.data();
        for plane in 0..n * c {
            let s = &src[plane * t * h * w..(plane + 1) * t * h * w];
            let d = &mut out[plane * ot * oh * ow..(plane + 1) * ot * oh * ow];
            for zt in 0..ot {
                for zh in 0..oh {
                    let srow = &s[((zt / ft) * h + zh / fh) * w..][..w];
                    let drow = &mut d[(zt * oh + zh) * ow..][..ow];
                    for (zw, v) in drow.iter_mut().enumerate() {
                        *v = srow[zw / fw];
                    }
                }
            }
        }
        self.tape().record(
            "upsample_nearest3d",
            Tensor::new([n, c, ot, oh, ow], out)?,
            &[self],
            Box::new(move |_inputs, _out, g, _needs| {
                let mut grad = vec![T::zero(); n * c * t * h * w];
                for plane in 0..n * c {
                    let gs = &g[plane * ot * oh * ow..(plane + 1) * ot * oh * ow];
                    let gd = &mut grad[plane * t * h * w..(plane + 1) * t * h * w];
                    for zt in 0..ot {
                        for zh in 0..oh {
                            let grow = &gs[(zt * oh + zh) * ow..][..ow];
                            let drow = &mut gd[((zt / ft) * h + zh / fh) * w..][..w];
                            for (zw, &gv) in grow.iter().enumerate() {
                                drow[zw / fw] = drow[zw / fw] + gv;
                            }
                        }
                    }
                }
                vec![Some(grad)]
            }),
        )
    }

    /// Looks up rows of a `[V, d]` table for every lattice position and lays
    /// them out channel-first as `[N, d, t, h, w]`. Gradients scatter-add back
    /// into the selected rows.
    pub fn lattice_lookup(self, indices: &[usize], lattice: [usize; 4]) -> Result<Var<'t, T>> {
        let table = self.value();
        if table.rank() != 2 {
            return Err(Error::dim("table rank", 2, table.rank()));
        }
        let (vocab, dim) = (table.shape()[0], table.shape()[1]);
        let [n, t, h, w] = lattice;
        let positions = t * h * w;
        if indices.len() != n * positions {
            return Err(Error::dim("indices", n * positions, indices.len()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(Error::Data(format!("index {bad} outside vocabulary {vocab}")));
        }
        let mut out = vec![T::zero(); n * dim * positions];
        for b in 0..n {
            for p in 0..positions {
                let row = &table.data()[indices[b * positions + p] * dim..][..dim];
                for (ch, &v) in row.iter().enumerate() {
                    out[(b * dim + ch) * positions + p] = v;
                }
            }
        }
        let idx = indices.to_vec();
        self.tape().record(
            "lattice_lookup",
            Tensor::new([n, dim, t, h, w], out)?,
            &[self],
            Box::new(move |_inputs, _out, g, _needs| {
                let mut grad = vec![T::zero(); vocab * dim];
                for b in 0..n {
                    for p in 0..positions {
                        let row = &mut grad[idx[b * positions + p] * dim..][..dim];
                        for (ch, r) in row.iter_mut().enumerate() {
                            *r = *r + g[(b * dim + ch) * positions + p];
                        }
                    }
                }
                vec![Some(grad)]
            }),
        )
    }
}
