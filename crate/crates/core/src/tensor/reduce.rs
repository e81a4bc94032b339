use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

impl<'t, T: Real> Var<'t, T> {
    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let mut acc = T::zero();
        for &v in x.data() {
            acc = acc + v;
        }
        let n = x.numel();
        self.tape().record(
            "sum",
            Tensor::scalar(acc),
            &[self],
            Box::new(move |_inputs, _out, g, _needs| vec![Some(vec![g[0]; n])]),
        )
    }

    /// Arithmetic mean of all elements, as a rank-0 tensor.
    pub fn mean(self) -> Result<Var<'t, T>> {
        let n = self.value().numel();
        self.sum()?.mul_scalar(1.0 / n as f64)
    }

    /// Mean over every axis but the first: `[N, ...] -> [N]`.
    pub fn mean_per_sample(self) -> Result<Var<'t, T>> {
        let x = self.value();
        if x.rank() < 1 {
            return Err(Error::arg("mean_per_sample needs a batch axis"));
        }
        let n = x.shape()[0];
        let per = x.numel() / n;
        let scale = T::from_f64_lossy(1.0 / per as f64);
        let data: Vec<T> = x
            .data()
            .chunks(per)
            .map(|c| {
                let mut acc = T::zero();
                for &v in c {
                    acc = acc + v;
                }
                acc * scale
            })
            .collect();
        self.tape().record(
            "mean_per_sample",
            Tensor::new([n], data)?,
            &[self],
            Box::new(move |_inputs, _out, g, _needs| {
                let mut grad = Vec::with_capacity(n * per);
                for &gi in g {
                    grad.extend(std::iter::repeat_n(gi * scale, per));
                }
                vec![Some(grad)]
            }),
        )
    }
}
