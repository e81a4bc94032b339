use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

/// Slope of the negative half of the discriminator's activation.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

/// How two operands line up: equal shapes, or one side is a single value.
#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

fn broadcast(a: &[usize], an: usize, b: &[usize], bn: usize) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    if an == 1 {
        return Ok(Broadcast::LeftScalar);
    }
    if bn == 1 {
        return Ok(Broadcast::RightScalar);
    }
    if a.len() != b.len() {
        return Err(Error::dim("rank", a.len(), b.len()));
    }
    let axis = a.iter().zip(b).position(|(x, y)| x != y).unwrap_or(0);
    Err(Error::dim(format!("{axis}"), a[axis], b[axis]))
}

impl<'t, T: Real> Var<'t, T> {
    fn binary(self, rhs: Var<'t, T>, op: Binary) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), rhs.value());
        let mode = broadcast(a.shape(), a.numel(), b.shape(), b.numel())?;
        let f = move |x: T, y: T| match op {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let (shape, data): (Vec<usize>, Vec<T>) = match mode {
            Broadcast::Same => (
                a.shape().to_vec(),
                a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
            ),
            Broadcast::LeftScalar => {
                let x = a.data()[0];
                (b.shape().to_vec(), b.data().iter().map(|&y| f(x, y)).collect())
            }
            Broadcast::RightScalar => {
                let y = b.data()[0];
                (a.shape().to_vec(), a.data().iter().map(|&x| f(x, y)).collect())
            }
        };
        let name = match op {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        self.tape().record(
            name,
            Tensor::new(shape, data)?,
            &[self, rhs],
            Box::new(move |inputs, _out, g, needs| {
                let (a, b) = (inputs[0].data(), inputs[1].data());
                // Per-element partials with respect to each operand.
                let da = |i: usize| -> T {
                    match op {
                        Binary::Add | Binary::Sub => T::one(),
                        Binary::Mul => match mode {
                            Broadcast::RightScalar => b[0],
                            _ => b[i],
                        },
                    }
                };
                let db = |i: usize| -> T {
                    match op {
                        Binary::Add => T::one(),
                        Binary::Sub => -T::one(),
                        Binary::Mul => match mode {
                            Broadcast::LeftScalar => a[0],
                            _ => a[i],
                        },
                    }
                };
                let full = |d: &dyn Fn(usize) -> T| -> Vec<T> {
                    g.iter().enumerate().map(|(i, &gi)| gi * d(i)).collect()
                };
                let reduced = |d: &dyn Fn(usize) -> T| -> Vec<T> {
                    let mut acc = T::zero();
                    for (i, &gi) in g.iter().enumerate() {
                        acc = acc + gi * d(i);
                    }
                    vec![acc]
                };
                let ga = needs[0].then(|| match mode {
                    Broadcast::LeftScalar => reduced(&da),
                    _ => full(&da),
                });
                let gb = needs[1].then(|| match mode {
                    Broadcast::RightScalar => reduced(&db),
                    _ => full(&db),
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn add(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(rhs, Binary::Add)
    }

    pub fn sub(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(rhs, Binary::Sub)
    }

    pub fn mul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(rhs, Binary::Mul)
    }

    /// Applies `f` elementwise; `df(x, y)` is the local derivative given the
    /// input `x` and output `y`.
    fn unary(
        self,
        name: &str,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let data = x.data().iter().map(|&v| f(v)).collect();
        self.tape().record(
            name,
            Tensor::new(x.shape().to_vec(), data)?,
            &[self],
            Box::new(move |inputs, out, g, _needs| {
                let grad = inputs[0]
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g)
                    .map(|((&x, &y), &gi)| gi * df(x, y))
                    .collect();
                vec![Some(grad)]
            }),
        )
    }

    pub fn relu(self) -> Result<Var<'t, T>> {
        self.unary(
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: f64) -> Result<Var<'t, T>> {
        let s = T::from_f64_lossy(slope);
        self.unary(
            "leaky_relu",
            move |x| if x > T::zero() { x } else { s * x },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    /// `x · sigmoid(x)`.
    pub fn swish(self) -> Result<Var<'t, T>> {
        self.unary(
            "swish",
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    pub fn sigmoid(self) -> Result<Var<'t, T>> {
        self.unary("sigmoid", sigmoid, |_, y| y * (T::one() - y))
    }

    /// Absolute value; the subgradient at zero is zero.
    pub fn abs(self) -> Result<Var<'t, T>> {
        self.unary("abs", |x| x.abs(), |x, _| {
            if x > T::zero() {
                T::one()
            } else if x < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    /// Square root; the gradient at zero is taken as zero.
    pub fn sqrt(self) -> Result<Var<'t, T>> {
        self.unary("sqrt", |x| x.sqrt(), |_, y| {
            if y > T::zero() {
                T::one() / (y + y)
            } else {
                T::zero()
            }
        })
    }

    pub fn neg(self) -> Result<Var<'t, T>> {
        self.unary("neg", |x| -x, |_, _| -T::one())
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::from_f64_lossy(c);
        self.unary("add_scalar", move |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::from_f64_lossy(c);
        self.unary("mul_scalar", move |x| x * c, move |_, _| c)
    }

    /// Takes its value from `target` while routing the whole gradient to
    /// `self` unchanged: the straight-through estimator. `target` receives
    /// nothing through this node.
    pub fn straight_through(self, target: Var<'t, T>) -> Result<Var<'t, T>> {
        let (x, t) = (self.value(), target.value());
        if x.shape() != t.shape() {
            let (a, b) = (x.shape(), t.shape());
            if a.len() != b.len() {
                return Err(Error::dim("rank", a.len(), b.len()));
            }
            let axis = a.iter().zip(b).position(|(p, q)| p != q).unwrap_or(0);
            return Err(Error::dim(format!("{axis}"), a[axis], b[axis]));
        }
        self.tape().record(
            "straight_through",
            (*t).clone(),
            &[self, target],
            Box::new(|_inputs, _out, g, needs| vec![needs[0].then(|| g.to_vec()), None]),
        )
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
