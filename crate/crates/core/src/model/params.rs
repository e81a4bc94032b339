use indexmap::IndexMap;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Real, Tape, Tensor, Var};

/// How a parameter starts out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

/// Shape and initializer of one named parameter.
#[derive(Clone, Debug)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            tensors: IndexMap::new(),
        }
    }

    /// Draws every parameter from its own named stream, so the values of one
    /// parameter never depend on which others exist.
    pub(crate) fn init(specs: &[ParamSpec], seed: u64) -> Self {
        let mut set = Self::new();
        for spec in specs {
            let t = match spec.init {
                Init::Ones => Tensor::full(spec.shape.clone(), T::one()),
                Init::Zeros => Tensor::zeros(spec.shape.clone()),
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let mut r = rng::stream(seed, &format!("param/{}", spec.name));
                    Tensor::from_fn(spec.shape.clone(), |_| {
                        T::from_f64_lossy(r.random_range(-bound..bound))
                    })
                }
            };
            set.insert(spec.name.clone(), t);
        }
        set
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Name of the first parameter holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n)
    }

    /// Records every parameter on `tape`, as differentiable leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Bound<'t, T> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    tape.leaf(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }
}

/// A [`ParamSet`] recorded on a tape.
pub struct Bound<'t, T> {
    vars: IndexMap<String, Var<'t, T>>,
}

impl<'t, T: Real> Bound<'t, T> {
    pub fn get(&self, name: &str) -> Result<Var<'t, T>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::State(format!("missing parameter {name}")))
    }

    /// Gradients of every parameter after `Tape::backward`, in set order.
    pub fn grads(&self) -> Result<IndexMap<String, Tensor<T>>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                v.grad()
                    .map(|g| (k.clone(), g))
                    .ok_or_else(|| Error::State(format!("no gradient recorded for {k}")))
            })
            .collect()
    }
}
