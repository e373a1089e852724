use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::element::Element;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named flat tensors. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    specs: Vec<ParamSpec>,
    data: Vec<Vec<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> Default for Params<T> {
    fn default() -> Self {
        Self {
            specs: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Element> Params<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor and returns its slot.
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> usize {
        let spec = ParamSpec {
            name: name.into(),
            shape,
        };
        assert_eq!(spec.len(), values.len(), "tensor {} has wrong length", spec.name);
        assert!(!self.index.contains_key(&spec.name), "duplicate tensor {}", spec.name);
        let id = self.specs.len();
        self.index.insert(spec.name.clone(), id);
        self.specs.push(spec);
        self.data.push(values);
        id
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            specs: self.specs.clone(),
            data: self.data.iter().map(|t| vec![T::zero(); t.len()]).collect(),
            index: self.index.clone(),
        }
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    #[inline]
    pub fn t(&self, id: usize) -> &[T] {
        &self.data[id]
    }

    #[inline]
    pub fn t_mut(&mut self, id: usize) -> &mut [T] {
        &mut self.data[id]
    }

    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.id(name).map(|i| self.t(i))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [T]> {
        self.id(name).map(move |i| self.t_mut(i))
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&ParamSpec, &[T])> {
        self.specs.iter().zip(self.data.iter().map(Vec::as_slice))
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.data {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.data {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Sum of squares, accumulated in f64.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().flatten().map(|v| v.f64() * v.f64()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }

    /// True when every value in tensor `id` is zero.
    pub fn is_zero(&self, id: usize) -> bool {
        self.data[id].iter().all(|v| v.is_zero())
    }

    /// SHA-256 over names, shapes and the f64 bit patterns of all values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (spec, t) in self.tensors() {
            h.update(spec.name.as_bytes());
            for d in &spec.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t {
                h.update(v.f64().to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn replace_data(&mut self, id: usize, values: Vec<T>) {
        assert_eq!(values.len(), self.data[id].len());
        self.data[id] = values;
    }
}
