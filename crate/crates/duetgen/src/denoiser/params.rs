//! Named-tensor parameter storage.
//!
//! All learnable state lives in a [`ParamSet`]: a flat, append-only list of
//! named matrices and vectors. Layer descriptors hold [`ParamId`] handles
//! into the set rather than owning arrays, which lets one architecture
//! definition drive four aligned sets at once (values, gradients, and the
//! two optimizer moment buffers) and makes checkpoint serialization a
//! straight walk over the entries.
//!
//! Entries are ordered by creation, so two sets built by the same
//! construction code line up index-for-index; [`ParamSet::zeros_like`]
//! relies on this.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::data::formats::NamedTensor;
use crate::error::{Error, Result};

/// Handle to one tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// One named tensor: a matrix or a vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Mat(Array2<f64>),
    Vec(Array1<f64>),
}

impl Tensor {
    /// Number of scalar entries.
    pub fn len(&self) -> usize {
        match self {
            Tensor::Mat(m) => m.len(),
            Tensor::Vec(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn zeros_like(&self) -> Tensor {
        match self {
            Tensor::Mat(m) => Tensor::Mat(Array2::zeros(m.dim())),
            Tensor::Vec(v) => Tensor::Vec(Array1::zeros(v.len())),
        }
    }
}

fn tensor_values(t: &Tensor) -> Box<dyn Iterator<Item = &f64> + '_> {
    match t {
        Tensor::Mat(m) => Box::new(m.iter()),
        Tensor::Vec(v) => Box::new(v.iter()),
    }
}

fn tensor_values_mut(t: &mut Tensor) -> Box<dyn Iterator<Item = &mut f64> + '_> {
    match t {
        Tensor::Mat(m) => Box::new(m.iter_mut()),
        Tensor::Vec(v) => Box::new(v.iter_mut()),
    }
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a matrix filled by `init` (called in row-major order).
    pub fn add_mat(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        mut init: impl FnMut() -> f64,
    ) -> ParamId {
        let m = Array2::from_shape_simple_fn((rows, cols), &mut init);
        self.push(name, Tensor::Mat(m))
    }

    /// Append a vector filled by `init`.
    pub fn add_vec(&mut self, name: &str, len: usize, mut init: impl FnMut() -> f64) -> ParamId {
        let v = Array1::from_shape_simple_fn(len, &mut init);
        self.push(name, Tensor::Vec(v))
    }

    fn push(&mut self, name: &str, t: Tensor) -> ParamId {
        assert!(
            self.entries.iter().all(|(n, _)| n != name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name.to_string(), t));
        ParamId(self.entries.len() - 1)
    }

    pub fn mat(&self, id: ParamId) -> &Array2<f64> {
        match &self.entries[id.0].1 {
            Tensor::Mat(m) => m,
            Tensor::Vec(_) => panic!("parameter {} is a vector, not a matrix", self.entries[id.0].0),
        }
    }

    pub fn vec(&self, id: ParamId) -> &Array1<f64> {
        match &self.entries[id.0].1 {
            Tensor::Vec(v) => v,
            Tensor::Mat(_) => panic!("parameter {} is a matrix, not a vector", self.entries[id.0].0),
        }
    }

    pub fn mat_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        match &mut self.entries[id.0].1 {
            Tensor::Mat(m) => m,
            Tensor::Vec(_) => panic!("parameter is a vector, not a matrix"),
        }
    }

    pub fn vec_mut(&mut self, id: ParamId) -> &mut Array1<f64> {
        match &mut self.entries[id.0].1 {
            Tensor::Vec(v) => v,
            Tensor::Mat(_) => panic!("parameter is a matrix, not a vector"),
        }
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// A same-shaped set with every entry zeroed (for gradients / moments).
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.zeros_like()))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// All scalars in flat order (tensor creation order, row-major within
    /// each tensor).
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.entries.iter().flat_map(|(_, t)| tensor_values(t))
    }

    /// Mutable access to all scalars in flat order.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.entries.iter_mut().flat_map(|(_, t)| tensor_values_mut(t))
    }

    /// Read one scalar by flat index across all tensors in creation order.
    pub fn get_flat(&self, mut index: usize) -> f64 {
        for (_, t) in &self.entries {
            if index < t.len() {
                return match t {
                    Tensor::Mat(m) => m.as_slice().expect("standard layout")[index],
                    Tensor::Vec(v) => v[index],
                };
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Write one scalar by flat index across all tensors in creation order.
    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for (_, t) in &mut self.entries {
            if index < t.len() {
                match t {
                    Tensor::Mat(m) => m.as_slice_mut().expect("standard layout")[index] = value,
                    Tensor::Vec(v) => v[index] = value,
                }
                return;
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Add uniform noise in `[-scale, scale]` to every scalar. Used to move
    /// off exact zero-initializations before gradient checking.
    pub fn perturb_all(&mut self, rng: &mut impl Rng, scale: f64) {
        for (_, t) in &mut self.entries {
            match t {
                Tensor::Mat(m) => m.mapv_inplace(|v| v + rng.gen_range(-scale..=scale)),
                Tensor::Vec(v) => v.mapv_inplace(|x| x + rng.gen_range(-scale..=scale)),
            }
        }
    }

    /// Fail with the offending tensor's name if any value is non-finite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        for (name, t) in &self.entries {
            let bad = match t {
                Tensor::Mat(m) => m.iter().any(|v| !v.is_finite()),
                Tensor::Vec(v) => v.iter().any(|x| !x.is_finite()),
            };
            if bad {
                return Err(Error::numerical(format!(
                    "non-finite value in tensor {name} ({context})"
                )));
            }
        }
        Ok(())
    }

    /// Serialize every tensor for the checkpoint container.
    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        self.entries
            .iter()
            .map(|(name, t)| match t {
                Tensor::Mat(m) => NamedTensor {
                    name: name.clone(),
                    dims: vec![m.nrows(), m.ncols()],
                    data: m.iter().copied().collect(),
                },
                Tensor::Vec(v) => NamedTensor {
                    name: name.clone(),
                    dims: vec![v.len()],
                    data: v.to_vec(),
                },
            })
            .collect()
    }

    /// Overwrite values from checkpoint tensors, matching by name. Every
    /// entry must be present with the exact shape; extras are rejected.
    pub fn load_named_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        if tensors.len() != self.entries.len() {
            return Err(Error::data(format!(
                "checkpoint has {} tensors, model needs {}",
                tensors.len(),
                self.entries.len()
            )));
        }
        for (name, t) in &mut self.entries {
            let found = tensors
                .iter()
                .find(|nt| &nt.name == name)
                .ok_or_else(|| Error::data(format!("checkpoint is missing tensor {name}")))?;
            match t {
                Tensor::Mat(m) => {
                    if found.dims != [m.nrows(), m.ncols()] {
                        return Err(Error::data(format!(
                            "tensor {name} has shape {:?}, expected {:?}",
                            found.dims,
                            [m.nrows(), m.ncols()]
                        )));
                    }
                    *m = Array2::from_shape_vec((m.nrows(), m.ncols()), found.data.clone())
                        .expect("shape checked above");
                }
                Tensor::Vec(v) => {
                    if found.dims != [v.len()] {
                        return Err(Error::data(format!(
                            "tensor {name} has shape {:?}, expected {:?}",
                            found.dims,
                            [v.len()]
                        )));
                    }
                    *v = Array1::from_vec(found.data.clone());
                }
            }
        }
        Ok(())
    }
}
