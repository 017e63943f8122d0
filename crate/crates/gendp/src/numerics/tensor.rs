//! Tensors and the named parameter store.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::NumericsError;

/// Dense row-major float array with an optional gradient buffer.
///
/// This is the exchange type at API boundaries (checkpoints, gradient
/// checking). During graph construction values live on the [`super::Tape`]
/// instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || numel != data.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Stable handle for a registered parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) u32);

impl ParamId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    trainable: bool,
}

impl ParamEntry {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn trainable(&self) -> bool {
        self.trainable
    }
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Ordered, name-indexed collection of learned tensors.
///
/// Registration order is the canonical order everywhere (checkpoint layout,
/// optimizer iteration), which keeps every run bit-reproducible.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<ParamId, NumericsError> {
        if self.by_name.contains_key(name) {
            return Err(NumericsError::DuplicateParam(name.to_string()));
        }
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || numel != data.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "register",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        let id = ParamId(self.entries.len() as u32);
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            data: Arc::new(data),
            trainable: true,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Registers a weight drawn uniformly from `(-range, range)`.
    pub fn register_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        range: f64,
        rng: &mut R,
    ) -> Result<ParamId, NumericsError> {
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel)
            .map(|_| rng.random::<f64>() * 2.0 * range - range)
            .collect();
        self.register(name, shape, data)
    }

    pub fn register_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<ParamId, NumericsError> {
        let numel: usize = shape.iter().product();
        self.register(name, shape, vec![0.0; numel])
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NumericsError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.index()]
    }

    pub(crate) fn data_arc(&self, id: ParamId) -> Arc<Vec<f64>> {
        Arc::clone(&self.entries[id.index()].data)
    }

    /// Mutable view of a parameter's values (clones only if a tape still
    /// shares the buffer; drop tapes before optimizing to avoid copies).
    pub fn data_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        Arc::make_mut(&mut self.entries[id.index()].data)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.index()].trainable = trainable;
    }

    /// Marks every parameter whose name starts with `prefix`.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) {
        for e in &mut self.entries {
            if e.name.starts_with(prefix) {
                e.trainable = trainable;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (ParamId(i as u32), e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count, optionally restricted to a name prefix.
    pub fn numel_by_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.name.starts_with(prefix))
            .map(|e| e.numel())
            .sum()
    }

    pub fn to_tensor(&self, id: ParamId) -> Tensor {
        let e = self.entry(id);
        Tensor {
            shape: e.shape.clone(),
            data: e.data.as_ref().clone(),
            requires_grad: e.trainable,
            grad: None,
        }
    }

    /// Replaces a parameter's values; the shape must match exactly.
    pub fn load_values(&mut self, id: ParamId, data: Vec<f64>) -> Result<(), NumericsError> {
        let e = &self.entries[id.index()];
        if data.len() != e.numel() {
            return Err(NumericsError::ShapeMismatch {
                op: "load_values",
                lhs: e.shape.clone(),
                rhs: vec![data.len()],
            });
        }
        self.entries[id.index()].data = Arc::new(data);
        Ok(())
    }

    /// Byte-exact snapshot of all values, for freeze checks and best-epoch
    /// restore.
    pub fn snapshot(&self) -> Vec<Arc<Vec<f64>>> {
        self.entries.iter().map(|e| Arc::clone(&e.data)).collect()
    }

    pub fn restore(&mut self, snap: &[Arc<Vec<f64>>]) {
        assert_eq!(snap.len(), self.entries.len(), "snapshot size mismatch");
        for (e, s) in self.entries.iter_mut().zip(snap) {
            e.data = Arc::clone(s);
        }
    }
}

/// Per-parameter gradient buffers produced by a backward pass.
#[derive(Debug)]
pub struct GradAccum {
    grads: Vec<Option<Vec<f64>>>,
}

impl GradAccum {
    pub fn new(params: &ParamSet) -> Self {
        GradAccum {
            grads: vec![None; params.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads
            .get(id.index())
            .and_then(|g| g.as_deref())
    }

    pub fn clear(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    pub(crate) fn add(&mut self, id: ParamId, numel: usize, contrib: &[f64]) {
        let slot = &mut self.grads[id.index()];
        let buf = slot.get_or_insert_with(|| vec![0.0; numel]);
        for (b, c) in buf.iter_mut().zip(contrib) {
            *b += c;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_deref().map(|g| (ParamId(i as u32), g)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shape_must_match_data() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 4]).is_ok());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut ps = ParamSet::new();
        ps.register("w", vec![2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            ps.register("w", vec![2], vec![0.0, 0.0]),
            Err(NumericsError::DuplicateParam(_))
        ));
    }

    #[test]
    fn prefix_freeze_and_counts() {
        let mut ps = ParamSet::new();
        ps.register("encoder.w", vec![2], vec![0.0; 2]).unwrap();
        ps.register("policy.w", vec![3], vec![0.0; 3]).unwrap();
        ps.set_trainable_prefix("encoder.", false);
        assert!(!ps.entry(ps.id("encoder.w").unwrap()).trainable());
        assert!(ps.entry(ps.id("policy.w").unwrap()).trainable());
        assert_eq!(ps.numel_by_prefix("encoder."), 2);
        assert_eq!(ps.numel_by_prefix(""), 5);
    }

    #[test]
    fn snapshot_restores_bitwise() {
        let mut ps = ParamSet::new();
        let id = ps.register("w", vec![2], vec![1.5, -2.5]).unwrap();
        let snap = ps.snapshot();
        ps.data_mut(id)[0] = 99.0;
        ps.restore(&snap);
        assert_eq!(ps.entry(id).data(), &[1.5, -2.5]);
    }
}
