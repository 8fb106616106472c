//! Named, ordered parameter collections and their canonical flat view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ManifestEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered `(name, tensor)` list. The flat view concatenates every tensor's
/// row-major data in list order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.entries
            .iter()
            .map(|(n, t)| ManifestEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect()
    }

    pub fn same_manifest(&self, other: &ParameterSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Rebuilds a set with the given manifest from a flat vector.
    pub fn unflatten(manifest: &[ManifestEntry], flat: &[f64]) -> Result<Self> {
        let total: usize = manifest.iter().map(ManifestEntry::numel).sum();
        if total != flat.len() {
            return Err(Error::Config(format!(
                "flat vector has {} elements, manifest needs {total}",
                flat.len()
            )));
        }
        let mut set = ParameterSet::new();
        let mut off = 0;
        for e in manifest {
            let n = e.numel();
            set.push(
                e.name.clone(),
                Tensor::new(e.shape.clone(), flat[off..off + n].to_vec())?,
            )?;
            off += n;
        }
        Ok(set)
    }

    /// Registers every tensor as a leaf on `tape`.
    pub fn bind<'p>(&'p self, tape: &mut Tape) -> BoundParams<'p> {
        let vars = self
            .entries
            .iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect();
        BoundParams { params: self, vars }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }
}

/// A parameter set whose tensors live on a tape.
pub struct BoundParams<'p> {
    params: &'p ParameterSet,
    vars: Vec<Var>,
}

impl BoundParams<'_> {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.params
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    /// Collects gradients after `tape.backward`; unreachable parameters get zeros.
    pub fn grads(&self, tape: &Tape) -> Gradients {
        Gradients(
            self.vars
                .iter()
                .zip(&self.params.entries)
                .map(|(v, (_, t))| match tape.grad(*v) {
                    Some(g) => g.to_vec(),
                    None => vec![0.0; t.numel()],
                })
                .collect(),
        )
    }
}

/// Per-tensor gradients aligned with a [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Gradients(
            params
                .entries
                .iter()
                .map(|(_, t)| vec![0.0; t.numel()])
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.0.iter_mut() {
            for x in g.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.l2_norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_set() -> ParameterSet {
        let mut p = ParameterSet::new();
        p.push(
            "a",
            Tensor::matrix(2, 3, (0..6).map(f64::from).collect()).unwrap(),
        )
        .unwrap();
        p.push("b", Tensor::vector(vec![7.0, 8.0]).unwrap())
            .unwrap();
        p
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = sample_set();
        assert!(p.push("a", Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn flatten_follows_manifest_order() {
        let p = sample_set();
        assert_eq!(p.flatten(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 8.0]);
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let p = sample_set();
        assert!(ParameterSet::unflatten(&p.manifest(), &[1.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn flatten_unflatten_is_bit_exact(v in prop::collection::vec(any::<f64>(), 8)) {
            let m = sample_set().manifest();
            let p = ParameterSet::unflatten(&m, &v).unwrap();
            let back = p.flatten();
            prop_assert!(back.iter().zip(&v).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
