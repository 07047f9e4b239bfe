//! Ordered, named tensor collections for network variables and their
//! gradients. Iteration order is insertion order everywhere, which keeps
//! updates and reductions deterministic.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered map from parameter name to tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

/// Gradients mirror the parameter set: identical keys, identical shapes.
pub type GradSet = ParamSet;

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::ParamMismatch(format!("duplicate key `{name}`")));
        }
        self.entries.push((name, tensor));
        Ok(())
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

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::ParamMismatch(format!("missing key `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar entries across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks that `other` has exactly the same keys in the same order with
    /// matching shapes.
    pub fn check_mirrors(&self, other: &ParamSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::ParamMismatch(format!(
                "key count {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((an, at), (bn, bt)) in self.entries.iter().zip(&other.entries) {
            if an != bn {
                return Err(Error::ParamMismatch(format!("key `{an}` vs `{bn}`")));
            }
            if at.shape() != bt.shape() {
                return Err(Error::ParamMismatch(format!(
                    "shape of `{an}`: {:?} vs {:?}",
                    at.shape(),
                    bt.shape()
                )));
            }
        }
        Ok(())
    }

    /// A gradient set of zeros mirroring this parameter set.
    pub fn zeros_like(&self) -> GradSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec())))
                .collect(),
        }
    }

    /// In-place `self[k] += factor * other[k]` for every key.
    pub fn add_scaled(&mut self, other: &ParamSet, factor: f64) -> Result<()> {
        self.check_mirrors(other)?;
        for ((_, t), (_, o)) in self.entries.iter_mut().zip(&other.entries) {
            t.add_scaled(o, factor)?;
        }
        Ok(())
    }

    /// Euclidean norm over all entries of all tensors.
    pub fn norm_l2(&self) -> f64 {
        let mut acc = 0.0;
        for (_, t) in &self.entries {
            acc += t.sum_squares();
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Flattens all entries into one vector, in key order then row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scalar_count());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Mutable access to the flat entry at global position `i` (key order,
    /// then row-major within each tensor).
    pub fn flat_entry_mut(&mut self, mut i: usize) -> Option<(&str, &mut f64)> {
        for (n, t) in self.entries.iter_mut() {
            if i < t.len() {
                return Some((n.as_str(), &mut t.data_mut()[i]));
            }
            i -= t.len();
        }
        None
    }
}

impl FromIterator<(String, Tensor)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        let mut set = ParamSet::new();
        for (n, t) in iter {
            set.insert(n, t).expect("duplicate key in ParamSet literal");
        }
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_and_lookup_keep_order() {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::vector(&[1.0])).unwrap();
        p.insert("a", Tensor::vector(&[2.0])).unwrap();
        let names: Vec<&str> = p.names().collect();
        assert_eq!(names, vec!["b", "a"]);
        assert_eq!(p.get("a").unwrap().data(), &[2.0]);
        assert!(p.get("c").is_none());
    }

    #[test]
    fn duplicate_key_rejected() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(1.0)).unwrap();
        assert!(p.insert("w", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn mirror_check_catches_shape_drift() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(vec![2, 3])).unwrap();
        let g = p.zeros_like();
        assert!(p.check_mirrors(&g).is_ok());

        let mut bad = ParamSet::new();
        bad.insert("w", Tensor::zeros(vec![3, 2])).unwrap();
        assert!(p.check_mirrors(&bad).is_err());
    }

    #[test]
    fn flat_entry_walks_all_tensors() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(&[1.0, 2.0])).unwrap();
        p.insert("b", Tensor::vector(&[3.0])).unwrap();
        assert_eq!(p.scalar_count(), 3);
        *p.flat_entry_mut(2).unwrap().1 = 9.0;
        assert_eq!(p.get("b").unwrap().data(), &[9.0]);
        assert!(p.flat_entry_mut(3).is_none());
        assert_eq!(p.flatten(), vec![1.0, 2.0, 9.0]);
    }
}
