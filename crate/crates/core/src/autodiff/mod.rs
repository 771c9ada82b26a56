//! Dense `f64` tensors with reverse-mode differentiation, a named parameter
//! store, and the Adam optimizer.
//!
//! ```
//! use aclb::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.constant(Tensor::row(vec![0.0, 0.0]));
//! let p = g.softmax(x).unwrap();
//! assert_eq!(g.value(p).data(), &[0.5, 0.5]);
//! ```

mod adam;
mod graph;
mod tensor;

use std::collections::HashMap;

pub use adam::{Adam, AdamConfig};
pub use graph::{Axis, Gradients, Graph, NodeId, COSINE_EPS, LOG_FLOOR};
pub use tensor::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Replaces every tensor by the same-named, same-shaped one in `named`.
    pub fn load_from<'a, I>(&mut self, named: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a Tensor)>,
    {
        let mut seen = vec![false; self.values.len()];
        for (name, t) in named {
            let Some(&i) = self.index.get(name) else { continue };
            if t.shape() != self.values[i].shape() {
                return Err(Error::shape("load parameter", &[self.values[i].shape(), t.shape()]));
            }
            self.values[i] = t.clone();
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!("missing parameter {}", self.names[i])));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Tensor {
        Tensor::row(v.to_vec())
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(row(&[0.0, 0.0]));
        let s = g.softmax(x).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn cosine_self_is_one() {
        let mut g = Graph::new();
        let v = g.constant(row(&[0.3, -2.0, 5.5]));
        let c = g.cosine(v, v).unwrap();
        assert!((g.value(c).item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matmul_shape_rule() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 1]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        let err = g.matmul(a, a).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
        assert!(err.to_string().contains("[2, 3]"), "{err}");
    }

    #[test]
    fn dot_gradient_is_other_factor() {
        let mut store = ParamStore::new();
        let x = store.add("x", row(&[1.0, 2.0, 3.0]));
        let y = store.add("y", row(&[-4.0, 0.5, 2.0]));
        let mut g = Graph::new();
        let (xn, yn) = (g.param(&store, x), g.param(&store, y));
        let p = g.mul(xn, yn).unwrap();
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), store.get(y).data());
        assert_eq!(grads.get(y).unwrap().data(), store.get(x).data());
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let mut store = ParamStore::new();
        let v = store.add("v", row(&[1.0, 5.0, -2.0, 0.0]));
        let unused = store.add("unused", row(&[1.0]));
        let mut g = Graph::new();
        let vn = g.param(&store, v);
        let _ = g.param(&store, unused);
        let loss = g.mean(vn);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(v).unwrap().data(), &[0.25; 4]);
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let v = g.constant(row(&[1.0, 2.0]));
        assert!(matches!(g.backward(v), Err(Error::Shape { .. })));
    }

    #[test]
    fn log_is_floored() {
        let mut g = Graph::new();
        let v = g.constant(row(&[0.0, 1.0]));
        let l = g.log(v);
        assert_eq!(g.value(l).data(), &[LOG_FLOOR.ln(), 0.0]);
    }

    #[test]
    fn max_tracks_argmax() {
        let mut store = ParamStore::new();
        let m = store.add("m", Tensor::matrix(3, 2, vec![1.0, 9.0, 4.0, 2.0, 3.0, 5.0]).unwrap());
        let mut g = Graph::new();
        let mn = g.param(&store, m);
        let mx = g.max(mn, Axis::Rows).unwrap();
        assert_eq!(g.value(mx).data(), &[4.0, 9.0]);
        let loss = g.sum(mx);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(m).unwrap().data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let mc = g.max(mn, Axis::Cols).unwrap();
        assert_eq!(g.value(mc).data(), &[9.0, 4.0, 5.0]);
    }

    #[test]
    fn gather_scatters_back() {
        let mut store = ParamStore::new();
        let e = store.add("e", Tensor::matrix(3, 2, vec![0.0; 6]).unwrap());
        let mut g = Graph::new();
        let en = g.param(&store, e);
        let rows = g.gather(en, &[2, 0, 2]).unwrap();
        let loss = g.sum(rows);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(e).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(g.gather(en, &[3]).is_err());
    }

    #[test]
    fn broadcast_add_and_mul() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = store.add("b", row(&[10.0, 20.0]));
        let s = store.add("s", Tensor::scalar(2.0));
        let mut g = Graph::new();
        let (an, bn, sn) = (g.param(&store, a), g.param(&store, b), g.param(&store, s));
        let x = g.add(an, bn).unwrap();
        assert_eq!(g.value(x).data(), &[11.0, 22.0, 13.0, 24.0]);
        let y = g.mul(x, sn).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[4.0, 4.0]);
        assert_eq!(grads.get(s).unwrap().data(), &[70.0]);
        assert_eq!(grads.get(a).unwrap().data(), &[2.0; 4]);
        let bad = g.constant(row(&[1.0, 2.0, 3.0]));
        assert!(g.add(an, bad).is_err());
    }
}
