//! Oracles and helpers shared by the integration tests.
#![allow(dead_code)]

use aclb::alignment::EditKind;
use aclb::autodiff::{Gradients, ParamId, ParamStore};
use rand::seq::index::sample;
use rand::Rng;

/// Enumerates every alignment of `a` against `b` and returns the minimum
/// cost together with the smallest kind sequence, compared from the last
/// column backwards, among the minimum-cost alignments.
pub fn exhaustive_alignment<T: PartialEq>(a: &[T], b: &[T]) -> (usize, Vec<EditKind>) {
    let mut all = Vec::new();
    enumerate(a, b, a.len(), b.len(), &mut Vec::new(), &mut all);
    let best = all.iter().map(|(c, _)| *c).min().expect("at least one alignment");
    let mut reversed = all
        .into_iter()
        .filter(|(c, _)| *c == best)
        .map(|(_, k)| k)
        .min()
        .expect("a minimum-cost alignment");
    reversed.reverse();
    (best, reversed)
}

fn enumerate<T: PartialEq>(
    a: &[T],
    b: &[T],
    i: usize,
    j: usize,
    suffix: &mut Vec<EditKind>,
    out: &mut Vec<(usize, Vec<EditKind>)>,
) {
    if i == 0 && j == 0 {
        let cost = suffix.iter().filter(|k| **k != EditKind::Match).count();
        out.push((cost, suffix.clone()));
        return;
    }
    if i > 0 && j > 0 {
        let kind = if a[i - 1] == b[j - 1] {
            EditKind::Match
        } else {
            EditKind::Substitution
        };
        suffix.push(kind);
        enumerate(a, b, i - 1, j - 1, suffix, out);
        suffix.pop();
    }
    if i > 0 {
        suffix.push(EditKind::Deletion);
        enumerate(a, b, i - 1, j, suffix, out);
        suffix.pop();
    }
    if j > 0 {
        suffix.push(EditKind::Insertion);
        enumerate(a, b, i, j - 1, suffix, out);
        suffix.pop();
    }
}

/// Norm-based relative error between analytic and central-difference
/// gradients over the given `(param, flat index)` coordinates.
///
/// `loss` evaluates the objective for the current parameter values held by
/// `store(model)`.
pub fn gradient_error<M>(
    model: &mut M,
    store: fn(&mut M) -> &mut ParamStore,
    loss: impl Fn(&M) -> f64,
    grads: &Gradients,
    coords: &[(ParamId, usize)],
    eps: f64,
) -> f64 {
    let mut diff = 0.0;
    let mut norm_a = 0.0;
    let mut norm_n = 0.0;
    for &(id, k) in coords {
        let orig = store(model).get(id).data()[k];
        store(model).get_mut(id).data_mut()[k] = orig + eps;
        let up = loss(model);
        store(model).get_mut(id).data_mut()[k] = orig - eps;
        let down = loss(model);
        store(model).get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.get(id).map_or(0.0, |t| t.data()[k]);
        diff += (numeric - analytic).powi(2);
        norm_a += analytic * analytic;
        norm_n += numeric * numeric;
    }
    let scale = norm_a.sqrt() + norm_n.sqrt();
    if scale < 1e-10 {
        diff.sqrt()
    } else {
        diff.sqrt() / scale
    }
}

/// Every `(param, index)` coordinate of a store.
pub fn all_coords(store: &ParamStore) -> Vec<(ParamId, usize)> {
    store
        .iter()
        .flat_map(|(id, _, t)| (0..t.len()).map(move |k| (id, k)))
        .collect()
}

/// Up to `per_tensor` distinct random coordinates from every tensor.
pub fn sample_coords<R: Rng>(store: &ParamStore, per_tensor: usize, rng: &mut R) -> Vec<(ParamId, usize)> {
    store
        .iter()
        .flat_map(|(id, _, t)| {
            sample(rng, t.len(), per_tensor.min(t.len()))
                .into_iter()
                .map(move |k| (id, k))
                .collect::<Vec<_>>()
        })
        .collect()
}
