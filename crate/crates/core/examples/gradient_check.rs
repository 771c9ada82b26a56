// Differentiates a small two-layer network with the reverse-mode graph and
// compares every parameter gradient against central finite differences.
//
//     cargo run --example gradient_check

use aclb::autodiff::{Graph, NodeId, ParamId, ParamStore, Tensor};
use aclb::seed::rng_for;

fn loss(store: &ParamStore, w1: ParamId, w2: ParamId, x: &Tensor) -> (Graph, NodeId) {
    let mut g = Graph::new();
    let x = g.constant(x.clone());
    let w1 = g.param(store, w1);
    let w2 = g.param(store, w2);
    let h = g.matmul(x, w1).unwrap();
    let h = g.tanh(h);
    let logits = g.matmul(h, w2).unwrap();
    let p = g.softmax(logits).unwrap();
    let lp = g.log(p);
    let nll = g.neg(lp);
    let out = g.mean(nll);
    (g, out)
}

pub fn main() {
    let mut rng = rng_for(7, "gradient-check");
    let mut store = ParamStore::new();
    let w1 = store.add("w1", Tensor::glorot(3, 5, &mut rng));
    let w2 = store.add("w2", Tensor::glorot(5, 4, &mut rng));
    let x = Tensor::glorot(2, 3, &mut rng);

    let (g, out) = loss(&store, w1, w2, &x);
    let grads = g.backward(out).unwrap();

    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for id in [w1, w2] {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + eps;
            let (g, out) = loss(&store, w1, w2, &x);
            let up = g.value(out).item();
            store.get_mut(id).data_mut()[k] = orig - eps;
            let (g, out) = loss(&store, w1, w2, &x);
            let down = g.value(out).item();
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(id).map_or(0.0, |t| t.data()[k]);
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    println!("parameters: {}", store.size());
    println!("worst relative error: {worst:.2e}");
    assert!(worst < 1e-5);
}
