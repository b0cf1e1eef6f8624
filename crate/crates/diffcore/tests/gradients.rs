//! Finite-difference checks for every op kind, plus linearity, barrier and
//! determinism properties of the backward sweep.

use diffcore::{Graph, OpKind, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

/// Builds a scalar loss from leaf tensors. The closure is re-run for every
/// perturbed input, so it must be a pure function of the leaf values.
type Builder = dyn Fn(&mut Graph, &[Var]) -> Var;

fn analytic(inputs: &[Tensor], build: &Builder) -> Vec<Tensor> {
    let mut g = Graph::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &leaves);
    let grads = g.backward(loss).unwrap();
    leaves.iter().map(|&v| grads.wrt(v)).collect()
}

fn eval(inputs: &[Tensor], build: &Builder) -> f64 {
    let mut g = Graph::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let loss = build(&mut g, &leaves);
    g.value(loss).item()
}

/// Central differences over every element of every input.
fn numeric(inputs: &[Tensor], build: &Builder) -> Vec<Tensor> {
    inputs
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut out = Tensor::zeros(t.shape());
            for i in 0..t.len() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[i] += H;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[i] -= H;
                out.data_mut()[i] = (eval(&plus, build) - eval(&minus, build)) / (2.0 * H);
            }
            out
        })
        .collect()
}

fn max_rel_err(a: &[Tensor], b: &[Tensor]) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (&p, &q) in x.data().iter().zip(y.data()) {
            let rel = (p - q).abs() / p.abs().max(q.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn check(name: &str, inputs: Vec<Tensor>, build: &Builder) {
    let a = analytic(&inputs, build);
    let n = numeric(&inputs, build);
    let err = max_rel_err(&a, &n);
    assert!(err < 1e-4, "{name}: relative error {err:e}");
}

/// Reduce any tensor to a scalar through a fixed random weighting so that
/// every output element carries a distinct upstream gradient.
fn weighted_sum(g: &mut Graph, v: Var, seed: u64) -> Var {
    let shape = g.value(v).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random_tensor(&mut rng, &shape, -1.0, 1.0));
    let p = g.mul(v, w);
    g.sum(p)
}

fn op_cases(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_tensor(&mut rng, &[3, 4], -1.5, 1.5);
    let b = random_tensor(&mut rng, &[3, 4], -1.5, 1.5);
    let pos = random_tensor(&mut rng, &[3, 4], 0.5, 2.0);
    let m = random_tensor(&mut rng, &[4, 2], -1.0, 1.0);
    let s = random_tensor(&mut rng, &[1], 0.5, 1.5);

    for (name, kind) in [
        ("add", OpKind::Add),
        ("sub", OpKind::Sub),
        ("mul", OpKind::Mul),
    ] {
        let k = kind.clone();
        check(name, vec![a.clone(), b.clone()], &move |g, x| {
            let y = g.apply(k.clone(), &[x[0], x[1]]).unwrap();
            weighted_sum(g, y, 1)
        });
        let k = kind.clone();
        check(&format!("{name}-scalar"), vec![a.clone(), s.clone()], &move |g, x| {
            let y = g.apply(k.clone(), &[x[0], x[1]]).unwrap();
            weighted_sum(g, y, 2)
        });
    }
    check("div", vec![a.clone(), pos.clone()], &|g, x| {
        let y = g.div(x[0], x[1]);
        weighted_sum(g, y, 3)
    });
    check("matmul", vec![a.clone(), m.clone()], &|g, x| {
        let y = g.matmul(x[0], x[1]);
        weighted_sum(g, y, 4)
    });
    for (name, kind, input) in [
        ("exp", OpKind::Exp, a.clone()),
        ("log", OpKind::Log, pos.clone()),
        ("tanh", OpKind::Tanh, a.clone()),
        ("sqrt", OpKind::Sqrt, pos.clone()),
        ("neg", OpKind::Neg, a.clone()),
        ("scale", OpKind::Scale(-2.5), a.clone()),
        ("sum", OpKind::Sum, a.clone()),
        ("mean", OpKind::Mean, a.clone()),
        ("reshape", OpKind::Reshape(vec![2, 6]), a.clone()),
        ("slice-rows", OpKind::Slice { axis: 0, start: 1, end: 3 }, a.clone()),
        ("slice-cols", OpKind::Slice { axis: 1, start: 1, end: 3 }, a.clone()),
        (
            "gather",
            OpKind::Gather {
                indices: vec![0, 5, 5, 11, 3],
                shape: vec![5],
            },
            a.clone(),
        ),
    ] {
        check(name, vec![input], &move |g, x| {
            let y = g.apply(kind.clone(), &[x[0]]).unwrap();
            weighted_sum(g, y, 5)
        });
    }
    // relu and clamp are checked away from their kinks
    let away = a.map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
    check("relu", vec![away.clone()], &|g, x| {
        let y = g.relu(x[0]);
        weighted_sum(g, y, 6)
    });
    let clamp_safe = a.map(|v| if (v.abs() - 1.0).abs() < 0.05 { v * 0.8 } else { v });
    check("clamp", vec![clamp_safe], &|g, x| {
        let y = g.clamp(x[0], -1.0, 1.0);
        weighted_sum(g, y, 7)
    });
    check("concat-cols", vec![a.clone(), m.clone().map(|v| v)], &|g, x| {
        let t = g.reshape(x[1], &[4, 2]);
        let tt = g.slice(t, 0, 0, 3);
        let y = g.concat(&[x[0], tt], 1);
        weighted_sum(g, y, 8)
    });
    check("concat-rows", vec![a.clone(), b.clone()], &|g, x| {
        let y = g.concat(&[x[0], x[1]], 0);
        weighted_sum(g, y, 9)
    });
    // the barrier input gets exactly zero; the other operand still matches
    let barrier: &Builder = &|g, x| {
        let sg = g.stop_gradient(x[0]);
        let p = g.mul(sg, x[1]);
        weighted_sum(g, p, 10)
    };
    let inputs = vec![a.clone(), b.clone()];
    let an = analytic(&inputs, barrier);
    let nu = numeric(&inputs, barrier);
    assert!(an[0].data().iter().all(|&v| v == 0.0));
    assert!(max_rel_err(&an[1..], &nu[1..]) < 1e-4);
}

#[test]
fn every_op_kind_matches_central_differences() {
    for seed in 0..5 {
        op_cases(seed);
    }
}

#[test]
fn tanh_of_linear_map_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let w = random_tensor(&mut rng, &[5, 4], -1.0, 1.0);
    let x = random_tensor(&mut rng, &[4, 1], -1.0, 1.0);
    check("sum(tanh(Wx))", vec![w, x], &|g, v| {
        let wx = g.matmul(v[0], v[1]);
        let t = g.tanh(wx);
        g.sum(t)
    });
}

#[test]
fn stop_gradient_contributes_exactly_zero() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![0.3, -1.2, 2.0]));
    let sg = g.stop_gradient(x);
    let e = g.exp(sg);
    let loss = g.sum(e);
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(x).is_none());
    assert_eq!(grads.wrt(x).data(), &[0.0, 0.0, 0.0]);
}

fn mlp_loss(g: &mut Graph, w: Var, x: Var) -> (Var, Var) {
    let h = g.matmul(w, x);
    let t = g.tanh(h);
    let f = g.sum_sq(t);
    let e = g.exp(h);
    let gsum = g.mean(e);
    (f, gsum)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wt = random_tensor(&mut rng, &[3, 2], -1.0, 1.0);
        let xt = random_tensor(&mut rng, &[2, 2], -1.0, 1.0);

        let grads_of = |ca: f64, cb: f64| {
            let mut g = Graph::new();
            let w = g.leaf(wt.clone());
            let x = g.leaf(xt.clone());
            let (f, h) = mlp_loss(&mut g, w, x);
            let fa = g.scale(f, ca);
            let hb = g.scale(h, cb);
            let loss = g.add(fa, hb);
            let gr = g.backward(loss).unwrap();
            (gr.wrt(w), gr.wrt(x))
        };
        let (cw, cx) = grads_of(a, b);
        let (fw, fx) = grads_of(1.0, 0.0);
        let (hw, hx) = grads_of(0.0, 1.0);
        for (c, (f, h)) in cw.data().iter().zip(fw.data().iter().zip(hw.data())) {
            prop_assert!((c - (a * f + b * h)).abs() < 1e-12);
        }
        for (c, (f, h)) in cx.data().iter().zip(fx.data().iter().zip(hx.data())) {
            prop_assert!((c - (a * f + b * h)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_graphs_are_bit_identical(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wt = random_tensor(&mut rng, &[4, 3], -2.0, 2.0);
        let xt = random_tensor(&mut rng, &[3, 2], -2.0, 2.0);
        let run = || {
            let mut g = Graph::new();
            let w = g.leaf(wt.clone());
            let x = g.leaf(xt.clone());
            let (f, h) = mlp_loss(&mut g, w, x);
            let loss = g.add(f, h);
            let gr = g.backward(loss).unwrap();
            (g.value(loss).item().to_bits(), gr.wrt(w), gr.wrt(x))
        };
        let (l1, w1, x1) = run();
        let (l2, w2, x2) = run();
        prop_assert_eq!(l1, l2);
        prop_assert!(w1.data().iter().zip(w2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(x1.data().iter().zip(x2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn single_element_broadcast_keeps_the_matrix_shape() {
    let mut g = Graph::new();
    let s = g.scalar(3.0);
    let m = g.leaf(Tensor::matrix(1, 1, vec![2.0]));
    let q = g.div(s, m);
    assert_eq!(g.value(q).shape(), &[1, 1]);
    let r = g.mul(m, s);
    assert_eq!(g.value(r).shape(), &[1, 1]);
    let grads = g.backward(q).unwrap();
    assert_eq!(grads.wrt(m).data(), &[-0.75]);
}
