//! Central finite-difference gradient checks for every graph operation.
//!
//! The numeric oracle below recomputes the loss under entrywise +-h
//! perturbations of each input tensor and each parameter; it never touches
//! the reverse-mode path it is checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structdiff_core::autodiff::{Graph, GraphInputs, NodeId, ParamStore, Tensor};
use structdiff_core::error::CoreError;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape.iter().product::<usize>())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Builds the graph, runs forward+backward once, then checks every analytic
/// gradient entry against (loss(x+h) - loss(x-h)) / 2h.
fn gradcheck(
    build: impl Fn(&mut Graph) -> NodeId,
    store: &ParamStore,
    inputs: &GraphInputs,
    check_inputs: &[&str],
    check_params: &[&str],
) {
    let mut g = Graph::new();
    let loss_node = build(&mut g);
    g.forward(store, inputs).expect("forward");
    let grads = g.backward(loss_node).expect("backward");

    let eval = |store: &ParamStore, inputs: &GraphInputs| -> f64 {
        let mut g2 = Graph::new();
        let loss = build(&mut g2);
        g2.forward(store, inputs).expect("forward");
        g2.value(loss).scalar_value()
    };

    let check = |analytic: &Tensor, perturb: &mut dyn FnMut(usize, f64) -> f64, label: &str| {
        for i in 0..analytic.numel() {
            let up = perturb(i, H);
            let down = perturb(i, -H);
            let numeric = (up - down) / (2.0 * H);
            let a = analytic.data[i];
            let err = (a - numeric).abs() / f64::max(1.0, numeric.abs());
            assert!(
                err < TOL,
                "{label}[{i}]: analytic {a}, numeric {numeric}, rel err {err:.3e}"
            );
        }
    };

    for name in check_inputs {
        let analytic = grads
            .inputs
            .get(*name)
            .unwrap_or_else(|| panic!("no input gradient for {name}"))
            .clone();
        let mut perturb = |i: usize, delta: f64| {
            let mut shifted = inputs.clone();
            shifted.tensors.get_mut(*name).unwrap().data[i] += delta;
            eval(store, &shifted)
        };
        check(&analytic, &mut perturb, name);
    }
    for name in check_params {
        let analytic = grads
            .params
            .get(*name)
            .unwrap_or_else(|| panic!("no param gradient for {name}"))
            .clone();
        let mut perturb = |i: usize, delta: f64| {
            let mut shifted = store.clone();
            shifted.params.get_mut(*name).unwrap().data[i] += delta;
            eval(&shifted, inputs)
        };
        check(&analytic, &mut perturb, name);
    }
}

/// Scalarizes an op output by a fixed random projection so that every output
/// entry influences the loss.
fn scalarize(g: &mut Graph, out: NodeId, proj: Tensor) -> NodeId {
    let c = g.constant(proj);
    let weighted = g.mul(out, c);
    g.mean_all(weighted)
}

fn instances() -> Vec<u64> {
    (0..10).collect()
}

#[test]
fn gradcheck_matmul_shared_rhs() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&[2, 3, 4], &mut rng);
        let b = rand_tensor(&[4, 5], &mut rng);
        let proj = rand_tensor(&[2, 3, 5], &mut rng);
        let inputs = GraphInputs::new().tensor("a", a).tensor("b", b);
        gradcheck(
            move |g| {
                let a = g.input("a");
                let b = g.input("b");
                let c = g.matmul(a, b);
                scalarize(g, c, proj.clone())
            },
            &ParamStore::new(),
            &inputs,
            &["a", "b"],
            &[],
        );
    }
}

#[test]
fn gradcheck_matmul_grouped_plain() {
    // covers both the serial (small) and parallel (large) grouped paths
    for (groups, seed) in [(3usize, 0u64), (24, 1), (40, 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(1200 + seed);
        let a = rand_tensor(&[groups, 4, 5], &mut rng);
        let b = rand_tensor(&[groups, 5, 6], &mut rng);
        let proj = rand_tensor(&[groups, 4, 6], &mut rng);
        let inputs = GraphInputs::new().tensor("a", a).tensor("b", b);
        gradcheck(
            move |g| {
                let a = g.input("a");
                let b = g.input("b");
                let c = g.matmul(a, b);
                scalarize(g, c, proj.clone())
            },
            &ParamStore::new(),
            &inputs,
            &["a", "b"],
            &[],
        );
    }
}

#[test]
fn gradcheck_matmul_grouped_transposed() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let a = rand_tensor(&[3, 2, 4], &mut rng);
        let b = rand_tensor(&[3, 5, 4], &mut rng);
        let proj = rand_tensor(&[3, 2, 5], &mut rng);
        let inputs = GraphInputs::new().tensor("a", a).tensor("b", b);
        gradcheck(
            move |g| {
                let a = g.input("a");
                let b = g.input("b");
                let c = g.matmul_t(a, b);
                scalarize(g, c, proj.clone())
            },
            &ParamStore::new(),
            &inputs,
            &["a", "b"],
            &[],
        );
    }
}

#[test]
fn gradcheck_add_broadcast() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let a = rand_tensor(&[2, 3, 4], &mut rng);
        let b = rand_tensor(&[3, 1], &mut rng); // broadcast middle and last axis
        let proj = rand_tensor(&[2, 3, 4], &mut rng);
        let inputs = GraphInputs::new().tensor("a", a).tensor("b", b);
        gradcheck(
            move |g| {
                let a = g.input("a");
                let b = g.input("b");
                let c = g.add(a, b);
                scalarize(g, c, proj.clone())
            },
            &ParamStore::new(),
            &inputs,
            &["a", "b"],
            &[],
        );
    }
}

#[test]
fn gradcheck_mul_broadcast() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let a = rand_tensor(&[2, 3, 4], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        let proj = rand_tensor(&[2, 3, 4], &mut rng);
        let inputs = GraphInputs::new().tensor("a", a).tensor("b", b);
        gradcheck(
            move |g| {
                let a = g.input("a");
                let b = g.input("b");
                let c = g.mul(a, b);
                scalarize(g, c, proj.clone())
            },
            &ParamStore::new(),
            &inputs,
            &["a", "b"],
            &[],
        );
    }
}

#[test]
fn gradcheck_elementwise_nonlinearities() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        // keep relu inputs away from the kink
        let mut x = rand_tensor(&[3, 5], &mut rng);
        for v in &mut x.data {
            if v.abs() < 0.05 {
                *v += 0.1_f64.copysign(*v);
            }
        }
        for op in ["relu", "gelu", "sigmoid", "exp", "scale"] {
            let proj = rand_tensor(&[3, 5], &mut rng);
            let inputs = GraphInputs::new().tensor("x", x.clone());
            let op = op.to_string();
            gradcheck(
                move |g| {
                    let x = g.input("x");
                    let y = match op.as_str() {
                        "relu" => g.relu(x),
                        "gelu" => g.gelu(x),
                        "sigmoid" => g.sigmoid(x),
                        "exp" => g.exp(x),
                        _ => g.scale(x, -1.7),
                    };
                    scalarize(g, y, proj.clone())
                },
                &ParamStore::new(),
                &inputs,
                &["x"],
                &[],
            );
        }
    }
}

#[test]
fn gradcheck_softmax() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x = rand_tensor(&[2, 4, 6], &mut rng);
        let proj = rand_tensor(&[2, 4, 6], &mut rng);
        let inputs = GraphInputs::new().tensor("x", x);
        gradcheck(
            move |g| {
                let x = g.input("x");
                let y = g.softmax(x);
                scalarize(g, y, proj.clone())
            },
            &ParamStore::new(),
            &inputs,
            &["x"],
            &[],
        );
    }
}

#[test]
fn gradcheck_layer_norm() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let x = rand_tensor(&[4, 6], &mut rng);
        let mut store = ParamStore::new();
        store.insert("ln.g", rand_tensor(&[6], &mut rng));
        store.insert("ln.s", rand_tensor(&[6], &mut rng));
        let proj = rand_tensor(&[4, 6], &mut rng);
        let inputs = GraphInputs::new().tensor("x", x);
        gradcheck(
            move |g| {
                let x = g.input("x");
                let gamma = g.param("ln.g");
                let beta = g.param("ln.s");
                let y = g.layer_norm(x, gamma, beta);
                scalarize(g, y, proj.clone())
            },
            &store,
            &inputs,
            &["x"],
            &["ln.g", "ln.s"],
        );
    }
}

#[test]
fn gradcheck_reductions() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let x = rand_tensor(&[3, 4, 5], &mut rng);
        for (kind, axis) in [("sum", 1), ("mean", 2), ("max", 1), ("mean_all", 0)] {
            let proj_shape: Vec<usize> = match (kind, axis) {
                ("sum", 1) | ("max", 1) => vec![3, 5],
                ("mean", 2) => vec![3, 4],
                _ => vec![],
            };
            let proj = if proj_shape.is_empty() {
                Tensor::scalar(rng.gen_range(-1.0..1.0))
            } else {
                rand_tensor(&proj_shape, &mut rng)
            };
            let inputs = GraphInputs::new().tensor("x", x.clone());
            let kind = kind.to_string();
            gradcheck(
                move |g| {
                    let x = g.input("x");
                    let y = match kind.as_str() {
                        "sum" => g.reduce_sum(x, axis),
                        "mean" => g.reduce_mean(x, axis),
                        "max" => g.reduce_max(x, axis),
                        _ => g.mean_all(x),
                    };
                    scalarize(g, y, proj.clone())
                },
                &ParamStore::new(),
                &inputs,
                &["x"],
                &[],
            );
        }
    }
}

#[test]
fn gradcheck_structural_ops() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let a = rand_tensor(&[2, 3, 4], &mut rng);
        let b = rand_tensor(&[2, 3, 2], &mut rng);
        // concat + narrow + reshape + permute + tile in one composite graph
        let proj = rand_tensor(&[5, 2, 3, 3], &mut rng);
        let inputs = GraphInputs::new().tensor("a", a).tensor("b", b);
        gradcheck(
            move |g| {
                let a = g.input("a");
                let b = g.input("b");
                let cat = g.concat(vec![a, b]); // [2,3,6]
                let nar = g.narrow(cat, 2, 1, 3); // [2,3,3]
                let resh = g.reshape(nar, &[2, 3, 3]);
                let perm = g.permute(resh, &[1, 0, 2]); // [3,2,3]
                let tiled = g.tile(perm, 5); // [5,3,2,3]
                let back = g.permute(tiled, &[0, 2, 1, 3]); // [5,2,3,3]
                scalarize(g, back, proj.clone())
            },
            &ParamStore::new(),
            &inputs,
            &["a", "b"],
            &[],
        );
    }
}

#[test]
fn gradcheck_embedding() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let mut store = ParamStore::new();
        store.insert("emb", rand_tensor(&[7, 4], &mut rng));
        let ids = vec![3usize, 0, 3, 6, 1];
        let proj = rand_tensor(&[5, 4], &mut rng);
        let inputs = GraphInputs::new().id_list("ids", ids);
        gradcheck(
            move |g| {
                let table = g.param("emb");
                let y = g.embedding(table, "ids");
                scalarize(g, y, proj.clone())
            },
            &store,
            &inputs,
            &[],
            &["emb"],
        );
    }
}

#[test]
fn gradcheck_masked_mean_rows() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x = rand_tensor(&[2, 4, 3], &mut rng);
        let mask = Tensor::new(vec![2, 4], vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let proj = rand_tensor(&[2, 3], &mut rng);
        let inputs = GraphInputs::new().tensor("x", x).tensor("m", mask);
        gradcheck(
            move |g| {
                let x = g.input("x");
                let m = g.input("m");
                let y = g.masked_mean_rows(x, m);
                scalarize(g, y, proj.clone())
            },
            &ParamStore::new(),
            &inputs,
            &["x"],
            &[],
        );
    }
}

#[test]
fn gradcheck_mse_masked() {
    for seed in instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + seed);
        let pred = rand_tensor(&[3, 4], &mut rng);
        let target = rand_tensor(&[3, 4], &mut rng);
        let mask = Tensor::new(
            vec![3, 4],
            (0..12).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 }).collect(),
        );
        let inputs = GraphInputs::new()
            .tensor("p", pred)
            .tensor("t", target)
            .tensor("m", mask);
        gradcheck(
            |g| {
                let p = g.input("p");
                let t = g.input("t");
                let m = g.input("m");
                g.mse_masked(p, t, m)
            },
            &ParamStore::new(),
            &inputs,
            &["p", "t"],
            &[],
        );
    }
}

// -- named examples from the operation contracts ----------------------------

#[test]
fn identity_matmul_returns_vector() {
    let mut g = Graph::new();
    let a = g.input("i2");
    let b = g.input("v");
    let c = g.matmul(a, b);
    g.mark_output("c", c);
    let inputs = GraphInputs::new()
        .tensor("i2", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]))
        .tensor("v", Tensor::new(vec![2, 1], vec![0.3, -0.7]));
    g.forward(&ParamStore::new(), &inputs).unwrap();
    assert_eq!(g.output("c").unwrap().data, vec![0.3, -0.7]);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::new();
    let x = g.input("x");
    let y = g.softmax(x);
    g.mark_output("y", y);
    let inputs = GraphInputs::new().tensor("x", Tensor::new(vec![1, 2], vec![0.0, 0.0]));
    g.forward(&ParamStore::new(), &inputs).unwrap();
    assert_eq!(g.output("y").unwrap().data, vec![0.5, 0.5]);
}

#[test]
fn layer_norm_annihilates_constant_rows() {
    let mut g = Graph::new();
    let x = g.input("x");
    let gamma = g.input("g");
    let beta = g.input("b");
    let y = g.layer_norm(x, gamma, beta);
    g.mark_output("y", y);
    let inputs = GraphInputs::new()
        .tensor("x", Tensor::filled(&[1, 5], 3.25))
        .tensor("g", Tensor::filled(&[5], 1.0))
        .tensor("b", Tensor::zeros(&[5]));
    g.forward(&ParamStore::new(), &inputs).unwrap();
    for v in &g.output("y").unwrap().data {
        assert!(v.abs() < 1e-12);
    }
}

#[test]
fn quadratic_loss_gradient() {
    // loss = x . x at x = 3 -> d/dx = 6
    let mut g = Graph::new();
    let x = g.input("x");
    let sq = g.mul(x, x);
    let loss = g.mean_all(sq);
    let inputs = GraphInputs::new().tensor("x", Tensor::scalar(3.0));
    g.forward(&ParamStore::new(), &inputs).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!((grads.inputs.get("x").unwrap().data[0] - 6.0).abs() < 1e-12);
}

#[test]
fn relu_of_negative_inputs_has_zero_gradient() {
    let mut g = Graph::new();
    let x = g.input("x");
    let r = g.relu(x);
    let loss = g.mean_all(r);
    let inputs = GraphInputs::new().tensor("x", Tensor::new(vec![4], vec![-1.0, -0.5, -2.0, -3.0]));
    g.forward(&ParamStore::new(), &inputs).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(grads.inputs.get("x").unwrap().data.iter().all(|&v| v == 0.0));
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new();
    let x = g.input("x");
    let y = g.relu(x);
    let inputs = GraphInputs::new().tensor("x", Tensor::new(vec![3], vec![1.0, 2.0, 3.0]));
    g.forward(&ParamStore::new(), &inputs).unwrap();
    assert!(matches!(g.backward(y), Err(CoreError::NotScalarLoss(_))));
}

#[test]
fn forward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x = rand_tensor(&[8, 16], &mut rng);
    let w = rand_tensor(&[16, 16], &mut rng);
    let run = |x: &Tensor, w: &Tensor| -> Vec<f64> {
        let mut g = Graph::new();
        let xi = g.input("x");
        let wi = g.input("w");
        let h = g.matmul(xi, wi);
        let h = g.gelu(h);
        let y = g.softmax(h);
        g.mark_output("y", y);
        let inputs = GraphInputs::new().tensor("x", x.clone()).tensor("w", w.clone());
        g.forward(&ParamStore::new(), &inputs).unwrap();
        g.output("y").unwrap().data.clone()
    };
    let a = run(&x, &w);
    let b = run(&x, &w);
    assert_eq!(a, b, "identical inputs must produce bit-identical values");
}

#[test]
fn masked_softmax_assigns_exactly_zero_weight() {
    use structdiff_core::autodiff::MASK_NEG;
    let mut g = Graph::new();
    let x = g.input("x");
    let m = g.input("m");
    let sum = g.add(x, m);
    let y = g.softmax(sum);
    g.mark_output("y", y);
    let inputs = GraphInputs::new()
        .tensor("x", Tensor::new(vec![1, 4], vec![2.0, -1.0, 0.5, 3.0]))
        .tensor("m", Tensor::new(vec![1, 4], vec![0.0, MASK_NEG, 0.0, MASK_NEG]));
    g.forward(&ParamStore::new(), &inputs).unwrap();
    let y = g.output("y").unwrap();
    assert!(y.data[1] < 1e-12 && y.data[3] < 1e-12);
    assert!(y.data[1] == 0.0 && y.data[3] == 0.0);
    assert!((y.data[0] + y.data[2] - 1.0).abs() < 1e-12);
}
