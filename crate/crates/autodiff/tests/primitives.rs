use sgg_autodiff::{
    finite_difference_check, AutodiffError, GradCheckConfig, ParamId, ParamStore, Result, Shape,
    Tape, Tensor, Var,
};

fn tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    // Deterministic pseudo-random values in (-1, 1), no value exactly 0.
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(rows, cols, |_, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        0.05 + 0.9 * u * if state & 1 == 0 { 1.0 } else { -1.0 }
    })
}

fn check(params: &mut ParamStore<f64>, f: impl for<'a> Fn(&mut Tape<'a, f64>) -> Result<Var>) {
    let report = finite_difference_check(params, &GradCheckConfig::default(), f).unwrap();
    assert!(report.max_rel_error < 1e-5, "{report:?}");
}

/// Weighted sum so every output element gets a distinct upstream gradient.
fn weighted_sum(t: &mut Tape<'_, f64>, x: Var, w: ParamId) -> Result<Var> {
    let wv = t.param(w);
    let prod = t.mul(x, wv)?;
    Ok(t.sum(prod))
}

fn store(specs: &[(&str, usize, usize)]) -> (ParamStore<f64>, Vec<ParamId>) {
    let mut s = ParamStore::new();
    let ids = specs
        .iter()
        .enumerate()
        .map(|(i, &(n, r, c))| s.add(n, tensor(r, c, i as u64 + 7)).unwrap())
        .collect();
    (s, ids)
}

#[test]
fn identity_matmul_is_identity() {
    let ps = ParamStore::<f64>::new();
    let mut t = Tape::new(&ps);
    let x = tensor(3, 2, 1);
    let i = t.constant(Tensor::identity(3));
    let xv = t.constant(x.clone());
    let y = t.matmul(i, xv).unwrap();
    assert_eq!(t.value(y), x.data());
}

#[test]
fn sigmoid_of_zero_is_half() {
    let ps = ParamStore::<f64>::new();
    let mut t = Tape::new(&ps);
    let z = t.zeros(1, 1);
    let s = t.sigmoid(z);
    assert_eq!(t.scalar(s), 0.5);
}

#[test]
fn tanh_derivative_at_point_three() {
    let mut ps = ParamStore::new();
    let x = ps.add("x", Tensor::scalar(0.3).unwrap()).unwrap();
    let report = finite_difference_check(&mut ps, &GradCheckConfig::default(), |t| {
        let v = t.param(x);
        let y = t.tanh(v);
        Ok(t.sum(y))
    })
    .unwrap();
    let exact = 1.0 - 0.3f64.tanh().powi(2);
    assert!((report.analytic - exact).abs() < 1e-15);
    assert!((report.analytic - report.numeric).abs() < 1e-7, "{report:?}");
}

#[test]
fn matmul_gradients() {
    let (mut ps, ids) = store(&[("a", 3, 4), ("b", 4, 2), ("w", 3, 2)]);
    check(&mut ps, |t| {
        let (a, b) = (t.param(ids[0]), t.param(ids[1]));
        let y = t.matmul(a, b)?;
        weighted_sum(t, y, ids[2])
    });
}

#[test]
fn elementwise_gradients() {
    let (mut ps, ids) = store(&[("a", 2, 3), ("b", 2, 3), ("w", 2, 3)]);
    check(&mut ps, |t| {
        let (a, b) = (t.param(ids[0]), t.param(ids[1]));
        let s = t.add(a, b)?;
        let d = t.sub(s, b)?;
        let d = t.sub(d, b)?;
        let m = t.mul(d, a)?;
        weighted_sum(t, m, ids[2])
    });
}

#[test]
fn bias_and_activation_gradients() {
    let (mut ps, ids) = store(&[("a", 3, 4), ("bias", 1, 4), ("w", 3, 4)]);
    check(&mut ps, |t| {
        let (a, bias) = (t.param(ids[0]), t.param(ids[1]));
        let z = t.add_bias(a, bias)?;
        let s = t.sigmoid(z);
        let h = t.tanh(z);
        let r = t.relu(z);
        let sh = t.add(s, h)?;
        let all = t.add(sh, r)?;
        let scaled = t.scale(all, 1.7);
        weighted_sum(t, scaled, ids[2])
    });
}

#[test]
fn concat_slice_gather_gradients() {
    let (mut ps, ids) = store(&[("a", 2, 3), ("b", 2, 2), ("table", 4, 3), ("w", 2, 6)]);
    check(&mut ps, |t| {
        let (a, b, table) = (t.param(ids[0]), t.param(ids[1]), t.param(ids[2]));
        let c = t.concat(&[a, b])?; // 2x5
        let s = t.slice_cols(c, 1, 3)?; // 2x3
        let g = t.gather(table, &[3, 0, 3, 1], 2)?; // 2x6, row 3 used twice
        let s2 = t.concat(&[s, s])?;
        let m = t.mul(s2, g)?;
        weighted_sum(t, m, ids[3])
    });
}

#[test]
fn softmax_log_gradients() {
    let (mut ps, ids) = store(&[("a", 2, 4), ("w", 2, 4)]);
    check(&mut ps, |t| {
        let a = t.param(ids[0]);
        let p = t.softmax(a);
        let l = t.log(p)?;
        weighted_sum(t, l, ids[1])
    });
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_one_hot() {
    let logits: Vec<f64> = vec![0.2, -1.0, 0.7, 0.1];
    let mut ps = ParamStore::new();
    let id = ps.add("logits", Tensor::row_vector(logits.clone()).unwrap()).unwrap();
    let grads = {
        let mut t = Tape::new(&ps);
        let l = t.param(id);
        let loss = t.softmax_cross_entropy(l, 2).unwrap();
        t.backward(loss).unwrap()
    };
    let z: f64 = logits.iter().map(|v| v.exp()).sum();
    for (k, &v) in logits.iter().enumerate() {
        let expected = v.exp() / z - if k == 2 { 1.0 } else { 0.0 };
        assert!((grads.get(id).data()[k] - expected).abs() < 1e-14);
    }
    check(&mut ps, |t| {
        let l = t.param(id);
        t.softmax_cross_entropy(l, 2)
    });
}

#[test]
fn cross_entropy_values() {
    let ps = ParamStore::<f64>::new();
    let mut t = Tape::new(&ps);
    let uniform = t.constant(Tensor::filled(1, 4, 0.37));
    let l = t.softmax_cross_entropy(uniform, 3).unwrap();
    assert!((t.scalar(l) - 4f64.ln()).abs() < 1e-15);

    let peaked = t.constant(Tensor::row_vector(vec![10.0, -10.0]).unwrap());
    let l = t.softmax_cross_entropy(peaked, 0).unwrap();
    // −log σ(20) = log(1 + e^−20)
    let expected = (-20f64).exp().ln_1p();
    assert!((t.scalar(l) - expected).abs() < 1e-20);
    assert!((t.scalar(l) - 2.06e-9).abs() < 1e-11);

    assert!(matches!(
        t.softmax_cross_entropy(peaked, 2),
        Err(AutodiffError::TargetOutOfRange {
            target: 2,
            classes: 2
        })
    ));
}

#[test]
fn shape_mismatch_reports_both_shapes() {
    let ps = ParamStore::<f64>::new();
    let mut t = Tape::new(&ps);
    let a = t.zeros(2, 3);
    let b = t.zeros(3, 2);
    match t.add(a, b) {
        Err(AutodiffError::ShapeMismatch { op, left, right }) => {
            assert_eq!(op, "add");
            assert_eq!(left, Shape::new(2, 3));
            assert_eq!(right, Shape::new(3, 2));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(t.matmul(a, a).is_err());
    let bias = t.zeros(1, 2);
    assert!(t.add_bias(a, bias).is_err());
}

#[test]
fn sum_gradient_is_all_ones() {
    let mut ps = ParamStore::new();
    let x = ps.add("x", tensor(2, 3, 3)).unwrap();
    let mut t = Tape::new(&ps);
    let v = t.param(x);
    let s = t.sum(v);
    let g = t.backward(s).unwrap();
    assert!(g.get(x).data().iter().all(|&v| v == 1.0));
}

#[test]
fn reused_leaf_sums_both_paths() {
    // root = sum(x ⊙ y) + sum(x ⊙ y) with x placed on the tape twice via param().
    let mut ps = ParamStore::new();
    let x = ps.add("x", Tensor::row_vector(vec![1.5, -2.0]).unwrap()).unwrap();
    let y = ps.add("y", Tensor::row_vector(vec![0.5, 3.0]).unwrap()).unwrap();
    let mut t = Tape::new(&ps);
    let (xv, yv) = (t.param(x), t.param(y));
    let a = t.mul(xv, yv).unwrap();
    let xv2 = t.param(x);
    let b = t.mul(xv2, yv).unwrap();
    let s = t.add(a, b).unwrap();
    let root = t.sum(s);
    let g = t.backward(root).unwrap();
    assert_eq!(g.get(x).data(), &[1.0, 6.0]);
    assert_eq!(g.get(y).data(), &[3.0, -4.0]);
}

#[test]
fn unreachable_params_get_zero_gradient() {
    let mut ps = ParamStore::new();
    let x = ps.add("x", tensor(1, 3, 1)).unwrap();
    let unused = ps.add("unused", tensor(2, 2, 2)).unwrap();
    let mut t = Tape::new(&ps);
    let v = t.param(x);
    let s = t.sum(v);
    let g = t.backward(s).unwrap();
    assert!(g.get(unused).data().iter().all(|&v| v == 0.0));
}

#[test]
fn non_scalar_root_rejected() {
    let mut ps = ParamStore::new();
    let x = ps.add("x", tensor(1, 3, 1)).unwrap();
    let mut t = Tape::new(&ps);
    let v = t.param(x);
    assert!(matches!(
        t.backward(v),
        Err(AutodiffError::NotScalarRoot(s)) if s == Shape::new(1, 3)
    ));
}

#[test]
fn non_finite_values_rejected_at_creation() {
    assert!(matches!(
        Tensor::<f32>::new(1, 2, vec![1.0, f32::NAN]),
        Err(AutodiffError::NonFinite(_))
    ));
    assert!(Tensor::<f64>::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
    assert!(Tensor::<f64>::new(2, 2, vec![1.0]).is_err());
}

#[test]
fn non_finite_gradient_flagged() {
    // d/dx ln x = 1/x overflows for a subnormal x while the forward value stays finite.
    let mut ps = ParamStore::new();
    let x = ps.add("x", Tensor::scalar(1e-310f64).unwrap()).unwrap();
    let mut t = Tape::new(&ps);
    let v = t.param(x);
    let l = t.log(v).unwrap();
    assert!(t.scalar(l).is_finite());
    let s = t.sum(l);
    assert!(matches!(t.backward(s), Err(AutodiffError::NonFinite(_))));
}

#[test]
fn backward_is_deterministic() {
    let (ps, ids) = store(&[("a", 4, 5), ("b", 5, 3), ("w", 4, 3)]);
    let run = || {
        let mut t = Tape::new(&ps);
        let (a, b) = (t.param(ids[0]), t.param(ids[1]));
        let y = t.matmul(a, b).unwrap();
        let y = t.tanh(y);
        let root = weighted_sum(&mut t, y, ids[2]).unwrap();
        t.backward(root).unwrap()
    };
    let (g1, g2) = (run(), run());
    for ((_, a), (_, b)) in g1.iter().zip(g2.iter()) {
        let ab: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb);
    }
}

#[test]
fn single_precision_matches_double_path() {
    let (ps64, ids) = store(&[("a", 2, 3), ("b", 3, 2)]);
    let ps32 = ps64.cast::<f32>();
    let mut t64 = Tape::new(&ps64);
    let mut t32 = Tape::new(&ps32);
    let y64 = {
        let (a, b) = (t64.param(ids[0]), t64.param(ids[1]));
        let m = t64.matmul(a, b).unwrap();
        t64.sigmoid(m)
    };
    let y32 = {
        let (a, b) = (t32.param(ids[0]), t32.param(ids[1]));
        let m = t32.matmul(a, b).unwrap();
        t32.sigmoid(m)
    };
    for (x, y) in t64.value(y64).iter().zip(t32.value(y32)) {
        assert!((x - *y as f64).abs() < 1e-6);
    }
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// grad(f + g) = grad f + grad g on shared leaves.
        #[test]
        fn gradient_linearity(vals in prop::collection::vec(-2.0f64..2.0, 6)) {
            let mut ps = ParamStore::new();
            let x = ps.add("x", Tensor::new(2, 3, vals).unwrap()).unwrap();
            let f = |t: &mut Tape<'_, f64>| {
                let v = t.param(x);
                let s = t.sigmoid(v);
                t.sum(s)
            };
            let g = |t: &mut Tape<'_, f64>| {
                let v = t.param(x);
                let sq = t.mul(v, v).unwrap();
                let th = t.tanh(sq);
                t.sum(th)
            };
            let grad = |h: &dyn Fn(&mut Tape<'_, f64>) -> Var| {
                let mut t = Tape::new(&ps);
                let r = h(&mut t);
                t.backward(r).unwrap().get(x).clone()
            };
            let gf = grad(&f);
            let gg = grad(&g);
            let gsum = grad(&|t: &mut Tape<'_, f64>| {
                let a = f(t);
                let b = g(t);
                t.add(a, b).unwrap()
            });
            for k in 0..6 {
                prop_assert!((gsum.data()[k] - gf.data()[k] - gg.data()[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_rows_sum_to_one(vals in prop::collection::vec(-30.0f64..30.0, 12)) {
            let ps = ParamStore::<f64>::new();
            let mut t = Tape::new(&ps);
            let x = t.constant(Tensor::new(3, 4, vals).unwrap());
            let p = t.softmax(x);
            for row in t.value(p).chunks(4) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
