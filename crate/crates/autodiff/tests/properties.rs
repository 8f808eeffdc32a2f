use pathqa_autodiff::{relative_error, Tape, Tensor, Var};
use proptest::prelude::*;

fn vec_in(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

/// Worst relative error of d(Σ c ⊙ f(x))/dx against central differences at
/// ε = 1e-6. Entries whose absolute disagreement is below the difference
/// quotient's roundoff floor (1e-9 for these magnitudes) count as exact.
fn check_op(shape: &[usize], x: &[f64], coeffs: &[f64], f: impl Fn(&mut Tape, Var) -> Var) -> f64 {
    let scalarize = |tape: &mut Tape, y: Var| {
        let n = tape.value(y).len();
        let cs = (0..n).map(|i| coeffs[i % coeffs.len()]).collect();
        let c = tape.constant(Tensor::new(tape.shape(y).to_vec(), cs).unwrap());
        let prod = tape.mul(y, c).unwrap();
        tape.sum_all(prod)
    };
    let eval = |data: Vec<f64>| {
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(shape.to_vec(), data).unwrap());
        let y = f(&mut tape, xv);
        let s = scalarize(&mut tape, y);
        tape.value(s).data()[0]
    };
    let mut tape = Tape::new();
    let xv = tape.variable(Tensor::new(shape.to_vec(), x.to_vec()).unwrap());
    let y = f(&mut tape, xv);
    let s = scalarize(&mut tape, y);
    let analytic = tape.backward(s).unwrap().get(xv).unwrap().clone();

    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let mut plus = x.to_vec();
        plus[k] += eps;
        let mut minus = x.to_vec();
        minus[k] -= eps;
        let numeric = (eval(plus) - eval(minus)) / (2.0 * eps);
        let a = analytic.data()[k];
        if (a - numeric).abs() > 1e-9 {
            worst = worst.max(relative_error(a, numeric));
        }
    }
    worst
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(x in vec_in(12, -50.0, 50.0)) {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::new(vec![3, 4], x).unwrap());
        for axis in 0..2 {
            let y = tape.softmax(v, axis).unwrap();
            let s = tape.sum(y, axis).unwrap();
            for total in tape.value(s).data() {
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            prop_assert!(tape.value(y).is_finite());
        }
    }

    #[test]
    fn sigmoid_and_tanh_stay_in_open_ranges(x in vec_in(16, -15.0, 15.0)) {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::vector(x));
        let s = tape.sigmoid(v);
        let t = tape.tanh(v);
        prop_assert!(tape.value(s).data().iter().all(|&y| y > 0.0 && y < 1.0));
        prop_assert!(tape.value(t).data().iter().all(|&y| y > -1.0 && y < 1.0));
    }

    #[test]
    fn unary_gradients_match_finite_differences(x in vec_in(6, -2.0, 2.0), c in vec_in(6, 0.5, 1.5)) {
        prop_assert!(check_op(&[6], &x, &c, |t, v| t.sigmoid(v)) < 1e-6);
        prop_assert!(check_op(&[6], &x, &c, |t, v| t.tanh(v)) < 1e-6);
        prop_assert!(check_op(&[6], &x, &c, |t, v| t.exp(v)) < 1e-6);
        prop_assert!(check_op(&[6], &x, &c, |t, v| t.affine(v, -1.5, 0.25)) < 1e-6);
        let positive: Vec<f64> = x.iter().map(|v| v.abs() + 0.5).collect();
        prop_assert!(check_op(&[6], &positive, &c, |t, v| t.ln(v)) < 1e-6);
    }

    #[test]
    fn binary_and_matmul_gradients_match(x in vec_in(6, -2.0, 2.0), w in vec_in(6, -2.0, 2.0), c in vec_in(6, 0.5, 1.5)) {
        let wt = Tensor::new(vec![3, 2], w.clone()).unwrap();
        let row = Tensor::vector(w[..3].to_vec());
        let err = check_op(&[2, 3], &x, &c, |t, v| {
            let wv = t.constant(wt.clone());
            t.matmul(v, wv).unwrap()
        });
        prop_assert!(err < 1e-6, "relative error {}", err);
        let err = check_op(&[3, 2], &x, &c, |t, v| {
            let wv = t.constant(wt.clone());
            t.mul(v, wv).unwrap()
        });
        prop_assert!(err < 1e-6, "relative error {}", err);
        let err = check_op(&[2, 3], &x, &c, |t, v| {
            let b = t.constant(row.clone());
            let s = t.sub(v, b).unwrap();
            t.mul(s, v).unwrap()
        });
        prop_assert!(err < 1e-6, "relative error {}", err);
    }

    #[test]
    fn structural_gradients_match(x in vec_in(12, -2.0, 2.0), c in vec_in(12, 0.5, 1.5)) {
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.softmax(v, 1).unwrap()) < 1e-6);
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.softmax(v, 0).unwrap()) < 1e-6);
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.mean(v, 1).unwrap()) < 1e-6);
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.sum(v, 0).unwrap()) < 1e-6);
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.max(v, 1).unwrap()) < 1e-6);
        let err = check_op(&[3, 4], &x, &c, |t, v| {
            let e = t.exp(v);
            t.concat(&[v, e], 1).unwrap()
        });
        prop_assert!(err < 1e-6, "relative error {}", err);
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.slice(v, 1, 1, 3).unwrap()) < 1e-6);
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.gather(v, &[2, 0, 2]).unwrap()) < 1e-6);
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.transpose(v).unwrap()) < 1e-6);
        prop_assert!(check_op(&[3, 4], &x, &c, |t, v| t.reshape(v, &[2, 6]).unwrap()) < 1e-6);
    }

    #[test]
    fn forward_is_bitwise_deterministic(x in vec_in(12, -3.0, 3.0)) {
        let run = || {
            let mut tape = Tape::new();
            let v = tape.constant(Tensor::new(vec![3, 4], x.clone()).unwrap());
            let s = tape.softmax(v, 1).unwrap();
            let t = tape.tanh(s);
            let vt = tape.transpose(v).unwrap();
            let m = tape.matmul(t, vt).unwrap();
            tape.value(m).clone()
        };
        let (a, b) = (run(), run());
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
