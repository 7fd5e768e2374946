use nalgebra::DMatrix;
use ndarray::{array, Array2};
use proptest::prelude::*;
use shiftrf::{gram_matrix, kernel_eval, self_gram, shift_invariance_check, KernelFamily, KernelSpec, SeededStream};

// Reference formulas written independently of the library's evaluation order.
fn reference(spec: &KernelSpec, a: &[f64], b: &[f64]) -> f64 {
    match spec.family() {
        KernelFamily::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        KernelFamily::Gaussian => {
            let aa: f64 = a.iter().map(|x| x * x).sum();
            let bb: f64 = b.iter().map(|x| x * x).sum();
            let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (-spec.gamma().unwrap() * (aa + bb - 2.0 * ab)).exp()
        }
        KernelFamily::Laplacian => {
            let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
            (-spec.gamma().unwrap() * l1).exp()
        }
        KernelFamily::Cauchy => {
            let g = spec.gamma().unwrap();
            a.iter().zip(b).map(|(x, y)| 1.0 / (1.0 + g * g * (x - y) * (x - y))).product()
        }
    }
}

fn nonlinear_specs() -> Vec<KernelSpec> {
    vec![
        KernelSpec::gaussian(0.3).unwrap(),
        KernelSpec::laplacian(0.7).unwrap(),
        KernelSpec::cauchy(1.1).unwrap(),
    ]
}

fn all_specs() -> Vec<KernelSpec> {
    let mut v = nonlinear_specs();
    v.push(KernelSpec::linear());
    v
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

#[test]
fn hand_evaluated_values() {
    let g = KernelSpec::gaussian(0.5).unwrap();
    assert_eq!(kernel_eval(&g, &[3.7, -1.2], &[3.7, -1.2]).unwrap(), 1.0);
    assert!((kernel_eval(&g, &[0.0, 0.0], &[1.0, 1.0]).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    let l = KernelSpec::laplacian(1.0).unwrap();
    assert!((kernel_eval(&l, &[0.0, 0.0], &[1.0, -1.0]).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
    let c = KernelSpec::cauchy(1.0).unwrap();
    assert!((kernel_eval(&c, &[0.0, 0.0], &[1.0, 1.0]).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn shift_check_examples() {
    let g = KernelSpec::gaussian(1.0).unwrap();
    let (a, b) = shift_invariance_check(&g, &[1.0], &[0.0], &[5.0]).unwrap();
    assert!((a - (-1.0f64).exp()).abs() < 1e-15 && (b - a).abs() < 1e-15);
    let c = KernelSpec::cauchy(2.0).unwrap();
    let (a, b) = shift_invariance_check(&c, &[0.0, 0.0], &[1.0, 0.0], &[-3.0, 4.0]).unwrap();
    assert!((a - 0.2).abs() < 1e-15 && (b - 0.2).abs() < 1e-15);
    assert!(shift_invariance_check(&KernelSpec::linear(), &[1.0], &[0.0], &[1.0]).is_err());
}

#[test]
fn gram_examples() {
    let g = KernelSpec::gaussian(0.5).unwrap();
    let x = array![[0.0, 0.0], [1.0, 1.0]];
    let k = self_gram(&g, x.view()).unwrap();
    let e = (-1.0f64).exp();
    assert_eq!(k.get(0, 0), 1.0);
    assert!((k.get(0, 1) - e).abs() < 1e-15 && (k.get(1, 0) - e).abs() < 1e-15);
    let lin = self_gram(&KernelSpec::linear(), array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
    assert_eq!(lin.values(), &array![[1.0, 0.0], [0.0, 1.0]]);
    for spec in nonlinear_specs() {
        let single = self_gram(&spec, array![[0.4, -2.0, 9.0]].view()).unwrap();
        assert_eq!(single.values(), &array![[1.0]]);
    }
}

#[test]
fn gram_is_bit_identical_to_looped_eval() {
    let mut s = SeededStream::new(3);
    let x = Array2::from_shape_fn((17, 6), |_| s.next_standard_normal());
    let y = Array2::from_shape_fn((9, 6), |_| s.next_standard_normal());
    for spec in all_specs() {
        let k = gram_matrix(&spec, x.view(), y.view()).unwrap();
        for i in 0..17 {
            for j in 0..9 {
                let v = kernel_eval(&spec, x.row(i).as_slice().unwrap(), y.row(j).as_slice().unwrap()).unwrap();
                assert_eq!(k.get(i, j).to_bits(), v.to_bits());
            }
        }
    }
}

#[test]
fn gram_independent_of_thread_count() {
    let mut s = SeededStream::new(8);
    let x = Array2::from_shape_fn((64, 12), |_| s.next_standard_normal());
    for spec in all_specs() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| self_gram(&spec, x.view()).unwrap());
        let b = four.install(|| self_gram(&spec, x.view()).unwrap());
        assert_eq!(a, b);
    }
}

#[test]
fn errors() {
    let g = KernelSpec::gaussian(1.0).unwrap();
    assert!(kernel_eval(&g, &[1.0], &[1.0, 2.0]).is_err());
    assert!(kernel_eval(&g, &[f64::NAN], &[1.0]).is_err());
    assert!(kernel_eval(&g, &[f64::INFINITY], &[1.0]).is_err());
    assert!(KernelSpec::gaussian(0.0).is_err());
    assert!(KernelSpec::cauchy(-1.0).is_err());
    assert!(KernelSpec::laplacian(f64::NAN).is_err());
    assert!(gram_matrix(&g, array![[1.0, 2.0]].view(), array![[1.0]].view()).is_err());
}

#[test]
fn cauchy_does_not_underflow_in_high_dimension() {
    // a direct product of 6553 factors of 1/(1 + 0.5^2 * 0.64) is about 1e-412
    let spec = KernelSpec::cauchy(0.5).unwrap();
    let a = vec![0.0; 6553];
    let b = vec![0.8; 6553];
    let k = kernel_eval(&spec, &a, &b).unwrap();
    let expected_ln = -6553.0 * (1.0f64 + 0.25 * 0.64).ln();
    assert!(expected_ln < -745.0);
    // the true value is below the smallest subnormal; it must come back as 0, not NaN
    assert!(k.is_finite() && k >= 0.0);
    let near = vec![0.01; 6553];
    let k = kernel_eval(&spec, &a, &near).unwrap();
    let expected = (-6553.0 * (1.0f64 + 0.25 * 1e-4).ln()).exp();
    assert!((k - expected).abs() <= 1e-12 * expected);
}

#[test]
fn psd_on_random_sets() {
    let mut s = SeededStream::new(2024);
    for spec in all_specs() {
        for _ in 0..20 {
            let x = Array2::from_shape_fn((10, 4), |_| 2.0 * s.next_standard_normal());
            let k = self_gram(&spec, x.view()).unwrap();
            let m = DMatrix::from_fn(10, 10, |i, j| k.get(i, j));
            let min = m.symmetric_eigenvalues().min();
            assert!(min >= -1e-8, "{:?}: smallest eigenvalue {min}", spec.family());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_reference(a in vec_strategy(5), b in vec_strategy(5)) {
        for spec in all_specs() {
            let k = kernel_eval(&spec, &a, &b).unwrap();
            let r = reference(&spec, &a, &b);
            prop_assert!((k - r).abs() <= 1e-12 * (1.0 + r.abs()), "{:?}: {k} vs {r}", spec.family());
        }
    }

    #[test]
    fn symmetric_exactly(a in vec_strategy(7), b in vec_strategy(7)) {
        for spec in all_specs() {
            prop_assert_eq!(kernel_eval(&spec, &a, &b).unwrap().to_bits(), kernel_eval(&spec, &b, &a).unwrap().to_bits());
        }
    }

    #[test]
    fn unit_diagonal_and_bounded(a in vec_strategy(6), b in vec_strategy(6)) {
        for spec in nonlinear_specs() {
            prop_assert!((kernel_eval(&spec, &a, &a).unwrap() - 1.0).abs() <= 1e-12);
            let k = kernel_eval(&spec, &a, &b).unwrap();
            prop_assert!(k > 0.0 && k <= 1.0, "{:?}: {k}", spec.family());
        }
    }

    #[test]
    fn shift_invariant(a in vec_strategy(6), b in vec_strategy(6), z in prop::collection::vec(-50.0f64..50.0, 6)) {
        for spec in nonlinear_specs() {
            let (k0, k1) = shift_invariance_check(&spec, &a, &b, &z).unwrap();
            prop_assert!((k0 - k1).abs() <= 1e-9);
        }
    }

    #[test]
    fn strictly_decreasing_in_gamma(a in vec_strategy(4), b in vec_strategy(4), g in 0.01f64..2.0) {
        prop_assume!(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() > 1e-3);
        for family in KernelFamily::SHIFT_INVARIANT {
            let lo = kernel_eval(&KernelSpec::new(family, g).unwrap(), &a, &b).unwrap();
            let hi = kernel_eval(&KernelSpec::new(family, 1.5 * g).unwrap(), &a, &b).unwrap();
            prop_assert!(hi < lo, "{family:?}: K(1.5g)={hi} K(g)={lo}");
        }
    }
}

#[test]
fn shift_invariance_over_many_triples() {
    let mut s = SeededStream::new(11);
    for _ in 0..1000 {
        let v: Vec<f64> = (0..24).map(|_| 3.0 * s.next_standard_normal()).collect();
        let (a, rest) = v.split_at(8);
        let (b, z) = rest.split_at(8);
        let z: Vec<f64> = z.iter().map(|x| 10.0 * x).collect();
        for spec in nonlinear_specs() {
            let (k0, k1) = shift_invariance_check(&spec, a, b, &z).unwrap();
            assert!((k0 - k1).abs() <= 1e-9);
        }
    }
}

#[test]
fn family_names_serialize_lowercase() {
    for (f, name) in KernelFamily::ALL.iter().zip(["linear", "gaussian", "laplacian", "cauchy"]) {
        assert_eq!(serde_json::to_string(f).unwrap(), format!("\"{name}\""));
        assert_eq!(name.parse::<KernelFamily>().unwrap(), *f);
    }
    let spec: KernelSpec = serde_json::from_str(r#"{"family":"cauchy","gamma":0.25}"#).unwrap();
    assert_eq!(spec, KernelSpec::cauchy(0.25).unwrap());
    assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"cauchy"}"#).is_err());
    assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"gaussian","gamma":-1}"#).is_err());
    let lin: KernelSpec = serde_json::from_str(r#"{"family":"linear"}"#).unwrap();
    assert_eq!(lin, KernelSpec::linear());
}
