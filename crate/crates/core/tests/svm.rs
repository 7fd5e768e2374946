use nalgebra::{DMatrix, DVector};
use ndarray::{array, Array2};
use shiftrf::svm::{
    argmax_first, class_order, kernel_dual_objective, kernel_primal_objective, linear_primal_objective,
    train_binary_kernel, train_binary_linear, train_multiclass, BinaryModels, CoordinateOrder, SvmConfig, SvmMode,
    TrainingInput,
};
use shiftrf::{make_synthetic, self_gram, Error, GramMatrix, KernelSpec, SeededStream, SyntheticSpec};

/// Two overlapping 2-D Gaussian blobs, 20 points each, labels +1 then -1.
fn blobs40() -> (Array2<f64>, Vec<f64>) {
    let mut s = SeededStream::new(40);
    let mut x = Array2::zeros((40, 2));
    let mut y = Vec::with_capacity(40);
    for i in 0..40 {
        let (cx, label) = if i < 20 { (1.0, 1.0) } else { (-1.0, -1.0) };
        x[[i, 0]] = cx + s.next_standard_normal();
        x[[i, 1]] = 0.5 * cx + s.next_standard_normal();
        y.push(label);
    }
    (x, y)
}

fn tight(c: f64) -> SvmConfig {
    SvmConfig {
        tolerance: 1e-9,
        max_iterations: 100_000,
        ..SvmConfig::with_c(c)
    }
}

/// Q_ij = y_i y_j (x_i . x_j + 1) for the linear solver's bias convention.
fn linear_q(x: &Array2<f64>, y: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * (x.row(i).dot(&x.row(j)) + 1.0))
}

fn kernel_q(k: &GramMatrix, y: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * (k.get(i, j) + 1.0))
}

fn dual(q: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    a.sum() - 0.5 * a.dot(&(q * a))
}

/// Accelerated projected gradient ascent on the box-constrained dual, run
/// until the projected gradient is below `tol`.
fn projected_gradient_reference(q: &DMatrix<f64>, c: f64, tol: f64) -> DVector<f64> {
    let n = q.nrows();
    let lipschitz = q.clone().symmetric_eigenvalues().max();
    let step = 1.0 / lipschitz;
    let project = |v: DVector<f64>| v.map(|a| a.clamp(0.0, c));
    let mut a = DVector::zeros(n);
    let mut prev = a.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let v = &a + (&a - &prev) * ((t - 1.0) / t_next);
        let grad = DVector::from_element(n, 1.0) - q * &v;
        prev = a;
        a = project(v + grad * step);
        t = t_next;
        let g = DVector::from_element(n, 1.0) - q * &a;
        let violation = (0..n)
            .map(|i| {
                let gi = -g[i];
                let pg = if a[i] <= 0.0 {
                    gi.min(0.0)
                } else if a[i] >= c {
                    gi.max(0.0)
                } else {
                    gi
                };
                pg.abs()
            })
            .fold(0.0, f64::max);
        if violation <= tol {
            return a;
        }
    }
    panic!("reference solver did not reach {tol}");
}

/// Global optimum of the box QP by enumerating every assignment of each
/// coordinate to {0, C, free} and solving the free block exactly.
fn active_set_optimum(q: &DMatrix<f64>, c: f64) -> f64 {
    let n = q.nrows();
    let mut best = 0.0f64;
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a = DVector::from_fn(n, |i, _| if state[i] == 1 { c } else { 0.0 });
        let mut feasible = true;
        if !free.is_empty() {
            let qf = DMatrix::from_fn(free.len(), free.len(), |r, s| q[(free[r], free[s])]);
            // (Q a)_f = 1 with bound coordinates fixed
            let rhs = DVector::from_fn(free.len(), |r, _| {
                1.0 - (0..n).filter(|&j| state[j] == 1).map(|j| q[(free[r], j)] * c).sum::<f64>()
            });
            match qf.lu().solve(&rhs) {
                Some(sol) => {
                    for (r, &i) in free.iter().enumerate() {
                        if !(-1e-12..=c + 1e-12).contains(&sol[r]) {
                            feasible = false;
                        }
                        a[i] = sol[r].clamp(0.0, c);
                    }
                }
                None => feasible = false,
            }
        }
        if feasible {
            best = best.max(dual(q, &a));
        }
        let mut k = 0;
        while k < n && state[k] == 2 {
            state[k] = 0;
            k += 1;
        }
        if k == n {
            return best;
        }
        state[k] += 1;
    }
}

fn random_gaussian_problem(n: usize, seed: u64) -> (GramMatrix, Vec<f64>) {
    let mut s = SeededStream::new(seed);
    let x = Array2::from_shape_fn((n, 3), |_| s.next_standard_normal());
    let y: Vec<f64> = (0..n)
        .map(|i| if x[[i, 0]] + 0.7 * s.next_standard_normal() > 0.0 { 1.0 } else { -1.0 })
        .collect();
    let mut y = y;
    y[0] = 1.0;
    y[1] = -1.0;
    (self_gram(&KernelSpec::gaussian(0.5).unwrap(), x.view()).unwrap(), y)
}

#[test]
fn linear_dual_matches_projected_gradient_reference() {
    let (x, y) = blobs40();
    for c in [0.1, 1.0, 10.0] {
        let model = train_binary_linear(x.view(), &y, &tight(c)).unwrap();
        assert!(model.diagnostics.converged);
        let q = linear_q(&x, &y);
        let reference = dual(&q, &projected_gradient_reference(&q, c, 1e-10));
        let ours = model.diagnostics.dual_objective;
        assert!(
            (ours - reference).abs() <= 1e-6 * reference.abs(),
            "C={c}: {ours} vs {reference}"
        );
    }
}

#[test]
fn kernel_dual_matches_active_set_enumeration() {
    for (n, seed) in [(6, 1), (9, 2), (12, 3)] {
        let (gram, y) = random_gaussian_problem(n, seed);
        for c in [0.5, 10.0] {
            let model = train_binary_kernel(&gram, KernelSpec::gaussian(0.5).unwrap(), &y, &tight(c)).unwrap();
            let q = kernel_q(&gram, &y);
            let optimum = active_set_optimum(&q, c);
            let ours = model.diagnostics.dual_objective;
            assert!(
                (ours - optimum).abs() <= 1e-4 * optimum.abs(),
                "n={n} C={c}: {ours} vs {optimum}"
            );
        }
    }
}

#[test]
fn kernel_dual_matches_reference_at_default_tolerance() {
    let (gram, y) = random_gaussian_problem(12, 9);
    let model = train_binary_kernel(&gram, KernelSpec::gaussian(0.5).unwrap(), &y, &SvmConfig::with_c(5.0)).unwrap();
    assert!(model.diagnostics.converged);
    let q = kernel_q(&gram, &y);
    let reference = dual(&q, &projected_gradient_reference(&q, 5.0, 1e-10));
    let ours = model.diagnostics.dual_objective;
    assert!((ours - reference).abs() <= 1e-4 * reference.abs(), "{ours} vs {reference}");
}

#[test]
fn linear_and_linear_kernel_solvers_agree() {
    let (x, y) = blobs40();
    let cfg = tight(1.0);
    let lin = train_binary_linear(x.view(), &y, &cfg).unwrap();
    let gram = self_gram(&KernelSpec::linear(), x.view()).unwrap();
    let ker = train_binary_kernel(&gram, KernelSpec::linear(), &y, &cfg).unwrap();
    for i in 0..40 {
        let a = lin.decision_value(x.row(i).as_slice().unwrap());
        let b = ker.decision_value(gram.row(i).as_slice().unwrap());
        assert!((a - b).abs() <= 1e-4, "row {i}: {a} vs {b}");
    }
    // same problem at the default tolerance
    let lin = train_binary_linear(x.view(), &y, &SvmConfig::with_c(1.0)).unwrap();
    let ker = train_binary_kernel(&gram, KernelSpec::linear(), &y, &SvmConfig::with_c(1.0)).unwrap();
    let worst = (0..40)
        .map(|i| {
            (lin.decision_value(x.row(i).as_slice().unwrap()) - ker.decision_value(gram.row(i).as_slice().unwrap()))
                .abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn xor_is_solved_by_gaussian_kernel() {
    let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
    let y = [1.0, 1.0, -1.0, -1.0];
    let spec = KernelSpec::gaussian(1.0).unwrap();
    let gram = self_gram(&spec, x.view()).unwrap();
    let c = 10.0;
    let model = train_binary_kernel(&gram, spec, &y, &tight(c)).unwrap();
    for i in 0..4 {
        assert!(model.decision_value(gram.row(i).as_slice().unwrap()) * y[i] > 0.0);
    }
    // exhaustive grid over the 4 dual variables
    let steps = 40;
    let q = kernel_q(&gram, &y);
    let mut best = f64::NEG_INFINITY;
    let mut best_a = DVector::zeros(4);
    for code in 0..(steps + 1usize).pow(4) {
        let mut rest = code;
        let a = DVector::from_fn(4, |_, _| {
            let v = (rest % (steps + 1)) as f64 * c / steps as f64;
            rest /= steps + 1;
            v
        });
        let d = dual(&q, &a);
        if d > best {
            best = d;
            best_a = a;
        }
    }
    let ours = model.diagnostics.dual_objective;
    assert!(ours >= best - 1e-9, "solver {ours} below grid {best}");
    assert!(ours - best <= 0.02 * best, "grid {best} far from solver {ours}");
    // the grid optimum also separates XOR
    for i in 0..4 {
        let f: f64 = (0..4).map(|j| best_a[j] * y[j] * (gram.get(i, j) + 1.0)).sum();
        assert!(f * y[i] > 0.0);
    }
    // a linear model cannot
    let lin = train_binary_linear(x.view(), &y, &SvmConfig::with_c(c)).unwrap();
    let correct = (0..4)
        .filter(|&i| lin.decision_value(x.row(i).as_slice().unwrap()) * y[i] > 0.0)
        .count();
    assert!(correct < 4);
}

#[test]
fn kkt_feasibility_and_duality() {
    let (x, y) = blobs40();
    for c in [0.01, 1.0, 100.0] {
        let cfg = SvmConfig {
            max_iterations: 50_000,
            ..SvmConfig::with_c(c)
        };
        let lin = train_binary_linear(x.view(), &y, &cfg).unwrap();
        let d = &lin.diagnostics;
        assert!(d.converged, "linear C={c}");
        assert!(d.max_violation <= cfg.tolerance);
        let primal = linear_primal_objective(&lin.weights, x.view(), &y, c);
        assert!(primal >= d.dual_objective - 1e-9);
        assert!(primal - d.dual_objective <= 1e-3 * (1.0 + d.dual_objective.abs()), "C={c}");
        assert!(d.dual_objective >= 0.0);
        for w in d.dual_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()));
        }

        let gram = self_gram(&KernelSpec::gaussian(0.3).unwrap(), x.view()).unwrap();
        let ker = train_binary_kernel(&gram, KernelSpec::gaussian(0.3).unwrap(), &y, &cfg).unwrap();
        let d = &ker.diagnostics;
        assert!(d.converged, "kernel C={c}: {} epochs, violation {}", d.epochs, d.max_violation);
        assert!(d.max_violation <= cfg.tolerance);
        assert!(ker.alphas.iter().all(|a| a.abs() <= c));
        let alpha: Vec<f64> = ker.alphas.iter().map(|a| a.abs()).collect();
        assert!((kernel_dual_objective(&gram, &y, &alpha) - d.dual_objective).abs() <= 1e-8 * (1.0 + d.dual_objective));
        let primal = kernel_primal_objective(&ker, &gram, &y, c);
        assert!(primal >= d.dual_objective - 1e-9);
        assert!(primal - d.dual_objective <= 1e-3 * (1.0 + d.dual_objective.abs()), "C={c}");
        for w in d.dual_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()));
        }
    }
}

#[test]
fn sweep_orders_and_shrinking_reach_the_same_optimum() {
    let (x, y) = blobs40();
    let base = tight(10.0);
    let reference = train_binary_linear(x.view(), &y, &base).unwrap().diagnostics.dual_objective;
    for order in [CoordinateOrder::Cyclic, CoordinateOrder::Shuffled { seed: 17 }] {
        for shrinking in [false, true] {
            let cfg = SvmConfig { order, shrinking, ..base };
            let m = train_binary_linear(x.view(), &y, &cfg).unwrap();
            assert!(m.diagnostics.converged);
            assert!((m.diagnostics.dual_objective - reference).abs() <= 1e-8 * reference);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let (x, y) = blobs40();
    for cfg in [SvmConfig::default(), SvmConfig { order: CoordinateOrder::Cyclic, ..SvmConfig::default() }] {
        let a = train_binary_linear(x.view(), &y, &cfg).unwrap();
        let b = train_binary_linear(x.view(), &y, &cfg).unwrap();
        assert_eq!(a, b);
        let gram = self_gram(&KernelSpec::cauchy(0.5).unwrap(), x.view()).unwrap();
        let a = train_binary_kernel(&gram, KernelSpec::cauchy(0.5).unwrap(), &y, &cfg).unwrap();
        let b = train_binary_kernel(&gram, KernelSpec::cauchy(0.5).unwrap(), &y, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn non_convergence_is_reported_not_raised() {
    let (x, y) = blobs40();
    let cfg = SvmConfig {
        max_iterations: 2,
        tolerance: 1e-12,
        ..SvmConfig::with_c(100.0)
    };
    let m = train_binary_linear(x.view(), &y, &cfg).unwrap();
    assert!(!m.diagnostics.converged);
    assert_eq!(m.diagnostics.epochs, 2);
}

#[test]
fn binary_errors() {
    let (x, y) = blobs40();
    assert!(matches!(
        train_binary_linear(x.view(), &[1.0; 40], &SvmConfig::default()),
        Err(Error::SingleClass(_))
    ));
    assert!(train_binary_linear(x.view(), &y[..39], &SvmConfig::default()).is_err());
    let gram = GramMatrix::from_array(Array2::zeros((3, 4))).unwrap();
    assert!(train_binary_kernel(&gram, KernelSpec::linear(), &[1.0, -1.0, 1.0], &SvmConfig::default()).is_err());
}

fn three_blobs() -> shiftrf::Dataset {
    make_synthetic(&SyntheticSpec::new(3, 100, 2, 6.0, 3)).unwrap()
}

#[test]
fn multiclass_three_blobs_linear_and_kernel() {
    let d = three_blobs();
    let labels = d.labels();
    let x = d.features();
    let lin = train_multiclass(TrainingInput::Features(x), labels, &SvmConfig::default()).unwrap();
    assert_eq!(lin.mode(), SvmMode::LinearExplicit);
    assert_eq!(lin.class_labels(), &class_order(labels)[..]);
    let correct = (0..d.len())
        .filter(|&i| lin.predict(x.row(i).as_slice().unwrap()).unwrap().label == labels[i])
        .count();
    assert!(correct as f64 / d.len() as f64 >= 0.95, "linear {correct}");

    let spec = KernelSpec::gaussian(0.5).unwrap();
    let gram = self_gram(&spec, x).unwrap();
    let ker = train_multiclass(TrainingInput::Gram { gram: &gram, kernel: spec }, labels, &SvmConfig::default()).unwrap();
    assert_eq!(ker.mode(), SvmMode::KernelPrecomputed);
    let predicted: Vec<String> = (0..d.len())
        .map(|i| ker.predict(gram.row(i).as_slice().unwrap()).unwrap().label)
        .collect();
    let correct = predicted.iter().zip(labels).filter(|(p, t)| p == t).count();
    assert!(correct as f64 / d.len() as f64 >= 0.95, "kernel {correct}");
    // same oracle run again reproduces the labels
    let again: Vec<String> = (0..d.len())
        .map(|i| ker.predict(gram.row(i).as_slice().unwrap()).unwrap().label)
        .collect();
    assert_eq!(predicted, again);
}

#[test]
fn multiclass_structure() {
    let d = make_synthetic(&SyntheticSpec::new(15, 4, 3, 5.0, 1)).unwrap();
    let m = train_multiclass(TrainingInput::Features(d.features()), d.labels(), &SvmConfig::default()).unwrap();
    assert_eq!(m.binaries().len(), 15);
    assert_eq!(m.class_labels().len(), 15);

    // two classes: complementary problems give negated decision values
    let (x, y) = blobs40();
    let labels: Vec<&str> = y.iter().map(|&v| if v > 0.0 { "pos" } else { "neg" }).collect();
    let m = train_multiclass(TrainingInput::Features(x.view()), &labels, &tight(1.0)).unwrap();
    assert_eq!(m.class_labels(), &["pos".to_string(), "neg".to_string()]);
    for i in 0..40 {
        let v = m.decision_values(x.row(i).as_slice().unwrap()).unwrap();
        assert!((v[0] + v[1]).abs() <= 1e-4, "{v:?}");
    }
    match m.binaries() {
        BinaryModels::Linear(ms) => assert_eq!(ms.len(), 2),
        BinaryModels::Kernel(_) => panic!("expected linear models"),
    }

    assert!(m.decision_values(&[1.0]).is_err());
    assert!(matches!(
        train_multiclass(TrainingInput::Features(x.view()), &["a"; 40], &SvmConfig::default()),
        Err(Error::SingleClass(_))
    ));
}

#[test]
fn argmax_and_tie_break() {
    assert_eq!(argmax_first(&[0.9, 0.1, -0.3]), Some(0));
    assert_eq!(argmax_first(&[0.5, 0.5]), Some(0));
    assert_eq!(argmax_first(&[-1.0, 2.0, 2.0]), Some(1));
    assert_eq!(argmax_first(&[]), None);
    // scaling by a positive constant keeps the argmax
    let v = [0.3, -2.0, 0.31, 0.0];
    let scaled: Vec<f64> = v.iter().map(|x| x * 7.5).collect();
    assert_eq!(argmax_first(&v), argmax_first(&scaled));
    assert_eq!(class_order(&["b", "a", "b", "c"]), vec!["b", "a", "c"]);
}
