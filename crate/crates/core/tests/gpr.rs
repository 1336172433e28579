use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use servotune_core::gpr::*;

/// Dense reference: explicit kernel matrix, LU inverse, LU determinant.
struct DenseOracle {
    x: Vec<Vec<f64>>,
    h: GpHyperparams,
    inv: DMatrix<f64>,
    y: DVector<f64>,
    logdet: f64,
}

fn k_ref(a: &[f64], b: &[f64], h: &GpHyperparams) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&h.lengthscales)
        .map(|((p, q), l)| ((p - q) / l).powi(2))
        .sum();
    h.sigma_f * h.sigma_f * (-0.5 * r2).exp()
}

impl DenseOracle {
    fn new(x: &[Vec<f64>], y: &[f64], h: &GpHyperparams) -> Self {
        let m = x.len();
        let a = DMatrix::from_fn(m, m, |i, j| k_ref(&x[i], &x[j], h) + if i == j { h.sigma_w * h.sigma_w } else { 0.0 });
        let lu = a.clone().lu();
        let det = lu.determinant();
        DenseOracle {
            x: x.to_vec(),
            h: h.clone(),
            inv: lu.try_inverse().unwrap(),
            y: DVector::from_column_slice(y),
            logdet: det.ln(),
        }
    }

    fn predict(&self, q: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| k_ref(q, xi, &self.h)));
        let mu = (k.transpose() * &self.inv * &self.y)[0];
        let var = k_ref(q, q, &self.h) - (k.transpose() * &self.inv * &k)[0];
        (mu, var)
    }

    fn nlml(&self) -> f64 {
        let m = self.x.len() as f64;
        0.5 * (self.y.transpose() * &self.inv * &self.y)[0] + 0.5 * self.logdet + 0.5 * m * (2.0 * std::f64::consts::PI).ln()
    }
}

fn random_problem(rng: &mut ChaCha8Rng, m: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>, GpHyperparams) {
    let x: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let y: Vec<f64> = (0..m)
        .map(|i| (3.0 * x[i][0]).sin() + x[i].iter().sum::<f64>() + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let h = GpHyperparams {
        sigma_f: rng.random_range(0.5..2.0),
        lengthscales: (0..d).map(|_| rng.random_range(0.15..1.0)).collect(),
        sigma_w: rng.random_range(0.05..0.5),
    };
    (x, y, h)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn posterior_matches_dense_oracle_on_fifty_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let m = rng.random_range(1..=50);
        let (x, y, h) = random_problem(&mut rng, m, 3);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let post = fit(&data, &h).unwrap();
        assert_eq!(post.jitter(), 0.0);
        let oracle = DenseOracle::new(&x, &y, &h);
        assert!(close(post.nlml(), oracle.nlml(), 1e-8), "case {case}: nlml {} vs {}", post.nlml(), oracle.nlml());
        let sf2 = h.sigma_f * h.sigma_f;
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-0.2..1.2)).collect();
            let (mu, var) = post.predict(&q).unwrap();
            let (mu_o, var_o) = oracle.predict(&q);
            assert!(close(mu, mu_o, 1e-8), "case {case}: mu {mu} vs {mu_o}");
            assert!((var - var_o.max(0.0)).abs() <= 1e-8 * sf2.max(1.0), "case {case}: var {var} vs {var_o}");
            assert!(var >= -1e-12 && var <= sf2 + 1e-10);
        }
    }
}

#[test]
fn nlml_matches_dense_determinant_on_fifteen_point_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (x, y, h) = random_problem(&mut rng, 15, 3);
        let v = nlml(&Dataset::new(x.clone(), y.clone()).unwrap(), &h).unwrap();
        assert!(close(v, DenseOracle::new(&x, &y, &h).nlml(), 1e-8));
    }
}

#[test]
fn factor_reproduces_gram_plus_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, y, h) = random_problem(&mut rng, 30, 3);
    let post = fit(&Dataset::new(x.clone(), y).unwrap(), &h).unwrap();
    let l = post.factor();
    let llt = l.matmul(&l.transpose());
    let k = gram(&x, &h);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..30 {
        for j in 0..30 {
            let a = k[(i, j)] + if i == j { h.sigma_w * h.sigma_w } else { 0.0 };
            num += (llt[(i, j)] - a).powi(2);
            den += a * a;
        }
    }
    assert!((num / den).sqrt() <= 1e-10);
}

#[test]
fn kernel_examples() {
    let h = GpHyperparams::isotropic(1.5, 1.0, 0.1, 1);
    assert_eq!(kernel(&[0.3], &[0.3], &h).unwrap(), 2.25);
    let unit = GpHyperparams::isotropic(1.0, 1.0, 0.1, 1);
    assert!((kernel(&[0.0], &[1.0], &unit).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
    assert!((kernel(&[0.0], &[1.0], &unit).unwrap() - 0.60653).abs() < 1e-5);
    assert_eq!(kernel(&[0.0], &[1e3], &unit).unwrap(), 0.0);
    assert!(kernel(&[0.0, 1.0], &[0.0], &unit).is_err());
}

#[test]
fn single_point_interpolates() {
    let h = GpHyperparams::isotropic(1.0, 0.5, NOISE_FLOOR, 1);
    let post = fit(&Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap(), &h).unwrap();
    let (mu, var) = post.predict(&[0.0]).unwrap();
    assert!((mu - 1.0).abs() < 1e-6);
    assert!(var <= 1e-6);
}

#[test]
fn far_queries_revert_to_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (x, y, h) = random_problem(&mut rng, 20, 3);
    let post = fit(&Dataset::new(x, y).unwrap(), &h).unwrap();
    let (mu, var) = post.predict(&[1e3, -1e3, 1e3]).unwrap();
    assert!(mu.abs() < 1e-12);
    assert!((var - h.sigma_f * h.sigma_f).abs() < 1e-12);
}

#[test]
fn nlml_single_zero_target_closed_form() {
    let h = GpHyperparams::isotropic(1.3, 0.4, 0.2, 2);
    let v = nlml(&Dataset::new(vec![vec![0.1, 0.2]], vec![0.0]).unwrap(), &h).unwrap();
    let exact = 0.5 * (1.3f64 * 1.3 + 0.2 * 0.2).ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((v - exact).abs() < 1e-14);
}

#[test]
fn batch_prediction_is_bitwise_single_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, y, h) = random_problem(&mut rng, 25, 3);
    let post = fit(&Dataset::new(x, y).unwrap(), &h).unwrap();
    let qs: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
    let batch = post.predict_batch(&qs).unwrap();
    for (q, b) in qs.iter().zip(&batch) {
        let s = post.predict(q).unwrap();
        assert_eq!(s.0.to_bits(), b.0.to_bits());
        assert_eq!(s.1.to_bits(), b.1.to_bits());
    }
}

#[test]
fn symmetric_data_gives_symmetric_mean() {
    let xs = [0.2f64, 0.5, 0.9, 1.4];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for v in xs {
        for s in [-1.0, 1.0] {
            x.push(vec![s * v]);
            y.push((v * 2.0).cos());
        }
    }
    let post = fit(&Dataset::new(x, y).unwrap(), &GpHyperparams::isotropic(1.0, 0.6, 0.05, 1)).unwrap();
    for q in [0.1, 0.33, 0.7, 2.0] {
        let (a, _) = post.predict(&[q]).unwrap();
        let (b, _) = post.predict(&[-q]).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn duplicate_inputs_use_jitter_only_at_noise_floor() {
    let x = vec![vec![0.5], vec![0.5], vec![0.5]];
    let y = vec![1.0, 1.0, 1.0];
    let data = Dataset::new(x, y).unwrap();
    assert!(fit(&data, &GpHyperparams::isotropic(1.0, 0.3, 0.1, 1)).is_ok());
    // At the noise floor the Gram matrix is singular to working precision;
    // jitter rescues it and is recorded.
    let post = fit(&data, &GpHyperparams::isotropic(1.0, 0.3, NOISE_FLOOR, 1)).unwrap();
    assert!(post.jitter() > 0.0 && post.jitter() <= MAX_JITTER);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(Dataset::new(vec![vec![0.0]], vec![1.0, 2.0]).is_err());
    assert!(Dataset::new(vec![vec![f64::NAN]], vec![1.0]).is_err());
    let h = GpHyperparams::isotropic(1.0, 0.3, 0.1, 2);
    assert!(fit(&Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap(), &h).is_err());
    let bad = GpHyperparams::isotropic(-1.0, 0.3, 0.1, 1);
    assert!(fit(&Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap(), &bad).is_err());
    let post = fit(&Dataset::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap(), &h).unwrap();
    assert!(post.predict(&[0.0]).is_err());
}

fn sample_se_gp(rng: &mut ChaCha8Rng, m: usize, h: &GpHyperparams) -> Dataset {
    let x: Vec<Vec<f64>> = (0..m).map(|k| vec![k as f64 / (m - 1) as f64 * 4.0]).collect();
    let a = DMatrix::from_fn(m, m, |i, j| k_ref(&x[i], &x[j], h) + if i == j { h.sigma_w * h.sigma_w } else { 0.0 });
    let l = a.cholesky().unwrap().l();
    let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let y = l * z;
    Dataset::new(x, y.iter().copied().collect()).unwrap()
}

#[test]
fn hyperparameters_are_recovered() {
    let truth = GpHyperparams::isotropic(2.0, 0.5, 0.1, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let data = sample_se_gp(&mut rng, 60, &truth);
    let init = GpHyperparams::isotropic(1.0, 0.3, 0.05, 1);
    let fitted = fit_hyperparams(&data, &init, &HyperBounds::default()).unwrap();
    let l = fitted.lengthscales[0];
    assert!(l > 0.25 && l < 1.0, "{fitted:?}");
    assert!(nlml(&data, &fitted).unwrap() <= nlml(&data, &init).unwrap());
}

#[test]
fn optimal_init_is_never_made_worse() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (x, y, _) = random_problem(&mut rng, 25, 3);
    let data = Dataset::new(x, y).unwrap();
    let first = fit_hyperparams(&data, &GpHyperparams::isotropic(1.0, 0.3, 0.05, 3), &HyperBounds::default()).unwrap();
    let second = fit_hyperparams(&data, &first, &HyperBounds::default()).unwrap();
    assert!(nlml(&data, &second).unwrap() <= nlml(&data, &first).unwrap());
}

#[test]
fn constant_targets_fit_without_error() {
    let x: Vec<Vec<f64>> = (0..12).map(|k| vec![k as f64 / 11.0, (k * 7 % 12) as f64 / 11.0]).collect();
    let data = Dataset::new(x, vec![0.0; 12]).unwrap();
    let bounds = HyperBounds::default();
    let h = fit_hyperparams(&data, &GpHyperparams::isotropic(1.0, 0.3, 0.05, 2), &bounds).unwrap();
    assert!(h.sigma_f < 0.1, "{h:?}");
    assert!(h.sigma_f >= bounds.sigma_f.0 * (1.0 - 1e-12));
}

#[test]
fn fitting_needs_three_points() {
    let data = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
    assert!(fit_hyperparams(&data, &GpHyperparams::isotropic(1.0, 0.3, 0.05, 1), &HyperBounds::default()).is_err());
}

#[test]
fn scalers_round_trip() {
    let s = InputScaler::new(vec![150.0, 0.05, 90.0], vec![4200.0, 0.5, 900.0]).unwrap();
    let x = [2100.0, 0.3, 450.0];
    let u = s.to_unit(&x);
    assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
    let back = s.from_unit(&u);
    for (a, b) in back.iter().zip(&x) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
    assert!(InputScaler::new(vec![1.0], vec![1.0]).is_err());
    let t = TargetScaler::fit(&[1.0, 2.0, 3.0, 4.0]);
    assert!((t.inverse(t.forward(2.5)) - 2.5).abs() < 1e-15);
    assert_eq!(TargetScaler::fit(&[5.0, 5.0]).std, 1.0);
}

fn small_problem() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, GpHyperparams)> {
    (1usize..12, any::<u64>()).prop_map(|(m, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_problem(&mut rng, m, 3)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_gram_is_symmetric_psd(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, _, h) = random_problem(&mut rng, 10, 3);
        let k = gram(&x, &h);
        let dense = DMatrix::from_fn(10, 10, |i, j| k[(i, j)]);
        prop_assert_eq!(dense.clone(), dense.transpose());
        let ev = dense.symmetric_eigenvalues();
        let sf2 = h.sigma_f * h.sigma_f;
        prop_assert!(ev.iter().all(|l| *l >= -1e-10 * sf2));
    }

    #[test]
    fn prop_mean_interpolates_within_noise((x, y, h) in small_problem()) {
        let post = fit(&Dataset::new(x.clone(), y.clone()).unwrap(), &h).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (mu, _) = post.predict(xi).unwrap();
            // Loose bound: shrinkage toward the prior grows with sigma_w / sigma_f.
            prop_assert!((mu - yi).abs() <= 3.0 * h.sigma_w * yi.abs().max(1.0) / h.sigma_f.min(1.0).powi(2) + 1e-6);
        }
    }

    #[test]
    fn prop_variance_bounded_by_prior((x, y, h) in small_problem(), q in prop::collection::vec(-1.0f64..2.0, 3)) {
        let post = fit(&Dataset::new(x, y).unwrap(), &h).unwrap();
        let (_, var) = post.predict(&q).unwrap();
        prop_assert!(var >= -1e-12);
        prop_assert!(var <= h.sigma_f * h.sigma_f + 1e-10);
    }

    #[test]
    fn prop_nlml_is_finite((x, y, h) in small_problem()) {
        prop_assert!(nlml(&Dataset::new(x, y).unwrap(), &h).unwrap().is_finite());
    }
}
