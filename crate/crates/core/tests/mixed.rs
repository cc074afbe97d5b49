mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use conicsparse::bspline::bspline_basis;
use conicsparse::em::EmConfig;
use conicsparse::mixed::*;
use conicsparse::prior::SpikeSlabHyper;
use conicsparse::shapes::{build_constraint_matrix, Shape, ShapeSpec};
use conicsparse::{Cone, Mat};

fn random_model(rng: &mut ChaCha8Rng, n: usize) -> MixedModel {
    let basis = bspline_basis(n, n, 3).unwrap().matrix().clone();
    let l = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.5);
    let sigma = &l * l.transpose();
    MixedModel { f_hat: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), sigma: Mat::from_nalgebra(&sigma), sigma2: 0.3, basis }
}

fn bump_cone(n: usize) -> Cone {
    let spec = ShapeSpec::new(n).regime(1, n, Shape::Concave).boundary(1, Shape::Nonneg).boundary(n, Shape::Nonneg);
    build_constraint_matrix(&spec).unwrap()
}

fn panel(rng: &mut ChaCha8Rng, f: &[f64], subjects: usize, effect: f64, noise: f64) -> LongDataset {
    let n = f.len();
    let values = (0..subjects)
        .map(|_| {
            let shift: f64 = rng.sample::<f64, _>(StandardNormal) * effect;
            (0..n).map(|j| f[j] + shift + noise * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    LongDataset::from_matrix((0..subjects).map(|i| format!("s{i}")).collect(), values).unwrap()
}

#[test]
fn posterior_matches_joint_gaussian_conditioning() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..10 {
        let model = random_model(&mut rng, 6);
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (u, m, c) = random_effect_posterior(&y, &model.f_hat, &model).unwrap();
        let (om, oc) = common::gaussian_conditioning(
            &model.sigma.to_nalgebra(),
            &model.basis.to_nalgebra(),
            model.sigma2,
            &DVector::from_vec(y.clone()),
            &DVector::from_vec(model.f_hat.clone()),
        );
        for k in 0..6 {
            assert!((m[k] - om[k]).abs() < 1e-8);
            for l in 0..6 {
                assert!((c.get(k, l) - oc[(k, l)]).abs() < 1e-8);
            }
        }
        let bu = model.basis.mul_vec(&m);
        assert!(u.iter().zip(&bu).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn loglik_matches_naive_inverse_and_is_exchangeable() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let model = random_model(&mut rng, 5);
    let ys: Vec<Vec<f64>> = (0..7).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let data = LongDataset::from_matrix((0..7).map(|i| i.to_string()).collect(), ys.clone()).unwrap();
    let b = model.basis.to_nalgebra();
    let v = &b * model.sigma.to_nalgebra() * b.transpose() + DMatrix::identity(5, 5) * model.sigma2;
    let ll = marginal_loglik(&data, &model).unwrap();
    assert!((ll - common::naive_loglik(&ys, &model.f_hat, &v)).abs() < 1e-8 * ll.abs());
    let reversed = data.subset(&(0..7).rev().collect::<Vec<_>>());
    assert!((marginal_loglik(&reversed, &model).unwrap() - ll).abs() < 1e-9);
}

#[test]
fn small_noise_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let mut model = random_model(&mut rng, 5);
    model.sigma = Mat::identity(5);
    model.sigma2 = 1e-10;
    let y = vec![1.0, 0.5, -0.2, 0.3, 2.0];
    let (u, _, _) = random_effect_posterior(&y, &model.f_hat, &model).unwrap();
    for j in 0..5 {
        assert!((u[j] - (y[j] - model.f_hat[j])).abs() < 1e-6);
    }
}

#[test]
fn restricted_fit_is_feasible_and_sigma_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let n = 8;
    let f: Vec<f64> = (0..n).map(|j| 2.0 - ((j as f64 - 3.5) / 2.0).powi(2) * 0.3).collect();
    let data = panel(&mut rng, &f, 40, 0.5, 0.5);
    let cone = bump_cone(n);
    let design = RestrictedDesign::new(&cone, None).unwrap();
    let config = MixedConfig::new(EmConfig::new(SpikeSlabHyper::new(design.cliques().len())));
    let fit = fit_mixed_with(&data, &design, &config).unwrap();
    assert!(cone.contains(&fit.model.f_hat, &1e-8));
    assert!(fit.sigma_min_eigenvalues.iter().all(|e| *e >= -1e-10));
    let mse: f64 = fit.model.f_hat.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    assert!(mse < 0.05, "{mse}");
}

#[test]
fn identity_spline_matches_plain_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(65);
    let n = 6;
    let f = vec![0.5, 1.5, 2.0, 2.1, 1.6, 0.4];
    let data = panel(&mut rng, &f, 30, 0.3, 0.4);
    let cone = bump_cone(n);
    let design = RestrictedDesign::new(&cone, None).unwrap();
    let mut config = MixedConfig::new(EmConfig::new(SpikeSlabHyper::new(design.cliques().len())));
    // degree-1 basis with J = n is the identity
    config.degree = 1;
    let plain = fit_mixed(&data, &cone, false, &config).unwrap();
    let spline = fit_mixed(&data, &cone, true, &config).unwrap();
    for (a, b) in plain.model.f_hat.iter().zip(&spline.model.f_hat) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn unrestricted_balanced_fit_is_the_sample_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let data = panel(&mut rng, &[1.0, 2.0, 3.0, 2.0, 1.0], 25, 1.0, 0.5);
    let fit = fit_unrestricted(&data, false, &MixedConfig::new(EmConfig::new(SpikeSlabHyper::new(1)))).unwrap();
    for (a, b) in fit.model.f_hat.iter().zip(data.mean_curve()) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(fit.converged);
}

#[test]
fn unrestricted_training_loglik_dominates() {
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let f = vec![0.5, 1.5, 2.0, 2.1, 1.6, 0.4];
    let data = panel(&mut rng, &f, 30, 0.3, 0.4);
    let cone = bump_cone(6);
    let design = RestrictedDesign::new(&cone, None).unwrap();
    let r = fit_mixed_with(&data, &design, &MixedConfig::new(EmConfig::new(SpikeSlabHyper::new(design.cliques().len())))).unwrap();
    let u = fit_unrestricted(&data, false, &MixedConfig::new(EmConfig::new(SpikeSlabHyper::new(1)))).unwrap();
    let (lr, lu) = (marginal_loglik(&data, &r.model).unwrap(), marginal_loglik(&data, &u.model).unwrap());
    // recorded, with slack for the prior's pull on the restricted fit
    assert!(lu >= lr - 1e-3 * lr.abs(), "{lu} vs {lr}");
}

#[test]
fn split_is_seeded_and_disjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(68);
    let data = panel(&mut rng, &[0.0; 4], 20, 1.0, 1.0);
    let (a, b) = data.split(12, 8, 3).unwrap();
    let (c, _) = data.split(12, 8, 3).unwrap();
    assert_eq!(a, c);
    assert!(a.subjects().iter().all(|s| !b.subjects().contains(s)));
    assert!(data.split(15, 8, 0).is_err());
}
