use probshape::data::{generate, SynthConfig};
use probshape::loss::{baseline_loss, coordinate_mse};
use probshape::encoder::{Head, Image, Mode, Network, NetworkSpec};
use probshape::rng::substream;
use probshape::shape_model::{covariance_spectrum, PcaShapeModel};
use probshape::Error;
use probshape_oracles as oracle;
use rand::Rng;

fn random_set(seed: u64, n: usize, v: usize) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, &[]);
    (0..n)
        .map(|_| (0..2 * v).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect()
}

/// Explicit `D x D` sample covariance with divisor `N - 1`.
fn explicit_covariance(set: &[Vec<f64>]) -> Vec<f64> {
    oracle::sample_covariance(set).1
}

#[test]
fn components_are_orthonormal_and_sorted() {
    let set = random_set(1, 30, 8);
    let model = PcaShapeModel::fit(&set, 10).unwrap();
    assert!(model.orthonormality_error() < 1e-10);
    let e = model.eigenvalues();
    assert!(e.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn full_rank_round_trip() {
    let set = random_set(2, 10, 5);
    let model = PcaShapeModel::fit(&set, 9).unwrap();
    for y in &set {
        let back = model.decode(&model.project(y).unwrap(), [0.0, 0.0]).unwrap();
        let err = back.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }
}

#[test]
fn eigenpairs_satisfy_the_explicit_covariance() {
    let set = random_set(3, 25, 6);
    let model = PcaShapeModel::fit(&set, 6).unwrap();
    let cov = explicit_covariance(&set);
    let d = model.dim();
    for k in 0..6 {
        let u = model.component(k);
        let lambda = model.eigenvalues()[k];
        for r in 0..d {
            let cu: f64 = (0..d).map(|c| cov[r * d + c] * u[c]).sum();
            assert!((cu - lambda * u[r]).abs() < 1e-9 * lambda.max(1.0));
        }
    }
    let oracle_eigs = oracle::symmetric_eigenvalues(&cov, d);
    let ours = covariance_spectrum(&set).unwrap();
    for (a, b) in ours.iter().zip(&oracle_eigs) {
        assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn mean_matches_column_average() {
    let set = random_set(4, 12, 4);
    let model = PcaShapeModel::fit(&set, 3).unwrap();
    let (mean, _) = oracle::sample_covariance(&set);
    for (a, b) in model.mean().iter().zip(&mean) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn rank_errors() {
    let set = random_set(5, 4, 5);
    assert!(matches!(
        PcaShapeModel::fit(&set, 4),
        Err(Error::RankTooLow { requested: 4, achievable: 3 })
    ));
    let mixed = vec![vec![0.0; 6], vec![1.0; 8]];
    assert!(PcaShapeModel::fit(&mixed, 1).is_err());
}

#[test]
fn decoded_prior_samples_have_model_covariance() {
    let set = random_set(6, 12, 3);
    let model = PcaShapeModel::fit(&set, 3).unwrap();
    let mut rng = substream(7, &[]);
    let samples: Vec<Vec<f64>> = (0..100_000)
        .map(|_| {
            let z: Vec<f64> = probshape::rng::standard_normals(&mut rng, 3);
            model.decode(&z, [0.0, 0.0]).unwrap()
        })
        .collect();
    let m = oracle::empirical_moments(&samples);
    let d = model.dim();
    let mut misses = 0;
    for i in 0..d {
        for j in i..d {
            let want: f64 = (0..3)
                .map(|k| model.eigenvalues()[k] * model.component(k)[i] * model.component(k)[j])
                .sum();
            if (m.cov[i * d + j] - want).abs() >= 3.0 * m.cov_se[i * d + j] {
                misses += 1;
            }
        }
    }
    assert_eq!(misses, 0);
}

/// Circles of varying radius and centre: translation and scale dominate.
#[test]
fn circle_family_is_low_dimensional() {
    let v = 50;
    let mut rng = substream(8, &[]);
    let set: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let (cx, cy, r) = (
                rng.random_range(20.0..40.0),
                rng.random_range(20.0..40.0),
                rng.random_range(8.0..16.0),
            );
            (0..v)
                .flat_map(|j| {
                    let t = std::f64::consts::TAU * j as f64 / v as f64;
                    [cx + r * t.cos(), cy + r * t.sin()]
                })
                .collect()
        })
        .collect();
    let spectrum = covariance_spectrum(&set).unwrap();
    let total: f64 = spectrum.iter().sum();
    let top3: f64 = spectrum[..3].iter().sum();
    assert!(top3 / total > 1.0 - 1e-10, "{}", top3 / total);
}

#[test]
fn eight_components_explain_synthetic_rings() {
    let cfg = SynthConfig {
        count: 200,
        ..SynthConfig::with_seed(11)
    };
    let ds = generate(&cfg).unwrap();
    let spectrum = covariance_spectrum(&ds.contours("train").unwrap()).unwrap();
    let total: f64 = spectrum.iter().sum();
    let top8: f64 = spectrum[..8].iter().sum();
    assert!(top8 / total >= 0.99, "{}", top8 / total);
}

#[test]
fn det_pca_with_projected_weights_leaves_truncation_residual() {
    let (side, v, k) = (6, 5, 3);
    let set = random_set(9, 12, v);
    let model = PcaShapeModel::fit(&set, k).unwrap();
    let y = &set[0];
    let z = model.project(y).unwrap();
    // zero weights and a bias equal to the projected weights: the network
    // outputs exactly [z, 0, 0] for any input
    let spec = NetworkSpec::mlp(side, side, &[], Head::for_mode(Mode::DetPca, k, v));
    let mut net = Network::build(spec, 1).unwrap();
    let n = net.params().len();
    net.params_mut()[n - 2].value.data_mut().fill(0.0);
    let bias = net.params_mut()[n - 1].value.data_mut();
    bias.fill(0.0);
    bias[..k].copy_from_slice(&z);
    let img = Image::standardized(side, side, &vec![1.0; side * side], 1.0).unwrap();
    let loss = baseline_loss(&[(&img, y.as_slice())], &net, &model, Mode::DetPca).unwrap();
    let recon = model.decode(&z, [0.0, 0.0]).unwrap();
    let residual = coordinate_mse(&recon, y).unwrap();
    assert!(residual > 0.0);
    assert!((loss - residual).abs() < 1e-12 * residual.max(1.0));
}

#[test]
fn single_precision_model_tracks_double() {
    let set = random_set(10, 20, 5);
    let model = PcaShapeModel::fit(&set, 4).unwrap();
    let single: PcaShapeModel<f32> = model.cast();
    let z = [0.5, -1.0, 0.25, 2.0];
    let a = model.decode(&z, [1.0, -2.0]).unwrap();
    let b = single.decode(&z.map(|x| x as f32), [1.0, -2.0]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - *y as f64).abs() < 1e-4);
    }
}

#[test]
fn perfect_predictor_scores_full_overlap() {
    let ds = generate(&SynthConfig {
        count: 10,
        ..SynthConfig::with_seed(12)
    })
    .unwrap();
    let reference = ds.items[0].contour.clone();
    let v = reference.len() / 2;
    let model = PcaShapeModel::fit(&ds.items.iter().map(|i| i.contour.clone()).collect::<Vec<_>>(), 3).unwrap();
    let spec = NetworkSpec::mlp(4, 4, &[], Head::for_mode(Mode::DirectVertex, 3, v));
    let mut net = Network::build(spec, 2).unwrap();
    let n = net.params().len();
    net.params_mut()[n - 2].value.data_mut().fill(0.0);
    net.params_mut()[n - 1].value.data_mut().copy_from_slice(&reference);
    let img = Image::standardized(4, 4, &[0.0; 16], 1.0).unwrap();
    let examples: Vec<_> = (0..3).map(|_| (img.clone(), reference.clone())).collect();
    let s = probshape::trainer::evaluate(&net, &examples, &model).unwrap();
    assert_eq!((s.dice_mean, s.dice_std), (1.0, 0.0));
    assert_eq!((s.rmse_mean, s.rmse_std), (0.0, 0.0));
}
