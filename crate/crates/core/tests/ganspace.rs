//! Direction fitting on generators whose first layer is linear on the sampled
//! latents, where the principal axes and their latent images are known.

use speakgen::gan::{GeneratorParams, ResMlp};
use speakgen::ganspace::{edit_latent, fit_generator_directions, pca_projection, single_offset};
use speakgen::ndmath::{Matrix, SeededRng};

const SCALES: [f32; 6] = [5.0, 4.0, 3.0, 2.0, 1.0, 0.5];

/// `a = z W + b` with `W = [diag(SCALES) | 0]` and a bias large enough that
/// the leaky rectifier never leaves its identity branch.
fn linear_generator(hidden: usize) -> GeneratorParams {
    let d = SCALES.len();
    let mut net = ResMlp::init(d, hidden, 1, 64, &mut SeededRng::new(1));
    let mut w = Matrix::zeros(d, hidden);
    for (i, &s) in SCALES.iter().enumerate() {
        w.set(i, i, s);
    }
    net.input.weight = w;
    net.input.bias = Matrix::filled(1, hidden, 100.0);
    GeneratorParams(net)
}

#[test]
fn recovers_axes_variances_and_latent_images() {
    let g = linear_generator(10);
    let basis = fit_generator_directions(&g, 20_000, 3, &mut SeededRng::new(2)).unwrap();
    for k in 0..3 {
        let v = basis.components.column(k);
        // Component k is ±e_k in activation space.
        assert!((v[k].abs() - 1.0).abs() < 0.01, "component {k}: {v:?}");
        let expected_var = (SCALES[k] * SCALES[k]) as f64;
        assert!(
            (basis.variances[k] as f64 / expected_var - 1.0).abs() < 0.05,
            "variance {k}: {}",
            basis.variances[k]
        );
        // A unit step along x_k is a step of 1/s_k along z_k.
        let u = basis.direction(k).unwrap();
        let sign = v[k].signum();
        for (i, &ui) in u.iter().enumerate() {
            let want = if i == k { sign / SCALES[k] } else { 0.0 };
            assert!((ui - want).abs() < 0.01, "U[{i},{k}] = {ui}, want {want}");
        }
    }
    assert!(basis.variances.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn edits_shift_principal_coordinates_exactly() {
    let g = linear_generator(10);
    let basis = fit_generator_directions(&g, 2_000, 4, &mut SeededRng::new(5)).unwrap();
    let mut rng = SeededRng::new(6);
    for _ in 0..20 {
        let z = rng.normal_vec(SCALES.len());
        let x: Vec<f32> = (0..4).map(|_| (rng.normal() * 3.0) as f32).collect();
        let edited = edit_latent(&z, &basis, &x).unwrap();
        let before = pca_projection(&g, &basis, &Matrix::row_vector(&z).unwrap()).unwrap();
        let after = pca_projection(&g, &basis, &Matrix::row_vector(&edited).unwrap()).unwrap();
        for k in 0..4 {
            let shift = after.get(0, k) - before.get(0, k);
            assert!((shift - x[k]).abs() < 1e-2, "direction {k}: moved {shift}, asked {}", x[k]);
        }
    }
}

#[test]
fn single_offset_moves_one_coordinate() {
    let g = linear_generator(8);
    let basis = fit_generator_directions(&g, 1_000, 3, &mut SeededRng::new(3)).unwrap();
    let z = vec![0.1, -0.2, 0.3, 0.0, 0.5, -1.0];
    let edited = edit_latent(&z, &basis, &single_offset(&basis, 1, 2.0).unwrap()).unwrap();
    let d = pca_projection(&g, &basis, &Matrix::row_vector(&edited).unwrap())
        .unwrap()
        .sub(&pca_projection(&g, &basis, &Matrix::row_vector(&z).unwrap()).unwrap())
        .unwrap();
    assert!((d.get(0, 1) - 2.0).abs() < 1e-3);
    assert!(d.get(0, 0).abs() < 1e-3 && d.get(0, 2).abs() < 1e-3);
    assert!(single_offset(&basis, 3, 1.0).is_err());
}
