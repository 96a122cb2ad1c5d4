//! Finite-difference checks of every analytic gradient, in f64.

mod oracles;

use heliogen_core::latent::{loss_and_latent_grad, Guidance, LatentObjective};
use heliogen_core::nn::{
    relu, relu_backward, standard_normal, vae_loss, Conv2d, ConvTranspose2d, Dense, Tensor,
    VaeModel, LATENT_DIM,
};
use heliogen_core::scene::{BoundaryCondition, SceneConfig};
use heliogen_core::seeded_rng;
use oracles::{central_difference, gradient_error, random_tensor};
use proptest::prelude::*;
use rand::Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn weighted_sum(y: &Tensor<f64>, c: &Tensor<f64>) -> f64 {
    y.data.iter().zip(&c.data).map(|(a, b)| a * b).sum()
}

/// Checks `analytic` against central differences of `f` at `count` random coordinates.
fn check(
    name: &str,
    x: &[f64],
    analytic: &[f64],
    count: usize,
    rng: &mut impl Rng,
    mut f: impl FnMut(&[f64]) -> f64,
) {
    assert_eq!(x.len(), analytic.len());
    for _ in 0..count {
        let i = rng.random_range(0..x.len());
        let numeric = central_difference(&mut f, x, i, STEP);
        let err = gradient_error(analytic[i], numeric);
        assert!(
            err < TOL,
            "{name}[{i}]: analytic {} numeric {numeric}",
            analytic[i]
        );
    }
}

#[test]
fn conv_forward_matches_reference_exactly() {
    let mut rng = seeded_rng(31, 0);
    for (cin, cout, size) in [(1, 8, 16), (8, 16, 8), (3, 1, 4)] {
        let mut layer = Conv2d::<f64>::zeros(cin, cout);
        layer.weight = random_tensor(&layer.weight.shape.clone(), 1.0, &mut rng);
        layer.bias = random_tensor(&[cout], 1.0, &mut rng);
        let x = random_tensor(&[2, size, size, cin], 1.0, &mut rng);
        let y = layer.forward(&x);
        assert_eq!(y, oracles::reference_conv(&x, &layer.weight, &layer.bias));
    }
}

#[test]
fn conv_transpose_forward_matches_reference_exactly() {
    let mut rng = seeded_rng(32, 0);
    for (cin, cout, size) in [(16, 8, 4), (8, 1, 8), (2, 3, 3)] {
        let mut layer = ConvTranspose2d::<f64>::zeros(cin, cout);
        layer.weight = random_tensor(&layer.weight.shape.clone(), 1.0, &mut rng);
        layer.bias = random_tensor(&[cout], 1.0, &mut rng);
        let x = random_tensor(&[2, size, size, cin], 1.0, &mut rng);
        let y = layer.forward(&x);
        assert_eq!(
            y,
            oracles::reference_conv_transpose(&x, &layer.weight, &layer.bias)
        );
    }
}

#[test]
fn conv_gradients() {
    let mut rng = seeded_rng(33, 0);
    let mut layer = Conv2d::<f64>::zeros(3, 4);
    layer.weight = random_tensor(&layer.weight.shape.clone(), 1.0, &mut rng);
    layer.bias = random_tensor(&[4], 1.0, &mut rng);
    let x = random_tensor(&[2, 8, 8, 3], 1.0, &mut rng);
    let c = random_tensor(&[2, 4, 4, 4], 1.0, &mut rng);
    let mut grad = Conv2d::zeros(3, 4);
    let dx = layer.backward(&x, &c, Some(&mut grad));

    let mut rng2 = seeded_rng(33, 1);
    check("conv dx", &x.data, &dx.data, 60, &mut rng2, |v| {
        weighted_sum(
            &layer.forward(&Tensor::from_vec(&x.shape, v.to_vec()).unwrap()),
            &c,
        )
    });
    check(
        "conv dw",
        &layer.weight.data,
        &grad.weight.data,
        60,
        &mut rng2,
        |v| {
            let mut l = layer.clone();
            l.weight.data.copy_from_slice(v);
            weighted_sum(&l.forward(&x), &c)
        },
    );
    check(
        "conv db",
        &layer.bias.data,
        &grad.bias.data,
        4,
        &mut rng2,
        |v| {
            let mut l = layer.clone();
            l.bias.data.copy_from_slice(v);
            weighted_sum(&l.forward(&x), &c)
        },
    );
}

#[test]
fn conv_transpose_gradients() {
    let mut rng = seeded_rng(34, 0);
    let mut layer = ConvTranspose2d::<f64>::zeros(4, 2);
    layer.weight = random_tensor(&layer.weight.shape.clone(), 1.0, &mut rng);
    layer.bias = random_tensor(&[2], 1.0, &mut rng);
    let x = random_tensor(&[2, 4, 4, 4], 1.0, &mut rng);
    let c = random_tensor(&[2, 8, 8, 2], 1.0, &mut rng);
    let mut grad = ConvTranspose2d::zeros(4, 2);
    let dx = layer.backward(&x, &c, Some(&mut grad));

    let mut rng2 = seeded_rng(34, 1);
    check("tconv dx", &x.data, &dx.data, 60, &mut rng2, |v| {
        weighted_sum(
            &layer.forward(&Tensor::from_vec(&x.shape, v.to_vec()).unwrap()),
            &c,
        )
    });
    check(
        "tconv dw",
        &layer.weight.data,
        &grad.weight.data,
        60,
        &mut rng2,
        |v| {
            let mut l = layer.clone();
            l.weight.data.copy_from_slice(v);
            weighted_sum(&l.forward(&x), &c)
        },
    );
    check(
        "tconv db",
        &layer.bias.data,
        &grad.bias.data,
        2,
        &mut rng2,
        |v| {
            let mut l = layer.clone();
            l.bias.data.copy_from_slice(v);
            weighted_sum(&l.forward(&x), &c)
        },
    );
}

#[test]
fn dense_gradients() {
    let mut rng = seeded_rng(35, 0);
    let mut layer = Dense::<f64>::zeros(12, 5);
    layer.weight = random_tensor(&[12, 5], 1.0, &mut rng);
    layer.bias = random_tensor(&[5], 1.0, &mut rng);
    let x = random_tensor(&[3, 12], 1.0, &mut rng);
    let c = random_tensor(&[3, 5], 1.0, &mut rng);
    let mut grad = Dense::zeros(12, 5);
    let dx = layer.backward(&x, &c, Some(&mut grad));

    let mut rng2 = seeded_rng(35, 1);
    check("dense dx", &x.data, &dx.data, 36, &mut rng2, |v| {
        weighted_sum(
            &layer.forward(&Tensor::from_vec(&x.shape, v.to_vec()).unwrap()),
            &c,
        )
    });
    check(
        "dense dw",
        &layer.weight.data,
        &grad.weight.data,
        60,
        &mut rng2,
        |v| {
            let mut l = layer.clone();
            l.weight.data.copy_from_slice(v);
            weighted_sum(&l.forward(&x), &c)
        },
    );
    check(
        "dense db",
        &layer.bias.data,
        &grad.bias.data,
        5,
        &mut rng2,
        |v| {
            let mut l = layer.clone();
            l.bias.data.copy_from_slice(v);
            weighted_sum(&l.forward(&x), &c)
        },
    );
}

#[test]
fn relu_gradient() {
    let mut rng = seeded_rng(36, 0);
    // Keep values away from the kink.
    let mut x = random_tensor(&[50], 1.0, &mut rng);
    for v in x.data.iter_mut() {
        if v.abs() < 1e-3 {
            *v = 0.5;
        }
    }
    let c = random_tensor(&[50], 1.0, &mut rng);
    let dx = relu_backward(&x, &c);
    check("relu", &x.data, &dx.data, 50, &mut rng, |v| {
        weighted_sum(&relu(&Tensor::from_vec(&[50], v.to_vec()).unwrap()), &c)
    });
}

fn small_model(seed: u64) -> VaeModel<f64> {
    VaeModel::<f32>::init(&mut seeded_rng(seed, 0)).cast::<f64>()
}

fn random_images(b: usize, rng: &mut impl Rng) -> Tensor<f64> {
    let data = (0..b * 256).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor::from_vec(&[b, 16, 16, 1], data).unwrap()
}

#[test]
fn full_vae_loss_gradients() {
    let model = small_model(37);
    let mut rng = seeded_rng(37, 1);
    let x = random_images(3, &mut rng);
    let eps = standard_normal::<f64>(&[3, LATENT_DIM], &mut rng);
    let (_, grad) = model.loss_and_grads_with_noise(&x, &eps).unwrap();

    for (k, name) in VaeModel::<f64>::PARAM_NAMES.iter().enumerate() {
        let base = model.parameters()[k].data.clone();
        let analytic = grad.parameters()[k].data.clone();
        check(name, &base, &analytic, 12, &mut rng, |v| {
            let mut m = model.clone();
            m.parameters_mut()[k].data.copy_from_slice(v);
            m.loss_with_noise(&x, &eps).unwrap().total
        });
    }
}

fn latent_objective(guided: bool) -> LatentObjective {
    let cfg = SceneConfig::default();
    let bc = BoundaryCondition {
        east: Some(1),
        south: Some(3),
        west: None,
    };
    let guidance = guided.then(|| {
        let mut rng = seeded_rng(38, 9);
        let h = oracles::random_heightmap(&mut rng, cfg.height_cap);
        Guidance::new(&h, 0.7, &cfg).unwrap()
    });
    LatentObjective::new(&bc, guidance, &cfg).unwrap()
}

#[test]
fn latent_gradients_boundary_and_guided() {
    let model = small_model(38);
    for guided in [false, true] {
        let objective = latent_objective(guided);
        let mut rng = seeded_rng(38, guided as u64);
        let z: Vec<f64> = standard_normal::<f64>(&[1, LATENT_DIM], &mut rng).data;
        let (_, g) = loss_and_latent_grad(&model, &objective, &z).unwrap();
        let name = if guided { "guided dz" } else { "boundary dz" };
        for i in 0..LATENT_DIM {
            let numeric = central_difference(
                &mut |v: &[f64]| loss_and_latent_grad(&model, &objective, v).unwrap().0,
                &z,
                i,
                STEP,
            );
            let err = gradient_error(g[i], numeric);
            assert!(
                err < TOL,
                "{name}[{i}]: analytic {} numeric {numeric}",
                g[i]
            );
        }
    }
}

#[test]
fn batch_members_are_processed_independently() {
    let model = VaeModel::<f32>::init(&mut seeded_rng(39, 0));
    let mut rng = seeded_rng(39, 1);
    let x: Tensor<f32> = random_images(4, &mut rng).cast();
    let (mu, lv) = model.encode(&x).unwrap();
    let logits = model.decode(&mu).unwrap();
    for n in 0..4 {
        let xi = x.rows(n, 1);
        let (mi, li) = model.encode(&xi).unwrap();
        assert_eq!(mi.data, mu.rows(n, 1).data);
        assert_eq!(li.data, lv.rows(n, 1).data);
        assert_eq!(model.decode(&mi).unwrap().data, logits.rows(n, 1).data);
    }
    // Permuting the batch permutes the outputs.
    let perm = [2usize, 0, 3, 1];
    let mut data = Vec::new();
    for &p in &perm {
        data.extend_from_slice(&x.rows(p, 1).data);
    }
    let (mp, _) = model
        .encode(&Tensor::from_vec(&x.shape, data).unwrap())
        .unwrap();
    for (i, &p) in perm.iter().enumerate() {
        assert_eq!(mp.rows(i, 1).data, mu.rows(p, 1).data);
    }
}

proptest! {
    #[test]
    fn kl_term_is_non_negative(
        mu in prop::collection::vec(-30.0f64..30.0, LATENT_DIM),
        lv in prop::collection::vec(-20.0f64..20.0, LATENT_DIM),
    ) {
        let mu = Tensor::from_vec(&[1, LATENT_DIM], mu).unwrap();
        let lv = Tensor::from_vec(&[1, LATENT_DIM], lv).unwrap();
        let x = Tensor::<f64>::zeros(&[1, 16, 16, 1]);
        let logits = Tensor::<f64>::zeros(&[1, 16, 16, 1]);
        let l = vae_loss(&x, &logits, &mu, &lv);
        prop_assert!(l.kl >= 0.0);
        prop_assert!((l.recon - 64.0).abs() < 1e-12);
    }
}
