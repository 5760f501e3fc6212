use curvreg::autodiff::{evaluate, jacobian, jvp, vjp, DenseMatrix};
use curvreg::estimators::{eec, eic};
use curvreg::geometry::{exact_curvature, tangent_projection, LocalGeometry};
use curvreg::models::{AutoencoderModel, Mlp, MlpSpec};
use curvreg::programs::Sphere;
use curvreg::rng;
use proptest::prelude::*;

fn net(seed: u64, input: usize, output: usize) -> (Mlp, Vec<f64>) {
    let f = Mlp::new(MlpSpec::uniform(input, 8, 2, output, seed)).unwrap();
    let theta = f.init_params();
    (f, theta)
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jvp_and_vjp_are_adjoint(seed in 0u64..1000, z in vec_strategy(2), v in vec_strategy(2), u in vec_strategy(3)) {
        let (f, theta) = net(seed, 2, 3);
        let jv = evaluate(&jvp(&f, &v).unwrap(), &z, &theta).unwrap();
        let (ujz, _) = vjp(&f, &z, &theta, &u).unwrap();
        let (a, b) = (dot(&u, &jv), dot(&ujz, &v));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn jvp_is_linear_in_direction(seed in 0u64..1000, z in vec_strategy(2), v in vec_strategy(2), w in vec_strategy(2), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let (f, theta) = net(seed, 2, 3);
        let combo: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = evaluate(&jvp(&f, &combo).unwrap(), &z, &theta).unwrap();
        let jv = evaluate(&jvp(&f, &v).unwrap(), &z, &theta).unwrap();
        let jw = evaluate(&jvp(&f, &w).unwrap(), &z, &theta).unwrap();
        for k in 0..3 {
            let rhs = a * jv[k] + b * jw[k];
            prop_assert!((lhs[k] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn tangent_projection_is_an_orthogonal_projector(seed in 0u64..1000, z in vec_strategy(2)) {
        let (f, theta) = net(seed, 2, 4);
        let t = tangent_projection(&f, &z, &theta).unwrap();
        let j = jacobian(&f, &z, &theta).unwrap();
        prop_assert!(t.matmul(&t).sub(&t).max_abs() < 1e-8);
        prop_assert!(t.sub(&t.transpose()).max_abs() < 1e-12);
        prop_assert!((t.trace() - 2.0).abs() < 1e-8);
        prop_assert!(t.matmul(&j).sub(&j).max_abs() < 1e-8 * (1.0 + j.max_abs()));
    }

    #[test]
    fn curvature_measures_are_nonnegative(seed in 0u64..1000, z in vec_strategy(2)) {
        let (f, theta) = net(seed, 2, 3);
        let r = exact_curvature(&f, &z, &theta).unwrap();
        prop_assert!(r.intrinsic >= 0.0);
        prop_assert!(r.extrinsic >= -1e-12);
    }

    #[test]
    fn sphere_curvature_scales_with_radius(radius in 0.2..5.0f64, u in 0.3..2.8f64, v in -3.0..3.0f64) {
        let r = exact_curvature(&Sphere { radius }, &[u, v], &[]).unwrap();
        let k = 1.0 / (radius * radius);
        prop_assert!((r.intrinsic - 4.0 * k * k).abs() <= 1e-6 * 4.0 * k * k);
        prop_assert!((r.extrinsic - 2.0 * k).abs() <= 1e-6 * 2.0 * k);
    }

    #[test]
    fn estimators_are_deterministic_given_a_seed(seed in 0u64..1000, z in vec_strategy(2)) {
        let (f, theta) = net(seed, 2, 3);
        let a = eic(&f, &z, &theta, &mut rng::stream(seed, 0)).unwrap();
        let b = eic(&f, &z, &theta, &mut rng::stream(seed, 0)).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let c = eec(&f, &z, &theta, &mut rng::stream(seed, 1)).unwrap();
        let d = eec(&f, &z, &theta, &mut rng::stream(seed, 1)).unwrap();
        prop_assert_eq!(c, d);
        prop_assert!(c.value >= 0.0);
    }

    #[test]
    fn batched_decoder_jets_agree_with_program_jets(seed in 0u64..1000, z in vec_strategy(2)) {
        let model = AutoencoderModel::new(MlpSpec::uniform(3, 8, 2, 2, seed), MlpSpec::uniform(2, 8, 2, 3, seed + 1)).unwrap();
        let batched = model.decoder_jets(std::slice::from_ref(&z), 3).unwrap().remove(0);
        let a = LocalGeometry::from_jet(batched).unwrap();
        let b = exact_curvature(&model.decoder, &z, &model.theta).unwrap();
        prop_assert!((a.extrinsic() - b.extrinsic).abs() <= 1e-8 * (1.0 + b.extrinsic));
        let ai = a.intrinsic().unwrap();
        prop_assert!((ai - b.intrinsic).abs() <= 1e-8 * (1.0 + b.intrinsic));
    }

    #[test]
    fn model_bytes_round_trip(seed in 0u64..1000, hidden in 1usize..6, layers in 1usize..3) {
        let model = AutoencoderModel::new(
            MlpSpec::uniform(3, hidden, layers, 2, seed),
            MlpSpec::uniform(2, hidden, layers, 3, seed + 7),
        ).unwrap();
        let bytes = model.to_bytes();
        let back = AutoencoderModel::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}

#[test]
fn linear_jacobian_is_the_matrix() {
    let a = DenseMatrix::from_vec(3, 2, vec![1.0, -2.0, 0.5, 4.0, 3.0, 0.0]);
    let f = curvreg::programs::LinearMap::new(a.clone());
    assert_eq!(jacobian(&f, &[0.3, -0.7], &[]).unwrap(), a);
}
