use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmheal::nn::{checkpoint, Activation, DenseNet, DenseSpec, Matrix, Parameters, ParametersExt};
use swarmheal::Error;

mod common;

use common::random_matrix;

#[test]
fn gradients_match_central_differences_on_random_nets() {
    let r = common::gradient_check(100, 1e-5, 2024);
    assert_eq!(r.nets, 100);
    assert!(r.worst < 1e-4, "worst relative error {} at {:?}", r.worst, r.worst_at);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = DenseNet::new(&DenseSpec::new(&[4, 5, 2], &[Activation::Tanh, Activation::Sigmoid]), &mut rng);
    let x = random_matrix(&mut rng, 7, 4);
    let (_, tape) = net.forward(&x).unwrap();
    let mut g = net.zeros_like();
    let dx = net.backward(&tape, &Matrix::zeros(7, 2), &mut g).unwrap();
    assert!(g.to_flat().iter().all(|v| *v == 0.0));
    assert!(dx.data().iter().all(|v| *v == 0.0));
}

#[test]
fn identity_layer_passes_input_through() {
    let mut net = DenseNet::zeros(&DenseSpec::new(&[3, 3], &[Activation::Identity]));
    net.layers_mut()[0].weight = Matrix::identity(3);
    let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]);
    assert_eq!(net.infer(&x).unwrap(), x);
}

#[test]
fn linear_weight_gradient_is_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = DenseNet::new(&DenseSpec::new(&[3, 2], &[Activation::Identity]), &mut rng);
    let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]);
    let dy = Matrix::from_rows(&[[0.5, -1.0]]);
    let (_, tape) = net.forward(&x).unwrap();
    let mut g = net.zeros_like();
    net.backward(&tape, &dy, &mut g).unwrap();
    let gw = &g.layers()[0].weight;
    for i in 0..3 {
        for j in 0..2 {
            assert_eq!(gw[(i, j)], x[(0, i)] * dy[(0, j)]);
        }
    }
}

#[test]
fn stale_tape_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = DenseNet::new(&DenseSpec::new(&[2, 2], &[Activation::Relu]), &mut rng);
    let x = Matrix::from_rows(&[[1.0, 1.0]]);
    let (_, tape) = net.forward(&x).unwrap();
    net.fill(0.1);
    let mut g = net.zeros_like();
    assert!(matches!(net.backward(&tape, &Matrix::zeros(1, 2), &mut g), Err(Error::Contract(_))));
    let other = DenseNet::new(&DenseSpec::new(&[2, 2], &[Activation::Relu]), &mut rng);
    let (_, foreign) = other.forward(&x).unwrap();
    assert!(net.backward(&foreign, &Matrix::zeros(1, 2), &mut g).is_err());
}

#[test]
fn width_mismatch_is_a_contract_error() {
    let net = DenseNet::zeros(&DenseSpec::new(&[3, 1], &[Activation::Identity]));
    assert!(matches!(net.forward(&Matrix::zeros(1, 2)), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = DenseSpec::new(&[5, 7, 3], &[Activation::Relu, Activation::Softplus]);
    let net = DenseNet::new(&spec, &mut rng);
    let manifest = serde_json::to_value(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    checkpoint::save(&path, &net, &manifest, serde_json::json!({"epoch": 3})).unwrap();
    let mut back = DenseNet::zeros(&spec);
    let header = checkpoint::load_into(&path, &mut back, &manifest).unwrap();
    assert_eq!(header.param_count, spec.param_count());
    assert_eq!(
        net.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        back.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn corrupt_or_foreign_checkpoints_load_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = DenseSpec::new(&[2, 2], &[Activation::Tanh]);
    let net = DenseNet::new(&spec, &mut rng);
    let manifest = serde_json::to_value(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    checkpoint::save(&path, &net, &manifest, serde_json::Value::Null).unwrap();

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[20] ^= 0xff;
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, &bytes).unwrap();
    let mut target = DenseNet::zeros(&spec);
    assert!(matches!(checkpoint::load_into(&bad, &mut target, &manifest), Err(Error::Incompatible { .. })));
    assert!(target.to_flat().iter().all(|v| *v == 0.0));

    let other_spec = DenseSpec::new(&[2, 2], &[Activation::Relu]);
    let other_manifest = serde_json::to_value(&other_spec).unwrap();
    let mut other = DenseNet::zeros(&other_spec);
    assert!(matches!(checkpoint::load_into(&path, &mut other, &other_manifest), Err(Error::Incompatible { .. })));

    let truncated = dir.path().join("short.ckpt");
    std::fs::write(&truncated, &std::fs::read(&path).unwrap()[..40]).unwrap();
    assert!(checkpoint::read(&truncated).is_err());
}

#[test]
fn parameter_names_are_stable() {
    let net = DenseNet::zeros(&DenseSpec::new(&[2, 3, 1], &[Activation::Relu, Activation::Identity]));
    let mut names = Vec::new();
    net.visit("actor.head", &mut |n, _, _| names.push(n.to_owned()));
    assert_eq!(names, ["actor.head.0.weight", "actor.head.0.bias", "actor.head.1.weight", "actor.head.1.bias"]);
}
