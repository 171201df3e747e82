use saunet::model::{ArchitectureSpec, Network, Variant};
use saunet::nn::{DropBlockConfig, Pass};
use saunet::Tensor;

// Reference totals: (total, trainable, non-trainable).
const REFERENCE: [(Variant, usize, usize, usize); 5] = [
    (Variant::UNet18, 535_793, 535_793, 0),
    (Variant::UNetSA, 535_891, 535_891, 0),
    (Variant::SDUNet, 535_793, 535_793, 0),
    (Variant::Backbone, 538_609, 537_201, 1_408),
    (Variant::SAUNet, 538_707, 537_299, 1_408),
];

#[test]
fn parameter_counts_match_reference_table() {
    for (variant, total, trainable, frozen) in REFERENCE {
        let r = Network::<f32>::new(ArchitectureSpec::new(variant), 0).unwrap().count_params();
        assert_eq!((r.total, r.trainable, r.non_trainable), (total, trainable, frozen), "{variant}");
    }
}

#[test]
fn deltas_are_attributable_to_layers() {
    let count = |v| Network::<f32>::new(ArchitectureSpec::new(v), 0).unwrap().count_params();
    let (plain, sa, backbone, full) = (
        count(Variant::UNet18),
        count(Variant::UNetSA),
        count(Variant::Backbone),
        count(Variant::SAUNet),
    );
    assert_eq!(sa.count_matching("sam", None), 98);
    assert_eq!(sa.total - plain.total, sa.count_matching("sam", None));
    assert_eq!(full.total - backbone.total, full.count_matching("sam", None));
    // moving mean and variance: two per channel of every normalized conv
    let frozen: usize = full.per_layer.iter().filter(|r| !r.trainable).map(|r| r.count).sum();
    assert_eq!(frozen, 1_408);
    assert!(full.per_layer.iter().filter(|r| !r.trainable).all(|r| r.name.contains(".bn")));
    // the trainable half of batch norm (gamma, beta) accounts for the rest
    assert_eq!(backbone.trainable - plain.trainable, 1_408);
}

#[test]
fn same_seed_same_weights() {
    let a = Network::<f32>::new(ArchitectureSpec::new(Variant::SAUNet), 9).unwrap();
    let b = Network::<f32>::new(ArchitectureSpec::new(Variant::SAUNet), 9).unwrap();
    let c = Network::<f32>::new(ArchitectureSpec::new(Variant::SAUNet), 10).unwrap();
    let data = |n: &Network<f32>| n.parameters().into_iter().flat_map(|(_, t, _)| t.to_vec()).collect::<Vec<_>>();
    assert_eq!(data(&a), data(&b));
    assert_ne!(data(&a), data(&c));
}

#[test]
fn output_is_a_probability_map_of_input_size() {
    for variant in Variant::LADDER {
        let net = Network::<f32>::new(ArchitectureSpec::new(variant).with_base_channels(4), 1).unwrap();
        let x = Tensor::from_vec([2, 3, 16, 24], (0..2 * 3 * 16 * 24).map(|i| (i % 13) as f32 / 13.0).collect()).unwrap();
        let p = net.infer(&x).unwrap();
        assert_eq!(p.dims(), &[2, 1, 16, 24]);
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        // evaluation is deterministic and leaves the network unchanged
        let mut net2 = net.clone();
        assert_eq!(net2.forward(&x, &mut Pass::Eval).unwrap().to_vec(), p.to_vec());
    }
}

#[test]
fn rejects_sizes_not_divisible_by_eight() {
    let net = Network::<f32>::new(ArchitectureSpec::new(Variant::UNet18).with_base_channels(2), 1).unwrap();
    assert!(net.infer(&Tensor::zeros([1, 3, 12, 16]).unwrap()).is_err());
    assert!(net.infer(&Tensor::zeros([1, 1, 16, 16]).unwrap()).is_err());
}

#[test]
fn training_pass_updates_moving_statistics_only_for_normalized_variants() {
    let x = Tensor::from_vec([2, 3, 8, 8], (0..384).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
    for variant in [Variant::UNet18, Variant::SAUNet] {
        let spec = ArchitectureSpec::new(variant)
            .with_base_channels(2)
            .with_dropblock(DropBlockConfig::new(1, 0.1).unwrap());
        let mut net = Network::<f32>::new(spec, 1).unwrap();
        let before: Vec<Vec<f32>> = net.parameters().into_iter().filter(|p| !p.2).map(|p| p.1.to_vec()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        net.forward(&x, &mut Pass::Train { rng: &mut rng }).unwrap();
        let after: Vec<Vec<f32>> = net.parameters().into_iter().filter(|p| !p.2).map(|p| p.1.to_vec()).collect();
        assert_eq!(before.is_empty(), variant == Variant::UNet18);
        if !before.is_empty() {
            assert_ne!(before, after);
        }
    }
}

use rand::SeedableRng;
