use saunet::model::{
    checkpoint::{decode_checkpoint, encode_checkpoint},
    load_checkpoint, load_checkpoint_as, peek_header, save_checkpoint, ArchitectureSpec, Network, Variant,
};
use saunet::optim::AdamState;
use saunet::{DType, Error, Tensor};

fn small(variant: Variant) -> Network<f32> {
    Network::new(ArchitectureSpec::new(variant).with_base_channels(2), 4).unwrap()
}

#[test]
fn round_trip_preserves_every_tensor_and_the_optimizer() {
    let net = small(Variant::SAUNet);
    let mut opt = AdamState::<f32>::new(1e-3);
    let params = net.trainable_parameters();
    let names: Vec<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
    let mut values: Vec<Vec<f32>> = params.iter().map(|(_, t)| t.to_vec()).collect();
    let grads: Vec<Vec<f32>> = values.iter().map(|v| vec![0.5; v.len()]).collect();
    opt.apply(&names, &mut values, &grads).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&net, Some(&opt), &path).unwrap();
    let (back, back_opt) = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(back.spec(), net.spec());
    for ((na, ta, fa), (nb, tb, fb)) in net.parameters().into_iter().zip(back.parameters()) {
        assert_eq!((na, fa), (nb, fb));
        assert_eq!(ta.to_vec(), tb.to_vec());
    }
    let back_opt = back_opt.unwrap();
    assert_eq!(back_opt.step, 1);
    assert_eq!(back_opt.moments.len(), opt.moments.len());
    for (a, b) in opt.moments.iter().zip(&back_opt.moments) {
        assert_eq!((a.first.clone(), a.second.clone()), (b.first.clone(), b.second.clone()));
    }
    // a reloaded network computes identical outputs
    let x = Tensor::from_vec([1, 3, 8, 8], (0..192).map(|i| (i % 5) as f32 / 5.0).collect()).unwrap();
    assert_eq!(net.infer(&x).unwrap().to_vec(), back.infer(&x).unwrap().to_vec());
    let header = peek_header(&path).unwrap();
    assert_eq!((header.dtype, header.spec.variant), (DType::F32, Variant::SAUNet));
}

#[test]
fn encoding_is_byte_stable() {
    let net = small(Variant::Backbone);
    assert_eq!(encode_checkpoint(&net, None).unwrap(), encode_checkpoint(&net, None).unwrap());
}

#[test]
fn any_flipped_byte_is_detected() {
    let bytes = encode_checkpoint(&small(Variant::UNetSA), None).unwrap();
    for pos in [0, 5, 9, bytes.len() / 2, bytes.len() - 40, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x10;
        assert!(decode_checkpoint::<f32>(&bad).is_err(), "corruption at byte {pos} went unnoticed");
    }
    assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn mismatched_architecture_and_precision_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&small(Variant::UNet18), None, &path).unwrap();
    let err = load_checkpoint_as::<f32>(&path, &ArchitectureSpec::new(Variant::SAUNet).with_base_channels(2)).unwrap_err();
    assert!(matches!(err, Error::SpecMismatch(_)), "{err}");
    assert!(load_checkpoint_as::<f32>(&path, &ArchitectureSpec::new(Variant::UNet18).with_base_channels(2)).is_ok());
    assert!(load_checkpoint::<f64>(&path).is_err());
}
