//! Finite-difference verification suites shared by the test-suite and the
//! `gradcheck` command: every differentiable primitive, the composite
//! layers, and a reduced end-to-end network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ArchitectureSpec, Network, Variant};
use crate::nn::{BatchNorm, BlockVariant, ConvBlock, DropBlockConfig, Pass, SpatialAttention};
use crate::tensor::gradcheck::grad_check_sampled;
use crate::tensor::ops::{batch_norm_train, channel_affine, mask_mul};
use crate::tensor::{
    activation, add, bce_loss, channel_reduce, concat_channels, conv2d, conv2d_transpose, maxpool2d, mean, mul,
    mul_channel_broadcast, scale, sum, Activation, GradCheckReport, Padding, Reduction, Tensor,
};

/// Tolerance for single primitives and layers.
pub const PRIMITIVE_TOL: f64 = 1e-4;
/// Tolerance for the end-to-end network.
pub const NETWORK_TOL: f64 = 1e-3;

#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub report: GradCheckReport,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

type Check = Box<dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + Sync>;

fn uniform(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("valid dims")
}

/// Values bounded away from zero, so ReLU kinks stay out of reach of the
/// finite-difference step.
fn off_zero(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::from_vec(dims, data).expect("valid dims")
}

/// Distinct values on a shuffled grid, so max-selection has no near ties.
fn distinct(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    use rand::seq::SliceRandom;
    let n: usize = dims.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.01).collect();
    data.shuffle(rng);
    Tensor::from_vec(dims, data).expect("valid dims")
}

/// Contracts `t` with fixed random weights so every output element
/// receives a distinct upstream gradient.
fn project(t: &Tensor<f64>, seed: u64) -> Result<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t.numel() as u64);
    let w = uniform(&mut rng, t.dims(), -1.0, 1.0);
    Ok(sum(&mul(t, &w)?))
}

fn run(name: &str, f: Check, inputs: Vec<Tensor<f64>>, tol: f64, limit: Option<usize>) -> Result<CheckOutcome> {
    Ok(CheckOutcome {
        name: name.to_string(),
        report: grad_check_sampled(f, &inputs, tol, limit)?,
    })
}

/// Every differentiable primitive on small random inputs.
pub fn primitive_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let tol = PRIMITIVE_TOL;
    let mut out = Vec::new();

    for (label, stride, padding, bias) in [
        ("conv2d 3x3 same", 1, Padding::Same, true),
        ("conv2d 3x3 same stride 2", 2, Padding::Same, false),
        ("conv2d 3x3 valid", 1, Padding::Valid, true),
    ] {
        let mut inputs = vec![uniform(r, &[2, 3, 6, 5], -1.0, 1.0), uniform(r, &[4, 3, 3, 3], -1.0, 1.0)];
        if bias {
            inputs.push(uniform(r, &[4], -1.0, 1.0));
        }
        out.push(run(
            label,
            Box::new(move |x| project(&conv2d(&x[0], &x[1], x.get(2), stride, padding)?, 1)),
            inputs,
            tol,
            None,
        )?);
    }
    out.push(run(
        "conv2d 1x1",
        Box::new(|x| project(&conv2d(&x[0], &x[1], Some(&x[2]), 1, Padding::Same)?, 2)),
        vec![uniform(r, &[2, 4, 3, 3], -1.0, 1.0), uniform(r, &[2, 4, 1, 1], -1.0, 1.0), uniform(r, &[2], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "conv2d_transpose 3x3 stride 2",
        Box::new(|x| project(&conv2d_transpose(&x[0], &x[1], Some(&x[2]), 2)?, 3)),
        vec![uniform(r, &[2, 3, 3, 4], -1.0, 1.0), uniform(r, &[3, 2, 3, 3], -1.0, 1.0), uniform(r, &[2], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "maxpool2d",
        Box::new(|x| project(&maxpool2d(&x[0])?, 4)),
        vec![distinct(r, &[2, 3, 6, 4])],
        tol,
        None,
    )?);
    for (label, kind) in [("channel max", Reduction::Max), ("channel mean", Reduction::Mean)] {
        out.push(run(
            label,
            Box::new(move |x| project(&channel_reduce(&x[0], kind)?, 5)),
            vec![distinct(r, &[2, 4, 3, 3])],
            tol,
            None,
        )?);
    }
    out.push(run(
        "concat_channels",
        Box::new(|x| project(&concat_channels(&x[0], &x[1])?, 6)),
        vec![uniform(r, &[2, 2, 3, 3], -1.0, 1.0), uniform(r, &[2, 3, 3, 3], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "relu",
        Box::new(|x| project(&activation(&x[0], Activation::Relu)?, 7)),
        vec![off_zero(r, &[2, 3, 4, 4])],
        tol,
        None,
    )?);
    out.push(run(
        "sigmoid",
        Box::new(|x| project(&activation(&x[0], Activation::Sigmoid)?, 8)),
        vec![uniform(r, &[2, 3, 4, 4], -4.0, 4.0)],
        tol,
        None,
    )?);
    let target = uniform(r, &[2, 1, 4, 4], 0.0, 1.0);
    let target = Tensor::from_vec([2, 1, 4, 4], target.data().iter().map(|v| v.round()).collect())?;
    out.push(run(
        "bce_loss",
        Box::new(move |x| bce_loss(&x[0], &target)),
        vec![uniform(r, &[2, 1, 4, 4], 0.05, 0.95)],
        tol,
        None,
    )?);
    out.push(run(
        "add",
        Box::new(|x| project(&add(&x[0], &x[1])?, 9)),
        vec![uniform(r, &[2, 3, 2, 2], -1.0, 1.0), uniform(r, &[2, 3, 2, 2], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "mul",
        Box::new(|x| project(&mul(&x[0], &x[1])?, 10)),
        vec![uniform(r, &[2, 3, 2, 2], -1.0, 1.0), uniform(r, &[2, 3, 2, 2], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "scale",
        Box::new(|x| project(&scale(&x[0], -1.7), 11)),
        vec![uniform(r, &[2, 3, 2, 2], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "sum",
        Box::new(|x| Ok(scale(&sum(&x[0]), 0.3))),
        vec![uniform(r, &[2, 3, 2, 2], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "mean",
        Box::new(|x| Ok(mean(&x[0]))),
        vec![uniform(r, &[2, 3, 2, 2], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "channel broadcast multiply",
        Box::new(|x| project(&mul_channel_broadcast(&x[0], &x[1])?, 12)),
        vec![uniform(r, &[2, 3, 4, 4], -1.0, 1.0), uniform(r, &[2, 1, 4, 4], -1.0, 1.0)],
        tol,
        None,
    )?);
    let mask: Vec<f64> = (0..2 * 3 * 16).map(|_| if r.random_bool(0.7) { 1.4 } else { 0.0 }).collect();
    out.push(run(
        "mask multiply",
        Box::new(move |x| project(&mask_mul(&x[0], mask.clone())?, 13)),
        vec![uniform(r, &[2, 3, 4, 4], -1.0, 1.0)],
        tol,
        None,
    )?);
    out.push(run(
        "batch norm (batch statistics)",
        Box::new(|x| project(&batch_norm_train(&x[0], &x[1], &x[2], 1e-3)?.0, 14)),
        vec![uniform(r, &[3, 2, 3, 3], -2.0, 2.0), uniform(r, &[2], 0.5, 1.5), uniform(r, &[2], -1.0, 1.0)],
        tol,
        None,
    )?);
    let (m, v) = (vec![0.3, -0.2], vec![0.8, 1.9]);
    out.push(run(
        "batch norm (moving statistics)",
        Box::new(move |x| project(&channel_affine(&x[0], &x[1], &x[2], &m, &v, 1e-3)?, 15)),
        vec![uniform(r, &[2, 2, 3, 3], -2.0, 2.0), uniform(r, &[2], 0.5, 1.5), uniform(r, &[2], -1.0, 1.0)],
        tol,
        None,
    )?);
    Ok(out)
}

/// Conv blocks of each kind, batch norm and spatial attention, with their
/// parameters as checked inputs.
pub fn layer_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (label, variant) in [
        ("plain conv block", BlockVariant::Plain),
        ("structured conv block", BlockVariant::Structured),
    ] {
        let block = ConvBlock::<f64>::new(&mut rng, 2, 3, variant, DropBlockConfig::default().disabled())?;
        let params: Vec<Tensor<f64>> = block
            .convs
            .iter()
            .flat_map(|c| std::iter::once(c.weight.clone()).chain(c.bias.clone()))
            .collect();
        let mut inputs = vec![uniform(&mut rng, &[3, 2, 5, 5], -1.0, 1.0)];
        inputs.extend(params.iter().map(Tensor::detach));
        out.push(run(
            label,
            Box::new(move |x| {
                let mut b = block.clone();
                for (k, conv) in b.convs.iter_mut().enumerate() {
                    conv.weight = x[1 + 2 * k].clone();
                    conv.bias = Some(x[2 + 2 * k].clone());
                }
                // both the batch-statistics and the moving-statistics paths
                let eval = project(&b.infer(&x[0])?, 20)?;
                let mut noise = ChaCha8Rng::seed_from_u64(0);
                add(&eval, &project(&b.forward(&x[0], &mut Pass::Train { rng: &mut noise })?, 21)?)
            }),
            inputs,
            PRIMITIVE_TOL,
            None,
        )?);
    }
    let bn = BatchNorm::<f64>::new(3)?;
    out.push(run(
        "batch norm layer",
        Box::new(move |x| {
            let mut b = bn.clone();
            b.gamma = x[1].clone();
            b.beta = x[2].clone();
            project(&b.forward_train(&x[0])?, 22)
        }),
        vec![
            uniform(&mut rng, &[2, 3, 3, 3], -1.0, 1.0),
            uniform(&mut rng, &[3], 0.5, 1.5),
            uniform(&mut rng, &[3], -0.5, 0.5),
        ],
        PRIMITIVE_TOL,
        None,
    )?);
    let sam = SpatialAttention::<f64>::new(&mut rng)?;
    let weight = sam.weight.detach();
    out.push(run(
        "spatial attention",
        Box::new(|x| project(&SpatialAttention::from_weight(x[1].clone())?.forward(&x[0])?, 23)),
        vec![distinct(&mut rng, &[2, 4, 8, 8]), weight],
        PRIMITIVE_TOL,
        None,
    )?);
    Ok(out)
}

/// End-to-end check of a small SA-UNet (training-mode batch norm, DropBlock
/// off) with respect to its input and every trainable parameter.
/// `limit` caps the number of elements checked per tensor.
pub fn network_check(seed: u64, base_channels: usize, size: usize, limit: Option<usize>) -> Result<CheckOutcome> {
    let spec = ArchitectureSpec::new(Variant::SAUNet)
        .with_base_channels(base_channels)
        .with_dropblock(DropBlockConfig::default().disabled());
    let net = Network::<f64>::new(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let target = Tensor::from_vec(
        [2, 1, size, size],
        (0..2 * size * size).map(|_| if rng.random_bool(0.2) { 1.0 } else { 0.0 }).collect(),
    )?;
    let mut inputs = vec![uniform(&mut rng, &[2, 3, size, size], 0.0, 1.0)];
    inputs.extend(net.trainable_parameters().into_iter().map(|(_, t)| t.detach()));
    run(
        "SA-UNet end to end",
        Box::new(move |x| {
            let mut n = net.clone();
            n.set_trainable(&x[1..])?;
            let mut noise = ChaCha8Rng::seed_from_u64(0);
            bce_loss(&n.forward(&x[0], &mut Pass::Train { rng: &mut noise })?, &target)
        }),
        inputs,
        NETWORK_TOL,
        limit,
    )
}
