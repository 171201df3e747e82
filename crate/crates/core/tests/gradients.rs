use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saunet::tensor::{conv2d, conv2d_transpose, Padding, Tensor};
use saunet::verify::{layer_suite, network_check, primitive_suite, CheckOutcome};

fn assert_all(outcomes: &[CheckOutcome]) {
    for o in outcomes {
        assert!(
            o.passed(),
            "{}: max relative error {:.3e} above {:.0e}",
            o.name,
            o.report.max_rel_error(),
            o.report.tol
        );
    }
}

#[test]
fn every_primitive_matches_finite_differences() {
    let outcomes = primitive_suite(7).unwrap();
    assert!(outcomes.len() >= 20);
    assert_all(&outcomes);
}

#[test]
fn layers_match_finite_differences() {
    assert_all(&layer_suite(8).unwrap());
}

#[test]
fn small_network_matches_finite_differences() {
    let t = std::time::Instant::now();
    let o = network_check(3, 4, 16, Some(64)).unwrap();
    eprintln!("{} {:.3e} {:?}", o.name, o.report.max_rel_error(), t.elapsed());
    assert_all(&[o]);
}

fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

#[test]
fn transpose_conv_is_the_adjoint_of_strided_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let (n, cin, cout) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
        let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
        let k = [1, 2, 3, 4][rng.random_range(0..4)];
        // the transpose maps [n, cin, h, w] -> [n, cout, 2h, 2w] with a [cin, cout, k, k] kernel
        let wt = random(&mut rng, &[cin, cout, k, k]);
        let y = random(&mut rng, &[n, cin, h, w]);
        let x = random(&mut rng, &[n, cout, 2 * h, 2 * w]);
        let lhs = dot(&conv2d(&x, &wt, None, 2, Padding::Same).unwrap(), &y);
        let rhs = dot(&x, &conv2d_transpose(&y, &wt, None, 2).unwrap());
        assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
    }
}

#[test]
fn convolution_is_linear_in_its_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = random(&mut rng, &[3, 2, 3, 3]);
    let (a, b) = (random(&mut rng, &[2, 2, 5, 6]), random(&mut rng, &[2, 2, 5, 6]));
    let combo = Tensor::from_vec([2, 2, 5, 6], a.data().iter().zip(b.data()).map(|(x, y)| 2.0 * x - 0.5 * y).collect()).unwrap();
    let (ca, cb) = (conv2d(&a, &w, None, 1, Padding::Same).unwrap(), conv2d(&b, &w, None, 1, Padding::Same).unwrap());
    let cc = conv2d(&combo, &w, None, 1, Padding::Same).unwrap();
    for ((x, y), z) in ca.data().iter().zip(cb.data()).zip(cc.data()) {
        assert!((2.0 * x - 0.5 * y - z).abs() < 1e-12);
    }
}

#[test]
fn kernels_do_not_depend_on_worker_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&mut rng, &[4, 16, 32, 32]).cast::<f32>();
    let w = random(&mut rng, &[16, 16, 3, 3]).cast::<f32>();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let xs = x.detach().requires_grad();
            let out = conv2d(&xs, &w, None, 1, Padding::Same).unwrap();
            saunet::tensor::backward(&saunet::tensor::sum(&out)).unwrap();
            (out.to_vec(), xs.grad().unwrap().to_vec())
        })
    };
    assert_eq!(run(1), run(4));
}
