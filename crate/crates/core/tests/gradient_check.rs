//! The reverse-mode gradient of the summed cross-entropy must match central
//! finite differences on randomly shaped small networks.

use gfra_core::multiplicity::{loss_and_grad, loss_only, MlpModel, Normalizer};
use gfra_core::scene::RngStream;
use ndarray::Array2;
use rand::Rng;

fn passthrough(m: usize) -> Normalizer<f64> {
    Normalizer::MinMax {
        min: vec![-1.0; m],
        max: vec![1.0; m],
    }
}

#[test]
fn backprop_matches_central_differences_on_ten_random_nets() {
    let step = 1e-5;
    for net in 0..10u64 {
        let mut rng = RngStream::root(900 + net).child("net");
        let input_dim = rng.gen_range(3..=6);
        let hidden: Vec<usize> = (0..rng.gen_range(1..=2))
            .map(|_| rng.gen_range(3..=8))
            .collect();
        let t_max = rng.gen_range(1..=4);
        let mut model =
            MlpModel::init(input_dim, &hidden, t_max, passthrough(input_dim), 1, &mut rng)
                .unwrap();

        let batch = 20;
        let inputs = Array2::from_shape_fn((batch, input_dim), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..=t_max)).collect();

        let (_, grad) = loss_and_grad(&model, &inputs, &labels).unwrap();
        let base = model.flat_params();
        assert_eq!(grad.len(), base.len());

        let mut worst = 0.0f64;
        for k in 0..base.len() {
            let mut plus = base.clone();
            plus[k] += step;
            model.set_flat_params(&plus).unwrap();
            let up = loss_only(&model, &inputs, &labels);
            let mut minus = base.clone();
            minus[k] -= step;
            model.set_flat_params(&minus).unwrap();
            let down = loss_only(&model, &inputs, &labels);
            let fd = (up - down) / (2.0 * step);
            let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(
            worst < 1e-5,
            "net {net} ({input_dim}-{hidden:?}-{}): worst relative error {worst}",
            t_max + 1
        );
    }
}
