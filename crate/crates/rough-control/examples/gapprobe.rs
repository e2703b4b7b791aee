// temporary probe
use nalgebra::{DMatrix, DVector};
use rough_control::rsde::{CoefficientSet, Tensor3};
use rough_control::randomize::pathwise_consistency;

fn main() {
    let coeffs = CoefficientSet::zero(1, 1, 1, 0).with_rough(
        |_, y| DMatrix::from_vec(1, 1, vec![y[0]]),
        |_, _| Tensor3::from_fn(1, 1, 1, |_, _, _| 1.0),
    );
    for seed in [1u64, 2, 3, 7, 42, 77, 123, 2024, 9001, 555] {
        for meshes in [[16usize, 32, 64, 128], [32, 64, 128, 256]] {
            let rep = pathwise_consistency(
                &coeffs, &DVector::zeros(0), (0.0, 1.0),
                &meshes, 200, seed, 1, &DVector::from_vec(vec![1.0]),
            ).unwrap();
            let ratios: Vec<String> = rep.mean_gaps.windows(2).map(|w| format!("{:.3}", w[0] / w[1])).collect();
            println!("seed={seed:5} n0={:3} ratios={:?}", meshes[0], ratios);
        }
    }
}
