use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Scalar, Tensor4};

/// He-normal initialisation for a `[kh, kw, cin, cout]` kernel: zero-mean
/// normal with variance `2 / (kh * kw * cin)`.
pub fn he_init<T: Scalar>(shape: [usize; 4], seed: u64) -> Tensor4<T> {
    let fan_in = (shape[0] * shape[1] * shape[2]).max(1);
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.iter().product::<usize>())
        .map(|_| T::lit(normal.sample(&mut rng)))
        .collect();
    Tensor4::from_vec(shape, data).expect("length matches shape")
}

pub fn zero_bias<T: Scalar>(channels: usize) -> Tensor4<T> {
    Tensor4::zeros([1, 1, 1, channels])
}
