use crate::random::SeedStream;
use crate::tensor::{Real, Tensor};

/// Normal draws with variance `2 / fan_in`.
pub fn he_normal<T: Real>(shape: &[usize], fan_in: usize, stream: &mut SeedStream) -> Tensor<T> {
    let std = num_traits::Float::sqrt(2.0 / fan_in.max(1) as f64);
    Tensor::from_fn(shape, |_| T::lit(std * stream.normal()))
}
