use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub enum QuantMode<'a, R: Rng> {
    /// Additive `U(−0.5, 0.5)` noise, the differentiable training proxy.
    Train(&'a mut R),
    /// Rounding half away from zero.
    Infer,
}

pub fn round_half_away<T: Scalar>(v: T) -> T {
    v.round()
}

pub fn uniform_noise<T: Scalar, R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-0.5..0.5))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches length")
}

/// Non-differentiable quantizer. In a graph the training mode is applied as
/// `v + noise` with noise a constant, so its gradient is the identity.
pub fn quantize<T: Scalar, R: Rng>(v: &Tensor<T>, mode: QuantMode<'_, R>) -> Tensor<T> {
    match mode {
        QuantMode::Train(rng) => {
            let noise: Tensor<T> = uniform_noise(v.shape(), rng);
            let data = v.data().iter().zip(noise.data()).map(|(&a, &b)| a + b).collect();
            Tensor::new(v.shape().to_vec(), data).expect("same shape")
        }
        QuantMode::Infer => v.map(round_half_away),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rounding_rule() {
        let t = Tensor::<f64>::from_f64(vec![4], &[1.5, -1.5, 0.4, -0.4]).unwrap();
        let q = quantize::<_, ChaCha8Rng>(&t, QuantMode::Infer);
        assert_eq!(q.data(), &[2.0, -2.0, 0.0, -0.0]);
        assert_eq!(quantize::<_, ChaCha8Rng>(&q, QuantMode::Infer), q);
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let t = Tensor::<f64>::zeros(vec![1000]);
        let a = quantize(&t, QuantMode::Train(&mut ChaCha8Rng::seed_from_u64(5)));
        let b = quantize(&t, QuantMode::Train(&mut ChaCha8Rng::seed_from_u64(5)));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 0.5));
    }
}
