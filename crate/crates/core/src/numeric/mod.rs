//! Dense tensors, a reverse-mode tape and the Adam optimizer.

mod adam;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Max-shifted softmax of a finite vector.
pub fn softmax<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("softmax input is not finite".into()));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_softmax(v: &[f64]) -> Vec<f64> {
        let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|x| x / s).collect()
    }

    #[test]
    fn softmax_closed_forms() {
        let u = softmax(&[0.0_f64, 0.0, 0.0]).unwrap();
        for p in u {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[0.0_f64, 3.0_f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_matches_naive_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
        let got = softmax(&v).unwrap();
        let want = naive_softmax(&v);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[1.0_f64, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY]).is_err());
        assert!(softmax::<f64>(&[]).is_err());
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0_f64, 1000.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn gradient_of_sum_is_ones() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap());
        let loss = tape.sum(p);
        let g = tape.gradient(loss).unwrap();
        assert_eq!(g.get(0).data(), &[1.0; 6]);
    }

    #[test]
    fn gradient_of_square() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::new(vec![1], vec![3.0]).unwrap());
        let sq = tape.mul(p, p).unwrap();
        let loss = tape.sum(sq);
        let g = tape.gradient(loss).unwrap();
        assert_eq!(g.get(0).data(), &[6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        assert!(matches!(tape.gradient(p), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let used = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let _unused = tape.param(Tensor::new(vec![3], vec![1.0; 3]).unwrap());
        let loss = tape.sum(used);
        let g = tape.gradient(loss).unwrap();
        assert_eq!(g.get(1).data(), &[0.0; 3]);
    }
}
