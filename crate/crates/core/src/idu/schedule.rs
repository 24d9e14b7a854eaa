use crate::error::{Error, Result};

/// Inpainting strength at training step `n` of `n_steps`:
/// `s = 1 − 0.8·√(n / n_steps)`, falling from 1.0 to 0.2.
///
/// Evaluated as `0.2 + 0.8·(1 − √(n / n_steps))` so both endpoints are
/// exact in floating point.
pub fn strength_at(n: u64, n_steps: u64) -> Result<f64> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be positive"));
    }
    if n > n_steps {
        return Err(Error::invalid(format!("step {n} beyond n_steps {n_steps}")));
    }
    let r = (n as f64 / n_steps as f64).sqrt();
    Ok(0.2 + 0.8 * (1.0 - r))
}

/// Steps at which the whole dataset is replaced: 0, n_update, 2·n_update, … < n_steps.
pub fn update_steps(n_steps: u64, n_update: u64) -> impl Iterator<Item = u64> {
    let stride = n_update.max(1);
    (0..n_steps).step_by(stride as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_quarter() {
        for n in [1, 6000, 90_000] {
            assert_eq!(strength_at(0, n).unwrap(), 1.0);
            assert_eq!(strength_at(n, n).unwrap(), 0.2);
        }
        assert!((strength_at(1000, 4000).unwrap() - 0.6).abs() < 1e-15);
        assert!(strength_at(5, 4).is_err());
        assert!(strength_at(0, 0).is_err());
    }

    #[test]
    fn cadence() {
        assert_eq!(update_steps(600, 200).collect::<Vec<_>>(), [0, 200, 400]);
        assert_eq!(update_steps(0, 200).count(), 0);
        assert_eq!(update_steps(90_000, 6_000).count(), 15);
    }

    proptest! {
        #[test]
        fn non_increasing(n_steps in 1u64..100_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (n0, n1) = ((lo * n_steps as f64) as u64, (hi * n_steps as f64) as u64);
            prop_assert!(strength_at(n0, n_steps).unwrap() >= strength_at(n1, n_steps).unwrap());
        }
    }
}
