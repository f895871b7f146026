use crate::error::{Error, Result};

/// Masked half mean squared error of one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Number of unmasked target entries that contributed.
    pub observed_count: usize,
}

/// `L = 1/(2T) · Σ_t Σ_r mask[t,r] · (pred[t,r] − target[t,r])²` over a
/// T × `responses` layout. The divisor is the full sequence length T, not
/// the observed count.
pub fn half_mse_loss(pred: &[f64], target: &[f64], mask: &[bool], responses: usize) -> Result<LossValue> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(Error::dims(format!(
            "pred {}, target {}, mask {} differ in length",
            pred.len(),
            target.len(),
            mask.len()
        )));
    }
    if responses == 0 || !pred.len().is_multiple_of(responses) || pred.is_empty() {
        return Err(Error::dims(format!(
            "{} values do not form rows of {responses}",
            pred.len()
        )));
    }
    let steps = pred.len() / responses;
    let mut sum = 0.0;
    let mut count = 0;
    for ((&p, &y), &m) in pred.iter().zip(target).zip(mask) {
        if m {
            sum += (p - y) * (p - y);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoObservation);
    }
    Ok(LossValue {
        value: sum / (2.0 * steps as f64),
        observed_count: count,
    })
}

/// Arithmetic mean of per-sequence losses.
pub fn batch_loss(losses: &[LossValue]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    Ok(losses.iter().map(|l| l.value).sum::<f64>() / losses.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        let l = half_mse_loss(&[3.0], &[1.0], &[true], 1).unwrap();
        assert_eq!(l.value, 2.0);
        assert_eq!(l.observed_count, 1);
        let l = half_mse_loss(&[1.0, 3.0], &[0.0, 0.0], &[true, true], 1).unwrap();
        assert_eq!(l.value, 2.5);
        let l = half_mse_loss(&[0.5, 7.0], &[0.5, 0.0], &[true, false], 1).unwrap();
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn all_masked_is_an_error() {
        assert!(matches!(
            half_mse_loss(&[1.0, 2.0], &[0.0, 0.0], &[false, false], 1),
            Err(Error::NoObservation)
        ));
        assert!(half_mse_loss(&[1.0], &[1.0, 2.0], &[true], 1).is_err());
    }

    #[test]
    fn batch_examples() {
        let a = LossValue {
            value: 2.0,
            observed_count: 1,
        };
        let b = LossValue {
            value: 4.0,
            observed_count: 3,
        };
        assert_eq!(batch_loss(&[a, b]).unwrap(), 3.0);
        assert_eq!(batch_loss(&[b, b, b]).unwrap(), 4.0);
        assert!(batch_loss(&[]).is_err());
    }

    proptest! {
        #[test]
        fn batch_mean_matches_summation(vals in prop::collection::vec(0.0f64..100.0, 1..50)) {
            let losses: Vec<LossValue> = vals.iter().map(|&v| LossValue { value: v, observed_count: 1 }).collect();
            let mut acc = 0.0;
            for v in &vals { acc += v; }
            prop_assert!((batch_loss(&losses).unwrap() - acc / vals.len() as f64).abs() < 1e-12);
        }

        #[test]
        fn loss_nonnegative_and_blind_to_masked(pred in prop::collection::vec(-5.0f64..5.0, 1..20),
                                                 noise in prop::collection::vec(-100.0f64..100.0, 20)) {
            let n = pred.len();
            let mut mask: Vec<bool> = (0..n).map(|i| i % 3 != 1).collect();
            mask[0] = true;
            let target: Vec<f64> = pred.iter().map(|p| p * 0.5).collect();
            let l1 = half_mse_loss(&pred, &target, &mask, 1).unwrap();
            prop_assert!(l1.value >= 0.0);
            let perturbed: Vec<f64> = (0..n).map(|i| if mask[i] { target[i] } else { noise[i] }).collect();
            let l2 = half_mse_loss(&pred, &perturbed, &mask, 1).unwrap();
            prop_assert_eq!(l1, l2);
            let zero = half_mse_loss(&pred, &pred, &mask, 1).unwrap();
            prop_assert_eq!(zero.value, 0.0);
        }
    }
}
