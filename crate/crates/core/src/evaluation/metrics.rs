use serde::{Deserialize, Serialize};

use super::EvalError;

/// How a value of exactly zero is classified.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// Zero counts as up.
    #[default]
    Positive,
    /// Pairs where either side is zero are left out of ACC and MCC.
    DropTies,
}

/// +1 for up, -1 for down; zero is up.
pub fn direction(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

fn check(preds: &[f64], actuals: &[f64]) -> Result<(), EvalError> {
    if preds.len() != actuals.len() {
        return Err(EvalError::LengthMismatch(preds.len(), actuals.len()));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    if preds.iter().chain(actuals).any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

fn direction_pairs(preds: &[f64], actuals: &[f64], tie: TieRule) -> Result<Vec<(i8, i8)>, EvalError> {
    check(preds, actuals)?;
    let pairs: Vec<(i8, i8)> = preds
        .iter()
        .zip(actuals)
        .filter(|(p, a)| tie == TieRule::Positive || (**p != 0.0 && **a != 0.0))
        .map(|(p, a)| (direction(*p), direction(*a)))
        .collect();
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(pairs)
}

pub fn accuracy(preds: &[f64], actuals: &[f64]) -> Result<f64, EvalError> {
    accuracy_with(preds, actuals, TieRule::Positive)
}

pub fn accuracy_with(preds: &[f64], actuals: &[f64], tie: TieRule) -> Result<f64, EvalError> {
    let pairs = direction_pairs(preds, actuals, tie)?;
    let hits = pairs.iter().filter(|(p, a)| p == a).count();
    Ok(hits as f64 / pairs.len() as f64)
}

pub fn mcc(preds: &[f64], actuals: &[f64]) -> Result<f64, EvalError> {
    mcc_with(preds, actuals, TieRule::Positive)
}

/// Binary Matthews correlation over up/down classes, with up as positive.
/// A zero anywhere in the denominator gives 0.
pub fn mcc_with(preds: &[f64], actuals: &[f64], tie: TieRule) -> Result<f64, EvalError> {
    let (mut tp, mut tn, mut fp, mut fn_) = (0f64, 0f64, 0f64, 0f64);
    for (p, a) in direction_pairs(preds, actuals, tie)? {
        match (p, a) {
            (1, 1) => tp += 1.0,
            (-1, -1) => tn += 1.0,
            (1, -1) => fp += 1.0,
            _ => fn_ += 1.0,
        }
    }
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fn_) / denom.sqrt())
}

pub fn rmse(preds: &[f64], actuals: &[f64]) -> Result<f64, EvalError> {
    check(preds, actuals)?;
    let sq: f64 = preds.iter().zip(actuals).map(|(p, a)| (p - a).powi(2)).sum();
    Ok((sq / preds.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn directions() {
        assert_eq!(direction(3.2), 1);
        assert_eq!(direction(-0.5), -1);
        assert_eq!(direction(0.0), 1);
    }

    #[test]
    fn accuracy_examples() {
        assert_abs_diff_eq!(accuracy(&[1.0, 2.0, -3.0], &[2.0, -1.0, -1.0]).unwrap(), 2.0 / 3.0);
        assert_eq!(accuracy(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch(1, 2)));
        assert_eq!(accuracy(&[], &[]), Err(EvalError::Empty));
        assert_eq!(accuracy(&[f64::NAN], &[1.0]), Err(EvalError::NonFinite));
    }

    #[test]
    fn drop_ties() {
        let p = [0.0, 1.0, -1.0];
        let a = [-1.0, 1.0, 1.0];
        assert_abs_diff_eq!(accuracy(&p, &a).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(accuracy_with(&p, &a, TieRule::DropTies).unwrap(), 0.5);
        assert_eq!(accuracy_with(&[0.0], &[1.0], TieRule::DropTies), Err(EvalError::Empty));
    }

    #[test]
    fn mcc_examples() {
        assert_eq!(mcc(&[1.0, -1.0, 2.0], &[3.0, -2.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            mcc(&[1.0, 1.0, -1.0, -1.0], &[1.0, -1.0, -1.0, -1.0]).unwrap(),
            2.0 / 12f64.sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(mcc(&[1.0, 1.0, 1.0], &[1.0, -1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(mcc(&[1.0, -1.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn rmse_examples() {
        assert_abs_diff_eq!(rmse(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2f64.sqrt());
        assert_eq!(rmse(&[3.0, -1.0], &[3.0, -1.0]).unwrap(), 0.0);
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-5i32..=5, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
                prop::collection::vec(-5i32..=5, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            )
        })
    }

    proptest! {
        #[test]
        fn mcc_symmetric_under_sign_flip((p, a) in pairs()) {
            // Zeros would change class under negation, so keep them out.
            let p: Vec<f64> = p.into_iter().map(|x| if x == 0.0 { 1.0 } else { x }).collect();
            let a: Vec<f64> = a.into_iter().map(|x| if x == 0.0 { -1.0 } else { x }).collect();
            let np: Vec<f64> = p.iter().map(|x| -x).collect();
            let na: Vec<f64> = a.iter().map(|x| -x).collect();
            prop_assert!((mcc(&p, &a).unwrap() - mcc(&np, &na).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn accuracy_and_error_rate_sum_to_one((p, a) in pairs()) {
            let acc = accuracy(&p, &a).unwrap();
            let misses = p.iter().zip(&a).filter(|(x, y)| direction(**x) != direction(**y)).count();
            prop_assert!((acc + misses as f64 / p.len() as f64 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rmse_zero_on_self_and_permutation_invariant((p, a) in pairs(), r in any::<usize>()) {
            prop_assert_eq!(rmse(&p, &p).unwrap(), 0.0);
            let shift = r % p.len();
            let mut pr = p.clone();
            let mut ar = a.clone();
            pr.rotate_left(shift);
            ar.rotate_left(shift);
            prop_assert!((rmse(&p, &a).unwrap() - rmse(&pr, &ar).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn metrics_in_range((p, a) in pairs()) {
            let m = mcc(&p, &a).unwrap();
            prop_assert!((-1.0..=1.0).contains(&m));
            let acc = accuracy(&p, &a).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
        }
    }
}
