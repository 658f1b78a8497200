use crate::error::{Error, Result};
use crate::stats::{average_ranks, mean};

/// Pearson linear correlation on raw values (no logistic remapping).
pub fn plcc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_inputs(pred, target)?;
    let (mp, mt) = (mean(pred), mean(target));
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_t = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let (dp, dt) = (p - mp, t - mt);
        cov += dp * dt;
        var_p += dp * dp;
        var_t += dt * dt;
    }
    if var_p == 0.0 || var_t == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((cov / (var_p.sqrt() * var_t.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_inputs(pred, target)?;
    plcc(&average_ranks(pred), &average_ranks(target))
}

fn check_inputs(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 observations, got {}",
            pred.len()
        )));
    }
    if let Some(x) = pred.iter().chain(target).find(|x| !x.is_finite()) {
        return Err(Error::UndefinedCorrelation(format!("non-finite value {x}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn plcc_identity_and_negation() {
        let t = [1.0, 2.5, 3.0, 4.75, 2.0];
        assert_abs_diff_eq!(plcc(&t, &t).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = t.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(plcc(&neg, &t).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn plcc_hand_case() {
        // means 2.5, cov sum = 4, variances 5 and 5
        let r = plcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 4.0, 3.0]).unwrap();
        assert_abs_diff_eq!(r, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn srcc_hand_cases() {
        assert_abs_diff_eq!(srcc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, epsilon = 1e-12);
        // ranks [1.5,1.5,3] vs [1,2,3]: cov 1.5, var 1.5 and 2 -> 1.5/sqrt(3)
        let r = srcc(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(r, 1.5 / 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.866, epsilon = 1e-3);
    }

    #[test]
    fn srcc_monotone_transform() {
        let t = [0.3, 1.7, 2.2, 4.0, 3.1];
        let p: Vec<f64> = t.iter().map(|x: &f64| x.exp() * 3.0 + 1.0).collect();
        assert_abs_diff_eq!(srcc(&p, &t).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_and_short_inputs_fail() {
        assert!(matches!(plcc(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(srcc(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(plcc(&[1.0], &[1.0]).is_err());
        assert!(matches!(plcc(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
    }
}
