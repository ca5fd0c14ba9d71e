use crate::eval::{EvalError, MetricKind};
use crate::scalar::Scalar;

/// Maps a raw metric value onto a higher-is-better scale.
///
/// RMSE becomes `1 / (1 + ln(1 + raw))`, which lies in `(0, 1]`; F1 kinds pass through.
pub fn normalized_score<S: Scalar>(raw: S, metric: MetricKind) -> Result<S, EvalError> {
    if !raw.is_finite() {
        return Err(EvalError::InvalidScore { value: raw.as_f64(), metric });
    }
    match metric {
        MetricKind::Rmse => {
            if raw < S::zero() {
                return Err(EvalError::InvalidScore { value: raw.as_f64(), metric });
            }
            Ok(S::one() / (S::one() + raw.ln_1p()))
        }
        MetricKind::F1 | MetricKind::F1Weighted => {
            if raw < S::zero() || raw > S::one() {
                return Err(EvalError::InvalidScore { value: raw.as_f64(), metric });
            }
            Ok(raw)
        }
    }
}

/// A baseline's normalized score relative to the reference method's.
pub fn rescaled_ns<S: Scalar>(ns_baseline: S, ns_reference: S) -> Result<S, EvalError> {
    if ns_reference == S::zero() {
        return Err(EvalError::DivisionByZero);
    }
    Ok(ns_baseline / ns_reference)
}
