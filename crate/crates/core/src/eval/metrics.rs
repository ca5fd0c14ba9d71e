use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eval::EvalError;
use crate::scalar::Scalar;

/// Evaluation metric of a task: regression uses RMSE, binary classification F1,
/// multiclass classification support-weighted F1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rmse,
    F1,
    F1Weighted,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rmse => "rmse",
            MetricKind::F1 => "f1",
            MetricKind::F1Weighted => "f1_weighted",
        }
    }

    /// Wording used inside task prompts.
    pub fn prompt_name(self) -> &'static str {
        match self {
            MetricKind::Rmse => "rmse",
            MetricKind::F1 => "f1",
            MetricKind::F1Weighted => "f1 weighted",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rmse" => Ok(MetricKind::Rmse),
            "f1" => Ok(MetricKind::F1),
            "f1_weighted" | "f1 weighted" | "f1weighted" => Ok(MetricKind::F1Weighted),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

fn check_lengths<T, U>(pred: &[T], truth: &[U]) -> Result<(), EvalError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(EvalError::LengthMismatch { predictions: pred.len(), truth: truth.len() });
    }
    Ok(())
}

pub fn rmse<S: Scalar>(pred: &[S], truth: &[S]) -> Result<S, EvalError> {
    check_lengths(pred, truth)?;
    let sse: S = pred.iter().zip(truth).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok((sse / S::of_count(pred.len() as u64)).sqrt())
}

#[derive(Default, Clone, Copy)]
struct Confusion {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Confusion {
    fn f1<S: Scalar>(self) -> S {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return S::zero();
        }
        S::of_count(2 * self.tp) / S::of_count(denom)
    }
}

fn confusions<L: Ord + Clone + fmt::Display>(
    pred: &[L],
    truth: &[L],
) -> Result<BTreeMap<L, (Confusion, u64)>, EvalError> {
    check_lengths(pred, truth)?;
    let labels: BTreeSet<&L> = truth.iter().collect();
    if let Some(bad) = pred.iter().find(|p| !labels.contains(p)) {
        return Err(EvalError::UnknownLabel(bad.to_string()));
    }
    let mut out: BTreeMap<L, (Confusion, u64)> =
        labels.into_iter().map(|l| (l.clone(), (Confusion::default(), 0))).collect();
    for (p, t) in pred.iter().zip(truth) {
        out.get_mut(t).expect("truth label").1 += 1;
        if p == t {
            out.get_mut(t).expect("truth label").0.tp += 1;
        } else {
            out.get_mut(p).expect("checked above").0.fp += 1;
            out.get_mut(t).expect("truth label").0.fn_ += 1;
        }
    }
    Ok(out)
}

/// F1 of the `positive` class.
pub fn f1_binary<S: Scalar, L: Ord + Clone + fmt::Display>(
    pred: &[L],
    truth: &[L],
    positive: &L,
) -> Result<S, EvalError> {
    let table = confusions(pred, truth)?;
    Ok(table.get(positive).map(|(c, _)| c.f1()).unwrap_or_else(S::zero))
}

/// Per-class F1 averaged with weights equal to each class's share of the truth.
pub fn f1_weighted<S: Scalar, L: Ord + Clone + fmt::Display>(
    pred: &[L],
    truth: &[L],
) -> Result<S, EvalError> {
    let table = confusions(pred, truth)?;
    let n = S::of_count(truth.len() as u64);
    Ok(table
        .values()
        .map(|(c, support)| S::of_count(*support) / n * c.f1::<S>())
        .sum())
}

/// Orders labels numerically when every label parses as a number, else lexically.
fn positive_label(truth: &[String]) -> &String {
    let numeric: Option<Vec<f64>> = truth.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(values) => {
            let (idx, _) = values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty");
            &truth[idx]
        }
        None => truth.iter().max().expect("non-empty"),
    }
}

/// Scores predictions against truth, both given as their CSV text form.
///
/// For binary F1 the positive class is the larger of the two truth labels
/// (numeric order when all labels are numbers).
pub fn metric_score<S: Scalar>(
    pred: &[String],
    truth: &[String],
    metric: MetricKind,
) -> Result<S, EvalError> {
    check_lengths(pred, truth)?;
    match metric {
        MetricKind::Rmse => {
            let parse = |v: &String| {
                v.trim()
                    .parse::<f64>()
                    .map(S::of)
                    .map_err(|_| EvalError::NotNumeric(v.clone()))
            };
            let p = pred.iter().map(parse).collect::<Result<Vec<S>, _>>()?;
            let t = truth.iter().map(parse).collect::<Result<Vec<S>, _>>()?;
            rmse(&p, &t)
        }
        MetricKind::F1 => {
            let positive = positive_label(truth).clone();
            f1_binary(pred, truth, &positive)
        }
        MetricKind::F1Weighted => f1_weighted(pred, truth),
    }
}
