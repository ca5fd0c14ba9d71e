use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::eval::{normalized_score, rescaled_ns, EvalError, MetricKind};
use crate::scalar::Scalar;

pub const POOLING_NOTE: &str = "ranks pool every run of every method per dataset \
(rank 1 = best normalized score, ties share the average position); \
pooling is inferred from rank magnitudes rather than stated by the benchmark protocol";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry<S> {
    pub method: String,
    pub dataset: String,
    pub run: u32,
    pub metric: MetricKind,
    pub raw_score: S,
}

impl<S: Scalar> ScoreEntry<S> {
    pub fn ns(&self) -> Result<S, EvalError> {
        normalized_score(self.raw_score, self.metric)
    }
}

/// Raw scores keyed by `(method, dataset, run)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable<S> {
    entries: Vec<ScoreEntry<S>>,
}

impl<S: Scalar> ScoreTable<S> {
    pub fn new(entries: Vec<ScoreEntry<S>>) -> Result<Self, EvalError> {
        let mut seen = BTreeSet::new();
        let mut metric_of: BTreeMap<&str, MetricKind> = BTreeMap::new();
        for e in &entries {
            if !seen.insert((e.method.as_str(), e.dataset.as_str(), e.run)) {
                return Err(EvalError::DuplicateEntry {
                    method: e.method.clone(),
                    dataset: e.dataset.clone(),
                    run: e.run,
                });
            }
            e.ns()?;
            match metric_of.get(e.dataset.as_str()) {
                Some(&m) if m != e.metric => {
                    return Err(EvalError::MixedMetrics {
                        dataset: e.dataset.clone(),
                        first: m,
                        second: e.metric,
                    })
                }
                _ => {
                    metric_of.insert(&e.dataset, e.metric);
                }
            }
        }
        Ok(ScoreTable { entries })
    }

    pub fn entries(&self) -> &[ScoreEntry<S>] {
        &self.entries
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.method.as_str()) {
                out.push(&e.method);
            }
        }
        out
    }

    pub fn datasets(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.dataset.as_str()).collect();
        set.into_iter().collect()
    }

    /// Reads the `method,dataset,run,metric,raw_score` CSV layout.
    pub fn from_csv<R: io::Read>(reader: R) -> Result<Self, EvalError> {
        #[derive(Deserialize)]
        struct Row {
            method: String,
            dataset: String,
            run: u32,
            metric: String,
            raw_score: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| EvalError::Csv(e.to_string()))?;
            let metric = row.metric.parse().map_err(EvalError::Csv)?;
            entries.push(ScoreEntry {
                method: row.method,
                dataset: row.dataset,
                run: row.run,
                metric,
                raw_score: S::of(row.raw_score),
            });
        }
        ScoreTable::new(entries)
    }

    pub fn to_csv<W: io::Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| EvalError::Csv(e.to_string());
        w.write_record(["method", "dataset", "run", "metric", "raw_score"]).map_err(err)?;
        for e in &self.entries {
            w.write_record([
                e.method.clone(),
                e.dataset.clone(),
                e.run.to_string(),
                e.metric.name().to_string(),
                e.raw_score.as_f64().to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| EvalError::Csv(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedRun<S> {
    pub method: String,
    pub dataset: String,
    pub run: u32,
    pub ns: S,
    pub rank: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary<S> {
    pub method: String,
    pub avg_ns: S,
    pub avg_best_ns: S,
    pub avg_rank: S,
    pub avg_best_rank: S,
    /// `None` for the reference method itself.
    pub wins: Option<usize>,
    pub losses: Option<usize>,
    pub top1: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport<S> {
    pub reference: Option<String>,
    pub datasets: usize,
    pub methods: Vec<MethodSummary<S>>,
    pub runs: Vec<RankedRun<S>>,
    pub notes: Vec<String>,
}

/// Fractional ranks of `values` in descending order (1 = largest).
fn fractional_ranks<S: Scalar>(values: &[S]) -> Vec<S> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite scores"));
    let mut ranks = vec![S::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let mean = S::of_count((start + 1 + end) as u64) / S::of(2.0);
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

fn mean<S: Scalar>(xs: impl IntoIterator<Item = S>) -> S {
    let (sum, n) = xs.into_iter().fold((S::zero(), 0u64), |(s, n), x| (s + x, n + 1));
    sum / S::of_count(n)
}

/// Pooled per-dataset ranking with average/best aggregation and, when a
/// reference method is named, wins/losses against it.
pub fn compute_ranks<S: Scalar>(
    table: &ScoreTable<S>,
    reference: Option<&str>,
) -> Result<RankReport<S>, EvalError> {
    if table.entries.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let methods = table.methods();
    let datasets = table.datasets();
    if let Some(r) = reference {
        if !methods.contains(&r) {
            return Err(EvalError::UnknownReference(r.to_string()));
        }
    }

    let mut runs: Vec<RankedRun<S>> = Vec::with_capacity(table.entries.len());
    // (method, dataset) -> (best ns, rank of best run)
    let mut best: BTreeMap<(&str, &str), (S, S)> = BTreeMap::new();
    for &ds in &datasets {
        let pool: Vec<&ScoreEntry<S>> = table.entries.iter().filter(|e| e.dataset == ds).collect();
        let ns: Vec<S> = pool.iter().map(|e| e.ns()).collect::<Result<_, _>>()?;
        let ranks = fractional_ranks(&ns);
        for ((e, &score), &rank) in pool.iter().zip(&ns).zip(&ranks) {
            runs.push(RankedRun {
                method: e.method.clone(),
                dataset: e.dataset.clone(),
                run: e.run,
                ns: score,
                rank,
            });
            let slot = best.entry((e.method.as_str(), ds)).or_insert((score, rank));
            if score > slot.0 {
                *slot = (score, rank);
            }
        }
        for &m in &methods {
            if !best.contains_key(&(m, ds)) {
                return Err(EvalError::MissingRuns { method: m.to_string(), dataset: ds.to_string() });
            }
        }
    }

    let top_per_dataset: BTreeMap<&str, S> = datasets
        .iter()
        .map(|&ds| {
            let top = methods
                .iter()
                .map(|&m| best[&(m, ds)].0)
                .fold(S::neg_infinity(), S::max);
            (ds, top)
        })
        .collect();

    let summaries = methods
        .iter()
        .map(|&m| {
            let own = runs.iter().filter(|r| r.method == m);
            let best_of = |ds: &str| best[&(m, ds)];
            let (wins, losses) = match reference {
                Some(r) if r != m => {
                    let mut w = 0;
                    let mut l = 0;
                    for &ds in &datasets {
                        let mine = best_of(ds).0;
                        let theirs = best[&(r, ds)].0;
                        if mine > theirs {
                            w += 1;
                        } else if mine < theirs {
                            l += 1;
                        }
                    }
                    (Some(w), Some(l))
                }
                _ => (None, None),
            };
            MethodSummary {
                method: m.to_string(),
                avg_ns: mean(own.clone().map(|r| r.ns)),
                avg_best_ns: mean(datasets.iter().map(|&ds| best_of(ds).0)),
                avg_rank: mean(own.map(|r| r.rank)),
                avg_best_rank: mean(datasets.iter().map(|&ds| best_of(ds).1)),
                wins,
                losses,
                top1: datasets.iter().filter(|&&ds| best_of(ds).0 == top_per_dataset[ds]).count(),
            }
        })
        .collect();

    Ok(RankReport {
        reference: reference.map(str::to_string),
        datasets: datasets.len(),
        methods: summaries,
        runs,
        notes: vec![POOLING_NOTE.to_string()],
    })
}

impl<S: Scalar> RankReport<S> {
    /// Plain-text table with the columns Wins, Losses, Top 1, Avg. NS %,
    /// Avg. Best NS %, Avg. Rank and Avg. Best Rank.
    pub fn to_text_table(&self) -> String {
        let header = [
            "Method",
            "Wins",
            "Losses",
            "Top 1",
            "Avg. NS %",
            "Avg. Best NS %",
            "Avg. Rank",
            "Avg. Best Rank",
        ];
        let opt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
        let rows: Vec<[String; 8]> = self
            .methods
            .iter()
            .map(|m| {
                [
                    m.method.clone(),
                    opt(m.wins),
                    opt(m.losses),
                    m.top1.to_string(),
                    format!("{:.1}", m.avg_ns.as_f64() * 100.0),
                    format!("{:.1}", m.avg_best_ns.as_f64() * 100.0),
                    format!("{:.1}", m.avg_rank.as_f64()),
                    format!("{:.1}", m.avg_best_rank.as_f64()),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, cells: &[&str]| {
            for (c, cell) in cells.iter().enumerate() {
                if c == 0 {
                    let _ = write!(out, "{:<w$}", cell, w = widths[c]);
                } else {
                    let _ = write!(out, "  {:>w$}", cell, w = widths[c]);
                }
            }
            out.push('\n');
        };
        line(&mut out, &header);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
        for r in &rows {
            line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledRow<S> {
    pub method: String,
    pub dataset: String,
    pub ns: S,
    pub reference_ns: S,
    pub rescaled_ns: S,
}

/// Per-dataset rescaled scores of every method against `reference`, using the
/// mean normalized score over runs.
pub fn rescaled_table<S: Scalar>(
    table: &ScoreTable<S>,
    reference: &str,
) -> Result<Vec<RescaledRow<S>>, EvalError> {
    let methods = table.methods();
    if !methods.contains(&reference) {
        return Err(EvalError::UnknownReference(reference.to_string()));
    }
    let mean_ns = |m: &str, ds: &str| -> Result<S, EvalError> {
        let ns: Vec<S> = table
            .entries
            .iter()
            .filter(|e| e.method == m && e.dataset == ds)
            .map(|e| e.ns())
            .collect::<Result<_, _>>()?;
        if ns.is_empty() {
            return Err(EvalError::MissingRuns { method: m.into(), dataset: ds.into() });
        }
        Ok(mean(ns))
    };
    let mut out = Vec::new();
    for ds in table.datasets() {
        let reference_ns = mean_ns(reference, ds)?;
        for &m in &methods {
            let ns = mean_ns(m, ds)?;
            out.push(RescaledRow {
                method: m.to_string(),
                dataset: ds.to_string(),
                ns,
                reference_ns,
                rescaled_ns: rescaled_ns(ns, reference_ns)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(method: &str, dataset: &str, run: u32, raw: f64) -> ScoreEntry<f64> {
        ScoreEntry {
            method: method.into(),
            dataset: dataset.into(),
            run,
            metric: MetricKind::F1,
            raw_score: raw,
        }
    }

    #[test]
    fn singleton_pool_ranks_one() {
        let t = ScoreTable::new(vec![entry("a", "d", 0, 0.5)]).unwrap();
        let r = compute_ranks(&t, None).unwrap();
        assert_eq!(r.methods[0].avg_rank, 1.0);
        assert_eq!(r.methods[0].avg_best_rank, 1.0);
        assert_eq!(r.methods[0].top1, 1);
    }

    #[test]
    fn two_methods_wins_against_reference() {
        let t = ScoreTable::new(vec![entry("a", "d", 0, 0.9), entry("b", "d", 0, 0.8)]).unwrap();
        let r = compute_ranks(&t, Some("b")).unwrap();
        let a = &r.methods[0];
        assert_eq!((a.avg_rank, a.wins, a.losses), (1.0, Some(1), Some(0)));
        let b = &r.methods[1];
        assert_eq!((b.avg_rank, b.wins, b.losses, b.top1), (2.0, None, None, 0));
    }

    #[test]
    fn ties_share_average_positions() {
        let ranks = fractional_ranks(&[0.5, 0.9, 0.5, 0.1]);
        assert_eq!(ranks, vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn only_reference_method() {
        let t = ScoreTable::new(vec![entry("a", "d1", 0, 0.9), entry("a", "d2", 0, 0.4)]).unwrap();
        let r = compute_ranks(&t, Some("a")).unwrap();
        assert_eq!(r.methods[0].wins, None);
        assert_eq!(r.methods[0].top1, 2);
    }

    #[test]
    fn error_paths() {
        let empty: ScoreTable<f64> = ScoreTable::new(vec![]).unwrap();
        assert_eq!(compute_ranks(&empty, None), Err(EvalError::EmptyTable));
        assert!(matches!(
            ScoreTable::new(vec![entry("a", "d", 0, 0.9), entry("a", "d", 0, 0.8)]),
            Err(EvalError::DuplicateEntry { .. })
        ));
        let t = ScoreTable::new(vec![entry("a", "d1", 0, 0.9), entry("b", "d2", 0, 0.4)]).unwrap();
        assert!(matches!(compute_ranks(&t, None), Err(EvalError::MissingRuns { .. })));
        let t = ScoreTable::new(vec![entry("a", "d", 0, 0.9)]).unwrap();
        assert_eq!(
            compute_ranks(&t, Some("zzz")),
            Err(EvalError::UnknownReference("zzz".into()))
        );
    }

    #[test]
    fn csv_round_trip() {
        let csv = "method,dataset,run,metric,raw_score\n\
                   a,boston,0,rmse,3.2\n\
                   b,boston,0,rmse,2.9\n";
        let t: ScoreTable<f64> = ScoreTable::from_csv(csv.as_bytes()).unwrap();
        let mut out = Vec::new();
        t.to_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }

    #[test]
    fn text_table_has_expected_columns() {
        let t = ScoreTable::new(vec![entry("a", "d", 0, 0.9), entry("b", "d", 0, 0.8)]).unwrap();
        let text = compute_ranks(&t, Some("b")).unwrap().to_text_table();
        let first = text.lines().next().unwrap();
        for col in ["Wins", "Losses", "Top 1", "Avg. NS %", "Avg. Best NS %", "Avg. Rank", "Avg. Best Rank"] {
            assert!(first.contains(col), "{first}");
        }
        assert!(text.contains("90.0"));
    }
}
