use serde::{Deserialize, Serialize};

use super::{EngineError, ExperimentResult, Result};

/// Per-letter accuracy of several experiment configurations at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub round: usize,
    pub alphabet: Vec<String>,
    /// Config name of each result, in input order.
    pub configs: Vec<String>,
    /// `accuracy[c][l]`: mean over seeds of config `c`'s accuracy on letter
    /// `l`; `None` when no seed has test items for the letter.
    pub accuracy: Vec<Vec<Option<f64>>>,
    /// `gap[c][l] = accuracy[c][l] - accuracy[0][l]`, so `gap[0]` is zero.
    pub gap: Vec<Vec<Option<f64>>>,
    pub shared: Vec<bool>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Compares results on the same target corpus at `round`, flagging the
/// letters listed in `shared_letters`.
pub fn per_class_gap_report(
    results: &[ExperimentResult],
    round: usize,
    shared_letters: &[String],
) -> Result<GapReport> {
    let first = results
        .first()
        .ok_or_else(|| EngineError::Report("no results given".into()))?;
    let alphabet = first.corpus.alphabet.clone();
    for r in results {
        if r.corpus.name != first.corpus.name || r.corpus.alphabet != alphabet {
            return Err(EngineError::Report(format!(
                "results target different corpora ({} vs {})",
                first.corpus.name, r.corpus.name
            )));
        }
        for replica in &r.replicas {
            if replica.rounds.len() <= round {
                return Err(EngineError::Report(format!(
                    "{} seed {} stops at round {}, before round {round}",
                    r.config.name,
                    replica.seed,
                    replica.rounds.len().saturating_sub(1)
                )));
            }
        }
        if r.replicas.is_empty() {
            return Err(EngineError::Report(format!(
                "{} has no replicas",
                r.config.name
            )));
        }
    }
    if let Some(unknown) = shared_letters.iter().find(|l| !alphabet.contains(l)) {
        return Err(EngineError::Report(format!(
            "shared letter {unknown} is not in the target alphabet"
        )));
    }

    let accuracy: Vec<Vec<Option<f64>>> = results
        .iter()
        .map(|r| {
            (0..alphabet.len())
                .map(|l| {
                    mean_defined(
                        r.replicas
                            .iter()
                            .map(|rep| rep.rounds[round].per_class_accuracy[l]),
                    )
                })
                .collect()
        })
        .collect();
    let gap = accuracy
        .iter()
        .map(|acc| {
            acc.iter()
                .zip(&accuracy[0])
                .map(|(a, base)| Some(a.as_ref()? - base.as_ref()?))
                .collect()
        })
        .collect();
    Ok(GapReport {
        round,
        shared: alphabet
            .iter()
            .map(|l| shared_letters.contains(l))
            .collect(),
        configs: results.iter().map(|r| r.config.name.clone()).collect(),
        alphabet,
        accuracy,
        gap,
    })
}
