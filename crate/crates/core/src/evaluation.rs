//! Set-based exact-match scoring of extracted tuples.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::data::{classify_overlap, CountBucket, OverlapClass, SurfaceTuple};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction covers {pred} sentences, gold covers {gold}")]
    SentenceCountMismatch { pred: usize, gold: usize },
}

/// Micro-averaged counts and the scores derived from them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf {
    /// Zero denominators score 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1, tp, fp, fn_ }
    }

    fn add_sets<T: Ord>(&mut self, pred: &BTreeSet<T>, gold: &BTreeSet<T>) {
        let tp = pred.intersection(gold).count();
        *self = Self::from_counts(self.tp + tp, self.fp + pred.len() - tp, self.fn_ + gold.len() - tp);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScoreReport {
    pub overall: Prf,
    /// Sentences are stratified by their gold tuples; one sentence may sit in
    /// both EPO and SEO.
    pub by_overlap: BTreeMap<String, Prf>,
    /// Keyed by gold tuple count bucket; sentences without gold tuples are
    /// only counted overall.
    pub by_tuple_count: BTreeMap<String, Prf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ComponentReport {
    pub entity: Prf,
    pub relation: Prf,
}

/// Error categories over wrong predictions, as percentages of all
/// predictions. Categories may overlap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ErrorBreakdown {
    pub predictions: usize,
    pub wrong: usize,
    pub order: usize,
    pub ent1: usize,
    pub ent2: usize,
    pub order_pct: f64,
    pub ent1_pct: f64,
    pub ent2_pct: f64,
}

fn check(pred: &[BTreeSet<SurfaceTuple>], gold: &[BTreeSet<SurfaceTuple>]) -> Result<(), EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::SentenceCountMismatch { pred: pred.len(), gold: gold.len() });
    }
    Ok(())
}

pub fn score(pred: &[BTreeSet<SurfaceTuple>], gold: &[BTreeSet<SurfaceTuple>]) -> Result<ScoreReport, EvalError> {
    check(pred, gold)?;
    let mut report = ScoreReport::default();
    for class in OverlapClass::ALL {
        report.by_overlap.insert(class.label().to_string(), Prf::default());
    }
    for bucket in CountBucket::ALL {
        report.by_tuple_count.insert(bucket.label().to_string(), Prf::default());
    }
    for (p, g) in pred.iter().zip(gold) {
        report.overall.add_sets(p, g);
        let gold_list: Vec<SurfaceTuple> = g.iter().cloned().collect();
        for class in classify_overlap(&gold_list) {
            report.by_overlap.get_mut(class.label()).expect("all classes present").add_sets(p, g);
        }
        if let Some(bucket) = CountBucket::of(g.len()) {
            report.by_tuple_count.get_mut(bucket.label()).expect("all buckets present").add_sets(p, g);
        }
    }
    Ok(report)
}

fn entities(set: &BTreeSet<SurfaceTuple>) -> BTreeSet<&str> {
    set.iter().flat_map(|t| [t.head.as_str(), t.tail.as_str()]).collect()
}

fn relations(set: &BTreeSet<SurfaceTuple>) -> BTreeSet<&str> {
    set.iter().map(|t| t.relation.as_str()).collect()
}

/// Entity and relation scores, each over per-sentence sets drawn from tuples.
pub fn component_scores(
    pred: &[BTreeSet<SurfaceTuple>],
    gold: &[BTreeSet<SurfaceTuple>],
) -> Result<ComponentReport, EvalError> {
    check(pred, gold)?;
    let mut report = ComponentReport::default();
    for (p, g) in pred.iter().zip(gold) {
        report.entity.add_sets(&entities(p), &entities(g));
        report.relation.add_sets(&relations(p), &relations(g));
    }
    Ok(report)
}

/// For a wrong prediction `(e1, e2, r)`: Order if gold holds `(e2, e1, r)`;
/// Ent1 if gold holds `(g1, e2, r)` with `g1 != e1`; Ent2 if gold holds
/// `(e1, g2, r)` with `g2 != e2`.
pub fn error_breakdown(
    pred: &[BTreeSet<SurfaceTuple>],
    gold: &[BTreeSet<SurfaceTuple>],
) -> Result<ErrorBreakdown, EvalError> {
    check(pred, gold)?;
    let mut b = ErrorBreakdown::default();
    for (p, g) in pred.iter().zip(gold) {
        b.predictions += p.len();
        for t in p.difference(g) {
            b.wrong += 1;
            let reversed = SurfaceTuple::new(t.tail.clone(), t.head.clone(), t.relation.clone());
            if g.contains(&reversed) {
                b.order += 1;
            }
            if g.iter().any(|x| x.relation == t.relation && x.tail == t.tail && x.head != t.head) {
                b.ent1 += 1;
            }
            if g.iter().any(|x| x.relation == t.relation && x.head == t.head && x.tail != t.tail) {
                b.ent2 += 1;
            }
        }
    }
    let pct = |k: usize| if b.predictions == 0 { 0.0 } else { 100.0 * k as f64 / b.predictions as f64 };
    b.order_pct = pct(b.order);
    b.ent1_pct = pct(b.ent1);
    b.ent2_pct = pct(b.ent2);
    Ok(b)
}

/// Keeps each tuple found in at least `threshold` runs for that sentence.
///
/// Runs must cover the same sentences; shorter runs contribute nothing
/// beyond their length.
pub fn ensemble(runs: &[Vec<BTreeSet<SurfaceTuple>>], threshold: usize) -> Vec<BTreeSet<SurfaceTuple>> {
    let sentences = runs.iter().map(Vec::len).max().unwrap_or(0);
    (0..sentences)
        .map(|i| {
            let mut votes: BTreeMap<&SurfaceTuple, usize> = BTreeMap::new();
            for run in runs {
                for t in run.get(i).into_iter().flatten() {
                    *votes.entry(t).or_default() += 1;
                }
            }
            votes.into_iter().filter(|&(_, v)| v >= threshold).map(|(t, _)| t.clone()).collect()
        })
        .collect()
}

fn row(f: &mut fmt::Formatter<'_>, label: &str, p: &Prf) -> fmt::Result {
    writeln!(
        f,
        "{label:<10} {:>9.3} {:>9.3} {:>9.3} {:>6} {:>6} {:>6}",
        p.precision, p.recall, p.f1, p.tp, p.fp, p.fn_
    )
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}", "stratum", "precision", "recall", "F1", "TP", "FP", "FN")?;
        row(f, "all", &self.overall)?;
        for (k, p) in self.by_overlap.iter().chain(&self.by_tuple_count) {
            row(f, k, p)?;
        }
        Ok(())
    }
}

impl fmt::Display for ComponentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        row(f, "entity", &self.entity)?;
        row(f, "relation", &self.relation)
    }
}

impl fmt::Display for ErrorBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>9} {:>9} {:>9}", "errors", "Order", "Ent1", "Ent2")?;
        writeln!(f, "{:<10} {:>8.2}% {:>8.2}% {:>8.2}%", "", self.order_pct, self.ent1_pct, self.ent2_pct)
    }
}
