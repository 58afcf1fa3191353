//! Classification and cost-aware ranking measures.

use std::fmt::{self, Write as _};
use std::ops::AddAssign;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid bins `{0}`: expected strictly increasing positive integers such as 1,10,100,500")]
pub struct BinsError(pub String);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// A scored commit: true label, predicted fix probability, change size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub label: Label,
    pub probability: f64,
    pub changed_loc: usize,
}

/// Counts outcomes, predicting a fix when the probability reaches `threshold`.
pub fn confusion(scored: &[Scored], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for s in scored {
        match (s.label.is_fix(), s.probability >= threshold) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, F1 and accuracy. Undefined ratios are reported as 0.
pub fn prf1(c: &ConfusionCounts) -> Rates {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Rates { precision, recall, f1, accuracy: ratio(c.tp + c.tn, c.total()) }
}

/// Inspection order for cost-effort: most probable first, then smaller
/// changes, then input order.
pub fn inspection_order(scored: &[Scored]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&scored[a], &scored[b]);
        y.probability.total_cmp(&x.probability).then(x.changed_loc.cmp(&y.changed_loc)).then(a.cmp(&b))
    });
    order
}

/// Fraction of all fixes found when commits are reviewed in
/// [`inspection_order`] until the next one would push the reviewed changed
/// lines past `budget`.
pub fn cost_effort(scored: &[Scored], budget: usize) -> f64 {
    let fixes = scored.iter().filter(|s| s.label.is_fix()).count();
    let mut spent = 0usize;
    let mut found = 0;
    for i in inspection_order(scored) {
        spent += scored[i].changed_loc;
        if spent > budget {
            break;
        }
        found += scored[i].label.is_fix() as usize;
    }
    ratio(found, fixes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEffort {
    pub budget: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub commits: usize,
    pub threshold: f64,
    pub confusion: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_effort: Option<CostEffort>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub strata: Vec<Stratum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub name: String,
    /// Inclusive lower bound on changed lines.
    pub min_loc: usize,
    /// Exclusive upper bound; `None` for the open-ended last bin.
    pub max_loc: Option<usize>,
    pub report: EvalReport,
}

pub fn evaluate(scored: &[Scored], threshold: f64, budget: Option<usize>) -> EvalReport {
    let confusion = confusion(scored, threshold);
    let r = prf1(&confusion);
    EvalReport {
        commits: scored.len(),
        threshold,
        confusion,
        precision: r.precision,
        recall: r.recall,
        f1: r.f1,
        accuracy: r.accuracy,
        cost_effort: budget.map(|b| CostEffort { budget: b, fraction: cost_effort(scored, b) }),
        strata: Vec::new(),
    }
}

/// Changed-line bins given by their inner edges: `[1, 10]` stands for
/// `[0,1)`, `[1,10)` and `[10,inf)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocBins {
    edges: Vec<usize>,
}

impl LocBins {
    pub fn new(edges: Vec<usize>) -> Result<Self, BinsError> {
        let ok = edges.first().is_none_or(|&e| e > 0) && edges.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(BinsError(format!("{edges:?}")));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// `(min, max)` of every bin, in order.
    pub fn ranges(&self) -> Vec<(usize, Option<usize>)> {
        let mut lo = 0;
        let mut out = Vec::new();
        for &e in &self.edges {
            out.push((lo, Some(e)));
            lo = e;
        }
        out.push((lo, None));
        out
    }
}

impl FromStr for LocBins {
    type Err = BinsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let edges = s
            .split(',')
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| BinsError(s.to_string()))?;
        LocBins::new(edges).map_err(|_| BinsError(s.to_string()))
    }
}

fn bin_name(lo: usize, hi: Option<usize>) -> String {
    match hi {
        Some(h) => format!("[{lo},{h})"),
        None => format!("[{lo},inf)"),
    }
}

/// Global report plus one report per changed-line bin.
pub fn stratified_report(scored: &[Scored], bins: &LocBins, threshold: f64, budget: Option<usize>) -> EvalReport {
    let mut report = evaluate(scored, threshold, budget);
    report.strata = bins
        .ranges()
        .into_iter()
        .map(|(lo, hi)| {
            let part: Vec<Scored> = scored
                .iter()
                .filter(|s| s.changed_loc >= lo && hi.is_none_or(|h| s.changed_loc < h))
                .copied()
                .collect();
            Stratum { name: bin_name(lo, hi), min_loc: lo, max_loc: hi, report: evaluate(&part, threshold, budget) }
        })
        .collect();
    report
}

impl EvalReport {
    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let header = format!(
            "{:<14} {:>7} {:>6} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9} {:>9}",
            "subset", "commits", "TP", "FP", "FN", "TN", "precision", "recall", "F1", "accuracy"
        );
        let _ = writeln!(s, "{header}");
        let _ = writeln!(s, "{}", "-".repeat(header.len()));
        let mut row = |name: &str, r: &EvalReport| {
            let c = r.confusion;
            let _ = writeln!(
                s,
                "{:<14} {:>7} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                name, r.commits, c.tp, c.fp, c.fn_, c.tn, r.precision, r.recall, r.f1, r.accuracy
            );
        };
        row("all", self);
        for st in &self.strata {
            row(&st.name, &st.report);
        }
        if let Some(ce) = self.cost_effort {
            let _ = writeln!(s, "\nCE@{}: {:.4}", fmt_budget(ce.budget), ce.fraction);
        }
        s
    }
}

fn fmt_budget(b: usize) -> String {
    if b >= 1000 && b.is_multiple_of(1000) {
        format!("{}K", b / 1000)
    } else {
        b.to_string()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}
