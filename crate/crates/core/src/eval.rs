//! Leave-subjects-out evaluation: confusion matrices, F1 scores, and the
//! one-sample t-test used to compare feature sets across folds.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major confusion counts; rows are truth, columns prediction, labels
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Per-class precision/recall/F1 plus the macro and support-weighted
/// aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub labels: Vec<String>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    pub overall_f1: f64,
}

/// Splits items by subject id into (train, test). `test_subjects` must be
/// a non-empty proper subset of the subjects present.
pub fn split_by_subjects<T, F>(
    items: Vec<T>,
    subject_of: F,
    test_subjects: &BTreeSet<String>,
) -> Result<(Vec<T>, Vec<T>)>
where
    F: Fn(&T) -> &str,
{
    if test_subjects.is_empty() {
        return Err(Error::Argument("test subject set is empty".into()));
    }
    let all: BTreeSet<String> = items
        .iter()
        .map(|item| subject_of(item).to_string())
        .collect();
    for s in test_subjects {
        if !all.contains(s) {
            return Err(Error::Argument(format!("unknown subject `{s}`")));
        }
    }
    if test_subjects.len() == all.len() {
        return Err(Error::Argument(
            "test subjects must be a proper subset; nothing left to train on".into(),
        ));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for item in items {
        if test_subjects.contains(subject_of(&item)) {
            test.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, test))
}

/// Accumulates a confusion matrix. Label order is the lexicographic union
/// of truths and predictions.
pub fn confusion(preds: &[String], truths: &[String]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::Argument(format!(
            "prediction/truth length mismatch: {} vs {}",
            preds.len(),
            truths.len()
        )));
    }
    let labels: Vec<String> = preds
        .iter()
        .chain(truths.iter())
        .cloned()
        .collect::<BTreeSet<String>>()
        .into_iter()
        .collect();
    let index = |label: &str| labels.iter().position(|l| l == label).unwrap();
    let mut counts = vec![vec![0usize; labels.len()]; labels.len()];
    for (pred, truth) in preds.iter().zip(truths.iter()) {
        counts[index(truth)][index(pred)] += 1;
    }
    Ok(ConfusionMatrix { labels, counts })
}

/// F1 per class with 0/0 defined as 0; macro is the unweighted mean,
/// overall the support-weighted mean.
pub fn f1_report(cm: &ConfusionMatrix) -> ScoreReport {
    let k = cm.labels.len();
    let mut precision = vec![0.0; k];
    let mut recall = vec![0.0; k];
    let mut f1 = vec![0.0; k];
    let mut support = vec![0usize; k];
    for c in 0..k {
        let tp = cm.counts[c][c];
        let row: usize = cm.counts[c].iter().sum();
        let col: usize = cm.counts.iter().map(|r| r[c]).sum();
        support[c] = row;
        precision[c] = ratio(tp, col);
        recall[c] = ratio(tp, row);
        f1[c] = if precision[c] + recall[c] > 0.0 {
            2.0 * precision[c] * recall[c] / (precision[c] + recall[c])
        } else {
            0.0
        };
    }
    let macro_f1 = if k > 0 {
        f1.iter().sum::<f64>() / k as f64
    } else {
        0.0
    };
    let total: usize = support.iter().sum();
    let overall_f1 = if total > 0 {
        f1.iter()
            .zip(support.iter())
            .map(|(f, &s)| f * s as f64)
            .sum::<f64>()
            / total as f64
    } else {
        0.0
    };
    ScoreReport {
        labels: cm.labels.clone(),
        precision,
        recall,
        f1,
        macro_f1,
        overall_f1,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Sentinel for the zero-variance, nonzero-mean t statistic.
pub const T_SENTINEL: f64 = 1e15;

/// One-sample two-sided t-test against mean zero: `t = mean / (sd/sqrt n)`
/// with the n-1 standard deviation. All-identical nonzero differences map
/// to the guarded sentinel with p = 0; all-zero differences give t = 0,
/// p = 1.
pub fn one_sample_ttest(differences: &[f64]) -> Result<(f64, usize, f64)> {
    let n = differences.len();
    if n < 2 {
        return Err(Error::Argument(format!(
            "t-test needs at least 2 samples, got {n}"
        )));
    }
    let mean = differences.iter().sum::<f64>() / n as f64;
    let var = differences
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    let df = n - 1;
    let identical = differences.windows(2).all(|w| w[0] == w[1]);
    if identical || var == 0.0 {
        return if mean == 0.0 {
            Ok((0.0, df, 1.0))
        } else {
            Ok((T_SENTINEL.copysign(mean), df, 0.0))
        };
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let p = two_sided_p(t, df as f64);
    Ok((t, df, p))
}

// p = 2 * P(T > |t|) via adaptive Simpson on the t density. The density
// normalization uses a Lanczos log-gamma, and the integral runs over
// [0, |t|] so the tail is 0.5 - integral.
fn two_sided_p(t: f64, df: f64) -> f64 {
    let x = t.abs();
    if x == 0.0 {
        return 1.0;
    }
    let log_c = ln_gamma((df + 1.0) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |u: f64| (log_c - (df + 1.0) / 2.0 * (1.0 + u * u / df).ln()).exp();
    let body = adaptive_simpson(&density, 0.0, x, 1e-10, 40);
    (2.0 * (0.5 - body)).clamp(0.0, 1.0)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let c = 0.5 * (a + b);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, c, fa, fc, fd, left, tol / 2.0, depth - 1)
            + simpson_step(f, c, b, fc, fb, fe, right, tol / 2.0, depth - 1)
    }
}

// Lanczos approximation, g = 7, 9 coefficients.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.3234287776531,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.984369578019572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_93;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

// ---------------------------------------------------------------------
// Report files.

/// Per-class scores as TSV plus aggregate rows.
pub fn write_score_report(report: &ScoreReport, path: &Path) -> Result<()> {
    let mut out = String::from("class\tprecision\trecall\tf1\n");
    for (i, label) in report.labels.iter().enumerate() {
        out.push_str(&format!(
            "{label}\t{:.6}\t{:.6}\t{:.6}\n",
            report.precision[i], report.recall[i], report.f1[i]
        ));
    }
    out.push_str(&format!("macro\t\t\t{:.6}\n", report.macro_f1));
    out.push_str(&format!("overall\t\t\t{:.6}\n", report.overall_f1));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_confusion_tsv(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("truth\\pred");
    for label in &cm.labels {
        out.push('\t');
        out.push_str(label);
    }
    out.push('\n');
    for (label, row) in cm.labels.iter().zip(cm.counts.iter()) {
        out.push_str(label);
        for &c in row {
            out.push_str(&format!("\t{c}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Confusion matrix as an ASCII PGM image, rows normalized to their sum
/// (white = all of the row's mass).
pub fn write_confusion_pgm(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    let k = cm.labels.len();
    let mut out = format!("P2\n{k} {k}\n255\n");
    for row in &cm.counts {
        let total: usize = row.iter().sum();
        let line: Vec<String> = row
            .iter()
            .map(|&c| {
                let v = if total == 0 {
                    0
                } else {
                    (255.0 * c as f64 / total as f64).round() as u32
                };
                v.to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One row per evaluated fold; ttest pairs rows of two such files.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRow {
    pub fold: String,
    pub overall_f1: f64,
    pub macro_f1: f64,
}

const FOLD_HEADER: &str = "fold\toverall_f1\tmacro_f1";

/// Appends a fold row, writing the header if the file does not exist yet.
pub fn append_fold_row(row: &FoldRow, path: &Path) -> Result<()> {
    let mut text = if path.exists() {
        fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    } else {
        format!("{FOLD_HEADER}\n")
    };
    text.push_str(&format!(
        "{}\t{:.6}\t{:.6}\n",
        row.fold, row.overall_f1, row.macro_f1
    ));
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_fold_rows(path: &Path) -> Result<Vec<FoldRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != FOLD_HEADER {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: format!("expected `{FOLD_HEADER}`, got `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Value {
                row: i + 1,
                column: "<fold>".into(),
                detail: "expected 3 tab-separated fields".into(),
            });
        }
        let parse = |s: &str, col: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Value {
                row: i + 1,
                column: col.into(),
                detail: format!("`{s}` is not a number"),
            })
        };
        rows.push(FoldRow {
            fold: fields[0].to_string(),
            overall_f1: parse(fields[1], "overall_f1")?,
            macro_f1: parse(fields[2], "macro_f1")?,
        });
    }
    Ok(rows)
}
