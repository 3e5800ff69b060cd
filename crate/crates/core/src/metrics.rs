//! Confusion matrices, F1 scores and result tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{Veracity, N_CLASSES};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{preds} predictions but {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
}

/// `counts[true][pred]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..N_CLASSES)
            .filter(|&t| t != c)
            .map(|t| self.counts[t][c])
            .sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..N_CLASSES)
            .filter(|&p| p != c)
            .map(|p| self.counts[c][p])
            .sum()
    }
}

pub fn confusion(preds: &[Veracity], labels: &[Veracity]) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(labels) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// `2TP / (2TP + FP + FN)` per class, 0 when the denominator is 0.
pub fn f1_per_class(cm: &ConfusionMatrix) -> [f64; N_CLASSES] {
    std::array::from_fn(|c| {
        let tp = cm.true_positives(c);
        let denom = 2 * tp + cm.false_positives(c) + cm.false_negatives(c);
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    })
}

/// Unweighted mean over all three classes, present or not.
pub fn f1_macro(per_class: &[f64; N_CLASSES]) -> f64 {
    per_class.iter().sum::<f64>() / N_CLASSES as f64
}

/// One cell group of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub input_setup: String,
    pub dataset: String,
    pub f1_support: f64,
    pub f1_refute: f64,
    pub f1_nei: f64,
    pub f1_macro: f64,
    pub instances: u64,
    pub skipped: u64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_predictions(
        model: impl Into<String>,
        input_setup: impl Into<String>,
        dataset: impl Into<String>,
        preds: &[Veracity],
        labels: &[Veracity],
        skipped: u64,
    ) -> Result<Self, MetricsError> {
        let cm = confusion(preds, labels)?;
        let f1 = f1_per_class(&cm);
        Ok(Self {
            model: model.into(),
            input_setup: input_setup.into(),
            dataset: dataset.into(),
            f1_support: f1[0],
            f1_refute: f1[1],
            f1_nei: f1[2],
            f1_macro: f1_macro(&f1),
            instances: cm.total(),
            skipped,
            confusion: cm,
        })
    }

    pub fn per_class(&self) -> [f64; N_CLASSES] {
        [self.f1_support, self.f1_refute, self.f1_nei]
    }
}

/// Rounds to `places` decimals, half to even, working on the shortest decimal
/// form of `x` (so 0.5245 gives 0.524 even though its binary value is a hair
/// below the midpoint).
pub fn round_half_even(x: f64, places: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{}", x.abs());
    let (int_part, frac_part) = s.split_once('.').unwrap_or((&s, ""));
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes())
        .map(|b| b - b'0')
        .collect();
    let int_len = int_part.len();
    let keep = int_len + places;
    if digits.len() < keep {
        digits.resize(keep, 0);
    }
    let rest = &digits[keep..];
    let round_up = match rest.first() {
        None => false,
        Some(&d) if d > 5 => true,
        Some(&d) if d < 5 => false,
        Some(_) => rest[1..].iter().any(|&d| d != 0) || digits[keep - 1] % 2 == 1,
    };
    digits.truncate(keep);
    let mut int_len = int_len;
    if round_up {
        let mut i = keep;
        loop {
            if i == 0 {
                digits.insert(0, 1);
                int_len += 1;
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let to_str = |ds: &[u8]| ds.iter().map(|d| (d + b'0') as char).collect::<String>();
    let mut out = String::new();
    if x.is_sign_negative() && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.push_str(&to_str(&digits[..int_len]));
    if places > 0 {
        out.push('.');
        out.push_str(&to_str(&digits[int_len..]));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    /// Aligned plain-text table.
    #[default]
    Text,
    /// One JSON object per line.
    Records,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "records" => Ok(ReportFormat::Records),
            other => Err(format!("unknown format: {other}")),
        }
    }
}

/// Renders reports in the order given.
pub fn report(results: &[EvalReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Records => results
            .iter()
            .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
            .collect(),
        ReportFormat::Text => {
            let header = [
                "Model", "Inputs", "Dataset", "Support", "Refute", "NEI", "F1-macro",
            ]
            .map(String::from);
            let rows: Vec<[String; 7]> = results
                .iter()
                .map(|r| {
                    [
                        r.model.clone(),
                        r.input_setup.clone(),
                        r.dataset.clone(),
                        round_half_even(r.f1_support, 3),
                        round_half_even(r.f1_refute, 3),
                        round_half_even(r.f1_nei, 3),
                        round_half_even(r.f1_macro, 3),
                    ]
                })
                .collect();
            render_table(&header, &rows, 3)
        }
    }
}

/// Left-aligns the first `text_cols` columns and right-aligns the rest.
pub fn render_table<const N: usize>(
    header: &[String; N],
    rows: &[[String; N]],
    text_cols: usize,
) -> String {
    let mut widths: [usize; N] = std::array::from_fn(|i| header[i].chars().count());
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String; N]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i < text_cols {
                    format!("{:<w$}", c, w = widths[i])
                } else {
                    format!("{:>w$}", c, w = widths[i])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    let rule: usize = widths.iter().sum::<usize>() + 2 * (N - 1);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}
