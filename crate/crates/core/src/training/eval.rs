use std::fmt;

use super::Dataset;
use crate::error::{Error, Result};
use crate::models::Scorer;
use crate::parallel;

/// Pairwise ranking errors of one scorer, optionally relative to a baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRateReport {
    pub errors: usize,
    pub total: usize,
    pub rate: f64,
    pub baseline_rate: Option<f64>,
    /// `100 · rate / baseline_rate`.
    pub relative_percent: Option<f64>,
}

impl ErrorRateReport {
    pub fn new(errors: usize, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::Empty("evaluation set"));
        }
        if errors > total {
            return Err(Error::invalid(format!("{errors} errors out of {total}")));
        }
        Ok(ErrorRateReport {
            errors,
            total,
            rate: errors as f64 / total as f64,
            baseline_rate: None,
            relative_percent: None,
        })
    }

    /// Attaches the baseline. A baseline without errors leaves the relative
    /// figure undefined, which is an error.
    pub fn against(mut self, baseline: &ErrorRateReport) -> Result<Self> {
        if baseline.rate == 0.0 {
            return Err(Error::invalid(
                "baseline makes no errors; relative error is undefined",
            ));
        }
        self.baseline_rate = Some(baseline.rate);
        self.relative_percent = Some(100.0 * self.rate / baseline.rate);
        Ok(self)
    }
}

impl fmt::Display for ErrorRateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "errors={} total={} rate={:.6}",
            self.errors, self.total, self.rate
        )?;
        if let (Some(b), Some(r)) = (self.baseline_rate, self.relative_percent) {
            write!(f, " baseline_rate={b:.6} relative={r:.2}%")?;
        }
        Ok(())
    }
}

/// Counts examples with `f(q, rel) ≤ f(q, irrel)`; ties are errors.
pub fn pairwise_error_rate(scorer: &dyn Scorer, data: &Dataset) -> Result<ErrorRateReport> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let wrong = parallel::map(data.examples(), |_, e| -> Result<bool> {
        let rel = scorer.score(&e.query, &e.rel)?;
        let irrel = scorer.score(&e.query, &e.irrel)?;
        // NaN scores count as errors
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        Ok(!(rel > irrel))
    });
    let mut errors = 0;
    for w in wrong {
        errors += usize::from(w?);
    }
    ErrorRateReport::new(errors, data.len())
}

/// One row of the final comparison table: error rates as a percentage of
/// the baseline's on the validation and test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: String,
    pub validation: ErrorRateReport,
    pub test: ErrorRateReport,
}

/// Renders rows as `model variant | validation % | test %` with the
/// baseline first at 100.
pub fn format_comparison(baseline: &VariantResult, rows: &[VariantResult]) -> String {
    let width = rows
        .iter()
        .chain(std::iter::once(baseline))
        .map(|r| r.variant.len())
        .max()
        .unwrap_or(0)
        .max("Model".len());
    let mut out = format!(
        "{:<width$}  {:>10}  {:>10}\n",
        "Model", "Validation", "Test"
    );
    let pct = |r: &ErrorRateReport| {
        r.relative_percent
            .map_or_else(|| "n/a".to_string(), |p| format!("{p:.2}"))
    };
    out.push_str(&format!(
        "{:<width$}  {:>10}  {:>10}\n",
        baseline.variant, "100.00", "100.00"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>10}\n",
            r.variant,
            pct(&r.validation),
            pct(&r.test)
        ));
    }
    out
}
