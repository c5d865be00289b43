//! Cross-method comparison tables.

use thiserror::Error;

use crate::csvio::MethodSummary;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("need at least 2 method summaries, got {0}")]
    TooFew(usize),
    #[error("summaries describe different problems: `{a}` vs `{b}`")]
    MismatchedProblems { a: String, b: String },
}

/// Markdown and CSV views of the same comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub markdown: String,
    pub csv: String,
}

fn problem_label(s: &MethodSummary) -> String {
    format!(
        "{} n={} d={} lambda={} cond={} noise={} seed={}",
        s.kind, s.n, s.d, s.lambda, s.condition_target, s.noise, s.problem_seed
    )
}

/// Tabulate final suboptimality, fitted slope, and communication per method.
///
/// The `downlink_x` column is the compression factor of each method's
/// downlink against the first row's (first = 1; a dense-broadcast baseline
/// against a b-bit method shows roughly 32/b).
pub fn compare_methods(summaries: &[MethodSummary]) -> Result<CompareReport, CompareError> {
    if summaries.len() < 2 {
        return Err(CompareError::TooFew(summaries.len()));
    }
    let first = &summaries[0];
    for s in &summaries[1..] {
        if !s.same_problem(first) {
            return Err(CompareError::MismatchedProblems {
                a: problem_label(first),
                b: problem_label(s),
            });
        }
    }

    let mut markdown = String::new();
    markdown.push_str(&format!("problem: {}\n\n", problem_label(first)));
    markdown.push_str(
        "| method | final_subopt_median | slope | r2 | uplink_bytes | downlink_bytes | downlink_x |\n",
    );
    markdown.push_str("|---|---|---|---|---|---|---|\n");
    let mut csv = String::from(
        "method,final_suboptimality_median,slope,r2,uplink_bytes,downlink_bytes,downlink_x\n",
    );
    let base_down = first.downlink_bytes;
    for s in summaries {
        let downlink_x = if s.downlink_bytes > 0 {
            base_down as f64 / s.downlink_bytes as f64
        } else {
            f64::NAN
        };
        markdown.push_str(&format!(
            "| {} | {:.6e} | {:.4} | {:.4} | {} | {} | {:.4} |\n",
            s.method, s.final_suboptimality_median, s.slope, s.r2, s.uplink_bytes, s.downlink_bytes, downlink_x
        ));
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.method, s.final_suboptimality_median, s.slope, s.r2, s.uplink_bytes, s.downlink_bytes, downlink_x
        ));
    }
    Ok(CompareReport { markdown, csv })
}
