//! Aggregation and rendering of benchmark results: solve rate with a
//! Student-t confidence interval over per-run rates, pooled median APE
//! (parameter-tuning questions only), and per-category / per-class
//! breakdowns in table, CSV and JSON form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Category, EvalResult};

/// Median of a sample; `None` when empty. Even-sized samples average the
/// two middle ranks.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Two-sided Student-t confidence interval at significance 0.05 over
/// per-run solve rates. Defined for two or more runs.
pub fn solve_rate_confidence_interval(per_run_rates: &[f64]) -> Option<(f64, f64)> {
    let n = per_run_rates.len();
    if n < 2 {
        return None;
    }
    let mean = per_run_rates.iter().sum::<f64>() / n as f64;
    let variance = per_run_rates
        .iter()
        .map(|r| (r - mean).powi(2))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let std_error = (variance / n as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    Some((mean - t * std_error, mean + t * std_error))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryStats {
    pub label: String,
    pub questions: usize,
    pub solve_rate: f64,
    pub median_ape: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub agent: String,
    pub n_runs: usize,
    pub per_run_solve_rates: Vec<f64>,
    /// Mean of the per-run solve rates, in percent.
    pub solve_rate: f64,
    /// Two-sided 95% interval over per-run rates; absent for single runs.
    pub solve_rate_ci: Option<(f64, f64)>,
    /// Median APE pooled over all runs' parameter-tuning answers.
    pub median_ape: Option<f64>,
    pub by_category: Vec<CategoryStats>,
    pub by_class: Vec<CategoryStats>,
    pub results: Vec<EvalResult>,
}

impl Report {
    pub fn aggregate(
        agent: &str,
        per_run_solve_rates: Vec<f64>,
        results: Vec<EvalResult>,
    ) -> Report {
        let n_runs = per_run_solve_rates.len();
        let solve_rate = if per_run_solve_rates.is_empty() {
            0.0
        } else {
            per_run_solve_rates.iter().sum::<f64>() / n_runs as f64
        };
        let solve_rate_ci = solve_rate_confidence_interval(&per_run_solve_rates);
        let apes: Vec<f64> = results
            .iter()
            .filter(|r| r.category == Category::ParameterTuning)
            .filter_map(|r| r.ape)
            .collect();
        let median_ape = median(&apes);

        let by_category = breakdown(&results, |r| r.category.label().to_string());
        let by_class = breakdown(&results, |r| r.class.clone());

        Report {
            agent: agent.to_string(),
            n_runs,
            per_run_solve_rates,
            solve_rate,
            solve_rate_ci,
            median_ape,
            by_category,
            by_class,
            results,
        }
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("agent: {}\n", self.agent));
        out.push_str(&format!("runs: {}\n", self.n_runs));
        out.push_str(&format!("solve_rate: {:.1}\n", self.solve_rate));
        match self.solve_rate_ci {
            Some((lo, hi)) => out.push_str(&format!("solve_rate_ci95: ({lo:.1}, {hi:.1})\n")),
            None => out.push_str("solve_rate_ci95: n/a (single run)\n"),
        }
        match self.median_ape {
            Some(ape) => out.push_str(&format!("median_ape: {ape:.1}\n")),
            None => out.push_str("median_ape: n/a\n"),
        }
        out.push('\n');
        out.push_str(&render_stats_block("category", &self.by_category));
        out.push('\n');
        out.push_str(&render_stats_block("class", &self.by_class));
        out
    }

    /// Per-question CSV rows (all runs).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "run,question_id,category,class,solved,measured_value,measured_unit,ape_pct,failure_reason\n",
        );
        for r in &self.results {
            let (value, unit) = r
                .measured
                .as_ref()
                .map(|m| (format!("{:e}", m.value), m.unit.clone()))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.run,
                r.question_id,
                r.category.label(),
                r.class,
                r.solved,
                value,
                unit,
                r.ape.map(|a| format!("{a:.3}")).unwrap_or_default(),
                csv_escape(r.failure_reason.as_deref().unwrap_or("")),
            ));
        }
        out
    }
}

fn breakdown<F>(results: &[EvalResult], key: F) -> Vec<CategoryStats>
where
    F: Fn(&EvalResult) -> String,
{
    let mut groups: BTreeMap<String, Vec<&EvalResult>> = BTreeMap::new();
    for r in results {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(label, rs)| {
            let solved = rs.iter().filter(|r| r.solved).count();
            let apes: Vec<f64> = rs
                .iter()
                .filter(|r| r.category == Category::ParameterTuning)
                .filter_map(|r| r.ape)
                .collect();
            CategoryStats {
                label,
                questions: rs.len(),
                solve_rate: 100.0 * solved as f64 / rs.len() as f64,
                median_ape: median(&apes),
            }
        })
        .collect()
}

fn render_stats_block(what: &str, stats: &[CategoryStats]) -> String {
    let mut out = format!(
        "{:<24} {:>9} {:>12} {:>12}\n",
        what, "answers", "solve_rate", "median_ape"
    );
    for s in stats {
        out.push_str(&format!(
            "{:<24} {:>9} {:>11.1}% {:>12}\n",
            s.label,
            s.questions,
            s.solve_rate,
            s.median_ape
                .map(|a| format!("{a:.1}%"))
                .unwrap_or_else(|| "-".to_string()),
        ));
    }
    out
}

fn csv_escape(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(
        id: &str,
        run: usize,
        category: Category,
        solved: bool,
        ape: Option<f64>,
    ) -> EvalResult {
        EvalResult {
            question_id: id.to_string(),
            run,
            category,
            class: "buck".to_string(),
            solved,
            measured: None,
            ape,
            failure_reason: None,
        }
    }

    #[test]
    fn median_basics() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[4.0]), Some(4.0));
        assert_eq!(median(&[1.0, 9.0]), Some(5.0));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    }

    #[test]
    fn median_is_outlier_robust() {
        let mut apes = vec![3.0, 3.5, 4.0, 4.5, 5.0];
        let before = median(&apes).unwrap();
        apes.push(500.0);
        let after = median(&apes).unwrap();
        // One 500% outlier moves the median by at most one rank position.
        assert!((after - before).abs() <= 0.5, "{before} -> {after}");
    }

    #[test]
    fn ci_zero_width_for_identical_runs() {
        let (lo, hi) = solve_rate_confidence_interval(&[40.0, 40.0]).unwrap();
        assert_eq!(lo, 40.0);
        assert_eq!(hi, 40.0);
    }

    #[test]
    fn ci_contains_the_mean() {
        let rates = [10.0, 30.0, 50.0, 20.0, 40.0];
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let (lo, hi) = solve_rate_confidence_interval(&rates).unwrap();
        assert!(lo <= mean && mean <= hi);
        assert!(lo < hi);
    }

    #[test]
    fn no_ci_for_single_run() {
        assert!(solve_rate_confidence_interval(&[50.0]).is_none());
    }

    #[test]
    fn topology_results_never_contribute_ape() {
        let results = vec![
            result("p1", 0, Category::ParameterTuning, true, Some(4.0)),
            result("p2", 0, Category::ParameterTuning, false, Some(6.0)),
            // A topology result carrying a (bogus) APE must be ignored.
            result("t1", 0, Category::TopologyAdaption, false, Some(500.0)),
        ];
        let report = Report::aggregate("test", vec![66.0], results);
        assert_eq!(report.median_ape, Some(5.0));
        let flipped: Vec<EvalResult> = report
            .results
            .iter()
            .cloned()
            .map(|mut r| {
                if r.category == Category::TopologyAdaption {
                    r.solved = !r.solved;
                }
                r
            })
            .collect();
        let report2 = Report::aggregate("test", vec![66.0], flipped);
        assert_eq!(report2.median_ape, report.median_ape);
    }

    #[test]
    fn solve_rate_within_bounds_and_table_renders() {
        let results = vec![
            result("a", 0, Category::ParameterTuning, true, Some(1.0)),
            result("b", 0, Category::ParameterTuning, false, Some(80.0)),
        ];
        let report = Report::aggregate("probe", vec![50.0], results);
        assert!(report.solve_rate >= 0.0 && report.solve_rate <= 100.0);
        let table = report.table();
        assert!(table.contains("solve_rate: 50.0"));
        assert!(table.contains("parameter_tuning"));
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 3);
    }
}
