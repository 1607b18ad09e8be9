//! Planning math and result tabulation. Both emit one table, as aligned
//! text for terminals or CSV for downstream tooling; the CSV form parses
//! back into the same cells.

use std::path::{Path, PathBuf};

use imu_auth::eval::report::{far_fraction_label, mean_sigma_label, Table};
use imu_auth::eval::{
    attempts_for_budget, rule_of_30, rule_of_30_fraction, theoretical_far_denominator,
};

use crate::config::CliError;
use crate::layout::{self, FinalTestRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown format {other:?}, expected text or csv")),
        }
    }
}

pub fn emit(table: &Table, format: OutputFormat) {
    match format {
        OutputFormat::Text => print!("{}", table.to_text()),
        OutputFormat::Csv => print!("{}", table.to_csv()),
    }
}

/// An error rate stated either as a reciprocal fraction ("1/50000") or a
/// decimal ("0.00002"). The fraction form keeps the rule-of-30 arithmetic
/// exact.
#[derive(Debug, Clone, Copy)]
pub enum Rate {
    Fraction { num: u64, den: u64 },
    Decimal(f64),
}

impl std::str::FromStr for Rate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((num, den)) = s.split_once('/') {
            let num: u64 = num.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let den: u64 = den.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            if num == 0 || den == 0 || num >= den {
                return Err(format!("rate {s:?} must be a fraction in (0,1)"));
            }
            Ok(Rate::Fraction { num, den })
        } else {
            let v: f64 = s.parse().map_err(|_| format!("cannot parse rate {s:?}"))?;
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("rate {s:?} must be in (0,1)"));
            }
            Ok(Rate::Decimal(v))
        }
    }
}

impl Rate {
    fn comparisons_for_30_errors(self) -> u64 {
        match self {
            Rate::Fraction { num, den } => rule_of_30_fraction(num, den),
            Rate::Decimal(v) => rule_of_30(v),
        }
    }
}

pub struct PlanArgs {
    pub target_far: Rate,
    pub tar: f64,
    pub users: Option<u64>,
    pub attempts: Option<u64>,
}

/// Sizes a verification study by the rule of 30: enough comparisons that
/// a rate at the target value would produce at least 30 errors.
pub fn plan_table(args: &PlanArgs) -> Result<Table, CliError> {
    if !(args.tar > 0.0 && args.tar < 1.0) {
        return Err(CliError::Usage(format!("--tar {} must be in (0,1)", args.tar)));
    }
    let genuine = rule_of_30(1.0 - args.tar);
    let impostor = args.target_far.comparisons_for_30_errors();
    let mut t = Table::new(
        "study size by the rule of 30",
        vec!["quantity".into(), "value".into()],
    );
    let mut push = |q: &str, v: String| t.push_row(vec![q.into(), v]).expect("two cells per row");
    push("genuine_comparisons", genuine.to_string());
    push("impostor_comparisons", impostor.to_string());
    if let Some(users) = args.users {
        if users < 2 {
            return Err(CliError::Usage("--users must be at least 2".into()));
        }
        push("users", users.to_string());
        push(
            "attempts_per_user_for_impostor_budget",
            attempts_for_budget(users, impostor).to_string(),
        );
        if let Some(attempts) = args.attempts {
            if attempts < 1 {
                return Err(CliError::Usage("--attempts must be at least 1".into()));
            }
            push("attempts_per_user", attempts.to_string());
            push(
                "theoretical_far_floor",
                far_fraction_label(theoretical_far_denominator(users, attempts)),
            );
        }
    } else if args.attempts.is_some() {
        return Err(CliError::Usage("--attempts requires --users".into()));
    }
    Ok(t)
}

/// Collects final-test records; a directory input stands for the record
/// file inside it.
fn read_records(inputs: &[PathBuf]) -> Result<Vec<FinalTestRecord>, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage("pass at least one final-test file or directory".into()));
    }
    inputs
        .iter()
        .map(|p| {
            let path: PathBuf =
                if p.is_dir() { p.join(layout::FINAL_TEST_FILE) } else { p.clone() };
            layout::read_json(&path)
        })
        .collect()
}

/// Per-user FAR table with a cross-user mean row, shaped like the
/// held-out-user summary the pipeline is sized against.
pub fn report_table(inputs: &[PathBuf]) -> Result<Table, CliError> {
    let records = read_records(inputs)?;
    let tar = records[0].tar;
    for r in &records {
        if (r.tar - tar).abs() > 1e-12 {
            return Err(CliError::Data(format!(
                "mixed TAR settings in inputs: {} vs {}",
                r.tar, tar
            )));
        }
    }
    let mut t = Table::new(
        format!("final test, bootstrap FAR at TAR={:.0}%", tar * 100.0),
        vec![
            "user".into(),
            "far_mean".into(),
            "far_std".into(),
            "far_label".into(),
            "iterations".into(),
            "pool".into(),
        ],
    );
    for r in &records {
        t.push_row(vec![
            r.target.0.clone(),
            format!("{}", r.result.far_mean),
            format!("{}", r.result.far_std),
            mean_sigma_label(r.result.far_mean, r.result.far_std),
            r.result.iterations.to_string(),
            r.result.pool_size.to_string(),
        ])
        .expect("six cells per row");
    }
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.result.far_mean).sum::<f64>() / n;
    let var = records.iter().map(|r| (r.result.far_mean - mean).powi(2)).sum::<f64>() / n;
    t.push_row(vec![
        "mean".into(),
        format!("{mean}"),
        format!("{}", var.sqrt()),
        mean_sigma_label(mean, var.sqrt()),
        String::new(),
        String::new(),
    ])
    .expect("six cells per row");
    Ok(t)
}

pub fn run_report(inputs: &[PathBuf], format: OutputFormat, out: Option<&Path>) -> Result<(), CliError> {
    let table = report_table(inputs)?;
    if let Some(path) = out {
        std::fs::write(path, table.to_csv())?;
    }
    emit(&table, format);
    Ok(())
}
