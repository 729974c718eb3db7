use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vrnmt::metrics::{EvalReport, ReportRow};
use vrnmt::training::EpochLog;

use crate::cli::ReportArgs;
use crate::error::{usage, CliResult};

pub const BUCKET_HEADER: &str = "system,testset,bucket,value,count";

/// One parsed `SYSTEM:TESTSET=PATH` evaluation file.
struct EvalFile {
    system: String,
    testset: String,
    rows: Vec<(String, ReportRow)>,
}

fn read_text(path: &Path) -> CliResult<String> {
    Ok(fs::read_to_string(path).map_err(vrnmt::Error::from)?)
}

fn parse_log(text: &str) -> CliResult<Vec<EpochLog>> {
    let lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with("epoch"));
    Ok(lines.map(EpochLog::parse).collect::<vrnmt::Result<_>>()?)
}

/// First-seen order without duplicates.
fn ordered<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

fn training_table(logs: &[(String, Vec<EpochLog>)]) -> String {
    let mut out = String::from("training\n");
    let _ = writeln!(out, "{:<16} {:>6} {:>10} {:>14} {:>14} {:>10}", "system", "epochs", "best_epoch", "best_valid_nll", "final_neg_elbo", "seconds");
    for (system, log) in logs {
        let best = log.iter().min_by(|a, b| a.valid_nll.total_cmp(&b.valid_nll));
        let last = log.last();
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>10} {:>14.6} {:>14.6} {:>10.1}",
            system,
            log.len(),
            best.map_or(0, |b| b.epoch),
            best.map_or(f64::NAN, |b| b.valid_nll),
            last.map_or(f64::NAN, |l| l.train_neg_elbo),
            log.iter().map(|l| l.seconds).sum::<f64>()
        );
    }
    out
}

/// Systems as rows, test sets as columns, plus the row average when every
/// test set is present.
fn metric_table(metric: &str, evals: &[EvalFile]) -> String {
    let mut values: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for e in evals {
        for (m, row) in &e.rows {
            if m == metric && row.bucket == "all" {
                values.insert((&e.system, &e.testset), row.value);
            }
        }
    }
    let relevant: Vec<&EvalFile> = evals.iter().filter(|e| values.contains_key(&(e.system.as_str(), e.testset.as_str()))).collect();
    let systems = ordered(relevant.iter().map(|e| e.system.as_str()));
    let testsets = ordered(relevant.iter().map(|e| e.testset.as_str()));
    let mut out = format!("{metric}\n{:<16}", "system");
    for t in &testsets {
        let _ = write!(out, " {t:>10}");
    }
    let _ = writeln!(out, " {:>10}", "avg");
    for s in &systems {
        let _ = write!(out, "{s:<16}");
        let row: Vec<Option<f64>> = testsets.iter().map(|t| values.get(&(s.as_str(), t.as_str())).copied()).collect();
        for v in &row {
            match v {
                Some(v) => {
                    let _ = write!(out, " {v:>10.2}");
                }
                None => {
                    let _ = write!(out, " {:>10}", "-");
                }
            }
        }
        let avg = row.iter().copied().collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / v.len() as f64);
        match avg {
            Some(a) => {
                let _ = writeln!(out, " {a:>10.2}");
            }
            None => {
                let _ = writeln!(out, " {:>10}", "-");
            }
        }
    }
    out
}

/// Per-bucket rows; values pass through unchanged.
fn bucket_csv(evals: &[EvalFile]) -> String {
    let mut out = format!("{BUCKET_HEADER}\n");
    for e in evals {
        for (_, row) in e.rows.iter().filter(|(_, r)| r.bucket != "all") {
            let _ = writeln!(out, "{},{},{},{},{}", e.system, e.testset, row.bucket, row.value, row.count);
        }
    }
    out
}

fn parse_eval_spec(spec: &str) -> CliResult<(String, String, &str)> {
    let (key, path) = spec.split_once('=').ok_or_else(|| usage(format!("--eval expects SYSTEM:TESTSET=PATH, got {spec:?}")))?;
    let (system, testset) = key.split_once(':').ok_or_else(|| usage(format!("--eval expects SYSTEM:TESTSET=PATH, got {spec:?}")))?;
    if system.is_empty() || testset.is_empty() || system.contains(',') || testset.contains(',') {
        return Err(usage(format!("bad system or test set name in {spec:?}")));
    }
    Ok((system.to_string(), testset.to_string(), path))
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    if a.logs.is_empty() && a.evals.is_empty() {
        return Err(usage("report needs at least one --log or --eval"));
    }
    let mut logs = Vec::new();
    for spec in &a.logs {
        let (system, path) = spec.split_once('=').ok_or_else(|| usage(format!("--log expects SYSTEM=PATH, got {spec:?}")))?;
        logs.push((system.to_string(), parse_log(&read_text(Path::new(path))?)?));
    }
    let mut evals = Vec::new();
    for spec in &a.evals {
        let (system, testset, path) = parse_eval_spec(spec)?;
        let rows = EvalReport::parse_csv(&read_text(Path::new(path))?)?;
        evals.push(EvalFile { system, testset, rows });
    }

    let mut table = String::new();
    if !logs.is_empty() {
        table.push_str(&training_table(&logs));
    }
    for metric in ordered(evals.iter().flat_map(|e| e.rows.iter().map(|(m, _)| m.as_str()))) {
        if !table.is_empty() {
            table.push('\n');
        }
        table.push_str(&metric_table(&metric, &evals));
    }
    print!("{table}");
    if let Some(path) = &a.table {
        fs::write(path, &table).map_err(vrnmt::Error::from)?;
    }
    if let Some(path) = &a.buckets {
        fs::write(path, bucket_csv(&evals)).map_err(vrnmt::Error::from)?;
    }
    Ok(())
}
