//! Machine-readable outputs: metrics JSON, run-report JSON, and the
//! paragraph-length bucket CSV for external plotting.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::metrics::{Metrics, BUCKET_NAMES};
use crate::harness::train::RunReport;

/// Write metrics as JSON; [`read_metrics`] reproduces the value exactly.
pub fn write_metrics(metrics: &Metrics, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(metrics)?)?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Metrics> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_run_report(report: &RunReport, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn read_run_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Bucket CSV: `bucket,macro_f1,accuracy,count`, one row per length
/// bucket (2, 3, 4, 5, >5). The F1 and accuracy columns cover implicit
/// slots; `count` is all slots in paragraphs of the bucket, so the
/// column sums to the split's slot total.
pub fn bucket_csv(metrics: &Metrics) -> Result<String> {
    let buckets = metrics
        .buckets
        .as_ref()
        .ok_or_else(|| Error::Data("metrics carry no bucket breakdown".into()))?;
    let mut out = String::from("bucket,macro_f1,accuracy,count\n");
    for name in BUCKET_NAMES {
        let b = buckets
            .iter()
            .find(|b| b.bucket == name)
            .ok_or_else(|| Error::Data(format!("bucket '{name}' missing from metrics")))?;
        out.push_str(&format!(
            "{},{},{},{}\n",
            b.bucket, b.implicit.macro_f1, b.implicit.accuracy, b.slot_count
        ));
    }
    Ok(out)
}

pub fn write_bucket_csv(metrics: &Metrics, path: &Path) -> Result<()> {
    fs::write(path, bucket_csv(metrics)?)?;
    Ok(())
}

/// Write `metrics.json` and, when buckets are present, `buckets.csv`.
pub fn emit_report(metrics: &Metrics, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_metrics(metrics, &dir.join("metrics.json"))?;
    if metrics.buckets.is_some() {
        write_bucket_csv(metrics, &dir.join("buckets.csv"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Paragraph, RelationSlot, SlotKind, Token};
    use crate::harness::metrics::metrics_from_labels;

    fn perfect_metrics(buckets: bool) -> Metrics {
        let token = |s: &str| Token { surface: s.into(), pos_id: 0, ner_id: 0 };
        let p = Paragraph::new(
            vec![token("a"), token("b")],
            vec![(0, 0), (1, 1)],
            vec![RelationSlot::new(SlotKind::Implicit, vec![Label::Exp]).unwrap()],
        )
        .unwrap();
        let names: Vec<String> = crate::corpus::ALL_LABELS.iter().map(|l| l.name().to_string()).collect();
        metrics_from_labels(
            &vec![p],
            &[vec![Label::Exp.index()]],
            &names,
            |s| s.gold.iter().map(|l| l.index()).collect(),
            buckets,
        )
        .unwrap()
    }

    #[test]
    fn metrics_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.json");
        let metrics = perfect_metrics(true);
        write_metrics(&metrics, &path).unwrap();
        let again = read_metrics(&path).unwrap();
        assert_eq!(metrics, again);
    }

    #[test]
    fn bucket_csv_has_five_rows_and_perfect_values() {
        let metrics = perfect_metrics(true);
        let csv = bucket_csv(&metrics).unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "bucket,macro_f1,accuracy,count");
        assert_eq!(lines[1], "2,0.25,1,1");
        for name in ["3", "4", "5", ">5"] {
            assert!(lines.iter().any(|l| l.starts_with(&format!("{name},"))), "{name} row missing");
        }
    }

    #[test]
    fn bucketless_metrics_cannot_emit_csv() {
        let metrics = perfect_metrics(false);
        assert!(bucket_csv(&metrics).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let metrics = perfect_metrics(true);
        let err = write_metrics(&metrics, Path::new("/nonexistent-dir-zzz/metrics.json")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
