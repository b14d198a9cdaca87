//! CSV output for scenario runs.

use std::fs;
use std::io::{self, Result};
use std::path::Path;

use crate::scenario::Report;

/// Writes `<name>.csv` with a leading `# params: {...}` line recording the
/// resolved parameters, then the header and rows.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    let mut out = format!("# params: {}\n", report.params).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&report.columns).map_err(csv_err)?;
        for row in &report.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    fs::write(dir.join(format!("{}.csv", report.name)), out)?;
    Ok(())
}

/// Writes `summary.csv`: one line per request in declaration order.
pub fn write_summary(dir: &Path, reports: &[Report]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    w.write_record(["report", "rows", "pass", "fail", "skip"]).map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.rows.len().to_string(),
            r.tally.pass.to_string(),
            r.tally.fail.to_string(),
            r.tally.skip.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Tally;
    use serde_json::json;

    #[test]
    fn report_starts_with_params() {
        let dir = tempfile::tempdir().unwrap();
        let r = Report {
            name: "01-x".into(),
            params: json!({"eps": 0.5}),
            columns: vec!["a", "b"],
            rows: vec![vec!["1".into(), "two, three".into()]],
            tally: Tally { pass: 1, fail: 0, skip: 0 },
        };
        write_report(dir.path(), &r).unwrap();
        write_summary(dir.path(), &[r]).unwrap();
        let text = fs::read_to_string(dir.path().join("01-x.csv")).unwrap();
        assert_eq!(text, "# params: {\"eps\":0.5}\na,b\n1,\"two, three\"\n");
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().nth(1), Some("01-x,1,1,0,0"));
    }
}
