use std::io::{Read, Write};
use std::path::Path;

use super::record::{Cohort, Gender, Group, Provenance, SubjectRecord, N_ROI};
use crate::error::{Error, Result};

/// Leading non-ROI columns; `roi_000..roi_099` follow.
pub const CSV_HEADER_PREFIX: [&str; 5] = ["subject_id", "session_day", "group", "age", "gender"];

fn header() -> Vec<String> {
    CSV_HEADER_PREFIX
        .iter()
        .map(|s| s.to_string())
        .chain((0..N_ROI).map(|i| format!("roi_{i:03}")))
        .collect()
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Cohort> {
    let file = std::fs::File::open(path.as_ref())?;
    read_cohort(file)
}

/// Parses the cohort table, collecting every malformed row before failing.
pub fn read_cohort<R: Read>(reader: R) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let expected = header();
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let missing: Vec<&String> = expected.iter().filter(|c| !found.contains(c)).collect();
    if !missing.is_empty() {
        return Err(Error::Ingest(vec![format!(
            "header is missing column(s): {}",
            missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )]));
    }
    let positions: Vec<usize> = expected.iter().map(|c| found.iter().position(|f| f == c).unwrap()).collect();

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != found.len() {
            errors.push(format!("line {line}: expected {} fields, found {}", found.len(), row.len()));
            continue;
        }
        match parse_row(&row, &positions) {
            Ok(r) => records.push(r),
            Err(msg) => errors.push(format!("line {line}: {msg}")),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Ingest(errors));
    }
    Ok(Cohort { records, provenance: Provenance::Ingested })
}

fn parse_row(row: &csv::StringRecord, pos: &[usize]) -> std::result::Result<SubjectRecord, String> {
    let field = |i: usize| row.get(pos[i]).unwrap_or("");
    let subject_id = field(0).to_string();
    if subject_id.is_empty() {
        return Err("empty subject_id".into());
    }
    let session_day = match field(1) {
        "" => None,
        s => Some(s.parse::<i64>().map_err(|_| format!("session_day `{s}` is not an integer"))?),
    };
    let group = match field(2) {
        "HC" => Group::HC,
        "AD" => Group::AD,
        s => return Err(format!("unknown group label `{s}`")),
    };
    let age: f64 = field(3).parse().map_err(|_| format!("age `{}` is not numeric", field(3)))?;
    if !(age > 0.0 && age.is_finite()) {
        return Err(format!("age must be positive, got {age}"));
    }
    let gender = match field(4) {
        "M" => Gender::M,
        "F" => Gender::F,
        s => return Err(format!("unknown gender `{s}`")),
    };
    let mut roi = Vec::with_capacity(N_ROI);
    for k in 0..N_ROI {
        let s = field(5 + k);
        let v: f64 = s.parse().map_err(|_| format!("roi_{k:03} `{s}` is not numeric"))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("roi_{k:03} must be a finite non-negative volume, got {v}"));
        }
        roi.push(v);
    }
    Ok(SubjectRecord { subject_id, session_day, group, age, gender, roi })
}

/// Writes the cohort in the ingestion schema. Floats use the shortest
/// representation that round-trips.
pub fn write_cohort<W: Write>(writer: W, cohort: &Cohort) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header())?;
    for r in &cohort.records {
        let mut fields = Vec::with_capacity(5 + N_ROI);
        fields.push(r.subject_id.clone());
        fields.push(r.session_day.map(|d| d.to_string()).unwrap_or_default());
        fields.push(r.group.to_string());
        fields.push(r.age.to_string());
        fields.push(r.gender.to_string());
        fields.extend(r.roi.iter().map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, group: &str, n_roi: usize) -> String {
        let mut s = format!("{id},0,{group},70.5,M");
        for i in 0..n_roi {
            s.push_str(&format!(",{}", 100 + i));
        }
        s
    }

    fn table(rows: &[String]) -> String {
        let mut s = header().join(",");
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    #[test]
    fn happy_path_preserves_groups() {
        let t = table(&[row("a", "HC", 100), row("b", "AD", 100), row("c", "HC", 100)]);
        let c = read_cohort(t.as_bytes()).unwrap();
        assert_eq!(c.records.len(), 3);
        let groups: Vec<Group> = c.records.iter().map(|r| r.group).collect();
        assert_eq!(groups, vec![Group::HC, Group::AD, Group::HC]);
        assert_eq!(c.records[1].roi[99], 199.0);
        assert_eq!(c.records[0].session_day, Some(0));
    }

    #[test]
    fn short_row_names_line() {
        let t = table(&[row("a", "HC", 100), row("b", "HC", 99)]);
        match read_cohort(t.as_bytes()) {
            Err(Error::Ingest(errs)) => {
                assert_eq!(errs.len(), 1);
                assert!(errs[0].starts_with("line 3"), "{errs:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_all_reported() {
        let mut bad_roi = row("b", "HC", 100);
        bad_roi = bad_roi.replacen(",100,", ",abc,", 1);
        let t = table(&[row("a", "XX", 100), bad_roi]);
        match read_cohort(t.as_bytes()) {
            Err(Error::Ingest(errs)) => {
                assert_eq!(errs.len(), 2);
                assert!(errs[0].contains("unknown group"));
                assert!(errs[1].contains("roi_000"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        let t = "subject_id,group,age\na,HC,3";
        match read_cohort(t.as_bytes()) {
            Err(Error::Ingest(errs)) => assert!(errs[0].contains("session_day")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_session_day_allowed() {
        let r = row("a", "HC", 100).replacen(",0,", ",,", 1);
        let c = read_cohort(table(&[r]).as_bytes()).unwrap();
        assert_eq!(c.records[0].session_day, None);
    }

    #[test]
    fn write_then_read() {
        let t = table(&[row("a", "HC", 100), row("b", "AD", 100)]);
        let c = read_cohort(t.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_cohort(&mut buf, &c).unwrap();
        assert_eq!(read_cohort(buf.as_slice()).unwrap(), c);
    }
}
