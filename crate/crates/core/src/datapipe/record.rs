use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of parcellated regions per subject.
pub const N_ROI: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    HC,
    AD,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::HC => "HC",
            Group::AD => "AD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "M",
            Gender::F => "F",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    /// Days since study baseline.
    pub session_day: Option<i64>,
    pub group: Group,
    pub age: f64,
    pub gender: Gender,
    pub roi: Vec<f64>,
}

impl SubjectRecord {
    /// Unique label of this (subject, session window) after aggregation.
    pub fn key(&self) -> String {
        match self.session_day {
            Some(d) => format!("{}@{}", self.subject_id, d),
            None => self.subject_id.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.roi.len() != N_ROI {
            return Err(Error::data(format!("{}: {} ROI values, expected {N_ROI}", self.key(), self.roi.len())));
        }
        if !(self.age > 0.0 && self.age.is_finite()) {
            return Err(Error::data(format!("{}: age must be positive, got {}", self.key(), self.age)));
        }
        if let Some(v) = self.roi.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::data(format!("{}: ROI volume {v} is not a finite non-negative value", self.key())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Ingested,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<SubjectRecord>,
    pub provenance: Provenance,
}

impl Cohort {
    pub fn count(&self, group: Group) -> usize {
        self.records.iter().filter(|r| r.group == group).count()
    }

    pub fn of_group(&self, group: Group) -> impl Iterator<Item = &SubjectRecord> {
        self.records.iter().filter(move |r| r.group == group)
    }
}

/// Merges sessions of the same subject that fall into the same
/// `window_days`-long window, anchored at that subject's first session.
///
/// ROI volumes and age are averaged; the merged record keeps the earliest
/// session day of its window, so running this twice is a no-op. Subjects are
/// emitted in order of first appearance, windows in ascending order.
pub fn aggregate_sessions(cohort: &Cohort, window_days: u32) -> Result<Cohort> {
    if window_days == 0 {
        return Err(Error::config("aggregation window must be at least one day"));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut by_subject: BTreeMap<&str, Vec<&SubjectRecord>> = BTreeMap::new();
    for r in &cohort.records {
        if r.session_day.is_none() {
            return Err(Error::data(format!("{}: session_day is required for aggregation", r.subject_id)));
        }
        let entry = by_subject.entry(r.subject_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(r.subject_id.as_str());
        }
        entry.push(r);
    }

    let window = i64::from(window_days);
    let mut out = Vec::with_capacity(cohort.records.len());
    for id in order {
        let sessions = &by_subject[id];
        let anchor = sessions.iter().filter_map(|r| r.session_day).min().unwrap_or(0);
        let mut windows: BTreeMap<i64, Vec<&SubjectRecord>> = BTreeMap::new();
        for r in sessions {
            let day = r.session_day.unwrap_or(anchor);
            windows.entry((day - anchor).div_euclid(window)).or_default().push(r);
        }
        for members in windows.values() {
            out.push(merge(members)?);
        }
    }
    Ok(Cohort { records: out, provenance: cohort.provenance })
}

fn merge(members: &[&SubjectRecord]) -> Result<SubjectRecord> {
    let first = members[0];
    if members.len() == 1 {
        return Ok(first.clone());
    }
    let n = members.len() as f64;
    let mut roi = vec![0.0; first.roi.len()];
    let mut age = 0.0;
    let mut day = first.session_day;
    for m in members {
        if m.group != first.group || m.gender != first.gender {
            return Err(Error::data(format!(
                "{}: sessions in one window disagree on group or gender",
                first.subject_id
            )));
        }
        if m.roi.len() != roi.len() {
            return Err(Error::data(format!("{}: sessions have different ROI counts", first.subject_id)));
        }
        for (acc, v) in roi.iter_mut().zip(&m.roi) {
            *acc += v;
        }
        age += m.age;
        day = day.min(m.session_day);
    }
    roi.iter_mut().for_each(|v| *v /= n);
    Ok(SubjectRecord {
        subject_id: first.subject_id.clone(),
        session_day: day,
        group: first.group,
        age: age / n,
        gender: first.gender,
        roi,
    })
}
