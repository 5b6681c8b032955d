//! Audit report serialization.
//!
//! ```text
//! {"config": {...}, "summary": {"clean": n, "level1": n, "level2": n, "level3": n},
//!  "verdicts": [...], "cliff": {...}}
//! ```
//!
//! Verdicts are emitted sorted by `sample_id` and the JSON layout is fixed, so
//! identical inputs give byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cliff::CliffReport;
use crate::config::ThresholdConfig;
use crate::error::{Error, Result};
use crate::model::Verdict;
use crate::pipeline::{summarize_verdicts, AuditRun, Summary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ThresholdConfig,
    pub summary: Summary,
    pub verdicts: Vec<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cliff: Option<CliffReport>,
}

impl Report {
    pub fn new(config: &ThresholdConfig, verdicts: &[Verdict], cliff: Option<&CliffReport>) -> Self {
        let mut verdicts = verdicts.to_vec();
        verdicts.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        Report {
            config: config.clone(),
            summary: summarize_verdicts(&verdicts),
            verdicts,
            cliff: cliff.cloned(),
        }
    }

    pub fn from_run(run: &AuditRun<'_>) -> Self {
        Report::new(&run.config, &run.verdicts, run.cliff.as_ref())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn write_json(path: impl AsRef<Path>, json: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn write_report(
    config: &ThresholdConfig,
    verdicts: &[Verdict],
    cliff: Option<&CliffReport>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_json(path, &Report::new(config, verdicts, cliff).to_json())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report() {
        let r = Report::new(&ThresholdConfig::default(), &[], None);
        assert_eq!(r.summary, Summary::default());
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["verdicts"], serde_json::json!([]));
        assert!(json.get("cliff").is_none());
    }

    #[test]
    fn counts_and_ordering() {
        let flagged = Verdict { flagged_level: 1, severity: Some(1), l1_score: Some(-0.5), ..Verdict::clean("z") };
        let clean = Verdict::clean("a");
        let r = Report::new(&ThresholdConfig::default(), &[flagged, clean], None);
        assert_eq!(r.summary, Summary { clean: 1, level1: 1, level2: 0, level3: 0 });
        assert_eq!(r.verdicts[0].sample_id, "a");
    }

    #[test]
    fn deterministic_bytes_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = vec![Verdict { l2_sim: Some(0.123456789), l2_cluster: Some(-1), ..Verdict::clean("s") }];
        let cfg = ThresholdConfig::default();
        let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        write_report(&cfg, &v, None, &p1).unwrap();
        write_report(&cfg, &v, None, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let back = read_report(&p1).unwrap();
        assert_eq!(back.verdicts, v);
        assert!(write_report(&cfg, &v, None, dir.path().join("missing/dir/r.json")).is_err());
    }
}
