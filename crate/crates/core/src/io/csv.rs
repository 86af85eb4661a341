//! Plain-text tables: signals, event lists, knots, scores, phases and
//! manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::signal::{EventSeries, Knots, Signal};
use crate::stress::{Label, Phase, PhaseKind};
use crate::synth::TrialFiles;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines after the header, with 1-based line numbers.
fn body_lines<'a>(text: &'a str, expected_header: &[&str], path: &Path) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != expected_header {
        return Err(Error::Parse(format!(
            "{}: header {:?}, expected {:?}",
            path.display(),
            header.trim(),
            expected_header.join(",")
        )));
    }
    Ok(lines.map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect())).collect())
}

fn parse_f64(s: &str, line: usize, path: &Path) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse(format!("{}:{line}: not a number: {s:?}", path.display())))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("{}:{line}: non-finite value", path.display())));
    }
    Ok(v)
}

fn columns(text: &str, path: &Path) -> Result<Vec<String>> {
    let header = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    Ok(header.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>()).and_then(|c| {
        if c.is_empty() || c[0].is_empty() {
            Err(Error::Parse(format!("{}: empty file", path.display())))
        } else {
            Ok(c)
        }
    })
}

/// Either shape a signal CSV can take.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalTable {
    Uniform(Signal),
    Events(EventSeries),
}

/// Reads `t_seconds,value` (uniform) or `t_seconds` (event list).
pub fn read_signal_table(path: &Path) -> Result<SignalTable> {
    let text = read_text(path)?;
    let cols = columns(&text, path)?;
    if cols == ["t_seconds"] {
        let rows = body_lines(&text, &["t_seconds"], path)?;
        let times = rows.iter().map(|(i, r)| parse_f64(r[0], *i, path)).collect::<Result<Vec<_>>>()?;
        return Ok(SignalTable::Events(EventSeries::new(times)?));
    }
    let rows = body_lines(&text, &["t_seconds", "value"], path)?;
    let mut t = Vec::with_capacity(rows.len());
    let mut v = Vec::with_capacity(rows.len());
    for (i, r) in &rows {
        if r.len() != 2 {
            return Err(Error::Parse(format!("{}:{i}: expected 2 fields, got {}", path.display(), r.len())));
        }
        t.push(parse_f64(r[0], *i, path)?);
        v.push(parse_f64(r[1], *i, path)?);
    }
    if t.len() < 2 {
        return Err(Error::EmptySignal(t.len()));
    }
    let step = t[1] - t[0];
    if !(step > 0.0) {
        return Err(Error::Parse(format!("{}: timestamps must increase", path.display())));
    }
    for (k, w) in t.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if ((gap - step) / step).abs() > 1e-6 {
            return Err(Error::Parse(format!(
                "{}: non-uniform sampling at row {} (gap {gap} s, expected {step} s)",
                path.display(),
                k + 2
            )));
        }
    }
    Ok(SignalTable::Uniform(Signal::new(v, 1.0 / step, t[0])?))
}

/// Reads a uniform signal; event lists are rejected.
pub fn read_signal_csv(path: &Path) -> Result<Signal> {
    match read_signal_table(path)? {
        SignalTable::Uniform(s) => Ok(s),
        SignalTable::Events(_) => Err(Error::Parse(format!("{}: expected t_seconds,value", path.display()))),
    }
}

pub fn read_events_csv(path: &Path) -> Result<EventSeries> {
    match read_signal_table(path)? {
        SignalTable::Events(e) => Ok(e),
        SignalTable::Uniform(_) => Err(Error::Parse(format!("{}: expected a single t_seconds column", path.display()))),
    }
}

/// Shortest round-trip decimal representation.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn signal_csv_string(sig: &Signal) -> String {
    let mut s = String::with_capacity(24 * sig.len() + 16);
    s.push_str("t_seconds,value\n");
    for (i, v) in sig.samples().iter().enumerate() {
        let _ = writeln!(s, "{},{}", fmt(sig.time_at(i)), fmt(*v));
    }
    s
}

pub fn write_signal_csv(path: &Path, sig: &Signal) -> Result<()> {
    write_text(path, &signal_csv_string(sig))
}

pub fn write_events_csv(path: &Path, events: &EventSeries) -> Result<()> {
    let mut s = String::from("t_seconds\n");
    for t in events.times() {
        let _ = writeln!(s, "{}", fmt(*t));
    }
    write_text(path, &s)
}

/// Knots share the signal header but need not be uniform.
pub fn write_knots_csv(path: &Path, knots: &Knots) -> Result<()> {
    let mut s = String::from("t_seconds,value\n");
    for (t, v) in knots.pairs() {
        let _ = writeln!(s, "{},{}", fmt(t), fmt(v));
    }
    write_text(path, &s)
}

pub fn read_knots_csv(path: &Path) -> Result<Knots> {
    let text = read_text(path)?;
    let rows = body_lines(&text, &["t_seconds", "value"], path)?;
    let mut t = Vec::with_capacity(rows.len());
    let mut v = Vec::with_capacity(rows.len());
    for (i, r) in &rows {
        if r.len() != 2 {
            return Err(Error::Parse(format!("{}:{i}: expected 2 fields", path.display())));
        }
        t.push(parse_f64(r[0], *i, path)?);
        v.push(parse_f64(r[1], *i, path)?);
    }
    Knots::new(t, v)
}

/// `score,label` rows with label 0 or 1. A leading `trial_id` column is
/// accepted and ignored.
pub fn read_scores_csv(path: &Path) -> Result<Vec<(f64, bool)>> {
    let text = read_text(path)?;
    let with_id = columns(&text, path)?.first().is_some_and(|c| c == "trial_id");
    let header: &[&str] = if with_id { &["trial_id", "score", "label"] } else { &["score", "label"] };
    let skip = usize::from(with_id);
    let rows = body_lines(&text, header, path)?;
    rows.iter()
        .map(|(i, r)| {
            if r.len() != header.len() {
                return Err(Error::Parse(format!("{}:{i}: expected {} fields", path.display(), header.len())));
            }
            let label = match r[skip + 1] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Parse(format!("{}:{i}: label {other:?} is not 0 or 1", path.display()))),
            };
            Ok((parse_f64(r[skip], *i, path)?, label))
        })
        .collect()
}

pub fn write_scores_csv(path: &Path, rows: &[(f64, bool)]) -> Result<()> {
    let mut s = String::from("score,label\n");
    for (score, label) in rows {
        let _ = writeln!(s, "{},{}", fmt(*score), u8::from(*label));
    }
    write_text(path, &s)
}

/// `trial_id,score,label`; the label is left empty when unknown.
pub fn write_trial_scores_csv(path: &Path, rows: &[(String, f64, Option<bool>)]) -> Result<()> {
    let mut s = String::from("trial_id,score,label\n");
    for (id, score, label) in rows {
        let l = label.map(|l| u8::from(l).to_string()).unwrap_or_default();
        let _ = writeln!(s, "{id},{},{l}", fmt(*score));
    }
    write_text(path, &s)
}

/// `phase,start_s,end_s`.
pub fn write_phases_csv(path: &Path, phases: &[Phase]) -> Result<()> {
    let mut s = String::from("phase,start_s,end_s\n");
    for p in phases {
        let _ = writeln!(s, "{},{},{}", p.kind, fmt(p.start_s), fmt(p.end_s));
    }
    write_text(path, &s)
}

pub fn read_phases_csv(path: &Path) -> Result<Vec<Phase>> {
    let text = read_text(path)?;
    let rows = body_lines(&text, &["phase", "start_s", "end_s"], path)?;
    rows.iter()
        .map(|(i, r)| {
            if r.len() != 3 {
                return Err(Error::Parse(format!("{}:{i}: expected 3 fields", path.display())));
            }
            Ok(Phase {
                kind: r[0].parse::<PhaseKind>()?,
                start_s: parse_f64(r[1], *i, path)?,
                end_s: parse_f64(r[2], *i, path)?,
            })
        })
        .collect()
}

const DATASET_HEADER: [&str; 8] = [
    "trial_id",
    "isti_csv_path",
    "label",
    "breathing_csv_path",
    "tvf_path",
    "ecg_csv_path",
    "dzdt_csv_path",
    "phases_csv_path",
];

pub fn write_dataset_manifest(path: &Path, rows: &[TrialFiles]) -> Result<()> {
    let mut s = DATASET_HEADER.join(",");
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.trial_id,
            r.isti_csv.display(),
            r.label,
            r.breathing_csv.display(),
            r.tvf.display(),
            r.ecg_csv.display(),
            r.dzdt_csv.display(),
            r.phases_csv.display()
        );
    }
    write_text(path, &s)
}

/// One row of a trials manifest. Only the first three columns are
/// required; paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub trial_id: String,
    pub isti_csv: PathBuf,
    pub label: Option<Label>,
    pub breathing_csv: Option<PathBuf>,
    pub tvf: Option<PathBuf>,
    pub ecg_csv: Option<PathBuf>,
    pub dzdt_csv: Option<PathBuf>,
    pub phases_csv: Option<PathBuf>,
}

/// Reads a manifest whose header starts `trial_id,isti_csv_path,label`.
/// Further known columns are optional and may appear in any order.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = read_text(path)?;
    let cols = columns(&text, path)?;
    if cols.len() < 3 || cols[..3] != DATASET_HEADER[..3] {
        return Err(Error::Parse(format!(
            "{}: manifest must start with trial_id,isti_csv_path,label",
            path.display()
        )));
    }
    if let Some(c) = cols.iter().find(|c| !DATASET_HEADER.contains(&c.as_str())) {
        return Err(Error::Parse(format!("{}: unknown manifest column {c:?}", path.display())));
    }
    let header: Vec<&str> = cols.iter().map(String::as_str).collect();
    let base = path.parent().unwrap_or(Path::new(""));
    let rows = body_lines(&text, &header, path)?;
    rows.iter()
        .map(|(i, r)| {
            if r.len() != header.len() {
                return Err(Error::Parse(format!(
                    "{}:{i}: expected {} fields, got {}",
                    path.display(),
                    header.len(),
                    r.len()
                )));
            }
            let get = |name: &str| {
                header.iter().position(|c| *c == name).map(|k| r[k]).filter(|v| !v.is_empty()).map(|v| base.join(v))
            };
            let label = match r[2] {
                "" => None,
                v => Some(v.parse::<Label>()?),
            };
            if r[0].is_empty() || r[1].is_empty() {
                return Err(Error::Parse(format!("{}:{i}: trial_id and isti_csv_path are required", path.display())));
            }
            Ok(ManifestRow {
                trial_id: r[0].to_string(),
                isti_csv: base.join(r[1]),
                label,
                breathing_csv: get("breathing_csv_path"),
                tvf: get("tvf_path"),
                ecg_csv: get("ecg_csv_path"),
                dzdt_csv: get("dzdt_csv_path"),
                phases_csv: get("phases_csv_path"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let sig = Signal::new(vec![0.1, -2.5, 1e-17, 3.0], 250.0, 0.3).unwrap();
        write_signal_csv(&p, &sig).unwrap();
        let back = read_signal_csv(&p).unwrap();
        assert_eq!(back.samples(), sig.samples());
        assert!((back.sample_rate_hz() - 250.0).abs() < 1e-9);
        assert_eq!(back.t0_seconds(), 0.3);
    }

    #[test]
    fn irregular_timestamps_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "t_seconds,value\n0,1\n0.1,2\n0.25,3\n").unwrap();
        assert!(matches!(read_signal_csv(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn event_lists() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "t_seconds\n0.5\n1.5\n2.25\n").unwrap();
        assert_eq!(read_events_csv(&p).unwrap().times(), &[0.5, 1.5, 2.25]);
        assert!(read_signal_csv(&p).is_err());
    }

    #[test]
    fn bad_header_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "time,value\n0,1\n1,2\n").unwrap();
        assert!(matches!(read_signal_csv(&p), Err(Error::Parse(_))));
        assert!(read_signal_csv(&dir.path().join("nope.csv")).unwrap_err().is_io());
    }

    #[test]
    fn scores_and_phases() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.csv");
        write_scores_csv(&p, &[(0.9, true), (0.2, false)]).unwrap();
        assert_eq!(read_scores_csv(&p).unwrap(), vec![(0.9, true), (0.2, false)]);
        std::fs::write(&p, "score,label\n0.5,2\n").unwrap();
        assert!(read_scores_csv(&p).is_err());

        let q = dir.path().join("phases.csv");
        let phases = crate::stress::phase_layout(0.0, &[(PhaseKind::Base, 5.0), (PhaseKind::Prep, 2.5)]);
        write_phases_csv(&q, &phases).unwrap();
        assert_eq!(read_phases_csv(&q).unwrap(), phases);
    }

    #[test]
    fn minimal_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "trial_id,isti_csv_path,label,breathing_csv_path\na,a.csv,stress,\nb,b.csv,0,b_br.csv\n")
            .unwrap();
        let rows = read_manifest(&p).unwrap();
        assert_eq!(rows[0].label, Some(Label::Stress));
        assert_eq!(rows[0].breathing_csv, None);
        assert_eq!(rows[1].label, Some(Label::NoStress));
        assert_eq!(rows[1].breathing_csv, Some(dir.path().join("b_br.csv")));
        std::fs::write(&p, "trial_id,isti_csv_path,label,extra\na,a.csv,1,x\n").unwrap();
        assert!(read_manifest(&p).is_err());
    }
}
