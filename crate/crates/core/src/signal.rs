//! PPG records, dataset manifests and fixed-length windowing.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::label::ActivityLabel;

pub const DEFAULT_FS: f64 = 256.0;
pub const DEFAULT_WINDOW_S: f64 = 8.0;
pub const DEFAULT_STEP_S: f64 = 2.0;

/// One subject/activity PPG time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub id: String,
    pub samples: Vec<f64>,
    pub fs: f64,
    pub subject_id: String,
    pub activity: ActivityLabel,
}

impl SignalRecord {
    pub fn new(
        id: impl Into<String>,
        samples: Vec<f64>,
        fs: f64,
        subject_id: impl Into<String>,
        activity: ActivityLabel,
    ) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(HarError::config(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(HarError::data("record has no samples"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(HarError::data(format!("sample {i} is not finite")));
        }
        Ok(Self {
            id: id.into(),
            samples,
            fs,
            subject_id: subject_id.into(),
            activity,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// A fixed-duration segment of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub label: ActivityLabel,
    pub source_record: String,
    pub subject_id: String,
    pub start_offset_s: f64,
}

impl Window {
    /// `<record>_<offset_s>`, the stem used for window and image files.
    pub fn id(&self) -> String {
        format!("{}_{}", self.source_record, self.start_offset_s)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// Parses the record text format: one decimal sample per line, with an
/// optional first line starting with `#`. Blank lines are skipped.
pub fn parse_record(
    bytes: &[u8],
    fs: f64,
    subject_id: &str,
    activity: ActivityLabel,
) -> Result<SignalRecord> {
    let text = std::str::from_utf8(bytes).map_err(|e| HarError::Parse {
        line: 0,
        message: format!("record is not valid UTF-8: {e}"),
    })?;
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if i == 0 {
                continue;
            }
            return Err(HarError::Parse {
                line: line_no,
                message: "header line is only allowed first".into(),
            });
        }
        let value: f64 = line.parse().map_err(|_| HarError::Parse {
            line: line_no,
            message: format!("'{line}' is not a number"),
        })?;
        if !value.is_finite() {
            return Err(HarError::Parse {
                line: line_no,
                message: format!("'{line}' is not finite"),
            });
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(HarError::Parse {
            line: 0,
            message: "record contains no samples".into(),
        });
    }
    SignalRecord::new(subject_id, samples, fs, subject_id, activity)
}

/// Writes samples in the record text format. `{}` formatting of f64 is the
/// shortest exact representation, so a parse of the output is lossless.
pub fn format_record(samples: &[f64]) -> String {
    let mut out = String::with_capacity(samples.len() * 12);
    for v in samples {
        out.push_str(&format!("{v}\n"));
    }
    out
}

/// Converts a duration to a whole number of samples, rejecting durations that
/// do not land on a sample boundary.
pub fn samples_for(duration_s: f64, fs: f64) -> Result<usize> {
    if !(duration_s > 0.0) {
        return Err(HarError::config(format!("duration must be positive, got {duration_s}")));
    }
    let exact = duration_s * fs;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 * exact.max(1.0) {
        return Err(HarError::config(format!(
            "{duration_s} s at {fs} Hz is not a whole number of samples"
        )));
    }
    Ok(rounded as usize)
}

/// Number of windows that fit, given sample counts.
pub fn window_count(n_samples: usize, window_len: usize, step_len: usize) -> usize {
    if n_samples < window_len {
        0
    } else {
        (n_samples - window_len) / step_len + 1
    }
}

/// Rectangular windows at offsets 0, step, 2·step, ... A tail shorter than a
/// full window is dropped.
pub fn segment_windows(record: &SignalRecord, window_s: f64, step_s: f64) -> Result<Vec<Window>> {
    let window_len = samples_for(window_s, record.fs)?;
    let step_len = samples_for(step_s, record.fs)?;
    let count = window_count(record.len(), window_len, step_len);
    Ok((0..count)
        .map(|k| {
            let start = k * step_len;
            Window {
                samples: record.samples[start..start + window_len].to_vec(),
                fs: record.fs,
                label: record.activity,
                source_record: record.id.clone(),
                subject_id: record.subject_id.clone(),
                start_offset_s: k as f64 * step_s,
            }
        })
        .collect())
}

/// One line of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub activity: ActivityLabel,
    #[serde(default)]
    pub needs_lowpass: bool,
    #[serde(default = "default_fs")]
    pub fs: f64,
}

fn default_fs() -> f64 {
    DEFAULT_FS
}

impl ManifestEntry {
    /// Record id: the file stem of the record path.
    pub fn record_id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.to_string_lossy().into_owned())
    }
}

/// Dataset manifest, stored as TOML with one `[[record]]` table per entry:
///
/// ```toml
/// [[record]]
/// path = "records/walk_s01.csv"   # relative to the manifest
/// subject_id = "s01"
/// activity = "walk"               # walk | run | bike_low | bike_high
/// needs_lowpass = false
/// fs = 256.0                      # optional, defaults to 256
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(rename = "record", default)]
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut paths = HashSet::new();
        let mut ids = HashSet::new();
        for e in &self.entries {
            if !paths.insert(e.path.clone()) {
                return Err(HarError::config(format!(
                    "duplicate manifest path {}",
                    e.path.display()
                )));
            }
            if !ids.insert(e.record_id()) {
                return Err(HarError::config(format!(
                    "duplicate record id '{}'",
                    e.record_id()
                )));
            }
            if !(e.fs > 0.0 && e.fs.is_finite()) {
                return Err(HarError::config(format!(
                    "record {} has invalid fs {}",
                    e.path.display(),
                    e.fs
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let manifest: DatasetManifest =
            toml::from_str(text).map_err(|e| HarError::config(format!("manifest: {e}")))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarError::config(format!("manifest: {e}")))
    }

    /// Loads a manifest and resolves relative record paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for e in &mut manifest.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(manifest)
    }

    /// Reads and parses the record file for `entry`.
    pub fn read_record(entry: &ManifestEntry) -> Result<SignalRecord> {
        let bytes = std::fs::read(&entry.path)?;
        Ok(parse_record(&bytes, entry.fs, &entry.subject_id, entry.activity)?
            .with_id(entry.record_id()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(n: usize, fs: f64) -> SignalRecord {
        SignalRecord::new("r", (0..n).map(|i| i as f64).collect(), fs, "s", ActivityLabel::Walk)
            .unwrap()
    }

    #[test]
    fn parses_plain_lines() {
        let r = parse_record(b"1.0\n2.0\n3.0", 256.0, "s1", ActivityLabel::Run).unwrap();
        assert_eq!(r.samples, vec![1.0, 2.0, 3.0]);
        assert_eq!(r.fs, 256.0);
    }

    #[test]
    fn header_is_skipped() {
        let r = parse_record(b"# ppg\n4\n5\n", 128.0, "s1", ActivityLabel::Run).unwrap();
        assert_eq!(r.samples, vec![4.0, 5.0]);
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(
            parse_record(b"", 256.0, "s", ActivityLabel::Walk),
            Err(HarError::Parse { .. })
        ));
        assert!(matches!(
            parse_record(b"# only header\n", 256.0, "s", ActivityLabel::Walk),
            Err(HarError::Parse { .. })
        ));
    }

    #[test]
    fn bad_line_reports_line_number() {
        match parse_record(b"1\n2\nabc\n", 256.0, "s", ActivityLabel::Walk) {
            Err(HarError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_record(b"1\nNaN\n", 256.0, "s", ActivityLabel::Walk) {
            Err(HarError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_record(b"1\ninf\n", 256.0, "s", ActivityLabel::Walk).is_err());
    }

    #[test]
    fn ten_minutes_at_256hz() {
        let text = format_record(&vec![0.5; 600 * 256]);
        let r = parse_record(text.as_bytes(), 256.0, "s", ActivityLabel::Walk).unwrap();
        assert_eq!(r.len(), 153_600);
    }

    #[test]
    fn format_parse_is_lossless() {
        let xs = vec![0.1, -1e-300, 123456.789, std::f64::consts::PI];
        let r = parse_record(format_record(&xs).as_bytes(), 1.0, "s", ActivityLabel::Walk).unwrap();
        assert_eq!(r.samples, xs);
    }

    #[test]
    fn window_counts() {
        assert_eq!(segment_windows(&record(600 * 256, 256.0), 8.0, 2.0).unwrap().len(), 297);
        let one = segment_windows(&record(8 * 256, 256.0), 8.0, 2.0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].start_offset_s, 0.0);
        assert!(segment_windows(&record(7 * 256, 256.0), 8.0, 2.0).unwrap().is_empty());
    }

    #[test]
    fn non_integral_lengths_rejected() {
        assert!(matches!(
            segment_windows(&record(1000, 10.0), 0.25, 0.1),
            Err(HarError::Config(_))
        ));
        assert!(segment_windows(&record(1000, 10.0), 8.0, 0.0).is_err());
    }

    #[test]
    fn window_id_uses_offset() {
        let w = segment_windows(&record(12 * 4, 4.0), 8.0, 2.0).unwrap();
        let ids: Vec<String> = w.iter().map(Window::id).collect();
        assert_eq!(ids, vec!["r_0", "r_2", "r_4"]);
    }

    #[test]
    fn manifest_round_trip_and_duplicates() {
        let text = r#"
[[record]]
path = "a.csv"
subject_id = "s1"
activity = "walk"

[[record]]
path = "b.csv"
subject_id = "s1"
activity = "bike_low"
needs_lowpass = true
"#;
        let m = DatasetManifest::from_toml(text).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].fs, 256.0);
        assert!(m.entries[1].needs_lowpass);
        let again = DatasetManifest::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(again, m);

        let dup = text.replace("b.csv", "a.csv");
        assert!(DatasetManifest::from_toml(&dup).is_err());
        let bad = text.replace("bike_low", "swim");
        assert!(DatasetManifest::from_toml(&bad).is_err());
    }

    proptest! {
        #[test]
        fn count_matches_closed_form(duration in 0usize..=1200, fs in prop::sample::select(vec![4.0, 16.0, 32.0])) {
            let n = duration * fs as usize;
            if n == 0 {
                return Ok(());
            }
            let r = record(n, fs);
            let w = segment_windows(&r, 8.0, 2.0).unwrap();
            let expected = if duration >= 8 { (duration - 8) / 2 + 1 } else { 0 };
            prop_assert_eq!(w.len(), expected);
        }

        #[test]
        fn consecutive_windows_overlap(duration in 10usize..200, step in 1usize..8) {
            let fs = 8.0;
            let r = record(duration * 8, fs);
            let w = segment_windows(&r, 8.0, step as f64).unwrap();
            let shared = (8 - step) * 8;
            for pair in w.windows(2) {
                let tail = &pair[0].samples[pair[0].samples.len() - shared..];
                prop_assert_eq!(tail, &pair[1].samples[..shared]);
            }
            for win in &w {
                prop_assert_eq!(win.samples.len(), 64);
                prop_assert!(win.start_offset_s + 8.0 <= r.duration_s() + 1e-12);
            }
        }
    }
}
