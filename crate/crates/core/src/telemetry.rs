//! Canonical data model for power/usage time series and file ingestion.
//!
//! All series live on a fixed 1-second grid. Samples are per-second
//! snapshots: a grid second is covered by a series only if a sample exists
//! for exactly that second. Gaps are never filled by interpolation or by
//! carrying stale observations forward; instead the frame is trimmed to the
//! longest window covered by every series (earliest window on ties).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entity name reserved for node-level series.
pub const NODE_ENTITY: &str = "node";

/// Source family of a metric series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Producer {
    Hwcounter,
    Cgroups,
    Bpf,
    Cadvisor,
    Power,
}

impl Producer {
    pub const ALL: [Producer; 5] = [
        Producer::Hwcounter,
        Producer::Cgroups,
        Producer::Bpf,
        Producer::Cadvisor,
        Producer::Power,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Producer::Hwcounter => "hwcounter",
            Producer::Cgroups => "cgroups",
            Producer::Bpf => "bpf",
            Producer::Cadvisor => "cadvisor",
            Producer::Power => "power",
        }
    }
}

impl fmt::Display for Producer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Producer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hwcounter" => Ok(Producer::Hwcounter),
            "cgroups" => Ok(Producer::Cgroups),
            "bpf" => Ok(Producer::Bpf),
            "cadvisor" => Ok(Producer::Cadvisor),
            "power" => Ok(Producer::Power),
            other => Err(format!("unknown producer: {other:?}")),
        }
    }
}

/// One observation of one metric for one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub timestamp: i64,
    pub entity: String,
    pub producer: Producer,
    pub metric: String,
    pub value: f64,
}

impl MetricSample {
    fn validate(&self) -> std::result::Result<(), String> {
        if !self.value.is_finite() || self.value < 0.0 {
            return Err(format!("value must be a finite non-negative number, got {}", self.value));
        }
        if self.producer == Producer::Power && self.entity != NODE_ENTITY {
            return Err(format!(
                "power samples must belong to entity {NODE_ENTITY:?}, got {:?}",
                self.entity
            ));
        }
        if self.entity.is_empty() || self.metric.is_empty() {
            return Err("entity and metric must be non-empty".to_string());
        }
        Ok(())
    }
}

/// Identifies one series inside a frame.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub entity: String,
    pub producer: Producer,
    pub metric: String,
}

impl SeriesKey {
    pub fn new(entity: impl Into<String>, producer: Producer, metric: impl Into<String>) -> Self {
        Self { entity: entity.into(), producer, metric: metric.into() }
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.entity, self.producer, self.metric)
    }
}

/// Whether series values are cumulative counters or already per-second rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesUnit {
    Cumulative,
    Rates,
}

/// Aligned per-second time series for one node and its containers.
///
/// Immutable after construction; every mutation-like operation returns a new
/// frame, so frames can be shared read-only across pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryFrame {
    start: i64,
    interval: u64,
    unit: SeriesUnit,
    containers: BTreeSet<String>,
    background_ids: BTreeSet<String>,
    series: BTreeMap<SeriesKey, Vec<f64>>,
}

impl TelemetryFrame {
    /// Builds a frame from series that are already on a common grid.
    pub fn from_aligned(
        start: i64,
        interval: u64,
        unit: SeriesUnit,
        series: BTreeMap<SeriesKey, Vec<f64>>,
        background_ids: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        if interval == 0 {
            return Err(Error::Alignment("interval must be positive".into()));
        }
        let n = series.values().next().map(Vec::len).unwrap_or(0);
        if n < 2 {
            return Err(Error::Alignment(format!("need at least 2 aligned points, got {n}")));
        }
        let mut has_power = false;
        for (key, values) in &series {
            if values.len() != n {
                return Err(Error::Alignment(format!(
                    "series {key} has length {} but expected {n}",
                    values.len()
                )));
            }
            if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Alignment(format!("series {key} has invalid value {bad}")));
            }
            if key.producer == Producer::Power {
                if key.entity != NODE_ENTITY {
                    return Err(Error::Alignment(format!(
                        "power series {key} must belong to entity {NODE_ENTITY:?}"
                    )));
                }
                has_power = true;
            }
        }
        if !has_power {
            return Err(Error::MissingPower);
        }
        let containers: BTreeSet<String> = series
            .keys()
            .filter(|k| k.entity != NODE_ENTITY)
            .map(|k| k.entity.clone())
            .collect();
        let background_ids: BTreeSet<String> = background_ids.into_iter().collect();
        if let Some(unknown) = background_ids.iter().find(|id| !containers.contains(*id)) {
            return Err(Error::UnknownContainer(unknown.clone()));
        }
        Ok(Self { start, interval, unit, containers, background_ids, series })
    }

    /// Aligns raw samples onto the 1-second grid and trims to the longest
    /// window covered by every series.
    pub fn from_samples(samples: &[MetricSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Alignment("no samples".into()));
        }
        let mut observed: BTreeMap<SeriesKey, BTreeMap<i64, f64>> = BTreeMap::new();
        for s in samples {
            let key = SeriesKey::new(s.entity.clone(), s.producer, s.metric.clone());
            // Duplicate stamps: the last observation for a second wins.
            observed.entry(key).or_default().insert(s.timestamp, s.value);
        }
        if !observed.keys().any(|k| k.producer == Producer::Power) {
            return Err(Error::MissingPower);
        }

        let t_min = samples.iter().map(|s| s.timestamp).min().unwrap();
        let t_max = samples.iter().map(|s| s.timestamp).max().unwrap();
        const MAX_SPAN: i64 = 10_000_000;
        if t_max - t_min >= MAX_SPAN {
            return Err(Error::Alignment(format!(
                "timestamp span {} s exceeds the {MAX_SPAN} s limit",
                t_max - t_min
            )));
        }

        // Longest contiguous run of seconds covered by all series, earliest
        // run on ties.
        let mut best: Option<(i64, i64)> = None;
        let mut run_start: Option<i64> = None;
        for t in t_min..=t_max {
            let covered = observed.values().all(|obs| obs.contains_key(&t));
            if covered {
                run_start.get_or_insert(t);
            }
            let run_end = if covered && t == t_max { Some(t) } else if !covered { Some(t - 1) } else { None };
            if let (Some(start), Some(end)) = (run_start, run_end) {
                let len = end - start + 1;
                if best.is_none_or(|(bs, be)| len > be - bs + 1) {
                    best = Some((start, end));
                }
                if !covered {
                    run_start = None;
                }
            }
        }

        let (start, end) = best.ok_or_else(|| Error::Alignment("no second is covered by every series".into()))?;
        if end - start + 1 < 2 {
            return Err(Error::Alignment(format!(
                "longest fully covered window has {} point(s), need at least 2",
                end - start + 1
            )));
        }

        let series: BTreeMap<SeriesKey, Vec<f64>> = observed
            .into_iter()
            .map(|(key, obs)| {
                let values = (start..=end).map(|t| obs[&t]).collect();
                (key, values)
            })
            .collect();
        Self::from_aligned(start, 1, SeriesUnit::Cumulative, series, [])
    }

    /// Returns a copy with the given containers flagged as background.
    pub fn mark_background<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let mut background = BTreeSet::new();
        for id in ids {
            let id = id.as_ref();
            if !self.containers.contains(id) {
                return Err(Error::UnknownContainer(id.to_string()));
            }
            background.insert(id.to_string());
        }
        let mut out = self.clone();
        out.background_ids = background;
        Ok(out)
    }

    pub(crate) fn replace_series(
        &self,
        unit: SeriesUnit,
        series: BTreeMap<SeriesKey, Vec<f64>>,
    ) -> Result<Self> {
        Self::from_aligned(
            self.start,
            self.interval,
            unit,
            series,
            self.background_ids.iter().cloned(),
        )
    }

    /// Number of grid points.
    pub fn n(&self) -> usize {
        self.series.values().next().map(Vec::len).unwrap_or(0)
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn unit(&self) -> SeriesUnit {
        self.unit
    }

    pub fn containers(&self) -> &BTreeSet<String> {
        &self.containers
    }

    pub fn background_ids(&self) -> &BTreeSet<String> {
        &self.background_ids
    }

    /// Target (non-background) containers.
    pub fn target_ids(&self) -> BTreeSet<String> {
        self.containers.difference(&self.background_ids).cloned().collect()
    }

    pub fn series(&self) -> &BTreeMap<SeriesKey, Vec<f64>> {
        &self.series
    }

    pub fn get(&self, key: &SeriesKey) -> Option<&[f64]> {
        self.series.get(key).map(Vec::as_slice)
    }

    /// Producers present among container series.
    pub fn container_producers(&self) -> BTreeSet<Producer> {
        self.series
            .keys()
            .filter(|k| k.entity != NODE_ENTITY)
            .map(|k| k.producer)
            .collect()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        let (start, interval, n) = (self.start, self.interval as i64, self.n() as i64);
        (0..n).map(move |i| start + i * interval)
    }

    /// Frame summary for diagnostics (CLI `ingest` output).
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "start": self.start,
            "interval": self.interval,
            "points": self.n(),
            "unit": self.unit,
            "containers": self.containers,
            "background": self.background_ids,
            "producers": self.container_producers(),
            "series": self.series.len(),
        })
    }
}

/// Supported on-disk telemetry encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Jsonl,
}

impl FromStr for FileFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(FileFormat::Csv),
            "jsonl" => Ok(FileFormat::Jsonl),
            other => Err(format!("unknown format: {other:?} (expected csv or jsonl)")),
        }
    }
}

const CSV_HEADER: [&str; 5] = ["timestamp", "entity", "producer", "metric", "value"];

/// Reads samples from a file and aligns them into a frame.
pub fn ingest(path: &Path, format: FileFormat) -> Result<TelemetryFrame> {
    let samples = match format {
        FileFormat::Csv => read_csv(path)?,
        FileFormat::Jsonl => read_jsonl(path)?,
    };
    TelemetryFrame::from_samples(&samples)
}

fn read_csv(path: &Path) -> Result<Vec<MetricSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse { line: 0, msg: format!("cannot open {}: {e}", path.display()) })?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {:?}, got {:?}", CSV_HEADER.join(","), got.join(",")),
            });
        }
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |msg: String| Error::Parse { line, msg };
        if record.len() != 5 {
            return Err(parse(format!("expected 5 fields, got {}", record.len())));
        }
        let timestamp: i64 = record[0]
            .trim()
            .parse()
            .map_err(|e| parse(format!("bad timestamp {:?}: {e}", &record[0])))?;
        let producer = Producer::from_str(record[2].trim()).map_err(parse)?;
        let value: f64 = record[4]
            .trim()
            .parse()
            .map_err(|e| parse(format!("bad value {:?}: {e}", &record[4])))?;
        let sample = MetricSample {
            timestamp,
            entity: record[1].to_string(),
            producer,
            metric: record[3].to_string(),
            value,
        };
        sample.validate().map_err(parse)?;
        samples.push(sample);
    }
    Ok(samples)
}

fn read_jsonl(path: &Path) -> Result<Vec<MetricSample>> {
    let file = File::open(path)?;
    let mut samples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: MetricSample = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        sample
            .validate()
            .map_err(|msg| Error::Parse { line: line_no, msg })?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Formats a float so that parsing the text recovers the exact same bits.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v}")
}

/// Writes a frame as telemetry CSV (one row per series per second).
pub fn write_csv(frame: &TelemetryFrame, out: &mut dyn Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (i, t) in frame.timestamps().enumerate() {
        for (key, values) in frame.series() {
            writer
                .write_record([
                    t.to_string().as_str(),
                    &key.entity,
                    key.producer.as_str(),
                    &key.metric,
                    &fmt_float(values[i]),
                ])
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes a frame as JSON lines, one sample per line.
pub fn write_jsonl(frame: &TelemetryFrame, out: &mut dyn Write) -> Result<()> {
    for (i, t) in frame.timestamps().enumerate() {
        for (key, values) in frame.series() {
            let sample = MetricSample {
                timestamp: t,
                entity: key.entity.clone(),
                producer: key.producer,
                metric: key.metric.clone(),
                value: values[i],
            };
            serde_json::to_writer(&mut *out, &sample)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_csv_file(frame: &TelemetryFrame, path: &Path) -> Result<()> {
    let mut buf = BufWriter::new(File::create(path)?);
    write_csv(frame, &mut buf)?;
    buf.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: i64, entity: &str, producer: Producer, metric: &str, value: f64) -> MetricSample {
        MetricSample { timestamp: t, entity: entity.into(), producer, metric: metric.into(), value }
    }

    fn power(t: i64, value: f64) -> MetricSample {
        sample(t, NODE_ENTITY, Producer::Power, "energy_joules", value)
    }

    #[test]
    fn minimal_frame_aligns() {
        let mut samples = Vec::new();
        for t in 0..3 {
            samples.push(sample(t, "c1", Producer::Cgroups, "cpu_usage", 10.0 * t as f64));
            samples.push(power(t, 100.0 * t as f64));
        }
        let frame = TelemetryFrame::from_samples(&samples).unwrap();
        assert_eq!(frame.n(), 3);
        assert_eq!(frame.start(), 0);
        assert_eq!(frame.containers().len(), 1);
    }

    #[test]
    fn window_trims_to_intersection() {
        let mut samples = Vec::new();
        for t in 0..10 {
            samples.push(sample(t, "c1", Producer::Cgroups, "cpu_usage", t as f64));
        }
        for t in 2..10 {
            samples.push(power(t, t as f64));
        }
        let frame = TelemetryFrame::from_samples(&samples).unwrap();
        assert_eq!(frame.start(), 2);
        assert_eq!(frame.n(), 8);
    }

    #[test]
    fn missing_power_is_rejected() {
        let samples = vec![
            sample(0, "c1", Producer::Cgroups, "cpu_usage", 1.0),
            sample(1, "c1", Producer::Cgroups, "cpu_usage", 2.0),
        ];
        assert!(matches!(TelemetryFrame::from_samples(&samples), Err(Error::MissingPower)));
    }

    #[test]
    fn gaps_split_and_longest_window_wins() {
        let mut samples = Vec::new();
        for t in 0..10 {
            if t != 3 {
                samples.push(sample(t, "c1", Producer::Cgroups, "cpu_usage", t as f64));
            }
            samples.push(power(t, t as f64));
        }
        let frame = TelemetryFrame::from_samples(&samples).unwrap();
        // Windows are [0,2] and [4,9]; the longer one wins.
        assert_eq!(frame.start(), 4);
        assert_eq!(frame.n(), 6);
    }

    #[test]
    fn tie_between_windows_prefers_earliest() {
        let mut samples = Vec::new();
        for t in 0..5 {
            if t != 2 {
                samples.push(sample(t, "c1", Producer::Cgroups, "cpu_usage", t as f64));
                samples.push(power(t, t as f64));
            }
        }
        let frame = TelemetryFrame::from_samples(&samples).unwrap();
        assert_eq!(frame.start(), 0);
        assert_eq!(frame.n(), 2);
    }

    #[test]
    fn single_point_window_is_alignment_error() {
        let samples = vec![
            sample(0, "c1", Producer::Cgroups, "cpu_usage", 1.0),
            power(0, 5.0),
            power(1, 6.0),
            power(2, 7.0),
        ];
        assert!(matches!(TelemetryFrame::from_samples(&samples), Err(Error::Alignment(_))));
    }

    #[test]
    fn mark_background_known_and_unknown() {
        let mut samples = Vec::new();
        for t in 0..2 {
            samples.push(sample(t, "c1", Producer::Cgroups, "cpu_usage", 1.0));
            samples.push(sample(t, "c2", Producer::Cgroups, "cpu_usage", 1.0));
            samples.push(power(t, 1.0));
        }
        let frame = TelemetryFrame::from_samples(&samples).unwrap();

        let marked = frame.mark_background(&["c2"]).unwrap();
        assert_eq!(marked.background_ids().iter().collect::<Vec<_>>(), ["c2"]);
        assert_eq!(marked.target_ids().iter().collect::<Vec<_>>(), ["c1"]);

        let empty = frame.mark_background::<&str>(&[]).unwrap();
        assert!(empty.background_ids().is_empty());

        assert!(matches!(
            frame.mark_background(&["c9"]),
            Err(Error::UnknownContainer(id)) if id == "c9"
        ));
    }

    #[test]
    fn power_sample_must_be_node() {
        let s = sample(0, "c1", Producer::Power, "energy_joules", 1.0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "timestamp,entity,producer,metric,value\n0,node,power,energy_joules,1.0\nnope,c1,cgroups,cpu,2.0\n",
        )
        .unwrap();
        match ingest(&path, FileFormat::Csv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn negative_value_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("neg.jsonl");
        std::fs::write(
            &path,
            "{\"timestamp\":0,\"entity\":\"node\",\"producer\":\"power\",\"metric\":\"j\",\"value\":-1.0}\n",
        )
        .unwrap();
        assert!(matches!(ingest(&path, FileFormat::Jsonl), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn absurd_time_span_is_rejected_instead_of_scanned() {
        let samples = vec![power(0, 1.0), power(10_000_000_000, 2.0)];
        assert!(matches!(TelemetryFrame::from_samples(&samples), Err(Error::Alignment(_))));
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let mut samples = Vec::new();
        for t in 0..3 {
            samples.push(sample(t, "c1", Producer::Cgroups, "cpu_usage", 1.0 / 3.0 + t as f64));
            samples.push(power(t, 0.1 * t as f64));
        }
        let frame = TelemetryFrame::from_samples(&samples).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&frame, &mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.jsonl");
        std::fs::write(&path, &buf).unwrap();
        let back = ingest(&path, FileFormat::Jsonl).unwrap();
        assert_eq!(frame.series(), back.series());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut samples = Vec::new();
        for t in 0..4 {
            samples.push(sample(t, "c1", Producer::Cgroups, "cpu_usage", 0.1 + t as f64 * 1.7e-3));
            samples.push(power(t, 1234.567890123 * (t + 1) as f64));
        }
        let frame = TelemetryFrame::from_samples(&samples).unwrap();
        let mut buf = Vec::new();
        write_csv(&frame, &mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.csv");
        std::fs::write(&path, &buf).unwrap();
        let back = ingest(&path, FileFormat::Csv).unwrap();
        assert_eq!(frame.series(), back.series());
        assert_eq!(frame.start(), back.start());
    }
}
